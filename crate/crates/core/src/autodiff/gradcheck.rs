//! Central finite-difference verification of analytic gradients.

use super::{Graph, NodeId};
use crate::error::Result;

/// Coordinates probed per parameter tensor.
const SAMPLES_PER_PARAM: usize = 24;

/// Maximum over sampled coordinates of
/// `|analytic - central difference| / max(1, |analytic|)`.
///
/// Perturbs each sampled leaf coordinate by `±epsilon` and replays the
/// graph; leaf values are restored before returning. A large error is
/// reported in the return value, not as an `Err`.
pub fn finite_difference_check(graph: &mut Graph, loss: NodeId, params: &[NodeId], epsilon: f32) -> Result<f32> {
    assert!(epsilon > 0.0, "epsilon must be positive");
    let analytic = graph.gradients(loss, params)?;
    let mut worst = 0.0f32;
    for &p in params {
        let original = graph.value(p).clone();
        let grad = analytic.get(p).expect("one entry per requested parameter");
        let n = original.numel();
        let coords: Vec<usize> = if n <= SAMPLES_PER_PARAM {
            (0..n).collect()
        } else {
            // evenly spread with an odd offset so strided layouts are mixed
            (0..SAMPLES_PER_PARAM).map(|i| (i * n / SAMPLES_PER_PARAM + i * 7) % n).collect()
        };
        for i in coords {
            let mut plus = original.clone();
            plus.data_mut()[i] += epsilon;
            graph.set_leaf_value(p, plus);
            graph.replay()?;
            let up = graph.value(loss).item() as f64;

            let mut minus = original.clone();
            minus.data_mut()[i] -= epsilon;
            graph.set_leaf_value(p, minus);
            graph.replay()?;
            let down = graph.value(loss).item() as f64;

            let numeric = ((up - down) / (2.0 * epsilon as f64)) as f32;
            let a = grad.data()[i];
            worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
        }
        graph.set_leaf_value(p, original);
    }
    graph.replay()?;
    Ok(worst)
}
