//! Reduction of the training split to a fraction of its size.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;

use super::seed::{stream, tag};
use super::Dataset;
use crate::error::{Error, Result};

/// Keeps about `fraction` of the training split; test is untouched.
///
/// When every training sample has a group key, whole groups are kept:
/// `round(fraction · groups)` of them. Otherwise each class keeps
/// `round(fraction · count)` samples. Retained samples keep their order.
pub fn subsample(ds: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("fraction must lie in (0, 1], got {fraction}")));
    }
    let mut rng = stream(seed, &[tag("subsample")]);
    let grouped = !ds.train.is_empty() && ds.train.iter().all(|im| im.group.is_some());
    let keep: Vec<bool> = if grouped {
        let groups: BTreeSet<&str> = ds.train.iter().filter_map(|im| im.group.as_deref()).collect();
        let mut groups: Vec<&str> = groups.into_iter().collect();
        let n = (fraction * groups.len() as f64).round() as usize;
        groups.shuffle(&mut rng);
        let kept: BTreeSet<&str> = groups.into_iter().take(n).collect();
        ds.train.iter().map(|im| kept.contains(im.group.as_deref().unwrap_or_default())).collect()
    } else {
        let mut keep = vec![false; ds.train.len()];
        for class in 0..ds.num_classes() {
            let mut idx = ds.class_indices(super::Split::Train, class);
            let n = (fraction * idx.len() as f64).round() as usize;
            idx.shuffle(&mut rng);
            for &i in idx.iter().take(n) {
                keep[i] = true;
            }
        }
        keep
    };
    let train: Vec<_> = ds.train.iter().zip(&keep).filter(|(_, &k)| k).map(|(im, _)| im.clone()).collect();
    let out = Dataset {
        classes: ds.classes.clone(),
        res: ds.res,
        train,
        test: ds.test.clone(),
    };
    for (class, &n) in out.class_counts(super::Split::Train).iter().enumerate() {
        if n == 0 && ds.class_counts(super::Split::Train)[class] > 0 {
            return Err(Error::Dataset(format!(
                "subsampling to {fraction} leaves class `{}` empty",
                ds.classes[class]
            )));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{LabeledImage, Split};
    use crate::tensor::Tensor;

    fn dataset(per_class: usize, groups: Option<usize>) -> Dataset {
        let mut train = Vec::new();
        for c in 0..2 {
            for i in 0..per_class {
                train.push(LabeledImage {
                    pixels: Tensor::full(&[2, 2, 3], (c * 1000 + i) as f32 / 4096.0),
                    label: c,
                    group: groups.map(|g| format!("s{}", i % g)),
                });
            }
        }
        Dataset {
            classes: vec!["a".into(), "b".into()],
            res: 2,
            test: train[..2].to_vec(),
            train,
        }
    }

    #[test]
    fn per_class_fraction() {
        let d = dataset(100, None);
        let s = subsample(&d, 0.4, 1).unwrap();
        assert_eq!(s.class_counts(Split::Train), vec![40, 40]);
        assert_eq!(s.test, d.test);
        assert_eq!(subsample(&d, 1.0, 9).unwrap(), d);
    }

    #[test]
    fn whole_groups_are_kept() {
        let d = dataset(40, Some(20));
        let s = subsample(&d, 0.4, 3).unwrap();
        let groups: BTreeSet<_> = s.train.iter().map(|im| im.group.clone().unwrap()).collect();
        assert_eq!(groups.len(), 8);
        assert_eq!(s.train.len(), 8 * 2 * 2);
    }

    #[test]
    fn deterministic_and_nested_size() {
        let d = dataset(100, None);
        assert_eq!(subsample(&d, 0.6, 4).unwrap(), subsample(&d, 0.6, 4).unwrap());
        let nested = subsample(&subsample(&d, 0.8, 4).unwrap(), 0.5, 5).unwrap();
        assert_eq!(nested.train.len(), subsample(&d, 0.4, 6).unwrap().train.len());
    }

    #[test]
    fn invalid_and_empty() {
        let d = dataset(2, None);
        assert!(subsample(&d, 0.0, 0).is_err());
        assert!(subsample(&d, 1.5, 0).is_err());
        assert!(matches!(subsample(&d, 0.2, 0), Err(Error::Dataset(_))));
    }
}
