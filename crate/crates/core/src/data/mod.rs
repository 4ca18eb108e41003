//! Datasets, synthesis, ingestion, sampling and augmentation.

pub mod amb;
pub mod augment;
pub mod io;
pub mod seed;
pub mod subsample;
pub mod synth;

use std::collections::HashSet;

pub use amb::{build_amb, noise_for, sample_noise, AugmentedMiniBatch, NoiseMode};
pub use augment::{augment, augment_batch, AugmentConfig};
pub use io::{export, ingest, IngestOptions};
pub use subsample::subsample;
pub use synth::{synth_generate, SynthConfig};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// An H×W×3 image with values in [-1,1].
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub pixels: Tensor,
    pub label: usize,
    pub group: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn dir(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub classes: Vec<String>,
    pub res: usize,
    pub train: Vec<LabeledImage>,
    pub test: Vec<LabeledImage>,
}

impl Dataset {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn split(&self, s: Split) -> &[LabeledImage] {
        match s {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    /// Indices into `split` of the samples labelled `class`.
    pub fn class_indices(&self, s: Split, class: usize) -> Vec<usize> {
        self.split(s)
            .iter()
            .enumerate()
            .filter(|(_, im)| im.label == class)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn class_counts(&self, s: Split) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for im in self.split(s) {
            counts[im.label] += 1;
        }
        counts
    }

    /// Checks labels, image shapes and train/test group disjointness.
    pub fn validate(&self) -> Result<()> {
        let k = self.num_classes();
        for (s, images) in [(Split::Train, &self.train), (Split::Test, &self.test)] {
            for (i, im) in images.iter().enumerate() {
                if im.label >= k {
                    return Err(Error::Dataset(format!(
                        "{} sample {i} has label {} but only {k} classes exist",
                        s.dir(),
                        im.label
                    )));
                }
                if im.pixels.shape() != [self.res, self.res, 3] {
                    return Err(Error::Dataset(format!(
                        "{} sample {i} has shape {:?}, expected {}×{}×3",
                        s.dir(),
                        im.pixels.shape(),
                        self.res,
                        self.res
                    )));
                }
            }
        }
        let train_groups: HashSet<&str> = self.train.iter().filter_map(|im| im.group.as_deref()).collect();
        if let Some(g) = self.test.iter().filter_map(|im| im.group.as_deref()).find(|g| train_groups.contains(g)) {
            return Err(Error::Dataset(format!("group `{g}` appears in both train and test splits")));
        }
        Ok(())
    }
}

/// Stacks H×W×3 images into an N×H×W×3 batch.
pub fn stack<'a>(images: impl IntoIterator<Item = &'a Tensor>) -> Result<Tensor> {
    let parts: Vec<Tensor> = images
        .into_iter()
        .map(|t| {
            let mut shape = vec![1];
            shape.extend_from_slice(t.shape());
            t.clone().reshape(&shape)
        })
        .collect::<Result<_>>()?;
    if parts.is_empty() {
        return Err(Error::invalid("cannot stack an empty image list"));
    }
    let refs: Vec<&Tensor> = parts.iter().collect();
    Tensor::concat_batch(&refs)
}

/// Splits an N×H×W×C batch back into H×W×C images.
pub fn unstack(batch: &Tensor) -> Result<Vec<Tensor>> {
    let n = batch.shape()[0];
    let inner = batch.shape()[1..].to_vec();
    (0..n).map(|i| batch.slice_batch(i, 1)?.reshape(&inner)).collect()
}
