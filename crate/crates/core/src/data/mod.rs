//! MNIST loading and deterministic mini-batching.

mod fetch;
mod idx;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use fetch::{
    default_cache_dir, fetch_file, sha256_hex, PinnedFile, Source, CACHE_ENV, DEFAULT_MIRRORS, TEST_IMAGES, TEST_LABELS,
    TRAIN_IMAGES, TRAIN_LABELS,
};
pub use idx::{parse_idx, parse_images, parse_labels, serialize_idx, IdxArray, MAGIC_IMAGES, MAGIC_LABELS};

/// Images as rows in `[0, 1]` with their digit labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    images: Tensor<T>,
    labels: Vec<u8>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn files(self) -> (PinnedFile<'static>, PinnedFile<'static>) {
        match self {
            Split::Train => (TRAIN_IMAGES, TRAIN_LABELS),
            Split::Test => (TEST_IMAGES, TEST_LABELS),
        }
    }
}

impl<T: Scalar> Dataset<T> {
    pub fn new(images: Tensor<T>, labels: Vec<u8>) -> Result<Self> {
        if images.shape().len() != 2 || images.rows() != labels.len() {
            return Err(Error::Invalid(format!(
                "{} label(s) for images of shape {:?}",
                labels.len(),
                images.shape()
            )));
        }
        if let Some(i) = images.data().iter().position(|v| !(*v >= T::zero() && *v <= T::one())) {
            return Err(Error::Invalid(format!("pixel {i} outside [0, 1]")));
        }
        if let Some(i) = labels.iter().position(|&l| l > 9) {
            return Err(Error::Invalid(format!("label {i} is {} (expected 0..=9)", labels[i])));
        }
        Ok(Dataset { images, labels })
    }

    /// From the raw bytes of an images file and a labels file.
    pub fn from_idx(images: &[u8], labels: &[u8]) -> Result<Self> {
        Self::new(parse_images(images)?, parse_labels(labels)?)
    }

    pub fn images(&self) -> &Tensor<T> {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_dim(&self) -> usize {
        self.images.cols()
    }

    /// The first `limit` examples (all of them if `limit` is larger).
    pub fn truncated(&self, limit: usize) -> Self {
        let idx: Vec<usize> = (0..limit.min(self.len())).collect();
        self.subset(&idx)
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Dataset {
            images: self.images.gather_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Loads a split through the verified cache.
pub fn fetch_dataset<T: Scalar>(cache_dir: &Path, source: &Source, split: Split) -> Result<Dataset<T>> {
    let (img, lab) = split.files();
    let images = fetch_file(cache_dir, &img, source)?;
    let labels = fetch_file(cache_dir, &lab, source)?;
    Dataset::from_idx(&images, &labels)
}

/// Loads a split from uncompressed IDX files in `dir` without hash checks.
pub fn load_split_from_dir<T: Scalar>(dir: &Path, split: Split) -> Result<Dataset<T>> {
    let (img, lab) = split.files();
    let read = |name: &str| {
        std::fs::read(dir.join(name)).map_err(|e| Error::DataUnavailable(format!("{}: {e}", dir.join(name).display())))
    };
    Dataset::from_idx(&read(img.name)?, &read(lab.name)?)
}

/// Row indices of the mini-batches of one epoch.
///
/// The `m` indices are shuffled by a generator keyed on `seed` with stream
/// `epoch`; the trailing partial batch is dropped.
pub fn batches(m: usize, batch_size: usize, seed: u64, epoch: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size < 2 {
        return Err(Error::Invalid(format!("batch size must be >= 2, got {batch_size}")));
    }
    if batch_size > m {
        return Err(Error::Invalid(format!("batch size {batch_size} exceeds dataset size {m}")));
    }
    let mut order: Vec<usize> = (0..m).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    order.shuffle(&mut rng);
    Ok(order.chunks_exact(batch_size).map(<[usize]>::to_vec).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_counts_and_coverage() {
        let b = batches(10, 4, 1, 0).unwrap();
        assert_eq!(b.len(), 2);
        let mut all: Vec<usize> = b.concat();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 8);
        assert!(all.iter().all(|&i| i < 10));
    }

    #[test]
    fn batch_order_is_keyed() {
        assert_eq!(batches(50, 5, 3, 2).unwrap(), batches(50, 5, 3, 2).unwrap());
        assert_ne!(batches(50, 5, 3, 2).unwrap(), batches(50, 5, 3, 3).unwrap());
        assert_ne!(batches(50, 5, 3, 2).unwrap(), batches(50, 5, 4, 2).unwrap());
    }

    #[test]
    fn batch_errors() {
        assert!(batches(3, 4, 0, 0).is_err());
        assert!(batches(3, 1, 0, 0).is_err());
    }

    #[test]
    fn dataset_checks() {
        let imgs = Tensor::<f64>::from_rows(&[[0.0, 1.0], [0.5, 0.5]]).unwrap();
        assert!(Dataset::new(imgs.clone(), vec![1]).is_err());
        assert!(Dataset::new(imgs.clone(), vec![1, 10]).is_err());
        let d = Dataset::new(imgs, vec![1, 2]).unwrap();
        assert_eq!(d.truncated(1).labels(), &[1]);
        assert!(Dataset::new(Tensor::<f64>::from_rows(&[[1.5]]).unwrap(), vec![0]).is_err());
    }
}
