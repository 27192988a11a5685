//! Datasets: synthetic generation, feature-file I/O, word-alignment
//! trimming, and stratified splitting.

mod align;
mod feat;
mod synth;

pub use align::{parse_alignment_file, trim_bounds, WordAlignment};
pub use feat::{load_features, save_features};
pub use synth::{synth_generate, BayesAccuracies, SynthConfig};

use serde::{Deserialize, Serialize};

use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::rng::rng_for;

/// One sample: three modality feature sequences (tokens x dim) and a label.
/// Modality order follows the notation: 0 = audio, 1 = video, 2 = text.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModalityBundle {
    pub x: [Tensor; 3],
    pub y: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// Stable per-sample ids, preserved across splits and subsets.
    pub ids: Vec<u64>,
    pub bundles: Vec<ModalityBundle>,
    pub n_classes: usize,
    pub dims: [usize; 3],
    pub tokens: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.bundles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bundles.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.bundles.iter().map(|b| b.y).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            ids: indices.iter().map(|&i| self.ids[i]).collect(),
            bundles: indices.iter().map(|&i| self.bundles[i].clone()).collect(),
            n_classes: self.n_classes,
            dims: self.dims,
            tokens: self.tokens,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ids.len() != self.bundles.len() {
            return Err(Error::data(format!(
                "{} ids for {} samples",
                self.ids.len(),
                self.bundles.len()
            )));
        }
        for (row, b) in self.bundles.iter().enumerate() {
            for (m, x) in b.x.iter().enumerate() {
                if x.cols() != self.dims[m] || x.rows() != self.tokens {
                    return Err(Error::data(format!(
                        "row {row}: modality {m} is {}x{}, header declares {}x{}",
                        x.rows(),
                        x.cols(),
                        self.tokens,
                        self.dims[m]
                    )));
                }
                if !x.all_finite() {
                    return Err(Error::data(format!(
                        "row {row}: modality {m} contains non-finite values"
                    )));
                }
            }
            if b.y >= self.n_classes {
                return Err(Error::data(format!(
                    "row {row}: label {} out of range for {} classes",
                    b.y, self.n_classes
                )));
            }
        }
        Ok(())
    }
}

/// Stratified train/val/test split (fractions of each class), seed-deterministic.
pub fn split_stratified(
    dataset: &Dataset,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    let (ft, fv, fe) = fractions;
    if ft <= 0.0 || fv < 0.0 || fe < 0.0 || (ft + fv + fe - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!(
            "split fractions must be non-negative and sum to 1, got {ft}/{fv}/{fe}"
        )));
    }
    if dataset.is_empty() {
        return Err(Error::usage("cannot split an empty dataset"));
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for class in 0..dataset.n_classes {
        let mut idx: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset.bundles[i].y == class)
            .collect();
        shuffle(&mut idx, seed, class as u64);
        let n = idx.len();
        let n_train = (ft * n as f64).round() as usize;
        let n_val = (fv * n as f64).round() as usize;
        let n_train = n_train.min(n);
        let n_val = n_val.min(n - n_train);
        train.extend_from_slice(&idx[..n_train]);
        val.extend_from_slice(&idx[n_train..n_train + n_val]);
        test.extend_from_slice(&idx[n_train + n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok((
        dataset.subset(&train),
        dataset.subset(&val),
        dataset.subset(&test),
    ))
}

/// Seeded Fisher-Yates shuffle.
pub fn shuffle(indices: &mut [usize], seed: u64, tag: u64) {
    use rand::Rng;
    let mut rng = rng_for(seed, "shuffle", tag);
    for i in (1..indices.len()).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_dataset(n: usize) -> Dataset {
        let bundles: Vec<ModalityBundle> = (0..n)
            .map(|i| ModalityBundle {
                x: [
                    Tensor::row(vec![i as f64]),
                    Tensor::row(vec![0.0]),
                    Tensor::row(vec![1.0]),
                ],
                y: i % 2,
            })
            .collect();
        Dataset {
            ids: (0..n as u64).collect(),
            bundles,
            n_classes: 2,
            dims: [1, 1, 1],
            tokens: 1,
        }
    }

    #[test]
    fn split_is_stratified_and_deterministic() {
        let ds = toy_dataset(100);
        let (tr, va, te) = split_stratified(&ds, (0.7, 0.1, 0.2), 5).unwrap();
        assert_eq!(tr.len(), 70);
        assert_eq!(va.len(), 10);
        assert_eq!(te.len(), 20);
        // Each class split proportionally.
        assert_eq!(tr.labels().iter().filter(|&&y| y == 0).count(), 35);
        let (tr2, _, _) = split_stratified(&ds, (0.7, 0.1, 0.2), 5).unwrap();
        assert_eq!(tr.ids, tr2.ids);
        // Ids partition the dataset.
        let mut all: Vec<u64> = tr
            .ids
            .iter()
            .chain(&va.ids)
            .chain(&te.ids)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, ds.ids);
    }

    #[test]
    fn bad_fractions_rejected() {
        let ds = toy_dataset(10);
        assert!(split_stratified(&ds, (0.5, 0.1, 0.2), 1).is_err());
    }
}
