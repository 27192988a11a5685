//! Per-sample correctness decomposition between two prediction runs, and the
//! fusion gain/loss report built from it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fractions of the test set by correctness overlap between runs A and B.
/// `only_a` is the loss region (correct under A, broken by B's change),
/// `only_b` the gain region (fixed only by B).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VennRegions {
    #[serde(rename = "only_A")]
    pub only_a: f64,
    #[serde(rename = "only_B")]
    pub only_b: f64,
    pub both: f64,
    pub neither: f64,
}

impl VennRegions {
    pub fn sum(&self) -> f64 {
        self.only_a + self.only_b + self.both + self.neither
    }

    pub fn accuracy_a(&self) -> f64 {
        self.only_a + self.both
    }

    pub fn accuracy_b(&self) -> f64 {
        self.only_b + self.both
    }
}

/// Exact counting of correctness overlap, normalized by the test-set size.
pub fn venn_regions(preds_a: &[usize], preds_b: &[usize], truth: &[usize]) -> Result<VennRegions> {
    if preds_a.len() != truth.len() || preds_b.len() != truth.len() {
        return Err(Error::usage(format!(
            "venn_regions needs equal lengths, got {} / {} / {}",
            preds_a.len(),
            preds_b.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::usage("venn_regions needs at least one sample"));
    }
    let mut counts = [0usize; 4]; // both, only_a, only_b, neither
    for i in 0..truth.len() {
        let a = preds_a[i] == truth[i];
        let b = preds_b[i] == truth[i];
        let idx = match (a, b) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        };
        counts[idx] += 1;
    }
    let n = truth.len() as f64;
    Ok(VennRegions {
        both: counts[0] as f64 / n,
        only_a: counts[1] as f64 / n,
        only_b: counts[2] as f64 / n,
        neither: counts[3] as f64 / n,
    })
}

/// One (single run, fused run) comparison in the fusion gain report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FusionPairReport {
    pub pair: PairLabels,
    pub regions: VennRegions,
    /// only_B - only_A, identically the accuracy difference.
    pub net_gain: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairLabels {
    #[serde(rename = "A")]
    pub a: String,
    #[serde(rename = "B")]
    pub b: String,
}

/// A named prediction run over an identified sample set.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PredictionRun {
    pub label: String,
    pub ids: Vec<u64>,
    pub preds: Vec<usize>,
}

/// Builds one Venn comparison per (single, fused) pair. All runs must cover
/// the identical sample id set in the same order.
pub fn fusion_gain_report(
    single_runs: &[PredictionRun],
    fused_run: &PredictionRun,
    truth: &[usize],
) -> Result<Vec<FusionPairReport>> {
    if fused_run.ids.len() != truth.len() {
        return Err(Error::usage(format!(
            "fused run has {} samples, truth has {}",
            fused_run.ids.len(),
            truth.len()
        )));
    }
    let mut reports = Vec::with_capacity(single_runs.len());
    for run in single_runs {
        if run.ids != fused_run.ids {
            return Err(Error::usage(format!(
                "run '{}' and fused run '{}' cover different sample id sets",
                run.label, fused_run.label
            )));
        }
        let regions = venn_regions(&run.preds, &fused_run.preds, truth)?;
        reports.push(FusionPairReport {
            pair: PairLabels {
                a: run.label.clone(),
                b: fused_run.label.clone(),
            },
            net_gain: regions.only_b - regions.only_a,
            regions,
        });
    }
    Ok(reports)
}

impl FusionPairReport {
    pub fn csv_header() -> &'static str {
        "pair_a,pair_b,only_a,only_b,both,neither,net_gain"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.pair.a,
            self.pair.b,
            self.regions.only_a,
            self.regions.only_b,
            self.regions.both,
            self.regions.neither,
            self.net_gain
        )
    }

    pub fn figure_name(&self) -> String {
        format!("venn_{}_{}.svg", self.pair.a, self.pair.b)
    }

    /// Static two-circle diagram with the region proportions.
    pub fn to_svg(&self) -> String {
        let r = &self.regions;
        format!(
            r##"<svg xmlns="http://www.w3.org/2000/svg" width="420" height="280" viewBox="0 0 420 280">
  <rect width="420" height="280" fill="white"/>
  <circle cx="165" cy="130" r="85" fill="#4878a8" fill-opacity="0.45" stroke="#1f4060"/>
  <circle cx="255" cy="130" r="85" fill="#a85448" fill-opacity="0.45" stroke="#5e2018"/>
  <text x="120" y="135" font-family="sans-serif" font-size="16" text-anchor="middle">{only_a:.3}</text>
  <text x="210" y="135" font-family="sans-serif" font-size="16" text-anchor="middle">{both:.3}</text>
  <text x="300" y="135" font-family="sans-serif" font-size="16" text-anchor="middle">{only_b:.3}</text>
  <text x="210" y="250" font-family="sans-serif" font-size="14" text-anchor="middle">neither: {neither:.3}   net gain: {gain:+.3}</text>
  <text x="120" y="30" font-family="sans-serif" font-size="14" text-anchor="middle">{a}</text>
  <text x="300" y="30" font-family="sans-serif" font-size="14" text-anchor="middle">{b}</text>
</svg>
"##,
            only_a = r.only_a,
            both = r.both,
            only_b = r.only_b,
            neither = r.neither,
            gain = self.net_gain,
            a = self.pair.a,
            b = self.pair.b,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_predictions_put_everything_in_both() {
        let truth = vec![0, 1, 1, 0];
        let v = venn_regions(&truth, &truth, &truth).unwrap();
        assert_eq!(v.both, 1.0);
        assert_eq!(v.only_a + v.only_b + v.neither, 0.0);
    }

    #[test]
    fn complement_predictions_fill_only_a() {
        let truth = vec![0, 1, 0, 1];
        let complement: Vec<usize> = truth.iter().map(|&y| 1 - y).collect();
        let v = venn_regions(&truth, &complement, &truth).unwrap();
        assert_eq!(v.only_a, 1.0);
        assert_eq!(v.both, 0.0);
    }

    #[test]
    fn four_sample_enumeration() {
        // Brute-force enumerable: truth 0101, A 0111, B 0001.
        let truth = vec![0, 1, 0, 1];
        let a = vec![0, 1, 1, 1];
        let b = vec![0, 0, 0, 1];
        let v = venn_regions(&a, &b, &truth).unwrap();
        assert_eq!(v.both, 0.5);
        assert_eq!(v.only_a, 0.25);
        assert_eq!(v.only_b, 0.25);
        assert_eq!(v.neither, 0.0);
    }

    #[test]
    fn length_mismatch_is_usage_error() {
        assert!(matches!(
            venn_regions(&[0], &[0, 1], &[0]).unwrap_err(),
            Error::Usage(_)
        ));
    }

    #[test]
    fn report_net_gain_zero_for_identical_runs() {
        let run = PredictionRun {
            label: "t".into(),
            ids: vec![0, 1, 2],
            preds: vec![0, 1, 0],
        };
        let fused = PredictionRun {
            label: "t+a".into(),
            ids: vec![0, 1, 2],
            preds: vec![0, 1, 0],
        };
        let reports = fusion_gain_report(&[run], &fused, &[0, 1, 1]).unwrap();
        assert_eq!(reports[0].net_gain, 0.0);
    }

    #[test]
    fn mismatched_id_sets_are_rejected() {
        let run = PredictionRun {
            label: "t".into(),
            ids: vec![0, 1],
            preds: vec![0, 1],
        };
        let fused = PredictionRun {
            label: "f".into(),
            ids: vec![0, 2],
            preds: vec![0, 1],
        };
        assert!(fusion_gain_report(&[run], &fused, &[0, 1]).is_err());
    }

    #[test]
    fn report_round_trips_through_json() {
        let report = FusionPairReport {
            pair: PairLabels {
                a: "t".into(),
                b: "tva".into(),
            },
            regions: VennRegions {
                only_a: 0.125,
                only_b: 0.25,
                both: 0.5,
                neither: 0.125,
            },
            net_gain: 0.125,
        };
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"only_A\""), "schema field names: {json}");
        let back: FusionPairReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.regions, report.regions);
        assert_eq!(back.net_gain, report.net_gain);
    }

    proptest! {
        /// only_B - only_A is exactly accuracy(B) - accuracy(A).
        #[test]
        fn net_gain_equals_accuracy_difference(
            seed in 0u64..5000,
            n in 1usize..50,
        ) {
            use rand::Rng;
            let mut rng = crate::rng::rng_from(seed);
            let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            let a: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            let b: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            let v = venn_regions(&a, &b, &truth).unwrap();
            let acc = |p: &[usize]| {
                p.iter().zip(&truth).filter(|(x, y)| x == y).count() as f64 / n as f64
            };
            prop_assert!(((v.only_b - v.only_a) - (acc(&b) - acc(&a))).abs() < 1e-12);
            prop_assert!((v.sum() - 1.0).abs() < 1e-12);
        }

        /// Invariant under any common permutation of the three vectors.
        #[test]
        fn permutation_invariance(seed in 0u64..2000) {
            use rand::Rng;
            let mut rng = crate::rng::rng_from(seed);
            let n = 24;
            let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            let a: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            let b: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            let mut perm: Vec<usize> = (0..n).collect();
            crate::data::shuffle(&mut perm, seed, 1);
            let apply = |v: &[usize]| -> Vec<usize> { perm.iter().map(|&i| v[i]).collect() };
            let v1 = venn_regions(&a, &b, &truth).unwrap();
            let v2 = venn_regions(&apply(&a), &apply(&b), &apply(&truth)).unwrap();
            prop_assert_eq!(v1, v2);
        }
    }
}
