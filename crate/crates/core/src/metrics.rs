//! Classification metrics: confusion matrix, overall/average accuracy,
//! Cohen's kappa, and McNemar's paired significance test.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

/// Significance threshold for McNemar's statistic (95% confidence).
pub const MCNEMAR_SIGNIFICANCE: f64 = 1.96;

/// Counts indexed (true class, predicted class).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn from_counts(rows: &[&[usize]]) -> Self {
        let n = rows.len();
        let mut counts = Vec::with_capacity(n * n);
        for row in rows {
            assert_eq!(row.len(), n, "confusion matrix must be square");
            counts.extend_from_slice(row);
        }
        Self {
            num_classes: n,
            counts,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> usize {
        self.counts[truth * self.num_classes + predicted]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn row_total(&self, truth: usize) -> usize {
        (0..self.num_classes).map(|p| self.get(truth, p)).sum()
    }

    pub fn col_total(&self, predicted: usize) -> usize {
        (0..self.num_classes).map(|t| self.get(t, predicted)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<usize>> {
        (0..self.num_classes)
            .map(|t| (0..self.num_classes).map(|p| self.get(t, p)).collect())
            .collect()
    }
}

/// Tallies (truth, prediction) pairs into a Lambda x Lambda matrix.
pub fn confusion(truths: &[usize], preds: &[usize], num_classes: usize) -> Result<ConfusionMatrix> {
    if truths.len() != preds.len() {
        return Err(Error::LengthMismatch {
            left: truths.len(),
            right: preds.len(),
        });
    }
    let mut cm = ConfusionMatrix::new(num_classes);
    for (&t, &p) in truths.iter().zip(preds) {
        for label in [t, p] {
            if label >= num_classes {
                return Err(Error::InvalidLabel {
                    label,
                    num_classes,
                });
            }
        }
        cm.counts[t * num_classes + p] += 1;
    }
    Ok(cm)
}

/// Accuracy summary. Classes absent from the evaluation (zero row) carry
/// no per-class accuracy and are skipped by the average.
#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    pub oa: f64,
    pub aa: f64,
    pub kappa: f64,
    pub per_class_acc: Vec<Option<f64>>,
}

impl Metrics {
    /// Classes that were skipped when averaging.
    pub fn missing_classes(&self) -> Vec<usize> {
        self.per_class_acc
            .iter()
            .enumerate()
            .filter_map(|(c, acc)| acc.is_none().then_some(c))
            .collect()
    }
}

/// OA, AA and kappa from a confusion matrix.
pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    let total = total as f64;
    let diag: usize = (0..cm.num_classes()).map(|c| cm.get(c, c)).sum();
    let oa = diag as f64 / total;

    let mut per_class_acc = Vec::with_capacity(cm.num_classes());
    let mut aa_sum = 0.0;
    let mut aa_count = 0usize;
    for c in 0..cm.num_classes() {
        let row = cm.row_total(c);
        if row == 0 {
            per_class_acc.push(None);
        } else {
            let acc = cm.get(c, c) as f64 / row as f64;
            per_class_acc.push(Some(acc));
            aa_sum += acc;
            aa_count += 1;
        }
    }
    let aa = aa_sum / aa_count as f64;

    let p_e: f64 = (0..cm.num_classes())
        .map(|c| cm.row_total(c) as f64 * cm.col_total(c) as f64)
        .sum::<f64>()
        / (total * total);
    let kappa = if p_e >= 1.0 {
        if oa >= 1.0 {
            1.0
        } else {
            return Err(Error::DegenerateKappa { observed: oa });
        }
    } else {
        (oa - p_e) / (1.0 - p_e)
    };

    Ok(Metrics {
        oa,
        aa,
        kappa,
        per_class_acc,
    })
}

/// McNemar's statistic F = (f_ab - f_ba) / sqrt(f_ab + f_ba) over
/// per-sample correctness indicators; zero when the methods never
/// disagree. |F| > 1.96 marks a significant difference.
pub fn mcnemar(correct_a: &[bool], correct_b: &[bool]) -> Result<f64> {
    if correct_a.len() != correct_b.len() {
        return Err(Error::LengthMismatch {
            left: correct_a.len(),
            right: correct_b.len(),
        });
    }
    let mut f_ab = 0usize; // a right, b wrong
    let mut f_ba = 0usize;
    for (&a, &b) in correct_a.iter().zip(correct_b) {
        match (a, b) {
            (true, false) => f_ab += 1,
            (false, true) => f_ba += 1,
            _ => {}
        }
    }
    if f_ab + f_ba == 0 {
        return Ok(0.0);
    }
    Ok((f_ab as f64 - f_ba as f64) / ((f_ab + f_ba) as f64).sqrt())
}

/// Full evaluation payload for report files.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub oa: f64,
    pub aa: f64,
    pub kappa: f64,
    pub per_class_acc: Vec<Option<f64>>,
    pub confusion: Vec<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mcnemar_f: Option<f64>,
}

impl MetricsReport {
    pub fn new(cm: &ConfusionMatrix, m: &Metrics, mcnemar_f: Option<f64>) -> Self {
        Self {
            oa: m.oa,
            aa: m.aa,
            kappa: m.kappa,
            per_class_acc: m.per_class_acc.clone(),
            confusion: cm.rows(),
            mcnemar_f,
        }
    }

    /// Flat key-value rendering for logs and the text report file.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "oa {}", self.oa).unwrap();
        writeln!(out, "aa {}", self.aa).unwrap();
        writeln!(out, "kappa {}", self.kappa).unwrap();
        for (c, acc) in self.per_class_acc.iter().enumerate() {
            match acc {
                Some(a) => writeln!(out, "class_{c}_acc {a}").unwrap(),
                None => writeln!(out, "class_{c}_acc absent").unwrap(),
            }
        }
        for (t, row) in self.confusion.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "confusion_{t} {}", cells.join(" ")).unwrap();
        }
        if let Some(f) = self.mcnemar_f {
            writeln!(out, "mcnemar_f {f}").unwrap();
            writeln!(
                out,
                "mcnemar_significant {}",
                f.abs() > MCNEMAR_SIGNIFICANCE
            )
            .unwrap();
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn confusion_tallies_pairs() {
        let cm = confusion(&[0, 0, 1], &[0, 1, 1], 2).unwrap();
        assert_eq!(cm.rows(), vec![vec![1, 1], vec![0, 1]]);
    }

    #[test]
    fn confusion_perfect_is_diagonal() {
        let cm = confusion(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap();
        for t in 0..3 {
            for p in 0..3 {
                if t != p {
                    assert_eq!(cm.get(t, p), 0);
                }
            }
        }
        assert_eq!(cm.total(), 4);
    }

    #[test]
    fn confusion_empty_input_is_zero_matrix() {
        let cm = confusion(&[], &[], 3).unwrap();
        assert_eq!(cm.total(), 0);
    }

    #[test]
    fn confusion_rejects_bad_labels() {
        assert!(matches!(
            confusion(&[0, 3], &[0, 1], 2),
            Err(Error::InvalidLabel { label: 3, .. })
        ));
        assert!(matches!(
            confusion(&[0], &[0, 1], 2),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn metrics_perfect_diagonal() {
        let cm = ConfusionMatrix::from_counts(&[&[5, 0], &[0, 5]]);
        let m = metrics(&cm).unwrap();
        assert_eq!((m.oa, m.aa, m.kappa), (1.0, 1.0, 1.0));
    }

    #[test]
    fn metrics_hand_computed_example() {
        let cm = ConfusionMatrix::from_counts(&[&[3, 1], &[2, 4]]);
        let m = metrics(&cm).unwrap();
        assert!((m.oa - 0.7).abs() <= 1e-12);
        let expected_aa = (0.75 + 4.0 / 6.0) / 2.0;
        assert!((m.aa - expected_aa).abs() <= 1e-12);
        assert!((m.kappa - 0.4).abs() <= 1e-12);
    }

    #[test]
    fn metrics_skips_absent_class() {
        let cm = ConfusionMatrix::from_counts(&[&[4, 0, 0], &[1, 3, 0], &[0, 0, 0]]);
        let m = metrics(&cm).unwrap();
        assert_eq!(m.per_class_acc[2], None);
        assert_eq!(m.missing_classes(), vec![2]);
        assert!((m.aa - (1.0 + 0.75) / 2.0).abs() <= 1e-12);
    }

    #[test]
    fn metrics_chance_level_kappa_near_zero() {
        // balanced classes with uniform random predictions
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(13);
        let n = 20_000;
        let truths: Vec<usize> = (0..n).map(|i| i % 4).collect();
        let preds: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let m = metrics(&confusion(&truths, &preds, 4).unwrap()).unwrap();
        assert!(m.kappa.abs() <= 0.02, "kappa {}", m.kappa);
    }

    #[test]
    fn metrics_degenerate_kappa() {
        // every truth and prediction in one class: p_e = 1 forces p_o = 1
        let cm = ConfusionMatrix::from_counts(&[&[7, 0], &[0, 0]]);
        assert_eq!(metrics(&cm).unwrap().kappa, 1.0);
        // all mass on one off-diagonal cell: p_e = 0, kappa = 0
        let cm = ConfusionMatrix::from_counts(&[&[0, 0], &[7, 0]]);
        let m = metrics(&cm).unwrap();
        assert_eq!((m.oa, m.kappa), (0.0, 0.0));
        assert!(matches!(
            metrics(&ConfusionMatrix::new(2)),
            Err(Error::EmptyMatrix)
        ));
    }

    #[test]
    fn mcnemar_examples() {
        let a = vec![true, true, false];
        assert_eq!(mcnemar(&a, &a).unwrap(), 0.0);

        // 12 discordant one way, 4 the other: (12 - 4) / sqrt(16) = 2
        let mut correct_a = vec![true; 12];
        correct_a.extend(vec![false; 4]);
        correct_a.extend(vec![true; 10]);
        let mut correct_b = vec![false; 12];
        correct_b.extend(vec![true; 4]);
        correct_b.extend(vec![true; 10]);
        let f = mcnemar(&correct_a, &correct_b).unwrap();
        assert!((f - 2.0).abs() <= 1e-12);
        let swapped = mcnemar(&correct_b, &correct_a).unwrap();
        assert_eq!(swapped, -f);
    }

    #[test]
    fn report_text_and_json_render() {
        let cm = ConfusionMatrix::from_counts(&[&[3, 1], &[2, 4]]);
        let m = metrics(&cm).unwrap();
        let report = MetricsReport::new(&cm, &m, Some(2.5));
        let text = report.to_text();
        assert!(text.contains("oa 0.7"));
        assert!(text.contains("mcnemar_significant true"));
        let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(json["confusion"][1][0], 2);
    }

    proptest! {
        #[test]
        fn kappa_never_exceeds_oa(
            counts in proptest::collection::vec(0usize..40, 4..=25)
        ) {
            // reshape into the largest square that fits
            let n = (counts.len() as f64).sqrt() as usize;
            let mut cm = ConfusionMatrix::new(n);
            for (i, &v) in counts.iter().take(n * n).enumerate() {
                cm.counts[i] = v;
            }
            prop_assume!(cm.total() > 0);
            match metrics(&cm) {
                Ok(m) => prop_assert!(m.kappa <= m.oa + 1e-12),
                Err(Error::DegenerateKappa { .. }) => {}
                Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
            }
        }

        #[test]
        fn mcnemar_antisymmetry(
            pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 0..200)
        ) {
            let a: Vec<bool> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<bool> = pairs.iter().map(|p| p.1).collect();
            prop_assert_eq!(mcnemar(&a, &b).unwrap(), -mcnemar(&b, &a).unwrap());
        }

        #[test]
        fn metrics_scale_invariant(
            rows in proptest::collection::vec(proptest::collection::vec(0usize..20, 3), 3),
            k in 1usize..5
        ) {
            let base = ConfusionMatrix::from_counts(
                &rows.iter().map(|r| r.as_slice()).collect::<Vec<_>>(),
            );
            prop_assume!(base.total() > 0);
            let mut scaled = base.clone();
            for v in &mut scaled.counts {
                *v *= k;
            }
            match (metrics(&base), metrics(&scaled)) {
                (Ok(a), Ok(b)) => {
                    prop_assert!((a.oa - b.oa).abs() <= 1e-12);
                    prop_assert!((a.aa - b.aa).abs() <= 1e-12);
                    prop_assert!((a.kappa - b.kappa).abs() <= 1e-12);
                }
                (Err(_), Err(_)) => {}
                other => return Err(TestCaseError::fail(format!("inconsistent: {other:?}"))),
            }
        }
    }
}
