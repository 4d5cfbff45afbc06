//! Confusion matrices and accuracy / sensitivity / precision / F1, per class
//! (one-vs-rest) and overall (unweighted macro average).
//!
//! Degenerate denominators: sensitivity is 0 when a class never occurs in
//! the truth, precision is 0 when it is never predicted, and F1 is 0 when
//! both are 0.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("{truth} true labels but {predicted} predictions")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("label {label} out of range for {k} classes")]
    LabelOutOfRange { label: usize, k: usize },
    #[error("confusion matrices have different class counts ({0} vs {1})")]
    ClassCountMismatch(usize, usize),
    #[error("report CSV: {0}")]
    Parse(String),
}

/// `counts[t][p]`: samples of true class `t` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(k: usize) -> Self {
        Self {
            k,
            counts: vec![0; k * k],
        }
    }

    /// Builds from row-major `k × k` counts.
    pub fn from_counts(k: usize, counts: Vec<u64>) -> Self {
        assert_eq!(counts.len(), k * k, "confusion matrix needs k² counts");
        Self { k, counts }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.k + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        (0..self.k).map(|p| self.get(c, p)).sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        (0..self.k).map(|t| self.get(t, c)).sum()
    }

    pub fn add(&mut self, other: &ConfusionMatrix) -> Result<(), MetricsError> {
        if other.k != self.k {
            return Err(MetricsError::ClassCountMismatch(self.k, other.k));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

pub fn confusion_matrix(truth: &[usize], predicted: &[usize], k: usize) -> Result<ConfusionMatrix, MetricsError> {
    if truth.len() != predicted.len() {
        return Err(MetricsError::LengthMismatch {
            truth: truth.len(),
            predicted: predicted.len(),
        });
    }
    let mut cm = ConfusionMatrix::zeros(k);
    for (&t, &p) in truth.iter().zip(predicted) {
        if let Some(&label) = [t, p].iter().find(|&&l| l >= k) {
            return Err(MetricsError::LabelOutOfRange { label, k });
        }
        cm.counts[t * k + p] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub acc: f64,
    pub sen: f64,
    pub pre: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of sensitivity and precision, 0 when both are 0.
pub fn f1_score(sen: f64, pre: f64) -> f64 {
    if sen + pre == 0.0 {
        0.0
    } else {
        2.0 * sen * pre / (sen + pre)
    }
}

/// One-vs-rest metrics for class `c`. An empty matrix has accuracy 1.
pub fn per_class_metrics(cm: &ConfusionMatrix, c: usize) -> ClassMetrics {
    let total = cm.total();
    let tp = cm.get(c, c);
    let fn_ = cm.row_sum(c) - tp;
    let fp = cm.col_sum(c) - tp;
    let tn = total - tp - fn_ - fp;
    let sen = ratio(tp, tp + fn_);
    let pre = ratio(tp, tp + fp);
    ClassMetrics {
        acc: if total == 0 { 1.0 } else { (tp + tn) as f64 / total as f64 },
        sen,
        pre,
        f1: f1_score(sen, pre),
    }
}

/// Macro mean of per-class acc, sen and pre; F1 is the harmonic mean of the
/// macro sen and pre.
pub fn macro_average(per_class: &[ClassMetrics]) -> ClassMetrics {
    let n = per_class.len().max(1) as f64;
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / n;
    let (acc, sen, pre) = (mean(|m| m.acc), mean(|m| m.sen), mean(|m| m.pre));
    ClassMetrics {
        acc,
        sen,
        pre,
        f1: f1_score(sen, pre),
    }
}

pub fn overall_metrics(cm: &ConfusionMatrix) -> ClassMetrics {
    let per: Vec<ClassMetrics> = (0..cm.k()).map(|c| per_class_metrics(cm, c)).collect();
    macro_average(&per)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    /// `(class code, metrics)` in class-index order.
    pub per_class: Vec<(String, ClassMetrics)>,
    pub overall: ClassMetrics,
}

impl MetricReport {
    pub fn from_confusion(cm: &ConfusionMatrix, codes: &[char]) -> Self {
        assert_eq!(codes.len(), cm.k(), "one code per class");
        let per_class = codes
            .iter()
            .enumerate()
            .map(|(c, code)| (code.to_string(), per_class_metrics(cm, c)))
            .collect();
        Self {
            per_class,
            overall: overall_metrics(cm),
        }
    }
}

/// Half-up rounding to three decimals.
pub fn fmt3(x: f64) -> String {
    format!("{:.3}", (x * 1000.0).round() / 1000.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
}

pub const CSV_HEADER: &str = "class,acc,sen,pre,f1";

pub fn render_report(report: &MetricReport, format: ReportFormat) -> String {
    let rows = report
        .per_class
        .iter()
        .map(|(c, m)| (c.as_str(), m))
        .chain(std::iter::once(("overall", &report.overall)));
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            out.push_str(CSV_HEADER);
            out.push('\n');
            for (name, m) in rows {
                let _ = writeln!(out, "{name},{},{},{},{}", fmt3(m.acc), fmt3(m.sen), fmt3(m.pre), fmt3(m.f1));
            }
        }
        ReportFormat::Text => {
            let _ = writeln!(out, "{:<8} {:>6} {:>6} {:>6} {:>6}", "Types", "Acc", "Sen", "Pre", "F1");
            let n = report.per_class.len();
            for (i, (name, m)) in rows.enumerate() {
                if i == n {
                    out.push_str(&"-".repeat(36));
                    out.push('\n');
                }
                let label = if name == "overall" { "Overall" } else { name };
                let _ = writeln!(
                    out,
                    "{label:<8} {:>6} {:>6} {:>6} {:>6}",
                    fmt3(m.acc),
                    fmt3(m.sen),
                    fmt3(m.pre),
                    fmt3(m.f1)
                );
            }
            out.push_str(
                "\nSen is 0 for classes absent from the truth, Pre is 0 for classes never predicted,\n\
                 F1 is 0 when Sen + Pre = 0. Overall = unweighted mean over classes; overall F1 is\n\
                 the harmonic mean of the overall Sen and Pre.\n",
            );
        }
    }
    out
}

/// Parses a report CSV back into `(row name, metrics)` pairs.
pub fn parse_report_csv(text: &str) -> Result<Vec<(String, ClassMetrics)>, MetricsError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some(CSV_HEADER) {
        return Err(MetricsError::Parse(format!("missing header `{CSV_HEADER}`")));
    }
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 5 {
                return Err(MetricsError::Parse(format!("expected 5 fields in {line:?}")));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| MetricsError::Parse(format!("{s:?}: {e}")));
            Ok((
                f[0].to_string(),
                ClassMetrics {
                    acc: num(f[1])?,
                    sen: num(f[2])?,
                    pre: num(f[3])?,
                    f1: num(f[4])?,
                },
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_tally() {
        let cm = confusion_matrix(&[0, 0, 1], &[0, 1, 1], 2).unwrap();
        assert_eq!(cm, ConfusionMatrix::from_counts(2, vec![1, 1, 0, 1]));
        let cm = confusion_matrix(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!(cm, ConfusionMatrix::from_counts(3, vec![1, 0, 0, 0, 1, 0, 0, 0, 1]));
        assert_eq!(confusion_matrix(&[], &[], 3).unwrap(), ConfusionMatrix::zeros(3));
        assert!(matches!(confusion_matrix(&[0], &[], 2), Err(MetricsError::LengthMismatch { .. })));
        assert_eq!(
            confusion_matrix(&[0], &[2], 2),
            Err(MetricsError::LabelOutOfRange { label: 2, k: 2 })
        );
    }

    #[test]
    fn two_class_hand_values() {
        let cm = ConfusionMatrix::from_counts(2, vec![8, 2, 1, 9]);
        let m = per_class_metrics(&cm, 0);
        assert!((m.acc - 0.85).abs() < 1e-15);
        assert!((m.sen - 0.8).abs() < 1e-15);
        assert!((m.pre - 8.0 / 9.0).abs() < 1e-15);
        assert!((m.f1 - 0.842_105_263_157_894_7).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_absent_classes() {
        let cm = ConfusionMatrix::from_counts(3, vec![4, 0, 0, 0, 2, 0, 0, 0, 0]);
        for c in 0..2 {
            let m = per_class_metrics(&cm, c);
            assert_eq!((m.acc, m.sen, m.pre, m.f1), (1.0, 1.0, 1.0, 1.0));
        }
        let absent = per_class_metrics(&cm, 2);
        assert_eq!((absent.acc, absent.sen, absent.pre, absent.f1), (1.0, 0.0, 0.0, 0.0));

        let diag = ConfusionMatrix::from_counts(2, vec![3, 0, 0, 5]);
        let o = overall_metrics(&diag);
        assert_eq!((o.acc, o.sen, o.pre, o.f1), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(fmt3(0.9958), "0.996");
        assert_eq!(fmt3(0.9842), "0.984");
        assert_eq!(fmt3(1.0), "1.000");
        assert_eq!(fmt3(0.0), "0.000");
        // exactly representable tie rounds up, unlike `{:.3}`
        assert_eq!(fmt3(0.0625), "0.063");
    }

    #[test]
    fn csv_round_trip() {
        let cm = ConfusionMatrix::from_counts(2, vec![8, 2, 1, 9]);
        let report = MetricReport::from_confusion(&cm, &['N', 'A']);
        let rows = parse_report_csv(&render_report(&report, ReportFormat::Csv)).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[2].0, "overall");
        for ((name, parsed), (orig_name, orig)) in rows.iter().zip(&report.per_class) {
            assert_eq!(name, orig_name);
            assert!((parsed.pre - orig.pre).abs() <= 5e-4);
        }
    }

    #[test]
    fn text_layout() {
        let cm = ConfusionMatrix::from_counts(5, (0..25).map(|i| if i % 6 == 0 { 10 } else { 1 }).collect());
        let report = MetricReport::from_confusion(&cm, &['A', 'L', 'N', 'R', 'V']);
        let text = render_report(&report, ReportFormat::Text);
        let table: Vec<&str> = text.lines().take(8).collect();
        assert!(table[0].starts_with("Types"));
        assert!(table[6].starts_with("---"));
        assert!(table[7].starts_with("Overall"));
    }
}
