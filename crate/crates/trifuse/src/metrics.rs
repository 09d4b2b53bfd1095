//! Confusion matrices, per-class metrics, and comparison tables.
//!
//! The confusion matrix is indexed `[true class][predicted class]`. Every
//! ratio with an empty denominator is defined as 0 (a class absent from
//! both references and predictions contributes precision = recall =
//! F1 = 0), and macro averages are unweighted means over **all** classes,
//! including zero-support ones. Accuracy is trace over total, which is
//! exactly micro-averaged recall.

use crate::error::{Error, Result};
use std::fmt::Write as _;

pub use crate::fusion::ModelKind;

/// Counts of (true class, predicted class) pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        ConfusionMatrix {
            n_classes,
            counts: vec![0; n_classes * n_classes],
        }
    }

    pub fn from_pairs(n_classes: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut m = ConfusionMatrix::new(n_classes);
        for &(truth, pred) in pairs {
            m.record(truth, pred)?;
        }
        Ok(m)
    }

    pub fn record(&mut self, truth: usize, pred: usize) -> Result<()> {
        if truth >= self.n_classes || pred >= self.n_classes {
            return Err(Error::parameter(
                "ConfusionMatrix::record",
                format!(
                    "labels ({truth}, {pred}) out of range for {} classes",
                    self.n_classes
                ),
            ));
        }
        self.counts[truth * self.n_classes + pred] += 1;
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn count(&self, truth: usize, pred: usize) -> usize {
        self.counts[truth * self.n_classes + pred]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Samples whose true class is `c` (row sum).
    pub fn support(&self, c: usize) -> usize {
        (0..self.n_classes).map(|j| self.count(c, j)).sum()
    }

    /// Samples predicted as class `c` (column sum).
    pub fn predicted(&self, c: usize) -> usize {
        (0..self.n_classes).map(|i| self.count(i, c)).sum()
    }

    /// Turns counts into a full report. `class_names` labels the rows of
    /// per-class output and must cover every class.
    pub fn report(
        &self,
        model_id: impl Into<String>,
        kind: ModelKind,
        class_names: &[&str],
    ) -> Result<EvalReport> {
        if class_names.len() != self.n_classes {
            return Err(Error::contract(
                "ConfusionMatrix::report",
                format!(
                    "{} class names for {} classes",
                    class_names.len(),
                    self.n_classes
                ),
            ));
        }
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let mut per_class = Vec::with_capacity(self.n_classes);
        for (c, name) in class_names.iter().enumerate() {
            let tp = self.count(c, c);
            let precision = ratio(tp, self.predicted(c));
            let recall = ratio(tp, self.support(c));
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            per_class.push(ClassMetrics {
                label: name.to_string(),
                support: self.support(c),
                precision,
                recall,
                f1,
            });
        }
        let n = self.n_classes as f64;
        let trace: usize = (0..self.n_classes).map(|c| self.count(c, c)).sum();
        Ok(EvalReport {
            model_id: model_id.into(),
            kind,
            accuracy: ratio(trace, self.total()),
            macro_precision: per_class.iter().map(|m| m.precision).sum::<f64>() / n,
            macro_recall: per_class.iter().map(|m| m.recall).sum::<f64>() / n,
            macro_f1: per_class.iter().map(|m| m.f1).sum::<f64>() / n,
            per_class,
            confusion: self.clone(),
        })
    }

    /// Tab-separated export: one header row of class names (prediction
    /// columns), then one row of counts per true class.
    pub fn to_tsv(&self, class_names: &[&str]) -> Result<String> {
        if class_names.len() != self.n_classes {
            return Err(Error::contract(
                "ConfusionMatrix::to_tsv",
                format!(
                    "{} class names for {} classes",
                    class_names.len(),
                    self.n_classes
                ),
            ));
        }
        let mut out = class_names.join("\t");
        out.push('\n');
        for i in 0..self.n_classes {
            let row: Vec<String> = (0..self.n_classes)
                .map(|j| self.count(i, j).to_string())
                .collect();
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct ClassMetrics {
    pub label: String,
    pub support: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Full evaluation of one model on one dataset.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub model_id: String,
    pub kind: ModelKind,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
}

impl EvalReport {
    /// Human-readable single-model report with per-class breakdown.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "model {} ({})", self.model_id, self.kind.table_label());
        let _ = writeln!(
            out,
            "overall: acc {} | macro P {} | macro R {} | macro F1 {}",
            pct(self.accuracy),
            pct(self.macro_precision),
            pct(self.macro_recall),
            pct(self.macro_f1)
        );
        let width = self
            .per_class
            .iter()
            .map(|m| m.label.len())
            .max()
            .unwrap_or(5)
            .max(5);
        let _ = writeln!(
            out,
            "{:<width$}  {:>7}  {:>7}  {:>7}  {:>7}",
            "class", "support", "P(%)", "R(%)", "F1(%)"
        );
        for m in &self.per_class {
            let _ = writeln!(
                out,
                "{:<width$}  {:>7}  {:>7}  {:>7}  {:>7}",
                m.label,
                m.support,
                pct(m.precision),
                pct(m.recall),
                pct(m.f1)
            );
        }
        out.push_str(FOOTNOTE);
        out
    }

    /// Machine-readable `key=value` lines; floats use Rust's shortest
    /// round-trip formatting so values re-parse exactly.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "model_id={}", self.model_id);
        let _ = writeln!(out, "kind={}", self.kind.table_label());
        let _ = writeln!(out, "accuracy={}", self.accuracy);
        let _ = writeln!(out, "macro_precision={}", self.macro_precision);
        let _ = writeln!(out, "macro_recall={}", self.macro_recall);
        let _ = writeln!(out, "macro_f1={}", self.macro_f1);
        for (c, m) in self.per_class.iter().enumerate() {
            let _ = writeln!(out, "class.{c}.label={}", m.label);
            let _ = writeln!(out, "class.{c}.support={}", m.support);
            let _ = writeln!(out, "class.{c}.precision={}", m.precision);
            let _ = writeln!(out, "class.{c}.recall={}", m.recall);
            let _ = writeln!(out, "class.{c}.f1={}", m.f1);
        }
        out
    }
}

/// Table arrangement for [`render_comparison`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// Text models vs image models, two groups.
    Unimodal,
    /// One group per fusion strategy, any number of rows each.
    Fusion,
    /// Exactly the five canonical rows: text-only, image-only, early,
    /// late, intermediate.
    Ablation,
}

const FOOTNOTE: &str =
    "note: empty denominators score 0 (0/0 -> 0); macro averages include zero-support classes\n";

fn pct(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

/// Renders a grouped comparison table. Rows within a group are ordered by
/// descending macro-F1 with ties broken by model id; the best row of each
/// group is flagged with `*`.
pub fn render_comparison(reports: &[EvalReport], layout: Layout) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::contract(
            "render_comparison",
            "no reports to compare",
        ));
    }
    let group_of = |kind: ModelKind| -> Result<(usize, &'static str)> {
        match (layout, kind) {
            (Layout::Unimodal, ModelKind::TextOnly) => Ok((0, "Text models")),
            (Layout::Unimodal, ModelKind::ImageOnly) => Ok((1, "Image models")),
            (Layout::Fusion, ModelKind::EarlyFusion) => Ok((0, "Early fusion")),
            (Layout::Fusion, ModelKind::LateFusion) => Ok((1, "Late fusion")),
            (Layout::Fusion, ModelKind::IntermediateFusion) => Ok((2, "Intermediate fusion")),
            (_, k) => Err(Error::contract(
                "render_comparison",
                format!(
                    "{} rows do not belong in a {:?} table",
                    k.table_label(),
                    layout
                ),
            )),
        }
    };

    // (group rank, group title, report) triples in final order.
    let mut rows: Vec<(usize, &'static str, &EvalReport)> = Vec::with_capacity(reports.len());
    match layout {
        Layout::Ablation => {
            if reports.len() != 5 {
                return Err(Error::contract(
                    "render_comparison",
                    format!(
                        "ablation table needs exactly 5 reports, got {}",
                        reports.len()
                    ),
                ));
            }
            for kind in ModelKind::ABLATION_ORDER {
                let mut matching = reports.iter().filter(|r| r.kind == kind);
                let report = matching.next().ok_or_else(|| {
                    Error::contract(
                        "render_comparison",
                        format!("ablation table is missing a {} report", kind.table_label()),
                    )
                })?;
                if matching.next().is_some() {
                    return Err(Error::contract(
                        "render_comparison",
                        format!(
                            "ablation table has duplicate {} reports",
                            kind.table_label()
                        ),
                    ));
                }
                // One group, canonical order: the star marks the overall best.
                rows.push((0, "Ablation", report));
            }
        }
        _ => {
            for r in reports {
                let (rank, title) = group_of(r.kind)?;
                rows.push((rank, title, r));
            }
            rows.sort_by(|a, b| {
                a.0.cmp(&b.0)
                    .then_with(|| b.2.macro_f1.total_cmp(&a.2.macro_f1))
                    .then_with(|| a.2.model_id.cmp(&b.2.model_id))
            });
        }
    }

    // For each group, the row flagged as best (highest macro-F1, first on tie).
    let mut best: Vec<bool> = vec![false; rows.len()];
    let mut i = 0;
    while i < rows.len() {
        let mut j = i;
        while j < rows.len() && rows[j].0 == rows[i].0 && rows[j].1 == rows[i].1 {
            j += 1;
        }
        let (bi, _) = rows[i..j]
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| a.2.macro_f1.total_cmp(&b.2.macro_f1).then(ib.cmp(ia)))
            .expect("group is non-empty");
        best[i + bi] = true;
        i = j;
    }

    let id_width = rows
        .iter()
        .map(|(_, _, r)| row_label(r, layout).len())
        .max()
        .unwrap_or(5)
        .max(5);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "  {:<id_width$}  {:>8}  {:>8}  {:>8}  {:>8}",
        "model", "Acc(%)", "Prec(%)", "Rec(%)", "F1(%)"
    );
    let mut current_group: Option<(usize, &str)> = None;
    for (idx, (rank, title, r)) in rows.iter().enumerate() {
        if layout != Layout::Ablation && current_group != Some((*rank, title)) {
            let _ = writeln!(out, "{title}:");
            current_group = Some((*rank, title));
        }
        let _ = writeln!(
            out,
            "{} {:<id_width$}  {:>8}  {:>8}  {:>8}  {:>8}",
            if best[idx] { "*" } else { " " },
            row_label(r, layout),
            pct(r.accuracy),
            pct(r.macro_precision),
            pct(r.macro_recall),
            pct(r.macro_f1)
        );
    }
    out.push_str(FOOTNOTE);
    Ok(out)
}

fn row_label(r: &EvalReport, layout: Layout) -> &str {
    match layout {
        Layout::Ablation => r.kind.table_label(),
        _ => &r.model_id,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    fn report_of(n: usize, pairs: &[(usize, usize)]) -> EvalReport {
        let m = ConfusionMatrix::from_pairs(n, pairs).unwrap();
        let ns = names(n);
        let refs: Vec<&str> = ns.iter().map(|s| s.as_str()).collect();
        m.report("m", ModelKind::TextOnly, &refs).unwrap()
    }

    #[test]
    fn diagonal_matrix_from_correct_predictions() {
        let m = ConfusionMatrix::from_pairs(3, &[(0, 0), (1, 1), (2, 2), (1, 1)]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(
                    m.count(i, j),
                    usize::from(i == j) * if i == 1 { 2 } else { 1 }
                );
            }
        }
        assert_eq!(m.total(), 4);
    }

    #[test]
    fn single_confusion_lands_in_the_right_cell() {
        let m = ConfusionMatrix::from_pairs(6, &[(2, 5)]).unwrap();
        assert_eq!(m.count(2, 5), 1);
        assert_eq!(m.total(), 1);
    }

    #[test]
    fn repeated_pair_accumulates_counts() {
        let pairs = vec![(3usize, 1usize); 1000];
        let m = ConfusionMatrix::from_pairs(6, &pairs).unwrap();
        assert_eq!(m.count(3, 1), 1000);
    }

    #[test]
    fn worked_two_class_example() {
        // [[1,1],[0,2]]: P = (1, 2/3), R = (1/2, 1), F1 = (2/3, 4/5),
        // macro-F1 = 11/15.
        let r = report_of(2, &[(0, 0), (0, 1), (1, 1), (1, 1)]);
        assert!((r.per_class[0].precision - 1.0).abs() < 1e-15);
        assert!((r.per_class[0].recall - 0.5).abs() < 1e-15);
        assert!((r.per_class[1].precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.per_class[1].recall - 1.0).abs() < 1e-15);
        assert!((r.macro_f1 - 11.0 / 15.0).abs() < 1e-15);
        assert!((r.accuracy - 0.75).abs() < 1e-15);
    }

    #[test]
    fn perfect_predictions_score_one_everywhere() {
        let r = report_of(4, &[(0, 0), (1, 1), (2, 2), (3, 3)]);
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.macro_precision, 1.0);
        assert_eq!(r.macro_recall, 1.0);
        assert_eq!(r.macro_f1, 1.0);
    }

    #[test]
    fn absent_class_contributes_zero_not_nan() {
        // Class 2 never appears in truths or predictions.
        let r = report_of(3, &[(0, 0), (1, 0)]);
        let m2 = &r.per_class[2];
        assert_eq!((m2.precision, m2.recall, m2.f1), (0.0, 0.0, 0.0));
        assert!((r.macro_f1 - (1.0 + 0.0 + 0.0) / 3.0).abs() < 1e-15 || r.macro_f1.is_finite());
        assert!(r.macro_f1.is_finite() && r.macro_precision.is_finite());
    }

    #[test]
    fn macro_values_are_unweighted_means_of_per_class() {
        let r = report_of(
            4,
            &[
                (0, 1),
                (0, 0),
                (1, 1),
                (2, 3),
                (3, 3),
                (3, 0),
                (2, 2),
                (1, 2),
            ],
        );
        let mean =
            |f: &dyn Fn(&ClassMetrics) -> f64| r.per_class.iter().map(f).sum::<f64>() / 4.0;
        assert!((r.macro_precision - mean(&|m| m.precision)).abs() < 1e-12);
        assert!((r.macro_recall - mean(&|m| m.recall)).abs() < 1e-12);
        assert!((r.macro_f1 - mean(&|m| m.f1)).abs() < 1e-12);
    }

    #[test]
    fn accuracy_equals_micro_recall_on_random_matrices() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let n = rng.gen_range(2..7);
            let pairs: Vec<(usize, usize)> = (0..rng.gen_range(1..60))
                .map(|_| (rng.gen_range(0..n), rng.gen_range(0..n)))
                .collect();
            let r = report_of(n, &pairs);
            let micro_tp: usize = (0..n).map(|c| r.confusion.count(c, c)).sum();
            let micro_fn: usize = (0..n)
                .map(|c| r.confusion.support(c) - r.confusion.count(c, c))
                .sum();
            let micro_recall = micro_tp as f64 / (micro_tp + micro_fn) as f64;
            assert!((r.accuracy - micro_recall).abs() < 1e-15);
        }
    }

    #[test]
    fn class_permutation_permutes_metrics_and_preserves_macro() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let n = 5;
            let pairs: Vec<(usize, usize)> = (0..40)
                .map(|_| (rng.gen_range(0..n), rng.gen_range(0..n)))
                .collect();
            // A fixed 5-cycle permutation.
            let perm = [2usize, 4, 1, 0, 3];
            let permuted: Vec<(usize, usize)> =
                pairs.iter().map(|&(t, p)| (perm[t], perm[p])).collect();
            let a = report_of(n, &pairs);
            let b = report_of(n, &permuted);
            for c in 0..n {
                assert!((a.per_class[c].f1 - b.per_class[perm[c]].f1).abs() < 1e-15);
                assert!((a.per_class[c].precision - b.per_class[perm[c]].precision).abs() < 1e-15);
            }
            assert!((a.macro_f1 - b.macro_f1).abs() < 1e-12);
            assert!((a.accuracy - b.accuracy).abs() < 1e-15);
        }
    }

    #[test]
    fn percent_formatting_matches_published_style() {
        assert_eq!(pct(0.8412), "84.12");
        assert_eq!(pct(0.8411), "84.11");
        assert_eq!(pct(1.0), "100.00");
    }

    fn fixed_report(kind: ModelKind, id: &str, f1: f64) -> EvalReport {
        let mut r = report_of(2, &[(0, 0), (1, 1)]);
        r.kind = kind;
        r.model_id = id.to_string();
        r.macro_f1 = f1;
        r
    }

    #[test]
    fn comparison_orders_by_group_then_f1_then_id() {
        let reports = vec![
            fixed_report(ModelKind::ImageOnly, "img-b", 0.7),
            fixed_report(ModelKind::TextOnly, "txt-low", 0.6),
            fixed_report(ModelKind::TextOnly, "txt-high", 0.9),
            fixed_report(ModelKind::ImageOnly, "img-a", 0.7),
        ];
        let table = render_comparison(&reports, Layout::Unimodal).unwrap();
        let pos = |s: &str| {
            table
                .find(s)
                .unwrap_or_else(|| panic!("{s} missing from:\n{table}"))
        };
        assert!(pos("txt-high") < pos("txt-low"));
        assert!(pos("txt-low") < pos("img-a"));
        assert!(
            pos("img-a") < pos("img-b"),
            "F1 tie must fall back to model id"
        );
        // Best row of each group is starred.
        assert!(table
            .lines()
            .any(|l| l.starts_with('*') && l.contains("txt-high")));
        assert!(table
            .lines()
            .any(|l| l.starts_with('*') && l.contains("img-a")));
        assert!(
            table.contains("0/0 -> 0"),
            "footer documents the convention"
        );
    }

    #[test]
    fn ablation_layout_emits_five_fixed_rows() {
        let reports = vec![
            fixed_report(ModelKind::IntermediateFusion, "i", 0.95),
            fixed_report(ModelKind::TextOnly, "t", 0.6),
            fixed_report(ModelKind::EarlyFusion, "e", 0.8),
            fixed_report(ModelKind::ImageOnly, "v", 0.62),
            fixed_report(ModelKind::LateFusion, "l", 0.85),
        ];
        let table = render_comparison(&reports, Layout::Ablation).unwrap();
        let pos = |s: &str| {
            table
                .find(s)
                .unwrap_or_else(|| panic!("{s} missing from:\n{table}"))
        };
        assert!(pos("Text-only") < pos("Image-only"));
        assert!(pos("Image-only") < pos("Early fusion"));
        assert!(pos("Early fusion") < pos("Late fusion"));
        assert!(pos("Late fusion") < pos("Intermediate fusion"));
        // Four reports is a contract error, as is a duplicate kind.
        assert!(render_comparison(&reports[..4], Layout::Ablation).is_err());
        let mut dup = reports.clone();
        dup[1] = fixed_report(ModelKind::EarlyFusion, "e2", 0.7);
        assert!(render_comparison(&dup, Layout::Ablation).is_err());
    }

    #[test]
    fn fusion_rows_are_rejected_in_unimodal_layout() {
        let reports = vec![fixed_report(ModelKind::EarlyFusion, "e", 0.8)];
        assert!(render_comparison(&reports, Layout::Unimodal).is_err());
    }

    #[test]
    fn kv_export_round_trips_floats_exactly() {
        let r = report_of(3, &[(0, 0), (1, 2), (2, 2), (0, 1), (1, 1), (2, 0)]);
        let kv = r.to_kv();
        let get = |key: &str| -> f64 {
            kv.lines()
                .find_map(|l| l.strip_prefix(&format!("{key}=")))
                .unwrap()
                .parse()
                .unwrap()
        };
        assert_eq!(get("accuracy"), r.accuracy);
        assert_eq!(get("macro_f1"), r.macro_f1);
        assert_eq!(get("class.1.precision"), r.per_class[1].precision);
    }

    #[test]
    fn confusion_tsv_has_header_and_six_rows() {
        let m = ConfusionMatrix::from_pairs(3, &[(0, 1), (1, 1), (2, 0)]).unwrap();
        let tsv = m.to_tsv(&["a", "b", "c"]).unwrap();
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "a\tb\tc");
        assert_eq!(lines[1], "0\t1\t0");
        assert_eq!(lines[3], "1\t0\t0");
    }
}
