//! Builds classification metrics from raw (truth, prediction) pairs and
//! renders every table the trainer prints: the per-class report, the
//! confusion matrix as TSV, and a multi-model comparison.
//!
//! Conventions worth knowing: precision/recall with an empty denominator
//! score 0 rather than NaN, and macro averages weight every class
//! equally — including classes the model never predicted.
//!
//! Run with: cargo run --example metrics_tables

use trifuse::error::Result;
use trifuse::fusion::ModelKind;
use trifuse::metrics::{render_comparison, ConfusionMatrix, Layout};

fn main() -> Result<()> {
    // A worked 2-class example: two "spam" truths both predicted spam,
    // two "ham" truths split between the classes.
    let pairs = [(0, 0), (0, 1), (1, 1), (1, 1)];
    let cm = ConfusionMatrix::from_pairs(2, &pairs)?;
    let report = cm.report("worked_example", ModelKind::TextOnly, &["ham", "spam"])?;
    println!("counts are indexed [truth][predicted]:");
    println!("{}", cm.to_tsv(&["ham", "spam"])?);
    println!("{}", report.render());
    println!(
        "macro-F1 {:.6} = mean of per-class F1 {:.6} and {:.6}\n",
        report.macro_f1, report.per_class[0].f1, report.per_class[1].f1
    );

    // A zero-support class: "unused" never appears in truth and is never
    // predicted, so all three of its metrics are 0 by the convention
    // above, and the macro average still divides by 3.
    let cm = ConfusionMatrix::from_pairs(3, &[(0, 0), (1, 1), (1, 0)])?;
    let report = cm.report("degenerate", ModelKind::TextOnly, &["a", "b", "unused"])?;
    println!("{}", report.render());

    // render_comparison lines up several models; the star marks the best
    // macro-F1 of each group.
    let mut reports = Vec::new();
    for (kind, pairs) in [
        (ModelKind::TextOnly, vec![(0, 0), (0, 1), (1, 1), (1, 0)]),
        (ModelKind::ImageOnly, vec![(0, 0), (0, 0), (1, 1), (1, 1)]),
    ] {
        let cm = ConfusionMatrix::from_pairs(2, &pairs)?;
        reports.push(cm.report(kind.name(), kind, &["ham", "spam"])?);
    }
    println!("{}", render_comparison(&reports, Layout::Unimodal)?);
    Ok(())
}
