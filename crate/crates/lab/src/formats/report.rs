//! Evaluation reports as an aligned text table and a TSV record file.

use std::fmt::Write as _;

use stagedistil_core::eval::EvalReport;

pub fn report_table(title: &str, report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    let _ = writeln!(out, "{:<10} {:>9} {:>9} {:>9} {:>8}", "language", "precision", "recall", "f1", "support");
    for l in &report.languages {
        let _ = writeln!(out, "{:<10} {:>9.4} {:>9.4} {:>9.4} {:>8}", l.language, l.precision, l.recall, l.f1, l.support);
    }
    let _ = writeln!(out, "mean F1 {:.4} (σ {:.4}) over {} languages", report.mean_f1, report.std_f1, report.languages.len());
    out
}

pub fn report_tsv(report: &EvalReport, header: &str) -> String {
    let mut out = String::from(header);
    out.push_str("language\tprecision\trecall\tf1\tsupport\n");
    for l in &report.languages {
        let _ = writeln!(out, "{}\t{}\t{}\t{}\t{}", l.language, l.precision, l.recall, l.f1, l.support);
    }
    out
}

/// Fixed-width table of string cells; the first row is the header.
pub fn table(rows: &[Vec<String>]) -> String {
    let Some(first) = rows.first() else { return String::new() };
    let mut widths = vec![0; first.len()];
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        let cells: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use stagedistil_core::eval::LanguageScore;

    #[test]
    fn tsv_has_one_line_per_language() {
        let r = EvalReport {
            languages: vec![
                LanguageScore { language: "a".into(), precision: 1.0, recall: 0.5, f1: 2.0 / 3.0, support: 2 },
                LanguageScore { language: "b".into(), precision: 0.0, recall: 0.0, f1: 0.0, support: 1 },
            ],
            mean_f1: 1.0 / 3.0,
            std_f1: 1.0 / 3.0,
        };
        let tsv = report_tsv(&r, "");
        assert_eq!(tsv.lines().count(), 3);
        assert!(report_table("t", &r).contains("mean F1 0.3333"));
    }

    #[test]
    fn table_aligns_columns() {
        let t = table(&[vec!["a".into(), "bb".into()], vec!["ccc".into(), "d".into()]]);
        assert_eq!(t, "a    bb\n-------\nccc  d\n");
    }
}
