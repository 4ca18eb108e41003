//! Text and CSV renderings of evaluation results.

use std::fmt::Write;

use super::{EvalReport, RocCurve};

/// `1/100`-style label for a FAR target.
pub fn far_label(far: f64) -> String {
    format!("1/{}", (1.0 / far).round() as u64)
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

fn opt_pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), pct)
}

impl EvalReport {
    /// Human-readable table; rates are percentages with two decimals.
    pub fn to_text(&self) -> String {
        let mut head = vec!["ACC".to_string()];
        let mut row = vec![pct(self.accuracy)];
        for &(far, tar) in &self.tar_at_far {
            head.push(format!("TAR@FAR={}", far_label(far)));
            row.push(pct(tar));
        }
        head.push("EER".into());
        row.push(opt_pct(self.eer));
        head.push("J".into());
        row.push(self.fisher_j.map_or_else(|| "-".into(), |j| format!("{j:.4}")));

        let widths: Vec<usize> = head.iter().zip(&row).map(|(h, r)| h.len().max(r.len())).collect();
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        let mut s = String::new();
        writeln!(s, "{}", line(&head)).unwrap();
        writeln!(s, "{}", line(&row)).unwrap();
        writeln!(s).unwrap();
        writeln!(s, "recall (%): {}", self.recall.iter().map(|&r| pct(r)).collect::<Vec<_>>().join(" ")).unwrap();
        writeln!(s, "confusion (rows true, columns predicted):").unwrap();
        for r in &self.confusion {
            writeln!(s, "  {}", r.iter().map(|v| format!("{v:>6}")).collect::<String>()).unwrap();
        }
        s
    }

    /// One header line and one value line; rates as fractions.
    pub fn to_csv(&self) -> String {
        let mut head = vec!["accuracy".to_string()];
        let mut row = vec![self.accuracy.to_string()];
        for &(far, tar) in &self.tar_at_far {
            head.push(format!("tar_at_far_{far}"));
            row.push(tar.to_string());
        }
        head.push("eer".into());
        row.push(self.eer.map(|v| v.to_string()).unwrap_or_default());
        head.push("fisher_j".into());
        row.push(self.fisher_j.map(|v| v.to_string()).unwrap_or_default());
        for (c, r) in self.recall.iter().enumerate() {
            head.push(format!("recall_{c}"));
            row.push(r.to_string());
        }
        format!("{}\n{}\n", head.join(","), row.join(","))
    }
}

pub fn roc_csv(curve: &RocCurve) -> String {
    let mut s = String::from("threshold,far,tar\n");
    for p in &curve.points {
        writeln!(s, "{},{},{}", p.threshold, p.far, p.tar).unwrap();
    }
    s
}
