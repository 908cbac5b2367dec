use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::MetricLine;
use crate::io::write_atomic;

pub const CURVE_HEADER: &str = "epoch,train,val";

/// The three figure panels for one run, as CSV text.
#[derive(Clone, Debug, PartialEq)]
pub struct Curves {
    pub label: String,
    pub accuracy: String,
    pub loss: String,
    pub perplexity: String,
    pub epochs: usize,
}

/// Values use the shortest exact representation, so the perplexity column
/// is `exp` of the loss column bit for bit.
pub fn emit_curves(stream: &[MetricLine], run_id: &str) -> Result<Curves> {
    let mut rows: Vec<&MetricLine> = stream.iter().filter(|m| m.run_id == run_id).collect();
    if rows.is_empty() {
        return Err(Error::Lookup(format!("no metrics for run {run_id}")));
    }
    rows.sort_by_key(|m| m.metrics.epoch);
    for (i, m) in rows.iter().enumerate() {
        if m.metrics.epoch != i + 1 {
            return Err(Error::Data(format!(
                "metrics for run {run_id} skip from epoch {} to {}",
                i,
                m.metrics.epoch
            )));
        }
    }
    let panel = |f: &dyn Fn(&MetricLine) -> (f64, f64)| {
        let mut s = format!("{CURVE_HEADER}\n");
        for m in &rows {
            let (t, v) = f(m);
            let _ = writeln!(s, "{},{t},{v}", m.metrics.epoch);
        }
        s
    };
    Ok(Curves {
        label: rows[0].label.clone(),
        accuracy: panel(&|m| (m.metrics.train_acc, m.metrics.val_acc)),
        loss: panel(&|m| (m.metrics.train_loss, m.metrics.val_loss)),
        perplexity: panel(&|m| (m.metrics.train_loss.exp(), m.metrics.val_perplexity)),
        epochs: rows.len(),
    })
}

impl Curves {
    /// Writes `<label>.accuracy.csv`, `<label>.loss.csv` and
    /// `<label>.perplexity.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut paths = Vec::new();
        for (panel, text) in [("accuracy", &self.accuracy), ("loss", &self.loss), ("perplexity", &self.perplexity)] {
            let path = dir.join(format!("{}.{panel}.csv", self.label));
            write_atomic(&path, text.as_bytes())?;
            paths.push(path);
        }
        Ok(paths)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::EpochMetrics;

    fn line(run: &str, epoch: usize, loss: f64) -> MetricLine {
        MetricLine {
            run_id: run.into(),
            label: "d16_h4_l2_p0.1".into(),
            metrics: EpochMetrics {
                epoch,
                train_loss: loss + 0.1,
                val_loss: loss,
                train_acc: 0.5,
                val_acc: 0.4,
                val_perplexity: loss.exp(),
                wall_seconds: 1.0,
            },
        }
    }

    #[test]
    fn three_epochs_three_rows() {
        let stream = vec![line("a", 1, 3.0), line("b", 1, 9.0), line("a", 2, 2.5), line("a", 3, 2.2)];
        let c = emit_curves(&stream, "a").unwrap();
        for text in [&c.accuracy, &c.loss, &c.perplexity] {
            assert_eq!(text.lines().count(), 4);
            assert!(text.starts_with("epoch,train,val\n"));
        }
        for (l, p) in c.loss.lines().skip(1).zip(c.perplexity.lines().skip(1)) {
            let lv: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            let pv: Vec<f64> = p.split(',').map(|x| x.parse().unwrap()).collect();
            assert_eq!(pv[1], lv[1].exp());
            assert_eq!(pv[2], lv[2].exp());
        }
        assert_eq!(c.label, "d16_h4_l2_p0.1");
    }

    #[test]
    fn unknown_run_is_lookup_error() {
        assert!(matches!(emit_curves(&[line("a", 1, 1.0)], "zzz"), Err(Error::Lookup(_))));
    }

    #[test]
    fn gaps_are_rejected() {
        assert!(emit_curves(&[line("a", 1, 1.0), line("a", 3, 1.0)], "a").is_err());
    }
}
