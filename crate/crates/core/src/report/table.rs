use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::harness::{RunRecord, RunStatus};

pub const TABLE_HEADER: &str =
    "model_size,num_heads,num_layers,dropout,time_min,train_loss,val_loss,val_perplexity,param_count_millions,status";

/// Perplexities at or above this are printed in scientific notation.
pub const SCIENTIFIC_THRESHOLD: f64 = 1000.0;

#[derive(Clone, Debug, PartialEq)]
pub struct TableRow {
    pub model_size: usize,
    pub num_heads: usize,
    pub num_layers: usize,
    pub dropout: f64,
    pub time_min: f64,
    pub train_loss: Option<f64>,
    pub val_loss: Option<f64>,
    pub val_perplexity: Option<f64>,
    pub param_count_millions: f64,
    pub status: RunStatus,
}

impl TableRow {
    pub fn from_record(r: &RunRecord) -> Self {
        TableRow {
            model_size: r.config.d_model,
            num_heads: r.config.n_heads,
            num_layers: r.config.n_layers,
            dropout: r.config.dropout,
            time_min: r.elapsed_minutes,
            train_loss: r.train_loss,
            val_loss: r.val_loss,
            val_perplexity: r.val_perplexity,
            param_count_millions: r.param_count as f64 / 1e6,
            status: r.status,
        }
    }

    fn cells(&self) -> [String; 10] {
        let opt = |v: Option<f64>, f: fn(f64) -> String| v.map(f).unwrap_or_default();
        [
            self.model_size.to_string(),
            self.num_heads.to_string(),
            self.num_layers.to_string(),
            self.dropout.to_string(),
            format!("{:.1}", self.time_min),
            opt(self.train_loss, format_loss),
            opt(self.val_loss, format_loss),
            opt(self.val_perplexity, format_perplexity),
            format!("{:.2}", self.param_count_millions),
            self.status.as_str().to_string(),
        ]
    }
}

fn non_finite(v: f64) -> Option<String> {
    if v.is_nan() {
        Some("NaN".into())
    } else if v.is_infinite() {
        Some(if v > 0.0 { "inf" } else { "-inf" }.into())
    } else {
        None
    }
}

pub fn format_loss(v: f64) -> String {
    non_finite(v).unwrap_or_else(|| format!("{v:.4}"))
}

/// Four decimals below the threshold, else two significant digits as `5.2e+04`.
pub fn format_perplexity(v: f64) -> String {
    if let Some(s) = non_finite(v) {
        return s;
    }
    if v.abs() < SCIENTIFIC_THRESHOLD {
        return format!("{v:.4}");
    }
    let mut exp = v.abs().log10().floor() as i32;
    let mut mantissa = v / 10f64.powi(exp);
    if (mantissa.abs() * 10.0).round() >= 100.0 {
        exp += 1;
        mantissa /= 10.0;
    }
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa:.1}e{sign}{:02}", exp.abs())
}

fn parse_float(s: &str) -> Option<f64> {
    match s {
        "NaN" => Some(f64::NAN),
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => s.parse().ok(),
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SummaryTable {
    pub rows: Vec<TableRow>,
}

impl SummaryTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(TABLE_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.cells().join(","));
            s.push('\n');
        }
        s
    }

    /// Right-aligned columns separated by two spaces.
    pub fn to_text(&self) -> String {
        let header: Vec<String> = TABLE_HEADER.split(',').map(str::to_string).collect();
        let body: Vec<[String; 10]> = self.rows.iter().map(TableRow::cells).collect();
        let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
        for row in &body {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        let mut line = |cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c:>w$}"))
                .collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(&header);
        for row in &body {
            line(row);
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == TABLE_HEADER => {}
            other => return Err(Error::Data(format!("unexpected table header {other:?}"))),
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let bad = |what: &str| Error::Data(format!("table row {}: bad {what} in {line:?}", i + 1));
            let c: Vec<&str> = line.split(',').map(str::trim).collect();
            if c.len() != 10 {
                return Err(bad("column count"));
            }
            let opt = |s: &str, what: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    parse_float(s).map(Some).ok_or_else(|| bad(what))
                }
            };
            rows.push(TableRow {
                model_size: c[0].parse().map_err(|_| bad("model_size"))?,
                num_heads: c[1].parse().map_err(|_| bad("num_heads"))?,
                num_layers: c[2].parse().map_err(|_| bad("num_layers"))?,
                dropout: c[3].parse().map_err(|_| bad("dropout"))?,
                time_min: c[4].parse().map_err(|_| bad("time_min"))?,
                train_loss: opt(c[5], "train_loss")?,
                val_loss: opt(c[6], "val_loss")?,
                val_perplexity: opt(c[7], "val_perplexity")?,
                param_count_millions: c[8].parse().map_err(|_| bad("param_count_millions"))?,
                status: RunStatus::parse(c[9]).ok_or_else(|| bad("status"))?,
            });
        }
        Ok(SummaryTable { rows })
    }
}

/// One row per run in registry order.
pub fn emit_table(records: &[RunRecord]) -> SummaryTable {
    SummaryTable {
        rows: records.iter().map(TableRow::from_record).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perplexity_formats() {
        assert_eq!(format_perplexity(52000.0), "5.2e+04");
        assert_eq!(format_perplexity(10.68055), "10.6806");
        assert_eq!(format_perplexity(1000.0), "1.0e+03");
        assert_eq!(format_perplexity(999.99), "999.9900");
        assert_eq!(format_perplexity(2.1e6), "2.1e+06");
        assert_eq!(format_perplexity(99_960.0), "1.0e+05");
        assert_eq!(format_perplexity(f64::INFINITY), "inf");
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = emit_table(&[]);
        assert_eq!(t.to_csv(), format!("{TABLE_HEADER}\n"));
        assert_eq!(t.to_text().lines().count(), 1);
    }

    fn row_strategy() -> impl Strategy<Value = TableRow> {
        (
            prop::sample::select(vec![16usize, 32, 64, 128, 256, 512]),
            prop::sample::select(vec![4usize, 8, 16]),
            1usize..17,
            prop::sample::select(vec![0.0, 0.1, 0.3, 0.5]),
            0.0f64..1000.0,
            proptest::option::of(0.0f64..20.0),
            0.0f64..20.0,
            0.0f64..200.0,
        )
            .prop_map(|(d, h, l, p, t, tl, vl, m)| TableRow {
                model_size: d,
                num_heads: h,
                num_layers: l,
                dropout: p,
                time_min: t,
                train_loss: tl,
                val_loss: Some(vl),
                val_perplexity: Some(vl.exp()),
                param_count_millions: m,
                status: RunStatus::Completed,
            })
    }

    proptest! {
        #[test]
        fn csv_roundtrip_within_format_precision(rows in proptest::collection::vec(row_strategy(), 0..8)) {
            let table = SummaryTable { rows };
            let back = SummaryTable::parse_csv(&table.to_csv()).unwrap();
            prop_assert_eq!(back.rows.len(), table.rows.len());
            for (a, b) in table.rows.iter().zip(&back.rows) {
                prop_assert_eq!((a.model_size, a.num_heads, a.num_layers), (b.model_size, b.num_heads, b.num_layers));
                prop_assert_eq!(a.dropout, b.dropout);
                prop_assert!((a.time_min - b.time_min).abs() <= 0.05 + 1e-9);
                prop_assert_eq!(a.train_loss.is_some(), b.train_loss.is_some());
                if let (Some(x), Some(y)) = (a.train_loss, b.train_loss) {
                    prop_assert!((x - y).abs() <= 5e-5 + 1e-12);
                }
                prop_assert!((a.val_loss.unwrap() - b.val_loss.unwrap()).abs() <= 5e-5 + 1e-12);
                let (p, q) = (a.val_perplexity.unwrap(), b.val_perplexity.unwrap());
                let tol = if p >= SCIENTIFIC_THRESHOLD { 0.05 * p } else { 5e-5 + 1e-12 };
                prop_assert!((p - q).abs() <= tol, "{} vs {}", p, q);
                prop_assert!((a.param_count_millions - b.param_count_millions).abs() <= 5e-3 + 1e-12);
                prop_assert_eq!(a.status, b.status);
            }
        }
    }
}
