use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;

/// One combination of the four ablation axes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub dropout: f64,
}

impl GridPoint {
    pub fn config(&self, src_vocab: usize, tgt_vocab: usize, seed: u64, max_len: usize) -> ModelConfig {
        let mut c = ModelConfig::new(
            self.d_model,
            self.n_heads,
            self.n_layers,
            self.dropout,
            src_vocab,
            tgt_vocab,
            seed,
        );
        c.max_len = max_len;
        c
    }

    pub fn label(&self) -> String {
        format!("d{}_h{}_l{}_p{}", self.d_model, self.n_heads, self.n_layers, self.dropout)
    }

    fn key(&self) -> (usize, usize, usize, u64) {
        (self.d_model, self.n_heads, self.n_layers, self.dropout.to_bits())
    }
}

/// Settings for the grid points an override matches; unset axes match anything.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Override {
    pub d_model: Option<usize>,
    pub n_heads: Option<usize>,
    pub n_layers: Option<usize>,
    pub dropout: Option<f64>,
    #[serde(default)]
    pub exclude: bool,
    pub epoch_cap: Option<usize>,
    pub learning_rate: Option<f64>,
}

impl Override {
    pub fn matches(&self, p: &GridPoint) -> bool {
        self.d_model.is_none_or(|v| v == p.d_model)
            && self.n_heads.is_none_or(|v| v == p.n_heads)
            && self.n_layers.is_none_or(|v| v == p.n_layers)
            && self.dropout.is_none_or(|v| v == p.dropout)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub d_model: Vec<usize>,
    pub n_heads: Vec<usize>,
    pub n_layers: Vec<usize>,
    pub dropout: Vec<f64>,
    #[serde(default)]
    pub overrides: Vec<Override>,
}

impl SweepGrid {
    /// Later overrides win.
    pub fn epoch_cap_for(&self, p: &GridPoint, default: usize) -> usize {
        self.overrides
            .iter()
            .filter(|o| o.matches(p))
            .filter_map(|o| o.epoch_cap)
            .next_back()
            .unwrap_or(default)
    }

    pub fn learning_rate_for(&self, p: &GridPoint, default: f64) -> f64 {
        self.overrides
            .iter()
            .filter(|o| o.matches(p))
            .filter_map(|o| o.learning_rate)
            .next_back()
            .unwrap_or(default)
    }
}

fn admissible(p: &GridPoint) -> bool {
    p.d_model > 0
        && p.n_heads > 0
        && p.n_layers > 0
        && p.d_model.is_multiple_of(p.n_heads)
        && p.d_model.is_multiple_of(2)
        && (0.0..1.0).contains(&p.dropout)
}

/// Cartesian product minus inadmissible and excluded points, sorted by
/// (d_model, heads, layers, dropout) with duplicates removed.
pub fn expand_grid(grid: &SweepGrid) -> Result<Vec<GridPoint>> {
    let mut points = Vec::new();
    for &d_model in &grid.d_model {
        for &n_heads in &grid.n_heads {
            for &n_layers in &grid.n_layers {
                for &dropout in &grid.dropout {
                    let p = GridPoint {
                        d_model,
                        n_heads,
                        n_layers,
                        dropout,
                    };
                    if !admissible(&p) {
                        log::debug!("skipping inadmissible {}", p.label());
                        continue;
                    }
                    if grid.overrides.iter().any(|o| o.exclude && o.matches(&p)) {
                        continue;
                    }
                    points.push(p);
                }
            }
        }
    }
    points.sort_by(|a, b| {
        (a.d_model, a.n_heads, a.n_layers)
            .cmp(&(b.d_model, b.n_heads, b.n_layers))
            .then(a.dropout.total_cmp(&b.dropout))
    });
    points.dedup_by(|a, b| a.key() == b.key());
    if points.is_empty() {
        return Err(Error::Config("sweep grid expands to no valid configuration".into()));
    }
    Ok(points)
}

pub const DEFAULT_EPOCH_CAP: usize = 100;
pub const EXTENDED_EPOCH_CAP: usize = 400;
pub const DEFAULT_WALL_CLOCK_SECONDS: f64 = 8.0 * 3600.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub epoch_cap: usize,
    /// For the whole sweep.
    pub wall_clock_cap_seconds: f64,
    pub per_run_wall_cap_seconds: Option<f64>,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            epoch_cap: DEFAULT_EPOCH_CAP,
            wall_clock_cap_seconds: DEFAULT_WALL_CLOCK_SECONDS,
            per_run_wall_cap_seconds: None,
        }
    }
}

impl Budget {
    pub fn extended() -> Self {
        Budget {
            epoch_cap: EXTENDED_EPOCH_CAP,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epoch_cap == 0 {
            return Err(Error::Config("epoch cap must be positive".into()));
        }
        if self.wall_clock_cap_seconds.is_nan() || self.wall_clock_cap_seconds <= 0.0 {
            return Err(Error::Config("wall-clock cap must be positive".into()));
        }
        if let Some(c) = self.per_run_wall_cap_seconds {
            if c.is_nan() || c <= 0.0 {
                return Err(Error::Config("per-run wall-clock cap must be positive".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(d: &[usize], h: &[usize], l: &[usize], p: &[f64]) -> SweepGrid {
        SweepGrid {
            d_model: d.to_vec(),
            n_heads: h.to_vec(),
            n_layers: l.to_vec(),
            dropout: p.to_vec(),
            overrides: Vec::new(),
        }
    }

    #[test]
    fn two_dropouts_two_configs() {
        assert_eq!(expand_grid(&grid(&[16], &[4], &[2], &[0.1, 0.5])).unwrap().len(), 2);
    }

    #[test]
    fn heads_must_divide_model_size() {
        let pts = expand_grid(&grid(&[16], &[4, 32], &[2], &[0.1])).unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].n_heads, 4);
        assert!(matches!(expand_grid(&grid(&[16], &[32], &[2], &[0.1])), Err(Error::Config(_))));
    }

    #[test]
    fn documented_order_and_dedup() {
        let pts = expand_grid(&grid(&[32, 16, 32], &[8, 4], &[2], &[0.5])).unwrap();
        let labels: Vec<String> = pts.iter().map(GridPoint::label).collect();
        assert_eq!(labels, ["d16_h4_l2_p0.5", "d16_h8_l2_p0.5", "d32_h4_l2_p0.5", "d32_h8_l2_p0.5"]);
    }

    #[test]
    fn overrides_exclude_and_cap() {
        let mut g = grid(&[16, 32], &[4], &[2], &[0.1, 0.5]);
        g.overrides.push(Override { d_model: Some(32), dropout: Some(0.5), exclude: true, ..Default::default() });
        g.overrides.push(Override { d_model: Some(16), epoch_cap: Some(400), ..Default::default() });
        let pts = expand_grid(&g).unwrap();
        assert_eq!(pts.len(), 3);
        assert_eq!(g.epoch_cap_for(&pts[0], 100), 400);
        assert_eq!(g.epoch_cap_for(&pts[2], 100), 100);
    }

    #[test]
    fn budgets() {
        assert_eq!(Budget::default().epoch_cap, 100);
        assert_eq!(Budget::extended().epoch_cap, 400);
        assert_eq!(Budget::default().wall_clock_cap_seconds, 28_800.0);
        assert!(Budget { epoch_cap: 0, ..Default::default() }.validate().is_err());
    }
}
