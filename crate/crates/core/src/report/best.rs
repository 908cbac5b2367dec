use super::table::TableRow;
use crate::error::{Error, Result};
use crate::harness::{RunRecord, RunStatus};

/// What best-run selection needs to know about a row.
pub trait Candidate {
    fn is_completed(&self) -> bool;
    fn val_perplexity(&self) -> Option<f64>;
    /// Any unit, as long as it is consistent within one selection.
    fn size(&self) -> f64;
}

impl Candidate for RunRecord {
    fn is_completed(&self) -> bool {
        self.status == RunStatus::Completed
    }
    fn val_perplexity(&self) -> Option<f64> {
        self.val_perplexity
    }
    fn size(&self) -> f64 {
        self.param_count as f64
    }
}

impl Candidate for TableRow {
    fn is_completed(&self) -> bool {
        self.status == RunStatus::Completed
    }
    fn val_perplexity(&self) -> Option<f64> {
        self.val_perplexity
    }
    fn size(&self) -> f64 {
        self.param_count_millions
    }
}

/// The completed entry with the lowest validation perplexity; ties go to
/// fewer parameters, then to the earlier entry.
pub fn select_best<C: Candidate>(items: &[C]) -> Result<&C> {
    let mut best: Option<(&C, f64)> = None;
    for item in items.iter().filter(|c| c.is_completed()) {
        let Some(p) = item.val_perplexity().filter(|p| !p.is_nan()) else {
            continue;
        };
        let better = match best {
            None => true,
            Some((b, bp)) => p < bp || (p == bp && item.size() < b.size()),
        };
        if better {
            best = Some((item, p));
        }
    }
    best.map(|(c, _)| c)
        .ok_or_else(|| Error::EmptyResult("no completed run to select from".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(d: usize, ppl: f64, millions: f64, status: RunStatus) -> TableRow {
        TableRow {
            model_size: d,
            num_heads: 4,
            num_layers: 2,
            dropout: 0.1,
            time_min: 1.0,
            train_loss: Some(1.0),
            val_loss: Some(ppl.ln()),
            val_perplexity: Some(ppl),
            param_count_millions: millions,
            status,
        }
    }

    #[test]
    fn single_run_is_best() {
        let rows = [row(16, 9.0, 3.2, RunStatus::Completed)];
        assert_eq!(select_best(&rows).unwrap().model_size, 16);
    }

    #[test]
    fn ties_prefer_smaller_then_earlier() {
        let rows = [
            row(64, 4.0, 12.78, RunStatus::Completed),
            row(32, 4.0, 6.36, RunStatus::Completed),
            row(16, 4.0, 6.36, RunStatus::Completed),
        ];
        assert_eq!(select_best(&rows).unwrap().model_size, 32);
    }

    #[test]
    fn only_completed_runs_count() {
        let rows = [row(16, 1.0, 3.2, RunStatus::HaltedBudget), row(32, 5.0, 6.4, RunStatus::Completed)];
        assert_eq!(select_best(&rows).unwrap().model_size, 32);
        let none = [row(16, 1.0, 3.2, RunStatus::Running)];
        assert!(matches!(select_best(&none), Err(Error::EmptyResult(_))));
    }
}
