//! Summary tables, per-epoch curve files and best-run selection.

pub mod best;
pub mod curves;
pub mod table;

pub use best::{select_best, Candidate};
pub use curves::{emit_curves, Curves, CURVE_HEADER};
pub use table::{emit_table, format_loss, format_perplexity, SummaryTable, TableRow, TABLE_HEADER};
