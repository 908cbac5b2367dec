use nmt_core::Error;

pub const OK: i32 = 0;
pub const OTHER: i32 = 1;
pub const CONFIG: i32 = 3;
pub const DATA: i32 = 4;
pub const INTEGRITY: i32 = 5;
/// At least one run ended halted_divergent.
pub const DIVERGED: i32 = 6;
pub const INTERRUPTED: i32 = 130;

pub fn code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::Contract(_)
        | Error::Parameter(_)
        | Error::Shape(_)
        | Error::Dimension { .. } => CONFIG,
        Error::Data(_) | Error::DegenerateBatch(_) | Error::Lookup(_) | Error::EmptyResult(_) => DATA,
        Error::Integrity(_) | Error::Corruption { .. } => INTEGRITY,
        Error::Io { .. } | Error::InvalidCheck(_) => OTHER,
    }
}
