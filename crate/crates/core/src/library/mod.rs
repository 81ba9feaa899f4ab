//! Ready-made friction oscillators with closed-form reference quantities.

mod belt;
mod stick_slip;

pub use belt::{make_case_study_2, Belt3Params};
pub use stick_slip::{cs1_region, make_case_study_1, oracle_lie_cs1, oracle_sliding_cs1, Cs1Regime, StickSlip2Params};

use crate::error::{Error, Result};

pub(crate) fn require(ok: bool, what: &str, value: f64) -> Result<()> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{what} is out of range: {value}")))
    }
}
