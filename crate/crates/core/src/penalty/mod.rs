//! Penalties for model selection: the Fisher-equation penalty used by
//! LinSelect and segmentation, complexity weights, and classical shapes.

mod classical;
mod equation;
pub mod special;

pub use classical::{classical_penalty, PenaltyArgs, PenaltyKind};
pub use equation::{
    expected_positive_part, linselect_penalty, pen_delta_cached, pen_delta_equation, pen_delta_solve,
    seg_pen_solve, PenaltySpec, SegPenaltySpec, LINSELECT_MULTIPLIER,
};
pub use special::{fisher_survival, log_binomial};

use crate::error::{Error, Result};

/// Complexity weight of a coordinate-sparse space: `ln C(p, dim) + ln dim`.
pub fn delta_coordinate(p: usize, dim: usize) -> Result<f64> {
    if dim == 0 || dim > p {
        return Err(Error::Domain(format!("coordinate weight needs 1 <= dim <= p, got dim={dim}, p={p}")));
    }
    Ok(log_binomial(p as u64, dim as u64)? + (dim as f64).ln())
}

/// Complexity weight of a group-sparse space: `ln |K| + ln C(M, |K|)`.
pub fn delta_group(m: usize, kcard: usize) -> Result<f64> {
    if kcard == 0 || kcard > m {
        return Err(Error::Domain(format!("group weight needs 1 <= |K| <= M, got |K|={kcard}, M={m}")));
    }
    Ok((kcard as f64).ln() + log_binomial(m as u64, kcard as u64)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_by_hand() {
        assert!((delta_coordinate(37, 1).unwrap() - 37f64.ln()).abs() < 1e-15);
        assert!((delta_coordinate(10, 2).unwrap() - (45f64.ln() + 2f64.ln())).abs() < 1e-14);
        assert!(delta_coordinate(10, 0).is_err());
        assert!((delta_group(9, 1).unwrap() - 9f64.ln()).abs() < 1e-15);
        assert!((delta_group(6, 2).unwrap() - (2f64.ln() + 15f64.ln())).abs() < 1e-14);
        assert!(delta_group(3, 4).is_err());
    }
}
