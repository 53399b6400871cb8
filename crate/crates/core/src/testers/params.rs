use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::l2_engine::L2Constants;

/// Every constant the analysis leaves inside a big-O. Defaults come from
/// the calibration run stored in `constants.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default = "Params::uncalibrated")]
pub struct Params {
    pub l2: L2Constants,
    /// Target error of a top-level tester call.
    pub fail_prob: f64,

    /// Conditional radius is `eps / (inst_eps_split * levels * q(S_j))`.
    pub inst_eps_split: f64,
    /// Mass-check accuracy is `eps / (inst_mass_tol * levels)`.
    pub inst_mass_tol: f64,
    /// Mass check accepts when `|p(S_j) - q(S_j)|` is within this many accuracies.
    pub inst_mass_window: f64,

    /// The constant C of the adaptive closeness tester.
    pub adapt_c: f64,
    /// Categorization draws `adapt_cat_c * m * ln(n)^adapt_cat_exp` from q.
    pub adapt_cat_c: f64,
    pub adapt_cat_exp: f64,
    /// A round for a given m may spend `adapt_allow_c * m * ln(n/eps)^adapt_allow_exp`.
    pub adapt_allow_c: f64,
    pub adapt_allow_exp: f64,

    /// Category-marginal check of the Hellinger tester runs at `eps / hell_marg_c`.
    pub hell_marg_c: f64,
    /// Categorization draws `hell_cat_c * m * ln(m)` from q.
    pub hell_cat_c: f64,
    /// Per-category share is `eps / (hell_split_c * categories)`.
    pub hell_split_c: f64,
    /// Padding bins per original bin.
    pub hell_pad: f64,

    /// The constant C of the query-model collection tester.
    pub coll_c: f64,

    /// Norm bound handed to the l2 stage of the histogram tester is `hist_b_c * sqrt(k/(n m))`.
    pub hist_b_c: f64,
}

impl Default for Params {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_CONSTANTS).expect("bundled constants parse")
    }
}

/// Written by `disttest calibrate`.
pub const DEFAULT_CONSTANTS: &str = include_str!("../../constants.json");

impl Params {
    /// Factory values used before any calibration.
    pub fn uncalibrated() -> Self {
        Self {
            l2: L2Constants::default(),
            fail_prob: 1.0 / 3.0,
            inst_eps_split: 2.0,
            inst_mass_tol: 10.0,
            inst_mass_window: 2.0,
            adapt_c: 4.0,
            adapt_cat_c: 1.0,
            adapt_cat_exp: 2.0,
            adapt_allow_c: 1.0,
            adapt_allow_exp: 3.0,
            hell_marg_c: 4.0,
            hell_cat_c: 1.0,
            hell_split_c: 2.0,
            hell_pad: 1e4,
            coll_c: 5.0,
            hist_b_c: 2.0,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("params serialize")
    }

    /// Scales the l2 sample constant, and with it every l2 stage budget.
    pub fn with_budget_multiplier(&self, mult: f64) -> Self {
        let mut p = self.clone();
        p.l2.c_sample *= mult;
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_constants_round_trip() {
        let p = Params::default();
        assert_eq!(Params::from_json(&p.to_json()).unwrap(), p);
    }

    #[test]
    fn missing_fields_fall_back() {
        let p = Params::from_json(r#"{"coll_c": 3.0}"#).unwrap();
        assert_eq!(p.coll_c, 3.0);
        assert_eq!(p.fail_prob, Params::uncalibrated().fail_prob);
    }
}
