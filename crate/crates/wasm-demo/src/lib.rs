//! Browser demo: power estimates, hard-instance draws and the MI oracle,
//! each returning a JSON string.

use wasm_bindgen::prelude::*;

use disttest::hard_instances::{
    hellinger_pair, histogram_hard_pair, mi_per_bin, paninski_pair, product_yes_no_2d,
};
use disttest::harness::{evaluate_cell, GridCell};
use disttest::rng::rng_from_seed;
use disttest::testers::{Answer, Params};

fn to_js<T: serde::Serialize>(r: disttest::Result<T>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

/// YES/NO rates of `tester` on `family` over `trials` trials per side.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn power_cell(
    tester: &str,
    family: &str,
    n: usize,
    m: usize,
    k: usize,
    eps: f64,
    budget: f64,
    trials: usize,
    seed: u64,
) -> Result<String, JsError> {
    let cell = GridCell { n, m, k, eps };
    to_js(evaluate_cell(
        tester,
        family,
        &cell,
        0,
        &Params::default(),
        budget,
        trials,
        seed,
    ))
}

/// One draw from a hard family; `yes` picks the label.
#[wasm_bindgen]
pub fn hard_instance(
    family: &str,
    n: usize,
    m: usize,
    k: usize,
    eps: f64,
    yes: bool,
    seed: u64,
) -> Result<String, JsError> {
    let mut rng = rng_from_seed(seed);
    let which = if yes { Answer::Yes } else { Answer::No };
    match family {
        "paninski" => to_js(paninski_pair(n, eps, &mut rng).map(|(q, p)| {
            let p = if yes { q.clone() } else { p };
            serde_json::json!({ "family": "paninski", "measures": [p.probs(), q.probs()] })
        })),
        "product_2d" => to_js(product_yes_no_2d(n, m, eps, &mut rng, which)),
        "hellinger" => to_js(hellinger_pair(n, k, eps, &mut rng, which)),
        "histogram" => to_js(histogram_hard_pair(n, k, eps, &mut rng, which)),
        other => Err(JsError::new(&format!("unknown family '{other}'"))),
    }
}

/// Exact single-bin mutual information.
#[wasm_bindgen]
pub fn mutual_information(k: f64, n: f64, m: f64, eps: f64) -> Result<String, JsError> {
    to_js(mi_per_bin(k, n, m, eps, 1_000_000))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_cell_reports_rates() {
        let s = power_cell("identity_known", "paninski", 100, 1, 1, 0.5, 1.0, 10, 1).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["trials"], 10);
    }

    #[test]
    fn mi_zero_at_zero_eps() {
        let v: serde_json::Value =
            serde_json::from_str(&mutual_information(10.0, 10.0, 1.0, 0.0).unwrap()).unwrap();
        assert_eq!(v["value"].as_f64(), Some(0.0));
    }

    #[test]
    fn paninski_draw_has_two_measures() {
        let v: serde_json::Value =
            serde_json::from_str(&hard_instance("paninski", 8, 1, 1, 0.5, false, 3).unwrap())
                .unwrap();
        assert_eq!(v["measures"].as_array().unwrap().len(), 2);
    }
}
