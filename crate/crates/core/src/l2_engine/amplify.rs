/// Smallest odd `r` with `P[Bin(r, base_error) >= (r+1)/2] <= delta`.
///
/// `base_error` is the assumed error of one run. Targets at or above it
/// need no repetition.
pub fn majority_reps(delta: f64, base_error: f64) -> usize {
    assert!(delta > 0.0 && base_error > 0.0 && base_error < 0.5);
    if delta >= base_error {
        return 1;
    }
    let mut r = 1usize;
    while r < 10_001 {
        if binomial_upper_tail(r, r.div_ceil(2), base_error) <= delta {
            return r;
        }
        r += 2;
    }
    r
}

/// `P[Bin(n, p) >= k]`, summed in log space.
pub fn binomial_upper_tail(n: usize, k: usize, p: f64) -> f64 {
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let mut total = 0.0;
    for j in k..=n {
        let lc = crate::dist_core::ln_factorial(n as u64)
            - crate::dist_core::ln_factorial(j as u64)
            - crate::dist_core::ln_factorial((n - j) as u64);
        total += (lc + j as f64 * lp + (n - j) as f64 * lq).exp();
    }
    total.min(1.0)
}

pub(crate) fn majority(yes_votes: usize, reps: usize) -> bool {
    2 * yes_votes > reps
}
