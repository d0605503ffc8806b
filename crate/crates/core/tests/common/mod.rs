//! Reference computations shared by several test targets.

/// Smallest area (up to the factor π) of an ellipse covering
/// `{x : ‖x‖ ≤ 1, lo ≤ x_1 ≤ hi}`, by grid search with refinement.
///
/// The optimum is unique, so it inherits the mirror symmetry in `x_2`: an
/// axis-aligned ellipse `(x_1−ξ)²/a + x_2²/b ≤ 1`. For each `(ξ, a)` the
/// smallest feasible `b` follows from the circular arc. The search runs over
/// `ξ` and `log(a / reach²)`, where `reach` is the farthest slab face from
/// `ξ`, so narrow slabs are resolved as well as wide ones.
pub fn min_cover_area(lo: f64, hi: f64) -> f64 {
    let samples: Vec<f64> = (0..=800).map(|i| lo + (hi - lo) * i as f64 / 800.0).collect();
    let area = |xi: f64, log_s: f64| -> f64 {
        let reach = (xi - lo).max(hi - xi);
        let a = reach * reach * log_s.exp();
        let b = samples
            .iter()
            .map(|&x| (1.0 - x * x).max(0.0) / (1.0 - (x - xi).powi(2) / a))
            .fold(0.0, f64::max);
        (a * b).sqrt()
    };
    let (mut xi_lo, mut xi_hi) = (lo, hi);
    let (mut s_lo, mut s_hi) = (1e-9f64, 12.0f64);
    let mut best = (f64::INFINITY, lo, 1.0);
    for _ in 0..12 {
        for i in 0..=40 {
            let xi = xi_lo + (xi_hi - xi_lo) * i as f64 / 40.0;
            for j in 0..=40 {
                let s = s_lo + (s_hi - s_lo) * j as f64 / 40.0;
                let v = area(xi, s);
                if v < best.0 {
                    best = (v, xi, s);
                }
            }
        }
        let (sx, ss) = ((xi_hi - xi_lo) / 8.0, (s_hi - s_lo) / 8.0);
        xi_lo = (best.1 - sx).max(lo);
        xi_hi = (best.1 + sx).min(hi);
        s_lo = (best.2 - ss).max(1e-12);
        s_hi = best.2 + ss;
    }
    best.0
}
