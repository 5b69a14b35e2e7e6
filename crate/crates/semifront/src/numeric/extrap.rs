//! Endpoint extrapolation from geometric sample ladders.
//!
//! Several quantities in this crate are defined as limits toward a singular
//! endpoint (one-sided slopes, vanishing orders, improper integrals). The
//! helpers here turn three samples at offsets h, h/r, h/r^2 into a limit
//! estimate with an observed convergence order.

/// Result of a three-point geometric extrapolation.
#[derive(Debug, Clone, Copy)]
pub struct Extrapolated {
    /// Limit estimate.
    pub value: f64,
    /// Crude error estimate (magnitude of the applied correction).
    pub error: f64,
    /// Observed convergence order, when the samples behave like a power law.
    pub order: Option<f64>,
}

/// Extrapolate `v(h) -> v(0)` from samples `[v(h), v(h/r), v(h/r^2)]`
/// with ratio `r > 1`, assuming `v(h) = v0 + C h^p + ...`.
pub fn geometric_limit(r: f64, v: [f64; 3]) -> Extrapolated {
    let d1 = v[1] - v[0];
    let d2 = v[2] - v[1];
    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(1e-300);
    if d2.abs() <= 1e-15 * scale {
        // Sequence already settled to rounding level.
        return Extrapolated { value: v[2], error: d2.abs(), order: None };
    }
    let q = d1 / d2;
    if q > 1.01 {
        let corr = d2 / (q - 1.0);
        Extrapolated { value: v[2] + corr, error: corr.abs(), order: Some(q.ln() / r.ln()) }
    } else {
        // Not contracting: report the last sample without a correction.
        Extrapolated { value: v[2], error: d2.abs(), order: None }
    }
}

/// Observed order from two error samples at resolutions differing by `ratio`:
/// `log(e_coarse / e_fine) / log(ratio)`.
pub fn observed_order(e_coarse: f64, e_fine: f64, ratio: f64) -> Option<f64> {
    if e_coarse > 0.0 && e_fine > 0.0 && ratio > 1.0 {
        Some((e_coarse / e_fine).ln() / ratio.ln())
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_power_law_limit() {
        // v(h) = 3 + 2 h^1.5 sampled at h = 0.1, 0.05, 0.025.
        let v = |h: f64| 3.0 + 2.0 * h.powf(1.5);
        let e = geometric_limit(2.0, [v(0.1), v(0.05), v(0.025)]);
        assert!((e.value - 3.0).abs() < 1e-4);
        let p = e.order.unwrap();
        assert!((p - 1.5).abs() < 1e-6, "observed order {p}");
    }

    #[test]
    fn settled_sequence_passes_through() {
        let e = geometric_limit(2.0, [1.0, 1.0, 1.0]);
        assert_eq!(e.value, 1.0);
        assert!(e.order.is_none());
    }

    #[test]
    fn diverging_samples_get_no_correction() {
        let e = geometric_limit(2.0, [1.0, 2.0, 4.0]);
        assert_eq!(e.value, 4.0);
        assert!(e.order.is_none());
    }

    #[test]
    fn order_from_error_pairs() {
        let p = observed_order(1e-2, 2.5e-3, 2.0).unwrap();
        assert!((p - 2.0).abs() < 1e-12);
        assert!(observed_order(0.0, 1e-3, 2.0).is_none());
    }
}
