//! Scalar coefficient fields on the density interval [0, rho_bar].
//!
//! A `ScalarField` represents one of the model coefficients (diffusivity,
//! source, or advection speed) as a closed family with analytic
//! derivatives and antiderivatives where they are elementary, and cached
//! numerical fallbacks otherwise. Each family also knows its local
//! power-law behaviour near the endpoints, which drives front
//! classification without finite-difference guesswork; tabulated fields
//! fall back to declared or numerically estimated orders.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::numeric::extrap::geometric_limit;
use crate::numeric::pchip::MonotoneCubic;

/// Supported functional families.
#[derive(Debug, Clone)]
pub enum FieldKind {
    /// `value`
    Constant { value: f64 },
    /// `intercept + slope * rho`
    Linear { intercept: f64, slope: f64 },
    /// `scale * (rho_bar - rho)^exponent`
    PowerTop { scale: f64, exponent: f64 },
    /// `scale * rho^exponent`
    PowerZero { scale: f64, exponent: f64 },
    /// `scale * rho^exp_zero * (rho_bar - rho)^exp_top`
    Product { scale: f64, exp_zero: f64, exp_top: f64 },
    /// `scale * sign(pivot - rho) * |pivot - rho|^exponent`
    /// (positive below the pivot, negative above)
    SignedPower { scale: f64, exponent: f64, pivot: f64 },
    /// Monotone-cubic interpolation of tabulated samples.
    Table { interp: MonotoneCubic },
    /// Linear combination `sum coeff_i * field_i` on a shared interval.
    Sum { terms: Vec<(f64, ScalarField)> },
    /// `sign * inner(top - rho)` where `top` is the inner field's interval
    /// top; the reflected field lives on `[0, top - cut]`.
    Reflected { inner: Box<ScalarField>, top: f64, negate: bool },
    /// The same values as `inner`, on the shorter interval `[0, rho_bar]`
    /// (used to cut a model at an interior source zero).
    Restricted { inner: Box<ScalarField> },
}

/// One scalar coefficient on `[0, rho_bar]`.
#[derive(Debug, Clone)]
pub struct ScalarField {
    kind: FieldKind,
    rho_bar: f64,
    /// Vanishing order at the top declared by the input file, for families
    /// (tables) whose order cannot be derived symbolically.
    declared_top_order: Option<f64>,
    cum: OnceLock<MonotoneCubic>,
}

/// Local power-law behaviour `f(x) ~ scale * |at - x|^order` near a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalOrder {
    pub order: f64,
    pub scale: f64,
}

impl LocalOrder {
    fn value(v: f64) -> Option<LocalOrder> {
        if v == 0.0 {
            Some(LocalOrder { order: f64::INFINITY, scale: 0.0 })
        } else {
            Some(LocalOrder { order: 0.0, scale: v })
        }
    }
}

impl ScalarField {
    fn from_kind(kind: FieldKind, rho_bar: f64) -> Self {
        ScalarField { kind, rho_bar, declared_top_order: None, cum: OnceLock::new() }
    }

    pub fn constant(value: f64, rho_bar: f64) -> Self {
        Self::from_kind(FieldKind::Constant { value }, rho_bar)
    }

    pub fn linear(intercept: f64, slope: f64, rho_bar: f64) -> Self {
        Self::from_kind(FieldKind::Linear { intercept, slope }, rho_bar)
    }

    pub fn power_top(scale: f64, exponent: f64, rho_bar: f64) -> Self {
        Self::from_kind(FieldKind::PowerTop { scale, exponent }, rho_bar)
    }

    pub fn power_zero(scale: f64, exponent: f64, rho_bar: f64) -> Self {
        Self::from_kind(FieldKind::PowerZero { scale, exponent }, rho_bar)
    }

    pub fn product(scale: f64, exp_zero: f64, exp_top: f64, rho_bar: f64) -> Self {
        Self::from_kind(FieldKind::Product { scale, exp_zero, exp_top }, rho_bar)
    }

    pub fn signed_power(scale: f64, exponent: f64, pivot: f64, rho_bar: f64) -> Self {
        Self::from_kind(FieldKind::SignedPower { scale, exponent, pivot }, rho_bar)
    }

    pub fn table(rho: Vec<f64>, value: Vec<f64>, rho_bar: f64) -> Result<Self> {
        let interp = MonotoneCubic::new(rho, value)
            .map_err(|e| Error::pre(format!("bad table field: {e}")))?;
        Ok(Self::from_kind(FieldKind::Table { interp }, rho_bar))
    }

    pub fn sum(terms: Vec<(f64, ScalarField)>, rho_bar: f64) -> Self {
        Self::from_kind(FieldKind::Sum { terms }, rho_bar)
    }

    /// Reflect about the interval top and truncate: the result lives on
    /// `[0, inner.rho_bar() - cut]` and evaluates to
    /// `sign * inner(inner.rho_bar() - rho)`.
    pub fn reflected(inner: ScalarField, cut: f64, negate: bool) -> Self {
        let top = inner.rho_bar;
        Self::from_kind(
            FieldKind::Reflected { inner: Box::new(inner), top, negate },
            top - cut,
        )
    }

    /// Keep the values of `inner` but shorten the interval to
    /// `[0, new_top]`.
    pub fn restricted(inner: ScalarField, new_top: f64) -> Self {
        Self::from_kind(FieldKind::Restricted { inner: Box::new(inner) }, new_top)
    }

    /// Attach a declared vanishing order at the top (used by table fields).
    pub fn with_declared_top_order(mut self, order: Option<f64>) -> Self {
        self.declared_top_order = order;
        self
    }

    pub fn rho_bar(&self) -> f64 {
        self.rho_bar
    }

    pub fn declared_top_order(&self) -> Option<f64> {
        self.declared_top_order
    }

    /// Evaluate the field. Power laws clamp the base at zero so that
    /// rounding just outside the interval cannot produce NaN.
    pub fn eval(&self, rho: f64) -> f64 {
        match &self.kind {
            FieldKind::Constant { value } => *value,
            FieldKind::Linear { intercept, slope } => intercept + slope * rho,
            FieldKind::PowerTop { scale, exponent } => {
                scale * pow_clamped(self.rho_bar - rho, *exponent)
            }
            FieldKind::PowerZero { scale, exponent } => scale * pow_clamped(rho, *exponent),
            FieldKind::Product { scale, exp_zero, exp_top } => {
                scale * pow_clamped(rho, *exp_zero) * pow_clamped(self.rho_bar - rho, *exp_top)
            }
            FieldKind::SignedPower { scale, exponent, pivot } => {
                let s = pivot - rho;
                scale * s.signum() * s.abs().powf(*exponent)
            }
            FieldKind::Table { interp } => interp.eval(rho),
            FieldKind::Sum { terms } => terms.iter().map(|(c, f)| c * f.eval(rho)).sum(),
            FieldKind::Reflected { inner, top, negate } => {
                let v = inner.eval(top - rho);
                if *negate {
                    -v
                } else {
                    v
                }
            }
            FieldKind::Restricted { inner } => inner.eval(rho),
        }
    }

    /// Evaluate and reject non-finite values with a labelled error.
    pub fn checked_eval(&self, rho: f64, label: &str) -> Result<f64> {
        let v = self.eval(rho);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Evaluation { field: label.to_string(), rho })
        }
    }

    /// Pointwise derivative. May be infinite at a singular endpoint of a
    /// fractional power law; callers that probe endpoint slopes handle that.
    pub fn deriv(&self, rho: f64) -> f64 {
        match &self.kind {
            FieldKind::Constant { .. } => 0.0,
            FieldKind::Linear { slope, .. } => *slope,
            FieldKind::PowerTop { scale, exponent } => {
                -scale * exponent * pow_clamped(self.rho_bar - rho, exponent - 1.0)
            }
            FieldKind::PowerZero { scale, exponent } => {
                scale * exponent * pow_clamped(rho, exponent - 1.0)
            }
            FieldKind::Product { scale, exp_zero, exp_top } => {
                let a = pow_clamped(rho, *exp_zero);
                let b = pow_clamped(self.rho_bar - rho, *exp_top);
                let da = exp_zero * pow_clamped(rho, exp_zero - 1.0);
                let db = -exp_top * pow_clamped(self.rho_bar - rho, exp_top - 1.0);
                scale * (da * b + a * db)
            }
            FieldKind::SignedPower { scale, exponent, pivot } => {
                -scale * exponent * (pivot - rho).abs().powf(exponent - 1.0)
            }
            FieldKind::Table { interp } => interp.deriv(rho),
            FieldKind::Sum { terms } => terms.iter().map(|(c, f)| c * f.deriv(rho)).sum(),
            FieldKind::Reflected { inner, top, negate } => {
                let v = -inner.deriv(top - rho);
                if *negate {
                    -v
                } else {
                    v
                }
            }
            FieldKind::Restricted { inner } => inner.deriv(rho),
        }
    }

    /// Antiderivative with value 0 at rho = 0, analytic when elementary.
    pub fn antideriv0(&self, rho: f64) -> f64 {
        match &self.kind {
            FieldKind::Constant { value } => value * rho,
            FieldKind::Linear { intercept, slope } => {
                intercept * rho + 0.5 * slope * rho * rho
            }
            FieldKind::PowerTop { scale, exponent } => {
                let p = exponent + 1.0;
                scale / p * (pow_clamped(self.rho_bar, p) - pow_clamped(self.rho_bar - rho, p))
            }
            FieldKind::PowerZero { scale, exponent } => {
                let p = exponent + 1.0;
                scale / p * pow_clamped(rho, p)
            }
            FieldKind::SignedPower { scale, exponent, pivot } => {
                // Antiderivative of sign(pivot-x)|pivot-x|^e is
                // -|pivot-x|^{e+1}/(e+1); anchor it at 0.
                let p = exponent + 1.0;
                let prim = |x: f64| -(pivot - x).abs().powf(p) * scale / p;
                prim(rho) - prim(0.0)
            }
            FieldKind::Sum { terms } => terms.iter().map(|(c, f)| c * f.antideriv0(rho)).sum(),
            FieldKind::Reflected { inner, top, negate } => {
                let v = inner.antideriv0(*top) - inner.antideriv0(top - rho);
                if *negate {
                    -v
                } else {
                    v
                }
            }
            FieldKind::Restricted { inner } => inner.antideriv0(rho),
            FieldKind::Product { .. } | FieldKind::Table { .. } => self.cumulative().eval(rho),
        }
    }

    /// Cached dense cumulative integral for families without an elementary
    /// antiderivative (composite Simpson on 2048 uniform cells, then
    /// monotone-cubic interpolation; error is O(h^4) ~ 1e-13 here).
    fn cumulative(&self) -> &MonotoneCubic {
        self.cum.get_or_init(|| {
            let n = 2048usize;
            let h = self.rho_bar / n as f64;
            let mut xs = Vec::with_capacity(n + 1);
            let mut cs = Vec::with_capacity(n + 1);
            let mut acc = 0.0;
            xs.push(0.0);
            cs.push(0.0);
            let mut fa = self.eval(0.0);
            for i in 0..n {
                let a = i as f64 * h;
                let b = a + h;
                let fm = self.eval(a + 0.5 * h);
                let fb = self.eval(b);
                acc += h / 6.0 * (fa + 4.0 * fm + fb);
                xs.push(b);
                cs.push(acc);
                fa = fb;
            }
            MonotoneCubic::new(xs, cs).expect("uniform cumulative grid is valid")
        })
    }

    /// Local power-law behaviour of the field as `x -> at` from the side
    /// given by `from_below`. `None` means the family cannot say (tables,
    /// cancelling sums).
    pub fn local_order(&self, at: f64, from_below: bool) -> Option<LocalOrder> {
        let tol = 1e-12 * self.rho_bar.max(1.0);
        match &self.kind {
            FieldKind::Constant { value } => LocalOrder::value(*value),
            FieldKind::Linear { intercept, slope } => {
                let v = intercept + slope * at;
                if v.abs() > tol * slope.abs().max(1.0) {
                    LocalOrder::value(v)
                } else if *slope == 0.0 {
                    LocalOrder::value(0.0)
                } else {
                    let scale = if from_below { -slope } else { *slope };
                    Some(LocalOrder { order: 1.0, scale })
                }
            }
            FieldKind::PowerTop { scale, exponent } => {
                if (at - self.rho_bar).abs() <= tol {
                    Some(LocalOrder { order: *exponent, scale: *scale })
                } else {
                    LocalOrder::value(self.eval(at))
                }
            }
            FieldKind::PowerZero { scale, exponent } => {
                if at.abs() <= tol {
                    Some(LocalOrder { order: *exponent, scale: *scale })
                } else {
                    LocalOrder::value(self.eval(at))
                }
            }
            FieldKind::Product { scale, exp_zero, exp_top } => {
                if at.abs() <= tol {
                    Some(LocalOrder {
                        order: *exp_zero,
                        scale: scale * pow_clamped(self.rho_bar, *exp_top),
                    })
                } else if (at - self.rho_bar).abs() <= tol {
                    Some(LocalOrder {
                        order: *exp_top,
                        scale: scale * pow_clamped(self.rho_bar, *exp_zero),
                    })
                } else {
                    LocalOrder::value(self.eval(at))
                }
            }
            FieldKind::SignedPower { scale, exponent, pivot } => {
                if (at - pivot).abs() <= tol {
                    let s = if from_below { *scale } else { -*scale };
                    Some(LocalOrder { order: *exponent, scale: s })
                } else {
                    LocalOrder::value(self.eval(at))
                }
            }
            FieldKind::Table { .. } => None,
            FieldKind::Sum { terms } => {
                let mut parts = Vec::with_capacity(terms.len());
                for (c, f) in terms {
                    if *c == 0.0 {
                        continue;
                    }
                    parts.push((*c, f.local_order(at, from_below)?));
                }
                if parts.is_empty() {
                    return LocalOrder::value(0.0);
                }
                let min_ord = parts
                    .iter()
                    .map(|(_, o)| o.order)
                    .fold(f64::INFINITY, f64::min);
                if min_ord.is_infinite() {
                    return LocalOrder::value(0.0);
                }
                let mut scale = 0.0;
                let mut mass = 0.0;
                for (c, o) in &parts {
                    if o.order <= min_ord + 1e-12 {
                        scale += c * o.scale;
                        mass += (c * o.scale).abs();
                    }
                }
                if scale.abs() <= 1e-12 * mass {
                    None // leading terms cancel; symbolic order unknown
                } else {
                    Some(LocalOrder { order: min_ord, scale })
                }
            }
            FieldKind::Reflected { inner, top, negate } => {
                let mut o = inner.local_order(top - at, !from_below)?;
                if *negate {
                    o.scale = -o.scale;
                }
                Some(o)
            }
            FieldKind::Restricted { inner } => inner.local_order(at, from_below),
        }
    }

    /// Behaviour `f ~ scale * (rho_bar - rho)^order` as rho -> rho_bar-.
    /// Falls back to the declared order (scale fitted numerically) for
    /// families without symbolic structure.
    pub fn order_at_top(&self) -> Option<LocalOrder> {
        if let Some(o) = self.local_order(self.rho_bar, true) {
            return Some(o);
        }
        let order = self.declared_top_order?;
        if order.is_infinite() {
            return Some(LocalOrder { order, scale: 0.0 });
        }
        // Fit the scale at two moderate offsets and average. The offsets
        // stay well above typical table spacing, where interpolation error
        // would otherwise swamp a vanishing value; expect a few percent of
        // fitting error for coarse tables.
        let mut acc = 0.0;
        for s in [5e-2, 2.5e-2] {
            let off = s * self.rho_bar;
            acc += self.eval(self.rho_bar - off) / off.powf(order);
        }
        Some(LocalOrder { order, scale: 0.5 * acc })
    }

    /// Behaviour `f ~ scale * rho^order` as rho -> 0+.
    pub fn order_at_zero(&self) -> Option<LocalOrder> {
        self.local_order(0.0, false)
    }

    /// Finite-difference estimate of the vanishing order at the top, from
    /// value ratios on a geometric offset ladder. Returns `None` when the
    /// field does not look like a power law there.
    pub fn numeric_order_at_top(&self) -> Option<f64> {
        let base = 1e-3 * self.rho_bar;
        let mut logs = [0.0; 3];
        for (i, k) in [1.0, 2.0, 4.0].iter().enumerate() {
            let v = self.eval(self.rho_bar - base / k).abs();
            if v <= 0.0 || !v.is_finite() {
                return None;
            }
            logs[i] = v.ln();
        }
        // Successive slopes against ln(offset); offsets shrink by factor 2.
        let p1 = (logs[0] - logs[1]) / std::f64::consts::LN_2;
        let p2 = (logs[1] - logs[2]) / std::f64::consts::LN_2;
        let e = geometric_limit(2.0, [p1, 0.5 * (p1 + p2), p2]);
        Some(e.value)
    }

    /// Sampled extrema over `[lo, hi]` with `n` cells.
    pub fn min_max_on(&self, lo: f64, hi: f64, n: usize) -> (f64, f64) {
        let mut mn = f64::INFINITY;
        let mut mx = f64::NEG_INFINITY;
        for i in 0..=n {
            let x = lo + (hi - lo) * i as f64 / n as f64;
            let v = self.eval(x);
            mn = mn.min(v);
            mx = mx.max(v);
        }
        (mn, mx)
    }

    /// Sampled maximum of |f| over `[lo, hi]`.
    pub fn max_abs_on(&self, lo: f64, hi: f64, n: usize) -> f64 {
        let (mn, mx) = self.min_max_on(lo, hi, n);
        mn.abs().max(mx.abs())
    }

    pub fn kind(&self) -> &FieldKind {
        &self.kind
    }
}

/// `base^exp` with the base clamped at zero, so rounding slightly past an
/// interval end cannot generate NaN from a fractional power.
fn pow_clamped(base: f64, exp: f64) -> f64 {
    base.max(0.0).powf(exp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn power_top_eval_deriv_antideriv() {
        // 2 (1 - rho)^3 on [0, 1].
        let f = ScalarField::power_top(2.0, 3.0, 1.0);
        assert!(close(f.eval(0.5), 0.25, 1e-14));
        assert!(close(f.deriv(0.5), -6.0 * 0.25, 1e-14));
        // Antiderivative: (1 - (1-rho)^4) / 2.
        assert!(close(f.antideriv0(0.5), (1.0 - 0.0625) / 2.0, 1e-14));
        let o = f.order_at_top().unwrap();
        assert!(close(o.order, 3.0, 1e-14) && close(o.scale, 2.0, 1e-14));
    }

    #[test]
    fn product_orders_at_both_ends() {
        // 3 rho^2 (1.5 - rho)^0.5 on [0, 1.5].
        let f = ScalarField::product(3.0, 2.0, 0.5, 1.5);
        let top = f.order_at_top().unwrap();
        assert!(close(top.order, 0.5, 1e-14));
        assert!(close(top.scale, 3.0 * 1.5_f64.powi(2), 1e-14));
        let zero = f.order_at_zero().unwrap();
        assert!(close(zero.order, 2.0, 1e-14));
        assert!(close(zero.scale, 3.0 * 1.5_f64.sqrt(), 1e-14));
        // Numeric antiderivative against adaptive quadrature.
        let q = crate::numeric::quad::adaptive_simpson(&|x| f.eval(x), 0.0, 1.2, 1e-12, 1e-14);
        assert!(close(f.antideriv0(1.2), q, 1e-9));
    }

    #[test]
    fn signed_power_changes_sign_at_pivot() {
        let f = ScalarField::signed_power(2.0, 0.5, 0.6, 1.0);
        assert!(f.eval(0.3) > 0.0 && f.eval(0.9) < 0.0);
        assert!(close(f.eval(0.35), 2.0 * 0.25_f64.sqrt(), 1e-14));
        let below = f.local_order(0.6, true).unwrap();
        let above = f.local_order(0.6, false).unwrap();
        assert!(close(below.order, 0.5, 1e-14) && below.scale > 0.0);
        assert!(close(above.order, 0.5, 1e-14) && above.scale < 0.0);
        // Antiderivative check against quadrature across the pivot.
        let q = crate::numeric::quad::adaptive_simpson(&|x| f.eval(x), 0.0, 0.9, 1e-12, 1e-14);
        assert!(close(f.antideriv0(0.9), q, 1e-9));
    }

    #[test]
    fn sum_combines_orders() {
        // (1 - rho) + (1 - rho)^2: order 1 at top with scale 1.
        let rho_bar = 1.0;
        let f = ScalarField::sum(
            vec![
                (1.0, ScalarField::power_top(1.0, 1.0, rho_bar)),
                (1.0, ScalarField::power_top(1.0, 2.0, rho_bar)),
            ],
            rho_bar,
        );
        let o = f.order_at_top().unwrap();
        assert!(close(o.order, 1.0, 1e-14) && close(o.scale, 1.0, 1e-14));
        assert!(close(f.eval(0.25), 0.75 + 0.5625, 1e-14));
        assert!(close(f.antideriv0(1.0), 0.5 + 1.0 / 3.0, 1e-14));
    }

    #[test]
    fn reflection_maps_top_behaviour_to_zero() {
        // Start from rho (1 - rho) on [0, 1]; reflect about the top with
        // cut 0: same field mirrored, so order at zero of the reflection
        // equals order at top of the original.
        let base = ScalarField::product(1.0, 1.0, 2.0, 1.0);
        let r = ScalarField::reflected(base.clone(), 0.0, false);
        assert!(close(r.eval(0.3), base.eval(0.7), 1e-14));
        let oz = r.order_at_zero().unwrap();
        assert!(close(oz.order, 2.0, 1e-14));
        let ot = r.order_at_top().unwrap();
        assert!(close(ot.order, 1.0, 1e-14));
        // Derivative flips sign under reflection.
        assert!(close(r.deriv(0.3), -base.deriv(0.7), 1e-13));
        // Antiderivative consistency with quadrature.
        let q = crate::numeric::quad::adaptive_simpson(&|x| r.eval(x), 0.0, 0.8, 1e-12, 1e-14);
        assert!(close(r.antideriv0(0.8), q, 1e-10));
    }

    #[test]
    fn reflection_with_cut_shortens_interval_and_negates() {
        // Source-like reflection: sign flip plus truncation at cut = 0.4.
        let g = ScalarField::signed_power(1.0, 1.0, 0.4, 1.0);
        let r = ScalarField::reflected(g.clone(), 0.4, true);
        assert!(close(r.rho_bar(), 0.6, 1e-14));
        // r(rho) = -g(1 - rho) is positive on (0, 0.6).
        assert!(r.eval(0.3) > 0.0);
        let ot = r.order_at_top().unwrap();
        assert!(close(ot.order, 1.0, 1e-14));
        assert!(ot.scale > 0.0, "reflected source vanishes from above at its top");
    }

    #[test]
    fn numeric_order_recovers_fractional_power() {
        let f = ScalarField::power_top(0.7, 1.5, 2.0);
        let p = f.numeric_order_at_top().unwrap();
        assert!((p - 1.5).abs() < 1e-3, "estimated order {p}");
    }

    #[test]
    fn declared_order_backs_up_tables() {
        // Tabulate (1 - rho)^2 coarsely and declare its order.
        let n = 64;
        let xs: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (1.0 - x) * (1.0 - x)).collect();
        let f = ScalarField::table(xs, ys, 1.0).unwrap().with_declared_top_order(Some(2.0));
        let o = f.order_at_top().unwrap();
        assert!(close(o.order, 2.0, 1e-14));
        assert!((o.scale - 1.0).abs() < 5e-2, "fitted scale {}", o.scale);
    }

    #[test]
    fn checked_eval_labels_failures() {
        let f = ScalarField::power_zero(1.0, -0.5, 1.0);
        let err = f.checked_eval(0.0, "diffusivity").unwrap_err();
        assert!(err.to_string().contains("diffusivity"));
    }
}
