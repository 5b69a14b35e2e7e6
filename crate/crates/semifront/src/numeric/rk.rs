//! Embedded Dormand-Prince 5(4) integrator for a scalar ODE, with dense
//! output and a per-step callback.
//!
//! The callback sees every accepted step together with its quartic
//! interpolant, so callers can sample arbitrary output points, run event
//! detection, or stop the integration early without restarting.

/// Tolerances and limits for one integration call.
#[derive(Debug, Clone)]
pub struct RkOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    /// Magnitude of the first trial step; `None` picks 1/100 of the span.
    pub h_init: Option<f64>,
    /// Cap on the step magnitude; `None` means the remaining span.
    pub h_max: Option<f64>,
}

impl Default for RkOptions {
    fn default() -> Self {
        RkOptions {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_steps: 2_000_000,
            h_init: None,
            h_max: None,
        }
    }
}

/// One accepted step together with its dense-output interpolant.
#[derive(Debug, Clone, Copy)]
pub struct DenseStep {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    /// Derivative at the left end of the step.
    pub f0: f64,
    /// Derivative at the right end of the step.
    pub f1: f64,
    cont: [f64; 5],
}

impl DenseStep {
    /// Evaluate the quartic interpolant at `x` (intended for x in the step).
    pub fn eval(&self, x: f64) -> f64 {
        let h = self.x1 - self.x0;
        let t = (x - self.x0) / h;
        let [c1, c2, c3, c4, c5] = self.cont;
        c1 + t * (c2 + (1.0 - t) * (c3 + t * (c4 + (1.0 - t) * c5)))
    }

    /// Derivative of the interpolant at `x`.
    pub fn eval_deriv(&self, x: f64) -> f64 {
        let h = self.x1 - self.x0;
        let t = (x - self.x0) / h;
        let [_, c2, c3, c4, c5] = self.cont;
        // d/dt of c2 t + c3 t(1-t) + c4 t^2 (1-t) + c5 t^2 (1-t)^2, over h.
        let d = c2
            + c3 * (1.0 - 2.0 * t)
            + c4 * t * (2.0 - 3.0 * t)
            + c5 * t * (2.0 - 6.0 * t + 4.0 * t * t);
        d / h
    }
}

/// Returned by the step callback to continue or halt the sweep.
///
/// `CapNext` continues but limits the size of every subsequent step until a
/// later callback raises or replaces the limit.  Callers that need extra
/// resolution near a singular endpoint can tighten the cap as the sweep
/// approaches it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Control {
    Continue,
    CapNext(f64),
    Stop,
}

/// Final state of an integration sweep.
#[derive(Debug, Clone, Copy)]
pub struct RkResult {
    pub x_end: f64,
    pub y_end: f64,
    pub steps: usize,
    pub rejected: usize,
    /// True when the callback requested the halt (rather than reaching the
    /// target abscissa).
    pub stopped: bool,
}

// Butcher tableau of the Dormand-Prince 5(4) pair.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Error coefficients: 5th-order minus embedded 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// Dense-output coefficients for the fifth contribution.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Integrate `y' = f(x, y)` from `(x0, y0)` toward `x_target`.
///
/// `on_step` runs after every accepted step and may stop the sweep; the
/// result then reports the end of the last accepted step. Errors are
/// returned as strings naming the abscissa where the driver gave up.
pub fn integrate<F, S>(
    f: &F,
    x0: f64,
    y0: f64,
    x_target: f64,
    opts: &RkOptions,
    on_step: &mut S,
) -> Result<RkResult, String>
where
    F: Fn(f64, f64) -> f64,
    S: FnMut(&DenseStep) -> Control,
{
    let span = x_target - x0;
    if span == 0.0 {
        return Ok(RkResult { x_end: x0, y_end: y0, steps: 0, rejected: 0, stopped: false });
    }
    let dir = span.signum();
    let h_cap = opts.h_max.unwrap_or(span.abs());

    let mut x = x0;
    let mut y = y0;
    let mut k1 = f(x, y);
    if !k1.is_finite() {
        return Err(format!("derivative not finite at start x = {x0:e}"));
    }

    let mut h = dir * opts.h_init.unwrap_or(0.01 * span.abs()).min(h_cap).max(f64::MIN_POSITIVE);
    let mut steps = 0usize;
    let mut rejected = 0usize;
    let mut dyn_cap = h_cap;

    loop {
        if (x - x_target) * dir >= 0.0 {
            return Ok(RkResult { x_end: x, y_end: y, steps, rejected, stopped: false });
        }
        if steps + rejected >= opts.max_steps {
            return Err(format!(
                "step budget of {} exhausted at x = {x:e} (remaining span {:e})",
                opts.max_steps,
                (x_target - x).abs()
            ));
        }
        // Do not overshoot the target.
        if (x + h - x_target) * dir > 0.0 {
            h = x_target - x;
        }
        if h.abs() < 4.0 * f64::EPSILON * x.abs().max(1e-300) {
            return Err(format!("step size underflow at x = {x:e}"));
        }

        let k2 = f(x + C2 * h, y + h * (A21 * k1));
        let k3 = f(x + C3 * h, y + h * (A31 * k1 + A32 * k2));
        let k4 = f(x + C4 * h, y + h * (A41 * k1 + A42 * k2 + A43 * k3));
        let k5 = f(x + C5 * h, y + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4));
        let k6 = f(x + h, y + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5));
        let y5 = y + h * (A71 * k1 + A73 * k3 + A74 * k4 + A75 * k5 + A76 * k6);
        let k7 = f(x + h, y5);

        let finite = k2.is_finite()
            && k3.is_finite()
            && k4.is_finite()
            && k5.is_finite()
            && k6.is_finite()
            && k7.is_finite()
            && y5.is_finite();

        let err = if finite {
            let e = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7);
            let scale = opts.abs_tol + opts.rel_tol * y.abs().max(y5.abs());
            (e / scale).abs()
        } else {
            f64::INFINITY
        };

        if err <= 1.0 {
            // Accept; build the dense interpolant before advancing.
            let ydiff = y5 - y;
            let bspl = h * k1 - ydiff;
            let cont = [
                y,
                ydiff,
                bspl,
                ydiff - h * k7 - bspl,
                h * (D1 * k1 + D3 * k3 + D4 * k4 + D5 * k5 + D6 * k6 + D7 * k7),
            ];
            let step = DenseStep { x0: x, x1: x + h, y0: y, y1: y5, f0: k1, f1: k7, cont };
            x += h;
            y = y5;
            k1 = k7;
            steps += 1;
            match on_step(&step) {
                Control::Stop => {
                    return Ok(RkResult { x_end: x, y_end: y, steps, rejected, stopped: true });
                }
                Control::CapNext(cap) => {
                    dyn_cap = if cap.is_finite() && cap > 0.0 { cap.min(h_cap) } else { h_cap };
                }
                Control::Continue => {}
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = (h * fac).clamp(-dyn_cap, dyn_cap);
        } else {
            rejected += 1;
            let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.2, 1.0) } else { 0.25 };
            h *= fac;
        }
    }
}
