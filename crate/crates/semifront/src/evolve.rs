//! Direct PDE cross-check for computed profiles.
//!
//! Evolves rho_t + f(rho)_x = (D(rho) rho_x)_x + g(rho) on a bounded
//! interval with an explicit scheme: upwind flux differencing for the
//! advection against the local sign of h = f', a centered second
//! difference of the degenerate diffusion in conservation form with
//! arithmetic-mean interface diffusivity, and an explicit source. The
//! boundary values are pinned (Dirichlet) to the asymptotic states of the
//! initial data. Front speeds are measured by tracking a level crossing
//! and fitting its position over the second half of a trajectory.

use crate::error::{Error, Result};
use crate::model::Model;
use crate::profile::ProfileSolution;

/// Band around [0, rho_bar] inside which values are considered valid.
const VALUE_BAND: f64 = 1e-10;
/// Excursion beyond rho_bar (or below 0) that aborts a step.
const BLOWUP_TOL: f64 = 1e-3;
/// Nodes per lookup-table segment for the density-dependent coefficients.
const LUT_NODES: usize = 8193;

/// A density field on a uniform spatial grid at one instant.
#[derive(Debug, Clone)]
pub struct Field1D {
    /// Uniform, strictly increasing abscissae.
    pub x_grid: Vec<f64>,
    /// Densities, kept within [-1e-10, rho_bar + 1e-10] by the scheme.
    pub values: Vec<f64>,
    pub time: f64,
    /// Cumulative count of cells clamped back into [0, rho_bar] after an
    /// excursion beyond the tolerance band (but below the abort level).
    pub clamp_events: usize,
}

impl Field1D {
    /// Build a field on the uniform grid x0, x0 + dx, ..., with the given
    /// values.
    pub fn new(x0: f64, dx: f64, values: Vec<f64>, time: f64) -> Result<Field1D> {
        if !(dx > 0.0) || !dx.is_finite() || !x0.is_finite() {
            return Err(Error::pre(format!(
                "grid needs a finite origin and positive spacing, got x0 = {x0}, dx = {dx}"
            )));
        }
        if values.len() < 3 {
            return Err(Error::pre(format!(
                "grid needs at least 3 cells, got {}",
                values.len()
            )));
        }
        let x_grid = (0..values.len()).map(|i| x0 + i as f64 * dx).collect();
        Ok(Field1D {
            x_grid,
            values,
            time,
            clamp_events: 0,
        })
    }

    /// Grid spacing; errors when the stored grid is not uniform.
    pub fn dx(&self) -> Result<f64> {
        if self.x_grid.len() < 3 || self.x_grid.len() != self.values.len() {
            return Err(Error::pre(format!(
                "field needs matching grids with at least 3 cells, got {} abscissae for {} values",
                self.x_grid.len(),
                self.values.len()
            )));
        }
        let dx = self.x_grid[1] - self.x_grid[0];
        if !(dx > 0.0) {
            return Err(Error::pre(format!("grid spacing must be positive, got {dx}")));
        }
        for (i, w) in self.x_grid.windows(2).enumerate() {
            if ((w[1] - w[0]) - dx).abs() > 1e-9 * dx {
                return Err(Error::pre(format!(
                    "grid is not uniform: spacing {} at cell {} vs {} at cell 0",
                    w[1] - w[0],
                    i,
                    dx
                )));
            }
        }
        Ok(dx)
    }

    fn check_band(&self, rho_bar: f64) -> Result<()> {
        for (&x, &v) in self.x_grid.iter().zip(&self.values) {
            if !((-VALUE_BAND..=rho_bar + VALUE_BAND).contains(&v)) {
                return Err(Error::pre(format!(
                    "field value {v} at x = {x} lies outside [0, rho_bar = {rho_bar}] \
                     beyond the 1e-10 tolerance band"
                )));
            }
        }
        Ok(())
    }
}

/// Largest stable explicit time step for the model on spacing `dx`:
/// 0.4 * min(dx / max|h|, dx^2 / (2 max D + eps)).
pub fn stability_dt(model: &Model, dx: f64) -> f64 {
    let (adv, diff) = stability_parts(model, dx);
    0.4 * adv.min(diff)
}

fn stability_parts(model: &Model, dx: f64) -> (f64, f64) {
    let rb = model.rho_bar;
    let max_h = model.advection.max_abs_on(0.0, rb, 1024);
    let max_d = model.diffusivity.min_max_on(0.0, rb, 1024).1.max(0.0);
    let adv = if max_h > 0.0 { dx / max_h } else { f64::INFINITY };
    let diff = dx * dx / (2.0 * max_d + 1e-12);
    (adv, diff)
}

/// One uniform piecewise-linear lookup segment.
struct Seg {
    lo: f64,
    inv: f64,
    tab: Vec<f64>,
}

impl Seg {
    fn build(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, nodes: usize) -> Seg {
        let step = (hi - lo) / (nodes - 1) as f64;
        let tab = (0..nodes)
            .map(|i| {
                let x = if i + 1 == nodes { hi } else { lo + i as f64 * step };
                f(x)
            })
            .collect();
        Seg {
            lo,
            inv: (nodes - 1) as f64 / (hi - lo),
            tab,
        }
    }

    #[inline]
    fn eval(&self, x: f64) -> f64 {
        let t = ((x - self.lo) * self.inv).clamp(0.0, (self.tab.len() - 1) as f64);
        let k = (t as usize).min(self.tab.len() - 2);
        let frac = t - k as f64;
        self.tab[k] + frac * (self.tab[k + 1] - self.tab[k])
    }
}

/// Lookup table over [0, rho_bar], split at an interior source zero so
/// that every equilibrium density is an exact node (a spatially constant
/// equilibrium state must be an exact fixed point of the step).
struct Lut {
    a: Seg,
    b: Option<Seg>,
    split: f64,
}

impl Lut {
    fn build(f: impl Fn(f64) -> f64, rho_bar: f64, split: Option<f64>) -> Lut {
        match split {
            Some(s) if s > 0.0 && s < rho_bar => Lut {
                a: Seg::build(&f, 0.0, s, LUT_NODES),
                b: Some(Seg::build(&f, s, rho_bar, LUT_NODES)),
                split: s,
            },
            _ => Lut {
                a: Seg::build(&f, 0.0, rho_bar, LUT_NODES),
                b: None,
                split: f64::INFINITY,
            },
        }
    }

    #[inline]
    fn eval(&self, x: f64) -> f64 {
        match &self.b {
            Some(b) if x >= self.split => b.eval(x),
            _ => self.a.eval(x),
        }
    }
}

/// Reusable explicit-step state: coefficient tables, pinned boundary
/// values, and scratch buffers.
struct Stepper {
    rho_bar: f64,
    dx: f64,
    inv_dx: f64,
    inv_dx2: f64,
    bound: f64,
    adv_limit: f64,
    diff_limit: f64,
    has_advection: bool,
    d_lut: Lut,
    g_lut: Lut,
    f_lut: Lut,
    h_lut: Lut,
    bc: (f64, f64),
    d_buf: Vec<f64>,
    g_buf: Vec<f64>,
    f_buf: Vec<f64>,
    h_buf: Vec<f64>,
    clamp_events: usize,
}

impl Stepper {
    fn new(model: &Model, field: &Field1D) -> Result<Stepper> {
        let rb = model.rho_bar;
        let dx = field.dx()?;
        field.check_band(rb)?;
        let (adv_limit, diff_limit) = stability_parts(model, dx);
        let split = model.rho0;
        let has_advection = model.advection.max_abs_on(0.0, rb, 1024) > 0.0;
        let n = field.values.len();
        Ok(Stepper {
            rho_bar: rb,
            dx,
            inv_dx: 1.0 / dx,
            inv_dx2: 1.0 / (dx * dx),
            bound: 0.4 * adv_limit.min(diff_limit),
            adv_limit,
            diff_limit,
            has_advection,
            d_lut: Lut::build(|x| model.d(x), rb, split),
            g_lut: Lut::build(|x| model.g(x), rb, split),
            f_lut: Lut::build(|x| model.flux_f(x), rb, split),
            h_lut: Lut::build(|x| model.h(x), rb, split),
            bc: (field.values[0], field.values[n - 1]),
            d_buf: vec![0.0; n],
            g_buf: vec![0.0; n],
            f_buf: vec![0.0; n],
            h_buf: vec![0.0; n],
            clamp_events: 0,
        })
    }

    fn check_dt(&self, dt: f64) -> Result<()> {
        if !(dt > 0.0) || dt > self.bound * (1.0 + 1e-9) {
            return Err(Error::pre(format!(
                "dt = {dt} violates the stability bound \
                 0.4 * min(dx/max|h|, dx^2/(2 max D + eps)) = {} \
                 (dx = {}, advective limit {}, diffusive limit {})",
                self.bound, self.dx, self.adv_limit, self.diff_limit
            )));
        }
        Ok(())
    }

    /// One explicit step from `cur` into `next`; `t` is the current time
    /// (for diagnostics only).
    fn advance(&mut self, cur: &[f64], next: &mut [f64], dt: f64, t: f64) -> Result<()> {
        let n = cur.len();
        for i in 0..n {
            let u = cur[i];
            self.d_buf[i] = self.d_lut.eval(u);
            self.g_buf[i] = self.g_lut.eval(u);
        }
        if self.has_advection {
            for i in 0..n {
                let u = cur[i];
                self.f_buf[i] = self.f_lut.eval(u);
                self.h_buf[i] = self.h_lut.eval(u);
            }
        }
        next[0] = self.bc.0;
        next[n - 1] = self.bc.1;
        for i in 1..n - 1 {
            let u = cur[i];
            let diff = ((self.d_buf[i] + self.d_buf[i + 1]) * (cur[i + 1] - u)
                - (self.d_buf[i - 1] + self.d_buf[i]) * (u - cur[i - 1]))
                * 0.5
                * self.inv_dx2;
            let mut rhs = diff + self.g_buf[i];
            if self.has_advection {
                rhs -= if self.h_buf[i] >= 0.0 {
                    (self.f_buf[i] - self.f_buf[i - 1]) * self.inv_dx
                } else {
                    (self.f_buf[i + 1] - self.f_buf[i]) * self.inv_dx
                };
            }
            next[i] = u + dt * rhs;
        }
        let rb = self.rho_bar;
        for i in 1..n - 1 {
            let v = next[i];
            if v > rb + BLOWUP_TOL || v < -BLOWUP_TOL {
                return Err(Error::Stability {
                    t,
                    detail: format!(
                        "cell value {v} at x = {} left [{}, {}] after one step; \
                         dt = {dt} vs stability bound {} \
                         (advective limit {}, diffusive limit {}); refine dx or reduce dt",
                        self.bc.0 * 0.0 + (i as f64) * self.dx,
                        -BLOWUP_TOL,
                        rb + BLOWUP_TOL,
                        self.bound,
                        self.adv_limit,
                        self.diff_limit
                    ),
                });
            }
            if v > rb {
                if v > rb + VALUE_BAND {
                    self.clamp_events += 1;
                }
                next[i] = rb;
            } else if v < 0.0 {
                if v < -VALUE_BAND {
                    self.clamp_events += 1;
                }
                next[i] = 0.0;
            }
        }
        Ok(())
    }
}

/// One explicit step of the discretized equation.
///
/// Boundary cells are pinned to their current values (Dirichlet at the
/// asymptotic states). `dt` must satisfy the stability bound reported by
/// [`stability_dt`]. An excursion beyond rho_bar (or below 0) larger than
/// 1e-3 aborts with a CFL diagnostic; smaller excursions are clamped and
/// counted in `clamp_events`.
pub fn step(field: &Field1D, model: &Model, dt: f64) -> Result<Field1D> {
    let mut stepper = Stepper::new(model, field)?;
    stepper.check_dt(dt)?;
    let mut next = vec![0.0; field.values.len()];
    stepper.advance(&field.values, &mut next, dt, field.time)?;
    Ok(Field1D {
        x_grid: field.x_grid.clone(),
        values: next,
        time: field.time + dt,
        clamp_events: field.clamp_events + stepper.clamp_events,
    })
}

/// Controls for a full evolution run.
#[derive(Debug, Clone)]
pub struct EvolveOptions {
    /// Horizon measured from the initial field's time.
    pub t_final: f64,
    /// Number of stored frames including the initial one.
    pub n_frames: usize,
    /// Fraction of the stability bound used as the step, in (0, 1].
    pub dt_fraction: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            t_final: 1.0,
            n_frames: 9,
            dt_fraction: 1.0,
        }
    }
}

/// Advance the field to `t_final`, storing `n_frames` frames at uniform
/// times. The step divides the frame interval exactly, so the final time
/// is hit without a partial step.
pub fn run(model: &Model, initial: &Field1D, opts: &EvolveOptions) -> Result<Vec<Field1D>> {
    if !(opts.t_final > 0.0) || !opts.t_final.is_finite() {
        return Err(Error::pre(format!(
            "evolution horizon must be positive and finite, got {}",
            opts.t_final
        )));
    }
    if opts.n_frames < 2 {
        return Err(Error::pre(format!(
            "need at least 2 frames, got {}",
            opts.n_frames
        )));
    }
    if !(opts.dt_fraction > 0.0 && opts.dt_fraction <= 1.0) {
        return Err(Error::pre(format!(
            "dt_fraction must lie in (0, 1], got {}",
            opts.dt_fraction
        )));
    }
    let mut stepper = Stepper::new(model, initial)?;
    let frame_dt = opts.t_final / (opts.n_frames - 1) as f64;
    let dt_target = stepper.bound * opts.dt_fraction;
    let steps_per_frame = (frame_dt / dt_target).ceil().max(1.0) as usize;
    let dt = frame_dt / steps_per_frame as f64;
    stepper.check_dt(dt)?;

    let mut frames = Vec::with_capacity(opts.n_frames);
    frames.push(initial.clone());
    let mut cur = initial.values.clone();
    let mut next = vec![0.0; cur.len()];
    let mut total_steps = 0u64;
    for _ in 1..opts.n_frames {
        for _ in 0..steps_per_frame {
            let t = initial.time + total_steps as f64 * dt;
            stepper.advance(&cur, &mut next, dt, t)?;
            std::mem::swap(&mut cur, &mut next);
            total_steps += 1;
        }
        frames.push(Field1D {
            x_grid: initial.x_grid.clone(),
            values: cur.clone(),
            time: initial.time + total_steps as f64 * dt,
            clamp_events: initial.clamp_events + stepper.clamp_events,
        });
    }
    Ok(frames)
}

/// Nearest equilibrium of g within a tenth of the density span, or the
/// clamped value itself when no equilibrium is close.
fn snap_state(model: &Model, v: f64) -> f64 {
    let rb = model.rho_bar;
    let scale = model.source.max_abs_on(0.0, rb, 64).max(1e-300);
    let mut best = v.clamp(0.0, rb);
    let mut best_gap = 0.1 * rb;
    let mut candidates = vec![0.0, rb];
    if let Some(r0) = model.rho0 {
        candidates.push(r0);
    }
    for zero in candidates {
        if model.g(zero).abs() <= 1e-9 * scale && (v - zero).abs() < best_gap {
            best_gap = (v - zero).abs();
            best = zero;
        }
    }
    best
}

/// Sample a computed profile onto a uniform grid over `domain`.
///
/// Outside the profile's abscissa range the field is extended by the end
/// values, snapped to the nearest equilibrium of g when one is close (the
/// asymptotic states a truncated strict tail approaches).
pub fn field_from_profile(
    profile: &ProfileSolution,
    model: &Model,
    dx: f64,
    domain: [f64; 2],
) -> Result<Field1D> {
    let [x0, x1] = domain;
    if !(dx > 0.0) || !(x1 > x0 + 2.0 * dx) {
        return Err(Error::pre(format!(
            "domain [{x0}, {x1}] must span at least 2 cells of width dx = {dx}"
        )));
    }
    let xi = &profile.xi_grid;
    let phi = &profile.phi_values;
    if xi.len() < 2 || xi.len() != phi.len() {
        return Err(Error::pre(format!(
            "profile needs at least 2 tabulated points, got {}",
            xi.len()
        )));
    }
    let left_state = snap_state(model, phi[0]);
    let right_state = snap_state(model, phi[phi.len() - 1]);
    let n = ((x1 - x0) / dx).round() as usize + 1;
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let x = x0 + i as f64 * dx;
        let v = if x <= xi[0] {
            left_state
        } else if x >= xi[xi.len() - 1] {
            right_state
        } else {
            let j = xi.partition_point(|&t| t < x).max(1);
            let (xa, xb) = (xi[j - 1], xi[j]);
            let (va, vb) = (phi[j - 1], phi[j]);
            if xb > xa {
                va + (x - xa) / (xb - xa) * (vb - va)
            } else {
                va
            }
        };
        values.push(v.clamp(0.0, model.rho_bar));
    }
    Field1D::new(x0, dx, values, 0.0)
}

/// Result of a front-speed measurement.
#[derive(Debug, Clone)]
pub struct SpeedFit {
    /// Slope of the least-squares line through the crossing positions.
    pub speed: f64,
    /// Crossing position extrapolated to t = 0.
    pub intercept: f64,
    /// Root-mean-square deviation of the crossings from the line.
    pub residual: f64,
    /// Number of frames used (the second half of the trajectory).
    pub n_used: usize,
}

/// Abscissa where the field crosses `level`, sub-grid by linear
/// interpolation; errors when the level is crossed more than once.
pub fn level_crossing(field: &Field1D, level: f64) -> Result<f64> {
    let xs = &field.x_grid;
    let vs = &field.values;
    let mut crossings: Vec<f64> = Vec::new();
    let mut last_sign = 0i8;
    let mut last_idx = 0usize;
    for (i, &v) in vs.iter().enumerate() {
        let s = v - level;
        let sign = if s > 0.0 {
            1
        } else if s < 0.0 {
            -1
        } else {
            0
        };
        if sign == 0 {
            continue;
        }
        if last_sign != 0 && sign != last_sign {
            let x = if i == last_idx + 1 {
                let (v0, v1) = (vs[last_idx] - level, vs[i] - level);
                xs[last_idx] + v0 / (v0 - v1) * (xs[i] - xs[last_idx])
            } else {
                // The field sits exactly at the level in between; take the
                // midpoint of that run.
                0.5 * (xs[last_idx + 1] + xs[i - 1])
            };
            crossings.push(x);
        }
        last_sign = sign;
        last_idx = i;
    }
    match crossings.len() {
        1 => Ok(crossings[0]),
        0 => Err(Error::pre(format!(
            "the level {level} is not crossed at t = {}",
            field.time
        ))),
        m => Err(Error::pre(format!(
            "non-monotone front: the level {level} is crossed {m} times at t = {}",
            field.time
        ))),
    }
}

/// Fit the level-crossing position over the second half of a trajectory.
pub fn measure_speed(frames: &[Field1D], level: f64) -> Result<SpeedFit> {
    if frames.len() < 4 {
        return Err(Error::pre(format!(
            "speed measurement needs at least 4 frames, got {}",
            frames.len()
        )));
    }
    let start = frames.len() / 2;
    let tail = &frames[start..];
    let mut ts = Vec::with_capacity(tail.len());
    let mut xs = Vec::with_capacity(tail.len());
    for f in tail {
        ts.push(f.time);
        xs.push(level_crossing(f, level)?);
    }
    let n = ts.len() as f64;
    let tbar = ts.iter().sum::<f64>() / n;
    let xbar = xs.iter().sum::<f64>() / n;
    let mut stt = 0.0;
    let mut stx = 0.0;
    for (&t, &x) in ts.iter().zip(&xs) {
        stt += (t - tbar) * (t - tbar);
        stx += (t - tbar) * (x - xbar);
    }
    if stt <= 0.0 {
        return Err(Error::pre("frames must span distinct times"));
    }
    let speed = stx / stt;
    let intercept = xbar - speed * tbar;
    let mut ss = 0.0;
    for (&t, &x) in ts.iter().zip(&xs) {
        let r = x - intercept - speed * t;
        ss += r * r;
    }
    Ok(SpeedFit {
        speed,
        intercept,
        residual: (ss / n as f64).sqrt(),
        n_used: tail.len(),
    })
}

/// Abscissa of the right edge of the contiguous region at the left end of
/// the domain where the field sits within `tol` of rho_bar; `None` when
/// even the first cell is below.
pub fn top_plateau_edge(field: &Field1D, rho_bar: f64, tol: f64) -> Option<f64> {
    let mut edge = None;
    for (&x, &v) in field.x_grid.iter().zip(&field.values) {
        if v >= rho_bar - tol {
            edge = Some(x);
        } else {
            break;
        }
    }
    edge
}

/// Long-format CSV of a trajectory: header `t,x,rho`, one row per cell
/// per frame, 17 significant digits.
pub fn trajectory_csv(frames: &[Field1D]) -> String {
    let cells: usize = frames.iter().map(|f| f.values.len()).sum();
    let mut out = String::with_capacity(cells * 72 + 8);
    out.push_str("t,x,rho\n");
    for f in frames {
        for (&x, &v) in f.x_grid.iter().zip(&f.values) {
            out.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", f.time, x, v));
        }
    }
    out
}
