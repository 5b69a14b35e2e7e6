//! Solver for the singular first-order boundary value problem
//!
//! ```text
//! dz/dphi = h(phi) - c - D(phi) g(phi) / z(phi),   z < 0 on (0, rho_bar),
//! z(rho_bar) = 0,
//! ```
//!
//! whose solution z = D(phi) phi' encodes a traveling-wave profile. The
//! datum at the top is pinned, so the solver seeds the solution just below
//! rho_bar with the correct local asymptotics and integrates down to 0,
//! where the free value z(0+) emerges.
//!
//! Seeding branches, chosen from endpoint metadata:
//! - linear, `z = -m (rho_bar - phi)`, when the endpoint slope m is
//!   positive;
//! - square-root balance, `z = -sqrt(2 int D g)`, when the advection gap
//!   h - c vanishes fast enough (or the balance limit diverges) so the
//!   equation reduces to z z' = -D g at leading order;
//! - quasi-equilibrium, `z = -D g / (c - h + z')`, when c exceeds the top
//!   advection speed. That branch is strongly attracting and makes the
//!   equation arbitrarily stiff near the top, so it is followed
//!   analytically (two fixed-point refinements, geometric advance in the
//!   offset) until an explicit integrator can take over.

use crate::error::{Error, Result};
use crate::field::LocalOrder;
use crate::model::{EllLimit, Model, Tag};
use crate::numeric::pchip::MonotoneCubic;
use crate::numeric::quad::adaptive_simpson;
use crate::numeric::rk::{integrate, Control, RkOptions};

/// Tolerances and grid controls for one solve.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Seed offset below the top; `None` means 1e-8 * rho_bar.
    pub eps_top: Option<f64>,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    /// |z(0+)| below this counts as a vanishing boundary value.
    pub zero_threshold: f64,
    /// Cells of the uniform output grid on [0, rho_bar].
    pub grid_cells: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            eps_top: None,
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_steps: 2_000_000,
            zero_threshold: 1e-7,
            grid_cells: 2048,
        }
    }
}

impl SolverOptions {
    fn validate(&self, rho_bar: f64) -> Result<f64> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0 && self.zero_threshold > 0.0) {
            return Err(Error::pre("solver tolerances must be positive"));
        }
        if self.grid_cells < 16 {
            return Err(Error::pre("grid must have at least 16 cells"));
        }
        let eps = self.eps_top.unwrap_or(1e-8 * rho_bar);
        if !(eps > 0.0 && eps < 0.25 * rho_bar) {
            return Err(Error::pre(format!(
                "eps_top = {eps} must lie in (0, rho_bar/4) = (0, {})",
                0.25 * rho_bar
            )));
        }
        Ok(eps)
    }
}

/// Which asymptotic branch seeded the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedKind {
    /// Positive endpoint slope m: z = -m s.
    Linear,
    /// Balance z z' = -D g: z = -sqrt(2 int D g).
    SqrtBalance,
    /// Attracting branch z = -D g / (c - h + z') when c exceeds the top
    /// advection speed.
    QuasiEquilibrium,
    /// Positive vanishing gap h - c ~ K s^gc drives z = -K s^(gc+1)/(gc+1).
    GapDriven,
}

/// Computed solution of the singular problem at one speed.
#[derive(Debug, Clone)]
pub struct ZSolution {
    pub c: f64,
    /// Strictly increasing densities in (0, rho_bar]; the last entry is
    /// rho_bar with value exactly 0.
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Limit z(0+) (or the value at the truncation point when the solution
    /// flattened to numerical zero before reaching 0).
    pub z0: f64,
    /// Endpoint slope dz/dphi at rho_bar from the closed formula
    /// (infinite when the balance limit diverges).
    pub zdot_at_top: f64,
    pub ell: EllLimit,
    pub seed_offset: f64,
    pub seed_kind: SeedKind,
    /// Max over probed grid points of |dz/dphi - rhs| / max(1, |z|),
    /// with dz/dphi a centered finite difference of the computed solution.
    pub residual_sup: f64,
    /// Density at which integration stopped because |z| fell below the
    /// absolute tolerance (None when the run reached 0).
    pub truncated_at: Option<f64>,
    /// Local model z ~ -coeff * (rho_bar - phi)^exponent used for
    /// improper-integral tails above the last grid point.
    pub top_exponent: f64,
    pub top_coeff: f64,
    interp: MonotoneCubic,
}

impl ZSolution {
    /// Interpolated z at a density inside the computed range. Above the
    /// last interior grid point the local power model is used; at and
    /// beyond rho_bar the value is 0.
    pub fn eval(&self, phi: f64) -> f64 {
        let rb = *self.grid.last().unwrap();
        if phi >= rb {
            return 0.0;
        }
        let n = self.grid.len();
        // grid[n-2] is the last computed interior point (n-1 holds the
        // pinned zero); the power tail is more faithful beyond it.
        if n >= 2 && phi > self.grid[n - 2] {
            return -self.top_coeff * (rb - phi).powf(self.top_exponent);
        }
        self.interp.eval(phi).min(0.0)
    }

    /// Smallest density with a computed value.
    pub fn phi_min(&self) -> f64 {
        self.grid[0]
    }

    pub fn rho_bar(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    /// Whether z(0+) vanished within the detection threshold used by the
    /// critical-speed dichotomy.
    pub fn z0_vanishes(&self, threshold: f64) -> bool {
        self.z0.abs() <= threshold
    }

    /// Improper integral of D/|z| from `lo` up to rho_bar, combining
    /// quadrature on the computed range with the closed power tail above
    /// the last interior point. Returns infinity when the tail diverges.
    pub fn front_width_integral(&self, model: &Model, lo: f64) -> f64 {
        let rb = self.rho_bar();
        let n = self.grid.len();
        let join = if n >= 2 { self.grid[n - 2] } else { rb };
        let mut total = 0.0;
        if lo < join {
            let f = |phi: f64| model.d(phi) / self.eval(phi).abs().max(1e-300);
            // Log-spaced panels toward the join resolve the near-top
            // gradient of the integrand.
            let s_hi = rb - lo;
            let s_lo = (rb - join).max(1e-300);
            let nodes = crate::numeric::quad::geometric_nodes(s_hi, s_lo, 24);
            let phis: Vec<f64> = nodes.iter().map(|s| rb - s).collect();
            total += crate::numeric::quad::panels(&f, &phis);
        }
        // Tail: D/|z| ~ (K_D / C) s^{a - e}; integrable iff a - e > -1.
        let s_join = (rb - join.max(lo)).max(0.0);
        if s_join > 0.0 {
            let a = model
                .diffusivity
                .order_at_top()
                .map(|o| (o.order, o.scale))
                .unwrap_or_else(|| {
                    let s = 0.5 * s_join;
                    (0.0, model.d(rb - s))
                });
            let p = a.0 - self.top_exponent;
            if p <= -1.0 {
                return f64::INFINITY;
            }
            total += a.1 / self.top_coeff * s_join.powf(p + 1.0) / (p + 1.0);
        }
        total
    }
}

/// Endpoint slope of z at the top from the closed formula.
///
/// With ell = 0 the slope is 0 for c >= h(rho_bar) and h(rho_bar) - c
/// otherwise; with finite negative ell it is the positive root
/// (h - c + sqrt((h - c)^2 - 4 ell)) / 2. A divergent ell admits no slope.
pub fn zdot_at_endpoint(h_at_top: f64, c: f64, ell: EllLimit) -> Result<f64> {
    match ell {
        EllLimit::MinusInfinity => Err(Error::pre(
            "slope formula inapplicable: the balance limit at the top diverges",
        )),
        EllLimit::Finite(l) if l > 1e-12 => Err(Error::pre(format!(
            "balance limit must be nonpositive, got {l}"
        ))),
        EllLimit::Finite(l) if l >= -1e-300 => {
            Ok(if c >= h_at_top { 0.0 } else { h_at_top - c })
        }
        EllLimit::Finite(l) => {
            let gap = h_at_top - c;
            Ok(0.5 * (gap + (gap * gap - 4.0 * l).sqrt()))
        }
    }
}

/// Top-endpoint asymptotics z ~ -coeff * s^exponent chosen for the seed.
/// Shared with the classifier, which must reason about the same local model.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SeedModel {
    pub(crate) kind: SeedKind,
    pub(crate) exponent: f64,
    pub(crate) coeff: f64,
}

/// Pick the seeding branch from endpoint metadata.
///
/// `d_ord`/`g_ord` describe D ~ K_D s^a and g ~ K_g s^b near the top,
/// `gap` describes h - c ~ K s^gc (order 0 when h(rho_bar) != c, infinite
/// order when h is identically c).
pub(crate) fn choose_seed(
    m: f64,
    d_ord: Option<LocalOrder>,
    g_ord: Option<LocalOrder>,
    gap: Option<LocalOrder>,
) -> Option<SeedModel> {
    if m.is_finite() && m > 0.0 {
        return Some(SeedModel { kind: SeedKind::Linear, exponent: 1.0, coeff: m });
    }
    let (d, g) = (d_ord?, g_ord?);
    let k = d.scale * g.scale;
    if k <= 0.0 {
        return None;
    }
    let ab = d.order + g.order;
    let crit = 0.5 * (ab - 1.0);
    let sqrt_exp = 0.5 * (ab + 1.0);
    let sqrt_seed = SeedModel {
        kind: SeedKind::SqrtBalance,
        exponent: sqrt_exp,
        coeff: (2.0 * k / (ab + 1.0)).sqrt(),
    };
    // Gap h - c ~ ks * s^gc; no metadata means the gap is negligible
    // (identically zero or dominated by the balance).
    let (gc, ks) = match gap {
        Some(gp) if gp.order.is_finite() => (gp.order, gp.scale),
        _ => (f64::INFINITY, 0.0),
    };
    if gc > crit + 1e-12 {
        Some(sqrt_seed)
    } else if (gc - crit).abs() <= 1e-12 {
        // Double balance: z' and both right-hand terms share the exponent;
        // the amplitude is the positive root of d A^2 - ks A - k = 0.
        let a = (ks + (ks * ks + 4.0 * sqrt_exp * k).sqrt()) / (2.0 * sqrt_exp);
        Some(SeedModel { kind: SeedKind::SqrtBalance, exponent: sqrt_exp, coeff: a })
    } else if ks < 0.0 {
        Some(SeedModel {
            kind: SeedKind::QuasiEquilibrium,
            exponent: ab - gc,
            coeff: k / ks.abs(),
        })
    } else if ks > 0.0 && gc > 0.0 {
        Some(SeedModel {
            kind: SeedKind::GapDriven,
            exponent: gc + 1.0,
            coeff: ks / (gc + 1.0),
        })
    } else {
        // ks > 0 with gc = 0 means h(rho_bar) > c, where the endpoint
        // slope is positive and the linear branch already caught it.
        Some(sqrt_seed)
    }
}

/// Solve the singular problem for one speed.
pub fn solve_z(model: &Model, c: f64, opts: &SolverOptions) -> Result<ZSolution> {
    let rb = model.rho_bar;
    let eps0 = opts.validate(rb)?;

    // A strictly positive diffusivity at the top (the situation of the
    // strip sub-problems cut at an interior source zero) is the regular
    // case and needs no degeneracy tag.
    let has_d = model.has_tag(Tag::D)
        || model.has_tag(Tag::DTilde)
        || model.has_tag(Tag::DHat)
        || model.d(rb) > 0.0;
    let has_g = model.has_tag(Tag::G) || model.has_tag(Tag::G0);
    if !has_d || !has_g {
        return Err(Error::pre(
            "solving requires a degenerate-diffusivity tag (D, D-tilde, or D-hat) \
             or positive diffusivity at the top, and a positive-source tag (g or g0)",
        ));
    }
    // The product D g must be positive inside; a sign error here would
    // silently push z across 0.
    for i in 1..64 {
        let x = rb * i as f64 / 64.0 * (1.0 - 1e-9);
        let p = model.d(x) * model.g(x);
        if !(p > 0.0) {
            return Err(Error::pre(format!(
                "D*g must be positive on (0, rho_bar); found {p} at rho = {x}"
            )));
        }
    }

    let ell = model.ell_limit_auto();
    let h_top = model.h_at_top();
    let zdot_top = match ell {
        EllLimit::MinusInfinity => f64::INFINITY,
        _ => zdot_at_endpoint(h_top, c, ell)?,
    };

    let d_ord = model.diffusivity.order_at_top();
    let g_ord = model.source.order_at_top();
    let gap = model.advection_gap_order(c);

    let mut eps = eps0;
    let mut last_err: Option<Error> = None;
    for _ in 0..5 {
        match attempt(model, c, opts, eps, ell, zdot_top, d_ord, g_ord, gap) {
            Ok(sol) => {
                // Residual gate near the top: retry with a smaller seed
                // offset when the seed asymptotics were not accurate enough.
                if sol.residual_sup <= 10.0 * opts.rel_tol.max(1e-12) * 1e3 {
                    return Ok(sol);
                }
                last_err = Some(Error::Solver {
                    stage: "seed accuracy".into(),
                    detail: format!(
                        "residual {:.3e} with seed offset {eps:.3e}",
                        sol.residual_sup
                    ),
                });
            }
            Err(e @ Error::Precondition(_)) => return Err(e),
            Err(e) => last_err = Some(e),
        }
        eps *= 0.5;
    }
    Err(last_err.unwrap_or_else(|| Error::Solver {
        stage: "seeding".into(),
        detail: "no attempt ran".into(),
    }))
}

#[allow(clippy::too_many_arguments)]
fn attempt(
    model: &Model,
    c: f64,
    opts: &SolverOptions,
    eps: f64,
    ell: EllLimit,
    zdot_top: f64,
    d_ord: Option<LocalOrder>,
    g_ord: Option<LocalOrder>,
    gap: Option<LocalOrder>,
) -> Result<ZSolution> {
    let rb = model.rho_bar;
    let rhs = |phi: f64, z: f64| -> f64 {
        if z >= -1e-300 {
            return f64::NAN;
        }
        model.h(phi) - c - model.d(phi) * model.g(phi) / z
    };

    let seed = match choose_seed(zdot_top, d_ord, g_ord, gap) {
        Some(s) => s,
        None => {
            // No metadata: the stated fallback is the plain quasi-equilibrium
            // value, which requires c to exceed the advection speed there.
            let phi = rb - eps;
            let denom = c - model.h(phi);
            if denom <= 0.0 {
                return Err(Error::pre(format!(
                    "seed undefined: endpoint slope is 0 but c - h = {denom} at rho = {phi}; \
                     declare vanishing orders or change c"
                )));
            }
            let z = -model.d(phi) * model.g(phi) / denom;
            return integrate_from(model, c, opts, eps, ell, zdot_top, phi, z, None, rhs)
                .map(|mut sol| {
                    sol.seed_kind = SeedKind::QuasiEquilibrium;
                    sol
                });
        }
    };

    match seed.kind {
        SeedKind::Linear | SeedKind::GapDriven => {
            let phi = rb - eps;
            let z = -seed.coeff * eps.powf(seed.exponent);
            integrate_from(model, c, opts, eps, ell, zdot_top, phi, z, Some(seed), rhs)
        }
        SeedKind::SqrtBalance => {
            // Quadrature beats the leading-order power once the offset is
            // not tiny, and reduces to it when it is.
            let phi = rb - eps;
            let integral =
                adaptive_simpson(&|s| model.d(s) * model.g(s), phi, rb, 1e-12, 1e-300).max(0.0);
            let z_quad = -(2.0 * integral).sqrt();
            let z_pow = -seed.coeff * eps.powf(seed.exponent);
            let z = if z_quad < 0.0 { z_quad } else { z_pow };
            integrate_from(model, c, opts, eps, ell, zdot_top, phi, z, Some(seed), rhs)
        }
        SeedKind::QuasiEquilibrium => {
            follow_quasi_equilibrium(model, c, opts, eps, ell, zdot_top, seed, rhs)
        }
    }
}

/// Two fixed-point refinements of the quasi-equilibrium branch
/// z = -D g / (c - h + z') at one density. Returns (value, relative gap
/// between the refinements).
fn quasi_eq_value(model: &Model, c: f64, phi: f64) -> (f64, f64) {
    let rb = model.rho_bar;
    let dg = |x: f64| model.d(x) * model.g(x);
    let denom0 = c - model.h(phi);
    // First refinement: analytic derivative of the plain balance -Dg/(c-h).
    let dgp = model.diffusivity.deriv(phi) * model.g(phi) + model.d(phi) * model.source.deriv(phi);
    let z0p = -dgp / denom0 - dg(phi) * model.advection.deriv(phi) / (denom0 * denom0);
    let z1 = -dg(phi) / (denom0 + z0p);
    // Second refinement: finite-difference derivative of z1.
    let d = 1e-3 * (rb - phi);
    let z1_at = |x: f64| {
        let den = c - model.h(x);
        let dgpx = model.diffusivity.deriv(x) * model.g(x) + model.d(x) * model.source.deriv(x);
        let w0p = -dgpx / den - dg(x) * model.advection.deriv(x) / (den * den);
        -dg(x) / (den + w0p)
    };
    let z1p = (z1_at(phi + d) - z1_at(phi - d)) / (2.0 * d);
    let z2 = -dg(phi) / (denom0 + z1p);
    let gap = ((z2 - z1) / z2.abs().max(1e-300)).abs();
    (z2, gap)
}

/// Follow the quasi-equilibrium branch outward from the seed offset until
/// an explicit integrator is stable, capturing grid values analytically in
/// the skipped region.
#[allow(clippy::too_many_arguments)]
fn follow_quasi_equilibrium(
    model: &Model,
    c: f64,
    opts: &SolverOptions,
    eps: f64,
    ell: EllLimit,
    zdot_top: f64,
    seed: SeedModel,
    rhs: impl Fn(f64, f64) -> f64 + Copy,
) -> Result<ZSolution> {
    let rb = model.rho_bar;
    let mut s = eps;
    loop {
        let phi = rb - s;
        let (z, gap) = quasi_eq_value(model, c, phi);
        if !(z < 0.0) || !z.is_finite() {
            return Err(Error::Solver {
                stage: "quasi-equilibrium branch".into(),
                detail: format!("branch value {z} not negative at rho = {phi}"),
            });
        }
        // Local stiffness of the linearized equation: lambda = D g / z^2.
        // The explicit integrator needs steps ~ 1/lambda; demand that a
        // step of s/10 is stable before handing over.
        let lambda = model.d(phi) * model.g(phi) / (z * z);
        let relaxed = lambda * s <= 10.0;
        let degraded = gap > 1e-8;
        let far = s >= 0.25 * rb;
        if relaxed || degraded || far {
            return integrate_from(model, c, opts, eps, ell, zdot_top, phi, z, Some(seed), rhs);
        }
        s *= 1.25;
    }
}

/// Output-node ladder in descending density order: uniform cells,
/// geometric top refinement, slope-probe offsets, the seed point.
fn output_nodes(rb: f64, cells: usize, start: f64) -> Vec<f64> {
    let mut nodes: Vec<f64> = Vec::with_capacity(cells + 64);
    let dx = rb / cells as f64;
    for j in 1..=cells {
        nodes.push(j as f64 * dx);
    }
    for k in 6..=60u32 {
        let s = rb * (2.0_f64).powi(-(k as i32));
        let phi = rb - s;
        if phi >= start {
            break;
        }
        nodes.push(phi);
    }
    for d in [1e-3, 1e-4, 1e-5] {
        nodes.push(rb * (1.0 - d));
    }
    nodes.push(start);
    nodes.retain(|&x| x > 0.0 && x <= start + 1e-15 * rb);
    nodes.sort_by(|a, b| b.partial_cmp(a).unwrap());
    nodes.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * rb);
    nodes
}

/// Stencil half-width for residual probes at density `phi`, shrinking
/// toward both endpoints where the solution's high derivatives grow
/// (degenerate contact at the top, zero-contact transition at the bottom).
fn probe_halfwidth(phi: f64, rb: f64) -> f64 {
    (5e-3 * phi.min(rb - phi)).clamp(1e-7 * rb, 1e-5 * rb)
}

/// Fourth-order centered derivative of `f` at `x` with half-width `d`.
fn fd4(f: impl Fn(f64) -> f64, x: f64, d: f64) -> f64 {
    (-f(x + 2.0 * d) + 8.0 * f(x + d) - 8.0 * f(x - d) + f(x - 2.0 * d)) / (12.0 * d)
}

/// Run the explicit integrator from the hand-off point down to 0,
/// capturing node values and residual probes from the dense output.
#[allow(clippy::too_many_arguments)]
fn integrate_from(
    model: &Model,
    c: f64,
    opts: &SolverOptions,
    eps: f64,
    ell: EllLimit,
    zdot_top: f64,
    phi_start: f64,
    z_start: f64,
    seed: Option<SeedModel>,
    rhs: impl Fn(f64, f64) -> f64 + Copy,
) -> Result<ZSolution> {
    let rb = model.rho_bar;
    let start = rb - eps;
    let nodes = output_nodes(rb, opts.grid_cells, start);

    let mut captured: Vec<(f64, f64)> = Vec::with_capacity(nodes.len() + 1);
    let mut idx = 0usize;

    // Analytic capture in the region skipped by branch following.
    if phi_start < start - 1e-15 * rb {
        while idx < nodes.len() && nodes[idx] > phi_start + 1e-15 * rb {
            let x = nodes[idx];
            let z = if (x - start).abs() <= 1e-15 * rb {
                z_start_seed_value(model, c, x, seed, eps)
            } else {
                quasi_eq_value(model, c, x).0
            };
            if z < 0.0 {
                captured.push((x, z));
            }
            idx += 1;
        }
    }
    // The hand-off point itself.
    while idx < nodes.len() && nodes[idx] >= phi_start - 1e-15 * rb {
        captured.push((nodes[idx].min(phi_start), z_start));
        idx += 1;
    }
    if captured.is_empty() || (captured.last().unwrap().0 - phi_start).abs() > 1e-12 * rb {
        captured.push((phi_start, z_start));
    }

    // Residual probes: uniform nodes away from both endpoints.
    let dx = rb / opts.grid_cells as f64;
    let probe_lo = 4.0 * dx;
    let probe_hi = rb - 32.0 * dx;
    let mut residual_sup = 0.0_f64;

    // Probes in the analytically captured region.
    for &(x, z) in &captured {
        if x < probe_lo || x > probe_hi || x >= phi_start {
            continue;
        }
        let d = probe_halfwidth(x, rb);
        let num = fd4(|u| quasi_eq_value(model, c, u).0, x, d);
        let r = (num - rhs(x, z)).abs() / z.abs().max(1.0);
        residual_sup = residual_sup.max(r);
    }

    let rk_opts = RkOptions {
        rel_tol: opts.rel_tol,
        abs_tol: opts.abs_tol,
        max_steps: opts.max_steps,
        h_init: Some((rb - phi_start).max(eps) / 50.0),
        // The dense interpolant's mid-step defect scales like h^4 once the
        // step is held below what the error controller would pick, so a
        // moderate cap buys two orders of residual accuracy for a few
        // hundred extra steps.
        h_max: Some(rb / 256.0),
    };
    let abs_floor = opts.abs_tol;

    // The zero-approach stop must not trigger on the seed itself: square
    // root balance seeds start at |z| ~ eps^d, far below any tolerance.
    // Arm the stop once the solution has grown clear of the floor.
    let mut armed = z_start <= -100.0 * abs_floor;
    let result = integrate(
        &rhs,
        phi_start,
        z_start,
        0.0,
        &rk_opts,
        &mut |step| {
            // Capture nodes inside this step (density decreases).
            while idx < nodes.len() && nodes[idx] >= step.x1 {
                let x = nodes[idx];
                if x <= step.x0 {
                    let z = step.eval(x);
                    if z < 0.0 {
                        captured.push((x, z));
                        // Residual probe when the stencil fits in the step.
                        if x >= probe_lo && x <= probe_hi {
                            let d = probe_halfwidth(x, rb);
                            if x - 2.0 * d > step.x1 && x + 2.0 * d < step.x0 {
                                let num = fd4(|u| step.eval(u), x, d);
                                let r = (num - rhs(x, z)).abs() / z.abs().max(1.0);
                                residual_sup = residual_sup.max(r);
                            }
                        }
                    }
                }
                idx += 1;
            }
            if !armed && step.y1 <= -100.0 * abs_floor {
                armed = true;
            }
            if armed && step.y1 >= -abs_floor {
                Control::Stop
            } else {
                // Near the degenerate top |z| is small, the step tolerance is
                // dominated by abs_tol, and the interpolant defect grows like
                // abs_tol / h.  Tie the cap to the distance from the top so
                // that region is resolved finely enough for the defect to stay
                // below the reported residual.
                Control::CapNext(((rb - step.x1) / 48.0).max(1e-4 * rb))
            }
        },
    )
    .map_err(|detail| Error::Solver { stage: "downward integration".into(), detail })?;

    let truncated_at = if result.stopped {
        // Flattening to numerical zero deep in the interior means the
        // negativity structure was lost, not that the boundary was reached.
        if result.x_end > 0.1 * rb {
            return Err(Error::Solver {
                stage: "downward integration".into(),
                detail: format!(
                    "z reached numerical zero at rho = {:.6e}; negativity violated, \
                     reduce eps_top or tolerances",
                    result.x_end
                ),
            });
        }
        Some(result.x_end)
    } else {
        None
    };
    let z0 = result.y_end.min(0.0);

    // Assemble the ascending grid with the pinned zero at the top.
    captured.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    captured.dedup_by(|a, b| (a.0 - b.0).abs() <= 1e-14 * rb);
    captured.retain(|&(x, z)| x < rb && z < 0.0);
    if captured.is_empty() {
        return Err(Error::Solver {
            stage: "grid assembly".into(),
            detail: "no interior values captured".into(),
        });
    }
    let mut grid: Vec<f64> = captured.iter().map(|p| p.0).collect();
    let mut values: Vec<f64> = captured.iter().map(|p| p.1).collect();
    grid.push(rb);
    values.push(0.0);

    let interp = MonotoneCubic::new(grid.clone(), values.clone())
        .map_err(|e| Error::Solver { stage: "grid assembly".into(), detail: e })?;

    // Tail model above the last interior point: prefer the seed
    // asymptotics, otherwise fit a local power law to the topmost values.
    let (top_exponent, top_coeff) = match seed {
        Some(s) => (s.exponent, s.coeff),
        None => fit_top_power(&grid, &values, rb),
    };

    Ok(ZSolution {
        c,
        grid,
        values,
        z0,
        zdot_at_top: zdot_top,
        ell,
        seed_offset: eps,
        seed_kind: seed.map(|s| s.kind).unwrap_or(SeedKind::QuasiEquilibrium),
        residual_sup,
        truncated_at,
        top_exponent,
        top_coeff,
        interp,
    })
}

fn z_start_seed_value(
    model: &Model,
    c: f64,
    x: f64,
    seed: Option<SeedModel>,
    _eps: f64,
) -> f64 {
    match seed {
        Some(s) => -s.coeff * (model.rho_bar - x).powf(s.exponent),
        None => quasi_eq_value(model, c, x).0,
    }
}

/// Power-law fit z ~ -C s^p from the two interior grid points nearest the
/// top (fallback when no metadata describes the endpoint).
fn fit_top_power(grid: &[f64], values: &[f64], rb: f64) -> (f64, f64) {
    let n = grid.len();
    if n < 3 {
        return (1.0, values[0].abs() / (rb - grid[0]).max(1e-300));
    }
    let (s1, z1) = (rb - grid[n - 2], values[n - 2].abs());
    let (s2, z2) = (rb - grid[n - 3], values[n - 3].abs());
    if s1 <= 0.0 || s2 <= s1 || z1 <= 0.0 || z2 <= 0.0 {
        return (1.0, z1 / s1.max(1e-300));
    }
    let p = (z2 / z1).ln() / (s2 / s1).ln();
    let p = p.clamp(0.1, 10.0);
    (p, z1 / s1.powf(p))
}

// ---------------------------------------------------------------------------
// Critical speed
// ---------------------------------------------------------------------------

/// Result of the critical-speed search.
#[derive(Debug, Clone)]
pub struct CriticalSpeed {
    pub c_star: f64,
    /// Bracket after each bisection step, outermost first.
    pub bracket_history: Vec<(f64, f64)>,
    /// Number of solves performed.
    pub evaluations: usize,
}

/// Locate the threshold speed above which z(0+) vanishes, by geometric
/// bracket expansion and bisection on the dichotomy predicate
/// |z(0+)| <= zero_threshold.
pub fn critical_speed(
    model: &Model,
    c_lo: f64,
    c_hi: f64,
    tol: f64,
    opts: &SolverOptions,
) -> Result<CriticalSpeed> {
    if !(c_lo < c_hi) || !(tol > 0.0) {
        return Err(Error::pre("critical speed needs c_lo < c_hi and tol > 0"));
    }
    // The dichotomy requires the source to vanish at 0 (or an equivalent
    // degenerate structure of D there).
    let d_zero_ok = {
        let o = model.diffusivity.order_at_zero();
        model.d(0.0).abs() <= 1e-9 && o.map(|v| v.order >= 1.0 - 1e-12).unwrap_or(false)
    };
    if !model.has_tag(Tag::G0) && !d_zero_ok {
        return Err(Error::pre(
            "critical-speed search requires tag g0, or D(0) = 0 with D growing \
             at most linearly there",
        ));
    }

    let mut evals = 0usize;
    let mut probe = |c: f64| -> Result<bool> {
        evals += 1;
        let sol = solve_z(model, c, opts)?;
        Ok(sol.z0_vanishes(opts.zero_threshold))
    };

    let mut lo = c_lo;
    let mut hi = c_hi;
    let mut p_lo = probe(lo)?;
    let mut p_hi = probe(hi)?;
    let mut width = hi - lo;
    let mut doublings = 0;
    while p_lo == p_hi {
        if doublings >= 60 {
            return Err(Error::Bisection {
                detail: format!(
                    "no sign change of the vanishing predicate on [{lo}, {hi}]: \
                     check assumptions"
                ),
            });
        }
        width *= 2.0;
        if p_lo {
            // Vanishing everywhere so far: push the lower end down.
            lo -= width;
            p_lo = probe(lo)?;
        } else {
            hi += width;
            p_hi = probe(hi)?;
        }
        doublings += 1;
    }
    if p_lo {
        return Err(Error::Bisection {
            detail: "predicate inverted: z(0+) vanishes below the bracket".into(),
        });
    }

    let mut history = vec![(lo, hi)];
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if probe(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
        history.push((lo, hi));
    }
    Ok(CriticalSpeed { c_star: 0.5 * (lo + hi), bracket_history: history, evaluations: evals })
}

// ---------------------------------------------------------------------------
// Bracketing diagnostics
// ---------------------------------------------------------------------------

/// Outcome of one bracket comparison.
#[derive(Debug, Clone)]
pub enum BracketOutcome {
    /// Worst margin by which the solution stayed on the right side.
    Pass { margin: f64 },
    Fail { margin: f64, at: f64 },
    NotApplicable { reason: String },
}

impl BracketOutcome {
    pub fn passed(&self) -> bool {
        matches!(self, BracketOutcome::Pass { .. })
    }
}

/// Both bracket diagnostics for one solution.
#[derive(Debug, Clone)]
pub struct BracketReport {
    pub upper: BracketOutcome,
    /// Scale factor chosen for the upper comparison curve -eps * D.
    pub upper_eps: Option<f64>,
    pub lower: BracketOutcome,
    /// Constant k of the lower comparison curve -k * D * (rho_bar-phi)^b.
    pub lower_k: Option<f64>,
}

/// Compare z against -eps_scale * D on the top quarter of the interval;
/// passing means z stays above the curve (the classical contact regime).
pub fn upper_bracket(zsol: &ZSolution, model: &Model, eps_scale: f64) -> BracketOutcome {
    let rb = model.rho_bar;
    let w = 0.25 * rb;
    let mut margin = f64::INFINITY;
    let mut worst_at = rb - w;
    for k in 0..=96 {
        // Log-spaced toward the top, where the comparison is sharpest.
        let s = w * (1e-6_f64).powf(k as f64 / 96.0);
        let phi = rb - s;
        if phi < zsol.phi_min() {
            continue;
        }
        let gap = zsol.eval(phi) + eps_scale * model.d(phi);
        if gap < margin {
            margin = gap;
            worst_at = phi;
        }
    }
    if margin > 0.0 {
        BracketOutcome::Pass { margin }
    } else {
        BracketOutcome::Fail { margin, at: worst_at }
    }
}

/// Verify the two comparison curves around a computed solution: above by
/// -eps D near the top (needs c > h(rho_bar)), below by
/// -k D (rho_bar - phi)^b on the top half (needs the declared source
/// lower-bound constants L and alpha).
pub fn bracket_check(zsol: &ZSolution, model: &Model, c: f64) -> BracketReport {
    let rb = model.rho_bar;
    let h_top = model.h_at_top();

    // Upper curve: adaptively scale from the ratio |z|/D at the window edge.
    let (upper, upper_eps) = if c > h_top + 1e-12 * (1.0 + c.abs() + h_top.abs()) {
        let edge = rb - 0.25 * rb;
        let d_edge = model.d(edge);
        if d_edge > 0.0 {
            let eps_scale = 2.0 * zsol.eval(edge).abs() / d_edge;
            (upper_bracket(zsol, model, eps_scale), Some(eps_scale))
        } else {
            (
                BracketOutcome::NotApplicable {
                    reason: "diffusivity vanishes at the probe window edge".into(),
                },
                None,
            )
        }
    } else {
        (
            BracketOutcome::NotApplicable {
                reason: "requires c > h(rho_bar)".into(),
            },
            None,
        )
    };

    // Lower curve from the declared source bound g >= L (rho_bar - rho)^alpha.
    let (lower, lower_k) = match (model.source_bound_l, model.source_bound_alpha) {
        (Some(l), Some(alpha)) if l > 0.0 => {
            let b = 0.25 * (alpha + 3.0); // strictly between (alpha+1)/2 and 1
            let half = 0.5 * rb;
            let m_max = model.diffusivity.min_max_on(half, rb, 512).1;
            let mut dmin: f64 = f64::INFINITY;
            for i in 0..=512 {
                let x = half + (rb - half) * i as f64 / 512.0;
                dmin = dmin.min(model.diffusivity.deriv(x));
            }
            let sigma2 = (-dmin).max(0.0);
            let mut hbar = f64::INFINITY;
            for i in 0..=512 {
                let x = half + (rb - half) * i as f64 / 512.0;
                hbar = hbar.min(model.h(x) - c);
            }
            let a_const = m_max * b * half.powf(2.0 * b - 1.0 - alpha);
            let mut k = 1.0_f64;
            let mut found = None;
            for _ in 0..80 {
                let cond = hbar - k * sigma2 * half.powf(b)
                    + half.powf(alpha - b) * (l / k - a_const * k);
                if cond > 0.0 {
                    found = Some(k);
                    break;
                }
                k *= 0.5;
            }
            match found {
                None => (
                    BracketOutcome::NotApplicable {
                        reason: "no admissible comparison constant".into(),
                    },
                    None,
                ),
                Some(k) => {
                    let mut margin = f64::INFINITY;
                    let mut worst_at = half;
                    for i in 0..=256 {
                        let phi = half + (rb - half) * i as f64 / 256.0;
                        if phi < zsol.phi_min() || phi >= rb {
                            continue;
                        }
                        let omega = -k * model.d(phi) * (rb - phi).powf(b);
                        let gap = omega - zsol.eval(phi);
                        if gap < margin {
                            margin = gap;
                            worst_at = phi;
                        }
                    }
                    if margin > -1e-9 {
                        (BracketOutcome::Pass { margin }, Some(k))
                    } else {
                        (BracketOutcome::Fail { margin, at: worst_at }, Some(k))
                    }
                }
            }
        }
        _ => (
            BracketOutcome::NotApplicable {
                reason: "source lower-bound constants L, alpha not declared".into(),
            },
            None,
        ),
    };

    BracketReport { upper, upper_eps, lower, lower_k }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ScalarField;

    fn powers_model(a: f64, b: f64) -> Model {
        Model::assemble(
            1.0,
            ScalarField::constant(0.0, 1.0),
            ScalarField::power_top(1.0, a, 1.0),
            ScalarField::power_top(1.0, b, 1.0),
            vec![Tag::D, Tag::G],
            None,
            None,
            None,
        )
        .unwrap()
    }

    fn aronson_model() -> Model {
        Model::assemble(
            1.0,
            ScalarField::constant(0.0, 1.0),
            ScalarField::linear(0.0, 1.0, 1.0),
            ScalarField::product(1.0, 1.0, 1.0, 1.0),
            vec![Tag::DHat, Tag::G0],
            None,
            None,
            None,
        )
        .unwrap()
    }

    #[test]
    fn endpoint_slope_formula_cases() {
        assert_eq!(zdot_at_endpoint(0.0, 1.0, EllLimit::Finite(0.0)).unwrap(), 0.0);
        assert_eq!(zdot_at_endpoint(0.0, -1.0, EllLimit::Finite(0.0)).unwrap(), 1.0);
        let v = zdot_at_endpoint(0.5, 0.5, EllLimit::Finite(-1.0)).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
        assert!(zdot_at_endpoint(0.0, 0.0, EllLimit::MinusInfinity).is_err());
    }

    #[test]
    fn closed_form_model_solves_accurately() {
        // D = (1-phi)^2, g = 1-phi, h = 0, c = 0: z = -(1-phi)^2 / sqrt(2).
        let m = powers_model(2.0, 1.0);
        let sol = solve_z(&m, 0.0, &SolverOptions::default()).unwrap();
        let exact = |phi: f64| -(1.0 - phi) * (1.0 - phi) / 2.0_f64.sqrt();
        for phi in [0.05, 0.3, 0.5, 0.7, 0.9, 0.99] {
            assert!(
                (sol.eval(phi) - exact(phi)).abs() < 1e-8,
                "z({phi}) = {} vs {}",
                sol.eval(phi),
                exact(phi)
            );
        }
        assert!((sol.z0 - (-1.0 / 2.0_f64.sqrt())).abs() < 1e-8, "z0 = {}", sol.z0);
        assert_eq!(*sol.values.last().unwrap(), 0.0);
        assert!(sol.values[..sol.values.len() - 1].iter().all(|&v| v < 0.0));
        // The solution is a quadratic polynomial, so the integrator and its
        // interpolant are exact and the residual reduces to rounding.
        assert!(
            sol.residual_sup < 10.0 * 1e-10,
            "residual {}",
            sol.residual_sup
        );
        assert_eq!(sol.zdot_at_top, 0.0);
    }

    #[test]
    fn grid_is_strictly_increasing_and_ends_at_top() {
        let m = powers_model(2.0, 1.0);
        let sol = solve_z(&m, 0.0, &SolverOptions::default()).unwrap();
        for w in sol.grid.windows(2) {
            assert!(w[1] > w[0]);
        }
        assert_eq!(*sol.grid.last().unwrap(), 1.0);
        assert!(sol.grid[0] > 0.0);
    }

    #[test]
    fn quasi_equilibrium_branch_handles_supercritical_speed() {
        // c = 1 > h(rho_bar) = 0 forces the flat endpoint slope; the
        // quasi-equilibrium asymptotics give z ~ -(1-phi)^3 near the top.
        let m = powers_model(2.0, 1.0);
        let sol = solve_z(&m, 1.0, &SolverOptions::default()).unwrap();
        assert_eq!(sol.seed_kind, SeedKind::QuasiEquilibrium);
        assert_eq!(sol.zdot_at_top, 0.0);
        let phi = 1.0 - 1e-3;
        let expect = -(1e-3_f64).powi(3);
        assert!(
            (sol.eval(phi) - expect).abs() < 1e-10 + 0.05 * expect.abs(),
            "near-top value {} vs {}",
            sol.eval(phi),
            expect
        );
        assert!(sol.z0 < -0.1, "z0 = {}", sol.z0);
        assert!(sol.residual_sup < 1e-7, "residual {}", sol.residual_sup);
    }

    #[test]
    fn linear_seed_for_subcritical_speed() {
        // c = -1 < h(rho_bar) = 0: endpoint slope 1, sharp regime.
        let m = powers_model(2.0, 1.0);
        let sol = solve_z(&m, -1.0, &SolverOptions::default()).unwrap();
        assert_eq!(sol.seed_kind, SeedKind::Linear);
        assert!((sol.zdot_at_top - 1.0).abs() < 1e-14);
        // z(1 - d)/d -> -zdot as d -> 0.
        let d = 1e-4;
        let ratio = sol.eval(1.0 - d) / d;
        assert!((ratio + 1.0).abs() < 1e-2, "ratio {ratio}");
    }

    #[test]
    fn vanishing_boundary_value_detected_above_threshold_speed() {
        let m = aronson_model();
        let opts = SolverOptions::default();
        let below = solve_z(&m, 0.3, &opts).unwrap();
        assert!(below.z0 < -1e-3, "z0 = {} should stay negative", below.z0);
        let above = solve_z(&m, 1.0, &opts).unwrap();
        assert!(above.z0_vanishes(opts.zero_threshold), "z0 = {}", above.z0);
    }

    #[test]
    fn critical_speed_of_linear_degenerate_diffusivity() {
        let m = aronson_model();
        let opts = SolverOptions { grid_cells: 256, ..Default::default() };
        let cs = critical_speed(&m, 0.0, 2.0, 1e-4, &opts).unwrap();
        let expect = 1.0 / 2.0_f64.sqrt();
        assert!(
            (cs.c_star - expect).abs() < 2e-4,
            "c* = {} vs {}",
            cs.c_star,
            expect
        );
        assert!(cs.evaluations > 5);
        let (lo, hi) = *cs.bracket_history.last().unwrap();
        assert!(hi - lo <= 1e-4 * (1.0 + 1e-12));
    }

    #[test]
    fn critical_speed_requires_degenerate_zero_end() {
        let m = powers_model(2.0, 1.0); // g(0) = 1 > 0, D(0) = 1 > 0
        let e = critical_speed(&m, 0.0, 2.0, 1e-3, &SolverOptions::default());
        assert!(e.is_err());
    }

    #[test]
    fn seed_error_without_metadata_at_borderline_speed() {
        // Tabulated fields hide the endpoint orders; at c = h(rho_bar) the
        // quasi-equilibrium fallback divides by zero and must refuse.
        let n = 512;
        let xs: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let d: Vec<f64> = xs.iter().map(|x| (1.0 - x) * (1.0 - x)).collect();
        let g: Vec<f64> = xs.iter().map(|x| 1.0 - x).collect();
        let m = Model::assemble(
            1.0,
            ScalarField::constant(0.0, 1.0),
            ScalarField::table(xs.clone(), d, 1.0).unwrap(),
            ScalarField::table(xs, g, 1.0).unwrap(),
            vec![Tag::D, Tag::G],
            None,
            None,
            None,
        )
        .unwrap();
        let e = solve_z(&m, 0.0, &SolverOptions::default());
        assert!(e.is_err(), "borderline speed without metadata must refuse to seed");
    }

    #[test]
    fn brackets_for_supercritical_linear_diffusivity() {
        // D = 1 - phi, g = (1 - phi)^(1/2), c = 1 > h = 0, with declared
        // lower-bound constants L = 1, alpha = 1/2.
        let m = Model::assemble(
            1.0,
            ScalarField::constant(0.0, 1.0),
            ScalarField::power_top(1.0, 1.0, 1.0),
            ScalarField::power_top(1.0, 0.5, 1.0),
            vec![Tag::D, Tag::G],
            None,
            Some(1.0),
            Some(0.5),
        )
        .unwrap();
        let sol = solve_z(&m, 1.0, &SolverOptions::default()).unwrap();
        let report = bracket_check(&sol, &m, 1.0);
        assert!(report.upper.passed(), "upper: {:?}", report.upper);
        assert!(report.lower.passed(), "lower: {:?}", report.lower);
        // Doubling the upper scale keeps the comparison valid.
        let eps = report.upper_eps.unwrap();
        assert!(upper_bracket(&sol, &m, 2.0 * eps).passed());
    }

    #[test]
    fn brackets_report_not_applicable_when_hypotheses_missing() {
        let m = powers_model(2.0, 1.0);
        let sol = solve_z(&m, 0.0, &SolverOptions::default()).unwrap();
        let report = bracket_check(&sol, &m, 0.0);
        assert!(matches!(report.upper, BracketOutcome::NotApplicable { .. }));
        assert!(matches!(report.lower, BracketOutcome::NotApplicable { .. }));
    }

    #[test]
    fn determinism_bitwise() {
        let m = powers_model(2.0, 1.0);
        let a = solve_z(&m, 0.25, &SolverOptions::default()).unwrap();
        let b = solve_z(&m, 0.25, &SolverOptions::default()).unwrap();
        assert_eq!(a.grid, b.grid);
        assert_eq!(a.values, b.values);
        assert_eq!(a.z0, b.z0);
    }
}
