//! Source-family convergence experiments.
//!
//! Starting from a monostable source g0 (zeros exactly at 0 and rho_bar),
//! the family g_n = g0 + bump/n decreases pointwise to g0 as n grows.
//! Each member admits semi-wavefronts from the top at any speed at which
//! the base model admits a wavefront, and the corresponding z solutions
//! increase monotonically toward the base z. This module builds such
//! families, checks the z-level comparison between any two admissible
//! configurations, and measures how fast the profiles converge in C0 and
//! C1 on a compact window.

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::model::{Model, Tag};
use crate::profile::{semi_wavefront, xi_of_phi, Direction, ProfileOptions, ProfileSolution};
use crate::zsolver::{critical_speed, solve_z, SolverOptions, ZSolution};

/// Parameters of a convergence run.
#[derive(Debug, Clone)]
pub struct ConvergenceOptions {
    pub solver: SolverOptions,
    /// Initial bracket handed to the critical-speed search.
    pub critical_window: [f64; 2],
    pub critical_tol: f64,
    /// Density band (as fractions of rho_bar) for the z sup-errors.
    pub band: [f64; 2],
    /// Central fraction of the bounded profile window used for the
    /// C0/C1 comparison when no interval is given explicitly.
    pub interval_fraction: f64,
    pub xi_interval: Option<[f64; 2]>,
    pub profile_points: usize,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        ConvergenceOptions {
            solver: SolverOptions::default(),
            critical_window: [0.0, 2.0],
            critical_tol: 1e-4,
            band: [0.1, 0.9],
            interval_fraction: 0.6,
            xi_interval: None,
            profile_points: 2049,
        }
    }
}

/// Measured errors and checks of one convergence run, one entry per
/// family index.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub c: f64,
    /// Critical speed of the base model (the run requires c at or above it).
    pub c_star: f64,
    pub n_values: Vec<usize>,
    /// sup |z_n - z_0| over the density band.
    pub z_sup_errors: Vec<f64>,
    /// sup |phi_n - phi_0| over the xi comparison interval.
    pub phi_c0_errors: Vec<f64>,
    /// sup |phi_n' - phi_0'| over the same interval, derivatives taken
    /// through the reduction phi' = z(phi)/D(phi).
    pub phi_c1_errors: Vec<f64>,
    /// Per-n profile ordering: phi_n above the base left of 0, below it
    /// right of 0, with the single crossing pinned at 0.
    pub ordering_checks: Vec<bool>,
    /// Per-n z-level ordering: z_{previous n} <= z_n <= z_0 within slack.
    pub z_monotone_checks: Vec<bool>,
    /// The xi interval actually compared.
    pub xi_interval: [f64; 2],
    pub converged: bool,
    /// Set when the comparison window had to be truncated (half-line
    /// existence interval or early zero contact of a family member).
    pub note: Option<String>,
}

impl ConvergenceReport {
    /// Render the per-n table; columns `n,z_sup_err,c0_err,c1_err,ordering_ok`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,z_sup_err,c0_err,c1_err,ordering_ok\n");
        for i in 0..self.n_values.len() {
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{}\n",
                self.n_values[i],
                self.z_sup_errors[i],
                self.phi_c0_errors[i],
                self.phi_c1_errors[i],
                self.ordering_checks[i]
            ));
        }
        out
    }
}

/// The default perturbation rho_bar - rho: positive below the top,
/// vanishing exactly at it.
pub fn default_bump(rho_bar: f64) -> ScalarField {
    ScalarField::linear(rho_bar, -1.0, rho_bar)
}

/// Build the n-th family member g0 + bump/n.
///
/// The bump must be positive strictly below the top and vanish at it, so
/// every member keeps a positive source inside and the common zero at
/// rho_bar; the members then decrease pointwise in n with uniform rate
/// sup(bump)/n.
pub fn build_family(g0: &ScalarField, n: usize, bump: &ScalarField) -> Result<ScalarField> {
    if n == 0 {
        return Err(Error::pre("family index n must be positive"));
    }
    let rb = g0.rho_bar();
    if (bump.rho_bar() - rb).abs() > 1e-12 * rb.max(1.0) {
        return Err(Error::pre("bump and g0 declare different top densities"));
    }
    let mut scale = 0.0f64;
    for k in 0..=512 {
        let x = rb * k as f64 / 512.0;
        let b = bump.eval(x);
        scale = scale.max(b.abs());
        if x < rb * (1.0 - 1e-9) && !(b > 0.0) {
            return Err(Error::pre(format!(
                "bump must be positive below the top; bump({x:.6e}) = {b:.6e}"
            )));
        }
        let g = g0.eval(x);
        if !(g >= -1e-12 * (1.0 + scale)) {
            return Err(Error::pre(format!(
                "base source must be nonnegative; g0({x:.6e}) = {g:.6e}"
            )));
        }
    }
    if bump.eval(rb).abs() > 1e-9 * scale.max(1.0) {
        return Err(Error::pre(format!(
            "bump must vanish at the top; bump({rb}) = {:.6e}",
            bump.eval(rb)
        )));
    }
    if g0.eval(rb).abs() > 1e-9 * scale.max(1.0) {
        return Err(Error::pre("base source must vanish at the top"));
    }
    Ok(ScalarField::sum(
        vec![(1.0, g0.clone()), (1.0 / n as f64, bump.clone())],
        rb,
    ))
}

/// Outcome of one z-level comparison.
#[derive(Debug, Clone)]
pub struct OrderingReport {
    /// z1 >= z2 - 1e-8 held on the whole merged grid.
    pub ok: bool,
    /// Minimum of z1 - z2 over the merged grid, and where it occurred.
    pub min_gap: f64,
    pub min_gap_at: f64,
    /// With c1 strictly above c2, the gap stays positive on the interior
    /// band; false whenever c1 = c2.
    pub strict_interior: bool,
}

/// Compare the z solutions of two configurations with ordered sources
/// (g1 <= g2 pointwise) and ordered speeds (c1 >= c2): the smaller source
/// at the faster speed must give the larger (less negative) z.
///
/// When g1 vanishes at 0 the first configuration only reaches density 0
/// at wavefront speeds, so c1 is checked against the critical speed of
/// the first model before any comparison runs.
pub fn compare_z(
    model1: &Model,
    c1: f64,
    model2: &Model,
    c2: f64,
    opts: &SolverOptions,
) -> Result<OrderingReport> {
    let rb = model1.rho_bar;
    if (model2.rho_bar - rb).abs() > 1e-12 * rb.max(1.0) {
        return Err(Error::pre("models declare different top densities"));
    }
    if !(c2 <= c1) {
        return Err(Error::pre(format!(
            "speed ordering violated: c1 = {c1} must be at least c2 = {c2}"
        )));
    }
    let mut gmax = 0.0f64;
    for k in 0..=512 {
        let x = rb * k as f64 / 512.0;
        let (a, b) = (model1.g(x), model2.g(x));
        gmax = gmax.max(a.abs()).max(b.abs());
        if a > b + 1e-12 * (1.0 + gmax) {
            return Err(Error::pre(format!(
                "source ordering violated at density {x:.6e}: g1 = {a:.6e} > g2 = {b:.6e}"
            )));
        }
    }
    if model1.g(0.0).abs() <= 1e-12 * (1.0 + gmax) {
        let cs = critical_speed(
            model1,
            (c1 - 1.0).min(0.0),
            c1.max(1.0),
            1e-3,
            opts,
        )?;
        if c1 < cs.c_star - 2e-3 {
            return Err(Error::pre(format!(
                "wavefront does not exist below critical speed: c1 = {c1} < c* = {:.6}",
                cs.c_star
            )));
        }
    }
    let z1 = solve_z(model1, c1, opts)?;
    let z2 = solve_z(model2, c2, opts)?;

    let lo = z1.phi_min().max(z2.phi_min());
    let mut merged: Vec<f64> = z1
        .grid
        .iter()
        .chain(z2.grid.iter())
        .copied()
        .filter(|&x| x >= lo && x < rb)
        .collect();
    merged.sort_by(|a, b| a.partial_cmp(b).unwrap());
    merged.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * rb);

    let mut min_gap = f64::INFINITY;
    let mut min_at = lo;
    let mut strict = c1 > c2 + 1e-12;
    for &x in &merged {
        let gap = z1.eval(x) - z2.eval(x);
        if gap < min_gap {
            min_gap = gap;
            min_at = x;
        }
        if x >= 0.1 * rb && x <= 0.9 * rb && !(gap > 0.0) {
            strict = false;
        }
    }
    Ok(OrderingReport {
        ok: min_gap >= -1e-8,
        min_gap,
        min_gap_at: min_at,
        strict_interior: strict,
    })
}

/// xi at the first tabulated density at or above `phi` (the table is
/// ascending in density, descending in xi).
fn xi_at_density(table_phi: &[f64], table_xi: &[f64], phi: f64) -> f64 {
    let k = table_phi.partition_point(|&p| p < phi);
    table_xi[k.min(table_xi.len() - 1)]
}

/// Run the family experiment: solve the base model and each member at a
/// common speed, then record z-level and profile-level convergence.
pub fn run_convergence(
    model0: &Model,
    bump: &ScalarField,
    n_list: &[usize],
    c: f64,
    opts: &ConvergenceOptions,
) -> Result<ConvergenceReport> {
    if n_list.is_empty() {
        return Err(Error::pre("family index list is empty"));
    }
    for w in n_list.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::pre("family indices must be strictly increasing"));
        }
    }
    if !model0.has_tag(Tag::G0) {
        return Err(Error::pre(
            "convergence runs need a monostable base source (tag g0)",
        ));
    }
    let rb = model0.rho_bar;
    let cs = critical_speed(
        model0,
        opts.critical_window[0],
        opts.critical_window[1],
        opts.critical_tol,
        &opts.solver,
    )?;
    if c < cs.c_star - opts.critical_tol.max(1e-9) {
        return Err(Error::pre(format!(
            "wavefront does not exist below critical speed: c = {c} < c* = {:.6}",
            cs.c_star
        )));
    }

    let z0 = solve_z(model0, c, &opts.solver)?;
    let table0 = xi_of_phi(&z0, model0)?;
    let mut note: Option<String> = None;

    // Existence interval of the base profile, truncated to where the
    // computed data resolve it: within 10 percent of the top on a strict
    // side, and above 5 percent density at the bottom (the base z may
    // vanish at 0 for supercritical speeds, stretching xi beyond use).
    let lo_j = if table0.xi_bar.is_finite() {
        table0.xi_bar
    } else {
        note = Some("existence interval is a half-line; comparison window truncated".into());
        xi_at_density(&table0.phi, &table0.xi, rb * 0.9)
    };
    let hi_cut = xi_at_density(&table0.phi, &table0.xi, rb * 0.05);
    let hi_j = table0.varpi.min(hi_cut);
    let window = [lo_j, hi_j];
    let [alpha, beta] = opts.xi_interval.unwrap_or_else(|| {
        let mid = 0.5 * (lo_j + hi_j);
        let half = 0.5 * opts.interval_fraction * (hi_j - lo_j);
        [mid - half, mid + half]
    });
    if !(alpha < 0.0 && 0.0 < beta) {
        return Err(Error::pre(format!(
            "comparison interval [{alpha:.4}, {beta:.4}] must contain the normalization point 0"
        )));
    }

    let popts = ProfileOptions {
        solver: opts.solver.clone(),
        points: opts.profile_points,
        window: Some(window),
        center: 0.0,
    };
    let p0 = semi_wavefront(model0, c, Direction::FromTop, &popts)?;

    let band = [opts.band[0] * rb, opts.band[1] * rb];
    let band_grid: Vec<f64> = (0..=1600)
        .map(|k| band[0] + (band[1] - band[0]) * k as f64 / 1600.0)
        .collect();

    let mut report = ConvergenceReport {
        c,
        c_star: cs.c_star,
        n_values: n_list.to_vec(),
        z_sup_errors: Vec::new(),
        phi_c0_errors: Vec::new(),
        phi_c1_errors: Vec::new(),
        ordering_checks: Vec::new(),
        z_monotone_checks: Vec::new(),
        xi_interval: [alpha, beta],
        converged: false,
        note,
    };

    let mut prev_z: Option<ZSolution> = None;
    let mut alpha_eff = alpha;
    let mut beta_eff = beta;
    let mut runs: Vec<(ZSolution, ProfileSolution)> = Vec::new();
    for &n in n_list {
        let gn = build_family(&model0.source, n, bump)?;
        let tags: Vec<Tag> = model0
            .tags
            .iter()
            .map(|&t| if t == Tag::G0 { Tag::G } else { t })
            .collect();
        let mn = Model::assemble(
            rb,
            model0.advection.clone(),
            model0.diffusivity.clone(),
            gn,
            tags,
            None,
            model0.source_bound_l,
            model0.source_bound_alpha,
        )?;
        let zn = solve_z(&mn, c, &opts.solver)?;
        let pn = semi_wavefront(&mn, c, Direction::FromTop, &popts)?;
        // A steep member can reach density 0 before beta; shrink the
        // common window to where every profile is strictly inside.
        let last_alive = pn
            .xi_grid
            .iter()
            .zip(&pn.phi_values)
            .rev()
            .find(|(_, &v)| v > 1e-9)
            .map(|(&x, _)| x)
            .unwrap_or(beta);
        if last_alive < beta_eff {
            beta_eff = last_alive;
            report.note = Some(format!(
                "comparison window cut at xi = {beta_eff:.4} where the steepest member reaches 0"
            ));
        }
        let first_alive = pn
            .xi_grid
            .iter()
            .zip(&pn.phi_values)
            .find(|(_, &v)| v < rb - 1e-9)
            .map(|(&x, _)| x)
            .unwrap_or(alpha);
        alpha_eff = alpha_eff.max(first_alive);

        let mut zsup = 0.0f64;
        for &x in &band_grid {
            zsup = zsup.max((zn.eval(x) - z0.eval(x)).abs());
        }
        report.z_sup_errors.push(zsup);

        let mut mono = true;
        for &x in &band_grid {
            if zn.eval(x) > z0.eval(x) + 1e-8 {
                mono = false;
            }
            if let Some(zp) = &prev_z {
                if zn.eval(x) < zp.eval(x) - 1e-8 {
                    mono = false;
                }
            }
        }
        report.z_monotone_checks.push(mono);
        prev_z = Some(zn.clone());
        runs.push((zn, pn));
    }

    for (zn, pn) in &runs {
        let mut c0 = 0.0f64;
        let mut c1e = 0.0f64;
        let mut ordered = true;
        let mut strict_left = false;
        let mut strict_right = false;
        for j in 0..pn.xi_grid.len().min(p0.xi_grid.len()) {
            let x = pn.xi_grid[j];
            if x != p0.xi_grid[j] || x < alpha_eff || x > beta_eff {
                continue;
            }
            let (a, b) = (pn.phi_values[j], p0.phi_values[j]);
            let diff = a - b;
            c0 = c0.max(diff.abs());
            let da = zn.eval(a) / model0.d(a).max(1e-300);
            let db = z0.eval(b) / model0.d(b).max(1e-300);
            c1e = c1e.max((da - db).abs());
            let cell = pn.xi_grid[1] - pn.xi_grid[0];
            if x < -cell {
                if diff < -1e-10 {
                    ordered = false;
                }
                if diff > 1e-9 {
                    strict_left = true;
                }
            } else if x > cell {
                if diff > 1e-10 {
                    ordered = false;
                }
                if diff < -1e-9 {
                    strict_right = true;
                }
            }
        }
        report.phi_c0_errors.push(c0);
        report.phi_c1_errors.push(c1e);
        report.ordering_checks.push(ordered && strict_left && strict_right);
    }
    report.xi_interval = [alpha_eff, beta_eff];

    let last = report.n_values.len() - 1;
    report.converged = report.z_sup_errors[last] <= 1e-3
        && report.phi_c1_errors[last] <= 1e-2
        && report.ordering_checks.iter().all(|&b| b)
        && report.z_monotone_checks.iter().all(|&b| b);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ScalarField;

    /// D = rho, g = rho(1 - rho), h = 0: degenerate diffusion at 0 with a
    /// monostable source; the critical speed is 1/sqrt(2).
    fn aronson() -> Model {
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

    fn family_model(n: usize) -> Model {
        let base = aronson();
        let gn = build_family(&base.source, n, &default_bump(1.0)).unwrap();
        Model::assemble(
            1.0,
            base.advection.clone(),
            base.diffusivity.clone(),
            gn,
            vec![Tag::DHat, Tag::G],
            None,
            None,
            None,
        )
        .unwrap()
    }

    #[test]
    fn family_members_decrease_toward_the_base() {
        let g0 = aronson().source;
        let bump = default_bump(1.0);
        let g10 = build_family(&g0, 10, &bump).unwrap();
        assert!((g10.eval(0.0) - 0.1).abs() < 1e-14);
        assert!(g10.eval(1.0).abs() < 1e-14);
        let g20 = build_family(&g0, 20, &bump).unwrap();
        let mut sup10 = 0.0f64;
        for k in 0..=100 {
            let x = k as f64 / 100.0;
            let (a, b) = (g10.eval(x), g20.eval(x));
            assert!(a >= b - 1e-14, "family not decreasing at {x}");
            assert!(b >= g0.eval(x) - 1e-14);
            sup10 = sup10.max(a - g0.eval(x));
        }
        assert!((sup10 - 0.1).abs() < 1e-12, "uniform rate sup(bump)/n");
    }

    #[test]
    fn family_rejects_bad_bumps() {
        let g0 = aronson().source;
        // Negative near 0.
        let bad = ScalarField::linear(-0.5, 1.0, 1.0);
        assert!(build_family(&g0, 3, &bad).is_err());
        // Does not vanish at the top.
        let bad = ScalarField::constant(1.0, 1.0);
        assert!(build_family(&g0, 3, &bad).is_err());
        assert!(build_family(&g0, 0, &default_bump(1.0)).is_err());
    }

    #[test]
    fn equal_configurations_compare_exactly() {
        let m = family_model(4);
        let r = compare_z(&m, 1.0, &m, 1.0, &SolverOptions::default()).unwrap();
        assert!(r.ok);
        assert_eq!(r.min_gap, 0.0);
        assert!(!r.strict_interior);
    }

    #[test]
    fn smaller_source_gives_larger_z() {
        let base = aronson();
        let m1 = family_model(1);
        let r = compare_z(&base, 1.0, &m1, 1.0, &SolverOptions::default()).unwrap();
        assert!(r.ok, "min gap {} at {}", r.min_gap, r.min_gap_at);
        let r = compare_z(&base, 1.2, &m1, 1.0, &SolverOptions::default()).unwrap();
        assert!(r.ok && r.strict_interior);
    }

    #[test]
    fn misordered_sources_are_rejected_with_witness() {
        let base = aronson();
        let m1 = family_model(1);
        let err = compare_z(&m1, 1.0, &base, 1.0, &SolverOptions::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("density"), "message: {msg}");
    }

    #[test]
    fn subcritical_degenerate_comparison_is_rejected() {
        let base = aronson();
        let err = compare_z(&base, 0.4, &base, 0.3, &SolverOptions::default()).unwrap_err();
        assert!(err.to_string().contains("critical"), "{err}");
    }

    #[test]
    fn aronson_family_converges_monotonically() {
        let base = aronson();
        let r = run_convergence(
            &base,
            &default_bump(1.0),
            &[1, 2, 4, 8],
            1.0,
            &ConvergenceOptions::default(),
        )
        .unwrap();
        assert!((r.c_star - 1.0 / 2.0f64.sqrt()).abs() < 5e-3, "c* = {}", r.c_star);
        for w in r.z_sup_errors.windows(2) {
            assert!(w[1] <= w[0] + 1e-10, "z errors not decreasing: {w:?}");
        }
        for w in r.phi_c1_errors.windows(2) {
            assert!(w[1] <= w[0] + 1e-10, "C1 errors not decreasing: {w:?}");
        }
        assert!(r.ordering_checks.iter().all(|&b| b), "{:?}", r.ordering_checks);
        assert!(r.z_monotone_checks.iter().all(|&b| b));
        assert!(r.xi_interval[0] < 0.0 && r.xi_interval[1] > 0.0);
        let csv = r.to_csv();
        assert!(csv.starts_with("n,z_sup_err,c0_err,c1_err,ordering_ok\n"));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn convergence_runs_are_deterministic() {
        let base = aronson();
        let opts = ConvergenceOptions::default();
        let bump = default_bump(1.0);
        let a = run_convergence(&base, &bump, &[2, 8], 1.0, &opts).unwrap();
        let b = run_convergence(&base, &bump, &[2, 8], 1.0, &opts).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn subcritical_speed_is_rejected() {
        let base = aronson();
        let err = run_convergence(
            &base,
            &default_bump(1.0),
            &[1, 2],
            0.3,
            &ConvergenceOptions::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("critical"), "{err}");
    }
}
