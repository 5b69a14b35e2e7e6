//! Traveling-wave profiles recovered from computed z solutions.
//!
//! The first-order reduction determines the wave coordinate as a function
//! of density,
//!
//!     xi(phi) = int_{rho_bar/2}^{phi} D(u) / z(u) du,
//!
//! a strictly decreasing map (the integrand is negative wherever z < 0).
//! Inverting it yields the profile phi(xi), normalized by
//! phi(0) = rho_bar/2. The map has two distinguished endpoints: xi_bar,
//! the abscissa where the profile meets the top density (finite exactly
//! when the width integral of D/|z| converges there), and varpi, the
//! abscissa where it reaches the opposite state or where the computed
//! data end. Beyond those contacts the profile continues as the constant
//! equilibrium when that constant actually solves the equation.
//!
//! Four orientations are exposed. Fronts attached to the top state are
//! computed directly; fronts traveling the other way solve the
//! advection-negated model at the negated speed and flip the axis; fronts
//! attached to the zero state solve the density-mirrored model and relabel
//! phi as rho_bar - phi.

use std::fmt;

use crate::classify::{classify, Classification, FrontKind, Monotonicity};
use crate::error::{Error, Result};
use crate::model::{Model, Tag};
use crate::numeric::pchip::MonotoneCubic;
use crate::numeric::quad::{adaptive_simpson, gauss5};
use crate::zsolver::{solve_z, SolverOptions, ZSolution};

/// Contact structure of a reconstructed profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    /// The degenerate state is approached only asymptotically.
    ClassicalStrict,
    /// The degenerate state is attained at finite xi_bar with a C1 contact.
    ClassicalNonStrict,
    /// The degenerate state is attained at finite xi_bar with a corner.
    Sharp,
}

impl ProfileKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProfileKind::ClassicalStrict => "classical-strict",
            ProfileKind::ClassicalNonStrict => "classical-nonstrict",
            ProfileKind::Sharp => "sharp",
        }
    }
}

impl fmt::Display for ProfileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Orientation of the requested wave.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Decreasing profile leaving the top state toward the left.
    FromTop,
    /// Increasing profile approaching the top state toward the right.
    ToTop,
    /// Increasing profile leaving the zero state toward the left.
    FromZero,
    /// Decreasing profile approaching the zero state toward the right.
    ToZero,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::FromTop => "from-top",
            Direction::ToTop => "to-top",
            Direction::FromZero => "from-zero",
            Direction::ToZero => "to-zero",
        }
    }

    pub fn parse(s: &str) -> Result<Direction> {
        match s {
            "from-top" => Ok(Direction::FromTop),
            "to-top" => Ok(Direction::ToTop),
            "from-zero" => Ok(Direction::FromZero),
            "to-zero" => Ok(Direction::ToZero),
            other => Err(Error::pre(format!(
                "unknown direction '{other}' (expected from-top, to-top, from-zero, or to-zero)"
            ))),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Tabulated wave coordinate as a function of density.
///
/// `phi` is ascending and `xi` strictly descending; the anchor
/// xi(rho_bar/2) = 0 is an exact table entry. When the contact integral
/// converges the last entry is (rho_bar, xi_bar) exactly.
#[derive(Debug, Clone)]
pub struct XiTable {
    pub phi: Vec<f64>,
    pub xi: Vec<f64>,
    /// Limit of xi at the top density; -infinity when the width integral
    /// diverges there.
    pub xi_bar: f64,
    /// xi at the lowest tabulated density (the zero-contact abscissa when
    /// the solution reached 0, otherwise the truncation abscissa).
    pub varpi: f64,
    /// Whether the z solution reached density 0 (as opposed to stopping
    /// at a positive truncation density).
    pub reached_zero: bool,
}

/// A reconstructed traveling-wave profile on an explicit xi grid.
#[derive(Debug, Clone)]
pub struct ProfileSolution {
    /// Strictly increasing abscissae; contains the normalization point
    /// where phi equals rho_bar/2 exactly.
    pub xi_grid: Vec<f64>,
    pub phi_values: Vec<f64>,
    /// Contact abscissa with the degenerate state the wave is attached to
    /// (infinite for strict profiles; mirrored to +infinity for the "to"
    /// orientations).
    pub xi_bar: f64,
    /// Abscissa where the profile reaches the opposite state, or where the
    /// computed data end.
    pub varpi: f64,
    pub kind: ProfileKind,
    pub direction: Direction,
    pub c: f64,
    /// One-sided profile derivatives at xi_bar (0 on the constant side;
    /// the front slope, possibly infinite, on the wave side).
    pub left_derivative_at_xi_bar: f64,
    pub right_derivative_at_xi_bar: f64,
    /// Set when the output window was cut short instead of being filled
    /// with a constant state that does not solve the equation.
    pub truncation_note: Option<String>,
}

/// Options shared by the profile entry points.
#[derive(Debug, Clone)]
pub struct ProfileOptions {
    pub solver: SolverOptions,
    /// Output grid size before contact-node adjustment.
    pub points: usize,
    /// Explicit output window; the span is chosen from the computed
    /// contact abscissae when absent. Must contain the centering point.
    pub window: Option<[f64; 2]>,
    /// Abscissa where the profile crosses rho_bar/2 (pure translation).
    pub center: f64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        ProfileOptions {
            solver: SolverOptions::default(),
            points: 4097,
            window: None,
            center: 0.0,
        }
    }
}

/// Build the wave-coordinate table for a computed z solution.
///
/// Quadrature runs over the solver grid enriched with interval midpoints,
/// anchored exactly at rho_bar/2, extended down to density 0 when the
/// solution reached it, and closed at the top by the improper tail of
/// D/z above the last computed point.
pub fn xi_of_phi(zsol: &ZSolution, model: &Model) -> Result<XiTable> {
    let rb = zsol.rho_bar();
    let n = zsol.grid.len();
    if n < 8 {
        return Err(Error::pre("z solution grid too small to build a profile"));
    }
    for (k, (&p, &v)) in zsol.grid.iter().zip(&zsol.values).enumerate() {
        if p < rb && !(v < 0.0) {
            return Err(Error::pre(format!(
                "z solution touches zero at interior density {p:.6e} (grid index {k}); \
                 the wave coordinate is undefined there"
            )));
        }
    }
    let reached_zero = zsol.truncated_at.is_none();

    // Node ladder: solver nodes plus midpoints (halving the inversion
    // error of the table), the exact anchor, and the bottom endpoint.
    let interior = &zsol.grid[..n - 1];
    let mut phi: Vec<f64> = Vec::with_capacity(2 * n + 4);
    if reached_zero {
        phi.push(0.0);
    }
    for w in interior.windows(2) {
        phi.push(w[0]);
        phi.push(0.5 * (w[0] + w[1]));
    }
    phi.push(interior[interior.len() - 1]);
    phi.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * rb);

    let half = 0.5 * rb;
    let anchor = match phi.binary_search_by(|x| x.partial_cmp(&half).unwrap()) {
        Ok(i) => i,
        Err(i) => {
            // Snap a nearby node onto the exact anchor, or insert one.
            if i < phi.len() && (phi[i] - half).abs() <= 1e-13 * rb {
                phi[i] = half;
                i
            } else if i > 0 && (phi[i - 1] - half).abs() <= 1e-13 * rb {
                phi[i - 1] = half;
                i - 1
            } else {
                phi.insert(i, half);
                i
            }
        }
    };

    let zq = quad_z(zsol);
    let f = |u: f64| model.d(u) / zq(u);
    let m = phi.len();
    let mut xi = vec![0.0; m];
    for i in anchor..m - 1 {
        let inc = adaptive_simpson(&f, phi[i], phi[i + 1], 1e-11, 1e-18);
        if !(inc < 0.0) {
            return Err(Error::Solver {
                stage: "profile quadrature".into(),
                detail: format!(
                    "wave coordinate failed to decrease over [{:.6e}, {:.6e}]",
                    phi[i],
                    phi[i + 1]
                ),
            });
        }
        xi[i + 1] = xi[i] + inc;
    }
    for i in (0..anchor).rev() {
        let inc = adaptive_simpson(&f, phi[i], phi[i + 1], 1e-11, 1e-18);
        if !(inc < 0.0) {
            return Err(Error::Solver {
                stage: "profile quadrature".into(),
                detail: format!(
                    "wave coordinate failed to decrease over [{:.6e}, {:.6e}]",
                    phi[i],
                    phi[i + 1]
                ),
            });
        }
        xi[i] = xi[i + 1] - inc;
    }

    let varpi = xi[0];
    let s_join = rb - *phi.last().unwrap();
    let tail = tail_increment(zsol, model, s_join);
    let xi_bar = if tail.is_finite() {
        let bar = xi[m - 1] + tail;
        phi.push(rb);
        xi.push(bar);
        bar
    } else {
        f64::NEG_INFINITY
    };

    Ok(XiTable {
        phi,
        xi,
        xi_bar,
        varpi,
        reached_zero,
    })
}

/// z evaluator for the wave-coordinate quadrature.
///
/// Near the degenerate top the stored nodes are geometrically spaced and
/// the shape-preserving interpolant's relative error at that spacing (a
/// few percent at dyadic ratios) would dominate the integral of D/z.
/// Between such nodes z is locally a power of the distance to the top,
/// which log-log interpolation of the bracketing node values reproduces
/// exactly; it is used above 63/64 of the top density, and the plain
/// interpolant (accurate at the dense relative spacing there) below.
fn quad_z(zsol: &ZSolution) -> impl Fn(f64) -> f64 + '_ {
    let rb = zsol.rho_bar();
    let n = zsol.grid.len();
    let phi_switch = rb * (1.0 - 1.0 / 64.0);
    move |u: f64| {
        if u <= phi_switch || n < 3 || u >= zsol.grid[n - 2] {
            return zsol.eval(u).min(-1e-300);
        }
        let i = zsol.grid.partition_point(|&x| x < u).clamp(1, n - 2);
        let (p0, p1) = (zsol.grid[i - 1], zsol.grid[i]);
        let (z0, z1) = (zsol.values[i - 1], zsol.values[i]);
        let (s0, s1) = (rb - p0, rb - p1);
        let s = rb - u;
        if !(z0 < 0.0 && z1 < 0.0 && s0 > s1 && s1 > 0.0 && s > 0.0) {
            return zsol.eval(u).min(-1e-300);
        }
        let q = (z1 / z0).ln() / (s1 / s0).ln();
        -(z0.abs() * (s / s0).powf(q)).max(1e-300)
    }
}

/// Improper xi increment over the top sliver above the last computed
/// density (a negative number, or -infinity when D/|z| is non-integrable
/// there). Uses the declared diffusivity order when available, otherwise
/// dyadic bands with a geometric-remainder estimate.
fn tail_increment(zsol: &ZSolution, model: &Model, s_join: f64) -> f64 {
    if !(s_join > 0.0) {
        return 0.0;
    }
    let rb = zsol.rho_bar();
    if let Some(o) = model.diffusivity.order_at_top() {
        let p = o.order - zsol.top_exponent;
        if p <= -1.0 {
            return f64::NEG_INFINITY;
        }
        return -(o.scale / zsol.top_coeff) * s_join.powf(p + 1.0) / (p + 1.0);
    }
    let f = |u: f64| model.d(u) / zsol.eval(u).min(-1e-300);
    let mut total = 0.0;
    let mut prev_band = 0.0f64;
    let mut s1 = s_join;
    for k in 0..200 {
        let s0 = 0.5 * s1;
        let band = gauss5(&f, rb - s1, rb - s0);
        total += band;
        if k > 4 {
            let q = band.abs() / prev_band.abs().max(1e-300);
            if q >= 0.999 {
                return f64::NEG_INFINITY;
            }
            if s0 <= 1e-14 * rb {
                return total + band * q / (1.0 - q);
            }
        }
        prev_band = band;
        s1 = s0;
    }
    f64::NEG_INFINITY
}

/// Map the two-verdict classification onto the profile contact kind.
fn profile_kind(class: &Classification) -> Result<ProfileKind> {
    match (class.kind, class.monotonicity) {
        (FrontKind::Sharp, Monotonicity::NonStrict) => Ok(ProfileKind::Sharp),
        (FrontKind::Classical, Monotonicity::Strict) => Ok(ProfileKind::ClassicalStrict),
        (FrontKind::Classical, Monotonicity::NonStrict) => Ok(ProfileKind::ClassicalNonStrict),
        (FrontKind::Sharp, Monotonicity::Strict) => Err(Error::Solver {
            stage: "profile assembly".into(),
            detail: "sharp front classified as strictly monotone".into(),
        }),
        _ => Err(Error::pre(format!(
            "classification is indeterminate ({}); the profile needs a definite contact type",
            class.rationale_tag
        ))),
    }
}

/// Replace the uniform node nearest to `v` (never the protected index)
/// so the grid carries the value exactly; order is preserved because the
/// replacement stays inside its own cell.
fn place_exact(grid: &mut [f64], v: f64, protected: usize) {
    let n = grid.len();
    if n < 3 || v <= grid[0] || v >= grid[n - 1] {
        return;
    }
    let k = grid.partition_point(|&x| x < v);
    // v lies in [grid[k-1], grid[k]); pick the closer endpoint, avoiding
    // the protected node.
    let (a, b) = (k - 1, k.min(n - 1));
    let pick = if a == protected {
        b
    } else if b == protected {
        a
    } else if v - grid[a] <= grid[b] - v {
        a
    } else {
        b
    };
    if pick != protected {
        grid[pick] = v;
    }
}

fn neg0(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        -x
    }
}

/// Invert a wave-coordinate table onto a uniform xi grid.
///
/// The window must contain 0 (the normalization abscissa); the grid is
/// aligned so 0 is a node, and the contact abscissae are carried as exact
/// nodes when they fall inside. Beyond the contacts the profile continues
/// as the attained equilibrium when that constant solves the equation,
/// and is truncated with a recorded note otherwise.
pub fn reconstruct(
    zsol: &ZSolution,
    model: &Model,
    classification: &Classification,
    window: [f64; 2],
    points: usize,
) -> Result<ProfileSolution> {
    let table = xi_of_phi(zsol, model)?;
    assemble(&table, model, zsol, classification, window, points)
}

fn assemble(
    table: &XiTable,
    model: &Model,
    zsol: &ZSolution,
    class: &Classification,
    window: [f64; 2],
    points: usize,
) -> Result<ProfileSolution> {
    let rb = zsol.rho_bar();
    let [lo, hi] = window;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::pre(format!(
            "profile window [{lo}, {hi}] must be a finite increasing pair"
        )));
    }
    if !(lo <= 0.0 && 0.0 <= hi) {
        return Err(Error::pre(format!(
            "profile window [{lo}, {hi}] must contain the normalization abscissa 0"
        )));
    }
    if points < 9 {
        return Err(Error::pre("profile grid needs at least 9 points"));
    }
    let kind = profile_kind(class)?;
    let nonstrict = !matches!(kind, ProfileKind::ClassicalStrict);
    if nonstrict && !table.xi_bar.is_finite() {
        return Err(Error::Solver {
            stage: "profile assembly".into(),
            detail: "contact quadrature diverged for a front classified non-strict".into(),
        });
    }
    let xi_bar = if nonstrict {
        table.xi_bar
    } else {
        f64::NEG_INFINITY
    };

    // Inverted table: ascending xi, descending phi.
    let mut tx: Vec<f64> = Vec::with_capacity(table.xi.len());
    let mut tp: Vec<f64> = Vec::with_capacity(table.xi.len());
    for i in (0..table.xi.len()).rev() {
        if let Some(&last) = tx.last() {
            if !(table.xi[i] > last) {
                continue;
            }
        }
        tx.push(table.xi[i]);
        tp.push(table.phi[i]);
    }
    let (t_lo, t_hi) = (tx[0], *tx.last().unwrap());
    let interp = MonotoneCubic::new(tx, tp).map_err(|e| Error::Solver {
        stage: "profile inversion".into(),
        detail: e,
    })?;

    // Uniform grid aligned so 0 is a node.
    let step = (hi - lo) / (points - 1) as f64;
    let j0 = ((-lo) / step).round().clamp(0.0, (points - 1) as f64) as usize;
    let mut grid: Vec<f64> = (0..points)
        .map(|j| (j as f64 - j0 as f64) * step)
        .collect();
    if xi_bar.is_finite() {
        place_exact(&mut grid, xi_bar, j0);
    }
    let varpi = table.varpi;
    if *grid.last().unwrap() > varpi {
        place_exact(&mut grid, varpi, j0);
    }
    // Zero-alignment can leave the edge nodes up to half a step inside
    // the requested window; pull them onto a contact that the window was
    // meant to reach so the contact value is carried exactly.
    let last = grid.len() - 1;
    if varpi > grid[last] && varpi <= hi + 1e-12 * (1.0 + hi.abs()) && last != j0 {
        grid[last] = varpi;
    }
    if xi_bar.is_finite()
        && xi_bar < grid[0]
        && xi_bar >= lo - 1e-12 * (1.0 + lo.abs())
        && j0 != 0
    {
        grid[0] = xi_bar;
    }

    let extend_zero = table.reached_zero && model.has_tag(Tag::G0);
    let bottom_phi = table.phi[0];
    let mut values: Vec<f64> = Vec::with_capacity(grid.len());
    for &x in &grid {
        let v = if x <= xi_bar {
            rb
        } else if x >= varpi {
            bottom_phi
        } else {
            interp.eval(x.clamp(t_lo, t_hi)).clamp(0.0, rb)
        };
        values.push(v);
    }

    // Cut the window at varpi when the state reached there does not
    // continue as a solution (source not vanishing at 0, or data that
    // stopped at a positive density).
    let mut note = None;
    if zsol.truncated_at.is_some() {
        note = Some(format!(
            "integration stopped at density {bottom_phi:.6e}; profile data end at xi = {varpi:.6e}"
        ));
    }
    if *grid.last().unwrap() > varpi && !extend_zero {
        let cut = grid.partition_point(|&x| x <= varpi);
        grid.truncate(cut);
        values.truncate(cut);
        if note.is_none() && hi - varpi > 0.75 * step {
            note = Some(format!(
                "source does not vanish at 0, so the profile cannot continue past its \
                 zero contact; window cut at xi = {varpi:.6e}"
            ));
        }
    }

    let (left, right) = match kind {
        ProfileKind::Sharp => (0.0, class.front_slope),
        ProfileKind::ClassicalNonStrict | ProfileKind::ClassicalStrict => (0.0, 0.0),
    };

    Ok(ProfileSolution {
        xi_grid: grid,
        phi_values: values,
        xi_bar,
        varpi,
        kind,
        direction: Direction::FromTop,
        c: zsol.c,
        left_derivative_at_xi_bar: left,
        right_derivative_at_xi_bar: right,
        truncation_note: note,
    })
}

/// Default window: from the top contact (or, for strict fronts, the
/// abscissa where the profile is within 0.1 percent of the top) to the
/// opposite contact, padded where a constant continuation exists.
fn default_window(table: &XiTable, zsol: &ZSolution, model: &Model, kind: ProfileKind) -> [f64; 2] {
    let rb = zsol.rho_bar();
    let lo0 = if table.xi_bar.is_finite() {
        table.xi_bar
    } else {
        let target = rb * (1.0 - 1e-3);
        let k = table.phi.partition_point(|&p| p <= target);
        table.xi[k.saturating_sub(1).min(table.xi.len() - 1)]
    };
    let w = (table.varpi - lo0).max(1e-6);
    let lo = if matches!(kind, ProfileKind::ClassicalStrict) {
        lo0
    } else {
        lo0 - 0.1 * w
    };
    let hi = if table.reached_zero && model.has_tag(Tag::G0) {
        table.varpi + 0.1 * w
    } else {
        table.varpi
    };
    [lo, hi]
}

fn from_top_core(
    model: &Model,
    c: f64,
    solver: &SolverOptions,
    window: Option<[f64; 2]>,
    points: usize,
) -> Result<ProfileSolution> {
    let zsol = solve_z(model, c, solver)?;
    let class = classify(model, c, &zsol)?;
    let table = xi_of_phi(&zsol, model)?;
    let kind = profile_kind(&class)?;
    let window = window.unwrap_or_else(|| default_window(&table, &zsol, model, kind));
    assemble(&table, model, &zsol, &class, window, points)
}

/// Mirror a profile in x: reverse and negate the axis.
fn flipped(mut p: ProfileSolution) -> ProfileSolution {
    p.xi_grid.reverse();
    for v in &mut p.xi_grid {
        *v = neg0(*v);
    }
    p.phi_values.reverse();
    let (l, r) = (
        p.left_derivative_at_xi_bar,
        p.right_derivative_at_xi_bar,
    );
    p.left_derivative_at_xi_bar = neg0(r);
    p.right_derivative_at_xi_bar = neg0(l);
    p.xi_bar = neg0(p.xi_bar);
    p.varpi = neg0(p.varpi);
    p
}

/// Relabel a profile of the density-mirrored model back to the original
/// density variable (phi maps to rho_bar - phi at the same abscissa).
fn relabeled(mut p: ProfileSolution, rho_bar: f64) -> ProfileSolution {
    for v in &mut p.phi_values {
        *v = (rho_bar - *v).max(0.0);
    }
    p.left_derivative_at_xi_bar = neg0(p.left_derivative_at_xi_bar);
    p.right_derivative_at_xi_bar = neg0(p.right_derivative_at_xi_bar);
    p
}

fn shifted(mut p: ProfileSolution, dx: f64) -> ProfileSolution {
    if dx != 0.0 {
        for v in &mut p.xi_grid {
            *v += dx;
        }
        p.xi_bar += dx;
        p.varpi += dx;
    }
    p
}

/// Compute a semi-wavefront profile in the requested orientation.
///
/// Top-connecting orientations accept any model the z solver accepts.
/// Zero-connecting orientations require the mirrored structure to be
/// declared up front: diffusivity degenerate at 0 (tag D-hat) and a
/// source that is negative inside and vanishes at 0 (tag g-hat); the
/// computation then runs on the density-mirrored model.
pub fn semi_wavefront(
    model: &Model,
    c: f64,
    direction: Direction,
    opts: &ProfileOptions,
) -> Result<ProfileSolution> {
    let zero_side = matches!(direction, Direction::FromZero | Direction::ToZero);
    if zero_side && !(model.has_tag(Tag::DHat) && model.has_tag(Tag::GHat)) {
        return Err(Error::pre(format!(
            "direction {} needs tags D-hat and g-hat (diffusivity and source structured at 0); \
             the model declares [{}]",
            direction.as_str(),
            model
                .tags
                .iter()
                .map(|t| t.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }
    let flip = matches!(direction, Direction::ToTop | Direction::ToZero);

    let base = if zero_side {
        model.reflected(0.0)?
    } else {
        model.clone()
    };
    let solve_model = if flip {
        base.with_negated_advection()
    } else {
        base
    };
    let solve_c = if flip { -c } else { c };
    let internal_window = opts.window.map(|[a, b]| {
        let (a, b) = (a - opts.center, b - opts.center);
        if flip {
            [neg0(b), neg0(a)]
        } else {
            [a, b]
        }
    });

    let mut p = from_top_core(&solve_model, solve_c, &opts.solver, internal_window, opts.points)?;
    if zero_side {
        p = relabeled(p, model.rho_bar);
    }
    if flip {
        p = flipped(p);
    }
    p = shifted(p, opts.center);
    p.direction = direction;
    p.c = c;
    Ok(p)
}
