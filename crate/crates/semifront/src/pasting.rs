//! Traveling waves through an interior source zero, built by pasting.
//!
//! A source that changes sign once (positive below rho0, negative above)
//! admits no single monotone front between 0 and rho_bar. Semi-wavefront
//! pieces on the strips [0, rho0] and [rho0, rho_bar] can still be
//! concatenated at their contacts with rho0: when the source is
//! Hoelder-steep there (|g| >= L |rho0 - rho|^alpha with alpha < 1) each
//! piece reaches rho0 at a finite abscissa with vanishing flux, so the
//! junction is classical. Four patterns arise from the choice and
//! orientation of the pieces, plus a variant with a constant shelf at
//! rho0; a weak-form residual check against smooth test bumps verifies
//! that the concatenation really solves the equation across junctions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Model, Tag};
use crate::profile::{semi_wavefront, Direction, ProfileKind, ProfileOptions, ProfileSolution};

/// The five buildable wave shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PastePattern {
    /// Increasing from 0 to rho_bar through rho0.
    Phi1,
    /// Decreasing from rho_bar to 0 through rho0.
    Phi2,
    /// Pulse in [0, rho0]: rises to rho0, touches it once, falls back.
    Phi3,
    /// Well in [rho0, rho_bar]: falls to rho0, touches it once, rises back.
    Phi4,
    /// The decreasing shape with a constant shelf at rho0 of positive width.
    Plateau,
}

impl PastePattern {
    pub fn as_str(self) -> &'static str {
        match self {
            PastePattern::Phi1 => "phi1",
            PastePattern::Phi2 => "phi2",
            PastePattern::Phi3 => "phi3",
            PastePattern::Phi4 => "phi4",
            PastePattern::Plateau => "plateau",
        }
    }

    pub fn parse(s: &str) -> Result<PastePattern> {
        Ok(match s {
            "phi1" => PastePattern::Phi1,
            "phi2" => PastePattern::Phi2,
            "phi3" => PastePattern::Phi3,
            "phi4" => PastePattern::Phi4,
            "plateau" => PastePattern::Plateau,
            other => {
                return Err(Error::pre(format!(
                    "unknown pattern '{other}' (expected phi1, phi2, phi3, phi4, or plateau)"
                )))
            }
        })
    }
}

impl std::fmt::Display for PastePattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The four semi-wavefront pieces around the interior zero, named by
/// strip and orientation. Each piece's `xi_bar` is its contact with rho0
/// and its `varpi` the outer end (0 or rho_bar).
#[derive(Debug, Clone)]
pub struct PastePieces {
    /// Lower strip, decreasing rho0 -> 0 (contact on the left).
    pub lower_falling: ProfileSolution,
    /// Lower strip, increasing 0 -> rho0 (contact on the right).
    pub lower_rising: ProfileSolution,
    /// Upper strip, increasing rho0 -> rho_bar (contact on the left).
    pub upper_rising: ProfileSolution,
    /// Upper strip, decreasing rho_bar -> rho0 (contact on the right).
    pub upper_falling: ProfileSolution,
    pub c: f64,
    pub rho0: f64,
    pub rho_bar: f64,
}

/// A pasted traveling wave.
#[derive(Debug, Clone)]
pub struct PasteResult {
    pub pattern: PastePattern,
    /// Shelf length; 0 except for the plateau pattern.
    pub plateau_width: f64,
    pub pieces: PastePieces,
    /// Concatenated profile; `xi_bar`/`varpi` record where its maximum and
    /// minimum are first attained.
    pub joined: ProfileSolution,
    /// Abscissae where pieces meet (one junction, or two for the plateau).
    pub junctions: Vec<f64>,
    /// max |D(phi) phi'| over the five grid points nearest each junction.
    pub junction_flux_sup: f64,
}

/// Full reflection about the top: D(rho_bar - rho), -g(rho_bar - rho),
/// h(rho_bar - rho) on the same interval. Applying it twice restores the
/// original pointwise.
pub fn reflect_model(model: &Model) -> Result<Model> {
    model.reflected(0.0)
}

fn paste_err(msg: impl Into<String>) -> Error {
    Error::Paste(msg.into())
}

/// Solve the four pieces of a once-sign-changing model at speed `c`.
///
/// The lower strip is the model restricted to [0, rho0]; the upper strip
/// is the reflection cut at rho0 (a positive-source problem on
/// [0, rho_bar - rho0]) whose profiles are mapped back through
/// psi -> rho_bar - psi. Every piece must come out classical with a
/// finite contact abscissa, which the steepness condition guarantees;
/// a strict piece aborts with the "pasting impossible" error.
pub fn build_pieces(model: &Model, c: f64, opts: &ProfileOptions) -> Result<PastePieces> {
    if !model.has_tag(Tag::G1) {
        return Err(Error::pre(
            "pasting needs a once-sign-changing source (tag g1)",
        ));
    }
    let rho0 = model
        .rho0
        .ok_or_else(|| Error::pre("pasting needs the interior source zero rho0 recorded"))?;
    let rb = model.rho_bar;
    if !(rho0 > 0.0 && rho0 < rb) {
        return Err(Error::pre(format!(
            "interior zero rho0 = {rho0} must lie strictly inside (0, {rb})"
        )));
    }
    // Pieces can only attain rho0 when |g| vanishes sublinearly there.
    // When the source exposes its growth order symbolically, reject
    // shallow sources before solving anything; otherwise the strict-piece
    // gate after the solves catches them.
    for (from_below, side) in [(true, "lower"), (false, "upper")] {
        if let Some(o) = model.source.local_order(rho0, from_below) {
            if o.order >= 1.0 - 1e-9 {
                return Err(paste_err(format!(
                    "the source is not steep enough at its interior \
                     zero (|g| ~ |rho0 - rho|^{:.3} on the {side} side; need \
                     |g| >= L |rho0 - rho|^alpha with alpha < 1)",
                    o.order
                )));
            }
        }
    }

    // Steepness metadata |g| >= L |rho0 - rho|^alpha is optional; when
    // declared it is checked up front so a false declaration is caught
    // before any solving.
    if let (Some(l), Some(alpha)) = (model.source_bound_l, model.source_bound_alpha) {
        if !(l > 0.0) {
            return Err(Error::pre(format!(
                "steepness constant L = {l} must be positive"
            )));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(paste_err(format!(
                "source steepness exponent alpha = {alpha} must lie in (0, 1)"
            )));
        }
        // Sample the declared bound on geometric offset ladders on both
        // sides of the zero, with a slack factor 2 for constant mismatches.
        for side in [-1.0, 1.0] {
            let room = if side < 0.0 { rho0 } else { rb - rho0 };
            for k in 3..=20 {
                let s = room * 0.5f64.powi(k);
                let x = rho0 + side * s;
                let bound = l * s.powf(alpha);
                if model.g(x).abs() < 0.5 * bound {
                    return Err(paste_err(format!(
                        "the declared steepness bound \
                         |g| >= L |rho0 - rho|^alpha fails near the interior zero \
                         (|g({x:.6})| = {:.3e}, bound {:.3e})",
                        model.g(x).abs(),
                        bound
                    )));
                }
            }
        }
    }

    let tol = 1e-12 * (1.0 + model.source.max_abs_on(0.0, rb, 64));
    let mut lower_tags = Vec::new();
    if model.d(0.0).abs() <= 1e-12 * (1.0 + model.d(0.5 * rho0).abs()) {
        lower_tags.push(Tag::DHat);
    }
    lower_tags.push(if model.g(0.0).abs() <= tol { Tag::G0 } else { Tag::G });
    let lower = model.restricted(rho0, lower_tags)?;
    let mut upper = model.reflected(rho0)?;
    if model.g(rb).abs() <= tol {
        for t in upper.tags.iter_mut() {
            if *t == Tag::G {
                *t = Tag::G0;
            }
        }
    }

    let lower_falling = semi_wavefront(&lower, c, Direction::FromTop, opts)?;
    let lower_rising = semi_wavefront(&lower, c, Direction::ToTop, opts)?;
    let upper_rising = relabel_to_upper(semi_wavefront(&upper, c, Direction::FromTop, opts)?, rb, rho0);
    let upper_falling = relabel_to_upper(semi_wavefront(&upper, c, Direction::ToTop, opts)?, rb, rho0);

    for (name, p) in [
        ("the falling lower piece", &lower_falling),
        ("the rising lower piece", &lower_rising),
        ("the rising upper piece", &upper_rising),
        ("the falling upper piece", &upper_falling),
    ] {
        if p.kind != ProfileKind::ClassicalNonStrict || !p.xi_bar.is_finite() {
            return Err(paste_err(format!(
                "the source is not steep enough at its interior zero \
                 ({name} is {} with contact abscissa {}; need |g| >= L |rho0 - rho|^alpha \
                 with alpha < 1)",
                p.kind, p.xi_bar
            )));
        }
    }

    Ok(PastePieces {
        lower_falling,
        lower_rising,
        upper_rising,
        upper_falling,
        c,
        rho0,
        rho_bar: rb,
    })
}

/// Map an upper-strip solution from reflected coordinates back to the
/// original density: phi = rho_bar - psi, with the contact and outer
/// values snapped exactly onto rho0 and rho_bar.
fn relabel_to_upper(mut p: ProfileSolution, rho_bar: f64, rho0: f64) -> ProfileSolution {
    let strip = rho_bar - rho0;
    for v in p.phi_values.iter_mut() {
        let w = if *v <= 0.0 {
            rho_bar
        } else if *v >= strip {
            rho0
        } else {
            rho_bar - *v
        };
        *v = if (w - rho0).abs() <= 1e-12 * rho_bar.max(1.0) {
            rho0
        } else {
            w
        };
    }
    p.left_derivative_at_xi_bar = -p.left_derivative_at_xi_bar;
    p.right_derivative_at_xi_bar = -p.right_derivative_at_xi_bar;
    p
}

/// One leg of a joined profile: the piece trimmed to the closed span
/// between its rho0 contact and its outer end, with the contact moved
/// to abscissa 0.
fn trimmed_leg(p: &ProfileSolution) -> (Vec<f64>, Vec<f64>) {
    let cb = p.xi_bar;
    let contact_right = p.xi_bar >= p.varpi;
    let mut xs = Vec::new();
    let mut vs = Vec::new();
    for (&x, &v) in p.xi_grid.iter().zip(&p.phi_values) {
        let keep = if contact_right { x <= cb } else { x >= cb };
        if keep {
            xs.push(x - cb);
            vs.push(v);
        }
    }
    (xs, vs)
}

/// Concatenate pieces into the requested pattern.
///
/// The designated rho0 contacts are translated onto a common junction at
/// abscissa 0 (and, for a plateau of width delta, a second junction at
/// delta with a constant shelf between). The result therefore depends
/// only on the pieces' shapes, not on where they were originally
/// centered.
pub fn paste(
    model: &Model,
    pieces: &PastePieces,
    pattern: PastePattern,
    plateau_width: f64,
) -> Result<PasteResult> {
    let c = pieces.c;
    for p in [
        &pieces.lower_falling,
        &pieces.lower_rising,
        &pieces.upper_rising,
        &pieces.upper_falling,
    ] {
        if (p.c - c).abs() > 1e-12 * (1.0 + c.abs()) {
            return Err(paste_err(format!(
                "pieces were built at different speeds ({} vs {})",
                p.c, c
            )));
        }
    }
    if !(plateau_width >= 0.0) {
        return Err(paste_err(format!(
            "plateau width must be nonnegative, got {plateau_width}"
        )));
    }
    let (out_pattern, delta) = match (pattern, plateau_width > 0.0) {
        (PastePattern::Plateau, false) => {
            return Err(paste_err(
                "the plateau pattern needs a positive plateau width",
            ))
        }
        (PastePattern::Plateau, true) | (PastePattern::Phi2, true) => {
            (PastePattern::Plateau, plateau_width)
        }
        (p, false) => (p, 0.0),
        (_, true) => {
            return Err(paste_err(
                "plateau insertion applies between the decreasing pieces only (phi2)",
            ))
        }
    };

    let (left, right) = match out_pattern {
        PastePattern::Phi1 => (&pieces.lower_rising, &pieces.upper_rising),
        PastePattern::Phi2 | PastePattern::Plateau => (&pieces.upper_falling, &pieces.lower_falling),
        PastePattern::Phi3 => (&pieces.lower_rising, &pieces.lower_falling),
        PastePattern::Phi4 => (&pieces.upper_falling, &pieces.upper_rising),
    };
    let (lx, lv) = trimmed_leg(left);
    let (rx, rv) = trimmed_leg(right);
    if lx.len() < 8 || rx.len() < 8 {
        return Err(paste_err("a trimmed piece has too few grid points to join"));
    }

    let mut grid = lx;
    let mut values = lv;
    let mut junctions = vec![0.0];
    if delta > 0.0 {
        let step = rx[1] - rx[0];
        let cells = (delta / step).ceil().max(1.0) as usize;
        for j in 1..cells {
            grid.push(delta * j as f64 / cells as f64);
            values.push(pieces.rho0);
        }
        junctions.push(delta);
        grid.extend(rx.iter().map(|x| x + delta));
        values.extend(rv.iter().copied());
    } else {
        // Single junction: the right leg's contact node duplicates the
        // left leg's, keep one copy.
        grid.extend(rx.iter().skip(1));
        values.extend(rv.iter().skip(1).copied());
    }
    for w in grid.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::Solver {
                stage: "paste".into(),
                detail: format!("joined grid is not increasing near {}", w[0]),
            });
        }
    }

    let rising_first = values[0] < pieces.rho0;
    let (mut max_at, mut min_at) = (grid[0], grid[0]);
    let (mut max_v, mut min_v) = (values[0], values[0]);
    for (&x, &v) in grid.iter().zip(&values) {
        if v > max_v {
            max_v = v;
            max_at = x;
        }
        if v < min_v {
            min_v = v;
            min_at = x;
        }
    }

    let joined = ProfileSolution {
        xi_grid: grid,
        phi_values: values,
        xi_bar: max_at,
        varpi: min_at,
        kind: ProfileKind::ClassicalNonStrict,
        direction: if rising_first { Direction::ToTop } else { Direction::FromTop },
        c,
        left_derivative_at_xi_bar: 0.0,
        right_derivative_at_xi_bar: 0.0,
        truncation_note: None,
    };

    let flux = junction_flux_sup(model, &joined, &junctions);
    Ok(PasteResult {
        pattern: out_pattern,
        plateau_width: delta,
        pieces: pieces.clone(),
        joined,
        junctions,
        junction_flux_sup: flux,
    })
}

/// max |D(phi) phi'| over the five grid points nearest each junction,
/// with the derivative taken by centered differences on the joined grid.
fn junction_flux_sup(model: &Model, joined: &ProfileSolution, junctions: &[f64]) -> f64 {
    let xs = &joined.xi_grid;
    let vs = &joined.phi_values;
    let n = xs.len();
    let mut sup = 0.0f64;
    for &j in junctions {
        let at = xs.partition_point(|&x| x < j - 1e-14 * (1.0 + j.abs()));
        for i in at.saturating_sub(2)..=(at + 2).min(n - 1) {
            let i = i.clamp(1, n - 2);
            let slope = (vs[i + 1] - vs[i - 1]) / (xs[i + 1] - xs[i - 1]);
            sup = sup.max((model.d(vs[i]) * slope).abs());
        }
    }
    sup
}

/// Degree-8 polynomial bump (1 - u^2)^4 on |u| <= 1 with its first two
/// derivatives, already scaled to the window [center - hw, center + hw].
struct Bump {
    center: f64,
    hw: f64,
}

impl Bump {
    fn value(&self, x: f64) -> f64 {
        let u = (x - self.center) / self.hw;
        let w = (1.0 - u * u).max(0.0);
        w * w * w * w
    }

    fn d1(&self, x: f64) -> f64 {
        let u = (x - self.center) / self.hw;
        let w = (1.0 - u * u).max(0.0);
        -8.0 * u * w * w * w / self.hw
    }

    fn d2(&self, x: f64) -> f64 {
        let u = (x - self.center) / self.hw;
        let w = (1.0 - u * u).max(0.0);
        8.0 * w * w * (7.0 * u * u - 1.0) / (self.hw * self.hw)
    }
}

/// Cubic interpolation of the joined values inside cell `i`, from the
/// four nearest nodes (clamped at the ends). Accurate enough that the
/// quadrature below is limited by the profile itself, not by lookup.
fn cell_value(xs: &[f64], vs: &[f64], i: usize, x: f64) -> f64 {
    let n = xs.len();
    let j0 = i.saturating_sub(1).min(n - 4);
    let mut acc = 0.0;
    for a in 0..4 {
        let mut w = 1.0;
        for b in 0..4 {
            if a != b {
                w *= (x - xs[j0 + b]) / (xs[j0 + a] - xs[j0 + b]);
            }
        }
        acc += w * vs[j0 + a];
    }
    acc
}

const GAUSS5_NODES: [f64; 5] = [
    -0.906179845938664,
    -0.5384693101056831,
    0.0,
    0.5384693101056831,
    0.906179845938664,
];
const GAUSS5_WEIGHTS: [f64; 5] = [
    0.23692688505618908,
    0.47862867049936647,
    0.5688888888888889,
    0.47862867049936647,
    0.23692688505618908,
];

/// Weak-form residual of the joined wave against one test bump:
/// integral of -B(phi) psi'' - (f(phi) - c phi) psi' - g(phi) psi, where
/// B is the antiderivative of D. For an exact traveling wave this
/// vanishes for every compactly supported psi; junction defects show up
/// through the psi'' term without differentiating phi.
fn residual_against_bump(model: &Model, c: f64, joined: &ProfileSolution, bump: &Bump) -> f64 {
    let xs = &joined.xi_grid;
    let vs = &joined.phi_values;
    let rb = joined
        .phi_values
        .iter()
        .fold(0.0f64, |m, &v| m.max(v));
    let lo = bump.center - bump.hw;
    let hi = bump.center + bump.hw;
    let mut total = 0.0;
    for i in 0..xs.len() - 1 {
        let a = xs[i].max(lo);
        let b = xs[i + 1].min(hi);
        if a >= b {
            continue;
        }
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let mut cell = 0.0;
        for (u, w) in GAUSS5_NODES.iter().zip(GAUSS5_WEIGHTS) {
            let x = mid + half * u;
            let phi = cell_value(xs, vs, i, x).clamp(0.0, rb);
            let big_b = model.diffusivity.antideriv0(phi);
            let flux = model.flux_f(phi) - c * phi;
            cell += w * (-big_b * bump.d2(x) - flux * bump.d1(x) - model.g(phi) * bump.value(x));
        }
        total += half * cell;
    }
    total
}

/// Maximum absolute weak residual over `n_tests` reproducible test bumps
/// straddling the junctions (alternating between them when there are
/// two). The seed fixes centers and widths.
pub fn weak_residual(
    model: &Model,
    result: &PasteResult,
    n_tests: usize,
    seed: u64,
) -> Result<f64> {
    if n_tests == 0 {
        return Err(Error::pre("weak residual needs at least one test bump"));
    }
    let grid = &result.joined.xi_grid;
    let lo = grid[0];
    let hi = grid[grid.len() - 1];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for k in 0..n_tests {
        let j = result.junctions[k % result.junctions.len()];
        let room = (j - lo).min(hi - j);
        if !(room > 0.0) {
            return Err(Error::pre("junction sits on the domain boundary"));
        }
        let hw = room * (0.3 + 0.4 * rng.gen::<f64>());
        let center = j + (rng.gen::<f64>() - 0.5) * 0.8 * hw;
        let bump = Bump { center, hw };
        let r = residual_against_bump(model, result.pieces.c, &result.joined, &bump);
        worst = worst.max(r.abs());
    }
    Ok(worst)
}
