//! Front-type and monotonicity verdicts for computed z solutions.
//!
//! Two independent questions are answered about a decreasing semi-wavefront
//! that approaches the top density. First, how does the profile meet
//! rho_bar: with a corner (sharp front: negative or infinite one-sided
//! derivative at the contact point) or smoothly (classical front:
//! derivative 0)? The answer is the limit of z/D at the top, decided
//! symbolically from endpoint metadata and cross-checked against a
//! numerical extrapolation of the computed solution. Second, is the top
//! density attained at a finite abscissa xi_bar (non-strict monotonicity)
//! or only in the limit xi -> -infinity (strict)? That is governed by the
//! convergence of the width integral of D/|z| up to the top.

use crate::error::{Error, Result};
use crate::field::LocalOrder;
use crate::model::{Model, Tag};
use crate::numeric::extrap::geometric_limit;
use crate::numeric::quad::{geometric_nodes, panels};
use crate::zsolver::{choose_seed, ZSolution};

/// How the profile meets the top density.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrontKind {
    /// Corner contact: the one-sided profile derivative at the contact
    /// abscissa is negative or infinite.
    Sharp,
    /// C1 contact: the profile derivative tends to 0.
    Classical,
    /// Endpoint metadata too thin to decide symbolically.
    Indeterminate,
}

impl FrontKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FrontKind::Sharp => "sharp",
            FrontKind::Classical => "classical",
            FrontKind::Indeterminate => "indeterminate",
        }
    }
}

/// Whether the profile stays strictly below the top density.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monotonicity {
    /// phi < rho_bar everywhere; the top is approached only as
    /// xi -> -infinity.
    Strict,
    /// phi attains rho_bar at a finite abscissa and is constant beyond it.
    NonStrict,
    /// Neither the integral test nor a growth bound was conclusive.
    Indeterminate,
}

impl Monotonicity {
    pub fn as_str(self) -> &'static str {
        match self {
            Monotonicity::Strict => "strict",
            Monotonicity::NonStrict => "non-strict",
            Monotonicity::Indeterminate => "indeterminate",
        }
    }
}

/// Contact-type verdict at the top density.
#[derive(Debug, Clone)]
pub struct TopClassification {
    pub kind: FrontKind,
    /// lim z/D at the top: 0 for classical contact, negative or -inf for
    /// sharp contact, the numerical estimate when indeterminate.
    pub front_slope: f64,
    /// Extrapolated numerical limit of z/D, kept for reporting.
    pub numeric_slope: f64,
    /// Which decision branch fired.
    pub rationale_tag: String,
}

/// Monotonicity verdict with the contact abscissa estimate.
#[derive(Debug, Clone)]
pub struct MonotonicityVerdict {
    pub monotonicity: Monotonicity,
    /// Contact abscissa under the phi(0) = rho_bar/2 normalization:
    /// finite and negative for non-strict fronts, -inf for strict ones,
    /// NaN when indeterminate.
    pub xi_bar: f64,
    pub rationale_tag: String,
}

/// Combined verdict for one (model, speed) pair.
#[derive(Debug, Clone)]
pub struct Classification {
    pub kind: FrontKind,
    pub front_slope: f64,
    pub monotonicity: Monotonicity,
    pub xi_bar: f64,
    pub rationale_tag: String,
}

/// Position of the speed relative to the advection value at the top,
/// derived from the same local gap model the solver seeds from so the
/// two stages cannot disagree on the branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SpeedSide {
    Below,
    Above,
    Borderline,
}

fn speed_side(model: &Model, c: f64) -> (SpeedSide, Option<LocalOrder>) {
    let gap = model.advection_gap_order(c);
    match gap {
        Some(o) if o.order <= 1e-9 => {
            if o.scale > 0.0 {
                (SpeedSide::Below, gap)
            } else {
                (SpeedSide::Above, gap)
            }
        }
        Some(_) => (SpeedSide::Borderline, gap),
        None => {
            let v = model.h_at_top() - c;
            let tol = 1e-9 * (1.0 + c.abs() + model.h_at_top().abs());
            if v > tol {
                (SpeedSide::Below, None)
            } else if v < -tol {
                (SpeedSide::Above, None)
            } else {
                (SpeedSide::Borderline, None)
            }
        }
    }
}

/// Samples of z/D on a geometric offset ladder toward the top, plus the
/// three-point extrapolated limit.
///
/// The offsets stay well above the solver's output-grid spacing: closer
/// to the top the stored interpolant's relative error grows like the
/// square of (spacing / offset) because |z| itself vanishes, which would
/// drown the extrapolation.
fn contact_slope_samples(model: &Model, zsol: &ZSolution) -> ([f64; 3], f64) {
    let rb = zsol.rho_bar();
    let offsets = [3.2e-2 * rb, 1.6e-2 * rb, 8e-3 * rb];
    let r = offsets.map(|d| {
        let x = rb - d;
        let dv = model.d(x);
        zsol.eval(x) / if dv.abs() > 1e-300 { dv } else { 1e-300 }
    });
    (r, geometric_limit(2.0, r).value)
}

/// Noise floor for deciding whether the one-sided D slope at the top is
/// genuinely negative rather than a finite-difference artifact.
fn d_slope_floor(model: &Model) -> f64 {
    1e-6 * (1.0 + 2.0 * model.d(0.5 * model.rho_bar).abs() / model.rho_bar)
}

fn check_eval_consistency(c: f64, zsol: &ZSolution) -> Result<()> {
    if (zsol.c - c).abs() > 1e-12 * (1.0 + c.abs()) {
        return Err(Error::pre(format!(
            "z solution was computed for speed {:.17e}, not {:.17e}",
            zsol.c, c
        )));
    }
    Ok(())
}

/// Decide sharp vs classical contact at the top density.
///
/// The verdict is symbolic wherever the endpoint metadata allows: the
/// speed is compared against the advection value at the top, and in the
/// borderline (equal) case the vanishing orders of D, g and of the
/// advection gap determine the local order of z, whose excess over the
/// order of D is the order of the quotient z/D. A numerical
/// extrapolation of z/D from the computed solution must agree with the
/// symbolic verdict; disagreement is reported as a solver error rather
/// than silently trusting either side.
pub fn classify_at_top(model: &Model, c: f64, zsol: &ZSolution) -> Result<TopClassification> {
    check_eval_consistency(c, zsol)?;
    let degenerate = model.has_tag(Tag::D);
    let fractional = model.has_tag(Tag::DTilde);
    // An untagged model with strictly positive diffusivity at the top is
    // the regular case (strip sub-problems cut at an interior source zero
    // land here); it classifies like the D-hat class.
    let positive_top = model.has_tag(Tag::DHat)
        || (!degenerate && !fractional && model.d(model.rho_bar) > 0.0);
    if !(degenerate || fractional || positive_top) {
        return Err(Error::pre(
            "top classification requires a diffusivity class tag (D, D-tilde, or D-hat) \
             or positive diffusivity at the top",
        ));
    }
    let (samples, numeric) = contact_slope_samples(model, zsol);

    let (kind, slope, tag): (FrontKind, f64, String) = if positive_top {
        // D(rho_bar) > 0 and z -> 0 force the quotient to 0.
        (FrontKind::Classical, 0.0, "positive-diffusivity-at-top".into())
    } else if fractional {
        // Fractional contact D ~ K s^a with a < 1: z vanishes at least
        // linearly, so the quotient decays like s^(1-a) or faster.
        (FrontKind::Classical, 0.0, "fractional-contact-at-top".into())
    } else {
        match speed_side(model, c) {
            (SpeedSide::Above, _) => {
                (FrontKind::Classical, 0.0, "speed-above-advection".into())
            }
            (SpeedSide::Below, gap) => {
                // z leaves the top linearly with slope h(rho_bar) - c > 0;
                // the quotient limit is that slope against the D slope.
                let gap_value = gap.map(|o| o.scale).unwrap_or(model.h_at_top() - c);
                let dd = model.d_slope_at_top();
                if dd == f64::NEG_INFINITY {
                    (FrontKind::Classical, 0.0, "fractional-contact-at-top".into())
                } else if dd < -d_slope_floor(model) {
                    (
                        FrontKind::Sharp,
                        gap_value / dd,
                        "speed-below-advection".into(),
                    )
                } else {
                    (
                        FrontKind::Sharp,
                        f64::NEG_INFINITY,
                        "speed-below-advection(superlinear-diffusivity)".into(),
                    )
                }
            }
            (SpeedSide::Borderline, gap) => {
                let d_ord = model.diffusivity.order_at_top();
                let g_ord = model.source.order_at_top();
                let local = match (d_ord, g_ord) {
                    (Some(d), Some(g)) => {
                        choose_seed(0.0, Some(d), Some(g), gap).map(|seed| (d, seed))
                    }
                    _ => None,
                };
                match local {
                    Some((d, seed)) => {
                        // Order balance: z ~ -C s^delta against D ~ K s^alpha.
                        let p = seed.exponent - d.order;
                        if p > 1e-9 {
                            (
                                FrontKind::Classical,
                                0.0,
                                format!(
                                    "borderline-order-balance(formal): z-order {:.6} above D-order {:.6}",
                                    seed.exponent, d.order
                                ),
                            )
                        } else if p < -1e-9 {
                            (
                                FrontKind::Sharp,
                                f64::NEG_INFINITY,
                                format!(
                                    "borderline-order-balance(formal): z-order {:.6} below D-order {:.6}",
                                    seed.exponent, d.order
                                ),
                            )
                        } else {
                            (
                                FrontKind::Sharp,
                                -seed.coeff / d.scale,
                                format!(
                                    "borderline-order-balance(formal): equal orders {:.6}",
                                    d.order
                                ),
                            )
                        }
                    }
                    None => {
                        let dd = model.d_slope_at_top();
                        if dd.is_finite() && dd < -d_slope_floor(model) {
                            (
                                FrontKind::Classical,
                                0.0,
                                "borderline-linear-diffusivity".into(),
                            )
                        } else {
                            (
                                FrontKind::Indeterminate,
                                numeric,
                                "borderline-missing-order-metadata".into(),
                            )
                        }
                    }
                }
            }
        }
    };

    cross_check_slope(kind, slope, &samples, numeric)?;
    Ok(TopClassification { kind, front_slope: slope, numeric_slope: numeric, rationale_tag: tag })
}

/// Require the numerical z/D samples to support the symbolic verdict.
fn cross_check_slope(kind: FrontKind, slope: f64, samples: &[f64; 3], numeric: f64) -> Result<()> {
    let fail = |what: &str| {
        Err(Error::Solver {
            stage: "top classification".into(),
            detail: format!(
                "{what}: symbolic contact slope {slope:.6e} vs z/D samples \
                 [{:.6e}, {:.6e}, {:.6e}] (extrapolated {numeric:.6e})",
                samples[0], samples[1], samples[2]
            ),
        })
    };
    match kind {
        FrontKind::Indeterminate => Ok(()),
        FrontKind::Classical => {
            let decaying = samples[2].abs() <= 0.9 * samples[0].abs() + 1e-9;
            let tiny = samples.iter().all(|r| r.abs() <= 1e-6);
            if decaying || tiny {
                Ok(())
            } else {
                fail("classical contact requires a vanishing quotient")
            }
        }
        FrontKind::Sharp if slope == f64::NEG_INFINITY => {
            let growing =
                samples[2].abs() > samples[1].abs() && samples[2].abs() >= 1.1 * samples[0].abs();
            if growing {
                Ok(())
            } else {
                fail("infinite contact slope requires a growing quotient")
            }
        }
        FrontKind::Sharp => {
            if (numeric - slope).abs() <= 1e-3 * slope.abs() {
                Ok(())
            } else {
                fail("finite contact slope disagrees with the numerical limit")
            }
        }
    }
}

/// Decide strict vs non-strict monotonicity via the width integral
/// I(eps) = int_{rho_bar/2}^{rho_bar - eps} D/|z|, refined by halving eps
/// down to 1e-10 of the density span.
///
/// The integral diverging means the top density is reached only in the
/// limit (strict); convergence pins a finite contact abscissa. Declared
/// source growth bounds near the top give theorem-level verdicts that
/// cross-check the numerics: an upper bound g <= L s with speed above the
/// advection value forces strict; a lower bound g >= L s^a with a in
/// (0,1) forces non-strict. A contradiction between a fired bound and a
/// fired integral verdict is an error.
pub fn classify_monotonicity(
    model: &Model,
    c: f64,
    zsol: &ZSolution,
) -> Result<MonotonicityVerdict> {
    check_eval_consistency(c, zsol)?;
    let rb = zsol.rho_bar();
    if let Some(t) = zsol.truncated_at {
        if t >= 0.5 * rb {
            return Err(Error::pre(format!(
                "z solution truncated at rho = {t:.6e}, above rho_bar/2: width integral undefined"
            )));
        }
    }
    let f = |phi: f64| model.d(phi) / zsol.eval(phi).abs().max(1e-300);
    let band = |s_hi: f64, s_lo: f64| {
        let nodes = geometric_nodes(s_hi, s_lo, 24);
        let phis: Vec<f64> = nodes.iter().map(|s| rb - s).collect();
        panels(&f, &phis)
    };

    let halvings = 31usize;
    let mut eps = 0.25 * rb;
    let mut total = band(0.5 * rb, eps);
    let mut incs = Vec::with_capacity(halvings);
    for _ in 0..halvings {
        let next = 0.5 * eps;
        let inc = band(eps, next);
        total += inc;
        incs.push(inc);
        eps = next;
    }

    // Divergence: a definite per-halving increment that keeps arriving.
    let strict_fire = incs[halvings - 5..].iter().all(|&v| v >= 0.5);
    // Convergence: the geometric estimate of everything still missing is
    // negligible against the accumulated integral.
    let (a, b) = (incs[halvings - 2], incs[halvings - 1]);
    let rem_geo = if b <= 0.0 {
        0.0
    } else if b < a {
        b * (b / a) / (1.0 - b / a)
    } else {
        f64::INFINITY
    };
    let nonstrict_fire = rem_geo <= 1e-4;

    // Theorem-level verdicts from declared growth bounds (or from order
    // metadata, which implies them near the top). The shared constant
    // field describes the upper linear bound only when no lower-bound
    // exponent is declared alongside it.
    let (side, _) = speed_side(model, c);
    let g_ord = model.source.order_at_top();
    let upper_linear = (model.source_bound_l.is_some() && model.source_bound_alpha.is_none())
        || g_ord.is_some_and(|o| o.order >= 1.0 - 1e-9);
    let lower_sublinear = model
        .source_bound_alpha
        .is_some_and(|a| a > 0.0 && a < 1.0)
        || g_ord.is_some_and(|o| o.order > 0.0 && o.order < 1.0 - 1e-9);
    if upper_linear && lower_sublinear {
        return Err(Error::Solver {
            stage: "monotonicity classification".into(),
            detail: "conflicting source growth bounds near the top: an upper linear bound \
                     and a lower sublinear bound cannot hold together"
                .into(),
        });
    }
    let must_strict = upper_linear && side == SpeedSide::Above;
    let must_nonstrict = lower_sublinear;

    let conflict = |integral: &str, bound: &str| {
        Err(Error::Solver {
            stage: "monotonicity classification".into(),
            detail: format!(
                "width-integral verdict ({integral}) conflicts with the declared source \
                 growth bound ({bound})"
            ),
        })
    };
    let (monotonicity, tag) = if strict_fire {
        if must_nonstrict {
            return conflict("divergent", "lower sublinear, forcing non-strict");
        }
        let tag = if must_strict {
            "integral-divergence+linear-source-bound"
        } else {
            "integral-divergence"
        };
        (Monotonicity::Strict, tag)
    } else if nonstrict_fire {
        if must_strict {
            return conflict("convergent", "upper linear, forcing strict");
        }
        let tag = if must_nonstrict {
            "integral-convergence+sublinear-source-bound"
        } else {
            "integral-convergence"
        };
        (Monotonicity::NonStrict, tag)
    } else if must_strict {
        (Monotonicity::Strict, "linear-source-bound")
    } else if must_nonstrict {
        (Monotonicity::NonStrict, "sublinear-source-bound")
    } else {
        (Monotonicity::Indeterminate, "integral-inconclusive")
    };

    let xi_bar = match monotonicity {
        Monotonicity::Strict => f64::NEG_INFINITY,
        Monotonicity::NonStrict => {
            // Tail below the last band from the closed power model when
            // the orders are known, else the geometric remainder.
            let closed = model.diffusivity.order_at_top().and_then(|d| {
                let p = d.order - zsol.top_exponent;
                (p > -1.0 && zsol.top_coeff > 0.0)
                    .then(|| d.scale / zsol.top_coeff * eps.powf(p + 1.0) / (p + 1.0))
            });
            let tail = closed
                .filter(|t| t.is_finite() && *t >= 0.0)
                .unwrap_or(if rem_geo.is_finite() { rem_geo } else { 0.0 });
            -(total + tail)
        }
        Monotonicity::Indeterminate => f64::NAN,
    };

    Ok(MonotonicityVerdict { monotonicity, xi_bar, rationale_tag: tag.into() })
}

/// Run both classifiers and merge, enforcing the structural consistency
/// between them: a corner contact implies a finite contact abscissa.
pub fn classify(model: &Model, c: f64, zsol: &ZSolution) -> Result<Classification> {
    let top = classify_at_top(model, c, zsol)?;
    let mono = classify_monotonicity(model, c, zsol)?;
    let (monotonicity, xi_bar, mono_tag) = match (top.kind, mono.monotonicity) {
        (FrontKind::Sharp, Monotonicity::Strict) => {
            return Err(Error::Solver {
                stage: "classification".into(),
                detail: format!(
                    "sharp contact at the top requires a finite contact abscissa, but the \
                     width integral diverged ({} / {})",
                    top.rationale_tag, mono.rationale_tag
                ),
            });
        }
        (FrontKind::Sharp, Monotonicity::Indeterminate) => {
            // The corner pins convergence of the width integral even when
            // the dyadic test alone was inconclusive.
            let width = zsol.front_width_integral(model, 0.5 * zsol.rho_bar());
            (
                Monotonicity::NonStrict,
                -width,
                format!("{}+sharp-implies-contact", mono.rationale_tag),
            )
        }
        _ => (mono.monotonicity, mono.xi_bar, mono.rationale_tag.clone()),
    };
    Ok(Classification {
        kind: top.kind,
        front_slope: top.front_slope,
        monotonicity,
        xi_bar,
        rationale_tag: format!("top: {}; contact: {}", top.rationale_tag, mono_tag),
    })
}
