//! Problem instances: density interval, coefficient fields, structural
//! assumption tags, and the endpoint metadata consumed by the solver and
//! the classifier.
//!
//! A model bundles the diffusivity D, the source g, and the advection
//! speed h = f' on [0, rho_bar]. Structural assumptions (signs, vanishing
//! at the ends, an interior sign change of g) are declared as tags and
//! re-checked by sampling, so a misdeclared input fails loudly with a
//! witness point instead of corrupting downstream verdicts.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::field::{FieldKind, LocalOrder, ScalarField};
use crate::numeric::extrap::geometric_limit;

/// Structural assumption tags, mirroring the model-file strings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tag {
    /// D smooth on the closed interval, D(rho_bar) = 0, D > 0 inside.
    D,
    /// D merely continuous at the top (fractional contact), with a finite
    /// diffusivity-source balance limit there.
    DTilde,
    /// The reflected diffusivity rho -> D(rho_bar - rho) is admissible:
    /// D(0) = 0 and D > 0 on (0, rho_bar].
    DHat,
    /// g > 0 on [0, rho_bar), g(rho_bar) = 0.
    G,
    /// g(0) = 0 = g(rho_bar), g > 0 inside (monostable source).
    G0,
    /// The reflected source rho -> -g(rho_bar - rho) is a valid positive
    /// source: g(0) = 0 and g < 0 on (0, rho_bar].
    GHat,
    /// g changes sign once inside: positive on [0, rho0), negative on
    /// (rho0, rho_bar].
    G1,
}

impl Tag {
    pub fn as_str(self) -> &'static str {
        match self {
            Tag::D => "D",
            Tag::DTilde => "D-tilde",
            Tag::DHat => "D-hat",
            Tag::G => "g",
            Tag::G0 => "g0",
            Tag::GHat => "g-hat",
            Tag::G1 => "g1",
        }
    }

    pub fn parse(s: &str) -> Result<Tag> {
        Ok(match s {
            "D" => Tag::D,
            "D-tilde" => Tag::DTilde,
            "D-hat" => Tag::DHat,
            "g" => Tag::G,
            "g0" => Tag::G0,
            "g-hat" => Tag::GHat,
            "g1" => Tag::G1,
            other => return Err(Error::pre(format!("unknown assumption tag `{other}`"))),
        })
    }
}

/// The balance limit ell = lim D(phi) g(phi) / (phi - rho_bar) at the top.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EllLimit {
    Finite(f64),
    MinusInfinity,
}

impl EllLimit {
    pub fn as_f64(self) -> f64 {
        match self {
            EllLimit::Finite(v) => v,
            EllLimit::MinusInfinity => f64::NEG_INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, EllLimit::Finite(_))
    }
}

impl std::fmt::Display for EllLimit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EllLimit::Finite(v) => write!(f, "{v}"),
            EllLimit::MinusInfinity => write!(f, "-inf"),
        }
    }
}

/// A complete problem instance.
#[derive(Debug, Clone)]
pub struct Model {
    pub rho_bar: f64,
    /// Advection speed h = f'; the flux f is recovered as its
    /// antiderivative with f(0) = 0.
    pub advection: ScalarField,
    pub diffusivity: ScalarField,
    pub source: ScalarField,
    pub tags: Vec<Tag>,
    /// Interior zero of the source (required by the `g1` tag).
    pub rho0: Option<f64>,
    /// Constant L of the source growth bounds near the top.
    pub source_bound_l: Option<f64>,
    /// Exponent alpha in (0, 1) of the lower source bound near the top.
    pub source_bound_alpha: Option<f64>,
}

impl Model {
    /// Validate the basic shape (positive interval, interior zero inside
    /// it) and return the assembled model.
    pub fn assemble(
        rho_bar: f64,
        advection: ScalarField,
        diffusivity: ScalarField,
        source: ScalarField,
        tags: Vec<Tag>,
        rho0: Option<f64>,
        source_bound_l: Option<f64>,
        source_bound_alpha: Option<f64>,
    ) -> Result<Model> {
        if !(rho_bar > 0.0) || !rho_bar.is_finite() {
            return Err(Error::pre(format!("rho_bar must be positive and finite, got {rho_bar}")));
        }
        if let Some(r0) = rho0 {
            if !(r0 > 0.0 && r0 < rho_bar) {
                return Err(Error::pre(format!(
                    "rho0 = {r0} must lie strictly inside (0, {rho_bar})"
                )));
            }
        }
        if tags.contains(&Tag::G1) && rho0.is_none() {
            return Err(Error::pre("tag g1 requires rho0".to_string()));
        }
        if let Some(a) = source_bound_alpha {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::pre(format!("alpha must lie in (0, 1), got {a}")));
            }
        }
        Ok(Model {
            rho_bar,
            advection,
            diffusivity,
            source,
            tags,
            rho0,
            source_bound_l,
            source_bound_alpha,
        })
    }

    pub fn has_tag(&self, tag: Tag) -> bool {
        self.tags.contains(&tag)
    }

    pub fn d(&self, rho: f64) -> f64 {
        self.diffusivity.eval(rho)
    }

    pub fn g(&self, rho: f64) -> f64 {
        self.source.eval(rho)
    }

    pub fn h(&self, rho: f64) -> f64 {
        self.advection.eval(rho)
    }

    /// Flux f with f(0) = 0.
    pub fn flux_f(&self, rho: f64) -> f64 {
        self.advection.antideriv0(rho)
    }

    pub fn h_at_top(&self) -> f64 {
        self.advection.eval(self.rho_bar)
    }

    /// One-sided derivative of D at the top, from order metadata when
    /// available (negative infinity for fractional contact).
    pub fn d_slope_at_top(&self) -> f64 {
        if let Some(o) = self.diffusivity.order_at_top() {
            return if o.order > 1.0 {
                0.0
            } else if o.order == 1.0 {
                -o.scale
            } else {
                f64::NEG_INFINITY
            };
        }
        // Finite-difference ladder, extrapolated.
        let b = 1e-4 * self.rho_bar;
        let slope = |s: f64| (self.d(self.rho_bar) - self.d(self.rho_bar - s)) / s;
        let e = geometric_limit(2.0, [slope(b), slope(0.5 * b), slope(0.25 * b)]);
        e.value
    }

    /// Balance limit at the top from declared vanishing orders:
    /// with D ~ K_D s^a and g ~ K_g s^b (s the distance to the top),
    /// ell = 0 when a+b > 1, -K_D K_g when a+b = 1, -infinity when a+b < 1.
    pub fn ell_limit(&self) -> Result<EllLimit> {
        let d = self
            .diffusivity
            .order_at_top()
            .ok_or_else(|| Error::pre("diffusivity has no vanishing-order metadata at the top"))?;
        let g = self
            .source
            .order_at_top()
            .ok_or_else(|| Error::pre("source has no vanishing-order metadata at the top"))?;
        let s = d.order + g.order;
        let tol = 1e-12;
        Ok(if s > 1.0 + tol {
            EllLimit::Finite(0.0)
        } else if s >= 1.0 - tol {
            EllLimit::Finite(-d.scale * g.scale)
        } else {
            EllLimit::MinusInfinity
        })
    }

    /// Numerical fallback for the balance limit: samples the quotient on a
    /// geometric offset ladder and extrapolates. Returns the limit and an
    /// error estimate (meaningless for the infinite verdict).
    pub fn ell_limit_numeric(&self) -> (EllLimit, f64) {
        let mut qs = Vec::new();
        for k in 10..=40u32 {
            let s = self.rho_bar * (2.0_f64).powi(-(k as i32));
            let x = self.rho_bar - s;
            let q = -self.d(x) * self.g(x) / s;
            if !q.is_finite() {
                break;
            }
            qs.push(q);
        }
        if qs.len() < 8 {
            return (EllLimit::MinusInfinity, f64::INFINITY);
        }
        let n = qs.len();
        let scale = qs.iter().fold(0.0_f64, |m, q| m.max(q.abs()));
        if qs[n - 1].abs() <= 1e-12 * scale.max(1e-300) {
            return (EllLimit::Finite(0.0), 1e-12 * scale);
        }
        // Divergence test: mean log2 growth of |Q| per offset halving over
        // the last several samples. A power-law quotient K s^p shows slope
        // -p here, so a persistent positive slope means divergence.
        let tail = &qs[n - 8..];
        let mut slope = 0.0;
        for w in tail.windows(2) {
            slope += (w[1].abs().max(1e-300) / w[0].abs().max(1e-300)).log2();
        }
        slope /= 7.0;
        if slope > 0.02 {
            return (EllLimit::MinusInfinity, f64::INFINITY);
        }
        let e = geometric_limit(2.0, [qs[n - 3], qs[n - 2], qs[n - 1]]);
        (EllLimit::Finite(e.value.min(0.0)), e.error)
    }

    /// Balance limit with automatic numerical fallback (used by the solver,
    /// where a best-effort value is preferable to a hard error).
    pub fn ell_limit_auto(&self) -> EllLimit {
        match self.ell_limit() {
            Ok(v) => v,
            Err(_) => self.ell_limit_numeric().0,
        }
    }

    /// Local order of h - c at the top: the gap behaves like
    /// `scale * (rho_bar - rho)^order`, with order 0 when h(rho_bar) != c
    /// and order infinity when h is identically c. `None` when neither
    /// symbolic structure nor a numeric fit can say.
    pub fn advection_gap_order(&self, c: f64) -> Option<LocalOrder> {
        let rb = self.rho_bar;
        let scale_ref = 1.0 + c.abs() + self.h_at_top().abs();
        let tol = 1e-12 * scale_ref;
        // Shifting by c defeats the generic sum rule exactly when the
        // leading values cancel, so the common families get exact
        // treatment first.
        match self.advection.kind() {
            FieldKind::Constant { value } => {
                let v = value - c;
                return Some(if v.abs() > tol {
                    LocalOrder { order: 0.0, scale: v }
                } else {
                    LocalOrder { order: f64::INFINITY, scale: 0.0 }
                });
            }
            FieldKind::Linear { slope, .. } => {
                let v = self.h_at_top() - c;
                return Some(if v.abs() > tol * (1.0 + slope.abs()) {
                    LocalOrder { order: 0.0, scale: v }
                } else if *slope != 0.0 {
                    // h - c = slope (rho - rho_bar) = -slope (rho_bar - rho)
                    LocalOrder { order: 1.0, scale: -slope }
                } else {
                    LocalOrder { order: f64::INFINITY, scale: 0.0 }
                });
            }
            _ => {}
        }
        let gap = ScalarField::sum(
            vec![
                (1.0, self.advection.clone()),
                (-1.0, ScalarField::constant(c, rb)),
            ],
            rb,
        );
        if let Some(o) = gap.order_at_top() {
            return Some(o);
        }
        // Cancelling leading terms: fit order and scale on a geometric
        // offset ladder.
        let mut vals = [0.0_f64; 3];
        for (i, k) in [4.0_f64, 8.0, 16.0].iter().enumerate() {
            vals[i] = self.h(rb - rb / (256.0 * k)) - c;
        }
        if vals.iter().all(|v| v.abs() <= 1e3 * tol) {
            return Some(LocalOrder { order: f64::INFINITY, scale: 0.0 });
        }
        if vals.iter().any(|v| v.abs() <= 0.0 || !v.is_finite()) {
            return None;
        }
        let sign = vals[0].signum();
        if vals.iter().any(|v| v.signum() != sign) {
            return None;
        }
        let p1 = (vals[0] / vals[1]).abs().ln() / std::f64::consts::LN_2;
        let p2 = (vals[1] / vals[2]).abs().ln() / std::f64::consts::LN_2;
        let order = geometric_limit(2.0, [p1, 0.5 * (p1 + p2), p2]).value;
        if !(order.is_finite() && order > -0.1) {
            return None;
        }
        let order = order.max(0.0);
        let s_last = rb / (256.0 * 16.0);
        Some(LocalOrder { order, scale: vals[2] / s_last.powf(order) })
    }

    /// Reflect the model about the top and truncate below `cut`:
    /// the image lives on [0, rho_bar - cut] with
    /// D~(r) = D(rho_bar - r), g~(r) = -g(rho_bar - r), h~(r) = h(rho_bar - r),
    /// and describes the same equation read in the mirrored density.
    pub fn reflected(&self, cut: f64) -> Result<Model> {
        if !(cut >= 0.0 && cut < self.rho_bar) {
            return Err(Error::pre(format!("reflection cut {cut} outside [0, rho_bar)")));
        }
        let rho_bar = self.rho_bar - cut;
        let mut tags = Vec::new();
        // Sign structure maps: a once-sign-changing source reflects to a
        // once-sign-changing source only for cut = 0; the pasting pipeline
        // reflects at the interior zero, where the image is a positive
        // source vanishing at its own top.
        if self.has_tag(Tag::DHat) || self.has_tag(Tag::D) || self.has_tag(Tag::DTilde) {
            tags.push(Tag::D);
        }
        tags.push(Tag::G);
        Ok(Model {
            rho_bar,
            advection: ScalarField::reflected(self.advection.clone(), cut, false),
            diffusivity: ScalarField::reflected(self.diffusivity.clone(), cut, false),
            source: ScalarField::reflected(self.source.clone(), cut, true),
            tags,
            rho0: None,
            source_bound_l: self.source_bound_l,
            source_bound_alpha: self.source_bound_alpha,
        })
    }

    /// Restrict the model to [0, new_top] (used to cut a sign-changing
    /// source at its interior zero). Field values are unchanged.
    pub fn restricted(&self, new_top: f64, tags: Vec<Tag>) -> Result<Model> {
        if !(new_top > 0.0 && new_top <= self.rho_bar) {
            return Err(Error::pre(format!("restriction top {new_top} outside (0, rho_bar]")));
        }
        Ok(Model {
            rho_bar: new_top,
            advection: restrict(&self.advection, new_top),
            diffusivity: restrict(&self.diffusivity, new_top),
            source: restrict(&self.source, new_top),
            tags,
            rho0: None,
            source_bound_l: self.source_bound_l,
            source_bound_alpha: self.source_bound_alpha,
        })
    }

    /// The same model with the advection speed negated (profiles traveling
    /// the other way are computed by solving this image at speed -c).
    pub fn with_negated_advection(&self) -> Model {
        let mut m = self.clone();
        m.advection = ScalarField::sum(vec![(-1.0, self.advection.clone())], self.rho_bar);
        m
    }

    /// Load a model description from a JSON file.
    pub fn from_file(path: &Path) -> Result<Model> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("cannot read {}: {e}", path.display())))?;
        Model::from_json(&text)
    }

    /// Parse a model description from JSON text.
    pub fn from_json(text: &str) -> Result<Model> {
        let file: ModelFile = serde_json::from_str(text)
            .map_err(|e| Error::Io(format!("model file is not valid JSON: {e}")))?;
        file.build()
    }

    /// Check every declared tag by dense sampling and report pass/fail
    /// with witnesses. Deterministic for fixed inputs.
    pub fn validate_assumptions(&self) -> AssumptionReport {
        let entries = self.tags.iter().map(|&t| self.check_tag(t)).collect();
        AssumptionReport { entries }
    }

    fn check_tag(&self, tag: Tag) -> TagCheck {
        let rb = self.rho_bar;
        let scale_d = self.diffusivity.max_abs_on(0.0, rb, 256).max(1e-300);
        let scale_g = self.source.max_abs_on(0.0, rb, 256).max(1e-300);
        let ztol_d = 1e-9 * scale_d;
        let ztol_g = 1e-9 * scale_g;
        let mut fail: Option<(f64, String)> = None;
        let mut assumed: Option<String> = None;

        let check =
            |cond: bool, at: f64, what: &str, fail: &mut Option<(f64, String)>| {
                if !cond && fail.is_none() {
                    *fail = Some((at, what.to_string()));
                }
            };

        match tag {
            Tag::D | Tag::DTilde => {
                check(self.d(rb).abs() <= ztol_d, rb, "D(rho_bar) must vanish", &mut fail);
                check(self.d(0.0) >= -ztol_d, 0.0, "D(0) must be nonnegative", &mut fail);
                for x in interior_grid(rb) {
                    check(self.d(x) > 0.0, x, "D must be positive inside", &mut fail);
                    if fail.is_some() {
                        break;
                    }
                }
                if tag == Tag::DTilde {
                    match self.ell_limit() {
                        Ok(EllLimit::MinusInfinity) => check(
                            false,
                            rb,
                            "fractional-contact tag requires a finite balance limit",
                            &mut fail,
                        ),
                        Ok(_) => {}
                        Err(_) => assumed = Some("balance limit not derivable from metadata".into()),
                    }
                }
                if self.diffusivity.order_at_top().is_none() {
                    assumed = Some("smoothness of a tabulated diffusivity is assumed".into());
                }
            }
            Tag::DHat => {
                check(self.d(0.0).abs() <= ztol_d, 0.0, "D(0) must vanish", &mut fail);
                for x in interior_grid(rb) {
                    check(self.d(x) > 0.0, x, "D must be positive inside", &mut fail);
                    if fail.is_some() {
                        break;
                    }
                }
            }
            Tag::G => {
                check(self.g(rb).abs() <= ztol_g, rb, "g(rho_bar) must vanish", &mut fail);
                check(self.g(0.0) > 0.0, 0.0, "g(0) must be positive", &mut fail);
                for x in interior_grid(rb) {
                    check(self.g(x) > 0.0, x, "g must be positive below the top", &mut fail);
                    if fail.is_some() {
                        break;
                    }
                }
            }
            Tag::G0 => {
                check(self.g(0.0).abs() <= ztol_g, 0.0, "g(0) must vanish", &mut fail);
                check(self.g(rb).abs() <= ztol_g, rb, "g(rho_bar) must vanish", &mut fail);
                for x in interior_grid(rb) {
                    check(self.g(x) > 0.0, x, "g must be positive inside", &mut fail);
                    if fail.is_some() {
                        break;
                    }
                }
            }
            Tag::GHat => {
                check(self.g(0.0).abs() <= ztol_g, 0.0, "g(0) must vanish", &mut fail);
                for x in interior_grid(rb) {
                    check(
                        self.g(x) < 0.0,
                        x,
                        "g must be negative on (0, rho_bar] for the reflected source",
                        &mut fail,
                    );
                    if fail.is_some() {
                        break;
                    }
                }
            }
            Tag::G1 => match self.rho0 {
                None => check(false, 0.0, "g1 requires rho0", &mut fail),
                Some(r0) => {
                    check(self.g(r0).abs() <= 1e-6 * scale_g, r0, "g(rho0) must vanish", &mut fail);
                    for x in interior_grid(rb) {
                        if x < r0 - 1e-9 * rb {
                            check(self.g(x) > 0.0, x, "g must be positive below rho0", &mut fail);
                        } else if x > r0 + 1e-9 * rb {
                            check(self.g(x) < 0.0, x, "g must be negative above rho0", &mut fail);
                        }
                        if fail.is_some() {
                            break;
                        }
                    }
                    check(self.g(0.0) > 0.0, 0.0, "g(0) must be positive", &mut fail);
                }
            },
        }

        // Surface non-finite evaluations as failures with the point.
        for x in [0.0, 0.5 * rb, rb] {
            for (f, name) in [
                (&self.diffusivity, "diffusivity"),
                (&self.source, "source"),
                (&self.advection, "advection"),
            ] {
                if !f.eval(x).is_finite() && fail.is_none() {
                    fail = Some((x, format!("{name} is non-finite")));
                }
            }
        }

        let status = if let Some((at, why)) = fail {
            TagStatus::Fail { witness: at, detail: why }
        } else if let Some(note) = assumed {
            TagStatus::Assumed { note }
        } else {
            TagStatus::Pass
        };
        TagCheck { tag, status }
    }
}

/// Restrict a field's domain without changing its values.
fn restrict(f: &ScalarField, new_top: f64) -> ScalarField {
    ScalarField::restricted(f.clone(), new_top)
}

/// Sampling grid for sign checks: 2048 uniform interior points plus
/// geometric clusters of 32 points within 1e-6 of each endpoint.
fn interior_grid(rho_bar: f64) -> Vec<f64> {
    let n = 2048;
    let mut pts = Vec::with_capacity(n + 63);
    for i in 1..n {
        pts.push(rho_bar * i as f64 / n as f64);
    }
    for k in 0..32 {
        let s = rho_bar * 1e-6 * (0.5_f64).powi(k);
        pts.push(s);
        pts.push(rho_bar - s);
    }
    pts
}

/// Outcome of one tag check.
#[derive(Debug, Clone)]
pub enum TagStatus {
    Pass,
    /// Condition not machine-checkable (e.g. smoothness of a table);
    /// recorded, not failed.
    Assumed { note: String },
    Fail { witness: f64, detail: String },
}

#[derive(Debug, Clone)]
pub struct TagCheck {
    pub tag: Tag,
    pub status: TagStatus,
}

/// Result of `validate_assumptions`: one entry per declared tag.
#[derive(Debug, Clone)]
pub struct AssumptionReport {
    pub entries: Vec<TagCheck>,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.entries
            .iter()
            .all(|e| !matches!(e.status, TagStatus::Fail { .. }))
    }

    /// First failure, if any, as a ready-to-raise error.
    pub fn into_error(&self) -> Option<Error> {
        self.entries.iter().find_map(|e| match &e.status {
            TagStatus::Fail { witness, detail } => Some(Error::pre(format!(
                "tag `{}` violated at rho = {witness}: {detail}",
                e.tag.as_str()
            ))),
            _ => None,
        })
    }
}

impl std::fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for e in &self.entries {
            match &e.status {
                TagStatus::Pass => writeln!(f, "{:8} pass", e.tag.as_str())?,
                TagStatus::Assumed { note } => {
                    writeln!(f, "{:8} assumed ({note})", e.tag.as_str())?
                }
                TagStatus::Fail { witness, detail } => writeln!(
                    f,
                    "{:8} FAIL at rho = {witness:.6e}: {detail}",
                    e.tag.as_str()
                )?,
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// JSON input layer
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct ModelFile {
    rho_bar: f64,
    flux: FieldFile,
    diffusivity: FieldFile,
    source: FieldFile,
    #[serde(default)]
    tags: Vec<String>,
    #[serde(default)]
    rho0: Option<f64>,
    #[serde(default, rename = "L")]
    l: Option<f64>,
    #[serde(default)]
    alpha: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct FieldFile {
    family: String,
    #[serde(default)]
    params: serde_json::Value,
    #[serde(default)]
    vanish_order_top: Option<f64>,
}

impl ModelFile {
    fn build(self) -> Result<Model> {
        let rb = self.rho_bar;
        let advection = self.flux.build(rb, "flux")?;
        let diffusivity = self.diffusivity.build(rb, "diffusivity")?;
        let source = self.source.build(rb, "source")?;
        let tags = self
            .tags
            .iter()
            .map(|s| Tag::parse(s))
            .collect::<Result<Vec<_>>>()?;
        Model::assemble(rb, advection, diffusivity, source, tags, self.rho0, self.l, self.alpha)
    }
}

fn bad_params(field: &str, family: &str, e: impl std::fmt::Display) -> Error {
    Error::pre(format!("bad params for {field} family `{family}`: {e}"))
}

impl FieldFile {
    fn build(self, rho_bar: f64, label: &str) -> Result<ScalarField> {
        #[derive(Deserialize)]
        struct PConst {
            value: f64,
        }
        #[derive(Deserialize)]
        struct PLin {
            intercept: f64,
            slope: f64,
        }
        #[derive(Deserialize)]
        struct PPow {
            scale: f64,
            exponent: f64,
        }
        #[derive(Deserialize)]
        struct PProd {
            scale: f64,
            exp_zero: f64,
            exp_top: f64,
        }
        #[derive(Deserialize)]
        struct PSigned {
            scale: f64,
            exponent: f64,
            rho0: f64,
        }
        #[derive(Deserialize)]
        struct PTable {
            rho: Vec<f64>,
            value: Vec<f64>,
        }

        let fam = self.family.as_str();
        let field = match fam {
            "constant" => {
                let p: PConst = serde_json::from_value(self.params)
                    .map_err(|e| bad_params(label, fam, e))?;
                ScalarField::constant(p.value, rho_bar)
            }
            "linear" => {
                let p: PLin = serde_json::from_value(self.params)
                    .map_err(|e| bad_params(label, fam, e))?;
                ScalarField::linear(p.intercept, p.slope, rho_bar)
            }
            "power-at-top" => {
                let p: PPow = serde_json::from_value(self.params)
                    .map_err(|e| bad_params(label, fam, e))?;
                ScalarField::power_top(p.scale, p.exponent, rho_bar)
            }
            "power-at-zero" => {
                let p: PPow = serde_json::from_value(self.params)
                    .map_err(|e| bad_params(label, fam, e))?;
                ScalarField::power_zero(p.scale, p.exponent, rho_bar)
            }
            "product" => {
                let p: PProd = serde_json::from_value(self.params)
                    .map_err(|e| bad_params(label, fam, e))?;
                ScalarField::product(p.scale, p.exp_zero, p.exp_top, rho_bar)
            }
            "signed-power" => {
                let p: PSigned = serde_json::from_value(self.params)
                    .map_err(|e| bad_params(label, fam, e))?;
                if !(p.rho0 > 0.0 && p.rho0 < rho_bar) {
                    return Err(Error::pre(format!(
                        "signed-power pivot {} outside (0, {rho_bar})",
                        p.rho0
                    )));
                }
                ScalarField::signed_power(p.scale, p.exponent, p.rho0, rho_bar)
            }
            "table" => {
                let p: PTable = serde_json::from_value(self.params)
                    .map_err(|e| bad_params(label, fam, e))?;
                ScalarField::table(p.rho, p.value, rho_bar)?
            }
            other => {
                return Err(Error::pre(format!(
                    "unknown field family `{other}` for {label} \
                     (expected constant, linear, power-at-top, power-at-zero, \
                     product, signed-power, or table)"
                )))
            }
        };
        Ok(field.with_declared_top_order(self.vanish_order_top))
    }
}
