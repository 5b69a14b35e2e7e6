//! Quadrature: fixed five-point Gauss-Legendre panels and adaptive Simpson.
//!
//! Gauss panels are used for cumulative integrals over prescribed node
//! sequences (the grids already resolve the integrand); adaptive Simpson is
//! the workhorse for one-off integrals with endpoint gradients.

/// Five-point Gauss-Legendre abscissae on [-1, 1].
const GL5_X: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];

/// Matching weights (sum to 2).
const GL5_W: [f64; 5] = [
    0.236_926_885_056_189_08,
    0.478_628_670_499_366_47,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_47,
    0.236_926_885_056_189_08,
];

/// Five-point Gauss-Legendre rule on [a, b]; exact through degree 9.
pub fn gauss5<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (x, w) in GL5_X.iter().zip(GL5_W.iter()) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// Sum of Gauss panels over consecutive pairs of `nodes` (ascending or
/// descending; the result is signed accordingly).
pub fn panels<F: Fn(f64) -> f64>(f: &F, nodes: &[f64]) -> f64 {
    nodes.windows(2).map(|w| gauss5(f, w[0], w[1])).sum()
}

/// Adaptive Simpson quadrature with Richardson correction.
///
/// Subdivides until the local Richardson error estimate meets
/// `abs_tol + rel_tol * |whole|`, down to a depth cap of 60 bisections.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    let budget = abs_tol.max(rel_tol * whole.abs()).max(f64::MIN_POSITIVE);
    simpson_recurse(f, a, b, fa, fm, fb, whole, budget, 60)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn simpson_recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let err = left + right - whole;
    if depth == 0 || err.abs() <= 15.0 * tol {
        return left + right + err / 15.0;
    }
    simpson_recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Geometric node ladder from `hi` down toward `lo` (both positive,
/// `hi > lo`), `per_decade` points per factor of ten, descending order,
/// endpoints included. Used to resolve integrable endpoint singularities.
pub fn geometric_nodes(hi: f64, lo: f64, per_decade: usize) -> Vec<f64> {
    assert!(hi > lo && lo > 0.0 && per_decade > 0);
    let decades = (hi / lo).log10();
    let n = ((decades * per_decade as f64).ceil() as usize).max(1);
    let mut out = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t = k as f64 / n as f64;
        out.push(hi * (lo / hi).powf(t));
    }
    out[n] = lo;
    out
}
