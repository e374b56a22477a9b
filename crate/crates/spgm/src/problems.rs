//! Problem oracles (value + gradient), random instance generation, LIBSVM
//! ingestion, smoothness-constant estimation, and reference optima.
//!
//! Every family is parameterized by a dense `A` (m x d), a vector `b` (m),
//! and a starting point `x0` (d). The stored smoothness constant is a
//! certified upper bound on the true one, so any method run with it stays
//! valid (at the cost of tightness).

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::linalg;
use crate::methods::{self, Oracle};

/// Curvature of the Huber penalty used by the regularized least-squares
/// families.
pub const HUBER_CURVATURE: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    LsPlain,
    LsL2,
    LsHuberNorm,
    LsHuberL1,
    LogSumExp,
    MoreauMax,
    LogisticL2,
    Quadratic1d,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::LsPlain,
        Family::LsL2,
        Family::LsHuberNorm,
        Family::LsHuberL1,
        Family::LogSumExp,
        Family::MoreauMax,
        Family::LogisticL2,
        Family::Quadratic1d,
    ];

    /// The six randomly generated benchmark families.
    pub const BENCHMARK: [Family; 6] = [
        Family::LsPlain,
        Family::LsL2,
        Family::LsHuberNorm,
        Family::LsHuberL1,
        Family::LogSumExp,
        Family::MoreauMax,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Family::LsPlain => "ls_plain",
            Family::LsL2 => "ls_l2",
            Family::LsHuberNorm => "ls_huber_norm",
            Family::LsHuberL1 => "ls_huber_l1",
            Family::LogSumExp => "log_sum_exp",
            Family::MoreauMax => "moreau_max",
            Family::LogisticL2 => "logistic_l2",
            Family::Quadratic1d => "quadratic_1d",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        Family::ALL.iter().copied().find(|f| f.as_str() == s)
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("dimension mismatch: instance expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("libsvm parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("classification labels must take at most two distinct values, found {0}")]
    TooManyLabels(usize),
}

/// One smooth convex minimization instance.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub family: Family,
    pub a: Array2<f64>,
    pub b: Array1<f64>,
    /// Certified smoothness upper bound.
    pub l: f64,
    pub x0: Array1<f64>,
    pub seed: u64,
}

impl ProblemInstance {
    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn cols(&self) -> usize {
        if self.family == Family::Quadratic1d {
            1
        } else {
            self.a.ncols()
        }
    }

    /// The scalar benchmark instance `f(x) = L x^2 / 2`.
    pub fn quadratic_1d(l: f64, x0: f64) -> Self {
        assert!(l > 0.0);
        Self {
            family: Family::Quadratic1d,
            a: Array2::eye(1),
            b: Array1::zeros(1),
            l,
            x0: ndarray::array![x0],
            seed: 0,
        }
    }

    /// Exact analytic value and gradient at `x`.
    pub fn eval(&self, x: &Array1<f64>) -> (f64, Array1<f64>) {
        assert_eq!(x.len(), self.cols(), "query dimension mismatch");
        let m = self.rows() as f64;
        match self.family {
            Family::Quadratic1d => (0.5 * self.l * x[0] * x[0], ndarray::array![self.l * x[0]]),
            Family::LsPlain => {
                let r = self.a.dot(x) - &self.b;
                (r.dot(&r) / m, self.a.t().dot(&r) * (2.0 / m))
            }
            Family::LsL2 => {
                let r = self.a.dot(x) - &self.b;
                let f = r.dot(&r) / m + 0.5 * x.dot(x);
                let g = &(self.a.t().dot(&r) * (2.0 / m)) + x;
                (f, g)
            }
            Family::LsHuberNorm => {
                let r = self.a.dot(x) - &self.b;
                let nx = linalg::norm2(x.view());
                let (hv, hslope) = huber(HUBER_CURVATURE, nx);
                let f = r.dot(&r) / m + hv;
                let mut g = self.a.t().dot(&r) * (2.0 / m);
                if nx > 0.0 {
                    g.scaled_add(hslope / nx, x);
                }
                (f, g)
            }
            Family::LsHuberL1 => {
                let r = self.a.dot(x) - &self.b;
                let mut f = r.dot(&r) / m;
                let mut g = self.a.t().dot(&r) * (2.0 / m);
                for (i, &xi) in x.iter().enumerate() {
                    let (hv, hslope) = huber(HUBER_CURVATURE, xi.abs());
                    f += hv;
                    g[i] += hslope * xi.signum();
                }
                (f, g)
            }
            Family::LogSumExp => {
                let t = self.a.dot(x) - &self.b;
                let (f, p) = log_sum_exp(t.view());
                (f, self.a.t().dot(&p))
            }
            Family::MoreauMax => {
                let t = self.a.dot(x) - &self.b;
                let p = linalg::project_simplex(t.view());
                let f = p.dot(&t) - 0.5 * p.dot(&p);
                (f, self.a.t().dot(&p))
            }
            Family::LogisticL2 => {
                let t = self.a.dot(x);
                let mut f = 0.5 * x.dot(x) / m;
                let mut weights = Array1::<f64>::zeros(self.rows());
                for i in 0..self.rows() {
                    let s = self.b[i] * t[i];
                    f += softplus(s) / m;
                    weights[i] = self.b[i] * sigmoid(s) / m;
                }
                let g = &self.a.t().dot(&weights) + &(x / m);
                (f, g)
            }
        }
    }
}

impl Oracle for ProblemInstance {
    fn eval(&self, x: &Array1<f64>) -> (f64, Array1<f64>) {
        ProblemInstance::eval(self, x)
    }
    fn dim(&self) -> usize {
        self.cols()
    }
    fn smoothness(&self) -> f64 {
        self.l
    }
}

/// Huber value and slope at radius `r >= 0`: quadratic `(L/2) r^2` up to
/// radius one, linear `L r - L/2` beyond.
fn huber(l: f64, r: f64) -> (f64, f64) {
    if r <= 1.0 {
        (0.5 * l * r * r, l * r)
    } else {
        (l * r - 0.5 * l, l)
    }
}

/// `log(sum exp(t_i))` with max-subtraction, plus the softmax weights.
fn log_sum_exp(t: ArrayView1<f64>) -> (f64, Array1<f64>) {
    let max = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let shifted = t.mapv(|v| (v - max).exp());
    let total = shifted.sum();
    (max + total.ln(), shifted / total)
}

fn softplus(s: f64) -> f64 {
    s.max(0.0) + (-s.abs()).exp().ln_1p()
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// Certified smoothness upper bound for a family given its data matrix.
///
/// The spectral piece comes from power iteration to relative tolerance 1e-6,
/// inflated by 1% (or by 10% if the iteration cap is hit); curvature of the
/// separable terms is added exactly.
pub fn smoothness_bound(family: Family, a: &Array2<f64>) -> f64 {
    let m = a.nrows().max(1) as f64;
    let res = linalg::gram_lambda_max(a.view(), 1e-6, 10_000);
    let lam = if res.converged {
        res.lambda_max * 1.01
    } else {
        log::warn!(
            "power iteration did not converge in {} iterations; inflating bound by 10%",
            res.iterations
        );
        res.lambda_max * 1.10
    };
    let l = match family {
        Family::LsPlain => 2.0 / m * lam,
        Family::LsL2 => 2.0 / m * lam + 1.0,
        Family::LsHuberNorm | Family::LsHuberL1 => 2.0 / m * lam + HUBER_CURVATURE,
        Family::LogSumExp | Family::MoreauMax => lam,
        Family::LogisticL2 => lam / (4.0 * m) + 1.0 / m,
        Family::Quadratic1d => lam,
    };
    l.max(1e-12)
}

/// Re-derives the certified smoothness bound of an assembled instance.
pub fn estimate_smoothness(p: &ProblemInstance) -> f64 {
    if p.family == Family::Quadratic1d {
        return p.l;
    }
    smoothness_bound(p.family, &p.a)
}

/// Deterministic random instance: `A`, `b`, `x0` standard normal under a
/// counter-based seedable generator, smoothness certified per family.
pub fn gen_random(family: Family, d: usize, m: usize, seed: u64) -> ProblemInstance {
    assert!(d >= 1 && m >= 1);
    assert_ne!(family, Family::Quadratic1d, "use ProblemInstance::quadratic_1d");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Array2::from_shape_fn((m, d), |_| rng.sample::<f64, _>(StandardNormal));
    let b = Array1::from_shape_fn(m, |_| rng.sample::<f64, _>(StandardNormal));
    let x0 = Array1::from_shape_fn(d, |_| rng.sample::<f64, _>(StandardNormal));
    let l = smoothness_bound(family, &a);
    ProblemInstance { family, a, b, l, x0, seed }
}

/// Builds an instance over externally supplied (dataset) columns; `x0` is
/// drawn from the seed.
pub fn from_dataset(family: Family, a: Array2<f64>, b: Array1<f64>, seed: u64) -> ProblemInstance {
    let d = a.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = Array1::from_shape_fn(d, |_| rng.sample::<f64, _>(StandardNormal));
    let l = smoothness_bound(family, &a);
    ProblemInstance { family, a, b, l, x0, seed }
}

// ---------------------------------------------------------------------------
// LIBSVM ingestion

/// Parses LIBSVM text: each nonempty line is `label idx:val idx:val ...`
/// with 1-based strictly increasing indices. Returns the densified matrix
/// (column count = largest index seen) and the label vector.
pub fn parse_libsvm(text: &str) -> Result<(Array2<f64>, Array1<f64>), ProblemError> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels: Vec<f64> = Vec::new();
    let mut d = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().expect("nonempty line has a first token");
        let label: f64 = label_tok.parse().map_err(|_| ProblemError::Parse {
            line: lineno + 1,
            reason: format!("invalid label {label_tok:?}"),
        })?;
        let mut row = Vec::new();
        let mut last_idx = 0usize;
        for tok in tokens {
            let (idx_s, val_s) = tok.split_once(':').ok_or_else(|| ProblemError::Parse {
                line: lineno + 1,
                reason: format!("expected idx:val, got {tok:?}"),
            })?;
            let idx: usize = idx_s.parse().map_err(|_| ProblemError::Parse {
                line: lineno + 1,
                reason: format!("invalid index {idx_s:?}"),
            })?;
            if idx == 0 {
                return Err(ProblemError::Parse {
                    line: lineno + 1,
                    reason: "indices are 1-based".into(),
                });
            }
            if idx <= last_idx {
                return Err(ProblemError::Parse {
                    line: lineno + 1,
                    reason: format!("indices must be strictly increasing, got {idx} after {last_idx}"),
                });
            }
            let val: f64 = val_s.parse().map_err(|_| ProblemError::Parse {
                line: lineno + 1,
                reason: format!("invalid value {val_s:?}"),
            })?;
            last_idx = idx;
            d = d.max(idx);
            row.push((idx - 1, val));
        }
        rows.push(row);
        labels.push(label);
    }
    if rows.is_empty() {
        log::warn!("libsvm stream contained no records");
        return Ok((Array2::zeros((0, 0)), Array1::zeros(0)));
    }
    let mut a = Array2::<f64>::zeros((rows.len(), d));
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            a[(i, j)] = v;
        }
    }
    Ok((a, Array1::from_vec(labels)))
}

/// Serializes a dense matrix and labels back to LIBSVM text, skipping zero
/// entries. Round-trips [`parse_libsvm`] output.
pub fn serialize_libsvm(a: &Array2<f64>, labels: &Array1<f64>) -> String {
    let mut out = String::new();
    for i in 0..a.nrows() {
        out.push_str(&format!("{}", labels[i]));
        for j in 0..a.ncols() {
            let v = a[(i, j)];
            if v != 0.0 {
                out.push_str(&format!(" {}:{}", j + 1, v));
            }
        }
        out.push('\n');
    }
    out
}

/// Scales each column of `a` to unit Euclidean norm (zero columns are left
/// alone) and maps labels onto `{-1, +1}`: sets already inside `{-1, +1}`
/// are kept, otherwise the first-seen class becomes `-1`.
pub fn normalize_dataset(
    a: &Array2<f64>,
    labels: &Array1<f64>,
) -> Result<(Array2<f64>, Array1<f64>), ProblemError> {
    let mut out = a.clone();
    for j in 0..out.ncols() {
        let norm = linalg::norm2(out.column(j));
        if norm > 0.0 {
            out.column_mut(j).mapv_inplace(|v| v / norm);
        }
    }
    let mut classes: Vec<f64> = Vec::new();
    for &l in labels.iter() {
        if !classes.iter().any(|&c| c == l) {
            classes.push(l);
        }
    }
    if classes.len() > 2 {
        return Err(ProblemError::TooManyLabels(classes.len()));
    }
    let signed = classes.iter().all(|&c| c == -1.0 || c == 1.0);
    let mapped = if signed {
        labels.clone()
    } else {
        labels.mapv(|l| if l == classes[0] { -1.0 } else { 1.0 })
    };
    Ok((out, mapped))
}

// ---------------------------------------------------------------------------
// Reference optima

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceSource {
    ClosedForm,
    HighAccuracyRun,
}

/// Baseline optimum used to normalize suboptimality in traces and tests.
#[derive(Debug, Clone)]
pub struct ReferenceOptimum {
    pub x_star: Array1<f64>,
    pub f_star: f64,
    pub source: ReferenceSource,
    /// Gradient norm at `x_star`, the certificate of its quality.
    pub grad_norm: f64,
}

/// Computes a reference optimum: normal equations for the two plain
/// least-squares families, the exact scalar answer for the 1-d quadratic,
/// and otherwise the best point of long OGM and limited-memory SPGM runs at
/// ten times the benchmark budget.
pub fn reference_optimum(p: &ProblemInstance, budget: usize) -> ReferenceOptimum {
    match p.family {
        Family::Quadratic1d => ReferenceOptimum {
            x_star: ndarray::array![0.0],
            f_star: 0.0,
            source: ReferenceSource::ClosedForm,
            grad_norm: 0.0,
        },
        Family::LsPlain => {
            let ata = p.a.t().dot(&p.a);
            let atb = p.a.t().dot(&p.b);
            match linalg::cholesky_solve(&ata, &atb) {
                Some(x) => closed_form_reference(p, x),
                None => high_accuracy_reference(p, budget),
            }
        }
        Family::LsL2 => {
            let m = p.rows() as f64;
            let mut lhs = p.a.t().dot(&p.a) * (2.0 / m);
            for i in 0..lhs.nrows() {
                lhs[(i, i)] += 1.0;
            }
            let rhs = p.a.t().dot(&p.b) * (2.0 / m);
            match linalg::cholesky_solve(&lhs, &rhs) {
                Some(x) => closed_form_reference(p, x),
                None => high_accuracy_reference(p, budget),
            }
        }
        _ => high_accuracy_reference(p, budget),
    }
}

fn closed_form_reference(p: &ProblemInstance, x: Array1<f64>) -> ReferenceOptimum {
    let (f, g) = p.eval(&x);
    ReferenceOptimum {
        x_star: x,
        f_star: f,
        source: ReferenceSource::ClosedForm,
        grad_norm: linalg::norm2(g.view()),
    }
}

fn high_accuracy_reference(p: &ProblemInstance, budget: usize) -> ReferenceOptimum {
    let long = (10 * budget).max(100);
    let mut best: Option<(f64, Array1<f64>, f64)> = None;
    fn absorb(best: &mut Option<(f64, Array1<f64>, f64)>, trace: &methods::RunTrace) {
        for (rec, x) in trace.records.iter().zip(&trace.iterates) {
            if best.as_ref().map_or(true, |(bf, _, _)| rec.f < *bf) {
                *best = Some((rec.f, x.clone(), rec.grad_norm));
            }
        }
    }
    if let Ok(trace) = methods::run_ogm(p, &p.x0, long) {
        absorb(&mut best, &trace);
    }
    // full-memory SPGM at 10x budget is quartic in the budget through its
    // subproblems; restarted windowed runs reach the gradient certificate
    // faster than a single long run anyway
    let chunk = 200.min(long);
    let mut spent = 0;
    let mut start = p.x0.clone();
    while spent < long {
        if let Ok(trace) = methods::run_k_spgm(p, &start, chunk, 10) {
            absorb(&mut best, &trace);
        } else {
            break;
        }
        spent += chunk;
        let (bf, bx, bg) = best.as_ref().expect("absorbed at least one record");
        let diff = &p.x0 - bx;
        let scale = 1.0f64.max(bf.abs()).max(0.5 * p.l * diff.dot(&diff));
        if *bg <= 1e-9 * scale {
            break;
        }
        start = bx.clone();
    }
    let (f_star, x_star, _) = best.expect("at least one reference run succeeded");
    let (_, g) = p.eval(&x_star);
    ReferenceOptimum {
        x_star,
        f_star,
        source: ReferenceSource::HighAccuracyRun,
        grad_norm: linalg::norm2(g.view()),
    }
}

/// Scale for normalized-gap comparisons against a reference.
pub fn reference_scale(p: &ProblemInstance, reference: &ReferenceOptimum) -> f64 {
    let diff = &p.x0 - &reference.x_star;
    1.0f64.max(reference.f_star.abs()).max(0.5 * p.l * diff.dot(&diff))
}
