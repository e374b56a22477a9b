//! Core calculus of first-order oracle data: plus-transforms, pairwise
//! coupling residuals, interpolability testing, and auxiliary-vector
//! residuals.
//!
//! A triple `(x, f, g)` records one oracle observation. A set of triples is
//! *interpolable* when some L-smooth convex function attains exactly those
//! values and gradients; the pairwise coupling quantity
//! `Q[i,j] = f_i - f_j - <g_j, x_i - x_j> - ||g_i - g_j||^2 / 2L`
//! is nonnegative for every ordered pair if and only if that holds.

use ndarray::Array1;
use thiserror::Error;

use crate::linalg;

#[derive(Debug, Error)]
pub enum FoError {
    #[error("smoothness constant must be positive, got {0}")]
    NonPositiveSmoothness(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in first-order triple")]
    NonFinite,
    #[error("triple set is not interpolable: Q[{i},{j}] = {value:e} below -{tol:e}")]
    NotInterpolable { i: usize, j: usize, value: f64, tol: f64 },
}

/// One first-order oracle observation: query point, value, gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderTriple {
    pub x: Array1<f64>,
    pub f: f64,
    pub g: Array1<f64>,
}

impl FirstOrderTriple {
    pub fn new(x: Array1<f64>, f: f64, g: Array1<f64>) -> Result<Self, FoError> {
        if x.len() != g.len() {
            return Err(FoError::DimensionMismatch { expected: x.len(), got: g.len() });
        }
        if !f.is_finite() || x.iter().any(|v| !v.is_finite()) || g.iter().any(|v| !v.is_finite()) {
            return Err(FoError::NonFinite);
        }
        Ok(Self { x, f, g })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// One gradient step from a triple and the smoothness-implied value bound
/// at the stepped point: `x+ = x - g/L`, `f+ = f - ||g||^2 / 2L`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlusTransform {
    pub x_plus: Array1<f64>,
    pub f_plus: f64,
}

pub fn plus_transform(t: &FirstOrderTriple, l: f64) -> Result<PlusTransform, FoError> {
    if !(l > 0.0) {
        return Err(FoError::NonPositiveSmoothness(l));
    }
    let x_plus = &t.x - &(&t.g / l);
    let f_plus = t.f - t.g.dot(&t.g) / (2.0 * l);
    Ok(PlusTransform { x_plus, f_plus })
}

/// Coupling residual `Q[i,j]`, computed in the plus-form
/// `f_i+ - f_j+ - <g_j, x_i+ - x_j+>`, which avoids mixing the raw inner
/// product and gradient-difference terms at different scales.
pub fn coupling_q(i: &FirstOrderTriple, j: &FirstOrderTriple, l: f64) -> f64 {
    debug_assert_eq!(i.dim(), j.dim());
    let pi = plus_transform(i, l).expect("valid smoothness constant");
    let pj = plus_transform(j, l).expect("valid smoothness constant");
    pi.f_plus - pj.f_plus - j.g.dot(&(&pi.x_plus - &pj.x_plus))
}

/// Coupling residual in the raw form
/// `f_i - f_j - <g_j, x_i - x_j> - ||g_i - g_j||^2 / 2L`.
///
/// Algebraically equal to [`coupling_q`]; kept for cross-checking.
pub fn coupling_q_raw(i: &FirstOrderTriple, j: &FirstOrderTriple, l: f64) -> f64 {
    debug_assert_eq!(i.dim(), j.dim());
    let diff_g = &i.g - &j.g;
    i.f - j.f - j.g.dot(&(&i.x - &j.x)) - diff_g.dot(&diff_g) / (2.0 * l)
}

/// Result of an interpolability test over a triple set.
#[derive(Debug, Clone, PartialEq)]
pub enum Interpolability {
    Ok,
    /// The worst violating ordered pair and its coupling value.
    Violation { i: usize, j: usize, value: f64 },
}

impl Interpolability {
    pub fn is_ok(&self) -> bool {
        matches!(self, Interpolability::Ok)
    }
}

/// Tests whether every ordered pair satisfies `Q[i,j] >= -tol`.
pub fn is_interpolable(triples: &[FirstOrderTriple], l: f64, tol: f64) -> Interpolability {
    assert!(tol >= 0.0, "tolerance must be nonnegative");
    let mut worst: Option<(usize, usize, f64)> = None;
    let pluses: Vec<PlusTransform> =
        triples.iter().map(|t| plus_transform(t, l).expect("valid L")).collect();
    for (i, (ti, pi)) in triples.iter().zip(&pluses).enumerate() {
        for (j, (tj, pj)) in triples.iter().zip(&pluses).enumerate() {
            if i == j {
                continue;
            }
            let _ = ti;
            let q = pi.f_plus - pj.f_plus - tj.g.dot(&(&pi.x_plus - &pj.x_plus));
            if q < -tol {
                match worst {
                    Some((_, _, w)) if q >= w => {}
                    _ => worst = Some((i, j, q)),
                }
            }
        }
    }
    match worst {
        None => Interpolability::Ok,
        Some((i, j, value)) => Interpolability::Violation { i, j, value },
    }
}

/// Default interpolability tolerance: `1e-9` relative to the data scale
/// `max(1, |f|, ||g||^2, L ||x||^2)` over the triples.
pub fn default_tolerance(triples: &[FirstOrderTriple], l: f64) -> f64 {
    1e-9 * data_scale(triples, l)
}

/// Scale of a triple set: `max(1, |f_i|, ||g_i||^2, L ||x_i||^2)`.
pub fn data_scale(triples: &[FirstOrderTriple], l: f64) -> f64 {
    let mut scale: f64 = 1.0;
    for t in triples {
        scale = scale.max(t.f.abs());
        scale = scale.max(t.g.dot(&t.g));
        scale = scale.max(l * t.x.dot(&t.x));
    }
    scale
}

/// Whether a certificate bounds `f(x)+` (pre-rate) or `f(x)` (rate).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertKind {
    PreRate,
    Rate,
}

/// An auxiliary-vector certificate `(z, tau)`: nonnegativity of
/// [`aux_residual`] certifies
/// `target - f* + (L/2tau) ||z - x*||^2 <= (L/2tau) ||x0 - x*||^2`,
/// where `target` is `f(x)+` for a pre-rate and `f(x)` for a rate.
#[derive(Debug, Clone)]
pub struct AuxCertificate {
    pub z: Array1<f64>,
    pub tau: f64,
    pub kind: CertKind,
}

impl AuxCertificate {
    pub fn new(z: Array1<f64>, tau: f64, kind: CertKind) -> Self {
        assert!(tau > 0.0, "certificate rate must be positive");
        Self { z, tau, kind }
    }
}

/// Residual `H = tau (f* - target) + (L/2)||x0 - x*||^2 - (L/2)||z - x*||^2`.
pub fn aux_residual(
    cert: &AuxCertificate,
    x0: &Array1<f64>,
    x_star: &Array1<f64>,
    f_star: f64,
    target: f64,
    l: f64,
) -> f64 {
    let d0 = x0 - x_star;
    let dz = &cert.z - x_star;
    cert.tau * (f_star - target) + 0.5 * l * d0.dot(&d0) - 0.5 * l * dz.dot(&dz)
}

/// An interpolable, ordered sequence of oracle observations together with the
/// smoothness constant: the running state every method reasons over.
///
/// Pushing a triple revalidates interpolability incrementally (only the pairs
/// involving the new point) against the default tolerance.
#[derive(Debug, Clone)]
pub struct History {
    l: f64,
    triples: Vec<FirstOrderTriple>,
    pluses: Vec<PlusTransform>,
    scale: f64,
}

impl History {
    pub fn new(l: f64) -> Result<Self, FoError> {
        if !(l > 0.0) {
            return Err(FoError::NonPositiveSmoothness(l));
        }
        Ok(Self { l, triples: Vec::new(), pluses: Vec::new(), scale: 1.0 })
    }

    pub fn from_triples(l: f64, triples: Vec<FirstOrderTriple>) -> Result<Self, FoError> {
        let mut h = Self::new(l)?;
        for t in triples {
            h.push(t)?;
        }
        Ok(h)
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &[FirstOrderTriple] {
        &self.triples
    }

    pub fn triple(&self, i: usize) -> &FirstOrderTriple {
        &self.triples[i]
    }

    pub fn plus(&self, i: usize) -> &PlusTransform {
        &self.pluses[i]
    }

    pub fn pluses(&self) -> &[PlusTransform] {
        &self.pluses
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn tolerance(&self) -> f64 {
        1e-9 * self.scale
    }

    /// Appends an observation, checking the new coupling pairs only.
    pub fn push(&mut self, t: FirstOrderTriple) -> Result<(), FoError> {
        if let Some(first) = self.triples.first() {
            if first.dim() != t.dim() {
                return Err(FoError::DimensionMismatch { expected: first.dim(), got: t.dim() });
            }
        }
        let p = plus_transform(&t, self.l)?;
        self.scale = self
            .scale
            .max(t.f.abs())
            .max(t.g.dot(&t.g))
            .max(self.l * t.x.dot(&t.x));
        let tol = self.tolerance();
        let k = self.triples.len();
        for (i, (ti, pi)) in self.triples.iter().zip(&self.pluses).enumerate() {
            let q_new_old = p.f_plus - pi.f_plus - ti.g.dot(&(&p.x_plus - &pi.x_plus));
            if q_new_old < -tol {
                return Err(FoError::NotInterpolable { i: k, j: i, value: q_new_old, tol });
            }
            let q_old_new = pi.f_plus - p.f_plus - t.g.dot(&(&pi.x_plus - &p.x_plus));
            if q_old_new < -tol {
                return Err(FoError::NotInterpolable { i, j: k, value: q_old_new, tol });
            }
        }
        self.triples.push(t);
        self.pluses.push(p);
        Ok(())
    }

    /// Removes the oldest observation (limited-memory windowing).
    pub fn pop_front(&mut self) {
        if !self.triples.is_empty() {
            self.triples.remove(0);
            self.pluses.remove(0);
        }
    }

    /// Full pairwise interpolability check at the stored tolerance.
    pub fn validate(&self) -> Interpolability {
        is_interpolable(&self.triples, self.l, self.tolerance())
    }
}

/// Convenience constructor for scalar (1-d) triples, used heavily in tests.
pub fn triple1(x: f64, f: f64, g: f64) -> FirstOrderTriple {
    FirstOrderTriple::new(ndarray::array![x], f, ndarray::array![g]).expect("finite scalars")
}

/// Norm helper re-exported for trace recording.
pub fn grad_norm(t: &FirstOrderTriple) -> f64 {
    linalg::norm2(t.g.view())
}
