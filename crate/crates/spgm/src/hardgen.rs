//! Adversarial lower-bound machinery: extends an SPGM history into a hard
//! smooth convex function that (i) interpolates everything observed so far,
//! (ii) reveals at most one new gradient direction per query to any
//! gradient-span method, and (iii) forces a final objective gap exactly
//! matching the dynamically certified rate.
//!
//! The construction simulates the method forward under worst-case rate
//! increments, drawing the future gradients mutually orthogonal to the past
//! (the least informative consistent choice), with norms set by a scalar
//! recursion so that every coupling inequality is tight where the rate proof
//! needs it to be.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::first_order::{coupling_q, FirstOrderTriple, History, PlusTransform};
use crate::linalg;
use crate::methods::{delta_increment, IncrementKind, Oracle};

#[derive(Debug, Error)]
pub enum HardGenError {
    #[error("ambient dimension {d} too small: the construction needs d >= {need}")]
    DimensionTooSmall { d: usize, need: usize },
    #[error("switch round must satisfy 1 <= n <= N, got n = {n}, N = {budget}")]
    InvalidSwitchRound { n: usize, budget: usize },
    #[error("degenerate construction: ||z_half - x0||^2 = {0:e}")]
    DegenerateDelta(f64),
    #[error("state inconsistent with history: {0}")]
    StateMismatch(String),
    #[error("could not complete an orthonormal gradient basis")]
    BasisConstruction,
    #[error("inner simplex solver stalled with duality gap {gap:e} (tolerance {tol:e})")]
    InnerSolver { gap: f64, tol: f64 },
    #[error("iterate {index} leaves the observed gradient span (residual {residual:e})")]
    SpanViolation { index: usize, residual: f64 },
}

/// The round-`n` SPGM quantities the construction consumes.
pub struct SpgmRoundState<'a> {
    /// Certified rates `tau_0..tau_{n-1}`.
    pub taus: &'a [f64],
    /// Optimal subproblem value at round `n`.
    pub tau_half: f64,
    /// Auxiliary vector of the round-`n` subproblem solution.
    pub z_half: &'a Array1<f64>,
    /// Dual scalar recovered from the same solution.
    pub xi_star: f64,
}

/// A fully materialized adversarial instance over indices `0..=N` plus the
/// distinguished minimizer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HardInstance {
    pub l: f64,
    pub d: usize,
    /// Round at which the construction takes over from the observed history.
    pub switch_round: usize,
    pub budget: usize,
    /// Points: observed history for `i < switch_round`, constructed beyond.
    pub xs: Vec<Array1<f64>>,
    pub fs: Vec<f64>,
    pub gs: Vec<Array1<f64>>,
    pub x_star: Array1<f64>,
    pub f_star: f64,
    /// `||z_half - x0||^2`.
    pub delta: f64,
    pub xi_star: f64,
    pub tau_half: f64,
    /// Gradient-norm recursion values for the constructed rounds.
    pub etas: Vec<f64>,
    /// Rate increments `delta_n..delta_N`.
    pub deltas: Vec<f64>,
    /// Worst-case rate chain `tau_{n,n}..tau_{n,N}`.
    pub taus: Vec<f64>,
    /// Orthonormal directions carrying the constructed gradients.
    pub orthobasis: Vec<Array1<f64>>,
    /// Auxiliary vector of the switch-round subproblem.
    pub z_half: Array1<f64>,
    /// History index attaining the smallest stepped value at the switch.
    pub argmin_index: usize,
}

impl HardInstance {
    pub fn x0(&self) -> &Array1<f64> {
        &self.xs[0]
    }

    pub fn n_indices(&self) -> usize {
        self.budget + 1
    }

    fn triple(&self, i: usize) -> FirstOrderTriple {
        FirstOrderTriple { x: self.xs[i].clone(), f: self.fs[i], g: self.gs[i].clone() }
    }

    fn star_triple(&self) -> FirstOrderTriple {
        FirstOrderTriple {
            x: self.x_star.clone(),
            f: self.f_star,
            g: Array1::zeros(self.d),
        }
    }

    fn plus(&self, i: usize) -> PlusTransform {
        PlusTransform {
            x_plus: &self.xs[i] - &(&self.gs[i] / self.l),
            f_plus: self.fs[i] - self.gs[i].dot(&self.gs[i]) / (2.0 * self.l),
        }
    }

    /// `tau_{n,i}` for a constructed round `i` (absolute index).
    pub fn tau_at(&self, i: usize) -> f64 {
        self.taus[i - self.switch_round]
    }

    /// The forced final normalized gap times `L||x0 - x*||^2 / 2`: the
    /// objective floor for any gradient-span continuation.
    pub fn gap_bound(&self) -> f64 {
        let diff = self.x0() - &self.x_star;
        self.l * diff.dot(&diff) / (2.0 * self.taus[self.taus.len() - 1])
    }

    /// Data scale used by the verification tolerances.
    pub fn scale(&self) -> f64 {
        let mut s: f64 = 1.0;
        for i in 0..self.n_indices() {
            s = s.max(self.fs[i].abs());
            s = s.max(self.gs[i].dot(&self.gs[i]));
            s = s.max(self.l * self.xs[i].dot(&self.xs[i]));
        }
        s.max(self.f_star.abs()).max(self.l * self.x_star.dot(&self.x_star))
    }

    /// Value and gradient of the hard function at `y`, via the simplex
    /// maximization over supporting models.
    pub fn eval_checked(&self, y: &Array1<f64>) -> Result<(f64, Array1<f64>), HardGenError> {
        let count = self.n_indices() + 1; // all indices plus the minimizer
        let mut a = Array1::<f64>::zeros(count);
        let mut grads: Vec<&Array1<f64>> = Vec::with_capacity(count);
        for i in 0..self.n_indices() {
            let plus = self.plus(i);
            a[i] = plus.f_plus + self.gs[i].dot(&(y - &plus.x_plus));
            grads.push(&self.gs[i]);
        }
        let star = Array1::zeros(self.d);
        a[count - 1] = self.f_star;
        let star_holder = star;
        grads.push(&star_holder);

        let mut q = Array2::<f64>::zeros((count, count));
        for i in 0..count {
            for j in i..count {
                let v = grads[i].dot(grads[j]) / self.l;
                q[(i, j)] = v;
                q[(j, i)] = v;
            }
        }
        let tol = 1e-10 * 1.0f64.max(a.iter().cloned().fold(0.0, |m, v| m.max(v.abs())));
        let alpha = maximize_simplex_quadratic(&a, &q, tol)?;
        let grad_phi = &a - &q.dot(&alpha);
        let value = alpha.dot(&a) - 0.5 * alpha.dot(&q.dot(&alpha));
        let _ = grad_phi;
        let mut g = Array1::<f64>::zeros(self.d);
        for (i, gi) in grads.iter().enumerate() {
            g.scaled_add(alpha[i], gi);
        }
        Ok((value, g))
    }

    /// Worst residuals of the pairwise coupling inequalities over the
    /// extended index set, split into the nine index-range categories.
    pub fn verify_interpolation(&self, tol: f64) -> InterpolationReport {
        let n = self.switch_round;
        let total = self.n_indices();
        let mut worst = [f64::INFINITY; 9];
        let mut counts = [0usize; 9];
        let classify = |i: usize, j: usize| -> usize {
            // total encodes the star index
            let row = if i == total { 2 } else if i < n { 0 } else { 1 };
            let col = if j == total { 2 } else if j < n { 0 } else { 1 };
            row * 3 + col
        };
        let triple_at = |i: usize| -> FirstOrderTriple {
            if i == total {
                self.star_triple()
            } else {
                self.triple(i)
            }
        };
        for i in 0..=total {
            for j in 0..=total {
                if i == j || (i == total && j == total) {
                    continue;
                }
                let case = classify(i, j);
                let q = coupling_q(&triple_at(i), &triple_at(j), self.l);
                counts[case] += 1;
                if q < worst[case] {
                    worst[case] = q;
                }
            }
        }
        let min_q = worst.iter().cloned().fold(f64::INFINITY, f64::min);
        InterpolationReport { worst_by_case: worst, counts_by_case: counts, min_q, tol }
    }

    /// Checks the three families of conditions under which the supporting-
    /// model maximum reveals one new direction per query.
    pub fn verify_zero_chain(&self, tol: f64) -> ZeroChainReport {
        let n = self.switch_round;
        let big_n = self.budget;
        let x0 = self.x0().clone();

        // family 1: each future gradient is orthogonal to everything earlier
        let mut worst_orth = 0.0f64;
        for j in n..big_n {
            for i in 0..j {
                for ell in j + 1..=big_n {
                    let lhs = self.gs[i].dot(&self.gs[j]);
                    let rhs = self.gs[i].dot(&self.gs[ell]);
                    worst_orth = worst_orth.max((lhs - rhs).abs());
                }
            }
        }

        // family 2: coupling differences shifted by the anchor cross term
        let mut worst_shifted = f64::INFINITY;
        for i in 0..=big_n {
            let ti = self.triple(i);
            for j in n..big_n {
                for ell in j + 1..=big_n {
                    let q_il = coupling_q(&ti, &self.triple(ell), self.l);
                    let q_ij = coupling_q(&ti, &self.triple(j), self.l);
                    let cross = (&self.gs[ell] - &self.gs[j]).dot(&(&ti.x - &x0));
                    let value = q_il - q_ij + cross;
                    if value < worst_shifted {
                        worst_shifted = value;
                    }
                }
            }
        }

        // family 3: separability via orthogonality and nonvanishing norms
        let mut min_norm = f64::INFINITY;
        let mut worst_cosine = 0.0f64;
        for j in n..big_n {
            let nj = linalg::norm2(self.gs[j].view());
            min_norm = min_norm.min(nj);
            for k in j + 1..=big_n {
                let nk = linalg::norm2(self.gs[k].view());
                if nj > 0.0 && nk > 0.0 {
                    worst_cosine = worst_cosine.max(self.gs[j].dot(&self.gs[k]).abs() / (nj * nk));
                }
            }
        }

        ZeroChainReport { worst_orth, worst_shifted, min_norm, worst_cosine, tol }
    }

    /// Checks the bounds and monotonicity of the gradient-norm recursion.
    pub fn eta_report(&self, rel: f64) -> EtaReport {
        let mut worst_lower = 0.0f64;
        let mut worst_upper = 0.0f64;
        let mut worst_monotone = 0.0f64;
        let mut worst_chain = 0.0f64;
        let count = self.etas.len();
        for i in 0..count {
            let eta = self.etas[i];
            let delta = self.deltas[i];
            let tau = self.taus[i];
            let lower = 1.0 / (2.0 * tau * (delta - 1.0));
            let upper = 1.0 / (2.0 * self.tau_half * delta);
            worst_lower = worst_lower.max((lower - eta) / lower);
            worst_upper = worst_upper.max((eta - upper) / upper);
        }
        for i in 0..count.saturating_sub(1) {
            let cur = self.taus[i] * (self.deltas[i] - 1.0) * self.etas[i];
            let next = self.taus[i + 1] * (self.deltas[i + 1] - 1.0) * self.etas[i + 1];
            worst_monotone = worst_monotone.max((cur - next) / cur.abs().max(1e-300));
        }
        for i in 0..count {
            for j in i + 1..count {
                let lhs = self.deltas[j] * self.etas[j];
                let rhs = (self.deltas[i] - 1.0) * self.etas[i];
                worst_chain = worst_chain.max((lhs - rhs) / rhs.abs().max(1e-300));
            }
        }
        EtaReport { worst_lower, worst_upper, worst_monotone, worst_chain, rel }
    }

    /// Worst relative error of the closed-form cross terms
    /// `<g_j, x_i+ - x_j+>` over all pairs `j < i` with `i` constructed.
    pub fn crossterm_worst_rel(&self) -> f64 {
        let n = self.switch_round;
        let m = self.argmin_index;
        let x_half_plus = self.plus(m).x_plus;
        let mut worst = 0.0f64;
        for i in n..=self.budget {
            let pi = self.plus(i);
            for j in 0..i {
                let pj = self.plus(j);
                let lhs = self.gs[j].dot(&(&pi.x_plus - &pj.x_plus));
                let rhs = if j >= n {
                    (self.tau_at(j) / self.tau_at(i) - 1.0)
                        * (self.deltas[j - n] - 1.0)
                        * self.l
                        * self.etas[j - n]
                        * self.delta
                } else {
                    self.tau_half / self.tau_at(i)
                        * self.gs[j].dot(&(&x_half_plus - &self.z_half))
                        + self.gs[j].dot(&(&self.z_half - &pj.x_plus))
                };
                let denom = lhs.abs().max(rhs.abs()).max(1e-12 * self.l * self.delta);
                worst = worst.max((lhs - rhs).abs() / denom);
            }
        }
        worst
    }

    /// Relative residual of the forced-gap identity
    /// `f_N - f_star = (L / 2 tau_{n,N}) ||x0 - x_star||^2`.
    pub fn gap_identity_rel(&self) -> f64 {
        let lhs = self.fs[self.budget] - self.f_star;
        let rhs = self.gap_bound();
        (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-300)
    }

    /// Final objective gap of a gradient-span continuation. The supplied
    /// iterates are `x_n..x_N`; each must lie in the starting point plus the
    /// span of all gradients revealed before it (history gradients for the
    /// prefix, hard-function gradients as they are queried).
    pub fn adversary_gap(&self, iterates: &[Array1<f64>]) -> Result<f64, HardGenError> {
        let n = self.switch_round;
        if iterates.len() != self.budget - n + 1 {
            return Err(HardGenError::StateMismatch(format!(
                "expected {} continuation iterates, got {}",
                self.budget - n + 1,
                iterates.len()
            )));
        }
        let x0 = self.x0().clone();
        let mut basis = linalg::orthonormal_basis(&self.gs[..n].to_vec(), 1e-12);
        let mut last_value = f64::NAN;
        for (offset, x) in iterates.iter().enumerate() {
            let diff = x - &x0;
            let residual = linalg::residual_outside_span(&diff, &basis);
            let scale = 1.0f64.max(linalg::norm2(diff.view()));
            if residual > 1e-8 * scale {
                return Err(HardGenError::SpanViolation { index: n + offset, residual });
            }
            let (f, g) = self.eval_checked(x)?;
            last_value = f;
            if let Some(q) = linalg::orthogonal_residual(&g, &basis, 1e-12) {
                basis.push(q);
            }
        }
        let gap = last_value - self.f_star;
        debug_assert!(
            gap >= (1.0 - 1e-6) * self.gap_bound() - 1e-12 * self.scale(),
            "continuation beat the certified floor: {gap} < {}",
            self.gap_bound()
        );
        Ok(gap)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("hard instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

impl Oracle for HardInstance {
    fn eval(&self, x: &Array1<f64>) -> (f64, Array1<f64>) {
        self.eval_checked(x).expect("inner simplex solver converges")
    }
    fn dim(&self) -> usize {
        self.d
    }
    fn smoothness(&self) -> f64 {
        self.l
    }
}

#[derive(Debug, Clone)]
pub struct InterpolationReport {
    /// Minimum coupling value in each of the nine index-range categories
    /// (`+inf` where the category is empty).
    pub worst_by_case: [f64; 9],
    pub counts_by_case: [usize; 9],
    pub min_q: f64,
    pub tol: f64,
}

impl InterpolationReport {
    pub fn ok(&self) -> bool {
        self.min_q >= -self.tol
    }
}

#[derive(Debug, Clone)]
pub struct ZeroChainReport {
    pub worst_orth: f64,
    pub worst_shifted: f64,
    pub min_norm: f64,
    pub worst_cosine: f64,
    pub tol: f64,
}

impl ZeroChainReport {
    pub fn ok(&self) -> bool {
        self.worst_orth <= self.tol
            && self.worst_shifted >= -self.tol
            && self.min_norm > 0.0
            && self.worst_cosine <= self.tol
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EtaReport {
    pub worst_lower: f64,
    pub worst_upper: f64,
    pub worst_monotone: f64,
    pub worst_chain: f64,
    pub rel: f64,
}

impl EtaReport {
    pub fn ok(&self) -> bool {
        self.worst_lower <= self.rel
            && self.worst_upper <= self.rel
            && self.worst_monotone <= self.rel
            && self.worst_chain <= self.rel
    }
}

/// Builds the adversarial instance extending `history` from round
/// `n = history.len()` out to `budget`, given the round-`n` subproblem
/// solution and its dual scalar.
pub fn build_hard_instance(
    history: &History,
    state: SpgmRoundState<'_>,
    budget: usize,
    seed: u64,
) -> Result<HardInstance, HardGenError> {
    let n = history.len();
    if n == 0 || n > budget {
        return Err(HardGenError::InvalidSwitchRound { n, budget });
    }
    if state.taus.len() != n {
        return Err(HardGenError::StateMismatch(format!(
            "history has {n} rounds but state carries {} rates",
            state.taus.len()
        )));
    }
    let d = history.triple(0).dim();
    if d < budget + 2 {
        return Err(HardGenError::DimensionTooSmall { d, need: budget + 2 });
    }
    let l = history.l();
    let x0 = history.triple(0).x.clone();

    let z_diff = state.z_half - &x0;
    let delta_sq = z_diff.dot(&z_diff);
    if delta_sq <= 1e-12 * x0.dot(&x0) || delta_sq == 0.0 {
        return Err(HardGenError::DegenerateDelta(delta_sq));
    }
    let delta_cap = delta_sq;

    // argmin of the stepped values over the history
    let mut argmin = 0;
    for i in 1..n {
        if history.plus(i).f_plus < history.plus(argmin).f_plus {
            argmin = i;
        }
    }
    let f_half_plus = history.plus(argmin).f_plus;
    let x_half_plus = history.plus(argmin).x_plus.clone();
    let f_star = f_half_plus - state.xi_star;

    // worst-case rate chain and gradient-norm recursion
    let rounds = budget - n + 1;
    let mut deltas = Vec::with_capacity(rounds);
    let mut taus = Vec::with_capacity(rounds);
    let mut etas = Vec::with_capacity(rounds);
    let mut tau_prev = state.tau_half;
    let mut weight_sum = 0.0;
    for i in n..=budget {
        let kind = IncrementKind::for_round(i, budget);
        let delta_i = delta_increment(tau_prev, kind);
        let tau_i = tau_prev + delta_i;
        let eta_i = if i == n {
            1.0 / (2.0 * state.tau_half * delta_i)
        } else {
            (1.0 + weight_sum) / (2.0 * tau_prev * delta_i)
        };
        weight_sum += delta_i * delta_i * eta_i;
        deltas.push(delta_i);
        taus.push(tau_i);
        etas.push(eta_i);
        tau_prev = tau_i;
    }

    // orthonormal directions orthogonal to every observed gradient
    let old_grads: Vec<Array1<f64>> = (0..n).map(|i| history.triple(i).g.clone()).collect();
    let mut basis = linalg::orthonormal_basis(&old_grads, 1e-12);
    let prefix_rank = basis.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut orthobasis = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let mut found = false;
        for _attempt in 0..64 {
            let cand = Array1::from_shape_fn(d, |_| rng.sample::<f64, _>(StandardNormal));
            if let Some(q) = linalg::orthogonal_residual(&cand, &basis, 1e-6) {
                orthobasis.push(q.clone());
                basis.push(q);
                found = true;
                break;
            }
        }
        if !found {
            return Err(HardGenError::BasisConstruction);
        }
    }
    let _ = prefix_rank;

    // forward simulation of the method under the worst-case chain
    let mut xs: Vec<Array1<f64>> = (0..n).map(|i| history.triple(i).x.clone()).collect();
    let mut fs: Vec<f64> = (0..n).map(|i| history.triple(i).f).collect();
    let mut gs: Vec<Array1<f64>> = old_grads;
    let mut z = state.z_half.clone();
    let mut x_plus_prev = x_half_plus;
    let mut tau_anchor = state.tau_half;
    for idx in 0..rounds {
        let delta_i = deltas[idx];
        let tau_i = taus[idx];
        let eta_i = etas[idx];
        let x_i = &(&x_plus_prev * (tau_anchor / tau_i)) + &(&z * (delta_i / tau_i));
        let g_i = &orthobasis[idx] * (l * (eta_i * delta_cap).sqrt());
        let f_i = f_star + 0.5 * l * delta_cap * (2.0 * delta_i - 1.0) * eta_i;
        z.scaled_add(-delta_i / l, &g_i);
        x_plus_prev = &x_i - &(&g_i / l);
        tau_anchor = tau_i;
        xs.push(x_i);
        fs.push(f_i);
        gs.push(g_i);
    }
    let x_star = z;

    Ok(HardInstance {
        l,
        d,
        switch_round: n,
        budget,
        xs,
        fs,
        gs,
        x_star,
        f_star,
        delta: delta_cap,
        xi_star: state.xi_star,
        tau_half: state.tau_half,
        etas,
        deltas,
        taus,
        orthobasis,
        z_half: state.z_half.clone(),
        argmin_index: argmin,
    })
}

/// Builds the instance straight from a (full-memory) SPGM engine state:
/// solves the upcoming subproblem, recovers its dual, and extends the
/// engine's history out to its budget.
pub fn build_from_engine(
    engine: &crate::methods::SpgmEngine,
    seed: u64,
) -> Result<HardInstance, HardGenError> {
    let (data, sol) = engine
        .peek_subproblem()
        .map_err(|e| HardGenError::StateMismatch(e.to_string()))?;
    if sol.status != crate::subqp::SubproblemStatus::Optimal {
        return Err(HardGenError::StateMismatch(
            "switch-round subproblem is not bounded-optimal".into(),
        ));
    }
    let dual = crate::subqp::recover_dual(&sol, &data)
        .map_err(|e| HardGenError::StateMismatch(e.to_string()))?;
    build_hard_instance(
        engine.history(),
        SpgmRoundState {
            taus: engine.taus(),
            tau_half: sol.tau,
            z_half: &sol.z,
            xi_star: dual.xi,
        },
        engine.budget(),
        seed,
    )
}

/// Concave quadratic maximization over the probability simplex:
/// `max a'alpha - (1/2) alpha'Q alpha`, solved by accelerated projected
/// gradient with an active-set polish for machine-precision optima.
fn maximize_simplex_quadratic(
    a: &Array1<f64>,
    q: &Array2<f64>,
    tol: f64,
) -> Result<Array1<f64>, HardGenError> {
    let count = a.len();
    if count == 1 {
        return Ok(ndarray::array![1.0]);
    }
    let (vals, _) = linalg::jacobi_eigen(q);
    let lip = vals.iter().cloned().fold(0.0f64, f64::max).max(1e-300);
    let step = 1.0 / lip;

    let dual_gap = |alpha: &Array1<f64>| -> f64 {
        let grad = a - &q.dot(alpha);
        let max_g = grad.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        max_g - grad.dot(alpha)
    };

    let mut alpha = Array1::<f64>::from_elem(count, 1.0 / count as f64);
    let mut momentum = alpha.clone();
    let mut t = 1.0f64;
    let cap = 10_000usize;
    let mut it = 0;
    while it < cap {
        for _ in 0..25 {
            it += 1;
            let grad = a - &q.dot(&momentum);
            let next = linalg::project_simplex((&momentum + &(&grad * step)).view());
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            momentum = &next + &((&next - &alpha) * ((t - 1.0) / t_next));
            alpha = next;
            t = t_next;
        }
        if dual_gap(&alpha) <= tol.max(1e-13) * 10.0 {
            break;
        }
    }

    // active-set polish on the support identified by the accelerated phase
    if let Some(exact) = polish_on_support(a, q, &alpha) {
        if dual_gap(&exact) <= dual_gap(&alpha) {
            alpha = exact;
        }
    }
    let gap = dual_gap(&alpha);
    if gap > tol {
        return Err(HardGenError::InnerSolver { gap, tol });
    }
    Ok(alpha)
}

fn polish_on_support(
    a: &Array1<f64>,
    q: &Array2<f64>,
    warm: &Array1<f64>,
) -> Option<Array1<f64>> {
    let count = a.len();
    let warm_max = warm.iter().cloned().fold(0.0f64, f64::max);
    let mut support: Vec<usize> =
        (0..count).filter(|&i| warm[i] > 1e-10 * warm_max.max(1.0)).collect();
    if support.is_empty() {
        return None;
    }
    for _ in 0..4 * count {
        let s = support.len();
        // equality-constrained stationarity on the support
        let mut kkt = Array2::<f64>::zeros((s + 1, s + 1));
        let mut rhs = Array1::<f64>::zeros(s + 1);
        for (r, &i) in support.iter().enumerate() {
            for (cidx, &j) in support.iter().enumerate() {
                kkt[(r, cidx)] = q[(i, j)];
            }
            kkt[(r, s)] = 1.0;
            kkt[(s, r)] = 1.0;
            rhs[r] = a[i];
        }
        rhs[s] = 1.0;
        let sol = linalg::lu_solve(&kkt, &rhs)?;
        let nu = sol[s];
        let mut most_negative: Option<(usize, f64)> = None;
        for (r, &i) in support.iter().enumerate() {
            if sol[r] < -1e-14 {
                if most_negative.map_or(true, |(_, v)| sol[r] < v) {
                    most_negative = Some((i, sol[r]));
                }
            }
        }
        if let Some((idx, _)) = most_negative {
            support.retain(|&i| i != idx);
            if support.is_empty() {
                return None;
            }
            continue;
        }
        // assemble the full vector and test optimality off the support
        let mut alpha = Array1::<f64>::zeros(count);
        for (r, &i) in support.iter().enumerate() {
            alpha[i] = sol[r].max(0.0);
        }
        let total = alpha.sum();
        if total <= 0.0 {
            return None;
        }
        alpha.mapv_inplace(|v| v / total);
        let grad = a - &q.dot(&alpha);
        let mut worst: Option<(usize, f64)> = None;
        for i in 0..count {
            if !support.contains(&i) {
                let slack = grad[i] - nu;
                if slack > 1e-12 * (1.0 + nu.abs()) && worst.map_or(true, |(_, v)| slack > v) {
                    worst = Some((i, slack));
                }
            }
        }
        match worst {
            Some((i, _)) => support.push(i),
            None => return Some(alpha),
        }
    }
    None
}

/// Samples points inside growing gradient spans and measures how much of the
/// hard function's gradient escapes the next span; the worst ratio should be
/// negligible for a valid construction.
pub fn behavioral_zero_chain_worst(inst: &HardInstance, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = inst.x0().clone();
    let mut worst = 0.0f64;
    for j in inst.switch_round..inst.budget {
        let basis_j = linalg::orthonormal_basis(&inst.gs[..j].to_vec(), 1e-12);
        let basis_j1 = linalg::orthonormal_basis(&inst.gs[..j + 1].to_vec(), 1e-12);
        for _ in 0..samples {
            let mut y = x0.clone();
            for b in &basis_j {
                let coeff: f64 = rng.sample::<f64, _>(StandardNormal);
                y.scaled_add(coeff, b);
            }
            let (_, g) = inst.eval(&y);
            let gn = linalg::norm2(g.view());
            if gn <= 1e-14 {
                continue;
            }
            let outside = linalg::residual_outside_span(&g, &basis_j1);
            worst = worst.max(outside / gn);
        }
    }
    worst
}
