//! Assembly and solution of the per-iteration rate subproblem: a linear
//! objective maximized over nonnegative weights subject to one convex
//! quadratic constraint, expressed in Gram form so its size depends on the
//! history window, not the ambient dimension.
//!
//! The weights `(mu, lambda_star)` form conic combinations of the stored
//! auxiliary-vector residuals and optimality couplings; the optimal value is
//! the largest pre-rate certifiable from the observed history. Unboundedness
//! means the history already pins down a minimizer.

use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::first_order::History;
use crate::linalg;

/// Objective cap above which the subproblem is declared unbounded.
pub const DEFAULT_TAU_CAP: f64 = 1e12;

#[derive(Debug, Error)]
pub enum SubqpError {
    #[error("run state inconsistent with history: {0}")]
    InconsistentState(String),
    #[error("dual recovery requires a bounded optimal solution")]
    DualFromNonOptimal,
    #[error("dual recovery inconsistent: z coincides with x0 while tau = {0}")]
    DegenerateDual(f64),
}

/// Per-round method state needed to assemble the subproblem.
pub struct RunStateView<'a> {
    /// Certified rates `tau_i`, one per history index.
    pub taus: &'a [f64],
    /// Auxiliary vectors `z_{i+1}`, one per history index.
    pub zs: &'a [Array1<f64>],
}

/// The subproblem in Gram form.
///
/// Column `i` of `Z` is `z_{i+1} - x0` and column `i` of `G` is `g_i / L`;
/// only their inner products enter the solver, but the explicit columns are
/// kept alongside to reconstruct the auxiliary vector of a solution and to
/// cross-check the Gram algebra.
#[derive(Debug, Clone)]
pub struct SubproblemData {
    /// Window size (number of active history indices).
    pub block: usize,
    /// Global index of the first window column.
    pub window_start: usize,
    pub btau: Array1<f64>,
    pub bh: Array1<f64>,
    pub bq: Array1<f64>,
    pub gram_zz: Array2<f64>,
    pub gram_gg: Array2<f64>,
    /// `Z^T G`.
    pub gram_zg: Array2<f64>,
    /// `Z^T x0`.
    pub lin_z: Array1<f64>,
    /// `G^T x0`.
    pub lin_g: Array1<f64>,
    pub f_half_plus: f64,
    pub l: f64,
    pub z_cols: Vec<Array1<f64>>,
    pub g_cols: Vec<Array1<f64>>,
    pub x0: Array1<f64>,
}

impl SubproblemData {
    /// Standard-form pieces `(P, q, c)` of the problem
    /// `max c'w  s.t.  (1/2) w'Pw + q'w <= 0,  w >= 0` over `w = (mu, lambda)`.
    pub fn quadratic_terms(&self) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
        let s = self.block;
        let p = 2 * s;
        let mut pm = Array2::<f64>::zeros((p, p));
        for i in 0..s {
            for j in 0..s {
                pm[(i, j)] = self.l * self.gram_zz[(i, j)];
                pm[(i, s + j)] = -self.l * self.gram_zg[(i, j)];
                pm[(s + i, j)] = -self.l * self.gram_zg[(j, i)];
                pm[(s + i, s + j)] = self.l * self.gram_gg[(i, j)];
            }
        }
        // symmetrize against Gram round-off
        for i in 0..p {
            for j in i + 1..p {
                let v = 0.5 * (pm[(i, j)] + pm[(j, i)]);
                pm[(i, j)] = v;
                pm[(j, i)] = v;
            }
        }
        let mut q = Array1::<f64>::zeros(p);
        let mut c = Array1::<f64>::zeros(p);
        for i in 0..s {
            q[i] = self.l * self.lin_z[i] - (self.bh[i] - self.f_half_plus * self.btau[i]);
            q[s + i] = -self.l * self.lin_g[i] - (self.bq[i] - self.f_half_plus);
            c[i] = self.btau[i];
            c[s + i] = 1.0;
        }
        (pm, q, c)
    }

    /// Scale used for all solver tolerances.
    pub fn scale(&self) -> f64 {
        let (pm, q, _) = self.quadratic_terms();
        let trace: f64 = pm.diag().sum();
        1.0f64.max(self.f_half_plus.abs()).max(trace).max(linalg::norm2(q.view()))
    }

    /// Constraint value `(1/2) w'Pw + q'w` in Gram form.
    pub fn constraint_value(&self, w: &Array1<f64>) -> f64 {
        let (pm, q, _) = self.quadratic_terms();
        0.5 * w.dot(&pm.dot(w)) + q.dot(w)
    }

    /// Constraint value recomputed from the explicit d-dimensional columns.
    pub fn constraint_value_explicit(&self, mu: &Array1<f64>, lambda: &Array1<f64>) -> f64 {
        let z = self.z_vector(mu, lambda);
        let mut rhs = 0.0;
        for i in 0..self.block {
            rhs += mu[i] * (self.bh[i] - self.f_half_plus * self.btau[i]);
            rhs += lambda[i] * (self.bq[i] - self.f_half_plus);
        }
        0.5 * self.l * (z.dot(&z) - self.x0.dot(&self.x0)) - rhs
    }

    /// Auxiliary vector `z = x0 + Z mu - G lambda`.
    pub fn z_vector(&self, mu: &Array1<f64>, lambda: &Array1<f64>) -> Array1<f64> {
        let mut z = self.x0.clone();
        for i in 0..self.block {
            z.scaled_add(mu[i], &self.z_cols[i]);
            z.scaled_add(-lambda[i], &self.g_cols[i]);
        }
        z
    }

    pub fn objective(&self, mu: &Array1<f64>, lambda: &Array1<f64>) -> f64 {
        self.btau.dot(mu) + lambda.sum()
    }
}

/// Assembles the subproblem from scratch out of a history and the per-round
/// state, optionally restricted to the last `k` indices.
pub fn assemble(
    history: &History,
    x0: &Array1<f64>,
    state: RunStateView<'_>,
    window: Option<usize>,
) -> Result<SubproblemData, SubqpError> {
    let n = history.len();
    if n == 0 {
        return Err(SubqpError::InconsistentState("empty history".into()));
    }
    if state.taus.len() != n || state.zs.len() != n {
        return Err(SubqpError::InconsistentState(format!(
            "history has {n} triples but state carries {} taus / {} zs",
            state.taus.len(),
            state.zs.len()
        )));
    }
    let l = history.l();
    let s = window.map_or(n, |k| k.max(1).min(n));
    let start = n - s;
    let x0_sq = x0.dot(x0);

    let mut btau = Array1::<f64>::zeros(s);
    let mut bh = Array1::<f64>::zeros(s);
    let mut bq = Array1::<f64>::zeros(s);
    let mut z_cols = Vec::with_capacity(s);
    let mut g_cols = Vec::with_capacity(s);
    let mut f_half_plus = f64::INFINITY;
    for (w, i) in (start..n).enumerate() {
        let t = history.triple(i);
        let plus = history.plus(i);
        btau[w] = state.taus[i];
        let zi = &state.zs[i];
        bh[w] = state.taus[i] * plus.f_plus - 0.5 * l * x0_sq + 0.5 * l * zi.dot(zi);
        bq[w] = plus.f_plus - t.g.dot(&plus.x_plus);
        z_cols.push(zi - x0);
        g_cols.push(&t.g / l);
        if plus.f_plus < f_half_plus {
            f_half_plus = plus.f_plus;
        }
    }

    let mut gram_zz = Array2::<f64>::zeros((s, s));
    let mut gram_gg = Array2::<f64>::zeros((s, s));
    let mut gram_zg = Array2::<f64>::zeros((s, s));
    let mut lin_z = Array1::<f64>::zeros(s);
    let mut lin_g = Array1::<f64>::zeros(s);
    for i in 0..s {
        for j in 0..s {
            gram_zz[(i, j)] = z_cols[i].dot(&z_cols[j]);
            gram_gg[(i, j)] = g_cols[i].dot(&g_cols[j]);
            gram_zg[(i, j)] = z_cols[i].dot(&g_cols[j]);
        }
        lin_z[i] = z_cols[i].dot(x0);
        lin_g[i] = g_cols[i].dot(x0);
    }

    Ok(SubproblemData {
        block: s,
        window_start: start,
        btau,
        bh,
        bq,
        gram_zz,
        gram_gg,
        gram_zg,
        lin_z,
        lin_g,
        f_half_plus,
        l,
        z_cols,
        g_cols,
        x0: x0.clone(),
    })
}

/// Incrementally maintained inner-product state for the subproblem columns.
///
/// Pushing a round costs `O(d k)`; sliding the window drops the leading
/// row/column of each small matrix.
#[derive(Debug, Clone)]
pub struct GramCache {
    x0: Array1<f64>,
    l: f64,
    z_cols: Vec<Array1<f64>>,
    g_cols: Vec<Array1<f64>>,
    zz: Vec<Vec<f64>>,
    gg: Vec<Vec<f64>>,
    zg: Vec<Vec<f64>>,
    lin_z: Vec<f64>,
    lin_g: Vec<f64>,
    window_start: usize,
}

impl GramCache {
    pub fn new(x0: Array1<f64>, l: f64) -> Self {
        Self {
            x0,
            l,
            z_cols: Vec::new(),
            g_cols: Vec::new(),
            zz: Vec::new(),
            gg: Vec::new(),
            zg: Vec::new(),
            lin_z: Vec::new(),
            lin_g: Vec::new(),
            window_start: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.z_cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z_cols.is_empty()
    }

    pub fn window_start(&self) -> usize {
        self.window_start
    }

    /// Appends the columns for one completed round: `z_next = z_{i+1}`,
    /// `g` the gradient revealed at round `i`.
    pub fn push(&mut self, z_next: &Array1<f64>, g: &Array1<f64>) {
        let z_col = z_next - &self.x0;
        let g_col = g / self.l;
        let k = self.len();
        let mut zz_row = Vec::with_capacity(k + 1);
        let mut gg_row = Vec::with_capacity(k + 1);
        let mut zg_row = Vec::with_capacity(k + 1);
        for j in 0..k {
            zz_row.push(z_col.dot(&self.z_cols[j]));
            gg_row.push(g_col.dot(&self.g_cols[j]));
            zg_row.push(z_col.dot(&self.g_cols[j]));
            // column entries of the new index in existing rows
            self.zz[j].push(self.z_cols[j].dot(&z_col));
            self.gg[j].push(self.g_cols[j].dot(&g_col));
            self.zg[j].push(self.z_cols[j].dot(&g_col));
        }
        zz_row.push(z_col.dot(&z_col));
        gg_row.push(g_col.dot(&g_col));
        zg_row.push(z_col.dot(&g_col));
        self.zz.push(zz_row);
        self.gg.push(gg_row);
        self.zg.push(zg_row);
        self.lin_z.push(z_col.dot(&self.x0));
        self.lin_g.push(g_col.dot(&self.x0));
        self.z_cols.push(z_col);
        self.g_cols.push(g_col);
    }

    /// Drops the oldest round from the window.
    pub fn pop_front(&mut self) {
        if self.is_empty() {
            return;
        }
        self.z_cols.remove(0);
        self.g_cols.remove(0);
        self.zz.remove(0);
        self.gg.remove(0);
        self.zg.remove(0);
        for row in &mut self.zz {
            row.remove(0);
        }
        for row in &mut self.gg {
            row.remove(0);
        }
        for row in &mut self.zg {
            row.remove(0);
        }
        self.lin_z.remove(0);
        self.lin_g.remove(0);
        self.window_start += 1;
    }

    /// Packages the cached geometry with the caller's per-index vectors.
    pub fn data(&self, btau: &[f64], bh: &[f64], bq: &[f64], f_half_plus: f64) -> SubproblemData {
        let s = self.len();
        assert_eq!(btau.len(), s);
        assert_eq!(bh.len(), s);
        assert_eq!(bq.len(), s);
        let mut gram_zz = Array2::<f64>::zeros((s, s));
        let mut gram_gg = Array2::<f64>::zeros((s, s));
        let mut gram_zg = Array2::<f64>::zeros((s, s));
        for i in 0..s {
            for j in 0..s {
                gram_zz[(i, j)] = self.zz[i][j];
                gram_gg[(i, j)] = self.gg[i][j];
                gram_zg[(i, j)] = self.zg[i][j];
            }
        }
        SubproblemData {
            block: s,
            window_start: self.window_start,
            btau: Array1::from_vec(btau.to_vec()),
            bh: Array1::from_vec(bh.to_vec()),
            bq: Array1::from_vec(bq.to_vec()),
            gram_zz,
            gram_gg,
            gram_zg,
            lin_z: Array1::from_vec(self.lin_z.clone()),
            lin_g: Array1::from_vec(self.lin_g.clone()),
            f_half_plus,
            l: self.l,
            z_cols: self.z_cols.clone(),
            g_cols: self.g_cols.clone(),
            x0: self.x0.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubproblemStatus {
    Optimal,
    Unbounded,
    InfeasibleNumerical,
}

/// Certificate attached to an unbounded verdict: a nonnegative direction in
/// the null space of the constraint curvature with nonpositive linear slope,
/// or (cap-based) the normalized iterate that blew past the objective cap.
#[derive(Debug, Clone)]
pub struct RecessionCertificate {
    pub direction: Array1<f64>,
    pub cap_based: bool,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub status: SubproblemStatus,
    /// Optimal value (meaningful for `Optimal`; last objective otherwise).
    pub tau: f64,
    pub mu: Array1<f64>,
    pub lambda_star: Array1<f64>,
    /// `x0 + Z mu - G lambda` for bounded solutions.
    pub z: Array1<f64>,
    pub recession: Option<RecessionCertificate>,
    pub diagnostics: SolveDiagnostics,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tau_cap: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tau_cap: DEFAULT_TAU_CAP, tol: 1e-11, max_iters: 120 }
    }
}

/// Maximizes the subproblem objective.
///
/// Unboundedness is detected in two stages: an exact recession search over
/// the null space of the curvature restricted to the nonnegative orthant,
/// and a fallback objective cap inside the interior-point iteration.
pub fn solve(data: &SubproblemData, opts: &SolveOptions) -> SubproblemSolution {
    let (pm, q, c) = data.quadratic_terms();
    let p = c.len();
    debug_assert!(p >= 2);

    if let Some(direction) = recession_direction(&pm, &q) {
        let s = data.block;
        let mu = direction.slice(ndarray::s![..s]).to_owned();
        let lambda = direction.slice(ndarray::s![s..]).to_owned();
        return SubproblemSolution {
            status: SubproblemStatus::Unbounded,
            tau: f64::INFINITY,
            mu,
            lambda_star: lambda,
            z: data.x0.clone(),
            recession: Some(RecessionCertificate { direction, cap_based: false }),
            diagnostics: SolveDiagnostics::default(),
        };
    }

    interior_point(data, &pm, &q, &c, opts)
}

/// Searches for a nonzero `d >= 0` with `P d = 0` and `q'd <= 0`.
///
/// Because the objective weights are strictly positive, any such direction
/// certifies an unbounded objective. The search alternates projections
/// between the probability simplex and the (subspace ∩ half-space) set; an
/// empty intersection shows up as a non-vanishing gap.
fn recession_direction(pm: &Array2<f64>, q: &Array1<f64>) -> Option<Array1<f64>> {
    let p = pm.nrows();
    let trace: f64 = pm.diag().sum();
    if trace <= 0.0 {
        // zero curvature: the whole orthant recedes, only the slope matters
        let uniform = Array1::<f64>::from_elem(p, 1.0 / p as f64);
        let q_scale = 1.0 + linalg::norm2(q.view());
        if q.dot(&uniform) <= 1e-8 * q_scale {
            return Some(uniform);
        }
        // fall through to the projection search against the half-space
    }

    // range of the curvature via rank-revealing Cholesky; a full-rank
    // curvature admits no recession at all
    let (rank, range) = if trace <= 0.0 {
        (0, Vec::new())
    } else {
        linalg::psd_range_basis(pm, 1e-12)
    };
    if rank == p {
        return None;
    }
    let project_null = |v: &Array1<f64>| -> Array1<f64> {
        let mut out = v.clone();
        for b in &range {
            let coeff = out.dot(b);
            out.scaled_add(-coeff, b);
        }
        out
    };
    let q_sub = project_null(q);
    let q_sub_sq = q_sub.dot(&q_sub);
    let q_scale = 1.0 + linalg::norm2(q.view());

    // alternate projections between the simplex and (null space ∩ slope
    // half-space); a non-vanishing gap means the sets do not meet, and a
    // false negative here is safe (the objective cap still applies)
    let mut d = Array1::<f64>::from_elem(p, 1.0 / p as f64);
    let mut e = d.clone();
    let mut gap = f64::INFINITY;
    let mut best_gap = f64::INFINITY;
    let mut since_improvement = 0usize;
    for it in 0..600 {
        e = project_null(&d);
        if q.dot(&e) > 0.0 && q_sub_sq > 1e-30 * q_scale * q_scale {
            let shift = q.dot(&e) / q_sub_sq;
            e.scaled_add(-shift, &q_sub);
        }
        let next = linalg::project_simplex(e.view());
        let diff = &next - &e;
        gap = linalg::norm2(diff.view());
        d = next;
        if gap <= 1e-12 {
            break;
        }
        if gap < best_gap * (1.0 - 1e-3) {
            best_gap = gap;
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement >= 40 {
                break;
            }
        }
        if it >= 50 && gap > 0.2 {
            break;
        }
    }
    if gap > 1e-9 {
        return None;
    }
    // exactness check on the clamped certificate
    let mut cand = e.mapv(|x| x.max(0.0));
    let total = cand.sum();
    if total <= 1e-8 {
        return None;
    }
    cand.mapv_inplace(|x| x / total);
    let p_cand = pm.dot(&cand);
    let p_resid = p_cand.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
    if p_resid > 1e-8 * (1.0 + trace) {
        return None;
    }
    if q.dot(&cand) > 1e-8 * q_scale {
        return None;
    }
    Some(cand)
}

/// Infeasible-start primal-dual interior-point method with Mehrotra
/// predictor-corrector steps on the standard-form problem.
fn interior_point(
    data: &SubproblemData,
    pm: &Array2<f64>,
    q: &Array1<f64>,
    c: &Array1<f64>,
    opts: &SolveOptions,
) -> SubproblemSolution {
    let p = c.len();
    let s_block = data.block;

    let gval = |w: &Array1<f64>| -> f64 { 0.5 * w.dot(&pm.dot(w)) + q.dot(w) };

    // start near the always-feasible unit weight on the newest history index
    let mut w = Array1::<f64>::from_elem(p, 0.01);
    w[s_block - 1] = 0.5;
    let g0 = gval(&w);
    let mut v = if g0 < 0.0 { -g0 } else { g0.abs() + 1.0 };
    v = v.max(1e-4);
    let mut y = 1.0f64;
    let mut sv = c.mapv(|ci| ci.max(1.0));

    let c_inf = c.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
    let mut best: Option<(f64, Array1<f64>, SolveDiagnostics)> = None;

    let mut diag = SolveDiagnostics::default();
    for it in 0..opts.max_iters {
        diag.iterations = it + 1;
        let h = pm.dot(&w) + q;
        let g = gval(&w);
        let rp = g + v;
        let rd = &(&h * y) - c - &sv;
        let obj = c.dot(&w);

        if obj > opts.tau_cap {
            let norm1 = w.sum().max(f64::MIN_POSITIVE);
            let direction = w.mapv(|x| x / norm1);
            let mu = direction.slice(ndarray::s![..s_block]).to_owned();
            let lambda = direction.slice(ndarray::s![s_block..]).to_owned();
            return SubproblemSolution {
                status: SubproblemStatus::Unbounded,
                tau: f64::INFINITY,
                mu,
                lambda_star: lambda,
                z: data.x0.clone(),
                recession: Some(RecessionCertificate { direction, cap_based: true }),
                diagnostics: diag,
            };
        }

        let comp = y * v + w.dot(&sv);
        let mu_hat = comp / (p as f64 + 1.0);
        let rel_p = rp.abs() / (1.0 + g.abs() + v);
        let rel_d = rd.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()))
            / (1.0 + c_inf + h.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs())) * y);
        let rel_gap = comp / (1.0 + obj.abs());
        diag.primal_residual = rel_p;
        diag.dual_residual = rel_d;
        diag.gap = rel_gap;

        let merit = rel_p.max(rel_d).max(rel_gap);
        if best.as_ref().map_or(true, |(m, _, _)| merit < *m) {
            best = Some((merit, w.clone(), diag));
        }
        if merit <= opts.tol {
            break;
        }

        // KKT system on (dw, dy) after eliminating ds and dv
        let mut kkt = Array2::<f64>::zeros((p + 1, p + 1));
        for i in 0..p {
            for j in 0..p {
                kkt[(i, j)] = y * pm[(i, j)];
            }
            kkt[(i, i)] += sv[i] / w[i];
            kkt[(i, p)] = h[i];
            kkt[(p, i)] = h[i];
        }
        kkt[(p, p)] = -v / y;

        let Some(factors) = linalg::LuFactors::factor(&kkt) else {
            break;
        };
        let solve_kkt = |rc_w: &Array1<f64>, rc_y: f64| -> (Array1<f64>, f64) {
            // rc_w = centering rhs for the w complementarity, rc_y for y*v
            let mut rhs = Array1::<f64>::zeros(p + 1);
            for i in 0..p {
                rhs[i] = -rd[i] + rc_w[i] / w[i];
            }
            rhs[p] = -rp - rc_y / y;
            let sol = factors.solve(&rhs);
            let dw = sol.slice(ndarray::s![..p]).to_owned();
            let dy = sol[p];
            (dw, dy)
        };

        // affine predictor
        let rc_w_aff = -(&w * &sv);
        let rc_y_aff = -(y * v);
        let (dw_aff, dy_aff) = solve_kkt(&rc_w_aff, rc_y_aff);
        let ds_aff = {
            let mut out = Array1::<f64>::zeros(p);
            for i in 0..p {
                out[i] = (rc_w_aff[i] - sv[i] * dw_aff[i]) / w[i];
            }
            out
        };
        let dv_aff = (rc_y_aff - v * dy_aff) / y;

        let alpha_aff = step_length(&w, &dw_aff, &sv, &ds_aff, y, dy_aff, v, dv_aff, 1.0);
        let comp_aff = (y + alpha_aff * dy_aff) * (v + alpha_aff * dv_aff)
            + (&w + &(alpha_aff * &dw_aff)).dot(&(&sv + &(alpha_aff * &ds_aff)));
        let sigma = ((comp_aff / comp).max(0.0)).powi(3).min(1.0);

        // corrector
        let mut rc_w = Array1::<f64>::zeros(p);
        for i in 0..p {
            rc_w[i] = sigma * mu_hat - w[i] * sv[i] - dw_aff[i] * ds_aff[i];
        }
        let rc_y = sigma * mu_hat - y * v - dy_aff * dv_aff;
        let (dw, dy) = solve_kkt(&rc_w, rc_y);
        let mut ds = Array1::<f64>::zeros(p);
        for i in 0..p {
            ds[i] = (rc_w[i] - sv[i] * dw[i]) / w[i];
        }
        let dv = (rc_y - v * dy) / y;

        let alpha = step_length(&w, &dw, &sv, &ds, y, dy, v, dv, 0.995);
        if alpha <= 1e-14 {
            break;
        }
        w.scaled_add(alpha, &dw);
        sv.scaled_add(alpha, &ds);
        y += alpha * dy;
        v += alpha * dv;
    }

    let (merit, w_best, diag_best) = best.expect("at least one iterate recorded");
    let accept_tol = 1e-8f64;
    let w_final = w_best.mapv(|x| x.max(0.0));
    let mu = w_final.slice(ndarray::s![..s_block]).to_owned();
    let lambda = w_final.slice(ndarray::s![s_block..]).to_owned();
    let tau = c.dot(&w_final);
    let z = data.z_vector(&mu, &lambda);
    if merit <= accept_tol.max(opts.tol) {
        SubproblemSolution {
            status: SubproblemStatus::Optimal,
            tau,
            mu,
            lambda_star: lambda,
            z,
            recession: None,
            diagnostics: diag_best,
        }
    } else {
        SubproblemSolution {
            status: SubproblemStatus::InfeasibleNumerical,
            tau,
            mu,
            lambda_star: lambda,
            z,
            recession: None,
            diagnostics: diag_best,
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn step_length(
    w: &Array1<f64>,
    dw: &Array1<f64>,
    sv: &Array1<f64>,
    ds: &Array1<f64>,
    y: f64,
    dy: f64,
    v: f64,
    dv: f64,
    shrink: f64,
) -> f64 {
    let mut alpha = 1.0f64;
    let limit = |x: f64, dx: f64, alpha: f64| -> f64 {
        if dx < 0.0 {
            alpha.min(-x / dx)
        } else {
            alpha
        }
    };
    for i in 0..w.len() {
        alpha = limit(w[i], dw[i], alpha);
        alpha = limit(sv[i], ds[i], alpha);
    }
    alpha = limit(y, dy, alpha);
    alpha = limit(v, dv, alpha);
    (shrink * alpha).min(1.0)
}

/// Dual certificate recovered from a bounded optimal solution:
/// `xi = L ||x0 - z||^2 / (2 tau)` with `z` shared between primal and dual
/// by complementary slackness.
#[derive(Debug, Clone)]
pub struct DualCertificate {
    pub xi: f64,
    pub z_dual: Array1<f64>,
    /// Largest violation of the auxiliary-residual dual constraints.
    pub feas_h: f64,
    /// Largest violation of the coupling dual constraints.
    pub feas_q: f64,
    /// `|tau - (L/2 xi) ||x0 - z||^2|`.
    pub strong_duality_residual: f64,
}

pub fn recover_dual(
    sol: &SubproblemSolution,
    data: &SubproblemData,
) -> Result<DualCertificate, SubqpError> {
    if sol.status != SubproblemStatus::Optimal || !(sol.tau > 0.0) {
        return Err(SubqpError::DualFromNonOptimal);
    }
    let diff = &sol.z - &data.x0;
    let dist_sq = diff.dot(&diff);
    if dist_sq <= 1e-14 * (1.0 + data.x0.dot(&data.x0)) {
        return Err(SubqpError::DegenerateDual(sol.tau));
    }
    let xi = data.l * dist_sq / (2.0 * sol.tau);
    let strong_duality_residual = (sol.tau - data.l * dist_sq / (2.0 * xi)).abs();

    // dual feasibility via the Gram forms of Z'z and G'z
    let s = data.block;
    let zt_z = &data.lin_z + &data.gram_zz.dot(&sol.mu) - &data.gram_zg.dot(&sol.lambda_star);
    let gt_z =
        &data.lin_g + &data.gram_zg.t().dot(&sol.mu) - &data.gram_gg.dot(&sol.lambda_star);
    let bound = data.f_half_plus - xi;
    let mut feas_h = 0.0f64;
    let mut feas_q = 0.0f64;
    for i in 0..s {
        feas_h = feas_h.max(data.bh[i] - data.l * zt_z[i] - bound * data.btau[i]);
        feas_q = feas_q.max(data.bq[i] + data.l * gt_z[i] - bound);
    }
    Ok(DualCertificate { xi, z_dual: sol.z.clone(), feas_h, feas_q, strong_duality_residual })
}

pub mod reference {
    //! Grid + ray brute force over the subproblem, independent of the
    //! interior-point path. Only intended for small blocks.
    //!
    //! Zero is feasible and the constraint is convex with value zero there,
    //! so the feasible set is star-shaped around the origin: scanning rays
    //! `t * u` over simplex directions `u` covers the whole set. Along a ray
    //! the constraint is `a t^2 / 2 + b t <= 0`, giving the exact reach
    //! `t_max = max(0, -2b/a)` (infinite when `a = 0, b <= 0`: a recession
    //! ray).

    use super::SubproblemData;
    use ndarray::{Array1, Array2};

    #[derive(Debug, Clone, Copy, PartialEq)]
    pub enum BruteForceOutcome {
        Bounded(f64),
        Unbounded,
    }

    pub fn brute_force(data: &SubproblemData, cap: f64) -> BruteForceOutcome {
        let (pm, q, c) = data.quadratic_terms();
        let p = c.len();
        assert!(p <= 8, "brute force is only meant for tiny blocks");
        let trace: f64 = pm.diag().sum();
        let a_tol = 1e-11 * (1.0 + trace);
        let b_tol = 1e-11 * (1.0 + q.iter().map(|x| x.abs()).fold(0.0, f64::max));

        let resolution = match p {
            0..=2 => 512,
            3..=4 => 48,
            5..=6 => 16,
            _ => 8,
        };

        let mut best: Vec<(f64, Array1<f64>)> = Vec::new();
        let mut unbounded = false;
        enumerate_simplex_grid(p, resolution, &mut |u| {
            match ray_value(&pm, &q, &c, u, a_tol, b_tol) {
                RayValue::Recession => unbounded = true,
                RayValue::Value(val) => {
                    best.push((val, u.clone()));
                    best.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
                    best.truncate(5);
                }
            }
        });
        if unbounded {
            return BruteForceOutcome::Unbounded;
        }

        let mut overall = 0.0f64;
        for (val0, u0) in best {
            match refine(&pm, &q, &c, u0, val0, a_tol, b_tol, cap) {
                BruteForceOutcome::Unbounded => return BruteForceOutcome::Unbounded,
                BruteForceOutcome::Bounded(v) => overall = overall.max(v),
            }
            if overall > cap {
                return BruteForceOutcome::Unbounded;
            }
        }
        BruteForceOutcome::Bounded(overall)
    }

    enum RayValue {
        Value(f64),
        Recession,
    }

    fn ray_value(
        pm: &Array2<f64>,
        q: &Array1<f64>,
        c: &Array1<f64>,
        u: &Array1<f64>,
        a_tol: f64,
        b_tol: f64,
    ) -> RayValue {
        let a = u.dot(&pm.dot(u));
        let b = q.dot(u);
        let cu = c.dot(u);
        if a <= a_tol {
            if b <= b_tol {
                return RayValue::Recession;
            }
            return RayValue::Value(0.0);
        }
        let t = (-2.0 * b / a).max(0.0);
        RayValue::Value(t * cu)
    }

    /// Repeated pairwise mass-transfer line searches on the direction simplex.
    #[allow(clippy::too_many_arguments)]
    fn refine(
        pm: &Array2<f64>,
        q: &Array1<f64>,
        c: &Array1<f64>,
        mut u: Array1<f64>,
        mut val: f64,
        a_tol: f64,
        b_tol: f64,
        cap: f64,
    ) -> BruteForceOutcome {
        let p = u.len();
        for _ in 0..120 {
            let mut improved = false;
            for i in 0..p {
                for j in 0..p {
                    if i == j {
                        continue;
                    }
                    // move delta mass from coordinate j to coordinate i
                    let mut lo = -u[i];
                    let mut hi = u[j];
                    if hi - lo <= 1e-15 {
                        continue;
                    }
                    for _zoom in 0..4 {
                        let mut local_best = (val, 0.0);
                        let steps = 32;
                        for s in 0..=steps {
                            let delta = lo + (hi - lo) * (s as f64) / (steps as f64);
                            let mut cand = u.clone();
                            cand[i] += delta;
                            cand[j] -= delta;
                            if cand[i] < 0.0 || cand[j] < 0.0 {
                                continue;
                            }
                            match ray_value(pm, q, c, &cand, a_tol, b_tol) {
                                RayValue::Recession => return BruteForceOutcome::Unbounded,
                                RayValue::Value(v) => {
                                    if v > local_best.0 {
                                        local_best = (v, delta);
                                    }
                                }
                            }
                        }
                        let width = (hi - lo) / steps as f64;
                        lo = (local_best.1 - width).max(-u[i]);
                        hi = (local_best.1 + width).min(u[j]);
                        if local_best.0 > val * (1.0 + 1e-14) + 1e-14 {
                            improved = true;
                        }
                        if local_best.0 > val {
                            val = local_best.0;
                            u[i] += local_best.1;
                            u[j] -= local_best.1;
                            u[i] = u[i].max(0.0);
                            u[j] = u[j].max(0.0);
                            lo = -u[i];
                            hi = u[j];
                        }
                    }
                    if val > cap {
                        return BruteForceOutcome::Unbounded;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        BruteForceOutcome::Bounded(val)
    }

    fn enumerate_simplex_grid(p: usize, resolution: usize, f: &mut impl FnMut(&Array1<f64>)) {
        let mut counts = vec![0usize; p];
        recurse(0, resolution, &mut counts, p, resolution, f);
    }

    fn recurse(
        idx: usize,
        remaining: usize,
        counts: &mut Vec<usize>,
        p: usize,
        resolution: usize,
        f: &mut impl FnMut(&Array1<f64>),
    ) {
        if idx == p - 1 {
            counts[idx] = remaining;
            let u = Array1::from_iter(
                counts.iter().map(|&k| k as f64 / resolution as f64),
            );
            f(&u);
            return;
        }
        for k in 0..=remaining {
            counts[idx] = k;
            recurse(idx + 1, remaining - k, counts, p, resolution, f);
        }
    }
}
