//! Method drivers: constant-step gradient descent, the optimized gradient
//! method (OGM), the subgame perfect gradient method (SPGM), and the
//! limited-memory variant of SPGM.
//!
//! All four share a query/observe engine interface so they can be driven
//! against "live" oracles by [`run`]-style helpers, resumed mid-run, or
//! plugged into the game harness as strategies.

use ndarray::Array1;
use thiserror::Error;

use crate::first_order::{FirstOrderTriple, FoError, History};
use crate::linalg;
use crate::subqp::{
    self, GramCache, SolveOptions, SubproblemData, SubproblemSolution, SubproblemStatus,
};

#[derive(Debug, Error)]
pub enum MethodError {
    #[error("subproblem solver failed at round {round}: primal {primal:.3e}, dual {dual:.3e}, gap {gap:.3e}")]
    SubproblemFailure { round: usize, primal: f64, dual: f64, gap: f64 },
    #[error("oracle returned a non-finite response at round {0}")]
    OracleFailure(usize),
    #[error("engine protocol violation: {0}")]
    Protocol(String),
    #[error(transparent)]
    FirstOrder(#[from] FoError),
}

/// A value-and-gradient oracle over a fixed dimension with a known
/// smoothness upper bound.
pub trait Oracle {
    fn eval(&self, x: &Array1<f64>) -> (f64, Array1<f64>);
    fn dim(&self) -> usize;
    fn smoothness(&self) -> f64;
}

/// Wraps a closure as an [`Oracle`]; handy in tests and fixtures.
pub struct FnOracle<F> {
    pub f: F,
    pub dim: usize,
    pub l: f64,
}

impl<F: Fn(&Array1<f64>) -> (f64, Array1<f64>)> Oracle for FnOracle<F> {
    fn eval(&self, x: &Array1<f64>) -> (f64, Array1<f64>) {
        (self.f)(x)
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn smoothness(&self) -> f64 {
        self.l
    }
}

/// Which branch of the rate increment applies: the final iteration of a
/// budget uses the smaller closing increment exactly once.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IncrementKind {
    Standard,
    Final,
}

impl IncrementKind {
    pub fn for_round(round: usize, budget: usize) -> Self {
        if round >= budget {
            IncrementKind::Final
        } else {
            IncrementKind::Standard
        }
    }
}

/// Rate increment `delta(tau)`: `1 + sqrt(1 + 2 tau)` on standard rounds and
/// `(1 + sqrt(1 + 4 tau)) / 2` on the final round. Strictly increasing in
/// `tau` on both branches.
pub fn delta_increment(tau: f64, kind: IncrementKind) -> f64 {
    debug_assert!(tau > 0.0);
    match kind {
        IncrementKind::Standard => 1.0 + (1.0 + 2.0 * tau).sqrt(),
        IncrementKind::Final => 0.5 * (1.0 + (1.0 + 4.0 * tau).sqrt()),
    }
}

/// Forecast of the rate chain from round `n` to the budget: returns
/// `[tau_{n,n}, ..., tau_{n,N}]`, applying the final increment only at `N`.
pub fn tau_forecast(tau_n: f64, n: usize, budget: usize) -> Vec<f64> {
    assert!(n <= budget);
    let mut out = Vec::with_capacity(budget - n + 1);
    let mut tau = tau_n;
    out.push(tau);
    for i in n + 1..=budget {
        tau += delta_increment(tau, IncrementKind::for_round(i, budget));
        out.push(tau);
    }
    out
}

/// Guaranteed normalized suboptimality after the budget, forecast from the
/// rate certified at round `n`.
pub fn forecast_bound_inv(tau_n: f64, n: usize, budget: usize) -> f64 {
    1.0 / *tau_forecast(tau_n, n, budget).last().expect("nonempty forecast")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodKind {
    Gd,
    Ogm,
    Spgm,
    KSpgm(usize),
}

impl std::fmt::Display for MethodKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MethodKind::Gd => write!(f, "gd"),
            MethodKind::Ogm => write!(f, "ogm"),
            MethodKind::Spgm => write!(f, "spgm"),
            MethodKind::KSpgm(k) => write!(f, "kspgm:{k}"),
        }
    }
}

/// Subproblem outcome recorded per iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    /// No subproblem at this round (GD/OGM, or the initial round).
    None,
    Optimal,
    /// Solver value fell below the running rate and was clamped to it.
    Clamped,
    Unbounded,
    /// Rounds after an early termination, padded with the terminal point.
    Padded,
}

impl StepStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            StepStatus::None => "na",
            StepStatus::Optimal => "optimal",
            StepStatus::Clamped => "clamped",
            StepStatus::Unbounded => "unbounded",
            StepStatus::Padded => "padded",
        }
    }
}

#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub n: usize,
    pub f: f64,
    pub grad_norm: f64,
    /// Certified rate after this round (NaN for GD).
    pub tau: f64,
    /// Forecast normalized bound `1/tau_{n,N}` (classical `1/N` for GD).
    pub bound_inv: f64,
    pub status: StepStatus,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct EarlyStop {
    pub round: usize,
    pub output: Array1<f64>,
}

/// Per-iteration record of one run, padded to a full rectangle even when the
/// method terminates early.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub method: MethodKind,
    pub l: f64,
    pub x0: Array1<f64>,
    pub budget: usize,
    pub records: Vec<IterationRecord>,
    pub iterates: Vec<Array1<f64>>,
    /// Certified rates `tau_0..tau_N` (empty for GD; truncated on early stop).
    pub taus: Vec<f64>,
    pub early_stop: Option<EarlyStop>,
    pub output: Array1<f64>,
}

impl RunTrace {
    pub fn final_f(&self) -> f64 {
        self.records.last().expect("nonempty trace").f
    }
}

/// Achieved-vs-guaranteed pair for one iteration.
#[derive(Debug, Clone, Copy)]
pub struct GuaranteeRow {
    pub n: usize,
    /// `(f_n - f*) / (L ||x0 - x*||^2 / 2)`.
    pub achieved: f64,
    pub bound_inv: f64,
}

/// Normalized achieved gap against the forecast bound, per iteration.
pub fn guarantee(trace: &RunTrace, x_star: &Array1<f64>, f_star: f64) -> Vec<GuaranteeRow> {
    let diff = &trace.x0 - x_star;
    let denom = 0.5 * trace.l * diff.dot(&diff);
    trace
        .records
        .iter()
        .map(|r| GuaranteeRow {
            n: r.n,
            achieved: (r.f - f_star) / denom,
            bound_inv: r.bound_inv,
        })
        .collect()
}

/// Engine interface: alternate `next_query` / `observe` for rounds
/// `0..=budget`. Round 0 always queries the starting point.
pub trait QueryEngine {
    fn next_query(&mut self) -> Result<Array1<f64>, MethodError>;
    fn observe(&mut self, f: f64, g: &Array1<f64>) -> Result<(), MethodError>;
    fn method(&self) -> MethodKind;
    /// `(tau, bound_inv, status)` describing the most recent query.
    fn record_info(&self) -> (f64, f64, StepStatus);
}

// ---------------------------------------------------------------------------
// Gradient descent

pub struct GdEngine {
    l: f64,
    budget: usize,
    x: Array1<f64>,
    awaiting: bool,
    round: usize,
}

impl GdEngine {
    pub fn new(l: f64, x0: Array1<f64>, budget: usize) -> Self {
        Self { l, budget, x: x0, awaiting: false, round: 0 }
    }
}

impl QueryEngine for GdEngine {
    fn next_query(&mut self) -> Result<Array1<f64>, MethodError> {
        if self.awaiting {
            return Err(MethodError::Protocol("query before observing".into()));
        }
        self.awaiting = true;
        Ok(self.x.clone())
    }

    fn observe(&mut self, _f: f64, g: &Array1<f64>) -> Result<(), MethodError> {
        if !self.awaiting {
            return Err(MethodError::Protocol("observation without a query".into()));
        }
        self.awaiting = false;
        self.x = &self.x - &(g / self.l);
        self.round += 1;
        Ok(())
    }

    fn method(&self) -> MethodKind {
        MethodKind::Gd
    }

    fn record_info(&self) -> (f64, f64, StepStatus) {
        (f64::NAN, 1.0 / self.budget as f64, StepStatus::None)
    }
}

// ---------------------------------------------------------------------------
// Optimized gradient method

pub struct OgmEngine {
    l: f64,
    budget: usize,
    x0: Array1<f64>,
    round: usize,
    awaiting: bool,
    tau: f64,
    z: Array1<f64>,
    x: Array1<f64>,
    g_last: Option<Array1<f64>>,
    pending_delta: f64,
}

impl OgmEngine {
    pub fn new(l: f64, x0: Array1<f64>, budget: usize) -> Self {
        let z = x0.clone();
        let x = x0.clone();
        Self {
            l,
            budget,
            x0,
            round: 0,
            awaiting: false,
            tau: 2.0,
            z,
            x,
            g_last: None,
            pending_delta: 0.0,
        }
    }

    /// Resumes OGM bookkeeping over an already-observed prefix: replays the
    /// rate schedule and auxiliary-vector recursion on the prefix gradients.
    pub fn resume(l: f64, budget: usize, prefix: &[FirstOrderTriple]) -> Self {
        assert!(!prefix.is_empty());
        let x0 = prefix[0].x.clone();
        let mut engine = Self::new(l, x0, budget);
        for t in prefix {
            engine.next_query().expect("replay query");
            // replayed queries need not match OGM's own; only the
            // bookkeeping over the observed gradients is reconstructed
            engine.x = t.x.clone();
            engine.observe(t.f, &t.g).expect("replay observe");
        }
        engine
    }
}

impl QueryEngine for OgmEngine {
    fn next_query(&mut self) -> Result<Array1<f64>, MethodError> {
        if self.awaiting {
            return Err(MethodError::Protocol("query before observing".into()));
        }
        self.awaiting = true;
        if self.round == 0 {
            return Ok(self.x0.clone());
        }
        let g = self.g_last.as_ref().expect("gradient observed");
        let kind = IncrementKind::for_round(self.round, self.budget);
        let delta = delta_increment(self.tau, kind);
        let tau_next = self.tau + delta;
        let x_plus = &self.x - &(g / self.l);
        self.x = &(&x_plus * (self.tau / tau_next)) + &(&self.z * (delta / tau_next));
        self.pending_delta = delta;
        self.tau = tau_next;
        Ok(self.x.clone())
    }

    fn observe(&mut self, _f: f64, g: &Array1<f64>) -> Result<(), MethodError> {
        if !self.awaiting {
            return Err(MethodError::Protocol("observation without a query".into()));
        }
        self.awaiting = false;
        if self.round == 0 {
            self.z = &self.x0 - &(g * (2.0 / self.l));
        } else {
            self.z.scaled_add(-self.pending_delta / self.l, g);
        }
        self.g_last = Some(g.clone());
        self.round += 1;
        Ok(())
    }

    fn method(&self) -> MethodKind {
        MethodKind::Ogm
    }

    fn record_info(&self) -> (f64, f64, StepStatus) {
        let n = if self.awaiting { self.round } else { self.round.saturating_sub(1) };
        (self.tau, forecast_bound_inv(self.tau, n.min(self.budget), self.budget), StepStatus::None)
    }
}

// ---------------------------------------------------------------------------
// Subgame perfect gradient method (full and limited memory)

#[derive(Clone)]
struct PendingStep {
    z_half: Array1<f64>,
    delta: f64,
    tau_next: f64,
}

/// SPGM driver state. With `memory = Some(k)` the subproblem (and the
/// retained history) is restricted to the last `k` rounds.
#[derive(Clone)]
pub struct SpgmEngine {
    l: f64,
    x0: Array1<f64>,
    budget: usize,
    memory: Option<usize>,
    history: History,
    /// Global index of the first retained history entry.
    window_start: usize,
    /// Certified rates `tau_i` for retained indices.
    taus_window: Vec<f64>,
    /// All certified rates `tau_0..tau_n`.
    taus_all: Vec<f64>,
    /// Auxiliary vectors `z_{i+1}` for retained indices.
    zs_window: Vec<Array1<f64>>,
    bh: Vec<f64>,
    bq: Vec<f64>,
    gram: GramCache,
    round: usize,
    awaiting: bool,
    last_query: Array1<f64>,
    pending: Option<PendingStep>,
    early: Option<EarlyStop>,
    tau_current: f64,
    last_status: StepStatus,
    solve_opts: SolveOptions,
    /// Rounds where the solver value was clamped up to the running rate.
    pub clamp_events: usize,
}

impl SpgmEngine {
    pub fn new(l: f64, x0: Array1<f64>, budget: usize, memory: Option<usize>) -> Self {
        if let Some(k) = memory {
            assert!(k >= 1, "memory window must be at least 1");
        }
        let history = History::new(l).expect("positive smoothness");
        let gram = GramCache::new(x0.clone(), l);
        let last_query = x0.clone();
        Self {
            l,
            x0,
            budget,
            memory,
            history,
            window_start: 0,
            taus_window: Vec::new(),
            taus_all: Vec::new(),
            zs_window: Vec::new(),
            bh: Vec::new(),
            bq: Vec::new(),
            gram,
            round: 0,
            awaiting: false,
            last_query,
            pending: None,
            early: None,
            tau_current: 2.0,
            last_status: StepStatus::None,
            solve_opts: SolveOptions::default(),
            clamp_events: 0,
        }
    }

    pub fn with_solve_options(mut self, opts: SolveOptions) -> Self {
        self.solve_opts = opts;
        self
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn x0(&self) -> &Array1<f64> {
        &self.x0
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    /// Certified rates observed so far (`tau_0..tau_{round-1}`).
    pub fn taus(&self) -> &[f64] {
        &self.taus_all
    }

    /// Retained auxiliary vectors, aligned with the retained history.
    pub fn zs(&self) -> &[Array1<f64>] {
        &self.zs_window
    }

    pub fn early_stop(&self) -> Option<&EarlyStop> {
        self.early.as_ref()
    }

    fn argmin_plus(&self) -> usize {
        let mut best = 0;
        let mut best_val = f64::INFINITY;
        for i in 0..self.history.len() {
            let v = self.history.plus(i).f_plus;
            if v < best_val {
                best_val = v;
                best = i;
            }
        }
        best
    }

    /// Assembles (from the incremental Gram state) and solves the subproblem
    /// for the upcoming round without mutating the engine.
    pub fn peek_subproblem(&self) -> Result<(SubproblemData, SubproblemSolution), MethodError> {
        if self.history.is_empty() {
            return Err(MethodError::Protocol("no observations to optimize over".into()));
        }
        let m = self.argmin_plus();
        let f_half = self.history.plus(m).f_plus;
        let data = self.gram.data(&self.taus_window, &self.bh, &self.bq, f_half);
        // the unit weight on the newest index is always feasible
        let s = data.block;
        let mut e_last = Array1::<f64>::zeros(2 * s);
        e_last[s - 1] = 1.0;
        let feas = data.constraint_value(&e_last);
        assert!(
            feas <= 1e-7 * data.scale(),
            "newest-index feasibility violated: {feas:e}"
        );
        let sol = subqp::solve(&data, &self.solve_opts);
        Ok((data, sol))
    }
}

impl QueryEngine for SpgmEngine {
    fn next_query(&mut self) -> Result<Array1<f64>, MethodError> {
        if self.awaiting {
            return Err(MethodError::Protocol("query before observing".into()));
        }
        self.awaiting = true;
        if let Some(stop) = &self.early {
            self.last_status = StepStatus::Padded;
            self.last_query = stop.output.clone();
            return Ok(stop.output.clone());
        }
        if self.round == 0 {
            self.last_status = StepStatus::None;
            return Ok(self.x0.clone());
        }

        let m = self.argmin_plus();
        let x_half_plus = self.history.plus(m).x_plus.clone();
        let (data, sol) = self.peek_subproblem()?;
        match sol.status {
            SubproblemStatus::Unbounded => {
                self.last_status = StepStatus::Unbounded;
                self.early = Some(EarlyStop { round: self.round, output: x_half_plus.clone() });
                self.last_query = x_half_plus.clone();
                Ok(x_half_plus)
            }
            SubproblemStatus::InfeasibleNumerical => Err(MethodError::SubproblemFailure {
                round: self.round,
                primal: sol.diagnostics.primal_residual,
                dual: sol.diagnostics.dual_residual,
                gap: sol.diagnostics.gap,
            }),
            SubproblemStatus::Optimal => {
                let tau_prev = *self.taus_window.last().expect("nonempty window");
                let (tau_half, z_half, status) = if sol.tau < tau_prev {
                    // the unit weight on the newest index certifies tau_prev
                    log::warn!(
                        "round {}: solver value {:.12e} below running rate {:.12e}; clamping",
                        self.round,
                        sol.tau,
                        tau_prev
                    );
                    self.clamp_events += 1;
                    (tau_prev, self.zs_window.last().expect("nonempty").clone(), StepStatus::Clamped)
                } else {
                    (sol.tau, data.z_vector(&sol.mu, &sol.lambda_star), StepStatus::Optimal)
                };
                let kind = IncrementKind::for_round(self.round, self.budget);
                let delta = delta_increment(tau_half, kind);
                let tau_next = tau_half + delta;
                debug_assert!(
                    ((tau_half / tau_next + delta / tau_next) - 1.0).abs() <= 1e-12,
                    "step coefficients must form a convex combination"
                );
                debug_assert!(
                    ((1.0 - tau_half / tau_next) - delta / tau_next).abs() <= 1e-12,
                    "the two step-coefficient forms must agree"
                );
                let x = &(&x_half_plus * (tau_half / tau_next))
                    + &(&z_half * (delta / tau_next));
                self.pending = Some(PendingStep { z_half, delta, tau_next });
                self.tau_current = tau_next;
                self.last_status = status;
                self.last_query = x.clone();
                Ok(x)
            }
        }
    }

    fn observe(&mut self, f: f64, g: &Array1<f64>) -> Result<(), MethodError> {
        if !self.awaiting {
            return Err(MethodError::Protocol("observation without a query".into()));
        }
        self.awaiting = false;
        if self.early.is_some() {
            return Ok(());
        }
        if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(MethodError::OracleFailure(self.round));
        }
        let triple = FirstOrderTriple::new(self.last_query.clone(), f, g.clone())?;
        let (z_next, tau) = if self.round == 0 {
            (&self.x0 - &(g * (2.0 / self.l)), 2.0)
        } else {
            let pending = self.pending.take().expect("pending step");
            let z_next = &pending.z_half - &(g * (pending.delta / self.l));
            (z_next, pending.tau_next)
        };
        self.history.push(triple)?;
        let idx = self.history.len() - 1;
        let plus = self.history.plus(idx);
        let t = self.history.triple(idx);
        self.bh.push(
            tau * plus.f_plus - 0.5 * self.l * self.x0.dot(&self.x0)
                + 0.5 * self.l * z_next.dot(&z_next),
        );
        self.bq.push(plus.f_plus - t.g.dot(&plus.x_plus));
        self.gram.push(&z_next, g);
        self.zs_window.push(z_next);
        self.taus_window.push(tau);
        self.taus_all.push(tau);
        self.tau_current = tau;
        self.round += 1;
        if let Some(k) = self.memory {
            while self.history.len() > k {
                self.history.pop_front();
                self.gram.pop_front();
                self.zs_window.remove(0);
                self.taus_window.remove(0);
                self.bh.remove(0);
                self.bq.remove(0);
                self.window_start += 1;
            }
        }
        Ok(())
    }

    fn method(&self) -> MethodKind {
        match self.memory {
            None => MethodKind::Spgm,
            Some(k) => MethodKind::KSpgm(k),
        }
    }

    fn record_info(&self) -> (f64, f64, StepStatus) {
        let n = if self.early.is_some() {
            self.early.as_ref().map(|e| e.round).unwrap_or(self.round)
        } else if self.awaiting {
            self.round
        } else {
            self.round.saturating_sub(1)
        };
        (
            self.tau_current,
            forecast_bound_inv(self.tau_current, n.min(self.budget), self.budget),
            self.last_status,
        )
    }
}

// ---------------------------------------------------------------------------
// Run drivers

fn drive(
    engine: &mut dyn QueryEngine,
    oracle: &dyn Oracle,
    x0: &Array1<f64>,
    budget: usize,
) -> Result<RunTrace, MethodError> {
    let l = oracle.smoothness();
    let mut records = Vec::with_capacity(budget + 1);
    let mut iterates = Vec::with_capacity(budget + 1);
    let mut taus = Vec::new();
    let mut early_stop = None;
    for round in 0..=budget {
        let start = std::time::Instant::now();
        let x = engine.next_query()?;
        let (f, g) = oracle.eval(&x);
        if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(MethodError::OracleFailure(round));
        }
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        let (tau, bound_inv, status) = engine.record_info();
        if status == StepStatus::Unbounded && early_stop.is_none() {
            early_stop = Some(EarlyStop { round, output: x.clone() });
        }
        records.push(IterationRecord {
            n: round,
            f,
            grad_norm: linalg::norm2(g.view()),
            tau,
            bound_inv,
            status,
            wall_ms,
        });
        if tau.is_finite() && status != StepStatus::Padded && status != StepStatus::Unbounded {
            taus.push(tau);
        }
        iterates.push(x.clone());
        engine.observe(f, &g)?;
    }
    let output = iterates.last().expect("at least one round").clone();
    Ok(RunTrace {
        method: engine.method(),
        l,
        x0: x0.clone(),
        budget,
        records,
        iterates,
        taus,
        early_stop,
        output,
    })
}

/// Constant-step gradient descent for `budget` steps.
pub fn run_gd(oracle: &dyn Oracle, x0: &Array1<f64>, budget: usize) -> Result<RunTrace, MethodError> {
    assert!(budget >= 1);
    let mut engine = GdEngine::new(oracle.smoothness(), x0.clone(), budget);
    drive(&mut engine, oracle, x0, budget)
}

/// OGM with the closing increment applied exactly once, at the final round.
pub fn run_ogm(oracle: &dyn Oracle, x0: &Array1<f64>, budget: usize) -> Result<RunTrace, MethodError> {
    assert!(budget >= 1);
    let mut engine = OgmEngine::new(oracle.smoothness(), x0.clone(), budget);
    drive(&mut engine, oracle, x0, budget)
}

/// Full-memory SPGM.
pub fn run_spgm(
    oracle: &dyn Oracle,
    x0: &Array1<f64>,
    budget: usize,
) -> Result<RunTrace, MethodError> {
    assert!(budget >= 1);
    let mut engine = SpgmEngine::new(oracle.smoothness(), x0.clone(), budget, None);
    drive(&mut engine, oracle, x0, budget)
}

/// SPGM with the subproblem restricted to the last `k` rounds.
pub fn run_k_spgm(
    oracle: &dyn Oracle,
    x0: &Array1<f64>,
    budget: usize,
    k: usize,
) -> Result<RunTrace, MethodError> {
    assert!(budget >= 1 && k >= 1);
    let mut engine = SpgmEngine::new(oracle.smoothness(), x0.clone(), budget, Some(k));
    drive(&mut engine, oracle, x0, budget)
}

/// Drives an already-constructed engine for its remaining rounds against
/// `oracle`, returning all iterates it queries (rounds `start..=budget`).
pub fn drive_engine_to_budget(
    engine: &mut SpgmEngine,
    oracle: &dyn Oracle,
) -> Result<Vec<Array1<f64>>, MethodError> {
    let budget = engine.budget();
    let mut iterates = Vec::new();
    while engine.round() <= budget {
        let at_budget = engine.round() == budget;
        let x = engine.next_query()?;
        let (f, g) = oracle.eval(&x);
        engine.observe(f, &g)?;
        iterates.push(x);
        if at_budget {
            break;
        }
    }
    Ok(iterates)
}

/// Continues constant-step gradient descent from an observed prefix: the
/// first new iterate steps from the last prefix point using its recorded
/// gradient, and subsequent steps query `oracle`.
pub fn continue_gd(
    prefix: &[FirstOrderTriple],
    l: f64,
    oracle: &dyn Oracle,
    budget: usize,
) -> Vec<Array1<f64>> {
    let n = prefix.len();
    assert!(n >= 1 && n <= budget);
    let last = &prefix[n - 1];
    let mut x = &last.x - &(&last.g / l);
    let mut out = Vec::with_capacity(budget - n + 1);
    for round in n..=budget {
        out.push(x.clone());
        if round < budget {
            let (_, g) = oracle.eval(&x);
            x = &x - &(&g / l);
        }
    }
    out
}

/// Continues OGM from an observed prefix by replaying its rate schedule and
/// auxiliary-vector recursion over the prefix gradients, then stepping
/// normally against `oracle`. All produced iterates stay in the span of the
/// observed gradients.
pub fn continue_ogm(
    prefix: &[FirstOrderTriple],
    l: f64,
    oracle: &dyn Oracle,
    budget: usize,
) -> Vec<Array1<f64>> {
    let n = prefix.len();
    assert!(n >= 1 && n <= budget);
    let mut engine = OgmEngine::resume(l, budget, prefix);
    let mut out = Vec::with_capacity(budget - n + 1);
    for round in n..=budget {
        let x = engine.next_query().expect("continuation query");
        out.push(x.clone());
        let (f, g) = oracle.eval(&x);
        engine.observe(f, &g).expect("continuation observe");
        let _ = round;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn quadratic_oracle(l: f64) -> FnOracle<impl Fn(&Array1<f64>) -> (f64, Array1<f64>)> {
        FnOracle {
            f: move |x: &Array1<f64>| (0.5 * l * x[0] * x[0], array![l * x[0]]),
            dim: 1,
            l,
        }
    }

    #[test]
    fn delta_examples() {
        assert!((delta_increment(2.0, IncrementKind::Standard) - (1.0 + 5.0f64.sqrt())).abs() < 1e-15);
        assert_eq!(delta_increment(2.0, IncrementKind::Final), 2.0);
        assert!((delta_increment(1e-14, IncrementKind::Final) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn delta_is_strictly_increasing() {
        let mut prev_std = 0.0;
        let mut prev_fin = 0.0;
        for i in 1..100 {
            let tau = 0.1 * i as f64;
            let d_std = delta_increment(tau, IncrementKind::Standard);
            let d_fin = delta_increment(tau, IncrementKind::Final);
            assert!(d_std > prev_std && d_fin > prev_fin);
            prev_std = d_std;
            prev_fin = d_fin;
        }
    }

    #[test]
    fn forecast_examples() {
        let f = tau_forecast(2.0, 0, 1);
        assert_eq!(f, vec![2.0, 4.0]);

        let f = tau_forecast(2.0, 0, 2);
        assert!((f[1] - (3.0 + 5.0f64.sqrt())).abs() < 1e-12);
        let expected_last = f[1] + delta_increment(f[1], IncrementKind::Final);
        assert!((f[2] - expected_last).abs() < 1e-12);
    }

    #[test]
    fn forecast_grows_like_half_n_squared() {
        let n = 500usize;
        let f = tau_forecast(2.0, 0, n);
        let ratio = f[n] * 2.0 / (n as f64 * n as f64);
        assert!((1.0..=1.2).contains(&ratio), "ratio = {ratio}");
    }

    #[test]
    fn gd_exact_on_matched_quadratic() {
        let oracle = quadratic_oracle(1.0);
        let trace = run_gd(&oracle, &array![1.0], 3).unwrap();
        assert_eq!(trace.iterates[1][0], 0.0);
        // descent property
        for w in trace.records.windows(2) {
            assert!(w[1].f <= w[0].f + 1e-15);
        }
    }

    #[test]
    fn gd_geometric_on_overestimated_smoothness() {
        // true curvature 1, declared 2: iterates halve each step
        let oracle = FnOracle {
            f: |x: &Array1<f64>| (0.5 * x[0] * x[0], array![x[0]]),
            dim: 1,
            l: 2.0,
        };
        let trace = run_gd(&oracle, &array![1.0], 4).unwrap();
        for (n, x) in trace.iterates.iter().enumerate() {
            assert!((x[0] - 0.5f64.powi(n as i32)).abs() < 1e-15);
        }
    }

    #[test]
    fn ogm_anytime_trajectory_matches_published_values() {
        // first five iterates of the standard-branch recurrence
        let oracle = quadratic_oracle(1.0);
        let trace = run_ogm(&oracle, &array![1.0], 5).unwrap();
        let expected = [
            1.0,
            -0.6180339887498949,
            0.45588678010286676,
            -0.3636639571190878,
            0.30350121938992136,
        ];
        for (n, want) in expected.iter().enumerate() {
            assert!(
                (trace.iterates[n][0] - want).abs() < 1e-9,
                "x_{n} = {} want {want}",
                trace.iterates[n][0]
            );
        }
    }

    #[test]
    fn ogm_single_step_guarantee() {
        let oracle = quadratic_oracle(1.0);
        let trace = run_ogm(&oracle, &array![1.0], 1).unwrap();
        assert!((trace.records[1].bound_inv - 0.25).abs() < 1e-12);
        // worst-case equality on the quadratic
        let achieved = trace.final_f() / 0.5;
        assert!((achieved - 0.25).abs() < 1e-9);
    }

    #[test]
    fn ogm_fixed_point_at_optimum() {
        let oracle = quadratic_oracle(1.0);
        let trace = run_ogm(&oracle, &array![0.0], 4).unwrap();
        for x in &trace.iterates {
            assert_eq!(x[0], 0.0);
        }
    }

    #[test]
    fn ogm_worst_case_equality_on_quadratic() {
        let oracle = quadratic_oracle(1.0);
        for n in [4usize, 10, 25] {
            let trace = run_ogm(&oracle, &array![1.0], n).unwrap();
            let achieved = trace.final_f() / 0.5;
            let bound = trace.records.last().unwrap().bound_inv;
            assert!(
                (achieved - bound).abs() <= 1e-6 * bound,
                "N = {n}: achieved {achieved} vs bound {bound}"
            );
        }
    }

    #[test]
    fn spgm_first_step_matches_ogm_then_detects_minimizer() {
        let oracle = quadratic_oracle(1.0);
        let trace = run_spgm(&oracle, &array![1.0], 4).unwrap();
        assert!((trace.iterates[1][0] + 0.6180339887498949).abs() < 1e-9);
        let stop = trace.early_stop.as_ref().expect("early termination");
        assert_eq!(stop.round, 2);
        assert!(stop.output[0].abs() < 1e-9);
        // padded trace stays rectangular
        assert_eq!(trace.records.len(), 5);
        assert_eq!(trace.records[2].status, StepStatus::Unbounded);
        assert_eq!(trace.records[3].status, StepStatus::Padded);
        assert!(trace.output[0].abs() < 1e-9);
    }

    #[test]
    fn spgm_rate_chain_is_monotone() {
        // a 2-d least-squares-like oracle keeps the subproblem bounded longer
        let oracle = FnOracle {
            f: |x: &Array1<f64>| {
                let f = 0.5 * (2.0 * x[0] * x[0] + x[1] * x[1]) + 0.3 * x[0] * x[1];
                (f, array![2.0 * x[0] + 0.3 * x[1], x[1] + 0.3 * x[0]])
            },
            dim: 2,
            l: 2.5,
        };
        let trace = run_spgm(&oracle, &array![1.0, -2.0], 8).unwrap();
        for w in trace.taus.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "taus not monotone: {:?}", trace.taus);
        }
        // forecast chain tau_{0,N} <= tau_{1,N} <= ...
        let budget = trace.budget;
        let bounds: Vec<f64> = trace
            .taus
            .iter()
            .enumerate()
            .map(|(n, &tau)| *tau_forecast(tau, n, budget).last().unwrap())
            .collect();
        for w in bounds.windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }
    }

    #[test]
    fn k_spgm_with_large_window_matches_full() {
        let oracle = FnOracle {
            f: |x: &Array1<f64>| {
                let f = 0.5 * (2.0 * x[0] * x[0] + x[1] * x[1]) + 0.3 * x[0] * x[1];
                (f, array![2.0 * x[0] + 0.3 * x[1], x[1] + 0.3 * x[0]])
            },
            dim: 2,
            l: 2.5,
        };
        let x0 = array![1.0, -2.0];
        let full = run_spgm(&oracle, &x0, 6).unwrap();
        let windowed = run_k_spgm(&oracle, &x0, 6, 10).unwrap();
        for (a, b) in full.iterates.iter().zip(&windowed.iterates) {
            let d = a - b;
            assert!(linalg::norm2(d.view()) <= 1e-8);
        }
    }

    #[test]
    fn iterates_stay_in_gradient_span() {
        let oracle = FnOracle {
            f: |x: &Array1<f64>| {
                let r = array![x[0] + 0.5 * x[1], x[1] - 0.25 * x[2], x[2]];
                let f = 0.5 * r.dot(&r);
                let g = array![r[0], 0.5 * r[0] + r[1], -0.25 * r[1] + r[2]];
                (f, g)
            },
            dim: 3,
            l: 2.0,
        };
        let x0 = array![1.0, 1.0, 1.0];
        for trace in [
            run_gd(&oracle, &x0, 5).unwrap(),
            run_ogm(&oracle, &x0, 5).unwrap(),
            run_spgm(&oracle, &x0, 5).unwrap(),
        ] {
            let mut basis: Vec<Array1<f64>> = Vec::new();
            for (n, x) in trace.iterates.iter().enumerate() {
                let diff = x - &x0;
                let resid = linalg::residual_outside_span(&diff, &basis);
                let scale = 1.0f64.max(linalg::norm2(diff.view()));
                assert!(resid <= 1e-8 * scale, "round {n} leaves the gradient span");
                let (_, g) = oracle.eval(x);
                if let Some(q) = linalg::orthogonal_residual(&g, &basis, 1e-12) {
                    basis.push(q);
                }
            }
        }
    }
}
