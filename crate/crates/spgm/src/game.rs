//! The sequential minimization game: Alice (a first-order method) queries
//! points, Bob (the oracle) answers with values and gradients, and after the
//! final round Bob names a minimizer. Alice must keep her queries inside the
//! span of the gradients she has seen; Bob must keep the growing triple set
//! interpolable. Alice's payoff is the reciprocal normalized suboptimality
//! of her final query.

use ndarray::Array1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::first_order::{data_scale, FirstOrderTriple};
use crate::hardgen::{self, HardGenError, HardInstance};
use crate::linalg;
use crate::methods::{
    GdEngine, MethodError, OgmEngine, Oracle, QueryEngine, SpgmEngine,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Player {
    Alice,
    Bob,
}

impl std::fmt::Display for Player {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Player::Alice => f.write_str("Alice"),
            Player::Bob => f.write_str("Bob"),
        }
    }
}

#[derive(Debug, Error)]
pub enum GameError {
    #[error("{player} forfeits at round {round}: {reason}")]
    Forfeit { player: Player, round: usize, reason: String },
    #[error("strategy failure: {0}")]
    Strategy(String),
    #[error(transparent)]
    Method(#[from] MethodError),
    #[error(transparent)]
    HardGen(#[from] HardGenError),
}

#[derive(Debug, Clone)]
pub struct GameConfig {
    pub l: f64,
    pub d: usize,
    /// Number of method rounds; the game plays rounds `0..=budget`.
    pub budget: usize,
    pub x0: Array1<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Round {
    pub query: Array1<f64>,
    pub f: f64,
    pub g: Array1<f64>,
}

/// Complete record of one game, replay-checkable on its own.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Transcript {
    pub l: f64,
    pub d: usize,
    pub budget: usize,
    pub rounds: Vec<Round>,
    pub star_x: Array1<f64>,
    pub star_f: f64,
}

impl Transcript {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("transcript serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Alice's payoff. An infinite payoff (denominator at or below zero) is kept
/// as a flag plus the achieved denominator rather than a floating infinity.
#[derive(Debug, Clone, Copy)]
pub struct Payoff {
    pub value: f64,
    pub infinite: bool,
    pub denominator: f64,
}

pub trait AliceStrategy {
    fn query(&mut self, round: usize) -> Result<Array1<f64>, GameError>;
    fn observe(&mut self, f: f64, g: &Array1<f64>) -> Result<(), GameError>;
}

pub trait BobStrategy {
    fn respond(&mut self, round: usize, query: &Array1<f64>)
        -> Result<(f64, Array1<f64>), GameError>;
    fn declare_star(&mut self) -> Result<(Array1<f64>, f64), GameError>;
}

/// Adapts any query engine into an Alice strategy.
pub struct EngineAlice<E: QueryEngine>(pub E);

impl EngineAlice<GdEngine> {
    pub fn gd(l: f64, x0: Array1<f64>, budget: usize) -> Self {
        EngineAlice(GdEngine::new(l, x0, budget))
    }
}

impl EngineAlice<OgmEngine> {
    pub fn ogm(l: f64, x0: Array1<f64>, budget: usize) -> Self {
        EngineAlice(OgmEngine::new(l, x0, budget))
    }
}

impl EngineAlice<SpgmEngine> {
    pub fn spgm(l: f64, x0: Array1<f64>, budget: usize, memory: Option<usize>) -> Self {
        EngineAlice(SpgmEngine::new(l, x0, budget, memory))
    }
}

impl<E: QueryEngine> AliceStrategy for EngineAlice<E> {
    fn query(&mut self, _round: usize) -> Result<Array1<f64>, GameError> {
        Ok(self.0.next_query()?)
    }
    fn observe(&mut self, f: f64, g: &Array1<f64>) -> Result<(), GameError> {
        Ok(self.0.observe(f, g)?)
    }
}

/// Bob backed by a fixed oracle and a known minimizer declaration.
pub struct FunctionBob<'a> {
    oracle: &'a dyn Oracle,
    star_x: Array1<f64>,
    star_f: f64,
    budget: usize,
    responded: usize,
}

impl<'a> FunctionBob<'a> {
    pub fn new(oracle: &'a dyn Oracle, star_x: Array1<f64>, star_f: f64, budget: usize) -> Self {
        Self { oracle, star_x, star_f, budget, responded: 0 }
    }

    /// Wraps a hard instance, declaring its built-in minimizer.
    pub fn from_hard(inst: &'a HardInstance) -> Self {
        Self::new(inst, inst.x_star.clone(), inst.f_star, inst.budget)
    }
}

impl BobStrategy for FunctionBob<'_> {
    fn respond(
        &mut self,
        round: usize,
        query: &Array1<f64>,
    ) -> Result<(f64, Array1<f64>), GameError> {
        if round > self.budget {
            return Err(GameError::Strategy(format!(
                "oracle budgeted for {} rounds asked to respond at round {round}",
                self.budget + 1
            )));
        }
        self.responded += 1;
        Ok(self.oracle.eval(query))
    }

    fn declare_star(&mut self) -> Result<(Array1<f64>, f64), GameError> {
        if self.responded != self.budget + 1 {
            return Err(GameError::Strategy(format!(
                "minimizer declared after {} of {} rounds",
                self.responded,
                self.budget + 1
            )));
        }
        Ok((self.star_x.clone(), self.star_f))
    }
}

/// Bob that answers honestly from a problem oracle until the switch round,
/// then replaces the remaining game with the adversarial construction built
/// from the method state implied by the transcript so far.
///
/// The construction consumes the switch-round subproblem solution, so this
/// strategy requires Alice to be (full-memory) SPGM: a shadow engine replays
/// her computation and rejects any query that deviates.
pub struct AdversaryBob<'a> {
    problem: &'a dyn Oracle,
    switch_round: usize,
    seed: u64,
    shadow: SpgmEngine,
    instance: Option<HardInstance>,
}

impl<'a> AdversaryBob<'a> {
    pub fn new(
        problem: &'a dyn Oracle,
        x0: Array1<f64>,
        budget: usize,
        switch_round: usize,
        seed: u64,
    ) -> Self {
        assert!(switch_round >= 1 && switch_round <= budget);
        let shadow = SpgmEngine::new(problem.smoothness(), x0, budget, None);
        Self { problem, switch_round, seed, shadow, instance: None }
    }

    pub fn instance(&self) -> Option<&HardInstance> {
        self.instance.as_ref()
    }

    fn build_instance(&mut self) -> Result<(), GameError> {
        let inst = hardgen::build_from_engine(&self.shadow, self.seed)?;
        self.instance = Some(inst);
        Ok(())
    }
}

impl BobStrategy for AdversaryBob<'_> {
    fn respond(
        &mut self,
        round: usize,
        query: &Array1<f64>,
    ) -> Result<(f64, Array1<f64>), GameError> {
        if round < self.switch_round {
            let expected = self.shadow.next_query()?;
            let diff = query - &expected;
            let tol = 1e-7 * (1.0 + linalg::norm2(expected.view()));
            if linalg::norm2(diff.view()) > tol {
                return Err(GameError::Strategy(format!(
                    "adversary requires an SPGM opponent; query at round {round} deviates by {:e}",
                    linalg::norm2(diff.view())
                )));
            }
            let (f, g) = self.problem.eval(query);
            self.shadow.observe(f, &g)?;
            return Ok((f, g));
        }
        if self.instance.is_none() {
            self.build_instance()?;
        }
        let inst = self.instance.as_ref().expect("instance built");
        Ok(inst.eval(query))
    }

    fn declare_star(&mut self) -> Result<(Array1<f64>, f64), GameError> {
        let inst = self
            .instance
            .as_ref()
            .ok_or_else(|| GameError::Strategy("game ended before the switch round".into()))?;
        Ok((inst.x_star.clone(), inst.f_star))
    }
}

/// Runs the full game, validating both players' moves each round, and
/// computes Alice's payoff from the final query and Bob's declaration.
pub fn play(
    alice: &mut dyn AliceStrategy,
    bob: &mut dyn BobStrategy,
    cfg: &GameConfig,
) -> Result<(Transcript, Payoff), GameError> {
    assert_eq!(cfg.x0.len(), cfg.d);
    let mut rounds: Vec<Round> = Vec::with_capacity(cfg.budget + 1);
    let mut triples: Vec<FirstOrderTriple> = Vec::new();
    let mut basis: Vec<Array1<f64>> = Vec::new();

    for round in 0..=cfg.budget {
        let query = alice.query(round)?;
        validate_query(&query, &cfg.x0, &basis, round)?;
        let (f, g) = bob.respond(round, &query)?;
        let triple = FirstOrderTriple::new(query.clone(), f, g.clone()).map_err(|e| {
            GameError::Forfeit { player: Player::Bob, round, reason: e.to_string() }
        })?;
        validate_response(&triples, &triple, cfg.l, round)?;
        triples.push(triple);
        alice.observe(f, &g)?;
        if let Some(q) = linalg::orthogonal_residual(&g, &basis, 1e-12) {
            basis.push(q);
        }
        rounds.push(Round { query, f, g });
    }

    let (star_x, star_f) = bob.declare_star()?;
    let star = FirstOrderTriple::new(star_x.clone(), star_f, Array1::zeros(cfg.d))
        .map_err(|e| GameError::Forfeit {
            player: Player::Bob,
            round: cfg.budget,
            reason: e.to_string(),
        })?;
    validate_response(&triples, &star, cfg.l, cfg.budget)?;

    let transcript = Transcript {
        l: cfg.l,
        d: cfg.d,
        budget: cfg.budget,
        rounds,
        star_x: star_x.clone(),
        star_f,
    };
    let payoff = compute_payoff(&transcript);
    Ok((transcript, payoff))
}

fn compute_payoff(t: &Transcript) -> Payoff {
    let f_last = t.rounds.last().expect("at least one round").f;
    let denominator = f_last - t.star_f;
    let diff = &t.rounds[0].query - &t.star_x;
    let numerator = 0.5 * t.l * diff.dot(&diff);
    if denominator <= 0.0 {
        Payoff { value: f64::INFINITY, infinite: true, denominator }
    } else {
        Payoff { value: numerator / denominator, infinite: false, denominator }
    }
}

fn validate_query(
    query: &Array1<f64>,
    x0: &Array1<f64>,
    basis: &[Array1<f64>],
    round: usize,
) -> Result<(), GameError> {
    if round == 0 {
        let diff = query - x0;
        if linalg::norm2(diff.view()) > 1e-12 * (1.0 + linalg::norm2(x0.view())) {
            return Err(GameError::Forfeit {
                player: Player::Alice,
                round,
                reason: "round-zero query must be the starting point".into(),
            });
        }
        return Ok(());
    }
    let diff = query - x0;
    let residual = linalg::residual_outside_span(&diff, basis);
    let scale = 1.0f64.max(linalg::norm2(diff.view()));
    if residual > 1e-8 * scale {
        return Err(GameError::Forfeit {
            player: Player::Alice,
            round,
            reason: format!("query leaves the observed gradient span (residual {residual:e})"),
        });
    }
    Ok(())
}

fn validate_response(
    existing: &[FirstOrderTriple],
    new: &FirstOrderTriple,
    l: f64,
    round: usize,
) -> Result<(), GameError> {
    let mut scale = data_scale(existing, l);
    scale = scale
        .max(new.f.abs())
        .max(new.g.dot(&new.g))
        .max(l * new.x.dot(&new.x));
    let tol = 1e-9 * scale;
    for (i, old) in existing.iter().enumerate() {
        let q_new_old = crate::first_order::coupling_q(new, old, l);
        let q_old_new = crate::first_order::coupling_q(old, new, l);
        if q_new_old < -tol || q_old_new < -tol {
            return Err(GameError::Forfeit {
                player: Player::Bob,
                round,
                reason: format!(
                    "response breaks interpolability against round {i} (Q = {:e})",
                    q_new_old.min(q_old_new)
                ),
            });
        }
    }
    Ok(())
}

/// Re-validates a finished transcript from the record alone: the span
/// condition for every query, interpolability after every response, and the
/// star declaration.
pub fn validate_transcript(t: &Transcript) -> Result<(), GameError> {
    let x0 = &t.rounds[0].query;
    let mut triples: Vec<FirstOrderTriple> = Vec::new();
    let mut basis: Vec<Array1<f64>> = Vec::new();
    for (round, r) in t.rounds.iter().enumerate() {
        validate_query(&r.query, x0, &basis, round)?;
        let triple = FirstOrderTriple::new(r.query.clone(), r.f, r.g.clone()).map_err(|e| {
            GameError::Forfeit { player: Player::Bob, round, reason: e.to_string() }
        })?;
        validate_response(&triples, &triple, t.l, round)?;
        triples.push(triple);
        if let Some(q) = linalg::orthogonal_residual(&r.g, &basis, 1e-12) {
            basis.push(q);
        }
    }
    let star = FirstOrderTriple::new(t.star_x.clone(), t.star_f, Array1::zeros(t.d))
        .map_err(|e| GameError::Forfeit {
            player: Player::Bob,
            round: t.budget,
            reason: e.to_string(),
        })?;
    validate_response(&triples, &star, t.l, t.budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::methods::tau_forecast;
    use crate::problems::{gen_random, reference_optimum, Family, ProblemInstance};
    use ndarray::{array, Array1};

    fn embedded_quadratic(d: usize) -> ProblemInstance {
        // f(x) = x_1^2 / 2 embedded in R^d
        let mut a = ndarray::Array2::<f64>::zeros((1, d));
        a[(0, 0)] = 1.0;
        let mut x0 = Array1::<f64>::zeros(d);
        x0[0] = 1.0;
        ProblemInstance {
            family: Family::LsPlain,
            a,
            b: Array1::zeros(1),
            l: 1.0,
            x0,
            seed: 0,
        }
    }

    #[test]
    fn ogm_against_the_quadratic_attains_the_static_payoff() {
        let p = ProblemInstance::quadratic_1d(1.0, 1.0);
        let cfg = GameConfig { l: 1.0, d: 1, budget: 4, x0: array![1.0] };
        let mut alice = EngineAlice::ogm(1.0, cfg.x0.clone(), 4);
        let mut bob = FunctionBob::new(&p, array![0.0], 0.0, 4);
        let (transcript, payoff) = play(&mut alice, &mut bob, &cfg).unwrap();
        let tau_final = *tau_forecast(2.0, 0, 4).last().unwrap();
        assert!(!payoff.infinite);
        assert!(
            (payoff.value - tau_final).abs() <= 1e-6 * tau_final,
            "payoff {} vs {}",
            payoff.value,
            tau_final
        );
        validate_transcript(&transcript).unwrap();
    }

    #[test]
    fn spgm_against_the_quadratic_earns_an_infinite_payoff() {
        let p = ProblemInstance::quadratic_1d(1.0, 1.0);
        let cfg = GameConfig { l: 1.0, d: 1, budget: 4, x0: array![1.0] };
        let mut alice = EngineAlice::spgm(1.0, cfg.x0.clone(), 4, None);
        let mut bob = FunctionBob::new(&p, array![0.0], 0.0, 4);
        let (transcript, payoff) = play(&mut alice, &mut bob, &cfg).unwrap();
        assert!(payoff.infinite);
        assert!(payoff.denominator <= 0.0);
        // the minimizer query repeats once found
        assert!(transcript.rounds[2].query[0].abs() < 1e-9);
        assert!(transcript.rounds[4].query[0].abs() < 1e-9);
    }

    #[test]
    fn gd_payoff_meets_the_classical_floor() {
        let p = gen_random(Family::LsL2, 4, 16, 3);
        let reference = reference_optimum(&p, 20);
        let budget = 20;
        let cfg = GameConfig { l: p.l, d: 4, budget, x0: p.x0.clone() };
        let mut alice = EngineAlice::gd(p.l, p.x0.clone(), budget);
        let mut bob = FunctionBob::new(&p, reference.x_star.clone(), reference.f_star, budget);
        let (_, payoff) = play(&mut alice, &mut bob, &cfg).unwrap();
        assert!(payoff.infinite || payoff.value >= budget as f64);
    }

    #[test]
    fn adversary_switch_pins_the_payoff_to_the_forecast() {
        let budget = 6;
        let d = budget + 2;
        let p = embedded_quadratic(d);
        let cfg = GameConfig { l: 1.0, d, budget, x0: p.x0.clone() };
        let mut alice = EngineAlice::spgm(1.0, p.x0.clone(), budget, None);
        let mut bob = AdversaryBob::new(&p, p.x0.clone(), budget, 1, 11);
        let (transcript, payoff) = play(&mut alice, &mut bob, &cfg).unwrap();
        validate_transcript(&transcript).unwrap();
        let inst = bob.instance().expect("instance built at the switch");
        let tau_final = inst.taus[inst.taus.len() - 1];
        assert!(!payoff.infinite);
        assert!(
            (payoff.value - tau_final).abs() <= 1e-5 * tau_final,
            "payoff {} vs tau {}",
            payoff.value,
            tau_final
        );
    }

    #[test]
    fn hard_instance_bob_replays_stored_triples() {
        let budget = 4;
        let d = budget + 2;
        let p = embedded_quadratic(d);
        let mut shadow = crate::methods::SpgmEngine::new(1.0, p.x0.clone(), budget, None);
        let x = shadow.next_query().unwrap();
        let (f, g) = crate::methods::Oracle::eval(&p, &x);
        shadow.observe(f, &g).unwrap();
        let (data, sol) = shadow.peek_subproblem().unwrap();
        let dual = crate::subqp::recover_dual(&sol, &data).unwrap();
        let inst = crate::hardgen::build_hard_instance(
            shadow.history(),
            crate::hardgen::SpgmRoundState {
                taus: shadow.taus(),
                tau_half: sol.tau,
                z_half: &sol.z,
                xi_star: dual.xi,
            },
            budget,
            5,
        )
        .unwrap();
        let mut bob = FunctionBob::from_hard(&inst);
        for i in 0..=budget {
            let (f, g) = bob.respond(i, &inst.xs[i]).unwrap();
            assert!((f - inst.fs[i]).abs() <= 1e-8 * inst.scale());
            let diff = &g - &inst.gs[i];
            assert!(linalg::norm2(diff.view()) <= 1e-8 * inst.scale().sqrt());
        }
        let (sx, sf) = bob.declare_star().unwrap();
        assert_eq!(sf, inst.f_star);
        assert_eq!(sx, inst.x_star);
    }

    #[test]
    fn round_count_mismatch_is_an_error() {
        let p = ProblemInstance::quadratic_1d(1.0, 1.0);
        let mut bob = FunctionBob::new(&p, array![0.0], 0.0, 2);
        for i in 0..=2 {
            bob.respond(i, &array![0.5]).unwrap();
        }
        assert!(bob.respond(3, &array![0.5]).is_err());

        let mut early = FunctionBob::new(&p, array![0.0], 0.0, 2);
        early.respond(0, &array![0.5]).unwrap();
        assert!(early.declare_star().is_err());
    }

    #[test]
    fn corrupted_transcripts_fail_validation() {
        let p = ProblemInstance::quadratic_1d(1.0, 1.0);
        let cfg = GameConfig { l: 1.0, d: 1, budget: 3, x0: array![1.0] };
        let mut alice = EngineAlice::ogm(1.0, cfg.x0.clone(), 3);
        let mut bob = FunctionBob::new(&p, array![0.0], 0.0, 3);
        let (transcript, _) = play(&mut alice, &mut bob, &cfg).unwrap();

        let mut bad_value = transcript.clone();
        bad_value.rounds[2].f -= 10.0;
        assert!(matches!(
            validate_transcript(&bad_value),
            Err(GameError::Forfeit { player: Player::Bob, .. })
        ));

        let mut bad_star = transcript.clone();
        bad_star.star_f = transcript.rounds[3].f + 1.0;
        assert!(validate_transcript(&bad_star).is_err());
    }

    #[test]
    fn transcript_serialization_round_trips() {
        let p = ProblemInstance::quadratic_1d(1.0, 1.0);
        let cfg = GameConfig { l: 1.0, d: 1, budget: 2, x0: array![1.0] };
        let mut alice = EngineAlice::gd(1.0, cfg.x0.clone(), 2);
        let mut bob = FunctionBob::new(&p, array![0.0], 0.0, 2);
        let (transcript, _) = play(&mut alice, &mut bob, &cfg).unwrap();
        let back = Transcript::from_json(&transcript.to_json()).unwrap();
        assert_eq!(back.rounds.len(), transcript.rounds.len());
        assert_eq!(back.star_f, transcript.star_f);
        validate_transcript(&back).unwrap();
    }
}
