//! The optimization loop: `theta_{n+1} = theta_n - a_n * g_n` under a
//! simulation budget, where `g_n` is a finite-difference estimate along the
//! iteration's perturbation direction.
//!
//! The loop is generic over the direction stream (either deterministic cycle
//! or the random Bernoulli generator) and the estimator (two measurements or
//! one per iteration). The budget counts objective evaluations, not
//! iterations: a two-sided run with budget 2000 performs exactly 1000 steps.
//!
//! Non-finite measurements or iterates mark the run diverged; the last
//! finite iterate is kept and returned.

use ndarray::{Array1, ArrayView1};

use crate::error::RdkwError;
use crate::estimate::{one_sided_estimate, two_sided_estimate, EstimatorKind, Measurement};
use crate::objectives::NoisyObjective;
use crate::perturb::{
    build_circulant_cycle, build_hadamard_cycle, BernoulliGenerator, CirculantSpec,
    PerturbationCycle,
};
use crate::schedule::StepSchedule;

/// Where the perturbation directions come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbationSource {
    /// Minimal deterministic cycle of length p + 1.
    Circulant,
    /// Deterministic cycle from Sylvester matrix rows, length next power of two.
    Hadamard,
    /// Independent random +/-1 components, seeded.
    Bernoulli { seed: u64 },
}

/// Everything a run needs besides the objective.
#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    pub dimension: usize,
    pub estimator: EstimatorKind,
    pub source: PerturbationSource,
    pub schedule: StepSchedule,
    /// Total objective evaluations allowed.
    pub simulation_budget: u64,
    pub theta0: Array1<f64>,
    /// Record `(n, theta_n)` snapshots; off by default to save memory.
    pub record_trajectory: bool,
}

/// Mutable state of one run.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    theta: Array1<f64>,
    iteration: u64,
    simulations_used: u64,
    budget: u64,
    diverged: bool,
    trajectory: Option<Vec<(u64, Array1<f64>)>>,
}

/// What a finished run reports.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub theta_end: Array1<f64>,
    pub iterations: u64,
    pub simulations_used: u64,
    pub diverged: bool,
    pub trajectory: Option<Vec<(u64, Array1<f64>)>>,
}

enum DirectionStream {
    Cycle(PerturbationCycle),
    Random(Box<BernoulliGenerator>),
}

impl DirectionStream {
    fn new(source: PerturbationSource, dimension: usize) -> Result<Self, RdkwError> {
        Ok(match source {
            PerturbationSource::Circulant => {
                Self::Cycle(build_circulant_cycle(&CirculantSpec { dimension })?)
            }
            PerturbationSource::Hadamard => Self::Cycle(build_hadamard_cycle(dimension)?),
            PerturbationSource::Bernoulli { seed } => {
                Self::Random(Box::new(BernoulliGenerator::new(dimension, seed)?))
            }
        })
    }

    fn next_direction(&mut self) -> Array1<f64> {
        match self {
            Self::Cycle(cycle) => cycle.next_direction(),
            Self::Random(generator) => generator.next_direction(),
        }
    }
}

impl OptimizerConfig {
    fn validate(&self) -> Result<(), RdkwError> {
        if self.dimension == 0 {
            return Err(RdkwError::InvalidDimension(
                "optimizer dimension must be at least 1".into(),
            ));
        }
        if self.theta0.len() != self.dimension {
            return Err(RdkwError::DimensionMismatch(format!(
                "theta0 has length {}, config dimension is {}",
                self.theta0.len(),
                self.dimension
            )));
        }
        if self.theta0.iter().any(|x| !x.is_finite()) {
            return Err(RdkwError::InvalidConfig(
                "theta0 must be finite".into(),
            ));
        }
        let need = self.estimator.simulations_per_step();
        if self.simulation_budget < need {
            return Err(RdkwError::InvalidConfig(format!(
                "budget {} cannot fund a single iteration (needs {need})",
                self.simulation_budget
            )));
        }
        Ok(())
    }
}

impl OptimizerState {
    /// Fresh state at `theta0` with nothing consumed.
    pub fn new(theta0: Array1<f64>, budget: u64, record_trajectory: bool) -> Self {
        let trajectory = record_trajectory.then(|| vec![(0, theta0.clone())]);
        Self {
            theta: theta0,
            iteration: 0,
            simulations_used: 0,
            budget,
            diverged: false,
            trajectory,
        }
    }

    pub fn theta(&self) -> ArrayView1<'_, f64> {
        self.theta.view()
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn simulations_used(&self) -> u64 {
        self.simulations_used
    }

    pub fn diverged(&self) -> bool {
        self.diverged
    }

    /// One update `theta -= a * estimate` along `d`, querying the objective
    /// once or twice according to `kind`.
    ///
    /// Refuses (without consuming anything) if the remaining budget cannot
    /// fund the step. A non-finite measurement or iterate marks the state
    /// diverged and leaves `theta` at its last finite value; that is a
    /// normal return, not an error.
    pub fn single_step(
        &mut self,
        d: ArrayView1<'_, f64>,
        a: f64,
        delta: f64,
        objective: &mut NoisyObjective,
        kind: EstimatorKind,
    ) -> Result<(), RdkwError> {
        if !delta.is_finite() || delta <= 0.0 {
            return Err(RdkwError::InvalidSensitivity { delta });
        }
        if d.len() != self.theta.len() {
            return Err(RdkwError::DimensionMismatch(format!(
                "direction has length {}, iterate has length {}",
                d.len(),
                self.theta.len()
            )));
        }
        let need = kind.simulations_per_step();
        if self.simulations_used + need > self.budget {
            return Err(RdkwError::BudgetExhausted {
                used: self.simulations_used,
                budget: self.budget,
                needed: need,
            });
        }

        let probe_plus = &self.theta + &(delta * &d.to_owned());
        let y_plus_raw = objective.evaluate(probe_plus.view())?;
        self.simulations_used += 1;

        let estimate = match kind {
            EstimatorKind::TwoSided => {
                let probe_minus = &self.theta - &(delta * &d.to_owned());
                let y_minus_raw = objective.evaluate(probe_minus.view())?;
                self.simulations_used += 1;
                let (Ok(y_plus), Ok(y_minus)) =
                    (Measurement::new(y_plus_raw), Measurement::new(y_minus_raw))
                else {
                    self.diverged = true;
                    return Ok(());
                };
                two_sided_estimate(y_plus, y_minus, d, delta)?
            }
            EstimatorKind::OneSided => {
                let Ok(y_plus) = Measurement::new(y_plus_raw) else {
                    self.diverged = true;
                    return Ok(());
                };
                one_sided_estimate(y_plus, d, delta)?
            }
        };

        let next = &self.theta - &(a * &estimate);
        if next.iter().any(|x| !x.is_finite()) {
            self.diverged = true;
            return Ok(());
        }
        self.theta = next;
        self.iteration += 1;
        if let Some(trajectory) = &mut self.trajectory {
            trajectory.push((self.iteration, self.theta.clone()));
        }
        Ok(())
    }

    fn into_outcome(self) -> RunOutcome {
        RunOutcome {
            theta_end: self.theta,
            iterations: self.iteration,
            simulations_used: self.simulations_used,
            diverged: self.diverged,
            trajectory: self.trajectory,
        }
    }
}

/// Runs the full loop until the budget cannot fund another iteration or the
/// run diverges. The objective's evaluation counter advances in lockstep
/// with `simulations_used`.
pub fn run(config: &OptimizerConfig, objective: &mut NoisyObjective) -> Result<RunOutcome, RdkwError> {
    config.validate()?;
    if objective.dimension() != config.dimension {
        return Err(RdkwError::DimensionMismatch(format!(
            "objective dimension {} does not match config dimension {}",
            objective.dimension(),
            config.dimension
        )));
    }

    let mut stream = DirectionStream::new(config.source, config.dimension)?;
    let mut state = OptimizerState::new(
        config.theta0.clone(),
        config.simulation_budget,
        config.record_trajectory,
    );
    let cost = config.estimator.simulations_per_step();

    while !state.diverged && state.simulations_used + cost <= state.budget {
        let d = stream.next_direction();
        let (a, delta) = config.schedule.step_sizes(state.iteration);
        state.single_step(d.view(), a, delta, objective, config.estimator)?;
    }
    Ok(state.into_outcome())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{nmse, FourthOrderSpec, Loss, QuadraticSpec};
    use ndarray::array;
    use std::sync::{Arc, Mutex};

    fn quadratic_objective(sigma: f64, seed: u64) -> NoisyObjective {
        NoisyObjective::new(
            Loss::Quadratic(QuadraticSpec::benchmark(10).unwrap()),
            sigma,
            seed,
        )
        .unwrap()
    }

    fn base_config(estimator: EstimatorKind, source: PerturbationSource, budget: u64) -> OptimizerConfig {
        OptimizerConfig {
            dimension: 10,
            estimator,
            source,
            schedule: StepSchedule::for_horizon(budget / estimator.simulations_per_step()),
            simulation_budget: budget,
            theta0: Array1::ones(10),
            record_trajectory: false,
        }
    }

    #[test]
    fn zero_objective_never_moves() {
        let loss = Loss::Custom {
            dimension: 10,
            value: Arc::new(|_| 0.0),
            theta_star: None,
        };
        let mut objective = NoisyObjective::new(loss, 0.0, 0).unwrap();
        let config = base_config(
            EstimatorKind::TwoSided,
            PerturbationSource::Circulant,
            400,
        );
        let out = run(&config, &mut objective).unwrap();
        assert!(!out.diverged);
        assert_eq!(out.iterations, 200);
        for i in 0..10 {
            assert_eq!(out.theta_end[i], 1.0);
        }
    }

    #[test]
    fn two_sided_budget_2000_gives_1000_iterations() {
        let mut objective = quadratic_objective(0.0, 0);
        let config = base_config(
            EstimatorKind::TwoSided,
            PerturbationSource::Circulant,
            2000,
        );
        let out = run(&config, &mut objective).unwrap();
        assert_eq!(out.iterations, 1000);
        assert_eq!(out.simulations_used, 2000);
        assert_eq!(objective.evaluations(), 2000);
    }

    #[test]
    fn odd_budget_leaves_remainder_unspent() {
        let mut objective = quadratic_objective(0.0, 0);
        let config = base_config(
            EstimatorKind::TwoSided,
            PerturbationSource::Hadamard,
            2001,
        );
        let out = run(&config, &mut objective).unwrap();
        assert_eq!(out.iterations, 1000);
        assert_eq!(out.simulations_used, 2000);
    }

    #[test]
    fn one_sided_budget_equals_iterations() {
        let mut objective = quadratic_objective(0.0, 0);
        let config = base_config(EstimatorKind::OneSided, PerturbationSource::Circulant, 333);
        let out = run(&config, &mut objective).unwrap();
        assert_eq!(out.iterations, 333);
        assert_eq!(out.simulations_used, 333);
        assert_eq!(objective.evaluations(), 333);
    }

    #[test]
    fn zero_step_size_advances_budget_without_moving() {
        let mut objective = quadratic_objective(0.0, 0);
        let mut state = OptimizerState::new(Array1::ones(10), 10, false);
        let d = Array1::from_elem(10, 1.0);
        state
            .single_step(d.view(), 0.0, 0.5, &mut objective, EstimatorKind::TwoSided)
            .unwrap();
        assert_eq!(state.simulations_used(), 2);
        assert_eq!(state.iteration(), 1);
        for i in 0..10 {
            assert_eq!(state.theta()[i], 1.0);
        }
    }

    #[test]
    fn stationary_point_round_trip_returns_to_start() {
        // At a stationary point of a quadratic the two-sided difference is
        // exactly zero, so a step along d and another along -d land back.
        let spec = QuadraticSpec::benchmark(10).unwrap();
        let start = spec.theta_star().to_owned();
        let mut objective =
            NoisyObjective::new(Loss::Quadratic(spec), 0.0, 0).unwrap();
        let mut state = OptimizerState::new(start.clone(), 100, false);
        let d = Array1::from_shape_fn(10, |i| if i % 2 == 0 { 1.0 } else { -1.0 });
        state
            .single_step(d.view(), 0.1, 0.3, &mut objective, EstimatorKind::TwoSided)
            .unwrap();
        let minus = d.mapv(|x| -x);
        state
            .single_step(minus.view(), 0.1, 0.3, &mut objective, EstimatorKind::TwoSided)
            .unwrap();
        for i in 0..10 {
            assert!((state.theta()[i] - start[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn exhausted_budget_refuses_step() {
        let mut objective = quadratic_objective(0.0, 0);
        let mut state = OptimizerState::new(Array1::ones(10), 3, false);
        let d = Array1::ones(10);
        state
            .single_step(d.view(), 0.1, 0.5, &mut objective, EstimatorKind::TwoSided)
            .unwrap();
        let refused = state.single_step(d.view(), 0.1, 0.5, &mut objective, EstimatorKind::TwoSided);
        assert!(matches!(
            refused,
            Err(RdkwError::BudgetExhausted {
                used: 2,
                budget: 3,
                needed: 2
            })
        ));
        // nothing consumed by the refusal
        assert_eq!(state.simulations_used(), 2);
        assert_eq!(objective.evaluations(), 2);
    }

    #[test]
    fn invalid_delta_is_rejected_before_spending() {
        let mut objective = quadratic_objective(0.0, 0);
        let mut state = OptimizerState::new(Array1::ones(10), 10, false);
        let d = Array1::ones(10);
        let err = state.single_step(d.view(), 0.1, 0.0, &mut objective, EstimatorKind::OneSided);
        assert!(matches!(err, Err(RdkwError::InvalidSensitivity { .. })));
        assert_eq!(state.simulations_used(), 0);
        assert_eq!(objective.evaluations(), 0);
    }

    #[test]
    fn deterministic_runs_are_bit_identical() {
        for source in [
            PerturbationSource::Circulant,
            PerturbationSource::Hadamard,
            PerturbationSource::Bernoulli { seed: 77 },
        ] {
            let mut config = base_config(EstimatorKind::TwoSided, source, 600);
            config.record_trajectory = true;
            let mut first = quadratic_objective(0.0, 5);
            let mut second = quadratic_objective(0.0, 5);
            let out_a = run(&config, &mut first).unwrap();
            let out_b = run(&config, &mut second).unwrap();
            let (ta, tb) = (out_a.trajectory.unwrap(), out_b.trajectory.unwrap());
            assert_eq!(ta.len(), tb.len());
            for ((na, va), (nb, vb)) in ta.iter().zip(tb.iter()) {
                assert_eq!(na, nb);
                for i in 0..10 {
                    assert!(va[i].to_bits() == vb[i].to_bits(), "source {source:?}");
                }
            }
        }
    }

    #[test]
    fn descent_on_noise_free_quadratic() {
        for source in [PerturbationSource::Circulant, PerturbationSource::Hadamard] {
            let mut objective = quadratic_objective(0.0, 0);
            let config = base_config(EstimatorKind::TwoSided, source, 200);
            let out = run(&config, &mut objective).unwrap();
            let spec = QuadraticSpec::benchmark(10).unwrap();
            let before = spec.value(config.theta0.view()).unwrap();
            let after = spec.value(out.theta_end.view()).unwrap();
            assert!(after < before, "{source:?}: {after} !< {before}");
            assert!(!out.diverged);
        }
    }

    #[test]
    fn circulant_two_sided_reaches_small_nmse() {
        let spec = QuadraticSpec::benchmark(10).unwrap();
        let star = spec.theta_star().to_owned();
        let mut objective = quadratic_objective(0.0, 0);
        let config = base_config(
            EstimatorKind::TwoSided,
            PerturbationSource::Circulant,
            2000,
        );
        let out = run(&config, &mut objective).unwrap();
        let err = nmse(out.theta_end.view(), config.theta0.view(), star.view()).unwrap();
        assert!(err < 1e-3, "nmse {err}");
    }

    #[test]
    fn directions_repeat_with_cycle_period() {
        // Recover each iteration's direction from the probe points of a
        // recording objective; iterations n and n + P must share directions.
        let probes: Arc<Mutex<Vec<Array1<f64>>>> = Arc::new(Mutex::new(Vec::new()));
        let sink = Arc::clone(&probes);
        let loss = Loss::Custom {
            dimension: 10,
            value: Arc::new(move |theta: ArrayView1<'_, f64>| {
                sink.lock().unwrap().push(theta.to_owned());
                0.0
            }),
            theta_star: None,
        };
        let mut objective = NoisyObjective::new(loss, 0.0, 0).unwrap();
        let config = OptimizerConfig {
            record_trajectory: true,
            ..base_config(EstimatorKind::OneSided, PerturbationSource::Circulant, 33)
        };
        let out = run(&config, &mut objective).unwrap();
        let trajectory = out.trajectory.unwrap();
        let probes = probes.lock().unwrap();
        assert_eq!(probes.len(), 33);

        let period = 11;
        let mut directions = Vec::new();
        for n in 0..33usize {
            let (_, theta_n) = &trajectory[n];
            let (_, delta) = config.schedule.step_sizes(n as u64);
            directions.push((&probes[n] - theta_n) / delta);
        }
        for n in 0..(33 - period) {
            for (i, (now, later)) in directions[n].iter().zip(&directions[n + period]).enumerate() {
                assert!(
                    (now - later).abs() < 1e-9,
                    "direction mismatch at n={n}, i={i}"
                );
            }
        }
    }

    #[test]
    fn divergence_keeps_last_finite_iterate() {
        // A loss that explodes once theta drifts past a threshold.
        let loss = Loss::Custom {
            dimension: 2,
            value: Arc::new(|theta: ArrayView1<'_, f64>| {
                if theta[0] > 1.5 {
                    f64::INFINITY
                } else {
                    theta[0]
                }
            }),
            theta_star: None,
        };
        let mut objective = NoisyObjective::new(loss, 0.0, 0).unwrap();
        // one-sided estimate (y/delta) d with a fixed direction pushes
        // theta[0] = 1 upward: estimate = (1/0.5)*(-1,..) with d = -e1 and a = 1
        let mut state = OptimizerState::new(array![1.0, 0.0], 100, false);
        let d = array![-1.0, 0.0];
        let mut steps = 0;
        while !state.diverged() {
            state
                .single_step(d.view(), 1.0, 0.5, &mut objective, EstimatorKind::OneSided)
                .unwrap();
            steps += 1;
            assert!(steps < 50, "never diverged");
        }
        assert!(state.theta().iter().all(|x| x.is_finite()));
        assert!(state.theta()[0] > 1.5, "kept the last finite iterate");
    }

    #[test]
    fn dimension_mismatch_is_configuration_error() {
        let mut objective = quadratic_objective(0.0, 0);
        let mut config = base_config(
            EstimatorKind::TwoSided,
            PerturbationSource::Circulant,
            100,
        );
        config.dimension = 9;
        config.theta0 = Array1::ones(9);
        assert!(matches!(
            run(&config, &mut objective),
            Err(RdkwError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn undersized_budget_is_rejected() {
        let mut objective = quadratic_objective(0.0, 0);
        let config = base_config(EstimatorKind::TwoSided, PerturbationSource::Circulant, 1);
        assert!(matches!(
            run(&config, &mut objective),
            Err(RdkwError::InvalidConfig(_))
        ));
    }

    #[test]
    fn trajectory_records_initial_point_and_every_iterate() {
        let mut objective = quadratic_objective(0.0, 0);
        let mut config = base_config(
            EstimatorKind::TwoSided,
            PerturbationSource::Hadamard,
            40,
        );
        config.record_trajectory = true;
        let out = run(&config, &mut objective).unwrap();
        let trajectory = out.trajectory.unwrap();
        assert_eq!(trajectory.len(), 21);
        assert_eq!(trajectory[0].0, 0);
        for i in 0..10 {
            assert_eq!(trajectory[0].1[i], 1.0);
        }
        assert_eq!(trajectory[20].0, 20);
        for i in 0..10 {
            assert_eq!(trajectory[20].1[i], out.theta_end[i]);
        }
    }

    #[test]
    fn fourth_order_descent_two_sided() {
        let spec = FourthOrderSpec::benchmark(10).unwrap();
        let mut objective =
            NoisyObjective::new(Loss::FourthOrder(spec.clone()), 0.0, 0).unwrap();
        let config = base_config(
            EstimatorKind::TwoSided,
            PerturbationSource::Circulant,
            2000,
        );
        let out = run(&config, &mut objective).unwrap();
        let before = spec.value(config.theta0.view()).unwrap();
        let after = spec.value(out.theta_end.view()).unwrap();
        assert!(after < before);
    }
}
