//! Regime classification, invariant monitoring and parameter sweeps.
//!
//! Long simulations are compared against the virus-free periodic solution
//! to decide between extinction and persistence; anything that does not
//! clearly satisfy either rule is reported as indeterminate.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::integrate::IntegratorConfig;
use crate::model::{simulate, ModelParameters, ParamKey, State, Trajectory};
use crate::periodic::{virus_free_numeric, VirusFreeSolution};
use crate::reproduction::{r0_periodic, R0Result, DEFAULT_R0_TOL};
use crate::scalar::Real;

/// Extinction requires `max(E, I, V)` below this at the horizon.
pub const EXTINCTION_EPS: f64 = 1e-8;
/// Extinction requires `sup |T - T*|` over the final period below this.
pub const TSTAR_EPS: f64 = 1e-4;
/// Allowed relative spread of the per-period infection floor over the last
/// [`FLOOR_WINDOW_PERIODS`] periods for a persistence call.
pub const FLOOR_STABILITY: f64 = 0.05;
pub const FLOOR_WINDOW_PERIODS: usize = 10;
/// Minimum classification horizon in periods.
pub const MIN_HORIZON_PERIODS: usize = 50;
/// Default classification horizon in periods (4800 h at a 24 h period).
pub const DEFAULT_HORIZON_PERIODS: usize = 200;
/// Allowed growth of the running bound between the two halves of a run.
pub const BOUND_GROWTH_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisConfig<T> {
    /// Integrator settings for trajectory simulation.
    pub simulation: IntegratorConfig<T>,
    /// Integrator settings for monodromy and reproduction-number work.
    pub spectral: IntegratorConfig<T>,
    pub r0_tol: T,
    pub extinction_eps: T,
    pub tstar_eps: T,
    /// Trajectory samples per forcing period.
    pub samples_per_period: usize,
}

impl<T: Real> Default for AnalysisConfig<T> {
    fn default() -> Self {
        AnalysisConfig {
            simulation: IntegratorConfig::simulation(),
            spectral: IntegratorConfig::spectral(),
            r0_tol: T::lit(DEFAULT_R0_TOL),
            extinction_eps: T::lit(EXTINCTION_EPS),
            tstar_eps: T::lit(TSTAR_EPS),
            samples_per_period: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    Extinction,
    Persistence,
    Indeterminate,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Extinction => "extinction",
            Regime::Persistence => "persistence",
            Regime::Indeterminate => "indeterminate",
        }
    }
}

/// Positivity and boundedness record for one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantLog<T> {
    pub positivity_violations: usize,
    /// Most negative component seen (zero when there were no violations).
    pub worst_undershoot: T,
    /// Running maximum of `W = T + E + I + (delta + d(t)) V / (2p)`.
    pub bound_estimate: T,
    pub first_half_max: T,
    pub second_half_max: T,
    pub bounded: bool,
}

impl<T: Real> InvariantLog<T> {
    pub fn is_clean(&self) -> bool {
        self.positivity_violations == 0 && self.bounded
    }
}

/// `W(t) = T + E + I + (delta + d(t)) / (2p) V`.
pub fn bound_functional<T: Real>(t: T, s: &State<T>, params: &ModelParameters<T>) -> T {
    let r = params.rates();
    s.target + s.exposed + s.infectious + (r.delta + params.d().at(t)) / (T::lit(2.0) * r.p) * s.virus
}

/// Scans a trajectory for components below `-abs_tol` and for growth of the
/// bound functional between the first and second half of the run.
pub fn monitor_invariants<T: Real>(traj: &Trajectory<T>, params: &ModelParameters<T>, abs_tol: T) -> InvariantLog<T> {
    let mut violations = 0;
    let mut worst = T::zero();
    let (t_first, t_last) = match (traj.times.first(), traj.times.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => {
            return InvariantLog {
                positivity_violations: 0,
                worst_undershoot: T::zero(),
                bound_estimate: T::zero(),
                first_half_max: T::zero(),
                second_half_max: T::zero(),
                bounded: true,
            }
        }
    };
    let midpoint = t_first + (t_last - t_first) / T::lit(2.0);
    let mut first = T::neg_infinity();
    let mut second = T::neg_infinity();
    for (t, s) in traj.iter() {
        for v in s.to_array() {
            if v < -abs_tol {
                violations += 1;
                worst = worst.min(v);
            }
        }
        let w = bound_functional(t, s, params);
        if t <= midpoint {
            first = first.max(w);
        } else {
            second = second.max(w);
        }
    }
    if second == T::neg_infinity() {
        second = first;
    }
    let bounded = second.is_finite()
        && first.is_finite()
        && (second <= first * (T::one() + T::lit(BOUND_GROWTH_TOLERANCE)) || second <= T::zero());
    InvariantLog {
        positivity_violations: violations,
        worst_undershoot: worst,
        bound_estimate: first.max(second),
        first_half_max: first,
        second_half_max: second,
        bounded,
    }
}

/// Long-run summary of one simulated initial condition.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEvidence<T> {
    /// `max(E, I, V)` at the horizon.
    pub final_infection_max: T,
    /// `sup |T(t) - T*(t)|` over the final period.
    pub tstar_distance: T,
    /// `min(E, I, V)` over the final period: the measured persistence floor.
    pub infection_floor: T,
    /// Relative spread `(max - min) / max` of the per-period floors over the
    /// last [`FLOOR_WINDOW_PERIODS`] periods.
    pub floor_variation: T,
    pub invariants: InvariantLog<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialConditionOutcome<T> {
    pub initial: State<T>,
    pub result: Result<TrajectoryEvidence<T>, Error>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationReport<T> {
    pub r0: R0Result<T>,
    pub regime: Regime,
    pub evidence: Vec<InitialConditionOutcome<T>>,
    pub horizon: T,
    /// Smallest measured infection floor, reported for persistence only.
    pub persistence_eta: Option<T>,
}

/// The three positive initial conditions used when none are supplied.
pub fn default_initial_conditions<T: Real>() -> Vec<State<T>> {
    let l = T::lit;
    vec![
        State::new(l(10.0), l(1.0), l(1.0), l(1.0)),
        State::new(l(5.0), l(2.0), l(0.5), l(3.0)),
        State::new(l(20.0), l(0.1), l(0.1), l(0.1)),
    ]
}

/// Computes `R0`, simulates every initial condition to `horizon` and
/// applies the extinction / persistence rules.
pub fn classify<T: Real>(
    params: &ModelParameters<T>,
    initial_conditions: &[State<T>],
    horizon: T,
    cfg: &AnalysisConfig<T>,
) -> Result<ClassificationReport<T>> {
    if initial_conditions.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "classification needs at least 3 initial conditions, got {}",
            initial_conditions.len()
        )));
    }
    if let Some(bad) = initial_conditions.iter().find(|s| !s.is_strictly_positive()) {
        return Err(Error::InvalidInput(format!("initial conditions must be strictly positive, got {bad:?}")));
    }
    let min_horizon = params.period() * T::from_usize_lossy(MIN_HORIZON_PERIODS);
    if !(horizon >= min_horizon) {
        return Err(Error::InvalidInput(format!(
            "horizon must cover at least {MIN_HORIZON_PERIODS} periods ({min_horizon} h), got {horizon}"
        )));
    }
    let r0 = r0_periodic(params, cfg.r0_tol, &cfg.spectral)?;
    let t_star = virus_free_numeric(params, &cfg.spectral)?;

    let evidence: Vec<InitialConditionOutcome<T>> = initial_conditions
        .par_iter()
        .map(|ic| InitialConditionOutcome {
            initial: *ic,
            result: trajectory_evidence(params, &t_star, ic, horizon, cfg),
        })
        .collect();

    let eps = cfg.extinction_eps;
    let all_ok: Option<Vec<&TrajectoryEvidence<T>>> = evidence.iter().map(|e| e.result.as_ref().ok()).collect();
    let (regime, eta) = match all_ok {
        None => (Regime::Indeterminate, None),
        Some(ev) => {
            let extinct = ev
                .iter()
                .all(|e| e.final_infection_max < eps && e.tstar_distance < cfg.tstar_eps);
            let persistent = ev
                .iter()
                .all(|e| e.infection_floor > eps && e.floor_variation < T::lit(FLOOR_STABILITY));
            if extinct {
                (Regime::Extinction, None)
            } else if persistent {
                let eta = ev.iter().map(|e| e.infection_floor).fold(T::infinity(), T::min);
                (Regime::Persistence, Some(eta))
            } else {
                (Regime::Indeterminate, None)
            }
        }
    };

    Ok(ClassificationReport {
        r0,
        regime,
        evidence,
        horizon,
        persistence_eta: eta,
    })
}

fn trajectory_evidence<T: Real>(
    params: &ModelParameters<T>,
    t_star: &VirusFreeSolution<T>,
    ic: &State<T>,
    horizon: T,
    cfg: &AnalysisConfig<T>,
) -> Result<TrajectoryEvidence<T>> {
    let period = params.period();
    let step = period / T::from_usize_lossy(cfg.samples_per_period.max(4));
    let traj = simulate(params, ic, horizon, step, &cfg.simulation)?;
    let invariants = monitor_invariants(&traj, params, cfg.simulation.abs_tol);
    let (_, last) = traj.last().expect("trajectory has samples");

    let final_start = horizon - period;
    let mut tstar_distance = T::zero();
    let mut infection_floor = T::infinity();
    for (t, s) in traj.iter().filter(|(t, _)| *t >= final_start) {
        tstar_distance = tstar_distance.max((s.target - t_star.value_at(t)).abs());
        infection_floor = infection_floor.min(s.infection_min());
    }

    let window = FLOOR_WINDOW_PERIODS;
    let mut floors = vec![T::infinity(); window];
    let window_start = horizon - period * T::from_usize_lossy(window);
    for (t, s) in traj.iter().filter(|(t, _)| *t >= window_start) {
        let idx = ((horizon - t) / period).floor().to_usize().unwrap_or(0).min(window - 1);
        floors[idx] = floors[idx].min(s.infection_min());
    }
    let fmax = floors.iter().copied().fold(T::neg_infinity(), T::max);
    let fmin = floors.iter().copied().fold(T::infinity(), T::min);
    let floor_variation = if fmax > T::zero() {
        (fmax - fmin) / fmax
    } else {
        T::infinity()
    };

    Ok(TrajectoryEvidence {
        final_infection_max: last.infection_max(),
        tstar_distance,
        infection_floor,
        floor_variation,
        invariants,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepData<T> {
    pub r0: T,
    pub rho_at_one: T,
    pub regime: Regime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow<T> {
    pub value: T,
    pub outcome: Result<SweepData<T>, Error>,
}

/// Recomputes the reproduction number and regime for each value of one
/// parameter. Rows are independent and returned in ascending value order;
/// invalid values produce an error row instead of aborting the sweep.
pub fn sweep<T: Real>(
    base: &ModelParameters<T>,
    key: ParamKey,
    values: &[T],
    initial_conditions: &[State<T>],
    horizon: T,
    cfg: &AnalysisConfig<T>,
) -> Vec<SweepRow<T>> {
    let mut rows: Vec<SweepRow<T>> = values
        .par_iter()
        .map(|&value| {
            let outcome = base
                .with(key, value)
                .map_err(|e| Error::InvalidSweepValue {
                    key: key.name().to_string(),
                    value: value.as_f64(),
                    reason: e.to_string(),
                })
                .and_then(|params| {
                    let report = classify(&params, initial_conditions, horizon, cfg)?;
                    Ok(SweepData {
                        r0: report.r0.value,
                        rho_at_one: report.r0.rho_at_one,
                        regime: report.regime,
                    })
                });
            SweepRow { value, outcome }
        })
        .collect();
    rows.sort_by(|a, b| a.value.partial_cmp(&b.value).unwrap_or(std::cmp::Ordering::Equal));
    rows
}
