//! Periodic solutions: the virus-free solution `T*(t)`, the period map of the
//! full system, endemic periodic orbits by Newton shooting and their Floquet
//! multipliers.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::integrate::{integrate, integrate_with, IntegratorConfig, SolveOptions};
use crate::linalg::{sort_by_modulus_desc, Matrix};
use crate::model::{jacobian_into, rhs_into, ModelParameters, State};
use crate::scalar::Real;

/// Samples per period stored for periodic solutions unless stated otherwise.
pub const DEFAULT_SAMPLES_PER_PERIOD: usize = 256;

/// Components below this value mark a fixed point as lying on the boundary of
/// the positive cone (collapse onto the virus-free orbit).
pub const BOUNDARY_EPS: f64 = 1e-10;

/// Maximum number of step halvings per Newton iteration.
pub const MAX_NEWTON_HALVINGS: usize = 8;

/// Trigonometric interpolant of a smooth periodic function sampled on a
/// uniform grid. Harmonics below rounding level are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigInterpolant<T> {
    omega: T,
    mean: T,
    cos_coeffs: Vec<T>,
    sin_coeffs: Vec<T>,
}

impl<T: Real> TrigInterpolant<T> {
    /// `values[j]` is the function at `j * period / values.len()`.
    pub fn new(period: T, values: &[T]) -> Self {
        let n = values.len();
        assert!(n > 0);
        let nt = T::from_usize_lossy(n);
        let omega = T::TAU() / period;
        let mean = values.iter().copied().sum::<T>() / nt;
        let k_max = (n - 1) / 2;
        let mut cos_coeffs = Vec::with_capacity(k_max);
        let mut sin_coeffs = Vec::with_capacity(k_max);
        for k in 1..=k_max {
            let (mut a, mut b) = (T::zero(), T::zero());
            for (j, &v) in values.iter().enumerate() {
                let phase = T::TAU() * T::from_usize_lossy((j * k) % n) / nt;
                a = a + v * phase.cos();
                b = b + v * phase.sin();
            }
            let two_over_n = T::lit(2.0) / nt;
            cos_coeffs.push(a * two_over_n);
            sin_coeffs.push(b * two_over_n);
        }
        let floor = T::epsilon() * T::lit(4.0) * mean.abs().max(T::min_positive_value());
        let keep = (0..k_max)
            .rev()
            .find(|&k| cos_coeffs[k].abs() + sin_coeffs[k].abs() > floor)
            .map_or(0, |k| k + 1);
        cos_coeffs.truncate(keep);
        sin_coeffs.truncate(keep);
        TrigInterpolant {
            omega,
            mean,
            cos_coeffs,
            sin_coeffs,
        }
    }

    pub fn harmonics(&self) -> usize {
        self.cos_coeffs.len()
    }

    pub fn eval(&self, t: T) -> T {
        let (s1, c1) = (self.omega * t).sin_cos();
        let (mut s, mut c) = (s1, c1);
        let mut acc = self.mean;
        for (a, b) in self.cos_coeffs.iter().zip(&self.sin_coeffs) {
            acc = acc + *a * c + *b * s;
            let c_next = c * c1 - s * s1;
            s = s * c1 + c * s1;
            c = c_next;
        }
        acc
    }
}

/// The virus-free periodic solution `(T*(t), 0, 0, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VirusFreeSolution<T> {
    pub params_hash: u64,
    pub period: T,
    /// `T*(0)`.
    pub t_star_initial: T,
    /// Uniform grid over `[0, period]`, both ends included.
    pub times: Vec<T>,
    pub values: Vec<T>,
    interpolant: TrigInterpolant<T>,
}

impl<T: Real> VirusFreeSolution<T> {
    fn from_samples(params: &ModelParameters<T>, times: Vec<T>, values: Vec<T>) -> Result<Self> {
        if let Some((j, &v)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > T::zero())) {
            return Err(Error::InvalidInput(format!(
                "virus-free solution is not positive at t = {} ({v})",
                times[j]
            )));
        }
        let n = values.len() - 1;
        let interpolant = TrigInterpolant::new(params.period(), &values[..n]);
        Ok(VirusFreeSolution {
            params_hash: params.fingerprint(),
            period: params.period(),
            t_star_initial: values[0],
            times,
            values,
            interpolant,
        })
    }

    /// `T*(t)` for any `t`, by trigonometric interpolation of the samples.
    pub fn value_at(&self, t: T) -> T {
        self.interpolant.eval(t)
    }

    /// Relative mismatch `|T*(P) - T*(0)| / T*(0)` of the stored samples.
    pub fn periodicity_defect(&self) -> T {
        let last = *self.values.last().expect("non-empty samples");
        (last - self.t_star_initial).abs() / self.t_star_initial
    }

    pub fn state_at(&self, t: T) -> State<T> {
        State::new(self.value_at(t), T::zero(), T::zero(), T::zero())
    }
}

/// `T*(t)` from the explicit variation-of-constants formula, evaluating both
/// nested integrals by composite Simpson quadrature with `n_quad` panels.
pub fn virus_free_closed_form<T: Real>(params: &ModelParameters<T>, n_quad: usize) -> Result<VirusFreeSolution<T>> {
    virus_free_closed_form_sampled(params, n_quad, DEFAULT_SAMPLES_PER_PERIOD)
}

pub fn virus_free_closed_form_sampled<T: Real>(
    params: &ModelParameters<T>,
    n_quad: usize,
    samples: usize,
) -> Result<VirusFreeSolution<T>> {
    if n_quad < 64 {
        return Err(Error::InvalidInput(format!("n_quad must be >= 64, got {n_quad}")));
    }
    if samples < 2 {
        return Err(Error::InvalidInput("need at least 2 samples per period".into()));
    }
    let n_quad = n_quad + n_quad % 2;
    let period = params.period();
    let (decay_p, inflow_p) = decay_and_inflow(params, period, n_quad);
    if !(decay_p > T::zero()) {
        return Err(Error::DegenerateDecay {
            integral: decay_p.as_f64(),
        });
    }
    let damp = (-decay_p).exp();
    let t0_value = damp * inflow_p / (T::one() - damp);

    let times: Vec<T> = (0..=samples)
        .map(|j| period * T::from_usize_lossy(j) / T::from_usize_lossy(samples))
        .collect();
    let values = times
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            if j == 0 {
                t0_value
            } else {
                let (decay, inflow) = if j == samples {
                    (decay_p, inflow_p)
                } else {
                    decay_and_inflow(params, t, n_quad)
                };
                (-decay).exp() * (inflow + t0_value)
            }
        })
        .collect();
    VirusFreeSolution::from_samples(params, times, values)
}

// (int_0^t d, int_0^t mu(tau) exp(int_0^tau d) dtau) by composite Simpson;
// the inner integral is accumulated panel by panel.
fn decay_and_inflow<T: Real>(params: &ModelParameters<T>, t: T, n: usize) -> (T, T) {
    let h = t / T::from_usize_lossy(n);
    let sixth = T::one() / T::lit(6.0);
    let half = T::lit(0.5);
    let (d, mu) = (params.d(), params.mu());
    let mut decay = T::zero();
    let mut prev_node = T::zero();
    let mut weighted = mu.at(T::zero());
    for j in 1..=n {
        let node = h * T::from_usize_lossy(j);
        decay = decay + h * sixth * (d.at(prev_node) + T::lit(4.0) * d.at(prev_node + half * h) + d.at(node));
        let w = if j == n {
            T::one()
        } else if j % 2 == 1 {
            T::lit(4.0)
        } else {
            T::lit(2.0)
        };
        weighted = weighted + w * mu.at(node) * decay.exp();
        prev_node = node;
    }
    (decay, weighted * h / T::lit(3.0))
}

/// `T*(t)` as the fixed point of the period map of `T' = mu(t) - d(t) T`.
///
/// The period map is affine in `T(0)`, so two integrations (from 0 and
/// from 1) determine the fixed point exactly.
pub fn virus_free_numeric<T: Real>(params: &ModelParameters<T>, cfg: &IntegratorConfig<T>) -> Result<VirusFreeSolution<T>> {
    virus_free_numeric_sampled(params, cfg, DEFAULT_SAMPLES_PER_PERIOD)
}

pub fn virus_free_numeric_sampled<T: Real>(
    params: &ModelParameters<T>,
    cfg: &IntegratorConfig<T>,
    samples: usize,
) -> Result<VirusFreeSolution<T>> {
    if samples < 2 {
        return Err(Error::InvalidInput("need at least 2 samples per period".into()));
    }
    let period = params.period();
    let field = |t: T, y: &[T], dy: &mut [T]| dy[0] = params.mu().at(t) - params.d().at(t) * y[0];
    let from_zero = integrate(field, T::zero(), period, &[T::zero()], cfg)?.final_state[0];
    let from_one = integrate(field, T::zero(), period, &[T::one()], cfg)?.final_state[0];
    let slope = from_one - from_zero;
    if !(slope < T::one()) {
        return Err(Error::DegenerateDecay {
            integral: -slope.ln().as_f64(),
        });
    }
    let t0_value = from_zero / (T::one() - slope);

    let grid: Vec<T> = (0..=samples)
        .map(|j| period * T::from_usize_lossy(j) / T::from_usize_lossy(samples))
        .collect();
    let opts = SolveOptions {
        sample_times: &grid,
        clamp_nonnegative: false,
    };
    let sol = integrate_with(field, T::zero(), period, &[t0_value], cfg, &opts)?;
    let values = sol.states.iter().map(|s| s[0]).collect();
    VirusFreeSolution::from_samples(params, sol.times, values)
}

/// Solution of the model at `t = P` from `x0` at `t = 0`, without clamping.
pub fn poincare_map_unclamped<T: Real>(
    params: &ModelParameters<T>,
    x0: &State<T>,
    cfg: &IntegratorConfig<T>,
) -> Result<State<T>> {
    let sol = integrate(
        |t, y: &[T], dy: &mut [T]| rhs_into(t, y, dy, params),
        T::zero(),
        params.period(),
        &x0.to_array(),
        cfg,
    )?;
    Ok(State::from_slice(&sol.final_state))
}

/// Period map `x0 -> u(P; x0)`.
///
/// Components in `[-abs_tol, 0)` are snapped to zero; anything more negative
/// is reported as [`Error::PositivityViolation`].
pub fn poincare_map<T: Real>(params: &ModelParameters<T>, x0: &State<T>, cfg: &IntegratorConfig<T>) -> Result<State<T>> {
    if !x0.is_nonnegative() {
        return Err(Error::InvalidInput(format!("initial state must be nonnegative, got {x0:?}")));
    }
    let raw = poincare_map_unclamped(params, x0, cfg)?;
    let mut out = raw.to_array();
    for (component, v) in out.iter_mut().enumerate() {
        if *v < -cfg.abs_tol {
            return Err(Error::PositivityViolation {
                t: params.period().as_f64(),
                component,
                value: v.as_f64(),
            });
        }
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    Ok(State::from_array(out))
}

/// Period map together with its derivative: integrates the state and the
/// variational equation `Z' = J(t, u(t)) Z`, `Z(0) = I`, side by side.
pub fn flow_with_monodromy<T: Real>(
    params: &ModelParameters<T>,
    x0: &State<T>,
    cfg: &IntegratorConfig<T>,
) -> Result<(State<T>, Matrix<T>)> {
    let mut y0 = Vec::with_capacity(20);
    y0.extend_from_slice(&x0.to_array());
    y0.extend_from_slice(Matrix::<T>::identity(4).as_slice());
    let mut jac = Matrix::zeros(4);
    let sol = integrate(
        |t, y: &[T], dy: &mut [T]| {
            rhs_into(t, &y[..4], &mut dy[..4], params);
            jacobian_into(t, &y[..4], &mut jac, params);
            crate::integrate::matmul_into(&jac, &y[4..], &mut dy[4..], 4);
        },
        T::zero(),
        params.period(),
        &y0,
        cfg,
    )?;
    let state = State::from_slice(&sol.final_state[..4]);
    let monodromy = Matrix::from_row_major(4, sol.final_state[4..].to_vec());
    if !monodromy.is_finite() {
        return Err(Error::NonFiniteState {
            t: params.period().as_f64(),
        });
    }
    Ok((state, monodromy))
}

/// Eigenvalues of a monodromy matrix, largest modulus first.
pub fn floquet_multipliers<T: Real>(monodromy: &Matrix<T>) -> Vec<Complex<T>> {
    let mut ev = monodromy.eigenvalues();
    sort_by_modulus_desc(&mut ev);
    ev
}

/// A periodic solution located as a fixed point of the period map.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicOrbit<T> {
    /// Fixed point of the period map (state at `t = 0`).
    pub initial_state: State<T>,
    /// Uniform sampling of one period, `t = 0` and `t = P` included.
    pub times: Vec<T>,
    pub states: Vec<State<T>>,
    /// `max |Q(x*) - x*|` at the returned fixed point.
    pub newton_residual: T,
    pub newton_iterations: usize,
    pub monodromy: Matrix<T>,
    /// Largest modulus first.
    pub floquet_multipliers: Vec<Complex<T>>,
    pub stable: bool,
    /// `1 - max |multiplier|`; positive for stable orbits.
    pub stability_margin: T,
}

impl<T: Real> PeriodicOrbit<T> {
    /// `max |x(P) - x(0)|` over the stored samples.
    pub fn closure_error(&self) -> T {
        match (self.states.first(), self.states.last()) {
            (Some(a), Some(b)) => a.max_abs_diff(b),
            _ => T::zero(),
        }
    }
}

/// Newton shooting on `g(x) = Q(x) - x` with `Dg = Z(P; x) - I`.
///
/// Steps are halved up to [`MAX_NEWTON_HALVINGS`] times while the residual
/// fails to decrease; iterates are projected onto the nonnegative cone.
pub fn find_periodic_orbit<T: Real>(
    params: &ModelParameters<T>,
    guess: &State<T>,
    cfg: &IntegratorConfig<T>,
    newton_tol: T,
    max_newton_iters: usize,
) -> Result<PeriodicOrbit<T>> {
    if !guess.is_strictly_positive() {
        return Err(Error::InvalidInput(format!("Newton guess must be strictly positive, got {guess:?}")));
    }
    if !(newton_tol > T::zero()) {
        return Err(Error::InvalidInput("newton_tol must be > 0".into()));
    }
    let residual = |x: &State<T>, q: &State<T>| q.max_abs_diff(x);

    let mut x = *guess;
    let (mut qx, mut monodromy) = flow_with_monodromy(params, &x, cfg)?;
    let mut res = residual(&x, &qx);
    let mut iterations = 0;
    while !(res < newton_tol) {
        if iterations >= max_newton_iters {
            return Err(Error::NewtonDiverged {
                iterations,
                residual: res.as_f64(),
            });
        }
        iterations += 1;
        let jac = &monodromy - &Matrix::identity(4);
        let g: Vec<T> = qx.to_array().iter().zip(x.to_array()).map(|(&q, x)| x - q).collect();
        let step = jac.solve(&g)?;

        let mut lambda = T::one();
        let mut accepted = None;
        for _ in 0..=MAX_NEWTON_HALVINGS {
            let mut trial = x.to_array();
            for (v, s) in trial.iter_mut().zip(&step) {
                *v = (*v + lambda * *s).max(T::zero());
            }
            let trial = State::from_array(trial);
            match flow_with_monodromy(params, &trial, cfg) {
                Ok((q, m)) => {
                    let r = residual(&trial, &q);
                    if r < res {
                        accepted = Some((trial, q, m, r));
                        break;
                    }
                }
                Err(e) if e.is_numerical() => {}
                Err(e) => return Err(e),
            }
            lambda = lambda * T::lit(0.5);
        }
        match accepted {
            Some((nx, nq, nm, nr)) => {
                x = nx;
                qx = nq;
                monodromy = nm;
                res = nr;
            }
            None => {
                return Err(Error::NewtonDiverged {
                    iterations,
                    residual: res.as_f64(),
                })
            }
        }
    }

    if x.to_array().iter().any(|&v| v < T::lit(BOUNDARY_EPS)) {
        return Err(Error::ConvergedToBoundary {
            state: x.to_array().map(|v| v.as_f64()),
        });
    }

    let samples = sample_period(params, &x, cfg, DEFAULT_SAMPLES_PER_PERIOD)?;
    let multipliers = floquet_multipliers(&monodromy);
    let max_modulus = multipliers.first().map_or(T::zero(), |z| z.norm());
    Ok(PeriodicOrbit {
        initial_state: x,
        times: samples.0,
        states: samples.1,
        newton_residual: res,
        newton_iterations: iterations,
        monodromy,
        floquet_multipliers: multipliers,
        stable: max_modulus < T::one(),
        stability_margin: T::one() - max_modulus,
    })
}

fn sample_period<T: Real>(
    params: &ModelParameters<T>,
    x0: &State<T>,
    cfg: &IntegratorConfig<T>,
    samples: usize,
) -> Result<(Vec<T>, Vec<State<T>>)> {
    let period = params.period();
    let grid: Vec<T> = (0..=samples)
        .map(|j| period * T::from_usize_lossy(j) / T::from_usize_lossy(samples))
        .collect();
    let opts = SolveOptions {
        sample_times: &grid,
        clamp_nonnegative: false,
    };
    let sol = integrate_with(
        |t, y: &[T], dy: &mut [T]| rhs_into(t, y, dy, params),
        T::zero(),
        period,
        &x0.to_array(),
        cfg,
        &opts,
    )?;
    Ok((sol.times, sol.states.iter().map(|s| State::from_slice(s)).collect()))
}

/// Default transient before Newton shooting, hours.
pub const DEFAULT_TRANSIENT_HOURS: f64 = 2000.0;

/// Integrates from `seed` and returns the state at the last whole period not
/// after `transient` (the seed itself if `transient < P`).
pub fn warm_start<T: Real>(
    params: &ModelParameters<T>,
    seed: &State<T>,
    transient: T,
    cfg: &IntegratorConfig<T>,
) -> Result<State<T>> {
    let periods = (transient / params.period()).floor();
    if !(periods >= T::one()) {
        return Ok(*seed);
    }
    let t_end = periods * params.period();
    let traj = crate::model::simulate_on(params, seed, t_end, &[], cfg)?;
    Ok(traj.last().map(|(_, s)| s).unwrap_or(*seed))
}
