//! Linearisation of the infection subsystem `(E, I, V)` at the virus-free
//! periodic solution and the periodic basic reproduction number.
//!
//! With `F(t)` the new-infection matrix and `G(t)` the transition matrix, the
//! reproduction number is the unique `lambda` with
//! `rho(Phi_{F/lambda - G}(P)) = 1`, where `Phi_A(P)` is the monodromy of
//! `z' = A(t) z`. The map `lambda -> rho(...)` is continuous and
//! nonincreasing, so the root is found by bracketing and bisection.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::integrate::{integrate_matrix, IntegratorConfig};
use crate::linalg::{sort_by_modulus_desc, Matrix};
use crate::model::ModelParameters;
use crate::periodic::{virus_free_numeric, VirusFreeSolution};
use crate::scalar::Real;

/// Default bisection tolerance on `lambda`.
pub const DEFAULT_R0_TOL: f64 = 1e-8;

/// Bracket expansion limit (doublings or halvings from `lambda = 1`).
pub const MAX_BRACKET_STEPS: usize = 60;

/// `F(t)` and `G(t)` on the infection compartments ordered `(E, I, V)`.
#[derive(Debug, Clone)]
pub struct LinearizedSystem<T> {
    params: ModelParameters<T>,
    t_star: VirusFreeSolution<T>,
    period: T,
}

/// Build the linearisation. `t_star` must come from the same parameters.
pub fn build_linearization<T: Real>(
    params: &ModelParameters<T>,
    t_star: VirusFreeSolution<T>,
) -> Result<LinearizedSystem<T>> {
    let expected = params.fingerprint();
    if t_star.params_hash != expected {
        return Err(Error::ParamsMismatch {
            expected,
            actual: t_star.params_hash,
        });
    }
    Ok(LinearizedSystem {
        params: *params,
        period: params.period(),
        t_star,
    })
}

impl<T: Real> LinearizedSystem<T> {
    pub fn period(&self) -> T {
        self.period
    }

    pub fn t_star(&self) -> &VirusFreeSolution<T> {
        &self.t_star
    }

    pub fn params(&self) -> &ModelParameters<T> {
        &self.params
    }

    /// The single nonzero entry of `F(t)`: `beta(t) T*(t) / (1 + c1 T*(t))`.
    pub fn infection_rate(&self, t: T) -> T {
        let ts = self.t_star.value_at(t);
        self.params.beta().at(t) * ts / (T::one() + self.params.rates().c1 * ts)
    }

    pub fn f_matrix(&self, t: T) -> Matrix<T> {
        let mut f = Matrix::zeros(3);
        f[(0, 2)] = self.infection_rate(t);
        f
    }

    pub fn g_matrix(&self, t: T) -> Matrix<T> {
        let r = self.params.rates();
        let d = self.params.d().at(t);
        let z = T::zero();
        Matrix::from_rows(&[[r.k + d, z, z], [-r.k, r.delta + d, z], [z, -r.p, r.c]])
    }

    /// `F(t) / lambda - G(t)`.
    pub fn generator(&self, t: T, lambda: T) -> Matrix<T> {
        let mut a = self.g_matrix(t).scale(-T::one());
        a[(0, 2)] = self.infection_rate(t) / lambda;
        a
    }

    /// Monodromy of `z' = (F/lambda - G) z` over one period.
    pub fn monodromy_at(&self, lambda: T, cfg: &IntegratorConfig<T>) -> Result<MonodromyResult<T>> {
        monodromy(|t| self.generator(t, lambda), self.period, cfg)
    }

    /// `h(lambda) = rho(Phi_{F/lambda - G}(P))`.
    pub fn spectral_radius_at(&self, lambda: T, cfg: &IntegratorConfig<T>) -> Result<T> {
        Ok(self.monodromy_at(lambda, cfg)?.spectral_radius)
    }

    /// Monodromy of `z' = -G z` (the evolution operator `X(P, 0)`).
    pub fn transition_monodromy(&self, cfg: &IntegratorConfig<T>) -> Result<MonodromyResult<T>> {
        monodromy(|t| self.g_matrix(t).scale(-T::one()), self.period, cfg)
    }
}

/// Monodromy matrix with its spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct MonodromyResult<T> {
    pub matrix: Matrix<T>,
    /// Largest modulus first.
    pub eigenvalues: Vec<Complex<T>>,
    pub spectral_radius: T,
}

impl<T: Real> MonodromyResult<T> {
    pub fn from_matrix(matrix: Matrix<T>) -> Self {
        let mut eigenvalues = matrix.eigenvalues();
        sort_by_modulus_desc(&mut eigenvalues);
        let spectral_radius = eigenvalues.first().map_or(T::zero(), |z| z.norm());
        MonodromyResult {
            matrix,
            eigenvalues,
            spectral_radius,
        }
    }
}

/// Integrates `M' = A(t) M`, `M(0) = I` over one period.
pub fn monodromy<T, A>(a: A, period: T, cfg: &IntegratorConfig<T>) -> Result<MonodromyResult<T>>
where
    T: Real,
    A: FnMut(T) -> Matrix<T>,
{
    let mut a = a;
    let n = a(T::zero()).dim();
    let sol = integrate_matrix(a, T::zero(), period, &Matrix::identity(n), cfg)?;
    Ok(MonodromyResult::from_matrix(sol.end_matrix))
}

/// Maximum eigenvalue modulus.
pub fn spectral_radius<T: Real>(m: &Matrix<T>) -> T {
    m.spectral_radius()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum R0Method {
    PeriodicBisection,
    AutonomousClosedForm,
}

impl R0Method {
    pub fn name(self) -> &'static str {
        match self {
            R0Method::PeriodicBisection => "periodic-bisection",
            R0Method::AutonomousClosedForm => "autonomous-closed-form",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct R0Result<T> {
    pub value: T,
    pub method: R0Method,
    /// `(lambda_lo, lambda_hi)` with `h(lo) >= 1 >= h(hi)`.
    pub bracket: (T, T),
    /// Spectral-radius evaluations spent (bracketing plus bisection).
    pub iterations: usize,
    /// `rho(Phi_{F - G}(P))`.
    pub rho_at_one: T,
    /// Set when the infection rate vanishes identically; `value` is then 0.
    pub no_infection_term: bool,
}

impl<T: Real> R0Result<T> {
    /// Whether `R0` and `rho(Phi_{F-G}(P))` fall on the same side of 1.
    pub fn threshold_consistent(&self) -> bool {
        let one = T::one();
        (self.value < one) == (self.rho_at_one < one) && (self.value > one) == (self.rho_at_one > one)
    }
}

/// Periodic basic reproduction number by bisection on `h(lambda) = 1`.
pub fn r0_periodic<T: Real>(params: &ModelParameters<T>, tol: T, cfg: &IntegratorConfig<T>) -> Result<R0Result<T>> {
    let t_star = virus_free_numeric(params, cfg)?;
    let lin = build_linearization(params, t_star)?;
    r0_from_linearization(&lin, tol, cfg)
}

pub fn r0_from_linearization<T: Real>(
    lin: &LinearizedSystem<T>,
    tol: T,
    cfg: &IntegratorConfig<T>,
) -> Result<R0Result<T>> {
    if !(tol > T::zero()) {
        return Err(Error::InvalidInput(format!("tol must be > 0, got {tol}")));
    }
    let one = T::one();
    let two = T::lit(2.0);
    let h = |lambda: T| lin.spectral_radius_at(lambda, cfg);
    let rho_at_one = h(one)?;
    let mut iterations = 1;

    if !lin.params().has_infection() {
        return Ok(R0Result {
            value: T::zero(),
            method: R0Method::PeriodicBisection,
            bracket: (T::zero(), T::zero()),
            iterations,
            rho_at_one,
            no_infection_term: true,
        });
    }

    let (mut lo, mut hi);
    if rho_at_one >= one {
        lo = one;
        hi = two;
        let mut steps = 0;
        loop {
            let v = h(hi)?;
            iterations += 1;
            if v <= one {
                break;
            }
            steps += 1;
            if steps >= MAX_BRACKET_STEPS {
                return Err(Error::BracketFailure {
                    doublings: steps,
                    lambda: hi.as_f64(),
                });
            }
            lo = hi;
            hi = hi * two;
        }
    } else {
        hi = one;
        lo = one / two;
        let mut steps = 0;
        loop {
            let v = h(lo)?;
            iterations += 1;
            if v >= one {
                break;
            }
            steps += 1;
            if steps >= MAX_BRACKET_STEPS {
                return Err(Error::BracketFailure {
                    doublings: steps,
                    lambda: lo.as_f64(),
                });
            }
            hi = lo;
            lo = lo / two;
        }
    }

    while hi - lo >= tol {
        let mid = (lo + hi) / two;
        if mid <= lo || mid >= hi {
            break;
        }
        let v = h(mid)?;
        iterations += 1;
        if v >= one {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    Ok(R0Result {
        value: (lo + hi) / two,
        method: R0Method::PeriodicBisection,
        bracket: (lo, hi),
        iterations,
        rho_at_one,
        no_infection_term: false,
    })
}

/// Closed form for constant coefficients:
/// `p beta k mu / (c (d + delta)(d + k)(d + c1 mu))`.
#[allow(clippy::too_many_arguments)]
pub fn r0_autonomous<T: Real>(mu: T, beta: T, d: T, k: T, delta: T, p: T, c: T, c1: T) -> T {
    p * beta * k * mu / (c * (d + delta) * (d + k) * (d + c1 * mu))
}

/// [`r0_autonomous`] evaluated at the time-averaged rates of `params`.
pub fn r0_time_averaged<T: Real>(params: &ModelParameters<T>) -> T {
    let r = params.rates();
    r0_autonomous(
        params.mu().mean(),
        params.beta().mean(),
        params.d().mean(),
        r.k,
        r.delta,
        r.p,
        r.c,
        r.c1,
    )
}

/// Closed-form result for parameter sets with all amplitudes zero.
pub fn r0_autonomous_result<T: Real>(params: &ModelParameters<T>) -> Result<R0Result<T>> {
    if !params.is_autonomous() {
        return Err(Error::InvalidInput(
            "closed-form reproduction number requires zero amplitudes".into(),
        ));
    }
    let value = r0_time_averaged(params);
    let r = params.rates();
    let d = params.d().mean();
    // Phi_{F-G}(P) for constant matrices is exp((F - G) P); its spectral radius
    // is exp(P * s) with s the spectral abscissa of F - G.
    let f13 = params.beta().mean() * params.mu().mean() / (d + r.c1 * params.mu().mean());
    let a = Matrix::from_rows(&[
        [-(r.k + d), T::zero(), f13],
        [r.k, -(r.delta + d), T::zero()],
        [T::zero(), r.p, -r.c],
    ]);
    let abscissa = a.eigenvalues().iter().fold(T::neg_infinity(), |m, z| m.max(z.re));
    Ok(R0Result {
        value,
        method: R0Method::AutonomousClosedForm,
        bracket: (value, value),
        iterations: 0,
        rho_at_one: (abscissa * params.period()).exp(),
        no_infection_term: !params.has_infection(),
    })
}
