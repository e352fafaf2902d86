//! Adaptive explicit Runge–Kutta integration.
//!
//! A Dormand–Prince 5(4) pair with PI step-size control and the standard
//! fourth-order continuous extension for off-step samples. The same driver
//! handles plain state vectors and flattened matrix ODEs `M' = A(t) M`.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Tolerances and step limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig<T> {
    pub rel_tol: T,
    pub abs_tol: T,
    /// First trial step, hours.
    pub initial_step: T,
    /// Largest step ever attempted, hours.
    pub max_step: T,
    /// Accepted plus rejected steps allowed per call.
    pub max_steps: usize,
}

impl<T: Real> IntegratorConfig<T> {
    /// 1e-6 / 1e-9, for plain simulation.
    pub fn simulation() -> Self {
        IntegratorConfig {
            rel_tol: T::lit(1e-6),
            abs_tol: T::lit(1e-9),
            initial_step: T::lit(0.01),
            max_step: T::one(),
            max_steps: 2_000_000,
        }
    }

    /// 1e-9 / 1e-12, for monodromy matrices and reproduction numbers.
    pub fn spectral() -> Self {
        IntegratorConfig {
            rel_tol: T::lit(1e-9),
            abs_tol: T::lit(1e-12),
            ..Self::simulation()
        }
    }

    pub fn with_tolerances(self, rel_tol: T, abs_tol: T) -> Self {
        IntegratorConfig {
            rel_tol,
            abs_tol,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: T| v.is_finite() && v > T::zero();
        if !pos(self.rel_tol) {
            return Err(Error::invalid("integrator.rel_tol", "must be finite and > 0"));
        }
        if !pos(self.abs_tol) {
            return Err(Error::invalid("integrator.abs_tol", "must be finite and > 0"));
        }
        if !pos(self.initial_step) {
            return Err(Error::invalid("integrator.initial_step", "must be finite and > 0"));
        }
        if !pos(self.max_step) {
            return Err(Error::invalid("integrator.max_step", "must be finite and > 0"));
        }
        if self.initial_step > self.max_step {
            return Err(Error::invalid(
                "integrator.initial_step",
                "must not exceed integrator.max_step",
            ));
        }
        if self.max_steps == 0 {
            return Err(Error::invalid("integrator.max_steps", "must be > 0"));
        }
        Ok(())
    }
}

impl<T: Real> Default for IntegratorConfig<T> {
    fn default() -> Self {
        Self::simulation()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
}

impl StepStats {
    pub fn total(&self) -> usize {
        self.accepted + self.rejected
    }
}

/// Result of [`integrate`]: the requested samples and the state at `t1`.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution<T> {
    pub times: Vec<T>,
    pub states: Vec<Vec<T>>,
    pub final_state: Vec<T>,
    pub stats: StepStats,
}

/// Result of [`integrate_matrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSolution<T> {
    pub end_matrix: Matrix<T>,
    pub step_count: usize,
    pub stats: StepStats,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions<'a, T> {
    /// Extra output times inside `[t0, t1]`, ascending. `t0` and `t1` are
    /// always reported.
    pub sample_times: &'a [T],
    /// Snap components in `[-abs_tol, 0)` to zero after each accepted step.
    pub clamp_nonnegative: bool,
}

impl<T> Default for SolveOptions<'_, T> {
    fn default() -> Self {
        SolveOptions {
            sample_times: &[],
            clamp_nonnegative: false,
        }
    }
}

/// Integrates `y' = f(t, y)` from `t0` to `t1`, reporting only the endpoints.
pub fn integrate<T, F>(f: F, t0: T, t1: T, y0: &[T], cfg: &IntegratorConfig<T>) -> Result<OdeSolution<T>>
where
    T: Real,
    F: FnMut(T, &[T], &mut [T]),
{
    integrate_with(f, t0, t1, y0, cfg, &SolveOptions::default())
}

/// Integrates `y' = f(t, y)` from `t0` to `t1` with dense sampling.
pub fn integrate_with<T, F>(
    mut f: F,
    t0: T,
    t1: T,
    y0: &[T],
    cfg: &IntegratorConfig<T>,
    opts: &SolveOptions<'_, T>,
) -> Result<OdeSolution<T>>
where
    T: Real,
    F: FnMut(T, &[T], &mut [T]),
{
    cfg.validate()?;
    if !(t1 > t0) {
        return Err(Error::InvalidInput(format!("integration interval must satisfy t1 > t0 (got {t0} .. {t1})")));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState { t: t0.as_f64() });
    }
    if opts.sample_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("sample times must be ascending".into()));
    }

    let n = y0.len();
    let tab = Tableau::<T>::new();
    let mut stepper = Workspace::new(n);

    let mut times = Vec::with_capacity(opts.sample_times.len() + 2);
    let mut states = Vec::with_capacity(opts.sample_times.len() + 2);
    times.push(t0);
    states.push(y0.to_vec());
    // samples strictly inside (t0, t1); endpoints are handled explicitly
    let interior: Vec<T> = opts
        .sample_times
        .iter()
        .copied()
        .filter(|&s| s > t0 && s < t1)
        .collect();
    let mut next_sample = 0usize;

    let mut t = t0;
    let mut y = y0.to_vec();
    f(t, &y, &mut stepper.k[0]);

    let span = t1 - t0;
    let mut h = cfg.initial_step.min(cfg.max_step).min(span);
    let mut stats = StepStats::default();
    let mut err_old = T::lit(1e-4);
    let mut last_rejected = false;

    let safety = T::lit(0.9);
    let beta = T::lit(0.04);
    let expo = T::lit(0.2) - beta * T::lit(0.75);
    let fac_min = T::lit(0.2);
    let fac_max = T::lit(10.0);

    loop {
        if stats.total() >= cfg.max_steps {
            return Err(Error::StepLimitExceeded {
                t: t.as_f64(),
                steps: stats.total(),
            });
        }
        let remaining = t1 - t;
        let last = h >= remaining * (T::one() - T::lit(1e-12));
        if last {
            h = remaining;
        }
        if h <= T::epsilon() * T::lit(16.0) * t.abs().max(span) {
            return Err(Error::StepSizeUnderflow { t: t.as_f64(), h: h.as_f64() });
        }

        stepper.trial_step(&mut f, &tab, t, h, &y);
        let err = stepper.error_norm(&tab, h, &y, cfg);

        if !err.is_finite() {
            if stepper.y_new.iter().any(|v| !v.is_finite()) && h <= cfg.initial_step * T::lit(1e-6) {
                return Err(Error::NonFiniteState { t: t.as_f64() });
            }
            stats.rejected += 1;
            h = h * T::lit(0.1);
            last_rejected = true;
            continue;
        }

        if err <= T::one() {
            let t_new = if last { t1 } else { t + h };
            if stepper.y_new.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteState { t: t_new.as_f64() });
            }
            stats.accepted += 1;

            // dense output for samples inside (t, t_new]
            if next_sample < interior.len() && interior[next_sample] <= t_new {
                stepper.prepare_dense(&tab, h, &y);
                while next_sample < interior.len() && interior[next_sample] <= t_new {
                    let s = interior[next_sample];
                    let theta = ((s - t) / h).min(T::one());
                    times.push(s);
                    states.push(if s == t_new {
                        stepper.y_new.clone()
                    } else {
                        stepper.dense_at(theta, &y)
                    });
                    next_sample += 1;
                }
            }

            std::mem::swap(&mut y, &mut stepper.y_new);
            t = t_new;
            let mut clamped = false;
            if opts.clamp_nonnegative {
                for v in y.iter_mut() {
                    if *v < T::zero() && *v >= -cfg.abs_tol {
                        *v = T::zero();
                        clamped = true;
                    }
                }
            }
            if clamped {
                f(t, &y, &mut stepper.k[0]);
            } else {
                stepper.k.swap(0, 6);
            }

            if last {
                break;
            }

            let e = err.max(T::lit(1e-10));
            let fac11 = e.powf(expo);
            let mut fac = fac11 / err_old.powf(beta);
            fac = (fac / safety).max(T::one() / fac_max).min(T::one() / fac_min);
            let mut h_new = h / fac;
            if last_rejected {
                h_new = h_new.min(h);
            }
            err_old = err.max(T::lit(1e-4));
            last_rejected = false;
            h = h_new.min(cfg.max_step);
        } else {
            stats.rejected += 1;
            let fac11 = err.powf(expo);
            h = h / (fac11 / safety).min(T::one() / fac_min);
            last_rejected = true;
        }
    }

    // samples that round onto t1
    while next_sample < interior.len() {
        times.push(interior[next_sample]);
        states.push(y.clone());
        next_sample += 1;
    }
    times.push(t1);
    states.push(y.clone());

    Ok(OdeSolution {
        times,
        states,
        final_state: y,
        stats,
    })
}

/// Solves `M' = A(t) M`, `M(t0) = m0` on `[t0, t1]`.
///
/// With `m0 = I` the result is the fundamental matrix (evolution operator)
/// of the linear system `z' = A(t) z`.
pub fn integrate_matrix<T, A>(
    mut a: A,
    t0: T,
    t1: T,
    m0: &Matrix<T>,
    cfg: &IntegratorConfig<T>,
) -> Result<MatrixSolution<T>>
where
    T: Real,
    A: FnMut(T) -> Matrix<T>,
{
    let n = m0.dim();
    let sol = integrate(
        |t, y: &[T], dy: &mut [T]| {
            let at = a(t);
            matmul_into(&at, y, dy, n);
        },
        t0,
        t1,
        m0.as_slice(),
        cfg,
    )?;
    let end_matrix = Matrix::from_row_major(n, sol.final_state);
    if !end_matrix.is_finite() {
        return Err(Error::NonFiniteState { t: t1.as_f64() });
    }
    Ok(MatrixSolution {
        end_matrix,
        step_count: sol.stats.total(),
        stats: sol.stats,
    })
}

/// `out = a * m` with `m` and `out` row-major `n x n` buffers.
pub(crate) fn matmul_into<T: Real>(a: &Matrix<T>, m: &[T], out: &mut [T], n: usize) {
    for i in 0..n {
        for j in 0..n {
            let mut s = T::zero();
            for k in 0..n {
                s = s + a[(i, k)] * m[k * n + j];
            }
            out[i * n + j] = s;
        }
    }
}

struct Tableau<T> {
    c: [T; 7],
    a: [[T; 6]; 7],
    // b - b_hat
    e: [T; 7],
    d: [T; 7],
}

impl<T: Real> Tableau<T> {
    fn new() -> Self {
        let l = T::lit;
        let z = T::zero();
        Tableau {
            c: [z, l(0.2), l(0.3), l(0.8), l(8.0 / 9.0), T::one(), T::one()],
            a: [
                [z; 6],
                [l(0.2), z, z, z, z, z],
                [l(3.0 / 40.0), l(9.0 / 40.0), z, z, z, z],
                [l(44.0 / 45.0), l(-56.0 / 15.0), l(32.0 / 9.0), z, z, z],
                [
                    l(19372.0 / 6561.0),
                    l(-25360.0 / 2187.0),
                    l(64448.0 / 6561.0),
                    l(-212.0 / 729.0),
                    z,
                    z,
                ],
                [
                    l(9017.0 / 3168.0),
                    l(-355.0 / 33.0),
                    l(46732.0 / 5247.0),
                    l(49.0 / 176.0),
                    l(-5103.0 / 18656.0),
                    z,
                ],
                [
                    l(35.0 / 384.0),
                    z,
                    l(500.0 / 1113.0),
                    l(125.0 / 192.0),
                    l(-2187.0 / 6784.0),
                    l(11.0 / 84.0),
                ],
            ],
            e: [
                l(71.0 / 57600.0),
                z,
                l(-71.0 / 16695.0),
                l(71.0 / 1920.0),
                l(-17253.0 / 339200.0),
                l(22.0 / 525.0),
                l(-1.0 / 40.0),
            ],
            d: [
                l(-12715105075.0 / 11282082432.0),
                z,
                l(87487479700.0 / 32700410799.0),
                l(-10690763975.0 / 1880347072.0),
                l(701980252875.0 / 199316789632.0),
                l(-1453857185.0 / 822651844.0),
                l(69997945.0 / 29380423.0),
            ],
        }
    }
}

struct Workspace<T> {
    k: Vec<Vec<T>>,
    y_stage: Vec<T>,
    y_new: Vec<T>,
    dense: [Vec<T>; 4],
}

impl<T: Real> Workspace<T> {
    fn new(n: usize) -> Self {
        Workspace {
            k: vec![vec![T::zero(); n]; 7],
            y_stage: vec![T::zero(); n],
            y_new: vec![T::zero(); n],
            dense: [
                vec![T::zero(); n],
                vec![T::zero(); n],
                vec![T::zero(); n],
                vec![T::zero(); n],
            ],
        }
    }

    // Expects k[0] = f(t, y); fills k[1..7] and y_new (k[6] = f(t + h, y_new)).
    fn trial_step<F>(&mut self, f: &mut F, tab: &Tableau<T>, t: T, h: T, y: &[T])
    where
        F: FnMut(T, &[T], &mut [T]),
    {
        let n = y.len();
        for s in 1..7 {
            for i in 0..n {
                let mut acc = T::zero();
                for (j, kj) in self.k.iter().enumerate().take(s) {
                    let a = tab.a[s][j];
                    if a != T::zero() {
                        acc = acc + a * kj[i];
                    }
                }
                self.y_stage[i] = y[i] + h * acc;
            }
            if s == 6 {
                self.y_new.copy_from_slice(&self.y_stage);
            }
            f(t + tab.c[s] * h, &self.y_stage, &mut self.k[s]);
        }
    }

    fn error_norm(&self, tab: &Tableau<T>, h: T, y: &[T], cfg: &IntegratorConfig<T>) -> T {
        let n = y.len();
        if n == 0 {
            return T::zero();
        }
        let mut sum = T::zero();
        for i in 0..n {
            let mut e = T::zero();
            for (s, ks) in self.k.iter().enumerate() {
                if tab.e[s] != T::zero() {
                    e = e + tab.e[s] * ks[i];
                }
            }
            let e = h * e;
            let sc = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(self.y_new[i].abs());
            let r = e / sc;
            sum = sum + r * r;
        }
        (sum / T::from_usize_lossy(n)).sqrt()
    }

    fn prepare_dense(&mut self, tab: &Tableau<T>, h: T, y: &[T]) {
        for i in 0..y.len() {
            let ydiff = self.y_new[i] - y[i];
            let bspl = h * self.k[0][i] - ydiff;
            self.dense[0][i] = ydiff;
            self.dense[1][i] = bspl;
            self.dense[2][i] = ydiff - h * self.k[6][i] - bspl;
            let mut acc = T::zero();
            for (s, ks) in self.k.iter().enumerate() {
                if tab.d[s] != T::zero() {
                    acc = acc + tab.d[s] * ks[i];
                }
            }
            self.dense[3][i] = h * acc;
        }
    }

    fn dense_at(&self, theta: T, y: &[T]) -> Vec<T> {
        let one_m = T::one() - theta;
        (0..y.len())
            .map(|i| {
                y[i] + theta
                    * (self.dense[0][i]
                        + one_m * (self.dense[1][i] + theta * (self.dense[2][i] + one_m * self.dense[3][i])))
            })
            .collect()
    }
}
