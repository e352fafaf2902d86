//! The four-compartment within-host model with Crowley–Martin incidence and
//! sinusoidally forced birth, infection and death rates.
//!
//! Compartments are target cells `T`, exposed (latently infected) cells `E`,
//! productively infected cells `I` and free virions `V`:
//!
//! ```text
//! T' = mu(t) - inc - d(t) T
//! E' = inc - (k + d(t)) E
//! I' = k E - (delta + d(t)) I
//! V' = p I - c V
//! inc = beta(t) T V / ((1 + c1 T)(1 + c2 V))
//! ```
//!
//! Time is in hours, rates are per hour.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use crate::error::{Error, Result};
use crate::integrate::{integrate_with, IntegratorConfig, SolveOptions};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// A rate of the form `mean + amplitude * sin(angular_frequency * t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinusoidalCoefficient<T> {
    mean: T,
    amplitude: T,
    angular_frequency: T,
}

impl<T: Real> SinusoidalCoefficient<T> {
    /// Validated constructor: `0 <= amplitude < mean`, `angular_frequency > 0`.
    pub fn new(mean: T, amplitude: T, angular_frequency: T) -> Result<Self> {
        Self::validated(mean, amplitude, angular_frequency, "")
    }

    /// A rate that vanishes identically. Only accepted for the infection rate.
    pub fn vanishing(angular_frequency: T) -> Result<Self> {
        check_frequency(angular_frequency, "angular_frequency")?;
        Ok(SinusoidalCoefficient {
            mean: T::zero(),
            amplitude: T::zero(),
            angular_frequency,
        })
    }

    /// Constant rate with the given forcing frequency (amplitude zero).
    pub fn constant(mean: T, angular_frequency: T) -> Result<Self> {
        Self::new(mean, T::zero(), angular_frequency)
    }

    fn validated(mean: T, amplitude: T, angular_frequency: T, prefix: &str) -> Result<Self> {
        let key = |field: &str| {
            if prefix.is_empty() {
                field.to_string()
            } else {
                format!("{prefix}.{field}")
            }
        };
        if !(mean.is_finite() && mean > T::zero()) {
            return Err(Error::invalid(key("mean"), format!("must be finite and > 0, got {mean}")));
        }
        if !(amplitude.is_finite() && amplitude >= T::zero()) {
            return Err(Error::invalid(
                key("amplitude"),
                format!("must be finite and >= 0, got {amplitude}"),
            ));
        }
        if amplitude >= mean {
            return Err(Error::invalid(
                key("amplitude"),
                format!("must be < mean ({mean}) so the rate stays positive, got {amplitude}"),
            ));
        }
        check_frequency(angular_frequency, &key("angular_frequency"))?;
        Ok(SinusoidalCoefficient {
            mean,
            amplitude,
            angular_frequency,
        })
    }

    #[inline]
    pub fn mean(&self) -> T {
        self.mean
    }

    #[inline]
    pub fn amplitude(&self) -> T {
        self.amplitude
    }

    #[inline]
    pub fn angular_frequency(&self) -> T {
        self.angular_frequency
    }

    /// Value of the rate at time `t` (hours).
    #[inline]
    pub fn at(&self, t: T) -> T {
        self.mean + self.amplitude * (self.angular_frequency * t).sin()
    }

    pub fn period(&self) -> T {
        T::TAU() / self.angular_frequency
    }

    pub fn is_vanishing(&self) -> bool {
        self.mean == T::zero() && self.amplitude == T::zero()
    }

    pub fn is_constant(&self) -> bool {
        self.amplitude == T::zero()
    }

    fn with_mean(self, mean: T) -> Self {
        SinusoidalCoefficient { mean, ..self }
    }

    fn with_amplitude(self, amplitude: T) -> Self {
        SinusoidalCoefficient { amplitude, ..self }
    }
}

fn check_frequency<T: Real>(w: T, key: &str) -> Result<()> {
    if !(w.is_finite() && w > T::zero()) || !(T::TAU() / w).is_finite() {
        return Err(Error::invalid(key, format!("must be finite and > 0, got {w}")));
    }
    Ok(())
}

/// Time-invariant rates of the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarRates<T> {
    /// Transition rate from exposed to infectious.
    pub k: T,
    /// Disease-induced death rate of infectious cells.
    pub delta: T,
    /// Virion production rate.
    pub p: T,
    /// Virion clearance rate.
    pub c: T,
    /// Saturation in target cells.
    pub c1: T,
    /// Saturation in virions.
    pub c2: T,
}

/// Complete, validated parameter set. Immutable after construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParameters<T> {
    mu: SinusoidalCoefficient<T>,
    beta: SinusoidalCoefficient<T>,
    d: SinusoidalCoefficient<T>,
    rates: ScalarRates<T>,
    period: T,
}

/// Addresses one scalar of a [`ModelParameters`] by its configuration key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKey {
    MuMean,
    MuAmplitude,
    BetaMean,
    BetaAmplitude,
    DMean,
    DAmplitude,
    K,
    Delta,
    P,
    C,
    C1,
    C2,
}

impl ParamKey {
    pub const ALL: [ParamKey; 12] = [
        ParamKey::MuMean,
        ParamKey::MuAmplitude,
        ParamKey::BetaMean,
        ParamKey::BetaAmplitude,
        ParamKey::DMean,
        ParamKey::DAmplitude,
        ParamKey::K,
        ParamKey::Delta,
        ParamKey::P,
        ParamKey::C,
        ParamKey::C1,
        ParamKey::C2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamKey::MuMean => "mu.mean",
            ParamKey::MuAmplitude => "mu.amplitude",
            ParamKey::BetaMean => "beta.mean",
            ParamKey::BetaAmplitude => "beta.amplitude",
            ParamKey::DMean => "d.mean",
            ParamKey::DAmplitude => "d.amplitude",
            ParamKey::K => "k",
            ParamKey::Delta => "delta",
            ParamKey::P => "p",
            ParamKey::C => "c",
            ParamKey::C1 => "c1",
            ParamKey::C2 => "c2",
        }
    }

    pub fn parse(name: &str) -> Option<ParamKey> {
        let trimmed = name.trim();
        let trimmed = trimmed.strip_prefix("scalars.").unwrap_or(trimmed);
        ParamKey::ALL.into_iter().find(|k| k.name() == trimmed)
    }
}

impl<T: Real> ModelParameters<T> {
    /// Validates every invariant; errors name the offending key.
    pub fn new(
        mu: SinusoidalCoefficient<T>,
        beta: SinusoidalCoefficient<T>,
        d: SinusoidalCoefficient<T>,
        rates: ScalarRates<T>,
    ) -> Result<Self> {
        // Re-validate so hand-assembled coefficients get key-qualified errors.
        let mu = SinusoidalCoefficient::validated(mu.mean, mu.amplitude, mu.angular_frequency, "mu")?;
        let d = SinusoidalCoefficient::validated(d.mean, d.amplitude, d.angular_frequency, "d")?;
        let beta = if beta.is_vanishing() {
            check_frequency(beta.angular_frequency, "beta.angular_frequency")?;
            beta
        } else {
            SinusoidalCoefficient::validated(beta.mean, beta.amplitude, beta.angular_frequency, "beta")?
        };
        for (key, w) in [
            ("beta.angular_frequency", beta.angular_frequency),
            ("d.angular_frequency", d.angular_frequency),
        ] {
            if w != mu.angular_frequency {
                return Err(Error::invalid(
                    key,
                    format!(
                        "all periodic rates must share one angular frequency (mu has {}, got {w})",
                        mu.angular_frequency
                    ),
                ));
            }
        }
        let positive = [("k", rates.k), ("delta", rates.delta), ("p", rates.p), ("c", rates.c)];
        for (key, v) in positive {
            if !(v.is_finite() && v > T::zero()) {
                return Err(Error::invalid(key, format!("must be finite and > 0, got {v}")));
            }
        }
        for (key, v) in [("c1", rates.c1), ("c2", rates.c2)] {
            if !(v.is_finite() && v >= T::zero()) {
                return Err(Error::invalid(key, format!("must be finite and >= 0, got {v}")));
            }
        }
        Ok(ModelParameters {
            mu,
            beta,
            d,
            rates,
            period: mu.period(),
        })
    }

    #[inline]
    pub fn mu(&self) -> &SinusoidalCoefficient<T> {
        &self.mu
    }

    #[inline]
    pub fn beta(&self) -> &SinusoidalCoefficient<T> {
        &self.beta
    }

    #[inline]
    pub fn d(&self) -> &SinusoidalCoefficient<T> {
        &self.d
    }

    #[inline]
    pub fn rates(&self) -> &ScalarRates<T> {
        &self.rates
    }

    /// Common forcing period `2 pi / omega` in hours.
    #[inline]
    pub fn period(&self) -> T {
        self.period
    }

    #[inline]
    pub fn angular_frequency(&self) -> T {
        self.mu.angular_frequency
    }

    /// True when every periodic rate has zero amplitude.
    pub fn is_autonomous(&self) -> bool {
        self.mu.is_constant() && self.beta.is_constant() && self.d.is_constant()
    }

    pub fn has_infection(&self) -> bool {
        !self.beta.is_vanishing()
    }

    pub fn get(&self, key: ParamKey) -> T {
        match key {
            ParamKey::MuMean => self.mu.mean,
            ParamKey::MuAmplitude => self.mu.amplitude,
            ParamKey::BetaMean => self.beta.mean,
            ParamKey::BetaAmplitude => self.beta.amplitude,
            ParamKey::DMean => self.d.mean,
            ParamKey::DAmplitude => self.d.amplitude,
            ParamKey::K => self.rates.k,
            ParamKey::Delta => self.rates.delta,
            ParamKey::P => self.rates.p,
            ParamKey::C => self.rates.c,
            ParamKey::C1 => self.rates.c1,
            ParamKey::C2 => self.rates.c2,
        }
    }

    /// Copy with one scalar replaced, re-validated.
    pub fn with(&self, key: ParamKey, value: T) -> Result<Self> {
        let (mut mu, mut beta, mut d, mut rates) = (self.mu, self.beta, self.d, self.rates);
        match key {
            ParamKey::MuMean => mu = mu.with_mean(value),
            ParamKey::MuAmplitude => mu = mu.with_amplitude(value),
            ParamKey::BetaMean => beta = beta.with_mean(value),
            ParamKey::BetaAmplitude => beta = beta.with_amplitude(value),
            ParamKey::DMean => d = d.with_mean(value),
            ParamKey::DAmplitude => d = d.with_amplitude(value),
            ParamKey::K => rates.k = value,
            ParamKey::Delta => rates.delta = value,
            ParamKey::P => rates.p = value,
            ParamKey::C => rates.c = value,
            ParamKey::C1 => rates.c1 = value,
            ParamKey::C2 => rates.c2 = value,
        }
        Self::new(mu, beta, d, rates)
    }

    /// Same model with all three amplitudes set to zero.
    pub fn time_averaged(&self) -> Self {
        ModelParameters {
            mu: self.mu.with_amplitude(T::zero()),
            beta: self.beta.with_amplitude(T::zero()),
            d: self.d.with_amplitude(T::zero()),
            ..*self
        }
    }

    /// Same model with `beta` (mean and amplitude) multiplied by `factor > 0`.
    pub fn with_beta_scaled(&self, factor: T) -> Result<Self> {
        let beta = SinusoidalCoefficient {
            mean: self.beta.mean * factor,
            amplitude: self.beta.amplitude * factor,
            angular_frequency: self.beta.angular_frequency,
        };
        Self::new(self.mu, beta, self.d, self.rates)
    }

    /// Identifier of this exact parameter set (bitwise over all fields).
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for c in [&self.mu, &self.beta, &self.d] {
            c.mean.as_f64().to_bits().hash(&mut h);
            c.amplitude.as_f64().to_bits().hash(&mut h);
            c.angular_frequency.as_f64().to_bits().hash(&mut h);
        }
        let r = &self.rates;
        for v in [r.k, r.delta, r.p, r.c, r.c1, r.c2] {
            v.as_f64().to_bits().hash(&mut h);
        }
        h.finish()
    }
}

/// Model state `(T, E, I, V)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State<T> {
    pub target: T,
    pub exposed: T,
    pub infectious: T,
    pub virus: T,
}

impl<T: Real> State<T> {
    pub fn new(target: T, exposed: T, infectious: T, virus: T) -> Self {
        State {
            target,
            exposed,
            infectious,
            virus,
        }
    }

    pub fn zero() -> Self {
        Self::from_array([T::zero(); 4])
    }

    #[inline]
    pub fn to_array(self) -> [T; 4] {
        [self.target, self.exposed, self.infectious, self.virus]
    }

    #[inline]
    pub fn from_array(a: [T; 4]) -> Self {
        State::new(a[0], a[1], a[2], a[3])
    }

    /// Panics if `s.len() < 4`.
    pub fn from_slice(s: &[T]) -> Self {
        State::new(s[0], s[1], s[2], s[3])
    }

    pub fn is_nonnegative(&self) -> bool {
        self.to_array().iter().all(|&v| v >= T::zero())
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.to_array().iter().all(|&v| v > T::zero())
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// `max(E, I, V)`.
    pub fn infection_max(&self) -> T {
        self.exposed.max(self.infectious).max(self.virus)
    }

    /// `min(E, I, V)`.
    pub fn infection_min(&self) -> T {
        self.exposed.min(self.infectious).min(self.virus)
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .fold(T::zero(), |m, (&a, b)| m.max((a - b).abs()))
    }
}

/// Sampled solution of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<State<T>>,
    /// [`ModelParameters::fingerprint`] of the generating parameters.
    pub params_hash: u64,
}

impl<T: Real> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<(T, State<T>)> {
        Some((*self.times.last()?, *self.states.last()?))
    }

    pub fn iter(&self) -> impl Iterator<Item = (T, &State<T>)> + '_ {
        self.times.iter().copied().zip(self.states.iter())
    }
}

/// Crowley–Martin incidence `beta T V / ((1 + c1 T)(1 + c2 V))`.
#[inline]
pub fn incidence<T: Real>(beta_t: T, target: T, virus: T, c1: T, c2: T) -> T {
    beta_t * target * virus / ((T::one() + c1 * target) * (T::one() + c2 * virus))
}

/// Time derivative of the state.
pub fn rhs<T: Real>(t: T, state: &State<T>, params: &ModelParameters<T>) -> [T; 4] {
    let mut out = [T::zero(); 4];
    rhs_into(t, &state.to_array(), &mut out, params);
    out
}

/// Slice form of [`rhs`] used by the integrators. `y` and `dy` hold `(T, E, I, V)`.
#[inline]
pub fn rhs_into<T: Real>(t: T, y: &[T], dy: &mut [T], params: &ModelParameters<T>) {
    let r = &params.rates;
    let (tc, e, i, v) = (y[0], y[1], y[2], y[3]);
    let d = params.d.at(t);
    let inc = incidence(params.beta.at(t), tc, v, r.c1, r.c2);
    dy[0] = params.mu.at(t) - inc - d * tc;
    dy[1] = inc - (r.k + d) * e;
    dy[2] = r.k * e - (r.delta + d) * i;
    dy[3] = r.p * i - r.c * v;
}

/// Analytic Jacobian of [`rhs`] with respect to `(T, E, I, V)`.
pub fn jacobian<T: Real>(t: T, state: &State<T>, params: &ModelParameters<T>) -> Matrix<T> {
    let mut m = Matrix::zeros(4);
    jacobian_into(t, &state.to_array(), &mut m, params);
    m
}

pub(crate) fn jacobian_into<T: Real>(t: T, y: &[T], m: &mut Matrix<T>, params: &ModelParameters<T>) {
    let r = &params.rates;
    let (tc, v) = (y[0], y[3]);
    let d = params.d.at(t);
    let beta = params.beta.at(t);
    let one = T::one();
    let dt_den = one + r.c1 * tc;
    let dv_den = one + r.c2 * v;
    let dinc_dt = beta * v / (dt_den * dt_den * dv_den);
    let dinc_dv = beta * tc / (dt_den * dv_den * dv_den);
    let z = T::zero();
    let rows = [
        [-dinc_dt - d, z, z, -dinc_dv],
        [dinc_dt, -(r.k + d), z, dinc_dv],
        [z, r.k, -(r.delta + d), z],
        [z, z, r.p, -r.c],
    ];
    for (i, row) in rows.iter().enumerate() {
        for (j, &val) in row.iter().enumerate() {
            m[(i, j)] = val;
        }
    }
}

/// Integrates the model from `x0` at `t = 0` to `t_end`, sampling every
/// `grid_step` hours (plus `t_end` itself).
///
/// Components in `[-abs_tol, 0)` are clamped to zero after each accepted
/// step; anything more negative is left in place so that
/// [`crate::analysis::monitor_invariants`] reports it.
pub fn simulate<T: Real>(
    params: &ModelParameters<T>,
    x0: &State<T>,
    t_end: T,
    grid_step: T,
    cfg: &IntegratorConfig<T>,
) -> Result<Trajectory<T>> {
    if !(grid_step > T::zero()) {
        return Err(Error::InvalidInput(format!("grid step must be > 0, got {grid_step}")));
    }
    let grid = uniform_grid(T::zero(), t_end, grid_step);
    simulate_on(params, x0, t_end, &grid, cfg)
}

/// As [`simulate`] but with explicit sample times inside `[0, t_end]`.
pub fn simulate_on<T: Real>(
    params: &ModelParameters<T>,
    x0: &State<T>,
    t_end: T,
    sample_times: &[T],
    cfg: &IntegratorConfig<T>,
) -> Result<Trajectory<T>> {
    if !x0.is_finite() {
        return Err(Error::InvalidInput("initial state must be finite".into()));
    }
    let opts = SolveOptions {
        sample_times,
        clamp_nonnegative: true,
    };
    let sol = integrate_with(
        |t, y: &[T], dy: &mut [T]| rhs_into(t, y, dy, params),
        T::zero(),
        t_end,
        &x0.to_array(),
        cfg,
        &opts,
    )?;
    Ok(Trajectory {
        times: sol.times,
        states: sol.states.iter().map(|s| State::from_slice(s)).collect(),
        params_hash: params.fingerprint(),
    })
}

/// `t0, t0 + step, ...` strictly below `t1`, followed by `t1`.
pub fn uniform_grid<T: Real>(t0: T, t1: T, step: T) -> Vec<T> {
    let span = t1 - t0;
    if !(span > T::zero()) {
        return vec![t0];
    }
    let n = (span / step).floor().to_usize().unwrap_or(0);
    let mut grid: Vec<T> = (0..=n).map(|i| t0 + step * T::from_usize_lossy(i)).collect();
    // drop points that coincide with t1 up to rounding
    let eps = step * T::lit(1e-9);
    while grid.last().is_some_and(|&t| t > t1 - eps) {
        grid.pop();
    }
    grid.push(t1);
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const OMEGA: f64 = std::f64::consts::TAU / 24.0;

    fn baseline() -> ModelParameters<f64> {
        ModelParameters::new(
            SinusoidalCoefficient::new(0.1, 0.05, OMEGA).unwrap(),
            SinusoidalCoefficient::new(0.3, 0.1, OMEGA).unwrap(),
            SinusoidalCoefficient::new(0.01, 0.005, OMEGA).unwrap(),
            ScalarRates {
                k: 0.2,
                delta: 0.09,
                p: 0.5,
                c: 0.18,
                c1: 0.1,
                c2: 0.1,
            },
        )
        .unwrap()
    }

    #[test]
    fn coefficient_values() {
        let flat = SinusoidalCoefficient::new(0.1, 0.0, 1.3).unwrap();
        assert_eq!(flat.at(5.0), 0.1);
        let c = SinusoidalCoefficient::new(0.1, 0.05, OMEGA).unwrap();
        assert!((c.at(6.0) - 0.15).abs() < 1e-15);
        assert!((c.at(24.0) - 0.1).abs() < 1e-15);
        assert!((c.period() - 24.0).abs() < 1e-12);
    }

    #[test]
    fn coefficient_rejects_bad_amplitude() {
        let err = SinusoidalCoefficient::new(0.1, 0.1, OMEGA).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter { ref key, .. } if key == "amplitude"));
        assert!(SinusoidalCoefficient::new(0.1, -0.01, OMEGA).is_err());
        assert!(SinusoidalCoefficient::new(0.0, 0.0, OMEGA).is_err());
        assert!(SinusoidalCoefficient::new(0.1, 0.0, 0.0).is_err());
    }

    #[test]
    fn params_reject_mismatched_frequency_and_name_key() {
        let p = baseline();
        let bad_d = SinusoidalCoefficient::new(0.01, 0.005, OMEGA * 2.0).unwrap();
        let err = ModelParameters::new(*p.mu(), *p.beta(), bad_d, *p.rates()).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter { ref key, .. } if key == "d.angular_frequency"));

        let err = p.with(ParamKey::DAmplitude, 0.02).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter { ref key, .. } if key == "d.amplitude"));
        let err = p.with(ParamKey::C, 0.0).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter { ref key, .. } if key == "c"));
        assert!(p.with(ParamKey::C1, 0.0).is_ok());
    }

    #[test]
    fn vanishing_beta_only() {
        let p = baseline();
        let zero = SinusoidalCoefficient::vanishing(OMEGA).unwrap();
        let ok = ModelParameters::new(*p.mu(), zero, *p.d(), *p.rates()).unwrap();
        assert!(!ok.has_infection());
        let err = ModelParameters::new(zero, *p.beta(), *p.d(), *p.rates()).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter { ref key, .. } if key == "mu.mean"));
    }

    #[test]
    fn incidence_values() {
        assert_eq!(incidence(0.3, 10.0, 0.0, 0.1, 0.1), 0.0);
        assert!((incidence(0.3f64, 2.0, 1.0, 0.0, 0.0) - 0.6).abs() < 1e-15);
        assert!((incidence(0.3f64, 10.0, 5.0, 0.1, 0.1) - 5.0).abs() < 1e-14);
    }

    #[test]
    fn rhs_at_virus_free_equilibrium_value() {
        let d = rhs(0.0, &State::new(10.0, 0.0, 0.0, 0.0), &baseline());
        assert!(d.iter().all(|v| v.abs() < 1e-15), "{d:?}");
    }

    #[test]
    fn rhs_origin_is_inflow() {
        let p = baseline();
        for t in [0.0, 3.0, 17.5] {
            let d = rhs(t, &State::zero(), &p);
            assert_eq!(d, [p.mu().at(t), 0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn rhs_matches_hand_evaluation() {
        // independent scalar evaluation at t = 0: mu = 0.1, beta = 0.3, d = 0.01
        let (mu, beta, d) = (0.1, 0.3, 0.01);
        let (t, e, i, v) = (10.0, 1.0, 1.0, 1.0);
        let inc = beta * t * v / ((1.0 + 0.1 * t) * (1.0 + 0.1 * v));
        let expected = [
            mu - inc - d * t,
            inc - (0.2 + d) * e,
            0.2 * e - (0.09 + d) * i,
            0.5 * i - 0.18 * v,
        ];
        let got = rhs(0.0, &State::new(t, e, i, v), &baseline());
        for (g, x) in got.iter().zip(expected) {
            assert!((g - x).abs() < 1e-15);
        }
        // inc = 3 / 2.2
        assert!((expected[1] - (3.0 / 2.2 - 0.21)).abs() < 1e-14);
    }

    #[test]
    fn jacobian_structure_at_virus_free_state() {
        let p = baseline();
        let t = 5.0;
        let j = jacobian(t, &State::new(7.0, 0.0, 0.0, 0.0), &p);
        let d = p.d().at(t);
        let b = p.beta().at(t);
        assert!((j[(0, 3)] + b * 7.0 / 1.7).abs() < 1e-14);
        assert!((j[(0, 0)] + d).abs() < 1e-15);
        assert!((j[(1, 1)] + 0.2 + d).abs() < 1e-15);
        assert!((j[(2, 2)] + 0.09 + d).abs() < 1e-15);
        assert!((j[(3, 3)] + 0.18).abs() < 1e-15);
        // E, I, V rows do not depend on T on the virus-free face
        for i in 1..4 {
            assert_eq!(j[(i, 0)], 0.0);
        }
    }

    #[test]
    fn jacobian_mass_action_limit() {
        let p = baseline().with(ParamKey::C1, 0.0).unwrap().with(ParamKey::C2, 0.0).unwrap();
        let s = State::new(4.0, 1.0, 2.0, 3.0);
        let j = jacobian(2.0, &s, &p);
        let b = p.beta().at(2.0);
        assert!((j[(1, 0)] - b * 3.0).abs() < 1e-14);
        assert!((j[(1, 3)] - b * 4.0).abs() < 1e-14);
    }

    fn finite_difference(t: f64, s: &State<f64>, p: &ModelParameters<f64>) -> Matrix<f64> {
        let h = 1e-6;
        let mut m = Matrix::zeros(4);
        for j in 0..4 {
            let mut up = s.to_array();
            let mut dn = s.to_array();
            up[j] += h;
            dn[j] -= h;
            let fu = rhs(t, &State::from_array(up), p);
            let fd = rhs(t, &State::from_array(dn), p);
            for i in 0..4 {
                m[(i, j)] = (fu[i] - fd[i]) / (2.0 * h);
            }
        }
        m
    }

    proptest! {
        #[test]
        fn jacobian_matches_central_differences(
            t in 0.0f64..48.0,
            tc in 0.1f64..30.0, e in 0.0f64..5.0, i in 0.0f64..5.0, v in 0.1f64..20.0,
        ) {
            let p = baseline();
            let s = State::new(tc, e, i, v);
            let exact = jacobian(t, &s, &p);
            let fd = finite_difference(t, &s, &p);
            for r in 0..4 {
                for c in 0..4 {
                    let (a, b) = (exact[(r, c)], fd[(r, c)]);
                    let scale = a.abs().max(1e-3);
                    prop_assert!((a - b).abs() / scale < 1e-5, "({r},{c}): {a} vs {b}");
                }
            }
        }

        #[test]
        fn coefficient_is_periodic(t in -100.0f64..100.0, mean in 0.01f64..1.0, frac in 0.0f64..0.99) {
            let c = SinusoidalCoefficient::new(mean, mean * frac, OMEGA).unwrap();
            prop_assert!((c.at(t + c.period()) - c.at(t)).abs() < 1e-14);
            prop_assert!(c.at(t) > 0.0);
        }

        #[test]
        fn incidence_monotone_and_saturating(
            b in 0.01f64..1.0, t in 0.0f64..100.0, v in 0.0f64..100.0,
            dt in 0.0f64..10.0, dv in 0.0f64..10.0, c1 in 0.01f64..1.0, c2 in 0.01f64..1.0,
        ) {
            let base = incidence(b, t, v, c1, c2);
            prop_assert!(base >= 0.0 && base <= b * t * v + 1e-12);
            prop_assert!(incidence(b, t + dt, v, c1, c2) >= base - 1e-12);
            prop_assert!(incidence(b, t, v + dv, c1, c2) >= base - 1e-12);
            prop_assert!(base <= b / (c1 * c2));
        }

        #[test]
        fn virus_free_face_is_invariant(t in 0.0f64..48.0, tc in 0.0f64..50.0) {
            let d = rhs(t, &State::new(tc, 0.0, 0.0, 0.0), &baseline());
            prop_assert_eq!(&d[1..], &[0.0, 0.0, 0.0]);
        }

        #[test]
        fn total_cell_balance(t in 0.0f64..48.0, tc in 0.0f64..50.0, e in 0.0f64..5.0, i in 0.0f64..5.0, v in 0.0f64..20.0) {
            let p = baseline();
            let d = rhs(t, &State::new(tc, e, i, v), &p);
            let expected = p.mu().at(t) - p.d().at(t) * (tc + e + i) - p.rates().delta * i;
            prop_assert!((d[0] + d[1] + d[2] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_grid_includes_end() {
        let g = uniform_grid(0.0, 1.0, 0.3);
        assert_eq!(g.len(), 5);
        assert_eq!(*g.last().unwrap(), 1.0);
        let g = uniform_grid(0.0, 1.0, 0.25);
        assert_eq!(g, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn fingerprint_distinguishes_params() {
        let p = baseline();
        assert_eq!(p.fingerprint(), baseline().fingerprint());
        assert_ne!(p.fingerprint(), p.with(ParamKey::K, 0.21).unwrap().fingerprint());
    }
}
