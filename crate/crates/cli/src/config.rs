//! Run configuration: a sectioned TOML document.
//!
//! ```toml
//! [mu]            # source of target cells, cells / hour
//! mean = 0.1
//! amplitude = 0.05
//!
//! [beta]          # infection rate, per virion per hour
//! mean = 0.3
//! amplitude = 0.1
//!
//! [d]             # natural death rate, per hour
//! mean = 0.01
//! amplitude = 0.005
//!
//! [scalars]       # per-hour rates and dimensionless saturation constants
//! k = 0.2
//! delta = 0.1
//! p = 0.5
//! c = 0.1
//! c1 = 0.1
//! c2 = 0.1
//!
//! [integrator]    # optional
//! rel_tol = 1e-6
//! abs_tol = 1e-9
//!
//! [run]           # optional
//! angular_frequency = 0.2617993877991494   # rad / hour, period = 2 pi / angular_frequency
//! horizon = 4800.0                         # hours
//! initial_conditions = [[10.0, 1.0, 1.0, 1.0]]
//! output_dir = "out"
//! ```
//!
//! Every model key is required. Integrator and run keys fall back to the
//! defaults listed on [`RunConfig`].

use std::path::PathBuf;

use cmperiodic::analysis::{default_initial_conditions, DEFAULT_HORIZON_PERIODS};
use cmperiodic::{Error as ModelError, IntegratorConfig64, ModelParameters64, ScalarRates, SinusoidalCoefficient, State64};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default forcing frequency: one cycle per 24 hours.
pub const DEFAULT_ANGULAR_FREQUENCY: f64 = std::f64::consts::TAU / 24.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("`{key}`: {message}")]
    Validation { key: String, message: String },
}

impl ConfigError {
    fn validation(key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Validation {
            key: key.into(),
            message: message.into(),
        }
    }

    fn missing(key: &str) -> Self {
        Self::validation(key, "missing required key")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelParameters64,
    /// Settings for trajectory simulation. Defaults to
    /// [`IntegratorConfig64::simulation`].
    pub integrator: IntegratorConfig64,
    /// Settings for monodromy, reproduction number and orbit work. Defaults to
    /// [`IntegratorConfig64::spectral`].
    pub spectral: IntegratorConfig64,
    /// Defaults to three positive states.
    pub initial_conditions: Vec<State64>,
    /// Hours. Defaults to 200 forcing periods.
    pub horizon: f64,
    /// Directory used for outputs whose path is not given explicitly.
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    mu: Option<RawCoefficient>,
    beta: Option<RawCoefficient>,
    d: Option<RawCoefficient>,
    scalars: Option<RawScalars>,
    integrator: Option<RawIntegrator>,
    run: Option<RawRun>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoefficient {
    mean: Option<f64>,
    amplitude: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScalars {
    k: Option<f64>,
    delta: Option<f64>,
    p: Option<f64>,
    c: Option<f64>,
    c1: Option<f64>,
    c2: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntegrator {
    rel_tol: Option<f64>,
    abs_tol: Option<f64>,
    initial_step: Option<f64>,
    max_step: Option<f64>,
    max_steps: Option<u64>,
    spectral_rel_tol: Option<f64>,
    spectral_abs_tol: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    angular_frequency: Option<f64>,
    horizon: Option<f64>,
    initial_conditions: Option<Vec<[f64; 4]>>,
    output_dir: Option<String>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text.as_bytes()[..offset.min(text.len())].iter().filter(|&&b| b == b'\n').count() + 1
}

fn required(value: Option<f64>, key: &str) -> Result<f64, ConfigError> {
    value.ok_or_else(|| ConfigError::missing(key))
}

fn model_error(e: ModelError) -> ConfigError {
    match e {
        ModelError::InvalidParameter { key, reason } => {
            let key = match key.as_str() {
                "k" | "delta" | "p" | "c" | "c1" | "c2" => format!("scalars.{key}"),
                "angular_frequency" => "run.angular_frequency".to_string(),
                _ => key,
            };
            ConfigError::validation(key, reason)
        }
        other => ConfigError::validation("config", other.to_string()),
    }
}

fn coefficient(
    raw: &Option<RawCoefficient>,
    name: &str,
    omega: f64,
) -> Result<SinusoidalCoefficient<f64>, ConfigError> {
    let raw = raw.as_ref().ok_or_else(|| ConfigError::missing(name))?;
    let mean = required(raw.mean, &format!("{name}.mean"))?;
    let amplitude = required(raw.amplitude, &format!("{name}.amplitude"))?;
    let built = if name == "beta" && mean == 0.0 && amplitude == 0.0 {
        SinusoidalCoefficient::vanishing(omega)
    } else {
        SinusoidalCoefficient::new(mean, amplitude, omega)
    };
    built.map_err(|e| match e {
        ModelError::InvalidParameter { key, reason } => ConfigError::validation(
            if key == "angular_frequency" {
                "run.angular_frequency".to_string()
            } else {
                format!("{name}.{key}")
            },
            reason,
        ),
        other => model_error(other),
    })
}

/// Parses and fully validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let raw: RawDocument = toml::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.span().map_or(1, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    let run = raw.run.unwrap_or_default();

    let omega = run.angular_frequency.unwrap_or(DEFAULT_ANGULAR_FREQUENCY);
    let mu = coefficient(&raw.mu, "mu", omega)?;
    let beta = coefficient(&raw.beta, "beta", omega)?;
    let d = coefficient(&raw.d, "d", omega)?;
    let s = raw.scalars.ok_or_else(|| ConfigError::missing("scalars"))?;
    let rates = ScalarRates {
        k: required(s.k, "scalars.k")?,
        delta: required(s.delta, "scalars.delta")?,
        p: required(s.p, "scalars.p")?,
        c: required(s.c, "scalars.c")?,
        c1: required(s.c1, "scalars.c1")?,
        c2: required(s.c2, "scalars.c2")?,
    };
    let model = ModelParameters64::new(mu, beta, d, rates).map_err(model_error)?;

    let ri = raw.integrator.unwrap_or_default();
    let mut integrator = IntegratorConfig64::simulation();
    integrator.rel_tol = ri.rel_tol.unwrap_or(integrator.rel_tol);
    integrator.abs_tol = ri.abs_tol.unwrap_or(integrator.abs_tol);
    integrator.initial_step = ri.initial_step.unwrap_or(integrator.initial_step);
    integrator.max_step = ri.max_step.unwrap_or(integrator.max_step);
    if let Some(n) = ri.max_steps {
        integrator.max_steps = usize::try_from(n).map_err(|_| ConfigError::validation("integrator.max_steps", "too large"))?;
    }
    integrator.validate().map_err(model_error)?;
    let mut spectral = IntegratorConfig64::spectral();
    spectral.max_steps = integrator.max_steps;
    spectral.rel_tol = ri.spectral_rel_tol.unwrap_or(spectral.rel_tol);
    spectral.abs_tol = ri.spectral_abs_tol.unwrap_or(spectral.abs_tol);
    spectral.validate().map_err(|e| match e {
        ModelError::InvalidParameter { key, reason } => {
            ConfigError::validation(key.replace("integrator.", "integrator.spectral_"), reason)
        }
        other => model_error(other),
    })?;

    let horizon = run.horizon.unwrap_or(model.period() * DEFAULT_HORIZON_PERIODS as f64);
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(ConfigError::validation("run.horizon", format!("must be finite and > 0, got {horizon}")));
    }
    let initial_conditions = match run.initial_conditions {
        None => default_initial_conditions(),
        Some(list) => {
            if list.is_empty() {
                return Err(ConfigError::validation("run.initial_conditions", "must list at least one state"));
            }
            list.into_iter()
                .enumerate()
                .map(|(i, a)| {
                    let s = State64::from_array(a);
                    if s.is_finite() && s.is_nonnegative() {
                        Ok(s)
                    } else {
                        Err(ConfigError::validation(
                            format!("run.initial_conditions[{i}]"),
                            format!("components must be finite and >= 0, got {a:?}"),
                        ))
                    }
                })
                .collect::<Result<_, _>>()?
        }
    };

    Ok(RunConfig {
        model,
        integrator,
        spectral,
        initial_conditions,
        horizon,
        output_dir: run.output_dir.map(PathBuf::from),
    })
}

/// Serializes every field explicitly, so that parsing the result reproduces
/// `cfg` exactly.
pub fn to_toml(cfg: &RunConfig) -> String {
    let m = &cfg.model;
    let coef = |c: &SinusoidalCoefficient<f64>| {
        Some(RawCoefficient {
            mean: Some(c.mean()),
            amplitude: Some(c.amplitude()),
        })
    };
    let r = m.rates();
    let doc = RawDocument {
        mu: coef(m.mu()),
        beta: coef(m.beta()),
        d: coef(m.d()),
        scalars: Some(RawScalars {
            k: Some(r.k),
            delta: Some(r.delta),
            p: Some(r.p),
            c: Some(r.c),
            c1: Some(r.c1),
            c2: Some(r.c2),
        }),
        integrator: Some(RawIntegrator {
            rel_tol: Some(cfg.integrator.rel_tol),
            abs_tol: Some(cfg.integrator.abs_tol),
            initial_step: Some(cfg.integrator.initial_step),
            max_step: Some(cfg.integrator.max_step),
            max_steps: Some(cfg.integrator.max_steps as u64),
            spectral_rel_tol: Some(cfg.spectral.rel_tol),
            spectral_abs_tol: Some(cfg.spectral.abs_tol),
        }),
        run: Some(RawRun {
            angular_frequency: Some(m.angular_frequency()),
            horizon: Some(cfg.horizon),
            initial_conditions: Some(cfg.initial_conditions.iter().map(|s| s.to_array()).collect()),
            output_dir: cfg.output_dir.as_ref().map(|p| p.to_string_lossy().into_owned()),
        }),
    };
    toml::to_string(&doc).expect("configuration serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG2: &str = "
[mu]
mean = 0.1
amplitude = 0.05
[beta]
mean = 0.3
amplitude = 0.1
[d]
mean = 0.01
amplitude = 0.005
[scalars]
k = 0.2
delta = 0.1
p = 0.5
c = 0.1
c1 = 0.1
c2 = 0.1
";

    #[test]
    fn baseline_constants_are_read_exactly() {
        let cfg = parse_config(FIG2).unwrap();
        let m = &cfg.model;
        assert_eq!((m.mu().mean(), m.mu().amplitude()), (0.1, 0.05));
        assert_eq!((m.beta().mean(), m.beta().amplitude()), (0.3, 0.1));
        assert_eq!((m.d().mean(), m.d().amplitude()), (0.01, 0.005));
        let r = m.rates();
        assert_eq!((r.k, r.delta, r.p, r.c, r.c1, r.c2), (0.2, 0.1, 0.5, 0.1, 0.1, 0.1));
        assert_eq!(m.period(), 24.0);
        assert_eq!(cfg.horizon, 4800.0);
        assert_eq!(cfg.initial_conditions.len(), 3);
    }

    #[test]
    fn amplitude_breach_names_the_key() {
        let text = FIG2.replace("amplitude = 0.005", "amplitude = 0.02");
        match parse_config(&text) {
            Err(ConfigError::Validation { key, .. }) => assert_eq!(key, "d.amplitude"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn scalar_breach_names_the_key() {
        let text = FIG2.replace("k = 0.2", "k = -0.2");
        match parse_config(&text) {
            Err(ConfigError::Validation { key, .. }) => assert_eq!(key, "scalars.k"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_document_is_rejected() {
        assert!(matches!(parse_config(""), Err(ConfigError::Validation { key, .. }) if key == "mu"));
    }

    #[test]
    fn missing_key_is_named() {
        let text = FIG2.replace("c2 = 0.1\n", "");
        assert!(matches!(parse_config(&text), Err(ConfigError::Validation { key, .. }) if key == "scalars.c2"));
    }

    #[test]
    fn syntax_error_reports_line() {
        let text = FIG2.replace("delta = 0.1", "delta = = 0.1");
        match parse_config(&text) {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 13),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = format!("{FIG2}extra = 1.0\n");
        assert!(matches!(parse_config(&text), Err(ConfigError::Parse { .. })));
    }

    #[test]
    fn vanishing_transmission_is_accepted() {
        let text = FIG2.replace("mean = 0.3\namplitude = 0.1", "mean = 0.0\namplitude = 0.0");
        let cfg = parse_config(&text).unwrap();
        assert!(!cfg.model.has_infection());
    }

    #[test]
    fn round_trip_is_identical() {
        let text = format!(
            "{FIG2}[integrator]\nrel_tol = 1e-7\n[run]\nhorizon = 240\ninitial_conditions = [[10, 1, 1, 1], [0.3, 0.1, 0.7, 1e-3]]\noutput_dir = \"out\"\n"
        );
        let cfg = parse_config(&text).unwrap();
        let again = parse_config(&to_toml(&cfg)).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn negative_initial_condition_is_rejected() {
        let text = format!("{FIG2}[run]\ninitial_conditions = [[1, 1, 1, 1], [1, -1, 1, 1]]\n");
        assert!(
            matches!(parse_config(&text), Err(ConfigError::Validation { key, .. }) if key == "run.initial_conditions[1]")
        );
    }
}
