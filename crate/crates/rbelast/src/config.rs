//! Problem configuration files: TOML with [problem], [greedy], [scm] and
//! [online] sections. Unknown keys are rejected so typos fail loudly.

use crate::cert::ScmConfig;
use crate::greedy::{GreedyConfig, Indicator};
use crate::problems::{ProblemName, ProblemOptions, Resolution};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("TOML parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown key '{0}'")]
    UnknownKey(String),
    #[error("missing required key '{0}'")]
    MissingKey(String),
    #[error("value out of range for '{key}': {reason}")]
    OutOfRange { key: String, reason: String },
    #[error("bad value for '{0}'")]
    BadValue(String),
}

/// Parsed configuration: which problem to build, with which knobs.
#[derive(Clone, Debug)]
pub struct ProblemConfig {
    pub name: ProblemName,
    pub options: ProblemOptions,
    pub greedy: GreedyConfig,
    pub scm: ScmConfig,
    pub scm_train: usize,
    pub scm_seed: u64,
    pub online_default_n: Option<usize>,
    /// The raw text, preserved verbatim inside model archives.
    pub text: String,
}

pub fn parse_problem_config(text: &str) -> Result<ProblemConfig, ConfigError> {
    let value: toml::Value = text.parse()?;
    let table = value
        .as_table()
        .ok_or_else(|| ConfigError::BadValue("top level".into()))?;
    for key in table.keys() {
        if !matches!(key.as_str(), "problem" | "greedy" | "scm" | "online") {
            return Err(ConfigError::UnknownKey(key.clone()));
        }
    }
    let problem = table
        .get("problem")
        .and_then(|v| v.as_table())
        .ok_or_else(|| ConfigError::MissingKey("problem".into()))?;
    let mut name = None;
    let mut options = ProblemOptions::default();
    for (key, v) in problem {
        match key.as_str() {
            "name" => {
                let s = v.as_str().ok_or_else(|| ConfigError::BadValue("problem.name".into()))?;
                name = Some(
                    ProblemName::parse(s)
                        .map_err(|_| ConfigError::BadValue(format!("problem.name = '{s}'")))?,
                );
            }
            "resolution" => {
                options.resolution = match v {
                    toml::Value::String(s) if s == "coarse" => Resolution::Coarse,
                    toml::Value::String(s) if s == "paper" => Resolution::Paper,
                    toml::Value::Integer(k) if *k > 0 => Resolution::Custom(*k as u32),
                    _ => return Err(ConfigError::BadValue("problem.resolution".into())),
                };
            }
            "nu" => {
                let nu = as_f64(v).ok_or_else(|| ConfigError::BadValue("problem.nu".into()))?;
                if !(nu > 0.0 && nu < 0.5) {
                    return Err(ConfigError::OutOfRange {
                        key: "problem.nu".into(),
                        reason: format!("nu = {nu} must lie strictly inside (0, 0.5) for coercivity"),
                    });
                }
                options.nu = nu;
            }
            "mu_min" => options.box_lo = Some(as_f64_array(v, "problem.mu_min")?),
            "mu_max" => options.box_hi = Some(as_f64_array(v, "problem.mu_max")?),
            other => return Err(ConfigError::UnknownKey(format!("problem.{other}"))),
        }
    }
    let name = name.ok_or_else(|| ConfigError::MissingKey("problem.name".into()))?;
    if let (Some(lo), Some(hi)) = (&options.box_lo, &options.box_hi) {
        if lo.len() != hi.len() || lo.iter().zip(hi).any(|(a, b)| a >= b) {
            return Err(ConfigError::OutOfRange {
                key: "problem.mu_min/mu_max".into(),
                reason: "box bounds must satisfy mu_min < mu_max componentwise".into(),
            });
        }
    } else if options.box_lo.is_some() != options.box_hi.is_some() {
        return Err(ConfigError::MissingKey(
            "problem.mu_min and problem.mu_max must be given together".into(),
        ));
    }

    let mut greedy = GreedyConfig::default();
    if let Some(g) = table.get("greedy") {
        let g = g
            .as_table()
            .ok_or_else(|| ConfigError::BadValue("greedy".into()))?;
        for (key, v) in g {
            match key.as_str() {
                "n_train" => greedy.n_train = as_usize(v, "greedy.n_train")?,
                "tol" => greedy.tol = as_pos_f64(v, "greedy.tol")?,
                "n_max" => greedy.n_max = as_usize(v, "greedy.n_max")?,
                "seed" => greedy.seed = as_usize(v, "greedy.seed")? as u64,
                "indicator" => {
                    greedy.indicator = match v.as_str() {
                        Some("relative-output-bound") => Indicator::RelativeOutputBound,
                        Some("absolute-output-bound") => Indicator::AbsoluteOutputBound,
                        _ => return Err(ConfigError::BadValue("greedy.indicator".into())),
                    };
                }
                other => return Err(ConfigError::UnknownKey(format!("greedy.{other}"))),
            }
        }
    }
    let mut scm = ScmConfig::default();
    let mut scm_train = 200usize;
    let mut scm_seed = 20240u64;
    if let Some(s) = table.get("scm") {
        let s = s
            .as_table()
            .ok_or_else(|| ConfigError::BadValue("scm".into()))?;
        for (key, v) in s {
            match key.as_str() {
                "tol" => scm.tol = as_pos_f64(v, "scm.tol")?,
                "m_near" => scm.m_near = as_usize(v, "scm.m_near")?,
                "j_max" => scm.j_max = as_usize(v, "scm.j_max")?,
                "n_train" => scm_train = as_usize(v, "scm.n_train")?,
                "seed" => scm_seed = as_usize(v, "scm.seed")? as u64,
                other => return Err(ConfigError::UnknownKey(format!("scm.{other}"))),
            }
        }
    }
    let mut online_default_n = None;
    if let Some(o) = table.get("online") {
        let o = o
            .as_table()
            .ok_or_else(|| ConfigError::BadValue("online".into()))?;
        for (key, v) in o {
            match key.as_str() {
                "n" => online_default_n = Some(as_usize(v, "online.n")?),
                other => return Err(ConfigError::UnknownKey(format!("online.{other}"))),
            }
        }
    }
    Ok(ProblemConfig {
        name,
        options,
        greedy,
        scm,
        scm_train,
        scm_seed,
        online_default_n,
        text: text.to_string(),
    })
}

fn as_f64(v: &toml::Value) -> Option<f64> {
    match v {
        toml::Value::Float(f) => Some(*f),
        toml::Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn as_pos_f64(v: &toml::Value, key: &str) -> Result<f64, ConfigError> {
    let f = as_f64(v).ok_or_else(|| ConfigError::BadValue(key.into()))?;
    if f > 0.0 {
        Ok(f)
    } else {
        Err(ConfigError::OutOfRange {
            key: key.into(),
            reason: "must be positive".into(),
        })
    }
}

fn as_usize(v: &toml::Value, key: &str) -> Result<usize, ConfigError> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(ConfigError::BadValue(key.into())),
    }
}

fn as_f64_array(v: &toml::Value, key: &str) -> Result<Vec<f64>, ConfigError> {
    v.as_array()
        .and_then(|a| a.iter().map(as_f64).collect::<Option<Vec<_>>>())
        .ok_or_else(|| ConfigError::BadValue(key.into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = parse_problem_config("[problem]\nname = \"multi_material\"\n").unwrap();
        assert_eq!(cfg.name, ProblemName::MultiMaterial);
        assert_eq!(cfg.options.resolution, Resolution::Coarse);
        assert_eq!(cfg.options.nu, 0.3);
        assert_eq!(cfg.greedy.n_train, GreedyConfig::default().n_train);
    }

    #[test]
    fn full_config_parses() {
        let text = r#"
[problem]
name = "center_crack"
resolution = "paper"
nu = 0.25
[greedy]
n_train = 500
tol = 1e-4
n_max = 45
seed = 7
indicator = "relative-output-bound"
[scm]
tol = 0.75
m_near = 8
j_max = 40
n_train = 150
seed = 3
[online]
n = 30
"#;
        let cfg = parse_problem_config(text).unwrap();
        assert_eq!(cfg.name, ProblemName::CenterCrack);
        assert_eq!(cfg.options.nu, 0.25);
        assert_eq!(cfg.greedy.n_train, 500);
        assert_eq!(cfg.scm.j_max, 40);
        assert_eq!(cfg.online_default_n, Some(30));
    }

    #[test]
    fn unknown_key_rejected() {
        let err = parse_problem_config("[problem]\nname = \"multi_material\"\nfoo = 1\n");
        assert!(matches!(err, Err(ConfigError::UnknownKey(_))));
    }

    #[test]
    fn nu_at_incompressible_limit_rejected() {
        let err = parse_problem_config("[problem]\nname = \"multi_material\"\nnu = 0.5\n");
        assert!(matches!(err, Err(ConfigError::OutOfRange { .. })));
    }

    #[test]
    fn box_override_sanity() {
        let err = parse_problem_config(
            "[problem]\nname = \"multi_material\"\nmu_min = [2.0]\nmu_max = [1.0]\n",
        );
        assert!(matches!(err, Err(ConfigError::OutOfRange { .. })));
    }
}
