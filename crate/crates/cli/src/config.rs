//! Configuration layering: command-line flags over config-file entries over
//! the environment seed over built-in defaults.

use std::str::FromStr;

use crosslot_core::{Scheme, SystemConfig};

use crate::{CliError, ConfigArgs};

/// Environment variable consulted for the seed when neither a flag nor a
/// config-file entry provides one.
pub const SEED_ENV_VAR: &str = "CROSSLOT_SEED";

/// Values read from a config file; every field is optional.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PartialConfig {
    pub users: Option<usize>,
    pub snr_db: Option<f64>,
    pub p: Option<f64>,
    pub rate: Option<f64>,
    pub n_slots: Option<u64>,
    pub n_experiments: Option<usize>,
    pub seed: Option<u64>,
    pub scheme: Option<Scheme>,
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are
/// ignored, keys are the `SystemConfig` field names.
pub fn parse_config_file(text: &str) -> Result<PartialConfig, CliError> {
    let mut out = PartialConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!(
                "config line {} is not `key = value`: {raw:?}",
                lineno + 1
            ))
        })?;
        let key = key.trim();
        let value = value.trim();
        let bad = |what: &str| {
            CliError::Usage(format!(
                "config line {}: cannot parse {value:?} as {what} for key {key:?}",
                lineno + 1
            ))
        };
        match key {
            "users" => out.users = Some(value.parse().map_err(|_| bad("an integer"))?),
            "snr_db" => out.snr_db = Some(value.parse().map_err(|_| bad("a number"))?),
            "p" => out.p = Some(value.parse().map_err(|_| bad("a number"))?),
            "rate" => out.rate = Some(value.parse().map_err(|_| bad("a number"))?),
            "n_slots" => out.n_slots = Some(value.parse().map_err(|_| bad("an integer"))?),
            "n_experiments" => {
                out.n_experiments = Some(value.parse().map_err(|_| bad("an integer"))?)
            }
            "seed" => out.seed = Some(value.parse().map_err(|_| bad("an integer"))?),
            "scheme" => out.scheme = Some(Scheme::from_str(value)?),
            other => {
                return Err(CliError::Usage(format!(
                    "config line {}: unknown key {other:?}",
                    lineno + 1
                )))
            }
        }
    }
    Ok(out)
}

fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV_VAR) {
        Ok(raw) => raw.parse().map(Some).map_err(|_| {
            CliError::Usage(format!(
                "{SEED_ENV_VAR} must be an unsigned integer, got {raw:?}"
            ))
        }),
        Err(_) => Ok(None),
    }
}

/// Resolves the full system configuration with the documented precedence:
/// flag, then config file, then (seed only) environment, then default.
pub fn resolve(args: &ConfigArgs) -> Result<SystemConfig, CliError> {
    let file = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.display().to_string(),
                source,
            })?;
            parse_config_file(&text)?
        }
        None => PartialConfig::default(),
    };
    let scheme_flag = args
        .scheme
        .as_deref()
        .map(Scheme::from_str)
        .transpose()?;
    let defaults = SystemConfig::default();
    Ok(SystemConfig {
        users: args.users.or(file.users).unwrap_or(defaults.users),
        snr_db: args.snr_db.or(file.snr_db).unwrap_or(defaults.snr_db),
        p: args.p.or(file.p).unwrap_or(defaults.p),
        rate: args.rate.or(file.rate).unwrap_or(defaults.rate),
        n_slots: args.slots.or(file.n_slots).unwrap_or(defaults.n_slots),
        n_experiments: args
            .experiments
            .or(file.n_experiments)
            .unwrap_or(defaults.n_experiments),
        seed: args
            .seed
            .or(file.seed)
            .or(env_seed()?)
            .unwrap_or(defaults.seed),
        scheme: scheme_flag.or(file.scheme).unwrap_or(defaults.scheme),
    })
}
