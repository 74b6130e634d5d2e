//! `key = value` run configuration files.

use std::fmt;

use thermocc::SiamConfig;

/// A parsed configuration plus whether `n_bath` was given explicitly; its
/// default depends on the method.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigFile {
    pub config: SiamConfig,
    pub n_bath_set: bool,
}

/// Bath size used when the file leaves `n_bath` unset and the method is
/// DMCC-SD, whose doubles amplitudes scale as `N⁴`.
pub const SD_DEFAULT_N_BATH: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ParseError {}

pub const KEYS: [&str; 18] = [
    "epsilon0",
    "V",
    "U",
    "temperature",
    "gamma",
    "delta_eps",
    "omega",
    "lambda_disc",
    "n_bath",
    "band_halfwidth",
    "dt",
    "t_final",
    "init_imp_occ_alpha",
    "init_imp_occ_beta",
    "svd_threshold",
    "max_bond",
    "tebd_dt",
    "record_interval",
];

/// Parses the text of a configuration file. Only syntax is checked here;
/// value ranges are left to [`SiamConfig::validate`].
pub fn parse_config(text: &str) -> Result<ConfigFile, ParseError> {
    let mut config = SiamConfig::default();
    let mut seen: Vec<&str> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| ParseError { line, message };
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, found `{content}`")))?;
        let (key, value) = (key.trim(), value.trim());
        let Some(&key) = KEYS.iter().find(|&&k| k == key) else {
            return Err(err(format!("unknown key `{key}`")));
        };
        if seen.contains(&key) {
            return Err(err(format!("duplicate key `{key}`")));
        }
        seen.push(key);
        let real = || {
            value
                .parse::<f64>()
                .map_err(|_| err(format!("`{key}` expects a number, found `{value}`")))
        };
        let count = || {
            value
                .parse::<usize>()
                .map_err(|_| err(format!("`{key}` expects a non-negative integer, found `{value}`")))
        };
        match key {
            "epsilon0" => config.epsilon0 = real()?,
            "V" => config.hybridization = real()?,
            "U" => config.hubbard_u = real()?,
            "temperature" => config.temperature = real()?,
            "gamma" => config.gamma = real()?,
            "delta_eps" => config.delta_eps = real()?,
            "omega" => config.omega = real()?,
            "lambda_disc" => config.lambda_disc = real()?,
            "n_bath" => config.n_bath = count()?,
            "band_halfwidth" => config.band_halfwidth = real()?,
            "dt" => config.dt = real()?,
            "t_final" => config.t_final = real()?,
            "init_imp_occ_alpha" => config.init_imp_occ_alpha = real()?,
            "init_imp_occ_beta" => config.init_imp_occ_beta = real()?,
            "svd_threshold" => config.svd_threshold = real()?,
            "max_bond" => config.max_bond = count()?,
            "tebd_dt" => config.tebd_dt = real()?,
            "record_interval" => config.record_interval = real()?,
            _ => unreachable!(),
        }
    }
    Ok(ConfigFile {
        config,
        n_bath_set: seen.contains(&"n_bath"),
    })
}
