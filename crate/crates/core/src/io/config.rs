//! Plain-text run configuration.
//!
//! One `key = value` per line; blank lines and lines starting with `#` are
//! skipped. Recognised keys:
//!
//! | key              | value                              | default        |
//! |------------------|------------------------------------|----------------|
//! | `baseChannels`   | positive integer                   | `16`           |
//! | `sigmaRule`      | `support:<f>` or `fixed:<σ>`       | `support:0.25` |
//! | `matchRadius`    | non-negative number (px)           | `3`            |
//! | `thresholdCount` | integer ≥ 2                        | `101`          |
//! | `topHatRadius`   | integer                            | `4`            |
//! | `mpcmScales`     | comma-separated odd integers       | `3,5,7`        |
//! | `threads`        | positive integer                   | `1`            |

use std::path::Path;
use std::str::FromStr;

use crate::baselines::{DEFAULT_MPCM_SCALES, DEFAULT_TOP_HAT_RADIUS};
use crate::metrics::DEFAULT_MATCH_RADIUS;
use crate::scpem::SigmaRule;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub base_channels: usize,
    pub sigma_rule: SigmaRule,
    pub match_radius: f64,
    pub threshold_count: usize,
    pub top_hat_radius: usize,
    pub mpcm_scales: Vec<usize>,
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            base_channels: 16,
            sigma_rule: SigmaRule::default(),
            match_radius: DEFAULT_MATCH_RADIUS,
            threshold_count: 101,
            top_hat_radius: DEFAULT_TOP_HAT_RADIUS,
            mpcm_scales: DEFAULT_MPCM_SCALES.to_vec(),
            threads: 1,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::config(format!("`{key}`: cannot parse `{v}`")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<String> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected `key = value`", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.iter().any(|k| k == key) {
                return Err(Error::config(format!("duplicate key `{key}`")));
            }
            match key {
                "baseChannels" => cfg.base_channels = parse_num(key, value)?,
                "sigmaRule" => cfg.sigma_rule = value.parse()?,
                "matchRadius" => cfg.match_radius = parse_num(key, value)?,
                "thresholdCount" => cfg.threshold_count = parse_num(key, value)?,
                "topHatRadius" => cfg.top_hat_radius = parse_num(key, value)?,
                "mpcmScales" => {
                    cfg.mpcm_scales = value
                        .split(',')
                        .map(|s| parse_num(key, s.trim()))
                        .collect::<Result<_>>()?
                }
                "threads" => cfg.threads = parse_num(key, value)?,
                _ => return Err(Error::config(format!("unknown key `{key}`"))),
            }
            seen.push(key.to_string());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 {
            return Err(Error::config("`baseChannels` must be positive"));
        }
        if !(self.match_radius >= 0.0 && self.match_radius.is_finite()) {
            return Err(Error::config("`matchRadius` must be a non-negative number"));
        }
        if self.threshold_count < 2 {
            return Err(Error::config("`thresholdCount` must be at least 2"));
        }
        if self.mpcm_scales.is_empty() || self.mpcm_scales.iter().any(|&s| s == 0 || s % 2 == 0) {
            return Err(Error::config("`mpcmScales` must be odd positive integers"));
        }
        if self.threads == 0 {
            return Err(Error::config("`threads` must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_keys() {
        let cfg = RunConfig::parse(
            "# comment\nbaseChannels = 8\nsigmaRule = fixed:1.5\nmatchRadius=2.5\n\n\
             thresholdCount = 11\ntopHatRadius = 3\nmpcmScales = 3, 9\nthreads = 4\n",
        )
        .unwrap();
        assert_eq!(cfg.base_channels, 8);
        assert_eq!(cfg.sigma_rule, SigmaRule::Fixed(1.5));
        assert_eq!(cfg.match_radius, 2.5);
        assert_eq!(cfg.threshold_count, 11);
        assert_eq!(cfg.top_hat_radius, 3);
        assert_eq!(cfg.mpcm_scales, vec![3, 9]);
        assert_eq!(cfg.threads, 4);
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::parse("baseChannels = 8\nlearningRate = 0.1\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("learningRate"));
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "threads = 0",
            "mpcmScales = 4",
            "baseChannels = x",
            "threads = 1\nthreads = 2",
            "novalue",
        ] {
            assert!(RunConfig::parse(text).is_err(), "{text}");
        }
    }
}
