use std::fmt;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use cwexp_core::maps::{BumpProfile, BumpSpec, MapHandle};

/// A configuration problem; maps to exit code 64.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn field_err(field: &str, msg: impl fmt::Display) -> ConfigError {
    ConfigError(format!("field `{field}`: {msg}"))
}

/// Accepts `0.001` or `1/1024`.
pub fn parse_length(s: &str) -> Result<f64, String> {
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
            let b: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
            a / b
        }
        None => s.trim().parse().map_err(|e| format!("{e}"))?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{s} is not a finite number"))
    }
}

/// Flags shared by every command. Each is optional so that the config
/// file and built-in defaults can fill the gaps.
#[derive(Args, Debug, Clone, Default)]
pub struct CommonFlags {
    /// Map: identity, anosov, da, pda (and their _inverse forms).
    #[arg(long)]
    pub map: Option<String>,
    /// Grid pitch, e.g. 1/1024.
    #[arg(long, value_parser = parse_length)]
    pub h: Option<f64>,
    /// Orbit window N (iterates -N..=N).
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long, value_parser = parse_length)]
    pub alpha: Option<f64>,
    #[arg(long, value_parser = parse_length)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON config file; a manifest written by a previous run also works.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Bump support radius for da/pda.
    #[arg(long, value_parser = parse_length)]
    pub r0: Option<f64>,
    /// Bump flow time; tuned automatically when absent.
    #[arg(long)]
    pub tau: Option<f64>,
}

/// The on-disk config: every field optional, unknown fields rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub map: Option<String>,
    pub bump: Option<FileBump>,
    pub h: Option<f64>,
    pub window: Option<usize>,
    pub alpha: Option<f64>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub max_iter: Option<usize>,
    pub p: Option<String>,
    pub q: Option<String>,
    pub e_alpha: Option<f64>,
    pub expansivity: Option<bool>,
    pub almost_cwexp: Option<f64>,
    pub budget: Option<u64>,
    pub out: Option<PathBuf>,
}

/// Bump parameters as written in a config file; `tau` is tuned when absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileBump {
    pub r0: Option<f64>,
    pub tau: Option<f64>,
    pub profile: Option<BumpProfile>,
}

#[derive(Deserialize)]
struct ManifestShape {
    config: FileConfig,
}

impl FileConfig {
    /// Parse a config file, or the `config` object of a manifest.
    pub fn parse(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| ConfigError(format!("{}: line {} column {}: {e}", origin.display(), e.line(), e.column())))?;
        let is_manifest = value.get("config").is_some_and(|c| c.is_object());
        let parsed = if is_manifest {
            serde_json::from_str::<ManifestShape>(text).map(|m| m.config)
        } else {
            serde_json::from_str::<FileConfig>(text)
        };
        parsed.map_err(|e| ConfigError(format!("{}: line {} column {}: {e}", origin.display(), e.line(), e.column())))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path)
    }
}

/// Command-specific defaults.
#[derive(Debug, Clone)]
pub struct Defaults {
    pub map: &'static str,
    pub h: f64,
    pub window: usize,
    pub alpha: Option<f64>,
    pub epsilon: Option<f64>,
    pub delta: f64,
    pub samples: usize,
    pub max_iter: usize,
    pub p: &'static str,
    pub q: &'static str,
}

/// Fully resolved run configuration; echoed verbatim into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub map: String,
    /// Present exactly for the bump-dependent maps.
    pub bump: Option<BumpSpec>,
    pub h: f64,
    pub window: usize,
    pub alpha: Option<f64>,
    pub epsilon: Option<f64>,
    pub delta: f64,
    pub samples: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub p: String,
    pub q: String,
    pub e_alpha: Option<f64>,
    pub expansivity: bool,
    pub almost_cwexp: Option<f64>,
    /// Point-iterate budget for probes; exhausting it yields "inconclusive".
    pub budget: Option<u64>,
}

/// Flags that are not common to every command.
#[derive(Debug, Clone, Default)]
pub struct ExtraFlags {
    pub delta: Option<f64>,
    pub max_iter: Option<usize>,
    pub p: Option<String>,
    pub q: Option<String>,
    pub e_alpha: Option<f64>,
    pub expansivity: bool,
    pub almost_cwexp: Option<f64>,
    pub budget: Option<u64>,
}

impl RunConfig {
    /// Flags > config file > defaults.
    pub fn resolve(
        flags: &CommonFlags,
        extra: &ExtraFlags,
        file: &FileConfig,
        defaults: &Defaults,
    ) -> Result<(Self, PathBuf), ConfigError> {
        let map = flags.map.clone().or(file.map.clone()).unwrap_or(defaults.map.into());
        let fb = file.bump.clone().unwrap_or_default();
        let bump = if map_needs_bump(&map) {
            let r0 = flags.r0.or(fb.r0).unwrap_or(BumpSpec::DEFAULT_R0);
            let tau = match flags.tau.or(fb.tau) {
                Some(t) => t,
                None => BumpSpec::tuned_with_radius(r0).map_err(|e| field_err("bump.r0", e))?.tau,
            };
            Some(BumpSpec {
                r0,
                tau,
                profile: fb.profile.unwrap_or_default(),
            })
        } else {
            None
        };
        let cfg = Self {
            map,
            bump,
            h: flags.h.or(file.h).unwrap_or(defaults.h),
            window: flags.window.or(file.window).unwrap_or(defaults.window),
            alpha: flags.alpha.or(file.alpha).or(defaults.alpha),
            epsilon: flags.epsilon.or(file.epsilon).or(defaults.epsilon),
            delta: extra.delta.or(file.delta).unwrap_or(defaults.delta),
            samples: flags.samples.or(file.samples).unwrap_or(defaults.samples),
            seed: flags.seed.or(file.seed).unwrap_or(0),
            max_iter: extra.max_iter.or(file.max_iter).unwrap_or(defaults.max_iter),
            p: extra.p.clone().or(file.p.clone()).unwrap_or(defaults.p.into()),
            q: extra.q.clone().or(file.q.clone()).unwrap_or(defaults.q.into()),
            e_alpha: extra.e_alpha.or(file.e_alpha),
            expansivity: extra.expansivity || file.expansivity.unwrap_or(false),
            almost_cwexp: extra.almost_cwexp.or(file.almost_cwexp),
            budget: extra.budget.or(file.budget),
        };
        let out = flags
            .out
            .clone()
            .or(file.out.clone())
            .unwrap_or_else(|| PathBuf::from("cwexp-out"));
        cfg.validate()?;
        Ok((cfg, out))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(field_err(name, format!("must be positive, got {v}")))
            }
        };
        positive("h", self.h)?;
        if self.h > 0.25 {
            return Err(field_err("h", "grid pitch must be at most 1/4"));
        }
        let n = (1.0 / self.h).round();
        if (n * self.h - 1.0).abs() > 1e-9 {
            return Err(field_err("h", format!("must be 1/n for an integer n, got {}", self.h)));
        }
        positive("delta", self.delta)?;
        for (name, v) in [("alpha", self.alpha), ("e_alpha", self.e_alpha)] {
            if let Some(a) = v {
                positive(name, a)?;
                if a <= 4.0 * self.h {
                    return Err(field_err(name, format!("{a} must exceed 4h = {}", 4.0 * self.h)));
                }
            }
        }
        if let Some(e) = self.epsilon {
            positive("epsilon", e)?;
        }
        if let Some(e) = self.almost_cwexp {
            if !(e > 4.0 * self.h) {
                return Err(field_err("almost_cwexp", format!("{e} must exceed 4h = {}", 4.0 * self.h)));
            }
        }
        if self.max_iter == 0 {
            return Err(field_err("max_iter", "must be at least 1"));
        }
        if let Some(b) = &self.bump {
            b.validate().map_err(|e| field_err("bump", e))?;
        }
        self.map_handle()?;
        Ok(())
    }

    pub fn grid_n(&self) -> usize {
        (1.0 / self.h).round() as usize
    }

    pub fn map_handle(&self) -> Result<MapHandle, ConfigError> {
        MapHandle::from_name(&self.map, self.bump).map_err(|e| field_err("map", e))
    }
}

fn map_needs_bump(name: &str) -> bool {
    name.starts_with("da") || name.starts_with("pda")
}
