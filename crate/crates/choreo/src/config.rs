//! Line-based `key = value` run configuration.
//!
//! Precedence is flags over file over defaults. Unknown keys are errors.

use std::path::Path;

use choreo_core::audio::OnsetConfig;
use choreo_core::graph::{CompletenessVariant, GraphMode};
use choreo_core::motion::RandomWarpConfig;
use choreo_core::pipeline::{ChoreoConfig, DatasetConfig};
use choreo_core::style::{BoundsMode, StyleBackend};
use choreo_core::tempo::CellCost;
use choreo_core::NODE_FRAMES;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub choreo: ChoreoConfig,
    pub onset: OnsetConfig,
    pub backend: StyleBackend,
    pub normalization: BoundsMode,
    pub warp: RandomWarpConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            choreo: ChoreoConfig::default(),
            onset: OnsetConfig::default(),
            backend: StyleBackend::Labels,
            normalization: BoundsMode::Percentile,
            warp: RandomWarpConfig::default(),
        }
    }
}

/// Every accepted key.
pub const KEYS: &[&str] = &[
    "onset.prominence",
    "onset.min_separation_frames",
    "motion.prominence",
    "motion.min_separation_frames",
    "motion.max_shift",
    "motion.select_prob",
    "motion.min_gap",
    "tempo.sigma",
    "tempo.radius",
    "tempo.cell_cost",
    "style.lambda_cs",
    "style.lambda_b",
    "style.k",
    "style.backend",
    "style.normalization",
    "graph.lambda_s",
    "graph.lambda_c",
    "graph.lambda_t",
    "graph.mode",
    "graph.blend_frames",
    "graph.eq6_variant",
    "seed",
    "mode",
    "retempo",
    "k",
];

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("{key}: cannot parse `{v}`"))
}

fn choice<T: Copy>(key: &str, v: &str, options: &[(&str, T)]) -> Result<T, String> {
    options
        .iter()
        .find(|(name, _)| *name == v)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            format!("{key}: expected one of {}, got `{v}`", names.join("|"))
        })
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        let c = &mut self.choreo;
        match key {
            "onset.prominence" => self.onset.prominence = num(key, v)?,
            "onset.min_separation_frames" => self.onset.min_separation_frames = num(key, v)?,
            "motion.prominence" => c.beats.prominence = num(key, v)?,
            "motion.min_separation_frames" => c.beats.min_separation_frames = num(key, v)?,
            "motion.max_shift" => self.warp.max_shift = num(key, v)?,
            "motion.select_prob" => self.warp.select_prob = num(key, v)?,
            "motion.min_gap" => self.warp.min_gap = num(key, v)?,
            "tempo.sigma" => c.tempo.sigma = num(key, v)?,
            "tempo.radius" => c.tempo.radius = num(key, v)?,
            "tempo.cell_cost" => {
                c.tempo.cell_cost = choice(
                    key,
                    v,
                    &[("absolute", CellCost::Absolute), ("squared", CellCost::Squared)],
                )?
            }
            "style.lambda_cs" => c.style.lambda_cs = num(key, v)?,
            "style.lambda_b" => c.style.lambda_b = num(key, v)?,
            "style.k" | "k" => c.k = num(key, v)?,
            "style.backend" => {
                self.backend = choice(
                    key,
                    v,
                    &[("labels", StyleBackend::Labels), ("external", StyleBackend::External)],
                )?
            }
            "style.normalization" => {
                self.normalization = choice(
                    key,
                    v,
                    &[("percentile", BoundsMode::Percentile), ("minmax", BoundsMode::MinMax)],
                )?
            }
            "graph.lambda_s" => c.graph.lambda_s = num(key, v)?,
            "graph.lambda_c" => c.graph.lambda_c = num(key, v)?,
            "graph.lambda_t" => c.graph.lambda_t = num(key, v)?,
            "graph.mode" | "mode" => {
                c.mode = choice(
                    key,
                    v,
                    &[("dynamic", GraphMode::Dynamic), ("motiongraph", GraphMode::MotionGraph)],
                )?
            }
            "graph.blend_frames" => c.blend_frames = num(key, v)?,
            "graph.eq6_variant" => {
                c.completeness_variant = choice(
                    key,
                    v,
                    &[
                        ("centered", CompletenessVariant::Centered),
                        ("literal", CompletenessVariant::Literal),
                    ],
                )?
            }
            "seed" => c.seed = num(key, v)?,
            "retempo" => c.retempo = choice(key, v, &[("on", true), ("off", false)])?,
            _ => return Err(format!("unknown config key `{key}`")),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), String> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", n + 1))?;
            self.set(k.trim(), v).map_err(|e| format!("line {}: {e}", n + 1))?;
        }
        Ok(())
    }

    /// Defaults, then the optional file, then `KEY=VALUE` overrides.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = crate::io::read_text(path)?;
            cfg.apply_text(&text).map_err(|e| CliError::parse(path, e))?;
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("override `{o}` is not KEY=VALUE")))?;
            cfg.set(k.trim(), v).map_err(CliError::Config)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        let c = &self.choreo;
        let unit = |x: f64| x.is_finite() && x > 0.0 && x <= 1.0;
        if !unit(self.onset.prominence) {
            return bad(format!(
                "onset.prominence must be in (0, 1], got {}",
                self.onset.prominence
            ));
        }
        if !unit(c.beats.prominence) {
            return bad(format!(
                "motion.prominence must be in (0, 1], got {}",
                c.beats.prominence
            ));
        }
        if self.onset.min_separation_frames == 0 || c.beats.min_separation_frames == 0 {
            return bad("min_separation_frames must be at least 1".into());
        }
        if !(c.tempo.sigma.is_finite() && c.tempo.sigma > 0.0) {
            return bad(format!("tempo.sigma must be positive, got {}", c.tempo.sigma));
        }
        if !(0.0..=1.0).contains(&self.warp.select_prob) {
            return bad(format!(
                "motion.select_prob must be in [0, 1], got {}",
                self.warp.select_prob
            ));
        }
        for (name, w) in [
            ("style.lambda_cs", c.style.lambda_cs),
            ("style.lambda_b", c.style.lambda_b),
        ] {
            if !w.is_finite() || w < 0.0 {
                return bad(format!("{name} must be finite and >= 0, got {w}"));
            }
        }
        c.graph.validate()?;
        if c.k == 0 {
            return bad("k must be at least 1".into());
        }
        if c.blend_frames > 2 * NODE_FRAMES {
            return bad(format!(
                "graph.blend_frames must be at most {}, got {}",
                2 * NODE_FRAMES,
                c.blend_frames
            ));
        }
        Ok(())
    }

    pub fn dataset(&self) -> DatasetConfig {
        DatasetConfig {
            beats: self.choreo.beats,
            tempo: self.choreo.tempo,
            normalization: self.normalization,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_listed_key_is_accepted() {
        let samples = [
            "0.2",
            "3",
            "0.1",
            "4",
            "3",
            "0.5",
            "2",
            "2.5",
            "6",
            "squared",
            "1",
            "0.3",
            "16",
            "external",
            "minmax",
            "1",
            "1",
            "2",
            "motiongraph",
            "8",
            "literal",
            "7",
            "dynamic",
            "off",
            "9",
        ];
        assert_eq!(samples.len(), KEYS.len());
        let mut cfg = RunConfig::default();
        for (k, v) in KEYS.iter().zip(samples) {
            cfg.set(k, v).unwrap_or_else(|e| panic!("{k}: {e}"));
        }
        cfg.validate().unwrap();
        assert_eq!(cfg.choreo.k, 9);
        assert!(!cfg.choreo.retempo);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut cfg = RunConfig::default();
        let err = cfg.apply_text("graph.lamda_s = 1\n").unwrap_err();
        assert!(err.contains("unknown") && err.contains("line 1"), "{err}");
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.cfg");
        std::fs::write(&p, "# demo\nk = 4\nseed = 3 # trailing\nretempo = off\n").unwrap();
        let cfg = RunConfig::load(Some(&p), &["k=7".into()]).unwrap();
        assert_eq!(cfg.choreo.k, 7);
        assert_eq!(cfg.choreo.seed, 3);
        assert!(!cfg.choreo.retempo);
    }

    #[test]
    fn invalid_values_fail_before_work() {
        assert!(RunConfig::load(None, &["graph.lambda_t=-1".into()]).is_err());
        assert!(RunConfig::load(None, &["k=0".into()]).is_err());
        assert!(RunConfig::load(None, &["retempo=maybe".into()]).is_err());
        assert!(RunConfig::load(None, &["onset.prominence=0".into()]).is_err());
    }
}
