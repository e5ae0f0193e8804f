//! Run configuration files (TOML).

use std::fs;
use std::path::{Path, PathBuf};

use loopsoup_core::experiments::{
    experiment_names, BetaSpec, ExperimentConfig, PanelFunctional, RewiringConfig, StripConfig, Thresholds,
};
use loopsoup_core::lattice::{ArcSegment, BoundarySegment, Side};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: cannot read config: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}:{line}: {message}")]
    Invalid { path: String, line: usize, message: String },
}

/// One boundary arc: a whole side, part of a side, or a stretch of the
/// counterclockwise boundary ring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArcSpec {
    /// 1-based arc label.
    pub arc: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub side: Option<Side>,
    /// `[start, end)` along the side; the whole side when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub range: Option<[usize; 2]>,
    /// `[start, end)` along the ring, starting at the left end of the bottom.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ring: Option<[usize; 2]>,
}

impl ArcSpec {
    fn to_segment(&self) -> Result<ArcSegment, String> {
        let segment = match (self.side, self.range, self.ring) {
            (Some(side), range, None) => BoundarySegment::Side {
                side,
                range: range.map(|[s, e]| (s, e)),
            },
            (None, None, Some([start, end])) => BoundarySegment::Ring { start, end },
            _ => return Err("an arc needs either `side` (with optional `range`) or `ring`".into()),
        };
        Ok(ArcSegment { arc: self.arc, segment })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Report directory; `LOOPSOUP_LAB_REPORT_DIR` overrides it.
    pub dir: PathBuf,
    /// Also write curves and per-replica scalars as CSV.
    pub csv: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("reports"),
            csv: false,
        }
    }
}

/// A complete run: which experiment, its parameters, and where the output
/// goes. Every key except `experiment` has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: String,
    #[serde(default = "d::nx")]
    pub nx: usize,
    #[serde(default = "d::ny")]
    pub ny: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d::alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub beta: BetaSpec,
    #[serde(default = "d::u")]
    pub u: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_m: Option<f64>,
    #[serde(default = "d::replicas")]
    pub replicas: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
    #[serde(default = "d::truncation_tolerance")]
    pub truncation_tolerance: f64,
    /// Worker threads; all cores when absent. Results do not depend on it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default = "d::arc_counts")]
    pub arc_counts: Vec<usize>,
    #[serde(default = "d::panel")]
    pub panel: Vec<PanelFunctional>,
    #[serde(default = "d::permutations")]
    pub permutations: usize,
    #[serde(default = "d::energy_subsample")]
    pub energy_subsample: usize,
    #[serde(default = "d::killing_fields")]
    pub killing_fields: usize,
    #[serde(default = "d::identity_samples")]
    pub identity_samples: usize,
    #[serde(default = "d::laplace_scale")]
    pub laplace_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arcs: Option<Vec<ArcSpec>>,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub strip: StripConfig,
    #[serde(default)]
    pub rewiring: RewiringConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Defaults shared with the experiment parameters.
mod d {
    use super::*;

    fn base() -> ExperimentConfig {
        ExperimentConfig::default()
    }
    pub fn nx() -> usize {
        base().nx
    }
    pub fn ny() -> usize {
        base().ny
    }
    pub fn alpha() -> f64 {
        base().alpha
    }
    pub fn u() -> f64 {
        base().u
    }
    pub fn replicas() -> usize {
        base().replicas
    }
    pub fn truncation_tolerance() -> f64 {
        base().truncation_tolerance
    }
    pub fn arc_counts() -> Vec<usize> {
        base().arc_counts
    }
    pub fn panel() -> Vec<PanelFunctional> {
        base().panel
    }
    pub fn permutations() -> usize {
        base().permutations
    }
    pub fn energy_subsample() -> usize {
        base().energy_subsample
    }
    pub fn killing_fields() -> usize {
        base().killing_fields
    }
    pub fn identity_samples() -> usize {
        base().identity_samples
    }
    pub fn laplace_scale() -> f64 {
        base().laplace_scale
    }
}

impl RunConfig {
    /// Defaults for everything but the experiment name and seed.
    pub fn new(experiment: &str, seed: u64) -> Self {
        let text = format!("experiment = \"{experiment}\"\nseed = {seed}\n");
        toml::from_str(&text).expect("defaults deserialize")
    }

    pub fn experiment_config(&self) -> Result<ExperimentConfig, String> {
        let arcs = match &self.arcs {
            Some(specs) => Some(specs.iter().map(ArcSpec::to_segment).collect::<Result<Vec<_>, _>>()?),
            None => None,
        };
        Ok(ExperimentConfig {
            nx: self.nx,
            ny: self.ny,
            arcs,
            arc_counts: self.arc_counts.clone(),
            alpha: self.alpha,
            beta: self.beta,
            u: self.u,
            target_m: self.target_m,
            replicas: self.replicas,
            k_max: self.k_max,
            truncation_tolerance: self.truncation_tolerance,
            seed: self.seed,
            thresholds: self.thresholds,
            panel: self.panel.clone(),
            permutations: self.permutations,
            energy_subsample: self.energy_subsample,
            killing_fields: self.killing_fields,
            identity_samples: self.identity_samples,
            laplace_scale: self.laplace_scale,
            strip: self.strip.clone(),
            rewiring: self.rewiring.clone(),
        })
    }

    /// The configuration with every default spelled out.
    pub fn to_canonical_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// 1-based line of the first `key = …` assignment, or 1.
fn line_of_key(text: &str, key: &str) -> usize {
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map_or(1, |i| i + 1)
}

/// 1-based line of the `arc = label` assignment of an `[[arcs]]` entry.
fn line_of_arc(text: &str, label: usize) -> usize {
    text.lines()
        .position(|l| {
            let l: String = l.chars().filter(|c| !c.is_whitespace()).collect();
            l == format!("arc={label}")
        })
        .map_or_else(|| line_of_key(text, "arcs"), |i| i + 1)
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config_str(&text, &path.display().to_string())
}

/// Parses and validates; `origin` names the source in diagnostics.
pub fn parse_config_str(text: &str, origin: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
        path: origin.to_string(),
        message: e.to_string().trim_end().to_string(),
    })?;
    let invalid = |key: &str, message: String| ConfigError::Invalid {
        path: origin.to_string(),
        line: line_of_key(text, key),
        message,
    };
    if !experiment_names().contains(&cfg.experiment.as_str()) {
        return Err(invalid(
            "experiment",
            format!(
                "unknown experiment \"{}\"; known: {}",
                cfg.experiment,
                experiment_names().join(", ")
            ),
        ));
    }
    if cfg.workers == Some(0) {
        return Err(invalid("workers", "workers must be ≥ 1".into()));
    }
    let exp = cfg.experiment_config().map_err(|m| invalid("arcs", m))?;
    exp.validate().map_err(|e| {
        use loopsoup_core::Error;
        match &e {
            Error::OverlappingArcs { second, .. } => ConfigError::Invalid {
                path: origin.to_string(),
                line: line_of_arc(text, *second),
                message: e.to_string(),
            },
            Error::InvalidParameter { name, .. } => {
                // nested keys are reported by their last component
                let key = name.rsplit(['.', '/']).next().unwrap_or(name);
                invalid(key, e.to_string())
            }
            _ => invalid("nx", e.to_string()),
        }
    })?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_lookup() {
        let t = "experiment = \"x\"\n  alpha = -1\n[[arcs]]\narc = 2\n";
        assert_eq!(line_of_key(t, "alpha"), 2);
        assert_eq!(line_of_key(t, "beta"), 1);
        assert_eq!(line_of_arc(t, 2), 4);
    }

    #[test]
    fn arc_spec_shapes() {
        let side = ArcSpec {
            arc: 1,
            side: Some(Side::Left),
            range: Some([0, 2]),
            ring: None,
        };
        assert!(side.to_segment().is_ok());
        let both = ArcSpec {
            ring: Some([0, 1]),
            ..side.clone()
        };
        assert!(both.to_segment().is_err());
    }
}
