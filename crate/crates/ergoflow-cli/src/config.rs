//! Run configuration: structured TOML with sections for the map, the
//! information distribution, agents, horizon, planner parameters and the
//! experiment matrix.

use std::path::{Path, PathBuf};

use ergoflow::mesh::{DistSpec, Gaussian, MapSpec};
use ergoflow::{Error, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub map: MapSection,
    #[serde(default)]
    pub distribution: DistSection,
    pub agents: AgentsSection,
    pub horizon: HorizonSection,
    #[serde(default)]
    pub planner: PlannerSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSection {
    pub kind: String,
    #[serde(default = "default_side")]
    pub side: f64,
    pub h: f64,
    /// Maze occupancy rows (top to bottom, '.' free / '#' wall); the
    /// serpentine default is used when omitted.
    pub layout: Option<Vec<String>>,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_corridor_length")]
    pub corridor_length: f64,
    #[serde(default = "default_corridor_width")]
    pub corridor_width: f64,
    #[serde(default = "default_corridor_offset")]
    pub corridor_offset: f64,
}

fn default_side() -> f64 {
    1.0
}
fn default_radius() -> f64 {
    0.7
}
fn default_corridor_length() -> f64 {
    0.7
}
fn default_corridor_width() -> f64 {
    0.16
}
fn default_corridor_offset() -> f64 {
    0.28
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistSection {
    pub kind: String,
    #[serde(default)]
    pub centers: Vec<[f64; 2]>,
    #[serde(default)]
    pub sigmas: Vec<f64>,
    #[serde(default)]
    pub weights: Vec<f64>,
}

impl Default for DistSection {
    fn default() -> Self {
        DistSection {
            kind: "uniform".into(),
            centers: Vec::new(),
            sigmas: Vec::new(),
            weights: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentsSection {
    pub starts: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonSection {
    pub t_final: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_dt() -> f64 {
    0.01
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerSection {
    #[serde(default = "default_vmax")]
    pub vmax: f64,
    #[serde(default = "default_n_fields")]
    pub n_fields: usize,
    #[serde(default = "default_k_trunc")]
    pub k_trunc: usize,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_max_outer")]
    pub max_outer: usize,
    #[serde(default = "default_socp_tolerance")]
    pub socp_tolerance: f64,
    #[serde(default = "default_switch_interval")]
    pub switch_interval: f64,
}

fn default_vmax() -> f64 {
    1.0
}
fn default_n_fields() -> usize {
    32
}
fn default_k_trunc() -> usize {
    200
}
fn default_eta() -> f64 {
    0.1
}
fn default_kappa() -> f64 {
    1e-3
}
fn default_max_outer() -> usize {
    100
}
fn default_socp_tolerance() -> f64 {
    1e-7
}
fn default_switch_interval() -> f64 {
    0.5
}

impl Default for PlannerSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults deserialize from empty table")
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Map label used in metric rows; defaults to the map kind.
    pub map_label: Option<String>,
    /// Case label used in metric rows; defaults to the distribution kind.
    pub case_label: Option<String>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seeds: default_seeds(),
            out_dir: default_out_dir(),
            map_label: None,
            case_label: None,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Config = toml::from_str(&text)
            .map_err(|e| Error::InvalidArgument(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_str(text: &str) -> Result<Config> {
        let cfg: Config = toml::from_str(text)
            .map_err(|e| Error::InvalidArgument(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        self.map_spec()?;
        self.dist_spec()?;
        if self.agents.starts.is_empty() {
            return Err(Error::InvalidArgument("agents.starts is empty".into()));
        }
        if !(self.horizon.t_final > 0.0) || !(self.horizon.dt > 0.0) {
            return Err(Error::InvalidArgument(
                "horizon.t_final and horizon.dt must be > 0".into(),
            ));
        }
        if self.run.seeds.is_empty() {
            return Err(Error::InvalidArgument("run.seeds is empty".into()));
        }
        Ok(())
    }

    pub fn map_spec(&self) -> Result<MapSpec> {
        match self.map.kind.as_str() {
            "square" => Ok(MapSpec::Square {
                side: self.map.side,
                h: self.map.h,
            }),
            "maze" => Ok(MapSpec::Maze {
                side: self.map.side,
                h: self.map.h,
                layout: self
                    .map
                    .layout
                    .clone()
                    .unwrap_or_else(ergoflow::mesh::default_maze_layout),
            }),
            "rooms" => Ok(MapSpec::Rooms {
                radius: self.map.radius,
                corridor_length: self.map.corridor_length,
                corridor_width: self.map.corridor_width,
                corridor_offset: self.map.corridor_offset,
                h: self.map.h,
            }),
            other => Err(Error::InvalidArgument(format!(
                "map.kind must be square, maze or rooms; got {other:?}"
            ))),
        }
    }

    pub fn dist_spec(&self) -> Result<DistSpec> {
        match self.distribution.kind.as_str() {
            "uniform" => Ok(DistSpec::Uniform),
            "gaussians" => {
                let d = &self.distribution;
                if d.centers.is_empty()
                    || d.centers.len() != d.sigmas.len()
                    || d.centers.len() != d.weights.len()
                {
                    return Err(Error::InvalidArgument(
                        "gaussians need equal-length centers, sigmas and weights".into(),
                    ));
                }
                Ok(DistSpec::GaussianMixture(
                    d.centers
                        .iter()
                        .zip(d.sigmas.iter().zip(&d.weights))
                        .map(|(&c, (&s, &w))| Gaussian::isotropic(c, s, w))
                        .collect(),
                ))
            }
            other => Err(Error::InvalidArgument(format!(
                "distribution.kind must be uniform or gaussians; got {other:?}"
            ))),
        }
    }

    pub fn map_label(&self) -> String {
        self.run
            .map_label
            .clone()
            .unwrap_or_else(|| self.map.kind.clone())
    }

    pub fn case_label(&self) -> String {
        self.run
            .case_label
            .clone()
            .unwrap_or_else(|| self.distribution.kind.clone())
    }

    /// Number of stored trajectory steps.
    pub fn steps(&self) -> usize {
        (self.horizon.t_final / self.horizon.dt).round().max(1.0) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[map]
kind = "square"
h = 0.1

[agents]
starts = [[0.5, 0.5]]

[horizon]
t_final = 1.0
"#;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = Config::from_str(MINIMAL).unwrap();
        assert_eq!(cfg.planner.n_fields, 32);
        assert_eq!(cfg.planner.k_trunc, 200);
        assert_eq!(cfg.run.seeds, vec![0]);
        assert_eq!(cfg.steps(), 100);
        assert!(matches!(cfg.map_spec().unwrap(), MapSpec::Square { .. }));
        assert!(matches!(cfg.dist_spec().unwrap(), DistSpec::Uniform));
    }

    #[test]
    fn bad_kind_is_rejected() {
        let text = MINIMAL.replace("\"square\"", "\"hexagon\"");
        assert!(Config::from_str(&text).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\n[planner]\ntypo_field = 3\n");
        assert!(Config::from_str(&text).is_err());
    }

    #[test]
    fn gaussians_require_matching_lengths() {
        let text = format!(
            "{MINIMAL}\n[distribution]\nkind = \"gaussians\"\ncenters = [[0.5, 0.5]]\nsigmas = [0.1, 0.2]\nweights = [1.0]\n"
        );
        assert!(Config::from_str(&text).is_err());
    }
}
