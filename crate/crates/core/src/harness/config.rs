use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{prepare_graph, synthetic_slum};
use crate::baselines::{BaselineKind, BaselineSpec};
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::geometry::{build_planar_graph, parse_slum, GraphDocument};
use crate::state::Slum;
use crate::trainer::TrainConfig;

pub const SEED_VAR: &str = "SLUMROAD_SEED";
pub const OUTPUT_VAR: &str = "SLUMROAD_OUTPUT_DIR";

/// Planner id of the learned policy.
pub const LEARNED: &str = "drl_gnn";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub rows: usize,
    pub cols: usize,
    #[serde(default)]
    pub jitter: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Where the slum comes from: a file (GeoJSON geometry or a graph
/// document) or a synthetic grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SlumSection {
    pub path: Option<PathBuf>,
    pub synthetic: Option<SyntheticSpec>,
    /// Node-merge distance for simplification; a default derived from the
    /// edge lengths when absent.
    pub merge_eps: Option<f64>,
    pub id: Option<String>,
}

impl SlumSection {
    pub fn load(&self) -> Result<Arc<Slum>> {
        match (&self.path, &self.synthetic) {
            (Some(_), Some(_)) => Err(Error::Config("[slum] takes either path or synthetic, not both".into())),
            (None, None) => Err(Error::Config("[slum] needs a path or a synthetic grid".into())),
            (Some(p), None) => load_slum(p, self.merge_eps, self.id.clone()),
            (None, Some(s)) => {
                let slum = synthetic_slum(s.rows, s.cols, s.jitter, s.seed)?;
                match &self.id {
                    Some(id) => Slum::new(id.clone(), slum.graph.clone()),
                    None => Ok(slum),
                }
            }
        }
    }
}

/// Loads and prepares a slum file. A JSON object with a `nodes` array is
/// read as a graph document; anything else as GeoJSON geometry.
pub fn load_slum(path: &Path, merge_eps: Option<f64>, id: Option<String>) -> Result<Arc<Slum>> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let (raw, doc_id) = if value.get("nodes").is_some() {
        let doc: GraphDocument = serde_json::from_value(value).map_err(|e| Error::Parse(e.to_string()))?;
        let id = doc.id.clone();
        (doc.into_graph()?, id)
    } else {
        (build_planar_graph(&parse_slum(&text)?)?, None)
    };
    let (graph, _) = prepare_graph(&raw, merge_eps)?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("slum").to_owned();
    Slum::new(id.or(doc_id).unwrap_or(stem), graph)
}

/// Shared settings for every requested baseline; kind, mask and seed come
/// from the planner list and the seed list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSettings {
    pub population: usize,
    pub generations: usize,
    pub mutation_rate: f64,
    pub mutation_sigma: f64,
    pub elitism: usize,
    pub tournament: usize,
    pub samples: usize,
    pub fitness_weights: [f64; 3],
}

impl Default for BaselineSettings {
    fn default() -> Self {
        let d = BaselineSpec::default();
        BaselineSettings {
            population: d.population,
            generations: d.generations,
            mutation_rate: d.mutation_rate,
            mutation_sigma: d.mutation_sigma,
            elitism: d.elitism,
            tournament: d.tournament,
            samples: d.samples,
            fitness_weights: d.fitness_weights,
        }
    }
}

impl BaselineSettings {
    pub fn spec(&self, kind: BaselineKind, masked: bool, seed: u64) -> BaselineSpec {
        BaselineSpec {
            kind,
            masked,
            seed,
            population: self.population,
            generations: self.generations,
            mutation_rate: self.mutation_rate,
            mutation_sigma: self.mutation_sigma,
            elitism: self.elitism,
            tournament: self.tournament,
            samples: self.samples,
            fitness_weights: self.fitness_weights,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Also write one SVG rendering per (planner, seed).
    pub render: bool,
    /// Also write the trained checkpoint per seed.
    pub checkpoints: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out"), render: false, checkpoints: true }
    }
}

/// A planner requested by name: `drl_gnn`, a baseline name, or a baseline
/// name with `_unmasked` appended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlannerId {
    Learned,
    Baseline { kind: BaselineKind, masked: bool },
}

impl PlannerId {
    pub fn parse(name: &str) -> Result<PlannerId> {
        if name == LEARNED {
            return Ok(PlannerId::Learned);
        }
        match name.strip_suffix("_unmasked") {
            Some(base) => Ok(PlannerId::Baseline { kind: BaselineKind::parse(base)?, masked: false }),
            None => Ok(PlannerId::Baseline { kind: BaselineKind::parse(name)?, masked: true }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub planners: Vec<String>,
    pub seeds: Vec<u64>,
    pub slum: SlumSection,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub baselines: BaselineSettings,
    pub output: OutputSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            planners: vec![LEARNED.to_owned()],
            seeds: vec![0],
            slum: SlumSection::default(),
            env: EnvConfig::default(),
            train: TrainConfig::default(),
            baselines: BaselineSettings::default(),
            output: OutputSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Reads a config file, resolving a relative slum path against the
    /// file's directory, then applies the environment overrides.
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        if let (Some(p), Some(dir)) = (&cfg.slum.path, path.parent()) {
            if p.is_relative() {
                cfg.slum.path = Some(dir.join(p));
            }
        }
        cfg.apply_overrides(std::env::var(SEED_VAR).ok().as_deref(), std::env::var(OUTPUT_VAR).ok().as_deref())?;
        Ok(cfg)
    }

    /// A seed override replaces the seed list with that single seed.
    pub fn apply_overrides(&mut self, seed: Option<&str>, output_dir: Option<&str>) -> Result<()> {
        if let Some(s) = seed {
            let seed = s.trim().parse().map_err(|_| Error::Config(format!("{SEED_VAR}={s} is not a seed")))?;
            self.seeds = vec![seed];
        }
        if let Some(dir) = output_dir {
            self.output.dir = PathBuf::from(dir);
        }
        Ok(())
    }

    pub fn planner_ids(&self) -> Result<Vec<PlannerId>> {
        self.planners.iter().map(|p| PlannerId::parse(p)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.planners.is_empty() {
            return Err(Error::Config("no planners requested".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("no seeds given".into()));
        }
        if let Some(p) = &self.slum.path {
            if !p.exists() {
                return Err(Error::Config(format!("slum file {} does not exist", p.display())));
            }
        }
        self.planner_ids()?;
        self.env.validate()?;
        self.train.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            planners = ["drl_gnn", "greedy_c_unmasked"]
            seeds = [1, 2]
            [slum]
            synthetic = { rows = 3, cols = 3 }
            [env]
            alpha1 = 0.5
            [train]
            max_iterations = 5
            [baselines]
            population = 10
            [output]
            dir = "results"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seeds, vec![1, 2]);
        assert_eq!(cfg.env.alpha1, 0.5);
        assert_eq!(cfg.train.max_iterations, 5);
        assert_eq!(cfg.baselines.population, 10);
        assert_eq!(cfg.planner_ids().unwrap()[1], PlannerId::Baseline { kind: BaselineKind::GreedyC, masked: false });
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_and_planners_are_rejected() {
        assert!(matches!(ExperimentConfig::from_toml("[env]\nbeta = 1"), Err(Error::Config(_))));
        assert!(matches!(PlannerId::parse("dijkstra"), Err(Error::UnknownVariant(_))));
    }

    #[test]
    fn overrides() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_overrides(Some("7"), Some("/tmp/x")).unwrap();
        assert_eq!(cfg.seeds, vec![7]);
        assert_eq!(cfg.output.dir, PathBuf::from("/tmp/x"));
        assert!(cfg.apply_overrides(Some("seven"), None).is_err());
    }
}
