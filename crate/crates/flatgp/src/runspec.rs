//! On-disk run configuration.
//!
//! Every CLI flag has a field here, so a run can be captured to a TOML file
//! and replayed exactly; load, save, load is the identity.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::breed::BreedParams;
use crate::engine::{EngineConfig, ProblemKind};
use crate::error::{Error, Result};
use crate::tree::StructureParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSpec {
    /// "sextic", "mux6", or a path to a numeric suite CSV.
    pub problem: String,
    /// Fitness cases for generated numeric suites; mux6 and CSV suites
    /// carry their own case count.
    pub cases: usize,
    pub pop: usize,
    pub gens: usize,
    pub max_size: usize,
    pub init_depth: [usize; 2],
    pub threads: usize,
    pub seed: u64,
    pub tournament: usize,
    pub xo_rate: f64,
    pub mutation_rate: f64,
    pub mutation_depth: [usize; 2],
    pub p_site_function: f64,
    pub incremental: bool,
    pub fitness_first: bool,
    pub in_place: bool,
    pub fatherless: bool,
    pub elitism: bool,
}

impl Default for RunSpec {
    fn default() -> Self {
        let bp = BreedParams::default();
        RunSpec {
            problem: "sextic".into(),
            cases: 48,
            pop: 500,
            gens: 20,
            max_size: 10_000,
            init_depth: [2, 6],
            threads: 1,
            seed: 1,
            tournament: bp.tournament_k,
            xo_rate: bp.xo_rate,
            mutation_rate: 0.1,
            mutation_depth: [bp.mutation_depth.0, bp.mutation_depth.1],
            p_site_function: bp.p_site_function,
            incremental: true,
            fitness_first: true,
            in_place: true,
            fatherless: true,
            elitism: false,
        }
    }
}

impl RunSpec {
    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Parse(format!("run config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("plain fields always serialize")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_toml())?)
    }

    /// Translate into an engine configuration and problem choice. The two
    /// operator rates are redundant on purpose (they mirror the flags); they
    /// must sum to one.
    pub fn to_engine(&self) -> Result<(EngineConfig, ProblemKind)> {
        if (self.xo_rate + self.mutation_rate - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "crossover rate {} and mutation rate {} must sum to 1",
                self.xo_rate, self.mutation_rate
            )));
        }
        let kind = match self.problem.as_str() {
            "sextic" => ProblemKind::Sextic { cases: self.cases },
            "mux6" => ProblemKind::Mux6,
            path => ProblemKind::CustomCsv(PathBuf::from(path)),
        };
        let mut cfg = EngineConfig::new(self.pop, self.gens);
        cfg.threads = self.threads;
        cfg.seed = self.seed;
        cfg.breed = BreedParams {
            tournament_k: self.tournament,
            xo_rate: self.xo_rate,
            p_site_function: self.p_site_function,
            mutation_depth: (self.mutation_depth[0], self.mutation_depth[1]),
            ..BreedParams::default()
        };
        cfg.structure = StructureParams::new(self.max_size, (self.init_depth[0], self.init_depth[1]));
        cfg.incremental = self.incremental;
        cfg.fitness_first = self.fitness_first;
        cfg.in_place = self.in_place;
        cfg.fatherless = self.fatherless;
        cfg.elitism = self.elitism;
        cfg.validate()?;
        Ok((cfg, kind))
    }
}
