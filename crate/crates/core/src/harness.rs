//! Config-driven experiment runner.
//!
//! A config is a JSON object
//!
//! ```json
//! { "experiment": "qls-forward", "seed": 7, "params": { "resolution": 32 } }
//! ```
//!
//! `seed` is mandatory. `params` is optional and is decoded into the options
//! type of the named experiment, with unknown keys rejected. [`run`] writes
//! `report.json`, one CSV per table and `run-meta.json`. Everything that
//! varies between runs of the same config (wall-clock times, thread count)
//! lives in `run-meta.json` only, so `report.json` is byte-identical across
//! repeated runs.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::density::{density_check, DensityOptions};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::lincal::{
    decompose_refinement, sufficiency_check, tartar_check, DecomposeOptions, SufficiencyOptions,
    TartarOptions,
};
use crate::qls::{dtn_check, forward_orders, unique_check, QlsOptions};
use crate::quasimode::{residual_check, QuasimodeParams, ResidualOptions};
use crate::report::ExperimentReport;
use crate::stationary::{stationary_check, StationaryOptions};
use crate::Complex64;

/// Registered experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    QuasimodeResidual,
    StationaryPhase,
    DensityCheck,
    /// Plant, decompose and Tartar in one report.
    Lincal,
    LincalPlant,
    LincalDecompose,
    LincalTartar,
    QlsForward,
    QlsDtn,
    QlsUnique,
}

impl Experiment {
    pub const ALL: [Experiment; 10] = [
        Experiment::QuasimodeResidual,
        Experiment::StationaryPhase,
        Experiment::DensityCheck,
        Experiment::Lincal,
        Experiment::LincalPlant,
        Experiment::LincalDecompose,
        Experiment::LincalTartar,
        Experiment::QlsForward,
        Experiment::QlsDtn,
        Experiment::QlsUnique,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::QuasimodeResidual => "quasimode-residual",
            Experiment::StationaryPhase => "stationary-phase",
            Experiment::DensityCheck => "density-check",
            Experiment::Lincal => "lincal",
            Experiment::LincalPlant => "lincal-plant",
            Experiment::LincalDecompose => "lincal-decompose",
            Experiment::LincalTartar => "lincal-tartar",
            Experiment::QlsForward => "qls-forward",
            Experiment::QlsDtn => "qls-dtn",
            Experiment::QlsUnique => "qls-unique",
        }
    }

    /// The CLI subcommand that runs this experiment.
    pub fn family(self) -> &'static str {
        match self {
            Experiment::Lincal
            | Experiment::LincalPlant
            | Experiment::LincalDecompose
            | Experiment::LincalTartar => "lincal",
            e => e.name(),
        }
    }
}

impl FromStr for Experiment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::UnknownExperiment(s.to_string()))
    }
}

impl std::fmt::Display for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub experiment: String,
    pub seed: u64,
    #[serde(default)]
    pub params: Value,
}

impl Config {
    pub fn new(experiment: Experiment, seed: u64) -> Self {
        Self {
            experiment: experiment.name().into(),
            seed,
            params: Value::Null,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("malformed config: {e}")))?;
        cfg.kind()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn kind(&self) -> Result<Experiment> {
        self.experiment.parse()
    }

    fn options<T: serde::de::DeserializeOwned + Default>(&self) -> Result<T> {
        if self.params.is_null() {
            return Ok(T::default());
        }
        serde_json::from_value(self.params.clone())
            .map_err(|e| Error::Config(format!("params for `{}`: {e}", self.experiment)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub extents: Vec<(f64, f64)>,
    pub resolution: Vec<usize>,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.extents.clone(), self.resolution.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuasimodeCase {
    pub quasimode: QuasimodeParams,
    /// Replace `ε`, `p₃`, `p₄`, `p₅`, `q₁` by seeded random values.
    pub randomize: bool,
    /// Grid whose `x_1` extent fixes the residual slice.
    pub grid: GridSpec,
    pub residual: ResidualOptions,
}

impl Default for QuasimodeCase {
    fn default() -> Self {
        let mut q = QuasimodeParams::new(100.0, 0.5, 4);
        q.delta = 0.3;
        Self {
            quasimode: q,
            randomize: false,
            grid: GridSpec {
                extents: vec![(-0.1, 0.1), (0.9, 1.1), (-0.3, 0.3)],
                resolution: vec![8, 8, 9],
            },
            residual: ResidualOptions::default(),
        }
    }
}

impl QuasimodeCase {
    pub fn resolved(&self, seed: u64) -> QuasimodeParams {
        let mut p = self.quasimode.clone();
        if self.randomize {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut z = |r: f64| Complex64::new(rng.gen_range(-r..r), rng.gen_range(-r..r));
            p.p3 = z(0.3);
            p.p4 = z(0.3);
            p.p5 = z(0.3);
            p.q1 = z(0.5);
            p.eps = rng.gen_range(0.3..0.8);
        }
        p
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LincalSuite {
    /// Options blocks, decoded when the suite runs.
    pub plant: Option<Value>,
    pub decompose: Option<Value>,
    pub tartar: Option<Value>,
}

fn nested<T: serde::de::DeserializeOwned + Default>(v: &Option<Value>, what: &str) -> Result<T> {
    match v {
        None | Some(Value::Null) => Ok(T::default()),
        Some(v) => serde_json::from_value(v.clone())
            .map_err(|e| Error::Config(format!("lincal.{what}: {e}"))),
    }
}

/// Run one experiment in memory.
pub fn execute(cfg: &Config) -> Result<ExperimentReport> {
    let seed = cfg.seed;
    let mut rep = match cfg.kind()? {
        Experiment::QuasimodeResidual => {
            let case: QuasimodeCase = cfg.options()?;
            let params = case.resolved(seed);
            let mut rep = residual_check(&params, &case.grid.build()?, &case.residual)?;
            rep.param("randomized", case.randomize);
            rep.param("grid", &case.grid);
            rep
        }
        Experiment::StationaryPhase => {
            stationary_check(&cfg.options::<StationaryOptions>()?, seed)?
        }
        Experiment::DensityCheck => {
            let mut opts: DensityOptions = cfg.options()?;
            opts.seed = seed;
            density_check(&opts)?
        }
        Experiment::Lincal => {
            let suite: LincalSuite = cfg.options()?;
            let plant: SufficiencyOptions = nested(&suite.plant, "plant")?;
            let dec: DecomposeOptions = nested(&suite.decompose, "decompose")?;
            let tartar: TartarOptions = nested(&suite.tartar, "tartar")?;
            let (a, (b, c)) = rayon::join(
                || sufficiency_check(&plant, seed),
                || {
                    rayon::join(
                        || decompose_refinement(&dec, seed),
                        || tartar_check(&tartar),
                    )
                },
            );
            let mut rep = ExperimentReport::new("lincal", seed);
            for (prefix, sub) in [("plant", a?), ("decompose", b?), ("tartar", c?)] {
                rep.param(prefix, &sub.params);
                rep.absorb(prefix, sub);
            }
            rep
        }
        Experiment::LincalPlant => sufficiency_check(&cfg.options::<SufficiencyOptions>()?, seed)?,
        Experiment::LincalDecompose => {
            decompose_refinement(&cfg.options::<DecomposeOptions>()?, seed)?
        }
        Experiment::LincalTartar => tartar_check(&cfg.options::<TartarOptions>()?)?,
        Experiment::QlsForward => forward_orders(&cfg.options::<QlsOptions>()?, seed)?,
        Experiment::QlsDtn => dtn_check(&cfg.options::<QlsOptions>()?, seed)?,
        Experiment::QlsUnique => unique_check(&cfg.options::<QlsOptions>()?, seed)?,
    };
    rep.experiment = cfg.experiment.clone();
    rep.seed = seed;
    if rep.metrics.is_empty() {
        return Err(Error::Diagnostics(format!(
            "experiment `{}` registered no metrics",
            cfg.experiment
        )));
    }
    Ok(rep)
}

/// Non-deterministic facts about a run, kept out of `report.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub experiment: String,
    pub started_unix: f64,
    pub elapsed_seconds: f64,
    pub threads: usize,
    pub version: String,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: ExperimentReport,
    pub report_path: PathBuf,
    pub meta_path: PathBuf,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.report.pass()
    }

    /// Process exit code: 0 iff every metric passes.
    pub fn exit_code(&self) -> i32 {
        if self.pass() {
            0
        } else {
            1
        }
    }
}

/// Run `cfg` and write its artifacts into `out_dir`.
pub fn run_config(cfg: &Config, out_dir: &Path) -> Result<Outcome> {
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    let clock = Instant::now();
    let mut report = execute(cfg)?;
    let report_path = report.write(out_dir)?;
    let meta = RunMeta {
        experiment: cfg.experiment.clone(),
        started_unix: started,
        elapsed_seconds: clock.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
        version: env!("CARGO_PKG_VERSION").into(),
    };
    let meta_path = out_dir.join("run-meta.json");
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(Outcome {
        report,
        report_path,
        meta_path,
    })
}

/// Load the config at `path` and [`run_config`] it.
pub fn run(path: &Path, out_dir: &Path) -> Result<Outcome> {
    run_config(&Config::load(path)?, out_dir)
}

/// Run several configs concurrently, each into `out_dir/<index>-<name>`.
pub fn run_all(cfgs: &[Config], out_dir: &Path) -> Vec<Result<Outcome>> {
    use rayon::prelude::*;
    cfgs.par_iter()
        .enumerate()
        .map(|(i, c)| run_config(c, &out_dir.join(format!("{i:02}-{}", c.experiment))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
            let via_serde: Experiment =
                serde_json::from_value(Value::String(e.name().into())).unwrap();
            assert_eq!(via_serde, e);
        }
        assert!(matches!(
            "nope".parse::<Experiment>(),
            Err(Error::UnknownExperiment(_))
        ));
    }

    #[test]
    fn seed_is_mandatory() {
        let r = Config::parse(r#"{"experiment": "qls-dtn"}"#);
        assert!(matches!(r, Err(Error::Config(_))));
        assert!(Config::parse(r#"{"experiment": "qls-dtn", "seed": 3}"#).is_ok());
    }

    #[test]
    fn unknown_experiment_and_keys() {
        assert!(matches!(
            Config::parse(r#"{"experiment": "qls", "seed": 1}"#),
            Err(Error::UnknownExperiment(_))
        ));
        assert!(matches!(
            Config::parse(r#"{"experiment": "qls-dtn", "seed": 1, "extra": 0}"#),
            Err(Error::Config(_))
        ));
        let cfg =
            Config::parse(r#"{"experiment": "qls-dtn", "seed": 1, "params": {"resolutoin": 8}}"#)
                .unwrap();
        assert!(matches!(execute(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn families() {
        assert_eq!(Experiment::LincalTartar.family(), "lincal");
        assert_eq!(Experiment::QlsDtn.family(), "qls-dtn");
    }

    #[test]
    fn randomized_quasimode_params_depend_on_seed() {
        let case = QuasimodeCase {
            randomize: true,
            ..Default::default()
        };
        assert_eq!(case.resolved(4), case.resolved(4));
        assert_ne!(case.resolved(4), case.resolved(5));
        assert_eq!(
            QuasimodeCase::default().resolved(4),
            QuasimodeCase::default().quasimode
        );
    }
}
