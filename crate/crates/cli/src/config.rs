use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use nrep_core::adapt::AdaptConfig;
use nrep_core::experiments::{experiment_pool_config, initial_state, probe_layout, Algorithm};
use nrep_core::fock::StateVector;
use nrep_core::io::read_rdm;
use nrep_core::pool::PoolConfig;
use nrep_core::rdm::{RdmLayout, RdmMatrix};
use nrep_core::targets::{
    add_noise, build_mixture_target, exact_diagonalize, hartree_fock_modes, load_fcidump, thermal_rdm, KbtRule,
    MixtureSpec, NoiseSpec, SzSector, ThermalInfo, ThermalSpec,
};

use crate::Failure;

/// Top-level run description, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Algorithm,
    /// Default seed for every random stream that does not set its own.
    #[serde(default)]
    pub seed: u64,
    pub system: SystemConfig,
    pub target: TargetConfig,
    /// `adapt.p` is always taken from `target.p`.
    #[serde(default)]
    pub adapt: AdaptConfig,
    #[serde(default = "experiment_pool_config")]
    pub pool: PoolConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SystemConfig {
    /// Two-determinant mixture; the first determinant seeds the probe.
    Model { n_spatial: usize, n_electrons: usize, determinants: Vec<Vec<usize>>, w: f64 },
    /// Canonical thermal state of an FCIDUMP Hamiltonian; the probe starts
    /// from the Hartree-Fock determinant.
    Molecule {
        fcidump: PathBuf,
        /// Defaults to NELEC from the file.
        #[serde(default)]
        n_electrons: Option<usize>,
        #[serde(default)]
        kbt: KbtRule,
        #[serde(default)]
        sector: SzSector,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub p: usize,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
    /// Use this RDM file instead of building the target.
    #[serde(default)]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub epsilon: f64,
    /// Falls back to the top-level seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub hermitize: bool,
    #[serde(default = "full_tensor")]
    pub layout: RdmLayout,
}

fn full_tensor() -> RdmLayout {
    RdmLayout::FullTensor
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out"), formats: vec![Format::Json, Format::Csv] }
    }
}

/// Command-line overrides shared by `make-target` and `probe`.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Algorithm>,
    #[arg(long)]
    pub p: Option<usize>,
    /// Mixture weight of the first determinant (model systems).
    #[arg(long)]
    pub w: Option<f64>,
    /// Noise strength; 0 disables noise.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub k_max: Option<usize>,
    /// External target RDM file.
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<Algorithm, String> {
    match s {
        "pure" => Ok(Algorithm::Pure),
        "ensemble" => Ok(Algorithm::Ensemble),
        _ => Err(format!("unknown mode {s:?}; use pure or ensemble")),
    }
}

impl RunConfig {
    /// Reads a config file, resolving relative paths (including the output
    /// directory) against its directory.
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))
            .map_err(Failure::Config)?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))
            .map_err(Failure::Config)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let SystemConfig::Molecule { fcidump, .. } = &mut cfg.system {
            resolve(fcidump);
        }
        if let Some(f) = &mut cfg.target.file {
            resolve(f);
        }
        resolve(&mut cfg.output.dir);
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides, threads: Option<usize>) -> Result<(), Failure> {
        if let Some(m) = o.mode {
            self.mode = m;
        }
        if let Some(p) = o.p {
            self.target.p = p;
        }
        if let Some(w) = o.w {
            match &mut self.system {
                SystemConfig::Model { w: cw, .. } => *cw = w,
                SystemConfig::Molecule { .. } => return Err(Failure::config("--w applies to model systems only")),
            }
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
            if let Some(n) = &mut self.target.noise {
                n.seed = None;
            }
        }
        if let Some(eps) = o.epsilon {
            self.target.noise = if eps == 0.0 {
                None
            } else {
                let mut n = self.target.noise.clone().unwrap_or(NoiseConfig {
                    epsilon: eps,
                    seed: None,
                    hermitize: false,
                    layout: RdmLayout::FullTensor,
                });
                n.epsilon = eps;
                Some(n)
            };
        }
        if let Some(d) = o.delta {
            self.adapt.delta = d;
        }
        if let Some(k) = o.k_max {
            self.adapt.k_max = k;
        }
        if let Some(t) = &o.target {
            self.target.file = Some(t.clone());
        }
        if let Some(d) = &o.out_dir {
            self.output.dir = d.clone();
        }
        if threads.is_some() {
            self.adapt.threads = threads;
        }
        self.adapt.p = self.target.p;
        self.validate()
    }

    pub fn validate(&self) -> Result<(), Failure> {
        self.adapt.validate().map_err(|e| Failure::Config(e.into()))?;
        if let SystemConfig::Model { determinants, .. } = &self.system {
            if determinants.is_empty() {
                return Err(Failure::config("model system needs at least one determinant"));
            }
        }
        if let SystemConfig::Molecule { fcidump, .. } = &self.system {
            if !fcidump.exists() {
                return Err(Failure::Data(anyhow::anyhow!("FCIDUMP file {} not found", fcidump.display())));
            }
        }
        if let Some(f) = &self.target.file {
            if !f.exists() {
                return Err(Failure::Data(anyhow::anyhow!("target file {} not found", f.display())));
            }
        }
        Ok(())
    }

    pub fn noise_spec(&self) -> Option<NoiseSpec> {
        self.target.noise.as_ref().map(|n| NoiseSpec {
            epsilon: n.epsilon,
            seed: n.seed.unwrap_or(self.seed),
            hermitize: n.hermitize,
            layout: n.layout,
        })
    }
}

/// A built target plus what is needed to probe it.
pub struct Prepared {
    pub target: RdmMatrix<f64>,
    pub initial: StateVector<f64>,
    pub thermal: Option<ThermalInfo>,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared, Failure> {
    let p = cfg.target.p;
    let (target, initial, thermal) = match &cfg.system {
        SystemConfig::Model { n_spatial, n_electrons, determinants, w } => {
            let n_modes = 2 * n_spatial;
            let layout = probe_layout(cfg.mode, n_modes, *n_electrons).map_err(Failure::from_core)?;
            let initial = initial_state(cfg.mode, n_modes, &determinants[0]).map_err(Failure::from_core)?;
            let target = if cfg.target.file.is_some() {
                None
            } else {
                let spec = MixtureSpec { determinants: determinants.clone(), w: *w };
                Some(build_mixture_target(&spec, &layout, p).map_err(Failure::from_core)?)
            };
            (target, initial, None)
        }
        SystemConfig::Molecule { fcidump, n_electrons, kbt, sector } => {
            let ints = load_fcidump(fcidump)
                .map_err(|e| Failure::Data(anyhow::Error::new(e).context(format!("loading {}", fcidump.display()))))?;
            let n = n_electrons.unwrap_or(ints.nelec);
            let initial = initial_state(cfg.mode, 2 * ints.norb, &hartree_fock_modes(n)).map_err(Failure::from_core)?;
            if cfg.target.file.is_some() {
                (None, initial, None)
            } else {
                let spectrum = exact_diagonalize::<f64>(&ints, n, *sector).map_err(Failure::from_core)?;
                let spec = ThermalSpec { n_electrons: n, kbt: *kbt, sector: *sector };
                let (t, info) = thermal_rdm(&spectrum, &spec, p).map_err(Failure::from_core)?;
                (Some(t), initial, Some(info))
            }
        }
    };
    let target = match (target, &cfg.target.file) {
        (Some(t), _) => t,
        (None, Some(path)) => {
            let (m, _) = read_rdm::<f64>(path)
                .map_err(|e| Failure::Data(anyhow::Error::new(e).context(format!("reading {}", path.display()))))?;
            m
        }
        (None, None) => unreachable!("target is built whenever no file is given"),
    };
    if target.p() != p {
        return Err(Failure::config(format!("target file has p = {}, config asks for p = {p}", target.p())));
    }
    if target.n_modes() != initial.layout().n_system_modes {
        return Err(Failure::config(format!(
            "target spans {} modes but the system register has {}",
            target.n_modes(),
            initial.layout().n_system_modes
        )));
    }
    let target = match cfg.noise_spec() {
        Some(n) => add_noise(&target, &n).map_err(Failure::from_core)?,
        None => target,
    };
    Ok(Prepared { target, initial, thermal })
}

/// Ensures a configured model system is internally consistent before any
/// expensive work.
pub fn check_model(cfg: &RunConfig) -> anyhow::Result<()> {
    if let SystemConfig::Model { n_spatial, n_electrons, determinants, .. } = &cfg.system {
        for d in determinants {
            if d.len() != *n_electrons {
                bail!("determinant {d:?} does not hold {n_electrons} electrons");
            }
            if let Some(m) = d.iter().find(|&&m| m >= 2 * n_spatial) {
                bail!("mode {m} out of range for {n_spatial} spatial orbitals");
            }
        }
    }
    Ok(())
}
