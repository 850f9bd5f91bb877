use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tizx::detector::PolarityChaining;
use tizx::harness::SweepConfig;
use tizx::mimosim::NoiseModel;
use tizx::optimizer::{DesignProblem, SearchConfig};
use tizx::spectrum::{ContainmentOptions, PowerReference};
use tizx::zxmap::{published_table, CoefficientSet};
use tizx::{CoefficientSet64, ZxParams};

use crate::Failure;

/// Link and design parameters. Time is normalized to `T = 1`; frequencies
/// are in units of `1/T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub m_rx: usize,
    /// Nyquist intervals per rail and frame.
    pub n_intervals: usize,
    pub f_c: f64,
    pub eta_min: f64,
    /// Coefficient energy budget `m E_0 / (2 N_tot)`.
    pub energy_budget: f64,
    /// Total frame energy over all users; omitted means the budget normalization.
    pub e0: Option<f64>,
    pub n_t: usize,
    pub n_u: usize,
    pub reference: PowerReference,
    pub quadrature_intervals: usize,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            m_rx: 3,
            n_intervals: 30,
            f_c: 0.65,
            eta_min: 0.95,
            energy_budget: 1.0,
            e0: None,
            n_t: 8,
            n_u: 2,
            reference: PowerReference::default(),
            quadrature_intervals: ContainmentOptions::default().intervals,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BerSection {
    pub snr_grid_db: Vec<f64>,
    pub min_bits: u64,
    pub min_errors: u64,
    pub max_bits: u64,
    pub chaining: PolarityChaining,
    pub noise_model: NoiseModel,
}

impl Default for BerSection {
    fn default() -> Self {
        let s = SweepConfig::default();
        Self {
            snr_grid_db: s.snr_grid_db,
            min_bits: s.min_bits,
            min_errors: s.min_errors,
            max_bits: s.max_bits,
            chaining: s.chaining,
            noise_model: s.noise_model,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsdSection {
    pub frames: usize,
}

impl Default for PsdSection {
    fn default() -> Self {
        Self { frames: 10_000 }
    }
}

/// Full run description, as read from TOML and echoed into `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `auto` (published table for `m_rx`), `table4`, `table5`, `optimize`,
    /// or a path to a coefficient text file.
    pub coefficients: String,
    pub output_dir: PathBuf,
    pub master_seed: u64,
    pub system: SystemConfig,
    pub ber: BerSection,
    pub psd: PsdSection,
    pub search: SearchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            coefficients: "auto".into(),
            output_dir: PathBuf::from("out"),
            master_seed: 1,
            system: SystemConfig::default(),
            ber: BerSection::default(),
            psd: PsdSection::default(),
            search: SearchConfig::default(),
        }
    }
}

/// Where coefficients come from.
#[derive(Clone, Debug, PartialEq)]
pub enum CoeffSource {
    Published,
    Table4,
    Table5,
    Optimize,
    File(PathBuf),
}

impl RunConfig {
    /// Reads a TOML config, or the `config` object of an earlier `summary.json`.
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            #[derive(Deserialize)]
            struct Summary {
                config: RunConfig,
            }
            let s: Summary =
                serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
            return Ok(s.config);
        }
        toml::from_str(&text).map_err(|e| Failure::config(format!("{}: {}", path.display(), e.message())))
    }

    pub fn params(&self) -> Result<ZxParams, Failure> {
        ZxParams::new(self.system.m_rx).map_err(Failure::from)
    }

    pub fn source(&self) -> CoeffSource {
        match self.coefficients.as_str() {
            "auto" => CoeffSource::Published,
            "table4" => CoeffSource::Table4,
            "table5" => CoeffSource::Table5,
            "optimize" => CoeffSource::Optimize,
            p => CoeffSource::File(PathBuf::from(p)),
        }
    }

    pub fn validate(&self) -> Result<(), Failure> {
        self.params()?;
        self.problem()?.validate().map_err(Failure::from)?;
        self.sweep().validate().map_err(Failure::from)?;
        if self.psd.frames < 100 {
            return Err(Failure::config(format!(
                "psd.frames must be at least 100, got {}",
                self.psd.frames
            )));
        }
        let expect = match self.source() {
            CoeffSource::Table4 => Some(2),
            CoeffSource::Table5 => Some(3),
            _ => None,
        };
        if let Some(m) = expect.filter(|&m| m != self.system.m_rx) {
            return Err(Failure::config(format!(
                "coefficients = \"{}\" is for m_rx = {m}, but m_rx = {}",
                self.coefficients, self.system.m_rx
            )));
        }
        if let CoeffSource::File(p) = self.source() {
            if !p.is_file() {
                return Err(Failure::config(format!(
                    "coefficient file {} does not exist",
                    p.display()
                )));
            }
        }
        Ok(())
    }

    pub fn containment(&self) -> ContainmentOptions {
        ContainmentOptions {
            intervals: self.system.quadrature_intervals,
            reference: self.system.reference,
        }
    }

    pub fn problem(&self) -> Result<DesignProblem<f64>, Failure> {
        let mut p = DesignProblem::new(self.params()?);
        p.energy_budget = self.system.energy_budget;
        p.f_c = self.system.f_c;
        p.eta_min = self.system.eta_min;
        p.containment = self.containment();
        Ok(p)
    }

    pub fn search(&self) -> SearchConfig {
        SearchConfig {
            seed: self.master_seed,
            ..self.search.clone()
        }
    }

    pub fn sweep(&self) -> SweepConfig {
        SweepConfig {
            snr_grid_db: self.ber.snr_grid_db.clone(),
            n_t: self.system.n_t,
            n_u: self.system.n_u,
            n_intervals: self.system.n_intervals,
            e0: self.system.e0,
            symbol_period: 1.0,
            f_c: self.system.f_c,
            eta_min: self.system.eta_min,
            min_bits: self.ber.min_bits,
            min_errors: self.ber.min_errors,
            max_bits: self.ber.max_bits,
            master_seed: self.master_seed,
            chaining: self.ber.chaining,
            noise_model: self.ber.noise_model,
        }
    }

    /// Loads (or designs) the coefficient set this run uses.
    pub fn coefficients(&self) -> Result<CoefficientSet64, Failure> {
        let params = self.params()?;
        let set = match self.source() {
            CoeffSource::Published => published_table(params.m_rx()).map_err(Failure::from)?,
            CoeffSource::Table4 => tizx::zxmap::table4(),
            CoeffSource::Table5 => tizx::zxmap::table5(),
            CoeffSource::Optimize => {
                tizx::optimizer::solve(&self.problem()?, &self.search())
                    .map_err(Failure::from)?
                    .into_result()
                    .map_err(Failure::from)?
                    .coeffs
            }
            CoeffSource::File(p) => {
                let text = std::fs::read_to_string(&p)
                    .map_err(|e| Failure::config(format!("cannot read {}: {e}", p.display())))?;
                CoefficientSet::from_text(&text).map_err(|e| Failure::config(format!("{}: {e}", p.display())))?
            }
        };
        if set.params() != params {
            return Err(Failure::config(format!(
                "coefficient set is for m_rx = {}, but m_rx = {}",
                set.params().m_rx(),
                params.m_rx()
            )));
        }
        Ok(set)
    }
}
