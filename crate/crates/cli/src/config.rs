//! Experiment configuration: one JSON document, every block optional.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ostrovsky_core::evolve::{EvolutionConfig, SmoothDatum};
use ostrovsky_core::normal_form::NfDatum;
use ostrovsky_core::picard::PicardCase;
use ostrovsky_core::regularity::{EstimatorConfig, SmoothingOptions};
use ostrovsky_core::{DispersionParams, FrequencyGrid};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Base seed; ensemble member `m` draws from `(seed << 32) | m`.
    pub seed: u64,
    pub grid: GridBlock,
    pub dispersion: DispersionBlock,
    pub evolution: EvolutionBlock,
    /// Initial datum for `evolve` and `kdv-limit`; amplitude 0 gives zero data.
    pub datum: SmoothDatum,
    pub smoothing: SmoothingBlock,
    pub picard: PicardBlock,
    pub nf: NfBlock,
    pub bscan: BScanBlock,
    pub kdv: KdvBlock,
    pub lemma: LemmaBlock,
    pub thresholds: Thresholds,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            grid: GridBlock {
                period: 64.0 * PI,
                modes: 4096,
            },
            dispersion: DispersionBlock::default(),
            evolution: EvolutionBlock {
                dt: 1e-3,
                horizon: 1.0,
                record_every: 100,
                nonlinear: true,
                diagnostic_s: 1.0,
            },
            datum: SmoothDatum::default(),
            smoothing: SmoothingBlock::default(),
            picard: PicardBlock::default(),
            nf: NfBlock::default(),
            bscan: BScanBlock::default(),
            kdv: KdvBlock::default(),
            lemma: LemmaBlock::default(),
            thresholds: Thresholds::default(),
            output: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    #[serde(rename = "period_L")]
    pub period: f64,
    #[serde(rename = "modes_N")]
    pub modes: usize,
}

impl GridBlock {
    pub fn build(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::new(self.period, self.modes).map_err(Into::into)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DispersionBlock {
    pub beta: f64,
    pub gamma: f64,
    #[serde(rename = "cutoff_Xi0")]
    pub cutoff: f64,
    pub lowhigh_ratio: f64,
}

impl Default for DispersionBlock {
    fn default() -> Self {
        let p = DispersionParams::default();
        Self {
            beta: p.beta,
            gamma: p.gamma,
            cutoff: p.cutoff,
            lowhigh_ratio: p.lowhigh_ratio,
        }
    }
}

impl DispersionBlock {
    pub fn params(&self) -> Result<DispersionParams> {
        let p = DispersionParams {
            beta: self.beta,
            gamma: self.gamma,
            cutoff: self.cutoff,
            lowhigh_ratio: self.lowhigh_ratio,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionBlock {
    pub dt: f64,
    #[serde(rename = "horizon_T")]
    pub horizon: f64,
    pub record_every: usize,
    #[serde(default = "yes")]
    pub nonlinear: bool,
    #[serde(default = "one")]
    pub diagnostic_s: f64,
}

fn yes() -> bool {
    true
}

fn one() -> f64 {
    1.0
}

impl EvolutionBlock {
    pub fn build(&self, params: DispersionParams) -> Result<EvolutionConfig> {
        let cfg = EvolutionConfig {
            params,
            dt: self.dt,
            horizon: self.horizon,
            record_every: self.record_every,
            nonlinear: self.nonlinear,
            diagnostic_s: self.diagnostic_s,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmoothingBlock {
    pub s: f64,
    pub delta: f64,
    /// `‖f‖_{H^s}` of every member.
    pub amplitude: f64,
    pub seeds: Vec<u64>,
    /// Extra exponents `a` at which `max_t ‖v(t)‖_{H^{s+a}}` is tabulated.
    pub a_grid: Vec<f64>,
    pub grid: GridBlock,
    pub evolution: EvolutionBlock,
    pub estimator: EstimatorConfig,
    pub pileup_limit: f64,
    pub max_phase_step: f64,
}

impl Default for SmoothingBlock {
    fn default() -> Self {
        let opts = SmoothingOptions::default();
        Self {
            s: 0.0,
            delta: 0.01,
            amplitude: 1.0,
            seeds: (0..8).collect(),
            a_grid: vec![0.25, 0.4, 0.5, 0.6],
            grid: GridBlock {
                period: 100.0 * PI,
                modes: 8192,
            },
            evolution: EvolutionBlock {
                dt: 1e-4,
                horizon: 0.5,
                record_every: 1000,
                nonlinear: true,
                diagnostic_s: 0.0,
            },
            estimator: opts.estimator,
            pileup_limit: opts.pileup_limit,
            max_phase_step: opts.max_phase_step,
        }
    }
}

impl SmoothingBlock {
    pub fn options(&self) -> SmoothingOptions {
        SmoothingOptions {
            estimator: self.estimator,
            pileup_limit: self.pileup_limit,
            max_phase_step: self.max_phase_step,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardBlock {
    pub cases: Vec<PicardCase>,
    pub s: f64,
    pub a: f64,
    #[serde(rename = "N_list")]
    pub n_list: Vec<f64>,
    pub t: f64,
}

impl Default for PicardBlock {
    fn default() -> Self {
        Self {
            cases: vec![
                PicardCase::Gamma0,
                PicardCase::GammaNeg1,
                PicardCase::GammaPos1,
            ],
            s: 0.0,
            a: 0.25,
            n_list: (4..=9).map(|j| f64::from(1u32 << j)).collect(),
            t: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NfBlock {
    /// Sobolev index of the residual norm.
    pub s: f64,
    /// Snapshot spacings, each rounded to whole records.
    pub spacings: Vec<f64>,
    /// Spacing at which the relative residual is checked.
    pub check_spacing: f64,
    pub datum: NfDatum,
    pub grid: GridBlock,
    pub evolution: EvolutionBlock,
}

impl Default for NfBlock {
    fn default() -> Self {
        Self {
            s: 0.0,
            spacings: vec![4e-3, 2e-3, 1e-3, 5e-4],
            check_spacing: 1e-3,
            datum: NfDatum::default(),
            grid: GridBlock {
                period: 40.0 * PI,
                modes: 1024,
            },
            evolution: EvolutionBlock {
                dt: 1e-4,
                horizon: 0.02,
                record_every: 1,
                nonlinear: true,
                diagnostic_s: 0.0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BScanBlock {
    pub s: f64,
    pub a_list: Vec<f64>,
    /// Grid sizes of the random ensembles, all on the period `period_L`.
    #[serde(rename = "N_list")]
    pub n_list: Vec<usize>,
    #[serde(rename = "period_L")]
    pub period: f64,
    pub seeds: Vec<u64>,
    pub sharpness_n_list: Vec<f64>,
    pub sharpness_exponents: Vec<f64>,
}

impl Default for BScanBlock {
    fn default() -> Self {
        Self {
            s: 0.0,
            a_list: vec![0.5],
            n_list: (10..=13).map(|j| 1usize << j).collect(),
            period: 20.0 * PI,
            seeds: (0..8).collect(),
            sharpness_n_list: (4..=8).map(|j| f64::from(1u32 << j)).collect(),
            sharpness_exponents: vec![0.5, 0.75],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KdvBlock {
    pub gammas: Vec<f64>,
    /// Overrides `evolution.horizon_T`.
    #[serde(rename = "horizon_T")]
    pub horizon: f64,
}

impl Default for KdvBlock {
    fn default() -> Self {
        Self {
            gammas: vec![1.0, 0.1, 0.01],
            horizon: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LemmaBlock {
    /// `(β, γ)` pairs.
    pub exponents: Vec<(f64, f64)>,
    /// Values of `a₁ − a₂` (with `a₂ = 0`).
    pub separations: Vec<f64>,
}

impl Default for LemmaBlock {
    fn default() -> Self {
        Self {
            exponents: vec![(2.0, 0.6), (1.0, 0.5), (0.8, 0.4)],
            separations: vec![0.0, 1.0, 10.0, 100.0, 1000.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub evolve_max_l2_drift: f64,
    pub evolve_min_order: f64,
    /// Relative error of the configured step against a `dt/8` reference.
    pub evolve_max_time_error: f64,
    pub evolve_max_top_band: f64,
    pub smoothing_gain_lo: f64,
    pub smoothing_gain_hi: f64,
    pub smoothing_min_seed_gain: f64,
    pub picard_min_growth_slope: f64,
    pub picard_max_control_slope: f64,
    pub picard_max_quad_error: f64,
    pub nf_order: f64,
    pub nf_order_tol: f64,
    pub nf_max_relative: f64,
    pub bscan_max_spread: f64,
    pub bscan_min_excess_slope: f64,
    pub lemma_max_spread: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            evolve_max_l2_drift: 1e-6,
            evolve_min_order: 3.5,
            evolve_max_time_error: 1e-6,
            evolve_max_top_band: 1e-8,
            smoothing_gain_lo: 0.30,
            smoothing_gain_hi: 0.65,
            smoothing_min_seed_gain: 0.15,
            picard_min_growth_slope: 0.15,
            picard_max_control_slope: 0.05,
            picard_max_quad_error: 1e-8,
            nf_order: 2.0,
            nf_order_tol: 0.3,
            nf_max_relative: 1e-3,
            bscan_max_spread: 2.0,
            bscan_min_excess_slope: 0.15,
            lemma_max_spread: 3.0,
        }
    }
}

impl ExperimentConfig {
    /// Defaults, then the file at `path` (if any), then `key=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                let parsed: Self = serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", p.display()))?;
                serde_json::to_value(parsed)?
            }
            None => serde_json::to_value(Self::default())?,
        };
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: Self = serde_json::from_value(value).context("applying overrides")?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Member seed for ensemble index `member`.
    pub fn member_seed(&self, member: u64) -> Result<u64> {
        if member > u64::from(u32::MAX) || self.seed > u64::from(u32::MAX) {
            bail!("seeds and ensemble members must fit in 32 bits");
        }
        Ok((self.seed << 32) | member)
    }

    /// Checks that do not need any computation.
    pub fn validate(&self) -> Result<()> {
        let p = self.dispersion.params()?;
        self.grid.build()?;
        self.evolution.build(p)?;
        self.smoothing.grid.build()?;
        self.smoothing.evolution.build(p)?;
        self.nf.grid.build()?;
        self.nf.evolution.build(p)?;
        self.member_seed(0)?;
        for &m in self.smoothing.seeds.iter().chain(&self.bscan.seeds) {
            self.member_seed(m)?;
        }
        if self.smoothing.seeds.is_empty() {
            bail!("smoothing.seeds is empty");
        }
        if !(self.smoothing.delta > 0.0) {
            bail!("smoothing.delta must be positive");
        }
        if self.picard.n_list.iter().any(|&n| !(n >= 2.0)) {
            bail!("picard.N_list entries must be at least 2");
        }
        if self.nf.spacings.is_empty() || self.nf.spacings.iter().any(|&h| !(h > 0.0)) {
            bail!("nf.spacings must be positive and non-empty");
        }
        if self.kdv.gammas.iter().any(|&g| !(g >= 0.0)) || !(self.kdv.horizon > 0.0) {
            bail!("kdv.gammas must be non-negative and kdv.horizon_T positive");
        }
        for &n in &self.bscan.n_list {
            FrequencyGrid::new(self.bscan.period, n)?;
        }
        for &(beta, gamma) in &self.lemma.exponents {
            if !(beta >= gamma && gamma >= 0.0 && beta + gamma > 1.0) {
                bail!(
                    "lemma exponents ({beta}, {gamma}) need beta >= gamma >= 0, beta + gamma > 1"
                );
            }
        }
        Ok(())
    }

    /// Canonical text written to `config.json` and hashed into every output.
    pub fn echo(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Set `a.b.c=value` in a JSON tree.  The value is parsed as JSON when it
/// can be and taken as a string otherwise.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{assignment}` is not of the form key=value"))?;
    let new: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.into()));
    let mut node = root;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| anyhow!("`{}` is not a block", keys[..i].join(".")))?;
        if !obj.contains_key(*key) {
            bail!("unknown config key `{}`", keys[..=i].join("."));
        }
        node = obj.get_mut(*key).expect("checked above");
    }
    *node = new;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
