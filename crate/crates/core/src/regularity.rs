//! Random data of prescribed Sobolev regularity, spectral-slope regularity
//! estimates, and the smoothing-gain measurement for `v = u(T) − S(T)f`.
//!
//! Regularity is read off the decay of band energies: `|û|² ~ ⟨ξ⟩^{−2σ−1}`
//! gives `E[lo, 2^{1/q}lo) ~ lo^{−2σ}`, so `σ = −slope/2` in `log₂ E` against
//! `log₂ lo`.  Bands are log-uniform with `q` per octave so that a window of a
//! couple of octaves, all that a desk-scale grid offers above the cutoff,
//! still yields enough points for a fit.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispersion::propagate;
use crate::evolve::{evolve, EvolutionConfig, EvolveError};
use crate::spectral::{japanese, FractionalBand, FrequencyGrid, SpectralError, SpectralField};
use crate::stats::{fit_line, summarize, LineFit, Summary};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegularityError {
    #[error("only {found} nonempty bands in [{lo}, {hi}), need {needed}")]
    TooFewBands {
        found: usize,
        needed: usize,
        lo: f64,
        hi: f64,
    },
    #[error(
        "under-resolved: top retained band holds {ratio:.3} times the energy the fit predicts"
    )]
    UnderResolved { ratio: f64 },
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("invalid argument: {0}")]
    BadArgument(String),
}

pub type Result<T> = std::result::Result<T, RegularityError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomDataSpec {
    pub s: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Target `‖f‖_{H^s}`.
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    pub seed: u64,
}

fn default_delta() -> f64 {
    0.01
}

fn default_amplitude() -> f64 {
    1.0
}

impl RandomDataSpec {
    pub fn new(s: f64, seed: u64) -> Self {
        Self {
            s,
            delta: default_delta(),
            amplitude: default_amplitude(),
            seed,
        }
    }
}

/// `|û(ξ_k)| ∝ ⟨ξ_k⟩^{−s−1/2−δ}` with independent uniform phases, Hermitian,
/// zero mean and Nyquist, scaled to `‖f‖_{H^s} = amplitude`.
pub fn random_hs_data(spec: &RandomDataSpec, grid: &FrequencyGrid) -> Result<SpectralField> {
    if !(spec.delta > 0.0 && spec.amplitude >= 0.0 && spec.s.is_finite()) {
        return Err(RegularityError::BadArgument(format!(
            "need delta > 0 and amplitude >= 0, got {} and {}",
            spec.delta, spec.amplitude
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut f = SpectralField::zeros(*grid);
    let exponent = -spec.s - 0.5 - spec.delta;
    for k in 1..(grid.modes() / 2) as i64 {
        let theta: f64 = rng.gen_range(0.0..2.0 * PI);
        let c = Complex64::from_polar(japanese(k as f64 * grid.dxi()).powf(exponent), theta);
        f.set_coeff(k, c);
        f.set_coeff(-k, c.conj());
    }
    let norm = f.sobolev_norm(spec.s);
    Ok(f.scale(spec.amplitude / norm))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    /// Bands per octave.
    pub per_octave: u32,
    /// Lower edge of the fit window (normally the cutoff `Ξ₀`).
    pub lo: f64,
    /// Upper edge as a fraction of the 2/3-rule cutoff; the top of the
    /// retained band is excluded.
    pub hi_fraction: f64,
    pub min_bands: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            per_octave: 4,
            lo: 10.0,
            hi_fraction: 0.75,
            min_bands: 5,
        }
    }
}

impl EstimatorConfig {
    pub fn window(&self, grid: &FrequencyGrid) -> (f64, f64) {
        (self.lo, self.hi_fraction * grid.dealias_cutoff())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityEstimate {
    pub sigma: f64,
    /// 95% half-width of `σ` from the slope fit.
    pub ci: f64,
    pub fit: LineFit,
    pub bands: Vec<FractionalBand>,
}

impl RegularityEstimate {
    /// Predicted `log₂` energy of a band with lower edge `lo` from the fit.
    pub fn predicted_log2_energy(&self, lo: f64) -> f64 {
        self.fit.intercept + self.fit.slope * lo.log2()
    }
}

/// Slope fit of fractional band energies over the configured window.
pub fn estimate_regularity(f: &SpectralField, est: &EstimatorConfig) -> Result<RegularityEstimate> {
    let (lo, hi) = est.window(f.grid());
    let bands: Vec<FractionalBand> = f
        .fractional_band_energies(est.per_octave, lo, hi)
        .into_iter()
        .filter(|b| b.energy > 0.0)
        .collect();
    if bands.len() < est.min_bands.max(2) {
        return Err(RegularityError::TooFewBands {
            found: bands.len(),
            needed: est.min_bands.max(2),
            lo,
            hi,
        });
    }
    let x: Vec<f64> = bands.iter().map(|b| b.log2_lo).collect();
    let y: Vec<f64> = bands.iter().map(|b| b.energy.log2()).collect();
    let fit = fit_line(&x, &y).expect("distinct band edges");
    Ok(RegularityEstimate {
        sigma: -fit.slope / 2.0,
        ci: fit.slope_ci95 / 2.0,
        fit,
        bands,
    })
}

/// Energy in the top retained band `[hi_fraction·ξ_c, ξ_c]` relative to what
/// the fitted slope predicts there; values well above 1 indicate pile-up.
pub fn top_band_excess(
    f: &SpectralField,
    estimate: &RegularityEstimate,
    est: &EstimatorConfig,
) -> f64 {
    let g = f.grid();
    let (lo, hi) = (est.hi_fraction * g.dealias_cutoff(), g.dealias_cutoff());
    let k_lo = (lo / g.dxi()).ceil() as i64;
    let k_hi = g.dealias_kmax();
    let actual: f64 = (k_lo..=k_hi)
        .map(|k| (f.coeff(k).norm_sqr() + f.coeff(-k).norm_sqr()) * g.dxi())
        .sum();
    // the fit models the energy of a band [b, 2^{1/q} b); integrate its density
    let q = est.per_octave as f64;
    let width = 2f64.powf(1.0 / q) - 1.0;
    let density = |x: f64| 2f64.powf(estimate.predicted_log2_energy(x)) / (width * x);
    let steps = 64;
    let h = (hi - lo) / steps as f64;
    let predicted: f64 = (0..steps)
        .map(|i| density(lo + (i as f64 + 0.5) * h) * h)
        .sum();
    if predicted > 0.0 {
        actual / predicted
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingOptions {
    pub estimator: EstimatorConfig,
    /// Abort when the top retained band of `v` exceeds the fitted prediction
    /// by this factor.
    pub pileup_limit: f64,
    /// Cap on `dt·|β|ξ_c³`; the configured step is shortened to meet it.
    pub max_phase_step: f64,
}

impl Default for SmoothingOptions {
    fn default() -> Self {
        Self {
            estimator: EstimatorConfig::default(),
            pileup_limit: 4.0,
            max_phase_step: 6.0,
        }
    }
}

/// One ensemble member.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainSample {
    pub seed: u64,
    pub sigma_f: f64,
    pub sigma_f_ci: f64,
    pub sigma_v: f64,
    pub sigma_v_ci: f64,
    pub gain: f64,
    pub pileup: f64,
    pub l2_drift: f64,
    pub times: Vec<f64>,
    /// `‖v(t)‖_{H^{s + â − 0.05}}` at every recorded time.
    pub v_norms: Vec<f64>,
    pub band_energies_f: Vec<FractionalBand>,
    pub band_energies_v: Vec<FractionalBand>,
    #[serde(skip)]
    pub data: Option<SpectralField>,
    /// `v` at the recorded times.
    #[serde(skip)]
    pub v_states: Vec<SpectralField>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothingReport {
    pub s: f64,
    pub gamma: f64,
    pub beta: f64,
    pub horizon: f64,
    pub sigma_f: f64,
    pub sigma_v: f64,
    pub gain_hat: f64,
    /// 95% half-width of the mean gain over seeds (fit CI for one seed).
    pub gain_ci: f64,
    pub theory_gain: f64,
    pub gain_stats: Summary,
    /// `v ≡ 0` (e.g. nonlinearity off): the gain is undefined.
    pub degenerate: bool,
    /// Every sample's `max_t ‖v(t)‖_{H^{s+â−0.05}}` is finite.
    pub bounded: bool,
    pub diagnostic: Option<String>,
    pub period: f64,
    pub modes: usize,
    pub dt: f64,
    pub window: (f64, f64),
    pub samples: Vec<GainSample>,
}

/// `min(s + 3/4, 1/2)`.
pub fn theory_gain(s: f64) -> f64 {
    (s + 0.75).min(0.5)
}

/// The step actually used by `smoothing_gain` for `cfg` on `grid`.
pub fn capped_dt(grid: &FrequencyGrid, cfg: &EvolutionConfig, opts: &SmoothingOptions) -> f64 {
    let stiff = cfg.params.beta.abs() * grid.dealias_cutoff().powi(3);
    if stiff > 0.0 {
        cfg.dt.min(opts.max_phase_step / stiff)
    } else {
        cfg.dt
    }
}

struct Run {
    seed: u64,
    data: SpectralField,
    times: Vec<f64>,
    v: Vec<SpectralField>,
    l2_drift: f64,
}

fn run(spec: &RandomDataSpec, grid: &FrequencyGrid, cfg: &EvolutionConfig) -> Result<Run> {
    let f = random_hs_data(spec, grid)?;
    let traj = evolve(&f, cfg)?;
    let v = traj
        .states
        .iter()
        .zip(&traj.times)
        .map(|(u, &t)| u - &propagate(&f, t, &cfg.params))
        .collect();
    Ok(Run {
        seed: spec.seed,
        data: f,
        l2_drift: traj.l2_drift(),
        times: traj.times,
        v,
    })
}

/// Below this `‖v‖/‖f‖` the nonlinear part is rounding noise.
const DEGENERATE_RATIO: f64 = 1e-10;

/// `None` when `v` vanishes to rounding.
fn assess(s: f64, r: Run, opts: &SmoothingOptions) -> Result<Option<GainSample>> {
    let v_final = r.v.last().expect("trajectory is non-empty");
    if v_final.l2_norm() <= DEGENERATE_RATIO * r.data.l2_norm() {
        return Ok(None);
    }
    let est_f = estimate_regularity(&r.data, &opts.estimator)?;
    let est_v = estimate_regularity(v_final, &opts.estimator)?;
    let pileup = top_band_excess(v_final, &est_v, &opts.estimator);
    if !(pileup <= opts.pileup_limit) {
        return Err(RegularityError::UnderResolved { ratio: pileup });
    }
    let gain = est_v.sigma - est_f.sigma;
    let probe = s + gain - 0.05;
    Ok(Some(GainSample {
        seed: r.seed,
        sigma_f: est_f.sigma,
        sigma_f_ci: est_f.ci,
        sigma_v: est_v.sigma,
        sigma_v_ci: est_v.ci,
        gain,
        pileup,
        l2_drift: r.l2_drift,
        v_norms: r.v.iter().map(|x| x.sobolev_norm(probe)).collect(),
        times: r.times,
        band_energies_f: est_f.bands,
        band_energies_v: est_v.bands,
        data: Some(r.data),
        v_states: r.v,
    }))
}

/// Run the ensemble `seeds` (in parallel) and summarize the measured gains.
/// Samples are reported sorted by seed.
pub fn smoothing_gain(
    base: &RandomDataSpec,
    seeds: &[u64],
    grid: &FrequencyGrid,
    cfg: &EvolutionConfig,
    opts: &SmoothingOptions,
) -> Result<SmoothingReport> {
    if seeds.is_empty() {
        return Err(RegularityError::BadArgument(
            "at least one seed is required".into(),
        ));
    }
    let mut seeds = seeds.to_vec();
    seeds.sort_unstable();
    seeds.dedup();
    let cfg = EvolutionConfig {
        dt: capped_dt(grid, cfg, opts),
        ..*cfg
    };
    let runs = seeds
        .par_iter()
        .map(|&seed| run(&RandomDataSpec { seed, ..*base }, grid, &cfg))
        .collect::<Result<Vec<_>>>()?;
    let head = ReportHead {
        s: base.s,
        gamma: cfg.params.gamma,
        beta: cfg.params.beta,
        horizon: cfg.horizon,
        period: grid.period(),
        modes: grid.modes(),
        dt: cfg.schedule().1,
    };
    assemble(head, runs, grid, opts)
}

/// Re-run the estimator on the fields kept in `report` with other options.
pub fn reestimate(report: &SmoothingReport, opts: &SmoothingOptions) -> Result<SmoothingReport> {
    let grid = FrequencyGrid::new(report.period, report.modes)?;
    let runs = report
        .samples
        .iter()
        .map(|x| {
            let data = x.data.clone().ok_or_else(|| {
                RegularityError::BadArgument("report does not carry its fields".into())
            })?;
            Ok(Run {
                seed: x.seed,
                data,
                times: x.times.clone(),
                v: x.v_states.clone(),
                l2_drift: x.l2_drift,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if report.degenerate {
        return Ok(SmoothingReport {
            window: opts.estimator.window(&grid),
            ..report.clone()
        });
    }
    let head = ReportHead {
        s: report.s,
        gamma: report.gamma,
        beta: report.beta,
        horizon: report.horizon,
        period: report.period,
        modes: report.modes,
        dt: report.dt,
    };
    assemble(head, runs, &grid, opts)
}

struct ReportHead {
    s: f64,
    gamma: f64,
    beta: f64,
    horizon: f64,
    period: f64,
    modes: usize,
    dt: f64,
}

fn assemble(
    head: ReportHead,
    runs: Vec<Run>,
    grid: &FrequencyGrid,
    opts: &SmoothingOptions,
) -> Result<SmoothingReport> {
    let measured = runs
        .into_par_iter()
        .map(|r| assess(head.s, r, opts))
        .collect::<Result<Vec<_>>>()?;
    let degenerate = measured.iter().any(Option::is_none);
    let samples: Vec<GainSample> = measured.into_iter().flatten().collect();
    let gains: Vec<f64> = samples.iter().map(|s| s.gain).collect();
    let stats = summarize(&gains);
    let mean = |f: fn(&GainSample) -> f64| {
        if samples.is_empty() {
            f64::NAN
        } else {
            samples.iter().map(f).sum::<f64>() / samples.len() as f64
        }
    };
    let gain_ci = match samples.len() {
        0 => f64::NAN,
        1 => samples[0].sigma_v_ci + samples[0].sigma_f_ci,
        n => {
            use statrs::distribution::{ContinuousCDF, StudentsT};
            let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
                .map(|d| d.inverse_cdf(0.975))
                .unwrap_or(2.0);
            t * stats.stddev / (n as f64).sqrt()
        }
    };
    let diagnostic = (head.beta * head.gamma <= 0.0).then(|| {
        if head.gamma == 0.0 {
            "diagnostic: periodic-domain confound (gamma = 0)".to_string()
        } else {
            format!(
                "diagnostic: beta*gamma = {} <= 0 is outside the smoothing regime",
                head.beta * head.gamma
            )
        }
    });
    Ok(SmoothingReport {
        s: head.s,
        gamma: head.gamma,
        beta: head.beta,
        horizon: head.horizon,
        sigma_f: mean(|s| s.sigma_f),
        sigma_v: mean(|s| s.sigma_v),
        gain_hat: if degenerate { f64::NAN } else { stats.mean },
        gain_ci,
        theory_gain: theory_gain(head.s),
        gain_stats: stats,
        degenerate,
        bounded: samples
            .iter()
            .all(|s| s.v_norms.iter().all(|v| v.is_finite())),
        diagnostic,
        period: head.period,
        modes: head.modes,
        dt: head.dt,
        window: opts.estimator.window(grid),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power_profile(grid: FrequencyGrid, sigma: f64) -> SpectralField {
        SpectralField::from_fn(grid, |xi| {
            if xi == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(japanese(xi).powf(-sigma - 0.5), 0.0)
            }
        })
    }

    #[test]
    fn exact_power_laws() {
        let g = FrequencyGrid::new(100.0 * PI, 8192).unwrap();
        let est = EstimatorConfig::default();
        for sigma in [0.0, 1.0] {
            let r = estimate_regularity(&power_profile(g, sigma), &est).unwrap();
            assert!((r.sigma - sigma).abs() < 0.05, "sigma {sigma}: {}", r.sigma);
        }
    }

    #[test]
    fn too_few_bands() {
        let g = FrequencyGrid::new(2.0 * PI, 64).unwrap();
        assert!(matches!(
            estimate_regularity(&power_profile(g, 0.0), &EstimatorConfig::default()),
            Err(RegularityError::TooFewBands { .. })
        ));
    }

    #[test]
    fn generator_normalization_and_seeds() {
        let g = FrequencyGrid::new(100.0 * PI, 4096).unwrap();
        let a = random_hs_data(&RandomDataSpec::new(0.25, 1), &g).unwrap();
        let b = random_hs_data(&RandomDataSpec::new(0.25, 2), &g).unwrap();
        assert!((a.sobolev_norm(0.25) - 1.0).abs() < 1e-3);
        assert!(a.hermitian_defect() < 1e-15);
        assert_eq!(a.coeff(0), Complex64::new(0.0, 0.0));
        assert_ne!(a, b);
        for k in [1, 17, 1000] {
            assert!((a.coeff(k).norm() - b.coeff(k).norm()).abs() < 1e-14);
        }
        let again = random_hs_data(&RandomDataSpec::new(0.25, 1), &g).unwrap();
        assert_eq!(a, again);
    }

    #[test]
    fn theory_values() {
        assert_eq!(theory_gain(0.0), 0.5);
        assert_eq!(theory_gain(-0.5), 0.25);
    }
}
