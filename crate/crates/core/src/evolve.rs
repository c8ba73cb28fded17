//! Integrating-factor RK4 for `u_t + Lu + ∂_x(u²) = 0`.
//!
//! In the interaction picture the linear part is applied exactly through the
//! unimodular factor `e^{iφ(ξ)t}`, so the scheme is exact when the
//! nonlinearity is switched off.  Internally states are kept as the
//! non-negative half of a Hermitian spectrum and products go through real FFTs.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispersion::{DispersionError, DispersionParams};
use crate::spectral::{dealiased_product, FrequencyGrid, SpectralError, SpectralField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolveError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Dispersion(#[from] DispersionError),
    #[error("solution blew up (non-finite coefficients) at t = {time}")]
    BlowUp { time: f64 },
    #[error("state is not real-valued: Hermitian defect {defect:e}")]
    NotReal { defect: f64 },
    #[error("invalid evolution config: {0}")]
    BadConfig(String),
}

pub type Result<T> = std::result::Result<T, EvolveError>;

const HERMITIAN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub params: DispersionParams,
    pub dt: f64,
    pub horizon: f64,
    pub record_every: usize,
    /// `false` drops `∂_x(u²)`, leaving the free flow.
    pub nonlinear: bool,
    /// Sobolev index of the per-snapshot diagnostic norm.
    pub diagnostic_s: f64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            params: DispersionParams::default(),
            dt: 1e-4,
            horizon: 0.5,
            record_every: 100,
            nonlinear: true,
            diagnostic_s: 1.0,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(EvolveError::BadConfig(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(EvolveError::BadConfig(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if self.record_every == 0 {
            return Err(EvolveError::BadConfig(
                "record_every must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Number of steps and the step actually used: `dt` is shrunk so that an
    /// integer number of steps lands exactly on the horizon.
    pub fn schedule(&self) -> (usize, f64) {
        let ratio = self.horizon / self.dt;
        let steps = if (ratio - ratio.round()).abs() <= 1e-9 * ratio {
            ratio.round()
        } else {
            ratio.ceil()
        }
        .max(1.0) as usize;
        (steps, self.horizon / steps as f64)
    }
}

/// Snapshots of one run plus conservation and resolution diagnostics.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SpectralField>,
    pub l2: Vec<f64>,
    pub hs: Vec<f64>,
    pub hs_index: f64,
    pub dt: f64,
    pub steps: usize,
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn final_state(&self) -> &SpectralField {
        self.states
            .last()
            .expect("trajectory has at least the initial state")
    }

    /// `max_t |‖u(t)‖_{L²}/‖f‖_{L²} − 1|`, zero for zero data.
    pub fn l2_drift(&self) -> f64 {
        let l0 = self.l2[0];
        if l0 == 0.0 {
            return 0.0;
        }
        self.l2
            .iter()
            .map(|v| (v / l0 - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// `u₀(x) = A (x/σ) e^{−x²/2σ²}` centred in the period: smooth, odd, mean zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmoothDatum {
    pub amplitude: f64,
    pub width: f64,
}

impl Default for SmoothDatum {
    fn default() -> Self {
        Self {
            amplitude: 2.0,
            width: 1.5,
        }
    }
}

impl SmoothDatum {
    pub fn field(&self, grid: FrequencyGrid) -> SpectralField {
        let n = grid.modes();
        let half = grid.period() / 2.0;
        let samples: Vec<f64> = (0..n)
            .map(|j| {
                let z = (j as f64 * grid.dx() - half) / self.width;
                self.amplitude * z * (-0.5 * z * z).exp()
            })
            .collect();
        SpectralField::from_samples(grid, &samples)
            .expect("sample count matches the grid")
            .without_mean()
    }
}

/// `N(u) = ∂_x(u²)` with the 2/3 rule: `iξ·(û ∗ û)(ξ)/(2π)`.
pub fn rhs_nonlinear(u: &SpectralField) -> SpectralField {
    dealiased_product(u, u)
        .expect("a field shares its own grid")
        .apply_dx()
}

/// Precomputed integrating factors and FFT plans for one `(grid, dt, params)`.
pub struct Stepper {
    grid: FrequencyGrid,
    dt: f64,
    nonlinear: bool,
    half: Vec<Complex64>,
    full: Vec<Complex64>,
    xi: Vec<f64>,
    kmax: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
}

impl Stepper {
    pub fn new(grid: FrequencyGrid, dt: f64, params: &DispersionParams, nonlinear: bool) -> Self {
        let m = grid.modes() / 2 + 1;
        let xi: Vec<f64> = (0..m).map(|k| k as f64 * grid.dxi()).collect();
        let factor = |tau: f64| -> Vec<Complex64> {
            xi.iter()
                .map(|&x| {
                    if x == 0.0 {
                        Complex64::new(1.0, 0.0)
                    } else {
                        Complex64::from_polar(1.0, params.phase_unchecked(x) * tau)
                    }
                })
                .collect()
        };
        let mut planner = RealFftPlanner::<f64>::new();
        Self {
            grid,
            dt,
            nonlinear,
            half: factor(0.5 * dt),
            full: factor(dt),
            kmax: grid.dealias_kmax() as usize,
            xi,
            r2c: planner.plan_fft_forward(grid.modes()),
            c2r: planner.plan_fft_inverse(grid.modes()),
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// One step; fails on non-finite output.
    pub fn step(&self, u: &SpectralField) -> Result<SpectralField> {
        self.advance(u, 1)
    }

    /// `steps` consecutive steps.
    pub fn advance(&self, u: &SpectralField, steps: usize) -> Result<SpectralField> {
        u.check_grid(&SpectralField::zeros(self.grid))?;
        let mut a = self.to_half(u)?;
        let mut ws = self.workspace();
        for n in 0..steps {
            a = self.step_half(&a, &mut ws);
            if !is_finite(&a) {
                return Err(EvolveError::BlowUp {
                    time: (n + 1) as f64 * self.dt,
                });
            }
        }
        Ok(self.to_field(&a))
    }

    fn to_half(&self, u: &SpectralField) -> Result<Vec<Complex64>> {
        let defect = u.hermitian_defect();
        if defect > HERMITIAN_TOL {
            return Err(EvolveError::NotReal { defect });
        }
        let mut a: Vec<Complex64> = u.coeffs()[..self.half.len()].to_vec();
        a[0].im = 0.0;
        *a.last_mut().unwrap() = Complex64::new(0.0, 0.0);
        Ok(a)
    }

    fn to_field(&self, a: &[Complex64]) -> SpectralField {
        let n = self.grid.modes();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); n];
        coeffs[..a.len()].copy_from_slice(a);
        for k in 1..n / 2 {
            coeffs[n - k] = a[k].conj();
        }
        SpectralField::from_fft_order(self.grid, coeffs).expect("length matches grid")
    }

    fn workspace(&self) -> Workspace {
        let len = self.r2c.get_scratch_len().max(self.c2r.get_scratch_len());
        Workspace {
            spec: self.r2c.make_output_vec(),
            samples: self.c2r.make_output_vec(),
            scratch: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    /// `−N(u)` on the half spectrum, written into `out`.
    fn forcing(&self, a: &[Complex64], out: &mut [Complex64], ws: &mut Workspace) {
        out.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        if !self.nonlinear {
            return;
        }
        let spec = &mut ws.spec;
        spec.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        spec[..=self.kmax].copy_from_slice(&a[..=self.kmax]);
        spec[0].im = 0.0;
        self.c2r
            .process_with_scratch(spec, &mut ws.samples, &mut ws.scratch)
            .expect("buffer sizes match the plan");
        let inv_l = 1.0 / self.grid.period();
        ws.samples
            .iter_mut()
            .for_each(|v| *v = (*v * inv_l).powi(2));
        self.r2c
            .process_with_scratch(&mut ws.samples, spec, &mut ws.scratch)
            .expect("buffer sizes match the plan");
        let dx = self.grid.dx();
        for k in 1..=self.kmax {
            out[k] = Complex64::new(0.0, -self.xi[k] * dx) * spec[k];
        }
    }

    fn step_half(&self, u: &[Complex64], ws: &mut Workspace) -> Vec<Complex64> {
        let h = self.dt;
        let e = &self.half;
        let e2 = &self.full;
        let m = u.len();
        let zero = Complex64::new(0.0, 0.0);
        let (mut k1, mut k2, mut k3, mut k4) =
            (vec![zero; m], vec![zero; m], vec![zero; m], vec![zero; m]);
        self.forcing(u, &mut k1, ws);
        let mut stage: Vec<Complex64> = (0..m).map(|i| e[i] * (u[i] + 0.5 * h * k1[i])).collect();
        self.forcing(&stage, &mut k2, ws);
        for i in 0..m {
            stage[i] = e[i] * u[i] + 0.5 * h * k2[i];
        }
        self.forcing(&stage, &mut k3, ws);
        for i in 0..m {
            stage[i] = e2[i] * u[i] + h * e[i] * k3[i];
        }
        self.forcing(&stage, &mut k4, ws);
        for i in 0..m {
            stage[i] =
                e2[i] * u[i] + h / 6.0 * (e2[i] * k1[i] + 2.0 * e[i] * (k2[i] + k3[i]) + k4[i]);
        }
        stage
    }
}

struct Workspace {
    spec: Vec<Complex64>,
    samples: Vec<f64>,
    scratch: Vec<Complex64>,
}

fn is_finite(a: &[Complex64]) -> bool {
    a.iter().all(|c| c.re.is_finite() && c.im.is_finite())
}

/// One IF-RK4 step of size `dt` (negative `dt` steps backward).
pub fn step_ifrk4(u: &SpectralField, dt: f64, p: &DispersionParams) -> Result<SpectralField> {
    if dt == 0.0 {
        return Ok(u.clone());
    }
    Stepper::new(*u.grid(), dt, p, true).step(u)
}

/// Energy fraction in the top octave `(ξ_c/2, ξ_c]` of the retained band.
pub fn top_band_fraction(u: &SpectralField) -> f64 {
    let g = u.grid();
    let total = u.l2_norm().powi(2);
    if total == 0.0 {
        return 0.0;
    }
    let kmax = g.dealias_kmax();
    let top: f64 = (kmax / 2 + 1..=kmax)
        .map(|k| (u.coeff(k).norm_sqr() + u.coeff(-k).norm_sqr()) * g.dxi())
        .sum();
    top / total
}

/// Integrate from `f` over `[0, horizon]`, recording every `record_every`
/// steps and at the final time.
pub fn evolve(f: &SpectralField, cfg: &EvolutionConfig) -> Result<Trajectory> {
    cfg.validate()?;
    f.require_mean_zero()?;
    let (steps, dt) = cfg.schedule();
    let stepper = Stepper::new(*f.grid(), dt, &cfg.params, cfg.nonlinear);
    let mut a = stepper.to_half(f)?;
    let mut ws = stepper.workspace();
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![f.clone()],
        l2: vec![f.l2_norm()],
        hs: vec![f.sobolev_norm(cfg.diagnostic_s)],
        hs_index: cfg.diagnostic_s,
        dt,
        steps,
        warnings: Vec::new(),
    };
    for n in 1..=steps {
        a = stepper.step_half(&a, &mut ws);
        if !is_finite(&a) {
            return Err(EvolveError::BlowUp {
                time: n as f64 * dt,
            });
        }
        if n % cfg.record_every == 0 || n == steps {
            let state = stepper.to_field(&a);
            traj.times.push(n as f64 * dt);
            traj.l2.push(state.l2_norm());
            traj.hs.push(state.sobolev_norm(cfg.diagnostic_s));
            traj.states.push(state);
        }
    }
    let drift = traj.l2_drift();
    if drift > 1e-6 {
        traj.warnings
            .push(format!("relative L2 drift {drift:.3e} exceeds 1e-6"));
    }
    // rough data start with a heavy top octave; only growth is suspicious
    let top = top_band_fraction(traj.final_state());
    if top > 1e-8 && top > 2.0 * top_band_fraction(f) {
        traj.warnings.push(format!(
            "under-resolved: top retained octave holds {top:.3e} of the energy"
        ));
    }
    for w in &traj.warnings {
        log::warn!("{w}");
    }
    Ok(traj)
}

/// Run the same scheme with negated time step from `f` over `horizon`.
pub fn evolve_backward(f: &SpectralField, cfg: &EvolutionConfig) -> Result<SpectralField> {
    cfg.validate()?;
    f.require_mean_zero()?;
    let (steps, dt) = cfg.schedule();
    Stepper::new(*f.grid(), -dt, &cfg.params, cfg.nonlinear).advance(f, steps)
}

fn final_state(f: &SpectralField, cfg: &EvolutionConfig, dt: f64) -> Result<SpectralField> {
    let cfg = EvolutionConfig {
        dt,
        record_every: usize::MAX,
        ..*cfg
    };
    let (steps, dt) = cfg.schedule();
    Stepper::new(*f.grid(), dt, &cfg.params, cfg.nonlinear).advance(f, steps)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceStudy {
    pub dts: Vec<f64>,
    /// L² error of each run against the `dt/8` reference.
    pub errors: Vec<f64>,
    /// `log₂(e(dt)/e(dt/2))`.
    pub order: f64,
}

/// Global error at the horizon for `dt` and `dt/2` against a `dt/8` reference.
pub fn temporal_convergence(f: &SpectralField, cfg: &EvolutionConfig) -> Result<ConvergenceStudy> {
    cfg.validate()?;
    f.require_mean_zero()?;
    let dts = [cfg.dt, cfg.dt / 2.0, cfg.dt / 8.0];
    let states = dts
        .par_iter()
        .map(|&dt| final_state(f, cfg, dt))
        .collect::<Result<Vec<_>>>()?;
    let reference = &states[2];
    let errors: Vec<f64> = states[..2]
        .iter()
        .map(|s| (s - reference).l2_norm())
        .collect();
    Ok(ConvergenceStudy {
        dts: dts[..2].to_vec(),
        order: (errors[0] / errors[1]).log2(),
        errors,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KdvLimitRow {
    pub gamma: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KdvLimitTable {
    pub rows: Vec<KdvLimitRow>,
    /// Errors strictly decrease as `γ` decreases (vacuous for fewer than two
    /// distinct nonzero errors).
    pub monotone: bool,
}

/// `‖u_γ(T) − u_0(T)‖_{L²}` for each `γ`, where `u_0` solves KdV (`γ = 0`).
pub fn kdv_limit_study(
    f: &SpectralField,
    gammas: &[f64],
    cfg: &EvolutionConfig,
) -> Result<KdvLimitTable> {
    if gammas.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
        return Err(EvolveError::BadConfig(
            "gamma values must be finite and non-negative".into(),
        ));
    }
    cfg.validate()?;
    f.require_mean_zero()?;
    let run = |gamma: f64| {
        final_state(
            f,
            &EvolutionConfig {
                params: cfg.params.with_gamma(gamma),
                ..*cfg
            },
            cfg.dt,
        )
    };
    let reference = run(0.0)?;
    let errors = gammas
        .par_iter()
        .map(|&g| Ok((&run(g)? - &reference).l2_norm()))
        .collect::<Result<Vec<f64>>>()?;
    let rows: Vec<KdvLimitRow> = gammas
        .iter()
        .zip(errors)
        .map(|(&gamma, error)| KdvLimitRow { gamma, error })
        .collect();
    let mut sorted = rows.clone();
    sorted.sort_by(|a, b| b.gamma.total_cmp(&a.gamma));
    let monotone = sorted
        .windows(2)
        .all(|w| w[0].gamma == w[1].gamma || w[1].error < w[0].error || w[0].error == 0.0);
    Ok(KdvLimitTable { rows, monotone })
}
