//! Periodic frequency grids, spectral fields and the operations the rest of the
//! crate is built from.
//!
//! Coefficients are stored in FFT order (`k = 0, 1, …, N/2−1, −N/2, …, −1`) and
//! scaled so that `coeff(k) ≈ û(k·Δξ)` for the continuous transform
//! `û(ξ) = ∫ u(x) e^{−ixξ} dx`.  With that scaling the discrete Sobolev norm
//! `(Σ ⟨ξ_k⟩^{2s} |c_k|² Δξ)^{1/2}` converges to the line norm as `L, N` grow.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("mode count must be even and at least 8, got {0}")]
    BadModeCount(usize),
    #[error("period must be positive and finite, got {0}")]
    BadPeriod(f64),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("zero mode is {relative:e} of the field norm; a mean-zero field is required")]
    NonzeroMean { relative: f64 },
    #[error("Sobolev index {0} is outside the supported range (-3/4, 2]")]
    SobolevRange(f64),
    #[error("field contains non-finite coefficients")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, SpectralError>;

/// `⟨ξ⟩ = (1 + ξ²)^{1/2}`.
#[inline]
pub fn japanese(xi: f64) -> f64 {
    xi.hypot(1.0)
}

/// Periodic truncation of the frequency line: period `L`, `N` modes, spacing
/// `Δξ = 2π/L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    period: f64,
    modes: usize,
    dxi: f64,
}

impl FrequencyGrid {
    pub fn new(period: f64, modes: usize) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(SpectralError::BadPeriod(period));
        }
        if modes < 8 || !modes.is_multiple_of(2) {
            return Err(SpectralError::BadModeCount(modes));
        }
        Ok(Self {
            period,
            modes,
            dxi: 2.0 * PI / period,
        })
    }

    /// Grid with prescribed spacing `Δξ` (period `2π/Δξ`).
    pub fn with_spacing(dxi: f64, modes: usize) -> Result<Self> {
        if !(dxi.is_finite() && dxi > 0.0) {
            return Err(SpectralError::BadPeriod(2.0 * PI / dxi));
        }
        let mut grid = Self::new(2.0 * PI / dxi, modes)?;
        grid.dxi = dxi;
        Ok(grid)
    }

    /// Grid from stored parts, as written by the serializers; `dxi` must be
    /// `2π/period` up to rounding.
    pub fn from_parts(period: f64, modes: usize, dxi: f64) -> Result<Self> {
        let mut grid = Self::new(period, modes)?;
        if !((dxi * period / (2.0 * PI) - 1.0).abs() <= 1e-12) {
            return Err(SpectralError::BadPeriod(period));
        }
        grid.dxi = dxi;
        Ok(grid)
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn dxi(&self) -> f64 {
        self.dxi
    }

    /// Physical grid spacing `L/N`.
    pub fn dx(&self) -> f64 {
        self.period / self.modes as f64
    }

    /// `|ξ|` of the Nyquist mode, `N/2 · Δξ`.
    pub fn xi_max(&self) -> f64 {
        (self.modes / 2) as f64 * self.dxi
    }

    /// Largest `|k|` kept by the 2/3 rule: quadratic products of retained
    /// modes never alias back onto retained modes.
    pub fn dealias_kmax(&self) -> i64 {
        ((self.modes - 1) / 3) as i64
    }

    /// `|ξ|` of the last retained mode under the 2/3 rule.
    pub fn dealias_cutoff(&self) -> f64 {
        self.dealias_kmax() as f64 * self.dxi
    }

    /// Integer wavenumber stored at FFT-order index `i`.
    #[inline]
    pub fn k_at(&self, i: usize) -> i64 {
        if i < self.modes / 2 {
            i as i64
        } else {
            i as i64 - self.modes as i64
        }
    }

    #[inline]
    pub fn xi_at(&self, i: usize) -> f64 {
        self.k_at(i) as f64 * self.dxi
    }

    /// FFT-order index of integer wavenumber `k`, if it is on the grid.
    #[inline]
    pub fn index_of(&self, k: i64) -> Option<usize> {
        let half = (self.modes / 2) as i64;
        if k >= 0 && k < half {
            Some(k as usize)
        } else if k < 0 && k >= -half {
            Some((k + self.modes as i64) as usize)
        } else {
            None
        }
    }

    pub fn nyquist_index(&self) -> usize {
        self.modes / 2
    }

    /// Wavenumbers `ξ_k` for `k = −N/2, …, N/2 − 1`, in increasing order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let half = (self.modes / 2) as i64;
        (-half..half).map(|k| k as f64 * self.dxi).collect()
    }

    fn same_as(&self, other: &Self) -> bool {
        self.modes == other.modes && self.period == other.period && self.dxi == other.dxi
    }
}

/// Regularity exponent for experiment configuration.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct SobolevIndex(f64);

impl SobolevIndex {
    pub fn new(s: f64) -> Result<Self> {
        if s > -0.75 && s <= 2.0 {
            Ok(Self(s))
        } else {
            Err(SpectralError::SobolevRange(s))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Frequency band selector for [`SpectralField::project`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Band {
    /// Keep `|ξ| ≤ c`.
    LowBall(f64),
    /// Keep `|ξ| > c`.
    HighTail(f64),
    /// Keep `|ξ₁| > |pivot|/ratio`.
    RelativeHigh { ratio: f64, pivot: f64 },
}

impl Band {
    #[inline]
    pub fn contains(&self, xi: f64) -> bool {
        match *self {
            Band::LowBall(c) => xi.abs() <= c,
            Band::HighTail(c) => xi.abs() > c,
            Band::RelativeHigh { ratio, pivot } => xi.abs() > pivot.abs() / ratio,
        }
    }
}

/// Energy in the dyadic band `2^j ≤ |ξ| < 2^{j+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandEnergy {
    pub j: i32,
    pub energy: f64,
}

/// Energy in a log-uniform band `[lo, hi)` with `hi/lo = 2^{1/q}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FractionalBand {
    /// `log₂` of the lower band edge.
    pub log2_lo: f64,
    pub lo: f64,
    pub hi: f64,
    pub modes: usize,
    pub energy: f64,
}

/// Fourier coefficients of a function on the periodic grid.
///
/// Construction zeroes the unmatched Nyquist mode.  Hermitian symmetry and
/// zero mean are checked by the operations that rely on them rather than at
/// construction, so that complex exponentials and non-mean-zero test
/// functions can still be represented.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: FrequencyGrid,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: FrequencyGrid) -> Self {
        Self {
            grid,
            coeffs: vec![Complex64::new(0.0, 0.0); grid.modes],
        }
    }

    /// Coefficients given in FFT order.
    pub fn from_fft_order(grid: FrequencyGrid, mut coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.modes {
            return Err(SpectralError::LengthMismatch {
                expected: grid.modes,
                got: coeffs.len(),
            });
        }
        coeffs[grid.nyquist_index()] = Complex64::new(0.0, 0.0);
        Ok(Self { grid, coeffs })
    }

    /// Coefficients `c(ξ)` evaluated at every grid wavenumber.
    pub fn from_fn(grid: FrequencyGrid, f: impl Fn(f64) -> Complex64) -> Self {
        let mut coeffs: Vec<Complex64> = (0..grid.modes).map(|i| f(grid.xi_at(i))).collect();
        coeffs[grid.nyquist_index()] = Complex64::new(0.0, 0.0);
        Self { grid, coeffs }
    }

    /// Forward transform of real samples `u(x_j)`, `x_j = j·L/N`.
    pub fn from_samples(grid: FrequencyGrid, samples: &[f64]) -> Result<Self> {
        let complex: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        Self::from_complex_samples(grid, complex)
    }

    pub fn from_complex_samples(grid: FrequencyGrid, mut samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != grid.modes {
            return Err(SpectralError::LengthMismatch {
                expected: grid.modes,
                got: samples.len(),
            });
        }
        fft_forward(&mut samples);
        let dx = grid.dx();
        samples.iter_mut().for_each(|c| *c *= dx);
        samples[grid.nyquist_index()] = Complex64::new(0.0, 0.0);
        Ok(Self {
            grid,
            coeffs: samples,
        })
    }

    /// Samples `u(x_j)` of the (complex) function on the physical grid.
    pub fn to_complex_samples(&self) -> Vec<Complex64> {
        let mut buf = self.coeffs.clone();
        fft_inverse(&mut buf);
        let scale = 1.0 / self.grid.period;
        buf.iter_mut().for_each(|c| *c *= scale);
        buf
    }

    /// Real parts of [`Self::to_complex_samples`].
    pub fn to_samples(&self) -> Vec<f64> {
        self.to_complex_samples()
            .into_iter()
            .map(|c| c.re)
            .collect()
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    /// Coefficients in FFT order.
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Coefficient at integer wavenumber `k`; zero off the grid.
    pub fn coeff(&self, k: i64) -> Complex64 {
        self.grid
            .index_of(k)
            .map_or(Complex64::new(0.0, 0.0), |i| self.coeffs[i])
    }

    pub fn set_coeff(&mut self, k: i64, value: Complex64) {
        if let Some(i) = self.grid.index_of(k) {
            if i != self.grid.nyquist_index() {
                self.coeffs[i] = value;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs
            .iter()
            .all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// `max_k |c(−k) − conj c(k)|` relative to `max |c|` (zero for real fields).
    pub fn hermitian_defect(&self) -> f64 {
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let half = (self.grid.modes / 2) as i64;
        let defect = (1..half)
            .map(|k| (self.coeff(-k) - self.coeff(k).conj()).norm())
            .fold(self.coeff(0).im.abs(), f64::max);
        defect / scale
    }

    /// Replace every coefficient by the Hermitian average, making the field real.
    pub fn symmetrized(&self) -> Self {
        let mut out = self.clone();
        let half = (self.grid.modes / 2) as i64;
        for k in 1..half {
            let avg = 0.5 * (self.coeff(k) + self.coeff(-k).conj());
            out.set_coeff(k, avg);
            out.set_coeff(-k, avg.conj());
        }
        out.coeffs[0] = Complex64::new(self.coeffs[0].re, 0.0);
        out
    }

    /// `|c(0)|` relative to the L² norm.
    pub fn relative_mean(&self) -> f64 {
        let norm = self.l2_norm();
        if norm == 0.0 {
            0.0
        } else {
            self.coeffs[0].norm() * self.grid.dxi.sqrt() / norm
        }
    }

    pub fn require_mean_zero(&self) -> Result<()> {
        let rel = self.relative_mean();
        if rel > 1e-12 {
            Err(SpectralError::NonzeroMean { relative: rel })
        } else {
            Ok(())
        }
    }

    /// Copy with the zero mode removed.
    pub fn without_mean(&self) -> Self {
        let mut out = self.clone();
        out.coeffs[0] = Complex64::new(0.0, 0.0);
        out
    }

    /// Discrete `H^s` norm `(Σ ⟨ξ_k⟩^{2s} |c_k|² Δξ)^{1/2}`.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        let grid = &self.grid;
        let sum: f64 = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let weight = if s == 0.0 {
                    1.0
                } else {
                    japanese(grid.xi_at(i)).powf(2.0 * s)
                };
                weight * c.norm_sqr()
            })
            .sum();
        (sum * grid.dxi).sqrt()
    }

    pub fn l2_norm(&self) -> f64 {
        self.sobolev_norm(0.0)
    }

    /// Discrete L² pairing `Σ c_k conj(d_k) Δξ`.
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        self.check_grid(other)?;
        let sum: Complex64 = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a * b.conj())
            .sum();
        Ok(sum * self.grid.dxi)
    }

    /// Apply the Fourier multiplier `symbol(ξ)`; the Nyquist mode stays zero.
    pub fn apply_multiplier(&self, symbol: impl Fn(f64) -> Complex64) -> Self {
        let grid = self.grid;
        let mut coeffs: Vec<Complex64> = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * symbol(grid.xi_at(i)))
            .collect();
        coeffs[grid.nyquist_index()] = Complex64::new(0.0, 0.0);
        Self { grid, coeffs }
    }

    /// `∂_x`, symbol `iξ`.
    pub fn apply_dx(&self) -> Self {
        self.apply_multiplier(|xi| Complex64::new(0.0, xi))
    }

    /// `∂_x⁻¹`, symbol `1/(iξ)` with the zero mode mapped to zero.
    pub fn apply_inv_dx(&self) -> Result<Self> {
        self.require_mean_zero()?;
        Ok(self.apply_multiplier(|xi| {
            if xi == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, -1.0 / xi)
            }
        }))
    }

    /// Zero every coefficient outside `band`.
    pub fn project(&self, band: Band) -> Self {
        let grid = self.grid;
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                if band.contains(grid.xi_at(i)) {
                    c
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        Self { grid, coeffs }
    }

    /// Zero every mode above the 2/3-rule cutoff.
    pub fn dealiased(&self) -> Self {
        let kmax = self.grid.dealias_kmax();
        let grid = self.grid;
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                if grid.k_at(i).abs() <= kmax {
                    c
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        Self { grid, coeffs }
    }

    /// Energies `Σ_{2^j ≤ |ξ| < 2^{j+1}} |c|² Δξ` for every band that contains
    /// at least one grid mode.  The zero mode belongs to no band.
    pub fn band_energies(&self) -> Vec<BandEnergy> {
        let grid = &self.grid;
        let mut bands: Vec<BandEnergy> = Vec::new();
        let half = (grid.modes / 2) as i64;
        for k in 1..=half {
            let xi = k as f64 * grid.dxi;
            let j = xi.log2().floor() as i32;
            let e = (self.coeff(k).norm_sqr() + self.coeff(-k).norm_sqr()) * grid.dxi;
            match bands.last_mut() {
                Some(last) if last.j == j => last.energy += e,
                _ => bands.push(BandEnergy { j, energy: e }),
            }
        }
        bands
    }

    /// Energies in log-uniform bands `[2^{b/q}, 2^{(b+1)/q})` restricted to
    /// `lo ≤ |ξ| < hi`; only complete, non-empty bands are returned.
    pub fn fractional_band_energies(
        &self,
        per_octave: u32,
        lo: f64,
        hi: f64,
    ) -> Vec<FractionalBand> {
        let grid = &self.grid;
        let q = per_octave.max(1) as f64;
        let first = (lo.log2() * q).ceil() as i64;
        let last = (hi.log2() * q).floor() as i64;
        let mut out = Vec::new();
        for b in first..last {
            let band_lo = 2f64.powf(b as f64 / q);
            let band_hi = 2f64.powf((b + 1) as f64 / q);
            let k_lo = (band_lo / grid.dxi).ceil() as i64;
            let k_hi = (band_hi / grid.dxi).ceil() as i64; // exclusive
            let mut energy = 0.0;
            let mut modes = 0;
            for k in k_lo.max(1)..k_hi {
                if grid.index_of(k).is_none() || grid.index_of(-k).is_none() {
                    continue;
                }
                energy += (self.coeff(k).norm_sqr() + self.coeff(-k).norm_sqr()) * grid.dxi;
                modes += 1;
            }
            if modes > 0 {
                out.push(FractionalBand {
                    log2_lo: b as f64 / q,
                    lo: band_lo,
                    hi: band_hi,
                    modes,
                    energy,
                });
            }
        }
        out
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|c| c * factor)
    }

    pub fn scale_complex(&self, factor: Complex64) -> Self {
        self.map(|c| c * factor)
    }

    fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self {
            grid: self.grid,
            coeffs: self.coeffs.iter().map(|&c| f(c)).collect(),
        }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(
        &self,
        other: &Self,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<Self> {
        self.check_grid(other)?;
        Ok(Self {
            grid: self.grid,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn check_grid(&self, other: &Self) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(SpectralError::GridMismatch)
        }
    }
}

impl Add for &SpectralField {
    type Output = SpectralField;

    /// Panics on grid mismatch; use [`SpectralField::try_add`] otherwise.
    fn add(self, rhs: Self) -> SpectralField {
        self.try_add(rhs).expect("grid mismatch in field addition")
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;

    fn sub(self, rhs: Self) -> SpectralField {
        self.try_sub(rhs)
            .expect("grid mismatch in field subtraction")
    }
}

impl Neg for &SpectralField {
    type Output = SpectralField;

    fn neg(self) -> SpectralField {
        self.scale(-1.0)
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;

    fn mul(self, rhs: f64) -> SpectralField {
        self.scale(rhs)
    }
}

/// Coefficients of the pointwise product `uv` under the 2/3 rule: both inputs
/// and the output are truncated to `|k| ≤ (N−1)/3`, so every retained output
/// mode equals the exact discrete convolution `(Δξ/2π) Σ û(ξ₁) v̂(ξ−ξ₁)` of the
/// truncated inputs.
pub fn dealiased_product(u: &SpectralField, v: &SpectralField) -> Result<SpectralField> {
    u.check_grid(v)?;
    let grid = u.grid;
    let a = u.dealiased().to_complex_samples();
    let b = if std::ptr::eq(u, v) {
        a.clone()
    } else {
        v.dealiased().to_complex_samples()
    };
    let prod: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
    Ok(SpectralField::from_complex_samples(grid, prod)?.dealiased())
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Forward and inverse plans of length `n` from this thread's planner cache.
pub fn fft_plans(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(n), p.plan_fft_inverse(n))
    })
}

/// Unnormalized forward DFT `Σ_j x_j e^{−2πijk/N}` in place.
pub fn fft_forward(buf: &mut [Complex64]) {
    let (fwd, _) = fft_plans(buf.len());
    fwd.process(buf);
}

/// Unnormalized inverse DFT `Σ_k x_k e^{2πijk/N}` in place.
pub fn fft_inverse(buf: &mut [Complex64]) {
    let (_, inv) = fft_plans(buf.len());
    inv.process(buf);
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn grid_examples() {
        let g = FrequencyGrid::new(2.0 * PI, 8).unwrap();
        assert_relative_eq!(g.dxi(), 1.0, epsilon = 1e-15);
        assert_eq!(
            g.wavenumbers(),
            vec![-4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0]
        );
        let g = FrequencyGrid::new(4.0 * PI, 16).unwrap();
        assert_relative_eq!(g.dxi(), 0.5, epsilon = 1e-15);
        let g = FrequencyGrid::new(100.0 * PI, 4096).unwrap();
        assert_relative_eq!(g.dxi(), 0.02, epsilon = 1e-15);
        assert_relative_eq!(g.xi_max(), 40.96, epsilon = 1e-12);
        assert_relative_eq!(g.dxi() * g.period(), 2.0 * PI, epsilon = 1e-15);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert_eq!(
            FrequencyGrid::new(1.0, 7),
            Err(SpectralError::BadModeCount(7))
        );
        assert_eq!(
            FrequencyGrid::new(1.0, 6),
            Err(SpectralError::BadModeCount(6))
        );
        assert!(matches!(
            FrequencyGrid::new(0.0, 8),
            Err(SpectralError::BadPeriod(_))
        ));
        assert!(FrequencyGrid::new(-3.0, 8).is_err());
    }

    #[test]
    fn index_round_trip() {
        let g = FrequencyGrid::new(1.0, 16).unwrap();
        for i in 0..16 {
            assert_eq!(g.index_of(g.k_at(i)), Some(i));
        }
        assert_eq!(g.index_of(8), None);
        assert_eq!(g.index_of(-8), Some(8));
        assert_eq!(g.index_of(-9), None);
    }

    #[test]
    fn sobolev_norm_examples() {
        let g = FrequencyGrid::new(2.0 * PI, 8).unwrap();
        let zero = SpectralField::zeros(g);
        assert_eq!(zero.sobolev_norm(0.7), 0.0);
        let mut f = SpectralField::zeros(g);
        f.set_coeff(1, c(1.0, 0.0));
        f.set_coeff(-1, c(1.0, 0.0));
        assert_relative_eq!(f.sobolev_norm(0.0), 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn inverse_derivative_of_sine() {
        let g = FrequencyGrid::new(2.0 * PI, 16).unwrap();
        let x: Vec<f64> = (0..16).map(|j| j as f64 * g.dx()).collect();
        let sin =
            SpectralField::from_samples(g, &x.iter().map(|x| x.sin()).collect::<Vec<_>>()).unwrap();
        let out = sin.apply_inv_dx().unwrap().to_samples();
        for (xj, v) in x.iter().zip(out) {
            assert!((v + xj.cos()).abs() < 1e-13);
        }
    }

    #[test]
    fn inverse_derivative_rejects_mean() {
        let g = FrequencyGrid::new(2.0 * PI, 16).unwrap();
        let f = SpectralField::from_samples(g, &[1.0; 16]).unwrap();
        assert!(matches!(
            f.apply_inv_dx(),
            Err(SpectralError::NonzeroMean { .. })
        ));
    }

    #[test]
    fn product_of_exponentials() {
        let g = FrequencyGrid::new(2.0 * PI, 16).unwrap();
        let mut e = SpectralField::zeros(g);
        // e^{ix} has û(1) = L = 2π in this normalization
        e.set_coeff(1, c(2.0 * PI, 0.0));
        let p = dealiased_product(&e, &e).unwrap();
        for k in -8..8 {
            let expected = if k == 2 { 2.0 * PI } else { 0.0 };
            assert!((p.coeff(k) - c(expected, 0.0)).norm() < 1e-12, "k={k}");
        }
        let zero = SpectralField::zeros(g);
        assert!(dealiased_product(&zero, &e).unwrap().max_abs() < 1e-300);
    }

    #[test]
    fn product_grid_mismatch() {
        let a = SpectralField::zeros(FrequencyGrid::new(1.0, 8).unwrap());
        let b = SpectralField::zeros(FrequencyGrid::new(2.0, 8).unwrap());
        assert_eq!(dealiased_product(&a, &b), Err(SpectralError::GridMismatch));
    }

    #[test]
    fn projection_examples() {
        let g = FrequencyGrid::new(2.0 * PI, 64).unwrap();
        let f = SpectralField::from_fn(g, |xi| c(xi.cos(), xi.sin() * 0.5));
        let high = f.project(Band::HighTail(10.0));
        assert!(high.project(Band::LowBall(10.0)).is_zero());
        assert_eq!(
            f.project(Band::HighTail(0.0)).without_mean(),
            f.without_mean()
        );
        let parts = &f.project(Band::LowBall(7.0)) + &f.project(Band::HighTail(7.0));
        assert_eq!(parts, f);
        let rel = f.project(Band::RelativeHigh {
            ratio: 100.0,
            pivot: 500.0,
        });
        assert_eq!(rel.coeff(5), c(0.0, 0.0));
        assert_eq!(rel.coeff(6), f.coeff(6));
    }

    #[test]
    fn band_energy_examples() {
        let g = FrequencyGrid::new(2.0 * PI, 32).unwrap();
        let mut f = SpectralField::zeros(g);
        f.set_coeff(3, c(1.0, 0.0));
        f.set_coeff(-3, c(1.0, 0.0));
        let bands = f.band_energies();
        for b in &bands {
            if b.j == 1 {
                assert_relative_eq!(b.energy, 2.0);
            } else {
                assert_eq!(b.energy, 0.0);
            }
        }
        assert!(SpectralField::zeros(g)
            .band_energies()
            .iter()
            .all(|b| b.energy == 0.0));
        // bands j = 0..=4 cover k = 1..=16
        assert_eq!(
            bands.iter().map(|b| b.j).collect::<Vec<_>>(),
            vec![0, 1, 2, 3, 4]
        );
    }

    #[test]
    fn sobolev_index_range() {
        assert!(SobolevIndex::new(-0.75).is_err());
        assert!(SobolevIndex::new(-0.7).is_ok());
        assert!(SobolevIndex::new(2.0).is_ok());
        assert!(SobolevIndex::new(2.1).is_err());
    }

    #[test]
    fn symmetrized_is_hermitian() {
        let g = FrequencyGrid::new(3.0, 32).unwrap();
        let f = SpectralField::from_fn(g, |xi| c(xi.sin() + 1.0, xi * xi));
        assert!(f.hermitian_defect() > 0.1);
        assert!(f.symmetrized().hermitian_defect() < 1e-15);
    }
}
