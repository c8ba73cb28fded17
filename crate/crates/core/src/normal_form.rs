//! Differentiation by parts on the low–high interactions.
//!
//! Write `N(u) = ∂_x(u²) = R(u) + Ñ(u)`, where `Ñ` keeps the pairs selected
//! by the cutoff `m(ξ, ξ₁)` and `R` is everything else.  With `y = S(−t)u`
//!
//! ```text
//! ∂_t S(−t)[u − B(u)] = −S(−t)[R(u) + NR(u)]
//! B̂(ξ)  = ξ (Δξ/2π) Σ m u(ξ₁) u(ξ−ξ₁) / Φ(ξ, ξ₁)
//! NR̂(ξ) = ξ (Δξ/2π) Σ m [u(ξ₁) w(ξ−ξ₁) + w(ξ₁) u(ξ−ξ₁)] / Φ(ξ, ξ₁)
//! ```
//!
//! with `w = −N(u)`.  The factor `1/2π` is the product normalization of this
//! crate's Fourier convention.  All bilinear sums use the 2/3-truncated
//! inputs and produce retained modes only, matching the solver's
//! nonlinearity, so the identity holds exactly for the semi-discrete flow.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispersion::{propagate, DispersionParams};
use crate::evolve::{rhs_nonlinear, Trajectory};
use crate::spectral::{FrequencyGrid, SpectralError, SpectralField};
use crate::stats::{loglog_slope, LineFit};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NormalFormError {
    #[error("resonant regime: beta*gamma = {0} <= 0, the resonance function can vanish")]
    Resonant(f64),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("need at least {needed} snapshots, got {got}")]
    TooFewSnapshots { needed: usize, got: usize },
    #[error("snapshots around t = {0} are not evenly spaced")]
    UnevenSpacing(f64),
    #[error("grid cannot resolve the profile: {0}")]
    Unresolved(String),
}

pub type Result<T> = std::result::Result<T, NormalFormError>;

#[derive(Debug, Clone, PartialEq)]
pub struct NormalFormTerms {
    pub b: SpectralField,
    pub r: SpectralField,
    pub nr: SpectralField,
    pub w: SpectralField,
}

fn require_nonresonant(p: &DispersionParams) -> Result<()> {
    if p.is_nonresonant() {
        Ok(())
    } else {
        Err(NormalFormError::Resonant(p.beta * p.gamma))
    }
}

/// `w = −N(u)`.
pub fn compute_w(u: &SpectralField) -> Result<SpectralField> {
    u.require_mean_zero()?;
    Ok(-&rhs_nonlinear(u))
}

/// Nonzero truncated coefficients that can act as the low partner for some
/// retained output, sorted by `|k|`.
fn low_modes(a: &SpectralField, ratio: f64) -> Vec<(i64, Complex64)> {
    let kmax = a.grid().dealias_kmax();
    let reach = (kmax as f64 / ratio).floor() as i64;
    let mut out: Vec<(i64, Complex64)> = (1..=reach)
        .flat_map(|k| [k, -k])
        .map(|k| (k, a.coeff(k)))
        .filter(|(_, c)| c.re != 0.0 || c.im != 0.0)
        .collect();
    out.sort_by_key(|(k, _)| k.abs());
    out
}

/// `Σ_ξ₁ m(ξ,ξ₁) a(ξ₁) b(ξ−ξ₁) · weight(ξ,ξ₁)` on every retained output mode,
/// split as `Σ_{|ξ₁| small} [a(ξ₁)b(ξ−ξ₁) + a(ξ−ξ₁)b(ξ₁)] · weight(ξ,ξ₁)`,
/// times `prefactor(ξ)·Δξ/2π`.  The two gates of `m` are disjoint because the
/// ratio exceeds 2.
fn gated_bilinear(
    a: &SpectralField,
    b: &SpectralField,
    p: &DispersionParams,
    divide_by_resonance: bool,
    prefactor: impl Fn(f64) -> Complex64 + Sync,
) -> Result<SpectralField> {
    a.check_grid(b)?;
    let grid = *a.grid();
    let kmax = grid.dealias_kmax();
    let dxi = grid.dxi();
    let ratio = p.lowhigh_ratio;
    let low_a = low_modes(a, ratio);
    let low_b = low_modes(b, ratio);
    let at = |f: &SpectralField, k: i64| {
        if k.abs() <= kmax {
            f.coeff(k)
        } else {
            Complex64::new(0.0, 0.0)
        }
    };
    let term = |k: i64, k1: i64, num: Complex64| {
        if divide_by_resonance {
            let (xi, xi1) = (k as f64 * dxi, k1 as f64 * dxi);
            num / p.resonance_unchecked(xi, xi1, xi - xi1)
        } else {
            num
        }
    };
    let scale = dxi / (2.0 * std::f64::consts::PI);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); grid.modes()];
    coeffs.par_iter_mut().enumerate().for_each(|(i, out)| {
        let k = grid.k_at(i);
        let xi = k as f64 * dxi;
        if k.abs() > kmax || xi.abs() <= p.cutoff {
            return;
        }
        let gate = k.abs() as f64;
        let mut sum = Complex64::new(0.0, 0.0);
        for &(k1, c) in &low_a {
            if k1.abs() as f64 * ratio > gate {
                break;
            }
            sum += term(k, k1, c * at(b, k - k1));
        }
        for &(k1, c) in &low_b {
            if k1.abs() as f64 * ratio > gate {
                break;
            }
            sum += term(k, k1, at(a, k - k1) * c);
        }
        *out = sum * prefactor(xi) * scale;
    });
    Ok(SpectralField::from_fft_order(grid, coeffs)?)
}

/// The boundary term `B(u)`.
pub fn compute_b(u: &SpectralField, p: &DispersionParams) -> Result<SpectralField> {
    require_nonresonant(p)?;
    u.require_mean_zero()?;
    gated_bilinear(u, u, p, true, |xi| Complex64::new(xi, 0.0))
}

/// The gated part `Ñ(u) = iξ (Δξ/2π) Σ m u(ξ₁) u(ξ−ξ₁)` of `N(u)`.
pub fn compute_gated_n(u: &SpectralField, p: &DispersionParams) -> Result<SpectralField> {
    u.require_mean_zero()?;
    gated_bilinear(u, u, p, false, |xi| Complex64::new(0.0, xi))
}

/// `R(u) = N(u) − Ñ(u)`.
pub fn compute_r(u: &SpectralField, p: &DispersionParams) -> Result<SpectralField> {
    let gated = compute_gated_n(u, p)?;
    Ok(&rhs_nonlinear(u) - &gated)
}

/// `NR(u)` with `w = −N(u)`.
pub fn compute_nr(u: &SpectralField, p: &DispersionParams) -> Result<SpectralField> {
    require_nonresonant(p)?;
    let w = compute_w(u)?;
    nr_with(u, &w, p)
}

fn nr_with(u: &SpectralField, w: &SpectralField, p: &DispersionParams) -> Result<SpectralField> {
    let uw = gated_bilinear(u, w, p, true, |xi| Complex64::new(xi, 0.0))?;
    let wu = gated_bilinear(w, u, p, true, |xi| Complex64::new(xi, 0.0))?;
    Ok(&uw + &wu)
}

pub fn compute_terms(u: &SpectralField, p: &DispersionParams) -> Result<NormalFormTerms> {
    require_nonresonant(p)?;
    let w = compute_w(u)?;
    Ok(NormalFormTerms {
        b: compute_b(u, p)?,
        r: compute_r(u, p)?,
        nr: nr_with(u, &w, p)?,
        w,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualPoint {
    pub time: f64,
    pub spacing: f64,
    /// `‖(y(t+h) − y(t−h))/2h + S(−t)(R + NR)‖_{H^s}`.
    pub residual: f64,
    /// `‖R + NR‖_{H^s}`.
    pub reference: f64,
    pub relative: f64,
}

/// Central-difference check of the normal-form identity along a trajectory,
/// using snapshots `stride` records apart (spacing `h = stride·Δt_record`).
pub fn nf_identity_residual(
    traj: &Trajectory,
    p: &DispersionParams,
    s: f64,
    stride: usize,
) -> Result<Vec<ResidualPoint>> {
    require_nonresonant(p)?;
    let stride = stride.max(1);
    let n = traj.len();
    if n < 2 * stride + 1 {
        return Err(NormalFormError::TooFewSnapshots {
            needed: 2 * stride + 1,
            got: n,
        });
    }
    let y: Vec<SpectralField> = traj
        .states
        .par_iter()
        .zip(&traj.times)
        .map(|(u, &t)| Ok(propagate(&(u - &compute_b(u, p)?), -t, p)))
        .collect::<Result<_>>()?;
    (stride..n - stride)
        .into_par_iter()
        .map(|i| {
            let t = traj.times[i];
            let h = traj.times[i + stride] - t;
            let h_back = t - traj.times[i - stride];
            if (h - h_back).abs() > 1e-9 * h.abs().max(h_back.abs()) {
                return Err(NormalFormError::UnevenSpacing(t));
            }
            let u = &traj.states[i];
            let forcing = &compute_r(u, p)? + &compute_nr(u, p)?;
            let derivative = (&y[i + stride] - &y[i - stride]).scale(0.5 / h);
            let defect = &derivative + &propagate(&forcing, -t, p);
            let residual = defect.sobolev_norm(s);
            let reference = forcing.sobolev_norm(s);
            Ok(ResidualPoint {
                time: t,
                spacing: h,
                residual,
                reference,
                relative: if reference > 0.0 {
                    residual / reference
                } else {
                    residual
                },
            })
        })
        .collect()
}

/// Smooth datum for the identity check: cosines at wavenumbers
/// `low_k.0..=low_k.1` plus a weak Gaussian packet above the cutoff.  The
/// packet sits where its self-interaction lands beyond the 2/3 cutoff, so the
/// only fast phases are the low–high ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NfDatum {
    pub low_k: (i64, i64),
    /// Physical amplitude of each cosine.
    pub low_amplitude: f64,
    /// Packet coefficient peak, in the same units as `low_amplitude`.
    pub packet_amplitude: f64,
    pub packet_center: f64,
    pub packet_width: f64,
}

impl Default for NfDatum {
    fn default() -> Self {
        Self {
            low_k: (2, 5),
            low_amplitude: 0.25,
            packet_amplitude: 5e-4,
            packet_center: 12.0,
            packet_width: 1.0,
        }
    }
}

impl NfDatum {
    pub fn field(&self, grid: FrequencyGrid) -> SpectralField {
        let half = grid.period() / 2.0;
        let mut f = SpectralField::from_fn(grid, |xi| {
            let z = (xi.abs() - self.packet_center) / self.packet_width;
            Complex64::new(self.packet_amplitude * half * (-0.5 * z * z).exp(), 0.0)
        });
        for k in self.low_k.0.max(1)..=self.low_k.1 {
            let c = f.coeff(k) + self.low_amplitude * half;
            f.set_coeff(k, c);
            f.set_coeff(-k, c.conj());
        }
        f.set_coeff(0, Complex64::new(0.0, 0.0));
        f
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NfStudy {
    /// One point per spacing, all at the same time.
    pub points: Vec<ResidualPoint>,
    /// Log–log slope of residual against spacing.
    pub fit: LineFit,
}

impl NfStudy {
    pub fn order(&self) -> f64 {
        self.fit.slope
    }
}

/// Residual at the middle snapshot of `traj` for each spacing (rounded to a
/// whole number of records).
pub fn nf_convergence(
    traj: &Trajectory,
    p: &DispersionParams,
    s: f64,
    spacings: &[f64],
) -> Result<NfStudy> {
    if traj.len() < 3 {
        return Err(NormalFormError::TooFewSnapshots {
            needed: 3,
            got: traj.len(),
        });
    }
    let record = traj.times[1] - traj.times[0];
    let mid = traj.len() / 2;
    let points = spacings
        .iter()
        .map(|&h| {
            let stride = ((h / record).round() as usize).max(1);
            if stride > mid || mid + stride >= traj.len() {
                return Err(NormalFormError::TooFewSnapshots {
                    needed: 2 * stride + 1,
                    got: traj.len(),
                });
            }
            let sub = Trajectory {
                times: traj.times[mid - stride..=mid + stride].to_vec(),
                states: traj.states[mid - stride..=mid + stride].to_vec(),
                l2: Vec::new(),
                hs: Vec::new(),
                hs_index: traj.hs_index,
                dt: traj.dt,
                steps: traj.steps,
                warnings: Vec::new(),
            };
            Ok(nf_identity_residual(&sub, p, s, stride)?[0])
        })
        .collect::<Result<Vec<_>>>()?;
    let h: Vec<f64> = points.iter().map(|q| q.spacing).collect();
    let r: Vec<f64> = points.iter().map(|q| q.residual).collect();
    let fit = loglog_slope(&h, &r).ok_or(NormalFormError::TooFewSnapshots {
        needed: 2,
        got: points.len(),
    })?;
    Ok(NfStudy { points, fit })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BScan {
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
}

/// `‖B(u)‖_{H^{s+a}} / ‖u‖²_{H^s}` for each ensemble member (zero fields give 0).
pub fn b_bound_scan(
    s: f64,
    a: f64,
    ensemble: &[SpectralField],
    p: &DispersionParams,
) -> Result<BScan> {
    require_nonresonant(p)?;
    let ratios = ensemble
        .par_iter()
        .map(|u| {
            let norm = u.sobolev_norm(s);
            if norm == 0.0 {
                return Ok(0.0);
            }
            Ok(compute_b(u, p)?.sobolev_norm(s + a) / (norm * norm))
        })
        .collect::<Result<Vec<f64>>>()?;
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    Ok(BScan { ratios, max_ratio })
}

/// Frequency spacing `1/(8N)` with enough modes that `[N, N+1]` and its
/// low–high outputs lie inside the retained band.
pub fn sharpness_grid(n: f64) -> Result<FrequencyGrid> {
    if !(n.is_finite() && n >= 2.0) {
        return Err(NormalFormError::Unresolved(format!(
            "N = {n} must be at least 2"
        )));
    }
    let dxi = 1.0 / (8.0 * n);
    let needed = (3.0 * (n + 2.0) / dxi).ceil() as usize + 2;
    Ok(FrequencyGrid::with_spacing(
        dxi,
        needed.next_power_of_two(),
    )?)
}

/// Two-bump profile `f̂(ξ) = i·sign(ξ)[N^{1/2} χ_{[1/N, 2/N)}(|ξ|) + χ_{[N, N+1)}(|ξ|)]`.
///
/// The odd imaginary parity keeps `f` real and makes the `±ξ₁` low–high
/// contributions to `B` add rather than cancel.
pub fn sharpness_family(n: f64, grid: &FrequencyGrid) -> Result<SpectralField> {
    if !(n.is_finite() && n >= 2.0) {
        return Err(NormalFormError::Unresolved(format!(
            "N = {n} must be at least 2"
        )));
    }
    if grid.dxi() > 1.0 / (2.0 * n) {
        return Err(NormalFormError::Unresolved(format!(
            "spacing {} exceeds 1/(2N) = {}",
            grid.dxi(),
            0.5 / n
        )));
    }
    if grid.dealias_cutoff() < n + 2.0 || grid.xi_max() < 2.0 * n {
        return Err(NormalFormError::Unresolved(format!(
            "retained band {} does not reach N + 2 = {}",
            grid.dealias_cutoff(),
            n + 2.0
        )));
    }
    let low = n.sqrt();
    Ok(SpectralField::from_fn(*grid, |xi| {
        let a = xi.abs();
        let amp = if (1.0 / n..2.0 / n).contains(&a) {
            low
        } else if (n..n + 1.0).contains(&a) {
            1.0
        } else {
            0.0
        };
        Complex64::new(0.0, amp * xi.signum())
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SharpnessRow {
    pub n: f64,
    pub exponent: f64,
    pub norm_f: f64,
    pub norm_b: f64,
    /// `‖B(f_N)‖_{H^{exponent}} / ‖f_N‖²_{L²}`.
    pub ratio: f64,
}

/// Ratios for every `N` and every Sobolev exponent of `B(f_N)`.
pub fn sharpness_scan(
    ns: &[f64],
    exponents: &[f64],
    p: &DispersionParams,
) -> Result<Vec<SharpnessRow>> {
    require_nonresonant(p)?;
    let mut rows = Vec::new();
    for &n in ns {
        let grid = sharpness_grid(n)?;
        let f = sharpness_family(n, &grid)?;
        let b = compute_b(&f, p)?;
        let norm_f = f.l2_norm();
        for &e in exponents {
            let norm_b = b.sobolev_norm(e);
            rows.push(SharpnessRow {
                n,
                exponent: e,
                norm_f,
                norm_b,
                ratio: norm_b / (norm_f * norm_f),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispersion::cutoff_m;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Real field with the given `(k, coefficient)` pairs and their conjugates.
    fn modes(grid: FrequencyGrid, pairs: &[(i64, Complex64)]) -> SpectralField {
        let mut f = SpectralField::zeros(grid);
        for &(k, v) in pairs {
            f.set_coeff(k, v);
            f.set_coeff(-k, v.conj());
        }
        f
    }

    /// Direct enumeration of `prefactor(ξ) Δξ/2π Σ_{k₁} m a(k₁) b(k−k₁) / Φ`.
    fn oracle(a: &SpectralField, b: &SpectralField, p: &DispersionParams, k: i64) -> Complex64 {
        let g = a.grid();
        let kmax = g.dealias_kmax();
        let dxi = g.dxi();
        let xi = k as f64 * dxi;
        let mut sum = c(0.0, 0.0);
        for k1 in -kmax..=kmax {
            let k2 = k - k1;
            if k1 == 0 || k2 == 0 || k2.abs() > kmax {
                continue;
            }
            let xi1 = k1 as f64 * dxi;
            if cutoff_m(xi, xi1, p) == 1 {
                sum += a.coeff(k1) * b.coeff(k2) / p.resonance_unchecked(xi, xi1, xi - xi1);
            }
        }
        sum * xi * dxi / (2.0 * std::f64::consts::PI)
    }

    #[test]
    fn two_mode_b_closed_form() {
        let g = FrequencyGrid::with_spacing(0.05, 1024).unwrap();
        let p = DispersionParams::default();
        let (ka, kb) = (2, 300); // ξ_a = 0.1, ξ_b = 15
        let (ua, ub) = (c(0.3, -0.2), c(1.1, 0.4));
        let u = modes(g, &[(ka, ua), (kb, ub)]);
        let b = compute_b(&u, &p).unwrap();
        let (xi_a, xi_b) = (0.1, 15.0);
        let xi = xi_a + xi_b;
        let phi = p.resonance_unchecked(xi, xi_a, xi_b);
        let expected = xi * 0.05 / (2.0 * std::f64::consts::PI) * 2.0 * ua * ub / phi;
        assert!((b.coeff(ka + kb) - expected).norm() <= 1e-13 * expected.norm());
    }

    #[test]
    fn b_and_nr_match_enumeration() {
        let g = FrequencyGrid::with_spacing(0.1, 512).unwrap();
        let p = DispersionParams::default();
        let u = modes(
            g,
            &[
                (1, c(0.5, 0.1)),
                (3, c(-0.2, 0.7)),
                (120, c(0.9, 0.0)),
                (131, c(0.1, -0.3)),
            ],
        );
        let b = compute_b(&u, &p).unwrap();
        let w = compute_w(&u).unwrap();
        let nr = compute_nr(&u, &p).unwrap();
        let kmax = g.dealias_kmax();
        let scale = b.max_abs().max(1e-300);
        let nr_scale = nr.max_abs();
        for k in -kmax..=kmax {
            let ob = oracle(&u, &u, &p, k);
            assert!((b.coeff(k) - ob).norm() <= 1e-12 * scale, "B at k = {k}");
            let onr = oracle(&u, &w, &p, k) + oracle(&w, &u, &p, k);
            assert!(
                (nr.coeff(k) - onr).norm() <= 1e-12 * nr_scale,
                "NR at k = {k}"
            );
        }
        assert!(b.max_abs() > 0.0 && nr.max_abs() > 0.0);
    }

    #[test]
    fn low_frequency_data_has_no_b() {
        let g = FrequencyGrid::with_spacing(0.1, 512).unwrap();
        let p = DispersionParams::default();
        let u = modes(g, &[(5, c(1.0, 0.0)), (30, c(0.0, 0.5))]);
        assert!(compute_b(&u, &p).unwrap().is_zero());
        assert_eq!(compute_r(&u, &p).unwrap(), rhs_nonlinear(&u));
    }

    #[test]
    fn resonant_regime_is_refused() {
        let g = FrequencyGrid::new(10.0, 64).unwrap();
        let u = SpectralField::zeros(g);
        for gamma in [0.0, -1.0] {
            let p = DispersionParams::new(1.0, gamma).unwrap();
            assert!(matches!(
                compute_b(&u, &p),
                Err(NormalFormError::Resonant(_))
            ));
            assert!(matches!(
                compute_nr(&u, &p),
                Err(NormalFormError::Resonant(_))
            ));
        }
    }

    #[test]
    fn w_of_cosine() {
        let g = FrequencyGrid::new(2.0 * std::f64::consts::PI, 32).unwrap();
        let u = modes(g, &[(1, c(std::f64::consts::PI, 0.0))]);
        let w = compute_w(&u).unwrap().to_samples();
        for (j, v) in w.iter().enumerate() {
            let x = j as f64 * g.dx();
            assert!((v - (2.0 * x).sin()).abs() < 1e-13);
        }
    }

    #[test]
    fn sharpness_profile_checks() {
        let g = sharpness_grid(16.0).unwrap();
        let f = sharpness_family(16.0, &g).unwrap();
        assert!(f.hermitian_defect() < 1e-15);
        // ‖f‖² = 2(N·(1/N) + 1) = 4 up to the Riemann sum of the bump edges
        assert!((f.l2_norm().powi(2) - 4.0).abs() < 0.05);
        let coarse = FrequencyGrid::with_spacing(0.1, 1024).unwrap();
        assert!(sharpness_family(16.0, &coarse).is_err());
        let short = FrequencyGrid::with_spacing(1.0 / 64.0, 1024).unwrap();
        assert!(sharpness_family(16.0, &short).is_err());
    }

    #[test]
    fn b_scan_zero_member() {
        let g = FrequencyGrid::new(10.0, 64).unwrap();
        let scan = b_bound_scan(
            0.0,
            0.5,
            &[SpectralField::zeros(g)],
            &DispersionParams::default(),
        )
        .unwrap();
        assert_eq!(scan.ratios, vec![0.0]);
    }
}
