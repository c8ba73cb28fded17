//! Dispersion relation `φ(ξ) = βξ³ − γ/ξ`, the free propagator, the resonance
//! function `Φ(ξ, ξ₁) = φ(ξ) − φ(ξ₁) − φ(ξ − ξ₁)` and the bounds built on it.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::{integrate, integrate_with_breaks, QuadOptions};
use crate::spectral::{japanese, SpectralError, SpectralField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DispersionError {
    #[error("frequency must be nonzero")]
    ZeroFrequency,
    #[error("beta must be nonzero and finite, got {0}")]
    BadBeta(f64),
    #[error("invalid dispersion parameter: {0}")]
    BadParameter(&'static str),
    #[error("lemma requires beta >= gamma >= 0 and beta + gamma > 1, got ({0}, {1})")]
    LemmaPrecondition(f64, f64),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

pub type Result<T> = std::result::Result<T, DispersionError>;

/// Coefficients `(β, γ)` together with the thresholds of the low–high cutoff:
/// `cutoff` realizes `|ξ| ≫ 1` and `lowhigh_ratio` realizes `|ξ₁| ≤ |ξ|/100`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispersionParams {
    pub beta: f64,
    pub gamma: f64,
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
    #[serde(default = "default_ratio")]
    pub lowhigh_ratio: f64,
}

fn default_cutoff() -> f64 {
    10.0
}

fn default_ratio() -> f64 {
    100.0
}

impl Default for DispersionParams {
    fn default() -> Self {
        Self {
            beta: 1.0,
            gamma: 1.0,
            cutoff: default_cutoff(),
            lowhigh_ratio: default_ratio(),
        }
    }
}

impl DispersionParams {
    pub fn new(beta: f64, gamma: f64) -> Result<Self> {
        let p = Self {
            beta,
            gamma,
            ..Self::default()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_cutoff(mut self, cutoff: f64) -> Self {
        self.cutoff = cutoff;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta != 0.0) {
            return Err(DispersionError::BadBeta(self.beta));
        }
        if !self.gamma.is_finite() {
            return Err(DispersionError::BadParameter("gamma must be finite"));
        }
        if !(self.cutoff.is_finite() && self.cutoff > 0.0) {
            return Err(DispersionError::BadParameter("cutoff must be positive"));
        }
        // the two gates of m(ξ, ξ₁) must be disjoint
        if !(self.lowhigh_ratio.is_finite() && self.lowhigh_ratio > 2.0) {
            return Err(DispersionError::BadParameter("lowhigh_ratio must exceed 2"));
        }
        Ok(())
    }

    /// `βγ > 0`: the resonance function has no real zeros.
    pub fn is_nonresonant(&self) -> bool {
        self.beta * self.gamma > 0.0
    }

    /// `φ(ξ)` without the zero check; `ξ = 0` gives a non-finite value when
    /// `γ ≠ 0`.
    #[inline]
    pub fn phase_unchecked(&self, xi: f64) -> f64 {
        if self.gamma == 0.0 {
            self.beta * xi * xi * xi
        } else {
            self.beta * xi * xi * xi - self.gamma / xi
        }
    }

    /// `Φ(ξ, ξ₁)` without the zero checks.
    ///
    /// The cubic part uses `ξ³ − ξ₁³ − ξ₂³ = 3ξξ₁ξ₂` (exact when `ξ = ξ₁ + ξ₂`),
    /// which avoids the cancellation of three large cubes; the reciprocal part
    /// is a direct difference.
    #[inline]
    pub fn resonance_unchecked(&self, xi: f64, xi1: f64, xi2: f64) -> f64 {
        let cubic = 3.0 * self.beta * xi * xi1 * xi2;
        if self.gamma == 0.0 {
            cubic
        } else {
            cubic - self.gamma * (1.0 / xi - 1.0 / xi1 - 1.0 / xi2)
        }
    }
}

/// `φ(ξ) = βξ³ − γ/ξ`.
pub fn phase(xi: f64, p: &DispersionParams) -> Result<f64> {
    if xi == 0.0 {
        return Err(DispersionError::ZeroFrequency);
    }
    Ok(p.phase_unchecked(xi))
}

/// Output frequency `ξ` split as `ξ₁ + ξ₂` with `ξ₂ = ξ − ξ₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceTriple {
    xi: f64,
    xi1: f64,
    xi2: f64,
}

impl ResonanceTriple {
    pub fn new(xi: f64, xi1: f64) -> Result<Self> {
        let xi2 = xi - xi1;
        if xi == 0.0 || xi1 == 0.0 || xi2 == 0.0 {
            return Err(DispersionError::ZeroFrequency);
        }
        Ok(Self { xi, xi1, xi2 })
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }
    pub fn xi1(&self) -> f64 {
        self.xi1
    }
    pub fn xi2(&self) -> f64 {
        self.xi2
    }

    /// The same output frequency with the roles of `ξ₁` and `ξ₂` exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            xi: self.xi,
            xi1: self.xi2,
            xi2: self.xi1,
        }
    }
}

/// `Φ = φ(ξ) − φ(ξ₁) − φ(ξ − ξ₁)`.
pub fn resonance(t: &ResonanceTriple, p: &DispersionParams) -> f64 {
    p.resonance_unchecked(t.xi, t.xi1, t.xi2)
}

/// Numerator `3ξ²ξ₁²(ξ−ξ₁)² + ξ² + ξ₁² − ξξ₁` of the closed form of `Φ` at
/// `β = γ = 1`.
pub fn resonance_numerator(xi: f64, xi1: f64) -> f64 {
    let xi2 = xi - xi1;
    let prod = xi * xi1 * xi2;
    3.0 * prod * prod + xi * xi + xi1 * xi1 - xi * xi1
}

/// Closed rational form of `Φ` for `β = γ = 1`:
/// `[3ξ²ξ₁²(ξ−ξ₁)² + ξ² + ξ₁² − ξξ₁] / [ξξ₁(ξ−ξ₁)]`.
pub fn resonance_rational(xi: f64, xi1: f64) -> Result<f64> {
    let t = ResonanceTriple::new(xi, xi1)?;
    Ok(resonance_numerator(xi, xi1) / (t.xi * t.xi1 * t.xi2))
}

/// `K(ξ, ξ₁) = |ξ₁| / (ξ²ξ₁² + 1)`.
pub fn kbound(xi: f64, xi1: f64) -> f64 {
    xi1.abs() / (xi * xi * xi1 * xi1 + 1.0)
}

/// Numerical maximum of `K(ξ, ·)` over `ξ₁ > 0` by golden-section search in
/// `ln ξ₁`; returns `(argmax, max)`.
pub fn kbound_max(xi: f64) -> (f64, f64) {
    let scale = 1.0 / xi.abs();
    let f = |t: f64| kbound(xi, scale * t.exp());
    let (mut a, mut b) = (-8.0f64, 8.0f64);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-10 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    (scale * t.exp(), f(t))
}

/// Sharp low–high cutoff: 1 iff `|ξ| > Ξ₀` and either `|ξ₁| ≤ |ξ|/ratio` or
/// `|ξ − ξ₁| ≤ |ξ|/ratio`.
pub fn cutoff_m(xi: f64, xi1: f64, p: &DispersionParams) -> u8 {
    let gate = xi.abs() / p.lowhigh_ratio;
    u8::from(xi.abs() > p.cutoff && (xi1.abs() <= gate || (xi - xi1).abs() <= gate))
}

/// Free propagator `S(t)`: multiplies each mode by `e^{iφ(ξ)t}`, so that
/// `v = S(t)f` solves `v_t + Lv = 0` with `L = β∂_x³ − γ∂_x⁻¹`.  Requires a
/// mean-zero field; the zero mode is left untouched.
pub fn free_evolution(f: &SpectralField, t: f64, p: &DispersionParams) -> Result<SpectralField> {
    f.require_mean_zero()?;
    Ok(propagate(f, t, p))
}

pub(crate) fn propagate(f: &SpectralField, t: f64, p: &DispersionParams) -> SpectralField {
    if t == 0.0 {
        return f.clone();
    }
    f.apply_multiplier(|xi| {
        if xi == 0.0 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::from_polar(1.0, p.phase_unchecked(xi) * t)
        }
    })
}

/// `Lf` for `L = β∂_x³ − γ∂_x⁻¹`, symbol `−iφ(ξ)`.
pub fn linear_operator(f: &SpectralField, p: &DispersionParams) -> Result<SpectralField> {
    f.require_mean_zero()?;
    Ok(f.apply_multiplier(|xi| {
        if xi == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, -p.phase_unchecked(xi))
        }
    }))
}

/// Result of a K-bound scan: the largest `1/(|Φ|·K)` found on the low–high
/// region `|ξ| > Ξ₀`, `|ξ₁| ≤ |ξ|/ratio`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KBoundScan {
    pub max_ratio: f64,
    pub argmax_xi: f64,
    pub argmax_xi1: f64,
    pub samples: usize,
}

/// Scan `1/(|Φ(ξ,ξ₁)|·K(ξ,ξ₁))` on a log grid: `n_xi` values of `ξ` in
/// `(Ξ₀, xi_hi]` and `n_xi1` values of `ξ₁` (half of each sign) spanning
/// `|ξ|/ratio · [1e−8, 1]`.
pub fn kbound_scan(p: &DispersionParams, xi_hi: f64, n_xi: usize, n_xi1: usize) -> KBoundScan {
    let lo = p.cutoff.ln();
    let hi = xi_hi.ln();
    let per_sign = (n_xi1 / 2).max(1);
    let best = (0..n_xi)
        .into_par_iter()
        .map(|i| {
            let xi = (lo + (hi - lo) * (i + 1) as f64 / n_xi as f64).exp();
            let gate = xi / p.lowhigh_ratio;
            let mut local = (0.0f64, xi, 0.0);
            for j in 0..per_sign {
                let frac = if per_sign == 1 {
                    1.0
                } else {
                    (-8.0 * std::f64::consts::LN_10 * (1.0 - j as f64 / (per_sign - 1) as f64))
                        .exp()
                };
                for sign in [-1.0, 1.0] {
                    let xi1 = sign * gate * frac;
                    let phi = p.resonance_unchecked(xi, xi1, xi - xi1);
                    let r = 1.0 / (phi.abs() * kbound(xi, xi1));
                    if r > local.0 {
                        local = (r, xi, xi1);
                    }
                }
            }
            local
        })
        .reduce(|| (0.0, 0.0, 0.0), |a, b| if b.0 > a.0 { b } else { a });
    KBoundScan {
        max_ratio: best.0,
        argmax_xi: best.1,
        argmax_xi1: best.2,
        samples: n_xi * per_sign * 2,
    }
}

/// First sign change of `η ↦ Φ(ξ, η)` on a uniform scan of `(lo, hi)`;
/// returns the bracketing pair.
pub fn find_sign_change(
    xi: f64,
    lo: f64,
    hi: f64,
    samples: usize,
    p: &DispersionParams,
) -> Option<(f64, f64)> {
    let eta = |j: usize| lo + (hi - lo) * (j as f64 + 0.5) / samples as f64;
    let value = |e: f64| p.resonance_unchecked(xi, e, xi - e);
    (0..samples.saturating_sub(1)).find_map(|j| {
        let (a, b) = (eta(j), eta(j + 1));
        let (fa, fb) = (value(a), value(b));
        (fa.is_finite() && fb.is_finite() && fa.signum() != fb.signum()).then_some((a, b))
    })
}

/// One evaluation of the convolution-sum lemma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaCheck {
    pub beta: f64,
    pub gamma: f64,
    pub a1: f64,
    pub a2: f64,
    /// `∫ ⟨x−a₁⟩^{−β} ⟨x−a₂⟩^{−γ} dx`.
    pub integral: f64,
    /// `⟨a₁−a₂⟩^{−γ} φ_β(a₁−a₂)`.
    pub bound: f64,
    pub ratio: f64,
    pub abs_error: f64,
    pub converged: bool,
}

/// `φ_β(a)`: `1` for `β > 1`, `log(1 + ⟨a⟩)` for `β = 1`, `⟨a⟩^{1−β}` for `β < 1`.
pub fn lemma_phi(beta: f64, a: f64) -> f64 {
    let ja = japanese(a);
    if beta > 1.0 {
        1.0
    } else if beta == 1.0 {
        (1.0 + ja).ln()
    } else {
        ja.powf(1.0 - beta)
    }
}

/// Evaluate `∫ dx / (⟨x−a₁⟩^β ⟨x−a₂⟩^γ)` by adaptive quadrature and return it
/// together with its ratio to `⟨a₁−a₂⟩^{−γ} φ_β(a₁−a₂)`.
///
/// The core `[−R, R]` (`R ≥ 10⁴`) is integrated with breakpoints at the two
/// centres; each tail is mapped by `x = ±R e^τ` onto a finite `τ` range, and
/// the neglected far tail is bounded in closed form and added to the error.
pub fn check_sum_lemma(beta: f64, gamma: f64, a1: f64, a2: f64) -> Result<LemmaCheck> {
    if !(beta >= gamma && gamma >= 0.0 && beta + gamma > 1.0) || !a1.is_finite() || !a2.is_finite()
    {
        return Err(DispersionError::LemmaPrecondition(beta, gamma));
    }
    let f = |x: f64| japanese(x - a1).powf(-beta) * japanese(x - a2).powf(-gamma);
    let opts = QuadOptions {
        abs_tol: 0.0,
        rel_tol: 1e-11,
        max_intervals: 5000,
    };
    let (lo, hi) = (a1.min(a2), a1.max(a2));
    let r = 1e4f64.max(10.0 * (a1.abs().max(a2.abs()) + 1.0));
    let mut breaks = vec![-r, lo - 1.0, lo, lo + 1.0, hi - 1.0, hi, hi + 1.0, r];
    breaks.retain(|x| *x >= -r && *x <= r);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let core = integrate_with_breaks(f, &breaks, opts);

    let decay = beta + gamma - 1.0;
    let tau_max = 40.0 / decay;
    let right = integrate(
        |t: f64| {
            let x = r * t.exp();
            f(x) * x
        },
        0.0,
        tau_max,
        opts,
    );
    let left = integrate(
        |t: f64| {
            let x = -r * t.exp();
            f(x) * (-x)
        },
        0.0,
        tau_max,
        opts,
    );
    // beyond |x| = X the integrand is below (|x|/2)^{−β−γ} since |a| ≪ X
    let far = r * tau_max.exp();
    let far_bound = 2.0 * 2f64.powf(beta + gamma) * far.powf(-decay) / decay;

    let integral = core.value + right.value + left.value;
    let bound = japanese(a1 - a2).powf(-gamma) * lemma_phi(beta, a1 - a2);
    Ok(LemmaCheck {
        beta,
        gamma,
        a1,
        a2,
        integral,
        bound,
        ratio: integral / bound,
        abs_error: core.abs_error + right.abs_error + left.abs_error + far_bound,
        converged: core.converged && right.converged && left.converged,
    })
}
