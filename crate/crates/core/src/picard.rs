//! First Picard iterate on the line, evaluated in continuous frequency.
//!
//! For data `f` the quadratic Duhamel term of `u_t + Lu + ∂_x(u²) = 0` is
//!
//! ```text
//! P̂_t(f)(ξ) = (ξ/2π) e^{iφ(ξ)t} ∫ K_t(ξ,η) f̂(η) f̂(ξ−η) dη,
//! K_t = (e^{−iΦt} − 1)/Φ = −it e^{−iΦt/2} sinc(Φt/2),
//! ```
//!
//! so `S(t)f − P_t(f)` is the first Picard iterate.  Profiles are piecewise
//! constant in `|η|`, which turns the η-integral into a finite sum of smooth
//! integrals over interval intersections.

use std::cell::Cell;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispersion::DispersionParams;
use crate::quadrature::{integrate, integrate_with_breaks, QuadOptions};
use crate::spectral::japanese;
use crate::stats::{loglog_slope, LineFit};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PicardError {
    #[error("invalid profile: {0}")]
    BadProfile(String),
    #[error("no admissible window: {0}")]
    NoWindow(String),
    #[error("quadrature error estimate {rel_error:e} exceeds {tolerance:e} at N = {n}")]
    Quadrature {
        n: f64,
        rel_error: f64,
        tolerance: f64,
    },
    #[error("invalid argument: {0}")]
    BadArgument(String),
}

pub type Result<T> = std::result::Result<T, PicardError>;

/// Largest accepted relative quadrature error estimate.
pub const QUAD_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    /// `f̂(η) = i·sign(η)·v(|η|)`.
    OddImaginary,
    /// `f̂(η) = v(|η|)`.
    EvenReal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub value: f64,
}

/// `v(|η|) = value` on `lo ≤ |η| < hi`, zero elsewhere; either parity gives
/// a real-valued `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseProfile {
    pieces: Vec<Piece>,
    parity: Parity,
}

impl PiecewiseProfile {
    pub fn new(mut pieces: Vec<Piece>, parity: Parity) -> Result<Self> {
        pieces.retain(|p| p.value != 0.0);
        pieces.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        for p in &pieces {
            if !(p.lo > 0.0 && p.lo < p.hi && p.hi.is_finite() && p.value.is_finite()) {
                return Err(PicardError::BadProfile(format!(
                    "piece [{}, {}) with value {} needs 0 < lo < hi",
                    p.lo, p.hi, p.value
                )));
            }
        }
        if pieces.windows(2).any(|w| w[1].lo < w[0].hi) {
            return Err(PicardError::BadProfile("pieces overlap".into()));
        }
        Ok(Self { pieces, parity })
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    pub fn is_zero(&self) -> bool {
        self.pieces.is_empty()
    }

    fn signed_value(&self, value: f64, sign: f64) -> Complex64 {
        match self.parity {
            Parity::OddImaginary => Complex64::new(0.0, sign * value),
            Parity::EvenReal => Complex64::new(value, 0.0),
        }
    }

    pub fn eval(&self, eta: f64) -> Complex64 {
        let a = eta.abs();
        self.pieces
            .iter()
            .find(|p| p.lo <= a && a < p.hi)
            .map_or(Complex64::new(0.0, 0.0), |p| {
                self.signed_value(p.value, eta.signum())
            })
    }

    /// Signed intervals `(lo, hi, f̂ on it)` covering the support.
    fn signed_intervals(&self) -> Vec<(f64, f64, Complex64)> {
        self.pieces
            .iter()
            .flat_map(|p| {
                [
                    (p.lo, p.hi, self.signed_value(p.value, 1.0)),
                    (-p.hi, -p.lo, self.signed_value(p.value, -1.0)),
                ]
            })
            .collect()
    }

    /// `‖f‖_{H^s}² = 2 Σ v² ∫_lo^hi ⟨η⟩^{2s} dη`.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        let total: f64 = self
            .pieces
            .iter()
            .map(|p| {
                let r = integrate(
                    |x: f64| japanese(x).powf(2.0 * s),
                    p.lo,
                    p.hi,
                    QuadOptions::relative(1e-13),
                );
                p.value * p.value * r.value
            })
            .sum();
        (2.0 * total).sqrt()
    }
}

/// `(e^{−iΦt} − 1)/Φ` in the form `−it e^{−iΦt/2} sinc(Φt/2)`, regular at `Φ = 0`.
pub fn duhamel_kernel(phi: f64, t: f64) -> Complex64 {
    let x = 0.5 * phi * t;
    let sinc = if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    };
    Complex64::new(0.0, -t * sinc) * Complex64::from_polar(1.0, -x)
}

/// A Picard value with its quadrature error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PicardValue {
    pub value: Complex64,
    pub abs_error: f64,
}

/// `P̂_t(f)(ξ)` by adaptive quadrature over every intersection of the
/// supports of `f̂(η)` and `f̂(ξ−η)`.
pub fn picard_hat(
    profile: &PiecewiseProfile,
    xi: f64,
    t: f64,
    p: &DispersionParams,
) -> Result<PicardValue> {
    if xi == 0.0 || !xi.is_finite() {
        return Err(PicardError::BadArgument(format!(
            "frequency must be nonzero, got {xi}"
        )));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(PicardError::BadArgument(format!(
            "time must be positive, got {t}"
        )));
    }
    let opts = QuadOptions {
        abs_tol: 0.0,
        rel_tol: 1e-12,
        max_intervals: 200,
    };
    let intervals = profile.signed_intervals();
    let mut integral = Complex64::new(0.0, 0.0);
    let mut abs_error = 0.0;
    for &(a_lo, a_hi, va) in &intervals {
        for &(b_lo, b_hi, vb) in &intervals {
            // η ∈ [a_lo, a_hi) and ξ − η ∈ [b_lo, b_hi)
            let lo = a_lo.max(xi - b_hi);
            let hi = a_hi.min(xi - b_lo);
            if hi <= lo {
                continue;
            }
            let r = integrate(
                |eta: f64| duhamel_kernel(p.resonance_unchecked(xi, eta, xi - eta), t),
                lo,
                hi,
                opts,
            );
            integral += va * vb * r.value;
            abs_error += (va * vb).norm() * r.abs_error;
        }
    }
    let prefactor = Complex64::from_polar(xi / (2.0 * PI), p.phase_unchecked(xi) * t);
    Ok(PicardValue {
        value: prefactor * integral,
        abs_error: prefactor.norm() * abs_error,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PicardCase {
    /// KdV (`γ = 0`): low window at `|η| ≈ π/(3tN²)`.
    Gamma0,
    /// `γ = −1`: low window at the resonant `|η| ≈ 1/(√3N)`.
    GammaNeg1,
    /// `γ = +1` evaluated on the `γ = −1` window, where `Φ` no longer vanishes.
    GammaPos1,
}

impl PicardCase {
    pub fn gamma(self) -> f64 {
        match self {
            PicardCase::Gamma0 => 0.0,
            PicardCase::GammaNeg1 => -1.0,
            PicardCase::GammaPos1 => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PicardCase::Gamma0 => "gamma0",
            PicardCase::GammaNeg1 => "gamma_neg1",
            PicardCase::GammaPos1 => "gamma_pos1",
        }
    }
}

/// Parameters of a counterexample family.  Window constants left as `None`
/// are solved for by [`make_family`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardFamilySpec {
    pub n: f64,
    pub s: f64,
    pub t: f64,
    pub case: PicardCase,
    pub window_lo: Option<f64>,
    pub window_hi: Option<f64>,
    pub k: Option<u32>,
}

impl PicardFamilySpec {
    pub fn new(n: f64, s: f64, t: f64, case: PicardCase) -> Self {
        Self {
            n,
            s,
            t,
            case,
            window_lo: None,
            window_hi: None,
            k: None,
        }
    }
}

/// A constructed family member together with the constants that were used.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PicardFamily {
    pub spec: PicardFamilySpec,
    pub profile: PiecewiseProfile,
    pub window_lo: f64,
    pub window_hi: f64,
    /// Low-frequency support `[eta_lo, eta_hi)` in `|η|`.
    pub eta_lo: f64,
    pub eta_hi: f64,
    /// Odd multiple of `π` targeted by `tΦ` (`γ = ∓1` windows).
    pub k: Option<u32>,
    /// Half-width of the output band `[N − c, N + c]` on which `|tΦ − kπ| ≤ 1/10`.
    pub c: Option<f64>,
    pub params: DispersionParams,
}

fn dispersion_for(case: PicardCase) -> DispersionParams {
    DispersionParams {
        gamma: case.gamma(),
        ..DispersionParams::default()
    }
}

/// Build `f̂_N(η) = i·sign(η)[N χ_window(|η|) + N^{−s} χ_{[N,N+1)}(|η|)]`.
///
/// `Gamma0` uses the window `[α/N², β/N²]` with `[3tα, 3tβ] ⊂ [π − 1/10, π + 1/10]`
/// (defaults `α, β = (π ∓ 1/20)/(3t)`).  The `γ = ∓1` cases use
/// `[1/(√3N − β), 1/(√3N − α)]`: there `Φ ≈ 2b + 2√3(ξ − N)` for
/// `|η| = 1/(√3N − b)`, so the window is centred on `b = kπ/(2t)` with the
/// smallest admissible odd `k` and width `1/(20t)`, and the output half-width
/// `c` is the largest value `≤ 1/4` for which the exact `tΦ` stays within
/// `1/10` of `kπ` on a sample grid.
pub fn make_family(spec: &PicardFamilySpec) -> Result<PicardFamily> {
    let n = spec.n;
    let t = spec.t;
    if !(n.is_finite() && n >= 2.0) || !(t.is_finite() && t > 0.0) || !spec.s.is_finite() {
        return Err(PicardError::BadArgument(format!(
            "need N ≥ 2, t > 0; got N = {n}, t = {t}"
        )));
    }
    let params = dispersion_for(spec.case);
    let high = Piece {
        lo: n,
        hi: n + 1.0,
        value: n.powf(-spec.s),
    };
    match spec.case {
        PicardCase::Gamma0 => {
            let lo = spec.window_lo.unwrap_or((PI - 0.05) / (3.0 * t));
            let hi = spec.window_hi.unwrap_or((PI + 0.05) / (3.0 * t));
            if !(0.0 < lo && lo < hi && 3.0 * t * lo >= PI - 0.1 && 3.0 * t * hi <= PI + 0.1) {
                return Err(PicardError::NoWindow(format!(
                    "[3t·{lo}, 3t·{hi}] is not inside [π − 1/10, π + 1/10]"
                )));
            }
            let (eta_lo, eta_hi) = (lo / (n * n), hi / (n * n));
            let profile = family_profile(n, eta_lo, eta_hi, high)?;
            Ok(PicardFamily {
                spec: *spec,
                profile,
                window_lo: lo,
                window_hi: hi,
                eta_lo,
                eta_hi,
                k: None,
                c: None,
                params,
            })
        }
        PicardCase::GammaNeg1 | PicardCase::GammaPos1 => {
            let root = 3f64.sqrt() * n;
            let half_width = 0.025 / t;
            let k = match spec.k {
                Some(k) if k % 2 == 1 => k,
                Some(k) => return Err(PicardError::NoWindow(format!("k = {k} must be odd"))),
                None => {
                    let mut k = 1;
                    while k as f64 * PI / (2.0 * t) - half_width <= 0.0 {
                        k += 2;
                    }
                    k
                }
            };
            let centre = k as f64 * PI / (2.0 * t);
            let lo = spec.window_lo.unwrap_or(centre - half_width);
            let hi = spec.window_hi.unwrap_or(centre + half_width);
            if !(0.0 < lo && lo < hi && hi < root) {
                return Err(PicardError::NoWindow(format!(
                    "window [{lo}, {hi}] must satisfy 0 < lo < hi < √3N = {root}"
                )));
            }
            let (eta_lo, eta_hi) = (1.0 / (root - lo), 1.0 / (root - hi));
            let profile = family_profile(n, eta_lo, eta_hi, high)?;
            // admissibility is a property of the γ = −1 phase, also for the control
            let resonant = dispersion_for(PicardCase::GammaNeg1);
            let target = k as f64 * PI;
            let admissible = |c: f64| {
                (0..=16).all(|i| {
                    let xi = n - c + 2.0 * c * i as f64 / 16.0;
                    (0..=16).all(|j| {
                        let eta = eta_lo + (eta_hi - eta_lo) * j as f64 / 16.0;
                        let phi = resonant.resonance_unchecked(xi, eta, xi - eta);
                        (t * phi - target).abs() <= 0.1
                    })
                })
            };
            let mut c = 0.25;
            while !admissible(c) {
                c *= 0.8;
                if c < 1e-6 {
                    return Err(PicardError::NoWindow(format!(
                        "tΦ misses kπ = {target} by more than 1/10 for every c"
                    )));
                }
            }
            Ok(PicardFamily {
                spec: *spec,
                profile,
                window_lo: lo,
                window_hi: hi,
                eta_lo,
                eta_hi,
                k: Some(k),
                c: Some(c),
                params,
            })
        }
    }
}

fn family_profile(n: f64, eta_lo: f64, eta_hi: f64, high: Piece) -> Result<PiecewiseProfile> {
    PiecewiseProfile::new(
        vec![
            Piece {
                lo: eta_lo,
                hi: eta_hi,
                value: n,
            },
            high,
        ],
        Parity::OddImaginary,
    )
}

/// `‖P_t(f)‖_{H^σ}` restricted to `|ξ| ∈ [lo, hi]`, with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandNorm {
    pub value: f64,
    pub rel_error: f64,
}

/// `(2 ∫_lo^hi ⟨ξ⟩^{2σ} |P̂_t(f)(ξ)|² dξ)^{1/2}`; the factor 2 accounts for
/// the mirror band by reality.  Breakpoints are placed at every sum of two
/// support edges, where the integrand has kinks.
pub fn band_norm(
    profile: &PiecewiseProfile,
    sigma: f64,
    lo: f64,
    hi: f64,
    t: f64,
    p: &DispersionParams,
) -> Result<BandNorm> {
    if !(0.0 < lo && lo < hi) {
        return Err(PicardError::BadArgument(format!(
            "band [{lo}, {hi}] must be positive"
        )));
    }
    let edges: Vec<f64> = profile
        .signed_intervals()
        .iter()
        .flat_map(|&(a, b, _)| [a, b])
        .collect();
    let mut breaks = vec![lo, hi];
    for &e1 in &edges {
        for &e2 in &edges {
            let x = e1 + e2;
            if x > lo && x < hi {
                breaks.push(x);
            }
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let failure: Cell<Option<PicardError>> = Cell::new(None);
    // max over nodes of the propagated inner error, per unit ξ
    let inner = Cell::new(0.0f64);
    let r = integrate_with_breaks(
        |xi: f64| match picard_hat(profile, xi, t, p) {
            Ok(v) => {
                let w = japanese(xi).powf(2.0 * sigma);
                inner.set(inner.get().max(2.0 * w * v.value.norm() * v.abs_error));
                w * v.value.norm_sqr()
            }
            Err(e) => {
                failure.set(Some(e));
                0.0
            }
        },
        &breaks,
        QuadOptions {
            abs_tol: 0.0,
            rel_tol: 1e-11,
            max_intervals: 4000,
        },
    );
    if let Some(e) = failure.take() {
        return Err(e);
    }
    let total_error = r.abs_error + inner.get() * (hi - lo);
    let rel_error = if r.value > 0.0 {
        total_error / r.value
    } else {
        0.0
    };
    Ok(BandNorm {
        value: (2.0 * r.value).sqrt(),
        // relative error of the square root is half that of its argument
        rel_error: 0.5 * rel_error,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthRow {
    pub n: f64,
    pub value: f64,
    pub rel_error: f64,
    pub norm_f: f64,
    pub k: Option<u32>,
    pub c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthScan {
    pub case: PicardCase,
    pub s: f64,
    pub a: f64,
    pub t: f64,
    pub rows: Vec<GrowthRow>,
    pub fit: Option<LineFit>,
    /// The tabulated norm is restricted to `|ξ| ∈ [N−1, N+2]`, a lower bound
    /// for the full norm.
    pub band: &'static str,
}

impl GrowthScan {
    pub fn slope(&self) -> f64 {
        self.fit.map_or(f64::NAN, |f| f.slope)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.rows.iter().map(|r| r.rel_error).fold(0.0, f64::max)
    }
}

/// `N ↦ ‖P_t(f_N)‖_{H^{s+a}}` on the band `[N−1, N+2]` with a log–log fit.
pub fn growth_scan(s: f64, a: f64, ns: &[f64], t: f64, case: PicardCase) -> Result<GrowthScan> {
    let rows = ns
        .par_iter()
        .map(|&n| {
            let family = make_family(&PicardFamilySpec::new(n, s, t, case))?;
            let norm = band_norm(&family.profile, s + a, n - 1.0, n + 2.0, t, &family.params)?;
            if norm.rel_error > QUAD_TOLERANCE {
                return Err(PicardError::Quadrature {
                    n,
                    rel_error: norm.rel_error,
                    tolerance: QUAD_TOLERANCE,
                });
            }
            Ok(GrowthRow {
                n,
                value: norm.value,
                rel_error: norm.rel_error,
                norm_f: family.profile.sobolev_norm(s),
                k: family.k,
                c: family.c,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = rows.iter().map(|r| r.n).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.value).collect();
    Ok(GrowthScan {
        case,
        s,
        a,
        t,
        fit: loglog_slope(&x, &y),
        rows,
        band: "[N-1, N+2]",
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_limit_and_identity() {
        for t in [0.5, 1.0, 3.0] {
            assert!((duhamel_kernel(1e-12, t) - Complex64::new(0.0, -t)).norm() <= 1e-10 * t);
            // near Φ = 0 the kernel is −it(1 − iΦt/2 + O(Φ²t²))
            for x in [1e-9, 1e-7, 9e-7] {
                let phi = x / t;
                let taylor = Complex64::new(0.0, -t) * Complex64::new(1.0, -0.5 * x);
                assert!((duhamel_kernel(phi, t) - taylor).norm() <= 1e-10 * t);
            }
            let phi = 2.7;
            let exact = (Complex64::from_polar(1.0, -phi * t) - 1.0) / phi;
            assert!((duhamel_kernel(phi, t) - exact).norm() < 1e-15);
        }
    }

    #[test]
    fn profile_validation() {
        let bad = PiecewiseProfile::new(
            vec![
                Piece {
                    lo: 1.0,
                    hi: 2.0,
                    value: 1.0,
                },
                Piece {
                    lo: 1.5,
                    hi: 3.0,
                    value: 1.0,
                },
            ],
            Parity::EvenReal,
        );
        assert!(bad.is_err());
        assert!(PiecewiseProfile::new(
            vec![Piece {
                lo: 0.0,
                hi: 1.0,
                value: 1.0
            }],
            Parity::EvenReal
        )
        .is_err());
        let p = PiecewiseProfile::new(
            vec![Piece {
                lo: 1.0,
                hi: 2.0,
                value: 3.0,
            }],
            Parity::OddImaginary,
        )
        .unwrap();
        assert_eq!(p.eval(1.5), Complex64::new(0.0, 3.0));
        assert_eq!(p.eval(-1.5), Complex64::new(0.0, -3.0));
        assert_eq!(p.eval(2.0), Complex64::new(0.0, 0.0));
        assert!((p.sobolev_norm(0.0) - (2.0f64 * 9.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_profile_gives_zero() {
        let p = PiecewiseProfile::new(vec![], Parity::EvenReal).unwrap();
        let v = picard_hat(&p, 3.0, 1.0, &DispersionParams::default()).unwrap();
        assert_eq!(v.value, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn reality_symmetry() {
        let p = PiecewiseProfile::new(
            vec![
                Piece {
                    lo: 0.2,
                    hi: 0.9,
                    value: 1.3,
                },
                Piece {
                    lo: 4.0,
                    hi: 5.5,
                    value: -0.4,
                },
            ],
            Parity::OddImaginary,
        )
        .unwrap();
        let d = DispersionParams::default();
        for xi in [0.5, 1.7, 4.6, 6.1] {
            let a = picard_hat(&p, xi, 0.7, &d).unwrap().value;
            let b = picard_hat(&p, -xi, 0.7, &d).unwrap().value;
            assert!(
                (a - b.conj()).norm() <= 1e-12 * a.norm().max(1e-300),
                "xi = {xi}"
            );
        }
    }

    #[test]
    fn gamma0_window_defaults() {
        let fam = make_family(&PicardFamilySpec::new(64.0, 0.0, 1.0, PicardCase::Gamma0)).unwrap();
        assert!(3.0 * fam.window_lo >= PI - 0.1 && 3.0 * fam.window_hi <= PI + 0.1);
        let bad = PicardFamilySpec {
            window_lo: Some(0.5),
            ..PicardFamilySpec::new(64.0, 0.0, 1.0, PicardCase::Gamma0)
        };
        assert!(matches!(make_family(&bad), Err(PicardError::NoWindow(_))));
    }

    #[test]
    fn negative_gamma_window() {
        for n in [16.0, 128.0, 512.0] {
            let fam =
                make_family(&PicardFamilySpec::new(n, 0.0, 1.0, PicardCase::GammaNeg1)).unwrap();
            assert_eq!(fam.k, Some(1));
            let width = fam.eta_hi - fam.eta_lo;
            assert!(width > 0.0 && width * n * n < 0.1);
            assert!(fam.c.unwrap() > 0.0 && fam.c.unwrap() <= 0.25);
        }
        let even = PicardFamilySpec {
            k: Some(2),
            ..PicardFamilySpec::new(64.0, 0.0, 1.0, PicardCase::GammaNeg1)
        };
        assert!(make_family(&even).is_err());
    }

    #[test]
    fn gamma0_magnitude_is_order_one() {
        let n = 64.0;
        let fam = make_family(&PicardFamilySpec::new(n, 0.0, 1.0, PicardCase::Gamma0)).unwrap();
        for xi in [n + 0.2, n + 0.5, n + 0.8] {
            let v = picard_hat(&fam.profile, xi, 1.0, &fam.params).unwrap();
            assert!(
                v.value.norm() > 1e-3 && v.value.norm() < 1.0,
                "{}",
                v.value.norm()
            );
        }
    }
}
