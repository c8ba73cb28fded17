use std::f64::consts::PI;

use num_complex::Complex64;
use ostrovsky_core::dispersion::DispersionParams;
use ostrovsky_core::picard::{
    band_norm, growth_scan, make_family, picard_hat, Parity, PicardCase, PicardFamilySpec, Piece,
    PiecewiseProfile,
};
use proptest::prelude::*;

fn two_piece(parity: Parity) -> PiecewiseProfile {
    PiecewiseProfile::new(
        vec![
            Piece {
                lo: 0.2,
                hi: 0.7,
                value: 1.5,
            },
            Piece {
                lo: 3.0,
                hi: 3.5,
                value: -0.8,
            },
        ],
        parity,
    )
    .unwrap()
}

/// Composite Simpson on every piece between the jumps of `η ↦ f̂(η)f̂(ξ−η)`,
/// with the kernel written from its definition `(e^{−iΦt} − 1)/Φ`.
fn simpson_oracle(profile: &PiecewiseProfile, xi: f64, t: f64, p: &DispersionParams) -> Complex64 {
    let kernel = |phi: f64| {
        if phi.abs() < 1e-12 {
            Complex64::new(0.0, -t)
        } else {
            (Complex64::from_polar(1.0, -phi * t) - 1.0) / phi
        }
    };
    let f = |eta: f64| {
        let u = profile.eval(eta) * profile.eval(xi - eta);
        u * kernel(p.resonance_unchecked(xi, eta, xi - eta))
    };
    let mut edges: Vec<f64> = profile
        .pieces()
        .iter()
        .flat_map(|q| [q.lo, q.hi, -q.lo, -q.hi])
        .collect();
    let shifted: Vec<f64> = edges.iter().map(|e| xi - e).collect();
    edges.extend(shifted);
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    let n = 2000;
    let mut total = Complex64::new(0.0, 0.0);
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mid = 0.5 * (a + b);
        if b - a < 1e-14 || profile.eval(mid) * profile.eval(xi - mid) == Complex64::new(0.0, 0.0) {
            continue;
        }
        // evaluate just inside the piece so the indicator is constant
        let (a, b) = (a + 1e-13 * (b - a), b - 1e-13 * (b - a));
        let h = (b - a) / n as f64;
        let mut sum = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            sum += f(a + i as f64 * h) * w;
        }
        total += sum * h / 3.0;
    }
    Complex64::from_polar(xi / (2.0 * PI), p.phase_unchecked(xi) * t) * total
}

#[test]
fn picard_value_matches_simpson() {
    let p = DispersionParams::default();
    for parity in [Parity::OddImaginary, Parity::EvenReal] {
        let prof = two_piece(parity);
        for xi in [0.6, 1.1, 3.4, 4.0, 6.5] {
            let v = picard_hat(&prof, xi, 0.7, &p).unwrap();
            let oracle = simpson_oracle(&prof, xi, 0.7, &p);
            assert!(
                (v.value - oracle).norm() <= 1e-9 * oracle.norm().max(1e-3),
                "ξ = {xi}: {} vs {oracle}",
                v.value
            );
            assert!(v.abs_error <= 1e-10 * v.value.norm().max(1e-12));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn real_data_give_real_iterates(xi in 0.05f64..8.0, t in 0.1f64..3.0, gamma in -1.0f64..1.0) {
        let p = DispersionParams::default().with_gamma(gamma);
        for parity in [Parity::OddImaginary, Parity::EvenReal] {
            let prof = two_piece(parity);
            let plus = picard_hat(&prof, xi, t, &p).unwrap().value;
            let minus = picard_hat(&prof, -xi, t, &p).unwrap().value;
            prop_assert!((plus - minus.conj()).norm() <= 1e-11 * (1.0 + plus.norm()));
        }
    }

    #[test]
    fn iterate_is_bounded_by_t_times_l1_product(xi in 0.05f64..8.0, t in 0.1f64..3.0) {
        // |K| ≤ t gives |P̂(ξ)| ≤ |ξ| t ‖f̂‖²_{L¹} / 2π
        let p = DispersionParams::default();
        let prof = two_piece(Parity::OddImaginary);
        let l1: f64 = prof.pieces().iter().map(|q| 2.0 * q.value.abs() * (q.hi - q.lo)).sum();
        let v = picard_hat(&prof, xi, t, &p).unwrap().value;
        prop_assert!(v.norm() <= xi * t * l1 * l1 / (2.0 * PI) * (1.0 + 1e-12));
    }
}

#[test]
fn family_data_norm_is_order_one() {
    for case in [
        PicardCase::Gamma0,
        PicardCase::GammaNeg1,
        PicardCase::GammaPos1,
    ] {
        let norms: Vec<f64> = [16.0, 64.0, 256.0]
            .iter()
            .map(|&n| {
                make_family(&PicardFamilySpec::new(n, 0.0, 1.0, case))
                    .unwrap()
                    .profile
                    .sobolev_norm(0.0)
            })
            .collect();
        for w in norms.windows(2) {
            assert!((w[1] / w[0] - 1.0).abs() < 0.05, "{case:?}: {norms:?}");
        }
    }
}

#[test]
fn resonant_window_hits_odd_multiple_of_pi() {
    let fam = make_family(&PicardFamilySpec::new(
        64.0,
        0.0,
        1.0,
        PicardCase::GammaNeg1,
    ))
    .unwrap();
    let p = DispersionParams::default().with_gamma(-1.0);
    let k = fam.k.unwrap() as f64;
    let c = fam.c.unwrap();
    for &xi in &[64.0 - c, 64.0, 64.0 + c] {
        for &eta in &[fam.eta_lo, 0.5 * (fam.eta_lo + fam.eta_hi), fam.eta_hi] {
            let phi = p.resonance_unchecked(xi, eta, xi - eta);
            assert!(
                (phi - k * PI).abs() <= 0.1 + 1e-9,
                "ξ = {xi}, η = {eta}: Φ = {phi}"
            );
        }
    }
}

#[test]
fn band_norm_against_direct_sum() {
    let prof = two_piece(Parity::OddImaginary);
    let p = DispersionParams::default();
    let (lo, hi, t, sigma) = (2.5, 4.5, 0.5, 0.5);
    let bn = band_norm(&prof, sigma, lo, hi, t, &p).unwrap();
    let n = 2000;
    let h = (hi - lo) / n as f64;
    let sum: f64 = (0..n)
        .map(|i| {
            let xi = lo + (i as f64 + 0.5) * h;
            (1.0 + xi * xi).powf(sigma) * picard_hat(&prof, xi, t, &p).unwrap().value.norm_sqr() * h
        })
        .sum();
    let direct = (2.0 * sum).sqrt();
    assert!(
        (bn.value - direct).abs() <= 1e-4 * direct,
        "{} vs {direct}",
        bn.value
    );
    assert!(bn.rel_error < 1e-8);
}

#[test]
fn control_case_does_not_grow() {
    let scan = growth_scan(
        0.0,
        0.25,
        &[16.0, 32.0, 64.0, 128.0],
        1.0,
        PicardCase::GammaPos1,
    )
    .unwrap();
    assert!(scan.slope() <= 0.05, "{}", scan.slope());
    assert!(scan.max_rel_error() <= 1e-8);
}

#[test]
fn kdv_case_grows_on_small_scan() {
    let scan = growth_scan(0.0, 0.25, &[16.0, 32.0, 64.0], 1.0, PicardCase::Gamma0).unwrap();
    assert!(scan.slope() >= 0.15, "{}", scan.slope());
}
