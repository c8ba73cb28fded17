//! One runner per subcommand.  Each writes its tables into the output
//! directory and returns the threshold checks for the manifest.

use anyhow::Result;
use ostrovsky_core::dispersion::check_sum_lemma;
use ostrovsky_core::evolve::{evolve, kdv_limit_study, temporal_convergence, top_band_fraction};
use ostrovsky_core::normal_form::{b_bound_scan, nf_convergence, sharpness_scan};
use ostrovsky_core::picard::{growth_scan, PicardCase};
use ostrovsky_core::regularity::{random_hs_data, smoothing_gain, RandomDataSpec};
use ostrovsky_core::stats::loglog_slope;
use ostrovsky_core::{EvolutionConfig, FrequencyGrid};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::output::{Bound, Cell, Check, OutputDir};

/// Below this relative error the step-halving order is set by rounding.
const ROUNDOFF_FLOOR: f64 = 1e-12;

pub fn run_evolve(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Vec<Check>> {
    let th = &cfg.thresholds;
    let p = cfg.dispersion.params()?;
    let grid = cfg.grid.build()?;
    let ec = cfg.evolution.build(p)?;
    let f = cfg.datum.field(grid);
    let traj = evolve(&f, &ec)?;

    let rows: Vec<Vec<Cell>> = traj
        .times
        .iter()
        .zip(&traj.l2)
        .zip(&traj.hs)
        .map(|((&t, &l2), &hs)| vec![t.into(), l2.into(), hs.into()])
        .collect();
    out.write_csv("evolve_norms.csv", &["time", "l2", "hs"], &rows)?;

    let (u0, u1) = (f.to_samples(), traj.final_state().to_samples());
    let rows: Vec<Vec<Cell>> = (0..grid.modes())
        .map(|j| vec![(j as f64 * grid.dx()).into(), u0[j].into(), u1[j].into()])
        .collect();
    out.write_csv("evolve_profile.csv", &["x", "u_initial", "u_final"], &rows)?;
    out.write_field("evolve_final.json", traj.final_state())?;

    let conv = temporal_convergence(&f, &ec)?;
    let norm = f.l2_norm();
    let relative = |e: f64| if norm > 0.0 { e / norm } else { 0.0 };
    let rows: Vec<Vec<Cell>> = conv
        .dts
        .iter()
        .zip(&conv.errors)
        .map(|(&dt, &e)| vec![dt.into(), e.into(), relative(e).into()])
        .collect();
    out.write_csv(
        "evolve_convergence.csv",
        &["dt", "error_l2", "relative"],
        &rows,
    )?;

    let top = top_band_fraction(traj.final_state());
    #[derive(Serialize)]
    struct Summary<'a> {
        steps: usize,
        dt: f64,
        l2_drift: f64,
        top_band_fraction: f64,
        temporal_order: f64,
        warnings: &'a [String],
    }
    out.write_json(
        "evolve_summary.json",
        &Summary {
            steps: traj.steps,
            dt: traj.dt,
            l2_drift: traj.l2_drift(),
            top_band_fraction: top,
            temporal_order: conv.order,
            warnings: &traj.warnings,
        },
    )?;

    let step_error = relative(conv.errors[0]);
    let mut checks = vec![
        Check::new(
            "l2_drift",
            traj.l2_drift(),
            Bound::AtMost(th.evolve_max_l2_drift),
        ),
        Check::new(
            "top_band_fraction",
            top,
            Bound::AtMost(th.evolve_max_top_band),
        ),
        Check::new(
            "time_step_error",
            step_error,
            Bound::AtMost(th.evolve_max_time_error),
        ),
    ];
    if step_error > ROUNDOFF_FLOOR {
        checks.push(Check::new(
            "temporal_order",
            conv.order,
            Bound::AtLeast(th.evolve_min_order),
        ));
    }
    Ok(checks)
}

pub fn run_smoothing(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Vec<Check>> {
    let th = &cfg.thresholds;
    let sm = &cfg.smoothing;
    let p = cfg.dispersion.params()?;
    let grid = sm.grid.build()?;
    let ec = sm.evolution.build(p)?;
    let base = RandomDataSpec {
        s: sm.s,
        delta: sm.delta,
        amplitude: sm.amplitude,
        seed: 0,
    };
    let seeds = sm
        .seeds
        .iter()
        .map(|&m| cfg.member_seed(m))
        .collect::<Result<Vec<_>>>()?;
    let report = smoothing_gain(&base, &seeds, &grid, &ec, &sm.options())?;
    out.write_json("smoothing_report.json", &report)?;

    let mut bands = Vec::new();
    let mut norms = Vec::new();
    for x in &report.samples {
        for (which, list) in [("f", &x.band_energies_f), ("v", &x.band_energies_v)] {
            for b in list {
                bands.push(vec![
                    x.seed.into(),
                    which.into(),
                    b.log2_lo.into(),
                    b.lo.into(),
                    b.hi.into(),
                    b.modes.into(),
                    b.energy.into(),
                ]);
            }
        }
        for &a in &sm.a_grid {
            for (&t, v) in x.times.iter().zip(&x.v_states) {
                norms.push(vec![
                    x.seed.into(),
                    a.into(),
                    t.into(),
                    v.sobolev_norm(sm.s + a).into(),
                ]);
            }
        }
    }
    out.write_csv(
        "smoothing_bands.csv",
        &["seed", "field", "log2_lo", "lo", "hi", "modes", "energy"],
        &bands,
    )?;
    out.write_csv(
        "smoothing_vnorms.csv",
        &["seed", "a", "time", "norm"],
        &norms,
    )?;

    let min_gain = report
        .samples
        .iter()
        .map(|x| x.gain)
        .fold(f64::INFINITY, f64::min);
    Ok(vec![
        Check::new(
            "mean_gain",
            report.gain_hat,
            Bound::Within(th.smoothing_gain_lo, th.smoothing_gain_hi),
        ),
        Check::new(
            "min_seed_gain",
            min_gain,
            Bound::AtLeast(th.smoothing_min_seed_gain),
        ),
        Check::holds("v_bounded", report.bounded && !report.degenerate),
    ])
}

pub fn run_picard(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Vec<Check>> {
    let th = &cfg.thresholds;
    let pc = &cfg.picard;
    let mut rows = Vec::new();
    let mut scans = Vec::new();
    let mut checks = Vec::new();
    for &case in &pc.cases {
        let scan = growth_scan(pc.s, pc.a, &pc.n_list, pc.t, case)?;
        for r in &scan.rows {
            rows.push(vec![
                case.name().into(),
                r.n.into(),
                r.value.into(),
                r.rel_error.into(),
                r.norm_f.into(),
                r.k.into(),
                r.c.into(),
            ]);
        }
        let bound = match case {
            PicardCase::GammaPos1 => Bound::AtMost(th.picard_max_control_slope),
            _ => Bound::AtLeast(th.picard_min_growth_slope),
        };
        checks.push(Check::new(
            &format!("slope_{}", case.name()),
            scan.slope(),
            bound,
        ));
        checks.push(Check::new(
            &format!("quad_error_{}", case.name()),
            scan.max_rel_error(),
            Bound::AtMost(th.picard_max_quad_error),
        ));
        scans.push(scan);
    }
    out.write_csv(
        "picard_growth.csv",
        &["case", "N", "norm", "rel_error", "norm_f", "k", "c"],
        &rows,
    )?;
    out.write_json("picard_fits.json", &scans)?;
    Ok(checks)
}

pub fn run_nf_check(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Vec<Check>> {
    let th = &cfg.thresholds;
    let nf = &cfg.nf;
    let p = cfg.dispersion.params()?;
    let grid = nf.grid.build()?;
    let ec = nf.evolution.build(p)?;
    let traj = evolve(&nf.datum.field(grid), &ec)?;
    let study = nf_convergence(&traj, &p, nf.s, &nf.spacings)?;
    let rows: Vec<Vec<Cell>> = study
        .points
        .iter()
        .map(|q| {
            vec![
                q.spacing.into(),
                q.time.into(),
                q.residual.into(),
                q.reference.into(),
                q.relative.into(),
            ]
        })
        .collect();
    out.write_csv(
        "nf_residual.csv",
        &["spacing", "time", "residual", "reference", "relative"],
        &rows,
    )?;
    out.write_json("nf_fit.json", &study)?;
    let at = study
        .points
        .iter()
        .find(|q| (q.spacing - nf.check_spacing).abs() <= 1e-9 * nf.check_spacing)
        .map_or(f64::NAN, |q| q.relative);
    Ok(vec![
        Check::new(
            "residual_order",
            study.order(),
            Bound::Within(th.nf_order - th.nf_order_tol, th.nf_order + th.nf_order_tol),
        ),
        Check::new(
            "relative_at_check_spacing",
            at,
            Bound::AtMost(th.nf_max_relative),
        ),
    ])
}

/// Exponents at or below this are the endpoint of the sharpness family.
const SHARPNESS_ENDPOINT: f64 = 0.5;

pub fn run_bscan(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Vec<Check>> {
    let th = &cfg.thresholds;
    let bs = &cfg.bscan;
    let p = cfg.dispersion.params()?;
    let mut rows = Vec::new();
    let mut means: Vec<(f64, f64)> = Vec::new();
    for &n in &bs.n_list {
        let grid = FrequencyGrid::new(bs.period, n)?;
        let ensemble = bs
            .seeds
            .par_iter()
            .map(|&m| {
                let spec = RandomDataSpec::new(bs.s, cfg.member_seed(m)?);
                Ok(random_hs_data(&spec, &grid)?)
            })
            .collect::<Result<Vec<_>>>()?;
        for &a in &bs.a_list {
            let scan = b_bound_scan(bs.s, a, &ensemble, &p)?;
            for (&m, &r) in bs.seeds.iter().zip(&scan.ratios) {
                rows.push(vec![n.into(), a.into(), m.into(), r.into()]);
            }
            let mean = scan.ratios.iter().sum::<f64>() / scan.ratios.len().max(1) as f64;
            means.push((a, mean));
        }
    }
    out.write_csv("bscan_ensemble.csv", &["N", "a", "member", "ratio"], &rows)?;

    let sharp = sharpness_scan(&bs.sharpness_n_list, &bs.sharpness_exponents, &p)?;
    let rows: Vec<Vec<Cell>> = sharp
        .iter()
        .map(|r| {
            vec![
                r.n.into(),
                r.exponent.into(),
                r.norm_f.into(),
                r.norm_b.into(),
                r.ratio.into(),
            ]
        })
        .collect();
    out.write_csv(
        "bscan_sharpness.csv",
        &["N", "exponent", "norm_f", "norm_b", "ratio"],
        &rows,
    )?;

    let mut checks = Vec::new();
    for &a in &bs.a_list {
        let m: Vec<f64> = means.iter().filter(|x| x.0 == a).map(|x| x.1).collect();
        checks.push(Check::new(
            &format!("ensemble_spread_a{a}"),
            spread(&m),
            Bound::AtMost(th.bscan_max_spread),
        ));
    }
    for &e in &bs.sharpness_exponents {
        let sel: Vec<_> = sharp.iter().filter(|r| r.exponent == e).collect();
        let ratios: Vec<f64> = sel.iter().map(|r| r.ratio).collect();
        if e <= SHARPNESS_ENDPOINT {
            checks.push(Check::new(
                &format!("sharpness_spread_{e}"),
                spread(&ratios),
                Bound::AtMost(th.bscan_max_spread),
            ));
        } else {
            let ns: Vec<f64> = sel.iter().map(|r| r.n).collect();
            let slope = loglog_slope(&ns, &ratios).map_or(f64::NAN, |f| f.slope);
            checks.push(Check::new(
                &format!("sharpness_slope_{e}"),
                slope,
                Bound::AtLeast(th.bscan_min_excess_slope),
            ));
        }
    }
    Ok(checks)
}

pub fn run_kdv_limit(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Vec<Check>> {
    let p = cfg.dispersion.params()?;
    let grid = cfg.grid.build()?;
    let ec = EvolutionConfig {
        horizon: cfg.kdv.horizon,
        ..cfg.evolution.build(p)?
    };
    let f = cfg.datum.field(grid);
    let table = kdv_limit_study(&f, &cfg.kdv.gammas, &ec)?;
    let rows: Vec<Vec<Cell>> = table
        .rows
        .iter()
        .map(|r| vec![r.gamma.into(), r.error.into()])
        .collect();
    out.write_csv("kdv_limit.csv", &["gamma", "error_l2"], &rows)?;
    Ok(vec![Check::holds("strictly_decreasing", table.monotone)])
}

pub fn run_lemma_check(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Vec<Check>> {
    let lm = &cfg.lemma;
    let work: Vec<(f64, f64, f64)> = lm
        .exponents
        .iter()
        .flat_map(|&(b, g)| lm.separations.iter().map(move |&d| (b, g, d)))
        .collect();
    let results = work
        .par_iter()
        .map(|&(b, g, d)| check_sum_lemma(b, g, d, 0.0))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let rows: Vec<Vec<Cell>> = results
        .iter()
        .map(|c| {
            vec![
                c.beta.into(),
                c.gamma.into(),
                c.a1.into(),
                c.a2.into(),
                c.integral.into(),
                c.bound.into(),
                c.ratio.into(),
                c.abs_error.into(),
                (if c.converged { "true" } else { "false" }).into(),
            ]
        })
        .collect();
    out.write_csv(
        "lemma.csv",
        &[
            "beta",
            "gamma",
            "a1",
            "a2",
            "integral",
            "bound",
            "ratio",
            "abs_error",
            "converged",
        ],
        &rows,
    )?;
    let mut checks = Vec::new();
    for &(b, g) in &lm.exponents {
        let sel: Vec<_> = results
            .iter()
            .filter(|c| c.beta == b && c.gamma == g)
            .collect();
        let ratios: Vec<f64> = sel.iter().map(|c| c.ratio).collect();
        checks.push(Check::new(
            &format!("ratio_spread_{b}_{g}"),
            spread(&ratios),
            Bound::AtMost(cfg.thresholds.lemma_max_spread),
        ));
        checks.push(Check::holds(
            &format!("converged_{b}_{g}"),
            sel.iter().all(|c| c.converged),
        ));
    }
    Ok(checks)
}

/// `max/min` of positive values; NaN when empty or non-positive.
fn spread(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    if v.is_empty() || !(min > 0.0) {
        f64::NAN
    } else {
        max / min
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spread_of_values() {
        assert_eq!(spread(&[1.0, 2.0, 1.5]), 2.0);
        assert!(spread(&[]).is_nan());
        assert!(spread(&[0.0, 1.0]).is_nan());
    }
}
