//! Acceptance criteria 1-7, one test each.
//!
//! Every test prints a single `criterion N: PASS|FAIL | ...` line straight to
//! stdout (bypassing the harness capture) and then asserts the outcome.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use weaktraj::bohm::{
    cdf_transport_trajectories, cvt_trajectories, phase_trajectories, seed_quantiles, QuantileSeeds,
};
use weaktraj::config::RunConfig;
use weaktraj::density::DensityCurve;
use weaktraj::ensemble::TrajectoryEnsemble;
use weaktraj::grid::{trapezoid, Grid};
use weaktraj::metrics::{congregation_score, ensemble_mean_r};
use weaktraj::reconstruction::{reconstruct_from_frames, PipelineMode};
use weaktraj::sensor::{
    add_noise, normalize_legacy, normalize_magnified, project_to_pixels, subtract_background, Channel,
    NoiseConfig, SensorGeometry,
};
use weaktraj::smoothing::{kde_estimate, silverman_bandwidth, Bandwidth, WeightKind, WeightedSamples};
use weaktraj::synthetic::{frames_from_truth, ground_truth, plane_truths, synthesize};
use weaktraj::wavefield::{
    intensity, make_two_slit_field, phase_gradient_slope, propagate_analytic, propagate_spectral,
    SlitConfig,
};
use weaktraj::weak_momentum::{
    infer_kx_over_k, slope_of, CouplingConstant, MomentumMode, UpdateMode, REFERENCE_ZETA,
};

fn report(id: u32, pass: bool, elapsed: Duration, detail: &str) {
    let mut out = std::io::stdout().lock();
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(
        out,
        "criterion {id}: {verdict} | {:.2}s | {detail}",
        elapsed.as_secs_f64()
    );
    let _ = out.flush();
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    0.5 * (v[(n - 1) / 2] + v[n / 2])
}

#[test]
fn criterion_1_forward_inverse_identity() {
    let start = Instant::now();
    let zeta = CouplingConstant::new(REFERENCE_ZETA).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    let mut accepted = 0;
    let mut rejected = 0;
    while accepted < 3 {
        let sigma = rng.random_range(0.2..0.4);
        let cfg = SlitConfig {
            slit_separation_mm: rng.random_range(3.0..6.0),
            slit_sigma_mm: sigma,
            amplitude_ratio: rng.random_range(0.5..2.0),
            relative_phase_rad: rng.random_range(0.0..std::f64::consts::TAU),
            ..SlitConfig::default()
        };
        let z = rng.random_range(1.0..6.0);
        let field = propagate_analytic(&cfg, Grid::symmetric(20.0, 4096).unwrap(), z).unwrap();
        let density = intensity(&field).unwrap();
        let truth = phase_gradient_slope(&field);
        let geometry = SensorGeometry::new(26.0, 1.0, 1400).unwrap();
        // fields whose phase swings past the arcsin branch have no valid image
        let Ok(img) = project_to_pixels(&density, &truth, &geometry, zeta) else {
            rejected += 1;
            continue;
        };
        accepted += 1;
        let r = normalize_magnified(&img, Channel::Right).unwrap();
        let l = normalize_magnified(&img, Channel::Left).unwrap();
        let kxk = infer_kx_over_k(&r, &l, zeta, MomentumMode::Corrected).unwrap();
        let reference = truth.interpolator().unwrap();
        for i in 0..kxk.len() {
            if kxk.valid[i] {
                worst = worst.max((kxk.values[i] - reference.eval(kxk.xs[i])).abs());
                checked += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-12 && checked > 0 && elapsed < Duration::from_secs(1);
    report(
        1,
        pass,
        elapsed,
        &format!("max |k_x/k error| = {worst:e} over {checked} unmasked pixels, 3 random fields ({rejected} inadmissible draws skipped) (limit 1e-12, 1 s)"),
    );
    assert!(pass);
}

/// Largest disagreement between two ensembles, as a fraction of the local
/// spacing of `reference`.
fn worst_relative_gap(a: &TrajectoryEnsemble, b: &TrajectoryEnsemble, reference: &TrajectoryEnsemble) -> f64 {
    let n = reference.n_trajectories();
    let mut worst = 0.0f64;
    for j in 0..reference.n_planes() {
        let col: Vec<f64> = reference.column(j).into_iter().map(|x| x.unwrap()).collect();
        for i in 0..n {
            let left = if i > 0 { col[i] - col[i - 1] } else { f64::INFINITY };
            let right = if i + 1 < n { col[i + 1] - col[i] } else { f64::INFINITY };
            let spacing = left.min(right);
            let gap = (a.rows[i][j].unwrap() - b.rows[i][j].unwrap()).abs();
            worst = worst.max(gap / spacing);
        }
    }
    worst
}

#[test]
fn criterion_2_method_triangle() {
    let start = Instant::now();
    let cfg = SlitConfig::single_slit(0.3, 943.0);
    let grid = Grid::symmetric(4.0, 2048).unwrap();
    let z: Vec<f64> = (0..51).map(|j| 0.02 * j as f64).collect();
    let fields: Vec<_> = z.iter().map(|&z| propagate_analytic(&cfg, grid, z).unwrap()).collect();
    let densities: Vec<DensityCurve> = fields.iter().map(|f| intensity(f).unwrap()).collect();
    let cvt = cvt_trajectories(&densities, 51).unwrap();
    // the other two constructions start where the tessellation starts
    let first: Vec<f64> = cvt.column(0).into_iter().map(|x| x.unwrap()).collect();
    let seeds = QuantileSeeds::at_positions(&densities[0], first).unwrap();
    let cdf = cdf_transport_trajectories(&densities, &seeds).unwrap();
    let phase = phase_trajectories(&fields, &seeds).unwrap();
    let pc = worst_relative_gap(&phase, &cdf, &cdf);
    let cv = worst_relative_gap(&cvt, &cdf, &cdf);
    let pv = worst_relative_gap(&phase, &cvt, &cdf);
    let elapsed = start.elapsed();
    let worst = pc.max(cv).max(pv);
    let pass = worst < 0.02 && elapsed < Duration::from_secs(30);
    report(
        2,
        pass,
        elapsed,
        &format!(
            "worst gap / local spacing: phase-cdf {pc:.2e}, cvt-cdf {cv:.2e}, phase-cvt {pv:.2e} (limit 0.02, 30 s); \
             51 trajectories, 51 planes over 1 m, Lloyd iterations max {}",
            cvt.diagnostics.lloyd_iterations.iter().max().unwrap()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_3_noiseless_end_to_end() {
    let start = Instant::now();
    let mut cfg = RunConfig::standard();
    cfg.sensor.noiseless = true;
    cfg.sensor.noise.photon_budget = 1e8;
    let data = synthesize(&cfg).unwrap();
    let rec = reconstruct_from_frames(
        &data.frames,
        cfg.sensor.noise.background_level,
        cfg.coupling().unwrap(),
        &PipelineMode::corrected(),
        cfg.n_trajectories,
    )
    .unwrap();
    let r = ensemble_mean_r(&rec.photons, &data.ground_truth).unwrap();
    let c = congregation_score(&rec.photons.final_positions(), data.final_density()).unwrap();
    let elapsed = start.elapsed();
    let pass = r.r_avg > 0.999 && c < 0.02 && elapsed < Duration::from_secs(60);
    report(
        3,
        pass,
        elapsed,
        &format!(
            "corrected+kde noiseless: r_avg = {:.5} (> 0.999), congregation = {c:.4} (< 0.02), \
             {} trajectories x {} planes, {} pairs skipped",
            r.r_avg,
            cfg.n_trajectories,
            cfg.z_schedule.len(),
            r.counts.pairs_skipped
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_4_mode_ordering() {
    let start = Instant::now();
    let mut cfg = RunConfig::standard();
    let truth = plane_truths(&cfg).unwrap();
    let densities: Vec<DensityCurve> = truth.iter().map(|t| t.density.clone()).collect();
    let gt = ground_truth(&cfg, &densities).unwrap();
    let last = &densities[densities.len() - 1];
    let zeta = cfg.coupling().unwrap();
    let modes: [PipelineMode; 3] = [
        PipelineMode::corrected(),
        "custom:smoothing=spline".parse().unwrap(),
        PipelineMode::legacy(),
    ];
    let mut r = vec![Vec::new(); 3];
    let mut c = vec![Vec::new(); 3];
    for seed in 0..20u64 {
        cfg.sensor.noise.rng_seed = seed;
        let frames = frames_from_truth(&cfg, &truth);
        for (k, mode) in modes.iter().enumerate() {
            let rec = reconstruct_from_frames(&frames, cfg.sensor.noise.background_level, zeta, mode, cfg.n_trajectories)
                .unwrap();
            r[k].push(ensemble_mean_r(&rec.photons, &gt).unwrap().r_avg);
            c[k].push(congregation_score(&rec.photons.final_positions(), last).unwrap());
        }
    }
    let kde_wins = (0..20).filter(|&s| r[0][s] > r[1][s]).count();
    let (mr, mc): (Vec<f64>, Vec<f64>) = (0..3).map(|k| (median(r[k].clone()), median(c[k].clone()))).unzip();
    let elapsed = start.elapsed();
    let r_order = mr[0] > mr[1] && mr[1] > mr[2];
    let c_order = mc[0] < mc[1] && mc[1] < mc[2];
    let pass = r_order && c_order && kde_wins >= 16 && elapsed < Duration::from_secs(600);
    report(
        4,
        pass,
        elapsed,
        &format!(
            "median r_avg kde/spline/legacy = {:.5}/{:.5}/{:.5}, median congregation = {:.4}/{:.4}/{:.4}, \
             kde beats spline in {kde_wins}/20 seeds (need >= 16)",
            mr[0], mr[1], mr[2], mc[0], mc[1], mc[2]
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_5_magnified_normalization() {
    let start = Instant::now();
    let cfg = SlitConfig::default();
    let z = 5.0;
    let field = propagate_analytic(&cfg, Grid::symmetric(20.0, 4096).unwrap(), z).unwrap();
    let density = intensity(&field).unwrap();
    let kxk = phase_gradient_slope(&field);
    let zeta = CouplingConstant::default();
    let noise = NoiseConfig {
        photon_budget: 1e8,
        background_level: 5.0,
        rng_seed: 11,
    };
    let mut lines = Vec::new();
    let mut pass = true;
    for (k, &mag) in [0.5, 1.0, 2.0, 4.0].iter().enumerate() {
        let pixel_mm: f64 = 0.026 * mag;
        let n_pixels = (32.0 / pixel_mm).ceil() as usize;
        let geometry = SensorGeometry::new(26.0, mag, n_pixels).unwrap();
        let ideal = project_to_pixels(&density, &kxk, &geometry, zeta).unwrap();
        let frame = add_noise(&ideal, &NoiseConfig { rng_seed: noise.rng_seed + k as u64, ..noise });
        let frame = subtract_background(&frame, noise.background_level).unwrap();
        let good = normalize_magnified(&frame, Channel::Sum).unwrap();
        let bad = normalize_legacy(&frame, Channel::Sum).unwrap();
        let xs = good.xs();
        let l1 = |d: &DensityCurve| {
            let diff: Vec<f64> = xs
                .iter()
                .zip(&d.values)
                .map(|(&x, v)| (v - density.value_at(x)).abs())
                .collect();
            trapezoid(&diff, pixel_mm)
        };
        let (l1_good, l1_bad) = (l1(&good), l1(&bad));
        // legacy values are per pixel, so they undershoot by the pixel width
        let scale = trapezoid(&good.values, pixel_mm) / trapezoid(&bad.values, pixel_mm);
        let scale_ok = (scale * pixel_mm - 1.0).abs() < 1e-3;
        pass &= l1_good < 0.02 && l1_bad >= 0.02 && scale_ok;
        lines.push(format!(
            "m={mag}: L1 magnified {l1_good:.4}, legacy {l1_bad:.3}, legacy deficit factor {:.4} mm (pixel {pixel_mm} mm)",
            1.0 / scale
        ));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(30);
    report(5, pass, elapsed, &lines.join("; "));
    assert!(pass);
}

#[test]
fn criterion_6_exact_arithmetic() {
    let start = Instant::now();
    // 100 points with sample standard deviation exactly 1
    let raw: Vec<f64> = (0..100).map(|i| i as f64).collect();
    let mean = raw.iter().sum::<f64>() / 100.0;
    let sd = (raw.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 99.0).sqrt();
    let xs: Vec<f64> = raw.iter().map(|x| (x - mean) / sd).collect();
    let samples = WeightedSamples::unweighted(xs).unwrap();
    let h = silverman_bandwidth(&samples).unwrap().value();
    let oracle = 1.06 * 10f64.powf(-0.4);
    let stated = 0.42198;
    let h_ok = (h - oracle).abs() <= 1e-5;

    let slope = slope_of(0.6, UpdateMode::Corrected).unwrap();
    let slope_ok = slope == 0.75;

    let grid = Grid::new(-1.0, 1.0, 21).unwrap();
    let r = DensityCurve::from_fn(0.0, grid, |_| 1.0).unwrap();
    let mut l = r.clone();
    l.values = vec![0.0; 21];
    l.mass = 0.0;
    let kxk = infer_kx_over_k(&r, &l, CouplingConstant::default(), MomentumMode::Corrected).unwrap();
    let dark = kxk.values[10];
    let dark_ok = (dark - 4.206e-3).abs() <= 1e-6 && (dark - FRAC_PI_2 / REFERENCE_ZETA).abs() < 1e-15;

    let elapsed = start.elapsed();
    let pass = h_ok && slope_ok && dark_ok;
    report(
        6,
        pass,
        elapsed,
        &format!(
            "silverman(sd=1, n=100) = {h:.7} vs formula 1.06*100^-0.2 = {oracle:.7} (the stated {stated} is {:.2e} off \
             the formula itself); slope(0.6) = {slope:?}; dark channel k_x/k = {dark:.6e}",
            (oracle - stated).abs()
        ),
    );
    assert!(pass);
}

fn mixture(z_m: f64, grid: Grid, params: &[(f64, f64, f64)]) -> DensityCurve {
    DensityCurve::from_fn(z_m, grid, |x| {
        params
            .iter()
            .map(|&(w, mu, s)| w * (-(x - mu) * (x - mu) / (2.0 * s * s)).exp())
            .sum()
    })
    .unwrap()
}

fn slit_strategy() -> impl Strategy<Value = SlitConfig> {
    (3.0f64..6.0, 0.2f64..0.4, 0.5f64..2.0, 0.0f64..6.28).prop_map(|(sep, sigma, ratio, phase)| SlitConfig {
        slit_separation_mm: sep,
        slit_sigma_mm: sigma,
        amplitude_ratio: ratio,
        relative_phase_rad: phase,
        ..SlitConfig::default()
    })
}

#[test]
fn criterion_7_invariant_suites() {
    let start = Instant::now();
    let mut outcomes: Vec<(&str, Result<(), String>)> = Vec::new();
    let runner = || TestRunner::new(PropConfig {
        cases: 24,
        failure_persistence: None,
        ..PropConfig::default()
    });

    let comp = (0.2f64..1.0, -3.0f64..3.0, 0.3f64..1.5);
    let non_crossing = runner().run(
        &(prop::collection::vec(prop::collection::vec(comp, 1..4), 3..6), 2usize..60, slit_strategy()),
        |(planes, n, slit)| {
            let grid = Grid::symmetric(10.0, 801).unwrap();
            let dens: Vec<DensityCurve> = planes
                .iter()
                .enumerate()
                .map(|(j, p)| mixture(j as f64, grid, p))
                .collect();
            let seeds = seed_quantiles(&dens[0], n).unwrap();
            prop_assert!(cdf_transport_trajectories(&dens, &seeds).unwrap().is_non_crossing());
            let wide = Grid::symmetric(20.0, 2048).unwrap();
            let fields: Vec<_> = (0..6)
                .map(|j| propagate_analytic(&slit, wide, 1.0 + 0.02 * j as f64).unwrap())
                .collect();
            let seeds = seed_quantiles(&intensity(&fields[0]).unwrap(), 20).unwrap();
            prop_assert!(phase_trajectories(&fields, &seeds).unwrap().is_non_crossing());
            Ok(())
        },
    );
    outcomes.push(("non-crossing", non_crossing.map_err(|e| e.to_string())));

    let conservation = runner().run(&(slit_strategy(), 0.5f64..3.0), |(slit, z0)| {
        let grid = Grid::symmetric(20.0, 4096).unwrap();
        let z: Vec<f64> = (0..11).map(|j| z0 + 0.02 * j as f64).collect();
        let fields: Vec<_> = z.iter().map(|&z| propagate_analytic(&slit, grid, z).unwrap()).collect();
        let dens: Vec<DensityCurve> = fields.iter().map(|f| intensity(f).unwrap()).collect();
        let seeds = seed_quantiles(&dens[0], 16).unwrap();
        let ens = phase_trajectories(&fields, &seeds).unwrap();
        for (j, d) in dens.iter().enumerate() {
            for i in 0..15 {
                let (a, b) = (ens.rows[i][j].unwrap(), ens.rows[i + 1][j].unwrap());
                let between = d.cdf_at(b) - d.cdf_at(a);
                let expected = seeds.quantiles[i + 1] - seeds.quantiles[i];
                prop_assert!((between - expected).abs() < 1e-3, "plane {j} gap {i}: {between} vs {expected}");
            }
        }
        Ok(())
    });
    outcomes.push(("probability conservation", conservation.map_err(|e| e.to_string())));

    let kde = runner().run(
        &(prop::collection::vec(0.0f64..1000.0, 20..200), 0.01f64..0.5),
        |(weights, h)| {
            let n = weights.len();
            let xs: Vec<f64> = (0..n).map(|i| -2.0 + 4.0 * i as f64 / (n - 1) as f64).collect();
            prop_assume!(weights.iter().sum::<f64>() > 0.0);
            let s = WeightedSamples::new(xs, weights, WeightKind::Frequency).unwrap();
            let curve = kde_estimate(&s, Bandwidth::new(h).unwrap(), Grid::symmetric(5.0, 2001).unwrap()).unwrap();
            prop_assert!((curve.integral() - 1.0).abs() < 1e-9);
            prop_assert!(curve.values.iter().all(|v| *v >= 0.0));
            Ok(())
        },
    );
    outcomes.push(("kde unit integral", kde.map_err(|e| e.to_string())));

    let propagator = runner().run(&(slit_strategy(), 0.1f64..4.0), |(slit, z)| {
        let sigma_z = slit.width_at(z);
        let half = 5.0 * (slit.half_separation() + 3.0 * sigma_z);
        let grid = Grid::symmetric(half, 4096).unwrap();
        let start = make_two_slit_field(&slit, grid).unwrap();
        let spectral = intensity(&propagate_spectral(&start, z).unwrap()).unwrap();
        let analytic = intensity(&propagate_analytic(&slit, grid, z).unwrap()).unwrap();
        let worst = spectral
            .values
            .iter()
            .zip(&analytic.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        prop_assert!(worst < 1e-6, "L-inf density difference {worst:e}");
        Ok(())
    });
    outcomes.push(("propagator agreement", propagator.map_err(|e| e.to_string())));

    let determinism = runner().run(&(any::<u64>(), 5usize..20), |(seed, n)| {
        let mut cfg = RunConfig::standard();
        cfg.z_schedule = vec![2.0, 2.5, 3.0, 3.5];
        cfg.n_trajectories = n;
        cfg.sensor.noise.rng_seed = seed;
        let a = synthesize(&cfg).unwrap();
        let b = synthesize(&cfg).unwrap();
        prop_assert_eq!(&a.frames, &b.frames);
        let zeta = cfg.coupling().unwrap();
        let mode = PipelineMode::corrected();
        let ra = reconstruct_from_frames(&a.frames, 5.0, zeta, &mode, n).unwrap();
        let rb = reconstruct_from_frames(&b.frames, 5.0, zeta, &mode, n).unwrap();
        prop_assert_eq!(&ra.photons, &rb.photons);
        prop_assert_eq!(&ra.data_bohm, &rb.data_bohm);
        Ok(())
    });
    outcomes.push(("determinism", determinism.map_err(|e| e.to_string())));

    let elapsed = start.elapsed();
    let pass = outcomes.iter().all(|(_, r)| r.is_ok()) && elapsed < Duration::from_secs(300);
    let detail: Vec<String> = outcomes
        .iter()
        .map(|(name, r)| match r {
            Ok(()) => format!("{name} ok"),
            Err(e) => format!("{name} FAILED ({e})"),
        })
        .collect();
    report(7, pass, elapsed, &format!("{} (24 cases each)", detail.join(", ")));
    assert!(pass);
}
