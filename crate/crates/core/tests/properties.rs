use proptest::prelude::*;

use weaktraj::bohm::{cdf_transport_trajectories, seed_quantiles, QuantileSeeds};
use weaktraj::density::DensityCurve;
use weaktraj::grid::Grid;
use weaktraj::metrics::{congregation_score, pearson_r};
use weaktraj::sensor::{project_to_pixels, Channel, SensorGeometry};
use weaktraj::smoothing::{kde_estimate, silverman_bandwidth, Bandwidth, WeightKind, WeightedSamples};
use weaktraj::wavefield::{intensity, make_two_slit_field, phase_gradient_slope, propagate_analytic, SlitConfig};
use weaktraj::weak_momentum::{infer_kx_over_k, slope_of, CouplingConstant, MomentumMode, UpdateMode};

fn mixture(z_m: f64, grid: Grid, params: &[(f64, f64, f64)]) -> DensityCurve {
    DensityCurve::from_fn(z_m, grid, |x| {
        params
            .iter()
            .map(|&(w, mu, s)| w * (-(x - mu) * (x - mu) / (2.0 * s * s)).exp())
            .sum()
    })
    .unwrap()
}

fn components() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((0.2f64..1.0, -3.0f64..3.0, 0.3f64..1.5), 1..4)
}

fn slit() -> impl Strategy<Value = SlitConfig> {
    (3.0f64..6.0, 0.2f64..0.4, 0.5f64..2.0, 0.0f64..6.28).prop_map(|(sep, sigma, ratio, phase)| SlitConfig {
        slit_separation_mm: sep,
        slit_sigma_mm: sigma,
        amplitude_ratio: ratio,
        relative_phase_rad: phase,
        ..SlitConfig::default()
    })
}

fn row() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 5..30)
}

fn wrap(v: &[f64]) -> Vec<Option<f64>> {
    v.iter().copied().map(Some).collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn seeds_sit_on_their_quantiles(c in components(), n in 1usize..100) {
        let d = mixture(0.0, Grid::symmetric(10.0, 1001).unwrap(), &c);
        let s = seed_quantiles(&d, n).unwrap();
        prop_assert!(s.positions.windows(2).all(|w| w[0] < w[1]));
        for (q, x) in s.quantiles.iter().zip(&s.positions) {
            prop_assert!((d.cdf_at(*x) - q).abs() < 1e-9);
        }
    }

    #[test]
    fn transport_never_crosses(planes in prop::collection::vec(components(), 2..6), n in 2usize..80) {
        let grid = Grid::symmetric(10.0, 801).unwrap();
        let dens: Vec<DensityCurve> = planes.iter().enumerate().map(|(j, p)| mixture(j as f64, grid, p)).collect();
        let ens = cdf_transport_trajectories(&dens, &seed_quantiles(&dens[0], n).unwrap()).unwrap();
        prop_assert!(ens.is_non_crossing());
    }

    #[test]
    fn transport_commutes_with_mirroring(planes in prop::collection::vec(components(), 2..4), n in 2usize..30) {
        let grid = Grid::symmetric(10.0, 801).unwrap();
        let dens: Vec<DensityCurve> = planes.iter().enumerate().map(|(j, p)| mixture(j as f64, grid, p)).collect();
        let mirrored: Vec<DensityCurve> = planes
            .iter()
            .enumerate()
            .map(|(j, p)| {
                let flipped: Vec<_> = p.iter().map(|&(w, mu, s)| (w, -mu, s)).collect();
                mixture(j as f64, grid, &flipped)
            })
            .collect();
        let a = cdf_transport_trajectories(&dens, &seed_quantiles(&dens[0], n).unwrap()).unwrap();
        let b = cdf_transport_trajectories(&mirrored, &seed_quantiles(&mirrored[0], n).unwrap()).unwrap();
        for i in 0..n {
            for j in 0..a.n_planes() {
                let (x, y) = (a.rows[i][j].unwrap(), b.rows[n - 1 - i][j].unwrap());
                prop_assert!((x + y).abs() < 1e-6, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn transport_follows_the_seed_it_was_given(c in components(), c2 in components(), qs in prop::collection::vec(0.01f64..0.99, 1..20)) {
        let grid = Grid::symmetric(10.0, 801).unwrap();
        let dens = vec![mixture(0.0, grid, &c), mixture(1.0, grid, &c2)];
        let mut qs = qs;
        qs.sort_by(f64::total_cmp);
        qs.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
        let positions = dens[0].quantiles(&qs);
        prop_assume!(positions.windows(2).all(|w| w[0] < w[1]));
        let all = cdf_transport_trajectories(&dens, &QuantileSeeds::new(qs.clone(), positions.clone()).unwrap()).unwrap();
        // each trajectory depends only on its own quantile
        for k in 0..qs.len() {
            let one = QuantileSeeds::new(vec![qs[k]], vec![positions[k]]).unwrap();
            let single = cdf_transport_trajectories(&dens, &one).unwrap();
            prop_assert_eq!(&single.rows[0], &all.rows[k]);
        }
    }

    #[test]
    fn kde_is_a_density(weights in prop::collection::vec(0.0f64..1000.0, 20..200), h in 0.01f64..0.5) {
        prop_assume!(weights.iter().sum::<f64>() > 0.0);
        let n = weights.len();
        let xs: Vec<f64> = (0..n).map(|i| -2.0 + 4.0 * i as f64 / (n - 1) as f64).collect();
        let s = WeightedSamples::new(xs, weights, WeightKind::Frequency).unwrap();
        let curve = kde_estimate(&s, Bandwidth::new(h).unwrap(), Grid::symmetric(5.0, 2001).unwrap()).unwrap();
        prop_assert!((curve.integral() - 1.0).abs() < 1e-9);
        prop_assert!(curve.values.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn kde_is_linear_in_weights(w1 in prop::collection::vec(0.1f64..10.0, 30), w2 in prop::collection::vec(0.1f64..10.0, 30), h in 0.05f64..0.5) {
        let xs: Vec<f64> = (0..30).map(|i| -1.5 + 0.1 * i as f64).collect();
        let grid = Grid::symmetric(4.0, 801).unwrap();
        let bw = Bandwidth::new(h).unwrap();
        let est = |w: Vec<f64>| kde_estimate(&WeightedSamples::new(xs.clone(), w, WeightKind::Frequency).unwrap(), bw, grid).unwrap();
        let (a, b) = (est(w1.clone()), est(w2.clone()));
        // count densities add exactly; the normalized curves mix by mass
        let sum = est(w1.iter().zip(&w2).map(|(x, y)| x + y).collect());
        for i in 0..grid.len() {
            let counts = a.mass * a.values[i] + b.mass * b.values[i];
            prop_assert!((sum.mass * sum.values[i] - counts).abs() < 1e-12 * (1.0 + counts));
            let mix = counts / (a.mass + b.mass);
            prop_assert!((sum.values[i] - mix).abs() < 1e-12 * (1.0 + mix));
        }
        // scaling every weight leaves the estimate unchanged
        let scaled = est(w1.iter().map(|w| 7.0 * w).collect());
        for (x, y) in scaled.values.iter().zip(&a.values) {
            prop_assert!((x - y).abs() < 1e-12 * (1.0 + y));
        }
    }

    #[test]
    fn silverman_scales_with_positions(xs in prop::collection::vec(-5.0f64..5.0, 3..50), c in 0.1f64..10.0) {
        let mut xs = xs;
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        prop_assume!(xs.len() >= 3);
        let h = silverman_bandwidth(&WeightedSamples::unweighted(xs.clone()).unwrap()).unwrap().value();
        let scaled = xs.iter().map(|x| c * x).collect();
        let hc = silverman_bandwidth(&WeightedSamples::unweighted(scaled).unwrap()).unwrap().value();
        prop_assert!((hc - c * h).abs() < 1e-12 * c * h);
    }

    #[test]
    fn pearson_is_symmetric_and_affine_invariant(a in row(), seed in row(), alpha in 0.1f64..10.0, beta in -5.0f64..5.0) {
        let n = a.len().min(seed.len());
        let (a, b) = (&a[..n], &seed[..n]);
        let (ra, rb) = (wrap(a), wrap(b));
        let Ok(r) = pearson_r(&ra, &rb) else { return Ok(()); };
        prop_assert!((r - pearson_r(&rb, &ra).unwrap()).abs() < 1e-12);
        let up: Vec<f64> = a.iter().map(|x| alpha * x + beta).collect();
        prop_assert!((pearson_r(&wrap(&up), &rb).unwrap() - r).abs() < 1e-9);
        let down: Vec<f64> = a.iter().map(|x| -alpha * x + beta).collect();
        prop_assert!((pearson_r(&wrap(&down), &rb).unwrap() + r).abs() < 1e-9);
        prop_assert!((-1.0..=1.0).contains(&r));
    }

    #[test]
    fn congregation_ignores_a_common_shift(c in components(), xs in prop::collection::vec(-4.0f64..4.0, 10..80), shift in -3.0f64..3.0) {
        let d = mixture(0.0, Grid::symmetric(10.0, 2001).unwrap(), &c);
        let s = congregation_score(&xs, &d).unwrap();
        prop_assert!((0.0..=1.0).contains(&s));
        let moved = mixture(0.0, Grid::new(-10.0 + shift, 10.0 + shift, 2001).unwrap(), &c.iter().map(|&(w, mu, s)| (w, mu + shift, s)).collect::<Vec<_>>());
        let xs_moved: Vec<f64> = xs.iter().map(|x| x + shift).collect();
        prop_assert!((congregation_score(&xs_moved, &moved).unwrap() - s).abs() < 1e-6);
    }

    #[test]
    fn slope_grows_with_momentum(a in -0.99f64..0.99, b in -0.99f64..0.99) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(slope_of(lo, UpdateMode::Corrected).unwrap() <= slope_of(hi, UpdateMode::Corrected).unwrap());
        prop_assert!(slope_of(a, UpdateMode::Corrected).unwrap().abs() >= a.abs());
    }

    #[test]
    fn inferred_momentum_grows_with_right_channel(left in 0.1f64..10.0, r1 in 0.0f64..10.0, r2 in 0.0f64..10.0) {
        let grid = Grid::new(-1.0, 1.0, 5).unwrap();
        let curve = |v: f64| {
            let mut d = DensityCurve::from_fn(0.0, grid, |_| 1.0).unwrap();
            d.mass = v;
            d
        };
        let zeta = CouplingConstant::default();
        let v = |r: f64| infer_kx_over_k(&curve(r), &curve(left), zeta, MomentumMode::Corrected).unwrap().values[2];
        let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
        prop_assert!(v(lo) <= v(hi));
        prop_assert!(v(hi).abs() <= zeta.max_kxk() + 1e-15);
    }

    #[test]
    fn pixel_channels_carry_the_pixel_mass(cfg in slit(), z in 1.0f64..6.0) {
        let field = propagate_analytic(&cfg, Grid::symmetric(20.0, 4096).unwrap(), z).unwrap();
        let density = intensity(&field).unwrap();
        let kxk = phase_gradient_slope(&field);
        let zeta = CouplingConstant::default();
        let Ok(img) = project_to_pixels(&density, &kxk, &SensorGeometry::new(26.0, 1.0, 1400).unwrap(), zeta) else {
            return Ok(());
        };
        let interp = kxk.interpolator().unwrap();
        for i in 0..img.len() {
            let total = img.counts_r[i] + img.counts_l[i];
            if total > 1e-6 * img.total(Channel::Sum) {
                let asym = (img.counts_r[i] - img.counts_l[i]) / total;
                let expected = (zeta.value() * interp.eval(img.pixel_centers[i])).sin();
                prop_assert!((asym - expected).abs() < 1e-12);
            }
        }
        prop_assert!((img.total(Channel::Sum) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn source_field_is_normalized(cfg in slit()) {
        let f = make_two_slit_field(&cfg, Grid::symmetric(15.0, 2048).unwrap()).unwrap();
        prop_assert!((f.norm_sq() - 1.0).abs() < 1e-9);
    }
}
