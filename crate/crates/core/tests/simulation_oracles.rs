//! Monte Carlo checks of the field and point-process simulators against
//! moments known in closed form.

use markshift::geometry::Window;
use markshift::procgen::{
    generate_model, simulate_cox, simulate_poisson, ModelId, ModelSpec,
};
use markshift::randfield::{
    simulate_grf, simulate_grf_pair, transform_fields, CorrelationModel, CovariateField, FieldSpec, FieldTransform,
    GridGeometry,
};
use markshift::stats::{stat_kendall, stat_mean_at_points};

fn unit_grid(n: usize) -> GridGeometry {
    GridGeometry::covering(&Window::unit_square().bounding_box(), n).unwrap()
}

fn base_spec() -> FieldSpec {
    FieldSpec::standard(CorrelationModel::exponential(0.2).unwrap())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn field_variance_at_fixed_cell() {
    let g = unit_grid(128);
    let w = Window::unit_square();
    let idx = 64 * 128 + 64;
    let v: Vec<f64> = (0..2000u64).map(|s| simulate_grf(&base_spec(), &g, &w, 10_000 + s).unwrap().values()[idx]).collect();
    // known mean zero
    let var = v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
    assert!((0.94..=1.06).contains(&var), "variance {var}");
}

#[test]
fn field_correlation_at_lag_scale() {
    // 100 x 100 cells of width 0.01: cells 20 apart are at lag 0.2
    let g = unit_grid(100);
    let w = Window::unit_square();
    let (i, j) = (50 * 100 + 30, 50 * 100 + 50);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for s in 0..2000u64 {
        let f = simulate_grf(&base_spec(), &g, &w, 20_000 + s).unwrap();
        a.push(f.values()[i]);
        b.push(f.values()[j]);
    }
    let (ma, mb) = (mean(&a), mean(&b));
    let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    let r = cov / (va * vb).sqrt();
    assert!((r - (-1.0f64).exp()).abs() <= 0.05, "lag-0.2 correlation {r}");
}

#[test]
fn field_grid_mean_is_centred() {
    let g = unit_grid(128);
    let w = Window::unit_square();
    let mut means = Vec::new();
    for s in 0..2000u64 {
        let (a, b) = simulate_grf_pair(&base_spec(), &g, &w, 30_000 + s).unwrap();
        means.push(mean(a.values()));
        means.push(mean(b.values()));
    }
    let m = mean(&means);
    assert!(m.abs() <= 0.02, "mean {m}");
}

#[test]
fn pair_halves_are_uncorrelated() {
    let g = unit_grid(64);
    let w = Window::unit_square();
    let idx = 32 * 64 + 32;
    let mut prod = 0.0;
    for s in 0..2000u64 {
        let (a, b) = simulate_grf_pair(&base_spec(), &g, &w, 40_000 + s).unwrap();
        prod += a.values()[idx] * b.values()[idx];
    }
    // sd of the mean product is 1 / sqrt(2000) ~ 0.022
    assert!((prod / 2000.0).abs() < 0.08);
}

#[test]
fn scaled_sum_keeps_unit_variance() {
    let g = unit_grid(128);
    let w = Window::unit_square();
    let a = std::f64::consts::FRAC_1_SQRT_2;
    let cells = [(10, 10), (10, 117), (117, 10), (117, 117), (64, 64)];
    let mut sq = 0.0;
    let mut n = 0.0;
    for s in 0..2000u64 {
        let (z1, z2) = simulate_grf_pair(&base_spec(), &g, &w, 50_000 + s).unwrap();
        let sum = transform_fields(&[&z1, &z2], &FieldTransform::linear(&[a, a])).unwrap();
        for &(r, c) in &cells {
            sq += sum.get(r, c).powi(2);
            n += 1.0;
        }
    }
    let var = sq / n;
    assert!((var - 1.0).abs() <= 0.06, "variance {var}");
}

#[test]
fn simulation_is_identical_across_thread_counts() {
    let g = unit_grid(128);
    let w = Window::unit_square();
    let run = |threads: usize| -> Vec<Vec<f64>> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            use rayon::prelude::*;
            (0..8u64)
                .into_par_iter()
                .map(|s| simulate_grf(&base_spec(), &g, &w, s).unwrap().values().to_vec())
                .collect()
        })
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn poisson_counts() {
    let unit = Window::unit_square();
    let m = (0..2000u64).map(|s| simulate_poisson(100.0, &unit, 60_000 + s).unwrap().len() as f64).sum::<f64>() / 2000.0;
    assert!((98.6..=101.4).contains(&m), "mean count {m}");
    let big = Window::square(2.0).unwrap();
    let m = (0..2000u64).map(|s| simulate_poisson(100.0, &big, 70_000 + s).unwrap().len() as f64).sum::<f64>() / 2000.0;
    assert!((m - 400.0).abs() <= 0.015 * 400.0, "mean count {m}");
}

#[test]
fn poisson_locations_are_uniform() {
    // quadrant counts on the unit square pooled over seeds
    let mut q = [0usize; 4];
    for s in 0..500u64 {
        for p in simulate_poisson(100.0, &Window::unit_square(), 80_000 + s).unwrap().points() {
            q[(p.x >= 0.5) as usize + 2 * (p.y >= 0.5) as usize] += 1;
        }
    }
    let total: usize = q.iter().sum();
    let expected = total as f64 / 4.0;
    let chi2: f64 = q.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 0.999 quantile of chi-square with 3 degrees of freedom
    assert!(chi2 < 16.27, "chi2 {chi2}");
}

#[test]
fn cox_with_constant_intensity() {
    let g = unit_grid(128);
    let f = CovariateField::constant(g, 50f64.ln(), Window::unit_square()).unwrap();
    let m = (0..2000u64)
        .map(|s| simulate_cox(&f, &Window::unit_square(), 90_000 + s).unwrap().len() as f64)
        .sum::<f64>()
        / 2000.0;
    assert!((m - 50.0).abs() <= 0.03 * 50.0, "mean count {m}");
}

fn mean_count(id: ModelId, alpha: f64, n: u64, base: u64) -> f64 {
    (0..n)
        .map(|s| generate_model(&ModelSpec::new(id, alpha, base + s).unwrap()).unwrap().pattern.len() as f64)
        .sum::<f64>()
        / n as f64
}

#[test]
fn m1_mean_count_matches_lognormal_mean() {
    let target = (4.5f64 + 0.5).exp();
    let m = mean_count(ModelId::M1, 0.0, 2000, 100_000);
    assert!((m / target - 1.0).abs() <= 0.02, "mean count {m} vs {target}");
}

#[test]
fn m10_intensity_is_standardized() {
    let target = 5f64.exp();
    let m = mean_count(ModelId::M10, 1.0, 2000, 110_000);
    assert!((m / target - 1.0).abs() <= 0.025, "mean count {m} vs {target}");
}

#[test]
fn m1_marks_independent_of_covariate() {
    let mut total = 0.0;
    for s in 0..500u64 {
        let scene = generate_model(&ModelSpec::new(ModelId::M1, 0.0, 120_000 + s).unwrap()).unwrap();
        let z: Vec<f64> = scene.pattern.points().iter().map(|p| scene.covariate.eval(*p).unwrap()).collect();
        total += stat_kendall(scene.pattern.numeric_marks().unwrap(), &z).unwrap();
    }
    let avg = total / 500.0;
    assert!(avg.abs() <= 0.03, "average tau {avg}");
}

#[test]
fn m9_without_preference_leaves_covariate_centred() {
    let mut total = 0.0;
    for s in 0..500u64 {
        let scene = generate_model(&ModelSpec::new(ModelId::M9, 0.0, 130_000 + s).unwrap()).unwrap();
        total += stat_mean_at_points(&scene.pattern, &scene.covariate).unwrap();
    }
    let avg = total / 500.0;
    assert!(avg.abs() <= 0.03, "average covariate at points {avg}");
}

#[test]
fn mark_variance_matches_marginal() {
    // models whose marks are independent of the points, so marks at points
    // keep the marginal law of the mark field
    for (id, alpha, mu, var) in [
        (ModelId::M1, 0.0, 0.0, 1.0),
        (ModelId::M2, 0.0, 0.0, 1.0),
        (ModelId::M7, 0.0, 0.0, 1.0),
        (ModelId::M10, 1.0, 1.0, 2.0),
    ] {
        let (mut sq, mut n) = (0.0, 0.0);
        for s in 0..300u64 {
            let scene = generate_model(&ModelSpec::new(id, alpha, 140_000 + s).unwrap()).unwrap();
            for m in scene.pattern.numeric_marks().unwrap() {
                sq += (m - mu) * (m - mu);
                n += 1.0;
            }
        }
        let v = sq / n;
        assert!((v / var - 1.0).abs() <= 0.10, "{id}: mark variance {v}, expected {var}");
    }
}

#[test]
fn preferential_models_shift_covariate_at_points() {
    // M3 intensity loads on the covariate field with weight 1/sqrt(2); the
    // covariate at points is then shifted by about 1/sqrt(2)
    let mut total = 0.0;
    for s in 0..100u64 {
        let scene = generate_model(&ModelSpec::new(ModelId::M3, 0.0, 150_000 + s).unwrap()).unwrap();
        total += stat_mean_at_points(&scene.pattern, &scene.covariate).unwrap();
    }
    let avg = total / 100.0;
    assert!(avg > 0.4, "average covariate at points {avg}");
}
