use embedrank::density::{fit_conditional_kernel, fit_marginal_gm, gm_log_density, TrainConfig};
use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

fn halves(a: &Array2<f64>, train: usize) -> (Array2<f64>, Array2<f64>) {
    (a.slice(s![..train, ..]).to_owned(), a.slice(s![train.., ..]).to_owned())
}

/// −∫ f log f for the two-bump mixture, by Simpson's rule on [−12, 12].
fn bimodal_entropy() -> f64 {
    let f = |x: f64| {
        let n = |m: f64| (-(x - m) * (x - m) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        0.5 * n(-3.0) + 0.5 * n(3.0)
    };
    let (a, b, steps) = (-12.0, 12.0, 20_000);
    let h = (b - a) / steps as f64;
    let g = |x: f64| {
        let v = f(x);
        if v > 0.0 {
            -v * v.ln()
        } else {
            0.0
        }
    };
    let mut sum = g(a) + g(b);
    for i in 1..steps {
        sum += g(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

#[test]
fn standard_normal_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let z = normal(&mut rng, 11_000, 2);
    let (train, held) = halves(&z, 10_000);
    let cfg = TrainConfig {
        components: 4,
        ..TrainConfig::default()
    };
    let (_, report) = fit_marginal_gm(train.view(), held.view(), &cfg).unwrap();
    let truth = (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
    assert!(
        (report.final_heldout_cross_entropy - truth).abs() < 0.05,
        "{} vs {truth}",
        report.final_heldout_cross_entropy
    );
    assert!(report.train_curve.iter().all(|v| v.is_finite()));
}

#[test]
fn bimodal_entropy_by_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let z = Array2::from_shape_simple_fn((11_000, 1), || {
        let shift = if rng.random::<bool>() { 3.0 } else { -3.0 };
        shift + rng.sample::<f64, _>(StandardNormal)
    });
    let (train, held) = halves(&z, 10_000);
    let cfg = TrainConfig {
        components: 2,
        ..TrainConfig::default()
    };
    let (params, report) = fit_marginal_gm(train.view(), held.view(), &cfg).unwrap();
    let truth = bimodal_entropy();
    assert!(
        (report.final_heldout_cross_entropy - truth).abs() < 0.05,
        "{} vs {truth}",
        report.final_heldout_cross_entropy
    );
    let direct: f64 = held.rows().into_iter().map(|r| -gm_log_density(&params, r.as_slice().unwrap()).unwrap()).sum::<f64>()
        / held.nrows() as f64;
    assert!((direct - report.final_heldout_cross_entropy).abs() < 1e-9);
}

#[test]
fn additive_noise_conditional_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let u = normal(&mut rng, 5_500, 1);
    let z = &u + &normal(&mut rng, 5_500, 1).mapv(|e| 0.1 * e);
    let (u_tr, u_ho) = halves(&u, 5_000);
    let (z_tr, z_ho) = halves(&z, 5_000);
    let (_, report) = fit_conditional_kernel(u_tr.view(), z_tr.view(), u_ho.view(), z_ho.view(), &TrainConfig::default()).unwrap();
    let truth = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * 0.01).ln();
    assert!(
        (report.final_heldout_cross_entropy - truth).abs() < 0.1,
        "{} vs {truth}",
        report.final_heldout_cross_entropy
    );
}

#[test]
fn independent_conditional_matches_marginal() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let u = normal(&mut rng, 5_500, 2);
    let z = normal(&mut rng, 5_500, 2);
    let (u_tr, u_ho) = halves(&u, 5_000);
    let (z_tr, z_ho) = halves(&z, 5_000);
    let cfg = TrainConfig::default();
    let (_, marginal) = fit_marginal_gm(z_tr.view(), z_ho.view(), &cfg).unwrap();
    let (_, conditional) = fit_conditional_kernel(u_tr.view(), z_tr.view(), u_ho.view(), z_ho.view(), &cfg).unwrap();
    let gap = conditional.final_heldout_cross_entropy - marginal.final_heldout_cross_entropy;
    assert!(gap.abs() < 0.05, "gap {gap}");
}
