//! Acceptance suite. Prints one `PASS` or `FAIL` line per criterion.
//!
//! Exits non-zero on any failure only when `ACCEPTANCE_STRICT` is set, so a
//! known-red criterion does not stop the rest of a workspace test run.

use std::fs;
use std::path::Path;
use std::time::Instant;

use embedrank::channel::{self, compose, deficiency, mixing_pair, uniform_prior, DiscreteChannel, DiscreteTask};
use embedrank::data::{save_npy, split, standardize, EmbeddingMatrix};
use embedrank::density::{conditional_loss_and_grad, KernelNetwork, TrainConfig};
use embedrank::graph::louvain_dense;
use embedrank::infosuff::{all_scores, estimate_is, Aggregation};
use embedrank::pipeline::{run_matrix, RunConfig};
use embedrank::probe::{
    epochs_for_task_size, grid_lattice, knn_consistency, nearest_neighbors, train_probe, ProbeConfig, ProbeData,
    TaskKind,
};
use embedrank::rng;
use embedrank::stats::{fractional_ranks, kendall_counts, kendall_tau, spearman};
use ndarray::{s, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn normal(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((r, c), || StandardNormal.sample(rng))
}

fn emb(id: &str, values: Array2<f64>) -> EmbeddingMatrix {
    EmbeddingMatrix::new(id, "acceptance", values).unwrap()
}

// ---------------------------------------------------------------- estimator

fn gaussian_mi() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let n = 10_000;
    let mut ok = true;
    let mut parts = Vec::new();
    for rho in [0.3f64, 0.6, 0.9] {
        let x = normal(&mut rng, n, 1);
        let z = &x * rho + &normal(&mut rng, n, 1).mapv(|e| e * (1.0 - rho * rho).sqrt());
        let truth = -0.5 * (1.0 - rho * rho).ln();
        let sp = split(n, 0.1, 7).unwrap();
        let t = Instant::now();
        let r = estimate_is(&emb("x", x), &emb("z", z), &TrainConfig::default(), &sp).unwrap();
        let secs = t.elapsed().as_secs_f64();
        let tol = (0.1 * truth).max(0.05);
        ok &= (r.raw_is - truth).abs() <= tol && secs < 60.0;
        parts.push(format!("rho {rho}: IS {:.4} vs {truth:.4} (tol {tol:.3}, {secs:.1}s)", r.raw_is));
    }
    outcome(ok, parts.join("; "))
}

fn independence_null() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let n = 5000;
    let mut within = 0;
    let mut worst: f64 = 0.0;
    for run in 0..20 {
        let u = emb("u", normal(&mut rng, n, 4));
        let z = emb("z", normal(&mut rng, n, 4));
        let sp = split(n, 0.1, run).unwrap();
        let cfg = TrainConfig {
            seed: run,
            ..TrainConfig::default()
        };
        let r = estimate_is(&u, &z, &cfg, &sp).unwrap();
        worst = worst.max(r.normalized_is.abs());
        within += (r.normalized_is.abs() <= 0.02) as usize;
    }
    outcome(within >= 18, format!("{within}/20 runs with |IS| <= 0.02 nats/dim, worst {worst:.4}"))
}

fn deterministic_map_asymmetry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let n = 5000;
    let u_raw = normal(&mut rng, n, 4);
    let z_raw = u_raw.slice(s![.., ..2]).to_owned() + normal(&mut rng, n, 2).mapv(|e| 0.05 * e);
    let u = standardize(&emb("u", u_raw)).unwrap();
    let z = standardize(&emb("z", z_raw)).unwrap();
    let sp = split(n, 0.1, 3).unwrap();
    let cfg = TrainConfig::default();
    let fwd = estimate_is(&u, &z, &cfg, &sp).unwrap().normalized_is;
    let back = estimate_is(&z, &u, &cfg, &sp).unwrap().normalized_is;
    outcome(
        fwd - back >= 0.2,
        format!("IS(U->Z) {fwd:.4}, IS(Z->U) {back:.4}, gap {:.4} nats/dim", fwd - back),
    )
}

/// Worst per-coordinate error `|g − fd| / max(|g|, |fd|, 1e-4)` between
/// analytic gradients and central differences of the batch loss.
fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for draw in 0..50 {
        let (du, dz, c) = (rng.random_range(1..=5), rng.random_range(1..=4), rng.random_range(1..=4));
        let hidden = [rng.random_range(4..=16), rng.random_range(4..=16)];
        let batch = rng.random_range(4..=32);
        let mut k = KernelNetwork::<f64>::new(du, dz, c, &hidden, 1e-6, &mut rng::seeded(draw));
        for p in k.net.param_slices_mut() {
            for v in p.iter_mut() {
                *v += 0.3 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
            }
        }
        let u = normal(&mut rng, batch, du);
        let z = normal(&mut rng, batch, dz);
        let (_, grads) = conditional_loss_and_grad(&k, u.view(), z.view());
        let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();
        let loss = |k: &KernelNetwork<f64>| k.nll_rows(u.view(), z.view()).iter().sum::<f64>() / batch as f64;
        for (group, g) in analytic.iter().enumerate() {
            for (i, &gi) in g.iter().enumerate() {
                let base = k.net.param_slices_mut()[group][i];
                k.net.param_slices_mut()[group][i] = base + h;
                let up = loss(&k);
                k.net.param_slices_mut()[group][i] = base - h;
                let down = loss(&k);
                k.net.param_slices_mut()[group][i] = base;
                let fd = (up - down) / (2.0 * h);
                worst = worst.max((gi - fd).abs() / gi.abs().max(fd.abs()).max(1e-4));
                checked += 1;
            }
        }
    }
    outcome(
        worst <= 1e-4,
        format!("50 draws, {checked} coordinates, worst relative error {worst:.2e}"),
    )
}

// ------------------------------------------------------------------ channels

fn stochastic(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DiscreteChannel {
    let m: Vec<Vec<f64>> = (0..rows)
        .map(|_| {
            let raw: Vec<f64> = (0..cols).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
            let total: f64 = raw.iter().sum();
            raw.iter().map(|v| v / total).collect()
        })
        .collect();
    DiscreteChannel::from_rows(&m).unwrap()
}

fn random_task(rng: &mut ChaCha8Rng, inputs: usize, labels: usize) -> DiscreteTask {
    let prior = stochastic(rng, 1, inputs).rows().remove(0);
    DiscreteTask::new(prior, stochastic(rng, inputs, labels)).unwrap()
}

/// Minimum error over every deterministic rule from outputs to labels.
fn enumerated_risk(c: &DiscreteChannel, t: &DiscreteTask) -> f64 {
    let labels = t.concept.outputs();
    let outs = c.outputs();
    let mut best = f64::INFINITY;
    for code in 0..labels.pow(outs as u32) {
        let rule: Vec<usize> = (0..outs).map(|o| code / labels.pow(o as u32) % labels).collect();
        let mut correct = 0.0;
        for x in 0..c.inputs() {
            for (o, &y) in rule.iter().enumerate() {
                correct += t.prior[x] * t.concept.matrix()[[x, y]] * c.matrix()[[x, o]];
            }
        }
        best = best.min(1.0 - correct);
    }
    best
}

fn discrete_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut worst_delta: f64 = 0.0;
    let mut worst_bayes: f64 = 0.0;
    for _ in 0..100 {
        let (x, a, b) = (rng.random_range(2..=5), rng.random_range(2..=5), rng.random_range(2..=5));
        let u = stochastic(&mut rng, x, a);
        let v = compose(&stochastic(&mut rng, a, b), &u).unwrap();
        let labels = rng.random_range(2..=3);
        let t = random_task(&mut rng, x, labels);
        worst_delta = worst_delta.max(deficiency(&u, &v, &t.prior.to_vec()).unwrap().value);
        for c in [&u, &v] {
            let lib = channel::bayes_risk(c, &t).unwrap();
            worst_bayes = worst_bayes.max((lib - enumerated_risk(c, &t)).abs());
        }
    }
    let mut violations = 0;
    let mut min_slack = f64::INFINITY;
    for _ in 0..1000 {
        let x = rng.random_range(2..=5);
        let (a, b) = (rng.random_range(2..=5), rng.random_range(2..=5));
        let u = stochastic(&mut rng, x, a);
        let v = stochastic(&mut rng, x, b);
        let labels = rng.random_range(2..=3);
        let t = random_task(&mut rng, x, labels);
        let d = deficiency(&u, &v, &t.prior.to_vec()).unwrap().value;
        let slack = d - (enumerated_risk(&u, &t) - enumerated_risk(&v, &t));
        min_slack = min_slack.min(slack);
        violations += (slack < -1e-9) as usize;
    }
    let (u, v) = mixing_pair(0.3, 0.05, 0.05).unwrap();
    let prior = uniform_prior(2);
    let fwd = deficiency(&u, &v, &prior).unwrap().value;
    let back = deficiency(&v, &u, &prior).unwrap().value;

    let garbling = worst_delta <= 1e-9;
    let bayes = worst_bayes <= 4.0 * f64::EPSILON;
    let lecam = violations == 0;
    // positive means beyond the tolerance that counts as zero above
    let fixture = fwd > 1e-9 && back > 1e-9;
    outcome(
        garbling && bayes && lecam && fixture,
        format!(
            "garblings max delta {worst_delta:.1e} [{}]; Bayes vs enumeration max diff {worst_bayes:.1e} [{}]; \
             Le Cam 1000 draws, {violations} violations, min slack {min_slack:.2e} [{}]; \
             mixing fixture delta(u->v) {fwd:.3e}, delta(v->u) {back:.6} [{}]",
            tag(garbling),
            tag(bayes),
            tag(lecam),
            tag(fixture)
        ),
    )
}

fn tag(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "fails"
    }
}

// --------------------------------------------------------------- statistics

fn counted_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&a| {
            let less = x.iter().filter(|&&b| b < a).count() as f64;
            let equal = x.iter().filter(|&&b| b == a).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

fn oracle_pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    (vx > 0.0 && vy > 0.0).then(|| cov / (vx * vy).sqrt())
}

fn correlation_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut rank_mismatch = 0;
    let mut count_mismatch = 0;
    let mut undefined_mismatch = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(2..=8);
        let levels = rng.random_range(2..=6);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 * 0.5).collect();
        let (rx, ry) = (counted_ranks(&x), counted_ranks(&y));
        rank_mismatch += (fractional_ranks(&x) != rx || fractional_ranks(&y) != ry) as usize;

        let (mut s, mut tx, mut ty, mut pairs) = (0i64, 0u64, 0u64, 0u64);
        for i in 0..n {
            for j in i + 1..n {
                pairs += 1;
                let (dx, dy) = (x[i] - x[j], y[i] - y[j]);
                tx += (dx == 0.0) as u64;
                ty += (dy == 0.0) as u64;
                s += ((dx * dy) > 0.0) as i64 - ((dx * dy) < 0.0) as i64;
            }
        }
        let c = kendall_counts(&x, &y).unwrap();
        count_mismatch += ((c.pairs, c.ties_x, c.ties_y, c.score) != (pairs, tx, ty, s)) as usize;

        let tau = (tx < pairs && ty < pairs)
            .then(|| s as f64 / (((pairs - tx) as f64) * ((pairs - ty) as f64)).sqrt());
        let rho = oracle_pearson(&rx, &ry);
        match (spearman(&x, &y).ok(), rho) {
            (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
            (None, None) => {}
            _ => undefined_mismatch += 1,
        }
        match (kendall_tau(&x, &y).ok(), tau) {
            (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
            (None, None) => {}
            _ => undefined_mismatch += 1,
        }
    }
    outcome(
        rank_mismatch + count_mismatch + undefined_mismatch == 0 && worst <= 1e-12,
        format!(
            "200 tied vectors: {rank_mismatch} rank and {count_mismatch} pair-count mismatches, \
             {undefined_mismatch} definedness mismatches, max coefficient diff {worst:.1e}"
        ),
    )
}

// -------------------------------------------------------------------- graph

fn pair_modularity(a: &[Vec<f64>], c: &[usize]) -> f64 {
    let k: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let two_m: f64 = k.iter().sum();
    let mut q = 0.0;
    for i in 0..a.len() {
        for j in 0..a.len() {
            if c[i] == c[j] {
                q += a[i][j] - k[i] * k[j] / two_m;
            }
        }
    }
    q / two_m
}

fn best_modularity(a: &[Vec<f64>]) -> f64 {
    fn grow(prefix: &mut Vec<usize>, max: usize, a: &[Vec<f64>], best: &mut f64) {
        if prefix.len() == a.len() {
            *best = best.max(pair_modularity(a, prefix));
            return;
        }
        for c in 0..=max + 1 {
            prefix.push(c);
            grow(prefix, max.max(c), a, best);
            prefix.pop();
        }
    }
    let mut best = f64::NEG_INFINITY;
    grow(&mut vec![0], 0, a, &mut best);
    best
}

fn louvain_exactness() -> Outcome {
    let mut cliques = vec![vec![0.0; 8]; 8];
    for (i, row) in cliques.iter_mut().enumerate() {
        for (j, w) in row.iter_mut().enumerate() {
            if i != j && i / 4 == j / 4 {
                *w = 1.0;
            }
        }
    }
    let p = louvain_dense(&cliques, 1.0, 0).unwrap();
    let recovered = p.assignment == vec![0, 0, 0, 0, 1, 1, 1, 1];

    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let mut worst: f64 = (p.modularity - best_modularity(&cliques)).abs();
    let mut graphs = 1;
    for sizes in [[4usize, 4].as_slice(), &[3, 5], &[3, 3, 2], &[2, 3, 3], &[4, 3], &[2, 2, 2], &[3, 4]] {
        for _ in 0..5 {
            let group: Vec<usize> = sizes.iter().enumerate().flat_map(|(g, &s)| std::iter::repeat_n(g, s)).collect();
            let n = group.len();
            let mut a = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in i + 1..n {
                    let w = if group[i] == group[j] {
                        rng.random_range(0.6..1.0)
                    } else {
                        rng.random_range(0.0..0.15)
                    };
                    a[i][j] = w;
                    a[j][i] = w;
                }
            }
            let p = louvain_dense(&a, 1.0, rng.random()).unwrap();
            worst = worst.max((p.modularity - best_modularity(&a)).abs());
            worst = worst.max((p.modularity - pair_modularity(&a, &p.assignment)).abs());
            graphs += 1;
        }
    }
    outcome(
        recovered && worst <= 1e-9,
        format!(
            "two 4-cliques -> {:?}; {graphs} planted graphs, max |Q - Q_exhaustive| {worst:.1e}",
            p.assignment
        ),
    )
}

// -------------------------------------------------------------------- probe

fn epoch_formula() -> Outcome {
    let got: Vec<usize> = [1000, 5000, 10000].iter().map(|&s| epochs_for_task_size(s)).collect();
    let lattice_ok = [1000, 5000, 10000]
        .iter()
        .zip(&got)
        .all(|(&s, &e)| grid_lattice(TaskKind::Binary, s, 1e-3, 32).iter().all(|c| c.epochs == e));
    outcome(
        got == [200, 200, 100] && lattice_ok,
        format!("epochs {got:?} for sizes [1000, 5000, 10000]"),
    )
}

fn knn_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let mut mismatches = 0;
    for case in 0..100 {
        let n = rng.random_range(3..60);
        let d = rng.random_range(1..5);
        let x = if case % 2 == 0 {
            Array2::from_shape_simple_fn((n, d), || rng.random_range(0..3) as f64)
        } else {
            normal(&mut rng, n, d)
        };
        let y = normal(&mut rng, n, 2);
        let k = rng.random_range(1..n);
        let brute: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                let mut order: Vec<(f64, usize)> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| {
                        let d2: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                        (d2, j)
                    })
                    .collect();
                order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                order.into_iter().take(k).map(|(_, j)| j).collect()
            })
            .collect();
        let value = brute
            .iter()
            .enumerate()
            .map(|(i, nb)| {
                nb.iter()
                    .map(|&j| y.row(i).iter().zip(y.row(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                    .sum::<f64>()
                    / k as f64
            })
            .sum::<f64>()
            / n as f64;
        let same_neighbours = nearest_neighbors(x.view(), k).unwrap() == brute;
        let same_value = knn_consistency(x.view(), y.view(), k).unwrap().value == value;
        mismatches += (!same_neighbours || !same_value) as usize;
    }
    outcome(mismatches == 0, format!("100 instances (half on a tie-heavy grid), {mismatches} mismatches"))
}

// --------------------------------------------------------------- end to end

const LATENT: usize = 16;
const SAMPLES: usize = 2000;
/// (latent coordinates kept, extra output dimensions, tanh view)
const VIEWS: [(usize, usize, bool); 8] = [
    (16, 0, false),
    (14, 4, true),
    (12, 2, false),
    (10, 6, true),
    (8, 8, false),
    (6, 4, true),
    (4, 10, false),
    (2, 6, true),
];

struct Analogue {
    spearman_normalized: f64,
    spearman_raw: f64,
    secs: f64,
}

fn unit(rng: &mut ChaCha8Rng, d: usize) -> Array1<f64> {
    let w: Array1<f64> = Array1::from_shape_simple_fn(d, || StandardNormal.sample(rng));
    let norm = w.dot(&w).sqrt();
    w / norm
}

/// Five tasks read off the full latent.
fn latent_tasks(rng: &mut ChaCha8Rng, latent: &Array2<f64>) -> Vec<(TaskKind, Vec<f64>)> {
    let n = latent.nrows();
    let proj = |w: &Array1<f64>| latent.dot(w);
    let (w1, w2, w3, w4, w5, w6) = (
        unit(rng, LATENT),
        unit(rng, LATENT),
        unit(rng, LATENT),
        unit(rng, LATENT),
        unit(rng, LATENT),
        unit(rng, LATENT),
    );
    let sign = |v: &Array1<f64>| v.iter().map(|&t| (t > 0.0) as u8 as f64).collect::<Vec<_>>();
    let three = Array2::from_shape_simple_fn((LATENT, 3), || StandardNormal.sample(rng));
    let scores = latent.dot(&three);
    let classes = scores
        .rows()
        .into_iter()
        .map(|r| (0..3).fold(0, |best, c| if r[c] > r[best] { c } else { best }) as f64)
        .collect();
    let noise: Vec<f64> = (0..n).map(|_| 0.1 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)).collect();
    let p4 = proj(&w4);
    let linear = p4.iter().zip(&noise).map(|(a, e)| a + e).collect();
    let (p5, p6) = (proj(&w5), proj(&w6));
    let curved = p5.iter().zip(&p6).map(|(a, b)| a.sin() + 0.5 * b).collect();
    let mixed = proj(&w2) + &proj(&w3).mapv(|t| 0.5 * t.sin());
    vec![
        (TaskKind::Binary, sign(&proj(&w1))),
        (TaskKind::Binary, sign(&mixed)),
        (TaskKind::Multiclass, classes),
        (TaskKind::Regression, linear),
        (TaskKind::Regression, curved),
    ]
}

/// Eight views of a 16-d latent, the IS matrix over them, and probes on
/// five latent tasks. Returns Spearman(score, mean probe rank) with and
/// without per-dimension normalization.
fn analogue(seed: u64, dir: &Path) -> Analogue {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let latent = normal(&mut rng, SAMPLES, LATENT);
    let mut views = Vec::new();
    let mut entries = Vec::new();
    for (i, &(keep, extra, curved)) in VIEWS.iter().enumerate() {
        let d = keep + extra;
        let lift = normal(&mut rng, keep, d).mapv(|v| v / (keep as f64).sqrt());
        let mut z = latent.slice(s![.., ..keep]).dot(&lift);
        if curved {
            z.mapv_inplace(f64::tanh);
        }
        z = z + normal(&mut rng, SAMPLES, d).mapv(|e| 0.1 * e);
        let id = format!("view{i}");
        let m = emb(&id, z);
        save_npy(&m, dir.join(format!("{id}.npy"))).unwrap();
        entries.push(format!(r#"{{"id": "{id}", "path": "{id}.npy", "format": "npy"}}"#));
        views.push(standardize(&m).unwrap());
    }
    let manifest = dir.join("manifest.json");
    fs::write(
        &manifest,
        format!(r#"{{"dataset_id": "acceptance", "embedders": [{}]}}"#, entries.join(",")),
    )
    .unwrap();
    let cfg = RunConfig {
        manifest,
        out: dir.join("out"),
        seed,
        ..RunConfig::default()
    };
    let outputs = run_matrix(&cfg).unwrap();
    let normalized: Vec<f64> = outputs.scores.iter().map(|s| s.score).collect();
    let raw: Vec<f64> = all_scores(&outputs.matrix, Aggregation::Median, false)
        .unwrap()
        .iter()
        .map(|s| s.score)
        .collect();

    let mut order: Vec<usize> = (0..SAMPLES).collect();
    order.sort_by_key(|&i| rng::derive_seed(seed, &["rows", &i.to_string()]));
    let (train, rest) = order.split_at(SAMPLES * 6 / 10);
    let (val, test) = rest.split_at(SAMPLES * 2 / 10);
    let mut mean_rank = vec![0.0; VIEWS.len()];
    let tasks = latent_tasks(&mut rng, &latent);
    for (t, (kind, labels)) in tasks.iter().enumerate() {
        let perf: Vec<f64> = views
            .iter()
            .map(|v| {
                let data = ProbeData::new(v.values().clone(), labels.clone()).unwrap();
                let probe = ProbeConfig {
                    hidden_widths: vec![64, 64],
                    dropout: 0.0,
                    epochs: 30,
                    learning_rate: 1e-3,
                    batch_size: 32,
                    seed: rng::derive_seed(seed, &["probe", &t.to_string()]),
                    task_kind: *kind,
                };
                train_probe(&data.select(train), &data.select(val), &data.select(test), &probe)
                    .unwrap()
                    .value
            })
            .collect();
        for (acc, r) in mean_rank.iter_mut().zip(fractional_ranks(&perf)) {
            *acc += r / tasks.len() as f64;
        }
    }
    Analogue {
        spearman_normalized: spearman(&normalized, &mean_rank).unwrap(),
        spearman_raw: spearman(&raw, &mean_rank).unwrap(),
        secs: start.elapsed().as_secs_f64(),
    }
}

fn end_to_end_and_ablation() -> (Outcome, Outcome) {
    let mut runs = Vec::new();
    for rep in 0..10 {
        let dir = tempfile::tempdir().unwrap();
        let a = analogue(1000 + rep, dir.path());
        eprintln!(
            "  analogue rep {rep}: spearman normalized {:.3}, raw {:.3} ({:.0}s)",
            a.spearman_normalized, a.spearman_raw, a.secs
        );
        runs.push(a);
    }
    let first = &runs[0];
    let e2e = outcome(
        first.spearman_normalized >= 0.8 && first.secs < 1800.0,
        format!(
            "Spearman(median IS, mean probe rank) {:.3}, runtime {:.0}s",
            first.spearman_normalized, first.secs
        ),
    );
    let not_better = runs.iter().filter(|a| a.spearman_raw <= a.spearman_normalized).count();
    let detail: Vec<String> = runs
        .iter()
        .map(|a| format!("{:.2}/{:.2}", a.spearman_normalized, a.spearman_raw))
        .collect();
    let ablation = outcome(
        not_better >= 7,
        format!(
            "{not_better}/10 repetitions where disabling normalization does not raise Spearman (normalized/raw: {})",
            detail.join(" ")
        ),
    );
    (e2e, ablation)
}

fn main() {
    let strict = std::env::var_os("ACCEPTANCE_STRICT").is_some();
    let start = Instant::now();
    let mut results: Vec<(&str, Outcome)> = vec![
        ("gaussian mutual information recovery", gaussian_mi()),
        ("independence null", independence_null()),
        ("deterministic-map asymmetry", deterministic_map_asymmetry()),
        ("conditional kernel gradient check", gradient_check()),
        ("discrete oracle exactness", discrete_oracle()),
        ("correlation exactness", correlation_exactness()),
        ("louvain exactness", louvain_exactness()),
        ("epoch formula", epoch_formula()),
        ("knn exactness", knn_exactness()),
    ];
    let (e2e, ablation) = end_to_end_and_ablation();
    results.push(("end-to-end analogue", e2e));
    results.push(("normalization ablation", ablation));

    let mut failed = 0;
    for (name, o) in &results {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += (!o.pass) as usize;
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.0}s",
        results.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
