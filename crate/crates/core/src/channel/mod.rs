//! Exact comparison of discrete channels on finite alphabets.
//!
//! A channel is a row-stochastic matrix (row `x` is the output distribution
//! given input `x`). Deficiency is the smallest prior-weighted total
//! variation achievable when simulating one channel from another through a
//! stochastic post-processing matrix, computed exactly as a linear program.

pub mod lp;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;
use lp::{LinearProgram, Relation};

/// Largest alphabet accepted by [`deficiency`].
pub const MAX_ALPHABET: usize = 32;

fn stochastic_tol<T: Scalar>() -> T {
    T::lit(1e-12).max(T::epsilon() * T::lit(64.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteChannel<T: Scalar = f64> {
    matrix: Array2<T>,
}

impl<T: Scalar> DiscreteChannel<T> {
    pub fn new(matrix: Array2<T>) -> Result<Self> {
        let (r, c) = matrix.dim();
        if r == 0 || c == 0 {
            return Err(Error::Empty("channel"));
        }
        let tol = stochastic_tol::<T>();
        for (x, row) in matrix.rows().into_iter().enumerate() {
            if row.iter().any(|&p| !(p >= -tol && p <= T::one() + tol)) {
                return Err(Error::invalid(format!("row {x} has entries outside [0, 1]")));
            }
            let sum: T = row.iter().copied().sum();
            if (sum - T::one()).abs() > tol {
                return Err(Error::invalid(format!("row {x} sums to {sum}, not 1")));
            }
        }
        Ok(Self {
            matrix: matrix.as_standard_layout().into_owned(),
        })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged channel matrix"));
        }
        let flat: Vec<T> = rows.iter().flatten().copied().collect();
        Self::new(Array2::from_shape_vec((rows.len(), cols), flat).expect("rectangular"))
    }

    pub fn identity(n: usize) -> Self {
        Self {
            matrix: Array2::eye(n),
        }
    }

    pub fn uniform(inputs: usize, outputs: usize) -> Self {
        Self {
            matrix: Array2::from_elem((inputs, outputs), T::one() / T::lit(outputs as f64)),
        }
    }

    /// Binary symmetric channel with crossover probability `p`.
    pub fn binary_symmetric(p: T) -> Result<Self> {
        let q = T::one() - p;
        Self::from_rows(&[vec![q, p], vec![p, q]])
    }

    pub fn inputs(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &Array2<T> {
        &self.matrix
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        self.matrix.rows().into_iter().map(|r| r.to_vec()).collect()
    }
}

/// A classification task: a prior over inputs and the concept channel
/// `P(Y | X)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteTask<T: Scalar = f64> {
    pub prior: Array1<T>,
    pub concept: DiscreteChannel<T>,
}

impl<T: Scalar> DiscreteTask<T> {
    pub fn new(prior: Vec<T>, concept: DiscreteChannel<T>) -> Result<Self> {
        check_prior(&prior, concept.inputs())?;
        Ok(Self {
            prior: Array1::from(prior),
            concept,
        })
    }
}

fn check_prior<T: Scalar>(prior: &[T], inputs: usize) -> Result<()> {
    if prior.len() != inputs {
        return Err(Error::DimensionMismatch {
            expected: inputs,
            found: prior.len(),
        });
    }
    let tol = stochastic_tol::<T>();
    let sum: T = prior.iter().copied().sum();
    if prior.iter().any(|&p| p < -tol) || (sum - T::one()).abs() > tol {
        return Err(Error::invalid("prior is not a probability vector"));
    }
    Ok(())
}

pub fn uniform_prior<T: Scalar>(n: usize) -> Vec<T> {
    vec![T::one() / T::lit(n as f64); n]
}

/// Channel obtained by feeding the output of `p` into `m` (matrix product
/// `p · m`).
pub fn compose<T: Scalar>(m: &DiscreteChannel<T>, p: &DiscreteChannel<T>) -> Result<DiscreteChannel<T>> {
    if m.inputs() != p.outputs() {
        return Err(Error::DimensionMismatch {
            expected: p.outputs(),
            found: m.inputs(),
        });
    }
    Ok(DiscreteChannel {
        matrix: p.matrix.dot(&m.matrix),
    })
}

/// `Σ_x prior(x) · ½ Σ_o |a(o|x) − b(o|x)|`.
pub fn expected_tv<T: Scalar>(a: &DiscreteChannel<T>, b: &DiscreteChannel<T>, prior: &[T]) -> Result<T> {
    if a.matrix.dim() != b.matrix.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.matrix.len(),
            found: b.matrix.len(),
        });
    }
    check_prior(prior, a.inputs())?;
    let half = T::lit(0.5);
    Ok(a.matrix
        .rows()
        .into_iter()
        .zip(b.matrix.rows())
        .zip(prior)
        .map(|((ra, rb), &w)| w * half * ra.iter().zip(rb.iter()).map(|(&x, &y)| (x - y).abs()).sum::<T>())
        .sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeficiencyResult<T: Scalar = f64> {
    /// Objective evaluated at `witness`.
    pub value: T,
    /// Optimal value reported by the linear program.
    pub lp_value: T,
    pub witness: DiscreteChannel<T>,
    pub iterations: usize,
}

/// `δ(u → v) = min_M E_prior ‖M∘u − v‖_TV` over stochastic `M`.
pub fn deficiency<T: Scalar>(
    u: &DiscreteChannel<T>,
    v: &DiscreteChannel<T>,
    prior: &[T],
) -> Result<DeficiencyResult<T>> {
    if u.inputs() != v.inputs() {
        return Err(Error::DimensionMismatch {
            expected: u.inputs(),
            found: v.inputs(),
        });
    }
    check_prior(prior, u.inputs())?;
    let (nx, nu, nv) = (u.inputs(), u.outputs(), v.outputs());
    if [nx, nu, nv].iter().any(|&n| n > MAX_ALPHABET) {
        return Err(Error::invalid(format!("alphabets larger than {MAX_ALPHABET} are not supported")));
    }

    // variables: M[a][b] (nu·nv), then the positive and negative parts
    // p[x][b], n[x][b] of the residual (uM − v)[x][b]
    let n_m = nu * nv;
    let (p_off, n_off) = (n_m, n_m + nx * nv);
    let n_vars = n_m + 2 * nx * nv;
    let half = T::lit(0.5);
    let mut objective = vec![T::zero(); n_vars];
    for x in 0..nx {
        for b in 0..nv {
            objective[p_off + x * nv + b] = half * prior[x];
            objective[n_off + x * nv + b] = half * prior[x];
        }
    }
    let mut program = LinearProgram::new(objective);
    // start basis: M sends everything to output 0, each residual row
    // carries whichever part matches its sign
    let mut start = Vec::with_capacity(nu + nx * nv);
    for a in 0..nu {
        let mut row = vec![T::zero(); n_vars];
        row[a * nv..(a + 1) * nv].fill(T::one());
        program.add(row, Relation::Eq, T::one());
        start.push(a * nv);
    }
    for x in 0..nx {
        for b in 0..nv {
            let mut row = vec![T::zero(); n_vars];
            for a in 0..nu {
                row[a * nv + b] = u.matrix[[x, a]];
            }
            row[p_off + x * nv + b] = -T::one();
            row[n_off + x * nv + b] = T::one();
            let target = v.matrix[[x, b]];
            program.add(row, Relation::Eq, target);
            let residual = if b == 0 { T::one() } else { T::zero() } - target;
            start.push(if residual >= T::zero() { p_off } else { n_off } + x * nv + b);
        }
    }

    let cap = 200 * (program.constraints.len() + n_vars);
    let solution = program.solve_from(&start, cap)?;

    // clean round-off so the witness is exactly stochastic
    let mut m = Array2::from_shape_vec((nu, nv), solution.x[..n_m].to_vec()).expect("nu × nv");
    for mut row in m.rows_mut() {
        row.mapv_inplace(|p| p.max(T::zero()));
        let s: T = row.sum();
        row.mapv_inplace(|p| p / s);
    }
    let witness = DiscreteChannel { matrix: m };
    let value = expected_tv(&compose(&witness, u)?, v, prior)?;
    Ok(DeficiencyResult {
        value,
        lp_value: solution.objective,
        witness,
        iterations: solution.iterations,
    })
}

/// `v` can be simulated from `u` without loss: `δ(u → v) ≤ tol`.
pub fn is_sufficient<T: Scalar>(u: &DiscreteChannel<T>, v: &DiscreteChannel<T>, prior: &[T], tol: T) -> Result<bool> {
    Ok(deficiency(u, v, prior)?.value <= tol)
}

/// Bayes risk of predicting `Y` from the channel output: `1 − Σ_o max_y P(y, o)`.
pub fn bayes_risk<T: Scalar>(channel: &DiscreteChannel<T>, task: &DiscreteTask<T>) -> Result<T> {
    let joint = joint_label_output(channel, task)?;
    let hit: T = joint
        .columns()
        .into_iter()
        .map(|col| col.iter().copied().fold(T::zero(), T::max))
        .sum();
    Ok(T::one() - hit)
}

/// `P(Y = y, out = o)`, shape `|Y| × outputs`.
pub fn joint_label_output<T: Scalar>(channel: &DiscreteChannel<T>, task: &DiscreteTask<T>) -> Result<Array2<T>> {
    if channel.inputs() != task.prior.len() {
        return Err(Error::DimensionMismatch {
            expected: task.prior.len(),
            found: channel.inputs(),
        });
    }
    // diag(prior) · P(Y|X), transposed, times channel
    let weighted = &task.concept.matrix * &task.prior.view().insert_axis(ndarray::Axis(1));
    Ok(weighted.t().dot(&channel.matrix))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskBoundCheck {
    pub risk_u: f64,
    pub risk_v: f64,
    pub delta_uv: f64,
    pub delta_vu: f64,
    /// `δ(u→v) − (R_U − R_V)`; non-negative when the bound holds.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeCamReport {
    pub tasks: Vec<TaskBoundCheck>,
    pub min_slack: f64,
    pub max_slack: f64,
    /// Both `R_U − R_V ≤ δ(u→v)` and `|R_U − R_V| ≤ max δ` hold for every
    /// task, up to 1e-9.
    pub holds: bool,
}

/// Checks the risk-gap bound `R_U − R_V ≤ δ(u → v)` on every task.
/// Deficiencies are computed under each task's own prior over `X`, the
/// weighting that appears in its Bayes risk.
pub fn check_lecam_bound<T: Scalar>(
    u: &DiscreteChannel<T>,
    v: &DiscreteChannel<T>,
    tasks: &[DiscreteTask<T>],
) -> Result<LeCamReport> {
    if tasks.is_empty() {
        return Err(Error::Empty("task list"));
    }
    let mut cache: Vec<(Array1<T>, f64, f64)> = Vec::new();
    let mut checks = Vec::with_capacity(tasks.len());
    for task in tasks {
        let (d_uv, d_vu) = match cache.iter().find(|(p, _, _)| p == task.prior) {
            Some(&(_, a, b)) => (a, b),
            None => {
                let prior = task.prior.to_vec();
                let a = deficiency(u, v, &prior)?.value.as_f64();
                let b = deficiency(v, u, &prior)?.value.as_f64();
                cache.push((task.prior.clone(), a, b));
                (a, b)
            }
        };
        let risk_u = bayes_risk(u, task)?.as_f64();
        let risk_v = bayes_risk(v, task)?.as_f64();
        checks.push(TaskBoundCheck {
            risk_u,
            risk_v,
            delta_uv: d_uv,
            delta_vu: d_vu,
            slack: d_uv - (risk_u - risk_v),
        });
    }
    let holds = checks
        .iter()
        .all(|c| c.slack >= -1e-9 && (c.risk_u - c.risk_v).abs() <= c.delta_uv.max(c.delta_vu) + 1e-9);
    let min_slack = checks.iter().map(|c| c.slack).fold(f64::INFINITY, f64::min);
    let max_slack = checks.iter().map(|c| c.slack).fold(f64::NEG_INFINITY, f64::max);
    Ok(LeCamReport {
        tasks: checks,
        min_slack,
        max_slack,
        holds,
    })
}

/// Channel with rows drawn uniformly from the simplex.
pub fn random_channel(inputs: usize, outputs: usize, rng: &mut crate::rng::Rng) -> DiscreteChannel<f64> {
    use rand_distr::{Distribution, Exp1};
    let mut m = Array2::from_shape_simple_fn((inputs, outputs), || Exp1.sample(rng));
    for mut row in m.rows_mut() {
        let s: f64 = row.sum();
        row /= s;
    }
    DiscreteChannel::new(m).expect("normalized rows")
}

/// Task with a simplex-uniform prior and concept.
pub fn random_task(inputs: usize, labels: usize, rng: &mut crate::rng::Rng) -> DiscreteTask<f64> {
    let prior = random_channel(1, inputs, rng).rows().remove(0);
    DiscreteTask::new(prior, random_channel(inputs, labels, rng)).expect("valid task")
}

/// Pair of binary channels built from a 2×2 input-side mixing of
/// `u = [[p, 1−p], [p+δ, 1−p−δ]]`:
/// `v = ½ [[1+ε, 1−ε], [1, 1]] · u`.
pub fn mixing_pair<T: Scalar>(p: T, delta: T, eps: T) -> Result<(DiscreteChannel<T>, DiscreteChannel<T>)> {
    let one = T::one();
    let half = T::lit(0.5);
    let u = DiscreteChannel::from_rows(&[vec![p, one - p], vec![p + delta, one - p - delta]])?;
    let mix = Array2::from_shape_vec((2, 2), vec![half * (one + eps), half * (one - eps), half, half])
        .expect("2 × 2");
    let v = DiscreteChannel::new(mix.dot(&u.matrix))?;
    Ok((u, v))
}

/// JSON form `{"matrix": [[...]], "prior": [...]}`; `prior` is optional.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelFile {
    pub matrix: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<Vec<f64>>,
}

impl ChannelFile {
    pub fn channel(&self) -> Result<DiscreteChannel<f64>> {
        DiscreteChannel::from_rows(&self.matrix)
    }

    pub fn prior_or_uniform(&self) -> Vec<f64> {
        self.prior.clone().unwrap_or_else(|| uniform_prior(self.matrix.len()))
    }

    /// Interprets the file as a task: `matrix` is `P(Y | X)`.
    pub fn task(&self) -> Result<DiscreteTask<f64>> {
        DiscreteTask::new(self.prior_or_uniform(), self.channel()?)
    }
}

impl From<&DiscreteChannel<f64>> for ChannelFile {
    fn from(c: &DiscreteChannel<f64>) -> Self {
        Self {
            matrix: c.rows(),
            prior: None,
        }
    }
}
