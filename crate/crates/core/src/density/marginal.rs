use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::index;

use super::mixture::{GaussianMixtureParams, MixtureGrad};
use super::{train_with_early_stopping, FitReport, TrainConfig};
use crate::error::{Error, Result};
use crate::nn::Adam;
use crate::num::Scalar;
use crate::rng;

/// Log-variance assigned to coordinates that are constant on the training
/// rows; `exp` underflows so the variance equals the floor.
const PINNED_LOG_VARIANCE: f64 = -745.0;

#[derive(Clone)]
struct MarginalState<T: Scalar> {
    params: GaussianMixtureParams<T>,
    opt: Adam<T>,
}

/// Fits the marginal mixture `F_Θ(Z)` on `z_train`; the report's held-out
/// cross-entropy estimates the uncertainty of `Z`.
pub fn fit_marginal_gm<T: Scalar>(
    z_train: ArrayView2<T>,
    z_heldout: ArrayView2<T>,
    cfg: &TrainConfig,
) -> Result<(GaussianMixtureParams<T>, FitReport)> {
    cfg.validate()?;
    let (n, d) = z_train.dim();
    let c = cfg.components;
    if n < c {
        return Err(Error::TooFewRows { needed: c, found: n });
    }
    if z_heldout.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: z_heldout.ncols(),
        });
    }
    if z_heldout.nrows() == 0 {
        return Err(Error::Empty("held-out rows"));
    }

    let mut rng = rng::seeded(cfg.seed);
    let picks = index::sample(&mut rng, n, c).into_vec();
    let means = z_train.select(Axis(0), &picks);
    let mut log_variances = Array2::zeros((c, d));

    // Coordinates with zero spread: the likelihood is unbounded as the
    // variance shrinks, so the fit lands on the floor directly.
    let pinned: Vec<bool> = z_train
        .columns()
        .into_iter()
        .map(|col| col.iter().all(|&v| v == col[0]))
        .collect();
    for (j, _) in pinned.iter().enumerate().filter(|(_, p)| **p) {
        log_variances.column_mut(j).fill(T::lit(PINNED_LOG_VARIANCE));
    }

    let params = GaussianMixtureParams::new(
        means.as_standard_layout().into_owned(),
        log_variances,
        Array1::zeros(c),
        cfg.variance_floor,
    )?;
    let opt = Adam::new(T::lit(cfg.learning_rate), &[c, c * d, c * d]);
    let mut state = MarginalState { params, opt };

    let z_train = z_train.as_standard_layout();
    let z_heldout = z_heldout.as_standard_layout();
    let mut scratch = Vec::with_capacity(c);
    let mut eval_scratch = Vec::with_capacity(c);
    let (mut gl, mut gm, mut gs) = (vec![T::zero(); c], vec![T::zero(); c * d], vec![T::zero(); c * d]);

    let report = train_with_early_stopping(
        &mut state,
        cfg,
        n,
        &mut rng,
        |st, batch| {
            gl.fill(T::zero());
            gm.fill(T::zero());
            gs.fill(T::zero());
            let scale = T::one() / T::lit(batch.len() as f64);
            let view = st.params.view();
            let mut loss = T::zero();
            for &i in batch {
                let grad = MixtureGrad {
                    logits: &mut gl,
                    means: &mut gm,
                    log_variances: &mut gs,
                };
                loss += view.nll(z_train.row(i).as_slice().expect("contiguous"), &mut scratch, Some((grad, scale)));
            }
            for k in (0..c * d).filter(|k| pinned[k % d]) {
                gm[k] = T::zero();
                gs[k] = T::zero();
            }
            let p = &mut st.params;
            st.opt.step(
                &mut [
                    p.weight_logits.as_slice_mut().expect("contiguous"),
                    p.means.as_slice_mut().expect("contiguous"),
                    p.log_variances.as_slice_mut().expect("contiguous"),
                ],
                &[&gl, &gm, &gs],
            );
            loss.as_f64() * scale.as_f64()
        },
        |st| mean_nll(&st.params, z_heldout.view(), &mut eval_scratch),
    )?;
    Ok((state.params, report))
}

/// Mean negative log-likelihood of the rows of `z`, in nats.
pub(crate) fn mean_nll<T: Scalar>(p: &GaussianMixtureParams<T>, z: ArrayView2<T>, scratch: &mut Vec<T>) -> f64 {
    let view = p.view();
    let total: f64 = z
        .rows()
        .into_iter()
        .map(|row| view.nll(row.to_slice().expect("contiguous"), scratch, None).as_f64())
        .sum();
    total / z.nrows() as f64
}
