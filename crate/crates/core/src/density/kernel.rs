use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::mixture::{GaussianMixtureParams, MixtureGrad, MixtureView};
use super::{train_with_early_stopping, FitReport, TrainConfig};
use crate::error::{Error, Result};
use crate::nn::{Adam, Gradients, Mlp};
use crate::num::Scalar;
use crate::rng;

/// Conditional mixture `K_Θ(Z | U)`: a ReLU network mapping `u` to the
/// logits, means and log-variances of a `C`-component diagonal mixture.
///
/// Output layout per row: `[logits (C) | means (C·d_z) | log-variances (C·d_z)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct KernelNetwork<T: Scalar> {
    pub net: Mlp<T>,
    pub components: usize,
    pub output_dim: usize,
    pub variance_floor: f64,
}

impl<T: Scalar> KernelNetwork<T> {
    pub fn new(
        input_dim: usize,
        output_dim: usize,
        components: usize,
        hidden: &[usize],
        variance_floor: f64,
        rng: &mut rng::Rng,
    ) -> Self {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(components * (1 + 2 * output_dim));
        Self {
            net: Mlp::new(&sizes, rng),
            components,
            output_dim,
            variance_floor,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    fn view_row<'a>(&self, row: &'a [T]) -> MixtureView<'a, T> {
        let (c, d) = (self.components, self.output_dim);
        MixtureView {
            logits: &row[..c],
            means: &row[c..c + c * d],
            log_variances: &row[c + c * d..],
            dim: d,
            floor: T::lit(self.variance_floor),
        }
    }

    /// Per-row negative log-likelihoods of `z` under the kernel at `u`.
    pub fn nll_rows(&self, u: ArrayView2<T>, z: ArrayView2<T>) -> Vec<T> {
        let out = self.net.forward(u);
        let z = z.as_standard_layout();
        let mut scratch = Vec::with_capacity(self.components);
        out.rows()
            .into_iter()
            .zip(z.rows())
            .map(|(o, zr)| {
                self.view_row(o.to_slice().expect("contiguous"))
                    .nll(zr.to_slice().expect("contiguous"), &mut scratch, None)
            })
            .collect()
    }
}

pub fn kernel_forward<T: Scalar>(k: &KernelNetwork<T>, u: &[T]) -> Result<GaussianMixtureParams<T>> {
    if u.len() != k.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: k.input_dim(),
            found: u.len(),
        });
    }
    let x = ArrayView2::from_shape((1, u.len()), u).expect("row vector");
    let out = k.net.forward(x);
    let row = out.row(0);
    let (c, d) = (k.components, k.output_dim);
    GaussianMixtureParams::new(
        row.slice(s![c..c + c * d]).to_owned().into_shape_with_order((c, d)).expect("c × d"),
        row.slice(s![c + c * d..]).to_owned().into_shape_with_order((c, d)).expect("c × d"),
        row.slice(s![..c]).to_owned(),
        k.variance_floor,
    )
}

/// Mean conditional negative log-likelihood over a batch and its gradient
/// with respect to every network parameter.
pub fn conditional_loss_and_grad<T: Scalar>(
    k: &KernelNetwork<T>,
    u: ArrayView2<T>,
    z: ArrayView2<T>,
) -> (T, Gradients<T>) {
    let tape = k.net.forward_train(u, T::zero(), None);
    let b = u.nrows();
    let scale = T::one() / T::lit(b as f64);
    let (c, d) = (k.components, k.output_dim);
    let mut grad_out = Array2::zeros(tape.output.dim());
    let mut scratch = Vec::with_capacity(c);
    let mut loss = T::zero();
    let z = z.as_standard_layout();
    for ((o, zr), mut g) in tape
        .output
        .rows()
        .into_iter()
        .zip(z.rows())
        .zip(grad_out.rows_mut())
    {
        let g = g.as_slice_mut().expect("contiguous");
        let (gl, rest) = g.split_at_mut(c);
        let (gm, gs) = rest.split_at_mut(c * d);
        let grad = MixtureGrad {
            logits: gl,
            means: gm,
            log_variances: gs,
        };
        loss += k.view_row(o.to_slice().expect("contiguous"))
                .nll(zr.to_slice().expect("contiguous"), &mut scratch, Some((grad, scale)));
    }
    (loss * scale, k.net.backward(&tape, grad_out))
}

#[derive(Clone)]
struct KernelState<T: Scalar> {
    kernel: KernelNetwork<T>,
    opt: Adam<T>,
}

/// Fits the conditional kernel on aligned `(u, z)` rows; the report's
/// held-out cross-entropy estimates the uncertainty of `Z` given `U`.
pub fn fit_conditional_kernel<T: Scalar>(
    u_train: ArrayView2<T>,
    z_train: ArrayView2<T>,
    u_heldout: ArrayView2<T>,
    z_heldout: ArrayView2<T>,
    cfg: &TrainConfig,
) -> Result<(KernelNetwork<T>, FitReport)> {
    cfg.validate()?;
    let n = u_train.nrows();
    if z_train.nrows() != n {
        return Err(Error::RowCountMismatch {
            id: "train".into(),
            expected: n,
            found: z_train.nrows(),
        });
    }
    if z_heldout.nrows() != u_heldout.nrows() {
        return Err(Error::RowCountMismatch {
            id: "heldout".into(),
            expected: u_heldout.nrows(),
            found: z_heldout.nrows(),
        });
    }
    if u_heldout.nrows() == 0 {
        return Err(Error::Empty("held-out rows"));
    }
    let (du, dz) = (u_train.ncols(), z_train.ncols());
    if u_heldout.ncols() != du || z_heldout.ncols() != dz {
        return Err(Error::DimensionMismatch {
            expected: du + dz,
            found: u_heldout.ncols() + z_heldout.ncols(),
        });
    }
    let c = cfg.components;
    if n < c {
        return Err(Error::TooFewRows { needed: c, found: n });
    }

    let mut rng = rng::seeded(cfg.seed);
    let mut kernel = KernelNetwork::new(du, dz, c, &cfg.hidden_for(du), cfg.variance_floor, &mut rng);
    let picks = index::sample(&mut rng, n, c).into_vec();
    let init_means = z_train.select(Axis(0), &picks);
    let bias: &mut Array1<T> = &mut kernel.net.output_layer_mut().bias;
    bias.fill(T::zero());
    bias.slice_mut(s![c..c + c * dz])
        .assign(&Array1::from_iter(init_means.iter().copied()));

    let opt = Adam::new(T::lit(cfg.learning_rate), &kernel.net.param_sizes());
    let mut state = KernelState { kernel, opt };

    let report = train_with_early_stopping(
        &mut state,
        cfg,
        n,
        &mut rng,
        |st, batch| {
            let ub = u_train.select(Axis(0), batch);
            let zb = z_train.select(Axis(0), batch);
            let (loss, grads) = conditional_loss_and_grad(&st.kernel, ub.view(), zb.view());
            st.opt.step(&mut st.kernel.net.param_slices_mut(), &grads.slices());
            loss.as_f64()
        },
        |st| {
            let rows = st.kernel.nll_rows(u_heldout, z_heldout);
            rows.iter().map(|v| v.as_f64()).sum::<f64>() / rows.len() as f64
        },
    )?;
    Ok((state.kernel, report))
}
