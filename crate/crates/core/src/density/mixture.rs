use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{ln_two_pi, log_sum_exp, Scalar};

/// Diagonal-covariance Gaussian mixture. Component variances are
/// `exp(log_variance) + variance_floor`; weights are `softmax(weight_logits)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct GaussianMixtureParams<T: Scalar> {
    /// `C × d`
    #[serde(with = "crate::serial::decimal_array2")]
    pub means: Array2<T>,
    /// `C × d`
    #[serde(with = "crate::serial::decimal_array2")]
    pub log_variances: Array2<T>,
    #[serde(with = "crate::serial::decimal_array1")]
    pub weight_logits: Array1<T>,
    pub variance_floor: f64,
}

impl<T: Scalar> GaussianMixtureParams<T> {
    pub fn new(
        means: Array2<T>,
        log_variances: Array2<T>,
        weight_logits: Array1<T>,
        variance_floor: f64,
    ) -> Result<Self> {
        let (c, d) = means.dim();
        if c == 0 || d == 0 {
            return Err(Error::Empty("mixture"));
        }
        if log_variances.dim() != (c, d) {
            return Err(Error::DimensionMismatch {
                expected: c * d,
                found: log_variances.len(),
            });
        }
        if weight_logits.len() != c {
            return Err(Error::DimensionMismatch {
                expected: c,
                found: weight_logits.len(),
            });
        }
        if variance_floor.is_nan() || variance_floor <= 0.0 {
            return Err(Error::invalid("variance floor must be positive"));
        }
        Ok(Self {
            means: means.as_standard_layout().into_owned(),
            log_variances: log_variances.as_standard_layout().into_owned(),
            weight_logits,
            variance_floor,
        })
    }

    pub fn components(&self) -> usize {
        self.means.nrows()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    pub fn weights(&self) -> Array1<T> {
        let lse = log_sum_exp(self.weight_logits.as_slice().expect("contiguous"));
        self.weight_logits.mapv(|a| (a - lse).exp())
    }

    pub fn variances(&self) -> Array2<T> {
        let floor = T::lit(self.variance_floor);
        self.log_variances.mapv(|s| s.exp() + floor)
    }

    pub(crate) fn view(&self) -> MixtureView<'_, T> {
        MixtureView {
            logits: self.weight_logits.as_slice().expect("contiguous"),
            means: self.means.as_slice().expect("contiguous"),
            log_variances: self.log_variances.as_slice().expect("contiguous"),
            dim: self.dim(),
            floor: T::lit(self.variance_floor),
        }
    }
}

/// `log Σ_c w_c N(z | μ_c, diag σ²_c)` in nats.
pub fn gm_log_density<T: Scalar>(p: &GaussianMixtureParams<T>, z: &[T]) -> Result<T> {
    if z.len() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            found: z.len(),
        });
    }
    let mut scratch = Vec::with_capacity(p.components());
    Ok(-p.view().nll(z, &mut scratch, None))
}

/// Borrowed flat mixture parameters, row-major `C × d`.
#[derive(Clone, Copy)]
pub(crate) struct MixtureView<'a, T> {
    pub logits: &'a [T],
    pub means: &'a [T],
    pub log_variances: &'a [T],
    pub dim: usize,
    pub floor: T,
}

/// Gradient accumulators matching the layout of a [`MixtureView`].
pub(crate) struct MixtureGrad<'a, T> {
    pub logits: &'a mut [T],
    pub means: &'a mut [T],
    pub log_variances: &'a mut [T],
}

impl<T: Scalar> MixtureView<'_, T> {
    /// Negative log-density of `z`. When `grad` is given, `scale · ∂nll/∂θ`
    /// is added into it.
    pub fn nll(&self, z: &[T], scratch: &mut Vec<T>, grad: Option<(MixtureGrad<'_, T>, T)>) -> T {
        let c_count = self.logits.len();
        let d = self.dim;
        let half = T::lit(0.5);
        let const_term = -half * ln_two_pi::<T>() * T::lit(d as f64);
        let logit_lse = log_sum_exp(self.logits);

        scratch.clear();
        for c in 0..c_count {
            let mu = &self.means[c * d..(c + 1) * d];
            let s = &self.log_variances[c * d..(c + 1) * d];
            let mut acc = self.logits[c] - logit_lse + const_term;
            for j in 0..d {
                let v = s[j].exp() + self.floor;
                let diff = z[j] - mu[j];
                acc -= half * (v.ln() + diff * diff / v);
            }
            scratch.push(acc);
        }
        let log_p = log_sum_exp(scratch);

        if let Some((g, scale)) = grad {
            for c in 0..c_count {
                let resp = (scratch[c] - log_p).exp();
                let weight = (self.logits[c] - logit_lse).exp();
                g.logits[c] += scale * (weight - resp);
                for j in 0..d {
                    let k = c * d + j;
                    let e = self.log_variances[k].exp();
                    let v = e + self.floor;
                    let diff = z[j] - self.means[k];
                    g.means[k] -= scale * resp * diff / v;
                    g.log_variances[k] += scale * resp * half * (e / v) * (T::one() - diff * diff / v);
                }
            }
        }
        -log_p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn normal_pdf(z: f64, mu: f64, var: f64) -> f64 {
        (-(z - mu).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    }

    /// Mixture whose variances are exactly `var` after the floor is added.
    fn mixture_1d(means: &[f64], var: f64, logits: &[f64]) -> GaussianMixtureParams<f64> {
        let floor = 1e-6;
        let c = means.len();
        GaussianMixtureParams::new(
            Array2::from_shape_vec((c, 1), means.to_vec()).unwrap(),
            Array2::from_elem((c, 1), (var - floor).ln()),
            Array1::from(logits.to_vec()),
            floor,
        )
        .unwrap()
    }

    #[test]
    fn standard_normal_peak() {
        let p = mixture_1d(&[0.0], 1.0, &[0.0]);
        let v = gm_log_density(&p, &[0.0]).unwrap();
        assert!((v - (-0.5 * (2.0 * std::f64::consts::PI).ln())).abs() < 1e-12);
        assert!((v + 0.91894).abs() < 1e-5);
    }

    #[test]
    fn symmetric_pair_at_origin_equals_shifted_component() {
        let a = 1.7;
        let pair = mixture_1d(&[-a, a], 0.6, &[0.0, 0.0]);
        let single = mixture_1d(&[0.0], 0.6, &[0.0]);
        let at_zero = gm_log_density(&pair, &[0.0]).unwrap();
        let shifted = gm_log_density(&single, &[a]).unwrap();
        assert!((at_zero - shifted).abs() < 1e-12);
    }

    #[test]
    fn two_term_hand_evaluation() {
        let p = mixture_1d(&[-3.0, 3.0], 1.0, &[0.0, 0.0]);
        let direct = (0.5 * normal_pdf(3.0, -3.0, 1.0) + 0.5 * normal_pdf(3.0, 3.0, 1.0)).ln();
        let v = gm_log_density(&p, &[3.0]).unwrap();
        assert!((v - direct).abs() < 1e-12, "{v} vs {direct}");
    }

    #[test]
    fn density_integrates_to_one() {
        let p = mixture_1d(&[-2.0, 0.5, 4.0], 0.7, &[0.3, -1.0, 0.0]);
        // trapezoid on [-20, 25]
        let (lo, hi, n) = (-20.0, 25.0, 90_000);
        let h = (hi - lo) / n as f64;
        let integral: f64 = (0..=n)
            .map(|i| {
                let z = lo + i as f64 * h;
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * gm_log_density(&p, &[z]).unwrap().exp()
            })
            .sum::<f64>()
            * h;
        assert!((integral - 1.0).abs() < 1e-3, "{integral}");
    }

    #[test]
    fn finite_far_from_every_mean() {
        let p = mixture_1d(&[-1.0, 1.0], 1.0, &[0.0, 0.0]);
        for z in [-51.0, 51.0, 60.0] {
            assert!(gm_log_density(&p, &[z]).unwrap().is_finite());
        }
        let tight = mixture_1d(&[0.0], 1e-4, &[0.0]);
        assert!(gm_log_density(&tight, &[0.5]).unwrap().is_finite());
    }

    #[test]
    fn dimension_mismatch() {
        let p = mixture_1d(&[0.0], 1.0, &[0.0]);
        assert!(matches!(gm_log_density(&p, &[0.0, 1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn works_in_single_precision() {
        let p = GaussianMixtureParams::<f32>::new(array![[0.0f32]], array![[0.0f32]], array![0.0f32], 1e-6).unwrap();
        let v = gm_log_density(&p, &[0.0f32]).unwrap();
        assert!((v + 0.918_94).abs() < 1e-4);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = GaussianMixtureParams::<f64>::new(
            array![[0.2, -1.0], [1.5, 0.3], [-0.7, 0.9]],
            array![[0.1, -0.4], [0.3, 0.0], [-0.2, 0.5]],
            array![0.2, -0.5, 0.1],
            1e-6,
        )
        .unwrap();
        let z = [0.4, -0.2];
        let mut gl = vec![0.0; 3];
        let mut gm = vec![0.0; 6];
        let mut gs = vec![0.0; 6];
        let mut scratch = Vec::new();
        p.view().nll(
            &z,
            &mut scratch,
            Some((
                MixtureGrad {
                    logits: &mut gl,
                    means: &mut gm,
                    log_variances: &mut gs,
                },
                1.0,
            )),
        );
        let nll = |q: &GaussianMixtureParams<f64>| -gm_log_density(q, &z).unwrap();
        let h = 1e-6;
        let fd = |f: &dyn Fn(&mut GaussianMixtureParams<f64>, f64)| {
            let mut a = p.clone();
            f(&mut a, h);
            let mut b = p.clone();
            f(&mut b, -h);
            (nll(&a) - nll(&b)) / (2.0 * h)
        };
        for c in 0..3 {
            let g = fd(&|q, e| q.weight_logits[c] += e);
            assert!((g - gl[c]).abs() < 1e-7);
            for j in 0..2 {
                let g = fd(&|q, e| q.means[[c, j]] += e);
                assert!((g - gm[c * 2 + j]).abs() < 1e-7);
                let g = fd(&|q, e| q.log_variances[[c, j]] += e);
                assert!((g - gs[c * 2 + j]).abs() < 1e-7);
            }
        }
    }
}
