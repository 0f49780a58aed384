//! Reductions, norms and softmax.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{BackwardCtx, Tensor};

/// Decomposes a shape around `axis` into (outer, mid, inner) extents so that
/// flat index = (o * mid + m) * inner + i.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let mid = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, mid, inner)
}

fn reduced_shape(shape: &[usize], axis: usize, keepdim: bool) -> Vec<usize> {
    let mut out = shape.to_vec();
    if keepdim {
        out[axis] = 1;
    } else {
        out.remove(axis);
    }
    out
}

impl<E: Scalar> Tensor<E> {
    fn check_axis(&self, op: &'static str, axis: usize) -> Result<()> {
        if axis >= self.rank() {
            return Err(Error::InvalidAxis {
                op,
                axis,
                rank: self.rank(),
            });
        }
        Ok(())
    }

    pub fn sum(&self, axis: usize, keepdim: bool) -> Result<Tensor<E>> {
        self.check_axis("sum", axis)?;
        let shape = self.shape().to_vec();
        let (outer, mid, inner) = axis_split(&shape, axis);
        let data = self.data();
        let mut out = vec![E::zero(); outer * inner];
        for o in 0..outer {
            for m in 0..mid {
                let base = (o * mid + m) * inner;
                for i in 0..inner {
                    out[o * inner + i] += data[base + i];
                }
            }
        }
        drop(data);
        let backward_fn = Box::new(move |ctx: &BackwardCtx<'_, E>| {
            let p = &ctx.parents[0];
            if !p.requires_grad() {
                return;
            }
            let mut grad = vec![E::zero(); outer * mid * inner];
            for o in 0..outer {
                for m in 0..mid {
                    let base = (o * mid + m) * inner;
                    for i in 0..inner {
                        grad[base + i] = ctx.grad_out[o * inner + i];
                    }
                }
            }
            p.accumulate_grad(&grad);
        });
        Ok(Tensor::from_op(
            reduced_shape(&shape, axis, keepdim),
            out,
            vec![self.clone()],
            backward_fn,
        ))
    }

    pub fn mean(&self, axis: usize, keepdim: bool) -> Result<Tensor<E>> {
        self.check_axis("mean", axis)?;
        let mid = self.shape()[axis];
        self.sum(axis, keepdim)?
            .scale(E::one() / E::from_f64(mid as f64))
    }

    /// Maximum along an axis; the gradient flows to the first maximal element
    /// of each slice.
    pub fn max(&self, axis: usize, keepdim: bool) -> Result<Tensor<E>> {
        self.check_axis("max", axis)?;
        let shape = self.shape().to_vec();
        let (outer, mid, inner) = axis_split(&shape, axis);
        let data = self.data();
        let mut out = vec![E::neg_infinity(); outer * inner];
        let mut argmax = vec![0usize; outer * inner];
        for o in 0..outer {
            for m in 0..mid {
                let base = (o * mid + m) * inner;
                for i in 0..inner {
                    let v = data[base + i];
                    if v > out[o * inner + i] {
                        out[o * inner + i] = v;
                        argmax[o * inner + i] = base + i;
                    }
                }
            }
        }
        drop(data);
        let total = outer * mid * inner;
        let backward_fn = Box::new(move |ctx: &BackwardCtx<'_, E>| {
            let p = &ctx.parents[0];
            if !p.requires_grad() {
                return;
            }
            let mut grad = vec![E::zero(); total];
            for (slot, &src) in argmax.iter().enumerate() {
                grad[src] += ctx.grad_out[slot];
            }
            p.accumulate_grad(&grad);
        });
        Ok(Tensor::from_op(
            reduced_shape(&shape, axis, keepdim),
            out,
            vec![self.clone()],
            backward_fn,
        ))
    }

    /// Euclidean norm along an axis. At a zero slice the forward value is 0
    /// and the subgradient is taken as 0.
    pub fn norm2(&self, axis: usize, keepdim: bool) -> Result<Tensor<E>> {
        self.check_axis("norm2", axis)?;
        let shape = self.shape().to_vec();
        let (outer, mid, inner) = axis_split(&shape, axis);
        let data = self.data();
        let mut out = vec![E::zero(); outer * inner];
        for o in 0..outer {
            for m in 0..mid {
                let base = (o * mid + m) * inner;
                for i in 0..inner {
                    let v = data[base + i];
                    out[o * inner + i] += v * v;
                }
            }
        }
        for v in out.iter_mut() {
            *v = v.sqrt();
        }
        drop(data);
        let backward_fn = Box::new(move |ctx: &BackwardCtx<'_, E>| {
            let p = &ctx.parents[0];
            if !p.requires_grad() {
                return;
            }
            let p_data = p.data();
            let mut grad = vec![E::zero(); p_data.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let n = ctx.out_data[o * inner + i];
                    if n == E::zero() {
                        continue;
                    }
                    let g = ctx.grad_out[o * inner + i] / n;
                    for m in 0..mid {
                        let idx = (o * mid + m) * inner + i;
                        grad[idx] = g * p_data[idx];
                    }
                }
            }
            drop(p_data);
            p.accumulate_grad(&grad);
        });
        Ok(Tensor::from_op(
            reduced_shape(&shape, axis, keepdim),
            out,
            vec![self.clone()],
            backward_fn,
        ))
    }

    /// Numerically stabilized softmax along an axis: positive outputs that
    /// sum to 1.
    pub fn softmax(&self, axis: usize) -> Result<Tensor<E>> {
        self.check_axis("softmax", axis)?;
        let shape = self.shape().to_vec();
        let (outer, mid, inner) = axis_split(&shape, axis);
        let data = self.data();
        let mut out = vec![E::zero(); data.len()];
        for o in 0..outer {
            for i in 0..inner {
                let mut max = E::neg_infinity();
                for m in 0..mid {
                    max = max.max(data[(o * mid + m) * inner + i]);
                }
                let mut denom = E::zero();
                for m in 0..mid {
                    let idx = (o * mid + m) * inner + i;
                    let e = (data[idx] - max).exp();
                    out[idx] = e;
                    denom += e;
                }
                for m in 0..mid {
                    out[(o * mid + m) * inner + i] /= denom;
                }
            }
        }
        drop(data);
        let backward_fn = Box::new(move |ctx: &BackwardCtx<'_, E>| {
            let p = &ctx.parents[0];
            if !p.requires_grad() {
                return;
            }
            // dx = y * (g - sum(g * y)) along the softmax axis
            let mut grad = vec![E::zero(); ctx.out_data.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let mut dot = E::zero();
                    for m in 0..mid {
                        let idx = (o * mid + m) * inner + i;
                        dot += ctx.grad_out[idx] * ctx.out_data[idx];
                    }
                    for m in 0..mid {
                        let idx = (o * mid + m) * inner + i;
                        grad[idx] = ctx.out_data[idx] * (ctx.grad_out[idx] - dot);
                    }
                }
            }
            p.accumulate_grad(&grad);
        });
        Ok(Tensor::from_op(
            shape,
            out,
            vec![self.clone()],
            backward_fn,
        ))
    }

    /// Sum of every element, as a scalar tensor.
    pub fn sum_all(&self) -> Result<Tensor<E>> {
        let flat = self.reshape(&[self.numel()])?;
        let mut s = flat.sum(0, false)?;
        s = s.reshape(&[])?;
        Ok(s)
    }

    pub fn mean_all(&self) -> Result<Tensor<E>> {
        let n = self.numel();
        self.sum_all()?.scale(E::one() / E::from_f64(n as f64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_uniform_on_equal_inputs() {
        let x = Tensor::<f64>::zeros(&[3]);
        let y = x.softmax(0).unwrap();
        for v in y.to_vec() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_survives_large_inputs() {
        let x = Tensor::<f64>::constant(&[2], vec![1000.0, 1000.0]).unwrap();
        let y = x.softmax(0).unwrap();
        assert_eq!(y.to_vec(), vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_direct_values() {
        let x = Tensor::<f64>::constant(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        let y = x.softmax(0).unwrap().to_vec();
        let expected = [0.090031, 0.244728, 0.665241];
        for (a, b) in y.iter().zip(expected) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn norm2_three_four_five() {
        let x = Tensor::<f64>::constant(&[2], vec![3.0, 4.0]).unwrap();
        assert_eq!(x.norm2(0, false).unwrap().item(), 5.0);
    }

    #[test]
    fn norm2_zero_vector_has_zero_grad() {
        let x = Tensor::param(&[3], vec![0.0; 3]).unwrap();
        let n = x.norm2(0, false).unwrap();
        assert_eq!(n.item(), 0.0);
        n.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn sum_over_axis_of_ones() {
        let x = Tensor::<f64>::ones(&[2, 3]);
        let s = x.sum(1, false).unwrap();
        assert_eq!(s.shape(), &[2]);
        assert_eq!(s.to_vec(), vec![3.0, 3.0]);
    }

    #[test]
    fn mean_all_basic() {
        let x = Tensor::<f64>::constant(&[4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(x.mean_all().unwrap().item(), 2.5);
    }

    #[test]
    fn max_routes_gradient_to_first_tie() {
        let x = Tensor::param(&[3], vec![2.0, 5.0, 5.0]).unwrap();
        let m = x.max(0, false).unwrap();
        assert_eq!(m.item(), 5.0);
        m.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn invalid_axis_is_rejected() {
        let x = Tensor::<f64>::zeros(&[2, 2]);
        assert!(matches!(
            x.sum(2, false),
            Err(Error::InvalidAxis { .. })
        ));
    }
}
