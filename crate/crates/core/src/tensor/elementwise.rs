//! Elementwise operations with trailing-dimension broadcasting.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{BackwardCtx, Tensor};

/// Broadcast result of two shapes under trailing-dimension rules, or an error
/// naming both shapes.
pub(crate) fn broadcast_shape(
    op: &'static str,
    a: &[usize],
    b: &[usize],
) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        if da == db || da == 1 || db == 1 {
            out[i] = da.max(db);
        } else {
            return Err(Error::ShapeMismatch {
                op,
                lhs: a.to_vec(),
                rhs: b.to_vec(),
            });
        }
    }
    Ok(out)
}

/// Row-major strides with 0 on broadcast dimensions, right-aligned against
/// `out_shape`.
pub(crate) fn broadcast_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let rank = out_shape.len();
    let offset = rank - shape.len();
    let mut strides = vec![0usize; rank];
    let mut acc = 1usize;
    for i in (0..shape.len()).rev() {
        strides[offset + i] = if shape[i] == 1 { 0 } else { acc };
        acc *= shape[i];
    }
    strides
}

/// Maps every flat index of `out_shape` to a flat index of the (broadcast)
/// source tensor.
pub(crate) fn broadcast_index_map(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let numel: usize = out_shape.iter().product();
    if shape == out_shape {
        return (0..numel).collect();
    }
    let strides = broadcast_strides(shape, out_shape);
    let rank = out_shape.len();
    let mut map = vec![0usize; numel];
    let mut coords = vec![0usize; rank];
    for (flat, slot) in map.iter_mut().enumerate() {
        let mut rem = flat;
        for d in (0..rank).rev() {
            coords[d] = rem % out_shape[d];
            rem /= out_shape[d];
        }
        let mut src = 0usize;
        for d in 0..rank {
            src += coords[d] * strides[d];
        }
        *slot = src;
    }
    map
}

impl<E: Scalar> Tensor<E> {
    fn binary_op(
        &self,
        other: &Tensor<E>,
        op: &'static str,
        forward: impl Fn(E, E) -> E,
        // (a, b, grad_out) -> (grad_a_contribution, grad_b_contribution)
        backward: impl Fn(E, E, E) -> (E, E) + 'static,
    ) -> Result<Tensor<E>> {
        let out_shape = broadcast_shape(op, self.shape(), other.shape())?;
        let a_map = broadcast_index_map(self.shape(), &out_shape);
        let b_map = broadcast_index_map(other.shape(), &out_shape);
        let a_data = self.data();
        let b_data = other.data();
        let numel: usize = out_shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for i in 0..numel {
            data.push(forward(a_data[a_map[i]], b_data[b_map[i]]));
        }
        drop(a_data);
        drop(b_data);

        let backward_fn = Box::new(move |ctx: &BackwardCtx<'_, E>| {
            let a = &ctx.parents[0];
            let b = &ctx.parents[1];
            let a_data = a.data();
            let b_data = b.data();
            let mut ga = vec![E::zero(); a_data.len()];
            let mut gb = vec![E::zero(); b_data.len()];
            for (i, g) in ctx.grad_out.iter().enumerate() {
                let (da, db) = backward(a_data[a_map[i]], b_data[b_map[i]], *g);
                ga[a_map[i]] += da;
                gb[b_map[i]] += db;
            }
            drop(a_data);
            drop(b_data);
            if a.requires_grad() {
                a.accumulate_grad(&ga);
            }
            if b.requires_grad() {
                b.accumulate_grad(&gb);
            }
        });
        Ok(Tensor::from_op(
            out_shape,
            data,
            vec![self.clone(), other.clone()],
            backward_fn,
        ))
    }

    pub fn add(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        self.binary_op(other, "add", |a, b| a + b, |_, _, g| (g, g))
    }

    pub fn sub(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        self.binary_op(other, "sub", |a, b| a - b, |_, _, g| (g, -g))
    }

    pub fn mul(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        self.binary_op(other, "mul", |a, b| a * b, |a, b, g| (g * b, g * a))
    }

    /// Elementwise division. Zero denominators are the caller's
    /// responsibility (guard with [`Tensor::clamp_min`] where needed).
    pub fn div(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        self.binary_op(
            other,
            "div",
            |a, b| a / b,
            |a, b, g| (g / b, -g * a / (b * b)),
        )
    }

    fn unary_op(
        &self,
        forward: impl Fn(E) -> E,
        // (input, output, grad_out) -> grad_in contribution
        backward: impl Fn(E, E, E) -> E + 'static,
    ) -> Tensor<E> {
        let data: Vec<E> = self.data().iter().map(|&v| forward(v)).collect();
        let backward_fn = Box::new(move |ctx: &BackwardCtx<'_, E>| {
            let p = &ctx.parents[0];
            if !p.requires_grad() {
                return;
            }
            let p_data = p.data();
            let mut grad = Vec::with_capacity(p_data.len());
            for i in 0..p_data.len() {
                grad.push(backward(p_data[i], ctx.out_data[i], ctx.grad_out[i]));
            }
            drop(p_data);
            p.accumulate_grad(&grad);
        });
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            backward_fn,
        )
    }

    pub fn neg(&self) -> Result<Tensor<E>> {
        Ok(self.unary_op(|v| -v, |_, _, g| -g))
    }

    /// Natural logarithm. Non-positive inputs are an error; callers clamp
    /// first.
    pub fn log(&self) -> Result<Tensor<E>> {
        if let Some(min) = self
            .data()
            .iter()
            .cloned()
            .fold(None::<E>, |m, v| Some(m.map_or(v, |m| m.min(v))))
        {
            if min <= E::zero() {
                return Err(Error::LogDomain { min: min.to_f64() });
            }
        }
        Ok(self.unary_op(|v| v.ln(), |x, _, g| g / x))
    }

    pub fn tanh(&self) -> Result<Tensor<E>> {
        Ok(self.unary_op(|v| v.tanh(), |_, y, g| g * (E::one() - y * y)))
    }

    pub fn sigmoid(&self) -> Result<Tensor<E>> {
        Ok(self.unary_op(
            |v| E::one() / (E::one() + (-v).exp()),
            |_, y, g| g * y * (E::one() - y),
        ))
    }

    pub fn relu(&self) -> Result<Tensor<E>> {
        Ok(self.unary_op(
            |v| if v > E::zero() { v } else { E::zero() },
            |x, _, g| if x > E::zero() { g } else { E::zero() },
        ))
    }

    pub fn square(&self) -> Result<Tensor<E>> {
        Ok(self.unary_op(|v| v * v, |x, _, g| g * (x + x)))
    }

    /// `mul * x + add`, elementwise with constants.
    pub fn affine(&self, mul: E, add: E) -> Result<Tensor<E>> {
        Ok(self.unary_op(move |v| mul * v + add, move |_, _, g| g * mul))
    }

    pub fn scale(&self, factor: E) -> Result<Tensor<E>> {
        self.affine(factor, E::zero())
    }

    /// `max(x, floor)`; the gradient passes through only where `x > floor`.
    pub fn clamp_min(&self, floor: E) -> Result<Tensor<E>> {
        Ok(self.unary_op(
            move |v| if v > floor { v } else { floor },
            move |x, _, g| if x > floor { g } else { E::zero() },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_basic() {
        let a = Tensor::<f64>::constant(&[2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::<f64>::constant(&[2], vec![3.0, 4.0]).unwrap();
        assert_eq!(a.add(&b).unwrap().to_vec(), vec![4.0, 6.0]);
    }

    #[test]
    fn relu_basic() {
        let a = Tensor::<f64>::constant(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(a.relu().unwrap().to_vec(), vec![0.0, 0.0, 2.0]);
    }

    #[test]
    fn tanh_gradient_matches_closed_form() {
        let x = Tensor::param(&[1], vec![0.5]).unwrap();
        let y = x.tanh().unwrap();
        y.sum_all().unwrap().backward().unwrap();
        let t = 0.5f64.tanh();
        let expected = 1.0 - t * t;
        let got = x.grad().unwrap()[0];
        assert!((got - expected).abs() < 1e-12);
        assert!((expected - 0.786448).abs() < 1e-6);
    }

    #[test]
    fn incompatible_shapes_name_both() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        let b = Tensor::<f64>::zeros(&[4]);
        let err = a.add(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4]"), "{msg}");
    }

    #[test]
    fn log_rejects_non_positive() {
        let a = Tensor::<f64>::constant(&[2], vec![1.0, 0.0]).unwrap();
        assert!(matches!(a.log(), Err(Error::LogDomain { .. })));
    }

    #[test]
    fn broadcast_bias_add_and_grad_reduction() {
        // [2,3] + [3] broadcasts; bias grad sums over the stretched dim.
        let x = Tensor::param(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Tensor::param(&[3], vec![10.0, 20.0, 30.0]).unwrap();
        let y = x.add(&b).unwrap();
        assert_eq!(y.to_vec(), vec![11.0, 22.0, 33.0, 14.0, 25.0, 36.0]);
        y.sum_all().unwrap().backward().unwrap();
        assert_eq!(b.grad().unwrap(), vec![2.0, 2.0, 2.0]);
        assert_eq!(x.grad().unwrap(), vec![1.0; 6]);
    }

    #[test]
    fn broadcast_inner_one_dim() {
        // [2,1] * [2,3]
        let a = Tensor::param(&[2, 1], vec![2.0, 3.0]).unwrap();
        let b = Tensor::<f64>::constant(&[2, 3], vec![1.0; 6]).unwrap();
        let y = a.mul(&b).unwrap();
        assert_eq!(y.to_vec(), vec![2.0, 2.0, 2.0, 3.0, 3.0, 3.0]);
        y.sum_all().unwrap().backward().unwrap();
        assert_eq!(a.grad().unwrap(), vec![3.0, 3.0]);
    }
}
