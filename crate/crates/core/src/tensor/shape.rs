//! Shape manipulation: reshape, slice, concat, transpose and row gathering.
//! All of these copy; gradients route back to the source elements.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{BackwardCtx, Tensor};

impl<E: Scalar> Tensor<E> {
    pub fn reshape(&self, new_shape: &[usize]) -> Result<Tensor<E>> {
        let new_numel: usize = new_shape.iter().product();
        if new_numel != self.numel() {
            return Err(Error::InvalidArgument {
                op: "reshape",
                msg: format!(
                    "cannot reshape {:?} ({} elements) into {:?} ({} elements)",
                    self.shape(),
                    self.numel(),
                    new_shape,
                    new_numel
                ),
            });
        }
        let backward_fn = Box::new(move |ctx: &BackwardCtx<'_, E>| {
            let p = &ctx.parents[0];
            if p.requires_grad() {
                p.accumulate_grad(ctx.grad_out);
            }
        });
        Ok(Tensor::from_op(
            new_shape.to_vec(),
            self.to_vec(),
            vec![self.clone()],
            backward_fn,
        ))
    }

    /// Contiguous range `[start, end)` along an axis.
    pub fn slice(&self, axis: usize, start: usize, end: usize) -> Result<Tensor<E>> {
        if axis >= self.rank() {
            return Err(Error::InvalidAxis {
                op: "slice",
                axis,
                rank: self.rank(),
            });
        }
        let shape = self.shape().to_vec();
        if start >= end || end > shape[axis] {
            return Err(Error::InvalidArgument {
                op: "slice",
                msg: format!(
                    "range {start}..{end} invalid for axis {axis} of extent {}",
                    shape[axis]
                ),
            });
        }
        let outer: usize = shape[..axis].iter().product();
        let mid = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let width = end - start;
        let data = self.data();
        let mut out = Vec::with_capacity(outer * width * inner);
        for o in 0..outer {
            let base = (o * mid + start) * inner;
            out.extend_from_slice(&data[base..base + width * inner]);
        }
        drop(data);
        let total = outer * mid * inner;
        let backward_fn = Box::new(move |ctx: &BackwardCtx<'_, E>| {
            let p = &ctx.parents[0];
            if !p.requires_grad() {
                return;
            }
            let mut grad = vec![E::zero(); total];
            for o in 0..outer {
                let src = o * width * inner;
                let dst = (o * mid + start) * inner;
                grad[dst..dst + width * inner]
                    .copy_from_slice(&ctx.grad_out[src..src + width * inner]);
            }
            p.accumulate_grad(&grad);
        });
        let mut out_shape = shape;
        out_shape[axis] = width;
        Ok(Tensor::from_op(
            out_shape,
            out,
            vec![self.clone()],
            backward_fn,
        ))
    }

    /// Concatenates tensors along an axis. All other extents must agree.
    pub fn concat(parts: &[&Tensor<E>], axis: usize) -> Result<Tensor<E>> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument {
                op: "concat",
                msg: "no tensors given".into(),
            });
        }
        let first = parts[0].shape().to_vec();
        if axis >= first.len() {
            return Err(Error::InvalidAxis {
                op: "concat",
                axis,
                rank: first.len(),
            });
        }
        let mut total_mid = 0usize;
        for p in parts {
            let s = p.shape();
            if s.len() != first.len()
                || s.iter()
                    .zip(&first)
                    .enumerate()
                    .any(|(d, (a, b))| d != axis && a != b)
            {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: first.clone(),
                    rhs: s.to_vec(),
                });
            }
            total_mid += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut out_shape = first.clone();
        out_shape[axis] = total_mid;

        let mids: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let mut out = vec![E::zero(); outer * total_mid * inner];
        for o in 0..outer {
            let mut offset = 0usize;
            for (pi, p) in parts.iter().enumerate() {
                let data = p.data();
                let src = o * mids[pi] * inner;
                let dst = (o * total_mid + offset) * inner;
                out[dst..dst + mids[pi] * inner]
                    .copy_from_slice(&data[src..src + mids[pi] * inner]);
                offset += mids[pi];
            }
        }

        let parents: Vec<Tensor<E>> = parts.iter().map(|p| (*p).clone()).collect();
        let backward_fn = Box::new(move |ctx: &BackwardCtx<'_, E>| {
            let mut offset = 0usize;
            for (pi, p) in ctx.parents.iter().enumerate() {
                let mid = mids[pi];
                if p.requires_grad() {
                    let mut grad = vec![E::zero(); outer * mid * inner];
                    for o in 0..outer {
                        let src = (o * total_mid + offset) * inner;
                        let dst = o * mid * inner;
                        grad[dst..dst + mid * inner]
                            .copy_from_slice(&ctx.grad_out[src..src + mid * inner]);
                    }
                    p.accumulate_grad(&grad);
                }
                offset += mid;
            }
        });
        Ok(Tensor::from_op(out_shape, out, parents, backward_fn))
    }

    /// Swaps two axes.
    pub fn transpose(&self, axis_a: usize, axis_b: usize) -> Result<Tensor<E>> {
        let rank = self.rank();
        if axis_a >= rank || axis_b >= rank {
            return Err(Error::InvalidAxis {
                op: "transpose",
                axis: axis_a.max(axis_b),
                rank,
            });
        }
        let src_shape = self.shape().to_vec();
        let mut out_shape = src_shape.clone();
        out_shape.swap(axis_a, axis_b);

        let map = transpose_map(&src_shape, axis_a, axis_b);
        let data = self.data();
        let out: Vec<E> = map.iter().map(|&s| data[s]).collect();
        drop(data);

        let map_back = map.clone();
        let backward_fn = Box::new(move |ctx: &BackwardCtx<'_, E>| {
            let p = &ctx.parents[0];
            if !p.requires_grad() {
                return;
            }
            let mut grad = vec![E::zero(); map_back.len()];
            for (dst, &src) in map_back.iter().enumerate() {
                grad[src] += ctx.grad_out[dst];
            }
            p.accumulate_grad(&grad);
        });
        Ok(Tensor::from_op(
            out_shape,
            out,
            vec![self.clone()],
            backward_fn,
        ))
    }

    /// Gathers rows along axis 0: `out[i] = self[indices[i]]`. Gradients
    /// scatter-add back into the gathered rows only.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Tensor<E>> {
        if self.rank() == 0 {
            return Err(Error::InvalidArgument {
                op: "gather_rows",
                msg: "cannot gather from a scalar".into(),
            });
        }
        let rows = self.shape()[0];
        let row_len: usize = self.shape()[1..].iter().product();
        for &idx in indices {
            if idx >= rows {
                return Err(Error::InvalidArgument {
                    op: "gather_rows",
                    msg: format!("row index {idx} out of range for {rows} rows"),
                });
            }
        }
        let data = self.data();
        let mut out = Vec::with_capacity(indices.len() * row_len);
        for &idx in indices {
            out.extend_from_slice(&data[idx * row_len..(idx + 1) * row_len]);
        }
        drop(data);
        let idx_vec = indices.to_vec();
        let total = rows * row_len;
        let backward_fn = Box::new(move |ctx: &BackwardCtx<'_, E>| {
            let p = &ctx.parents[0];
            if !p.requires_grad() {
                return;
            }
            let mut grad = vec![E::zero(); total];
            for (i, &idx) in idx_vec.iter().enumerate() {
                let src = i * row_len;
                let dst = idx * row_len;
                for o in 0..row_len {
                    grad[dst + o] += ctx.grad_out[src + o];
                }
            }
            p.accumulate_grad(&grad);
        });
        let mut out_shape = self.shape().to_vec();
        out_shape[0] = indices.len();
        Ok(Tensor::from_op(
            out_shape,
            out,
            vec![self.clone()],
            backward_fn,
        ))
    }
}

fn transpose_map(shape: &[usize], a: usize, b: usize) -> Vec<usize> {
    let rank = shape.len();
    let mut out_shape = shape.to_vec();
    out_shape.swap(a, b);
    let numel: usize = shape.iter().product();

    let mut src_strides = vec![1usize; rank];
    for d in (0..rank.saturating_sub(1)).rev() {
        src_strides[d] = src_strides[d + 1] * shape[d + 1];
    }
    let mut perm_strides = src_strides.clone();
    perm_strides.swap(a, b);

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
            src += coords[d] * perm_strides[d];
        }
        *slot = src;
    }
    map
}
