//! Batched matrix multiplication with broadcastable leading dimensions.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::elementwise::{broadcast_index_map, broadcast_shape};
use super::{BackwardCtx, Tensor};

/// out[m,n] += a[m,k] * b[k,n]
fn mm_acc<E: Scalar>(a: &[E], b: &[E], m: usize, k: usize, n: usize, out: &mut [E]) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (p, &av) in a_row.iter().enumerate() {
            if av == E::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// out[m,k] += g[m,n] * b[k,n]^T
fn mm_nt_acc<E: Scalar>(g: &[E], b: &[E], m: usize, n: usize, k: usize, out: &mut [E]) {
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        let out_row = &mut out[i * k..(i + 1) * k];
        for (p, o) in out_row.iter_mut().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            let mut acc = E::zero();
            for (gv, bv) in g_row.iter().zip(b_row) {
                acc += *gv * *bv;
            }
            *o += acc;
        }
    }
}

/// out[k,n] += a[m,k]^T * g[m,n]
fn mm_tn_acc<E: Scalar>(a: &[E], g: &[E], m: usize, k: usize, n: usize, out: &mut [E]) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let g_row = &g[i * n..(i + 1) * n];
        for (p, &av) in a_row.iter().enumerate() {
            if av == E::zero() {
                continue;
            }
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in out_row.iter_mut().zip(g_row) {
                *o += av * gv;
            }
        }
    }
}

impl<E: Scalar> Tensor<E> {
    /// Batched matrix product: `[.., p, q] x [.., q, r] -> [.., p, r]` with
    /// broadcastable leading dimensions.
    pub fn matmul(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        if self.rank() < 2 || other.rank() < 2 {
            return Err(Error::InvalidArgument {
                op: "matmul",
                msg: format!(
                    "both operands need rank >= 2, got {:?} and {:?}",
                    self.shape(),
                    other.shape()
                ),
            });
        }
        let (a_shape, b_shape) = (self.shape(), other.shape());
        let (p, q) = (a_shape[a_shape.len() - 2], a_shape[a_shape.len() - 1]);
        let (qb, r) = (b_shape[b_shape.len() - 2], b_shape[b_shape.len() - 1]);
        if q != qb {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: a_shape.to_vec(),
                rhs: b_shape.to_vec(),
            });
        }
        let a_batch = &a_shape[..a_shape.len() - 2];
        let b_batch = &b_shape[..b_shape.len() - 2];
        let batch_shape = broadcast_shape("matmul", a_batch, b_batch)?;
        let batches: usize = batch_shape.iter().product();
        let a_map = broadcast_index_map(a_batch, &batch_shape);
        let b_map = broadcast_index_map(b_batch, &batch_shape);

        let mut out_shape = batch_shape;
        out_shape.push(p);
        out_shape.push(r);
        let mut data = vec![E::zero(); batches * p * r];
        {
            let a_data = self.data();
            let b_data = other.data();
            for bi in 0..batches {
                mm_acc(
                    &a_data[a_map[bi] * p * q..],
                    &b_data[b_map[bi] * q * r..],
                    p,
                    q,
                    r,
                    &mut data[bi * p * r..(bi + 1) * p * r],
                );
            }
        }

        let backward_fn = Box::new(move |ctx: &BackwardCtx<'_, E>| {
            let a = &ctx.parents[0];
            let b = &ctx.parents[1];
            let a_data = a.data();
            let b_data = b.data();
            let mut ga = vec![E::zero(); a_data.len()];
            let mut gb = vec![E::zero(); b_data.len()];
            for bi in 0..batches {
                let g = &ctx.grad_out[bi * p * r..(bi + 1) * p * r];
                if a.requires_grad() {
                    mm_nt_acc(g, &b_data[b_map[bi] * q * r..], p, r, q, &mut ga[a_map[bi] * p * q..]);
                }
                if b.requires_grad() {
                    mm_tn_acc(&a_data[a_map[bi] * p * q..], g, p, q, r, &mut gb[b_map[bi] * q * r..]);
                }
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
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_preserves_vector() {
        let eye = Tensor::<f64>::constant(
            &[3, 3],
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        let v = Tensor::<f64>::constant(&[3, 1], vec![2.0, -1.0, 5.0]).unwrap();
        assert_eq!(eye.matmul(&v).unwrap().to_vec(), vec![2.0, -1.0, 5.0]);
    }

    #[test]
    fn two_by_two_times_column() {
        let a = Tensor::<f64>::constant(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::<f64>::constant(&[2, 1], vec![1.0, 1.0]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().to_vec(), vec![3.0, 7.0]);
    }

    #[test]
    fn grad_of_sum_wrt_lhs_is_ones_times_bt() {
        let a = Tensor::param(&[2, 3], vec![0.5; 6]).unwrap();
        let b = Tensor::<f64>::constant(&[3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let loss = a.matmul(&b).unwrap().sum_all().unwrap();
        loss.backward().unwrap();
        // d/dA sum(AB) = ones(p,r) B^T; each row of B^T-summed = row sums of B.
        let g = a.grad().unwrap();
        assert_eq!(g, vec![3.0, 7.0, 11.0, 3.0, 7.0, 11.0]);
    }

    #[test]
    fn inner_dim_mismatch_is_error() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        let b = Tensor::<f64>::zeros(&[4, 2]);
        assert!(a.matmul(&b).is_err());
    }

    #[test]
    fn batched_broadcast_lhs() {
        // [2,1,2,2] x [3,2,2] -> [2,3,2,2]; lhs batch column broadcasts.
        let a = Tensor::param(&[2, 1, 2, 2], (0..8).map(|v| v as f64).collect()).unwrap();
        let b = Tensor::param(&[3, 2, 2], (0..12).map(|v| v as f64).collect()).unwrap();
        let y = a.matmul(&b).unwrap();
        assert_eq!(y.shape(), &[2, 3, 2, 2]);
        // Spot-check batch (1,2): a block [[4,5],[6,7]], b block [[8,9],[10,11]].
        let d = y.to_vec();
        let block = &d[(1 * 3 + 2) * 4..(1 * 3 + 2) * 4 + 4];
        assert_eq!(block, &[82.0, 91.0, 118.0, 131.0]);
        // Backward runs and shapes line up.
        y.sum_all().unwrap().backward().unwrap();
        assert_eq!(a.grad().unwrap().len(), 8);
        assert_eq!(b.grad().unwrap().len(), 12);
    }
}
