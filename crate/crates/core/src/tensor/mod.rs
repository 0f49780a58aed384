//! Dense n-dimensional tensors with reverse-mode automatic differentiation.
//!
//! Every operation that produces a tensor from tracked inputs records its
//! parents and a backward closure; [`Tensor::backward`] walks the graph in
//! reverse topological order and accumulates gradients into every
//! `requires_grad` leaf. Tensors are immutable after creation except for
//! gradient accumulation and explicit optimizer updates on leaves; a graph
//! belongs to a single thread.
//!
//! Broadcasting is trailing-dimension only: shapes are right-aligned and a
//! dimension may be stretched when it equals 1. Calling `backward` a second
//! time on the same tensor is rejected.

mod elementwise;
mod matmul;
mod reduce;
mod serial;
mod shape;

pub use serial::{read_tensor_data, write_tensor_data};

use std::cell::{Cell, Ref, RefCell};
use std::collections::HashSet;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
}

fn fresh_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// Context handed to a backward closure: the output gradient, the output's
/// forward value, and the parent tensors to accumulate into.
pub(crate) struct BackwardCtx<'a, E: Scalar> {
    pub grad_out: &'a [E],
    pub out_data: &'a [E],
    pub parents: &'a [Tensor<E>],
}

type BackwardFn<E> = Box<dyn Fn(&BackwardCtx<'_, E>)>;

struct Inner<E: Scalar> {
    id: u64,
    shape: Vec<usize>,
    data: RefCell<Vec<E>>,
    grad: RefCell<Option<Vec<E>>>,
    requires_grad: bool,
    parents: Vec<Tensor<E>>,
    backward_fn: Option<BackwardFn<E>>,
    backward_ran: Cell<bool>,
}

/// A dense tensor participating in the autodiff graph. Cloning is cheap and
/// shares the underlying node.
pub struct Tensor<E: Scalar> {
    inner: Rc<Inner<E>>,
}

impl<E: Scalar> Clone for Tensor<E> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<E: Scalar> std::fmt::Debug for Tensor<E> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .finish()
    }
}

fn check_shape<E: Scalar>(shape: &[usize], data: &[E]) -> Result<()> {
    let n: usize = shape.iter().product();
    if n != data.len() {
        return Err(Error::InvalidArgument {
            op: "tensor",
            msg: format!(
                "shape {:?} implies {} elements, data has {}",
                shape,
                n,
                data.len()
            ),
        });
    }
    Ok(())
}

impl<E: Scalar> Tensor<E> {
    fn new_inner(
        shape: Vec<usize>,
        data: Vec<E>,
        requires_grad: bool,
        parents: Vec<Tensor<E>>,
        backward_fn: Option<BackwardFn<E>>,
    ) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            inner: Rc::new(Inner {
                id: fresh_id(),
                shape,
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad,
                parents,
                backward_fn,
                backward_ran: Cell::new(false),
            }),
        }
    }

    /// Result of an operation. Parents and the backward closure are only
    /// recorded when some parent is tracked.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<E>,
        parents: Vec<Tensor<E>>,
        backward_fn: BackwardFn<E>,
    ) -> Self {
        let tracked = parents.iter().any(|p| p.requires_grad());
        if tracked {
            Self::new_inner(shape, data, true, parents, Some(backward_fn))
        } else {
            Self::new_inner(shape, data, false, Vec::new(), None)
        }
    }

    /// Untracked leaf.
    pub fn constant(shape: &[usize], data: Vec<E>) -> Result<Self> {
        check_shape(shape, &data)?;
        Ok(Self::new_inner(shape.to_vec(), data, false, Vec::new(), None))
    }

    /// Trainable leaf: participates in gradient accumulation.
    pub fn param(shape: &[usize], data: Vec<E>) -> Result<Self> {
        check_shape(shape, &data)?;
        Ok(Self::new_inner(shape.to_vec(), data, true, Vec::new(), None))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::new_inner(shape.to_vec(), vec![E::zero(); n], false, Vec::new(), None)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, E::one())
    }

    pub fn full(shape: &[usize], value: E) -> Self {
        let n = shape.iter().product();
        Self::new_inner(shape.to_vec(), vec![value; n], false, Vec::new(), None)
    }

    pub fn scalar(value: E) -> Self {
        Self::new_inner(vec![], vec![value], false, Vec::new(), None)
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn rank(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.inner.shape.iter().product()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn data(&self) -> Ref<'_, Vec<E>> {
        self.inner.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<E> {
        self.inner.data.borrow().clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> E {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape());
        self.inner.data.borrow()[0]
    }

    pub fn grad(&self) -> Option<Vec<E>> {
        self.inner.grad.borrow().clone()
    }

    /// Resets the gradient accumulator to zeros.
    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = Some(vec![E::zero(); self.numel()]);
    }

    pub fn clear_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    /// Replaces the data of a leaf in place (optimizer updates). The element
    /// count must match.
    pub fn set_data(&self, data: Vec<E>) -> Result<()> {
        if data.len() != self.numel() {
            return Err(Error::InvalidArgument {
                op: "set_data",
                msg: format!(
                    "expected {} elements for shape {:?}, got {}",
                    self.numel(),
                    self.shape(),
                    data.len()
                ),
            });
        }
        *self.inner.data.borrow_mut() = data;
        Ok(())
    }

    /// Untracked copy of this tensor's current value.
    pub fn detach(&self) -> Tensor<E> {
        Self::new_inner(
            self.inner.shape.clone(),
            self.to_vec(),
            false,
            Vec::new(),
            None,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.inner.data.borrow().iter().all(|v| v.is_finite())
    }

    pub(crate) fn accumulate_grad(&self, delta: &[E]) {
        debug_assert_eq!(delta.len(), self.numel());
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta) {
                    *gi += *di;
                }
            }
            None => *slot = Some(delta.to_vec()),
        }
    }

    /// Runs reverse-mode differentiation from a scalar loss, accumulating
    /// gradients into every reachable `requires_grad` leaf. Gradients sum when
    /// a tensor feeds several consumers. A second call on the same tensor is
    /// rejected.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::NonScalarLoss {
                shape: self.shape().to_vec(),
            });
        }
        if self.inner.backward_ran.get() {
            return Err(Error::BackwardAlreadyRun);
        }
        self.inner.backward_ran.set(true);

        // Iterative post-order DFS: parents end up before consumers, so the
        // reversed list is a valid reverse-topological order. Recursion is
        // avoided because unrolled sequence graphs get deep.
        let mut topo: Vec<Tensor<E>> = Vec::new();
        let mut visited: HashSet<u64> = HashSet::new();
        let mut stack: Vec<(Tensor<E>, bool)> = vec![(self.clone(), false)];
        while let Some((node, expanded)) = stack.pop() {
            if expanded {
                topo.push(node);
                continue;
            }
            if !visited.insert(node.id()) {
                continue;
            }
            stack.push((node.clone(), true));
            for p in &node.inner.parents {
                if p.requires_grad() && !visited.contains(&p.id()) {
                    stack.push((p.clone(), false));
                }
            }
        }

        self.accumulate_grad(&[E::one()]);

        for node in topo.iter().rev() {
            let Some(backward_fn) = node.inner.backward_fn.as_ref() else {
                continue;
            };
            let grad = node.inner.grad.borrow();
            let Some(grad_out) = grad.as_ref() else {
                continue;
            };
            let data = node.inner.data.borrow();
            let ctx = BackwardCtx {
                grad_out,
                out_data: &data,
                parents: &node.inner.parents,
            };
            backward_fn(&ctx);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_data_mismatch_is_rejected() {
        let err = Tensor::<f64>::constant(&[2, 3], vec![1.0; 5]).unwrap_err();
        assert!(err.to_string().contains("6 elements"));
    }

    #[test]
    fn backward_sum_gives_ones() {
        let x = Tensor::param(&[4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let loss = x.sum_all().unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn backward_of_x_squared_is_2x() {
        let x = Tensor::param(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let loss = x.mul(&x).unwrap().sum_all().unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, -4.0, 1.0]);
    }

    #[test]
    fn backward_requires_scalar() {
        let x = Tensor::param(&[2], vec![1.0, 2.0]).unwrap();
        let y = x.relu().unwrap();
        assert!(matches!(
            y.backward(),
            Err(Error::NonScalarLoss { .. })
        ));
    }

    #[test]
    fn second_backward_is_rejected() {
        let x = Tensor::param(&[2], vec![1.0, 2.0]).unwrap();
        let loss = x.sum_all().unwrap();
        loss.backward().unwrap();
        let again = loss.backward();
        assert!(matches!(again, Err(Error::BackwardAlreadyRun)));
        // The first call's gradients stay intact.
        assert_eq!(x.grad().unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn grad_accumulates_across_consumers() {
        let x = Tensor::param(&[2], vec![3.0, 5.0]).unwrap();
        let a = x.scale(2.0).unwrap();
        let b = x.scale(3.0).unwrap();
        let loss = a.add(&b).unwrap().sum_all().unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![5.0, 5.0]);
    }

    #[test]
    fn constants_do_not_grow_the_graph() {
        let x = Tensor::<f64>::constant(&[2], vec![1.0, 2.0]).unwrap();
        let y = x.scale(2.0).unwrap();
        assert!(!y.requires_grad());
        assert!(y.inner.parents.is_empty());
    }
}
