//! Dense f64 tensor with reverse-mode differentiation.
//!
//! Tensors are reference-counted nodes in an acyclic tape. Ops build new
//! nodes whose backward closures read parent data and accumulate gradients;
//! `backward` on a scalar loss walks the tape in reverse topological order.

use std::cell::{Ref, RefCell};
use std::collections::HashSet;
use std::rc::Rc;

use crate::error::{Error, Result};

pub(crate) type BackwardFn = Box<dyn Fn(&[f64])>;

struct Inner {
    data: Vec<f64>,
    shape: Vec<usize>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
    parents: Vec<Tensor>,
    backward: Option<BackwardFn>,
}

#[derive(Clone)]
pub struct Tensor {
    inner: Rc<RefCell<Inner>>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let inner = self.inner.borrow();
        f.debug_struct("Tensor")
            .field("shape", &inner.shape)
            .field("requires_grad", &inner.requires_grad)
            .finish()
    }
}

impl Tensor {
    pub fn from_vec(data: Vec<f64>, shape: &[usize]) -> Tensor {
        assert_eq!(
            data.len(),
            shape.iter().product::<usize>(),
            "data length does not match shape"
        );
        Tensor {
            inner: Rc::new(RefCell::new(Inner {
                data,
                shape: shape.to_vec(),
                requires_grad: false,
                grad: None,
                parents: Vec::new(),
                backward: None,
            })),
        }
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor::from_vec(vec![0.0; shape.iter().product()], shape)
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor::from_vec(vec![v], &[1])
    }

    /// Leaf tensor that accumulates gradients (a trainable value).
    pub fn leaf(data: Vec<f64>, shape: &[usize]) -> Tensor {
        let t = Tensor::from_vec(data, shape);
        t.inner.borrow_mut().requires_grad = true;
        t
    }

    pub(crate) fn new_node(
        data: Vec<f64>,
        shape: &[usize],
        parents: Vec<Tensor>,
        backward: BackwardFn,
    ) -> Tensor {
        let requires = parents.iter().any(|p| p.requires_grad());
        let t = Tensor::from_vec(data, shape);
        if requires {
            let mut inner = t.inner.borrow_mut();
            inner.requires_grad = true;
            inner.parents = parents;
            inner.backward = Some(backward);
        }
        t
    }

    pub fn id(&self) -> usize {
        Rc::as_ptr(&self.inner) as usize
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.inner.borrow().data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.borrow().requires_grad
    }

    pub fn set_requires_grad(&self, v: bool) {
        self.inner.borrow_mut().requires_grad = v;
    }

    pub fn data(&self) -> Ref<'_, [f64]> {
        Ref::map(self.inner.borrow(), |i| i.data.as_slice())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.inner.borrow().data.clone()
    }

    pub fn item(&self) -> f64 {
        let inner = self.inner.borrow();
        assert_eq!(inner.data.len(), 1, "item() on non-scalar tensor");
        inner.data[0]
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.borrow().grad.clone()
    }

    pub fn zero_grad(&self) {
        self.inner.borrow_mut().grad = None;
    }

    /// Overwrites the stored values. Only meaningful on leaves.
    pub fn set_data(&self, data: Vec<f64>) {
        let mut inner = self.inner.borrow_mut();
        assert_eq!(inner.data.len(), data.len());
        inner.data = data;
    }

    pub fn update_data(&self, f: impl FnOnce(&mut [f64])) {
        f(&mut self.inner.borrow_mut().data);
    }

    /// Copy of the values as a fresh leaf detached from the tape.
    pub fn detach(&self) -> Tensor {
        Tensor::from_vec(self.to_vec(), &self.shape())
    }

    pub fn accum_grad(&self, g: &[f64]) {
        let mut inner = self.inner.borrow_mut();
        if !inner.requires_grad {
            return;
        }
        let n = inner.data.len();
        assert_eq!(g.len(), n, "gradient length mismatch");
        let grad = inner.grad.get_or_insert_with(|| vec![0.0; n]);
        for (dst, src) in grad.iter_mut().zip(g) {
            *dst += src;
        }
    }

    /// Like [`Tensor::accum_grad`] but takes ownership: the first
    /// contribution is moved in instead of zero-filled and added.
    pub fn accum_grad_owned(&self, g: Vec<f64>) {
        let mut inner = self.inner.borrow_mut();
        if !inner.requires_grad {
            return;
        }
        assert_eq!(g.len(), inner.data.len(), "gradient length mismatch");
        match &mut inner.grad {
            Some(grad) => {
                for (dst, src) in grad.iter_mut().zip(&g) {
                    *dst += src;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }

    /// Reverse-mode sweep from a scalar loss. Gradients accumulate on every
    /// tensor with `requires_grad`; detached and frozen tensors are untouched.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::NonScalarLoss(self.numel()));
        }
        // iterative post-order DFS
        let mut topo: Vec<Tensor> = Vec::new();
        let mut visited: HashSet<usize> = HashSet::new();
        let mut stack: Vec<(Tensor, usize)> = vec![(self.clone(), 0)];
        visited.insert(self.id());
        while let Some((node, child_idx)) = stack.pop() {
            let parents = node.inner.borrow().parents.clone();
            if child_idx < parents.len() {
                stack.push((node.clone(), child_idx + 1));
                let p = parents[child_idx].clone();
                if visited.insert(p.id()) {
                    stack.push((p, 0));
                }
            } else {
                topo.push(node);
            }
        }
        self.accum_grad(&[1.0]);
        for node in topo.iter().rev() {
            // take the grad and closure out so the node is not borrowed
            // while it runs; interior grads are consumed by the sweep, only
            // leaves (no closure) keep theirs
            let (grad, f) = {
                let mut inner = node.inner.borrow_mut();
                if inner.backward.is_none() {
                    continue;
                }
                match inner.grad.take() {
                    Some(g) => (g, inner.backward.take()),
                    None => continue,
                }
            };
            if let Some(f) = f {
                f(&grad);
            }
        }
        Ok(())
    }
}
