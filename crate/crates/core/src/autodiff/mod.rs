//! Reverse-mode automatic differentiation on dense tensors.
//!
//! The graph is built implicitly: every op allocates a node holding its
//! output buffer, clones of its parent handles, and a closure that routes
//! an incoming gradient to those parents. Node ids are assigned from a
//! global monotonic counter, so a child's id is always greater than its
//! parents' ids and walking nodes in decreasing id order is a valid
//! reverse topological order.
//!
//! Gradients are transient per `backward` call except on leaves created
//! with `requires_grad`, where they accumulate across calls until
//! `clear_grad`. Ops skip gradient work entirely for parents that are not
//! tracked, so feeding constant inputs (e.g. images) costs nothing extra.

pub mod adam;
pub mod kernels;
pub mod ops;

use std::cell::{Ref, RefCell, RefMut};
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

/// Element types the engine computes in. f32 is the working precision;
/// f64 exists for finite-difference verification of the backward pass.
pub trait Scalar:
    num_traits::Float + fmt::Debug + fmt::Display + Default + 'static
{
    const DTYPE: Dtype;
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    const DTYPE: Dtype = Dtype::F32;
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const DTYPE: Dtype = Dtype::F64;
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Element type tag, stored in checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Dtype> {
        match code {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F64),
            _ => None,
        }
    }
}

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

type BackwardFn<T> = Box<dyn Fn(&[T], &mut GradStore<T>)>;

struct Inner<T: Scalar> {
    id: u64,
    shape: Vec<usize>,
    // Rc so `detached` views share storage with the graph-tracked handle.
    data: Rc<RefCell<Vec<T>>>,
    grad: RefCell<Option<Vec<T>>>,
    requires_grad: bool,
    parents: Vec<Tensor<T>>,
    backward: Option<BackwardFn<T>>,
}

/// Dense row-major tensor, cheaply clonable handle into the autodiff graph.
pub struct Tensor<T: Scalar> {
    inner: Rc<Inner<T>>,
}

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.inner.id)
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .finish()
    }
}

impl<T: Scalar> Tensor<T> {
    /// Leaf tensor. `requires_grad` marks it as a trainable parameter:
    /// backward passes accumulate into its persistent gradient buffer.
    pub fn leaf(shape: &[usize], data: Vec<T>, requires_grad: bool) -> Result<Tensor<T>> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Shape {
                op: "leaf",
                detail: format!("shape {:?} needs {} elements, got {}", shape, numel, data.len()),
            });
        }
        Ok(Tensor {
            inner: Rc::new(Inner {
                id: fresh_id(),
                shape: shape.to_vec(),
                data: Rc::new(RefCell::new(data)),
                grad: RefCell::new(None),
                requires_grad,
                parents: Vec::new(),
                backward: None,
            }),
        })
    }

    /// Leaf with no gradient tracking.
    pub fn constant(shape: &[usize], data: Vec<T>) -> Result<Tensor<T>> {
        Tensor::leaf(shape, data, false)
    }

    pub fn zeros(shape: &[usize]) -> Tensor<T> {
        let numel = shape.iter().product();
        Tensor::leaf(shape, vec![T::zero(); numel], false).expect("consistent by construction")
    }

    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<T>,
        parents: Vec<Tensor<T>>,
        backward: Option<BackwardFn<T>>,
    ) -> Tensor<T> {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        Tensor {
            inner: Rc::new(Inner {
                id: fresh_id(),
                shape,
                data: Rc::new(RefCell::new(data)),
                grad: RefCell::new(None),
                requires_grad,
                // Untracked outputs drop their history: nothing upstream can
                // receive gradients, and releasing the handles lets no-grad
                // forward passes free intermediate buffers eagerly.
                parents: if requires_grad { parents } else { Vec::new() },
                backward: if requires_grad { backward } else { None },
            }),
        }
    }

    /// Node that reinterprets the parent's buffer under a new shape
    /// without copying (used by `reshape`).
    pub(crate) fn from_op_shared(
        shape: Vec<usize>,
        data: Rc<RefCell<Vec<T>>>,
        parents: Vec<Tensor<T>>,
        backward: Option<BackwardFn<T>>,
    ) -> Tensor<T> {
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        Tensor {
            inner: Rc::new(Inner {
                id: fresh_id(),
                shape,
                data,
                grad: RefCell::new(None),
                requires_grad,
                parents: if requires_grad { parents } else { Vec::new() },
                backward: if requires_grad { backward } else { None },
            }),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn numel(&self) -> usize {
        self.inner.shape.iter().product()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub(crate) fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn data(&self) -> Ref<'_, Vec<T>> {
        self.inner.data.borrow()
    }

    /// Mutable access to the raw buffer. Mutating between a forward pass
    /// and its backward pass invalidates the recorded gradients; only do
    /// this outside forward/backward pairs (optimizer steps, FD probes).
    pub fn data_mut(&self) -> RefMut<'_, Vec<T>> {
        self.inner.data.borrow_mut()
    }

    pub fn grad_ref(&self) -> Ref<'_, Option<Vec<T>>> {
        self.inner.grad.borrow()
    }

    pub fn grad_vec(&self) -> Option<Vec<T>> {
        self.inner.grad.borrow().clone()
    }

    pub fn clear_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    /// View sharing this tensor's storage with no graph history. Reads see
    /// parameter updates; ops on the view never produce gradients.
    pub fn detached(&self) -> Tensor<T> {
        Tensor {
            inner: Rc::new(Inner {
                id: fresh_id(),
                shape: self.inner.shape.clone(),
                data: Rc::clone(&self.inner.data),
                grad: RefCell::new(None),
                requires_grad: false,
                parents: Vec::new(),
                backward: None,
            }),
        }
    }

    /// Deep copy with no graph history and its own storage.
    pub fn detached_copy(&self) -> Tensor<T> {
        let data = self.inner.data.borrow().clone();
        Tensor::leaf(&self.inner.shape, data, false).expect("shape matches data")
    }

    pub(crate) fn data_rc(&self) -> Rc<RefCell<Vec<T>>> {
        Rc::clone(&self.inner.data)
    }

    fn is_leaf(&self) -> bool {
        self.inner.parents.is_empty()
    }

    /// Reverse-mode sweep from a scalar. Accumulates into the persistent
    /// gradient of every `requires_grad` leaf reachable from this node;
    /// calling twice without `clear_grad` doubles those gradients.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::NonScalarBackward { numel: self.numel() });
        }
        if !self.requires_grad() {
            return Ok(());
        }

        // Collect tracked nodes reachable from self. Untracked parents are
        // pruned: no tracked leaf can sit above a node that is not tracked.
        let mut nodes: Vec<Tensor<T>> = Vec::new();
        let mut seen: HashSet<u64> = HashSet::new();
        let mut stack: Vec<Tensor<T>> = vec![self.clone()];
        seen.insert(self.id());
        while let Some(node) = stack.pop() {
            for parent in &node.inner.parents {
                if parent.requires_grad() && seen.insert(parent.id()) {
                    stack.push(parent.clone());
                }
            }
            nodes.push(node);
        }
        // Child ids exceed parent ids, so decreasing id = reverse topo order.
        nodes.sort_unstable_by(|a, b| b.id().cmp(&a.id()));

        let mut store = GradStore::new();
        store.insert_seed(self.id(), vec![T::one()]);
        for node in &nodes {
            let Some(g) = store.take(node.id()) else {
                continue;
            };
            if let Some(backward) = &node.inner.backward {
                backward(&g, &mut store);
            }
            if node.is_leaf() && node.requires_grad() {
                let mut slot = node.inner.grad.borrow_mut();
                match slot.as_mut() {
                    Some(acc) => {
                        for (a, gi) in acc.iter_mut().zip(&g) {
                            *a = *a + *gi;
                        }
                    }
                    None => *slot = Some(g),
                }
            }
        }
        Ok(())
    }
}

/// Transient gradient buffers keyed by node id, alive for one backward sweep.
pub(crate) struct GradStore<T: Scalar> {
    bufs: HashMap<u64, Vec<T>>,
}

impl<T: Scalar> GradStore<T> {
    fn new() -> Self {
        GradStore { bufs: HashMap::new() }
    }

    fn insert_seed(&mut self, id: u64, g: Vec<T>) {
        self.bufs.insert(id, g);
    }

    fn take(&mut self, id: u64) -> Option<Vec<T>> {
        self.bufs.remove(&id)
    }

    /// Hand a zero-initialized (or previously touched) buffer for `node`
    /// to the closure, which adds its contribution. No-op for untracked
    /// nodes: gradients cannot flow past them.
    pub(crate) fn accumulate(&mut self, node: &Tensor<T>, add: impl FnOnce(&mut [T])) {
        if !node.requires_grad() {
            return;
        }
        let buf = self
            .bufs
            .entry(node.id())
            .or_insert_with(|| vec![T::zero(); node.numel()]);
        add(buf);
    }
}
