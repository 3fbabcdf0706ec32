use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::rc::Rc;

use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Gradient of one op output with respect to each of its inputs. `needs[i]` is false
/// for inputs that are not on a differentiable path; their slot may be `None`.
pub(crate) type BackwardFn<T> = Box<dyn Fn(&Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>>>;

/// A value flowing through a computation, optionally attached to a [`Tape`] node.
#[derive(Clone)]
pub struct Var<T> {
    value: Rc<Tensor<T>>,
    id: Option<usize>,
}

impl<T: Real> Var<T> {
    /// A value with no gradient tracking.
    pub fn constant(value: Tensor<T>) -> Self {
        Self { value: Rc::new(value), id: None }
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn id(&self) -> Option<usize> {
        self.id
    }

    pub fn tracked(&self) -> bool {
        self.id.is_some()
    }

    pub(crate) fn rc(&self) -> Rc<Tensor<T>> {
        Rc::clone(&self.value)
    }

    /// Detach and take the value, cloning only if it is shared.
    pub fn into_tensor(self) -> Tensor<T> {
        Rc::try_unwrap(self.value).unwrap_or_else(|rc| (*rc).clone())
    }
}

impl<T: Real> std::fmt::Debug for Var<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{:?} {:?}", self.id, self.value)
    }
}

struct Node<T> {
    parents: Vec<Option<usize>>,
    backward: Option<BackwardFn<T>>,
}

/// Append-only record of primitive applications for reverse accumulation.
///
/// A non-recording tape evaluates ops without keeping anything alive, which is how
/// inference runs.
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
    recording: bool,
    check_finite: Cell<bool>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: RefCell::new(Vec::new()), recording: true, check_finite: Cell::new(cfg!(debug_assertions)) }
    }

    /// A tape that never records; every op result is a constant.
    pub fn inference() -> Self {
        Self { recording: false, ..Self::new() }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Make every op fail with [`Error::NonFinite`] when it produces NaN or Inf.
    pub fn set_check_finite(&self, on: bool) {
        self.check_finite.set(on);
    }

    /// A differentiable input (parameter or input we want gradients for).
    pub fn leaf(&self, value: Tensor<T>) -> Var<T> {
        if !self.recording {
            return Var::constant(value);
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { parents: Vec::new(), backward: None });
        Var { value: Rc::new(value), id: Some(nodes.len() - 1) }
    }

    /// Record the result of an op. `backward` is only invoked when some input is tracked.
    pub(crate) fn record(
        &self,
        op: &str,
        value: Tensor<T>,
        inputs: &[&Var<T>],
        backward: impl Fn(&Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>> + 'static,
    ) -> Result<Var<T>> {
        if self.check_finite.get() && !value.all_finite() {
            return Err(Error::NonFinite(format!("{op} produced NaN or Inf")));
        }
        let parents: Vec<Option<usize>> = inputs.iter().map(|v| v.id).collect();
        if !self.recording || parents.iter().all(Option::is_none) {
            return Ok(Var::constant(value));
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { parents, backward: Some(Box::new(backward)) });
        Ok(Var { value: Rc::new(value), id: Some(nodes.len() - 1) })
    }

    /// Reverse accumulation from a scalar loss. Consumes the tape.
    pub fn backward(self, loss: &Var<T>) -> Result<Gradients<T>> {
        if loss.value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss.value.shape()
            )));
        }
        let Some(root) = loss.id else {
            return Ok(Gradients { grads: HashMap::new() });
        };
        let mut nodes = self.nodes.into_inner();
        let mut pending: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        pending[root] = Some(Tensor::full(loss.value.shape(), T::one()));
        let mut leaves = HashMap::new();
        for id in (0..=root).rev() {
            let Some(grad) = pending[id].take() else { continue };
            let node = &mut nodes[id];
            match node.backward.take() {
                None => {
                    leaves.insert(id, grad);
                }
                Some(f) => {
                    let needs: Vec<bool> = node.parents.iter().map(Option::is_some).collect();
                    let parent_grads = f(&grad, &needs);
                    for (parent, g) in node.parents.iter().zip(parent_grads) {
                        if let (Some(p), Some(g)) = (parent, g) {
                            match &mut pending[*p] {
                                Some(acc) => acc.add_assign(&g),
                                slot => *slot = Some(g),
                            }
                        }
                    }
                }
            }
        }
        Ok(Gradients { grads: leaves })
    }
}

/// Gradients of a loss with respect to the leaves of a tape.
pub struct Gradients<T> {
    grads: HashMap<usize, Tensor<T>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient for a leaf; `None` when the leaf was not on the loss path.
    pub fn get(&self, var: &Var<T>) -> Option<&Tensor<T>> {
        var.id.and_then(|id| self.grads.get(&id))
    }

    /// Gradient for a leaf, zeros when it did not influence the loss.
    pub fn get_or_zero(&self, var: &Var<T>) -> Tensor<T> {
        self.get(var).cloned().unwrap_or_else(|| Tensor::zeros(var.shape()))
    }

    pub fn take(&mut self, var: &Var<T>) -> Option<Tensor<T>> {
        var.id.and_then(|id| self.grads.remove(&id))
    }
}
