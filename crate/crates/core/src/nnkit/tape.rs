use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use super::{Element, Parameter, Tensor};
use crate::{Error, Result};

/// Computes parent gradients from `(grad_out, parent values, output value, which parents need a gradient)`.
pub(crate) type BackwardFn<T> =
    Box<dyn Fn(&Tensor<T>, &[&Tensor<T>], &Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>>>;

struct Node<T: Element> {
    value: Rc<Tensor<T>>,
    requires_grad: bool,
    parents: Vec<usize>,
    backward: Option<BackwardFn<T>>,
}

/// Append-only record of a computation for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so a reverse sweep over node ids is
/// a valid topological order. A tape is single-threaded and meant to live for
/// one forward/backward pass.
pub struct Tape<T: Element = f32> {
    nodes: RefCell<Vec<Node<T>>>,
    params: RefCell<Vec<(String, usize)>>,
}

/// Handle to a value recorded on a [`Tape`].
pub struct Var<'t, T: Element = f32> {
    tape: &'t Tape<T>,
    id: usize,
}

impl<T: Element> Clone for Var<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}
impl<T: Element> Copy for Var<'_, T> {}

impl<T: Element> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            params: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, node: Node<T>) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Input that gradients are taken with respect to.
    pub fn leaf(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(Node {
            value: Rc::new(value),
            requires_grad: true,
            parents: Vec::new(),
            backward: None,
        })
    }

    /// Input that is treated as a constant.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(Node {
            value: Rc::new(value),
            requires_grad: false,
            parents: Vec::new(),
            backward: None,
        })
    }

    /// Binds a model parameter. Frozen parameters enter as constants.
    pub fn param(&self, p: &Parameter<T>) -> Var<'_, T> {
        let v = if p.frozen {
            self.constant(p.tensor.clone())
        } else {
            self.leaf(p.tensor.clone())
        };
        if !p.frozen {
            self.params.borrow_mut().push((p.name.clone(), v.id));
        }
        v
    }

    /// Records the result of an operation. Fails if the value is not finite.
    pub(crate) fn record(
        &self,
        op: &'static str,
        parents: &[Var<'_, T>],
        value: Tensor<T>,
        backward: BackwardFn<T>,
    ) -> Result<Var<'_, T>> {
        value.check_finite(op)?;
        let ids: Vec<usize> = parents.iter().map(|p| p.id).collect();
        let requires_grad = {
            let nodes = self.nodes.borrow();
            ids.iter().any(|&i| nodes[i].requires_grad)
        };
        Ok(self.push(Node {
            value: Rc::new(value),
            requires_grad,
            parents: ids,
            backward: if requires_grad { Some(backward) } else { None },
        }))
    }

    pub(crate) fn value_of(&self, id: usize) -> Rc<Tensor<T>> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        if nodes[loss.id].value.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar output, got shape {:?}",
                nodes[loss.id].value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=loss.id).map(|_| None).collect();
        let mut leaves = HashMap::new();
        grads[loss.id] = Some(Tensor::ones(nodes[loss.id].value.shape().to_vec()));
        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else {
                continue;
            };
            let node = &nodes[id];
            match &node.backward {
                Some(bw) => {
                    let inputs: Vec<&Tensor<T>> =
                        node.parents.iter().map(|&p| &*nodes[p].value).collect();
                    let needs: Vec<bool> =
                        node.parents.iter().map(|&p| nodes[p].requires_grad).collect();
                    let parent_grads = bw(&g, &inputs, &node.value, &needs);
                    debug_assert_eq!(parent_grads.len(), node.parents.len());
                    for ((&p, pg), &need) in node.parents.iter().zip(parent_grads).zip(&needs) {
                        let Some(pg) = pg else { continue };
                        if !need {
                            continue;
                        }
                        debug_assert_eq!(pg.shape(), nodes[p].value.shape(), "grad shape");
                        match &mut grads[p] {
                            Some(acc) => acc.add_assign(&pg),
                            slot @ None => *slot = Some(pg),
                        }
                    }
                }
                None if node.requires_grad => {
                    leaves.insert(id, g);
                }
                None => {}
            }
        }
        let mut by_name = HashMap::new();
        for (name, id) in self.params.borrow().iter() {
            by_name.insert(name.clone(), *id);
            if *id <= loss.id {
                leaves
                    .entry(*id)
                    .or_insert_with(|| Tensor::zeros(nodes[*id].value.shape().to_vec()));
            }
        }
        for grad in leaves.values() {
            grad.check_finite("backward")?;
        }
        Ok(Gradients { leaves, by_name })
    }
}

impl<'t, T: Element> Var<'t, T> {
    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Tensor<T>> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    /// Scalar value of a single-element variable, widened to `f64`.
    pub fn item(&self) -> f64 {
        self.value().item().as_f64()
    }
}

/// Gradients of a scalar with respect to the leaves of a tape.
#[derive(Debug)]
pub struct Gradients<T: Element = f32> {
    leaves: HashMap<usize, Tensor<T>>,
    by_name: HashMap<String, usize>,
}

impl<T: Element> Gradients<T> {
    pub fn wrt(&self, v: Var<'_, T>) -> Option<&Tensor<T>> {
        self.leaves.get(&v.id)
    }

    /// Gradient of a bound, trainable parameter by name.
    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.by_name.get(name).and_then(|id| self.leaves.get(id))
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.by_name.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_rejects_non_scalar() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::zeros(vec![3]));
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn constants_get_no_gradient() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        let c = tape.constant(Tensor::new(vec![2], vec![3.0, 4.0]).unwrap());
        let y = x.mul(c).unwrap().sum_all().unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[3.0, 4.0]);
        assert!(g.wrt(c).is_none());
    }

    #[test]
    fn shared_inputs_accumulate() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::new(vec![1], vec![3.0]).unwrap());
        let y = x.mul(x).unwrap().add(x).unwrap().sum_all().unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[7.0]);
    }
}
