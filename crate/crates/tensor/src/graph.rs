use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// What a backward closure sees: the gradient flowing into the node, the
/// node's own value and its inputs' values, in the order they were given.
pub struct BackwardArgs<'a> {
    pub grad: &'a Tensor,
    pub output: &'a Tensor,
    pub inputs: Vec<&'a Tensor>,
}

type BackwardFn = Box<dyn Fn(&BackwardArgs<'_>) -> Vec<Option<Tensor>>>;

struct Node {
    value: Tensor,
    inputs: Vec<Var>,
    requires_grad: bool,
    backward: Option<BackwardFn>,
}

/// A tape of tensor operations.
pub struct Graph {
    nodes: Vec<Node>,
    record: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Graph::new()
    }
}

impl Graph {
    /// A recording graph, for training.
    pub fn new() -> Graph {
        Graph {
            nodes: Vec::new(),
            record: true,
        }
    }

    /// A graph that never stores backward closures, for inference.
    pub fn inference() -> Graph {
        Graph {
            nodes: Vec::new(),
            record: false,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.record
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A leaf whose gradient is tracked.
    pub fn param(&mut self, value: Tensor) -> Var {
        let requires_grad = self.record;
        self.push(value, Vec::new(), requires_grad, None)
    }

    /// A leaf without gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Vec::new(), false, None)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Appends an op node. The closure is kept only when recording and at
    /// least one input is tracked; it must return one entry per input.
    pub fn custom<F>(&mut self, inputs: &[Var], value: Tensor, backward: F) -> Var
    where
        F: Fn(&BackwardArgs<'_>) -> Vec<Option<Tensor>> + 'static,
    {
        let requires_grad = self.record && inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let backward: Option<BackwardFn> = if requires_grad { Some(Box::new(backward)) } else { None };
        self.push(value, inputs.to_vec(), requires_grad, backward)
    }

    /// Whether any of `inputs` is tracked, so an op can skip saving state.
    pub fn needs_grad(&self, inputs: &[Var]) -> bool {
        self.record && inputs.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn push(&mut self, value: Tensor, inputs: Vec<Var>, requires_grad: bool, backward: Option<BackwardFn>) -> Var {
        self.nodes.push(Node {
            value,
            inputs,
            requires_grad,
            backward,
        });
        Var(self.nodes.len() - 1)
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).numel(), 1, "backward() needs a scalar loss");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            return Gradients { grads };
        }
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            let Some(backward) = node.backward.as_ref() else {
                continue;
            };
            let Some(grad) = grads[idx].take() else {
                continue;
            };
            let args = BackwardArgs {
                grad: &grad,
                output: &node.value,
                inputs: node.inputs.iter().map(|v| &self.nodes[v.0].value).collect(),
            };
            let input_grads = backward(&args);
            assert_eq!(input_grads.len(), node.inputs.len(), "backward returned the wrong number of gradients");
            for (input, g) in node.inputs.iter().zip(input_grads) {
                let Some(g) = g else { continue };
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                debug_assert_eq!(g.shape(), self.nodes[input.0].value.shape());
                match &mut grads[input.0] {
                    Some(acc) => acc.add_assign(&g),
                    slot => *slot = Some(g),
                }
            }
        }
        Gradients { grads }
    }
}

/// Gradients of leaf nodes after [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}
