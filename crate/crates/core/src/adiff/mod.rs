//! Define-by-run reverse-mode differentiation over scalar graphs.
//!
//! Values are computed eagerly as nodes are pushed, so a freshly built graph
//! is already evaluated. [`Tape::forward`] replays the recorded graph at new
//! leaf values, which is what the finite-difference checker relies on.
//!
//! ```
//! use homoenc::adiff::Tape;
//!
//! let tape = Tape::new();
//! let a = tape.var(2.0);
//! let b = tape.var(3.0);
//! let f = a * b + b;
//! assert_eq!(f.value(), 9.0);
//! let grads = tape.backward(f).unwrap();
//! assert_eq!(grads.wrt(a), 3.0);
//! assert_eq!(grads.wrt(b), 3.0);
//! ```

mod check;
mod real;
pub mod special;

pub use check::{grad_check, GradCheck};
pub use real::{affine, dot_plus, log_sum_exp, sum, Real};

use std::cell::{Cell, RefCell};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdiffError {
    #[error("domain violation at node {node} ({op}): input {value}")]
    Domain { node: usize, op: Op, value: f64 },
    #[error("{0}")]
    Usage(String),
    #[error("gradient check failed at leaf {leaf}: finite-difference estimate is {estimate}")]
    CheckFailure { leaf: usize, estimate: f64 },
}

/// Operation tag of a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    Leaf,
    Const,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    AddConst(f64),
    MulConst(f64),
    Exp,
    Ln,
    Sqrt,
    Square,
    Sin,
    Cos,
    Atan2,
    Softplus,
    LnGamma,
    Digamma,
    LogBesselI0,
    BesselRatio,
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl Op {
    fn arity(self) -> usize {
        match self {
            Op::Leaf | Op::Const => 0,
            Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Atan2 => 2,
            _ => 1,
        }
    }

    /// Whether `input` lies in the op's domain. Binary ops other than
    /// division are total.
    fn in_domain(self, a: f64, b: f64) -> bool {
        match self {
            Op::Ln | Op::LnGamma | Op::Digamma => a > 0.0,
            Op::Sqrt | Op::LogBesselI0 | Op::BesselRatio => a >= 0.0,
            Op::Div => b != 0.0,
            _ => true,
        }
    }

    fn eval(self, a: f64, b: f64) -> f64 {
        match self {
            Op::Leaf | Op::Const => unreachable!("leaves carry their own value"),
            Op::Add => a + b,
            Op::Sub => a - b,
            Op::Mul => a * b,
            Op::Div => a / b,
            Op::Neg => -a,
            Op::AddConst(c) => a + c,
            Op::MulConst(c) => a * c,
            Op::Exp => a.exp(),
            Op::Ln => a.ln(),
            Op::Sqrt => a.sqrt(),
            Op::Square => a * a,
            Op::Sin => a.sin(),
            Op::Cos => a.cos(),
            Op::Atan2 => a.atan2(b),
            Op::Softplus => special::softplus(a),
            Op::LnGamma => special::lgamma(a),
            Op::Digamma => special::digamma(a),
            Op::LogBesselI0 => special::log_bessel_i0(a),
            Op::BesselRatio => special::bessel_ratio(a),
        }
    }

    /// Local partials (∂out/∂a, ∂out/∂b) given input and output values.
    fn partials(self, a: f64, b: f64, out: f64) -> (f64, f64) {
        match self {
            Op::Leaf | Op::Const => (0.0, 0.0),
            Op::Add => (1.0, 1.0),
            Op::Sub => (1.0, -1.0),
            Op::Mul => (b, a),
            Op::Div => (1.0 / b, -a / (b * b)),
            Op::Neg => (-1.0, 0.0),
            Op::AddConst(_) => (1.0, 0.0),
            Op::MulConst(c) => (c, 0.0),
            Op::Exp => (out, 0.0),
            Op::Ln => (1.0 / a, 0.0),
            Op::Sqrt => (0.5 / out, 0.0),
            Op::Square => (2.0 * a, 0.0),
            Op::Sin => (a.cos(), 0.0),
            Op::Cos => (-a.sin(), 0.0),
            Op::Atan2 => {
                // out = atan2(a, b), a plays y and b plays x
                let r2 = a * a + b * b;
                (b / r2, -a / r2)
            }
            Op::Softplus => (special::sigmoid(a), 0.0),
            Op::LnGamma => (special::digamma(a), 0.0),
            Op::Digamma => (special::trigamma(a), 0.0),
            Op::LogBesselI0 => (special::bessel_ratio(a), 0.0),
            Op::BesselRatio => (special::bessel_ratio_derivative(a), 0.0),
        }
    }
}

/// One recorded operation.
#[derive(Debug, Clone)]
pub struct Node {
    pub op: Op,
    pub parents: [usize; 2],
    pub value: f64,
    pub grad: f64,
}

/// Recorded computation graph. Parents always precede children.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    leaves: RefCell<Vec<usize>>,
    evaluated: Cell<bool>,
    violation: Cell<Option<(usize, Op, f64)>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var(#{} = {})", self.id, self.value())
    }
}

/// Gradients of a scalar output with respect to every node.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<f64>,
    leaves: Vec<usize>,
}

impl Gradients {
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        self.grads[v.id]
    }

    /// Leaf gradients in declaration order.
    pub fn leaves(&self) -> Vec<f64> {
        self.leaves.iter().map(|&i| self.grads[i]).collect()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            leaves: RefCell::new(Vec::new()),
            evaluated: Cell::new(true),
            violation: Cell::new(None),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Declares a differentiable leaf with a known value.
    pub fn var(&self, value: f64) -> Var<'_> {
        let id = self.push(Op::Leaf, [0, 0], value);
        self.leaves.borrow_mut().push(id);
        Var { tape: self, id }
    }

    /// Declares a leaf whose value will be supplied by [`Tape::forward`].
    /// The tape counts as unevaluated until then.
    pub fn input(&self) -> Var<'_> {
        self.evaluated.set(false);
        let id = self.push(Op::Leaf, [0, 0], f64::NAN);
        self.leaves.borrow_mut().push(id);
        Var { tape: self, id }
    }

    pub fn constant(&self, value: f64) -> Var<'_> {
        let id = self.push(Op::Const, [0, 0], value);
        Var { tape: self, id }
    }

    pub fn leaf_values(&self) -> Vec<f64> {
        let nodes = self.nodes.borrow();
        self.leaves
            .borrow()
            .iter()
            .map(|&i| nodes[i].value)
            .collect()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.borrow().len()
    }

    pub fn node(&self, id: usize) -> Node {
        self.nodes.borrow()[id].clone()
    }

    /// First domain violation recorded while building, if any.
    pub fn check(&self) -> Result<(), AdiffError> {
        match self.violation.get() {
            Some((node, op, value)) => Err(AdiffError::Domain { node, op, value }),
            None => Ok(()),
        }
    }

    fn push(&self, op: Op, parents: [usize; 2], value: f64) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            op,
            parents,
            value,
            grad: 0.0,
        });
        id
    }

    fn unary(&self, op: Op, a: usize) -> usize {
        let av = self.nodes.borrow()[a].value;
        self.record_violation(op, av, 1.0);
        self.push(op, [a, a], op.eval(av, 0.0))
    }

    fn binary(&self, op: Op, a: usize, b: usize) -> usize {
        let (av, bv) = {
            let nodes = self.nodes.borrow();
            (nodes[a].value, nodes[b].value)
        };
        self.record_violation(op, av, bv);
        self.push(op, [a, b], op.eval(av, bv))
    }

    fn record_violation(&self, op: Op, a: f64, b: f64) {
        // placeholder inputs are NaN until the first forward pass
        if a.is_finite() && b.is_finite() && !op.in_domain(a, b) && self.violation.get().is_none() {
            let node = self.len();
            let value = if op == Op::Div { b } else { a };
            self.violation.set(Some((node, op, value)));
        }
    }

    /// Replays the graph with new leaf values and returns `output`'s value.
    pub fn forward(&self, output: Var<'_>, inputs: &[f64]) -> Result<f64, AdiffError> {
        let leaves = self.leaves.borrow();
        if inputs.len() != leaves.len() {
            return Err(AdiffError::Usage(format!(
                "forward expects {} leaf values, got {}",
                leaves.len(),
                inputs.len()
            )));
        }
        let mut nodes = self.nodes.borrow_mut();
        for (&id, &v) in leaves.iter().zip(inputs) {
            nodes[id].value = v;
        }
        self.violation.set(None);
        for id in 0..nodes.len() {
            let Node { op, parents, .. } = nodes[id];
            if op.arity() == 0 {
                continue;
            }
            let a = nodes[parents[0]].value;
            let b = if op.arity() == 2 {
                nodes[parents[1]].value
            } else {
                0.0
            };
            if !op.in_domain(a, b) {
                self.evaluated.set(false);
                let value = if op == Op::Div { b } else { a };
                return Err(AdiffError::Domain {
                    node: id,
                    op,
                    value,
                });
            }
            nodes[id].value = op.eval(a, b);
        }
        self.evaluated.set(true);
        Ok(nodes[output.id].value)
    }

    /// Reverse accumulation from a scalar output.
    pub fn backward(&self, output: Var<'_>) -> Result<Gradients, AdiffError> {
        if !self.evaluated.get() {
            return Err(AdiffError::Usage("backward called before forward".into()));
        }
        let mut nodes = self.nodes.borrow_mut();
        for n in nodes.iter_mut() {
            n.grad = 0.0;
        }
        nodes[output.id].grad = 1.0;
        for id in (0..=output.id).rev() {
            let Node {
                op,
                parents,
                value,
                grad,
            } = nodes[id];
            if grad == 0.0 || op.arity() == 0 {
                continue;
            }
            let a = nodes[parents[0]].value;
            let b = if op.arity() == 2 {
                nodes[parents[1]].value
            } else {
                0.0
            };
            let (da, db) = op.partials(a, b, value);
            nodes[parents[0]].grad += grad * da;
            if op.arity() == 2 {
                nodes[parents[1]].grad += grad * db;
            }
        }
        Ok(Gradients {
            grads: nodes.iter().map(|n| n.grad).collect(),
            leaves: self.leaves.borrow().clone(),
        })
    }
}

impl<'t> Var<'t> {
    pub fn value(self) -> f64 {
        self.tape.nodes.borrow()[self.id].value
    }

    pub fn id(self) -> usize {
        self.id
    }

    pub fn tape(self) -> &'t Tape {
        self.tape
    }

    fn un(self, op: Op) -> Self {
        Var {
            tape: self.tape,
            id: self.tape.unary(op, self.id),
        }
    }

    fn bin(self, op: Op, rhs: Self) -> Self {
        debug_assert!(
            std::ptr::eq(self.tape, rhs.tape),
            "vars from different tapes"
        );
        Var {
            tape: self.tape,
            id: self.tape.binary(op, self.id, rhs.id),
        }
    }
}

macro_rules! var_binop {
    ($tr:ident, $method:ident, $op:expr) => {
        impl<'t> $tr for Var<'t> {
            type Output = Var<'t>;
            fn $method(self, rhs: Var<'t>) -> Var<'t> {
                self.bin($op, rhs)
            }
        }
    };
}

var_binop!(Add, add, Op::Add);
var_binop!(Sub, sub, Op::Sub);
var_binop!(Mul, mul, Op::Mul);
var_binop!(Div, div, Op::Div);

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.un(Op::Neg)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Var<'t> {
        self.un(Op::AddConst(rhs))
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Var<'t> {
        self.un(Op::AddConst(-rhs))
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Var<'t> {
        self.un(Op::MulConst(rhs))
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: f64) -> Var<'t> {
        self.un(Op::MulConst(1.0 / rhs))
    }
}

impl<'t> Real for Var<'t> {
    fn value(self) -> f64 {
        Var::value(self)
    }
    fn lift(self, c: f64) -> Self {
        self.tape.constant(c)
    }
    fn exp(self) -> Self {
        self.un(Op::Exp)
    }
    fn ln(self) -> Self {
        self.un(Op::Ln)
    }
    fn sqrt(self) -> Self {
        self.un(Op::Sqrt)
    }
    fn square(self) -> Self {
        self.un(Op::Square)
    }
    fn sin(self) -> Self {
        self.un(Op::Sin)
    }
    fn cos(self) -> Self {
        self.un(Op::Cos)
    }
    fn atan2(self, x: Self) -> Self {
        self.bin(Op::Atan2, x)
    }
    fn softplus(self) -> Self {
        self.un(Op::Softplus)
    }
    fn lgamma(self) -> Self {
        self.un(Op::LnGamma)
    }
    fn digamma(self) -> Self {
        self.un(Op::Digamma)
    }
    fn log_bessel_i0(self) -> Self {
        self.un(Op::LogBesselI0)
    }
    fn bessel_ratio(self) -> Self {
        self.un(Op::BesselRatio)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_forward() {
        let t = Tape::new();
        let a = t.input();
        let b = t.input();
        let f = a * b + b;
        assert_eq!(t.forward(f, &[2.0, 3.0]).unwrap(), 9.0);
    }

    #[test]
    fn log_exp_inverse() {
        let t = Tape::new();
        let x = t.input();
        let f = x.exp().ln();
        assert!((t.forward(f, &[1.5]).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn lgamma_half() {
        let t = Tape::new();
        let x = t.input();
        let f = x.lgamma();
        let v = t.forward(f, &[0.5]).unwrap();
        assert!((v - 0.572_364_94).abs() < 1e-8);
    }

    #[test]
    fn product_gradients() {
        let t = Tape::new();
        let a = t.var(2.0);
        let b = t.var(3.0);
        let g = t.backward(a * b).unwrap();
        assert_eq!(g.leaves(), vec![3.0, 2.0]);
    }

    #[test]
    fn square_gradient() {
        let t = Tape::new();
        let x = t.var(5.0);
        let g = t.backward(x * x).unwrap();
        assert_eq!(g.wrt(x), 10.0);
    }

    #[test]
    fn kl_minimum_has_zero_gradient() {
        let t = Tape::new();
        let mu = t.var(0.0);
        let lv = t.var(0.0);
        // KL(N(μ, e^lv) || N(0,1)) = ½(e^lv + μ² − 1 − lv)
        let kl = (lv.exp() + mu * mu - lv - 1.0) * 0.5;
        assert_eq!(kl.value(), 0.0);
        let g = t.backward(kl).unwrap();
        assert_eq!(g.leaves(), vec![0.0, 0.0]);
    }

    #[test]
    fn backward_before_forward_is_usage_error() {
        let t = Tape::new();
        let x = t.input();
        let y = x * 2.0;
        assert!(matches!(t.backward(y), Err(AdiffError::Usage(_))));
        t.forward(y, &[1.0]).unwrap();
        assert_eq!(t.backward(y).unwrap().wrt(x), 2.0);
    }

    #[test]
    fn domain_violation_names_node() {
        let t = Tape::new();
        let x = t.input();
        let y = x * 1.0;
        let z = y.ln();
        let err = t.forward(z, &[-1.0]).unwrap_err();
        assert_eq!(
            err,
            AdiffError::Domain {
                node: z.id(),
                op: Op::Ln,
                value: -1.0
            }
        );
    }

    #[test]
    fn eager_violation_is_recorded() {
        let t = Tape::new();
        let x = t.var(0.0);
        let _ = x.lgamma();
        assert!(matches!(
            t.check(),
            Err(AdiffError::Domain {
                op: Op::LnGamma,
                ..
            })
        ));
    }

    #[test]
    fn wrong_input_count() {
        let t = Tape::new();
        let x = t.input();
        assert!(t.forward(x, &[]).is_err());
    }

    #[test]
    fn deterministic_replay() {
        fn build(t: &Tape) -> Var<'_> {
            let x = t.var(0.7);
            let y = t.var(1.3);
            ((x * y).sin() + y.lgamma() * x.exp()).softplus()
        }
        let t1 = Tape::new();
        let t2 = Tape::new();
        let (f1, f2) = (build(&t1), build(&t2));
        let g1 = t1.backward(f1).unwrap().leaves();
        let g2 = t2.backward(f2).unwrap().leaves();
        assert_eq!(f1.value().to_bits(), f2.value().to_bits());
        for (a, b) in g1.iter().zip(&g2) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
