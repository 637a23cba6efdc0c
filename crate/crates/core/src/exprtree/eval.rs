use super::ops::Op;
use super::tree::{ExprTree, Node};

/// Evaluates `tree` at one input point.
///
/// Returns `None` (NonFinite) on any domain violation, overflow or NaN.
pub fn evaluate(tree: &ExprTree, params: &[f64], x: &[f64]) -> Option<f64> {
    debug_assert_eq!(params.len(), tree.param_count());
    let nodes = tree.nodes();
    let mut stack: Vec<f64> = Vec::with_capacity(nodes.len());
    for node in nodes.iter().rev() {
        let v = match *node {
            Node::Var(j) => x[j as usize - 1],
            Node::Param(c) => params[c as usize],
            Node::Const(v) => v,
            Node::Op(op) if op.arity() == 1 => {
                let a = stack.pop()?;
                op.apply_unary(a)
            }
            Node::Op(op) => {
                let a = stack.pop()?;
                let b = stack.pop()?;
                op.apply_binary(a, b)
            }
        };
        if !v.is_finite() {
            return None;
        }
        stack.push(v);
    }
    stack.pop()
}

/// Column-oriented batch evaluator with reusable scratch buffers.
///
/// Inputs are given as `d` columns of length `n`. With gradients enabled it
/// propagates forward-mode derivatives with respect to every parameter,
/// which is what the least-squares fitter consumes.
#[derive(Default)]
pub struct BatchEvaluator {
    pool: Vec<Lane>,
    stack: Vec<Lane>,
}

#[derive(Default)]
struct Lane {
    val: Vec<f64>,
    /// `k * n` row-major by parameter; meaningful only when `has_grad`.
    grad: Vec<f64>,
    has_grad: bool,
}

impl BatchEvaluator {
    pub fn new() -> Self {
        Self::default()
    }

    fn take(&mut self, n: usize, k: usize, with_grad: bool) -> Lane {
        let mut lane = self.pool.pop().unwrap_or_default();
        lane.val.clear();
        lane.val.resize(n, 0.0);
        lane.has_grad = false;
        if with_grad {
            lane.grad.clear();
            lane.grad.resize(n * k, 0.0);
        }
        lane
    }

    /// Writes model values into `out`. Returns false if any value is
    /// non-finite.
    pub fn values(
        &mut self,
        tree: &ExprTree,
        params: &[f64],
        cols: &[Vec<f64>],
        out: &mut Vec<f64>,
    ) -> bool {
        self.run(tree, params, cols, out, None)
    }

    /// Values plus the Jacobian `d value / d param`, laid out `k * n` with
    /// parameter-major rows. Non-finite derivative entries are zeroed.
    pub fn values_and_jacobian(
        &mut self,
        tree: &ExprTree,
        params: &[f64],
        cols: &[Vec<f64>],
        out: &mut Vec<f64>,
        jac: &mut Vec<f64>,
    ) -> bool {
        self.run(tree, params, cols, out, Some(jac))
    }

    fn run(
        &mut self,
        tree: &ExprTree,
        params: &[f64],
        cols: &[Vec<f64>],
        out: &mut Vec<f64>,
        jac: Option<&mut Vec<f64>>,
    ) -> bool {
        let n = cols.first().map_or(1, |c| c.len());
        let k = tree.param_count();
        let want_grad = jac.is_some() && k > 0;
        let nodes = tree.nodes();

        for node in nodes.iter().rev() {
            let lane = match *node {
                Node::Var(j) => {
                    let mut lane = self.take(n, k, false);
                    lane.val.copy_from_slice(&cols[j as usize - 1]);
                    lane
                }
                Node::Const(v) => {
                    let mut lane = self.take(n, k, false);
                    lane.val.fill(v);
                    lane
                }
                Node::Param(c) => {
                    let mut lane = self.take(n, k, want_grad);
                    lane.val.fill(params[c as usize]);
                    if want_grad {
                        let c = c as usize;
                        lane.grad[c * n..(c + 1) * n].fill(1.0);
                        lane.has_grad = true;
                    }
                    lane
                }
                Node::Op(op) if op.arity() == 1 => {
                    let mut a = self.stack.pop().expect("well-formed tree");
                    unary_in_place(op, &mut a, n, k);
                    a
                }
                Node::Op(op) => {
                    let mut a = self.stack.pop().expect("well-formed tree");
                    let b = self.stack.pop().expect("well-formed tree");
                    binary_in_place(op, &mut a, &b, n, k, want_grad);
                    self.pool.push(b);
                    a
                }
            };
            self.stack.push(lane);
        }

        let root = self.stack.pop().expect("non-empty tree");
        debug_assert!(self.stack.is_empty());
        out.clear();
        out.extend_from_slice(&root.val);
        let finite = root.val.iter().all(|v| v.is_finite());
        if let Some(jac) = jac {
            jac.clear();
            if root.has_grad {
                jac.extend(
                    root.grad
                        .iter()
                        .map(|&g| if g.is_finite() { g } else { 0.0 }),
                );
            } else {
                jac.resize(n * k, 0.0);
            }
        }
        self.pool.push(root);
        finite
    }
}

fn unary_in_place(op: Op, a: &mut Lane, n: usize, k: usize) {
    if a.has_grad {
        for i in 0..n {
            let x = a.val[i];
            let y = op.apply_unary(x);
            let d = match op {
                Op::Exp => y,
                Op::Log => 1.0 / x,
                Op::Sin => x.cos(),
                Op::Cos => -x.sin(),
                Op::Sqrt => 0.5 / y,
                Op::Abs => x.signum(),
                Op::Tanh => 1.0 - y * y,
                Op::Pow2 => 2.0 * x,
                Op::Pow3 => 3.0 * x * x,
                _ => f64::NAN,
            };
            for p in 0..k {
                a.grad[p * n + i] *= d;
            }
            a.val[i] = y;
        }
    } else {
        for v in a.val.iter_mut() {
            *v = op.apply_unary(*v);
        }
    }
}

fn binary_in_place(op: Op, a: &mut Lane, b: &Lane, n: usize, k: usize, want_grad: bool) {
    let ga = a.has_grad;
    let gb = b.has_grad;
    if !want_grad || (!ga && !gb) {
        for i in 0..n {
            a.val[i] = op.apply_binary(a.val[i], b.val[i]);
        }
        return;
    }
    if !ga {
        a.grad.clear();
        a.grad.resize(n * k, 0.0);
        a.has_grad = true;
    }
    for i in 0..n {
        let x = a.val[i];
        let y = b.val[i];
        let z = op.apply_binary(x, y);
        // Partial derivatives of z with respect to x and y.
        let (dx, dy) = match op {
            Op::Add => (1.0, 1.0),
            Op::Sub => (1.0, -1.0),
            Op::Mul => (y, x),
            Op::Div => (1.0 / y, -x / (y * y)),
            Op::Pow => {
                let dx = if y == 0.0 { 0.0 } else { y * x.powf(y - 1.0) };
                let dy = if gb { z * x.ln() } else { 0.0 };
                (dx, dy)
            }
            _ => (f64::NAN, f64::NAN),
        };
        for p in 0..k {
            let idx = p * n + i;
            let mut g = if ga { dx * a.grad[idx] } else { 0.0 };
            if gb {
                g += dy * b.grad[idx];
            }
            a.grad[idx] = g;
        }
        a.val[i] = z;
    }
}
