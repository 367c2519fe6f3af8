//! Reverse-mode automatic differentiation over an operation tape.
//!
//! Values live in an append-only arena of nodes; [`Var`] is a handle into
//! it. Every operation evaluates eagerly when recorded, so a node always
//! holds its value. Inputs of an operation always precede it in the arena,
//! which makes a single reverse sweep a valid backpropagation order.
//!
//! The differentiating feature of this tape is that [`Tape::grad`] emits the
//! backward pass as *new operations on the same tape*. Every vector-Jacobian
//! product is expressed in terms of the tape's own primitives, so gradients
//! are themselves differentiable — calling `grad` on a scalar built from an
//! earlier gradient yields exact second-order derivatives. That closure
//! property is what the Wasserstein gradient penalty needs: the penalty is a
//! function of ∇ₓD(x), and training differentiates it w.r.t. the critic
//! parameters.
//!
//! Numerical guards:
//! * `sqrt`'s backward divides by `max(√v, δ)` with a tiny floor δ instead
//!   of `√v`, so a zero-norm gradient meets an exactly-zero hinge upstream
//!   as `0 · finite = 0` rather than `0 · ∞ = NaN`. The forward value is
//!   untouched.
//! * piecewise-linear activations (`max0`, `min0`) use constant masks in
//!   their backward, i.e. second derivative 0 almost everywhere.

use crate::kernels;
use crate::tensor::{Scalar, Tensor};
use std::cell::RefCell;
use std::sync::Arc;

/// Floor for the reciprocal in `sqrt`'s backward pass.
const SQRT_GRAD_FLOOR: f64 = 1e-30;

/// A linear operator usable as a differentiable tape primitive (the Radon
/// transform and its adjoint enter the network through this trait).
pub trait LinOp<T: Scalar>: Send + Sync {
    fn in_shape(&self) -> Vec<usize>;
    fn out_shape(&self) -> Vec<usize>;
    fn apply(&self, x: &Tensor<T>) -> Tensor<T>;
    fn apply_adjoint(&self, y: &Tensor<T>) -> Tensor<T>;
}

/// Handle to a tape node. Valid only for the tape generation it was
/// created in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    idx: usize,
    gen: u64,
}

#[derive(Clone)]
enum Op<T: Scalar> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Neg(Var),
    Scale(Var, T),
    /// max(x, 0); backward mask is x > 0, constant w.r.t. differentiation.
    Max0(Var),
    /// min(x, 0); backward mask is x < 0.
    Min0(Var),
    Sqrt(Var),
    /// 1 / max(x, floor)
    RecipFloor(Var, T),
    /// Sum of all elements to a rank-0 tensor.
    SumAll(Var),
    /// Rank-0 value replicated to the node's output shape.
    BroadcastAll(Var),
    /// [C,H,W] -> [C], summing over H and W.
    SumHw(Var),
    /// [C] -> [C,H,W], replicating each channel value.
    BroadcastHw(Var),
    /// [C,H,W] scaled per channel by s: [C].
    MulChan(Var, Var),
    /// [C,H,W] plus per-channel bias b: [C].
    AddChan(Var, Var),
    /// Channel concatenation of [Cᵢ,H,W] parts.
    ConcatChan(Vec<Var>),
    /// Channels starting at `offset` of a [C,H,W] tensor.
    SliceChan { x: Var, offset: usize },
    /// Embed [C,H,W] into a wider channel range at `offset`, zeros elsewhere.
    ZeroPadChan { x: Var, offset: usize },
    Conv {
        x: Var,
        w: Var,
        stride: usize,
        pad: usize,
    },
    ConvGradInput {
        gy: Var,
        w: Var,
        stride: usize,
        pad: usize,
    },
    ConvGradKernel {
        x: Var,
        gy: Var,
        stride: usize,
        pad: usize,
    },
    LinMap {
        x: Var,
        op: Arc<dyn LinOp<T>>,
        adjoint: bool,
    },
    Reshape(Var),
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
    /// Leaf marked as differentiation target.
    requires_grad: bool,
    /// True iff some requires_grad leaf is reachable below this node.
    needs: bool,
    /// Populated by [`Tape::backward`] on requires_grad leaves.
    grad: Option<Tensor<T>>,
}

/// Append-only operation arena. Single-writer: record operations from one
/// thread at a time.
pub struct Tape<T: Scalar> {
    nodes: RefCell<Vec<Node<T>>>,
    generation: std::cell::Cell<u64>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            generation: std::cell::Cell::new(0),
        }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn generation(&self) -> u64 {
        self.generation.get()
    }

    /// Drop all nodes and invalidate existing handles.
    pub fn clear(&self) {
        self.nodes.borrow_mut().clear();
        self.generation.set(self.generation.get() + 1);
    }

    fn check(&self, v: Var) -> usize {
        assert_eq!(
            v.gen,
            self.generation.get(),
            "stale Var from tape generation {} used in generation {}",
            v.gen,
            self.generation.get()
        );
        v.idx
    }

    // Non-finite values are allowed to flow through the tape; layers and
    // training loops check for them and surface recoverable diverged errors.
    fn push(&self, value: Tensor<T>, op: Op<T>, requires_grad: bool, needs: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
            needs,
            grad: None,
        });
        Var {
            idx: nodes.len() - 1,
            gen: self.generation.get(),
        }
    }

    fn needs_of(&self, vars: &[Var]) -> bool {
        let nodes = self.nodes.borrow();
        vars.iter().any(|&v| nodes[v.idx].needs)
    }

    /// Record a constant input (no gradient).
    pub fn leaf(&self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false, false)
    }

    /// Record a differentiation target (parameter or probe input).
    pub fn param(&self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true, true)
    }

    pub fn value(&self, v: Var) -> Tensor<T> {
        let idx = self.check(v);
        self.nodes.borrow()[idx].value.clone()
    }

    /// Value of a single-element node.
    pub fn item(&self, v: Var) -> T {
        let idx = self.check(v);
        self.nodes.borrow()[idx].value.item()
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        let idx = self.check(v);
        self.nodes.borrow()[idx].value.shape().to_vec()
    }

    /// Gradient buffer populated by the last [`Tape::backward`] call.
    pub fn grad_of(&self, v: Var) -> Option<Tensor<T>> {
        let idx = self.check(v);
        self.nodes.borrow()[idx].grad.clone()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        let idx = self.check(v);
        self.nodes.borrow()[idx].requires_grad
    }

    // ---- primitive recording -------------------------------------------

    fn eval1(&self, a: Var, f: impl FnOnce(&Tensor<T>) -> Tensor<T>) -> Tensor<T> {
        let ia = self.check(a);
        let nodes = self.nodes.borrow();
        f(&nodes[ia].value)
    }

    fn eval2(&self, a: Var, b: Var, f: impl FnOnce(&Tensor<T>, &Tensor<T>) -> Tensor<T>) -> Tensor<T> {
        let (ia, ib) = (self.check(a), self.check(b));
        let nodes = self.nodes.borrow();
        f(&nodes[ia].value, &nodes[ib].value)
    }

    pub fn add(&self, a: Var, b: Var) -> Var {
        let v = self.eval2(a, b, |x, y| x.zip(y, |p, q| p + q));
        self.push(v, Op::Add(a, b), false, self.needs_of(&[a, b]))
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        let v = self.eval2(a, b, |x, y| x.zip(y, |p, q| p - q));
        self.push(v, Op::Sub(a, b), false, self.needs_of(&[a, b]))
    }

    pub fn mul(&self, a: Var, b: Var) -> Var {
        let v = self.eval2(a, b, |x, y| x.zip(y, |p, q| p * q));
        self.push(v, Op::Mul(a, b), false, self.needs_of(&[a, b]))
    }

    pub fn neg(&self, a: Var) -> Var {
        let v = self.eval1(a, |x| x.map(|p| -p));
        self.push(v, Op::Neg(a), false, self.needs_of(&[a]))
    }

    pub fn scale(&self, a: Var, c: T) -> Var {
        let v = self.eval1(a, |x| x.map(|p| p * c));
        self.push(v, Op::Scale(a, c), false, self.needs_of(&[a]))
    }

    pub fn max0(&self, a: Var) -> Var {
        let v = self.eval1(a, |x| x.map(|p| p.max(T::zero())));
        self.push(v, Op::Max0(a), false, self.needs_of(&[a]))
    }

    pub fn min0(&self, a: Var) -> Var {
        let v = self.eval1(a, |x| x.map(|p| p.min(T::zero())));
        self.push(v, Op::Min0(a), false, self.needs_of(&[a]))
    }

    /// Elementwise square root (inputs must be nonnegative).
    pub fn sqrt(&self, a: Var) -> Var {
        let v = self.eval1(a, |x| x.map(|p| p.sqrt()));
        self.push(v, Op::Sqrt(a), false, self.needs_of(&[a]))
    }

    /// Elementwise 1/max(x, floor).
    pub fn recip_floor(&self, a: Var, floor: T) -> Var {
        let v = self.eval1(a, |x| x.map(|p| (p.max(floor)).recip()));
        self.push(v, Op::RecipFloor(a, floor), false, self.needs_of(&[a]))
    }

    pub fn sum_all(&self, a: Var) -> Var {
        let v = self.eval1(a, |x| Tensor::scalar(x.sum()));
        self.push(v, Op::SumAll(a), false, self.needs_of(&[a]))
    }

    pub fn broadcast_all(&self, a: Var, shape: &[usize]) -> Var {
        let v = self.eval1(a, |x| Tensor::full(shape, x.item()));
        self.push(v, Op::BroadcastAll(a), false, self.needs_of(&[a]))
    }

    pub fn sum_hw(&self, a: Var) -> Var {
        let v = self.eval1(a, |x| {
            let (c, h, w) = kernels::dims3(x);
            Tensor::from_fn(&[c], |ci| x.data()[ci * h * w..(ci + 1) * h * w].iter().copied().sum())
        });
        self.push(v, Op::SumHw(a), false, self.needs_of(&[a]))
    }

    pub fn broadcast_hw(&self, a: Var, h: usize, w: usize) -> Var {
        let v = self.eval1(a, |x| {
            assert_eq!(x.rank(), 1, "broadcast_hw expects a [C] tensor");
            let c = x.shape()[0];
            Tensor::from_fn(&[c, h, w], |i| x.data()[i / (h * w)])
        });
        self.push(v, Op::BroadcastHw(a), false, self.needs_of(&[a]))
    }

    /// Per-channel scaling: x[c,·,·] · s[c].
    pub fn mul_chan(&self, x: Var, s: Var) -> Var {
        let v = self.eval2(x, s, |xv, sv| {
            let (c, h, w) = kernels::dims3(xv);
            assert_eq!(sv.shape(), [c], "per-channel scale must be [C]");
            Tensor::from_fn(&[c, h, w], |i| xv.data()[i] * sv.data()[i / (h * w)])
        });
        self.push(v, Op::MulChan(x, s), false, self.needs_of(&[x, s]))
    }

    /// Per-channel bias: x[c,·,·] + b[c].
    pub fn add_chan(&self, x: Var, b: Var) -> Var {
        let v = self.eval2(x, b, |xv, bv| {
            let (c, h, w) = kernels::dims3(xv);
            assert_eq!(bv.shape(), [c], "per-channel bias must be [C]");
            Tensor::from_fn(&[c, h, w], |i| xv.data()[i] + bv.data()[i / (h * w)])
        });
        self.push(v, Op::AddChan(x, b), false, self.needs_of(&[x, b]))
    }

    pub fn concat_chan(&self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of zero tensors");
        let v = {
            let nodes = self.nodes.borrow();
            let first = &nodes[self.checked_idx(parts[0], &nodes)].value;
            let (_, h, w) = kernels::dims3(first);
            let mut data = Vec::new();
            let mut c_total = 0;
            for &p in parts {
                let t = &nodes[self.checked_idx(p, &nodes)].value;
                let (c, ph, pw) = kernels::dims3(t);
                assert_eq!((ph, pw), (h, w), "concat parts must share spatial size");
                c_total += c;
                data.extend_from_slice(t.data());
            }
            Tensor::from_vec(&[c_total, h, w], data).unwrap()
        };
        self.push(v, Op::ConcatChan(parts.to_vec()), false, self.needs_of(parts))
    }

    fn checked_idx(&self, v: Var, _guard: &[Node<T>]) -> usize {
        assert_eq!(v.gen, self.generation.get(), "stale Var");
        v.idx
    }

    pub fn slice_chan(&self, x: Var, offset: usize, len: usize) -> Var {
        let v = self.eval1(x, |xv| {
            let (c, h, w) = kernels::dims3(xv);
            assert!(offset + len <= c, "channel slice [{offset}, {}) out of {c}", offset + len);
            Tensor::from_vec(
                &[len, h, w],
                xv.data()[offset * h * w..(offset + len) * h * w].to_vec(),
            )
            .unwrap()
        });
        self.push(v, Op::SliceChan { x, offset }, false, self.needs_of(&[x]))
    }

    pub fn zero_pad_chan(&self, x: Var, offset: usize, total: usize) -> Var {
        let v = self.eval1(x, |xv| {
            let (c, h, w) = kernels::dims3(xv);
            assert!(offset + c <= total, "channel embed [{offset}, {}) out of {total}", offset + c);
            let mut out = Tensor::zeros(&[total, h, w]);
            out.data_mut()[offset * h * w..(offset + c) * h * w].copy_from_slice(xv.data());
            out
        });
        self.push(v, Op::ZeroPadChan { x, offset }, false, self.needs_of(&[x]))
    }

    /// Cross-correlation; see [`crate::kernels::conv2d`].
    pub fn conv2d(&self, x: Var, w: Var, stride: usize, pad: usize) -> Var {
        let v = self.eval2(x, w, |xv, wv| kernels::conv2d(xv, wv, stride, pad));
        self.push(v, Op::Conv { x, w, stride, pad }, false, self.needs_of(&[x, w]))
    }

    fn conv2d_grad_input(&self, gy: Var, w: Var, stride: usize, pad: usize, in_hw: (usize, usize)) -> Var {
        let v = self.eval2(gy, w, |g, wv| kernels::conv2d_grad_input(g, wv, stride, pad, in_hw));
        self.push(
            v,
            Op::ConvGradInput { gy, w, stride, pad },
            false,
            self.needs_of(&[gy, w]),
        )
    }

    fn conv2d_grad_kernel(&self, x: Var, gy: Var, stride: usize, pad: usize, k_hw: (usize, usize)) -> Var {
        let v = self.eval2(x, gy, |xv, g| kernels::conv2d_grad_kernel(xv, g, stride, pad, k_hw));
        self.push(
            v,
            Op::ConvGradKernel { x, gy, stride, pad },
            false,
            self.needs_of(&[x, gy]),
        )
    }

    /// Apply a linear operator (or its adjoint) as a differentiable node.
    pub fn lin_map(&self, op: Arc<dyn LinOp<T>>, x: Var, adjoint: bool) -> Var {
        let v = self.eval1(x, |xv| {
            if adjoint {
                op.apply_adjoint(xv)
            } else {
                op.apply(xv)
            }
        });
        self.push(v, Op::LinMap { x, op, adjoint }, false, self.needs_of(&[x]))
    }

    pub fn reshape(&self, x: Var, shape: &[usize]) -> Var {
        let v = self.eval1(x, |xv| xv.reshape(shape).expect("reshape element count mismatch"));
        self.push(v, Op::Reshape(x), false, self.needs_of(&[x]))
    }

    // ---- differentiation ------------------------------------------------

    /// Constant-mask helper for piecewise-linear backward passes.
    fn mask_of(&self, v: Var, pred: impl Fn(T) -> bool) -> Var {
        let m = self.eval1(v, |x| x.map(|p| if pred(p) { T::one() } else { T::zero() }));
        self.leaf(m)
    }

    /// Build the gradient of scalar `out` w.r.t. each var in `wrt` as new
    /// tape nodes, returning one gradient var per requested var
    /// (zero-valued for vars `out` does not depend on).
    ///
    /// The returned gradients are ordinary differentiable nodes: building a
    /// scalar from them and calling `grad` again yields second-order
    /// derivatives.
    pub fn grad(&self, out: Var, wrt: &[Var]) -> Vec<Var> {
        let out_idx = self.check(out);
        {
            let nodes = self.nodes.borrow();
            assert_eq!(
                nodes[out_idx].value.len(),
                1,
                "grad target must be scalar, got shape {:?}",
                nodes[out_idx].value.shape()
            );
        }
        let mut adj: Vec<Option<Var>> = vec![None; out_idx + 1];
        adj[out_idx] = Some(self.leaf(Tensor::full(&self.shape(out), T::one())));

        // Reverse sweep: nodes recorded after `out` cannot feed it, and the
        // VJP nodes emitted below always land beyond `out_idx`, so each
        // recorded operation is visited exactly once.
        for i in (0..=out_idx).rev() {
            let Some(g) = adj[i] else { continue };
            let op = {
                let nodes = self.nodes.borrow();
                if !nodes[i].needs {
                    continue;
                }
                nodes[i].op.clone()
            };
            let send = |tape: &Self, adj: &mut Vec<Option<Var>>, dst: Var, contrib: Var| {
                let j = dst.idx;
                if !tape.nodes.borrow()[j].needs {
                    return;
                }
                adj[j] = Some(match adj[j] {
                    Some(prev) => tape.add(prev, contrib),
                    None => contrib,
                });
            };
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    send(self, &mut adj, a, g);
                    send(self, &mut adj, b, g);
                }
                Op::Sub(a, b) => {
                    send(self, &mut adj, a, g);
                    let nb = self.neg(g);
                    send(self, &mut adj, b, nb);
                }
                Op::Mul(a, b) => {
                    let ga = self.mul(g, b);
                    send(self, &mut adj, a, ga);
                    let gb = self.mul(g, a);
                    send(self, &mut adj, b, gb);
                }
                Op::Neg(a) => {
                    let ga = self.neg(g);
                    send(self, &mut adj, a, ga);
                }
                Op::Scale(a, c) => {
                    let ga = self.scale(g, c);
                    send(self, &mut adj, a, ga);
                }
                Op::Max0(a) => {
                    let mask = self.mask_of(a, |p| p > T::zero());
                    let ga = self.mul(g, mask);
                    send(self, &mut adj, a, ga);
                }
                Op::Min0(a) => {
                    let mask = self.mask_of(a, |p| p < T::zero());
                    let ga = self.mul(g, mask);
                    send(self, &mut adj, a, ga);
                }
                Op::Sqrt(a) => {
                    // d√x = g / (2·√x), with the reciprocal floored so an
                    // exactly-zero upstream gradient stays zero at x = 0.
                    let this = Var { idx: i, gen: self.generation.get() };
                    let r = self.recip_floor(this, T::of_f64(SQRT_GRAD_FLOOR));
                    let half = self.scale(r, T::of_f64(0.5));
                    let ga = self.mul(g, half);
                    send(self, &mut adj, a, ga);
                }
                Op::RecipFloor(a, floor) => {
                    // d(1/max(x,δ)) = −1/x² for x > δ, 0 below the floor.
                    let this = Var { idx: i, gen: self.generation.get() };
                    let sq = self.mul(this, this);
                    let mask = self.mask_of(a, move |p| p > floor);
                    let masked = self.mul(sq, mask);
                    let ga0 = self.mul(g, masked);
                    let ga = self.neg(ga0);
                    send(self, &mut adj, a, ga);
                }
                Op::SumAll(a) => {
                    let shape = self.shape(a);
                    let ga = self.broadcast_all(g, &shape);
                    send(self, &mut adj, a, ga);
                }
                Op::BroadcastAll(a) => {
                    let ga = self.sum_all(g);
                    send(self, &mut adj, a, ga);
                }
                Op::SumHw(a) => {
                    let shape = self.shape(a);
                    let ga = self.broadcast_hw(g, shape[1], shape[2]);
                    send(self, &mut adj, a, ga);
                }
                Op::BroadcastHw(a) => {
                    let ga = self.sum_hw(g);
                    send(self, &mut adj, a, ga);
                }
                Op::MulChan(x, s) => {
                    let gx = self.mul_chan(g, s);
                    send(self, &mut adj, x, gx);
                    let gxv = self.mul(g, x);
                    let gs = self.sum_hw(gxv);
                    send(self, &mut adj, s, gs);
                }
                Op::AddChan(x, b) => {
                    send(self, &mut adj, x, g);
                    let gb = self.sum_hw(g);
                    send(self, &mut adj, b, gb);
                }
                Op::ConcatChan(parts) => {
                    let mut offset = 0;
                    for &p in &parts {
                        let c = self.shape(p)[0];
                        let gp = self.slice_chan(g, offset, c);
                        send(self, &mut adj, p, gp);
                        offset += c;
                    }
                }
                Op::SliceChan { x, offset } => {
                    let total = self.shape(x)[0];
                    let gx = self.zero_pad_chan(g, offset, total);
                    send(self, &mut adj, x, gx);
                }
                Op::ZeroPadChan { x, offset } => {
                    let c = self.shape(x)[0];
                    let gx = self.slice_chan(g, offset, c);
                    send(self, &mut adj, x, gx);
                }
                Op::Conv { x, w, stride, pad } => {
                    let xs = self.shape(x);
                    let gx = self.conv2d_grad_input(g, w, stride, pad, (xs[1], xs[2]));
                    send(self, &mut adj, x, gx);
                    let ws = self.shape(w);
                    let gw = self.conv2d_grad_kernel(x, g, stride, pad, (ws[2], ws[3]));
                    send(self, &mut adj, w, gw);
                }
                Op::ConvGradInput { gy, w, stride, pad } => {
                    // Bilinear in (gy, w): the VJPs are the remaining two
                    // members of the convolution family.
                    let g_gy = self.conv2d(g, w, stride, pad);
                    send(self, &mut adj, gy, g_gy);
                    let ws = self.shape(w);
                    let g_w = self.conv2d_grad_kernel(g, gy, stride, pad, (ws[2], ws[3]));
                    send(self, &mut adj, w, g_w);
                }
                Op::ConvGradKernel { x, gy, stride, pad } => {
                    let xs = self.shape(x);
                    let g_x = self.conv2d_grad_input(gy, g, stride, pad, (xs[1], xs[2]));
                    send(self, &mut adj, x, g_x);
                    let g_gy = self.conv2d(x, g, stride, pad);
                    send(self, &mut adj, gy, g_gy);
                }
                Op::LinMap { x, op, adjoint } => {
                    let gx = self.lin_map(op, g, !adjoint);
                    send(self, &mut adj, x, gx);
                }
                Op::Reshape(x) => {
                    let shape = self.shape(x);
                    let gx = self.reshape(g, &shape);
                    send(self, &mut adj, x, gx);
                }
            }
        }

        wrt.iter()
            .map(|&w| {
                let wi = self.check(w);
                adj.get(wi).copied().flatten().unwrap_or_else(|| {
                    let shape = self.shape(w);
                    self.leaf(Tensor::zeros(&shape))
                })
            })
            .collect()
    }

    /// Populate `grad` buffers of every requires_grad leaf with
    /// ∂out/∂leaf. Leaves that do not influence `out` receive zeros.
    pub fn backward(&self, out: Var) {
        let leaves: Vec<Var> = {
            let nodes = self.nodes.borrow();
            let gen = self.generation.get();
            nodes
                .iter()
                .enumerate()
                .filter(|(_, n)| n.requires_grad)
                .map(|(i, _)| Var { idx: i, gen })
                .collect()
        };
        let grads = self.grad(out, &leaves);
        let values: Vec<Tensor<T>> = grads.iter().map(|&g| self.value(g)).collect();
        let mut nodes = self.nodes.borrow_mut();
        for (v, t) in leaves.into_iter().zip(values) {
            nodes[v.idx].grad = Some(t);
        }
    }
}
