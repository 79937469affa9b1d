//! Forward-over-reverse automatic differentiation.
//!
//! The Sobolev loss needs, per sample, the critic value `Q`, its input
//! gradients `(grad_s Q, grad_a Q)`, and the parameter gradient of all three.
//! Input dimension is tiny (a handful of coordinates) while parameter count
//! is not, so the engine:
//!
//! 1. carries one forward-mode tangent per input coordinate through every
//!    primitive (so `grad_s Q` and `grad_a Q` fall out of a single forward
//!    pass), and
//! 2. runs one reverse sweep over the recorded tape in which each node's
//!    adjoint has a value part *and* a tangent part, yielding the exact
//!    parameter gradient of the value- and gradient-matching terms together.
//!
//! No second-order tangents are ever formed: every primitive here is at most
//! piecewise-linear in its inputs' tangents, and the leaky-ReLU second
//! derivative vanishes away from its kink (at the kink the derivative is
//! defined as the right limit, slope 1).
//!
//! All arithmetic is `f64`; evaluation order is fixed by the tape, so every
//! entry point is bit-deterministic for identical inputs.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::axpy;

/// Named, contiguous segments of a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    segments: Vec<(String, usize, usize)>, // (name, offset, len), offset ascending
    total: usize,
}

impl ParamLayout {
    /// Build from `(name, len)` pairs; offsets are assigned in order.
    pub fn new(segments: &[(&str, usize)]) -> Arc<Self> {
        let mut out = Vec::with_capacity(segments.len());
        let mut offset = 0;
        for (name, len) in segments {
            assert!(
                !out.iter().any(|(n, _, _): &(String, usize, usize)| n == name),
                "duplicate segment name {name}"
            );
            out.push((name.to_string(), offset, *len));
            offset += len;
        }
        Arc::new(ParamLayout {
            segments: out,
            total: offset,
        })
    }

    pub fn total_len(&self) -> usize {
        self.total
    }

    pub fn segments(&self) -> impl Iterator<Item = (&str, usize, usize)> {
        self.segments.iter().map(|(n, o, l)| (n.as_str(), *o, *l))
    }

    /// `(offset, len)` of a named segment.
    pub fn span(&self, name: &str) -> Result<(usize, usize)> {
        self.segments
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, o, l)| (*o, *l))
            .ok_or_else(|| Error::InvalidInput {
                what: "ParamLayout",
                detail: format!("no segment named {name}"),
            })
    }
}

/// Flat parameter vector plus the layout naming its segments.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatParams {
    layout: Arc<ParamLayout>,
    values: Vec<f64>,
}

impl FlatParams {
    pub fn zeros(layout: Arc<ParamLayout>) -> Self {
        let values = vec![0.0; layout.total_len()];
        FlatParams { layout, values }
    }

    pub fn from_values(layout: Arc<ParamLayout>, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.total_len() {
            return Err(Error::DimensionMismatch {
                what: "FlatParams",
                expected: layout.total_len(),
                got: values.len(),
            });
        }
        Ok(FlatParams { layout, values })
    }

    pub fn layout(&self) -> &Arc<ParamLayout> {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn seg(&self, name: &str) -> Result<&[f64]> {
        let (o, l) = self.layout.span(name)?;
        Ok(&self.values[o..o + l])
    }

    pub fn seg_mut(&mut self, name: &str) -> Result<&mut [f64]> {
        let (o, l) = self.layout.span(name)?;
        Ok(&mut self.values[o..o + l])
    }
}

/// Handle to a node on a [`ParamTape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    /// Externally seeded leaf (identity tangents when the tape carries any).
    Input,
    /// Literal values; zero tangents.
    Constant(Vec<f64>),
    /// Element picks (indices may repeat).
    Gather { x: NodeId, idx: Vec<usize> },
    Concat { parts: Vec<NodeId> },
    Add { a: NodeId, b: NodeId },
    /// Elementwise product.
    Mul { a: NodeId, b: NodeId },
    /// Elementwise square.
    Square { x: NodeId },
    Scale { x: NodeId, c: f64 },
    /// `max(x, alpha x)`; slope exactly 1 at `x = 0`.
    LeakyRelu { x: NodeId, alpha: f64 },
    /// `W x + b` with `W` (and optionally `b`) read from parameter segments.
    Affine {
        x: NodeId,
        w_off: usize,
        b_off: Option<usize>,
        rows: usize,
        cols: usize,
    },
    /// Sum of squares, width 1.
    NormSq { x: NodeId },
}

struct Node {
    op: Op,
    /// Node width (number of scalar outputs).
    width: usize,
    value: Vec<f64>,
    /// Tangent-major storage: tangent `k` occupies `tang[k*width..(k+1)*width]`.
    tang: Vec<f64>,
}

/// Append-only record of one batched model evaluation.
///
/// Nodes only ever reference earlier nodes, so iterating indices in reverse is
/// a reverse-topological sweep by construction. Parameters are borrowed, not
/// copied: the reverse sweep re-reads weights from the same storage the
/// forward pass used.
pub struct ParamTape<'p> {
    params: &'p FlatParams,
    n_tangents: usize,
    nodes: Vec<Node>,
}

/// Adjoint seed for one scalar (width-1) output node.
pub struct AdjointSeed {
    pub node: NodeId,
    /// d(objective)/d(node value).
    pub value: f64,
    /// d(objective)/d(node tangent k), one entry per tape tangent.
    pub tangents: Vec<f64>,
}

impl<'p> ParamTape<'p> {
    pub fn new(params: &'p FlatParams, n_tangents: usize) -> Self {
        ParamTape {
            params,
            n_tangents,
            nodes: Vec::new(),
        }
    }

    pub fn n_tangents(&self) -> usize {
        self.n_tangents
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn width(&self, id: NodeId) -> usize {
        self.nodes[id.0].width
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    /// Tangent `k` of a node (empty tapes carry no tangents).
    pub fn tangent(&self, id: NodeId, k: usize) -> &[f64] {
        let n = &self.nodes[id.0];
        &n.tang[k * n.width..(k + 1) * n.width]
    }

    fn push(&mut self, op: Op, width: usize, value: Vec<f64>, tang: Vec<f64>) -> NodeId {
        debug_assert_eq!(value.len(), width);
        debug_assert_eq!(tang.len(), width * self.n_tangents);
        self.nodes.push(Node {
            op,
            width,
            value,
            tang,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Leaf with identity tangent seeding: coordinate `i` carries tangent
    /// `e_i`. Requires the tape's tangent count to equal the input width, or
    /// zero for a value-only tape.
    pub fn input_identity(&mut self, values: &[f64]) -> Result<NodeId> {
        let w = values.len();
        if self.n_tangents != 0 && self.n_tangents != w {
            return Err(Error::DimensionMismatch {
                what: "ParamTape input",
                expected: self.n_tangents,
                got: w,
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput {
                what: "ParamTape input",
                detail: "input values must be finite".to_string(),
            });
        }
        let mut tang = vec![0.0; w * self.n_tangents];
        for k in 0..self.n_tangents {
            tang[k * w + k] = 1.0;
        }
        Ok(self.push(Op::Input, w, values.to_vec(), tang))
    }

    /// Constant leaf (zero tangents).
    pub fn constant(&mut self, values: &[f64]) -> NodeId {
        let w = values.len();
        let tang = vec![0.0; w * self.n_tangents];
        self.push(
            Op::Constant(values.to_vec()),
            w,
            values.to_vec(),
            tang,
        )
    }

    pub fn gather(&mut self, x: NodeId, idx: &[usize]) -> NodeId {
        let xw = self.width(x);
        assert!(idx.iter().all(|&i| i < xw), "gather index out of range");
        let op = Op::Gather {
            x,
            idx: idx.to_vec(),
        };
        let (value, tang) = self.compute(&op);
        self.push(op, idx.len(), value, tang)
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let w: usize = parts.iter().map(|&p| self.width(p)).sum();
        let op = Op::Concat {
            parts: parts.to_vec(),
        };
        let (value, tang) = self.compute(&op);
        self.push(op, w, value, tang)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.width(a), self.width(b), "add width mismatch");
        let w = self.width(a);
        let op = Op::Add { a, b };
        let (value, tang) = self.compute(&op);
        self.push(op, w, value, tang)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.width(a), self.width(b), "mul width mismatch");
        let w = self.width(a);
        let op = Op::Mul { a, b };
        let (value, tang) = self.compute(&op);
        self.push(op, w, value, tang)
    }

    pub fn square(&mut self, x: NodeId) -> NodeId {
        let w = self.width(x);
        let op = Op::Square { x };
        let (value, tang) = self.compute(&op);
        self.push(op, w, value, tang)
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let w = self.width(x);
        let op = Op::Scale { x, c };
        let (value, tang) = self.compute(&op);
        self.push(op, w, value, tang)
    }

    pub fn leaky_relu(&mut self, x: NodeId, alpha: f64) -> NodeId {
        let w = self.width(x);
        let op = Op::LeakyRelu { x, alpha };
        let (value, tang) = self.compute(&op);
        self.push(op, w, value, tang)
    }

    /// `W x (+ b)` with `W` stored row-major in segment `w_seg`. The row
    /// count is inferred from the segment length divided by the input width.
    pub fn affine(&mut self, x: NodeId, w_seg: &str, b_seg: Option<&str>) -> Result<NodeId> {
        let cols = self.width(x);
        let (w_off, w_len) = self.params.layout().span(w_seg)?;
        if cols == 0 || w_len % cols != 0 {
            return Err(Error::DimensionMismatch {
                what: "affine weight segment",
                expected: cols.max(1),
                got: w_len,
            });
        }
        let rows = w_len / cols;
        let b_off = match b_seg {
            Some(name) => {
                let (b_off, b_len) = self.params.layout().span(name)?;
                if b_len != rows {
                    return Err(Error::DimensionMismatch {
                        what: "affine bias segment",
                        expected: rows,
                        got: b_len,
                    });
                }
                Some(b_off)
            }
            None => None,
        };
        let op = Op::Affine {
            x,
            w_off,
            b_off,
            rows,
            cols,
        };
        let (value, tang) = self.compute(&op);
        Ok(self.push(op, rows, value, tang))
    }

    pub fn norm_sq(&mut self, x: NodeId) -> NodeId {
        let op = Op::NormSq { x };
        let (value, tang) = self.compute(&op);
        self.push(op, 1, value, tang)
    }

    /// Forward evaluation of one op from its predecessors' stored state.
    /// Shared by recording and by [`replay`](Self::replay), so a replay is
    /// bit-identical by construction unless node state was corrupted.
    fn compute(&self, op: &Op) -> (Vec<f64>, Vec<f64>) {
        let d = self.n_tangents;
        match op {
            Op::Input => unreachable!("inputs are seeded, not computed"),
            Op::Constant(v) => (v.clone(), vec![0.0; v.len() * d]),
            Op::Gather { x, idx } => {
                let xn = &self.nodes[x.0];
                let w = idx.len();
                let value: Vec<f64> = idx.iter().map(|&i| xn.value[i]).collect();
                let mut tang = vec![0.0; w * d];
                for k in 0..d {
                    let src = &xn.tang[k * xn.width..(k + 1) * xn.width];
                    for (j, &i) in idx.iter().enumerate() {
                        tang[k * w + j] = src[i];
                    }
                }
                (value, tang)
            }
            Op::Concat { parts } => {
                let w: usize = parts.iter().map(|&p| self.nodes[p.0].width).sum();
                let mut value = Vec::with_capacity(w);
                let mut tang = vec![0.0; w * d];
                let mut at = 0;
                for &p in parts {
                    let pn = &self.nodes[p.0];
                    value.extend_from_slice(&pn.value);
                    for k in 0..d {
                        let src = &pn.tang[k * pn.width..(k + 1) * pn.width];
                        tang[k * w + at..k * w + at + pn.width].copy_from_slice(src);
                    }
                    at += pn.width;
                }
                (value, tang)
            }
            Op::Add { a, b } => {
                let an = &self.nodes[a.0];
                let bn = &self.nodes[b.0];
                let value = an
                    .value
                    .iter()
                    .zip(&bn.value)
                    .map(|(x, y)| x + y)
                    .collect();
                let tang = an.tang.iter().zip(&bn.tang).map(|(x, y)| x + y).collect();
                (value, tang)
            }
            Op::Mul { a, b } => {
                let an = &self.nodes[a.0];
                let bn = &self.nodes[b.0];
                let w = an.width;
                let value: Vec<f64> = an
                    .value
                    .iter()
                    .zip(&bn.value)
                    .map(|(x, y)| x * y)
                    .collect();
                let mut tang = vec![0.0; w * d];
                for k in 0..d {
                    for j in 0..w {
                        // Product rule: (ab)' = a' b + a b'.
                        tang[k * w + j] = an.tang[k * w + j] * bn.value[j]
                            + an.value[j] * bn.tang[k * w + j];
                    }
                }
                (value, tang)
            }
            Op::Square { x } => {
                let xn = &self.nodes[x.0];
                let w = xn.width;
                let value: Vec<f64> = xn.value.iter().map(|v| v * v).collect();
                let mut tang = vec![0.0; w * d];
                for k in 0..d {
                    for j in 0..w {
                        tang[k * w + j] = 2.0 * xn.value[j] * xn.tang[k * w + j];
                    }
                }
                (value, tang)
            }
            Op::Scale { x, c } => {
                let xn = &self.nodes[x.0];
                let value = xn.value.iter().map(|v| c * v).collect();
                let tang = xn.tang.iter().map(|v| c * v).collect();
                (value, tang)
            }
            Op::LeakyRelu { x, alpha } => {
                let xn = &self.nodes[x.0];
                let w = xn.width;
                let value: Vec<f64> = xn
                    .value
                    .iter()
                    .map(|&v| if v >= 0.0 { v } else { alpha * v })
                    .collect();
                let mut tang = vec![0.0; w * d];
                for k in 0..d {
                    for j in 0..w {
                        let slope = if xn.value[j] >= 0.0 { 1.0 } else { *alpha };
                        tang[k * w + j] = slope * xn.tang[k * w + j];
                    }
                }
                (value, tang)
            }
            Op::Affine {
                x,
                w_off,
                b_off,
                rows,
                cols,
            } => {
                let xn = &self.nodes[x.0];
                let pvals = self.params.values();
                let mut value = vec![0.0; *rows];
                for i in 0..*rows {
                    let wrow = &pvals[w_off + i * cols..w_off + (i + 1) * cols];
                    let mut acc = match b_off {
                        Some(bo) => pvals[bo + i],
                        None => 0.0,
                    };
                    for (wv, xv) in wrow.iter().zip(&xn.value) {
                        acc += wv * xv;
                    }
                    value[i] = acc;
                }
                let mut tang = vec![0.0; rows * d];
                for k in 0..d {
                    let xt = &xn.tang[k * xn.width..(k + 1) * xn.width];
                    for i in 0..*rows {
                        let wrow = &pvals[w_off + i * cols..w_off + (i + 1) * cols];
                        let mut acc = 0.0;
                        for (wv, tv) in wrow.iter().zip(xt) {
                            acc += wv * tv;
                        }
                        tang[k * rows + i] = acc;
                    }
                }
                (value, tang)
            }
            Op::NormSq { x } => {
                let xn = &self.nodes[x.0];
                let value = vec![xn.value.iter().map(|v| v * v).sum()];
                let mut tang = vec![0.0; d];
                for (k, tk) in tang.iter_mut().enumerate() {
                    let xt = &xn.tang[k * xn.width..(k + 1) * xn.width];
                    *tk = 2.0
                        * xn.value
                            .iter()
                            .zip(xt)
                            .map(|(v, t)| v * t)
                            .sum::<f64>();
                }
                (value, tang)
            }
        }
    }

    /// Recompute every non-leaf node from its predecessors and compare with
    /// the recorded state bit-for-bit. Returns the first mismatching node.
    pub fn replay(&self) -> std::result::Result<(), NodeId> {
        for (i, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Input) {
                continue;
            }
            let (value, tang) = self.compute(&node.op);
            let same = value
                .iter()
                .zip(&node.value)
                .all(|(a, b)| a.to_bits() == b.to_bits())
                && tang
                    .iter()
                    .zip(&node.tang)
                    .all(|(a, b)| a.to_bits() == b.to_bits());
            if !same {
                return Err(NodeId(i));
            }
        }
        Ok(())
    }

    /// Every non-leaf node references only strictly earlier nodes; violation
    /// would break the reverse-topological sweep.
    pub fn check_topological(&self) -> bool {
        self.nodes.iter().enumerate().all(|(i, n)| {
            let pred_ok = |p: &NodeId| p.0 < i;
            match &n.op {
                Op::Input | Op::Constant(_) => true,
                Op::Gather { x, .. }
                | Op::Square { x }
                | Op::Scale { x, .. }
                | Op::LeakyRelu { x, .. }
                | Op::Affine { x, .. }
                | Op::NormSq { x } => pred_ok(x),
                Op::Concat { parts } => parts.iter().all(pred_ok),
                Op::Add { a, b } | Op::Mul { a, b } => pred_ok(a) && pred_ok(b),
            }
        })
    }

    /// Reverse sweep: seed scalar outputs with `(value_bar, tangent_bar)`
    /// adjoints, walk the tape once in strict reverse order, and accumulate
    /// `d(objective)/d(params)` into `grad` (length of the full flat vector).
    ///
    /// Tangent adjoints flow because the objective reads tangents directly
    /// (the gradient-matching terms); their pullback through each primitive
    /// uses only first derivatives since every tangent rule is linear in the
    /// incoming tangents, except leaky-ReLU whose curvature term is zero away
    /// from the kink (and defined as zero at it).
    pub fn reverse_sweep(&self, seeds: &[AdjointSeed], grad: &mut [f64]) -> Result<()> {
        if grad.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                what: "reverse_sweep grad",
                expected: self.params.len(),
                got: grad.len(),
            });
        }
        let d = self.n_tangents;
        let mut vbar: Vec<Vec<f64>> = self.nodes.iter().map(|n| vec![0.0; n.width]).collect();
        let mut tbar: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|n| vec![0.0; n.width * d])
            .collect();
        for seed in seeds {
            let n = &self.nodes[seed.node.0];
            if n.width != 1 {
                return Err(Error::InvalidInput {
                    what: "reverse_sweep",
                    detail: format!("seeded node has width {}, expected 1", n.width),
                });
            }
            if seed.tangents.len() != d {
                return Err(Error::DimensionMismatch {
                    what: "reverse_sweep tangent seed",
                    expected: d,
                    got: seed.tangents.len(),
                });
            }
            vbar[seed.node.0][0] += seed.value;
            for (tb, &st) in tbar[seed.node.0].iter_mut().zip(&seed.tangents) {
                *tb += st;
            }
        }
        for i in (0..self.nodes.len()).rev() {
            // Split off this node's adjoints so predecessors stay mutable.
            let zv = std::mem::take(&mut vbar[i]);
            let zt = std::mem::take(&mut tbar[i]);
            let node = &self.nodes[i];
            match &node.op {
                Op::Input | Op::Constant(_) => {}
                Op::Gather { x, idx } => {
                    let xw = self.nodes[x.0].width;
                    for (j, &src) in idx.iter().enumerate() {
                        vbar[x.0][src] += zv[j];
                    }
                    for k in 0..d {
                        for (j, &src) in idx.iter().enumerate() {
                            tbar[x.0][k * xw + src] += zt[k * node.width + j];
                        }
                    }
                }
                Op::Concat { parts } => {
                    let mut at = 0;
                    for &p in parts {
                        let pw = self.nodes[p.0].width;
                        for j in 0..pw {
                            vbar[p.0][j] += zv[at + j];
                        }
                        for k in 0..d {
                            for j in 0..pw {
                                tbar[p.0][k * pw + j] += zt[k * node.width + at + j];
                            }
                        }
                        at += pw;
                    }
                }
                Op::Add { a, b } => {
                    for (dst, src) in vbar[a.0].iter_mut().zip(&zv) {
                        *dst += src;
                    }
                    for (dst, src) in tbar[a.0].iter_mut().zip(&zt) {
                        *dst += src;
                    }
                    for (dst, src) in vbar[b.0].iter_mut().zip(&zv) {
                        *dst += src;
                    }
                    for (dst, src) in tbar[b.0].iter_mut().zip(&zt) {
                        *dst += src;
                    }
                }
                Op::Mul { a, b } => {
                    let w = node.width;
                    // z = a.b (elementwise), z.t = a.t b + a b.t:
                    //   abar.v += b zv + sum_k zt_k b.t_k ; abar.t_k += b zt_k
                    // and symmetrically for b.
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    let at_all = &self.nodes[a.0].tang;
                    let bt_all = &self.nodes[b.0].tang;
                    for j in 0..w {
                        vbar[a.0][j] += bv[j] * zv[j];
                        vbar[b.0][j] += av[j] * zv[j];
                    }
                    for k in 0..d {
                        for j in 0..w {
                            let ztk = zt[k * w + j];
                            vbar[a.0][j] += ztk * bt_all[k * w + j];
                            vbar[b.0][j] += ztk * at_all[k * w + j];
                            tbar[a.0][k * w + j] += bv[j] * ztk;
                            tbar[b.0][k * w + j] += av[j] * ztk;
                        }
                    }
                }
                Op::Square { x } => {
                    let w = node.width;
                    let xv = &self.nodes[x.0].value;
                    let xt_all = &self.nodes[x.0].tang;
                    for j in 0..w {
                        vbar[x.0][j] += 2.0 * xv[j] * zv[j];
                    }
                    for k in 0..d {
                        for j in 0..w {
                            let ztk = zt[k * w + j];
                            vbar[x.0][j] += 2.0 * xt_all[k * w + j] * ztk;
                            tbar[x.0][k * w + j] += 2.0 * xv[j] * ztk;
                        }
                    }
                }
                Op::Scale { x, c } => {
                    for (dst, src) in vbar[x.0].iter_mut().zip(&zv) {
                        *dst += c * src;
                    }
                    for (dst, src) in tbar[x.0].iter_mut().zip(&zt) {
                        *dst += c * src;
                    }
                }
                Op::LeakyRelu { x, alpha } => {
                    let w = node.width;
                    let xv = &self.nodes[x.0].value;
                    for j in 0..w {
                        let slope = if xv[j] >= 0.0 { 1.0 } else { *alpha };
                        vbar[x.0][j] += slope * zv[j];
                    }
                    // The tangent rule slope(x) * x.t has zero derivative in x
                    // away from the kink, so no curvature term appears here.
                    for k in 0..d {
                        for j in 0..w {
                            let slope = if xv[j] >= 0.0 { 1.0 } else { *alpha };
                            tbar[x.0][k * w + j] += slope * zt[k * w + j];
                        }
                    }
                }
                Op::Affine {
                    x,
                    w_off,
                    b_off,
                    rows,
                    cols,
                } => {
                    let pvals = self.params.values();
                    let xw = self.nodes[x.0].width;
                    let xv = &self.nodes[x.0].value;
                    let xt_all = &self.nodes[x.0].tang;
                    // Input adjoints: xbar.v += W^T zv, xbar.t_k += W^T zt_k.
                    for i in 0..*rows {
                        let wrow = &pvals[w_off + i * cols..w_off + (i + 1) * cols];
                        axpy(&mut vbar[x.0], zv[i], wrow);
                        for k in 0..d {
                            let dst = &mut tbar[x.0][k * xw..(k + 1) * xw];
                            axpy(dst, zt[k * node.width + i], wrow);
                        }
                    }
                    // Parameter adjoints. The value path contributes
                    // zv x^T; each tangent path contributes zt_k (x.t_k)^T
                    // because z.t_k = W x.t_k also reads W.
                    for i in 0..*rows {
                        let grow = &mut grad[w_off + i * cols..w_off + (i + 1) * cols];
                        axpy(grow, zv[i], xv);
                        for k in 0..d {
                            let xt = &xt_all[k * xw..(k + 1) * xw];
                            axpy(grow, zt[k * node.width + i], xt);
                        }
                    }
                    if let Some(bo) = b_off {
                        for i in 0..*rows {
                            grad[bo + i] += zv[i];
                        }
                    }
                }
                Op::NormSq { x } => {
                    let xw = self.nodes[x.0].width;
                    let xv = &self.nodes[x.0].value;
                    let xt_all = &self.nodes[x.0].tang;
                    for j in 0..xw {
                        vbar[x.0][j] += 2.0 * xv[j] * zv[0];
                    }
                    for k in 0..d {
                        let ztk = zt[k];
                        for j in 0..xw {
                            vbar[x.0][j] += 2.0 * xt_all[k * xw + j] * ztk;
                            tbar[x.0][k * xw + j] += 2.0 * xv[j] * ztk;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Evaluation contract every critic architecture implements.
///
/// A critic is a scalar function of `(s, a)` with parameters stored flat; the
/// trait exposes enough to record it on a tape (for gradients) and to evaluate
/// it cheaply by value (for argmax scans, which need no derivatives).
pub trait CriticModel {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn layout(&self) -> &Arc<ParamLayout>;

    /// Record the critic at the given input node (`[s; a]` concatenated) and
    /// return the scalar output node.
    fn record(&self, tape: &mut ParamTape<'_>, sa: NodeId) -> Result<NodeId>;

    /// Plain value, no tape, no tangents.
    fn value(&self, params: &FlatParams, s: &[f64], a: &[f64]) -> f64;

    /// `Q(s, a_j)` for a fixed state over many actions (`actions` holds the
    /// actions back to back, `action_dim` entries each). The default loops
    /// [`value`](Self::value); batched architectures override it.
    fn value_action_scan(&self, params: &FlatParams, s: &[f64], actions: &[f64]) -> Vec<f64> {
        let m = self.action_dim();
        assert_eq!(actions.len() % m, 0, "ragged action block");
        actions
            .chunks_exact(m)
            .map(|a| self.value(params, s, a))
            .collect()
    }
}

fn check_model_inputs<M: CriticModel + ?Sized>(
    model: &M,
    params: &FlatParams,
    s: &[f64],
    a: &[f64],
) -> Result<()> {
    if s.len() != model.state_dim() {
        return Err(Error::DimensionMismatch {
            what: "critic state input",
            expected: model.state_dim(),
            got: s.len(),
        });
    }
    if a.len() != model.action_dim() {
        return Err(Error::DimensionMismatch {
            what: "critic action input",
            expected: model.action_dim(),
            got: a.len(),
        });
    }
    if params.len() != model.layout().total_len() {
        return Err(Error::DimensionMismatch {
            what: "critic params",
            expected: model.layout().total_len(),
            got: params.len(),
        });
    }
    Ok(())
}

/// `(Q, grad_s Q, grad_a Q)` from one tangent-carrying forward pass: the tape
/// seeds one tangent per input coordinate, so the gradients are read off the
/// output node without any reverse sweep.
pub fn eval_with_input_grads<M: CriticModel + ?Sized>(
    model: &M,
    params: &FlatParams,
    s: &[f64],
    a: &[f64],
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    check_model_inputs(model, params, s, a)?;
    let (ds, da) = (s.len(), a.len());
    let mut tape = ParamTape::new(params, ds + da);
    let mut sa = Vec::with_capacity(ds + da);
    sa.extend_from_slice(s);
    sa.extend_from_slice(a);
    let input = tape.input_identity(&sa)?;
    let out = model.record(&mut tape, input)?;
    if tape.width(out) != 1 {
        return Err(Error::InvalidInput {
            what: "eval_with_input_grads",
            detail: format!("critic output width {} (want scalar)", tape.width(out)),
        });
    }
    let q = tape.value(out)[0];
    let gs = (0..ds).map(|k| tape.tangent(out, k)[0]).collect();
    let ga = (ds..ds + da).map(|k| tape.tangent(out, k)[0]).collect();
    Ok((q, gs, ga))
}

/// One training sample for the loss entry points: inputs plus a first-order
/// target `(y, dy_ds, dy_da)`. The value-only path ignores the `dy` slices.
pub struct LossSample<'a> {
    pub s: &'a [f64],
    pub a: &'a [f64],
    pub y: f64,
    pub dy_ds: &'a [f64],
    pub dy_da: &'a [f64],
}

/// Batch-mean Sobolev loss and its exact parameter gradient:
///
/// ```text
/// L = mean_i [ (Q_i - y_i)^2 + lambda_s ||grad_s Q_i - dy_ds_i||^2
///                            + lambda_a ||grad_a Q_i - dy_da_i||^2 ]
/// ```
///
/// The whole batch is recorded on one tape; a single reverse sweep with both
/// value and tangent adjoint seeds produces `dL/dparams`, including the
/// dependence of `grad Q` on the parameters.
pub fn sobolev_loss_and_param_grads<M: CriticModel + ?Sized>(
    model: &M,
    params: &FlatParams,
    batch: &[LossSample<'_>],
    lambda_s: f64,
    lambda_a: f64,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::InvalidInput {
            what: "sobolev_loss_and_param_grads",
            detail: "empty batch".to_string(),
        });
    }
    for lam in [lambda_s, lambda_a] {
        if !(lam >= 0.0 && lam.is_finite()) {
            return Err(Error::InvalidInput {
                what: "sobolev_loss_and_param_grads",
                detail: format!("lambda must be finite and non-negative, got {lam}"),
            });
        }
    }
    let (ds, da) = (model.state_dim(), model.action_dim());
    let d = ds + da;
    let b = batch.len() as f64;
    let mut tape = ParamTape::new(params, d);
    let mut seeds = Vec::with_capacity(batch.len());
    let mut loss_acc = 0.0;
    let mut sa = vec![0.0; d];
    for sample in batch {
        check_model_inputs(model, params, sample.s, sample.a)?;
        if sample.dy_ds.len() != ds || sample.dy_da.len() != da {
            return Err(Error::DimensionMismatch {
                what: "first-order target",
                expected: d,
                got: sample.dy_ds.len() + sample.dy_da.len(),
            });
        }
        sa[..ds].copy_from_slice(sample.s);
        sa[ds..].copy_from_slice(sample.a);
        let input = tape.input_identity(&sa)?;
        let out = model.record(&mut tape, input)?;
        let q = tape.value(out)[0];
        let vd = q - sample.y;
        let mut ns = 0.0;
        let mut na = 0.0;
        let mut tangent_seed = vec![0.0; d];
        for (k, dy) in sample.dy_ds.iter().enumerate() {
            let diff = tape.tangent(out, k)[0] - dy;
            ns += diff * diff;
            tangent_seed[k] = 2.0 * lambda_s * diff / b;
        }
        for (j, k) in (ds..d).enumerate() {
            let diff = tape.tangent(out, k)[0] - sample.dy_da[j];
            na += diff * diff;
            tangent_seed[k] = 2.0 * lambda_a * diff / b;
        }
        // With both lambdas zero the two extra terms are exactly +0.0, so the
        // sum is bit-identical to the bare squared value error.
        loss_acc += vd * vd + lambda_s * ns + lambda_a * na;
        seeds.push(AdjointSeed {
            node: out,
            value: 2.0 * vd / b,
            tangents: tangent_seed,
        });
    }
    let mut grad = vec![0.0; params.len()];
    tape.reverse_sweep(&seeds, &mut grad)?;
    Ok((loss_acc / b, grad))
}

/// Plain mean-squared value loss and its parameter gradient, with no tangent
/// machinery: the tape carries zero tangents, so only value adjoints exist.
/// This is the independent baseline path the Sobolev loss must reduce to when
/// both lambdas are zero.
pub fn value_loss_and_param_grads<M: CriticModel + ?Sized>(
    model: &M,
    params: &FlatParams,
    batch: &[LossSample<'_>],
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::InvalidInput {
            what: "value_loss_and_param_grads",
            detail: "empty batch".to_string(),
        });
    }
    let (ds, da) = (model.state_dim(), model.action_dim());
    let b = batch.len() as f64;
    let mut tape = ParamTape::new(params, 0);
    let mut seeds = Vec::with_capacity(batch.len());
    let mut loss_acc = 0.0;
    let mut sa = vec![0.0; ds + da];
    for sample in batch {
        check_model_inputs(model, params, sample.s, sample.a)?;
        sa[..ds].copy_from_slice(sample.s);
        sa[ds..].copy_from_slice(sample.a);
        let input = tape.input_identity(&sa)?;
        let out = model.record(&mut tape, input)?;
        let q = tape.value(out)[0];
        let vd = q - sample.y;
        loss_acc += vd * vd;
        seeds.push(AdjointSeed {
            node: out,
            value: 2.0 * vd / b,
            tangents: Vec::new(),
        });
    }
    let mut grad = vec![0.0; params.len()];
    tape.reverse_sweep(&seeds, &mut grad)?;
    Ok((loss_acc / b, grad))
}

/// Central-difference gradient of a black-box scalar function:
/// `g_i = (f(x + h e_i) - f(x - h e_i)) / (2h)`.
pub fn finite_difference_gradient<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput {
            what: "finite_difference_gradient",
            detail: format!("step must be positive and finite, got {h}"),
        });
    }
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        grad[i] = (fp - fm) / (2.0 * h);
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    /// Small model exercising every primitive: state dim 2, action dim 1.
    ///
    /// With x = [s0, s1, a]:
    ///   p  = gather(x, [0, 2])            (s0, a)
    ///   qq = gather(x, [1, 1])            (s1, s1)  -- repeated index
    ///   m  = p * qq
    ///   sq = p^2
    ///   t  = 1.7 * m + sq
    ///   c  = concat(t, m)                 width 4
    ///   l  = leaky_relu(c, 0.01)
    ///   z  = W l + b                      W: 2x4, b: 2
    ///   out= ||z||^2
    struct Kitchen {
        layout: Arc<ParamLayout>,
    }

    impl Kitchen {
        fn new() -> Self {
            Kitchen {
                layout: ParamLayout::new(&[("w", 8), ("b", 2)]),
            }
        }
    }

    impl CriticModel for Kitchen {
        fn state_dim(&self) -> usize {
            2
        }
        fn action_dim(&self) -> usize {
            1
        }
        fn layout(&self) -> &Arc<ParamLayout> {
            &self.layout
        }
        fn record(&self, tape: &mut ParamTape<'_>, sa: NodeId) -> Result<NodeId> {
            let p = tape.gather(sa, &[0, 2]);
            let qq = tape.gather(sa, &[1, 1]);
            let m = tape.mul(p, qq);
            let sq = tape.square(p);
            let scaled = tape.scale(m, 1.7);
            let t = tape.add(scaled, sq);
            let c = tape.concat(&[t, m]);
            let l = tape.leaky_relu(c, 0.01);
            let z = tape.affine(l, "w", Some("b"))?;
            Ok(tape.norm_sq(z))
        }
        fn value(&self, params: &FlatParams, s: &[f64], a: &[f64]) -> f64 {
            let mut tape = ParamTape::new(params, 0);
            let mut sa = s.to_vec();
            sa.extend_from_slice(a);
            let input = tape.input_identity(&sa).unwrap();
            let out = self.record(&mut tape, input).unwrap();
            tape.value(out)[0]
        }
    }

    fn kitchen_params(rng: &mut ChaCha8Rng, model: &Kitchen) -> FlatParams {
        let vals: Vec<f64> = (0..model.layout.total_len())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        FlatParams::from_values(model.layout.clone(), vals).unwrap()
    }

    /// Reject points whose leaky-ReLU pre-activations sit near the kink, so
    /// finite differences see a locally smooth function.
    fn kink_clear(s: &[f64], a: &[f64]) -> bool {
        // The ReLU input is c = [1.7 m + p^2, m] with p = (s0, a), q = (s1, s1).
        let (p0, p1) = (s[0], a[0]);
        let q = s[1];
        let m = [p0 * q, p1 * q];
        let c = [1.7 * m[0] + p0 * p0, 1.7 * m[1] + p1 * p1, m[0], m[1]];
        c.iter().all(|v| v.abs() > 1e-3)
    }

    #[test]
    fn worked_examples_quadratic_values() {
        // Q(s, a) = a^2 represented directly on a tape.
        let layout = ParamLayout::new(&[("theta", 1)]);
        let params = FlatParams::from_values(layout, vec![1.0]).unwrap();
        let mut tape = ParamTape::new(&params, 2);
        let input = tape.input_identity(&[0.3, 0.5]).unwrap();
        let a_part = tape.gather(input, &[1]);
        let sq = tape.square(a_part);
        assert_close(tape.value(sq)[0], 0.25, 1e-15);
        assert_close(tape.tangent(sq, 0)[0], 0.0, 0.0);
        assert_close(tape.tangent(sq, 1)[0], 1.0, 1e-15);
    }

    #[test]
    fn input_tangents_match_finite_differences_at_many_points() {
        let model = Kitchen::new();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < 1000 {
            let params = kitchen_params(&mut rng, &model);
            let s = [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)];
            let a = [rng.gen_range(-1.5..1.5)];
            if !kink_clear(&s, &a) {
                continue;
            }
            let (_, gs, ga) = eval_with_input_grads(&model, &params, &s, &a).unwrap();
            let f = |x: &[f64]| model.value(&params, &x[..2], &x[2..]);
            let fd = finite_difference_gradient(f, &[s[0], s[1], a[0]], 1e-6).unwrap();
            let scale = fd.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            assert!((gs[0] - fd[0]).abs() / scale <= 1e-6, "ds0 mismatch");
            assert!((gs[1] - fd[1]).abs() / scale <= 1e-6, "ds1 mismatch");
            assert!((ga[0] - fd[2]).abs() / scale <= 1e-6, "da mismatch");
            checked += 1;
        }
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let model = Kitchen::new();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..25 {
            let params = kitchen_params(&mut rng, &model);
            let mut samples_data = Vec::new();
            let mut ok = true;
            for _ in 0..4 {
                let s = [rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2)];
                let a = [rng.gen_range(-1.2..1.2)];
                ok &= kink_clear(&s, &a);
                samples_data.push((
                    s.to_vec(),
                    a.to_vec(),
                    rng.gen_range(-1.0..1.0),
                    vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                    vec![rng.gen_range(-1.0..1.0)],
                ));
            }
            if !ok {
                continue;
            }
            let batch: Vec<LossSample> = samples_data
                .iter()
                .map(|(s, a, y, dys, dya)| LossSample {
                    s,
                    a,
                    y: *y,
                    dy_ds: dys,
                    dy_da: dya,
                })
                .collect();
            let (lambda_s, lambda_a) = (0.7, 1.3);
            let (_, grad) =
                sobolev_loss_and_param_grads(&model, &params, &batch, lambda_s, lambda_a).unwrap();
            let loss_of = |pv: &[f64]| {
                let p = FlatParams::from_values(model.layout.clone(), pv.to_vec()).unwrap();
                sobolev_loss_and_param_grads(&model, &p, &batch, lambda_s, lambda_a)
                    .unwrap()
                    .0
            };
            let fd = finite_difference_gradient(loss_of, params.values(), 1e-6).unwrap();
            let scale = fd.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for (g, f) in grad.iter().zip(&fd) {
                assert!(
                    (g - f).abs() / scale <= 1e-5,
                    "param grad {g} vs fd {f} (scale {scale})"
                );
            }
        }
    }

    #[test]
    fn zero_lambda_loss_equals_value_only_path_exactly() {
        let model = Kitchen::new();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let params = kitchen_params(&mut rng, &model);
            let samples_data: Vec<_> = (0..6)
                .map(|_| {
                    (
                        vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                        vec![rng.gen_range(-1.0..1.0)],
                        rng.gen_range(-2.0..2.0),
                        vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                        vec![rng.gen_range(-1.0..1.0)],
                    )
                })
                .collect();
            let batch: Vec<LossSample> = samples_data
                .iter()
                .map(|(s, a, y, dys, dya)| LossSample {
                    s,
                    a,
                    y: *y,
                    dy_ds: dys,
                    dy_da: dya,
                })
                .collect();
            let (l_sob, g_sob) =
                sobolev_loss_and_param_grads(&model, &params, &batch, 0.0, 0.0).unwrap();
            let (l_val, g_val) = value_loss_and_param_grads(&model, &params, &batch).unwrap();
            // Same floating-point results (±0 compares equal under ==).
            assert!(l_sob == l_val, "loss differs: {l_sob} vs {l_val}");
            for (a, b) in g_sob.iter().zip(&g_val) {
                assert!(a == b, "grad coordinate differs: {a} vs {b}");
            }
        }
    }

    #[test]
    fn gradient_vanishes_at_an_exact_minimizer() {
        // Targets generated by the model itself make the loss exactly zero.
        let model = Kitchen::new();
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let params = kitchen_params(&mut rng, &model);
        let points: Vec<(Vec<f64>, Vec<f64>)> = (0..5)
            .map(|_| {
                (
                    vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                    vec![rng.gen_range(-1.0..1.0)],
                )
            })
            .collect();
        let evals: Vec<(f64, Vec<f64>, Vec<f64>)> = points
            .iter()
            .map(|(s, a)| eval_with_input_grads(&model, &params, s, a).unwrap())
            .collect();
        let batch: Vec<LossSample> = points
            .iter()
            .zip(&evals)
            .map(|((s, a), (q, gs, ga))| LossSample {
                s,
                a,
                y: *q,
                dy_ds: gs,
                dy_da: ga,
            })
            .collect();
        let (loss, grad) =
            sobolev_loss_and_param_grads(&model, &params, &batch, 1.0, 1.0).unwrap();
        assert_eq!(loss, 0.0);
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!(gnorm <= 1e-10, "gradient norm {gnorm} at minimizer");
    }

    #[test]
    fn rejects_empty_batch_and_negative_lambda() {
        let model = Kitchen::new();
        let params = FlatParams::zeros(model.layout.clone());
        assert!(sobolev_loss_and_param_grads(&model, &params, &[], 1.0, 1.0).is_err());
        let s = [0.1, 0.2];
        let a = [0.3];
        let batch = [LossSample {
            s: &s,
            a: &a,
            y: 0.0,
            dy_ds: &[0.0, 0.0],
            dy_da: &[0.0],
        }];
        assert!(sobolev_loss_and_param_grads(&model, &params, &batch, -1.0, 0.0).is_err());
        assert!(sobolev_loss_and_param_grads(&model, &params, &batch, 0.0, f64::NAN).is_err());
    }

    #[test]
    fn loss_entry_points_are_bit_deterministic() {
        let model = Kitchen::new();
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        let params = kitchen_params(&mut rng, &model);
        let s = [0.4, -0.6];
        let a = [0.9];
        let batch = [LossSample {
            s: &s,
            a: &a,
            y: 0.3,
            dy_ds: &[0.1, -0.2],
            dy_da: &[0.5],
        }];
        let (l1, g1) = sobolev_loss_and_param_grads(&model, &params, &batch, 0.8, 1.2).unwrap();
        let (l2, g2) = sobolev_loss_and_param_grads(&model, &params, &batch, 0.8, 1.2).unwrap();
        assert_eq!(l1.to_bits(), l2.to_bits());
        for (x, y) in g1.iter().zip(&g2) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn tape_replay_reproduces_recorded_state_bitwise() {
        let model = Kitchen::new();
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let params = kitchen_params(&mut rng, &model);
        let mut tape = ParamTape::new(&params, 3);
        let input = tape.input_identity(&[0.3, -0.8, 0.5]).unwrap();
        let _ = model.record(&mut tape, input).unwrap();
        assert!(tape.replay().is_ok());
        assert!(tape.check_topological());
    }

    #[test]
    fn sobolev_loss_three_term_example() {
        // Single sample, scalar input dims: value diff 1, ds diff 0.5,
        // da diff -0.5, both lambdas 1 -> loss = 1 + 0.25 + 0.25 = 1.5.
        // Model: Q(s, a) = w0 s + w1 a (affine, no bias).
        struct Lin {
            layout: Arc<ParamLayout>,
        }
        impl CriticModel for Lin {
            fn state_dim(&self) -> usize {
                1
            }
            fn action_dim(&self) -> usize {
                1
            }
            fn layout(&self) -> &Arc<ParamLayout> {
                &self.layout
            }
            fn record(&self, tape: &mut ParamTape<'_>, sa: NodeId) -> Result<NodeId> {
                tape.affine(sa, "w", None)
            }
            fn value(&self, params: &FlatParams, s: &[f64], a: &[f64]) -> f64 {
                let w = params.values();
                w[0] * s[0] + w[1] * a[0]
            }
        }
        let model = Lin {
            layout: ParamLayout::new(&[("w", 2)]),
        };
        let params = FlatParams::from_values(model.layout.clone(), vec![2.0, 3.0]).unwrap();
        // At (s, a) = (0, 0): Q = 0, grad_s Q = 2, grad_a Q = 3.
        let (q, gs, ga) = eval_with_input_grads(&model, &params, &[0.0], &[0.0]).unwrap();
        assert_eq!((q, gs[0], ga[0]), (0.0, 2.0, 3.0));
        // Targets chosen to produce the worked diffs.
        let batch = [LossSample {
            s: &[0.0],
            a: &[0.0],
            y: -1.0,        // value diff = 1
            dy_ds: &[1.5],  // ds diff = 0.5
            dy_da: &[3.5],  // da diff = -0.5
        }];
        let (loss, _) = sobolev_loss_and_param_grads(&model, &params, &batch, 1.0, 1.0).unwrap();
        assert_close(loss, 1.5, 1e-15);
    }

    #[test]
    fn finite_difference_gradient_matches_exp_derivative() {
        let g = finite_difference_gradient(|x| x[0].exp(), &[0.0], 1e-5).unwrap();
        assert_close(g[0], 1.0, 1e-10);
        assert!(finite_difference_gradient(|x| x[0], &[0.0], 0.0).is_err());
        assert!(finite_difference_gradient(|x| x[0], &[0.0], -1.0).is_err());
    }

    #[test]
    fn layout_and_params_segment_access() {
        let layout = ParamLayout::new(&[("w1", 4), ("b1", 2), ("w2", 6)]);
        assert_eq!(layout.total_len(), 12);
        assert_eq!(layout.span("b1").unwrap(), (4, 2));
        assert!(layout.span("nope").is_err());
        let mut p = FlatParams::zeros(layout);
        p.seg_mut("b1").unwrap()[1] = 7.0;
        assert_eq!(p.values()[5], 7.0);
        assert_eq!(p.seg("w2").unwrap().len(), 6);
    }

    #[test]
    fn leaky_relu_slope_is_one_at_exactly_zero() {
        let layout = ParamLayout::new(&[]);
        let params = FlatParams::zeros(layout);
        let mut tape = ParamTape::new(&params, 1);
        let x = tape.input_identity(&[0.0]).unwrap();
        let l = tape.leaky_relu(x, 0.01);
        assert_eq!(tape.value(l)[0], 0.0);
        assert_eq!(tape.tangent(l, 0)[0], 1.0);
        // And the negative side uses the configured slope.
        let mut tape = ParamTape::new(&params, 1);
        let x = tape.input_identity(&[-2.0]).unwrap();
        let l = tape.leaky_relu(x, 0.01);
        assert_close(tape.value(l)[0], -0.02, 1e-15);
        assert_close(tape.tangent(l, 0)[0], 0.01, 1e-15);
    }
}
