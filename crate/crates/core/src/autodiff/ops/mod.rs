mod ap;
mod conv;
mod norm;
mod pointwise;
mod reduce;
mod sample;
mod shape;

use alloc::vec;
use alloc::vec::Vec;

pub use ap::ApBinning;
pub use conv::{conv_param_count, separable_param_count, ConvGeometry};
pub use norm::{L2_EPS, STD_EPS};
pub use pointwise::{Binary, Unary};
pub use reduce::{PatchReduction, Reduction};
pub use sample::{bilinear_taps, Taps};
pub(crate) use shape::transpose_data;

use super::{Graph, Var};

/// Recorded operation plus whatever forward context its backward needs.
pub(crate) enum Op {
    Leaf,
    Conv2d { input: Var, kernel: Var, dims: conv::ConvDims },
    Depthwise { input: Var, kernel: Var, dims: conv::ConvDims },
    BiasAdd { input: Var, bias: Var },
    Unary { input: Var, kind: Unary },
    Binary { lhs: Var, rhs: Var, kind: Binary },
    Reduce { input: Var, kind: Reduction, slots: Vec<usize>, group: usize, argmax: Vec<usize> },
    PatchReduce { input: Var, size: usize, kind: PatchReduction, argmax: Vec<usize> },
    Matmul { lhs: Var, rhs: Var },
    Transpose { input: Var },
    Reshape { input: Var },
    Broadcast { input: Var, n: usize, inner: usize },
    SliceChannels { input: Var, start: usize },
    L2Normalize { input: Var, norms: Vec<f64> },
    StandardizeRows { input: Var, sigma: Vec<f64> },
    Softmax { input: Var },
    BilinearGather { input: Var, taps: Vec<Option<Taps>> },
    SoftAp { input: Var, binning: ApBinning },
}

impl Op {
    pub(crate) fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => Vec::new(),
            Op::Conv2d { input, kernel, .. } | Op::Depthwise { input, kernel, .. } => vec![*input, *kernel],
            Op::BiasAdd { input, bias } => vec![*input, *bias],
            Op::Binary { lhs, rhs, .. } | Op::Matmul { lhs, rhs } => vec![*lhs, *rhs],
            Op::Unary { input, .. }
            | Op::Reduce { input, .. }
            | Op::PatchReduce { input, .. }
            | Op::Transpose { input }
            | Op::Reshape { input }
            | Op::Broadcast { input, .. }
            | Op::SliceChannels { input, .. }
            | Op::L2Normalize { input, .. }
            | Op::StandardizeRows { input, .. }
            | Op::Softmax { input }
            | Op::BilinearGather { input, .. }
            | Op::SoftAp { input, .. } => vec![*input],
        }
    }
}

/// Gradient contributions of node `id` to its inputs, given d(loss)/d(node).
pub(crate) fn backward(g: &Graph, id: usize, grad: &[f64]) -> Vec<(Var, Vec<f64>)> {
    let node = &g.nodes[id];
    let out = &node.value;
    let mut contributions = match &node.op {
        Op::Leaf => Vec::new(),
        Op::Conv2d { input, kernel, dims } => conv::conv2d_backward(g, *input, *kernel, dims, grad),
        Op::Depthwise { input, kernel, dims } => conv::depthwise_backward(g, *input, *kernel, dims, grad),
        Op::BiasAdd { input, bias } => pointwise::bias_backward(g, *input, *bias, grad),
        Op::Unary { input, kind } => pointwise::unary_backward(g, *input, out, *kind, grad),
        Op::Binary { lhs, rhs, kind } => pointwise::binary_backward(g, *lhs, *rhs, *kind, grad),
        Op::Reduce { input, kind, slots, group, argmax } => {
            reduce::reduce_backward(g, *input, *kind, slots, *group, argmax, grad)
        }
        Op::PatchReduce { input, size, kind, argmax } => {
            reduce::patch_backward(g, *input, *size, *kind, argmax, grad)
        }
        Op::Matmul { lhs, rhs } => shape::matmul_backward(g, *lhs, *rhs, grad),
        Op::Transpose { input } => {
            let (r, c) = (out.shape()[0], out.shape()[1]);
            vec![(*input, transpose_data(grad, r, c))]
        }
        Op::Reshape { input } => vec![(*input, grad.to_vec())],
        Op::Broadcast { input, n, inner } => shape::broadcast_backward(g, *input, *n, *inner, grad),
        Op::SliceChannels { input, start } => {
            let mut dx = vec![0.0; g.value(*input).numel()];
            let plane = out.numel() / out.shape()[0].max(1);
            dx[start * plane..start * plane + grad.len()].copy_from_slice(grad);
            vec![(*input, dx)]
        }
        Op::L2Normalize { input, norms } => norm::l2_backward(*input, out, norms, grad),
        Op::StandardizeRows { input, sigma } => norm::standardize_backward(g, *input, sigma, grad),
        Op::Softmax { input } => norm::softmax_backward(*input, out, grad),
        Op::BilinearGather { input, taps } => sample::gather_backward(g, *input, taps, grad),
        Op::SoftAp { input, binning } => ap::soft_ap_backward(g, *input, binning, grad),
    };
    contributions.retain(|(v, _)| g.requires_grad(*v));
    contributions
}
