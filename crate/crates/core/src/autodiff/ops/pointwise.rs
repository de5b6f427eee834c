use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::Op;
use crate::autodiff::{Graph, Var};
use crate::error::{shape_err, Error, Result};
use crate::math;
use crate::tensor::Tensor;

/// Single-input elementwise functions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Unary {
    Square,
    Relu,
    Sigmoid,
    /// Subgradient 0 at 0.
    Abs,
    /// Gradient taken as 0 where the output is 0.
    Sqrt,
    Scale(f64),
    AddScalar(f64),
}

impl Unary {
    fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Square => x * x,
            Unary::Relu => x.max(0.0),
            Unary::Sigmoid => math::sigmoid(x),
            Unary::Abs => x.abs(),
            Unary::Sqrt => math::sqrt(x),
            Unary::Scale(c) => c * x,
            Unary::AddScalar(c) => x + c,
        }
    }

    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Square => 2.0 * x,
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Abs => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Unary::Sqrt => {
                if y > 0.0 {
                    0.5 / y
                } else {
                    0.0
                }
            }
            Unary::Scale(c) => c,
            Unary::AddScalar(_) => 1.0,
        }
    }
}

/// Two-input elementwise functions. Operands must share a shape, except
/// that a one-element operand is broadcast against the other.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

impl Binary {
    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            Binary::Add => a + b,
            Binary::Sub => a - b,
            Binary::Mul => a * b,
            Binary::Div => a / b,
        }
    }

    fn partials(self, a: f64, b: f64) -> (f64, f64) {
        match self {
            Binary::Add => (1.0, 1.0),
            Binary::Sub => (1.0, -1.0),
            Binary::Mul => (b, a),
            Binary::Div => (1.0 / b, -a / (b * b)),
        }
    }
}

impl Graph {
    pub fn unary(&mut self, x: Var, kind: Unary) -> Var {
        if let Unary::Sqrt = kind {
            debug_assert!(self.value(x).data().iter().all(|&v| v >= 0.0), "sqrt of negative");
        }
        let v = self.value(x);
        let data = v.data().iter().map(|&a| kind.apply(a)).collect();
        let value = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        self.push(value, Op::Unary { input: x, kind })
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Square)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Relu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Sigmoid)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Abs)
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Sqrt)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Unary::Scale(c))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Unary::AddScalar(c))
    }

    pub fn binary(&mut self, a: Var, b: Var, kind: Binary) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let shape = if ta.shape() == tb.shape() || tb.numel() == 1 {
            ta.shape().to_vec()
        } else if ta.numel() == 1 {
            tb.shape().to_vec()
        } else {
            return Err(shape_err(
                "elementwise",
                format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            ));
        };
        if kind == Binary::Div && tb.data().contains(&0.0) {
            return Err(Error::Degenerate("division by zero"));
        }
        let n = ta.numel().max(tb.numel());
        let (da, db) = (ta.data(), tb.data());
        let data = (0..n)
            .map(|i| kind.apply(da[i % da.len()], db[i % db.len()]))
            .collect();
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, Op::Binary { lhs: a, rhs: b, kind }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Div)
    }

    /// Adds `bias[c]` to every element of channel `c` of `x` `[C, ...]`.
    pub fn bias_add(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let c = *tx.shape().first().unwrap_or(&0);
        if tb.shape() != [c] {
            return Err(shape_err(
                "bias_add",
                format!("bias {:?} does not match {c} channels", tb.shape()),
            ));
        }
        let plane = tx.numel() / c.max(1);
        let mut data = tx.data().to_vec();
        for (ch, chunk) in data.chunks_mut(plane.max(1)).enumerate().take(c) {
            let b = tb.data()[ch];
            chunk.iter_mut().for_each(|v| *v += b);
        }
        let value = Tensor::new(tx.shape().to_vec(), data)?;
        Ok(self.push(value, Op::BiasAdd { input: x, bias }))
    }
}

pub(super) fn unary_backward(g: &Graph, input: Var, out: &Tensor, kind: Unary, grad: &[f64]) -> Vec<(Var, Vec<f64>)> {
    let x = g.value(input).data();
    let dx = x
        .iter()
        .zip(out.data())
        .zip(grad)
        .map(|((&a, &y), &gy)| gy * kind.derivative(a, y))
        .collect();
    vec![(input, dx)]
}

pub(super) fn binary_backward(
    g: &Graph,
    lhs: Var,
    rhs: Var,
    kind: Binary,
    grad: &[f64],
) -> Vec<(Var, Vec<f64>)> {
    let (da, db) = (g.value(lhs).data(), g.value(rhs).data());
    let mut ga = vec![0.0; da.len()];
    let mut gb = vec![0.0; db.len()];
    for (i, &gy) in grad.iter().enumerate() {
        let (ia, ib) = (i % da.len(), i % db.len());
        let (pa, pb) = kind.partials(da[ia], db[ib]);
        ga[ia] += gy * pa;
        gb[ib] += gy * pb;
    }
    vec![(lhs, ga), (rhs, gb)]
}

pub(super) fn bias_backward(g: &Graph, input: Var, bias: Var, grad: &[f64]) -> Vec<(Var, Vec<f64>)> {
    let c = g.value(bias).numel();
    let plane = grad.len() / c.max(1);
    let db = (0..c).map(|ch| grad[ch * plane..(ch + 1) * plane].iter().sum()).collect();
    vec![(input, grad.to_vec()), (bias, db)]
}
