//! A small reverse-mode tape over dense `f64` matrices.
//!
//! Only the operations the encoders and heads need are provided. Loss heads
//! with closed-form gradients enter the tape as [`Graph::custom_scalar`]
//! nodes carrying their local gradients.

use ndarray::{concatenate, s, Array2, Axis};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    MulCol(Var, Var),
    MulConst(Var, Array2<f64>),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    SliceCols(Var, usize, usize),
    SliceRows(Var, usize, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Transpose(Var),
    SoftmaxRows(Var),
    SumRows(Var),
    Custom(Vec<(Var, Array2<f64>)>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Array2<f64>,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of the differentiated output with respect to `v`; zeros when
    /// `v` does not influence it.
    pub fn get(&self, v: Var) -> Array2<f64> {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Array2::zeros(self.shapes[v.0]))
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    /// `a` (n×m) plus a broadcast row `row` (1×m).
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    /// `a` (n×m) scaled row-wise by the column `col` (n×1).
    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let v = self.value(a) * self.value(col);
        self.push(v, Op::MulCol(a, col))
    }

    pub fn mul_const(&mut self, a: Var, c: Array2<f64>) -> Var {
        let v = self.value(a) * &c;
        self.push(v, Op::MulConst(a, c))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) * k;
        self.push(v, Op::Scale(a, k))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a).slice(s![.., start..end]).to_owned();
        self.push(v, Op::SliceCols(a, start, end))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a).slice(s![start..end, ..]).to_owned();
        self.push(v, Op::SliceRows(a, start, end))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = concatenate(Axis(1), &views).expect("row counts agree");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = concatenate(Axis(0), &views).expect("column counts agree");
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).t().to_owned();
        self.push(v, Op::Transpose(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for mut row in v.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            row.mapv_inplace(|x| (x - max).exp());
            let total = row.sum();
            row.mapv_inplace(|x| x / total);
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    /// Column sums as a 1×m row.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(0)).insert_axis(Axis(0));
        self.push(v, Op::SumRows(a))
    }

    /// A scalar node with externally computed value and local gradients
    /// d(value)/d(input) for each input.
    pub fn custom_scalar(&mut self, value: f64, local: Vec<(Var, Array2<f64>)>) -> Var {
        for (v, g) in &local {
            debug_assert_eq!(self.value(*v).dim(), g.dim());
        }
        self.push(Array2::from_elem((1, 1), value), Op::Custom(local))
    }

    /// Reverse sweep from the scalar `output`.
    pub fn backward(&self, output: Var) -> Gradients {
        let n = self.nodes.len();
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; n];
        grads[output.0] = Some(Array2::ones(self.value(output).dim()));
        for idx in (0..=output.0).rev() {
            let Some(upstream) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let mut send = |v: Var, g: Array2<f64>| match &mut grads[v.0] {
                Some(acc) => *acc += &g,
                slot @ None => *slot = Some(g),
            };
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    send(*a, upstream.dot(&self.value(*b).t()));
                    send(*b, self.value(*a).t().dot(&upstream));
                }
                Op::Add(a, b) => {
                    send(*a, upstream.clone());
                    send(*b, upstream.clone());
                }
                Op::AddRow(a, row) => {
                    send(*row, upstream.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    send(*a, upstream.clone());
                }
                Op::Mul(a, b) => {
                    send(*a, &upstream * self.value(*b));
                    send(*b, &upstream * self.value(*a));
                }
                Op::MulCol(a, col) => {
                    let prod = &upstream * self.value(*a);
                    send(*col, prod.sum_axis(Axis(1)).insert_axis(Axis(1)));
                    send(*a, &upstream * self.value(*col));
                }
                Op::MulConst(a, c) => send(*a, &upstream * c),
                Op::Scale(a, k) => send(*a, &upstream * *k),
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    send(*a, &upstream * &y.mapv(|s| s * (1.0 - s)));
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    send(*a, &upstream * &y.mapv(|t| 1.0 - t * t));
                }
                Op::SliceCols(a, start, end) => {
                    let mut g = Array2::zeros(self.value(*a).dim());
                    g.slice_mut(s![.., *start..*end]).assign(&upstream);
                    send(*a, g);
                }
                Op::SliceRows(a, start, end) => {
                    let mut g = Array2::zeros(self.value(*a).dim());
                    g.slice_mut(s![*start..*end, ..]).assign(&upstream);
                    send(*a, g);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).ncols();
                        send(p, upstream.slice(s![.., offset..offset + w]).to_owned());
                        offset += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let h = self.value(p).nrows();
                        send(p, upstream.slice(s![offset..offset + h, ..]).to_owned());
                        offset += h;
                    }
                }
                Op::Transpose(a) => send(*a, upstream.t().to_owned()),
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut g = y * &upstream;
                    let dots = g.sum_axis(Axis(1));
                    for (mut row, (yr, dot)) in g.rows_mut().into_iter().zip(y.rows().into_iter().zip(dots)) {
                        row.zip_mut_with(&yr, |gi, &yi| *gi -= yi * dot);
                    }
                    send(*a, g);
                }
                Op::SumRows(a) => {
                    let rows = self.value(*a).nrows();
                    let g = upstream
                        .broadcast((rows, upstream.ncols()))
                        .expect("row broadcast")
                        .to_owned();
                    send(*a, g);
                }
                Op::Custom(local) => {
                    let k = upstream[[0, 0]];
                    for (v, g) in local {
                        send(*v, g * k);
                    }
                }
            }
            grads[idx] = Some(upstream);
        }
        Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.dim()).collect(),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
