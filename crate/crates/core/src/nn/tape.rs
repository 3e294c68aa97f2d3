//! A flat computation tape. Nodes hold vector values (scalars are length-1
//! vectors); matrices appear only as leaves and only feed `matvec`, which is
//! all a recurrent stack needs.

use ndarray::{Array1, Array2};

pub type TensorId = usize;

#[derive(Debug, Clone)]
pub enum Data {
    Vec(Array1<f64>),
    Mat(Array2<f64>),
}

impl Data {
    pub fn zeros_like(&self) -> Data {
        match self {
            Data::Vec(v) => Data::Vec(Array1::zeros(v.len())),
            Data::Mat(m) => Data::Mat(Array2::zeros(m.dim())),
        }
    }

    pub fn as_vec(&self) -> &Array1<f64> {
        match self {
            Data::Vec(v) => v,
            Data::Mat(_) => panic!("expected vector, found matrix"),
        }
    }

    pub fn as_mat(&self) -> &Array2<f64> {
        match self {
            Data::Mat(m) => m,
            Data::Vec(_) => panic!("expected matrix, found vector"),
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatVec { m: TensorId, x: TensorId },
    Add { a: TensorId, b: TensorId },
    Sub { a: TensorId, b: TensorId },
    Mul { a: TensorId, b: TensorId },
    AddConst { a: TensorId },
    Scale { a: TensorId, c: f64 },
    Sigmoid { a: TensorId },
    Tanh { a: TensorId },
    Softplus { a: TensorId },
    Ln { a: TensorId },
    Abs { a: TensorId },
    Clamp { a: TensorId, lo: f64, hi: f64 },
    Slice { a: TensorId, start: usize, len: usize },
    Concat { a: TensorId, b: TensorId },
    Softmax { a: TensorId },
    LogSoftmax { a: TensorId },
    Pick { a: TensorId, idx: usize },
    Sum { a: TensorId },
}

pub struct Tape {
    values: Vec<Data>,
    ops: Vec<Op>,
}

pub struct Gradients {
    grads: Vec<Option<Data>>,
}

impl Gradients {
    pub fn get(&self, id: TensorId) -> Option<&Data> {
        self.grads[id].as_ref()
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape {
            values: Vec::new(),
            ops: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn push(&mut self, value: Data, op: Op) -> TensorId {
        self.values.push(value);
        self.ops.push(op);
        self.values.len() - 1
    }

    pub fn leaf_vec(&mut self, v: Array1<f64>) -> TensorId {
        self.push(Data::Vec(v), Op::Leaf)
    }

    pub fn leaf_mat(&mut self, m: Array2<f64>) -> TensorId {
        self.push(Data::Mat(m), Op::Leaf)
    }

    pub fn scalar(&mut self, v: f64) -> TensorId {
        self.leaf_vec(Array1::from_elem(1, v))
    }

    pub fn vec(&self, id: TensorId) -> &Array1<f64> {
        self.values[id].as_vec()
    }

    pub fn mat(&self, id: TensorId) -> &Array2<f64> {
        self.values[id].as_mat()
    }

    pub fn scalar_value(&self, id: TensorId) -> f64 {
        let v = self.vec(id);
        assert_eq!(v.len(), 1, "not a scalar node");
        v[0]
    }

    pub fn matvec(&mut self, m: TensorId, x: TensorId) -> TensorId {
        let y = self.mat(m).dot(self.vec(x));
        self.push(Data::Vec(y), Op::MatVec { m, x })
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let y = self.vec(a) + self.vec(b);
        self.push(Data::Vec(y), Op::Add { a, b })
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let y = self.vec(a) - self.vec(b);
        self.push(Data::Vec(y), Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let y = self.vec(a) * self.vec(b);
        self.push(Data::Vec(y), Op::Mul { a, b })
    }

    pub fn add_const(&mut self, a: TensorId, c: Array1<f64>) -> TensorId {
        let y = self.vec(a) + &c;
        self.push(Data::Vec(y), Op::AddConst { a })
    }

    pub fn add_scalar(&mut self, a: TensorId, c: f64) -> TensorId {
        let n = self.vec(a).len();
        self.add_const(a, Array1::from_elem(n, c))
    }

    pub fn scale(&mut self, a: TensorId, c: f64) -> TensorId {
        let y = self.vec(a).mapv(|v| v * c);
        self.push(Data::Vec(y), Op::Scale { a, c })
    }

    pub fn neg(&mut self, a: TensorId) -> TensorId {
        self.scale(a, -1.0)
    }

    pub fn sigmoid(&mut self, a: TensorId) -> TensorId {
        let y = self.vec(a).mapv(sigmoid);
        self.push(Data::Vec(y), Op::Sigmoid { a })
    }

    pub fn tanh(&mut self, a: TensorId) -> TensorId {
        let y = self.vec(a).mapv(f64::tanh);
        self.push(Data::Vec(y), Op::Tanh { a })
    }

    pub fn softplus(&mut self, a: TensorId) -> TensorId {
        let y = self.vec(a).mapv(softplus);
        self.push(Data::Vec(y), Op::Softplus { a })
    }

    pub fn ln(&mut self, a: TensorId) -> TensorId {
        let y = self.vec(a).mapv(f64::ln);
        self.push(Data::Vec(y), Op::Ln { a })
    }

    pub fn abs(&mut self, a: TensorId) -> TensorId {
        let y = self.vec(a).mapv(f64::abs);
        self.push(Data::Vec(y), Op::Abs { a })
    }

    pub fn clamp(&mut self, a: TensorId, lo: f64, hi: f64) -> TensorId {
        let y = self.vec(a).mapv(|v| v.clamp(lo, hi));
        self.push(Data::Vec(y), Op::Clamp { a, lo, hi })
    }

    pub fn slice(&mut self, a: TensorId, start: usize, len: usize) -> TensorId {
        let y = self.vec(a).slice(ndarray::s![start..start + len]).to_owned();
        self.push(Data::Vec(y), Op::Slice { a, start, len })
    }

    pub fn concat(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let mut y = Vec::with_capacity(self.vec(a).len() + self.vec(b).len());
        y.extend(self.vec(a).iter());
        y.extend(self.vec(b).iter());
        self.push(Data::Vec(Array1::from(y)), Op::Concat { a, b })
    }

    pub fn softmax(&mut self, a: TensorId) -> TensorId {
        let y = stable_softmax(self.vec(a));
        self.push(Data::Vec(y), Op::Softmax { a })
    }

    pub fn log_softmax(&mut self, a: TensorId) -> TensorId {
        let x = self.vec(a);
        let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = x.mapv(|v| (v - max).exp()).sum().ln() + max;
        let y = x.mapv(|v| v - log_sum);
        self.push(Data::Vec(y), Op::LogSoftmax { a })
    }

    pub fn pick(&mut self, a: TensorId, idx: usize) -> TensorId {
        let y = Array1::from_elem(1, self.vec(a)[idx]);
        self.push(Data::Vec(y), Op::Pick { a, idx })
    }

    pub fn sum(&mut self, a: TensorId) -> TensorId {
        let y = Array1::from_elem(1, self.vec(a).sum());
        self.push(Data::Vec(y), Op::Sum { a })
    }

    /// Reverse sweep seeding d(loss)/d(loss) = 1. `loss` must be a scalar.
    pub fn backward(&self, loss: TensorId) -> Gradients {
        assert_eq!(self.vec(loss).len(), 1, "backward seed must be a scalar");
        let mut grads: Vec<Option<Data>> = vec![None; self.values.len()];
        grads[loss] = Some(Data::Vec(Array1::from_elem(1, 1.0)));

        for id in (0..self.values.len()).rev() {
            let gy = match grads[id].take() {
                Some(Data::Vec(g)) => g,
                Some(m @ Data::Mat(_)) => {
                    grads[id] = Some(m);
                    continue; // matrices are leaves
                }
                None => continue,
            };
            match &self.ops[id] {
                Op::Leaf => {
                    grads[id] = Some(Data::Vec(gy));
                }
                Op::MatVec { m, x } => {
                    let xv = self.vec(*x).clone();
                    let mv = self.mat(*m);
                    let dm = outer(&gy, &xv);
                    let dx = mv.t().dot(&gy);
                    acc_mat(&mut grads, *m, dm);
                    acc_vec(&mut grads, *x, dx);
                }
                Op::Add { a, b } => {
                    acc_vec(&mut grads, *a, gy.clone());
                    acc_vec(&mut grads, *b, gy.clone());
                }
                Op::Sub { a, b } => {
                    acc_vec(&mut grads, *a, gy.clone());
                    acc_vec(&mut grads, *b, gy.mapv(|v| -v));
                }
                Op::Mul { a, b } => {
                    let da = &gy * self.vec(*b);
                    let db = &gy * self.vec(*a);
                    acc_vec(&mut grads, *a, da);
                    acc_vec(&mut grads, *b, db);
                }
                Op::AddConst { a } => acc_vec(&mut grads, *a, gy.clone()),
                Op::Scale { a, c } => acc_vec(&mut grads, *a, gy.mapv(|v| v * c)),
                Op::Sigmoid { a } => {
                    let y = self.vec(id);
                    acc_vec(&mut grads, *a, &gy * &y.mapv(|v| v * (1.0 - v)));
                }
                Op::Tanh { a } => {
                    let y = self.vec(id);
                    acc_vec(&mut grads, *a, &gy * &y.mapv(|v| 1.0 - v * v));
                }
                Op::Softplus { a } => {
                    let x = self.vec(*a);
                    acc_vec(&mut grads, *a, &gy * &x.mapv(sigmoid));
                }
                Op::Ln { a } => {
                    let x = self.vec(*a);
                    acc_vec(&mut grads, *a, &gy / x);
                }
                Op::Abs { a } => {
                    let x = self.vec(*a);
                    acc_vec(&mut grads, *a, &gy * &x.mapv(f64::signum));
                }
                Op::Clamp { a, lo, hi } => {
                    let x = self.vec(*a);
                    let mask = x.mapv(|v| f64::from(u8::from(v > *lo && v < *hi)));
                    acc_vec(&mut grads, *a, &gy * &mask);
                }
                Op::Slice { a, start, len } => {
                    let mut da = Array1::zeros(self.vec(*a).len());
                    da.slice_mut(ndarray::s![*start..*start + *len]).assign(&gy);
                    acc_vec(&mut grads, *a, da);
                }
                Op::Concat { a, b } => {
                    let na = self.vec(*a).len();
                    let nb = self.vec(*b).len();
                    acc_vec(&mut grads, *a, gy.slice(ndarray::s![..na]).to_owned());
                    acc_vec(&mut grads, *b, gy.slice(ndarray::s![na..na + nb]).to_owned());
                }
                Op::Softmax { a } => {
                    let y = self.vec(id);
                    let dot: f64 = (&gy * y).sum();
                    acc_vec(&mut grads, *a, y * &gy.mapv(|g| g - dot));
                }
                Op::LogSoftmax { a } => {
                    let y = self.vec(id); // log probs
                    let p = y.mapv(f64::exp);
                    let g_sum = gy.sum();
                    acc_vec(&mut grads, *a, &gy - &(p * g_sum));
                }
                Op::Pick { a, idx } => {
                    let mut da = Array1::zeros(self.vec(*a).len());
                    da[*idx] = gy[0];
                    acc_vec(&mut grads, *a, da);
                }
                Op::Sum { a } => {
                    let n = self.vec(*a).len();
                    acc_vec(&mut grads, *a, Array1::from_elem(n, gy[0]));
                }
            }
        }
        Gradients { grads }
    }
}

fn acc_vec(grads: &mut [Option<Data>], id: TensorId, delta: Array1<f64>) {
    match &mut grads[id] {
        Some(Data::Vec(g)) => *g += &delta,
        Some(Data::Mat(_)) => panic!("gradient kind mismatch"),
        slot @ None => *slot = Some(Data::Vec(delta)),
    }
}

fn acc_mat(grads: &mut [Option<Data>], id: TensorId, delta: Array2<f64>) {
    match &mut grads[id] {
        Some(Data::Mat(g)) => *g += &delta,
        Some(Data::Vec(_)) => panic!("gradient kind mismatch"),
        slot @ None => *slot = Some(Data::Mat(delta)),
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

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        (1.0 + x.exp()).ln()
    }
}

pub fn stable_softmax(x: &Array1<f64>) -> Array1<f64> {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps = x.mapv(|v| (v - max).exp());
    let sum = exps.sum();
    exps / sum
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let (n, m) = (a.len(), b.len());
    let mut out = Array2::zeros((n, m));
    for i in 0..n {
        let ai = a[i];
        if ai != 0.0 {
            for j in 0..m {
                out[[i, j]] = ai * b[j];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    // central-difference check of d(loss)/d(input) for an arbitrary graph
    fn check_grad<F>(build: F, input: Array1<f64>, tol: f64)
    where
        F: Fn(&mut Tape, TensorId) -> TensorId,
    {
        let mut tape = Tape::new();
        let x = tape.leaf_vec(input.clone());
        let loss = build(&mut tape, x);
        let grads = tape.backward(loss);
        let analytic = grads.get(x).unwrap().as_vec().clone();

        let h = 1e-6;
        for i in 0..input.len() {
            let eval = |v: f64| {
                let mut perturbed = input.clone();
                perturbed[i] = v;
                let mut t = Tape::new();
                let x = t.leaf_vec(perturbed);
                let l = build(&mut t, x);
                t.scalar_value(l)
            };
            let numeric = (eval(input[i] + h) - eval(input[i] - h)) / (2.0 * h);
            let denom = analytic[i].abs().max(1e-4);
            assert!(
                ((numeric - analytic[i]) / denom).abs() < tol,
                "component {i}: numeric {numeric} vs analytic {}",
                analytic[i]
            );
        }
    }

    #[test]
    fn elementwise_op_gradients() {
        let input = array![0.3, -0.8, 1.7, 0.05];
        check_grad(
            |t, x| {
                let s = t.sigmoid(x);
                let th = t.tanh(s);
                let sp = t.softplus(th);
                t.sum(sp)
            },
            input.clone(),
            1e-5,
        );
        check_grad(
            |t, x| {
                let sq = t.mul(x, x);
                let sc = t.scale(sq, 0.5);
                t.sum(sc)
            },
            input,
            1e-5,
        );
    }

    #[test]
    fn softmax_and_logsoftmax_gradients() {
        let input = array![0.5, -1.2, 2.0, 0.0];
        check_grad(
            |t, x| {
                let y = t.softmax(x);
                let p = t.pick(y, 2);
                let l = t.ln(p);
                t.neg(l)
            },
            input.clone(),
            1e-5,
        );
        check_grad(
            |t, x| {
                let y = t.log_softmax(x);
                let p = t.pick(y, 1);
                t.neg(p)
            },
            input,
            1e-5,
        );
    }

    #[test]
    fn matvec_gradients_for_matrix_and_vector() {
        let w = array![[0.2, -0.5, 0.1], [0.7, 0.3, -0.2]];
        let x = array![0.4, -1.0, 0.6];

        let mut tape = Tape::new();
        let w_id = tape.leaf_mat(w.clone());
        let x_id = tape.leaf_vec(x.clone());
        let y = tape.matvec(w_id, x_id);
        let s = tape.sigmoid(y);
        let loss = tape.sum(s);
        let grads = tape.backward(loss);
        let dw = grads.get(w_id).unwrap().as_mat().clone();
        let dx = grads.get(x_id).unwrap().as_vec().clone();

        let eval = |w: &Array2<f64>, x: &Array1<f64>| {
            let mut t = Tape::new();
            let wi = t.leaf_mat(w.clone());
            let xi = t.leaf_vec(x.clone());
            let y = t.matvec(wi, xi);
            let s = t.sigmoid(y);
            let l = t.sum(s);
            t.scalar_value(l)
        };
        let h = 1e-6;
        for i in 0..2 {
            for j in 0..3 {
                let mut up = w.clone();
                up[[i, j]] += h;
                let mut down = w.clone();
                down[[i, j]] -= h;
                let numeric = (eval(&up, &x) - eval(&down, &x)) / (2.0 * h);
                assert!((numeric - dw[[i, j]]).abs() < 1e-6);
            }
        }
        for j in 0..3 {
            let mut up = x.clone();
            up[j] += h;
            let mut down = x.clone();
            down[j] -= h;
            let numeric = (eval(&w, &up) - eval(&w, &down)) / (2.0 * h);
            assert!((numeric - dx[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn slice_concat_pick_abs_clamp_gradients() {
        let input = array![0.3, -0.8, 1.7, 0.05, -0.4, 0.9];
        check_grad(
            |t, x| {
                let a = t.slice(x, 0, 3);
                let b = t.slice(x, 3, 3);
                let m = t.mul(a, b);
                let c = t.concat(m, a);
                let ab = t.abs(c);
                let cl = t.clamp(ab, 0.01, 1.3);
                t.sum(cl)
            },
            input,
            1e-4,
        );
    }

    #[test]
    fn shared_subexpression_accumulates() {
        // loss = sum(x*x) + sum(x) uses x twice; grad = 2x + 1
        let input = array![0.5, -0.25, 1.5];
        let mut tape = Tape::new();
        let x = tape.leaf_vec(input.clone());
        let sq = tape.mul(x, x);
        let s1 = tape.sum(sq);
        let s2 = tape.sum(x);
        let loss = tape.add(s1, s2);
        let grads = tape.backward(loss);
        let g = grads.get(x).unwrap().as_vec();
        for i in 0..3 {
            assert!((g[i] - (2.0 * input[i] + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn random_deep_chain_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let input = Array1::from_iter((0..5).map(|_| rng.gen_range(-1.0..1.0)));
            check_grad(
                |t, x| {
                    let a = t.tanh(x);
                    let b = t.sigmoid(a);
                    let c = t.mul(a, b);
                    let d = t.softmax(c);
                    let e = t.ln(d);
                    let f = t.neg(e);
                    let p = t.pick(f, 3);
                    let s = t.sum(c);
                    let sa = t.abs(s);
                    t.add(p, sa)
                },
                input,
                1e-4,
            );
        }
    }
}
