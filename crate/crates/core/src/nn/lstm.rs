//! One LSTM cell, in both tape (differentiable) and plain-array (inference)
//! form. Gate layout in the fused weight matrices is [input, forget, cell,
//! output], each block of size `hidden`.

use super::tape::{sigmoid, Tape, TensorId};
use ndarray::{Array1, Array2};

/// Per-layer hidden and cell vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<Array1<f64>>,
    pub c: Vec<Array1<f64>>,
}

impl LstmState {
    pub fn zeros(depth: usize, hidden: usize) -> LstmState {
        LstmState {
            h: vec![Array1::zeros(hidden); depth],
            c: vec![Array1::zeros(hidden); depth],
        }
    }
}

/// Differentiable cell step. `w_ih` is (4H x in), `w_hh` is (4H x H), `b` is
/// 4H. Returns (h', c') node ids.
pub fn lstm_cell_tape(
    tape: &mut Tape,
    w_ih: TensorId,
    w_hh: TensorId,
    b: TensorId,
    x: TensorId,
    h: TensorId,
    c: TensorId,
) -> (TensorId, TensorId) {
    let hidden = tape.vec(h).len();
    let from_x = tape.matvec(w_ih, x);
    let from_h = tape.matvec(w_hh, h);
    let pre = tape.add(from_x, from_h);
    let gates = tape.add(pre, b);

    let i_pre = tape.slice(gates, 0, hidden);
    let f_pre = tape.slice(gates, hidden, hidden);
    let g_pre = tape.slice(gates, 2 * hidden, hidden);
    let o_pre = tape.slice(gates, 3 * hidden, hidden);

    let i = tape.sigmoid(i_pre);
    let f = tape.sigmoid(f_pre);
    let g = tape.tanh(g_pre);
    let o = tape.sigmoid(o_pre);

    let fc = tape.mul(f, c);
    let ig = tape.mul(i, g);
    let c_new = tape.add(fc, ig);
    let c_tanh = tape.tanh(c_new);
    let h_new = tape.mul(o, c_tanh);
    (h_new, c_new)
}

/// Value-only twin of [`lstm_cell_tape`].
pub fn lstm_cell_infer(
    w_ih: &Array2<f64>,
    w_hh: &Array2<f64>,
    b: &Array1<f64>,
    x: &Array1<f64>,
    h: &Array1<f64>,
    c: &Array1<f64>,
) -> (Array1<f64>, Array1<f64>) {
    let hidden = h.len();
    let gates = w_ih.dot(x) + w_hh.dot(h) + b;
    let slice = |k: usize| gates.slice(ndarray::s![k * hidden..(k + 1) * hidden]);
    let i = slice(0).mapv(sigmoid);
    let f = slice(1).mapv(sigmoid);
    let g = slice(2).mapv(f64::tanh);
    let o = slice(3).mapv(sigmoid);
    let c_new = &f * c + &i * &g;
    let h_new = &o * &c_new.mapv(f64::tanh);
    (h_new, c_new)
}
