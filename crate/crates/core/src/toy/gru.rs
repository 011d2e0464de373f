//! Gated recurrent unit with gate rows ordered reset, update, candidate:
//!
//! ```text
//! r = σ(W_r x + b_r + U_r h + c_r)
//! z = σ(W_z x + b_z + U_z h + c_z)
//! n = tanh(W_n x + b_n + r ⊙ (U_n h + c_n))
//! h' = (1 − z) ⊙ n + z ⊙ h
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::scalar::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gru {
    /// `3H × I`
    pub wx: Matrix<f64>,
    /// `3H × H`
    pub wh: Matrix<f64>,
    pub bx: Vec<f64>,
    pub bh: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GruStep {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    /// `U_n h + c_n`
    hn: Vec<f64>,
    pub h: Vec<f64>,
}

impl Gru {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            wx: Matrix::zeros(3 * hidden, input),
            wh: Matrix::zeros(3 * hidden, hidden),
            bx: vec![0.0; 3 * hidden],
            bh: vec![0.0; 3 * hidden],
        }
    }

    /// Weights uniform in `±1/√H`, biases zero.
    pub fn random(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut g = Self::zeros(input, hidden);
        let s = 1.0 / (hidden as f64).sqrt();
        for v in g.wx.as_mut_slice().iter_mut().chain(g.wh.as_mut_slice()) {
            *v = rng.random_range(-s..s);
        }
        g
    }

    pub fn hidden(&self) -> usize {
        self.wh.cols()
    }

    pub fn input(&self) -> usize {
        self.wx.cols()
    }

    pub fn step(&self, x: &[f64], h_prev: &[f64]) -> GruStep {
        let hd = self.hidden();
        let mut gx = self.bx.clone();
        self.wx.matvec_add(x, &mut gx);
        let mut gh = self.bh.clone();
        self.wh.matvec_add(h_prev, &mut gh);
        let r: Vec<f64> = (0..hd).map(|k| sigmoid(gx[k] + gh[k])).collect();
        let z: Vec<f64> = (0..hd).map(|k| sigmoid(gx[hd + k] + gh[hd + k])).collect();
        let hn = gh[2 * hd..].to_vec();
        let n: Vec<f64> = (0..hd).map(|k| (gx[2 * hd + k] + r[k] * hn[k]).tanh()).collect();
        let h = (0..hd).map(|k| (1.0 - z[k]) * n[k] + z[k] * h_prev[k]).collect();
        GruStep {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            r,
            z,
            n,
            hn,
            h,
        }
    }

    /// Accumulates parameter gradients into `grad`; returns `(d x, d h_prev)`.
    pub fn backward(&self, s: &GruStep, dh: &[f64], grad: &mut Gru) -> (Vec<f64>, Vec<f64>) {
        let hd = self.hidden();
        let mut dgx = vec![0.0; 3 * hd];
        let mut dgh = vec![0.0; 3 * hd];
        let mut dh_prev = vec![0.0; hd];
        for k in 0..hd {
            let dn = dh[k] * (1.0 - s.z[k]);
            let dz = dh[k] * (s.h_prev[k] - s.n[k]);
            dh_prev[k] = dh[k] * s.z[k];
            let dn_pre = dn * (1.0 - s.n[k] * s.n[k]);
            let dr = dn_pre * s.hn[k];
            let dr_pre = dr * s.r[k] * (1.0 - s.r[k]);
            let dz_pre = dz * s.z[k] * (1.0 - s.z[k]);
            dgx[k] = dr_pre;
            dgx[hd + k] = dz_pre;
            dgx[2 * hd + k] = dn_pre;
            dgh[k] = dr_pre;
            dgh[hd + k] = dz_pre;
            dgh[2 * hd + k] = dn_pre * s.r[k];
        }
        grad.wx.add_outer(&dgx, &s.x);
        grad.wh.add_outer(&dgh, &s.h_prev);
        for k in 0..3 * hd {
            grad.bx[k] += dgx[k];
            grad.bh[k] += dgh[k];
        }
        let mut dx = vec![0.0; self.input()];
        self.wx.matvec_t_add(&dgx, &mut dx);
        self.wh.matvec_t_add(&dgh, &mut dh_prev);
        (dx, dh_prev)
    }

    pub(crate) fn slices(&self) -> [&[f64]; 4] {
        [self.wx.as_slice(), self.wh.as_slice(), &self.bx, &self.bh]
    }

    pub(crate) fn slices_mut(&mut self) -> [&mut [f64]; 4] {
        [self.wx.as_mut_slice(), self.wh.as_mut_slice(), &mut self.bx, &mut self.bh]
    }

    pub(crate) fn shapes(&self) -> [Vec<usize>; 4] {
        let (r, i, h) = (self.wx.rows(), self.input(), self.hidden());
        [vec![r, i], vec![r, h], vec![r], vec![r]]
    }
}
