//! LSTM sequence autoencoder over spectrogram frames.
//!
//! The encoder reads a frame column by column (`frame_size` steps of
//! `n_mels` values); its last hidden state is the latent code. The decoder
//! receives that code at every step, starting from a zero state, and a
//! linear projection maps each decoder hidden state back to `n_mels` values.
//! The loss and the anomaly score are the mean squared reconstruction error
//! over all steps and bands.
//!
//! Gate blocks are laid out column-wise as `[i | f | o | g]`:
//!
//! ```text
//! z = x·Wx + h·Wh + b
//! i, f, o = σ(z_i), σ(z_f), σ(z_o);  g = tanh(z_g)
//! c' = f ⊙ c + i ⊙ g;  h' = o ⊙ tanh(c')
//! ```

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AadError, Result};
use crate::features::FrameTensor;
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self { hidden: 64, epochs: 30, batch: 64, lr: 1e-3 }
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
/// Frames per scoring chunk; fixed so results do not depend on thread count.
const SCORE_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    /// `[n_in × 4h]`
    pub wx: Array2<f64>,
    /// `[h × 4h]`
    pub wh: Array2<f64>,
    /// `[4h]`
    pub b: Array1<f64>,
}

impl LstmCell {
    fn init(n_in: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut draw = |r, c| Array2::from_shape_simple_fn((r, c), || rng.random_range(-bound..=bound));
        let wx = draw(n_in, 4 * hidden);
        let wh = draw(hidden, 4 * hidden);
        let mut b = Array1::zeros(4 * hidden);
        b.slice_mut(s![hidden..2 * hidden]).fill(1.0);
        Self { wx, wh, b }
    }

    fn zeros_like(&self) -> Self {
        Self {
            wx: Array2::zeros(self.wx.raw_dim()),
            wh: Array2::zeros(self.wh.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
        }
    }

    pub fn n_in(&self) -> usize {
        self.wx.nrows()
    }
    pub fn hidden(&self) -> usize {
        self.wh.nrows()
    }

    /// Gate `gate` (0..4 = i, f, o, g) as a `[h × (n_in + h)]` matrix acting
    /// on the stacked vector `[x; h]`.
    pub fn gate_matrix(&self, gate: usize) -> Array2<f64> {
        let h = self.hidden();
        let cols = gate * h..(gate + 1) * h;
        let wx = self.wx.slice(s![.., cols.clone()]);
        let wh = self.wh.slice(s![.., cols]);
        ndarray::concatenate(Axis(0), &[wx, wh]).unwrap().reversed_axes().as_standard_layout().into_owned()
    }

    pub fn gate_bias(&self, gate: usize) -> Array1<f64> {
        let h = self.hidden();
        self.b.slice(s![gate * h..(gate + 1) * h]).to_owned()
    }

    fn from_gates(n_in: usize, hidden: usize, mats: &[Array2<f64>], biases: &[Array1<f64>]) -> Self {
        let mut wx = Array2::zeros((n_in, 4 * hidden));
        let mut wh = Array2::zeros((hidden, 4 * hidden));
        let mut b = Array1::zeros(4 * hidden);
        for gate in 0..4 {
            let cols = gate * hidden..(gate + 1) * hidden;
            let t = mats[gate].t();
            wx.slice_mut(s![.., cols.clone()]).assign(&t.slice(s![..n_in, ..]));
            wh.slice_mut(s![.., cols.clone()]).assign(&t.slice(s![n_in.., ..]));
            b.slice_mut(s![cols]).assign(&biases[gate]);
        }
        Self { wx, wh, b }
    }

    fn tensors(&self) -> [&[f64]; 3] {
        [
            self.wx.as_slice().unwrap(),
            self.wh.as_slice().unwrap(),
            self.b.as_slice().unwrap(),
        ]
    }

    fn tensors_mut(&mut self) -> [&mut [f64]; 3] {
        [
            self.wx.as_slice_mut().unwrap(),
            self.wh.as_slice_mut().unwrap(),
            self.b.as_slice_mut().unwrap(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSummary {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    /// Mean loss per epoch, averaged over that epoch's batches before each update.
    pub loss_history: Vec<f64>,
    pub final_loss: f64,
    /// Training hit a non-finite loss and returned the last finite parameters.
    pub aborted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmAeModel {
    pub encoder: LstmCell,
    pub decoder: LstmCell,
    /// `[h × n_mels]`
    pub proj_w: Array2<f64>,
    /// `[n_mels]`
    pub proj_b: Array1<f64>,
    pub training: Option<TrainingSummary>,
}

/// Inputs, reconstructions (`[batch × frame_size × n_mels]`) and per-frame MSE.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionBatch {
    pub inputs: ndarray::Array3<f64>,
    pub reconstructions: ndarray::Array3<f64>,
    pub mse: Vec<f64>,
}

pub fn lstm_ae_init(n_mels: usize, hidden: usize, seed: u64) -> Result<LstmAeModel> {
    if n_mels == 0 || hidden == 0 {
        return Err(AadError::InvalidParameter("LSTM dimensions must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let encoder = LstmCell::init(n_mels, hidden, &mut rng);
    let decoder = LstmCell::init(hidden, hidden, &mut rng);
    let bound = 1.0 / (hidden as f64).sqrt();
    let proj_w = Array2::from_shape_simple_fn((hidden, n_mels), || rng.random_range(-bound..=bound));
    Ok(LstmAeModel { encoder, decoder, proj_w, proj_b: Array1::zeros(n_mels), training: None })
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One cell step on a batch. `z` holds the pre-activations on entry and the
/// activated gates on return.
fn cell_step(z: &mut Array2<f64>, c_prev: &Array2<f64>, hidden: usize) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let h = hidden;
    z.slice_mut(s![.., ..3 * h]).mapv_inplace(sigmoid);
    z.slice_mut(s![.., 3 * h..]).mapv_inplace(f64::tanh);
    let (i, f, o, g) = (
        z.slice(s![.., ..h]),
        z.slice(s![.., h..2 * h]),
        z.slice(s![.., 2 * h..3 * h]),
        z.slice(s![.., 3 * h..]),
    );
    let c = Zip::from(&f).and(c_prev).and(&i).and(&g).map_collect(|&f, &c, &i, &g| f * c + i * g);
    let tc = c.mapv(f64::tanh);
    let hn = Zip::from(&o).and(&tc).map_collect(|&o, &t| o * t);
    (c, tc, hn)
}

/// Per-step record kept for backpropagation.
struct StepTrace {
    gates: Array2<f64>,
    c_prev: Array2<f64>,
    tanh_c: Array2<f64>,
    h_prev: Array2<f64>,
}

struct ForwardTrace {
    enc: Vec<StepTrace>,
    dec: Vec<StepTrace>,
    latent: Array2<f64>,
    dec_h: Vec<Array2<f64>>,
}

impl LstmAeModel {
    pub fn n_mels(&self) -> usize {
        self.encoder.n_in()
    }
    pub fn hidden(&self) -> usize {
        self.encoder.hidden()
    }

    /// `xs[t]` is the `[B × n_mels]` input at step `t`; returns reconstructions per step.
    fn forward_steps(&self, xs: &[Array2<f64>], mut trace: Option<&mut ForwardTrace>) -> Vec<Array2<f64>> {
        let bsz = xs[0].nrows();
        let h = self.hidden();
        let mut hs = Array2::<f64>::zeros((bsz, h));
        let mut cs = Array2::<f64>::zeros((bsz, h));
        for x in xs {
            let mut z = Array2::from_shape_fn((bsz, 4 * h), |(_, j)| self.encoder.b[j]);
            general_mat_mul(1.0, x, &self.encoder.wx, 1.0, &mut z);
            general_mat_mul(1.0, &hs, &self.encoder.wh, 1.0, &mut z);
            let (c, tc, hn) = cell_step(&mut z, &cs, h);
            if let Some(tr) = trace.as_deref_mut() {
                tr.enc.push(StepTrace { gates: z, c_prev: cs, tanh_c: tc, h_prev: hs });
            }
            hs = hn;
            cs = c;
        }
        let latent = hs;
        // decoder input term is the same at every step
        let mut latent_in = Array2::from_shape_fn((bsz, 4 * h), |(_, j)| self.decoder.b[j]);
        general_mat_mul(1.0, &latent, &self.decoder.wx, 1.0, &mut latent_in);
        let mut hs = Array2::<f64>::zeros((bsz, h));
        let mut cs = Array2::<f64>::zeros((bsz, h));
        let mut outs = Vec::with_capacity(xs.len());
        for _ in xs {
            let mut z = latent_in.clone();
            general_mat_mul(1.0, &hs, &self.decoder.wh, 1.0, &mut z);
            let (c, tc, hn) = cell_step(&mut z, &cs, h);
            let mut y = Array2::from_shape_fn((bsz, self.n_mels()), |(_, m)| self.proj_b[m]);
            general_mat_mul(1.0, &hn, &self.proj_w, 1.0, &mut y);
            outs.push(y);
            if let Some(tr) = trace.as_deref_mut() {
                tr.dec.push(StepTrace { gates: z, c_prev: cs, tanh_c: tc, h_prev: hs });
                tr.dec_h.push(hn.clone());
            }
            hs = hn;
            cs = c;
        }
        if let Some(tr) = trace {
            tr.latent = latent;
        }
        outs
    }

    /// Per-frame mean squared error for step inputs `xs`.
    fn frame_mse(xs: &[Array2<f64>], ys: &[Array2<f64>]) -> Vec<f64> {
        let bsz = xs[0].nrows();
        let denom = (xs.len() * xs[0].ncols()) as f64;
        let mut acc = vec![0.0; bsz];
        for (x, y) in xs.iter().zip(ys) {
            for (b, (xr, yr)) in x.rows().into_iter().zip(y.rows()).enumerate() {
                acc[b] += xr.iter().zip(yr.iter()).map(|(a, c)| (c - a) * (c - a)).sum::<f64>();
            }
        }
        acc.iter().map(|s| s / denom).collect()
    }

    /// Batch loss and its gradient (mean of per-frame MSE over the batch).
    fn loss_and_grad(&self, xs: &[Array2<f64>]) -> (f64, LstmAeModel) {
        let bsz = xs[0].nrows();
        let steps = xs.len();
        let h = self.hidden();
        let n_mels = self.n_mels();
        let mut tr = ForwardTrace { enc: Vec::new(), dec: Vec::new(), latent: Array2::zeros((0, 0)), dec_h: Vec::new() };
        let ys = self.forward_steps(xs, Some(&mut tr));
        let mse = Self::frame_mse(xs, &ys);
        let loss = mse.iter().sum::<f64>() / bsz as f64;

        let mut grad = LstmAeModel {
            encoder: self.encoder.zeros_like(),
            decoder: self.decoder.zeros_like(),
            proj_w: Array2::zeros(self.proj_w.raw_dim()),
            proj_b: Array1::zeros(n_mels),
            training: None,
        };
        let scale = 2.0 / (bsz * steps * n_mels) as f64;

        // decoder + projection, backwards in time
        let mut dh_next = Array2::<f64>::zeros((bsz, h));
        let mut dc_next = Array2::<f64>::zeros((bsz, h));
        let mut dz_sum = Array2::<f64>::zeros((bsz, 4 * h));
        for t in (0..steps).rev() {
            let dy = Zip::from(&ys[t]).and(&xs[t]).map_collect(|&y, &x| scale * (y - x));
            general_mat_mul(1.0, &tr.dec_h[t].t(), &dy, 1.0, &mut grad.proj_w);
            grad.proj_b += &dy.sum_axis(Axis(0));
            let mut dh = dh_next;
            general_mat_mul(1.0, &dy, &self.proj_w.t(), 1.0, &mut dh);
            let st = &tr.dec[t];
            let (dz, dc_prev) = cell_backward(st, &dh, &dc_next, h);
            general_mat_mul(1.0, &st.h_prev.t(), &dz, 1.0, &mut grad.decoder.wh);
            grad.decoder.b += &dz.sum_axis(Axis(0));
            dz_sum += &dz;
            let mut dhp = Array2::zeros((bsz, h));
            general_mat_mul(1.0, &dz, &self.decoder.wh.t(), 0.0, &mut dhp);
            dh_next = dhp;
            dc_next = dc_prev;
        }
        general_mat_mul(1.0, &tr.latent.t(), &dz_sum, 1.0, &mut grad.decoder.wx);
        let mut dh_next = Array2::<f64>::zeros((bsz, h));
        general_mat_mul(1.0, &dz_sum, &self.decoder.wx.t(), 0.0, &mut dh_next);

        // encoder
        let mut dc_next = Array2::<f64>::zeros((bsz, h));
        for t in (0..steps).rev() {
            let st = &tr.enc[t];
            let (dz, dc_prev) = cell_backward(st, &dh_next, &dc_next, h);
            general_mat_mul(1.0, &xs[t].t(), &dz, 1.0, &mut grad.encoder.wx);
            general_mat_mul(1.0, &st.h_prev.t(), &dz, 1.0, &mut grad.encoder.wh);
            grad.encoder.b += &dz.sum_axis(Axis(0));
            let mut dhp = Array2::zeros((bsz, h));
            general_mat_mul(1.0, &dz, &self.encoder.wh.t(), 0.0, &mut dhp);
            dh_next = dhp;
            dc_next = dc_prev;
        }
        (loss, grad)
    }

    fn tensors(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::with_capacity(8);
        v.extend(self.encoder.tensors());
        v.extend(self.decoder.tensors());
        v.push(self.proj_w.as_slice().unwrap());
        v.push(self.proj_b.as_slice().unwrap());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = Vec::with_capacity(8);
        v.extend(self.encoder.tensors_mut());
        v.extend(self.decoder.tensors_mut());
        v.push(self.proj_w.as_slice_mut().unwrap());
        v.push(self.proj_b.as_slice_mut().unwrap());
        v
    }

    /// Every parameter, flattened in a fixed order.
    pub fn flat_params(&self) -> Vec<f64> {
        self.tensors().into_iter().flatten().copied().collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        let mut off = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Mean batch loss and flat gradient on the given frames.
    pub fn loss_and_flat_grad(&self, frames: &FrameTensor) -> Result<(f64, Vec<f64>)> {
        self.check_frames(frames)?;
        let idx: Vec<usize> = (0..frames.num_frames()).collect();
        let (loss, g) = self.loss_and_grad(&step_inputs(frames, &idx));
        Ok((loss, g.flat_params()))
    }

    fn check_frames(&self, frames: &FrameTensor) -> Result<()> {
        if frames.n_mels() != self.n_mels() {
            return Err(AadError::shape(
                format!("{} Mel bands", self.n_mels()),
                format!("{} Mel bands", frames.n_mels()),
            ));
        }
        if frames.is_empty() {
            return Err(AadError::EmptyInput);
        }
        Ok(())
    }

    /// Encoder/decoder/projection layout rebuilt from per-gate blocks.
    pub fn from_gate_blocks(
        n_mels: usize,
        hidden: usize,
        enc: (&[Array2<f64>], &[Array1<f64>]),
        dec: (&[Array2<f64>], &[Array1<f64>]),
        proj_w_out_in: Array2<f64>,
        proj_b: Array1<f64>,
    ) -> Self {
        Self {
            encoder: LstmCell::from_gates(n_mels, hidden, enc.0, enc.1),
            decoder: LstmCell::from_gates(hidden, hidden, dec.0, dec.1),
            proj_w: proj_w_out_in.reversed_axes().as_standard_layout().into_owned(),
            proj_b,
            training: None,
        }
    }
}

fn cell_backward(st: &StepTrace, dh: &Array2<f64>, dc_next: &Array2<f64>, h: usize) -> (Array2<f64>, Array2<f64>) {
    let g = &st.gates;
    let (i, f, o, gg) = (
        g.slice(s![.., ..h]),
        g.slice(s![.., h..2 * h]),
        g.slice(s![.., 2 * h..3 * h]),
        g.slice(s![.., 3 * h..]),
    );
    let dc = Zip::from(dc_next)
        .and(dh)
        .and(&o)
        .and(&st.tanh_c)
        .map_collect(|&dcn, &dh, &o, &tc| dcn + dh * o * (1.0 - tc * tc));
    let bsz = dh.nrows();
    let mut dz = Array2::<f64>::zeros((bsz, 4 * h));
    Zip::from(dz.slice_mut(s![.., ..h])).and(&dc).and(&gg).and(&i).for_each(|d, &dc, &g, &i| {
        *d = dc * g * i * (1.0 - i);
    });
    Zip::from(dz.slice_mut(s![.., h..2 * h])).and(&dc).and(&st.c_prev).and(&f).for_each(|d, &dc, &cp, &f| {
        *d = dc * cp * f * (1.0 - f);
    });
    Zip::from(dz.slice_mut(s![.., 2 * h..3 * h])).and(dh).and(&st.tanh_c).and(&o).for_each(|d, &dh, &tc, &o| {
        *d = dh * tc * o * (1.0 - o);
    });
    Zip::from(dz.slice_mut(s![.., 3 * h..])).and(&dc).and(&i).and(&gg).for_each(|d, &dc, &i, &g| {
        *d = dc * i * (1.0 - g * g);
    });
    let dc_prev = Zip::from(&dc).and(&f).map_collect(|&dc, &f| dc * f);
    (dz, dc_prev)
}

/// Step inputs `[B × n_mels]` for frames `idx`, one matrix per time step.
fn step_inputs(frames: &FrameTensor, idx: &[usize]) -> Vec<Array2<f64>> {
    let f = frames.frames();
    (0..frames.frame_size())
        .map(|t| Array2::from_shape_fn((idx.len(), frames.n_mels()), |(b, m)| f[[idx[b], m, t]] as f64))
        .collect()
}

pub fn lstm_ae_forward(model: &LstmAeModel, frames: &FrameTensor) -> Result<ReconstructionBatch> {
    model.check_frames(frames)?;
    let idx: Vec<usize> = (0..frames.num_frames()).collect();
    let xs = step_inputs(frames, &idx);
    let ys = model.forward_steps(&xs, None);
    let mse = LstmAeModel::frame_mse(&xs, &ys);
    let (b, t, m) = (idx.len(), xs.len(), frames.n_mels());
    let inputs = ndarray::Array3::from_shape_fn((b, t, m), |(b, t, m)| xs[t][[b, m]]);
    let reconstructions = ndarray::Array3::from_shape_fn((b, t, m), |(b, t, m)| ys[t][[b, m]]);
    Ok(ReconstructionBatch { inputs, reconstructions, mse })
}

/// Per-frame reconstruction MSE.
pub fn lstm_ae_score(model: &LstmAeModel, frames: &FrameTensor) -> Result<Vec<f64>> {
    model.check_frames(frames)?;
    let n = frames.num_frames();
    let chunks = n.div_ceil(SCORE_CHUNK);
    let parts = par::map_range(chunks, |c| {
        let idx: Vec<usize> = (c * SCORE_CHUNK..((c + 1) * SCORE_CHUNK).min(n)).collect();
        let xs = step_inputs(frames, &idx);
        let ys = model.forward_steps(&xs, None);
        LstmAeModel::frame_mse(&xs, &ys)
    });
    Ok(parts.into_iter().flatten().collect())
}

pub fn lstm_ae_train(
    model: &LstmAeModel,
    frames: &FrameTensor,
    cfg: &LstmConfig,
    seed: u64,
) -> Result<LstmAeModel> {
    model.check_frames(frames)?;
    if cfg.batch == 0 || !(cfg.lr > 0.0) {
        return Err(AadError::InvalidParameter("batch must be >= 1 and lr > 0".into()));
    }
    if frames.frames().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(AadError::InvalidParameter("LSTM-AE training frames must lie in [0, 1]".into()));
    }
    let n = frames.num_frames();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = model.clone();
    let mut last_good = params.clone();
    let count = params.param_count();
    let mut m1 = vec![0.0; count];
    let mut m2 = vec![0.0; count];
    let mut step = 0i32;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..n).collect();
    let mut aborted = false;

    'epochs: for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_sum = 0.0;
        for batch in order.chunks(cfg.batch) {
            let xs = step_inputs(frames, batch);
            let (loss, grad) = params.loss_and_grad(&xs);
            let flat_grad = grad.flat_params();
            if !loss.is_finite() || flat_grad.iter().any(|g| !g.is_finite()) {
                log::warn!("lstm_ae: non-finite loss in epoch {epoch}; returning last finite parameters");
                params = last_good.clone();
                aborted = true;
                break 'epochs;
            }
            epoch_sum += loss * batch.len() as f64;
            last_good = params.clone();
            step += 1;
            let bc1 = 1.0 - BETA1.powi(step);
            let bc2 = 1.0 - BETA2.powi(step);
            let mut off = 0;
            for t in params.tensors_mut() {
                for p in t.iter_mut() {
                    let g = flat_grad[off];
                    m1[off] = BETA1 * m1[off] + (1.0 - BETA1) * g;
                    m2[off] = BETA2 * m2[off] + (1.0 - BETA2) * g * g;
                    *p -= cfg.lr * (m1[off] / bc1) / ((m2[off] / bc2).sqrt() + ADAM_EPS);
                    off += 1;
                }
            }
        }
        history.push(epoch_sum / n as f64);
        log::debug!("lstm_ae: epoch {epoch} loss {:.6e}", history[epoch]);
    }
    if !params.all_finite() {
        params = last_good;
        aborted = true;
    }
    let final_loss = history.last().copied().unwrap_or(f64::NAN);
    params.training = Some(TrainingSummary {
        epochs: cfg.epochs,
        batch: cfg.batch,
        lr: cfg.lr,
        seed,
        loss_history: history,
        final_loss,
        aborted,
    });
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn frames(n: usize, n_mels: usize, t: usize, seed: u64) -> FrameTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Array3::from_shape_simple_fn((n, n_mels, t), || rng.random::<f32>());
        FrameTensor::from_parts(a, 1, (0..n).collect(), 16000, 512).unwrap()
    }

    #[test]
    fn init_shapes_and_determinism() {
        let m = lstm_ae_init(128, 64, 7).unwrap();
        assert_eq!(m.encoder.wx.dim(), (128, 256));
        assert_eq!(m.encoder.wh.dim(), (64, 256));
        for g in 0..4 {
            assert_eq!(m.encoder.gate_matrix(g).dim(), (64, 192));
        }
        assert_eq!(m.encoder.b.len(), 256);
        assert!(m.encoder.b.slice(s![64..128]).iter().all(|&b| b == 1.0));
        assert!(m.encoder.b.slice(s![..64]).iter().all(|&b| b == 0.0));
        let bound = 1.0 / 8.0;
        assert!(m.encoder.wx.iter().all(|w| w.abs() <= bound));
        assert_eq!(m, lstm_ae_init(128, 64, 7).unwrap());
        assert_ne!(m, lstm_ae_init(128, 64, 8).unwrap());
    }

    #[test]
    fn gate_blocks_round_trip() {
        let m = lstm_ae_init(5, 3, 1).unwrap();
        let mats: Vec<_> = (0..4).map(|g| m.encoder.gate_matrix(g)).collect();
        let bs: Vec<_> = (0..4).map(|g| m.encoder.gate_bias(g)).collect();
        assert_eq!(LstmCell::from_gates(5, 3, &mats, &bs), m.encoder);
    }

    #[test]
    fn identical_frames_identical_scores_and_batching() {
        let m = lstm_ae_init(6, 4, 3).unwrap();
        let f = frames(150, 6, 5, 2);
        let dup = f.select(&[3, 3, 3]);
        let s = lstm_ae_score(&m, &dup).unwrap();
        assert!(s[0] == s[1] && s[1] == s[2]);

        let all = lstm_ae_score(&m, &f).unwrap();
        for i in [0, 63, 64, 149] {
            let one = lstm_ae_score(&m, &f.select(&[i])).unwrap()[0];
            assert!((one - all[i]).abs() < 1e-12);
        }
        let fwd = lstm_ae_forward(&m, &f).unwrap();
        assert_eq!(fwd.mse.len(), 150);
        assert_eq!(fwd.inputs.dim(), fwd.reconstructions.dim());
    }

    #[test]
    fn shape_mismatch() {
        let m = lstm_ae_init(6, 4, 3).unwrap();
        assert!(matches!(lstm_ae_score(&m, &frames(2, 7, 3, 0)), Err(AadError::ShapeMismatch { .. })));
    }
}
