//! Parameters, forward pass, and exact reverse-mode gradients.

use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{mel_frames_for_eeg, GeneratorConfig, LossBreakdown};
use crate::ctc::{self, TokenSequence};
use crate::error::{Error, Result};

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_prime(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let u = C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// y[t] += scale * x[t + shift] over the valid overlap.
fn shifted_axpy(y: &mut [f64], x: &[f64], shift: isize, scale: f64) {
    let (y_start, x_start) = if shift >= 0 { (0usize, shift as usize) } else { ((-shift) as usize, 0usize) };
    if x_start >= x.len() || y_start >= y.len() {
        return;
    }
    let len = (x.len() - x_start).min(y.len() - y_start);
    for i in 0..len {
        y[y_start + i] += scale * x[x_start + i];
    }
}

/// Dot of x[t + shift] with y[t] over the valid overlap.
fn shifted_dot(y: &[f64], x: &[f64], shift: isize) -> f64 {
    let (y_start, x_start) = if shift >= 0 { (0usize, shift as usize) } else { ((-shift) as usize, 0usize) };
    if x_start >= x.len() || y_start >= y.len() {
        return 0.0;
    }
    let len = (x.len() - x_start).min(y.len() - y_start);
    let mut acc = 0.0;
    for i in 0..len {
        acc += y[y_start + i] * x[x_start + i];
    }
    acc
}

/// All trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub embed_w: Array2<f64>,       // D x C
    pub embed_b: Array1<f64>,       // D
    pub enc_w: Vec<Array3<f64>>,    // blocks of D x D x k_e
    pub enc_b: Vec<Array1<f64>>,    // blocks of D
    pub adapter_w: Array2<f64>,     // D x k_a (depthwise)
    pub adapter_b: Array1<f64>,     // D
    pub dec_w: Array2<f64>,         // M x D
    pub dec_b: Array1<f64>,         // M
    pub ctc_w: Array2<f64>,         // V x D
    pub ctc_b: Array1<f64>,         // V
}

impl Params {
    fn init(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Self {
        let (c, d) = (cfg.in_channels, cfg.embed_dim);
        let uniform = |rng: &mut ChaCha8Rng, scale: f64| rng.random::<f64>() * 2.0 * scale - scale;
        let embed_scale = (1.0 / c as f64).sqrt();
        let enc_scale = (1.0 / (d * cfg.encoder_kernel) as f64).sqrt();
        let adapter_scale = (1.0 / cfg.kernel as f64).sqrt();
        let head_scale = (1.0 / d as f64).sqrt();
        Params {
            embed_w: Array2::from_shape_fn((d, c), |_| uniform(rng, embed_scale)),
            embed_b: Array1::zeros(d),
            enc_w: (0..cfg.encoder_blocks)
                .map(|_| Array3::from_shape_fn((d, d, cfg.encoder_kernel), |_| uniform(rng, enc_scale)))
                .collect(),
            enc_b: (0..cfg.encoder_blocks).map(|_| Array1::zeros(d)).collect(),
            adapter_w: Array2::from_shape_fn((d, cfg.kernel), |_| uniform(rng, adapter_scale)),
            adapter_b: Array1::zeros(d),
            dec_w: Array2::from_shape_fn((cfg.mel_bands, d), |_| uniform(rng, head_scale)),
            dec_b: Array1::zeros(cfg.mel_bands),
            ctc_w: Array2::from_shape_fn((cfg.vocab_size, d), |_| uniform(rng, head_scale)),
            ctc_b: Array1::zeros(cfg.vocab_size),
        }
    }

    fn zeros_like(&self) -> Self {
        Params {
            embed_w: Array2::zeros(self.embed_w.raw_dim()),
            embed_b: Array1::zeros(self.embed_b.raw_dim()),
            enc_w: self.enc_w.iter().map(|w| Array3::zeros(w.raw_dim())).collect(),
            enc_b: self.enc_b.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            adapter_w: Array2::zeros(self.adapter_w.raw_dim()),
            adapter_b: Array1::zeros(self.adapter_b.raw_dim()),
            dec_w: Array2::zeros(self.dec_w.raw_dim()),
            dec_b: Array1::zeros(self.dec_b.raw_dim()),
            ctc_w: Array2::zeros(self.ctc_w.raw_dim()),
            ctc_b: Array1::zeros(self.ctc_b.raw_dim()),
        }
    }

    /// Named parameter groups in flattening order.
    pub fn group_names(&self) -> Vec<String> {
        let mut names = vec!["embed_w".to_string(), "embed_b".to_string()];
        for i in 0..self.enc_w.len() {
            names.push(format!("enc{i}_w"));
            names.push(format!("enc{i}_b"));
        }
        names.extend(
            ["adapter_w", "adapter_b", "dec_w", "dec_b", "ctc_w", "ctc_b"]
                .iter()
                .map(|s| s.to_string()),
        );
        names
    }

    fn group_slices(&self) -> Vec<Vec<f64>> {
        let mut groups = vec![
            self.embed_w.iter().copied().collect::<Vec<f64>>(),
            self.embed_b.to_vec(),
        ];
        for (w, b) in self.enc_w.iter().zip(self.enc_b.iter()) {
            groups.push(w.iter().copied().collect());
            groups.push(b.to_vec());
        }
        groups.push(self.adapter_w.iter().copied().collect());
        groups.push(self.adapter_b.to_vec());
        groups.push(self.dec_w.iter().copied().collect());
        groups.push(self.dec_b.to_vec());
        groups.push(self.ctc_w.iter().copied().collect());
        groups.push(self.ctc_b.to_vec());
        groups
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.group_slices().concat()
    }

    /// Per-group index ranges into the flat vector.
    pub fn group_ranges(&self) -> Vec<(String, std::ops::Range<usize>)> {
        let names = self.group_names();
        let mut out = Vec::new();
        let mut offset = 0;
        for (name, group) in names.into_iter().zip(self.group_slices()) {
            out.push((name, offset..offset + group.len()));
            offset += group.len();
        }
        out
    }

    pub fn from_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter().copied();
        let mut fill1 = |a: &mut Array1<f64>| a.iter_mut().for_each(|v| *v = it.next().unwrap());
        fn fill_iter<'a, D: ndarray::Dimension>(
            a: &mut ndarray::Array<f64, D>,
            it: &mut impl Iterator<Item = f64>,
        ) {
            a.iter_mut().for_each(|v| *v = it.next().unwrap());
        }
        fill_iter(&mut self.embed_w, &mut it);
        fill1(&mut self.embed_b);
        for i in 0..self.enc_w.len() {
            fill_iter(&mut self.enc_w[i], &mut it);
            fill_iter(&mut self.enc_b[i], &mut it);
        }
        fill_iter(&mut self.adapter_w, &mut it);
        fill1(&mut self.adapter_b);
        fill_iter(&mut self.dec_w, &mut it);
        fill1(&mut self.dec_b);
        fill_iter(&mut self.ctc_w, &mut it);
        fill1(&mut self.ctc_b);
        assert!(it.next().is_none(), "flat vector longer than parameter count");
    }

    pub fn len(&self) -> usize {
        self.group_slices().iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Forward activations cached for the backward pass.
pub struct ForwardCache {
    eeg: Array2<f64>,
    h_embed: Array2<f64>,
    // Per encoder block: input and pre-activation.
    enc_inputs: Vec<Array2<f64>>,
    enc_pre: Vec<Array2<f64>>,
    adapter_input: Array2<f64>,
    features: Array2<f64>, // D x T_mel after resampling
    interp: Vec<(usize, usize, f64)>,
    pub mel: Array2<f64>,    // T_mel x M
    pub logits: Array2<f64>, // T_mel x V
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorModel {
    pub cfg: GeneratorConfig,
    pub params: Params,
}

impl GeneratorModel {
    pub fn new(cfg: GeneratorConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let params = Params::init(&cfg, &mut rng);
        Ok(GeneratorModel { cfg, params })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// One-sided receptive field in EEG samples for one output frame:
    /// encoder stacks plus the adapter width, plus one interpolation
    /// neighbor.
    pub fn receptive_field_eeg_samples(&self) -> usize {
        self.cfg.encoder_blocks * (self.cfg.encoder_kernel / 2) + self.cfg.kernel / 2 + 1
    }

    /// Mel and CTC-logit frames for a min-max normalized trial.
    pub fn forward(&self, eeg: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        let cache = self.forward_cached(eeg)?;
        Ok((cache.mel, cache.logits))
    }

    fn conv_same(&self, input: &Array2<f64>, w: &Array3<f64>, b: &Array1<f64>) -> Array2<f64> {
        let (d_out, d_in, k) = w.dim();
        let t = input.ncols();
        let pad = (k - 1) as isize / 2;
        let mut out = Array2::zeros((d_out, t));
        for o in 0..d_out {
            {
                let mut row = out.row_mut(o);
                row.fill(b[o]);
            }
            let out_row = out.row_mut(o).into_slice().expect("contiguous");
            for i in 0..d_in {
                let in_row = input.row(i);
                let in_slice = in_row.as_slice().expect("contiguous");
                for j in 0..k {
                    shifted_axpy(out_row, in_slice, j as isize - pad, w[[o, i, j]]);
                }
            }
        }
        out
    }

    pub fn forward_cached(&self, eeg: &Array2<f64>) -> Result<ForwardCache> {
        if eeg.nrows() != self.cfg.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "generator expects {} channels, got {}",
                self.cfg.in_channels,
                eeg.nrows()
            )));
        }
        if eeg.ncols() == 0 {
            return Err(Error::EmptyInput("generator input"));
        }
        let t_eeg = eeg.ncols();
        let d = self.cfg.embed_dim;

        // Embedding: pointwise channel mixing.
        let mut h = self.params.embed_w.dot(eeg);
        for (mut row, &b) in h.rows_mut().into_iter().zip(self.params.embed_b.iter()) {
            row.mapv_inplace(|v| v + b);
        }
        let h_embed = h.clone();

        // Encoder blocks: conv -> GELU -> residual.
        let mut enc_inputs = Vec::with_capacity(self.cfg.encoder_blocks);
        let mut enc_pre = Vec::with_capacity(self.cfg.encoder_blocks);
        for (w, b) in self.params.enc_w.iter().zip(self.params.enc_b.iter()) {
            enc_inputs.push(h.clone());
            let u = self.conv_same(&h, w, b);
            enc_pre.push(u.clone());
            h = &h + &u.mapv(gelu);
        }

        // Depthwise local-context adapter with residual.
        let adapter_input = h.clone();
        let k_a = self.cfg.kernel;
        let pad = (k_a - 1) as isize / 2;
        let mut v = Array2::zeros((d, t_eeg));
        for ch in 0..d {
            let in_row = adapter_input.row(ch);
            let in_slice = in_row.as_slice().expect("contiguous");
            let out_row = v.row_mut(ch).into_slice().expect("contiguous");
            for j in 0..k_a {
                shifted_axpy(out_row, in_slice, j as isize - pad, self.params.adapter_w[[ch, j]]);
            }
            for val in out_row.iter_mut() {
                *val += self.params.adapter_b[ch];
            }
        }
        h = &h + &v;

        // Resample the EEG time base onto Mel frames by linear interpolation.
        let t_mel = mel_frames_for_eeg(t_eeg);
        let step = 250.0 * 256.0 / 22050.0;
        let mut interp = Vec::with_capacity(t_mel);
        let mut features = Array2::zeros((d, t_mel));
        for tau in 0..t_mel {
            let p = tau as f64 * step;
            let i0 = (p.floor() as usize).min(t_eeg - 1);
            let i1 = (i0 + 1).min(t_eeg - 1);
            let frac = if i1 > i0 { p - i0 as f64 } else { 0.0 };
            interp.push((i0, i1, frac));
            for ch in 0..d {
                features[[ch, tau]] = (1.0 - frac) * h[[ch, i0]] + frac * h[[ch, i1]];
            }
        }

        // Pointwise heads.
        let mut mel = features.t().dot(&self.params.dec_w.t());
        for mut row in mel.rows_mut() {
            row += &self.params.dec_b;
        }
        let mut logits = features.t().dot(&self.params.ctc_w.t());
        for mut row in logits.rows_mut() {
            row += &self.params.ctc_b;
        }

        Ok(ForwardCache {
            eeg: eeg.clone(),
            h_embed,
            enc_inputs,
            enc_pre,
            adapter_input,
            features,
            interp,
            mel,
            logits,
        })
    }

    /// Mean absolute error between prediction and target, over all
    /// `frames x bands` cells.
    pub fn loss_rec(pred: &Array2<f64>, target: &Array2<f64>) -> Result<f64> {
        if pred.dim() != target.dim() {
            return Err(Error::ShapeMismatch(format!(
                "reconstruction loss: {:?} vs {:?}",
                pred.dim(),
                target.dim()
            )));
        }
        let n = pred.len() as f64;
        Ok(pred
            .iter()
            .zip(target.iter())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / n)
    }

    /// Weighted total loss from precomputed components.
    pub fn loss_total(
        &self,
        pred: &Array2<f64>,
        target: &Array2<f64>,
        logits: &Array2<f64>,
        tokens: &TokenSequence,
    ) -> Result<LossBreakdown> {
        let l_rec = Self::loss_rec(pred, target)?;
        let l_ctc = if self.cfg.lambda_ctc != 0.0 {
            ctc::ctc_loss(logits, tokens)?
        } else {
            0.0
        };
        Ok(LossBreakdown::combine(l_rec, l_ctc, self.cfg.lambda_rec, self.cfg.lambda_ctc))
    }

    /// Loss and exact gradients for one trial.
    pub fn loss_and_gradients(
        &self,
        eeg: &Array2<f64>,
        target_mel: &Array2<f64>,
        tokens: &TokenSequence,
    ) -> Result<(LossBreakdown, Params)> {
        let cache = self.forward_cached(eeg)?;
        if cache.mel.dim() != target_mel.dim() {
            return Err(Error::ShapeMismatch(format!(
                "target mel {:?} vs predicted {:?}",
                target_mel.dim(),
                cache.mel.dim()
            )));
        }

        let l_rec = Self::loss_rec(&cache.mel, target_mel)?;
        let n = cache.mel.len() as f64;
        // d l_rec / d mel: sign / N, zero exactly at ties.
        let mut d_mel = Array2::zeros(cache.mel.raw_dim());
        for ((dm, &p), &t) in d_mel.iter_mut().zip(cache.mel.iter()).zip(target_mel.iter()) {
            *dm = self.cfg.lambda_rec * (p - t).signum() * f64::from(p != t) / n;
        }

        let (l_ctc, d_logits) = if self.cfg.lambda_ctc != 0.0 {
            let (loss, grad) = ctc::ctc_loss_grad(&cache.logits, tokens)?;
            (loss, grad.mapv(|g| g * self.cfg.lambda_ctc))
        } else {
            (0.0, Array2::zeros(cache.logits.raw_dim()))
        };

        let breakdown =
            LossBreakdown::combine(l_rec, l_ctc, self.cfg.lambda_rec, self.cfg.lambda_ctc);
        if !breakdown.total.is_finite() {
            return Err(Error::InvalidArgument("non-finite loss".into()));
        }
        let grads = self.backward(&cache, &d_mel, &d_logits);
        Ok((breakdown, grads))
    }

    fn backward(&self, cache: &ForwardCache, d_mel: &Array2<f64>, d_logits: &Array2<f64>) -> Params {
        let mut g = self.params.zeros_like();
        let d = self.cfg.embed_dim;
        let t_eeg = cache.eeg.ncols();
        let t_mel = cache.features.ncols();

        // Heads.
        g.dec_w = d_mel.t().dot(&cache.features.t());
        for (gb, col) in g.dec_b.iter_mut().zip(d_mel.t().rows()) {
            *gb = col.sum();
        }
        g.ctc_w = d_logits.t().dot(&cache.features.t());
        for (gb, col) in g.ctc_b.iter_mut().zip(d_logits.t().rows()) {
            *gb = col.sum();
        }
        // d features (D x T_mel).
        let d_features = self.params.dec_w.t().dot(&d_mel.t())
            + self.params.ctc_w.t().dot(&d_logits.t());

        // Resampler backward: scatter onto the EEG time base.
        let mut dh = Array2::<f64>::zeros((d, t_eeg));
        for tau in 0..t_mel {
            let (i0, i1, frac) = cache.interp[tau];
            for ch in 0..d {
                let gv = d_features[[ch, tau]];
                dh[[ch, i0]] += (1.0 - frac) * gv;
                if i1 != i0 {
                    dh[[ch, i1]] += frac * gv;
                }
            }
        }

        // Adapter backward (residual: dh flows through both paths).
        let k_a = self.cfg.kernel;
        let pad = (k_a - 1) as isize / 2;
        let mut dh_in = dh.clone();
        for ch in 0..d {
            let dv_row = dh.row(ch);
            let dv = dv_row.as_slice().expect("contiguous");
            let x_row = cache.adapter_input.row(ch);
            let x = x_row.as_slice().expect("contiguous");
            for j in 0..k_a {
                let shift = j as isize - pad;
                g.adapter_w[[ch, j]] = shifted_dot(dv, x, shift);
                // Transpose conv: dx[t + shift] += w * dv[t].
                let din_row = dh_in.row_mut(ch).into_slice().expect("contiguous");
                shifted_axpy(din_row, dv, -shift, self.params.adapter_w[[ch, j]]);
            }
            g.adapter_b[ch] = dv.iter().sum();
        }
        let mut dh = dh_in;

        // Encoder blocks in reverse.
        for block in (0..self.cfg.encoder_blocks).rev() {
            let pre = &cache.enc_pre[block];
            let input = &cache.enc_inputs[block];
            let k_e = self.cfg.encoder_kernel;
            let pad = (k_e - 1) as isize / 2;
            // du = dh * gelu'(pre)
            let mut du = Array2::zeros((d, t_eeg));
            for ch in 0..d {
                for t in 0..t_eeg {
                    du[[ch, t]] = dh[[ch, t]] * gelu_prime(pre[[ch, t]]);
                }
            }
            let mut dh_in = dh.clone(); // residual path
            for o in 0..d {
                let du_row = du.row(o);
                let du_slice = du_row.as_slice().expect("contiguous");
                g.enc_b[block][o] = du_slice.iter().sum();
                for i in 0..d {
                    let x_row = input.row(i);
                    let x = x_row.as_slice().expect("contiguous");
                    for j in 0..k_e {
                        let shift = j as isize - pad;
                        g.enc_w[block][[o, i, j]] = shifted_dot(du_slice, x, shift);
                        let din_row = dh_in.row_mut(i).into_slice().expect("contiguous");
                        shifted_axpy(din_row, du_slice, -shift, self.params.enc_w[block][[o, i, j]]);
                    }
                }
            }
            dh = dh_in;
        }

        // Embedding backward.
        g.embed_w = dh.dot(&cache.eeg.t());
        for (gb, row) in g.embed_b.iter_mut().zip(dh.rows()) {
            *gb = row.sum();
        }
        g
    }
}
