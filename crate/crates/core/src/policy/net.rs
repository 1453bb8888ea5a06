use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::real::Real;
use super::{Example, PolicyModel};
use crate::error::{Error, Result};
use crate::samegame::EncodedBoard;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// Zero-pad by `kernel / 2` so the spatial size is kept.
    Same,
    /// No padding; each side shrinks by `kernel / 2`.
    Valid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayerSpec {
    pub kernel: usize,
    pub filters: usize,
    pub padding: Padding,
}

impl ConvLayerSpec {
    pub const fn new(kernel: usize, filters: usize, padding: Padding) -> ConvLayerSpec {
        ConvLayerSpec {
            kernel,
            filters,
            padding,
        }
    }
}

/// Architecture of the convolutional policy: ELU convolutions over the padded
/// one-hot board, then a linear softmax head over the `height × width` grid.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvPolicyConfig {
    pub height: usize,
    pub width: usize,
    pub colors: u8,
    pub layers: Vec<ConvLayerSpec>,
    pub seed: u64,
}

impl ConvPolicyConfig {
    /// Thirteen 64-filter layers; 1×1 kernels at layers 11 and 13, spatial
    /// size kept in 1–8 and 12 and reduced by valid 3×3 convolutions in 9–10.
    pub fn full(height: usize, width: usize, colors: u8, seed: u64) -> ConvPolicyConfig {
        use Padding::*;
        let mut layers = vec![ConvLayerSpec::new(3, 64, Same); 8];
        layers.push(ConvLayerSpec::new(3, 64, Valid));
        layers.push(ConvLayerSpec::new(3, 64, Valid));
        layers.push(ConvLayerSpec::new(1, 64, Valid));
        layers.push(ConvLayerSpec::new(3, 64, Same));
        layers.push(ConvLayerSpec::new(1, 64, Valid));
        ConvPolicyConfig {
            height,
            width,
            colors,
            layers,
            seed,
        }
    }

    /// Four 16-filter layers, for runs that must finish in minutes.
    pub fn desk(height: usize, width: usize, colors: u8, seed: u64) -> ConvPolicyConfig {
        ConvPolicyConfig::reduced(height, width, colors, 16, seed)
    }

    /// Same layout as [`desk`](Self::desk) with a configurable filter count.
    pub fn reduced(height: usize, width: usize, colors: u8, filters: usize, seed: u64) -> ConvPolicyConfig {
        use Padding::*;
        ConvPolicyConfig {
            height,
            width,
            colors,
            layers: vec![
                ConvLayerSpec::new(3, filters, Same),
                ConvLayerSpec::new(3, filters, Same),
                ConvLayerSpec::new(3, filters, Valid),
                ConvLayerSpec::new(1, filters, Valid),
            ],
            seed,
        }
    }

    /// Two small layers; cheap enough to finite-difference every parameter.
    pub fn tiny(height: usize, width: usize, colors: u8, seed: u64) -> ConvPolicyConfig {
        ConvPolicyConfig {
            height,
            width,
            colors,
            layers: vec![
                ConvLayerSpec::new(3, 4, Padding::Valid),
                ConvLayerSpec::new(1, 3, Padding::Valid),
            ],
            seed,
        }
    }

    /// `(rows, cols, channels)` of the padded input.
    pub fn input_shape(&self) -> (usize, usize, usize) {
        (self.height + 2, self.width + 2, self.colors as usize + 1)
    }

    pub fn outputs(&self) -> usize {
        self.height * self.width
    }

    pub(crate) fn layout(&self) -> Result<Layout> {
        if self.layers.is_empty() {
            return Err(Error::Config("network needs at least one conv layer".into()));
        }
        let (mut h, mut w, mut c) = self.input_shape();
        let mut offset = 0;
        let mut convs = Vec::with_capacity(self.layers.len());
        for (i, spec) in self.layers.iter().enumerate() {
            if spec.kernel == 0 || spec.kernel % 2 == 0 || spec.filters == 0 {
                return Err(Error::Config(format!(
                    "layer {}: kernel must be odd and filters positive",
                    i + 1
                )));
            }
            let pad = match spec.padding {
                Padding::Same => spec.kernel / 2,
                Padding::Valid => 0,
            };
            if h + 2 * pad < spec.kernel || w + 2 * pad < spec.kernel {
                return Err(Error::Config(format!(
                    "layer {}: {}x{} input too small for kernel {}",
                    i + 1,
                    h,
                    w,
                    spec.kernel
                )));
            }
            let (oh, ow) = (h + 2 * pad - spec.kernel + 1, w + 2 * pad - spec.kernel + 1);
            let patch = c * spec.kernel * spec.kernel;
            convs.push(ConvShape {
                in_c: c,
                in_h: h,
                in_w: w,
                k: spec.kernel,
                pad,
                out_c: spec.filters,
                out_h: oh,
                out_w: ow,
                w_off: offset,
                b_off: offset + spec.filters * patch,
            });
            offset += spec.filters * patch + spec.filters;
            (h, w, c) = (oh, ow, spec.filters);
        }
        let inp = h * w * c;
        let out = self.outputs();
        let head = HeadShape {
            inp,
            out,
            w_off: offset,
            b_off: offset + inp * out,
        };
        offset += inp * out + out;
        Ok(Layout {
            convs,
            head,
            params: offset,
        })
    }
}

#[derive(Clone, Debug)]
pub(crate) struct ConvShape {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub k: usize,
    pub pad: usize,
    pub out_c: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub w_off: usize,
    pub b_off: usize,
}

impl ConvShape {
    fn patch(&self) -> usize {
        self.in_c * self.k * self.k
    }

    fn fan_in(&self) -> usize {
        self.patch()
    }
}

#[derive(Clone, Debug)]
pub(crate) struct HeadShape {
    pub inp: usize,
    pub out: usize,
    pub w_off: usize,
    pub b_off: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub convs: Vec<ConvShape>,
    pub head: HeadShape,
    pub params: usize,
}

/// Convolutional softmax policy with a flat parameter vector.
///
/// Parameter order: for each conv layer, weights `[filters][in_channels][k][k]`
/// then biases `[filters]`; then head weights `[outputs][inputs]` (inputs
/// ordered channel, row, col) and head biases `[outputs]`.
#[derive(Clone, Debug)]
pub struct Network<T: Real> {
    config: ConvPolicyConfig,
    layout: Layout,
    params: Vec<T>,
}

/// The `f32` network used for search and training.
pub type ConvPolicy = Network<f32>;

struct HeadOut<T> {
    flat: Vec<T>,
    probs: Vec<T>,
    lse: Vec<T>,
    logits: Vec<T>,
}

/// `logits` laid out `[output][sample]`.
fn mean_cross_entropy<T: Real, E: Example>(lse: &[T], logits: &[T], batch: &[E]) -> f64 {
    let n = batch.len();
    let total: f64 = batch
        .iter()
        .enumerate()
        .map(|(b, e)| (lse[b] - logits[e.target() * n + b]).as_f64())
        .sum();
    total / n as f64
}

/// Activations kept from a forward pass for backpropagation.
struct Trace<T> {
    batch: usize,
    /// `acts[0]` is the input, `acts[l + 1]` the ELU output of conv layer
    /// `l`; each laid out `[channel][sample][row][col]`.
    acts: Vec<Vec<T>>,
    cols: Vec<Vec<T>>,
    /// Head input, `[features][sample]`.
    flat: Vec<T>,
    /// `[sample][output]`.
    probs: Vec<T>,
    /// Per-sample log-sum-exp of the logits.
    lse: Vec<T>,
    logits: Vec<T>,
}

impl<T: Real> Network<T> {
    /// Fresh network with seeded fan-in scaled uniform weights and zero biases.
    pub fn new(config: ConvPolicyConfig) -> Result<Network<T>> {
        let layout = config.layout()?;
        let mut params = vec![T::zero(); layout.params];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut fill = |slice: &mut [T], fan_in: usize| {
            let limit = (3.0 / fan_in as f64).sqrt();
            for p in slice {
                *p = T::from_f64(rng.random_range(-limit..limit));
            }
        };
        for s in &layout.convs {
            fill(&mut params[s.w_off..s.b_off], s.fan_in());
        }
        let h = &layout.head;
        fill(&mut params[h.w_off..h.b_off], h.inp);
        Ok(Network { config, layout, params })
    }

    pub fn from_params(config: ConvPolicyConfig, params: Vec<T>) -> Result<Network<T>> {
        let layout = config.layout()?;
        if params.len() != layout.params {
            return Err(Error::ModelFormat(format!(
                "expected {} parameters, got {}",
                layout.params,
                params.len()
            )));
        }
        Ok(Network { config, layout, params })
    }

    pub fn config(&self) -> &ConvPolicyConfig {
        &self.config
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    /// Range of the head's weights and biases within the parameter vector.
    pub fn head_range(&self) -> std::ops::Range<usize> {
        self.layout.head.w_off..self.params.len()
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            config: self.config.clone(),
            layout: self.layout.clone(),
            params: self.params.iter().map(|p| U::from_f64(p.as_f64())).collect(),
        }
    }

    fn check_input(&self, x: &EncodedBoard) -> Result<()> {
        let expected = self.config.input_shape();
        if x.shape() != expected {
            return Err(Error::Shape {
                expected,
                actual: x.shape(),
            });
        }
        Ok(())
    }

    fn gather_inputs<'a, I>(&self, inputs: I, batch: usize) -> Result<Vec<T>>
    where
        I: IntoIterator<Item = &'a EncodedBoard>,
    {
        let (h, w, c) = self.config.input_shape();
        let plane = h * w;
        let mut data = vec![T::zero(); c * batch * plane];
        for (b, x) in inputs.into_iter().enumerate() {
            self.check_input(x)?;
            let src = x.as_slice();
            for ch in 0..c {
                let dst = &mut data[(ch * batch + b) * plane..][..plane];
                for (d, &s) in dst.iter_mut().zip(&src[ch * plane..][..plane]) {
                    *d = T::from_f64(s as f64);
                }
            }
        }
        Ok(data)
    }

    fn forward(&self, input: Vec<T>, batch: usize) -> Trace<T> {
        let mut acts = Vec::with_capacity(self.layout.convs.len() + 1);
        let mut cols = Vec::with_capacity(self.layout.convs.len());
        acts.push(input);
        for l in 0..self.layout.convs.len() {
            let (col, z) = self.conv_forward(l, acts.last().unwrap(), batch);
            cols.push(col);
            acts.push(z);
        }
        let h = self.head_forward(acts.last().unwrap(), batch);
        Trace {
            batch,
            acts,
            cols,
            flat: h.flat,
            probs: h.probs,
            lse: h.lse,
            logits: h.logits,
        }
    }

    /// Conv layer `l` with ELU: `(im2col buffer, output)`.
    fn conv_forward(&self, l: usize, input: &[T], batch: usize) -> (Vec<T>, Vec<T>) {
        let s = &self.layout.convs[l];
        let n = batch * s.out_h * s.out_w;
        let mut col = vec![T::zero(); s.patch() * n];
        im2col(input, s, batch, &mut col);
        let mut z = vec![T::zero(); s.out_c * n];
        let weights = &self.params[s.w_off..s.b_off];
        T::gemm(
            s.out_c,
            s.patch(),
            n,
            weights,
            s.patch() as isize,
            1,
            &col,
            n as isize,
            1,
            T::zero(),
            &mut z,
            n as isize,
            1,
        );
        for f in 0..s.out_c {
            let bias = self.params[s.b_off + f];
            for v in &mut z[f * n..(f + 1) * n] {
                *v = elu(*v + bias);
            }
        }
        (col, z)
    }

    fn head_forward(&self, last: &[T], batch: usize) -> HeadOut<T> {
        let head = &self.layout.head;
        let (c, hw) = match self.layout.convs.last() {
            Some(s) => (s.out_c, s.out_h * s.out_w),
            None => unreachable!("layout has at least one conv"),
        };
        let mut flat = vec![T::zero(); head.inp * batch];
        for ch in 0..c {
            for b in 0..batch {
                let src = &last[(ch * batch + b) * hw..][..hw];
                for (p, &v) in src.iter().enumerate() {
                    flat[(ch * hw + p) * batch + b] = v;
                }
            }
        }
        let mut logits = vec![T::zero(); head.out * batch];
        T::gemm(
            head.out,
            head.inp,
            batch,
            &self.params[head.w_off..head.b_off],
            head.inp as isize,
            1,
            &flat,
            batch as isize,
            1,
            T::zero(),
            &mut logits,
            batch as isize,
            1,
        );
        let mut probs = vec![T::zero(); head.out * batch];
        let mut lse = vec![T::zero(); batch];
        for b in 0..batch {
            let mut max = T::neg_infinity();
            for o in 0..head.out {
                let z = logits[o * batch + b] + self.params[head.b_off + o];
                logits[o * batch + b] = z;
                max = max.max(z);
            }
            let mut sum = T::zero();
            for o in 0..head.out {
                sum = sum + (logits[o * batch + b] - max).exp();
            }
            let l = max + sum.ln();
            lse[b] = l;
            for o in 0..head.out {
                probs[b * head.out + o] = (logits[o * batch + b] - l).exp();
            }
        }
        HeadOut {
            flat,
            probs,
            lse,
            logits,
        }
    }

    /// Activations entering each conv layer and the head, in the layout
    /// [`loss_from`](Self::loss_from) expects.
    pub(crate) fn layer_inputs<E: Example>(&self, batch: &[E]) -> Result<Vec<Vec<T>>> {
        self.check_batch(batch)?;
        let inputs: Vec<_> = batch.iter().map(|e| e.input()).collect();
        let data = self.gather_inputs(inputs.iter().map(|c| c.as_ref()), batch.len())?;
        Ok(self.forward(data, batch.len()).acts)
    }

    /// First layer whose output depends on parameter `i`; the head counts as
    /// layer `convs.len()`.
    pub(crate) fn layer_of_param(&self, i: usize) -> usize {
        self.layout
            .convs
            .iter()
            .position(|s| i < s.b_off + s.out_c)
            .unwrap_or(self.layout.convs.len())
    }

    /// Batch loss computed from the activations entering `layer`, running
    /// only that layer and the ones after it.
    pub(crate) fn loss_from<E: Example>(&self, input: &[T], layer: usize, batch: &[E]) -> f64 {
        let n = batch.len();
        let mut owned: Option<Vec<T>> = None;
        for l in layer..self.layout.convs.len() {
            let z = self.conv_forward(l, owned.as_deref().unwrap_or(input), n).1;
            owned = Some(z);
        }
        let h = self.head_forward(owned.as_deref().unwrap_or(input), n);
        mean_cross_entropy(&h.lse, &h.logits, batch)
    }

    /// Softmax output over the `height × width` action grid.
    pub fn forward_probs(&self, input: &EncodedBoard) -> Result<Vec<T>> {
        let data = self.gather_inputs(std::iter::once(input), 1)?;
        Ok(self.forward(data, 1).probs)
    }

    pub fn forward_probs_batch(&self, inputs: &[EncodedBoard]) -> Result<Vec<Vec<T>>> {
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        let data = self.gather_inputs(inputs, inputs.len())?;
        let t = self.forward(data, inputs.len());
        let out = self.layout.head.out;
        Ok(t.probs.chunks(out).map(|c| c.to_vec()).collect())
    }

    /// Mean cross-entropy of the targets over the batch.
    pub fn loss<E: Example>(&self, batch: &[E]) -> Result<f64> {
        self.check_batch(batch)?;
        let inputs: Vec<_> = batch.iter().map(|e| e.input()).collect();
        let data = self.gather_inputs(inputs.iter().map(|c| c.as_ref()), batch.len())?;
        let t = self.forward(data, batch.len());
        Ok(self.batch_loss(&t, batch))
    }

    fn check_batch<E: Example>(&self, batch: &[E]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::Config("empty batch".into()));
        }
        let outputs = self.layout.head.out;
        if let Some(e) = batch.iter().find(|e| e.target() >= outputs) {
            return Err(Error::Config(format!(
                "target {} outside the {outputs}-way head",
                e.target()
            )));
        }
        Ok(())
    }

    fn batch_loss<E: Example>(&self, t: &Trace<T>, batch: &[E]) -> f64 {
        mean_cross_entropy(&t.lse, &t.logits, batch)
    }

    /// Mean cross-entropy and its gradient with respect to every parameter.
    pub fn loss_and_gradients<E: Example>(&self, batch: &[E]) -> Result<(f64, Vec<T>)> {
        self.check_batch(batch)?;
        let inputs: Vec<_> = batch.iter().map(|e| e.input()).collect();
        let data = self.gather_inputs(inputs.iter().map(|c| c.as_ref()), batch.len())?;
        let t = self.forward(data, batch.len());
        let loss = self.batch_loss(&t, batch);
        let grads = self.backward(t, batch);
        Ok((loss, grads))
    }

    fn backward<E: Example>(&self, t: Trace<T>, batch: &[E]) -> Vec<T> {
        let n = t.batch;
        let scale = T::from_f64(1.0 / n as f64);
        let head = &self.layout.head;
        let mut grads = vec![T::zero(); self.params.len()];

        // dL/dlogits = (p - onehot) / B, laid out [output][sample]
        let mut dlogits = vec![T::zero(); head.out * n];
        for b in 0..n {
            for o in 0..head.out {
                dlogits[o * n + b] = t.probs[b * head.out + o] * scale;
            }
            let tgt = batch[b].target();
            dlogits[tgt * n + b] = dlogits[tgt * n + b] - scale;
        }
        {
            let (gw, gb) = grads[head.w_off..].split_at_mut(head.inp * head.out);
            T::gemm(
                head.out,
                n,
                head.inp,
                &dlogits,
                n as isize,
                1,
                &t.flat,
                1,
                n as isize,
                T::zero(),
                gw,
                head.inp as isize,
                1,
            );
            for o in 0..head.out {
                gb[o] = dlogits[o * n..(o + 1) * n].iter().fold(T::zero(), |a, &v| a + v);
            }
        }
        let mut dflat = vec![T::zero(); head.inp * n];
        T::gemm(
            head.inp,
            head.out,
            n,
            &self.params[head.w_off..head.b_off],
            1,
            head.inp as isize,
            &dlogits,
            n as isize,
            1,
            T::zero(),
            &mut dflat,
            n as isize,
            1,
        );

        let last = self.layout.convs.last().unwrap();
        let hw = last.out_h * last.out_w;
        let mut dact = vec![T::zero(); last.out_c * n * hw];
        for ch in 0..last.out_c {
            for b in 0..n {
                let dst = &mut dact[(ch * n + b) * hw..][..hw];
                for (p, d) in dst.iter_mut().enumerate() {
                    *d = dflat[(ch * hw + p) * n + b];
                }
            }
        }

        for (l, s) in self.layout.convs.iter().enumerate().rev() {
            let cols_n = n * s.out_h * s.out_w;
            let act = &t.acts[l + 1];
            // ELU'(z) recovered from the output: 1 where a >= 0, a + 1 otherwise
            for (d, &a) in dact.iter_mut().zip(act) {
                if a < T::zero() {
                    *d = *d * (a + T::one());
                }
            }
            {
                let (gw, rest) = grads[s.w_off..].split_at_mut(s.out_c * s.patch());
                T::gemm(
                    s.out_c,
                    cols_n,
                    s.patch(),
                    &dact,
                    cols_n as isize,
                    1,
                    &t.cols[l],
                    1,
                    cols_n as isize,
                    T::zero(),
                    gw,
                    s.patch() as isize,
                    1,
                );
                for f in 0..s.out_c {
                    rest[f] = dact[f * cols_n..(f + 1) * cols_n].iter().fold(T::zero(), |a, &v| a + v);
                }
            }
            if l == 0 {
                break;
            }
            let mut dcol = vec![T::zero(); s.patch() * cols_n];
            T::gemm(
                s.patch(),
                s.out_c,
                cols_n,
                &self.params[s.w_off..s.b_off],
                1,
                s.patch() as isize,
                &dact,
                cols_n as isize,
                1,
                T::zero(),
                &mut dcol,
                cols_n as isize,
                1,
            );
            let mut prev = vec![T::zero(); s.in_c * n * s.in_h * s.in_w];
            col2im(&dcol, s, n, &mut prev);
            dact = prev;
        }
        grads
    }
}

impl PolicyModel for Network<f32> {
    fn input_shape(&self) -> (usize, usize, usize) {
        self.config.input_shape()
    }

    fn evaluate(&self, input: &EncodedBoard) -> Result<Vec<f32>> {
        self.forward_probs(input)
    }

    fn evaluate_batch(&self, inputs: &[EncodedBoard]) -> Result<Vec<Vec<f32>>> {
        self.forward_probs_batch(inputs)
    }
}

/// ELU with unit scale: `x` for `x >= 0`, `exp(x) - 1` otherwise.
pub fn elu<T: Real>(x: T) -> T {
    if x >= T::zero() {
        x
    } else {
        x.exp_m1()
    }
}

/// Unfolds `[channel][sample][row][col]` input into a
/// `[channel·k·k][sample·out_row·out_col]` patch matrix.
fn im2col<T: Real>(src: &[T], s: &ConvShape, batch: usize, dst: &mut [T]) {
    let (h, w, k) = (s.in_h, s.in_w, s.k);
    let out_plane = s.out_h * s.out_w;
    let n = batch * out_plane;
    for c in 0..s.in_c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let dst_row = &mut dst[row * n..(row + 1) * n];
                for b in 0..batch {
                    let plane = &src[(c * batch + b) * h * w..][..h * w];
                    for oy in 0..s.out_h {
                        let y = (oy + ki) as isize - s.pad as isize;
                        let out = &mut dst_row[b * out_plane + oy * s.out_w..][..s.out_w];
                        if y < 0 || y >= h as isize {
                            out.fill(T::zero());
                            continue;
                        }
                        let src_row = &plane[y as usize * w..][..w];
                        for (ox, o) in out.iter_mut().enumerate() {
                            let x = (ox + kj) as isize - s.pad as isize;
                            *o = if x < 0 || x >= w as isize {
                                T::zero()
                            } else {
                                src_row[x as usize]
                            };
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates patch gradients back onto the input.
fn col2im<T: Real>(src: &[T], s: &ConvShape, batch: usize, dst: &mut [T]) {
    let (h, w, k) = (s.in_h, s.in_w, s.k);
    let out_plane = s.out_h * s.out_w;
    let n = batch * out_plane;
    for c in 0..s.in_c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let src_row = &src[row * n..(row + 1) * n];
                for b in 0..batch {
                    let plane = &mut dst[(c * batch + b) * h * w..][..h * w];
                    for oy in 0..s.out_h {
                        let y = (oy + ki) as isize - s.pad as isize;
                        if y < 0 || y >= h as isize {
                            continue;
                        }
                        let vals = &src_row[b * out_plane + oy * s.out_w..][..s.out_w];
                        for (ox, &v) in vals.iter().enumerate() {
                            let x = (ox + kj) as isize - s.pad as isize;
                            if x >= 0 && x < w as isize {
                                let i = y as usize * w + x as usize;
                                plane[i] = plane[i] + v;
                            }
                        }
                    }
                }
            }
        }
    }
}
