use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{GcmError, Result};
use crate::image::ImageGrid;
use crate::scalar::Real;

pub const WEIGHT_MAGIC: &[u8; 4] = b"GCMW";
pub const WEIGHT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    None,
    Relu,
}

impl Activation {
    fn code(self) -> u8 {
        match self {
            Activation::None => 0,
            Activation::Relu => 1,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::None),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }
}

/// Stored per-channel statistics, applied as `scale·(x − mean)/√var + shift`.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub scale: Vec<T>,
    pub shift: Vec<T>,
}

impl<T: Real> Normalization<T> {
    pub fn identity(channels: usize) -> Self {
        Normalization {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
            scale: vec![T::one(); channels],
            shift: vec![T::zero(); channels],
        }
    }

    fn channels(&self) -> usize {
        self.mean.len()
    }

    fn apply(&self, ch: usize, x: T) -> T {
        self.scale[ch] * (x - self.mean[ch]) / self.var[ch].sqrt() + self.shift[ch]
    }
}

/// One convolution (correlation, "same" size, replicated borders) followed by
/// normalization and an optional activation.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T> {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kh: usize,
    pub kw: usize,
    /// Row-major `(out, in, kh, kw)`.
    pub weights: Vec<T>,
    pub bias: Vec<T>,
    pub norm: Normalization<T>,
    pub activation: Activation,
}

impl<T: Real> ConvLayer<T> {
    fn validate(&self) -> std::result::Result<(), String> {
        if self.out_channels == 0 || self.in_channels == 0 {
            return Err("zero channels".into());
        }
        if self.kh.is_multiple_of(2) || self.kw.is_multiple_of(2) {
            return Err(format!("kernel {}x{} is not odd", self.kh, self.kw));
        }
        let n = self.out_channels * self.in_channels * self.kh * self.kw;
        if self.weights.len() != n {
            return Err(format!("expected {n} weights, got {}", self.weights.len()));
        }
        if self.bias.len() != self.out_channels || self.norm.channels() != self.out_channels {
            return Err("bias or normalization length differs from output channels".into());
        }
        let n = &self.norm;
        if [n.var.len(), n.scale.len(), n.shift.len()].iter().any(|&l| l != self.out_channels) {
            return Err("normalization vectors have inconsistent lengths".into());
        }
        let all = self
            .weights
            .iter()
            .chain(&self.bias)
            .chain(&n.mean)
            .chain(&n.var)
            .chain(&n.scale)
            .chain(&n.shift);
        if all.clone().any(|v| !v.is_finite()) {
            return Err("non-finite parameter".into());
        }
        if n.var.iter().any(|&v| v <= T::zero()) {
            return Err("normalization variance must be positive".into());
        }
        Ok(())
    }

    fn forward(&self, input: &[Vec<T>], h: usize, w: usize) -> Vec<Vec<T>> {
        let (rh, rw) = (self.kh / 2, self.kw / 2);
        let (ph, pw) = (h + 2 * rh, w + 2 * rw);
        let padded: Vec<Vec<T>> = input
            .iter()
            .map(|ch| {
                let mut p = Vec::with_capacity(ph * pw);
                for r in 0..ph {
                    let sr = r.saturating_sub(rh).min(h - 1);
                    for c in 0..pw {
                        let sc = c.saturating_sub(rw).min(w - 1);
                        p.push(ch[sr * w + sc]);
                    }
                }
                p
            })
            .collect();
        let ksz = self.kh * self.kw;
        (0..self.out_channels)
            .into_par_iter()
            .map(|o| {
                let mut acc = vec![self.bias[o]; h * w];
                for (i, p) in padded.iter().enumerate() {
                    let base = (o * self.in_channels + i) * ksz;
                    for a in 0..self.kh {
                        for b in 0..self.kw {
                            let wt = self.weights[base + a * self.kw + b];
                            if wt == T::zero() {
                                continue;
                            }
                            for r in 0..h {
                                let src = &p[(r + a) * pw + b..(r + a) * pw + b + w];
                                let dst = &mut acc[r * w..(r + 1) * w];
                                for (d, &s) in dst.iter_mut().zip(src) {
                                    *d += wt * s;
                                }
                            }
                        }
                    }
                }
                for v in acc.iter_mut() {
                    *v = self.norm.apply(o, *v);
                    if self.activation == Activation::Relu && *v < T::zero() {
                        *v = T::zero();
                    }
                }
                acc
            })
            .collect()
    }
}

/// Feed-forward convolutional stack with an optional whole-stack skip
/// connection (`output = input + stack(input)`).
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    layers: Vec<ConvLayer<T>>,
    residual: bool,
}

impl<T: Real> Network<T> {
    pub fn new(layers: Vec<ConvLayer<T>>, residual: bool) -> Result<Self> {
        if layers.is_empty() {
            return Err(GcmError::Spec("network has no layers".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            layer.validate().map_err(|m| GcmError::Spec(format!("layer {i}: {m}")))?;
            if i > 0 && layer.in_channels != layers[i - 1].out_channels {
                return Err(GcmError::Spec(format!(
                    "layer {i}: expects {} input channels, previous layer gives {}",
                    layer.in_channels,
                    layers[i - 1].out_channels
                )));
            }
        }
        Ok(Network { layers, residual })
    }

    pub fn layers(&self) -> &[ConvLayer<T>] {
        &self.layers
    }

    pub fn residual(&self) -> bool {
        self.residual
    }

    /// Single 1×1 layer computing `scale·x + offset`, without skip.
    pub fn affine(scale: T, offset: T) -> Self {
        let layer = ConvLayer {
            out_channels: 1,
            in_channels: 1,
            kh: 1,
            kw: 1,
            weights: vec![scale],
            bias: vec![offset],
            norm: Normalization::identity(1),
            activation: Activation::None,
        };
        Network { layers: vec![layer], residual: false }
    }

    /// Residual cascade of `blocks` conv layers of width `channels`, the inner
    /// ones followed by ReLU. Weights are Gaussian with standard deviation
    /// `gain/√fan_in`, drawn in single precision so the stack round-trips
    /// exactly through a weight file.
    pub fn seeded(seed: u64, blocks: usize, channels: usize, ksize: usize, gain: f64) -> Result<Self> {
        if blocks == 0 || channels == 0 || ksize.is_multiple_of(2) {
            return Err(GcmError::Spec("seeded network needs blocks, channels > 0 and odd kernel".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(blocks);
        for b in 0..blocks {
            let cin = if b == 0 { 1 } else { channels };
            let cout = if b + 1 == blocks { 1 } else { channels };
            let std = gain / ((cin * ksize * ksize) as f64).sqrt();
            let normal = Normal::new(0.0f32, std as f32)
                .map_err(|e| GcmError::Parameter(e.to_string()))?;
            let weights = (0..cout * cin * ksize * ksize)
                .map(|_| T::lit(normal.sample(&mut rng) as f64))
                .collect();
            let bias = (0..cout)
                .map(|_| T::lit((normal.sample(&mut rng) * 0.1) as f64))
                .collect();
            layers.push(ConvLayer {
                out_channels: cout,
                in_channels: cin,
                kh: ksize,
                kw: ksize,
                weights,
                bias,
                norm: Normalization::identity(cout),
                activation: if b + 1 == blocks { Activation::None } else { Activation::Relu },
            });
        }
        Network::new(layers, true)
    }

    /// Same architecture as [`Network::seeded`] with every parameter zero.
    pub fn zeroed(blocks: usize, channels: usize, ksize: usize) -> Result<Self> {
        let mut net = Self::seeded(0, blocks, channels, ksize, 1.0)?;
        for layer in &mut net.layers {
            layer.weights.iter_mut().for_each(|v| *v = T::zero());
            layer.bias.iter_mut().for_each(|v| *v = T::zero());
        }
        Ok(net)
    }

    pub fn forward(&self, u: &ImageGrid<T>) -> Result<ImageGrid<T>> {
        let first = &self.layers[0];
        let last = &self.layers[self.layers.len() - 1];
        if first.in_channels != 1 || last.out_channels != 1 {
            return Err(GcmError::Spec(format!(
                "network maps {} to {} channels, input presents 1",
                first.in_channels, last.out_channels
            )));
        }
        let (h, w) = u.shape();
        let mut act = vec![u.data().to_vec()];
        for layer in &self.layers {
            act = layer.forward(&act, h, w);
        }
        let mut out = act.pop().expect("one output channel");
        if self.residual {
            for (o, &x) in out.iter_mut().zip(u.data()) {
                *o += x;
            }
        }
        Ok(ImageGrid::from_parts(h, w, out, u.domain()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(WEIGHT_MAGIC);
        buf.extend_from_slice(&WEIGHT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        let put = |buf: &mut Vec<u8>, vals: &[T]| {
            for v in vals {
                buf.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
            }
        };
        for l in &self.layers {
            for d in [l.out_channels, l.in_channels, l.kh, l.kw] {
                buf.extend_from_slice(&(d as u32).to_le_bytes());
            }
            buf.push(l.activation.code());
            put(&mut buf, &l.weights);
            put(&mut buf, &l.bias);
            put(&mut buf, &l.norm.mean);
            put(&mut buf, &l.norm.var);
            put(&mut buf, &l.norm.scale);
            put(&mut buf, &l.norm.shift);
        }
        buf.push(self.residual as u8);
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader { bytes, pos: 0, layer: None };
        if rd.take(4)? != WEIGHT_MAGIC {
            return Err(rd.err("bad magic header"));
        }
        let version = rd.u32()?;
        if version != WEIGHT_VERSION {
            return Err(rd.err(&format!("unsupported version {version}")));
        }
        let count = rd.u32()? as usize;
        if count == 0 {
            return Err(rd.err("zero layers"));
        }
        let mut layers = Vec::new();
        let mut prev_out = None;
        for i in 0..count {
            rd.layer = Some(i);
            let dims = [rd.u32()?, rd.u32()?, rd.u32()?, rd.u32()?].map(|d| d as usize);
            let [out_channels, in_channels, kh, kw] = dims;
            let activation = Activation::from_code(rd.u8()?)
                .ok_or_else(|| rd.err("unknown activation code"))?;
            let n = out_channels
                .checked_mul(in_channels)
                .and_then(|v| v.checked_mul(kh))
                .and_then(|v| v.checked_mul(kw))
                .ok_or_else(|| rd.err("dimension overflow"))?;
            let weights = rd.reals(n)?;
            let bias = rd.reals(out_channels)?;
            let norm = Normalization {
                mean: rd.reals(out_channels)?,
                var: rd.reals(out_channels)?,
                scale: rd.reals(out_channels)?,
                shift: rd.reals(out_channels)?,
            };
            let layer = ConvLayer { out_channels, in_channels, kh, kw, weights, bias, norm, activation };
            layer.validate().map_err(|m| rd.err(&m))?;
            if let Some(p) = prev_out {
                if p != in_channels {
                    return Err(rd.err(&format!("expects {in_channels} input channels, previous layer gives {p}")));
                }
            }
            prev_out = Some(out_channels);
            layers.push(layer);
        }
        rd.layer = None;
        let residual = match rd.u8()? {
            0 => false,
            1 => true,
            _ => return Err(rd.err("residual flag must be 0 or 1")),
        };
        if rd.pos != bytes.len() {
            return Err(rd.err("trailing bytes after residual flag"));
        }
        Ok(Network { layers, residual })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    layer: Option<usize>,
}

impl<'a> Reader<'a> {
    fn err(&self, message: &str) -> GcmError {
        GcmError::Load { layer: self.layer, message: message.to_string() }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.err("truncated file")),
        }
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn reals<T: Real>(&mut self, n: usize) -> Result<Vec<T>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| self.err("dimension overflow"))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| T::lit(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
            .collect())
    }
}
