//! Readout network mapping pose-set features to a grasp value.
//!
//! Architecture: a shared per-entry layer reduces each entry's features, the results
//! are concatenated and reduced again, two hidden blocks follow, and a scalar logit is
//! squashed by the logistic function. Hidden activations are softplus, which keeps the
//! logit growing roughly linearly away from the training data instead of saturating.
//!
//! Parameters are stored flat, layer by layer, each as a row-major weight matrix
//! (`out x in`) followed by its bias vector.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};
use rand::Rng;

use super::features::FEATURES_PER_ENTRY;
use crate::error::{GraspError, Result};

/// Fixed input scaling: lengths are expressed in units of 5 cm and alignment is
/// stretched; occupancy is left as it is.
pub const FEATURE_SCALE: [f64; FEATURES_PER_ENTRY] = [20.0, 1.0, 5.0, 20.0, 20.0, 20.0];

fn input_scale(k: usize) -> f64 {
    FEATURE_SCALE.get(k).copied().unwrap_or(1.0)
}

const MAGIC: &[u8; 4] = b"GGEW";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkShape {
    pub entries: usize,
    pub entry_features: usize,
    pub entry_width: usize,
    pub concat_width: usize,
    pub hidden: [usize; 2],
}

impl Default for NetworkShape {
    fn default() -> Self {
        NetworkShape {
            entries: crate::se3::PoseSet5::default_template().len(),
            entry_features: FEATURES_PER_ENTRY,
            entry_width: 16,
            concat_width: 64,
            hidden: [64, 64],
        }
    }
}

impl NetworkShape {
    pub fn feature_len(&self) -> usize {
        self.entries * self.entry_features
    }

    /// `(inputs, outputs)` of the dense layers after the shared entry layer.
    fn dense_layers(&self) -> [(usize, usize); 4] {
        [
            (self.entries * self.entry_width, self.concat_width),
            (self.concat_width, self.hidden[0]),
            (self.hidden[0], self.hidden[1]),
            (self.hidden[1], 1),
        ]
    }

    fn entry_params(&self) -> usize {
        self.entry_width * (self.entry_features + 1)
    }

    pub fn param_count(&self) -> usize {
        self.entry_params() + self.dense_layers().iter().map(|(i, o)| o * (i + 1)).sum::<usize>()
    }

    /// Header sizes, in file order.
    fn sizes(&self) -> [usize; 7] {
        [
            self.entries,
            self.entry_features,
            self.entry_width,
            self.concat_width,
            self.hidden[0],
            self.hidden[1],
            1,
        ]
    }
}

/// Parameters of the readout network.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatorWeights {
    pub shape: NetworkShape,
    pub params: Vec<f64>,
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    input: Vec<f64>,
    entry_out: Vec<f64>,
    dense_out: Vec<Vec<f64>>,
    pub logit: f64,
    pub value: f64,
}

/// Softplus, `ln(1 + e^z)`.
fn act(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Derivative of softplus written in terms of its output `a`: `1 - e^-a`.
fn act_deriv(a: f64) -> f64 {
    -(-a).exp_m1()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl EvaluatorWeights {
    pub fn zeros(shape: NetworkShape) -> Self {
        EvaluatorWeights {
            shape,
            params: vec![0.0; shape.param_count()],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(shape: NetworkShape, rng: &mut R) -> Self {
        let mut params = Vec::with_capacity(shape.param_count());
        let mut layer = |fan_in: usize, fan_out: usize, params: &mut Vec<f64>| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.random_range(-limit..=limit)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        };
        layer(shape.entry_features, shape.entry_width, &mut params);
        for (i, o) in shape.dense_layers() {
            layer(i, o, &mut params);
        }
        EvaluatorWeights { shape, params }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn forward(&self, features: &[f64]) -> Result<ForwardPass> {
        let s = &self.shape;
        if features.len() != s.feature_len() {
            return Err(GraspError::DimensionMismatch {
                expected: s.feature_len(),
                actual: features.len(),
            });
        }
        let input: Vec<f64> = features
            .iter()
            .enumerate()
            .map(|(i, f)| f * input_scale(i % s.entry_features))
            .collect();
        let (we, be) = self.params[..s.entry_params()].split_at(s.entry_width * s.entry_features);
        let mut entry_out = Vec::with_capacity(s.entries * s.entry_width);
        for e in 0..s.entries {
            let x = &input[e * s.entry_features..(e + 1) * s.entry_features];
            for o in 0..s.entry_width {
                let row = &we[o * s.entry_features..(o + 1) * s.entry_features];
                let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + be[o];
                entry_out.push(act(z));
            }
        }
        let mut offset = s.entry_params();
        let mut dense_out: Vec<Vec<f64>> = Vec::with_capacity(4);
        let layers = s.dense_layers();
        let mut logit = 0.0;
        for (li, &(ni, no)) in layers.iter().enumerate() {
            let x = dense_out.last().unwrap_or(&entry_out);
            let w = &self.params[offset..offset + ni * no];
            let b = &self.params[offset + ni * no..offset + ni * no + no];
            offset += no * (ni + 1);
            let last = li + 1 == layers.len();
            let out: Vec<f64> = (0..no)
                .map(|o| {
                    let z = w[o * ni..(o + 1) * ni].iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + b[o];
                    if last {
                        z
                    } else {
                        act(z)
                    }
                })
                .collect();
            if last {
                logit = out[0];
            } else {
                dense_out.push(out);
            }
        }
        Ok(ForwardPass {
            input,
            entry_out,
            dense_out,
            logit,
            value: sigmoid(logit),
        })
    }

    /// Backpropagates `d(loss)/d(logit)`, accumulating parameter gradients into
    /// `param_grad` when given and returning the gradient with respect to the
    /// (unscaled) features.
    pub fn backward(&self, pass: &ForwardPass, dlogit: f64, mut param_grad: Option<&mut [f64]>) -> Vec<f64> {
        let s = &self.shape;
        let layers = s.dense_layers();
        // Offsets of each dense layer.
        let mut offsets = [0usize; 4];
        let mut off = s.entry_params();
        for (k, (ni, no)) in layers.iter().enumerate() {
            offsets[k] = off;
            off += no * (ni + 1);
        }
        let mut delta = vec![dlogit];
        for li in (0..layers.len()).rev() {
            let (ni, no) = layers[li];
            let x: &[f64] = if li == 0 { &pass.entry_out } else { &pass.dense_out[li - 1] };
            let w = &self.params[offsets[li]..offsets[li] + ni * no];
            if let Some(g) = param_grad.as_deref_mut() {
                let (gw, gb) = g[offsets[li]..offsets[li] + no * (ni + 1)].split_at_mut(ni * no);
                for o in 0..no {
                    let d = delta[o];
                    if d != 0.0 {
                        for (gwi, xi) in gw[o * ni..(o + 1) * ni].iter_mut().zip(x) {
                            *gwi += d * xi;
                        }
                    }
                    gb[o] += d;
                }
            }
            let mut dx = vec![0.0; ni];
            for o in 0..no {
                let d = delta[o];
                for (dxi, wi) in dx.iter_mut().zip(&w[o * ni..(o + 1) * ni]) {
                    *dxi += d * wi;
                }
            }
            // Through the activation that produced x.
            for (dxi, xi) in dx.iter_mut().zip(x) {
                *dxi *= act_deriv(*xi);
            }
            delta = dx;
        }
        // `delta` is now d/d(pre-activation) of the entry layer outputs.
        let (we, _) = self.params[..s.entry_params()].split_at(s.entry_width * s.entry_features);
        let mut dinput = vec![0.0; s.feature_len()];
        for e in 0..s.entries {
            let x = &pass.input[e * s.entry_features..(e + 1) * s.entry_features];
            for o in 0..s.entry_width {
                let d = delta[e * s.entry_width + o];
                let row = &we[o * s.entry_features..(o + 1) * s.entry_features];
                for k in 0..s.entry_features {
                    dinput[e * s.entry_features + k] += d * row[k];
                }
                if let Some(g) = param_grad.as_deref_mut() {
                    for k in 0..s.entry_features {
                        g[o * s.entry_features + k] += d * x[k];
                    }
                    g[s.entry_width * s.entry_features + o] += d;
                }
            }
        }
        for (i, d) in dinput.iter_mut().enumerate() {
            *d *= input_scale(i % s.entry_features);
        }
        dinput
    }

    fn scaled_entry_rows(&self, batch: &[&[f64]]) -> Result<DMatrix<f64>> {
        let s = &self.shape;
        let rows = batch.len() * s.entries;
        let mut x = DMatrix::zeros(rows, s.entry_features);
        for (b, f) in batch.iter().enumerate() {
            if f.len() != s.feature_len() {
                return Err(GraspError::DimensionMismatch {
                    expected: s.feature_len(),
                    actual: f.len(),
                });
            }
            for e in 0..s.entries {
                for k in 0..s.entry_features {
                    x[(b * s.entries + e, k)] = f[e * s.entry_features + k] * input_scale(k);
                }
            }
        }
        Ok(x)
    }

    /// Batched forward pass, one sample per row. Used for training.
    pub fn forward_batch(&self, batch: &[&[f64]]) -> Result<BatchPass> {
        let s = &self.shape;
        let n = batch.len();
        let x = self.scaled_entry_rows(batch)?;
        let (we, be) = self.params[..s.entry_params()].split_at(s.entry_width * s.entry_features);
        let mut ze = &x * DMatrixView::from_slice(we, s.entry_features, s.entry_width);
        for (o, b) in be.iter().enumerate() {
            ze.column_mut(o).add_scalar_mut(*b);
        }
        ze.apply(|v| *v = act(*v));
        let mut h = DMatrix::zeros(n, s.entries * s.entry_width);
        for b in 0..n {
            for e in 0..s.entries {
                for o in 0..s.entry_width {
                    h[(b, e * s.entry_width + o)] = ze[(b * s.entries + e, o)];
                }
            }
        }
        let mut acts = vec![h];
        let mut off = s.entry_params();
        let layers = s.dense_layers();
        for (li, &(ni, no)) in layers.iter().enumerate() {
            let wt = DMatrixView::from_slice(&self.params[off..off + ni * no], ni, no);
            let mut z = acts.last().expect("input") * wt;
            for o in 0..no {
                z.column_mut(o).add_scalar_mut(self.params[off + ni * no + o]);
            }
            if li + 1 < layers.len() {
                z.apply(|v| *v = act(*v));
            }
            acts.push(z);
            off += no * (ni + 1);
        }
        let logits = acts.pop().expect("output").column(0).iter().copied().collect();
        Ok(BatchPass { x, acts, logits })
    }

    /// Accumulates parameter gradients of `sum_b dlogits[b] * logit_b` into `grad`.
    pub fn backward_batch(&self, pass: &BatchPass, dlogits: &[f64], grad: &mut [f64]) {
        let s = &self.shape;
        let n = dlogits.len();
        let layers = s.dense_layers();
        let mut offsets = [0usize; 4];
        let mut off = s.entry_params();
        for (k, (ni, no)) in layers.iter().enumerate() {
            offsets[k] = off;
            off += no * (ni + 1);
        }
        let mut delta = DMatrix::from_column_slice(n, 1, dlogits);
        for li in (0..layers.len()).rev() {
            let (ni, no) = layers[li];
            let h = &pass.acts[li];
            let o = offsets[li];
            {
                let (gw, gb) = grad[o..o + no * (ni + 1)].split_at_mut(ni * no);
                DMatrixViewMut::from_slice(gw, ni, no).gemm_tr(1.0, h, &delta, 1.0);
                for (k, g) in gb.iter_mut().enumerate() {
                    *g += delta.column(k).sum();
                }
            }
            let wt = DMatrixView::from_slice(&self.params[o..o + ni * no], ni, no);
            let mut dh = &delta * wt.transpose();
            dh.zip_apply(h, |d, a| *d *= act_deriv(a));
            delta = dh;
        }
        let mut dze = DMatrix::zeros(n * s.entries, s.entry_width);
        for b in 0..n {
            for e in 0..s.entries {
                for o in 0..s.entry_width {
                    dze[(b * s.entries + e, o)] = delta[(b, e * s.entry_width + o)];
                }
            }
        }
        let (gw, gb) = grad[..s.entry_params()].split_at_mut(s.entry_width * s.entry_features);
        DMatrixViewMut::from_slice(gw, s.entry_features, s.entry_width).gemm_tr(1.0, &pass.x, &dze, 1.0);
        for (k, g) in gb.iter_mut().enumerate() {
            *g += dze.column(k).sum();
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let sizes = self.shape.sizes();
        let mut out = Vec::with_capacity(32 + 8 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.shape.feature_len() as u32).to_le_bytes());
        out.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
        for s in sizes {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| GraspError::InvalidWeights(m.to_string());
        let mut take = |n: usize| -> Result<Vec<u8>> {
            let mut buf = vec![0u8; n];
            bytes.read_exact(&mut buf).map_err(|_| bad("truncated"))?;
            Ok(buf)
        };
        let u32_at = |b: Vec<u8>| u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize;
        if take(4)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32_at(take(4)?);
        if version != FORMAT_VERSION as usize {
            return Err(GraspError::InvalidWeights(format!("unsupported version {version}")));
        }
        let feature_len = u32_at(take(4)?);
        let n_sizes = u32_at(take(4)?);
        if n_sizes != 7 {
            return Err(bad("unexpected layer count"));
        }
        let mut sizes = [0usize; 7];
        for s in sizes.iter_mut() {
            *s = u32_at(take(4)?);
        }
        if sizes.contains(&0) || sizes[6] != 1 {
            return Err(bad("invalid layer sizes"));
        }
        if sizes[1] != FEATURES_PER_ENTRY {
            return Err(bad("unsupported per-entry feature count"));
        }
        let shape = NetworkShape {
            entries: sizes[0],
            entry_features: sizes[1],
            entry_width: sizes[2],
            concat_width: sizes[3],
            hidden: [sizes[4], sizes[5]],
        };
        if feature_len != shape.feature_len() {
            return Err(GraspError::DimensionMismatch {
                expected: shape.feature_len(),
                actual: feature_len,
            });
        }
        let b = take(8)?;
        let count = u64::from_le_bytes(b.try_into().expect("8 bytes")) as usize;
        if count != shape.param_count() {
            return Err(GraspError::DimensionMismatch {
                expected: shape.param_count(),
                actual: count,
            });
        }
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            let b = take(8)?;
            params.push(f64::from_le_bytes(b.try_into().expect("8 bytes")));
        }
        if !bytes.is_empty() {
            return Err(bad("trailing bytes"));
        }
        let w = EvaluatorWeights { shape, params };
        if !w.is_finite() {
            return Err(bad("non-finite parameter"));
        }
        Ok(w)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| GraspError::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| GraspError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| GraspError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Batched activations. `acts[0]` is the concatenated entry layer output and
/// `acts[k]` the output of dense layer `k`.
#[derive(Debug, Clone)]
pub struct BatchPass {
    x: DMatrix<f64>,
    acts: Vec<DMatrix<f64>>,
    pub logits: Vec<f64>,
}

/// Logistic output of the readout network.
pub fn evaluator_value(weights: &EvaluatorWeights, features: &[f64]) -> Result<f64> {
    Ok(weights.forward(features)?.value)
}
