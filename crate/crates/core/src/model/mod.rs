//! The bias-expansion network.
//!
//! Pipeline per batch `x` (NCHW, values in `[0,1]`):
//!
//! 1. encoder: stride-2 conv + ReLU stages; all but the last are taps
//!    `z_1..z_n`, the last output is the bottleneck `z`;
//! 2. decoder: nearest ×2 upsample + conv stages mirroring the encoder, its
//!    intermediate outputs are the taps `z_k'`, the last stage ends in a
//!    sigmoid and yields the reconstruction `x_o`;
//! 3. bias image `x̂ = |x − x_o|`;
//! 4. latent-space attention `s = Σ_k LSA(AAP(z_k), AAP(z_k')) + z`;
//! 5. fusion `v = upsample(W_f * s) ⊙ x̂`;
//! 6. classifier: flatten → dense(128) → ReLU → dense(1) → sigmoid.

mod config;
mod lsa;

pub use config::EncoderDecoderConfig;
pub use lsa::{lsa_aggregate, lsa_attention_map};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, Error, Result};
use crate::numerics::{Graph, Scalar, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct Conv<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    /// `[in × out]`
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BENetModel<T> {
    config: EncoderDecoderConfig,
    pub encoder: Vec<Conv<T>>,
    pub decoder: Vec<Conv<T>>,
    /// Per-scale `[C_z, C_k, 1, 1]` kernels shared by the encoder and
    /// decoder tap of the same scale.
    pub projections: Vec<Tensor<T>>,
    /// `[C_img, C_z, 1, 1]`
    pub fusion: Tensor<T>,
    pub hidden: Dense<T>,
    pub output: Dense<T>,
}

/// Model parameters recorded on a graph, in [`BENetModel::named_params`]
/// order.
#[derive(Debug, Clone)]
pub struct BoundParams {
    encoder: Vec<(Var, Var)>,
    decoder: Vec<(Var, Var)>,
    projections: Vec<Var>,
    fusion: Var,
    hidden: (Var, Var),
    output: (Var, Var),
}

impl BoundParams {
    pub fn vars(&self) -> Vec<Var> {
        let mut v = Vec::new();
        for (w, b) in self.encoder.iter().chain(&self.decoder) {
            v.push(*w);
            v.push(*b);
        }
        v.extend(&self.projections);
        v.push(self.fusion);
        v.extend([self.hidden.0, self.hidden.1, self.output.0, self.output.1]);
        v
    }
}

/// Graph handles for every intermediate of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardVars {
    pub input: Var,
    pub reconstruction: Var,
    pub bias: Var,
    pub encoder_taps: Vec<Var>,
    /// Aligned with `encoder_taps`: `decoder_taps[k]` has the shape of
    /// `encoder_taps[k]`.
    pub decoder_taps: Vec<Var>,
    pub latent: Var,
    pub attention_maps: Vec<Var>,
    pub attention: Var,
    pub fused: Var,
    /// `[N]`
    pub logit: Var,
    /// `[N]`
    pub probability: Var,
}

/// Materialised forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<T> {
    pub reconstruction: Tensor<T>,
    pub bias: Tensor<T>,
    pub encoder_taps: Vec<Tensor<T>>,
    pub decoder_taps: Vec<Tensor<T>>,
    pub latent: Tensor<T>,
    pub attention_maps: Vec<Tensor<T>>,
    pub attention: Tensor<T>,
    pub fused: Tensor<T>,
    pub logit: Vec<T>,
    pub probability: Vec<T>,
}

fn uniform<T: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| T::from_f64_lossy(rng.random_range(-bound..bound)))
        .collect();
    Tensor::new(shape, data).unwrap()
}

fn he_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

impl<T: Scalar> BENetModel<T> {
    /// Randomly initialised model (He-uniform kernels, zero biases).
    pub fn new(config: EncoderDecoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stages = &config.stage_channels;
        let cz = config.bottleneck_channels();

        let mut encoder = Vec::new();
        let mut cin = config.channels;
        for &cout in stages {
            encoder.push(Conv {
                weight: uniform(&mut rng, &[cout, cin, 3, 3], he_bound(cin * 9)),
                bias: Tensor::zeros(&[cout]),
            });
            cin = cout;
        }

        let mut decoder = Vec::new();
        for i in 0..stages.len() {
            let cin = stages[stages.len() - 1 - i];
            let cout = if i + 1 < stages.len() {
                stages[stages.len() - 2 - i]
            } else {
                config.channels
            };
            decoder.push(Conv {
                weight: uniform(&mut rng, &[cout, cin, 3, 3], he_bound(cin * 9)),
                bias: Tensor::zeros(&[cout]),
            });
        }

        let projections = stages[..stages.len() - 1]
            .iter()
            .map(|&ck| uniform(&mut rng, &[cz, ck, 1, 1], (3.0 / ck as f64).sqrt()))
            .collect();
        let fusion = uniform(&mut rng, &[config.channels, cz, 1, 1], (3.0 / cz as f64).sqrt());

        let flat = config.flat_image_len();
        let hw = config.hidden_width;
        let hidden = Dense {
            weight: uniform(&mut rng, &[flat, hw], he_bound(flat)),
            bias: Tensor::zeros(&[hw]),
        };
        let output = Dense {
            weight: uniform(&mut rng, &[hw, 1], (3.0 / hw as f64).sqrt()),
            bias: Tensor::zeros(&[1]),
        };

        Ok(Self {
            config,
            encoder,
            decoder,
            projections,
            fusion,
            hidden,
            output,
        })
    }

    pub fn config(&self) -> &EncoderDecoderConfig {
        &self.config
    }

    /// Stable parameter identifiers, in canonical order.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 0..self.encoder.len() {
            names.push(format!("encoder.{i}.weight"));
            names.push(format!("encoder.{i}.bias"));
        }
        for i in 0..self.decoder.len() {
            names.push(format!("decoder.{i}.weight"));
            names.push(format!("decoder.{i}.bias"));
        }
        for k in 0..self.projections.len() {
            names.push(format!("lsa.projection.{k}.weight"));
        }
        names.push("fusion.weight".into());
        names.extend(
            ["classifier.hidden.weight", "classifier.hidden.bias", "classifier.output.weight", "classifier.output.bias"]
                .map(String::from),
        );
        names
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        let mut p = Vec::new();
        for c in self.encoder.iter().chain(&self.decoder) {
            p.push(&c.weight);
            p.push(&c.bias);
        }
        p.extend(&self.projections);
        p.push(&self.fusion);
        p.extend([&self.hidden.weight, &self.hidden.bias, &self.output.weight, &self.output.bias]);
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut p = Vec::new();
        for c in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            p.push(&mut c.weight);
            p.push(&mut c.bias);
        }
        p.extend(self.projections.iter_mut());
        p.push(&mut self.fusion);
        p.extend([
            &mut self.hidden.weight,
            &mut self.hidden.bias,
            &mut self.output.weight,
            &mut self.output.bias,
        ]);
        p
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor<T>)> {
        self.param_names().into_iter().zip(self.params()).collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Replace every parameter; shapes must match the current ones.
    pub fn set_params(&mut self, values: Vec<Tensor<T>>) -> Result<()> {
        let mut slots = self.params_mut();
        if slots.len() != values.len() {
            return Err(Error::Config(format!(
                "expected {} parameter tensors, got {}",
                slots.len(),
                values.len()
            )));
        }
        for (slot, v) in slots.iter_mut().zip(&values) {
            slot.check_same_shape(v, "set_params")?;
        }
        for (slot, v) in slots.into_iter().zip(values) {
            *slot = v;
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> BENetModel<U> {
        let conv = |c: &Conv<T>| Conv {
            weight: c.weight.cast(),
            bias: c.bias.cast(),
        };
        BENetModel {
            config: self.config.clone(),
            encoder: self.encoder.iter().map(conv).collect(),
            decoder: self.decoder.iter().map(conv).collect(),
            projections: self.projections.iter().map(|t| t.cast()).collect(),
            fusion: self.fusion.cast(),
            hidden: Dense {
                weight: self.hidden.weight.cast(),
                bias: self.hidden.bias.cast(),
            },
            output: Dense {
                weight: self.output.weight.cast(),
                bias: self.output.bias.cast(),
            },
        }
    }

    /// Record every parameter on `g`.
    pub fn bind(&self, g: &Graph<T>, trainable: bool) -> BoundParams {
        let leaf = |t: &Tensor<T>| g.leaf(t.clone(), trainable);
        let conv = |c: &Conv<T>| (leaf(&c.weight), leaf(&c.bias));
        BoundParams {
            encoder: self.encoder.iter().map(conv).collect(),
            decoder: self.decoder.iter().map(conv).collect(),
            projections: self.projections.iter().map(leaf).collect(),
            fusion: leaf(&self.fusion),
            hidden: (leaf(&self.hidden.weight), leaf(&self.hidden.bias)),
            output: (leaf(&self.output.weight), leaf(&self.output.bias)),
        }
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        let c = &self.config;
        match shape {
            &[n, ch, h, w] if n > 0 && ch == c.channels && h == c.image_size && w == c.image_size => Ok(()),
            s => shape_err(
                "forward",
                format!("expected [N, {}, {1}, {1}], got {s:?}", c.channels, c.image_size),
            ),
        }
    }

    /// Autoencoder pass. Returns `(x_o, encoder taps, z, decoder taps)` with
    /// decoder taps aligned to encoder taps.
    pub fn reconstruct(&self, g: &Graph<T>, p: &BoundParams, x: Var) -> Result<(Var, Vec<Var>, Var, Vec<Var>)> {
        self.check_input(&g.shape(x))?;
        let stages = self.encoder.len();

        let mut h = x;
        let mut taps = Vec::with_capacity(stages - 1);
        for (i, &(w, b)) in p.encoder.iter().enumerate() {
            h = g.conv2d(h, w, 2, 1)?;
            h = g.channel_bias(h, b)?;
            h = g.relu(h);
            if i + 1 < stages {
                taps.push(h);
            }
        }
        let latent = h;

        let mut dec_taps = Vec::with_capacity(stages - 1);
        for (i, &(w, b)) in p.decoder.iter().enumerate() {
            h = g.upsample_nearest(h, 2)?;
            h = g.conv2d(h, w, 1, 1)?;
            h = g.channel_bias(h, b)?;
            if i + 1 < stages {
                h = g.relu(h);
                dec_taps.push(h);
            } else {
                h = g.sigmoid(h);
            }
        }
        dec_taps.reverse();
        Ok((h, taps, latent, dec_taps))
    }

    /// `v = upsample(W_f * s) ⊙ x̂`.
    pub fn fuse(&self, g: &Graph<T>, p: &BoundParams, attention: Var, bias: Var) -> Result<Var> {
        let bs = g.shape(bias);
        let projected = g.conv2d(attention, p.fusion, 1, 0)?;
        let up = g.upsample_bilinear(projected, bs[2], bs[3])?;
        g.mul(up, bias)
    }

    /// Returns `(logit [N], probability [N])`.
    pub fn classify(&self, g: &Graph<T>, p: &BoundParams, fused: Var) -> Result<(Var, Var)> {
        let s = g.shape(fused);
        let n = s[0];
        let flat: usize = s[1..].iter().product();
        let h = g.reshape(fused, &[n, flat])?;
        let h = g.matmul(h, p.hidden.0)?;
        let h = g.row_bias(h, p.hidden.1)?;
        let h = g.relu(h);
        let o = g.matmul(h, p.output.0)?;
        let o = g.row_bias(o, p.output.1)?;
        let logit = g.reshape(o, &[n])?;
        Ok((logit, g.sigmoid(logit)))
    }

    pub fn forward(&self, g: &Graph<T>, p: &BoundParams, x: Var) -> Result<ForwardVars> {
        let (recon, encoder_taps, latent, decoder_taps) = self.reconstruct(g, p, x)?;
        let diff = g.sub(x, recon)?;
        let bias = g.abs(diff);
        let (attention, attention_maps) = if self.config.use_lsa {
            lsa_aggregate(g, &encoder_taps, &decoder_taps, latent, &p.projections, self.config.patch_size)?
        } else {
            (latent, Vec::new())
        };
        let fused = self.fuse(g, p, attention, bias)?;
        let (logit, probability) = self.classify(g, p, fused)?;
        Ok(ForwardVars {
            input: x,
            reconstruction: recon,
            bias,
            encoder_taps,
            decoder_taps,
            latent,
            attention_maps,
            attention,
            fused,
            logit,
            probability,
        })
    }

    /// Inference pass returning every intermediate as a tensor.
    pub fn trace(&self, x: &Tensor<T>) -> Result<ForwardTrace<T>> {
        let g = Graph::new();
        let p = self.bind(&g, false);
        let xv = g.constant(x.clone());
        let f = self.forward(&g, &p, xv)?;
        let val = |v: Var| (*g.value(v)).clone();
        Ok(ForwardTrace {
            reconstruction: val(f.reconstruction),
            bias: val(f.bias),
            encoder_taps: f.encoder_taps.iter().map(|&v| val(v)).collect(),
            decoder_taps: f.decoder_taps.iter().map(|&v| val(v)).collect(),
            latent: val(f.latent),
            attention_maps: f.attention_maps.iter().map(|&v| val(v)).collect(),
            attention: val(f.attention),
            fused: val(f.fused),
            logit: val(f.logit).into_data(),
            probability: val(f.probability).into_data(),
        })
    }
}
