use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mask::{build_mask, AttentionMask};
use super::posenc::{context_pos_enc_2d, feature_pos_enc, sinusoid_into};
use crate::error::{Error, Result};
use crate::ndnum::{Graph, Tensor, Var};
use crate::scalar::Scalar;
use crate::schedule::{precondition, ScheduleConfig};

/// Feed-forward nonlinearity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Gelu,
    Relu,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    pub latent_dim: usize,
    pub model_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_hidden_multiplier: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl DenoiserConfig {
    pub fn desk() -> Self {
        Self {
            latent_dim: 32,
            model_dim: 64,
            layers: 2,
            heads: 4,
            ffn_hidden_multiplier: 4,
            activation: Activation::Gelu,
        }
    }

    pub fn paper() -> Self {
        Self {
            latent_dim: 192,
            model_dim: 512,
            layers: 6,
            heads: 8,
            ffn_hidden_multiplier: 4,
            activation: Activation::Gelu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.latent_dim > 0
            && self.model_dim > 0
            && self.layers > 0
            && self.heads > 0
            && self.ffn_hidden_multiplier > 0
            && self.model_dim % self.heads == 0
            && self.model_dim % 2 == 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid denoiser config {self:?} (model_dim must be even and divisible by heads)"
            )))
        }
    }

    fn ffn_dim(&self) -> usize {
        self.model_dim * self.ffn_hidden_multiplier
    }
}

/// Which axis a sublayer attends along.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Across the features of one sample.
    Feature,
    /// Across samples, for one feature.
    Sample,
}

/// Order of the three sublayers inside each transformer layer.
pub const LAYER_PLAN: [Axis; 3] = [Axis::Feature, Axis::Feature, Axis::Sample];

/// Parameter slots of one `h + FFN(Attn(LN(h)))` sublayer.
#[derive(Clone, Copy, Debug)]
pub(crate) struct SublayerSlots {
    ln_g: usize,
    ln_b: usize,
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Clone, Debug)]
struct Layout {
    q_in_w: usize,
    q_in_b: usize,
    c_in_w: usize,
    c_in_b: usize,
    noise_w1: usize,
    noise_b1: usize,
    noise_w2: usize,
    noise_b2: usize,
    sublayers: Vec<[SublayerSlots; 3]>,
    out_ln_g: usize,
    out_ln_b: usize,
    out_w: usize,
    out_b: usize,
}

#[derive(Clone, Copy)]
enum Init {
    Normal,
    Zeros,
    Ones,
}

/// Initialization scale for projection weights.
const INIT_STD: f64 = 0.02;

struct Builder<'a, T> {
    names: Vec<String>,
    params: Vec<Tensor<T>>,
    rng: &'a mut ChaCha8Rng,
}

impl<T: Scalar> Builder<'_, T> {
    fn add(&mut self, name: String, shape: &[usize], init: Init) -> usize {
        let t = match init {
            Init::Normal => Tensor::randn(shape.to_vec(), INIT_STD, self.rng),
            Init::Zeros => Tensor::zeros(shape.to_vec()),
            Init::Ones => Tensor::full(shape.to_vec(), T::one()),
        };
        self.names.push(name);
        self.params.push(t);
        self.params.len() - 1
    }
}

/// Dual-axis attention denoiser with preconditioned output.
#[derive(Clone, Debug)]
pub struct DenoiserModel<T> {
    config: DenoiserConfig,
    names: Vec<String>,
    params: Vec<Tensor<T>>,
    layout: Layout,
}

impl<T: Scalar> DenoiserModel<T> {
    pub fn new(config: DenoiserConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder {
            names: Vec::new(),
            params: Vec::new(),
            rng: &mut rng,
        };
        let (d, dm, df) = (config.latent_dim, config.model_dim, config.ffn_dim());
        let q_in_w = b.add("query_in.weight".into(), &[d, dm], Init::Normal);
        let q_in_b = b.add("query_in.bias".into(), &[dm], Init::Zeros);
        let c_in_w = b.add("context_in.weight".into(), &[d, dm], Init::Normal);
        let c_in_b = b.add("context_in.bias".into(), &[dm], Init::Zeros);
        let noise_w1 = b.add("noise_mlp.0.weight".into(), &[dm, dm], Init::Normal);
        let noise_b1 = b.add("noise_mlp.0.bias".into(), &[dm], Init::Zeros);
        let noise_w2 = b.add("noise_mlp.1.weight".into(), &[dm, dm], Init::Normal);
        let noise_b2 = b.add("noise_mlp.1.bias".into(), &[dm], Init::Zeros);
        let mut sublayers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let mut make = |s: usize| {
                let p = |n: &str| format!("layers.{l}.{s}.{n}");
                SublayerSlots {
                    ln_g: b.add(p("norm.gain"), &[dm], Init::Ones),
                    ln_b: b.add(p("norm.bias"), &[dm], Init::Zeros),
                    wq: b.add(p("attn.q.weight"), &[dm, dm], Init::Normal),
                    bq: b.add(p("attn.q.bias"), &[dm], Init::Zeros),
                    wk: b.add(p("attn.k.weight"), &[dm, dm], Init::Normal),
                    bk: b.add(p("attn.k.bias"), &[dm], Init::Zeros),
                    wv: b.add(p("attn.v.weight"), &[dm, dm], Init::Normal),
                    bv: b.add(p("attn.v.bias"), &[dm], Init::Zeros),
                    wo: b.add(p("attn.out.weight"), &[dm, dm], Init::Normal),
                    bo: b.add(p("attn.out.bias"), &[dm], Init::Zeros),
                    w1: b.add(p("ffn.0.weight"), &[dm, df], Init::Normal),
                    b1: b.add(p("ffn.0.bias"), &[df], Init::Zeros),
                    w2: b.add(p("ffn.1.weight"), &[df, dm], Init::Zeros),
                    b2: b.add(p("ffn.1.bias"), &[dm], Init::Zeros),
                }
            };
            sublayers.push([make(0), make(1), make(2)]);
        }
        let out_ln_g = b.add("out_norm.gain".into(), &[dm], Init::Ones);
        let out_ln_b = b.add("out_norm.bias".into(), &[dm], Init::Zeros);
        let out_w = b.add("out_proj.weight".into(), &[dm, d], Init::Normal);
        let out_b = b.add("out_proj.bias".into(), &[d], Init::Zeros);
        let layout = Layout {
            q_in_w,
            q_in_b,
            c_in_w,
            c_in_b,
            noise_w1,
            noise_b1,
            noise_w2,
            noise_b2,
            sublayers,
            out_ln_g,
            out_ln_b,
            out_w,
            out_b,
        };
        let (names, params) = (b.names, b.params);
        Ok(Self {
            config,
            names,
            params,
            layout,
        })
    }

    /// Rebuilds a model from named tensors (checkpoint loading).
    pub fn from_named(config: DenoiserConfig, named: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        if named.len() != model.params.len() {
            return Err(Error::Format(format!(
                "expected {} parameters, found {}",
                model.params.len(),
                named.len()
            )));
        }
        for (i, (name, t)) in named.into_iter().enumerate() {
            if name != model.names[i] || t.shape() != model.params[i].shape() {
                return Err(Error::Format(format!(
                    "parameter {i}: expected {} {:?}, found {name} {:?}",
                    model.names[i],
                    model.params[i].shape(),
                    t.shape()
                )));
            }
            model.params[i] = t;
        }
        Ok(model)
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Binds every parameter into `g`, differentiable when `trainable`.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| if trainable { g.param(p.clone()) } else { g.constant(p.clone()) })
            .collect()
    }

    /// Sinusoidal features of `c_noise` passed through the noise MLP.
    pub fn noise_embedding(&self, g: &mut Graph<T>, p: &[Var], sigma: T) -> Result<Var> {
        if !(sigma > T::zero()) {
            return Err(Error::Domain(format!("noise embedding needs σ > 0, got {sigma}")));
        }
        let c_noise = sigma.ln() / T::lit(4.0);
        let dm = self.config.model_dim;
        let mut feats = Tensor::zeros(vec![1, dm]);
        sinusoid_into(c_noise.as_f64(), feats.data_mut());
        let x = g.constant(feats);
        let l = &self.layout;
        let h = g.linear(x, p[l.noise_w1], p[l.noise_b1])?;
        let h = g.gelu(h);
        let h = g.linear(h, p[l.noise_w2], p[l.noise_b2])?;
        g.reshape(h, &[dm])
    }

    fn activation(&self, g: &mut Graph<T>, x: Var) -> Var {
        match self.config.activation {
            Activation::Gelu => g.gelu(x),
            Activation::Relu => g.relu(x),
        }
    }

    /// Splits `(B, L, D)` into `(B·H, L, D/H)`.
    fn split_heads(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let s = g.shape(x).to_vec();
        let (b, l) = (s[0], s[1]);
        let h = self.config.heads;
        let hd = self.config.model_dim / h;
        let x = g.reshape(x, &[b, l, h, hd])?;
        let x = g.permute(x, &[0, 2, 1, 3]);
        g.reshape(x, &[b * h, l, hd])
    }

    fn merge_heads(&self, g: &mut Graph<T>, x: Var, batch: usize) -> Result<Var> {
        let s = g.shape(x).to_vec();
        let (l, hd) = (s[1], s[2]);
        let h = self.config.heads;
        let x = g.reshape(x, &[batch, h, l, hd])?;
        let x = g.permute(x, &[0, 2, 1, 3]);
        g.reshape(x, &[batch, l, h * hd])
    }

    /// One `h ← h + FFN(Attn(LN(h)))` sublayer on `h: (S, F, D)`.
    ///
    /// Feature-axis attention is unmasked. Sample-axis attention applies
    /// `mask`, an `S x S` pattern over the sample axis. When the mask allows
    /// exactly a key prefix for every row, keys and values are computed on that
    /// prefix only, which is the same function with less work.
    pub fn sublayer(
        &self,
        g: &mut Graph<T>,
        p: &[Var],
        layer: usize,
        slot: usize,
        h: Var,
        axis: Axis,
        mask: Option<&AttentionMask>,
    ) -> Result<Var> {
        let s = self.layout.sublayers[layer][slot];
        let shape = g.shape(h).to_vec();
        if shape.len() != 3 || shape[2] != self.config.model_dim {
            return Err(Error::shape("sublayer", &shape, &[self.config.model_dim]));
        }
        let (samples, _features, dm) = (shape[0], shape[1], shape[2]);
        let normed = g.layer_norm(h, p[s.ln_g], p[s.ln_b])?;

        let (x_q, x_kv, softmax_mask) = match axis {
            Axis::Feature => (normed, normed, None),
            Axis::Sample => {
                let mask = mask.ok_or_else(|| Error::Contract("sample attention needs a mask".into()))?;
                if mask.size() != samples {
                    return Err(Error::shape("attention mask", &[mask.size()], &[samples]));
                }
                let xq = g.permute(normed, &[1, 0, 2]);
                match mask.key_prefix() {
                    Some(prefix) if prefix < samples => {
                        let keys = g.slice0(normed, 0, prefix)?;
                        let xkv = g.permute(keys, &[1, 0, 2]);
                        (xq, xkv, None)
                    }
                    _ => (xq, xq, Some(mask.pattern())),
                }
            }
        };
        let batch = g.shape(x_q)[0];
        let q = g.linear(x_q, p[s.wq], p[s.bq])?;
        let k = g.linear(x_kv, p[s.wk], p[s.bk])?;
        let v = g.linear(x_kv, p[s.wv], p[s.bv])?;
        let (q, k, v) = (self.split_heads(g, q)?, self.split_heads(g, k)?, self.split_heads(g, v)?);
        let scores = g.bmm(q, k, true)?;
        let head_dim = dm / self.config.heads;
        let scores = g.scale(scores, T::lit(1.0 / (head_dim as f64).sqrt()));
        let probs = g.softmax(scores, softmax_mask)?;
        let att = g.bmm(probs, v, false)?;
        let att = self.merge_heads(g, att, batch)?;
        let att = g.linear(att, p[s.wo], p[s.bo])?;
        let hid = g.linear(att, p[s.w1], p[s.b1])?;
        let hid = self.activation(g, hid);
        let mut out = g.linear(hid, p[s.w2], p[s.b2])?;
        if axis == Axis::Sample {
            out = g.permute(out, &[1, 0, 2]);
        }
        g.add(h, out)
    }

    fn check_inputs(&self, z_sigma: &Tensor<T>, z_ctx: &Tensor<T>) -> Result<(usize, usize, usize)> {
        let d = self.config.latent_dim;
        let (qs, cs) = (z_sigma.shape(), z_ctx.shape());
        if qs.len() != 3 || cs.len() != 3 || qs[2] != d || cs[2] != d || qs[1] != cs[1] {
            return Err(Error::shape("denoiser forward (query vs context)", qs, cs));
        }
        if cs[0] == 0 {
            return Err(Error::Contract("denoiser needs at least one context row".into()));
        }
        Ok((cs[0], qs[0], qs[1]))
    }

    /// Raw network output `N(c_in·Z_σ; c_noise, Z_ctx)`, shape `(M_qry, F, d)`.
    pub fn network_graph(
        &self,
        g: &mut Graph<T>,
        p: &[Var],
        z_in: &Tensor<T>,
        sigma: T,
        z_ctx: &Tensor<T>,
    ) -> Result<Var> {
        let (m_ctx, m_qry, features) = self.check_inputs(z_in, z_ctx)?;
        let dm = self.config.model_dim;
        let l = &self.layout;

        let zq = g.constant(z_in.clone());
        let q = g.linear(zq, p[l.q_in_w], p[l.q_in_b])?;
        let fpe: Tensor<T> = feature_pos_enc(features, dm)?;
        let tiled = Tensor::from_fn(vec![m_qry, features, dm], |i| fpe.data()[i % (features * dm)]);
        let pe = g.constant(tiled);
        let q = g.add(q, pe)?;
        let emb = self.noise_embedding(g, p, sigma)?;
        let q = g.add_bias(q, emb)?;

        let zc = g.constant(z_ctx.clone());
        let c = g.linear(zc, p[l.c_in_w], p[l.c_in_b])?;
        let cpe = g.constant(context_pos_enc_2d(m_ctx, features, dm)?);
        let c = g.add(c, cpe)?;

        let mask = build_mask(m_ctx, m_qry)?;
        let mut h = g.concat0(&[c, q])?;
        for layer in 0..self.config.layers {
            for (slot, &axis) in LAYER_PLAN.iter().enumerate() {
                h = self.sublayer(g, p, layer, slot, h, axis, Some(&mask))?;
            }
        }
        let hq = g.slice0(h, m_ctx, m_ctx + m_qry)?;
        let hq = g.layer_norm(hq, p[l.out_ln_g], p[l.out_ln_b])?;
        g.linear(hq, p[l.out_w], p[l.out_b])
    }

    /// Preconditioned denoised estimate `c_skip·Z_σ + c_out·N(…)` as a graph node.
    pub fn forward_graph(
        &self,
        g: &mut Graph<T>,
        p: &[Var],
        z_sigma: &Tensor<T>,
        sigma: T,
        z_ctx: &Tensor<T>,
        schedule: &ScheduleConfig,
    ) -> Result<Var> {
        let c = precondition(sigma, schedule)?;
        let z_in = z_sigma.scale(c.c_in);
        let net = self.network_graph(g, p, &z_in, sigma, z_ctx)?;
        let net = g.scale(net, c.c_out);
        let skip = g.constant(z_sigma.scale(c.c_skip));
        g.add(skip, net)
    }

    /// Denoised query latents `(M_qry, F, d)`.
    pub fn forward(
        &self,
        z_sigma: &Tensor<T>,
        sigma: T,
        z_ctx: &Tensor<T>,
        schedule: &ScheduleConfig,
    ) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let out = self.forward_graph(&mut g, &p, z_sigma, sigma, z_ctx, schedule)?;
        Ok(g.value(out).clone())
    }
}
