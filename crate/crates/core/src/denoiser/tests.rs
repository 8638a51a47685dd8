use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::ndnum::gradcheck::{max_relative_error, numeric_gradients};
use crate::ndnum::{Graph, Tensor};
use crate::schedule::{precondition, ScheduleConfig};

fn tiny() -> DenoiserConfig {
    DenoiserConfig {
        latent_dim: 4,
        model_dim: 8,
        layers: 1,
        heads: 2,
        ffn_hidden_multiplier: 2,
        activation: Activation::Gelu,
    }
}

/// Replaces every parameter with N(0, std²) draws so no path is trivially zero.
fn randomized(config: DenoiserConfig, seed: u64, std: f64) -> DenoiserModel<f64> {
    let mut m = DenoiserModel::new(config, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for p in m.params_mut() {
        *p = Tensor::randn(p.shape().to_vec(), std, &mut rng);
    }
    m
}

fn latents(m: usize, f: usize, d: usize, seed: u64) -> Tensor<f64> {
    Tensor::randn(vec![m, f, d], 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn param<'a>(m: &'a DenoiserModel<f64>, name: &str) -> &'a Tensor<f64> {
    let i = m.names().iter().position(|n| n == name).unwrap_or_else(|| panic!("{name}"));
    &m.params()[i]
}

#[test]
fn output_shape_contract() {
    let cfg = DenoiserConfig {
        latent_dim: 8,
        model_dim: 16,
        layers: 1,
        heads: 4,
        ffn_hidden_multiplier: 2,
        activation: Activation::Gelu,
    };
    let m = DenoiserModel::<f64>::new(cfg, 1).unwrap();
    let out = m
        .forward(&latents(3, 4, 8, 1), 1.0, &latents(5, 4, 8, 2), &ScheduleConfig::default())
        .unwrap();
    assert_eq!(out.shape(), &[3, 4, 8]);
}

#[test]
fn feature_count_mismatch_rejected() {
    let m = DenoiserModel::<f64>::new(tiny(), 1).unwrap();
    let err = m.forward(&latents(2, 3, 4, 1), 1.0, &latents(2, 2, 4, 2), &ScheduleConfig::default());
    assert!(err.is_err());
    let err = m.forward(&latents(2, 2, 4, 1), 1.0, &latents(0, 2, 4, 2), &ScheduleConfig::default());
    assert!(err.is_err());
}

#[test]
fn config_validation() {
    let bad = DenoiserConfig {
        model_dim: 10,
        heads: 4,
        ..tiny()
    };
    assert!(DenoiserModel::<f64>::new(bad, 0).is_err());
}

#[test]
fn zero_network_returns_skip_path() {
    let mut m = DenoiserModel::<f64>::new(tiny(), 3).unwrap();
    for p in m.params_mut() {
        *p = Tensor::zeros(p.shape().to_vec());
    }
    let sched = ScheduleConfig::default();
    let z = latents(3, 2, 4, 9);
    let out = m.forward(&z, 0.002, &latents(2, 2, 4, 10), &sched).unwrap();
    let c = precondition(0.002f64, &sched).unwrap();
    assert!((c.c_skip - 0.25 / (0.25 + 4e-6)).abs() < 1e-15);
    assert!(c.c_skip > 0.98);
    assert!(out.max_abs_diff(&z.scale(c.c_skip)) < 1e-15);
}

#[test]
fn query_rows_are_conditionally_independent() {
    let m = randomized(DenoiserConfig { layers: 2, ..tiny() }, 11, 0.3);
    let sched = ScheduleConfig::default();
    let ctx = latents(4, 3, 4, 1);
    let z = latents(5, 3, 4, 2);
    let base = m.forward(&z, 0.7, &ctx, &sched).unwrap();
    for j in 0..5 {
        let mut bumped = z.clone();
        for f in 0..3 {
            for k in 0..4 {
                let v = bumped.get(&[j, f, k]);
                bumped.set(&[j, f, k], v + 1e-3);
            }
        }
        let out = m.forward(&bumped, 0.7, &ctx, &sched).unwrap();
        for i in (0..5).filter(|&i| i != j) {
            let a = base.slice0(i, i + 1).unwrap();
            let b = out.slice0(i, i + 1).unwrap();
            assert!(a.max_abs_diff(&b) <= 1e-12, "row {i} moved when {j} was perturbed");
        }
        let own = base.slice0(j, j + 1).unwrap().max_abs_diff(&out.slice0(j, j + 1).unwrap());
        assert!(own > 0.0);
    }
}

#[test]
fn query_permutation_equivariance() {
    let m = randomized(DenoiserConfig { layers: 2, ..tiny() }, 12, 0.3);
    let sched = ScheduleConfig::default();
    let ctx = latents(3, 3, 4, 3);
    let z = latents(6, 3, 4, 4);
    let perm = [4, 0, 5, 2, 1, 3];
    let base = m.forward(&z, 1.3, &ctx, &sched).unwrap();
    let out = m.forward(&z.select0(&perm).unwrap(), 1.3, &ctx, &sched).unwrap();
    assert!(out.max_abs_diff(&base.select0(&perm).unwrap()) <= 1e-10);
}

#[test]
fn context_rows_influence_queries() {
    let m = randomized(tiny(), 13, 0.3);
    let sched = ScheduleConfig::default();
    let ctx = latents(3, 2, 4, 5);
    let z = latents(2, 2, 4, 6);
    let base = m.forward(&z, 0.5, &ctx, &sched).unwrap();
    for r in 0..3 {
        let mut c2 = ctx.clone();
        let v = c2.get(&[r, 0, 0]);
        c2.set(&[r, 0, 0], v + 0.5);
        let out = m.forward(&z, 0.5, &c2, &sched).unwrap();
        assert!(out.max_abs_diff(&base) > 0.0, "context row {r} had no effect");
    }
}

#[test]
fn deterministic_initialization_and_output() {
    let a = DenoiserModel::<f64>::new(tiny(), 42).unwrap();
    let b = DenoiserModel::<f64>::new(tiny(), 42).unwrap();
    assert_eq!(a.params(), b.params());
    let sched = ScheduleConfig::default();
    let (z, c) = (latents(2, 2, 4, 1), latents(3, 2, 4, 2));
    assert_eq!(a.forward(&z, 0.3, &c, &sched).unwrap(), b.forward(&z, 0.3, &c, &sched).unwrap());
    let other = DenoiserModel::<f64>::new(tiny(), 43).unwrap();
    assert_ne!(a.params(), other.params());
}

#[test]
fn noise_embedding_contract() {
    let m = randomized(tiny(), 14, 0.5);
    let embed = |m: &DenoiserModel<f64>, sigma: f64| {
        let mut g = Graph::new();
        let p = m.bind(&mut g, false);
        let v = m.noise_embedding(&mut g, &p, sigma).unwrap();
        g.value(v).clone()
    };
    assert_eq!(embed(&m, 0.8), embed(&m, 0.8));
    assert!(embed(&m, 0.8).max_abs_diff(&embed(&m, 1.6)) > 0.0);
    let mut g = Graph::new();
    let p = m.bind(&mut g, false);
    assert!(m.noise_embedding(&mut g, &p, 0.0).is_err());

    let mut zeroed = m.clone();
    for (name, t) in zeroed.names().to_vec().iter().zip(zeroed.params_mut()) {
        if name.starts_with("noise_mlp") {
            *t = Tensor::zeros(t.shape().to_vec());
        }
    }
    assert!(embed(&zeroed, 0.8).data().iter().all(|&v| v == 0.0));
}

#[test]
fn zero_sublayer_is_residual_identity() {
    let m = DenoiserModel::<f64>::new(tiny(), 5).unwrap();
    // fresh init zeroes the FFN output projection
    let mut g = Graph::new();
    let p = m.bind(&mut g, false);
    let h = g.constant(latents(3, 2, 8, 1));
    let mask = build_mask(2, 1).unwrap();
    for (slot, &axis) in LAYER_PLAN.iter().enumerate() {
        let out = m.sublayer(&mut g, &p, 0, slot, h, axis, Some(&mask)).unwrap();
        assert_eq!(g.value(out), g.value(h));
    }
}

#[test]
fn single_token_axis_uses_value_path_only() {
    // With one token along the feature axis the softmax is exactly 1, so the
    // sublayer reduces to h + FFN(Wo(Wv LN(h) + bv) + bo).
    let m = randomized(tiny(), 15, 0.4);
    let h0 = latents(3, 1, 8, 2);
    let mut g = Graph::new();
    let p = m.bind(&mut g, false);
    let h = g.constant(h0.clone());
    let out = m.sublayer(&mut g, &p, 0, 0, h, Axis::Feature, None).unwrap();
    let got = g.value(out).clone();

    let mut r = Graph::new();
    let pr = |n: &str| param(&m, &format!("layers.0.0.{n}")).clone();
    let x = r.constant(h0.clone());
    let (lg, lb) = (r.constant(pr("norm.gain")), r.constant(pr("norm.bias")));
    let ln = r.layer_norm(x, lg, lb).unwrap();
    let (wv, bv) = (r.constant(pr("attn.v.weight")), r.constant(pr("attn.v.bias")));
    let v = r.linear(ln, wv, bv).unwrap();
    let (wo, bo) = (r.constant(pr("attn.out.weight")), r.constant(pr("attn.out.bias")));
    let a = r.linear(v, wo, bo).unwrap();
    let (w1, b1) = (r.constant(pr("ffn.0.weight")), r.constant(pr("ffn.0.bias")));
    let f = r.linear(a, w1, b1).unwrap();
    let f = r.gelu(f);
    let (w2, b2) = (r.constant(pr("ffn.1.weight")), r.constant(pr("ffn.1.bias")));
    let f = r.linear(f, w2, b2).unwrap();
    let want = r.add(x, f).unwrap();
    assert!(got.max_abs_diff(r.value(want)) < 1e-12);
}

/// Loop-based sublayer evaluation with the full `S x S` mask.
fn naive_sublayer(
    m: &DenoiserModel<f64>,
    layer: usize,
    slot: usize,
    h: &Tensor<f64>,
    axis: Axis,
    mask: Option<&AttentionMask>,
) -> Tensor<f64> {
    let cfg = m.config();
    let (dm, heads) = (cfg.model_dim, cfg.heads);
    let hd = dm / heads;
    let pr = |n: &str| param(m, &format!("layers.{layer}.{slot}.{n}")).data().to_vec();
    let (lg, lb) = (pr("norm.gain"), pr("norm.bias"));
    let (wq, bq, wk, bk) = (pr("attn.q.weight"), pr("attn.q.bias"), pr("attn.k.weight"), pr("attn.k.bias"));
    let (wv, bv, wo, bo) = (pr("attn.v.weight"), pr("attn.v.bias"), pr("attn.out.weight"), pr("attn.out.bias"));
    let (w1, b1, w2, b2) = (pr("ffn.0.weight"), pr("ffn.0.bias"), pr("ffn.1.weight"), pr("ffn.1.bias"));
    let df = b1.len();
    let (s, f) = (h.shape()[0], h.shape()[1]);
    let affine = |x: &[f64], w: &[f64], b: &[f64], n_out: usize| -> Vec<f64> {
        (0..n_out)
            .map(|o| b[o] + x.iter().enumerate().map(|(i, xi)| xi * w[i * n_out + o]).sum::<f64>())
            .collect()
    };
    let gelu = |x: f64| 0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh());
    let token = |i: usize, j: usize| -> Vec<f64> { (0..dm).map(|c| h.get(&[i, j, c])).collect() };
    let norm = |x: Vec<f64>| -> Vec<f64> {
        let mu = x.iter().sum::<f64>() / dm as f64;
        let var = x.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / dm as f64;
        x.iter().enumerate().map(|(c, v)| (v - mu) / (var + 1e-5).sqrt() * lg[c] + lb[c]).collect()
    };
    let mut out = h.clone();
    let (outer, len) = match axis {
        Axis::Feature => (s, f),
        Axis::Sample => (f, s),
    };
    for o in 0..outer {
        let at = |t: usize| match axis {
            Axis::Feature => (o, t),
            Axis::Sample => (t, o),
        };
        let normed: Vec<Vec<f64>> = (0..len).map(|t| norm(token(at(t).0, at(t).1))).collect();
        let q: Vec<Vec<f64>> = normed.iter().map(|x| affine(x, &wq, &bq, dm)).collect();
        let k: Vec<Vec<f64>> = normed.iter().map(|x| affine(x, &wk, &bk, dm)).collect();
        let v: Vec<Vec<f64>> = normed.iter().map(|x| affine(x, &wv, &bv, dm)).collect();
        for t in 0..len {
            let mut concat = vec![0.0; dm];
            for hh in 0..heads {
                let r = hh * hd..(hh + 1) * hd;
                let allowed = |u: usize| match (axis, mask) {
                    (Axis::Sample, Some(mk)) => mk.allowed(t, u),
                    _ => true,
                };
                let scores: Vec<f64> = (0..len)
                    .map(|u| q[t][r.clone()].iter().zip(&k[u][r.clone()]).map(|(a, b)| a * b).sum::<f64>() / (hd as f64).sqrt())
                    .collect();
                let mx = (0..len).filter(|&u| allowed(u)).map(|u| scores[u]).fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = (0..len).map(|u| if allowed(u) { (scores[u] - mx).exp() } else { 0.0 }).collect();
                let z: f64 = w.iter().sum();
                for c in r.clone() {
                    concat[c] = (0..len).map(|u| w[u] / z * v[u][c]).sum();
                }
            }
            let a = affine(&concat, &wo, &bo, dm);
            let hid: Vec<f64> = affine(&a, &w1, &b1, df).into_iter().map(gelu).collect();
            let ff = affine(&hid, &w2, &b2, dm);
            let (i, j) = at(t);
            for c in 0..dm {
                out.set(&[i, j, c], h.get(&[i, j, c]) + ff[c]);
            }
        }
    }
    out
}

#[test]
fn sublayer_matches_naive_reference() {
    let m = randomized(DenoiserConfig { layers: 1, ..tiny() }, 16, 0.4);
    let h0 = latents(5, 3, 8, 3);
    let prefix = build_mask(3, 2).unwrap();
    let mut diag = vec![false; 25];
    for r in 0..5 {
        for c in 0..5 {
            diag[r * 5 + c] = c < 3 || c == r;
        }
    }
    let with_self = AttentionMask::from_pattern(5, diag).unwrap();
    for (slot, &axis) in LAYER_PLAN.iter().enumerate() {
        for mask in [&prefix, &with_self] {
            let mut g = Graph::new();
            let p = m.bind(&mut g, false);
            let h = g.constant(h0.clone());
            let out = m.sublayer(&mut g, &p, 0, slot, h, axis, Some(mask)).unwrap();
            let want = naive_sublayer(&m, 0, slot, &h0, axis, Some(mask));
            assert!(g.value(out).max_abs_diff(&want) < 1e-10, "slot {slot} {axis:?}");
        }
    }
}

#[test]
fn sublayer_rejects_bad_mask() {
    let m = DenoiserModel::<f64>::new(tiny(), 1).unwrap();
    let mut g = Graph::new();
    let p = m.bind(&mut g, false);
    let h = g.constant(latents(4, 2, 8, 1));
    let mask = build_mask(2, 1).unwrap();
    assert!(m.sublayer(&mut g, &p, 0, 2, h, Axis::Sample, Some(&mask)).is_err());
}

#[test]
fn every_parameter_passes_finite_differences() {
    let m = randomized(tiny(), 17, 0.3);
    let sched = ScheduleConfig::default();
    let (z, ctx) = (latents(2, 2, 4, 7), latents(3, 2, 4, 8));
    let weights = latents(2, 2, 4, 9);
    let sigma = 0.9;
    let loss_of = |params: &[Tensor<f64>]| -> f64 {
        let mut mm = m.clone();
        mm.params_mut().clone_from_slice(params);
        let out = mm.forward(&z, sigma, &ctx, &sched).unwrap();
        out.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
    };
    let mut g = Graph::new();
    let p = m.bind(&mut g, true);
    let out = m.forward_graph(&mut g, &p, &z, sigma, &ctx, &sched).unwrap();
    let w = g.constant(weights.clone());
    let prod = g.mul(out, w).unwrap();
    let loss = g.sum(prod);
    let analytic = crate::ndnum::reverse_grad(&g, loss, &p).unwrap();
    let numeric = numeric_gradients(m.params(), 1e-4, loss_of);
    let err = max_relative_error(&analytic, &numeric, 1e-6);
    assert!(err < 1e-3, "max relative error {err}");
}

#[test]
fn checkpoint_round_trip() {
    let m = randomized(tiny(), 18, 0.2);
    let mut ck = Checkpoint::new(m, 120, "fp-abc");
    ck.validation_fid = Some(0.25);
    ck.encoder_seed = 42;
    let bytes = ck.to_bytes().unwrap();
    assert_eq!(&bytes[..8], MAGIC);
    let back = Checkpoint::<f64>::from_bytes(&bytes).unwrap();
    assert_eq!(back.model.params(), ck.model.params());
    assert_eq!(back.step, 120);
    assert_eq!(back.train_fingerprint, "fp-abc");
    assert_eq!(back.validation_fid, Some(0.25));
    assert_eq!(back.encoder_seed, 42);
    assert_eq!(back.to_bytes().unwrap(), bytes);

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(Checkpoint::<f64>::from_bytes(&bad).is_err());
    assert!(Checkpoint::<f64>::from_bytes(&bytes[..bytes.len() - 8]).is_err());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    ck.save(&path).unwrap();
    assert!(sidecar_path(&path).exists());
    let loaded = Checkpoint::<f32>::load(&path).unwrap();
    assert_eq!(loaded.model.params()[0].shape(), ck.model.params()[0].shape());
}
