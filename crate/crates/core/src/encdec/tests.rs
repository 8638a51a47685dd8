use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::ndnum::gradcheck::{max_relative_error, numeric_gradients};
use crate::ndnum::{Graph, Tensor, Var};

fn mixed_table(n: usize, seed: u64) -> Table {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schema = TableSchema::new(vec![
        ColumnSpec::numeric("a"),
        ColumnSpec::categorical("b", &["p", "q", "r"]),
        ColumnSpec::numeric("y").as_target(),
    ])
    .unwrap();
    let a: Vec<f64> = (0..n).map(|_| 3.0 + 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
    let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
    let y: Vec<f64> = (0..n).map(|i| a[i] * 0.5 + rng.sample::<f64, _>(StandardNormal)).collect();
    Table::new(schema, vec![ColumnData::Numeric(a), ColumnData::Categorical(b), ColumnData::Numeric(y)]).unwrap()
}

fn encode(t: &Table, enc: &DefaultEncoder) -> (ColumnStats, Tensor<f64>) {
    let stats = fit_stats(t).unwrap();
    let z = enc.encode_table(t, &stats).unwrap();
    (stats, z)
}

#[test]
fn closed_form_inverse_is_exact() {
    // v = u·(z − b)/‖u‖² recovers the standardized value from each latent slice.
    let t = mixed_table(50, 1);
    let enc = DefaultEncoder::new(4, 16);
    let (stats, z) = encode(&t, &enc);
    let (u, b) = (enc.slope(0), enc.offset(0));
    let uu: f64 = u.iter().map(|x| x * x).sum();
    let vals = t.column(0).as_numeric().unwrap();
    for i in 0..50 {
        let v: f64 = (0..16).map(|k| u[k] * (z.get(&[i, 0, k]) - b[k])).sum::<f64>() / uu;
        assert!((v - stats.standardize(0, vals[i])).abs() < 1e-12);
    }
    // nearest codebook vector identifies every category
    let cats = t.column(1).as_categorical().unwrap();
    for i in 0..50 {
        let best = (0..3)
            .min_by(|&c1, &c2| {
                let dist = |c: usize| enc.category(1, c).iter().enumerate().map(|(k, e)| (z.get(&[i, 1, k]) - e).powi(2)).sum::<f64>();
                dist(c1).partial_cmp(&dist(c2)).unwrap()
            })
            .unwrap();
        assert_eq!(best, cats[i]);
    }
}

fn round_trip_metrics(t: &Table, decoded: &Table, stats: &ColumnStats) -> (f64, f64) {
    let mut se = 0.0;
    let mut n_num = 0;
    let mut hits = 0;
    let mut n_cat = 0;
    for (f, (a, b)) in t.columns().iter().zip(decoded.columns()).enumerate() {
        match (a, b) {
            (ColumnData::Numeric(x), ColumnData::Numeric(y)) => {
                for (p, q) in x.iter().zip(y) {
                    se += (stats.standardize(f, *p) - stats.standardize(f, *q)).powi(2);
                    n_num += 1;
                }
            }
            (ColumnData::Categorical(x), ColumnData::Categorical(y)) => {
                hits += x.iter().zip(y).filter(|(p, q)| p == q).count();
                n_cat += x.len();
            }
            _ => unreachable!(),
        }
    }
    (se / n_num as f64, hits as f64 / n_cat as f64)
}

#[test]
fn decoders_reconstruct_query_set() {
    let t = mixed_table(200, 2);
    let enc = DefaultEncoder::new(5, 32);
    let (stats, z) = encode(&t, &enc);
    // Dropout off: with it on, the eval-mode network carries a shrinkage bias
    // of a few 1e-3 in standardized MSE (see `dropout_trained_decoders`).
    let cfg = DecoderConfig {
        dropout: 0.0,
        ..DecoderConfig::default()
    };
    let trained = train_decoders(&z, &t, &stats, &cfg).unwrap();
    assert_eq!(trained.decoders.len(), 3);
    assert_eq!(trained.decoders[1].outputs(), 3);
    let decoded = decode(&z, &trained.decoders, &stats, t.schema()).unwrap();
    let (mse, acc) = round_trip_metrics(&t, &decoded, &stats);
    assert!(mse < 1e-3, "numeric mse {mse}");
    assert!(acc > 0.99, "categorical accuracy {acc}");
}

#[test]
fn dropout_trained_decoders() {
    let t = mixed_table(200, 2);
    let enc = DefaultEncoder::new(5, 32);
    let (stats, z) = encode(&t, &enc);
    let trained = train_decoders(&z, &t, &stats, &DecoderConfig::default()).unwrap();
    let decoded = decode(&z, &trained.decoders, &stats, t.schema()).unwrap();
    let (mse, acc) = round_trip_metrics(&t, &decoded, &stats);
    assert!(mse < 2e-2, "numeric mse {mse}");
    assert!(acc > 0.99, "categorical accuracy {acc}");
}

#[test]
fn zero_epochs_reports_initial_losses() {
    let t = mixed_table(20, 3);
    let enc = DefaultEncoder::new(5, 8);
    let (stats, z) = encode(&t, &enc);
    let cfg = DecoderConfig {
        epochs: 0,
        hidden: 16,
        ..DecoderConfig::default()
    };
    let trained = train_decoders(&z, &t, &stats, &cfg).unwrap();
    assert_eq!(trained.losses.len(), 3);
    assert!(trained.losses.iter().all(|l| l.is_finite() && *l > 0.0));
    let again = train_decoders(&z, &t, &stats, &cfg).unwrap();
    assert_eq!(trained.losses, again.losses);
}

#[test]
fn training_rejects_tiny_or_mismatched_inputs() {
    let t = mixed_table(20, 3);
    let enc = DefaultEncoder::new(5, 8);
    let (stats, z) = encode(&t, &enc);
    let one = t.select_rows(&[0]);
    let z1 = z.slice0(0, 1).unwrap();
    assert!(train_decoders(&z1, &one, &stats, &DecoderConfig::default()).is_err());
    assert!(train_decoders(&z.slice0(0, 5).unwrap(), &t, &stats, &DecoderConfig::default()).is_err());
}

#[test]
fn divergence_is_reported_with_column() {
    let t = mixed_table(20, 4);
    let enc = DefaultEncoder::new(5, 8);
    let (stats, z) = encode(&t, &enc);
    let cfg = DecoderConfig {
        lr: f64::INFINITY,
        epochs: 3,
        hidden: 8,
        ..DecoderConfig::default()
    };
    let err = train_decoders(&z, &t, &stats, &cfg).unwrap_err();
    assert!(matches!(err, crate::Error::Numerical(ref m) if m.contains("column 0")), "{err}");
}

#[test]
fn decode_edge_cases() {
    let t = mixed_table(10, 5);
    let enc = DefaultEncoder::new(5, 8);
    let (stats, z) = encode(&t, &enc);
    let cfg = DecoderConfig {
        epochs: 1,
        hidden: 8,
        ..DecoderConfig::default()
    };
    let trained = train_decoders(&z, &t, &stats, &cfg).unwrap();
    let empty = decode(&Tensor::zeros(vec![0, 3, 8]), &trained.decoders, &stats, t.schema()).unwrap();
    assert_eq!(empty.n_rows(), 0);
    assert_eq!(empty.schema(), t.schema());
    assert!(decode(&Tensor::zeros(vec![2, 2, 8]), &trained.decoders, &stats, t.schema()).is_err());
    assert_eq!(argmax_lowest(&[0.5f64, 2.0, 2.0, 1.0]), 1);
    assert_eq!(argmax_lowest(&[1.0f64, 1.0]), 0);
    // evaluation is deterministic (dropout off)
    let a = decode(&z, &trained.decoders, &stats, t.schema()).unwrap();
    let b = decode(&z, &trained.decoders, &stats, t.schema()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn decoder_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for (kind, outputs) in [(ColumnKind::Numeric, 1), (ColumnKind::Categorical, 3)] {
        let mut dec = FeatureDecoder::<f64>::new(0, kind, 4, 6, outputs, 0.0, 8);
        for p in dec.params_mut() {
            *p = Tensor::randn(p.shape().to_vec(), 0.7, &mut rng);
        }
        let x = Tensor::<f64>::randn(vec![5, 4], 1.0, &mut rng);
        let y = Tensor::<f64>::randn(vec![5, 1], 1.0, &mut rng);
        let classes = [0usize, 2, 1, 1, 0];
        let loss = |dec: &FeatureDecoder<f64>, g: &mut Graph<f64>, p: &[Var]| {
            let xv = g.constant(x.clone());
            let out = dec.forward_graph(g, p, xv, None).unwrap();
            match kind {
                ColumnKind::Numeric => {
                    let yv = g.constant(y.clone());
                    let d = g.sub(out, yv).unwrap();
                    let s = g.square(d);
                    g.mean(s)
                }
                ColumnKind::Categorical => g.cross_entropy(out, &classes).unwrap(),
            }
        };
        let mut g = Graph::new();
        let p: Vec<Var> = dec.params().iter().map(|t| g.param(t.clone())).collect();
        let l = loss(&dec, &mut g, &p);
        let analytic = crate::ndnum::reverse_grad(&g, l, &p).unwrap();
        let numeric = numeric_gradients(dec.params(), 1e-5, |ps| {
            let mut d2 = dec.clone();
            d2.params_mut().clone_from_slice(ps);
            let mut g = Graph::new();
            let p: Vec<Var> = d2.params().iter().map(|t| g.constant(t.clone())).collect();
            let l = loss(&d2, &mut g, &p);
            g.value(l).item()
        });
        let err = max_relative_error(&analytic, &numeric, 1e-6);
        assert!(err < 1e-4, "{kind:?}: {err}");
    }
}

