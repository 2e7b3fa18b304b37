//! Fixtures shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

use fedhar::nn::ops::activation::{relu_backward_in_place, relu_in_place};
use fedhar::nn::ops::attention::{attention_backward, attention_forward, AttentionWeights};
use fedhar::nn::ops::dense::{dense_backward, dense_forward};
use fedhar::nn::ops::layer_norm::{layer_norm_backward, layer_norm_forward};
use fedhar::nn::ops::lstm::{lstm_cell_backward, lstm_cell_forward, LstmWeights};
use fedhar::nn::ops::softmax_cross_entropy_batch;
use fedhar::nn::{gradient_check, GradCheckReport, GradientSet, ParameterSet, Tensor};
use fedhar::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_params(seed: u64, spec: &[(&str, &[usize], f64)]) -> ParameterSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ParameterSet::new();
    for (name, shape, scale) in spec {
        p.insert(*name, Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0) * scale))
            .unwrap();
    }
    p
}

fn d<'a>(p: &'a ParameterSet, name: &str) -> &'a [f64] {
    p.get(name).unwrap().data()
}

/// Two dense layers into softmax cross-entropy; input and labels are parameters
/// or constants of the closure.
pub fn dense_softmax_check(seed: u64, rows: usize, input: usize, hidden: usize) -> GradCheckReport {
    let classes = 8;
    let params = random_params(
        seed,
        &[
            ("x", &[rows, input], 1.0),
            ("w1", &[input, hidden], 0.8),
            ("b1", &[hidden], 0.3),
            ("w2", &[hidden, classes], 0.8),
            ("b2", &[classes], 0.3),
        ],
    );
    let labels: Vec<usize> = (0..rows).map(|r| (r * 5 + seed as usize) % classes).collect();
    let loss = |p: &ParameterSet| -> Result<(f64, GradientSet)> {
        let h = dense_forward(d(p, "x"), rows, input, d(p, "w1"), d(p, "b1"), hidden);
        let z = dense_forward(&h, rows, hidden, d(p, "w2"), d(p, "b2"), classes);
        let (loss, dz) = softmax_cross_entropy_batch(&Tensor::matrix(rows, classes, z), &labels)?;
        let mut g = GradientSet::zeros_like(p);
        let mut dw2 = vec![0.0; hidden * classes];
        let mut db2 = vec![0.0; classes];
        let dh = dense_backward(&h, rows, hidden, d(p, "w2"), classes, dz.data(), &mut dw2, &mut db2, true);
        let mut dw1 = vec![0.0; input * hidden];
        let mut db1 = vec![0.0; hidden];
        let dx = dense_backward(d(p, "x"), rows, input, d(p, "w1"), hidden, &dh, &mut dw1, &mut db1, true);
        for (n, v) in [("x", &dx), ("w1", &dw1), ("b1", &db1), ("w2", &dw2), ("b2", &db2)] {
            g.accumulate_slice(n, v)?;
        }
        Ok((loss, g))
    };
    gradient_check(loss, &params, 1e-6).unwrap()
}

/// One LSTM step; loss is a fixed random projection of `(h_t, c_t)`.
pub fn lstm_cell_check(seed: u64, batch: usize, input: usize, hidden: usize) -> GradCheckReport {
    let h4 = 4 * hidden;
    let params = random_params(
        seed,
        &[
            ("x", &[batch, input], 1.0),
            ("h", &[batch, hidden], 0.8),
            ("c", &[batch, hidden], 0.8),
            ("w_x", &[input, h4], 0.6),
            ("w_h", &[hidden, h4], 0.6),
            ("b", &[h4], 0.4),
        ],
    );
    let coef = random_params(seed ^ 0xabc, &[("a", &[batch, hidden], 1.0), ("e", &[batch, hidden], 1.0)]);
    let (a, e) = (d(&coef, "a").to_vec(), d(&coef, "e").to_vec());
    let loss = move |p: &ParameterSet| -> Result<(f64, GradientSet)> {
        let w = LstmWeights {
            w_x: d(p, "w_x"),
            w_h: d(p, "w_h"),
            b: d(p, "b"),
            input,
            hidden,
        };
        let (h, c, cache) = lstm_cell_forward(d(p, "x"), d(p, "h"), d(p, "c"), batch, &w);
        let loss: f64 = h.iter().zip(&a).map(|(u, v)| u * v).sum::<f64>()
            + c.iter().zip(&e).map(|(u, v)| u * v).sum::<f64>();
        let gr = lstm_cell_backward(&cache, &w, &a, &e);
        let mut g = GradientSet::zeros_like(p);
        for (n, v) in [
            ("x", &gr.dx),
            ("h", &gr.dh_prev),
            ("c", &gr.dc_prev),
            ("w_x", &gr.dw_x),
            ("w_h", &gr.dw_h),
            ("b", &gr.db),
        ] {
            g.accumulate_slice(n, v)?;
        }
        Ok((loss, g))
    };
    gradient_check(loss, &params, 1e-5).unwrap()
}

/// One post-norm encoder block (attention, residual, layer norm, ReLU
/// feed-forward, residual, layer norm) on `batch` sequences of `seq` tokens;
/// loss is a fixed random projection of the block output.
pub fn transformer_block_check(seed: u64, batch: usize, seq: usize, dm: usize, heads: usize) -> GradCheckReport {
    let ff = 2 * dm;
    let n = batch * seq;
    let params = random_params(
        seed,
        &[
            ("x", &[n, dm], 1.0),
            ("wq", &[dm, dm], 0.6),
            ("bq", &[dm], 0.2),
            ("wk", &[dm, dm], 0.6),
            ("wv", &[dm, dm], 0.6),
            ("bv", &[dm], 0.2),
            ("wo", &[dm, dm], 0.6),
            ("bo", &[dm], 0.2),
            ("g1", &[dm], 1.0),
            ("be1", &[dm], 0.2),
            ("w1", &[dm, ff], 0.6),
            ("b1", &[ff], 0.2),
            ("w2", &[ff, dm], 0.6),
            ("b2", &[dm], 0.2),
            ("g2", &[dm], 1.0),
            ("be2", &[dm], 0.2),
        ],
    );
    let coef = d(&random_params(seed ^ 0x5eed, &[("a", &[n, dm], 1.0)]), "a").to_vec();
    let loss = move |p: &ParameterSet| -> Result<(f64, GradientSet)> {
        let w = AttentionWeights {
            wq: d(p, "wq"),
            bq: d(p, "bq"),
            wk: d(p, "wk"),
            wv: d(p, "wv"),
            bv: d(p, "bv"),
            wo: d(p, "wo"),
            bo: d(p, "bo"),
            d: dm,
            heads,
        };
        let x = d(p, "x");
        let (att, acache) = attention_forward(x, batch, seq, &w);
        let r1: Vec<f64> = x.iter().zip(&att).map(|(u, v)| u + v).collect();
        let (h1, ln1) = layer_norm_forward(&r1, n, dm, d(p, "g1"), d(p, "be1"));
        let mut act = dense_forward(&h1, n, dm, d(p, "w1"), d(p, "b1"), ff);
        relu_in_place(&mut act);
        let f = dense_forward(&act, n, ff, d(p, "w2"), d(p, "b2"), dm);
        let r2: Vec<f64> = h1.iter().zip(&f).map(|(u, v)| u + v).collect();
        let (y, ln2) = layer_norm_forward(&r2, n, dm, d(p, "g2"), d(p, "be2"));
        let loss: f64 = y.iter().zip(&coef).map(|(u, v)| u * v).sum();

        let mut g = GradientSet::zeros_like(p);
        let mut tmp_g = vec![0.0; dm];
        let mut tmp_b = vec![0.0; dm];
        let dr2 = layer_norm_backward(&ln2, d(p, "g2"), &coef, &mut tmp_g, &mut tmp_b);
        g.accumulate_slice("g2", &tmp_g)?;
        g.accumulate_slice("be2", &tmp_b)?;
        let mut dw2 = vec![0.0; ff * dm];
        let mut db2 = vec![0.0; dm];
        let mut dact = dense_backward(&act, n, ff, d(p, "w2"), dm, &dr2, &mut dw2, &mut db2, true);
        relu_backward_in_place(&act, &mut dact);
        let mut dw1 = vec![0.0; dm * ff];
        let mut db1 = vec![0.0; ff];
        let dh1f = dense_backward(&h1, n, dm, d(p, "w1"), ff, &dact, &mut dw1, &mut db1, true);
        let dh1: Vec<f64> = dr2.iter().zip(&dh1f).map(|(u, v)| u + v).collect();
        let mut tmp_g = vec![0.0; dm];
        let mut tmp_b = vec![0.0; dm];
        let dr1 = layer_norm_backward(&ln1, d(p, "g1"), &dh1, &mut tmp_g, &mut tmp_b);
        g.accumulate_slice("g1", &tmp_g)?;
        g.accumulate_slice("be1", &tmp_b)?;
        let ag = attention_backward(&acache, &w, &dr1);
        let dx: Vec<f64> = dr1.iter().zip(&ag.dx).map(|(u, v)| u + v).collect();
        for (name, v) in [
            ("x", &dx),
            ("wq", &ag.dwq),
            ("bq", &ag.dbq),
            ("wk", &ag.dwk),
            ("wv", &ag.dwv),
            ("bv", &ag.dbv),
            ("wo", &ag.dwo),
            ("bo", &ag.dbo),
            ("w1", &dw1),
            ("b1", &db1),
            ("w2", &dw2),
            ("b2", &db2),
        ] {
            g.accumulate_slice(name, v)?;
        }
        Ok((loss, g))
    };
    gradient_check(loss, &params, 1e-4).unwrap()
}

pub fn describe(report: &GradCheckReport) -> String {
    let worst = report
        .params
        .iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .unwrap();
    format!(
        "max rel err {:.3e} (`{}`[{}]: analytic {:.6e} numeric {:.6e}) tol {:.0e}",
        worst.max_rel_error, worst.name, worst.worst_index, worst.analytic, worst.numeric, report.tolerance
    )
}

use fedhar::dataset::{build_windows, split_by_client, synthesize_dataset, ClientDataset, SplitFractions, SynthSpec};
use fedhar::models::{LstmClassifierConfig, ModelConfig, TransformerClassifierConfig};

/// Synthetic subjects split per client with the default fractions.
pub fn synthetic_clients(spec: &SynthSpec, seed: u64) -> Vec<ClientDataset> {
    let frames = synthesize_dataset(spec, seed).unwrap();
    let windows = build_windows(&frames, spec.image_size().unwrap()).unwrap();
    split_by_client(windows, &SplitFractions::default(), seed).unwrap().0
}

/// A reduced synthetic set for fast federation tests.
pub fn small_spec(subjects: usize, frames: usize) -> SynthSpec {
    SynthSpec {
        subjects,
        recordings: 1,
        frames_per_recording: frames,
        ..SynthSpec::default()
    }
}

pub fn lstm16() -> ModelConfig {
    ModelConfig::Lstm(LstmClassifierConfig {
        hidden: 16,
        ..Default::default()
    })
}

pub fn transformer16() -> ModelConfig {
    ModelConfig::Transformer(TransformerClassifierConfig {
        d_model: 16,
        heads: 2,
        encoder_layers: 2,
        feedforward_dim: 32,
        ..Default::default()
    })
}

use fedhar::federation::{AggregationEntry, AggregationInput};

pub fn input(entries: Vec<(ParameterSet, usize)>) -> AggregationInput {
    AggregationInput {
        entries: entries
            .into_iter()
            .enumerate()
            .map(|(client, (weights, sample_count))| AggregationEntry {
                client,
                weights,
                sample_count,
            })
            .collect(),
    }
}

pub fn random_instance(rng: &mut ChaCha8Rng, k: usize) -> AggregationInput {
    let shapes: Vec<Vec<usize>> = (0..rng.random_range(1..4))
        .map(|_| (0..rng.random_range(1..3)).map(|_| rng.random_range(1..5)).collect())
        .collect();
    let entries = (0..k)
        .map(|_| {
            let mut p = ParameterSet::new();
            for (j, s) in shapes.iter().enumerate() {
                p.insert(format!("p{j}"), Tensor::from_fn(s, |_| rng.random_range(-3.0..3.0))).unwrap();
            }
            (p, rng.random_range(1..500))
        })
        .collect();
    input(entries)
}

/// Written without reference to the implementation: flatten, weight, sum.
pub fn oracle(input: &AggregationInput) -> Vec<Vec<f64>> {
    let n: usize = input.entries.iter().map(|e| e.sample_count).sum();
    let names: Vec<String> = input.entries[0].weights.names().map(str::to_string).collect();
    let mut out = Vec::new();
    for name in &names {
        let len = input.entries[0].weights.get(name).unwrap().len();
        let mut acc = vec![0.0; len];
        for idx in 0..len {
            let mut s = 0.0;
            for (i, e) in input.entries.iter().enumerate() {
                let w = e.sample_count as f64 / n as f64;
                let v = e.weights.get(name).unwrap().data()[idx];
                if i == 0 {
                    s = w * v;
                } else {
                    s += w * v;
                }
            }
            acc[idx] = s;
        }
        out.push(acc);
    }
    out
}

pub fn max_diff(a: &ParameterSet, b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|((_, t), o)| t.data().iter().zip(o).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}
