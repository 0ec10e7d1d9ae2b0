//! Finite-difference gradient checks at 64-bit precision.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::Result;

/// Default central-difference step.
pub const STEP: f64 = 1e-4;

/// `|a − n| / max(|a|, |n|)`, zero when both are below `1e-10`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-10 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Largest relative error between reverse-mode and central-difference
/// gradients of the scalar built by `f` from leaves holding `inputs`.
pub fn max_relative_error<F>(inputs: &[Tensor<f64>], h: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<(Graph<f64>, Vec<Var>, Var)> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.leaf(t.clone())).collect();
        let loss = f(&mut g, &vars)?;
        Ok((g, vars, loss))
    };
    let (g, vars, loss) = eval(inputs)?;
    let mut grads = g.backward(loss)?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .map(|&v| grads.take(v).expect("leaf gradient"))
        .collect();

    let mut worst: f64 = 0.0;
    let mut values = inputs.to_vec();
    for (i, a) in analytic.iter().enumerate() {
        for j in 0..values[i].len() {
            let orig = values[i].data()[j];
            values[i].data_mut()[j] = orig + h;
            let (g, _, l) = eval(&values)?;
            let plus = g.value(l).data()[0];
            values[i].data_mut()[j] = orig - h;
            let (g, _, l) = eval(&values)?;
            let minus = g.value(l).data()[0];
            values[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max(relative_error(a.data()[j], numeric));
        }
    }
    Ok(worst)
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).expect("shape")
}

/// Values with magnitude in [0.05, 1] and random sign.
fn off_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let mut t = uniform(rng, shape, 0.05, 1.0);
    t.data_mut()
        .iter_mut()
        .for_each(|v| *v = if rng.random_bool(0.5) { *v } else { -*v });
    t
}

/// Rows of a (batch, classes) tensor that sum to one.
fn soft_targets(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let r: Vec<f64> = (0..cols).map(|_| rng.random_range(0.01..1.0)).collect();
        let s: f64 = r.iter().sum();
        out.extend(r.into_iter().map(|v| v / s));
    }
    out
}

/// Batch-norm input whose every channel has variance at least 0.5, away from
/// the near-singular case where all values of a channel coincide.
fn spread_channels(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let (b, c) = (shape[0], shape[1]);
    let l = shape.get(2).copied().unwrap_or(1);
    loop {
        let t = uniform(rng, shape, -2.0, 2.0);
        let ok = (0..c).all(|ch| {
            let vals: Vec<f64> = (0..b)
                .flat_map(|i| t.data()[(i * c + ch) * l..][..l].to_vec())
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64 >= 0.5
        });
        if ok {
            return t;
        }
    }
}

fn weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

type Case = (Vec<Tensor<f64>>, Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var>>);

/// Layer names covered by [`layer_case`].
pub const LAYERS: [&str; 16] = [
    "conv1d",
    "conv_transpose1d",
    "linear",
    "batch_norm",
    "batch_norm_2d",
    "batch_norm_inference",
    "relu",
    "dropout",
    "max_pool_time",
    "reshape",
    "softmax",
    "cross_entropy",
    "masked_squared_error",
    "combine",
    "weighted_sum",
    "toy_network",
];

/// A random instance of `layer` followed by a random linear read-out.
pub fn layer_case(layer: &str, rng: &mut ChaCha8Rng) -> Case {
    let batch = rng.random_range(1..4);
    match layer {
        "conv1d" | "conv_transpose1d" => {
            let c_in = rng.random_range(1..4);
            let c_out = rng.random_range(1..4);
            let k = rng.random_range(1..6);
            let stride = rng.random_range(1..4);
            let pad = rng.random_range(0..=k / 2);
            let long = rng.random_range(k.max(2)..12);
            let short = (long + 2 * pad - k) / stride + 1;
            if layer == "conv1d" {
                let ro = weights(rng, batch * c_out * short);
                let inputs = vec![
                    uniform(rng, &[batch, c_in, long], -1.0, 1.0),
                    uniform(rng, &[c_out, c_in, k], -1.0, 1.0),
                    uniform(rng, &[c_out], -1.0, 1.0),
                ];
                (
                    inputs,
                    Box::new(move |g, v| {
                        let y = g.conv1d(v[0], v[1], v[2], stride, pad)?;
                        g.weighted_sum(y, &ro)
                    }),
                )
            } else {
                let ro = weights(rng, batch * c_out * long);
                let inputs = vec![
                    uniform(rng, &[batch, c_in, short], -1.0, 1.0),
                    uniform(rng, &[c_in, c_out, k], -1.0, 1.0),
                    uniform(rng, &[c_out], -1.0, 1.0),
                ];
                (
                    inputs,
                    Box::new(move |g, v| {
                        let y = g.conv_transpose1d(v[0], v[1], v[2], stride, pad, long)?;
                        g.weighted_sum(y, &ro)
                    }),
                )
            }
        }
        "linear" => {
            let (i, o) = (rng.random_range(1..6), rng.random_range(1..6));
            let ro = weights(rng, batch * o);
            let inputs = vec![
                uniform(rng, &[batch, i], -1.0, 1.0),
                uniform(rng, &[o, i], -1.0, 1.0),
                uniform(rng, &[o], -1.0, 1.0),
            ];
            (
                inputs,
                Box::new(move |g, v| {
                    let y = g.linear(v[0], v[1], v[2])?;
                    g.weighted_sum(y, &ro)
                }),
            )
        }
        "batch_norm" | "batch_norm_2d" => {
            let c = rng.random_range(1..4);
            let shape = if layer == "batch_norm" {
                vec![batch + 2, c, rng.random_range(1..6)]
            } else {
                vec![batch + 2, c]
            };
            let n: usize = shape.iter().product();
            let ro = weights(rng, n);
            let inputs = vec![
                spread_channels(rng, &shape),
                uniform(rng, &[c], 0.5, 1.5),
                uniform(rng, &[c], -0.5, 0.5),
            ];
            (
                inputs,
                Box::new(move |g, v| {
                    let (y, _) = g.batch_norm(v[0], v[1], v[2], 1e-5)?;
                    g.weighted_sum(y, &ro)
                }),
            )
        }
        "batch_norm_inference" => {
            let (c, l) = (rng.random_range(1..4), rng.random_range(1..6));
            let mean: Vec<f64> = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
            let var: Vec<f64> = (0..c).map(|_| rng.random_range(0.1..2.0)).collect();
            let ro = weights(rng, batch * c * l);
            let inputs = vec![
                uniform(rng, &[batch, c, l], -2.0, 2.0),
                uniform(rng, &[c], 0.5, 1.5),
                uniform(rng, &[c], -0.5, 0.5),
            ];
            (
                inputs,
                Box::new(move |g, v| {
                    let y = g.batch_norm_inference(v[0], v[1], v[2], &mean, &var, 1e-5)?;
                    g.weighted_sum(y, &ro)
                }),
            )
        }
        "relu" => {
            let shape = [batch, rng.random_range(1..4), rng.random_range(1..8)];
            let ro = weights(rng, shape.iter().product());
            (
                vec![off_zero(rng, &shape)],
                Box::new(move |g, v| {
                    let y = g.relu(v[0]);
                    g.weighted_sum(y, &ro)
                }),
            )
        }
        "dropout" => {
            let shape = [batch, rng.random_range(1..4), rng.random_range(1..8)];
            let ro = weights(rng, shape.iter().product());
            let seed: u64 = rng.random();
            (
                vec![uniform(rng, &shape, -1.0, 1.0)],
                Box::new(move |g, v| {
                    let y = g.dropout(v[0], 0.3, &mut ChaCha8Rng::seed_from_u64(seed))?;
                    g.weighted_sum(y, &ro)
                }),
            )
        }
        "max_pool_time" => {
            let (c, l) = (rng.random_range(1..4), rng.random_range(1..8));
            let n = batch * c * l;
            // Distinct values spaced far wider than the difference step.
            let mut vals: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
            for i in (1..n).rev() {
                vals.swap(i, rng.random_range(0..=i));
            }
            let ro = weights(rng, batch * c);
            (
                vec![Tensor::from_vec(&[batch, c, l], vals).expect("shape")],
                Box::new(move |g, v| {
                    let y = g.max_pool_time(v[0])?;
                    g.weighted_sum(y, &ro)
                }),
            )
        }
        "reshape" => {
            let (c, l) = (rng.random_range(1..4), rng.random_range(1..6));
            let ro = weights(rng, batch * c * l);
            (
                vec![uniform(rng, &[batch, c, l], -1.0, 1.0)],
                Box::new(move |g, v| {
                    let y = g.reshape(v[0], &[batch, c * l])?;
                    let y = g.softmax(y)?;
                    g.weighted_sum(y, &ro)
                }),
            )
        }
        "softmax" => {
            let k = rng.random_range(2..7);
            let ro = weights(rng, batch * k);
            (
                vec![uniform(rng, &[batch, k], -2.0, 2.0)],
                Box::new(move |g, v| {
                    let y = g.softmax(v[0])?;
                    g.weighted_sum(y, &ro)
                }),
            )
        }
        "cross_entropy" => {
            let k = rng.random_range(2..7);
            let targets = soft_targets(rng, batch, k);
            (
                vec![uniform(rng, &[batch, k], -2.0, 2.0)],
                Box::new(move |g, v| {
                    let p = g.softmax(v[0])?;
                    g.cross_entropy(p, &targets)
                }),
            )
        }
        "masked_squared_error" => {
            let shape = [batch, rng.random_range(1..4), rng.random_range(1..8)];
            let n: usize = shape.iter().product();
            let target: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mask: Vec<f64> = (0..n).map(|_| rng.random_bool(0.3) as u8 as f64).collect();
            (
                vec![uniform(rng, &shape, -1.0, 1.0)],
                Box::new(move |g, v| g.masked_squared_error(v[0], &target, &mask)),
            )
        }
        "combine" => {
            let n = rng.random_range(1..4);
            let shapes: Vec<usize> = (0..n).map(|_| rng.random_range(1..5)).collect();
            let ros: Vec<Vec<f64>> = shapes.iter().map(|&s| weights(rng, s)).collect();
            let coefs = weights(rng, n);
            let inputs = shapes.iter().map(|&s| uniform(rng, &[s], -1.0, 1.0)).collect();
            (
                inputs,
                Box::new(move |g, v| {
                    let mut terms = Vec::new();
                    for ((&x, ro), &c) in v.iter().zip(&ros).zip(&coefs) {
                        let sq = g.masked_squared_error(x, &vec![0.0; ro.len()], &vec![0.0; ro.len()])?;
                        let lin = g.weighted_sum(x, ro)?;
                        terms.push((sq, c));
                        terms.push((lin, 1.0 - c));
                    }
                    g.combine(&terms)
                }),
            )
        }
        "weighted_sum" => {
            let n = rng.random_range(1..10);
            let ro = weights(rng, n);
            (
                vec![uniform(rng, &[n], -1.0, 1.0)],
                Box::new(move |g, v| g.weighted_sum(v[0], &ro)),
            )
        }
        "toy_network" => {
            // Scalars w1, b1, w2: y = w2 · relu(w1 · x + b1), squared error.
            let xs: Vec<f64> = (0..4).map(|_| rng.random_range(0.2..1.0)).collect();
            let ys: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let inputs = vec![
                uniform(rng, &[1, 1], 0.5, 1.5),
                uniform(rng, &[1], 0.1, 0.5),
                uniform(rng, &[1, 1], -1.0, 1.0),
            ];
            (
                inputs,
                Box::new(move |g, v| {
                    let x = g.constant(Tensor::from_vec(&[4, 1], xs.clone())?);
                    let zero = g.constant(Tensor::zeros(&[1]));
                    let h = g.linear(x, v[0], v[1])?;
                    let h = g.relu(h);
                    let y = g.linear(h, v[2], zero)?;
                    g.masked_squared_error(y, &ys, &[0.0; 4])
                }),
            )
        }
        other => panic!("unknown layer `{other}`"),
    }
}

/// Worst relative error of `shapes` random instances of every layer.
pub fn layer_suite(seed: u64, shapes: usize) -> Result<Vec<(&'static str, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    LAYERS
        .iter()
        .map(|&layer| {
            let mut worst: f64 = 0.0;
            for _ in 0..shapes {
                let (inputs, f) = layer_case(layer, &mut rng);
                worst = worst.max(max_relative_error(&inputs, STEP, f)?);
            }
            Ok((layer, worst))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_layer_matches_finite_differences() {
        for (layer, err) in layer_suite(7, 3).unwrap() {
            assert!(err <= 1e-4, "{layer}: relative error {err:e}");
        }
    }

    #[test]
    fn a_wrong_gradient_is_detected() {
        // relu at exactly zero: forward differences see slope ½, reverse mode 0.
        let x = Tensor::from_vec(&[1], vec![0.0]).unwrap();
        let err = max_relative_error(&[x], STEP, |g, v| {
            let y = g.relu(v[0]);
            g.weighted_sum(y, &[1.0])
        })
        .unwrap();
        assert!(err > 0.1);
    }
}
