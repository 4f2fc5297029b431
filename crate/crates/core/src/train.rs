//! Seeded minibatch training for [`LayeredNet`].
//!
//! Softmax cross-entropy with plain SGD. The run is fully determined by the
//! seed: initialization, shuffling, and update order never consult any other
//! entropy source, so identical seeds produce bit-identical weights.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::net::{Activation, LayeredNet};

const BATCH_SIZE: usize = 32;

/// Trains a rectifier MLP with the given hidden widths.
///
/// `epochs = 0` returns the seeded initialization unchanged. A non-finite
/// epoch loss aborts with [`Error::Divergence`].
pub fn train_mlp(
    data: &LabeledDataset,
    widths: &[usize],
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<LayeredNet> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if widths.len() < 2 {
        return Err(Error::InvalidParam {
            what: "widths".into(),
            message: format!("need at least 2 hidden layers, got {}", widths.len()),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = init_net(
        data.input_dim(),
        widths.to_vec(),
        data.num_classes(),
        &mut rng,
    )?;

    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(BATCH_SIZE) {
            epoch_loss += sgd_step(&mut net, data, batch, lr)?;
        }
        let epoch_loss = epoch_loss / n as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                loss: epoch_loss,
            });
        }
    }
    Ok(net)
}

/// Fraction of instances whose argmax logit matches the label.
pub fn accuracy(net: &LayeredNet, data: &LabeledDataset) -> Result<f64> {
    let mut correct = 0usize;
    for (x, y) in data.iter() {
        if net.predict(x)? == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

fn init_net(
    input_dim: usize,
    widths: Vec<usize>,
    output_dim: usize,
    rng: &mut ChaCha8Rng,
) -> Result<LayeredNet> {
    let num_mats = widths.len() + 1;
    let mut weights = Vec::with_capacity(num_mats);
    let mut biases = Vec::with_capacity(num_mats);
    for l in 0..num_mats {
        let fan_in = if l == 0 { input_dim } else { widths[l - 1] };
        let fan_out = if l == widths.len() {
            output_dim
        } else {
            widths[l]
        };
        // He-uniform for rectifier layers, Xavier-uniform for the linear output.
        let limit = if l == widths.len() {
            (6.0 / (fan_in + fan_out) as f64).sqrt()
        } else {
            (6.0 / fan_in as f64).sqrt()
        };
        let mat: Vec<Vec<f64>> = (0..fan_in)
            .map(|_| (0..fan_out).map(|_| rng.random_range(-limit..limit)).collect())
            .collect();
        weights.push(mat);
        biases.push(vec![0.0; fan_out]);
    }
    LayeredNet::new(
        input_dim,
        widths,
        output_dim,
        Activation::Relu,
        weights,
        biases,
    )
}

/// One minibatch update. Returns the summed cross-entropy loss of the batch.
fn sgd_step(net: &mut LayeredNet, data: &LabeledDataset, batch: &[usize], lr: f64) -> Result<f64> {
    let num_mats = net.hidden_widths().len() + 1;
    let mut grad_w: Vec<Vec<Vec<f64>>> = net
        .weights()
        .iter()
        .map(|m| m.iter().map(|row| vec![0.0; row.len()]).collect())
        .collect();
    let mut grad_b: Vec<Vec<f64>> = net.biases().iter().map(|b| vec![0.0; b.len()]).collect();

    let mut loss = 0.0;
    for &i in batch {
        let x = data.instance(i);
        let y = data.label(i);
        let trace = net.forward_with_activations(x)?;
        let probs = softmax(&trace.logits);
        // Floor against exp underflow, but let NaN through so divergence is
        // caught by the epoch check instead of being masked by max().
        let p = probs[y];
        loss -= if p.is_nan() { f64::NAN } else { p.max(1e-300) }.ln();

        // dL/dz for the output layer.
        let mut delta: Vec<f64> = probs;
        delta[y] -= 1.0;

        for l in (0..num_mats).rev() {
            let below: &[f64] = if l == 0 { x } else { &trace.hidden[l - 1] };
            for (j, &a) in below.iter().enumerate() {
                for (k, &d) in delta.iter().enumerate() {
                    grad_w[l][j][k] += a * d;
                }
            }
            for (k, &d) in delta.iter().enumerate() {
                grad_b[l][k] += d;
            }
            if l == 0 {
                break;
            }
            // Backpropagate through the rectifier of layer l - 1.
            let acts = &trace.hidden[l - 1];
            let mut next = vec![0.0; acts.len()];
            for (j, slot) in next.iter_mut().enumerate() {
                if acts[j] > 0.0 {
                    let mut s = 0.0;
                    for (k, &d) in delta.iter().enumerate() {
                        s += net.weights()[l][j][k] * d;
                    }
                    *slot = s;
                }
            }
            delta = next;
        }
    }

    let scale = lr / batch.len() as f64;
    for l in 0..num_mats {
        for (row, grow) in net.weights_mut()[l].iter_mut().zip(&grad_w[l]) {
            for (w, g) in row.iter_mut().zip(grow) {
                *w -= scale * g;
            }
        }
        for (b, g) in net.biases_mut()[l].iter_mut().zip(&grad_b[l]) {
            *b -= scale * g;
        }
    }
    Ok(loss)
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}
