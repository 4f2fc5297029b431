//! Fully connected feed-forward networks with hidden-activation capture.
//!
//! A [`LayeredNet`] stores the dense weights of a rectifier network. Forward
//! passes record every hidden activation so that downstream modules can turn
//! an instance into the set of its most influential neurons: the influence of
//! a hidden neuron is its absolute activation times the sum of the absolute
//! weights leaving it, and [`top_r_threshold`] keeps the `r` strongest neurons
//! of every hidden layer.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transact::Transaction;

/// A hidden neuron: 0-based hidden-layer index plus position within the layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NeuronId {
    pub layer: usize,
    pub index: usize,
}

impl NeuronId {
    pub fn new(layer: usize, index: usize) -> Self {
        NeuronId { layer, index }
    }
}

impl fmt::Display for NeuronId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.layer, self.index)
    }
}

impl FromStr for NeuronId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (layer, index) = s.split_once(':').ok_or_else(|| Error::Parse {
            what: "neuron id".into(),
            message: format!("expected `layer:index`, got `{s}`"),
        })?;
        let parse = |part: &str| {
            part.trim().parse::<usize>().map_err(|e| Error::Parse {
                what: "neuron id".into(),
                message: format!("`{part}`: {e}"),
            })
        };
        Ok(NeuronId::new(parse(layer)?, parse(index)?))
    }
}

/// Widths of the hidden layers, with flat-index helpers for bitset code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HiddenLayout {
    widths: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl HiddenLayout {
    pub fn new(widths: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(widths.len());
        let mut total = 0;
        for &w in &widths {
            offsets.push(total);
            total += w;
        }
        HiddenLayout {
            widths,
            offsets,
            total,
        }
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len()
    }

    /// Total hidden-neuron count.
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn contains(&self, n: NeuronId) -> bool {
        n.layer < self.widths.len() && n.index < self.widths[n.layer]
    }

    pub fn flat(&self, n: NeuronId) -> usize {
        debug_assert!(self.contains(n));
        self.offsets[n.layer] + n.index
    }

    pub fn neuron(&self, flat: usize) -> NeuronId {
        debug_assert!(flat < self.total);
        let layer = match self.offsets.binary_search(&flat) {
            Ok(l) => l,
            Err(l) => l - 1,
        };
        NeuronId::new(layer, flat - self.offsets[layer])
    }

    pub fn iter_neurons(&self) -> impl Iterator<Item = NeuronId> + '_ {
        self.widths
            .iter()
            .enumerate()
            .flat_map(|(layer, &w)| (0..w).map(move |index| NeuronId::new(layer, index)))
    }
}

/// Nonlinearity tag. Only the rectifier is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
        }
    }
}

/// A dense feed-forward network.
///
/// `weights[l][j][k]` connects node `j` of layer `l - 1` (the input when
/// `l == 0`) to node `k` of layer `l`; the last matrix maps the final hidden
/// layer to the output. `biases[l][k]` belongs to node `k` of layer `l`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayeredNet {
    input_dim: usize,
    hidden_widths: Vec<usize>,
    output_dim: usize,
    activation: Activation,
    weights: Vec<Vec<Vec<f64>>>,
    biases: Vec<Vec<f64>>,
}

/// Logits and per-layer post-rectifier hidden activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub logits: Vec<f64>,
    pub hidden: Vec<Vec<f64>>,
}

impl LayeredNet {
    pub fn new(
        input_dim: usize,
        hidden_widths: Vec<usize>,
        output_dim: usize,
        activation: Activation,
        weights: Vec<Vec<Vec<f64>>>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let net = LayeredNet {
            input_dim,
            hidden_widths,
            output_dim,
            activation,
            weights,
            biases,
        };
        net.validate()?;
        Ok(net)
    }

    /// Checks shape consistency and finiteness, reporting the offending
    /// field path.
    fn validate(&self) -> Result<()> {
        if self.hidden_widths.len() < 2 {
            return Err(Error::schema(
                "hidden_widths",
                format!(
                    "need at least 2 hidden layers, found {}",
                    self.hidden_widths.len()
                ),
            ));
        }
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::schema("input_dim/output_dim", "must be positive"));
        }
        if let Some(l) = self.hidden_widths.iter().position(|&w| w == 0) {
            return Err(Error::schema(
                format!("hidden_widths[{l}]"),
                "layer width must be positive",
            ));
        }
        let num_mats = self.hidden_widths.len() + 1;
        if self.weights.len() != num_mats {
            return Err(Error::schema(
                "weights",
                format!("expected {num_mats} matrices, found {}", self.weights.len()),
            ));
        }
        if self.biases.len() != num_mats {
            return Err(Error::schema(
                "biases",
                format!("expected {num_mats} vectors, found {}", self.biases.len()),
            ));
        }
        for l in 0..num_mats {
            let rows = self.fan_in(l);
            let cols = self.layer_width(l);
            if self.weights[l].len() != rows {
                return Err(Error::schema(
                    format!("weights[{l}]"),
                    format!("expected {rows} rows, found {}", self.weights[l].len()),
                ));
            }
            for (j, row) in self.weights[l].iter().enumerate() {
                if row.len() != cols {
                    return Err(Error::schema(
                        format!("weights[{l}][{j}]"),
                        format!("expected {cols} columns, found {}", row.len()),
                    ));
                }
                for (k, w) in row.iter().enumerate() {
                    if !w.is_finite() {
                        return Err(Error::NonFinite {
                            path: format!("weights[{l}][{j}][{k}]"),
                        });
                    }
                }
            }
            if self.biases[l].len() != cols {
                return Err(Error::schema(
                    format!("biases[{l}]"),
                    format!("expected {cols} entries, found {}", self.biases[l].len()),
                ));
            }
            for (k, b) in self.biases[l].iter().enumerate() {
                if !b.is_finite() {
                    return Err(Error::NonFinite {
                        path: format!("biases[{l}][{k}]"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Number of inputs feeding matrix `l`.
    fn fan_in(&self, l: usize) -> usize {
        if l == 0 {
            self.input_dim
        } else {
            self.hidden_widths[l - 1]
        }
    }

    /// Width of the layer matrix `l` feeds into (the output for the last one).
    fn layer_width(&self, l: usize) -> usize {
        if l == self.hidden_widths.len() {
            self.output_dim
        } else {
            self.hidden_widths[l]
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_widths(&self) -> &[usize] {
        &self.hidden_widths
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layout(&self) -> HiddenLayout {
        HiddenLayout::new(self.hidden_widths.clone())
    }

    /// Weight between two neurons in adjacent hidden layers.
    pub fn weight_between(&self, from: NeuronId, to: NeuronId) -> f64 {
        debug_assert_eq!(from.layer + 1, to.layer);
        self.weights[to.layer][from.index][to.index]
    }

    /// Sum of absolute weights leaving a hidden neuron toward the next layer
    /// (the output layer for the last hidden layer).
    pub fn outgoing_abs_sum(&self, n: NeuronId) -> f64 {
        self.weights[n.layer + 1][n.index].iter().map(|w| w.abs()).sum()
    }

    pub(crate) fn weights(&self) -> &[Vec<Vec<f64>>] {
        &self.weights
    }

    pub(crate) fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [Vec<Vec<f64>>] {
        &mut self.weights
    }

    pub(crate) fn biases_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.biases
    }

    /// Runs the network on one instance, capturing every hidden activation.
    pub fn forward_with_activations(&self, x: &[f64]) -> Result<ForwardTrace> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                what: "input vector".into(),
                expected: self.input_dim,
                found: x.len(),
            });
        }
        let num_hidden = self.hidden_widths.len();
        let mut hidden: Vec<Vec<f64>> = Vec::with_capacity(num_hidden);
        let mut prev: &[f64] = x;
        for l in 0..num_hidden {
            let width = self.hidden_widths[l];
            let mut layer = vec![0.0; width];
            for (k, out) in layer.iter_mut().enumerate() {
                let mut z = self.biases[l][k];
                for (j, &v) in prev.iter().enumerate() {
                    z += self.weights[l][j][k] * v;
                }
                *out = self.activation.apply(z);
            }
            hidden.push(layer);
            prev = hidden.last().unwrap();
        }
        let out_mat = num_hidden;
        let mut logits = vec![0.0; self.output_dim];
        for (k, logit) in logits.iter_mut().enumerate() {
            let mut z = self.biases[out_mat][k];
            for (j, &v) in prev.iter().enumerate() {
                z += self.weights[out_mat][j][k] * v;
            }
            *logit = z;
        }
        Ok(ForwardTrace { logits, hidden })
    }

    /// Argmax class of the logits; ties break toward the lower index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let trace = self.forward_with_activations(x)?;
        Ok(argmax(&trace.logits))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let net: LayeredNet =
            serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Parse {
                what: format!("weight file {}", path.display()),
                message: e.to_string(),
            })?;
        net.validate()?;
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut writer, self).map_err(|e| Error::Parse {
            what: format!("weight file {}", path.display()),
            message: e.to_string(),
        })?;
        writer.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Per-neuron influence: `|activation| * sum(|outgoing weights|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceVector {
    values: Vec<Vec<f64>>,
}

impl InfluenceVector {
    pub fn per_layer(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn get(&self, n: NeuronId) -> f64 {
        self.values[n.layer][n.index]
    }

    /// Total entry count across layers.
    pub fn len(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.values.iter().flatten().copied().collect()
    }
}

/// Computes the influence of every hidden neuron from captured activations.
pub fn influence(net: &LayeredNet, hidden: &[Vec<f64>]) -> Result<InfluenceVector> {
    if hidden.len() != net.hidden_widths().len() {
        return Err(Error::DimensionMismatch {
            what: "hidden layers".into(),
            expected: net.hidden_widths().len(),
            found: hidden.len(),
        });
    }
    let mut values = Vec::with_capacity(hidden.len());
    for (l, layer) in hidden.iter().enumerate() {
        if layer.len() != net.hidden_widths()[l] {
            return Err(Error::DimensionMismatch {
                what: format!("hidden layer {l}"),
                expected: net.hidden_widths()[l],
                found: layer.len(),
            });
        }
        let row: Vec<f64> = layer
            .iter()
            .enumerate()
            .map(|(j, &a)| a.abs() * net.outgoing_abs_sum(NeuronId::new(l, j)))
            .collect();
        values.push(row);
    }
    Ok(InfluenceVector { values })
}

/// Keeps the `r` most influential neurons of every hidden layer.
///
/// Ties break toward the lower neuron index, so the selection is total and
/// deterministic. Every hidden layer contributes exactly `r` neurons.
pub fn top_r_threshold(infl: &InfluenceVector, r: usize) -> Result<Transaction> {
    if r == 0 {
        return Err(Error::InvalidParam {
            what: "r".into(),
            message: "must be at least 1".into(),
        });
    }
    let mut selected = std::collections::BTreeSet::new();
    for (layer, values) in infl.per_layer().iter().enumerate() {
        if r > values.len() {
            return Err(Error::InvalidParam {
                what: "r".into(),
                message: format!(
                    "r = {r} exceeds width {} of hidden layer {layer}",
                    values.len()
                ),
            });
        }
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| {
            values[b]
                .partial_cmp(&values[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        for &index in order.iter().take(r) {
            selected.insert(NeuronId::new(layer, index));
        }
    }
    Transaction::new(selected)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 2-[2,2]-1 net with every weight 1 and every bias 0.
    fn ones_net() -> LayeredNet {
        LayeredNet::new(
            2,
            vec![2, 2],
            1,
            Activation::Relu,
            vec![
                vec![vec![1.0, 1.0], vec![1.0, 1.0]],
                vec![vec![1.0, 1.0], vec![1.0, 1.0]],
                vec![vec![1.0], vec![1.0]],
            ],
            vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0]],
        )
        .unwrap()
    }

    #[test]
    fn forward_hand_computed() {
        let net = ones_net();
        let trace = net.forward_with_activations(&[1.0, 1.0]).unwrap();
        assert_eq!(trace.hidden, vec![vec![2.0, 2.0], vec![4.0, 4.0]]);
        assert_eq!(trace.logits, vec![8.0]);
    }

    #[test]
    fn forward_zero_input_zero_bias() {
        let net = ones_net();
        let trace = net.forward_with_activations(&[0.0, 0.0]).unwrap();
        for layer in &trace.hidden {
            assert!(layer.iter().all(|&a| a == 0.0));
        }
    }

    #[test]
    fn forward_rejects_bad_dimension() {
        let net = ones_net();
        assert!(matches!(
            net.forward_with_activations(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn hidden_activations_nonnegative_under_rectifier() {
        let mut net = ones_net();
        net.weights_mut()[0][0][0] = -3.0;
        net.weights_mut()[0][1][0] = -2.0;
        let trace = net.forward_with_activations(&[1.5, 2.5]).unwrap();
        assert!(trace.hidden.iter().flatten().all(|&a| a >= 0.0));
    }

    #[test]
    fn influence_direct_arithmetic() {
        // Activation 0.5 with outgoing weights (0.2, -0.4) gives 0.3.
        let mut net = ones_net();
        net.weights_mut()[1][0][0] = 0.2;
        net.weights_mut()[1][0][1] = -0.4;
        let hidden = vec![vec![0.5, 0.0], vec![0.0, 0.0]];
        let infl = influence(&net, &hidden).unwrap();
        assert!((infl.get(NeuronId::new(0, 0)) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn influence_zero_cases() {
        let mut net = ones_net();
        net.weights_mut()[2][1][0] = 0.0;
        let hidden = vec![vec![0.0, 3.0], vec![2.0, 5.0]];
        let infl = influence(&net, &hidden).unwrap();
        // Zero activation.
        assert_eq!(infl.get(NeuronId::new(0, 0)), 0.0);
        // Zero outgoing weights.
        assert_eq!(infl.get(NeuronId::new(1, 1)), 0.0);
        // Everything is nonnegative.
        assert!(infl.flatten().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn top_r_orders_by_influence_then_index() {
        let infl = InfluenceVector {
            values: vec![vec![0.9, 0.1, 0.5], vec![0.5, 0.5, 0.0]],
        };
        let t = top_r_threshold(&infl, 2).unwrap();
        let ids: Vec<NeuronId> = t.neurons().iter().copied().collect();
        assert_eq!(
            ids,
            vec![
                NeuronId::new(0, 0),
                NeuronId::new(0, 2),
                NeuronId::new(1, 0),
                NeuronId::new(1, 1),
            ]
        );
    }

    #[test]
    fn top_r_tie_breaks_to_lower_index() {
        let infl = InfluenceVector {
            values: vec![vec![0.5, 0.5], vec![1.0, 1.0]],
        };
        let t = top_r_threshold(&infl, 1).unwrap();
        assert!(t.neurons().contains(&NeuronId::new(0, 0)));
        assert!(t.neurons().contains(&NeuronId::new(1, 0)));
        assert_eq!(t.neurons().len(), 2);
    }

    #[test]
    fn top_r_full_width_selects_everything() {
        let infl = InfluenceVector {
            values: vec![vec![0.0, 1.0], vec![2.0, 3.0]],
        };
        let t = top_r_threshold(&infl, 2).unwrap();
        assert_eq!(t.neurons().len(), 4);
    }

    #[test]
    fn top_r_rejects_oversized_r() {
        let infl = InfluenceVector {
            values: vec![vec![0.0, 1.0], vec![2.0, 3.0]],
        };
        assert!(matches!(
            top_r_threshold(&infl, 3),
            Err(Error::InvalidParam { .. })
        ));
    }

    #[test]
    fn save_load_round_trip() {
        let net = ones_net();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        net.save(&path).unwrap();
        let loaded = LayeredNet::load(&path).unwrap();
        assert_eq!(loaded.hidden_widths(), net.hidden_widths());
        assert_eq!(loaded.weights(), net.weights());
        assert_eq!(loaded.biases(), net.biases());
    }

    #[test]
    fn load_rejects_shape_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        // weights[0] has 3 rows but input_dim is 2.
        std::fs::write(
            &path,
            r#"{
                "input_dim": 2, "hidden_widths": [2, 2], "output_dim": 1,
                "activation": "relu",
                "weights": [
                    [[1.0,1.0],[1.0,1.0],[1.0,1.0]],
                    [[1.0,1.0],[1.0,1.0]],
                    [[1.0],[1.0]]
                ],
                "biases": [[0.0,0.0],[0.0,0.0],[0.0]]
            }"#,
        )
        .unwrap();
        match LayeredNet::load(&path) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "weights[0]"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn load_rejects_non_finite() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nan.json");
        std::fs::write(
            &path,
            r#"{
                "input_dim": 2, "hidden_widths": [2, 2], "output_dim": 1,
                "activation": "relu",
                "weights": [
                    [[1.0,1.0],[1.0,null]],
                    [[1.0,1.0],[1.0,1.0]],
                    [[1.0],[1.0]]
                ],
                "biases": [[0.0,0.0],[0.0,0.0],[0.0]]
            }"#,
        )
        .unwrap();
        // serde_json refuses null for f64, which surfaces as a parse error;
        // an explicit NaN cannot appear in JSON, so a crafted net with NaN
        // must be caught at construction instead.
        assert!(LayeredNet::load(&path).is_err());
        let built = LayeredNet::new(
            2,
            vec![2, 2],
            1,
            Activation::Relu,
            vec![
                vec![vec![1.0, f64::NAN], vec![1.0, 1.0]],
                vec![vec![1.0, 1.0], vec![1.0, 1.0]],
                vec![vec![1.0], vec![1.0]],
            ],
            vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0]],
        );
        match built {
            Err(Error::NonFinite { path }) => assert_eq!(path, "weights[0][0][1]"),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn layout_flat_round_trip() {
        let layout = HiddenLayout::new(vec![3, 2, 4]);
        for n in layout.iter_neurons() {
            assert_eq!(layout.neuron(layout.flat(n)), n);
        }
        assert_eq!(layout.total(), 9);
    }
}
