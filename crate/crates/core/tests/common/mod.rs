//! Shared generators and independent oracles for the acceptance suite.

use std::collections::BTreeSet;

use petgraph::unionfind::UnionFind;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use backbone_core::data::LabeledDataset;
use backbone_core::net::{Activation, HiddenLayout, LayeredNet, NeuronId};
use backbone_core::transact::{ConceptId, Transaction, TransactionTable};

pub fn neuron_set(ids: &[(usize, usize)]) -> BTreeSet<NeuronId> {
    ids.iter().map(|&(l, i)| NeuronId::new(l, i)).collect()
}

/// Random net with every weight nonzero (magnitudes in [0.2, 1.0]).
pub fn random_dense_net(rng: &mut ChaCha8Rng, widths: &[usize]) -> LayeredNet {
    random_net(rng, widths, 0.0)
}

/// Random net with a `zero_prob` share of exactly-zero weights.
pub fn random_net(rng: &mut ChaCha8Rng, widths: &[usize], zero_prob: f64) -> LayeredNet {
    let input_dim = 2;
    let output_dim = 2;
    let num_mats = widths.len() + 1;
    let mut weights = Vec::with_capacity(num_mats);
    let mut biases = Vec::with_capacity(num_mats);
    for l in 0..num_mats {
        let rows = if l == 0 { input_dim } else { widths[l - 1] };
        let cols = if l == widths.len() {
            output_dim
        } else {
            widths[l]
        };
        let mut mat = Vec::with_capacity(rows);
        for _ in 0..rows {
            let mut row = Vec::with_capacity(cols);
            for _ in 0..cols {
                if rng.random_range(0.0..1.0) < zero_prob {
                    row.push(0.0);
                } else {
                    let sign = if rng.random_range(0.0..1.0) < 0.5 { -1.0 } else { 1.0 };
                    row.push(sign * rng.random_range(0.2..1.0));
                }
            }
            mat.push(row);
        }
        weights.push(mat);
        biases.push(vec![0.0; cols]);
    }
    LayeredNet::new(
        input_dim,
        widths.to_vec(),
        output_dim,
        Activation::Relu,
        weights,
        biases,
    )
    .unwrap()
}

/// Random table whose rows each keep at least one neuron per layer.
pub fn random_layer_spanning_table(
    rng: &mut ChaCha8Rng,
    widths: &[usize],
    max_rows: usize,
) -> TransactionTable {
    let layout = HiddenLayout::new(widths.to_vec());
    let n_rows = rng.random_range(2..=max_rows);
    let rows: Vec<Transaction> = (0..n_rows)
        .map(|_| {
            let mut neurons = BTreeSet::new();
            for (layer, &w) in widths.iter().enumerate() {
                neurons.insert(NeuronId::new(layer, rng.random_range(0..w)));
            }
            for n in layout.iter_neurons() {
                if rng.random_range(0.0..1.0) < 0.35 {
                    neurons.insert(n);
                }
            }
            Transaction::new(neurons).unwrap()
        })
        .collect();
    TransactionTable::from_rows(ConceptId::ClassCorrect(0), widths.to_vec(), rows).unwrap()
}

/// Planted instance over a 4+4 dense net: one or two disjoint layer-spanning
/// chains with distinct supports, plus noise neurons that appear exactly
/// once anywhere in the table.
pub struct PlantedInstance {
    pub net: LayeredNet,
    pub table: TransactionTable,
    pub chains: Vec<BTreeSet<NeuronId>>,
}

pub fn planted_instance(rng: &mut ChaCha8Rng) -> PlantedInstance {
    let widths = vec![4usize, 4];
    let net = random_dense_net(rng, &widths);

    let a1 = rng.random_range(0..4);
    let b1 = rng.random_range(0..4);
    let chain1 = neuron_set(&[(0, a1), (1, b1)]);
    let two_chains = rng.random_range(0.0..1.0) < 0.7;
    let mut chains = vec![chain1.clone()];
    if two_chains {
        let a2 = (a1 + rng.random_range(1..4)) % 4;
        let b2 = (b1 + rng.random_range(1..4)) % 4;
        chains.push(neuron_set(&[(0, a2), (1, b2)]));
    }

    // Noise pool: neurons used by no chain, each placed at most once.
    let layout = HiddenLayout::new(widths.clone());
    let mut noise_pool: Vec<NeuronId> = layout
        .iter_neurons()
        .filter(|n| chains.iter().all(|c| !c.contains(n)))
        .collect();
    // Deterministic shuffle.
    for i in (1..noise_pool.len()).rev() {
        noise_pool.swap(i, rng.random_range(0..=i));
    }

    let s1 = rng.random_range(5..=8);
    let s2 = if two_chains { rng.random_range(2..s1) } else { 0 };
    let noise_rows = rng.random_range(1..=2.min(noise_pool.len()));

    let mut rows = Vec::new();
    for i in 0..s1 {
        let mut s = chains[0].clone();
        // Occasionally decorate a chain row with one single-use noise neuron.
        if i == 0 && noise_pool.len() > noise_rows {
            s.insert(noise_pool.pop().unwrap());
        }
        rows.push(Transaction::new(s).unwrap());
    }
    for _ in 0..s2 {
        rows.push(Transaction::new(chains[1].clone()).unwrap());
    }
    for _ in 0..noise_rows {
        let n = noise_pool.pop().unwrap();
        rows.push(Transaction::new([n].into_iter().collect()).unwrap());
    }
    let table =
        TransactionTable::from_rows(ConceptId::ClassCorrect(0), widths, rows).unwrap();
    PlantedInstance { net, table, chains }
}

/// Independent completeness check: layer inclusion plus connectivity via
/// petgraph's union-find over nonzero adjacent-layer weights.
pub fn independent_is_complete(pattern: &BTreeSet<NeuronId>, net: &LayeredNet) -> bool {
    if pattern.is_empty() {
        return false;
    }
    let num_layers = net.hidden_widths().len();
    for l in 0..num_layers {
        if !pattern.iter().any(|n| n.layer == l) {
            return false;
        }
    }
    let nodes: Vec<NeuronId> = pattern.iter().copied().collect();
    let mut uf = UnionFind::<usize>::new(nodes.len());
    for (i, &a) in nodes.iter().enumerate() {
        for (j, &b) in nodes.iter().enumerate().skip(i + 1) {
            let connected = if b.layer == a.layer + 1 {
                net.weight_between(a, b).abs() > 1e-12
            } else if a.layer == b.layer + 1 {
                net.weight_between(b, a).abs() > 1e-12
            } else {
                false
            };
            if connected {
                uf.union(i, j);
            }
        }
    }
    let root = uf.find(0);
    (0..nodes.len()).all(|i| uf.find(i) == root)
}

/// Brute force over all neuron subsets: the greatest support of any complete
/// subgraph, or None when no complete subgraph exists in any row.
pub fn brute_force_max_complete_support(table: &TransactionTable, net: &LayeredNet) -> Option<f64> {
    let layout = table.layout();
    let universe = layout.total();
    assert!(universe <= 16);
    let row_bits: Vec<u32> = table
        .rows()
        .iter()
        .map(|row| {
            row.neurons()
                .iter()
                .fold(0u32, |acc, &n| acc | 1 << layout.flat(n))
        })
        .collect();
    let mut best: Option<u32> = None;
    for mask in 1u32..(1 << universe) {
        let count = row_bits.iter().filter(|&&r| mask & !r == 0).count() as u32;
        if count == 0 || best.is_some_and(|b| count <= b) {
            continue;
        }
        let pattern: BTreeSet<NeuronId> = (0..universe)
            .filter(|&i| mask & (1 << i) != 0)
            .map(|i| layout.neuron(i))
            .collect();
        if independent_is_complete(&pattern, net) {
            best = Some(count);
        }
    }
    best.map(|count| count as f64 / table.n_rows() as f64)
}

// ---------------------------------------------------------------------------
// Synthetic digit images for the end-to-end criterion, used when a real
// MNIST directory is not available.
// ---------------------------------------------------------------------------

const SIDE: usize = 28;

fn stamp(img: &mut [f64], rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) {
    for r in rows {
        for c in cols.clone() {
            img[r * SIDE + c] = 1.0;
        }
    }
}

fn glyph(digit: usize) -> Vec<f64> {
    let mut img = vec![0.0; SIDE * SIDE];
    match digit {
        3 => {
            stamp(&mut img, 5..8, 8..20);
            stamp(&mut img, 13..16, 10..20);
            stamp(&mut img, 21..24, 8..20);
            stamp(&mut img, 5..24, 18..21);
        }
        5 => {
            stamp(&mut img, 5..8, 8..21);
            stamp(&mut img, 5..16, 8..11);
            stamp(&mut img, 13..16, 8..20);
            stamp(&mut img, 13..24, 18..21);
            stamp(&mut img, 21..24, 8..20);
        }
        _ => panic!("only digits 3 and 5 are drawn"),
    }
    img
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn augmented(base: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let dx = rng.random_range(-3i64..=3);
    let dy = rng.random_range(-3i64..=3);
    let intensity = rng.random_range(0.55..1.0);
    let mut img = vec![0.0; SIDE * SIDE];
    for r in 0..SIDE {
        for c in 0..SIDE {
            let sr = r as i64 - dy;
            let sc = c as i64 - dx;
            if (0..SIDE as i64).contains(&sr) && (0..SIDE as i64).contains(&sc) {
                img[r * SIDE + c] = base[sr as usize * SIDE + sc as usize] * intensity;
            }
        }
    }
    for v in img.iter_mut() {
        *v = (*v + 0.18 * gaussian(rng)).clamp(0.0, 1.0);
    }
    img
}

/// Digit images labeled with the real digit values 3 and 5.
pub fn synthetic_digits(seed: u64, per_class: usize) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let three = glyph(3);
    let five = glyph(5);
    let mut instances = Vec::with_capacity(2 * per_class);
    let mut labels = Vec::with_capacity(2 * per_class);
    for _ in 0..per_class {
        instances.push(augmented(&three, &mut rng));
        labels.push(3);
        instances.push(augmented(&five, &mut rng));
        labels.push(5);
    }
    LabeledDataset::new(instances, labels, 6).unwrap()
}

/// Real MNIST if `BACKBONE_MNIST_DIR` (or `data/mnist`) holds the IDX files,
/// otherwise the synthetic stand-in. Returns (train, test, source label);
/// both sets go through the IDX reader either way.
pub fn digits_3v5(
    tmp: &std::path::Path,
    train_n: usize,
    test_n: usize,
) -> (LabeledDataset, LabeledDataset, &'static str) {
    let candidates: Vec<std::path::PathBuf> = std::env::var("BACKBONE_MNIST_DIR")
        .ok()
        .map(std::path::PathBuf::from)
        .into_iter()
        .chain([std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("../../data/mnist")])
        .collect();
    for dir in candidates {
        let train_images = dir.join("train-images-idx3-ubyte");
        let train_labels = dir.join("train-labels-idx1-ubyte");
        let test_images = dir.join("t10k-images-idx3-ubyte");
        let test_labels = dir.join("t10k-labels-idx1-ubyte");
        if train_images.exists() && train_labels.exists() && test_images.exists() {
            let train = LabeledDataset::load_idx(&train_images, &train_labels)
                .unwrap()
                .select_classes(&[3, 5])
                .unwrap()
                .take(train_n)
                .unwrap();
            let test = LabeledDataset::load_idx(&test_images, &test_labels)
                .unwrap()
                .select_classes(&[3, 5])
                .unwrap()
                .take(test_n)
                .unwrap();
            return (train, test, "mnist");
        }
    }

    // Synthetic fallback, round-tripped through the IDX files.
    let train_raw = synthetic_digits(2024, train_n / 2);
    let test_raw = synthetic_digits(4048, test_n / 2);
    let write_and_load = |data: &LabeledDataset, tag: &str| -> LabeledDataset {
        let images = tmp.join(format!("{tag}-images-idx3-ubyte"));
        let labels = tmp.join(format!("{tag}-labels-idx1-ubyte"));
        data.save_idx(&images, &labels, (SIDE, SIDE)).unwrap();
        LabeledDataset::load_idx(&images, &labels)
            .unwrap()
            .select_classes(&[3, 5])
            .unwrap()
    };
    (
        write_and_load(&train_raw, "train"),
        write_and_load(&test_raw, "test"),
        "synthetic",
    )
}
