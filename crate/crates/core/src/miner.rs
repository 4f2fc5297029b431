//! Frequent-pattern mining over transaction tables.
//!
//! [`frequent_patterns`] enumerates the *maximal* frequent itemsets at a
//! minimum support: no returned pattern has a frequent strict superset.
//! Enumeration is a depth-first candidate growth over per-item row bitsets
//! with anti-monotone pruning, capped at [`CANDIDATE_CAP`] visited candidates.
//!
//! A pattern is a *complete graph* when it holds at least one neuron in every
//! hidden layer and its neurons form a connected graph through nonzero
//! adjacent-layer weights; see [`is_complete_graph`].

use std::collections::BTreeSet;

use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::net::{HiddenLayout, LayeredNet, NeuronId};
use crate::transact::TransactionTable;

/// Weights with absolute value at or below this count as zero. Trained
/// weights are never exactly zero; the epsilon guards serialized rounding.
pub const NONZERO_EPS: f64 = 1e-12;

/// Hard cap on candidates visited by one mining call.
pub const CANDIDATE_CAP: u64 = 1_000_000;

/// A mined itemset with its exact support.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    pub neurons: BTreeSet<NeuronId>,
    pub support: f64,
}

impl Pattern {
    pub fn is_complete(&self, net: &LayeredNet) -> bool {
        is_complete_graph(&self.neurons, net)
    }
}

/// All maximal frequent itemsets with support at least `minsup`, each with
/// its exact support, ordered by support desc, then size desc, then
/// lexicographic neuron sequence.
pub fn frequent_patterns(table: &TransactionTable, minsup: f64) -> Result<Vec<Pattern>> {
    let compiled = CompiledTable::new(table);
    let min_count = min_count_for(minsup, compiled.n_rows)?;
    let mined = maximal_frequent(&compiled, min_count, CANDIDATE_CAP)?;
    Ok(into_sorted_patterns(&compiled, mined))
}

/// True iff the pattern covers every hidden layer and is connected through
/// nonzero adjacent-layer weights.
pub fn is_complete_graph(neurons: &BTreeSet<NeuronId>, net: &LayeredNet) -> bool {
    if neurons.is_empty() {
        return false;
    }
    let widths = net.hidden_widths();
    let mut layer_seen = vec![false; widths.len()];
    for n in neurons {
        if n.layer >= widths.len() || n.index >= widths[n.layer] {
            return false;
        }
        layer_seen[n.layer] = true;
    }
    if !layer_seen.iter().all(|&s| s) {
        return false;
    }

    // Connectivity over the induced graph; edges exist only between adjacent
    // layers.
    let nodes: Vec<NeuronId> = neurons.iter().copied().collect();
    let mut visited = vec![false; nodes.len()];
    let mut stack = vec![0usize];
    visited[0] = true;
    let mut reached = 1;
    while let Some(i) = stack.pop() {
        let a = nodes[i];
        for (j, &b) in nodes.iter().enumerate() {
            if visited[j] {
                continue;
            }
            let connected = if b.layer == a.layer + 1 {
                net.weight_between(a, b).abs() > NONZERO_EPS
            } else if a.layer == b.layer + 1 {
                net.weight_between(b, a).abs() > NONZERO_EPS
            } else {
                false
            };
            if connected {
                visited[j] = true;
                reached += 1;
                stack.push(j);
            }
        }
    }
    reached == nodes.len()
}

/// Converts a fractional minsup into a row count, biased so that supports
/// that are exact multiples of `1/n` land on their own grid point.
pub(crate) fn min_count_for(minsup: f64, n_rows: usize) -> Result<u64> {
    if !(minsup > 0.0 && minsup <= 1.0) {
        return Err(Error::InvalidParam {
            what: "minsup".into(),
            message: format!("must lie in (0, 1], got {minsup}"),
        });
    }
    let c = (minsup * n_rows as f64 - 1e-9).ceil();
    Ok((c as u64).max(1))
}

/// Bitset view of a table: one row mask per item.
pub(crate) struct CompiledTable {
    pub layout: HiddenLayout,
    pub n_rows: usize,
    pub item_masks: Vec<Bits>,
    pub item_counts: Vec<u64>,
    pub total_ones: u64,
}

impl CompiledTable {
    pub fn new(table: &TransactionTable) -> Self {
        let layout = table.layout();
        let universe = layout.total();
        let n_rows = table.n_rows();
        let mut item_masks = vec![Bits::new(n_rows); universe];
        let mut total_ones = 0u64;
        for (r, row) in table.rows().iter().enumerate() {
            for &n in row.neurons() {
                item_masks[layout.flat(n)].set(r);
                total_ones += 1;
            }
        }
        let item_counts = item_masks.iter().map(Bits::count_ones).collect();
        CompiledTable {
            layout,
            n_rows,
            item_masks,
            item_counts,
            total_ones,
        }
    }

    pub fn neurons_of(&self, items: &[usize]) -> BTreeSet<NeuronId> {
        items.iter().map(|&i| self.layout.neuron(i)).collect()
    }

    pub fn items_of(&self, neurons: &BTreeSet<NeuronId>) -> Vec<usize> {
        neurons.iter().map(|&n| self.layout.flat(n)).collect()
    }
}

/// Maximal frequent itemsets as (ascending item list, support count).
pub(crate) fn maximal_frequent(
    ct: &CompiledTable,
    min_count: u64,
    cap: u64,
) -> Result<Vec<(Vec<usize>, u64)>> {
    let mut out = Vec::new();
    visit_frequent(ct, min_count, cap, &mut |items, mask, _count, has_ext| {
        if has_ext {
            return;
        }
        // No frequent extension to the right; the set is maximal iff no
        // skipped item extends it frequently either.
        let frequent_left = (0..ct.item_masks.len()).filter(|&i| {
            ct.item_counts[i] >= min_count && !items.contains(&i)
        });
        for i in frequent_left {
            if ct.item_masks[i].and_count(mask) >= min_count {
                return;
            }
        }
        out.push((items.to_vec(), mask.count_ones()));
    })?;
    Ok(out)
}

/// The complete frequent pattern of greatest support at `min_count`, breaking
/// ties toward the larger pattern and then the lexicographically smaller one.
/// Considers every frequent itemset, not only maximal ones, because a
/// superset of a connected pattern can be disconnected.
pub(crate) fn best_complete_at(
    ct: &CompiledTable,
    net: &LayeredNet,
    min_count: u64,
    cap: u64,
) -> Result<Option<(Vec<usize>, u64)>> {
    let num_layers = ct.layout.num_layers();
    let mut best: Option<(Vec<usize>, u64)> = None;
    visit_frequent(ct, min_count, cap, &mut |items, _mask, count, _has_ext| {
        if items.len() < num_layers {
            return;
        }
        let better = match &best {
            None => true,
            Some((b_items, b_count)) => {
                count > *b_count || (count == *b_count && items.len() > b_items.len())
            }
        };
        if better && is_complete_graph(&ct.neurons_of(items), net) {
            best = Some((items.to_vec(), count));
        }
    })?;
    Ok(best)
}

/// Depth-first enumeration of every frequent itemset, in lexicographic
/// preorder. The visitor receives the itemset, its row mask, its support
/// count, and whether some right-extension of it is frequent.
fn visit_frequent(
    ct: &CompiledTable,
    min_count: u64,
    cap: u64,
    visit: &mut impl FnMut(&[usize], &Bits, u64, bool),
) -> Result<()> {
    let items: Vec<usize> = (0..ct.item_masks.len())
        .filter(|&i| ct.item_counts[i] >= min_count)
        .collect();
    let mut visited = 0u64;
    let mut prefix = Vec::new();
    for (pos, &item) in items.iter().enumerate() {
        prefix.push(item);
        recurse(
            ct,
            &items,
            min_count,
            cap,
            &mut visited,
            &mut prefix,
            ct.item_masks[item].clone(),
            pos + 1,
            visit,
        )?;
        prefix.pop();
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    ct: &CompiledTable,
    items: &[usize],
    min_count: u64,
    cap: u64,
    visited: &mut u64,
    prefix: &mut Vec<usize>,
    mask: Bits,
    start: usize,
    visit: &mut impl FnMut(&[usize], &Bits, u64, bool),
) -> Result<()> {
    *visited += 1;
    if *visited > cap {
        return Err(Error::CandidateCapExceeded { cap });
    }
    let mut has_ext = false;
    for pos in start..items.len() {
        let item = items[pos];
        if ct.item_masks[item].and_count(&mask) >= min_count {
            has_ext = true;
            let new_mask = mask.and(&ct.item_masks[item]);
            prefix.push(item);
            recurse(
                ct, items, min_count, cap, visited, prefix, new_mask, pos + 1, visit,
            )?;
            prefix.pop();
        }
    }
    visit(prefix, &mask, mask.count_ones(), has_ext);
    Ok(())
}

pub(crate) fn into_sorted_patterns(
    ct: &CompiledTable,
    mined: Vec<(Vec<usize>, u64)>,
) -> Vec<Pattern> {
    let mut with_keys: Vec<(u64, Vec<usize>)> = mined
        .into_iter()
        .map(|(items, count)| (count, items))
        .collect();
    with_keys.sort_by(|(ca, ia), (cb, ib)| {
        cb.cmp(ca)
            .then(ib.len().cmp(&ia.len()))
            .then(ia.cmp(ib))
    });
    with_keys
        .into_iter()
        .map(|(count, items)| Pattern {
            neurons: ct.neurons_of(&items),
            support: count as f64 / ct.n_rows as f64,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Activation;
    use crate::transact::{ConceptId, Transaction};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn neuron_set(ids: &[(usize, usize)]) -> BTreeSet<NeuronId> {
        ids.iter().map(|&(l, i)| NeuronId::new(l, i)).collect()
    }

    /// Dense 4+4 net, every weight 0.5.
    fn dense_net(widths: &[usize]) -> LayeredNet {
        net_with(widths, |_, _, _| 0.5)
    }

    fn net_with(widths: &[usize], mut w: impl FnMut(usize, usize, usize) -> f64) -> LayeredNet {
        let input_dim = 2;
        let output_dim = 2;
        let num_mats = widths.len() + 1;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..num_mats {
            let rows = if l == 0 { input_dim } else { widths[l - 1] };
            let cols = if l == widths.len() { output_dim } else { widths[l] };
            let mut mat = Vec::with_capacity(rows);
            for j in 0..rows {
                let mut row = Vec::with_capacity(cols);
                for k in 0..cols {
                    row.push(w(l, j, k));
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

    fn fig2_table() -> TransactionTable {
        let block = neuron_set(&[(0, 1), (0, 3), (1, 0), (1, 3)]);
        let rest = neuron_set(&[(0, 0), (0, 2), (1, 1), (1, 2)]);
        let rows = vec![
            Transaction::new(block.clone()).unwrap(),
            Transaction::new(block.clone()).unwrap(),
            Transaction::new(block.clone()).unwrap(),
            Transaction::new(block).unwrap(),
            Transaction::new(rest).unwrap(),
        ];
        TransactionTable::from_rows(ConceptId::ClassCorrect(0), vec![4, 4], rows).unwrap()
    }

    #[test]
    fn identical_rows_at_full_support() {
        let row = neuron_set(&[(0, 0), (1, 1)]);
        let rows = vec![
            Transaction::new(row.clone()).unwrap(),
            Transaction::new(row.clone()).unwrap(),
            Transaction::new(row.clone()).unwrap(),
        ];
        let table = TransactionTable::from_rows(ConceptId::ClassCorrect(0), vec![2, 2], rows)
            .unwrap();
        let patterns = frequent_patterns(&table, 1.0).unwrap();
        assert_eq!(patterns.len(), 1);
        assert_eq!(patterns[0].neurons, row);
        assert_eq!(patterns[0].support, 1.0);
    }

    #[test]
    fn fig2_single_maximal_pattern_at_080() {
        let patterns = frequent_patterns(&fig2_table(), 0.8).unwrap();
        assert_eq!(patterns.len(), 1);
        assert_eq!(patterns[0].neurons, neuron_set(&[(0, 1), (0, 3), (1, 0), (1, 3)]));
        assert!((patterns[0].support - 0.8).abs() < 1e-12);
    }

    /// Exhaustive maximal-frequent-itemset enumeration over all 2^u subsets.
    fn brute_force_maximal(table: &TransactionTable, minsup: f64) -> Vec<(BTreeSet<NeuronId>, f64)> {
        let layout = table.layout();
        let u = layout.total();
        assert!(u <= 16);
        let row_bits: Vec<u32> = table
            .rows()
            .iter()
            .map(|row| {
                row.neurons()
                    .iter()
                    .fold(0u32, |acc, &n| acc | 1 << layout.flat(n))
            })
            .collect();
        let n = table.n_rows() as f64;
        let support_of = |set: u32| {
            row_bits.iter().filter(|&&r| set & !r == 0).count() as f64 / n
        };
        let frequent: Vec<u32> = (1u32..1 << u)
            .filter(|&s| support_of(s) + 1e-12 >= minsup)
            .collect();
        let mut maximal = Vec::new();
        'outer: for &s in &frequent {
            for &t in &frequent {
                if t != s && s & !t == 0 {
                    continue 'outer;
                }
            }
            let neurons: BTreeSet<NeuronId> = (0..u)
                .filter(|&i| s & (1 << i) != 0)
                .map(|i| layout.neuron(i))
                .collect();
            maximal.push((neurons, support_of(s)));
        }
        maximal
    }

    #[test]
    fn fig2_low_minsup_matches_brute_force() {
        let table = fig2_table();
        let got = frequent_patterns(&table, 0.2).unwrap();
        let want = brute_force_maximal(&table, 0.2);
        assert_eq!(got.len(), want.len());
        for (neurons, support) in want {
            let hit = got.iter().find(|p| p.neurons == neurons).unwrap();
            assert!((hit.support - support).abs() < 1e-12);
        }
        // The per-row sets are among the maximal patterns.
        assert!(got
            .iter()
            .any(|p| p.neurons == neuron_set(&[(0, 0), (0, 2), (1, 1), (1, 2)])));
    }

    fn random_table(rng: &mut ChaCha8Rng, widths: &[usize], max_rows: usize) -> TransactionTable {
        let layout = HiddenLayout::new(widths.to_vec());
        let n_rows = rng.random_range(2..=max_rows);
        let rows: Vec<Transaction> = (0..n_rows)
            .map(|_| {
                // Every row keeps at least one neuron per layer.
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

    #[test]
    fn matches_brute_force_on_random_tables() {
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let widths = [
                rng.random_range(2..=6usize),
                rng.random_range(2..=6usize),
            ];
            let table = random_table(&mut rng, &widths, 20);
            let minsup = rng.random_range(1..=table.n_rows()) as f64 / table.n_rows() as f64;
            let got = frequent_patterns(&table, minsup).unwrap();
            let want = brute_force_maximal(&table, minsup);
            assert_eq!(got.len(), want.len(), "seed {seed}");
            for (neurons, support) in want {
                let hit = got
                    .iter()
                    .find(|p| p.neurons == neurons)
                    .unwrap_or_else(|| panic!("seed {seed}: missing {neurons:?}"));
                assert!((hit.support - support).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn anti_monotone_single_removals() {
        for seed in 100..120u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let table = random_table(&mut rng, &[3, 3], 12);
            let minsup = 0.3;
            for p in frequent_patterns(&table, minsup).unwrap() {
                assert!(p.support + 1e-12 >= minsup);
                for &n in &p.neurons {
                    if p.neurons.len() > 1 {
                        let mut sub = p.neurons.clone();
                        sub.remove(&n);
                        assert!(table.support(&sub) + 1e-12 >= p.support);
                    }
                }
            }
        }
    }

    #[test]
    fn deterministic_order() {
        let table = fig2_table();
        let a = frequent_patterns(&table, 0.2).unwrap();
        let b = frequent_patterns(&table, 0.2).unwrap();
        assert_eq!(a, b);
        // Sorted by support desc.
        for w in a.windows(2) {
            assert!(w[0].support >= w[1].support);
        }
    }

    #[test]
    fn complete_graph_layer_inclusion() {
        let net = dense_net(&[4, 4]);
        // Missing layer 1 entirely.
        assert!(!is_complete_graph(&neuron_set(&[(0, 0), (0, 1)]), &net));
        // One neuron per layer with a nonzero edge.
        assert!(is_complete_graph(&neuron_set(&[(0, 0), (1, 0)]), &net));
        // Empty pattern is not complete.
        assert!(!is_complete_graph(&BTreeSet::new(), &net));
    }

    #[test]
    fn complete_graph_requires_connectivity() {
        // Only (0,0)-(1,0) is connected; (0,1) has zero weights to layer 1.
        let net = net_with(&[2, 2], |l, j, k| {
            if l == 1 {
                if j == 0 && k == 0 {
                    0.3
                } else {
                    0.0
                }
            } else {
                1.0
            }
        });
        assert!(is_complete_graph(&neuron_set(&[(0, 0), (1, 0)]), &net));
        assert!(!is_complete_graph(
            &neuron_set(&[(0, 0), (0, 1), (1, 0)]),
            &net
        ));
    }

    #[test]
    fn complete_graph_honors_zero_tolerance() {
        let net = net_with(&[2, 2], |l, _, _| if l == 1 { 1e-13 } else { 1.0 });
        assert!(!is_complete_graph(&neuron_set(&[(0, 0), (1, 0)]), &net));
    }

    #[test]
    fn complete_graph_agrees_with_petgraph() {
        use petgraph::unionfind::UnionFind;
        for seed in 0..50u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let widths = [3usize, 3, 2];
            // Random weights, with a good share zeroed out.
            let mut rng2 = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1000));
            let net = net_with(&widths, move |_, _, _| {
                if rng2.random_range(0.0..1.0) < 0.4 {
                    0.0
                } else {
                    rng2.random_range(-1.0..1.0)
                }
            });
            let layout = HiddenLayout::new(widths.to_vec());
            let all: Vec<NeuronId> = layout.iter_neurons().collect();
            let pattern: BTreeSet<NeuronId> = all
                .iter()
                .copied()
                .filter(|_| rng.random_range(0.0..1.0) < 0.5)
                .collect();
            if pattern.is_empty() {
                continue;
            }
            let nodes: Vec<NeuronId> = pattern.iter().copied().collect();
            let mut uf = UnionFind::<usize>::new(nodes.len());
            for (i, &a) in nodes.iter().enumerate() {
                for (j, &b) in nodes.iter().enumerate().skip(i + 1) {
                    let connected = if b.layer == a.layer + 1 {
                        net.weight_between(a, b).abs() > NONZERO_EPS
                    } else if a.layer == b.layer + 1 {
                        net.weight_between(b, a).abs() > NONZERO_EPS
                    } else {
                        false
                    };
                    if connected {
                        uf.union(i, j);
                    }
                }
            }
            let root = uf.find(0);
            let one_component = (0..nodes.len()).all(|i| uf.find(i) == root);
            let layers_covered = (0..widths.len())
                .all(|l| pattern.iter().any(|n| n.layer == l));
            assert_eq!(
                is_complete_graph(&pattern, &net),
                one_component && layers_covered,
                "seed {seed}"
            );
        }
    }

    #[test]
    fn min_count_grid() {
        assert_eq!(min_count_for(1.0, 5).unwrap(), 5);
        assert_eq!(min_count_for(0.8, 5).unwrap(), 4);
        assert_eq!(min_count_for(0.5, 5).unwrap(), 3);
        assert_eq!(min_count_for(0.2, 5).unwrap(), 1);
        assert_eq!(min_count_for(0.01, 5).unwrap(), 1);
        assert!(min_count_for(0.0, 5).is_err());
        assert!(min_count_for(1.5, 5).is_err());
    }

    #[test]
    fn candidate_cap_is_enforced() {
        // Twelve identical rows of twelve items: 2^12 frequent subsets.
        let all: BTreeSet<NeuronId> = HiddenLayout::new(vec![6, 6]).iter_neurons().collect();
        let rows: Vec<Transaction> = (0..3)
            .map(|_| Transaction::new(all.clone()).unwrap())
            .collect();
        let table = TransactionTable::from_rows(ConceptId::ClassCorrect(0), vec![6, 6], rows)
            .unwrap();
        let compiled = CompiledTable::new(&table);
        let err = maximal_frequent(&compiled, 1, 100).unwrap_err();
        assert!(matches!(err, Error::CandidateCapExceeded { cap: 100 }));
    }
}
