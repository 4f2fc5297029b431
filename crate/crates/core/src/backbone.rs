//! Backbone assembly: max-minsup search, F-score thresholding, and the
//! coverage and overlap metrics.
//!
//! The max-minsup search starts at full support and lowers the threshold one
//! row at a time until some complete frequent pattern exists; that first
//! threshold is the concept's `max_minsup` and the best complete pattern at
//! it seeds the backbone. F-score thresholding keeps lowering the threshold,
//! folding newly mined complete patterns into the backbone, and stops the
//! first time the backbone's F-score strictly drops (once the optional
//! minimum coverage is met), returning the previous accumulation.
//!
//! The F-score treats the backbone's neuron set as a predictor of row
//! contents: `tp` counts neuron occurrences shared by backbone and row, `fp`
//! backbone neurons missing from the row, `fn` row neurons missing from the
//! backbone, summed over all rows.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::miner::{
    best_complete_at, is_complete_graph, maximal_frequent, CompiledTable, Pattern, CANDIDATE_CAP,
};
use crate::net::{LayeredNet, NeuronId};
use crate::transact::{ConceptId, TransactionTable};

/// A complete pattern inside a backbone, weighted by its support relative to
/// the backbone's max minsup.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPattern {
    pub neurons: BTreeSet<NeuronId>,
    pub support: f64,
    pub weight: f64,
}

/// The ordered, weighted pattern list summarizing one concept.
///
/// Patterns appear in mining order with nonincreasing supports; weights are
/// `support / max_minsup`, so the first weight is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    concept: ConceptId,
    max_minsup: f64,
    patterns: Vec<WeightedPattern>,
}

impl Backbone {
    pub fn from_parts(
        concept: ConceptId,
        max_minsup: f64,
        patterns: Vec<WeightedPattern>,
    ) -> Self {
        Backbone {
            concept,
            max_minsup,
            patterns,
        }
    }

    pub fn concept(&self) -> ConceptId {
        self.concept
    }

    pub fn max_minsup(&self) -> f64 {
        self.max_minsup
    }

    pub fn patterns(&self) -> &[WeightedPattern] {
        &self.patterns
    }

    /// Union of all pattern neurons.
    pub fn neurons(&self) -> BTreeSet<NeuronId> {
        self.patterns
            .iter()
            .flat_map(|p| p.neurons.iter().copied())
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let doc = BackboneDoc::from(self);
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| Error::Parse {
            what: format!("backbone file {}", path.display()),
            message: e.to_string(),
        })?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let doc: BackboneDoc =
            serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Parse {
                what: format!("backbone file {}", path.display()),
                message: e.to_string(),
            })?;
        doc.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct PatternDoc {
    neurons: Vec<String>,
    support: f64,
    weight: f64,
}

#[derive(Serialize, Deserialize)]
struct BackboneDoc {
    concept: ConceptId,
    max_minsup: f64,
    patterns: Vec<PatternDoc>,
}

impl From<&Backbone> for BackboneDoc {
    fn from(b: &Backbone) -> Self {
        BackboneDoc {
            concept: b.concept,
            max_minsup: b.max_minsup,
            patterns: b
                .patterns
                .iter()
                .map(|p| PatternDoc {
                    neurons: p.neurons.iter().map(|n| n.to_string()).collect(),
                    support: p.support,
                    weight: p.weight,
                })
                .collect(),
        }
    }
}

impl TryFrom<BackboneDoc> for Backbone {
    type Error = Error;

    fn try_from(doc: BackboneDoc) -> Result<Self> {
        let mut patterns = Vec::with_capacity(doc.patterns.len());
        for (i, p) in doc.patterns.into_iter().enumerate() {
            if p.neurons.is_empty() {
                return Err(Error::schema(
                    format!("patterns[{i}].neurons"),
                    "pattern must be nonempty",
                ));
            }
            let neurons: BTreeSet<NeuronId> = p
                .neurons
                .iter()
                .map(|s| s.parse())
                .collect::<Result<_>>()?;
            patterns.push(WeightedPattern {
                neurons,
                support: p.support,
                weight: p.weight,
            });
        }
        Ok(Backbone {
            concept: doc.concept,
            max_minsup: doc.max_minsup,
            patterns,
        })
    }
}

/// Backbones for a set of concepts over one network.
#[derive(Debug, Clone, Default)]
pub struct CollectiveBackbone {
    members: BTreeMap<ConceptId, Backbone>,
}

impl CollectiveBackbone {
    pub fn new(members: BTreeMap<ConceptId, Backbone>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidParam {
                what: "collective backbone".into(),
                message: "must contain at least one concept".into(),
            });
        }
        Ok(CollectiveBackbone { members })
    }

    pub fn members(&self) -> &BTreeMap<ConceptId, Backbone> {
        &self.members
    }

    pub fn get(&self, concept: &ConceptId) -> Option<&Backbone> {
        self.members.get(concept)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Class-correct backbones as `(class, backbone)` pairs, ascending class.
    pub fn class_correct(&self) -> impl Iterator<Item = (usize, &Backbone)> {
        self.members.iter().filter_map(|(c, b)| match c {
            ConceptId::ClassCorrect(class) => Some((*class, b)),
            _ => None,
        })
    }

    pub fn class_incorrect(&self, class: usize) -> Option<&Backbone> {
        self.members.get(&ConceptId::ClassIncorrect(class))
    }

    /// Confusion backbones predicting `predicted`, keyed by the true class.
    pub fn confusion_into(&self, predicted: usize) -> impl Iterator<Item = (usize, &Backbone)> {
        self.members.iter().filter_map(move |(c, b)| match c {
            ConceptId::Confusion {
                actual,
                predicted: p,
            } if *p == predicted => Some((*actual, b)),
            _ => None,
        })
    }

    /// Writes one backbone file per concept into `dir`.
    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (concept, backbone) in &self.members {
            backbone.save(dir.join(format!("{concept}.json")))?;
        }
        Ok(())
    }

    /// Loads every `*.json` backbone file in `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut members = BTreeMap::new();
        let mut entries: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .collect::<std::io::Result<_>>()
            .map_err(|e| Error::io(dir, e))?;
        entries.sort_by_key(|e| e.path());
        for entry in entries {
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) == Some("json") {
                let backbone = Backbone::load(&path)?;
                members.insert(backbone.concept(), backbone);
            }
        }
        CollectiveBackbone::new(members)
    }
}

/// Absolute true-positive, false-positive, and false-negative counts of a
/// neuron set predicting row contents, with the resulting F-score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FscoreState {
    pub true_pos: f64,
    pub false_pos: f64,
    pub false_neg: f64,
    pub f_score: f64,
}

impl FscoreState {
    pub(crate) fn from_counts(tp: u64, fp: u64, fneg: u64) -> Self {
        let denom = 2 * tp + fp + fneg;
        FscoreState {
            true_pos: tp as f64,
            false_pos: fp as f64,
            false_neg: fneg as f64,
            f_score: if denom == 0 {
                0.0
            } else {
                2.0 * tp as f64 / denom as f64
            },
        }
    }
}

/// Definitional F-score of a neuron set against a table, recomputed from the
/// rows.
pub fn fscore(neurons: &BTreeSet<NeuronId>, table: &TransactionTable) -> FscoreState {
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fneg = 0u64;
    for row in table.rows() {
        let inter = neurons.iter().filter(|&&n| row.contains(n)).count() as u64;
        tp += inter;
        fp += neurons.len() as u64 - inter;
        fneg += row.len() as u64 - inter;
    }
    FscoreState::from_counts(tp, fp, fneg)
}

/// Result of the max-minsup search.
#[derive(Debug, Clone)]
pub struct MaxMinsup {
    /// The largest support at which a complete frequent pattern exists.
    pub minsup: f64,
    /// The same threshold as a row count.
    pub count: u64,
    /// The complete pattern of greatest support at `minsup`; ties broken
    /// toward the larger, then lexicographically smaller pattern.
    pub seed: Pattern,
}

/// Finds the largest support threshold admitting a complete frequent pattern.
///
/// The threshold starts at 100% of the rows and is lowered by a single
/// instance per iteration. Counts that provably cannot host a complete
/// pattern (some layer has no neuron that frequent) are skipped.
pub fn find_max_minsup(table: &TransactionTable, net: &LayeredNet) -> Result<MaxMinsup> {
    let ct = CompiledTable::new(table);
    let n = ct.n_rows as u64;

    // A complete pattern needs one item per layer, so its support is capped
    // by the weakest layer's strongest item.
    let mut layer_max = vec![0u64; ct.layout.num_layers()];
    for (item, &count) in ct.item_counts.iter().enumerate() {
        let layer = ct.layout.neuron(item).layer;
        layer_max[layer] = layer_max[layer].max(count);
    }
    let bound = layer_max.iter().copied().min().unwrap_or(0);
    if bound == 0 {
        return Err(Error::NoCompletePattern);
    }

    let mut count = bound.min(n);
    while count >= 1 {
        if let Some((items, support_count)) = best_complete_at(&ct, net, count, CANDIDATE_CAP)? {
            return Ok(MaxMinsup {
                minsup: count as f64 / n as f64,
                count,
                seed: Pattern {
                    neurons: ct.neurons_of(&items),
                    support: support_count as f64 / n as f64,
                },
            });
        }
        count -= 1;
    }
    Err(Error::NoCompletePattern)
}

/// One accepted or rejected iteration of the thresholding loop.
#[derive(Debug, Clone)]
pub struct ThresholdStep {
    /// Support threshold of this iteration, as a row count.
    pub count: u64,
    pub minsup: f64,
    /// Patterns folded in by this iteration.
    pub added: usize,
    /// Cumulative pattern count including this iteration.
    pub patterns_total: usize,
    pub state: FscoreState,
    pub coverage: f64,
    /// False only for the final candidate that triggered termination.
    pub accepted: bool,
}

/// Builds the concept's backbone by F-score thresholding.
pub fn fscore_threshold(table: &TransactionTable, net: &LayeredNet, lambda: f64) -> Result<Backbone> {
    fscore_threshold_traced(table, net, lambda).map(|(b, _)| b)
}

/// Like [`fscore_threshold`], also returning the per-iteration trace.
pub fn fscore_threshold_traced(
    table: &TransactionTable,
    net: &LayeredNet,
    lambda: f64,
) -> Result<(Backbone, Vec<ThresholdStep>)> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidParam {
            what: "lambda".into(),
            message: format!("must lie in [0, 1], got {lambda}"),
        });
    }
    let start = find_max_minsup(table, net)?;
    let ct = CompiledTable::new(table);
    let n = ct.n_rows as u64;
    let c_star = start.count;
    let seed_items = ct.items_of(&start.seed.neurons);

    let mut patterns: Vec<WeightedPattern> = Vec::new();
    let mut accepted_items: Vec<Vec<usize>> = Vec::new();
    let mut union_mask = Bits::new(ct.layout.total());
    let mut union_size = 0u64;
    let mut covered = Bits::new(ct.n_rows);
    let mut tp = 0u64;
    let mut max_f = -1.0_f64;
    let mut trace = Vec::new();

    let mut count = c_star;
    let mut first = true;
    while count >= 1 {
        let mined = maximal_frequent(&ct, count, CANDIDATE_CAP)?;
        let mut batch: Vec<(Vec<usize>, u64)> = mined
            .into_iter()
            .filter(|(items, _)| is_complete_graph(&ct.neurons_of(items), net))
            .collect();
        if first {
            // Mining returns maximal sets only; the seed can hide under an
            // incomplete maximal superset, so fold it in explicitly.
            if !batch.iter().any(|(items, _)| *items == seed_items) {
                let seed_count = (start.seed.support * n as f64).round() as u64;
                batch.push((seed_items.clone(), seed_count));
            }
            first = false;
        }
        batch.sort_by(|(ia, ca), (ib, cb)| {
            cb.cmp(ca).then(ib.len().cmp(&ia.len())).then(ia.cmp(ib))
        });

        // Drop patterns subsumed by anything already accepted or by an
        // earlier batch entry; only novel neuron sets advance the backbone.
        let mut novel: Vec<(Vec<usize>, u64)> = Vec::new();
        for (items, cnt) in batch {
            let subsumed = accepted_items
                .iter()
                .chain(novel.iter().map(|(i, _)| i))
                .any(|q| items.iter().all(|i| q.contains(i)));
            if !subsumed {
                novel.push((items, cnt));
            }
        }

        if !novel.is_empty() {
            let mut cand_tp = tp;
            let mut cand_union = union_mask.clone();
            let mut cand_union_size = union_size;
            let mut cand_covered = covered.clone();
            for (items, _) in &novel {
                for &item in items {
                    if !cand_union.get(item) {
                        cand_union.set(item);
                        cand_union_size += 1;
                        cand_tp += ct.item_counts[item];
                    }
                }
                cand_covered.or_assign(&rows_containing(&ct, items));
            }
            let state = FscoreState::from_counts(
                cand_tp,
                n * cand_union_size - cand_tp,
                ct.total_ones - cand_tp,
            );
            let prev_coverage = covered.count_ones() as f64 / n as f64;
            if state.f_score < max_f && prev_coverage >= lambda {
                trace.push(ThresholdStep {
                    count,
                    minsup: count as f64 / n as f64,
                    added: novel.len(),
                    patterns_total: patterns.len() + novel.len(),
                    state,
                    coverage: cand_covered.count_ones() as f64 / n as f64,
                    accepted: false,
                });
                break;
            }
            let added = novel.len();
            for (items, cnt) in novel {
                patterns.push(WeightedPattern {
                    neurons: ct.neurons_of(&items),
                    support: cnt as f64 / n as f64,
                    weight: cnt as f64 / c_star as f64,
                });
                accepted_items.push(items);
            }
            tp = cand_tp;
            union_mask = cand_union;
            union_size = cand_union_size;
            covered = cand_covered;
            max_f = state.f_score;
            trace.push(ThresholdStep {
                count,
                minsup: count as f64 / n as f64,
                added,
                patterns_total: patterns.len(),
                state,
                coverage: covered.count_ones() as f64 / n as f64,
                accepted: true,
            });
        }
        count -= 1;
    }

    let final_coverage = covered.count_ones() as f64 / n as f64;
    if final_coverage < lambda {
        log::warn!(
            "{}: support grid exhausted before reaching coverage {lambda:.3}; returning best-so-far with coverage {final_coverage:.3}",
            table.concept()
        );
    }
    Ok((
        Backbone {
            concept: table.concept(),
            max_minsup: c_star as f64 / n as f64,
            patterns,
        },
        trace,
    ))
}

/// Rows that contain every item of `items`.
fn rows_containing(ct: &CompiledTable, items: &[usize]) -> Bits {
    debug_assert!(!items.is_empty());
    let mut mask = ct.item_masks[items[0]].clone();
    for &item in &items[1..] {
        mask = mask.and(&ct.item_masks[item]);
    }
    mask
}

/// Fraction of rows containing at least one whole backbone pattern.
pub fn coverage(backbone: &Backbone, table: &TransactionTable) -> f64 {
    if backbone.patterns.is_empty() {
        return 0.0;
    }
    let covered = table
        .rows()
        .iter()
        .filter(|row| {
            backbone
                .patterns
                .iter()
                .any(|p| row.contains_all(&p.neurons))
        })
        .count();
    covered as f64 / table.n_rows() as f64
}

/// Shared-neuron fraction: neurons present in two or more backbones' unions,
/// divided by the sum of the union sizes.
pub fn overlap(backbones: &[&Backbone]) -> f64 {
    assert!(backbones.len() >= 2, "overlap needs at least two backbones");
    let unions: Vec<BTreeSet<NeuronId>> = backbones.iter().map(|b| b.neurons()).collect();
    let total: usize = unions.iter().map(BTreeSet::len).sum();
    if total == 0 {
        return 0.0;
    }
    let mut counts: BTreeMap<NeuronId, usize> = BTreeMap::new();
    for u in &unions {
        for &n in u {
            *counts.entry(n).or_insert(0) += 1;
        }
    }
    let shared = counts.values().filter(|&&c| c >= 2).count();
    shared as f64 / total as f64
}

/// Outcome of building backbones for several concepts.
#[derive(Debug)]
pub struct CollectiveBuild {
    pub collective: CollectiveBackbone,
    /// Pairwise overlap for every concept pair, in key order.
    pub overlap_matrix: Vec<(ConceptId, ConceptId, f64)>,
    pub traces: BTreeMap<ConceptId, Vec<ThresholdStep>>,
    /// Concepts whose build failed; the others proceed.
    pub failures: Vec<(ConceptId, Error)>,
}

/// Builds one backbone per concept independently and reports pairwise
/// overlap. Per-concept failures are collected, not fatal, unless every
/// concept fails.
pub fn build_collective(
    tables: &BTreeMap<ConceptId, TransactionTable>,
    net: &LayeredNet,
    lambda: f64,
) -> Result<CollectiveBuild> {
    let mut members = BTreeMap::new();
    let mut traces = BTreeMap::new();
    let mut failures = Vec::new();
    for (&concept, table) in tables {
        match fscore_threshold_traced(table, net, lambda) {
            Ok((backbone, trace)) => {
                members.insert(concept, backbone);
                traces.insert(concept, trace);
            }
            Err(e) => failures.push((concept, e)),
        }
    }
    if members.is_empty() {
        return Err(failures
            .pop()
            .map(|(_, e)| e)
            .unwrap_or(Error::EmptyDataset));
    }
    let concepts: Vec<ConceptId> = members.keys().copied().collect();
    let mut overlap_matrix = Vec::new();
    for (i, &a) in concepts.iter().enumerate() {
        for &b in &concepts[i + 1..] {
            let value = overlap(&[&members[&a], &members[&b]]);
            overlap_matrix.push((a, b, value));
        }
    }
    let collective = CollectiveBackbone::new(members)?;
    Ok(CollectiveBuild {
        collective,
        overlap_matrix,
        traces,
        failures,
    })
}
