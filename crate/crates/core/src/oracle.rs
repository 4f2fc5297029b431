//! Exact desk-scale solvers for the strict and relaxed backbone problems,
//! plus Pareto-front enumeration.
//!
//! The strict problem asks for minimum-total-size neuron sets, one per
//! concept, each contained in every row of its concept, pairwise disjoint,
//! layer-inclusive, and connected. The relaxed problem allows a budgeted
//! number of forgotten rows per concept and a budgeted neuron overlap between
//! concepts. Both are solved by exhaustive candidate enumeration with
//! branch-and-bound over concepts, which is only viable at small universes;
//! the limits refuse anything larger.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::miner::{is_complete_graph, NONZERO_EPS};
use crate::net::{HiddenLayout, LayeredNet, NeuronId};
use crate::transact::{ConceptId, TransactionTable};

/// Caps keeping the exhaustive searches at desk scale.
#[derive(Debug, Clone, Copy)]
pub struct SolveLimits {
    /// Largest neuron universe the strict/relaxed solvers accept.
    pub universe_cap: usize,
    /// Largest universe the front enumeration accepts.
    pub pareto_universe_cap: usize,
}

impl Default for SolveLimits {
    fn default() -> Self {
        SolveLimits {
            universe_cap: 20,
            pareto_universe_cap: 16,
        }
    }
}

/// Feasible answer or a reason there is none.
#[derive(Debug, Clone)]
pub enum SolveOutcome<T> {
    Feasible(T),
    Infeasible { reason: String },
}

impl<T> SolveOutcome<T> {
    pub fn is_feasible(&self) -> bool {
        matches!(self, SolveOutcome::Feasible(_))
    }

    pub fn feasible(&self) -> Option<&T> {
        match self {
            SolveOutcome::Feasible(t) => Some(t),
            SolveOutcome::Infeasible { .. } => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StrictSolution {
    pub assignment: BTreeMap<ConceptId, BTreeSet<NeuronId>>,
    pub total_size: usize,
}

/// Slack budgets of the relaxed problem. `delta` caps forgotten rows per
/// concept and `p1` their total; `gamma` caps shared neurons per concept pair
/// and `p2` the total over pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RelaxationBudget {
    pub delta: usize,
    pub gamma: usize,
    pub p1: usize,
    pub p2: usize,
}

impl RelaxationBudget {
    /// No slack at all; the relaxed problem degenerates to the strict one.
    pub fn zero() -> Self {
        RelaxationBudget {
            delta: 0,
            gamma: 0,
            p1: 0,
            p2: 0,
        }
    }

    /// Only the totals bind; per-concept slacks equal them.
    pub fn totals(p1: usize, p2: usize) -> Self {
        RelaxationBudget {
            delta: p1,
            gamma: p2,
            p1,
            p2,
        }
    }
}

/// Objective tuple: solution size, uncovered instances, shared neurons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ParetoPoint {
    pub size: usize,
    pub coverage_slack: usize,
    pub overlap: usize,
}

impl ParetoPoint {
    /// True when `self` is at least as good everywhere and strictly better
    /// somewhere.
    pub fn dominates(&self, other: &ParetoPoint) -> bool {
        self.size <= other.size
            && self.coverage_slack <= other.coverage_slack
            && self.overlap <= other.overlap
            && (self.size < other.size
                || self.coverage_slack < other.coverage_slack
                || self.overlap < other.overlap)
    }
}

#[derive(Debug, Clone)]
pub struct RelaxedSolution {
    pub assignment: BTreeMap<ConceptId, BTreeSet<NeuronId>>,
    pub total_size: usize,
    pub forgotten: BTreeMap<ConceptId, usize>,
    pub realized: ParetoPoint,
}

/// One non-dominated point with a witness neuron set.
#[derive(Debug, Clone)]
pub struct FrontPoint {
    pub point: ParetoPoint,
    pub witness: BTreeSet<NeuronId>,
    /// The empty solution, always on the front boundary.
    pub trivial: bool,
}

struct Instance {
    layout: HiddenLayout,
    universe: usize,
    /// Row bitmasks per concept, in concept order.
    concepts: Vec<(ConceptId, Vec<u64>)>,
}

fn compile(
    tables: &BTreeMap<ConceptId, TransactionTable>,
    net: &LayeredNet,
    cap: usize,
) -> Result<Instance> {
    let layout = net.layout();
    let universe = layout.total();
    if universe > cap {
        return Err(Error::UniverseTooLarge { universe, cap });
    }
    let mut concepts = Vec::new();
    for (&concept, table) in tables {
        if table.widths() != net.hidden_widths() {
            return Err(Error::DimensionMismatch {
                what: format!("table universe for {concept}"),
                expected: universe,
                found: table.universe(),
            });
        }
        let rows: Vec<u64> = table
            .rows()
            .iter()
            .map(|row| {
                row.neurons()
                    .iter()
                    .fold(0u64, |acc, &n| acc | 1 << layout.flat(n))
            })
            .collect();
        concepts.push((concept, rows));
    }
    Ok(Instance {
        layout,
        universe,
        concepts,
    })
}

fn mask_neurons(mask: u64, layout: &HiddenLayout) -> BTreeSet<NeuronId> {
    (0..layout.total())
        .filter(|&i| mask & (1 << i) != 0)
        .map(|i| layout.neuron(i))
        .collect()
}

fn mask_is_complete(mask: u64, layout: &HiddenLayout, net: &LayeredNet) -> bool {
    mask != 0 && is_complete_graph(&mask_neurons(mask, layout), net)
}

fn uncovered_rows(mask: u64, rows: &[u64]) -> usize {
    rows.iter().filter(|&&r| mask & !r != 0).count()
}

/// Candidate sets per concept: `(mask, size)`, sorted by size then mask.
type Candidates = Vec<(u64, u32)>;

/// Branch-and-bound over per-concept candidate lists minimizing total size.
/// `pair_ok` accepts or rejects a fully drawn combination.
fn min_total_assignment(
    per_concept: &[Candidates],
    combination_ok: impl Fn(&[u64]) -> bool,
) -> Option<Vec<u64>> {
    let mins: Vec<u32> = per_concept
        .iter()
        .map(|c| c.first().map(|&(_, s)| s).unwrap_or(0))
        .collect();
    let suffix_min: Vec<u32> = (0..per_concept.len())
        .map(|i| mins[i..].iter().sum())
        .collect();

    let mut best: Option<(u32, Vec<u64>)> = None;
    let mut chosen: Vec<u64> = Vec::with_capacity(per_concept.len());

    fn descend(
        per_concept: &[Candidates],
        suffix_min: &[u32],
        depth: usize,
        size_so_far: u32,
        chosen: &mut Vec<u64>,
        best: &mut Option<(u32, Vec<u64>)>,
        combination_ok: &impl Fn(&[u64]) -> bool,
    ) {
        if let Some((b, _)) = best {
            let bound = size_so_far + suffix_min.get(depth).copied().unwrap_or(0);
            if bound >= *b {
                return;
            }
        }
        if depth == per_concept.len() {
            if combination_ok(chosen) {
                let better = best.as_ref().map_or(true, |(b, _)| size_so_far < *b);
                if better {
                    *best = Some((size_so_far, chosen.clone()));
                }
            }
            return;
        }
        for &(mask, size) in &per_concept[depth] {
            chosen.push(mask);
            descend(
                per_concept,
                suffix_min,
                depth + 1,
                size_so_far + size,
                chosen,
                best,
                combination_ok,
            );
            chosen.pop();
        }
    }

    descend(
        per_concept,
        &suffix_min,
        0,
        0,
        &mut chosen,
        &mut best,
        &combination_ok,
    );
    best.map(|(_, masks)| masks)
}

/// Minimum-total-size strict solution: per concept a complete subset of the
/// row intersection, pairwise disjoint across concepts.
pub fn solve_strict(
    tables: &BTreeMap<ConceptId, TransactionTable>,
    net: &LayeredNet,
    limits: &SolveLimits,
) -> Result<SolveOutcome<StrictSolution>> {
    let inst = compile(tables, net, limits.universe_cap)?;
    let full = (1u64 << inst.universe) - 1;
    let mut per_concept: Vec<Candidates> = Vec::new();
    for (concept, rows) in &inst.concepts {
        let intersection = rows.iter().fold(full, |acc, &r| acc & r);
        let mut candidates: Candidates = Vec::new();
        // Enumerate submasks of the intersection.
        let mut sub = intersection;
        loop {
            if sub != 0 && mask_is_complete(sub, &inst.layout, net) {
                candidates.push((sub, sub.count_ones()));
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & intersection;
        }
        if candidates.is_empty() {
            let reason = if intersection == 0 {
                format!("{concept}: row intersection is empty")
            } else {
                format!("{concept}: no complete subset of the row intersection")
            };
            return Ok(SolveOutcome::Infeasible { reason });
        }
        candidates.sort_by_key(|&(mask, size)| (size, mask));
        per_concept.push(candidates);
    }

    let disjoint = |masks: &[u64]| {
        let mut seen = 0u64;
        for &m in masks {
            if seen & m != 0 {
                return false;
            }
            seen |= m;
        }
        true
    };
    match min_total_assignment(&per_concept, disjoint) {
        Some(masks) => {
            let assignment: BTreeMap<ConceptId, BTreeSet<NeuronId>> = inst
                .concepts
                .iter()
                .zip(&masks)
                .map(|((c, _), &m)| (*c, mask_neurons(m, &inst.layout)))
                .collect();
            let total_size = masks.iter().map(|m| m.count_ones() as usize).sum();
            Ok(SolveOutcome::Feasible(StrictSolution {
                assignment,
                total_size,
            }))
        }
        None => Ok(SolveOutcome::Infeasible {
            reason: "no pairwise-disjoint combination of per-concept candidates".into(),
        }),
    }
}

/// Minimum-total-size relaxed solution under the given budgets.
pub fn solve_relaxed(
    tables: &BTreeMap<ConceptId, TransactionTable>,
    net: &LayeredNet,
    budget: &RelaxationBudget,
    limits: &SolveLimits,
) -> Result<SolveOutcome<RelaxedSolution>> {
    let inst = compile(tables, net, limits.universe_cap)?;
    let mut per_concept: Vec<Candidates> = Vec::new();
    for (concept, rows) in &inst.concepts {
        let mut candidates: Candidates = Vec::new();
        for mask in 1u64..(1 << inst.universe) {
            if uncovered_rows(mask, rows) <= budget.delta
                && mask_is_complete(mask, &inst.layout, net)
            {
                candidates.push((mask, mask.count_ones()));
            }
        }
        if candidates.is_empty() {
            return Ok(SolveOutcome::Infeasible {
                reason: format!(
                    "{concept}: no complete set leaves at most {} rows uncovered",
                    budget.delta
                ),
            });
        }
        candidates.sort_by_key(|&(mask, size)| (size, mask));
        per_concept.push(candidates);
    }

    let within_budget = |masks: &[u64]| {
        let mut total_forgotten = 0usize;
        for (m, (_, rows)) in masks.iter().zip(&inst.concepts) {
            total_forgotten += uncovered_rows(*m, rows);
        }
        if total_forgotten > budget.p1 {
            return false;
        }
        let mut total_overlap = 0usize;
        for i in 0..masks.len() {
            for j in i + 1..masks.len() {
                let shared = (masks[i] & masks[j]).count_ones() as usize;
                if shared > budget.gamma {
                    return false;
                }
                total_overlap += shared;
            }
        }
        total_overlap <= budget.p2
    };

    match min_total_assignment(&per_concept, within_budget) {
        Some(masks) => {
            let mut forgotten = BTreeMap::new();
            let mut coverage_slack = 0;
            for (m, (concept, rows)) in masks.iter().zip(&inst.concepts) {
                let f = uncovered_rows(*m, rows);
                forgotten.insert(*concept, f);
                coverage_slack += f;
            }
            let mut overlap = 0usize;
            for i in 0..masks.len() {
                for j in i + 1..masks.len() {
                    overlap += (masks[i] & masks[j]).count_ones() as usize;
                }
            }
            let assignment: BTreeMap<ConceptId, BTreeSet<NeuronId>> = inst
                .concepts
                .iter()
                .zip(&masks)
                .map(|((c, _), &m)| (*c, mask_neurons(m, &inst.layout)))
                .collect();
            let total_size = masks.iter().map(|m| m.count_ones() as usize).sum();
            Ok(SolveOutcome::Feasible(RelaxedSolution {
                assignment,
                total_size,
                forgotten,
                realized: ParetoPoint {
                    size: total_size,
                    coverage_slack,
                    overlap,
                },
            }))
        }
        None => Ok(SolveOutcome::Infeasible {
            reason: "no combination satisfies the overlap and total budgets".into(),
        }),
    }
}

/// Union-find component root per node, with edges between adjacent-layer
/// neurons joined by nonzero weights.
fn component_roots(nodes: &[NeuronId], net: &LayeredNet) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..nodes.len()).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..nodes.len() {
        for j in i + 1..nodes.len() {
            let (a, b) = (nodes[i], nodes[j]);
            let connected = if b.layer == a.layer + 1 {
                net.weight_between(a, b).abs() > NONZERO_EPS
            } else if a.layer == b.layer + 1 {
                net.weight_between(b, a).abs() > NONZERO_EPS
            } else {
                false
            };
            if connected {
                let (ra, rb) = (find(&mut parent, i), find(&mut parent, j));
                parent[ra] = rb;
            }
        }
    }
    (0..nodes.len()).map(|i| find(&mut parent, i)).collect()
}

/// True iff some connected component of the induced graph on `neurons` spans
/// every hidden layer.
pub fn contains_complete_subgraph(neurons: &BTreeSet<NeuronId>, net: &LayeredNet) -> bool {
    if neurons.is_empty() {
        return false;
    }
    let nodes: Vec<NeuronId> = neurons.iter().copied().collect();
    let roots = component_roots(&nodes, net);
    let num_layers = net.hidden_widths().len();
    let mut layer_cover: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for (i, n) in nodes.iter().enumerate() {
        layer_cover.entry(roots[i]).or_default().insert(n.layer);
    }
    layer_cover.values().any(|layers| layers.len() == num_layers)
}

/// Rows of `table` left uncovered by `neurons` under the solver's coverage
/// semantics: a row is covered when some complete subgraph lies inside the
/// row's activation restricted to `neurons`.
pub fn coverage_slack_of(
    neurons: &BTreeSet<NeuronId>,
    table: &TransactionTable,
    net: &LayeredNet,
) -> usize {
    table
        .rows()
        .iter()
        .filter(|row| {
            let inside: BTreeSet<NeuronId> = row
                .neurons()
                .iter()
                .copied()
                .filter(|n| neurons.contains(n))
                .collect();
            !contains_complete_subgraph(&inside, net)
        })
        .count()
}

/// Scores a neuron set on the front's objective tuple (single concept, so
/// overlap is zero).
pub fn backbone_point(
    neurons: &BTreeSet<NeuronId>,
    table: &TransactionTable,
    net: &LayeredNet,
) -> ParetoPoint {
    ParetoPoint {
        size: neurons.len(),
        coverage_slack: coverage_slack_of(neurons, table, net),
        overlap: 0,
    }
}

/// Enumerates every neuron subset of the universe and returns the
/// non-dominated `(size, coverage_slack, overlap)` points with witnesses.
pub fn pareto_front(
    table: &TransactionTable,
    net: &LayeredNet,
    limits: &SolveLimits,
) -> Result<Vec<FrontPoint>> {
    let mut tables = BTreeMap::new();
    tables.insert(table.concept(), table.clone());
    let inst = compile(&tables, net, limits.pareto_universe_cap)?;
    let rows = &inst.concepts[0].1;
    let n_rows = rows.len();

    // Best slack and first witness per solution size.
    let mut best: Vec<(usize, u64)> = vec![(usize::MAX, 0); inst.universe + 1];
    for mask in 0u64..(1 << inst.universe) {
        let size = mask.count_ones() as usize;
        let slack = if mask == 0 {
            n_rows
        } else {
            rows.iter()
                .filter(|&&r| {
                    let inside = mask & r;
                    !mask_contains_complete_subgraph(inside, &inst.layout, net)
                })
                .count()
        };
        if slack < best[size].0 {
            best[size] = (slack, mask);
        }
    }

    let mut front = Vec::new();
    let mut best_slack = usize::MAX;
    for (size, &(slack, witness)) in best.iter().enumerate() {
        if slack == usize::MAX || slack >= best_slack {
            continue;
        }
        best_slack = slack;
        front.push(FrontPoint {
            point: ParetoPoint {
                size,
                coverage_slack: slack,
                overlap: 0,
            },
            witness: mask_neurons(witness, &inst.layout),
            trivial: size == 0,
        });
    }
    Ok(front)
}

fn mask_contains_complete_subgraph(mask: u64, layout: &HiddenLayout, net: &LayeredNet) -> bool {
    mask != 0 && contains_complete_subgraph(&mask_neurons(mask, layout), net)
}

/// Independent re-check of a strict solution against its constraints.
pub fn check_strict_solution(
    tables: &BTreeMap<ConceptId, TransactionTable>,
    net: &LayeredNet,
    assignment: &BTreeMap<ConceptId, BTreeSet<NeuronId>>,
) -> std::result::Result<(), String> {
    for (concept, table) in tables {
        let set = assignment
            .get(concept)
            .ok_or_else(|| format!("missing assignment for {concept}"))?;
        for (i, row) in table.rows().iter().enumerate() {
            if !row.contains_all(set) {
                return Err(format!("{concept}: row {i} not covered"));
            }
        }
        check_complete(set, net).map_err(|e| format!("{concept}: {e}"))?;
    }
    check_disjoint(assignment)
}

/// Independent re-check of a relaxed solution; returns the realized point.
pub fn check_relaxed_solution(
    tables: &BTreeMap<ConceptId, TransactionTable>,
    net: &LayeredNet,
    budget: &RelaxationBudget,
    assignment: &BTreeMap<ConceptId, BTreeSet<NeuronId>>,
) -> std::result::Result<ParetoPoint, String> {
    let mut coverage_slack = 0;
    let mut size = 0;
    for (concept, table) in tables {
        let set = assignment
            .get(concept)
            .ok_or_else(|| format!("missing assignment for {concept}"))?;
        let forgotten = table
            .rows()
            .iter()
            .filter(|row| !row.contains_all(set))
            .count();
        if forgotten > budget.delta {
            return Err(format!(
                "{concept}: {forgotten} forgotten rows exceed delta {}",
                budget.delta
            ));
        }
        coverage_slack += forgotten;
        size += set.len();
        check_complete(set, net).map_err(|e| format!("{concept}: {e}"))?;
    }
    if coverage_slack > budget.p1 {
        return Err(format!(
            "total forgotten rows {coverage_slack} exceed p1 {}",
            budget.p1
        ));
    }
    let sets: Vec<&BTreeSet<NeuronId>> = assignment.values().collect();
    let mut overlap = 0;
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            let shared = sets[i].intersection(sets[j]).count();
            if shared > budget.gamma {
                return Err(format!("pair overlap {shared} exceeds gamma {}", budget.gamma));
            }
            overlap += shared;
        }
    }
    if overlap > budget.p2 {
        return Err(format!("total overlap {overlap} exceeds p2 {}", budget.p2));
    }
    Ok(ParetoPoint {
        size,
        coverage_slack,
        overlap,
    })
}

fn check_complete(set: &BTreeSet<NeuronId>, net: &LayeredNet) -> std::result::Result<(), String> {
    let num_layers = net.hidden_widths().len();
    for l in 0..num_layers {
        if !set.iter().any(|n| n.layer == l) {
            return Err(format!("layer {l} not included"));
        }
    }
    let nodes: Vec<NeuronId> = set.iter().copied().collect();
    let roots = component_roots(&nodes, net);
    if roots.iter().any(|&r| r != roots[0]) {
        return Err("set is not connected".into());
    }
    Ok(())
}

fn check_disjoint(
    assignment: &BTreeMap<ConceptId, BTreeSet<NeuronId>>,
) -> std::result::Result<(), String> {
    let entries: Vec<(&ConceptId, &BTreeSet<NeuronId>)> = assignment.iter().collect();
    for i in 0..entries.len() {
        for j in i + 1..entries.len() {
            if entries[i].1.intersection(entries[j].1).next().is_some() {
                return Err(format!(
                    "{} and {} share neurons",
                    entries[i].0, entries[j].0
                ));
            }
        }
    }
    Ok(())
}
