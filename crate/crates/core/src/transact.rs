//! Concept-labeled transaction tables.
//!
//! Every instance is reduced to the set of its most influential neurons (a
//! [`Transaction`]) and routed to one or more concepts: `correct_c` when the
//! network's argmax prediction matches the label `c`, otherwise `incorrect_c`
//! plus the confusion concept `confusion_c_to_p`. A [`TransactionTable`]
//! collects the rows of one concept over a binary neuron universe.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::net::{argmax, influence, top_r_threshold, HiddenLayout, LayeredNet, NeuronId};

/// A concept: a class predicted correctly, a class predicted incorrectly, or
/// one direction of a confusion pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ConceptId {
    ClassCorrect(usize),
    ClassIncorrect(usize),
    Confusion { actual: usize, predicted: usize },
}

impl ConceptId {
    pub fn confusion(actual: usize, predicted: usize) -> Result<Self> {
        if actual == predicted {
            return Err(Error::InvalidParam {
                what: "confusion concept".into(),
                message: format!("classes must differ, got {actual} -> {predicted}"),
            });
        }
        Ok(ConceptId::Confusion { actual, predicted })
    }

    /// The class this concept describes, if single-class.
    pub fn class(&self) -> Option<usize> {
        match self {
            ConceptId::ClassCorrect(c) | ConceptId::ClassIncorrect(c) => Some(*c),
            ConceptId::Confusion { .. } => None,
        }
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConceptId::ClassCorrect(c) => write!(f, "correct_{c}"),
            ConceptId::ClassIncorrect(c) => write!(f, "incorrect_{c}"),
            ConceptId::Confusion { actual, predicted } => {
                write!(f, "confusion_{actual}_to_{predicted}")
            }
        }
    }
}

impl FromStr for ConceptId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse {
            what: "concept id".into(),
            message: format!("unrecognized concept `{s}`"),
        };
        let parse_idx = |p: &str| p.parse::<usize>().map_err(|_| bad());
        if let Some(rest) = s.strip_prefix("correct_") {
            return Ok(ConceptId::ClassCorrect(parse_idx(rest)?));
        }
        if let Some(rest) = s.strip_prefix("incorrect_") {
            return Ok(ConceptId::ClassIncorrect(parse_idx(rest)?));
        }
        if let Some(rest) = s.strip_prefix("confusion_") {
            let (a, p) = rest.split_once("_to_").ok_or_else(bad)?;
            return ConceptId::confusion(parse_idx(a)?, parse_idx(p)?);
        }
        Err(bad())
    }
}

impl Serialize for ConceptId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ConceptId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The activated-neuron set of one instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    neurons: BTreeSet<NeuronId>,
}

impl Transaction {
    pub fn new(neurons: BTreeSet<NeuronId>) -> Result<Self> {
        if neurons.is_empty() {
            return Err(Error::InvalidParam {
                what: "transaction".into(),
                message: "must contain at least one neuron".into(),
            });
        }
        Ok(Transaction { neurons })
    }

    pub fn neurons(&self) -> &BTreeSet<NeuronId> {
        &self.neurons
    }

    pub fn len(&self) -> usize {
        self.neurons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neurons.is_empty()
    }

    pub fn contains(&self, n: NeuronId) -> bool {
        self.neurons.contains(&n)
    }

    pub fn contains_all(&self, pattern: &BTreeSet<NeuronId>) -> bool {
        pattern.iter().all(|n| self.neurons.contains(n))
    }
}

/// Binary table of one concept: rows are transactions over the hidden-neuron
/// universe of a fixed layer layout.
#[derive(Debug, Clone)]
pub struct TransactionTable {
    concept: ConceptId,
    widths: Vec<usize>,
    rows: Vec<Transaction>,
}

impl TransactionTable {
    /// Builds a table directly from hand-written rows, bypassing any network.
    pub fn from_rows(
        concept: ConceptId,
        widths: Vec<usize>,
        rows: Vec<Transaction>,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyTable { concept });
        }
        let layout = HiddenLayout::new(widths.clone());
        for (i, row) in rows.iter().enumerate() {
            for &n in row.neurons() {
                if !layout.contains(n) {
                    return Err(Error::schema(
                        format!("rows[{i}]"),
                        format!("neuron {n} outside universe of widths {widths:?}"),
                    ));
                }
            }
        }
        Ok(TransactionTable {
            concept,
            widths,
            rows,
        })
    }

    pub fn concept(&self) -> ConceptId {
        self.concept
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn layout(&self) -> HiddenLayout {
        HiddenLayout::new(self.widths.clone())
    }

    /// Total hidden-neuron count of the universe.
    pub fn universe(&self) -> usize {
        self.widths.iter().sum()
    }

    pub fn rows(&self) -> &[Transaction] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Fraction of rows containing `pattern` as a subset.
    pub fn support(&self, pattern: &BTreeSet<NeuronId>) -> f64 {
        assert!(!pattern.is_empty(), "support of an empty pattern is undefined");
        let hits = self
            .rows
            .iter()
            .filter(|row| row.contains_all(pattern))
            .count();
        hits as f64 / self.rows.len() as f64
    }

    /// Writes the table as CSV: a `# concept=` metadata line, a header of
    /// `layer:index` columns covering the whole universe, then 0/1 rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        self.write_csv_to(&mut w).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    fn write_csv_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "# concept={}", self.concept)?;
        let layout = self.layout();
        let header: Vec<String> = layout.iter_neurons().map(|n| n.to_string()).collect();
        writeln!(w, "{}", header.join(","))?;
        for row in &self.rows {
            let cells: Vec<&str> = layout
                .iter_neurons()
                .map(|n| if row.contains(n) { "1" } else { "0" })
                .collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        w.flush()
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
        let mut lines = reader.lines();
        let ctx = |lineno: usize| format!("{}:{}", path.display(), lineno);

        let meta = lines
            .next()
            .ok_or_else(|| Error::Parse {
                what: ctx(1),
                message: "empty file".into(),
            })?
            .map_err(|e| Error::io(path, e))?;
        let concept: ConceptId = meta
            .strip_prefix("# concept=")
            .ok_or_else(|| Error::Parse {
                what: ctx(1),
                message: "expected `# concept=<id>` metadata line".into(),
            })?
            .trim()
            .parse()?;

        let header = lines
            .next()
            .ok_or_else(|| Error::Parse {
                what: ctx(2),
                message: "missing header".into(),
            })?
            .map_err(|e| Error::io(path, e))?;
        let columns: Vec<NeuronId> = header
            .split(',')
            .map(|c| c.trim().parse())
            .collect::<Result<_>>()?;

        // The header must enumerate a full layer-major universe.
        let mut widths: Vec<usize> = Vec::new();
        for n in &columns {
            if n.layer == widths.len() && n.index == 0 {
                widths.push(0);
            }
            if n.layer + 1 != widths.len() || n.index != widths[n.layer] {
                return Err(Error::Parse {
                    what: ctx(2),
                    message: format!("header columns not in layer-major order at {n}"),
                });
            }
            widths[n.layer] += 1;
        }

        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != columns.len() {
                return Err(Error::Parse {
                    what: ctx(i + 3),
                    message: format!("expected {} cells, found {}", columns.len(), cells.len()),
                });
            }
            let mut neurons = BTreeSet::new();
            for (cell, &n) in cells.iter().zip(&columns) {
                match cell.trim() {
                    "1" => {
                        neurons.insert(n);
                    }
                    "0" => {}
                    other => {
                        return Err(Error::Parse {
                            what: ctx(i + 3),
                            message: format!("cell must be 0 or 1, found `{other}`"),
                        })
                    }
                }
            }
            rows.push(Transaction::new(neurons)?);
        }
        TransactionTable::from_rows(concept, widths, rows)
    }
}

/// Runs the network over the dataset and routes every instance's transaction
/// to its concepts. Concepts without instances are simply absent.
pub fn build_tables(
    net: &LayeredNet,
    data: &LabeledDataset,
    r: usize,
) -> Result<BTreeMap<ConceptId, TransactionTable>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let routed: Vec<(Transaction, usize, usize)> = (0..data.len())
        .into_par_iter()
        .map(|i| -> Result<(Transaction, usize, usize)> {
            let trace = net.forward_with_activations(data.instance(i))?;
            let infl = influence(net, &trace.hidden)?;
            let t = top_r_threshold(&infl, r)?;
            Ok((t, data.label(i), argmax(&trace.logits)))
        })
        .collect::<Result<_>>()?;

    let widths = net.hidden_widths().to_vec();
    let mut buckets: BTreeMap<ConceptId, Vec<Transaction>> = BTreeMap::new();
    for (t, label, pred) in routed {
        if label == pred {
            buckets
                .entry(ConceptId::ClassCorrect(label))
                .or_default()
                .push(t);
        } else {
            buckets
                .entry(ConceptId::ClassIncorrect(label))
                .or_default()
                .push(t.clone());
            buckets
                .entry(ConceptId::confusion(label, pred)?)
                .or_default()
                .push(t);
        }
    }
    buckets
        .into_iter()
        .map(|(concept, rows)| {
            TransactionTable::from_rows(concept, widths.clone(), rows).map(|t| (concept, t))
        })
        .collect()
}
