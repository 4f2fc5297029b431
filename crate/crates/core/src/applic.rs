//! Backbones as a predictive device: similarity scoring, misprediction
//! flagging, and prediction correction.
//!
//! An instance's transaction is compared against the class-correct backbones
//! by weighted pattern containment. A network prediction is flagged when the
//! backbone predictor disagrees with it and the class-incorrect backbone of
//! the predicted class matches at least as well as the best class-correct
//! one. Flagged binary predictions are swapped; multiclass corrections come
//! from the best-matching confusion backbone into the predicted class.

use std::io::Write;

use rayon::prelude::*;

use crate::backbone::{Backbone, CollectiveBackbone};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::net::{influence, top_r_threshold, LayeredNet};
use crate::transact::Transaction;

/// Weighted fraction of backbone patterns contained in the transaction.
pub fn similarity(t: &Transaction, b: &Backbone) -> f64 {
    assert!(
        !b.patterns().is_empty(),
        "similarity needs at least one pattern"
    );
    let total: f64 = b.patterns().iter().map(|p| p.weight).sum();
    let matched: f64 = b
        .patterns()
        .iter()
        .filter(|p| t.contains_all(&p.neurons))
        .map(|p| p.weight)
        .sum();
    matched / total
}

/// Raw neuron overlap between a transaction and a backbone's union.
fn overlap_count(t: &Transaction, b: &Backbone) -> usize {
    b.neurons().iter().filter(|&&n| t.contains(n)).count()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackbonePrediction {
    pub class: usize,
    pub similarity: f64,
    /// Set when every class-correct backbone scored zero.
    pub low_confidence: bool,
}

/// Argmax-similarity class over the class-correct backbones. Ties break by
/// raw neuron overlap, then by the lower class index.
pub fn predict_by_backbone(
    t: &Transaction,
    collective: &CollectiveBackbone,
) -> Result<BackbonePrediction> {
    let mut best: Option<(usize, f64, usize)> = None;
    for (class, backbone) in collective.class_correct() {
        let sim = similarity(t, backbone);
        let ov = overlap_count(t, backbone);
        let better = match best {
            None => true,
            Some((_, bs, bo)) => sim > bs || (sim == bs && ov > bo),
        };
        if better {
            best = Some((class, sim, ov));
        }
    }
    let (class, sim, _) = best.ok_or(Error::NoCorrectBackbones)?;
    Ok(BackbonePrediction {
        class,
        similarity: sim,
        low_confidence: sim == 0.0,
    })
}

/// True when the backbone predictor disagrees with the network and the
/// predicted class's misprediction backbone matches at least as strongly as
/// any correct-class backbone.
pub fn flag_misprediction(
    t: &Transaction,
    net_pred: usize,
    collective: &CollectiveBackbone,
) -> Result<bool> {
    let prediction = predict_by_backbone(t, collective)?;
    if prediction.class == net_pred {
        return Ok(false);
    }
    let best_correct = collective
        .class_correct()
        .map(|(_, b)| similarity(t, b))
        .fold(0.0_f64, f64::max);
    // Absent incorrect backbones never match.
    let incorrect_sim = collective
        .class_incorrect(net_pred)
        .filter(|b| !b.patterns().is_empty())
        .map(|b| similarity(t, b))
        .unwrap_or(0.0);
    Ok(incorrect_sim > 0.0 && incorrect_sim >= best_correct)
}

/// Where a corrected prediction came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrectionSource {
    /// Binary task: the other class.
    Swap,
    /// The true class of the best-matching confusion backbone.
    Confusion { actual: usize },
    /// No confusion backbone available; backbone predictor used instead.
    Fallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Correction {
    pub class: usize,
    pub source: CorrectionSource,
}

/// Alternative prediction for a flagged instance.
pub fn correct_prediction(
    t: &Transaction,
    net_pred: usize,
    num_classes: usize,
    collective: &CollectiveBackbone,
) -> Result<Correction> {
    if num_classes == 2 {
        return Ok(Correction {
            class: 1 - net_pred,
            source: CorrectionSource::Swap,
        });
    }
    let mut best: Option<(usize, f64, usize)> = None;
    for (actual, backbone) in collective.confusion_into(net_pred) {
        if backbone.patterns().is_empty() {
            continue;
        }
        let sim = similarity(t, backbone);
        let ov = overlap_count(t, backbone);
        let better = match best {
            None => true,
            Some((ba, bs, bo)) => {
                sim > bs || (sim == bs && (ov > bo || (ov == bo && actual < ba)))
            }
        };
        if better {
            best = Some((actual, sim, ov));
        }
    }
    match best {
        Some((actual, _, _)) => Ok(Correction {
            class: actual,
            source: CorrectionSource::Confusion { actual },
        }),
        None => {
            let fallback = predict_by_backbone(t, collective)?;
            Ok(Correction {
                class: fallback.class,
                source: CorrectionSource::Fallback,
            })
        }
    }
}

/// Aggregate outcome of running the full pipeline over an evaluation set.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EapReport {
    pub instances: usize,
    pub mispredictions: usize,
    /// Flagged instances that really were mispredicted.
    pub flagged_true: usize,
    /// Flagged instances the network had right.
    pub flagged_false: usize,
    /// Flagged instances whose correction recovered the true label.
    pub corrected_right: usize,
    pub network_accuracy: f64,
    pub backbone_accuracy: f64,
    pub eap_accuracy: f64,
    pub flag_precision: f64,
    pub flag_recall: f64,
}

/// Per-instance record of the pipeline's decisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EapInstance {
    pub id: usize,
    pub label: usize,
    pub net_pred: usize,
    pub backbone_pred: usize,
    pub flagged: bool,
    pub corrected_pred: usize,
}

/// Runs prediction, flagging, and correction over the dataset. The caller is
/// responsible for keeping the evaluation set disjoint from the data the
/// backbones were built on.
pub fn eap_evaluate(
    net: &LayeredNet,
    data: &LabeledDataset,
    r: usize,
    collective: &CollectiveBackbone,
) -> Result<(EapReport, Vec<EapInstance>)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let num_classes = data.num_classes();
    let records: Vec<EapInstance> = (0..data.len())
        .into_par_iter()
        .map(|i| -> Result<EapInstance> {
            let trace = net.forward_with_activations(data.instance(i))?;
            let infl = influence(net, &trace.hidden)?;
            let t = top_r_threshold(&infl, r)?;
            let net_pred = crate::net::argmax(&trace.logits);
            let backbone_pred = predict_by_backbone(&t, collective)?.class;
            let flagged = flag_misprediction(&t, net_pred, collective)?;
            let corrected_pred = if flagged {
                correct_prediction(&t, net_pred, num_classes, collective)?.class
            } else {
                net_pred
            };
            Ok(EapInstance {
                id: i,
                label: data.label(i),
                net_pred,
                backbone_pred,
                flagged,
                corrected_pred,
            })
        })
        .collect::<Result<_>>()?;

    let n = records.len();
    let mispredictions = records.iter().filter(|r| r.net_pred != r.label).count();
    let flagged_true = records
        .iter()
        .filter(|r| r.flagged && r.net_pred != r.label)
        .count();
    let flagged_false = records
        .iter()
        .filter(|r| r.flagged && r.net_pred == r.label)
        .count();
    let corrected_right = records
        .iter()
        .filter(|r| r.flagged && r.corrected_pred == r.label)
        .count();
    let net_correct = n - mispredictions;
    let backbone_correct = records.iter().filter(|r| r.backbone_pred == r.label).count();
    let eap_correct = records.iter().filter(|r| r.corrected_pred == r.label).count();
    let flagged_total = flagged_true + flagged_false;
    let report = EapReport {
        instances: n,
        mispredictions,
        flagged_true,
        flagged_false,
        corrected_right,
        network_accuracy: net_correct as f64 / n as f64,
        backbone_accuracy: backbone_correct as f64 / n as f64,
        eap_accuracy: eap_correct as f64 / n as f64,
        flag_precision: if flagged_total == 0 {
            1.0
        } else {
            flagged_true as f64 / flagged_total as f64
        },
        flag_recall: if mispredictions == 0 {
            1.0
        } else {
            flagged_true as f64 / mispredictions as f64
        },
    };
    Ok((report, records))
}

/// Writes the per-instance records as CSV.
pub fn write_instances_csv(records: &[EapInstance], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "id,label,net_pred,backbone_pred,flagged,corrected_pred")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.id, r.label, r.net_pred, r.backbone_pred, r.flagged as u8, r.corrected_pred
        )?;
    }
    Ok(())
}
