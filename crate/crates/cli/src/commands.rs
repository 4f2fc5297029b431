//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use backbone_core::applic;
use backbone_core::backbone::{
    self, Backbone, CollectiveBackbone, ThresholdStep, WeightedPattern,
};
use backbone_core::clb;
use backbone_core::data::LabeledDataset;
use backbone_core::net::{influence, top_r_threshold, LayeredNet};
use backbone_core::oracle::{self, RelaxationBudget, SolveLimits, SolveOutcome};
use backbone_core::train::{accuracy, train_mlp};
use backbone_core::transact::{build_tables, ConceptId, TransactionTable};
use backbone_core::viz::{self, PsoConfig};

use crate::config::{pick, require, RunConfig};
use crate::fail::{require_artifact, CliError, CliResult};
use crate::{
    DataArgs, EapArgs, ExtractArgs, MineArgs, OracleArgs, PredictArgs, ReportArgs, TrainArgs,
    VizArgs,
};

const DEFAULT_R: usize = 5;

fn load_data(args: &DataArgs, config: &RunConfig) -> CliResult<LabeledDataset> {
    let csv = args.csv.clone().or_else(|| config.csv.clone());
    let images = args.images.clone().or_else(|| config.images.clone());
    let labels = args.labels.clone().or_else(|| config.labels.clone());
    let mut data = match (csv, images, labels) {
        (Some(path), _, _) => {
            require_artifact(&path, "dataset csv")?;
            LabeledDataset::load_csv(&path)?
        }
        (None, Some(images), Some(labels)) => {
            require_artifact(&images, "idx image file")?;
            require_artifact(&labels, "idx label file")?;
            LabeledDataset::load_idx(&images, &labels)?
        }
        _ => {
            return Err(CliError::usage(
                "no dataset given: pass --csv FILE or --images FILE --labels FILE",
            ))
        }
    };
    if let Some(classes) = args.classes.clone().or_else(|| config.classes.clone()) {
        data = data.select_classes(&classes)?;
    }
    if let Some(limit) = args.limit.or(config.limit) {
        data = data.take(limit)?;
    }
    Ok(data)
}

fn load_net(path: Option<PathBuf>, config: &RunConfig) -> CliResult<LayeredNet> {
    let path = require(path, config.net.clone(), "net")?;
    require_artifact(&path, "weight file")?;
    Ok(LayeredNet::load(&path)?)
}

/// Loads one transaction CSV or every `*.csv` in a directory.
fn load_tables(
    path: Option<PathBuf>,
    config: &RunConfig,
) -> CliResult<BTreeMap<ConceptId, TransactionTable>> {
    let path = require(path, config.tables.clone(), "tables")?;
    require_artifact(&path, "transaction tables")?;
    let mut tables = BTreeMap::new();
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(&path)
            .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("csv"))
            .collect();
        entries.sort();
        if entries.is_empty() {
            return Err(CliError::missing_artifact(format!(
                "no transaction CSVs in {}",
                path.display()
            )));
        }
        for entry in entries {
            let table = TransactionTable::read_csv(&entry)?;
            tables.insert(table.concept(), table);
        }
    } else {
        let table = TransactionTable::read_csv(&path)?;
        tables.insert(table.concept(), table);
    }
    Ok(tables)
}

fn ensure_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn create_file(path: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| {
        CliError::io(format!("{}: {e}", path.display()))
    })?))
}

pub fn train(args: TrainArgs, config: &RunConfig) -> CliResult<()> {
    let data = load_data(&args.data, config)?;
    let widths = require(args.widths, config.widths.clone(), "widths")?;
    let epochs = pick(args.epochs, config.epochs, 30);
    let lr = pick(args.lr, config.lr, 0.05);
    let seed = pick(args.seed, config.seed, 7);
    let out = require(args.out, config.out.clone(), "out")?;

    let net = train_mlp(&data, &widths, epochs, lr, seed)?;
    let acc = accuracy(&net, &data)?;
    net.save(&out)?;
    println!(
        "trained {}: {} instances, {} classes, train accuracy {:.4}",
        out.display(),
        data.len(),
        data.num_classes(),
        acc
    );
    Ok(())
}

pub fn extract(args: ExtractArgs, config: &RunConfig) -> CliResult<()> {
    let net = load_net(args.net, config)?;
    let data = load_data(&args.data, config)?;
    let r = pick(args.r, config.r, DEFAULT_R);
    let out_dir = require(args.out_dir, config.out_dir.clone(), "out-dir")?;
    ensure_dir(&out_dir)?;

    let tables = build_tables(&net, &data, r)?;
    for (concept, table) in &tables {
        let path = out_dir.join(format!("{concept}.csv"));
        table.write_csv(&path)?;
        println!("{concept}: {} rows -> {}", table.n_rows(), path.display());
    }
    Ok(())
}

pub fn mine(args: MineArgs, config: &RunConfig) -> CliResult<()> {
    let net = load_net(args.net, config)?;
    let tables = load_tables(args.tables, config)?;
    let lambda = pick(args.lambda, config.lambda, 0.0);
    let out_dir = require(args.out_dir, config.out_dir.clone(), "out-dir")?;
    let backbone_dir = out_dir.join("backbones");
    let trace_dir = out_dir.join("trace");
    ensure_dir(&backbone_dir)?;
    ensure_dir(&trace_dir)?;

    let build = backbone::build_collective(&tables, &net, lambda)?;
    for (concept, e) in &build.failures {
        eprintln!("warning: {concept}: {e}");
    }
    build.collective.save_dir(&backbone_dir)?;

    for (concept, bb) in build.collective.members() {
        let table = &tables[concept];
        let cov = backbone::coverage(bb, table);
        if cov < lambda {
            eprintln!(
                "warning: {concept}: coverage {cov:.4} fell short of the requested {lambda:.4}"
            );
        }
        println!(
            "{concept}: max_minsup {:.4}, {} patterns, coverage {:.4}",
            bb.max_minsup(),
            bb.patterns().len(),
            cov
        );
    }

    write_traces(&trace_dir, &build.collective, &build.traces)?;

    let overlap_path = out_dir.join("overlap.csv");
    let mut w = create_file(&overlap_path)?;
    writeln!(w, "concept_a,concept_b,overlap")
        .map_err(|e| CliError::io(e.to_string()))?;
    for (a, b, value) in &build.overlap_matrix {
        writeln!(w, "{a},{b},{value}").map_err(|e| CliError::io(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::io(e.to_string()))?;
    Ok(())
}

/// One trace CSV per concept. The overlap column holds the shared-neuron
/// fraction between all concepts' pattern prefixes at that iteration.
fn write_traces(
    dir: &Path,
    collective: &CollectiveBackbone,
    traces: &BTreeMap<ConceptId, Vec<ThresholdStep>>,
) -> CliResult<()> {
    let prefix_backbone = |concept: &ConceptId, steps: usize| -> Backbone {
        let bb = &collective.members()[concept];
        let trace = &traces[concept];
        let accepted: Vec<&ThresholdStep> = trace.iter().filter(|s| s.accepted).collect();
        let idx = steps.min(accepted.len().saturating_sub(1));
        let upto = accepted
            .get(idx)
            .map(|s| s.patterns_total)
            .unwrap_or(bb.patterns().len());
        Backbone::from_parts(
            *concept,
            bb.max_minsup(),
            bb.patterns()[..upto.min(bb.patterns().len())].to_vec(),
        )
    };

    for (concept, trace) in traces {
        let path = dir.join(format!("{concept}.csv"));
        let mut w = create_file(&path)?;
        writeln!(w, "concept,iteration,minsup,patterns_added,coverage,fscore,overlap")
            .map_err(|e| CliError::io(e.to_string()))?;
        let accepted: Vec<&ThresholdStep> = trace.iter().filter(|s| s.accepted).collect();
        for (k, step) in accepted.iter().enumerate() {
            let overlap = if collective.len() >= 2 {
                let prefixes: Vec<Backbone> = collective
                    .members()
                    .keys()
                    .map(|c| prefix_backbone(c, k))
                    .collect();
                let refs: Vec<&Backbone> = prefixes.iter().collect();
                backbone::overlap(&refs)
            } else {
                0.0
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                concept,
                k + 1,
                step.minsup,
                step.patterns_total,
                step.coverage,
                step.state.f_score,
                overlap
            )
            .map_err(|e| CliError::io(e.to_string()))?;
        }
        w.flush().map_err(|e| CliError::io(e.to_string()))?;
    }
    Ok(())
}

pub fn oracle(args: OracleArgs, config: &RunConfig) -> CliResult<()> {
    let out_dir = require(args.out_dir, config.out_dir.clone(), "out-dir")?;
    ensure_dir(&out_dir)?;

    if let Some(cnf) = args.cnf {
        return oracle_cnf(&cnf, &out_dir);
    }

    let net = load_net(args.net, config)?;
    let tables = load_tables(args.tables, config)?;
    let mut limits = SolveLimits::default();
    if let Some(cap) = args.universe_cap.or(config.universe_cap) {
        limits.universe_cap = cap;
        limits.pareto_universe_cap = cap.min(limits.pareto_universe_cap);
    }

    let any_budget = args.delta.or(config.delta).is_some()
        || args.gamma.or(config.gamma).is_some()
        || args.p1.or(config.p1).is_some()
        || args.p2.or(config.p2).is_some();
    let mode = args
        .mode
        .unwrap_or_else(|| if any_budget { "relaxed".into() } else { "strict".into() });

    match mode.as_str() {
        "strict" => {
            let outcome = oracle::solve_strict(&tables, &net, &limits)?;
            match outcome {
                SolveOutcome::Feasible(sol) => {
                    write_solution_backbones(&out_dir, &tables, &sol.assignment)?;
                    let mut report = BTreeMap::new();
                    report.insert("mode", serde_json::json!("strict"));
                    report.insert("feasible", serde_json::json!(true));
                    report.insert("total_size", serde_json::json!(sol.total_size));
                    write_json(&out_dir.join("oracle_report.json"), &report)?;
                    println!("strict: feasible, total size {}", sol.total_size);
                    Ok(())
                }
                SolveOutcome::Infeasible { reason } => {
                    let mut report = BTreeMap::new();
                    report.insert("mode", serde_json::json!("strict"));
                    report.insert("feasible", serde_json::json!(false));
                    report.insert("reason", serde_json::json!(reason));
                    write_json(&out_dir.join("oracle_report.json"), &report)?;
                    Err(CliError::infeasible(reason))
                }
            }
        }
        "relaxed" => {
            let p1 = pick(args.p1, config.p1, 0);
            let p2 = pick(args.p2, config.p2, 0);
            let budget = RelaxationBudget {
                delta: pick(args.delta, config.delta, p1),
                gamma: pick(args.gamma, config.gamma, p2),
                p1,
                p2,
            };
            let outcome = oracle::solve_relaxed(&tables, &net, &budget, &limits)?;
            match outcome {
                SolveOutcome::Feasible(sol) => {
                    write_solution_backbones(&out_dir, &tables, &sol.assignment)?;
                    let mut report = BTreeMap::new();
                    report.insert("mode", serde_json::json!("relaxed"));
                    report.insert("feasible", serde_json::json!(true));
                    report.insert("total_size", serde_json::json!(sol.total_size));
                    report.insert(
                        "coverage_slack",
                        serde_json::json!(sol.realized.coverage_slack),
                    );
                    report.insert("overlap", serde_json::json!(sol.realized.overlap));
                    write_json(&out_dir.join("oracle_report.json"), &report)?;
                    println!(
                        "relaxed: feasible, total size {}, forgotten {}, overlap {}",
                        sol.total_size, sol.realized.coverage_slack, sol.realized.overlap
                    );
                    Ok(())
                }
                SolveOutcome::Infeasible { reason } => {
                    let mut report = BTreeMap::new();
                    report.insert("mode", serde_json::json!("relaxed"));
                    report.insert("feasible", serde_json::json!(false));
                    report.insert("reason", serde_json::json!(reason));
                    write_json(&out_dir.join("oracle_report.json"), &report)?;
                    Err(CliError::infeasible(reason))
                }
            }
        }
        "front" => {
            if tables.len() != 1 {
                return Err(CliError::usage(format!(
                    "front mode takes exactly one table, got {}",
                    tables.len()
                )));
            }
            let (_, table) = tables.iter().next().unwrap();
            let front = oracle::pareto_front(table, &net, &limits)?;
            let path = out_dir.join("pareto_front.csv");
            let mut w = create_file(&path)?;
            writeln!(w, "size,coverage_slack,overlap,trivial,witness")
                .map_err(|e| CliError::io(e.to_string()))?;
            for p in &front {
                let witness: Vec<String> =
                    p.witness.iter().map(|n| n.to_string()).collect();
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    p.point.size,
                    p.point.coverage_slack,
                    p.point.overlap,
                    p.trivial as u8,
                    witness.join(" ")
                )
                .map_err(|e| CliError::io(e.to_string()))?;
            }
            w.flush().map_err(|e| CliError::io(e.to_string()))?;
            println!("front: {} non-dominated points -> {}", front.len(), path.display());
            Ok(())
        }
        other => Err(CliError::usage(format!(
            "unknown mode `{other}`; use strict, relaxed, or front"
        ))),
    }
}

fn oracle_cnf(cnf: &Path, out_dir: &Path) -> CliResult<()> {
    require_artifact(cnf, "cnf file")?;
    let text = std::fs::read_to_string(cnf)
        .map_err(|e| CliError::io(format!("{}: {e}", cnf.display())))?;
    let clauses = clb::parse_dimacs(&text)?;
    let instance = clb::from_3sat(&clauses)?;
    let feasible = instance.feasible();
    let mut report = BTreeMap::new();
    report.insert("mode", serde_json::json!("clb"));
    report.insert("variables", serde_json::json!(instance.num_vars()));
    report.insert("clauses", serde_json::json!(clauses.len()));
    report.insert("feasible", serde_json::json!(feasible.is_some()));
    if let Some(cert) = &feasible {
        let tags = |side: &[clb::Tag]| -> Vec<String> {
            side.iter().map(|t| t.to_string()).collect()
        };
        report.insert(
            "category_one_tags",
            serde_json::json!(tags(&cert.category_one_tags)),
        );
        report.insert(
            "category_two_tags",
            serde_json::json!(tags(&cert.category_two_tags)),
        );
    }
    write_json(&out_dir.join("clb_report.json"), &report)?;
    match feasible {
        Some(_) => {
            println!("clb: feasible");
            Ok(())
        }
        None => Err(CliError::infeasible("clb tag selection has no solution")),
    }
}

/// Emits oracle solutions in the backbone file format: one single-pattern
/// backbone per concept, support set to the fraction of rows covered.
fn write_solution_backbones(
    out_dir: &Path,
    tables: &BTreeMap<ConceptId, TransactionTable>,
    assignment: &BTreeMap<ConceptId, std::collections::BTreeSet<backbone_core::NeuronId>>,
) -> CliResult<()> {
    let dir = out_dir.join("solution");
    ensure_dir(&dir)?;
    for (concept, neurons) in assignment {
        let table = &tables[concept];
        let support = table.support(neurons);
        let bb = Backbone::from_parts(
            *concept,
            support,
            vec![WeightedPattern {
                neurons: neurons.clone(),
                support,
                weight: 1.0,
            }],
        );
        bb.save(dir.join(format!("{concept}.json")))?;
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult<()> {
    let mut w = create_file(path)?;
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| CliError::format(format!("{}: {e}", path.display())))?;
    w.write_all(b"\n").map_err(|e| CliError::io(e.to_string()))?;
    w.flush().map_err(|e| CliError::io(e.to_string()))?;
    Ok(())
}

pub fn predict(args: PredictArgs, config: &RunConfig) -> CliResult<()> {
    let net = load_net(args.net, config)?;
    let data = load_data(&args.data, config)?;
    let r = pick(args.r, config.r, DEFAULT_R);
    let backbones = require(args.backbones, config.backbones.clone(), "backbones")?;
    require_artifact(&backbones, "backbone directory")?;
    let collective = CollectiveBackbone::load_dir(&backbones)?;

    let mut net_correct = 0usize;
    let mut backbone_correct = 0usize;
    let mut rows = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let trace = net.forward_with_activations(data.instance(i))?;
        let infl = influence(&net, &trace.hidden)?;
        let t = top_r_threshold(&infl, r)?;
        let net_pred = {
            let mut best = 0;
            for (k, &v) in trace.logits.iter().enumerate() {
                if v > trace.logits[best] {
                    best = k;
                }
            }
            best
        };
        let p = applic::predict_by_backbone(&t, &collective)?;
        if net_pred == data.label(i) {
            net_correct += 1;
        }
        if p.class == data.label(i) {
            backbone_correct += 1;
        }
        rows.push((i, data.label(i), net_pred, p));
    }
    if let Some(out) = args.out.or_else(|| config.out.clone()) {
        let mut w = create_file(&out)?;
        writeln!(w, "id,label,net_pred,backbone_pred,similarity,low_confidence")
            .map_err(|e| CliError::io(e.to_string()))?;
        for (i, label, net_pred, p) in &rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                i, label, net_pred, p.class, p.similarity, p.low_confidence as u8
            )
            .map_err(|e| CliError::io(e.to_string()))?;
        }
        w.flush().map_err(|e| CliError::io(e.to_string()))?;
    }
    println!(
        "network accuracy {:.4}, backbone accuracy {:.4} over {} instances",
        net_correct as f64 / data.len() as f64,
        backbone_correct as f64 / data.len() as f64,
        data.len()
    );
    Ok(())
}

pub fn eap(args: EapArgs, config: &RunConfig) -> CliResult<()> {
    let net = load_net(args.net, config)?;
    let data = load_data(&args.data, config)?;
    let r = pick(args.r, config.r, DEFAULT_R);
    let backbones = require(args.backbones, config.backbones.clone(), "backbones")?;
    require_artifact(&backbones, "backbone directory")?;
    let collective = CollectiveBackbone::load_dir(&backbones)?;
    let out_dir = require(args.out_dir, config.out_dir.clone(), "out-dir")?;
    ensure_dir(&out_dir)?;

    let (report, records) = applic::eap_evaluate(&net, &data, r, &collective)?;
    write_json(&out_dir.join("eap_report.json"), &report)?;
    let mut w = create_file(&out_dir.join("eap_instances.csv"))?;
    applic::write_instances_csv(&records, &mut w)
        .map_err(|e| CliError::io(e.to_string()))?;
    w.flush().map_err(|e| CliError::io(e.to_string()))?;

    println!(
        "network {:.4} -> eap {:.4} (backbone alone {:.4})",
        report.network_accuracy, report.eap_accuracy, report.backbone_accuracy
    );
    println!(
        "flagged {} of {} mispredictions, {} false flags, precision {:.4}, recall {:.4}",
        report.flagged_true,
        report.mispredictions,
        report.flagged_false,
        report.flag_precision,
        report.flag_recall
    );
    Ok(())
}

pub fn viz(args: VizArgs, config: &RunConfig) -> CliResult<()> {
    let net = load_net(args.net, config)?;
    let backbone_path = require(args.backbone, None, "backbone")?;
    require_artifact(&backbone_path, "backbone file")?;
    let bb = Backbone::load(&backbone_path)?;
    let data = load_data(&args.data, config)?;
    let out_dir = require(args.out_dir, config.out_dir.clone(), "out-dir")?;
    ensure_dir(&out_dir)?;

    let class = args
        .class
        .or_else(|| bb.concept().class())
        .ok_or_else(|| {
            CliError::usage("confusion backbones need an explicit --class for the whitelist")
        })?;
    let fraction = pick(args.fraction, config.fraction, 0.4);
    let whitelist = viz::pixel_whitelist(&data, class, fraction)?;

    let defaults = PsoConfig::default();
    let cfg = PsoConfig {
        swarm_size: pick(args.swarm, config.swarm, defaults.swarm_size),
        iterations: pick(args.iterations, config.iterations, defaults.iterations),
        inertia: pick(args.inertia, config.inertia, defaults.inertia),
        cognitive: pick(args.cognitive, config.cognitive, defaults.cognitive),
        social: pick(args.social, config.social, defaults.social),
        seed: pick(args.seed, config.seed, defaults.seed),
    };
    let shape = resolve_shape(args.shape.or_else(|| config.shape.clone()), net.input_dim())?;
    let ext = if args.png { "png" } else { "pgm" };

    let result = viz::pso_maximize(&net, &bb, &whitelist, &cfg)?;
    let path = out_dir.join(format!("{}.{ext}", bb.concept()));
    viz::render(&result.position, shape, &path)?;
    println!(
        "{}: distance {:.6} -> {}",
        bb.concept(),
        result.distance,
        path.display()
    );

    if args.per_pattern {
        for (i, pattern) in bb.patterns().iter().enumerate() {
            let sub = Backbone::from_parts(bb.concept(), bb.max_minsup(), vec![pattern.clone()]);
            let sub_result = viz::pso_maximize(&net, &sub, &whitelist, &cfg)?;
            let path = out_dir.join(format!(
                "{}_pattern{i}_sup{:.2}.{ext}",
                bb.concept(),
                pattern.support
            ));
            viz::render(&sub_result.position, shape, &path)?;
            println!(
                "{} pattern {i} (support {:.2}): distance {:.6} -> {}",
                bb.concept(),
                pattern.support,
                sub_result.distance,
                path.display()
            );
        }
    }
    Ok(())
}

fn resolve_shape(shape: Option<String>, input_dim: usize) -> CliResult<(usize, usize)> {
    if let Some(s) = shape {
        let (h, w) = s
            .split_once('x')
            .ok_or_else(|| CliError::usage(format!("shape must be HxW, got `{s}`")))?;
        let h: usize = h
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("bad shape height in `{s}`")))?;
        let w: usize = w
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("bad shape width in `{s}`")))?;
        return Ok((h, w));
    }
    let side = (input_dim as f64).sqrt().round() as usize;
    if side * side == input_dim {
        Ok((side, side))
    } else {
        Err(CliError::usage(format!(
            "input dimension {input_dim} is not square; pass --shape HxW"
        )))
    }
}

pub fn report(args: ReportArgs, config: &RunConfig) -> CliResult<()> {
    let mut files = Vec::new();
    for path in &args.traces {
        require_artifact(path, "trace csv")?;
        if path.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
                .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("csv"))
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(path.clone());
        }
    }
    if files.is_empty() {
        return Err(CliError::missing_artifact("no trace CSVs found"));
    }
    let out = require(args.out, config.out.clone(), "out")?;

    // (concept, iteration) -> per-fold samples.
    #[derive(Default)]
    struct Cell {
        patterns: Vec<f64>,
        coverage: Vec<f64>,
        overlap: Vec<f64>,
    }
    let mut cells: BTreeMap<(String, usize), Cell> = BTreeMap::new();
    for file in &files {
        let text = std::fs::read_to_string(file)
            .map_err(|e| CliError::io(format!("{}: {e}", file.display())))?;
        for (lineno, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 7 {
                return Err(CliError::format(format!(
                    "{}:{}: expected 7 columns, found {}",
                    file.display(),
                    lineno + 1,
                    fields.len()
                )));
            }
            let parse = |i: usize| -> CliResult<f64> {
                fields[i].trim().parse().map_err(|e| {
                    CliError::format(format!("{}:{}: {e}", file.display(), lineno + 1))
                })
            };
            let iteration = parse(1)? as usize;
            let cell = cells
                .entry((fields[0].to_string(), iteration))
                .or_default();
            cell.patterns.push(parse(3)?);
            cell.coverage.push(parse(4)?);
            cell.overlap.push(parse(6)?);
        }
    }

    let mut w = create_file(&out)?;
    writeln!(
        w,
        "concept,iteration,patterns_added,coverage,coverage_min,coverage_max,overlap,overlap_min,overlap_max"
    )
    .map_err(|e| CliError::io(e.to_string()))?;
    for ((concept, iteration), cell) in &cells {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            concept,
            iteration,
            median(&cell.patterns),
            median(&cell.coverage),
            min(&cell.coverage),
            max(&cell.coverage),
            median(&cell.overlap),
            min(&cell.overlap),
            max(&cell.overlap)
        )
        .map_err(|e| CliError::io(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::io(e.to_string()))?;
    println!("aggregated {} trace files -> {}", files.len(), out.display());
    Ok(())
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

fn min(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::INFINITY, f64::min)
}

fn max(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}
