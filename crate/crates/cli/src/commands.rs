use std::path::Path;

use pathgrad::attribution::Reduction;
use pathgrad::contrib::{neuron_intgrad, neuron_mct, ContributionMap, ContributionMethod};
use pathgrad::data::Dataset;
use pathgrad::eval::{
    default_fractions, lerf_curve, randomization_sanity, roar_run, Attributor, Method, MethodAttributor, RemovalFill,
    RoarConfig, Summary,
};
use pathgrad::linearity::{linear_region_radius, verify_linear_region, Surrogate};
use pathgrad::nn::{forward_record, manifest, ArchSpec, LayerSpec};
use pathgrad::pathway::{
    active_subnet, build_frozen, dead_fraction, jaccard, masked_record, select_pathway, select_top, PathwayMask, Provenance,
};
use pathgrad::pruneobj::{default_chunk, dgr_optimize, greedy_prune, DgrConfig, GateInit, GateLoss};
use pathgrad::train::{evaluate, train, write_metrics_csv, Optimizer, TrainConfig};
use pathgrad::{Error, Network};
use rayon::prelude::*;

use crate::config::{OutDir, RunConfig};
use crate::{
    AttributeArgs, Cli, CliError, Command, ContribArgs, DgrArgs, GreedyArgs, InputArgs, LerfArgs, LinearityArgs, MethodArgs,
    Result, RoarArgs, SanityArgs, SelectArgs, StatsArgs, TrainArgs,
};

pub fn dispatch(cli: &Cli) -> Result<()> {
    let out = OutDir::create(&cli.out)?;
    let config = RunConfig::new(cli).to_json()?;
    out.write_str("run_config.json", &config)?;
    print!("{config}");
    match &cli.command {
        Command::Train(a) => cmd_train(cli.seed, a, &out),
        Command::Contrib(a) => cmd_contrib(cli.seed, a, &out),
        Command::SelectPath(a) => cmd_select(cli.seed, a, &out),
        Command::GreedyPrune(a) => cmd_greedy(cli.seed, a, &out),
        Command::Dgr(a) => cmd_dgr(cli.seed, a, &out),
        Command::PathwayStats(a) => cmd_stats(cli.seed, a, &out),
        Command::Linearity(a) => cmd_linearity(cli.seed, a, &out),
        Command::Attribute(a) => cmd_attribute(cli.seed, a, &out),
        Command::EvalLerf(a) => cmd_lerf(cli.seed, a, &out),
        Command::EvalRoar(a) => cmd_roar(cli.seed, a, &out),
        Command::SanityCheck(a) => cmd_sanity(cli.seed, a, &out),
    }
}

fn load_model(path: &Path) -> Result<Network> {
    if !path.is_file() {
        return Err(CliError::Usage(format!("model file `{}` not found", path.display())));
    }
    Ok(manifest::load(path)?)
}

struct Input {
    net: Network,
    x: Vec<f64>,
    class: usize,
}

fn load_input(seed: u64, a: &InputArgs) -> Result<Input> {
    let net = load_model(&a.model.model)?;
    let ds = a.data.analyzed(seed)?;
    let x = ds
        .inputs
        .get(a.index)
        .cloned()
        .ok_or_else(|| CliError::Usage(format!("--index {} out of range for {} samples", a.index, ds.len())))?;
    let class = match a.class {
        Some(c) => c,
        None => forward_record(&net, &x, None, 0)?.predicted_class(),
    };
    Ok(Input { net, x, class })
}

fn load_batch(seed: u64, model: &Path, data: &crate::DataArgs, inputs: usize) -> Result<(Network, Dataset)> {
    let net = load_model(model)?;
    let ds = data.analyzed(seed)?;
    Ok((net, ds.take(inputs)))
}

fn contribution_method(name: &str) -> Result<ContributionMethod> {
    name.parse().map_err(|_| CliError::Usage(format!("unknown contribution method `{name}` (neuronmct or neuronintgrad)")))
}

fn contributions(net: &Network, x: &[f64], class: usize, method: ContributionMethod, steps: usize) -> Result<ContributionMap> {
    Ok(match method {
        ContributionMethod::NeuronMct => neuron_mct(net, x, class)?,
        ContributionMethod::NeuronIntGrad => neuron_intgrad(net, x, class, steps)?,
    })
}

fn predicted(net: &Network, x: &[f64]) -> Result<usize> {
    Ok(forward_record(net, x, None, 0)?.predicted_class())
}

fn summary_record(out: &OutDir, net: &Network, dataset: &str, method: &str, metrics: &[(&str, f64)]) -> Result<()> {
    let path = out.path("summary.json");
    let mut summary = Summary::load_or_default(&path)?;
    let hash = net.content_hash();
    for (k, v) in metrics {
        summary.record(&hash, dataset, method, k, *v);
    }
    summary.save(&path)?;
    Ok(())
}

fn default_arch(ds: &Dataset) -> ArchSpec {
    ArchSpec::mlp(ds.shape, &[32, 16], ds.num_classes)
}

fn cmd_train(seed: u64, a: &TrainArgs, out: &OutDir) -> Result<()> {
    let splits = a.data.load(seed)?;
    let arch = match &a.arch {
        Some(s) => ArchSpec::parse(splits.train.shape, s)?,
        None => default_arch(&splits.train),
    };
    let cfg = TrainConfig {
        optimizer: if a.sgd { Optimizer::Sgd } else { Optimizer::Momentum },
        learning_rate: a.learning_rate,
        momentum: a.momentum,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed,
        weight_decay: a.weight_decay,
        ..TrainConfig::default()
    };
    let outcome = train(&arch, &splits.train, &cfg)?;
    manifest::save(&outcome.network, out.path("model.json"))?;
    out.write("metrics.csv", |w| write_metrics_csv(&outcome.trace, w))?;
    let mut metrics = vec![("train_accuracy", evaluate(&outcome.network, &splits.train)?.accuracy)];
    if let Some(test) = &splits.test {
        metrics.push(("test_accuracy", evaluate(&outcome.network, test)?.accuracy));
    }
    summary_record(out, &outcome.network, &a.data.data, "train", &metrics)?;
    for (k, v) in &metrics {
        eprintln!("{k}: {v:.4}");
    }
    Ok(())
}

fn cmd_contrib(seed: u64, a: &ContribArgs, out: &OutDir) -> Result<()> {
    let inp = load_input(seed, &a.input)?;
    let c = contributions(&inp.net, &inp.x, inp.class, contribution_method(&a.method)?, a.steps)?;
    out.write("contrib.csv", |w| c.write_csv(w))?;
    let blob = c.to_blob(&inp.net.content_hash())?;
    out.write("contrib.bin", |w| w.write_all(&blob))?;
    let nonzero = c.iter().filter(|(_, v)| *v != 0.0).count();
    eprintln!("{} neurons, {nonzero} with non-zero contribution", c.num_neurons());
    Ok(())
}

fn write_pathway(out: &OutDir, net: &Network, mask: &PathwayMask) -> Result<()> {
    out.write_str("pathway.txt", &mask.to_sparse_text(&net.content_hash()))?;
    Ok(())
}

/// Dead fraction of a pathway at its own masked forward pass.
fn pathway_report(net: &Network, x: &[f64], class: usize, mask: &PathwayMask) -> Result<serde_json::Value> {
    let original = forward_record(net, x, None, class)?;
    let current = masked_record(net, x, mask, class)?;
    let df = dead_fraction(mask, &original, Some(&current))?;
    Ok(serde_json::json!({
        "provenance": mask.provenance.to_string(),
        "sparsity": mask.sparsity,
        "kept": mask.kept_count(),
        "neurons": mask.num_neurons(),
        "threshold": mask.threshold,
        "threshold_positive": mask.threshold_positive(),
        "originally_dead": df.originally_dead,
        "originally_dead_now_active": df.originally_dead_now_active,
        "output": original.output,
        "masked_output": current.output,
    }))
}

fn write_report(out: &OutDir, report: &serde_json::Value) -> Result<()> {
    out.write_str("pathway_report.json", &(serde_json::to_string_pretty(report)? + "\n"))?;
    Ok(())
}

fn cmd_select(seed: u64, a: &SelectArgs, out: &OutDir) -> Result<()> {
    let inp = load_input(seed, &a.contrib.input)?;
    let c = contributions(&inp.net, &inp.x, inp.class, contribution_method(&a.contrib.method)?, a.contrib.steps)?;
    let mask = select_pathway(&c, a.sparsity)?;
    if !mask.threshold_positive() {
        eprintln!("warning: pathway threshold is zero; zero-contribution neurons were admitted");
    }
    write_pathway(out, &inp.net, &mask)?;
    write_report(out, &pathway_report(&inp.net, &inp.x, inp.class, &mask)?)
}

fn cmd_greedy(seed: u64, a: &GreedyArgs, out: &OutDir) -> Result<()> {
    let inp = load_input(seed, &a.input)?;
    let chunk = a.chunk.unwrap_or_else(|| default_chunk(inp.net.num_neurons()));
    let (mask, state) = greedy_prune(&inp.net, &inp.x, inp.class, a.sparsity, chunk)?;
    if state.stopped_early {
        eprintln!("warning: no neuron with a non-zero score remained; stopped at {} neurons", mask.kept_count());
    }
    out.write("prune.csv", |w| state.write_csv(w))?;
    write_pathway(out, &inp.net, &mask)?;
    write_report(out, &pathway_report(&inp.net, &inp.x, inp.class, &mask)?)
}

fn dgr_config(seed: u64, a: &DgrArgs) -> Result<DgrConfig> {
    Ok(DgrConfig {
        gamma: a.gamma,
        init: a.init.parse::<GateInit>()?,
        learning_rate: a.learning_rate,
        iterations: a.iterations,
        seed,
        loss: if a.cross_entropy { GateLoss::CrossEntropy } else { GateLoss::SquaredError },
        sparsity: a.sparsity,
    })
}

fn cmd_dgr(seed: u64, a: &DgrArgs, out: &OutDir) -> Result<()> {
    let inp = load_input(seed, &a.input)?;
    let (gates, mask) = dgr_optimize(&inp.net, &inp.x, inp.class, &dgr_config(seed, a)?)?;
    out.write("objective.csv", |w| gates.write_csv(w))?;
    out.write("gates.csv", |w| {
        writeln!(w, "layer,unit,lambda")?;
        for (l, layer) in gates.lambdas.iter().enumerate() {
            for (u, v) in layer.iter().enumerate() {
                writeln!(w, "{l},{u},{v}")?;
            }
        }
        Ok(())
    })?;
    write_pathway(out, &inp.net, &mask)?;
    write_report(out, &pathway_report(&inp.net, &inp.x, inp.class, &mask)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Selector {
    Contribution(ContributionMethod),
    Greedy,
    Dgr,
    Active,
}

fn selector(name: &str) -> Result<Selector> {
    Ok(match name {
        "greedy" => Selector::Greedy,
        "dgr" => Selector::Dgr,
        "active" => Selector::Active,
        other => Selector::Contribution(contribution_method(other)?),
    })
}

/// One pathway per sparsity for a single selector; `None` where selection failed.
fn select_all(
    net: &Network,
    x: &[f64],
    class: usize,
    sel: Selector,
    sparsities: &[f64],
    steps: usize,
    seed: u64,
) -> Result<Vec<Option<PathwayMask>>> {
    let keep_zero = |r: pathgrad::Result<PathwayMask>| match r {
        Ok(m) => Ok(Some(m)),
        Err(Error::AllZeroContributions) => Ok(None),
        Err(e) => Err(CliError::from(e)),
    };
    match sel {
        Selector::Contribution(m) => {
            let c = contributions(net, x, class, m, steps)?;
            sparsities.iter().map(|&k| keep_zero(select_pathway(&c, k))).collect()
        }
        Selector::Greedy => sparsities
            .iter()
            .map(|&k| Ok(Some(greedy_prune(net, x, class, k, default_chunk(net.num_neurons()))?.0)))
            .collect(),
        Selector::Dgr => {
            let gates = match dgr_optimize(net, x, class, &DgrConfig { seed, ..DgrConfig::default() }) {
                Ok((g, _)) => g,
                Err(Error::NonFiniteObjective { .. }) => return Ok(vec![None; sparsities.len()]),
                Err(e) => return Err(e.into()),
            };
            sparsities.iter().map(|&k| Ok(Some(select_top(&gates.lambdas, k, Provenance::Dgr)?))).collect()
        }
        Selector::Active => {
            let mask = active_subnet(&forward_record(net, x, None, class)?);
            Ok(sparsities.iter().map(|_| Some(mask.clone())).collect())
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn cmd_stats(seed: u64, a: &StatsArgs, out: &OutDir) -> Result<()> {
    let (net, ds) = load_batch(seed, &a.batch.model.model, &a.batch.data, a.batch.inputs)?;
    let selectors: Vec<Selector> = a.methods.iter().map(|m| selector(m)).collect::<Result<_>>()?;
    // per_input[i][method][sparsity] = (mask, originally_dead, revived)
    type Cell = Option<(PathwayMask, f64, f64)>;
    let per_input: Vec<Vec<Vec<Cell>>> = ds
        .inputs
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let class = predicted(&net, x)?;
            let original = forward_record(&net, x, None, class)?;
            selectors
                .iter()
                .map(|&s| {
                    select_all(&net, x, class, s, &a.sparsity, a.steps, seed ^ i as u64)?
                        .into_iter()
                        .map(|m| {
                            m.map(|mask| {
                                let cur = masked_record(&net, x, &mask, class)?;
                                let df = dead_fraction(&mask, &original, Some(&cur))?;
                                Ok((mask, df.originally_dead, df.originally_dead_now_active.unwrap_or(0.0)))
                            })
                            .transpose()
                        })
                        .collect::<Result<Vec<Cell>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    out.write("pathway_stats_per_input.csv", |w| {
        writeln!(w, "input,method,sparsity,kept,threshold_positive,originally_dead,originally_dead_now_active")?;
        for (i, methods) in per_input.iter().enumerate() {
            for (mi, cells) in methods.iter().enumerate() {
                for (si, cell) in cells.iter().enumerate() {
                    match cell {
                        Some((m, d, r)) => writeln!(
                            w,
                            "{i},{},{},{},{},{d},{r}",
                            a.methods[mi],
                            a.sparsity[si],
                            m.kept_count(),
                            m.threshold_positive()
                        )?,
                        None => writeln!(w, "{i},{},{},0,false,,", a.methods[mi], a.sparsity[si])?,
                    }
                }
            }
        }
        Ok(())
    })?;

    let mut summary_rows = Vec::new();
    out.write("dead_fraction.csv", |w| {
        writeln!(w, "method,sparsity,inputs,failed,mean_originally_dead,mean_originally_dead_now_active,inputs_with_dead")?;
        for (mi, name) in a.methods.iter().enumerate() {
            for (si, k) in a.sparsity.iter().enumerate() {
                let cells: Vec<&(PathwayMask, f64, f64)> = per_input.iter().filter_map(|p| p[mi][si].as_ref()).collect();
                let dead: Vec<f64> = cells.iter().map(|c| c.1).collect();
                let revived: Vec<f64> = cells.iter().map(|c| c.2).collect();
                let with_dead = dead.iter().filter(|&&d| d > 0.0).count();
                writeln!(
                    w,
                    "{name},{k},{},{},{},{},{with_dead}",
                    cells.len(),
                    per_input.len() - cells.len(),
                    mean(&dead),
                    mean(&revived)
                )?;
                summary_rows.push((name.clone(), *k, mean(&dead)));
            }
        }
        Ok(())
    })?;

    out.write("jaccard.csv", |w| {
        writeln!(w, "method_a,method_b,sparsity,inputs,mean_jaccard")?;
        for i in 0..a.methods.len() {
            for j in i + 1..a.methods.len() {
                for (si, k) in a.sparsity.iter().enumerate() {
                    let vals: Vec<f64> = per_input
                        .iter()
                        .filter_map(|p| match (&p[i][si], &p[j][si]) {
                            (Some(x), Some(y)) => jaccard(&x.0, &y.0).ok(),
                            _ => None,
                        })
                        .collect();
                    writeln!(w, "{},{},{k},{},{}", a.methods[i], a.methods[j], vals.len(), mean(&vals))?;
                }
            }
        }
        Ok(())
    })?;
    for (name, k, d) in summary_rows {
        summary_record(out, &net, &ds.name, &name, &[(&format!("dead_fraction@{k}"), d)])?;
    }
    Ok(())
}

fn cmd_linearity(seed: u64, a: &LinearityArgs, out: &OutDir) -> Result<()> {
    let (net, ds) = load_batch(seed, &a.batch.model.model, &a.batch.data, a.batch.inputs)?;
    let method = contribution_method(&a.method)?;
    let rows: Vec<Vec<String>> = ds
        .inputs
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let class = predicted(&net, x)?;
            let rec = forward_record(&net, x, None, class)?;
            let c = contributions(&net, x, class, method, a.steps)?;
            a.sparsity
                .iter()
                .map(|&k| {
                    let mask = match select_pathway(&c, k) {
                        Ok(m) => m,
                        Err(Error::AllZeroContributions) => return Ok(format!("{i},{k},0,false,,,,false,,,all contributions zero")),
                        Err(e) => return Err(e.into()),
                    };
                    let frozen = build_frozen(&net, &rec, &mask)?;
                    let model = Surrogate::frozen(&frozen);
                    let head = format!("{i},{k},{},{}", mask.kept_count(), mask.threshold_positive());
                    let report = match linear_region_radius(&model, x) {
                        Ok(r) => r,
                        Err(Error::BoundaryPoint { neuron }) => {
                            return Ok(format!("{head},0,{},{},false,,,boundary point", neuron.layer, neuron.unit))
                        }
                        Err(e) => return Err(e.into()),
                    };
                    let v = verify_linear_region(&model, x, &report, a.ball_samples, a.shrink, seed ^ i as u64)?;
                    let (al, au) = report.argmin.map_or((String::new(), String::new()), |n| (n.layer.to_string(), n.unit.to_string()));
                    Ok(format!(
                        "{head},{},{al},{au},{},{},{},{}",
                        report.radius,
                        v.passed,
                        v.max_deviation,
                        v.pattern_violations,
                        v.reason.unwrap_or_default().replace(',', ";")
                    ))
                })
                .collect::<Result<Vec<String>>>()
        })
        .collect::<Result<_>>()?;
    out.write("linearity.csv", |w| {
        writeln!(w, "input,sparsity,kept,threshold_positive,radius,argmin_layer,argmin_unit,passed,max_deviation,pattern_violations,reason")?;
        for line in rows.iter().flatten() {
            writeln!(w, "{line}")?;
        }
        Ok(())
    })?;
    let passed = rows.iter().flatten().filter(|r| r.split(',').nth(7) == Some("true")).count();
    eprintln!("{passed} of {} certificates verified", rows.iter().map(Vec::len).sum::<usize>());
    Ok(())
}

/// Resolves a method name into an attributor with the shared options.
fn attributor(name: &str, o: &MethodArgs, ds: &Dataset, seed: u64, signed: bool) -> Result<MethodAttributor> {
    let mut m: MethodAttributor = name.parse()?;
    match &mut m.method {
        Method::Pathway { sparsity, steps, .. } => {
            *sparsity = o.sparsity;
            *steps = o.steps;
        }
        Method::Baseline(pathgrad::attribution::BaselineMethod::InputIntGrad { steps }) => *steps = o.steps,
        Method::Random { seed: s } => *s = seed,
        Method::Oracle { sites } => {
            *sites = ds
                .informative
                .clone()
                .ok_or_else(|| CliError::Usage(format!("dataset `{}` has no ground-truth sites for `oracle`", ds.name)))?;
        }
        _ => {}
    }
    if o.opening.is_some() {
        m.opening = o.opening;
    }
    if signed {
        m.reduction = Reduction::SignedSum;
    }
    Ok(m)
}

fn file_stem(name: &str) -> String {
    name.replace('*', "_open")
}

fn cmd_attribute(seed: u64, a: &AttributeArgs, out: &OutDir) -> Result<()> {
    let inp = load_input(seed, &a.input)?;
    let ds = a.input.data.analyzed(seed)?;
    let att = attributor(&a.method, &a.options, &ds, seed, a.signed)?;
    let map = att.attribute(&inp.net, &inp.x, inp.class)?;
    for w in &map.warnings {
        eprintln!("warning: {w}");
    }
    out.write("map.csv", |w| map.write_csv(w))?;
    out.write("map.pgm", |w| map.write_pgm(w))?;
    Ok(())
}

fn removal_fill(s: &str) -> Result<RemovalFill> {
    Ok(match s {
        "mean" | "channel-mean" => RemovalFill::ChannelMean,
        "zero" => RemovalFill::Zero,
        "own" => RemovalFill::Own,
        _ => return Err(CliError::Usage(format!("unknown fill `{s}` (mean, zero or own)"))),
    })
}

fn cmd_lerf(seed: u64, a: &LerfArgs, out: &OutDir) -> Result<()> {
    let (net, ds) = load_batch(seed, &a.batch.model.model, &a.batch.data, a.batch.inputs)?;
    let fill = removal_fill(&a.fill)?;
    let fractions = a.fractions.clone().unwrap_or_else(default_fractions);
    let mut rows = Vec::new();
    for name in &a.methods {
        let att = attributor(name, &a.options, &ds, seed, false)?;
        let curve = lerf_curve(&net, &ds, &att, fill, &fractions)?;
        out.write(&format!("lerf_{}.csv", file_stem(name)), |w| curve.write_csv(w))?;
        summary_record(out, &net, &ds.name, &att.name(), &[("lerf_auc", curve.auc)])?;
        rows.push((att.name(), curve.auc, curve.inputs, curve.skipped));
    }
    out.write("lerf_summary.csv", |w| {
        writeln!(w, "method,auc,inputs,skipped")?;
        for (m, auc, n, s) in &rows {
            writeln!(w, "{m},{auc},{n},{s}")?;
        }
        Ok(())
    })?;
    for (m, auc, ..) in &rows {
        eprintln!("{m}: AUC {auc:.4}");
    }
    Ok(())
}

fn arch_of(net: &Network) -> Result<ArchSpec> {
    let layers: Vec<LayerSpec> = net
        .layers()
        .iter()
        .map(|l| match l {
            pathgrad::nn::Layer::Dense(d) => LayerSpec::Dense { outputs: d.outputs },
            pathgrad::nn::Layer::Conv(c) => {
                LayerSpec::Conv { out_channels: c.out_channels, kernel: c.kernel_h, stride: c.stride, padding: c.padding }
            }
            pathgrad::nn::Layer::AvgPool { window } => LayerSpec::AvgPool { window: *window },
            pathgrad::nn::Layer::Flatten => LayerSpec::Flatten,
            pathgrad::nn::Layer::Relu => LayerSpec::Relu,
        })
        .collect();
    Ok(ArchSpec::new(net.input_shape(), layers))
}

fn cmd_roar(seed: u64, a: &RoarArgs, out: &OutDir) -> Result<()> {
    let net = load_model(&a.model.model)?;
    let splits = a.data.load(seed)?;
    let test = splits.test.as_ref().ok_or_else(|| CliError::Usage("eval-roar needs --holdout > 0".into()))?;
    let arch = match &a.arch {
        Some(s) => ArchSpec::parse(net.input_shape(), s)?,
        None => arch_of(&net)?,
    };
    let cfg = RoarConfig {
        percentiles: a.percentiles.clone(),
        seeds: a.seeds.clone(),
        train: TrainConfig { epochs: a.epochs, learning_rate: a.learning_rate, ..TrainConfig::default() },
    };
    let mut rows = Vec::new();
    for name in &a.methods {
        let att = attributor(name, &a.options, &splits.train, seed, false)?;
        let result = roar_run(&arch, &splits.train, test, &net, &att, &cfg)?;
        out.write(&format!("roar_{}.csv", file_stem(name)), |w| result.write_csv(w))?;
        for p in &result.points {
            for f in &p.flagged {
                eprintln!("warning: {} at {}%: {f}", att.name(), p.percentile);
            }
        }
        summary_record(out, &net, &splits.train.name, &att.name(), &[("roar_auc", result.auc)])?;
        rows.push(result);
    }
    out.write("roar_summary.csv", |w| {
        writeln!(w, "method,percentile,mean_accuracy,std_accuracy,flagged")?;
        for r in &rows {
            for p in &r.points {
                let fmt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
                writeln!(w, "{},{},{},{},{}", r.method, p.percentile, fmt(p.mean), fmt(p.std), p.flagged.len())?;
            }
        }
        Ok(())
    })?;
    Ok(())
}

fn cmd_sanity(seed: u64, a: &SanityArgs, out: &OutDir) -> Result<()> {
    let (net, ds) = load_batch(seed, &a.batch.model.model, &a.batch.data, a.batch.inputs)?;
    for name in &a.methods {
        let att = attributor(name, &a.options, &ds, seed, false)?;
        let trace = randomization_sanity(&net, &ds, &att as &dyn Attributor, seed)?;
        out.write(&format!("sanity_{}.csv", file_stem(name)), |w| trace.write_csv(w))?;
        if let Some(last) = trace.checkpoints.last() {
            let mut metrics = vec![("sanity_final_ssim", last.ssim)];
            if let Some(r) = last.spearman {
                metrics.push(("sanity_final_spearman", r));
            }
            summary_record(out, &net, &ds.name, &att.name(), &metrics)?;
        }
    }
    Ok(())
}
