use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;
use serde_json::json;

use hyperexplain::baselines::{bernoulli_lower_bound, DEFAULT_MAX_DEGREE};
use hyperexplain::dataset::{self, DatasetBundle, PlantedConfig};
use hyperexplain::explainer::{ExplainConfig, MaskVariant, SearchScope};
use hyperexplain::metrics::{aggregate, reports_to_csv, size_histogram_csv, RunReport, SparsityScope};
use hyperexplain::model::{self, TrainConfig};
use hyperexplain::record::{read_jsonl, write_jsonl, ResultRecord};
use hyperexplain::runner::{self, NodeSelection, Workload};
use hyperexplain::{checkpoint, Error, ModelParams};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERIC: u8 = 4;
const EXIT_INTERNAL: u8 = 5;

#[derive(Parser, Serialize)]
#[command(name = "hyperexplain", version, about = "Counterfactual explanations for hypergraph node classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
enum Command {
    /// Train a classifier and write a checkpoint.
    Train(TrainArgs),
    /// Search counterfactuals with the gradient explainer.
    Explain(ExplainArgs),
    /// Exhaustive minimal counterfactuals for small search spaces.
    Oracle(OracleArgs),
    /// Random-removal baseline.
    Baseline(BaselineArgs),
    /// Convert a dataset between graph and hypergraph form.
    Convert(ConvertArgs),
    /// Explainer over a learning-rate x momentum grid.
    Bench(BenchArgs),
    /// Write a planted-partition dataset.
    Synth(SynthArgs),
    /// Print the random-baseline discovery bound.
    Bound(BoundArgs),
}

#[derive(Args, Serialize)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Checkpoint path; the log and config are written next to it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    learning_rate: f64,
    #[arg(long, default_value_t = 5e-4)]
    weight_decay: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [64, 32, 32])]
    hidden_dims: Vec<usize>,
    #[arg(long, default_value_t = 0.01)]
    negative_slope: f64,
    #[arg(long, default_value_t = 0.5)]
    dropout: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Serialize, Clone)]
struct ModelInputs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// `all-test` or a comma-separated node list.
    #[arg(long, default_value = "all-test")]
    nodes: String,
    /// Worker threads, 0 for one per core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Serialize, Clone)]
struct SearchFlags {
    #[arg(long, default_value_t = 500)]
    iterations: usize,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Neighborhood radius; defaults to the model's convolution count.
    #[arg(long)]
    hops: Option<usize>,
    /// `view` (n-hop neighborhood) or `full`.
    #[arg(long, default_value = "view")]
    scope: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SearchFlags {
    fn config(&self) -> Result<ExplainConfig, Error> {
        let cfg = ExplainConfig {
            iterations: self.iterations,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            beta: self.beta,
            threshold: self.threshold,
            hops: self.hops,
            scope: self.scope.parse::<SearchScope>()?,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Serialize)]
struct ExplainArgs {
    #[command(flatten)]
    inputs: ModelInputs,
    /// `nhp` or `hp`.
    #[arg(long)]
    variant: String,
    #[command(flatten)]
    search: SearchFlags,
    /// Sparsity denominator: `sub` or `full`.
    #[arg(long, default_value = "sub")]
    sparsity_scope: String,
}

#[derive(Args, Serialize)]
struct OracleArgs {
    #[command(flatten)]
    inputs: ModelInputs,
    #[arg(long)]
    variant: String,
    #[arg(long, default_value_t = DEFAULT_MAX_DEGREE)]
    max_degree: usize,
    #[arg(long)]
    hops: Option<usize>,
    /// Explainer results to compare sizes against.
    #[arg(long)]
    compare: Option<PathBuf>,
    #[arg(long, default_value = "sub")]
    sparsity_scope: String,
}

#[derive(Args, Serialize)]
struct BaselineArgs {
    #[command(flatten)]
    inputs: ModelInputs,
    #[arg(long)]
    variant: String,
    #[arg(long, default_value_t = 100)]
    attempts: usize,
    #[arg(long)]
    hops: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "sub")]
    sparsity_scope: String,
}

#[derive(Args, Serialize)]
struct ConvertArgs {
    /// Neighborhood conversion of a graph-form dataset.
    #[arg(long, conflicts_with = "star_expansion", required_unless_present = "star_expansion")]
    graph_to_hypergraph: bool,
    /// Star expansion of a hypergraph-form dataset.
    #[arg(long)]
    star_expansion: bool,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Serialize)]
struct BenchArgs {
    #[command(flatten)]
    inputs: ModelInputs,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.01])]
    learning_rates: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.5, 0.9])]
    momenta: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values = ["nhp", "hp"])]
    variants: Vec<String>,
    #[command(flatten)]
    search: SearchFlags,
    #[arg(long, default_value = "sub")]
    sparsity_scope: String,
}

#[derive(Args, Serialize)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 120)]
    num_nodes: usize,
    #[arg(long, default_value_t = 3)]
    num_classes: usize,
    #[arg(long, default_value_t = 0.2)]
    intra_edge_prob: f64,
    #[arg(long, default_value_t = 0.001)]
    inter_edge_prob: f64,
    #[arg(long, default_value_t = 0.0)]
    feature_noise: f64,
    #[arg(long, default_value_t = 16)]
    signal_width: usize,
    #[arg(long, default_value_t = 3.0)]
    signal_amplitude: f64,
    #[arg(long, default_value_t = 4)]
    bridges: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Serialize)]
struct BoundArgs {
    #[arg(long, default_value_t = 1)]
    min_degree: u32,
    #[arg(long, default_value_t = 10)]
    max_degree: u32,
    #[arg(long, value_delimiter = ',', default_values_t = [10u64, 100])]
    attempts: Vec<u64>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::NodeOutOfRange { .. } => EXIT_USAGE,
        Error::Numeric(_) => EXIT_NUMERIC,
        Error::Internal(_) => EXIT_INTERNAL,
        Error::InvalidHypergraph(_)
        | Error::InvalidDataset(_)
        | Error::Parse(_)
        | Error::Checkpoint(_)
        | Error::Dimension(_)
        | Error::NothingTunable(_)
        | Error::DegreeCap { .. }
        | Error::Io(_) => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Train(a) => cmd_train(cli, a),
        Command::Explain(a) => cmd_explain(cli, a),
        Command::Oracle(a) => cmd_oracle(cli, a),
        Command::Baseline(a) => cmd_baseline(cli, a),
        Command::Convert(a) => cmd_convert(a),
        Command::Bench(a) => cmd_bench(cli, a),
        Command::Synth(a) => cmd_synth(cli, a),
        Command::Bound(a) => cmd_bound(a),
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String, Error> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Internal(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_config(path: &Path, cli: &Cli, resolved: serde_json::Value) -> Result<(), Error> {
    let doc = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "invocation": cli,
        "resolved": resolved,
    });
    fs::write(path, to_json(&doc)?)?;
    Ok(())
}

fn cmd_train(cli: &Cli, a: &TrainArgs) -> Result<(), Error> {
    let bundle = dataset::load(&a.dataset)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        learning_rate: a.learning_rate,
        weight_decay: a.weight_decay,
        hidden_dims: a.hidden_dims.clone(),
        negative_slope: a.negative_slope,
        dropout: a.dropout,
        seed: a.seed,
    };
    let h = bundle.hypergraph()?;
    let x = bundle.node_features();
    let out = model::train(&h, &x, &bundle.labels, &bundle.splits, bundle.num_classes, &cfg)?;
    checkpoint::save(&out.params, &a.out)?;

    let mut log = String::from("epoch,loss,train_accuracy,val_accuracy\n");
    for e in &out.log {
        log.push_str(&format!("{},{},{},{}\n", e.epoch, e.loss, e.train_accuracy, e.val_accuracy));
    }
    fs::write(with_suffix(&a.out, ".log.csv"), log)?;
    write_config(&with_suffix(&a.out, ".config.json"), cli, json!({ "train": cfg }))?;
    if let Some(last) = out.log.last() {
        info!(
            "trained {} epochs: loss {:.4}, train acc {:.3}, val acc {:.3}",
            last.epoch, last.loss, last.train_accuracy, last.val_accuracy
        );
    }
    Ok(())
}

struct Loaded {
    bundle: DatasetBundle,
    params: ModelParams,
}

fn load_inputs(i: &ModelInputs) -> Result<Loaded, Error> {
    let bundle = dataset::load(&i.dataset)?;
    let params = checkpoint::load(&i.checkpoint)?;
    fs::create_dir_all(&i.out_dir)?;
    Ok(Loaded { bundle, params })
}

fn write_outputs(dir: &Path, stem: &str, records: &[ResultRecord], scope: SparsityScope) -> Result<Option<RunReport>, Error> {
    let f = fs::File::create(dir.join(format!("{stem}.jsonl")))?;
    write_jsonl(std::io::BufWriter::new(f), records)?;
    fs::write(dir.join(format!("{stem}_sizes.csv")), size_histogram_csv(records))?;
    if records.is_empty() {
        fs::write(dir.join(format!("{stem}_report.json")), "null\n")?;
        fs::write(dir.join(format!("{stem}_report.csv")), reports_to_csv(&[])?)?;
        info!("no nodes requested");
        return Ok(None);
    }
    let report = aggregate(records, scope)?;
    fs::write(dir.join(format!("{stem}_report.json")), to_json(&report)?)?;
    fs::write(dir.join(format!("{stem}_report.csv")), reports_to_csv(std::slice::from_ref(&report))?)?;
    info!(
        "{} {}: accuracy {:.3} ({} of {}), size {}, sparsity {}, {:.3}s per node",
        report.method,
        report.variant,
        report.accuracy,
        report.num_found,
        report.num_records,
        report.size_mean.map_or("-".into(), |v| format!("{v:.3}")),
        report.sparsity_mean.map_or("-".into(), |v| format!("{v:.3}")),
        report.time_mean_s
    );
    Ok(Some(report))
}

fn cmd_explain(cli: &Cli, a: &ExplainArgs) -> Result<(), Error> {
    let variant: MaskVariant = a.variant.parse()?;
    let cfg = a.search.config()?;
    let scope: SparsityScope = a.sparsity_scope.parse()?;
    let sel: NodeSelection = a.inputs.nodes.parse()?;
    let loaded = load_inputs(&a.inputs)?;
    let w = Workload::new(&loaded.bundle, &loaded.params)?;
    let nodes = w.nodes(&sel)?;
    let echo = json!({ "explain": cfg, "variant": variant, "checkpoint": a.inputs.checkpoint });
    write_config(&a.inputs.out_dir.join("config.json"), cli, echo.clone())?;
    let records = runner::explain_nodes(&w, &nodes, variant, &cfg, a.inputs.jobs, &echo)?;
    write_outputs(&a.inputs.out_dir, "results", &records, scope)?;
    Ok(())
}

fn cmd_oracle(cli: &Cli, a: &OracleArgs) -> Result<(), Error> {
    let variant: MaskVariant = a.variant.parse()?;
    let scope: SparsityScope = a.sparsity_scope.parse()?;
    let sel: NodeSelection = a.inputs.nodes.parse()?;
    let loaded = load_inputs(&a.inputs)?;
    let w = Workload::new(&loaded.bundle, &loaded.params)?;
    let nodes = w.nodes(&sel)?;
    let hops = a.hops.unwrap_or_else(|| loaded.params.num_layers());
    if hops == 0 {
        return Err(Error::Config("hops must be at least 1".into()));
    }
    let echo = json!({ "max_degree": a.max_degree, "hops": hops, "variant": variant, "checkpoint": a.inputs.checkpoint });
    write_config(&a.inputs.out_dir.join("config.json"), cli, echo.clone())?;
    // An explicit node list must be fully enumerable; all-test skips.
    let skip = sel == NodeSelection::AllTest;
    let (records, skipped) = runner::oracle_nodes(&w, &nodes, variant, a.max_degree, hops, skip, a.inputs.jobs, &echo)?;
    if !skipped.is_empty() {
        warn!("{} nodes exceed the enumeration cap {} and were skipped", skipped.len(), a.max_degree);
    }
    write_outputs(&a.inputs.out_dir, "oracle", &records, scope)?;
    let mut summary = json!({ "skipped_over_cap": skipped });
    if let Some(path) = &a.compare {
        let theirs = read_jsonl(std::io::BufReader::new(fs::File::open(path)?))?;
        let gap = runner::size_gap(&records, &theirs);
        info!(
            "compared {} nodes: mean gap {}, explainer at minimum on {}",
            gap.compared,
            gap.mean_gap.map_or("-".into(), |g| format!("{g:.3}")),
            gap.equal_rate.map_or("-".into(), |r| format!("{r:.3}"))
        );
        summary["gap"] = serde_json::to_value(&gap).map_err(|e| Error::Internal(e.to_string()))?;
    }
    fs::write(a.inputs.out_dir.join("oracle_summary.json"), to_json(&summary)?)?;
    Ok(())
}

fn cmd_baseline(cli: &Cli, a: &BaselineArgs) -> Result<(), Error> {
    let variant: MaskVariant = a.variant.parse()?;
    let scope: SparsityScope = a.sparsity_scope.parse()?;
    let sel: NodeSelection = a.inputs.nodes.parse()?;
    if a.attempts == 0 {
        return Err(Error::Config("attempts must be at least 1".into()));
    }
    let loaded = load_inputs(&a.inputs)?;
    let w = Workload::new(&loaded.bundle, &loaded.params)?;
    let nodes = w.nodes(&sel)?;
    let hops = a.hops.unwrap_or_else(|| loaded.params.num_layers());
    if hops == 0 {
        return Err(Error::Config("hops must be at least 1".into()));
    }
    let echo = json!({ "attempts": a.attempts, "hops": hops, "seed": a.seed, "variant": variant, "checkpoint": a.inputs.checkpoint });
    write_config(&a.inputs.out_dir.join("config.json"), cli, echo.clone())?;
    let records = runner::baseline_nodes(&w, &nodes, variant, a.attempts, a.seed, hops, a.inputs.jobs, &echo)?;
    write_outputs(&a.inputs.out_dir, "baseline", &records, scope)?;
    Ok(())
}

fn cmd_convert(a: &ConvertArgs) -> Result<(), Error> {
    let bundle = dataset::load(&a.input)?;
    let out = if a.graph_to_hypergraph {
        let out = bundle.to_hypergraph_form()?;
        if let dataset::Structure::Hyperedges(e) = &out.structure {
            info!("graph with {} nodes -> hypergraph with {} nodes and {} hyperedges", bundle.num_nodes, out.num_nodes, e.len());
        }
        out
    } else {
        let out = bundle.star_expanded()?;
        info!("hypergraph with {} nodes -> star expansion with {} nodes", bundle.num_nodes, out.num_nodes);
        out
    };
    dataset::save(&out, &a.output)
}

fn cmd_bench(cli: &Cli, a: &BenchArgs) -> Result<(), Error> {
    let base = a.search.config()?;
    let scope: SparsityScope = a.sparsity_scope.parse()?;
    let variants = a.variants.iter().map(|v| v.parse::<MaskVariant>()).collect::<Result<Vec<_>, _>>()?;
    let sel: NodeSelection = a.inputs.nodes.parse()?;
    let loaded = load_inputs(&a.inputs)?;
    let w = Workload::new(&loaded.bundle, &loaded.params)?;
    let nodes = w.nodes(&sel)?;
    write_config(&a.inputs.out_dir.join("config.json"), cli, json!({ "explain": base }))?;

    let mut table = String::from("learning_rate,momentum,");
    table.push_str(&hyperexplain::metrics::CSV_HEADER.join(","));
    table.push('\n');
    for &variant in &variants {
        for &lr in &a.learning_rates {
            for &m in &a.momenta {
                let cfg = ExplainConfig {
                    learning_rate: lr,
                    momentum: m,
                    ..base.clone()
                };
                cfg.validate()?;
                let echo = json!({ "explain": cfg, "variant": variant, "checkpoint": a.inputs.checkpoint });
                let records = runner::explain_nodes(&w, &nodes, variant, &cfg, a.inputs.jobs, &echo)?;
                let stem = format!("{variant}_lr{lr}_m{m}");
                if let Some(report) = write_outputs(&a.inputs.out_dir, &stem, &records, scope)? {
                    let row = reports_to_csv(&[report])?;
                    let line = row.lines().nth(1).unwrap_or_default();
                    table.push_str(&format!("{lr},{m},{line}\n"));
                }
            }
        }
    }
    fs::write(a.inputs.out_dir.join("bench.csv"), table)?;
    Ok(())
}

fn cmd_synth(cli: &Cli, a: &SynthArgs) -> Result<(), Error> {
    let cfg = PlantedConfig {
        num_nodes: a.num_nodes,
        num_classes: a.num_classes,
        intra_edge_prob: a.intra_edge_prob,
        inter_edge_prob: a.inter_edge_prob,
        feature_noise: a.feature_noise,
        signal_width: a.signal_width,
        signal_amplitude: a.signal_amplitude,
        bridges: a.bridges,
        seed: a.seed,
        ..PlantedConfig::default()
    };
    let (bundle, bridges) = dataset::synth_planted(&cfg)?;
    dataset::save(&bundle, &a.out)?;
    let planted: Vec<_> = bridges
        .iter()
        .map(|b| json!({ "node": b.node, "edge": b.edge, "home_class": b.home_class, "far_class": b.far_class }))
        .collect();
    fs::write(with_suffix(&a.out, ".bridges.json"), to_json(&planted)?)?;
    write_config(&with_suffix(&a.out, ".config.json"), cli, json!({ "synth": cfg }))?;
    info!("wrote {} nodes, {} bridges", bundle.num_nodes, bridges.len());
    Ok(())
}

fn cmd_bound(a: &BoundArgs) -> Result<(), Error> {
    if a.min_degree > a.max_degree {
        return Err(Error::Config("min_degree above max_degree".into()));
    }
    println!("degree,attempts,bound");
    for d in a.min_degree..=a.max_degree {
        for &t in &a.attempts {
            println!("{d},{t},{}", bernoulli_lower_bound(d, t));
        }
    }
    Ok(())
}

