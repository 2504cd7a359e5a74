//! `taxind`: train, run and inspect hierarchy-induction models from the shell.
//!
//! Exit codes: 0 on success, 1 for usage errors (bad flags, invalid
//! settings), 2 for data errors (unreadable or inconsistent files).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use taxind_core::eval::{
    ancestor_f1, construct_tree, leave_one_out, run_completion, CompletionConfig, PipelineConfig, Task,
};
use taxind_core::inference::InitMode;
use taxind_core::io;
use taxind_core::report::layer_relevance;
use taxind_core::synth::{self, Shape, SynthConfig};
use taxind_core::training::{train, LabeledTree, TrainConfig};
use taxind_core::{Block, BlockMask, Dataset, SamplerConfig, Taxonomy, TopK};

#[derive(Parser, Debug)]
#[command(name = "taxind", version, about = "Multimodal taxonomy induction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a model on one or more labelled hierarchies.
    Train(TrainCmd),
    /// Build a hierarchy over a dataset from scratch.
    Construct(ConstructCmd),
    /// Ancestor precision/recall/F1 of a predicted tree against a gold tree.
    Eval(EvalCmd),
    /// Hold out part of a hierarchy and re-insert it.
    Complete(CompleteCmd),
    /// Generate synthetic datasets with gold trees.
    Synth(SynthCmd),
    /// Per-layer relevance of each feature block of a trained model.
    InspectWeights(InspectCmd),
    /// Retrain and re-evaluate over several image-subset sizes K.
    SweepK(SweepCmd),
    /// Graphviz rendering of a tree.
    ExportDot(DotCmd),
}

/// Options shared by every command that trains.
#[derive(Args, Debug, Clone)]
struct TrainOpts {
    /// Number of depth-specific weight layers.
    #[arg(long, default_value_t = 6)]
    layers: usize,
    #[arg(long, default_value_t = 300)]
    em_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// L1 penalty of the embedding projections.
    #[arg(long, default_value_t = 1e-3)]
    lambda: f64,
    /// Images kept per category for PC-V1 (`all` or a positive integer).
    #[arg(long, default_value = "all")]
    k: TopK,
    #[arg(long, default_value_t = 0.1)]
    eta0: f64,
    /// Stop after this many iterations without a better surrogate (0: never).
    #[arg(long, default_value_t = 50)]
    patience: usize,
    /// Initial burn-in sweeps of the E-step chains.
    #[arg(long, default_value_t = 20)]
    train_burn: usize,
    /// Sweeps recorded per EM iteration.
    #[arg(long, default_value_t = 4)]
    train_samples: usize,
    /// Feature blocks to use, comma separated (default: all).
    #[arg(long, value_delimiter = ',', conflicts_with = "language_only")]
    blocks: Option<Vec<Block>>,
    /// Drop the three visual blocks.
    #[arg(long)]
    language_only: bool,
}

impl TrainOpts {
    fn config(&self) -> TrainConfig {
        let blocks = if self.language_only {
            BlockMask::language_only()
        } else if let Some(list) = &self.blocks {
            let mut m = BlockMask::all();
            for b in Block::ALL {
                m.set(b, list.contains(&b));
            }
            m
        } else {
            BlockMask::all()
        };
        TrainConfig {
            layers: self.layers,
            em_iterations: self.em_iters,
            eta0: self.eta0,
            sampler: SamplerConfig {
                burn_in: self.train_burn,
                samples: self.train_samples,
                seed: self.seed,
                ..SamplerConfig::default()
            },
            seed: self.seed,
            patience: (self.patience > 0).then_some(self.patience),
            lambda: self.lambda,
            top_k: self.k,
            blocks,
            ..TrainConfig::default()
        }
    }
}

/// Test-time chain.
#[derive(Args, Debug, Clone)]
struct ChainOpts {
    #[arg(long, default_value_t = 1000)]
    burn: usize,
    #[arg(long, default_value_t = 5000)]
    samples: usize,
    #[arg(long = "chain-seed", default_value_t = 0)]
    chain_seed: u64,
}

impl ChainOpts {
    fn config(&self) -> SamplerConfig {
        SamplerConfig {
            burn_in: self.burn,
            samples: self.samples,
            seed: self.chain_seed,
            init: InitMode::Star,
        }
    }
}

/// Datasets and gold trees, paired in the order given.
#[derive(Args, Debug, Clone)]
struct Corpus {
    #[arg(long, required = true)]
    data: Vec<PathBuf>,
    #[arg(long, required = true)]
    tree: Vec<PathBuf>,
}

impl Corpus {
    fn load(&self) -> anyhow::Result<Vec<LabeledTree>> {
        if self.data.len() != self.tree.len() {
            return Err(Usage(format!(
                "{} --data files but {} --tree files; they are paired in order",
                self.data.len(),
                self.tree.len()
            ))
            .into());
        }
        self.data
            .iter()
            .zip(&self.tree)
            .map(|(d, t)| {
                let data = read_dataset(d)?;
                let gold = read_tree(t)?;
                LabeledTree::new(data, gold).with_context(|| format!("{} with {}", d.display(), t.display()))
            })
            .collect()
    }
}

#[derive(Args, Debug)]
struct TrainCmd {
    #[command(flatten)]
    corpus: Corpus,
    #[arg(long)]
    out: PathBuf,
    /// Training log CSV.
    #[arg(long)]
    log: Option<PathBuf>,
    #[command(flatten)]
    opts: TrainOpts,
}

#[derive(Args, Debug)]
struct ConstructCmd {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 1000)]
    burn: usize,
    #[arg(long, default_value_t = 5000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_tree: PathBuf,
    /// Edge marginals CSV.
    #[arg(long)]
    out_marginals: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalCmd {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    /// Also write the report as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CompleteCmd {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    tree: PathBuf,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    #[arg(long, default_value_t = 0.3)]
    test_fraction: f64,
    #[arg(long)]
    out_tree: Option<PathBuf>,
    /// Report CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    opts: TrainOpts,
    #[command(flatten)]
    chain: ChainOpts,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ShapeArg {
    Random,
    Layered,
}

#[derive(Args, Debug)]
struct SynthCmd {
    #[arg(long, default_value_t = 1)]
    trees: usize,
    #[arg(long, default_value_t = 50)]
    nodes: usize,
    #[arg(long, default_value_t = 3)]
    height: usize,
    #[arg(long, default_value_t = 16)]
    img_dim: usize,
    #[arg(long, default_value_t = 16)]
    word_dim: usize,
    /// Observation noise for both modalities.
    #[arg(long, default_value_t = 0.3)]
    noise: f64,
    /// Per-depth image noise, overriding --noise.
    #[arg(long, value_delimiter = ',')]
    visual_noise: Option<Vec<f64>>,
    /// Per-depth word-vector noise, overriding --noise.
    #[arg(long, value_delimiter = ',')]
    text_noise: Option<Vec<f64>>,
    /// Per-depth latent drift from parent to child, both modalities.
    #[arg(long, value_delimiter = ',', default_value = "1.0")]
    drift: Vec<f64>,
    /// Per-depth probability that a child's image prototype is unrelated to its parent's.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    visual_reset: Vec<f64>,
    /// Per-depth probability that a child's word vector is unrelated to its parent's.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    text_reset: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    images_per_node: usize,
    /// Probability that a child's name extends its parent's name.
    #[arg(long, default_value_t = 1.0)]
    morph_prob: f64,
    /// Fraction of a parent's images drawn around its children.
    #[arg(long, default_value_t = 0.0)]
    parent_mix: f64,
    #[arg(long, value_enum, default_value = "random")]
    shape: ShapeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct InspectCmd {
    #[arg(long)]
    model: PathBuf,
    /// CSV path (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepCmd {
    #[command(flatten)]
    corpus: Corpus,
    /// Comma-separated K values, e.g. `1,5,10,all`.
    #[arg(long, value_delimiter = ',', required = true)]
    k_list: Vec<TopK>,
    /// Completion split seed (single tree).
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    #[arg(long, default_value_t = 0.3)]
    test_fraction: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    opts: TrainOpts,
    #[command(flatten)]
    chain: ChainOpts,
}

#[derive(Args, Debug)]
struct DotCmd {
    #[arg(long)]
    tree: PathBuf,
    /// Dataset supplying node labels.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Tree to diff against.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A problem with the invocation rather than with the data.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<Usage>() {
            return 1;
        }
        if let Some(taxind_core::Error::Config(_)) = cause.downcast_ref::<taxind_core::Error>() {
            return 1;
        }
    }
    2
}

fn run(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Train(c) => cmd_train(c),
        Command::Construct(c) => cmd_construct(c),
        Command::Eval(c) => cmd_eval(c),
        Command::Complete(c) => cmd_complete(c),
        Command::Synth(c) => cmd_synth(c),
        Command::InspectWeights(c) => cmd_inspect(c),
        Command::SweepK(c) => cmd_sweep(c),
        Command::ExportDot(c) => cmd_dot(c),
    }
}

fn read_dataset(p: &Path) -> anyhow::Result<Dataset> {
    io::read_dataset(p).with_context(|| format!("reading dataset {}", p.display()))
}

fn read_tree(p: &Path) -> anyhow::Result<Taxonomy> {
    io::read_tree(p).with_context(|| format!("reading tree {}", p.display()))
}

fn write(p: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    io::write_atomic(p, bytes).with_context(|| format!("writing {}", p.display()))
}

fn write_or_print(p: Option<&Path>, bytes: &[u8]) -> anyhow::Result<()> {
    match p {
        Some(p) => write(p, bytes),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

fn cmd_train(c: TrainCmd) -> anyhow::Result<()> {
    let cfg = c.opts.config();
    cfg.validate()?;
    let trees = c.corpus.load()?;
    let out = train(&trees, &cfg)?;
    write(&c.out, io::model_to_string(&out.model)?.as_bytes())?;
    if let Some(log) = &c.log {
        write(log, &io::training_log_csv(&out.log)?)?;
    }
    let last = out.log.rows.last();
    eprintln!(
        "trained on {} tree(s): {} iterations{}, final surrogate {:.4}",
        trees.len(),
        out.log.rows.len(),
        if out.log.stopped_early { " (stopped early)" } else { "" },
        last.map_or(f64::NAN, |r| r.surrogate)
    );
    Ok(())
}

fn cmd_construct(c: ConstructCmd) -> anyhow::Result<()> {
    let model = io::read_model(&c.model).with_context(|| format!("reading model {}", c.model.display()))?;
    let data = read_dataset(&c.data)?;
    let sampler = SamplerConfig {
        burn_in: c.burn,
        samples: c.samples,
        seed: c.seed,
        init: InitMode::Star,
    };
    let (tree, marginals) = construct_tree(&model, &data, &sampler)?;
    write(&c.out_tree, io::tree_to_string(&tree).as_bytes())?;
    if let Some(p) = &c.out_marginals {
        write(p, &io::marginals_csv(&marginals)?)?;
    }
    Ok(())
}

fn cmd_eval(c: EvalCmd) -> anyhow::Result<()> {
    let pred = read_tree(&c.pred)?;
    let gold = read_tree(&c.gold)?;
    let report = ancestor_f1(&pred, &gold)?;
    println!("{report}");
    if let Some(p) = &c.out {
        write(p, &io::reports_csv(&[report])?)?;
    }
    Ok(())
}

fn cmd_complete(c: CompleteCmd) -> anyhow::Result<()> {
    let cfg = CompletionConfig {
        pipeline: PipelineConfig {
            train: c.opts.config(),
            sampler: c.chain.config(),
        },
        test_fraction: c.test_fraction,
        split_seed: c.split_seed,
    };
    cfg.pipeline.train.validate()?;
    let data = read_dataset(&c.data)?;
    let gold = read_tree(&c.tree)?;
    let outcome = run_completion(&data, &gold, &cfg)?;
    println!("{}", outcome.report);
    if let Some(p) = &c.out_tree {
        write(p, io::tree_to_string(&outcome.predicted).as_bytes())?;
    }
    if let Some(p) = &c.out {
        write(p, &io::reports_csv(&[outcome.report])?)?;
    }
    Ok(())
}

fn cmd_synth(c: SynthCmd) -> anyhow::Result<()> {
    let cfg = SynthConfig {
        nodes: c.nodes,
        height: c.height,
        image_dim: c.img_dim,
        word_dim: c.word_dim,
        visual_noise: c.visual_noise.unwrap_or_else(|| vec![c.noise]),
        text_noise: c.text_noise.unwrap_or_else(|| vec![c.noise]),
        visual_drift: c.drift.clone(),
        text_drift: c.drift,
        visual_reset: c.visual_reset,
        text_reset: c.text_reset,
        images_per_node: c.images_per_node,
        morph_prob: c.morph_prob,
        parent_mix: c.parent_mix,
        shape: match c.shape {
            ShapeArg::Random => Shape::Random,
            ShapeArg::Layered => Shape::Layered,
        },
    };
    let trees = synth::generate(&cfg, c.trees, c.seed)?;
    std::fs::create_dir_all(&c.out_dir).with_context(|| format!("creating {}", c.out_dir.display()))?;
    let note = format!("synthetic, seed {}", c.seed);
    for (i, t) in trees.iter().enumerate() {
        let stem = c.out_dir.join(format!("tree_{i:03}"));
        write(&stem.with_extension("jsonl"), io::dataset_to_string(&t.dataset, Some(&note))?.as_bytes())?;
        write(&stem.with_extension("tsv"), io::tree_to_string(&t.gold).as_bytes())?;
    }
    Ok(())
}

fn cmd_inspect(c: InspectCmd) -> anyhow::Result<()> {
    let model = io::read_model(&c.model).with_context(|| format!("reading model {}", c.model.display()))?;
    write_or_print(c.out.as_deref(), &io::relevance_csv(&layer_relevance(&model))?)
}

fn cmd_sweep(c: SweepCmd) -> anyhow::Result<()> {
    let trees = c.corpus.load()?;
    if trees.is_empty() {
        bail!(Usage("sweep-k needs at least one --data/--tree pair".into()));
    }
    let mut rows = Vec::with_capacity(c.k_list.len());
    for &k in &c.k_list {
        let mut train_cfg = c.opts.config();
        train_cfg.top_k = k;
        train_cfg.validate()?;
        let pipeline = PipelineConfig {
            train: train_cfg,
            sampler: c.chain.config(),
        };
        let f1 = if trees.len() == 1 {
            let cfg = CompletionConfig {
                pipeline,
                test_fraction: c.test_fraction,
                split_seed: c.split_seed,
            };
            run_completion(&trees[0].dataset, &trees[0].gold, &cfg)?.report.f1
        } else {
            let outcomes = leave_one_out(&trees, &pipeline)?;
            outcomes.iter().map(|o| o.report.f1).sum::<f64>() / outcomes.len() as f64
        };
        let task = if trees.len() == 1 { Task::Completion } else { Task::Construction };
        eprintln!("K={k}: {task} F1 {f1:.4}");
        rows.push((k.to_string(), f1));
    }
    write_or_print(c.out.as_deref(), &io::sweep_csv(&rows)?)
}

fn cmd_dot(c: DotCmd) -> anyhow::Result<()> {
    let tree = read_tree(&c.tree)?;
    let data = c.data.as_deref().map(read_dataset).transpose()?;
    let reference = c.reference.as_deref().map(read_tree).transpose()?;
    let dot = io::export_dot(&tree, data.as_ref(), reference.as_ref())?;
    write_or_print(c.out.as_deref(), dot.as_bytes())
}
