//! The `spiffy` command line.
//!
//! Exit codes: 0 on success, 1 when a lossless check finds a divergence,
//! 2 on usage or input errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{build_table, collect_records, format_records, score_graph, select_subgraph, Strategy};
use crate::config::{GenerationConfig, Schedule};
use crate::drafting::DraftGraphSpec;
use crate::engine::{
    aggregate_speedup, bench, check_graph, check_lossless, generate_speculative, generate_vanilla, per_block_summary,
    total_timings, EngineOptions, Fault, PromptRun, RunReport,
};
use crate::error::SpiffyError;
use crate::model::{format_corpus, parse_corpus, DlmOracle, Mixture, ToyDenoiser};
use crate::state::TokenId;
use crate::synthetic::SyntheticSpec;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<SpiffyError> for CliError {
    fn from(e: SpiffyError) -> Self {
        CliError::usage(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(
    name = "spiffy",
    version,
    about = "Lossless speculative decoding for block-wise diffusion LMs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Mine calibration records and select a draft graph.
    Calibrate(CalibrateArgs),
    /// Generate continuations for every prompt.
    Generate(GenerateArgs),
    /// Run vanilla and speculative decoding and write a report.
    Bench(BenchArgs),
    /// Compare speculative and vanilla outputs over seeded trials.
    CheckLossless(CheckArgs),
    /// Inspect draft graph files.
    #[command(subcommand)]
    Graph(GraphCommand),
    /// Print summary tables from bench reports.
    Summarize(SummarizeArgs),
    /// Write the synthetic corpus and prompt sets.
    Synth(SynthArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Training corpus: one sequence of token ids per line.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Additive smoothing constant.
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// Mixture weights `left,right,unigram`.
    #[arg(long, default_value = "0.6,0.2,0.2")]
    pub lambdas: String,
    /// Vocabulary size; defaults to the largest id in the corpus.
    #[arg(long)]
    pub vocab: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct GenArgs {
    /// `key = value` generation config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config schedule, e.g. `fixed:2` or `threshold:0.9`.
    #[arg(long)]
    pub schedule: Option<Schedule>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub gen: GenArgs,
    #[arg(long)]
    pub prompts: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub lookahead: usize,
    #[arg(long, default_value_t = 10)]
    pub budget: usize,
    #[arg(long, default_value = "degree-1")]
    pub strategy: Strategy,
    /// Candidates kept per level.
    #[arg(long, default_value_t = crate::calibration::DEFAULT_TABLE_WIDTH)]
    pub width: usize,
    /// Graph output file.
    #[arg(long)]
    pub out: PathBuf,
    /// Records output; defaults to `<out>.records`.
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Candidate table output; defaults to `<out>.table`.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub gen: GenArgs,
    #[arg(long)]
    pub prompts: PathBuf,
    /// Draft graph; vanilla decoding when absent.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Token output, one line per prompt; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub gen: GenArgs,
    #[arg(long)]
    pub prompts: PathBuf,
    #[arg(long)]
    pub graph: PathBuf,
    /// JSON report output.
    #[arg(long)]
    pub report: PathBuf,
    /// Per-block CSV output.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Record per-stage wall time (makes the report non-deterministic).
    #[arg(long)]
    pub profile: bool,
    /// Use a seeded sample of this many prompts.
    #[arg(long)]
    pub sample: Option<usize>,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub gen: GenArgs,
    #[arg(long)]
    pub prompts: PathBuf,
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

#[derive(Subcommand, Debug)]
pub enum GraphCommand {
    /// Write a Graphviz rendering.
    ExportDot {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a graph file, optionally against a generation config.
    Validate {
        #[arg(long)]
        graph: PathBuf,
        #[command(flatten)]
        gen: GenArgs,
    },
    /// Print nodes, levels and parents; with a table, also scores.
    Show {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        table: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
pub struct SummarizeArgs {
    #[arg(long = "report", required = true)]
    pub reports: Vec<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub prompts: usize,
    #[arg(long, default_value_t = 8)]
    pub prompt_len: usize,
}

/// Seeds of the bundled prompt sets.
pub const CALIB_PROMPT_SEED: u64 = 11;
pub const EVAL_PROMPT_SEED: u64 = 22;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub prompts: usize,
    pub baseline_nfe: usize,
    pub vanilla_nfe: usize,
    pub speculative_nfe: usize,
    pub vanilla_speedup_all: f64,
    pub vanilla_speedup_to_eot: f64,
    pub speedup_all: f64,
    pub speedup_to_eot: f64,
    /// Prompts where speculation used strictly fewer calls than vanilla.
    pub improved_prompts: usize,
    pub lossless_prompts: usize,
}

impl Aggregate {
    pub fn of(runs: &[PromptRun]) -> Self {
        let spec = || runs.iter().map(|r| &r.speculative);
        let van = || runs.iter().map(|r| &r.vanilla);
        Aggregate {
            prompts: runs.len(),
            baseline_nfe: spec().map(|r| r.baseline_nfe).sum(),
            vanilla_nfe: van().map(|r| r.total_nfe).sum(),
            speculative_nfe: spec().map(|r| r.total_nfe).sum(),
            vanilla_speedup_all: aggregate_speedup(van(), false),
            vanilla_speedup_to_eot: aggregate_speedup(van(), true),
            speedup_all: aggregate_speedup(spec(), false),
            speedup_to_eot: aggregate_speedup(spec(), true),
            improved_prompts: runs
                .iter()
                .filter(|r| r.speculative.total_nfe < r.vanilla.total_nfe)
                .count(),
            lossless_prompts: runs.iter().filter(|r| r.lossless).count(),
        }
    }
}

/// The document `bench --report` writes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: GenerationConfig,
    pub graph: String,
    pub graph_nodes: usize,
    pub aggregate: Aggregate,
    pub runs: Vec<PromptRun>,
}

/// Parses `args` (program name first) and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::Calibrate(a) => calibrate(a),
        Command::Generate(a) => generate(a),
        Command::Bench(a) => run_bench(a),
        Command::CheckLossless(a) => run_check(a),
        Command::Graph(g) => graph(g),
        Command::Summarize(a) => summarize(a),
        Command::Synth(a) => synth(a),
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn read_sequences(path: &Path) -> CliResult<Vec<Vec<TokenId>>> {
    let seqs = parse_corpus(&read_text(path)?, &path.display().to_string())?;
    if seqs.is_empty() {
        return Err(CliError::usage(format!("{}: no sequences", path.display())));
    }
    Ok(seqs)
}

fn parse_lambdas(text: &str) -> CliResult<Mixture> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| CliError::usage(format!("--lambdas `{text}` is not three numbers")))?;
    match parts[..] {
        [l, r, u] => Ok(Mixture::new(l, r, u)?),
        _ => Err(CliError::usage(format!("--lambdas `{text}` is not three numbers"))),
    }
}

fn load_model(args: &ModelArgs) -> CliResult<ToyDenoiser> {
    let corpus = read_sequences(&args.corpus)?;
    let vocab = match args.vocab {
        Some(v) => v,
        None => corpus.iter().flatten().copied().max().unwrap_or(1) as usize,
    };
    if args.alpha.is_nan() || args.alpha <= 0.0 {
        return Err(CliError::usage("--alpha must be positive"));
    }
    let lambdas = parse_lambdas(&args.lambdas)?;
    Ok(ToyDenoiser::train(&corpus, vocab, args.alpha, lambdas)?)
}

fn load_config(args: &GenArgs) -> CliResult<GenerationConfig> {
    let mut cfg = match &args.config {
        Some(p) => GenerationConfig::from_kv_str(&read_text(p)?, &p.display().to_string())?,
        None => GenerationConfig::default(),
    };
    if let Some(s) = args.schedule {
        cfg.schedule = s;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Prompts with every token checked against the vocabulary.
fn load_prompts(path: &Path, vocab: usize) -> CliResult<Vec<Vec<TokenId>>> {
    let prompts = read_sequences(path)?;
    for (i, p) in prompts.iter().enumerate() {
        if let Some(&t) = p.iter().find(|&&t| t as usize > vocab) {
            return Err(CliError::usage(format!(
                "{}: prompt {}: token {t} outside vocabulary 1..={vocab}",
                path.display(),
                i + 1
            )));
        }
    }
    Ok(prompts)
}

fn load_graph(path: &Path) -> CliResult<DraftGraphSpec> {
    Ok(DraftGraphSpec::parse(&read_text(path)?, &path.display().to_string())?)
}

fn sibling(path: &Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn calibrate(a: CalibrateArgs) -> CliResult<()> {
    if a.budget == 0 {
        return Err(CliError::usage("--budget must be >= 1"));
    }
    if a.lookahead == 0 {
        return Err(CliError::usage("--lookahead must be >= 1"));
    }
    if a.width == 0 {
        return Err(CliError::usage("--width must be >= 1"));
    }
    let model = load_model(&a.model)?;
    let mut cfg = load_config(&a.gen)?;
    let prompts = load_prompts(&a.prompts, model.vocab_size())?;
    if cfg.schedule.tokens_per_level().is_none() {
        eprintln!("note: threshold schedules calibrate under fixed:1");
        cfg.schedule = Schedule::Fixed { s: 1 };
    }
    let tpl = cfg.schedule.tokens_per_level().unwrap_or(1);
    let records = collect_records(&model, &prompts, &cfg, a.lookahead)?;
    let table = build_table(&records, a.lookahead, tpl, a.width);
    let selection = select_subgraph(&table, a.budget, a.strategy)?;

    let records_path = a.records.unwrap_or_else(|| sibling(&a.out, "records"));
    let table_path = a.table.unwrap_or_else(|| sibling(&a.out, "table"));
    write_text(&records_path, &format_records(&records))?;
    write_text(&table_path, &table.to_text())?;
    write_text(&a.out, &selection.graph.to_text())?;

    println!(
        "{} records from {} prompts, {} candidates over {} levels",
        records.len(),
        prompts.len(),
        table.len(),
        table.levels.len()
    );
    for (level, e) in table.entries() {
        println!("  level {level}  {:>6}  {}", e.count, e.formula);
    }
    println!(
        "selected {} of {} nodes with {} (score {})",
        selection.graph.len(),
        a.budget,
        a.strategy,
        selection.score
    );
    Ok(())
}

fn generate(a: GenerateArgs) -> CliResult<()> {
    let model = load_model(&a.model)?;
    let cfg = load_config(&a.gen)?;
    let prompts = load_prompts(&a.prompts, model.vocab_size())?;
    let graph = a.graph.as_deref().map(load_graph).transpose()?;
    if let Some(g) = &graph {
        check_graph(g, &cfg)?;
    }
    let runs: Vec<_> = prompts
        .par_iter()
        .map(|p| match &graph {
            Some(g) => generate_speculative(&model, p, &cfg, g, EngineOptions::default()),
            None => generate_vanilla(&model, p, &cfg, EngineOptions::default()),
        })
        .collect::<crate::error::Result<_>>()?;
    let mut lines = Vec::with_capacity(runs.len());
    for (i, g) in runs.iter().enumerate() {
        lines.push(g.tokens.clone());
        eprintln!(
            "prompt {i}: {} calls for {} tokens ({:.3}x)",
            g.report.total_nfe, g.report.baseline_nfe, g.report.speedup_all
        );
    }
    let text = format_corpus(&lines);
    match &a.out {
        Some(p) => write_text(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn sample_prompts(prompts: Vec<Vec<TokenId>>, count: Option<usize>, seed: u64) -> Vec<Vec<TokenId>> {
    match count {
        None => prompts,
        Some(n) => {
            let mut idx: Vec<usize> = (0..prompts.len()).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            idx.truncate(n);
            idx.sort_unstable();
            idx.into_iter().map(|i| prompts[i].clone()).collect()
        }
    }
}

fn per_block_csv(runs: &[PromptRun]) -> String {
    let mut out = String::from("prompt,block,vanilla_nfe,speculative_nfe,tokens,acceptances,before_eot\n");
    for r in runs {
        for (v, s) in r.vanilla.per_block.iter().zip(&r.speculative.per_block) {
            let before_eot = r.speculative.eot_block.is_none_or(|e| s.block <= e);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.prompt_index,
                s.block,
                v.nfe,
                s.nfe,
                s.tokens(),
                s.acceptances,
                before_eot
            );
        }
    }
    out
}

fn run_bench(a: BenchArgs) -> CliResult<()> {
    if a.sample == Some(0) {
        return Err(CliError::usage("--sample must be >= 1"));
    }
    let model = load_model(&a.model)?;
    let cfg = load_config(&a.gen)?;
    let prompts = sample_prompts(load_prompts(&a.prompts, model.vocab_size())?, a.sample, cfg.seed);
    let graph = load_graph(&a.graph)?;
    check_graph(&graph, &cfg)?;
    let options = EngineOptions {
        profile: a.profile,
        ..EngineOptions::default()
    };
    let runs = bench(&model, &prompts, &cfg, &graph, options)?;
    let report = BenchReport {
        config: cfg.clone(),
        graph: graph.to_text(),
        graph_nodes: graph.len(),
        aggregate: Aggregate::of(&runs),
        runs,
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::usage(e.to_string()))?;
    write_text(&a.report, &(json + "\n"))?;
    if let Some(csv) = &a.csv {
        write_text(csv, &per_block_csv(&report.runs))?;
    }
    let g = &report.aggregate;
    println!(
        "schedule {}  graph nodes {}  prompts {}",
        cfg.schedule,
        graph.len(),
        g.prompts
    );
    println!(
        "vanilla      {:>7} calls  speedup {:.3} (to EOT {:.3})",
        g.vanilla_nfe, g.vanilla_speedup_all, g.vanilla_speedup_to_eot
    );
    println!(
        "speculative  {:>7} calls  speedup {:.3} (to EOT {:.3})",
        g.speculative_nfe, g.speedup_all, g.speedup_to_eot
    );
    println!(
        "improved on {}/{} prompts, lossless on {}/{}",
        g.improved_prompts, g.prompts, g.lossless_prompts, g.prompts
    );
    Ok(())
}

fn run_check(a: CheckArgs) -> CliResult<()> {
    if a.trials == 0 {
        return Err(CliError::usage("--trials 0 checks nothing"));
    }
    let model = load_model(&a.model)?;
    let cfg = load_config(&a.gen)?;
    let prompts = load_prompts(&a.prompts, model.vocab_size())?;
    let graph = load_graph(&a.graph)?;
    check_graph(&graph, &cfg)?;
    let fault = a.inject_fault.then_some(Fault::IgnoreContent);

    // Trials walk seeded shuffles of the prompt set.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order = Vec::with_capacity(a.trials);
    while order.len() < a.trials {
        let mut idx: Vec<usize> = (0..prompts.len()).collect();
        idx.shuffle(&mut rng);
        order.extend(idx);
    }
    order.truncate(a.trials);

    let results: Vec<_> = order
        .par_iter()
        .map(|&i| check_lossless(&model, &prompts[i], &cfg, &graph, fault))
        .collect::<crate::error::Result<_>>()?;
    let failures = results.iter().filter(|r| r.is_some()).count();
    if let Some((trial, d)) = results.iter().enumerate().find_map(|(t, r)| r.as_ref().map(|d| (t, d))) {
        println!("DIVERGENCE in trial {trial} (prompt {}): {d}", order[trial] + 1);
        println!("{failures}/{} trials diverged", a.trials);
        return Err(CliError {
            code: EXIT_CHECK_FAILED,
            message: "speculative output differs from vanilla".into(),
        });
    }
    println!(
        "lossless: {} trials, schedule {}, {} graph nodes",
        a.trials,
        cfg.schedule,
        graph.len()
    );
    Ok(())
}

fn graph(cmd: GraphCommand) -> CliResult<()> {
    match cmd {
        GraphCommand::ExportDot { graph, out } => {
            let g = load_graph(&graph)?;
            write_text(&out, &g.to_dot())
        }
        GraphCommand::Validate { graph, gen } => {
            let g = load_graph(&graph)?;
            if gen.config.is_some() || gen.schedule.is_some() {
                check_graph(&g, &load_config(&gen)?)?;
            }
            println!(
                "ok: {} nodes, depth {}, {} tokens per level, D = {}",
                g.len(),
                g.depth(),
                g.tokens_per_level(),
                g.budget()
            );
            Ok(())
        }
        GraphCommand::Show { graph, table } => {
            let g = load_graph(&graph)?;
            println!(
                "D = {}  tokens_per_level = {}  nodes = {}",
                g.budget(),
                g.tokens_per_level(),
                g.len()
            );
            for n in g.scan_order() {
                let parents: Vec<String> = if g.level(n) == 1 {
                    vec!["root".into()]
                } else {
                    g.parents(n).iter().map(|p| format!("n{p}")).collect()
                };
                println!("n{n}  level {}  {}  <- {}", g.level(n), g.nodes()[n], parents.join(" "));
            }
            if let Some(t) = table {
                let table = crate::calibration::CandidateTable::parse(&read_text(&t)?, &t.display().to_string())?;
                for s in Strategy::ALL {
                    println!("score {s}: {}", score_graph(&table, &g, s));
                }
            }
            Ok(())
        }
    }
}

fn summarize(a: SummarizeArgs) -> CliResult<()> {
    println!(
        "{:<28} {:>9} {:>6} {:>9} {:>9} {:>9} {:>9}",
        "report", "schedule", "nodes", "van", "van_eot", "spec", "spec_eot"
    );
    let mut loaded = Vec::new();
    for path in &a.reports {
        let report: BenchReport =
            serde_json::from_str(&read_text(path)?).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let g = &report.aggregate;
        let name = path
            .file_name()
            .map_or_else(String::new, |n| n.to_string_lossy().into_owned());
        println!(
            "{:<28} {:>9} {:>6} {:>9.3} {:>9.3} {:>9.3} {:>9.3}",
            name,
            report.config.schedule.to_string(),
            report.graph_nodes,
            g.vanilla_speedup_all,
            g.vanilla_speedup_to_eot,
            g.speedup_all,
            g.speedup_to_eot
        );
        loaded.push((name, report));
    }
    for (name, report) in &loaded {
        let spec: Vec<RunReport> = report.runs.iter().map(|r| r.speculative.clone()).collect();
        println!("\n{name}: per block, up to EOT");
        println!("{:>6} {:>6} {:>9} {:>11}", "block", "runs", "speedup", "accept/call");
        for b in per_block_summary(&spec)? {
            println!(
                "{:>6} {:>6} {:>9.3} {:>11.3}",
                b.block, b.runs, b.mean_speedup, b.mean_acceptance_rate
            );
        }
        if let Some(t) = total_timings(&spec) {
            println!("{name}: stage time as % of model time");
            for (stage, ns) in t.stages() {
                if stage != "model" && t.model > 0 {
                    println!("  {stage:<14} {:>8.2}%", 100.0 * ns as f64 / t.model as f64);
                }
            }
        }
    }
    Ok(())
}

fn synth(a: SynthArgs) -> CliResult<()> {
    let spec = SyntheticSpec::default();
    std::fs::create_dir_all(&a.out_dir).map_err(|e| CliError::usage(format!("{}: {e}", a.out_dir.display())))?;
    let files = [
        ("corpus.txt", spec.corpus()),
        (
            "calib_prompts.txt",
            spec.prompts(a.prompts, a.prompt_len, CALIB_PROMPT_SEED),
        ),
        (
            "eval_prompts.txt",
            spec.prompts(a.prompts, a.prompt_len, EVAL_PROMPT_SEED),
        ),
    ];
    for (name, seqs) in files {
        write_text(&a.out_dir.join(name), &format_corpus(&seqs))?;
    }
    Ok(())
}
