use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mvembed::ablate::{ablate, default_grid, SUMMARY_HEADER};
use mvembed::checkpoint::{self, Checkpoint};
use mvembed::config::TrainConfig;
use mvembed::corpus::{load_corpus, tokenize, Corpus};
use mvembed::evalkit::{eval_sts, NnIndex, StsDataset};
use mvembed::model::{encode_sentences, EncodeMode, ModelEncoder};
use mvembed::synthetic::{self, SyntheticSpec};
use mvembed::train::train_to_dir;
use mvembed::wordvec::{load_vectors, WordTable};
use mvembed::{Error, Result};

#[derive(Parser)]
#[command(name = "mvembed", version, about = "Multi-view sentence representations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes diagnostics.csv and checkpoint/ under --out.
    Train(TrainArgs),
    /// Encode one sentence per line into whitespace-separated vectors.
    Encode(EncodeArgs),
    /// Score a tab-separated similarity file.
    EvalSts(EvalArgs),
    /// Nearest-neighbour queries against a sentence file.
    Nn(NnArgs),
    /// Train every view configuration and agreement kind.
    Ablate(TrainArgs),
    /// Summarise a checkpoint.
    Inspect {
        checkpoint: PathBuf,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// key=value configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    c: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// cross, full or within.
    #[arg(long)]
    agreement: Option<String>,
    /// fg, ff, gg, f or g.
    #[arg(long)]
    views: Option<String>,
    #[arg(long)]
    include_self: Option<String>,
    /// sum or mean.
    #[arg(long)]
    reduction: Option<String>,
    #[arg(long)]
    max_iters: Option<String>,
    #[arg(long)]
    log_every: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    vectors: Option<PathBuf>,
    /// Extra key=value overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Train on the built-in clustered corpus instead of files.
    #[arg(long)]
    synthetic: bool,
}

#[derive(Args)]
struct ModelArgs {
    /// Checkpoint directory.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Word vectors; defaults to the path recorded in the checkpoint.
    #[arg(long)]
    vectors: Option<PathBuf>,
}

#[derive(Args)]
struct EncodeArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// supervised or unsupervised.
    #[arg(long, default_value = "unsupervised")]
    mode: String,
    input: PathBuf,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    model: ModelArgs,
    tsv: Vec<PathBuf>,
}

#[derive(Args)]
struct NnArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// One candidate sentence per line.
    #[arg(long)]
    index: PathBuf,
    #[arg(long, default_value_t = 5)]
    k: usize,
    queries: Vec<String>,
}

fn build_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &args.config {
        Some(p) => TrainConfig::from_file(p)?,
        None => TrainConfig::default(),
    };
    let flags = [
        ("n", &args.n),
        ("d", &args.d),
        ("c", &args.c),
        ("lr", &args.lr),
        ("seed", &args.seed),
        ("agreement", &args.agreement),
        ("views", &args.views),
        ("include_self", &args.include_self),
        ("reduction", &args.reduction),
        ("max_iters", &args.max_iters),
        ("log_every", &args.log_every),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    for (key, path) in [("out", &args.out), ("corpus", &args.corpus), ("vectors", &args.vectors)] {
        if let Some(p) = path {
            cfg.set(key, &p.to_string_lossy())?;
        }
    }
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("expected KEY=VALUE, got {kv:?}")))?;
        cfg.set(k, v)?;
    }
    if args.synthetic {
        cfg.dim = SyntheticSpec::default().dim;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn training_data(cfg: &TrainConfig, synthetic: bool) -> Result<(Corpus, WordTable)> {
    if synthetic {
        return synthetic::corpus(&SyntheticSpec::default());
    }
    let corpus_path = cfg.corpus.as_ref().ok_or_else(|| Error::Usage("missing --corpus".into()))?;
    let vectors_path = cfg.vectors.as_ref().ok_or_else(|| Error::Usage("missing --vectors".into()))?;
    Ok((load_corpus(corpus_path, cfg.max_len)?, load_vectors(vectors_path, cfg.dim)?))
}

fn out_dir(cfg: &TrainConfig) -> Result<PathBuf> {
    cfg.out.clone().ok_or_else(|| Error::Usage("missing --out".into()))
}

fn train(args: &TrainArgs) -> Result<()> {
    let cfg = build_config(args)?;
    let (corpus, table) = training_data(&cfg, args.synthetic)?;
    let out = out_dir(&cfg)?;
    let report = train_to_dir(&cfg, &corpus, &table, &out)?;
    if let Some(last) = report.rows.last() {
        println!(
            "iteration {} loss {:.6} tau {:.6} cos_ff {:.4} cos_gg {:.4} cos_fg {:.4}",
            last.iter, last.loss, last.tau, last.ff, last.gg, last.fg
        );
    }
    println!("diagnostics: {}", report.csv.display());
    println!("checkpoint: {}", report.checkpoint.display());
    Ok(())
}

fn run_ablation(args: &TrainArgs) -> Result<()> {
    let cfg = build_config(args)?;
    let (corpus, table) = training_data(&cfg, args.synthetic)?;
    let out = out_dir(&cfg)?;
    let rows = ablate(&cfg, &default_grid(), &corpus, &table, &out)?;
    println!("{SUMMARY_HEADER}");
    for r in &rows {
        println!("{}", r.tsv_line());
    }
    Ok(())
}

fn load_model(args: &ModelArgs) -> Result<(Checkpoint, WordTable)> {
    let ckpt = checkpoint::load(&args.checkpoint)?;
    let path = args
        .vectors
        .clone()
        .or_else(|| ckpt.config.vectors.clone())
        .ok_or_else(|| Error::Usage("missing --vectors".into()))?;
    let table = load_vectors(&path, ckpt.model.dim)?;
    Ok((ckpt, table))
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_string).collect())
}

fn encode(args: &EncodeArgs) -> Result<()> {
    let mode: EncodeMode = args.mode.parse()?;
    let (ckpt, table) = load_model(&args.model)?;
    let sentences: Vec<Vec<String>> = read_lines(&args.input)?.iter().map(|l| tokenize(l)).collect();
    let rows = encode_sentences(&ckpt.model, &table, &sentences, mode, ckpt.config.seed)?;
    let mut text = String::new();
    for row in rows {
        let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        text.push_str(&cells.join(" "));
        text.push('\n');
    }
    match &args.out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn eval(args: &EvalArgs) -> Result<()> {
    if args.tsv.is_empty() {
        return Err(Error::Usage("no TSV files given".into()));
    }
    let (ckpt, table) = load_model(&args.model)?;
    let encoder = ModelEncoder {
        model: &ckpt.model,
        table: &table,
    };
    for path in &args.tsv {
        let dataset = StsDataset::load(path)?;
        let report = eval_sts(&encoder, &dataset, ckpt.config.seed)?;
        println!("{report}");
        println!("{}", report.record());
    }
    Ok(())
}

fn nn(args: &NnArgs) -> Result<()> {
    let (ckpt, table) = load_model(&args.model)?;
    let encoder = ModelEncoder {
        model: &ckpt.model,
        table: &table,
    };
    let texts: Vec<String> = read_lines(&args.index)?.into_iter().filter(|l| !l.trim().is_empty()).collect();
    let index = NnIndex::build(&encoder, &texts, ckpt.config.seed)?;
    for q in &args.queries {
        println!("query: {q}");
        for (text, score) in index.query(&encoder, q, args.k)? {
            println!("{score:.4}\t{text}");
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => train(&a),
        Command::Encode(a) => encode(&a),
        Command::EvalSts(a) => eval(&a),
        Command::Nn(a) => nn(&a),
        Command::Ablate(a) => run_ablation(&a),
        Command::Inspect { checkpoint: dir } => {
            print!("{}", checkpoint::inspect(&checkpoint::load(dir)?));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
