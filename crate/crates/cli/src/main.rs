use std::error::Error;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use nast_core::data::{load_checkpoint, save_checkpoint, synth_generate, Checkpoint, RunConfig, SynthConfig, SynthTask};
use nast_core::metrics::{evaluate_corpus, lexical_links, AlignmentLinks, CorpusEval};
use nast_core::stream::{stream_translate, CollapseMode, ReadWriteTrace};
use nast_core::train::{Objective, Trainer};
use nast_core::verify::{grad_suite, model_grad_check, oracle_suite, GradTarget};
use nast_core::vocab::RESERVED;
use nast_core::{NastModel, ParallelCorpus, TokenId, Vocab};

type CliResult<T = ()> = Result<T, Box<dyn Error>>;

#[derive(Parser)]
#[command(name = "nast", version, about = "Non-autoregressive streaming translation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic parallel corpus.
    Synth(SynthArgs),
    /// Train a model (stage 1: CTC, stage 2: NMLA with optional latency term).
    Train(TrainArgs),
    /// Simulate simultaneous translation of a source file.
    Translate(TranslateArgs),
    /// Score hypotheses with BLEU and, given traces or links, latency and alignment metrics.
    Evaluate(EvaluateArgs),
    /// Finite-difference checks of every loss gradient.
    Gradcheck(GradcheckArgs),
    /// Compare lattice computations against brute-force enumeration.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_parser = parse_task)]
    task: SynthTask,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    min_len: usize,
    #[arg(long, default_value_t = 20)]
    max_len: usize,
    #[arg(long, default_value_t = 32)]
    vocab_size: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Pairs held out (from the end) as `valid.*`.
    #[arg(long, default_value_t = 0)]
    valid: usize,
    #[arg(long)]
    out: PathBuf,
}

fn parse_task(s: &str) -> Result<SynthTask, String> {
    s.parse().map_err(|e: nast_core::NastError| e.to_string())
}

#[derive(Args)]
struct TrainArgs {
    /// Directory with vocab.txt, train.src, train.tgt and optionally valid.src, valid.tgt.
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    out: PathBuf,
    /// Config file with [model] and [train] sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Warm-start checkpoint; its model config replaces the file's [model] section.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Metrics log file (default: stdout).
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    stage: Option<u8>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    l_min: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr_peak: Option<f64>,
    #[arg(long)]
    warmup_steps: Option<u64>,
    #[arg(long)]
    batch_tokens: Option<usize>,
    #[arg(long)]
    eval_every: Option<u64>,
    #[arg(long)]
    log_every: Option<u64>,
    /// Decoder positions per source token (new models only).
    #[arg(long)]
    lambda: Option<usize>,
    /// Stop after an evaluation whose exact-match rate reaches this value.
    #[arg(long)]
    stop_at_exact: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Collapse {
    PaperLiteral,
    Exact,
}

impl From<Collapse> for CollapseMode {
    fn from(c: Collapse) -> Self {
        match c {
            Collapse::PaperLiteral => CollapseMode::PaperLiteral,
            Collapse::Exact => CollapseMode::Exact,
        }
    }
}

#[derive(Args)]
struct TranslateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Source sentences, one per line.
    #[arg(long)]
    input: PathBuf,
    /// Hypotheses, one per line.
    #[arg(long)]
    out: PathBuf,
    /// Read/write trace as JSON lines.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Hypothesis-to-source links by symbol identity (meaningful for synthetic tasks).
    #[arg(long)]
    links: Option<PathBuf>,
    /// Chunk wait at inference (default: the checkpoint's training value).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum, default_value = "paper-literal")]
    collapse: Collapse,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    hyp: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Trace written by `translate`; token ids refer to --vocab.
    #[arg(long, requires = "vocab")]
    trace: Option<PathBuf>,
    #[arg(long)]
    hyp_links: Option<PathBuf>,
    #[arg(long)]
    ref_links: Option<PathBuf>,
    /// Vocabulary the trace ids refer to.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Report file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Random instances per loss.
    #[arg(long, default_value_t = 50)]
    instances: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    /// Skip the checks through a tiny model.
    #[arg(long)]
    skip_model: bool,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 500)]
    instances: usize,
    #[arg(long, default_value_t = 8)]
    max_frames: usize,
    #[arg(long, default_value_t = 4)]
    max_vocab: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // Usage errors exit with 2; --help and --version with 0.
        Err(e) => e.exit(),
    };
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Translate(a) => translate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Oracle(a) => oracle(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn read_lines(path: &Path) -> CliResult<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(text.lines().map(str::to_string).collect())
}

fn write_file(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn synth(a: SynthArgs) -> CliResult<bool> {
    let (vocab, corpus) = synth_generate(&SynthConfig {
        task: a.task,
        n: a.n,
        min_len: a.min_len,
        max_len: a.max_len,
        vocab_size: a.vocab_size,
        seed: a.seed,
    })?;
    if a.valid >= a.n {
        return Err(format!("--valid {} leaves no training pairs out of {}", a.valid, a.n).into());
    }
    fs::create_dir_all(&a.out).map_err(|e| format!("{}: {e}", a.out.display()))?;
    vocab.save(&a.out.join("vocab.txt"))?;
    let (train, valid) = corpus.split_tail(a.valid);
    train.save(&a.out, "train", &vocab)?;
    if !valid.is_empty() {
        valid.save(&a.out, "valid", &vocab)?;
    }
    info!("wrote {} training and {} validation pairs to {}", train.len(), valid.len(), a.out.display());
    Ok(true)
}

fn load_split(dir: &Path, stem: &str, vocab: &Vocab, lambda: usize) -> CliResult<Option<ParallelCorpus>> {
    let (src, tgt) = (dir.join(format!("{stem}.src")), dir.join(format!("{stem}.tgt")));
    if !src.exists() && stem != "train" {
        return Ok(None);
    }
    let corpus = ParallelCorpus::load(&src, &tgt, None, vocab)?;
    let (corpus, dropped) = corpus.filter_feasible(lambda);
    if dropped > 0 {
        warn!("{stem}: dropped {dropped} pairs whose target cannot fit {lambda} positions per source token");
    }
    Ok(Some(corpus))
}

fn train(a: TrainArgs) -> CliResult<bool> {
    let mut run = match &a.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let t = &mut run.train;
    macro_rules! set {
        ($($flag:ident),*) => { $(if let Some(v) = a.$flag { t.$flag = v; })* };
    }
    set!(stage, steps, k, l_min, seed, lr_peak, warmup_steps, batch_tokens, eval_every, log_every);
    t.validate()?;
    let tcfg = run.train.clone();

    let vocab = Vocab::load(&a.data.join("vocab.txt"))?;
    let model = match &a.init {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            if ckpt.vocab != vocab {
                return Err(format!("{}: vocabulary differs from {}", path.display(), a.data.display()).into());
            }
            if a.lambda.is_some_and(|l| l != ckpt.model.config().lambda) {
                return Err("--lambda cannot change a warm-started model".into());
            }
            ckpt.model
        }
        None => {
            if tcfg.stage == 2 {
                warn!("stage 2 without --init starts from random parameters");
            }
            let mut mcfg = run.model.clone();
            mcfg.vocab_size = vocab.len();
            if let Some(l) = a.lambda {
                mcfg.lambda = l;
            }
            NastModel::new(mcfg, tcfg.seed)?
        }
    };
    let model = model.with_k(tcfg.k);
    let lambda = model.config().lambda;
    let train = load_split(&a.data, "train", &vocab, lambda)?.expect("train split is required");
    let valid = load_split(&a.data, "valid", &vocab, lambda)?;
    info!(
        "training stage {} for {} steps on {} pairs ({:?})",
        tcfg.stage,
        tcfg.steps,
        train.len(),
        objective_name(&tcfg)
    );

    let mut log: Box<dyn Write> = match &a.log {
        Some(path) => Box::new(fs::File::create(path).map_err(|e| format!("{}: {e}", path.display()))?),
        None => Box::new(io::stdout()),
    };
    let mut trainer = Trainer::new(model, tcfg.clone())?;
    let threshold = a.stop_at_exact;
    let summary = trainer.run(&train, valid.as_ref(), &mut log, |ev| {
        threshold.is_some_and(|x| ev.exact_match >= x)
    })?;
    log.flush()?;
    if let Some(rise) = summary.warm_start_rise {
        info!("validation CTC loss changed by {rise:+.4} after warm start");
    }
    info!("finished {} steps in {:.1}s", summary.steps, summary.seconds);
    save_checkpoint(
        &a.out,
        &Checkpoint {
            model: trainer.into_model(),
            vocab,
            train: Some(tcfg),
        },
    )?;
    Ok(true)
}

fn objective_name(t: &nast_core::TrainConfig) -> &'static str {
    match (t.stage, t.latency_active()) {
        (1, _) => "ctc",
        (_, true) => "nmla+latency",
        _ => "nmla",
    }
}

fn translate(a: TranslateArgs) -> CliResult<bool> {
    let ckpt = load_checkpoint(&a.model)?;
    let k = a.k.unwrap_or(ckpt.model.config().k);
    let mode = CollapseMode::from(a.collapse);
    let mut hyps = String::new();
    let mut trace_text = String::new();
    let mut links_text = String::new();
    for (i, line) in read_lines(&a.input)?.iter().enumerate() {
        let source = ckpt.vocab.encode(line);
        if source.is_empty() {
            return Err(format!("{}:{}: empty source sentence", a.input.display(), i + 1).into());
        }
        let (out, trace) =
            stream_translate(&ckpt.model, &source, k, mode).map_err(|e| format!("{}:{}: {e}", a.input.display(), i + 1))?;
        hyps.push_str(&ckpt.vocab.decode(&out));
        hyps.push('\n');
        trace.write_jsonl(i, &mut trace_text);
        links_text.push_str(&lexical_links(&out, &source).to_string());
        links_text.push('\n');
    }
    write_file(&a.out, &hyps)?;
    if let Some(p) = &a.trace {
        write_file(p, &trace_text)?;
    }
    if let Some(p) = &a.links {
        write_file(p, &links_text)?;
    }
    Ok(true)
}

fn read_links(path: &Path) -> CliResult<Vec<AlignmentLinks>> {
    read_lines(path)?
        .iter()
        .enumerate()
        .map(|(i, l)| AlignmentLinks::parse(l).map_err(|e| format!("{}:{}: {e}", path.display(), i + 1).into()))
        .collect()
}

fn evaluate(a: EvaluateArgs) -> CliResult<bool> {
    let hyp_lines = read_lines(&a.hyp)?;
    let ref_lines = read_lines(&a.reference)?;
    if hyp_lines.len() != ref_lines.len() {
        return Err(format!("{} hypotheses for {} references", hyp_lines.len(), ref_lines.len()).into());
    }
    // Known ids first so trace tokens keep their meaning; unseen words are appended.
    let known: Vec<String> = match &a.vocab {
        Some(p) => Vocab::load(p)?.corpus_tokens().map(str::to_string).collect(),
        None => Vec::new(),
    };
    let words = hyp_lines
        .iter()
        .chain(&ref_lines)
        .flat_map(|l| l.split_whitespace())
        .filter(|w| !RESERVED.contains(w));
    let vocab = Vocab::from_tokens(known.iter().map(String::as_str).chain(words))?;
    let encode = |lines: &[String]| -> Vec<Vec<TokenId>> { lines.iter().map(|l| vocab.encode(l)).collect() };
    let hyps = encode(&hyp_lines);
    let refs = encode(&ref_lines);
    let traces = a
        .trace
        .as_deref()
        .map(|p| -> CliResult<Vec<ReadWriteTrace>> { Ok(ReadWriteTrace::parse_jsonl(&fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?)?) })
        .transpose()?;
    let hyp_links = a.hyp_links.as_deref().map(read_links).transpose()?;
    let ref_links = a.ref_links.as_deref().map(read_links).transpose()?;
    for (name, n) in [
        ("trace", traces.as_ref().map(Vec::len)),
        ("hypothesis links", hyp_links.as_ref().map(Vec::len)),
        ("reference links", ref_links.as_ref().map(Vec::len)),
    ] {
        if let Some(n) = n.filter(|&n| n != hyps.len()) {
            return Err(format!("{name} cover {n} sentences, hypotheses {}", hyps.len()).into());
        }
    }
    let report = evaluate_corpus(&CorpusEval {
        hypotheses: &hyps,
        references: &refs,
        traces: traces.as_deref(),
        hypothesis_links: hyp_links.as_deref(),
        reference_links: ref_links.as_deref(),
    })?;
    let text = match a.format {
        Format::Text => report.to_text(),
        Format::Csv => report.to_csv(),
    };
    match &a.out {
        Some(p) => write_file(p, &text)?,
        None => print!("{text}"),
    }
    Ok(true)
}

fn gradcheck(a: GradcheckArgs) -> CliResult<bool> {
    let mut ok = true;
    for target in [GradTarget::StageOne, GradTarget::Nmla, GradTarget::Latency] {
        let r = grad_suite(target, a.instances, a.seed, a.tolerance)?;
        println!("{r}");
        ok &= r.passed();
    }
    if !a.skip_model {
        let checks = [
            ("model stage-1 loss k=0", Objective::Ctc { smoothing: 0.01 }, 0),
            ("model nmla+latency k=0", Objective::Nmla { latency_floor: Some(0.0) }, 0),
            ("model nmla k=2", Objective::Nmla { latency_floor: None }, 2),
        ];
        for (name, objective, k) in checks {
            let r = model_grad_check(objective, k, a.seed, a.tolerance)?;
            println!("{name}: {r}");
            ok &= r.passed;
        }
    }
    Ok(ok)
}

fn oracle(a: OracleArgs) -> CliResult<bool> {
    let r = oracle_suite(a.instances, a.max_frames, a.max_vocab, a.seed, a.tolerance)?;
    println!("{r}");
    Ok(r.passed())
}
