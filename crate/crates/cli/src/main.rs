//! `parley`: tokenizer training, pre-training, fine-tuning, evaluation,
//! generation, interactive chat and the HTTP service.
//!
//! Results go to stdout as JSON, logs to stderr. Exit status is 0 on success,
//! 1 on a runtime failure and 2 on a usage error or missing input file.

mod overlay;

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use parley::checkpoint::Checkpoint;
use parley::data::{load_dataset, save_dataset};
use parley::decoder::{self, DecodeParams};
use parley::evaluator::{self, EvalOptions, HITS_DISTRACTORS, STOPWORDS};
use parley::input::{DialogExample, Speaker, Utterance};
use parley::model::{ModelConfig, ModelParams};
use parley::synthetic::{gen_synthetic, SyntheticConfig};
use parley::tokenizer::{train_bpe, BpeModel};
use parley::trainer::{self, StepReport, TrainConfig, Trainer};
use parley_service::{ServeConfig, DEFAULT_PORT};

#[derive(Parser)]
#[command(name = "parley", version, about = "Persona-conditioned dialogue model toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a templated synthetic dataset.
    GenData(GenDataArgs),
    /// Learn BPE merges from a text corpus and/or a dataset.
    TrainBpe(TrainBpeArgs),
    /// Language-model pre-training on a plain-text corpus.
    Pretrain(PretrainArgs),
    /// Multi-task fine-tuning on a dialog dataset.
    Finetune(FinetuneArgs),
    /// Perplexity, Hits@1 and F1 on a dataset.
    Eval(EvalArgs),
    /// Ranked replies for one context.
    Generate(GenerateArgs),
    /// Terminal conversation with a fixed persona.
    Chat(ChatArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct ConfigArg {
    /// JSON file of flag values; explicit flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct GenDataArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    n_dialogs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct TrainBpeArgs {
    /// Plain text, one sentence per line.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Dialog dataset; persona sentences and turns are used.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    merges: usize,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    steps: usize,
    #[arg(long, default_value_t = 6.25e-5)]
    lr: f64,
    #[arg(long, default_value_t = 4)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    dropout: f64,
    /// Append one JSON line per step to this file.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct PretrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Tokenizer for a fresh model; ignored with --checkpoint.
    #[arg(long)]
    tokenizer: Option<PathBuf>,
    /// Continue from this checkpoint.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Tokens per training window.
    #[arg(long, default_value_t = 64)]
    window: usize,
    #[command(flatten)]
    train: TrainArgs,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct FinetuneArgs {
    #[arg(long)]
    data: PathBuf,
    /// Tokenizer for a fresh model; ignored with --checkpoint.
    #[arg(long)]
    tokenizer: Option<PathBuf>,
    /// Start from this checkpoint (for example a pre-trained one).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    n_distractors: usize,
    #[arg(long, default_value_t = 2.0)]
    lm_coef: f64,
    #[arg(long, default_value_t = 1.0)]
    cls_coef: f64,
    #[command(flatten)]
    train: TrainArgs,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long, default_value_t = 4)]
    beam_size: usize,
    #[arg(long, default_value_t = 40)]
    top_k: usize,
    #[arg(long, default_value_t = 0.8)]
    temperature: f64,
    /// Weight of the classifier score in the final ranking.
    #[arg(long, default_value_t = 0.3)]
    lambda: f64,
    /// Block repeated n-grams of this length; 0 disables.
    #[arg(long, default_value_t = 3)]
    ngram_block: usize,
    #[arg(long, default_value_t = 20)]
    max_new_tokens: usize,
}

impl DecodeArgs {
    fn params(&self, seed: u64) -> DecodeParams {
        DecodeParams {
            beam_size: self.beam_size,
            top_k: self.top_k,
            temperature: self.temperature,
            max_new_tokens: self.max_new_tokens,
            ngram_block_n: (self.ngram_block > 0).then_some(self.ngram_block),
            rank_lambda: self.lambda,
            seed,
            ..DecodeParams::default()
        }
    }
}

#[derive(Args)]
#[command(args_override_self = true)]
struct EvalArgs {
    #[arg(long, required_unless_present = "print_stopwords")]
    data: Option<PathBuf>,
    #[arg(long, required_unless_present = "print_stopwords")]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = HITS_DISTRACTORS)]
    n_distractors: usize,
    /// Print the F1 stopword list and exit.
    #[arg(long)]
    print_stopwords: bool,
    #[command(flatten)]
    decode: DecodeArgs,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct GenerateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Persona sentences, one per line.
    #[arg(long)]
    persona_file: Option<PathBuf>,
    /// Conversation so far, oldest first; the last entry is the partner's.
    #[arg(long)]
    history: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    decode: DecodeArgs,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct ChatArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    persona_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    decode: DecodeArgs,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct ServeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = DEFAULT_PORT)]
    port: u16,
    /// Allowed browser origin, e.g. http://localhost:5173.
    #[arg(long)]
    cors_origin: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    decode: DecodeArgs,
    #[command(flatten)]
    config: ConfigArg,
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn require_file(path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("no such file: {}", path.display())))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let argv: Vec<OsString> = std::env::args_os().collect();
    let overlay = match overlay::config_path(&argv) {
        None => overlay::Overlay::default(),
        Some(p) if !p.is_file() => return usage(&format!("no such file: {}", p.display())),
        Some(p) => match overlay::read(&p) {
            Ok(o) => o,
            Err(e) => return usage(&e),
        },
    };
    let cli = match Cli::try_parse_from(overlay::splice(argv, &overlay)) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command, overlay.model) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => usage(&msg),
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn usage(msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn run(command: Command, model: Option<Value>) -> Result<(), Failure> {
    match command {
        Command::GenData(a) => gen_data(a),
        Command::TrainBpe(a) => train_bpe_cmd(a),
        Command::Pretrain(a) => pretrain(a, model),
        Command::Finetune(a) => finetune(a, model),
        Command::Eval(a) => eval(a),
        Command::Generate(a) => generate(a),
        Command::Chat(a) => chat(a),
        Command::Serve(a) => serve(a),
    }
}

fn gen_data(a: GenDataArgs) -> Result<(), Failure> {
    let ds = gen_synthetic(a.seed, &SyntheticConfig::new(a.n_dialogs)).context("generating dataset")?;
    save_dataset(&ds, &a.out).context("writing dataset")?;
    log::info!("wrote {} dialogs to {}", ds.len(), a.out.display());
    Ok(())
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect())
}

fn train_bpe_cmd(a: TrainBpeArgs) -> Result<(), Failure> {
    if a.corpus.is_none() && a.data.is_none() {
        return Err(Failure::Usage("train-bpe needs --corpus and/or --data".into()));
    }
    let mut lines = Vec::new();
    if let Some(p) = &a.corpus {
        require_file(p)?;
        lines.extend(read_lines(p)?);
    }
    if let Some(p) = &a.data {
        require_file(p)?;
        lines.extend(load_dataset(p).context("loading dataset")?.texts());
    }
    let tok = train_bpe(&lines, a.merges).context("training tokenizer")?;
    tok.save(&a.out).context("writing tokenizer")?;
    log::info!("{} merges, vocabulary {} -> {}", tok.merges().len(), tok.vocab_size(), a.out.display());
    Ok(())
}

/// Model configuration: `desk` sized to the tokenizer, overlaid with the
/// config file's `model` object (which may name a `preset`).
fn model_config(vocab_size: usize, model: Option<Value>) -> Result<ModelConfig, Failure> {
    let Some(Value::Object(mut fields)) = model else {
        return match model {
            None => Ok(ModelConfig::desk(vocab_size)),
            Some(_) => Err(Failure::Usage("config key model must be an object".into())),
        };
    };
    let base = match fields.remove("preset").as_ref().and_then(Value::as_str) {
        None | Some("desk") => ModelConfig::desk(vocab_size),
        Some("tiny") => ModelConfig::tiny(vocab_size),
        Some("full") => ModelConfig::full(vocab_size),
        Some(other) => return Err(Failure::Usage(format!("unknown model preset {other}"))),
    };
    let mut value = serde_json::to_value(base).expect("config serializes");
    let obj = value.as_object_mut().expect("object");
    for (k, v) in fields {
        if !obj.contains_key(&k) {
            return Err(Failure::Usage(format!("unknown model field {k}")));
        }
        obj.insert(k, v);
    }
    let cfg: ModelConfig = serde_json::from_value(value).map_err(|e| Failure::Usage(format!("model config: {e}")))?;
    if cfg.vocab_size != vocab_size {
        return Err(Failure::Usage(format!(
            "model vocab_size {} differs from the tokenizer's {vocab_size}",
            cfg.vocab_size
        )));
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

fn starting_point(
    checkpoint: &Option<PathBuf>,
    tokenizer: &Option<PathBuf>,
    model: Option<Value>,
    seed: u64,
) -> Result<Checkpoint<f32>, Failure> {
    if let Some(p) = checkpoint {
        require_file(p)?;
        return Ok(Checkpoint::load(p).with_context(|| format!("loading {}", p.display()))?);
    }
    let Some(tp) = tokenizer else {
        return Err(Failure::Usage("need --checkpoint or --tokenizer".into()));
    };
    require_file(tp)?;
    let tok = BpeModel::load(tp).context("loading tokenizer")?;
    let cfg = model_config(tok.vocab_size(), model)?;
    let params = ModelParams::init(&cfg, seed).context("initializing model")?;
    Ok(Checkpoint::new(params, tok))
}

struct MetricsLog(Option<fs::File>);

impl MetricsLog {
    fn open(path: &Option<PathBuf>) -> Result<Self> {
        Ok(Self(match path {
            Some(p) => Some(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
            None => None,
        }))
    }

    fn record(&mut self, r: &StepReport) {
        if r.step.is_multiple_of(50) {
            log::info!("step {} lm {:.4} cls {:?} total {:.4}", r.step, r.lm_loss, r.cls_loss, r.total_loss);
        }
        if let Some(f) = &mut self.0 {
            if let Err(e) = writeln!(f, "{}", r.to_json_line()) {
                log::warn!("metrics write failed: {e}");
            }
        }
    }
}

fn train_config(t: &TrainArgs) -> TrainConfig {
    TrainConfig {
        lr: t.lr,
        batch_size: t.batch_size,
        total_steps: t.steps,
        seed: t.seed,
        dropout: t.dropout,
        ..TrainConfig::default()
    }
}

fn pretrain(a: PretrainArgs, model: Option<Value>) -> Result<(), Failure> {
    require_file(&a.corpus)?;
    let mut ck = starting_point(&a.checkpoint, &a.tokenizer, model, a.train.seed)?;
    let corpus = read_lines(&a.corpus)?;
    let cfg = train_config(&a.train);
    let mut log = MetricsLog::open(&a.train.metrics)?;
    trainer::pretrain_lm(&mut ck.params, &ck.tokenizer, &corpus, &cfg, a.window, |r| log.record(r))
        .context("pre-training")?;
    ck.step += cfg.total_steps;
    ck.optimizer = None;
    ck.save(&a.out).context("writing checkpoint")?;
    log::info!("saved {}", a.out.display());
    Ok(())
}

fn finetune(a: FinetuneArgs, model: Option<Value>) -> Result<(), Failure> {
    require_file(&a.data)?;
    let ck = starting_point(&a.checkpoint, &a.tokenizer, model, a.train.seed)?;
    let data = load_dataset(&a.data).context("loading dataset")?;
    let cfg = TrainConfig {
        n_distractors: a.n_distractors,
        lm_coef: a.lm_coef,
        cls_coef: a.cls_coef,
        ..train_config(&a.train)
    };
    let start_step = ck.step;
    let tok = ck.tokenizer;
    let mut t = Trainer::new(&tok, ck.params, &data, cfg).context("setting up fine-tuning")?;
    let mut log = MetricsLog::open(&a.train.metrics)?;
    t.run(|r| log.record(r)).context("fine-tuning")?;
    let steps = t.step_index();
    let out = Checkpoint { params: t.params, tokenizer: tok.clone(), step: start_step + steps, optimizer: Some(t.state) };
    out.save(&a.out).context("writing checkpoint")?;
    log::info!("saved {}", a.out.display());
    Ok(())
}

fn load_model(path: &Path) -> Result<Checkpoint<f32>, Failure> {
    require_file(path)?;
    Ok(Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?)
}

fn eval(a: EvalArgs) -> Result<(), Failure> {
    if a.print_stopwords {
        println!("{}", serde_json::to_string(&STOPWORDS[..]).expect("list serializes"));
        return Ok(());
    }
    let (data_path, ck_path) = (a.data.expect("required by clap"), a.checkpoint.expect("required by clap"));
    require_file(&data_path)?;
    let ck = load_model(&ck_path)?;
    let data = load_dataset(&data_path).context("loading dataset")?;
    let opts = EvalOptions { seed: a.seed, n_distractors: a.n_distractors, decode: a.decode.params(a.seed) };
    opts.decode.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let report = evaluator::evaluate(&ck.params, &ck.tokenizer, &data, &opts).context("evaluating")?;
    println!("{}", report.to_json());
    Ok(())
}

fn read_persona(path: &Option<PathBuf>) -> Result<Vec<String>, Failure> {
    match path {
        None => Ok(Vec::new()),
        Some(p) => {
            require_file(p)?;
            Ok(read_lines(p)?)
        }
    }
}

/// Assigns speakers backwards from the last turn, which is the partner's.
fn history_turns(texts: &[String]) -> Vec<Utterance> {
    let n = texts.len();
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| Utterance::new(if (n - i) % 2 == 1 { Speaker::One } else { Speaker::Two }, t.clone()))
        .collect()
}

fn generate(a: GenerateArgs) -> Result<(), Failure> {
    let ck = load_model(&a.checkpoint)?;
    let persona = read_persona(&a.persona_file)?;
    let dp = a.decode.params(a.seed);
    dp.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let example = DialogExample { persona, history: history_turns(&a.history), reply: String::new(), candidates: Vec::new() };
    let gens = decoder::generate(&ck.params, &ck.tokenizer, &example, &dp).context("generating")?;
    println!("{}", serde_json::to_string(&gens).expect("beams serialize"));
    Ok(())
}

fn chat(a: ChatArgs) -> Result<(), Failure> {
    let ck = load_model(&a.checkpoint)?;
    let persona = read_persona(&a.persona_file)?;
    let base = a.decode.params(a.seed);
    base.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let mut history: Vec<Utterance> = Vec::new();
    let stdin = io::stdin();
    let mut out = io::stdout();
    for (turn, line) in stdin.lock().lines().enumerate() {
        let line = line.context("reading stdin")?;
        if line.trim().is_empty() {
            continue;
        }
        history.push(Utterance::new(Speaker::One, line.trim()));
        let example = DialogExample { persona: persona.clone(), history: history.clone(), reply: String::new(), candidates: Vec::new() };
        let dp = DecodeParams { seed: base.seed.wrapping_add(turn as u64), ..base };
        let reply = match decoder::generate(&ck.params, &ck.tokenizer, &example, &dp) {
            Ok(g) => g.into_iter().next().map(|g| g.text).unwrap_or_default(),
            Err(e) => {
                log::warn!("no reply: {e}");
                String::new()
            }
        };
        writeln!(out, "{reply}").context("writing stdout")?;
        out.flush().context("writing stdout")?;
        history.push(Utterance::new(Speaker::Two, reply));
        if history.last().is_some_and(|u| u.text.is_empty()) {
            history.truncate(history.len() - 2);
        }
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<(), Failure> {
    require_file(&a.checkpoint)?;
    let defaults = a.decode.params(a.seed);
    defaults.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let cfg = ServeConfig {
        checkpoint: a.checkpoint,
        addr: SocketAddr::from(([127, 0, 0, 1], a.port)),
        cors_origin: a.cors_origin,
        defaults,
    };
    let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
    rt.block_on(parley_service::serve(cfg)).context("serving")?;
    Ok(())
}
