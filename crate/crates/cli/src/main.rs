use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tifre::eval::{evaluate, EvalConfig, Planted, ScenarioSpec};
use tifre::fmm::MergeMode;
use tifre::pipeline::{inspect, run_tifre, BackendConfig, LlmEndpoint, RunConfig};
use tifre::prompt::{LlmConfig, Question};
use tifre::video::{parse_working_res, StrategyKind, DEFAULT_DECODER, MANIFEST_FILE};

#[derive(Parser)]
#[command(name = "tifre", version, about = "Question-guided key-frame reduction for video QA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select and merge key frames for one video and question.
    Reduce(Box<ReduceArgs>),
    /// Compare selection strategies on synthetic planted-relevance videos.
    Eval(EvalArgs),
    /// Render a contact sheet from an existing run directory.
    Inspect(InspectArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    Tifre,
    FixedFps,
}

impl From<Strategy> for StrategyKind {
    fn from(s: Strategy) -> Self {
        match s {
            Strategy::Tifre => StrategyKind::Tifre,
            Strategy::FixedFps => StrategyKind::FixedFps,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    PaperLiteral,
    Normalized,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Mock,
    Remote,
    LocalModel,
}

#[derive(Args)]
struct ReduceArgs {
    /// Video file or directory of frame images.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long)]
    question: Option<String>,
    /// Answer option; repeat for each.
    #[arg(long = "option")]
    options: Vec<String>,
    /// Use these prompts instead of rewriting the question.
    #[arg(long, num_args = 1..)]
    prompts: Vec<String>,

    /// Maximum number of output frames (k).
    #[arg(long, default_value_t = 10)]
    max_frames: usize,
    /// Drop key frames scoring below this fraction of the best score [default: 0.8; 0 disables].
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, value_enum, default_value = "tifre")]
    strategy: Strategy,
    #[arg(long, value_enum, default_value = "normalized")]
    merge_mode: Mode,

    #[arg(long, default_value_t = 1.0)]
    fps: f64,
    #[arg(long, default_value = "224x224")]
    working_res: String,
    #[arg(long, default_value = DEFAULT_DECODER)]
    decoder: PathBuf,

    #[arg(long, value_enum, default_value = "mock")]
    backend: Backend,
    /// Embedding dimension of the backend.
    #[arg(long, default_value_t = 64)]
    embed_dim: usize,
    /// Seed for the mock backend.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON file of planted vectors for the mock backend.
    #[arg(long)]
    mock_plant: Option<PathBuf>,
    /// Remote embedding service URL.
    #[arg(long)]
    embed_url: Option<String>,
    #[arg(long)]
    image_model: Option<PathBuf>,
    #[arg(long)]
    text_model: Option<PathBuf>,
    #[arg(long)]
    tokenizer: Option<PathBuf>,
    /// Preprocessing descriptor shipped with the image model.
    #[arg(long)]
    preprocess: Option<PathBuf>,

    /// OpenAI-compatible chat completions URL. The API key is read from TIFRE_LLM_API_KEY.
    #[arg(long, env = "TIFRE_LLM_ENDPOINT")]
    llm_endpoint: Option<String>,
    #[arg(long, env = "TIFRE_LLM_MODEL")]
    llm_model: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    llm_temperature: f64,
    /// Replay a recorded LLM exchange instead of calling the endpoint.
    #[arg(long)]
    llm_transcript: Option<PathBuf>,
    /// Save the live LLM exchange to this file.
    #[arg(long)]
    llm_record: Option<PathBuf>,
    /// Fail instead of falling back to rule-based prompts when the LLM fails.
    #[arg(long)]
    no_fallback: bool,

    #[arg(long)]
    contact_sheet: bool,
    /// Embedding worker threads (0 = one per CPU).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    /// Do not read or write the frame embedding cache.
    #[arg(long)]
    no_cache: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, default_value_t = 60)]
    n: usize,
    /// Number of planted ground-truth frames per scenario.
    #[arg(long, default_value_t = 5)]
    planted: usize,
    /// Fixed planted positions (overrides --planted).
    #[arg(long, value_delimiter = ',')]
    planted_indices: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "4,5,6,7,8,10,11,13,15")]
    k: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    seeds: usize,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    /// Prompts per scenario.
    #[arg(long, default_value_t = 2)]
    prompt_count: usize,
    #[arg(long, default_value_t = 0.0)]
    threshold: f64,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "tifre,fixed-fps")]
    strategies: Vec<Strategy>,
    /// Directory for report.csv and report.txt.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    /// Run directory containing manifest.json.
    run: PathBuf,
    /// Output image path [default: <run>/contact_sheet.png].
    #[arg(long)]
    out: Option<PathBuf>,
}

fn config_error(msg: impl Into<String>) -> (i32, String) {
    (2, msg.into())
}

fn reduce_config(a: &ReduceArgs) -> Result<RunConfig, (i32, String)> {
    let mut cfg = RunConfig::new(&a.input, &a.out);
    cfg.question = match &a.question {
        Some(q) => Some(Question::new(q, a.options.clone()).map_err(|e| config_error(e.to_string()))?),
        None => None,
    };
    cfg.prompts = (!a.prompts.is_empty()).then(|| a.prompts.clone());
    cfg.max_frames = a.max_frames;
    cfg.threshold = a.threshold;
    cfg.strategy = a.strategy.into();
    cfg.merge_mode = match a.merge_mode {
        Mode::PaperLiteral => MergeMode::PaperLiteral,
        Mode::Normalized => MergeMode::Normalized,
    };
    cfg.fps = a.fps;
    cfg.working_res = parse_working_res(&a.working_res).map_err(|e| config_error(e.to_string()))?;
    cfg.decoder = a.decoder.clone();
    cfg.seed = a.seed;
    cfg.backend = match a.backend {
        Backend::Mock => BackendConfig::Mock {
            dim: a.embed_dim,
            planted: a.mock_plant.clone(),
        },
        Backend::Remote => BackendConfig::Remote {
            url: a
                .embed_url
                .clone()
                .ok_or_else(|| config_error("--backend remote needs --embed-url"))?,
            dim: a.embed_dim,
        },
        Backend::LocalModel => {
            let need = |p: &Option<PathBuf>, flag: &str| {
                p.clone()
                    .ok_or_else(|| config_error(format!("--backend local-model needs {flag}")))
            };
            BackendConfig::LocalModel {
                image_model: need(&a.image_model, "--image-model")?,
                text_model: need(&a.text_model, "--text-model")?,
                tokenizer: need(&a.tokenizer, "--tokenizer")?,
                preprocess: need(&a.preprocess, "--preprocess")?,
                dim: a.embed_dim,
            }
        }
    };
    cfg.llm = match (&a.llm_endpoint, &a.llm_model) {
        (Some(url), Some(model)) => Some(LlmEndpoint {
            url: url.clone(),
            config: LlmConfig {
                temperature: a.llm_temperature,
                ..LlmConfig::new(model.clone())
            },
        }),
        (Some(_), None) => return Err(config_error("--llm-endpoint needs --llm-model")),
        (None, _) => None,
    };
    cfg.llm_transcript = a.llm_transcript.clone();
    cfg.llm_record = a.llm_record.clone();
    cfg.allow_fallback = !a.no_fallback;
    cfg.contact_sheet = a.contact_sheet;
    cfg.workers = a.workers;
    cfg.batch_size = a.batch_size;
    cfg.use_cache = !a.no_cache;
    Ok(cfg)
}

fn reduce(a: &ReduceArgs) -> Result<(), (i32, String)> {
    let cfg = reduce_config(a)?;
    let manifest = run_tifre(&cfg).map_err(|e| (e.exit_code(), e.to_string()))?;
    if let Some(p) = &manifest.prompts {
        println!("prompts ({:?}):", p.source());
        for prompt in p.prompts() {
            println!("  {prompt}");
        }
    }
    if let Some(note) = &manifest.prompt_note {
        println!("note: {note}");
    }
    println!(
        "kept {} of {} frames: {:?}",
        manifest.key_indices.len(),
        manifest.n_frames,
        manifest.key_indices
    );
    println!("manifest: {}", cfg.out_dir.join(MANIFEST_FILE).display());
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<(), (i32, String)> {
    let cfg = EvalConfig {
        scenario: ScenarioSpec {
            n: a.n,
            planted: if a.planted_indices.is_empty() {
                Planted::Count(a.planted)
            } else {
                Planted::Indices(a.planted_indices.clone())
            },
            dim: a.dim,
            prompts: a.prompt_count,
            sigma: a.sigma,
            seed: a.first_seed,
        },
        seeds: a.seeds,
        k_values: a.k.clone(),
        strategies: a.strategies.iter().map(|&s| s.into()).collect(),
        threshold: a.threshold,
    };
    let report = evaluate(&cfg).map_err(|e| config_error(e.to_string()))?;
    let table = report.to_table();
    print!("{table}");
    if let Some(dir) = &a.out {
        let io = |e: std::io::Error| (1, format!("{}: {e}", dir.display()));
        fs::create_dir_all(dir).map_err(io)?;
        fs::write(dir.join("report.csv"), report.to_csv()).map_err(io)?;
        fs::write(dir.join("report.txt"), &table).map_err(io)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Reduce(a) => reduce(a),
        Command::Eval(a) => eval(a),
        Command::Inspect(a) => inspect(&a.run, a.out.as_deref())
            .map(|p| println!("{}", p.display()))
            .map_err(|e| (1, e.to_string())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code as u8)
        }
    }
}
