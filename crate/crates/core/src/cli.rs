//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or file error, 2 capacity exceeded,
//! 3 backend error, 4 the token sequence does not decode under the file's
//! model and parameters.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::coding::{BitMessage, CodingError};
use crate::metrics::{self, MetricsError, SweepConfig};
use crate::models::replay::write_replay;
use crate::models::{bridge, open_session, BackendSpec, Conditioning, ModelError, DEFAULT_MAX_LEN};
use crate::pipeline::{self, CandidateRule, PipelineError, StegoParams};
use crate::pooling::{EosPolicy, PoolError, PoolParams};
use crate::stegofile::{StegoFile, StegoFileError};

#[derive(Debug, Parser)]
#[command(
    name = "lingsteg",
    version,
    about = "Hide bits in generated token sequences"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Hide a hex payload and write a stego file.
    Hide(HideArgs),
    /// Recover the payload from a stego file.
    Extract {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Run a threshold grid and write mean bpw and perplexity as CSV.
    Sweep(SweepArgs),
    /// Perplexity of a stego file's tokens under its own model.
    Ppl {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Serve a built-in backend over the bridge protocol on stdin/stdout.
    Serve {
        #[arg(long)]
        backend: String,
    },
    /// Dump the distributions behind a stego file's tokens as a replay file.
    Record {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EosArg {
    Suppress,
    Strict,
}

impl From<EosArg> for EosPolicy {
    fn from(a: EosArg) -> Self {
        match a {
            EosArg::Suppress => EosPolicy::Suppress,
            EosArg::Strict => EosPolicy::Strict,
        }
    }
}

#[derive(Debug, Args)]
struct HideArgs {
    #[arg(long)]
    backend: String,
    /// Conditioning text shared with the receiver.
    #[arg(long, default_value = "")]
    cond: String,
    #[arg(long, required_unless_present = "top_k")]
    ta: Option<f64>,
    #[arg(long, required_unless_present = "top_k")]
    tr: Option<f64>,
    #[arg(long)]
    msg_hex: String,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    max_len: usize,
    /// Replaces the seed of a synthetic backend.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "suppress")]
    eos_policy: EosArg,
    #[arg(long)]
    max_pool_size: Option<usize>,
    /// Use a fixed-size pool of the k most likely tokens instead of thresholds.
    #[arg(long, conflicts_with_all = ["ta", "tr", "max_pool_size"])]
    top_k: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    backend: String,
    /// Comma-separated absolute thresholds.
    #[arg(long)]
    ta_list: String,
    /// Comma-separated relative thresholds.
    #[arg(long)]
    tr_list: String,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 32)]
    payload_bits: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    max_len: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error(transparent)]
    File(#[from] StegoFileError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl CliError {
    fn io(path: &Path, source: io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Io { .. } => 1,
            Self::File(StegoFileError::Model(e)) | Self::Model(e) => model_code(e),
            Self::File(_) => 1,
            Self::Pipeline(e) => pipeline_code(e),
            Self::Metrics(e) => match e {
                MetricsError::ZeroProbabilityToken { .. } => 4,
                MetricsError::EmptyOutput | MetricsError::InvalidSweep(_) => 1,
                MetricsError::Model(e) => model_code(e),
                MetricsError::Pipeline(e) => pipeline_code(e),
                MetricsError::Pool(e) => pool_code(e),
            },
        }
    }
}

fn model_code(e: &ModelError) -> i32 {
    match e {
        // The tokens do not fit the model they claim to come from.
        ModelError::TokenOutOfRange(_)
        | ModelError::ReplayExhausted { .. }
        | ModelError::StepLimitExceeded { .. } => 4,
        _ => 3,
    }
}

fn pool_code(e: &PoolError) -> i32 {
    match e {
        PoolError::EmptyDistribution => 3,
        PoolError::InvalidParams(_) => 1,
    }
}

fn pipeline_code(e: &PipelineError) -> i32 {
    match e {
        PipelineError::CapacityExceeded { .. } => 2,
        PipelineError::TokenNotInPool { .. }
        | PipelineError::IncompleteMessage { .. }
        | PipelineError::Coding(CodingError::TokenNotInPool(_)) => 4,
        PipelineError::Model(e) => model_code(e),
        PipelineError::Pool(e) => pool_code(e),
        PipelineError::SessionNotFresh(_)
        | PipelineError::InvalidParams(_)
        | PipelineError::Coding(_) => 1,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{rendered}");
                1
            } else {
                let _ = write!(stdout, "{rendered}");
                0
            };
        }
    };
    let result = match cli.command {
        Command::Hide(args) => cmd_hide(args, stdout),
        Command::Extract { input } => cmd_extract(&input, stdout),
        Command::Sweep(args) => cmd_sweep(args, stdout),
        Command::Ppl { input } => cmd_ppl(&input, stdout),
        Command::Serve { backend } => cmd_serve(&backend, stdout),
        Command::Record { input, out } => cmd_record(&input, &out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn parse_backend(s: &str) -> Result<BackendSpec, CliError> {
    s.parse()
        .map_err(|e: ModelError| CliError::Usage(e.to_string()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn hide_params(args: &HideArgs) -> Result<StegoParams, CliError> {
    let eos_policy = args.eos_policy.into();
    let rule = match (args.top_k, args.ta, args.tr) {
        (Some(k), _, _) => CandidateRule::TopK { k, eos_policy },
        (None, Some(t_a), Some(t_r)) => CandidateRule::Semantic(
            PoolParams::new(t_a, t_r)
                .and_then(|p| p.with_max_pool_size(args.max_pool_size))
                .map_err(|e| CliError::Usage(e.to_string()))?
                .with_eos_policy(eos_policy),
        ),
        _ => {
            return Err(CliError::Usage(
                "--ta and --tr are required without --top-k".into(),
            ))
        }
    };
    if args.max_len == 0 {
        return Err(CliError::Usage("--max-len must be positive".into()));
    }
    if args.top_k == Some(0) {
        return Err(CliError::Usage("--top-k must be at least 1".into()));
    }
    Ok(StegoParams::new(rule).with_max_len(args.max_len))
}

fn cmd_hide(args: HideArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut backend = parse_backend(&args.backend)?;
    if let Some(seed) = args.seed {
        match &mut backend {
            BackendSpec::Synthetic(cfg) => cfg.seed = seed,
            _ => {
                return Err(CliError::Usage(
                    "--seed only applies to synthetic backends".into(),
                ))
            }
        }
    }
    let payload = BitMessage::from_hex(&args.msg_hex)
        .map_err(|e| CliError::Usage(format!("--msg-hex: {e}")))?;
    let params = hide_params(&args)?;
    let conditioning = Conditioning::from_text(&args.cond);

    let mut session = open_session(&backend, &conditioning)?.with_max_len(params.max_len);
    let output = pipeline::hide(&mut session, &payload, &params)?;
    let (gross, net) = metrics::bpw(&output)?;

    let vocab = session.vocabulary();
    let strings = output
        .tokens
        .iter()
        .map(|&t| vocab.token(t).unwrap_or("").to_owned())
        .collect();
    let file = StegoFile::new(&backend, &conditioning, &params, &output.tokens, strings);
    write_file(&args.out, &file.to_json())?;

    let _ = writeln!(stdout, "tokens: {}", output.tokens.len());
    let _ = writeln!(stdout, "gross_bpw: {gross:.6}");
    let _ = writeln!(stdout, "net_bpw: {net:.6}");
    let _ = writeln!(stdout, "text: {}", vocab.render(&output.tokens));
    Ok(())
}

fn cmd_extract(input: &Path, stdout: &mut dyn Write) -> Result<(), CliError> {
    let file = StegoFile::read(input)?;
    let params = file.params.to_params()?;
    let mut session = file.open_session()?;
    let message = pipeline::extract(&mut session, &file.token_ids(), &params)?;
    let _ = writeln!(stdout, "{}", message.to_hex());
    Ok(())
}

fn parse_list(flag: &str, s: &str) -> Result<Vec<f64>, CliError> {
    let values = s
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| {
            v.parse::<f64>()
                .map_err(|_| CliError::Usage(format!("{flag}: bad number {v:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(CliError::Usage(format!("{flag} is empty")));
    }
    Ok(values)
}

fn cmd_sweep(args: SweepArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let backend = parse_backend(&args.backend)?;
    let t_a = parse_list("--ta-list", &args.ta_list)?;
    let t_r = parse_list("--tr-list", &args.tr_list)?;
    let cfg = SweepConfig {
        n_samples: args.n,
        payload_bits: args.payload_bits,
        seed: args.seed,
        max_len: args.max_len,
        ..SweepConfig::new(backend, t_a, t_r)
    };
    let rows = metrics::sweep(&cfg)?;
    let file = File::create(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    let mut out = BufWriter::new(file);
    metrics::write_csv(&mut out, &rows)
        .and_then(|()| out.flush())
        .map_err(|e| CliError::io(&args.out, e))?;
    let _ = writeln!(stdout, "rows: {}", rows.len());
    Ok(())
}

fn cmd_ppl(input: &Path, stdout: &mut dyn Write) -> Result<(), CliError> {
    let file = StegoFile::read(input)?;
    let mut session = file.open_session()?;
    let ppl = metrics::perplexity(&mut session, &file.token_ids())?;
    let _ = writeln!(stdout, "{ppl:.6}");
    Ok(())
}

fn cmd_serve(backend: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    let spec = parse_backend(backend)?;
    bridge::serve(&spec, io::stdin().lock(), stdout)?;
    Ok(())
}

fn cmd_record(input: &Path, out: &Path) -> Result<(), CliError> {
    let file = StegoFile::read(input)?;
    let mut session = file.open_session()?.recording();
    let tokens = file.token_ids();
    let mut last = None;
    for &t in &tokens {
        session.next_distribution(last)?;
        last = Some(t);
    }
    let steps = session.recorded().unwrap_or_default();
    let mut buf = Vec::new();
    write_replay(&mut buf, session.vocabulary(), steps).map_err(|e| CliError::io(out, e))?;
    fs::write(out, buf).map_err(|e| CliError::io(out, e))
}
