//! The `toxbench` command line.
//!
//! Exit codes: 0 on success, 1 when the command ran but the domain said no
//! (invalid data, a rejected evaluation, an HTTP error from the registry),
//! 2 for usage errors (unknown flags, invalid flag values, unreadable config).

pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use toxbench_core::dataset::synthetic::{generate, SyntheticConfig};
use toxbench_core::dataset::{audit, load_dataset, load_dataset_unfiltered, save_dataset, Endpoint};
use toxbench_core::featurize::{featurize_smiles, FeatureLayout, FeatureMatrix};
use toxbench_core::metrics::format_score;
use toxbench_core::models::{fit_artifact, Hyperparameters, ModelKind, ModelSpec};
use toxbench_service::orchestrate::{
    predict_url, run_evaluation, DatasetRef, EvaluationJob, EvaluationResult, EvaluationStatus, HttpClient,
};
use toxbench_service::registry::{
    self, Decision, EvaluatorConfig, LeaderboardRow, Registry, RegistryService, ADMIN_TOKEN_ENV, ADMIN_TOKEN_HEADER,
};
use toxbench_service::serve::{self, Predictor};
use url::Url;

use config::{pick, ConfigFile};

/// A problem with how the command was invoked; exits with 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

#[derive(Debug, Parser)]
#[command(name = "toxbench", version, about = "Reproducible Tox21-style benchmark toolkit")]
pub struct Cli {
    /// TOML file whose keys supply defaults for flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true)]
    log_level: Option<String>,
    /// Print one JSON document to stdout instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Featurize a dataset file into a binary feature matrix.
    Featurize {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a baseline and write its artifact directory.
    Train {
        #[arg(long, value_enum)]
        model: Option<KindArg>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve an artifact over the prediction protocol.
    Serve {
        #[arg(long)]
        artifact: PathBuf,
        #[command(flatten)]
        listen: Listen,
        #[arg(long)]
        fallback_probability: Option<f64>,
        #[arg(long)]
        max_batch: Option<usize>,
    },
    /// Evaluate a remote prediction endpoint on a labelled dataset.
    Eval {
        /// Service root or full `/predict` URL.
        #[arg(long)]
        url: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        concurrency: Option<usize>,
        #[arg(long)]
        timeout_secs: Option<f64>,
        #[arg(long)]
        max_attempts: Option<u32>,
    },
    /// Print label coverage statistics of a dataset file.
    Audit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        title: Option<String>,
    },
    /// Submit a model card to a registry.
    Submit {
        #[arg(long)]
        card: PathBuf,
        #[arg(long)]
        registry: Option<String>,
    },
    /// Approve or reject a preliminary submission (needs the admin token).
    Review {
        #[arg(long)]
        id: u64,
        #[arg(long, value_enum)]
        decision: DecisionArg,
        #[arg(long, default_value = "admin")]
        reviewer: String,
        #[arg(long, default_value = "")]
        note: String,
        #[arg(long)]
        registry: Option<String>,
    },
    /// Query a registry's leaderboard.
    Leaderboard {
        #[arg(long)]
        registry: Option<String>,
        #[arg(long, value_enum)]
        sort: Option<SortArg>,
        #[arg(long, value_enum)]
        dir: Option<DirArg>,
        /// Comma-separated statuses; anything but approved needs the admin token.
        #[arg(long)]
        status: Option<String>,
        /// Text filter on model name or developer.
        #[arg(long)]
        q: Option<String>,
    },
    /// Run the registry HTTP service.
    RegistryServe {
        /// Event log file; created if missing.
        #[arg(long)]
        store: Option<PathBuf>,
        #[command(flatten)]
        listen: Listen,
        /// Static leaderboard UI served under /ui.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
        /// Evaluate new submissions automatically against this dataset file.
        #[arg(long)]
        eval_data: Option<PathBuf>,
    },
    /// Write a synthetic train/test pair with rule-driven labels.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 500)]
        molecules: usize,
        #[arg(long, default_value_t = 0.1)]
        flip_noise: f64,
    },
}

#[derive(Debug, Clone, Args)]
struct Listen {
    #[arg(long)]
    host: Option<String>,
    /// 0 picks a free port.
    #[arg(long)]
    port: Option<u16>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Linear,
    Snn,
    Knn,
}

impl From<KindArg> for ModelKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Linear => ModelKind::Linear,
            KindArg::Snn => ModelKind::Snn,
            KindArg::Knn => ModelKind::Knn,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DecisionArg {
    Approve,
    Reject,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SortArg {
    MeanAuc,
    Date,
    Name,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DirArg {
    Asc,
    Desc,
}

struct Ctx {
    cfg: ConfigFile,
    seed: Option<u64>,
    json: bool,
}

impl Ctx {
    fn emit(&self, value: &impl Serialize, text: impl FnOnce() -> String) -> Result<()> {
        let mut out = std::io::stdout().lock();
        if self.json {
            serde_json::to_writer_pretty(&mut out, value)?;
            writeln!(out)?;
        } else {
            write!(out, "{}", text())?;
        }
        out.flush()?;
        Ok(())
    }

    fn registry_url(&self, flag: Option<String>) -> Result<Url> {
        let raw = flag.or_else(|| self.cfg.registry.clone()).ok_or_else(|| usage("--registry is required"))?;
        Url::parse(&raw).map_err(|e| usage(format!("--registry {raw:?}: {e}")))
    }

    fn bind(&self, listen: &Listen, default_port: u16) -> Result<SocketAddr> {
        let host = pick(listen.host.clone(), self.cfg.host.clone(), "127.0.0.1".into());
        let port = pick(listen.port, self.cfg.port, default_port);
        format!("{host}:{port}").parse().map_err(|e| usage(format!("bind address {host}:{port}: {e}")))
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let json = cli.json;
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            let code = if e.downcast_ref::<UsageError>().is_some() { 2 } else { 1 };
            let kind = if code == 2 { "usage" } else { "error" };
            if json {
                eprintln!("{}", json!({"error": {"kind": kind, "message": format!("{e:#}")}}));
            } else {
                eprintln!("{kind}: {e:#}");
            }
            code
        }
    }
}

fn init_logging(level: &str, json: bool) -> Result<()> {
    let filter = tracing_subscriber::EnvFilter::try_new(level).map_err(|e| usage(format!("--log-level {level:?}: {e}")))?;
    let builder = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr);
    // a second init in the same process (tests) is harmless
    let _ = if json { builder.json().try_init() } else { builder.try_init() };
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let level = pick(cli.log_level.clone(), cfg.log_level.clone(), "warn".into());
    init_logging(&level, cli.json)?;
    let ctx = Ctx { seed: cli.seed.or(cfg.seed), cfg, json: cli.json };
    match cli.command {
        Command::Featurize { data, out } => featurize(&ctx, &data, &out),
        Command::Train { model, data, out } => train(&ctx, model.map(Into::into), &data, &out),
        Command::Serve { artifact, listen, fallback_probability, max_batch } => {
            let fallback = pick(fallback_probability, ctx.cfg.fallback_probability, 0.5);
            let max_batch = pick(max_batch, ctx.cfg.max_batch, 4096);
            if !(0.0..=1.0).contains(&fallback) {
                bail!(usage(format!("--fallback-probability {fallback} is outside [0, 1]")));
            }
            if max_batch == 0 {
                bail!(usage("--max-batch must be positive"));
            }
            let addr = ctx.bind(&listen, 8000)?;
            let predictor = Predictor::load(&serve::ServerConfig {
                bind: addr,
                artifact,
                fallback_probability: fallback,
                max_batch,
            })?;
            runtime()?.block_on(serve_model(&ctx, addr, predictor))
        }
        Command::Eval { url, data, out, batch_size, concurrency, timeout_secs, max_attempts } => {
            let base = Url::parse(&url).map_err(|e| usage(format!("--url {url:?}: {e}")))?;
            let endpoint = predict_url(&base).map_err(|e| usage(format!("--url {url:?}: {e}")))?;
            let placeholder = DatasetRef { path: data.clone(), content_hash: String::new() };
            let mut job = EvaluationJob::new(endpoint, placeholder);
            job.batch_size = pick(batch_size, ctx.cfg.batch_size, job.batch_size);
            job.concurrency = pick(concurrency, ctx.cfg.concurrency, job.concurrency);
            job.timeout_secs = pick(timeout_secs, ctx.cfg.timeout_secs, job.timeout_secs);
            job.retry.max_attempts = pick(max_attempts, ctx.cfg.max_attempts, job.retry.max_attempts);
            if job.batch_size == 0 || job.concurrency == 0 || job.retry.max_attempts == 0 {
                bail!(usage("--batch-size, --concurrency and --max-attempts must be positive"));
            }
            if !(job.timeout_secs > 0.0 && job.timeout_secs.is_finite()) {
                bail!(usage("--timeout-secs must be positive"));
            }
            job.dataset = DatasetRef::from_file(&data).with_context(|| format!("reading {}", data.display()))?;
            evaluate(&ctx, &job, out.as_deref())
        }
        Command::Audit { data, title } => {
            let (matrix, _) = load_dataset_unfiltered(&data)?;
            let report = audit(&matrix);
            let title = title.unwrap_or_else(|| data.display().to_string());
            ctx.emit(&report, || report.render(&title))
        }
        Command::Submit { card, registry } => {
            let base = ctx.registry_url(registry)?;
            let text = std::fs::read_to_string(&card).with_context(|| format!("reading {}", card.display()))?;
            let body: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", card.display()))?;
            let reply = runtime()?.block_on(call(reqwest::Client::new().post(join(&base, "submissions")?).json(&body)))?;
            ctx.emit(&reply, || format!("submitted: id {} ({})\n", reply["id"], reply["status"].as_str().unwrap_or("?")))
        }
        Command::Review { id, decision, reviewer, note, registry } => {
            let base = ctx.registry_url(registry)?;
            let token = std::env::var(ADMIN_TOKEN_ENV).map_err(|_| usage(format!("{ADMIN_TOKEN_ENV} is not set")))?;
            let decision = match decision {
                DecisionArg::Approve => Decision::Approve,
                DecisionArg::Reject => Decision::Reject,
            };
            let body = json!({"decision": decision, "reviewer": reviewer, "note": note});
            let req = reqwest::Client::new()
                .post(join(&base, &format!("submissions/{id}/review"))?)
                .header(ADMIN_TOKEN_HEADER, token)
                .json(&body);
            let reply = runtime()?.block_on(call(req))?;
            ctx.emit(&reply, || format!("submission {id}: {}\n", reply["status"].as_str().unwrap_or("?")))
        }
        Command::Leaderboard { registry, sort, dir, status, q } => {
            let base = ctx.registry_url(registry)?;
            let mut url = join(&base, "leaderboard")?;
            {
                let mut pairs = url.query_pairs_mut();
                if let Some(s) = sort {
                    pairs.append_pair("sort", ["mean_auc", "date", "name"][s as usize]);
                }
                if let Some(d) = dir {
                    pairs.append_pair("dir", ["asc", "desc"][d as usize]);
                }
                if let Some(s) = &status {
                    pairs.append_pair("status", s);
                }
                if let Some(q) = &q {
                    pairs.append_pair("q", q);
                }
            }
            let mut req = reqwest::Client::new().get(url);
            if let Ok(token) = std::env::var(ADMIN_TOKEN_ENV) {
                req = req.header(ADMIN_TOKEN_HEADER, token);
            }
            let reply = runtime()?.block_on(call(req))?;
            let rows: Vec<LeaderboardRow> = serde_json::from_value(reply).context("unexpected leaderboard reply")?;
            ctx.emit(&rows, || render_leaderboard(&rows))
        }
        Command::RegistryServe { store, listen, ui_dir, eval_data } => {
            let store = store.or_else(|| ctx.cfg.store.clone()).ok_or_else(|| usage("--store is required"))?;
            let ui_dir = ui_dir.or_else(|| ctx.cfg.ui_dir.clone());
            if let Some(dir) = &ui_dir {
                if !dir.is_dir() {
                    bail!(usage(format!("--ui-dir {} is not a directory", dir.display())));
                }
            }
            let evaluator = match eval_data.or_else(|| ctx.cfg.eval_data.clone()) {
                Some(path) => {
                    let mut e = EvaluatorConfig::new(
                        DatasetRef::from_file(&path).with_context(|| format!("reading {}", path.display()))?,
                    );
                    e.batch_size = pick(None, ctx.cfg.batch_size, e.batch_size);
                    e.concurrency = pick(None, ctx.cfg.concurrency, e.concurrency);
                    Some(e)
                }
                None => None,
            };
            let addr = ctx.bind(&listen, 8080)?;
            let registry = Arc::new(Registry::open(&store)?);
            let admin_token = std::env::var(ADMIN_TOKEN_ENV).ok().filter(|t| !t.is_empty());
            if admin_token.is_none() {
                tracing::warn!("{ADMIN_TOKEN_ENV} is not set; admin actions are disabled");
            }
            let service = RegistryService { registry, admin_token, evaluator };
            runtime()?.block_on(serve_registry(&ctx, addr, service, ui_dir.as_deref()))
        }
        Command::Synth { out_dir, molecules, flip_noise } => {
            if molecules < 20 {
                bail!(usage("--molecules must be at least 20"));
            }
            if !(0.0..0.5).contains(&flip_noise) {
                bail!(usage("--flip-noise must be in [0, 0.5)"));
            }
            let cfg = SyntheticConfig { molecules, flip_noise, seed: ctx.seed.unwrap_or(0), ..SyntheticConfig::default() };
            let split = generate(&cfg);
            std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
            let train = out_dir.join("train.csv");
            let test = out_dir.join("test.csv");
            save_dataset(&split.train, &train)?;
            save_dataset(&split.test, &test)?;
            let summary = json!({"train": train, "test": test, "train_rows": split.train.len(), "test_rows": split.test.len()});
            ctx.emit(&summary, || {
                format!("wrote {} ({} rows) and {} ({} rows)\n", train.display(), split.train.len(), test.display(), split.test.len())
            })
        }
    }
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn join(base: &Url, path: &str) -> Result<Url> {
    let mut s = base.as_str().trim_end_matches('/').to_string();
    s.push('/');
    s.push_str(path);
    Ok(Url::parse(&s)?)
}

/// Sends a request and returns the JSON body, turning HTTP errors into
/// domain errors that carry the server's message.
async fn call(req: reqwest::RequestBuilder) -> Result<Value> {
    let resp = req.send().await.context("registry unreachable")?;
    let status = resp.status();
    let text = resp.text().await?;
    let body: Value = serde_json::from_str(&text).unwrap_or(Value::String(text));
    if status.is_success() {
        return Ok(body);
    }
    let mut message = body["error"]["message"].as_str().map(str::to_string).unwrap_or_else(|| body.to_string());
    if let Some(fields) = body["error"]["fields"].as_array() {
        for f in fields {
            message.push_str(&format!("\n  {}: {}", f["field"].as_str().unwrap_or("?"), f["message"].as_str().unwrap_or("")));
        }
    }
    bail!("HTTP {}: {message}", status.as_u16())
}

fn featurize(ctx: &Ctx, data: &Path, out: &Path) -> Result<()> {
    let (matrix, report) = load_dataset(data)?;
    let mut features = FeatureMatrix::new(FeatureLayout::TOTAL);
    for (i, fv) in featurize_smiles(matrix.smiles()).into_iter().enumerate() {
        let fv = fv.expect("loader keeps only parseable SMILES");
        features.push(matrix.id(i), matrix.smiles_of(i), &fv);
    }
    std::fs::write(out, features.to_bytes()).with_context(|| format!("writing {}", out.display()))?;
    let summary = json!({
        "out": out,
        "rows": features.len(),
        "width": features.width,
        "excluded": report.excluded,
        "content_hash": report.content_hash,
    });
    ctx.emit(&summary, || {
        let mut s = format!("wrote {} rows x {} features to {}\n", features.len(), features.width, out.display());
        for e in &report.excluded {
            s.push_str(&format!("excluded line {} ({}): {}\n", e.line, e.id, e.reason));
        }
        s
    })
}

fn train(ctx: &Ctx, kind: Option<ModelKind>, data: &Path, out: &Path) -> Result<()> {
    let mut spec = match (ctx.cfg.spec.clone(), kind.or(ctx.cfg.model)) {
        (Some(spec), Some(k)) if spec.model.kind() != k => {
            ModelSpec { model: Hyperparameters::defaults(k), name: format!("toxbench-{k}"), ..spec }
        }
        (Some(spec), _) => spec,
        (None, k) => ModelSpec::new(k.ok_or_else(|| usage("--model is required"))?),
    };
    if let Some(seed) = ctx.seed {
        spec.model.set_seed(seed);
    }
    let (matrix, report) = load_dataset(data)?;
    for e in &report.excluded {
        tracing::warn!(line = e.line, id = %e.id, reason = %e.reason, "excluded training row");
    }
    let artifact = fit_artifact(&matrix, &spec)?;
    artifact.save(out)?;
    let m = &artifact.manifest;
    ctx.emit(m, || {
        format!(
            "trained {} on {} rows{}; artifact written to {}\n",
            m.kind,
            m.training_rows,
            m.final_loss.map(|l| format!(" (final loss {l:.6})")).unwrap_or_default(),
            out.display()
        )
    })
}

async fn serve_model(ctx: &Ctx, addr: SocketAddr, predictor: Predictor) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
    let local = listener.local_addr()?;
    let m = &predictor.artifact().manifest;
    let info = json!({"listening": format!("http://{local}"), "name": m.name, "kind": m.kind});
    ctx.emit(&info, || format!("serving {} on http://{local}\n", m.name))?;
    serve::serve(listener, Arc::new(predictor), shutdown_signal()).await?;
    Ok(())
}

async fn serve_registry(ctx: &Ctx, addr: SocketAddr, service: RegistryService, ui: Option<&Path>) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
    let local = listener.local_addr()?;
    let info = json!({"listening": format!("http://{local}")});
    ctx.emit(&info, || format!("registry on http://{local}\n"))?;
    registry::serve(listener, service, ui, shutdown_signal()).await?;
    Ok(())
}

async fn shutdown_signal() {
    let _ = tokio::signal::ctrl_c().await;
}

fn evaluate(ctx: &Ctx, job: &EvaluationJob, out: Option<&Path>) -> Result<()> {
    let result = runtime()?.block_on(run_evaluation(job, &HttpClient::new()));
    if let Some(path) = out {
        let text = serde_json::to_string_pretty(&result)? + "\n";
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    ctx.emit(&result, || render_result(&result))?;
    match result.status {
        EvaluationStatus::Scored => Ok(()),
        status => bail!("evaluation {status:?}: {}", result.failure.as_deref().unwrap_or("see report")),
    }
}

fn render_result(r: &EvaluationResult) -> String {
    let mut s = format!(
        "status: {:?}\nrows: {} ({} unique SMILES), {} request(s), {:.0} ms\n",
        r.status, r.rows, r.unique_smiles, r.request_count, r.timings.total_ms
    );
    for e in &r.per_endpoint {
        s.push_str(&format!("{:<14} {}  (+{} / -{})\n", e.endpoint.name(), format_score(e.auc), e.n_pos, e.n_neg));
    }
    if let Some(m) = r.mean_auc {
        s.push_str(&format!("{:<14} {}\n", "mean", format_score(m)));
    }
    for v in r.validation.violations.iter().take(20) {
        s.push_str(&format!("violation {:?}: {}\n", v.kind, v.detail));
    }
    if let Some(f) = &r.failure {
        s.push_str(&format!("failure: {f}\n"));
    }
    s
}

fn render_leaderboard(rows: &[LeaderboardRow]) -> String {
    let mut s = format!("{:>3} {:>4} {:<24} {:<16} {:<11} {:>8}", "#", "id", "model", "developer", "status", "mean");
    for e in Endpoint::ALL {
        s.push_str(&format!(" {:>13}", e.name()));
    }
    s.push('\n');
    let cell = |x: Option<f64>| x.map(format_score).unwrap_or_else(|| "-".into());
    for (rank, r) in rows.iter().enumerate() {
        s.push_str(&format!(
            "{:>3} {:>4} {:<24} {:<16} {:<11} {:>8}",
            rank + 1,
            r.id,
            r.model_name,
            r.developer,
            r.status.name(),
            cell(r.mean_auc)
        ));
        for e in Endpoint::ALL {
            s.push_str(&format!(" {:>13}", cell(r.per_endpoint.get(e.name()).copied())));
        }
        s.push('\n');
    }
    s
}
