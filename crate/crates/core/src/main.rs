use std::io::{self, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

use sqlreflect::config::Config;
use sqlreflect::llm::BackendKind;
use sqlreflect::matcher;
use sqlreflect::replay::{self, ReplayConfig, SyntheticConfig};
use sqlreflect::scheduler::ClockMode;
use sqlreflect::service::{self, AppState};

#[derive(Parser)]
#[command(name = "sqlreflect", version, about = "Reflection triggers for collaborative SQL sessions")]
struct Cli {
    /// TOML configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Clock {
    LastShown,
    HeadTrigger,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Mock,
    Live,
}

impl From<Backend> for BackendKind {
    fn from(b: Backend) -> Self {
        match b {
            Backend::Mock => BackendKind::Mock,
            Backend::Live => BackendKind::Live,
        }
    }
}

/// Comma-separated seconds, e.g. `60,120,300`.
#[derive(Clone)]
struct Seconds(Vec<f64>);

fn parse_list(s: &str) -> Result<Seconds, String> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| format!("`{x}` is not a number")))
        .collect::<Result<_, _>>()
        .map(Seconds)
}

#[derive(Subcommand)]
enum Command {
    /// Classify SQL text and print the matching intervention types
    Classify {
        #[arg(required = true, num_args = 1..)]
        sql: Vec<String>,
        /// Print matches as JSON
        #[arg(long)]
        json: bool,
    },
    /// Replay a command log and report firing intervals
    Replay {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value_t = 300.0)]
        tau: f64,
        /// Fire every trigger immediately
        #[arg(long)]
        no_schedule: bool,
        #[arg(long, value_parser = parse_list, default_value = "60,120,300")]
        buckets: Seconds,
        #[arg(long, value_enum, default_value_t = Clock::LastShown)]
        clock: Clock,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Compare interval distributions across tau values
    Sweep {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, value_parser = parse_list, default_value = "0,15,60,300")]
        taus: Seconds,
        #[arg(long, value_parser = parse_list, default_value = "60,120,300")]
        buckets: Seconds,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Run the HTTP service
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, value_enum)]
        llm: Option<Backend>,
        #[arg(long)]
        base_url: Option<String>,
        /// Directory for session event logs
        #[arg(long)]
        log_dir: Option<PathBuf>,
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Interactive session reading SQL lines from standard input
    Session {
        #[arg(long, value_enum)]
        llm: Option<Backend>,
        #[arg(long)]
        base_url: Option<String>,
        #[arg(long)]
        tau: Option<f64>,
        /// Simulated seconds per wall-clock second
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        #[arg(long, default_value = "interactive")]
        id: String,
    },
    /// Write a seeded synthetic command log
    GenLog {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        sessions: usize,
        #[arg(long, default_value_t = 30)]
        commands_per_task: usize,
        #[arg(long, default_value_t = 45.0)]
        mean_gap: f64,
        #[arg(long, default_value_t = 0.4)]
        density: f64,
    },
}

fn out() -> BufWriter<io::StdoutLock<'static>> {
    BufWriter::new(io::stdout().lock())
}

fn classify(sql: &[String], json: bool) -> Result<()> {
    let text = sql.join(" ");
    if text.trim().is_empty() {
        bail!("no SQL given");
    }
    let matches: Vec<_> = matcher::split_statements(&text)
        .iter()
        .flat_map(|stmt| matcher::classify_all(stmt))
        .collect();
    let mut w = out();
    if json {
        serde_json::to_writer_pretty(&mut w, &matches)?;
        writeln!(w)?;
    } else if matches.is_empty() {
        writeln!(w, "no-match")?;
    } else {
        for m in &matches {
            writeln!(w, "{}\t{}", m.intervention_type(), serde_json::to_string(m)?)?;
        }
    }
    Ok(w.flush()?)
}

fn load(log: &Path) -> Result<Vec<replay::SessionLog>> {
    replay::load_log(log).with_context(|| format!("cannot load log {}", log.display()))
}

fn apply_overrides(cfg: &mut Config, llm: Option<Backend>, base_url: Option<String>, tau: Option<f64>) {
    if let Some(b) = llm {
        cfg.llm.backend = b.into();
    }
    if let Some(u) = base_url {
        cfg.llm.base_url = u;
    }
    if let Some(t) = tau {
        cfg.scheduler.tau_s = t;
    }
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = Config::load_or_default(cli.config.as_deref())?;
    match cli.command {
        Command::Classify { sql, json } => classify(&sql, json),
        Command::Replay {
            log,
            tau,
            no_schedule,
            buckets,
            clock,
            format,
        } => {
            let sessions = load(&log)?;
            let rc = ReplayConfig {
                tau_s: tau,
                scheduling_enabled: !no_schedule,
                clock: match clock {
                    Clock::LastShown => ClockMode::LastShown,
                    Clock::HeadTrigger => ClockMode::HeadTrigger,
                },
                edges: buckets.0,
            };
            let report = replay::replay(&sessions, &rc)?;
            let mut w = out();
            match format {
                Format::Table => write!(w, "{}", replay::render_report_table(&report))?,
                Format::Csv => write!(w, "{}", replay::render_report_csv(&report))?,
                Format::Json => {
                    serde_json::to_writer_pretty(&mut w, &report)?;
                    writeln!(w)?;
                }
            }
            Ok(w.flush()?)
        }
        Command::Sweep {
            log,
            taus,
            buckets,
            format,
        } => {
            let sessions = load(&log)?;
            let table = replay::sweep_tau(&sessions, &taus.0, &buckets.0)?;
            let mut w = out();
            match format {
                Format::Table => write!(w, "{}", replay::render_sweep_table(&table))?,
                Format::Csv => write!(w, "{}", replay::render_sweep_csv(&table))?,
                Format::Json => {
                    serde_json::to_writer_pretty(&mut w, &table)?;
                    writeln!(w)?;
                }
            }
            Ok(w.flush()?)
        }
        Command::Serve {
            port,
            llm,
            base_url,
            log_dir,
            tau,
        } => {
            apply_overrides(&mut cfg, llm, base_url, tau);
            if let Some(p) = port {
                cfg.server.port = p;
            }
            if let Some(d) = log_dir {
                cfg.server.log_dir = Some(d);
            }
            if let Some(dir) = &cfg.server.log_dir {
                std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
            }
            let pipeline = cfg.pipeline()?;
            let app = Arc::new(AppState::new(pipeline, cfg.scheduler.to_config(), cfg.server.log_dir.clone()));
            let addr = SocketAddr::from(([0, 0, 0, 0], cfg.server.port));
            runtime()?.block_on(async {
                let n = app.restore().await?;
                if n > 0 {
                    tracing::info!(sessions = n, "restored sessions from log directory");
                }
                service::serve(app, addr).await?;
                anyhow::Ok(())
            })
        }
        Command::Session {
            llm,
            base_url,
            tau,
            speed,
            id,
        } => {
            apply_overrides(&mut cfg, llm, base_url, tau);
            if speed.is_nan() || speed <= 0.0 {
                bail!("--speed must be positive");
            }
            let pipeline = cfg.pipeline()?;
            let started = Instant::now();
            let stdin = io::stdin().lock();
            let mut w = io::stdout().lock();
            runtime()?.block_on(sqlreflect::interactive::run_session(
                &pipeline,
                &id,
                cfg.scheduler.to_config(),
                stdin,
                &mut w,
                || started.elapsed().as_secs_f64() * speed,
            ))?;
            Ok(())
        }
        Command::GenLog {
            out,
            seed,
            sessions,
            commands_per_task,
            mean_gap,
            density,
        } => {
            let records = replay::synthetic_log(&SyntheticConfig {
                seed,
                sessions,
                commands_per_task,
                mean_gap_s: mean_gap,
                trigger_density: density,
                ..SyntheticConfig::default()
            });
            replay::write_log(&out, &records).with_context(|| format!("cannot write {}", out.display()))?;
            eprintln!("wrote {} records to {}", records.len(), out.display());
            Ok(())
        }
    }
}

/// Error chain on one line, skipping causes already spelled out by the
/// message before them.
fn render_error(e: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut prev = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if prev.contains(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
        prev = msg;
    }
    out
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render_error(&e));
            ExitCode::FAILURE
        }
    }
}
