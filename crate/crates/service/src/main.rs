use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rtfs_core::LoadModel;
use rtfs_ingest::{ParseMode, ResultsStore};
use rtfs_service::commands;
use rtfs_service::config::{ServiceConfig, RESULTS_DIR_ENV};
use rtfs_service::view::{TransportResult, MAX_TRANSPORT_POINTS};
use rtfs_service::{api, scheduler, RtfsService};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "rtfs", version, about = "Real-time frequency stability calculation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the periodic calculation and the HTTP API.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Simulate the worst case (or one unit trip) for a snapshot.
    Simulate {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        unit: Option<String>,
        /// Service config supplying simulation settings and the load model.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        lenient: bool,
        /// Print the full result with every trace sample.
        #[arg(long)]
        full: bool,
    },
    /// Calibrate model parameters from recorded events.
    Calibrate {
        #[arg(value_enum)]
        what: Calibration,
        #[arg(long, num_args = 1.., required = true)]
        input: Vec<PathBuf>,
        /// Unit parameter store updated by `lag`.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Results directory receiving the load inertia model fitted by `inertia`.
        #[arg(long, env = RESULTS_DIR_ENV)]
        results_dir: Option<PathBuf>,
    },
    /// System inertia from one sudden-trip recording.
    EstimateInertia {
        #[arg(long)]
        trace: PathBuf,
        /// Lost generation, MW.
        #[arg(long, allow_hyphen_values = true)]
        delta_p: f64,
        /// Event time on the trace time base, s.
        #[arg(long)]
        event_time: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Calibration {
    Lag,
    Lrf,
    Inertia,
}

fn print<T: Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn optional_config(path: Option<&PathBuf>) -> Result<ServiceConfig> {
    match path {
        Some(p) => Ok(ServiceConfig::load(p)?),
        None => {
            let mut c = ServiceConfig::default();
            c.apply_env(|k| std::env::var_os(k));
            Ok(c)
        }
    }
}

async fn serve(config: ServiceConfig) -> Result<()> {
    let listen = config.listen.clone();
    let svc = Arc::new(RtfsService::open(config).context("opening results store")?);
    let listener = tokio::net::TcpListener::bind(&listen)
        .await
        .with_context(|| format!("binding {listen}"))?;
    tracing::info!("listening on {}", listener.local_addr()?);
    let (tx, rx) = tokio::sync::watch::channel(false);
    let sched = tokio::spawn(scheduler::run(svc.clone(), {
        let mut rx = rx.clone();
        async move {
            let _ = rx.wait_for(|&stop| stop).await;
        }
    }));
    let server = axum::serve(listener, api::router(svc)).with_graceful_shutdown({
        let mut rx = rx;
        async move {
            let _ = rx.wait_for(|&stop| stop).await;
        }
    });
    tokio::spawn(async move {
        let _ = tokio::signal::ctrl_c().await;
        let _ = tx.send(true);
    });
    server.await?;
    sched.await?;
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match cli.command {
        Command::Serve { config } => {
            let config = ServiceConfig::load(&config)?;
            tokio::runtime::Runtime::new()?.block_on(serve(config))
        }
        Command::Simulate {
            snapshot,
            unit,
            config,
            lenient,
            full,
        } => {
            let cfg = optional_config(config.as_ref())?;
            let model = match &cfg.load_model {
                Some(m) => m.clone(),
                // read-only: opening the store would create the directory
                None => Some(&cfg.results_dir)
                    .filter(|d| d.is_dir())
                    .and_then(|d| ResultsStore::open(d).ok())
                    .and_then(|s| s.load_model().ok().flatten())
                    .unwrap_or_else(LoadModel::published),
            };
            let mode = if lenient { ParseMode::Lenient } else { cfg.parse_mode.into() };
            let r = commands::simulate_file(&snapshot, unit.as_deref(), &cfg.simulation, &model, mode)?;
            if full {
                print(&r)
            } else {
                print(&TransportResult::new(&r, MAX_TRANSPORT_POINTS).summary)
            }
        }
        Command::Calibrate {
            what,
            input,
            params,
            results_dir,
        } => match what {
            Calibration::Lag => print(&commands::calibrate_lag(
                &input,
                &rtfs_core::Config::default(),
                params.as_deref(),
            )?),
            Calibration::Lrf => print(&commands::calibrate_lrf(&input)?),
            Calibration::Inertia => print(&commands::calibrate_inertia(&input, results_dir.as_deref())?),
        },
        Command::EstimateInertia {
            trace,
            delta_p,
            event_time,
        } => {
            let ke_sys = commands::estimate_inertia(&trace, delta_p, event_time)?;
            print(&serde_json::json!({ "ke_sys_mw_s": ke_sys }))
        }
    }
}
