use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rtahs_core::cosim::{numerical_server, surrogate_physical, Handshake, UdpLink};
use rtahs_core::estimators::EstimatorKind;
use rtahs_core::harness::config::{CaseConfig, CaseId, CosimMode, ForceKind};
use rtahs_core::harness::run::{build_numerical, handshake, physical_from_handshake};
use rtahs_core::harness::{compare_series, finish_case, run_case, run_delay_study, CaseRun, Execution, Summary};
use rtahs_core::series::TimeSeries;
use rtahs_core::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_SESSION: u8 = 3;
const EXIT_TRUNCATED: u8 = 4;

#[derive(Parser)]
#[command(name = "rtahs", version, about = "Real-time aeroelastic hybrid simulation harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a validation case and its oracle, writing CSV and a summary.
    Run {
        #[command(flatten)]
        case: CaseArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the numerical substructure as a UDP server for a remote physical side.
    Serve {
        #[arg(long)]
        bind: String,
        #[command(flatten)]
        case: CaseArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the physical surrogate as a UDP client.
    Physical {
        #[arg(long)]
        connect: String,
        /// Force model: auto, zero, linear-se, nonlinear-vortex or coupled-se.
        #[arg(long)]
        model: Option<ForceKind>,
        #[command(flatten)]
        case: CaseArgs,
    },
    /// Compare one channel of two CSV series; the second is the reference.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        channel: String,
    },
    /// Re-run a case with several force-channel delays.
    DelayStudy {
        #[command(flatten)]
        case: CaseArgs,
        /// Comma-separated delays in seconds.
        #[arg(long, value_delimiter = ',', default_value = "0,0.1")]
        taus: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run the delays one after another.
        #[arg(long)]
        sequential: bool,
    },
}

#[derive(Args)]
struct CaseArgs {
    /// case1-linear, case1-nonlinear or case2dof.
    #[arg(long)]
    case: Option<CaseId>,
    /// TOML file overriding the case preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    dt: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    t_end: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    delay: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// in-process or udp.
    #[arg(long)]
    mode: Option<CosimMode>,
    /// kf, ekf or aekf.
    #[arg(long)]
    estimator: Option<EstimatorKind>,
    /// Override any config key, e.g. `--set aero.y1=11.966`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl CaseArgs {
    fn load(&self, fallback: Option<CaseId>) -> anyhow::Result<CaseConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                let table: toml::Table = text
                    .parse()
                    .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
                let case = if table.contains_key("case") {
                    self.case
                } else {
                    self.case.or(fallback)
                };
                CaseConfig::from_table(table, case)?
            }
            None => CaseConfig::preset(
                self.case
                    .or(fallback)
                    .ok_or_else(|| Error::Config("give --case or --config".into()))?,
            ),
        };
        if let Some(v) = self.dt {
            cfg.dt = v;
        }
        if let Some(v) = self.t_end {
            cfg.t_end = v;
        }
        if let Some(v) = self.delay {
            cfg.delay = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.mode {
            cfg.mode = v;
        }
        if let Some(v) = self.estimator {
            cfg.estimator = v;
        }
        for item in &self.overrides {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {item:?} is not KEY=VALUE")))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write_case(out: &Path, run: &CaseRun) -> anyhow::Result<Summary> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    run.rtahs.save_csv(out.join("rtahs.csv"))?;
    run.oracle.save_csv(out.join("oracle.csv"))?;
    run.commands.save_csv(out.join("commands.csv"))?;
    std::fs::write(out.join("config.toml"), run.config.to_toml_string())?;
    let summary = Summary::for_case(run);
    summary.save(out.join("summary.txt"))?;
    Ok(summary)
}

fn report(run: &CaseRun, summary: &Summary) -> u8 {
    for line in summary.to_string().lines() {
        if line.starts_with("metrics.") || line.starts_with("run.") || line.starts_with("session.") {
            println!("{line}");
        }
    }
    if let Some(e) = &run.failure {
        eprintln!("error: {e}");
        EXIT_SESSION
    } else if run.truncated() {
        eprintln!("note: run stopped at the divergence limit");
        EXIT_TRUNCATED
    } else {
        0
    }
}

fn cmd_run(case: &CaseArgs, out: &Path) -> anyhow::Result<u8> {
    let cfg = case.load(None)?;
    log::info!("running {} with {} for {} s", cfg.case, cfg.estimator.name(), cfg.t_end);
    let run = run_case(&cfg)?;
    let summary = write_case(out, &run)?;
    Ok(report(&run, &summary))
}

fn cmd_serve(bind: &str, case: &CaseArgs, out: &Path) -> anyhow::Result<u8> {
    let cfg = case.load(None)?;
    let link = UdpLink::bind(bind)?;
    eprintln!("listening on {}", link.local_addr()?);
    let outcome = numerical_server(
        link,
        build_numerical(&cfg)?,
        handshake(&cfg),
        &cfg.protocol.to_protocol(),
    )?;
    let run = finish_case(&cfg, outcome)?;
    let summary = write_case(out, &run)?;
    Ok(report(&run, &summary))
}

fn cmd_physical(connect: &str, model: Option<ForceKind>, case: &CaseArgs) -> anyhow::Result<u8> {
    let mut cfg = case.load(None)?;
    if let Some(m) = model {
        cfg.forces.model = m;
        cfg.validate()?;
    }
    let hello = Handshake {
        estimator: 0,
        ..handshake(&cfg)
    };
    let link = UdpLink::connect(connect)?;
    let stats = surrogate_physical(link, hello, &cfg.protocol.to_protocol(), move |hs| {
        physical_from_handshake(&cfg, hs)
    })?;
    println!(
        "session.sent = {}\nsession.received = {}\nsession.dropped = {}\nsession.lost = {}\nsession.retries = {}",
        stats.sent, stats.received, stats.dropped, stats.lost, stats.retries
    );
    Ok(0)
}

fn cmd_compare(a: &Path, b: &Path, channel: &str) -> anyhow::Result<u8> {
    let sa = TimeSeries::load_csv(a).with_context(|| format!("reading {}", a.display()))?;
    let sb = TimeSeries::load_csv(b).with_context(|| format!("reading {}", b.display()))?;
    let m = compare_series(&sa, &sb, channel)?;
    let mut s = Summary::new();
    s.add_metrics(channel, &m);
    print!("{s}");
    Ok(0)
}

fn cmd_delay_study(case: &CaseArgs, taus: &[f64], out: Option<&Path>, sequential: bool) -> anyhow::Result<u8> {
    let cfg = case.load(Some(CaseId::Case2Dof))?;
    if taus.is_empty() {
        bail!(Error::Config("--taus needs at least one value".into()));
    }
    let exec = if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let study = run_delay_study(&cfg, taus, exec)?;
    for row in &study.rows {
        let per_channel: Vec<String> = row
            .metrics
            .iter()
            .map(|m| {
                let n = m
                    .metrics
                    .normalized_rms
                    .map_or("undefined".into(), |v| format!("{v:.6e}"));
                format!("{}={n}", m.channel)
            })
            .collect();
        let env: Vec<&str> = row.envelopes.iter().map(|e| e.name()).collect();
        println!("tau={} {} envelope={}", row.tau, per_channel.join(" "), env.join(","));
    }
    if let Some(out) = out {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        study.reference.save_csv(out.join("reference.csv"))?;
        for (i, row) in study.rows.iter().enumerate() {
            row.series.save_csv(out.join(format!("tau_{i}.csv")))?;
        }
        Summary::for_delay_study(&cfg, &study).save(out.join("summary.txt"))?;
    }
    let failed = study.rows.iter().any(|r| r.failure.is_some());
    let truncated = study.rows.iter().any(|r| r.diverged_at.is_some());
    Ok(if failed {
        EXIT_SESSION
    } else if truncated {
        EXIT_TRUNCATED
    } else {
        0
    })
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::Validation(_) | Error::Usage(_) | Error::Domain(_) | Error::Csv(_)) => {
            EXIT_CONFIG
        }
        Some(Error::Session { .. }) => EXIT_SESSION,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { case, out } => cmd_run(case, out),
        Command::Serve { bind, case, out } => cmd_serve(bind, case, out),
        Command::Physical { connect, model, case } => cmd_physical(connect, *model, case),
        Command::Compare { a, b, channel } => cmd_compare(a, b, channel),
        Command::DelayStudy {
            case,
            taus,
            out,
            sequential,
        } => cmd_delay_study(case, taus, out.as_deref(), *sequential),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
