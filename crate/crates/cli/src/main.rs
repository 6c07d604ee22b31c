mod selftest;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use mom_core::loanrep::{
    alpha_sweep, export_x, export_z, ridge_analysis, train_loans, AlphaChoice, LoanConfig,
    LoanSource, XRecord, ZRecord, ALPHA_GRID, CHANNELS, NUMERIC,
};
use mom_core::mom::ComputerOnlyConfig;
use mom_core::pointcloud::{run_simulated_session, PhiInit, PointcloudConfig};
use mom_core::sideinfo::{run_table, TableConfig};
use mom_core::Tensor;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

/// Human-in-the-loop representation learning experiments.
#[derive(Debug, Parser)]
#[command(name = "mom", version)]
struct Cli {
    /// Seed of every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write machine-readable results here as JSON.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON file with a partial configuration merged over the defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Scatterplot projections of 3-D point clouds.
    Pointcloud {
        #[command(subcommand)]
        command: PointcloudCommand,
    },
    /// Advice for a decision maker with side information.
    Sideinfo {
        #[command(subcommand)]
        command: SideinfoCommand,
    },
    /// Avatar embeddings of loan applications.
    Loanrep {
        #[command(subcommand)]
        command: LoanrepCommand,
    },
    /// Gradient checks and invariant checks; nonzero exit on any failure.
    Selftest {
        /// Seeds of the gradient suite.
        #[arg(long, default_value_t = 20)]
        seeds: u64,
    },
}

#[derive(Debug, Subcommand)]
enum PointcloudCommand {
    /// Sessions labeled by the simulated oracle.
    Simulate(SimulateArgs),
    /// Serve interactive labeling sessions over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InitKind {
    Random,
    Rotation,
    ComputerOnly,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Number of sessions, seeded `seed, seed + 1, ...`.
    #[arg(long, default_value_t = 1)]
    sessions: u64,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    queries: Option<usize>,
    #[arg(long, value_enum)]
    init: Option<InitKind>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    addr: IpAddr,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Session documents; defaults to `$MOM_DATA_DIR`, then `./mom-data`.
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum SideinfoCommand {
    /// Accuracy of each decision-maker model with learned and least-squares advice.
    Table {
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = 1000)]
        n: usize,
    },
}

#[derive(Debug, Subcommand)]
enum LoanrepCommand {
    /// Train avatar embeddings with a simulated respondent.
    Train(TrainArgs),
    /// Ridge regressions of input features on avatar channels.
    Analyze {
        #[arg(long)]
        z: PathBuf,
        #[arg(long)]
        x: PathBuf,
        #[arg(long, default_value_t = 5)]
        folds: usize,
    },
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// `synth` or a delimited loan file with a header row.
    #[arg(long, default_value = "synth")]
    data: String,
    /// Rows of the synthetic table.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,
    /// `auto` or a value in [0, 1].
    #[arg(long)]
    alpha: Option<String>,
    /// Test-split representations as JSON lines.
    #[arg(long, default_value = "z.jsonl")]
    z: PathBuf,
    /// Test-split standardized numeric features as JSON lines.
    #[arg(long, default_value = "x.jsonl")]
    x: PathBuf,
    /// Also train once per alpha in the default grid and report the trade-off.
    #[arg(long)]
    sweep: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() && !e.to_string().contains("Usage:") {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

type CliResult<T> = Result<T, Box<dyn std::error::Error>>;

/// Defaults overlaid with the `--config` file.
fn configured<T: Serialize + DeserializeOwned>(default: T, path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(default);
    };
    let patch: Value = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    let mut value = serde_json::to_value(default)?;
    mom_server::merge(&mut value, patch);
    serde_json::from_value(value).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn print_config<T: Serialize>(config: &T) -> CliResult<()> {
    println!("config: {}", serde_json::to_string(config)?);
    Ok(())
}

fn write_out<T: Serialize>(out: Option<&Path>, value: &T) -> CliResult<()> {
    if let Some(path) = out {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<bool> {
    let out = cli.out.as_deref();
    let cfg = cli.config.as_deref();
    match cli.command {
        Command::Pointcloud {
            command: PointcloudCommand::Simulate(a),
        } => simulate(&a, cli.seed, cfg, out),
        Command::Pointcloud {
            command: PointcloudCommand::Serve(a),
        } => {
            let dir = mom_server::resolve_data_dir(a.data_dir);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(mom_server::serve(SocketAddr::new(a.addr, a.port), dir))?;
            Ok(true)
        }
        Command::Sideinfo {
            command: SideinfoCommand::Table { seeds, n },
        } => {
            let mut config = configured(TableConfig::default(), cfg)?;
            config.seeds = seeds;
            config.n = n;
            print_config(&config)?;
            let table = run_table(&config)?;
            print!("{}", table.render());
            write_out(out, &table)?;
            Ok(true)
        }
        Command::Loanrep {
            command: LoanrepCommand::Train(a),
        } => loan_train(&a, cli.seed, cfg, out),
        Command::Loanrep {
            command: LoanrepCommand::Analyze { z, x, folds },
        } => loan_analyze(&z, &x, folds, out),
        Command::Selftest { seeds } => {
            let report = selftest::run(seeds, cli.seed)?;
            write_out(out, &report)?;
            Ok(report.passed)
        }
    }
}

fn simulate(
    a: &SimulateArgs,
    seed: u64,
    cfg: Option<&Path>,
    out: Option<&Path>,
) -> CliResult<bool> {
    let mut config = configured(PointcloudConfig::default(), cfg)?;
    if let Some(r) = a.rounds {
        config.mom.rounds = r;
    }
    if let Some(q) = a.queries {
        config.mom.queries_per_round = q;
    }
    match a.init {
        Some(InitKind::Random) => config.init = PhiInit::Random,
        Some(InitKind::Rotation) => config.init = PhiInit::Rotation,
        Some(InitKind::ComputerOnly) => {
            config.init = PhiInit::ComputerOnly(ComputerOnlyConfig::default())
        }
        None => {}
    }
    print_config(&config)?;
    let mut sessions = Vec::new();
    for s in seed..seed + a.sessions {
        let r = run_simulated_session(&config, s)?;
        let trace: Vec<String> = r.accuracy.iter().map(|v| format!("{v:.3}")).collect();
        println!(
            "seed {s}: accuracy by round [{}], final {:.3}",
            trace.join(", "),
            r.final_accuracy
        );
        sessions.push(json!({
            "seed": s,
            "series": r.accuracy.iter().enumerate()
                .map(|(round, accuracy)| json!({"round": round, "accuracy": accuracy}))
                .collect::<Vec<_>>(),
            "report": r,
        }));
    }
    write_out(out, &json!({"config": config, "sessions": sessions}))?;
    Ok(true)
}

fn loan_train(a: &TrainArgs, seed: u64, cfg: Option<&Path>, out: Option<&Path>) -> CliResult<bool> {
    let mut config = configured(LoanConfig::default(), cfg)?;
    if a.data == "synth" {
        if let LoanSource::Synth { n, .. } = &mut config.source {
            if let Some(rows) = a.n {
                *n = rows;
            }
        } else {
            config.source = LoanSource::Synth {
                n: a.n.unwrap_or(5000),
                seed,
            };
        }
    } else {
        config.source = LoanSource::File {
            path: PathBuf::from(&a.data),
        };
    }
    if let Some(r) = a.rounds {
        config.mom.rounds = r;
    }
    if let Some(alpha) = &a.alpha {
        config.embedder.alpha = if alpha == "auto" {
            AlphaChoice::Auto {
                grid: ALPHA_GRID.to_vec(),
            }
        } else {
            AlphaChoice::Fixed {
                value: alpha
                    .parse()
                    .map_err(|_| format!("--alpha must be auto or a number, got {alpha:?}"))?,
            }
        };
    }
    config.validate()?;
    print_config(&config)?;
    let run = train_loans(&config, seed)?;
    let r = &run.report;
    let trace: Vec<String> = r.accuracy.iter().map(|v| format!("{v:.3}")).collect();
    println!(
        "respondent accuracy by round [{}], final {:.3}",
        trace.join(", "),
        r.final_accuracy
    );
    println!(
        "shuffled {:.3}, machine {:.3}, happiness*sadness {:.4}, reconstruction mse {:.4}, alphas {:?}",
        r.shuffled_accuracy, r.machine_accuracy, r.happiness_sadness, r.reconstruction_mse, r.alphas
    );
    for (path, write) in [
        (
            &a.z,
            export_z as fn(&_, BufWriter<File>) -> mom_core::Result<()>,
        ),
        (&a.x, export_x),
    ] {
        write(&run, BufWriter::new(File::create(path)?))?;
        println!("wrote {}", path.display());
    }
    let sweep = if a.sweep {
        let points = alpha_sweep(&config, seed, &ALPHA_GRID)?;
        for p in &points {
            println!(
                "alpha {:.1}: accuracy {:.3}, reconstruction mse {:.4}",
                p.alpha, p.accuracy, p.reconstruction_mse
            );
        }
        Some(points)
    } else {
        None
    };
    write_out(out, &json!({"config": config, "report": r, "sweep": sweep}))?;
    Ok(true)
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    let f = BufReader::new(File::open(path).map_err(|e| format!("{}: {e}", path.display()))?);
    let mut out = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| format!("{}:{}: {e}", path.display(), i + 1))?,
        );
    }
    Ok(out)
}

fn loan_analyze(z_path: &Path, x_path: &Path, folds: usize, out: Option<&Path>) -> CliResult<bool> {
    let zs: Vec<ZRecord> = read_jsonl(z_path)?;
    let xs: Vec<XRecord> = read_jsonl(x_path)?;
    let by_id: std::collections::HashMap<&str, &XRecord> =
        xs.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut z_rows = Vec::new();
    let mut x_rows = Vec::new();
    for r in &zs {
        if let Some(x) = by_id.get(r.id.as_str()) {
            z_rows.push(r.z.clone());
            x_rows.push(x.x.clone());
        }
    }
    if z_rows.is_empty() {
        return Err("no ids in common between the z and x files".into());
    }
    println!(
        "{} rows matched of {} representations",
        z_rows.len(),
        zs.len()
    );
    let features: Vec<String> = NUMERIC.iter().map(|s| s.to_string()).collect();
    let channels: Vec<String> = CHANNELS.iter().map(|c| c.name.to_string()).collect();
    let z = Tensor::from_rows(&z_rows);
    let x = Tensor::from_rows(&x_rows);
    let report = ridge_analysis(
        &z,
        &x,
        &features[..x.row_len().min(features.len())],
        &channels,
        folds,
    )?;
    print!("{}", report.render());
    write_out(out, &report)?;
    Ok(true)
}
