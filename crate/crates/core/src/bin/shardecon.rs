//! Command-line entry points: `security` prints committee failure
//! probabilities, `run` executes a simulation and writes its artifacts.
//!
//! Exit codes: 0 success, 2 usage or config error, 3 I/O error.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use shardecon::config::SimConfig;
use shardecon::output;
use shardecon::security::{self, ShardConfig};
use shardecon::sim::Simulator;

const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(
    name = "shardecon",
    version,
    about = "Sharded-blockchain economy simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Failure probabilities for committee-based sharding
    Security(SecurityArgs),
    /// Run the economy simulation and write its metrics
    Run(RunArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Model {
    /// Hypergeometric committee takeover (sampling without replacement)
    Classic,
    /// Jury model: one member per occupation per shard
    Jury,
}

#[derive(Args)]
struct SecurityArgs {
    /// Total node count
    #[arg(long)]
    n: u64,
    /// Adversary node count
    #[arg(long)]
    t: u64,
    /// Shard counts to evaluate: `MAX` for 1..=MAX, or `LO..HI` inclusive
    #[arg(long, value_name = "RANGE")]
    s_range: String,
    /// Consensus threshold as a fraction of the shard size. Jury default:
    /// 0.7 (T = ceil(frac*m)). Classic default: the strict majority count.
    #[arg(long)]
    threshold_frac: Option<f64>,
    /// Security model to evaluate
    #[arg(long, value_enum)]
    model: Model,
    /// Also print the exact rational probability
    #[arg(long)]
    exact: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Path to the `key = value` config file
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing)
    #[arg(long)]
    out: PathBuf,
    /// Seed override; wins over the config's `seed` key
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; the output is byte-identical for any value
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

fn main() -> ExitCode {
    // clap itself exits with code 2 on unparseable flags.
    let cli = Cli::parse();
    match cli.command {
        Command::Security(args) => cmd_security(args),
        Command::Run(args) => cmd_run(args),
    }
}

fn usage_error(msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_USAGE)
}

fn parse_s_range(text: &str) -> Option<(u64, u64)> {
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: u64 = lo.trim().parse().ok()?;
        let hi: u64 = hi.trim().parse().ok()?;
        (lo >= 1 && lo <= hi).then_some((lo, hi))
    } else {
        let hi: u64 = text.trim().parse().ok()?;
        (hi >= 1).then_some((1, hi))
    }
}

fn cmd_security(args: SecurityArgs) -> ExitCode {
    if args.n == 0 {
        return usage_error("--n must be at least 1");
    }
    if args.t > args.n {
        return usage_error("--t cannot exceed --n");
    }
    let Some((s_lo, s_hi)) = parse_s_range(&args.s_range) else {
        return usage_error("--s-range must be `MAX` or `LO..HI` with 1 <= LO <= HI");
    };
    if s_hi > args.n {
        return usage_error("--s-range upper end cannot exceed --n");
    }
    if let Some(frac) = args.threshold_frac {
        if !(frac > 0.5 && frac <= 1.0) {
            return usage_error("--threshold-frac must lie in (0.5, 1]");
        }
    }
    if args.model == Model::Jury && args.threshold_frac.is_none() {
        // Matches the headline jury analysis; stated in the row output.
        eprintln!("note: --threshold-frac not given, using 0.7");
    }

    if args.exact {
        println!("s\tm\tT\tlog10\texact");
    } else {
        println!("s\tm\tT\tlog10");
    }
    for s in s_lo..=s_hi {
        let m = args.n / s;
        if m == 0 {
            break;
        }
        let (threshold, prob) = match args.model {
            Model::Classic => {
                let k = match args.threshold_frac {
                    Some(frac) => security::ceil_frac_mul(frac, m).expect("validated fraction"),
                    None => security::majority_threshold(m),
                };
                let p = match security::hypergeom_tail(args.n, args.t, m, k) {
                    Ok(p) => p,
                    Err(e) => return usage_error(&e.to_string()),
                };
                (k, p)
            }
            Model::Jury => {
                let frac = args.threshold_frac.unwrap_or(0.7);
                let threshold = security::ceil_frac_mul(frac, m).expect("validated fraction");
                let cfg = match ShardConfig::new(args.n, s, threshold, args.t) {
                    Ok(cfg) => cfg,
                    Err(e) => return usage_error(&e.to_string()),
                };
                (threshold, security::jury_failure(&cfg))
            }
        };
        if args.exact {
            println!(
                "{s}\t{m}\t{threshold}\t{:.6}\t{}/{}",
                prob.log10(),
                prob.exact().numer(),
                prob.exact().denom()
            );
        } else {
            println!("{s}\t{m}\t{threshold}\t{:.6}", prob.log10());
        }
    }
    ExitCode::SUCCESS
}

fn cmd_run(args: RunArgs) -> ExitCode {
    let text = match fs::read_to_string(&args.config) {
        Ok(text) => text,
        Err(e) => return usage_error(&format!("config {}: {e}", args.config.display())),
    };
    let config = match SimConfig::parse(&text, args.seed) {
        Ok(config) => config,
        Err(e) => return usage_error(&e.to_string()),
    };

    if let Err(e) = fs::create_dir_all(&args.out) {
        eprintln!("error: output dir {}: {e}", args.out.display());
        return ExitCode::from(EXIT_IO);
    }

    // The manifest goes out before the run starts; it is sufficient to
    // reproduce the run exactly.
    let mut outputs = vec!["intervals.csv"];
    if config.oplog {
        outputs.push("oplog.tsv");
    }
    let manifest = output::render_manifest(&config, env!("CARGO_PKG_VERSION"), &outputs);
    if let Err(e) = fs::write(args.out.join("manifest"), manifest) {
        eprintln!("error: writing manifest: {e}");
        return ExitCode::from(EXIT_IO);
    }

    let run = match Simulator::run(config, args.threads.max(1)) {
        Ok(run) => run,
        Err(e) => return usage_error(&e.to_string()),
    };

    let csv_path = args.out.join("intervals.csv");
    let csv = match fs::File::create(&csv_path) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {}: {e}", csv_path.display());
            return ExitCode::from(EXIT_IO);
        }
    };
    if let Err(e) = output::write_intervals_csv(std::io::BufWriter::new(csv), &run.records) {
        eprintln!("error: writing intervals.csv: {e}");
        return ExitCode::from(EXIT_IO);
    }

    if let Some(log) = &run.oplog {
        let path = args.out.join("oplog.tsv");
        let file = match fs::File::create(&path) {
            Ok(f) => f,
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                return ExitCode::from(EXIT_IO);
            }
        };
        if let Err(e) = output::write_oplog(std::io::BufWriter::new(file), log) {
            eprintln!("error: writing oplog.tsv: {e}");
            return ExitCode::from(EXIT_IO);
        }
    }

    println!(
        "wrote {} intervals to {}",
        run.records.len(),
        args.out.display()
    );
    ExitCode::SUCCESS
}
