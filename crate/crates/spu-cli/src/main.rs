//! Batch front-end for the sampled-pair thermal estimators.
//!
//! Subcommands: exact | resources | qmetts | mcmc-spu | diagnose.
//! Exit codes: 0 ok, 2 config error, 3 dense-oracle guard, 4 not converged.

mod commands;
mod config;
mod ledger;

use std::path::PathBuf;
use std::process::ExitCode;

use config::RunConfig;

const USAGE: &str = "\
usage: spu <exact|resources|qmetts|mcmc-spu|diagnose> [options] [LEDGER]

options:
  --config PATH   flat key = value run configuration
  --seed U64      master seed (overrides config)
  --workers K     worker threads (0 = all cores; overrides config)
  --out DIR       output directory (overrides config)
  --exhaustive    enumerate every (m, n, input) instead of sampling
  --shots COUNT   per-term shot budget for observable readout (0 = exact)
  --print-config  print the effective configuration and exit

diagnose takes the ledger CSV to replay as its positional argument.";

struct Cli {
    command: String,
    config_path: Option<PathBuf>,
    seed: Option<u64>,
    workers: Option<usize>,
    out_dir: Option<String>,
    exhaustive: bool,
    shots: Option<usize>,
    print_config: bool,
    positional: Option<PathBuf>,
}

fn parse_args(args: &[String]) -> Result<Cli, String> {
    if args.is_empty() {
        return Err("missing subcommand".to_string());
    }
    let mut cli = Cli {
        command: args[0].clone(),
        config_path: None,
        seed: None,
        workers: None,
        out_dir: None,
        exhaustive: false,
        shots: None,
        print_config: false,
        positional: None,
    };
    let mut iter = args[1..].iter();
    while let Some(arg) = iter.next() {
        let mut take = |name: &str| {
            iter.next()
                .map(|s| s.to_string())
                .ok_or_else(|| format!("{name} needs a value"))
        };
        match arg.as_str() {
            "--config" => cli.config_path = Some(PathBuf::from(take("--config")?)),
            "--seed" => {
                cli.seed = Some(
                    take("--seed")?
                        .parse()
                        .map_err(|e| format!("--seed: {e}"))?,
                )
            }
            "--workers" => {
                cli.workers = Some(
                    take("--workers")?
                        .parse()
                        .map_err(|e| format!("--workers: {e}"))?,
                )
            }
            "--out" => cli.out_dir = Some(take("--out")?),
            "--exhaustive" => cli.exhaustive = true,
            "--shots" => {
                cli.shots = Some(
                    take("--shots")?
                        .parse()
                        .map_err(|e| format!("--shots: {e}"))?,
                )
            }
            "--print-config" => cli.print_config = true,
            other if !other.starts_with("--") && cli.positional.is_none() => {
                cli.positional = Some(PathBuf::from(other));
            }
            other => return Err(format!("unknown argument '{other}'")),
        }
    }
    Ok(cli)
}

fn effective_config(cli: &Cli) -> Result<RunConfig, config::ConfigError> {
    let mut cfg = match &cli.config_path {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = cli.workers {
        cfg.workers = workers;
    }
    if let Some(out) = &cli.out_dir {
        cfg.out_dir = out.clone();
    }
    if let Some(shots) = cli.shots {
        cfg.shots = shots;
    }
    if cli.exhaustive {
        cfg.exhaustive = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli, cfg: &RunConfig) -> Result<(), commands::CmdError> {
    match cli.command.as_str() {
        "exact" => {
            let path = commands::cmd_exact(cfg)?;
            eprintln!("wrote {}", path.display());
        }
        "resources" => {
            let path = commands::cmd_resources(cfg)?;
            eprintln!("wrote {}", path.display());
        }
        "qmetts" => {
            let path = commands::cmd_qmetts(cfg)?;
            eprintln!("wrote {}", path.display());
        }
        "mcmc-spu" => {
            for path in commands::cmd_mcmcspu(cfg)? {
                eprintln!("wrote {}", path.display());
            }
        }
        "diagnose" => {
            let ledger = cli.positional.clone().ok_or_else(|| commands::CmdError {
                message: "diagnose needs a ledger CSV path".to_string(),
                exit_code: 2,
            })?;
            let (path, converged) = commands::cmd_diagnose(cfg, &ledger)?;
            eprintln!("wrote {}", path.display());
            if !converged {
                return Err(commands::CmdError {
                    message: "one or more branches did not pass the relaxation check".to_string(),
                    exit_code: 4,
                });
            }
        }
        other => {
            return Err(commands::CmdError {
                message: format!("unknown subcommand '{other}'\n{USAGE}"),
                exit_code: 2,
            })
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--help" || a == "-h") || args.is_empty() {
        eprintln!("{USAGE}");
        return ExitCode::from(if args.is_empty() { 2 } else { 0 });
    }
    let cli = match parse_args(&args) {
        Ok(cli) => cli,
        Err(msg) => {
            eprintln!("error: {msg}\n{USAGE}");
            return ExitCode::from(2);
        }
    };
    let cfg = match effective_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if cli.print_config {
        print!("{}", cfg.to_text());
        return ExitCode::SUCCESS;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .expect("worker pool");
    let result = pool.install(|| run(&cli, &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code as u8)
        }
    }
}
