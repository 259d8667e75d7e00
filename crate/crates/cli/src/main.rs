use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use forecast_market::io::{
    apply_override, atomic_write, emit_report, load_forecast_csv, load_realizations_csv,
    parse_config_table, run_replay, write_stats, write_trajectories, IoError, Mode, RunConfig,
    LEDGER_FILE,
};
use forecast_market::market::{read_ledger, replay_ledger, write_ledger, LedgerEntry};
use forecast_market::scenario::{missingness_sweep, run_monte_carlo, simulate_market};

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Parser)]
#[command(
    name = "fmarket",
    version,
    about = "Forecast market simulations, sweeps and replays"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo weight estimation on synthetic sellers.
    Simulate {
        #[arg(long, value_enum, default_value_t = SimMode::Invariant)]
        mode: SimMode,
        /// Also run the first run through a live market and write its ledger.
        #[arg(long)]
        market: bool,
        /// Client utility per round for --market.
        #[arg(long)]
        utility: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Bias and variance across missingness rates.
    Sweep {
        /// Comma-separated missingness rates.
        #[arg(long, value_delimiter = ',')]
        rates: Option<Vec<f64>>,
        #[command(flatten)]
        common: Common,
    },
    /// Replay recorded forecasts and realizations through the market.
    Replay {
        #[arg(long)]
        forecasts: Option<PathBuf>,
        #[arg(long)]
        realizations: Option<PathBuf>,
        /// Client utility paid at each settlement.
        #[arg(long)]
        utility: Option<f64>,
        #[arg(long)]
        horizon_steps: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Re-emit report files from a ledger.
    Report {
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long, default_value = "out")]
        output: PathBuf,
        /// Re-execute the ledger and fail if any settlement differs.
        #[arg(long)]
        verify: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SimMode {
    Invariant,
    Varying,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set scenario.runs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated quantile levels.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<f64>>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    missing_rate: Option<f64>,
    /// Comma-separated methods: qr, rqr, mean-impute, last-impute.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// qr or rqr.
    #[arg(long)]
    combiner: Option<String>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
}

fn list<T: ToString>(values: &[T], quote: bool) -> String {
    let items: Vec<String> = values
        .iter()
        .map(|v| {
            if quote {
                format!("\"{}\"", v.to_string())
            } else {
                v.to_string()
            }
        })
        .collect();
    format!("[{}]", items.join(", "))
}

fn quoted(path: &Path) -> String {
    toml::Value::String(path.display().to_string()).to_string()
}

impl Common {
    fn overrides(&self) -> Result<Vec<(String, String)>, IoError> {
        let mut out = Vec::new();
        for item in &self.set {
            let (key, value) = item.split_once('=').ok_or_else(|| {
                IoError::Invalid(format!("--set expects KEY=VALUE, got `{item}`"))
            })?;
            out.push((key.trim().to_string(), value.trim().to_string()));
        }
        let mut push = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                out.push((key.to_string(), v));
            }
        };
        push("output_dir", self.output.as_deref().map(quoted));
        push("seed", self.seed.map(|v| v.to_string()));
        push(
            "quantile_levels",
            self.levels.as_deref().map(|v| list(v, false)),
        );
        push("scenario.runs", self.runs.map(|v| v.to_string()));
        push("scenario.horizon", self.horizon.map(|v| v.to_string()));
        push("scenario.burn_in", self.burn_in.map(|v| v.to_string()));
        push(
            "scenario.missing_rate",
            self.missing_rate.map(|v| format!("{v:?}")),
        );
        push(
            "scenario.methods",
            self.methods.as_deref().map(|v| list(v, true)),
        );
        push(
            "engine.combiner",
            self.combiner.as_ref().map(|v| format!("\"{v}\"")),
        );
        push("engine.eta", self.eta.map(|v| format!("{v:?}")));
        push("allocation.delta", self.delta.map(|v| format!("{v:?}")));
        push("allocation.lambda", self.lambda.map(|v| format!("{v:?}")));
        Ok(out)
    }

    /// Loads the configuration file, applies overrides (the mode last) and
    /// resolves relative replay paths against the configuration's directory.
    fn load(&self, mode: Mode, extra: Vec<(String, String)>) -> Result<RunConfig, IoError> {
        let mut table = match &self.config {
            None => toml::Table::new(),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| IoError::Io {
                    path: path.clone(),
                    source,
                })?;
                text.parse::<toml::Table>().map_err(|e| IoError::Config {
                    key: path.display().to_string(),
                    message: e.to_string().trim_end().to_string(),
                })?
            }
        };
        let base = self
            .config
            .as_ref()
            .and_then(|p| p.parent())
            .map(Path::to_path_buf);
        if let (Some(base), Some(replay)) = (
            &base,
            table.get_mut("replay").and_then(|v| v.as_table_mut()),
        ) {
            for key in ["forecasts", "realizations"] {
                if let Some(toml::Value::String(s)) = replay.get_mut(key) {
                    if Path::new(s.as_str()).is_relative() {
                        *s = base.join(&*s).display().to_string();
                    }
                }
            }
        }
        for (key, value) in self.overrides()?.into_iter().chain(extra) {
            apply_override(&mut table, &key, &value)?;
        }
        table.insert("mode".into(), mode.name().into());
        let config = parse_config_table(table)?;
        config.check_inputs()?;
        Ok(config)
    }
}

fn ledger_bytes(entries: &[LedgerEntry]) -> Result<Vec<u8>, IoError> {
    let mut bytes = Vec::new();
    write_ledger(&mut bytes, entries)?;
    Ok(bytes)
}

fn prepare_output(config: &RunConfig) -> Result<PathBuf, IoError> {
    let dir = config.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|source| IoError::Io {
        path: dir.clone(),
        source,
    })?;
    atomic_write(&dir.join("manifest.toml"), config.manifest().as_bytes())?;
    Ok(dir)
}

fn simulate(config: &RunConfig) -> Result<(), IoError> {
    let dir = prepare_output(config)?;
    let scenario = config.scenario_config();
    let mut results = Vec::new();
    for &method in &config.scenario.methods {
        results.push(run_monte_carlo(&scenario, method)?);
    }
    let stats: Vec<_> = results
        .iter()
        .map(|r| (r.method, r.missing_rate, r.stats.clone()))
        .collect();
    write_stats(&dir.join("stats.csv"), &stats)?;
    write_trajectories(
        &dir.join("trajectories.csv"),
        &results,
        &scenario.quantile_levels,
        scenario.n(),
        config.scenario.trajectory_runs,
    )?;
    for r in &results {
        for s in &r.stats {
            println!(
                "{} tau={} mean|bias|={:.3e} mean var={:.3e}",
                r.method,
                s.tau,
                s.mean_abs_bias(),
                s.mean_var()
            );
        }
    }
    if config.simulate.market {
        let sim = simulate_market(
            &scenario,
            0,
            config.engine,
            config.allocation,
            config.simulate.utility,
            None,
            true,
        )?;
        let mut entries = vec![LedgerEntry::Header(sim.header.clone())];
        entries.extend(sim.records.into_iter().map(LedgerEntry::Settlement));
        atomic_write(&dir.join(LEDGER_FILE), &ledger_bytes(&entries)?)?;
        emit_report(&entries, &dir)?;
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn sweep(config: &RunConfig) -> Result<(), IoError> {
    let dir = prepare_output(config)?;
    let scenario = config.scenario_config();
    let mut rows = Vec::new();
    for &method in &config.scenario.methods {
        for entry in missingness_sweep(&scenario, method, &config.scenario.sweep_rates)? {
            println!(
                "{method} rate={} mean|bias|={:.3e} mean var={:.3e}",
                entry.missing_rate,
                entry.stats[0].mean_abs_bias(),
                entry.stats[0].mean_var()
            );
            rows.push((method, entry.missing_rate, entry.stats));
        }
    }
    write_stats(&dir.join("sweep.csv"), &rows)?;
    println!("wrote {}", dir.display());
    Ok(())
}

fn replay(config: &RunConfig) -> Result<(), IoError> {
    let table = load_forecast_csv(
        std::slice::from_ref(&config.replay.forecasts),
        &config.quantile_levels,
        config.replay.horizon_steps,
    )?;
    let realizations = load_realizations_csv(&config.replay.realizations)?;
    let output = run_replay(config, &table, &realizations)?;
    let dir = prepare_output(config)?;
    atomic_write(&dir.join(LEDGER_FILE), &ledger_bytes(&output.ledger)?)?;
    emit_report(&output.ledger, &dir)?;
    let r = &output.rewards;
    for (i, seller) in r.sellers.iter().enumerate() {
        println!(
            "{seller}: in-sample {:.4} out-of-sample {:.4} total {:.4}",
            r.in_sample[i], r.out_of_sample[i], r.total[i]
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn report(ledger: &Path, output: &Path, verify: bool) -> Result<(), IoError> {
    let file = std::fs::File::open(ledger).map_err(|source| IoError::Io {
        path: ledger.to_path_buf(),
        source,
    })?;
    let entries = read_ledger(std::io::BufReader::new(file))?;
    if verify {
        replay_ledger(&entries)?;
        println!("ledger verified: {} entries", entries.len());
    }
    for path in emit_report(&entries, output)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), IoError> {
    match cli.command {
        Command::Simulate {
            mode,
            market,
            utility,
            common,
        } => {
            let mode = match mode {
                SimMode::Invariant => Mode::SimulateInvariant,
                SimMode::Varying => Mode::SimulateVarying,
            };
            let mut extra = Vec::new();
            if market {
                extra.push(("simulate.market".into(), "true".into()));
            }
            if let Some(u) = utility {
                extra.push(("simulate.utility".into(), format!("{u:?}")));
            }
            simulate(&common.load(mode, extra)?)
        }
        Command::Sweep { rates, common } => {
            let extra = rates
                .map(|r| vec![("scenario.sweep_rates".to_string(), list(&r, false))])
                .unwrap_or_default();
            sweep(&common.load(Mode::Sweep, extra)?)
        }
        Command::Replay {
            forecasts,
            realizations,
            utility,
            horizon_steps,
            common,
        } => {
            let mut extra = Vec::new();
            if let Some(p) = forecasts {
                extra.push(("replay.forecasts".into(), quoted(&p)));
            }
            if let Some(p) = realizations {
                extra.push(("replay.realizations".into(), quoted(&p)));
            }
            if let Some(u) = utility {
                extra.push(("replay.utility".into(), format!("{u:?}")));
            }
            if let Some(k) = horizon_steps {
                extra.push(("replay.horizon_steps".into(), k.to_string()));
            }
            replay(&common.load(Mode::Replay, extra)?)
        }
        Command::Report {
            ledger,
            output,
            verify,
        } => report(&ledger, &output, verify),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_RUNTIME
            })
        }
    }
}
