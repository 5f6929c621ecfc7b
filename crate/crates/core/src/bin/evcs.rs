use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use evcs_core::benchmarks::Policy;
use evcs_core::cli::{self, SweepParam};
use evcs_core::scenario::ConfigFile;
use evcs_core::{DispatchMode, EngineOptions, HUpdate, Result, Scenario, SyntheticConfig};

#[derive(Parser)]
#[command(name = "evcs", version, about = "Two-stage online EV charging station scheduler")]
struct Cli {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Comparison policy to evaluate next to the proposed one, or `all`.
    #[arg(long)]
    benchmark: Option<String>,
    /// Output directory for the report and traces.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the per-EV trace.
    #[arg(long)]
    per_ev_trace: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Scenario config file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// RNG seed for synthesized inputs.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of synthesized EVs.
    #[arg(long)]
    evs: Option<usize>,
    /// Slots in the one-day horizon.
    #[arg(long)]
    slots: Option<usize>,
    /// Flexibility weight.
    #[arg(long)]
    v1: Option<f64>,
    /// Cost weight; half the admissible maximum when unset.
    #[arg(long)]
    v2: Option<f64>,
    /// Band interpolation point in [0, 1].
    #[arg(long)]
    alpha: Option<f64>,
    /// Slots between carbon trading opportunities.
    #[arg(long)]
    dtc: Option<usize>,
    #[arg(long, value_enum, default_value_t = HUpdateArg::Anchored)]
    h_update: HUpdateArg,
    /// Pin the EV dispatch to the alpha interpolation of the band.
    #[arg(long)]
    alpha_dispatch: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum HUpdateArg {
    Anchored,
    Recursive,
}

#[derive(Subcommand)]
enum Command {
    /// One run per value of a parameter; CSV on stdout or in `--out`.
    Sweep {
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
}

impl ScenarioArgs {
    fn scenario(&self) -> Result<Scenario> {
        let mut cfg = match &self.config {
            Some(p) => ConfigFile::read(p)?,
            None => ConfigFile::synthetic(SyntheticConfig::default()),
        };
        let s = &mut cfg.settings;
        if let Some(v) = self.seed {
            s.seed = v;
        }
        if let Some(v) = self.evs {
            s.evs = v;
        }
        if let Some(v) = self.slots {
            s.slots = v;
        }
        if let Some(v) = self.v1 {
            s.v1 = v;
        }
        if self.v2.is_some() {
            s.v2 = self.v2;
        }
        if let Some(v) = self.alpha {
            s.alpha = v;
        }
        if let Some(v) = self.dtc {
            s.dtc = v;
        }
        cfg.into_scenario()
    }

    fn options(&self) -> EngineOptions {
        EngineOptions {
            h_update: match self.h_update {
                HUpdateArg::Anchored => HUpdate::Anchored,
                HUpdateArg::Recursive => HUpdate::Recursive,
            },
            dispatch: if self.alpha_dispatch { DispatchMode::Alpha } else { DispatchMode::Stage2 },
        }
    }
}

fn run(cli: &Cli) -> Result<bool> {
    let s = cli.scenario.scenario()?;
    let opts = cli.scenario.options();

    if let Some(Command::Sweep { param, values }) = &cli.command {
        let param: SweepParam = param.parse()?;
        let rows = cli::sweep(&s, param, values, &opts)?;
        let csv = cli::sweep_csv(param, &rows);
        match &cli.out {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|e| evcs_core::Error::Io { path: dir.clone(), source: e })?;
                let path = dir.join(format!("sweep_{}.csv", param.name()));
                std::fs::write(&path, csv).map_err(|e| evcs_core::Error::Io { path, source: e })?;
            }
            None => print!("{csv}"),
        }
        return Ok(rows.iter().all(|r| r.ok()));
    }

    let (out, report) = cli::run(&s, &opts)?;
    print!("{}", report.render());
    if let Some(dir) = &cli.out {
        cli::write_report(dir, &report)?;
        cli::write_traces(dir, &s, &out, cli.per_ev_trace)?;
    }
    if let Some(which) = &cli.benchmark {
        let policies: Vec<Policy> = if which == "all" {
            Policy::ALL.to_vec()
        } else {
            which.split(',').map(str::parse).collect::<Result<_>>()?
        };
        let mut rows = Vec::with_capacity(policies.len());
        for p in policies {
            rows.push(match p {
                Policy::Proposed => cli::proposed_result(&out),
                _ => cli::run_benchmark(&s, p, &out.stage1.band)?,
            });
        }
        println!();
        print!("{}", cli::comparison_text(&rows));
        if let Some(dir) = &cli.out {
            cli::write_comparison(dir, &rows)?;
        }
    }
    Ok(report.all_pass())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
