use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use cellsleep::diagnostics;
use cellsleep::experiment::{self, run_single, summarize, write_outputs, RunConfig, RunResult};
use cellsleep::sim::{SlotOutcome, Strategy};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cellsleep", version, about = "Small-cell sleeping simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One strategy on one seeded layout.
    Simulate {
        /// TOML run configuration; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// classical, random-onoff, learning-noclusters, learning-kmeans,
        /// learning-spectral or learning-p2p.
        #[arg(long, default_value = "learning-spectral")]
        strategy: Strategy,
        #[arg(long)]
        slots: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also write one row per slot to trace.csv.
        #[arg(long)]
        trace: bool,
    },
    /// Every strategy, seed and sweep cell of a configuration.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Worker threads; 0 uses all cores.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Numerical checks of the learning dynamics on small games.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the default configuration as TOML.
    DefaultConfig,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(RunConfig::default()),
    }
}

fn trace_row(w: &mut impl Write, o: &SlotOutcome) -> std::io::Result<()> {
    let on: String = o.on.iter().map(|&b| if b { '1' } else { '0' }).collect();
    writeln!(
        w,
        "{},{},{},{},{},{},{}",
        o.slot,
        o.cost.iter().sum::<f64>(),
        o.power.iter().sum::<f64>(),
        o.load.iter().sum::<f64>(),
        on,
        o.unserved,
        o.reclustered as u8
    )
}

fn simulate(config: Option<&Path>, strategy: Strategy, slots: Option<u64>, seed: u64, out: &Path, trace: bool) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(s) = slots {
        cfg.run.slots = s;
    }
    cfg.validate()?;
    let cell = cfg.cells()[0];
    let cfg = cfg.for_cell(&cell);
    std::fs::create_dir_all(out)?;
    let scenario = cfg.scenario(seed)?;
    let mut writer = if trace {
        let mut w = BufWriter::new(File::create(out.join("trace.csv"))?);
        writeln!(w, "slot,total_cost,total_power_w,total_load,on_mask,unserved,reclustered")?;
        Some(w)
    } else {
        None
    };
    let mut io_error = None;
    let metrics = run_single(scenario, &cfg.sim, strategy, cfg.run.slots, seed, |o| {
        if let (Some(w), None) = (writer.as_mut(), io_error.as_ref()) {
            io_error = trace_row(w, o).err();
        }
    })?;
    if let Some(e) = io_error {
        return Err(e).context("writing trace.csv");
    }
    if let Some(mut w) = writer {
        w.flush()?;
    }
    println!("strategy          {}", strategy.name());
    println!("seed              {seed}");
    println!("slots             {}", metrics.slots);
    println!("avg cost          {:.6}", metrics.avg_cost);
    println!("avg energy (W)    {:.4}", metrics.avg_energy);
    println!("avg load          {:.4}", metrics.avg_load);
    println!("SBS OFF fraction  {:.4}", metrics.off_fraction_sbs);
    println!("unserved fraction {:.4}", metrics.unserved_fraction);
    println!("mean clusters     {:.2}", metrics.mean_clusters);
    let results = [RunResult { cell, strategy, seed, metrics: Ok(metrics) }];
    write_outputs(out, &results)?;
    Ok(())
}

fn sweep(config: &Path, out: &Path, threads: Option<usize>) -> Result<()> {
    let mut cfg = load_config(Some(config))?;
    if let Some(t) = threads {
        cfg.run.threads = t;
    }
    let results = experiment::run_experiment(&cfg)?;
    write_outputs(out, &results)?;
    let failures = results.iter().filter(|r| r.metrics.is_err()).count();
    println!("{:<22} {:>6} {:>5} {:>7} {:>12} {:>10} {:>8}", "strategy", "ues", "range", "chi", "cost", "ci95", "off");
    for row in summarize(&results) {
        println!(
            "{:<22} {:>6} {:>5} {:>7.2e} {:>12.6} {:>10.6} {:>8.4}",
            row.strategy.name(),
            row.cell.num_ues,
            row.cell.range_m,
            row.cell.chi,
            row.cost.mean,
            row.cost.ci95,
            row.off_fraction_sbs.mean
        );
    }
    if failures > 0 {
        eprintln!("{failures} of {} runs failed; see runs.csv", results.len());
    }
    Ok(())
}

fn verify(seed: u64) -> Result<bool> {
    let rows = diagnostics::verify(seed)?;
    println!("{:<40} {:<42} {:>12} {:>10}  result", "check", "instance", "measured", "threshold");
    for r in &rows {
        println!(
            "{:<40} {:<42} {:>12.4e} {:>10.3e}  {}",
            r.check,
            r.instance,
            r.measured,
            r.threshold,
            match (r.pass, r.gated) {
                (true, _) => "pass",
                (false, true) => "FAIL",
                (false, false) => "differs (informational)",
            }
        );
    }
    Ok(rows.iter().all(|r| r.ok()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate { config, strategy, slots, seed, out, trace } => {
            simulate(config.as_deref(), strategy, slots, seed, &out, trace).map(|_| true)
        }
        Command::Sweep { config, out, threads } => sweep(&config, &out, threads).map(|_| true),
        Command::Verify { seed } => verify(seed),
        Command::DefaultConfig => RunConfig::default().to_toml().map(|t| print!("{t}")).map(|_| true).map_err(Into::into),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
