//! `grflow`: run bundled or user-supplied flow scenarios, write deterministic
//! reports and plot-ready CSV series, and measure convergence orders under
//! grid refinement.
//!
//! Exit codes: 0 all checks pass, 2 a check is violated beyond its budget,
//! 3 a numerical failure (singularity, solver breakdown), 1 config errors.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use grflow::estimates::Verdict;
use grflow::flow::{evolve, FlowState, StepControl};
use grflow::report::{fmt17, to_json, to_json_17};
use grflow::run::{refine, run_scenario, RunError};
use grflow::scenario::{bundled, bundled_names, Backend, Scenario};
use grflow::trajectory_io::export_json;

#[derive(Parser)]
#[command(name = "grflow", version, about = "Generalized Ricci flow laboratory")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Path to a scenario JSON file, or the name of a bundled scenario.
    #[arg(long)]
    config: String,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the scenario's sampling seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads. Every computation is ordered deterministically, so
    /// the output bytes do not depend on this value.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario: report.json plus series/*.csv in the output directory.
    Run(Common),
    /// Convergence study: rerun a grid scenario with spacing and output step
    /// halved per level, and fit the observed residual orders.
    Refine {
        #[command(flatten)]
        common: Common,
        /// Number of refinement levels (at least 2).
        #[arg(long, default_value_t = 3)]
        level: usize,
    },
    /// Evolve the flow only and write trajectory.json.
    ExportTrajectory(Common),
    /// List the bundled scenarios.
    ListScenarios,
}

fn load_scenario(common: &Common) -> Result<Scenario, String> {
    let path = PathBuf::from(&common.config);
    let mut s = if path.exists() {
        let text = fs::read_to_string(&path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Scenario::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))?
    } else {
        bundled(&common.config).map_err(|e| e.to_string())?
    };
    if let Some(seed) = common.seed {
        match s.grid.as_mut() {
            Some(g) => g.estimates.seed = seed,
            None => return Err("--seed only applies to grid scenarios".into()),
        }
    }
    if common.threads == 0 {
        return Err("--threads must be at least 1".into());
    }
    Ok(s)
}

fn exit_for(e: &RunError) -> ExitCode {
    match e {
        RunError::Config(_) => ExitCode::from(1),
        _ => ExitCode::from(3),
    }
}

fn write(path: &PathBuf, contents: &str) -> Result<(), String> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| format!("{}: {e}", parent.display()))?;
    }
    fs::write(path, contents).map_err(|e| format!("{}: {e}", path.display()))
}

fn do_run(common: &Common) -> Result<ExitCode, String> {
    let s = load_scenario(common)?;
    let out = match run_scenario(&s) {
        Ok(out) => out,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(exit_for(&e));
        }
    };
    write(&common.out.join("report.json"), &(to_json(&out.report) + "\n"))?;
    for (name, contents) in &out.series {
        write(&common.out.join("series").join(name), contents)?;
    }
    println!("scenario {} ({})", out.report.scenario, &out.report.digest[..12]);
    for c in &out.report.checks {
        println!(
            "  {:<22} {:<12} slack={} budget={}",
            c.check,
            format!("{:?}", c.verdict).to_lowercase(),
            fmt17(c.worst_slack),
            fmt17(c.budget)
        );
    }
    println!("overall: {:?}", out.report.overall);
    Ok(match out.report.overall {
        Verdict::Violated => ExitCode::from(2),
        _ => ExitCode::SUCCESS,
    })
}

fn do_refine(common: &Common, level: usize) -> Result<ExitCode, String> {
    let s = load_scenario(common)?;
    let study = match refine(&s, level) {
        Ok(study) => study,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(exit_for(&e));
        }
    };
    write(&common.out.join("refinement.json"), &(to_json_17(&study) + "\n"))?;
    println!("scenario {}", study.scenario);
    if let Some(note) = &study.note {
        println!("note: {note}");
    }
    for row in &study.levels {
        print!("  level {} res {:>4} h={}", row.level, row.resolution, fmt17(row.spacing));
        for (name, r) in &row.residuals {
            print!(" {name}={}", fmt17(*r));
        }
        println!();
    }
    for (name, slope) in &study.slopes {
        println!("  order[{name}] = {}", fmt17(*slope));
    }
    Ok(ExitCode::SUCCESS)
}

fn do_export(common: &Common) -> Result<ExitCode, String> {
    let s = load_scenario(common)?;
    if s.backend != Backend::Grid {
        return Err("export-trajectory needs a grid scenario".into());
    }
    let grid = s.grid_spec().map_err(|e| e.to_string())?;
    let ctrl = StepControl { cfl: s.control.cfl, cadence: s.control.cadence };
    let state = FlowState {
        g: s.initial_metric(&grid).map_err(|e| e.to_string())?,
        h: s.initial_h(&grid).map_err(|e| e.to_string())?,
        t: 0.0,
    };
    let traj = match evolve(state, s.control.horizon, &ctrl) {
        Ok(traj) => traj,
        Err(fail) => {
            eprintln!("error: {}", fail.error);
            return Ok(ExitCode::from(3));
        }
    };
    let path = common.out.join("trajectory.json");
    write(&path, &(export_json(&traj) + "\n"))?;
    println!("wrote {} ({} snapshots)", path.display(), traj.states.len());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Run(common) => do_run(common),
        Cmd::Refine { common, level } => do_refine(common, *level),
        Cmd::ExportTrajectory(common) => do_export(common),
        Cmd::ListScenarios => {
            for name in bundled_names() {
                println!("{name}");
            }
            Ok(ExitCode::SUCCESS)
        }
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
