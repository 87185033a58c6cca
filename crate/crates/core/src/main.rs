use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use wtrom::harness::{self, emit, CctOptions, ModelKind, Trajectory};
use wtrom::refmodel::NotchFilterDesign;
use wtrom::rom::RunStatus;
use wtrom::Error;

/// Reduced-order PLL model of a grid-following turbine converter under
/// grid faults, with a full-order reference model to check it against.
#[derive(Parser)]
#[command(name = "wtrom", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Rom,
    Refmodel,
    Both,
}

impl From<Model> for ModelKind {
    fn from(m: Model) -> Self {
        match m {
            Model::Rom => ModelKind::Rom,
            Model::Refmodel => ModelKind::Refmodel,
            Model::Both => ModelKind::Both,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write CSV (and SVG with --out).
    Run {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value = "rom")]
        model: Model,
        /// Output directory; without it the trajectory CSV goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rerun a scenario over values of one numeric field.
    Sweep {
        scenario: PathBuf,
        /// Dotted path into the scenario file, e.g. `fault.zf_ohm`.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Vec<f64>,
        #[arg(long, value_enum, default_value = "rom")]
        model: Model,
        /// Also search the clearing time per value within this window.
        #[arg(long, value_delimiter = ',', num_args = 1)]
        cct_window: Option<Vec<f64>>,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
    },
    /// Critical clearing time by bisection.
    Cct {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',')]
        window: Vec<f64>,
        #[arg(long)]
        tol: f64,
        #[arg(long, value_enum, default_value = "rom")]
        model: Model,
    },
    /// Pre- and post-fault sequence voltages, closed form and circuit solve.
    Faultcalc { scenario: PathBuf },
    /// Frequency response of the discretized notch as CSV.
    NotchBode {
        #[arg(long)]
        zeta: f64,
        /// Notch center in Hz.
        #[arg(long)]
        center: f64,
        /// Sample time in s.
        #[arg(long, default_value_t = 50e-6)]
        dt: f64,
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
}

enum Failure {
    Usage(String),
    Model(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Model(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Model(e.into())
    }
}

fn window(v: &[f64], flag: &str) -> Result<(f64, f64), Failure> {
    match v {
        [a, b] => Ok((*a, *b)),
        _ => Err(Failure::Usage(format!("{flag} takes two comma-separated values A,B"))),
    }
}

fn status_line(t: &Trajectory) -> String {
    match t.status {
        RunStatus::Completed => format!("{}: completed at t = {} s", t.model, t.t_end().unwrap_or(0.0)),
        RunStatus::Diverged { t: td } => format!("{}: diverged at t = {td} s", t.model),
    }
}

fn write_run(out: &Path, label: &str, run: &harness::RunOutput) -> Result<(), Failure> {
    fs::create_dir_all(out)?;
    let trajs: Vec<&Trajectory> = run.rom.iter().chain(run.refmodel.iter()).collect();
    for t in &trajs {
        let file = fs::File::create(out.join(format!("{label}_{}.csv", t.model)))?;
        emit::write_trajectory_csv(t, io::BufWriter::new(file))?;
    }
    emit::write_file(&out.join(format!("{label}.svg")), emit::trajectory_svg(&trajs).as_bytes())?;
    if let Some(r) = &run.report {
        let file = fs::File::create(out.join(format!("{label}_report.csv")))?;
        emit::write_report_csv(r, file)?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let stdout = io::stdout();
    match cli.command {
        Command::Run { scenario, model, out } => {
            let sc = harness::load_scenario(&scenario)?;
            let run = harness::run(&sc, model.into())?;
            match out {
                Some(dir) => {
                    write_run(&dir, &sc.label, &run)?;
                    for t in run.rom.iter().chain(run.refmodel.iter()) {
                        println!("{}", status_line(t));
                    }
                }
                None if run.report.is_none() => {
                    let t = run.rom.as_ref().or(run.refmodel.as_ref()).expect("one model ran");
                    emit::write_trajectory_csv(t, stdout.lock())?;
                }
                None => {
                    for t in run.rom.iter().chain(run.refmodel.iter()) {
                        println!("{}", status_line(t));
                    }
                }
            }
            if let Some(r) = &run.report {
                emit::write_report_csv(r, stdout.lock())?;
            }
        }
        Command::Sweep { scenario, param, values, model, cct_window, tol } => {
            let model: ModelKind = model.into();
            if model == ModelKind::Both {
                return Err(Failure::Usage("sweep runs one model, rom or refmodel".into()));
            }
            let cct = cct_window
                .map(|w| window(&w, "--cct-window").map(|window| CctOptions { window, tol }))
                .transpose()?;
            let doc = harness::load_document(&scenario)?;
            let rows = harness::sweep(&doc, &param, &values, model, cct)?;
            emit::write_sweep_csv(&rows, stdout.lock())?;
        }
        Command::Cct { scenario, window: w, tol, model } => {
            let model: ModelKind = model.into();
            if model == ModelKind::Both {
                return Err(Failure::Usage("cct runs one model, rom or refmodel".into()));
            }
            let w = window(&w, "--window")?;
            let sc = harness::load_scenario(&scenario)?;
            let c = harness::critical_clearing_time(&sc, w, tol, model)?;
            println!("cct_s = {}", c.cct);
            println!("bracket_s = {}, {}", c.bracket.0, c.bracket.1);
            println!("bisection_runs = {}", c.bisection_runs);
        }
        Command::Faultcalc { scenario } => {
            let sc = harness::load_scenario(&scenario)?;
            let r = harness::fault_report(&sc)?;
            let mut o = stdout.lock();
            writeln!(o, "fault {} zf = {} pu", r.kind.label(), sc.zf_pu())?;
            writeln!(o, "prefault v+ = {}", r.prefault_pos)?;
            writeln!(o, "prefault v- = {}", r.prefault_neg)?;
            writeln!(o, "postfault v+ closed form = {}", r.closed_form_pos)?;
            writeln!(o, "postfault v+ circuit     = {}", r.circuit_pos)?;
            writeln!(o, "postfault v- circuit     = {}", r.circuit_neg)?;
            writeln!(o, "relative discrepancy = {:e}{}", r.relative_discrepancy, if r.flagged { " (flagged)" } else { "" })?;
            if let Some(note) = r.note {
                writeln!(o, "note: {note}")?;
            }
        }
        Command::NotchBode { zeta, center, dt, points } => {
            let d = NotchFilterDesign::new(2.0 * std::f64::consts::PI * center, zeta, dt)?;
            let mut w = csv::Writer::from_writer(stdout.lock());
            w.write_record(["f_hz", "magnitude_db", "phase_deg"]).map_err(Error::from)?;
            for (f, m, p) in harness::notch_bode(&d, points) {
                w.write_record([f.to_string(), m.to_string(), p.to_string()]).map_err(Error::from)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Model(e)) => {
            eprintln!("error: {e}");
            let validation = matches!(
                e,
                Error::Parse { .. } | Error::Validation(_) | Error::UnknownParameter(_) | Error::Signal(_)
            );
            ExitCode::from(if validation { 2 } else { 3 })
        }
    }
}
