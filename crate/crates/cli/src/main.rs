use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use starlab_core::codes::{codewords, kl_check, qutrit_lowering_ops};
use starlab_core::fitters::{fit_exponential_with, FitOptions};
use starlab_core::rates::predict;
use starlab_core::starmodel::qq_dark_coupling;
use starlab_core::{MhzParams, ModeLayout};

use starlab_cli::config::{
    apply_override, load_params, ExperimentConfig, InitialState, SweepAxis, Tie, DEFAULT_DT_US,
    DEFAULT_T_MAX_US,
};
use starlab_cli::error::{io_err, CliError, Result};
use starlab_cli::experiment::run_point;
use starlab_cli::presets::{run_preset, Preset, PresetOptions, PresetOutput};
use starlab_cli::report::{emit_report, write_json};
use starlab_cli::sweep::{run_sweep, settings};

#[derive(Parser)]
#[command(name = "starlab", version, about = "Star-code autonomous error correction simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ParamArgs {
    /// Flat key = value parameter file (MHz, us).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Parameter override, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ParamArgs {
    fn resolve(&self) -> Result<MhzParams> {
        let mut p = match &self.params {
            Some(path) => load_params(path, MhzParams::default())?,
            None => MhzParams::default(),
        };
        for o in &self.overrides {
            apply_override(&mut p, o)?;
        }
        Ok(p)
    }
}

#[derive(Args, Clone)]
struct RunArgs {
    #[command(flatten)]
    params: ParamArgs,
    /// Initial logical state: L0, L1 or Lx.
    #[arg(long, default_value = "L0")]
    initial: InitialState,
    #[arg(long = "t-max-us", default_value_t = DEFAULT_T_MAX_US)]
    t_max_us: f64,
    #[arg(long = "dt-us", default_value_t = DEFAULT_DT_US)]
    dt_us: f64,
    /// Defaults to 10% of the run.
    #[arg(long = "burn-in-us")]
    burn_in_us: Option<f64>,
    /// Pin the fitted offset.
    #[arg(long = "fix-offset")]
    fix_offset: Option<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        Ok(ExperimentConfig {
            params_file: self.params.params.clone(),
            params: self.params.resolve()?,
            initial: self.initial,
            t_max_us: self.t_max_us,
            dt_us: self.dt_us,
            burn_in_us: self.burn_in_us,
            fix_offset: self.fix_offset,
            out_dir: self.out.clone(),
            ..ExperimentConfig::default()
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Propagate one trajectory, fit it and write `trajectory.csv` and `point.json`.
    Simulate(RunArgs),
    /// Sweep a parameter grid and write `sweep.csv` and `meta.json`.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// `name:start:stop:points[:log]` or `name=v1,v2,...`; repeatable.
        #[arg(long = "axis", required = true)]
        axes: Vec<SweepAxis>,
        /// `kappa_equals_omega` or `optimal_detuning`; repeatable.
        #[arg(long = "tie")]
        ties: Vec<Tie>,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[arg(long = "store-trajectories")]
        store_trajectories: bool,
    },
    /// Print the analytic rate set as JSON.
    Rates {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the Knill-Laflamme conditions and the dark-state property.
    Klcheck {
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Fit `A exp(-t/T_L) + C` to a CSV trace.
    Fit {
        #[arg(long)]
        input: PathBuf,
        /// Column to fit; defaults to the second column.
        #[arg(long)]
        column: Option<String>,
        /// Defaults to 10% of the trace.
        #[arg(long = "burn-in-us")]
        burn_in_us: Option<f64>,
        #[arg(long = "fix-offset")]
        fix_offset: Option<f64>,
    },
    /// Run a figure preset: fig3a, fig3b, fig4, figA1, figA2.
    Reproduce {
        preset: Preset,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Points per axis for the 2D presets.
        #[arg(long)]
        grid: Option<usize>,
        /// Swept values for the 1D presets, comma separated.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long = "t-max-us")]
        t_max_us: Option<f64>,
        #[arg(long = "dt-us")]
        dt_us: Option<f64>,
        #[arg(long = "burn-in-us")]
        burn_in_us: Option<f64>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long = "store-trajectories")]
        store_trajectories: bool,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = args.config()?;
            cfg.validate()?;
            let (summary, traj) = run_point(&cfg.params, &settings(&cfg))?;
            std::fs::create_dir_all(&cfg.out_dir).map_err(io_err(&cfg.out_dir))?;
            let csv_path = cfg.out_dir.join("trajectory.csv");
            let file = std::fs::File::create(&csv_path).map_err(io_err(&csv_path))?;
            traj.write_csv(file)?;
            write_json(&cfg.out_dir.join("point.json"), &summary)?;
            match (&summary.fit, &summary.fit_error) {
                (Some(f), _) => println!(
                    "T_L = {:.3} us (stderr {:.3}), predicted {}",
                    f.t_l,
                    f.stderr_t_l,
                    summary
                        .predicted_t_l_us
                        .map_or("n/a".to_string(), |t| format!("{t:.3} us"))
                ),
                (None, Some(e)) => println!("fit failed: {e}"),
                (None, None) => {}
            }
        }
        Command::Sweep {
            run,
            axes,
            ties,
            workers,
            store_trajectories,
        } => {
            let cfg = ExperimentConfig {
                axes,
                ties,
                workers,
                store_trajectories,
                ..run.config()?
            };
            let res = run_sweep(&cfg)?;
            let written = emit_report(&cfg.out_dir, &cfg, &res, serde_json::Value::Null)?;
            report_written(&written);
        }
        Command::Rates { params, out } => {
            let rates = predict(&params.resolve()?.to_system()?)?;
            match out {
                Some(path) => write_json(&path, &rates)?,
                None => print_json(&rates)?,
            }
        }
        Command::Klcheck { params } => {
            let p = params.resolve()?.to_system()?;
            let layout = ModeLayout::star();
            let cw = codewords(&layout)?;
            let report = kl_check(&cw, &qutrit_lowering_ops(&layout)?)?;
            let dark = qq_dark_coupling(&p)?;
            let residual = [&cw.l0, &cw.l1]
                .iter()
                .map(|s| {
                    let v = dark.apply(s.as_ket().expect("codewords are kets"));
                    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
                })
                .fold(0.0, f64::max);
            let ok = report.passed() && residual <= 1e-12;
            print_json(&serde_json::json!({
                "knill_laflamme": report,
                "dark_state_residual": residual,
                "passed": ok,
            }))?;
            if !ok {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Fit {
            input,
            column,
            burn_in_us,
            fix_offset,
        } => {
            let (t, y) = read_trace(&input, column.as_deref())?;
            let fit = fit_exponential_with(
                &t,
                &y,
                &FitOptions {
                    burn_in: burn_in_us,
                    fix_offset,
                },
            )?;
            print_json(&fit)?;
        }
        Command::Reproduce {
            preset,
            out,
            workers,
            grid,
            values,
            t_max_us,
            dt_us,
            burn_in_us,
            overrides,
            store_trajectories,
        } => {
            let opts = PresetOptions {
                grid,
                t_max_us,
                dt_us,
                burn_in_us,
                workers,
                store_trajectories,
                overrides,
                values,
                out_dir: out,
            };
            let (output, written) = run_preset(preset, &opts)?;
            match output {
                PresetOutput::Sweeps(sweeps) => {
                    for (label, _, res) in &sweeps {
                        if let Some(best) = res.best() {
                            println!(
                                "{preset}/{label}: best T_L = {:.2} us at {:?} ({:.1} s)",
                                best.summary.t_l().unwrap_or(f64::NAN),
                                best.coords,
                                res.runtime_s
                            );
                        }
                    }
                }
                PresetOutput::Traces(res) => {
                    let show = |f: &Option<starlab_core::fitters::FitResult>| {
                        f.as_ref().map_or("fit failed".to_string(), |f| format!("{:.2} us", f.t_l))
                    };
                    println!(
                        "figA2: L0 {}, Lx {}, bare {}",
                        show(&res.fit_l0),
                        show(&res.fit_lx),
                        show(&res.fit_bare)
                    );
                }
            }
            report_written(&written);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn report_written(paths: &[PathBuf]) {
    let stored = paths
        .iter()
        .filter(|p| p.components().any(|c| c.as_os_str() == "trajectories"))
        .count();
    for p in paths.iter().filter(|p| !p.components().any(|c| c.as_os_str() == "trajectories")) {
        println!("wrote {}", p.display());
    }
    if stored > 0 {
        println!("wrote {stored} trajectory files");
    }
}

fn read_trace(path: &Path, column: Option<&str>) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let col = match column {
        Some(name) => headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CliError::Parse(format!("no column `{name}` in {}", path.display())))?,
        None if headers.len() >= 2 => 1,
        None => return Err(CliError::Parse(format!("{} needs at least two columns", path.display()))),
    };
    let mut t = Vec::new();
    let mut y = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| CliError::Parse(format!("bad number in row {:?}", rec.position())))
        };
        t.push(num(0)?);
        y.push(num(col)?);
    }
    Ok((t, y))
}
