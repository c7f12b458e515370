use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::json;

use rwgate::config::RunConfig;
use rwgate::device::{simulate, transfer_matrix};
use rwgate::io::{self, CorrelationDoc, FieldHeader, GMatrixDoc};
use rwgate::optimizer::{init_design, run, Checkpoint, GateObjective, OptimizationState, StopReason};
use rwgate::quantum::GateSpec;
use rwgate::validate::{self, ValidationOptions};
use rwgate::{Error, Result};

#[derive(Parser)]
#[command(name = "rwgate", version, about = "Inverse design of linear-optical logic gates")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for all outputs.
    #[arg(long, global = true, env = "RWGATE_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Threads for the sparse factorization. 1 keeps runs bitwise reproducible.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize a gate design from a configuration.
    Optimize {
        /// Continue from a checkpoint instead of a fresh random design.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// Transfer matrix and correlations of a design.
    Evaluate {
        /// A `design.ckpt` checkpoint or a `gmatrix.json` document.
        #[arg(long)]
        design: PathBuf,
    },
    /// Correlations over a wavelength band around the design wavelength.
    Sweep {
        #[arg(long)]
        design: PathBuf,
        /// Half-width of the band, µm.
        #[arg(long, default_value_t = 0.05)]
        span: f64,
        #[arg(long, default_value_t = 11)]
        points: usize,
    },
    /// Run the built-in validation battery.
    Validate {
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
        /// Relative error injected into the analytic slab index.
        #[arg(long, default_value_t = 0.0)]
        n_eff_error: f64,
    },
    /// Write forward fields of a design.
    ExportField {
        #[arg(long)]
        design: PathBuf,
        /// Input port (all ports when omitted).
        #[arg(long)]
        port: Option<usize>,
        #[arg(long)]
        wavelength: Option<f64>,
    },
    /// Compare closed-form correlations with the two-photon oracle.
    OracleCheck {
        /// `gmatrix.json` to check; random matrices when omitted.
        #[arg(long)]
        gmatrix: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log_level).format_timestamp(None).init();
    rwgate::solver::set_threads(cli.threads);
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Argument(_) | Error::Config(_) | Error::Io { .. } | Error::Format(_) => 2,
                _ => 1,
            })
        }
    }
}

fn dispatch(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Optimize { resume, max_iters } => optimize(cli, resume.as_deref(), *max_iters),
        Command::Evaluate { design } => evaluate(cli, design),
        Command::Sweep { design, span, points } => sweep(cli, design, *span, *points),
        Command::Validate { json, n_eff_error } => validate(cli, *json, *n_eff_error),
        Command::ExportField {
            design,
            port,
            wavelength,
        } => export_field(cli, design, *port, *wavelength),
        Command::OracleCheck { gmatrix, samples } => oracle_check(cli, gmatrix.as_deref(), *samples),
    }
}

fn apply_overrides(cli: &Cli, mut cfg: RunConfig) -> Result<RunConfig> {
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::arg("this command needs --config"))?;
    apply_overrides(cli, RunConfig::load(path)?)
}

fn output_dir(cli: &Cli, cfg: Option<&RunConfig>) -> Result<PathBuf> {
    let dir = cli
        .output_dir
        .clone()
        .or_else(|| cfg.and_then(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("rwgate-out"));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

/// Checkpoint plus the configuration to simulate it with: `--config` when
/// given, the checkpoint's own echo otherwise.
fn load_design(cli: &Cli, path: &Path) -> Result<(RunConfig, OptimizationState)> {
    let ckpt = Checkpoint::from_json(&io::read_text(path)?)?;
    let cfg = match &cli.config {
        Some(_) => load_config(cli)?,
        None => apply_overrides(cli, RunConfig::from_json(&ckpt.config)?)?,
    };
    Ok((cfg, ckpt.state))
}

fn row_labels(spec: &GateSpec) -> Vec<String> {
    spec.table.iter().map(|(a, _)| a.to_string()).collect()
}

fn print_table(doc: &CorrelationDoc) {
    for s in &doc.states {
        println!("{} -> {}  success {:.4}", s.input, s.target, s.success);
    }
    println!("min success {:.4}", doc.min_success);
}

fn optimize(cli: &Cli, resume: Option<&Path>, max_iters: Option<usize>) -> Result<ExitCode> {
    let cfg = load_config(cli)?;
    let out = output_dir(cli, Some(&cfg))?;
    let mut ocfg = cfg.optimizer_config();
    if let Some(n) = max_iters {
        ocfg.max_iters = n;
    }
    let t0 = Instant::now();
    let problem = cfg.problem()?;
    log::info!(
        "grid {}x{} cells, design {}x{}, spacing {:.5} µm",
        problem.grid.nx,
        problem.grid.ny,
        problem.grid.design.nx,
        problem.grid.design.ny,
        problem.grid.spacing
    );
    let state = match resume {
        Some(p) => Checkpoint::from_json(&io::read_text(p)?)?.state,
        None => init_design(&cfg.template()?, &ocfg)?,
    };
    let echo = cfg.to_json();
    let ckpt_path = out.join("design.ckpt");
    let mut objective = GateObjective {
        problem: &problem,
        template: state.control.clone(),
    };
    let outcome = run(state, &mut objective, &ocfg, &mut |s| {
        io::write_text(&ckpt_path, &Checkpoint::new(echo.clone(), s.clone()).to_json()?)
    })?;
    let state = outcome.state;
    io::write_history_csv(&out.join("history.csv"), &state.history, &row_labels(&problem.spec))?;
    let ev = problem.evaluate(&state.control, None, false)?;
    io::write_json(&out.join("gmatrix.json"), &GMatrixDoc::new(&ev.transfer, &problem.spec.name, echo.clone()))?;
    let doc = CorrelationDoc::build(&ev.transfer, &problem.spec, echo.clone())?;
    io::write_json(&out.join("correlation.json"), &doc)?;
    let reason = format!("{:?}", outcome.reason);
    io::write_json(
        &out.join("summary.json"),
        &json!({
            "tool_version": rwgate::TOOL_VERSION,
            "stop_reason": reason,
            "iterations": state.iteration,
            "cost": ev.cost.value,
            "min_success": doc.min_success,
            "config": echo,
        }),
    )?;
    log::info!("finished in {:.1} s", t0.elapsed().as_secs_f64());
    print_table(&doc);
    println!("stopped: {reason} after {} iterations", state.iteration);
    Ok(match outcome.reason {
        StopReason::Failed(_) => ExitCode::from(1),
        _ => ExitCode::SUCCESS,
    })
}

fn evaluate(cli: &Cli, design: &Path) -> Result<ExitCode> {
    let text = io::read_text(design)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", design.display())))?;
    let (g, spec, echo) = if value.get("format").and_then(|f| f.as_str()) == Some(io::GMATRIX_FORMAT) {
        let doc: GMatrixDoc =
            serde_json::from_value(value).map_err(|e| Error::Format(format!("{}: {e}", design.display())))?;
        let spec = match (&cli.config, doc.gate.as_str()) {
            (Some(_), _) => load_config(cli)?.spec()?,
            (None, "cnot") => GateSpec::cnot(),
            (None, "xgate") => GateSpec::xgate(),
            (None, other) => return Err(Error::arg(format!("gate {other:?} needs --config with its truth table"))),
        };
        (doc.transfer()?, spec, doc.config)
    } else {
        let (cfg, state) = load_design(cli, design)?;
        let problem = cfg.problem()?;
        let ev = problem.evaluate(&state.control, None, false)?;
        (ev.transfer, problem.spec, cfg.to_json())
    };
    let out = output_dir(cli, None)?;
    io::write_json(&out.join("gmatrix.json"), &GMatrixDoc::new(&g, &spec.name, echo.clone()))?;
    let doc = CorrelationDoc::build(&g, &spec, echo)?;
    io::write_json(&out.join("correlation.json"), &doc)?;
    print_table(&doc);
    Ok(ExitCode::SUCCESS)
}

fn sweep(cli: &Cli, design: &Path, span: f64, points: usize) -> Result<ExitCode> {
    if points < 2 || !(span > 0.0) {
        return Err(Error::arg("sweep needs --points >= 2 and a positive --span"));
    }
    let (cfg, state) = load_design(cli, design)?;
    let out = output_dir(cli, Some(&cfg))?;
    let problem = cfg.problem()?;
    let (eps, _) = problem.permittivity(&state.control, None)?;
    let echo = cfg.to_json();
    let mut header = vec!["wavelength".to_string()];
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for k in 0..points {
        let wl = cfg.wavelength - span + 2.0 * span * k as f64 / (points - 1) as f64;
        let p = problem.at_wavelength(wl)?;
        let g = transfer_matrix(&p.grid, &eps, wl)?;
        let doc = CorrelationDoc::build(&g, &p.spec, serde_json::Value::Null)?;
        let (names, values) = doc.sweep_columns();
        if k == 0 {
            header.extend(names);
        }
        log::info!("λ = {wl:.4} µm  min success {:.4}", doc.min_success);
        println!("{wl:.4} {:.4}", doc.min_success);
        summary.push(json!({
            "wavelength": wl,
            "min_success": doc.min_success,
            "rows": doc.states.iter().map(|s| s.success).collect::<Vec<_>>(),
        }));
        rows.push((wl, values));
    }
    io::write_sweep_csv(&out.join("sweep.csv"), &header, &rows)?;
    io::write_json(
        &out.join("sweep.json"),
        &json!({ "tool_version": rwgate::TOOL_VERSION, "points": summary, "config": echo }),
    )?;
    Ok(ExitCode::SUCCESS)
}

fn validate(cli: &Cli, as_json: bool, n_eff_error: f64) -> Result<ExitCode> {
    let opts = ValidationOptions {
        n_eff_error,
        seed: cli.seed.unwrap_or(1),
        ..ValidationOptions::default()
    };
    let report = validate::run_all(&opts);
    if as_json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(|e| Error::Format(e.to_string()))?);
    } else {
        for c in &report.checks {
            println!(
                "{} {:<22} {:.3e} (tolerance {:.0e}, {:.1} s) {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                c.tolerance,
                c.seconds,
                c.detail
            );
        }
    }
    if cli.output_dir.is_some() {
        io::write_json(&output_dir(cli, None)?.join("validation.json"), &report)?;
    }
    Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn export_field(cli: &Cli, design: &Path, port: Option<usize>, wavelength: Option<f64>) -> Result<ExitCode> {
    let (cfg, state) = load_design(cli, design)?;
    let out = output_dir(cli, Some(&cfg))?;
    let mut problem = cfg.problem()?;
    if let Some(wl) = wavelength {
        problem = problem.at_wavelength(wl)?;
    }
    let (eps, _) = problem.permittivity(&state.control, None)?;
    let sim = simulate(&problem.grid, &eps, problem.wavelength)?;
    let ports: Vec<usize> = match port {
        Some(p) if p >= 1 && p <= sim.fields.len() => vec![p],
        Some(p) => return Err(Error::arg(format!("input port {p} does not exist"))),
        None => (1..=sim.fields.len()).collect(),
    };
    let echo = cfg.to_json();
    for p in ports {
        let f = &sim.fields[p - 1];
        let header = FieldHeader::new(f, problem.wavelength, p, echo.clone());
        io::write_field(&out.join(format!("field_{p}.bin")), &header, &f.values)?;
        io::write_intensity_csv(&out.join(format!("field_{p}_intensity.csv")), f)?;
    }
    io::write_grid_csv(&out.join("permittivity.csv"), &eps.values, eps.spacing)?;
    println!("wrote fields to {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn oracle_check(cli: &Cli, gmatrix: Option<&Path>, samples: usize) -> Result<ExitCode> {
    let passed = match gmatrix {
        Some(path) => {
            let doc: GMatrixDoc = serde_json::from_str(&io::read_text(path)?)
                .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
            let c = validate::oracle_compare(&doc.transfer()?)?;
            let ok = c.max_error < 1e-12 && c.diagonal_mismatches == 0 && c.asymmetric == 0;
            println!(
                "{} max error {:.3e}, {} diagonal mismatches, {} asymmetric entries",
                if ok { "PASS" } else { "FAIL" },
                c.max_error,
                c.diagonal_mismatches,
                c.asymmetric
            );
            ok
        }
        None => {
            let r = validate::oracle_check(cli.seed.unwrap_or(1), samples);
            println!("{} {:.3e} {}", if r.passed { "PASS" } else { "FAIL" }, r.value, r.detail);
            r.passed
        }
    };
    Ok(if passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
