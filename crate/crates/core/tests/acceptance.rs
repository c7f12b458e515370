//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.
//!
//! `RWGATE_ACCEPTANCE=1,2,5` restricts the run to the listed criteria.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rwgate::config::RunConfig;
use rwgate::device::transfer_matrix;
use rwgate::optimizer::{init_design, run, Checkpoint, GateObjective, OptimizationState, StopReason};
use rwgate::quantum::{truth_table_eval, TransferMatrix};
use rwgate::validate;

const ORACLE_TOL: f64 = 1e-12;
const UNITARY_TOL: f64 = 1e-10;
const PARTITION_TOL: f64 = 1e-12;
const GREEN_TOL: f64 = 0.05;
const NEFF_TOL: f64 = 1e-3;
const GRADIENT_TOL: f64 = 0.02;
const XGATE_TARGET: f64 = 0.9;
const XGATE_SWEEP_TARGET: f64 = 0.85;
const XGATE_SWEEP_SPAN: f64 = 0.05;
const CNOT_TARGET: f64 = 0.25;
const XGATE_SEEDS: [u64; 3] = [1, 2, 3];
const CNOT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn within(t: Instant, limit: Duration) -> (bool, String) {
    let e = t.elapsed();
    (e <= limit, format!("{:.1} s (limit {} s)", e.as_secs_f64(), limit.as_secs()))
}

fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn artifacts() -> PathBuf {
    let p = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&p).expect("artifact directory");
    p
}

fn oracle_equivalence() -> Outcome {
    let t = Instant::now();
    let r = validate::oracle_check(11, 100);
    let (fast, time) = within(t, Duration::from_secs(1));
    outcome(
        r.passed && r.value < ORACLE_TOL && fast,
        format!("max off-diagonal error {:.2e} (tol {ORACLE_TOL:e}); {}; {time}", r.value, r.detail),
    )
}

fn unitary_norm() -> Outcome {
    let t = Instant::now();
    let r = validate::unitary_norm_check(12, 100);
    let (fast, time) = within(t, Duration::from_secs(1));
    outcome(
        r.passed && r.value < UNITARY_TOL && fast,
        format!("max |norm - 1| {:.2e} (tol {UNITARY_TOL:e}) over 100 unitaries; {time}", r.value),
    )
}

fn gamma_symmetry() -> rwgate::Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut asym = 0;
    for k in 0..100 {
        let u = validate::random_unitary(&mut rng, 4);
        // also non-unitary, lossy matrices
        let g = TransferMatrix::new(u.mapv(|c| c * (0.5 + 0.005 * k as f64)), 1.55)?;
        asym += validate::oracle_compare(&g)?.asymmetric;
    }
    Ok(outcome(asym == 0, format!("{asym} entries with Γ_mn != Γ_nm bitwise over 100 matrices")))
}

fn partition() -> Outcome {
    let r = validate::partition_check(14);
    outcome(
        r.passed && r.value < PARTITION_TOL,
        format!("max |Σ N - 1| and cardinal error {:.2e} (tol {PARTITION_TOL:e}) at 1000 points", r.value),
    )
}

fn solver_validation() -> Outcome {
    let t = Instant::now();
    let g = validate::green_check(60.0);
    let s = validate::slab_check(0.0);
    let (fast, time) = within(t, Duration::from_secs(60));
    outcome(
        g.passed && g.value < GREEN_TOL && s.passed && s.value < NEFF_TOL && fast,
        format!(
            "Green L2 {:.2e} (tol {GREEN_TOL}) {}; slab |Δn_eff| {:.2e} (tol {NEFF_TOL:e}) {}; {time}",
            g.value, g.detail, s.value, s.detail
        ),
    )
}

fn adjoint_gradient() -> Outcome {
    let t = Instant::now();
    let r = validate::gradient_check(15, 10);
    let (fast, time) = within(t, Duration::from_secs(600));
    outcome(
        r.passed && r.value < GRADIENT_TOL && fast,
        format!("max relative error {:.2e} (tol {GRADIENT_TOL}) {}; {time}", r.value, r.detail),
    )
}

struct GateRun {
    seed: u64,
    state: OptimizationState,
    reason: StopReason,
    min_success: f64,
    elapsed: Duration,
}

fn optimize(cfg: &RunConfig, stop_at: Option<f64>) -> rwgate::Result<GateRun> {
    let t = Instant::now();
    let problem = cfg.problem()?;
    let mut ocfg = cfg.optimizer_config();
    if stop_at.is_some() {
        ocfg.stop_at_success = stop_at;
    }
    let state = init_design(&cfg.template()?, &ocfg)?;
    let mut obj = GateObjective {
        problem: &problem,
        template: state.control.clone(),
    };
    let out = run(state, &mut obj, &ocfg, &mut |_| Ok(()))?;
    let ev = problem.evaluate(&out.state.control, None, false)?;
    Ok(GateRun {
        seed: cfg.seed,
        min_success: ev.cost.min_success(),
        state: out.state,
        reason: out.reason,
        elapsed: t.elapsed(),
    })
}

fn save(cfg: &RunConfig, r: &GateRun, name: &str) {
    let path = artifacts().join(name);
    if let Ok(text) = Checkpoint::new(cfg.to_json(), r.state.clone()).to_json() {
        let _ = std::fs::write(path, text);
    }
}

/// Worst min-row success over `points` wavelengths in `λ0 ± span`.
fn sweep_min(cfg: &RunConfig, state: &OptimizationState, span: f64, points: usize) -> rwgate::Result<(f64, f64)> {
    let problem = cfg.problem()?;
    let (eps, _) = problem.permittivity(&state.control, None)?;
    let mut worst = (f64::INFINITY, cfg.wavelength);
    for k in 0..points {
        let wl = cfg.wavelength - span + 2.0 * span * k as f64 / (points - 1) as f64;
        let p = problem.at_wavelength(wl)?;
        let g = transfer_matrix(&p.grid, &eps, wl)?;
        let m = truth_table_eval(&g, &p.spec)?.min;
        if m < worst.0 {
            worst = (m, wl);
        }
    }
    Ok(worst)
}

fn xgate(winner: &mut Option<(RunConfig, GateRun)>) -> rwgate::Result<Outcome> {
    let base = RunConfig::load(&config_path("xgate_desk.toml"))?;
    let t = Instant::now();
    let mut lines = Vec::new();
    for seed in XGATE_SEEDS {
        let cfg = RunConfig { seed, ..base.clone() };
        let r = optimize(&cfg, None)?;
        let (sweep, at) = sweep_min(&cfg, &r.state, XGATE_SWEEP_SPAN, 11)?;
        let ok = r.min_success >= XGATE_TARGET && sweep >= XGATE_SWEEP_TARGET && r.elapsed <= Duration::from_secs(3600);
        lines.push(format!(
            "seed {seed}: min-row {:.4} after {} iterations ({:?}, {:.0} s), sweep min {:.4} at {:.3} µm",
            r.min_success,
            r.state.iteration,
            r.reason,
            r.elapsed.as_secs_f64(),
            sweep,
            at
        ));
        save(&cfg, &r, &format!("xgate_seed{seed}.ckpt"));
        if ok {
            *winner = Some((cfg, r));
            break;
        }
    }
    let passed = winner.is_some();
    Ok(outcome(
        passed,
        format!(
            "target min-row >= {XGATE_TARGET}, ±{:.0} nm sweep >= {XGATE_SWEEP_TARGET}, <= 1 h per run at λ/{}; {}; total {:.0} s",
            XGATE_SWEEP_SPAN * 1000.0,
            base.cells_per_wavelength,
            lines.join("; "),
            t.elapsed().as_secs_f64()
        ),
    ))
}

fn cnot() -> rwgate::Result<Outcome> {
    let base = RunConfig::load(&config_path("cnot_desk.toml"))?;
    let t = Instant::now();
    let mut lines = Vec::new();
    let mut passed = false;
    for seed in CNOT_SEEDS {
        let cfg = RunConfig { seed, ..base.clone() };
        let r = optimize(&cfg, Some(CNOT_TARGET))?;
        lines.push(format!(
            "seed {seed}: min-row {:.4} after {} iterations ({:?}, {:.0} s)",
            r.min_success,
            r.state.iteration,
            r.reason,
            r.elapsed.as_secs_f64()
        ));
        save(&cfg, &r, &format!("cnot_seed{seed}.ckpt"));
        if r.min_success >= CNOT_TARGET {
            passed = true;
            break;
        }
        if t.elapsed() > Duration::from_secs(8 * 3600) {
            break;
        }
    }
    let (fast, time) = within(t, Duration::from_secs(8 * 3600));
    Ok(outcome(
        passed && fast,
        format!("target min-row >= {CNOT_TARGET}; {}; {time}", lines.join("; ")),
    ))
}

fn repeat(winner: &Option<(RunConfig, GateRun)>) -> rwgate::Result<Outcome> {
    let Some((cfg, first)) = winner else {
        return Ok(outcome(false, "no passing X-gate run to repeat".into()));
    };
    let again = optimize(cfg, None)?;
    let same = again.state.history == first.state.history && again.state.control == first.state.control;
    Ok(outcome(
        same,
        format!(
            "seed {}: {} history entries, identical history and design: {same}",
            first.seed,
            first.state.history.len()
        ),
    ))
}

fn main() -> ExitCode {
    let only: Option<Vec<u32>> = std::env::var("RWGATE_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wanted = |id: u32| only.as_ref().is_none_or(|v| v.contains(&id));
    rwgate::solver::set_threads(1);

    let mut all = true;
    let mut report = |id: u32, name: &str, r: rwgate::Result<Outcome>| {
        let o = r.unwrap_or_else(|e| outcome(false, format!("error: {e}")));
        all &= o.passed;
        println!("{} {id} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
    };
    let mut winner = None;
    if wanted(1) {
        report(1, "oracle equivalence", Ok(oracle_equivalence()));
    }
    if wanted(2) {
        report(2, "unitary normalization", Ok(unitary_norm()));
    }
    if wanted(3) {
        report(3, "correlation symmetry", gamma_symmetry());
    }
    if wanted(4) {
        report(4, "partition of unity", Ok(partition()));
    }
    if wanted(5) {
        report(5, "solver validation", Ok(solver_validation()));
    }
    if wanted(6) {
        report(6, "adjoint gradient", Ok(adjoint_gradient()));
    }
    if wanted(7) || wanted(9) {
        let r = xgate(&mut winner);
        if wanted(7) {
            report(7, "X-gate desk reproduction", r);
        }
    }
    if wanted(8) {
        report(8, "C-NOT desk reproduction", cnot());
    }
    if wanted(9) {
        report(9, "deterministic repeat", repeat(&winner));
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
