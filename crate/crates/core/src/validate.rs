//! Built-in validation battery.
//!
//! Each check compares a library result with an independent reference and
//! reports pass/fail against a fixed tolerance.

use std::time::Instant;

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adjoint::{fd_gradient, DesignProblem};
use crate::device::omega_of;
use crate::optimizer::{control_template, init_design, OptimizerConfig};
use crate::quantum::{twofold_correlation, two_photon_oracle, GateSpec, TransferMatrix};
use crate::solver::{assemble, solve, DeviceLayout, PmlSpec, SimGrid, SourceDistribution};
use crate::splines::{basis_all, basis_eval, KnotVector};
use crate::topology::PermittivityMap;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Measured error (or statistic) compared against `tolerance`.
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
    /// Wall time, not serialized.
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub tool_version: String,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationOptions {
    /// Relative error added to the analytic slab index (harness self-test).
    pub n_eff_error: f64,
    pub seed: u64,
    pub green_cells_per_wavelength: f64,
    pub gradient_samples: usize,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            n_eff_error: 0.0,
            seed: 1,
            green_cells_per_wavelength: 60.0,
            gradient_samples: 10,
        }
    }
}

fn check(name: &str, value: f64, tolerance: f64, detail: String, t0: Instant) -> CheckResult {
    CheckResult {
        name: name.into(),
        passed: value.is_finite() && value < tolerance,
        value,
        tolerance,
        detail,
        seconds: t0.elapsed().as_secs_f64(),
    }
}

fn failed(name: &str, tolerance: f64, err: crate::Error, t0: Instant) -> CheckResult {
    CheckResult {
        name: name.into(),
        passed: false,
        value: f64::NAN,
        tolerance,
        detail: format!("error: {err}"),
        seconds: t0.elapsed().as_secs_f64(),
    }
}

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `H0^(1)(x) = J0(x) + i Y0(x)` from the ascending series. Accurate to
/// about 1e-10 for `0 < x < 20`.
pub fn hankel1_0(x: f64) -> Complex64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut j0 = 1.0;
    let mut harmonic = 0.0;
    let mut ysum = 0.0;
    for k in 1..200 {
        term *= -q / (k * k) as f64;
        harmonic += 1.0 / k as f64;
        j0 += term;
        ysum -= harmonic * term;
        if term.abs() < 1e-18 * j0.abs().max(1e-300) && k > 10 {
            break;
        }
    }
    let y0 = 2.0 / std::f64::consts::PI * ((x / 2.0).ln() + EULER_GAMMA) * j0 + 2.0 / std::f64::consts::PI * ysum;
    Complex64::new(j0, y0)
}

/// Outgoing solution of `∇²G + k²G = δ`.
pub fn green_2d(k: f64, r: f64) -> Complex64 {
    Complex64::new(0.0, -0.25) * hankel1_0(k * r)
}

/// Point source in vacuum compared with the analytic Green's function over
/// the annulus `λ ≤ r ≤ 2λ`.
pub fn green_check(cells_per_wavelength: f64) -> CheckResult {
    let t0 = Instant::now();
    let name = "green_function";
    let tol = 0.05;
    let run = || -> Result<(f64, usize)> {
        let wl = 1.55;
        let h = wl / cells_per_wavelength;
        let half = (2.3 * cells_per_wavelength).ceil() as usize;
        let n = 2 * half + 1;
        let pml = PmlSpec {
            cells: (0.6 * cells_per_wavelength).ceil() as usize,
            ..PmlSpec::default()
        };
        let grid = SimGrid::homogeneous(n, n, h, wl, pml, 1.0)?;
        let omega = omega_of(wl);
        let eps = PermittivityMap::from_background(&grid.background);
        let op = assemble(&eps, &grid, omega)?;
        let c = pml.cells + half;
        let src = SourceDistribution::point(grid.nx, grid.ny, omega, c, c, h, Complex64::new(1.0, 0.0));
        let field = solve(&op, &src)?;
        let (mut num, mut den, mut count) = (0.0, 0.0, 0usize);
        for ix in 0..grid.nx {
            for iy in 0..grid.ny {
                let r = h * (((ix as f64 - c as f64).powi(2) + (iy as f64 - c as f64).powi(2)).sqrt());
                if r < wl || r > 2.0 * wl {
                    continue;
                }
                let g = green_2d(omega, r);
                num += (field.at(ix, iy) - g).norm_sqr();
                den += g.norm_sqr();
                count += 1;
            }
        }
        Ok(((num / den).sqrt(), count))
    };
    match run() {
        Ok((err, count)) => check(
            name,
            err,
            tol,
            format!("relative L2 error over {count} cells at λ/{cells_per_wavelength}"),
            t0,
        ),
        Err(e) => failed(name, tol, e, t0),
    }
}

/// Fundamental even mode of a symmetric slab from
/// `κ tan(κw/2) = γ`, by bisection.
pub fn slab_neff_analytic(n_core: f64, n_clad: f64, width: f64, wavelength: f64) -> f64 {
    let k = 2.0 * std::f64::consts::PI / wavelength;
    let f = |n: f64| {
        let kappa = k * (n_core * n_core - n * n).max(0.0).sqrt();
        let gamma = k * (n * n - n_clad * n_clad).max(0.0).sqrt();
        kappa * (kappa * width / 2.0).tan() - gamma
    };
    // κw/2 stays below π/2 on the fundamental branch
    let kappa_max = std::f64::consts::PI / width;
    let mut lo = (n_core * n_core - (kappa_max / k).powi(2)).max(n_clad * n_clad).sqrt() + 1e-12;
    let mut hi = n_core;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Discrete slab mode against the analytic dispersion root.
pub fn slab_check(n_eff_error: f64) -> CheckResult {
    let t0 = Instant::now();
    let name = "slab_n_eff";
    let tol = 1e-3;
    let (n_core, n_clad, width, wl) = (3.476, 1.444, 0.45, 1.55);
    let core_cells = 150;
    let clad_cells = 500;
    let h = width / core_cells as f64;
    let eps: Vec<f64> = (0..core_cells + 2 * clad_cells)
        .map(|i| {
            if (clad_cells..clad_cells + core_cells).contains(&i) {
                n_core * n_core
            } else {
                n_clad * n_clad
            }
        })
        .collect();
    let reference = slab_neff_analytic(n_core, n_clad, width, wl) * (1.0 + n_eff_error);
    match crate::solver::slab_mode(&eps, omega_of(wl), h) {
        Ok(m) => check(
            name,
            (m.n_eff - reference).abs(),
            tol,
            format!("discrete {:.6} vs analytic {:.6}", m.n_eff, reference),
            t0,
        ),
        Err(e) => failed(name, tol, e, t0),
    }
}

/// Bases of clamped knot vectors sum to one at random points.
pub fn partition_check(seed: u64) -> CheckResult {
    let t0 = Instant::now();
    let name = "partition_of_unity";
    let tol = 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut run = |worst: &mut f64| -> Result<()> {
        for (n, p) in [(6, 1), (10, 2), (13, 3), (9, 4)] {
            let k = KnotVector::clamped_uniform(n, p)?;
            let (a, b) = k.parameter_range(p);
            for _ in 0..250 {
                let u = a + (b - a) * rng.random::<f64>();
                let s: f64 = basis_all(&k, p, u).iter().sum();
                *worst = worst.max((s - 1.0).abs());
            }
        }
        let k = KnotVector::new(vec![0.0, 1.0, 2.0, 3.0])?;
        *worst = worst.max((basis_eval(&k, 0, 2, 1.5)? - 0.75).abs());
        Ok(())
    };
    match run(&mut worst) {
        Ok(()) => check(
            name,
            worst,
            tol,
            "1000 random points over degrees 1 to 4, quadratic cardinal peak 0.75".into(),
            t0,
        ),
        Err(e) => failed(name, tol, e, t0),
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> Array2<Complex64> {
    Array2::from_shape_fn((n, n), |_| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

/// Unitary from the QR factor of a random complex matrix.
pub fn random_unitary(rng: &mut ChaCha8Rng, n: usize) -> Array2<Complex64> {
    let a = random_matrix(rng, n);
    let m = faer::Mat::from_fn(n, n, |i, j| a[[i, j]]);
    let q = m.qr().compute_Q();
    Array2::from_shape_fn((n, n), |(i, j)| q[(i, j)])
}

fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (1..=n).flat_map(move |l| (l + 1..=n).map(move |k| (l, k)))
}

/// Closed-form against oracle comparison of one matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    /// Worst off-diagonal difference, relative to `max(Γ, 1)`.
    pub max_error: f64,
    /// Diagonal entries where the oracle probability is not exactly `2Γ_mm`.
    pub diagonal_mismatches: usize,
    /// Entries with `Γ_mn` and `Γ_nm` not bitwise equal.
    pub asymmetric: usize,
}

impl OracleComparison {
    fn merge(&mut self, o: OracleComparison) {
        self.max_error = self.max_error.max(o.max_error);
        self.diagonal_mismatches += o.diagonal_mismatches;
        self.asymmetric += o.asymmetric;
    }
}

/// Compare every input pair of `g` (at least two inputs and outputs).
pub fn oracle_compare(g: &TransferMatrix) -> Result<OracleComparison> {
    let mut out = OracleComparison::default();
    let n_out = g.n_outputs();
    for (l, k) in pairs(g.n_inputs()) {
        let gamma = twofold_correlation(g, l, k)?;
        let psi = two_photon_oracle(g, l, k)?;
        for m in 1..=n_out {
            for n in 1..=n_out {
                if gamma.get(m, n).to_bits() != gamma.get(n, m).to_bits() {
                    out.asymmetric += 1;
                }
                if m == n {
                    if psi.probability(m, m) != 2.0 * gamma.get(m, m) {
                        out.diagonal_mismatches += 1;
                    }
                } else if m < n {
                    let d = (psi.probability(m, n) - gamma.get(m, n)).abs();
                    out.max_error = out.max_error.max(d / gamma.get(m, n).abs().max(1.0));
                }
            }
        }
    }
    Ok(out)
}

/// Closed-form two-fold correlations against the Fock-state oracle, on
/// random 4×4 matrices. Off-diagonal entries agree to 1e-12; diagonal
/// probabilities are exactly twice the closed form.
pub fn oracle_check(seed: u64, samples: usize) -> CheckResult {
    let t0 = Instant::now();
    let name = "oracle_equivalence";
    let tol = 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = OracleComparison::default();
    let mut run = || -> Result<()> {
        for _ in 0..samples {
            let g = TransferMatrix::new(random_matrix(&mut rng, 4), 1.55)?;
            total.merge(oracle_compare(&g)?);
        }
        Ok(())
    };
    match run() {
        Ok(()) => {
            let mut r = check(
                name,
                total.max_error,
                tol,
                format!(
                    "{samples} matrices, {} diagonal mismatches, {} asymmetric entries",
                    total.diagonal_mismatches, total.asymmetric
                ),
                t0,
            );
            r.passed &= total.diagonal_mismatches == 0 && total.asymmetric == 0;
            r
        }
        Err(e) => failed(name, tol, e, t0),
    }
}

/// Two-photon output of a unitary is normalized.
pub fn unitary_norm_check(seed: u64, samples: usize) -> CheckResult {
    let t0 = Instant::now();
    let name = "unitary_norm";
    let tol = 1e-10;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut run = |worst: &mut f64| -> Result<()> {
        for _ in 0..samples {
            let g = TransferMatrix::new(random_unitary(&mut rng, 4), 1.55)?;
            for (l, k) in pairs(4) {
                let psi = two_photon_oracle(&g, l, k)?;
                *worst = worst.max((psi.norm_sq() - 1.0).abs());
                let gamma = twofold_correlation(&g, l, k)?;
                let total: f64 = (1..=4)
                    .flat_map(|m| (m..=4).map(move |n| (m, n)))
                    .map(|(m, n)| if m == n { 2.0 * gamma.get(m, m) } else { gamma.get(m, n) })
                    .sum();
                *worst = worst.max((total - 1.0).abs());
            }
        }
        Ok(())
    };
    match run(&mut worst) {
        Ok(()) => check(name, worst, tol, format!("{samples} random unitaries, all input pairs"), t0),
        Err(e) => failed(name, tol, e, t0),
    }
}

/// Design problem used by the gradient checks: a one-wavelength square
/// X-gate region.
pub fn small_problem() -> Result<DesignProblem> {
    let wl = 1.55;
    let mut layout = DeviceLayout::xgate(wl, 0.035);
    layout.design_length = wl;
    layout.design_height = wl;
    layout.waveguide_pitch = 0.8;
    DesignProblem::new(&layout, GateSpec::xgate(), 0.2)
}

/// Distinct random entries of a `rows × cols` array.
pub fn sample_indices(rng: &mut ChaCha8Rng, rows: usize, cols: usize, count: usize) -> Vec<(usize, usize)> {
    let mut all: Vec<(usize, usize)> = (0..rows).flat_map(|i| (0..cols).map(move |j| (i, j))).collect();
    let count = count.min(all.len());
    for i in 0..count {
        let j = rng.random_range(i..all.len());
        all.swap(i, j);
    }
    all.truncate(count);
    all
}

/// Adjoint `∂C/∂P` against central differences at random control points.
pub fn gradient_check(seed: u64, samples: usize) -> CheckResult {
    let t0 = Instant::now();
    let name = "adjoint_gradient";
    let tol = 0.02;
    let run = || -> Result<(f64, usize)> {
        let problem = small_problem()?;
        let template = control_template(6, 6, 2)?;
        let state = init_design(
            &template,
            &OptimizerConfig {
                seed,
                ..OptimizerConfig::default()
            },
        )?;
        let ev = problem.evaluate(&state.control, None, true)?;
        let grad = ev.gradient.expect("gradient requested");
        let delta = ev.delta;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let idx = sample_indices(&mut rng, 6, 6, samples);
        let fd = fd_gradient(
            |w| Ok(problem.evaluate(&state.control.with_weights(w.clone())?, Some(delta), false)?.cost.value),
            state.control.weights(),
            &idx,
            1e-4,
        )?;
        let worst = idx
            .iter()
            .zip(&fd)
            .map(|(&i, &f)| (grad[i] - f).abs() / f.abs().max(1e-12))
            .fold(0.0, f64::max);
        Ok((worst, idx.len()))
    };
    match run() {
        Ok((worst, n)) => check(name, worst, tol, format!("max relative error over {n} control points"), t0),
        Err(e) => failed(name, tol, e, t0),
    }
}

/// Structural gradient `∂C/∂ε` against ±1e-4 permittivity perturbations.
pub fn structural_check(seed: u64, samples: usize) -> CheckResult {
    let t0 = Instant::now();
    let name = "structural_gradient";
    let tol = 0.01;
    let run = || -> Result<(f64, usize)> {
        let problem = small_problem()?;
        let template = control_template(6, 6, 2)?;
        let state = init_design(
            &template,
            &OptimizerConfig {
                seed,
                ..OptimizerConfig::default()
            },
        )?;
        let (eps, _) = problem.permittivity(&state.control, None)?;
        let (_, _, sg) = problem.evaluate_eps(&eps, true)?;
        let sg = sg.expect("gradient requested");
        let d = problem.grid.design;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xce11);
        let idx = sample_indices(&mut rng, d.nx, d.ny, samples);
        let h = 1e-4;
        let mut worst: f64 = 0.0;
        for &(a, b) in &idx {
            let cell = [d.ix0 + a, d.iy0 + b];
            let mut e = eps.clone();
            e.values[cell] += h;
            let hi = problem.evaluate_eps(&e, false)?.0.value;
            e.values[cell] -= 2.0 * h;
            let lo = problem.evaluate_eps(&e, false)?.0.value;
            let fd = (hi - lo) / (2.0 * h);
            worst = worst.max((sg.per_cell[[a, b]] - fd).abs() / fd.abs().max(1e-12));
        }
        Ok((worst, idx.len()))
    };
    match run() {
        Ok((worst, n)) => check(name, worst, tol, format!("max relative error over {n} cells"), t0),
        Err(e) => failed(name, tol, e, t0),
    }
}

/// Run every check.
pub fn run_all(opts: &ValidationOptions) -> ValidationReport {
    let checks = vec![
        green_check(opts.green_cells_per_wavelength),
        slab_check(opts.n_eff_error),
        partition_check(opts.seed),
        oracle_check(opts.seed, 100),
        unitary_norm_check(opts.seed, 100),
        gradient_check(opts.seed, opts.gradient_samples),
        structural_check(opts.seed, opts.gradient_samples),
    ];
    let passed = checks.iter().all(|c| c.passed);
    ValidationReport {
        tool_version: crate::TOOL_VERSION.into(),
        checks,
        passed,
    }
}
