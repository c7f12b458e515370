use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rwgate::adjoint::{fd_gradient, CostForm, DesignProblem};
use rwgate::optimizer::{control_template, init_design, run, GateObjective, OptimizerConfig};
use rwgate::quantum::GateSpec;
use rwgate::solver::DeviceLayout;
use rwgate::splines::ControlGrid;
use rwgate::topology::SmoothedDelta;
use rwgate::validate::{sample_indices, small_problem};

fn random_design(seed: u64, n: usize) -> ControlGrid {
    let cfg = OptimizerConfig {
        seed,
        init_amplitude: 1.0,
        ..OptimizerConfig::default()
    };
    init_design(&control_template(n, n, 2).unwrap(), &cfg).unwrap().control
}

#[test]
fn small_steps_along_the_negative_gradient_descend() {
    let problem = small_problem().unwrap();
    for seed in 0..20 {
        let control = random_design(100 + seed, 5);
        let ev = problem.evaluate(&control, None, true).unwrap();
        let grad = ev.gradient.unwrap();
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!(norm > 0.0, "seed {seed}: zero gradient");
        let mut step = 0.1 / norm;
        let mut ok = false;
        for _ in 0..20 {
            let trial = control.with_weights(control.weights() - &(&grad * step)).unwrap();
            let c = problem.evaluate(&trial, Some(ev.delta), false).unwrap().cost.value;
            if c <= ev.cost.value {
                ok = true;
                break;
            }
            step *= 0.5;
        }
        assert!(ok, "seed {seed}: no decrease along -dC/dP");
    }
}

#[test]
fn random_passive_devices_respect_the_energy_bound() {
    let problem = small_problem().unwrap();
    for seed in 0..5 {
        let ev = problem.evaluate(&random_design(200 + seed, 6), None, false).unwrap();
        for i in 1..=2 {
            let out: f64 = (1..=2).map(|n| ev.transfer.get(n, i).unwrap().norm_sqr()).sum();
            assert!(out <= 1.02, "seed {seed} input {i}: Σ|g|² = {out}");
        }
    }
}

#[test]
fn halving_the_spacing_shrinks_the_change_in_g() {
    let wl = 1.55;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let weights = Array2::from_shape_fn((5, 5), |_| rng.random_range(-1.0..1.0));
    let control = control_template(5, 5, 2).unwrap().with_weights(weights).unwrap();
    let delta = SmoothedDelta::new(0.1).unwrap();
    let g: Vec<Array2<f64>> = [42.0, 84.0, 168.0]
        .iter()
        .map(|cpw| {
            let mut layout = DeviceLayout::xgate(wl, wl / cpw);
            layout.design_length = wl;
            layout.design_height = wl;
            layout.waveguide_pitch = 0.8;
            let p = DesignProblem::new(&layout, GateSpec::xgate(), 0.2).unwrap();
            let t = p.evaluate(&control, Some(delta), false).unwrap().transfer;
            Array2::from_shape_fn((2, 2), |(n, i)| t.get(n + 1, i + 1).unwrap().norm())
        })
        .collect();
    let d1 = (&g[1] - &g[0]).iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let d2 = (&g[2] - &g[1]).iter().fold(0.0f64, |a, x| a.max(x.abs()));
    assert!(d2 < d1, "max |Δ|g|| {d1:.3e} then {d2:.3e}");
}

#[test]
fn accepted_costs_never_increase_and_runs_repeat() {
    let problem = small_problem().unwrap();
    let cfg = OptimizerConfig {
        seed: 3,
        max_iters: 12,
        learning_rate: 0.1,
        ..OptimizerConfig::default()
    };
    let go = || {
        let state = init_design(&control_template(5, 5, 2).unwrap(), &cfg).unwrap();
        let mut obj = GateObjective {
            problem: &problem,
            template: state.control.clone(),
        };
        run(state, &mut obj, &cfg, &mut |_| Ok(())).unwrap().state
    };
    let a = go();
    assert!(a.history.len() > 1);
    for w in a.history.windows(2) {
        assert!(w[1].cost <= w[0].cost, "{} -> {}", w[0].cost, w[1].cost);
    }
    let b = go();
    assert_eq!(a.history, b.history);
    assert_eq!(a.control, b.control);
}

#[test]
fn band_gradient_matches_finite_differences() {
    let mut problem = small_problem().unwrap().with_band(&[1.5, 1.6]).unwrap();
    problem.cost_form = CostForm::Softmin { temperature: 0.05 };
    let control = random_design(31, 6);
    let ev = problem.evaluate(&control, None, true).unwrap();
    let single = problem.at_wavelength(1.55).unwrap().evaluate(&control, None, false).unwrap();
    assert_eq!(ev.cost.rows, single.cost.rows, "reported rows are the design wavelength's");
    assert_ne!(ev.cost.value, single.cost.value);

    let grad = ev.gradient.unwrap();
    let idx = sample_indices(&mut ChaCha8Rng::seed_from_u64(4), 6, 6, 5);
    let fd = fd_gradient(
        |w| Ok(problem.evaluate(&control.with_weights(w.clone())?, Some(ev.delta), false)?.cost.value),
        control.weights(),
        &idx,
        1e-4,
    )
    .unwrap();
    for (&i, f) in idx.iter().zip(fd) {
        assert!((grad[i] - f).abs() <= 0.02 * f.abs().max(1e-8), "{i:?}: adjoint {} fd {f}", grad[i]);
    }
}
