use superrad::algebra::build_three_level_basis;
use superrad::algebra::build_two_level_basis;
use superrad::experiments::{master_series, run_scenario, Scenario, ScenarioKind, Solver};
use superrad::lindblad::{HamiltonianSpec, LindbladProblem};
use superrad::observables::trapezoid;
use superrad::ode::uniform_grid;
use superrad::state::{all_excited_state, all_metastable_state};

#[test]
fn raman_detuning_drops_out() {
    let b = build_three_level_basis(3).unwrap();
    let rho0 = all_metastable_state::<f64>(&b).unwrap().to_density();
    let grid = uniform_grid(7.5, 76);
    let series = |delta| {
        let h = HamiltonianSpec::RamanPulse { omega0: 1.5, pulse_length: 5.0, delta };
        let p = LindbladProblem::new(b.clone(), h, 1.0).unwrap();
        master_series(&p, &rho0, &grid).unwrap().0
    };
    let reference = series(0.0);
    for delta in [1.0, -2.5, 7.0] {
        let other = series(delta);
        for ch in &reference.channels {
            let o = other.channel(&ch.name).unwrap();
            for (a, b) in ch.values.iter().zip(o) {
                assert!((a - b).abs() < 1e-6, "{} differs at delta = {delta}", ch.name);
            }
        }
    }
}

#[test]
fn emitted_energy_balances_population_loss() {
    // ∫ I dt equals the number of de-excited atoms
    let n = 10;
    let b = build_two_level_basis(n).unwrap();
    let p = LindbladProblem::new(b.clone(), HamiltonianSpec::None, 1.0).unwrap();
    let grid = uniform_grid(3.0, 3001);
    let (s, _) = master_series(&p, &all_excited_state(&b).unwrap(), &grid).unwrap();
    let emitted = trapezoid(&s.t, s.intensity().unwrap());
    let jz = s.channel("jz_per_n").unwrap();
    let lost = n as f64 * (jz[0] - jz.last().unwrap());
    assert!(((emitted - lost) / lost).abs() < 0.01, "{emitted} vs {lost}");

    // Λ atoms: every photon leaves one atom in g
    let b = build_three_level_basis(4).unwrap();
    let h = HamiltonianSpec::RamanPulse { omega0: 2.0, pulse_length: 5.0, delta: 1.0 };
    let p = LindbladProblem::new(b.clone(), h, 1.0).unwrap();
    let grid = uniform_grid(7.5, 3001);
    let rho0 = all_metastable_state::<f64>(&b).unwrap().to_density();
    let (s, _) = master_series(&p, &rho0, &grid).unwrap();
    let emitted = trapezoid(&s.t, s.intensity().unwrap());
    let g = 4.0 * s.channel("jg_per_n").unwrap().last().unwrap();
    assert!(((emitted - g) / g).abs() < 0.01, "{emitted} vs {g}");
}

#[test]
fn free_decay_solvers_agree_on_the_delay() {
    let mut s = Scenario::new(ScenarioKind::FreeDecay);
    s.n_atoms = 40;
    let delay = |s: &Scenario| {
        let rec = run_scenario(s, None).unwrap();
        rec.points[0].result.as_ref().unwrap().pulse.unwrap().delay_time
    };
    let me = delay(&s);
    s.solver = Solver::Meanfield;
    let mf = delay(&s);
    assert!(((me - mf) / me).abs() < 0.2, "master {me} vs mean field {mf}");
}

#[test]
fn driven_steady_state_matches_mean_field_deep_in_each_phase() {
    let mut s = Scenario::new(ScenarioKind::DrivenSteady);
    s.n_atoms = 20;
    for (gamma, tol) in [(0.005, 0.02), (0.5, 0.05)] {
        s.gamma = gamma;
        let rec = run_scenario(&s, None).unwrap();
        let r = rec.points[0].result.as_ref().unwrap();
        let (q, m) = (r.steady.unwrap(), r.steady_mf.unwrap());
        assert!((q.jz_per_n - m.jz_per_n).abs() < tol, "gamma {gamma}: {q:?} vs {m:?}");
    }
}

#[test]
fn single_precision_decay() {
    let b = build_two_level_basis(1).unwrap();
    let p = LindbladProblem::<f32>::new(b.clone(), HamiltonianSpec::None, 1.0).unwrap();
    let grid = uniform_grid(4.0f32, 41);
    let rhos = superrad::lindblad::evolve(&p, &all_excited_state::<f32>(&b).unwrap(), &grid).unwrap();
    for (t, rho) in grid.iter().zip(&rhos) {
        // basis ascends in n_e, so index 1 is the excited state
        let pe = rho.population(1);
        assert!((pe - (-t).exp()).abs() < 1e-4, "t = {t}: {pe}");
    }
}
