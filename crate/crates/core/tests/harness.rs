use sparseode::harness::*;

fn exact_config(system: &str) -> ExperimentConfig {
    ExperimentConfig {
        system: system.into(),
        derivatives: DerivativeSource::Exact,
        methods: vec![Method::DebiasedLasso, Method::BcRidge, Method::Semms],
        ..Default::default()
    }
}

#[test]
fn noiseless_van_der_pol_recovers_supports() {
    let cfg = exact_config("van_der_pol");
    let run = run_single(&cfg, 0).unwrap();
    let x2 = run.term_names.iter().position(|t| t == "x2").unwrap();
    let x1 = run.term_names.iter().position(|t| t == "x1").unwrap();
    let cubic = run.term_names.iter().position(|t| t == "x1^2*x2").unwrap();
    let mut want = [vec![x2], vec![x1, x2, cubic]];
    want[1].sort();
    for cell in &run.cells {
        let rep = cell.result.as_ref().unwrap();
        assert_eq!(rep.support().unwrap(), want[cell.dim], "{} dim {}", cell.method, cell.dim + 1);
    }
}

#[test]
fn noiseless_spiral_refit_is_close() {
    let cfg = exact_config("spiral");
    let run = run_single(&cfg, 0).unwrap();
    let sim = Simulation::new(&cfg).unwrap();
    for cell in &run.cells {
        let rep = cell.result.as_ref().unwrap();
        let refit = rep.refit.as_ref().unwrap();
        for j in sim.system.support(cell.dim) {
            let truth = sim.system.coefficients[(j, cell.dim)];
            assert!((refit[j] - truth).abs() <= 0.05 * truth.abs(), "{} {} {}", cell.method, refit[j], truth);
        }
    }
}

#[test]
fn same_seed_gives_identical_files() {
    let cfg = ExperimentConfig {
        noise: 0.1,
        replicates: 2,
        methods: vec![Method::Lasso, Method::DebiasedLasso, Method::Stls],
        grid: Some(Grid {
            variable: GridVar::Sigma,
            values: vec![0.05, 0.1],
        }),
        seed: 11,
        ..Default::default()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        write_summary(dir, &sweep(&cfg).unwrap()).unwrap();
    }
    for f in [SWEEP_CSV, BOXPLOT_CSV, FAILURES_CSV] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
    }
}

#[test]
fn sweep_frequencies_are_consistent() {
    let mut cfg = ExperimentConfig {
        noise: 0.05,
        methods: vec![Method::DebiasedLasso, Method::BcRidge],
        ..Default::default()
    };
    let single = sweep(&cfg).unwrap();
    for r in single.rows.iter().filter(|r| r.term.is_some()) {
        let f = r.sel_freq.unwrap();
        assert!(f == 0.0 || f == 1.0);
    }

    cfg.replicates = 4;
    let many = sweep(&cfg).unwrap();
    let sim = Simulation::new(&cfg).unwrap();
    let names = sim.system.basis.term_names();
    for m in &cfg.methods {
        for dim in 0..2 {
            let success = many.success(0.05, *m, Some(dim)).unwrap();
            let worst = sim
                .system
                .support(dim)
                .iter()
                .map(|&j| many.frequency(0.05, *m, dim, &names[j]).unwrap())
                .fold(1.0, f64::min);
            assert!(success <= worst + 1e-12);

            // Recompute from the boxplot export.
            let hits = (0..cfg.replicates)
                .filter(|&r| {
                    let chosen: Vec<usize> = many
                        .boxplot
                        .iter()
                        .filter(|b| b.method == m.as_str() && b.dim == dim + 1 && b.replicate == r)
                        .enumerate()
                        .filter(|(_, b)| b.selected == Some(true))
                        .map(|(j, _)| j)
                        .collect();
                    chosen == sim.system.support(dim)
                })
                .count();
            assert_eq!(success, hits as f64 / cfg.replicates as f64);
        }
        assert!(many.success(0.05, *m, None).unwrap() <= many.success(0.05, *m, Some(0)).unwrap());
    }
}
