use rankadmm::data::{generate_synthetic, SyntheticSpec};
use rankadmm::{admm_solve, sadmm_solve, LossKind, Problem, RegularizerSpec, ScheduleSpec, SolverConfig, WeightScheme};

fn instance(scheme: WeightScheme, reg: RegularizerSpec, seed: u64) -> Problem {
    let spec = SyntheticSpec {
        class_sep: 2.0,
        ..SyntheticSpec::new(200, 20, seed)
    };
    generate_synthetic(&spec)
        .unwrap()
        .into_problem(LossKind::Logistic, scheme, reg)
        .unwrap()
}

#[test]
fn constant_penalty_drives_feasibility_down() {
    let p = instance(WeightScheme::Erm, RegularizerSpec::L2 { mu: 1e-2 }, 5);
    let cfg = SolverConfig {
        schedule: ScheduleSpec::Constant { rho: 0.01 },
        stop_eps: 0.0,
        ..SolverConfig::default()
    };
    let res = admm_solve(&p, &cfg).unwrap();
    assert_eq!(res.trace.len(), 300);
    let k = res.trace.iter().position(|t| t.kkt_feas < 1e-3);
    assert!(k.is_some(), "final feasibility {}", res.trace.last().unwrap().kkt_feas);
}

#[test]
fn surrogates_follow_their_definitions() {
    let p = instance(WeightScheme::Superquantile { q: 0.7 }, RegularizerSpec::L1 { mu: 1e-2 }, 9);
    let res = admm_solve(&p, &SolverConfig { max_iter: 60, stop_eps: 0.0, ..SolverConfig::default() }).unwrap();
    let lambda_scale = 1f64.max(res.state.lambda.iter().map(|v| v * v).sum::<f64>().sqrt());
    for t in &res.trace {
        // Δλ is formed by subtraction, so agreement is to rounding at the scale of λ
        assert!((t.kkt_feas * t.rho - t.dual_step).abs() <= 1e-12 * lambda_scale, "k = {}", t.k);
        assert!(t.dual_residual <= 1e-12);
        if t.dw_norm > 0.0 {
            let ratio = t.kkt_z / t.dw_norm;
            assert!((ratio - t.rho * res.d_norm).abs() <= 1e-12 * ratio);
            assert!((t.kkt_w - t.r * t.dw_norm).abs() <= 1e-12 * t.kkt_w);
        }
    }
}

#[test]
fn nonconvex_regularizers_run_in_both_variants() {
    for reg in [RegularizerSpec::Mcp { mu: 1e-2, theta: 3.0 }, RegularizerSpec::Scad { mu: 1e-2, theta: 3.7 }] {
        let p = instance(WeightScheme::Superquantile { q: 0.5 }, reg, 12);
        let f0 = p.objective(&vec![0.0; p.d()]).unwrap();
        let cfg = SolverConfig {
            schedule: ScheduleSpec::Constant { rho: 0.01 },
            r: 0.5,
            ..SolverConfig::default()
        };
        for res in [admm_solve(&p, &cfg).unwrap(), sadmm_solve(&p, &cfg).unwrap()] {
            let f = p.objective(&res.w).unwrap();
            assert!(f.is_finite() && f < f0, "{reg:?}: {f} vs F(0) = {f0}");
        }
    }
}

#[test]
fn aorr_ignores_the_largest_losses() {
    // three gross outliers with flipped labels far from the data
    let mut data = generate_synthetic(&SyntheticSpec {
        class_sep: 3.0,
        flip_fraction: 0.0,
        ..SyntheticSpec::new(60, 2, 31)
    })
    .unwrap();
    let mut rows = data.x.to_dense_rows();
    for (i, row) in rows.iter_mut().take(3).enumerate() {
        let y = data.y[i];
        *row = vec![40.0 * y, 40.0 * y];
        data.y[i] = -y;
    }
    let x = rankadmm::DesignMatrix::from_rows(&rows).unwrap();
    let reg = RegularizerSpec::L2 { mu: 1e-3 };
    let cfg = SolverConfig {
        schedule: ScheduleSpec::Constant { rho: 0.01 },
        r: 0.01,
        max_iter: 600,
        ..SolverConfig::default()
    };
    let accuracy_on_clean = |scheme: WeightScheme| {
        let p = Problem::new(x.clone(), data.y.clone(), LossKind::Logistic, scheme, reg).unwrap();
        let w = admm_solve(&p, &cfg).unwrap().w;
        let z = p.apply_d(&w).unwrap();
        z[3..].iter().filter(|&&v| v < 0.0).count() as f64 / 57.0
    };
    let top = accuracy_on_clean(WeightScheme::Superquantile { q: 2.0 / 3.0 });
    let ranged = accuracy_on_clean(WeightScheme::Aorr { k: 20, m: 3 });
    assert!(ranged >= top, "ranged {ranged} vs top-k {top}");
    assert!(ranged >= 0.9, "ranged accuracy {ranged}");
}
