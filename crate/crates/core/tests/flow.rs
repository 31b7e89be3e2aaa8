mod common;

use common::*;

#[test]
fn manufactured_newtonian_is_second_order() {
    let ns = [12, 24, 48];
    let (eu, ep): (Vec<f64>, Vec<f64>) = ns.iter().map(|n| manufactured_errors(*n, 0.5, 1.5, 2.5, 2.0)).unzip();
    let ou = orders(&ns, &eu);
    let op = orders(&ns, &ep);
    println!("velocity {eu:?} orders {ou:?}; pressure {ep:?} orders {op:?}");
    assert!(ou.iter().all(|o| *o >= 1.8), "{ou:?}");
    assert!(op.iter().all(|o| *o >= 1.5), "{op:?}");
}

#[test]
fn manufactured_forcing_is_consistent() {
    // the oracle's velocity is solenoidal and zero-mean
    let h = 1e-6;
    for x in [[0.1, 0.2, 0.3], [0.7, 0.45, 0.9]] {
        let (_, g) = tg_velocity(x);
        assert!((g[0][0] + g[1][1] + g[2][2]).abs() < 1e-12);
        for i in 0..3 {
            for j in 0..3 {
                let mut xp = x;
                xp[j] += h;
                let mut xm = x;
                xm[j] -= h;
                let fd = (tg_velocity(xp).0[i] - tg_velocity(xm).0[i]) / (2.0 * h);
                assert!((fd - g[i][j]).abs() < 1e-6);
            }
        }
    }
}

mod invariants {
    use darcylab::constitutive::ViscosityLaw;
    use darcylab::flow::*;
    use darcylab::forcing::Forcing;
    use darcylab::geometry::*;
    use darcylab::ops;

    fn perforated() -> DomainMask {
        build_mask(&PerforationSpec::new(0.25, 1.5, HoleShape::ball(0.5)), GridSpec::new(32)).unwrap()
    }

    fn solver(law: ViscosityLaw, tol: f64, mask: &DomainMask) -> FlowSolver {
        let f = Forcing::default().load().unwrap().sample_faces(&mask.grid);
        let mut cfg = SolveConfig::new(2.5, law);
        cfg.tol = tol;
        let mut s = FlowSolver::new(mask, 1.5, cfg, &f).unwrap();
        s.set_friction(9.4);
        s
    }

    #[test]
    fn solution_respects_holes_and_gauge() {
        let mask = perforated();
        let mut s = solver(ViscosityLaw::newtonian(2.0), 1e-8, &mask);
        let (sol, diag) = s.solve_stationary(None).unwrap();
        for (v, fs) in sol.u.iter().zip(&mask.face_solid) {
            if *fs {
                assert_eq!(*v, 0.0);
            }
        }
        let n = mask.grid.len();
        let mut d = vec![0.0; n];
        ops::divergence(&mask.grid, &sol.u, &mut d);
        let vol = mask.grid.cell_volumes();
        let umax = sol.u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let (mut mean, mut scale) = (0.0, 0.0);
        for q in 0..n {
            if !mask.solid[q] {
                assert!((d[q] / vol[q]).abs() < 1e-6 * umax * 32.0);
                mean += vol[q] * sol.p[q];
                scale += vol[q] * sol.p[q].abs();
            }
        }
        assert!(mean.abs() < 1e-8 * scale, "{mean} {scale}");
        assert!(*diag.residual_history.last().unwrap() <= 1e-8);
        let (res, degenerate) = energy_identity_residual(&diag);
        assert!(!degenerate && res <= 1e-6, "{res}");
        let (g2, d2, div2) = ops::korn_terms(&mask.grid, &sol.u);
        assert!((g2 - 2.0 * d2 + div2).abs() <= 1e-10 * g2);
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let mask = perforated();
        let law = ViscosityLaw::carreau_yasuda(2.0, 1.0, 1.0, 1.5, 2.0).unwrap();
        let a = solver(law, 1e-7, &mask).solve_stationary(None).unwrap().0;
        let b = solver(law, 1e-7, &mask).solve_stationary(None).unwrap().0;
        assert_eq!(a.u, b.u);
        assert_eq!(a.p, b.p);
    }

    #[test]
    fn tighter_tolerance_lowers_the_residual() {
        let mask = perforated();
        let law = ViscosityLaw::carreau_yasuda(2.0, 1.0, 1.0, 1.5, 2.0).unwrap();
        let mut loose = solver(law, 1e-6, &mask);
        let (a, _) = loose.solve_stationary(None).unwrap();
        let mut tight = solver(law, 1e-8, &mask);
        let (b, _) = tight.solve_stationary(None).unwrap();
        assert!(tight.residual(&b.u, &b.p, None) < loose.residual(&a.u, &a.p, None));
    }

    #[test]
    fn shear_thickening_activates_the_r_bound() {
        let mask = perforated();
        let law = ViscosityLaw::carreau_yasuda(2.0, 1.0, 1.0, 2.5, 2.0).unwrap();
        let (_, diag) = solver(law, 1e-7, &mask).solve_stationary(None).unwrap();
        assert!(diag.bounds.scaled_gradient_r.is_some());
        let (_, diag) = solver(ViscosityLaw::newtonian(2.0), 1e-7, &mask).solve_stationary(None).unwrap();
        assert!(diag.bounds.scaled_gradient_r.is_none());
    }

    #[test]
    fn zero_forcing_gives_zero_solution() {
        let mask = perforated();
        let f = vec![0.0; 3 * mask.grid.len()];
        let mut s = FlowSolver::new(&mask, 1.5, SolveConfig::new(2.5, ViscosityLaw::newtonian(2.0)), &f).unwrap();
        let (sol, _) = s.solve_stationary(None).unwrap();
        assert!(sol.u.iter().all(|v| *v == 0.0));
        assert!(sol.p.iter().all(|v| *v == 0.0));
    }
}
