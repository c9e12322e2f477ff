//! The two-edge example: running cost -1 on edge 1 and at O, +1 on edge 2.

use junction_mfg::costs::{CostFunctorSpec, CostSpec};
use junction_mfg::hj::{backward_solve, Grid};
use junction_mfg::mfg::{solve_equilibrium, InitialDistribution, SolverSettings, StepRule};
use junction_mfg::network::{JunctionGeometry, NetworkPoint};

fn grid(h: f64) -> Grid {
    Grid::new(JunctionGeometry::new(2, 3.0).unwrap(), h, h, 1.0).unwrap()
}

#[test]
fn value_matches_the_closed_form() {
    let g = grid(0.02);
    let u = backward_solve(&g, &CostSpec::example_dirac(1.0).unwrap()).unwrap();
    for j in 0..=g.cells() {
        let r = g.radius(j);
        let on1 = u.at(&NetworkPoint::on_edge(1, r), 0).unwrap();
        assert!((on1 + 1.0).abs() < 1e-12, "edge 1 at {r}: {on1}");
        // run to O at speed 2, or stay put when that costs more
        let exact = (2.0 * r - 1.0).min(1.0);
        let on2 = u.at(&NetworkPoint::on_edge(2, r), 0).unwrap();
        assert!((on2 - exact).abs() <= 0.05, "edge 2 at {r}: {on2} vs {exact}");
    }
    assert!((u.at(&NetworkPoint::Vertex, 0).unwrap() + 1.0).abs() < 1e-12);
}

#[test]
fn equilibrium_empties_edge_two() {
    let g = grid(0.01);
    let f = CostFunctorSpec::constant(CostSpec::example_dirac(1.0).unwrap());
    let settings = SolverSettings { particles: 60, tol: 1e-6, max_iter: 10, step: StepRule::Harmonic };
    let eq = solve_equilibrium(&f, &InitialDistribution::uniform(2, 0.5), &g, settings).unwrap();
    assert!(eq.converged);
    assert!(eq.exploitability <= 1e-6);

    for p in eq.measure.particles() {
        let pts = p.trajectory.points();
        match pts[0].edge() {
            Some(1) => assert!(pts.iter().all(|x| *x == pts[0])),
            Some(2) => {
                let k = pts.iter().position(NetworkPoint::is_vertex).expect("reaches O");
                assert!(pts[k..].iter().all(NetworkPoint::is_vertex));
                assert!(g.time(k) <= 1.25 * pts[0].radius() + 0.02);
            }
            _ => unreachable!("no initial mass at O"),
        }
    }
    let c = eq.flow.vertex_mass();
    assert_eq!(c[0], 0.0);
    assert!((c[g.steps()] - 0.5).abs() < 1e-12);
    assert!(c.windows(2).all(|w| w[1] >= w[0] - 1e-15));
}
