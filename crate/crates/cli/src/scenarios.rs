//! Named experiment presets.

use junction_mfg::costs::FunctorKind;
use junction_mfg::mfg::{InitialDistribution, SolverSettings, StepRule};

use crate::config::{
    BaseCosts, CostsConfig, ExperimentConfig, GeometryConfig, GridConfig, OutputsConfig, Suite, VerifyConfig,
};

pub const NAMES: [&str; 3] = ["constant_zero", "example_dirac", "congestion_example"];

pub fn describe(name: &str) -> Option<&'static str> {
    Some(match name {
        "constant_zero" => "zero costs on two edges; resting is an equilibrium",
        "example_dirac" => "l_1 = -1, l_2 = 1, l_* = -1: mass from edge 2 piles up at the vertex",
        "congestion_example" => "example costs plus a tent-kernel congestion term (kappa 0.5, eps 0.2)",
        _ => return None,
    })
}

pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let zero = BaseCosts::Constant {
        edge_running: vec![0.0; 2],
        vertex_running: 0.0,
        edge_terminal: vec![0.0; 2],
        vertex_terminal: 0.0,
    };
    let (r_max, h, costs, solver) = match name {
        "constant_zero" => (
            1.0,
            0.02,
            constant(zero),
            SolverSettings { particles: 100, tol: 1e-6, max_iter: 10, step: StepRule::Harmonic },
        ),
        "example_dirac" => (
            3.0,
            0.005,
            constant(BaseCosts::ExampleDirac),
            SolverSettings { particles: 200, tol: 1e-6, max_iter: 50, step: StepRule::Harmonic },
        ),
        // C = sqrt(24) here, so R_max >= 0.5 + 4.9
        "congestion_example" => (
            5.5,
            0.01,
            CostsConfig {
                functor: FunctorKind::Congestion,
                congestion_strength: 0.5,
                kernel_width: 0.2,
                base: BaseCosts::ExampleDirac,
            },
            SolverSettings { particles: 100, tol: 1e-3, max_iter: 200, step: StepRule::Pairwise },
        ),
        _ => return None,
    };
    Some(ExperimentConfig {
        scenario: Some(name.to_string()),
        geometry: GeometryConfig { num_edges: 2, edge_truncation: r_max },
        grid: GridConfig { dr: h, dt: h, horizon: 1.0 },
        costs,
        initial_distribution: InitialDistribution::uniform(2, 0.5),
        solver,
        outputs: OutputsConfig::default(),
        verify: Some(VerifyConfig { suite: Suite::Holder, instances: None, seed: 0 }),
    })
}

fn constant(base: BaseCosts) -> CostsConfig {
    CostsConfig {
        functor: FunctorKind::Constant,
        congestion_strength: 0.0,
        kernel_width: 1.0,
        base,
    }
}
