//! Verification suites: solver against the brute-force oracle, W1 against
//! an LP, the Hölder flow bound along fictitious play, and DPP exactness.

use std::fs;
use std::path::Path;

use junction_mfg::costs::{evaluate_functor, CostField, CostSpec};
use junction_mfg::hj::{backward_solve, dpp_residual, Grid, Node};
use junction_mfg::mfg::{holder_ratio, solve_equilibrium_observed, wasserstein1, MeasureFlow, MeasureSlice};
use junction_mfg::network::JunctionGeometry;
use junction_mfg::oracle::wasserstein1_lp;
use junction_mfg::trajectory::brute_force_value;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ExperimentConfig, Suite, Validated};
use crate::run::write_json;
use crate::CliError;

/// Largest tolerated gap between the closed-form W1 and the LP.
pub const W1_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub suite: Suite,
    pub passed: bool,
    pub instances: usize,
    pub checks: Vec<Check>,
}

pub fn run_verify(config: &ExperimentConfig, suite: Suite, out: &Path) -> Result<VerifyReport, CliError> {
    let validated = config.validate()?;
    let settings = config.verify.unwrap_or(crate::config::VerifyConfig {
        suite,
        instances: None,
        seed: 0,
    });
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let (instances, checks) = match suite {
        Suite::Oracle => {
            let n = settings.instances.unwrap_or(50);
            (n, oracle_suite(&mut rng, n)?)
        }
        Suite::W1 => {
            let n = settings.instances.unwrap_or(100);
            (n, w1_suite(&mut rng, n)?)
        }
        Suite::Holder => holder_suite(config, &validated)?,
        Suite::Dpp => (1, dpp_suite(config, &validated)?),
    };
    let report = VerifyReport {
        suite,
        passed: checks.iter().all(|c| c.passed),
        instances,
        checks,
    };
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    write_json(&out.join("verify.json"), &report)?;
    if !report.passed {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        return Err(CliError::Verification(format!("{}: {}", suite.name(), failed.join(", "))));
    }
    Ok(report)
}

fn affine(rng: &mut ChaCha8Rng) -> CostField {
    CostField::Affine {
        c0: rng.gen_range(-2.0..2.0),
        cr: rng.gen_range(-2.0..2.0),
        ct: rng.gen_range(-2.0..2.0),
    }
}

/// A random instance small enough for exhaustive enumeration.
pub fn tiny_instance(rng: &mut ChaCha8Rng) -> (Grid, CostSpec) {
    let n = rng.gen_range(2..=4);
    let cells = if n == 2 { rng.gen_range(1..=2) } else { 1 };
    let steps = rng.gen_range(1..=6);
    let dr: f64 = rng.gen_range(0.05..0.5);
    let dt: f64 = rng.gen_range(0.05..0.5);
    let horizon = steps as f64 * dt;
    let geometry = JunctionGeometry::new(n, cells as f64 * dr).expect("positive truncation");
    let grid = Grid::new(geometry, dr, dt, horizon).expect("valid steps");
    let costs = CostSpec::new(
        (0..n).map(|_| affine(rng)).collect(),
        affine(rng),
        (0..n).map(|_| affine(rng)).collect(),
        rng.gen_range(-2.0..2.0),
        grid.horizon(),
    )
    .expect("finite costs");
    (grid, costs)
}

fn oracle_suite(rng: &mut ChaCha8Rng, instances: usize) -> Result<Vec<Check>, CliError> {
    let mut mismatches = 0usize;
    let mut worst: f64 = 0.0;
    let mut compared = 0usize;
    for _ in 0..instances {
        let (grid, costs) = tiny_instance(rng);
        let u = backward_solve(&grid, &costs)?;
        for k0 in [0, grid.steps() / 2] {
            for node in 0..grid.num_nodes() {
                let oracle = brute_force_value(&grid, &costs, &grid.point_of(node), k0)?;
                let solver = u.get(node, k0);
                compared += 1;
                if oracle.to_bits() != solver.to_bits() {
                    mismatches += 1;
                    worst = worst.max((oracle - solver).abs());
                }
            }
        }
    }
    Ok(vec![
        Check {
            name: format!("bitwise equality at {compared} (node, level) pairs"),
            passed: mismatches == 0,
            measured: mismatches as f64,
            threshold: 0.0,
        },
        Check {
            name: "largest deviation".into(),
            passed: worst == 0.0,
            measured: worst,
            threshold: 0.0,
        },
    ])
}

/// Two random slices with at most 8 atoms between them.
pub fn random_slices(rng: &mut ChaCha8Rng) -> (JunctionGeometry, MeasureSlice, MeasureSlice) {
    let n = rng.gen_range(2..=4);
    let cells = 20;
    let dr = 0.05;
    let slice = |rng: &mut ChaCha8Rng| {
        let mut s = MeasureSlice::empty(n, cells, dr);
        let count = rng.gen_range(1..=4);
        let weights: Vec<f64> = (0..count).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = weights.iter().sum();
        for w in weights {
            let index = rng.gen_range(0..=cells);
            let node = if index == 0 {
                Node::Vertex
            } else {
                Node::Edge { edge: rng.gen_range(1..=n), index }
            };
            s.add(node, w / total);
        }
        s
    };
    let a = slice(rng);
    let b = slice(rng);
    let geometry = JunctionGeometry::new(n, cells as f64 * dr).expect("positive truncation");
    (geometry, a, b)
}

fn w1_suite(rng: &mut ChaCha8Rng, instances: usize) -> Result<Vec<Check>, CliError> {
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let (g, a, b) = random_slices(rng);
        let closed = wasserstein1(&g, &a, &b)?;
        let lp = wasserstein1_lp(&g, &a, &b)?;
        worst = worst.max((closed - lp).abs());
    }
    Ok(vec![Check {
        name: "closed form vs LP".into(),
        passed: worst <= W1_TOLERANCE,
        measured: worst,
        threshold: W1_TOLERANCE,
    }])
}

fn holder_suite(config: &ExperimentConfig, v: &Validated) -> Result<(usize, Vec<Check>), CliError> {
    let mut ratios = Vec::new();
    let mut failure = None;
    solve_equilibrium_observed(&v.functor, &config.initial_distribution, &v.grid, config.solver, |view| {
        match holder_ratio(view.flow, &v.grid, view.measure.control_bound()) {
            Ok(r) => ratios.push(r),
            Err(e) => failure = failure.take().or(Some(e)),
        }
    })?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    let worst = ratios.iter().cloned().fold(0.0, f64::max);
    Ok((
        ratios.len(),
        vec![Check {
            name: format!("W1(m(s), m(t)) <= C sqrt(t - s) over {} iterates", ratios.len()),
            passed: worst <= 1.0,
            measured: worst,
            threshold: 1.0,
        }],
    ))
}

fn dpp_suite(config: &ExperimentConfig, v: &Validated) -> Result<Vec<Check>, CliError> {
    let grid = &v.grid;
    let m0 = config.initial_distribution.discretize(grid);
    let flow = MeasureFlow::stationary(m0, grid.steps() + 1);
    let costs = evaluate_functor(&v.functor, &flow, grid)?;
    let u = backward_solve(grid, &costs)?;
    let mut worst: f64 = 0.0;
    for k in 0..grid.steps() {
        worst = worst.max(dpp_residual(&u, &costs, k)?);
    }
    let excess = u.bound_excess(&costs.bounds(grid));
    Ok(vec![
        Check {
            name: format!("DPP residual over {} levels", grid.steps()),
            passed: worst == 0.0,
            measured: worst,
            threshold: 0.0,
        },
        Check {
            name: "|u| <= sup|L| (T - t) + sup|g|".into(),
            passed: excess <= 0.0,
            measured: excess,
            threshold: 0.0,
        },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::VerifyConfig;
    use crate::scenarios;

    fn config(suite: Suite, instances: usize) -> ExperimentConfig {
        let mut c = scenarios::preset("example_dirac").unwrap();
        c.grid.dr = 0.05;
        c.grid.dt = 0.05;
        c.solver.particles = 20;
        c.verify = Some(VerifyConfig { suite, instances: Some(instances), seed: 3 });
        c
    }

    #[test]
    fn every_suite_passes_and_writes_a_report() {
        for suite in Suite::ALL {
            let dir = tempfile::tempdir().unwrap();
            let report = run_verify(&config(suite, 5), suite, dir.path()).unwrap();
            assert!(report.passed, "{}", suite.name());
            assert!(dir.path().join("verify.json").exists());
        }
    }

    #[test]
    fn tiny_instances_stay_enumerable() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let (g, c) = tiny_instance(&mut rng);
            assert!(g.steps() <= 6 && g.cells() <= 2);
            assert!(brute_force_value(&g, &c, &g.point_of(0), 0).is_ok());
        }
    }

    #[test]
    fn random_slices_are_probability_measures() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let (_, a, b) = random_slices(&mut rng);
            assert!((a.total_mass() - 1.0).abs() < 1e-12);
            assert!((b.total_mass() - 1.0).abs() < 1e-12);
        }
    }
}
