//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fails.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use junction_mfg::costs::{evaluate_functor, CostField, CostSpec, CostTable};
use junction_mfg::hj::{backward_solve, dpp_residual, viscosity_residual, Grid, ValueField};
use junction_mfg::mfg::{
    holder_ratio, sample_initial, solve_equilibrium_observed, wasserstein1, Equilibrium,
};
use junction_mfg::network::{JunctionGeometry, NetworkPoint};
use junction_mfg::oracle::wasserstein1_lp;
use junction_mfg::trajectory::{brute_force_value, snap_to_grid};
use junction_mfg_cli::config::Validated;
use junction_mfg_cli::{scenarios, verify, ExperimentConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Outcome {
    id: usize,
    name: &'static str,
    passed: bool,
    detail: String,
}

/// One equilibrium run with per-iterate observations.
struct ScenarioRun {
    config: ExperimentConfig,
    validated: Validated,
    eq: Equilibrium,
    seconds: f64,
    holder: Vec<f64>,
    mass_defect: f64,
    value: ValueField,
    frozen: CostSpec,
}

fn run_scenario(name: &str, threads: usize) -> ScenarioRun {
    let config = scenarios::preset(name).expect("shipped scenario");
    let validated = config.validate().expect("presets validate");
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let mut holder = Vec::new();
    let mut mass_defect: f64 = 0.0;
    let start = Instant::now();
    let eq = pool.install(|| {
        solve_equilibrium_observed(
            &validated.functor,
            &config.initial_distribution,
            &validated.grid,
            config.solver,
            |view| {
                mass_defect = mass_defect.max(view.flow.mass_defect());
                holder.push(holder_ratio(view.flow, &validated.grid, view.measure.control_bound()).unwrap());
            },
        )
        .unwrap()
    });
    let seconds = start.elapsed().as_secs_f64();
    let frozen = evaluate_functor(&validated.functor, &eq.flow, &validated.grid).unwrap();
    let value = backward_solve(&validated.grid, &frozen).unwrap();
    ScenarioRun {
        config,
        validated,
        eq,
        seconds,
        holder,
        mass_defect,
        value,
        frozen,
    }
}

/// Value fields produced along the way, for the DPP and boundedness checks.
#[derive(Default)]
struct Fields(Vec<(String, ValueField, CostSpec)>);

impl Fields {
    fn push(&mut self, label: impl Into<String>, u: &ValueField, c: &CostSpec) {
        self.0.push((label.into(), u.clone(), c.clone()));
    }
}

fn grid(n: usize, r_max: f64, dr: f64, dt: f64, horizon: f64) -> Grid {
    Grid::new(JunctionGeometry::new(n, r_max).unwrap(), dr, dt, horizon).unwrap()
}

fn arrival_bound(example: &ScenarioRun) -> Outcome {
    let g = &example.validated.grid;
    // requested start radius of every snapped start on edge 2
    let mut requested: HashMap<u64, f64> = HashMap::new();
    for (_, x) in sample_initial(&example.config.initial_distribution, example.config.solver.particles).unwrap() {
        let (node, _) = snap_to_grid(g, &x).unwrap();
        if x.edge() == Some(2) {
            let r = requested.entry(g.point(node).radius().to_bits()).or_insert(f64::INFINITY);
            *r = r.min(x.radius());
        }
    }
    let mut worst = f64::NEG_INFINITY;
    let mut failures = Vec::new();
    let mut checked = 0;
    for p in example.eq.measure.particles() {
        let start = p.trajectory.points()[0];
        if start.edge() != Some(2) {
            continue;
        }
        checked += 1;
        let r_bar = requested[&start.radius().to_bits()];
        let pts = p.trajectory.points();
        let arrival = pts.iter().position(NetworkPoint::is_vertex);
        let stays = arrival.is_some_and(|k| pts[k..].iter().all(NetworkPoint::is_vertex));
        match arrival {
            Some(k) if stays => {
                let slack = 1.25 * r_bar + 0.02 - g.time(k);
                worst = worst.max(-slack);
                if slack < 0.0 {
                    failures.push(format!("r={r_bar} arrives {}", g.time(k)));
                }
            }
            _ => failures.push(format!("r={r_bar} does not settle at O")),
        }
    }
    let fast = example.seconds < 60.0;
    Outcome {
        id: 1,
        name: "Dirac example, arrival bound",
        passed: failures.is_empty() && checked > 0 && fast,
        detail: format!(
            "{checked} particles on edge 2, max(t_arrival - 5r/4 - 0.02) = {worst:.4}, runtime {:.2}s on 1 thread{}",
            example.seconds,
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    }
}

fn mass_concentration(example: &ScenarioRun) -> Outcome {
    let g = &example.validated.grid;
    let c = example.eq.flow.vertex_mass();
    let mut margin = f64::INFINITY;
    for (k, m) in c.iter().enumerate() {
        margin = margin.min(m - ((0.8 * g.time(k)).min(0.5) - 0.05));
    }
    let k07 = (0.7 / g.dt()).round() as usize;
    let c07 = c[k07];
    Outcome {
        id: 2,
        name: "Dirac example, mass concentration",
        passed: margin >= 0.0 && c07 >= 0.45,
        detail: format!("min margin over c(t) >= min(4t/5, 1/2) - 0.05: {margin:.4}; c(0.7) = {c07:.4}"),
    }
}

fn closed_form(example: &ScenarioRun, fields: &mut Fields) -> Outcome {
    let g = &example.validated.grid;
    let costs = &example.validated.functor.base;
    let u = backward_solve(g, costs).unwrap();
    fields.push("example T=1 h=1/200", &u, costs);
    let e2 = u.at(&NetworkPoint::on_edge(2, 0.5), 0).unwrap();
    let e1 = (0..=g.cells())
        .map(|j| (u.at(&NetworkPoint::on_edge(1, g.radius(j)), 0).unwrap() + 1.0).abs())
        .fold(0.0, f64::max);

    // coarse instance small enough to enumerate: nodes at 0, 0.5, 1 on each edge
    let coarse = grid(2, 1.0, 0.5, 0.25, 1.0);
    let uc = backward_solve(&coarse, costs).unwrap();
    fields.push("example coarse", &uc, costs);
    let bf2 = brute_force_value(&coarse, costs, &NetworkPoint::on_edge(2, 0.5), 0).unwrap();
    let bf1 = brute_force_value(&coarse, costs, &NetworkPoint::on_edge(1, 0.5), 0).unwrap();
    let oracle_ok = (bf2 - 0.0).abs() <= 0.05
        && (bf1 + 1.0).abs() <= 0.02
        && bf2 == uc.at(&NetworkPoint::on_edge(2, 0.5), 0).unwrap();
    Outcome {
        id: 3,
        name: "Value closed form",
        passed: e2.abs() <= 0.05 && e1 <= 0.02 && oracle_ok,
        detail: format!(
            "u(e2, 0.5, 0) = {e2:.3e}; max |u(e1, r, 0) + 1| = {e1:.3e}; coarse brute force {bf2:.3e} (edge 2), {bf1:.3e} (edge 1)"
        ),
    }
}

fn oracle_equivalence(fields: &mut Fields) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let instances = 60;
    let mut compared = 0;
    let mut mismatches = 0;
    for i in 0..instances {
        let (g, c) = verify::tiny_instance(&mut rng);
        let u = backward_solve(&g, &c).unwrap();
        for k0 in 0..=g.steps() {
            for node in 0..g.num_nodes() {
                compared += 1;
                let bf = brute_force_value(&g, &c, &g.point_of(node), k0).unwrap();
                if bf.to_bits() != u.get(node, k0).to_bits() {
                    mismatches += 1;
                }
            }
        }
        fields.push(format!("tiny instance {i}"), &u, &c);
    }
    Outcome {
        id: 4,
        name: "Oracle equivalence",
        passed: mismatches == 0,
        detail: format!("{instances} instances, {compared} (node, level) values, {mismatches} not bit-identical"),
    }
}

fn dpp_exactness(fields: &Fields) -> Outcome {
    let mut levels = 0;
    let mut worst: f64 = 0.0;
    for (_, u, c) in &fields.0 {
        for k in 0..u.grid().steps() {
            levels += 1;
            worst = worst.max(dpp_residual(u, c, k).unwrap());
        }
    }
    Outcome {
        id: 5,
        name: "DPP exactness",
        passed: worst == 0.0,
        detail: format!("{} fields, {levels} levels, max residual {worst:e}", fields.0.len()),
    }
}

fn decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

/// `g_1(r) = (r - 1)^2 / 2` on edge 1, no running cost.
fn smooth_benchmark(g: &Grid) -> CostSpec {
    let nr = g.cells() + 1;
    let values = (0..nr).map(|j| 0.5 * (g.radius(j) - 1.0).powi(2)).collect();
    let table = CostTable::new(g.dr(), 0.0, nr, 1, values).unwrap();
    CostSpec::new(
        vec![CostField::Constant(0.0); 2],
        CostField::Constant(0.0),
        vec![CostField::Table(Arc::new(table)), CostField::Constant(1.0)],
        1.0,
        g.horizon(),
    )
    .unwrap()
}

fn residual_refinement(fields: &mut Fields) -> Outcome {
    let example_costs = CostSpec::example_dirac(1.0).unwrap();
    let mut example = Vec::new();
    for l in 0..4 {
        let h = 0.05 / f64::powi(2.0, l);
        let g = grid(2, 3.0, h, h, 1.0);
        let u = backward_solve(&g, &example_costs).unwrap();
        example.push(viscosity_residual(&u, &example_costs).unwrap().max_interior(&u, 2.0 * h, None));
        fields.push(format!("example h={h}"), &u, &example_costs);
    }
    // speeds are multiples of dr/dt, so the benchmark keeps dr = dt/4
    let mut smooth = Vec::new();
    for l in 0..4 {
        let dt = 0.1 / f64::powi(2.0, l);
        let g = grid(2, 3.0, dt / 4.0, dt, 0.5);
        let c = smooth_benchmark(&g);
        let u = backward_solve(&g, &c).unwrap();
        smooth.push(viscosity_residual(&u, &c).unwrap().max_interior(&u, 2.0 * g.dr(), Some(1)));
        fields.push(format!("smooth dt={dt}"), &u, &c);
    }
    let fmt = |xs: &[f64]| xs.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" -> ");
    Outcome {
        id: 6,
        name: "Viscosity residual refinement",
        passed: decreasing(&example) && decreasing(&smooth),
        detail: format!(
            "example {} ({}); smooth edge {} ({})",
            fmt(&example),
            if decreasing(&example) { "decreasing" } else { "not decreasing" },
            fmt(&smooth),
            if decreasing(&smooth) { "decreasing" } else { "not decreasing" },
        ),
    }
}

fn w1_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (g, a, b) = verify::random_slices(&mut rng);
        let closed = wasserstein1(&g, &a, &b).unwrap();
        let lp = wasserstein1_lp(&g, &a, &b).unwrap();
        worst = worst.max((closed - lp).abs());
    }
    Outcome {
        id: 7,
        name: "W1 correctness",
        passed: worst <= 1e-8,
        detail: format!("100 instances, max |closed form - LP| = {worst:e}"),
    }
}

fn holder_bound(runs: &[(&str, &ScenarioRun)]) -> Outcome {
    let mut parts = Vec::new();
    let mut passed = true;
    for (name, run) in runs {
        let worst = run.holder.iter().cloned().fold(0.0, f64::max);
        passed &= worst <= 1.0 && !run.holder.is_empty();
        parts.push(format!("{name}: {} iterates, max ratio {worst:.4}", run.holder.len()));
    }
    Outcome {
        id: 8,
        name: "Hölder flow bound",
        passed,
        detail: parts.join("; "),
    }
}

fn trivial_equilibria(runs: &[(&str, &ScenarioRun)]) -> Outcome {
    let mut parts = Vec::new();
    let mut passed = true;
    for (name, run) in runs {
        let e = &run.eq;
        passed &= e.converged && e.iteration <= 1 && e.exploitability <= 1e-6;
        parts.push(format!("{name}: iteration {}, exploitability {:e}", e.iteration, e.exploitability));
    }
    Outcome {
        id: 9,
        name: "Trivial-equilibrium convergence",
        passed,
        detail: parts.join("; "),
    }
}

fn congestion_run(run: &ScenarioRun) -> Outcome {
    let log = &run.eq.log;
    let first = log.iter().find(|r| r.exploitability <= 1e-3);
    Outcome {
        id: 10,
        name: "Monotone congestion run",
        passed: first.is_some_and(|r| r.iter <= 200),
        detail: match first {
            Some(r) => format!(
                "exploitability {:.3e} at iteration {} ({:?} step, {:.1}s)",
                r.exploitability, r.iter, run.config.solver.step, run.seconds
            ),
            None => format!(
                "best {:.3e} after {} iterations",
                log.iter().map(|r| r.exploitability).fold(f64::INFINITY, f64::min),
                log.len() - 1
            ),
        },
    }
}

fn invariants(runs: &[(&str, &ScenarioRun)], fields: &Fields) -> Outcome {
    let mut worst_mass: f64 = 0.0;
    let mut worst_bound = f64::NEG_INFINITY;
    for (_, run) in runs {
        worst_mass = worst_mass.max(run.mass_defect);
        worst_bound = worst_bound.max(run.value.bound_excess(&run.frozen.bounds(&run.validated.grid)));
    }
    for (_, u, c) in &fields.0 {
        worst_bound = worst_bound.max(u.bound_excess(&c.bounds(u.grid())));
    }
    Outcome {
        id: 11,
        name: "Boundedness and mass invariants",
        passed: worst_mass <= 1e-12 && worst_bound <= 0.0,
        detail: format!(
            "max |mass - 1| over all iterates {worst_mass:.1e}; max |u| excess over bound {worst_bound:.1e} ({} fields)",
            fields.0.len() + runs.len()
        ),
    }
}

fn main() {
    let example = run_scenario("example_dirac", 1);
    let zero = run_scenario("constant_zero", 1);
    let congestion = run_scenario("congestion_example", rayon::current_num_threads());
    let runs = [
        ("constant_zero", &zero),
        ("example_dirac", &example),
        ("congestion_example", &congestion),
    ];
    let mut fields = Fields::default();
    for (name, run) in &runs {
        fields.push(format!("{name} equilibrium"), &run.value, &run.frozen);
    }

    let mut outcomes = vec![
        arrival_bound(&example),
        mass_concentration(&example),
        closed_form(&example, &mut fields),
        oracle_equivalence(&mut fields),
    ];
    let refinement = residual_refinement(&mut fields);
    outcomes.push(dpp_exactness(&fields));
    outcomes.push(refinement);
    outcomes.push(w1_correctness());
    outcomes.push(holder_bound(&runs));
    outcomes.push(trivial_equilibria(&runs[..2]));
    outcomes.push(congestion_run(&congestion));
    outcomes.push(invariants(&runs, &fields));
    outcomes.sort_by_key(|o| o.id);

    for o in &outcomes {
        println!(
            "{} {:>2}. {}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.id,
            o.name,
            o.detail
        );
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} of {} criteria passed", outcomes.len() - failed, outcomes.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
