//! Independent optimal-transport oracle: the Kantorovich problem between
//! two discrete measures solved as a linear program.

use minilp::{ComparisonOp, OptimizationDirection, Problem};

use crate::error::{domain, Result};
use crate::mfg::MeasureSlice;
use crate::network::{geodesic_distance, JunctionGeometry, NetworkPoint};

/// Minimal cost of moving `supply` onto `demand` under `cost[i][j]`.
pub fn transport_lp(cost: &[Vec<f64>], supply: &[f64], demand: &[f64]) -> Result<f64> {
    if cost.len() != supply.len() || cost.iter().any(|row| row.len() != demand.len()) {
        return domain("cost matrix shape does not match the marginals");
    }
    let mut problem = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<Vec<_>> = cost
        .iter()
        .map(|row| {
            row.iter()
                .map(|&c| problem.add_var(c, (0.0, f64::INFINITY)))
                .collect()
        })
        .collect();
    for (i, &s) in supply.iter().enumerate() {
        let terms: Vec<_> = vars[i].iter().map(|&v| (v, 1.0)).collect();
        problem.add_constraint(terms.as_slice(), ComparisonOp::Eq, s);
    }
    // the last column is implied by the others when the masses agree
    for (j, &d) in demand.iter().enumerate().take(demand.len().saturating_sub(1)) {
        let terms: Vec<_> = vars.iter().map(|row| (row[j], 1.0)).collect();
        problem.add_constraint(terms.as_slice(), ComparisonOp::Eq, d);
    }
    match problem.solve() {
        Ok(solution) => Ok(solution.objective()),
        Err(e) => domain(format!("transport LP failed: {e}")),
    }
}

/// W1 between two slices by LP over their atoms and the geodesic distance.
pub fn wasserstein1_lp(g: &JunctionGeometry, a: &MeasureSlice, b: &MeasureSlice) -> Result<f64> {
    let atoms_a = a.atoms();
    let atoms_b = b.atoms();
    wasserstein1_atoms_lp(g, &atoms_a, &atoms_b)
}

pub fn wasserstein1_atoms_lp(
    g: &JunctionGeometry,
    a: &[(NetworkPoint, f64)],
    b: &[(NetworkPoint, f64)],
) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return domain("both measures need at least one atom");
    }
    let cost = a
        .iter()
        .map(|(x, _)| {
            b.iter()
                .map(|(y, _)| geodesic_distance(g, x, y))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let supply: Vec<f64> = a.iter().map(|p| p.1).collect();
    let demand: Vec<f64> = b.iter().map(|p| p.1).collect();
    transport_lp(&cost, &supply, &demand)
}
