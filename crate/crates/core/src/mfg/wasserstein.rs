use crate::error::{domain, Result};
use crate::network::JunctionGeometry;

use super::MeasureSlice;

/// Masses may differ by this much before W1 refuses to compare them.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Wasserstein-1 distance between two binned measures on a star tree.
///
/// Every imbalance on an edge is routed through `O`, so the optimal cost is
/// `sum_i ∫ |M_i^a(r) - M_i^b(r)| dr` with `M_i(r)` the mass of edge `i`
/// strictly beyond `r`. With atoms on nodes `M_i` is constant on each
/// `[(j - 1) dr, j dr)`.
pub fn wasserstein1(g: &JunctionGeometry, a: &MeasureSlice, b: &MeasureSlice) -> Result<f64> {
    check_comparable(g, a, b)?;
    let dr = a.dr();
    let mut total = 0.0;
    for edge in 1..=g.num_edges() {
        let (ma, mb) = (a.edge_masses(edge), b.edge_masses(edge));
        let mut tail = 0.0;
        let mut acc = 0.0;
        for j in (0..ma.len()).rev() {
            tail += ma[j] - mb[j];
            acc += tail.abs();
        }
        total += acc * dr;
    }
    Ok(total)
}

fn check_comparable(g: &JunctionGeometry, a: &MeasureSlice, b: &MeasureSlice) -> Result<()> {
    if a.num_edges() != g.num_edges() || b.num_edges() != g.num_edges() {
        return domain("slice edge count differs from the geometry");
    }
    if a.cells() != b.cells() || a.dr() != b.dr() {
        return domain("slices are binned on different grids");
    }
    let (ta, tb) = (a.total_mass(), b.total_mass());
    if (ta - tb).abs() > MASS_TOLERANCE {
        return domain(format!("mass mismatch: {ta} vs {tb}"));
    }
    Ok(())
}

/// Tail masses `M_i(r)` for `r` in `[(j - 1) dr, j dr)`, laid out edge by
/// edge; `W1` between two slices is `dr` times the l1 distance of these
/// vectors.
pub(crate) fn tail_profile(slice: &MeasureSlice, upto: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(slice.num_edges() * upto);
    for edge in 1..=slice.num_edges() {
        let masses = slice.edge_masses(edge);
        let mut tails = vec![0.0; upto];
        let mut tail: f64 = masses[upto..].iter().sum();
        for j in (0..upto).rev() {
            tail += masses[j];
            tails[j] = tail;
        }
        out.extend(tails);
    }
    out
}
