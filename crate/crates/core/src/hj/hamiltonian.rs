use crate::costs::CostSpec;
use crate::error::{domain, Result};

/// Edge Hamiltonian `p^2/2 - l`.
pub fn hamiltonian_edge(p: f64, ell: f64) -> f64 {
    0.5 * p * p - ell
}

/// Edge Hamiltonian restricted to controls pointing into the edge from `O`.
pub fn hamiltonian_edge_down(p: f64, ell: f64) -> f64 {
    if p <= 0.0 {
        0.5 * p * p - ell
    } else {
        -ell
    }
}

/// Junction Hamiltonian `max{-l_O(t), max_i H_i^down(p_i, l_i(0, t))}`.
///
/// `p[i - 1]` is the outward derivative of the value function along edge `i`.
pub fn hamiltonian_vertex(t: f64, p: &[f64], c: &CostSpec) -> Result<f64> {
    if p.len() != c.num_edges() {
        return domain(format!(
            "expected {} edge derivatives, got {}",
            c.num_edges(),
            p.len()
        ));
    }
    Ok(p.iter()
        .enumerate()
        .fold(-c.vertex_running_effective(t), |m, (i, &pi)| {
            m.max(hamiltonian_edge_down(pi, c.edge_running(i + 1, 0.0, t)))
        }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn edge_examples() {
        assert_eq!(hamiltonian_edge(2.0, 1.0), 1.0);
        assert_eq!(hamiltonian_edge(0.0, 0.0), 0.0);
        assert_eq!(hamiltonian_edge(-3.0, 2.0), 2.5);
    }

    #[test]
    fn edge_down_examples() {
        assert_eq!(hamiltonian_edge_down(-2.0, 0.0), 2.0);
        assert_eq!(hamiltonian_edge_down(1.0, 0.0), 0.0);
        assert_eq!(hamiltonian_edge_down(0.0, 5.0), -5.0);
    }

    #[test]
    fn vertex_examples() {
        let ex = CostSpec::example_dirac(1.0).unwrap();
        // branch values enumerated by hand: -l_O = 1, H_1 = 1, H_2 = -1
        let branches = [1.0, hamiltonian_edge_down(0.0, -1.0), hamiltonian_edge_down(0.0, 1.0)];
        let enumerated = branches.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(enumerated, 1.0);
        assert_eq!(hamiltonian_vertex(0.3, &[0.0, 0.0], &ex).unwrap(), enumerated);

        let zero = CostSpec::zero(4, 1.0).unwrap();
        assert_eq!(hamiltonian_vertex(0.0, &[0.0; 4], &zero).unwrap(), 0.0);
        assert_eq!(hamiltonian_vertex(0.0, &[-2.0, 1.0, 1.0, 1.0], &zero).unwrap(), 2.0);
        assert!(hamiltonian_vertex(0.0, &[0.0; 3], &zero).is_err());
    }

    proptest! {
        #[test]
        fn restricted_hamiltonian_shape(p in -10.0f64..10.0, q in -10.0f64..10.0, ell in -5.0f64..5.0) {
            if p <= 0.0 {
                prop_assert_eq!(hamiltonian_edge_down(p, ell), hamiltonian_edge(p, ell));
            }
            let (lo, hi) = if p < q { (p, q) } else { (q, p) };
            prop_assert!(hamiltonian_edge_down(lo, ell) >= hamiltonian_edge_down(hi, ell));
        }
    }
}
