//! CSV artifacts. Reals are printed with 17 significant digits so that a
//! rerun reproduces files byte for byte.

use std::io::{self, Write};

use crate::hj::{Grid, ResidualField, ValueField};
use crate::mfg::{MeasureFlow, TrajectoryMeasure};
use crate::network::NetworkPoint;
use crate::trajectory::Trajectory;

pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn edge_and_radius(p: &NetworkPoint) -> (usize, f64) {
    (p.edge().unwrap_or(0), p.radius())
}

/// `edge,r,t,u`, time-major, then edge (0 is the vertex), then radius.
pub fn write_value_csv(u: &ValueField, mut w: impl Write) -> io::Result<()> {
    let grid = u.grid();
    writeln!(w, "edge,r,t,u")?;
    for k in 0..=grid.steps() {
        let t = fmt_real(grid.time(k));
        for node in 0..grid.num_nodes() {
            let (edge, r) = edge_and_radius(&grid.point_of(node));
            writeln!(w, "{edge},{},{t},{}", fmt_real(r), fmt_real(u.get(node, k)))?;
        }
    }
    Ok(())
}

/// `edge,r,t,residual` for time levels `0..K_T`, same ordering as values.
pub fn write_residual_csv(res: &ResidualField, grid: &Grid, mut w: impl Write) -> io::Result<()> {
    writeln!(w, "edge,r,t,residual")?;
    for k in 0..res.levels() {
        let t = fmt_real(grid.time(k));
        for node in 0..grid.num_nodes() {
            let (edge, r) = edge_and_radius(&grid.point_of(node));
            writeln!(w, "{edge},{},{t},{}", fmt_real(r), fmt_real(res.get(node, k)))?;
        }
    }
    Ok(())
}

fn trajectory_rows(traj: &Trajectory, prefix: &str, w: &mut impl Write) -> io::Result<()> {
    for (s, p) in traj.points().iter().enumerate() {
        let (edge, r) = edge_and_radius(p);
        let speed = traj.controls().get(s).map_or(0.0, |c| c.speed());
        writeln!(
            w,
            "{prefix}{},{edge},{},{}",
            fmt_real(traj.time(s)),
            fmt_real(r),
            fmt_real(speed)
        )?;
    }
    Ok(())
}

/// `t,edge,r,speed` per sample; the speed is that of the step leaving the
/// sample (0 on the last row).
pub fn write_trajectory_csv(traj: &Trajectory, mut w: impl Write) -> io::Result<()> {
    writeln!(w, "t,edge,r,speed")?;
    trajectory_rows(traj, "", &mut w)
}

/// Trajectory rows of every particle, prefixed by `particle,weight`.
pub fn write_measure_csv(mu: &TrajectoryMeasure, mut w: impl Write) -> io::Result<()> {
    writeln!(w, "particle,weight,t,edge,r,speed")?;
    for (j, p) in mu.particles().iter().enumerate() {
        let prefix = format!("{j},{},", fmt_real(p.weight));
        trajectory_rows(&p.trajectory, &prefix, &mut w)?;
    }
    Ok(())
}

/// `t,edge,bin_lo,bin_hi,mass`: a vertex row `t,0,0,0,mass` per time, then
/// the bins of each edge up to the outermost bin that ever holds mass.
pub fn write_flow_csv(flow: &MeasureFlow, grid: &Grid, mut w: impl Write) -> io::Result<()> {
    writeln!(w, "t,edge,bin_lo,bin_hi,mass")?;
    let dr = flow.dr();
    let active = flow
        .slices()
        .iter()
        .flat_map(|s| (1..=s.num_edges()).map(move |e| s.edge_masses(e)))
        .filter_map(|m| m.iter().rposition(|&x| x != 0.0))
        .max()
        .map_or(0, |j| j + 1);
    let zero = fmt_real(0.0);
    for (k, slice) in flow.slices().iter().enumerate() {
        let t = fmt_real(grid.time(k));
        writeln!(w, "{t},0,{zero},{zero},{}", fmt_real(slice.vertex_mass()))?;
        for edge in 1..=slice.num_edges() {
            for (j, &m) in slice.edge_masses(edge)[..active].iter().enumerate() {
                let node = j + 1;
                let lo = (node as f64 - 0.5) * dr;
                let hi = (node as f64 + 0.5) * dr;
                writeln!(w, "{t},{edge},{},{},{}", fmt_real(lo), fmt_real(hi), fmt_real(m))?;
            }
        }
    }
    Ok(())
}
