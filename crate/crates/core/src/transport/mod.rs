//! Product measures as coordinatewise monotone maps pushing N(0, I_d) forward,
//! plus the frozen quadrature points used for every expectation.

mod distance;
mod grid;
mod io;
mod map;
mod quadrature;

pub use distance::{h1_distance, lp_distance};
pub use grid::QuantileGrid;
pub use io::{map_from_csv, map_to_csv, read_map_csv, write_map_csv};
pub use map::TransportMap;
pub use quadrature::{MCQuadrature, PointSet, Scheme};

use crate::error::Result;

/// Row k is T(u_k) for the k-th quadrature point.
pub fn push_samples(t: &TransportMap, q: &MCQuadrature) -> Result<PointSet> {
    if t.dim() != q.dim() {
        return Err(crate::Error::shape(t.dim(), q.dim()));
    }
    let d = t.dim();
    let mut data = vec![0.0; q.len() * d];
    for (k, u) in q.points().rows().enumerate() {
        t.eval_into(u, &mut data[k * d..(k + 1) * d]);
    }
    Ok(PointSet::new(q.len(), d, data))
}
