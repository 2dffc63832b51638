use super::grid::QuantileGrid;
use super::map::TransportMap;
use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

/// Serializes a map as CSV with header `i,j,u,t` (17 significant digits).
pub fn map_to_csv(t: &TransportMap) -> String {
    let mut out = String::from("i,j,u,t\n");
    let u = t.grid().nodes();
    for i in 0..t.dim() {
        for (j, (uj, tj)) in u.iter().zip(t.coord(i)).enumerate() {
            let _ = writeln!(out, "{i},{j},{uj:.16e},{tj:.16e}");
        }
    }
    out
}

pub fn write_map_csv(t: &TransportMap, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, map_to_csv(t))?;
    Ok(())
}

/// Parses the CSV written by [`write_map_csv`].
pub fn map_from_csv(text: &str) -> Result<TransportMap> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("i,j,u,t") {
        return Err(Error::Io("map CSV must start with header i,j,u,t".into()));
    }
    let mut rows: Vec<(usize, usize, f64, f64)> = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || Error::Io(format!("malformed map CSV row {}: '{line}'", n + 2));
        if f.len() != 4 {
            return Err(bad());
        }
        rows.push((
            f[0].parse().map_err(|_| bad())?,
            f[1].parse().map_err(|_| bad())?,
            f[2].parse().map_err(|_| bad())?,
            f[3].parse().map_err(|_| bad())?,
        ));
    }
    let d = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let m = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
    if d == 0 || rows.len() != d * m {
        return Err(Error::Io(format!("map CSV has {} rows, expected d*m", rows.len())));
    }
    let mut nodes = vec![f64::NAN; m];
    let mut values = vec![f64::NAN; d * m];
    for &(i, j, u, t) in &rows {
        if nodes[j].is_nan() {
            nodes[j] = u;
        } else if nodes[j] != u {
            return Err(Error::Io(format!("node {j} differs between coordinates")));
        }
        values[i * m + j] = t;
    }
    let grid = Arc::new(QuantileGrid::from_nodes(nodes)?);
    TransportMap::new(grid, d, values)
}

pub fn read_map_csv(path: impl AsRef<Path>) -> Result<TransportMap> {
    map_from_csv(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let g = Arc::new(QuantileGrid::new(12).unwrap());
        let t = TransportMap::affine(g, &[0.1, -2.0], &[0.7, 1.3]).unwrap();
        let back = map_from_csv(&map_to_csv(&t)).unwrap();
        assert_eq!(back.grid(), t.grid());
        for (a, b) in back.values().iter().zip(t.values()) {
            assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0));
        }
    }
}
