//! Uniform xy grid used for exact fixed-radius neighbor queries.

use std::collections::HashMap;

#[derive(Debug, Clone)]
pub struct GridIndex {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl GridIndex {
    /// Indexes `points` with square cells of side `cell` (> 0).
    pub fn build<I>(points: I, cell: f64) -> Self
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        assert!(cell > 0.0 && cell.is_finite(), "grid cell size must be positive");
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, (x, y)) in points.into_iter().enumerate() {
            cells.entry(Self::key_for(cell, x, y)).or_default().push(i);
        }
        GridIndex { cell, cells }
    }

    fn key_for(cell: f64, x: f64, y: f64) -> (i64, i64) {
        ((x / cell).floor() as i64, (y / cell).floor() as i64)
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    /// Calls `f` for every indexed point that may lie within `radius` of
    /// `(x, y)` in either axis. Cells are visited in a fixed order and
    /// points within a cell in insertion order.
    pub fn for_each_candidate<F: FnMut(usize)>(&self, x: f64, y: f64, radius: f64, mut f: F) {
        let reach = (radius / self.cell).ceil().max(1.0) as i64;
        let (cx, cy) = Self::key_for(self.cell, x, y);
        for gx in cx - reach..=cx + reach {
            for gy in cy - reach..=cy + reach {
                if let Some(v) = self.cells.get(&(gx, gy)) {
                    v.iter().copied().for_each(&mut f);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn candidates_cover_radius() {
        let pts: Vec<(f64, f64)> = (0..100)
            .map(|i| ((i % 10) as f64 * 0.37, (i / 10) as f64 * 0.41))
            .collect();
        let g = GridIndex::build(pts.iter().copied(), 0.5);
        for &(x, y) in &pts {
            let mut got = Vec::new();
            g.for_each_candidate(x, y, 0.5, |j| got.push(j));
            for (j, &(u, v)) in pts.iter().enumerate() {
                if (u - x).abs() <= 0.5 && (v - y).abs() <= 0.5 {
                    assert!(got.contains(&j));
                }
            }
        }
    }

    #[test]
    fn negative_coordinates() {
        let g = GridIndex::build([(-0.1, -0.1), (0.1, 0.1)], 1.0);
        let mut got = Vec::new();
        g.for_each_candidate(0.0, 0.0, 0.3, |j| got.push(j));
        got.sort();
        assert_eq!(got, vec![0, 1]);
    }
}
