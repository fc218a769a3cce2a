//! Square analysis grid in a local equirectangular projection.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

use super::{GeoPoint, EARTH_RADIUS_M};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellId {
    pub row: usize,
    pub col: usize,
}

/// Cells are half-open `[x0, x0 + size)` in projected meters, so a point on a
/// shared edge belongs to the cell with the larger index. Points on the far
/// edge of the box go to the last row/column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: GeoPoint,
    pub cell_m: f64,
    /// `[min_lon, min_lat, max_lon, max_lat]`
    pub bbox: [f64; 4],
}

impl GridSpec {
    pub fn new(origin: GeoPoint, cell_m: f64, bbox: [f64; 4]) -> Result<Self> {
        if !(cell_m.is_finite() && cell_m > 0.0) {
            return Err(invalid(format!("grid cell size {cell_m} must be > 0")));
        }
        if !(bbox[0] < bbox[2] && bbox[1] < bbox[3]) {
            return Err(invalid("grid bounding box is empty"));
        }
        Ok(GridSpec {
            origin,
            cell_m,
            bbox,
        })
    }

    fn meters_per_deg_lon(&self) -> f64 {
        EARTH_RADIUS_M * self.origin.lat.to_radians().cos() * std::f64::consts::PI / 180.0
    }

    fn meters_per_deg_lat(&self) -> f64 {
        EARTH_RADIUS_M * std::f64::consts::PI / 180.0
    }

    /// Projected (x, y) meters relative to the origin.
    pub fn project(&self, p: GeoPoint) -> (f64, f64) {
        (
            (p.lon - self.origin.lon) * self.meters_per_deg_lon(),
            (p.lat - self.origin.lat) * self.meters_per_deg_lat(),
        )
    }

    pub fn unproject(&self, x: f64, y: f64) -> GeoPoint {
        GeoPoint {
            lon: self.origin.lon + x / self.meters_per_deg_lon(),
            lat: self.origin.lat + y / self.meters_per_deg_lat(),
        }
    }

    fn min_xy(&self) -> (f64, f64) {
        self.project(GeoPoint {
            lon: self.bbox[0],
            lat: self.bbox[1],
        })
    }

    fn extent(&self) -> (f64, f64) {
        let (x0, y0) = self.min_xy();
        let (x1, y1) = self.project(GeoPoint {
            lon: self.bbox[2],
            lat: self.bbox[3],
        });
        (x1 - x0, y1 - y0)
    }

    pub fn n_cols(&self) -> usize {
        ((self.extent().0 / self.cell_m).ceil() as usize).max(1)
    }

    pub fn n_rows(&self) -> usize {
        ((self.extent().1 / self.cell_m).ceil() as usize).max(1)
    }

    pub fn n_cells(&self) -> usize {
        self.n_rows() * self.n_cols()
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        p.lon >= self.bbox[0] && p.lon <= self.bbox[2] && p.lat >= self.bbox[1] && p.lat <= self.bbox[3]
    }

    pub fn cell(&self, p: GeoPoint) -> Result<CellId> {
        if !self.contains(p) {
            return Err(invalid(format!(
                "point ({}, {}) is outside the grid box",
                p.lon, p.lat
            )));
        }
        let (x, y) = self.project(p);
        Ok(self.cell_of_xy(x, y))
    }

    /// Cell for projected coordinates, clamped into the grid.
    pub fn cell_of_xy(&self, x: f64, y: f64) -> CellId {
        let (x0, y0) = self.min_xy();
        let col = (((x - x0) / self.cell_m).floor().max(0.0) as usize).min(self.n_cols() - 1);
        let row = (((y - y0) / self.cell_m).floor().max(0.0) as usize).min(self.n_rows() - 1);
        CellId { row, col }
    }

    pub fn linear(&self, c: CellId) -> usize {
        c.row * self.n_cols() + c.col
    }

    /// Projected bounds `(x_lo, y_lo, x_hi, y_hi)` of a cell.
    pub fn cell_bounds_xy(&self, c: CellId) -> (f64, f64, f64, f64) {
        let (x0, y0) = self.min_xy();
        let xl = x0 + c.col as f64 * self.cell_m;
        let yl = y0 + c.row as f64 * self.cell_m;
        (xl, yl, xl + self.cell_m, yl + self.cell_m)
    }

    pub fn cell_center(&self, c: CellId) -> GeoPoint {
        let (xl, yl, xh, yh) = self.cell_bounds_xy(c);
        self.unproject((xl + xh) / 2.0, (yl + yh) / 2.0)
    }

    /// Corner coordinates, counter-clockwise from the south-west corner.
    pub fn cell_polygon(&self, c: CellId) -> [GeoPoint; 4] {
        let (xl, yl, xh, yh) = self.cell_bounds_xy(c);
        [
            self.unproject(xl, yl),
            self.unproject(xh, yl),
            self.unproject(xh, yh),
            self.unproject(xl, yh),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec() -> GridSpec {
        GridSpec::new(
            GeoPoint {
                lon: 139.1036,
                lat: 35.2329,
            },
            250.0,
            [139.00, 35.15, 139.20, 35.30],
        )
        .unwrap()
    }

    #[test]
    fn center_maps_to_own_cell() {
        let g = spec();
        for row in [0, 3, g.n_rows() - 1] {
            for col in [0, 7, g.n_cols() - 1] {
                let c = CellId { row, col };
                let center = g.cell_center(c);
                if g.contains(center) {
                    assert_eq!(g.cell(center).unwrap(), c);
                }
            }
        }
    }

    #[test]
    fn shared_edge_goes_to_larger_index() {
        // Origin at the south-west corner makes projected edges exact multiples.
        let g = GridSpec::new(
            GeoPoint { lon: 139.0, lat: 35.0 },
            250.0,
            [139.0, 35.0, 139.1, 35.1],
        )
        .unwrap();
        assert_eq!(g.cell_of_xy(1000.0, 10.0), CellId { row: 0, col: 4 });
        assert_eq!(g.cell_of_xy(999.999, 10.0), CellId { row: 0, col: 3 });
        assert_eq!(g.cell_of_xy(10.0, 500.0), CellId { row: 2, col: 0 });
        assert_eq!(g.cell_of_xy(0.0, 0.0), CellId { row: 0, col: 0 });
    }

    #[test]
    fn out_of_box_is_an_error() {
        assert!(spec().cell(GeoPoint { lon: 139.5, lat: 35.2 }).is_err());
    }

    #[test]
    fn random_points_partition_and_containment() {
        let g = spec();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let p = GeoPoint {
                lon: rng.random_range(g.bbox[0]..=g.bbox[2]),
                lat: rng.random_range(g.bbox[1]..=g.bbox[3]),
            };
            let c = g.cell(p).unwrap();
            assert!(c.row < g.n_rows() && c.col < g.n_cols());
            let poly = g.cell_polygon(c);
            let inside_lon = p.lon >= poly[0].lon - 1e-12 && p.lon <= poly[1].lon + 1e-12;
            let inside_lat = p.lat >= poly[0].lat - 1e-12 && p.lat <= poly[2].lat + 1e-12;
            // The last row/column absorbs the far box edge.
            let far = c.col == g.n_cols() - 1 || c.row == g.n_rows() - 1;
            assert!((inside_lon && inside_lat) || far, "{p:?} not in {poly:?}");
            // exactly one cell: neighbours never claim it
            let count = (0..g.n_rows())
                .flat_map(|r| (0..g.n_cols()).map(move |col| CellId { row: r, col }))
                .filter(|cc| {
                    let (xl, yl, xh, yh) = g.cell_bounds_xy(*cc);
                    let (x, y) = g.project(p);
                    x >= xl && x < xh && y >= yl && y < yh
                })
                .count();
            assert!(count <= 1);
        }
    }
}
