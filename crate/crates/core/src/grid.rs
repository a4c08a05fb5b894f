//! Uniform rectangular partitions of a box state space.
//!
//! Cells are numbered row-major over their multi-index, so the last axis
//! varies fastest. Two cells share a face exactly when their multi-indices
//! differ by one in a single axis.

use crate::error::{Error, Result};

/// Axis-aligned box `[lo_0, hi_0] x ... x [lo_{d-1}, hi_{d-1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl AxisBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() {
            return Err(Error::InvalidGrid("box must have at least one axis".into()));
        }
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        for (k, (a, b)) in lo.iter().zip(&hi).enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::InvalidGrid(format!(
                    "axis {k}: lower bound {a} must be below upper bound {b}"
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    /// Square box `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    /// Closed-set membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }
}

/// A region used to pick out cells, e.g. the target set or the region of interest.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Box(AxisBox),
    /// Closed Euclidean ball.
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
}

impl Region {
    pub fn dim(&self) -> usize {
        match self {
            Region::Box(b) => b.dim(),
            Region::Ball { center, .. } => center.len(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::Box(b) => b.contains(x),
            Region::Ball { center, radius } => dist2(x, center) <= radius * radius,
        }
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// How a cell is matched against a region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectRule {
    /// The whole cell lies inside the region.
    Contained,
    /// The cell center lies inside the region.
    CenterIn,
    /// The cell and the region overlap with positive volume.
    Intersects,
}

/// Which side of its owner cell a face lies on along its axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Outer normal is `-e_axis`.
    Lower,
    /// Outer normal is `+e_axis`.
    Upper,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Lower => -1.0,
            Side::Upper => 1.0,
        }
    }

    pub fn flip(self) -> Side {
        match self {
            Side::Lower => Side::Upper,
            Side::Upper => Side::Lower,
        }
    }
}

/// An oriented face record: the face of `owner` on `side` along `axis`.
#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    pub owner: usize,
    /// `None` when the face lies on the boundary of the state space.
    pub neighbor: Option<usize>,
    pub axis: usize,
    pub side: Side,
    /// Degenerate box (zero extent along `axis`) describing the face.
    pub geometry: AxisBox,
    /// (d-1)-dimensional measure; 1 for point faces of a 1D grid.
    pub measure: f64,
}

/// Uniform rectangular partition of a box.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    bounds: AxisBox,
    resolution: Vec<usize>,
    widths: Vec<f64>,
    strides: Vec<usize>,
    n_cells: usize,
    cell_volume: f64,
}

impl Grid {
    pub fn new(bounds: AxisBox, resolution: Vec<usize>) -> Result<Self> {
        let d = bounds.dim();
        if resolution.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: resolution.len(),
            });
        }
        if let Some(k) = resolution.iter().position(|&r| r == 0) {
            return Err(Error::InvalidGrid(format!(
                "resolution along axis {k} must be positive"
            )));
        }
        let widths: Vec<f64> = (0..d)
            .map(|k| (bounds.hi[k] - bounds.lo[k]) / resolution[k] as f64)
            .collect();
        let mut strides = vec![1usize; d];
        for k in (0..d.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * resolution[k + 1];
        }
        let n_cells = resolution.iter().product();
        let cell_volume = widths.iter().product();
        Ok(Self {
            bounds,
            resolution,
            widths,
            strides,
            n_cells,
            cell_volume,
        })
    }

    pub fn dim(&self) -> usize {
        self.resolution.len()
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn bounds(&self) -> &AxisBox {
        &self.bounds
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    /// Measure of a face normal to `axis`.
    pub fn face_measure(&self, axis: usize) -> f64 {
        self.widths
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != axis)
            .map(|(_, w)| w)
            .product()
    }

    pub fn multi_index(&self, cell: usize) -> Vec<usize> {
        let mut rest = cell;
        self.strides
            .iter()
            .map(|s| {
                let i = rest / s;
                rest %= s;
                i
            })
            .collect()
    }

    pub fn cell_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    /// Index of the coordinate `i` along `axis` of a cell.
    pub fn axis_index(&self, cell: usize, axis: usize) -> usize {
        (cell / self.strides[axis]) % self.resolution[axis]
    }

    pub fn neighbor(&self, cell: usize, axis: usize, side: Side) -> Option<usize> {
        let i = self.axis_index(cell, axis);
        match side {
            Side::Lower if i > 0 => Some(cell - self.strides[axis]),
            Side::Upper if i + 1 < self.resolution[axis] => Some(cell + self.strides[axis]),
            _ => None,
        }
    }

    pub fn cell_center(&self, cell: usize) -> Vec<f64> {
        self.multi_index(cell)
            .iter()
            .enumerate()
            .map(|(k, &i)| self.bounds.lo[k] + (i as f64 + 0.5) * self.widths[k])
            .collect()
    }

    pub fn cell_box(&self, cell: usize) -> AxisBox {
        let multi = self.multi_index(cell);
        let lo = (0..self.dim())
            .map(|k| self.bounds.lo[k] + multi[k] as f64 * self.widths[k])
            .collect();
        let hi = (0..self.dim())
            .map(|k| self.bounds.lo[k] + (multi[k] + 1) as f64 * self.widths[k])
            .collect();
        AxisBox { lo, hi }
    }

    /// Cell containing `x`; points on the upper domain boundary belong to
    /// the last cell along that axis.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.dim() || !self.bounds.contains(x) {
            return None;
        }
        let mut cell = 0;
        for (k, s) in self.strides.iter().enumerate() {
            let i = ((x[k] - self.bounds.lo[k]) / self.widths[k]).floor() as usize;
            cell += i.min(self.resolution[k] - 1) * s;
        }
        Some(cell)
    }

    /// Lower corner of the cell face on `side` along `axis`.
    pub(crate) fn face_origin(&self, cell: usize, axis: usize, side: Side, out: &mut [f64]) {
        let mut rest = cell;
        for (k, s) in self.strides.iter().enumerate() {
            let i = rest / s;
            rest %= s;
            let i = if k == axis && side == Side::Upper {
                i + 1
            } else {
                i
            };
            out[k] = self.bounds.lo[k] + i as f64 * self.widths[k];
        }
    }

    /// Every oriented face, `2d` per cell, in cell order then axis order
    /// then lower-before-upper.
    pub fn faces(&self) -> Vec<Face> {
        let d = self.dim();
        let mut out = Vec::with_capacity(2 * d * self.n_cells);
        for cell in 0..self.n_cells {
            let cb = self.cell_box(cell);
            for axis in 0..d {
                for side in [Side::Lower, Side::Upper] {
                    let mut lo = cb.lo.clone();
                    let mut hi = cb.hi.clone();
                    let at = if side == Side::Lower {
                        cb.lo[axis]
                    } else {
                        cb.hi[axis]
                    };
                    lo[axis] = at;
                    hi[axis] = at;
                    out.push(Face {
                        owner: cell,
                        neighbor: self.neighbor(cell, axis, side),
                        axis,
                        side,
                        geometry: AxisBox { lo, hi },
                        measure: self.face_measure(axis),
                    });
                }
            }
        }
        out
    }

    pub fn select_cells(&self, region: &Region, rule: SelectRule) -> Result<CellSet> {
        self.select_labeled(region, rule, CellLabel::Custom(String::new()))
    }

    pub fn select_labeled(
        &self,
        region: &Region,
        rule: SelectRule,
        label: CellLabel,
    ) -> Result<CellSet> {
        if region.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: region.dim(),
            });
        }
        let cells = (0..self.n_cells)
            .filter(|&c| self.cell_matches(c, region, rule))
            .collect();
        Ok(CellSet { label, cells })
    }

    fn cell_matches(&self, cell: usize, region: &Region, rule: SelectRule) -> bool {
        let cb = self.cell_box(cell);
        // Absorbs roundoff in cell edges computed as lo + i * width.
        let tol: Vec<f64> = self.widths.iter().map(|w| 1e-12 * w).collect();
        match (region, rule) {
            (_, SelectRule::CenterIn) => region.contains(&self.cell_center(cell)),
            (Region::Box(r), SelectRule::Contained) => (0..self.dim())
                .all(|k| cb.lo[k] >= r.lo[k] - tol[k] && cb.hi[k] <= r.hi[k] + tol[k]),
            (Region::Box(r), SelectRule::Intersects) => {
                (0..self.dim()).all(|k| cb.hi[k].min(r.hi[k]) - cb.lo[k].max(r.lo[k]) > tol[k])
            }
            (Region::Ball { center, radius }, SelectRule::Contained) => {
                let far: f64 = (0..self.dim())
                    .map(|k| {
                        let e = (center[k] - cb.lo[k])
                            .abs()
                            .max((cb.hi[k] - center[k]).abs());
                        e * e
                    })
                    .sum();
                far <= radius * radius
            }
            (Region::Ball { center, radius }, SelectRule::Intersects) => {
                let near: f64 = (0..self.dim())
                    .map(|k| {
                        let e = (cb.lo[k] - center[k]).max(0.0).max(center[k] - cb.hi[k]);
                        e * e
                    })
                    .sum();
                near < radius * radius
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CellLabel {
    Target,
    D0,
    Custom(String),
}

/// Sorted, duplicate-free set of cell indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSet {
    label: CellLabel,
    cells: Vec<usize>,
}

impl CellSet {
    pub fn from_indices(n_cells: usize, label: CellLabel, mut cells: Vec<usize>) -> Result<Self> {
        cells.sort_unstable();
        cells.dedup();
        if let Some(&c) = cells.last() {
            if c >= n_cells {
                return Err(Error::InvalidGrid(format!(
                    "cell {c} out of range for {n_cells} cells"
                )));
            }
        }
        Ok(Self { label, cells })
    }

    pub fn with_label(mut self, label: CellLabel) -> Self {
        self.label = label;
        self
    }

    pub fn label(&self) -> &CellLabel {
        &self.label
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, cell: usize) -> bool {
        self.cells.binary_search(&cell).is_ok()
    }

    pub fn mask(&self, n_cells: usize) -> Vec<bool> {
        let mut m = vec![false; n_cells];
        for &c in &self.cells {
            m[c] = true;
        }
        m
    }

    pub fn is_subset_of(&self, other: &CellSet) -> bool {
        self.cells.iter().all(|&c| other.contains(c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_grid(res: usize) -> Grid {
        Grid::new(AxisBox::cube(1, 0.0, 1.0).unwrap(), vec![res]).unwrap()
    }

    #[test]
    fn two_cells_on_unit_interval() {
        let g = unit_grid(2);
        assert_eq!(g.n_cells(), 2);
        assert_eq!(g.cell_volume(), 0.5);
        assert_eq!(g.cell_box(1).lo(), &[0.5]);
    }

    #[test]
    fn benchmark_grid_sizes() {
        let b = AxisBox::cube(2, -1.0, 1.0).unwrap();
        let g = Grid::new(b.clone(), vec![64, 64]).unwrap();
        assert_eq!(g.n_cells(), 4096);
        assert_eq!(g.cell_volume(), 0.0009765625);
        assert_eq!(Grid::new(b, vec![256, 256]).unwrap().n_cells(), 65536);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(AxisBox::new(vec![1.0], vec![1.0]).is_err());
        assert!(AxisBox::new(vec![], vec![]).is_err());
        let b = AxisBox::cube(2, 0.0, 1.0).unwrap();
        assert!(Grid::new(b.clone(), vec![3, 0]).is_err());
        assert!(Grid::new(b, vec![3]).is_err());
    }

    #[test]
    fn contained_selection_aligned() {
        let g = unit_grid(4);
        let r = Region::Box(AxisBox::new(vec![0.5], vec![1.0]).unwrap());
        assert_eq!(
            g.select_cells(&r, SelectRule::Contained).unwrap().cells(),
            &[2, 3]
        );
    }

    #[test]
    fn central_target_on_64_grid() {
        let g = Grid::new(AxisBox::cube(2, -1.0, 1.0).unwrap(), vec![64, 64]).unwrap();
        let r = Region::Box(AxisBox::cube(2, -0.05, 0.05).unwrap());
        // Brute-force enumeration of centers lo + (i + 0.5) * width.
        let w = 2.0 / 64.0;
        let inside: Vec<usize> = (0..64)
            .filter(|&i| (-1.0 + (i as f64 + 0.5) * w).abs() <= 0.05)
            .collect();
        assert_eq!(inside, vec![30, 31, 32, 33]);
        let expected: Vec<usize> = inside
            .iter()
            .flat_map(|&i| inside.iter().map(move |&j| i * 64 + j))
            .collect();
        let sel = g.select_cells(&r, SelectRule::CenterIn).unwrap();
        assert_eq!(sel.cells(), expected.as_slice());
        let contained = g.select_cells(&r, SelectRule::Contained).unwrap();
        assert_eq!(
            contained.cells(),
            &[31 * 64 + 31, 31 * 64 + 32, 32 * 64 + 31, 32 * 64 + 32]
        );
        let narrow = Region::Box(AxisBox::cube(2, -0.03, 0.03).unwrap());
        assert_eq!(
            g.select_cells(&narrow, SelectRule::CenterIn).unwrap().len(),
            4
        );
    }

    #[test]
    fn disk_selection_matches_closest_point_test() {
        let g = Grid::new(AxisBox::cube(2, -1.0, 1.0).unwrap(), vec![64, 64]).unwrap();
        let disk = Region::Ball {
            center: vec![0.0, 0.0],
            radius: 0.3,
        };
        let sel = g.select_cells(&disk, SelectRule::Intersects).unwrap();
        let w = 2.0 / 64.0;
        let mut expected = Vec::new();
        for i in 0..64 {
            for j in 0..64 {
                let clamp = |k: usize| {
                    let lo = -1.0 + k as f64 * w;
                    let hi = lo + w;
                    0.0f64.clamp(lo, hi)
                };
                let (cx, cy) = (clamp(i), clamp(j));
                if cx * cx + cy * cy < 0.09 {
                    expected.push(i * 64 + j);
                }
            }
        }
        assert_eq!(sel.cells(), expected.as_slice());
        assert!(sel.contains(32 * 64 + 32));
    }

    #[test]
    fn one_dimensional_faces() {
        let g = unit_grid(2);
        let f: Vec<_> = g
            .faces()
            .iter()
            .map(|f| (f.owner, f.neighbor, f.side))
            .collect();
        assert_eq!(
            f,
            vec![
                (0, None, Side::Lower),
                (0, Some(1), Side::Upper),
                (1, Some(0), Side::Lower),
                (1, None, Side::Upper)
            ]
        );
        assert!(g.faces().iter().all(|f| f.measure == 1.0));
    }

    #[test]
    fn face_counts_2d() {
        for res in [2usize, 64] {
            let g = Grid::new(AxisBox::cube(2, -1.0, 1.0).unwrap(), vec![res, res]).unwrap();
            let faces = g.faces();
            let interior = faces.iter().filter(|f| f.neighbor.is_some()).count();
            let boundary = faces.len() - interior;
            assert_eq!(interior, 2 * 2 * res * (res - 1));
            assert_eq!(boundary, 4 * res);
        }
    }

    #[test]
    fn interior_faces_pair_up() {
        let g = Grid::new(
            AxisBox::new(vec![0.0, 0.0, 0.0], vec![1.0, 2.0, 3.0]).unwrap(),
            vec![3, 2, 4],
        )
        .unwrap();
        let faces = g.faces();
        for f in faces.iter().filter(|f| f.neighbor.is_some()) {
            let nb = f.neighbor.unwrap();
            let twin = faces
                .iter()
                .find(|h| h.owner == nb && h.neighbor == Some(f.owner))
                .expect("twin face");
            assert_eq!(twin.axis, f.axis);
            assert_eq!(twin.side, f.side.flip());
            assert_eq!(twin.geometry, f.geometry);
        }
    }
}
