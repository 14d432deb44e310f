//! Grids, domain partitions, and conductivity fields.
//!
//! Everything downstream (elliptic operators, DN maps, extension solves)
//! consumes the cell-centered uniform grid built here: a box [−R, R]^n
//! (n ∈ {1, 2}) split into `cells_per_axis` cells per axis, with Ω, the
//! truncated exterior Ω_e ∩ box, and the measurement window W ⊂ Ω_e given
//! as disjoint cell-index sets. Shapes are rasterized by cell-center
//! membership. Values outside the box are implicitly zero (Dirichlet
//! closure of the truncation).

use crate::error::{CoreError, Result};
use crate::util::{fnv1a64, fnv1a64_f64};

/// Fractional order s ∈ (0, 1); validated at construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FracOrder(f64);

impl FracOrder {
    pub fn new(s: f64) -> Result<Self> {
        if s > 0.0 && s < 1.0 && s.is_finite() {
            Ok(FracOrder(s))
        } else {
            Err(CoreError::InvalidParameter(format!(
                "fractional order s must lie in (0,1), got {s}"
            )))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Uniform cell-centered grid on the box [−R, R]^n.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    n_dims: usize,
    cells_per_axis: usize,
    half_width: f64,
}

impl GridSpec {
    pub fn new(n_dims: usize, cells_per_axis: usize, half_width: f64) -> Result<Self> {
        if !(n_dims == 1 || n_dims == 2) {
            return Err(CoreError::InvalidGeometry(format!(
                "n_dims must be 1 or 2, got {n_dims}"
            )));
        }
        if cells_per_axis < 8 {
            return Err(CoreError::InvalidGeometry(format!(
                "cells_per_axis must be >= 8, got {cells_per_axis}"
            )));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(CoreError::InvalidGeometry(format!(
                "half_width must be positive, got {half_width}"
            )));
        }
        Ok(GridSpec {
            n_dims,
            cells_per_axis,
            half_width,
        })
    }

    pub fn n_dims(&self) -> usize {
        self.n_dims
    }

    pub fn cells_per_axis(&self) -> usize {
        self.cells_per_axis
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Cell size h = 2R / cells_per_axis.
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.cells_per_axis as f64
    }

    /// Cell volume h^n.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.n_dims as i32)
    }

    pub fn num_cells(&self) -> usize {
        self.cells_per_axis.pow(self.n_dims as u32)
    }

    /// Multi-index of a flat cell id (row-major; x fastest).
    pub fn multi_index(&self, cell: usize) -> [usize; 2] {
        match self.n_dims {
            1 => [cell, 0],
            _ => [cell % self.cells_per_axis, cell / self.cells_per_axis],
        }
    }

    pub fn flat_index(&self, ix: usize, iy: usize) -> usize {
        match self.n_dims {
            1 => ix,
            _ => iy * self.cells_per_axis + ix,
        }
    }

    /// Physical coordinates of a cell center.
    pub fn cell_center(&self, cell: usize) -> [f64; 2] {
        let h = self.spacing();
        let m = self.multi_index(cell);
        let c = |i: usize| -self.half_width + (i as f64 + 0.5) * h;
        match self.n_dims {
            1 => [c(m[0]), 0.0],
            _ => [c(m[0]), c(m[1])],
        }
    }

    /// Chebyshev distance between two cells in index units.
    pub fn grid_distance(&self, a: usize, b: usize) -> usize {
        let ma = self.multi_index(a);
        let mb = self.multi_index(b);
        let dx = ma[0].abs_diff(mb[0]);
        let dy = ma[1].abs_diff(mb[1]);
        dx.max(dy)
    }

    /// Neighbors of a cell across each axis face, `None` when the face lies
    /// on the box boundary.
    pub fn neighbors(&self, cell: usize) -> [[Option<usize>; 2]; 2] {
        let m = self.multi_index(cell);
        let n = self.cells_per_axis;
        let mut out = [[None, None], [None, None]];
        // axis 0
        out[0][0] = (m[0] > 0).then(|| self.flat_index(m[0] - 1, m[1]));
        out[0][1] = (m[0] + 1 < n).then(|| self.flat_index(m[0] + 1, m[1]));
        if self.n_dims == 2 {
            out[1][0] = (m[1] > 0).then(|| self.flat_index(m[0], m[1] - 1));
            out[1][1] = (m[1] + 1 < n).then(|| self.flat_index(m[0], m[1] + 1));
        }
        out
    }

    pub fn hash(&self) -> u64 {
        let mut h = fnv1a64(&(self.n_dims as u64).to_le_bytes());
        h = fnv1a64_f64(h, &[self.cells_per_axis as f64, self.half_width]);
        h
    }
}

/// Sorted, deduplicated set of cell indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CellSet(Vec<usize>);

impl CellSet {
    pub fn new(mut cells: Vec<usize>) -> Self {
        cells.sort_unstable();
        cells.dedup();
        CellSet(cells)
    }

    pub fn empty() -> Self {
        CellSet(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, cell: usize) -> bool {
        self.0.binary_search(&cell).is_ok()
    }

    /// Position of `cell` within the set's sorted order.
    pub fn local_index(&self, cell: usize) -> Option<usize> {
        self.0.binary_search(&cell).ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn intersects(&self, other: &CellSet) -> bool {
        let (small, big) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        small.iter().any(|c| big.contains(c))
    }

    pub fn is_subset_of(&self, other: &CellSet) -> bool {
        self.iter().all(|c| other.contains(c))
    }

    pub fn union(&self, other: &CellSet) -> CellSet {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        CellSet::new(v)
    }

    pub fn difference(&self, other: &CellSet) -> CellSet {
        CellSet(self.iter().filter(|c| !other.contains(*c)).collect())
    }
}

/// Axis-aligned box shape, rasterized by cell-center membership.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeBox {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl ShapeBox {
    pub fn interval(lo: f64, hi: f64) -> Self {
        ShapeBox {
            lo: [lo, 0.0],
            hi: [hi, 0.0],
        }
    }

    pub fn rect(lo: [f64; 2], hi: [f64; 2]) -> Self {
        ShapeBox { lo, hi }
    }

    fn validate(&self, grid: &GridSpec, name: &str) -> Result<()> {
        for ax in 0..grid.n_dims() {
            if self.lo[ax] > self.hi[ax] {
                return Err(CoreError::InvalidGeometry(format!(
                    "{name}: lo > hi along axis {ax}"
                )));
            }
            let r = grid.half_width();
            if self.lo[ax] < -r - 1e-12 || self.hi[ax] > r + 1e-12 {
                return Err(CoreError::InvalidGeometry(format!(
                    "{name}: shape [{}, {}] leaves the box [-{r}, {r}] on axis {ax}",
                    self.lo[ax], self.hi[ax]
                )));
            }
        }
        Ok(())
    }

    /// Cells whose centers lie in the closed box.
    pub fn rasterize(&self, grid: &GridSpec) -> CellSet {
        let eps = 1e-12 * grid.half_width().max(1.0);
        let cells = (0..grid.num_cells())
            .filter(|&c| {
                let p = grid.cell_center(c);
                (0..grid.n_dims())
                    .all(|ax| p[ax] >= self.lo[ax] - eps && p[ax] <= self.hi[ax] + eps)
            })
            .collect();
        CellSet::new(cells)
    }
}

/// Shape descriptors consumed by [`build_partition`]. The window may be a
/// union of boxes (a disconnected open W ⊂ Ω_e is admissible).
#[derive(Debug, Clone, Default)]
pub struct Geometry {
    pub omega: Option<ShapeBox>,
    pub window: Vec<ShapeBox>,
    pub b_set: Option<ShapeBox>,
    pub d_set: Option<ShapeBox>,
    pub o_set: Option<ShapeBox>,
}

impl Geometry {
    /// Single-box Ω and W.
    pub fn boxes(omega: ShapeBox, window: ShapeBox) -> Self {
        Geometry {
            omega: Some(omega),
            window: vec![window],
            ..Default::default()
        }
    }
}

/// Index sets for Ω, Ω_e ∩ box, W, and the optional test subsets B, D, O.
#[derive(Debug, Clone)]
pub struct DomainPartition {
    grid: GridSpec,
    omega: CellSet,
    exterior: CellSet,
    window: CellSet,
    b_set: Option<CellSet>,
    d_set: Option<CellSet>,
    o_set: Option<CellSet>,
}

impl DomainPartition {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn omega(&self) -> &CellSet {
        &self.omega
    }

    pub fn exterior(&self) -> &CellSet {
        &self.exterior
    }

    pub fn window(&self) -> &CellSet {
        &self.window
    }

    pub fn b_set(&self) -> Option<&CellSet> {
        self.b_set.as_ref()
    }

    pub fn d_set(&self) -> Option<&CellSet> {
        self.d_set.as_ref()
    }

    pub fn o_set(&self) -> Option<&CellSet> {
        self.o_set.as_ref()
    }

    /// Replaces the B/D subsets (used by localized-potential drivers that
    /// choose their own target/control sets).
    pub fn with_subsets(
        mut self,
        b_set: Option<CellSet>,
        d_set: Option<CellSet>,
        o_set: Option<CellSet>,
    ) -> Result<Self> {
        self.b_set = b_set;
        self.d_set = d_set;
        self.o_set = o_set;
        self.check_subsets()?;
        Ok(self)
    }

    fn check_subsets(&self) -> Result<()> {
        for (name, set) in [("B", &self.b_set), ("D", &self.d_set), ("O", &self.o_set)] {
            if let Some(s) = set {
                if !s.is_subset_of(&self.omega) {
                    return Err(CoreError::InvalidGeometry(format!(
                        "{name} set must be a subset of omega"
                    )));
                }
            }
        }
        if let (Some(b), Some(d)) = (&self.b_set, &self.d_set) {
            if b.intersects(d) {
                return Err(CoreError::InvalidGeometry(
                    "B and D sets must be disjoint".into(),
                ));
            }
            if b.difference(d).is_empty() {
                return Err(CoreError::InvalidGeometry("B \\ D must be nonempty".into()));
            }
        }
        Ok(())
    }
}

/// Builds the partition from shape descriptors.
///
/// The window must keep at least one full empty cell layer away from Ω
/// (Chebyshev index distance ≥ 2), the discrete stand-in for disjoint
/// closures.
pub fn build_partition(spec: &GridSpec, geometry: &Geometry) -> Result<DomainPartition> {
    let omega_shape = geometry
        .omega
        .as_ref()
        .ok_or_else(|| CoreError::InvalidGeometry("missing omega shape".into()))?;
    if geometry.window.is_empty() {
        return Err(CoreError::InvalidGeometry("missing window shape".into()));
    }
    omega_shape.validate(spec, "omega")?;
    let omega = omega_shape.rasterize(spec);
    let mut window_cells = Vec::new();
    for (i, shape) in geometry.window.iter().enumerate() {
        shape.validate(spec, &format!("window[{i}]"))?;
        window_cells.extend(shape.rasterize(spec).iter());
    }
    let window = CellSet::new(window_cells);
    if omega.is_empty() {
        return Err(CoreError::InvalidGeometry(
            "omega rasterizes to no cells".into(),
        ));
    }
    if window.is_empty() {
        return Err(CoreError::InvalidGeometry(
            "window rasterizes to no cells".into(),
        ));
    }
    for w in window.iter() {
        for o in omega.iter() {
            if spec.grid_distance(w, o) < 2 {
                return Err(CoreError::InvalidGeometry(
                    "window intersects domain closure (need >= 1 empty cell layer)".into(),
                ));
            }
        }
    }
    let exterior = CellSet::new(
        (0..spec.num_cells())
            .filter(|c| !omega.contains(*c))
            .collect(),
    );

    let raster_opt = |shape: &Option<ShapeBox>, name: &str| -> Result<Option<CellSet>> {
        match shape {
            None => Ok(None),
            Some(s) => {
                s.validate(spec, name)?;
                Ok(Some(s.rasterize(spec)))
            }
        }
    };
    let partition = DomainPartition {
        grid: spec.clone(),
        omega,
        exterior,
        window,
        b_set: raster_opt(&geometry.b_set, "B")?,
        d_set: raster_opt(&geometry.d_set, "D")?,
        o_set: raster_opt(&geometry.o_set, "O")?,
    };
    partition.check_subsets()?;
    Ok(partition)
}

/// Per-cell σ field with its ellipticity constant λ.
///
/// σ = 1 off Ω and λ ≤ σ ≤ 1/λ on Ω.
#[derive(Debug, Clone, PartialEq)]
pub struct Conductivity {
    values: Vec<f64>,
    lambda: f64,
}

impl Conductivity {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn value(&self, cell: usize) -> f64 {
        self.values[cell]
    }

    /// Provenance fingerprint over the σ field and λ.
    pub fn hash(&self) -> u64 {
        fnv1a64_f64(0xcbf2_9ce4_8422_2325, &self.values) ^ fnv1a64_f64(17, &[self.lambda])
    }

    /// Returns a copy with `delta` added on `cells` (band re-checked).
    pub fn perturbed(&self, p: &DomainPartition, cells: &CellSet, delta: f64) -> Result<Self> {
        let mut values = self.values.clone();
        for c in cells.iter() {
            if !p.omega().contains(c) {
                return Err(CoreError::InvalidGeometry(format!(
                    "perturbation cell {c} lies outside omega"
                )));
            }
            values[c] += delta;
        }
        check_band(&values, p, self.lambda)?;
        Ok(Conductivity {
            values,
            lambda: self.lambda,
        })
    }

    /// Builds a conductivity from raw per-cell values (band-checked).
    pub fn from_values(p: &DomainPartition, values: Vec<f64>, lambda: f64) -> Result<Self> {
        if values.len() != p.grid().num_cells() {
            return Err(CoreError::InvalidParameter(format!(
                "value vector length {} does not match cell count {}",
                values.len(),
                p.grid().num_cells()
            )));
        }
        check_lambda(lambda)?;
        for c in p.exterior().iter() {
            if values[c] != 1.0 {
                return Err(CoreError::EllipticityViolation(format!(
                    "sigma must equal 1 on exterior cell {c}, got {}",
                    values[c]
                )));
            }
        }
        check_band(&values, p, lambda)?;
        Ok(Conductivity { values, lambda })
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda < 1.0 {
        Ok(())
    } else {
        Err(CoreError::InvalidParameter(format!(
            "lambda must lie in (0,1), got {lambda}"
        )))
    }
}

fn check_band(values: &[f64], p: &DomainPartition, lambda: f64) -> Result<()> {
    for c in p.omega().iter() {
        let v = values[c];
        if !(v >= lambda && v <= 1.0 / lambda) {
            return Err(CoreError::EllipticityViolation(format!(
                "ellipticity violated at cell {c}: sigma = {v} outside [{lambda}, {}]",
                1.0 / lambda
            )));
        }
    }
    Ok(())
}

/// σ = `background` on Ω, overridden by `(subset, value)` inclusions, σ = 1
/// on the exterior.
pub fn make_conductivity(
    p: &DomainPartition,
    background: f64,
    inclusions: &[(CellSet, f64)],
    lambda: f64,
) -> Result<Conductivity> {
    check_lambda(lambda)?;
    let band = |v: f64, what: &str| -> Result<()> {
        if v >= lambda && v <= 1.0 / lambda {
            Ok(())
        } else {
            Err(CoreError::EllipticityViolation(format!(
                "ellipticity violated: {what} value {v} outside [{lambda}, {}]",
                1.0 / lambda
            )))
        }
    };
    band(background, "background")?;
    let mut values = vec![1.0; p.grid().num_cells()];
    for c in p.omega().iter() {
        values[c] = background;
    }
    for (k, (subset, v)) in inclusions.iter().enumerate() {
        if !subset.is_subset_of(p.omega()) {
            let bad = subset.iter().find(|c| !p.omega().contains(*c)).unwrap();
            return Err(CoreError::InvalidGeometry(format!(
                "inclusion {k} leaves omega at cell {bad}"
            )));
        }
        band(*v, &format!("inclusion {k}"))?;
        for c in subset.iter() {
            values[c] = *v;
        }
    }
    Conductivity::from_values(p, values, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_1d_64() -> GridSpec {
        GridSpec::new(1, 64, 1.0).unwrap()
    }

    fn geometry_1d() -> Geometry {
        Geometry {
            omega: Some(ShapeBox::interval(-0.5, 0.5)),
            window: vec![ShapeBox::interval(0.7, 0.9)],
            ..Default::default()
        }
    }

    #[test]
    fn partition_1d_disjoint_with_gap() {
        let p = build_partition(&grid_1d_64(), &geometry_1d()).unwrap();
        assert!(!p.omega().intersects(p.window()));
        assert!(p.window().is_subset_of(p.exterior()));
        let mut min_gap = usize::MAX;
        for w in p.window().iter() {
            for o in p.omega().iter() {
                min_gap = min_gap.min(p.grid().grid_distance(w, o));
            }
        }
        assert!(min_gap >= 2, "gap {min_gap}");
        // determinism
        let p2 = build_partition(&grid_1d_64(), &geometry_1d()).unwrap();
        assert_eq!(p.omega(), p2.omega());
        assert_eq!(p.window(), p2.window());
    }

    #[test]
    fn overlapping_window_rejected() {
        let g = Geometry {
            omega: Some(ShapeBox::interval(-0.5, 0.5)),
            window: vec![ShapeBox::interval(0.4, 0.9)],
            ..Default::default()
        };
        let err = build_partition(&grid_1d_64(), &g).unwrap_err();
        assert!(err.to_string().contains("window intersects domain closure"));
    }

    #[test]
    fn partition_2d_counts_match_brute_force() {
        let grid = GridSpec::new(2, 16, 1.0).unwrap();
        let g = Geometry {
            omega: Some(ShapeBox::rect([-0.5, -0.5], [0.5, 0.5])),
            window: vec![ShapeBox::rect([0.75, -0.25], [0.95, 0.25])],
            ..Default::default()
        };
        let p = build_partition(&grid, &g).unwrap();
        // brute-force mask enumeration as the oracle
        let mut omega_count = 0usize;
        for c in 0..grid.num_cells() {
            let q = grid.cell_center(c);
            if q[0] >= -0.5 && q[0] <= 0.5 && q[1] >= -0.5 && q[1] <= 0.5 {
                omega_count += 1;
                assert!(p.omega().contains(c));
            }
        }
        assert_eq!(omega_count, 64);
        assert_eq!(p.omega().len(), 64);
        assert_eq!(p.exterior().len(), 192);
    }

    #[test]
    fn partition_covers_all_cells_exactly() {
        let p = build_partition(&grid_1d_64(), &geometry_1d()).unwrap();
        let n = p.grid().num_cells();
        assert_eq!(p.omega().len() + p.exterior().len(), n);
        assert!(!p.omega().intersects(p.exterior()));
        for c in 0..n {
            assert!(p.omega().contains(c) ^ p.exterior().contains(c));
        }
    }

    #[test]
    fn empty_sets_rejected() {
        let g = Geometry {
            omega: Some(ShapeBox::interval(-0.5, 0.5)),
            window: Vec::new(),
            ..Default::default()
        };
        assert!(build_partition(&grid_1d_64(), &g).is_err());
    }

    #[test]
    fn conductivity_identity_and_inclusions() {
        let p = build_partition(&grid_1d_64(), &geometry_1d()).unwrap();
        let sigma = make_conductivity(&p, 1.0, &[], 0.4).unwrap();
        assert!(sigma.values().iter().all(|&v| v == 1.0));

        let central: Vec<usize> = p
            .omega()
            .iter()
            .filter(|&c| {
                let x = p.grid().cell_center(c)[0];
                x.abs() < p.grid().spacing()
            })
            .collect();
        assert_eq!(central.len(), 2);
        let inc = CellSet::new(central.clone());
        let sigma = make_conductivity(&p, 1.0, &[(inc, 2.0)], 0.4).unwrap();
        for c in 0..p.grid().num_cells() {
            let expect = if central.contains(&c) { 2.0 } else { 1.0 };
            assert_eq!(sigma.value(c), expect);
        }
    }

    #[test]
    fn zero_value_rejected() {
        let p = build_partition(&grid_1d_64(), &geometry_1d()).unwrap();
        let err = make_conductivity(&p, 0.0, &[], 0.4).unwrap_err();
        assert!(err.to_string().contains("ellipticity violated"));
    }

    #[test]
    fn band_enforced_pointwise() {
        let p = build_partition(&grid_1d_64(), &geometry_1d()).unwrap();
        let lambda = 0.4;
        let sigma = make_conductivity(&p, 1.3, &[], lambda).unwrap();
        for c in p.omega().iter() {
            assert!(sigma.value(c) >= lambda && sigma.value(c) <= 1.0 / lambda);
        }
        for c in p.exterior().iter() {
            assert_eq!(sigma.value(c), 1.0);
        }
    }

    #[test]
    fn grid_invariants() {
        assert!(GridSpec::new(3, 16, 1.0).is_err());
        assert!(GridSpec::new(1, 4, 1.0).is_err());
        assert!(GridSpec::new(1, 16, 0.0).is_err());
        assert!(FracOrder::new(0.0).is_err());
        assert!(FracOrder::new(1.0).is_err());
        assert!(FracOrder::new(0.5).is_ok());
    }
}
