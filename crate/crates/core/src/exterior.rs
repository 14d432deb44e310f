//! Discrete exterior-value problem and the Dirichlet-to-Neumann map on W.
//!
//! With A = V diag(μ^s) Vᵀ the dense fractional operator, the exterior
//! problem (L^s u = 0 in Ω, u = f in Ω_e) reduces to
//!     u_Ω = −A_ΩΩ⁻¹ A_ΩE f_E,
//! and the DN map restricted to window cells is the Schur complement
//!     Λ = A_WW − A_WΩ A_ΩΩ⁻¹ A_ΩW.
//! Column assembly through `solve_exterior` provides the independent second
//! route; the two agree to solver tolerance.

use nalgebra::Cholesky;
use rayon::prelude::*;

use crate::domain::{CellSet, DomainPartition, FracOrder};
use crate::error::{CoreError, Result};
use crate::linalg::{spectral_norm_sym, v_diag_vt, v_diag_vt_block, Matrix, Vector};
use crate::spectral::SpectralOperator;

/// Dense symmetric A = V diag(μ^s) Vᵀ with partition-aware block views.
pub struct FractionalMatrix {
    matrix: Matrix,
    order: FracOrder,
    grid_hash: u64,
    sigma_hash: u64,
}

impl FractionalMatrix {
    pub fn new(op: &SpectralOperator, s: FracOrder) -> Result<Self> {
        let d = Vector::from_iterator(
            op.dimension(),
            op.eigenvalues().iter().map(|&mu| mu.powf(s.value())),
        );
        let matrix = v_diag_vt(op.eigenvectors(), &d);
        let out = FractionalMatrix {
            matrix,
            order: s,
            grid_hash: op.grid_hash(),
            sigma_hash: op.sigma_hash(),
        };
        // symmetry is exact by mirrored assembly; positive definiteness of
        // the omega block is inherited from mu > 0 and checked on first use
        debug_assert!(out.symmetry_defect() <= 1e-10 * out.matrix.abs().max());
        Ok(out)
    }

    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn order(&self) -> FracOrder {
        self.order
    }

    pub fn grid_hash(&self) -> u64 {
        self.grid_hash
    }

    pub fn sigma_hash(&self) -> u64 {
        self.sigma_hash
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.matrix.nrows() {
            for j in (i + 1)..self.matrix.ncols() {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn block(&self, rows: &CellSet, cols: &CellSet) -> Matrix {
        let mut out = Matrix::zeros(rows.len(), cols.len());
        for (i, r) in rows.iter().enumerate() {
            for (j, c) in cols.iter().enumerate() {
                out[(i, j)] = self.matrix[(r, c)];
            }
        }
        out
    }

    pub fn apply(&self, v: &Vector) -> Vector {
        &self.matrix * v
    }
}

/// Symmetric DN matrix over window cells, with grid/σ provenance.
#[derive(Debug, Clone)]
pub struct DNMatrix {
    entries: Matrix,
    window: CellSet,
    order: f64,
    grid_hash: u64,
    sigma_hash: u64,
}

impl DNMatrix {
    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn window(&self) -> &CellSet {
        &self.window
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn grid_hash(&self) -> u64 {
        self.grid_hash
    }

    pub fn sigma_hash(&self) -> u64 {
        self.sigma_hash
    }

    pub fn dimension(&self) -> usize {
        self.entries.nrows()
    }

    pub fn symmetry_defect_rel(&self) -> f64 {
        let scale = self.entries.abs().max();
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0_f64;
        for i in 0..self.dimension() {
            for j in (i + 1)..self.dimension() {
                worst = worst.max((self.entries[(i, j)] - self.entries[(j, i)]).abs());
            }
        }
        worst / scale
    }

    /// Same window/provenance with replaced entries (noise injection).
    pub fn with_entries(&self, entries: Matrix) -> DNMatrix {
        DNMatrix {
            entries,
            window: self.window.clone(),
            order: self.order,
            grid_hash: self.grid_hash,
            sigma_hash: self.sigma_hash,
        }
    }

    /// Spectral norm of the symmetrized difference Λ − other.
    pub fn gap_to(&self, other: &DNMatrix) -> Result<f64> {
        check_compatible(self, other)?;
        let diff = &self.entries - &other.entries;
        let sym = (&diff + diff.transpose()) * 0.5;
        Ok(spectral_norm_sym(&sym))
    }
}

pub(crate) fn check_compatible(a: &DNMatrix, b: &DNMatrix) -> Result<()> {
    if a.grid_hash != b.grid_hash {
        return Err(CoreError::ProvenanceMismatch(
            "DN matrices come from different grids".into(),
        ));
    }
    if a.window != b.window {
        return Err(CoreError::ProvenanceMismatch(
            "DN matrices come from different windows".into(),
        ));
    }
    if a.order.to_bits() != b.order.to_bits() {
        return Err(CoreError::ProvenanceMismatch(
            "DN matrices have different fractional orders".into(),
        ));
    }
    Ok(())
}

fn omega_cholesky(
    a: &FractionalMatrix,
    p: &DomainPartition,
) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let a_oo = a.block(p.omega(), p.omega());
    a_oo.cholesky()
        .ok_or_else(|| CoreError::LinearSolver("A_omega_omega is not positive definite".into()))
}

/// Solves the exterior problem for data `f` (full-length, supported on
/// exterior cells). Returns u on all cells with u = f on the exterior.
pub fn solve_exterior(a: &FractionalMatrix, p: &DomainPartition, f: &Vector) -> Result<Vector> {
    let n = a.dimension();
    if f.len() != n {
        return Err(CoreError::InvalidParameter(format!(
            "data length {} does not match grid size {n}",
            f.len()
        )));
    }
    for c in p.omega().iter() {
        if f[c] != 0.0 {
            return Err(CoreError::InvalidParameter(format!(
                "exterior data must vanish on omega (cell {c})"
            )));
        }
    }
    let chol = omega_cholesky(a, p)?;
    let a_oe = a.block(p.omega(), p.exterior());
    let f_e = Vector::from_iterator(p.exterior().len(), p.exterior().iter().map(|c| f[c]));
    let rhs = -(&a_oe * &f_e);
    let u_o = chol.solve(&rhs);
    let mut u = f.clone();
    for (i, c) in p.omega().iter().enumerate() {
        u[c] = u_o[i];
    }
    // residual check of the interior rows
    let au = a.apply(&u);
    let resid: f64 = p.omega().iter().map(|c| au[c] * au[c]).sum::<f64>().sqrt();
    let scale = a.matrix.norm() * f.norm();
    if resid > 1e-8 * scale.max(f64::MIN_POSITIVE) {
        return Err(CoreError::LinearSolver(format!(
            "exterior solve residual {resid:.3e} exceeds 1e-8 * |A||f| = {:.3e}",
            1e-8 * scale
        )));
    }
    Ok(u)
}

/// DN matrix by Schur complement Λ = A_WW − A_WΩ A_ΩΩ⁻¹ A_ΩW.
pub fn assemble_dn(a: &FractionalMatrix, p: &DomainPartition) -> Result<DNMatrix> {
    if p.window().is_empty() {
        return Err(CoreError::InvalidGeometry("window is empty".into()));
    }
    let chol = omega_cholesky(a, p)?;
    let a_ww = a.block(p.window(), p.window());
    let a_ow = a.block(p.omega(), p.window());
    let x = chol.solve(&a_ow);
    let schur = &a_ww - a_ow.transpose() * x;
    // Schur complement of a symmetric matrix is symmetric; round-off from
    // the triangular solves is mirrored away
    let entries = (&schur + schur.transpose()) * 0.5;
    Ok(DNMatrix {
        entries,
        window: p.window().clone(),
        order: a.order.value(),
        grid_hash: a.grid_hash,
        sigma_hash: a.sigma_hash,
    })
}

/// DN matrix straight from the spectral data without materializing the full
/// fractional matrix: only the Ω∪W rows of V enter the Schur complement.
/// Same result as [`assemble_dn`]; used by per-pixel sweeps where the
/// eigendecomposition dominates and the full A would double the cost.
pub fn assemble_dn_blocks(
    op: &SpectralOperator,
    s: FracOrder,
    p: &DomainPartition,
) -> Result<DNMatrix> {
    if p.window().is_empty() {
        return Err(CoreError::InvalidGeometry("window is empty".into()));
    }
    let d = Vector::from_iterator(
        op.dimension(),
        op.eigenvalues().iter().map(|&mu| mu.powf(s.value())),
    );
    let v = op.eigenvectors();
    let omega = p.omega().as_slice();
    let window = p.window().as_slice();
    let a_oo = v_diag_vt_block(v, &d, omega, omega);
    let a_ow = v_diag_vt_block(v, &d, omega, window);
    let a_ww = v_diag_vt_block(v, &d, window, window);
    let chol = a_oo
        .cholesky()
        .ok_or_else(|| CoreError::LinearSolver("A_omega_omega is not positive definite".into()))?;
    let x = chol.solve(&a_ow);
    let schur = &a_ww - a_ow.transpose() * x;
    let entries = (&schur + schur.transpose()) * 0.5;
    Ok(DNMatrix {
        entries,
        window: p.window().clone(),
        order: s.value(),
        grid_hash: op.grid_hash(),
        sigma_hash: op.sigma_hash(),
    })
}

/// DN matrix by column assembly: column j is (A u^{e_j})|_W with u^{e_j}
/// the exterior solution for the j-th window basis vector. Columns solve
/// independently (parallel); mutual oracle for [`assemble_dn`].
pub fn assemble_dn_columns(a: &FractionalMatrix, p: &DomainPartition) -> Result<DNMatrix> {
    if p.window().is_empty() {
        return Err(CoreError::InvalidGeometry("window is empty".into()));
    }
    let w = p.window().len();
    let n = a.dimension();
    let cols: Vec<Result<Vector>> = p
        .window()
        .as_slice()
        .par_iter()
        .map(|&wc| {
            let mut f = Vector::zeros(n);
            f[wc] = 1.0;
            let u = solve_exterior(a, p, &f)?;
            let au = a.apply(&u);
            Ok(Vector::from_iterator(w, p.window().iter().map(|c| au[c])))
        })
        .collect();
    let mut entries = Matrix::zeros(w, w);
    for (j, col) in cols.into_iter().enumerate() {
        entries.set_column(j, &col?);
    }
    let entries = (&entries + entries.transpose()) * 0.5;
    Ok(DNMatrix {
        entries,
        window: p.window().clone(),
        order: a.order.value(),
        grid_hash: a.grid_hash,
        sigma_hash: a.sigma_hash,
    })
}

/// Duality pairing ⟨Λf, g⟩ realized as fᵀ Λ g · vol over window cells.
pub fn dn_pairing(dn: &DNMatrix, f: &Vector, g: &Vector, cell_volume: f64) -> f64 {
    (f.transpose() * dn.entries() * g)[(0, 0)] * cell_volume
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_partition, make_conductivity, Geometry, GridSpec, ShapeBox};
    use crate::spectral::{assemble_operator, spectral_decompose};

    fn setup_1d(cells: usize) -> (DomainPartition, FractionalMatrix) {
        let grid = GridSpec::new(1, cells, 1.0).unwrap();
        let g = Geometry {
            omega: Some(ShapeBox::interval(-0.5, 0.5)),
            window: vec![ShapeBox::interval(0.7, 0.9)],
            ..Default::default()
        };
        let p = build_partition(&grid, &g).unwrap();
        let sigma = make_conductivity(&p, 1.0, &[], 0.4).unwrap();
        let op = spectral_decompose(&assemble_operator(&p, &sigma).unwrap()).unwrap();
        let a = FractionalMatrix::new(&op, FracOrder::new(0.5).unwrap()).unwrap();
        (p, a)
    }

    #[test]
    fn zero_data_zero_solution() {
        let (p, a) = setup_1d(16);
        let f = Vector::zeros(16);
        let u = solve_exterior(&a, &p, &f).unwrap();
        assert_eq!(u.norm(), 0.0);
    }

    #[test]
    fn linearity_of_solve() {
        let (p, a) = setup_1d(16);
        let mut f = Vector::zeros(16);
        for c in p.window().iter() {
            f[c] = 1.0 + c as f64;
        }
        let u1 = solve_exterior(&a, &p, &f).unwrap();
        let u2 = solve_exterior(&a, &p, &(&f * 2.0)).unwrap();
        assert!((&u2 - &u1 * 2.0).norm() <= 1e-10 * u1.norm());
    }

    #[test]
    fn indicator_data_positive_interior() {
        // discrete maximum-principle behavior on an 8-cell grid
        let (p, a) = setup_1d(8);
        let wc = p.window().iter().next().unwrap();
        let mut f = Vector::zeros(8);
        f[wc] = 1.0;
        let u = solve_exterior(&a, &p, &f).unwrap();
        for c in p.omega().iter() {
            assert!(u[c] > 0.0, "u[{c}] = {}", u[c]);
        }
    }

    #[test]
    fn data_on_omega_rejected() {
        let (p, a) = setup_1d(16);
        let oc = p.omega().iter().next().unwrap();
        let mut f = Vector::zeros(16);
        f[oc] = 1.0;
        assert!(solve_exterior(&a, &p, &f).is_err());
    }

    #[test]
    fn schur_vs_column_assembly() {
        let (p, a) = setup_1d(8);
        let dn_schur = assemble_dn(&a, &p).unwrap();
        let dn_cols = assemble_dn_columns(&a, &p).unwrap();
        let scale = dn_schur.entries().abs().max();
        let diff = (dn_schur.entries() - dn_cols.entries()).abs().max();
        assert!(diff <= 1e-10 * scale, "diff {diff:.3e} scale {scale:.3e}");
    }

    #[test]
    fn dn_symmetry_random_sigma() {
        let grid = GridSpec::new(1, 32, 1.0).unwrap();
        let g = Geometry {
            omega: Some(ShapeBox::interval(-0.5, 0.5)),
            window: vec![ShapeBox::interval(0.7, 0.9)],
            ..Default::default()
        };
        let p = build_partition(&grid, &g).unwrap();
        let inc = CellSet::new(p.omega().iter().skip(3).take(5).collect());
        let sigma = make_conductivity(&p, 1.2, &[(inc, 1.9)], 0.4).unwrap();
        let op = spectral_decompose(&assemble_operator(&p, &sigma).unwrap()).unwrap();
        let a = FractionalMatrix::new(&op, FracOrder::new(0.5).unwrap()).unwrap();
        let dn = assemble_dn(&a, &p).unwrap();
        assert!(dn.symmetry_defect_rel() <= 1e-10);
    }

    #[test]
    fn identical_sigma_identical_dn() {
        let (p, a) = setup_1d(16);
        let d1 = assemble_dn(&a, &p).unwrap();
        let d2 = assemble_dn(&a, &p).unwrap();
        assert_eq!((d1.entries() - d2.entries()).abs().max(), 0.0);
        assert!((d1.gap_to(&d2).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn pairing_symmetric_and_positive() {
        let (p, a) = setup_1d(16);
        let dn = assemble_dn(&a, &p).unwrap();
        let w = p.window().len();
        let vol = p.grid().cell_volume();
        let f = Vector::from_fn(w, |i, _| 1.0 + (i as f64).sin());
        let g = Vector::from_fn(w, |i, _| (i as f64 * 0.7).cos());
        let fg = dn_pairing(&dn, &f, &g, vol);
        let gf = dn_pairing(&dn, &g, &f, vol);
        assert!((fg - gf).abs() <= 1e-12 * fg.abs().max(1e-30));
        assert_eq!(dn_pairing(&dn, &Vector::zeros(w), &g, vol), 0.0);
        // single-cell indicator pairing > 0: Schur complement of an SPD
        // matrix is positive definite
        let mut e0 = Vector::zeros(w);
        e0[0] = 1.0;
        assert!(dn_pairing(&dn, &e0, &e0, vol) > 0.0);
    }

    #[test]
    fn dn_continuity_under_sigma_perturbation() {
        let grid = GridSpec::new(1, 32, 1.0).unwrap();
        let g = Geometry {
            omega: Some(ShapeBox::interval(-0.5, 0.5)),
            window: vec![ShapeBox::interval(0.7, 0.9)],
            ..Default::default()
        };
        let p = build_partition(&grid, &g).unwrap();
        let sigma = make_conductivity(&p, 1.0, &[], 0.4).unwrap();
        let cell = p.omega().iter().nth(8).unwrap();
        let bumped = sigma
            .perturbed(&p, &CellSet::new(vec![cell]), 1e-6)
            .unwrap();
        let s = FracOrder::new(0.5).unwrap();
        let mk = |sig: &crate::domain::Conductivity| {
            let op = spectral_decompose(&assemble_operator(&p, sig).unwrap()).unwrap();
            assemble_dn(&FractionalMatrix::new(&op, s).unwrap(), &p).unwrap()
        };
        let d0 = mk(&sigma);
        let d1 = mk(&bumped);
        let change = (d0.entries() - d1.entries()).abs().max();
        assert!(change <= 1e-4, "change {change:.3e}");
    }
}
