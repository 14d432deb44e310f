//! Constructive Runge approximation and localized potentials.
//!
//! The pieces: the weighted cutoff β_k(y) = γ_b(y − k) with plateau value
//! b = b_{k,s} chosen so ∫ y^{1−2s} β_k dy = 1; piecewise σ-harmonic
//! targets v (constant on D, nonconstant harmonic on B); extension-energy
//! Gram matrices over the window basis; localized-potential sequences from
//! the regularized generalized eigenproblem G_B f = μ (G_D + εI) f; and the
//! least-squares residual of fitting v(x)β_1(y) by spans of extension
//! solutions in the weighted H¹_x norm over (B∪D) × (0, Y).
//!
//! The base bump γ_b is a mollified trapezoid built from the quintic
//! smoothstep: rise on [0,1], plateau b on [1, 1/(1−b)], fall of width 1.
//! Its derivatives are bounded uniformly in b, and
//! ∫ γ_b dy = b/(1−b) holds exactly by the smoothstep's symmetry.

use rayon::prelude::*;

use crate::domain::{CellSet, Conductivity, DomainPartition, FracOrder};
use crate::error::{CoreError, Result};
use crate::extension::{energy_bilinear, solve_extension, ExtensionField, YMesh};
use crate::linalg::{symmetric_eigen_sorted, Matrix, Vector};
use crate::spectral::assemble_stencil;
use crate::util::{adaptive_simpson, fnv1a64_f64};

// quintic smoothstep: C² at both ends, S(0)=0, S(1)=1, ∫S = 1/2
fn smoothstep(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        x * x * x * (10.0 + x * (-15.0 + 6.0 * x))
    }
}

fn smoothstep_d1(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        30.0 * x * x * (x - 1.0) * (x - 1.0)
    }
}

fn smoothstep_d2(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        60.0 * x * (2.0 * x - 1.0) * (x - 1.0)
    }
}

/// Cutoff β_k(y) = γ_{b_{k,s}}(y − k), normalized in the y^{1−2s} weight.
#[derive(Debug, Clone)]
pub struct BetaProfile {
    k: usize,
    order: FracOrder,
    plateau: f64,
}

impl BetaProfile {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn order(&self) -> FracOrder {
        self.order
    }

    /// Plateau value b_{k,s} ∈ (0, 1).
    pub fn plateau_value(&self) -> f64 {
        self.plateau
    }

    /// Right edge of the plateau, R_{k,s} = k + 1/(1 − b).
    pub fn plateau_end(&self) -> f64 {
        self.k as f64 + 1.0 / (1.0 - self.plateau)
    }

    /// Support is contained in (k, R_{k,s} + 1).
    pub fn support_end(&self) -> f64 {
        self.plateau_end() + 1.0
    }

    pub fn eval(&self, y: f64) -> f64 {
        gamma_bump(self.plateau, y - self.k as f64)
    }

    /// ℓ-th derivative, ℓ ∈ {0, 1, 2}.
    pub fn deriv(&self, y: f64, ell: usize) -> f64 {
        let b = self.plateau;
        let t = y - self.k as f64;
        let r0 = 1.0 / (1.0 - b);
        match ell {
            0 => gamma_bump(b, t),
            1 => {
                if t > 0.0 && t < 1.0 {
                    b * smoothstep_d1(t)
                } else if t > r0 && t < r0 + 1.0 {
                    -b * smoothstep_d1(r0 + 1.0 - t)
                } else {
                    0.0
                }
            }
            2 => {
                if t > 0.0 && t < 1.0 {
                    b * smoothstep_d2(t)
                } else if t > r0 && t < r0 + 1.0 {
                    b * smoothstep_d2(r0 + 1.0 - t)
                } else {
                    0.0
                }
            }
            _ => panic!("derivative order {ell} not supported"),
        }
    }
}

fn gamma_bump(b: f64, t: f64) -> f64 {
    let r0 = 1.0 / (1.0 - b);
    if t <= 0.0 || t >= r0 + 1.0 {
        0.0
    } else if t < 1.0 {
        b * smoothstep(t)
    } else if t <= r0 {
        b
    } else {
        b * smoothstep(r0 + 1.0 - t)
    }
}

/// ∫_0^∞ y^{1−2s} γ_b(y − k) dy: exact on the plateau, adaptive Simpson on
/// the rise and fall.
pub fn weighted_integral(b: f64, k: usize, s: FracOrder) -> f64 {
    let sv = s.value();
    let e = 2.0 - 2.0 * sv;
    let kf = k as f64;
    let r0 = 1.0 / (1.0 - b);
    let w = |y: f64| y.powf(1.0 - 2.0 * sv);
    let rise = adaptive_simpson(&|y: f64| w(y) * b * smoothstep(y - kf), kf, kf + 1.0, 1e-13);
    let plateau = b * ((kf + r0).powf(e) - (kf + 1.0).powf(e)) / e;
    let fall = adaptive_simpson(
        &|y: f64| w(y) * b * smoothstep(kf + r0 + 1.0 - y),
        kf + r0,
        kf + r0 + 1.0,
        1e-13,
    );
    rise + plateau + fall
}

/// Solves ∫ y^{1−2s} β_k dy = 1 for the plateau value by bisection; the
/// integral is strictly increasing in b and sweeps (0, ∞).
pub fn beta_profile(k: usize, s: FracOrder) -> Result<BetaProfile> {
    if k < 1 {
        return Err(CoreError::InvalidParameter(format!(
            "beta index k must be >= 1, got {k}"
        )));
    }
    let mut lo = 1e-9;
    let mut hi = 1.0 - 1e-9;
    let f_lo = weighted_integral(lo, k, s) - 1.0;
    let f_hi = weighted_integral(hi, k, s) - 1.0;
    if !(f_lo < 0.0 && f_hi > 0.0) {
        return Err(CoreError::RootSolve(format!(
            "normalization does not bracket 1: I(b->0+) = {:.3e}, I(b->1-) = {:.3e}",
            f_lo + 1.0,
            f_hi + 1.0
        )));
    }
    let mut mid = 0.5;
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let f = weighted_integral(mid, k, s) - 1.0;
        if f.abs() <= 1e-11 {
            break;
        }
        if f < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let residual = (weighted_integral(mid, k, s) - 1.0).abs();
    if residual > 1e-10 {
        return Err(CoreError::RootSolve(format!(
            "bisection for b_{{k,s}} stalled at |I - 1| = {residual:.3e}"
        )));
    }
    Ok(BetaProfile {
        k,
        order: s,
        plateau: mid,
    })
}

/// Piecewise σ-harmonic target: v ≡ 1 on D, discrete σ-harmonic on B with
/// affine boundary values (nonconstant), 0 elsewhere. Returned full-length.
pub fn harmonic_target(p: &DomainPartition, sigma: &Conductivity) -> Result<Vector> {
    let b_set = p
        .b_set()
        .ok_or_else(|| CoreError::InvalidGeometry("harmonic target requires a B set".into()))?;
    let d_set = p
        .d_set()
        .ok_or_else(|| CoreError::InvalidGeometry("harmonic target requires a D set".into()))?;
    let grid = p.grid();
    for b in b_set.iter() {
        for d in d_set.iter() {
            if grid.grid_distance(b, d) < 2 {
                return Err(CoreError::InvalidGeometry(
                    "B and D must be separated by at least one cell".into(),
                ));
            }
        }
    }
    // stencil-interior cells of B: all face neighbors exist and lie in B
    let interior: Vec<usize> = b_set
        .iter()
        .filter(|&c| {
            grid.neighbors(c).iter().take(grid.n_dims()).all(|pair| {
                pair.iter()
                    .all(|nb| nb.map_or(false, |x| b_set.contains(x)))
            })
        })
        .collect();
    if interior.is_empty() {
        return Err(CoreError::InvalidGeometry(
            "degenerate B: no stencil-interior cells to impose the harmonic equation on".into(),
        ));
    }
    let interior_set = CellSet::new(interior.clone());
    let boundary_value = |c: usize| -> f64 {
        let x = grid.cell_center(c);
        x[0] + if grid.n_dims() == 2 { 0.5 * x[1] } else { 0.0 }
    };

    let (row_ptr, cols, vals) = assemble_stencil(
        grid.n_dims(),
        grid.cells_per_axis(),
        grid.spacing(),
        sigma.values(),
    );
    let ni = interior.len();
    let mut a = Matrix::zeros(ni, ni);
    let mut rhs = Vector::zeros(ni);
    for (r, &i) in interior.iter().enumerate() {
        for k in row_ptr[i]..row_ptr[i + 1] {
            let c = cols[k];
            match interior_set.local_index(c) {
                Some(lc) => a[(r, lc)] += vals[k],
                None => rhs[r] -= vals[k] * boundary_value(c),
            }
        }
    }
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| CoreError::LinearSolver("harmonic target solve failed".into()))?;

    let mut v = Vector::zeros(grid.num_cells());
    for c in d_set.iter() {
        v[c] = 1.0;
    }
    for c in b_set.iter() {
        v[c] = if let Some(l) = interior_set.local_index(c) {
            sol[l]
        } else {
            boundary_value(c)
        };
    }
    // residual of the sigma-harmonic equation on the interior of B
    let scale = v.abs().max().max(1.0);
    for &i in &interior {
        let mut lv = 0.0;
        for k in row_ptr[i]..row_ptr[i + 1] {
            lv += vals[k] * v[cols[k]];
        }
        if lv.abs()
            > 1e-10
                * scale
                * vals[row_ptr[i]..row_ptr[i + 1]]
                    .iter()
                    .fold(0.0_f64, |m, x| m.max(x.abs()))
        {
            return Err(CoreError::LinearSolver(format!(
                "harmonic residual {lv:.3e} at cell {i} exceeds tolerance"
            )));
        }
    }
    // gradient must not vanish identically on B
    let mut max_grad = 0.0_f64;
    for c in b_set.iter() {
        let nb = grid.neighbors(c);
        for axis in 0..grid.n_dims() {
            if let Some(x) = nb[axis][1] {
                if b_set.contains(x) {
                    max_grad = max_grad.max((v[x] - v[c]).abs() / grid.spacing());
                }
            }
        }
    }
    if max_grad == 0.0 {
        return Err(CoreError::InvalidGeometry(
            "harmonic target has vanishing gradient on B".into(),
        ));
    }
    Ok(v)
}

/// Quadratic form of the extension x-gradient energy over a region, in the
/// window basis: fᵀ G f · (vol factors inside) equals the energy of the
/// extension of f.
pub struct EnergyGram {
    matrix: Matrix,
    region_hash: u64,
    sigma_hash: u64,
    mesh_hash: u64,
    grid_hash: u64,
}

impl EnergyGram {
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn region_hash(&self) -> u64 {
        self.region_hash
    }

    pub fn quadratic(&self, f: &Vector) -> f64 {
        (f.transpose() * &self.matrix * f)[(0, 0)]
    }
}

fn mesh_hash(mesh: &YMesh) -> u64 {
    let mut h = fnv1a64_f64(31, mesh.nodes());
    h ^= fnv1a64_f64(7, &[mesh.order().value()]);
    h
}

/// Assembles the Gram matrix G_kl = ⟨∇ũ^{e_k}, ∇ũ^{e_l}⟩_{region, y^{1−2s}}
/// over window basis excitations (unit density). PSD by construction and
/// checked.
pub fn energy_gram(
    sigma: &Conductivity,
    p: &DomainPartition,
    mesh: &YMesh,
    region: &CellSet,
) -> Result<EnergyGram> {
    if !region.is_subset_of(p.omega()) {
        return Err(CoreError::InvalidGeometry(
            "gram region must lie inside omega".into(),
        ));
    }
    let w = p.window().len();
    let n = p.grid().num_cells();
    let fields: Vec<ExtensionField> = p
        .window()
        .as_slice()
        .par_iter()
        .map(|&wc| {
            let mut f = Vector::zeros(n);
            f[wc] = 1.0;
            solve_extension(sigma, p, mesh, &f)
        })
        .collect::<Result<Vec<_>>>()?;
    let rho = vec![1.0; n];
    let mut g = Matrix::zeros(w, w);
    for k in 0..w {
        for l in k..w {
            let v = energy_bilinear(&fields[k], &fields[l], mesh, p, region, &rho);
            g[(k, l)] = v;
            g[(l, k)] = v;
        }
    }
    let (eigs, _) = symmetric_eigen_sorted(g.clone());
    let gnorm = eigs[w - 1].abs().max(eigs[0].abs());
    if eigs[0] < -1e-10 * gnorm {
        return Err(CoreError::Eigensolver(format!(
            "energy gram not PSD: min eigenvalue {:.3e}",
            eigs[0]
        )));
    }
    let mut region_hash = 17_u64;
    for c in region.iter() {
        region_hash = region_hash.wrapping_mul(0x100000001b3) ^ c as u64;
    }
    Ok(EnergyGram {
        matrix: g,
        region_hash,
        sigma_hash: sigma.hash(),
        mesh_hash: mesh_hash(mesh),
        grid_hash: p.grid().hash(),
    })
}

/// One step of a localized-potential sequence.
#[derive(Debug, Clone)]
pub struct LocalizedStep {
    pub datum: Vector,
    pub energy_b: f64,
    pub energy_d: f64,
    pub epsilon: f64,
}

/// Window data with control-set energy pinned to 1 and target-set energy
/// driven upward along the regularization path.
#[derive(Debug, Clone)]
pub struct LocalizedSequence {
    pub steps: Vec<LocalizedStep>,
    pub truncated: bool,
}

impl LocalizedSequence {
    pub fn final_ratio(&self) -> Option<f64> {
        self.steps.last().map(|s| {
            if s.energy_d > 0.0 {
                s.energy_b / s.energy_d
            } else {
                f64::INFINITY
            }
        })
    }
}

/// At each step i solves G_B f = μ (G_D + ε_i I) f for the top eigenpair,
/// ε_i = ε_0 · 10^{−i}, and rescales to fᵀ G_D f = 1 (or fᵀ G_B f = 1 when
/// the control energy degenerates to zero).
pub fn localized_sequence(
    g_b: &EnergyGram,
    g_d: &EnergyGram,
    steps: usize,
    eps0: f64,
) -> Result<LocalizedSequence> {
    if g_b.sigma_hash != g_d.sigma_hash
        || g_b.mesh_hash != g_d.mesh_hash
        || g_b.grid_hash != g_d.grid_hash
        || g_b.dimension() != g_d.dimension()
    {
        return Err(CoreError::ProvenanceMismatch(
            "energy grams come from different sigma/mesh/grid".into(),
        ));
    }
    if !(eps0 > 0.0) {
        return Err(CoreError::InvalidParameter(format!(
            "regularization scale must be positive, got {eps0}"
        )));
    }
    let w = g_b.dimension();
    let mut out = LocalizedSequence {
        steps: Vec::with_capacity(steps),
        truncated: false,
    };
    for i in 1..=steps {
        let eps = eps0 * 10.0_f64.powi(-(i as i32));
        let mut reg = g_d.matrix.clone();
        for j in 0..w {
            reg[(j, j)] += eps;
        }
        let chol = match reg.cholesky() {
            Some(c) => c,
            None => {
                out.truncated = true;
                return Ok(out);
            }
        };
        // L⁻¹ G_B L⁻ᵀ, then the top standard eigenpair
        let l = chol.l();
        let x = l
            .clone()
            .solve_lower_triangular(&g_b.matrix)
            .ok_or_else(|| {
                CoreError::LinearSolver("triangular solve failed in localized sequence".into())
            })?;
        let xt = x.transpose();
        let y = l.clone().solve_lower_triangular(&xt).ok_or_else(|| {
            CoreError::LinearSolver("triangular solve failed in localized sequence".into())
        })?;
        let sym = (&y + y.transpose()) * 0.5;
        let (eigs, vecs) = symmetric_eigen_sorted(sym);
        let top = Vector::from(vecs.column(w - 1));
        let _mu = eigs[w - 1];
        let f = l
            .transpose()
            .solve_upper_triangular(&top)
            .ok_or_else(|| CoreError::LinearSolver("back substitution failed".into()))?;
        let e_d_raw = g_d.quadratic(&f);
        let e_b_raw = g_b.quadratic(&f);
        let (datum, energy_b, energy_d) = if e_d_raw > 1e-14 * e_b_raw.max(f64::MIN_POSITIVE) {
            let c = 1.0 / e_d_raw.sqrt();
            (&f * c, e_b_raw / e_d_raw, 1.0)
        } else {
            let c = 1.0 / e_b_raw.max(f64::MIN_POSITIVE).sqrt();
            (&f * c, 1.0, 0.0)
        };
        out.steps.push(LocalizedStep {
            datum,
            energy_b,
            energy_d,
            epsilon: eps,
        });
    }
    Ok(out)
}

/// Residuals of the least-squares fit of the separable target v(x)β(y) by
/// the span of window-basis extension solutions, measured in the region
/// norm over (B∪D) × y-mesh; both the x-gradient-only norm (primary) and
/// the full-gradient norm are reported.
#[derive(Debug, Clone)]
pub struct RungeReport {
    pub basis_size: usize,
    pub residual_h1x: f64,
    pub relative_h1x: f64,
    pub target_norm_h1x: f64,
    pub residual_h1: f64,
    pub relative_h1: f64,
}

struct RegionNorm<'a> {
    p: &'a DomainPartition,
    mesh: &'a YMesh,
    region: &'a CellSet,
    faces: Vec<(usize, usize)>,
}

impl<'a> RegionNorm<'a> {
    fn new(p: &'a DomainPartition, mesh: &'a YMesh, region: &'a CellSet) -> Self {
        let grid = p.grid();
        let mut faces = Vec::new();
        for i in region.iter() {
            let nb = grid.neighbors(i);
            for axis in 0..grid.n_dims() {
                if let Some(j) = nb[axis][1] {
                    if region.contains(j) {
                        faces.push((i, j));
                    }
                }
            }
        }
        RegionNorm {
            p,
            mesh,
            region,
            faces,
        }
    }

    /// Feature embedding: the region norm Σ ω_j (w² + |∇_x w|² [+ |∂_y w|²])
    /// vol becomes the plain ℓ₂ norm of this vector (mid-layer values,
    /// face-based x-differences).
    fn features(&self, m: &Matrix, include_y: bool) -> Vector {
        let grid = self.p.grid();
        let h = grid.spacing();
        let vol = grid.cell_volume();
        let nodes = self.mesh.nodes();
        let mid = |i: usize, j: usize| 0.5 * (m[(i, j)] + m[(i, j + 1)]);
        let mut out = Vec::new();
        for (j, w) in self.mesh.weights().iter().enumerate() {
            let sw = (w * vol).sqrt();
            for i in self.region.iter() {
                out.push(sw * mid(i, j));
                if include_y {
                    let dy = nodes[j + 1] - nodes[j];
                    out.push(sw * (m[(i, j + 1)] - m[(i, j)]) / dy);
                }
            }
            for &(i, k) in &self.faces {
                out.push(sw * (mid(k, j) - mid(i, j)) / h);
            }
        }
        Vector::from_vec(out)
    }
}

/// Least-squares fit by incremental orthogonalization of the basis feature
/// vectors: the projection subspace grows with the basis, so the residual
/// is nonincreasing in `basis_size` by construction. Columns whose
/// orthogonal remainder falls below the rank cutoff (1e−12 at the
/// normal-equation scale, i.e. 1e−6 on feature norms) are skipped.
pub fn runge_residual(
    target: &Vector,
    beta: &BetaProfile,
    sigma: &Conductivity,
    p: &DomainPartition,
    mesh: &YMesh,
    basis_size: usize,
) -> Result<RungeReport> {
    let b_set = p
        .b_set()
        .ok_or_else(|| CoreError::InvalidGeometry("runge residual requires a B set".into()))?;
    let d_set = p
        .d_set()
        .ok_or_else(|| CoreError::InvalidGeometry("runge residual requires a D set".into()))?;
    if basis_size == 0 || basis_size > p.window().len() {
        return Err(CoreError::InvalidParameter(format!(
            "basis size {basis_size} must lie in 1..={}",
            p.window().len()
        )));
    }
    if mesh.height() < beta.support_end() {
        return Err(CoreError::InvalidParameter(format!(
            "y-mesh height {:.3} does not cover the cutoff support (0, {:.3})",
            mesh.height(),
            beta.support_end()
        )));
    }
    let region = b_set.union(d_set);
    let grid = p.grid();
    let n = grid.num_cells();
    let m = mesh.intervals();

    // separable target on the tensor mesh
    let mut t = Matrix::zeros(n, m + 1);
    for i in region.iter() {
        for (j, &y) in mesh.nodes().iter().enumerate() {
            t[(i, j)] = target[i] * beta.eval(y);
        }
    }

    let window: Vec<usize> = p.window().iter().take(basis_size).collect();
    let fields: Vec<ExtensionField> = window
        .par_iter()
        .map(|&wc| {
            let mut f = Vector::zeros(n);
            f[wc] = 1.0;
            solve_extension(sigma, p, mesh, &f)
        })
        .collect::<Result<Vec<_>>>()?;

    let norm = RegionNorm::new(p, mesh, &region);
    let fit_residual = |include_y: bool| -> (f64, f64) {
        let tf = norm.features(&t, include_y);
        let tnorm = tf.norm();
        let mut q: Vec<Vector> = Vec::new();
        let mut captured = 0.0_f64;
        for field in &fields {
            let mut col = norm.features(field.values(), include_y);
            let scale = col.norm();
            // two-pass modified Gram-Schmidt
            for _ in 0..2 {
                for qk in &q {
                    let proj = qk.dot(&col);
                    col -= qk * proj;
                }
            }
            if col.norm() > 1e-6 * scale.max(f64::MIN_POSITIVE) {
                let qn = &col / col.norm();
                let c = qn.dot(&tf);
                captured += c * c;
                q.push(qn);
            }
        }
        let resid = (tnorm * tnorm - captured).max(0.0).sqrt();
        (resid, tnorm)
    };

    let (residual_h1x, target_norm_h1x) = fit_residual(false);
    let (residual_h1, target_norm_h1) = fit_residual(true);
    Ok(RungeReport {
        basis_size,
        residual_h1x,
        relative_h1x: residual_h1x / target_norm_h1x.max(f64::MIN_POSITIVE),
        target_norm_h1x,
        residual_h1,
        relative_h1: residual_h1 / target_norm_h1.max(f64::MIN_POSITIVE),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::make_conductivity;
    use crate::extension::{build_ymesh, default_gamma, energy};
    use crate::scenarios::{
        random_window_datum, reference_1d_64, reference_runge_1d, REFERENCE_LAMBDA,
    };

    #[test]
    fn beta_half_order_closed_form() {
        // at s = 1/2 the weight is 1, so I = b/(1-b) and the root is exactly 1/2
        let s = FracOrder::new(0.5).unwrap();
        let beta = beta_profile(1, s).unwrap();
        assert!(
            (beta.plateau_value() - 0.5).abs() <= 1e-9,
            "b = {}",
            beta.plateau_value()
        );
        assert!((beta.plateau_end() - 3.0).abs() <= 1e-8);
    }

    #[test]
    fn beta_suite_invariants() {
        for &sv in &[0.25, 0.5, 0.75] {
            let s = FracOrder::new(sv).unwrap();
            for &k in &[1usize, 2, 4, 8] {
                let beta = beta_profile(k, s).unwrap();
                let b = beta.plateau_value();
                assert!(b > 0.0 && b < 1.0);
                // normalization
                let integral = weighted_integral(b, k, s);
                assert!(
                    (integral - 1.0).abs() <= 1e-8,
                    "k={k} s={sv}: I = {integral}"
                );
                // support and plateau, sampled
                let r = beta.plateau_end();
                for t in 0..200 {
                    let y = t as f64 * 0.1;
                    if y <= k as f64 || y >= r + 1.0 {
                        assert_eq!(beta.eval(y), 0.0, "k={k} s={sv} y={y}");
                    }
                }
                let mid = 0.5 * (k as f64 + 1.0 + r);
                if mid > k as f64 + 1.0 && mid < r {
                    assert_eq!(beta.eval(mid), b);
                }
                // derivative bounds, uniform in k
                let mut d = [0.0_f64; 3];
                for t in 0..2000 {
                    let y = k as f64 + t as f64 * (r + 1.0 - k as f64) / 2000.0;
                    for (ell, dv) in d.iter_mut().enumerate() {
                        *dv = dv.max(beta.deriv(y, ell).abs());
                    }
                }
                assert!(d[0] <= 1.0, "k={k} s={sv}: sup|beta| = {}", d[0]);
                assert!(d[1] <= 2.0, "k={k} s={sv}: sup|beta'| = {}", d[1]);
                assert!(d[2] <= 6.0, "k={k} s={sv}: sup|beta''| = {}", d[2]);
            }
        }
    }

    #[test]
    fn weighted_integral_monotone_in_b() {
        let s = FracOrder::new(0.25).unwrap();
        let mut last = 0.0;
        for i in 1..10 {
            let b = i as f64 / 10.0;
            let v = weighted_integral(b, 2, s);
            assert!(v > last, "I({b}) = {v} not above {last}");
            last = v;
        }
    }

    #[test]
    fn harmonic_target_linear_for_unit_sigma() {
        let p = reference_runge_1d().unwrap();
        let sigma = make_conductivity(&p, 1.0, &[], REFERENCE_LAMBDA).unwrap();
        let v = harmonic_target(&p, &sigma).unwrap();
        // constant 1 on D
        for c in p.d_set().unwrap().iter() {
            assert_eq!(v[c], 1.0);
        }
        // affine on B: second differences vanish
        let b: Vec<usize> = p.b_set().unwrap().iter().collect();
        for w in b.windows(3) {
            let dd = v[w[2]] - 2.0 * v[w[1]] + v[w[0]];
            assert!(dd.abs() <= 1e-10, "second difference {dd:.3e}");
        }
        let grad: f64 = v[b[1]] - v[b[0]];
        assert!(grad.abs() > 0.0);
    }

    #[test]
    fn harmonic_target_degenerate_b_rejected() {
        // the 2-cell B of the localized reference has no stencil interior
        let p = reference_1d_64().unwrap();
        let sigma = make_conductivity(&p, 1.0, &[], REFERENCE_LAMBDA).unwrap();
        assert!(harmonic_target(&p, &sigma).is_err());
    }

    #[test]
    fn gram_empty_region_and_consistency() {
        let p = reference_1d_64().unwrap();
        let s = FracOrder::new(0.5).unwrap();
        let sigma = make_conductivity(&p, 1.0, &[], REFERENCE_LAMBDA).unwrap();
        let mesh = build_ymesh(s, 32, 4.0, default_gamma(s)).unwrap();
        let empty = energy_gram(&sigma, &p, &mesh, &CellSet::empty()).unwrap();
        assert_eq!(empty.matrix().abs().max(), 0.0);

        let region = p.b_set().unwrap().clone();
        let g = energy_gram(&sigma, &p, &mesh, &region).unwrap();
        assert_eq!(g.quadratic(&Vector::zeros(p.window().len())), 0.0);
        // f^T G f against a direct energy evaluation
        for seed in 0..5u64 {
            let f = random_window_datum(&p, seed);
            let full = crate::extension::window_embed(&p, &f).unwrap();
            let field = solve_extension(&sigma, &p, &mesh, &full).unwrap();
            let rho = vec![1.0; p.grid().num_cells()];
            let direct = energy(&field, &mesh, &p, &region, &rho).value;
            let viagram = g.quadratic(&f);
            let rel = (direct - viagram).abs() / direct.abs().max(1e-300);
            assert!(rel <= 1e-8, "seed {seed}: rel {rel:.3e}");
        }
    }

    #[test]
    fn localized_identical_sets_ratio_one() {
        let p = reference_1d_64().unwrap();
        let s = FracOrder::new(0.5).unwrap();
        let sigma = make_conductivity(&p, 1.0, &[], REFERENCE_LAMBDA).unwrap();
        let mesh = build_ymesh(s, 32, 4.0, default_gamma(s)).unwrap();
        let region = p.b_set().unwrap().clone();
        let g = energy_gram(&sigma, &p, &mesh, &region).unwrap();
        let seq = localized_sequence(&g, &g, 3, 1e-2).unwrap();
        for step in &seq.steps {
            assert!((step.energy_d - 1.0).abs() <= 1e-8);
            assert!((step.energy_b / step.energy_d - 1.0).abs() <= 1e-8);
        }
    }

    #[test]
    fn generalized_rayleigh_monotone_in_epsilon() {
        let p = reference_1d_64().unwrap();
        let s = FracOrder::new(0.5).unwrap();
        let sigma = make_conductivity(&p, 1.0, &[], REFERENCE_LAMBDA).unwrap();
        let mesh = build_ymesh(s, 32, 4.0, default_gamma(s)).unwrap();
        let g_b = energy_gram(&sigma, &p, &mesh, p.b_set().unwrap()).unwrap();
        let g_d = energy_gram(&sigma, &p, &mesh, p.d_set().unwrap()).unwrap();
        let seq = localized_sequence(&g_b, &g_d, 5, 1e-1 * g_d.matrix()[(0, 0)].max(1e-8)).unwrap();
        assert!(!seq.truncated);
        // E_D normalized, E_B nondecreasing along the shrinking-epsilon path
        let mut last = 0.0;
        for step in &seq.steps {
            assert!((step.energy_d - 1.0).abs() <= 1e-8);
            assert!(step.energy_b >= last - 1e-9 * step.energy_b.abs());
            last = step.energy_b;
        }
    }

    #[test]
    fn runge_residual_monotone_and_zero_target() {
        let p = reference_runge_1d().unwrap();
        let s = FracOrder::new(0.5).unwrap();
        let sigma = make_conductivity(&p, 1.0, &[], REFERENCE_LAMBDA).unwrap();
        let mesh =
            build_ymesh(s, 48, crate::scenarios::RUNGE_MESH_HEIGHT, default_gamma(s)).unwrap();
        let beta = beta_profile(1, s).unwrap();
        let v = harmonic_target(&p, &sigma).unwrap();
        let mut last = f64::INFINITY;
        for m in 1..=p.window().len() {
            let rep = runge_residual(&v, &beta, &sigma, &p, &mesh, m).unwrap();
            assert!(
                rep.residual_h1x <= last + 1e-12 * last.abs(),
                "m={m}: {} after {last}",
                rep.residual_h1x
            );
            last = rep.residual_h1x;
        }
        let zero = Vector::zeros(p.grid().num_cells());
        let rep = runge_residual(&zero, &beta, &sigma, &p, &mesh, 3).unwrap();
        assert!(rep.residual_h1x.abs() <= 1e-12);
    }
}
