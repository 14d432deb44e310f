//! Weighted half-space extension: solve ∇·(y^{1−2s} σ̃ ∇ũ) = 0 on
//! box × (0, Y), extract the weighted Neumann trace, and evaluate the
//! gradient energies that drive the monotonicity inequalities.
//!
//! Discretization: finite volumes in y on a graded mesh y_j = Y (j/M)^γ,
//! the spatial stencil of `spectral::assemble_operator` per level. Two
//! exact per-interval integrals of the weight drive the scheme: the mass
//! integrals ω_j = ∫ y^{1−2s} dy (x-stiffness lumping and energy
//! evaluation) and the flux resistances 1/r_j = ∫ y^{2s−1} dy, i.e.
//! r_j = 2s/(y_{j+1}^{2s} − y_j^{2s}), which make the singular homogeneous
//! profile y^{2s} exact on the lattice — the first-layer trace formula
//! below is consistent only with these fluxes. Neither integral evaluates
//! the weight at y = 0. Boundary conditions: Dirichlet data f on
//! exterior × {y=0}, natural (weighted flux-free) rows on Ω × {y=0},
//! zero Dirichlet at y = Y and on the lateral box boundary.
//!
//! The weighted Neumann trace −lim y^{1−2s} ∂_y ũ = d_s (−∇·σ∇)^s u is
//! extracted from the first-layer y^{2s} asymptotics: with
//! ũ ≈ ũ(·,0) + a(x) y^{2s}, the trace is −2s·a, estimated as
//! −2s (ũ[·,1] − ũ[·,0]) / y_1^{2s}.

use crate::domain::{CellSet, Conductivity, DomainPartition, FracOrder};
use crate::error::{CoreError, Result};
use crate::linalg::{BandedSpd, Matrix, Vector};
use crate::spectral::assemble_stencil;
use crate::util::gamma;

/// Graded y-mesh with exact per-interval weight integrals.
#[derive(Debug, Clone)]
pub struct YMesh {
    order: FracOrder,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    gamma_exp: f64,
    height: f64,
}

impl YMesh {
    pub fn order(&self) -> FracOrder {
        self.order
    }

    /// Nodes y_0 = 0 < y_1 < … < y_M = Y.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// ω_j = ∫_{y_j}^{y_{j+1}} y^{1−2s} dy, j = 0 … M−1.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Exact interval flux coefficient r_j = 1 / ∫_{y_j}^{y_{j+1}} y^{2s−1} dy
    /// = 2s / (y_{j+1}^{2s} − y_j^{2s}); equals 1/Δy_j at s = 1/2.
    pub fn resistance(&self, j: usize) -> f64 {
        let ts = 2.0 * self.order.value();
        ts / (self.nodes[j + 1].powf(ts) - self.nodes[j].powf(ts))
    }

    pub fn intervals(&self) -> usize {
        self.weights.len()
    }

    pub fn gamma_exp(&self) -> f64 {
        self.gamma_exp
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    /// Lumped level weight: half of each adjacent interval.
    fn level_weight(&self, j: usize) -> f64 {
        let m = self.intervals();
        if j == 0 {
            0.5 * self.weights[0]
        } else if j < m {
            0.5 * (self.weights[j - 1] + self.weights[j])
        } else {
            0.5 * self.weights[m - 1]
        }
    }
}

/// Default grading exponent γ = 3/(2s), compensating the y^{2s} boundary
/// layer.
pub fn default_gamma(s: FracOrder) -> f64 {
    1.5 / s.value()
}

/// Default truncation height Y = 4R.
pub fn default_height(p: &DomainPartition) -> f64 {
    4.0 * p.grid().half_width()
}

pub fn build_ymesh(s: FracOrder, m: usize, height: f64, gamma_exp: f64) -> Result<YMesh> {
    if m < 16 {
        return Err(CoreError::InvalidParameter(format!(
            "y-mesh needs at least 16 intervals, got {m}"
        )));
    }
    if !(height > 0.0) {
        return Err(CoreError::InvalidParameter(format!(
            "y-mesh height must be positive, got {height}"
        )));
    }
    if !(gamma_exp >= 1.0) {
        return Err(CoreError::InvalidParameter(format!(
            "grading exponent must be >= 1, got {gamma_exp}"
        )));
    }
    let sv = s.value();
    let nodes: Vec<f64> = (0..=m)
        .map(|j| height * ((j as f64) / (m as f64)).powf(gamma_exp))
        .collect();
    let e = 2.0 - 2.0 * sv;
    let weights: Vec<f64> = (0..m)
        .map(|j| (nodes[j + 1].powf(e) - nodes[j].powf(e)) / e)
        .collect();
    for w in &weights {
        if !(*w > 0.0) {
            return Err(CoreError::InvalidParameter(
                "degenerate y-mesh interval (weight not positive)".into(),
            ));
        }
    }
    Ok(YMesh {
        order: s,
        nodes,
        weights,
        gamma_exp,
        height,
    })
}

/// d_s = Γ(1−s) / (2^{2s−1} Γ(s)); equals 1 at s = 1/2.
pub fn d_s_constant(s: FracOrder) -> f64 {
    let sv = s.value();
    gamma(1.0 - sv) / (2.0_f64.powf(2.0 * sv - 1.0) * gamma(sv))
}

/// Solution ũ(x_i, y_j) of the extension problem with its boundary datum.
pub struct ExtensionField {
    /// N × (M+1): column j holds the level-j values.
    values: Matrix,
    boundary: Vector,
    sigma_hash: u64,
}

impl ExtensionField {
    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn level(&self, j: usize) -> Vector {
        Vector::from(self.values.column(j))
    }

    pub fn boundary(&self) -> &Vector {
        &self.boundary
    }

    pub fn sigma_hash(&self) -> u64 {
        self.sigma_hash
    }
}

/// Region energy value with the cell count it was taken over.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub value: f64,
    pub cells: usize,
}

struct ExtensionSystem {
    matrix: BandedSpd,
    rhs: Vec<f64>,
    scale: Vec<f64>,
    n_cells: usize,
    levels: usize,
}

fn assemble_system(
    sigma: &Conductivity,
    p: &DomainPartition,
    mesh: &YMesh,
    f: &Vector,
) -> Result<ExtensionSystem> {
    let grid = p.grid();
    let n = grid.num_cells();
    if f.len() != n {
        return Err(CoreError::InvalidParameter(format!(
            "data length {} does not match grid size {n}",
            f.len()
        )));
    }
    for c in p.omega().iter() {
        if f[c] != 0.0 {
            return Err(CoreError::InvalidParameter(format!(
                "extension data must vanish on omega (cell {c})"
            )));
        }
    }
    let m = mesh.intervals();
    let vol = grid.cell_volume();
    let (row_ptr, cols, vals) = assemble_stencil(
        grid.n_dims(),
        grid.cells_per_axis(),
        grid.spacing(),
        sigma.values(),
    );

    let unknowns = n * m; // levels 0..M-1; level M is pinned to zero
    let mut a = BandedSpd::zeros(unknowns, n);
    let mut rhs = vec![0.0; unknowns];

    // lower-triangle assembly: x-stencil per level, exact-resistance
    // y-couplings between consecutive levels
    for j in 0..m {
        let w_level = mesh.level_weight(j) * vol;
        let base = j * n;
        for i in 0..n {
            let row = base + i;
            for k in row_ptr[i]..row_ptr[i + 1] {
                let c = cols[k];
                if c <= i {
                    a.add(row, base + c, w_level * vals[k]);
                }
            }
            // interval below (j-1) and above (j); level M excluded
            let mut diag_y = mesh.resistance(j);
            if j > 0 {
                let c = mesh.resistance(j - 1);
                diag_y += c;
                a.add(row, row - n, -c * vol);
            }
            a.add(row, row, diag_y * vol);
        }
    }

    // Dirichlet data on exterior cells at y = 0, by symmetric elimination
    let pinned: Vec<(usize, f64)> = p.exterior().iter().map(|c| (c, f[c])).collect();
    let is_pinned = |dof: usize| dof < n && p.exterior().contains(dof);
    for &(cell, value) in &pinned {
        let d = cell; // level 0 => dof index == cell index
                      // couplings to higher rows (stored as (r, d))
        let top = (d + n).min(unknowns - 1);
        for r in (d + 1)..=top {
            let c = a.get(r, d);
            if c != 0.0 {
                if !is_pinned(r) {
                    rhs[r] -= c * value;
                }
                a.set(r, d, 0.0);
            }
        }
        // couplings to lower rows (stored as (d, c))
        for c in d.saturating_sub(n)..d {
            let v = a.get(d, c);
            if v != 0.0 {
                if !is_pinned(c) {
                    rhs[c] -= v * value;
                }
                a.set(d, c, 0.0);
            }
        }
        let diag = a.get(d, d);
        rhs[d] = diag * value;
    }

    // symmetric Jacobi scaling tames the condition spread of the graded
    // weights before factorization
    let mut scale = vec![1.0; unknowns];
    for (i, s_i) in scale.iter_mut().enumerate() {
        let d = a.get(i, i);
        if !(d > 0.0) {
            return Err(CoreError::LinearSolver(format!(
                "nonpositive diagonal {d:.3e} at dof {i}"
            )));
        }
        *s_i = 1.0 / d.sqrt();
    }
    let mut scaled = BandedSpd::zeros(unknowns, n);
    for jx in 0..unknowns {
        let top = (jx + n).min(unknowns - 1);
        for ix in jx..=top {
            let v = a.get(ix, jx);
            if v != 0.0 {
                scaled.set(ix, jx, v * scale[ix] * scale[jx]);
            }
        }
    }
    let rhs_scaled: Vec<f64> = rhs.iter().zip(&scale).map(|(b, s)| b * s).collect();
    Ok(ExtensionSystem {
        matrix: scaled,
        rhs: rhs_scaled,
        scale,
        n_cells: n,
        levels: m,
    })
}

/// Solves the extension problem for exterior datum `f` (full-length vector,
/// zero on Ω).
pub fn solve_extension(
    sigma: &Conductivity,
    p: &DomainPartition,
    mesh: &YMesh,
    f: &Vector,
) -> Result<ExtensionField> {
    let sys = assemble_system(sigma, p, mesh, f)?;
    let n = sys.n_cells;
    let m = sys.levels;
    let unknowns = n * m;

    let chol = {
        // keep an unfactored copy for the residual check and one refinement
        // pass
        let mut copy = BandedSpd::zeros(unknowns, n);
        for j in 0..unknowns {
            let top = (j + n).min(unknowns - 1);
            for i in j..=top {
                let v = sys.matrix.get(i, j);
                if v != 0.0 {
                    copy.set(i, j, v);
                }
            }
        }
        copy.cholesky().map_err(|e| {
            CoreError::LinearSolver(format!(
                "extension solve breakdown ({e}); diagonal scaling spread {:.3e}",
                sys.scale.iter().cloned().fold(0.0_f64, f64::max)
                    / sys.scale.iter().cloned().fold(f64::INFINITY, f64::min)
            ))
        })?
    };
    let mut x = sys.rhs.clone();
    chol.solve(&mut x);

    // one iterative-refinement pass, then the residual gate
    let mut ax = vec![0.0; unknowns];
    sys.matrix.apply(&x, &mut ax);
    let mut r: Vec<f64> = sys.rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let rnorm = |v: &[f64]| v.iter().map(|t| t * t).sum::<f64>().sqrt();
    let bnorm = rnorm(&sys.rhs).max(f64::MIN_POSITIVE);
    if rnorm(&r) > 1e-12 * bnorm {
        let mut dx = r.clone();
        chol.solve(&mut dx);
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
        sys.matrix.apply(&x, &mut ax);
        r = sys.rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    }
    let rel = rnorm(&r) / bnorm;
    if rel > 1e-8 && bnorm > f64::MIN_POSITIVE {
        return Err(CoreError::LinearSolver(format!(
            "extension residual {rel:.3e} exceeds 1e-8 after refinement"
        )));
    }

    let mut values = Matrix::zeros(n, m + 1);
    for j in 0..m {
        for i in 0..n {
            values[(i, j)] = x[j * n + i] * sys.scale[j * n + i];
        }
    }
    // level M: zero Dirichlet (already zeros)
    Ok(ExtensionField {
        values,
        boundary: f.clone(),
        sigma_hash: sigma.hash(),
    })
}

/// Weighted Neumann trace on all cells: −2s (ũ[·,1] − ũ[·,0]) / y_1^{2s}.
pub fn neumann_trace(field: &ExtensionField, mesh: &YMesh) -> Vector {
    let s = mesh.order().value();
    let y1 = mesh.nodes()[1];
    let f = y1.powf(2.0 * s);
    let n = field.values.nrows();
    Vector::from_fn(n, |i, _| {
        -2.0 * s * (field.values[(i, 1)] - field.values[(i, 0)]) / f
    })
}

/// Mid-layer x-gradient magnitude squared at cell `i`, level pair (j, j+1).
/// Central differences per axis; values outside the box count as zero
/// (lateral Dirichlet closure).
fn grad_sq_mid(field: &ExtensionField, p: &DomainPartition, i: usize, j: usize) -> f64 {
    grad_dot_mid(field, field, p, i, j)
}

fn mid(field: &ExtensionField, i: usize, j: usize) -> f64 {
    0.5 * (field.values[(i, j)] + field.values[(i, j + 1)])
}

fn grad_dot_mid(
    fa: &ExtensionField,
    fb: &ExtensionField,
    p: &DomainPartition,
    i: usize,
    j: usize,
) -> f64 {
    let grid = p.grid();
    let h = grid.spacing();
    let nb = grid.neighbors(i);
    let mut acc = 0.0;
    for axis in 0..grid.n_dims() {
        let da = (nb[axis][1].map_or(0.0, |c| mid(fa, c, j))
            - nb[axis][0].map_or(0.0, |c| mid(fa, c, j)))
            / (2.0 * h);
        let db = (nb[axis][1].map_or(0.0, |c| mid(fb, c, j))
            - nb[axis][0].map_or(0.0, |c| mid(fb, c, j)))
            / (2.0 * h);
        acc += da * db;
    }
    acc
}

/// Weighted x-gradient energy Σ_{cells ∈ region} Σ_j ω_j ρ(x) |∇_x ũ|² vol,
/// mid-layer gradients by central differences.
pub fn energy(
    field: &ExtensionField,
    mesh: &YMesh,
    p: &DomainPartition,
    region: &CellSet,
    rho: &[f64],
) -> EnergyReport {
    let vol = p.grid().cell_volume();
    let mut acc = 0.0;
    for i in region.iter() {
        let mut cell_acc = 0.0;
        for (j, w) in mesh.weights().iter().enumerate() {
            cell_acc += w * grad_sq_mid(field, p, i, j);
        }
        acc += rho[i] * cell_acc;
    }
    EnergyReport {
        value: acc * vol,
        cells: region.len(),
    }
}

/// Polarized variant of [`energy`] for Gram assembly: Σ ω_j ρ ∇ũ·∇ṽ vol.
pub fn energy_bilinear(
    fa: &ExtensionField,
    fb: &ExtensionField,
    mesh: &YMesh,
    p: &DomainPartition,
    region: &CellSet,
    rho: &[f64],
) -> f64 {
    let vol = p.grid().cell_volume();
    let mut acc = 0.0;
    for i in region.iter() {
        let mut cell_acc = 0.0;
        for (j, w) in mesh.weights().iter().enumerate() {
            cell_acc += w * grad_dot_mid(fa, fb, p, i, j);
        }
        acc += rho[i] * cell_acc;
    }
    acc * vol
}

/// Full weighted Dirichlet energy of the discrete field, assembly-consistent:
/// Σ_j w_j σ-form(level j) + Σ_j r_j Σ_i (ũ_{i,j+1} − ũ_{i,j})² vol, with
/// r_j the exact interval resistances (the discrete ∫ y^{1−2s}|∂_yũ|²).
pub fn full_energy(
    field: &ExtensionField,
    mesh: &YMesh,
    sigma: &Conductivity,
    p: &DomainPartition,
) -> f64 {
    let grid = p.grid();
    let n = grid.num_cells();
    let vol = grid.cell_volume();
    let (row_ptr, cols, vals) = assemble_stencil(
        grid.n_dims(),
        grid.cells_per_axis(),
        grid.spacing(),
        sigma.values(),
    );
    let m = mesh.intervals();
    let mut acc = 0.0;
    // x-part: u_jᵀ L u_j per level with lumped weights (the stencil already
    // carries the lateral Dirichlet closure)
    for j in 0..=m {
        let w = mesh.level_weight(j) * vol;
        if w == 0.0 {
            continue;
        }
        let mut quad = 0.0;
        for i in 0..n {
            let ui = field.values[(i, j)];
            if ui == 0.0 {
                continue;
            }
            let mut lu = 0.0;
            for k in row_ptr[i]..row_ptr[i + 1] {
                lu += vals[k] * field.values[(cols[k], j)];
            }
            quad += ui * lu;
        }
        acc += w * quad;
    }
    // y-part
    for j in 0..m {
        let c = mesh.resistance(j) * vol;
        for i in 0..n {
            let d = field.values[(i, j + 1)] - field.values[(i, j)];
            acc += c * d * d;
        }
    }
    acc
}

/// Both sides of the energy identity B_σ̃(ũ^f, ũ^f) = d_s ⟨Λ_σ f, f⟩ for a
/// window datum, with their relative gap.
#[derive(Debug, Clone, Copy)]
pub struct EnergyIdentityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

/// Computes the extension-energy side and the DN-pairing side of the
/// identity independently (extension discretization vs spectral route).
pub fn energy_identity_check(
    sigma: &Conductivity,
    p: &DomainPartition,
    mesh: &YMesh,
    f_window: &Vector,
) -> Result<EnergyIdentityReport> {
    let s = mesh.order();
    let full = window_embed(p, f_window)?;
    let field = solve_extension(sigma, p, mesh, &full)?;
    let lhs = full_energy(&field, mesh, sigma, p);

    let op = crate::spectral::spectral_decompose(&crate::spectral::assemble_operator(p, sigma)?)?;
    let a = crate::exterior::FractionalMatrix::new(&op, s)?;
    let dn = crate::exterior::assemble_dn(&a, p)?;
    let rhs = d_s_constant(s)
        * crate::exterior::dn_pairing(&dn, f_window, f_window, p.grid().cell_volume());
    let denom = lhs.abs().max(rhs.abs());
    let gap = if denom == 0.0 {
        0.0
    } else {
        (lhs - rhs).abs() / denom
    };
    Ok(EnergyIdentityReport { lhs, rhs, gap })
}

/// Embeds a window-length coefficient vector into a full-length cell vector.
pub fn window_embed(p: &DomainPartition, f_window: &Vector) -> Result<Vector> {
    if f_window.len() != p.window().len() {
        return Err(CoreError::InvalidParameter(format!(
            "window data length {} does not match window size {}",
            f_window.len(),
            p.window().len()
        )));
    }
    let mut full = Vector::zeros(p.grid().num_cells());
    for (k, c) in p.window().iter().enumerate() {
        full[c] = f_window[k];
    }
    Ok(full)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_partition, make_conductivity, Geometry, GridSpec, ShapeBox};
    use crate::exterior::{assemble_dn, dn_pairing, solve_exterior, FractionalMatrix};
    use crate::spectral::{assemble_operator, spectral_decompose};

    fn setup_1d(cells: usize) -> (DomainPartition, Conductivity) {
        let grid = GridSpec::new(1, cells, 1.0).unwrap();
        let g = Geometry {
            omega: Some(ShapeBox::interval(-0.5, 0.5)),
            window: vec![ShapeBox::interval(0.7, 0.9)],
            ..Default::default()
        };
        let p = build_partition(&grid, &g).unwrap();
        let sigma = make_conductivity(&p, 1.0, &[], 0.4).unwrap();
        (p, sigma)
    }

    fn smooth_window_datum(p: &DomainPartition) -> Vector {
        let w = p.window().len();
        Vector::from_fn(w, |k, _| {
            let t = (k as f64 + 0.5) / w as f64;
            (std::f64::consts::PI * t).sin()
        })
    }

    #[test]
    fn ymesh_uniform_at_half() {
        let s = FracOrder::new(0.5).unwrap();
        let mesh = build_ymesh(s, 16, 2.0, 1.0).unwrap();
        for j in 0..16 {
            let dy = mesh.nodes()[j + 1] - mesh.nodes()[j];
            assert!((mesh.weights()[j] - dy).abs() < 1e-14);
        }
    }

    #[test]
    fn ymesh_weight_sum_telescopes() {
        let s = FracOrder::new(0.25).unwrap();
        let mesh = build_ymesh(s, 64, 4.0, 6.0).unwrap();
        let total: f64 = mesh.weights().iter().sum();
        let exact = 4.0_f64.powf(1.5) / 1.5;
        assert!((total - exact).abs() <= 1e-12 * exact);
    }

    #[test]
    fn ymesh_first_node_formula() {
        let s = FracOrder::new(0.75).unwrap();
        let mesh = build_ymesh(s, 32, 2.0, 2.0).unwrap();
        assert_eq!(mesh.nodes()[1], 2.0 * (1.0 / 32.0_f64).powi(2));
        assert_eq!(mesh.nodes()[1], 0.001953125);
    }

    #[test]
    fn ymesh_validation() {
        let s = FracOrder::new(0.5).unwrap();
        assert!(build_ymesh(s, 8, 2.0, 1.0).is_err());
        assert!(build_ymesh(s, 16, -1.0, 1.0).is_err());
        assert!(build_ymesh(s, 16, 2.0, 0.5).is_err());
    }

    #[test]
    fn d_s_values() {
        assert!((d_s_constant(FracOrder::new(0.5).unwrap()) - 1.0).abs() < 1e-14);
        // gamma-function oracle: Γ(3/4) / (2^{-1/2} Γ(1/4))
        let oracle = gamma(0.75) / (2.0_f64.powf(-0.5) * gamma(0.25));
        let d = d_s_constant(FracOrder::new(0.25).unwrap());
        assert!((d - oracle).abs() < 1e-14);
        assert!((d - 0.47799).abs() < 1e-5, "d = {d}");
        for k in 1..10 {
            let s = FracOrder::new(k as f64 / 10.0).unwrap();
            assert!(d_s_constant(s) > 0.0);
        }
    }

    #[test]
    fn zero_datum_zero_field() {
        let (p, sigma) = setup_1d(16);
        let s = FracOrder::new(0.5).unwrap();
        let mesh = build_ymesh(s, 16, default_height(&p), default_gamma(s)).unwrap();
        let f = Vector::zeros(16);
        let field = solve_extension(&sigma, &p, &mesh, &f).unwrap();
        assert_eq!(field.values().abs().max(), 0.0);
        assert_eq!(neumann_trace(&field, &mesh).norm(), 0.0);
    }

    #[test]
    fn linearity_of_extension() {
        let (p, sigma) = setup_1d(16);
        let s = FracOrder::new(0.5).unwrap();
        let mesh = build_ymesh(s, 24, default_height(&p), default_gamma(s)).unwrap();
        let f = window_embed(&p, &smooth_window_datum(&p)).unwrap();
        let g = {
            let mut g = Vector::zeros(16);
            for c in p.exterior().iter() {
                g[c] = (c as f64 * 0.3).cos();
            }
            g
        };
        let uf = solve_extension(&sigma, &p, &mesh, &f).unwrap();
        let ug = solve_extension(&sigma, &p, &mesh, &g).unwrap();
        let ufg = solve_extension(&sigma, &p, &mesh, &(&f + &g)).unwrap();
        let lhs = uf.values() + ug.values();
        let rel = (ufg.values() - &lhs).norm() / lhs.norm();
        assert!(rel <= 1e-9, "rel {rel:.3e}");
    }

    #[test]
    fn weighted_maximum_principle_smoke() {
        let (p, sigma) = setup_1d(16);
        let s = FracOrder::new(0.5).unwrap();
        let mesh = build_ymesh(s, 32, default_height(&p), default_gamma(s)).unwrap();
        let mut f = Vector::zeros(16);
        for c in p.window().iter() {
            f[c] = 1.0;
        }
        let field = solve_extension(&sigma, &p, &mesh, &f).unwrap();
        let min = field.values().min();
        assert!(min >= -1e-10, "min {min:.3e}");
    }

    #[test]
    fn dirichlet_row_carries_datum() {
        let (p, sigma) = setup_1d(16);
        let s = FracOrder::new(0.5).unwrap();
        let mesh = build_ymesh(s, 16, default_height(&p), default_gamma(s)).unwrap();
        let f = window_embed(&p, &smooth_window_datum(&p)).unwrap();
        let field = solve_extension(&sigma, &p, &mesh, &f).unwrap();
        for c in p.exterior().iter() {
            assert!((field.values()[(c, 0)] - f[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn bottom_trace_matches_exterior_solve() {
        // the extension's y=0 trace restricted to omega approximates the
        // exterior solve of the spectral route
        let (p, sigma) = setup_1d(8);
        let s = FracOrder::new(0.5).unwrap();
        let mesh = build_ymesh(s, 32, default_height(&p), default_gamma(s)).unwrap();
        let f = window_embed(&p, &smooth_window_datum(&p)).unwrap();
        let field = solve_extension(&sigma, &p, &mesh, &f).unwrap();
        let op = spectral_decompose(&assemble_operator(&p, &sigma).unwrap()).unwrap();
        let a = FractionalMatrix::new(&op, s).unwrap();
        let u = solve_exterior(&a, &p, &f).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for c in p.omega().iter() {
            num += (field.values()[(c, 0)] - u[c]).powi(2);
            den += u[c] * u[c];
        }
        let rel = (num / den).sqrt();
        assert!(rel <= 0.05, "trace mismatch {rel:.4}");
    }

    #[test]
    fn trace_vanishes_on_omega() {
        let (p, sigma) = setup_1d(16);
        let s = FracOrder::new(0.5).unwrap();
        let mesh = build_ymesh(s, 64, default_height(&p), default_gamma(s)).unwrap();
        let f = window_embed(&p, &smooth_window_datum(&p)).unwrap();
        let field = solve_extension(&sigma, &p, &mesh, &f).unwrap();
        let trace = neumann_trace(&field, &mesh);
        let scale = trace.abs().max();
        for c in p.omega().iter() {
            assert!(
                trace[c].abs() <= 0.05 * scale,
                "trace[{c}] = {:.3e}",
                trace[c]
            );
        }
    }

    #[test]
    fn trace_consistency_with_spectral_route() {
        let (p, sigma) = setup_1d(16);
        let s = FracOrder::new(0.5).unwrap();
        let mesh = build_ymesh(s, 256, default_height(&p), default_gamma(s)).unwrap();
        let f = window_embed(&p, &smooth_window_datum(&p)).unwrap();
        let field = solve_extension(&sigma, &p, &mesh, &f).unwrap();
        let trace = neumann_trace(&field, &mesh);
        let ds = d_s_constant(s);
        let op = spectral_decompose(&assemble_operator(&p, &sigma).unwrap()).unwrap();
        let a = FractionalMatrix::new(&op, s).unwrap();
        let u = solve_exterior(&a, &p, &f).unwrap();
        let au = a.apply(&u);
        let mut num = 0.0;
        let mut den = 0.0;
        for c in p.window().iter() {
            num += (trace[c] / ds - au[c]).powi(2);
            den += au[c] * au[c];
        }
        let rel = (num / den).sqrt();
        assert!(rel <= 0.05, "window trace mismatch {rel:.4}");
    }

    #[test]
    fn energy_zero_cases_and_additivity() {
        let (p, sigma) = setup_1d(16);
        let s = FracOrder::new(0.5).unwrap();
        let mesh = build_ymesh(s, 24, default_height(&p), default_gamma(s)).unwrap();
        let f = window_embed(&p, &smooth_window_datum(&p)).unwrap();
        let field = solve_extension(&sigma, &p, &mesh, &f).unwrap();
        let zeros = vec![0.0; 16];
        let ones = vec![1.0; 16];
        assert_eq!(energy(&field, &mesh, &p, p.omega(), &zeros).value, 0.0);

        let cells: Vec<usize> = p.omega().iter().collect();
        let a = CellSet::new(cells[..3].to_vec());
        let b = CellSet::new(cells[3..].to_vec());
        let ea = energy(&field, &mesh, &p, &a, &ones).value;
        let eb = energy(&field, &mesh, &p, &b, &ones).value;
        let eab = energy(&field, &mesh, &p, p.omega(), &ones).value;
        assert_eq!(ea + eb, eab);
        assert!(eab >= 0.0);
    }

    #[test]
    fn energy_identity_zero_and_reference_gap() {
        let (p, sigma) = setup_1d(16);
        let s = FracOrder::new(0.5).unwrap();
        let mesh = build_ymesh(s, 96, default_height(&p), default_gamma(s)).unwrap();
        let zero = Vector::zeros(p.window().len());
        let rep = energy_identity_check(&sigma, &p, &mesh, &zero).unwrap();
        assert_eq!(rep.lhs, 0.0);
        assert_eq!(rep.rhs, 0.0);
        assert_eq!(rep.gap, 0.0);

        let f = smooth_window_datum(&p);
        let rep = energy_identity_check(&sigma, &p, &mesh, &f).unwrap();
        assert!(rep.gap <= 0.10, "gap {:.4}", rep.gap);
        assert!(rep.lhs > 0.0 && rep.rhs > 0.0);
    }

    #[test]
    fn gram_pairing_consistency() {
        // f^T G f-style check at the bilinear-energy level: the polarized
        // evaluator reproduces the quadratic one
        let (p, sigma) = setup_1d(16);
        let s = FracOrder::new(0.5).unwrap();
        let mesh = build_ymesh(s, 24, default_height(&p), default_gamma(s)).unwrap();
        let f = window_embed(&p, &smooth_window_datum(&p)).unwrap();
        let field = solve_extension(&sigma, &p, &mesh, &f).unwrap();
        let ones = vec![1.0; 16];
        let quad = energy(&field, &mesh, &p, p.omega(), &ones).value;
        let bil = energy_bilinear(&field, &field, &mesh, &p, p.omega(), &ones);
        assert!((quad - bil).abs() <= 1e-12 * quad.abs().max(1e-30));
    }

    #[test]
    fn dn_pairing_side_positive() {
        let (p, sigma) = setup_1d(16);
        let s = FracOrder::new(0.5).unwrap();
        let op = spectral_decompose(&assemble_operator(&p, &sigma).unwrap()).unwrap();
        let a = FractionalMatrix::new(&op, s).unwrap();
        let dn = assemble_dn(&a, &p).unwrap();
        let f = smooth_window_datum(&p);
        assert!(dn_pairing(&dn, &f, &f, p.grid().cell_volume()) > 0.0);
    }
}
