//! Named reference configurations shared by the test batteries and the CLI,
//! and seeded generators for random ordered conductivity pairs.
//!
//! All randomness is ChaCha8-seeded and platform-stable: identical seeds
//! produce identical fields.

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;

use crate::domain::{
    build_partition, CellSet, Conductivity, DomainPartition, Geometry, GridSpec, ShapeBox,
};
use crate::error::Result;
use crate::linalg::Vector;
use crate::util::uniform_f64;

/// Ellipticity constant used by the reference batteries; the random bands
/// [1, 2] sit strictly inside [λ, 1/λ].
pub const REFERENCE_LAMBDA: f64 = 0.4;

/// 1D, 64 cells on [−1, 1] (h = 1/32): Ω = [−0.5, 0.5] (32 cells),
/// W = [0.7, 0.9] (7 cells). B and D are the two Ω cells nearest to and
/// farthest from the window; used by the operator-consistency, localized-
/// potential, and Runge batteries.
pub fn reference_1d_64() -> Result<DomainPartition> {
    let grid = GridSpec::new(1, 64, 1.0)?;
    let geometry = Geometry {
        omega: Some(ShapeBox::interval(-0.5, 0.5)),
        window: vec![ShapeBox::interval(0.7, 0.9)],
        ..Default::default()
    };
    let p = build_partition(&grid, &geometry)?;
    let omega: Vec<usize> = p.omega().iter().collect();
    let b = CellSet::new(omega[omega.len() - 2..].to_vec());
    let d = CellSet::new(omega[..2].to_vec());
    p.with_subsets(Some(b), Some(d), None)
}

/// 1D, 32 cells on [−1, 1] (h = 1/16): Ω = [−0.5, 0.5] (16 cells),
/// W = [0.7, 0.9] (3 cells). The monotonicity-battery and uniqueness grid.
pub fn reference_1d_32() -> Result<DomainPartition> {
    let grid = GridSpec::new(1, 32, 1.0)?;
    let geometry = Geometry {
        omega: Some(ShapeBox::interval(-0.5, 0.5)),
        window: vec![ShapeBox::interval(0.7, 0.9)],
        ..Default::default()
    };
    build_partition(&grid, &geometry)
}

/// 2D, 24×24 cells on [−0.75, 0.75]² (h = 1/16): Ω = [−0.5, 0.5]²
/// (16×16 cells), W a four-box ring of 2×12 blocks around Ω (96 cells).
/// The reconstruction grid: the surrounding window keeps every Ω pixel
/// visible above the noiseless decision tolerance (a one-sided window
/// leaves far pixels below the round-off floor), and the margin (4 cells
/// per side) keeps per-pixel eigendecompositions inside the desk-scale
/// runtime budget; the monotone decision logic itself is box-independent.
pub fn reference_2d() -> Result<DomainPartition> {
    let grid = GridSpec::new(2, 24, 0.75)?;
    let geometry = Geometry {
        omega: Some(ShapeBox::rect([-0.5, -0.5], [0.5, 0.5])),
        window: vec![
            ShapeBox::rect([0.56, -0.4], [0.69, 0.4]),
            ShapeBox::rect([-0.69, -0.4], [-0.56, 0.4]),
            ShapeBox::rect([-0.4, 0.56], [0.4, 0.69]),
            ShapeBox::rect([-0.4, -0.69], [0.4, -0.56]),
        ],
        ..Default::default()
    };
    build_partition(&grid, &geometry)
}

/// The Runge-approximation configuration: 1D, 128 cells on [−8, 8]
/// (h = 1/8), Ω = [−2, 2], a two-box window on both sides of Ω, a wide
/// B = [−2, 0.5] (affine target) and D = [1.25, 2] (constant target).
/// Scales are commensurate with the cutoff support (1, ~4); the σ-harmonic
/// target needs stencil-interior B cells, so B is wide.
pub fn reference_runge_1d() -> Result<DomainPartition> {
    let grid = GridSpec::new(1, 128, 8.0)?;
    let geometry = Geometry {
        omega: Some(ShapeBox::interval(-2.0, 2.0)),
        window: vec![ShapeBox::interval(-3.5, -2.5), ShapeBox::interval(2.5, 3.5)],
        ..Default::default()
    };
    let p = build_partition(&grid, &geometry)?;
    let b = ShapeBox::interval(-2.0, 0.5).rasterize(&grid);
    let d = ShapeBox::interval(1.25, 2.0).rasterize(&grid);
    p.with_subsets(Some(b), Some(d), None)
}

/// Mesh height for the Runge battery: covers the k = 1 cutoff support with
/// margin.
pub const RUNGE_MESH_HEIGHT: f64 = 6.0;

/// A 3×3 inclusion inside the 2D reference Ω, offset from center.
pub fn reference_2d_inclusion(p: &DomainPartition) -> CellSet {
    let grid = p.grid();
    let shape = ShapeBox::rect([-0.25, -0.06], [-0.07, 0.10]);
    let cells = shape.rasterize(grid);
    debug_assert_eq!(cells.len(), 9);
    cells
}

/// Deterministic smooth window datum (half-sine profile over the window).
pub fn smooth_window_datum(p: &DomainPartition) -> Vector {
    let w = p.window().len();
    Vector::from_fn(w, |k, _| {
        let t = (k as f64 + 0.5) / w as f64;
        (std::f64::consts::PI * t).sin()
    })
}

/// Seeded random window datum with entries in [−1, 1].
pub fn random_window_datum(p: &DomainPartition, seed: u64) -> Vector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Vector::from_fn(p.window().len(), |_, _| 2.0 * uniform_f64(&mut rng) - 1.0)
}

fn bump_field(p: &DomainPartition, rng: &mut ChaCha8Rng, max_amplitude: f64) -> Vec<f64> {
    let grid = p.grid();
    let n = grid.num_cells();
    let omega: Vec<usize> = p.omega().iter().collect();
    let mut field = vec![0.0; n];
    let bumps = 1 + (uniform_f64(rng) * 3.0) as usize;
    for _ in 0..bumps {
        let center = omega[(uniform_f64(rng) * omega.len() as f64) as usize % omega.len()];
        let cc = grid.cell_center(center);
        let radius = grid.spacing() * (1.0 + 3.0 * uniform_f64(rng));
        let amplitude = max_amplitude * (0.25 + 0.75 * uniform_f64(rng));
        for &c in &omega {
            let xc = grid.cell_center(c);
            let mut d2 = 0.0;
            for ax in 0..grid.n_dims() {
                d2 += (xc[ax] - cc[ax]).powi(2);
            }
            field[c] += amplitude * (-d2 / (radius * radius)).exp();
        }
    }
    field
}

/// Random ordered pair σ1 ≥ σ2 pointwise, both in [1, 2] on Ω (background 1
/// plus nonnegative bump fields) and 1 on the exterior.
pub fn random_ordered_pair(p: &DomainPartition, seed: u64) -> Result<(Conductivity, Conductivity)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = bump_field(p, &mut rng, 0.45);
    let gap = bump_field(p, &mut rng, 0.5);
    let n = p.grid().num_cells();
    let mut v2 = vec![1.0; n];
    let mut v1 = vec![1.0; n];
    for c in p.omega().iter() {
        v2[c] = (1.0 + base[c]).min(1.45);
        v1[c] = (v2[c] + gap[c]).min(2.0);
    }
    let sigma2 = Conductivity::from_values(p, v2, REFERENCE_LAMBDA)?;
    let sigma1 = Conductivity::from_values(p, v1, REFERENCE_LAMBDA)?;
    Ok((sigma1, sigma2))
}

/// Random ordered pair differing only on `region`, with the maximal gap on
/// `region` at least `min_gap` (pinned at the region's first cell).
pub fn random_ordered_pair_on(
    p: &DomainPartition,
    region: &CellSet,
    min_gap: f64,
    seed: u64,
) -> Result<(Conductivity, Conductivity)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = bump_field(p, &mut rng, 0.3);
    let n = p.grid().num_cells();
    let mut v2 = vec![1.0; n];
    for c in p.omega().iter() {
        v2[c] = (1.0 + base[c]).min(1.4);
    }
    let mut v1 = v2.clone();
    let anchor = region.iter().next().expect("region must be nonempty");
    for c in region.iter() {
        let extra = min_gap * (0.5 + uniform_f64(&mut rng));
        v1[c] = (v2[c] + extra).min(2.2);
    }
    v1[anchor] = (v2[anchor] + min_gap.max(0.05)).min(2.2);
    let sigma2 = Conductivity::from_values(p, v2, REFERENCE_LAMBDA)?;
    let sigma1 = Conductivity::from_values(p, v1, REFERENCE_LAMBDA)?;
    Ok((sigma1, sigma2))
}
