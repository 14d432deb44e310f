//! Pixel-wise monotonicity tests and the desk-scale local-uniqueness probe.
//!
//! A pixel test compares the measured DN map against the map of a test
//! coefficient σ0 + β·χ_pixel in the Loewner order. Raising a pixel inside
//! a true inclusion of contrast ≥ β keeps the test map dominated
//! (σ_true ≥ σ_test pointwise implies Λ_meas ⪰ Λ_test: harmonic-mean faces
//! are monotone in σ, hence L is, hence L^s by operator monotonicity of
//! x ↦ x^s, hence the Schur-complement quadratic forms) — the discrete
//! ordering is exact up to round-off, so the "inside" direction carries a
//! tight tolerance. The converse "outside" direction is validated
//! empirically, backed by the localized-potentials mechanism.
//!
//! The uniqueness probe operationalizes the contrapositive of local
//! uniqueness: ordered coefficients that differ on O must produce a
//! detectable DN gap, quantified through the lower sandwich bound driven by
//! a localized-potential sequence concentrated where the coefficients
//! separate.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use crate::domain::{CellSet, Conductivity, DomainPartition, FracOrder};
use crate::error::{CoreError, Result};
use crate::extension::{energy, solve_extension, window_embed, YMesh};
use crate::exterior::{assemble_dn_blocks, DNMatrix};
use crate::linalg::Matrix;
use crate::monotonicity::{loewner_test, LoewnerClass, LoewnerVerdict};
use crate::runge::{energy_gram, localized_sequence, LocalizedSequence};
use crate::spectral::{assemble_operator, spectral_decompose};
use crate::util::uniform_f64;

/// Which side of σ0 the test coefficient perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestSide {
    Raise,
    Lower,
}

/// Pixel decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Inside,
    Outside,
    Undecided,
}

/// Outcome of one pixel test.
#[derive(Debug, Clone)]
pub struct PixelTestResult {
    pub pixel: usize,
    pub contrast: f64,
    pub side: TestSide,
    pub verdict: LoewnerVerdict,
    pub decision: Decision,
}

/// Shared immutable DN cache keyed by conductivity hash; pixel tests run in
/// parallel against it.
#[derive(Default)]
pub struct DnCache {
    map: Mutex<HashMap<u64, Arc<DNMatrix>>>,
}

impl DnCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dn_for(
        &self,
        sigma: &Conductivity,
        p: &DomainPartition,
        s: FracOrder,
    ) -> Result<Arc<DNMatrix>> {
        let key = sigma.hash() ^ p.grid().hash() ^ s.value().to_bits();
        if let Some(hit) = self.map.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let op = spectral_decompose(&assemble_operator(p, sigma)?)?;
        let dn = Arc::new(assemble_dn_blocks(&op, s, p)?);
        self.map.lock().unwrap().insert(key, dn.clone());
        Ok(dn)
    }
}

fn decide(side: TestSide, verdict: &LoewnerVerdict) -> Decision {
    let dominated = match side {
        TestSide::Raise => matches!(verdict.class, LoewnerClass::Psd | LoewnerClass::Zero),
        TestSide::Lower => matches!(verdict.class, LoewnerClass::Nsd | LoewnerClass::Zero),
    };
    if dominated {
        Decision::Inside
    } else if verdict.class == LoewnerClass::Indefinite {
        let scale = verdict.min_eig.abs().max(verdict.max_eig.abs());
        let graze = 3.0 * verdict.tol * scale;
        if verdict.min_eig.abs() <= graze && verdict.max_eig.abs() <= graze {
            Decision::Undecided
        } else {
            Decision::Outside
        }
    } else {
        Decision::Outside
    }
}

/// Tests one pixel (an index set) against the measured map with contrast β.
#[allow(clippy::too_many_arguments)]
pub fn pixel_test(
    dn_measured: &DNMatrix,
    sigma0: &Conductivity,
    p: &DomainPartition,
    pixel: &CellSet,
    beta: f64,
    side: TestSide,
    tol: f64,
    s: FracOrder,
    cache: &DnCache,
) -> Result<PixelTestResult> {
    if !(beta > 0.0) {
        return Err(CoreError::InvalidParameter(format!(
            "test contrast must be positive, got {beta}"
        )));
    }
    let delta = match side {
        TestSide::Raise => beta,
        TestSide::Lower => -beta,
    };
    let sigma_test = sigma0.perturbed(p, pixel, delta)?;
    let dn_test = cache.dn_for(&sigma_test, p, s)?;
    let verdict = loewner_test(dn_measured, &dn_test, tol)?;
    Ok(PixelTestResult {
        pixel: pixel.iter().next().unwrap_or(usize::MAX),
        contrast: beta,
        side,
        verdict,
        decision: decide(side, &verdict),
    })
}

/// Sweeps single-cell pixel tests over a region; deterministic order,
/// parallel execution, each test assembling its own DN matrix through the
/// shared cache.
#[allow(clippy::too_many_arguments)]
pub fn reconstruct_inclusion(
    dn_measured: &DNMatrix,
    sigma0: &Conductivity,
    p: &DomainPartition,
    test_region: &CellSet,
    beta: f64,
    side: TestSide,
    tol: f64,
    s: FracOrder,
) -> Result<Vec<PixelTestResult>> {
    let cache = DnCache::new();
    test_region
        .as_slice()
        .par_iter()
        .map(|&cell| {
            pixel_test(
                dn_measured,
                sigma0,
                p,
                &CellSet::new(vec![cell]),
                beta,
                side,
                tol,
                s,
                &cache,
            )
        })
        .collect()
}

/// Cells decided "inside" from a sweep result.
pub fn inside_set(results: &[PixelTestResult]) -> CellSet {
    CellSet::new(
        results
            .iter()
            .filter(|r| r.decision == Decision::Inside)
            .map(|r| r.pixel)
            .collect(),
    )
}

/// Adds a symmetric random perturbation with prescribed spectral norm
/// `level · ‖Λ‖₂` to a measured DN matrix (noise-injection studies; callers
/// widen the pixel-test tolerance to twice the injected level).
pub fn perturb_dn(dn: &DNMatrix, level: f64, seed: u64) -> DNMatrix {
    use rand_chacha::ChaCha8Rng;
    use rand_core::SeedableRng;
    let w = dn.dimension();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise = Matrix::zeros(w, w);
    for i in 0..w {
        for j in i..w {
            let v = 2.0 * uniform_f64(&mut rng) - 1.0;
            noise[(i, j)] = v;
            noise[(j, i)] = v;
        }
    }
    let noise_norm = crate::linalg::spectral_norm_sym(&noise).max(f64::MIN_POSITIVE);
    let target = level * crate::linalg::spectral_norm_sym(dn.entries());
    dn.with_entries(dn.entries() + noise * (target / noise_norm))
}

/// Direction of the coefficient ordering on O.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderingDirection {
    FirstAboveSecond,
    SecondAboveFirst,
    Equal,
}

/// Probe conclusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeConclusion {
    Consistent,
    ContradictionDetected,
}

/// Localized-potential summary attached to a uniqueness probe.
#[derive(Debug, Clone)]
pub struct LocalizedSummary {
    pub final_energy_b: f64,
    pub final_energy_d: f64,
    /// Lower sandwich bound ∫ y^{1−2s} (σ_lo/σ_hi)(σ_hi−σ_lo) |∇ũ_lo^f|²
    /// evaluated at the final localized datum.
    pub lower_bound: f64,
    pub steps: usize,
}

/// Report of [`uniqueness_probe`].
#[derive(Debug, Clone)]
pub struct UniquenessReport {
    pub direction: OrderingDirection,
    pub dn_gap: f64,
    pub max_coefficient_gap: f64,
    pub conclusion: ProbeConclusion,
    pub localized: Option<LocalizedSummary>,
}

/// Contrapositive check of local uniqueness: σ1, σ2 ordered on O and equal
/// elsewhere; a coefficient gap ≥ δ_min on O must show as a DN gap above
/// the noise floor. Also runs a localized sequence with B the cells where
/// the gap exceeds δ_min and D = Ω \ O, reporting the lower sandwich bound.
#[allow(clippy::too_many_arguments)]
pub fn uniqueness_probe(
    sigma1: &Conductivity,
    sigma2: &Conductivity,
    p: &DomainPartition,
    o_set: &CellSet,
    delta_min: f64,
    noise_floor: f64,
    s: FracOrder,
    mesh: &YMesh,
) -> Result<UniquenessReport> {
    if !o_set.is_subset_of(p.omega()) {
        return Err(CoreError::InvalidGeometry(
            "O must be a subset of omega".into(),
        ));
    }
    let n = p.grid().num_cells();
    for c in 0..n {
        if !o_set.contains(c) && sigma1.value(c) != sigma2.value(c) {
            return Err(CoreError::InvalidParameter(format!(
                "coefficients differ outside O at cell {c}"
            )));
        }
    }
    let mut has_pos = false;
    let mut has_neg = false;
    let mut max_gap = 0.0_f64;
    for c in o_set.iter() {
        let d = sigma1.value(c) - sigma2.value(c);
        if d > 0.0 {
            has_pos = true;
        }
        if d < 0.0 {
            has_neg = true;
        }
        max_gap = max_gap.max(d.abs());
    }
    if has_pos && has_neg {
        return Err(CoreError::InvalidParameter(
            "coefficients are not ordered on O".into(),
        ));
    }
    let direction = if has_pos {
        OrderingDirection::FirstAboveSecond
    } else if has_neg {
        OrderingDirection::SecondAboveFirst
    } else {
        OrderingDirection::Equal
    };

    let cache = DnCache::new();
    let dn1 = cache.dn_for(sigma1, p, s)?;
    let dn2 = cache.dn_for(sigma2, p, s)?;
    let dn_gap = dn1.gap_to(&dn2)?;
    let conclusion = if max_gap > delta_min && dn_gap > noise_floor {
        ProbeConclusion::ContradictionDetected
    } else {
        ProbeConclusion::Consistent
    };

    // localized lower bound on the blow-up set
    let localized = if delta_min > 0.0 && direction != OrderingDirection::Equal {
        let b_cells = CellSet::new(
            o_set
                .iter()
                .filter(|&c| (sigma1.value(c) - sigma2.value(c)).abs() >= delta_min)
                .collect(),
        );
        let d_cells = p.omega().difference(o_set);
        if !b_cells.is_empty() && !d_cells.is_empty() {
            let (lo, hi) = if direction == OrderingDirection::FirstAboveSecond {
                (sigma2, sigma1)
            } else {
                (sigma1, sigma2)
            };
            let g_b = energy_gram(lo, p, mesh, &b_cells)?;
            let g_d = energy_gram(lo, p, mesh, &d_cells)?;
            let eps0 = g_d.matrix().diagonal().max().max(1e-12);
            let seq: LocalizedSequence = localized_sequence(&g_b, &g_d, 6, eps0)?;
            match seq.steps.last() {
                Some(last) => {
                    let full = window_embed(p, &last.datum)?;
                    let field = solve_extension(lo, p, mesh, &full)?;
                    let density: Vec<f64> = (0..n)
                        .map(|c| lo.value(c) / hi.value(c) * (hi.value(c) - lo.value(c)))
                        .collect();
                    let bound = energy(&field, mesh, p, p.omega(), &density).value;
                    Some(LocalizedSummary {
                        final_energy_b: last.energy_b,
                        final_energy_d: last.energy_d,
                        lower_bound: bound,
                        steps: seq.steps.len(),
                    })
                }
                None => None,
            }
        } else {
            None
        }
    } else {
        None
    };

    Ok(UniquenessReport {
        direction,
        dn_gap,
        max_coefficient_gap: max_gap,
        conclusion,
        localized,
    })
}
