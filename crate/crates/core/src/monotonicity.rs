//! Quadratic-form comparison of DN maps (Loewner order) and numerical
//! verification of the two sandwich inequalities
//!
//!   ∫ y^{1−2s}(σ1−σ2)|∇ũ_1^f|²  ≤  d_s⟨(Λ_{σ1}−Λ_{σ2})f,f⟩  ≤  ∫ y^{1−2s}(σ1−σ2)|∇ũ_2^f|²
//!   ∫ y^{1−2s}(σ2/σ1)(σ1−σ2)|∇ũ_2^f|²  ≤  same middle  ≤  same upper
//!
//! where ũ_j^f solves the extension problem with coefficient σ_j. The
//! middle term comes from the spectral DN route, the outer terms from the
//! extension energies; the inequalities couple the two discretizations, so
//! the battery tolerances carry an absolute solver floor plus a relative
//! discretization allowance.

#[cfg(test)]
use crate::domain::FracOrder;
use crate::domain::{Conductivity, DomainPartition};
use crate::error::{CoreError, Result};
use crate::extension::{d_s_constant, energy, solve_extension, window_embed, YMesh};
use crate::exterior::{assemble_dn, check_compatible, dn_pairing, DNMatrix, FractionalMatrix};
use crate::linalg::{symmetric_eigen_sorted, Vector};
use crate::spectral::{assemble_operator, spectral_decompose};

/// Loewner classification of Λ1 − Λ2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoewnerClass {
    Psd,
    Nsd,
    Indefinite,
    Zero,
}

/// Eigenvalue extremes of the symmetrized difference with the tolerance
/// they were classified at.
#[derive(Debug, Clone, Copy)]
pub struct LoewnerVerdict {
    pub min_eig: f64,
    pub max_eig: f64,
    pub class: LoewnerClass,
    pub tol: f64,
}

/// Eigenvalue test of Λ1 − Λ2 in the quadratic sense. `scale` is the
/// spectral norm of the difference; "zero" means the difference is
/// negligible against the operands themselves.
pub fn loewner_test(l1: &DNMatrix, l2: &DNMatrix, tol: f64) -> Result<LoewnerVerdict> {
    check_compatible(l1, l2)?;
    if !(tol >= 0.0) {
        return Err(CoreError::InvalidParameter(format!(
            "tolerance must be nonnegative, got {tol}"
        )));
    }
    let diff = l1.entries() - l2.entries();
    let sym = (&diff + diff.transpose()) * 0.5;
    let (eigs, _) = symmetric_eigen_sorted(sym);
    let min_eig = eigs[0];
    let max_eig = eigs[eigs.len() - 1];
    let scale = min_eig.abs().max(max_eig.abs());
    let operand_scale = l1.entries().abs().max().max(l2.entries().abs().max());
    let class = if scale <= tol * operand_scale.max(f64::MIN_POSITIVE) {
        LoewnerClass::Zero
    } else if min_eig >= -tol * scale {
        LoewnerClass::Psd
    } else if max_eig <= tol * scale {
        LoewnerClass::Nsd
    } else {
        LoewnerClass::Indefinite
    };
    Ok(LoewnerVerdict {
        min_eig,
        max_eig,
        class,
        tol,
    })
}

/// Which of the two sandwich inequalities to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SandwichForm {
    /// Lower bound with density (σ1−σ2) on ũ_1, upper with the same density
    /// on ũ_2.
    TwoField,
    /// Lower bound with density (σ2/σ1)(σ1−σ2) on ũ_2, upper as in the
    /// first form.
    SingleField,
}

/// The three terms of a sandwich inequality and the positive parts of its
/// violations.
#[derive(Debug, Clone, Copy)]
pub struct SandwichReport {
    pub lower: f64,
    pub middle: f64,
    pub upper: f64,
    pub form: SandwichForm,
    pub violation_lower: f64,
    pub violation_upper: f64,
}

/// Evaluates one sandwich form for a window datum `f`.
pub fn verify_sandwich(
    sigma1: &Conductivity,
    sigma2: &Conductivity,
    p: &DomainPartition,
    mesh: &YMesh,
    f_window: &Vector,
    form: SandwichForm,
) -> Result<SandwichReport> {
    let s = mesh.order();
    let n = p.grid().num_cells();
    let vol = p.grid().cell_volume();
    let full = window_embed(p, f_window)?;

    let dn_for = |sig: &Conductivity| -> Result<DNMatrix> {
        let op = spectral_decompose(&assemble_operator(p, sig)?)?;
        assemble_dn(&FractionalMatrix::new(&op, s)?, p)
    };
    let dn1 = dn_for(sigma1)?;
    let dn2 = dn_for(sigma2)?;
    let middle = d_s_constant(s)
        * (dn_pairing(&dn1, f_window, f_window, vol) - dn_pairing(&dn2, f_window, f_window, vol));

    let diff_density: Vec<f64> = (0..n).map(|c| sigma1.value(c) - sigma2.value(c)).collect();
    let field2 = solve_extension(sigma2, p, mesh, &full)?;
    let upper = energy(&field2, mesh, p, p.omega(), &diff_density).value;

    let lower = match form {
        SandwichForm::TwoField => {
            let field1 = solve_extension(sigma1, p, mesh, &full)?;
            energy(&field1, mesh, p, p.omega(), &diff_density).value
        }
        SandwichForm::SingleField => {
            let weighted: Vec<f64> = (0..n)
                .map(|c| sigma2.value(c) / sigma1.value(c) * (sigma1.value(c) - sigma2.value(c)))
                .collect();
            energy(&field2, mesh, p, p.omega(), &weighted).value
        }
    };

    Ok(SandwichReport {
        lower,
        middle,
        upper,
        form,
        violation_lower: (lower - middle).max(0.0),
        violation_upper: (middle - upper).max(0.0),
    })
}
