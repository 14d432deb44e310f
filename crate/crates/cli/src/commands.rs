//! The eight commands, each producing a [`ResultBundle`].

use anyhow::{bail, Context};

use fracmono_core::domain::{Conductivity, DomainPartition, FracOrder};
use fracmono_core::extension::{
    build_ymesh, d_s_constant, energy_identity_check, neumann_trace, solve_extension, window_embed,
};
use fracmono_core::exterior::{assemble_dn, assemble_dn_columns, solve_exterior, FractionalMatrix};
use fracmono_core::monotonicity::{loewner_test, verify_sandwich, LoewnerClass, SandwichForm};
use fracmono_core::reconstruct::{
    inside_set, perturb_dn, reconstruct_inclusion, uniqueness_probe, Decision, ProbeConclusion,
    TestSide,
};
use fracmono_core::runge::{
    beta_profile, energy_gram, harmonic_target, localized_sequence, runge_residual,
    weighted_integral,
};
use fracmono_core::scenarios::{random_ordered_pair, random_ordered_pair_on, random_window_datum};
use fracmono_core::spectral::{assemble_operator, spectral_decompose};
use fracmono_core::Vector;

use crate::config::{Resolved, RunConfig};
use crate::output::{Curve, NamedMatrix, ResultBundle};

fn smooth_window_datum(p: &DomainPartition) -> Vector {
    fracmono_core::scenarios::smooth_window_datum(p)
}

fn window_datum(cfg: &RunConfig, p: &DomainPartition) -> anyhow::Result<Vector> {
    match &cfg.forward.window_values {
        None => Ok(smooth_window_datum(p)),
        Some(values) => {
            if values.len() != p.window().len() {
                bail!(
                    "forward.window_values has {} entries, window has {} cells",
                    values.len(),
                    p.window().len()
                );
            }
            Ok(Vector::from_vec(values.clone()))
        }
    }
}

fn s_tag(s: FracOrder) -> String {
    format!("{}", s.value()).replace('.', "p")
}

/// `forward`: solve the exterior problem per order and dump u.
pub fn forward(cfg: &RunConfig, r: &Resolved) -> anyhow::Result<ResultBundle> {
    let mut bundle = ResultBundle::new(&cfg.scenario, "forward");
    let p = &r.partition;
    let f_w = window_datum(cfg, p)?;
    let f = window_embed(p, &f_w)?;
    let op = spectral_decompose(&assemble_operator(p, &r.sigma)?)?;
    for &s in &r.orders {
        let a = FractionalMatrix::new(&op, s)?;
        let u = solve_exterior(&a, p, &f)?;
        let grid = p.grid();
        let mut rows = Vec::with_capacity(u.len());
        for c in 0..u.len() {
            let x = grid.cell_center(c);
            let mut row = vec![c as f64, x[0]];
            if grid.n_dims() == 2 {
                row.push(x[1]);
            }
            row.push(u[c]);
            rows.push(row);
        }
        let mut header = vec!["cell".into(), "x".into()];
        if grid.n_dims() == 2 {
            header.push("y".into());
        }
        header.push("u".into());
        bundle.curves.push(Curve {
            name: format!("u_s{}", s_tag(s)),
            header,
            rows,
        });
        bundle.metric(
            format!("u_max_s{}", s_tag(s)),
            u.abs().max(),
            "solve_exterior",
        );
        let norm_omega: f64 = p.omega().iter().map(|c| u[c] * u[c]).sum::<f64>().sqrt();
        bundle.metric(
            format!("u_omega_norm_s{}", s_tag(s)),
            norm_omega,
            "solve_exterior",
        );
    }
    Ok(bundle)
}

/// `dnmap`: assemble Λ per order (Schur route), dump matrices, and report
/// the column-route agreement.
pub fn dnmap(cfg: &RunConfig, r: &Resolved) -> anyhow::Result<ResultBundle> {
    let mut bundle = ResultBundle::new(&cfg.scenario, "dnmap");
    let p = &r.partition;
    let op = spectral_decompose(&assemble_operator(p, &r.sigma)?)?;
    for &s in &r.orders {
        let a = FractionalMatrix::new(&op, s)?;
        let dn = assemble_dn(&a, p)?;
        let dn_cols = assemble_dn_columns(&a, p)?;
        let scale = dn.entries().abs().max();
        let route_gap = (dn.entries() - dn_cols.entries()).abs().max() / scale;
        bundle.metric(
            format!("symmetry_defect_s{}", s_tag(s)),
            dn.symmetry_defect_rel(),
            "assemble_dn",
        );
        bundle.metric(
            format!("schur_vs_column_s{}", s_tag(s)),
            route_gap,
            "assemble_dn_columns",
        );
        let w = dn.dimension();
        bundle.matrices.push(NamedMatrix {
            name: format!("dn_s{}", s_tag(s)),
            rows: w,
            cols: w,
            data: dn.entries().transpose().as_slice().to_vec(),
            meta: serde_json::json!({
                "order": s.value(),
                "window_cells": p.window().as_slice(),
                "grid_hash": format!("{:016x}", dn.grid_hash()),
                "sigma_hash": format!("{:016x}", dn.sigma_hash()),
            }),
        });
    }
    Ok(bundle)
}

/// `extension-check`: weighted Neumann trace against the spectral action on
/// the window over three y-refinement levels.
pub fn extension_check(cfg: &RunConfig, r: &Resolved) -> anyhow::Result<ResultBundle> {
    let mut bundle = ResultBundle::new(&cfg.scenario, "extension-check");
    let p = &r.partition;
    let f_w = window_datum(cfg, p)?;
    let f = window_embed(p, &f_w)?;
    let op = spectral_decompose(&assemble_operator(p, &r.sigma)?)?;
    for &s in &r.orders {
        let a = FractionalMatrix::new(&op, s)?;
        let u = solve_exterior(&a, p, &f)?;
        let au = a.apply(&u);
        let ds = d_s_constant(s);
        let mesh_full = cfg.ymesh_for(p, s)?;
        let m_full = mesh_full.intervals();
        let mut rows = Vec::new();
        let mut last = f64::NAN;
        for m in [m_full / 4, m_full / 2, m_full] {
            let mesh = build_ymesh(s, m.max(16), mesh_full.height(), mesh_full.gamma_exp())?;
            let field = solve_extension(&r.sigma, p, &mesh, &f)?;
            let trace = neumann_trace(&field, &mesh);
            let mut num = 0.0;
            let mut den = 0.0;
            for c in p.window().iter() {
                num += (trace[c] / ds - au[c]).powi(2);
                den += au[c] * au[c];
            }
            last = (num / den).sqrt();
            rows.push(vec![m as f64, last]);
        }
        bundle.curves.push(Curve {
            name: format!("trace_refinement_s{}", s_tag(s)),
            header: vec!["intervals".into(), "relative_l2_error".into()],
            rows,
        });
        bundle.metric(
            format!("trace_rel_error_s{}", s_tag(s)),
            last,
            "neumann_trace",
        );
        let rep = energy_identity_check(&r.sigma, p, &mesh_full, &f_w)?;
        bundle.metric(
            format!("energy_identity_gap_s{}", s_tag(s)),
            rep.gap,
            "energy_identity_check",
        );
    }
    Ok(bundle)
}

/// `mono-test`: sandwich + Loewner battery over seeded ordered pairs, plus
/// the configured coefficient pair (σ, σ2). With σ2 omitted the configured
/// pair is (σ, σ): all its reported gaps collapse to solver noise.
pub fn mono_test(cfg: &RunConfig, r: &Resolved) -> anyhow::Result<ResultBundle> {
    let mut bundle = ResultBundle::new(&cfg.scenario, "mono-test");
    let p = &r.partition;
    let mut rows = Vec::new();
    let mut worst_violation: f64 = 0.0;
    let mut psd = 0usize;
    let mut total = 0usize;
    for &s in &r.orders {
        let mesh = cfg.ymesh_for(p, s)?;
        {
            let sigma2 = r.sigma2.as_ref().unwrap_or(&r.sigma);
            let f = smooth_window_datum(p);
            let rep = verify_sandwich(&r.sigma, sigma2, p, &mesh, &f, SandwichForm::TwoField)?;
            bundle.metric(
                format!("configured_pair_lower_s{}", s_tag(s)),
                rep.lower,
                "verify_sandwich",
            );
            bundle.metric(
                format!("configured_pair_middle_s{}", s_tag(s)),
                rep.middle,
                "verify_sandwich",
            );
            bundle.metric(
                format!("configured_pair_upper_s{}", s_tag(s)),
                rep.upper,
                "verify_sandwich",
            );
        }
        for k in 0..cfg.mono.pairs {
            let seed = cfg.seed.wrapping_add(k as u64);
            let (s1, s2) = random_ordered_pair(p, seed)?;
            let f = random_window_datum(p, seed ^ 0x5eed);
            for (form_id, form) in [
                (0.0, SandwichForm::TwoField),
                (1.0, SandwichForm::SingleField),
            ] {
                let rep = verify_sandwich(&s1, &s2, p, &mesh, &f, form)?;
                let allow = 1e-8 + 0.05 * rep.middle.abs();
                worst_violation = worst_violation
                    .max(rep.violation_lower - allow)
                    .max(rep.violation_upper - allow);
                rows.push(vec![
                    s.value(),
                    seed as f64,
                    form_id,
                    rep.lower,
                    rep.middle,
                    rep.upper,
                    rep.violation_lower,
                    rep.violation_upper,
                ]);
            }
            let mk = |sig: &Conductivity| -> anyhow::Result<_> {
                let op = spectral_decompose(&assemble_operator(p, sig)?)?;
                Ok(fracmono_core::exterior::assemble_dn_blocks(&op, s, p)?)
            };
            let verdict = loewner_test(&mk(&s1)?, &mk(&s2)?, 1e-8)?;
            total += 1;
            if matches!(verdict.class, LoewnerClass::Psd | LoewnerClass::Zero) {
                psd += 1;
            }
        }
    }
    bundle.curves.push(Curve {
        name: "sandwich".into(),
        header: vec![
            "s".into(),
            "seed".into(),
            "form".into(),
            "lower".into(),
            "middle".into(),
            "upper".into(),
            "violation_lower".into(),
            "violation_upper".into(),
        ],
        rows,
    });
    bundle.metric(
        "worst_violation_beyond_allowance",
        worst_violation.max(0.0),
        "verify_sandwich",
    );
    bundle.metric("loewner_psd_count", psd as f64, "loewner_test");
    bundle.metric("loewner_total", total as f64, "loewner_test");
    if psd != total {
        bail!("monotonicity battery found non-PSD ordered pairs: {psd}/{total}");
    }
    Ok(bundle)
}

/// `localize`: localized-potential sequence on the configured B/D sets.
pub fn localize(cfg: &RunConfig, r: &Resolved) -> anyhow::Result<ResultBundle> {
    let mut bundle = ResultBundle::new(&cfg.scenario, "localize");
    let p = &r.partition;
    let b = p
        .b_set()
        .context("localize requires geometry.b_set")?
        .clone();
    let d = p
        .d_set()
        .context("localize requires geometry.d_set")?
        .clone();
    for &s in &r.orders {
        let mesh = cfg.ymesh_for(p, s)?;
        let g_b = energy_gram(&r.sigma, p, &mesh, &b)?;
        let g_d = energy_gram(&r.sigma, p, &mesh, &d)?;
        let eps0 = cfg
            .localize
            .eps0
            .unwrap_or_else(|| g_d.matrix().diagonal().max());
        let seq = localized_sequence(&g_b, &g_d, cfg.localize.steps, eps0)?;
        let rows: Vec<Vec<f64>> = seq
            .steps
            .iter()
            .enumerate()
            .map(|(i, st)| vec![(i + 1) as f64, st.epsilon, st.energy_b, st.energy_d])
            .collect();
        bundle.curves.push(Curve {
            name: format!("energy_table_s{}", s_tag(s)),
            header: vec![
                "step".into(),
                "epsilon".into(),
                "energy_b".into(),
                "energy_d".into(),
            ],
            rows,
        });
        if let Some(ratio) = seq.final_ratio() {
            bundle.metric(
                format!("final_ratio_s{}", s_tag(s)),
                ratio,
                "localized_sequence",
            );
        }
        bundle.metric(
            format!("truncated_s{}", s_tag(s)),
            if seq.truncated { 1.0 } else { 0.0 },
            "localized_sequence",
        );
    }
    Ok(bundle)
}

/// `runge`: β_k properties and the residual-vs-basis-size curve.
pub fn runge(cfg: &RunConfig, r: &Resolved) -> anyhow::Result<ResultBundle> {
    let mut bundle = ResultBundle::new(&cfg.scenario, "runge");
    let p = &r.partition;
    for &s in &r.orders {
        let mut beta_rows = Vec::new();
        for &k in &cfg.runge.k_list {
            let beta = beta_profile(k, s)?;
            let b = beta.plateau_value();
            beta_rows.push(vec![
                k as f64,
                b,
                beta.plateau_end(),
                beta.support_end(),
                (weighted_integral(b, k, s) - 1.0).abs(),
            ]);
        }
        bundle.curves.push(Curve {
            name: format!("beta_properties_s{}", s_tag(s)),
            header: vec![
                "k".into(),
                "plateau_value".into(),
                "plateau_end".into(),
                "support_end".into(),
                "normalization_residual".into(),
            ],
            rows: beta_rows,
        });

        let mesh = cfg.ymesh_for(p, s)?;
        let beta1 = beta_profile(1, s)?;
        let v = harmonic_target(p, &r.sigma)?;
        let mut rows = Vec::new();
        let mut final_rel = f64::NAN;
        for m in 1..=p.window().len() {
            let rep = runge_residual(&v, &beta1, &r.sigma, p, &mesh, m)?;
            final_rel = rep.relative_h1x;
            rows.push(vec![
                m as f64,
                rep.residual_h1x,
                rep.relative_h1x,
                rep.relative_h1,
            ]);
        }
        bundle.curves.push(Curve {
            name: format!("runge_residual_s{}", s_tag(s)),
            header: vec![
                "basis_size".into(),
                "residual_h1x".into(),
                "relative_h1x".into(),
                "relative_h1".into(),
            ],
            rows,
        });
        bundle.metric(
            format!("final_relative_residual_s{}", s_tag(s)),
            final_rel,
            "runge_residual",
        );
    }
    Ok(bundle)
}

/// `reconstruct`: pixel map over Ω for each β in the sweep.
pub fn reconstruct(cfg: &RunConfig, r: &Resolved) -> anyhow::Result<ResultBundle> {
    let mut bundle = ResultBundle::new(&cfg.scenario, "reconstruct");
    let p = &r.partition;
    if cfg.reconstruct.betas.is_empty() {
        bail!("reconstruct.betas must not be empty");
    }
    // measured map from the configured sigma (with inclusions); the test
    // background strips them
    let sigma0 = fracmono_core::domain::make_conductivity(
        p,
        cfg.conductivity.background,
        &[],
        cfg.conductivity.lambda,
    )?;
    for &s in &r.orders {
        let op = spectral_decompose(&assemble_operator(p, &r.sigma)?)?;
        let mut dn = fracmono_core::exterior::assemble_dn_blocks(&op, s, p)?;
        let mut tol = cfg.reconstruct.tol;
        if cfg.reconstruct.noise > 0.0 {
            dn = perturb_dn(&dn, cfg.reconstruct.noise, cfg.seed);
            tol = 2.0 * cfg.reconstruct.noise;
        }
        let grid = p.grid();
        let mut rows = Vec::new();
        let mut per_beta_counts = Vec::new();
        let mut decisions: Vec<Vec<f64>> = vec![Vec::new(); cfg.reconstruct.betas.len()];
        for (bi, &beta) in cfg.reconstruct.betas.iter().enumerate() {
            let results =
                reconstruct_inclusion(&dn, &sigma0, p, p.omega(), beta, TestSide::Raise, tol, s)?;
            per_beta_counts.push(inside_set(&results).len());
            for res in &results {
                decisions[bi].push(match res.decision {
                    Decision::Inside => 1.0,
                    Decision::Outside => 0.0,
                    Decision::Undecided => 0.5,
                });
            }
            if bi == 0 {
                for res in &results {
                    let x = grid.cell_center(res.pixel);
                    let mut row = vec![res.pixel as f64, x[0]];
                    if grid.n_dims() == 2 {
                        row.push(x[1]);
                    }
                    rows.push(row);
                }
            }
        }
        for (row, cell_rows) in rows.iter_mut().enumerate() {
            for d in &decisions {
                cell_rows.push(d[row]);
            }
        }
        let mut header = vec!["cell".into(), "x".into()];
        if grid.n_dims() == 2 {
            header.push("y".into());
        }
        for &beta in &cfg.reconstruct.betas {
            header.push(format!("inside_beta_{beta}"));
        }
        bundle.curves.push(Curve {
            name: format!("pixel_map_s{}", s_tag(s)),
            header,
            rows,
        });
        for (bi, &beta) in cfg.reconstruct.betas.iter().enumerate() {
            bundle.metric(
                format!("inside_count_beta_{beta}_s{}", s_tag(s)),
                per_beta_counts[bi] as f64,
                "reconstruct_inclusion",
            );
        }
    }
    Ok(bundle)
}

/// `uniqueness`: probe report over seeded ordered pairs on O.
pub fn uniqueness(cfg: &RunConfig, r: &Resolved) -> anyhow::Result<ResultBundle> {
    let mut bundle = ResultBundle::new(&cfg.scenario, "uniqueness");
    let p = &r.partition;
    let o = match p.o_set() {
        Some(o) => o.clone(),
        None => p.omega().clone(),
    };
    for &s in &r.orders {
        let mesh = cfg.ymesh_for(p, s)?;
        let mut rows = Vec::new();
        let mut min_gap = f64::INFINITY;
        let mut detected = 0usize;
        for k in 0..cfg.uniqueness.pairs {
            let seed = cfg.seed.wrapping_add(0x1000 + k as u64);
            let (s1, s2) = random_ordered_pair_on(p, &o, cfg.uniqueness.min_gap, seed)?;
            let rep = uniqueness_probe(
                &s1,
                &s2,
                p,
                &o,
                cfg.uniqueness.delta_min,
                cfg.uniqueness.noise_floor,
                s,
                &mesh,
            )?;
            min_gap = min_gap.min(rep.dn_gap);
            if rep.conclusion == ProbeConclusion::ContradictionDetected {
                detected += 1;
            }
            let (loc_ratio, loc_bound) = rep
                .localized
                .as_ref()
                .map(|l| {
                    (
                        l.final_energy_b / l.final_energy_d.max(1e-300),
                        l.lower_bound,
                    )
                })
                .unwrap_or((f64::NAN, f64::NAN));
            rows.push(vec![
                seed as f64,
                rep.max_coefficient_gap,
                rep.dn_gap,
                if rep.conclusion == ProbeConclusion::ContradictionDetected {
                    1.0
                } else {
                    0.0
                },
                loc_ratio,
                loc_bound,
            ]);
        }
        // the configured pair, when a second coefficient is given
        if let Some(sigma2) = &r.sigma2 {
            let rep = uniqueness_probe(
                &r.sigma,
                sigma2,
                p,
                &o,
                cfg.uniqueness.delta_min,
                cfg.uniqueness.noise_floor,
                s,
                &mesh,
            )?;
            bundle.metric(
                format!("configured_pair_dn_gap_s{}", s_tag(s)),
                rep.dn_gap,
                "uniqueness_probe",
            );
            bundle.metric(
                format!("configured_pair_detected_s{}", s_tag(s)),
                if rep.conclusion == ProbeConclusion::ContradictionDetected {
                    1.0
                } else {
                    0.0
                },
                "uniqueness_probe",
            );
        }
        // identical-pair control
        let sigma0 = fracmono_core::domain::make_conductivity(
            p,
            cfg.conductivity.background,
            &[],
            cfg.conductivity.lambda,
        )?;
        let same = uniqueness_probe(
            &sigma0,
            &sigma0,
            p,
            &o,
            cfg.uniqueness.delta_min,
            cfg.uniqueness.noise_floor,
            s,
            &mesh,
        )?;
        bundle.curves.push(Curve {
            name: format!("uniqueness_s{}", s_tag(s)),
            header: vec![
                "seed".into(),
                "max_coefficient_gap".into(),
                "dn_gap".into(),
                "contradiction_detected".into(),
                "localized_ratio".into(),
                "localized_lower_bound".into(),
            ],
            rows,
        });
        bundle.metric(
            format!("min_dn_gap_s{}", s_tag(s)),
            min_gap,
            "uniqueness_probe",
        );
        bundle.metric(
            format!("detected_s{}", s_tag(s)),
            detected as f64,
            "uniqueness_probe",
        );
        bundle.metric(
            format!("identical_pair_gap_s{}", s_tag(s)),
            same.dn_gap,
            "uniqueness_probe",
        );
    }
    Ok(bundle)
}
