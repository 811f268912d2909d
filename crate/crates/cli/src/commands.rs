use heatprobe_core::carleman::{carleman_samples, carleman_sweep};
use heatprobe_core::dtn::{smooth_boundary_data, smooth_potential, write_dtn_matrix};
use heatprobe_core::reconstruct::{stability_sweep, SweepPlan};
use heatprobe_core::semilinear::{check_a_priori, check_range, frechet_fd_check, semilinear_solve};
use heatprobe_core::stats::{fit_envelope, loglog_slope};
use heatprobe_core::{
    assemble_dtn_matrix, build_cgo, neumann_trace, pairing, pairing_volume, reconstruct, recover_nonlinearity, Basis,
    BoundaryField, CgoParams, Grid, RecoveryConfig, ScalarField, Sign, SimulatedDtn, SobolevExponents,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::config::{stream, stream_seed, unit_axis, Prepared};
use crate::output::{line_chart, num, Artifacts, Series, Table};
use crate::{CliError, Command, Tag};

pub fn execute(cmd: Command, p: &Prepared) -> Result<Artifacts, CliError> {
    let mut out = Artifacts::default();
    match cmd {
        Command::Forward => forward(p, &mut out)?,
        Command::Dtn => dtn(p, &mut out)?,
        Command::PairingCheck => pairing_check(p, &mut out)?,
        Command::CgoCheck => cgo_check(p, &mut out)?,
        Command::CarlemanCheck => carleman_check(p, &mut out)?,
        Command::Reconstruct => reconstruction(p, &mut out)?,
        Command::StabilitySweep => sweep(p, &mut out)?,
        Command::Semilinear => semilinear(p, &mut out)?,
        Command::RecoverNonlinearity => recovery(p, &mut out)?,
    }
    Ok(out)
}

fn coords(grid: &Grid, s: usize) -> [String; 2] {
    let x = grid.position(s);
    [num(x[0]), num(x[1])]
}

fn field_table(u: &ScalarField) -> Table {
    let g = u.grid();
    let mut t = Table::new(&["k", "t", "x", "y", "re", "im"]);
    for k in 0..g.nt() {
        for s in 0..g.nspace() {
            let [x, y] = coords(g, s);
            let v = u.get(s, k);
            t.row([k.to_string(), num(g.time(k)), x, y, num(v.re), num(v.im)]);
        }
    }
    t
}

fn boundary_table(f: &BoundaryField) -> Table {
    let g = f.grid();
    let mut t = Table::new(&["k", "t", "node", "face", "x", "y", "re", "im"]);
    for k in 0..g.nt() {
        for (b, node) in g.boundary_nodes().iter().enumerate() {
            let [x, y] = coords(g, node.spatial);
            let v = f.get(b, k);
            t.row([k.to_string(), num(g.time(k)), b.to_string(), node.face.to_string(), x, y, num(v.re), num(v.im)]);
        }
    }
    t
}

fn boundary_series(f: &BoundaryField, node: usize, name: &str) -> Series {
    let g = f.grid();
    Series { name: name.into(), points: (0..g.nt()).map(|k| (g.time(k), f.get(node, k).re)).collect() }
}

fn forward(p: &Prepared, out: &mut Artifacts) -> Result<(), CliError> {
    let (g, u0) = p.config.boundary.build(&p.grid, stream_seed(p.config.seed, stream::BOUNDARY));
    let u0c: Option<Vec<_>> = u0.map(|v| v.into_iter().map(|x| num_complex::Complex64::new(x, 0.0)).collect());
    let u = p.scheme.solve_forward(&p.potential, &g, u0c.as_deref(), None).tag("forward")?;
    let flux = neumann_trace(&u).tag("forward")?;
    out.table("solution.csv", field_table(&u));
    out.table("flux.csv", boundary_table(&flux));
    out.add(
        "flux.svg",
        line_chart("Normal derivative at the first boundary node", "t", "∂_ν u", &[boundary_series(&flux, 0, "flux")], false, false)
            .into_bytes(),
    );
    out.json("summary.json", &json!({ "max_abs_u": u.max_abs(), "max_abs_flux": flux.max_abs(), "flux_l2": flux.l2_norm() }));
    Ok(())
}

fn dtn(p: &Prepared, out: &mut Artifacts) -> Result<(), CliError> {
    let basis = Basis::new(&p.grid, p.reconstruction.basis).tag("dtn")?;
    let exps = SobolevExponents::dtn_difference();
    let data = SimulatedDtn::new(p.scheme, p.potential.clone());
    let reference = SimulatedDtn::new(p.scheme, p.reference.clone());
    let m = assemble_dtn_matrix(&data, &basis, &basis, None, exps).tag("dtn")?;
    let r = assemble_dtn_matrix(&reference, &basis, &basis, None, exps).tag("dtn")?;
    let d = m.difference(&r).tag("dtn")?;
    let mut bin = Vec::new();
    write_dtn_matrix(&m, &mut bin).tag("dtn")?;
    out.add("dtn.bin", bin);
    let mut bin = Vec::new();
    write_dtn_matrix(&d, &mut bin).tag("dtn")?;
    out.add("dtn_difference.bin", bin);
    let mut t = Table::new(&["row", "col", "re", "im"]);
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            let v = m.matrix[(i, j)];
            t.row([i.to_string(), j.to_string(), num(v.re), num(v.im)]);
        }
    }
    out.table("dtn_matrix.csv", t);
    let sv = d.weighted_singular_values();
    let mut t = Table::new(&["k", "sigma"]);
    for (k, s) in sv.iter().enumerate() {
        t.row([k.to_string(), num(*s)]);
    }
    out.table("singular_values.csv", t);
    let pts: Vec<(f64, f64)> = sv.iter().enumerate().map(|(k, s)| (k as f64, *s)).collect();
    out.add(
        "singular_values.svg",
        line_chart("Weighted singular values of the map difference", "index", "σ", &[Series { name: "σ_k".into(), points: pts }], false, true)
            .into_bytes(),
    );
    out.json(
        "summary.json",
        &json!({ "basis_size": basis.len(), "operator_norm": m.operator_norm(), "difference_norm": d.operator_norm() }),
    );
    Ok(())
}

fn pairing_check(p: &Prepared, out: &mut Artifacts) -> Result<(), CliError> {
    let cfg = &p.config.pairing;
    let base = stream_seed(p.config.seed, stream::PROBE);
    let rows = (0..cfg.cases as u64)
        .into_par_iter()
        .map(|case| {
            let mut rng = ChaCha8Rng::seed_from_u64(base.wrapping_add(case));
            let q = smooth_potential(&p.grid, cfg.bound, &mut rng)?;
            let q_ref = smooth_potential(&p.grid, cfg.bound, &mut rng)?;
            let g = smooth_boundary_data(&p.grid, &mut rng);
            let h = smooth_boundary_data(&p.grid, &mut rng);
            Ok((pairing(&p.scheme, &q, &q_ref, &g, &h)?, pairing_volume(&p.scheme, &q, &q_ref, &g, &h)?))
        })
        .collect::<heatprobe_core::Result<Vec<_>>>()
        .tag("dtn")?;
    let mut t = Table::new(&["case", "boundary_re", "boundary_im", "volume_re", "volume_im", "relative_gap"]);
    let mut worst: f64 = 0.0;
    for (i, (b, v)) in rows.iter().enumerate() {
        let gap = (b - v).norm() / v.norm();
        worst = worst.max(gap);
        t.row([i.to_string(), num(b.re), num(b.im), num(v.re), num(v.im), num(gap)]);
    }
    out.table("pairing.csv", t);
    out.json("summary.json", &json!({ "cases": rows.len(), "max_relative_gap": worst, "threshold": cfg.threshold }));
    if worst > cfg.threshold {
        return Err(CliError::Check {
            module: "dtn",
            message: format!("pairing gap {worst:.3e} exceeds {:.3e}", cfg.threshold),
            artifacts: std::mem::take(out),
        });
    }
    Ok(())
}

fn cgo_check(p: &Prepared, out: &mut Artifacts) -> Result<(), CliError> {
    let cfg = &p.config.cgo;
    let dim = p.grid.dim();
    let omega = cfg.omega.clone().unwrap_or_else(|| unit_axis(dim));
    let xi = cfg.xi.clone().unwrap_or_else(|| vec![0.0; dim]);
    let jobs: Vec<(f64, f64)> = cfg.tau.iter().flat_map(|&tau| cfg.rho.iter().map(move |&r| (tau, r))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(tau, rho)| {
            let params = CgoParams::new(cfg.sign, omega.clone(), xi.clone(), tau, rho);
            let sol = build_cgo(&p.scheme, &params, &p.potential, None)?;
            Ok((tau, rho, params.zeta_bracket_sq(), sol.remainder.l2_norm(), sol.residual_norm))
        })
        .collect::<heatprobe_core::Result<Vec<_>>>()
        .tag("cgo")?;
    let mut t = Table::new(&["tau", "rho", "zeta_bracket_sq", "remainder_l2", "residual_l2"]);
    for r in &rows {
        t.row([num(r.0), num(r.1), num(r.2), num(r.3), num(r.4)]);
    }
    out.table("cgo.csv", t);
    let mut series = vec![];
    let mut slopes = vec![];
    for &tau in &cfg.tau {
        let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.0 == tau).map(|r| (r.1, r.3)).collect();
        let (x, y): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
        slopes.push(json!({ "tau": tau, "slope": loglog_slope(&x, &y).ok() }));
        series.push(Series { name: format!("τ = {tau:.3}"), points: pts });
    }
    let envelope = if cfg.sign == Sign::Plus && rows.len() >= 2 {
        let rho: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let z: Vec<f64> = rows.iter().map(|r| r.2 - 1.0).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.3).collect();
        fit_envelope(&rho, &z, &y).ok().map(|[a, b]| json!({ "a": a, "b": b }))
    } else {
        None
    };
    out.add("cgo.svg", line_chart("Remainder norm against ρ", "ρ", "‖w‖", &series, true, true).into_bytes());
    out.json("summary.json", &json!({ "sign": cfg.sign, "slopes": slopes, "envelope": envelope }));
    Ok(())
}

fn carleman_check(p: &Prepared, out: &mut Artifacts) -> Result<(), CliError> {
    let cfg = &p.config.carleman;
    let omega = cfg.omega.clone().unwrap_or_else(|| unit_axis(p.grid.dim()));
    let mut t = Table::new(&["sign", "sample", "rho", "lhs", "rhs", "ratio", "poincare"]);
    let mut series = vec![];
    let mut summary = vec![];
    for sign in [Sign::Plus, Sign::Minus] {
        let samples = carleman_samples(&p.grid, sign, cfg.samples, stream_seed(p.config.seed, stream::SAMPLES));
        let report = carleman_sweep(&samples, &p.potential, &omega, &cfg.rho, sign).tag("carleman")?;
        let label = if sign == Sign::Plus { "plus" } else { "minus" };
        for r in &report.rows {
            t.row([label.to_string(), r.sample_id.to_string(), num(r.rho), num(r.lhs), num(r.rhs), num(r.ratio), num(r.poincare)]);
        }
        let maxima: Vec<(f64, f64)> = cfg.rho.iter().map(|&rho| (rho, report.max_ratio_at(rho))).collect();
        summary.push(json!({ "sign": label, "max_ratio": maxima, "max_poincare": report.max_poincare() }));
        series.push(Series { name: format!("max ratio, ε = {label}"), points: maxima });
    }
    out.table("carleman.csv", t);
    out.add("carleman.svg", line_chart("Largest Carleman ratio against ρ", "ρ", "ratio", &series, true, false).into_bytes());
    out.json("summary.json", &summary);
    Ok(())
}

fn reconstruction(p: &Prepared, out: &mut Artifacts) -> Result<(), CliError> {
    let data = SimulatedDtn::new(p.scheme, p.potential.clone());
    let rec = reconstruct(&p.scheme, &data, &p.reference, &p.reconstruction, Some(&p.potential)).tag("reconstruct")?;
    let mut t = Table::new(&["xi1", "xi2", "tau", "admissible", "re", "im"]);
    for node in &rec.slices.nodes {
        let xi2 = node.xi.get(1).copied().unwrap_or(0.0);
        t.row([num(node.xi[0]), num(xi2), num(node.tau), node.omega.is_some().to_string(), num(node.value.re), num(node.value.im)]);
    }
    out.table("slices.csv", t);
    let g = &p.grid;
    let est = &rec.inversion.estimate;
    let mut t = Table::new(&["k", "t", "x", "y", "estimate", "truth"]);
    for k in 0..g.nt() {
        for s in 0..g.nspace() {
            let [x, y] = coords(g, s);
            let truth = p.potential.get(s, k) - p.reference.get(s, k);
            t.row([k.to_string(), num(g.time(k)), x, y, num(est.get(s, k)), num(truth)]);
        }
    }
    out.table("estimate.csv", t);
    // time profile through the spatial node nearest the centre
    let centre = (0..g.nspace())
        .min_by(|&a, &b| {
            let d = |s: usize| g.position(s).iter().take(g.dim()).map(|c| (c - 0.5).powi(2)).sum::<f64>();
            d(a).total_cmp(&d(b))
        })
        .unwrap_or(0);
    let profile = |f: &dyn Fn(usize) -> f64| (0..g.nt()).map(|k| (g.time(k), f(k))).collect::<Vec<_>>();
    let series = [
        Series { name: "estimate".into(), points: profile(&|k| est.get(centre, k)) },
        Series { name: "truth".into(), points: profile(&|k| p.potential.get(centre, k) - p.reference.get(centre, k)) },
    ];
    out.add("estimate.svg", line_chart("Recovered contrast at the central node", "t", "q − q̃", &series, false, false).into_bytes());
    out.json(
        "summary.json",
        &json!({
            "delta": rec.delta,
            "rho": rec.params.rho,
            "raw_rho": rec.params.raw_rho,
            "radius": rec.params.radius,
            "trivial": rec.params.trivial,
            "saturated": rec.params.saturated,
            "admissible_nodes": rec.slices.admissible_count(),
            "imaginary_residue": rec.inversion.imaginary_residue,
            "error_hminus1": rec.error,
        }),
    );
    Ok(())
}

fn sweep(p: &Prepared, out: &mut Artifacts) -> Result<(), CliError> {
    let cfg = &p.config.sweep;
    let plan = SweepPlan {
        reference: p.reference.clone(),
        direction: p.potential.clone(),
        levels: cfg.levels.clone(),
        noise_ratio: cfg.noise_ratio,
        seed: stream_seed(p.config.seed, stream::NOISE),
    };
    let sw = stability_sweep(&p.scheme, &plan, &p.reconstruction, &p.modulus).tag("reconstruct")?;
    let mut t = Table::new(&["level", "delta", "error", "rho", "radius", "trivial", "admissible_nodes"]);
    for r in &sw.records {
        t.row([num(r.level), num(r.delta), num(r.err), num(r.rho), num(r.radius), r.trivial.to_string(), r.admissible_nodes.to_string()]);
    }
    out.table("sweep.csv", t);
    let alternate = p.alternate.as_ref().map(|m| sw.refit(m)).transpose().tag("reconstruct")?;
    let pts: Vec<(f64, f64)> = sw.records.iter().map(|r| (r.delta, r.err)).collect();
    out.add(
        "sweep.svg",
        line_chart("Reconstruction error against data distance", "δ", "error", &[Series { name: "error".into(), points: pts }], true, true)
            .into_bytes(),
    );
    out.json(
        "summary.json",
        &json!({
            "modulus": sw.modulus,
            "constant": sw.constant,
            "alternate": p.alternate,
            "alternate_constant": alternate,
            "monotone_within_10_percent": sw.is_monotone(0.1),
        }),
    );
    Ok(())
}

fn semilinear(p: &Prepared, out: &mut Artifacts) -> Result<(), CliError> {
    let a = p.config.nonlinearity.build();
    let opts = p.config.newton.options();
    let (g, u0) = p.config.boundary.build(&p.grid, stream_seed(p.config.seed, stream::BOUNDARY));
    let sol = semilinear_solve(&p.scheme, &a, &g, u0.as_deref(), &opts).tag("semilinear")?;
    if a.check_monotone_class(1.0 + sol.field.max_abs(), 64).is_ok() {
        check_range(&sol.field, &g, u0.as_deref(), 1e-8).tag("semilinear")?;
    }
    if let Some(c) = p.config.newton.a_priori {
        check_a_priori(&sol.field, c).tag("semilinear")?;
    }
    let flux = neumann_trace(&sol.field).tag("semilinear")?;
    let h = smooth_boundary_data(&p.grid, &mut ChaCha8Rng::seed_from_u64(stream_seed(p.config.seed, stream::PROBE)));
    let fd = frechet_fd_check(&p.scheme, &a, &g, u0.as_deref(), &h, &p.config.newton.fd_eps, &opts).tag("semilinear")?;
    out.table("solution.csv", field_table(&sol.field));
    out.table("flux.csv", boundary_table(&flux));
    let mut t = Table::new(&["eps", "error"]);
    for (e, r) in fd.eps.iter().zip(&fd.errors) {
        t.row([num(*e), num(*r)]);
    }
    out.table("frechet_fd.csv", t);
    let pts = fd.eps.iter().copied().zip(fd.errors.iter().copied()).collect();
    out.add(
        "frechet_fd.svg",
        line_chart("Finite-difference defect of the linearized map", "ε", "defect", &[Series { name: "defect".into(), points: pts }], true, true)
            .into_bytes(),
    );
    out.json(
        "summary.json",
        &json!({
            "nonlinearity": a.name(),
            "max_abs_u": sol.field.max_abs(),
            "max_newton_iterations": sol.iterations.iter().max(),
            "max_residual": sol.max_residual,
            "fd_slope": fd.slope,
        }),
    );
    Ok(())
}

fn recovery(p: &Prepared, out: &mut Artifacts) -> Result<(), CliError> {
    let axes = &p.config.recovery;
    let a = p.config.nonlinearity.build();
    let reference = p.config.reference_nonlinearity.build();
    let cfg = RecoveryConfig { reconstruction: p.reconstruction.clone(), window: axes.window, lambda: axes.lambda };
    let table = recover_nonlinearity(&p.scheme, &a, &reference, &axes.levels, &p.grid, &cfg, &p.config.newton.options())
        .tag("semilinear")?;
    let mut t = Table::new(&[
        "level",
        "delta",
        "slope_difference",
        "window_sensitivity",
        "slope",
        "true_slope",
        "value",
        "true_value",
    ]);
    for r in &table.rows {
        t.row([
            num(r.level),
            num(r.delta),
            num(r.slope_difference),
            num(r.window_sensitivity),
            num(r.slope),
            num(r.true_slope),
            num(r.value),
            num(r.true_value),
        ]);
    }
    out.table("recovery.csv", t);
    let series = [
        Series { name: "recovered a".into(), points: table.rows.iter().map(|r| (r.level, r.value)).collect() },
        Series { name: "true a".into(), points: table.rows.iter().map(|r| (r.level, r.true_value)).collect() },
    ];
    out.add("recovery.svg", line_chart("Recovered nonlinearity", "u", "a(u)", &series, false, false).into_bytes());
    out.json("summary.json", &json!({ "sup_error": table.sup_error, "max_delta": table.max_delta }));
    Ok(())
}
