//! Dispatch from parsed commands to the numerical modules.
//!
//! CSV columns per command:
//!
//! | command     | columns |
//! |-------------|---------|
//! | `polygon`   | body, mass, phi, theta, x, y, z, w |
//! | `verify`    | body, residual_norm, lambda, circle_residual |
//! | `spectrum`  | k, gamma, phi_eigenvalue, theta_eigenvalue |
//! | `certify`   | name, holds, worst_margin, max_equality_error, checked |
//! | `classify`  | n, alpha, alpha_sq, threshold, verdict, hessian_min_eigenvalue, consistent |
//! | `simulate`  | t, then phi_i, theta_i, p_phi_i, p_theta_i per body, then H, J2, shape_deviation |
//! | `probe`     | t, shape_deviation |
//! | `masses`    | body, phi, mass |
//! | `bifurcate` | theta, alpha_sq, alpha |
//! | `sweep`     | n, alpha, alpha_sq, threshold, verdict, hessian_min_eigenvalue, consistent |

use std::f64::consts::FRAC_PI_2;

use curved_nbody::dynamics::{
    integrate, phase_from_spherical, phase_to_spherical, stability_probe, ProbeDirection,
    SphericalPhase, Termination,
};
use curved_nbody::families::{
    bifurcation_scan, latitude_grid, near_polygon_threshold, solve_masses_within,
};
use curved_nbody::geometry::{min_separation, spherical_to_cartesian, MassVector};
use curved_nbody::potential::{
    equilibrium_residual_cartesian, equilibrium_residual_s1, potential_spherical,
};
use curved_nbody::reduction::{
    classify_stability, linearize_at_y, BlockPart, Manifold, StabilityClassification,
};
use curved_nbody::spectra::{certify_sequences, spectrum_report};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::CliError;
use crate::output::{Cell, Payload, Table};
use crate::scenario::{IntegratorFields, Scenario, ScenarioFile};
use crate::{Command, CommonArgs, DirectionArg, ManifoldArg};

/// A failed command, possibly with output worth keeping (a trajectory cut
/// short near the singular set).
#[derive(Debug)]
pub struct Failure {
    pub partial: Option<Box<Payload>>,
    pub error: CliError,
}

impl<E: Into<CliError>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            partial: None,
            error: e.into(),
        }
    }
}

type Outcome = Result<Payload, Failure>;

pub fn run(command: &Command, common: &CommonArgs) -> Outcome {
    let inputs = scenario_inputs(common)?;
    if let Command::Sweep {
        n_list,
        alpha_grid,
        alpha_min,
        alpha_max,
        alpha_steps,
        manifold,
    } = command
    {
        if !inputs.is_empty() {
            return Err(CliError::Validation(
                "`sweep` takes --n-list and an alpha grid; scenario fields are not used".into(),
            )
            .into());
        }
        let grid = alpha_values(alpha_grid.as_deref(), *alpha_min, *alpha_max, *alpha_steps)?;
        return sweep(n_list, &grid, *manifold);
    }
    let s = inputs.resolve()?;
    match command {
        Command::Polygon => polygon(&s),
        Command::Verify => verify(&s),
        Command::Spectrum => spectrum(&s),
        Command::Certify => certify(&s),
        Command::Classify { manifold } => classify(&s, *manifold),
        Command::Simulate => simulate(&s),
        Command::Probe { epsilon, direction } => probe(&s, *epsilon, *direction),
        Command::Masses { bound } => masses(&s, *bound),
        Command::Bifurcate { points, thetas } => bifurcate(&s, *points, thetas.as_deref()),
        Command::Sweep { .. } => unreachable!("handled above"),
    }
}

/// The scenario file, if any, overlaid with the flags.
pub fn scenario_inputs(common: &CommonArgs) -> Result<ScenarioFile, CliError> {
    let file = match &common.scenario {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            ScenarioFile::from_json(&text)?
        }
        None => ScenarioFile::default(),
    };
    let integrator = (common.dt.is_some()
        || common.t_end.is_some()
        || common.stride.is_some()
        || common.stop_deviation.is_some())
    .then_some(IntegratorFields {
        dt: common.dt,
        t_end: common.t_end,
        sample_stride: common.stride,
        stop_deviation: common.stop_deviation,
    });
    Ok(file.overlay(ScenarioFile {
        n: common.n,
        masses: common.masses.clone(),
        phi: common.phi.clone(),
        theta: common.theta.clone(),
        alpha: common.alpha,
        integrator,
        seed: common.seed,
    }))
}

/// Unit-variant enums serialize to their variant name.
fn variant_name<T: Serialize>(x: &T) -> String {
    match serde_json::to_value(x) {
        Ok(Value::String(s)) => s,
        Ok(v) => v.to_string(),
        Err(e) => e.to_string(),
    }
}

fn to_json<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report types serialize to JSON")
}

fn manifold_of(arg: ManifoldArg) -> Manifold {
    match arg {
        ManifoldArg::S1 => Manifold::S1,
        ManifoldArg::S2 => Manifold::S2,
    }
}

fn polygon(s: &Scenario) -> Outcome {
    let cart = spherical_to_cartesian(&s.config);
    let potential = potential_spherical(&s.masses, &s.config)?;
    let mut table = Table::new(["body", "mass", "phi", "theta", "x", "y", "z", "w"]);
    let mut points = Vec::with_capacity(s.n);
    for (i, q) in cart.points().iter().enumerate() {
        points.push([q[0], q[1], q[2], q[3]]);
        table.push(vec![
            (i + 1).into(),
            s.masses.as_slice()[i].into(),
            s.config.phi()[i].into(),
            s.config.theta()[i].into(),
            q[0].into(),
            q[1].into(),
            q[2].into(),
            q[3].into(),
        ]);
    }
    let json = json!({
        "n": s.n,
        "masses": s.masses.as_slice(),
        "phi": s.config.phi(),
        "theta": s.config.theta(),
        "points": points,
        "potential": potential,
        "min_separation": min_separation(&cart),
    });
    Ok(Payload { json, table })
}

fn verify(s: &Scenario) -> Outcome {
    let cart = spherical_to_cartesian(&s.config);
    let res = equilibrium_residual_cartesian(&s.masses, &cart)?;
    let equatorial = s.config.theta().iter().all(|&t| t == FRAC_PI_2);
    let circle = if equatorial {
        Some(equilibrium_residual_s1(&s.masses, s.config.phi())?)
    } else {
        None
    };
    let norms: Vec<f64> = res.residual_vectors.iter().map(|r| r.norm()).collect();
    let mut table = Table::new(["body", "residual_norm", "lambda", "circle_residual"]);
    for i in 0..s.n {
        table.push(vec![
            (i + 1).into(),
            norms[i].into(),
            res.lambda[i].into(),
            circle.as_ref().map(|c| c[i]).into(),
        ]);
    }
    let json = json!({
        "n": s.n,
        "is_equilibrium": res.is_equilibrium(),
        "max_norm": res.max_norm,
        "residual_norms": norms,
        "lambda": res.lambda,
        "circle_residual": circle,
    });
    Ok(Payload { json, table })
}

fn spectrum(s: &Scenario) -> Outcome {
    s.require_polygon("spectrum")?;
    let report = spectrum_report(s.n)?;
    let mut table = Table::new(["k", "gamma", "phi_eigenvalue", "theta_eigenvalue"]);
    for k in 0..report.gamma.len() {
        table.push(vec![
            k.into(),
            report.gamma[k].into(),
            report.phi_evals[k].into(),
            report.theta_evals[k].into(),
        ]);
    }
    Ok(Payload {
        json: to_json(&report),
        table,
    })
}

fn certify(s: &Scenario) -> Outcome {
    s.require_polygon("certify")?;
    let cert = certify_sequences(s.n)?;
    let mut table = Table::new([
        "name",
        "holds",
        "worst_margin",
        "max_equality_error",
        "checked",
    ]);
    for c in &cert.certificates {
        table.push(vec![
            c.name.as_str().into(),
            c.holds.into(),
            c.worst_margin.into(),
            c.max_equality_error.into(),
            c.checked.into(),
        ]);
    }
    let mut json = to_json(&cert);
    json["all_hold"] = json!(cert.all_hold());
    json["worst_margin"] = json!(cert.worst_margin());
    Ok(Payload { json, table })
}

const CLASSIFICATION_COLUMNS: [&str; 7] = [
    "n",
    "alpha",
    "alpha_sq",
    "threshold",
    "verdict",
    "hessian_min_eigenvalue",
    "consistent",
];

fn classification_row(c: &StabilityClassification) -> Vec<Cell> {
    vec![
        c.n.into(),
        c.alpha.into(),
        (c.alpha * c.alpha).into(),
        c.threshold.into(),
        variant_name(&c.verdict).as_str().into(),
        c.hessian_min_eigenvalue.into(),
        c.consistent.into(),
    ]
}

fn classify(s: &Scenario, manifold: ManifoldArg) -> Outcome {
    s.require_polygon("classify")?;
    let manifold = manifold_of(manifold);
    let c = classify_stability(s.n, s.alpha, manifold)?;
    let lin = linearize_at_y(s.n, s.alpha)?;
    let classes: Vec<Value> = lin
        .eigen_classes
        .iter()
        .filter(|e| manifold == Manifold::S2 || e.part == BlockPart::Circle)
        .map(|e| {
            json!({
                "part": variant_name(&e.part),
                "kind": variant_name(&e.kind),
                "lambda": e.lambda,
                "eigenvalues": e.eigenvalues.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
            })
        })
        .collect();
    let mut table = Table::new(CLASSIFICATION_COLUMNS);
    table.push(classification_row(&c));
    let mut json = to_json(&c);
    json["eigen_classes"] = Value::Array(classes);
    Ok(Payload { json, table })
}

fn simulate(s: &Scenario) -> Outcome {
    let m = s.masses.as_slice();
    let theta = s.config.theta();
    let start = SphericalPhase {
        phi: s.config.phi().to_vec(),
        theta: theta.to_vec(),
        p_phi: (0..s.n)
            .map(|i| m[i] * s.alpha * theta[i].sin().powi(2))
            .collect(),
        p_theta: vec![0.0; s.n],
    };
    let state0 = phase_from_spherical(&s.masses, &start, 0.0)?;
    let record = integrate(&s.masses, &state0, &s.integrator)?;

    let mut headers = vec!["t".to_owned()];
    for i in 1..=s.n {
        headers.extend([
            format!("phi_{i}"),
            format!("theta_{i}"),
            format!("p_phi_{i}"),
            format!("p_theta_{i}"),
        ]);
    }
    headers.extend(["H", "J2", "shape_deviation"].map(String::from));
    let mut table = Table::new(headers);
    let mut samples = Vec::with_capacity(record.samples.len());
    for sample in &record.samples {
        let sp = phase_to_spherical(&sample.state)?;
        let mut row: Vec<Cell> = vec![sample.state.time.into()];
        for i in 0..s.n {
            row.extend([
                sp.phi[i].into(),
                sp.theta[i].into(),
                sp.p_phi[i].into(),
                sp.p_theta[i].into(),
            ]);
        }
        row.extend([
            sample.energy.into(),
            sample.momentum.into(),
            sample.shape_deviation.into(),
        ]);
        table.push(row);
        samples.push(json!({
            "t": sample.state.time,
            "phi": sp.phi,
            "theta": sp.theta,
            "p_phi": sp.p_phi,
            "p_theta": sp.p_theta,
            "H": sample.energy,
            "J2": sample.momentum,
            "shape_deviation": sample.shape_deviation,
        }));
    }
    let json = json!({
        "n": s.n,
        "alpha": s.alpha,
        "masses": m,
        "integrator": to_json(&s.integrator),
        "energy_drift": record.energy_drift,
        "momentum_drift": record.momentum_drift,
        "max_shape_deviation": record.max_shape_deviation,
        "constraint_violation": record.constraint_violation,
        "equator_offset": record.equator_offset,
        "termination": to_json(&record.termination),
        "samples": samples,
    });
    let payload = Payload { json, table };
    match record.check_singularity() {
        Ok(()) => Ok(payload),
        Err(e) => Err(Failure {
            partial: Some(Box::new(payload)),
            error: e.into(),
        }),
    }
}

fn probe(s: &Scenario, epsilon: f64, direction: DirectionArg) -> Outcome {
    s.require_polygon("probe")?;
    let direction = match direction {
        DirectionArg::Unstable => ProbeDirection::UnstableMode,
        DirectionArg::Random => ProbeDirection::RandomShape { seed: s.seed },
    };
    let report = stability_probe(s.n, s.alpha, epsilon, direction, &s.integrator)?;
    let series = report.record.deviation_series();
    let mut table = Table::new(["t", "shape_deviation"]);
    for &(t, d) in &series {
        table.push(vec![t.into(), d.into()]);
    }
    let json = json!({
        "n": report.n,
        "alpha": report.alpha,
        "epsilon": report.epsilon,
        "direction": to_json(&report.direction),
        "predicted_rate": report.predicted_rate,
        "fitted_rate": report.fitted_rate,
        "fit_points": report.fit_points,
        "max_shape_deviation": report.max_shape_deviation,
        "verdict": variant_name(&report.verdict),
        "energy_drift": report.record.energy_drift,
        "momentum_drift": report.record.momentum_drift,
        "termination": to_json(&report.record.termination),
        "deviation": series.iter().map(|&(t, d)| [t, d]).collect::<Vec<_>>(),
    });
    debug_assert!(!matches!(
        report.record.termination,
        Termination::SingularityApproach { .. }
    ));
    Ok(Payload { json, table })
}

fn masses(s: &Scenario, bound: f64) -> Outcome {
    if s.config.theta().iter().any(|&t| t != FRAC_PI_2) {
        return Err(CliError::Validation(
            "`masses` solves for bodies on the equator; remove theta".into(),
        )
        .into());
    }
    if s.masses.as_slice().iter().any(|&m| m != 1.0) {
        return Err(
            CliError::Validation("`masses` computes the masses; do not pass them".into()).into(),
        );
    }
    let phi = s.config.phi();
    let solved = solve_masses_within(phi, bound)?;
    let threshold = near_polygon_threshold(phi, &MassVector::new(solved.masses.clone())?)?;
    let mut table = Table::new(["body", "phi", "mass"]);
    for (i, (&p, &m)) in phi.iter().zip(&solved.masses).enumerate() {
        table.push(vec![(i + 1).into(), p.into(), m.into()]);
    }
    let mut json = to_json(&solved);
    json["phi"] = json!(phi);
    json["critical_alpha_sq"] = json!(threshold);
    Ok(Payload { json, table })
}

fn bifurcate(s: &Scenario, points: usize, thetas: Option<&[f64]>) -> Outcome {
    s.require_polygon("bifurcate")?;
    let grid = match thetas {
        Some(t) => t.to_vec(),
        None if points == 0 => {
            return Err(CliError::Validation("--points must be at least 1".into()).into())
        }
        None => latitude_grid(points),
    };
    let scan = bifurcation_scan(s.n, &grid)?;
    let mut table = Table::new(["theta", "alpha_sq", "alpha"]);
    for p in &scan.points {
        table.push(vec![p.theta.into(), p.alpha_sq.into(), p.alpha().into()]);
    }
    Ok(Payload {
        json: to_json(&scan),
        table,
    })
}

fn alpha_values(
    grid: Option<&[f64]>,
    min: Option<f64>,
    max: Option<f64>,
    steps: Option<usize>,
) -> Result<Vec<f64>, CliError> {
    let values = match (grid, min, max, steps) {
        (Some(g), None, None, None) => g.to_vec(),
        (None, Some(lo), Some(hi), Some(k)) if k >= 2 && lo <= hi => (0..k)
            .map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
            .collect(),
        (None, Some(lo), Some(_), Some(1)) => vec![lo],
        _ => return Err(CliError::Validation(
            "give either --alpha-grid or all of --alpha-min <= --alpha-max and --alpha-steps >= 1"
                .into(),
        )),
    };
    if values.is_empty() || values.iter().any(|a| !a.is_finite()) {
        return Err(CliError::Validation(
            "alpha grid must be non-empty and finite".into(),
        ));
    }
    Ok(values)
}

fn sweep(n_list: &[usize], grid: &[f64], manifold: ManifoldArg) -> Outcome {
    let manifold = manifold_of(manifold);
    let cells: Vec<(usize, f64)> = n_list
        .iter()
        .flat_map(|&n| grid.iter().map(move |&a| (n, a)))
        .collect();
    // par_iter().collect() keeps grid order whatever the completion order
    let results: Vec<_> = cells
        .par_iter()
        .map(|&(n, a)| classify_stability(n, a, manifold))
        .collect();
    let rows = results
        .into_iter()
        .collect::<curved_nbody::Result<Vec<_>>>()?;
    let mut table = Table::new(CLASSIFICATION_COLUMNS);
    let mut json_cells = Vec::with_capacity(rows.len());
    for c in &rows {
        table.push(classification_row(c));
        let mut v = to_json(c);
        v["alpha_sq"] = json!(c.alpha * c.alpha);
        json_cells.push(v);
    }
    let json = json!({
        "manifold": variant_name(&manifold),
        "n_list": n_list,
        "alpha_grid": grid,
        "cells": json_cells,
    });
    Ok(Payload { json, table })
}
