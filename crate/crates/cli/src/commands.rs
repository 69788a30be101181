//! Subcommand pipelines.

use kamlab_core::cost::{build_cost_matrix, BuildReport, CostMatrix, OptimizerParams};
use kamlab_core::example::{
    bound_floor, discontinuity_demo, lower_bound, phase_portrait, ExampleParams, LowerBound, FLOOR_SWEEP,
};
use kamlab_core::expr::Expr;
use kamlab_core::geometry::{
    chow_control, verify_bracket_expansion, word_field, word_fields, BracketWord, TestFunction,
};
use kamlab_core::grid::Grid;
use kamlab_core::systems::{
    catalog_system, check_conditions, ControlAffineSystem, Lagrangian, MaximizerSearch, StateSpace, VectorField,
};
use kamlab_core::transport::{alpha_t, mather_support_check, solve_ot, DiscreteMeasure};
use kamlab_core::weakkam::{
    critical_value_report, min_mean_cycle, verify_h_uniqueness, viscosity_residual, weak_kam_potential,
    PotentialField,
};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::output::{fmt_f64, read_matrix_csv, Artifacts};
use crate::{CliError, Command, Resolved};

pub fn dispatch(cmd: Command, r: &Resolved, out: &mut Artifacts) -> Result<(), CliError> {
    match cmd {
        Command::Cost => cost(r, out).map(|_| ()),
        Command::Critical => critical(r, out),
        Command::Potential => potential(r, out),
        Command::Transport => transport(r, out),
        Command::Example => example(r, out),
        Command::Brackets => brackets(r, out),
        Command::Check => check(r, out),
    }
}

pub fn build_system(cfg: &RunConfig) -> Result<ControlAffineSystem, CliError> {
    let s = &cfg.system;
    if s.controls.is_empty() {
        return Ok(catalog_system(&s.catalog)?);
    }
    let space = match s.space.as_str() {
        "torus" => StateSpace::torus(s.periods.clone())?,
        "box" => StateSpace::boxed(s.lower.clone(), s.upper.clone())?,
        other => {
            return Err(CliError::Validation(format!(
                "system.space must be \"torus\" or \"box\", got \"{other}\""
            )))
        }
    };
    let m = space.dim();
    let field = |comps: &[String], key: &str| -> Result<VectorField, CliError> {
        if comps.len() != m {
            return Err(CliError::Validation(format!("{key} needs {m} components, got {}", comps.len())));
        }
        let refs: Vec<&str> = comps.iter().map(String::as_str).collect();
        Ok(VectorField::parse(&refs)?)
    };
    let drift = if s.drift.is_empty() {
        VectorField::zero(m)
    } else {
        field(&s.drift, "system.drift")?
    };
    let controls = s
        .controls
        .iter()
        .map(|c| field(c, "system.controls"))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ControlAffineSystem::new("inline", space, drift, controls)?)
}

pub fn build_lagrangian(cfg: &RunConfig, sys: &ControlAffineSystem) -> Result<Lagrangian, CliError> {
    let l = &cfg.lagrangian;
    let (m, n) = (sys.state_dim(), sys.control_dim());
    let offset = || Expr::parse_state(&l.offset, m);
    Ok(match l.kind.as_str() {
        "pure-quadratic" => Lagrangian::pure_quadratic(),
        "quadratic-plus" => Lagrangian::quadratic_plus(offset()?, m, n),
        "state-weighted" => {
            let weight = l
                .weight
                .iter()
                .map(|row| row.iter().map(|e| Expr::parse_state(e, m)).collect())
                .collect::<Result<Vec<Vec<Expr>>, _>>()?;
            Lagrangian::state_weighted(weight, offset()?, m)?
        }
        "general" => Lagrangian::general(
            Expr::parse_state_control(&l.expr, m, n)?,
            m,
            n,
            MaximizerSearch {
                bound: l.search_bound,
                cap: l.search_cap,
            },
        )?,
        other => {
            return Err(CliError::Validation(format!(
                "lagrangian.kind must be one of pure-quadratic, quadratic-plus, state-weighted, general; got \"{other}\""
            )))
        }
    })
}

fn build_grid(cfg: &RunConfig, sys: &ControlAffineSystem) -> Result<Grid, CliError> {
    let m = sys.state_dim();
    let counts = match cfg.grid.counts.as_slice() {
        [c] => vec![*c; m],
        cs => cs.to_vec(),
    };
    Ok(Grid::uniform(&sys.space, &counts)?)
}

struct Model {
    system: ControlAffineSystem,
    lagrangian: Lagrangian,
}

fn matrix_rows(c: &CostMatrix) -> impl Iterator<Item = Vec<String>> + '_ {
    (0..c.n()).map(move |i| c.row(i).iter().map(|v| fmt_f64(*v)).collect())
}

#[derive(Serialize)]
struct MatrixSidecar<'a> {
    system: &'a str,
    lagrangian: &'static str,
    grid_shape: &'a [usize],
    grid_points: &'a [Vec<f64>],
    t: f64,
    seed: u64,
    optimizer: &'a OptimizerParams,
    report: &'a BuildReport,
}

fn cost(r: &Resolved, out: &mut Artifacts) -> Result<(CostMatrix, Model), CliError> {
    let cfg = &r.config;
    let system = build_system(cfg)?;
    let lagrangian = build_lagrangian(cfg, &system)?;
    let grid = build_grid(cfg, &system)?;
    let params = cfg.optimizer.params(r.seed);
    let (c, report) = build_cost_matrix(&system, &lagrangian, &grid, cfg.cost.t, &params)?;
    out.csv("cost_matrix.csv", &[], matrix_rows(&c))?;
    out.json(
        "cost_matrix.json",
        &MatrixSidecar {
            system: &system.name,
            lagrangian: lagrangian.kind_name(),
            grid_shape: grid.shape(),
            grid_points: grid.points(),
            t: cfg.cost.t,
            seed: r.seed,
            optimizer: &params,
            report: &report,
        },
    )?;
    println!(
        "cost matrix {n}x{n} at t = {}: {} unreached entries, max endpoint residual {:e}",
        cfg.cost.t,
        report.unreached.len(),
        report.max_residual,
        n = c.n()
    );
    Ok((c, Model { system, lagrangian }))
}

/// The configured matrix, or one built from the system (also written out).
fn matrix(r: &Resolved, out: &mut Artifacts) -> Result<(CostMatrix, Option<Model>), CliError> {
    match &r.config.matrix {
        Some(m) => {
            let rows = match &m.csv {
                Some(p) => read_matrix_csv(&r.base.join(p))?,
                None => m.rows.clone(),
            };
            Ok((CostMatrix::from_rows(rows, m.t)?, None))
        }
        None => cost(r, out).map(|(c, model)| (c, Some(model))),
    }
}

fn critical(r: &Resolved, out: &mut Artifacts) -> Result<(), CliError> {
    let (c, _) = matrix(r, out)?;
    let cfg = &r.config.critical;
    let report = critical_value_report(&c, cfg.doublings)?;
    let agreement = (report.h_karp - report.h_alpha).abs();
    let agrees = agreement <= cfg.agreement_tol;
    out.json(
        "critical_report.json",
        &json!({
            "report": report,
            "karp_alpha_difference": agreement,
            "agreement_tol": cfg.agreement_tol,
            "agrees": agrees,
        }),
    )?;
    println!(
        "h_karp = {}\nh_alpha = {}\nh_subadditive = {} (window {})",
        report.h_karp, report.h_alpha, report.h_subadditive, report.subadditive_window
    );
    if !agrees {
        return Err(CliError::Check(format!(
            "|h_karp - h_alpha| = {agreement:e} exceeds critical.agreement_tol = {:e}",
            cfg.agreement_tol
        )));
    }
    Ok(())
}

fn potential(r: &Resolved, out: &mut Artifacts) -> Result<(), CliError> {
    let (c, model) = matrix(r, out)?;
    let cfg = &r.config.potential;
    let t = c.t();
    let ht = min_mean_cycle(&c)?.value;
    let sol = weak_kam_potential(&c, ht, &PotentialField::zeros(c.n()), cfg.tail)?;
    let uniqueness = verify_h_uniqueness(&c, sol.potential.values(), ht / t)?;
    let viscosity = match (&model, cfg.viscosity) {
        (Some(m), true) => Some(viscosity_residual(&m.system, &m.lagrangian, &c, &sol.potential, ht / t)?),
        _ => None,
    };
    let grid = c.grid();
    let dim = grid.points().first().map_or(0, Vec::len);
    let mut header: Vec<String> = if model.is_some() {
        (1..=dim).map(|i| format!("x{i}")).collect()
    } else {
        vec!["node".into()]
    };
    header.push("value".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = grid.points().iter().zip(sol.potential.values()).map(|(p, v)| {
        let mut row: Vec<String> = p.iter().map(|x| fmt_f64(*x)).collect();
        row.push(fmt_f64(*v));
        row
    });
    out.csv("potential.csv", &header, rows)?;
    out.json(
        "potential.json",
        &json!({
            "h": ht / t,
            "ht": ht,
            "t": t,
            "residual": sol.residual,
            "residual_tol": cfg.residual_tol,
            "iterations": sol.iterations,
            "method": sol.method,
            "anchor": sol.potential.anchor(),
            "uniqueness": uniqueness,
            "viscosity": viscosity,
        }),
    )?;
    println!(
        "h = {}\nfixed-point residual = {:e} ({})\nuniqueness gap = {:e}",
        ht / t,
        sol.residual,
        sol.method,
        uniqueness.gap
    );
    if let Some(v) = &viscosity {
        println!(
            "viscosity residual = {:e} (skipped {:.1}%)",
            v.max_residual,
            100.0 * v.skipped_fraction
        );
    }
    if sol.residual > cfg.residual_tol {
        return Err(CliError::Check(format!(
            "fixed-point residual {:e} exceeds potential.residual_tol = {:e}",
            sol.residual, cfg.residual_tol
        )));
    }
    Ok(())
}

fn measure(w: &[f64], n: usize, key: &str) -> Result<DiscreteMeasure, CliError> {
    if w.is_empty() {
        return Ok(DiscreteMeasure::uniform(n));
    }
    if w.len() != n {
        return Err(CliError::Validation(format!("{key} has {} weights for {n} points", w.len())));
    }
    DiscreteMeasure::new(w.to_vec()).map_err(|e| CliError::Validation(format!("{key}: {e}")))
}

fn plan_rows(plan: &kamlab_core::transport::TransportPlan) -> impl Iterator<Item = Vec<String>> {
    plan.support()
        .into_iter()
        .map(|(i, j, w)| vec![i.to_string(), j.to_string(), fmt_f64(w)])
}

fn transport(r: &Resolved, out: &mut Artifacts) -> Result<(), CliError> {
    let (c, _) = matrix(r, out)?;
    let cfg = &r.config.transport;
    let n = c.n();
    let mu = measure(&cfg.mu, n, "transport.mu")?;
    let nu = measure(&cfg.nu, n, "transport.nu")?;
    let sol = solve_ot(&c, &mu, &nu)?;
    out.csv("plan.csv", &["i", "j", "weight"], plan_rows(&sol.plan))?;
    out.csv(
        "duals.csv",
        &["index", "f", "g"],
        (0..n).map(|i| vec![i.to_string(), fmt_f64(sol.dual.f[i]), fmt_f64(sol.dual.g[i])]),
    )?;
    let mut summary = json!({
        "primal": sol.primal,
        "dual": sol.dual_value,
        "gap": sol.gap,
        "gap_tol": cfg.gap_tol,
        "slackness_violation": sol.slackness_violation,
        "dual_feasibility_violation": sol.dual.feasibility_violation(&c),
        "pivots": sol.pivots,
    });
    println!("primal = {}\ndual = {}\ngap = {:e}", sol.primal, sol.dual_value, sol.gap);
    if cfg.stationary {
        let a = alpha_t(&c)?;
        out.csv("stationary_plan.csv", &["i", "j", "weight"], plan_rows(&a.plan))?;
        // the support check needs a finite fixed point, which may not exist
        let mather = weak_kam_potential(&c, a.mean, &PotentialField::zeros(n), 1.0)
            .and_then(|g| mather_support_check(&a.plan, g.potential.values(), a.mean, &c));
        summary["stationary"] = json!({
            "alpha": a.value,
            "mean": a.mean,
            "cycle": a.cycle,
            "policy_iterations": a.policy_iterations,
            "mather_violation": mather.as_ref().ok(),
            "mather_error": mather.as_ref().err().map(|e| e.to_string()),
        });
        println!("alpha = {}", a.value);
    }
    out.json("transport.json", &summary)?;
    let worst = sol.gap.max(sol.slackness_violation);
    if worst > cfg.gap_tol {
        return Err(CliError::Check(format!(
            "duality gap or slackness {worst:e} exceeds transport.gap_tol = {:e}",
            cfg.gap_tol
        )));
    }
    Ok(())
}

fn example(r: &Resolved, out: &mut Artifacts) -> Result<(), CliError> {
    let cfg = &r.config.example;
    let params = ExampleParams::new(cfg.k, cfg.p2)?;
    let portrait = phase_portrait(&params, &cfg.levels, cfg.resolution, cfg.x1_range, cfg.p1_range)?;
    let mut rows = Vec::new();
    for lvl in &portrait {
        for (curve, line) in lvl.polylines.iter().enumerate() {
            for p in line {
                rows.push(vec![fmt_f64(lvl.level), curve.to_string(), fmt_f64(p[0]), fmt_f64(p[1])]);
            }
        }
    }
    out.csv("portrait.csv", &["level", "curve", "x1", "p1"], rows)?;
    let (lo, hi, samples) = FLOOR_SWEEP;
    let floor = bound_floor(cfg.k, lo, hi, samples)?;
    let bound_row = |p2: f64, b: &LowerBound| {
        vec![cfg.k.to_string(), fmt_f64(p2), fmt_f64(b.area), fmt_f64(b.escape), fmt_f64(b.combined)]
    };
    out.csv(
        "bounds.csv",
        &["k", "p2", "area", "escape", "combined"],
        floor.samples.iter().map(|(p2, b)| bound_row(*p2, b)),
    )?;
    let at_p2 = lower_bound(cfg.k, cfg.p2)?;
    let mut demo = Vec::new();
    if !cfg.deltas.is_empty() {
        let opt = OptimizerParams {
            segments: cfg.segments,
            restarts: cfg.restarts,
            seed: r.seed,
            ..r.config.optimizer.params(r.seed)
        };
        for &k in &cfg.demo_k {
            demo.extend(discontinuity_demo(k, &cfg.deltas, &opt)?);
        }
        out.csv(
            "demo.csv",
            &["k", "delta", "cost", "bound"],
            demo.iter()
                .map(|d| vec![d.k.to_string(), fmt_f64(d.delta), fmt_f64(d.cost), fmt_f64(d.bound)]),
        )?;
    }
    out.json(
        "example.json",
        &json!({
            "k": cfg.k,
            "p2": cfg.p2,
            "kappa": params.kappa(),
            "lower_bound": at_p2,
            "bound_floor": floor.floor,
            "floor_argmin_p2": floor.argmin_p2,
            "portrait_curves": portrait.iter().map(|l| json!({"level": l.level, "curves": l.polylines.len()})).collect::<Vec<_>>(),
            "demo": demo,
        }),
    )?;
    println!(
        "kappa = {}\nlower bound at p2 = {}: area {}, escape {}, combined {}\nbound floor over p2 < 0: {}",
        params.kappa(),
        cfg.p2,
        at_p2.area,
        at_p2.escape,
        at_p2.combined,
        floor.floor
    );
    for d in &demo {
        println!("demo k={} delta={}: cost {} (bound floor {})", d.k, d.delta, d.cost, d.bound);
    }
    Ok(())
}

fn brackets(r: &Resolved, out: &mut Artifacts) -> Result<(), CliError> {
    let cfg = &r.config.brackets;
    let sys = build_system(&r.config)?;
    let fields = &sys.controls;
    let channels = fields.len();
    let m = sys.state_dim();
    let point = if cfg.point.is_empty() { vec![0.0; m] } else { cfg.point.clone() };
    if point.len() != m {
        return Err(CliError::Validation(format!("brackets.point needs {m} coordinates")));
    }
    if cfg.axis.is_some_and(|a| a >= m) {
        return Err(CliError::Validation(format!("brackets.axis must be below {m}")));
    }
    let words: Vec<BracketWord> = if cfg.words.is_empty() {
        word_fields(fields, cfg.max_len).into_iter().map(|(w, _)| w).collect()
    } else {
        cfg.words
            .iter()
            .map(|w| {
                if w.contains(&0) {
                    return Err(CliError::Validation("brackets.words use 1-based channels".into()));
                }
                BracketWord::with_max_len(w.iter().map(|i| i - 1).collect(), channels, cfg.max_len.max(w.len()))
                    .map_err(|e| CliError::Validation(format!("brackets.words: {e}")))
            })
            .collect::<Result<_, _>>()?
    };
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    let mut failures = Vec::new();
    for word in &words {
        let symbolic = word_field(fields, word).eval(&point);
        let axis = cfg.axis.unwrap_or_else(|| {
            (0..m)
                .max_by(|&a, &b| symbolic[a].abs().total_cmp(&symbolic[b].abs()))
                .unwrap_or(0)
        });
        let expected = symbolic[axis];
        // 1-based, as in the config
        let label = format!(
            "({})",
            word.indices().iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(",")
        );
        if expected.abs() < 1e-12 {
            summary.push(json!({"word": label, "axis": axis, "symbolic": symbolic, "status": "zero-bracket"}));
            continue;
        }
        let schedule = chow_control(word, 1.0, channels)?;
        let fit = match verify_bracket_expansion(fields, &schedule, &point, TestFunction::Coordinate { axis }, &cfg.epsilons) {
            Ok(f) => f,
            Err(e @ kamlab_core::Error::IndeterminateExpansion { .. }) => {
                summary.push(json!({"word": label, "axis": axis, "symbolic": symbolic, "status": "indeterminate", "detail": e.to_string()}));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        for (eps, delta) in &fit.rows {
            rows.push(vec![
                label.clone(),
                fmt_f64(*eps),
                fmt_f64(*delta),
                fmt_f64(fit.slope),
                fmt_f64(fit.coefficient),
            ]);
        }
        let slope_err = (fit.slope - word.len() as f64).abs();
        let coef_err = ((fit.coefficient - expected) / expected).abs();
        let ok = slope_err <= cfg.slope_tol && coef_err <= cfg.coefficient_tol;
        if !ok {
            failures.push(label.clone());
        }
        println!(
            "{label}: slope {:.4} (length {}), coefficient {:.6} vs bracket {:.6} [{}]",
            fit.slope,
            word.len(),
            fit.coefficient,
            expected,
            if ok { "ok" } else { "off" }
        );
        summary.push(json!({
            "word": label, "axis": axis, "symbolic": symbolic, "status": if ok { "ok" } else { "off" },
            "slope": fit.slope, "slope_error": slope_err, "coefficient": fit.coefficient, "coefficient_error": coef_err,
        }));
    }
    out.csv(
        "brackets.csv",
        &["word", "epsilon", "endpoint_delta", "fitted_slope", "fitted_coefficient"],
        rows,
    )?;
    out.json("brackets.json", &json!({"point": point, "words": summary}))?;
    if !failures.is_empty() {
        return Err(CliError::Check(format!("bracket fits outside tolerance for {failures:?}")));
    }
    Ok(())
}

/// The exponent `k` of the `x1^k` control when the system is the
/// two-dimensional example family.
fn example_exponent(name: &str) -> Option<u32> {
    name.strip_prefix("paper-example-k")?.parse().ok()
}

fn check(r: &Resolved, out: &mut Artifacts) -> Result<(), CliError> {
    let cfg = &r.config;
    let sys = build_system(cfg)?;
    let lag = build_lagrangian(cfg, &sys)?;
    let m = sys.state_dim();
    let samples = if sys.space.is_torus() { cfg.check.samples.max(1) } else { cfg.check.samples.max(2) };
    let grid = Grid::uniform(&sys.space, &vec![samples; m])?;
    let rep = check_conditions(&sys, &lag, grid.points(), cfg.check.k_max)?;
    out.json("conditions.json", &json!({"system": sys.name, "lagrangian": lag.kind_name(), "report": rep}))?;
    let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.6}"));
    println!("system: {} (state dimension {}, control fields {})", sys.name, m, sys.control_dim());
    println!("lower growth: {}", rep.lower_growth.label());
    println!("upper growth: {}", rep.upper_growth.label());
    println!("state derivative: {}", rep.state_derivative.label());
    println!("hessian: {}", rep.hessian.label());
    let three = rep.three_generating.is_satisfied();
    match example_exponent(&sys.name) {
        Some(k) => println!("3-generating: {three} (exponent {k})"),
        None => println!("3-generating: {three}"),
    }
    match rep.generating_order {
        Some(k) => println!("generating order: {k}"),
        None => println!("generating order: > {}", rep.k_max),
    }
    let c = &rep.constants;
    println!(
        "constants: c1 {} c2 {} c3 {} k1 {} k2 {} q {} p {}",
        opt(c.c1),
        opt(c.c2),
        opt(c.c3),
        opt(c.k1),
        opt(c.k2),
        opt(c.q),
        opt(c.p)
    );
    if let Some(f) = rep.exponent_case_feasible {
        println!("exponent case feasible: {f}");
    }
    Ok(())
}
