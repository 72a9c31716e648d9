use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use ocplab::defaults::{self, Tolerances};
use ocplab::dissipativity::{check_coercivity, check_differential, CoercivityVerdict, DissipationGrid, RefineOptions};
use ocplab::dsl::{storage_from_expr, ProblemConfig};
use ocplab::horizon::{default_challengers, pattern_preservation_report, PreservationVerdict, SweepOptions};
use ocplab::pmp::{costate_integrate, switching_function, verify_extremal, SwitchingOptions, VerifyOptions};
use ocplab::problem::Problem;
use ocplab::problems;
use ocplab::regulator::{qr_horizon_experiment, riccati_finite, QROptions, QRProblem};
use ocplab::solvers::{log_to_csv, solve_direct, solve_switching_times, DirectOptions, PatternTemplate, SolveOptions};
use ocplab::Error;

use crate::artifacts::{join, steps_csv, OutDir, Summary};
use crate::CommonArgs;

pub enum Status {
    Success,
    /// The run finished but its verdict rejects the hypothesis being checked.
    Rejected,
}

fn load_problem(args: &CommonArgs) -> Result<Problem> {
    let mut problem = match (&args.problem, &args.config) {
        (_, Some(path)) => load_config(path)?,
        (Some(name), None) if problems::BUILTIN_NAMES.contains(&name.as_str()) => problems::builtin(name)?,
        (Some(name), None) if Path::new(name).is_file() => load_config(Path::new(name))?,
        (Some(name), None) => bail!(Error::UnknownProblem(name.clone())),
        (None, None) => bail!("either --problem or --config is required"),
    };
    if let Some(seed) = args.seed {
        problem.seed = seed;
    }
    if let Some(overrides) = &args.tol {
        problem.tolerances = apply_tolerances(problem.tolerances, overrides)?;
    }
    if let Some(h) = &args.horizons {
        if h.is_empty() || h.windows(2).any(|w| w[1] <= w[0]) || h.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            bail!("--horizons must be positive and strictly increasing");
        }
        problem.horizons = h.clone();
    }
    if let Some(src) = &args.template {
        let template: PatternTemplate = src.parse().with_context(|| format!("--template {src:?}"))?;
        problem.template = Some(template);
    }
    Ok(problem)
}

fn load_config(path: &Path) -> Result<Problem> {
    let cfg = ProblemConfig::from_path(path).with_context(|| format!("config {}", path.display()))?;
    cfg.build().with_context(|| format!("config {}", path.display()))
}

fn apply_tolerances(mut tol: Tolerances, overrides: &str) -> Result<Tolerances> {
    if let Ok(v) = overrides.trim().parse::<f64>() {
        tol.opt = positive("tol", v)?;
        return Ok(tol);
    }
    for pair in overrides.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = pair.split_once('=').ok_or_else(|| anyhow!("--tol entry {pair:?} is not key=value"))?;
        let v = positive(key, value.trim().parse::<f64>().with_context(|| format!("--tol {key}"))?)?;
        let slot = match key.trim() {
            "rtol" => &mut tol.rtol,
            "atol" => &mut tol.atol,
            "quad" => &mut tol.quad,
            "opt" => &mut tol.opt,
            "conv" => &mut tol.conv,
            "singular" => &mut tol.singular,
            "margin" => &mut tol.margin,
            "gtol" => &mut tol.gtol,
            other => bail!("unknown tolerance key {other:?}"),
        };
        *slot = v;
    }
    Ok(tol)
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        bail!("tolerance {key} must be positive, got {v}")
    }
}

fn solve_options(problem: &Problem, args: &CommonArgs) -> SolveOptions {
    SolveOptions {
        seed: problem.seed,
        max_iters: args.max_iters.unwrap_or(defaults::MAX_ITERS),
        tol: problem.tolerances.opt,
        ..SolveOptions::default()
    }
}

fn direct_options(problem: &Problem, args: &CommonArgs) -> DirectOptions {
    DirectOptions {
        max_iters: args.max_iters.unwrap_or(defaults::MAX_ITERS),
        gtol: problem.tolerances.gtol,
        initial: None,
    }
}

fn header(summary: &mut Summary, command: &str, problem: &Problem) {
    summary.put("command", command);
    summary.put("problem", &problem.name);
    summary.put("x0", join(&problem.x0));
    summary.put("seed", problem.seed);
}

pub fn certify(args: &CommonArgs, invocation: &[String]) -> Result<Status> {
    let problem = load_problem(args)?;
    let n = problem.state_dim();
    let cert = match (&args.storage, &problem.storage) {
        (Some(src), existing) => {
            let (lower, upper) = existing
                .as_ref()
                .map(|c| (c.domain_lower.clone(), c.domain_upper.clone()))
                .unwrap_or_else(|| (vec![-100.0; n], vec![100.0; n]));
            storage_from_expr(src, &lower, &upper).with_context(|| format!("--storage {src:?}"))?
        }
        (None, Some(c)) => c.clone(),
        (None, None) => bail!("problem {} has no storage candidate; pass --storage", problem.name),
    };
    if cert.state_dim() != n {
        bail!("storage lives in dimension {} but the state has dimension {n}", cert.state_dim());
    }
    let out = OutDir::create(&args.out, "certify", invocation)?;
    let grid = DissipationGrid::for_problem(
        problem.certificate_window,
        problem.system.coefficient_breakpoints(),
        &cert.domain_lower,
        &cert.domain_upper,
        &problem.control_set,
        10.0,
        args.mesh.unwrap_or(defaults::GRID_POINTS),
    );
    let refine = RefineOptions { margin_tol: problem.tolerances.margin, ..RefineOptions::default() };
    let report = check_differential(&cert, &problem.system, &problem.cost, &grid, refine)?;
    let coercivity = check_coercivity(&cert)?;

    let mut summary = Summary::default();
    header(&mut summary, "certify", &problem);
    summary.put("storage", &cert.label);
    summary.lines(&report.to_string());
    summary.put("coercivity", coercivity.verdict);
    out.write("summary.txt", &summary.finish())?;
    let mut table = String::from("radius,min_storage\n");
    for (r, m) in &coercivity.growth_table {
        let _ = writeln!(table, "{r},{m}");
    }
    out.write("coercivity.csv", &table)?;

    let accepted = report.ok && report.nonnegative && coercivity.verdict == CoercivityVerdict::CoerciveEvidence;
    Ok(if accepted { Status::Success } else { Status::Rejected })
}

pub fn solve(args: &CommonArgs, horizon: Option<f64>, direct: bool, invocation: &[String]) -> Result<Status> {
    let problem = load_problem(args)?;
    let t = match horizon.or_else(|| problem.horizons.last().copied()) {
        Some(t) if t.is_finite() && t > 0.0 => t,
        Some(t) => bail!("horizon must be finite and positive, got {t}"),
        None => bail!("problem {} declares no horizons; pass --horizon", problem.name),
    };
    let out = OutDir::create(&args.out, "solve", invocation)?;
    let mut summary = Summary::default();
    header(&mut summary, "solve", &problem);
    summary.put("horizon", t);

    let signal = match (&problem.template, direct) {
        (Some(template), false) => {
            let sol = solve_switching_times(&problem, template, t, &solve_options(&problem, args))?;
            summary.put("method", "switching");
            summary.put("template", template);
            summary.put("cost", sol.cost);
            summary.put("breakpoints", join(sol.interior_breakpoints()));
            summary.put("piece_values", sol.values.iter().map(|v| join(v)).collect::<Vec<_>>().join("|"));
            summary.put("converged", sol.converged);
            if let Some(w) = &sol.warning {
                summary.put("warning", w);
            }
            out.write("log.csv", &log_to_csv(&sol.log))?;
            match verify_extremal(&problem, &sol.signal, t, &VerifyOptions::default()) {
                Ok(rep) => {
                    summary.lines(&rep.to_string());
                    out.write("switching.csv", &rep.switching.to_csv())?;
                }
                Err(Error::Inapplicable(why)) => summary.put("extremal_check", format!("inapplicable: {why}")),
                Err(e) => return Err(e.into()),
            }
            sol.signal
        }
        _ => {
            let mesh = args.mesh.unwrap_or(defaults::MESH);
            let sol = solve_direct(&problem, t, mesh, &direct_options(&problem, args))?;
            summary.put("method", "direct");
            summary.put("mesh", mesh);
            summary.put("cost", sol.cost);
            summary.put("kkt_residual", sol.kkt_residual);
            summary.put("iterations", sol.iterations);
            summary.put("converged", sol.converged);
            summary.put("stalled", sol.stalled);
            out.write("log.csv", &log_to_csv(&sol.log))?;
            out.write("cells.csv", &sol.control.to_csv())?;
            sol.control.to_signal(problem.u_star.clone())?
        }
    };
    out.write("control.csv", &steps_csv(&signal, t))?;
    let traj = problem.simulate(&signal, t)?;
    out.write("trajectory.csv", &traj.to_csv(t / 1000.0))?;
    out.write("summary.txt", &summary.finish())?;
    Ok(Status::Success)
}

pub fn sweep(args: &CommonArgs, invocation: &[String]) -> Result<Status> {
    let problem = load_problem(args)?;
    let template =
        problem.template.clone().ok_or_else(|| anyhow!("problem {} has no template; pass --template", problem.name))?;
    if problem.horizons.is_empty() {
        bail!("problem {} declares no horizons; pass --horizons", problem.name);
    }
    let out = OutDir::create(&args.out, "sweep", invocation)?;
    let t_max = *problem.horizons.last().unwrap();
    let truncations = [t_max / 4.0, t_max / 2.0, t_max];
    let opts = SweepOptions { solve: solve_options(&problem, args), conv_tol: problem.tolerances.conv };
    let challengers = default_challengers(&problem);
    let report =
        pattern_preservation_report(&problem, &template, &problem.horizons, &challengers, &truncations, &opts)?;

    let mut summary = Summary::default();
    header(&mut summary, "sweep", &problem);
    summary.put("horizons", join(&problem.horizons));
    summary.put("truncations", join(&truncations));
    summary.lines(&report.summary());
    out.write("summary.txt", &summary.finish())?;
    out.write("sweep.csv", &report.sweep.to_csv())?;

    let interior = report.sweep.entries.iter().map(|e| e.breakpoints.len()).max().unwrap_or(0);
    let mut taus = String::from("T");
    for j in 1..=interior {
        let _ = write!(taus, ",tau{j}");
    }
    taus.push('\n');
    for e in &report.sweep.entries {
        taus.push_str(&e.horizon.to_string());
        for j in 0..interior {
            taus.push(',');
            if let Some(v) = e.breakpoints.get(j) {
                taus.push_str(&v.to_string());
            }
        }
        taus.push('\n');
    }
    out.write("breakpoints.csv", &taus)?;

    let mut costs = String::from("control,truncation,cost\n");
    let mut rows = Vec::new();
    if let Some(e) = &report.limit_estimate {
        rows.push(("limit", &e.truncated));
    }
    for c in &report.challengers {
        rows.push((c.label.as_str(), &c.estimate.truncated));
    }
    for (label, truncated) in rows {
        for (t, j) in truncated {
            let _ = writeln!(costs, "{label},{t},{j}");
        }
    }
    out.write("costs.csv", &costs)?;
    if let Some(u) = &report.limit {
        out.write("limit_control.csv", &steps_csv(u, t_max))?;
    }

    Ok(if report.verdict == PreservationVerdict::PredictedAndConfirmed { Status::Success } else { Status::Rejected })
}

pub fn qr(args: &CommonArgs, invocation: &[String]) -> Result<Status> {
    let problem = load_problem(args)?;
    if problem.horizons.is_empty() {
        bail!("problem {} declares no horizons; pass --horizons", problem.name);
    }
    let horizons = problem.horizons.clone();
    let qr = match QRProblem::from_problem(problem) {
        Ok(qr) => qr,
        Err(e @ (Error::Inapplicable(_) | Error::InvalidArgument(_))) => {
            eprintln!("not a quadratic regulator: {e}");
            return Ok(Status::Rejected);
        }
        Err(e) => return Err(e.into()),
    };
    let out = OutDir::create(&args.out, "qr", invocation)?;
    let mut opts = QROptions {
        direct: direct_options(&qr.problem, args),
        conv_tol: qr.problem.tolerances.conv,
        ..QROptions::default()
    };
    if let Some(m) = args.mesh {
        opts.cells_per_unit = m as f64;
    }
    let report = qr_horizon_experiment(&qr, &horizons, &opts)?;

    let mut summary = Summary::default();
    header(&mut summary, "qr", &qr.problem);
    summary.put("horizons", join(&horizons));
    summary.put("cells_per_unit", opts.cells_per_unit);
    summary.put("linear", qr.linear.is_some());
    summary.lines(&report.summary());
    out.write("summary.txt", &summary.finish())?;
    out.write("qr.csv", &report.to_csv())?;
    if let Some(sol) = &report.control {
        out.write("control.csv", &sol.control.to_csv())?;
    }
    if let Some(lin) = &qr.linear {
        let t = *horizons.last().unwrap();
        let path = riccati_finite(&lin.a, &lin.b, &lin.q, &qr.r, t, qr.problem.tolerances.rtol)?;
        out.write("riccati.csv", &path.to_csv(1001))?;
    }
    Ok(Status::Success)
}

pub fn figure1(root: &Path, invocation: &[String]) -> Result<Status> {
    let problem = problems::ex42()?;
    let template = problem.template.clone().ok_or_else(|| anyhow!("ex42 has no template"))?;
    let t = 10.0;
    let out = OutDir::create(root, "reproduce-paper", invocation)?;
    let sol = solve_switching_times(&problem, &template, t, &SolveOptions::default())?;
    let traj = problem.simulate(&sol.signal, t)?;
    let costate = costate_integrate(&problem, &traj, &sol.signal, t)?;
    let phi = switching_function(
        &problem,
        &traj,
        &costate,
        &SwitchingOptions { samples: 2001, ..SwitchingOptions::default() },
    )?;

    let mut table = String::from("t,u,x,p,phi\n");
    for (i, &s) in phi.times.iter().enumerate() {
        let _ = writeln!(
            table,
            "{s},{},{},{},{}",
            sol.signal.evaluate(s)[0],
            traj.state_at(s)[0],
            costate.costate_at(s)[0],
            phi.values[0][i]
        );
    }
    out.write("figure1.csv", &table)?;
    out.write("control.csv", &steps_csv(&sol.signal, t))?;
    out.write("switching.csv", &phi.to_csv())?;

    let mut summary = Summary::default();
    summary.put("command", "reproduce-paper");
    summary.put("target", "figure1");
    summary.put("problem", &problem.name);
    summary.put("horizon", t);
    summary.put("template", &template);
    summary.put("breakpoints", join(sol.interior_breakpoints()));
    summary.put("cost", sol.cost);
    for (k, a, b) in &phi.singular_intervals {
        summary.put(&format!("singular_interval_u{}", k + 1), format!("[{a},{b}]"));
    }
    out.write("summary.txt", &summary.finish())?;
    Ok(Status::Success)
}
