use std::io::{self, Write};
use std::path::Path;

use jump_kolmogorov::feller::{ck_residual, regularity_defect, split_defect, Scheme};
use jump_kolmogorov::kolmogorov::{
    backward_residual, forward_integral_residual, forward_residual, forward_rhs_terms, minimal_integral_residual,
    ArgMax, EquationId, ResidualReport,
};
use jump_kolmogorov::models::{build_model, ModelSpec, FAMILIES};
use jump_kolmogorov::qfunction::{check_assumptions, extend_to_halfline, Assumption, AssumptionReport};
use jump_kolmogorov::simulate::{mc_estimate, McOptions};
use jump_kolmogorov::{Error, QModel, SeriesOptions, StateSet, TimeGrid, Truncation};
use thiserror::Error as ThisError;

use crate::output;
use crate::{CheckArgs, Common, Format, SeriesArgs, SimulateArgs, SolveArgs, VerifyArgs};

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(
                Error::NonConvergence { .. }
                | Error::Divergence { .. }
                | Error::RootFinding { .. }
                | Error::Instability { .. }
                | Error::NoJump { .. },
            ) => 2,
            _ => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Exit statuses besides errors.
pub const PASS: i32 = 0;
pub const RESIDUAL_FAILURE: i32 = 3;

fn load_model(common: &Common) -> Result<QModel> {
    let path = Path::new(&common.model);
    let spec = if path.exists() {
        ModelSpec::load(path)?
    } else if FAMILIES.contains(&common.model.as_str()) {
        ModelSpec::new(common.model.as_str())
    } else {
        return Err(CliError::Usage(format!(
            "`{}` is neither a model file nor a catalog family ({})",
            common.model,
            FAMILIES.join(", ")
        )));
    };
    Ok(build_model(&spec)?)
}

fn time_grid(common: &Common) -> Result<TimeGrid> {
    match (&common.t_grid, common.t) {
        (Some(spec), _) => {
            let grid = TimeGrid::parse_spec(spec)?;
            if grid.start() != common.u {
                return Err(CliError::Usage(format!("grid starts at {} but --u is {}", grid.start(), common.u)));
            }
            Ok(grid)
        }
        (None, Some(t)) => Ok(TimeGrid::uniform(common.u, t, common.h)?),
        (None, None) => Err(CliError::Usage("one of --t or --t-grid is required".into())),
    }
}

fn truncation(common: &Common) -> Result<Truncation> {
    if common.trunc == 0 {
        return Err(CliError::Usage("--trunc must be positive".into()));
    }
    if common.x >= common.trunc {
        return Err(CliError::Usage(format!("start state {} lies outside --trunc {}", common.x, common.trunc)));
    }
    Ok(Truncation::new(common.trunc))
}

fn series_options(s: &SeriesArgs) -> SeriesOptions {
    SeriesOptions { eps: s.eps, max_terms: s.max_terms, summation: s.summation.into(), ..Default::default() }
}

/// Diagnostics go to stdout when the table went to a file, else to stderr.
struct Report {
    to_stdout: bool,
}

impl Report {
    fn line(&self, msg: impl AsRef<str>) {
        if self.to_stdout {
            println!("{}", msg.as_ref());
        } else {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn finish(out: Box<dyn Write>, path: Option<&Path>) -> Result<Report> {
    drop(out);
    if let Some(p) = path {
        println!("wrote {}", p.display());
    }
    Ok(Report { to_stdout: path.is_some() })
}

pub fn solve(args: &SolveArgs) -> Result<i32> {
    let c = &args.common;
    let model = load_model(c)?;
    let grid = time_grid(c)?;
    let trunc = truncation(c)?;
    let opts = series_options(&args.series);
    let field = match jump_kolmogorov::minimal_solution(&model, c.u, c.x, &grid, trunc, &opts) {
        Ok(f) => f,
        Err(Error::NonConvergence { terms, last_term_mass, partial }) => {
            eprintln!(
                "series did not converge: {terms} terms, last term mass {last_term_mass:.3e}, truncation outflow {:.3e}",
                partial.truncation_outflow
            );
            return Err(Error::NonConvergence { terms, last_term_mass, partial }.into());
        }
        Err(e) => return Err(e.into()),
    };

    let (mut out, path) = output::open(c, "solve")?;
    match c.format {
        Format::Csv => field.write_csv(&mut out, None)?,
        Format::Json => writeln!(out, "{}", field.to_json(None)?)?,
    }
    out.flush()?;
    let report = finish(out, path.as_deref())?;

    let defect = regularity_defect(&field, grid.end())?;
    report.line(format!("terms_used {}", field.terms_used));
    report.line(format!("last_term_mass {:e}", field.last_term_mass));
    report.line(format!("tail_mass {:e}", field.tail_mass));
    report.line(format!("truncation_outflow {:e}", field.truncation_outflow));
    report.line(format!("regularity_defect {:e}", defect.defect));
    if defect.defect > jump_kolmogorov::feller::EXPLOSION_FLOOR && trunc.size >= 4 {
        let split = split_defect(&model, c.u, c.x, &grid, trunc, &opts)?;
        report.line(format!(
            "explosion {} (defect {:e} on {} states, {:e} on {})",
            if split.explosive { "likely" } else { "not separated from truncation loss" },
            split.defect_inner,
            split.inner.size,
            split.defect_outer,
            split.outer.size
        ));
    }
    for w in &field.warnings {
        report.line(format!("warning: {w}"));
    }
    Ok(PASS)
}

pub fn simulate(args: &SimulateArgs) -> Result<i32> {
    let c = &args.common;
    let model = load_model(c)?;
    let t = match (&c.t_grid, c.t) {
        (_, Some(t)) => t,
        _ => time_grid(c)?.end(),
    };
    let trunc = truncation(c)?;
    let opts = McOptions { jump_cap: args.jump_cap, truncation: Some(trunc) };
    let est = mc_estimate(&model, c.u, c.x, t, args.paths, args.seed, &opts)?;

    let (mut out, path) = output::open(c, "simulate")?;
    match c.format {
        Format::Csv => est.write_csv(&mut out)?,
        Format::Json => writeln!(out, "{}", est.to_json()?)?,
    }
    out.flush()?;
    let report = finish(out, path.as_deref())?;
    report.line(format!("paths {} seed {}", est.n_paths, est.rng_seed));
    report.line(format!(
        "exploded {} ({:.4} ± {:.4}), capped {}, outside truncation {}",
        est.explosion_count,
        est.explosion_frequency(),
        est.explosion_std_err(),
        est.capped_count,
        est.outside_count
    ));
    Ok(PASS)
}

fn parse_set(spec: &str, trunc: Truncation) -> Result<StateSet> {
    if spec.trim() == "all" {
        return Ok(trunc.all());
    }
    let set = spec
        .split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|_| CliError::Usage(format!("bad state `{s}` in --set"))))
        .collect::<Result<StateSet>>()?;
    if set.is_empty() || set.iter().any(|y| !trunc.contains(y)) {
        return Err(CliError::Usage(format!("--set must name states inside the truncation of {}", trunc.size)));
    }
    Ok(set)
}

fn write_reports(out: &mut dyn Write, reports: &[ResidualReport], format: Format) -> Result<()> {
    match format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(reports)?)?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record([
                "equation_id",
                "max_residual",
                "argmax_time",
                "argmax_set",
                "grid_step",
                "tolerance_used",
                "boundary_residual",
                "passed",
            ])?;
            for r in reports {
                w.write_record([
                    r.equation_id.to_string(),
                    r.max_residual.to_string(),
                    r.argmax_point.time.to_string(),
                    r.argmax_point.set.clone(),
                    r.grid_step.to_string(),
                    r.tolerance_used.to_string(),
                    r.boundary_residual.map(|b| b.to_string()).unwrap_or_default(),
                    r.passed().to_string(),
                ])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

/// Relative change of the forward loss term across truncations above which
/// the forward equation is not checked.
const TRUNCATION_SENSITIVITY: f64 = 1e-3;

pub fn verify(args: &VerifyArgs) -> Result<i32> {
    let c = &args.common;
    let model = load_model(c)?;
    let grid = time_grid(c)?;
    let trunc = truncation(c)?;
    let opts = series_options(&args.series);
    let set = parse_set(&args.set, trunc)?;
    if grid.panels() < 2 {
        return Err(CliError::Usage("verification needs at least two grid panels".into()));
    }
    let field = jump_kolmogorov::minimal_solution(&model, c.u, c.x, &grid, trunc, &opts)?;
    let end = grid.panels();
    let mut reports = Vec::new();
    let mut warnings = Vec::new();

    reports.push(minimal_integral_residual(&model, &field, &set)?.with_tolerance(args.integral_tol));

    // The forward right-hand side must not depend on where the state space is cut.
    let inner = Truncation::new((trunc.size * 3 / 4).max(c.x + 1));
    let sensitive = if inner.size < trunc.size {
        let small = jump_kolmogorov::minimal_solution(&model, c.u, c.x, &grid, inner, &opts)?;
        let small_set: StateSet = set.iter().filter(|&y| inner.contains(y)).collect();
        let a = forward_rhs_terms(&model, &small, &small_set, end).loss;
        let b = forward_rhs_terms(&model, &field, &set, end).loss;
        ((b - a).abs() > TRUNCATION_SENSITIVITY * b.abs().max(1.0)).then_some((a, b))
    } else {
        None
    };
    if let Some((a, b)) = sensitive {
        warnings.push(format!(
            "forward right-hand side for B={} grows with the truncation (loss term {a:.6} on {} states, {b:.6} on {}); forward equation not checked",
            set.label(),
            inner.size,
            trunc.size
        ));
    } else {
        let bound = args.bound.unwrap_or_else(|| {
            1.01 * set
                .iter()
                .flat_map(|y| grid.times().iter().map(move |&t| (y, t)))
                .map(|(y, t)| model.rate(y, t))
                .fold(0.0, f64::max)
        });
        match forward_residual(&model, &field, &set, grid.end(), bound) {
            Ok(r) => {
                reports.push(r.with_tolerance(args.differential_tol));
                reports.push(forward_integral_residual(&model, &field, &set, grid.end(), bound)?.with_tolerance(args.integral_tol));
            }
            Err(Error::NotBounded { state, time, rate, bound }) => warnings.push(format!(
                "B={} is not bounded by {bound}: q({state}, {time}) = {rate}; forward equation not checked",
                set.label()
            )),
            Err(e) => return Err(e.into()),
        }
    }

    let scheme = Scheme::new(&model, &grid, trunc)?;
    let family = scheme.start_family(&set)?;
    let probe: StateSet = set.iter().chain([c.x]).collect();
    reports.push(backward_residual(&model, &family, &probe)?.with_tolerance(args.differential_tol));

    let mid = end / 2;
    let later = TimeGrid::from_times(grid.times()[mid..].to_vec())?;
    let fields = Scheme::new(&model, &later, trunc)?.start_fields(&opts)?;
    let ck = ck_residual(&field, &fields, grid.end())?;
    reports.push(ResidualReport {
        equation_id: EquationId::ChapmanKolmogorov,
        max_residual: ck,
        argmax_point: ArgMax { time: grid.end(), set: format!("s={}", grid.times()[mid]) },
        grid_step: grid.max_step(),
        tolerance_used: args.integral_tol + field.truncation_outflow,
        boundary_residual: None,
    });

    let (mut out, path) = output::open(c, "verify")?;
    write_reports(&mut out, &reports, c.format)?;
    out.flush()?;
    let report = finish(out, path.as_deref())?;
    let mut failed = 0;
    for r in &reports {
        let ok = r.passed();
        failed += usize::from(!ok);
        report.line(format!(
            "{} {:<18} residual {:.3e} (tolerance {:.1e}) at t={} {}",
            if ok { "ok  " } else { "FAIL" },
            r.equation_id.to_string(),
            r.max_residual,
            r.tolerance_used,
            r.argmax_point.time,
            r.argmax_point.set
        ));
    }
    for w in warnings.iter().chain(&field.warnings) {
        report.line(format!("warning: {w}"));
    }
    Ok(if failed == 0 { PASS } else { RESIDUAL_FAILURE })
}

/// First witness explaining a verdict on `assumption`, following the
/// implications between the assumptions.
fn witness_for(report: &AssumptionReport, assumption: Assumption) -> Option<&jump_kolmogorov::qfunction::Witness> {
    let chain: &[Assumption] = match assumption {
        Assumption::Feller | Assumption::Bounded => {
            &[Assumption::Bounded, Assumption::LocallyBounded, Assumption::LocallyIntegrable]
        }
        Assumption::LocallyBounded => &[Assumption::LocallyBounded, Assumption::LocallyIntegrable],
        Assumption::LocallyIntegrable => &[Assumption::LocallyIntegrable],
    };
    chain.iter().find_map(|a| report.witnesses.iter().find(|w| w.assumption == *a))
}

pub fn check(args: &CheckArgs) -> Result<i32> {
    let c = &args.common;
    let mut model = load_model(c)?;
    if args.halfline {
        model = extend_to_halfline(&model);
    }
    let grid = time_grid(c)?;
    let states = StateSet::range(0, c.trunc);
    let r = check_assumptions(&model, &states, grid.times(), args.bound_threshold)?;
    let rows = [
        (Assumption::Feller, r.feller_ok),
        (Assumption::Bounded, r.lb_ok),
        (Assumption::LocallyBounded, r.alb_ok),
        (Assumption::LocallyIntegrable, r.l1_ok),
    ];

    let (mut out, path) = output::open(c, "check")?;
    match c.format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&r)?)?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(["assumption", "verdict", "witness_state", "witness_time", "witness_value", "reason"])?;
            for (a, v) in rows {
                let name = serde_json::to_value(a)?.as_str().unwrap_or_default().to_string();
                let mut rec = vec![name, serde_json::to_value(v)?.as_str().unwrap_or_default().to_string()];
                match witness_for(&r, a).filter(|_| v == jump_kolmogorov::qfunction::Verdict::Fails) {
                    Some(wit) => rec.extend([wit.state.to_string(), wit.time.to_string(), wit.value.to_string(), wit.reason.clone()]),
                    None => rec.extend([String::new(), String::new(), String::new(), String::new()]),
                }
                w.write_record(&rec)?;
            }
            w.flush()?;
        }
    }
    out.flush()?;
    let report = finish(out, path.as_deref())?;
    report.line(format!("model {} on {} states, {} probe times", model.name(), states.len(), grid.times().len()));
    for (a, v) in rows {
        report.line(format!("{a:?}: {v}"));
    }
    for w in &r.witnesses {
        report.line(format!("witness: {}", w.reason));
    }
    Ok(PASS)
}
