//! One function per subcommand; each turns a config into a [`Report`].

use std::path::Path;
use std::sync::Arc;

use clap::ValueEnum;
use qcl_core::analysis::{
    kraus_lift_objective, kraus_map_objective, lie_rank, open_landscape_extrema, three_level_oracle,
    trilinear_min_time, KrausLift, OracleResult,
};
use qcl_core::benchmarks::{dipole_swap3, ladder8, track5, Benchmark};
use qcl_core::flows::{
    convergence_bound_phi1, convergence_bound_phi2, eps_gradient_ascent, u_flow_phi1, u_flow_phi2,
    ConvergenceBoundInputs, StepRule,
};
use qcl_core::homotopy::{solve, FreeFunction, HomotopyProblem, Mode, SystemPath};
use qcl_core::linalg::{haar_unitary, hermitian_eigenvalues, identity, projector, unitarity_error, CMat};
use qcl_core::objectives::{phi1, Objective, ObservableSpec, PenaltySpec};
use qcl_core::quantum::{propagate, ControlField};
use qcl_core::rng::substream;
use qcl_core::topology::{critical_residual, enumerate_phi1_critical, enumerate_phi2_critical};
use qcl_core::tracking::{track_unitary, tracking_correlation, TrackKind, TrackSpec};
use rand::Rng;
use serde_json::{json, Value};

use crate::config::{
    matrix, BenchmarkKind, ConfigError, DmorphMode, FlowConfig, FlowStart, FreeFunctionKind, OracleConfig, RunConfig,
};
use crate::output::{num, Report, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Propagate,
    Topology,
    Flow,
    Optimize,
    Dmorph,
    Track,
    Rank,
    Oracle,
    Open,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Propagate => "propagate",
            Command::Topology => "topology",
            Command::Flow => "flow",
            Command::Optimize => "optimize",
            Command::Dmorph => "dmorph",
            Command::Track => "track",
            Command::Rank => "rank",
            Command::Oracle => "oracle",
            Command::Open => "open",
        }
    }
}

/// Why a command did not produce results.
#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    Numerical(qcl_core::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

/// Numerical failures abort the run; anything else is blamed on the input.
fn core(at: &'static str) -> impl Fn(qcl_core::Error) -> Failure {
    move |e| {
        if e.is_numerical() {
            Failure::Numerical(e)
        } else {
            Failure::Config(ConfigError::at(at, e))
        }
    }
}

pub struct Context<'a> {
    pub config: &'a RunConfig,
    /// Directory that relative paths in the config are resolved against.
    pub base: &'a Path,
    pub verbose: bool,
}

impl Context<'_> {
    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("qcl: {}", msg.as_ref());
        }
    }
}

pub fn execute(cmd: Command, ctx: &Context) -> Result<Report, Failure> {
    ctx.log(format!("running {}", cmd.name()));
    match cmd {
        Command::Propagate => cmd_propagate(ctx),
        Command::Topology => cmd_topology(ctx),
        Command::Flow => cmd_flow(ctx),
        Command::Optimize => cmd_optimize(ctx),
        Command::Dmorph => cmd_dmorph(ctx),
        Command::Track => cmd_track(ctx),
        Command::Rank => cmd_rank(ctx),
        Command::Oracle => cmd_oracle(ctx),
        Command::Open => cmd_open(ctx),
    }
}

fn optional_objective(cfg: &RunConfig) -> Result<Option<Objective>, Failure> {
    match cfg.objective {
        Some(_) => Ok(Some(cfg.objective()?)),
        None => Ok(None),
    }
}

fn field_table(field: &ControlField) -> Table {
    let mut t = Table::new("field", "piecewise-constant control field").column("t", "interval midpoint");
    for ch in 0..field.n_controls() {
        t = t.column(format!("eps{ch}"), format!("amplitude of control channel {ch}"));
    }
    for k in 0..field.n_steps() {
        let mut row = vec![field.midpoint(k)];
        row.extend(field.row(k));
        t.push_f64(&row);
    }
    t
}

fn cmd_propagate(ctx: &Context) -> Result<Report, Failure> {
    let cfg = ctx.config;
    let sys = cfg.system()?;
    let field = cfg.control_field(&sys, ctx.base)?;
    let objective = optional_objective(cfg)?;
    let n = sys.dim();
    if let Some(obj) = &objective {
        if obj.dim() != n {
            return Err(ConfigError::at("objective", format!("dimension {} differs from system {n}", obj.dim())).into());
        }
    }
    let traj = propagate(&sys, &field).map_err(core("propagate"))?;
    let rho0 = match &objective {
        Some(Objective::Observable(spec)) => spec.rho0().clone(),
        _ => projector(n, 0),
    };
    let mut table = Table::new("trajectory", "populations along the propagated trajectory")
        .column("t", "time of the grid point");
    for i in 0..n {
        table = table.column(format!("p{i}"), format!("population of basis state {i}"));
    }
    if objective.is_some() {
        table = table.column("phi", "objective evaluated at U(t)");
    }
    let mut final_pops = Vec::new();
    for k in 0..=traj.n_steps() {
        let u = traj.unitary(k);
        let rho = u * &rho0 * u.adjoint();
        let pops: Vec<f64> = (0..n).map(|i| rho[(i, i)].re).collect();
        let mut row = vec![k as f64 * traj.dt()];
        row.extend(&pops);
        if let Some(obj) = &objective {
            row.push(obj.value(u).map_err(core("objective"))?);
        }
        table.push_f64(&row);
        final_pops = pops;
    }
    let mut report = Report::default();
    report.result("final_populations", final_pops);
    report.result("unitarity_error", unitarity_error(traj.final_unitary()));
    report.result("fluence", field.fluence());
    if let Some(obj) = &objective {
        report.result("value", obj.value(traj.final_unitary()).map_err(core("objective"))?);
    }
    report.table(table);
    Ok(report)
}

fn perm_label(p: &[usize]) -> String {
    p.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("-")
}

fn cmd_topology(ctx: &Context) -> Result<Report, Failure> {
    let mut report = Report::default();
    match ctx.config.objective()? {
        Objective::Observable(spec) => {
            let records = enumerate_phi1_critical(&spec).map_err(core("objective"))?;
            let mut t = Table::new("critical", "critical manifolds of the observable objective")
                .column("permutation", "pairing of rho0 and Theta eigenvectors (dash separated)")
                .column("value", "critical value")
                .column("dim", "dimension of the critical manifold")
                .column("h+", "positive Hessian eigenvalues")
                .column("h0", "zero Hessian eigenvalues")
                .column("h-", "negative Hessian eigenvalues")
                .column("multiplicity", "permutations merged by degeneracy")
                .column("residual", "Frobenius norm of [U^dag Theta U, rho0] at the representative");
            let mut max_res = 0.0f64;
            for r in &records {
                let res = critical_residual(&r.representative, &spec);
                max_res = max_res.max(res);
                let (hp, h0, hm) = r.signature;
                t.push(vec![
                    perm_label(&r.permutation),
                    num(r.value),
                    r.dimension.to_string(),
                    hp.to_string(),
                    h0.to_string(),
                    hm.to_string(),
                    r.multiplicity.to_string(),
                    num(res),
                ]);
            }
            let values: Vec<f64> = records.iter().map(|r| r.value).collect();
            report.result("records", records.len());
            report.result("max", values.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
            report.result("min", values.iter().cloned().fold(f64::INFINITY, f64::min));
            report.result("max_residual", max_res);
            report.table(t);
        }
        Objective::Gate(spec) => {
            let classes = enumerate_phi2_critical(spec.dim()).map_err(core("objective"))?;
            let mut t = Table::new("critical", "critical classes of the gate objective")
                .column("m", "number of eigenphases of W^dag U equal to -1")
                .column("value", "critical value")
                .column("h+", "positive Hessian eigenvalues")
                .column("h0", "zero Hessian eigenvalues")
                .column("h-", "negative Hessian eigenvalues");
            for c in &classes {
                let (hp, h0, hm) = c.signature();
                t.push(vec![c.m.to_string(), num(c.value()), hp.to_string(), h0.to_string(), hm.to_string()]);
            }
            report.result("records", classes.len());
            report.table(t);
        }
    }
    Ok(report)
}

fn flow_block(cfg: &RunConfig) -> Result<FlowConfig, ConfigError> {
    cfg.flow.clone().ok_or_else(|| ConfigError::at("flow", "missing"))
}

fn start_unitary(ctx: &Context, start: FlowStart, n: usize) -> Result<CMat, Failure> {
    Ok(match start {
        FlowStart::Identity => identity(n),
        FlowStart::Haar => haar_unitary(n, &mut substream(ctx.config.seed, "flow")),
        FlowStart::Propagated => {
            let sys = ctx.config.system()?;
            let field = ctx.config.control_field(&sys, ctx.base)?;
            if sys.dim() != n {
                return Err(ConfigError::at("system", "dimension differs from the objective").into());
            }
            propagate(&sys, &field).map_err(core("propagate"))?.final_unitary().clone()
        }
    })
}

const BALL: f64 = 1e-3;

fn cmd_flow(ctx: &Context) -> Result<Report, Failure> {
    let cfg = ctx.config;
    let block = flow_block(cfg)?;
    let objective = cfg.objective()?;
    let u0 = start_unitary(ctx, block.start, objective.dim())?;
    let (flow, bound) = match &objective {
        Objective::Observable(spec) => {
            let f = u_flow_phi1(&u0, spec, block.s_max, block.steps).map_err(core("flow"))?;
            let inputs = ConvergenceBoundInputs::for_observable(&hermitian_eigenvalues(spec.theta()), BALL);
            (f, convergence_bound_phi1(&inputs))
        }
        Objective::Gate(spec) => {
            let f = u_flow_phi2(&u0, spec, block.s_max, block.steps).map_err(core("flow"))?;
            let inputs = ConvergenceBoundInputs::for_gate(&u0, spec.w(), BALL);
            (f, convergence_bound_phi2(&inputs))
        }
    };
    let mut t = Table::new("flow", "kinematic gradient flow on the unitary group")
        .column("s", "algorithmic time")
        .column("value", "objective value")
        .column("gradient_norm", "Frobenius norm of dU/ds");
    for i in 0..flow.s_grid.len() {
        t.push_f64(&[flow.s_grid[i], flow.values[i], flow.gradient_norms[i]]);
    }
    let mut report = Report::default();
    report.tolerance("convergence_ball", BALL);
    report.result("final_value", flow.final_value());
    report.result(
        "convergence_bound",
        match bound {
            Ok(b) => json!(b),
            Err(e) => json!(e.to_string()),
        },
    );
    report.table(t);
    Ok(report)
}

fn cmd_optimize(ctx: &Context) -> Result<Report, Failure> {
    let cfg = ctx.config;
    let block = cfg.flow.clone().unwrap_or_default();
    let sys = cfg.system()?;
    let field = cfg.control_field(&sys, ctx.base)?;
    let objective = cfg.objective()?;
    let penalty = PenaltySpec::new(block.penalty, None).map_err(core("flow.penalty"))?;
    let run = eps_gradient_ascent(&sys, &field, &objective, &penalty, &StepRule::default(), block.max_iter, block.tol)
        .map_err(core("optimize"))?;
    let last = run.final_field().expect("field ascent records fields");
    let value = objective
        .value(propagate(&sys, last).map_err(core("propagate"))?.final_unitary())
        .map_err(core("objective"))?;
    let mut t = Table::new("optimize", "penalized gradient ascent in field space")
        .column("iteration", "accepted step index")
        .column("s", "accumulated step length")
        .column("cost", "penalized cost J")
        .column("gradient_norm", "sup norm of the ascent direction");
    for i in 0..run.s_grid.len() {
        t.push(vec![i.to_string(), num(run.s_grid[i]), num(run.values[i]), num(run.gradient_norms[i])]);
    }
    let mut report = Report::default();
    report.tolerance("gradient", block.tol);
    report.result("value", value);
    report.result("cost", run.final_value());
    report.result("fluence", last.fluence());
    report.result("converged", run.converged);
    report.result("stalled", run.stalled);
    report.result("iterations", run.s_grid.len() - 1);
    report.table(t);
    report.table(field_table(last));
    Ok(report)
}

fn benchmark(kind: BenchmarkKind, level: f64) -> qcl_core::Result<Benchmark> {
    match kind {
        BenchmarkKind::Ladder8 => ladder8(level),
        BenchmarkKind::DipoleSwap3 => dipole_swap3(level, false),
        BenchmarkKind::DipoleSwap3Curved => dipole_swap3(level, true),
        BenchmarkKind::Track5 => track5().map(|(b, _)| b),
    }
}

fn cmd_dmorph(ctx: &Context) -> Result<Report, Failure> {
    let cfg = ctx.config;
    let block = cfg.dmorph.clone().ok_or_else(|| ConfigError::at("dmorph", "missing"))?;
    let (path, spec, field0) = match block.benchmark {
        Some(kind) => {
            ctx.log("preparing benchmark field");
            let b = benchmark(kind, block.level.unwrap_or(0.5)).map_err(core("dmorph.benchmark"))?;
            (b.path, b.spec, b.field0)
        }
        None => {
            let sys = cfg.system()?;
            let field = cfg.control_field(&sys, ctx.base)?;
            let path = match &block.system_end {
                Some(end) => {
                    SystemPath::linear(sys, end.build("dmorph.system_end")?).map_err(core("dmorph.system_end"))?
                }
                None => SystemPath::Constant(sys),
            };
            (path, cfg.observable()?, field)
        }
    };
    let initial = phi1(
        propagate(&path.at(0.0), &field0).map_err(core("propagate"))?.final_unitary(),
        &spec,
    )
    .map_err(core("objective"))?;
    let mode = match block.mode {
        DmorphMode::LevelSet => Mode::LevelSet,
        DmorphMode::Morph => Mode::Morph,
        DmorphMode::Track => {
            let profile = block
                .target
                .clone()
                .ok_or_else(|| ConfigError::at("dmorph.target", "required for track mode"))?;
            Mode::track(move |s| profile.at(initial, s))
        }
    };
    let free = match block.free {
        FreeFunctionKind::Zero => FreeFunction::Zero,
        FreeFunctionKind::FluenceMin => FreeFunction::fluence_min(),
        FreeFunctionKind::FluenceMax => FreeFunction::fluence_max(),
        FreeFunctionKind::RandomNull => FreeFunction::random_null(substream(cfg.seed, "dmorph").random()),
    };
    let mut problem = HomotopyProblem::new(path, spec, field0, mode, free, block.s_steps).map_err(core("dmorph"))?;
    if let Some(tol) = block.tolerance {
        problem.tolerance = tol;
    }
    let tr = solve(&problem).map_err(core("dmorph"))?;
    let mut t = Table::new("dmorph", "D-MORPH field surface diagnostics")
        .column("s", "homotopy parameter")
        .column("observable", "expectation value of Theta at T")
        .column("target", "prescribed value P(s)")
        .column("fluence", "integral of the squared field")
        .column("drift", "absolute deviation of the observable from P(s)");
    for i in 0..tr.len() {
        let s = tr.s[i];
        t.push_f64(&[s, tr.observable[i], problem.target(s, initial), tr.fluence[i], tr.drift[i]]);
    }
    let mut report = Report::default();
    report.tolerance("drift", problem.tolerance);
    report.result("initial_value", initial);
    report.result("max_drift", tr.max_drift());
    report.result("final_s", *tr.s.last().unwrap_or(&0.0));
    report.result("initial_fluence", *tr.fluence.first().unwrap_or(&0.0));
    report.result("final_fluence", *tr.fluence.last().unwrap_or(&0.0));
    report.table(t);
    if let Some(f) = tr.final_field() {
        report.table(field_table(f));
    }
    Ok(report)
}

fn cmd_track(ctx: &Context) -> Result<Report, Failure> {
    let cfg = ctx.config;
    let block = cfg.track.clone().ok_or_else(|| ConfigError::at("track", "missing"))?;
    let sys = cfg.system()?;
    let field = cfg.control_field(&sys, ctx.base)?;
    let kind = match cfg.objective()? {
        Objective::Gate(spec) => TrackKind::Geodesic(spec.w().clone()),
        Objective::Observable(spec) => {
            let profile = block
                .target
                .clone()
                .ok_or_else(|| ConfigError::at("track.target", "required for observable objectives"))?;
            let traj = propagate(&sys, &field).map_err(core("propagate"))?;
            let initial = phi1(traj.final_unitary(), &spec).map_err(core("objective"))?;
            TrackKind::ObservableSet {
                rho0: spec.rho0().clone(),
                observables: vec![spec.theta().clone()],
                tracks: vec![Arc::new(move |s| profile.at(initial, s))],
            }
        }
    };
    let mut spec = TrackSpec::new(kind, block.tolerance)
        .map_err(core("track.tolerance"))?
        .with_ridge(block.ridge)
        .with_correctors(block.correctors);
    if let Some(cap) = block.condition_cap {
        spec.condition_cap = cap;
    }
    let res = track_unitary(&sys, &field, &spec, block.s_steps).map_err(core("track"))?;
    let mut t = Table::new("track", "tracking log")
        .column("s", "path parameter")
        .column("residual", "distance from the prescribed target after the step")
        .column("condition", "condition number of the correlation matrix G")
        .column("fluence", "integral of the squared field");
    for e in &res.log {
        t.push_f64(&[e.s, e.residual, e.condition, e.fluence]);
    }
    let mut report = Report::default();
    report.tolerance("tracking", block.tolerance);
    report.tolerance("condition_cap", spec.condition_cap);
    report.result("final_residual", res.log.last().map(|e| e.residual).unwrap_or(0.0));
    report.result("max_residual", res.log.iter().map(|e| e.residual).fold(0.0, f64::max));
    report.result("max_condition", res.log.iter().map(|e| e.condition).fold(0.0, f64::max));
    report.table(t);
    if let Some(f) = res.trajectory.final_field() {
        report.table(field_table(f));
    }
    Ok(report)
}

const CORRELATION_RANK_TOL: f64 = 1e-10;

fn cmd_rank(ctx: &Context) -> Result<Report, Failure> {
    let cfg = ctx.config;
    let sys = cfg.system()?;
    let n = sys.dim();
    let lie = lie_rank(&sys, n * n + 1).map_err(core("system"))?;
    let mut t = Table::new("rank", "controllability diagnostics")
        .column("quantity", "name of the diagnostic")
        .column("value", "its value");
    let mut rows: Vec<(&str, String)> = vec![
        ("lie_dimension", lie.dimension_found.to_string()),
        ("ambient", lie.ambient.to_string()),
        ("su_dimension", lie.su_dimension.to_string()),
        ("controllable", lie.controllable.to_string()),
        ("controllable_up_to_phase", lie.controllable_up_to_phase.to_string()),
        ("generator_depth", lie.generator_depth.to_string()),
        ("closed", lie.closed.to_string()),
    ];
    let mut report = Report::default();
    report.tolerance("correlation_rank", CORRELATION_RANK_TOL);
    report.result("lie_dimension", lie.dimension_found);
    report.result("ambient", lie.ambient);
    report.result("controllable", lie.controllable);
    report.result("controllable_up_to_phase", lie.controllable_up_to_phase);
    if cfg.field.is_some() {
        let field = cfg.control_field(&sys, ctx.base)?;
        let traj = propagate(&sys, &field).map_err(core("propagate"))?;
        let g = tracking_correlation(&traj);
        let rank = g.rank(CORRELATION_RANK_TOL);
        rows.push(("correlation_rank", rank.to_string()));
        rows.push(("correlation_condition", num(g.condition)));
        report.result("correlation_rank", rank);
        report.result("correlation_condition", g.condition);
    }
    for (k, v) in rows {
        t.push(vec![k.to_string(), v]);
    }
    report.table(t);
    Ok(report)
}

fn oracle_tables(res: &OracleResult, report: &mut Report) {
    let mut t = Table::new("oracle", "oracle value and parameters")
        .column("quantity", "name")
        .column("value", "numeric value");
    t.push(vec!["value".into(), num(res.value)]);
    for (k, v) in &res.parameters {
        t.push(vec![k.clone(), num(*v)]);
    }
    report.table(t);
    if let Some(path) = &res.trajectory {
        let mut p = Table::new("path", "sampled optimal trajectory")
            .column("t", "time")
            .column("theta", "polar angle of the state")
            .column("phi", "azimuthal angle of the state")
            .column("p_theta", "costate conjugate to theta")
            .column("p_phi", "costate conjugate to phi")
            .column("eps1", "first control")
            .column("eps2", "second control");
        for i in 0..path.t.len() {
            let [a, b, c, d] = path.states[i];
            let [e1, e2] = path.controls[i];
            p.push_f64(&[path.t[i], a, b, c, d, e1, e2]);
        }
        report.table(p);
    }
}

fn cmd_oracle(ctx: &Context) -> Result<Report, Failure> {
    let block = ctx.config.oracle.clone().ok_or_else(|| ConfigError::at("oracle", "missing"))?;
    let res = match block {
        OracleConfig::ThreeLevel { horizon } => three_level_oracle(horizon).map_err(core("oracle.three_level"))?,
        OracleConfig::Trilinear { theta, coupling } => {
            trilinear_min_time(theta, coupling).map_err(core("oracle.trilinear"))?
        }
    };
    let mut report = Report::default();
    report.result("value", res.value);
    report.result(
        "parameters",
        Value::Object(res.parameters.iter().map(|(k, v)| (k.clone(), json!(v))).collect()),
    );
    oracle_tables(&res, &mut report);
    Ok(report)
}

fn cmd_open(ctx: &Context) -> Result<Report, Failure> {
    let block = ctx.config.open.clone().ok_or_else(|| ConfigError::at("open", "missing"))?;
    let lift = KrausLift::new(
        matrix(&block.rho_s, "open.rho_s")?,
        matrix(&block.rho_e, "open.rho_e")?,
        matrix(&block.theta, "open.theta")?,
    )
    .map_err(core("open"))?;
    let ext = open_landscape_extrema(&lift).map_err(core("open"))?;
    let mut report = Report::default();
    report.result("max", ext.max);
    report.result("min", ext.min);
    report.result("cross_checked", ext.cross_checked);
    report.result("lifted_dim", lift.lifted_dim());
    if block.starts > 0 {
        let spec = ObservableSpec::new(lift.lifted_state(), lift.lifted_observable()).map_err(core("open"))?;
        let mut rng = substream(ctx.config.seed, "open");
        let mut t = Table::new("open", "lifted gradient flows from random starts")
            .column("start", "index of the random start")
            .column("final_value", "objective at the end of the flow")
            .column("gap", "distance below the landscape maximum")
            .column("dual_gap", "|Kraus-map value - lifted value| at the endpoint");
        let mut worst = 0.0f64;
        for i in 0..block.starts {
            let u0 = haar_unitary(lift.lifted_dim(), &mut rng);
            let flow = u_flow_phi1(&u0, &spec, block.s_max, block.steps).map_err(core("open"))?;
            let u = flow.final_unitary().expect("unitary flow");
            let v = flow.final_value();
            let dual = (kraus_map_objective(&lift, u).map_err(core("open"))?
                - kraus_lift_objective(&lift, u).map_err(core("open"))?)
            .abs();
            worst = worst.max(ext.max - v);
            t.push(vec![i.to_string(), num(v), num(ext.max - v), num(dual)]);
        }
        report.result("worst_gap", worst);
        report.table(t);
    }
    Ok(report)
}
