//! Scenario orchestration and file output.

use std::fs;
use std::path::{Path, PathBuf};

use lich_core::eigen::eta_scan;
use lich_core::energy::ProblemData;
use lich_core::field_io::save_field;
use lich_core::minimize::{landscape, minimize, continuity_probe, ConstraintSpec, SolverConfig};
use lich_core::solver::{
    gate_inputs, integral_identity_check, single_solution_pipeline, two_solution_pipeline_with, weak_residual,
    ContinuationSchedule, PipelineOptions, SolveReport,
};
use lich_core::thresholds::{
    c2_and_lambda, calibrate_a, fmt_f64, k0, k0_theorem2, k1q_k2q, lemma22_lower_bound, mu_k0_upper_bound,
    nonexistence_check, phi_q, sobolev_k, theorem_gate, Theorem, ThresholdReport,
};
use lich_core::{Error, SubcriticalParams};

use crate::config::{ConfigError, RunConfig};
use crate::report::{csv, name_value_csv, Plot, Series};

pub const EXIT_OK: i32 = 0;
pub const EXIT_GATE: i32 = 2;
pub const EXIT_NONCONVERGED: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Landscape,
    Eigen,
    Thresholds,
    Solve,
    Nonexist,
    Continuity,
}

impl ScenarioKind {
    pub fn parse(s: &str) -> Option<ScenarioKind> {
        Some(match s {
            "landscape" => ScenarioKind::Landscape,
            "eigen" => ScenarioKind::Eigen,
            "thresholds" => ScenarioKind::Thresholds,
            "solve" => ScenarioKind::Solve,
            "nonexist" => ScenarioKind::Nonexist,
            "continuity" | "continuation" => ScenarioKind::Continuity,
            _ => return None,
        })
    }
}

/// What a scenario produced: exit code plus human-readable lines for stdout.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub messages: Vec<String>,
    pub files: Vec<PathBuf>,
}

#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    Io(std::io::Error),
    Numeric(Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Numeric(Error::Gate(_)) => EXIT_GATE,
            Failure::Numeric(Error::Domain(_) | Error::Expr(_)) => EXIT_CONFIG,
            Failure::Numeric(_) | Failure::Io(_) => EXIT_NONCONVERGED,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "config error: {e}"),
            Failure::Io(e) => write!(f, "i/o error: {e}"),
            Failure::Numeric(e) => write!(f, "{e}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Numeric(e)
    }
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    prob: ProblemData,
    solver: SolverConfig,
    dir: &'a Path,
    out: Outcome,
}

impl Ctx<'_> {
    fn write(&mut self, name: &str, format: &str, body: &str) -> Result<(), Failure> {
        if !self.cfg.output.wants(format) {
            return Ok(());
        }
        let path = self.dir.join(name);
        fs::write(&path, body)?;
        self.out.files.push(path);
        Ok(())
    }

    fn say(&mut self, msg: String) {
        self.out.messages.push(msg);
    }

    fn schedule(&self) -> Result<ContinuationSchedule, Failure> {
        Ok(ContinuationSchedule::geometric(&self.prob, self.cfg.solver.eps0, self.cfg.solver.stages)?)
    }

    /// `(q, ε)` from the scenario, falling back to the first schedule stage.
    fn stage_params(&self) -> Result<SubcriticalParams, Failure> {
        let (eps0, q0) = self.schedule()?.stages()[0];
        let q = self.cfg.scenario.q.unwrap_or(q0);
        let eps = self.cfg.scenario.eps.unwrap_or(if q == self.prob.p_star() { 0.0 } else { eps0 });
        SubcriticalParams::new(&self.prob, q, eps).map_err(|e| Failure::Config(ConfigError(format!("range error: {e}"))))
    }
}

/// Run `kind` and write its outputs under `dir`.
pub fn run_scenario(kind: ScenarioKind, cfg: &RunConfig, dir: &Path) -> Result<Outcome, Failure> {
    cfg.validate()?;
    let (prob, warnings) = cfg.problem_data()?;
    fs::create_dir_all(dir)?;
    let mut ctx = Ctx {
        cfg,
        prob,
        solver: cfg.solver_config(),
        dir,
        out: Outcome { code: EXIT_OK, messages: warnings.iter().map(|w| format!("warning: {w}")).collect(), files: vec![] },
    };
    let echo = cfg.to_toml_string();
    ctx.write("config.echo.toml", "csv", &echo)?;
    match kind {
        ScenarioKind::Landscape => run_landscape(&mut ctx)?,
        ScenarioKind::Eigen => run_eigen(&mut ctx)?,
        ScenarioKind::Thresholds => {
            let rep = gate(&mut ctx)?;
            if !rep.passed {
                ctx.out.code = EXIT_GATE;
            }
        }
        ScenarioKind::Solve => run_solve(&mut ctx)?,
        ScenarioKind::Nonexist => run_nonexist(&mut ctx)?,
        ScenarioKind::Continuity => run_continuity(&mut ctx)?,
    }
    Ok(ctx.out)
}

fn reference_k(prob: &ProblemData, q: f64) -> f64 {
    if prob.f_minus() > 0.0 && q > prob.p {
        if let Ok(k) = k0(prob.p, q, prob.h, prob.f_minus()) {
            return k;
        }
    }
    k0_theorem2(prob.p, q, prob.h, prob.int_f()).unwrap_or(1.0)
}

fn run_landscape(ctx: &mut Ctx) -> Result<(), Failure> {
    let prob = &ctx.prob;
    let q = ctx.cfg.scenario.q.unwrap_or(0.25 * (prob.p_flat() + 3.0 * prob.p_star()));
    let eps = ctx.cfg.scenario.eps.unwrap_or(if q == prob.p_star() { 0.0 } else { 1e-3 });
    let sub = SubcriticalParams::new(prob, q, eps).map_err(|e| ConfigError(format!("range error: {e}")))?;
    let k_ref = reference_k(prob, sub.q);
    let sc = &ctx.cfg.scenario;
    let k_min = sc.k_min.unwrap_or(k_ref.min(1.0) / 64.0);
    let k_max = sc.k_max.unwrap_or(k_ref * 1e4);
    if !(k_min < k_max) {
        return Err(ConfigError(format!("range error: need k_min < k_max, got {k_min} and {k_max}")).into());
    }
    let n = sc.k_samples.unwrap_or(20);
    let ks: Vec<f64> = (0..n).map(|i| k_min * (k_max / k_min).powf(i as f64 / (n - 1) as f64)).collect();
    let curve = landscape(prob, sub, &ks, &ctx.solver)?;
    let rows: Vec<Vec<String>> = curve
        .samples
        .iter()
        .map(|s| vec![fmt_f64(s.k), fmt_f64(s.mu), (s.converged as u8).to_string()])
        .collect();
    let mut summary = vec![("q", sub.q), ("eps", sub.eps), ("k_min", k_min), ("k_max", k_max), ("k_ref", k_ref)];
    let above_k0: Vec<_> = curve.samples.iter().filter(|s| s.k >= k_ref).collect();
    if let Some(m) = above_k0.iter().map(|s| s.mu).reduce(f64::max) {
        summary.push(("mu_hat", m));
    }
    if let (Some(eta0), true) = (ctx.cfg.solver.eta0, prob.f_minus() > 0.0) {
        let (k1, k2) = k1q_k2q(prob.n, prob.p, sub.q, prob.h, eta0, prob.f_minus())?;
        summary.push(("k1", k1));
        summary.push(("k2", k2));
        if let Some(s) = curve.samples.iter().find(|s| s.k > k2 && s.mu < 0.0) {
            summary.push(("k_starstar", 2.0 * s.k));
        }
    }
    let csv_body = csv(&["k", "mu", "converged"], &rows);
    let summary_body = name_value_csv(&summary);
    ctx.write("landscape.csv", "csv", &csv_body)?;
    ctx.write("landscape_summary.csv", "csv", &summary_body)?;
    let plot = Plot {
        title: "sphere minima",
        x_label: "k",
        y_label: "mu",
        log_x: true,
        series: vec![Series { label: "mu(k)", points: curve.samples.iter().map(|s| (s.k, s.mu)).collect(), color: "navy" }],
        h_lines: vec![],
    };
    ctx.write("landscape.svg", "svg", &plot.to_svg())?;
    let bad = curve.samples.iter().filter(|s| !s.converged).count();
    ctx.say(format!("landscape: {n} samples at q = {}, eps = {}, {bad} unconverged", sub.q, sub.eps));
    if bad > 0 {
        ctx.out.code = EXIT_NONCONVERGED;
    }
    Ok(())
}

fn run_eigen(ctx: &mut Ctx) -> Result<(), Failure> {
    let sub = ctx.stage_params()?;
    let etas = ctx.cfg.scenario.eta_list.clone().unwrap_or_else(|| (0..12).map(|i| 1e-5 * 2f64.powi(i)).collect());
    let lf = lich_core::eigen::lambda_f(&ctx.prob, &ctx.solver)?.lambda;
    let delta = if lf.is_finite() { 0.5 * (lf - ctx.prob.h.abs()).max(0.0) } else { f64::INFINITY };
    let scan = eta_scan(&ctx.prob, sub, &etas, delta, &ctx.solver)?;
    let rows: Vec<Vec<String>> = scan.rows.iter().map(|&(e, l)| vec![fmt_f64(e), fmt_f64(l)]).collect();
    let mut summary = vec![("q", sub.q), ("eps", sub.eps), ("lambda_f", scan.lambda_f), ("delta", delta)];
    if let Some(e) = scan.eta0 {
        summary.push(("eta0", e));
    }
    let body = csv(&["eta", "lambda"], &rows);
    ctx.write("eigen.csv", "csv", &body)?;
    ctx.write("eigen_summary.csv", "csv", &name_value_csv(&summary))?;
    let plot = Plot {
        title: "constrained eigenvalue",
        x_label: "eta",
        y_label: "lambda",
        log_x: true,
        series: vec![Series { label: "lambda_{f,eta,q}", points: scan.rows.clone(), color: "navy" }],
        h_lines: if lf.is_finite() { vec![("lambda_f", lf)] } else { vec![] },
    };
    ctx.write("eigen.svg", "svg", &plot.to_svg())?;
    ctx.say(format!("lambda_f = {}", fmt_f64(lf)));
    match scan.eta0 {
        Some(e) => ctx.say(format!("eta0 = {} (delta = {})", fmt_f64(e), fmt_f64(delta))),
        None => ctx.say("no scanned eta meets lambda_{f,eta,q} >= lambda_f - delta".into()),
    }
    Ok(())
}

/// Evaluate and write the gate of the configured theorem.
fn gate(ctx: &mut Ctx) -> Result<ThresholdReport, Failure> {
    let prob = &ctx.prob;
    let which = ctx.cfg.theorem(prob)?;
    let sub = ctx.stage_params()?;
    let eta0 = match (which, ctx.cfg.solver.eta0) {
        (_, Some(e)) => e,
        (Theorem::Thm1, None) => {
            let etas: Vec<f64> = (0..12).map(|i| 1e-5 * 2f64.powi(i)).collect();
            lich_core::solver::estimate_eta0(prob, sub, &etas, &ctx.solver).unwrap_or(f64::NAN)
        }
        (_, None) => f64::NAN,
    };
    let mut inputs = gate_inputs(prob, eta0, ctx.cfg.solver.probes, &ctx.solver)?;
    inputs.mu_hat = ctx.cfg.scenario.mu_hat;
    inputs.k_starstar = ctx.cfg.solver.k_starstar;
    let rep = theorem_gate(prob, which, inputs);
    let mut body = rep.to_csv();
    let q = sub.q;
    let mut extra: Vec<(&str, f64)> = vec![("q", q)];
    let fm = prob.f_minus();
    if fm > 0.0 {
        extra.push(("k0", k0(prob.p, q, prob.h, fm)?));
        extra.push(("phi_q", phi_q(prob.p, q, prob.h, fm)?));
        extra.push(("mu_k0_upper_bound", mu_k0_upper_bound(prob.n, prob.p, prob.h, fm, prob.f_plus())?));
        if eta0 > 0.0 {
            let (k1, k2) = k1q_k2q(prob.n, prob.p, q, prob.h, eta0, fm)?;
            extra.push(("k1", k1));
            extra.push(("k2", k2));
        }
    }
    if prob.int_f() < 0.0 {
        extra.push(("k0_theorem2", k0_theorem2(prob.p, q, prob.h, prob.int_f())?));
    }
    if prob.inf_f() < 0.0 {
        extra.push(("lemma22_lower_bound", lemma22_lower_bound(prob.p, prob.p_flat(), prob.h, prob.inf_f())?));
    }
    for (name, v) in &extra {
        body.push_str(&format!("{name},{},\n", fmt_f64(*v)));
    }
    ctx.write("thresholds.csv", "csv", &body)?;
    let text = rep.to_text();
    ctx.write("thresholds.txt", "csv", &text)?;
    match rep.first_failure() {
        Some(c) => ctx.say(format!("{} gate failed: {} violated", which.name(), c.name)),
        None => ctx.say(format!("{} gate passed", which.name())),
    }
    Ok(rep)
}

fn report_rows(r: &SolveReport, prob: &ProblemData) -> Vec<String> {
    let id = integral_identity_check(&r.u, prob);
    vec![
        r.branch.name().to_string(),
        fmt_f64(r.critical_energy),
        fmt_f64(r.k_attained),
        fmt_f64(r.weak_residual),
        fmt_f64(r.min_u),
        r.lemma22_bound.map_or(String::new(), fmt_f64),
        r.distinctness.map_or(String::new(), fmt_f64),
        fmt_f64(id.gap),
        (r.converged as u8).to_string(),
    ]
}

fn run_solve(ctx: &mut Ctx) -> Result<(), Failure> {
    let rep = gate(ctx)?;
    if !rep.passed {
        ctx.out.code = EXIT_GATE;
        return Ok(());
    }
    let schedule = ctx.schedule()?;
    let reports = match rep.theorem {
        Theorem::Thm1 => {
            let opts =
                PipelineOptions { k_starstar: ctx.cfg.solver.k_starstar, kstar_samples: ctx.cfg.solver.kstar_samples };
            let (a, b, _) = two_solution_pipeline_with(&ctx.prob, &schedule, &rep, opts, &ctx.solver)?;
            vec![a, b]
        }
        _ => vec![single_solution_pipeline(&ctx.prob, &schedule, &rep, &ctx.solver)?],
    };
    let header = [
        "branch",
        "critical_energy",
        "k_attained",
        "weak_residual",
        "min_u",
        "lemma22_bound",
        "distinctness",
        "identity_gap",
        "converged",
    ];
    let rows: Vec<Vec<String>> = reports.iter().map(|r| report_rows(r, &ctx.prob)).collect();
    ctx.write("solve.csv", "csv", &csv(&header, &rows))?;
    let mut stage_rows = Vec::new();
    for r in &reports {
        for (j, s) in r.energy_at_stage.iter().enumerate() {
            stage_rows.push(vec![
                r.branch.name().to_string(),
                j.to_string(),
                fmt_f64(s.eps),
                fmt_f64(s.q),
                fmt_f64(s.energy),
                fmt_f64(s.k),
                (s.converged as u8).to_string(),
            ]);
        }
    }
    ctx.write("stages.csv", "csv", &csv(&["branch", "stage", "eps", "q", "energy", "k", "converged"], &stage_rows))?;
    for r in &reports {
        if ctx.cfg.output.wants("field") {
            let path = ctx.dir.join(format!("u_{}.field", r.branch.name()));
            save_field(&path, &r.u)?;
            ctx.out.files.push(path);
        }
        let msg = format!(
            "{}: critical energy {}, weak residual {}, converged {}",
            r.branch.name(),
            fmt_f64(r.critical_energy),
            fmt_f64(r.weak_residual),
            r.converged
        );
        ctx.say(msg);
        for n in &r.notes {
            ctx.say(format!("  note: {n}"));
        }
    }
    if reports.iter().any(|r| !r.converged) {
        ctx.out.code = EXIT_NONCONVERGED;
    }
    Ok(())
}

fn run_nonexist(ctx: &mut Ctx) -> Result<(), Failure> {
    let prob = &ctx.prob;
    let k = sobolev_k(prob.n, prob.p)?;
    let a_cal = calibrate_a(prob.grid(), prob.p, 1.0, ctx.cfg.solver.probes)?;
    let lambda = match (ctx.cfg.scenario.lambda, ctx.cfg.scenario.mu_hat, ctx.cfg.solver.k_starstar) {
        (Some(l), _, _) => l,
        (None, Some(mu), Some(kss)) => c2_and_lambda(prob.n, prob.p, prob.h, k, a_cal, mu, kss, prob.sup_f())?.lambda,
        _ => {
            return Err(ConfigError("nonexist needs scenario.Lambda, or scenario.mu_hat with solver.k_starstar".into())
                .into())
        }
    };
    let v = nonexistence_check(prob.n, prob.p, k, a_cal, lambda, &prob.a, &prob.f)?;
    // Bounded run: band minimization with ‖u‖_(p*)^p ≤ (K^p + 1 + A)Λ^p.
    let ps = prob.p_star();
    let k_hi = ((k.powf(prob.p) + 1.0 + a_cal) * lambda.powf(prob.p)).powf(ps / prob.p);
    let crit = prob.critical();
    let start = lich_core::minimize::default_init(prob, ps, 0.5 * k_hi, ctx.solver.seed);
    let run = minimize(prob, crit, ConstraintSpec::Band(1e-6 * k_hi, k_hi), &start, &ctx.solver)?;
    let res = weak_residual(&run.minimizer, prob, crit, ctx.solver.delta_reg(prob.p));
    let bounded_converged = run.converged && res <= ctx.solver.tol_residual;
    let rows = vec![
        ("Lambda", lambda),
        ("K", k),
        ("A", a_cal),
        ("lhs", v.lhs),
        ("rhs", v.rhs),
        ("exponent_base", v.exponents.0),
        ("exponent_Lambda", v.exponents.1),
        ("exponent_f", v.exponents.2),
        ("nonexistent", v.nonexistent as u8 as f64),
        ("bounded_run_k", run.k_attained),
        ("bounded_run_residual", res),
        ("bounded_run_converged", bounded_converged as u8 as f64),
    ];
    ctx.write("nonexist.csv", "csv", &name_value_csv(&rows))?;
    ctx.say(if v.nonexistent {
        "verdict: non-existence below Lambda".into()
    } else {
        "verdict: inconclusive (criterion not met)".into()
    });
    ctx.say(format!("bounded-energy run converged: {bounded_converged} (weak residual {})", fmt_f64(res)));
    Ok(())
}

fn run_continuity(ctx: &mut Ctx) -> Result<(), Failure> {
    let sub = ctx.stage_params()?;
    if !(sub.eps > 0.0) {
        return Err(ConfigError("range error: continuity needs eps > 0".into()).into());
    }
    let k = ctx.cfg.scenario.k.unwrap_or_else(|| reference_k(&ctx.prob, sub.q));
    let rel = ctx.cfg.scenario.rel_step.unwrap_or(1e-3);
    let r = continuity_probe(&ctx.prob, sub, k, rel, &ctx.solver)?;
    let rows = vec![
        ("q", sub.q),
        ("eps", sub.eps),
        ("k", k),
        ("rel_step", rel),
        ("mu_k", r.mu_k),
        ("max_jump", r.max_jump),
        ("converged", r.converged as u8 as f64),
    ];
    ctx.write("continuity.csv", "csv", &name_value_csv(&rows))?;
    ctx.say(format!("max |mu(k(1±r)) - mu(k)| = {}", fmt_f64(r.max_jump)));
    if !r.converged {
        ctx.out.code = EXIT_NONCONVERGED;
    }
    Ok(())
}
