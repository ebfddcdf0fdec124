//! Solution pipelines: continuation in `(ε, q)`, the negative-energy and
//! mountain-pass branches, the coefficient scaling and residual checks.
//!
//! Every stage of a pipeline works on the regularized functional. The last
//! solve switches to `ε = 0`, `q = p*` and starts from the previous iterate.

use crate::eigen::{eta_scan, lambda_f};
use crate::energy::{critical_energy, energy, first_variation, sobolev_norm, ProblemData, SubcriticalParams};
use crate::minimize::{minimize, sphere_multistart, rescale_to, ConstraintSpec, MinimizeResult, SolverConfig};
use crate::thresholds::{
    calibrate_a, k0, k0_theorem2, k1q_k2q, lemma22_lower_bound, phi_q, sobolev_k, theorem_gate, GateInputs, Theorem,
    ThresholdReport,
};
use crate::torus::{integrate, lp_norm, lp_norm_pow, ScalarField};
use crate::Error;

/// Stage list `(ε_j, q_j)` with `ε` strictly decreasing and `q` strictly increasing below `p*`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationSchedule {
    stages: Vec<(f64, f64)>,
}

impl ContinuationSchedule {
    pub fn new(prob: &ProblemData, stages: Vec<(f64, f64)>) -> Result<Self, Error> {
        if stages.is_empty() {
            return Err(Error::Domain("schedule needs at least one stage".into()));
        }
        for &(eps, q) in &stages {
            if !(eps > 0.0) || !(q < prob.p_star()) {
                return Err(Error::Domain(format!("stage (eps = {eps}, q = {q}) must have eps > 0 and q < p_star")));
            }
            SubcriticalParams::new(prob, q, eps)?;
        }
        if stages.windows(2).any(|w| !(w[1].0 < w[0].0 && w[1].1 > w[0].1)) {
            return Err(Error::Domain("schedule must have decreasing eps and increasing q".into()));
        }
        Ok(ContinuationSchedule { stages })
    }

    /// `ε_j = ε₀2^(−j)`, `q_j = p* − (p* − q_start)2^(−j)` with `q_start = (p♭ + p*)/2`.
    pub fn geometric(prob: &ProblemData, eps0: f64, stages: usize) -> Result<Self, Error> {
        let (pf, ps) = (prob.p_flat(), prob.p_star());
        let q_start = 0.5 * (pf + ps);
        let list = (0..stages)
            .map(|j| {
                let r = 0.5f64.powi(j as i32);
                (eps0 * r, ps - (ps - q_start) * r)
            })
            .collect();
        Self::new(prob, list)
    }

    pub fn default_for(prob: &ProblemData) -> Result<Self, Error> {
        Self::geometric(prob, 0.1, 8)
    }

    pub fn stages(&self) -> &[(f64, f64)] {
        &self.stages
    }

    pub fn eps_sequence(&self) -> Vec<f64> {
        self.stages.iter().map(|s| s.0).collect()
    }

    pub fn q_sequence(&self) -> Vec<f64> {
        self.stages.iter().map(|s| s.1).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    NegativeEnergy,
    MountainPass,
    Single,
}

impl Branch {
    pub fn name(self) -> &'static str {
        match self {
            Branch::NegativeEnergy => "negative_energy",
            Branch::MountainPass => "mountain_pass",
            Branch::Single => "single",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageRecord {
    pub eps: f64,
    pub q: f64,
    pub energy: f64,
    pub k: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub branch: Branch,
    pub u: ScalarField,
    pub energy_at_stage: Vec<StageRecord>,
    /// Indices of schedule stages skipped because `∫a ≤ φ(q)` failed.
    pub skipped_stages: Vec<usize>,
    pub critical_energy: f64,
    pub k_attained: f64,
    pub weak_residual: f64,
    pub min_u: f64,
    /// `None` when `inf f ≥ 0` or `a ≡ 0`.
    pub lemma22_bound: Option<f64>,
    /// `‖u − u_sibling‖_(p*)`.
    pub distinctness: Option<f64>,
    pub converged: bool,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathState {
    pub nodes: Vec<ScalarField>,
    pub ks: Vec<f64>,
    pub energies: Vec<f64>,
    pub max_index: usize,
    pub max_energy: f64,
}

/// Scale the coefficients so that `|h| = (η₀/p*)∫|f̃⁻|`.
///
/// Returns the scaled problem and `c`; `u = c·ũ` maps solutions back.
pub fn rescale_problem(prob: &ProblemData, eta0: f64) -> Result<(ProblemData, f64), Error> {
    let fm = prob.f_minus();
    if !(fm > 0.0) {
        return Err(Error::Degenerate("rescaling needs f⁻ ≢ 0".into()));
    }
    if !(eta0 > 0.0) {
        return Err(Error::Domain(format!("eta0 must be positive, got {eta0}")));
    }
    let ps = prob.p_star();
    let p = prob.p;
    let cp = ps * prob.h.abs() / (eta0 * fm);
    let c = cp.powf(1.0 / (ps - p));
    let a_scale = c.powf(-(ps + p));
    let scaled = ProblemData::new(p, prob.h, prob.f.scale(cp), prob.a.scale(a_scale))?;
    Ok((scaled, c))
}

/// `c` under the literal reading with `∫|f̃⁻|` inside its own definition:
/// `c^(2(p*−p)) = p*|h|/(η₀∫|f⁻|)`.
pub fn rescale_alternative_c(prob: &ProblemData, eta0: f64) -> Result<f64, Error> {
    let fm = prob.f_minus();
    if !(fm > 0.0) || !(eta0 > 0.0) {
        return Err(Error::Degenerate("rescaling needs f⁻ ≢ 0 and eta0 > 0".into()));
    }
    let ps = prob.p_star();
    Ok((ps * prob.h.abs() / (eta0 * fm)).powf(0.5 / (ps - prob.p)))
}

/// `‖G(u)‖_(L²)/(1 + ‖u‖^(p−1))`, `+∞` when the energy is singular at `u`.
pub fn weak_residual(u: &ScalarField, prob: &ProblemData, sub: SubcriticalParams, delta_reg: f64) -> f64 {
    match first_variation(u, prob, sub, delta_reg) {
        Ok(g) => {
            let r = integrate(&g.map(|x| x * x)).sqrt();
            let r = r / (1.0 + sobolev_norm(u, prob.p, delta_reg).powf(prob.p - 1.0));
            if r.is_finite() {
                r
            } else {
                f64::INFINITY
            }
        }
        Err(_) => f64::INFINITY,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    /// Set when the data make `lhs < 0 ≤ rhs` unavoidable.
    pub contradiction: bool,
}

/// Integrated equation: `∫h u^(p−1) = ∫f u^(p*−1) + ∫a u^(−p*−1)`.
pub fn integral_identity_check(u: &ScalarField, prob: &ProblemData) -> IdentityCheck {
    let (p, ps) = (prob.p, prob.p_star());
    let lhs = prob.h * integrate(&u.map(|x| x.powf(p - 1.0)));
    let rhs = integrate(&prob.f.zip_map(u, |f, x| f * x.powf(ps - 1.0)))
        + integrate(&prob.a.zip_map(u, |a, x| if a == 0.0 { 0.0 } else { a * x.powf(-ps - 1.0) }));
    let gap = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
    let contradiction = prob.h < 0.0 && prob.inf_f() >= 0.0 && prob.a.min() >= 0.0;
    IdentityCheck { lhs, rhs, gap, contradiction }
}

/// Everything the gate needs besides `η₀`: `λ_f`, `K(n,p)` and the calibrated `A`.
pub fn gate_inputs(prob: &ProblemData, eta0: f64, probes: usize, cfg: &SolverConfig) -> Result<GateInputs, Error> {
    Ok(GateInputs {
        lambda_f: lambda_f(prob, cfg)?.lambda,
        eta0,
        k: sobolev_k(prob.n, prob.p)?,
        a: calibrate_a(prob.grid(), prob.p, 1.0, probes)?,
        mu_hat: None,
        k_starstar: None,
    })
}

/// Largest `η` on `etas` with `λ_{f,η,q} ≥ λ_f − δ`, `δ = (λ_f − |h|)/2`.
pub fn estimate_eta0(prob: &ProblemData, sub: SubcriticalParams, etas: &[f64], cfg: &SolverConfig) -> Result<f64, Error> {
    let lf = lambda_f(prob, cfg)?.lambda;
    if !(lf > prob.h.abs()) {
        return Err(Error::Gate(format!("|h| = {} is not below lambda_f = {lf}", prob.h.abs())));
    }
    let delta = if lf.is_finite() { 0.5 * (lf - prob.h.abs()) } else { f64::INFINITY };
    let scan = eta_scan(prob, sub, etas, delta, cfg)?;
    scan.eta0.ok_or_else(|| Error::Infeasible("no scanned eta keeps lambda_{f,eta,q} above lambda_f - delta".into()))
}

fn tolerance_scaled(cfg: &SolverConfig, factor: f64) -> SolverConfig {
    SolverConfig { tol_grad: cfg.tol_grad * factor, ..cfg.clone() }
}

fn sphere_warm(
    prob: &ProblemData,
    sub: SubcriticalParams,
    k: f64,
    warm: &ScalarField,
    cfg: &SolverConfig,
) -> Result<MinimizeResult, Error> {
    minimize(prob, sub, ConstraintSpec::Sphere(k), &rescale_to(warm, sub.q, k)?, cfg)
}

/// Bracket `[k_lo, k_hi]` whose sphere minima have opposite signs, refined by
/// bisection in `ln k`. Returns the endpoint with `μ ≤ 0`.
fn zero_energy_anchor(
    prob: &ProblemData,
    sub: SubcriticalParams,
    lo: (f64, MinimizeResult),
    hi: (f64, MinimizeResult),
    cfg: &SolverConfig,
) -> Result<(f64, MinimizeResult), Error> {
    let (mut a, mut b) = (lo, hi);
    if (a.1.mu <= 0.0) == (b.1.mu <= 0.0) {
        return Err(Error::Degenerate(format!(
            "no sign change of mu between k = {} and k = {}",
            a.0, b.0
        )));
    }
    for _ in 0..40 {
        if b.0 / a.0 - 1.0 < 1e-6 {
            break;
        }
        let k = (a.0 * b.0).sqrt();
        let warm = if a.1.mu.abs() < b.1.mu.abs() { &a.1.minimizer } else { &b.1.minimizer };
        let r = sphere_warm(prob, sub, k, warm, cfg)?;
        if (r.mu <= 0.0) == (a.1.mu <= 0.0) {
            a = (k, r);
        } else {
            b = (k, r);
        }
    }
    Ok(if a.1.mu <= 0.0 { a } else { b })
}

/// Root of `λ(k)` (sphere multiplier) in `ln k`, starting from a bracket with
/// `λ(lo) > 0 > λ(hi)`. The sphere minimizer at the root is a free critical point.
fn multiplier_root(
    prob: &ProblemData,
    sub: SubcriticalParams,
    lo: (f64, MinimizeResult),
    hi: (f64, MinimizeResult),
    cfg: &SolverConfig,
) -> Result<(f64, MinimizeResult), Error> {
    let delta = cfg.delta_reg(prob.p);
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (a.1.multiplier, b.1.multiplier);
    let mut side = 0i8;
    let mut best = if fa.abs() < fb.abs() { a.clone() } else { b.clone() };
    for _ in 0..80 {
        let (la, lb) = (a.0.ln(), b.0.ln());
        if lb - la < 1e-14 {
            break;
        }
        let mut s = lb - fb * (lb - la) / (fb - fa);
        if !(s > la && s < lb) {
            s = 0.5 * (la + lb);
        }
        let k = s.exp();
        let warm = if (s - la) < (lb - s) { &a.1.minimizer } else { &b.1.minimizer };
        let r = sphere_warm(prob, sub, k, warm, cfg)?;
        let fr = r.multiplier;
        let res = weak_residual(&r.minimizer, prob, sub, delta);
        if fr.abs() < best.1.multiplier.abs() {
            best = (k, r.clone());
        }
        if res <= 0.1 * cfg.tol_residual && r.converged {
            return Ok((k, r));
        }
        if fr > 0.0 {
            a = (k, r);
            fa = fr;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        } else {
            b = (k, r);
            fb = fr;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        }
    }
    Ok(best)
}

/// Expand `[k/β, kβ]` until the multiplier changes sign from `+` to `−`.
fn multiplier_bracket(
    prob: &ProblemData,
    sub: SubcriticalParams,
    k: f64,
    warm: &ScalarField,
    cfg: &SolverConfig,
) -> Result<((f64, MinimizeResult), (f64, MinimizeResult)), Error> {
    let mid = sphere_warm(prob, sub, k, warm, cfg)?;
    let (mut lo, mut hi) = if mid.multiplier > 0.0 {
        let up = k * 1.5;
        ((k, mid.clone()), (up, sphere_warm(prob, sub, up, &mid.minimizer, cfg)?))
    } else {
        let down = k / 1.5;
        ((down, sphere_warm(prob, sub, down, &mid.minimizer, cfg)?), (k, mid.clone()))
    };
    for _ in 0..60 {
        if lo.1.multiplier > 0.0 && hi.1.multiplier <= 0.0 {
            return Ok((lo, hi));
        }
        if lo.1.multiplier <= 0.0 {
            let down = lo.0 / 1.5;
            let r = sphere_warm(prob, sub, down, &lo.1.minimizer, cfg)?;
            hi = lo;
            lo = (down, r);
        } else {
            let up = hi.0 * 1.5;
            let r = sphere_warm(prob, sub, up, &hi.1.minimizer, cfg)?;
            lo = hi;
            hi = (up, r);
        }
    }
    Err(Error::Degenerate(format!("no sign change of the sphere multiplier near k = {k}")))
}

fn finish_report(
    branch: Branch,
    prob: &ProblemData,
    u: ScalarField,
    stages: Vec<StageRecord>,
    skipped: Vec<usize>,
    solved: bool,
    notes: Vec<String>,
    cfg: &SolverConfig,
) -> SolveReport {
    let delta = cfg.delta_reg(prob.p);
    let crit = prob.critical();
    let weak = weak_residual(&u, prob, crit, delta);
    let lemma22 = if prob.inf_f() < 0.0 && prob.a.max() > 0.0 {
        lemma22_lower_bound(prob.p, prob.p_flat(), prob.h, prob.inf_f()).ok()
    } else {
        None
    };
    SolveReport {
        branch,
        critical_energy: critical_energy(&u, prob, delta),
        k_attained: lp_norm_pow(&u, prob.p_star()),
        weak_residual: weak,
        min_u: u.min(),
        lemma22_bound: lemma22,
        distinctness: None,
        converged: solved && weak <= cfg.tol_residual,
        energy_at_stage: stages,
        skipped_stages: skipped,
        notes,
        u,
    }
}

/// Interpolated path between the anchors on log-spaced spheres.
fn initial_path(q: f64, u_a: &ScalarField, u_b: &ScalarField, nodes: usize) -> Result<(Vec<ScalarField>, Vec<f64>), Error> {
    let (ka, kb) = (lp_norm_pow(u_a, q), lp_norm_pow(u_b, q));
    let mut path = Vec::with_capacity(nodes);
    let mut ks = Vec::with_capacity(nodes);
    for i in 0..nodes {
        let t = i as f64 / (nodes - 1) as f64;
        let k = ((1.0 - t) * ka.ln() + t * kb.ln()).exp();
        let node = if i == 0 {
            u_a.clone()
        } else if i == nodes - 1 {
            u_b.clone()
        } else {
            rescale_to(&u_a.scale(1.0 - t).add(&u_b.scale(t)), q, k)?
        };
        path.push(node);
        ks.push(if i == 0 { ka } else if i == nodes - 1 { kb } else { k });
    }
    Ok((path, ks))
}

/// Mountain pass between two anchors of nonpositive energy, also returning the path.
///
/// Interior nodes keep their `∫|u|^q` and are relaxed within their spheres,
/// which is descent orthogonal to the path direction `∂_k`. The highest node
/// is then refined to a zero of the sphere multiplier.
pub fn mountain_pass_with_path(
    prob: &ProblemData,
    sub: SubcriticalParams,
    u_a: &ScalarField,
    u_b: &ScalarField,
    cfg: &SolverConfig,
) -> Result<(SolveReport, PathState), Error> {
    let delta = cfg.delta_reg(prob.p);
    let q = sub.q;
    let stage = |u: &ScalarField, ok: bool| StageRecord {
        eps: sub.eps,
        q,
        energy: energy(u, prob, sub, delta),
        k: lp_norm_pow(u, q),
        converged: ok,
    };
    if u_a.grid() != prob.grid() || u_b.grid() != prob.grid() {
        return Err(Error::GridMismatch("anchor grids differ from the problem grid".into()));
    }
    if u_a.sup_distance(u_b) == 0.0 {
        let rec = stage(u_a, false);
        let path = PathState {
            nodes: vec![u_a.clone()],
            ks: vec![rec.k],
            energies: vec![rec.energy],
            max_index: 0,
            max_energy: rec.energy,
        };
        let rep = finish_report(
            Branch::MountainPass,
            prob,
            u_a.clone(),
            vec![rec],
            vec![],
            false,
            vec!["degenerate path: anchors coincide, zero path length".into()],
            cfg,
        );
        return Ok((rep, path));
    }
    let (u_a, u_b) = if lp_norm_pow(u_a, q) <= lp_norm_pow(u_b, q) { (u_a, u_b) } else { (u_b, u_a) };
    let nodes = cfg.path_nodes.max(3);
    let (init, ks) = initial_path(q, u_a, u_b, nodes)?;
    let relaxed: Vec<Result<MinimizeResult, Error>> = {
        use rayon::prelude::*;
        init.par_iter()
            .zip(ks.par_iter())
            .map(|(u, &k)| minimize(prob, sub, ConstraintSpec::Sphere(k), u, cfg))
            .collect()
    };
    let mut results = Vec::with_capacity(nodes);
    for (i, r) in relaxed.into_iter().enumerate() {
        let mut r = r?;
        if i == 0 || i == nodes - 1 {
            // endpoints stay fixed
            let u = if i == 0 { u_a.clone() } else { u_b.clone() };
            r.mu = energy(&u, prob, sub, delta);
            r.minimizer = u;
        }
        results.push(r);
    }
    let energies: Vec<f64> = results.iter().map(|r| r.mu).collect();
    let m = energies
        .iter()
        .enumerate()
        .fold(0, |best, (i, &e)| if e > energies[best] { i } else { best });
    let path = PathState {
        nodes: results.iter().map(|r| r.minimizer.clone()).collect(),
        ks: ks.clone(),
        energies: energies.clone(),
        max_index: m,
        max_energy: energies[m],
    };
    if m == 0 || m == nodes - 1 || !(energies[m] > 0.0) {
        let u = results[m].minimizer.clone();
        let rec = stage(&u, false);
        let rep = finish_report(
            Branch::MountainPass,
            prob,
            u,
            vec![rec],
            vec![],
            false,
            vec![format!("path collapse: maximal node {m} of {nodes} is not an interior positive peak; try more path nodes")],
            cfg,
        );
        return Ok((rep, path));
    }
    let (lo, hi) = if results[m].multiplier > 0.0 && results[m + 1].multiplier <= 0.0 {
        ((ks[m], results[m].clone()), (ks[m + 1], results[m + 1].clone()))
    } else if results[m - 1].multiplier > 0.0 && results[m].multiplier <= 0.0 {
        ((ks[m - 1], results[m - 1].clone()), (ks[m], results[m].clone()))
    } else {
        multiplier_bracket(prob, sub, ks[m], &results[m].minimizer, cfg)?
    };
    let (_, r) = multiplier_root(prob, sub, lo, hi, cfg)?;
    let ok = r.converged && weak_residual(&r.minimizer, prob, sub, delta) <= cfg.tol_residual;
    let rec = stage(&r.minimizer, ok);
    let mut rep = finish_report(Branch::MountainPass, prob, r.minimizer, vec![rec], vec![], ok, vec![], cfg);
    rep.converged = ok;
    rep.weak_residual = weak_residual(&rep.u, prob, sub, delta);
    rep.k_attained = lp_norm_pow(&rep.u, q);
    Ok((rep, path))
}

/// [`mountain_pass_with_path`] without the path. The residual and `k` refer to `sub`.
pub fn mountain_pass(
    prob: &ProblemData,
    sub: SubcriticalParams,
    u_a: &ScalarField,
    u_b: &ScalarField,
    cfg: &SolverConfig,
) -> Result<SolveReport, Error> {
    mountain_pass_with_path(prob, sub, u_a, u_b, cfg).map(|r| r.0)
}

/// Saddle refinement for a later stage, warm-started from the previous saddle.
fn polish_saddle(
    prob: &ProblemData,
    sub: SubcriticalParams,
    prev: &ScalarField,
    cfg: &SolverConfig,
) -> Result<MinimizeResult, Error> {
    let k = lp_norm_pow(prev, sub.q);
    let (lo, hi) = multiplier_bracket(prob, sub, k, prev, cfg)?;
    multiplier_root(prob, sub, lo, hi, cfg).map(|r| r.1)
}

/// Landmarks of the Theorem-1 construction at one stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageLandmarks {
    pub k_lower: f64,
    pub k0: f64,
    pub k1: f64,
    pub k2: f64,
}

fn thm1_landmarks(prob: &ProblemData, sub: SubcriticalParams, eta0: f64, k_lower: f64) -> Result<StageLandmarks, Error> {
    let fm = prob.f_minus();
    let k0v = k0(prob.p, sub.q, prob.h, fm)?;
    let (k1, k2) = k1q_k2q(prob.n, prob.p, sub.q, prob.h, eta0, fm)?;
    Ok(StageLandmarks { k_lower, k0: k0v, k1, k2 })
}

/// Largest `k = start·2^(−i)` with `μ_k > 0`.
pub fn positive_floor(prob: &ProblemData, sub: SubcriticalParams, start: f64, cfg: &SolverConfig) -> Result<f64, Error> {
    let mut k = start;
    let mut warm: Option<ScalarField> = None;
    for i in 0..60 {
        let r = sphere_multistart(prob, sub, k, warm.as_ref(), cfg.seed.wrapping_add(i), cfg)?;
        if r.mu > 0.0 {
            return Ok(k);
        }
        warm = Some(r.minimizer);
        k *= 0.5;
    }
    Err(Error::Degenerate("no small k with positive sphere minimum".into()))
}

fn stage_admissible(prob: &ProblemData, q: f64) -> bool {
    phi_q(prob.p, q, prob.h, prob.f_minus()).map_or(false, |phi| prob.int_a() <= phi)
}

fn gate_eta0(gate: &ThresholdReport, which: &[Theorem]) -> Result<f64, Error> {
    if !which.contains(&gate.theorem) {
        return Err(Error::Gate(format!("gate report is for {}", gate.theorem.name())));
    }
    if !gate.passed {
        let name = gate.first_failure().map_or("unknown clause", |c| c.name);
        return Err(Error::Gate(format!("{} gate failed at {name}", gate.theorem.name())));
    }
    Ok(gate.inputs.iter().find(|(n, _)| *n == "eta0").map_or(f64::NAN, |x| x.1))
}

/// Branch-1 continuation: band minimization on `[k_*, k₁]` per stage.
fn negative_branch(
    prob: &ProblemData,
    schedule: &ContinuationSchedule,
    eta0: f64,
    cfg: &SolverConfig,
) -> Result<SolveReport, Error> {
    let delta = cfg.delta_reg(prob.p);
    let mut stages = Vec::new();
    let mut skipped = Vec::new();
    let mut notes = Vec::new();
    let mut u: Option<ScalarField> = None;
    let mut all_ok = true;
    let mut band = (0.0, 0.0);
    for (j, &(eps, q)) in schedule.stages().iter().enumerate() {
        if !stage_admissible(prob, q) {
            skipped.push(j);
            continue;
        }
        let sub = SubcriticalParams::new(prob, q, eps)?;
        let lm = thm1_landmarks(prob, sub, eta0, 0.0)?;
        let k_low = positive_floor(prob, sub, 0.5 * lm.k0.min(1.0), cfg)?;
        band = (k_low, lm.k1);
        let start = match &u {
            Some(w) => w.clone(),
            None => sphere_multistart(prob, sub, lm.k0, None, cfg.seed, cfg)?.minimizer,
        };
        let r = minimize(prob, sub, ConstraintSpec::Band(k_low, lm.k1), &start, cfg)?;
        all_ok &= r.converged;
        if !ConstraintSpec::Band(k_low * 1.001, lm.k1 * 0.999).contains(r.k_attained, 0.0) {
            notes.push(format!("stage {j}: band minimizer on the boundary at k = {}", r.k_attained));
        }
        stages.push(StageRecord { eps, q, energy: r.mu, k: r.k_attained, converged: r.converged });
        u = Some(r.minimizer);
    }
    let Some(prev) = u else {
        return Err(Error::Gate("every stage failed the check int a <= phi(q)".into()));
    };
    let crit = prob.critical();
    let (lo, hi) = (band.0, k1q_k2q(prob.n, prob.p, crit.q, prob.h, eta0, prob.f_minus())?.0.max(band.1));
    let mut fin = None;
    for factor in [1.0, 1e-2, 1e-4] {
        let c = tolerance_scaled(cfg, factor);
        let r = minimize(prob, crit, ConstraintSpec::Band(lo, hi), fin.as_ref().map_or(&prev, |r: &MinimizeResult| &r.minimizer), &c)?;
        let done = weak_residual(&r.minimizer, prob, crit, delta) <= cfg.tol_residual;
        fin = Some(r);
        if done {
            break;
        }
    }
    let fin = fin.expect("at least one final solve");
    all_ok &= fin.converged;
    stages.push(StageRecord { eps: 0.0, q: crit.q, energy: fin.mu, k: fin.k_attained, converged: fin.converged });
    Ok(finish_report(Branch::NegativeEnergy, prob, fin.minimizer, stages, skipped, all_ok, notes, cfg))
}

/// Options for the Theorem-1 pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PipelineOptions {
    /// Upper end of the second zero-energy bracket; searched by doubling from `k₂` when absent.
    pub k_starstar: Option<f64>,
    /// Number of log-spaced samples on `[k₁, k₂]` for locating `k*`.
    pub kstar_samples: usize,
}

/// Diagnostics of the first mountain-pass stage.
#[derive(Debug, Clone, PartialEq)]
pub struct MountainPassSetup {
    pub landmarks: StageLandmarks,
    pub k_bar1: f64,
    pub k_bar2: f64,
    pub k_starstar: f64,
    pub k_star: f64,
    pub mu_k_star: f64,
    pub path: PathState,
}

fn saddle_branch(
    prob: &ProblemData,
    schedule: &ContinuationSchedule,
    eta0: f64,
    opts: PipelineOptions,
    cfg: &SolverConfig,
) -> Result<(SolveReport, Option<MountainPassSetup>), Error> {
    let delta = cfg.delta_reg(prob.p);
    let mut stages = Vec::new();
    let mut skipped = Vec::new();
    let mut notes = Vec::new();
    let mut u: Option<ScalarField> = None;
    let mut setup = None;
    let mut all_ok = true;
    for (j, &(eps, q)) in schedule.stages().iter().enumerate() {
        if !stage_admissible(prob, q) {
            skipped.push(j);
            continue;
        }
        let sub = SubcriticalParams::new(prob, q, eps)?;
        let r = match &u {
            Some(prev) => polish_saddle(prob, sub, prev, cfg)?,
            None => {
                let (rep, s) = first_mountain_pass(prob, sub, eta0, opts, cfg)?;
                notes.extend(rep.notes.iter().map(|n| format!("stage {j}: {n}")));
                setup = Some(s);
                MinimizeResult {
                    mu: energy(&rep.u, prob, sub, delta),
                    multiplier: 0.0,
                    k_attained: rep.k_attained,
                    iterations: 0,
                    grad_norm: rep.weak_residual,
                    scale: 0.0,
                    converged: rep.converged,
                    minimizer: rep.u,
                }
            }
        };
        let ok = r.converged && weak_residual(&r.minimizer, prob, sub, delta) <= cfg.tol_residual;
        all_ok &= ok;
        stages.push(StageRecord { eps, q, energy: r.mu, k: r.k_attained, converged: ok });
        u = Some(r.minimizer);
    }
    let Some(prev) = u else {
        return Err(Error::Gate("every stage failed the check int a <= phi(q)".into()));
    };
    let crit = prob.critical();
    let mut best: Option<MinimizeResult> = None;
    for factor in [1.0, 1e-2, 1e-4] {
        let c = tolerance_scaled(cfg, factor);
        let start = best.as_ref().map_or(&prev, |r| &r.minimizer);
        let r = polish_saddle(prob, crit, start, &c)?;
        let done = r.converged && weak_residual(&r.minimizer, prob, crit, delta) <= cfg.tol_residual;
        best = Some(r);
        if done {
            break;
        }
    }
    let fin = best.expect("at least one final solve");
    all_ok &= fin.converged;
    stages.push(StageRecord { eps: 0.0, q: crit.q, energy: fin.mu, k: fin.k_attained, converged: fin.converged });
    Ok((finish_report(Branch::MountainPass, prob, fin.minimizer, stages, skipped, all_ok, notes, cfg), setup))
}

fn first_mountain_pass(
    prob: &ProblemData,
    sub: SubcriticalParams,
    eta0: f64,
    opts: PipelineOptions,
    cfg: &SolverConfig,
) -> Result<(SolveReport, MountainPassSetup), Error> {
    let lm = thm1_landmarks(prob, sub, eta0, 0.0)?;
    let at = |k: f64, warm: Option<&ScalarField>, s: u64| sphere_multistart(prob, sub, k, warm, cfg.seed.wrapping_add(s), cfg);
    let r0 = at(lm.k0, None, 0)?;
    let r1 = at(lm.k1, Some(&r0.minimizer), 1)?;
    let (kb1, anchor1) = zero_energy_anchor(prob, sub, (lm.k0, r0), (lm.k1, r1.clone()), cfg)?;
    let n_star = opts.kstar_samples.max(2);
    let mut k_star = lm.k1;
    let mut mu_star = r1.mu;
    let mut warm = r1.minimizer.clone();
    for i in 1..n_star {
        let k = lm.k1 * (lm.k2 / lm.k1).powf(i as f64 / (n_star - 1) as f64);
        let r = at(k, Some(&warm), 2 + i as u64)?;
        if r.mu > mu_star {
            k_star = k;
            mu_star = r.mu;
        }
        warm = r.minimizer;
    }
    let r2 = at(lm.k2, Some(&warm), 100)?;
    let (kss, rss) = match opts.k_starstar {
        Some(k) => (k, at(k, Some(&r2.minimizer), 101)?),
        None => {
            let mut k = lm.k2;
            let mut r = r2.clone();
            let mut found = None;
            for i in 0..80 {
                k *= 2.0;
                r = at(k, Some(&r.minimizer), 200 + i)?;
                if r.mu < 0.0 {
                    found = Some((k, r.clone()));
                    break;
                }
            }
            found.ok_or_else(|| Error::Degenerate("sphere minima stay positive beyond k2".into()))?
        }
    };
    let (kb2, anchor2) = zero_energy_anchor(prob, sub, (lm.k2, r2), (kss, rss), cfg)?;
    let (mut rep, path) = mountain_pass_with_path(prob, sub, &anchor1.minimizer, &anchor2.minimizer, cfg)?;
    let e_sub = energy(&rep.u, prob, sub, cfg.delta_reg(prob.p));
    if e_sub < mu_star - cfg.tol_energy * (1.0 + mu_star.abs()) {
        rep.notes.push(format!("saddle energy {e_sub} below mu at k* = {mu_star}"));
    }
    let setup = MountainPassSetup {
        landmarks: lm,
        k_bar1: kb1,
        k_bar2: kb2,
        k_starstar: kss,
        k_star,
        mu_k_star: mu_star,
        path,
    };
    Ok((rep, setup))
}

/// Both Theorem-1 branches, run concurrently.
pub fn two_solution_pipeline(
    prob: &ProblemData,
    schedule: &ContinuationSchedule,
    gate: &ThresholdReport,
    cfg: &SolverConfig,
) -> Result<(SolveReport, SolveReport), Error> {
    two_solution_pipeline_with(prob, schedule, gate, PipelineOptions { kstar_samples: 6, ..Default::default() }, cfg)
        .map(|(a, b, _)| (a, b))
}

/// [`two_solution_pipeline`] with options, also returning the mountain-pass setup.
pub fn two_solution_pipeline_with(
    prob: &ProblemData,
    schedule: &ContinuationSchedule,
    gate: &ThresholdReport,
    opts: PipelineOptions,
    cfg: &SolverConfig,
) -> Result<(SolveReport, SolveReport, Option<MountainPassSetup>), Error> {
    let eta0 = gate_eta0(gate, &[Theorem::Thm1])?;
    let (b1, b2) = rayon::join(
        || negative_branch(prob, schedule, eta0, cfg),
        || saddle_branch(prob, schedule, eta0, opts, cfg),
    );
    let (mut b1, (mut b2, setup)) = (b1?, b2?);
    let d = lp_norm(&b1.u.sub(&b2.u), prob.p_star());
    b1.distinctness = Some(d);
    b2.distinctness = Some(d);
    if b1.converged && b2.converged && d < cfg.distinct_tol {
        b1.notes.push(format!("branches are not distinct: distance {d}"));
        b2.notes.push(format!("branches are not distinct: distance {d}"));
    }
    Ok((b1, b2, setup))
}

/// Theorem-2 pipeline: band minimization on `[k_*, k_**]` with both ends
/// pushed out until their sphere minima exceed the minimum at `k₀`.
pub fn single_solution_pipeline(
    prob: &ProblemData,
    schedule: &ContinuationSchedule,
    gate: &ThresholdReport,
    cfg: &SolverConfig,
) -> Result<SolveReport, Error> {
    gate_eta0(gate, &[Theorem::Thm2Case1, Theorem::Thm2Case2])?;
    let delta = cfg.delta_reg(prob.p);
    let mut stages = Vec::new();
    let mut notes = Vec::new();
    let mut u: Option<ScalarField> = None;
    let mut band: Option<(f64, f64)> = None;
    let mut all_ok = true;
    for (j, &(eps, q)) in schedule.stages().iter().enumerate() {
        let sub = SubcriticalParams::new(prob, q, eps)?;
        let (lo, hi) = match band {
            Some(b) => b,
            None => {
                let b = thm2_band(prob, sub, cfg)?;
                band = Some(b);
                b
            }
        };
        let start = match &u {
            Some(w) => w.clone(),
            None => sphere_multistart(prob, sub, (lo * hi).sqrt(), None, cfg.seed, cfg)?.minimizer,
        };
        let r = minimize(prob, sub, ConstraintSpec::Band(lo, hi), &start, cfg)?;
        if !ConstraintSpec::Band(lo * 1.001, hi * 0.999).contains(r.k_attained, 0.0) {
            notes.push(format!("stage {j}: band minimizer on the boundary at k = {}", r.k_attained));
        }
        all_ok &= r.converged;
        stages.push(StageRecord { eps, q, energy: r.mu, k: r.k_attained, converged: r.converged });
        u = Some(r.minimizer);
    }
    let (lo, hi) = band.expect("schedule is nonempty");
    let crit = prob.critical();
    let mut cur = u.expect("schedule is nonempty");
    let mut fin = None;
    for factor in [1.0, 1e-2, 1e-4] {
        let r = minimize(prob, crit, ConstraintSpec::Band(lo, hi), &cur, &tolerance_scaled(cfg, factor))?;
        let done = weak_residual(&r.minimizer, prob, crit, delta) <= cfg.tol_residual;
        cur = r.minimizer.clone();
        fin = Some(r);
        if done {
            break;
        }
    }
    let fin = fin.expect("at least one final solve");
    all_ok &= fin.converged;
    stages.push(StageRecord { eps: 0.0, q: crit.q, energy: fin.mu, k: fin.k_attained, converged: fin.converged });
    Ok(finish_report(Branch::Single, prob, fin.minimizer, stages, vec![], all_ok, notes, cfg))
}

fn thm2_band(prob: &ProblemData, sub: SubcriticalParams, cfg: &SolverConfig) -> Result<(f64, f64), Error> {
    let kc = k0_theorem2(prob.p, sub.q, prob.h, prob.int_f())?;
    let mid = sphere_multistart(prob, sub, kc, None, cfg.seed, cfg)?;
    let mut bounds = [kc, kc];
    for (side, factor) in [(0usize, 0.5), (1, 2.0)] {
        let mut k = kc;
        let mut warm = mid.minimizer.clone();
        let mut found = false;
        for i in 0..80 {
            k *= factor;
            let r = sphere_multistart(prob, sub, k, Some(&warm), cfg.seed.wrapping_add(i), cfg)?;
            warm = r.minimizer;
            if r.mu > mid.mu + 1e-3 * (1.0 + mid.mu.abs()) {
                found = true;
                break;
            }
        }
        if !found {
            return Err(Error::Degenerate("sphere minima do not grow away from k0".into()));
        }
        bounds[side] = k * factor * factor;
    }
    Ok((bounds[0], bounds[1]))
}

/// Gate for `which` with freshly computed inputs; `eta0` defaults to an
/// [`estimate_eta0`] scan at the first stage of the default schedule.
pub fn compute_gate(
    prob: &ProblemData,
    which: Theorem,
    eta0: Option<f64>,
    probes: usize,
    cfg: &SolverConfig,
) -> Result<ThresholdReport, Error> {
    let eta0 = match (which, eta0) {
        (_, Some(e)) => e,
        (Theorem::Thm1, None) => {
            let (eps, q) = ContinuationSchedule::default_for(prob)?.stages()[0];
            let sub = SubcriticalParams::new(prob, q, eps)?;
            let etas: Vec<f64> = (0..12).map(|i| 1e-5 * 2f64.powi(i)).collect();
            estimate_eta0(prob, sub, &etas, cfg).unwrap_or(f64::NAN)
        }
        (_, None) => f64::NAN,
    };
    let inputs = gate_inputs(prob, eta0, probes, cfg)?;
    Ok(theorem_gate(prob, which, inputs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::TorusGrid;

    fn constant_data(m: usize, h: f64, f0: f64, a0: f64) -> ProblemData {
        let g = TorusGrid::new(3, m).unwrap();
        ProblemData::new(2.0, h, ScalarField::constant(g, f0), ScalarField::constant(g, a0)).unwrap()
    }

    /// Root of `h u^(p−1) − f₀u^(p*−1) − a₀u^(−p*−1)` by bisection.
    fn constant_root(p: f64, ps: f64, h: f64, f0: f64, a0: f64) -> f64 {
        let g = |u: f64| h * u.powf(p - 1.0) - f0 * u.powf(ps - 1.0) - a0 * u.powf(-ps - 1.0);
        let (mut lo, mut hi) = (1e-6, 1e6);
        assert!(g(lo) < 0.0 && g(hi) > 0.0);
        for _ in 0..400 {
            let mid = (lo * hi).sqrt();
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn wavy(m: usize) -> ProblemData {
        let g = TorusGrid::new(3, m).unwrap();
        let f = ScalarField::from_fn(g, |x| 0.3 - (2.0 * std::f64::consts::PI * x[0]).cos());
        let a = ScalarField::from_fn(g, |x| 0.5 + 0.2 * (2.0 * std::f64::consts::PI * x[1]).sin());
        ProblemData::new(2.0, -1.5, f, a).unwrap()
    }

    #[test]
    fn rescale_fixes_identity_and_keeps_ratio() {
        let prob = wavy(6);
        let eta0 = 0.3;
        let (s, c) = rescale_problem(&prob, eta0).unwrap();
        let ps = prob.p_star();
        assert!((prob.h.abs() - eta0 / ps * s.f_minus()).abs() <= 1e-12 * prob.h.abs());
        let r0 = prob.sup_f() / prob.f_minus();
        let r1 = s.sup_f() / s.f_minus();
        assert!((r0 - r1).abs() <= 1e-14 * r0.abs());
        let eta_fix = ps * prob.h.abs() / prob.f_minus();
        let (t, c1) = rescale_problem(&prob, eta_fix).unwrap();
        assert!((c1 - 1.0).abs() < 1e-14);
        assert!(t.f.sup_distance(&prob.f) < 1e-14 && t.a.sup_distance(&prob.a) < 1e-14);
        assert!(c > 0.0);
        let g = prob.grid();
        let flat = ProblemData::new(2.0, -1.0, ScalarField::constant(g, 1.0), ScalarField::zeros(g)).unwrap();
        assert!(matches!(rescale_problem(&flat, 0.3), Err(Error::Degenerate(_))));
    }

    #[test]
    fn residual_scales_with_c_power() {
        let prob = wavy(6);
        let (s, c) = rescale_problem(&prob, 0.4).unwrap();
        let g = prob.grid();
        let ut = ScalarField::from_fn(g, |x| 1.0 + 0.3 * (2.0 * std::f64::consts::PI * x[2]).cos());
        let gs = first_variation(&ut, &s, s.critical(), 0.0).unwrap();
        let go = first_variation(&ut.scale(c), &prob, prob.critical(), 0.0).unwrap();
        let expect = gs.scale(c.powf(prob.p - 1.0));
        let err = go.sup_distance(&expect) / expect.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn constant_solution_oracle() {
        let (h, f0, a0) = (-1.0, -1.0, 0.2);
        let prob = constant_data(4, h, f0, a0);
        let u0v = constant_root(2.0, 6.0, h, f0, a0);
        let u0 = ScalarField::constant(prob.grid(), u0v);
        let crit = prob.critical();
        assert!(weak_residual(&u0, &prob, crit, 0.0) <= 1e-12);
        let id = integral_identity_check(&u0, &prob);
        assert!(id.gap <= 1e-12 && !id.contradiction);
        let g = prob.grid();
        let zero = ProblemData::new(2.0, -1.0, ScalarField::zeros(g), ScalarField::zeros(g)).unwrap();
        assert_eq!(weak_residual(&ScalarField::zeros(g), &zero, zero.critical(), 0.0), 0.0);
    }

    #[test]
    fn residual_grows_with_perturbation() {
        let prob = constant_data(6, -1.0, -1.0, 0.2);
        let u0v = constant_root(2.0, 6.0, -1.0, -1.0, 0.2);
        let g = prob.grid();
        let noise = ScalarField::from_fn(g, |x| {
            (2.0 * std::f64::consts::PI * (x[0] + 2.0 * x[1])).sin() + 0.5 * (2.0 * std::f64::consts::PI * x[2]).cos()
        });
        let r: Vec<f64> = [1e-4, 1e-3, 1e-2]
            .iter()
            .map(|&t| weak_residual(&ScalarField::constant(g, u0v).axpy(t, &noise), &prob, prob.critical(), 0.0))
            .collect();
        assert!(r[0] < r[1] && r[1] < r[2], "{r:?}");
    }

    #[test]
    fn identity_flags_sign_contradiction() {
        let g = TorusGrid::new(3, 4).unwrap();
        let f = ScalarField::from_fn(g, |x| 1.0 + x[0]);
        let prob = ProblemData::new(2.0, -1.0, f, ScalarField::constant(g, 0.3)).unwrap();
        let u = ScalarField::from_fn(g, |x| 1.0 + 0.5 * x[1]);
        let id = integral_identity_check(&u, &prob);
        assert!(id.contradiction && id.lhs < 0.0 && id.rhs >= 0.0);
    }

    #[test]
    fn degenerate_mountain_pass() {
        let prob = wavy(4);
        let sub = SubcriticalParams::new(&prob, 5.0, 0.1).unwrap();
        let u = ScalarField::constant(prob.grid(), 1.0);
        let (rep, path) = mountain_pass_with_path(&prob, sub, &u, &u, &SolverConfig::default()).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.u, u);
        assert_eq!(path.nodes.len(), 1);
        assert!(rep.notes[0].contains("degenerate"));
    }

    #[test]
    fn schedule_is_monotone() {
        let prob = wavy(4);
        let s = ContinuationSchedule::default_for(&prob).unwrap();
        assert_eq!(s.stages().len(), 8);
        assert!(s.eps_sequence().windows(2).all(|w| w[1] < w[0]));
        assert!(s.q_sequence().windows(2).all(|w| w[1] > w[0]));
        assert!(s.q_sequence().iter().all(|&q| q < prob.p_star() && q > prob.p_flat()));
        assert!(ContinuationSchedule::new(&prob, vec![(0.1, 5.0), (0.2, 5.5)]).is_err());
        assert!(ContinuationSchedule::new(&prob, vec![(0.1, 6.0)]).is_err());
    }

    #[test]
    fn single_pipeline_finds_constant_root() {
        let (h, f0, a0) = (-1.0, -1.0, 0.2);
        let prob = constant_data(4, h, f0, a0);
        let cfg = SolverConfig::default();
        let gate = compute_gate(&prob, Theorem::Thm2Case2, None, 20, &cfg).unwrap();
        assert!(gate.passed);
        let sched = ContinuationSchedule::geometric(&prob, 0.1, 3).unwrap();
        let rep = single_solution_pipeline(&prob, &sched, &gate, &cfg).unwrap();
        let u0 = constant_root(2.0, 6.0, h, f0, a0);
        assert!(rep.converged, "{rep:?}");
        assert!(rep.u.sup_distance(&ScalarField::constant(prob.grid(), u0)) < 1e-6 * u0);
    }
}
