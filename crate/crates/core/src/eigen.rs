//! First-eigenvalue quantities `λ_f` and `λ_{f,η,q}` from nonlinear
//! Rayleigh quotients `∫|∇u|^p / ∫|u|^p`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::energy::{ProblemData, SubcriticalParams};
use crate::minimize::SolverConfig;
use crate::torus::{inner, integrate, lp_norm_pow, p_laplacian, pow_abs, ScalarField, TorusGrid};
use crate::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult {
    /// `+∞` when the admissible set is empty.
    pub lambda: f64,
    pub argmin: Option<ScalarField>,
    pub constraint_residual: f64,
    pub converged: bool,
}

/// `(∫|∇u|_reg^p, ∫|u|^p, ∇R)` for the quotient `R = P/D`.
fn quotient_and_grad(u: &ScalarField, p: f64, delta: f64) -> (f64, ScalarField) {
    let lap = p_laplacian(u, p, delta).expect("p > 1");
    let grad = crate::torus::grad(u).norm_sq();
    let d2 = delta * delta;
    let pnum = integrate(&grad.map(|s| if p == 2.0 { s } else { (s + d2).powf(0.5 * p) - d2.powf(0.5 * p) }));
    let den = lp_norm_pow(u, p);
    let r = pnum / den;
    let g = lap.zip_map(u, |l, x| {
        let xp1 = if x == 0.0 { 0.0 } else { pow_abs(x, p) / x };
        p * (l - r * xp1) / den
    });
    (r, g)
}

/// Rayleigh quotient of `u`.
pub fn rayleigh_quotient(u: &ScalarField, p: f64, delta: f64) -> f64 {
    quotient_and_grad(u, p, delta).0
}

struct Descent {
    u: ScalarField,
    value: f64,
    converged: bool,
}

/// Projected Barzilai–Borwein descent for a 0-homogeneous objective, with
/// `u ← normalize(|u − t g|)` and masked nodes held at zero.
fn descend(
    u0: ScalarField,
    obj: &(dyn Fn(&ScalarField) -> (f64, ScalarField) + Sync),
    normalize: &(dyn Fn(ScalarField) -> ScalarField + Sync),
    mask: Option<&[bool]>,
    tol: f64,
    max_iters: usize,
    t0: f64,
) -> Descent {
    let apply_mask = |g: ScalarField| -> ScalarField {
        match mask {
            None => g,
            Some(m) => {
                let v = g.values().iter().zip(m).map(|(x, &mk)| if mk { 0.0 } else { *x }).collect();
                ScalarField::from_values(g.grid(), v).expect("finite")
            }
        }
    };
    let mut u = normalize(apply_mask(u0.abs()));
    let (mut val, g) = obj(&u);
    let mut g = apply_mask(g);
    let mut t = t0;
    let mut res = integrate(&g.map(|x| x * x)).sqrt();
    for _ in 0..max_iters {
        if res <= tol * (1.0 + val.abs()) {
            return Descent { u, value: val, converged: true };
        }
        let noise = 1e3 * f64::EPSILON * (1.0 + val.abs());
        let slope = -res * res;
        let mut tt = t;
        let mut next = None;
        for _ in 0..40 {
            let v = normalize(apply_mask(u.axpy(-tt, &g).abs()));
            let (vv, vg) = obj(&v);
            let predicted = -tt * slope;
            if vv.is_finite() && (vv <= val - 1e-4 * predicted || (predicted < noise && vv <= val + noise)) {
                next = Some((v, vv, apply_mask(vg)));
                break;
            }
            tt *= 0.25;
        }
        let Some((v, vv, vg)) = next else { break };
        let s = v.sub(&u);
        let y = vg.sub(&g);
        let sy = inner(&s, &y);
        let ss = inner(&s, &s);
        t = if sy > 0.0 { (ss / sy).clamp(1e-3 * t0, 1e6 * t0) } else { t0 };
        u = v;
        val = vv;
        g = vg;
        res = integrate(&g.map(|x| x * x)).sqrt();
    }
    let converged = res <= tol * (1.0 + val.abs());
    Descent { u, value: val, converged }
}

fn base_step(g: TorusGrid, p: f64) -> f64 {
    let m = g.points_per_axis() as f64;
    1.0 / (p * p.max(2.0) * 2.0 * g.dim() as f64 * m * m)
}

fn random_positive(g: TorusGrid, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = g.dim();
    let tau = 2.0 * std::f64::consts::PI;
    let terms: Vec<([f64; 3], f64, f64)> = (0..8)
        .map(|_| {
            let mut m = [0.0; 3];
            for mk in m.iter_mut().take(n) {
                *mk = rng.gen_range(-2i32..=2) as f64;
            }
            (m, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..tau))
        })
        .collect();
    ScalarField::from_fn(g, |x| {
        1.5 + terms.iter().map(|(m, c, ph)| c * (tau * (m[0] * x[0] + m[1] * x[1] + m[2] * x[2]) + ph).cos()).sum::<f64>() / 4.0
    })
    .map(|v| v.abs() + 1e-3)
}

fn normalize_p(u: ScalarField, r: f64) -> ScalarField {
    let m = lp_norm_pow(&u, r);
    if m > 0.0 {
        u.scale(m.powf(-1.0 / r))
    } else {
        u
    }
}

/// `λ_f`: inf of the quotient over nonnegative `u` vanishing on `{f < 0}`.
pub fn lambda_f(prob: &ProblemData, cfg: &SolverConfig) -> Result<EigenResult, Error> {
    lambda_f_for(&prob.f, prob.p, cfg)
}

/// [`lambda_f`] from `f` and `p` alone; `p` only needs to exceed 1.
pub fn lambda_f_for(f: &ScalarField, p: f64, cfg: &SolverConfig) -> Result<EigenResult, Error> {
    if !(p > 1.0) {
        return Err(Error::Domain(format!("need p > 1, got {p}")));
    }
    let mask: Vec<bool> = f.values().iter().map(|&v| v < 0.0).collect();
    let g = f.grid();
    if mask.iter().all(|&m| m) {
        return Ok(EigenResult { lambda: f64::INFINITY, argmin: None, constraint_residual: 0.0, converged: true });
    }
    if !mask.iter().any(|&m| m) {
        return Ok(EigenResult {
            lambda: 0.0,
            argmin: Some(ScalarField::constant(g, 1.0)),
            constraint_residual: 0.0,
            converged: true,
        });
    }
    let delta = cfg.delta_reg(p);
    let obj = move |u: &ScalarField| quotient_and_grad(u, p, delta);
    let norm = move |u: ScalarField| normalize_p(u, p);
    let seeds: Vec<u64> = (0..cfg.eigen_seeds.max(1) as u64).map(|s| cfg.seed.wrapping_add(s)).collect();
    let tol = cfg.tol_grad.sqrt() * 1e-2;
    let runs: Vec<Descent> = seeds
        .par_iter()
        .map(|&s| descend(random_positive(g, s), &obj, &norm, Some(&mask), tol, cfg.max_iters, base_step(g, p)))
        .collect();
    let best = runs.into_iter().fold(None::<Descent>, |b, r| match b {
        Some(b) if b.value <= r.value => Some(b),
        _ => Some(r),
    });
    let best = best.expect("at least one seed");
    let resid = best.u.values().iter().zip(&mask).filter(|(_, &m)| m).map(|(v, _)| v.abs()).fold(0.0, f64::max);
    Ok(EigenResult {
        lambda: best.value.max(0.0),
        argmin: Some(best.u),
        constraint_residual: resid,
        converged: best.converged,
    })
}

/// `ψ(u) = ∫|f⁻||u|^q / ∫|u|^q` and its gradient.
fn psi_and_grad(u: &ScalarField, fm: &ScalarField, q: f64) -> (f64, ScalarField) {
    let uq = u.map(|x| pow_abs(x, q));
    let qn = integrate(&uq);
    let w = integrate(&uq.mul(fm));
    let psi = w / qn;
    let g = u.zip_map(fm, |x, f| {
        let xq1 = if x == 0.0 { 0.0 } else { pow_abs(x, q) / x };
        q * (f - psi) * xq1 / qn
    });
    (psi, g)
}

fn psi(u: &ScalarField, fm: &ScalarField, q: f64) -> f64 {
    let uq = u.map(|x| pow_abs(x, q));
    integrate(&uq.mul(fm)) / integrate(&uq)
}

struct Candidate {
    u: ScalarField,
    lambda: f64,
    psi: f64,
    converged: bool,
}

/// Augmented-Lagrangian minimization of the quotient with `ψ(u) − target`
/// held at zero (`inequality = false`) or below zero.
fn augmented_lagrangian(
    prob: &ProblemData,
    q: f64,
    target: f64,
    inequality: bool,
    start: ScalarField,
    cfg: &SolverConfig,
) -> Candidate {
    let (p, delta) = (prob.p, cfg.delta_reg(prob.p));
    let fm = prob.f.map(|v| (-v).max(0.0));
    let norm = move |u: ScalarField| normalize_p(u, q);
    let mut nu = 0.0f64;
    let mut rho = 10.0f64;
    let mut u = start;
    let tol = cfg.tol_grad.sqrt() * 1e-2;
    let inner_iters = cfg.max_iters.min(4000);
    let mut last_viol = f64::INFINITY;
    let mut converged = false;
    for _ in 0..40 {
        let fm_ref = &fm;
        let obj = move |v: &ScalarField| {
            let (r, gr) = quotient_and_grad(v, p, delta);
            let (ps, gp) = psi_and_grad(v, fm_ref, q);
            let c = ps - target;
            if inequality {
                let sh = (c + nu / rho).max(0.0);
                (r + 0.5 * rho * sh * sh - 0.5 * nu * nu / rho, gr.axpy(rho * sh, &gp))
            } else {
                (r + nu * c + 0.5 * rho * c * c, gr.axpy(nu + rho * c, &gp))
            }
        };
        let d = descend(u, &obj, &norm, None, tol, inner_iters, base_step(prob.grid(), p) / (1.0 + rho * target.max(1.0)));
        u = d.u;
        let c = psi(&u, &fm, q) - target;
        let viol = if inequality { c.max(-nu / rho) } else { c }.abs();
        if inequality {
            nu = (nu + rho * c).max(0.0);
        } else {
            nu += rho * c;
        }
        if viol < 1e-10 && d.converged {
            converged = true;
            break;
        }
        if viol > 0.25 * last_viol {
            rho = (rho * 10.0).min(1e10);
        }
        last_viol = viol;
    }
    let ps = psi(&u, &fm, q);
    Candidate { lambda: rayleigh_quotient(&u, p, delta), psi: ps, u, converged }
}

/// Indicator of the nodes where `|f⁻|` is minimal (`low`) or maximal.
fn extreme_indicator(prob: &ProblemData, low: bool) -> ScalarField {
    let fm = prob.f.map(|v| (-v).max(0.0));
    let target = if low { fm.min() } else { fm.max() };
    fm.map(|v| if v == target { 1.0 } else { 0.0 })
}

/// Move `u` onto `{ψ = target}` (or below it) by mixing with a field on the
/// other side of the constraint, then bisecting.
fn repair(prob: &ProblemData, q: f64, target: f64, inequality: bool, u: &ScalarField) -> Option<ScalarField> {
    let fm = prob.f.map(|v| (-v).max(0.0));
    let c0 = psi(u, &fm, q) - target;
    if c0.abs() <= 1e-12 * (1.0 + target) || (inequality && c0 <= 0.0) {
        return Some(u.clone());
    }
    let w = normalize_p(extreme_indicator(prob, c0 > 0.0), q);
    let base = normalize_p(u.abs(), q);
    let mix = |s: f64| base.scale(1.0 - s).add(&w.scale(s));
    let cw = psi(&w, &fm, q) - target;
    if cw.signum() == c0.signum() && cw != 0.0 {
        return None;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let c = psi(&mix(mid), &fm, q) - target;
        if c.signum() == c0.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // `hi` lies on the feasible side.
    Some(normalize_p(mix(hi), q))
}

/// Shared candidate pool for both modes.
fn candidates(prob: &ProblemData, q: f64, target: f64, cfg: &SolverConfig, extra: &[ScalarField]) -> Vec<Candidate> {
    let mut starts: Vec<(ScalarField, bool)> = Vec::new();
    for s in 0..cfg.eigen_seeds.max(1) as u64 {
        let u = random_positive(prob.grid(), cfg.seed.wrapping_add(1000 + s));
        starts.push((u.clone(), false));
        starts.push((u, true));
    }
    for e in extra {
        starts.push((e.clone(), false));
        starts.push((e.clone(), true));
    }
    starts.par_iter().map(|(u, ineq)| augmented_lagrangian(prob, q, target, *ineq, u.clone(), cfg)).collect()
}

/// `λ_{f,η,q}` over `{‖u‖_q = 1, ∫|f⁻||u|^q = η∫|f⁻|}`, or over `{… ≤ …}`
/// when `inequality` is set.
pub fn lambda_f_eta_q(
    prob: &ProblemData,
    sub: SubcriticalParams,
    eta: f64,
    inequality: bool,
    cfg: &SolverConfig,
) -> Result<EigenResult, Error> {
    lambda_f_eta_q_with(prob, sub, eta, inequality, cfg, &[])
}

fn lambda_f_eta_q_with(
    prob: &ProblemData,
    sub: SubcriticalParams,
    eta: f64,
    inequality: bool,
    cfg: &SolverConfig,
    extra_starts: &[ScalarField],
) -> Result<EigenResult, Error> {
    if !(eta > 0.0) {
        return Err(Error::Domain(format!("eta must be positive, got {eta}")));
    }
    let big_f = prob.f_minus();
    if !(big_f > 0.0) {
        return Err(Error::Degenerate("∫|f⁻| = 0".into()));
    }
    let q = sub.q;
    let target = eta * big_f;
    let fm = prob.f.map(|v| (-v).max(0.0));
    let (fmin, fmax) = (fm.min(), fm.max());
    if target < fmin || (!inequality && target > fmax) {
        return Err(Error::Infeasible(format!(
            "η∫|f⁻| = {target} outside the attainable range [{fmin}, {fmax}]"
        )));
    }
    let (p, delta) = (prob.p, cfg.delta_reg(prob.p));
    let mut extra: Vec<ScalarField> = extra_starts.to_vec();
    let lf = lambda_f(prob, cfg)?;
    if let Some(v) = lf.argmin.as_ref() {
        if lf.lambda.is_finite() && lf.lambda > 0.0 {
            extra.push(v.clone());
            // Lift by a constant so the equality constraint can be met.
            let lifted = lift(v, &fm, q, target);
            if let Some(l) = lifted {
                extra.push(l);
            }
        }
    }
    if target >= big_f {
        extra.push(ScalarField::constant(prob.grid(), 1.0));
    }
    let pool = candidates(prob, q, target, cfg, &extra);
    let mut best: Option<Candidate> = None;
    let all = pool.into_iter().chain(extra.iter().map(|u| Candidate {
        lambda: rayleigh_quotient(u, p, delta),
        psi: psi(u, &fm, q),
        u: normalize_p(u.clone(), q),
        converged: true,
    }));
    for c in all {
        let Some(fixed) = repair(prob, q, target, inequality, &c.u) else { continue };
        let lam = rayleigh_quotient(&fixed, p, delta);
        let ps = psi(&fixed, &fm, q);
        let cand = Candidate { u: fixed, lambda: lam, psi: ps, converged: c.converged };
        if best.as_ref().map_or(true, |b| cand.lambda < b.lambda) {
            best = Some(cand);
        }
    }
    let best = best.ok_or_else(|| Error::Infeasible("no feasible candidate".into()))?;
    let viol = best.psi - target;
    let resid = if inequality { viol.max(0.0) } else { viol.abs() } / target.max(1.0);
    Ok(EigenResult {
        lambda: best.lambda.max(0.0),
        argmin: Some(best.u),
        constraint_residual: resid,
        converged: best.converged,
    })
}

/// `v + τ` with `ψ(v + τ) = target`, when `ψ(v) < target < ψ(1)`.
fn lift(v: &ScalarField, fm: &ScalarField, q: f64, target: f64) -> Option<ScalarField> {
    let c0 = psi(v, fm, q) - target;
    let top = v.max().max(1e-300);
    let mut hi = top;
    let mut found = false;
    for _ in 0..60 {
        if psi(&v.map(|x| x + hi), fm, q) > target {
            found = true;
            break;
        }
        hi *= 2.0;
    }
    if !(c0 < 0.0) || !found {
        return None;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if psi(&v.map(|x| x + mid), fm, q) > target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(normalize_p(v.map(|x| x + lo), q))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EtaScan {
    pub lambda_f: f64,
    pub rows: Vec<(f64, f64)>,
    /// Largest scanned `η` with `λ_{f,η,q} ≥ λ_f − δ`.
    pub eta0: Option<f64>,
}

/// `λ_{f,η,q}` along ascending `etas` in inequality mode, warm-started from the
/// previous argmin, which stays admissible because the sets grow with `η`.
pub fn eta_scan(
    prob: &ProblemData,
    sub: SubcriticalParams,
    etas: &[f64],
    delta: f64,
    cfg: &SolverConfig,
) -> Result<EtaScan, Error> {
    if etas.windows(2).any(|w| !(w[0] < w[1])) || etas.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::Domain("etas must be positive and strictly increasing".into()));
    }
    let lf = lambda_f(prob, cfg)?;
    let mut rows = Vec::with_capacity(etas.len());
    let mut prev: Option<ScalarField> = None;
    for &eta in etas {
        let extra: Vec<ScalarField> = prev.iter().cloned().collect();
        let r = lambda_f_eta_q_with(prob, sub, eta, true, cfg, &extra)?;
        let lam = r.lambda.min(rows.last().map_or(f64::INFINITY, |&(_, l): &(f64, f64)| l));
        rows.push((eta, lam));
        prev = r.argmin;
    }
    let eta0 = rows.iter().filter(|&&(_, l)| l >= lf.lambda - delta).map(|&(e, _)| e).fold(None, |a: Option<f64>, e| {
        Some(a.map_or(e, |a| a.max(e)))
    });
    Ok(EtaScan { lambda_f: lf.lambda, rows, eta0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::TorusGrid;
    use nalgebra::DMatrix;

    fn slab(n: usize, m: usize) -> ScalarField {
        let g = TorusGrid::new(n, m).unwrap();
        ScalarField::from_fn(g, |x| if x[0] < 0.5 { -1.0 } else { 0.5 })
    }

    fn slab_problem(m: usize, p: f64) -> ProblemData {
        let f = slab(3, m);
        let g = f.grid();
        ProblemData::new(p, -1.0, f, ScalarField::constant(g, 1.0)).unwrap()
    }

    /// Smallest eigenvalue of `N²·(graph Laplacian)` restricted to the unmasked nodes.
    fn dense_dirichlet(f: &ScalarField) -> f64 {
        let g = f.grid();
        let m = g.points_per_axis() as f64;
        let free: Vec<usize> = (0..g.len()).filter(|&i| f.values()[i] >= 0.0).collect();
        let pos = |i: usize| free.iter().position(|&j| j == i);
        let mut a = DMatrix::<f64>::zeros(free.len(), free.len());
        for (r, &i) in free.iter().enumerate() {
            let c = g.coords(i);
            for k in 0..g.dim() {
                for s in [-1isize, 1] {
                    let mut cc: Vec<isize> = c[..g.dim()].iter().map(|&x| x as isize).collect();
                    cc[k] += s;
                    let j = g.index(&cc);
                    a[(r, r)] += m * m;
                    if let Some(cj) = pos(j) {
                        a[(r, cj)] -= m * m;
                    }
                }
            }
        }
        a.symmetric_eigen().eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn trivial_masks() {
        let g = TorusGrid::new(3, 4).unwrap();
        let cfg = SolverConfig::default();
        let pos = ProblemData::new(2.0, -1.0, ScalarField::constant(g, 0.5), ScalarField::zeros(g)).unwrap();
        let r = lambda_f(&pos, &cfg).unwrap();
        assert_eq!(r.lambda, 0.0);
        assert_eq!(r.argmin.unwrap(), ScalarField::constant(g, 1.0));
        let neg = ProblemData::new(2.0, -1.0, ScalarField::constant(g, -0.5), ScalarField::zeros(g)).unwrap();
        assert_eq!(lambda_f(&neg, &cfg).unwrap().lambda, f64::INFINITY);
    }

    #[test]
    fn masked_slab_matches_dense_oracle() {
        let f = slab(2, 16);
        let r = lambda_f_for(&f, 2.0, &SolverConfig::default()).unwrap();
        let oracle = dense_dirichlet(&f);
        assert!(r.converged);
        assert!((r.lambda - oracle).abs() <= 1e-6 * oracle, "{} vs {oracle}", r.lambda);
        assert_eq!(r.constraint_residual, 0.0);
        let u = r.argmin.unwrap();
        assert!(u.min() >= 0.0);
        assert_eq!(rayleigh_quotient(&u.scale(3.7), 2.0, 0.0), rayleigh_quotient(&u, 2.0, 0.0));
    }

    #[test]
    fn eta_family_properties() {
        let prob = slab_problem(8, 2.0);
        let sub = SubcriticalParams::new(&prob, 5.0, 0.0).unwrap();
        let cfg = SolverConfig { eigen_seeds: 3, ..SolverConfig::default() };
        let lf = lambda_f(&prob, &cfg).unwrap().lambda;
        let etas = [0.05, 0.1, 0.2, 0.4, 0.8];
        let scan = eta_scan(&prob, sub, &etas, 0.5 * lf, &cfg).unwrap();
        for w in scan.rows.windows(2) {
            assert!(w[1].1 <= w[0].1 + 1e-6);
        }
        for &(_, l) in &scan.rows {
            assert!(l <= lf + 1e-6 && l >= 0.0);
        }
        let all = eta_scan(&prob, sub, &etas, 2.0 * lf, &cfg).unwrap();
        assert_eq!(all.eta0, Some(0.8));
        let eq = lambda_f_eta_q(&prob, sub, 0.2, false, &cfg).unwrap();
        let ineq = lambda_f_eta_q(&prob, sub, 0.2, true, &cfg).unwrap();
        assert!((eq.lambda - ineq.lambda).abs() <= 2.0 * 1e-6 * (1.0 + eq.lambda), "{} vs {}", eq.lambda, ineq.lambda);
        assert!(eq.constraint_residual <= 1e-8 && ineq.constraint_residual <= 1e-8);
        assert_eq!(lambda_f_eta_q(&prob, sub, 1.5, true, &cfg).unwrap().lambda, 0.0);
    }

    #[test]
    fn infeasible_targets() {
        let g = TorusGrid::new(3, 4).unwrap();
        let prob = ProblemData::new(2.0, -1.0, ScalarField::constant(g, -1.0), ScalarField::zeros(g)).unwrap();
        let sub = SubcriticalParams::new(&prob, 5.0, 0.0).unwrap();
        let cfg = SolverConfig::default();
        assert!(matches!(lambda_f_eta_q(&prob, sub, 0.5, false, &cfg), Err(Error::Infeasible(_))));
        assert!(matches!(lambda_f_eta_q(&prob, sub, 0.5, true, &cfg), Err(Error::Infeasible(_))));
    }
}
