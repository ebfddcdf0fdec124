//! Constrained minimization of the regularized functional on the sets
//! `{‖u‖_q^q = k}` (spheres) and `{k_lo ≤ ‖u‖_q^q ≤ k_hi}` (bands).
//!
//! The descent step is `u ← |u − t M⁻¹g|` followed by multiplicative
//! rescaling onto the constraint set, where `M` is a diagonal curvature
//! estimate and `g` the tangential part of the first variation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::energy::{Functional, ProblemData, SubcriticalParams};
use crate::torus::{default_delta_reg, grad, inner, integrate, lp_norm_pow, pow_abs, ScalarField};
use crate::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Tolerance on the L² norm of the projected gradient, relative to `1 + scale`
    /// where `scale` is the L² size of the zeroth-order terms.
    pub tol_grad: f64,
    pub tol_energy: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub path_nodes: usize,
    pub tol_residual: f64,
    pub distinct_tol: f64,
    pub eigen_seeds: usize,
    /// Gradient regularization; `None` picks [`default_delta_reg`].
    pub delta_reg: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol_grad: 1e-8,
            tol_energy: 1e-12,
            max_iters: 20_000,
            seed: 0,
            path_nodes: 12,
            tol_residual: 1e-6,
            distinct_tol: 1e-3,
            eigen_seeds: 5,
            delta_reg: None,
        }
    }
}

impl SolverConfig {
    pub fn delta_reg(&self, p: f64) -> f64 {
        self.delta_reg.unwrap_or_else(|| default_delta_reg(p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConstraintSpec {
    Sphere(f64),
    Band(f64, f64),
}

impl ConstraintSpec {
    pub fn validate(self) -> Result<Self, Error> {
        match self {
            ConstraintSpec::Sphere(k) if k > 0.0 && k.is_finite() => Ok(self),
            ConstraintSpec::Band(lo, hi) if lo > 0.0 && lo < hi && hi.is_finite() => Ok(self),
            _ => Err(Error::Domain(format!("invalid constraint {self:?}"))),
        }
    }

    fn bounds(self) -> (f64, f64) {
        match self {
            ConstraintSpec::Sphere(k) => (k, k),
            ConstraintSpec::Band(lo, hi) => (lo, hi),
        }
    }

    pub fn contains(self, k: f64, rel: f64) -> bool {
        let (lo, hi) = self.bounds();
        k >= lo * (1.0 - rel) && k <= hi * (1.0 + rel)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeResult {
    pub minimizer: ScalarField,
    pub mu: f64,
    /// `λ` with `G(u) = λ|u|^(q−2)u` in the L² sense; 0 in the interior of a band.
    pub multiplier: f64,
    pub k_attained: f64,
    pub iterations: usize,
    /// L² norm of the projected gradient.
    pub grad_norm: f64,
    /// Size of the zeroth-order terms used to scale `tol_grad`.
    pub scale: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandscapeSample {
    pub k: f64,
    pub mu: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeCurve {
    pub q: f64,
    pub eps: f64,
    pub samples: Vec<LandscapeSample>,
    pub minimizers: Vec<ScalarField>,
}

impl LandscapeCurve {
    pub fn ks(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.k).collect()
    }

    pub fn mus(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.mu).collect()
    }
}

/// Rescale `u` (after taking absolute values) so that `∫|u|^q = k`.
pub fn rescale_to(u: &ScalarField, q: f64, k: f64) -> Result<ScalarField, Error> {
    let v = u.abs();
    let m = lp_norm_pow(&v, q);
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::Degenerate("cannot rescale a zero field".into()));
    }
    Ok(v.scale((k / m).powf(1.0 / q)))
}

/// Default start `k^(1/q)(1 + 0.05φ)` with `φ` a seeded combination of low modes.
pub fn default_init(prob: &ProblemData, q: f64, k: f64, seed: u64) -> ScalarField {
    let g = prob.grid();
    let n = g.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let tau = 2.0 * std::f64::consts::PI;
    let modes: Vec<([f64; 3], f64, f64)> = (0..6)
        .map(|_| {
            let mut m = [0.0; 3];
            for mk in m.iter_mut().take(n) {
                *mk = rng.gen_range(-2i32..=2) as f64;
            }
            (m, rng.gen_range(-1.0..1.0) / 6.0, rng.gen_range(0.0..tau))
        })
        .collect();
    let u = ScalarField::from_fn(g, |x| {
        1.0 + 0.05
            * modes
                .iter()
                .map(|(m, c, ph)| c * (tau * (m[0] * x[0] + m[1] * x[1] + m[2] * x[2]) + ph).cos())
                .sum::<f64>()
    });
    rescale_to(&u, q, k).expect("positive start")
}

/// Start concentrated on `{f > 0}`; `None` when `f ≤ 0`.
pub fn concentrated_init(prob: &ProblemData, q: f64, k: f64) -> Option<ScalarField> {
    let sup = prob.sup_f();
    if !(sup > 0.0) {
        return None;
    }
    let u = prob.f.map(|v| 0.05 + v.max(0.0) / sup);
    rescale_to(&u, q, k).ok()
}

struct Probe {
    e: f64,
    g: ScalarField,
    /// `|u|^(q−2)u`.
    nrm: ScalarField,
    kq: f64,
    /// `⟨G,u⟩/∫|u|^q`.
    radial: f64,
    scale: f64,
    mdiag: Vec<f64>,
}

fn probe(fun: &Functional, bwd: &[Vec<u32>], u: &ScalarField) -> Result<Probe, Error> {
    let (e, g) = fun.energy_and_gradient(u)?;
    let prob = fun.prob;
    let (p, q, eps, h) = (prob.p, fun.sub.q, fun.sub.eps, prob.h);
    let grid = u.grid();
    let n = grid.dim();
    let inv_h = grid.points_per_axis() as f64;
    let uv = u.values();
    let umax = u.max().abs().max(u.min().abs());
    let floor = 1e-8 * umax.max(1e-300);

    let cell_w: Vec<f64> = if p == 2.0 {
        Vec::new()
    } else {
        let s = grad(u).norm_sq();
        let mean = integrate(&s);
        let d2 = fun.delta_reg * fun.delta_reg;
        let lo = 1e-2 * mean;
        s.values()
            .iter()
            .map(|&si| if mean > 0.0 { (si.max(lo) + d2).powf(0.5 * (p - 2.0)) } else { 0.0 })
            .collect()
    };

    let len = uv.len();
    let mut nrm = Vec::with_capacity(len);
    let mut mdiag = Vec::with_capacity(len);
    let (mut s_lin, mut s_f, mut s_a) = (0.0, 0.0, 0.0);
    for i in 0..len {
        let x = uv[i];
        let fi = prob.f.values()[i];
        let ai = prob.a.values()[i];
        let uq1 = if x == 0.0 { 0.0 } else { pow_abs(x, q) / x };
        nrm.push(uq1);
        let lin = h * if x == 0.0 { 0.0 } else { pow_abs(x, p) / x };
        let fterm = fi * uq1;
        let (aterm, acurv) = if ai == 0.0 {
            (0.0, 0.0)
        } else {
            let w = (x * x + eps).powf(-0.5 * q - 1.0);
            (ai * x * w, ai * (q + 1.0) * w)
        };
        s_lin += lin * lin;
        s_f += fterm * fterm;
        s_a += aterm * aterm;
        let xf = x.abs().max(floor);
        let mgrad = if p == 2.0 {
            2.0 * n as f64 * inv_h * inv_h
        } else {
            let mut w = n as f64 * cell_w[i];
            for t in bwd {
                w += cell_w[t[i] as usize];
            }
            (p - 1.0) * inv_h * inv_h * w
        };
        mdiag.push(mgrad + (p - 1.0) * h.abs() * xf.powf(p - 2.0) + (q - 1.0) * fi.abs() * xf.powf(q - 2.0) + acurv);
    }
    let mmax = mdiag.iter().cloned().fold(0.0f64, f64::max);
    let mfloor = 1e-12 * mmax.max(1e-300);
    for m in mdiag.iter_mut() {
        if !(*m > mfloor) {
            *m = mfloor;
        }
    }
    let w = len as f64;
    let scale = (s_lin / w).sqrt() + (s_f / w).sqrt() + (s_a / w).sqrt();
    let nrm = ScalarField::from_values(grid, nrm)?;
    let kq = lp_norm_pow(u, q);
    let radial = if kq > 0.0 { inner(&g, u) / kq } else { 0.0 };
    Ok(Probe { e, g, nrm, kq, radial, scale, mdiag })
}

impl Probe {
    /// `λ = ⟨G,N⟩/⟨N,N⟩`.
    fn l2_multiplier(&self) -> f64 {
        let nn = inner(&self.nrm, &self.nrm);
        if nn > 0.0 {
            inner(&self.g, &self.nrm) / nn
        } else {
            0.0
        }
    }

    fn precondition(&self, g: &ScalarField) -> ScalarField {
        let d = g.values().iter().zip(&self.mdiag).map(|(g, m)| -g / m).collect();
        ScalarField::from_values(g.grid(), d).expect("finite direction")
    }
}

struct Direction {
    d: ScalarField,
    /// Gradient whose pairing with `d` is the slope of the energy after projection.
    g_used: ScalarField,
    slope: f64,
    /// Stationarity measure and multiplier reported for this iterate.
    residual: f64,
    multiplier: f64,
}

fn direction(pr: &Probe, cons: ConstraintSpec) -> Direction {
    let (lo, hi) = cons.bounds();
    let full = pr.precondition(&pr.g);
    let kslope = inner(&pr.nrm, &full);
    let at_lo = (pr.kq - lo).abs() <= 1e-12 * lo;
    let at_hi = (pr.kq - hi).abs() <= 1e-12 * hi;
    let on_boundary =
        matches!(cons, ConstraintSpec::Sphere(_)) || (at_lo && kslope < 0.0) || (at_hi && kslope > 0.0);
    if on_boundary {
        // The rescaling map has derivative d − (⟨N,d⟩/k)u, hence the radial multiplier.
        let g_r = pr.g.axpy(-pr.radial, &pr.nrm);
        let d = pr.precondition(&g_r);
        let lam = pr.l2_multiplier();
        let residual = integrate(&pr.g.axpy(-lam, &pr.nrm).map(|v| v * v)).sqrt();
        let slope = inner(&g_r, &d);
        Direction { d, g_used: g_r, slope, residual, multiplier: lam }
    } else {
        let slope = inner(&pr.g, &full);
        let residual = integrate(&pr.g.map(|v| v * v)).sqrt();
        Direction { d: full, g_used: pr.g.clone(), slope, residual, multiplier: 0.0 }
    }
}

fn project(v: ScalarField, cons: ConstraintSpec, q: f64) -> Result<ScalarField, Error> {
    let (lo, hi) = cons.bounds();
    let kq = lp_norm_pow(&v, q);
    if kq < lo {
        rescale_to(&v, q, lo)
    } else if kq > hi {
        rescale_to(&v, q, hi)
    } else {
        Ok(v)
    }
}

/// Shared descent loop for spheres and bands.
pub fn minimize(
    prob: &ProblemData,
    sub: SubcriticalParams,
    cons: ConstraintSpec,
    init: &ScalarField,
    cfg: &SolverConfig,
) -> Result<MinimizeResult, Error> {
    let cons = cons.validate()?;
    if init.grid() != prob.grid() {
        return Err(Error::GridMismatch("initial field grid differs from problem grid".into()));
    }
    let q = sub.q;
    let fun = Functional::new(prob, sub, cfg.delta_reg(prob.p));
    let bwd = prob.grid().backward_table();
    let mut u = match cons {
        ConstraintSpec::Sphere(k) => rescale_to(init, q, k)?,
        ConstraintSpec::Band(..) => project(init.abs(), cons, q)?,
    };
    let mut pr = probe(&fun, &bwd, &u)?;
    if !pr.e.is_finite() {
        return Err(Error::Degenerate("initial energy is not finite".into()));
    }
    let mut dir = direction(&pr, cons);
    let mut t = 1.0;
    let mut iterations = 0;
    let mut converged = false;
    loop {
        if dir.residual <= cfg.tol_grad * (1.0 + pr.scale) {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iters {
            break;
        }
        let t0 = fun.terms(&u);
        let noise = 100.0
            * f64::EPSILON
            * (t0.gradient.abs() + t0.linear.abs() + t0.f_plus.abs() + t0.f_minus.abs() + t0.singular.abs());
        // Armijo, except that once the predicted decrease is below the
        // evaluation noise any step within the noise band is taken.
        let mut next = None;
        let mut tt = t;
        for _ in 0..40 {
            let v = project(u.axpy(tt, &dir.d).abs(), cons, q)?;
            let ev = fun.energy(&v);
            let predicted = -tt * dir.slope;
            if ev <= pr.e - 1e-4 * predicted || (predicted < noise && ev <= pr.e + noise) {
                if let Ok(pv) = probe(&fun, &bwd, &v) {
                    next = Some((v, pv));
                    break;
                }
            }
            tt *= 0.25;
        }
        let Some((v, pv)) = next else { break };
        let dv = direction(&pv, cons);
        let s = v.sub(&u);
        let y = dv.g_used.sub(&dir.g_used);
        let sy = inner(&s, &y);
        let sms = integrate(&ScalarField::from_values(
            s.grid(),
            s.values().iter().zip(&pv.mdiag).map(|(s, m)| m * s * s).collect(),
        )?);
        t = if sy > 0.0 && sms > 0.0 { (sms / sy).clamp(1e-3, 1e3) } else { 1.0 };
        u = v;
        pr = pv;
        dir = dv;
        iterations += 1;
    }
    Ok(MinimizeResult {
        mu: pr.e,
        multiplier: dir.multiplier,
        k_attained: pr.kq,
        iterations,
        grad_norm: dir.residual,
        scale: pr.scale,
        converged,
        minimizer: u,
    })
}

/// Minimize on `{∫|u|^q = k}`; without `init` the seeded default start is used.
pub fn minimize_on_sphere(
    prob: &ProblemData,
    sub: SubcriticalParams,
    k: f64,
    init: Option<&ScalarField>,
    cfg: &SolverConfig,
) -> Result<MinimizeResult, Error> {
    let start = match init {
        Some(u) => u.clone(),
        None => default_init(prob, sub.q, k, cfg.seed),
    };
    minimize(prob, sub, ConstraintSpec::Sphere(k), &start, cfg)
}

/// Minimize on `{k_lo ≤ ∫|u|^q ≤ k_hi}`.
pub fn minimize_on_band(
    prob: &ProblemData,
    sub: SubcriticalParams,
    band: (f64, f64),
    init: Option<&ScalarField>,
    cfg: &SolverConfig,
) -> Result<MinimizeResult, Error> {
    let start = match init {
        Some(u) => u.clone(),
        None => default_init(prob, sub.q, (band.0 * band.1).sqrt(), cfg.seed),
    };
    minimize(prob, sub, ConstraintSpec::Band(band.0, band.1), &start, cfg)
}

/// Best of the warm, fresh and `f⁺`-concentrated starts at one `k`.
pub fn sphere_multistart(
    prob: &ProblemData,
    sub: SubcriticalParams,
    k: f64,
    warm: Option<&ScalarField>,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<MinimizeResult, Error> {
    let mut starts = Vec::new();
    if let Some(w) = warm {
        starts.push(rescale_to(w, sub.q, k)?);
    }
    starts.push(default_init(prob, sub.q, k, seed));
    if let Some(c) = concentrated_init(prob, sub.q, k) {
        starts.push(c);
    }
    let results: Vec<Result<MinimizeResult, Error>> =
        starts.par_iter().map(|s| minimize(prob, sub, ConstraintSpec::Sphere(k), s, cfg)).collect();
    let mut best: Option<MinimizeResult> = None;
    let mut first_err = None;
    for r in results {
        match r {
            Ok(r) => {
                if best.as_ref().map_or(true, |b| r.mu < b.mu) {
                    best = Some(r);
                }
            }
            Err(e) => first_err = first_err.or(Some(e)),
        }
    }
    best.ok_or_else(|| first_err.unwrap_or_else(|| Error::Degenerate("no start".into())))
}

/// Sphere minima along an ascending `k` grid, each warm-started from the previous sample.
pub fn landscape(
    prob: &ProblemData,
    sub: SubcriticalParams,
    k_grid: &[f64],
    cfg: &SolverConfig,
) -> Result<LandscapeCurve, Error> {
    if k_grid.is_empty() {
        return Err(Error::Domain("empty k grid".into()));
    }
    if k_grid.windows(2).any(|w| !(w[0] < w[1])) || !(k_grid[0] > 0.0) {
        return Err(Error::Domain("k grid must be positive and strictly increasing".into()));
    }
    let mut samples = Vec::with_capacity(k_grid.len());
    let mut minimizers: Vec<ScalarField> = Vec::with_capacity(k_grid.len());
    for (j, &k) in k_grid.iter().enumerate() {
        let r = sphere_multistart(prob, sub, k, minimizers.last(), cfg.seed.wrapping_add(j as u64), cfg)?;
        samples.push(LandscapeSample { k, mu: r.mu, converged: r.converged });
        minimizers.push(r.minimizer);
    }
    Ok(LandscapeCurve { q: sub.q, eps: sub.eps, samples, minimizers })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuityProbe {
    /// `max |μ_(k(1±r)) − μ_k|`.
    pub max_jump: f64,
    pub mu_k: f64,
    pub converged: bool,
}

pub fn continuity_probe(
    prob: &ProblemData,
    sub: SubcriticalParams,
    k: f64,
    rel_step: f64,
    cfg: &SolverConfig,
) -> Result<ContinuityProbe, Error> {
    if !(sub.eps > 0.0) {
        return Err(Error::Domain("continuity probe needs eps > 0".into()));
    }
    if !(rel_step >= 0.0 && rel_step < 1.0) {
        return Err(Error::Domain(format!("rel_step must lie in [0, 1), got {rel_step}")));
    }
    let base = sphere_multistart(prob, sub, k, None, cfg.seed, cfg)?;
    if rel_step == 0.0 {
        return Ok(ContinuityProbe { max_jump: 0.0, mu_k: base.mu, converged: base.converged });
    }
    let mut jump = 0.0f64;
    let mut converged = base.converged;
    for kk in [k * (1.0 - rel_step), k * (1.0 + rel_step)] {
        let r = sphere_multistart(prob, sub, kk, Some(&base.minimizer), cfg.seed, cfg)?;
        converged &= r.converged;
        jump = jump.max((r.mu - base.mu).abs());
    }
    Ok(ContinuityProbe { max_jump: jump, mu_k: base.mu, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::constant_energy;
    use crate::torus::TorusGrid;

    fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
        let flo = f(lo);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (f(mid) < 0.0) == (flo < 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn wavy(m: usize) -> ProblemData {
        let g = TorusGrid::new(3, m).unwrap();
        let tau = 2.0 * std::f64::consts::PI;
        let f = ScalarField::from_fn(g, |x| -0.5 + 0.8 * (tau * x[0]).cos() * (tau * x[1]).sin());
        let a = ScalarField::from_fn(g, |x| 0.2 + 0.1 * (tau * x[2]).cos());
        ProblemData::new(2.0, -1.0, f, a).unwrap()
    }

    #[test]
    fn constant_critical_point() {
        let g = TorusGrid::new(3, 8).unwrap();
        let (f0, a0, h, p) = (-1.0, 0.5, -1.0, 2.0);
        let prob = ProblemData::new(p, h, ScalarField::constant(g, f0), ScalarField::constant(g, a0)).unwrap();
        let (q, eps) = (5.0, 0.05);
        let sub = SubcriticalParams::new(&prob, q, eps).unwrap();
        let phi = |c: f64| h * c.powf(p - 1.0) - f0 * c.powf(q - 1.0) - a0 * c * (c * c + eps).powf(-0.5 * q - 1.0);
        let c = bisect(1e-3, 1e3, phi);
        let k = c.powf(q);
        let cfg = SolverConfig::default();
        let r = minimize_on_sphere(&prob, sub, k, None, &cfg).unwrap();
        assert!(r.converged);
        assert!(r.minimizer.sup_distance(&ScalarField::constant(g, c)) < 1e-6);
        assert!(r.multiplier.abs() < 1e-6, "multiplier {}", r.multiplier);
    }

    #[test]
    fn sphere_bounds_and_invariants() {
        let prob = wavy(8);
        let sub = SubcriticalParams::new(&prob, 5.0, 0.05).unwrap();
        let cfg = SolverConfig::default();
        for k in [0.5, 2.0, 10.0] {
            let r = minimize_on_sphere(&prob, sub, k, None, &cfg).unwrap();
            assert!(r.converged, "k = {k}: residual {} after {} iterations", r.grad_norm, r.iterations);
            assert!(r.minimizer.min() >= 0.0);
            assert!((r.k_attained - k).abs() <= 1e-10 * k);
            assert!(r.mu <= constant_energy(&prob, sub, k) + 1e-12);
            let lower = prob.h / prob.p * k.powf(prob.p / sub.q) - k / sub.q * prob.sup_f();
            assert!(r.mu >= lower);
            let fun = Functional::new(&prob, sub, 0.0);
            let g = fun.gradient(&r.minimizer).unwrap();
            let nrm = r.minimizer.map(|v| v.powf(sub.q - 1.0));
            let res = integrate(&g.axpy(-r.multiplier, &nrm).map(|v| v * v)).sqrt();
            assert!(res <= 10.0 * cfg.tol_grad * (1.0 + r.scale));
            let abs_e = fun.energy(&r.minimizer.abs());
            assert!(abs_e <= fun.energy(&r.minimizer));
        }
    }

    #[test]
    fn collapsed_band_matches_sphere() {
        let prob = wavy(8);
        let sub = SubcriticalParams::new(&prob, 5.0, 0.05).unwrap();
        let cfg = SolverConfig::default();
        let k = 3.0;
        let s = minimize_on_sphere(&prob, sub, k, None, &cfg).unwrap();
        let b = minimize_on_band(&prob, sub, (k, k * (1.0 + 1e-12)), Some(&default_init(&prob, sub.q, k, 0)), &cfg)
            .unwrap();
        assert!(b.converged);
        assert!((s.mu - b.mu).abs() < 1e-8 * (1.0 + s.mu.abs()));
    }

    #[test]
    fn band_contains_scan_minimum() {
        let prob = wavy(8);
        let sub = SubcriticalParams::new(&prob, 5.0, 0.05).unwrap();
        let cfg = SolverConfig::default();
        let ks: Vec<f64> = (0..25).map(|j| 0.4 * 1.25f64.powi(j)).collect();
        let curve = landscape(&prob, sub, &ks, &cfg).unwrap();
        let (jmin, smin) =
            curve.samples.iter().enumerate().min_by(|a, b| a.1.mu.partial_cmp(&b.1.mu).unwrap()).unwrap();
        assert!(jmin > 0 && jmin + 1 < ks.len(), "scan minimum at the edge");
        let band = (ks[jmin - 1], ks[jmin + 1]);
        let r = minimize_on_band(&prob, sub, band, Some(&curve.minimizers[jmin]), &cfg).unwrap();
        assert!(r.converged);
        assert!(r.k_attained > band.0 && r.k_attained < band.1);
        assert!(r.mu <= smin.mu + 1e-12);
        // A dense 1-d refinement around the scan minimum bounds the band value from above.
        let mut dense = f64::INFINITY;
        let mut warm = curve.minimizers[jmin].clone();
        for i in 0..=200 {
            let k = band.0 * (band.1 / band.0).powf(i as f64 / 200.0);
            let s = minimize_on_sphere(&prob, sub, k, Some(&warm), &cfg).unwrap();
            dense = dense.min(s.mu);
            warm = s.minimizer;
        }
        assert!(r.mu <= dense + 1e-10);
        assert!(dense - r.mu < 1e-6 * (1.0 + r.mu.abs()), "dense {dense} band {}", r.mu);
    }

    #[test]
    fn landscape_and_continuity() {
        let prob = wavy(6);
        let sub = SubcriticalParams::new(&prob, 5.0, 0.05).unwrap();
        let cfg = SolverConfig::default();
        let one = landscape(&prob, sub, &[2.0], &cfg).unwrap();
        assert_eq!(one.samples.len(), 1);
        let direct = minimize_on_sphere(&prob, sub, 2.0, None, &cfg).unwrap();
        assert!((one.samples[0].mu - direct.mu).abs() < 1e-9 * (1.0 + direct.mu.abs()));
        assert!(landscape(&prob, sub, &[2.0, 1.0], &cfg).is_err());

        let zero = continuity_probe(&prob, sub, 2.0, 0.0, &cfg).unwrap();
        assert_eq!(zero.max_jump, 0.0);
        let small = continuity_probe(&prob, sub, 2.0, 1e-3, &cfg).unwrap();
        assert!(small.converged);
        assert!(small.max_jump <= 1e-2 * (1.0 + small.mu_k.abs()));
    }

    #[test]
    fn p_not_two_converges() {
        let g = TorusGrid::new(3, 6).unwrap();
        let tau = 2.0 * std::f64::consts::PI;
        let f = ScalarField::from_fn(g, |x| -1.0 + 0.5 * (tau * x[0]).cos());
        let prob = ProblemData::new(2.5, -1.0, f, ScalarField::constant(g, 0.3)).unwrap();
        let sub = SubcriticalParams::new(&prob, 0.5 * (prob.p_flat() + prob.p_star()), 0.05).unwrap();
        let r = minimize_on_sphere(&prob, sub, 2.0, None, &SolverConfig::default()).unwrap();
        assert!(r.converged, "residual {} after {}", r.grad_norm, r.iterations);
        assert!(r.mu <= constant_energy(&prob, sub, 2.0) + 1e-12);
    }
}
