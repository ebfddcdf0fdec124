//! The regularized energy
//!
//! ```text
//! I(u) = (1/p)∫|∇u|^p + (h/p)∫|u|^p − (1/q)∫f|u|^q + (1/q)∫a/(u²+ε)^(q/2)
//! ```
//!
//! and its first variation. At `ε = 0` the last term is singular where `u`
//! vanishes; [`energy`] then returns `+∞` and [`first_variation`] an error.

use crate::torus::{pairwise_sum, ScalarField, TorusGrid};
use crate::Error;

/// Exponents and coefficients of the equation.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemData {
    pub n: usize,
    pub p: f64,
    pub h: f64,
    pub f: ScalarField,
    pub a: ScalarField,
}

impl ProblemData {
    pub fn new(p: f64, h: f64, f: ScalarField, a: ScalarField) -> Result<Self, Error> {
        let n = f.grid().dim();
        if f.grid() != a.grid() {
            return Err(Error::GridMismatch("f and a must share a grid".into()));
        }
        if !(p > 1.0 && p < n as f64) {
            return Err(Error::Domain(format!("p = {p} violates 1 < p < n (n = {n})")));
        }
        if !(h < 0.0) {
            return Err(Error::Domain(format!("h must be negative, got {h}")));
        }
        if let Some(i) = a.values().iter().position(|&v| v < 0.0) {
            return Err(Error::Domain(format!("a must be nonnegative, a = {} at node {i}", a.values()[i])));
        }
        Ok(ProblemData { n, p, h, f, a })
    }

    pub fn grid(&self) -> TorusGrid {
        self.f.grid()
    }

    pub fn p_star(&self) -> f64 {
        p_star(self.n, self.p)
    }

    pub fn p_flat(&self) -> f64 {
        p_flat(self.n, self.p)
    }

    /// `∫|f⁻|`.
    pub fn f_minus(&self) -> f64 {
        crate::torus::integrate(&self.f.map(|v| (-v).max(0.0)))
    }

    /// `∫f⁺`.
    pub fn f_plus(&self) -> f64 {
        crate::torus::integrate(&self.f.map(|v| v.max(0.0)))
    }

    pub fn sup_f(&self) -> f64 {
        self.f.max()
    }

    pub fn inf_f(&self) -> f64 {
        self.f.min()
    }

    pub fn int_f(&self) -> f64 {
        crate::torus::integrate(&self.f)
    }

    pub fn int_a(&self) -> f64 {
        crate::torus::integrate(&self.a)
    }

    /// The critical pair `q = p*`, `ε = 0`.
    pub fn critical(&self) -> SubcriticalParams {
        SubcriticalParams { q: self.p_star(), eps: 0.0 }
    }
}

pub fn p_star(n: usize, p: f64) -> f64 {
    n as f64 * p / (n as f64 - p)
}

pub fn p_flat(n: usize, p: f64) -> f64 {
    let n = n as f64;
    p * (2.0 * n - p) / (2.0 * (n - p))
}

/// Exponent `q` and regularization `ε` of the subcritical functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubcriticalParams {
    pub q: f64,
    pub eps: f64,
}

impl SubcriticalParams {
    /// Validated constructor: `p♭ < q < p*` with `ε ≥ 0`, or `q = p*` with `ε = 0`.
    pub fn new(prob: &ProblemData, q: f64, eps: f64) -> Result<Self, Error> {
        let (pf, ps) = (prob.p_flat(), prob.p_star());
        if !(eps >= 0.0) {
            return Err(Error::Domain(format!("eps must be nonnegative, got {eps}")));
        }
        if !(q > pf && q <= ps) {
            return Err(Error::Domain(format!("q = {q} outside (p_flat, p_star] = ({pf}, {ps}]")));
        }
        if q == ps && eps != 0.0 {
            return Err(Error::Domain("q = p_star requires eps = 0".into()));
        }
        Ok(SubcriticalParams { q, eps })
    }
}

/// Energy evaluator with precomputed neighbour tables.
pub struct Functional<'a> {
    pub prob: &'a ProblemData,
    pub sub: SubcriticalParams,
    pub delta_reg: f64,
    fwd: Vec<Vec<u32>>,
    bwd: Vec<Vec<u32>>,
}

/// Per-term split of the energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyTerms {
    /// `(1/p)∫|∇u|_reg^p`.
    pub gradient: f64,
    /// `(h/p)∫|u|^p`.
    pub linear: f64,
    /// `-(1/q)∫f⁺|u|^q`.
    pub f_plus: f64,
    /// `(1/q)∫|f⁻||u|^q`.
    pub f_minus: f64,
    /// `(1/q)∫a/(u²+ε)^(q/2)`.
    pub singular: f64,
}

impl EnergyTerms {
    pub fn total(&self) -> f64 {
        self.gradient + self.linear + self.f_plus + self.f_minus + self.singular
    }
}

impl<'a> Functional<'a> {
    pub fn new(prob: &'a ProblemData, sub: SubcriticalParams, delta_reg: f64) -> Self {
        let g = prob.grid();
        Functional { prob, sub, delta_reg, fwd: g.forward_table(), bwd: g.backward_table() }
    }

    pub fn with_sub(&self, sub: SubcriticalParams) -> Functional<'a> {
        Functional { prob: self.prob, sub, delta_reg: self.delta_reg, fwd: self.fwd.clone(), bwd: self.bwd.clone() }
    }

    fn gradient_sq(&self, u: &[f64], i: usize, inv_h: f64) -> f64 {
        let mut s = 0.0;
        for t in &self.fwd {
            let d = (u[t[i] as usize] - u[i]) * inv_h;
            s += d * d;
        }
        s
    }

    /// `(1/p)((|∇u|²+δ²)^(p/2) − δ^p)`; zero on constants.
    fn gradient_density(&self, s: f64) -> f64 {
        let p = self.prob.p;
        if p == 2.0 {
            return 0.5 * s;
        }
        let d2 = self.delta_reg * self.delta_reg;
        ((s + d2).powf(0.5 * p) - d2.powf(0.5 * p)) / p
    }

    pub fn terms(&self, u: &ScalarField) -> EnergyTerms {
        let prob = self.prob;
        let (p, q, eps) = (prob.p, self.sub.q, self.sub.eps);
        let inv_h = prob.grid().points_per_axis() as f64;
        let uv = u.values();
        let fv = prob.f.values();
        let av = prob.a.values();
        let len = uv.len();
        let mut grad_t = Vec::with_capacity(len);
        let mut lin_t = Vec::with_capacity(len);
        let mut fp_t = Vec::with_capacity(len);
        let mut fm_t = Vec::with_capacity(len);
        let mut sing_t = Vec::with_capacity(len);
        for i in 0..len {
            let x = uv[i];
            grad_t.push(self.gradient_density(self.gradient_sq(uv, i, inv_h)));
            lin_t.push(crate::torus::pow_abs(x, p));
            let uq = crate::torus::pow_abs(x, q);
            fp_t.push(fv[i].max(0.0) * uq);
            fm_t.push((-fv[i]).max(0.0) * uq);
            let ai = av[i];
            sing_t.push(if ai == 0.0 {
                0.0
            } else {
                let s = x * x + eps;
                if s == 0.0 {
                    f64::INFINITY
                } else {
                    ai * s.powf(-0.5 * q)
                }
            });
        }
        let w = len as f64;
        EnergyTerms {
            gradient: pairwise_sum(&grad_t) / w,
            linear: prob.h / p * pairwise_sum(&lin_t) / w,
            f_plus: -pairwise_sum(&fp_t) / w / q,
            f_minus: pairwise_sum(&fm_t) / w / q,
            singular: pairwise_sum(&sing_t) / w / q,
        }
    }

    pub fn energy(&self, u: &ScalarField) -> f64 {
        let t = self.terms(u);
        let e = t.total();
        if e.is_nan() {
            f64::INFINITY
        } else {
            e
        }
    }

    /// Nodal first variation `G`, with `integrate(G φ) = δI(u)(φ)`.
    pub fn gradient(&self, u: &ScalarField) -> Result<ScalarField, Error> {
        self.energy_and_gradient(u).map(|(_, g)| g)
    }

    pub fn energy_and_gradient(&self, u: &ScalarField) -> Result<(f64, ScalarField), Error> {
        let prob = self.prob;
        let g = prob.grid();
        let n = g.dim();
        let (p, q, eps, h) = (prob.p, self.sub.q, self.sub.eps, prob.h);
        let inv_h = g.points_per_axis() as f64;
        let uv = u.values();
        let fv = prob.f.values();
        let av = prob.a.values();
        let len = uv.len();
        let d2 = self.delta_reg * self.delta_reg;

        // Flux components per node.
        let mut flux = vec![0.0; len * n];
        let mut dens = Vec::with_capacity(len);
        for i in 0..len {
            let mut s = 0.0;
            for (k, t) in self.fwd.iter().enumerate() {
                let d = (uv[t[i] as usize] - uv[i]) * inv_h;
                flux[i * n + k] = d;
                s += d * d;
            }
            dens.push(self.gradient_density(s));
            if p != 2.0 {
                let st = s + d2;
                let w = if st > 0.0 { st.powf(0.5 * (p - 2.0)) } else { 0.0 };
                for k in 0..n {
                    flux[i * n + k] *= w;
                }
            }
        }
        let mut grad = Vec::with_capacity(len);
        let mut e_lin = Vec::with_capacity(len);
        let mut e_fp = Vec::with_capacity(len);
        let mut e_fm = Vec::with_capacity(len);
        let mut e_a = Vec::with_capacity(len);
        for i in 0..len {
            let x = uv[i];
            let mut lap = 0.0;
            for (k, t) in self.bwd.iter().enumerate() {
                lap -= (flux[i * n + k] - flux[t[i] as usize * n + k]) * inv_h;
            }
            let up = crate::torus::pow_abs(x, p);
            let uq = crate::torus::pow_abs(x, q);
            let (up1, uq1) = if x == 0.0 { (0.0, 0.0) } else { (up / x, uq / x) };
            let ai = av[i];
            let (ea, ga) = if ai == 0.0 {
                (0.0, 0.0)
            } else {
                let s = x * x + eps;
                if s == 0.0 {
                    return Err(Error::Singular(i));
                }
                let sq = s.powf(-0.5 * q);
                (ai * sq, ai * x * sq / s)
            };
            e_lin.push(up);
            e_fp.push(fv[i].max(0.0) * uq);
            e_fm.push((-fv[i]).max(0.0) * uq);
            e_a.push(ea);
            grad.push(lap + h * up1 - fv[i] * uq1 - ga);
        }
        let w = len as f64;
        let e = EnergyTerms {
            gradient: pairwise_sum(&dens) / w,
            linear: h / p * pairwise_sum(&e_lin) / w,
            f_plus: -pairwise_sum(&e_fp) / w / q,
            f_minus: pairwise_sum(&e_fm) / w / q,
            singular: pairwise_sum(&e_a) / w / q,
        }
        .total();
        let field = ScalarField::from_values(g, grad)?;
        Ok((if e.is_nan() { f64::INFINITY } else { e }, field))
    }

    /// `G_q(u) = (1/p)∫|∇u|^p + (h/p)∫|u|^p + (1/q)∫|f⁻||u|^q`.
    pub fn g_q(&self, u: &ScalarField) -> f64 {
        let t = self.terms(u);
        t.gradient + t.linear + t.f_minus
    }
}

pub fn energy(u: &ScalarField, prob: &ProblemData, sub: SubcriticalParams, delta_reg: f64) -> f64 {
    Functional::new(prob, sub, delta_reg).energy(u)
}

pub fn first_variation(
    u: &ScalarField,
    prob: &ProblemData,
    sub: SubcriticalParams,
    delta_reg: f64,
) -> Result<ScalarField, Error> {
    Functional::new(prob, sub, delta_reg).gradient(u)
}

pub fn g_q(u: &ScalarField, prob: &ProblemData, sub: SubcriticalParams, delta_reg: f64) -> f64 {
    Functional::new(prob, sub, delta_reg).g_q(u)
}

/// Energy at `q = p*`, `ε = 0`.
pub fn critical_energy(u: &ScalarField, prob: &ProblemData, delta_reg: f64) -> f64 {
    energy(u, prob, prob.critical(), delta_reg)
}

/// `(∫|∇u|^p + ∫|u|^p)^(1/p)`.
pub fn sobolev_norm(u: &ScalarField, p: f64, delta_reg: f64) -> f64 {
    let g = crate::torus::flux(u, p, delta_reg).inner(&crate::torus::grad(u));
    (g + crate::torus::lp_norm_pow(u, p)).powf(1.0 / p)
}

/// Value of the energy on the constant `u ≡ k^(1/q)`.
pub fn constant_energy(prob: &ProblemData, sub: SubcriticalParams, k: f64) -> f64 {
    let (p, q, eps) = (prob.p, sub.q, sub.eps);
    let int_sing = crate::torus::integrate(&prob.a) / (k.powf(2.0 / q) + eps).powf(0.5 * q);
    prob.h / p * k.powf(p / q) - k / q * prob.int_f() + int_sing / q
}
