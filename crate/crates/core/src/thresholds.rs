//! Closed-form constants and hypothesis predicates.
//!
//! Every function here is a pure formula evaluator. [`theorem_gate`] collects
//! them into a [`ThresholdReport`] whose verdicts can be recomputed from the
//! echoed inputs.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::gamma;

use crate::energy::{p_flat, p_star, ProblemData};
use crate::torus::{grad, integrate, lp_norm_pow, ScalarField, TorusGrid};
use crate::Error;

fn check_p(n: usize, p: f64) -> Result<(), Error> {
    if p > 1.0 && p < n as f64 {
        Ok(())
    } else {
        Err(Error::Domain(format!("need 1 < p < n, got p = {p}, n = {n}")))
    }
}

fn check_positive(name: &str, v: f64) -> Result<(), Error> {
    if v > 0.0 {
        Ok(())
    } else {
        Err(Error::Degenerate(format!("{name} must be positive, got {v}")))
    }
}

/// Sharp Euclidean Sobolev constant `K(n,p)` in `‖u‖_{p*} ≤ K ‖∇u‖_p` (Talenti).
pub fn sobolev_k(n: usize, p: f64) -> Result<f64, Error> {
    check_p(n, p)?;
    let nf = n as f64;
    let ratio = gamma(1.0 + nf / 2.0) * gamma(nf) / (gamma(nf / p) * gamma(1.0 + nf - nf / p));
    Ok(std::f64::consts::PI.powf(-0.5)
        * nf.powf(-1.0 / p)
        * ((p - 1.0) / (nf - p)).powf(1.0 - 1.0 / p)
        * ratio.powf(1.0 / nf))
}

/// `(‖u‖_{p*}^p − (K^p + eps_sob)‖∇u‖_p^p) / ‖u‖_p^p`, the smallest admissible `A` for `u`.
pub fn sobolev_defect(u: &ScalarField, p: f64, k_pow_p: f64, eps_sob: f64) -> f64 {
    let n = u.grid().dim();
    let ps = p_star(n, p);
    let lhs = lp_norm_pow(u, ps).powf(p / ps);
    let g = grad(u).norm_sq().map(|s| s.powf(0.5 * p));
    let base = lp_norm_pow(u, p);
    if base == 0.0 {
        return 0.0;
    }
    (lhs - (k_pow_p + eps_sob) * integrate(&g)) / base
}

/// One random probe: a smooth random wave packet, a bump, or a single mode.
pub fn random_probe(grid: TorusGrid, rng: &mut ChaCha8Rng) -> ScalarField {
    let n = grid.dim();
    let tau = 2.0 * std::f64::consts::PI;
    match rng.gen_range(0..3) {
        0 => {
            let offset: f64 = rng.gen_range(0.0..2.0);
            let modes: Vec<([f64; 3], f64, f64)> = (0..rng.gen_range(1..6))
                .map(|_| {
                    let mut m = [0.0; 3];
                    for mk in m.iter_mut().take(n) {
                        *mk = rng.gen_range(-3i32..=3) as f64;
                    }
                    (m, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..tau))
                })
                .collect();
            ScalarField::from_fn(grid, |x| {
                offset
                    + modes
                        .iter()
                        .map(|(m, c, ph)| c * (tau * (m[0] * x[0] + m[1] * x[1] + m[2] * x[2]) + ph).cos())
                        .sum::<f64>()
            })
        }
        1 => {
            let sigma: f64 = rng.gen_range(0.05..0.45);
            let offset: f64 = rng.gen_range(0.0..1.0);
            let mut c = [0.0; 3];
            for ck in c.iter_mut().take(n) {
                *ck = rng.gen_range(0.0..1.0);
            }
            ScalarField::from_fn(grid, |x| {
                let mut r2 = 0.0;
                for k in 0..n {
                    let d = (x[k] - c[k]).rem_euclid(1.0);
                    let d = d.min(1.0 - d);
                    r2 += d * d;
                }
                offset + (-r2 / (2.0 * sigma * sigma)).exp()
            })
        }
        _ => {
            let axis = rng.gen_range(0..n);
            let m = rng.gen_range(1..=(grid.points_per_axis() / 4).max(1)) as f64;
            let amp: f64 = rng.gen_range(0.0..1.5);
            ScalarField::from_fn(grid, |x| 1.0 + amp * (tau * m * x[axis]).cos())
        }
    }
}

/// Deterministic probe set: the constant, every single axis mode up to a
/// quarter of the resolution, then seeded random probes up to `probes` fields.
pub fn probe_set(grid: TorusGrid, probes: usize) -> Vec<ScalarField> {
    let mut out = vec![ScalarField::constant(grid, 1.0)];
    let tau = 2.0 * std::f64::consts::PI;
    'modes: for m in 1..=(grid.points_per_axis() / 4).max(1) {
        for amp in [0.5, 1.0] {
            if out.len() >= probes {
                break 'modes;
            }
            let m = m as f64;
            out.push(ScalarField::from_fn(grid, |x| 1.0 + amp * (tau * m * x[0]).cos()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_a11c);
    while out.len() < probes {
        out.push(random_probe(grid, &mut rng));
    }
    out
}

/// Grid-calibrated constant `A` of the Sobolev inequality with constant `K^p + eps_sob`.
pub fn calibrate_a(grid: TorusGrid, p: f64, eps_sob: f64, probes: usize) -> Result<f64, Error> {
    check_positive("eps_sob", eps_sob)?;
    Ok(calibrate_a_with(&probe_set(grid, probes.max(1)), p, eps_sob)?)
}

/// Calibration over an explicit probe list.
pub fn calibrate_a_with(probes: &[ScalarField], p: f64, eps_sob: f64) -> Result<f64, Error> {
    let n = probes.first().map(|u| u.grid().dim()).unwrap_or(3);
    let kp = sobolev_k(n, p)?.powf(p);
    let worst = probes.iter().map(|u| sobolev_defect(u, p, kp, eps_sob)).fold(0.0f64, f64::max);
    Ok(1.5 * worst)
}

/// `k₀ = ((p+q)/(2p) · |h|/∫|f⁻|)^(q/(q−p))`.
pub fn k0(p: f64, q: f64, h: f64, f_minus: f64) -> Result<f64, Error> {
    check_positive("F_minus", f_minus)?;
    if !(q > p) {
        return Err(Error::Domain(format!("need q > p, got q = {q}")));
    }
    Ok(((p + q) / (2.0 * p) * h.abs() / f_minus).powf(q / (q - p)))
}

/// Theorem-2 variant `k₀ = ((q/p) · h/∫f)^(q/(q−p))`.
pub fn k0_theorem2(p: f64, q: f64, h: f64, int_f: f64) -> Result<f64, Error> {
    if !(int_f < 0.0) {
        return Err(Error::Degenerate(format!("need ∫f < 0, got {int_f}")));
    }
    Ok((q / p * h / int_f).powf(q / (q - p)))
}

/// Upper bound on `∫a` required by Theorem 1.
pub fn condition_1_3_rhs(n: usize, p: f64, h: f64, f_minus: f64) -> Result<f64, Error> {
    check_p(n, p)?;
    check_positive("F_minus", f_minus)?;
    let nf = n as f64;
    Ok(p / (2.0 * (nf - p))
        * ((2.0 * nf - p) / (2.0 * (nf - p))).powf(2.0 * nf / p - 1.0)
        * (h.abs() / f_minus).powf(2.0 * nf / p)
        * f_minus)
}

/// `φ(q) = ((p+q)/(2p) · |h|/F)^((q+p)/(q−p)) · (|h|/(2p))(q−p)`.
pub fn phi_q(p: f64, q: f64, h: f64, f_minus: f64) -> Result<f64, Error> {
    check_positive("F_minus", f_minus)?;
    if !(q > p) {
        return Err(Error::Domain(format!("need q > p, got q = {q}")));
    }
    Ok(((p + q) / (2.0 * p) * h.abs() / f_minus).powf((q + p) / (q - p)) * (h.abs() / (2.0 * p)) * (q - p))
}

/// `k₁ = (|h|q/(η₀F))^(q/(q−p))` and `k₂ = 2^(n/p) k₁`.
pub fn k1q_k2q(n: usize, p: f64, q: f64, h: f64, eta0: f64, f_minus: f64) -> Result<(f64, f64), Error> {
    check_positive("F_minus", f_minus)?;
    check_positive("eta0", eta0)?;
    if !(q > p) {
        return Err(Error::Domain(format!("need q > p, got q = {q}")));
    }
    let k1 = (h.abs() * q / (eta0 * f_minus)).powf(q / (q - p));
    Ok((k1, 2f64.powf(n as f64 / p) * k1))
}

/// `m = min{δ/(A + (K^p+1)(|h| + pδ)), (p−1)|h|/p}` and `C_q = η₀ m/(4|h|)`.
pub fn m_and_cq(p: f64, h: f64, delta: f64, k: f64, a: f64, eta0: f64) -> Result<(f64, f64), Error> {
    check_positive("delta", delta)?;
    let kp1 = k.powf(p) + 1.0;
    let m = (delta / (a + kp1 * (h.abs() + p * delta))).min((p - 1.0) * h.abs() / p);
    Ok((m, eta0 * m / (4.0 * h.abs())))
}

/// `C₁ = (η₀/(4|h|)) · min{(λ_f+h)/(2p[A + (K^p+1)λ_f]), (p−1)|h|/p}`.
pub fn c1(p: f64, h: f64, lambda_f: f64, k: f64, a: f64, eta0: f64) -> Result<f64, Error> {
    if !(lambda_f + h > 0.0) {
        return Err(Error::Domain(format!("|h| < λ_f violated: λ_f = {lambda_f}, h = {h}")));
    }
    let kp1 = k.powf(p) + 1.0;
    let first = if lambda_f.is_infinite() {
        1.0 / (2.0 * p * kp1)
    } else {
        (lambda_f + h) / (2.0 * p * (a + kp1 * lambda_f))
    };
    Ok(eta0 / (4.0 * h.abs()) * first.min((p - 1.0) * h.abs() / p))
}

/// `Λ`, `C₂` and the κ test of the energy-limit argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct C2Lambda {
    pub c2: f64,
    pub lambda: f64,
    pub kappa: f64,
    pub kappa_ok: bool,
}

/// `Λ = [pμ̂ + (sup f)k_** + (1+|h|)k_**^(p/p♭)]^(1/p)` and
/// `C₂ = min{(2(K^p+1))⁻¹ (K^p+1+A)^(−(p*−p)/p) (pμ̂ + k_** + (1+|h|)k_**^(p/p♭))^(−(p*−p)/p), 1}`.
///
/// `kappa` is `(K^p+1)(K^p+1+A)^((p*−p)/p) · sup f · Λ^(p*−p)`, the left side
/// of the κ condition with the Moser exponent taken to 0.
#[allow(clippy::too_many_arguments)]
pub fn c2_and_lambda(
    n: usize,
    p: f64,
    h: f64,
    k: f64,
    a: f64,
    mu_hat: f64,
    k_starstar: f64,
    sup_f: f64,
) -> Result<C2Lambda, Error> {
    check_p(n, p)?;
    if !(mu_hat >= 0.0) {
        return Err(Error::Domain(format!("mu_hat must be nonnegative, got {mu_hat}")));
    }
    if !(k_starstar > 1.0) {
        return Err(Error::Domain(format!("k_starstar must exceed 1, got {k_starstar}")));
    }
    let (ps, pf) = (p_star(n, p), p_flat(n, p));
    let kp1 = k.powf(p) + 1.0;
    let e = (ps - p) / p;
    let tail = (1.0 + h.abs()) * k_starstar.powf(p / pf);
    let lambda = (p * mu_hat + sup_f * k_starstar + tail).powf(1.0 / p);
    let c2 = ((2.0 * kp1).recip() * (kp1 + a).powf(-e) * (mu_hat * p + k_starstar + tail).powf(-e)).min(1.0);
    let kappa = kp1 * (kp1 + a).powf(e) * sup_f * lambda.powf(ps - p);
    Ok(C2Lambda { c2, lambda, kappa, kappa_ok: kappa < 0.5 })
}

/// Outcome of the non-existence test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonexistenceVerdict {
    /// `∫a^(np/(2np+n−p))`.
    pub lhs: f64,
    pub rhs: f64,
    /// Exponents on `(K^p+1+A)`, `Λ` and `∫|f⁻|^{p*}`.
    pub exponents: (f64, f64, f64),
    /// "non-existence below Λ".
    pub nonexistent: bool,
}

pub fn nonexistence_check(
    n: usize,
    p: f64,
    k: f64,
    a_const: f64,
    lambda: f64,
    a: &ScalarField,
    f: &ScalarField,
) -> Result<NonexistenceVerdict, Error> {
    check_p(n, p)?;
    let nf = n as f64;
    let ps = p_star(n, p);
    let d = 2.0 * nf * p + nf - p;
    let lhs = integrate(&a.map(|v| v.powf(nf * p / d)));
    let e_base = 2.0 * p * nf * nf / (d * (nf - p));
    let e_lambda = 2.0 * p * p * nf * nf / (d * (nf - p));
    let e_f = (nf - p) / d;
    let fm = integrate(&f.map(|v| (-v).max(0.0).powf(ps)));
    let rhs = (k.powf(p) + 1.0 + a_const).powf(e_base) * lambda.powf(e_lambda) * fm.powf(e_f);
    Ok(NonexistenceVerdict { lhs, rhs, exponents: (e_base, e_lambda, e_f), nonexistent: lhs > rhs })
}

/// `min{(h/inf f)^(1/(p♭−p)), 1}`, a floor for positive solutions.
pub fn lemma22_lower_bound(p: f64, p_flat: f64, h: f64, inf_f: f64) -> Result<f64, Error> {
    if !(inf_f < 0.0) {
        return Err(Error::Domain(format!("lower bound inapplicable: inf f = {inf_f} ≥ 0")));
    }
    Ok((h / inf_f).powf(1.0 / (p_flat - p)).min(1.0))
}

/// `−(1/p*) min{(|h|/F⁻)^((2n−p)/p), 1} F⁺`.
pub fn mu_k0_upper_bound(n: usize, p: f64, h: f64, f_minus: f64, f_plus: f64) -> Result<f64, Error> {
    check_p(n, p)?;
    if !(f_plus >= 0.0) {
        return Err(Error::Domain(format!("F_plus must be nonnegative, got {f_plus}")));
    }
    if f_plus == 0.0 {
        return Ok(0.0);
    }
    check_positive("F_minus", f_minus)?;
    let nf = n as f64;
    Ok(-(h.abs() / f_minus).powf((2.0 * nf - p) / p).min(1.0) * f_plus / p_star(n, p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Theorem {
    Thm1,
    Thm2Case1,
    Thm2Case2,
}

impl Theorem {
    pub fn name(self) -> &'static str {
        match self {
            Theorem::Thm1 => "thm1",
            Theorem::Thm2Case1 => "thm2-case1",
            Theorem::Thm2Case2 => "thm2-case2",
        }
    }
}

/// Numerically obtained inputs of the gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateInputs {
    /// May be `+∞`.
    pub lambda_f: f64,
    pub eta0: f64,
    /// Sobolev constant `K(n,p)`.
    pub k: f64,
    /// Calibrated `A`.
    pub a: f64,
    /// Landscape estimates; the full constant `C` is reported only when both are given.
    pub mu_hat: Option<f64>,
    pub k_starstar: Option<f64>,
}

/// One hypothesis test.
#[derive(Debug, Clone, PartialEq)]
pub struct Clause {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub passed: bool,
    /// Whether the clause enters the overall verdict.
    pub binding: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdReport {
    pub theorem: Theorem,
    pub inputs: Vec<(&'static str, f64)>,
    pub constants: Vec<(&'static str, f64)>,
    pub clauses: Vec<Clause>,
    pub passed: bool,
}

impl ThresholdReport {
    pub fn clause(&self, name: &str) -> Option<&Clause> {
        self.clauses.iter().find(|c| c.name == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.constants.iter().chain(&self.inputs).find(|(n, _)| *n == name).map(|(_, v)| *v)
    }

    /// First failing binding clause.
    pub fn first_failure(&self) -> Option<&Clause> {
        self.clauses.iter().find(|c| c.binding && !c.passed)
    }

    /// `name,value,verdict` rows with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,value,verdict\n");
        for (name, v) in self.inputs.iter().chain(&self.constants) {
            let _ = writeln!(out, "{name},{},", fmt_f64(*v));
        }
        for c in &self.clauses {
            let verdict = match (c.passed, c.binding) {
                (true, true) => "pass",
                (false, true) => "fail",
                (true, false) => "pass (auxiliary)",
                (false, false) => "fail (auxiliary)",
            };
            let _ = writeln!(out, "{}.lhs,{},{verdict}", c.name, fmt_f64(c.lhs));
            let _ = writeln!(out, "{}.rhs,{},{verdict}", c.name, fmt_f64(c.rhs));
        }
        let _ = writeln!(out, "overall,,{}", if self.passed { "pass" } else { "fail" });
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("hypothesis gate for {}\n", self.theorem.name());
        out.push_str("inputs:\n");
        for (name, v) in &self.inputs {
            let _ = writeln!(out, "  {name:<14} {v:.10e}");
        }
        out.push_str("constants:\n");
        for (name, v) in &self.constants {
            let _ = writeln!(out, "  {name:<14} {v:.10e}");
        }
        out.push_str("clauses:\n");
        for c in &self.clauses {
            let _ = writeln!(
                out,
                "  [{}] {:<22} {:.6e} vs {:.6e}{}",
                if c.passed { "pass" } else { "FAIL" },
                c.name,
                c.lhs,
                c.rhs,
                if c.binding { "" } else { "  (auxiliary)" }
            );
        }
        let _ = writeln!(out, "overall: {}", if self.passed { "pass" } else { "fail" });
        out
    }
}

/// Float formatting shared by every CSV writer: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Evaluate the hypotheses of the chosen theorem.
///
/// For Theorem 1 the smallness of `sup f/∫|f⁻|` is tested against `C₁`.
/// The full constant `C = min{C₁, η₀C₂/(|h|p*)}` and the scaling identity `|h| = (η₀/p*)∫|f⁻|` are
/// reported as auxiliary clauses.
pub fn theorem_gate(prob: &ProblemData, which: Theorem, computed: GateInputs) -> ThresholdReport {
    let (n, p, h) = (prob.n, prob.p, prob.h);
    let ps = prob.p_star();
    let f_minus = prob.f_minus();
    let f_plus = prob.f_plus();
    let sup_f = prob.sup_f();
    let int_f = prob.int_f();
    let int_a = prob.int_a();
    let mut inputs = vec![
        ("n", n as f64),
        ("p", p),
        ("h", h),
        ("F_minus", f_minus),
        ("F_plus", f_plus),
        ("sup_f", sup_f),
        ("int_f", int_f),
        ("int_a", int_a),
        ("eta0", computed.eta0),
        ("lambda_f", computed.lambda_f),
        ("K", computed.k),
        ("A", computed.a),
    ];
    let mut constants = Vec::new();
    let mut clauses = Vec::new();
    let lam_clause = Clause {
        name: "|h| < lambda_f",
        lhs: h.abs(),
        rhs: computed.lambda_f,
        passed: h.abs() < computed.lambda_f,
        binding: true,
    };
    match which {
        Theorem::Thm1 => {
            clauses.push(Clause { name: "int a > 0", lhs: int_a, rhs: 0.0, passed: int_a > 0.0, binding: true });
            clauses.push(Clause { name: "int f < 0", lhs: int_f, rhs: 0.0, passed: int_f < 0.0, binding: true });
            clauses.push(Clause { name: "sup f > 0", lhs: sup_f, rhs: 0.0, passed: sup_f > 0.0, binding: true });
            clauses.push(lam_clause);
            let rhs13 = condition_1_3_rhs(n, p, h, f_minus).unwrap_or(f64::NAN);
            constants.push(("int_a_bound", rhs13));
            clauses.push(Clause { name: "int a bound", lhs: int_a, rhs: rhs13, passed: int_a < rhs13, binding: true });
            let e41 = computed.eta0 / ps * f_minus;
            clauses.push(Clause { name: "h scaling identity", lhs: h.abs(), rhs: e41, passed: h.abs() <= e41, binding: false });
            let ratio = if f_minus > 0.0 { sup_f / f_minus } else { f64::INFINITY };
            constants.push(("ratio", ratio));
            let c1v = c1(p, h, computed.lambda_f, computed.k, computed.a, computed.eta0).unwrap_or(0.0);
            constants.push(("C1", c1v));
            clauses.push(Clause { name: "sup f ratio <= C1", lhs: ratio, rhs: c1v, passed: ratio <= c1v, binding: true });
            if let (Some(mu_hat), Some(kss)) = (computed.mu_hat, computed.k_starstar) {
                inputs.push(("mu_hat", mu_hat));
                inputs.push(("k_starstar", kss));
                if let Ok(c2l) = c2_and_lambda(n, p, h, computed.k, computed.a, mu_hat, kss, sup_f) {
                    let c = c1v.min(computed.eta0 / (h.abs() * ps) * c2l.c2);
                    constants.push(("C2", c2l.c2));
                    constants.push(("Lambda", c2l.lambda));
                    constants.push(("kappa", c2l.kappa));
                    constants.push(("C", c));
                    clauses.push(Clause { name: "sup f ratio <= C", lhs: ratio, rhs: c, passed: ratio <= c, binding: false });
                }
            }
        }
        Theorem::Thm2Case1 => {
            let zero_somewhere = prob.f.values().iter().any(|&v| v == 0.0);
            clauses.push(Clause {
                name: "f <= 0, not < 0",
                lhs: sup_f,
                rhs: 0.0,
                passed: sup_f <= 0.0 && zero_somewhere,
                binding: true,
            });
            clauses.push(lam_clause);
        }
        Theorem::Thm2Case2 => {
            clauses.push(Clause { name: "sup f < 0", lhs: sup_f, rhs: 0.0, passed: sup_f < 0.0, binding: true });
            clauses.push(lam_clause);
        }
    }
    let passed = clauses.iter().filter(|c| c.binding).all(|c| c.passed);
    ThresholdReport { theorem: which, inputs, constants, clauses, passed }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    /// `‖∇u‖₂/‖u‖₆` for the bubble `(1+r^(p/(p−1)))^(−(n−p)/p)` by radial quadrature.
    fn bubble_quotient(n: usize, p: f64, lambda: f64) -> f64 {
        let nf = n as f64;
        let ps = p_star(n, p);
        let beta = p / (p - 1.0);
        let e = (nf - p) / p;
        let u = |r: f64| (1.0 + lambda * r.powf(beta)).powf(-e);
        let du = |r: f64| e * lambda * beta * r.powf(beta - 1.0) * (1.0 + lambda * r.powf(beta)).powf(-e - 1.0);
        // r = e^s, trapezoid rule; both integrands decay exponentially in s.
        let (m, s0, s1) = (40_000, -60.0, 60.0);
        let ds = (s1 - s0) / m as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for j in 0..=m {
            let r = (s0 + ds * j as f64).exp();
            let w = if j == 0 || j == m { 0.5 } else { 1.0 };
            num += w * du(r).powf(p) * r.powf(nf);
            den += w * u(r).powf(ps) * r.powf(nf);
        }
        let omega = 2.0 * std::f64::consts::PI.powf(nf / 2.0) / gamma(nf / 2.0);
        (omega * num * ds).powf(1.0 / p) / (omega * den * ds).powf(1.0 / ps)
    }

    #[test]
    fn talenti_matches_radial_oracle() {
        for (n, p) in [(3, 2.0), (3, 2.5), (3, 1.5)] {
            let k = sobolev_k(n, p).unwrap();
            for lambda in [0.5, 1.0, 3.0] {
                let q = bubble_quotient(n, p, lambda);
                assert!(rel(1.0 / q, k) < 1e-8, "n={n} p={p}: 1/q = {} K = {k}", 1.0 / q);
            }
        }
        assert!(sobolev_k(3, 3.0).is_err());
        let k32 = sobolev_k(3, 2.0).unwrap();
        assert!(rel(k32 * k32, 4.0 / (3.0 * (2.0 * std::f64::consts::PI.powi(2)).powf(2.0 / 3.0))) < 1e-14);
    }

    #[test]
    fn substitution_examples() {
        assert!(rel(k0(2.0, 3.0, -1.0, 1.0).unwrap(), 1.953125) < 1e-12);
        assert!(rel(k0(2.0, 3.0, -1.0, 1.25).unwrap(), 1.0) < 1e-12);
        assert!(k0(2.0, 3.0, -1.0, 0.0).is_err());
        assert!(rel(condition_1_3_rhs(3, 2.0, -1.0, 1.0).unwrap(), 4.0) < 1e-12);
        assert!(rel(condition_1_3_rhs(3, 2.0, -1.0, 2.0).unwrap(), 1.0) < 1e-12);
        assert!(rel(phi_q(2.0, 3.0, -1.0, 1.0).unwrap(), 0.762939453125) < 1e-12);
        assert_eq!(phi_q(2.0, 5.0, -1.0, 3.5 / 2.0 * 1.0).unwrap(), (1.0 / 4.0) * 3.0);
        let (k1, k2) = k1q_k2q(3, 2.0, 3.0, -1.0, 1.0, 2.0).unwrap();
        assert!(rel(k1, 3.375) < 1e-12);
        assert!(rel(k2, 2f64.powf(1.5) * 3.375) < 1e-12);
        assert!((k2 - 9.54594).abs() < 1e-5);
        let (m, cq) = m_and_cq(2.0, -1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(rel(m, 1.0 / 7.0) < 1e-12);
        assert!(rel(cq, 1.0 / 28.0) < 1e-12);
        assert!(rel(c1(2.0, -1.0, 2.0, 1.0, 1.0, 1.0).unwrap(), 0.0125) < 1e-12);
        assert!(c1(2.0, -1.0, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(rel(k0_theorem2(2.0, 3.0, -1.0, -2.0).unwrap(), 0.421875) < 1e-12);
        assert!(rel(lemma22_lower_bound(2.0, 4.0, -1.0, -4.0).unwrap(), 0.5) < 1e-12);
        assert_eq!(lemma22_lower_bound(2.0, 4.0, -1.0, -1.0).unwrap(), 1.0);
        assert_eq!(lemma22_lower_bound(2.0, 4.0, -2.0, -1.0).unwrap(), 1.0);
        assert!(lemma22_lower_bound(2.0, 4.0, -1.0, 0.0).is_err());
        assert!(rel(mu_k0_upper_bound(3, 2.0, -1.0, 1.0, 6.0).unwrap(), -1.0) < 1e-12);
        assert_eq!(mu_k0_upper_bound(3, 2.0, -1.0, 1.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn c2_examples() {
        let r = c2_and_lambda(3, 2.0, -1.0, 1.0, 1.0, 1.0, 2.0, 0.0).unwrap();
        let expected = 0.25 / 9.0 / (4.0 + 2.0 * 2f64.sqrt()).powi(2);
        assert!(rel(r.c2, expected) < 1e-12);
        assert!((r.c2 - 5.96e-4).abs() < 1e-6);
        // (2(K^p+1))⁻¹ ≤ 1/2 and the bracket exceeds 1, so the cap at 1 never binds.
        let near = c2_and_lambda(3, 1.01, -1e-9, 1e-6, 0.0, 0.0, 1.0 + 1e-12, 0.0).unwrap();
        assert!(near.c2 < 0.5);
        let sf = 0.5 * r.c2;
        let with_f = c2_and_lambda(3, 2.0, -1.0, 1.0, 1.0, 1.0, 2.0, sf).unwrap();
        assert!(with_f.kappa_ok, "kappa = {}", with_f.kappa);
    }

    #[test]
    fn nonexistence_examples() {
        let g = TorusGrid::new(3, 4).unwrap();
        let f = ScalarField::constant(g, -1.0);
        let kp_a = 2.0; // K^p + 1 + A = 3 with K = 1
        let v = nonexistence_check(3, 2.0, 1.0, kp_a - 1.0, 1.0, &ScalarField::zeros(g), &f).unwrap();
        assert_eq!(v.lhs, 0.0);
        assert!(!v.nonexistent);
        assert!(rel(v.exponents.0, 36.0 / 13.0) < 1e-12);
        assert!(rel(v.exponents.1, 72.0 / 13.0) < 1e-12);
        assert!(rel(v.exponents.2, 1.0 / 13.0) < 1e-12);
        assert!(rel(v.rhs, 3f64.powf(36.0 / 13.0)) < 1e-12);
        assert!((v.rhs - 20.95).abs() < 0.01);
        let big = 21f64.powf(13.0 / 6.0);
        let v = nonexistence_check(3, 2.0, 1.0, 1.0, 1.0, &ScalarField::constant(g, big), &f).unwrap();
        assert!(v.nonexistent);
        let v2 = nonexistence_check(3, 2.0, 1.0, 1.0, 1.1, &ScalarField::constant(g, big), &f).unwrap();
        assert!(v2.rhs > v.rhs);
    }

    #[test]
    fn phi_limit_and_monotonicity() {
        for (p, h, f) in [(2.0, -1.0, 1.0), (2.0, -0.5, 3.0), (1.5, -1.0, 4.0)] {
            let ps = p_star(3, p);
            let lim = condition_1_3_rhs(3, p, h, f).unwrap();
            for k in [4, 6, 8] {
                let v = phi_q(p, ps - 10f64.powi(-k), h, f).unwrap();
                assert!(rel(v, lim) < 1e-6 * 10f64.powi(8 - k).max(1.0), "k={k}");
            }
            if ps / p * h.abs() <= f {
                let mut last = 0.0;
                for j in 1..50 {
                    let q = p + (ps - p) * j as f64 / 50.0;
                    let v = phi_q(p, q, h, f).unwrap();
                    assert!(v > last);
                    last = v;
                }
            }
        }
    }

    #[test]
    fn k1_exceeds_k0() {
        for p in [2.0, 2.5] {
            let (pf, ps) = (p_flat(3, p), p_star(3, p));
            for eta0 in [0.01, 0.5, 1.0, 1.9, 1.999] {
                for j in 1..10 {
                    let q = pf + (ps - pf) * j as f64 / 10.0;
                    for (h, f) in [(-1.0, 1.0), (-0.2, 3.0), (-4.0, 0.5)] {
                        let (k1, _) = k1q_k2q(3, p, q, h, eta0, f).unwrap();
                        assert!(k1 > k0(p, q, h, f).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn k1_vs_k0_below_p2() {
        // The ordering holds exactly when η₀ < 2pq/(p+q), which can drop below 2 for p < 2.
        let (p, h, f) = (1.5, -1.0, 1.0);
        let (pf, ps) = (p_flat(3, p), p_star(3, p));
        for j in 1..10 {
            let q = pf + (ps - pf) * j as f64 / 10.0;
            let cut = 2.0 * p * q / (p + q);
            assert!(cut < 2.0);
            for eta0 in [0.5 * cut, 0.99 * cut, 1.01 * cut] {
                let (k1, _) = k1q_k2q(3, p, q, h, eta0, f).unwrap();
                assert_eq!(k1 > k0(p, q, h, f).unwrap(), eta0 < cut);
            }
        }
    }

    #[test]
    fn c1_bounded_by_cq() {
        let (p, h, lf, k, a, eta0) = (2.0, -1.0, 5.0, 0.4, 3.0, 0.3);
        let c = c1(p, h, lf, k, a, eta0).unwrap();
        for j in 1..=20 {
            let lo = 0.5 * (lf + h) / p;
            let delta = lo + (2.0 * lo - lo) * j as f64 / 20.0;
            let (_, cq) = m_and_cq(p, h, delta, k, a, eta0).unwrap();
            assert!(c <= cq * (1.0 + 1e-15));
        }
        assert!(c1(p, -4.999999, 5.0, k, a, eta0).unwrap() < 1e-6);
    }

    #[test]
    fn calibration() {
        let g = TorusGrid::new(3, 8).unwrap();
        let constant = calibrate_a_with(&[ScalarField::constant(g, 1.0)], 2.0, 1.0).unwrap();
        assert!(rel(constant, 1.5) < 1e-12);
        let probes = probe_set(g, 40);
        let mut last = 0.0;
        for m in 1..=probes.len() {
            let a = calibrate_a_with(&probes[..m], 2.0, 1.0).unwrap();
            assert!(a >= last);
            last = a;
        }
        assert_eq!(calibrate_a(g, 2.0, 1.0, 40).unwrap(), last);
    }

    #[test]
    fn calibrated_a_holds_on_fresh_fields() {
        let g = TorusGrid::new(3, 8).unwrap();
        for p in [2.0, 2.5] {
            let a = calibrate_a(g, p, 1.0, 200).unwrap();
            let kp = sobolev_k(3, p).unwrap().powf(p);
            let mut rng = ChaCha8Rng::seed_from_u64(987);
            for _ in 0..1000 {
                let u = random_probe(g, &mut rng);
                assert!(sobolev_defect(&u, p, kp, 1.0) <= a);
            }
        }
    }
}
