//! Run configuration: TOML with the sections `[manifold]`, `[problem]`,
//! `[solver]`, `[scenario]` and `[output]`. Unknown and duplicate keys are errors.

use std::path::Path;

use lich_core::expr::{eval_on_grid, parse_expr};
use lich_core::minimize::SolverConfig;
use lich_core::thresholds::Theorem;
use lich_core::{ProblemData, TorusGrid};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub manifold: Manifold,
    pub problem: Problem,
    #[serde(default)]
    pub solver: Solver,
    #[serde(default)]
    pub scenario: Scenario,
    #[serde(default)]
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifold {
    pub n: usize,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Problem {
    pub p: f64,
    pub h: f64,
    /// Expression in `x1, …, xn`.
    pub f: String,
    pub a: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Solver {
    pub tol_grad: f64,
    pub tol_energy: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub path_nodes: usize,
    pub tol_residual: f64,
    pub distinct_tol: f64,
    pub eigen_seeds: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_reg: Option<f64>,
    pub eps0: f64,
    pub stages: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_starstar: Option<f64>,
    pub probes: usize,
    pub kstar_samples: usize,
}

impl Default for Solver {
    fn default() -> Self {
        let d = SolverConfig::default();
        Solver {
            tol_grad: d.tol_grad,
            tol_energy: d.tol_energy,
            max_iters: d.max_iters,
            seed: d.seed,
            path_nodes: d.path_nodes,
            tol_residual: d.tol_residual,
            distinct_tol: d.distinct_tol,
            eigen_seeds: d.eigen_seeds,
            delta_reg: d.delta_reg,
            eps0: 0.1,
            stages: 8,
            eta0: None,
            k_starstar: None,
            probes: 200,
            kstar_samples: 6,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// `thm1`, `thm2-case1` or `thm2-case2`; inferred from `sup f` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theorem: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_list: Option<Vec<f64>>,
    #[serde(rename = "Lambda", skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel_step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Output {
    pub dir: String,
    /// Subset of `csv`, `svg`, `field`.
    pub formats: Vec<String>,
}

impl Default for Output {
    fn default() -> Self {
        Output { dir: "lich-out".into(), formats: vec!["csv".into(), "svg".into(), "field".into()] }
    }
}

impl Output {
    pub fn wants(&self, format: &str) -> bool {
        self.formats.iter().any(|f| f == format)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn range(ok: bool, msg: impl FnOnce() -> String) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError(format!("range error: {}", msg())))
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError(format!("parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let m = &self.manifold;
        range((1..=3).contains(&m.n), || format!("n = {} must be 1, 2 or 3", m.n))?;
        range(m.points >= 3, || format!("points = {} must be at least 3", m.points))?;
        let p = self.problem.p;
        range(p > 1.0 && p < m.n as f64, || format!("p = {p} violates 1 < p < n with n = {}", m.n))?;
        range(self.problem.h < 0.0, || format!("h = {} must be negative", self.problem.h))?;
        let s = &self.solver;
        for (name, v) in [
            ("tol_grad", s.tol_grad),
            ("tol_energy", s.tol_energy),
            ("tol_residual", s.tol_residual),
            ("distinct_tol", s.distinct_tol),
            ("eps0", s.eps0),
        ] {
            range(v > 0.0 && v.is_finite(), || format!("{name} = {v} must be positive"))?;
        }
        range(s.max_iters >= 1, || "max_iters must be at least 1".into())?;
        range(s.path_nodes >= 3, || format!("path_nodes = {} must be at least 3", s.path_nodes))?;
        range(s.stages >= 1, || "stages must be at least 1".into())?;
        range(s.eigen_seeds >= 1, || "eigen_seeds must be at least 1".into())?;
        range(s.probes >= 1, || "probes must be at least 1".into())?;
        range(s.kstar_samples >= 2, || "kstar_samples must be at least 2".into())?;
        if let Some(d) = s.delta_reg {
            range(d >= 0.0, || format!("delta_reg = {d} must be nonnegative"))?;
        }
        if let Some(e) = s.eta0 {
            range(e > 0.0 && e < 2.0, || format!("eta0 = {e} must lie in (0, 2)"))?;
        }
        if let Some(k) = s.k_starstar {
            range(k > 1.0, || format!("k_starstar = {k} must exceed 1"))?;
        }
        let sc = &self.scenario;
        if let Some(t) = &sc.theorem {
            parse_theorem(t)?;
        }
        if let (Some(lo), Some(hi)) = (sc.k_min, sc.k_max) {
            range(lo > 0.0 && lo < hi, || format!("need 0 < k_min < k_max, got {lo} and {hi}"))?;
        }
        if let Some(n) = sc.k_samples {
            range(n >= 2, || format!("k_samples = {n} must be at least 2"))?;
        }
        if let Some(etas) = &sc.eta_list {
            range(!etas.is_empty() && etas.iter().all(|&e| e > 0.0) && etas.windows(2).all(|w| w[0] < w[1]), || {
                "eta_list must be positive and strictly increasing".into()
            })?;
        }
        if let Some(r) = sc.rel_step {
            range((0.0..1.0).contains(&r), || format!("rel_step = {r} must lie in [0, 1)"))?;
        }
        for f in &self.output.formats {
            range(["csv", "svg", "field"].contains(&f.as_str()), || format!("unknown output format {f:?}"))?;
        }
        Ok(())
    }

    pub fn solver_config(&self) -> SolverConfig {
        let s = &self.solver;
        SolverConfig {
            tol_grad: s.tol_grad,
            tol_energy: s.tol_energy,
            max_iters: s.max_iters,
            seed: s.seed,
            path_nodes: s.path_nodes,
            tol_residual: s.tol_residual,
            distinct_tol: s.distinct_tol,
            eigen_seeds: s.eigen_seeds,
            delta_reg: s.delta_reg,
        }
    }

    /// Sample `f` and `a` on the grid.
    pub fn problem_data(&self) -> Result<(ProblemData, Vec<String>), ConfigError> {
        let grid = TorusGrid::new(self.manifold.n, self.manifold.points).map_err(|e| ConfigError(e.to_string()))?;
        let mut warnings = Vec::new();
        let mut sample = |name: &str, text: &str| {
            let e = parse_expr(text).map_err(|e| ConfigError(format!("problem.{name}: {e}")))?;
            let s = eval_on_grid(&e, grid).map_err(|e| ConfigError(format!("problem.{name}: {e}")))?;
            if s.non_periodic {
                warnings.push(format!("problem.{name} is not periodic across the torus seams"));
            }
            Ok::<_, ConfigError>(s.field)
        };
        let f = sample("f", &self.problem.f)?;
        let a = sample("a", &self.problem.a)?;
        if a.min() < 0.0 {
            return Err(ConfigError(format!("range error: a must be nonnegative, min a = {}", a.min())));
        }
        let prob = ProblemData::new(self.problem.p, self.problem.h, f, a).map_err(|e| ConfigError(e.to_string()))?;
        Ok((prob, warnings))
    }

    /// Configured theorem, or the one suggested by the sign of `sup f`.
    pub fn theorem(&self, prob: &ProblemData) -> Result<Theorem, ConfigError> {
        match &self.scenario.theorem {
            Some(t) => parse_theorem(t),
            None if prob.sup_f() > 0.0 => Ok(Theorem::Thm1),
            None if prob.sup_f() < 0.0 => Ok(Theorem::Thm2Case2),
            None => Ok(Theorem::Thm2Case1),
        }
    }
}

pub fn parse_theorem(t: &str) -> Result<Theorem, ConfigError> {
    match t {
        "thm1" => Ok(Theorem::Thm1),
        "thm2-case1" => Ok(Theorem::Thm2Case1),
        "thm2-case2" => Ok(Theorem::Thm2Case2),
        _ => Err(ConfigError(format!("range error: theorem {t:?} is not thm1, thm2-case1 or thm2-case2"))),
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    RunConfig::parse(&text)
}
