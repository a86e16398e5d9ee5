use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::Result;
use crate::network::WeightMatrices;

use super::fmatrix::{build_f_general, is_doubly_stochastic, mu_exact, zeta, MuSearch, STOCHASTIC_TOL};
use super::gamma::GammaProduct;
use super::linalg::spectral_radius;
use super::theorems::TheoremReport;

/// Spectral radius of `F` at one step size.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub mu: f64,
    pub rho_f: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    /// `ρ(F)` at the configured step size.
    pub mu: f64,
    pub rho_f: f64,
    pub zeta: f64,
    pub mu_lower: f64,
    pub mu_upper: f64,
    pub mu_exact: f64,
    pub mu_exact_bracketed: bool,
    pub unimodal_violations: usize,
    pub doubly_stochastic: bool,
    pub verdicts: Vec<Verdict>,
    /// Period length and critical modulus of the period test, if run.
    pub gamma: Option<(usize, f64, bool)>,
    pub theorems: Vec<TheoremReport>,
    pub warnings: Vec<String>,
}

impl StabilityReport {
    /// Mean-square analysis of a weight set. The two combination steps are
    /// folded into `A2·A1`, which leaves `ρ(F)` unchanged.
    pub fn compute(weights: &WeightMatrices, n: usize, m: usize, mu: f64, tested: &[f64], tol: f64) -> Result<Self> {
        let p = weights.node_count();
        let s = &weights.s;
        let mut warnings = Vec::new();
        let doubly_stochastic = is_doubly_stochastic(s, STOCHASTIC_TOL);
        if !doubly_stochastic {
            warnings.push("S is not doubly stochastic; the step-size bracket does not apply".to_string());
        }
        let eye = DMatrix::identity(p, p);
        let folded = &weights.a2 * &weights.a1;
        let rho_at = |mu: f64| -> Result<f64> { spectral_radius(&build_f_general(&eye, &folded, s, &vec![mu; p], n, m)?) };
        let search: MuSearch = mu_exact(&folded, s, n, m, p, tol)?;
        if !search.bracketed {
            warnings.push("rho(F) - 1 has no sign change on the bracket".to_string());
        }
        let verdicts = tested
            .iter()
            .map(|&t| {
                let r = rho_at(t)?;
                Ok(Verdict { mu: t, rho_f: r, stable: r < 1.0 })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n,
            m,
            p,
            mu,
            rho_f: rho_at(mu)?,
            zeta: zeta(s),
            mu_lower: search.lower,
            mu_upper: search.upper,
            mu_exact: search.mu,
            mu_exact_bracketed: search.bracketed,
            unimodal_violations: search.unimodal_violations,
            doubly_stochastic,
            verdicts,
            gamma: None,
            theorems: Vec::new(),
            warnings,
        })
    }

    pub fn with_gamma(mut self, gamma: &GammaProduct) -> Self {
        let modulus = gamma.critical_modulus(self.n, self.m);
        self.gamma = Some((gamma.period, modulus, modulus < 1.0));
        self
    }

    pub fn with_theorems(mut self, reports: Vec<TheoremReport>) -> Self {
        self.theorems = reports;
        self
    }

    fn pairs(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("n".into(), self.n.to_string()),
            ("m".into(), self.m.to_string()),
            ("p".into(), self.p.to_string()),
            ("mu".into(), format!("{:.12e}", self.mu)),
            ("rho_f".into(), format!("{:.12e}", self.rho_f)),
            ("zeta".into(), format!("{:.12e}", self.zeta)),
            ("mu_lower".into(), format!("{:.12e}", self.mu_lower)),
            ("mu_upper".into(), format!("{:.12e}", self.mu_upper)),
            ("mu_exact".into(), format!("{:.12e}", self.mu_exact)),
            ("mu_exact_bracketed".into(), self.mu_exact_bracketed.to_string()),
            ("unimodal_violations".into(), self.unimodal_violations.to_string()),
            ("doubly_stochastic".into(), self.doubly_stochastic.to_string()),
        ];
        if let Some((period, modulus, pass)) = self.gamma {
            out.push(("gamma_period".into(), period.to_string()));
            out.push(("gamma_critical_modulus".into(), format!("{modulus:.12e}")));
            out.push(("gamma_converges".into(), pass.to_string()));
        }
        for (i, v) in self.verdicts.iter().enumerate() {
            out.push((format!("verdict{i}_mu"), format!("{:.12e}", v.mu)));
            out.push((format!("verdict{i}_rho_f"), format!("{:.12e}", v.rho_f)));
            out.push((format!("verdict{i}_stable"), v.stable.to_string()));
        }
        for t in &self.theorems {
            out.push((format!("{}_trials", t.name), t.trials.to_string()));
            out.push((format!("{}_violations", t.name), t.violations.to_string()));
            out.push((format!("{}_max_violation", t.name), format!("{:.3e}", t.max_violation)));
        }
        for (i, w) in self.warnings.iter().enumerate() {
            out.push((format!("warning{i}"), w.clone()));
        }
        out
    }

    /// `key: value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.pairs() {
            let _ = writeln!(s, "{k}: {v}");
        }
        s
    }

    /// `key=value` lines.
    pub fn to_records(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.pairs() {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }
}
