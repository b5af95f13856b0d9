//! Analytic N-representability conditions on 1-RDM spectra.
//!
//! Coleman's ensemble conditions are built in. Generalized Pauli
//! inequalities `c₀ + Σ_j c_j λ_j ≥ 0` on the descending spectrum are read
//! from coefficient files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rdm::{spectrum, RdmMatrix};
use crate::scalar::Real;

/// Default tolerance for condition checks.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InequalitySet {
    pub n_particles: usize,
    pub n_modes: usize,
    /// Each row is `[c₀, c₁, …, c_n]`.
    pub inequalities: Vec<Vec<f64>>,
    #[serde(default)]
    pub source: String,
}

impl InequalitySet {
    pub fn validate(&self) -> Result<()> {
        if self.n_particles > self.n_modes {
            return Err(Error::Config(format!(
                "{} particles do not fit in {} modes",
                self.n_particles, self.n_modes
            )));
        }
        for (row, c) in self.inequalities.iter().enumerate() {
            if c.len() != self.n_modes + 1 {
                return Err(Error::Parse {
                    line: row + 1,
                    msg: format!("inequality {} has {} coefficients, expected {}", row, c.len(), self.n_modes + 1),
                });
            }
            if c.iter().any(|x| !x.is_finite()) {
                return Err(Error::Parse { line: row + 1, msg: format!("inequality {row} has a non-finite coefficient") });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inequalities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inequalities.is_empty()
    }

    /// Pauli bounds `λ_j ≥ 0` and `1 - λ_j ≥ 0` for every mode.
    pub fn pauli(n_particles: usize, n_modes: usize) -> Self {
        let mut inequalities = Vec::with_capacity(2 * n_modes);
        for j in 0..n_modes {
            let mut upper = vec![0.0; n_modes + 1];
            upper[0] = 1.0;
            upper[j + 1] = -1.0;
            inequalities.push(upper);
        }
        for j in 0..n_modes {
            let mut lower = vec![0.0; n_modes + 1];
            lower[j + 1] = 1.0;
            inequalities.push(lower);
        }
        InequalitySet { n_particles, n_modes, inequalities, source: "Pauli exclusion bounds 0 <= λ_j <= 1".into() }
    }

    /// Margins `c₀ + Σ c_j λ_j` for a descending spectrum.
    pub fn margins(&self, eigenvalues: &[f64]) -> Result<Vec<f64>> {
        if eigenvalues.len() != self.n_modes {
            return Err(Error::ShapeMismatch(format!(
                "spectrum of length {} against an inequality set for {} modes",
                eigenvalues.len(),
                self.n_modes
            )));
        }
        Ok(self
            .inequalities
            .iter()
            .map(|c| c[0] + c[1..].iter().zip(eigenvalues).map(|(a, l)| a * l).sum::<f64>())
            .collect())
    }
}

/// Parse an inequality set from JSON text.
pub fn parse_inequalities(text: &str) -> Result<InequalitySet> {
    let set: InequalitySet = serde_json::from_str(text)?;
    set.validate()?;
    Ok(set)
}

pub fn load_inequalities(path: impl AsRef<Path>) -> Result<InequalitySet> {
    parse_inequalities(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityMargin {
    pub index: usize,
    pub margin: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// Every eigenvalue lies in `[-tol, 1 + tol]`.
    pub pauli_ok: bool,
    /// `|Re tr - N| <= tol` and `|Im tr| <= tol`.
    pub trace_ok: bool,
    /// Smallest eigenvalue `>= -tol`.
    pub psd_ok: bool,
    pub n_satisfied: usize,
    pub n_inequalities: usize,
    /// Descending spectrum of the hermitized matrix.
    pub eigenvalues: Vec<f64>,
    pub trace: f64,
    /// Norm of the anti-Hermitian part; nonzero flags a hermitized input.
    pub hermiticity_error: f64,
    pub details: Vec<InequalityMargin>,
}

impl ConditionReport {
    /// Coleman's conditions for ensemble representability of a 1-RDM.
    pub fn coleman_ok(&self) -> bool {
        self.pauli_ok && self.trace_ok
    }

    pub fn all_inequalities_ok(&self) -> bool {
        self.n_satisfied == self.n_inequalities
    }
}

fn require_one_body<T: Real>(m: &RdmMatrix<T>) -> Result<()> {
    if m.p() != 1 {
        return Err(Error::ShapeMismatch(format!("expected a 1-RDM, got p = {}", m.p())));
    }
    Ok(())
}

/// Coleman ensemble conditions on the hermitized spectrum of a 1-RDM.
pub fn coleman_check<T: Real>(m: &RdmMatrix<T>, n_particles: usize, tol: f64) -> Result<ConditionReport> {
    require_one_body(m)?;
    let eigenvalues: Vec<f64> = spectrum(&m.hermitized()).into_iter().map(|x| x.as_f64()).collect();
    let tr = m.trace();
    let (re, im) = (tr.re.as_f64(), tr.im.as_f64());
    Ok(ConditionReport {
        pauli_ok: eigenvalues.iter().all(|&l| l >= -tol && l <= 1.0 + tol),
        trace_ok: (re - n_particles as f64).abs() <= tol && im.abs() <= tol,
        psd_ok: eigenvalues.last().is_none_or(|&l| l >= -tol),
        n_satisfied: 0,
        n_inequalities: 0,
        eigenvalues,
        trace: re,
        hermiticity_error: m.hermiticity_error().as_f64(),
        details: Vec::new(),
    })
}

/// Coleman conditions plus every inequality of `set`.
pub fn evaluate_inequalities<T: Real>(m: &RdmMatrix<T>, set: &InequalitySet, tol: f64) -> Result<ConditionReport> {
    require_one_body(m)?;
    if set.n_modes != m.n_modes() {
        return Err(Error::ShapeMismatch(format!(
            "inequality set for {} modes applied to a {}-mode matrix",
            set.n_modes,
            m.n_modes()
        )));
    }
    let mut report = coleman_check(m, set.n_particles, tol)?;
    let margins = set.margins(&report.eigenvalues)?;
    report.details = margins
        .into_iter()
        .enumerate()
        .map(|(index, margin)| InequalityMargin { index, margin, satisfied: margin >= -tol })
        .collect();
    report.n_satisfied = report.details.iter().filter(|d| d.satisfied).count();
    report.n_inequalities = set.len();
    Ok(report)
}

/// Hermiticity, trace `N(N-1)` and positivity of a 2-RDM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoBodyReport {
    pub hermitian_ok: bool,
    pub trace_ok: bool,
    pub psd_ok: bool,
    pub trace: f64,
    pub min_eigenvalue: f64,
}

pub fn two_body_check<T: Real>(m: &RdmMatrix<T>, tol: f64) -> Result<TwoBodyReport> {
    if m.p() != 2 {
        return Err(Error::ShapeMismatch(format!("expected a 2-RDM, got p = {}", m.p())));
    }
    let n = m.n_particles() as f64;
    let tr = m.trace();
    let min_eigenvalue = spectrum(&m.hermitized()).last().map_or(0.0, |x| x.as_f64());
    Ok(TwoBodyReport {
        hermitian_ok: m.hermiticity_error().as_f64() <= tol,
        trace_ok: (tr.re.as_f64() - n * (n - 1.0)).abs() <= tol && tr.im.as_f64().abs() <= tol,
        psd_ok: min_eigenvalue >= -tol,
        trace: tr.re.as_f64(),
        min_eigenvalue,
    })
}
