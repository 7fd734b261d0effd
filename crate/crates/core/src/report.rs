//! Verdicts and the serialized criterion report.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{all_minors_nonzero, condition_number, EigenData, DEFAULT_RESIDUAL_TOL};

/// Version of the JSON layout of [`CriterionReport`].
pub const REPORT_SCHEMA_VERSION: u32 = 1;
/// Eigenbases worse conditioned than this are not trusted for twisting.
pub const MAX_EIGENBASIS_COND: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    SimplePredicted,
    FailsPinching,
    FailsTwisting,
    FailsBunching,
    NotDecided,
}

/// Position of a margin relative to its threshold.
///
/// Margins within a factor of ten below the threshold are too close to call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Band {
    Pass,
    Borderline,
    Fail,
}

impl Band {
    pub fn classify(margin: f64, threshold: f64) -> Band {
        if margin > threshold {
            Band::Pass
        } else if margin >= threshold / 10.0 {
            Band::Borderline
        } else {
            Band::Fail
        }
    }
}

/// Thresholds shared by the shift and smooth checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Minimum relative gap between consecutive eigenvalue moduli.
    pub rel_gap: f64,
    /// Minimum normalized minor of the transition map.
    pub minor_tol: f64,
    /// Initial holonomy truncation.
    pub holonomy_steps: usize,
    /// Holonomy truncation is doubled until the tail is below this.
    pub tail_target: f64,
    /// Largest truncation tried.
    pub holonomy_budget: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rel_gap: 1e-4,
            minor_tol: 1e-6,
            holonomy_steps: 200,
            tail_target: 1e-8,
            holonomy_budget: 3200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinchingReport {
    pub ok: bool,
    pub band: Band,
    /// Moduli of the eigenvalues of the return map, descending.
    pub moduli: Vec<f64>,
    /// Smallest `|λ_i|/|λ_{i+1}| - 1`; `null` for a single modulus.
    pub min_relative_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwistingReport {
    pub ok: bool,
    /// False when pinching fails and no real eigenbasis is available.
    pub applicable: bool,
    pub band: Band,
    pub min_normalized_minor: Option<f64>,
    pub eigenbasis_condition: Option<f64>,
}

impl TwistingReport {
    pub fn not_applicable() -> Self {
        TwistingReport {
            ok: false,
            applicable: false,
            band: Band::Fail,
            min_normalized_minor: None,
            eigenbasis_condition: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BunchingReport {
    pub ok: bool,
    pub chi: f64,
    pub fitted_c: f64,
    pub fitted_lambda: f64,
}

/// Whether the periodic point is hyperbolic at rate `chi` along the fiber.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicityReport {
    pub ok: bool,
    pub chi: f64,
    /// Smallest `|log|λ_i|| / period` over the fiber eigenvalues.
    pub min_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomoclinicReport {
    pub l: u64,
    pub transversality_angle: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: Option<String>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub schema_version: u32,
    pub verdict: Verdict,
    pub pinching: PinchingReport,
    pub twisting: TwistingReport,
    pub bunching: Option<BunchingReport>,
    pub hyperbolicity: Option<HyperbolicityReport>,
    pub holonomy_tails: Vec<f64>,
    pub homoclinic: HomoclinicReport,
    /// Transition map in the eigenbasis of the return map, row-major.
    pub transition_matrix: Vec<Vec<f64>>,
    pub tolerances: Tolerances,
    /// Hypotheses taken on trust rather than checked.
    pub assumptions: Vec<String>,
    /// Why the verdict is not simple-predicted, if it is not.
    pub reasons: Vec<String>,
    pub provenance: Provenance,
}

/// Pinching from the eigen-decomposition of the return map.
pub fn pinching_from_eigen(eigen: &EigenData, rel_gap: f64) -> PinchingReport {
    let min_gap = eigen.min_gap();
    let (band, min_relative_gap) = if min_gap.is_finite() {
        (Band::classify(min_gap, rel_gap), Some(min_gap))
    } else {
        (Band::Pass, None)
    };
    PinchingReport {
        ok: band == Band::Pass,
        band,
        moduli: eigen.moduli(),
        min_relative_gap,
    }
}

/// Twisting of `psi` relative to the eigenbasis of the return map.
///
/// `psi` is written in the eigenbasis as `V⁻¹ψV` and all its square minors
/// of orders `1..d-1` are tested. Complex spectra make the check
/// inapplicable.
pub fn twisting_check(psi: &DMatrix<f64>, eigen: &EigenData, tol: f64) -> Result<TwistingReport> {
    let Some(v) = eigen.real_vectors(DEFAULT_RESIDUAL_TOL) else {
        return Ok(TwistingReport::not_applicable());
    };
    let cond = condition_number(&v);
    if !(cond <= MAX_EIGENBASIS_COND) {
        return Err(Error::IllConditionedEigenbasis {
            cond,
            limit: MAX_EIGENBASIS_COND,
        });
    }
    let c = eigenbasis_form(psi, &v)?;
    let test = all_minors_nonzero(&c, tol)?;
    let band = Band::classify(test.min_margin, tol);
    Ok(TwistingReport {
        ok: band == Band::Pass,
        applicable: true,
        band,
        min_normalized_minor: Some(test.min_margin),
        eigenbasis_condition: Some(cond),
    })
}

/// `V⁻¹ψV`.
pub fn eigenbasis_form(psi: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let lu = v.clone().lu();
    lu.solve(&(psi * v))
        .ok_or_else(|| Error::SingularMatrix("eigenvector matrix is singular".into()))
}

/// Combines component bands into a verdict.
///
/// Failures are reported in the order pinching, twisting, bunching; any
/// borderline component or extra blocking reason gives not-decided.
pub fn decide(
    pinching: &PinchingReport,
    twisting: &TwistingReport,
    bunching: Option<&BunchingReport>,
    blockers: &[String],
) -> (Verdict, Vec<String>) {
    let mut reasons = Vec::new();
    if pinching.band == Band::Fail {
        reasons.push("eigenvalue moduli of the return map are not distinct".into());
        return (Verdict::FailsPinching, reasons);
    }
    if twisting.applicable && twisting.band == Band::Fail {
        reasons.push("transition map has a vanishing minor in the eigenbasis".into());
        return (Verdict::FailsTwisting, reasons);
    }
    if let Some(b) = bunching {
        if !b.ok {
            reasons.push(format!("cocycle is not fiber bunched at chi = {}", b.chi));
            return (Verdict::FailsBunching, reasons);
        }
    }
    if pinching.band == Band::Borderline {
        reasons.push("pinching margin is within a factor 10 of its threshold".into());
    }
    if !twisting.applicable {
        reasons.push("twisting is not applicable".into());
    } else if twisting.band == Band::Borderline {
        reasons.push("twisting margin is within a factor 10 of its threshold".into());
    }
    reasons.extend(blockers.iter().cloned());
    if reasons.is_empty() {
        (Verdict::SimplePredicted, reasons)
    } else {
        (Verdict::NotDecided, reasons)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eigen_by_modulus, rotation2};
    use nalgebra::DVector;

    #[test]
    fn band_edges() {
        assert_eq!(Band::classify(2e-4, 1e-4), Band::Pass);
        assert_eq!(Band::classify(1e-4, 1e-4), Band::Borderline);
        assert_eq!(Band::classify(1e-5, 1e-4), Band::Borderline);
        assert_eq!(Band::classify(9e-6, 1e-4), Band::Fail);
    }

    #[test]
    fn pinching_single_modulus_is_vacuous() {
        let e = eigen_by_modulus(&DMatrix::from_element(1, 1, 3.0), 1e-9).unwrap();
        let p = pinching_from_eigen(&e, 1e-4);
        assert!(p.ok);
        assert_eq!(p.min_relative_gap, None);
    }

    #[test]
    fn twisting_rotated_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5]));
        let e = eigen_by_modulus(&a, 1e-9).unwrap();
        let psi = rotation2(std::f64::consts::FRAC_PI_4) * &a;
        let t = twisting_check(&psi, &e, 1e-6).unwrap();
        assert!(t.ok);
        assert!((t.min_normalized_minor.unwrap() - 1.0 / 17f64.sqrt()).abs() < 1e-12);
        let d = twisting_check(&a, &e, 1e-6).unwrap();
        assert!(!d.ok);
        assert_eq!(d.min_normalized_minor, Some(0.0));
    }

    #[test]
    fn twisting_complex_spectrum_not_applicable() {
        let e = eigen_by_modulus(&rotation2(0.3), 1e-9).unwrap();
        let t = twisting_check(&rotation2(1.0), &e, 1e-6).unwrap();
        assert!(!t.applicable);
    }

    #[test]
    fn decide_precedence() {
        let pin = |band| PinchingReport {
            ok: band == Band::Pass,
            band,
            moduli: vec![],
            min_relative_gap: None,
        };
        let tw = |band| TwistingReport {
            ok: band == Band::Pass,
            applicable: true,
            band,
            min_normalized_minor: None,
            eigenbasis_condition: None,
        };
        let bad_bunch = BunchingReport {
            ok: false,
            chi: 1.0,
            fitted_c: 1.0,
            fitted_lambda: 2.0,
        };
        assert_eq!(
            decide(&pin(Band::Fail), &tw(Band::Fail), Some(&bad_bunch), &[]).0,
            Verdict::FailsPinching
        );
        assert_eq!(
            decide(&pin(Band::Pass), &tw(Band::Fail), Some(&bad_bunch), &[]).0,
            Verdict::FailsTwisting
        );
        assert_eq!(
            decide(&pin(Band::Pass), &tw(Band::Pass), Some(&bad_bunch), &[]).0,
            Verdict::FailsBunching
        );
        assert_eq!(
            decide(&pin(Band::Borderline), &tw(Band::Pass), None, &[]).0,
            Verdict::NotDecided
        );
        assert_eq!(
            decide(&pin(Band::Pass), &tw(Band::Pass), None, &["tail".into()]).0,
            Verdict::NotDecided
        );
        assert_eq!(
            decide(&pin(Band::Pass), &tw(Band::Pass), None, &[]).0,
            Verdict::SimplePredicted
        );
    }
}
