//! The three equations and their self-induced potentials.
//!
//! Every system is written as `i v_t + Δv + W(v) v = 0` with a real potential
//! `W` that depends on `v` only through `|v|`:
//!
//! * NLS: `W = |v|^{2σ}`
//! * SH:  `W = u |v|^{σ-1}` with `u - α²Δu = |v|^{σ+1}`
//! * SN:  `W = ψ` with `-α²Δψ = |v|²` (zero-mean gauge)

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{self, ComplexField};

/// Below this `|v|²` fractional powers evaluate to zero.
const POWER_CUTOFF: f64 = 1e-300;

/// Tolerance on the imaginary residue of real-valued potentials.
const REALNESS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EquationKind {
    #[serde(rename = "NLS")]
    Nls,
    #[serde(rename = "SH")]
    Sh,
    #[serde(rename = "SN")]
    Sn,
}

impl fmt::Display for EquationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EquationKind::Nls => "NLS",
            EquationKind::Sh => "SH",
            EquationKind::Sn => "SN",
        })
    }
}

impl FromStr for EquationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "NLS" => Ok(EquationKind::Nls),
            "SH" => Ok(EquationKind::Sh),
            "SN" => Ok(EquationKind::Sn),
            _ => Err(Error::InvalidEquation(format!("unknown kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquationSpec {
    pub kind: EquationKind,
    pub sigma: f64,
    #[serde(default)]
    pub alpha: f64,
}

impl EquationSpec {
    pub fn nls(sigma: f64) -> Self {
        EquationSpec {
            kind: EquationKind::Nls,
            sigma,
            alpha: 0.0,
        }
    }

    pub fn sh(sigma: f64, alpha: f64) -> Self {
        EquationSpec {
            kind: EquationKind::Sh,
            sigma,
            alpha,
        }
    }

    pub fn sn(alpha: f64) -> Self {
        EquationSpec {
            kind: EquationKind::Sn,
            sigma: 1.0,
            alpha,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let EquationSpec { kind, sigma, alpha } = *self;
        if !sigma.is_finite() || !alpha.is_finite() {
            return Err(Error::InvalidEquation(format!(
                "non-finite parameters sigma={sigma} alpha={alpha}"
            )));
        }
        match kind {
            EquationKind::Nls if sigma <= 0.0 => Err(Error::InvalidEquation(format!(
                "NLS needs sigma > 0, got {sigma}"
            ))),
            EquationKind::Sh | EquationKind::Sn if sigma < 1.0 => Err(Error::InvalidEquation(
                format!("{kind} needs sigma >= 1, got {sigma}"),
            )),
            EquationKind::Sh | EquationKind::Sn if alpha <= 0.0 => Err(Error::InvalidEquation(
                format!("{kind} needs alpha > 0, got {alpha}"),
            )),
            _ => Ok(()),
        }
    }

    /// Exponent `σ` entering the Hamiltonian's `1/(σ+1)` factor; SN has the
    /// cubic structure regardless of the configured `σ`.
    pub fn hamiltonian_sigma(&self) -> f64 {
        match self.kind {
            EquationKind::Sn => 1.0,
            _ => self.sigma,
        }
    }
}

/// `(|v|²)^{p/2} = |v|^p`, with tiny amplitudes mapped to zero.
fn abs_pow(abs_sq: f64, p: f64) -> f64 {
    if p == 0.0 {
        1.0
    } else if abs_sq < POWER_CUTOFF {
        0.0
    } else if p == 2.0 {
        abs_sq
    } else {
        (0.5 * p * abs_sq.ln()).exp()
    }
}

/// Pointwise values of the self-induced potential `W(v)`.
pub(crate) fn potential_values(spec: &EquationSpec, v: &ComplexField) -> Result<Vec<f64>> {
    spec.validate()?;
    v.check_finite()?;
    let sigma = spec.sigma;
    let abs_sq: Vec<f64> = v.values().iter().map(|z| z.norm_sqr()).collect();
    match spec.kind {
        EquationKind::Nls => Ok(abs_sq.iter().map(|&a| abs_pow(a, 2.0 * sigma)).collect()),
        EquationKind::Sh => {
            let source: Vec<f64> = abs_sq.iter().map(|&a| abs_pow(a, sigma + 1.0)).collect();
            let source = ComplexField::from_real(v.grid().clone(), &source)?;
            let (u, _) =
                spectral::helmholtz_inverse(&source, spec.alpha)?.real_part_checked(REALNESS_TOL);
            let w: Vec<f64> = u
                .iter()
                .zip(&abs_sq)
                .map(|(&u, &a)| u * abs_pow(a, sigma - 1.0))
                .collect();
            let (lo, hi) = w
                .iter()
                .fold((0.0f64, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
            if lo < -REALNESS_TOL * hi.max(1.0) {
                log::warn!("SH potential has negative excursion {lo:e} (max {hi:e})");
            }
            Ok(w)
        }
        EquationKind::Sn => {
            let source = ComplexField::from_real(v.grid().clone(), &abs_sq)?;
            let (psi, _) = spectral::poisson_inverse_zero_mean(&source, spec.alpha)?
                .real_part_checked(REALNESS_TOL);
            Ok(psi)
        }
    }
}

/// The self-induced potential `W(v)` as a real-valued field.
pub fn potential(spec: &EquationSpec, v: &ComplexField) -> Result<ComplexField> {
    let w = potential_values(spec, v)?;
    ComplexField::from_real(v.grid().clone(), &w)
}

/// `f(v) = W(v) v`.
pub fn nonlinearity(spec: &EquationSpec, v: &ComplexField) -> Result<ComplexField> {
    let w = potential_values(spec, v)?;
    let values: Vec<Complex64> = v.values().iter().zip(&w).map(|(z, &w)| z * w).collect();
    ComplexField::new(v.grid().clone(), values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    GlobalGuaranteed,
    LocalOnly,
    BlowUpPossible,
    OutsideTheory,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::GlobalGuaranteed => "global-guaranteed",
            Regime::LocalOnly => "local-only",
            Regime::BlowUpPossible => "blow-up-possible",
            Regime::OutsideTheory => "outside-theory",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub regime: Regime,
    /// `σ = 2/N`, the NLS-critical exponent.
    pub nls_critical: bool,
    pub detail: String,
}

/// `4/(N-2)`-type thresholds with the `N <= 2 => ∞` convention.
fn energy_threshold(numerator: f64, dim: usize) -> f64 {
    if dim <= 2 {
        f64::INFINITY
    } else {
        numerator / (dim as f64 - 2.0)
    }
}

/// Classifies a run against the known existence results. Advisory only.
pub fn validate_regime(spec: &EquationSpec, dim: usize) -> RegimeReport {
    let sigma = spec.sigma;
    let n = dim as f64;
    let nls_critical = (sigma - 2.0 / n).abs() <= 1e-12;
    let (regime, detail) = match spec.kind {
        EquationKind::Sh | EquationKind::Sn => {
            let global = 4.0 / n;
            let local = energy_threshold(4.0, dim);
            if sigma < 1.0 {
                (Regime::OutsideTheory, "sigma < 1".to_string())
            } else if sigma < global {
                (
                    Regime::GlobalGuaranteed,
                    format!("1 <= sigma={sigma} < 4/N={global}"),
                )
            } else if sigma < local {
                (
                    Regime::LocalOnly,
                    format!("4/N={global} <= sigma={sigma} < 4/(N-2)={local}"),
                )
            } else {
                (
                    Regime::OutsideTheory,
                    format!("sigma={sigma} >= 4/(N-2)={local}"),
                )
            }
        }
        EquationKind::Nls => {
            let global = 2.0 / n;
            let local = energy_threshold(2.0, dim);
            if sigma <= 0.0 {
                (Regime::OutsideTheory, "sigma <= 0".to_string())
            } else if sigma < global && !nls_critical {
                (
                    Regime::GlobalGuaranteed,
                    format!("0 < sigma={sigma} < 2/N={global}"),
                )
            } else if sigma < local {
                (
                    Regime::BlowUpPossible,
                    format!("sigma={sigma} >= 2/N={global}"),
                )
            } else {
                (
                    Regime::OutsideTheory,
                    format!("sigma={sigma} >= 2/(N-2)={local}"),
                )
            }
        }
    };
    RegimeReport {
        regime,
        nls_critical,
        detail,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Grid;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn gaussian(grid: Arc<Grid>, amp: f64) -> ComplexField {
        ComplexField::from_fn(grid, move |x| {
            let r2: f64 = x.iter().map(|c| c * c).sum();
            Complex64::from_polar(amp * (-r2 / 2.0).exp(), 0.4 * x[0])
        })
    }

    fn max_diff(a: &ComplexField, b: &ComplexField) -> f64 {
        a.values()
            .iter()
            .zip(b.values())
            .fold(0.0, |m, (x, y)| m.max((x - y).norm()))
    }

    #[test]
    fn spec_validation() {
        assert!(EquationSpec::nls(1.0).validate().is_ok());
        assert!(EquationSpec::nls(0.5).validate().is_ok());
        assert!(EquationSpec::nls(0.0).validate().is_err());
        assert!(EquationSpec::sh(1.0, 0.0).validate().is_err());
        assert!(EquationSpec::sh(0.5, 0.1).validate().is_err());
        assert!(EquationSpec::sn(-1.0).validate().is_err());
        assert!(EquationSpec::sh(2.0, 0.3).validate().is_ok());
    }

    #[test]
    fn zero_field_has_zero_potential() {
        let g = Grid::new(&[16, 16], &[8.0, 8.0]).unwrap();
        let v = ComplexField::zeros(g);
        for spec in [
            EquationSpec::nls(1.0),
            EquationSpec::sh(1.5, 0.2),
            EquationSpec::sn(0.5),
        ] {
            assert!(potential(&spec, &v).unwrap().sup_abs() == 0.0);
            assert!(nonlinearity(&spec, &v).unwrap().sup_abs() == 0.0);
        }
    }

    #[test]
    fn constants_are_helmholtz_fixed_points() {
        let g = Grid::new(&[16, 8], &[5.0, 3.0]).unwrap();
        let a = Complex64::new(0.6, -0.9);
        let v = ComplexField::from_fn(g, |_| a);
        for sigma in [1.0, 1.5, 2.0] {
            let nls = nonlinearity(&EquationSpec::nls(sigma), &v).unwrap();
            let want = a * a.norm().powf(2.0 * sigma);
            for alpha in [0.05, 0.5, 3.0] {
                let sh = nonlinearity(&EquationSpec::sh(sigma, alpha), &v).unwrap();
                assert!(max_diff(&sh, &nls) < 1e-13);
                assert!((sh.values()[5] - want).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn sh_at_zero_alpha_path_matches_nls() {
        // The spec validator forbids α = 0 for SH, so drive the potential
        // directly through the Helmholtz identity path.
        let g = Grid::new(&[64], &[16.0]).unwrap();
        let v = gaussian(g.clone(), 1.3);
        for sigma in [1.0, 1.7] {
            let spec = EquationSpec {
                kind: EquationKind::Sh,
                sigma,
                alpha: 1e-300,
            };
            let sh = potential(&spec, &v).unwrap();
            let nls = potential(&EquationSpec::nls(sigma), &v).unwrap();
            assert!(max_diff(&sh, &nls) < 1e-12);
        }
    }

    #[test]
    fn pointwise_nonlinearity_magnitude() {
        let g = Grid::new(&[32, 32], &[10.0, 10.0]).unwrap();
        let v = gaussian(g, 1.1);
        for spec in [
            EquationSpec::nls(1.0),
            EquationSpec::sh(1.0, 0.3),
            EquationSpec::sn(0.7),
        ] {
            let w = potential(&spec, &v).unwrap();
            let f = nonlinearity(&spec, &v).unwrap();
            for ((fz, wz), vz) in f.values().iter().zip(w.values()).zip(v.values()) {
                assert!((fz.norm() - wz.re.abs() * vz.norm()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn potentials_are_real_and_sh_nonnegative() {
        let g = Grid::new(&[32, 32], &[12.0, 12.0]).unwrap();
        let v = gaussian(g, 1.4);
        for spec in [
            EquationSpec::nls(1.0),
            EquationSpec::sh(1.0, 0.3),
            EquationSpec::sh(2.0, 1.0),
        ] {
            let w = potential(&spec, &v).unwrap();
            let max_re = w.values().iter().fold(0.0f64, |m, z| m.max(z.re.abs()));
            let max_im = w.values().iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
            assert!(max_im <= 1e-10 * max_re);
            assert!(w.values().iter().all(|z| z.re >= -1e-10 * max_re));
        }
    }

    #[test]
    fn sh_nonlinearity_converges_at_second_order() {
        // Width-2 Gaussian: the α² regime needs α|k| << 1 over its spectrum.
        let g = Grid::new(&[256], &[48.0]).unwrap();
        let v = ComplexField::from_fn(g, |x| Complex64::new((-x[0] * x[0] / 8.0).exp(), 0.0));
        let f0 = nonlinearity(&EquationSpec::nls(1.0), &v).unwrap();
        let diff = |a: f64| {
            nonlinearity(&EquationSpec::sh(1.0, a), &v)
                .unwrap()
                .l2_distance(&f0)
        };
        for alpha in [0.2, 0.1, 0.05] {
            let ratio = diff(alpha) / diff(alpha / 2.0);
            assert!((ratio - 4.0).abs() <= 0.4, "alpha {alpha}: ratio {ratio}");
        }
    }

    #[test]
    fn regime_examples() {
        let r = validate_regime(&EquationSpec::sh(1.0, 0.1), 2);
        assert_eq!(r.regime, Regime::GlobalGuaranteed);
        assert!(r.nls_critical);
        let r = validate_regime(&EquationSpec::nls(1.0), 2);
        assert_eq!(r.regime, Regime::BlowUpPossible);
        assert!(r.nls_critical);
        let r = validate_regime(&EquationSpec::sh(3.0, 0.1), 3);
        assert_eq!(r.regime, Regime::LocalOnly);
        assert!(!r.nls_critical);
    }

    #[test]
    fn regime_edges() {
        assert_eq!(
            validate_regime(&EquationSpec::nls(1.0), 3).regime,
            Regime::BlowUpPossible
        );
        assert_eq!(
            validate_regime(&EquationSpec::nls(0.5), 3).regime,
            Regime::GlobalGuaranteed
        );
        assert_eq!(
            validate_regime(&EquationSpec::nls(2.0), 3).regime,
            Regime::OutsideTheory
        );
        assert_eq!(
            validate_regime(&EquationSpec::nls(1.0), 1).regime,
            Regime::GlobalGuaranteed
        );
        assert_eq!(
            validate_regime(&EquationSpec::nls(2.0), 1).regime,
            Regime::BlowUpPossible
        );
        assert_eq!(
            validate_regime(&EquationSpec::sh(4.0, 0.1), 3).regime,
            Regime::OutsideTheory
        );
        assert_eq!(
            validate_regime(&EquationSpec::sh(50.0, 0.1), 2).regime,
            Regime::LocalOnly
        );
        assert_eq!(
            validate_regime(&EquationSpec::sh(3.9, 0.1), 1).regime,
            Regime::GlobalGuaranteed
        );
        assert_eq!(
            validate_regime(&EquationSpec::sn(0.1), 3).regime,
            Regime::GlobalGuaranteed
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn phase_equivariance(theta in -6.3f64..6.3, amp in 0.1f64..2.0, kind in 0usize..3) {
            let g = Grid::new(&[32], &[10.0]).unwrap();
            let v = gaussian(g, amp);
            let spec = [EquationSpec::nls(1.5), EquationSpec::sh(1.3, 0.4), EquationSpec::sn(0.8)][kind];
            let rot = Complex64::from_polar(1.0, theta);
            let mut vr = v.clone();
            vr.scale(rot);
            let mut lhs = nonlinearity(&spec, &v).unwrap();
            lhs.scale(rot);
            let rhs = nonlinearity(&spec, &vr).unwrap();
            let scale = lhs.sup_abs().max(1.0);
            prop_assert!(max_diff(&lhs, &rhs) <= 1e-12 * scale);
        }
    }
}
