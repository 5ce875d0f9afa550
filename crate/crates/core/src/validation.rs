//! Built-in self-checks: conservation, multiplier bounds and exact solutions.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::diagnostics::BlowupPolicy;
use crate::error::{Error, Result};
use crate::harness::max_drift;
use crate::spectral::{self, ComplexField, Grid};
use crate::stepper::{self, RunSettings, StepControl};
use crate::system::EquationSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Conservation,
    Multipliers,
    Exact,
    All,
}

impl Suite {
    pub const NAMES: [&'static str; 4] = ["conservation", "multipliers", "exact", "all"];
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Conservation => "conservation",
            Suite::Multipliers => "multipliers",
            Suite::Exact => "exact",
            Suite::All => "all",
        })
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conservation" => Ok(Suite::Conservation),
            "multipliers" => Ok(Suite::Multipliers),
            "exact" => Ok(Suite::Exact),
            "all" => Ok(Suite::All),
            other => Err(Error::InvalidParameter(format!(
                "unknown suite {other:?}, expected one of {:?}",
                Suite::NAMES
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub suite: Suite,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}/{}: {}", self.suite, self.name, self.detail)
    }
}

fn check(suite: Suite, name: &'static str, passed: bool, detail: String) -> Check {
    Check {
        suite,
        name,
        passed,
        detail,
    }
}

/// Runs the selected suite(s). Numerical failures are reported as failed
/// checks; only setup errors surface as `Err`.
pub fn run_suite(suite: Suite) -> Result<Vec<Check>> {
    match suite {
        Suite::Conservation => conservation(),
        Suite::Multipliers => multipliers(),
        Suite::Exact => exact(),
        Suite::All => {
            let mut all = conservation()?;
            all.extend(multipliers()?);
            all.extend(exact()?);
            Ok(all)
        }
    }
}

fn soliton(grid: &std::sync::Arc<Grid>, amplitude: f64) -> ComplexField {
    ComplexField::from_fn(grid.clone(), |x| {
        Complex64::new(amplitude * 2f64.sqrt() / x[0].cosh(), 0.0)
    })
}

fn fixed_run(
    spec: &EquationSpec,
    v0: &ComplexField,
    dt: f64,
    t_end: f64,
) -> Result<stepper::RunResult> {
    let settings = RunSettings {
        control: StepControl::fixed(dt, t_end),
        policy: BlowupPolicy::default(),
        diagnostics_every: 10,
    };
    stepper::run(spec, v0, &settings, &mut [])
}

fn conservation() -> Result<Vec<Check>> {
    let s = Suite::Conservation;
    let mut out = Vec::new();

    let g1 = Grid::new(&[1024], &[80.0])?;
    let r = fixed_run(&EquationSpec::nls(1.0), &soliton(&g1, 1.0), 1e-3, 2.0)?;
    let d = max_drift(r.records.iter().map(|r| r.mass));
    out.push(check(
        s,
        "nls-soliton-mass",
        d <= 1e-11,
        format!("relative mass drift {d:.3e} <= 1e-11"),
    ));

    let g2 = Grid::new(&[64, 64], &[16.0, 16.0])?;
    let bump = ComplexField::from_fn(g2, |x| {
        Complex64::new(1.5 * (-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp(), 0.0)
    });
    for (name, spec) in [
        ("sh-gaussian-mass", EquationSpec::sh(1.0, 0.5)),
        ("sn-gaussian-mass", EquationSpec::sn(1.0)),
    ] {
        let r = fixed_run(&spec, &bump, 2e-3, 1.0)?;
        let d = max_drift(r.records.iter().map(|r| r.mass));
        out.push(check(
            s,
            name,
            d <= 1e-11,
            format!("relative mass drift {d:.3e} <= 1e-11"),
        ));
    }

    // A breathing soliton exercises H; its drift must scale as dt².
    let v0 = soliton(&g1, 1.2);
    let spec = EquationSpec::nls(1.0);
    let coarse = max_drift(
        fixed_run(&spec, &v0, 1e-2, 2.0)?
            .records
            .iter()
            .map(|r| r.hamiltonian),
    );
    let fine = max_drift(
        fixed_run(&spec, &v0, 5e-3, 2.0)?
            .records
            .iter()
            .map(|r| r.hamiltonian),
    );
    let ratio = fine / coarse;
    out.push(check(
        s,
        "hamiltonian-second-order",
        (0.15..=0.35).contains(&ratio),
        format!("drift ratio {ratio:.4} in [0.15, 0.35] (drifts {coarse:.3e}, {fine:.3e})"),
    ));
    Ok(out)
}

fn multipliers() -> Result<Vec<Check>> {
    let s = Suite::Multipliers;
    let mut out = Vec::new();
    let grids = [
        Grid::new(&[64], &[10.0])?,
        Grid::new(&[32, 32], &[2.0 * PI, 2.0 * PI])?,
        Grid::new(&[16, 16, 16], &[4.0, 4.0, 4.0])?,
    ];
    let mut worst = f64::NEG_INFINITY;
    let mut ok = true;
    for alpha in [0.05, 0.1, 0.5, 1.0] {
        let bound = spectral::elliptic_gain_bound(alpha);
        for g in &grids {
            for m in spectral::elliptic_gain_table(g, alpha) {
                ok &= m <= bound;
                worst = worst.max(m / bound);
            }
        }
    }
    out.push(check(
        s,
        "elliptic-gain-bound",
        ok,
        format!("max gain/bound {worst:.6} <= 1"),
    ));

    let c = ComplexField::from_fn(grids[1].clone(), |_| Complex64::new(0.7, -0.2));
    let b = spectral::helmholtz_inverse(&c, 0.3)?;
    let d = b
        .values()
        .iter()
        .map(|z| (z - Complex64::new(0.7, -0.2)).norm())
        .fold(0.0, f64::max);
    out.push(check(
        s,
        "helmholtz-constant-fixed-point",
        d <= 1e-14,
        format!("max deviation {d:.3e}"),
    ));

    let f = ComplexField::from_fn(grids[1].clone(), |x| {
        Complex64::new(1.0 + x[0].sin() * x[1].cos(), 0.0)
    });
    let p = spectral::poisson_inverse_zero_mean(&f, 1.0)?;
    let mean = p.values().iter().sum::<Complex64>().norm() / p.values().len() as f64;
    out.push(check(
        s,
        "poisson-zero-mean",
        mean <= 1e-14,
        format!("|mean| {mean:.3e}"),
    ));
    Ok(out)
}

fn exact() -> Result<Vec<Check>> {
    let s = Suite::Exact;
    let mut out = Vec::new();

    let g = Grid::new(&[16, 16], &[2.0 * PI, 2.0 * PI])?;
    let (amp, k, dt) = (0.9f64, [2.0, -1.0], 0.05);
    let v = ComplexField::from_fn(g, |x| Complex64::from_polar(amp, k[0] * x[0] + k[1] * x[1]));
    for (name, spec) in [
        ("plane-wave-nls", EquationSpec::nls(1.0)),
        ("plane-wave-sh", EquationSpec::sh(1.0, 0.3)),
    ] {
        let stepped = stepper::strang_step(&spec, &v, dt)?;
        let omega = k[0] * k[0] + k[1] * k[1] - amp.powf(2.0 * spec.sigma);
        let rot = Complex64::from_polar(1.0, -omega * dt);
        let err = stepped
            .values()
            .iter()
            .zip(v.values())
            .map(|(a, b)| (a - b * rot).norm())
            .fold(0.0, f64::max);
        out.push(check(
            s,
            name,
            err <= 1e-12,
            format!("max phase mismatch {err:.3e} <= 1e-12"),
        ));
    }

    let g1 = Grid::new(&[1024], &[80.0])?;
    let v0 = soliton(&g1, 1.0);
    let r = fixed_run(&EquationSpec::nls(1.0), &v0, 5e-4, 1.0)?;
    let mut exact = v0.clone();
    exact.scale(Complex64::from_polar(1.0, 1.0));
    let err = r.field.l2_distance(&exact);
    out.push(check(
        s,
        "soliton-t1",
        err <= 1e-6,
        format!("L2 error {err:.3e} <= 1e-6 at dt=5e-4"),
    ));

    let g = Grid::new(&[2048], &[160.0])?;
    let v0 = ComplexField::from_fn(g, |x| Complex64::new((-x[0] * x[0] / 4.0).exp(), 0.0));
    let mut worst: f64 = 0.0;
    for t in [1.0f64, 2.0, 4.0] {
        let sup = spectral::free_propagator(&v0, t)?.sup_abs();
        worst = worst.max((sup - (1.0 + t * t).powf(-0.25)).abs());
    }
    out.push(check(
        s,
        "free-gaussian-decay",
        worst <= 1e-6,
        format!("max sup-norm error {worst:.3e} <= 1e-6"),
    ));
    Ok(out)
}
