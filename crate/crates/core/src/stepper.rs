//! Strang split-step integrator.
//!
//! One step is `U(dt/2) ∘ N(dt) ∘ U(dt/2)` where `U` is the free propagator
//! and `N(dt): v ↦ v·exp(i W(v) dt)` is the exact flow of `i v_t + W(v) v = 0`.
//! Since `W` is real, `|v|` is constant along that flow, and `W` depends on
//! `v` only through `|v|`, so evaluating `W` once at substep entry is exact.
//! Both substeps are unimodular, so discrete mass is conserved to rounding.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, BlowupPolicy, BlowupReason, BlowupStatus, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::par;
use crate::spectral::{self, ComplexField};
use crate::system::{self, EquationSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepControl {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Numerator `c` of the rule `dt = c / (1 + max W)`.
    pub safety: f64,
    pub t_end: f64,
    pub max_steps: usize,
}

impl StepControl {
    /// Constant step `dt` up to `t_end`.
    pub fn fixed(dt: f64, t_end: f64) -> Self {
        let steps = if dt > 0.0 {
            (t_end / dt).ceil() as usize + 1
        } else {
            1
        };
        StepControl {
            dt_init: dt,
            dt_min: dt,
            dt_max: dt,
            safety: 1.0,
            t_end,
            max_steps: steps.max(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let StepControl {
            dt_init,
            dt_min,
            dt_max,
            safety,
            t_end,
            max_steps,
        } = *self;
        if !(dt_min > 0.0 && dt_min <= dt_init && dt_init <= dt_max && dt_max.is_finite()) {
            return Err(Error::Config(format!(
                "step sizes must satisfy 0 < dt_min <= dt_init <= dt_max, got {dt_min}, {dt_init}, {dt_max}"
            )));
        }
        if !(safety > 0.0 && safety <= 1.0) {
            return Err(Error::Config(format!(
                "safety must be in (0, 1], got {safety}"
            )));
        }
        if !(t_end >= 0.0 && t_end.is_finite()) {
            return Err(Error::Config(format!("t_end must be >= 0, got {t_end}")));
        }
        if max_steps == 0 {
            return Err(Error::Config("max_steps must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtChoice {
    pub dt: f64,
    /// The rule asked for less than `dt_min`.
    pub floor_hit: bool,
}

/// `clamp(c / (1 + max|W|), dt_min, dt_max)`.
pub fn dt_for_potential(max_w: f64, control: &StepControl) -> DtChoice {
    let raw = control.safety / (1.0 + max_w);
    if raw < control.dt_min {
        DtChoice {
            dt: control.dt_min,
            floor_hit: true,
        }
    } else {
        DtChoice {
            dt: raw.min(control.dt_max),
            floor_hit: false,
        }
    }
}

pub fn adapt_dt(spec: &EquationSpec, v: &ComplexField, control: &StepControl) -> Result<DtChoice> {
    let w = system::potential_values(spec, v)?;
    let max_w = w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(dt_for_potential(max_w, control))
}

/// `v ↦ v·exp(i W(v) dt)` with `W` evaluated at entry.
pub fn nonlinear_substep(spec: &EquationSpec, v: &ComplexField, dt: f64) -> Result<ComplexField> {
    let w = system::potential_values(spec, v)?;
    let mut out = v.clone();
    par::zip_mut(out.values_mut(), &w, |z, &w| {
        *z *= Complex64::from_polar(1.0, w * dt)
    });
    Ok(out)
}

/// Reusable integrator state: caches the half-step propagator table.
#[derive(Debug)]
pub struct Stepper {
    spec: EquationSpec,
    half_table: Vec<Complex64>,
    table_dt: f64,
    last_max_w: f64,
}

impl Stepper {
    pub fn new(spec: EquationSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Stepper {
            spec,
            half_table: Vec::new(),
            table_dt: f64::NAN,
            last_max_w: 0.0,
        })
    }

    pub fn spec(&self) -> &EquationSpec {
        &self.spec
    }

    /// `max|W|` seen by the most recent nonlinear substep.
    pub fn last_max_potential(&self) -> f64 {
        self.last_max_w
    }

    fn half_linear(&mut self, v: &mut ComplexField, dt: f64) {
        let grid = v.grid().clone();
        if self.table_dt != dt || self.half_table.len() != grid.len() {
            self.half_table = spectral::free_propagator_table(&grid, 0.5 * dt);
            self.table_dt = dt;
        }
        let data = v.values_mut();
        spectral::forward_in_place(&grid, data);
        par::zip_mut(data, &self.half_table, |z, m| *z *= *m);
        spectral::inverse_in_place(&grid, data);
    }

    /// Advances `v` in place by `dt`, which may be negative.
    pub(crate) fn step_signed(&mut self, v: &mut ComplexField, dt: f64) -> Result<()> {
        self.half_linear(v, dt);
        let w = system::potential_values(&self.spec, v)?;
        self.last_max_w = w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        par::zip_mut(v.values_mut(), &w, |z, &w| {
            *z *= Complex64::from_polar(1.0, w * dt)
        });
        self.half_linear(v, dt);
        v.check_finite()
    }

    /// One Strang step of size `dt > 0`, in place.
    pub fn step(&mut self, v: &mut ComplexField, dt: f64) -> Result<()> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "time step must be > 0, got {dt}"
            )));
        }
        self.step_signed(v, dt)
    }
}

pub fn strang_step(spec: &EquationSpec, v: &ComplexField, dt: f64) -> Result<ComplexField> {
    v.check_finite()?;
    let mut out = v.clone();
    Stepper::new(*spec)?.step(&mut out, dt)?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Completed,
    BlowupDetected,
    DtFloor,
    StepBudget,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Termination::Completed => "completed",
            Termination::BlowupDetected => "blowup-detected",
            Termination::DtFloor => "dt-floor",
            Termination::StepBudget => "step-budget",
        })
    }
}

/// What tripped the blow-up monitor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupEvent {
    pub t: f64,
    /// `None` when the state became non-finite.
    pub reason: Option<BlowupReason>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub control: StepControl,
    pub policy: BlowupPolicy,
    /// Record diagnostics every this many steps (and at the final step).
    pub diagnostics_every: usize,
}

impl RunSettings {
    pub fn validate(&self) -> Result<()> {
        self.control.validate()?;
        self.policy.validate()?;
        if self.diagnostics_every == 0 {
            return Err(Error::Config("diagnostics cadence must be >= 1".into()));
        }
        Ok(())
    }
}

/// Callback invoked at every diagnostics record with a read-only snapshot.
pub trait Observer {
    fn observe(
        &mut self,
        index: usize,
        record: &DiagnosticsRecord,
        field: &ComplexField,
    ) -> Result<()>;
}

impl<F> Observer for F
where
    F: FnMut(usize, &DiagnosticsRecord, &ComplexField) -> Result<()>,
{
    fn observe(
        &mut self,
        index: usize,
        record: &DiagnosticsRecord,
        field: &ComplexField,
    ) -> Result<()> {
        self(index, record, field)
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub field: ComplexField,
    pub reason: Termination,
    pub t_final: f64,
    pub steps: usize,
    pub records: Vec<DiagnosticsRecord>,
    pub blowup: Option<BlowupEvent>,
    /// Steps taken at `dt_min` because the adaptive rule asked for less.
    pub floor_hits: usize,
}

fn notify(
    observers: &mut [&mut dyn Observer],
    records: &[DiagnosticsRecord],
    field: &ComplexField,
) -> Result<()> {
    let index = records.len() - 1;
    let record = &records[index];
    for obs in observers.iter_mut() {
        obs.observe(index, record, field)?;
    }
    Ok(())
}

/// Integrates `v0` until `t_end`, detected blow-up, the `dt` floor (with the
/// monitor already tripping) or the step budget.
pub fn run(
    spec: &EquationSpec,
    v0: &ComplexField,
    settings: &RunSettings,
    observers: &mut [&mut dyn Observer],
) -> Result<RunResult> {
    settings.validate()?;
    v0.check_finite()?;
    let control = &settings.control;
    let mut stepper = Stepper::new(*spec)?;
    let mut v = v0.clone();
    let mut records = vec![diagnostics::measure(spec, &v, 0.0, control.dt_init)?];
    notify(observers, &records, &v)?;

    let t_end = control.t_end;
    let done_tol = 1e-12 * t_end.max(1.0);
    let mut t = 0.0;
    let mut steps = 0usize;
    let mut dt = control.dt_init;
    let mut floor_hits = 0usize;
    let mut floor_hit = false;
    let mut blowup = None;

    let reason = loop {
        if t_end - t <= done_tol {
            break Termination::Completed;
        }
        if steps >= control.max_steps {
            break Termination::StepBudget;
        }
        let h = dt.min(t_end - t);
        let before = v.clone();
        match stepper.step(&mut v, h) {
            Ok(()) => {}
            Err(Error::NonFinite { .. }) => {
                v = before;
                blowup = Some(BlowupEvent { t, reason: None });
                break Termination::BlowupDetected;
            }
            Err(e) => return Err(e),
        }
        t += h;
        steps += 1;
        if floor_hit {
            floor_hits += 1;
        }

        let last = t_end - t <= done_tol;
        if steps.is_multiple_of(settings.diagnostics_every) || last {
            records.push(diagnostics::measure(spec, &v, t, h)?);
            notify(observers, &records, &v)?;
            if let BlowupStatus::Triggered(why) =
                diagnostics::blowup_check(&records, &settings.policy)
            {
                blowup = Some(BlowupEvent {
                    t,
                    reason: Some(why),
                });
                break Termination::BlowupDetected;
            }
        }

        let choice = dt_for_potential(stepper.last_max_potential(), control);
        dt = choice.dt;
        floor_hit = choice.floor_hit;
        if floor_hit && diagnostics::trailing_trips(&records, &settings.policy) > 0 {
            break Termination::DtFloor;
        }
    };

    // The final state is always present in the series.
    if records.last().map(|r| r.t) != Some(t) {
        records.push(diagnostics::measure(spec, &v, t, dt)?);
        notify(observers, &records, &v)?;
    }

    Ok(RunResult {
        field: v,
        reason,
        t_final: t,
        steps,
        records,
        blowup,
        floor_hits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Grid;
    use proptest::prelude::*;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn max_diff(a: &ComplexField, b: &ComplexField) -> f64 {
        a.values()
            .iter()
            .zip(b.values())
            .fold(0.0, |m, (x, y)| m.max((x - y).norm()))
    }

    fn smooth(grid: Arc<Grid>, seed: f64) -> ComplexField {
        ComplexField::from_fn(grid, move |x| {
            let r2: f64 = x.iter().map(|c| c * c).sum();
            Complex64::from_polar(
                (1.0 + 0.3 * seed.sin()) * (-r2 / 2.0).exp(),
                seed * x[0] + 0.2 * r2,
            )
        })
    }

    fn soliton(grid: Arc<Grid>) -> ComplexField {
        ComplexField::from_fn(grid, |x| Complex64::new(2f64.sqrt() / x[0].cosh(), 0.0))
    }

    #[test]
    fn zero_field_stays_zero() {
        let g = Grid::new(&[32], &[10.0]).unwrap();
        let z = ComplexField::zeros(g);
        let out = strang_step(&EquationSpec::sh(1.0, 0.2), &z, 0.1).unwrap();
        assert_eq!(out.sup_abs(), 0.0);
    }

    #[test]
    fn step_rejects_bad_dt() {
        let g = Grid::new(&[32], &[10.0]).unwrap();
        let z = ComplexField::zeros(g);
        assert!(strang_step(&EquationSpec::nls(1.0), &z, 0.0).is_err());
        assert!(strang_step(&EquationSpec::nls(1.0), &z, f64::NAN).is_err());
    }

    #[test]
    fn plane_wave_step_is_exact() {
        let g = Grid::new(&[16, 16], &[2.0 * PI, 2.0 * PI]).unwrap();
        let (amp, k, dt) = (0.9f64, [2.0, -1.0], 0.05);
        let v = ComplexField::from_fn(g.clone(), |x| {
            Complex64::from_polar(amp, k[0] * x[0] + k[1] * x[1])
        });
        for (spec, sigma) in [
            (EquationSpec::nls(1.0), 1.0),
            (EquationSpec::nls(1.5), 1.5),
            (EquationSpec::sh(1.0, 0.3), 1.0),
            (EquationSpec::sh(2.0, 0.7), 2.0),
        ] {
            let omega = (k[0] * k[0] + k[1] * k[1]) - amp.powf(2.0 * sigma);
            let want = ComplexField::from_fn(g.clone(), |x| {
                Complex64::from_polar(amp, k[0] * x[0] + k[1] * x[1] - omega * dt)
            });
            let got = strang_step(&spec, &v, dt).unwrap();
            assert!(max_diff(&got, &want) < 1e-12, "{spec:?}");
        }
    }

    #[test]
    fn nonlinear_substep_preserves_modulus() {
        let g = Grid::new(&[32, 32], &[8.0, 8.0]).unwrap();
        let v = smooth(g, 0.7);
        for spec in [
            EquationSpec::nls(1.0),
            EquationSpec::sh(1.5, 0.2),
            EquationSpec::sn(0.5),
        ] {
            let out = nonlinear_substep(&spec, &v, 0.3).unwrap();
            let worst = out
                .values()
                .iter()
                .zip(v.values())
                .fold(0.0f64, |m, (a, b)| m.max((a.norm() - b.norm()).abs()));
            assert!(worst <= 1e-13);
        }
    }

    #[test]
    fn linear_flow_is_reversible() {
        let g = Grid::new(&[64], &[12.0]).unwrap();
        let v = smooth(g, 1.1);
        let fwd = spectral::free_propagator(&v, 0.01).unwrap();
        let back = spectral::free_propagator(&fwd, -0.01).unwrap();
        assert!(max_diff(&back, &v) < 1e-12);
    }

    #[test]
    fn adapt_dt_rule() {
        let control = StepControl {
            dt_init: 1e-3,
            dt_min: 1e-6,
            dt_max: 1e-2,
            safety: 0.5,
            t_end: 1.0,
            max_steps: 10,
        };
        let g = Grid::new(&[16], &[4.0]).unwrap();
        let c = adapt_dt(&EquationSpec::nls(1.0), &ComplexField::zeros(g), &control).unwrap();
        assert_eq!(
            c,
            DtChoice {
                dt: 1e-2,
                floor_hit: false
            }
        );
        let a = dt_for_potential(1000.0, &control).dt;
        let b = dt_for_potential(2000.0, &control).dt;
        let ratio = a / b;
        assert!((1.8..=2.2).contains(&ratio));
        let floor = dt_for_potential(1e9, &control);
        assert_eq!(
            floor,
            DtChoice {
                dt: 1e-6,
                floor_hit: true
            }
        );
    }

    fn soliton_error(dt: f64) -> f64 {
        let g = Grid::new(&[1024], &[80.0]).unwrap();
        let v0 = soliton(g.clone());
        let settings = RunSettings {
            control: StepControl::fixed(dt, 1.0),
            policy: BlowupPolicy::default(),
            diagnostics_every: 100,
        };
        let res = run(&EquationSpec::nls(1.0), &v0, &settings, &mut []).unwrap();
        assert_eq!(res.reason, Termination::Completed);
        assert!((res.t_final - 1.0).abs() < 1e-12);
        // Exact solution √2 sech(x) e^{it}.
        let mut exact = v0.clone();
        exact.scale(Complex64::from_polar(1.0, 1.0));
        res.field.l2_distance(&exact)
    }

    #[test]
    fn soliton_exact_solution_second_order() {
        let coarse = soliton_error(1e-3);
        let fine = soliton_error(5e-4);
        assert!(fine < 1e-6, "L2 error {fine}");
        let ratio = coarse / fine;
        assert!((3.8..=4.2).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn run_with_zero_horizon_returns_input() {
        let g = Grid::new(&[32], &[10.0]).unwrap();
        let v0 = smooth(g, 0.3);
        let settings = RunSettings {
            control: StepControl::fixed(1e-2, 0.0),
            policy: BlowupPolicy::default(),
            diagnostics_every: 1,
        };
        let res = run(&EquationSpec::nls(1.0), &v0, &settings, &mut []).unwrap();
        assert_eq!(res.reason, Termination::Completed);
        assert_eq!(res.field, v0);
        assert_eq!(res.steps, 0);
        assert_eq!(res.records.len(), 1);
    }

    #[test]
    fn step_budget_and_observers() {
        let g = Grid::new(&[32], &[10.0]).unwrap();
        let v0 = smooth(g, 0.3);
        let mut control = StepControl::fixed(1e-2, 1.0);
        control.max_steps = 7;
        let settings = RunSettings {
            control,
            policy: BlowupPolicy::default(),
            diagnostics_every: 2,
        };
        let mut seen = Vec::new();
        let mut obs = |i: usize, r: &DiagnosticsRecord, _: &ComplexField| {
            seen.push((i, r.t));
            Ok(())
        };
        let res = run(&EquationSpec::nls(1.0), &v0, &settings, &mut [&mut obs]).unwrap();
        assert_eq!(res.reason, Termination::StepBudget);
        assert_eq!(res.steps, 7);
        // t=0, steps 2, 4, 6, then the final state at step 7.
        assert_eq!(seen.len(), 5);
        assert_eq!(res.records.len(), 5);
        assert!((res.t_final - 0.07).abs() < 1e-12);
    }

    #[test]
    fn mass_conserved_each_step() {
        let g = Grid::new(&[32, 32], &[10.0, 10.0]).unwrap();
        let mut v = smooth(g, 0.9);
        let n0 = v.norm_sq();
        for spec in [
            EquationSpec::nls(1.0),
            EquationSpec::sh(1.0, 0.3),
            EquationSpec::sn(0.4),
        ] {
            let mut st = Stepper::new(spec).unwrap();
            for _ in 0..20 {
                let before = v.norm_sq();
                st.step(&mut v, 0.01).unwrap();
                assert!((v.norm_sq() - before).abs() <= 1e-12 * n0);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn strang_step_is_symmetric(seed in 0.0f64..6.0, dt in 1e-3f64..0.2, kind in 0usize..3) {
            let g = Grid::new(&[64], &[12.0]).unwrap();
            let v = smooth(g, seed);
            let spec = [EquationSpec::nls(1.0), EquationSpec::sh(1.5, 0.3), EquationSpec::sn(0.6)][kind];
            let mut st = Stepper::new(spec).unwrap();
            let mut w = v.clone();
            st.step_signed(&mut w, dt).unwrap();
            st.step_signed(&mut w, -dt).unwrap();
            prop_assert!(max_diff(&w, &v) <= 1e-12);
        }
    }
}
