//! Conserved quantities, norms and the blow-up monitor.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{self, signed_mode, ComplexField, Grid, Spectrum};
use crate::system::{self, validate_regime, EquationSpec, Regime};

/// Column order of the diagnostics CSV.
pub const CSV_HEADER: &str = "t,mass,hamiltonian,grad_sq,h1_sq,sup_abs,tail_fraction,dt_current";

/// Ratio of late-time to early-time peak `‖∇v‖²` above which a series is
/// flagged as diverging.
pub const LATE_GROWTH_LIMIT: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: f64,
    pub hamiltonian: f64,
    pub grad_sq: f64,
    pub h1_sq: f64,
    pub sup_abs: f64,
    pub tail_fraction: f64,
    pub dt_current: f64,
}

impl DiagnosticsRecord {
    /// One CSV row with 17 significant digits per value.
    pub fn to_csv_row(&self) -> String {
        let mut row = String::with_capacity(200);
        for (i, x) in self.columns().iter().enumerate() {
            if i > 0 {
                row.push(',');
            }
            write!(row, "{x:.16e}").unwrap();
        }
        row
    }

    pub fn from_csv_row(line: &str) -> Result<Self> {
        let cols: Vec<f64> = line
            .trim()
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| Error::Config(format!("bad diagnostics row {line:?}: {e}")))?;
        if cols.len() != 8 {
            return Err(Error::Config(format!(
                "diagnostics row has {} columns, expected 8",
                cols.len()
            )));
        }
        Ok(DiagnosticsRecord {
            t: cols[0],
            mass: cols[1],
            hamiltonian: cols[2],
            grad_sq: cols[3],
            h1_sq: cols[4],
            sup_abs: cols[5],
            tail_fraction: cols[6],
            dt_current: cols[7],
        })
    }

    fn columns(&self) -> [f64; 8] {
        [
            self.t,
            self.mass,
            self.hamiltonian,
            self.grad_sq,
            self.h1_sq,
            self.sup_abs,
            self.tail_fraction,
            self.dt_current,
        ]
    }
}

/// Renders a series as CSV text, header included.
pub fn to_csv(records: &[DiagnosticsRecord]) -> String {
    let mut out = String::with_capacity(CSV_HEADER.len() + 1 + records.len() * 200);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

pub fn from_csv(text: &str) -> Result<Vec<DiagnosticsRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => {
            return Err(Error::Config(format!(
                "unexpected diagnostics header {other:?}"
            )))
        }
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(DiagnosticsRecord::from_csv_row)
        .collect()
}

/// `N(v) = ∫ |v|² dx`.
pub fn mass(v: &ComplexField) -> f64 {
    v.norm_sq()
}

/// `∫ W(v)|v|² dx / (σ+1)` (with `σ = 1` for SN).
fn potential_energy(spec: &EquationSpec, v: &ComplexField, w: &[f64]) -> f64 {
    let s: f64 = v
        .values()
        .iter()
        .zip(w)
        .map(|(z, &w)| w * z.norm_sqr())
        .sum();
    s * v.grid().cell_volume() / (spec.hamiltonian_sigma() + 1.0)
}

/// `H(v) = ‖∇v‖² - ∫ W(v)|v|² / (σ+1)`.
///
/// For SN the zero-mean potential is used; the dropped constant would shift
/// `H` by a multiple of the (conserved) mass.
pub fn hamiltonian(spec: &EquationSpec, v: &ComplexField) -> Result<f64> {
    let w = system::potential_values(spec, v)?;
    let grad_sq = spectral::gradient_sq_integral(v)?;
    Ok(grad_sq - potential_energy(spec, v, &w))
}

fn in_tail(grid: &Grid, flat: usize) -> bool {
    let idx = grid.multi_index(flat);
    (0..grid.dim()).any(|axis| {
        let n = grid.n()[axis];
        3 * signed_mode(idx[axis], n).unsigned_abs() as usize > n
    })
}

/// Fraction of spectral power in modes with `|m| > n/3` on any axis.
pub fn tail_fraction(s: &Spectrum) -> f64 {
    let grid = s.grid();
    let (mut tail, mut total) = (0.0, 0.0);
    for (i, c) in s.coeffs().iter().enumerate() {
        let p = c.norm_sqr();
        total += p;
        if in_tail(grid, i) {
            tail += p;
        }
    }
    if total > 0.0 {
        (tail / total).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Full diagnostics of one snapshot.
pub fn measure(
    spec: &EquationSpec,
    v: &ComplexField,
    t: f64,
    dt: f64,
) -> Result<DiagnosticsRecord> {
    let s = spectral::to_spectral(v)?;
    let grad_sq = spectral::gradient_sq_from_spectrum(&s);
    let w = system::potential_values(spec, v)?;
    let mass = mass(v);
    Ok(DiagnosticsRecord {
        t,
        mass,
        hamiltonian: grad_sq - potential_energy(spec, v, &w),
        grad_sq,
        h1_sq: mass + grad_sq,
        sup_abs: v.sup_abs(),
        tail_fraction: tail_fraction(&s),
        dt_current: dt,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlowupPolicy {
    pub sup_factor: f64,
    pub tail_limit: f64,
    pub consecutive: usize,
}

impl Default for BlowupPolicy {
    fn default() -> Self {
        BlowupPolicy {
            sup_factor: 50.0,
            tail_limit: 0.1,
            consecutive: 3,
        }
    }
}

impl BlowupPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.sup_factor > 1.0) {
            return Err(Error::Config(format!(
                "blowup sup_factor must be > 1, got {}",
                self.sup_factor
            )));
        }
        if !(self.tail_limit > 0.0 && self.tail_limit < 1.0) {
            return Err(Error::Config(format!(
                "blowup tail_limit must be in (0,1), got {}",
                self.tail_limit
            )));
        }
        if self.consecutive == 0 {
            return Err(Error::Config("blowup consecutive must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlowupReason {
    /// `sup|v|` exceeded `sup_factor` times its initial value.
    pub sup: bool,
    /// Spectral tail fraction exceeded `tail_limit`.
    pub tail: bool,
}

impl std::fmt::Display for BlowupReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (self.sup, self.tail) {
            (true, true) => f.write_str("sup+tail"),
            (true, false) => f.write_str("sup"),
            (false, true) => f.write_str("tail"),
            (false, false) => f.write_str("mixed"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlowupStatus {
    Continue,
    Triggered(BlowupReason),
}

fn trips(r: &DiagnosticsRecord, sup0: f64, policy: &BlowupPolicy) -> BlowupReason {
    BlowupReason {
        sup: r.sup_abs > policy.sup_factor * sup0,
        tail: r.tail_fraction > policy.tail_limit,
    }
}

/// Number of trailing records in which at least one condition holds.
pub(crate) fn trailing_trips(history: &[DiagnosticsRecord], policy: &BlowupPolicy) -> usize {
    let Some(first) = history.first() else {
        return 0;
    };
    history
        .iter()
        .rev()
        .take_while(|r| {
            let t = trips(r, first.sup_abs, policy);
            t.sup || t.tail
        })
        .count()
}

/// Blow-up monitor. `history[0]` is the reference record at `t = 0`.
///
/// Triggers once a condition has held for `policy.consecutive` consecutive
/// records at the end of the history. The reason lists the conditions that
/// held in every one of those records.
pub fn blowup_check(history: &[DiagnosticsRecord], policy: &BlowupPolicy) -> BlowupStatus {
    let k = policy.consecutive.max(1);
    if history.is_empty() || trailing_trips(history, policy) < k {
        return BlowupStatus::Continue;
    }
    let sup0 = history[0].sup_abs;
    let window = &history[history.len() - k..];
    let reason = window.iter().fold(
        BlowupReason {
            sup: true,
            tail: true,
        },
        |acc, r| {
            let t = trips(r, sup0, policy);
            BlowupReason {
                sup: acc.sup && t.sup,
                tail: acc.tail && t.tail,
            }
        },
    );
    BlowupStatus::Triggered(reason)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AprioriReport {
    pub regime: Regime,
    /// `σ < 4/N` for SH/SN (or `σ < 2/N` for NLS).
    pub global_regime: bool,
    pub max_grad_sq: f64,
    pub finite: bool,
    /// Peak `‖∇v‖²` over the last quarter of the run divided by the peak over
    /// the first three quarters.
    pub late_growth: f64,
    pub diverging: bool,
    /// Boundedness verdict, only issued in the global regime.
    pub bounded: Option<bool>,
}

/// Tracks `‖∇v(t)‖²` against the a priori bound. The bound's constant is not
/// computable, so only boundedness of the series is judged.
pub fn apriori_tracker(
    spec: &EquationSpec,
    dim: usize,
    records: &[DiagnosticsRecord],
) -> AprioriReport {
    let regime = validate_regime(spec, dim).regime;
    let global_regime = regime == Regime::GlobalGuaranteed;
    let finite = records.iter().all(|r| r.grad_sq.is_finite());
    let max_grad_sq = records.iter().map(|r| r.grad_sq).fold(0.0f64, |m, g| {
        if g.is_nan() {
            f64::NAN
        } else {
            m.max(g)
        }
    });

    let late_growth = match (records.first(), records.last()) {
        (Some(a), Some(b)) if b.t > a.t => {
            let split = a.t + 0.75 * (b.t - a.t);
            let (mut early, mut late) = (0.0f64, 0.0f64);
            for r in records {
                if r.t < split {
                    early = early.max(r.grad_sq);
                } else {
                    late = late.max(r.grad_sq);
                }
            }
            if early > 0.0 {
                late / early
            } else if late > 0.0 {
                f64::INFINITY
            } else {
                1.0
            }
        }
        _ => 1.0,
    };
    let diverging = !finite || !(late_growth <= LATE_GROWTH_LIMIT);
    AprioriReport {
        regime,
        global_regime,
        max_grad_sq,
        finite,
        late_growth,
        diverging,
        bounded: global_regime.then_some(!diverging),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Grid;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn rec(t: f64, sup: f64, tail: f64) -> DiagnosticsRecord {
        DiagnosticsRecord {
            t,
            mass: 1.0,
            hamiltonian: 0.0,
            grad_sq: 1.0,
            h1_sq: 2.0,
            sup_abs: sup,
            tail_fraction: tail,
            dt_current: 1e-3,
        }
    }

    #[test]
    fn mass_closed_forms() {
        let g = Grid::new(&[16, 16], &[3.0, 5.0]).unwrap();
        assert_eq!(mass(&ComplexField::zeros(g.clone())), 0.0);
        let a = ComplexField::from_fn(g, |_| Complex64::new(0.6, 0.8));
        assert!((mass(&a) - 15.0).abs() < 1e-12);
        let g = Grid::new(&[512], &[40.0]).unwrap();
        let f = ComplexField::from_fn(g, |x| Complex64::new((-0.5 * x[0] * x[0]).exp(), 0.0));
        assert!((mass(&f) - 1.7724538509).abs() < 1e-10);
    }

    #[test]
    fn hamiltonian_closed_forms() {
        let g = Grid::new(&[16, 16], &[2.0 * PI, 2.0 * PI]).unwrap();
        let vol = g.volume();
        assert_eq!(
            hamiltonian(&EquationSpec::nls(1.0), &ComplexField::zeros(g.clone())).unwrap(),
            0.0
        );

        let a = 0.8f64;
        let konst = ComplexField::from_fn(g.clone(), |_| Complex64::new(a, 0.0));
        for sigma in [1.0, 2.0] {
            let h = hamiltonian(&EquationSpec::sh(sigma, 0.3), &konst).unwrap();
            let want = -vol * a.powf(2.0 * sigma + 2.0) / (sigma + 1.0);
            assert!((h - want).abs() < 1e-12, "{h} vs {want}");
        }

        let (amp, k) = (0.7f64, 2.0);
        let wave = ComplexField::from_fn(g.clone(), |x| Complex64::from_polar(amp, k * x[1]));
        let sigma = 1.5;
        let h = hamiltonian(&EquationSpec::nls(sigma), &wave).unwrap();
        let want = vol * (amp * amp * k * k - amp.powf(2.0 * sigma + 2.0) / (sigma + 1.0));
        assert!((h - want).abs() < 1e-11, "{h} vs {want}");
    }

    #[test]
    fn hamiltonian_is_phase_invariant() {
        let g = Grid::new(&[64], &[20.0]).unwrap();
        let v = ComplexField::from_fn(g, |x| {
            Complex64::from_polar((-x[0] * x[0] / 3.0).exp() * 1.2, 0.5 * x[0])
        });
        for spec in [
            EquationSpec::nls(1.0),
            EquationSpec::sh(1.0, 0.4),
            EquationSpec::sn(0.6),
        ] {
            let h0 = hamiltonian(&spec, &v).unwrap();
            let mut rot = v.clone();
            rot.scale(Complex64::from_polar(1.0, 1.234));
            let h1 = hamiltonian(&spec, &rot).unwrap();
            assert!((h1 - h0).abs() <= 1e-12 * h0.abs().max(1.0));
        }
    }

    #[test]
    fn record_invariants_and_csv() {
        let g = Grid::new(&[32, 32], &[10.0, 10.0]).unwrap();
        let v = ComplexField::from_fn(g, |x| {
            Complex64::new((-(x[0] * x[0] + x[1] * x[1])).exp(), 0.0)
        });
        let r = measure(&EquationSpec::sh(1.0, 0.2), &v, 0.5, 1e-3).unwrap();
        assert_eq!(r.h1_sq, r.mass + r.grad_sq);
        assert!(r.mass >= 0.0 && r.grad_sq >= 0.0);
        assert!((0.0..=1.0).contains(&r.tail_fraction));
        let row = r.to_csv_row();
        assert_eq!(row.split(',').count(), 8);
        assert_eq!(DiagnosticsRecord::from_csv_row(&row).unwrap(), r);
        let text = to_csv(&[r, r]);
        assert!(text.starts_with(CSV_HEADER));
        assert_eq!(from_csv(&text).unwrap(), vec![r, r]);
    }

    #[test]
    fn tail_fraction_of_pure_modes() {
        let g = Grid::new(&[32], &[2.0 * PI]).unwrap();
        let low = ComplexField::from_fn(g.clone(), |x| Complex64::from_polar(1.0, 3.0 * x[0]));
        let high = ComplexField::from_fn(g.clone(), |x| Complex64::from_polar(1.0, -13.0 * x[0]));
        let tf = |f: &ComplexField| tail_fraction(&spectral::to_spectral(f).unwrap());
        assert!(tf(&low) < 1e-20);
        assert!((tf(&high) - 1.0).abs() < 1e-12);
        assert_eq!(tf(&ComplexField::zeros(g)), 0.0);
    }

    #[test]
    fn blowup_flat_history_continues() {
        let h: Vec<_> = (0..20).map(|i| rec(i as f64, 1.0, 1e-8)).collect();
        assert_eq!(
            blowup_check(&h, &BlowupPolicy::default()),
            BlowupStatus::Continue
        );
    }

    #[test]
    fn blowup_sup_rule() {
        let sups = [1.0, 10.0, 60.0, 80.0, 90.0];
        let h: Vec<_> = sups
            .iter()
            .enumerate()
            .map(|(i, &s)| rec(i as f64, s, 0.0))
            .collect();
        let p = BlowupPolicy::default();
        for len in 1..5 {
            assert_eq!(blowup_check(&h[..len], &p), BlowupStatus::Continue);
        }
        assert_eq!(
            blowup_check(&h, &p),
            BlowupStatus::Triggered(BlowupReason {
                sup: true,
                tail: false
            })
        );
    }

    #[test]
    fn blowup_tail_rule_needs_consecutive_records() {
        let p = BlowupPolicy::default();
        let h = vec![
            rec(0.0, 1.0, 0.0),
            rec(1.0, 1.0, 0.2),
            rec(2.0, 1.0, 0.05),
            rec(3.0, 1.0, 0.2),
            rec(4.0, 1.0, 0.3),
        ];
        assert_eq!(blowup_check(&h, &p), BlowupStatus::Continue);
        let mut h2 = h.clone();
        h2.push(rec(5.0, 1.0, 0.5));
        assert_eq!(
            blowup_check(&h2, &p),
            BlowupStatus::Triggered(BlowupReason {
                sup: false,
                tail: true
            })
        );
    }

    #[test]
    fn apriori_zero_field_bounded() {
        let h: Vec<_> = (0..8)
            .map(|i| DiagnosticsRecord {
                grad_sq: 0.0,
                ..rec(i as f64, 0.0, 0.0)
            })
            .collect();
        let r = apriori_tracker(&EquationSpec::sh(1.0, 0.1), 2, &h);
        assert_eq!(r.max_grad_sq, 0.0);
        assert_eq!(r.bounded, Some(true));
        assert!(!r.diverging);
    }

    #[test]
    fn apriori_flags_late_growth() {
        let h: Vec<_> = (0..100)
            .map(|i| {
                let t = i as f64 * 0.01;
                DiagnosticsRecord {
                    grad_sq: 1.0 / (1.0 - t + 1e-2),
                    ..rec(t, 1.0, 0.0)
                }
            })
            .collect();
        let r = apriori_tracker(&EquationSpec::nls(1.0), 2, &h);
        assert!(r.diverging);
        assert_eq!(r.bounded, None);
        let r = apriori_tracker(&EquationSpec::sh(1.0, 0.1), 2, &h);
        assert_eq!(r.bounded, Some(false));
    }

    #[test]
    fn policy_validation() {
        assert!(BlowupPolicy::default().validate().is_ok());
        assert!(BlowupPolicy {
            sup_factor: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(BlowupPolicy {
            tail_limit: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(BlowupPolicy {
            consecutive: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
