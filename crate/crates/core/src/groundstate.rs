//! Radial ground states of `R'' + ((d-1)/r) R' - R + R^{2σ+1} = 0`,
//! `R'(0) = 0`, `R(∞) = 0`, by shooting on `R(0)` with bisection.
//!
//! For `d = 2`, `σ = 1` this is the Townes profile whose mass is the critical
//! power for collapse of the cubic 2D NLS.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{ComplexField, Grid};

pub const DEFAULT_R_MAX: f64 = 25.0;
pub const DEFAULT_DECAY_FLOOR: f64 = 1e-10;
pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_SAMPLE_STEP: f64 = 0.01;

/// Trajectories agreeing to this relative level are taken as the profile;
/// beyond it the asymptotic tail is attached.
const CUT_RELATIVE: f64 = 1e-4;

/// Start offset of the series expansion at the origin.
const SERIES_START: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootOptions {
    pub r_max: f64,
    pub decay_floor: f64,
    /// Local error tolerance of the integrator.
    pub ode_tol: f64,
    /// Output sample spacing.
    pub dr: f64,
}

impl Default for ShootOptions {
    fn default() -> Self {
        ShootOptions {
            r_max: DEFAULT_R_MAX,
            decay_floor: DEFAULT_DECAY_FLOOR,
            ode_tol: DEFAULT_TOL,
            dr: DEFAULT_SAMPLE_STEP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShotOutcome {
    /// `R` crossed zero.
    Overshoot,
    /// `R` turned upward while positive, or never decayed.
    Undershoot,
    /// Reached `r_max` with `|R|` below the decay floor.
    DecayProfile,
}

impl std::fmt::Display for ShotOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ShotOutcome::Overshoot => "overshoot",
            ShotOutcome::Undershoot => "undershoot",
            ShotOutcome::DecayProfile => "decay-profile",
        })
    }
}

/// Surface measure of the unit sphere in `dim` dimensions (2 points in 1D).
pub fn sphere_area(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => unreachable!("dimension checked by caller"),
    }
}

#[derive(Debug, Clone, Copy)]
struct Problem {
    sigma: f64,
    dim: usize,
}

impl Problem {
    /// State `[R, R', P]` with `P' = |S^{d-1}| r^{d-1} R²`.
    fn rhs(&self, r: f64, y: &[f64; 3]) -> [f64; 3] {
        let (u, du) = (y[0], y[1]);
        let d = self.dim as f64;
        let nonlinear = u * u.abs().powf(2.0 * self.sigma);
        [
            du,
            -(d - 1.0) / r * du + u - nonlinear,
            sphere_area(self.dim) * r.powi(self.dim as i32 - 1) * u * u,
        ]
    }
}

fn validate(sigma: f64, dim: usize) -> Result<()> {
    if !(1..=3).contains(&dim) {
        return Err(Error::InvalidParameter(format!(
            "dimension {dim} not in 1..=3"
        )));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "sigma must be > 0, got {sigma}"
        )));
    }
    Ok(())
}

struct Trajectory {
    outcome: ShotOutcome,
    /// Samples on the uniform output grid reached before termination.
    r: Vec<f64>,
    value: Vec<f64>,
    deriv: Vec<f64>,
    power: Vec<f64>,
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// One DOPRI5 step; returns the 5th-order solution and the scaled error norm.
fn dopri_step(p: &Problem, r: f64, y: &[f64; 3], h: f64, tol: f64) -> ([f64; 3], f64) {
    let mut k = [[0.0; 3]; 7];
    k[0] = p.rhs(r, y);
    for s in 1..7 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s) {
            for c in 0..3 {
                ys[c] += h * A[s][j] * kj[c];
            }
        }
        k[s] = p.rhs(r + C[s] * h, &ys);
    }
    // Row 6 of A holds the 5th-order weights, so k[6] is f at the new point.
    let mut y_new = *y;
    for (j, kj) in k.iter().enumerate().take(6) {
        for c in 0..3 {
            y_new[c] += h * A[6][j] * kj[c];
        }
    }
    // Error control on (R, R') only; P is a passive quadrature.
    let mut err: f64 = 0.0;
    for c in 0..2 {
        let e: f64 = h * (0..7).map(|j| E[j] * k[j][c]).sum::<f64>();
        let scale = tol + tol * y[c].abs().max(y_new[c].abs());
        err = err.max((e / scale).abs());
    }
    (y_new, err)
}

fn integrate(p: &Problem, r0: f64, opts: &ShootOptions) -> Trajectory {
    let d = p.dim as f64;
    let curvature = (r0 - r0.powf(2.0 * p.sigma + 1.0)) / d;
    let h0 = SERIES_START;
    let mut r = h0;
    let mut y = [
        r0 + 0.5 * h0 * h0 * curvature,
        h0 * curvature,
        sphere_area(p.dim) * r0 * r0 * h0.powi(p.dim as i32) / d,
    ];

    let n_samples = (opts.r_max / opts.dr).round() as usize + 1;
    let mut tr = Trajectory {
        outcome: ShotOutcome::Undershoot,
        r: vec![0.0],
        value: vec![r0],
        deriv: vec![0.0],
        power: vec![0.0],
    };
    let mut h: f64 = 1e-3;
    let mut next = 1usize;

    while next < n_samples {
        let target = next as f64 * opts.dr;
        let (y_new, err) = dopri_step(p, r, &y, h.min(target - r), opts.ode_tol);
        let taken = h.min(target - r);
        if err > 1.0 {
            h = taken * (0.9 * err.powf(-0.2)).max(0.2);
            continue;
        }
        r += taken;
        y = y_new;
        h = taken * (0.9 * err.max(1e-30).powf(-0.2)).clamp(0.2, 5.0);
        if (r - target).abs() <= 1e-12 * target {
            r = target;
            tr.r.push(target);
            tr.value.push(y[0]);
            tr.deriv.push(y[1]);
            tr.power.push(y[2]);
            next += 1;
        }
        if y[0] < 0.0 {
            tr.outcome = ShotOutcome::Overshoot;
            return tr;
        }
        if y[1] > 0.0 {
            tr.outcome = ShotOutcome::Undershoot;
            return tr;
        }
    }
    tr.outcome = if y[0].abs() < opts.decay_floor {
        ShotOutcome::DecayProfile
    } else {
        ShotOutcome::Undershoot
    };
    tr
}

/// Integrates outward from `R(0) = r0` and classifies the trajectory.
pub fn shoot(sigma: f64, dim: usize, r0: f64) -> Result<ShotOutcome> {
    shoot_with(sigma, dim, r0, &ShootOptions::default())
}

pub fn shoot_with(sigma: f64, dim: usize, r0: f64, opts: &ShootOptions) -> Result<ShotOutcome> {
    validate(sigma, dim)?;
    if !(r0 > 0.0 && r0.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "R(0) must be > 0, got {r0}"
        )));
    }
    Ok(integrate(&Problem { sigma, dim }, r0, opts).outcome)
}

/// Decaying solution of the linearized far-field equation,
/// `r^{-ν} K_ν(r)` with `ν = (d-2)/2`, up to a constant; returns `(g, g')`.
fn far_field(dim: usize, r: f64) -> (f64, f64) {
    let nu = 0.5 * (dim as f64 - 2.0);
    let mu = 4.0 * nu * nu;
    // Asymptotic series of K_ν: Σ a_j r^{-j}, truncated at its smallest term.
    let (mut s, mut ds) = (1.0, 0.0);
    let mut a = 1.0;
    for j in 1..40 {
        let jf = j as f64;
        let a_next = a * (mu - (2.0 * jf - 1.0).powi(2)) / (8.0 * jf);
        let term = a_next * r.powi(-j);
        if a_next == 0.0 || term.abs() >= (a * r.powi(1 - j)).abs() {
            break;
        }
        s += term;
        ds += -jf * a_next * r.powi(-j - 1);
        a = a_next;
    }
    let p = -0.5 * (dim as f64 - 1.0);
    let base = r.powf(p) * (-r).exp();
    let g = base * s;
    let dg = base * (ds + s * (p / r - 1.0));
    (g, dg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub sigma: f64,
    pub dim: usize,
    pub r_samples: Vec<f64>,
    pub values: Vec<f64>,
    pub derivs: Vec<f64>,
    /// Shot value `R(0)`.
    pub r0: f64,
    /// `∫ R² dx` over `ℝ^dim`.
    pub power: f64,
    /// Radius from which the asymptotic tail replaces the shot trajectory.
    pub r_cut: f64,
    pub tol: f64,
    pub r_max: f64,
}

/// JSON sidecar written next to a profile CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileMeta {
    pub sigma: f64,
    pub dim: usize,
    #[serde(rename = "R0")]
    pub r0: f64,
    pub power: f64,
    pub tol: f64,
    pub r_max: f64,
}

impl RadialProfile {
    pub fn meta(&self) -> ProfileMeta {
        ProfileMeta {
            sigma: self.sigma,
            dim: self.dim,
            r0: self.r0,
            power: self.power,
            tol: self.tol,
            r_max: self.r_max,
        }
    }

    /// `r,R` CSV with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,R\n");
        for (r, v) in self.r_samples.iter().zip(&self.values) {
            out.push_str(&format!("{r:.16e},{v:.16e}\n"));
        }
        out
    }

    fn dr(&self) -> f64 {
        self.r_samples[1] - self.r_samples[0]
    }

    /// Cubic Hermite interpolation of `R`; zero beyond `r_max`.
    pub fn eval(&self, r: f64) -> f64 {
        let r = r.abs();
        if r >= self.r_max {
            return 0.0;
        }
        let h = self.dr();
        let i = ((r / h).floor() as usize).min(self.r_samples.len() - 2);
        let t = (r - self.r_samples[i]) / h;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.derivs[i] * h, self.derivs[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1
    }
}

/// Sup-norm ODE residual of the sampled profile over `[dr, r_cut]`, using
/// sixth-order central differences and the even extension at the origin.
pub fn ode_residual(profile: &RadialProfile) -> f64 {
    const D1: [f64; 4] = [0.0, 3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0];
    const D2: [f64; 4] = [-49.0 / 18.0, 3.0 / 2.0, -3.0 / 20.0, 1.0 / 90.0];
    let h = profile.dr();
    let d = profile.dim as f64;
    let at = |i: isize| profile.values[i.unsigned_abs()];
    let last = ((profile.r_cut / h).round() as isize - 3).max(1);
    let mut worst: f64 = 0.0;
    for i in 1..=last {
        let r = i as f64 * h;
        let mut d1 = 0.0;
        let mut d2 = D2[0] * at(i);
        for k in 1..4isize {
            d1 += D1[k as usize] * (at(i + k) - at(i - k));
            d2 += D2[k as usize] * (at(i + k) + at(i - k));
        }
        d1 /= h;
        d2 /= h * h;
        let u = at(i);
        let res = d2 + (d - 1.0) / r * d1 - u + u * u.abs().powf(2.0 * profile.sigma);
        worst = worst.max(res.abs());
    }
    worst
}

fn composite_simpson(y: &[f64], h: f64) -> f64 {
    if y.len() < 3 {
        return 0.0;
    }
    let n = if y.len() % 2 == 1 {
        y.len()
    } else {
        y.len() - 1
    };
    let mut s = y[0] + y[n - 1];
    for (i, v) in y.iter().enumerate().take(n - 1).skip(1) {
        s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    let mut total = s * h / 3.0;
    if n < y.len() {
        total += 0.5 * h * (y[n - 1] + y[n]);
    }
    total
}

/// Bisects `R(0)` inside `bracket` to width `tol` and assembles the profile.
pub fn solve_ground_state(
    sigma: f64,
    dim: usize,
    bracket: (f64, f64),
    tol: f64,
) -> Result<RadialProfile> {
    solve_ground_state_with(sigma, dim, bracket, &ShootOptions::default(), tol)
}

pub fn solve_ground_state_with(
    sigma: f64,
    dim: usize,
    bracket: (f64, f64),
    opts: &ShootOptions,
    tol: f64,
) -> Result<RadialProfile> {
    validate(sigma, dim)?;
    let (mut lo, mut hi) = (bracket.0.min(bracket.1), bracket.0.max(bracket.1));
    if !(lo > 0.0 && hi.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "bracket [{lo}, {hi}] must be positive"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be > 0, got {tol}"
        )));
    }
    let p = Problem { sigma, dim };
    let out_lo = integrate(&p, lo, opts).outcome;
    let out_hi = integrate(&p, hi, opts).outcome;
    if out_lo == out_hi {
        return Err(Error::InvalidBracket {
            lo,
            hi,
            outcome: out_lo.to_string(),
        });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let out = integrate(&p, mid, opts).outcome;
        if out == ShotOutcome::DecayProfile {
            lo = mid;
            hi = mid;
            break;
        }
        if out == out_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let r0 = 0.5 * (lo + hi);
    let central = integrate(&p, r0, opts);
    let t_lo = integrate(&p, lo, opts);
    let t_hi = integrate(&p, hi, opts);

    // Cut where the bracketing trajectories separate; the true solution lies
    // between them.
    let common = central.r.len().min(t_lo.r.len()).min(t_hi.r.len());
    let mut cut = common.saturating_sub(4);
    for i in 1..common {
        let spread = (t_lo.value[i] - t_hi.value[i]).abs();
        if spread > CUT_RELATIVE * central.value[i].abs() {
            cut = i.saturating_sub(1);
            break;
        }
    }
    if cut < 8 {
        return Err(Error::InvalidParameter(
            "shooting trajectories diverge immediately; tighten tol".into(),
        ));
    }
    if central.value[..=cut].iter().any(|&v| v <= 0.0) {
        return Err(Error::InvalidParameter(
            "profile is not positive before the tail; not a ground state".into(),
        ));
    }

    let n_samples = (opts.r_max / opts.dr).round() as usize + 1;
    let r_cut = central.r[cut];
    let (g_cut, _) = far_field(dim, r_cut);
    let amp = central.value[cut] / g_cut;
    let mut r_samples = central.r[..=cut].to_vec();
    let mut values = central.value[..=cut].to_vec();
    let mut derivs = central.deriv[..=cut].to_vec();
    for i in cut + 1..n_samples {
        let r = i as f64 * opts.dr;
        let (g, dg) = far_field(dim, r);
        r_samples.push(r);
        values.push(amp * g);
        derivs.push(amp * dg);
    }

    let area = sphere_area(dim);
    let tail_integrand: Vec<f64> = r_samples[cut..]
        .iter()
        .zip(&values[cut..])
        .map(|(&r, &v)| area * r.powi(dim as i32 - 1) * v * v)
        .collect();
    let power = central.power[cut] + composite_simpson(&tail_integrand, opts.dr);

    let last = *values.last().unwrap();
    if last.abs() >= 1e-8 * r0 {
        return Err(Error::InvalidParameter(format!(
            "r_max {} too small: R(r_max) = {last:e}",
            opts.r_max
        )));
    }

    Ok(RadialProfile {
        sigma,
        dim,
        r_samples,
        values,
        derivs,
        r0,
        power,
        r_cut,
        tol,
        r_max: opts.r_max,
    })
}

/// Default shooting bracket for `(σ, dim)`: undershoot at the lower end
/// (`R(0) < 1` turns up immediately), overshoot at the upper end.
pub fn default_bracket(sigma: f64, dim: usize) -> (f64, f64) {
    let scale = (sigma + 1.0).powf(0.5 / sigma);
    let hi = match dim {
        1 => 1.5 * scale,
        2 => 4.0 * scale,
        _ => 8.0 * scale,
    };
    (0.5, hi)
}

/// Samples `s·R(|x - c|/w)` on `grid`, centred at the box centre.
pub fn deposit(
    profile: &RadialProfile,
    grid: &Arc<Grid>,
    amplitude: f64,
    width: f64,
) -> Result<ComplexField> {
    if grid.dim() != profile.dim {
        return Err(Error::GridMismatch(format!(
            "profile dimension {} on a {}-D grid",
            profile.dim,
            grid.dim()
        )));
    }
    if !(width > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "width scale must be > 0, got {width}"
        )));
    }
    let needed = grid.inscribed_radius();
    if profile.r_max * width < needed {
        return Err(Error::ProfileCoverage {
            r_max: profile.r_max * width,
            needed,
        });
    }
    Ok(ComplexField::from_fn(grid.clone(), |x| {
        let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        Complex64::new(amplitude * profile.eval(r / width), 0.0)
    }))
}
