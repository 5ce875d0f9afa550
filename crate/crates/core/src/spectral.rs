//! Periodic-box discretization and Fourier-multiplier operators.
//!
//! Transform convention: the forward transform carries the `1/N` factor, so a
//! constant field `A` has coefficient `A` at `k = 0`, and
//! `∫ |f|² dx = V · Σ |f̂(k)|²` where `V` is the box volume.
//!
//! Multi-dimensional transforms are applied one axis at a time. Lines along
//! the contiguous (last) axis are transformed in place; other axes are
//! gathered into contiguous scratch lines first. Each line is transformed
//! independently, so the result does not depend on how lines are scheduled.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::par;

/// Elements per parallel FFT batch.
const FFT_BATCH: usize = 8192;

struct AxisPlan {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Uniform periodic grid on `[-L/2, L/2)^dim`, row-major with the last axis
/// contiguous.
pub struct Grid {
    n: Vec<usize>,
    box_length: Vec<f64>,
    spacing: Vec<f64>,
    wavenumbers: Vec<Vec<f64>>,
    k_sq: Vec<f64>,
    plans: Vec<AxisPlan>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n", &self.n)
            .field("box_length", &self.box_length)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.box_length == other.box_length
    }
}

/// Signed FFT mode index of storage position `j` on an axis with `n` samples.
/// The unpaired Nyquist mode maps to `-n/2`.
pub fn signed_mode(j: usize, n: usize) -> i64 {
    if j < n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

impl Grid {
    pub fn new(n: &[usize], box_length: &[f64]) -> Result<Arc<Grid>> {
        let dim = n.len();
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in 1..=3")));
        }
        if box_length.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "{} box lengths for {dim} axes",
                box_length.len()
            )));
        }
        for (&na, &la) in n.iter().zip(box_length) {
            if na < 8 || !na.is_power_of_two() {
                return Err(Error::InvalidGrid(format!(
                    "axis size {na} must be a power of two >= 8"
                )));
            }
            if !(la.is_finite() && la > 0.0) {
                return Err(Error::InvalidGrid(format!(
                    "box length {la} must be positive"
                )));
            }
        }

        let spacing: Vec<f64> = n
            .iter()
            .zip(box_length)
            .map(|(&na, &la)| la / na as f64)
            .collect();
        let wavenumbers: Vec<Vec<f64>> = n
            .iter()
            .zip(box_length)
            .map(|(&na, &la)| {
                (0..na)
                    .map(|j| 2.0 * std::f64::consts::PI * signed_mode(j, na) as f64 / la)
                    .collect()
            })
            .collect();

        let total: usize = n.iter().product();
        let mut k_sq = vec![0.0; total];
        for (flat, slot) in k_sq.iter_mut().enumerate() {
            let mut rem = flat;
            let mut acc = 0.0;
            for axis in (0..dim).rev() {
                let j = rem % n[axis];
                rem /= n[axis];
                let k = wavenumbers[axis][j];
                acc += k * k;
            }
            *slot = acc;
        }

        let mut planner = FftPlanner::new();
        let plans = n
            .iter()
            .map(|&na| AxisPlan {
                forward: planner.plan_fft_forward(na),
                inverse: planner.plan_fft_inverse(na),
            })
            .collect();

        Ok(Arc::new(Grid {
            n: n.to_vec(),
            box_length: box_length.to_vec(),
            spacing,
            wavenumbers,
            k_sq,
            plans,
        }))
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn n(&self) -> &[usize] {
        &self.n
    }

    pub fn box_length(&self) -> &[f64] {
        &self.box_length
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn wavenumbers(&self, axis: usize) -> &[f64] {
        &self.wavenumbers[axis]
    }

    /// `|k|²` for every mode, in storage order.
    pub fn k_sq(&self) -> &[f64] {
        &self.k_sq
    }

    pub fn len(&self) -> usize {
        self.k_sq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k_sq.is_empty()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn volume(&self) -> f64 {
        self.box_length.iter().product()
    }

    /// Per-axis storage indices of a flat index.
    pub fn multi_index(&self, flat: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        let mut rem = flat;
        for axis in (0..self.dim()).rev() {
            idx[axis] = rem % self.n[axis];
            rem /= self.n[axis];
        }
        idx
    }

    /// Physical coordinates of a sample; unused trailing entries are zero.
    pub fn position(&self, flat: usize) -> [f64; 3] {
        let idx = self.multi_index(flat);
        let mut x = [0.0; 3];
        for axis in 0..self.dim() {
            x[axis] = -0.5 * self.box_length[axis] + idx[axis] as f64 * self.spacing[axis];
        }
        x
    }

    /// Coordinates along one axis.
    pub fn coords(&self, axis: usize) -> Vec<f64> {
        (0..self.n[axis])
            .map(|j| -0.5 * self.box_length[axis] + j as f64 * self.spacing[axis])
            .collect()
    }

    /// Wavevector of a flat mode index; unused trailing entries are zero.
    pub fn wavevector(&self, flat: usize) -> [f64; 3] {
        let idx = self.multi_index(flat);
        let mut k = [0.0; 3];
        for axis in 0..self.dim() {
            k[axis] = self.wavenumbers[axis][idx[axis]];
        }
        k
    }

    /// Radius of the largest ball centred in the box.
    pub fn inscribed_radius(&self) -> f64 {
        self.box_length
            .iter()
            .fold(f64::INFINITY, |m, &l| m.min(0.5 * l))
    }

    /// Largest distance from the box centre to a grid sample.
    pub fn max_sample_radius(&self) -> f64 {
        self.box_length
            .iter()
            .map(|l| 0.25 * l * l)
            .sum::<f64>()
            .sqrt()
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let dim = self.dim();
        let mut scratch = Vec::new();
        for axis in 0..dim {
            let na = self.n[axis];
            let plan = if inverse {
                &self.plans[axis].inverse
            } else {
                &self.plans[axis].forward
            };
            let stride: usize = self.n[axis + 1..].iter().product();
            if stride == 1 {
                fft_lines(plan.as_ref(), data, na);
                continue;
            }
            let block = na * stride;
            scratch.resize(data.len(), Complex64::new(0.0, 0.0));
            {
                let src: &[Complex64] = data;
                par::chunks_mut(&mut scratch, na, |line, out| {
                    let base = (line / stride) * block + line % stride;
                    for (j, o) in out.iter_mut().enumerate() {
                        *o = src[base + j * stride];
                    }
                });
            }
            fft_lines(plan.as_ref(), &mut scratch, na);
            {
                let src: &[Complex64] = &scratch;
                par::chunks_mut(data, stride, |row, out| {
                    let b = row / na;
                    let j = row % na;
                    let base = b * block + j;
                    for (s, o) in out.iter_mut().enumerate() {
                        *o = src[base + s * na];
                    }
                });
            }
        }
    }
}

fn fft_lines(plan: &dyn Fft<f64>, data: &mut [Complex64], line_len: usize) {
    let lines_per_batch = (FFT_BATCH / line_len).max(1);
    par::chunks_mut(data, line_len * lines_per_batch, |_, batch| {
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(batch, &mut scratch);
    });
}

fn check_finite(values: &[Complex64], context: &'static str) -> Result<()> {
    match par::find_first(values, |z| z.re.is_finite() && z.im.is_finite()) {
        Some(index) => Err(Error::NonFinite { context, index }),
        None => Ok(()),
    }
}

/// Complex samples of a field on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    grid: Arc<Grid>,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(grid: Arc<Grid>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} samples for a grid of {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(ComplexField { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let values = vec![Complex64::new(0.0, 0.0); grid.len()];
        ComplexField { grid, values }
    }

    /// Samples `f(x)` at every grid point.
    pub fn from_fn<F>(grid: Arc<Grid>, f: F) -> Self
    where
        F: Fn(&[f64]) -> Complex64 + Sync + Send,
    {
        let mut values = vec![Complex64::new(0.0, 0.0); grid.len()];
        let dim = grid.dim();
        par::for_each_indexed_mut(&mut values, |i, v| {
            let x = grid.position(i);
            *v = f(&x[..dim]);
        });
        ComplexField { grid, values }
    }

    /// Real-valued samples as a complex field.
    pub fn from_real(grid: Arc<Grid>, real: &[f64]) -> Result<Self> {
        Self::new(grid, real.iter().map(|&r| Complex64::new(r, 0.0)).collect())
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn check_finite(&self) -> Result<()> {
        check_finite(&self.values, "field")
    }

    pub fn is_finite(&self) -> bool {
        self.check_finite().is_ok()
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// Discrete `∫ |f|² dx` by the trapezoid rule.
    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
    }

    /// Discrete L² distance to another field on the same grid.
    pub fn l2_distance(&self, other: &ComplexField) -> f64 {
        assert_eq!(self.values.len(), other.values.len());
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        (s * self.grid.cell_volume()).sqrt()
    }

    pub fn scale(&mut self, factor: Complex64) {
        par::for_each_mut(&mut self.values, |z| *z *= factor);
    }

    /// Real parts, after checking that `max|im| <= rel_tol * max|re|`.
    ///
    /// Returns the real samples and the measured relative imaginary residue.
    pub fn real_part_checked(&self, rel_tol: f64) -> (Vec<f64>, f64) {
        let (max_re, max_im) = self.values.iter().fold((0.0f64, 0.0f64), |(r, i), z| {
            (r.max(z.re.abs()), i.max(z.im.abs()))
        });
        let residue = if max_re > 0.0 {
            max_im / max_re
        } else {
            max_im
        };
        if residue > rel_tol {
            log::warn!("imaginary residue {residue:e} exceeds {rel_tol:e} on a real-valued field");
        }
        (self.values.iter().map(|z| z.re).collect(), residue)
    }
}

/// Spectral coefficients of a field, in FFT storage order.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: Arc<Grid>,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn new(grid: Arc<Grid>, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} coefficients for a grid of {}",
                coeffs.len(),
                grid.len()
            )));
        }
        Ok(Spectrum { grid, coeffs })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let coeffs = vec![Complex64::new(0.0, 0.0); grid.len()];
        Spectrum { grid, coeffs }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Multiplies each coefficient by `m(|k|²)`.
    pub fn apply_radial<M>(&mut self, m: M)
    where
        M: Fn(f64) -> Complex64 + Sync + Send,
    {
        par::zip_mut(&mut self.coeffs, self.grid.k_sq(), |c, &k2| *c *= m(k2));
    }

    /// Multiplies each coefficient by the matching entry of `table`.
    pub fn apply_table(&mut self, table: &[Complex64]) {
        par::zip_mut(&mut self.coeffs, table, |c, m| *c *= *m);
    }
}

/// Forward transform in place, normalized like [`to_spectral`].
pub(crate) fn forward_in_place(grid: &Grid, data: &mut [Complex64]) {
    grid.transform(data, false);
    let inv = 1.0 / data.len() as f64;
    par::for_each_mut(data, |c| *c *= inv);
}

pub(crate) fn inverse_in_place(grid: &Grid, data: &mut [Complex64]) {
    grid.transform(data, true);
}

pub fn to_spectral(f: &ComplexField) -> Result<Spectrum> {
    f.check_finite()?;
    let mut coeffs = f.values.clone();
    f.grid.transform(&mut coeffs, false);
    let inv = 1.0 / coeffs.len() as f64;
    par::for_each_mut(&mut coeffs, |c| *c *= inv);
    Ok(Spectrum {
        grid: f.grid.clone(),
        coeffs,
    })
}

pub fn from_spectral(s: &Spectrum) -> Result<ComplexField> {
    check_finite(&s.coeffs, "spectrum")?;
    let mut values = s.coeffs.clone();
    s.grid.transform(&mut values, true);
    Ok(ComplexField {
        grid: s.grid.clone(),
        values,
    })
}

/// Helmholtz inverse multiplier `1 / (1 + α²|k|²)`.
pub fn helmholtz_multiplier(k_sq: f64, alpha: f64) -> f64 {
    1.0 / (1.0 + alpha * alpha * k_sq)
}

/// Table of `(1 + |k|²) / (1 + α²|k|²)`, the H¹ gain of the Helmholtz inverse.
/// Bounded above by `max(1, α⁻²)`.
pub fn elliptic_gain_table(grid: &Grid, alpha: f64) -> Vec<f64> {
    grid.k_sq()
        .iter()
        .map(|&k2| (1.0 + k2) * helmholtz_multiplier(k2, alpha))
        .collect()
}

pub fn elliptic_gain_bound(alpha: f64) -> f64 {
    (1.0 / (alpha * alpha)).max(1.0)
}

/// Solves `u - α²Δu = f`. `α = 0` returns `f` unchanged.
pub fn helmholtz_inverse(f: &ComplexField, alpha: f64) -> Result<ComplexField> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "Helmholtz alpha must be >= 0, got {alpha}"
        )));
    }
    if alpha == 0.0 {
        f.check_finite()?;
        return Ok(f.clone());
    }
    let mut s = to_spectral(f)?;
    s.apply_radial(|k2| Complex64::new(helmholtz_multiplier(k2, alpha), 0.0));
    from_spectral(&s)
}

/// Solves `-α²Δψ = f` with the `k = 0` mode of `ψ` set to zero.
pub fn poisson_inverse_zero_mean(f: &ComplexField, alpha: f64) -> Result<ComplexField> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "Poisson alpha must be > 0, got {alpha}"
        )));
    }
    let mut s = to_spectral(f)?;
    let a2 = alpha * alpha;
    s.apply_radial(|k2| {
        if k2 == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(1.0 / (a2 * k2), 0.0)
        }
    });
    from_spectral(&s)
}

/// Table of the free-propagator multiplier `exp(-i|k|² t)`.
pub fn free_propagator_table(grid: &Grid, t: f64) -> Vec<Complex64> {
    let mut table = vec![Complex64::new(0.0, 0.0); grid.len()];
    par::zip_mut(&mut table, grid.k_sq(), |m, &k2| {
        *m = Complex64::from_polar(1.0, -k2 * t)
    });
    table
}

/// `U(t) f = exp(itΔ) f`.
pub fn free_propagator(f: &ComplexField, t: f64) -> Result<ComplexField> {
    if !t.is_finite() {
        return Err(Error::InvalidParameter(format!("propagation time {t}")));
    }
    let mut s = to_spectral(f)?;
    s.apply_radial(|k2| Complex64::from_polar(1.0, -k2 * t));
    from_spectral(&s)
}

/// `∫ |∇f|² dx` computed as `V · Σ |k|² |f̂(k)|²`.
pub fn gradient_sq_integral(f: &ComplexField) -> Result<f64> {
    let s = to_spectral(f)?;
    Ok(gradient_sq_from_spectrum(&s))
}

pub(crate) fn gradient_sq_from_spectrum(s: &Spectrum) -> f64 {
    let sum: f64 = s
        .coeffs
        .iter()
        .zip(s.grid.k_sq())
        .map(|(c, &k2)| k2 * c.norm_sqr())
        .sum();
    sum * s.grid.volume()
}

/// Spectral partial derivatives `∂f/∂x_d`, one field per axis.
///
/// The Nyquist mode is differentiated like any other so that Parseval's
/// identity with [`gradient_sq_integral`] holds exactly.
pub fn gradient(f: &ComplexField) -> Result<Vec<ComplexField>> {
    let s = to_spectral(f)?;
    let grid = f.grid.clone();
    (0..grid.dim())
        .map(|axis| {
            let mut d = s.clone();
            par::for_each_indexed_mut(&mut d.coeffs, |i, c| {
                let k = grid.wavevector(i)[axis];
                *c *= Complex64::new(0.0, k);
            });
            from_spectral(&d)
        })
        .collect()
}
