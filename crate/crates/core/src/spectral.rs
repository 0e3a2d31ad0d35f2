//! Periodic pseudo-spectral machinery on the unit torus ω = (0,1)^{d-1}.
//!
//! Spectra are normalised so that the zeroth coefficient is the mean value:
//! `f(x) = Σ_k c_k e^{2πi k·x}`.

use std::cell::RefCell;
use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

/// Uniform periodic grid with `n` points per direction in 1 or 2 dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PeriodicGrid {
    dim: usize,
    n: usize,
}

impl PeriodicGrid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::param("dim", format!("{dim} not in {{1,2}}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::param("n", format!("{n} must be a power of two >= 8")));
        }
        Ok(PeriodicGrid { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Signed integer wavenumber of FFT index `idx` along one axis. The
    /// Nyquist index maps to `+n/2`.
    pub fn wavenumber(&self, idx: usize) -> i64 {
        let n = self.n as i64;
        let i = idx as i64;
        if i <= n / 2 {
            i
        } else {
            i - n
        }
    }

    pub fn is_nyquist(&self, idx: usize) -> bool {
        idx == self.n / 2
    }

    /// Integer wave vector of flat spectral index `flat`; unused components are 0.
    pub fn wavevector(&self, flat: usize) -> [i64; 2] {
        match self.dim {
            1 => [self.wavenumber(flat), 0],
            _ => [self.wavenumber(flat / self.n), self.wavenumber(flat % self.n)],
        }
    }

    /// Whether any component of the wave vector sits on the Nyquist index.
    pub fn touches_nyquist(&self, flat: usize) -> bool {
        match self.dim {
            1 => self.is_nyquist(flat),
            _ => self.is_nyquist(flat / self.n) || self.is_nyquist(flat % self.n),
        }
    }

    /// Coordinates of node `flat`.
    pub fn coords(&self, flat: usize) -> [f64; 2] {
        let h = self.spacing();
        match self.dim {
            1 => [flat as f64 * h, 0.0],
            _ => [(flat / self.n) as f64 * h, (flat % self.n) as f64 * h],
        }
    }

    /// Flat index of the spectral coefficient with integer wave vector `k`.
    pub fn flat_index(&self, k: [i64; 2]) -> Option<usize> {
        let n = self.n as i64;
        let wrap = |j: i64| -> Option<usize> {
            if j > n / 2 || j <= -n / 2 {
                None
            } else {
                Some(j.rem_euclid(n) as usize)
            }
        };
        match self.dim {
            1 => {
                if k[1] != 0 {
                    return None;
                }
                wrap(k[0])
            }
            _ => Some(wrap(k[0])? * self.n + wrap(k[1])?),
        }
    }
}

/// Real samples of a periodic function at the nodes of a [`PeriodicGrid`].
///
/// In two dimensions the layout is row-major with `x1` the slow axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicField {
    grid: PeriodicGrid,
    values: Vec<f64>,
}

impl PeriodicField {
    pub fn new(grid: PeriodicGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::NodeCountMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(PeriodicField { grid, values })
    }

    pub fn zeros(grid: PeriodicGrid) -> Self {
        PeriodicField {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: PeriodicGrid, c: f64) -> Self {
        PeriodicField {
            grid,
            values: vec![c; grid.len()],
        }
    }

    /// Samples `f(x1, x2)` at every node (x2 = 0 in one dimension).
    pub fn from_fn(grid: PeriodicGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|i| {
                let [x1, x2] = grid.coords(i);
                f(x1, x2)
            })
            .collect();
        PeriodicField { grid, values }
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        PeriodicField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &PeriodicField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_grid(other)?;
        Ok(PeriodicField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scaled(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    pub fn add(&self, other: &PeriodicField) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &PeriodicField) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub(crate) fn check_grid(&self, other: &PeriodicField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!(
                "{:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        Ok(())
    }

    pub fn to_spectrum(&self) -> Spectrum {
        let mut buf: Vec<Complex64> = self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_nd(&mut buf, self.grid, false);
        let scale = 1.0 / self.grid.len() as f64;
        buf.iter_mut().for_each(|c| *c *= scale);
        Spectrum {
            grid: self.grid,
            coeffs: buf,
        }
    }

    /// Nodal L² norm over ω (|ω| = 1).
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() / self.grid.len() as f64).sqrt()
    }

    /// ∫_ω f g.
    pub fn inner(&self, other: &PeriodicField) -> Result<f64> {
        self.check_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / self.grid.len() as f64)
    }

    /// Node coordinates and values, one row per node.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        match self.grid.dim {
            1 => out.push_str("x,value\n"),
            _ => out.push_str("x1,x2,value\n"),
        }
        for (i, v) in self.values.iter().enumerate() {
            let [x1, x2] = self.grid.coords(i);
            match self.grid.dim {
                1 => writeln!(out, "{x1},{v:e}").unwrap(),
                _ => writeln!(out, "{x1},{x2},{v:e}").unwrap(),
            }
        }
        out
    }
}

/// Fourier coefficients of a real periodic field.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    grid: PeriodicGrid,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn zeros(grid: PeriodicGrid) -> Self {
        Spectrum {
            grid,
            coeffs: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_coeffs(grid: PeriodicGrid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::NodeCountMismatch {
                expected: grid.len(),
                got: coeffs.len(),
            });
        }
        Ok(Spectrum { grid, coeffs })
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn to_field(&self) -> PeriodicField {
        let mut buf = self.coeffs.clone();
        fft_nd(&mut buf, self.grid, true);
        PeriodicField {
            grid: self.grid,
            values: buf.into_iter().map(|c| c.re).collect(),
        }
    }

    /// Multiplies every coefficient by `symbol(k)` where `k` is the physical
    /// wave vector `2π·j` and `nyquist` flags Nyquist-touching indices.
    pub fn apply_symbol(&self, symbol: impl Fn([f64; 2], bool) -> Complex64) -> Spectrum {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let j = self.grid.wavevector(i);
                let k = [TWO_PI * j[0] as f64, TWO_PI * j[1] as f64];
                c * symbol(k, self.grid.touches_nyquist(i))
            })
            .collect();
        Spectrum {
            grid: self.grid,
            coeffs,
        }
    }

    /// Spectral L² norm, `sqrt(Σ|c_k|²)`.
    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }
}

fn fft_nd(buf: &mut [Complex64], grid: PeriodicGrid, inverse: bool) {
    let n = grid.n;
    let fft = plan(n, inverse);
    match grid.dim {
        1 => fft.process(buf),
        _ => {
            // rows (contiguous x2 direction)
            fft.process(buf);
            // columns
            let mut col = vec![Complex64::new(0.0, 0.0); n];
            for j in 0..n {
                for i in 0..n {
                    col[i] = buf[i * n + j];
                }
                fft.process(&mut col);
                for i in 0..n {
                    buf[i * n + j] = col[i];
                }
            }
        }
    }
}

/// `∂^order f / ∂x_axis^order`, exact for band-limited fields.
///
/// Odd derivatives annihilate the Nyquist harmonic so that real fields stay
/// real.
pub fn spectral_derivative(f: &PeriodicField, order: u32, axis: usize) -> Result<PeriodicField> {
    if !(1..=6).contains(&order) {
        return Err(Error::OrderOutOfRange(order));
    }
    if axis >= f.grid.dim {
        return Err(Error::param("axis", format!("{axis} >= dim {}", f.grid.dim)));
    }
    Ok(derivative_spectrum(&f.to_spectrum(), order, axis).to_field())
}

pub(crate) fn derivative_spectrum(s: &Spectrum, order: u32, axis: usize) -> Spectrum {
    let grid = s.grid;
    let coeffs = s
        .coeffs
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let j = grid.wavevector(i)[axis];
            let idx = match grid.dim {
                1 => i,
                _ if axis == 0 => i / grid.n,
                _ => i % grid.n,
            };
            if order % 2 == 1 && grid.is_nyquist(idx) {
                return Complex64::new(0.0, 0.0);
            }
            let ik = Complex64::new(0.0, TWO_PI * j as f64);
            c * ik.powu(order)
        })
        .collect();
    Spectrum { grid, coeffs }
}

/// `(Δ')^power f`.
pub fn laplacian_power(f: &PeriodicField, power: u32) -> PeriodicField {
    f.to_spectrum()
        .apply_symbol(|k, _| Complex64::new((-(k[0] * k[0] + k[1] * k[1])).powi(power as i32), 0.0))
        .to_field()
}

/// Zeroth Fourier coefficient, i.e. the mean over ω.
pub fn mean_value(f: &PeriodicField) -> f64 {
    f.to_spectrum().mean()
}

/// Evaluates the product of `factors` on a grid refined by `pad` (zero-padded
/// spectra) and truncates back, suppressing aliasing of the product.
pub fn dealiased_product(factors: &[&PeriodicField], pad: f64) -> Result<PeriodicField> {
    let first = factors
        .first()
        .ok_or_else(|| Error::param("factors", "empty product"))?;
    let grid = first.grid;
    for f in factors {
        first.check_grid(f)?;
    }
    if grid.dim != 1 {
        // Products on the 2D torus are formed nodally.
        let mut values = vec![1.0; grid.len()];
        for f in factors {
            values.iter_mut().zip(&f.values).for_each(|(a, b)| *a *= b);
        }
        return PeriodicField::new(grid, values);
    }
    let n = grid.n;
    let m = (((n as f64) * pad).ceil() as usize).max(n);
    let m = m + (m % 2);
    let mut prod = vec![1.0; m];
    for f in factors {
        let padded = pad_1d(&f.to_spectrum().coeffs, n, m);
        let mut buf = padded;
        plan(m, true).process(&mut buf);
        prod.iter_mut().zip(&buf).for_each(|(a, b)| *a *= b.re);
    }
    let mut buf: Vec<Complex64> = prod.into_iter().map(|v| Complex64::new(v, 0.0)).collect();
    plan(m, false).process(&mut buf);
    let scale = 1.0 / m as f64;
    let mut coeffs = vec![Complex64::new(0.0, 0.0); n];
    for (i, c) in coeffs.iter_mut().enumerate() {
        let j = grid.wavenumber(i);
        if grid.is_nyquist(i) {
            // symmetric split keeps the truncated field real
            let a = buf[(n / 2) % m];
            let b = buf[m - n / 2];
            *c = 0.5 * (a + b) * scale;
        } else {
            *c = buf[j.rem_euclid(m as i64) as usize] * scale;
        }
    }
    Ok(Spectrum { grid, coeffs }.to_field())
}

fn pad_1d(coeffs: &[Complex64], n: usize, m: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); m];
    for (i, &c) in coeffs.iter().enumerate() {
        if i == n / 2 {
            out[n / 2] += 0.5 * c;
            out[m - n / 2] += 0.5 * c;
        } else {
            let j = if i < n / 2 { i as i64 } else { i as i64 - n as i64 };
            out[j.rem_euclid(m as i64) as usize] = c;
        }
    }
    out
}
