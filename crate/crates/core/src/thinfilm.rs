//! The lubrication-approximation family
//!
//! ```text
//! ∂tη = c (−1)^{(α−1)/2} ∂x(s η³ ∂x^α η) + ∂x(η³ ∂x Φ'(η)) − a ∂x(η v_D),
//! ```
//!
//! with `α ∈ {1, 3, 5}` (gravity, surface tension, plate bending), the linear
//! sixth-order reduced model `∂tη − c (Δ')³η = F`, and the stationary
//! Reynolds equation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{self, derivative_spectrum, PeriodicField, Spectrum};

/// Positivity floor below which a nonlinear step is retried with half the
/// step size.
pub const POSITIVITY_FLOOR: f64 = 1e-6;
pub const MAX_HALVINGS: u32 = 20;

/// `Φ'(η) = a · η^p`. Gravity is `p = 1`, a van der Waals type term `p = −3`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Potential {
    pub a: f64,
    pub p: i32,
}

impl Potential {
    pub fn derivative(&self, eta: f64) -> f64 {
        self.a * eta.powi(self.p)
    }
}

fn default_one() -> f64 {
    1.0
}

fn default_drift_prefactor() -> f64 {
    6.0
}

fn default_dealias() -> f64 {
    1.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThinFilmModel {
    pub alpha: u8,
    pub c: f64,
    #[serde(default = "default_one")]
    pub mobility_scale: f64,
    #[serde(default, rename = "potential_dPhi", skip_serializing_if = "Option::is_none")]
    pub potential: Option<Potential>,
    #[serde(default, rename = "v_D")]
    pub v_d: f64,
    /// Factor `a` in front of `∂x(η v_D)`.
    #[serde(default = "default_drift_prefactor")]
    pub drift_prefactor: f64,
    #[serde(default)]
    pub linearized: bool,
    /// Zero-padding factor for nodal products.
    #[serde(default = "default_dealias")]
    pub dealias: f64,
}

impl ThinFilmModel {
    pub fn new(alpha: u8, c: f64) -> Result<Self> {
        let m = ThinFilmModel {
            alpha,
            c,
            mobility_scale: 1.0,
            potential: None,
            v_d: 0.0,
            drift_prefactor: 6.0,
            linearized: false,
            dealias: 1.5,
        };
        m.validate()?;
        Ok(m)
    }

    /// `∂tη = c (−1)^{(α−1)/2} ∂x^{α+1} η`.
    pub fn linear(alpha: u8, c: f64) -> Result<Self> {
        let mut m = Self::new(alpha, c)?;
        m.linearized = true;
        Ok(m)
    }

    pub fn with_drift(mut self, v_d: f64) -> Self {
        self.v_d = v_d;
        self
    }

    pub fn with_potential(mut self, potential: Potential) -> Result<Self> {
        self.potential = Some(potential);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if ![1, 3, 5].contains(&self.alpha) {
            return Err(Error::param("alpha", format!("{} not in {{1,3,5}}", self.alpha)));
        }
        if !(self.c >= 0.0) {
            return Err(Error::param("c", "must be >= 0"));
        }
        if !(self.mobility_scale > 0.0) {
            return Err(Error::param("mobility_scale", "must be > 0"));
        }
        if self.linearized && self.potential.is_some() {
            return Err(Error::param(
                "potential_dPhi",
                "a linearized model cannot carry a potential",
            ));
        }
        if !(self.dealias >= 1.0) {
            return Err(Error::param("dealias", "padding factor must be >= 1"));
        }
        if !self.v_d.is_finite() || !self.drift_prefactor.is_finite() {
            return Err(Error::param("v_D", "must be finite"));
        }
        Ok(())
    }

    fn sign(&self) -> f64 {
        if (self.alpha / 2) % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Symbol magnitude `|k|^{α+1}` of the leading operator.
    fn leading_symbol(&self, k: f64) -> f64 {
        k.abs().powi(self.alpha as i32 + 1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilmState {
    pub eta: PeriodicField,
    pub t: f64,
}

impl FilmState {
    pub fn new(eta: PeriodicField, t: f64) -> Self {
        FilmState { eta, t }
    }

    pub fn mass(&self) -> f64 {
        spectral::mean_value(&self.eta)
    }
}

fn check_one_dimensional(eta: &PeriodicField) -> Result<()> {
    if eta.grid().dim() != 1 {
        return Err(Error::param("eta", "the film family is posed on a 1D grid"));
    }
    Ok(())
}

/// Right-hand side of the film equation, returned in divergence form (zero
/// mean).
pub fn rhs(model: &ThinFilmModel, eta: &PeriodicField) -> Result<PeriodicField> {
    Ok(rhs_spectrum(model, eta)?.to_field())
}

fn rhs_spectrum(model: &ThinFilmModel, eta: &PeriodicField) -> Result<Spectrum> {
    model.validate()?;
    check_one_dimensional(eta)?;
    if !eta.is_finite() {
        return Err(Error::InvalidProfile("non-finite film height".into()));
    }
    let hat = eta.to_spectrum();
    let drift = model.drift_prefactor * model.v_d;
    if model.linearized {
        let order = model.alpha as u32 + 1;
        let lead = derivative_spectrum(&hat, order, 0);
        let dx = derivative_spectrum(&hat, 1, 0);
        let coeffs = lead
            .coeffs()
            .iter()
            .zip(dx.coeffs())
            .map(|(&l, &d)| model.c * model.sign() * l - drift * d)
            .collect();
        return Spectrum::from_coeffs(eta.grid(), coeffs);
    }
    let min = eta.min();
    if !(min > 0.0) {
        return Err(Error::PositivityViolation { min_eta: min });
    }
    let d_alpha = derivative_spectrum(&hat, model.alpha as u32, 0).to_field();
    let lead = spectral::dealiased_product(&[eta, eta, eta, &d_alpha], model.dealias)?;
    let mut flux: Vec<f64> = lead
        .values()
        .iter()
        .zip(eta.values())
        .map(|(l, e)| model.c * model.sign() * model.mobility_scale * l - drift * e)
        .collect();
    if let Some(pot) = model.potential {
        let dphi = eta.map(|e| pot.derivative(e));
        let grad = spectral::spectral_derivative(&dphi, 1, 0)?;
        let term = spectral::dealiased_product(&[eta, eta, eta, &grad], model.dealias)?;
        flux.iter_mut().zip(term.values()).for_each(|(f, t)| *f += t);
    }
    let flux = PeriodicField::new(eta.grid(), flux)?;
    Ok(derivative_spectrum(&flux.to_spectrum(), 1, 0))
}

/// One exponential-time-differencing step of a linearized model; the
/// constant-coefficient operator is integrated exactly per Fourier mode.
fn etd_step(model: &ThinFilmModel, eta: &PeriodicField, h: f64) -> Result<PeriodicField> {
    let hat = eta.to_spectrum();
    let r = rhs_spectrum(model, eta)?;
    let grid = eta.grid();
    let coeffs = hat
        .coeffs()
        .iter()
        .zip(r.coeffs())
        .enumerate()
        .map(|(i, (&e, &n))| {
            let k = spectral::TWO_PI * grid.wavenumber(i) as f64;
            let lambda = model.c * model.leading_symbol(k);
            let z = lambda * h;
            // remainder: full rhs plus the part already handled implicitly
            let rem = n + lambda * e;
            (-z).exp() * e + h * phi1(z) * rem
        })
        .collect();
    let next = Spectrum::from_coeffs(grid, coeffs)?.to_field();
    if !next.is_finite() {
        return Err(Error::Internal("non-finite film height after step".into()));
    }
    Ok(next)
}

/// One linearly implicit step with the mobility lagged at `eta`:
///
/// ```text
/// u − h c ∂x(b ∂x D u) = η + h·(potential and drift terms at η),
/// ```
///
/// with `b = s η³` and `D = (−1)^{(α−1)/2} ∂x^{α−1}` (symbol `|k|^{α−1}`).
/// Since `D` is the variational derivative of the film energy, the energy
/// cannot grow for any `h` when the explicit terms vanish. The system is
/// symmetrized by `D` and solved by conjugate gradients, preconditioned
/// with the constant-coefficient operator frozen at the largest mobility.
fn lagged_step(model: &ThinFilmModel, eta: &PeriodicField, h: f64) -> Result<PeriodicField> {
    let min = eta.min();
    if !(min > 0.0) {
        return Err(Error::PositivityViolation { min_eta: min });
    }
    let grid = eta.grid();
    let mut f = eta.clone();
    if model.potential.is_some() || model.v_d != 0.0 {
        let explicit = ThinFilmModel {
            c: 0.0,
            ..model.clone()
        };
        let r = rhs_spectrum(&explicit, eta)?.to_field();
        f = f.zip_map(&r, |a, b| a + h * b)?;
    }
    let order = model.alpha as i32 - 1;
    let interior = |k: [f64; 2], nyq: bool| k[0] != 0.0 && !nyq;
    let d_op = |u: &PeriodicField| {
        u.to_spectrum()
            .apply_symbol(|k, nyq| {
                if interior(k, nyq) {
                    Complex64::new(k[0].abs().powi(order), 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .to_field()
    };
    let hc = h * model.c;
    let s = model.mobility_scale;
    let apply = |u: &PeriodicField| -> Result<PeriodicField> {
        let du = d_op(u);
        let w = derivative_spectrum(&du.to_spectrum(), 1, 0).to_field();
        let flux = spectral::dealiased_product(&[eta, eta, eta, &w], model.dealias)?;
        let k_du = derivative_spectrum(&flux.to_spectrum(), 1, 0).to_field().scaled(-s);
        du.zip_map(&d_op(&k_du), |a, b| a + hc * b)
    };
    let b_max = s * eta.max().powi(3);
    let precondition = |r: &PeriodicField| {
        r.to_spectrum()
            .apply_symbol(|k, nyq| {
                if interior(k, nyq) {
                    let dk = k[0].abs().powi(order);
                    Complex64::new(1.0 / (dk + hc * b_max * k[0] * k[0] * dk * dk), 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .to_field()
    };
    // mean and Nyquist components pass through unchanged
    let passthrough = f
        .to_spectrum()
        .apply_symbol(|k, nyq| Complex64::new(if interior(k, nyq) { 0.0 } else { 1.0 }, 0.0))
        .to_field();
    let rhs = d_op(&f);
    // stop on the preconditioned residual: the plain residual carries
    // round-off amplified by the top of the symbol
    let rhs_norm = rhs.inner(&precondition(&rhs))?.max(0.0).sqrt();
    let mut u = eta
        .to_spectrum()
        .apply_symbol(|k, nyq| Complex64::new(if interior(k, nyq) { 1.0 } else { 0.0 }, 0.0))
        .to_field();
    if rhs_norm > 0.0 {
        let mut r = rhs.sub(&apply(&u)?)?;
        let mut z = precondition(&r);
        let mut dir = z.clone();
        let mut rz = r.inner(&z)?;
        let tol = 1e-13 * rhs_norm;
        let mut converged = rz.max(0.0).sqrt() <= tol;
        for _ in 0..(10 * grid.n()).max(200) {
            if converged {
                break;
            }
            let ad = apply(&dir)?;
            let dad = dir.inner(&ad)?;
            if !(dad > 0.0) {
                break;
            }
            let a = rz / dad;
            u = u.zip_map(&dir, |x, y| x + a * y)?;
            r = r.zip_map(&ad, |x, y| x - a * y)?;
            z = precondition(&r);
            let rz_new = r.inner(&z)?;
            if rz_new.max(0.0).sqrt() <= tol {
                converged = true;
                break;
            }
            let beta = rz_new / rz;
            rz = rz_new;
            dir = z.zip_map(&dir, |x, y| x + beta * y)?;
        }
        if !converged {
            return Err(Error::Internal("implicit film solve did not converge".into()));
        }
    } else {
        u = PeriodicField::zeros(grid);
    }
    let next = u.add(&passthrough)?;
    if !next.is_finite() {
        return Err(Error::Internal("non-finite film height after step".into()));
    }
    Ok(next)
}

/// φ₁(z) = (1 − e^{−z}) / z.
pub(crate) fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 - 0.5 * z
    } else {
        -(-z).exp_m1() / z
    }
}

/// φ₂(z) = (z − 1 + e^{−z}) / z².
pub(crate) fn phi2(z: f64) -> f64 {
    if z.abs() < 1e-3 {
        0.5 - z / 6.0 + z * z / 24.0 - z * z * z / 120.0
    } else {
        (z + (-z).exp_m1()) / (z * z)
    }
}

/// Advances `state` by `dt`. Under nonlinear mobility the step is split
/// into halves (at most [`MAX_HALVINGS`] times) whenever the film would dip
/// below [`POSITIVITY_FLOOR`].
pub fn step(model: &ThinFilmModel, state: &FilmState, dt: f64) -> Result<FilmState> {
    if !(dt > 0.0) {
        return Err(Error::param("dt", "must be > 0"));
    }
    let mut eta = state.eta.clone();
    let mut elapsed = 0.0;
    let mut h = dt;
    let mut halvings = 0;
    while dt - elapsed > dt * 1e-12 {
        h = h.min(dt - elapsed);
        let attempt = if model.linearized {
            etd_step(model, &eta, h)
        } else {
            lagged_step(model, &eta, h)
        };
        let accepted = match &attempt {
            Ok(next) => model.linearized || next.min() >= POSITIVITY_FLOOR,
            Err(Error::PositivityViolation { .. }) | Err(Error::Internal(_)) => false,
            Err(_) => false,
        };
        if accepted {
            eta = attempt?;
            elapsed += h;
            continue;
        }
        if let Err(e) = &attempt {
            if !matches!(e, Error::PositivityViolation { .. } | Error::Internal(_)) {
                return Err(attempt.unwrap_err());
            }
        }
        if halvings == MAX_HALVINGS {
            return Err(Error::Breakdown {
                t: state.t + elapsed,
                reason: format!("positivity floor {POSITIVITY_FLOOR:e} unreachable after {MAX_HALVINGS} halvings"),
                last_state: Box::new(FilmState::new(eta, state.t + elapsed)),
            });
        }
        halvings += 1;
        h *= 0.5;
    }
    Ok(FilmState::new(eta, state.t + dt))
}

/// Runs `steps` steps, keeping every `record_every`-th state (and the last).
pub fn run(
    model: &ThinFilmModel,
    initial: FilmState,
    dt: f64,
    steps: usize,
    record_every: usize,
) -> Result<Vec<FilmState>> {
    let record_every = record_every.max(1);
    let mut out = vec![initial.clone()];
    let mut state = initial;
    for i in 1..=steps {
        state = step(model, &state, dt)?;
        if i % record_every == 0 || i == steps {
            out.push(state.clone());
        }
    }
    Ok(out)
}

/// Diagnostic energy: ½∫(∂x²η)² for α=5, ½∫(∂xη)² for α=3, ½∫η² for α=1 and
/// for linearized models.
pub fn film_energy(model: &ThinFilmModel, eta: &PeriodicField) -> f64 {
    let s = eta.to_spectrum();
    let order = if model.linearized {
        0
    } else {
        match model.alpha {
            5 => 2,
            3 => 1,
            _ => 0,
        }
    };
    let grid = eta.grid();
    0.5 * s
        .coeffs()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let j = grid.wavevector(i);
            let k2 = (spectral::TWO_PI).powi(2) * (j[0] * j[0] + j[1] * j[1]) as f64;
            c.norm_sqr() * k2.powi(order)
        })
        .sum::<f64>()
}

/// Solves `∂tη − c (Δ')³η = F` exactly per Fourier mode, with `F` sampled
/// at the step endpoints and interpolated linearly in between. The step is
/// `t_end / ceil(t_end / dt)`. Returns every step.
pub fn solve_linear_sixth(
    c: f64,
    forcing: impl Fn(f64) -> PeriodicField,
    eta0: &PeriodicField,
    t_end: f64,
    dt: f64,
) -> Result<Vec<FilmState>> {
    solve_linear_sixth_sampled(c, forcing, eta0, t_end, dt, 1)
}

/// As [`solve_linear_sixth`], keeping every `record_every`-th step (the
/// initial and final states are always kept).
pub fn solve_linear_sixth_sampled(
    c: f64,
    forcing: impl Fn(f64) -> PeriodicField,
    eta0: &PeriodicField,
    t_end: f64,
    dt: f64,
    record_every: usize,
) -> Result<Vec<FilmState>> {
    if !(c > 0.0) {
        return Err(Error::param("c", "must be > 0"));
    }
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::param("dt", "need dt > 0 and t_end >= 0"));
    }
    let steps = ((t_end / dt) - 1e-9).ceil().max(0.0) as usize;
    let h = if steps == 0 { 0.0 } else { t_end / steps as f64 };
    let grid = eta0.grid();
    let lambdas: Vec<f64> = (0..grid.len())
        .map(|i| {
            let j = grid.wavevector(i);
            let k2 = spectral::TWO_PI.powi(2) * (j[0] * j[0] + j[1] * j[1]) as f64;
            c * k2.powi(3)
        })
        .collect();
    let decay: Vec<f64> = lambdas.iter().map(|l| (-l * h).exp()).collect();
    let w1: Vec<f64> = lambdas.iter().map(|l| h * phi1(l * h)).collect();
    let w2: Vec<f64> = lambdas.iter().map(|l| h * phi2(l * h)).collect();

    let record_every = record_every.max(1);
    let mut hat = eta0.to_spectrum();
    let mut f_prev = forcing(0.0).to_spectrum();
    if f_prev.grid() != grid {
        return Err(Error::GridMismatch("forcing and initial data grids differ".into()));
    }
    let mut out = vec![FilmState::new(eta0.clone(), 0.0)];
    for n in 1..=steps {
        let t = n as f64 * h;
        let f_next = forcing(t).to_spectrum();
        let coeffs: Vec<Complex64> = hat
            .coeffs()
            .iter()
            .enumerate()
            .map(|(i, &e)| {
                let fp = f_prev.coeffs()[i];
                let fnx = f_next.coeffs()[i];
                decay[i] * e + w1[i] * fp + w2[i] * (fnx - fp)
            })
            .collect();
        hat = Spectrum::from_coeffs(grid, coeffs)?;
        f_prev = f_next;
        if n % record_every == 0 || n == steps {
            out.push(FilmState::new(hat.to_field(), t));
        }
    }
    Ok(out)
}

/// Zero-mean periodic pressure solving `−∂x(η³ ∂x p) = −6 ν v_D ∂x η`
/// (ν = 1 gives the classical nondimensional form).
pub fn solve_reynolds_stationary(eta: &PeriodicField, v_d: f64, nu: f64) -> Result<PeriodicField> {
    solve_reynolds_stationary_with_stats(eta, v_d, nu).map(|(p, _)| p)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReynoldsStats {
    pub iterations: usize,
    pub residual_l2: f64,
}

pub fn solve_reynolds_stationary_with_stats(
    eta: &PeriodicField,
    v_d: f64,
    nu: f64,
) -> Result<(PeriodicField, ReynoldsStats)> {
    check_one_dimensional(eta)?;
    if !(nu > 0.0) {
        return Err(Error::param("nu", "must be > 0"));
    }
    let min = eta.min();
    if !(min > 0.0) || !eta.is_finite() {
        return Err(Error::InvalidProfile(format!(
            "film height must be positive and finite (min = {min:e})"
        )));
    }
    let grid = eta.grid();
    let cube = eta.map(|e| e * e * e);
    let apply = |p: &PeriodicField| -> PeriodicField {
        let dp = derivative_spectrum(&p.to_spectrum(), 1, 0).to_field();
        let flux = dp.zip_map(&cube, |a, b| a * b).expect("same grid");
        derivative_spectrum(&flux.to_spectrum(), 1, 0).to_field().scaled(-1.0)
    };
    let deta = derivative_spectrum(&eta.to_spectrum(), 1, 0).to_field();
    let rhs = deta.scaled(-6.0 * nu * v_d);

    // Preconditioner: inverse of −a ∂x² on the non-constant, non-Nyquist modes.
    let a = 0.5 * (cube.max() + cube.min());
    let precondition = |r: &PeriodicField| -> PeriodicField {
        r.to_spectrum()
            .apply_symbol(|k, nyq| {
                let k2 = k[0] * k[0];
                if nyq || k2 == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(1.0 / (a * k2), 0.0)
                }
            })
            .to_field()
    };

    let rhs_norm = rhs.l2_norm();
    let mut p = PeriodicField::zeros(grid);
    let mut iterations = 0;
    if rhs_norm > 0.0 {
        let mut r = rhs.clone();
        let mut z = precondition(&r);
        let mut d = z.clone();
        let mut rz = r.inner(&z)?;
        let tol = 1e-14 * rhs_norm;
        let max_iter = 20 * grid.n();
        while iterations < max_iter {
            let ad = apply(&d);
            let dad = d.inner(&ad)?;
            if dad <= 0.0 {
                break;
            }
            let step = rz / dad;
            p = p.zip_map(&d, |a, b| a + step * b)?;
            r = r.zip_map(&ad, |a, b| a - step * b)?;
            iterations += 1;
            if r.l2_norm() <= tol {
                break;
            }
            z = precondition(&r);
            let rz_new = r.inner(&z)?;
            let beta = rz_new / rz;
            rz = rz_new;
            d = z.zip_map(&d, |a, b| a + beta * b)?;
        }
    }
    let m = spectral::mean_value(&p);
    let p = p.map(|v| v - m);
    let residual_l2 = apply(&p).sub(&rhs)?.l2_norm();
    Ok((
        p,
        ReynoldsStats {
            iterations,
            residual_l2,
        },
    ))
}
