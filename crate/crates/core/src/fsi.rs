//! Full-order linear solver: Stokes flow in the thin channel under a
//! visco-elastic plate, posed on the reference channel Ω₋ in rescaled time.
//!
//! Unknowns are kept unrescaled: the fluid velocity and pressure of the
//! thin domain (sampled on Ω₋), the plate displacement η and its physical
//! velocity. Every horizontal Fourier mode is an independent problem.
//!
//! In a mode `k ≠ 0` the velocity is discretized in an exactly divergence
//! free way. The vertical component `b(y)` is a polynomial with
//! `b(−1) = b'(−1) = b'(0) = 0` and `b(0) = w` (the plate velocity); the
//! horizontal component along `k` is `i b'/(ε|k|)`, the one across `k`
//! (only for d = 3) is an independent Dirichlet profile. The pressure drops
//! out of the weak form and is recovered afterwards from the horizontal
//! momentum balance. The remaining system is symmetric positive definite and
//! is factorized once per mode.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelField;
use crate::error::{Error, Result};
use crate::profile::{HarmonicSum, Phase, TimeRamp};
use crate::scaling::{validate_theorem_regime, ModelParams, RegimeVerdict};
use crate::spectral::{PeriodicField, PeriodicGrid, Spectrum};
use crate::vertical::{gauss_legendre, legendre_table, VerticalNodes};

fn default_vertical() -> Vec<f64> {
    vec![1.0]
}

/// `horizontal(x') · Σ_i vertical[i] y^i · ramp(t)` acting on one velocity
/// component. Components `0..dim` are horizontal, `dim` is vertical.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingTerm {
    pub component: usize,
    pub horizontal: HarmonicSum,
    #[serde(default = "default_vertical")]
    pub vertical: Vec<f64>,
    #[serde(default)]
    pub ramp: TimeRamp,
}

impl ForcingTerm {
    fn poly(&self, y: f64) -> f64 {
        self.vertical.iter().rev().fold(0.0, |acc, c| acc * y + c)
    }

    /// `∫_0^y` of the vertical polynomial.
    fn poly_antiderivative(&self, y: f64) -> f64 {
        self.vertical
            .iter()
            .enumerate()
            .rev()
            .fold(0.0, |acc, (i, c)| acc * y + c / (i + 1) as f64)
            * y
    }

    fn sup_vertical(&self) -> f64 {
        self.vertical.iter().map(|c| c.abs()).sum()
    }
}

/// Fluid volume force, a finite sum of separable terms.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Forcing {
    #[serde(default)]
    pub terms: Vec<ForcingTerm>,
}

impl Forcing {
    pub fn none() -> Self {
        Forcing::default()
    }

    /// One harmonic `amplitude · sin|cos(2π k·x')`, constant in `y`.
    pub fn single(component: usize, amplitude: f64, k: [i64; 2], phase: Phase, ramp: TimeRamp) -> Self {
        Forcing {
            terms: vec![ForcingTerm {
                component,
                horizontal: HarmonicSum {
                    mean: 0.0,
                    terms: vec![crate::profile::Harmonic {
                        amplitude,
                        k,
                        phase,
                    }],
                },
                vertical: vec![1.0],
                ramp,
            }],
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut f = self.clone();
        for t in &mut f.terms {
            t.vertical.iter_mut().for_each(|c| *c *= a);
        }
        f
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| {
            t.vertical.iter().all(|&c| c == 0.0)
                || (t.horizontal.mean == 0.0 && t.horizontal.terms.iter().all(|h| h.amplitude == 0.0))
        })
    }

    pub fn eval(&self, component: usize, x1: f64, x2: f64, y: f64, t: f64) -> f64 {
        self.terms
            .iter()
            .filter(|term| term.component == component)
            .map(|term| term.horizontal.eval(x1, x2) * term.poly(y) * term.ramp.eval(t))
            .sum()
    }

    /// Component `component` sampled on the horizontal grid at height `y`.
    pub fn sample(&self, component: usize, grid: PeriodicGrid, y: f64, t: f64) -> PeriodicField {
        PeriodicField::from_fn(grid, |x1, x2| self.eval(component, x1, x2, y, t))
    }

    /// Crude bound on `‖f‖_∞`.
    pub fn sup_bound(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let h = t.horizontal.mean.abs() + t.horizontal.terms.iter().map(|h| h.amplitude.abs()).sum::<f64>();
                h * t.sup_vertical()
            })
            .sum()
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        for t in &self.terms {
            if t.component > dim {
                return Err(Error::param(
                    "forcing",
                    format!("component {} out of range 0..={dim}", t.component),
                ));
            }
            if t.vertical.is_empty() {
                return Err(Error::param("forcing", "empty vertical polynomial"));
            }
            if let TimeRamp::Gaussian { t_ramp } = t.ramp {
                if !(t_ramp > 0.0) {
                    return Err(Error::param("forcing", "t_ramp must be > 0"));
                }
            }
            if dim == 1 && t.horizontal.terms.iter().any(|h| h.k[1] != 0) {
                return Err(Error::param("forcing", "k[1] must vanish on a 1D plate"));
            }
        }
        if !self.sup_bound().is_finite() {
            return Err(Error::param("forcing", "non-finite coefficients"));
        }
        Ok(())
    }
}

/// Everything a full-order run needs.
#[derive(Clone, Debug)]
pub struct FsiParams {
    pub model: ModelParams,
    pub grid: PeriodicGrid,
    pub vnodes: Arc<VerticalNodes>,
    /// Step in rescaled time.
    pub dt: f64,
    pub forcing: Forcing,
    /// Snapshot every this many steps in [`run_fsi`] (the final state is
    /// always kept).
    pub output_every: usize,
}

impl FsiParams {
    pub fn new(model: ModelParams, n: usize, m: usize, dt: f64, forcing: Forcing) -> Result<Self> {
        let grid = PeriodicGrid::new(model.dim, n)?;
        let p = FsiParams {
            model,
            grid,
            vnodes: Arc::new(VerticalNodes::new(m)?),
            dt,
            forcing,
            output_every: 1,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_output_every(mut self, every: usize) -> Self {
        self.output_every = every.max(1);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !self.model.is_coupled() {
            return Err(Error::InvalidRegime(format!(
                "tau = {} but the coupled problem needs tau = kappa - 3 = {}",
                self.model.tau(),
                self.model.kappa - crate::scaling::Exponent::integer(3)
            )));
        }
        if self.grid.dim() != self.model.dim {
            return Err(Error::GridMismatch(format!(
                "grid dimension {} vs model dim {}",
                self.grid.dim(),
                self.model.dim
            )));
        }
        if self.vnodes.m() < 6 {
            return Err(Error::param("m", "the channel solver needs at least 6 vertical nodes"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::param("dt", "must be > 0"));
        }
        self.forcing.validate(self.model.dim)
    }

    fn m(&self) -> usize {
        self.vnodes.m()
    }
}

// ---------------------------------------------------------------------------
// vertical bases

/// Basis values (rows: points, columns: functions) and derivatives in `s`.
struct Tabulated {
    d: [DMatrix<f64>; 4],
}

/// Coupled basis on s ∈ [−1, 1]: the top function `(1+s)²(2−s)/4` followed
/// by Shen's clamped combinations `L_j + α_j L_{j+2} + β_j L_{j+4}`.
fn coupled_basis(m: usize, points: &[f64]) -> Tabulated {
    let nb = m - 3;
    let mut d: [DMatrix<f64>; 4] = std::array::from_fn(|_| DMatrix::zeros(points.len(), nb));
    for (r, &s) in points.iter().enumerate() {
        d[0][(r, 0)] = (1.0 + s).powi(2) * (2.0 - s) / 4.0;
        d[1][(r, 0)] = 0.75 * (1.0 - s * s);
        d[2][(r, 0)] = -1.5 * s;
        d[3][(r, 0)] = -1.5;
        let l = legendre_table(m - 1, s);
        for j in 0..nb - 1 {
            let jf = j as f64;
            let a = -2.0 * (2.0 * jf + 5.0) / (2.0 * jf + 7.0);
            let b = (2.0 * jf + 3.0) / (2.0 * jf + 7.0);
            for (o, lo) in l.iter().enumerate() {
                d[o][(r, j + 1)] = lo[j] + a * lo[j + 2] + b * lo[j + 4];
            }
        }
    }
    Tabulated { d }
}

/// `L_j − L_{j+2}`, vanishing at both walls.
fn dirichlet_basis(m: usize, points: &[f64]) -> Tabulated {
    let nb = m - 2;
    let mut d: [DMatrix<f64>; 4] = std::array::from_fn(|_| DMatrix::zeros(points.len(), nb));
    for (r, &s) in points.iter().enumerate() {
        let l = legendre_table(m - 1, s);
        for j in 0..nb {
            for (o, lo) in l.iter().enumerate() {
                d[o][(r, j)] = lo[j] - lo[j + 2];
            }
        }
    }
    Tabulated { d }
}

/// `∫_{−1}^{0} (∂_y^p u)(∂_y^q v) dy` for all basis pairs.
fn gram(t: &Tabulated, w: &[f64], p: usize, q: usize) -> DMatrix<f64> {
    let scale = 2f64.powi((p + q) as i32);
    let mut wp = t.d[p].clone();
    for (r, &wr) in w.iter().enumerate() {
        wp.row_mut(r).scale_mut(0.5 * wr * scale);
    }
    wp.transpose() * &t.d[q]
}

struct Quadrature {
    s: Vec<f64>,
    w: Vec<f64>,
}

impl Quadrature {
    fn new(m: usize, extra_degree: usize) -> Self {
        let (s, w) = gauss_legendre(m + 2 + extra_degree / 2 + 1);
        Quadrature { s, w }
    }

    fn y(&self) -> impl Iterator<Item = f64> + '_ {
        self.s.iter().map(|s| 0.5 * (s - 1.0))
    }
}

// ---------------------------------------------------------------------------
// mode systems

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ModeKind {
    /// `k ≠ 0`: plate-coupled vertical profile.
    Coupled,
    /// `k = 0`: mean horizontal flow only; the plate mode stays at rest.
    Mean,
}

/// Backward-Euler operator of one Fourier mode.
///
/// For a coupled mode the unknown is the coefficient vector `x` of the
/// vertical velocity, `x[0]` being the plate velocity `w`. The step solves
///
/// ```text
/// [M/(T dt) + K + B_ε|k|⁴ T dt e₀e₀ᵀ] x' = M x/(T dt) − B_ε|k|⁴ η e₀ + L
/// ```
///
/// with `M` the fluid plus plate mass and `K` the viscous plus visco-elastic
/// form.
pub struct ModeSystem {
    pub k: [i64; 2],
    pub kind: ModeKind,
    kvec: [f64; 2],
    kmag: f64,
    /// Fluid mass ε ρ_f ∫(|a|² + |b|²) as a form on `x`.
    pub fluid_mass: DMatrix<f64>,
    /// Plate mass ρ_s^ε e₀e₀ᵀ.
    pub plate_mass: DMatrix<f64>,
    /// Viscous form ν ε ∫(|k|²|u|² + ε⁻²|∂_y u|²).
    pub viscous: DMatrix<f64>,
    /// Visco-elastic form ϑ|k|⁴ e₀e₀ᵀ.
    pub visco_elastic: DMatrix<f64>,
    /// Dirichlet profile (transverse or mean flow) mass and viscous forms.
    pub dir_mass: DMatrix<f64>,
    pub dir_viscous: DMatrix<f64>,
    bending: f64,
    step_scale: f64,
    chol: Option<(Cholesky<f64, Dyn>, DVector<f64>)>,
    dir_chol: (Cholesky<f64, Dyn>, DVector<f64>),
}

impl ModeSystem {
    /// Full coupled matrix `M/(T dt) + K + B_ε|k|⁴ T dt e₀e₀ᵀ`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut a = (&self.fluid_mass + &self.plate_mass) / self.step_scale + &self.viscous + &self.visco_elastic;
        if self.kind == ModeKind::Coupled {
            a[(0, 0)] += self.bending * self.step_scale;
        }
        a
    }

    pub fn dir_matrix(&self) -> DMatrix<f64> {
        &self.dir_mass / self.step_scale + &self.dir_viscous
    }

    /// `T · dt`.
    pub fn step_scale(&self) -> f64 {
        self.step_scale
    }

    pub fn n_coupled(&self) -> usize {
        self.fluid_mass.nrows()
    }

    pub fn n_dirichlet(&self) -> usize {
        self.dir_mass.nrows()
    }

    fn transverse(&self) -> [f64; 2] {
        [-self.kvec[1] / self.kmag, self.kvec[0] / self.kmag]
    }

    fn along(&self) -> [f64; 2] {
        [self.kvec[0] / self.kmag, self.kvec[1] / self.kmag]
    }
}

fn equilibrated_cholesky(a: &DMatrix<f64>, k: [i64; 2]) -> Result<(Cholesky<f64, Dyn>, DVector<f64>)> {
    let n = a.nrows();
    let mut s = DVector::zeros(n);
    for i in 0..n {
        let d = a[(i, i)];
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Assembly {
                mode: k,
                reason: format!("non-positive diagonal entry {d:e} at {i}"),
            });
        }
        s[i] = 1.0 / d.sqrt();
    }
    let scaled = DMatrix::from_fn(n, n, |i, j| s[i] * a[(i, j)] * s[j]);
    let chol = Cholesky::new(scaled).ok_or_else(|| Error::Assembly {
        mode: k,
        reason: "matrix is not positive definite".into(),
    })?;
    Ok((chol, s))
}

fn chol_solve(f: &(Cholesky<f64, Dyn>, DVector<f64>), rhs: &DVector<f64>) -> DVector<f64> {
    let (chol, s) = f;
    let r = rhs.component_mul(s);
    chol.solve(&r).component_mul(s)
}

/// Assembles and factorizes the backward-Euler operator of mode `k`.
pub fn assemble_mode_system(params: &FsiParams, k: [i64; 2], dt: f64) -> Result<ModeSystem> {
    params.validate()?;
    if !(dt > 0.0) {
        return Err(Error::param("dt", "must be > 0"));
    }
    if params.grid.flat_index(k).is_none() {
        return Err(Error::Assembly {
            mode: k,
            reason: "wavenumber outside the grid lattice".into(),
        });
    }
    let mp = &params.model;
    let m = params.m();
    let eps = mp.eps;
    let kvec = [crate::spectral::TWO_PI * k[0] as f64, crate::spectral::TWO_PI * k[1] as f64];
    let k2 = kvec[0] * kvec[0] + kvec[1] * kvec[1];
    let kmag = k2.sqrt();
    let t_scale = mp.time_scale();
    let step_scale = t_scale * dt;
    let quad = Quadrature::new(m, 0);

    let dir = dirichlet_basis(m, &quad.s);
    let d0 = gram(&dir, &quad.w, 0, 0);
    let d1 = gram(&dir, &quad.w, 1, 1);
    let dir_mass = &d0 * (eps * mp.rho_f);
    let dir_viscous = (&d0 * k2 + &d1 / (eps * eps)) * (mp.nu * eps);
    let dir_chol = equilibrated_cholesky(&(&dir_mass / step_scale + &dir_viscous), k)?;

    if k == [0, 0] {
        let empty = DMatrix::zeros(0, 0);
        return Ok(ModeSystem {
            k,
            kind: ModeKind::Mean,
            kvec,
            kmag,
            fluid_mass: empty.clone(),
            plate_mass: empty.clone(),
            viscous: empty.clone(),
            visco_elastic: empty,
            dir_mass,
            dir_viscous,
            bending: 0.0,
            step_scale,
            chol: None,
            dir_chol,
        });
    }

    let cb = coupled_basis(m, &quad.s);
    let g0 = gram(&cb, &quad.w, 0, 0);
    let g1 = gram(&cb, &quad.w, 1, 1);
    let g2 = gram(&cb, &quad.w, 2, 2);
    let e2 = eps * eps;
    // |a|² = |b'|²/(ε²|k|²) and |a'|² = |b''|²/(ε²|k|²)
    let fluid_mass = (&g0 + &g1 / (e2 * k2)) * (eps * mp.rho_f);
    let viscous = (&g0 * k2 + &g1 * (2.0 / e2) + &g2 / (e2 * e2 * k2)) * (mp.nu * eps);
    let nb = m - 3;
    let mut plate_mass = DMatrix::zeros(nb, nb);
    plate_mass[(0, 0)] = mp.structure_density();
    let mut visco_elastic = DMatrix::zeros(nb, nb);
    visco_elastic[(0, 0)] = mp.theta * k2 * k2;
    let bending = mp.rigidity() * k2 * k2;

    let mut sys = ModeSystem {
        k,
        kind: ModeKind::Coupled,
        kvec,
        kmag,
        fluid_mass,
        plate_mass,
        viscous,
        visco_elastic,
        dir_mass,
        dir_viscous,
        bending,
        step_scale,
        chol: None,
        dir_chol,
    };
    sys.chol = Some(equilibrated_cholesky(&sys.matrix(), k)?);
    Ok(sys)
}

// ---------------------------------------------------------------------------
// modal state

#[derive(Clone, Debug, PartialEq)]
struct CVec {
    re: DVector<f64>,
    im: DVector<f64>,
}

impl CVec {
    fn zeros(n: usize) -> Self {
        CVec {
            re: DVector::zeros(n),
            im: DVector::zeros(n),
        }
    }

    fn form(&self, a: &DMatrix<f64>) -> f64 {
        self.re.dot(&(a * &self.re)) + self.im.dot(&(a * &self.im))
    }

    /// `Re(selfᴴ other)`.
    fn dot_re(&self, other: &CVec) -> f64 {
        self.re.dot(&other.re) + self.im.dot(&other.im)
    }

    fn sub(&self, other: &CVec) -> CVec {
        CVec {
            re: &self.re - &other.re,
            im: &self.im - &other.im,
        }
    }

    fn at(&self, i: usize) -> Complex64 {
        Complex64::new(self.re[i], self.im[i])
    }

    fn axpy(&mut self, a: Complex64, x: &CVec) {
        self.re += &x.re * a.re - &x.im * a.im;
        self.im += &x.im * a.re + &x.re * a.im;
    }

    fn apply(&self, mat: &DMatrix<f64>) -> CVec {
        CVec {
            re: mat * &self.re,
            im: mat * &self.im,
        }
    }

    fn is_zero(&self) -> bool {
        self.re.iter().chain(self.im.iter()).all(|&v| v == 0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
struct ModeState {
    /// Coupled coefficients (empty for the mean mode).
    x: CVec,
    /// Dirichlet profiles: the transverse flow for d = 3, every horizontal
    /// component for the mean mode.
    q: Vec<CVec>,
    eta: Complex64,
}

impl ModeState {
    fn is_zero(&self) -> bool {
        self.eta == Complex64::new(0.0, 0.0) && self.x.is_zero() && self.q.iter().all(CVec::is_zero)
    }
}

/// Coupled state of fluid and plate.
#[derive(Clone, Debug)]
pub struct FsiState {
    /// Velocity components on Ω₋; the first `dim` are horizontal, the last
    /// is vertical.
    pub v: Vec<ChannelField>,
    pub p: ChannelField,
    pub eta: PeriodicField,
    /// Plate velocity with respect to physical time; equals the top trace
    /// of the vertical velocity.
    pub eta_t: PeriodicField,
    /// Rescaled time.
    pub t: f64,
    modal: Vec<Option<ModeState>>,
}

impl FsiState {
    /// Fluid and plate at rest (trivial initial data).
    pub fn zeros(params: &FsiParams) -> Self {
        let grid = params.grid;
        let m = params.m();
        FsiState {
            v: vec![ChannelField::zeros(grid, m); params.model.dim + 1],
            p: ChannelField::zeros(grid, m),
            eta: PeriodicField::zeros(grid),
            eta_t: PeriodicField::zeros(grid),
            t: 0.0,
            modal: vec![None; grid.len()],
        }
    }

    /// Scaled divergence, kinematic trace and zero-mean checks.
    pub fn invariants(&self, params: &FsiParams) -> Result<InvariantReport> {
        let grid = params.grid;
        let dim = params.model.dim;
        let eps = params.model.eps;
        let vn = &params.vnodes;
        let dy = vn.diff_matrix();
        let vert = &self.v[dim];
        let dv3 = vert.apply_vertical(&dy);
        let mut div = dv3.scaled(1.0 / eps);
        let mut grad_sq = ChannelField::zeros(grid, vn.m());
        for comp in &self.v {
            let dyc = comp.apply_vertical(&dy).scaled(1.0 / eps);
            grad_sq = grad_sq.add(&square(&dyc))?;
            for axis in 0..dim {
                let dx = comp.map_layers(|l| crate::spectral::spectral_derivative(l, 1, axis).expect("order 1"));
                grad_sq = grad_sq.add(&square(&dx))?;
            }
        }
        for axis in 0..dim {
            let dx = self.v[axis].map_layers(|l| crate::spectral::spectral_derivative(l, 1, axis).expect("order 1"));
            div = div.add(&dx)?;
        }
        let div_norm = thin_l2(&square(&div), vn)?;
        let grad_norm = thin_l2(&grad_sq, vn)?;
        let top = vn.m() - 1;
        let mut horizontal_top: f64 = 0.0;
        for comp in &self.v[..dim] {
            horizontal_top = comp
                .layer_slice(top)
                .iter()
                .chain(comp.layer_slice(0))
                .fold(horizontal_top, |a, v| a.max(v.abs()));
        }
        let kinematic = vert
            .layer_slice(top)
            .iter()
            .zip(self.eta_t.values())
            .fold(0.0f64, |a, (v, w)| a.max((v - w).abs()));
        let bottom = vert.layer_slice(0).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        Ok(InvariantReport {
            divergence: div_norm,
            gradient: grad_norm,
            horizontal_trace: horizontal_top,
            kinematic_trace: kinematic.max(bottom),
            eta_mean: crate::spectral::mean_value(&self.eta),
            eta_max: self.eta.values().iter().fold(0.0f64, |a, v| a.max(v.abs())),
        })
    }
}

fn square(f: &ChannelField) -> ChannelField {
    let layers = f.layers().iter().map(|l| l.map(|v| v * v)).collect();
    ChannelField::from_layers(layers).expect("same grid")
}

fn thin_l2(sq: &ChannelField, vn: &VerticalNodes) -> Result<f64> {
    let col = sq.vertical_integral(vn, |_| 1.0)?;
    Ok(crate::spectral::mean_value(&col).max(0.0).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InvariantReport {
    /// ‖div_ε v‖ on Ω₋.
    pub divergence: f64,
    /// ‖∇_ε v‖ on Ω₋.
    pub gradient: f64,
    /// max |v_h| on the walls.
    pub horizontal_trace: f64,
    /// max |v₃ − ∂tη| on top and |v₃| at the bottom.
    pub kinematic_trace: f64,
    pub eta_mean: f64,
    pub eta_max: f64,
}

impl InvariantReport {
    pub fn holds(&self) -> bool {
        self.divergence <= 1e-9 * self.gradient.max(f64::MIN_POSITIVE)
            && self.horizontal_trace <= 1e-13 * (1.0 + self.gradient)
            && self.kinematic_trace == 0.0
            && self.eta_mean.abs() <= 1e-13 * self.eta_max
    }
}

// ---------------------------------------------------------------------------
// energy ledger

/// One row per time step. Dissipation and work are accumulated over
/// physical time; energies are instantaneous.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub step: usize,
    /// Rescaled time.
    pub t: f64,
    pub fluid_kinetic: f64,
    pub plate_kinetic: f64,
    pub bending: f64,
    pub viscous_dissipation: f64,
    pub viscoelastic_dissipation: f64,
    pub work: f64,
    /// Accumulated numerical dissipation of backward Euler.
    pub numerical_dissipation: f64,
}

impl LedgerRow {
    pub fn energy(&self) -> f64 {
        self.fluid_kinetic + self.plate_kinetic + self.bending
    }

    pub fn dissipation(&self) -> f64 {
        self.viscous_dissipation + self.viscoelastic_dissipation
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub rows: Vec<LedgerRow>,
}

impl EnergyLedger {
    pub fn last(&self) -> Option<&LedgerRow> {
        self.rows.last()
    }

    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from(
            "step,t,fluid_kinetic,plate_kinetic,bending,viscous_dissipation,viscoelastic_dissipation,work,numerical_dissipation\n",
        );
        for r in &self.rows {
            writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                r.step,
                r.t,
                r.fluid_kinetic,
                r.plate_kinetic,
                r.bending,
                r.viscous_dissipation,
                r.viscoelastic_dissipation,
                r.work,
                r.numerical_dissipation
            )
            .unwrap();
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct ModeEnergy {
    fluid_kinetic: f64,
    plate_kinetic: f64,
    bending: f64,
    viscous: f64,
    viscoelastic: f64,
    work: f64,
    numerical: f64,
}

// ---------------------------------------------------------------------------
// solver

/// Load of one forcing term on one mode, for unit ramp.
struct TermLoad {
    ramp: TimeRamp,
    coupled: CVec,
    dir: Vec<CVec>,
    /// Coupled modes: `−i f̂_∥` at the vertical nodes. Mean mode:
    /// `ε ∫_0^y f̂₃`.
    pressure: Vec<Complex64>,
}

struct ActiveMode {
    flat: usize,
    sys: ModeSystem,
    loads: Vec<TermLoad>,
}

/// Nodal evaluation of the bases at the vertical nodes.
struct NodalBases {
    coupled: [DMatrix<f64>; 4],
    dir: DMatrix<f64>,
}

/// Caches one factorization per active mode; steps all of them in parallel.
pub struct FsiSolver {
    params: FsiParams,
    modes: Vec<ActiveMode>,
    nodal: NodalBases,
}

impl FsiSolver {
    /// Solver for the modes carrying forcing or nonzero data in `initial`.
    pub fn new(params: &FsiParams, initial: &FsiState) -> Result<Self> {
        params.validate()?;
        let grid = params.grid;
        let m = params.m();
        let dim = params.model.dim;
        let eps = params.model.eps;

        // horizontal Fourier coefficients of every forcing term
        let term_coeffs: Vec<Spectrum> = params
            .forcing
            .terms
            .iter()
            .map(|t| t.horizontal.sample(grid).to_spectrum())
            .collect();
        let mut flats: Vec<usize> = (0..grid.len())
            .filter(|&i| !grid.touches_nyquist(i))
            .filter(|&i| {
                let forced = params.forcing.terms.iter().zip(&term_coeffs).any(|(t, c)| {
                    c.coeffs()[i].norm() > 1e-14 * (1.0 + t.horizontal.mean.abs()) && t.vertical.iter().any(|&v| v != 0.0)
                });
                let seeded = initial.modal.get(i).and_then(|s| s.as_ref()).is_some_and(|s| !s.is_zero());
                forced || seeded
            })
            .collect();
        flats.sort_unstable();

        let max_deg = params.forcing.terms.iter().map(|t| t.vertical.len() - 1).max().unwrap_or(0);
        let quad = Quadrature::new(m, max_deg);
        let qy: Vec<f64> = quad.y().collect();
        let cb = coupled_basis(m, &quad.s);
        let db = dirichlet_basis(m, &quad.s);
        let node_s: Vec<f64> = params.vnodes.nodes().iter().map(|y| 2.0 * y + 1.0).collect();
        let mut nodal_c = coupled_basis(m, &node_s).d;
        let mut nodal_d = dirichlet_basis(m, &node_s).d;
        // exact wall values
        let top = m - 1;
        for mat in nodal_c.iter_mut().take(2) {
            mat.row_mut(0).fill(0.0);
        }
        nodal_c[0].row_mut(top).fill(0.0);
        nodal_c[0][(top, 0)] = 1.0;
        nodal_c[1].row_mut(top).fill(0.0);
        nodal_d[0].row_mut(0).fill(0.0);
        nodal_d[0].row_mut(top).fill(0.0);
        let nodal = NodalBases {
            coupled: nodal_c,
            dir: nodal_d[0].clone(),
        };

        let dt = params.dt;
        let built: Vec<Result<ActiveMode>> = flats
            .par_iter()
            .map(|&flat| {
                let k = grid.wavevector(flat);
                let sys = assemble_mode_system(params, k, dt)?;
                let loads = params
                    .forcing
                    .terms
                    .iter()
                    .zip(&term_coeffs)
                    .map(|(term, coeffs)| {
                        let h = coeffs.coeffs()[flat];
                        term_load(term, h, &sys, dim, eps, &quad, &qy, &cb, &db, params)
                    })
                    .collect();
                Ok(ActiveMode { flat, sys, loads })
            })
            .collect();
        let modes = built.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(FsiSolver {
            params: params.clone(),
            modes,
            nodal,
        })
    }

    pub fn params(&self) -> &FsiParams {
        &self.params
    }

    /// Wavenumbers actually solved for.
    pub fn active_modes(&self) -> Vec<[i64; 2]> {
        self.modes.iter().map(|a| a.sys.k).collect()
    }

    fn empty_mode(&self, am: &ActiveMode) -> ModeState {
        let nq = match am.sys.kind {
            ModeKind::Coupled => usize::from(self.params.model.dim == 2),
            ModeKind::Mean => self.params.model.dim,
        };
        ModeState {
            x: CVec::zeros(am.sys.n_coupled()),
            q: vec![CVec::zeros(am.sys.n_dirichlet()); nq],
            eta: Complex64::new(0.0, 0.0),
        }
    }

    fn current(&self, am: &ActiveMode, state: &FsiState) -> ModeState {
        state
            .modal
            .get(am.flat)
            .and_then(|s| s.clone())
            .unwrap_or_else(|| self.empty_mode(am))
    }

    fn advance_mode(&self, am: &ActiveMode, st: &ModeState, t_next: f64) -> (ModeState, ModeEnergy) {
        let sys = &am.sys;
        let h = sys.step_scale;
        let ramps: Vec<f64> = am.loads.iter().map(|l| l.ramp.eval(t_next)).collect();
        let mut out = st.clone();
        let mut e = ModeEnergy::default();

        if sys.kind == ModeKind::Coupled {
            let mass = &sys.fluid_mass + &sys.plate_mass;
            let mut load = CVec::zeros(sys.n_coupled());
            for (l, &r) in am.loads.iter().zip(&ramps) {
                load.axpy(Complex64::new(r, 0.0), &l.coupled);
            }
            let mut rhs = st.x.apply(&mass);
            rhs.re /= h;
            rhs.im /= h;
            rhs.re[0] -= sys.bending * st.eta.re;
            rhs.im[0] -= sys.bending * st.eta.im;
            rhs.re += &load.re;
            rhs.im += &load.im;
            let chol = sys.chol.as_ref().expect("coupled mode is factorized");
            let x = CVec {
                re: chol_solve(chol, &rhs.re),
                im: chol_solve(chol, &rhs.im),
            };
            let w = x.at(0);
            let eta = st.eta + w * h;
            let dx = x.sub(&st.x);
            let deta = eta - st.eta;
            e.fluid_kinetic += 0.5 * x.form(&sys.fluid_mass);
            e.plate_kinetic += 0.5 * x.form(&sys.plate_mass);
            e.bending += 0.5 * sys.bending * eta.norm_sqr();
            e.viscous += x.form(&sys.viscous);
            e.viscoelastic += x.form(&sys.visco_elastic);
            e.work += load.dot_re(&x);
            e.numerical += 0.5 * dx.form(&mass) + 0.5 * sys.bending * deta.norm_sqr();
            out.x = x;
            out.eta = eta;
        }

        let dir_a = &sys.dir_mass / h;
        for (c, q) in st.q.iter().enumerate() {
            let mut load = CVec::zeros(sys.n_dirichlet());
            for (l, &r) in am.loads.iter().zip(&ramps) {
                load.axpy(Complex64::new(r, 0.0), &l.dir[c]);
            }
            let mut rhs = q.apply(&dir_a);
            rhs.re += &load.re;
            rhs.im += &load.im;
            let qn = CVec {
                re: chol_solve(&sys.dir_chol, &rhs.re),
                im: chol_solve(&sys.dir_chol, &rhs.im),
            };
            e.fluid_kinetic += 0.5 * qn.form(&sys.dir_mass);
            e.viscous += qn.form(&sys.dir_viscous);
            e.work += load.dot_re(&qn);
            e.numerical += 0.5 * qn.sub(q).form(&sys.dir_mass);
            out.q[c] = qn;
        }
        (out, e)
    }

    /// One backward-Euler step; returns the new state and the step's
    /// ledger row given the previous one.
    pub fn step(&self, state: &FsiState, prev: &LedgerRow, with_fields: bool) -> Result<(FsiState, LedgerRow)> {
        let t_next = state.t + self.params.dt;
        let results: Vec<(ModeState, ModeEnergy)> = self
            .modes
            .par_iter()
            .map(|am| self.advance_mode(am, &self.current(am, state), t_next))
            .collect();
        let mut total = ModeEnergy::default();
        for (_, e) in &results {
            total.fluid_kinetic += e.fluid_kinetic;
            total.plate_kinetic += e.plate_kinetic;
            total.bending += e.bending;
            total.viscous += e.viscous;
            total.viscoelastic += e.viscoelastic;
            total.work += e.work;
            total.numerical += e.numerical;
        }
        let h = self.params.model.time_scale() * self.params.dt;
        let row = LedgerRow {
            step: prev.step + 1,
            t: t_next,
            fluid_kinetic: total.fluid_kinetic,
            plate_kinetic: total.plate_kinetic,
            bending: total.bending,
            viscous_dissipation: prev.viscous_dissipation + h * total.viscous,
            viscoelastic_dissipation: prev.viscoelastic_dissipation + h * total.viscoelastic,
            work: prev.work + h * total.work,
            numerical_dissipation: prev.numerical_dissipation + total.numerical,
        };
        if ![row.fluid_kinetic, row.plate_kinetic, row.bending, row.work].iter().all(|v| v.is_finite()) {
            return Err(Error::Internal(format!("non-finite energy at t = {t_next}")));
        }
        let mut next = FsiState {
            v: Vec::new(),
            p: ChannelField::zeros(self.params.grid, self.params.m()),
            eta: PeriodicField::zeros(self.params.grid),
            eta_t: PeriodicField::zeros(self.params.grid),
            t: t_next,
            modal: state.modal.clone(),
        };
        let prev_modes: Vec<ModeState> = self.modes.iter().map(|am| self.current(am, state)).collect();
        for (am, (ms, _)) in self.modes.iter().zip(results) {
            next.modal[am.flat] = Some(ms);
        }
        if with_fields {
            self.fill_fields(&mut next, &prev_modes)?;
        }
        Ok((next, row))
    }

    /// Nodal fields of `state`; `prev` feeds the inertial term of the
    /// recovered pressure.
    fn fill_fields(&self, state: &mut FsiState, prev: &[ModeState]) -> Result<()> {
        let grid = self.params.grid;
        let m = self.params.m();
        let dim = self.params.model.dim;
        let eps = self.params.model.eps;
        let nu = self.params.model.nu;
        let rho = self.params.model.rho_f;
        let h = self.params.model.time_scale() * self.params.dt;
        let zero = Complex64::new(0.0, 0.0);
        let mut v_hat = vec![vec![vec![zero; grid.len()]; m]; dim + 1];
        let mut p_hat = vec![vec![zero; grid.len()]; m];
        let mut eta_hat = vec![zero; grid.len()];
        let mut w_hat = vec![zero; grid.len()];
        let nc = &self.nodal.coupled;
        for (am, st_prev) in self.modes.iter().zip(prev) {
            let st = state.modal[am.flat].as_ref().expect("active mode");
            let sys = &am.sys;
            let ramps: Vec<f64> = am.loads.iter().map(|l| l.ramp.eval(state.t)).collect();
            match sys.kind {
                ModeKind::Coupled => {
                    let kmag = sys.kmag;
                    let k2 = kmag * kmag;
                    let b = st.x.apply(&nc[0]);
                    let a = st.x.apply(&nc[1]);
                    let a_prev = st_prev.x.apply(&nc[1]);
                    let a3 = st.x.apply(&nc[3]);
                    let along = sys.along();
                    let across = sys.transverse();
                    let q = st.q.first().map(|q| q.apply(&self.nodal.dir));
                    for j in 0..m {
                        // a = b_y/(ε|k|), a_yy = b_yyy/(ε|k|), with d/dy = 2 d/ds
                        let aj = a.at(j) * (2.0 / (eps * kmag));
                        let aj_prev = a_prev.at(j) * (2.0 / (eps * kmag));
                        let ayy = a3.at(j) * (8.0 / (eps * kmag));
                        let mut pj = -rho * (aj - aj_prev) / h - nu * (aj * k2 - ayy / (eps * eps));
                        for (l, &r) in am.loads.iter().zip(&ramps) {
                            pj += l.pressure[j] * r;
                        }
                        p_hat[j][am.flat] = pj / kmag;
                        let i_a = Complex64::new(0.0, 1.0) * aj;
                        for c in 0..dim {
                            let mut val = i_a * along[c];
                            if let Some(q) = &q {
                                val += q.at(j) * across[c];
                            }
                            v_hat[c][j][am.flat] = val;
                        }
                        v_hat[dim][j][am.flat] = b.at(j);
                    }
                    eta_hat[am.flat] = st.eta;
                    w_hat[am.flat] = st.x.at(0);
                }
                ModeKind::Mean => {
                    for (c, q) in st.q.iter().enumerate() {
                        let qn = q.apply(&self.nodal.dir);
                        for j in 0..m {
                            v_hat[c][j][am.flat] = qn.at(j);
                        }
                    }
                    for j in 0..m {
                        p_hat[j][am.flat] = am.loads.iter().zip(&ramps).map(|(l, &r)| l.pressure[j] * r).sum();
                    }
                }
            }
        }
        let to_field = |c: Vec<Complex64>| -> Result<PeriodicField> { Ok(Spectrum::from_coeffs(grid, c)?.to_field()) };
        let to_channel = |layers: Vec<Vec<Complex64>>| -> Result<ChannelField> {
            ChannelField::from_layers(layers.into_iter().map(to_field).collect::<Result<Vec<_>>>()?)
        };
        state.v = v_hat.into_iter().map(to_channel).collect::<Result<Vec<_>>>()?;
        state.p = to_channel(p_hat)?;
        state.eta = to_field(eta_hat)?;
        state.eta_t = to_field(w_hat)?;
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn term_load(
    term: &ForcingTerm,
    h: Complex64,
    sys: &ModeSystem,
    dim: usize,
    eps: f64,
    quad: &Quadrature,
    qy: &[f64],
    cb: &Tabulated,
    db: &Tabulated,
    params: &FsiParams,
) -> TermLoad {
    let m = params.m();
    let nd = sys.n_dirichlet();
    let zero = Complex64::new(0.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    let poly_q: Vec<f64> = qy.iter().map(|&y| term.poly(y)).collect();
    // ε ∫ g χ_j dy for the Dirichlet basis
    let dir_load = |scale: Complex64| -> CVec {
        let mut v = CVec::zeros(nd);
        for j in 0..nd {
            let s: f64 = (0..quad.s.len()).map(|r| 0.5 * quad.w[r] * poly_q[r] * db.d[0][(r, j)]).sum();
            let c = scale * (eps * s);
            v.re[j] = c.re;
            v.im[j] = c.im;
        }
        v
    };
    match sys.kind {
        ModeKind::Mean => {
            let mut dir = vec![CVec::zeros(nd); dim];
            let mut pressure = vec![zero; m];
            if term.component < dim {
                dir[term.component] = dir_load(h);
            } else {
                for (pj, &y) in pressure.iter_mut().zip(params.vnodes.nodes()) {
                    *pj = h * (eps * term.poly_antiderivative(y));
                }
            }
            TermLoad {
                ramp: term.ramp,
                coupled: CVec::zeros(0),
                dir,
                pressure,
            }
        }
        ModeKind::Coupled => {
            let nc = sys.n_coupled();
            let mut coupled = CVec::zeros(nc);
            let mut pressure = vec![zero; m];
            let mut dir = if dim == 2 { vec![CVec::zeros(nd)] } else { Vec::new() };
            if term.component < dim {
                let along = sys.along()[term.component];
                let across = sys.transverse()[term.component];
                // ∫ (−i f̂_∥) b'_test/(ε|k|) ε dy, b'_test = 2 ψ_s
                let g = -i * h * along;
                for j in 0..nc {
                    let s: f64 = (0..quad.s.len())
                        .map(|r| 0.5 * quad.w[r] * poly_q[r] * 2.0 * cb.d[1][(r, j)])
                        .sum();
                    let c = g * (s / sys.kmag);
                    coupled.re[j] = c.re;
                    coupled.im[j] = c.im;
                }
                for (pj, &y) in pressure.iter_mut().zip(params.vnodes.nodes()) {
                    *pj = g * term.poly(y);
                }
                if dim == 2 {
                    dir[0] = dir_load(h * across);
                }
            } else {
                for j in 0..nc {
                    let s: f64 = (0..quad.s.len()).map(|r| 0.5 * quad.w[r] * poly_q[r] * cb.d[0][(r, j)]).sum();
                    let c = h * (eps * s);
                    coupled.re[j] = c.re;
                    coupled.im[j] = c.im;
                }
            }
            TermLoad {
                ramp: term.ramp,
                coupled,
                dir,
                pressure,
            }
        }
    }
}

/// Advances `state` by one step of `params.dt`, building a fresh solver.
/// Long runs should use [`FsiSolver`] or [`run_fsi`], which factorize once.
pub fn step_fsi(params: &FsiParams, state: &FsiState) -> Result<FsiState> {
    let solver = FsiSolver::new(params, state)?;
    let (next, _) = solver.step(state, &LedgerRow::default(), true)?;
    Ok(next)
}

/// Trajectory of a full-order run.
#[derive(Clone, Debug)]
pub struct FsiRun {
    pub snapshots: Vec<FsiState>,
    pub ledger: EnergyLedger,
    pub verdict: RegimeVerdict,
}

impl FsiRun {
    pub fn terminal(&self) -> &FsiState {
        self.snapshots.last().expect("at least the initial state")
    }
}

/// Runs from rest to `t_end` (rescaled), which must be a whole number of
/// steps.
pub fn run_fsi(params: &FsiParams, t_end: f64) -> Result<FsiRun> {
    let verdict = validate_theorem_regime(params.model.kappa);
    match &verdict {
        RegimeVerdict::Fail(reason) => return Err(Error::InvalidRegime(reason.clone())),
        RegimeVerdict::Warn(reason) => log::warn!("{reason}"),
        RegimeVerdict::Pass => {}
    }
    let steps = (t_end / params.dt).round();
    if !(t_end > 0.0) || (steps * params.dt - t_end).abs() > 1e-9 * t_end {
        return Err(Error::param(
            "t_end",
            format!("{t_end} is not a positive multiple of dt = {}", params.dt),
        ));
    }
    let steps = steps as usize;
    let initial = FsiState::zeros(params);
    let solver = FsiSolver::new(params, &initial)?;
    log::debug!(
        "fsi run: eps = {}, {} steps, active modes {:?}",
        params.model.eps,
        steps,
        solver.active_modes()
    );
    let every = params.output_every.max(1);
    let mut snapshots = vec![initial.clone()];
    let mut ledger = EnergyLedger {
        rows: Vec::with_capacity(steps + 1),
    };
    let mut row = LedgerRow::default();
    ledger.rows.push(row);
    let mut state = initial;
    for n in 1..=steps {
        let keep = n % every == 0 || n == steps;
        let (next, r) = solver.step(&state, &row, keep)?;
        if r.bending < 0.0 || r.fluid_kinetic < 0.0 || r.plate_kinetic < 0.0 {
            return Err(Error::Internal(format!("negative energy at step {n}")));
        }
        row = r;
        ledger.rows.push(row);
        state = next;
        if keep {
            snapshots.push(state.clone());
        }
    }
    Ok(FsiRun {
        snapshots,
        ledger,
        verdict,
    })
}
