//! Approximate solution of the coupled problem built from the reduced
//! sixth-order model.
//!
//! The chain is `η → p = B(Δ')²η → v_α → v̂₃`, with
//!
//! ```text
//! v_α = (1/2ν) y(y+1) ∂_α p + G_α,   −ν G_α'' = f_α,   G_α(−1) = G_α(0) = 0,
//! ```
//!
//! i.e. `G_α = −(1/ν)[(y+1) ∫_{−1}^0 ζ f_α dζ + ∫_{−1}^y (y−ζ) f_α dζ]`.
//! The depth-integrated flux closes into `∂tη − c(Δ')³η = F` with
//! `F = −∫_{−1}^0 div' G dy`.

use nalgebra::DMatrix;

use crate::channel::ChannelField;
use crate::error::{Error, Result};
use crate::fsi::Forcing;
use crate::scaling::{reduced_coefficient_e0, ModelParams};
use crate::spectral::{self, PeriodicField, PeriodicGrid};
use crate::thinfilm::{self, FilmState};
use crate::vertical::VerticalNodes;

/// `p = B (Δ')² η`.
pub fn limit_pressure(eta: &PeriodicField, b: f64) -> PeriodicField {
    spectral::laplacian_power(eta, 2).scaled(b)
}

/// Horizontal forcing components sampled on the channel nodes at time `t`.
pub fn sample_forcing(forcing: &Forcing, grid: PeriodicGrid, vnodes: &VerticalNodes, t: f64) -> Vec<ChannelField> {
    (0..grid.dim())
        .map(|c| ChannelField::from_fn(grid, vnodes, |x1, x2, y| forcing.eval(c, x1, x2, y, t)))
        .collect()
}

/// `G_α` for every horizontal component of `f`.
pub fn forcing_profiles(f: &[ChannelField], nu: f64, vnodes: &VerticalNodes) -> Result<Vec<ChannelField>> {
    if !(nu > 0.0) {
        return Err(Error::param("nu", "must be > 0"));
    }
    let r = vnodes.double_integration_matrix();
    f.iter()
        .map(|fa| {
            vnodes.check_len(fa.m())?;
            let first = fa.vertical_integral(vnodes, |z| z)?;
            let running = fa.apply_vertical(&r);
            let layers = vnodes
                .nodes()
                .iter()
                .enumerate()
                .map(|(j, &y)| {
                    let run = PeriodicField::new(fa.grid(), running.layer_slice(j).to_vec())?;
                    first.scaled(y + 1.0).add(&run).map(|g| g.scaled(-1.0 / nu))
                })
                .collect::<Result<Vec<_>>>()?;
            ChannelField::from_layers(layers)
        })
        .collect()
}

/// `v_α = (1/2ν) y(y+1) ∂_α p + G_α`, one channel field per horizontal
/// direction.
pub fn horizontal_velocity(
    p: &PeriodicField,
    f: &[ChannelField],
    nu: f64,
    vnodes: &VerticalNodes,
) -> Result<Vec<ChannelField>> {
    let dim = p.grid().dim();
    if f.len() != dim {
        return Err(Error::param("f", format!("{} components for dim {dim}", f.len())));
    }
    let g = forcing_profiles(f, nu, vnodes)?;
    (0..dim)
        .map(|a| {
            let dp = spectral::spectral_derivative(p, 1, a)?;
            let layers = vnodes
                .nodes()
                .iter()
                .enumerate()
                .map(|(j, &y)| dp.scaled(y * (y + 1.0) / (2.0 * nu)).add(&g[a].layer(j)))
                .collect::<Result<Vec<_>>>()?;
            ChannelField::from_layers(layers)
        })
        .collect()
}

fn horizontal_divergence(v: &[ChannelField]) -> Result<ChannelField> {
    let mut div: Option<ChannelField> = None;
    for (a, va) in v.iter().enumerate() {
        let d = va.map_layers(|l| spectral::spectral_derivative(l, 1, a).expect("first derivative"));
        div = Some(match div {
            None => d,
            Some(acc) => acc.add(&d)?,
        });
    }
    div.ok_or_else(|| Error::param("v", "no horizontal components"))
}

/// `v̂₃(y) = −ε ∫_{−1}^{y} div' v dζ`.
pub fn vertical_velocity(v: &[ChannelField], eps: f64, vnodes: &VerticalNodes) -> Result<ChannelField> {
    let div = horizontal_divergence(v)?;
    vnodes.check_len(div.m())?;
    let q: DMatrix<f64> = vnodes.cumulative_integration_matrix();
    Ok(div.apply_vertical(&q).scaled(-eps))
}

/// `F = −∫_{−1}^0 div' G dy`.
pub fn forcing_f(f: &[ChannelField], nu: f64, vnodes: &VerticalNodes) -> Result<PeriodicField> {
    let g = forcing_profiles(f, nu, vnodes)?;
    let div = horizontal_divergence(&g)?;
    Ok(div.vertical_integral(vnodes, |_| 1.0)?.scaled(-1.0))
}

/// Trajectory of the reduced model together with the data that produced it.
#[derive(Clone, Debug)]
pub struct ReducedSolution {
    pub states: Vec<FilmState>,
    pub c: f64,
    pub forcing: Forcing,
}

impl ReducedSolution {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    fn check(&self) -> Result<()> {
        if self.states.is_empty() {
            return Err(Error::param("reduced", "empty trajectory"));
        }
        if self.states.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(Error::param("reduced", "times must increase strictly"));
        }
        Ok(())
    }
}

/// Solves `∂tη − B/(12ν) (Δ')³η = F` from rest, keeping every
/// `record_every`-th step.
pub fn solve_reduced(
    params: &ModelParams,
    forcing: &Forcing,
    grid: PeriodicGrid,
    vnodes: &VerticalNodes,
    t_end: f64,
    dt: f64,
    record_every: usize,
) -> Result<ReducedSolution> {
    let c = reduced_coefficient_e0(params.b, params.nu)?;
    // F is a ramp-weighted sum of fixed fields, one per forcing term
    let parts = forcing
        .terms
        .iter()
        .map(|term| {
            let single = Forcing {
                terms: vec![crate::fsi::ForcingTerm {
                    ramp: Default::default(),
                    ..term.clone()
                }],
            };
            let f = sample_forcing(&single, grid, vnodes, 0.0);
            Ok((term.ramp, forcing_f(&f, params.nu, vnodes)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let source = |t: f64| {
        parts.iter().fold(PeriodicField::zeros(grid), |acc, (ramp, f)| {
            acc.add(&f.scaled(ramp.eval(t))).expect("same grid")
        })
    };
    let states = thinfilm::solve_linear_sixth_sampled(c, source, &PeriodicField::zeros(grid), t_end, dt, record_every)?;
    Ok(ReducedSolution {
        states,
        c,
        forcing: forcing.clone(),
    })
}

/// The approximate triple on the reference channel, one entry per time of
/// the reduced trajectory.
#[derive(Clone, Debug)]
pub struct ApproxTriple {
    pub times: Vec<f64>,
    /// `ε² (v_1, …, v̂₃)`, horizontal components first.
    pub v_hat: Vec<Vec<ChannelField>>,
    /// Constant in the vertical.
    pub p_hat: Vec<PeriodicField>,
    /// `ε^κ η`.
    pub eta_hat: Vec<PeriodicField>,
}

pub fn assemble_approx(reduced: &ReducedSolution, params: &ModelParams, vnodes: &VerticalNodes) -> Result<ApproxTriple> {
    reduced.check()?;
    let eps = params.eps;
    let e2 = eps * eps;
    let ek = params.eps_pow(params.kappa);
    let grid = reduced.states[0].eta.grid();
    let mut out = ApproxTriple {
        times: reduced.times(),
        v_hat: Vec::with_capacity(reduced.states.len()),
        p_hat: Vec::with_capacity(reduced.states.len()),
        eta_hat: Vec::with_capacity(reduced.states.len()),
    };
    for s in &reduced.states {
        let p = limit_pressure(&s.eta, params.b);
        let f = sample_forcing(&reduced.forcing, grid, vnodes, s.t);
        let vh = horizontal_velocity(&p, &f, params.nu, vnodes)?;
        let v3 = vertical_velocity(&vh, eps, vnodes)?;
        let mut v: Vec<ChannelField> = vh.iter().map(|c| c.scaled(e2)).collect();
        v.push(v3.scaled(e2));
        out.v_hat.push(v);
        out.p_hat.push(p);
        out.eta_hat.push(s.eta.scaled(ek));
    }
    Ok(out)
}

/// Second-order finite-difference time derivative of the trajectory
/// (one-sided at the ends). Needs a uniform time grid.
pub fn time_derivative(states: &[FilmState]) -> Result<Vec<PeriodicField>> {
    if states.len() < 3 {
        return Err(Error::param("states", "need at least three snapshots"));
    }
    let h = states[1].t - states[0].t;
    if states.windows(2).any(|w| ((w[1].t - w[0].t) - h).abs() > 1e-9 * h) {
        return Err(Error::param("states", "time grid is not uniform"));
    }
    let n = states.len();
    let e = |i: usize| &states[i].eta;
    (0..n)
        .map(|i| {
            let (a, b, c, w) = if i == 0 {
                (e(0), e(1), e(2), [-1.5, 2.0, -0.5])
            } else if i == n - 1 {
                (e(n - 3), e(n - 2), e(n - 1), [0.5, -2.0, 1.5])
            } else {
                (e(i - 1), e(i), e(i + 1), [-0.5, 0.0, 0.5])
            };
            a.scaled(w[0] / h).add(&b.scaled(w[1] / h))?.add(&c.scaled(w[2] / h))
        })
        .collect()
}

/// Closure of the derivation chain: the depth-integrated flux of the
/// reconstructed velocity against the trajectory's `∂tη`, as a relative
/// `L²(0,T; L²(ω))` difference over the interior snapshots.
pub fn closure_residual(reduced: &ReducedSolution, params: &ModelParams, vnodes: &VerticalNodes) -> Result<f64> {
    reduced.check()?;
    let grid = reduced.states[0].eta.grid();
    let dt_eta = time_derivative(&reduced.states)?;
    let n = reduced.states.len();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 1..n - 1 {
        let s = &reduced.states[i];
        let p = limit_pressure(&s.eta, params.b);
        let f = sample_forcing(&reduced.forcing, grid, vnodes, s.t);
        let vh = horizontal_velocity(&p, &f, params.nu, vnodes)?;
        let top = vertical_velocity(&vh, 1.0, vnodes)?.layer(vnodes.m() - 1);
        let d = top.sub(&dt_eta[i])?;
        num += d.l2_norm().powi(2);
        den += dt_eta[i].l2_norm().powi(2);
    }
    if den == 0.0 {
        return Ok(num.sqrt());
    }
    Ok((num / den).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{Phase, TimeRamp};
    use crate::scaling::Exponent;
    use crate::spectral::TWO_PI;

    fn g() -> PeriodicGrid {
        PeriodicGrid::new(1, 16).unwrap()
    }

    fn vn() -> VerticalNodes {
        VerticalNodes::new(16).unwrap()
    }

    #[test]
    fn limit_pressure_examples() {
        let eta = PeriodicField::from_fn(g(), |x, _| (TWO_PI * x).cos());
        let p = limit_pressure(&eta, 1.0);
        let expect = eta.scaled(TWO_PI.powi(4));
        assert!(p.sub(&expect).unwrap().l2_norm() < 1e-9);
        assert_eq!(limit_pressure(&PeriodicField::zeros(g()), 1.0).l2_norm(), 0.0);
    }

    #[test]
    fn limit_pressure_weak_form() {
        // ∫ p ψ = B ∫ Δ'η Δ'ψ for band-limited test functions
        let grid = PeriodicGrid::new(1, 32).unwrap();
        let eta = PeriodicField::from_fn(grid, |x, _| (TWO_PI * x).sin() + 0.3 * (3.0 * TWO_PI * x).cos());
        let b = 0.7;
        let p = limit_pressure(&eta, b);
        let lap_eta = spectral::laplacian_power(&eta, 1);
        let mut seed = 12345u64;
        let mut rnd = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        for _ in 0..20 {
            let coeffs: Vec<(f64, f64)> = (1..8).map(|_| (rnd(), rnd())).collect();
            let psi = PeriodicField::from_fn(grid, |x, _| {
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(j, (a, c))| a * ((j + 1) as f64 * TWO_PI * x).cos() + c * ((j + 1) as f64 * TWO_PI * x).sin())
                    .sum()
            });
            let lhs = p.inner(&psi).unwrap();
            let rhs = b * lap_eta.inner(&spectral::laplacian_power(&psi, 1)).unwrap();
            assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn horizontal_velocity_examples() {
        let vnodes = vn();
        let nu = 0.5;
        let p = PeriodicField::from_fn(g(), |x, _| (TWO_PI * x).cos());
        let zero_f = vec![ChannelField::zeros(g(), vnodes.m())];
        let v = horizontal_velocity(&p, &zero_f, nu, &vnodes).unwrap();
        for (j, &y) in vnodes.nodes().iter().enumerate() {
            let expect = PeriodicField::from_fn(g(), |x, _| -(TWO_PI / (2.0 * nu)) * (TWO_PI * x).sin() * y * (y + 1.0));
            assert!(v[0].layer(j).sub(&expect).unwrap().l2_norm() < 1e-12);
        }

        // constant force: −ν G'' = f gives G = −(f/2ν) y(y+1), i.e. flow along f
        let f = vec![ChannelField::from_fn(g(), &vnodes, |_, _, _| 2.0)];
        let v = horizontal_velocity(&PeriodicField::zeros(g()), &f, nu, &vnodes).unwrap();
        for (j, &y) in vnodes.nodes().iter().enumerate() {
            let expect = -(2.0 / (2.0 * nu)) * y * (y + 1.0);
            assert!(v[0].layer(j).values().iter().all(|&val| (val - expect).abs() < 1e-13));
        }
        let top = vnodes.m() - 1;
        assert!(v[0].layer_slice(0).iter().chain(v[0].layer_slice(top)).all(|x| x.abs() < 1e-13));
    }

    #[test]
    fn forcing_profile_solves_the_two_point_problem() {
        // f = y²: G'' = −y²/ν, G(−1) = G(0) = 0
        let vnodes = vn();
        let nu = 2.0;
        let f = vec![ChannelField::from_fn(g(), &vnodes, |_, _, y| y * y)];
        let gp = forcing_profiles(&f, nu, &vnodes).unwrap();
        for (j, &y) in vnodes.nodes().iter().enumerate() {
            let exact = -(y.powi(4) / 12.0 + y / 12.0) / nu;
            assert!((gp[0].layer_slice(j)[3] - exact).abs() < 1e-14);
        }
    }

    #[test]
    fn vertical_velocity_examples() {
        let vnodes = vn();
        let grid = PeriodicGrid::new(2, 8).unwrap();
        // ∂₁v₁ + ∂₂v₂ = 0 for v = (sin 2πx₂, sin 2πx₁)·y(y+1)
        let v1 = ChannelField::from_fn(grid, &vnodes, |_, x2, y| (TWO_PI * x2).sin() * y * (y + 1.0));
        let v2 = ChannelField::from_fn(grid, &vnodes, |x1, _, y| (TWO_PI * x1).sin() * y * (y + 1.0));
        let v3 = vertical_velocity(&[v1, v2], 0.1, &vnodes).unwrap();
        assert!(v3.max_abs() < 1e-13);

        let v1 = ChannelField::from_fn(g(), &vnodes, |x, _, y| (TWO_PI * x).sin() * y * (y + 1.0));
        let v3 = vertical_velocity(&[v1.clone()], 0.1, &vnodes).unwrap();
        assert!(v3.layer_slice(0).iter().all(|v| v.abs() < 1e-15));
        // top: −ε ∫ 2π cos(2πx) y(y+1) dy = ε 2π cos(2πx)/6
        let expect = PeriodicField::from_fn(g(), |x, _| 0.1 * TWO_PI * (TWO_PI * x).cos() / 6.0);
        assert!(v3.layer(vnodes.m() - 1).sub(&expect).unwrap().l2_norm() < 1e-12);

        // discrete scaled divergence of (v1, v̂₃) vanishes
        let dy = vnodes.diff_matrix();
        let div = v3.apply_vertical(&dy).scaled(1.0 / 0.1).add(&v1.map_layers(|l| spectral::spectral_derivative(l, 1, 0).unwrap())).unwrap();
        assert!(div.max_abs() < 1e-10);
    }

    #[test]
    fn forcing_f_examples() {
        let vnodes = vn();
        let nu = 0.8;
        assert_eq!(forcing_f(&[ChannelField::zeros(g(), vnodes.m())], nu, &vnodes).unwrap().l2_norm(), 0.0);
        let f = vec![ChannelField::from_fn(g(), &vnodes, |x, _, _| (TWO_PI * x).sin())];
        let big_f = forcing_f(&f, nu, &vnodes).unwrap();
        // F = −(1/12ν) ∂₁f₁
        let expect = PeriodicField::from_fn(g(), |x, _| -TWO_PI * (TWO_PI * x).cos() / (12.0 * nu));
        assert!(big_f.sub(&expect).unwrap().l2_norm() < 1e-13);
        let f3: Vec<ChannelField> = f.iter().map(|c| c.scaled(3.0)).collect();
        let big_f3 = forcing_f(&f3, nu, &vnodes).unwrap();
        assert!(big_f3.sub(&big_f.scaled(3.0)).unwrap().l2_norm() < 1e-13);
    }

    fn setup() -> (ModelParams, Forcing) {
        let mp = ModelParams::coupled(1.0, 1.0, 0.1, 1e-3, 1e-3, 0.125, Exponent::integer(2), 1).unwrap();
        let f = Forcing::single(0, 1.0, [1, 0], Phase::Sin, TimeRamp::Gaussian { t_ramp: 0.2 });
        (mp, f)
    }

    #[test]
    fn approx_triple_scalings() {
        let (mp, f) = setup();
        let vnodes = vn();
        let red = solve_reduced(&mp, &f, g(), &vnodes, 0.2, 1e-3, 50).unwrap();
        let a = assemble_approx(&red, &mp, &vnodes).unwrap();
        let b = assemble_approx(&red, &mp.clone().with_eps(0.25), &vnodes).unwrap();
        let last = a.times.len() - 1;
        let ratio = b.v_hat[last][0].max_abs() / a.v_hat[last][0].max_abs();
        assert!((ratio - 4.0).abs() < 1e-12);
        assert!(spectral::mean_value(&a.eta_hat[last]).abs() < 1e-16);
        let top = vnodes.m() - 1;
        assert!(a.v_hat[last][0].layer_slice(top).iter().all(|v| v.abs() < 1e-15));

        let zero = solve_reduced(&mp, &Forcing::none(), g(), &vnodes, 0.1, 1e-3, 10).unwrap();
        let z = assemble_approx(&zero, &mp, &vnodes).unwrap();
        assert!(z.v_hat.iter().flatten().all(|c| c.max_abs() == 0.0));
        assert!(z.p_hat.iter().chain(&z.eta_hat).all(|p| p.l2_norm() == 0.0));
    }

    #[test]
    fn top_trace_matches_time_derivative() {
        // v̂₃ on top equals T⁻¹ ∂t η̂ = ε³ ∂tη
        let (mp, f) = setup();
        let vnodes = vn();
        let red = solve_reduced(&mp, &f, g(), &vnodes, 0.3, 1e-4, 1).unwrap();
        let a = assemble_approx(&red, &mp, &vnodes).unwrap();
        let dt_eta = time_derivative(&red.states).unwrap();
        let e3 = mp.eps.powi(3);
        let top = vnodes.m() - 1;
        for i in (100..red.states.len() - 1).step_by(500) {
            let trace = a.v_hat[i][1].layer(top);
            let expect = dt_eta[i].scaled(e3);
            let diff = trace.sub(&expect).unwrap();
            let nodal = diff.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(nodal <= 1e-8, "{nodal}");
        }
    }

    #[test]
    fn closure_of_the_chain() {
        let (mp, f) = setup();
        let vnodes = vn();
        let red = solve_reduced(&mp, &f, g(), &vnodes, 0.5, 1e-4, 1).unwrap();
        let r = closure_residual(&red, &mp, &vnodes).unwrap();
        assert!(r <= 1e-6, "closure {r}");
    }
}
