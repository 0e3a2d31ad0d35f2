//! Error norms between the full-order and approximate solutions, log–log
//! rate fits over an ε ladder, and the discrete energy audit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelField;
use crate::error::{Error, Result};
use crate::fsi::{run_fsi, EnergyLedger, Forcing, FsiParams, FsiRun};
use crate::reconstruction::{assemble_approx, closure_residual, solve_reduced, ApproxTriple, ReducedSolution};
use crate::scaling::{Exponent, ModelParams};
use crate::spectral::{self, PeriodicField, TWO_PI};
use crate::vertical::VerticalNodes;

/// `√(∫₀ᵀ ε ∫_{Ω₋} Σ_c |d_c|²)`: the `L²(0,T; L²(Ω_ε))` norm computed on the
/// reference channel. `diff[i]` holds the components at `times[i]`; time
/// integration is by the trapezoid rule.
pub fn thin_norm_l2l2(diff: &[Vec<ChannelField>], times: &[f64], eps: f64, vnodes: &VerticalNodes) -> Result<f64> {
    if diff.len() != times.len() || times.len() < 2 {
        return Err(Error::GridMismatch(format!(
            "{} snapshots for {} times (need at least 2)",
            diff.len(),
            times.len()
        )));
    }
    let sq: Vec<f64> = diff
        .iter()
        .map(|comps| {
            comps.iter().try_fold(0.0, |acc, c| {
                let col = c.map_layers(|l| l.map(|v| v * v)).vertical_integral(vnodes, |_| 1.0)?;
                Ok::<_, Error>(acc + spectral::mean_value(&col))
            })
        })
        .collect::<Result<_>>()?;
    let integral: f64 = times
        .windows(2)
        .zip(sq.windows(2))
        .map(|(t, s)| 0.5 * (t[1] - t[0]) * (s[0] + s[1]))
        .sum();
    Ok((eps * integral).max(0.0).sqrt())
}

/// Full `H²(ω)` norm: value, gradient and all second derivatives.
pub fn h2_norm(eta: &PeriodicField) -> f64 {
    let grid = eta.grid();
    eta.to_spectrum()
        .coeffs()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let j = grid.wavevector(i);
            let k2 = TWO_PI * TWO_PI * (j[0] * j[0] + j[1] * j[1]) as f64;
            c.norm_sqr() * (1.0 + k2 + k2 * k2)
        })
        .sum::<f64>()
        .sqrt()
}

/// `max_t ‖η(t)‖_{H²(ω)}`.
pub fn norm_linf_h2(etas: &[PeriodicField]) -> f64 {
    etas.iter().map(h2_norm).fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    Velocity,
    Pressure,
    Displacement,
}

impl Norm {
    pub const ALL: [Norm; 3] = [Norm::Velocity, Norm::Pressure, Norm::Displacement];

    /// Exponent of the error bound for rigidity exponent κ.
    pub fn theorem_rate(self, kappa: Exponent) -> f64 {
        match self {
            Norm::Velocity => 3.0,
            Norm::Pressure => 1.0,
            Norm::Displacement => kappa.to_f64() + 0.5,
        }
    }

    /// One-sided acceptance bound on a fitted slope: the theorem rate less
    /// a margin for pre-asymptotic effects.
    pub fn threshold(self, kappa: Exponent) -> f64 {
        let margin = match self {
            Norm::Pressure => 0.4,
            _ => 0.3,
        };
        self.theorem_rate(kappa) - margin
    }

    pub fn name(self) -> &'static str {
        match self {
            Norm::Velocity => "velocity",
            Norm::Pressure => "pressure",
            Norm::Displacement => "displacement",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub eps: f64,
    pub kappa: Exponent,
    pub err_velocity: f64,
    pub err_pressure: f64,
    pub err_displacement: f64,
    /// Terminal energy over `t ε³`, with `t` the physical time.
    pub energy_ratio: f64,
}

impl ErrorReport {
    pub fn error(&self, which: Norm) -> f64 {
        match which {
            Norm::Velocity => self.err_velocity,
            Norm::Pressure => self.err_pressure,
            Norm::Displacement => self.err_displacement,
        }
    }
}

/// Errors of the full-order run against the approximate triple; both must
/// be sampled at the same times on the same grids.
pub fn compare(run: &FsiRun, approx: &ApproxTriple, params: &FsiParams) -> Result<ErrorReport> {
    let snaps = &run.snapshots;
    if snaps.len() != approx.times.len() {
        return Err(Error::GridMismatch(format!(
            "{} full-order snapshots vs {} reduced ones",
            snaps.len(),
            approx.times.len()
        )));
    }
    for (s, &t) in snaps.iter().zip(&approx.times) {
        if (s.t - t).abs() > 1e-9 * (1.0 + t.abs()) {
            return Err(Error::GridMismatch(format!("time {} vs {}", s.t, t)));
        }
    }
    let eps = params.model.eps;
    let vn = &params.vnodes;
    let times = approx.times.clone();
    let dv = snaps
        .iter()
        .zip(&approx.v_hat)
        .map(|(s, v)| s.v.iter().zip(v).map(|(a, b)| a.sub(b)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let dp = snaps
        .iter()
        .zip(&approx.p_hat)
        .map(|(s, p)| {
            let layers = s.p.layers().iter().map(|l| l.sub(p)).collect::<Result<Vec<_>>>()?;
            Ok(vec![ChannelField::from_layers(layers)?])
        })
        .collect::<Result<Vec<_>>>()?;
    let de = snaps
        .iter()
        .zip(&approx.eta_hat)
        .map(|(s, e)| s.eta.sub(e))
        .collect::<Result<Vec<_>>>()?;
    Ok(ErrorReport {
        eps,
        kappa: params.model.kappa,
        err_velocity: thin_norm_l2l2(&dv, &times, eps, vn)?,
        err_pressure: thin_norm_l2l2(&dp, &times, eps, vn)?,
        err_displacement: norm_linf_h2(&de),
        energy_ratio: terminal_energy_ratio(&run.ledger, &params.model),
    })
}

fn terminal_energy_ratio(ledger: &EnergyLedger, model: &ModelParams) -> f64 {
    match ledger.last() {
        Some(r) if r.t > 0.0 => r.energy() / (model.time_scale() * r.t * model.eps.powi(3)),
        _ => 0.0,
    }
}

/// Smallest acceptable r² of a rate fit.
pub const MIN_R2: f64 = 0.98;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub norm: Norm,
    /// `(ε, error)`, ε decreasing.
    pub pairs: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

impl RateFit {
    pub fn passes(&self, kappa: Exponent) -> bool {
        self.slope >= self.norm.threshold(kappa) && self.r2 >= MIN_R2
    }
}

/// Least-squares slope of `log(error)` against `log(ε)`.
pub fn fit_rate(reports: &[ErrorReport], which: Norm) -> Result<RateFit> {
    if reports.len() < 3 {
        return Err(Error::DegenerateFit(format!("{} reports; need at least 3", reports.len())));
    }
    if reports.iter().any(|r| r.kappa != reports[0].kappa) {
        return Err(Error::DegenerateFit("reports mix different kappa".into()));
    }
    if reports.windows(2).any(|w| w[1].eps >= w[0].eps) {
        return Err(Error::DegenerateFit("eps must decrease strictly".into()));
    }
    let pairs: Vec<(f64, f64)> = reports.iter().map(|r| (r.eps, r.error(which))).collect();
    if pairs.iter().any(|&(_, e)| !(e > 0.0) || !e.is_finite()) {
        return Err(Error::DegenerateFit(format!("{} errors must be positive and finite", which.name())));
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(RateFit {
        norm: which,
        pairs,
        slope,
        intercept,
        r2,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// `(t, E(t)/(t ε³))` with `t` physical.
    pub ratios: Vec<(f64, f64)>,
    /// Largest relative step residual `(ΔE + ΔD − ΔW)/scale`; at most
    /// round-off above zero for a dissipative step.
    pub worst_slack: f64,
}

/// Relative slack allowed for round-off.
pub const AUDIT_TOLERANCE: f64 = 1e-12;

/// Checks that energies and dissipations are nonnegative and that every
/// step satisfies `E_n + D_n − E_{n−1} − D_{n−1} ≤ W_n − W_{n−1}`.
pub fn energy_audit(ledger: &EnergyLedger, params: &ModelParams) -> Result<AuditReport> {
    let t_scale = params.time_scale();
    let e3 = params.eps.powi(3);
    let mut worst = f64::NEG_INFINITY;
    let mut ratios = Vec::new();
    for (n, w) in ledger.rows.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let step = n + 1;
        let parts = [
            ("fluid kinetic energy", b.fluid_kinetic),
            ("plate kinetic energy", b.plate_kinetic),
            ("bending energy", b.bending),
            ("viscous dissipation", b.viscous_dissipation),
            ("visco-elastic dissipation", b.viscoelastic_dissipation),
        ];
        for (name, v) in parts {
            if !(v >= 0.0) {
                return Err(Error::AuditFailure {
                    step,
                    reason: format!("{name} is {v:e}"),
                });
            }
        }
        if b.dissipation() < a.dissipation() {
            return Err(Error::AuditFailure {
                step,
                reason: "accumulated dissipation decreased".into(),
            });
        }
        let lhs = b.energy() + b.dissipation() - a.energy() - a.dissipation();
        let work = b.work - a.work;
        let scale = (b.energy() + b.dissipation() + b.work.abs()).max(f64::MIN_POSITIVE);
        let slack = (lhs - work) / scale;
        if slack > AUDIT_TOLERANCE {
            return Err(Error::AuditFailure {
                step,
                reason: format!("energy gain {slack:e} (relative) exceeds the work of forcing"),
            });
        }
        worst = worst.max(slack);
        if b.t > 0.0 {
            ratios.push((t_scale * b.t, b.energy() / (t_scale * b.t * e3)));
        }
    }
    Ok(AuditReport {
        ratios,
        worst_slack: if worst.is_finite() { worst } else { 0.0 },
    })
}

// ---------------------------------------------------------------------------
// ladder

/// A rate study over a ladder of film thicknesses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ladder {
    /// Model at the first rung; `eps` is overridden per rung.
    pub model: ModelParams,
    pub forcing: Forcing,
    /// Strictly decreasing.
    pub eps: Vec<f64>,
    /// Rescaled horizon.
    pub t_end: f64,
    pub n: usize,
    pub m: usize,
    /// Full-order step (rescaled time).
    pub dt: f64,
    /// Reduced-model step; must divide `output_interval`.
    pub reduced_dt: f64,
    /// Snapshot spacing used by the error norms.
    pub output_interval: f64,
}

impl Ladder {
    pub fn validate(&self) -> Result<()> {
        if self.eps.is_empty() {
            return Err(Error::Config("empty eps ladder".into()));
        }
        if self.eps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("eps ladder must decrease strictly".into()));
        }
        for &e in &self.eps {
            if !(e > 0.0 && e < 1.0) || e.log2().fract() != 0.0 {
                return Err(Error::Config(format!("eps {e} is not a power of two in (0,1)")));
            }
        }
        for (name, v) in [("t_end", self.t_end), ("dt", self.dt), ("reduced_dt", self.reduced_dt), ("output_interval", self.output_interval)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be > 0")));
            }
        }
        self.steps_per_output(self.dt)?;
        self.steps_per_output(self.reduced_dt)?;
        let outputs = self.t_end / self.output_interval;
        if (outputs - outputs.round()).abs() > 1e-9 * outputs {
            return Err(Error::Config("t_end must be a multiple of output_interval".into()));
        }
        self.model.validate()
    }

    fn steps_per_output(&self, dt: f64) -> Result<usize> {
        let k = self.output_interval / dt;
        if (k - k.round()).abs() > 1e-9 * k || k.round() < 1.0 {
            return Err(Error::Config(format!(
                "step {dt} does not divide output_interval {}",
                self.output_interval
            )));
        }
        Ok(k.round() as usize)
    }

    fn fsi_params(&self, eps: f64, dt: f64, m: usize) -> Result<FsiParams> {
        let model = self.model.clone().with_eps(eps);
        let every = self.steps_per_output(dt)?;
        Ok(FsiParams::new(model, self.n, m, dt, self.forcing.clone())?.with_output_every(every))
    }

    /// Reduced trajectory shared by every rung (it does not depend on ε).
    pub fn reduced(&self) -> Result<ReducedSolution> {
        let grid = crate::spectral::PeriodicGrid::new(self.model.dim, self.n)?;
        let vn = VerticalNodes::new(self.m)?;
        solve_reduced(
            &self.model,
            &self.forcing,
            grid,
            &vn,
            self.t_end,
            self.reduced_dt,
            self.steps_per_output(self.reduced_dt)?,
        )
    }
}

/// Everything computed for one rung.
#[derive(Clone, Debug)]
pub struct Rung {
    pub report: ErrorReport,
    pub audit: AuditReport,
    pub run: FsiRun,
}

fn run_rung(ladder: &Ladder, reduced: &ReducedSolution, eps: f64, dt: f64, m: usize) -> Result<Rung> {
    let params = ladder.fsi_params(eps, dt, m)?;
    let run = run_fsi(&params, ladder.t_end)?;
    let audit = energy_audit(&run.ledger, &params.model)?;
    let approx = assemble_approx(reduced, &params.model, &params.vnodes)?;
    let report = compare(&run, &approx, &params)?;
    log::info!(
        "eps = {eps}: velocity {:.3e}, pressure {:.3e}, displacement {:.3e}",
        report.err_velocity,
        report.err_pressure,
        report.err_displacement
    );
    Ok(Rung { report, audit, run })
}

/// Size of the full-order discretization error at the smallest ε relative
/// to the model error there, per norm. Estimated by halving `dt` and by
/// adding vertical nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prepass {
    pub eps: f64,
    pub dt_ratio: [f64; 3],
    pub m_ratio: [f64; 3],
}

impl Prepass {
    pub fn resolved(&self) -> bool {
        self.dt_ratio.iter().chain(&self.m_ratio).all(|&r| r <= 0.1)
    }
}

fn self_difference(a: &FsiRun, b: &FsiRun, pa: &FsiParams, pb: &FsiParams) -> Result<[f64; 3]> {
    // b may live on a finer vertical grid; interpolate onto a's nodes
    let to_a = pb.vnodes.basis().eval_matrix(pa.vnodes.nodes());
    let times: Vec<f64> = a.snapshots.iter().map(|s| s.t).collect();
    if times.len() != b.snapshots.len() {
        return Err(Error::GridMismatch("refined run sampled differently".into()));
    }
    let dv = a
        .snapshots
        .iter()
        .zip(&b.snapshots)
        .map(|(x, y)| x.v.iter().zip(&y.v).map(|(u, w)| u.sub(&w.apply_vertical(&to_a))).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let dp = a
        .snapshots
        .iter()
        .zip(&b.snapshots)
        .map(|(x, y)| Ok(vec![x.p.sub(&y.p.apply_vertical(&to_a))?]))
        .collect::<Result<Vec<_>>>()?;
    let de = a
        .snapshots
        .iter()
        .zip(&b.snapshots)
        .map(|(x, y)| x.eta.sub(&y.eta))
        .collect::<Result<Vec<_>>>()?;
    let eps = pa.model.eps;
    Ok([
        thin_norm_l2l2(&dv, &times, eps, &pa.vnodes)?,
        thin_norm_l2l2(&dp, &times, eps, &pa.vnodes)?,
        norm_linf_h2(&de),
    ])
}

/// Outcome of a ladder.
#[derive(Clone, Debug)]
pub struct LadderResult {
    pub rungs: Vec<Rung>,
    pub fits: Vec<RateFit>,
    pub closure: f64,
    pub prepass: Option<Prepass>,
}

impl LadderResult {
    pub fn reports(&self) -> Vec<ErrorReport> {
        self.rungs.iter().map(|r| r.report.clone()).collect()
    }

    pub fn fit(&self, norm: Norm) -> Option<&RateFit> {
        self.fits.iter().find(|f| f.norm == norm)
    }

    /// Largest over smallest terminal energy ratio across the ladder.
    pub fn energy_ratio_spread(&self) -> f64 {
        let r: Vec<f64> = self.rungs.iter().map(|r| r.report.energy_ratio).collect();
        let max = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = r.iter().cloned().fold(f64::INFINITY, f64::min);
        max / min
    }
}

/// Runs every rung (in parallel), fits the three rates and, when
/// `prepass` is set, measures the discretization error at the smallest ε.
pub fn run_ladder(ladder: &Ladder, prepass: bool) -> Result<LadderResult> {
    ladder.validate()?;
    let reduced = ladder.reduced()?;
    let vn = VerticalNodes::new(ladder.m)?;
    let closure = closure_residual_coarse(&reduced, ladder, &vn)?;
    let rungs = ladder
        .eps
        .par_iter()
        .map(|&eps| run_rung(ladder, &reduced, eps, ladder.dt, ladder.m))
        .collect::<Result<Vec<_>>>()?;
    let reports: Vec<ErrorReport> = rungs.iter().map(|r| r.report.clone()).collect();
    let fits = if reports.len() >= 3 {
        Norm::ALL.iter().map(|&n| fit_rate(&reports, n)).collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let prepass = if prepass {
        let last = rungs.last().expect("non-empty ladder");
        let eps = last.report.eps;
        let base = ladder.fsi_params(eps, ladder.dt, ladder.m)?;
        let half = ladder.fsi_params(eps, 0.5 * ladder.dt, ladder.m)?;
        let finer = ladder.fsi_params(eps, ladder.dt, ladder.m + 8)?;
        let (run_half, run_finer) = rayon::join(|| run_fsi(&half, ladder.t_end), || run_fsi(&finer, ladder.t_end));
        let d_dt = self_difference(&last.run, &run_half?, &base, &half)?;
        let d_m = self_difference(&last.run, &run_finer?, &base, &finer)?;
        let model = [last.report.err_velocity, last.report.err_pressure, last.report.err_displacement];
        Some(Prepass {
            eps,
            dt_ratio: std::array::from_fn(|i| d_dt[i] / model[i]),
            m_ratio: std::array::from_fn(|i| d_m[i] / model[i]),
        })
    } else {
        None
    };
    Ok(LadderResult {
        rungs,
        fits,
        closure,
        prepass,
    })
}

/// The closure needs a fine time grid for its finite differences; re-solve
/// the reduced model at `reduced_dt` keeping every step.
fn closure_residual_coarse(reduced: &ReducedSolution, ladder: &Ladder, vn: &VerticalNodes) -> Result<f64> {
    let grid = reduced.states[0].eta.grid();
    let fine = solve_reduced(&ladder.model, &ladder.forcing, grid, vn, ladder.t_end, ladder.reduced_dt, 1)?;
    closure_residual(&fine, &ladder.model, vn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fsi::LedgerRow;
    use crate::spectral::PeriodicGrid;
    use proptest::prelude::*;

    fn report(eps: f64, err: f64) -> ErrorReport {
        ErrorReport {
            eps,
            kappa: Exponent::integer(2),
            err_velocity: err,
            err_pressure: err,
            err_displacement: err,
            energy_ratio: 1.0,
        }
    }

    #[test]
    fn thin_norm_examples() {
        let vn = VerticalNodes::new(8).unwrap();
        let g = PeriodicGrid::new(1, 16).unwrap();
        let times = [0.0, 0.5, 1.0];
        let zero = vec![vec![ChannelField::zeros(g, 8)]; 3];
        assert_eq!(thin_norm_l2l2(&zero, &times, 0.1, &vn).unwrap(), 0.0);
        let one = vec![vec![ChannelField::from_fn(g, &vn, |_, _, _| 1.0)]; 3];
        assert!((thin_norm_l2l2(&one, &times, 0.1, &vn).unwrap() - 0.1f64.sqrt()).abs() < 1e-14);
        let s = vec![vec![ChannelField::from_fn(g, &vn, |x, _, _| (TWO_PI * x).sin())]; 3];
        assert!((thin_norm_l2l2(&s, &times, 1.0, &vn).unwrap() - 0.5f64.sqrt()).abs() < 1e-14);
        assert!(thin_norm_l2l2(&s, &times[..2], 1.0, &vn).is_err());
    }

    #[test]
    fn h2_norm_examples() {
        let g = PeriodicGrid::new(1, 16).unwrap();
        assert_eq!(norm_linf_h2(&[PeriodicField::zeros(g)]), 0.0);
        let c = PeriodicField::from_fn(g, |x, _| (TWO_PI * x).cos());
        let expect = (0.5 * (1.0 + TWO_PI.powi(2) + TWO_PI.powi(4))).sqrt();
        assert!((norm_linf_h2(&[c.clone()]) - expect).abs() < 1e-10 * expect);
        let more = [c.clone(), c.scaled(0.5)];
        assert!(norm_linf_h2(&more) >= norm_linf_h2(&[c.scaled(0.5)]));
    }

    #[test]
    fn fit_examples() {
        let eps = [0.125, 0.0625, 0.03125, 0.015625];
        for p in [3.0, 2.5] {
            let r: Vec<_> = eps.iter().map(|&e| report(e, e.powf(p))).collect();
            let f = fit_rate(&r, Norm::Velocity).unwrap();
            assert!((f.slope - p).abs() < 1e-12);
            assert!((f.r2 - 1.0).abs() < 1e-12);
        }
        let noise = [1.05, 0.95, 1.03, 0.97];
        let r: Vec<_> = eps.iter().zip(noise).map(|(&e, n)| report(e, n * e.powi(3))).collect();
        let f = fit_rate(&r, Norm::Pressure).unwrap();
        assert!(f.slope >= 2.9 && f.slope <= 3.1, "{}", f.slope);

        let r: Vec<_> = eps.iter().map(|&e| report(e, 0.0)).collect();
        assert!(matches!(fit_rate(&r, Norm::Velocity), Err(Error::DegenerateFit(_))));
        assert!(fit_rate(&r[..2], Norm::Velocity).is_err());
    }

    fn ledger() -> EnergyLedger {
        let mut rows = vec![LedgerRow::default()];
        for n in 1..=4 {
            let t = n as f64 * 0.1;
            rows.push(LedgerRow {
                step: n,
                t,
                fluid_kinetic: 0.1 * t,
                plate_kinetic: 0.0,
                bending: t,
                viscous_dissipation: t,
                viscoelastic_dissipation: 0.0,
                work: 3.0 * t,
                numerical_dissipation: 0.9 * t,
            });
        }
        EnergyLedger { rows }
    }

    #[test]
    fn audit_examples() {
        let mp = ModelParams::coupled(1.0, 1.0, 0.1, 1e-3, 1e-3, 0.125, Exponent::integer(2), 1).unwrap();
        let zero = EnergyLedger {
            rows: vec![LedgerRow::default(); 5],
        };
        let a = energy_audit(&zero, &mp).unwrap();
        assert!(a.ratios.is_empty() || a.ratios.iter().all(|r| r.1 == 0.0));
        assert!(energy_audit(&ledger(), &mp).is_ok());
        let mut bad = ledger();
        for r in &mut bad.rows {
            r.viscous_dissipation = -r.viscous_dissipation;
        }
        assert!(matches!(energy_audit(&bad, &mp), Err(Error::AuditFailure { step: 1, .. })));
        let mut gain = ledger();
        gain.rows[3].bending += 1.0;
        assert!(matches!(energy_audit(&gain, &mp), Err(Error::AuditFailure { step: 3, .. })));
    }

    #[test]
    fn ladder_validation() {
        let mp = ModelParams::coupled(1.0, 1.0, 0.1, 1e-3, 1e-3, 0.125, Exponent::integer(2), 1).unwrap();
        let mut l = Ladder {
            model: mp,
            forcing: Forcing::none(),
            eps: vec![],
            t_end: 0.5,
            n: 16,
            m: 16,
            dt: 1e-3,
            reduced_dt: 1e-3,
            output_interval: 0.01,
        };
        assert!(matches!(l.validate(), Err(Error::Config(_))));
        l.eps = vec![0.125, 0.25];
        assert!(l.validate().is_err());
        l.eps = vec![0.125, 0.1];
        assert!(l.validate().is_err());
        l.eps = vec![0.125, 0.0625];
        assert!(l.validate().is_ok());
        l.dt = 3e-3;
        assert!(l.validate().is_err());
    }

    proptest! {
        #[test]
        fn norms_are_homogeneous_and_subadditive(
            a in proptest::collection::vec(-1.0f64..1.0, 16),
            b in proptest::collection::vec(-1.0f64..1.0, 16),
            s in -3.0f64..3.0,
        ) {
            let g = PeriodicGrid::new(1, 16).unwrap();
            let fa = PeriodicField::new(g, a).unwrap();
            let fb = PeriodicField::new(g, b).unwrap();
            let na = h2_norm(&fa);
            prop_assert!((h2_norm(&fa.scaled(s)) - s.abs() * na).abs() <= 1e-12 * (1.0 + na));
            prop_assert!(h2_norm(&fa.add(&fb).unwrap()) <= na + h2_norm(&fb) + 1e-12 * (1.0 + na));

            let vn = VerticalNodes::new(6).unwrap();
            let ca = ChannelField::from_layers(vec![fa.clone(); 6]).unwrap();
            let cb = ChannelField::from_layers(vec![fb.clone(); 6]).unwrap();
            let t = [0.0, 1.0];
            let n = |c: &ChannelField| thin_norm_l2l2(&[vec![c.clone()], vec![c.clone()]], &t, 0.3, &vn).unwrap();
            prop_assert!((n(&ca.scaled(s)) - s.abs() * n(&ca)).abs() <= 1e-12 * (1.0 + n(&ca)));
            prop_assert!(n(&ca.add(&cb).unwrap()) <= n(&ca) + n(&cb) + 1e-12);
        }

        #[test]
        fn fit_ignores_common_scale(c in 1e-3f64..1e3, p in 0.5f64..5.0) {
            let eps = [0.125, 0.0625, 0.03125];
            let r1: Vec<_> = eps.iter().map(|&e| report(e, e.powf(p) * (1.0 + e))).collect();
            let r2: Vec<_> = eps.iter().map(|&e| report(e, c * e.powf(p) * (1.0 + e))).collect();
            let s1 = fit_rate(&r1, Norm::Displacement).unwrap().slope;
            let s2 = fit_rate(&r2, Norm::Displacement).unwrap().slope;
            prop_assert!((s1 - s2).abs() < 1e-10);
        }
    }
}
