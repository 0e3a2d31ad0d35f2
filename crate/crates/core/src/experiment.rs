//! Experiment configurations, the preset catalog and the artifact writer
//! behind the command-line runner.
//!
//! A configuration is a strict JSON document:
//!
//! ```json
//! { "version": 1, "mode": "rates", "preset": "theorem-e0-kappa2" }
//! ```
//!
//! with either a `preset` id or an explicit `params` object whose shape
//! depends on `mode`. Unknown keys anywhere are errors.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fsi::{run_fsi, Forcing, FsiParams};
use crate::profile::{HarmonicSum, Phase, TimeRamp};
use crate::scaling::{Exponent, ModelParams, NonlinearScalingPreset};
use crate::spectral::{PeriodicField, PeriodicGrid};
use crate::thinfilm::{self, film_energy, FilmState, ThinFilmModel};
use crate::verify::{energy_audit, run_ladder, Ladder, Norm, MIN_R2};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Thinfilm,
    Fsi,
    Rates,
    Reynolds,
}

/// `n` horizontal nodes per direction; `m` vertical nodes where relevant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Resolution {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
}

impl std::str::FromStr for Resolution {
    type Err = Error;

    /// `"n"` or `"n,m"`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("resolution `{s}` is not of the form n or n,m"));
        let mut it = s.split(',').map(|p| p.trim().parse::<usize>());
        let n = it.next().ok_or_else(bad)?.map_err(|_| bad())?;
        let m = it.next().transpose().map_err(|_| bad())?;
        if it.next().is_some() {
            return Err(bad());
        }
        Ok(Resolution { n, m })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<Resolution>,
}

/// Film evolution from a closed-form initial height.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThinFilmRun {
    pub model: ThinFilmModel,
    pub n: usize,
    pub eta0: HarmonicSum,
    pub dt: f64,
    pub steps: usize,
    #[serde(default = "one")]
    pub record_every: usize,
}

/// Full-order channel run started from rest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FsiRunSpec {
    pub model: ModelParams,
    pub forcing: Forcing,
    pub n: usize,
    pub m: usize,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "one")]
    pub output_every: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReynoldsSolve {
    pub eta: HarmonicSum,
    pub n: usize,
    #[serde(rename = "v_D")]
    pub v_d: f64,
    #[serde(default = "one_f64")]
    pub nu: f64,
}

fn one() -> usize {
    1
}

fn one_f64() -> f64 {
    1.0
}

/// A fully resolved experiment.
#[derive(Clone, Debug, PartialEq)]
pub enum Experiment {
    Thinfilm(ThinFilmRun),
    Fsi(FsiRunSpec),
    Rates(Ladder),
    Reynolds(ReynoldsSolve),
}

impl Experiment {
    pub fn mode(&self) -> Mode {
        match self {
            Experiment::Thinfilm(_) => Mode::Thinfilm,
            Experiment::Fsi(_) => Mode::Fsi,
            Experiment::Rates(_) => Mode::Rates,
            Experiment::Reynolds(_) => Mode::Reynolds,
        }
    }

    fn params_value(&self) -> Value {
        match self {
            Experiment::Thinfilm(p) => serde_json::to_value(p),
            Experiment::Fsi(p) => serde_json::to_value(p),
            Experiment::Rates(p) => serde_json::to_value(p),
            Experiment::Reynolds(p) => serde_json::to_value(p),
        }
        .expect("experiment parameters serialize")
    }

    fn from_value(mode: Mode, v: Value) -> Result<Self> {
        Ok(match mode {
            Mode::Thinfilm => Experiment::Thinfilm(serde_json::from_value(v)?),
            Mode::Fsi => Experiment::Fsi(serde_json::from_value(v)?),
            Mode::Rates => Experiment::Rates(serde_json::from_value(v)?),
            Mode::Reynolds => Experiment::Reynolds(serde_json::from_value(v)?),
        })
    }

    fn apply_resolution(&mut self, r: Resolution) {
        match self {
            Experiment::Thinfilm(p) => p.n = r.n,
            Experiment::Reynolds(p) => p.n = r.n,
            Experiment::Fsi(p) => {
                p.n = r.n;
                p.m = r.m.unwrap_or(p.m);
            }
            Experiment::Rates(p) => {
                p.n = r.n;
                p.m = r.m.unwrap_or(p.m);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Experiment::Thinfilm(p) => {
                p.model.validate()?;
                PeriodicGrid::new(1, p.n)?;
                if !(p.dt > 0.0) || p.steps == 0 {
                    return Err(Error::Config("thinfilm run needs dt > 0 and steps > 0".into()));
                }
                Ok(())
            }
            Experiment::Fsi(p) => {
                FsiParams::new(p.model.clone(), p.n, p.m, p.dt, p.forcing.clone())?;
                if !(p.t_end > 0.0) {
                    return Err(Error::Config("t_end must be > 0".into()));
                }
                Ok(())
            }
            Experiment::Rates(p) => p.validate(),
            Experiment::Reynolds(p) => {
                PeriodicGrid::new(1, p.n)?;
                if !(p.nu > 0.0) {
                    return Err(Error::Config("nu must be > 0".into()));
                }
                Ok(())
            }
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let c: ExperimentConfig = serde_json::from_str(s)?;
        if c.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                c.version
            )));
        }
        Ok(c)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn from_experiment(e: &Experiment) -> Self {
        ExperimentConfig {
            version: CONFIG_VERSION,
            mode: e.mode(),
            preset: None,
            params: Some(e.params_value()),
            output_dir: None,
            resolution: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Looks up the preset or parses `params`, applies the resolution
    /// override and validates.
    pub fn resolve(&self) -> Result<Experiment> {
        let mut e = match (&self.preset, &self.params) {
            (Some(_), Some(_)) => return Err(Error::Config("give either `preset` or `params`, not both".into())),
            (None, None) => return Err(Error::Config("missing `preset` or `params`".into())),
            (Some(id), None) => {
                let e = preset(id)?;
                if e.mode() != self.mode {
                    return Err(Error::Config(format!(
                        "preset `{id}` is a {:?} experiment, not {:?}",
                        e.mode(),
                        self.mode
                    )));
                }
                e
            }
            (None, Some(v)) => Experiment::from_value(self.mode, v.clone())?,
        };
        if let Some(r) = self.resolution {
            e.apply_resolution(r);
        }
        e.validate()?;
        Ok(e)
    }
}

// ---------------------------------------------------------------------------
// presets

pub struct PresetInfo {
    pub id: &'static str,
    pub mode: Mode,
    pub summary: &'static str,
}

pub const PRESETS: &[PresetInfo] = &[
    PresetInfo {
        id: "pm-paper",
        mode: Mode::Thinfilm,
        summary: "porous-medium form d_x^2(eta^4) - 6 d_x(eta v_D): alpha = 1, mobility_scale = 4",
    },
    PresetInfo {
        id: "tf-surface-tension",
        mode: Mode::Thinfilm,
        summary: "fourth-order surface-tension thin film, alpha = 3",
    },
    PresetInfo {
        id: "stf-bending",
        mode: Mode::Thinfilm,
        summary: "sixth-order film under an elastic plate, alpha = 5",
    },
    PresetInfo {
        id: "nonlinear-3.3",
        mode: Mode::Thinfilm,
        summary: "alpha = 5 with c = B_hat/(12 nu) from the moving-interface scaling (B_hat = nu = 1)",
    },
    PresetInfo {
        id: "reynolds-oracle",
        mode: Mode::Reynolds,
        summary: "stationary Reynolds pressure for eta = 1 + 0.5 sin(2 pi x), v_D = 1, n = 256",
    },
    PresetInfo {
        id: "fsi-3d-smoke",
        mode: Mode::Fsi,
        summary: "three-dimensional channel, n = 16, eps = 1/8, kappa = 2",
    },
    PresetInfo {
        id: "theorem-e0-kappa2",
        mode: Mode::Rates,
        summary: "error rates, kappa = 2, f_1 = sin(2 pi x_1) with Gaussian ramp, eps = 2^-3..2^-6",
    },
    PresetInfo {
        id: "theorem-e0-kappa2.5",
        mode: Mode::Rates,
        summary: "as theorem-e0-kappa2 at the largest admissible kappa = 5/2",
    },
];

pub fn list_presets() -> &'static [PresetInfo] {
    PRESETS
}

fn film_run(model: ThinFilmModel, n: usize, dt: f64) -> Experiment {
    Experiment::Thinfilm(ThinFilmRun {
        model,
        n,
        eta0: HarmonicSum::single(1.0, 0.3, 1, Phase::Sin),
        dt,
        steps: 1000,
        record_every: 50,
    })
}

fn theorem_ladder(kappa: Exponent) -> Ladder {
    let model = ModelParams::coupled(1.0, 1.0, 0.1, 1e-3, 1e-3, 0.125, kappa, 1).expect("valid preset");
    Ladder {
        model,
        forcing: Forcing::single(0, 1.0, [1, 0], Phase::Sin, TimeRamp::Gaussian { t_ramp: 0.2 }),
        eps: vec![0.125, 0.0625, 0.03125, 0.015625],
        t_end: 0.5,
        n: 16,
        m: 32,
        dt: 1e-4,
        reduced_dt: 1e-4,
        output_interval: 0.01,
    }
}

pub fn preset(id: &str) -> Result<Experiment> {
    let e = match id {
        "pm-paper" => {
            let mut m = ThinFilmModel::new(1, 1.0)?.with_drift(0.5);
            m.mobility_scale = 4.0;
            film_run(m, 64, 1e-4)
        }
        "tf-surface-tension" => film_run(ThinFilmModel::new(3, 1.0)?, 64, 1e-5),
        "stf-bending" => film_run(ThinFilmModel::new(5, 1.0)?, 32, 1e-6),
        "nonlinear-3.3" => {
            let c = NonlinearScalingPreset::new(1.0, 1.0, 1.0)?.thin_film_coefficient(1.0)?;
            film_run(ThinFilmModel::new(5, c)?, 32, 1e-5)
        }
        "reynolds-oracle" => Experiment::Reynolds(ReynoldsSolve {
            eta: HarmonicSum::single(1.0, 0.5, 1, Phase::Sin),
            n: 256,
            v_d: 1.0,
            nu: 1.0,
        }),
        "fsi-3d-smoke" => Experiment::Fsi(FsiRunSpec {
            model: ModelParams::coupled(1.0, 1.0, 0.1, 1e-3, 1e-3, 0.125, Exponent::integer(2), 2)?,
            forcing: Forcing::single(0, 1.0, [1, 1], Phase::Sin, TimeRamp::Gaussian { t_ramp: 0.02 }),
            n: 16,
            m: 16,
            dt: 1e-3,
            t_end: 0.05,
            output_every: 10,
        }),
        "theorem-e0-kappa2" => Experiment::Rates(theorem_ladder(Exponent::integer(2))),
        "theorem-e0-kappa2.5" => Experiment::Rates(theorem_ladder(Exponent::new(5, 2))),
        _ => return Err(Error::NotFound(id.to_string())),
    };
    Ok(e)
}

// ---------------------------------------------------------------------------
// artifacts

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub mode: Mode,
    pub config_sha256: String,
    pub files: Vec<ArtifactEntry>,
    /// False when a verification criterion encoded in the outputs failed
    /// (only `rates` runs carry one).
    pub passed: bool,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a temporary file in the same directory and renames it
/// into place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("artifact");
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

struct Writer {
    dir: PathBuf,
    files: Vec<ArtifactEntry>,
}

impl Writer {
    fn put(&mut self, name: &str, contents: &str) -> Result<()> {
        write_atomic(&self.dir.join(name), contents.as_bytes())?;
        self.files.push(ArtifactEntry {
            file: name.to_string(),
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(())
    }

    fn put_json(&mut self, name: &str, v: &impl Serialize) -> Result<()> {
        let mut s = serde_json::to_string_pretty(v)?;
        s.push('\n');
        self.put(name, &s)
    }
}

/// Prefixes every data row of a CSV with `t`.
fn with_time(out: &mut String, csv: &str, t: f64, header: bool) {
    let mut lines = csv.lines();
    if let Some(h) = lines.next() {
        if header {
            writeln!(out, "t,{h}").unwrap();
        }
    }
    for l in lines {
        writeln!(out, "{t:e},{l}").unwrap();
    }
}

/// Runs the experiment and writes its artifacts plus `config.json` and
/// `manifest.json` into `dir`.
pub fn run(config: &ExperimentConfig, dir: &Path) -> Result<Manifest> {
    let exp = config.resolve()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut resolved = ExperimentConfig::from_experiment(&exp);
    resolved.preset = config.preset.clone();
    let config_json = resolved.to_json();
    let mut w = Writer {
        dir: dir.to_path_buf(),
        files: Vec::new(),
    };
    w.put("config.json", &format!("{config_json}\n"))?;
    let passed = match &exp {
        Experiment::Thinfilm(p) => run_thinfilm(p, &mut w)?,
        Experiment::Fsi(p) => run_fsi_spec(p, &mut w)?,
        Experiment::Rates(p) => run_rates(p, &mut w)?,
        Experiment::Reynolds(p) => run_reynolds(p, &mut w)?,
    };
    let manifest = Manifest {
        mode: exp.mode(),
        config_sha256: sha256_hex(config_json.as_bytes()),
        files: w.files.clone(),
        passed,
    };
    w.put_json("manifest.json", &manifest)?;
    Ok(manifest)
}

fn run_thinfilm(p: &ThinFilmRun, w: &mut Writer) -> Result<bool> {
    let grid = PeriodicGrid::new(1, p.n)?;
    let eta0 = p.eta0.sample(grid);
    let states = thinfilm::run(&p.model, FilmState::new(eta0, 0.0), p.dt, p.steps, p.record_every)?;
    let mut csv = String::new();
    for (i, s) in states.iter().enumerate() {
        with_time(&mut csv, &s.eta.to_csv().replace("value", "eta"), s.t, i == 0);
    }
    w.put("trajectory.csv", &csv)?;
    let m0 = states[0].mass();
    let drift = states.iter().map(|s| (s.mass() - m0).abs()).fold(0.0, f64::max) / (1.0 + m0.abs());
    let energy: Vec<[f64; 2]> = states.iter().map(|s| [s.t, film_energy(&p.model, &s.eta)]).collect();
    let min_eta = states.iter().map(|s| s.eta.min()).fold(f64::INFINITY, f64::min);
    w.put_json(
        "summary.json",
        &json!({ "mass_drift": drift, "min_eta": min_eta, "energy": energy }),
    )?;
    Ok(true)
}

fn run_fsi_spec(p: &FsiRunSpec, w: &mut Writer) -> Result<bool> {
    let params = FsiParams::new(p.model.clone(), p.n, p.m, p.dt, p.forcing.clone())?.with_output_every(p.output_every);
    let run = run_fsi(&params, p.t_end)?;
    let audit = energy_audit(&run.ledger, &params.model)?;
    let dim = params.model.dim;
    let mut eta = String::new();
    let mut p_csv = String::new();
    let mut v = vec![String::new(); dim + 1];
    for (i, s) in run.snapshots.iter().enumerate() {
        let first = i == 0;
        with_time(&mut eta, &s.eta.to_csv().replace("value", "eta"), s.t, first);
        with_time(&mut p_csv, &s.p.to_csv(&params.vnodes, "p"), s.t, first);
        for (c, out) in v.iter_mut().enumerate() {
            with_time(out, &s.v[c].to_csv(&params.vnodes, &format!("v{}", c + 1)), s.t, first);
        }
    }
    w.put("eta.csv", &eta)?;
    w.put("p.csv", &p_csv)?;
    for (c, s) in v.iter().enumerate() {
        w.put(&format!("v{}.csv", c + 1), s)?;
    }
    w.put("energy_ledger.csv", &run.ledger.to_csv())?;
    let inv = run.terminal().invariants(&params)?;
    w.put_json(
        "summary.json",
        &json!({
            "regime": format!("{:?}", run.verdict),
            "invariants": inv,
            "invariants_hold": inv.holds(),
            "audit_worst_slack": audit.worst_slack,
        }),
    )?;
    Ok(inv.holds())
}

fn run_rates(ladder: &Ladder, w: &mut Writer) -> Result<bool> {
    let result = run_ladder(ladder, true)?;
    let kappa = ladder.model.kappa;
    let mut csv = String::from("eps,kappa,err_velocity,err_pressure,err_displacement,energy_ratio\n");
    for r in result.reports() {
        writeln!(
            csv,
            "{:e},{},{:e},{:e},{:e},{:e}",
            r.eps,
            r.kappa.to_f64(),
            r.err_velocity,
            r.err_pressure,
            r.err_displacement,
            r.energy_ratio
        )
        .unwrap();
    }
    w.put("reports.csv", &csv)?;
    let fits: Vec<Value> = Norm::ALL
        .iter()
        .filter_map(|&n| result.fit(n))
        .map(|f| {
            json!({
                "norm": f.norm,
                "slope": f.slope,
                "intercept": f.intercept,
                "r2": f.r2,
                "theorem_rate": f.norm.theorem_rate(kappa),
                "threshold": f.norm.threshold(kappa),
                "min_r2": MIN_R2,
                "pass": f.passes(kappa),
            })
        })
        .collect();
    let rates_pass = fits.len() == 3 && result.fits.iter().all(|f| f.passes(kappa));
    let spread = result.energy_ratio_spread();
    let resolved = result.prepass.as_ref().map_or(true, |p| p.resolved());
    w.put_json(
        "rates.json",
        &json!({
            "kappa": kappa,
            "fits": fits,
            "energy_ratio_spread": spread,
            "closure_residual": result.closure,
            "prepass": result.prepass,
            "discretization_resolved": resolved,
            "pass": rates_pass,
        }),
    )?;
    Ok(rates_pass)
}

fn run_reynolds(p: &ReynoldsSolve, w: &mut Writer) -> Result<bool> {
    let grid = PeriodicGrid::new(1, p.n)?;
    let eta: PeriodicField = p.eta.sample(grid);
    let (pressure, stats) = thinfilm::solve_reynolds_stationary_with_stats(&eta, p.v_d, p.nu)?;
    w.put("pressure.csv", &pressure.to_csv().replace("value", "p"))?;
    w.put_json(
        "summary.json",
        &json!({ "iterations": stats.iterations, "residual_l2": stats.residual_l2 }),
    )?;
    Ok(true)
}

/// Machine-readable description of a failed run.
pub fn diagnostic(err: &Error) -> Value {
    let mut v = json!({ "error": err.to_string() });
    match err {
        Error::Breakdown { t, last_state, .. } => {
            v["t"] = json!(t);
            v["last_min_eta"] = json!(last_state.eta.min());
            v["last_t"] = json!(last_state.t);
        }
        Error::PositivityViolation { min_eta } => v["min_eta"] = json!(min_eta),
        Error::AuditFailure { step, .. } => v["step"] = json!(step),
        _ => {}
    }
    v
}
