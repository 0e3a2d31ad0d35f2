//! Nondimensional parameters, scaling laws and the coefficient maps of the
//! reduced models.
//!
//! Everything here is an immutable value type. Exponents (`kappa`, `tau`) are
//! kept as exact rationals so that `tau = kappa - 3` holds without rounding
//! for every rung of an ε ladder.

use std::fmt;
use std::path::Path;

use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// An exact rational exponent such as κ or τ.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Exponent(Ratio<i64>);

impl Exponent {
    pub const fn integer(n: i64) -> Self {
        Exponent(Ratio::new_raw(n, 1))
    }

    /// `num / den`, reduced.
    pub fn new(num: i64, den: i64) -> Self {
        Exponent(Ratio::new(num, den))
    }

    /// Nearest small-denominator rational to `x` (exact for dyadic inputs
    /// such as 2.5).
    pub fn from_f64(x: f64) -> Option<Self> {
        if !x.is_finite() {
            return None;
        }
        Ratio::approximate_float(x).map(Exponent)
    }

    pub fn ratio(self) -> Ratio<i64> {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    pub fn is_positive(self) -> bool {
        self.0.is_positive()
    }
}

impl std::ops::Sub for Exponent {
    type Output = Exponent;
    fn sub(self, rhs: Exponent) -> Exponent {
        Exponent(self.0 - rhs.0)
    }
}

impl std::ops::Add for Exponent {
    type Output = Exponent;
    fn add(self, rhs: Exponent) -> Exponent {
        Exponent(self.0 + rhs.0)
    }
}

impl std::ops::Neg for Exponent {
    type Output = Exponent;
    fn neg(self) -> Exponent {
        Exponent(-self.0)
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self.0.denom() == 1 {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let f = self.to_f64();
        // Only emit a bare number when it parses back to the same rational.
        if Exponent::from_f64(f) == Some(*self) {
            if *self.0.denom() == 1 {
                s.serialize_i64(*self.0.numer())
            } else {
                s.serialize_f64(f)
            }
        } else {
            s.serialize_str(&self.to_string())
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Exponent::from_f64(x)
                .ok_or_else(|| serde::de::Error::custom(format!("exponent {x} is not finite"))),
            Raw::Text(s) => parse_rational(&s)
                .ok_or_else(|| serde::de::Error::custom(format!("cannot parse exponent `{s}`"))),
        }
    }
}

fn parse_rational(s: &str) -> Option<Exponent> {
    let s = s.trim();
    match s.split_once('/') {
        Some((n, d)) => {
            let n: i64 = n.trim().parse().ok()?;
            let d: i64 = d.trim().parse().ok()?;
            if d == 0 {
                return None;
            }
            Some(Exponent::new(n, d))
        }
        None => s.parse::<f64>().ok().and_then(Exponent::from_f64),
    }
}

/// Physical and scaling parameters of the thin-channel problems.
///
/// `b` and `rho_s` are the ε-independent constants of the rigidity ansatz;
/// the effective plate coefficients are `b * eps^-kappa` and
/// `rho_s * eps^-kappa`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub rho_f: f64,
    pub nu: f64,
    pub rho_s: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub theta: f64,
    pub eps: f64,
    pub kappa: Exponent,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tau: Option<Exponent>,
    #[serde(rename = "v_D", default)]
    pub v_d: f64,
    #[serde(default = "default_dim")]
    pub dim: usize,
}

fn default_dim() -> usize {
    1
}

impl ModelParams {
    /// Parameters in the coupled regime, `tau = kappa - 3`.
    #[allow(clippy::too_many_arguments)]
    pub fn coupled(
        rho_f: f64,
        nu: f64,
        rho_s: f64,
        b: f64,
        theta: f64,
        eps: f64,
        kappa: Exponent,
        dim: usize,
    ) -> Result<Self> {
        let p = ModelParams {
            rho_f,
            nu,
            rho_s,
            b,
            theta,
            eps,
            kappa,
            tau: None,
            v_d: 0.0,
            dim,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let p: ModelParams = serde_json::from_str(s)?;
        p.validate()?;
        Ok(p)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::param("eps", format!("{} not in (0,1)", self.eps)));
        }
        if !self.kappa.is_positive() {
            return Err(Error::param("kappa", format!("{} must be > 0", self.kappa)));
        }
        if !(self.nu > 0.0) {
            return Err(Error::param("nu", "must be > 0"));
        }
        if !(self.rho_f >= 0.0) {
            return Err(Error::param("rho_f", "must be >= 0"));
        }
        if !(self.rho_s >= 0.0) {
            return Err(Error::param("rho_s", "must be >= 0"));
        }
        if !(self.b > 0.0) {
            return Err(Error::param("B", "must be > 0"));
        }
        if !(self.theta >= 0.0) {
            return Err(Error::param("theta", "must be >= 0"));
        }
        if !self.v_d.is_finite() {
            return Err(Error::param("v_D", "must be finite"));
        }
        if !(1..=2).contains(&self.dim) {
            return Err(Error::param("dim", format!("{} not in {{1,2}}", self.dim)));
        }
        Ok(())
    }

    /// Time-scale exponent; defaults to the coupled choice `kappa - 3`.
    pub fn tau(&self) -> Exponent {
        self.tau.unwrap_or(self.kappa - Exponent::integer(3))
    }

    /// Overrides τ. Anything other than `kappa - 3` leaves the coupled regime.
    pub fn with_tau(mut self, tau: Exponent) -> Self {
        self.tau = Some(tau);
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn is_coupled(&self) -> bool {
        self.tau() == self.kappa - Exponent::integer(3)
    }

    pub fn eps_pow(&self, e: Exponent) -> f64 {
        self.eps.powf(e.to_f64())
    }

    /// T = ε^τ.
    pub fn time_scale(&self) -> f64 {
        self.eps_pow(self.tau())
    }

    /// Effective rigidity B ε^{-κ}.
    pub fn rigidity(&self) -> f64 {
        self.b * self.eps_pow(-self.kappa)
    }

    /// Effective plate density ρ_s ε^{-κ}.
    pub fn structure_density(&self) -> f64 {
        self.rho_s * self.eps_pow(-self.kappa)
    }
}

/// Lamé constants of the elastic layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LameParams {
    pub mu: f64,
    pub lambda: f64,
}

impl LameParams {
    pub fn new(mu: f64, lambda: f64) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::param("mu", "must be > 0"));
        }
        if !(lambda >= 0.0) {
            return Err(Error::param("lambda", "must be >= 0"));
        }
        Ok(LameParams { mu, lambda })
    }
}

/// ε-independent constants of the moving-interface thin-film regime:
/// `B = B̂/ε`, `D = D̂/ε²`, `ρ_s = ρ̂_s/ε`, `T = ε⁻²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearScalingPreset {
    pub b_hat: f64,
    pub d_hat: f64,
    pub rho_s_hat: f64,
}

impl NonlinearScalingPreset {
    pub fn new(b_hat: f64, d_hat: f64, rho_s_hat: f64) -> Result<Self> {
        for (name, v) in [("b_hat", b_hat), ("d_hat", d_hat), ("rho_s_hat", rho_s_hat)] {
            if !(v > 0.0) {
                return Err(Error::param(name, "must be > 0"));
            }
        }
        Ok(NonlinearScalingPreset {
            b_hat,
            d_hat,
            rho_s_hat,
        })
    }

    pub fn rigidity(&self, eps: f64) -> f64 {
        self.b_hat / eps
    }

    pub fn visco_elasticity(&self, eps: f64) -> f64 {
        self.d_hat / (eps * eps)
    }

    pub fn structure_density(&self, eps: f64) -> f64 {
        self.rho_s_hat / eps
    }

    pub fn time_scale(&self, eps: f64) -> f64 {
        1.0 / (eps * eps)
    }

    /// Leading coefficient of the limit sixth-order thin-film equation,
    /// `∂tη = B̂/(12ν) ∂x(η³ ∂x⁵η)`.
    pub fn thin_film_coefficient(&self, nu: f64) -> Result<f64> {
        reduced_coefficient_e0(self.b_hat, nu)
    }

    /// Scale of the uniform energy bound, `t ε³`.
    pub fn energy_bound_scale(t: f64, eps: f64) -> f64 {
        t * eps.powi(3)
    }

    /// Scale of the uniform sup bound on the displacement, `ε`.
    pub fn displacement_bound_scale(eps: f64) -> f64 {
        eps
    }
}

/// τ = κ − 3: the time scale on which the plate bending balances the
/// lubrication pressure.
pub fn time_scale_exponent(kappa: Exponent) -> Result<Exponent> {
    if !kappa.is_positive() {
        return Err(Error::InvalidRegime(format!("kappa = {kappa} must be > 0")));
    }
    Ok(kappa - Exponent::integer(3))
}

/// Outcome of [`validate_theorem_regime`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RegimeVerdict {
    /// 0 < κ ≤ 5/2: the error rates are guaranteed.
    Pass,
    /// 5/2 < κ < 3: solvers run but the rates carry no guarantee.
    Warn(String),
    Fail(String),
}

impl RegimeVerdict {
    pub fn passes(&self) -> bool {
        matches!(self, RegimeVerdict::Pass)
    }

    pub fn is_fail(&self) -> bool {
        matches!(self, RegimeVerdict::Fail(_))
    }
}

pub fn validate_theorem_regime(kappa: Exponent) -> RegimeVerdict {
    let five_halves = Exponent::new(5, 2);
    if !kappa.is_positive() {
        RegimeVerdict::Fail(format!("kappa = {kappa} violates kappa > 0"))
    } else if kappa <= five_halves {
        RegimeVerdict::Pass
    } else if kappa < Exponent::integer(3) {
        RegimeVerdict::Warn(format!(
            "kappa = {kappa} exceeds 5/2 (tau = {} > -1/2); rates are not guaranteed",
            kappa - Exponent::integer(3)
        ))
    } else {
        RegimeVerdict::Fail(format!("kappa = {kappa} violates kappa <= 5/2"))
    }
}

/// `B / (12 ν)`, the coefficient of the linear sixth-order reduced model.
pub fn reduced_coefficient_e0(b: f64, nu: f64) -> Result<f64> {
    if !(b > 0.0) {
        return Err(Error::param("B", "must be > 0"));
    }
    if !(nu > 0.0) {
        return Err(Error::param("nu", "must be > 0"));
    }
    Ok(b / (12.0 * nu))
}

/// `2μ(μ+λ) / (9ν(2μ+λ))`, the effective bending coefficient when the
/// cover is a three-dimensional elastic layer.
pub fn reduced_coefficient_eh(lame: LameParams, nu: f64) -> Result<f64> {
    let LameParams { mu, lambda } = lame;
    if !(mu > 0.0) {
        return Err(Error::param("mu", "must be > 0"));
    }
    if !(lambda >= 0.0) {
        return Err(Error::param("lambda", "must be >= 0"));
    }
    if !(nu > 0.0) {
        return Err(Error::param("nu", "must be > 0"));
    }
    Ok(2.0 * mu * (mu + lambda) / (9.0 * nu * (2.0 * mu + lambda)))
}

/// Re = ρ_f L² / (μ T).
pub fn reynolds_number(rho_f: f64, length: f64, mu: f64, time_scale: f64) -> Result<f64> {
    for (name, v) in [
        ("rho_f", rho_f),
        ("L", length),
        ("mu", mu),
        ("T", time_scale),
    ] {
        if !(v > 0.0) {
            return Err(Error::param(name, "must be > 0"));
        }
    }
    Ok(rho_f * length * length / (mu * time_scale))
}

impl Zero for Exponent {
    fn zero() -> Self {
        Exponent::integer(0)
    }
    fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tau_examples() {
        assert_eq!(time_scale_exponent(Exponent::integer(3)).unwrap(), Exponent::integer(0));
        assert_eq!(time_scale_exponent(Exponent::integer(1)).unwrap(), Exponent::integer(-2));
        assert_eq!(time_scale_exponent(Exponent::integer(2)).unwrap(), Exponent::integer(-1));
        assert!(matches!(
            time_scale_exponent(Exponent::integer(0)),
            Err(Error::InvalidRegime(_))
        ));
        assert!(time_scale_exponent(Exponent::integer(-1)).is_err());
    }

    #[test]
    fn regime_examples() {
        assert!(validate_theorem_regime(Exponent::new(5, 2)).passes());
        assert!(validate_theorem_regime(Exponent::integer(3)).is_fail());
        assert!(validate_theorem_regime(Exponent::new(1, 10)).passes());
        assert!(matches!(
            validate_theorem_regime(Exponent::new(11, 4)),
            RegimeVerdict::Warn(_)
        ));
        assert!(validate_theorem_regime(Exponent::integer(0)).is_fail());
    }

    #[test]
    fn coefficient_examples() {
        assert_eq!(reduced_coefficient_e0(1.0, 1.0).unwrap(), 1.0 / 12.0);
        assert_eq!(reduced_coefficient_e0(12.0, 1.0).unwrap(), 1.0);
        assert_eq!(reduced_coefficient_e0(3.0, 0.25).unwrap(), 1.0);
        assert!(reduced_coefficient_e0(0.0, 1.0).is_err());
        assert!(reduced_coefficient_e0(1.0, -1.0).is_err());

        let c = |mu, lambda, nu| reduced_coefficient_eh(LameParams { mu, lambda }, nu).unwrap();
        assert_eq!(c(1.0, 1.0, 1.0), 4.0 / 27.0);
        assert_eq!(c(1.0, 0.0, 1.0), 1.0 / 9.0);
        assert!((c(1.0, 1e6, 1.0) - 2.0 / 9.0).abs() < 1e-5);
        assert!(reduced_coefficient_eh(LameParams { mu: 0.0, lambda: 1.0 }, 1.0).is_err());
        assert!(reduced_coefficient_eh(LameParams { mu: 1.0, lambda: 1.0 }, 0.0).is_err());
    }

    #[test]
    fn reynolds_examples() {
        assert_eq!(reynolds_number(1.0, 1.0, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(reynolds_number(2.0, 3.0, 1.0, 2.0).unwrap(), 9.0);
        let eps: f64 = 0.1;
        let re = reynolds_number(1.0, 1.0, 1.0, eps.powi(-2)).unwrap();
        assert!((re - 0.01).abs() < 1e-15);
        assert!(reynolds_number(1.0, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn params_json_roundtrip_and_strictness() {
        let text = r#"{"rho_f":1,"nu":1,"rho_s":0.1,"B":0.001,"theta":0.001,
                      "eps":0.125,"kappa":2,"dim":1}"#;
        let p = ModelParams::from_json_str(text).unwrap();
        assert_eq!(p.tau(), Exponent::integer(-1));
        assert!(p.is_coupled());
        assert_eq!(p.time_scale(), 8.0);
        assert_eq!(p.rigidity(), 0.001 * 64.0);
        let back: ModelParams = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);

        let typo = text.replace("\"kappa\"", "\"kapa\"");
        assert!(ModelParams::from_json_str(&typo).is_err());
        let bad_eps = text.replace("0.125", "1.5");
        assert!(matches!(
            ModelParams::from_json_str(&bad_eps),
            Err(Error::InvalidParameter { name: "eps", .. })
        ));
        let rational = text.replace("\"kappa\":2", "\"kappa\":\"5/2\"");
        let p = ModelParams::from_json_str(&rational).unwrap();
        assert_eq!(p.tau(), Exponent::new(-1, 2));
    }

    #[test]
    fn nonlinear_preset_scalings() {
        let p = NonlinearScalingPreset::new(2.0, 3.0, 4.0).unwrap();
        assert_eq!(p.rigidity(0.5), 4.0);
        assert_eq!(p.visco_elasticity(0.5), 12.0);
        assert_eq!(p.structure_density(0.5), 8.0);
        assert_eq!(p.time_scale(0.5), 4.0);
        assert_eq!(p.thin_film_coefficient(1.0).unwrap(), 2.0 / 12.0);
        assert!(NonlinearScalingPreset::new(0.0, 1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn tau_is_affine(a in 1i64..400, b in 1i64..400, d in 1i64..16) {
            let k1 = Exponent::new(a, d);
            let k2 = Exponent::new(b, d);
            let t1 = time_scale_exponent(k1).unwrap();
            let t2 = time_scale_exponent(k2).unwrap();
            prop_assert_eq!(t1 - t2, k1 - k2);
        }

        #[test]
        fn eh_monotone_in_lambda(mu in 0.1f64..10.0, nu in 0.1f64..10.0,
                                 l1 in 0.0f64..100.0, dl in 1e-3f64..100.0) {
            let c = |l| reduced_coefficient_eh(LameParams { mu, lambda: l }, nu).unwrap();
            prop_assert!(c(l1 + dl) > c(l1));
        }

        #[test]
        fn coefficients_homogeneous_in_nu(b in 0.1f64..10.0, mu in 0.1f64..10.0,
                                          lambda in 0.0f64..10.0, nu in 0.1f64..10.0,
                                          a in 0.1f64..10.0) {
            let e0 = reduced_coefficient_e0(b, a * nu).unwrap();
            prop_assert!((e0 - reduced_coefficient_e0(b, nu).unwrap() / a).abs() <= 1e-14 * e0.abs());
            let lame = LameParams { mu, lambda };
            let eh = reduced_coefficient_eh(lame, a * nu).unwrap();
            prop_assert!((eh - reduced_coefficient_eh(lame, nu).unwrap() / a).abs() <= 1e-14 * eh.abs());
        }
    }
}
