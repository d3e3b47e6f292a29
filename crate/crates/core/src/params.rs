//! System parameters, their validity rules, and the derived quantities
//! (measurement error budget, threshold count, skew bounds).

use log::warn;
use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::{div_ceil_i128, format_time, ps, to_ppb, Fs, PPB};

/// Algorithm and hardware constants. Times are femtoseconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub rho: f64,
    pub mu: f64,
    pub kappa: Fs,
    pub delta0: Fs,
    pub epsilon: Fs,
    pub ell: u32,
    pub d: Fs,
    pub u: Fs,
    pub t_clk: Fs,
    pub t_osc: Fs,
    pub t_meas: Fs,
    pub t_ctr: Fs,
    /// Measurements are pipelined, so a new word may be sampled before the
    /// previous one reached the controller. Without it the clock period must
    /// cover the whole measure-control-oscillator loop.
    pub buffered: bool,
}

impl Default for SystemParams {
    fn default() -> Self {
        SystemParams {
            rho: 1e-5,
            mu: 1e-4,
            kappa: ps(10),
            delta0: ps(4),
            epsilon: 500,
            ell: 2,
            d: ps(2),
            u: ps(1),
            t_clk: ps(500),
            t_osc: ps(250),
            t_meas: ps(500),
            t_ctr: ps(25),
            buffered: true,
        }
    }
}

impl SystemParams {
    pub fn t_max(&self) -> Fs {
        self.t_meas + self.t_ctr + self.t_osc
    }

    pub fn rho_ppb(&self) -> i64 {
        to_ppb(self.rho)
    }

    pub fn mu_ppb(&self) -> i64 {
        to_ppb(self.mu)
    }

    /// `(1+rho)(1+mu) - 1` scaled by `PPB^2`: the largest relative rate
    /// difference between two logical clocks.
    pub fn drift_spread(&self) -> i128 {
        let p = PPB as i128;
        (p + self.rho_ppb() as i128) * (p + self.mu_ppb() as i128) - p * p
    }

    /// Largest static per-edge perturbation that keeps every sampled
    /// estimate within `delta0` of the true offset: the remainder of `delta0`
    /// after the delay-compensation error `U/2 + d(rho+mu+rho*mu)`.
    pub fn perturbation_budget(&self) -> Fs {
        let p2 = (PPB as i128) * (PPB as i128);
        let delay_drift = div_ceil_i128(self.d as i128 * self.drift_spread(), p2) as Fs;
        // U/2 rounded up keeps the budget conservative for odd U.
        self.delta0 - (self.u + 1) / 2 - delay_drift
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ParamError {
    #[error("parameter {0} is not finite")]
    NotFinite(&'static str),
    #[error("parameter {0} is negative")]
    Negative(&'static str),
    #[error("constraint {name} violated: {lhs} vs {rhs}")]
    ConstraintViolation { name: &'static str, lhs: String, rhs: String },
}

fn violation(name: &'static str, lhs: impl ToString, rhs: impl ToString) -> ParamError {
    ParamError::ConstraintViolation { name, lhs: lhs.to_string(), rhs: rhs.to_string() }
}

/// Parameters that passed [`validate_params`] for a given network diameter.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidatedParams {
    params: SystemParams,
    diameter: u32,
    delta: Fs,
    bounds: SkewBounds,
    warnings: Vec<String>,
}

impl ValidatedParams {
    pub fn params(&self) -> &SystemParams {
        &self.params
    }
    pub fn diameter(&self) -> u32 {
        self.diameter
    }
    pub fn delta(&self) -> Fs {
        self.delta
    }
    pub fn bounds(&self) -> SkewBounds {
        self.bounds
    }
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }
}

impl std::ops::Deref for ValidatedParams {
    type Target = SystemParams;
    fn deref(&self) -> &SystemParams {
        &self.params
    }
}

/// Checks every constraint the correctness argument needs. The threshold
/// count can only be checked against a topology, hence `diameter`.
pub fn validate_params(p: &SystemParams, diameter: u32) -> Result<ValidatedParams, ParamError> {
    for (name, v) in [("rho", p.rho), ("mu", p.mu)] {
        if !v.is_finite() {
            return Err(ParamError::NotFinite(name));
        }
        if v < 0.0 {
            return Err(ParamError::Negative(name));
        }
    }
    let times = [
        ("kappa", p.kappa),
        ("delta0", p.delta0),
        ("epsilon", p.epsilon),
        ("d", p.d),
        ("u", p.u),
        ("t_clk", p.t_clk),
        ("t_osc", p.t_osc),
        ("t_meas", p.t_meas),
        ("t_ctr", p.t_ctr),
    ];
    for (name, v) in times {
        if v < 0 {
            return Err(ParamError::Negative(name));
        }
    }
    if p.t_clk == 0 {
        return Err(violation("t_clk>0", 0, 0));
    }
    if p.u > p.d {
        return Err(violation("u<=d", format_time(p.u), format_time(p.d)));
    }
    if diameter == 0 {
        return Err(violation("diameter>=1", 0, 1));
    }
    let (rho, mu) = (p.rho_ppb(), p.mu_ppb());
    if mu <= 2 * rho {
        return Err(violation("mu>2rho", p.mu, 2.0 * p.rho));
    }
    let delta = derived_delta(p);
    if p.kappa <= 2 * delta {
        return Err(violation("kappa>2delta", format_time(p.kappa), format_time(2 * delta)));
    }
    if p.epsilon <= 0 || p.epsilon >= p.kappa {
        return Err(violation("0<epsilon<kappa", format_time(p.epsilon), format_time(p.kappa)));
    }
    let bounds = local_and_global(rho, mu, p.kappa, diameter);
    let need = required_ell(p.kappa, delta, bounds.local_bound);
    if p.ell < need {
        return Err(violation("ell>=required_ell", p.ell, need));
    }
    if p.perturbation_budget() < 0 {
        return Err(violation(
            "delta0>=U/2+d(rho+mu+rho*mu)",
            format_time(p.delta0),
            format_time(p.delta0 - p.perturbation_budget()),
        ));
    }
    let mut warnings = Vec::new();
    if p.epsilon * 10 > p.kappa {
        warnings.push(format!(
            "epsilon {} exceeds kappa/10; thresholds are not well separated",
            format_time(p.epsilon)
        ));
    }
    if p.kappa < 2 * delta + p.epsilon {
        warnings.push(format!(
            "kappa {} is below 2*delta+epsilon {}; the slow condition no longer forces a stable slow word",
            format_time(p.kappa),
            format_time(2 * delta + p.epsilon)
        ));
    }
    for w in &warnings {
        warn!("{w}");
    }
    Ok(ValidatedParams { params: p.clone(), diameter, delta, bounds, warnings })
}

/// Measurement error bound: `delta0 + (rho+mu+rho*mu)(T_clk+T_max)`,
/// rounded up to the femtosecond grid.
pub fn derived_delta(p: &SystemParams) -> Fs {
    let p2 = (PPB as i128) * (PPB as i128);
    let span = (p.t_clk + p.t_max()) as i128;
    p.delta0 + div_ceil_i128(p.drift_spread() * span, p2) as Fs
}

/// Smallest usable threshold count: the largest `s` with
/// `(2s+1)kappa <= local_bound + 2delta`, but at least 1.
pub fn required_ell(kappa: Fs, delta: Fs, local_bound: Fs) -> u32 {
    assert!(kappa > 0, "kappa must be positive");
    let room = local_bound + 2 * delta;
    if room < kappa {
        return 1;
    }
    // (2s+1)k <= room  <=>  s <= (room/k - 1)/2
    let s = (room / kappa - 1) / 2;
    (s as u32).max(1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkewBounds {
    pub global_bound: Fs,
    pub local_bound: Fs,
    /// `ceil(log_{mu/rho}(mu*D/(mu-2rho)))`; the local bound is
    /// `(log_term+1)*kappa`.
    pub log_term: u32,
}

pub fn skew_bounds(p: &ValidatedParams, diameter: u32) -> SkewBounds {
    local_and_global(p.rho_ppb(), p.mu_ppb(), p.kappa, diameter)
}

/// Bounds on the ppb grid; requires `mu > 2rho` and `diameter >= 1`.
pub fn local_and_global(rho: i64, mu: i64, kappa: Fs, diameter: u32) -> SkewBounds {
    assert!(mu > 2 * rho && diameter >= 1);
    let denom = (mu - 2 * rho) as i128;
    let global = div_ceil_i128(mu as i128 * kappa as i128 * diameter as i128, denom) as Fs;
    let k = log_term(rho, mu, diameter);
    SkewBounds { global_bound: global, local_bound: (k as Fs + 1) * kappa, log_term: k }
}

/// Smallest `k >= 0` with `(mu/rho)^k >= mu*D/(mu-2rho)`, decided exactly:
/// `mu^k (mu-2rho) >= mu D rho^k`.
fn log_term(rho: i64, mu: i64, diameter: u32) -> u32 {
    let mu_b = BigUint::from(mu as u64);
    let rho_b = BigUint::from(rho as u64);
    let lhs_base = BigUint::from((mu - 2 * rho) as u64);
    let rhs_base = &mu_b * BigUint::from(diameter);
    let mut k = 0u32;
    let mut mu_k = BigUint::from(1u32);
    let mut rho_k = BigUint::from(1u32);
    loop {
        if &mu_k * &lhs_base >= &rhs_base * &rho_k {
            return k;
        }
        k += 1;
        mu_k *= &mu_b;
        rho_k *= &rho_b;
    }
}
