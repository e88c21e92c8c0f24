//! Collective-coordinate reduction: the kink is replaced by its center x₀,
//! which obeys
//!
//! ```text
//! ẍ₀ = ±2 V'(x₀) / Λ(x₀)
//! ```
//!
//! The sign depends on the local ansatz. A tanh-shaped kink sitting in the
//! well (or on a barrier) takes `+` when the well is deep enough that
//! Λ(x_c) < 0 and `−` otherwise. The quadratic ansatz used for a kink held
//! away from the well center flips that sign.

use std::io::{self, Write};

use thiserror::Error;

use crate::model::{self, Impurity, ModelParams};
use crate::output;

/// |Λ| below which the reduced equation is singular.
pub const SINGULAR_LAMBDA: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CollectiveError {
    #[error("Λ(x0) = {lambda:e} vanishes at x0 = {x0}")]
    SingularLambda { x0: f64, lambda: f64 },
    #[error("no oscillation: μ = {mu} <= 0")]
    NoOscillation { mu: f64 },
    #[error("curvature ε = {0} is negative; the well bottom is not a minimum")]
    NegativeCurvature(f64),
    #[error("not an attractive well: h = {0}")]
    NotAWell(f64),
    #[error("invalid integration settings: {0}")]
    InvalidSettings(String),
}

impl CollectiveError {
    pub fn kind(&self) -> &'static str {
        match self {
            CollectiveError::SingularLambda { .. } => "SingularLambda",
            CollectiveError::NoOscillation { .. } => "NoOscillation",
            CollectiveError::NegativeCurvature(_) => "NegativeCurvature",
            CollectiveError::NotAWell(_) => "NotAWell",
            CollectiveError::InvalidSettings(_) => "InvalidSettings",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollectiveState {
    pub x0: f64,
    pub x0_dot: f64,
}

/// Which local profile the reduced equation was derived from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ansatz {
    /// tanh kink sitting on the impurity center.
    Kink,
    /// Quadratic bump `A (1 − Λ (x − x₀)²/2)`; reverses the sign.
    Quadratic,
}

/// ±1 prefactor sign for the given ansatz.
pub fn force_sign(params: &ModelParams, imp: &Impurity, ansatz: Ansatz) -> f64 {
    let deep = model::lambda_eff(params, imp, imp.x_c) < 0.0;
    let s = if deep { 1.0 } else { -1.0 };
    match ansatz {
        Ansatz::Kink => s,
        Ansatz::Quadratic => -s,
    }
}

/// Center acceleration for the tanh ansatz.
pub fn cc_acceleration(params: &ModelParams, imp: &Impurity, x0: f64) -> Result<f64, CollectiveError> {
    acceleration(params, imp, x0, Ansatz::Kink)
}

pub fn acceleration(
    params: &ModelParams,
    imp: &Impurity,
    x0: f64,
    ansatz: Ansatz,
) -> Result<f64, CollectiveError> {
    let lambda = model::lambda_eff(params, imp, x0);
    if lambda.abs() < SINGULAR_LAMBDA {
        return Err(CollectiveError::SingularLambda { x0, lambda });
    }
    Ok(force_sign(params, imp, ansatz) * 2.0 * imp.derivative(x0) / lambda)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CcTrajectory {
    pub t: Vec<f64>,
    pub x0: Vec<f64>,
    pub x0_dot: Vec<f64>,
}

impl CcTrajectory {
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "t,x0,x0_dot")?;
        for k in 0..self.t.len() {
            output::write_row(w, &[self.t[k], self.x0[k], self.x0_dot[k]])?;
        }
        Ok(())
    }

    pub fn last(&self) -> CollectiveState {
        let k = self.t.len() - 1;
        CollectiveState {
            x0: self.x0[k],
            x0_dot: self.x0_dot[k],
        }
    }
}

/// Fixed-step RK4 integration of the reduced equation. Aborts with
/// `SingularLambda` if any stage lands where Λ vanishes.
pub fn integrate_cc(
    params: &ModelParams,
    imp: &Impurity,
    ansatz: Ansatz,
    initial: CollectiveState,
    t_end: f64,
    dt: f64,
) -> Result<CcTrajectory, CollectiveError> {
    if !(dt > 0.0 && t_end > 0.0 && dt.is_finite() && t_end.is_finite()) {
        return Err(CollectiveError::InvalidSettings(format!(
            "need dt > 0 and t_end > 0, got dt = {dt}, t_end = {t_end}"
        )));
    }
    let steps = (t_end / dt).round() as usize;
    let acc = |x: f64| acceleration(params, imp, x, ansatz);
    let mut out = CcTrajectory {
        t: Vec::with_capacity(steps + 1),
        x0: Vec::with_capacity(steps + 1),
        x0_dot: Vec::with_capacity(steps + 1),
    };
    let (mut x, mut v) = (initial.x0, initial.x0_dot);
    // the starting point must itself be regular
    acc(x)?;
    out.t.push(0.0);
    out.x0.push(x);
    out.x0_dot.push(v);
    for n in 0..steps {
        let k1x = v;
        let k1v = acc(x)?;
        let k2x = v + 0.5 * dt * k1v;
        let k2v = acc(x + 0.5 * dt * k1x)?;
        let k3x = v + 0.5 * dt * k2v;
        let k3v = acc(x + 0.5 * dt * k2x)?;
        let k4x = v + dt * k3v;
        let k4v = acc(x + dt * k3x)?;
        let x_new = x + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
        let v_new = v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        // Λ may change sign between samples without any stage hitting it
        let l_old = model::lambda_eff(params, imp, x);
        let l_new = model::lambda_eff(params, imp, x_new);
        if l_old.signum() != l_new.signum() {
            return Err(CollectiveError::SingularLambda {
                x0: 0.5 * (x + x_new),
                lambda: 0.0,
            });
        }
        x = x_new;
        v = v_new;
        out.t.push((n + 1) as f64 * dt);
        out.x0.push(x);
        out.x0_dot.push(v);
    }
    Ok(out)
}

/// Quadratic expansion `V ≈ −V0 + ε (x − x_c)²` of a well bottom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WellQuadratic {
    pub v0: f64,
    pub eps: f64,
}

impl WellQuadratic {
    /// For `h sech²(a y)`: V0 = −h, ε = −h a².
    pub fn from_impurity(imp: &Impurity) -> Result<Self, CollectiveError> {
        if imp.h > 0.0 {
            return Err(CollectiveError::NotAWell(imp.h));
        }
        Ok(Self {
            v0: -imp.h,
            eps: -imp.h * imp.a * imp.a,
        })
    }

    /// μ = √(4ε/5) + (9/10)(V0 − 1), positive root.
    pub fn mu(&self) -> Result<f64, CollectiveError> {
        if self.eps < 0.0 {
            return Err(CollectiveError::NegativeCurvature(self.eps));
        }
        Ok((0.8 * self.eps).sqrt() + 0.9 * (self.v0 - 1.0))
    }
}

/// Small-oscillation estimate ω = √(2μ) for a kink trapped at a well bottom.
pub fn small_osc_frequency(wq: &WellQuadratic) -> Result<f64, CollectiveError> {
    let mu = wq.mu()?;
    if mu <= 0.0 {
        return Err(CollectiveError::NoOscillation { mu });
    }
    Ok((2.0 * mu).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    CenteredAttractive,
    OffCenterAttractive,
    BarrierTop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Unstable,
}

impl std::fmt::Display for Stability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
        })
    }
}

/// Sign analysis of the reduced equation near the impurity center: stable iff
/// a small displacement to either side is pushed back.
///
/// Kinks on the well center or on a barrier use the tanh ansatz, kinks held
/// off the well center use the quadratic one. The force is sampled at
/// `x_c ± δ` rather than linearized, since Λ(x_c) may vanish exactly.
pub fn classify_stability(params: &ModelParams, imp: &Impurity, placement: Placement) -> Stability {
    let ansatz = match placement {
        Placement::CenteredAttractive | Placement::BarrierTop => Ansatz::Kink,
        Placement::OffCenterAttractive => Ansatz::Quadratic,
    };
    let mut delta = 1e-3 / imp.a;
    for _ in 0..8 {
        let right = acceleration(params, imp, imp.x_c + delta, ansatz);
        let left = acceleration(params, imp, imp.x_c - delta, ansatz);
        if let (Ok(r), Ok(l)) = (right, left) {
            return if r < 0.0 && l > 0.0 {
                Stability::Stable
            } else {
                Stability::Unstable
            };
        }
        delta *= 0.5;
    }
    Stability::Unstable
}
