//! Explicit time integration of the damped field equation
//!
//! ```text
//! φ_tt = φ_xx − Λ(x) φ (φ² − m²/λ) − γ φ_t
//! ```
//!
//! with a three-level leapfrog. The friction term is centered at step n,
//!
//! ```text
//! φⁿ⁺¹ = [2φⁿ − (1 − γdt/2) φⁿ⁻¹ + dt² F(φⁿ)] / (1 + γdt/2),
//! ```
//!
//! so the update stays explicit. Boundary nodes are held at their initial
//! values, which makes outgoing radiation reflect back into the domain.

use std::io::{self, Write};

use thiserror::Error;

use crate::model::{self, FieldState, Grid, Impurity, ModelError, ModelParams};
use crate::output;

/// Largest admissible dt/dx.
pub const MAX_COURANT: f64 = 1.0;
/// dt/dx used when a config leaves dt unset.
pub const DEFAULT_COURANT: f64 = 0.5;
/// Peak damping rate of the optional sponge layer.
pub const SPONGE_STRENGTH: f64 = 1.0;
/// Fraction of the domain on each side covered by the sponge.
pub const SPONGE_FRACTION: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("CFL violation: dt = {dt} exceeds {limit} * dx = {}", limit * dx)]
    CflViolation { dt: f64, dx: f64, limit: f64 },
    #[error("probe at x = {0} lies outside the grid")]
    ProbeOutsideGrid(f64),
    #[error("initial kink center x0 = {0} lies outside the grid")]
    KinkOutsideGrid(f64),
    #[error("invalid evolution config: {0}")]
    InvalidConfig(String),
    #[error("non-finite field value at index {index} (x = {x}) at t = {t}")]
    NonFinite { index: usize, x: f64, t: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl DynamicsError {
    pub fn kind(&self) -> &'static str {
        match self {
            DynamicsError::CflViolation { .. } => "CflViolation",
            DynamicsError::ProbeOutsideGrid(_) => "ProbeOutsideGrid",
            DynamicsError::KinkOutsideGrid(_) => "KinkOutsideGrid",
            DynamicsError::InvalidConfig(_) => "InvalidConfig",
            DynamicsError::NonFinite { .. } => "NonFinite",
            DynamicsError::Model(e) => e.kind(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// Lorentz-boosted free kink centered at `x0`, moving with speed `v`.
    BoostedKink { x0: f64, v: f64 },
    /// A nodal profile on the run grid, released from rest after shifting it
    /// right by `displacement`. `center` is its kink position before the shift.
    StaticProfile {
        phi: Vec<f64>,
        center: f64,
        displacement: f64,
    },
    /// Vacuum plus a Gaussian bump `A exp(−((x − c)/w)²)`, at rest.
    VacuumPlusPulse {
        amplitude: f64,
        width: f64,
        center: f64,
    },
}

#[derive(Debug, Clone)]
pub struct EvolveConfig {
    pub params: ModelParams,
    pub imp: Impurity,
    pub grid: Grid,
    pub dt: f64,
    pub t_end: f64,
    pub initial: InitialCondition,
    pub probes: Vec<f64>,
    pub record_every: usize,
    pub snapshot_times: Vec<f64>,
    pub sponge: bool,
}

impl EvolveConfig {
    /// Config with the default time step `dt = 0.5 dx`, recording every step.
    pub fn new(
        params: ModelParams,
        imp: Impurity,
        grid: Grid,
        t_end: f64,
        initial: InitialCondition,
    ) -> Self {
        Self {
            params,
            imp,
            dt: DEFAULT_COURANT * grid.dx(),
            grid,
            t_end,
            initial,
            probes: Vec::new(),
            record_every: 1,
            snapshot_times: Vec::new(),
            sponge: false,
        }
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let dx = self.grid.dx();
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(DynamicsError::InvalidConfig(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.dt > MAX_COURANT * dx * (1.0 + 1e-12) {
            return Err(DynamicsError::CflViolation {
                dt: self.dt,
                dx,
                limit: MAX_COURANT,
            });
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(DynamicsError::InvalidConfig(format!(
                "t_end must be > 0, got {}",
                self.t_end
            )));
        }
        if self.record_every == 0 {
            return Err(DynamicsError::InvalidConfig("record_every must be >= 1".into()));
        }
        if let Some(&p) = self.probes.iter().find(|&&p| !self.grid.contains(p)) {
            return Err(DynamicsError::ProbeOutsideGrid(p));
        }
        match &self.initial {
            InitialCondition::BoostedKink { x0, v } => {
                if !self.grid.contains(*x0) {
                    return Err(DynamicsError::KinkOutsideGrid(*x0));
                }
                if !(v.abs() < 1.0) {
                    return Err(ModelError::Superluminal(*v).into());
                }
            }
            InitialCondition::StaticProfile {
                phi,
                center,
                displacement,
            } => {
                if phi.len() != self.grid.len() {
                    return Err(ModelError::ShapeMismatch {
                        expected: self.grid.len(),
                        got: phi.len(),
                    }
                    .into());
                }
                if !self.grid.contains(center + displacement) {
                    return Err(DynamicsError::KinkOutsideGrid(center + displacement));
                }
            }
            InitialCondition::VacuumPlusPulse { width, center, .. } => {
                if !(*width > 0.0) {
                    return Err(DynamicsError::InvalidConfig(format!(
                        "pulse width must be > 0, got {width}"
                    )));
                }
                if !self.grid.contains(*center) {
                    return Err(DynamicsError::InvalidConfig(format!(
                        "pulse center {center} lies outside the grid"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Three-level leapfrog integrator holding φⁿ⁻¹ and φⁿ.
#[derive(Debug, Clone)]
pub struct Leapfrog {
    grid: Grid,
    dt: f64,
    vacuum_sq: f64,
    lambda: Vec<f64>,
    /// Half the local damping rate times dt, γ(x) dt / 2.
    half_damp: Vec<f64>,
    prev: Vec<f64>,
    curr: Vec<f64>,
    force: Vec<f64>,
    steps: usize,
    t0: f64,
}

impl Leapfrog {
    /// Set up φ⁰ and φ⁻¹ from the initial condition.
    pub fn initialize(cfg: &EvolveConfig) -> Result<Self, DynamicsError> {
        cfg.validate()?;
        let grid = cfg.grid;
        let params = &cfg.params;
        let dt = cfg.dt;
        let lambda: Vec<f64> = grid
            .points()
            .map(|x| model::lambda_eff(params, &cfg.imp, x))
            .collect();
        let half_damp: Vec<f64> = grid
            .points()
            .map(|x| 0.5 * dt * (params.gamma + if cfg.sponge { sponge_rate(&grid, x) } else { 0.0 }))
            .collect();

        let mut lf = Self {
            grid,
            dt,
            vacuum_sq: params.vacuum_sq(),
            lambda,
            half_damp,
            prev: Vec::new(),
            curr: Vec::new(),
            force: vec![0.0; grid.len()],
            steps: 0,
            t0: 0.0,
        };

        match &cfg.initial {
            InitialCondition::BoostedKink { x0, v } => {
                let at = |t: f64| -> Result<Vec<f64>, ModelError> {
                    grid.points().map(|x| model::free_kink(params, *x0, *v, x, t)).collect()
                };
                lf.curr = at(0.0)?;
                lf.prev = at(-dt)?;
                // boundary nodes are frozen, so both levels must agree there
                let n = grid.len();
                lf.prev[0] = lf.curr[0];
                lf.prev[n - 1] = lf.curr[n - 1];
            }
            InitialCondition::StaticProfile {
                phi, displacement, ..
            } => {
                let shifted = grid.points().map(|x| grid.interpolate(phi, x - displacement)).collect();
                lf.start_from_rest(shifted);
            }
            InitialCondition::VacuumPlusPulse {
                amplitude,
                width,
                center,
            } => {
                let v = params.vacuum();
                let phi = grid
                    .points()
                    .map(|x| v + amplitude * (-((x - center) / width).powi(2)).exp())
                    .collect();
                lf.start_from_rest(phi);
            }
        }
        Ok(lf)
    }

    /// Second-order Taylor start for data at rest: φ⁻¹ = φ⁰ + ½dt² F(φ⁰).
    fn start_from_rest(&mut self, phi: Vec<f64>) {
        self.curr = phi;
        self.compute_force();
        let h = 0.5 * self.dt * self.dt;
        self.prev = self.curr.iter().zip(&self.force).map(|(c, f)| c + h * f).collect();
    }

    fn compute_force(&mut self) {
        let n = self.curr.len();
        let inv_dx2 = 1.0 / (self.grid.dx() * self.grid.dx());
        let c = &self.curr;
        self.force[0] = 0.0;
        self.force[n - 1] = 0.0;
        for i in 1..n - 1 {
            let lap = (c[i + 1] - 2.0 * c[i] + c[i - 1]) * inv_dx2;
            self.force[i] = lap - self.lambda[i] * c[i] * (c[i] * c[i] - self.vacuum_sq);
        }
    }

    /// Advance by one time step.
    pub fn step(&mut self) -> Result<(), DynamicsError> {
        self.compute_force();
        let n = self.curr.len();
        let dt2 = self.dt * self.dt;
        // reuse prev as the output buffer: next overwrites φⁿ⁻¹ in place
        for i in 1..n - 1 {
            let g = self.half_damp[i];
            self.prev[i] =
                (2.0 * self.curr[i] - (1.0 - g) * self.prev[i] + dt2 * self.force[i]) / (1.0 + g);
        }
        self.prev[0] = self.curr[0];
        self.prev[n - 1] = self.curr[n - 1];
        std::mem::swap(&mut self.prev, &mut self.curr);
        self.steps += 1;
        if let Some(index) = self.curr.iter().position(|v| !v.is_finite()) {
            return Err(DynamicsError::NonFinite {
                index,
                x: self.grid.x(index),
                t: self.time(),
            });
        }
        Ok(())
    }

    pub fn time(&self) -> f64 {
        self.t0 + self.steps as f64 * self.dt
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn phi(&self) -> &[f64] {
        &self.curr
    }

    /// φⁿ⁻¹, the auxiliary prior level.
    pub fn prior(&self) -> &[f64] {
        &self.prev
    }

    /// Current field and velocity. φ_t is the centered difference
    /// (φⁿ⁺¹ − φⁿ⁻¹)/(2dt), obtained in closed form from the update rule.
    pub fn state(&mut self) -> FieldState {
        self.compute_force();
        let n = self.curr.len();
        let mut phi_t = vec![0.0; n];
        for i in 1..n - 1 {
            phi_t[i] = ((self.curr[i] - self.prev[i]) / self.dt + 0.5 * self.dt * self.force[i])
                / (1.0 + self.half_damp[i]);
        }
        FieldState {
            phi: self.curr.clone(),
            phi_t,
            t: self.time(),
        }
    }
}

/// Quadratic damping ramp over the outer [`SPONGE_FRACTION`] of each side.
fn sponge_rate(grid: &Grid, x: f64) -> f64 {
    let layer = SPONGE_FRACTION * (grid.x_max() - grid.x_min());
    let depth = (grid.x_min() + layer - x).max(x - (grid.x_max() - layer)).max(0.0);
    SPONGE_STRENGTH * (depth / layer).powi(2)
}

/// Convenience wrapper: build the integrator for `cfg`.
pub fn initialize(cfg: &EvolveConfig) -> Result<Leapfrog, DynamicsError> {
    Leapfrog::initialize(cfg)
}

/// Zero crossings of `phi`, linearly interpolated.
pub fn zero_crossings(grid: &Grid, phi: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..phi.len() - 1 {
        let (a, b) = (phi[i], phi[i + 1]);
        if a == 0.0 {
            out.push(grid.x(i));
        } else if a * b < 0.0 {
            out.push(grid.x(i) + grid.dx() * a / (a - b));
        }
    }
    if phi.last() == Some(&0.0) {
        out.push(grid.x_max());
    }
    out
}

/// Kink position: the zero crossing nearest `previous`, or NaN if the field
/// has no crossing.
pub fn track_kink(grid: &Grid, phi: &[f64], previous: f64) -> f64 {
    let reference = if previous.is_finite() {
        previous
    } else {
        0.5 * (grid.x_min() + grid.x_max())
    };
    zero_crossings(grid, phi)
        .into_iter()
        .min_by(|a, b| (a - reference).abs().total_cmp(&(b - reference).abs()))
        .unwrap_or(f64::NAN)
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub probes: Vec<f64>,
    /// One series per probe, aligned with `times`.
    pub probe_series: Vec<Vec<f64>>,
    pub energy_series: Vec<f64>,
    pub position_series: Vec<f64>,
    pub snapshots: Vec<FieldState>,
    pub final_state: FieldState,
    pub grid: Grid,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Recorded samples of one probe.
    pub fn probe(&self, index: usize) -> &[f64] {
        &self.probe_series[index]
    }

    /// `max |E(t) − E(0)| / |E(0)|` over the recorded series.
    pub fn relative_energy_drift(&self) -> f64 {
        let e0 = self.energy_series[0];
        self.energy_series
            .iter()
            .map(|e| (e - e0).abs())
            .fold(0.0, f64::max)
            / e0.abs()
    }

    /// `t,probe_<x>...,energy,kink_x`
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend(self.probes.iter().map(|&p| format!("probe_{}", output::label(p))));
        header.push("energy".into());
        header.push("kink_x".into());
        writeln!(w, "{}", header.join(","))?;
        let mut row = Vec::with_capacity(self.probes.len() + 3);
        for k in 0..self.times.len() {
            row.clear();
            row.push(self.times[k]);
            row.extend(self.probe_series.iter().map(|s| s[k]));
            row.push(self.energy_series[k]);
            row.push(self.position_series[k]);
            output::write_row(w, &row)?;
        }
        Ok(())
    }
}

/// `x,phi,phi_t` dump of one field state.
pub fn write_snapshot<W: Write>(w: &mut W, grid: &Grid, state: &FieldState) -> io::Result<()> {
    writeln!(w, "x,phi,phi_t")?;
    for (i, x) in grid.points().enumerate() {
        output::write_row(w, &[x, state.phi[i], state.phi_t[i]])?;
    }
    Ok(())
}

/// Run the full evolution, recording probes, energy and kink position every
/// `record_every` steps (the initial and final states are always recorded).
pub fn evolve(cfg: &EvolveConfig) -> Result<Trajectory, DynamicsError> {
    let mut lf = Leapfrog::initialize(cfg)?;
    let grid = cfg.grid;
    let steps = cfg.steps();

    let mut position = match &cfg.initial {
        InitialCondition::BoostedKink { x0, .. } => *x0,
        InitialCondition::StaticProfile {
            center,
            displacement,
            ..
        } => center + displacement,
        InitialCondition::VacuumPlusPulse { .. } => f64::NAN,
    };
    position = track_kink(&grid, lf.phi(), position);

    let mut snapshot_steps: Vec<(usize, usize)> = cfg
        .snapshot_times
        .iter()
        .enumerate()
        .map(|(k, &t)| (((t / cfg.dt).round().max(0.0) as usize).min(steps), k))
        .collect();
    snapshot_steps.sort_unstable();
    let mut snapshots: Vec<Option<FieldState>> = vec![None; cfg.snapshot_times.len()];
    let mut next_snapshot = 0;

    let capacity = steps / cfg.record_every + 2;
    let mut traj = Trajectory {
        times: Vec::with_capacity(capacity),
        probes: cfg.probes.clone(),
        probe_series: vec![Vec::with_capacity(capacity); cfg.probes.len()],
        energy_series: Vec::with_capacity(capacity),
        position_series: Vec::with_capacity(capacity),
        snapshots: Vec::new(),
        final_state: FieldState::at_rest(Vec::new()),
        grid,
    };

    let record = |lf: &mut Leapfrog, traj: &mut Trajectory, position: f64| {
        let state = lf.state();
        traj.times.push(state.t);
        for (series, &p) in traj.probe_series.iter_mut().zip(&cfg.probes) {
            series.push(grid.interpolate(&state.phi, p));
        }
        traj.energy_series
            .push(model::total_energy(&cfg.params, &cfg.imp, &grid, &state));
        traj.position_series.push(position);
        state
    };

    let mut last = record(&mut lf, &mut traj, position);
    for n in 0..=steps {
        while next_snapshot < snapshot_steps.len() && snapshot_steps[next_snapshot].0 == n {
            let slot = snapshot_steps[next_snapshot].1;
            snapshots[slot] = Some(if lf.steps_taken() == 0 { last.clone() } else { lf.state() });
            next_snapshot += 1;
        }
        if n == steps {
            break;
        }
        lf.step()?;
        position = track_kink(&grid, lf.phi(), position);
        if lf.steps_taken() % cfg.record_every == 0 || lf.steps_taken() == steps {
            last = record(&mut lf, &mut traj, position);
        }
    }
    traj.snapshots = snapshots.into_iter().flatten().collect();
    traj.final_state = last;
    Ok(traj)
}

/// Outcome of releasing a displaced static profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationProbe {
    /// Kink center of the unperturbed profile.
    pub start: f64,
    pub displacement: f64,
    /// Largest |x(t) − start| seen; infinite if the kink was lost.
    pub max_excursion: f64,
}

impl PerturbationProbe {
    /// Stable when the kink never strays beyond twice the initial displacement.
    pub fn is_stable(&self) -> bool {
        self.max_excursion <= 2.0 * self.displacement.abs()
    }
}

/// Shift a converged static profile by `displacement`, release it from rest
/// with γ = 0 on its own grid and follow the kink until `t_end`.
pub fn perturbation_probe(
    params: &ModelParams,
    imp: &Impurity,
    profile: &crate::statics::StaticProfile,
    displacement: f64,
    t_end: f64,
) -> Result<PerturbationProbe, DynamicsError> {
    let start = profile.kink_center;
    let cfg = EvolveConfig::new(
        params.with_gamma(0.0)?,
        *imp,
        profile.grid,
        t_end,
        InitialCondition::StaticProfile {
            phi: profile.phi.clone(),
            center: start,
            displacement,
        },
    );
    let traj = evolve(&cfg)?;
    let max_excursion = traj
        .position_series
        .iter()
        .map(|x| if x.is_finite() { (x - start).abs() } else { f64::INFINITY })
        .fold(0.0, f64::max);
    Ok(PerturbationProbe {
        start,
        displacement,
        max_excursion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kink_config(v: f64, half: f64, dx: f64, t_end: f64) -> EvolveConfig {
        EvolveConfig::new(
            ModelParams::unit(),
            Impurity::none(),
            Grid::symmetric(half, dx).unwrap(),
            t_end,
            InitialCondition::BoostedKink { x0: 0.0, v },
        )
    }

    #[test]
    fn vacuum_is_exactly_stationary() {
        let mut cfg = EvolveConfig::new(
            ModelParams::new(1.0, 1.0, 0.1).unwrap(),
            Impurity::new(-3.0, 2.0, 3.0).unwrap(),
            Grid::symmetric(20.0, 0.1).unwrap(),
            5.0,
            InitialCondition::VacuumPlusPulse {
                amplitude: 0.0,
                width: 1.0,
                center: 0.0,
            },
        );
        cfg.probes = vec![3.0];
        let lf = Leapfrog::initialize(&cfg).unwrap();
        assert!(lf.phi().iter().all(|&p| p == 1.0));
        let traj = evolve(&cfg).unwrap();
        assert!(traj.final_state.phi.iter().all(|&p| p == 1.0));
        assert!(traj.final_state.phi_t.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn boosted_kink_initial_velocity_sign() {
        let mut cfg = kink_config(0.025, 20.0, 0.1, 1.0);
        cfg.initial = InitialCondition::BoostedKink { x0: -3.0, v: 0.025 };
        let mut lf = Leapfrog::initialize(&cfg).unwrap();
        let g = cfg.grid;
        let s = lf.state();
        assert!(g.interpolate(&s.phi, -3.0).abs() < 1e-12);
        // a right-moving kink lowers the field everywhere it passes
        let left = g.nearest(-4.0);
        let right = g.nearest(-2.0);
        assert!(s.phi_t[left] < 0.0 && s.phi_t[right] < 0.0);
        assert!((s.phi_t[left] - s.phi_t[right]).abs() < 1e-3);
    }

    #[test]
    fn kink_outside_grid_is_rejected() {
        let mut cfg = kink_config(0.0, 10.0, 0.1, 1.0);
        cfg.initial = InitialCondition::BoostedKink { x0: 50.0, v: 0.0 };
        assert!(matches!(
            Leapfrog::initialize(&cfg),
            Err(DynamicsError::KinkOutsideGrid(_))
        ));
    }

    #[test]
    fn cfl_and_probe_validation() {
        let mut cfg = kink_config(0.0, 10.0, 0.1, 1.0);
        cfg.dt = 0.2;
        assert_eq!(cfg.validate().unwrap_err().kind(), "CflViolation");
        cfg.dt = 0.05;
        cfg.probes = vec![0.0, 11.0];
        assert_eq!(cfg.validate().unwrap_err(), DynamicsError::ProbeOutsideGrid(11.0));
    }

    fn drift_after(cfg: &EvolveConfig, steps: usize) -> f64 {
        let mut lf = Leapfrog::initialize(cfg).unwrap();
        let start = lf.phi().to_vec();
        for _ in 0..steps {
            lf.step().unwrap();
        }
        lf.phi()
            .iter()
            .zip(&start)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn discrete_static_kink_stays_put() {
        let p = ModelParams::unit();
        let grid = Grid::symmetric(20.0, 0.1).unwrap();
        let problem = crate::statics::StaticProblem::new(p, Impurity::none(), grid, 0.0).unwrap();
        let profile = crate::statics::solve_newton(
            &problem,
            &problem.tanh_guess(0.0),
            &crate::statics::NewtonOptions::default(),
        )
        .unwrap();
        let mut cfg = kink_config(0.0, 20.0, 0.1, 50.0);
        cfg.initial = InitialCondition::StaticProfile {
            phi: profile.phi,
            center: 0.0,
            displacement: 0.0,
        };
        let dev = drift_after(&cfg, 1000);
        assert!(dev <= 1e-4, "deviation {dev}");
    }

    #[test]
    fn analytic_kink_drift_is_second_order() {
        let coarse = drift_after(&kink_config(0.0, 20.0, 0.1, 50.0), 1000);
        let fine = drift_after(&kink_config(0.0, 20.0, 0.05, 50.0), 2000);
        assert!(coarse < 4e-4, "{coarse}");
        assert!(coarse / fine > 3.0, "{coarse} / {fine}");
    }

    #[test]
    fn traveling_kink_moves_at_its_speed() {
        let cfg = kink_config(0.2, 40.0, 0.1, 50.0);
        let traj = evolve(&cfg).unwrap();
        // least-squares slope of x(t)
        let n = traj.len() as f64;
        let mt = traj.times.iter().sum::<f64>() / n;
        let mx = traj.position_series.iter().sum::<f64>() / n;
        let (mut num, mut den) = (0.0, 0.0);
        for (t, x) in traj.times.iter().zip(&traj.position_series) {
            num += (t - mt) * (x - mx);
            den += (t - mt) * (t - mt);
        }
        let speed = num / den;
        assert!((speed - 0.2).abs() < 0.002, "speed {speed}");
    }

    #[test]
    fn static_kink_energy_is_constant() {
        let cfg = kink_config(0.0, 20.0, 0.1, 20.0);
        let traj = evolve(&cfg).unwrap();
        assert!(traj.relative_energy_drift() < 1e-3);
    }

    #[test]
    fn dissipation_never_raises_energy() {
        let mut cfg = kink_config(0.0, 40.0, 0.1, 60.0);
        cfg.params = ModelParams::new(1.0, 1.0, 0.1).unwrap();
        cfg.imp = Impurity::new(-3.0, 2.0, 3.0).unwrap();
        cfg.initial = InitialCondition::BoostedKink { x0: -3.0, v: 0.025 };
        let traj = evolve(&cfg).unwrap();
        for w in traj.energy_series.windows(2) {
            assert!(w[1] <= w[0] + 1e-6, "{} -> {}", w[0], w[1]);
        }
        assert!(traj.energy_series.last().unwrap() < &traj.energy_series[0]);
    }

    #[test]
    fn topological_charge_is_frozen() {
        let mut cfg = kink_config(0.3, 30.0, 0.1, 30.0);
        cfg.imp = Impurity::new(-3.0, 2.0, 3.0).unwrap();
        let lf0 = Leapfrog::initialize(&cfg).unwrap();
        let q0 = lf0.phi()[lf0.phi().len() - 1] - lf0.phi()[0];
        let traj = evolve(&cfg).unwrap();
        let phi = &traj.final_state.phi;
        assert_eq!(phi[phi.len() - 1] - phi[0], q0);
    }

    #[test]
    fn antisymmetric_data_stays_antisymmetric() {
        let mut cfg = kink_config(0.0, 20.0, 0.1, 20.0);
        cfg.imp = Impurity::new(-3.0, 2.0, 0.0).unwrap();
        let traj = evolve(&cfg).unwrap();
        let phi = &traj.final_state.phi;
        let n = phi.len();
        let dev = (0..n).map(|i| (phi[i] + phi[n - 1 - i]).abs()).fold(0.0, f64::max);
        assert!(dev <= 1e-10, "parity deviation {dev}");
    }

    #[test]
    fn record_cadence_and_snapshots() {
        let mut cfg = kink_config(0.1, 20.0, 0.1, 2.0);
        cfg.record_every = 7;
        cfg.probes = vec![-1.0, 1.0];
        cfg.snapshot_times = vec![1.0, 0.0];
        let traj = evolve(&cfg).unwrap();
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(traj.times[0], 0.0);
        assert!((traj.times.last().unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(traj.probe_series[1].len(), traj.len());
        assert_eq!(traj.snapshots.len(), 2);
        assert_eq!(traj.snapshots[1].t, 0.0);
        assert!((traj.snapshots[0].t - 1.0).abs() < 1e-12);

        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,probe_-1,probe_1,energy,kink_x\n"));
        assert_eq!(text.lines().count(), traj.len() + 1);
    }

    #[test]
    fn sponge_absorbs_outgoing_radiation() {
        let base = EvolveConfig::new(
            ModelParams::unit(),
            Impurity::none(),
            Grid::symmetric(50.0, 0.1).unwrap(),
            150.0,
            InitialCondition::VacuumPlusPulse {
                amplitude: 0.3,
                width: 1.0,
                center: 0.0,
            },
        );
        let mut sponged = base.clone();
        sponged.sponge = true;
        let reflected = evolve(&base).unwrap();
        let e0 = reflected.energy_series[0];
        let e_reflect = *reflected.energy_series.last().unwrap();
        let e_sponge = *evolve(&sponged).unwrap().energy_series.last().unwrap();
        assert!((e_reflect - e0).abs() < 1e-3 * e0, "{e_reflect} vs {e0}");
        assert!(e_sponge < 0.5 * e0, "{e_sponge} vs {e0}");
    }

    #[test]
    fn zero_crossing_tracker() {
        let g = Grid::new(0.0, 9.0, 1.0).unwrap();
        let phi = [-1.0, -0.5, 0.5, 1.0, 0.0, -1.0, -1.0, 1.0, 1.0, 1.0];
        assert_eq!(zero_crossings(&g, &phi), vec![1.5, 4.0, 6.5]);
        assert_eq!(track_kink(&g, &phi, 6.0), 6.5);
        assert_eq!(track_kink(&g, &phi, 0.0), 1.5);
        assert!(track_kink(&g, &[1.0; 10], 0.0).is_nan());
    }
}
