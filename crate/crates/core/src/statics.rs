//! Static kink profiles in an impurity: solutions of
//!
//! ```text
//! φ_xx = Λ(x) φ (φ² − m²/λ),     φ(x_min) = −m/√λ,  φ(x_max) = +m/√λ.
//! ```
//!
//! The main solver is a damped Newton iteration on the second-order
//! finite-difference system, whose Jacobian is tridiagonal. Kinks away from
//! the well center are not equilibria of the full equation; they are found as
//! constrained solutions with the field pinned to zero at the requested kink
//! center (the net force on the kink shows up as the residual of the dropped
//! equation, see [`Pin::force`]). A shooting method from the kink center is
//! kept as an independent check for centered wells.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{self, FieldState, Grid, Impurity, ModelError, ModelParams};
use crate::output;
use crate::tridiag;

/// Largest |V| tolerated at the domain edges.
pub const EDGE_POTENTIAL_TOL: f64 = 1e-8;
/// Default spacing of static grids.
pub const DEFAULT_DX: f64 = 0.05;
/// Default margin added on both sides of the kink/well complex.
pub const DEFAULT_MARGIN: f64 = 20.0;
/// How far the zero crossing may drift from the requested kink center.
pub const BRANCH_TOLERANCE: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StaticsError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("domain too narrow: |V| = {potential:e} at the edge x = {x} (limit {EDGE_POTENTIAL_TOL:e})")]
    DomainTooNarrow { x: f64, potential: f64 },
    #[error("invalid initial guess: {0}")]
    InvalidGuess(String),
    #[error("Newton did not converge in {iters} iterations (residual {residual:e})")]
    MaxItersExceeded { iters: usize, residual: f64 },
    #[error("line search underflow at iteration {iter} (residual {residual:e})")]
    DivergedGuess { iter: usize, residual: f64 },
    #[error("singular Jacobian at iteration {0}")]
    SingularJacobian(usize),
    #[error("solution crossed zero at {found} instead of near {expected}")]
    ConvergedToWrongBranch { expected: f64, found: f64 },
    #[error("no slope bracket in (0, {max_slope}] separates overturning from runaway shots")]
    BracketNotFound { max_slope: f64 },
    #[error("shooting needs a centered problem: {0}")]
    NotCentered(String),
    #[error("barrier solve needs h >= 0, got h = {0}")]
    NotABarrier(f64),
}

impl StaticsError {
    pub fn kind(&self) -> &'static str {
        match self {
            StaticsError::Model(e) => e.kind(),
            StaticsError::DomainTooNarrow { .. } => "DomainTooNarrow",
            StaticsError::InvalidGuess(_) => "InvalidGuess",
            StaticsError::MaxItersExceeded { .. } => "MaxItersExceeded",
            StaticsError::DivergedGuess { .. } => "DivergedGuess",
            StaticsError::SingularJacobian(_) => "SingularJacobian",
            StaticsError::ConvergedToWrongBranch { .. } => "ConvergedToWrongBranch",
            StaticsError::BracketNotFound { .. } => "BracketNotFound",
            StaticsError::NotCentered(_) => "NotCentered",
            StaticsError::NotABarrier(_) => "NotABarrier",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticProblem {
    pub params: ModelParams,
    pub imp: Impurity,
    pub grid: Grid,
    pub kink_center: f64,
}

impl StaticProblem {
    pub fn new(
        params: ModelParams,
        imp: Impurity,
        grid: Grid,
        kink_center: f64,
    ) -> Result<Self, StaticsError> {
        for x in [grid.x_min(), grid.x_max()] {
            let potential = imp.value(x);
            if potential.abs() >= EDGE_POTENTIAL_TOL {
                return Err(StaticsError::DomainTooNarrow { x, potential });
            }
        }
        if !grid.contains(kink_center) {
            return Err(StaticsError::InvalidGuess(format!(
                "kink center {kink_center} lies outside the grid"
            )));
        }
        Ok(Self {
            params,
            imp,
            grid,
            kink_center,
        })
    }

    /// Problem on the default grid: spacing [`DEFAULT_DX`] and a
    /// [`DEFAULT_MARGIN`] margin around both the kink and the well.
    pub fn with_default_grid(
        params: ModelParams,
        imp: Impurity,
        kink_center: f64,
    ) -> Result<Self, StaticsError> {
        Self::with_spacing(params, imp, kink_center, DEFAULT_DX)
    }

    /// Like [`StaticProblem::with_default_grid`] with spacing `dx`.
    pub fn with_spacing(
        params: ModelParams,
        imp: Impurity,
        kink_center: f64,
        dx: f64,
    ) -> Result<Self, StaticsError> {
        let grid = grid_around(&imp, kink_center, dx, DEFAULT_MARGIN)?;
        Self::new(params, imp, grid, kink_center)
    }

    /// Same problem with the kink placed on the well center.
    pub fn centered(&self) -> Self {
        Self {
            kink_center: self.imp.x_c,
            ..*self
        }
    }

    pub fn is_centered(&self) -> bool {
        (self.kink_center - self.imp.x_c).abs() < 1e-12
    }

    /// Boundary values (left, right).
    pub fn boundary(&self) -> (f64, f64) {
        let v = self.params.vacuum();
        (-v, v)
    }

    /// `v tanh(m (x − center)/√2)` with exact boundary values.
    pub fn tanh_guess(&self, center: f64) -> Vec<f64> {
        let k = self.params.m / std::f64::consts::SQRT_2;
        let v = self.params.vacuum();
        let mut g: Vec<f64> = self
            .grid
            .points()
            .map(|x| v * (k * (x - center)).tanh())
            .collect();
        self.impose_boundary(&mut g);
        g
    }

    fn impose_boundary(&self, phi: &mut [f64]) {
        let (l, r) = self.boundary();
        phi[0] = l;
        let n = phi.len();
        phi[n - 1] = r;
    }

    fn lambda(&self) -> Vec<f64> {
        self.grid
            .points()
            .map(|x| model::lambda_eff(&self.params, &self.imp, x))
            .collect()
    }
}

/// Grid with spacing [`DEFAULT_DX`] spanning the kink and the well plus
/// [`DEFAULT_MARGIN`] on either side.
pub fn default_grid(imp: &Impurity, kink_center: f64) -> Result<Grid, ModelError> {
    grid_around(imp, kink_center, DEFAULT_DX, DEFAULT_MARGIN)
}

/// Grid covering the kink and the well plus `margin` on either side, with
/// nodes on integer multiples of `dx`.
pub fn grid_around(imp: &Impurity, kink_center: f64, dx: f64, margin: f64) -> Result<Grid, ModelError> {
    let lo = kink_center.min(imp.x_c) - margin;
    let hi = kink_center.max(imp.x_c) + margin;
    let first = (lo / dx).floor();
    let cells = (hi / dx).ceil() - first;
    Grid::from_points(first * dx, dx, cells as usize + 1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iters: usize,
    /// Smallest step fraction tried by the backtracking line search.
    pub min_step: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 100,
            min_step: 1.0 / 64.0,
        }
    }
}

/// Constraint `φ(x) = 0` imposed by linear interpolation between the two
/// nodes around `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pin {
    pub x: f64,
    /// Residual of the field equation at the node whose equation was
    /// replaced by the constraint. Zero for a true equilibrium.
    pub force: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaticProfile {
    pub grid: Grid,
    pub phi: Vec<f64>,
    /// Max-norm of the discrete residual over the free interior nodes.
    pub residual_inf: f64,
    pub energy: f64,
    pub newton_iters: usize,
    /// Zero crossing closest to the requested kink center.
    pub kink_center: f64,
    pub pin: Option<Pin>,
}

impl StaticProfile {
    /// Centered-difference slope at the node nearest `x`.
    pub fn slope_at(&self, x: f64) -> f64 {
        let i = self.grid.nearest(x).clamp(1, self.phi.len() - 2);
        (self.phi[i + 1] - self.phi[i - 1]) / (2.0 * self.grid.dx())
    }

    pub fn value_at(&self, x: f64) -> f64 {
        self.grid.interpolate(&self.phi, x)
    }

    pub fn state(&self) -> FieldState {
        FieldState::at_rest(self.phi.clone())
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        output::write_profile(w, self.grid.points(), "phi", &self.phi)
    }
}

/// Discrete residual `φ_xx − Λ φ (φ² − v²)`; zero at the boundary nodes.
pub fn residual(problem: &StaticProblem, phi: &[f64]) -> Vec<f64> {
    residual_with(&problem.lambda(), problem.params.vacuum_sq(), problem.grid.dx(), phi)
}

fn residual_with(lambda: &[f64], vacuum_sq: f64, dx: f64, phi: &[f64]) -> Vec<f64> {
    let n = phi.len();
    let inv_dx2 = 1.0 / (dx * dx);
    let mut r = vec![0.0; n];
    for i in 1..n - 1 {
        r[i] = (phi[i + 1] - 2.0 * phi[i] + phi[i - 1]) * inv_dx2
            - lambda[i] * phi[i] * (phi[i] * phi[i] - vacuum_sq);
    }
    r
}

/// Node whose equation is replaced by the pin, and the interpolation weight
/// of the right-hand node.
fn pin_layout(grid: &Grid, x: f64) -> (usize, usize, f64) {
    let s = (x - grid.x_min()) / grid.dx();
    let left = (s.floor() as usize).clamp(1, grid.len() - 3);
    let theta = s - left as f64;
    let dropped = if theta <= 0.5 { left } else { left + 1 };
    (left, dropped, theta)
}

struct NewtonSystem<'a> {
    problem: &'a StaticProblem,
    lambda: Vec<f64>,
    vacuum_sq: f64,
    pin: Option<(usize, usize, f64)>,
}

impl NewtonSystem<'_> {
    fn residual(&self, phi: &[f64]) -> Vec<f64> {
        let mut r = residual_with(&self.lambda, self.vacuum_sq, self.problem.grid.dx(), phi);
        if let Some((left, dropped, theta)) = self.pin {
            r[dropped] = (1.0 - theta) * phi[left] + theta * phi[left + 1];
        }
        r
    }

    fn norm(r: &[f64]) -> f64 {
        r.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn newton_step(&self, phi: &[f64], r: &[f64], iter: usize) -> Result<Vec<f64>, StaticsError> {
        let n = phi.len();
        let dx = self.problem.grid.dx();
        let inv_dx2 = 1.0 / (dx * dx);
        let mut sub = vec![0.0; n];
        let mut diag = vec![1.0; n];
        let mut sup = vec![0.0; n];
        for i in 1..n - 1 {
            sub[i] = inv_dx2;
            sup[i] = inv_dx2;
            diag[i] = -2.0 * inv_dx2 - self.lambda[i] * (3.0 * phi[i] * phi[i] - self.vacuum_sq);
        }
        if let Some((left, dropped, theta)) = self.pin {
            sub[dropped] = 0.0;
            diag[dropped] = 0.0;
            sup[dropped] = 0.0;
            if dropped == left {
                diag[left] = 1.0 - theta;
                sup[left] = theta;
            } else {
                sub[dropped] = 1.0 - theta;
                diag[dropped] = theta;
            }
        }
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        tridiag::solve(&sub, &diag, &sup, &rhs).ok_or(StaticsError::SingularJacobian(iter))
    }

    fn solve(&self, guess: &[f64], opts: &NewtonOptions) -> Result<StaticProfile, StaticsError> {
        let problem = self.problem;
        if guess.len() != problem.grid.len() {
            return Err(ModelError::ShapeMismatch {
                expected: problem.grid.len(),
                got: guess.len(),
            }
            .into());
        }
        let (l, r) = problem.boundary();
        if (guess[0] - l).abs() > 1e-12 || (guess[guess.len() - 1] - r).abs() > 1e-12 {
            return Err(StaticsError::InvalidGuess(format!(
                "boundary values must be ({l}, {r}), got ({}, {})",
                guess[0],
                guess[guess.len() - 1]
            )));
        }
        if guess.iter().any(|v| !v.is_finite()) {
            return Err(StaticsError::InvalidGuess("non-finite entries".into()));
        }

        let mut phi = guess.to_vec();
        let mut res = self.residual(&phi);
        let mut norm = Self::norm(&res);
        let mut iters = 0;
        while norm > opts.tol {
            if iters >= opts.max_iters {
                return Err(StaticsError::MaxItersExceeded {
                    iters,
                    residual: norm,
                });
            }
            let delta = self.newton_step(&phi, &res, iters)?;
            let mut step = 1.0;
            loop {
                let trial: Vec<f64> = phi.iter().zip(&delta).map(|(p, d)| p + step * d).collect();
                let trial_res = self.residual(&trial);
                let trial_norm = Self::norm(&trial_res);
                if trial_norm < norm || trial_norm <= opts.tol {
                    phi = trial;
                    res = trial_res;
                    norm = trial_norm;
                    break;
                }
                step *= 0.5;
                if step < opts.min_step {
                    return Err(StaticsError::DivergedGuess {
                        iter: iters,
                        residual: norm,
                    });
                }
            }
            iters += 1;
        }
        Ok(self.finish(phi, iters))
    }

    fn finish(&self, phi: Vec<f64>, iters: usize) -> StaticProfile {
        let problem = self.problem;
        let raw = residual_with(&self.lambda, self.vacuum_sq, problem.grid.dx(), &phi);
        let pin = self.pin.map(|(_, dropped, _)| Pin {
            x: problem.kink_center,
            force: raw[dropped],
        });
        let residual_inf = raw
            .iter()
            .enumerate()
            .filter(|(i, _)| self.pin.map_or(true, |(_, d, _)| d != *i))
            .fold(0.0_f64, |m, (_, v)| m.max(v.abs()));
        let energy = model::total_energy(
            &problem.params,
            &problem.imp,
            &problem.grid,
            &FieldState::at_rest(phi.clone()),
        );
        let kink_center = crate::dynamics::track_kink(&problem.grid, &phi, problem.kink_center);
        StaticProfile {
            grid: problem.grid,
            phi,
            residual_inf,
            energy,
            newton_iters: iters,
            kink_center,
            pin,
        }
    }
}

/// Unconstrained damped Newton solve from `guess`, which must carry the
/// exact boundary values.
pub fn solve_newton(
    problem: &StaticProblem,
    guess: &[f64],
    opts: &NewtonOptions,
) -> Result<StaticProfile, StaticsError> {
    NewtonSystem {
        problem,
        lambda: problem.lambda(),
        vacuum_sq: problem.params.vacuum_sq(),
        pin: None,
    }
    .solve(guess, opts)
}

/// Newton solve with `φ(problem.kink_center) = 0` enforced.
pub fn solve_pinned(
    problem: &StaticProblem,
    guess: &[f64],
    opts: &NewtonOptions,
) -> Result<StaticProfile, StaticsError> {
    NewtonSystem {
        problem,
        lambda: problem.lambda(),
        vacuum_sq: problem.params.vacuum_sq(),
        pin: Some(pin_layout(&problem.grid, problem.kink_center)),
    }
    .solve(guess, opts)
}

/// Candidate starting profiles for a kink at `problem.kink_center`.
///
/// Always the free tanh. For wells deep enough that Λ < 0 at the bottom, also
/// the free tanh multiplied by the magnitude of the well-centered solution,
/// which already carries the depleted core inside the well.
pub fn off_center_guesses(
    problem: &StaticProblem,
    opts: &NewtonOptions,
) -> Result<Vec<Vec<f64>>, StaticsError> {
    let mut guesses = vec![problem.tanh_guess(problem.kink_center)];
    if model::lambda_eff(&problem.params, &problem.imp, problem.imp.x_c) < 0.0 {
        let centered = problem.centered();
        let core = solve_newton(&centered, &centered.tanh_guess(centered.kink_center), opts)?;
        let v = problem.params.vacuum();
        let mut g: Vec<f64> = problem
            .tanh_guess(problem.kink_center)
            .iter()
            .zip(&core.phi)
            .map(|(t, c)| t * c.abs() / v)
            .collect();
        problem.impose_boundary(&mut g);
        guesses.push(g);
    }
    Ok(guesses)
}

/// Kink held at `problem.kink_center` while the well sits elsewhere.
///
/// Every candidate guess is solved with the kink center pinned and the
/// lowest-energy converged profile is returned. Falls back to
/// [`solve_newton`] when the kink is on the well center.
pub fn solve_off_center(
    problem: &StaticProblem,
    opts: &NewtonOptions,
) -> Result<StaticProfile, StaticsError> {
    if problem.is_centered() {
        return solve_newton(problem, &problem.tanh_guess(problem.kink_center), opts);
    }
    let mut best: Option<StaticProfile> = None;
    let mut last_err = None;
    for guess in off_center_guesses(problem, opts)? {
        match solve_pinned(problem, &guess, opts) {
            Ok(p) => {
                if best.as_ref().map_or(true, |b| p.energy < b.energy) {
                    best = Some(p);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let best = match (best, last_err) {
        (Some(b), _) => b,
        (None, Some(e)) => return Err(e),
        (None, None) => unreachable!("at least one guess is always tried"),
    };
    check_branch(problem.kink_center, &best)?;
    Ok(best)
}

fn check_branch(expected: f64, profile: &StaticProfile) -> Result<(), StaticsError> {
    let found = profile.kink_center;
    if !((found - expected).abs() <= BRANCH_TOLERANCE) {
        return Err(StaticsError::ConvergedToWrongBranch { expected, found });
    }
    Ok(())
}

/// Kink sitting on top of a repulsive bump (`h >= 0`), centered at `x_c`.
pub fn solve_barrier(
    problem: &StaticProblem,
    opts: &NewtonOptions,
) -> Result<StaticProfile, StaticsError> {
    if problem.imp.h < 0.0 {
        return Err(StaticsError::NotABarrier(problem.imp.h));
    }
    let centered = problem.centered();
    let profile = solve_newton(&centered, &centered.tanh_guess(centered.kink_center), opts)?;
    check_branch(centered.kink_center, &profile)?;
    Ok(profile)
}

/// Dispatch on the geometry: barrier, centered well or off-center well.
pub fn solve_static(
    problem: &StaticProblem,
    opts: &NewtonOptions,
) -> Result<StaticProfile, StaticsError> {
    if problem.imp.h > 0.0 && problem.is_centered() {
        solve_barrier(problem, opts)
    } else {
        solve_off_center(problem, opts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootOptions {
    /// Upper end of the slope search interval.
    pub max_slope: f64,
    /// Number of slopes scanned for the initial bracket.
    pub scan_points: usize,
    /// Shots above this multiple of the vacuum count as runaway.
    pub runaway: f64,
    /// Bracket separation marking the end of the trustworthy region.
    pub separation_tol: f64,
    /// Distance to the vacuum marking the end of the core region.
    pub vacuum_tol: f64,
}

impl Default for ShootOptions {
    fn default() -> Self {
        Self {
            max_slope: 5.0,
            scan_points: 100,
            runaway: 1.5,
            separation_tol: 1e-8,
            vacuum_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShootingResult {
    /// Slope φ'(x_c) of the separatrix shot.
    pub slope: f64,
    /// Nodes `x_c + k dx` over the bounded region.
    pub x: Vec<f64>,
    /// Field at those nodes (the other half follows from φ(x_c − y) = −φ(x_c + y)).
    pub phi: Vec<f64>,
}

impl ShootingResult {
    /// Max |φ_shoot − φ_newton| over both halves of the bounded region.
    pub fn max_deviation(&self, profile: &StaticProfile) -> f64 {
        let center = self.x[0];
        self.x
            .iter()
            .zip(&self.phi)
            .map(|(&x, &p)| {
                let right = (profile.value_at(x) - p).abs();
                let left = (profile.value_at(2.0 * center - x) + p).abs();
                right.max(left)
            })
            .fold(0.0, f64::max)
    }

    pub fn extent(&self) -> f64 {
        self.x.last().unwrap() - self.x[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ShotFate {
    /// Slope too small: φ turned back before reaching the vacuum.
    Overturned,
    /// Slope too large: φ ran past the vacuum.
    Runaway,
    Bounded,
}

struct Shooter<'a> {
    problem: &'a StaticProblem,
    steps: usize,
    opts: ShootOptions,
}

impl Shooter<'_> {
    fn rhs(&self, x: f64, y: [f64; 2]) -> [f64; 2] {
        let p = &self.problem.params;
        let lam = model::lambda_eff(p, &self.problem.imp, x);
        [y[1], lam * y[0] * (y[0] * y[0] - p.vacuum_sq())]
    }

    /// Classical RK4 outward from the center with the grid spacing.
    fn shoot(&self, slope: f64) -> (ShotFate, Vec<f64>) {
        let h = self.problem.grid.dx();
        let x0 = self.problem.imp.x_c;
        let ceiling = self.opts.runaway * self.problem.params.vacuum();
        let mut y = [0.0, slope];
        let mut out = Vec::with_capacity(self.steps + 1);
        out.push(0.0);
        for k in 0..self.steps {
            let x = x0 + k as f64 * h;
            let k1 = self.rhs(x, y);
            let k2 = self.rhs(x + 0.5 * h, [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
            let k3 = self.rhs(x + 0.5 * h, [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
            let k4 = self.rhs(x + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
            y[0] += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
            y[1] += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
            out.push(y[0]);
            if y[0] > ceiling {
                return (ShotFate::Runaway, out);
            }
            if y[1] < 0.0 || y[0] < 0.0 {
                return (ShotFate::Overturned, out);
            }
        }
        (ShotFate::Bounded, out)
    }
}

/// Shooting from the kink center: φ(x_c) = 0, bisect on φ'(x_c) between
/// shots that overturn and shots that run away past the vacuum.
pub fn shoot_centered(
    problem: &StaticProblem,
    opts: &ShootOptions,
) -> Result<ShootingResult, StaticsError> {
    if !problem.is_centered() {
        return Err(StaticsError::NotCentered(format!(
            "kink at {} but well at {}",
            problem.kink_center, problem.imp.x_c
        )));
    }
    let grid = &problem.grid;
    let center = problem.imp.x_c;
    let offset = (center - grid.x_min()) / grid.dx();
    if (offset - offset.round()).abs() > 1e-6
        || ((grid.x_max() - center) - (center - grid.x_min())).abs() > 0.5 * grid.dx()
    {
        return Err(StaticsError::NotCentered(format!(
            "grid [{}, {}] is not symmetric about a node at {center}",
            grid.x_min(),
            grid.x_max()
        )));
    }
    let shooter = Shooter {
        problem,
        steps: ((grid.x_max() - center) / grid.dx()).round() as usize,
        opts: *opts,
    };

    // scan for the first overturned -> runaway transition
    let mut bracket = None;
    let mut prev = (0.0, ShotFate::Overturned);
    for k in 1..=opts.scan_points {
        let s = opts.max_slope * k as f64 / opts.scan_points as f64;
        let fate = shooter.shoot(s).0;
        if fate == ShotFate::Bounded {
            bracket = Some((s, s));
            break;
        }
        if prev.1 == ShotFate::Overturned && fate == ShotFate::Runaway {
            bracket = Some((prev.0, s));
            break;
        }
        prev = (s, fate);
    }
    let (mut lo, mut hi) = bracket.ok_or(StaticsError::BracketNotFound {
        max_slope: opts.max_slope,
    })?;
    if lo < hi && lo == 0.0 {
        // φ ≡ 0 is a fixed point, so s = 0 never overturns; start just above it
        lo = f64::MIN_POSITIVE;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match shooter.shoot(mid).0 {
            ShotFate::Runaway => hi = mid,
            ShotFate::Overturned => lo = mid,
            ShotFate::Bounded => {
                lo = mid;
                hi = mid;
            }
        }
    }
    let (_, low) = shooter.shoot(lo);
    let (_, high) = shooter.shoot(hi);
    let v = problem.params.vacuum();
    let len = low.len().min(high.len());
    let bounded = (0..len)
        .find(|&k| (v - low[k]).abs() < opts.vacuum_tol || (high[k] - low[k]).abs() > opts.separation_tol)
        .unwrap_or(len)
        .max(1);
    Ok(ShootingResult {
        slope: lo,
        x: (0..bounded).map(|k| center + k as f64 * grid.dx()).collect(),
        phi: low[..bounded].to_vec(),
    })
}

/// How a sweep cell specifies the well width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WidthSpec {
    /// Approximate width w (a = 6/w).
    W(f64),
    /// Inverse width a directly.
    A(f64),
}

impl WidthSpec {
    pub fn impurity(&self, h: f64, x_c: f64) -> Result<Impurity, ModelError> {
        match *self {
            WidthSpec::W(w) => Impurity::from_width(h, w, x_c),
            WidthSpec::A(a) => Impurity::new(h, a, x_c),
        }
    }

    pub fn w(&self) -> f64 {
        match *self {
            WidthSpec::W(w) => w,
            WidthSpec::A(a) => 6.0 / a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub h: f64,
    pub width: WidthSpec,
    pub x_c: f64,
    pub kink_center: f64,
}

impl SweepCell {
    pub fn new(h: f64, w: f64, x_c: f64) -> Self {
        Self {
            h,
            width: WidthSpec::W(w),
            x_c,
            kink_center: 0.0,
        }
    }

    pub fn problem(&self, params: ModelParams, dx: f64) -> Result<StaticProblem, StaticsError> {
        let imp = self.width.impurity(self.h, self.x_c)?;
        StaticProblem::with_spacing(params, imp, self.kink_center, dx)
    }
}

/// The thirteen (depth, width, well center) cells with their published
/// energies. The kink sits at the origin.
pub const TABLE1: [(f64, f64, f64, f64); 13] = [
    (-1.0, 5.0, 0.0, 0.633),
    (-1.0, 5.0, 1.0, 0.7178),
    (-1.0, 5.0, 3.0, 0.9308),
    (-1.0, 5.0, 5.0, 0.9425),
    (-5.0, 1.0, 0.0, 0.533),
    (-5.0, 1.0, 1.0, 0.676),
    (-5.0, 1.0, 3.0, 0.9312),
    (-5.0, 1.0, 5.0, 0.9425),
    (-5.0, 5.0, 0.0, -0.771),
    (-5.0, 5.0, 1.0, -0.6834),
    (-5.0, 5.0, 2.0, -0.4638),
    (-5.0, 5.0, 4.0, 0.025),
    (-5.0, 5.0, 5.0, 0.1177),
];

pub fn table1_cells() -> Vec<SweepCell> {
    TABLE1.iter().map(|&(h, w, x_c, _)| SweepCell::new(h, w, x_c)).collect()
}

/// Cartesian product of depths, widths and well centers, in that nesting order.
pub fn grid_cells(depths: &[f64], widths: &[f64], centers: &[f64]) -> Vec<SweepCell> {
    let mut out = Vec::new();
    for &h in depths {
        for &w in widths {
            for &c in centers {
                out.push(SweepCell::new(h, w, c));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub newton: NewtonOptions,
    /// Perturbed restarts per cell used to look for further branches.
    pub retries: usize,
    /// Peak amplitude of the restart perturbations.
    pub perturbation: f64,
    pub seed: u64,
    pub workers: usize,
    pub dx: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            dx: DEFAULT_DX,
            newton: NewtonOptions::default(),
            retries: 5,
            perturbation: 0.2,
            seed: 0x5eed_2024,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub cell: SweepCell,
    pub result: Result<StaticProfile, StaticsError>,
    /// Distinct energies reached from the perturbed restarts, ascending.
    pub branches: Vec<f64>,
}

impl SweepRow {
    pub fn energy(&self) -> Option<f64> {
        self.result.as_ref().ok().map(|p| p.energy)
    }
}

/// Energies closer than this are the same branch.
const BRANCH_MERGE_TOL: f64 = 1e-6;

fn perturbed_branches(
    problem: &StaticProblem,
    base: &[f64],
    opts: &SweepOptions,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let grid = problem.grid;
    let span = grid.x_max() - grid.x_min();
    let mut energies: Vec<f64> = Vec::new();
    for _ in 0..opts.retries {
        let coeffs: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0) * opts.perturbation / 3.0).collect();
        let guess: Vec<f64> = grid
            .points()
            .zip(base)
            .map(|(x, b)| {
                let s = std::f64::consts::PI * (x - grid.x_min()) / span;
                b + coeffs
                    .iter()
                    .enumerate()
                    .map(|(j, c)| c * ((j + 1) as f64 * s).sin())
                    .sum::<f64>()
            })
            .collect();
        let mut guess = guess;
        problem.impose_boundary(&mut guess);
        let solved = if problem.is_centered() {
            solve_newton(problem, &guess, &opts.newton)
        } else {
            solve_pinned(problem, &guess, &opts.newton)
        };
        if let Ok(p) = solved {
            if (p.kink_center - problem.kink_center).abs() <= BRANCH_TOLERANCE
                && !energies.iter().any(|e| (e - p.energy).abs() < BRANCH_MERGE_TOL)
            {
                energies.push(p.energy);
            }
        }
    }
    energies.sort_by(f64::total_cmp);
    energies
}

fn sweep_cell(params: ModelParams, cell: SweepCell, index: usize, opts: &SweepOptions) -> SweepRow {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(index as u64));
    let result = cell.problem(params, opts.dx).and_then(|p| solve_off_center(&p, &opts.newton).map(|s| (p, s)));
    match result {
        Ok((problem, profile)) => {
            let branches = perturbed_branches(&problem, &profile.phi, opts, &mut rng);
            SweepRow {
                cell,
                result: Ok(profile),
                branches,
            }
        }
        Err(e) => SweepRow {
            cell,
            result: Err(e),
            branches: Vec::new(),
        },
    }
}

/// Solve every cell; failures are recorded per row and the sweep continues.
/// Output order matches `cells` regardless of the worker count.
pub fn sweep(params: ModelParams, cells: &[SweepCell], opts: &SweepOptions) -> Vec<SweepRow> {
    let run = || {
        cells
            .par_iter()
            .enumerate()
            .map(|(i, &c)| sweep_cell(params, c, i, opts))
            .collect::<Vec<_>>()
    };
    match rayon::ThreadPoolBuilder::new().num_threads(opts.workers.max(1)).build() {
        Ok(pool) => pool.install(run),
        Err(_) => cells
            .iter()
            .enumerate()
            .map(|(i, &c)| sweep_cell(params, c, i, opts))
            .collect(),
    }
}

/// The published energy table recomputed at unit m and λ.
pub fn table1_sweep(opts: &SweepOptions) -> Vec<SweepRow> {
    sweep(ModelParams::unit(), &table1_cells(), opts)
}

/// `h,w,x_c,energy,residual,iters`; failed cells carry `nan` values.
pub fn write_sweep_csv<W: Write>(w: &mut W, rows: &[SweepRow]) -> io::Result<()> {
    writeln!(w, "h,w,x_c,energy,residual,iters")?;
    for row in rows {
        let c = row.cell;
        let (e, r, it) = match &row.result {
            Ok(p) => (p.energy, p.residual_inf, p.newton_iters as f64),
            Err(_) => (f64::NAN, f64::NAN, f64::NAN),
        };
        let mut fields: Vec<String> = [c.h, c.width.w(), c.x_c, e, r].iter().map(|&v| output::num(v)).collect();
        fields.push(if it.is_nan() { "nan".into() } else { format!("{}", it as usize) });
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

/// `h,w,x_c,seed,branches,branch_energies,error`
pub fn write_branch_csv<W: Write>(w: &mut W, rows: &[SweepRow], seed: u64) -> io::Result<()> {
    writeln!(w, "h,w,x_c,seed,branches,branch_energies,error")?;
    for row in rows {
        let c = row.cell;
        let energies: Vec<String> = row.branches.iter().map(|&e| output::num(e)).collect();
        let error = match &row.result {
            Ok(_) => String::new(),
            Err(e) => e.kind().to_string(),
        };
        writeln!(
            w,
            "{},{},{},{seed},{},{},{error}",
            output::num(c.h),
            output::num(c.width.w()),
            output::num(c.x_c),
            row.branches.len(),
            energies.join(";")
        )?;
    }
    Ok(())
}
