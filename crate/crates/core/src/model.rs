//! Physical definitions shared by every solver: the quartic self-coupling
//! modified by a bell-shaped impurity, the free kink, the energy functional
//! and the small-amplitude (meson) dispersion relation.
//!
//! The field obeys
//!
//! ```text
//! φ_tt = φ_xx − Λ(x) φ (φ² − m²/λ) − γ φ_t,      Λ(x) = λ + V(x),
//! V(x) = h sech²(a (x − x_c))
//! ```

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("kink velocity |v| = {0} must be below the signal speed 1")]
    Superluminal(f64),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("state has {got} points but the grid has {expected}")]
    ShapeMismatch { expected: usize, got: usize },
}

impl ModelError {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelError::InvalidParameter { .. } => "InvalidParameter",
            ModelError::Superluminal(_) => "Superluminal",
            ModelError::InvalidGrid(_) => "InvalidGrid",
            ModelError::ShapeMismatch { .. } => "ShapeMismatch",
        }
    }
}

/// Field-theory constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub m: f64,
    pub lambda: f64,
    /// Linear friction coefficient multiplying φ_t.
    pub gamma: f64,
}

impl ModelParams {
    pub fn new(m: f64, lambda: f64, gamma: f64) -> Result<Self, ModelError> {
        let positive = |name, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ModelError::InvalidParameter {
                    name,
                    reason: format!("must be finite and > 0, got {v}"),
                })
            }
        };
        positive("m", m)?;
        positive("lambda", lambda)?;
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(ModelError::InvalidParameter {
                name: "gamma",
                reason: format!("must be finite and >= 0, got {gamma}"),
            });
        }
        Ok(Self { m, lambda, gamma })
    }

    /// m = λ = 1, no friction.
    pub fn unit() -> Self {
        Self {
            m: 1.0,
            lambda: 1.0,
            gamma: 0.0,
        }
    }

    pub fn with_gamma(self, gamma: f64) -> Result<Self, ModelError> {
        Self::new(self.m, self.lambda, gamma)
    }

    /// Vacuum expectation value m/√λ.
    pub fn vacuum(&self) -> f64 {
        self.m / self.lambda.sqrt()
    }

    /// m²/λ, the squared vacuum value.
    pub fn vacuum_sq(&self) -> f64 {
        self.m * self.m / self.lambda
    }

    /// Rest energy of the free kink, 2√2 m³ / (3λ).
    pub fn kink_mass(&self) -> f64 {
        2.0 * std::f64::consts::SQRT_2 * self.m.powi(3) / (3.0 * self.lambda)
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::unit()
    }
}

/// Bell-shaped impurity `V(x) = h sech²(a (x − x_c))`.
///
/// Negative `h` is an attractive well, positive `h` a repulsive barrier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Impurity {
    pub h: f64,
    pub a: f64,
    pub x_c: f64,
}

impl Impurity {
    pub fn new(h: f64, a: f64, x_c: f64) -> Result<Self, ModelError> {
        if !(a.is_finite() && a > 0.0) {
            return Err(ModelError::InvalidParameter {
                name: "a",
                reason: format!("inverse width must be finite and > 0, got {a}"),
            });
        }
        if !h.is_finite() || !x_c.is_finite() {
            return Err(ModelError::InvalidParameter {
                name: "h",
                reason: "depth and center must be finite".into(),
            });
        }
        Ok(Self { h, a, x_c })
    }

    /// Build from the approximate width `w`, using `a = 6/w`.
    pub fn from_width(h: f64, w: f64, x_c: f64) -> Result<Self, ModelError> {
        if !(w.is_finite() && w > 0.0) {
            return Err(ModelError::InvalidParameter {
                name: "w",
                reason: format!("width must be finite and > 0, got {w}"),
            });
        }
        Self::new(h, 6.0 / w, x_c)
    }

    /// No impurity at all (h = 0).
    pub fn none() -> Self {
        Self {
            h: 0.0,
            a: 1.0,
            x_c: 0.0,
        }
    }

    pub fn width(&self) -> f64 {
        6.0 / self.a
    }

    pub fn is_attractive(&self) -> bool {
        self.h < 0.0
    }

    pub fn value(&self, x: f64) -> f64 {
        let s = sech(self.a * (x - self.x_c));
        self.h * s * s
    }

    /// dV/dx = −2 h a sech²(u) tanh(u), u = a (x − x_c).
    pub fn derivative(&self, x: f64) -> f64 {
        let u = self.a * (x - self.x_c);
        let s = sech(u);
        -2.0 * self.h * self.a * s * s * u.tanh()
    }

    /// d²V/dx² = 2 h a² sech²(u) (2 tanh²(u) − sech²(u)).
    pub fn second_derivative(&self, x: f64) -> f64 {
        let u = self.a * (x - self.x_c);
        let s2 = sech(u).powi(2);
        let t = u.tanh();
        2.0 * self.h * self.a * self.a * s2 * (2.0 * t * t - s2)
    }
}

fn sech(u: f64) -> f64 {
    // cosh overflows past |u| ≈ 710; sech is exactly representable as 0 there.
    let e = (-u.abs()).exp();
    2.0 * e / (1.0 + e * e)
}

/// Free-standing form of [`Impurity::value`].
pub fn impurity_value(imp: &Impurity, x: f64) -> f64 {
    imp.value(x)
}

/// Effective coupling Λ(x) = λ + V(x). Negative inside deep wells.
pub fn lambda_eff(params: &ModelParams, imp: &Impurity, x: f64) -> f64 {
    params.lambda + imp.value(x)
}

/// Uniform 1D lattice `x_i = x_min + i dx`, `i = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    x_min: f64,
    dx: f64,
    n: usize,
}

impl Grid {
    pub const MIN_POINTS: usize = 8;

    /// Grid spanning `[x_min, x_max]` with spacing `dx`. The interval must
    /// hold a whole number of cells to within round-off.
    pub fn new(x_min: f64, x_max: f64, dx: f64) -> Result<Self, ModelError> {
        if !(dx.is_finite() && dx > 0.0) {
            return Err(ModelError::InvalidGrid(format!("dx must be > 0, got {dx}")));
        }
        if !(x_min.is_finite() && x_max.is_finite() && x_max > x_min) {
            return Err(ModelError::InvalidGrid(format!(
                "need x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        let cells = (x_max - x_min) / dx;
        let rounded = cells.round();
        if (cells - rounded).abs() > 1e-6 * rounded.max(1.0) {
            return Err(ModelError::InvalidGrid(format!(
                "extent {} is not a multiple of dx = {dx}",
                x_max - x_min
            )));
        }
        Self::from_points(x_min, dx, rounded as usize + 1)
    }

    pub fn from_points(x_min: f64, dx: f64, n: usize) -> Result<Self, ModelError> {
        if n < Self::MIN_POINTS {
            return Err(ModelError::InvalidGrid(format!(
                "need at least {} points, got {n}",
                Self::MIN_POINTS
            )));
        }
        if !(dx.is_finite() && dx > 0.0) {
            return Err(ModelError::InvalidGrid(format!("dx must be > 0, got {dx}")));
        }
        Ok(Self { x_min, dx, n })
    }

    /// `[-half_width, half_width]`.
    pub fn symmetric(half_width: f64, dx: f64) -> Result<Self, ModelError> {
        Self::new(-half_width, half_width, dx)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.n - 1)
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.x(i))
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min && x <= self.x_max()
    }

    /// Index of the node closest to `x`, clamped to the grid.
    pub fn nearest(&self, x: f64) -> usize {
        let i = ((x - self.x_min) / self.dx).round();
        i.clamp(0.0, (self.n - 1) as f64) as usize
    }

    /// Linear interpolation of nodal `values` at `x`. `x` is clamped to the grid.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let s = ((x - self.x_min) / self.dx).clamp(0.0, (self.n - 1) as f64);
        let i = (s.floor() as usize).min(self.n - 2);
        let theta = s - i as f64;
        (1.0 - theta) * values[i] + theta * values[i + 1]
    }
}

/// Field and its time derivative on a grid at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub phi: Vec<f64>,
    pub phi_t: Vec<f64>,
    pub t: f64,
}

impl FieldState {
    pub fn new(phi: Vec<f64>, phi_t: Vec<f64>, t: f64) -> Result<Self, ModelError> {
        if phi.len() != phi_t.len() {
            return Err(ModelError::ShapeMismatch {
                expected: phi.len(),
                got: phi_t.len(),
            });
        }
        Ok(Self { phi, phi_t, t })
    }

    /// Static state `φ_t ≡ 0`.
    pub fn at_rest(phi: Vec<f64>) -> Self {
        let n = phi.len();
        Self {
            phi,
            phi_t: vec![0.0; n],
            t: 0.0,
        }
    }

    pub fn vacuum(params: &ModelParams, grid: &Grid) -> Self {
        Self::at_rest(vec![params.vacuum(); grid.len()])
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    /// First index holding a non-finite value in either array.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.phi
            .iter()
            .zip(&self.phi_t)
            .position(|(p, q)| !p.is_finite() || !q.is_finite())
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<(), ModelError> {
        if self.len() != grid.len() {
            return Err(ModelError::ShapeMismatch {
                expected: grid.len(),
                got: self.len(),
            });
        }
        Ok(())
    }
}

fn lorentz_gamma(v: f64) -> Result<f64, ModelError> {
    if !(v.is_finite() && v.abs() < 1.0) {
        return Err(ModelError::Superluminal(v));
    }
    Ok(1.0 / (1.0 - v * v).sqrt())
}

/// Boosted kink `(m/√λ) tanh(m (x − x0 − v t) / (√2 √(1 − v²)))`.
pub fn free_kink(params: &ModelParams, x0: f64, v: f64, x: f64, t: f64) -> Result<f64, ModelError> {
    let g = lorentz_gamma(v)?;
    let u = params.m * g * (x - x0 - v * t) / std::f64::consts::SQRT_2;
    Ok(params.vacuum() * u.tanh())
}

/// ∂/∂x of [`free_kink`]. The time derivative is `−v` times this.
pub fn free_kink_slope(
    params: &ModelParams,
    x0: f64,
    v: f64,
    x: f64,
    t: f64,
) -> Result<f64, ModelError> {
    let g = lorentz_gamma(v)?;
    let k = params.m * g / std::f64::consts::SQRT_2;
    let s = sech(k * (x - x0 - v * t));
    Ok(params.vacuum() * k * s * s)
}

/// Spatial derivative used by the energy functional: centered differences in
/// the interior, one-sided first-order differences at both ends.
pub fn gradient(phi: &[f64], dx: f64) -> Vec<f64> {
    let n = phi.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    out[0] = (phi[1] - phi[0]) / dx;
    out[n - 1] = (phi[n - 1] - phi[n - 2]) / dx;
    for i in 1..n - 1 {
        out[i] = (phi[i + 1] - phi[i - 1]) / (2.0 * dx);
    }
    out
}

/// Pointwise energy density ½φ_t² + ½φ_x² + ¼Λ(φ² − m²/λ)².
pub fn energy_density(
    params: &ModelParams,
    imp: &Impurity,
    grid: &Grid,
    state: &FieldState,
) -> Vec<f64> {
    let phi_x = gradient(&state.phi, grid.dx());
    let v2 = params.vacuum_sq();
    grid.points()
        .zip(state.phi.iter().zip(&state.phi_t))
        .zip(phi_x)
        .map(|((x, (&p, &pt)), px)| {
            let d = p * p - v2;
            0.5 * pt * pt + 0.5 * px * px + 0.25 * lambda_eff(params, imp, x) * d * d
        })
        .collect()
}

/// Trapezoid rule on a uniform grid.
pub fn trapezoid(values: &[f64], dx: f64) -> f64 {
    match values {
        [] | [_] => 0.0,
        [first, inner @ .., last] => dx * (0.5 * (first + last) + inner.iter().sum::<f64>()),
    }
}

/// Total field energy. Can be negative when Λ < 0 somewhere.
pub fn total_energy(params: &ModelParams, imp: &Impurity, grid: &Grid, state: &FieldState) -> f64 {
    trapezoid(&energy_density(params, imp, grid, state), grid.dx())
}

/// Meson frequency ω(k) = √(k² + 2m²).
pub fn meson_dispersion(params: &ModelParams, k: f64) -> f64 {
    (k * k + 2.0 * params.m * params.m).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fig1_well() -> Impurity {
        Impurity::new(-3.0, 2.0, 3.0).unwrap()
    }

    #[test]
    fn impurity_peak_and_tails() {
        let imp = fig1_well();
        assert_eq!(imp.value(3.0), -3.0);
        assert_eq!(imp.value(1e6), 0.0);
        assert_eq!(imp.value(-1e6), 0.0);
        // −3 sech²(1), 30-digit reference value
        assert!((imp.value(3.5) - (-1.259_923_024_842_078_2)).abs() < 1e-14);
    }

    #[test]
    fn width_convention() {
        let imp = Impurity::from_width(-1.0, 5.0, 0.0).unwrap();
        assert_eq!(imp.a, 6.0 / 5.0);
        assert!((imp.width() - 5.0).abs() < 1e-15);
        assert!(Impurity::new(1.0, 0.0, 0.0).is_err());
        assert!(Impurity::from_width(1.0, -2.0, 0.0).is_err());
    }

    #[test]
    fn impurity_derivatives_match_finite_differences() {
        let imp = Impurity::from_width(-5.0, 5.0, 1.0).unwrap();
        let h = 1e-5;
        for &x in &[-2.0, 0.3, 1.0, 1.7, 4.0] {
            let fd1 = (imp.value(x + h) - imp.value(x - h)) / (2.0 * h);
            let fd2 = (imp.derivative(x + h) - imp.derivative(x - h)) / (2.0 * h);
            assert!((fd1 - imp.derivative(x)).abs() < 1e-8, "V' at {x}");
            assert!((fd2 - imp.second_derivative(x)).abs() < 1e-7, "V'' at {x}");
        }
    }

    #[test]
    fn lambda_eff_examples() {
        let p = ModelParams::unit();
        assert_eq!(lambda_eff(&p, &fig1_well(), 3.0), -2.0);
        assert_eq!(lambda_eff(&p, &fig1_well(), 1e4), 1.0);
        let cancel = Impurity::new(-1.0, 1.2, 0.0).unwrap();
        assert_eq!(lambda_eff(&p, &cancel, 0.0), 0.0);
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(0.0, 1.0, 0.0).is_err());
        assert!(ModelParams::new(1.0, -1.0, 0.0).is_err());
        assert!(ModelParams::new(1.0, 1.0, -0.1).is_err());
        let p = ModelParams::new(2.0, 4.0, 0.1).unwrap();
        assert_eq!(p.vacuum(), 1.0);
    }

    #[test]
    fn free_kink_center_and_slope() {
        let p = ModelParams::unit();
        for &v in &[0.0, 0.3, -0.8] {
            assert_eq!(free_kink(&p, 1.5, v, 1.5, 0.0).unwrap(), 0.0);
        }
        let slope = free_kink_slope(&p, 0.0, 0.0, 0.0, 0.0).unwrap();
        assert!((slope - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(free_kink(&p, 0.0, 1.0, 0.0, 0.0).is_err());
        assert!(free_kink(&p, 0.0, -1.2, 0.0, 0.0).is_err());
    }

    #[test]
    fn boosted_kink_is_contracted() {
        // half-max width of ∂φ/∂x, measured on a fine lattice
        let p = ModelParams::unit();
        let half_width = |v: f64| {
            let xs: Vec<f64> = (0..200_001).map(|i| -10.0 + i as f64 * 1e-4).collect();
            let d: Vec<f64> = xs
                .iter()
                .map(|&x| free_kink_slope(&p, 0.0, v, x, 0.0).unwrap())
                .collect();
            let peak = d.iter().cloned().fold(0.0, f64::max);
            let inside: Vec<f64> = xs
                .iter()
                .zip(&d)
                .filter(|(_, &y)| y >= 0.5 * peak)
                .map(|(&x, _)| x)
                .collect();
            inside.last().unwrap() - inside.first().unwrap()
        };
        let ratio = half_width(0.6) / half_width(0.0);
        assert!((ratio - 0.8).abs() < 1e-3, "ratio {ratio}");
    }

    #[test]
    fn vacuum_has_zero_energy() {
        let p = ModelParams::unit();
        let g = Grid::symmetric(10.0, 0.1).unwrap();
        let s = FieldState::vacuum(&p, &g);
        assert_eq!(total_energy(&p, &Impurity::none(), &g, &s), 0.0);
    }

    fn kink_energy(dx: f64) -> f64 {
        let p = ModelParams::unit();
        let g = Grid::symmetric(20.0, dx).unwrap();
        let phi = g.points().map(|x| free_kink(&p, 0.0, 0.0, x, 0.0).unwrap()).collect();
        total_energy(&p, &Impurity::none(), &g, &FieldState::at_rest(phi))
    }

    #[test]
    fn free_kink_energy_is_the_kink_mass() {
        let exact = 2.0 * 2f64.sqrt() / 3.0;
        assert!((kink_energy(0.05) - exact).abs() < 1e-3);
    }

    #[test]
    fn kink_energy_converges_at_second_order() {
        let exact = ModelParams::unit().kink_mass();
        let errs: Vec<f64> = [0.2, 0.1, 0.05, 0.025]
            .iter()
            .map(|&dx| (kink_energy(dx) - exact).abs())
            .collect();
        for w in errs.windows(2) {
            let r = w[0] / w[1];
            assert!((3.5..4.5).contains(&r), "ratio {r} from {errs:?}");
        }
    }

    #[test]
    fn kink_mass_scaling() {
        let p = ModelParams::new(1.5, 2.0, 0.0).unwrap();
        let g = Grid::symmetric(20.0, 0.01).unwrap();
        let phi = g.points().map(|x| free_kink(&p, 0.0, 0.0, x, 0.0).unwrap()).collect();
        let e = total_energy(&p, &Impurity::none(), &g, &FieldState::at_rest(phi));
        assert!((e - p.kink_mass()).abs() < 1e-4);
    }

    #[test]
    fn meson_dispersion_examples() {
        let p = ModelParams::unit();
        assert_eq!(meson_dispersion(&p, 0.0), 2f64.sqrt());
        assert_eq!(meson_dispersion(&p, 2f64.sqrt()), 2.0);
        let phase = meson_dispersion(&p, 100.0) / 100.0;
        assert!((phase - 1.000_099_995).abs() < 1e-9);
    }

    #[test]
    fn grid_construction() {
        let g = Grid::symmetric(140.0, 0.1).unwrap();
        assert_eq!(g.len(), 2801);
        assert!((g.x_max() - 140.0).abs() < 1e-9);
        assert_eq!(g.nearest(3.0), 1430);
        assert!(Grid::new(0.0, 1.0, 0.3).is_err());
        assert!(Grid::new(0.0, 0.5, 0.1).is_err());
        assert!(Grid::new(1.0, 0.0, 0.1).is_err());
        let v: Vec<f64> = g.points().collect();
        assert!((g.interpolate(&v, 3.03) - 3.03).abs() < 1e-12);
    }

    #[test]
    fn topological_charge_of_free_kink() {
        let p = ModelParams::unit();
        for &half in &[10.0, 20.0, 40.0] {
            let g = Grid::symmetric(half, 0.1).unwrap();
            let q = free_kink(&p, 0.0, 0.0, g.x_max(), 0.0).unwrap()
                - free_kink(&p, 0.0, 0.0, g.x_min(), 0.0).unwrap();
            assert!((q - 2.0).abs() <= 4.0 * (-(2f64.sqrt()) * half).exp() + 1e-15);
        }
    }

    proptest! {
        #[test]
        fn impurity_is_even_about_center(
            h in -10.0..10.0f64, a in 0.05..8.0f64, xc in -50.0..50.0f64, d in 0.0..30.0f64
        ) {
            let imp = Impurity::new(h, a, xc).unwrap();
            prop_assert!((imp.value(xc + d) - imp.value(xc - d)).abs() <= 1e-12 * h.abs());
            prop_assert!(imp.value(xc + d).abs() <= h.abs());
        }

        #[test]
        fn lambda_negative_somewhere_iff_deep(h in -5.0..5.0f64, a in 0.1..5.0f64) {
            prop_assume!((h + 1.0).abs() > 1e-9);
            let p = ModelParams::unit();
            let imp = Impurity::new(h, a, 0.0).unwrap();
            // Λ attains its minimum at the well center for h < 0
            let negative = lambda_eff(&p, &imp, 0.0) < 0.0;
            prop_assert_eq!(negative, h < -p.lambda);
        }
    }
}
