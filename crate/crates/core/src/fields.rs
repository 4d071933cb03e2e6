//! Analytic magnetization and applied fields used as test inputs.

use std::fmt;
use std::sync::Arc;

use crate::{Mat3, Vec3};

type VectorFn = dyn Fn(&Vec3) -> Vec3 + Send + Sync;
type GradientFn = dyn Fn(&Vec3) -> Mat3 + Send + Sync;

/// A continuous magnetization `u: Ω → ℝ³`, optionally with its analytic
/// gradient (rows: components, columns: ∂/∂x, ∂/∂y, ∂/∂z).
#[derive(Clone)]
pub struct SmoothField {
    name: String,
    value: Arc<VectorFn>,
    gradient: Option<Arc<GradientFn>>,
    unit_norm: bool,
    gradient_bound: Option<f64>,
}

impl fmt::Debug for SmoothField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothField")
            .field("name", &self.name)
            .field("unit_norm", &self.unit_norm)
            .field("has_gradient", &self.gradient.is_some())
            .finish()
    }
}

impl SmoothField {
    /// Wrap an arbitrary closure. No gradient is attached.
    pub fn from_fn<F>(name: impl Into<String>, unit_norm: bool, f: F) -> Self
    where
        F: Fn(&Vec3) -> Vec3 + Send + Sync + 'static,
    {
        SmoothField {
            name: name.into(),
            value: Arc::new(f),
            gradient: None,
            unit_norm,
            gradient_bound: None,
        }
    }

    pub fn with_gradient<G>(mut self, g: G) -> Self
    where
        G: Fn(&Vec3) -> Mat3 + Send + Sync + 'static,
    {
        self.gradient = Some(Arc::new(g));
        self
    }

    /// Record a bound on `|∂_d u|` along every axis direction `d`.
    pub fn with_gradient_bound(mut self, bound: f64) -> Self {
        self.gradient_bound = Some(bound);
        self
    }

    pub fn constant(u: Vec3) -> Self {
        let unit = (u.norm() - 1.0).abs() < 1e-12;
        SmoothField::from_fn("constant", unit, move |_| u)
            .with_gradient(|_| Mat3::zeros())
            .with_gradient_bound(0.0)
    }

    /// In-plane helix `(cos q·x, sin q·x, 0)`; `|∇u|² = |q|²` everywhere.
    pub fn helix(q: Vec3) -> Self {
        SmoothField::from_fn("helix", true, move |x| {
            let t = q.dot(x);
            Vec3::new(t.cos(), t.sin(), 0.0)
        })
        .with_gradient(move |x| {
            let t = q.dot(x);
            Vec3::new(-t.sin(), t.cos(), 0.0) * q.transpose()
        })
        .with_gradient_bound(q.abs().max())
    }

    /// Conical spiral with polar angle `theta`; `|∇u|² = |q|² sin²θ`.
    pub fn conical(q: Vec3, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        SmoothField::from_fn("conical", true, move |x| {
            let t = q.dot(x);
            Vec3::new(s * t.cos(), s * t.sin(), c)
        })
        .with_gradient(move |x| {
            let t = q.dot(x);
            Vec3::new(-s * t.sin(), s * t.cos(), 0.0) * q.transpose()
        })
        .with_gradient_bound(q.abs().max() * s.abs())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: &Vec3) -> Vec3 {
        (self.value)(x)
    }

    pub fn has_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn gradient(&self, x: &Vec3) -> Option<Mat3> {
        self.gradient.as_ref().map(|g| g(x))
    }

    /// Central-difference gradient with step `h`.
    pub fn fd_gradient(&self, x: &Vec3, h: f64) -> Mat3 {
        let mut g = Mat3::zeros();
        for d in 0..3 {
            let mut e = Vec3::zeros();
            e[d] = h;
            let col = (self.eval(&(x + e)) - self.eval(&(x - e))) / (2.0 * h);
            g.set_column(d, &col);
        }
        g
    }

    pub fn is_unit_norm(&self) -> bool {
        self.unit_norm
    }

    pub fn gradient_bound(&self) -> Option<f64> {
        self.gradient_bound
    }
}

/// Applied field `h_Z`.
#[derive(Clone)]
pub struct ZeemanField {
    name: String,
    value: Arc<VectorFn>,
}

impl fmt::Debug for ZeemanField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ZeemanField")
            .field("name", &self.name)
            .finish()
    }
}

impl ZeemanField {
    pub fn from_fn<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(&Vec3) -> Vec3 + Send + Sync + 'static,
    {
        ZeemanField {
            name: name.into(),
            value: Arc::new(f),
        }
    }

    pub fn zero() -> Self {
        ZeemanField::from_fn("zero", |_| Vec3::zeros())
    }

    pub fn uniform(h: Vec3) -> Self {
        ZeemanField::from_fn("uniform", move |_| h)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: &Vec3) -> Vec3 {
        (self.value)(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn helix_gradient_matches_finite_differences() {
        let u = SmoothField::helix(Vec3::new(2.0 * PI, 0.5, -1.0));
        for x in [Vec3::new(0.1, 0.2, -0.3), Vec3::new(-0.4, 0.0, 0.25)] {
            let g = u.gradient(&x).unwrap();
            let fd = u.fd_gradient(&x, 1e-5);
            assert!((g - fd).norm() < 1e-8);
            assert!((u.eval(&x).norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn conical_gradient_norm() {
        let q = Vec3::new(2.0 * PI, 0.0, 0.0);
        let u = SmoothField::conical(q, 0.7);
        let x = Vec3::new(0.13, -0.2, 0.4);
        let g = u.gradient(&x).unwrap();
        assert!((g.norm_squared() - q.norm_squared() * 0.7f64.sin().powi(2)).abs() < 1e-12);
    }
}
