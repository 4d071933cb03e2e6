//! Smooth partition of unity on the lattice and the averaged field
//! `m_n(y) = Φ_n(y)⁻¹ Σ_x μ_x ρ_n(y − x)`.
//!
//! The bump `ρ*` is a tensor product of 1D plateau profiles: equal to 1 for
//! `|t| ≤ 0.45k` (in units of `a`), a C∞ smoothstep ramp down to 0 at
//! `|t| = 0.55k`. The normalised `ρ` divides by the sum of all integer
//! translates, so `Σ_{x∈aℤ³} ρ(y − x) = 1` holds by construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::geometry::{DomainShape, DomainSpec, Lattice};
use crate::spin_field::SpinField;
use crate::{Error, Result, Vec3};

const PLATEAU: f64 = 0.45;
const SUPPORT: f64 = 0.55;

/// `e(u) / (e(u) + e(1 − u))` with `e(u) = exp(−1/u)`; satisfies
/// `f(u) + f(1 − u) = 1`.
fn smoothstep(u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return 1.0;
    }
    let e = |v: f64| (-1.0 / v).exp();
    let (p, q) = (e(u), e(1.0 - u));
    p / (p + q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    a: f64,
    k: usize,
    n_k: usize,
}

pub fn build_kernel(a: f64, k: usize) -> Result<Kernel> {
    if k == 0 {
        return Err(Error::InvalidParameter(
            "locality multiplier k must be >= 1".into(),
        ));
    }
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "mesh size a must be positive, got {a}"
        )));
    }
    let r = k as i64;
    let mut n_k = 0;
    for i in -r..=r {
        for j in -r..=r {
            for l in -r..=r {
                if i * i + j * j + l * l <= r * r {
                    n_k += 1;
                }
            }
        }
    }
    Ok(Kernel { a, k, n_k })
}

impl Kernel {
    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of nodes of `aℤ³` in the closed ball `B(0, ka)`.
    pub fn n_k(&self) -> usize {
        self.n_k
    }

    /// Half-width of the (cubic) support in units of `a`.
    pub fn support_half_width(&self) -> f64 {
        SUPPORT * self.k as f64
    }

    fn profile(&self, t: f64) -> f64 {
        let s = t.abs() / self.k as f64;
        if s <= PLATEAU {
            1.0
        } else if s >= SUPPORT {
            0.0
        } else {
            smoothstep((SUPPORT - s) / (SUPPORT - PLATEAU))
        }
    }

    fn translate_sum(&self, t: f64) -> f64 {
        let w = self.support_half_width();
        let lo = (t - w).ceil() as i64;
        let hi = (t + w).floor() as i64;
        (lo..=hi).map(|j| self.profile(t - j as f64)).sum()
    }

    /// The unnormalised bump `ρ*`.
    pub fn rho_star(&self, y: &Vec3) -> f64 {
        (0..3).map(|d| self.profile(y[d] / self.a)).product()
    }

    /// `ρ = ρ* / Σ_j ρ*(· − a j)`; the translates sum to one exactly.
    pub fn rho(&self, y: &Vec3) -> f64 {
        (0..3)
            .map(|d| {
                let t = y[d] / self.a;
                let p = self.profile(t);
                if p == 0.0 {
                    0.0
                } else {
                    p / self.translate_sum(t)
                }
            })
            .product()
    }

    /// `Σ_{x ∈ aℤ³} ρ(y − x)` evaluated literally (for checking).
    pub fn translate_total(&self, y: &Vec3) -> f64 {
        let w = self.support_half_width();
        let t = y / self.a;
        let mut total = 0.0;
        let range = |d: usize| ((t[d] - w).ceil() as i64)..=((t[d] + w).floor() as i64);
        for i in range(0) {
            for j in range(1) {
                for l in range(2) {
                    let x = Vec3::new(i as f64, j as f64, l as f64) * self.a;
                    total += self.rho(&(y - x));
                }
            }
        }
        total
    }

    /// Lattice nodes within the support of `ρ_n(y − ·)` and their weights.
    fn weights(&self, lattice: &Lattice, y: &Vec3) -> Vec<(usize, f64)> {
        let n = lattice.n() as f64;
        let h = lattice.spacing();
        // support half-width of ρ_n(y − ·) in units of the spacing a/n
        let w = self.support_half_width();
        let t = y / h;
        let range = |d: usize| ((t[d] - w).ceil() as i64)..=((t[d] + w).floor() as i64);
        let mut out = Vec::new();
        for i in range(0) {
            for j in range(1) {
                for l in range(2) {
                    if let Some(p) = lattice.find([i, j, l]) {
                        let r = self.rho(&((y - lattice.position(p)) * n));
                        if r > 0.0 {
                            out.push((p, r));
                        }
                    }
                }
            }
        }
        out
    }
}

/// Truncated partition of unity `Φ_n(y) = Σ_{x ∈ L_{n,Ω}} ρ_n(y − x)`.
pub fn phi_n(kernel: &Kernel, lattice: &Lattice, y: &Vec3) -> f64 {
    kernel
        .weights(lattice, y)
        .iter()
        .map(|w| w.1)
        .sum::<f64>()
        .min(1.0)
}

/// `m_n(y)`; fails outside Ω or where no lattice node reaches `y`.
pub fn average(kernel: &Kernel, field: &SpinField<'_>, y: &Vec3) -> Result<Vec3> {
    let lattice = field.lattice();
    if !lattice.domain().contains(y) {
        return Err(Error::OutsideDomain([y[0], y[1], y[2]]));
    }
    let mut phi = 0.0;
    let mut acc = Vec3::zeros();
    for (p, w) in kernel.weights(lattice, y) {
        phi += w;
        acc += field.value(p) * w;
    }
    if phi <= 1e-14 {
        return Err(Error::OutOfReach([y[0], y[1], y[2]]));
    }
    Ok(acc / phi)
}

/// `m_n` bound to one kernel and one spin field.
#[derive(Debug, Clone, Copy)]
pub struct AveragedField<'k, 'f, 'l> {
    kernel: &'k Kernel,
    field: &'f SpinField<'l>,
}

impl<'k, 'f, 'l> AveragedField<'k, 'f, 'l> {
    pub fn new(kernel: &'k Kernel, field: &'f SpinField<'l>) -> Self {
        AveragedField { kernel, field }
    }

    pub fn eval(&self, y: &Vec3) -> Result<Vec3> {
        average(self.kernel, self.field, y)
    }

    pub fn phi(&self, y: &Vec3) -> f64 {
        phi_n(self.kernel, self.field.lattice(), y)
    }

    /// Measured `b = min Φ_n` over the given points.
    pub fn lower_bound(&self, points: &[Vec3]) -> f64 {
        measure_lower_bound(self.kernel, self.field.lattice(), points)
    }

    /// `|m_n(y)|²` at every point, in parallel.
    pub fn norms_squared(&self, points: &[Vec3]) -> Result<Vec<f64>> {
        points
            .par_iter()
            .map(|y| self.eval(y).map(|m| m.norm_squared()))
            .collect()
    }
}

pub fn measure_lower_bound(kernel: &Kernel, lattice: &Lattice, points: &[Vec3]) -> f64 {
    points
        .par_iter()
        .map(|y| phi_n(kernel, lattice, y))
        .reduce(|| f64::INFINITY, f64::min)
}

/// Cell-centred grid with `res` cells across the largest extent of the
/// bounding box, clipped to Ω.
pub fn evaluation_grid(domain: &DomainSpec, res: usize) -> Vec<Vec3> {
    let (lo, hi) = domain.bounding_box();
    let ext = hi - lo;
    let c = ext.max() / res.max(1) as f64;
    let counts: Vec<usize> = (0..3)
        .map(|d| ((ext[d] / c) - 1e-9).ceil().max(1.0) as usize)
        .collect();
    let mut out = Vec::new();
    for i in 0..counts[0] {
        for j in 0..counts[1] {
            for l in 0..counts[2] {
                let p = lo + Vec3::new(i as f64 + 0.5, j as f64 + 0.5, l as f64 + 0.5) * c;
                if domain.contains(&p) {
                    out.push(p);
                }
            }
        }
    }
    out
}

/// Random points of Ω concentrated within `depth` of the boundary (where
/// Φ_n can drop below one), plus uniform interior points.
pub fn probe_points(domain: &DomainSpec, depth: f64, count: usize, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let (lo, hi) = domain.bounding_box();
    while out.len() < count {
        let mut p = Vec3::from_fn(|d, _| rng.gen_range(lo[d]..=hi[d]));
        if out.len() % 4 != 0 {
            match domain.shape() {
                DomainShape::Box { min, max } => {
                    for d in 0..3 {
                        if rng.gen_bool(0.5) {
                            let s = rng.gen_range(0.0..=depth);
                            p[d] = if rng.gen_bool(0.5) {
                                max[d] - s
                            } else {
                                min[d] + s
                            };
                        }
                    }
                }
                DomainShape::Ball { center, radius } => {
                    let dir = crate::spin_field::random_unit_vector(&mut rng);
                    let r = radius - rng.gen_range(0.0..=depth.min(*radius));
                    p = center + dir * r;
                }
            }
        }
        if domain.contains(&p) {
            out.push(p);
        }
    }
    out
}
