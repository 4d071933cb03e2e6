//! Piecewise-linear interpolation of a spin field on the tetrahedral
//! decomposition, its Dirichlet energy, and the algebraic correction between
//! the Dirichlet energy and the discrete exchange energy.

use crate::geometry::{neighbors, Tet, TetDecomposition};
use crate::spin_field::SpinField;
use crate::{par_sum, par_try_sum, Error, Mat3, Result, Vec3};
use nalgebra::Matrix4;

/// `P_n(μ)`: linear on every tetrahedron, equal to the spins at the nodes and
/// zero outside the union of full cells.
#[derive(Debug, Clone, Copy)]
pub struct PwlField<'d, 'f, 'l> {
    decomp: &'d TetDecomposition,
    field: &'f SpinField<'l>,
}

pub fn project<'d, 'f, 'l>(
    field: &'f SpinField<'l>,
    decomp: &'d TetDecomposition,
) -> Result<PwlField<'d, 'f, 'l>> {
    if !decomp.matches(field.lattice()) {
        return Err(Error::LatticeMismatch {
            what: "tetrahedral decomposition",
        });
    }
    Ok(PwlField { decomp, field })
}

/// Gradients of the barycentric coordinates of the tetrahedron with vertex
/// positions `p`, as rows; `None` when degenerate.
fn barycentric_gradients(p: &[Vec3; 4]) -> Option<([Vec3; 4], f64)> {
    let m = Matrix4::from_fn(|r, c| if r == 0 { 1.0 } else { p[c][r - 1] });
    let det = m.determinant();
    let scale = (p[1] - p[0]).norm().max(1e-300).powi(3);
    if det.abs() <= 1e-12 * scale {
        return None;
    }
    let inv = m.try_inverse()?;
    let grads = [0, 1, 2, 3].map(|i| Vec3::new(inv[(i, 1)], inv[(i, 2)], inv[(i, 3)]));
    Some((grads, det.abs() / 6.0))
}

impl<'d, 'f, 'l> PwlField<'d, 'f, 'l> {
    pub fn decomposition(&self) -> &'d TetDecomposition {
        self.decomp
    }

    pub fn field(&self) -> &'f SpinField<'l> {
        self.field
    }

    fn positions(&self, t: &Tet) -> [Vec3; 4] {
        t.vertices.map(|v| self.field.lattice().position(v))
    }

    /// Value at `x`; zero in Ω ∖ Ω_n, an error outside Ω's bounding box.
    pub fn evaluate(&self, x: &Vec3) -> Result<Vec3> {
        let (lo, hi) = self.decomp.bounding_box();
        let tol = 1e-12 * (hi - lo).max();
        if (0..3).any(|d| x[d] < lo[d] - tol || x[d] > hi[d] + tol) {
            return Err(Error::OutsideDomain([x[0], x[1], x[2]]));
        }
        Ok(match self.decomp.locate(x) {
            Some((t, bary)) => {
                let tet = &self.decomp.tets()[t];
                (0..4)
                    .map(|i| self.field.value(tet.vertices[i]) * bary[i])
                    .sum()
            }
            None => Vec3::zeros(),
        })
    }

    /// Constant gradient on tetrahedron `t` (rows: spin components, columns:
    /// spatial directions), from the 4×4 barycentric system.
    pub fn tet_gradient(&self, t: usize) -> Result<Mat3> {
        let tet = &self.decomp.tets()[t];
        let (grads, _) =
            barycentric_gradients(&self.positions(tet)).ok_or(Error::DegenerateTet(t))?;
        Ok((0..4)
            .map(|i| self.field.value(tet.vertices[i]) * grads[i].transpose())
            .sum())
    }

    pub fn tet_volume(&self, t: usize) -> Result<f64> {
        let tet = &self.decomp.tets()[t];
        barycentric_gradients(&self.positions(tet))
            .map(|g| g.1)
            .ok_or(Error::DegenerateTet(t))
    }

    /// `∫_{Ω_n} |∇P_n|²`.
    pub fn dirichlet_energy(&self) -> Result<f64> {
        par_try_sum(self.decomp.tets().len(), |t| {
            Ok(self.tet_volume(t)? * self.tet_gradient(t)?.norm_squared())
        })
    }

    /// `∫_{Ω_n} |P_n|²`, exact for the quadratic integrand:
    /// `V/20 · (Σ|μ_i|² + |Σμ_i|²)` per tetrahedron.
    pub fn l2_norm_squared(&self) -> f64 {
        let tets = self.decomp.tets();
        par_sum(tets.len(), |i| {
            let t = &tets[i];
            let v = self.decomp.tet_volume(t.kind);
            let vals = t.vertices.map(|p| self.field.value(p));
            let sq: f64 = vals.iter().map(|m| m.norm_squared()).sum();
            let s: Vec3 = vals.iter().sum();
            v / 20.0 * (sq + s.norm_squared())
        })
    }
}

/// Dirichlet energy of `P_n(μ)` split against the discrete exchange energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown {
    pub dirichlet: f64,
    /// `E_{n,ex} / 2A`.
    pub exchange_over_2a: f64,
    /// `dirichlet − exchange_over_2a`.
    pub alpha_n: f64,
    /// `(a/6n) Σ_{(i,j,k)∈S_n} (μ_i − μ_k)·(μ_k − μ_j)`.
    pub s_cross: f64,
    /// Boundary over-count: every lattice edge carries weight `a/n` in the
    /// exchange energy, while Dirichlet assembly only reaches it through the
    /// tetrahedra and surface triples that actually contain it.
    pub s_surface: f64,
}

/// Assemble the Dirichlet energy, the exchange energy over `2A`, and both
/// sides of `α_n = S_cross − S_surface` independently.
pub fn energy_breakdown(
    field: &SpinField<'_>,
    decomp: &TetDecomposition,
) -> Result<EnergyBreakdown> {
    let pwl = project(field, decomp)?;
    let dirichlet = pwl.dirichlet_energy()?;
    let lattice = field.lattice();
    let h = lattice.spacing();
    let table = neighbors(lattice);
    let d2 = |p: usize, q: usize| (field.value(p) - field.value(q)).norm_squared();

    let edges = table.edges();
    let exchange_over_2a = par_sum(edges.len(), |e| h * d2(edges[e].0, edges[e].1));

    let surfaces = decomp.surfaces();
    let s_cross = par_sum(surfaces.len(), |s| {
        let [i, j, k] = surfaces[s];
        let (mi, mj, mk) = (field.value(i), field.value(j), field.value(k));
        (mi - mk).dot(&(mk - mj))
    }) * h
        / 6.0;

    let axis_deficit = par_sum(edges.len(), |e| {
        let (p, q) = edges[e];
        let (cm, sm) = decomp.axis_edge(p, q).map_or((0.0, 0.0), |e| {
            (e.corner_mult as f64, e.surface_mult as f64)
        });
        ((4.0 - cm) * h / 6.0 + (4.0 - sm) * h / 12.0) * d2(p, q)
    });
    let diags = decomp.diag_edges();
    let diag_deficit = par_sum(diags.len(), |i| {
        let e = diags[i];
        (2.0 - e.center_mult as f64) * h / 12.0 * d2(e.nodes.0, e.nodes.1)
    });

    Ok(EnergyBreakdown {
        dirichlet,
        exchange_over_2a,
        alpha_n: dirichlet - exchange_over_2a,
        s_cross,
        s_surface: axis_deficit + diag_deficit,
    })
}
