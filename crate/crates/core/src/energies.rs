//! Discrete and continuum exchange, Zeeman and total energies.

use crate::demag::{demag_discrete, DemagConfig};
use crate::fields::{SmoothField, ZeemanField};
use crate::geometry::{DomainSpec, NeighborTable, TetDecomposition};
use crate::spin_field::SpinField;
use crate::{par_sum, Error, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExchangeParams {
    coupling: f64,
}

impl ExchangeParams {
    /// Exchange constant `A > 0` (equal for all neighbour pairs).
    pub fn new(coupling: f64) -> Result<Self> {
        if !(coupling.is_finite() && coupling > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "exchange constant A = {coupling} must be > 0"
            )));
        }
        Ok(ExchangeParams { coupling })
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }
}

/// `E_{n,ex} = (a/n) Σ_x Σ_{y∈N_x} A |μ_y − μ_x|²`, every edge counted once
/// from each end.
pub fn exchange_discrete(
    field: &SpinField<'_>,
    neighbors: &NeighborTable,
    params: &ExchangeParams,
) -> Result<f64> {
    if !neighbors.matches(field.lattice()) {
        return Err(Error::LatticeMismatch {
            what: "neighbor table",
        });
    }
    let edges = neighbors.edges();
    let sum = par_sum(edges.len(), |e| {
        let (p, q) = edges[e];
        (field.value(p) - field.value(q)).norm_squared()
    });
    Ok(field.lattice().spacing() * params.coupling * 2.0 * sum)
}

/// `−(a/n)³ Σ_x h_Z(x)·μ_x`.
pub fn zeeman_discrete(field: &SpinField<'_>, h: &ZeemanField) -> f64 {
    let lattice = field.lattice();
    let s = par_sum(lattice.len(), |p| {
        h.eval(&lattice.position(p)).dot(&field.value(p))
    });
    -lattice.spacing().powi(3) * s
}

/// Midpoint rule on a cell-centred grid clipped to Ω.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    /// Cells across the largest extent of the bounding box.
    pub resolution: usize,
    /// Sub-samples per axis in cells cut by the boundary.
    pub boundary_subsamples: usize,
    /// Central-difference step for fields without an analytic gradient.
    pub fd_step: Option<f64>,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature {
            resolution: 64,
            boundary_subsamples: 4,
            fd_step: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    /// `|Q(2R) − Q(R)|`; the reported value is `Q(2R)`.
    pub error_estimate: f64,
}

fn midpoint<F>(domain: &DomainSpec, res: usize, sub: usize, f: &F) -> f64
where
    F: Fn(&Vec3) -> f64 + Sync,
{
    let (lo, hi) = domain.bounding_box();
    let ext = hi - lo;
    let c = ext.max() / res as f64;
    let counts: [usize; 3] = [0, 1, 2].map(|d| (ext[d] / c - 1e-9).ceil().max(1.0) as usize);
    let half_diag = 0.5 * c * 3f64.sqrt();
    let sub = sub.max(1);
    par_sum(counts[0] * counts[1] * counts[2], |id| {
        let i = id % counts[0];
        let j = (id / counts[0]) % counts[1];
        let l = id / (counts[0] * counts[1]);
        let corner = lo + Vec3::new(i as f64, j as f64, l as f64) * c;
        let center = corner + Vec3::repeat(0.5 * c);
        let sd = domain.signed_distance(&center);
        if sd >= half_diag {
            return f(&center) * c.powi(3);
        }
        if sd <= -half_diag {
            return 0.0;
        }
        let s = c / sub as f64;
        let mut acc = 0.0;
        for a in 0..sub {
            for b in 0..sub {
                for e in 0..sub {
                    let p = corner + Vec3::new(a as f64 + 0.5, b as f64 + 0.5, e as f64 + 0.5) * s;
                    if domain.contains(&p) {
                        acc += f(&p);
                    }
                }
            }
        }
        acc * s.powi(3)
    })
}

fn integrate<F>(domain: &DomainSpec, quad: &Quadrature, f: F) -> Result<QuadratureResult>
where
    F: Fn(&Vec3) -> f64 + Sync,
{
    if quad.resolution == 0 {
        return Err(Error::InvalidParameter(
            "quadrature resolution must be >= 1".into(),
        ));
    }
    let coarse = midpoint(domain, quad.resolution, quad.boundary_subsamples, &f);
    let fine = midpoint(domain, 2 * quad.resolution, quad.boundary_subsamples, &f);
    Ok(QuadratureResult {
        value: fine,
        error_estimate: (fine - coarse).abs(),
    })
}

/// `2A ∫_Ω |∇u|²`.
pub fn exchange_continuum(
    u: &SmoothField,
    domain: &DomainSpec,
    params: &ExchangeParams,
    quad: &Quadrature,
) -> Result<QuadratureResult> {
    let a2 = 2.0 * params.coupling;
    if u.has_gradient() {
        integrate(domain, quad, |x| {
            a2 * u.gradient(x).expect("gradient present").norm_squared()
        })
    } else if let Some(h) = quad.fd_step {
        integrate(domain, quad, |x| a2 * u.fd_gradient(x, h).norm_squared())
    } else {
        Err(Error::GradientUnavailable)
    }
}

/// `−∫_Ω h_Z·u`.
pub fn zeeman_continuum(
    u: &SmoothField,
    h: &ZeemanField,
    domain: &DomainSpec,
    quad: &Quadrature,
) -> Result<QuadratureResult> {
    integrate(domain, quad, |x| -h.eval(x).dot(&u.eval(x)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TotalEnergyReport {
    pub exchange: f64,
    pub demag: f64,
    pub zeeman: f64,
    pub total: f64,
    pub exchange_ref: Option<f64>,
    pub demag_ref: Option<f64>,
    pub zeeman_ref: Option<f64>,
}

impl TotalEnergyReport {
    pub fn new(exchange: f64, demag: f64, zeeman: f64) -> Self {
        TotalEnergyReport {
            exchange,
            demag,
            zeeman,
            total: exchange + demag + zeeman,
            exchange_ref: None,
            demag_ref: None,
            zeeman_ref: None,
        }
    }

    /// `E_∞` assembled from the continuum references, when all are present.
    pub fn reference_total(&self) -> Option<f64> {
        Some(self.exchange_ref? + self.demag_ref? + self.zeeman_ref?)
    }
}

/// `E_n = E_{n,ex} + E_{n,d} + E_{n,Z}`; the demagnetizing term is evaluated
/// on `P_n(μ)` extended by zero, and skipped when `demag` is `None`.
pub fn total_discrete(
    field: &SpinField<'_>,
    neighbors: &NeighborTable,
    decomp: &TetDecomposition,
    params: &ExchangeParams,
    h: &ZeemanField,
    demag: Option<&DemagConfig>,
) -> Result<TotalEnergyReport> {
    let exchange = exchange_discrete(field, neighbors, params)?;
    let zeeman = zeeman_discrete(field, h);
    let demag = match demag {
        Some(cfg) => demag_discrete(field, decomp, cfg)?,
        None => 0.0,
    };
    Ok(TotalEnergyReport::new(exchange, demag, zeeman))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_lattice, neighbors};
    use std::f64::consts::PI;

    #[test]
    fn two_node_exchange_by_hand() {
        let bx = DomainSpec::new_box(Vec3::repeat(-0.1), Vec3::new(0.5, 0.1, 0.1)).unwrap();
        let l = build_lattice(&bx, 1.0, 2).unwrap();
        assert_eq!(l.len(), 2);
        let s = SpinField::new(&l, vec![Vec3::z(), Vec3::x()]).unwrap();
        let e = exchange_discrete(&s, &neighbors(&l), &ExchangeParams::new(1.0).unwrap()).unwrap();
        assert!((e - 2.0).abs() < 1e-15);
    }

    #[test]
    fn helix_exchange_closed_form() {
        for n in [4, 8, 16] {
            let l = build_lattice(&DomainSpec::unit_box(), 1.0, n).unwrap();
            let s =
                crate::spin_field::sample(&SmoothField::helix(Vec3::new(2.0 * PI, 0.0, 0.0)), &l)
                    .unwrap();
            let e =
                exchange_discrete(&s, &neighbors(&l), &ExchangeParams::new(1.0).unwrap()).unwrap();
            let nf = n as f64;
            let expected = 8.0 * (nf + 1.0).powi(2) * (PI / nf).sin().powi(2);
            assert!((e - expected).abs() < 1e-10 * expected);
        }
    }

    #[test]
    fn zeeman_27_nodes() {
        let l = build_lattice(&DomainSpec::unit_box(), 1.0, 2).unwrap();
        let s = SpinField::uniform(&l, Vec3::z());
        let e = zeeman_discrete(&s, &ZeemanField::uniform(Vec3::z()));
        assert!((e + 3.375).abs() < 1e-14);
        assert_eq!(zeeman_discrete(&s, &ZeemanField::zero()), 0.0);
    }

    #[test]
    fn bad_coupling_is_rejected() {
        assert!(ExchangeParams::new(0.0).is_err());
        assert!(ExchangeParams::new(f64::NAN).is_err());
    }

    #[test]
    fn continuum_helix_box() {
        let p = ExchangeParams::new(1.0).unwrap();
        let q = Quadrature {
            resolution: 16,
            ..Quadrature::default()
        };
        let r = exchange_continuum(
            &SmoothField::helix(Vec3::new(2.0 * PI, 0.0, 0.0)),
            &DomainSpec::unit_box(),
            &p,
            &q,
        )
        .unwrap();
        assert!((r.value - 8.0 * PI * PI).abs() < 1e-9);
        assert!(r.error_estimate < 1e-9);
    }

    #[test]
    fn continuum_zeeman_constant() {
        let q = Quadrature {
            resolution: 8,
            ..Quadrature::default()
        };
        let r = zeeman_continuum(
            &SmoothField::constant(Vec3::z()),
            &ZeemanField::uniform(Vec3::z()),
            &DomainSpec::unit_box(),
            &q,
        )
        .unwrap();
        assert!((r.value + 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_gradient_is_reported() {
        let u = SmoothField::from_fn("opaque", true, |_| Vec3::z());
        let p = ExchangeParams::new(1.0).unwrap();
        let q = Quadrature {
            resolution: 4,
            ..Quadrature::default()
        };
        assert_eq!(
            exchange_continuum(&u, &DomainSpec::unit_box(), &p, &q),
            Err(Error::GradientUnavailable)
        );
        let q = Quadrature {
            fd_step: Some(1e-4),
            ..q
        };
        assert!(
            exchange_continuum(&u, &DomainSpec::unit_box(), &p, &q)
                .unwrap()
                .value
                .abs()
                < 1e-12
        );
    }

    #[test]
    fn continuum_ball_volume() {
        let ball = DomainSpec::new_ball(Vec3::zeros(), 0.5).unwrap();
        let q = Quadrature::default();
        let r = zeeman_continuum(
            &SmoothField::constant(Vec3::z()),
            &ZeemanField::uniform(Vec3::z()),
            &ball,
            &q,
        )
        .unwrap();
        assert!((r.value + ball.volume()).abs() < 1e-3 * ball.volume());
    }
}
