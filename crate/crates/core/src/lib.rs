//! Numerical laboratory for the discrete-to-continuum limit of Heisenberg spin
//! lattices.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: domains, shrunk cubic lattices, neighbour tables and the
//!   five-tetrahedra cell decomposition with its edge/surface bookkeeping.
//! * [`spin_field`]: discrete magnetizations, point sampling of smooth fields,
//!   defect injection and the local-alignment hypothesis checkers.
//! * [`averaging`]: the smooth partition of unity and the averaged field
//!   `m_n = Φ_n⁻¹ (μ_n ⋆ ρ_n)`.
//! * [`fem_projection`]: the piecewise-linear interpolant on the tetrahedra,
//!   its Dirichlet energy and the exchange/Dirichlet correction terms.
//! * [`energies`]: discrete and continuum exchange and Zeeman energies, plus
//!   the total energy.
//! * [`demag`]: the free-space magnetostatic solver (FFT and direct).
//! * [`lab`]: n-sweeps that compare discrete energies with their continuum
//!   limits and fit convergence rates.

pub mod averaging;
pub mod demag;
pub mod energies;
pub mod error;
pub mod fem_projection;
pub mod fields;
pub mod geometry;
pub mod lab;
pub mod spin_field;

pub use error::{Error, Result};

/// Three-component real vector used for positions, spins and fields.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3×3 real matrix; gradients are stored with rows = spin component and
/// columns = spatial direction.
pub type Mat3 = nalgebra::Matrix3<f64>;

/// Parallel sum over `0..len` with a fixed chunking, so the result does not
/// depend on the number of threads or on work stealing.
pub(crate) fn par_sum<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    par_try_sum(len, |i| Ok(f(i))).expect("infallible")
}

pub(crate) fn par_try_sum<F>(len: usize, f: F) -> Result<f64>
where
    F: Fn(usize) -> Result<f64> + Sync,
{
    use rayon::prelude::*;
    const CHUNK: usize = 2048;
    let partials: Vec<f64> = (0..len.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let mut s = 0.0;
            for i in start..(start + CHUNK).min(len) {
                s += f(i)?;
            }
            Ok(s)
        })
        .collect::<Result<_>>()?;
    Ok(partials.iter().sum())
}
