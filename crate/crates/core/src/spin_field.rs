//! Discrete magnetizations on a lattice, point sampling of smooth fields,
//! defect injection, and the local-alignment checks.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::fields::SmoothField;
use crate::geometry::{Lattice, NeighborTable};
use crate::{Error, Mat3, Result, Vec3};

/// One 3-vector per lattice node.
#[derive(Debug, Clone)]
pub struct SpinField<'a> {
    lattice: &'a Lattice,
    values: Vec<Vec3>,
}

impl<'a> SpinField<'a> {
    pub fn new(lattice: &'a Lattice, values: Vec<Vec3>) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(Error::InvalidParameter(format!(
                "{} values for {} nodes",
                values.len(),
                lattice.len()
            )));
        }
        Ok(SpinField { lattice, values })
    }

    pub fn uniform(lattice: &'a Lattice, u: Vec3) -> Self {
        SpinField {
            lattice,
            values: vec![u; lattice.len()],
        }
    }

    /// Independent uniformly distributed unit spins.
    pub fn random_unit<R: Rng>(lattice: &'a Lattice, rng: &mut R) -> Self {
        let values = (0..lattice.len())
            .map(|_| random_unit_vector(rng))
            .collect();
        SpinField { lattice, values }
    }

    pub fn lattice(&self) -> &'a Lattice {
        self.lattice
    }

    pub fn values(&self) -> &[Vec3] {
        &self.values
    }

    pub fn value(&self, p: usize) -> Vec3 {
        self.values[p]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Apply the same linear map to every spin.
    pub fn transformed(&self, r: &Mat3) -> SpinField<'a> {
        SpinField {
            lattice: self.lattice,
            values: self.values.iter().map(|v| r * v).collect(),
        }
    }

    pub fn max_norm_defect(&self) -> f64 {
        self.values
            .iter()
            .map(|v| (v.norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Plain-text dump: one line `i j k mx my mz` per node in lattice order.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 48);
        for (idx, v) in self.lattice.nodes().iter().zip(&self.values) {
            let _ = writeln!(
                out,
                "{} {} {} {:.5e} {:.5e} {:.5e}",
                idx[0], idx[1], idx[2], v[0], v[1], v[2]
            );
        }
        out
    }

    /// Parse the format written by [`SpinField::to_text`]. Every lattice node
    /// must appear exactly once.
    pub fn from_text(lattice: &'a Lattice, text: &str) -> Result<Self> {
        let mut values = vec![None; lattice.len()];
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Parse(format!("line {}: expected `i j k mx my mz`", lineno + 1));
            if parts.len() != 6 {
                return Err(bad());
            }
            let mut idx = [0i64; 3];
            for d in 0..3 {
                idx[d] = parts[d].parse().map_err(|_| bad())?;
            }
            let mut v = Vec3::zeros();
            for d in 0..3 {
                v[d] = parts[3 + d].parse().map_err(|_| bad())?;
            }
            let p = lattice.find(idx).ok_or_else(|| {
                Error::Parse(format!(
                    "line {}: node {:?} not in lattice",
                    lineno + 1,
                    idx
                ))
            })?;
            if values[p].replace(v).is_some() {
                return Err(Error::Parse(format!(
                    "line {}: duplicate node {:?}",
                    lineno + 1,
                    idx
                )));
            }
        }
        let values = values
            .into_iter()
            .enumerate()
            .map(|(p, v)| {
                v.ok_or_else(|| Error::Parse(format!("missing node {:?}", lattice.node(p))))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SpinField { lattice, values })
    }
}

pub fn random_unit_vector<R: Rng>(rng: &mut R) -> Vec3 {
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).max(0.0).sqrt();
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

/// Point samples `(p_n(u))_x = u(x)`.
pub fn sample<'a>(field: &SmoothField, lattice: &'a Lattice) -> Result<SpinField<'a>> {
    let values: Vec<Vec3> = (0..lattice.len())
        .into_par_iter()
        .map(|p| field.eval(&lattice.position(p)))
        .collect();
    if let Some(p) = values.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
        return Err(Error::NonFiniteSample {
            index: lattice.node(p),
        });
    }
    Ok(SpinField { lattice, values })
}

/// Bound `c_n` on the squared neighbour difference at defect nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DefectAmplitude {
    /// `c_n = c` for every n (does not decay; a control case).
    Constant(f64),
    /// `c_n = scale / ln(n + 1)`.
    InverseLog { scale: f64 },
}

impl DefectAmplitude {
    pub fn at(&self, n: usize) -> f64 {
        match *self {
            DefectAmplitude::Constant(c) => c,
            DefectAmplitude::InverseLog { scale } => scale / ((n + 1) as f64).ln(),
        }
    }

    pub fn decays(&self) -> bool {
        matches!(self, DefectAmplitude::InverseLog { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefectSpec {
    /// Target defect count is `⌈β·n⌉`.
    pub beta: f64,
    pub amplitude: DefectAmplitude,
    pub seed: u64,
}

impl DefectSpec {
    pub fn count(&self, n: usize) -> usize {
        (self.beta * n as f64 - 1e-9).ceil().max(0.0) as usize
    }
}

/// Great-circle interpolation between unit vectors.
pub fn slerp(a: &Vec3, b: &Vec3, t: f64) -> Vec3 {
    let dot = a.dot(b).clamp(-1.0, 1.0);
    let theta = dot.acos();
    if theta < 1e-12 {
        return *a;
    }
    let axis = if theta > std::f64::consts::PI - 1e-9 {
        // antipodal: any perpendicular direction defines a great circle
        let trial = if a[0].abs() < 0.9 {
            Vec3::x()
        } else {
            Vec3::y()
        };
        (trial - a * a.dot(&trial)).normalize()
    } else {
        (b - a * dot).normalize()
    };
    let phi = t * theta;
    a * phi.cos() + axis * phi.sin()
}

/// Re-randomize `⌈β·n⌉` pairwise non-adjacent nodes, then pull each of them
/// back along a great circle towards a neighbour value until its largest
/// squared neighbour difference is at most `c_n`. The anchor neighbour is the
/// one whose value already has the smallest worst-case difference to the
/// other neighbours; if even the anchor value violates `c_n` the defect takes
/// the anchor value exactly. Returns the new field and the defect nodes.
pub fn inject_defects<'a>(
    field: &SpinField<'a>,
    neighbors: &NeighborTable,
    spec: &DefectSpec,
) -> Result<(SpinField<'a>, Vec<usize>)> {
    let lattice = field.lattice();
    if !neighbors.matches(lattice) {
        return Err(Error::LatticeMismatch {
            what: "neighbor table",
        });
    }
    let n = lattice.n();
    let c_n = spec.amplitude.at(n);
    if !(0.0..=4.0).contains(&c_n) {
        return Err(Error::InvalidParameter(format!(
            "defect amplitude c_n = {c_n} outside [0, 4] (unit spins differ by at most 4)"
        )));
    }
    if !(spec.beta.is_finite() && spec.beta >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "defect scale beta = {}",
            spec.beta
        )));
    }
    let count = spec.count(n);
    if count > lattice.len() {
        return Err(Error::InvalidParameter(format!(
            "{count} defects requested on {} nodes",
            lattice.len()
        )));
    }
    let mut values = field.values().to_vec();
    if count == 0 {
        return Ok((SpinField { lattice, values }, Vec::new()));
    }

    let mut rng =
        ChaCha8Rng::seed_from_u64(spec.seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut order: Vec<usize> = (0..lattice.len()).collect();
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let mut blocked = vec![false; lattice.len()];
    let mut sites = Vec::with_capacity(count);
    for &p in &order {
        if sites.len() == count {
            break;
        }
        if blocked[p] {
            continue;
        }
        sites.push(p);
        blocked[p] = true;
        for &q in neighbors.of(p) {
            blocked[q] = true;
        }
    }
    if sites.len() < count {
        return Err(Error::InvalidParameter(format!(
            "only {} non-adjacent defect sites available, {count} requested",
            sites.len()
        )));
    }
    sites.sort_unstable();

    for &d in &sites {
        let target = random_unit_vector(&mut rng);
        let nbrs = neighbors.of(d);
        let worst = |v: &Vec3| -> f64 {
            nbrs.iter()
                .map(|&q| (v - values[q]).norm_squared())
                .fold(0.0, f64::max)
        };
        if nbrs.is_empty() {
            values[d] = target;
            continue;
        }
        let anchor = nbrs
            .iter()
            .map(|&q| values[q])
            .min_by(|a, b| worst(a).total_cmp(&worst(b)))
            .expect("non-empty neighbour list");
        let along = |t: f64| slerp(&anchor, &target, t);
        values[d] = if worst(&target) <= c_n {
            target
        } else if worst(&anchor) > c_n {
            anchor
        } else {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if worst(&along(mid)) <= c_n {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            along(lo)
        };
    }
    Ok((SpinField { lattice, values }, sites))
}

/// Outcome of the local-alignment check over balls of radius `k·a/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyp1Report {
    pub k: usize,
    /// `max (1 − μ_y·μ_z)` over node pairs at distance at most `k·a/n`.
    pub zeta: f64,
    /// The same maximum over pairs that fit in a common closed ball of radius
    /// `k·a/n` (distance at most `2k·a/n`); this is the quantity that bounds
    /// the averaged field from below.
    pub zeta_ball: f64,
    pub threshold: f64,
    pub pass: bool,
}

fn offsets_within(radius_sq: i64) -> Vec<[i64; 3]> {
    let r = (radius_sq as f64).sqrt().floor() as i64;
    let mut out = Vec::new();
    for i in -r..=r {
        for j in -r..=r {
            for k in -r..=r {
                let d = [i, j, k];
                let n2 = i * i + j * j + k * k;
                // half space: each unordered pair once
                if n2 > 0 && n2 <= radius_sq && d > [0, 0, 0] {
                    out.push(d);
                }
            }
        }
    }
    out
}

fn max_misalignment(field: &SpinField<'_>, offsets: &[[i64; 3]]) -> f64 {
    let lattice = field.lattice();
    (0..lattice.len())
        .into_par_iter()
        .map(|p| {
            let idx = lattice.node(p);
            let mu = field.value(p);
            offsets
                .iter()
                .filter_map(|o| lattice.find([idx[0] + o[0], idx[1] + o[1], idx[2] + o[2]]))
                .map(|q| 1.0 - mu.dot(&field.value(q)))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
        .clamp(0.0, 2.0)
}

/// Measure `ζ_n` and compare it with the threshold `c_hyp / n²`.
pub fn check_hypothesis1(field: &SpinField<'_>, k: usize, c_hyp: f64) -> Result<Hyp1Report> {
    if k == 0 {
        return Err(Error::InvalidParameter(
            "locality multiplier k must be >= 1".into(),
        ));
    }
    let k2 = (k * k) as i64;
    let zeta = max_misalignment(field, &offsets_within(k2));
    let zeta_ball = max_misalignment(field, &offsets_within(4 * k2));
    let n = field.lattice().n() as f64;
    let threshold = c_hyp / (n * n);
    Ok(Hyp1Report {
        k,
        zeta,
        zeta_ball,
        threshold,
        pass: zeta <= threshold,
    })
}

/// Outcome of the nearest-neighbour check with an exceptional set.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyp3Report {
    /// Nodes with some neighbour difference `|μ_x − μ_y|² > c/n²`.
    pub defects: Vec<usize>,
    /// Largest squared neighbour difference seen from a regular node.
    pub max_regular_sq: f64,
    /// Largest squared neighbour difference seen from a defect node.
    pub max_defect_sq: f64,
    /// Allowed number of defects, `β_max·n`.
    pub count_limit: f64,
    pub c_n: f64,
    pub pass: bool,
}

/// Classify nodes as regular or defect for the constant `c` and check the
/// defect set against `#defects ≤ β_max·n` and the amplitude bound `c_n`.
pub fn check_hypothesis3(
    field: &SpinField<'_>,
    neighbors: &NeighborTable,
    c: f64,
    c_n: f64,
    beta_max: f64,
) -> Result<Hyp3Report> {
    let lattice = field.lattice();
    if !neighbors.matches(lattice) {
        return Err(Error::LatticeMismatch {
            what: "neighbor table",
        });
    }
    if !(c > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "hypothesis constant c = {c} must be > 0"
        )));
    }
    let n = lattice.n() as f64;
    let regular_bound = c / (n * n);
    let worst: Vec<f64> = (0..lattice.len())
        .into_par_iter()
        .map(|p| {
            let mu = field.value(p);
            neighbors
                .of(p)
                .iter()
                .map(|&q| (mu - field.value(q)).norm_squared())
                .fold(0.0, f64::max)
        })
        .collect();
    let mut defects = Vec::new();
    let mut max_regular_sq: f64 = 0.0;
    let mut max_defect_sq: f64 = 0.0;
    for (p, &w) in worst.iter().enumerate() {
        if w > regular_bound {
            defects.push(p);
            max_defect_sq = max_defect_sq.max(w);
        } else {
            max_regular_sq = max_regular_sq.max(w);
        }
    }
    let count_limit = beta_max * n;
    let pass = defects.len() as f64 <= count_limit && max_defect_sq <= c_n;
    Ok(Hyp3Report {
        defects,
        max_regular_sq,
        max_defect_sq,
        count_limit,
        c_n,
        pass,
    })
}
