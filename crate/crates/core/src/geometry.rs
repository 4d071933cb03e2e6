//! Domains, shrunk cubic lattices, neighbour tables and the five-tetrahedra
//! decomposition of the lattice cells.
//!
//! Nodes are integer triples `i`; their position is `(a/n)·i`. Every cell of
//! the lattice whose eight vertices are nodes is split into four corner
//! tetrahedra and one center tetrahedron. The center tetrahedron always uses
//! the four vertices of even global parity (`i+j+k` even), so neighbouring
//! cells use mirrored decompositions and share the same diagonal on every
//! common face.

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

use nalgebra::Matrix3;

use crate::{Error, Result, Vec3};

/// Relative tolerance used when testing whether a point lies in a domain.
const CONTAINS_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum DomainShape {
    Box { min: Vec3, max: Vec3 },
    Ball { center: Vec3, radius: f64 },
}

/// A closed domain Ω containing the origin in its interior.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    shape: DomainShape,
}

impl DomainSpec {
    pub fn new_box(min: Vec3, max: Vec3) -> Result<Self> {
        if !(min.iter().chain(max.iter()).all(|v| v.is_finite())) {
            return Err(Error::InvalidDomain("non-finite box corner".into()));
        }
        for d in 0..3 {
            if !(min[d] < max[d]) {
                return Err(Error::InvalidDomain(format!(
                    "box has no extent along axis {d}"
                )));
            }
            if !(min[d] < 0.0 && 0.0 < max[d]) {
                return Err(Error::InvalidDomain(
                    "origin is not interior to the box".into(),
                ));
            }
        }
        Ok(DomainSpec {
            shape: DomainShape::Box { min, max },
        })
    }

    /// The box `[-1/2, 1/2]³` of unit volume.
    pub fn unit_box() -> Self {
        DomainSpec {
            shape: DomainShape::Box {
                min: Vec3::repeat(-0.5),
                max: Vec3::repeat(0.5),
            },
        }
    }

    pub fn new_ball(center: Vec3, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) || !center.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidDomain(format!("bad ball radius {radius}")));
        }
        if center.norm() >= radius {
            return Err(Error::InvalidDomain(
                "origin is not interior to the ball".into(),
            ));
        }
        Ok(DomainSpec {
            shape: DomainShape::Ball { center, radius },
        })
    }

    pub fn shape(&self) -> &DomainShape {
        &self.shape
    }

    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        match &self.shape {
            DomainShape::Box { min, max } => (*min, *max),
            DomainShape::Ball { center, radius } => (
                center - Vec3::repeat(*radius),
                center + Vec3::repeat(*radius),
            ),
        }
    }

    fn tolerance(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        CONTAINS_RTOL * (hi - lo).max()
    }

    /// Closed membership test (points on the boundary are inside).
    pub fn contains(&self, p: &Vec3) -> bool {
        self.signed_distance(p) >= -self.tolerance()
    }

    /// Distance to the boundary, positive inside and negative outside
    /// (exact for the ball, a lower bound on the Euclidean distance outside
    /// the box).
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        match &self.shape {
            DomainShape::Box { min, max } => (0..3)
                .map(|d| (p[d] - min[d]).min(max[d] - p[d]))
                .fold(f64::INFINITY, f64::min),
            DomainShape::Ball { center, radius } => radius - (p - center).norm(),
        }
    }

    pub fn volume(&self) -> f64 {
        match &self.shape {
            DomainShape::Box { min, max } => (max - min).product(),
            DomainShape::Ball { radius, .. } => 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3),
        }
    }
}

/// The nodes of the shrunk lattice `(a/n)·ℤ³` that lie in Ω.
#[derive(Debug, Clone)]
pub struct Lattice {
    domain: DomainSpec,
    a: f64,
    n: usize,
    nodes: Vec<[i64; 3]>,
    index: HashMap<[i64; 3], usize>,
}

/// Build the shrunk lattice `L_{n,Ω}`; nodes are stored in lexicographic
/// order of their integer coordinates.
pub fn build_lattice(domain: &DomainSpec, a: f64, n: usize) -> Result<Lattice> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "shrink index n must be >= 1".into(),
        ));
    }
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "mesh size a must be positive, got {a}"
        )));
    }
    let spacing = a / n as f64;
    let (lo, hi) = domain.bounding_box();
    let range = |d: usize| -> (i64, i64) {
        (
            (lo[d] / spacing - 1e-9).ceil() as i64,
            (hi[d] / spacing + 1e-9).floor() as i64,
        )
    };
    let (rx, ry, rz) = (range(0), range(1), range(2));
    let mut nodes = Vec::new();
    for i in rx.0..=rx.1 {
        for j in ry.0..=ry.1 {
            for k in rz.0..=rz.1 {
                let idx = [i, j, k];
                if domain.contains(&node_position(a, n, idx)) {
                    nodes.push(idx);
                }
            }
        }
    }
    if nodes.is_empty() {
        return Err(Error::EmptyLattice { spacing });
    }
    let index = nodes.iter().enumerate().map(|(p, &idx)| (idx, p)).collect();
    Ok(Lattice {
        domain: domain.clone(),
        a,
        n,
        nodes,
        index,
    })
}

/// Position of integer node `idx`; computed as `(a·i)/n` so that lattices
/// with the same ratio `a/n` produce identical coordinates.
fn node_position(a: f64, n: usize, idx: [i64; 3]) -> Vec3 {
    let n = n as f64;
    Vec3::new(
        a * idx[0] as f64 / n,
        a * idx[1] as f64 / n,
        a * idx[2] as f64 / n,
    )
}

impl Lattice {
    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Lattice spacing `a/n`.
    pub fn spacing(&self) -> f64 {
        self.a / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[[i64; 3]] {
        &self.nodes
    }

    pub fn node(&self, p: usize) -> [i64; 3] {
        self.nodes[p]
    }

    pub fn find(&self, idx: [i64; 3]) -> Option<usize> {
        self.index.get(&idx).copied()
    }

    pub fn position(&self, p: usize) -> Vec3 {
        node_position(self.a, self.n, self.nodes[p])
    }

    pub fn position_of(&self, idx: [i64; 3]) -> Vec3 {
        node_position(self.a, self.n, idx)
    }

    /// Cheap identity used to check that derived structures refer to this
    /// lattice.
    pub(crate) fn fingerprint(&self) -> (u64, usize, usize) {
        (self.a.to_bits(), self.n, self.nodes.len())
    }
}

pub const AXIS_OFFSETS: [[i64; 3]; 6] = [
    [-1, 0, 0],
    [1, 0, 0],
    [0, -1, 0],
    [0, 1, 0],
    [0, 0, -1],
    [0, 0, 1],
];

fn add(a: [i64; 3], b: [i64; 3]) -> [i64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// Axis neighbours of every node present in the lattice.
#[derive(Debug, Clone)]
pub struct NeighborTable {
    neighbors: Vec<Vec<usize>>,
    boundary: Vec<usize>,
    edges: Vec<(usize, usize)>,
    fingerprint: (u64, usize, usize),
}

pub fn neighbors(lattice: &Lattice) -> NeighborTable {
    let mut table = Vec::with_capacity(lattice.len());
    let mut edges = Vec::new();
    for (p, &idx) in lattice.nodes().iter().enumerate() {
        let list: Vec<usize> = AXIS_OFFSETS
            .iter()
            .filter_map(|&o| lattice.find(add(idx, o)))
            .collect();
        for &o in AXIS_OFFSETS.iter().skip(1).step_by(2) {
            if let Some(q) = lattice.find(add(idx, o)) {
                edges.push((p, q));
            }
        }
        table.push(list);
    }
    let boundary = (0..table.len()).filter(|&p| table[p].len() < 6).collect();
    NeighborTable {
        neighbors: table,
        boundary,
        edges,
        fingerprint: lattice.fingerprint(),
    }
}

impl NeighborTable {
    pub fn of(&self, p: usize) -> &[usize] {
        &self.neighbors[p]
    }

    pub fn degree(&self, p: usize) -> usize {
        self.neighbors[p].len()
    }

    /// Nodes with fewer than six neighbours.
    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    /// Every nearest-neighbour pair once, as `(x, x + e_d)`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub(crate) fn matches(&self, lattice: &Lattice) -> bool {
        self.fingerprint == lattice.fingerprint()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TetKind {
    Corner,
    Center,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tet {
    /// Node indices. For corner tetrahedra the first vertex is the corner
    /// and the next three are its neighbours along x, y and z.
    pub vertices: [usize; 4],
    pub kind: TetKind,
    pub cell: usize,
}

#[derive(Debug, Clone)]
pub struct Cell {
    /// Integer coordinates of the lowest vertex.
    pub origin: [i64; 3],
    /// Node indices of the vertices, local id `ox + 2·oy + 4·oz`.
    pub vertices: [usize; 8],
}

/// Axis edge of a full cell with its multiplicities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AxisEdge {
    pub nodes: (usize, usize),
    /// Number of corner tetrahedra containing the edge (4 in the interior).
    pub corner_mult: u8,
    /// Number of surface triples containing the edge (4 in the interior).
    pub surface_mult: u8,
}

/// Face diagonal used by center tetrahedra.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiagEdge {
    pub nodes: (usize, usize),
    /// Number of center tetrahedra containing the diagonal (2 in the interior).
    pub center_mult: u8,
}

#[derive(Debug, Clone)]
pub struct TetDecomposition {
    spacing: f64,
    bbox: (Vec3, Vec3),
    fingerprint: (u64, usize, usize),
    cells: Vec<Cell>,
    cell_index: HashMap<[i64; 3], usize>,
    tets: Vec<Tet>,
    axis_edges: Vec<AxisEdge>,
    axis_lookup: HashMap<(usize, usize), usize>,
    diag_edges: Vec<DiagEdge>,
    surfaces: Vec<[usize; 3]>,
}

fn parity(idx: [i64; 3]) -> usize {
    (idx[0] + idx[1] + idx[2]).rem_euclid(2) as usize
}

fn local_offset(id: usize) -> [i64; 3] {
    [
        (id & 1) as i64,
        ((id >> 1) & 1) as i64,
        ((id >> 2) & 1) as i64,
    ]
}

/// Local vertex ids of the five tetrahedra of a cell whose origin has the
/// given parity: four corner tetrahedra then the center one.
fn local_tets(cell_parity: usize) -> [[usize; 4]; 5] {
    let mut out = [[0usize; 4]; 5];
    let mut corner = 0;
    let mut center = [0usize; 4];
    let mut c = 0;
    for id in 0..8usize {
        let global_odd = (cell_parity + id.count_ones() as usize) % 2 == 1;
        if global_odd {
            out[corner] = [id, id ^ 1, id ^ 2, id ^ 4];
            corner += 1;
        } else {
            center[c] = id;
            c += 1;
        }
    }
    out[4] = center;
    out
}

/// Inverse edge matrices of the ten local tetrahedra, used for barycentric
/// coordinates of points given in cell-local units.
fn local_inverses() -> &'static [[Matrix3<f64>; 5]; 2] {
    static INV: OnceLock<[[Matrix3<f64>; 5]; 2]> = OnceLock::new();
    INV.get_or_init(|| {
        let mut out = [[Matrix3::zeros(); 5]; 2];
        for (parity, row) in out.iter_mut().enumerate() {
            for (t, ids) in local_tets(parity).iter().enumerate() {
                let v: Vec<Vec3> = ids
                    .iter()
                    .map(|&id| {
                        let o = local_offset(id);
                        Vec3::new(o[0] as f64, o[1] as f64, o[2] as f64)
                    })
                    .collect();
                let m = Matrix3::from_columns(&[v[1] - v[0], v[2] - v[0], v[3] - v[0]]);
                row[t] = m
                    .try_inverse()
                    .expect("local tetrahedra are non-degenerate");
            }
        }
        out
    })
}

/// Split every full lattice cell into five tetrahedra and gather the edge
/// sets `E_n`, `C_n` and the surface triples `S_n` with literal
/// multiplicities. An empty decomposition (no full cell) is valid.
pub fn decompose(lattice: &Lattice) -> TetDecomposition {
    let mut cells = Vec::new();
    let mut cell_index = HashMap::new();
    for &origin in lattice.nodes() {
        let mut verts = [0usize; 8];
        let full = (0..8).all(|id| match lattice.find(add(origin, local_offset(id))) {
            Some(p) => {
                verts[id] = p;
                true
            }
            None => false,
        });
        if full {
            cell_index.insert(origin, cells.len());
            cells.push(Cell {
                origin,
                vertices: verts,
            });
        }
    }

    let mut tets = Vec::with_capacity(5 * cells.len());
    let mut axis_edges: Vec<AxisEdge> = Vec::new();
    let mut axis_lookup: HashMap<(usize, usize), usize> = HashMap::new();
    let mut diag_edges: Vec<DiagEdge> = Vec::new();
    let mut diag_lookup: HashMap<(usize, usize), usize> = HashMap::new();
    let mut surfaces = Vec::new();
    let mut seen_surfaces: HashSet<[usize; 3]> = HashSet::new();

    let key = |a: usize, b: usize| if a < b { (a, b) } else { (b, a) };

    for (ci, cell) in cells.iter().enumerate() {
        let cp = parity(cell.origin);
        let locals = local_tets(cp);
        for (t, ids) in locals.iter().enumerate() {
            let vertices = ids.map(|id| cell.vertices[id]);
            let kind = if t < 4 {
                TetKind::Corner
            } else {
                TetKind::Center
            };
            tets.push(Tet {
                vertices,
                kind,
                cell: ci,
            });
            match kind {
                TetKind::Corner => {
                    for &nb in &vertices[1..] {
                        let k = key(vertices[0], nb);
                        let e = *axis_lookup.entry(k).or_insert_with(|| {
                            axis_edges.push(AxisEdge {
                                nodes: k,
                                corner_mult: 0,
                                surface_mult: 0,
                            });
                            axis_edges.len() - 1
                        });
                        axis_edges[e].corner_mult += 1;
                    }
                }
                TetKind::Center => {
                    for i in 0..4 {
                        for j in i + 1..4 {
                            let k = key(vertices[i], vertices[j]);
                            let e = *diag_lookup.entry(k).or_insert_with(|| {
                                diag_edges.push(DiagEdge {
                                    nodes: k,
                                    center_mult: 0,
                                });
                                diag_edges.len() - 1
                            });
                            diag_edges[e].center_mult += 1;
                        }
                    }
                }
            }
        }

        // Faces: the even-parity pair is the diagonal, each odd vertex an apex.
        for axis in 0..3 {
            for side in 0..2 {
                let face: Vec<usize> = (0..8).filter(|&id| (id >> axis) & 1 == side).collect();
                let (even, odd): (Vec<usize>, Vec<usize>) = face
                    .iter()
                    .partition(|&&id| parity(add(cell.origin, local_offset(id))) == 0);
                let (i, j) = key(cell.vertices[even[0]], cell.vertices[even[1]]);
                for &apex in &odd {
                    let k = cell.vertices[apex];
                    let triple = [i, j, k];
                    if seen_surfaces.insert(triple) {
                        surfaces.push(triple);
                        for end in [i, j] {
                            let e = axis_lookup[&key(end, k)];
                            axis_edges[e].surface_mult += 1;
                        }
                    }
                }
            }
        }
    }

    TetDecomposition {
        spacing: lattice.spacing(),
        bbox: lattice.domain().bounding_box(),
        fingerprint: lattice.fingerprint(),
        cells,
        cell_index,
        tets,
        axis_edges,
        axis_lookup,
        diag_edges,
        surfaces,
    }
}

impl TetDecomposition {
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn tets(&self) -> &[Tet] {
        &self.tets
    }

    pub fn corner_tets(&self) -> impl Iterator<Item = &Tet> {
        self.tets.iter().filter(|t| t.kind == TetKind::Corner)
    }

    pub fn center_tets(&self) -> impl Iterator<Item = &Tet> {
        self.tets.iter().filter(|t| t.kind == TetKind::Center)
    }

    /// `E_n` with corner-tetrahedron and surface multiplicities.
    pub fn axis_edges(&self) -> &[AxisEdge] {
        &self.axis_edges
    }

    pub fn axis_edge(&self, a: usize, b: usize) -> Option<&AxisEdge> {
        let k = if a < b { (a, b) } else { (b, a) };
        self.axis_lookup.get(&k).map(|&e| &self.axis_edges[e])
    }

    /// `C_n` with center-tetrahedron multiplicities.
    pub fn diag_edges(&self) -> &[DiagEdge] {
        &self.diag_edges
    }

    /// `S_n`: triples `(i, j, k)` with `(i, j)` a diagonal and `(i, k)`,
    /// `(j, k)` axis edges.
    pub fn surfaces(&self) -> &[[usize; 3]] {
        &self.surfaces
    }

    pub fn tet_volume(&self, kind: TetKind) -> f64 {
        let h3 = self.spacing.powi(3);
        match kind {
            TetKind::Corner => h3 / 6.0,
            TetKind::Center => h3 / 3.0,
        }
    }

    /// λ(Ω_n), the volume covered by the tetrahedra.
    pub fn covered_volume(&self) -> f64 {
        self.cells.len() as f64 * self.spacing.powi(3)
    }

    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        self.bbox
    }

    pub(crate) fn matches(&self, lattice: &Lattice) -> bool {
        self.fingerprint == lattice.fingerprint()
    }

    /// Find the tetrahedron containing `p` and its barycentric coordinates
    /// (ordered like the tetrahedron's vertices). Returns `None` outside Ω_n.
    pub fn locate(&self, p: &Vec3) -> Option<(usize, [f64; 4])> {
        const EPS: f64 = 1e-9;
        let u = p / self.spacing;
        let mut choices: [[i64; 2]; 3] = [[0; 2]; 3];
        for d in 0..3 {
            choices[d] = [(u[d] - EPS).floor() as i64, (u[d] + EPS).floor() as i64];
        }
        let mut best: Option<(usize, [f64; 4], f64)> = None;
        for cx in choices[0] {
            for cy in choices[1] {
                for cz in choices[2] {
                    let origin = [cx, cy, cz];
                    let Some(&ci) = self.cell_index.get(&origin) else {
                        continue;
                    };
                    let local = Vec3::new(u[0] - cx as f64, u[1] - cy as f64, u[2] - cz as f64);
                    let cp = parity(origin);
                    let locals = local_tets(cp);
                    let inv = &local_inverses()[cp];
                    for t in 0..5 {
                        let o = local_offset(locals[t][0]);
                        let v0 = Vec3::new(o[0] as f64, o[1] as f64, o[2] as f64);
                        let l = inv[t] * (local - v0);
                        let bary = [1.0 - l.sum(), l[0], l[1], l[2]];
                        let worst = bary.iter().cloned().fold(f64::INFINITY, f64::min);
                        if best.as_ref().map_or(true, |b| worst > b.2) {
                            best = Some((5 * ci + t, bary, worst));
                        }
                    }
                }
            }
        }
        match best {
            Some((t, bary, worst)) if worst >= -EPS => Some((t, bary)),
            _ => None,
        }
    }
}
