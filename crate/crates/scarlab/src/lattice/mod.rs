//! Scar-supporting graphs: σ-oriented bonds, the vertex and circuit rules,
//! site phases, classification and generators.
//!
//! An edge `(u, v, σ)` stores `σ_uv`; `σ_vu = −σ_uv` is implied. Site phases
//! obey `q_v = q_u − σ_uv r q` and are kept as exact fractions of `4K(κ)`.

use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::path::Path;

use num_integer::Integer;
use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::elliptic::CommensurateQ;
use crate::error::{Error, Result};

pub mod classify;
pub mod generate;

pub use classify::{classify, ClassificationReport};
pub use generate::{generate, GenerateOptions, LatticeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BondKind {
    Csse,
    Su2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub sigma: i8,
    pub kind: BondKind,
    pub r: u32,
    #[serde(rename = "J")]
    pub strength: f64,
}

impl Edge {
    pub fn csse(u: usize, v: usize, sigma: i8, r: u32) -> Self {
        Self {
            u,
            v,
            sigma,
            kind: BondKind::Csse,
            r,
            strength: 1.0,
        }
    }

    pub fn su2(u: usize, v: usize) -> Self {
        Self {
            u,
            v,
            sigma: 0,
            kind: BondKind::Su2,
            r: 1,
            strength: 1.0,
        }
    }

    /// `σ_xy` seen from endpoint `x`.
    pub fn sigma_from(&self, x: usize) -> i8 {
        if x == self.u {
            self.sigma
        } else {
            -self.sigma
        }
    }

    pub fn other(&self, x: usize) -> usize {
        if x == self.u {
            self.v
        } else {
            self.u
        }
    }
}

/// Periodic identifications of the cell grid. Vertices of toroidal graphs
/// are numbered cell-major: `vertex = (y·nx + x)·c + s` with `c` sites per
/// cell. The shifted torus identifies cell `(x, ny)` with `(x − shift, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Boundary {
    None,
    Toroidal { nx: usize, ny: usize },
    ToroidalShifted { nx: usize, ny: usize, shift: i64 },
}

#[derive(Serialize, Deserialize)]
struct BoundaryJson {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default)]
    nx: usize,
    #[serde(default)]
    ny: usize,
    #[serde(default)]
    shift: i64,
}

impl Serialize for Boundary {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let raw = match *self {
            Boundary::None => BoundaryJson {
                kind: "none".into(),
                nx: 0,
                ny: 0,
                shift: 0,
            },
            Boundary::Toroidal { nx, ny } => BoundaryJson {
                kind: "toroidal".into(),
                nx,
                ny,
                shift: 0,
            },
            Boundary::ToroidalShifted { nx, ny, shift } => BoundaryJson {
                kind: "toroidal_shifted".into(),
                nx,
                ny,
                shift,
            },
        };
        raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Boundary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = BoundaryJson::deserialize(d)?;
        match raw.kind.as_str() {
            "none" => Ok(Boundary::None),
            "toroidal" => Ok(Boundary::Toroidal { nx: raw.nx, ny: raw.ny }),
            "toroidal_shifted" => Ok(Boundary::ToroidalShifted {
                nx: raw.nx,
                ny: raw.ny,
                shift: raw.shift,
            }),
            other => Err(serde::de::Error::custom(format!("unknown boundary type {other:?}"))),
        }
    }
}

impl Boundary {
    fn cells(&self) -> Option<(usize, usize, i64)> {
        match *self {
            Boundary::None => None,
            Boundary::Toroidal { nx, ny } => Some((nx, ny, 0)),
            Boundary::ToroidalShifted { nx, ny, shift } => Some((nx, ny, shift)),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    vertices: usize,
    edges: Vec<Edge>,
    boundary: Boundary,
}

/// Graph with σ-oriented CSSE and SU(2) bonds.
#[derive(Debug, Clone, PartialEq)]
pub struct ScarGraph {
    vertices: usize,
    edges: Vec<Edge>,
    boundary: Boundary,
    /// Per edge, the number of times `u → v` crosses each period of the
    /// torus; a cycle is contractible iff its summed wraps vanish.
    wraps: Vec<[i64; 2]>,
}

impl ScarGraph {
    /// Validates and infers edge wraps from the cell-major numbering.
    pub fn new(vertices: usize, edges: Vec<Edge>, boundary: Boundary) -> Result<Self> {
        let wraps = infer_wraps(vertices, &edges, &boundary)?;
        Self::with_wraps(vertices, edges, boundary, wraps)
    }

    pub(crate) fn with_wraps(
        vertices: usize,
        edges: Vec<Edge>,
        boundary: Boundary,
        wraps: Vec<[i64; 2]>,
    ) -> Result<Self> {
        let mut seen = HashSet::with_capacity(edges.len());
        for e in &edges {
            if e.u >= vertices || e.v >= vertices {
                return Err(Error::InvalidInput(format!(
                    "edge ({}, {}) references a vertex outside 0..{vertices}",
                    e.u, e.v
                )));
            }
            if e.u == e.v {
                return Err(Error::InvalidInput(format!("self-loop at vertex {}", e.u)));
            }
            if !seen.insert((e.u.min(e.v), e.u.max(e.v))) {
                return Err(Error::InvalidInput(format!("duplicate edge ({}, {})", e.u, e.v)));
            }
            if !(-1..=1).contains(&e.sigma) {
                return Err(Error::InvalidInput(format!("sigma {} is not -1, 0 or 1", e.sigma)));
            }
            if (e.kind == BondKind::Su2) != (e.sigma == 0) {
                return Err(Error::InvalidInput(format!(
                    "edge ({}, {}): su2 bonds carry sigma 0 and csse bonds sigma +-1",
                    e.u, e.v
                )));
            }
            if e.r == 0 {
                return Err(Error::InvalidInput("q-multiplier r must be >= 1".into()));
            }
            if !e.strength.is_finite() {
                return Err(Error::InvalidInput("bond strength is not finite".into()));
            }
        }
        if wraps.len() != edges.len() {
            return Err(Error::DimensionMismatch {
                expected: edges.len(),
                found: wraps.len(),
            });
        }
        Ok(Self {
            vertices,
            edges,
            boundary,
            wraps,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: GraphJson = serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("graph JSON: {e}")))?;
        Self::new(raw.vertices, raw.edges, raw.boundary)
    }

    pub fn to_json(&self) -> String {
        let raw = GraphJson {
            vertices: self.vertices,
            edges: self.edges.clone(),
            boundary: self.boundary,
        };
        serde_json::to_string_pretty(&raw).expect("graph serializes")
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn vertices(&self) -> usize {
        self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn wraps(&self) -> &[[i64; 2]] {
        &self.wraps
    }

    /// Copy with edge `k`'s σ replaced (kind unchanged).
    pub fn with_sigma(&self, k: usize, sigma: i8) -> Result<Self> {
        let mut edges = self.edges.clone();
        edges[k].sigma = sigma;
        Self::with_wraps(self.vertices, edges, self.boundary, self.wraps.clone())
    }

    /// Per vertex, `(edge index, neighbour)` pairs.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.vertices];
        for (k, e) in self.edges.iter().enumerate() {
            adj[e.u].push((k, e.v));
            adj[e.v].push((k, e.u));
        }
        adj
    }

    pub fn csse_degree(&self, x: usize) -> usize {
        self.edges
            .iter()
            .filter(|e| e.kind == BondKind::Csse && (e.u == x || e.v == x))
            .count()
    }

    pub fn is_connected(&self) -> bool {
        spanning_tree(self).is_ok()
    }
}

/// Wrap counts from the cell-major numbering: each edge takes the shortest
/// cell displacement, which is unambiguous when both periods are at least 3.
fn infer_wraps(vertices: usize, edges: &[Edge], boundary: &Boundary) -> Result<Vec<[i64; 2]>> {
    let Some((nx, ny, shift)) = boundary.cells() else {
        return Ok(vec![[0, 0]; edges.len()]);
    };
    if nx == 0 || ny == 0 || vertices % (nx * ny) != 0 {
        return Err(Error::InvalidInput(format!(
            "{vertices} vertices do not tile a {nx}x{ny} cell grid"
        )));
    }
    let c = vertices / (nx * ny);
    let (nx, ny) = (nx as i64, ny as i64);
    let cell = |x: usize| {
        let k = (x / c) as i64;
        (k % nx, k / nx)
    };
    let shortest = |d: i64, n: i64| -> i64 {
        // Wrap count w minimizing |d + w n|, ties toward zero.
        let mut best = 0;
        for w in [-1, 1] {
            if (d + w * n).abs() < (d + best * n).abs() {
                best = w;
            }
        }
        best
    };
    Ok(edges
        .iter()
        .map(|e| {
            let (xu, yu) = cell(e.u);
            let (xv, yv) = cell(e.v);
            let b = shortest(yv - yu, ny);
            let a = shortest(xv - xu + b * shift, nx);
            [a, b]
        })
        .collect())
}

/// Vertices with `Σ_m σ_nm ≠ 0`.
pub fn check_vertex_rule(g: &ScarGraph) -> Vec<usize> {
    let mut sum = vec![0i64; g.vertices];
    for e in &g.edges {
        sum[e.u] += e.sigma as i64;
        sum[e.v] -= e.sigma as i64;
    }
    (0..g.vertices).filter(|&x| sum[x] != 0).collect()
}

/// Breadth-first spanning tree: parent edge per vertex, BFS order, depth.
struct SpanningTree {
    parent: Vec<Option<usize>>,
    order: Vec<usize>,
    depth: Vec<usize>,
}

fn spanning_tree(g: &ScarGraph) -> Result<SpanningTree> {
    spanning_tree_from(g, 0)
}

fn spanning_tree_from(g: &ScarGraph, root: usize) -> Result<SpanningTree> {
    if g.vertices == 0 {
        return Err(Error::DisconnectedGraph);
    }
    let adj = g.adjacency();
    let mut parent = vec![None; g.vertices];
    let mut depth = vec![usize::MAX; g.vertices];
    let mut order = Vec::with_capacity(g.vertices);
    let mut queue = VecDeque::from([root]);
    depth[root] = 0;
    while let Some(x) = queue.pop_front() {
        order.push(x);
        for &(k, y) in &adj[x] {
            if depth[y] == usize::MAX {
                depth[y] = depth[x] + 1;
                parent[y] = Some(k);
                queue.push_back(y);
            }
        }
    }
    if order.len() != g.vertices {
        return Err(Error::DisconnectedGraph);
    }
    Ok(SpanningTree { parent, order, depth })
}

/// One cycle of the fundamental basis as signed edges (`+1` when traversed
/// `u → v`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FundamentalCycle {
    pub vertices: Vec<usize>,
    pub edges: Vec<(usize, i64)>,
}

impl FundamentalCycle {
    /// `W = Σ σ r` along the cycle for the σ values in `sigma`.
    pub fn winding(&self, g: &ScarGraph, sigma: &[i8]) -> i64 {
        self.edges
            .iter()
            .map(|&(k, s)| s * sigma[k] as i64 * g.edges[k].r as i64)
            .sum()
    }

    /// Net number of crossings of each torus period.
    pub fn wrap(&self, g: &ScarGraph) -> [i64; 2] {
        self.edges.iter().fold([0, 0], |acc, &(k, s)| {
            [acc[0] + s * g.wraps[k][0], acc[1] + s * g.wraps[k][1]]
        })
    }
}

/// Fundamental cycles of a breadth-first spanning tree rooted at vertex 0.
pub fn fundamental_cycles(g: &ScarGraph) -> Result<Vec<FundamentalCycle>> {
    let tree = spanning_tree(g)?;
    let tree_edges: HashSet<usize> = tree.parent.iter().flatten().copied().collect();
    let up = |x: usize| -> (usize, usize, i64) {
        let k = tree.parent[x].expect("non-root vertex has a parent");
        let e = &g.edges[k];
        (k, e.other(x), if e.u == x { 1 } else { -1 })
    };
    let mut cycles = Vec::new();
    for (k, e) in g.edges.iter().enumerate() {
        if tree_edges.contains(&k) {
            continue;
        }
        // u → v along e, v up to the common ancestor, then down to u.
        let mut a = e.v;
        let mut b = e.u;
        let mut from_v = vec![(k, 1)];
        let mut verts_v = vec![e.u, e.v];
        let mut down_u: Vec<(usize, i64)> = Vec::new();
        let mut verts_u: Vec<usize> = Vec::new();
        while a != b {
            if tree.depth[a] >= tree.depth[b] {
                let (t, p, s) = up(a);
                from_v.push((t, s));
                a = p;
                verts_v.push(a);
            } else {
                let (t, p, s) = up(b);
                down_u.push((t, -s));
                b = p;
                verts_u.push(b);
            }
        }
        verts_v.pop();
        down_u.reverse();
        verts_u.reverse();
        from_v.extend(down_u);
        verts_v.extend(verts_u);
        // The walk ends back at u; drop the repeated start.
        if verts_v.len() > 1 && verts_v.last() == verts_v.first() {
            verts_v.pop();
        }
        cycles.push(FundamentalCycle {
            vertices: verts_v,
            edges: from_v,
        });
    }
    Ok(cycles)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Classification {
    None,
    LatticeDependent,
    LatticeIndependent,
    Unknown,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Classification::None => "None",
            Classification::LatticeDependent => "LatticeDependent",
            Classification::LatticeIndependent => "LatticeIndependent",
            Classification::Unknown => "Unknown",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CircuitConstraint {
    pub cycle: Vec<usize>,
    pub winding: i64,
    pub contractible: bool,
    pub satisfied: bool,
}

/// Allowed `q = 4K(κ)·k / winding_gcd`; a zero gcd admits every `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AdmissibleQ {
    pub winding_gcd: i64,
}

impl fmt::Display for AdmissibleQ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.winding_gcd {
            0 => f.write_str("any q"),
            1 => f.write_str("q = 4K*k (k integer)"),
            g => write!(f, "q = 4K*k/{g} (k integer)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleReport {
    pub vertex_violations: Vec<usize>,
    pub circuit_constraints: Vec<CircuitConstraint>,
    pub admissible_q: AdmissibleQ,
    /// Verdict for the σ pattern as given.
    pub classification: Classification,
    /// Both rules hold for the tested `q`.
    pub satisfied: bool,
}

/// True when `w` is a rational combination of the columns of `d`, i.e. the
/// winding functional factors through the torus wrap map.
pub(crate) fn winding_factors_through_wraps(d: &[[i64; 2]], w: &[i64]) -> bool {
    let base: Vec<Vec<i128>> = d.iter().map(|r| vec![r[0] as i128, r[1] as i128]).collect();
    let aug: Vec<Vec<i128>> = d
        .iter()
        .zip(w)
        .map(|(r, &x)| vec![r[0] as i128, r[1] as i128, x as i128])
        .collect();
    integer_rank(base) == integer_rank(aug)
}

/// Rank by fraction-free (Bareiss) elimination.
fn integer_rank(mut m: Vec<Vec<i128>>) -> usize {
    let rows = m.len();
    let cols = m.first().map_or(0, |r| r.len());
    let mut rank = 0;
    let mut prev = 1i128;
    for c in 0..cols {
        let Some(p) = (rank..rows).find(|&r| m[r][c] != 0) else {
            continue;
        };
        m.swap(rank, p);
        for r in rank + 1..rows {
            for k in c + 1..cols {
                m[r][k] = (m[rank][c] * m[r][k] - m[r][c] * m[rank][k]) / prev;
            }
            m[r][c] = 0;
        }
        prev = m[rank][c];
        rank += 1;
        if rank == rows {
            break;
        }
    }
    rank
}

/// Classification of a fixed σ pattern from its cycle data.
pub(crate) fn classify_pattern(vertex_ok: bool, wraps: &[[i64; 2]], windings: &[i64]) -> Classification {
    if !vertex_ok {
        Classification::None
    } else if winding_factors_through_wraps(wraps, windings) {
        Classification::LatticeIndependent
    } else {
        Classification::LatticeDependent
    }
}

/// Vertex rule, fundamental-cycle windings and the circuit rule at `q`.
pub fn check_circuit_rule(g: &ScarGraph, q: &CommensurateQ) -> Result<RuleReport> {
    let cycles = fundamental_cycles(g)?;
    let sigma: Vec<i8> = g.edges.iter().map(|e| e.sigma).collect();
    let vertex_violations = check_vertex_rule(g);
    let frac = q.fraction();
    let mut gcd = 0i64;
    let mut wraps = Vec::with_capacity(cycles.len());
    let mut windings = Vec::with_capacity(cycles.len());
    let circuit_constraints: Vec<CircuitConstraint> = cycles
        .iter()
        .map(|c| {
            let w = c.winding(g, &sigma);
            let d = c.wrap(g);
            gcd = gcd.gcd(&w);
            wraps.push(d);
            windings.push(w);
            CircuitConstraint {
                cycle: c.vertices.clone(),
                winding: w,
                contractible: d == [0, 0],
                satisfied: (frac * w).is_integer(),
            }
        })
        .collect();
    let classification = classify_pattern(vertex_violations.is_empty(), &wraps, &windings);
    let satisfied = vertex_violations.is_empty() && circuit_constraints.iter().all(|c| c.satisfied);
    Ok(RuleReport {
        vertex_violations,
        circuit_constraints,
        admissible_q: AdmissibleQ { winding_gcd: gcd },
        classification,
        satisfied,
    })
}

/// Phases `q_x / 4K` in `[0, 1)` by propagation `q_m = q_n − σ_nm r q` from
/// `root` (phase 0).
pub fn assign_site_phases(g: &ScarGraph, q: &CommensurateQ, root: usize) -> Result<Vec<Rational64>> {
    if root >= g.vertices {
        return Err(Error::SiteOutOfRange {
            site: root,
            n: g.vertices,
        });
    }
    let tree = spanning_tree_from(g, root)?;
    let frac = q.fraction();
    let wrap = |x: Rational64| x - x.floor();
    let mut phase = vec![Rational64::from_integer(0); g.vertices];
    for &x in tree.order.iter().skip(1) {
        let k = tree.parent[x].expect("non-root vertex has a parent");
        let e = &g.edges[k];
        let from = e.other(x);
        phase[x] = wrap(phase[from] - frac * (e.sigma_from(from) as i64 * e.r as i64));
    }
    for e in &g.edges {
        let expect = phase[e.u] - frac * (e.sigma as i64 * e.r as i64);
        if !(expect - phase[e.v]).is_integer() {
            return Err(Error::InconsistentPhases { vertex: e.v });
        }
    }
    Ok(phase)
}
