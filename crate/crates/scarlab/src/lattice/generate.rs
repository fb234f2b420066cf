//! Built-in lattices with their σ patterns.
//!
//! Cell coordinates `(x, y)` are wrapped onto the torus with the generators
//! `T1 = (nx, 0)` and `T2 = (shift, ny)`; each edge records how many times it
//! crosses each generator.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Boundary, Edge, ScarGraph};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeKind {
    Chain,
    NnnChain,
    Square,
    SquareShifted,
    Lieb,
    TriangularSu2,
    KagomeSu2,
    HoneycombSu2,
    ModifiedHoneycomb,
    TrimerLadder,
    TrimerBrickwall,
    /// All bonds CSSE, cyclic orientation on every triangle.
    Triangular,
    /// All bonds CSSE, cyclic orientation on every triangle.
    Kagome,
    /// All bonds CSSE; every vertex has odd CSSE degree.
    Honeycomb,
}

impl LatticeKind {
    pub const ALL: [LatticeKind; 14] = [
        LatticeKind::Chain,
        LatticeKind::NnnChain,
        LatticeKind::Square,
        LatticeKind::SquareShifted,
        LatticeKind::Lieb,
        LatticeKind::TriangularSu2,
        LatticeKind::KagomeSu2,
        LatticeKind::HoneycombSu2,
        LatticeKind::ModifiedHoneycomb,
        LatticeKind::TrimerLadder,
        LatticeKind::TrimerBrickwall,
        LatticeKind::Triangular,
        LatticeKind::Kagome,
        LatticeKind::Honeycomb,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LatticeKind::Chain => "chain",
            LatticeKind::NnnChain => "nnn_chain",
            LatticeKind::Square => "square",
            LatticeKind::SquareShifted => "square_shifted",
            LatticeKind::Lieb => "lieb",
            LatticeKind::TriangularSu2 => "triangular_su2",
            LatticeKind::KagomeSu2 => "kagome_su2",
            LatticeKind::HoneycombSu2 => "honeycomb_su2",
            LatticeKind::ModifiedHoneycomb => "modified_honeycomb",
            LatticeKind::TrimerLadder => "trimer_ladder",
            LatticeKind::TrimerBrickwall => "trimer_brickwall",
            LatticeKind::Triangular => "triangular",
            LatticeKind::Kagome => "kagome",
            LatticeKind::Honeycomb => "honeycomb",
        }
    }

    /// Number of integer dimensions the generator takes.
    pub fn arity(&self) -> usize {
        match self {
            LatticeKind::Chain | LatticeKind::NnnChain | LatticeKind::TrimerLadder => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for LatticeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LatticeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LatticeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown lattice kind {s:?}")))
    }
}

/// Generator options; each applies to the kinds named in its doc.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GenerateOptions {
    /// `square_shifted`: the torus identifies `(x, ny)` with `(x − shift, 0)`.
    /// Defaults to `|nx − ny|`.
    pub shift: Option<i64>,
    /// `square`: staggered pattern whose plaquettes wind by this amount
    /// (2 or 4) instead of 0.
    pub plaquette_winding: Option<u32>,
    /// `modified_honeycomb`: staggered vertical bonds giving plaquettes of
    /// winding ±2.
    pub dependent: bool,
}

struct Builder {
    nx: i64,
    ny: i64,
    cell: usize,
    shift: i64,
    edges: Vec<Edge>,
    wraps: Vec<[i64; 2]>,
}

impl Builder {
    fn new(nx: usize, ny: usize, cell: usize, shift: i64) -> Self {
        Self {
            nx: nx as i64,
            ny: ny as i64,
            cell,
            shift,
            edges: Vec::new(),
            wraps: Vec::new(),
        }
    }

    /// Vertex index of `(x, y, s)` and the generator counts taken to reach
    /// the fundamental domain.
    fn locate(&self, x: i64, y: i64, s: usize) -> (usize, [i64; 2]) {
        let b = y.div_euclid(self.ny);
        let y = y - b * self.ny;
        let x = x - b * self.shift;
        let a = x.div_euclid(self.nx);
        let x = x - a * self.nx;
        (((y * self.nx + x) as usize) * self.cell + s, [a, b])
    }

    /// Bond `from → to` in unwrapped coordinates; `sigma = 0` is SU(2).
    fn bond(&mut self, from: (i64, i64, usize), to: (i64, i64, usize), sigma: i8, r: u32) {
        let (u, wu) = self.locate(from.0, from.1, from.2);
        let (v, wv) = self.locate(to.0, to.1, to.2);
        let wrap = [wv[0] - wu[0], wv[1] - wu[1]];
        self.edges.push(if sigma == 0 {
            Edge::su2(u, v)
        } else {
            Edge::csse(u, v, sigma, r)
        });
        self.wraps.push(wrap);
    }

    fn finish(self, boundary: Boundary) -> Result<ScarGraph> {
        let vertices = (self.nx * self.ny) as usize * self.cell;
        ScarGraph::with_wraps(vertices, self.edges, boundary, self.wraps)
    }

    fn cells(&self) -> impl Iterator<Item = (i64, i64)> {
        let (nx, ny) = (self.nx, self.ny);
        (0..ny).flat_map(move |y| (0..nx).map(move |x| (x, y)))
    }
}

fn unsupported(kind: LatticeKind, dims: &[usize], why: &str) -> Error {
    Error::UnsupportedDims(format!("{kind}{dims:?}: {why}"))
}

fn sign(b: bool) -> i8 {
    if b {
        1
    } else {
        -1
    }
}

/// Builds the lattice `kind` with `dims` unit cells (sites for chains).
pub fn generate(kind: LatticeKind, dims: &[usize], opts: &GenerateOptions) -> Result<ScarGraph> {
    if dims.len() != kind.arity() || dims.contains(&0) {
        return Err(unsupported(
            kind,
            dims,
            &format!("expected {} positive dimension(s)", kind.arity()),
        ));
    }
    let need = |cond: bool, why: &str| {
        if cond {
            Ok(())
        } else {
            Err(unsupported(kind, dims, why))
        }
    };
    match kind {
        LatticeKind::Chain => {
            let n = dims[0];
            need(n >= 3, "need at least 3 sites")?;
            let mut b = Builder::new(n, 1, 1, 0);
            for x in 0..n as i64 {
                b.bond((x, 0, 0), (x + 1, 0, 0), 1, 1);
            }
            b.finish(Boundary::Toroidal { nx: n, ny: 1 })
        }
        LatticeKind::NnnChain => {
            let n = dims[0];
            need(n >= 5, "need at least 5 sites for distinct next-nearest bonds")?;
            let mut b = Builder::new(n, 1, 1, 0);
            for x in 0..n as i64 {
                b.bond((x, 0, 0), (x + 1, 0, 0), 1, 1);
                b.bond((x, 0, 0), (x + 2, 0, 0), 1, 2);
            }
            b.finish(Boundary::Toroidal { nx: n, ny: 1 })
        }
        LatticeKind::Square | LatticeKind::SquareShifted => {
            let (nx, ny) = (dims[0], dims[1]);
            need(nx >= 3 && ny >= 3, "both periods must be at least 3")?;
            let shift = if kind == LatticeKind::SquareShifted {
                opts.shift.unwrap_or((nx as i64 - ny as i64).abs())
            } else {
                0
            };
            let stagger = if kind == LatticeKind::Square {
                opts.plaquette_winding
            } else {
                None
            };
            if let Some(w) = stagger {
                need(w == 2 || w == 4, "plaquette winding must be 2 or 4")?;
                need(
                    nx % 2 == 0 && ny % 2 == 0 && nx >= 4 && ny >= 4,
                    "staggering needs even periods >= 4",
                )?;
            }
            let mut b = Builder::new(nx, ny, 1, shift);
            for (x, y) in b.cells().collect::<Vec<_>>() {
                let (sx, sy) = match stagger {
                    None => (1, 1),
                    Some(4) => (sign(y % 2 == 0), sign(x % 2 == 0)),
                    Some(_) => (1, sign(x % 2 == 0)),
                };
                b.bond((x, y, 0), (x + 1, y, 0), sx, 1);
                b.bond((x, y, 0), (x, y + 1, 0), sy, 1);
            }
            let boundary = if kind == LatticeKind::SquareShifted {
                Boundary::ToroidalShifted { nx, ny, shift }
            } else {
                Boundary::Toroidal { nx, ny }
            };
            b.finish(boundary)
        }
        LatticeKind::Lieb | LatticeKind::KagomeSu2 => {
            // Cell sites: 0 corner, 1 on the x-bond, 2 on the y-bond.
            let (nx, ny) = (dims[0], dims[1]);
            need(nx >= 2 && ny >= 2, "both periods must be at least 2")?;
            let mut b = Builder::new(nx, ny, 3, 0);
            for (x, y) in b.cells().collect::<Vec<_>>() {
                b.bond((x, y, 0), (x, y, 1), 1, 1);
                b.bond((x, y, 1), (x + 1, y, 0), 1, 1);
                b.bond((x, y, 0), (x, y, 2), 1, 1);
                b.bond((x, y, 2), (x, y + 1, 0), 1, 1);
                if kind == LatticeKind::KagomeSu2 {
                    b.bond((x, y, 1), (x, y, 2), 0, 1);
                    b.bond((x, y, 1), (x + 1, y - 1, 2), 0, 1);
                }
            }
            b.finish(Boundary::Toroidal { nx, ny })
        }
        LatticeKind::Kagome => {
            let (nx, ny) = (dims[0], dims[1]);
            need(nx >= 2 && ny >= 2, "both periods must be at least 2")?;
            let mut b = Builder::new(nx, ny, 3, 0);
            for (x, y) in b.cells().collect::<Vec<_>>() {
                // Up triangle c → h → v → c.
                b.bond((x, y, 0), (x, y, 1), 1, 1);
                b.bond((x, y, 1), (x, y, 2), 1, 1);
                b.bond((x, y, 2), (x, y, 0), 1, 1);
                // Down triangle h → c(x+1) → v(x+1, y−1) → h.
                b.bond((x, y, 1), (x + 1, y, 0), 1, 1);
                b.bond((x + 1, y, 0), (x + 1, y - 1, 2), 1, 1);
                b.bond((x, y, 1), (x + 1, y - 1, 2), -1, 1);
            }
            b.finish(Boundary::Toroidal { nx, ny })
        }
        LatticeKind::TriangularSu2 | LatticeKind::Triangular => {
            let (nx, ny) = (dims[0], dims[1]);
            need(nx >= 3 && ny >= 3, "both periods must be at least 3")?;
            let diag = if kind == LatticeKind::Triangular { 1 } else { 0 };
            let mut b = Builder::new(nx, ny, 1, 0);
            for (x, y) in b.cells().collect::<Vec<_>>() {
                b.bond((x, y, 0), (x + 1, y, 0), 1, 1);
                b.bond((x, y, 0), (x, y + 1, 0), 1, 1);
                b.bond((x + 1, y, 0), (x, y + 1, 0), diag, 1);
            }
            b.finish(Boundary::Toroidal { nx, ny })
        }
        LatticeKind::HoneycombSu2 | LatticeKind::Honeycomb => {
            // Brick wall: rungs between (x, y) and (x, y+1) when x + y is even.
            let (nx, ny) = (dims[0], dims[1]);
            need(
                nx % 2 == 0 && nx >= 4 && ny % 2 == 0 && ny >= 2,
                "nx even >= 4 and ny even",
            )?;
            let rung = if kind == LatticeKind::Honeycomb { 1 } else { 0 };
            let mut b = Builder::new(nx, ny, 1, 0);
            for (x, y) in b.cells().collect::<Vec<_>>() {
                b.bond((x, y, 0), (x + 1, y, 0), 1, 1);
                if (x + y) % 2 == 0 {
                    b.bond((x, y, 0), (x, y + 1, 0), rung, 1);
                }
            }
            b.finish(Boundary::Toroidal { nx, ny })
        }
        LatticeKind::ModifiedHoneycomb => {
            // Brick wall completed by the missing rungs: every vertex has two
            // horizontal and two vertical CSSE bonds.
            let (nx, ny) = (dims[0], dims[1]);
            need(
                nx % 2 == 0 && nx >= 4 && ny % 2 == 0 && ny >= 4,
                "periods even and >= 4",
            )?;
            let mut b = Builder::new(nx, ny, 1, 0);
            for (x, y) in b.cells().collect::<Vec<_>>() {
                b.bond((x, y, 0), (x + 1, y, 0), 1, 1);
                let sy = if opts.dependent { sign(x % 2 == 0) } else { 1 };
                b.bond((x, y, 0), (x, y + 1, 0), sy, 1);
            }
            b.finish(Boundary::Toroidal { nx, ny })
        }
        LatticeKind::TrimerLadder => {
            // Three CSSE legs joined by SU(2) rungs a–b and b–c.
            let l = dims[0];
            need(l >= 3, "need at least 3 rungs")?;
            let mut b = Builder::new(l, 1, 3, 0);
            for x in 0..l as i64 {
                for s in 0..3 {
                    b.bond((x, 0, s), (x + 1, 0, s), 1, 1);
                }
                b.bond((x, 0, 0), (x, 0, 1), 0, 1);
                b.bond((x, 0, 1), (x, 0, 2), 0, 1);
            }
            b.finish(Boundary::Toroidal { nx: l, ny: 1 })
        }
        LatticeKind::TrimerBrickwall => {
            // Row y holds SU(2) trimers on x ∈ 3t + (y mod 2) + {0, 1, 2};
            // all vertical bonds are CSSE.
            let (nx, ny) = (dims[0], dims[1]);
            need(
                nx % 3 == 0 && ny % 2 == 0 && ny >= 4,
                "nx a multiple of 3 and ny even >= 4",
            )?;
            let mut b = Builder::new(nx, ny, 1, 0);
            for (x, y) in b.cells().collect::<Vec<_>>() {
                b.bond((x, y, 0), (x, y + 1, 0), 1, 1);
                if (x - y % 2).rem_euclid(3) != 2 {
                    b.bond((x, y, 0), (x + 1, y, 0), 0, 1);
                }
            }
            b.finish(Boundary::Toroidal { nx, ny })
        }
    }
}
