//! Exhaustive σ search deciding whether a graph can host lattice-independent,
//! only lattice-dependent, or no scars.

use std::sync::atomic::{AtomicBool, Ordering};

use serde::Serialize;

use super::{classify_pattern, fundamental_cycles, BondKind, Classification, FundamentalCycle, ScarGraph};

/// Largest number of CSSE edges searched exhaustively.
pub const SEARCH_CAP: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub classification: Classification,
    /// Per-edge σ realizing the verdict (SU(2) edges 0); absent for `None`
    /// and `Unknown`.
    pub witness: Option<Vec<i8>>,
    pub csse_edges: usize,
    pub odd_degree_vertices: Vec<usize>,
}

struct Search<'a> {
    g: &'a ScarGraph,
    cycles: Vec<FundamentalCycle>,
    wraps: Vec<[i64; 2]>,
    /// CSSE edge indices in assignment order.
    order: Vec<usize>,
}

#[derive(Clone)]
struct State {
    sigma: Vec<i8>,
    sum: Vec<i64>,
    remaining: Vec<i64>,
}

#[derive(Default)]
struct Outcome {
    first_valid: Option<Vec<i8>>,
    independent: Option<Vec<i8>>,
}

impl Outcome {
    /// Left-biased merge: the lexicographically first witness wins.
    fn merge(self, right: Outcome) -> Outcome {
        Outcome {
            first_valid: self.first_valid.or(right.first_valid),
            independent: self.independent.or(right.independent),
        }
    }
}

impl Search<'_> {
    fn assign(&self, st: &mut State, k: usize, s: i8) -> bool {
        let e = &self.g.edges()[self.order[k]];
        st.sigma[self.order[k]] = s;
        st.sum[e.u] += s as i64;
        st.sum[e.v] -= s as i64;
        st.remaining[e.u] -= 1;
        st.remaining[e.v] -= 1;
        st.sum[e.u].abs() <= st.remaining[e.u] && st.sum[e.v].abs() <= st.remaining[e.v]
    }

    fn leaf(&self, st: &State, out: &mut Outcome) {
        let windings: Vec<i64> = self.cycles.iter().map(|c| c.winding(self.g, &st.sigma)).collect();
        if out.first_valid.is_none() {
            out.first_valid = Some(st.sigma.clone());
        }
        if classify_pattern(true, &self.wraps, &windings) == Classification::LatticeIndependent {
            out.independent = Some(st.sigma.clone());
        }
    }

    fn dfs(&self, st: &mut State, k: usize, out: &mut Outcome, cancel: Option<&AtomicBool>) {
        if out.independent.is_some() || cancel.is_some_and(|c| c.load(Ordering::Relaxed)) {
            return;
        }
        if k == self.order.len() {
            self.leaf(st, out);
            return;
        }
        for s in [1i8, -1] {
            let mut next = st.clone();
            if self.assign(&mut next, k, s) {
                self.dfs(&mut next, k + 1, out, cancel);
            }
            if out.independent.is_some() {
                return;
            }
        }
    }

    /// Splits on the first edge's σ; the `+1` branch has priority.
    fn run(&self, st: State) -> Outcome {
        if self.order.is_empty() {
            let mut out = Outcome::default();
            self.leaf(&st, &mut out);
            return out;
        }
        let found = AtomicBool::new(false);
        let branch = |s: i8, cancel: Option<&AtomicBool>| {
            let mut out = Outcome::default();
            let mut next = st.clone();
            if self.assign(&mut next, 0, s) {
                self.dfs(&mut next, 1, &mut out, cancel);
            }
            out
        };
        let (left, right) = rayon::join(
            || {
                let out = branch(1, None);
                if out.independent.is_some() {
                    found.store(true, Ordering::Relaxed);
                }
                out
            },
            || branch(-1, Some(&found)),
        );
        left.merge(right)
    }
}

/// Decides the best scar class reachable by re-choosing σ on CSSE edges.
pub fn classify(g: &ScarGraph) -> ClassificationReport {
    let csse: Vec<usize> = (0..g.edges().len())
        .filter(|&k| g.edges()[k].kind == BondKind::Csse)
        .collect();
    let odd: Vec<usize> = (0..g.vertices()).filter(|&x| g.csse_degree(x) % 2 == 1).collect();
    let csse_edges = csse.len();
    let report = |classification, witness| ClassificationReport {
        classification,
        witness,
        csse_edges,
        odd_degree_vertices: odd.clone(),
    };
    if !odd.is_empty() {
        return report(Classification::None, None);
    }
    if csse.len() > SEARCH_CAP {
        return report(Classification::Unknown, None);
    }
    let Ok(cycles) = fundamental_cycles(g) else {
        return report(Classification::Unknown, None);
    };
    let wraps = cycles.iter().map(|c| c.wrap(g)).collect();
    // Assign edges in vertex order so vertex sums close early.
    let mut order = csse;
    order.sort_by_key(|&k| {
        let e = &g.edges()[k];
        (e.u.max(e.v), e.u.min(e.v))
    });
    let mut remaining = vec![0i64; g.vertices()];
    for &k in &order {
        remaining[g.edges()[k].u] += 1;
        remaining[g.edges()[k].v] += 1;
    }
    let search = Search {
        g,
        cycles,
        wraps,
        order,
    };
    let st = State {
        sigma: vec![0; g.edges().len()],
        sum: vec![0; g.vertices()],
        remaining,
    };
    let out = search.run(st);
    match (out.independent, out.first_valid) {
        (Some(w), _) => report(Classification::LatticeIndependent, Some(w)),
        (None, Some(w)) => report(Classification::LatticeDependent, Some(w)),
        (None, None) => report(Classification::None, None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{check_vertex_rule, generate, Boundary, Edge, GenerateOptions, LatticeKind};
    use proptest::prelude::*;

    fn gen(kind: LatticeKind, dims: &[usize]) -> ScarGraph {
        generate(kind, dims, &GenerateOptions::default()).unwrap()
    }

    #[test]
    fn table_of_lattices() {
        let cases = [
            (LatticeKind::Honeycomb, vec![4, 4], Classification::None),
            (LatticeKind::Triangular, vec![3, 3], Classification::LatticeDependent),
            (LatticeKind::Kagome, vec![2, 2], Classification::LatticeDependent),
            (LatticeKind::Square, vec![3, 3], Classification::LatticeIndependent),
            (LatticeKind::Lieb, vec![2, 2], Classification::LatticeIndependent),
            (LatticeKind::Chain, vec![7], Classification::LatticeIndependent),
            (LatticeKind::TrimerLadder, vec![4], Classification::LatticeIndependent),
        ];
        for (kind, dims, expect) in cases {
            let g = gen(kind, &dims);
            let rep = classify(&g);
            assert_eq!(rep.classification, expect, "{kind}");
            if let Some(w) = rep.witness {
                let h = ScarGraph::with_wraps(
                    g.vertices(),
                    g.edges()
                        .iter()
                        .zip(&w)
                        .map(|(e, &s)| Edge { sigma: s, ..*e })
                        .collect(),
                    g.boundary(),
                    g.wraps().to_vec(),
                )
                .unwrap();
                assert!(check_vertex_rule(&h).is_empty());
            }
        }
    }

    #[test]
    fn large_graph_is_unknown() {
        let g = gen(LatticeKind::Square, &[4, 4]);
        assert_eq!(classify(&g).classification, Classification::Unknown);
        // Odd degree is decided before the cap.
        let h = gen(LatticeKind::Honeycomb, &[6, 6]);
        assert_eq!(classify(&h).classification, Classification::None);
    }

    #[test]
    fn deterministic_witness() {
        let g = gen(LatticeKind::Kagome, &[2, 2]);
        let a = classify(&g);
        for _ in 0..3 {
            assert_eq!(classify(&g), a);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn odd_degree_implies_none(n in 4usize..9, extra in proptest::collection::vec((0usize..9, 0usize..9), 1..6)) {
            let mut edges: Vec<Edge> = (0..n).map(|k| Edge::csse(k, (k + 1) % n, 1, 1)).collect();
            for (a, b) in extra {
                let (a, b) = (a % n, b % n);
                if a != b && !edges.iter().any(|e| (e.u, e.v) == (a, b) || (e.u, e.v) == (b, a)) {
                    edges.push(Edge::csse(a, b, 1, 1));
                }
            }
            let g = ScarGraph::new(n, edges, Boundary::None).unwrap();
            let odd = (0..n).any(|x| g.csse_degree(x) % 2 == 1);
            let c = classify(&g).classification;
            prop_assert_eq!(odd, c == Classification::None);
        }
    }
}
