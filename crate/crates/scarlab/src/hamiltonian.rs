//! Many-body Hamiltonians: XYZ and CSSE chains, graph models with SU(2)
//! bonds and q-multipliers, and the rotated frame of a coherent state.
//!
//! Every builder returns a [`LocalSum`] of two-site bond terms, which can be
//! applied matrix-free or assembled with [`LocalSum::to_operator`].

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::elliptic::{commensurate_q, CommensurateQ};
use crate::error::{Error, Result};
use crate::frames::CsseCouplings;
use crate::lattice::{BondKind, ScarGraph};
use crate::spinops::{
    local_spin_matrices_2s, LinearOperator, LocalSpin, LocalSum, LocalTerm, ManyBodyOperator, SiteAngles, SpinSystem,
    StateVector, C64, ZERO,
};

/// Parameters of a graph model, as read from parameters JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    #[serde(rename = "S")]
    pub s: f64,
    pub kappa: f64,
    pub p: i64,
    pub denominator: i64,
    #[serde(rename = "J", default = "unit")]
    pub j: f64,
    #[serde(rename = "Jprime", default = "unit")]
    pub jprime: f64,
}

fn unit() -> f64 {
    1.0
}

impl ModelParameters {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("parameters JSON: {e}")))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn q(&self) -> Result<CommensurateQ> {
        commensurate_q(self.p, self.denominator, self.kappa)
    }
}

/// `Σ_{ab} M_ab Ŝᵃ ⊗ Ŝᵇ` in the two-site local basis.
fn bond_matrix(ls: &LocalSpin, m: &[[f64; 3]; 3]) -> DMatrix<C64> {
    let d = ls.sz.nrows();
    let mut out = DMatrix::from_element(d * d, d * d, ZERO);
    for (a, row) in m.iter().enumerate() {
        for (b, &c) in row.iter().enumerate() {
            if c != 0.0 {
                out += ls.component(b).kronecker(ls.component(a)) * C64::from(c);
            }
        }
    }
    out
}

/// `Jx ŜˣŜˣ + Jy ŜʸŜʸ + Jz ŜᶻŜᶻ`; real in the `Ŝᶻ` basis.
pub fn xyz_bond(ls: &LocalSpin, jx: f64, jy: f64, jz: f64) -> DMatrix<C64> {
    bond_matrix(ls, &[[jx, 0.0, 0.0], [0.0, jy, 0.0], [0.0, 0.0, jz]]).map(|v| C64::from(v.re))
}

fn chain_bonds(n: usize, periodic: bool) -> Result<Vec<(usize, usize)>> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("a chain needs at least 2 sites, got {n}")));
    }
    let last = if periodic { n } else { n - 1 };
    Ok((0..last).map(|k| (k, (k + 1) % n)).collect())
}

/// XYZ chain `Σ_n Jx ŜˣŜˣ + Jy ŜʸŜʸ + Jz ŜᶻŜᶻ` on bonds `(n, n+1)`.
pub fn xyz_chain_terms(n: usize, s: f64, jx: f64, jy: f64, jz: f64, periodic: bool) -> Result<LocalSum> {
    let system = SpinSystem::new(s, n)?;
    let ls = local_spin_matrices_2s(system.two_s());
    let bond = xyz_bond(&ls, jx, jy, jz);
    let terms = chain_bonds(n, periodic)?
        .into_iter()
        .map(|(u, v)| LocalTerm::new(vec![u, v], bond.clone()))
        .collect();
    LocalSum::new(system, terms, true)
}

pub fn build_xyz_chain(n: usize, s: f64, jx: f64, jy: f64, jz: f64, periodic: bool) -> Result<ManyBodyOperator> {
    Ok(xyz_chain_terms(n, s, jx, jy, jz, periodic)?.to_operator())
}

/// Periodic XYZ chain hosting the GZ scar at `q`: `(Jx, Jy, Jz) = (dn q, 1, cn q)`.
pub fn gz_chain_terms(n: usize, s: f64, q: &CommensurateQ) -> Result<LocalSum> {
    let jac = q.jacobi_multiple(1);
    xyz_chain_terms(n, s, jac.dn, 1.0, jac.cn, true)
}

/// CSSE chain `Σ_n Ŝ_nᵀ M Ŝ_{n+1}` with the symmetric coupling matrix `M`.
pub fn csse_chain_terms(n: usize, s: f64, c: &CsseCouplings, periodic: bool) -> Result<LocalSum> {
    c.validate()?;
    let system = SpinSystem::new(s, n)?;
    let ls = local_spin_matrices_2s(system.two_s());
    let m = c.matrix();
    let rows = [
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
    ];
    let bond = bond_matrix(&ls, &rows);
    let terms = chain_bonds(n, periodic)?
        .into_iter()
        .map(|(u, v)| LocalTerm::new(vec![u, v], bond.clone()))
        .collect();
    LocalSum::new(system, terms, true)
}

pub fn build_csse_chain(n: usize, s: f64, c: &CsseCouplings, periodic: bool) -> Result<ManyBodyOperator> {
    Ok(csse_chain_terms(n, s, c, periodic)?.to_operator())
}

/// Per-bond couplings `J·(dn(rq), 1, cn(rq))` on CSSE bonds and `J′` on SU(2)
/// bonds, each times the bond strength.
pub fn graph_terms(g: &ScarGraph, s: f64, q: &CommensurateQ, j: f64, jprime: f64) -> Result<LocalSum> {
    let system = SpinSystem::new(s, g.vertices())?;
    let ls = local_spin_matrices_2s(system.two_s());
    let terms = g
        .edges()
        .iter()
        .map(|e| {
            let bond = match e.kind {
                BondKind::Csse => {
                    let jac = q.jacobi_multiple(e.r as i64);
                    let scale = j * e.strength;
                    xyz_bond(&ls, scale * jac.dn, scale, scale * jac.cn)
                }
                BondKind::Su2 => {
                    let scale = jprime * e.strength;
                    xyz_bond(&ls, scale, scale, scale)
                }
            };
            LocalTerm::new(vec![e.u, e.v], bond)
        })
        .collect();
    LocalSum::new(system, terms, true)
}

pub fn build_on_graph(g: &ScarGraph, s: f64, q: &CommensurateQ, j: f64, jprime: f64) -> Result<ManyBodyOperator> {
    Ok(graph_terms(g, s, q, j, jprime)?.to_operator())
}

/// Graph model from parameters JSON.
pub fn graph_terms_from(g: &ScarGraph, params: &ModelParameters) -> Result<LocalSum> {
    graph_terms(g, params.s, &params.q()?, params.j, params.jprime)
}

/// `V_n = exp(−iφ_n Ŝᶻ) exp(−iθ_n Ŝʸ)` of every site; the coherent state is
/// `⊗ V_n |⇑⟩`.
fn site_rotations(angles: &SiteAngles, system: &SpinSystem) -> Result<Vec<DMatrix<C64>>> {
    if angles.len() != system.sites() {
        return Err(Error::DimensionMismatch {
            expected: system.sites(),
            found: angles.len(),
        });
    }
    Ok((0..system.sites())
        .map(|n| angles.site_rotation(system.two_s(), n))
        .collect())
}

/// `H′ = V† H V` with `V = ⊗_n exp(−iφ_n Ŝᶻ) exp(−iθ_n Ŝʸ)`, term by term,
/// so that `H′|⇑⟩ = V† H |ψ⟩` for the coherent state `|ψ⟩ = V|⇑⟩`.
pub fn rotate_terms(h: &LocalSum, angles: &SiteAngles) -> Result<LocalSum> {
    let system = *h.system();
    let rot = site_rotations(angles, &system)?;
    h.map_terms(|t| {
        let v = t
            .sites
            .iter()
            .skip(1)
            .fold(rot[t.sites[0]].clone(), |acc, &s| rot[s].kronecker(&acc));
        v.adjoint() * &t.matrix * v
    })
}

/// `V† H V` for an assembled operator; `V` is applied one site at a time.
pub fn rotated_hamiltonian(h: &ManyBodyOperator, angles: &SiteAngles) -> Result<ManyBodyOperator> {
    let system = *h.system();
    let rot = site_rotations(angles, &system)?;
    let mut out = h.clone();
    for (n, v) in rot.iter().enumerate() {
        let local = LocalSum::new(system, vec![LocalTerm::new(vec![n], v.clone())], false)?.to_operator();
        out = local.adjoint().mul(&out)?.mul(&local)?;
    }
    Ok(if h.hermitian_flag() {
        out.assert_hermitian(1e-10)?
    } else {
        out
    })
}

/// Amplitudes of `H′|⇑⟩` on one- and two-magnon states.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VanishingConditions {
    /// `|⟨⇑| ŝ⁺_n ŝ⁺_{n+1} H′ |⇑⟩|`.
    pub a2: Vec<f64>,
    /// `|⟨⇑| ŝ⁺_n H′ |⇑⟩|`.
    pub a1: Vec<f64>,
}

impl VanishingConditions {
    pub fn max(&self) -> f64 {
        self.a1.iter().chain(&self.a2).fold(0.0, |m, v| m.max(*v))
    }
}

/// Matrix elements of `H′|⇑⟩` on the periodic chain; all vanish iff `|⇑⟩`
/// is an eigenstate of `H′` within the one- and two-magnon sectors.
pub fn vanishing_conditions<A: LinearOperator + ?Sized>(h_rot: &A) -> Result<VanishingConditions> {
    let system = *h_rot.system();
    let n = system.sites();
    let two_s = system.two_s() as f64;
    let v = h_rot.apply(&StateVector::all_up(system))?;
    let amp = v.as_slice();
    let a1 = (0..n).map(|k| two_s.sqrt() * amp[system.stride(k)].norm()).collect();
    let a2 = (0..n)
        .map(|k| {
            let m = (k + 1) % n;
            if m == k {
                return 0.0;
            }
            two_s * amp[system.stride(k) + system.stride(m)].norm()
        })
        .collect();
    Ok(VanishingConditions { a2, a1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic::EllipticModulus;
    use crate::frames::xyz_reduction;
    use crate::lattice::{generate, GenerateOptions, LatticeKind};
    use crate::spinops::{local_spin_matrices, site_sum, total_sz, ONE};
    use nalgebra::SymmetricEigen;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sorted_eigs(h: &ManyBodyOperator) -> Vec<f64> {
        let m = h.to_dense();
        let herm = (&m + m.adjoint()) * C64::from(0.5);
        // Real embedding [[A, −B], [B, A]] doubles each eigenvalue.
        let d = herm.nrows();
        let big = DMatrix::from_fn(2 * d, 2 * d, |i, j| {
            let z = herm[(i % d, j % d)];
            match (i < d, j < d) {
                (true, true) | (false, false) => z.re,
                (true, false) => -z.im,
                (false, true) => z.im,
            }
        });
        let mut e: Vec<f64> = SymmetricEigen::new(big).eigenvalues.iter().copied().collect();
        e.sort_by(f64::total_cmp);
        e.into_iter().step_by(2).collect()
    }

    fn total(system: SpinSystem, axis: usize) -> ManyBodyOperator {
        let ls = local_spin_matrices_2s(system.two_s());
        site_sum(ls.component(axis), &vec![ONE; system.sites()], system).unwrap()
    }

    #[test]
    fn isotropic_chain_commutes_with_total_spin() {
        let h = build_xyz_chain(4, 1.0, 0.7, 0.7, 0.7, true).unwrap();
        for axis in 0..3 {
            let c = h.commutator(&total(*h.system(), axis)).unwrap();
            assert!(c.max_abs() <= 1e-12);
        }
    }

    #[test]
    fn xxz_chain_conserves_sz() {
        let h = build_xyz_chain(5, 0.5, 1.0, 1.0, 0.3, true).unwrap();
        assert!(h.commutator(&total_sz(*h.system())).unwrap().max_abs() <= 1e-12);
        let xyz = build_xyz_chain(5, 0.5, 0.8, 1.0, 0.3, true).unwrap();
        assert!(xyz.commutator(&total_sz(*h.system())).unwrap().max_abs() > 0.05);
    }

    #[test]
    fn two_site_spectrum() {
        let (jx, jy, jz) = (0.9, 1.3, -0.4);
        let h = build_xyz_chain(2, 0.5, jx, jy, jz, false).unwrap();
        // Bell-state energies of the spin-1/2 dimer.
        let mut expect = vec![
            -(jx + jy + jz) / 4.0,
            (jx + jy - jz) / 4.0,
            (jz + jx - jy) / 4.0,
            (jz - jx + jy) / 4.0,
        ];
        expect.sort_by(f64::total_cmp);
        let got = sorted_eigs(&h);
        for (a, b) in got.iter().zip(&expect) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert!(h.to_dense_real().is_some());
    }

    #[test]
    fn diagonal_csse_equals_xyz() {
        let c = CsseCouplings::diagonal(0.6, 1.0, 0.2).unwrap();
        let a = build_csse_chain(4, 1.0, &c, true).unwrap();
        let b = build_xyz_chain(4, 1.0, 0.6, 1.0, 0.2, true).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() <= 1e-14);
    }

    #[test]
    fn csse_spectrum_matches_reduced_xyz() {
        let c = CsseCouplings::new(0.4, 1.1, -0.3, 0.25, -0.15, 0.35).unwrap();
        let h = build_csse_chain(4, 0.5, &c, true).unwrap();
        assert!(h.hermiticity_deviation() <= 1e-13);
        let red = xyz_reduction(&c).unwrap();
        let (jx, jy, jz) = red.xyz;
        let x = build_xyz_chain(4, 0.5, jx, jy, jz, true).unwrap();
        for (a, b) in sorted_eigs(&h).iter().zip(sorted_eigs(&x)) {
            assert!((a - b).abs() <= 1e-8);
        }
    }

    #[test]
    fn chain_graph_equals_xyz_chain() {
        let g = generate(LatticeKind::Chain, &[5], &GenerateOptions::default()).unwrap();
        let q = commensurate_q(1, 5, 0.6).unwrap();
        let jac = q.jacobi_multiple(1);
        let a = build_on_graph(&g, 1.0, &q, 1.0, 1.0).unwrap();
        let b = build_xyz_chain(5, 1.0, jac.dn, 1.0, jac.cn, true).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() <= 1e-14);

        let q0 = commensurate_q(1, 5, 0.0).unwrap();
        let c = build_on_graph(&g, 1.0, &q0, 1.0, 1.0).unwrap();
        let xxz = build_xyz_chain(5, 1.0, 1.0, 1.0, q0.value.cos(), true).unwrap();
        assert!(c.max_abs_diff(&xxz).unwrap() <= 1e-14);
    }

    #[test]
    fn nnn_bonds_use_double_q() {
        let g = generate(LatticeKind::NnnChain, &[5], &GenerateOptions::default()).unwrap();
        let q = commensurate_q(1, 5, 0.5).unwrap();
        let h = graph_terms(&g, 0.5, &q, 1.0, 1.0).unwrap();
        let ls = local_spin_matrices(0.5).unwrap();
        let m = EllipticModulus::new(0.5).unwrap().jacobi(2.0 * q.value);
        let expect = xyz_bond(&ls, m.dn, 1.0, m.cn);
        let t = h.terms().iter().zip(g.edges()).find(|(_, e)| e.r == 2).unwrap().0;
        assert!((&t.matrix - expect).iter().all(|z| z.norm() <= 1e-14));
    }

    #[test]
    fn parameters_json() {
        let p = ModelParameters::from_json(r#"{"S":1,"kappa":0.8,"p":1,"denominator":6}"#).unwrap();
        assert_eq!((p.j, p.jprime), (1.0, 1.0));
        assert!(ModelParameters::from_json(r#"{"S":1}"#).is_err());
    }

    #[test]
    fn identity_rotation_is_trivial() {
        let h = build_xyz_chain(3, 1.0, 0.5, 1.0, -0.2, true).unwrap();
        let r = rotated_hamiltonian(&h, &SiteAngles::uniform(3, 0.0, 0.0).unwrap()).unwrap();
        assert!(r.max_abs_diff(&h).unwrap() <= 1e-13);
    }

    #[test]
    fn rotation_preserves_spectrum_and_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let theta: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..std::f64::consts::PI)).collect();
        let phi: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let angles = SiteAngles::new(theta, phi).unwrap();
        let terms = xyz_chain_terms(4, 0.5, 0.3, 1.0, -0.6, true).unwrap();
        let h = terms.to_operator();
        let r = rotated_hamiltonian(&h, &angles).unwrap();
        for (a, b) in sorted_eigs(&h).iter().zip(sorted_eigs(&r)) {
            assert!((a - b).abs() <= 1e-10);
        }
        let by_terms = rotate_terms(&terms, &angles).unwrap().to_operator();
        assert!(by_terms.max_abs_diff(&r).unwrap() <= 1e-12);

        let system = *h.system();
        let random = |rng: &mut ChaCha8Rng| {
            let m = DMatrix::from_fn(16, 16, |_, _| {
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            ManyBodyOperator::from_dense(system, &m, false).unwrap()
        };
        let a = random(&mut rng);
        let b = random(&mut rng);
        let lhs = rotated_hamiltonian(&a.mul(&b).unwrap(), &angles).unwrap();
        let rhs = rotated_hamiltonian(&a, &angles)
            .unwrap()
            .mul(&rotated_hamiltonian(&b, &angles).unwrap())
            .unwrap();
        assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-11);
    }

    #[test]
    fn generic_xyz_fails_vanishing_on_uniform_state() {
        let h = build_xyz_chain(4, 1.0, 0.5, 1.0, 0.2, true).unwrap();
        let v = vanishing_conditions(&h).unwrap();
        assert!(v.a2.iter().all(|&x| x > 0.1));
        assert!(v.a1.iter().all(|&x| x <= 1e-15));
        let ferro = build_xyz_chain(4, 1.0, 0.7, 0.7, 0.7, true).unwrap();
        assert!(vanishing_conditions(&ferro).unwrap().max() <= 1e-15);
    }
}
