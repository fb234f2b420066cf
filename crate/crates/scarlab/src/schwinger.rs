//! Schwinger-boson realization of the helical tower: `Ŝ⁺ = c†_↑ c_↓`,
//! `Ŝ⁻ = c†_↓ c_↑`, `Ŝᶻ = (n_↑ − n_↓)/2`.
//!
//! Operators are sums of boson monomials applied symbolically to sparse
//! Fock vectors, so no Fock-space matrix is ever formed. Mode `2n` is site `n` spin up, mode `2n + 1` spin down. Fock
//! states with more than `cap = 2SN + 2` bosons are discarded, which is
//! exact for every number-conserving product and for one pair lowering.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamiltonian::xyz_chain_terms;
use crate::spinops::{
    local_spin_matrices_2s, LocalSum, LocalTerm, ManyBodyOperator, SpinSystem, StateVector, C64, I, ONE, ZERO,
};

/// Occupation numbers, one per mode.
pub type Occupation = Vec<u8>;

/// Sparse Fock-space vector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FockVector(pub BTreeMap<Occupation, C64>);

impl FockVector {
    pub fn single(occ: Occupation) -> Self {
        Self(BTreeMap::from([(occ, ONE)]))
    }

    pub fn norm(&self) -> f64 {
        self.0.values().fold(0.0, |a, z| a + z.norm_sqr()).sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        if n == 0.0 {
            return self.clone();
        }
        self.scaled(C64::from(1.0 / n))
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self(self.0.iter().map(|(k, v)| (k.clone(), v * c)).collect())
    }

    pub fn add_scaled(&mut self, other: &FockVector, c: C64) {
        for (k, v) in &other.0 {
            *self.0.entry(k.clone()).or_insert(ZERO) += v * c;
        }
    }

    pub fn inner(&self, other: &FockVector) -> C64 {
        self.0
            .iter()
            .filter_map(|(k, a)| other.0.get(k).map(|b| a.conj() * b))
            .sum()
    }

    pub fn fidelity(&self, other: &FockVector) -> f64 {
        self.inner(other).norm_sqr() / (self.norm() * other.norm()).powi(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ladder {
    Create,
    Annihilate,
}

/// `coeff · a_1 a_2 ⋯ a_k`; the last factor acts first.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coeff: C64,
    pub factors: Vec<(Ladder, usize)>,
}

/// Sum of boson monomials.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FockOperator {
    pub terms: Vec<Monomial>,
}

impl FockOperator {
    pub fn monomial(coeff: C64, factors: Vec<(Ladder, usize)>) -> Self {
        Self {
            terms: vec![Monomial { coeff, factors }],
        }
    }

    pub fn scale(&self, c: C64) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| Monomial {
                    coeff: t.coeff * c,
                    factors: t.factors.clone(),
                })
                .collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Self { terms }
    }

    /// `self · other`.
    pub fn mul(&self, other: &Self) -> Self {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                let mut factors = a.factors.clone();
                factors.extend(b.factors.iter().copied());
                terms.push(Monomial {
                    coeff: a.coeff * b.coeff,
                    factors,
                });
            }
        }
        Self { terms }
    }

    pub fn adjoint(&self) -> Self {
        let flip = |l: Ladder| match l {
            Ladder::Create => Ladder::Annihilate,
            Ladder::Annihilate => Ladder::Create,
        };
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| Monomial {
                    coeff: t.coeff.conj(),
                    factors: t.factors.iter().rev().map(|&(l, m)| (flip(l), m)).collect(),
                })
                .collect(),
        }
    }

    pub fn commutator(&self, other: &Self) -> Self {
        self.mul(other).add(&other.mul(self).scale(-ONE))
    }

    /// Applies the operator, dropping images with more than `cap` bosons.
    pub fn apply(&self, v: &FockVector, cap: usize) -> FockVector {
        let mut out = FockVector::default();
        for (occ, &amp) in &v.0 {
            'term: for t in &self.terms {
                let mut o = occ.clone();
                let mut total: usize = o.iter().map(|&x| x as usize).sum();
                let mut c = amp * t.coeff;
                for &(l, m) in t.factors.iter().rev() {
                    match l {
                        Ladder::Annihilate => {
                            if o[m] == 0 {
                                continue 'term;
                            }
                            c *= (o[m] as f64).sqrt();
                            o[m] -= 1;
                            total -= 1;
                        }
                        Ladder::Create => {
                            if total == cap {
                                continue 'term;
                            }
                            o[m] += 1;
                            total += 1;
                            c *= (o[m] as f64).sqrt();
                        }
                    }
                }
                *out.0.entry(o).or_insert(ZERO) += c;
            }
        }
        out.0.retain(|_, z| *z != ZERO);
        out
    }
}

fn up(site: usize) -> usize {
    2 * site
}

fn down(site: usize) -> usize {
    2 * site + 1
}

fn cd(m: usize) -> (Ladder, usize) {
    (Ladder::Create, m)
}

fn c(m: usize) -> (Ladder, usize) {
    (Ladder::Annihilate, m)
}

/// Enlarged Fock space of `N` sites with two boson modes each and at most
/// `2SN + 2` bosons in total; the spin chain is its subspace with
/// `n_↑ + n_↓ = 2S` on every site.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FockBasis {
    system: SpinSystem,
    cap: usize,
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, j| acc * (n - j) / (j + 1))
}

impl FockBasis {
    pub fn new(system: SpinSystem) -> Self {
        let cap = system.two_s() as usize * system.sites() + 2;
        Self { system, cap }
    }

    pub fn system(&self) -> &SpinSystem {
        &self.system
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn modes(&self) -> usize {
        2 * self.system.sites()
    }

    /// Number of occupation vectors with at most `cap` bosons.
    pub fn dim(&self) -> usize {
        binomial(self.cap + self.modes(), self.modes())
    }

    /// Lexicographic rank among all occupations with at most `cap` bosons.
    pub fn index(&self, occ: &[u8]) -> Option<usize> {
        if occ.len() != self.modes() {
            return None;
        }
        let mut budget = self.cap;
        let mut rank = 0;
        for (j, &o) in occ.iter().enumerate() {
            let o = o as usize;
            if o > budget {
                return None;
            }
            let rest = self.modes() - j - 1;
            for v in 0..o {
                rank += binomial(budget - v + rest, rest);
            }
            budget -= o;
        }
        Some(rank)
    }

    /// Occupation of spin basis state `index`: local `ℓ` has `m = S − ℓ`,
    /// so `n_↑ = 2S − ℓ`, `n_↓ = ℓ`.
    pub fn occupation(&self, index: usize) -> Occupation {
        let two_s = self.system.two_s() as u8;
        let mut occ = vec![0u8; self.modes()];
        for site in 0..self.system.sites() {
            let l = self.system.digit(index, site) as u8;
            occ[up(site)] = two_s - l;
            occ[down(site)] = l;
        }
        occ
    }

    /// Inverse of [`occupation`](Self::occupation) on the constrained subspace.
    pub fn spin_index(&self, occ: &[u8]) -> Option<usize> {
        let two_s = self.system.two_s() as u8;
        let mut index = 0;
        for site in 0..self.system.sites() {
            if occ[up(site)] + occ[down(site)] != two_s {
                return None;
            }
            index += occ[down(site)] as usize * self.system.stride(site);
        }
        Some(index)
    }

    pub fn embed(&self, psi: &StateVector) -> FockVector {
        FockVector(
            psi.as_slice()
                .iter()
                .enumerate()
                .filter(|(_, z)| **z != ZERO)
                .map(|(k, &z)| (self.occupation(k), z))
                .collect(),
        )
    }

    /// Constrained part as a spin state, with the norm left outside.
    pub fn restrict(&self, v: &FockVector) -> (StateVector, f64) {
        let mut amps = vec![ZERO; self.system.total_dim()];
        let mut leak = 0.0;
        for (occ, z) in &v.0 {
            match self.spin_index(occ) {
                Some(k) => amps[k] += z,
                None => leak += z.norm_sqr(),
            }
        }
        let psi = StateVector::from_amplitudes(self.system, nalgebra::DVector::from_vec(amps)).expect("sized");
        (psi, leak.sqrt())
    }

    /// `Ŝ⁺_n`, `Ŝ⁻_n`, `Ŝᶻ_n` as bilinears.
    pub fn spin_ops(&self, site: usize) -> [FockOperator; 3] {
        let (u, d) = (up(site), down(site));
        let plus = FockOperator::monomial(ONE, vec![cd(u), c(d)]);
        let minus = FockOperator::monomial(ONE, vec![cd(d), c(u)]);
        let z = FockOperator::monomial(C64::from(0.5), vec![cd(u), c(u)])
            .add(&FockOperator::monomial(C64::from(-0.5), vec![cd(d), c(d)]));
        [plus, minus, z]
    }

    /// `|⇓⟩`: `2S` down bosons per site.
    pub fn all_down(&self) -> FockVector {
        self.embed(&StateVector::all_down(self.system))
    }

    /// Matrix of `op` on the constrained subspace and the largest norm it
    /// sends outside, column by column.
    pub fn constrained_matrix(&self, op: &FockOperator) -> (DMatrix<C64>, f64) {
        let dim = self.system.total_dim();
        let cols: Vec<(Vec<C64>, f64)> = (0..dim)
            .into_par_iter()
            .map(|j| {
                let image = op.apply(&FockVector::single(self.occupation(j)), self.cap);
                let (psi, leak) = self.restrict(&image);
                (psi.as_slice().to_vec(), leak)
            })
            .collect();
        let leak = cols.iter().map(|c| c.1).fold(0.0, f64::max);
        (DMatrix::from_fn(dim, dim, |r, c| cols[c].0[r]), leak)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum BilinearKind {
    Zeta,
    Eta,
    Epsilon,
    O1,
    O2,
}

impl BilinearKind {
    pub const ALL: [BilinearKind; 5] = [Self::Zeta, Self::Eta, Self::Epsilon, Self::O1, Self::O2];
}

impl fmt::Display for BilinearKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Zeta => "zeta",
            Self::Eta => "eta",
            Self::Epsilon => "epsilon",
            Self::O1 => "O1",
            Self::O2 => "O2",
        })
    }
}

impl FromStr for BilinearKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zeta" => Ok(Self::Zeta),
            "eta" => Ok(Self::Eta),
            "epsilon" => Ok(Self::Epsilon),
            "o1" => Ok(Self::O1),
            "o2" => Ok(Self::O2),
            _ => Err(Error::InvalidInput(format!("unknown bilinear '{s}'"))),
        }
    }
}

/// Two-site bilinears:
/// `ζ_mn = c†_{m↑}c_{n↑} + c†_{m↓}c_{n↓}`,
/// `η_mn = c_{m↑}c_{n↓} − c_{m↓}c_{n↑}`,
/// `ε_mn = c†_{m↑}c_{n↓} − c†_{m↓}c_{n↑}`,
/// `O1_mn = c†_{m↑}c_{n↑} − c†_{m↓}c_{n↓}`,
/// `O2_mn = c†_{m↑}c_{n↓} + c†_{m↓}c_{n↑}`.
pub fn bilinear(kind: BilinearKind, m: usize, n: usize) -> Result<FockOperator> {
    if m == n {
        return Err(Error::SameSite(m));
    }
    let pair = |a: (Ladder, usize), b: (Ladder, usize), c2: (Ladder, usize), d: (Ladder, usize), sign: f64| {
        FockOperator::monomial(ONE, vec![a, b]).add(&FockOperator::monomial(C64::from(sign), vec![c2, d]))
    };
    Ok(match kind {
        BilinearKind::Zeta => pair(cd(up(m)), c(up(n)), cd(down(m)), c(down(n)), 1.0),
        BilinearKind::Eta => pair(c(up(m)), c(down(n)), c(down(m)), c(up(n)), -1.0),
        BilinearKind::Epsilon => pair(cd(up(m)), c(down(n)), cd(down(m)), c(up(n)), -1.0),
        BilinearKind::O1 => pair(cd(up(m)), c(up(n)), cd(down(m)), c(down(n)), -1.0),
        BilinearKind::O2 => pair(cd(up(m)), c(down(n)), cd(down(m)), c(up(n)), 1.0),
    })
}

/// `τ̂′ = Σ_n c†_{n↑} c_{n↓}`, the total `Ŝ⁺`.
pub fn tau_prime(basis: &FockBasis) -> FockOperator {
    (0..basis.system().sites()).fold(FockOperator::default(), |acc, n| {
        acc.add(&FockOperator::monomial(ONE, vec![cd(up(n)), c(down(n))]))
    })
}

/// Normalized `|m^ζ⟩ ∝ τ̂′^m |⇓⟩` for `m = 0..=2NS`.
pub fn zeta_states(basis: &FockBasis) -> Vec<FockVector> {
    let t = tau_prime(basis);
    let top = basis.system().two_s() as usize * basis.system().sites();
    let mut states = vec![basis.all_down()];
    for m in 1..=top {
        let next = t.apply(&states[m - 1], basis.cap()).normalized();
        states.push(next);
    }
    states
}

/// `∏_n exp(i n q Ŝᶻ_n)` with `n = i + 1`, diagonal in the spin basis.
pub fn helical_frame(system: SpinSystem, q: f64) -> Vec<C64> {
    let s = system.spin();
    (0..system.total_dim())
        .map(|k| {
            let angle: f64 = (0..system.sites())
                .map(|i| (i + 1) as f64 * q * (s - system.digit(k, i) as f64))
                .sum();
            (I * angle).exp()
        })
        .collect()
}

/// `max_m |1 − F(|m^ζ⟩, U S^{(2NS−m)})|` against the positive-helicity tower.
pub fn zeta_tower_mismatch(basis: &FockBasis, p: i64) -> Result<f64> {
    let system = *basis.system();
    let tower = crate::scar::helical_tower(system, crate::scar::Helicity::Positive, p)?;
    let u = helical_frame(system, 2.0 * PI * p as f64 / system.sites() as f64);
    let zeta = zeta_states(basis);
    let top = zeta.len() - 1;
    let mut worst: f64 = 0.0;
    for (m, z) in zeta.iter().enumerate() {
        let st = &tower.states[top - m];
        let rotated: Vec<C64> = st.as_slice().iter().zip(&u).map(|(a, b)| a * b).collect();
        let rotated = StateVector::from_amplitudes(system, nalgebra::DVector::from_vec(rotated))?;
        worst = worst.max((1.0 - z.fidelity(&basis.embed(&rotated))).abs());
    }
    Ok(worst)
}

fn binom_f(k: usize, j: usize) -> f64 {
    binomial(k, j) as f64
}

/// Norms of the nested commutators `ad^k(ô)|⇓⟩`, `ad(ô) = [ô, τ̂′]`, for
/// `k = 0..=2NS+1`, evaluated as `Σ_j C(k,j) (−1)^j τ̂′^j ô τ̂′^{k−j} |⇓⟩`.
pub fn annihilation_chain_check(op: &FockOperator, basis: &FockBasis) -> Vec<f64> {
    let t = tau_prime(basis);
    let depth = basis.system().two_s() as usize * basis.system().sites() + 1;
    let mut powers = vec![basis.all_down()];
    for k in 1..=depth {
        powers.push(t.apply(&powers[k - 1], basis.cap()));
    }
    let images: Vec<FockVector> = powers.iter().map(|v| op.apply(v, basis.cap())).collect();
    (0..=depth)
        .into_par_iter()
        .map(|k| {
            let mut acc = FockVector::default();
            for j in 0..=k {
                let mut v = images[k - j].clone();
                for _ in 0..j {
                    v = t.apply(&v, basis.cap());
                }
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                acc.add_scaled(&v, C64::from(sign * binom_f(k, j)));
            }
            acc.norm()
        })
        .collect()
}

/// `max_m ‖ô |m^ζ⟩‖` over the normalized ζ-states.
pub fn zeta_annihilation_residual(op: &FockOperator, basis: &FockBasis) -> f64 {
    zeta_states(basis)
        .par_iter()
        .map(|z| op.apply(z, basis.cap()).norm())
        .reduce(|| 0.0, f64::max)
}

/// Per-kind worst residual of every ordered pair `m ≠ n` on the ζ-states.
pub fn bilinear_annihilation(basis: &FockBasis) -> Vec<(BilinearKind, f64)> {
    let n = basis.system().sites();
    BilinearKind::ALL
        .iter()
        .map(|&kind| {
            let worst = (0..n)
                .flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| (a, b)))
                .map(|(a, b)| zeta_annihilation_residual(&bilinear(kind, a, b).expect("distinct"), basis))
                .fold(0.0, f64::max);
            (kind, worst)
        })
        .collect()
}

/// Deviations found by [`decomposition_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecompositionReport {
    /// `U H U†` against Heisenberg plus Dzyaloshinskii–Moriya form.
    pub rotation: f64,
    /// Heisenberg plus DM form against the bilinear assembly.
    pub assembly: f64,
    /// Largest norm the assembly sends out of the constrained subspace.
    pub leakage: f64,
    /// Entrywise size of the added telescoping term.
    pub telescoping: f64,
}

impl DecompositionReport {
    pub fn max(&self) -> f64 {
        self.rotation.max(self.assembly).max(self.leakage)
    }
}

/// Heisenberg plus DM chain `Jx cos q Σ Ŝ_n·Ŝ_{n+1} − Jx sin q Σ ẑ·(Ŝ_n × Ŝ_{n+1})`.
pub fn rotated_xxz_terms(system: SpinSystem, q: f64, jx: f64) -> Result<LocalSum> {
    let ls = local_spin_matrices_2s(system.two_s());
    let n = system.sites();
    let mut terms = Vec::new();
    for i in 0..n {
        let k = (i + 1) % n;
        for a in 0..3 {
            terms.push(LocalTerm::two_site(
                i,
                k,
                &(ls.component(a) * C64::from(jx * q.cos())),
                ls.component(a),
            ));
        }
        let w = C64::from(-jx * q.sin());
        terms.push(LocalTerm::two_site(i, k, &(&ls.sx * w), &ls.sy));
        terms.push(LocalTerm::two_site(i, k, &(&ls.sy * -w), &ls.sx));
    }
    LocalSum::new(system, terms, true)
}

/// The bilinear assembly
///
/// ```text
/// −N Jx S cos q / 2
///   + (Jx cos q / 4) Σ (ζ_{n,n+1} ζ_{n+1,n} + η†_{n,n+1} η_{n+1,n})
///   − (i Jx sin q / 4) Σ (O1_{n,n+1} ζ_{n+1,n} − O1_{n+1,n} ζ_{n,n+1}
///                         + O2_{n,n+1} ε_{n+1,n} − O2_{n+1,n} ε_{n,n+1})
/// ```
pub fn assembled_hamiltonian(basis: &FockBasis, q: f64, jx: f64) -> FockOperator {
    let system = basis.system();
    let n = system.sites();
    let b = |k, x, y| bilinear(k, x, y).expect("distinct sites");
    let mut h = FockOperator::default();
    for i in 0..n {
        let j = (i + 1) % n;
        let sym = b(BilinearKind::Zeta, i, j)
            .mul(&b(BilinearKind::Zeta, j, i))
            .add(&b(BilinearKind::Eta, i, j).adjoint().mul(&b(BilinearKind::Eta, j, i)));
        let dm = b(BilinearKind::O1, i, j)
            .mul(&b(BilinearKind::Zeta, j, i))
            .add(&b(BilinearKind::O1, j, i).mul(&b(BilinearKind::Zeta, i, j)).scale(-ONE))
            .add(&b(BilinearKind::O2, i, j).mul(&b(BilinearKind::Epsilon, j, i)))
            .add(
                &b(BilinearKind::O2, j, i)
                    .mul(&b(BilinearKind::Epsilon, i, j))
                    .scale(-ONE),
            );
        h = h
            .add(&sym.scale(C64::from(jx * q.cos() / 4.0)))
            .add(&dm.scale(-I * jx * q.sin() / 4.0));
    }
    h
}

/// Compares the rotated XXZ chain (`Jz = Jx cos q0`), its Heisenberg plus DM
/// form, and the bilinear assembly on the constrained subspace. The
/// assembly carries the constant `−N Jx S cos q0 / 2` as a multiple of the
/// identity.
pub fn decomposition_check(system: SpinSystem, q0: f64, jx: f64) -> Result<DecompositionReport> {
    if system.sites() < 3 {
        return Err(Error::InvalidInput(
            "the decomposition needs a ring of at least 3 sites".into(),
        ));
    }
    let n = system.sites();
    let s = system.spin();
    let xxz = xyz_chain_terms(n, s, jx, jx, jx * q0.cos(), true)?.to_operator();
    let u = helical_frame(system, q0);
    let dim = system.total_dim();
    let rotated = DMatrix::from_fn(dim, dim, |r, c| u[r] * xxz.get(r, c) * u[c].conj());
    let dm = rotated_xxz_terms(system, q0, jx)?.to_operator().to_dense();
    let max_diff = |a: &DMatrix<C64>, b: &DMatrix<C64>| (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max);

    let basis = FockBasis::new(system);
    let (assembled, leakage) = basis.constrained_matrix(&assembled_hamiltonian(&basis, q0, jx));
    let constant = DMatrix::identity(dim, dim) * C64::from(-(n as f64) * jx * s * q0.cos() / 2.0);

    let ls = local_spin_matrices_2s(system.two_s());
    let coeffs: Vec<C64> = vec![ONE; n];
    let sz_sum = crate::spinops::site_sum(&ls.sz, &coeffs, system)?;
    // Σ_n (Ŝᶻ_n − Ŝᶻ_{n+1}) on the ring.
    let shifted = {
        let t = crate::spinops::translation_operator(system);
        t.mul(&sz_sum)?.mul(&t.adjoint())?
    };
    let telescoping = sz_sum.sub(&shifted)?.scale(I * s * jx * q0.sin()).max_abs();

    Ok(DecompositionReport {
        rotation: max_diff(&rotated, &dm),
        assembly: max_diff(&dm, &(assembled + constant)),
        leakage,
        telescoping,
    })
}

/// Entrywise deviation between the spin operators and their bilinear images
/// on the constrained subspace.
pub fn bijection_deviation(basis: &FockBasis) -> Result<f64> {
    let system = *basis.system();
    let ls = local_spin_matrices_2s(system.two_s());
    let mut worst: f64 = 0.0;
    for site in 0..system.sites() {
        let ops = basis.spin_ops(site);
        for (op, local) in ops.iter().zip([&ls.sp, &ls.sm, &ls.sz]) {
            let (m, leak) = basis.constrained_matrix(op);
            let spin: ManyBodyOperator = crate::spinops::embed(local, site, system)?;
            let d = (m - spin.to_dense()).iter().map(|z| z.norm()).fold(0.0, f64::max);
            worst = worst.max(d).max(leak);
        }
    }
    Ok(worst)
}

/// Checks that `ψ ↦ Fock ↦ ψ` is the identity and preserves norms.
pub fn round_trip_deviation(basis: &FockBasis, psi: &StateVector) -> Result<f64> {
    let v = basis.embed(psi);
    let (back, leak) = basis.restrict(&v);
    let diff = back.combine(ONE, psi, -ONE)?.norm();
    Ok(diff.max(leak).max((v.norm() - psi.norm()).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis(s: f64, n: usize) -> FockBasis {
        FockBasis::new(SpinSystem::new(s, n).unwrap())
    }

    fn all_occupations(modes: usize, cap: usize) -> Vec<Occupation> {
        if modes == 0 {
            return vec![Vec::new()];
        }
        let mut out = Vec::new();
        for o in 0..=cap {
            for mut rest in all_occupations(modes - 1, cap - o) {
                rest.insert(0, o as u8);
                out.push(rest);
            }
        }
        out
    }

    #[test]
    fn ranking_is_a_bijection() {
        let b = basis(0.5, 2);
        let all = all_occupations(b.modes(), b.cap());
        assert_eq!(all.len(), b.dim());
        for (k, occ) in all.iter().enumerate() {
            assert_eq!(b.index(occ), Some(k));
        }
        assert_eq!(b.index(&[5, 0, 0, 0]), None);
    }

    #[test]
    fn spin_operators_are_bilinears() {
        for (s, n) in [(0.5, 3), (1.0, 2), (1.5, 2)] {
            let b = basis(s, n);
            assert!(bijection_deviation(&b).unwrap() <= 1e-13);
            let psi = crate::scar::gz_state(
                *b.system(),
                &crate::scar::ScarSpec::chain(n, 1, 0.4, 0.3, crate::scar::Helicity::Positive).unwrap(),
            );
            if let Ok(psi) = psi {
                assert!(round_trip_deviation(&b, &psi).unwrap() <= 1e-14);
            }
        }
    }

    #[test]
    fn bilinear_algebra() {
        let b = basis(0.5, 3);
        assert!(matches!(bilinear(BilinearKind::Zeta, 1, 1), Err(Error::SameSite(1))));
        let z = bilinear(BilinearKind::Zeta, 0, 2).unwrap();
        let zt = bilinear(BilinearKind::Zeta, 2, 0).unwrap();
        let (m1, l1) = b.constrained_matrix(&z.adjoint());
        let (m2, l2) = b.constrained_matrix(&zt);
        assert_eq!(m1, m2);
        assert_eq!(l1, l2);
        // ζ preserves the total boson number.
        let v = zeta_states(&b)[1].clone();
        let img = z.apply(&v, b.cap());
        assert!(img.0.keys().all(|o| o.iter().map(|&x| x as usize).sum::<usize>() == 3));
        // Pair lowering leaves the constrained subspace.
        let eta = bilinear(BilinearKind::Eta, 0, 1).unwrap();
        let img = eta.apply(&zeta_states(&b)[1], b.cap());
        assert!(img.0.keys().all(|o| b.spin_index(o).is_none()));
    }

    #[test]
    fn zeta_states_match_rotated_tower() {
        for (s, n) in [(0.5, 3), (0.5, 4), (1.0, 3), (0.5, 5)] {
            let b = basis(s, n);
            let zs = zeta_states(&b);
            assert_eq!(zs[0], b.all_down());
            for (a, x) in zs.iter().enumerate() {
                for (c2, y) in zs.iter().enumerate() {
                    let expect = if a == c2 { ONE } else { ZERO };
                    assert!((x.inner(y) - expect).norm() <= 1e-12);
                }
            }
            for p in 1..n as i64 {
                assert!(zeta_tower_mismatch(&b, p).unwrap() <= 1e-12);
            }
        }
    }

    #[test]
    fn singlet_pairing_annihilates_zeta_states() {
        let b = basis(0.5, 3);
        let eta = bilinear(BilinearKind::Eta, 0, 2).unwrap();
        assert!(annihilation_chain_check(&eta, &b).iter().all(|&r| r <= 1e-12));
        assert!(zeta_annihilation_residual(&eta, &b) <= 1e-12);
        // A lone hopping term fails at the first link.
        let lone = FockOperator::monomial(ONE, vec![cd(up(0)), c(down(1))]);
        assert!(annihilation_chain_check(&lone, &b)[0] > 0.5);
    }

    #[test]
    fn chain_matches_direct_action() {
        let b = basis(0.5, 3);
        for kind in BilinearKind::ALL {
            let op = bilinear(kind, 1, 0).unwrap();
            let chain = annihilation_chain_check(&op, &b);
            let all_zero = chain.iter().all(|&r| r <= 1e-12);
            assert_eq!(all_zero, zeta_annihilation_residual(&op, &b) <= 1e-12, "{kind}");
        }
    }

    #[test]
    fn bosonic_hopping_does_not_annihilate() {
        // A filled down band blocks these hops only for fermions.
        let b = basis(0.5, 3);
        let res: BTreeMap<String, f64> = bilinear_annihilation(&b)
            .into_iter()
            .map(|(k, r)| (k.to_string(), r))
            .collect();
        assert!(res["eta"] <= 1e-12);
        assert!(res["zeta"] > 1.0);
        assert!(res["epsilon"] > 1.0);
    }

    #[test]
    fn decomposition_holds() {
        for (n, p) in [(3, 1), (4, 1), (5, 2)] {
            let system = SpinSystem::new(0.5, n).unwrap();
            let q0 = 2.0 * PI * p as f64 / n as f64;
            let rep = decomposition_check(system, q0, 1.3).unwrap();
            assert!(rep.max() <= 1e-11, "{rep:?}");
            assert!(rep.telescoping <= 1e-15);
        }
        let system = SpinSystem::new(0.5, 3).unwrap();
        let rep = decomposition_check(system, 0.0, 1.0).unwrap();
        assert!(rep.max() <= 1e-12);
    }
}
