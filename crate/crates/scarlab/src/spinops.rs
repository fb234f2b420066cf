//! Spin-S operators on the `(2S+1)^N` product basis.
//!
//! Basis convention, fixed crate-wide: local index `ℓ = S − m`, composite index
//! `i = Σ_n ℓ_n (2S+1)^n` with site 0 least significant. `|⇑⟩` is index 0.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Largest Hilbert space accepted for dense spectra.
pub const DENSE_CAP: usize = 200_000;
/// Largest Hilbert space accepted for matrix-free application.
pub const MATRIX_FREE_CAP: usize = 20_000_000;

/// Below this dimension, parallel loops cost more than they save.
const PAR_THRESHOLD: usize = 4096;

/// Spin magnitude `S` (stored as `2S`) on `N` sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct SpinSystem {
    two_s: u32,
    sites: usize,
    local_dim: usize,
    total_dim: usize,
}

impl SpinSystem {
    pub fn new(s: f64, sites: usize) -> Result<Self> {
        Self::with_cap(s, sites, MATRIX_FREE_CAP)
    }

    pub fn with_cap(s: f64, sites: usize, cap: usize) -> Result<Self> {
        Self::from_two_s(two_s_of(s)?, sites, cap)
    }

    pub fn from_two_s(two_s: u32, sites: usize, cap: usize) -> Result<Self> {
        if sites == 0 {
            return Err(Error::InvalidInput("a spin system needs at least one site".into()));
        }
        let local_dim = two_s as usize + 1;
        let total_dim = u32::try_from(sites)
            .ok()
            .and_then(|n| local_dim.checked_pow(n))
            .unwrap_or(usize::MAX);
        if total_dim > cap {
            return Err(Error::DimensionCap { dim: total_dim, cap });
        }
        Ok(Self {
            two_s,
            sites,
            local_dim,
            total_dim,
        })
    }

    pub fn spin(&self) -> f64 {
        self.two_s as f64 / 2.0
    }

    pub fn two_s(&self) -> u32 {
        self.two_s
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    /// `(2S+1)^site`.
    pub fn stride(&self, site: usize) -> usize {
        self.local_dim.pow(site as u32)
    }

    /// Local index `ℓ` of `site` in composite basis state `index`.
    pub fn digit(&self, index: usize, site: usize) -> usize {
        (index / self.stride(site)) % self.local_dim
    }

    pub fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.sites {
            return Err(Error::SiteOutOfRange { site, n: self.sites });
        }
        Ok(())
    }

    /// Errors unless the dimension fits the dense solver cap.
    pub fn check_dense(&self, cap: usize) -> Result<()> {
        if self.total_dim > cap {
            return Err(Error::DimensionCap {
                dim: self.total_dim,
                cap,
            });
        }
        Ok(())
    }

    fn check_same(&self, other: &SpinSystem) -> Result<()> {
        if self != other {
            return Err(Error::DimensionMismatch {
                expected: self.total_dim,
                found: other.total_dim,
            });
        }
        Ok(())
    }
}

/// `2S` for a non-negative half-integer `S`.
pub fn two_s_of(s: f64) -> Result<u32> {
    let two_s = 2.0 * s;
    if !s.is_finite() || s < 0.0 || (two_s - two_s.round()).abs() > 1e-12 || two_s > 1e4 {
        return Err(Error::InvalidSpin(s));
    }
    Ok(two_s.round() as u32)
}

/// Local spin operators in the `ℓ = S − m` basis.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalSpin {
    pub sx: DMatrix<C64>,
    pub sy: DMatrix<C64>,
    pub sz: DMatrix<C64>,
    pub sp: DMatrix<C64>,
    pub sm: DMatrix<C64>,
}

impl LocalSpin {
    pub fn identity(&self) -> DMatrix<C64> {
        DMatrix::identity(self.sz.nrows(), self.sz.ncols())
    }

    pub fn component(&self, axis: usize) -> &DMatrix<C64> {
        match axis {
            0 => &self.sx,
            1 => &self.sy,
            _ => &self.sz,
        }
    }
}

pub fn local_spin_matrices(s: f64) -> Result<LocalSpin> {
    let two_s = two_s_of(s)?;
    Ok(local_spin_matrices_2s(two_s))
}

pub(crate) fn local_spin_matrices_2s(two_s: u32) -> LocalSpin {
    let s = two_s as f64 / 2.0;
    let d = two_s as usize + 1;
    let mut sz = DMatrix::zeros(d, d);
    let mut sp = DMatrix::zeros(d, d);
    for l in 0..d {
        let m = s - l as f64;
        sz[(l, l)] = C64::from(m);
        if l > 0 {
            // S⁺|m⟩ = √(S(S+1) − m(m+1)) |m+1⟩, and m+1 sits at ℓ−1.
            sp[(l - 1, l)] = C64::from((s * (s + 1.0) - m * (m + 1.0)).sqrt());
        }
    }
    let sm = sp.adjoint();
    let sx = (&sp + &sm) * C64::from(0.5);
    let sy = (&sp - &sm) * C64::new(0.0, -0.5);
    LocalSpin { sx, sy, sz, sp, sm }
}

/// `exp(−i t h)` for Hermitian `h` by eigendecomposition.
pub fn exp_hermitian(h: &DMatrix<C64>, t: f64) -> DMatrix<C64> {
    let eig = h.clone().symmetric_eigen();
    let v = &eig.eigenvectors;
    let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| (-I * t * e).exp()));
    v * phases * v.adjoint()
}

/// `exp(−iθ Ŝʸ)`.
pub fn rotation_y(two_s: u32, theta: f64) -> DMatrix<C64> {
    exp_hermitian(&local_spin_matrices_2s(two_s).sy, theta)
}

/// `exp(−iφ Ŝᶻ)`, diagonal.
pub fn rotation_z(two_s: u32, phi: f64) -> DMatrix<C64> {
    let s = two_s as f64 / 2.0;
    let d = two_s as usize + 1;
    DMatrix::from_diagonal(&DVector::from_fn(d, |l, _| (-I * phi * (s - l as f64)).exp()))
}

/// Polar and azimuthal angles per site.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiteAngles {
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
}

impl SiteAngles {
    pub fn new(theta: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        if theta.len() != phi.len() {
            return Err(Error::DimensionMismatch {
                expected: theta.len(),
                found: phi.len(),
            });
        }
        if let Some(t) = theta
            .iter()
            .find(|t| !t.is_finite() || **t < -1e-12 || **t > std::f64::consts::PI + 1e-12)
        {
            return Err(Error::InvalidInput(format!("polar angle {t} outside [0, pi]")));
        }
        if phi.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("azimuthal angle is not finite".into()));
        }
        Ok(Self { theta, phi })
    }

    pub fn uniform(n: usize, theta: f64, phi: f64) -> Result<Self> {
        Self::new(vec![theta; n], vec![phi; n])
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Per-site rotation `exp(−iφ Ŝᶻ) exp(−iθ Ŝʸ)`, taking `|⇑⟩` to the
    /// coherent state at `(θ, φ)`.
    pub fn site_rotation(&self, two_s: u32, site: usize) -> DMatrix<C64> {
        rotation_z(two_s, self.phi[site]) * rotation_y(two_s, self.theta[site])
    }
}

/// Dense amplitude vector over the product basis.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    system: SpinSystem,
    amplitudes: DVector<C64>,
}

impl StateVector {
    pub fn from_amplitudes(system: SpinSystem, amplitudes: DVector<C64>) -> Result<Self> {
        if amplitudes.len() != system.total_dim() {
            return Err(Error::DimensionMismatch {
                expected: system.total_dim(),
                found: amplitudes.len(),
            });
        }
        if amplitudes.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::InvalidInput("state has non-finite amplitudes".into()));
        }
        Ok(Self { system, amplitudes })
    }

    pub fn zeros(system: SpinSystem) -> Self {
        Self {
            system,
            amplitudes: DVector::zeros(system.total_dim()),
        }
    }

    pub fn basis(system: SpinSystem, index: usize) -> Self {
        let mut s = Self::zeros(system);
        s.amplitudes[index] = ONE;
        s
    }

    /// `|⇑⟩`, all sites at `m = S`.
    pub fn all_up(system: SpinSystem) -> Self {
        Self::basis(system, 0)
    }

    /// `|⇓⟩`, all sites at `m = −S`.
    pub fn all_down(system: SpinSystem) -> Self {
        Self::basis(system, system.total_dim() - 1)
    }

    /// Kronecker product of one local vector per site (site 0 first).
    pub fn product(system: SpinSystem, locals: &[DVector<C64>]) -> Result<Self> {
        if locals.len() != system.sites() {
            return Err(Error::DimensionMismatch {
                expected: system.sites(),
                found: locals.len(),
            });
        }
        if let Some(v) = locals.iter().find(|v| v.len() != system.local_dim()) {
            return Err(Error::DimensionMismatch {
                expected: system.local_dim(),
                found: v.len(),
            });
        }
        let d = system.local_dim();
        let amp = |mut i: usize| {
            let mut a = ONE;
            for v in locals {
                a *= v[i % d];
                i /= d;
            }
            a
        };
        let dim = system.total_dim();
        let amps: Vec<C64> = if dim >= PAR_THRESHOLD {
            (0..dim).into_par_iter().map(amp).collect()
        } else {
            (0..dim).map(amp).collect()
        };
        Ok(Self {
            system,
            amplitudes: DVector::from_vec(amps),
        })
    }

    pub fn system(&self) -> &SpinSystem {
        &self.system
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn as_slice(&self) -> &[C64] {
        self.amplitudes.as_slice()
    }

    pub fn into_amplitudes(self) -> DVector<C64> {
        self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    /// Unit-norm copy; the zero vector is returned unchanged.
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        if n == 0.0 {
            return self.clone();
        }
        self.scaled(C64::from(1.0 / n))
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self {
            system: self.system,
            amplitudes: &self.amplitudes * c,
        }
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: C64, other: &StateVector, b: C64) -> Result<Self> {
        self.system.check_same(&other.system)?;
        Ok(Self {
            system: self.system,
            amplitudes: &self.amplitudes * a + &other.amplitudes * b,
        })
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        self.system.check_same(&other.system)?;
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    /// `|⟨self|other⟩| / (‖self‖ ‖other‖)`.
    pub fn fidelity(&self, other: &StateVector) -> Result<f64> {
        let ip = self.inner(other)?;
        Ok(ip.norm() / (self.norm() * other.norm()))
    }

    /// Von Neumann entropy of sites `0..cut` against the rest.
    pub fn entanglement_entropy(&self, cut: usize) -> Result<f64> {
        if cut > self.system.sites() {
            return Err(Error::SiteOutOfRange {
                site: cut,
                n: self.system.sites(),
            });
        }
        let left = self.system.stride(cut);
        let right = self.system.total_dim() / left;
        let m = DMatrix::from_fn(left, right, |a, b| self.amplitudes[a + left * b]);
        let norm2 = self.norm().powi(2);
        let entropy = m
            .singular_values()
            .iter()
            .map(|s| s * s / norm2)
            .filter(|p| *p > 1e-300)
            .map(|p| -p * p.ln())
            .sum::<f64>();
        Ok(entropy.max(0.0))
    }
}

/// Applies `exp(−iφ_n Ŝᶻ) exp(−iθ_n Ŝʸ)` on every site of `|⇑⟩`.
pub fn coherent_product_state(angles: &SiteAngles, system: SpinSystem) -> Result<StateVector> {
    if angles.len() != system.sites() {
        return Err(Error::DimensionMismatch {
            expected: system.sites(),
            found: angles.len(),
        });
    }
    let locals: Vec<DVector<C64>> = (0..system.sites())
        .map(|n| angles.site_rotation(system.two_s(), n).column(0).into_owned())
        .collect();
    StateVector::product(system, &locals)
}

/// Operator acting on state vectors of a fixed system.
pub trait LinearOperator: Sync {
    fn system(&self) -> &SpinSystem;

    fn is_hermitian(&self) -> bool;

    /// `y ← A x`; `y` is overwritten.
    fn apply_into(&self, x: &[C64], y: &mut [C64]);

    fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        self.system().check_same(psi.system())?;
        let mut y = vec![ZERO; psi.system().total_dim()];
        self.apply_into(psi.as_slice(), &mut y);
        Ok(StateVector {
            system: *psi.system(),
            amplitudes: DVector::from_vec(y),
        })
    }
}

/// `⟨ψ|A|ψ⟩`.
pub fn expectation<A: LinearOperator + ?Sized>(op: &A, psi: &StateVector) -> Result<C64> {
    psi.inner(&op.apply(psi)?)
}

/// Real expectation value of a Hermitian operator; errors when the imaginary
/// part exceeds `1e-12`.
pub fn expectation_real<A: LinearOperator + ?Sized>(op: &A, psi: &StateVector) -> Result<f64> {
    let e = expectation(op, psi)?;
    if !op.is_hermitian() || e.im.abs() > 1e-12 * e.re.abs().max(1.0) {
        return Err(Error::Numerical(format!(
            "expectation {e} is not real for this operator"
        )));
    }
    Ok(e.re)
}

/// Sparse operator in compressed-row layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ManyBodyOperator {
    system: SpinSystem,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<C64>,
    hermitian: bool,
}

impl ManyBodyOperator {
    /// Rows given as `(column, value)` lists; duplicate columns are summed
    /// and exact zeros dropped.
    fn from_rows(system: SpinSystem, rows: Vec<Vec<(usize, C64)>>, hermitian: bool) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_unstable_by_key(|e| e.0);
            let mut k = 0;
            while k < row.len() {
                let c = row[k].0;
                let mut v = ZERO;
                while k < row.len() && row[k].0 == c {
                    v += row[k].1;
                    k += 1;
                }
                if v != ZERO {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            system,
            row_ptr,
            col_idx,
            values,
            hermitian,
        }
    }

    pub fn from_triplets(system: SpinSystem, triplets: &[(usize, usize, C64)], hermitian: bool) -> Result<Self> {
        let dim = system.total_dim();
        let mut rows = vec![Vec::new(); dim];
        for &(r, c, v) in triplets {
            if r >= dim || c >= dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.max(c) + 1,
                });
            }
            rows[r].push((c, v));
        }
        Ok(Self::from_rows(system, rows, hermitian))
    }

    pub fn from_dense(system: SpinSystem, m: &DMatrix<C64>, hermitian: bool) -> Result<Self> {
        let dim = system.total_dim();
        if m.nrows() != dim || m.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: m.nrows(),
            });
        }
        let rows = (0..dim).map(|r| (0..dim).map(|c| (c, m[(r, c)])).collect()).collect();
        Ok(Self::from_rows(system, rows, hermitian))
    }

    pub fn identity(system: SpinSystem) -> Self {
        let rows = (0..system.total_dim()).map(|r| vec![(r, ONE)]).collect();
        Self::from_rows(system, rows, true)
    }

    pub fn zero(system: SpinSystem) -> Self {
        Self::from_rows(system, vec![Vec::new(); system.total_dim()], true)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn hermitian_flag(&self) -> bool {
        self.hermitian
    }

    /// Marks the operator Hermitian after checking `max |A − A†| ≤ tol`.
    pub fn assert_hermitian(mut self, tol: f64) -> Result<Self> {
        let dev = self.hermiticity_deviation();
        if dev > tol {
            return Err(Error::Numerical(format!(
                "operator deviates from hermiticity by {dev:e}"
            )));
        }
        self.hermitian = true;
        Ok(self)
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => ZERO,
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let dim = self.system.total_dim();
        let mut m = DMatrix::zeros(dim, dim);
        for r in 0..dim {
            for (c, v) in self.row(r) {
                m[(r, c)] = v;
            }
        }
        m
    }

    /// Real part as a dense matrix when every entry is real, else `None`.
    pub fn to_dense_real(&self) -> Option<DMatrix<f64>> {
        if self.values.iter().any(|v| v.im != 0.0) {
            return None;
        }
        let dim = self.system.total_dim();
        let mut m = DMatrix::zeros(dim, dim);
        for r in 0..dim {
            for (c, v) in self.row(r) {
                m[(r, c)] = v.re;
            }
        }
        Some(m)
    }

    pub fn adjoint(&self) -> Self {
        let dim = self.system.total_dim();
        let mut rows = vec![Vec::new(); dim];
        for r in 0..dim {
            for (c, v) in self.row(r) {
                rows[c].push((r, v.conj()));
            }
        }
        Self::from_rows(self.system, rows, self.hermitian)
    }

    /// `max |A − A†|` entrywise.
    pub fn hermiticity_deviation(&self) -> f64 {
        let adj = self.adjoint();
        self.max_abs_diff(&adj).unwrap_or(f64::INFINITY)
    }

    pub fn scale(&self, c: C64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out.hermitian = self.hermitian && c.im == 0.0;
        out
    }

    /// `a·self + b·other`.
    pub fn linear_combination(&self, a: C64, other: &Self, b: C64) -> Result<Self> {
        self.system.check_same(&other.system)?;
        let dim = self.system.total_dim();
        let rows = (0..dim)
            .map(|r| {
                self.row(r)
                    .map(|(c, v)| (c, a * v))
                    .chain(other.row(r).map(|(c, v)| (c, b * v)))
                    .collect()
            })
            .collect();
        let hermitian = self.hermitian && other.hermitian && a.im == 0.0 && b.im == 0.0;
        Ok(Self::from_rows(self.system, rows, hermitian))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.linear_combination(ONE, other, ONE)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.linear_combination(ONE, other, -ONE)
    }

    /// Sparse product `self · other`.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.system.check_same(&other.system)?;
        let dim = self.system.total_dim();
        let row = |r: usize| {
            let mut acc = Vec::new();
            for (k, a) in self.row(r) {
                acc.extend(other.row(k).map(|(c, b)| (c, a * b)));
            }
            acc
        };
        let rows: Vec<Vec<(usize, C64)>> = if dim >= PAR_THRESHOLD {
            (0..dim).into_par_iter().map(row).collect()
        } else {
            (0..dim).map(row).collect()
        };
        Ok(Self::from_rows(self.system, rows, false))
    }

    /// `[self, other] = self·other − other·self`.
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.mul(other)?.sub(&other.mul(self)?)
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.max_abs())
    }
}

impl LinearOperator for ManyBodyOperator {
    fn system(&self) -> &SpinSystem {
        &self.system
    }

    fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        let row = |(r, out): (usize, &mut C64)| {
            *out = self.row(r).map(|(c, v)| v * x[c]).sum();
        };
        if y.len() >= PAR_THRESHOLD {
            y.par_iter_mut().enumerate().for_each(row);
        } else {
            y.iter_mut().enumerate().for_each(row);
        }
    }
}

/// Operator on a few sites; local index `Σ_j ℓ_{sites[j]} d^j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTerm {
    pub sites: Vec<usize>,
    pub matrix: DMatrix<C64>,
}

impl LocalTerm {
    pub fn new(sites: Vec<usize>, matrix: DMatrix<C64>) -> Self {
        Self { sites, matrix }
    }

    /// `Σ_{ab} c_{ab} A_a ⊗ B_b` on two sites, with `sites[0]` as the
    /// less significant factor.
    pub fn two_site(u: usize, v: usize, a: &DMatrix<C64>, b: &DMatrix<C64>) -> Self {
        Self::new(vec![u, v], b.kronecker(a))
    }

    fn validate(&self, system: &SpinSystem) -> Result<()> {
        let mut seen = Vec::with_capacity(self.sites.len());
        for &s in &self.sites {
            system.check_site(s)?;
            if seen.contains(&s) {
                return Err(Error::SameSite(s));
            }
            seen.push(s);
        }
        let local = system.local_dim().pow(self.sites.len() as u32);
        if self.matrix.nrows() != local || self.matrix.ncols() != local {
            return Err(Error::DimensionMismatch {
                expected: local,
                found: self.matrix.nrows(),
            });
        }
        Ok(())
    }
}

/// Sum of local terms, applied matrix-free or assembled into CSR.
#[derive(Debug, Clone)]
pub struct LocalSum {
    system: SpinSystem,
    terms: Vec<LocalTerm>,
    compiled: Vec<CompiledTerm>,
    hermitian: bool,
}

/// Per-term lookup: strides of the term's sites, and for each local row the
/// nonzero `(global offset, value)` pairs.
#[derive(Debug, Clone)]
struct CompiledTerm {
    strides: Vec<usize>,
    rows: Vec<Vec<(usize, C64)>>,
}

impl CompiledTerm {
    fn new(term: &LocalTerm, system: &SpinSystem) -> Self {
        let d = system.local_dim();
        let strides: Vec<usize> = term.sites.iter().map(|&s| system.stride(s)).collect();
        let local = term.matrix.nrows();
        let offset = |mut c: usize| {
            let mut off = 0;
            for st in &strides {
                off += (c % d) * st;
                c /= d;
            }
            off
        };
        let rows = (0..local)
            .map(|r| {
                (0..local)
                    .filter(|&c| term.matrix[(r, c)] != ZERO)
                    .map(|c| (offset(c), term.matrix[(r, c)]))
                    .collect()
            })
            .collect();
        Self { strides, rows }
    }

    /// Local row of composite index `i` and `i` with the term's digits zeroed.
    fn split(&self, i: usize, d: usize) -> (usize, usize) {
        let mut local = 0;
        let mut base = i;
        let mut place = 1;
        for st in &self.strides {
            let digit = (i / st) % d;
            local += digit * place;
            base -= digit * st;
            place *= d;
        }
        (local, base)
    }
}

impl LocalSum {
    pub fn new(system: SpinSystem, terms: Vec<LocalTerm>, hermitian: bool) -> Result<Self> {
        for t in &terms {
            t.validate(&system)?;
        }
        let compiled = terms.iter().map(|t| CompiledTerm::new(t, &system)).collect();
        Ok(Self {
            system,
            terms,
            compiled,
            hermitian,
        })
    }

    pub fn terms(&self) -> &[LocalTerm] {
        &self.terms
    }

    /// Same terms with each matrix replaced by `f(term)`.
    pub fn map_terms(&self, f: impl Fn(&LocalTerm) -> DMatrix<C64>) -> Result<Self> {
        let terms = self
            .terms
            .iter()
            .map(|t| LocalTerm::new(t.sites.clone(), f(t)))
            .collect();
        Self::new(self.system, terms, self.hermitian)
    }

    fn row_entries(&self, i: usize) -> Vec<(usize, C64)> {
        let d = self.system.local_dim();
        let mut out = Vec::new();
        for ct in &self.compiled {
            let (local, base) = ct.split(i, d);
            out.extend(ct.rows[local].iter().map(|&(off, v)| (base + off, v)));
        }
        out
    }

    pub fn to_operator(&self) -> ManyBodyOperator {
        let dim = self.system.total_dim();
        let rows: Vec<Vec<(usize, C64)>> = if dim >= PAR_THRESHOLD {
            (0..dim).into_par_iter().map(|i| self.row_entries(i)).collect()
        } else {
            (0..dim).map(|i| self.row_entries(i)).collect()
        };
        ManyBodyOperator::from_rows(self.system, rows, self.hermitian)
    }
}

impl LinearOperator for LocalSum {
    fn system(&self) -> &SpinSystem {
        &self.system
    }

    fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        let d = self.system.local_dim();
        let row = |(i, out): (usize, &mut C64)| {
            let mut acc = ZERO;
            for ct in &self.compiled {
                let (local, base) = ct.split(i, d);
                for &(off, v) in &ct.rows[local] {
                    acc += v * x[base + off];
                }
            }
            *out = acc;
        };
        if y.len() >= PAR_THRESHOLD {
            y.par_iter_mut().enumerate().for_each(row);
        } else {
            y.iter_mut().enumerate().for_each(row);
        }
    }
}

/// `local_op` on `site`, identity elsewhere.
pub fn embed(local_op: &DMatrix<C64>, site: usize, system: SpinSystem) -> Result<ManyBodyOperator> {
    system.check_site(site)?;
    let hermitian = local_op == &local_op.adjoint();
    Ok(LocalSum::new(system, vec![LocalTerm::new(vec![site], local_op.clone())], hermitian)?.to_operator())
}

/// `Σ_n c_n · local_op_n` as one sparse operator.
pub fn site_sum(local_op: &DMatrix<C64>, coefficients: &[C64], system: SpinSystem) -> Result<ManyBodyOperator> {
    if coefficients.len() != system.sites() {
        return Err(Error::DimensionMismatch {
            expected: system.sites(),
            found: coefficients.len(),
        });
    }
    let terms = coefficients
        .iter()
        .enumerate()
        .map(|(n, &c)| LocalTerm::new(vec![n], local_op * c))
        .collect();
    let hermitian = local_op == &local_op.adjoint() && coefficients.iter().all(|c| c.im == 0.0);
    Ok(LocalSum::new(system, terms, hermitian)?.to_operator())
}

/// Total `Ŝᶻ`.
pub fn total_sz(system: SpinSystem) -> ManyBodyOperator {
    let ls = local_spin_matrices_2s(system.two_s());
    site_sum(&ls.sz, &vec![ONE; system.sites()], system).expect("sizes agree")
}

/// Basis index reached by moving every site's state one site forward
/// (site `n` to `n+1`, the last site wrapping to site 0).
pub fn translate_index(system: &SpinSystem, i: usize) -> usize {
    let d = system.local_dim();
    let top = system.stride(system.sites() - 1);
    (i % top) * d + i / top
}

/// Translation `T` with `T|ℓ_0, …, ℓ_{N−1}⟩ = |ℓ_{N−1}, ℓ_0, …, ℓ_{N−2}⟩`.
pub fn translation_operator(system: SpinSystem) -> ManyBodyOperator {
    let dim = system.total_dim();
    let mut rows = vec![Vec::new(); dim];
    for i in 0..dim {
        rows[translate_index(&system, i)].push((i, ONE));
    }
    ManyBodyOperator::from_rows(system, rows, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn max_abs(m: &DMatrix<C64>) -> f64 {
        m.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    fn random_state(system: SpinSystem, rng: &mut impl Rng) -> StateVector {
        let v = DVector::from_fn(system.total_dim(), |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        StateVector::from_amplitudes(system, v).unwrap().normalized()
    }

    fn random_hermitian(system: SpinSystem, rng: &mut impl Rng) -> ManyBodyOperator {
        let d = system.total_dim();
        let a = DMatrix::from_fn(d, d, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let h = &a + a.adjoint();
        ManyBodyOperator::from_dense(system, &h, true).unwrap()
    }

    #[test]
    fn spin_half_matrices() {
        let ls = local_spin_matrices(0.5).unwrap();
        assert_eq!(ls.sz[(0, 0)], C64::from(0.5));
        assert_eq!(ls.sz[(1, 1)], C64::from(-0.5));
        assert_eq!(ls.sp[(0, 1)], ONE);
        assert!(matches!(local_spin_matrices(0.3), Err(Error::InvalidSpin(_))));
        assert!(matches!(local_spin_matrices(-1.0), Err(Error::InvalidSpin(_))));
    }

    #[test]
    fn su2_algebra_and_casimir() {
        for two_s in 0..=6u32 {
            let s = two_s as f64 / 2.0;
            let ls = local_spin_matrices(s).unwrap();
            let comm = &ls.sx * &ls.sy - &ls.sy * &ls.sx - &ls.sz * I;
            assert!(max_abs(&comm) <= 1e-14, "2S = {two_s}");
            let cas = &ls.sx * &ls.sx + &ls.sy * &ls.sy + &ls.sz * &ls.sz - ls.identity() * C64::from(s * (s + 1.0));
            assert!(max_abs(&cas) <= 1e-13, "2S = {two_s}");
        }
    }

    #[test]
    fn system_caps() {
        assert_eq!(SpinSystem::new(1.0, 7).unwrap().total_dim(), 2187);
        assert!(matches!(
            SpinSystem::with_cap(0.5, 20, 1000),
            Err(Error::DimensionCap { .. })
        ));
        assert!(SpinSystem::new(0.5, 0).is_err());
        assert!(SpinSystem::new(0.5, 200).is_err());
    }

    #[test]
    fn embed_examples() {
        let sys = SpinSystem::new(1.0, 3).unwrap();
        let ls = local_spin_matrices(1.0).unwrap();
        let up = StateVector::all_up(sys);
        let sz0 = embed(&ls.sz, 0, sys).unwrap();
        let out = sz0.apply(&up).unwrap();
        assert!((out.amplitudes()[0] - ONE).norm() < 1e-15);
        let id = embed(&ls.identity(), 2, sys).unwrap();
        assert_eq!(id, ManyBodyOperator::identity(sys));
        let c = embed(&ls.sx, 0, sys)
            .unwrap()
            .commutator(&embed(&ls.sy, 1, sys).unwrap())
            .unwrap();
        assert!(c.max_abs() <= 1e-14);
        assert!(matches!(embed(&ls.sz, 3, sys), Err(Error::SiteOutOfRange { .. })));
    }

    #[test]
    fn embed_matches_kronecker_oracle() {
        // site 0 least significant ⇒ full operator is I ⊗ … ⊗ A ⊗ … ⊗ I with
        // the highest site leftmost.
        let sys = SpinSystem::new(0.5, 3).unwrap();
        let ls = local_spin_matrices(0.5).unwrap();
        let id = ls.identity();
        let kron = id.kronecker(&ls.sx).kronecker(&id);
        let emb = embed(&ls.sx, 1, sys).unwrap().to_dense();
        assert!(max_abs(&(emb - kron)) == 0.0);
    }

    #[test]
    fn coherent_state_examples() {
        let sys = SpinSystem::new(1.5, 3).unwrap();
        let angles = SiteAngles::uniform(3, 0.0, 0.0).unwrap();
        let psi = coherent_product_state(&angles, sys).unwrap();
        assert!((psi.amplitudes()[0] - ONE).norm() < 1e-15);

        let one = SpinSystem::new(0.5, 1).unwrap();
        let (theta, phi) = (1.1, -2.3);
        let psi = coherent_product_state(&SiteAngles::uniform(1, theta, phi).unwrap(), one).unwrap();
        let expected = StateVector::from_amplitudes(
            one,
            DVector::from_vec(vec![
                C64::from((theta / 2.0).cos()),
                (I * phi).exp() * (theta / 2.0).sin(),
            ]),
        )
        .unwrap();
        assert!((psi.fidelity(&expected).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn coherent_state_expectations_and_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &s in &[0.5, 1.0, 1.5] {
            let sys = SpinSystem::new(s, 4).unwrap();
            let theta: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..std::f64::consts::PI)).collect();
            let phi: Vec<f64> = (0..4).map(|_| rng.gen_range(-7.0..7.0)).collect();
            let angles = SiteAngles::new(theta.clone(), phi.clone()).unwrap();
            let psi = coherent_product_state(&angles, sys).unwrap();
            assert!((psi.norm() - 1.0).abs() < 1e-12);
            let ls = local_spin_matrices(s).unwrap();
            for n in 0..4 {
                let ex = expectation_real(&embed(&ls.sx, n, sys).unwrap(), &psi).unwrap();
                let ey = expectation_real(&embed(&ls.sy, n, sys).unwrap(), &psi).unwrap();
                let ez = expectation_real(&embed(&ls.sz, n, sys).unwrap(), &psi).unwrap();
                assert!((ex - s * theta[n].sin() * phi[n].cos()).abs() < 1e-12);
                assert!((ey - s * theta[n].sin() * phi[n].sin()).abs() < 1e-12);
                assert!((ez - s * theta[n].cos()).abs() < 1e-12);
            }
            for cut in 0..=4 {
                assert!(psi.entanglement_entropy(cut).unwrap() < 1e-12);
            }
        }
    }

    #[test]
    fn bell_state_entropy_is_ln2() {
        let sys = SpinSystem::new(0.5, 2).unwrap();
        let v = DVector::from_vec(vec![ONE, ZERO, ZERO, ONE]);
        let psi = StateVector::from_amplitudes(sys, v).unwrap().normalized();
        assert!((psi.entanglement_entropy(1).unwrap() - 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn identity_expectation_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sys = SpinSystem::new(1.0, 3).unwrap();
        let psi = random_state(sys, &mut rng);
        let e = expectation(&ManyBodyOperator::identity(sys), &psi).unwrap();
        assert!((e - ONE).norm() < 1e-14);
    }

    #[test]
    fn translation_moves_sites_forward() {
        let sys = SpinSystem::new(1.0, 4).unwrap();
        let t = translation_operator(sys);
        // |ℓ⟩ = (2, 0, 1, 0): index 2 + 1·9 = 11 maps to (0, 2, 0, 1): 2·3 + 1·27.
        let out = t.apply(&StateVector::basis(sys, 11)).unwrap();
        assert_eq!(out.amplitudes()[2 * 3 + 27], ONE);
        let ls = local_spin_matrices(1.0).unwrap();
        let lhs = t.mul(&embed(&ls.sz, 1, sys).unwrap()).unwrap();
        let rhs = embed(&ls.sz, 2, sys).unwrap().mul(&t).unwrap();
        assert_eq!(lhs.max_abs_diff(&rhs).unwrap(), 0.0);
    }

    #[test]
    fn local_sum_apply_matches_assembled_and_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sys = SpinSystem::new(1.0, 4).unwrap();
        let local = |k: u32, rng: &mut ChaCha8Rng| {
            let d = 3usize.pow(k);
            DMatrix::from_fn(d, d, |_, _| {
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            })
        };
        let terms = vec![
            LocalTerm::new(vec![2], local(1, &mut rng)),
            LocalTerm::new(vec![3, 0], local(2, &mut rng)),
            LocalTerm::new(vec![1, 2], local(2, &mut rng)),
        ];
        let sum = LocalSum::new(sys, terms.clone(), false).unwrap();
        let op = sum.to_operator();
        // Dense oracle by explicit digit manipulation.
        let dim = sys.total_dim();
        let mut dense = DMatrix::<C64>::zeros(dim, dim);
        for t in &terms {
            for i in 0..dim {
                for j in 0..dim {
                    let others_equal = (0..4)
                        .filter(|s| !t.sites.contains(s))
                        .all(|s| sys.digit(i, s) == sys.digit(j, s));
                    if !others_equal {
                        continue;
                    }
                    let li: usize = t
                        .sites
                        .iter()
                        .enumerate()
                        .map(|(k, &s)| sys.digit(i, s) * 3usize.pow(k as u32))
                        .sum();
                    let lj: usize = t
                        .sites
                        .iter()
                        .enumerate()
                        .map(|(k, &s)| sys.digit(j, s) * 3usize.pow(k as u32))
                        .sum();
                    dense[(i, j)] += t.matrix[(li, lj)];
                }
            }
        }
        assert!(max_abs(&(op.to_dense() - &dense)) < 1e-14);
        let psi = random_state(sys, &mut rng);
        let a = sum.apply(&psi).unwrap();
        let b = op.apply(&psi).unwrap();
        let c = &dense * psi.amplitudes();
        assert!((a.amplitudes() - b.amplitudes()).norm() < 1e-13);
        assert!((a.amplitudes() - c).norm() < 1e-13);
    }

    #[test]
    fn two_site_term_ordering() {
        let sys = SpinSystem::new(0.5, 2).unwrap();
        let ls = local_spin_matrices(0.5).unwrap();
        let t = LocalTerm::two_site(0, 1, &ls.sp, &ls.sz);
        let op = LocalSum::new(sys, vec![t], false).unwrap().to_operator();
        let prod = embed(&ls.sp, 0, sys)
            .unwrap()
            .mul(&embed(&ls.sz, 1, sys).unwrap())
            .unwrap();
        assert_eq!(op.max_abs_diff(&prod).unwrap(), 0.0);
        assert!(LocalSum::new(sys, vec![LocalTerm::two_site(1, 1, &ls.sz, &ls.sz)], true).is_err());
    }

    #[test]
    fn rotations_are_unitary_and_match_generators() {
        for two_s in 1..=4u32 {
            let r = rotation_y(two_s, 0.83);
            let d = two_s as usize + 1;
            let id = DMatrix::<C64>::identity(d, d);
            assert!(max_abs(&(&r * r.adjoint() - &id)) < 1e-14);
            // exp(−iθSy) Sz exp(iθSy) = cosθ Sz + sinθ Sx.
            let ls = local_spin_matrices_2s(two_s);
            let lhs = &r * &ls.sz * r.adjoint();
            let rhs = &ls.sz * C64::from(0.83f64.cos()) + &ls.sx * C64::from(0.83f64.sin());
            assert!(max_abs(&(lhs - rhs)) < 1e-13);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn apply_is_linear(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sys = SpinSystem::new(0.5, 4).unwrap();
            let h = random_hermitian(sys, &mut rng);
            let x = random_state(sys, &mut rng);
            let y = random_state(sys, &mut rng);
            let a = C64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let b = C64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let lhs = h.apply(&x.combine(a, &y, b).unwrap()).unwrap();
            let rhs = h.apply(&x).unwrap().combine(a, &h.apply(&y).unwrap(), b).unwrap();
            prop_assert!((lhs.amplitudes() - rhs.amplitudes()).norm() <= 1e-12);
        }

        #[test]
        fn hermitian_expectation_is_real(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sys = SpinSystem::new(1.0, 2).unwrap();
            let h = random_hermitian(sys, &mut rng);
            for _ in 0..4 {
                let psi = random_state(sys, &mut rng);
                prop_assert!(expectation(&h, &psi).unwrap().im.abs() <= 1e-12);
            }
        }

        #[test]
        fn rotations_preserve_norm(theta in 0.0f64..std::f64::consts::PI, phi in -10.0f64..10.0, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sys = SpinSystem::new(1.0, 3).unwrap();
            let psi = random_state(sys, &mut rng);
            let mut out = psi.clone();
            for n in 0..3 {
                let r = rotation_z(2, phi) * rotation_y(2, theta);
                out = embed(&r, n, sys).unwrap().apply(&out).unwrap();
            }
            prop_assert!((out.norm() - psi.norm()).abs() <= 1e-12);
        }
    }
}
