//! GZ and helical scar states, their energy, eigenstate residuals, helical
//! projections, span rank and local spin currents.
//!
//! Chain site `i` (0-based) carries the phase `q_n = n·q` with `n = i + 1`.
//! A GZ state of helicity `h` has single-site expectations
//! `S·(α cn(q_n), h β sn(q_n), γ dn(q_n))`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_rational::Rational64;
use rayon::prelude::*;
use serde::Serialize;

use crate::elliptic::{commensurate_q, CommensurateQ};
use crate::error::{Error, Result};
use crate::hamiltonian::xyz_bond;
use crate::lattice::{assign_site_phases, check_circuit_rule, BondKind, ScarGraph};
use crate::spinops::{
    coherent_product_state, expectation_real, local_spin_matrices_2s, LinearOperator, LocalSum, LocalTerm, SiteAngles,
    SpinSystem, StateVector, C64, I,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Helicity {
    Positive,
    Negative,
}

impl Helicity {
    pub fn sign(self) -> f64 {
        match self {
            Helicity::Positive => 1.0,
            Helicity::Negative => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Helicity::Positive => Helicity::Negative,
            Helicity::Negative => Helicity::Positive,
        }
    }
}

impl fmt::Display for Helicity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Helicity::Positive => "+",
            Helicity::Negative => "-",
        })
    }
}

impl FromStr for Helicity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "+" | "+1" | "1" | "positive" => Ok(Helicity::Positive),
            "-" | "-1" | "negative" => Ok(Helicity::Negative),
            _ => Err(Error::InvalidInput(format!("helicity must be + or -, got {s:?}"))),
        }
    }
}

/// GZ family member: helicity, `γ` and the commensurate `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScarSpec {
    pub helicity: Helicity,
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub q: CommensurateQ,
}

impl ScarSpec {
    pub fn new(helicity: Helicity, gamma: f64, q: CommensurateQ) -> Result<Self> {
        if gamma.is_nan() || gamma.abs() > 1.0 {
            return Err(Error::InvalidInput(format!("gamma {gamma} outside [-1, 1]")));
        }
        let k2 = q.kappa() * q.kappa();
        let g2 = gamma * gamma;
        Ok(Self {
            helicity,
            gamma,
            alpha: (1.0 - g2).sqrt(),
            beta: (1.0 - g2 + k2 * g2).sqrt(),
            q,
        })
    }

    /// `q = 4pK(κ)/N` on an `N`-site chain.
    pub fn chain(n: usize, p: i64, kappa: f64, gamma: f64, helicity: Helicity) -> Result<Self> {
        Self::new(helicity, gamma, commensurate_q(p, n as i64, kappa)?)
    }

    pub fn kappa(&self) -> f64 {
        self.q.kappa()
    }
}

/// Chain phases `n·q / 4K` for `n = 1..=N`.
pub fn chain_phases(n: usize, q: &CommensurateQ) -> Vec<Rational64> {
    (1..=n as i64).map(|k| q.fraction() * k).collect()
}

/// Angles `θ_n = arccos(γ dn(q_n))` and `φ_n = h·arg(α cn(q_n) + iβ sn(q_n))`
/// on the continuous branch, so that `φ_n` advances by `2π` per `4K`.
pub fn gz_angles(phases: &[Rational64], spec: &ScarSpec) -> SiteAngles {
    let m = spec.q.modulus;
    let (theta, phi) = phases
        .iter()
        .map(|&f| {
            let dn = m.jacobi_at_fraction(f).dn;
            let theta = (spec.gamma * dn).clamp(-1.0, 1.0).acos();
            let phi = spec.helicity.sign() * m.phase_angle(f, spec.alpha, spec.beta);
            (theta, phi)
        })
        .unzip();
    SiteAngles::new(theta, phi).expect("angles are finite and theta lies in [0, pi]")
}

/// Coherent product state for explicit phases; no commensurability check.
pub fn gz_state_from_phases(system: SpinSystem, phases: &[Rational64], spec: &ScarSpec) -> Result<StateVector> {
    coherent_product_state(&gz_angles(phases, spec), system)
}

/// GZ state on the periodic chain `system`.
pub fn gz_state(system: SpinSystem, spec: &ScarSpec) -> Result<StateVector> {
    let n = system.sites() as i64;
    if !(spec.q.fraction() * n).is_integer() {
        return Err(Error::IncommensurateQ {
            p: spec.q.p,
            denominator: spec.q.denominator,
            winding: n,
        });
    }
    gz_state_from_phases(system, &chain_phases(system.sites(), &spec.q), spec)
}

/// Site phases of the GZ state on `g`, rooted at vertex 0.
pub fn graph_phases(g: &ScarGraph, q: &CommensurateQ) -> Result<Vec<Rational64>> {
    let report = check_circuit_rule(g, q)?;
    if let Some(c) = report.circuit_constraints.iter().find(|c| !c.satisfied) {
        return Err(Error::IncommensurateQ {
            p: q.p,
            denominator: q.denominator,
            winding: c.winding,
        });
    }
    assign_site_phases(g, q, 0)
}

/// GZ state on a graph; vertex `x` takes the propagated phase `q_x`.
pub fn gz_state_on_graph(g: &ScarGraph, s: f64, spec: &ScarSpec) -> Result<StateVector> {
    let system = SpinSystem::new(s, g.vertices())?;
    gz_state_from_phases(system, &graph_phases(g, &spec.q)?, spec)
}

/// `N S² cn(q) dn(q) + κ² S² sn²(q) Σ_n sn(nq) sn(nq + q)` for the chain with
/// unit `Jy`.
pub fn gz_energy(n: usize, s: f64, q: &CommensurateQ) -> f64 {
    let j1 = q.jacobi_multiple(1);
    let k2 = q.kappa() * q.kappa();
    let tail: f64 = (1..=n as i64)
        .map(|k| q.jacobi_multiple(k).sn * q.jacobi_multiple(k + 1).sn)
        .sum();
    n as f64 * s * s * j1.cn * j1.dn + k2 * s * s * j1.sn * j1.sn * tail
}

/// `‖Hψ − ⟨ψ|H|ψ⟩ψ‖₂` for normalized `ψ`.
pub fn residual<A: LinearOperator + ?Sized>(h: &A, psi: &StateVector) -> Result<f64> {
    let hpsi = h.apply(psi)?;
    let e = psi.inner(&hpsi)?;
    Ok(hpsi.combine(ONE_C, psi, -e)?.norm())
}

const ONE_C: C64 = C64::new(1.0, 0.0);

/// Normalized states `τ̂^m |⇑⟩`, `m = 0..=2NS`, with
/// `τ̂_± = Σ_n e^{±inq0} Ŝ⁻_n` and `q0 = 2pπ/N`.
#[derive(Debug, Clone)]
pub struct ScarTower {
    pub states: Vec<StateVector>,
    pub helicity: Helicity,
    pub q0: f64,
}

/// `τ̂_±` as a sum of single-site terms.
pub fn tower_generator(system: SpinSystem, helicity: Helicity, q0: f64) -> Result<LocalSum> {
    let ls = local_spin_matrices_2s(system.two_s());
    let terms = (0..system.sites())
        .map(|i| {
            let n = (i + 1) as f64;
            let c = (I * helicity.sign() * n * q0).exp();
            LocalTerm::new(vec![i], &ls.sm * c)
        })
        .collect();
    LocalSum::new(system, terms, false)
}

pub fn helical_tower(system: SpinSystem, helicity: Helicity, p: i64) -> Result<ScarTower> {
    let q0 = 2.0 * PI * p as f64 / system.sites() as f64;
    let tau = tower_generator(system, helicity, q0)?;
    let top = system.two_s() as usize * system.sites();
    let mut states = Vec::with_capacity(top + 1);
    states.push(StateVector::all_up(system));
    for m in 1..=top {
        let next = tau.apply(&states[m - 1])?;
        states.push(next.normalized());
    }
    Ok(ScarTower { states, helicity, q0 })
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// `Σ_m √C(M,m) cos^{M−m}(θ/2) sin^m(θ/2) S^{(m)}`, `M = 2NS`, normalized.
pub fn helical_expansion(tower: &ScarTower, theta: f64) -> Result<StateVector> {
    if !(0.0..=PI).contains(&theta) {
        return Err(Error::InvalidInput(format!("theta {theta} outside [0, pi]")));
    }
    let big_m = tower.states.len() - 1;
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let mut acc = StateVector::zeros(*tower.states[0].system());
    for (m, st) in tower.states.iter().enumerate() {
        let w = binomial(big_m, m).sqrt() * c.powi((big_m - m) as i32) * s.powi(m as i32);
        acc = acc.combine(ONE_C, st, C64::from(w))?;
    }
    Ok(acc.normalized())
}

/// `⟨a|b⟩ / |⟨a|b⟩|`.
pub fn relative_phase(a: &StateVector, b: &StateVector) -> Result<C64> {
    let z = a.inner(b)?;
    Ok(z / z.norm())
}

/// Helical-tower weights of a GZ state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Projections {
    /// Weight on the tower of the GZ state's own helicity.
    pub same: f64,
    /// Weight on the opposite tower, excluding the shared states.
    pub opposite: f64,
    /// Tower levels `m` whose two helicities coincide up to phase (`N | 2mp`);
    /// they count toward `same` only.
    pub excluded: Vec<usize>,
    /// `|⟨S₊^{(m)}|S₋^{(m)}⟩|` per level.
    pub shared_overlaps: Vec<f64>,
}

/// Levels where `S₊^{(m)}` and `S₋^{(m)}` carry the same momentum.
pub fn shared_levels(n: usize, two_s: u32, p: i64) -> Vec<usize> {
    (0..=n * two_s as usize)
        .filter(|&m| (2 * m as i64 * p).rem_euclid(n as i64) == 0)
        .collect()
}

/// `P⁺` and `P⁻` of the chain GZ state at `q = 4pK/N` against the towers at
/// `q0 = 2pπ/N`.
pub fn projections(system: SpinSystem, p: i64, kappa: f64, gamma: f64, helicity: Helicity) -> Result<Projections> {
    let spec = ScarSpec::chain(system.sites(), p, kappa, gamma, helicity)?;
    let psi = gz_state(system, &spec)?;
    let own = helical_tower(system, helicity, p)?;
    let other = helical_tower(system, helicity.flipped(), p)?;
    let excluded = shared_levels(system.sites(), system.two_s(), p);
    let weight = |t: &ScarTower, skip: &[usize]| -> Result<f64> {
        let mut total = 0.0;
        for (m, st) in t.states.iter().enumerate() {
            if !skip.contains(&m) {
                total += psi.inner(st)?.norm_sqr();
            }
        }
        Ok(total)
    };
    let shared_overlaps = own
        .states
        .iter()
        .zip(&other.states)
        .map(|(a, b)| a.inner(b).map(|z| z.norm()))
        .collect::<Result<_>>()?;
    Ok(Projections {
        same: weight(&own, &[])?,
        opposite: weight(&other, &excluded)?,
        excluded,
        shared_overlaps,
    })
}

/// Chebyshev nodes `0.99 cos((2j+1)π / 2n)` in `(−0.99, 0.99)`.
pub fn chebyshev_grid(n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| 0.99 * ((2 * j + 1) as f64 * PI / (2 * n) as f64).cos())
        .collect()
}

/// Default γ-grid size `2(4NS + 4)`.
pub fn default_grid_size(system: &SpinSystem) -> usize {
    2 * (2 * system.two_s() as usize * system.sites() + 4)
}

/// Relative singular-value cutoff of [`span_rank`].
pub const RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpanReport {
    pub rank: usize,
    pub grid_points: usize,
    pub rank_doubled: usize,
    pub stable: bool,
    pub singular_values: Vec<f64>,
}

fn numerical_rank(system: SpinSystem, spec0: &ScarSpec, gammas: &[f64]) -> Result<(usize, Vec<f64>)> {
    let cols: Vec<StateVector> = gammas
        .par_iter()
        .map(|&g| gz_state(system, &ScarSpec::new(spec0.helicity, g, spec0.q)?))
        .collect::<Result<_>>()?;
    let a = DMatrix::from_fn(system.total_dim(), cols.len(), |r, c| cols[c].as_slice()[r]);
    let sv: Vec<f64> = a.singular_values().iter().copied().collect();
    let top = sv.iter().copied().fold(0.0, f64::max);
    let rank = sv.iter().filter(|&&x| x > RANK_TOL * top).count();
    Ok((rank, sv))
}

/// Rank of the span of GZ states over a γ-grid, with the grid-doubling check.
pub fn span_rank(
    system: SpinSystem,
    p: i64,
    kappa: f64,
    helicity: Helicity,
    grid_points: Option<usize>,
) -> Result<SpanReport> {
    let n = grid_points.unwrap_or_else(|| default_grid_size(&system));
    let min = default_grid_size(&system) / 2;
    if n < min {
        return Err(Error::InvalidInput(format!(
            "a span grid needs at least {min} points, got {n}"
        )));
    }
    let spec = ScarSpec::chain(system.sites(), p, kappa, 0.0, helicity)?;
    let (rank, singular_values) = numerical_rank(system, &spec, &chebyshev_grid(n))?;
    let (rank_doubled, _) = numerical_rank(system, &spec, &chebyshev_grid(2 * n))?;
    Ok(SpanReport {
        rank,
        grid_points: n,
        rank_doubled,
        stable: rank == rank_doubled,
        singular_values,
    })
}

/// `⟨i[H, Ŝᶻ_x]⟩` on the GZ state of `g`, from two-site reduced states.
pub fn local_sz_current(g: &ScarGraph, s: f64, spec: &ScarSpec, j: f64, jprime: f64) -> Result<Vec<f64>> {
    let phases = graph_phases(g, &spec.q)?;
    let angles = gz_angles(&phases, spec);
    let two_s = crate::spinops::two_s_of(s)?;
    let ls = local_spin_matrices_2s(two_s);
    let d = ls.sz.nrows();
    let local: Vec<DVector<C64>> = (0..g.vertices())
        .map(|x| angles.site_rotation(two_s, x).column(0).into_owned())
        .collect();
    let id = ls.identity();
    let sz_lo = id.kronecker(&ls.sz);
    let sz_hi = ls.sz.kronecker(&id);
    let mut out = vec![0.0; g.vertices()];
    for e in g.edges() {
        let bond = match e.kind {
            BondKind::Csse => {
                let jac = spec.q.jacobi_multiple(e.r as i64);
                let sc = j * e.strength;
                xyz_bond(&ls, sc * jac.dn, sc, sc * jac.cn)
            }
            BondKind::Su2 => {
                let sc = jprime * e.strength;
                xyz_bond(&ls, sc, sc, sc)
            }
        };
        // Pair state with site u as the less significant factor.
        let pair: DVector<C64> = local[e.v].kronecker(&local[e.u]);
        debug_assert_eq!(pair.len(), d * d);
        for (x, sz) in [(e.u, &sz_lo), (e.v, &sz_hi)] {
            let comm = (&bond * sz - sz * &bond) * I;
            out[x] += pair.dotc(&(comm * &pair)).re;
        }
    }
    Ok(out)
}

/// `h αβ S² dn(q_x) Σ_m J σ_xm sn(r q)` per vertex: the closed form of
/// [`local_sz_current`].
pub fn sz_current_formula(g: &ScarGraph, s: f64, spec: &ScarSpec, j: f64) -> Result<Vec<f64>> {
    let phases = graph_phases(g, &spec.q)?;
    let m = spec.q.modulus;
    let pre = spec.helicity.sign() * spec.alpha * spec.beta * s * s;
    let mut sums = vec![0.0; g.vertices()];
    for e in g.edges().iter().filter(|e| e.kind == BondKind::Csse) {
        let w = j * e.strength * spec.q.jacobi_multiple(e.r as i64).sn * e.sigma as f64;
        sums[e.u] += w;
        sums[e.v] -= w;
    }
    Ok(sums
        .iter()
        .zip(&phases)
        .map(|(sum, &f)| pre * m.jacobi_at_fraction(f).dn * sum)
        .collect())
}

/// `⟨ψ|H|ψ⟩` for the chain GZ state; equals [`gz_energy`] on eigenstates.
pub fn gz_expectation<A: LinearOperator + ?Sized>(h: &A, system: SpinSystem, spec: &ScarSpec) -> Result<f64> {
    expectation_real(h, &gz_state(system, spec)?)
}
