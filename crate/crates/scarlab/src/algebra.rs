//! Spectrum-generating algebras of the scar tower: the exact ladder `τ̂` of
//! the XXZ chain, the deformed ladder `τ̂″` of the XYZ chain, the `κ²`
//! perturbative split, and the γ-family of GZ states.
//!
//! All chains are periodic with site `i` carrying `n = i + 1`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::elliptic::{commensurate_q, CommensurateQ};
use crate::error::{Error, Result};
use crate::hamiltonian::{gz_chain_terms, xyz_chain_terms};
use crate::scar::{gz_energy, gz_state, residual, tower_generator, Helicity, ScarSpec, RANK_TOL};
use crate::spectra::{default_tolerance, eigenspace, full_spectrum, least_squares_slope, VECTOR_CAP};
use crate::spinops::{
    expectation_real, local_spin_matrices_2s, LinearOperator, LocalSum, LocalTerm, ManyBodyOperator, SpinSystem,
    StateVector, C64, I, ONE,
};

/// Vectors whose norm after projection falls below this are dropped by
/// [`orthonormalize`].
pub const DROP_TOL: f64 = 1e-10;

/// `τ̂_± = Σ_n e^{±inq0} Ŝ⁻_n`.
pub fn tau(system: SpinSystem, q0: f64, helicity: Helicity) -> Result<ManyBodyOperator> {
    Ok(tower_generator(system, helicity, q0)?.to_operator())
}

/// XXZ chain `Σ ŜˣŜˣ + ŜʸŜʸ + cos q0 ŜᶻŜᶻ`.
pub fn xxz_chain(system: SpinSystem, q0: f64) -> Result<LocalSum> {
    xyz_chain_terms(system.sites(), system.spin(), 1.0, 1.0, q0.cos(), true)
}

/// `Λ̂_± = i sin(±q0) Σ_n e^{±inq0} Ŝ⁻_n (Ŝᶻ_{n+1} − Ŝᶻ_{n−1})`, so that
/// `[H_XXZ, τ̂_±] = Λ̂_±`.
pub fn lambda_op(system: SpinSystem, q0: f64, helicity: Helicity) -> Result<ManyBodyOperator> {
    let n = system.sites();
    if n < 3 {
        return Err(Error::InvalidInput(format!("lambda needs at least 3 sites, got {n}")));
    }
    let q = helicity.sign() * q0;
    let ls = local_spin_matrices_2s(system.two_s());
    let mut terms = Vec::with_capacity(2 * n);
    for i in 0..n {
        let c = I * q.sin() * (I * (i + 1) as f64 * q).exp();
        let (next, prev) = ((i + 1) % n, (i + n - 1) % n);
        terms.push(LocalTerm::two_site(i, next, &(&ls.sm * c), &ls.sz));
        terms.push(LocalTerm::two_site(i, prev, &(&ls.sm * -c), &ls.sz));
    }
    Ok(LocalSum::new(system, terms, false)?.to_operator())
}

/// Evidence that `τ̂` generates a degenerate tower of `H`.
#[derive(Debug, Clone)]
pub struct SgaWitness {
    pub generator: ManyBodyOperator,
    /// `‖[H, τ̂] S^{(m)}‖` per level.
    pub commutator_residuals: Vec<f64>,
    /// `‖H S^{(m)} − E S^{(m)}‖` per level.
    pub eigen_residuals: Vec<f64>,
    pub energy: f64,
    /// Spacing of the tower; 0 on the degenerate line `Jz = Jx cos q0`.
    pub omega: f64,
}

/// Builds `τ̂` at `q0 = 2pπ/N` and checks it against the XXZ chain level by
/// level.
pub fn sga_witness(system: SpinSystem, p: i64, helicity: Helicity) -> Result<SgaWitness> {
    let q0 = 2.0 * PI * p as f64 / system.sites() as f64;
    let h = xxz_chain(system, q0)?.to_operator();
    let generator = tau(system, q0, helicity)?;
    let comm = h.commutator(&generator)?;
    let top = system.two_s() as usize * system.sites();
    let mut tower = vec![StateVector::all_up(system)];
    for m in 1..=top {
        tower.push(generator.apply(&tower[m - 1])?.normalized());
    }
    let energy = expectation_real(&h, &tower[0])?;
    let rows: Vec<(f64, f64)> = tower
        .par_iter()
        .map(|st| -> Result<(f64, f64)> {
            let c = comm.apply(st)?.norm();
            let e = h.apply(st)?.combine(ONE, st, C64::from(-energy))?.norm();
            Ok((c, e))
        })
        .collect::<Result<_>>()?;
    let energies: Vec<f64> = tower.iter().map(|st| expectation_real(&h, st)).collect::<Result<_>>()?;
    let omega = energies
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0, |a: f64, d| if d.abs() > a.abs() { d } else { a });
    Ok(SgaWitness {
        generator,
        commutator_residuals: rows.iter().map(|r| r.0).collect(),
        eigen_residuals: rows.iter().map(|r| r.1).collect(),
        energy,
        omega,
    })
}

/// `τ̂″ = Σ_n e^{±i q_n} Ŝ⁻_n` with `q_n = am(nq, κ)` on its continuous
/// branch, which is `arctan sc(nq, κ)` lifted to match `nq` at `κ = 0`.
pub fn tau_double_prime(system: SpinSystem, q: &CommensurateQ, helicity: Helicity) -> Result<ManyBodyOperator> {
    let ls = local_spin_matrices_2s(system.two_s());
    let frac = q.fraction();
    let terms = (0..system.sites())
        .map(|i| {
            let n = (i + 1) as i64;
            let qn = q.modulus.amplitude(frac * n);
            LocalTerm::new(vec![i], &ls.sm * (I * helicity.sign() * qn).exp())
        })
        .collect();
    Ok(LocalSum::new(system, terms, false)?.to_operator())
}

/// Normalized `(τ̂″)^m |⇑⟩` for `m = 0..=2NS`.
pub fn deformed_tower(system: SpinSystem, q: &CommensurateQ, helicity: Helicity) -> Result<Vec<StateVector>> {
    let t = tau_double_prime(system, q, helicity)?;
    let top = system.two_s() as usize * system.sites();
    let mut states = vec![StateVector::all_up(system)];
    for m in 1..=top {
        states.push(t.apply(&states[m - 1])?.normalized());
    }
    Ok(states)
}

/// `1 − ‖P ψ‖²` per state, `P` the exact eigenspace of the GZ chain at
/// `E_GZ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeficitReport {
    pub kappa: f64,
    pub subspace_dim: usize,
    pub per_level: Vec<f64>,
    pub max: f64,
}

fn deficits(system: SpinSystem, q: &CommensurateQ, states: &[StateVector]) -> Result<DeficitReport> {
    let h = gz_chain_terms(system.sites(), system.spin(), q)?.to_operator();
    let spec = full_spectrum(&h, true)?;
    let basis = eigenspace(
        &spec,
        gz_energy(system.sites(), system.spin(), q),
        default_tolerance(&spec.values),
    )?;
    let per_level: Vec<f64> = states
        .iter()
        .map(|st| (1.0 - (basis.adjoint() * st.amplitudes()).norm_squared()).max(0.0))
        .collect();
    Ok(DeficitReport {
        kappa: q.kappa(),
        subspace_dim: basis.ncols(),
        max: per_level.iter().copied().fold(0.0, f64::max),
        per_level,
    })
}

/// Projection deficits of the `τ̂″` tower at `q = 4pK/N`.
pub fn deformed_tower_deficits(system: SpinSystem, p: i64, kappa: f64, helicity: Helicity) -> Result<DeficitReport> {
    let q = commensurate_q(p, system.sites() as i64, kappa)?;
    deficits(system, &q, &deformed_tower(system, &q, helicity)?)
}

/// Log–log slope of the maximal deficit against `κ²`.
pub fn deficit_slope(reports: &[DeficitReport]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = reports
        .iter()
        .filter(|r| r.kappa > 0.0 && r.max > 0.0)
        .map(|r| ((r.kappa * r.kappa).ln(), r.max.ln()))
        .collect();
    least_squares_slope(&pts)
}

/// `H(κ) = H0 + κ² H1 + O(κ⁴)` around the XXZ chain at `q0`.
#[derive(Debug, Clone)]
pub struct PerturbativeSplit {
    pub q0: f64,
    pub h0: ManyBodyOperator,
    pub h1: ManyBodyOperator,
}

/// `H0 = XXZ(cos q0)`, `H1 = −(sin² q0 / 2) Σ [ŜˣŜˣ + (cos q0 / 2) ŜᶻŜᶻ]`.
pub fn perturbative_split(system: SpinSystem, q0: f64) -> Result<PerturbativeSplit> {
    let h0 = xxz_chain(system, q0)?.to_operator();
    let w = -q0.sin().powi(2) / 2.0;
    let h1 = xyz_chain_terms(system.sites(), system.spin(), w, 0.0, w * q0.cos() / 2.0, true)?.to_operator();
    Ok(PerturbativeSplit { q0, h0, h1 })
}

/// `‖H(κ) − H0 − κ² H1‖_max` for the GZ chain at `q = 4pK/N`.
pub fn split_remainder(system: SpinSystem, p: i64, kappa: f64) -> Result<f64> {
    let q0 = 2.0 * PI * p as f64 / system.sites() as f64;
    let split = perturbative_split(system, q0)?;
    let q = commensurate_q(p, system.sites() as i64, kappa)?;
    let h = gz_chain_terms(system.sites(), system.spin(), &q)?.to_operator();
    let approx = split.h0.linear_combination(ONE, &split.h1, C64::from(kappa * kappa))?;
    h.max_abs_diff(&approx)
}

/// Log–log slope of [`split_remainder`] against `κ`.
pub fn remainder_slope(system: SpinSystem, p: i64, kappas: &[f64]) -> Result<Option<f64>> {
    let pts = kappas
        .iter()
        .map(|&k| Ok((k.ln(), split_remainder(system, p, k)?.ln())))
        .collect::<Result<Vec<_>>>()?;
    Ok(least_squares_slope(&pts))
}

/// Pseudo-inverse of `H0 − E` on the complement of its kernel.
fn reduced_resolvent(h0: &ManyBodyOperator, energy: f64) -> Result<DMatrix<C64>> {
    let spec = full_spectrum(h0, true)?;
    let v = spec.vectors.as_ref().expect("requested");
    let tol = default_tolerance(&spec.values);
    let dim = v.nrows();
    let mut r = DMatrix::from_element(dim, dim, C64::from(0.0));
    for (k, &lam) in spec.values.iter().enumerate() {
        if (lam - energy).abs() > tol {
            let col = v.column(k);
            r += col * col.adjoint() * C64::from(1.0 / (lam - energy));
        }
    }
    Ok(r)
}

/// First-order states `(1 − κ² R H1) S^{(m)}` from the helical tower, with
/// their deficits and those of the bare tower against the exact eigenspace.
#[derive(Debug, Clone)]
pub struct FirstOrderReport {
    pub states: Vec<StateVector>,
    pub zeroth: DeficitReport,
    pub first: DeficitReport,
}

pub fn first_order_states(system: SpinSystem, p: i64, kappa: f64, helicity: Helicity) -> Result<FirstOrderReport> {
    system.check_dense(VECTOR_CAP)?;
    let n = system.sites();
    let q0 = 2.0 * PI * p as f64 / n as f64;
    let split = perturbative_split(system, q0)?;
    let g = tau(system, q0, helicity)?;
    let mut tower = vec![StateVector::all_up(system)];
    for m in 1..=system.two_s() as usize * n {
        tower.push(g.apply(&tower[m - 1])?.normalized());
    }
    let e0 = expectation_real(&split.h0, &tower[0])?;
    let r = reduced_resolvent(&split.h0, e0)?;
    let states = tower
        .iter()
        .map(|st| {
            let kick = &r * split.h1.apply(st)?.into_amplitudes();
            let amp = st.amplitudes() - kick * C64::from(kappa * kappa);
            Ok(StateVector::from_amplitudes(system, amp)?.normalized())
        })
        .collect::<Result<Vec<_>>>()?;
    let q = commensurate_q(p, n as i64, kappa)?;
    Ok(FirstOrderReport {
        zeroth: deficits(system, &q, &tower)?,
        first: deficits(system, &q, &states)?,
        states,
    })
}

/// Modified Gram–Schmidt with one re-orthogonalization pass; vectors whose
/// residual norm drops below `drop` are discarded.
pub fn orthonormalize(states: &[StateVector], drop: f64) -> Result<Vec<StateVector>> {
    let mut basis: Vec<StateVector> = Vec::new();
    for st in states {
        let mut w = st.clone();
        for _ in 0..2 {
            for b in &basis {
                let c = b.inner(&w)?;
                w = w.combine(ONE, b, -c)?;
            }
        }
        let norm = w.norm();
        if norm >= drop {
            basis.push(w.scaled(C64::from(1.0 / norm)));
        }
    }
    Ok(basis)
}

/// GZ states `R̂(γ)|⇑⟩` over a γ-list, all degenerate at `E_GZ`.
#[derive(Debug, Clone)]
pub struct GeneralizedFamily {
    /// Ascending.
    pub gammas: Vec<f64>,
    pub states: Vec<StateVector>,
    pub energies: Vec<f64>,
    pub residuals: Vec<f64>,
    pub gz_energy: f64,
    /// Largest pairwise energy difference `ω_pm`.
    pub omega_max: f64,
    /// Gram–Schmidt basis; may exceed `rank` by vectors whose residual sits
    /// between the singular-value cutoff and [`DROP_TOL`].
    pub basis: Vec<StateVector>,
    /// Singular values of the family, descending.
    pub singular_values: Vec<f64>,
}

impl GeneralizedFamily {
    /// Numerical rank with the relative cutoff [`RANK_TOL`].
    pub fn rank(&self) -> usize {
        let top = self.singular_values.first().copied().unwrap_or(0.0);
        self.singular_values.iter().filter(|&&x| x > RANK_TOL * top).count()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

pub fn generalized_family(
    system: SpinSystem,
    q: &CommensurateQ,
    helicity: Helicity,
    gammas: &[f64],
) -> Result<GeneralizedFamily> {
    if let Some(g) = gammas.iter().find(|g| g.is_nan() || g.abs() >= 1.0) {
        return Err(Error::InvalidInput(format!("gamma {g} outside (-1, 1)")));
    }
    let mut gammas = gammas.to_vec();
    gammas.sort_by(f64::total_cmp);
    let h = gz_chain_terms(system.sites(), system.spin(), q)?;
    let rows: Vec<(StateVector, f64, f64)> = gammas
        .par_iter()
        .map(|&g| {
            let psi = gz_state(system, &ScarSpec::new(helicity, g, *q)?)?;
            let e = expectation_real(&h, &psi)?;
            let r = residual(&h, &psi)?;
            Ok((psi, e, r))
        })
        .collect::<Result<_>>()?;
    let energies: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let hi = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let states: Vec<StateVector> = rows.iter().map(|r| r.0.clone()).collect();
    let mut singular_values: Vec<f64> = if states.is_empty() {
        Vec::new()
    } else {
        DMatrix::from_fn(system.total_dim(), states.len(), |r, c| states[c].as_slice()[r])
            .singular_values()
            .iter()
            .copied()
            .collect()
    };
    singular_values.sort_by(|a, b| b.total_cmp(a));
    Ok(GeneralizedFamily {
        singular_values,
        basis: orthonormalize(&states, DROP_TOL)?,
        residuals: rows.iter().map(|r| r.2).collect(),
        omega_max: if energies.is_empty() { 0.0 } else { hi - lo },
        gz_energy: gz_energy(system.sites(), system.spin(), q),
        gammas,
        states,
        energies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scar::{chebyshev_grid, span_rank};
    use crate::spinops::total_sz;

    fn sys(s: f64, n: usize) -> SpinSystem {
        SpinSystem::new(s, n).unwrap()
    }

    #[test]
    fn tau_basics() {
        let system = sys(1.0, 3);
        let t0 = tau(system, 0.0, Helicity::Positive).unwrap();
        let ls = local_spin_matrices_2s(2);
        let total_minus = crate::spinops::site_sum(&ls.sm, &[ONE; 3], system).unwrap();
        assert!(t0.max_abs_diff(&total_minus).unwrap() == 0.0);

        let t = tau(system, 2.0 * PI / 3.0, Helicity::Negative).unwrap();
        let sz = total_sz(system);
        let c = sz.commutator(&t).unwrap();
        assert!(c.max_abs_diff(&t.scale(-ONE)).unwrap() <= 1e-13);
        let mut st = StateVector::all_up(system);
        for _ in 0..7 {
            st = t.apply(&st).unwrap();
        }
        assert_eq!(st.norm(), 0.0);
    }

    #[test]
    fn lambda_relations() {
        let system = sys(0.5, 5);
        for h in [Helicity::Positive, Helicity::Negative] {
            let q0 = 2.0 * PI / 5.0;
            let xxz = xxz_chain(system, q0).unwrap().to_operator();
            let t = tau(system, q0, h).unwrap();
            let l = lambda_op(system, q0, h).unwrap();
            assert!(xxz.commutator(&t).unwrap().max_abs_diff(&l).unwrap() <= 1e-11);
            assert!(t.commutator(&l).unwrap().max_abs() <= 1e-11);
            assert!(l.apply(&StateVector::all_up(system)).unwrap().norm() <= 1e-11);
        }
        assert_eq!(lambda_op(system, 0.0, Helicity::Positive).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn witness_on_degenerate_line() {
        for (s, n, p) in [(0.5, 5, 1), (1.0, 4, 1), (1.0, 5, 2)] {
            let w = sga_witness(sys(s, n), p, Helicity::Positive).unwrap();
            assert!(w.commutator_residuals.iter().all(|&r| r <= 1e-10));
            assert!(w.eigen_residuals.iter().all(|&r| r <= 1e-10));
            assert!(w.omega.abs() <= 1e-10);
        }
    }

    #[test]
    fn deformed_tau_circular_limit() {
        for (n, p) in [(5, 1), (6, 2), (7, 3)] {
            let system = sys(0.5, n);
            let q = commensurate_q(p, n as i64, 0.0).unwrap();
            let q0 = 2.0 * PI * p as f64 / n as f64;
            for h in [Helicity::Positive, Helicity::Negative] {
                let a = tau_double_prime(system, &q, h).unwrap();
                let b = tau(system, q0, h).unwrap();
                assert!(a.max_abs_diff(&b).unwrap() <= 1e-13);
            }
        }
    }

    #[test]
    fn deficits_shrink_like_kappa_squared() {
        let system = sys(0.5, 5);
        let reports: Vec<DeficitReport> = [0.1, 0.2, 0.4]
            .iter()
            .map(|&k| deformed_tower_deficits(system, 1, k, Helicity::Positive).unwrap())
            .collect();
        assert!(reports.windows(2).all(|w| w[0].max < w[1].max));
        assert!(deficit_slope(&reports).unwrap() >= 1.7);
        let zero = deformed_tower_deficits(system, 1, 0.0, Helicity::Positive).unwrap();
        assert!(zero.max <= 1e-12);
    }

    #[test]
    fn split_remainder_is_quartic() {
        let system = sys(0.5, 5);
        assert!(split_remainder(system, 1, 0.0).unwrap() <= 1e-14);
        let slope = remainder_slope(system, 1, &[0.05, 0.1, 0.2]).unwrap().unwrap();
        assert!(slope >= 3.5, "{slope}");
    }

    #[test]
    fn first_order_improves_on_bare_tower() {
        let system = sys(0.5, 4);
        let reps: Vec<FirstOrderReport> = [0.1, 0.2]
            .iter()
            .map(|&k| first_order_states(system, 1, k, Helicity::Positive).unwrap())
            .collect();
        for r in &reps {
            assert!(r.first.max < 0.1 * r.zeroth.max, "{:?} {:?}", r.first, r.zeroth);
        }
        // Bare deficits scale as κ⁴ in the norm squared, first order as κ⁸.
        let ratio0 = reps[1].zeroth.max / reps[0].zeroth.max;
        let ratio1 = reps[1].first.max / reps[0].first.max;
        assert!(ratio1 > ratio0);
    }

    #[test]
    fn family_matches_scar_module() {
        let system = sys(0.5, 4);
        let q = commensurate_q(1, 4, 0.5).unwrap();
        let single = generalized_family(system, &q, Helicity::Positive, &[0.3]).unwrap();
        let direct = gz_state(system, &ScarSpec::new(Helicity::Positive, 0.3, q).unwrap()).unwrap();
        assert!((single.states[0].fidelity(&direct).unwrap() - 1.0).abs() <= 1e-12);

        let n_grid = 24;
        for kappa in [0.0, 0.5] {
            let q = commensurate_q(1, 5, kappa).unwrap();
            let system = sys(0.5, 5);
            let fam = generalized_family(system, &q, Helicity::Positive, &chebyshev_grid(n_grid)).unwrap();
            assert!(fam.max_residual() <= 1e-10);
            assert!(fam.omega_max <= 1e-10);
            assert!(fam.energies.iter().all(|e| (e - fam.gz_energy).abs() <= 1e-10));
            let span = span_rank(system, 1, kappa, Helicity::Positive, Some(n_grid)).unwrap();
            assert_eq!(fam.rank(), span.rank);
            let k = fam.basis.len();
            assert!(k >= fam.rank());
            let gram = DMatrix::from_fn(k, k, |a, b| fam.basis[a].inner(&fam.basis[b]).unwrap());
            assert!((gram - DMatrix::identity(k, k)).iter().all(|z| z.norm() <= 1e-12));
        }
        assert!(generalized_family(system, &q, Helicity::Positive, &[1.0]).is_err());
    }
}
