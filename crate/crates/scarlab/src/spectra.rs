//! Dense exact diagonalization, degeneracy counting with a gap audit,
//! momentum-sector reduction and degeneracy scans.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::elliptic::commensurate_q;
use crate::error::{Error, Result};
use crate::hamiltonian::xyz_chain_terms;
use crate::scar::gz_energy;
use crate::spinops::{translate_index, translation_operator, LinearOperator, ManyBodyOperator, C64, ZERO};

/// Largest dimension diagonalized with eigenvectors.
pub const VECTOR_CAP: usize = 20_000;
/// Largest dimension diagonalized for eigenvalues only.
pub const VALUES_CAP: usize = 60_000;

/// Ascending eigenvalues, with eigenvectors as columns when requested.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: Option<DMatrix<C64>>,
}

fn sorted_pairs(values: Vec<f64>, vectors: Option<DMatrix<C64>>) -> Spectrum {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let sorted = order.iter().map(|&k| values[k]).collect();
    let vectors = vectors.map(|v| DMatrix::from_fn(v.nrows(), order.len(), |r, c| v[(r, order[c])]));
    Spectrum {
        values: sorted,
        vectors,
    }
}

/// Hermitian eigendecomposition; the real symmetric path is taken when every
/// entry is real.
pub fn full_spectrum(h: &ManyBodyOperator, vectors: bool) -> Result<Spectrum> {
    let dim = h.system().total_dim();
    let cap = if vectors { VECTOR_CAP } else { VALUES_CAP };
    if dim > cap {
        return Err(Error::DimensionCap { dim, cap });
    }
    if !h.hermitian_flag() {
        return Err(Error::InvalidInput("full_spectrum needs a Hermitian operator".into()));
    }
    Ok(dense_spectrum(h, vectors))
}

fn dense_spectrum(h: &ManyBodyOperator, vectors: bool) -> Spectrum {
    if let Some(real) = h.to_dense_real() {
        if vectors {
            let eig = SymmetricEigen::new(real);
            let v = eig.eigenvectors.map(C64::from);
            sorted_pairs(eig.eigenvalues.iter().copied().collect(), Some(v))
        } else {
            sorted_pairs(real.symmetric_eigenvalues().iter().copied().collect(), None)
        }
    } else {
        hermitian_spectrum(h.to_dense(), vectors)
    }
}

fn hermitian_spectrum(m: DMatrix<C64>, vectors: bool) -> Spectrum {
    if vectors {
        let eig = SymmetricEigen::new(m);
        sorted_pairs(eig.eigenvalues.iter().copied().collect(), Some(eig.eigenvectors))
    } else {
        sorted_pairs(m.symmetric_eigenvalues().iter().copied().collect(), None)
    }
}

/// Eigenvalue cluster around a target energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Degeneracy {
    pub count: usize,
    pub tol: f64,
    /// Distance from the target to the closest eigenvalue outside the cluster.
    pub gap: f64,
    /// Gap audit: `gap ≥ 10·tol`.
    pub resolved: bool,
}

/// Default clustering tolerance `1e-8 · max(1, spectral range)`.
pub fn default_tolerance(values: &[f64]) -> f64 {
    let range = match (values.first(), values.last()) {
        (Some(lo), Some(hi)) => hi - lo,
        _ => 0.0,
    };
    1e-8 * range.max(1.0)
}

/// Number of eigenvalues within `tol` of `energy`, with the gap audit.
pub fn degeneracy_at(values: &[f64], energy: f64, tol: Option<f64>) -> Degeneracy {
    let tol = tol.unwrap_or_else(|| default_tolerance(values));
    let mut count = 0;
    let mut gap = f64::INFINITY;
    for &v in values {
        let d = (v - energy).abs();
        if d <= tol {
            count += 1;
        } else {
            gap = gap.min(d);
        }
    }
    Degeneracy {
        count,
        tol,
        gap,
        resolved: gap >= 10.0 * tol,
    }
}

/// Orthonormal basis (columns) of the eigenspace within `tol` of `energy`.
pub fn eigenspace(spectrum: &Spectrum, energy: f64, tol: f64) -> Result<DMatrix<C64>> {
    let v = spectrum
        .vectors
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("spectrum was computed without eigenvectors".into()))?;
    let cols: Vec<usize> = (0..spectrum.values.len())
        .filter(|&k| (spectrum.values[k] - energy).abs() <= tol)
        .collect();
    Ok(DMatrix::from_fn(v.nrows(), cols.len(), |r, c| v[(r, cols[c])]))
}

/// Spectrum of one momentum block `e^{2πik/N}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectorSpectrum {
    pub momentum: usize,
    pub dim: usize,
    pub values: Vec<f64>,
}

/// Translation orbits: representative, orbit length and, per basis state,
/// `(orbit index, shift j)` with `state = T^j rep`.
struct Orbits {
    reps: Vec<usize>,
    lengths: Vec<usize>,
    position: Vec<(usize, usize)>,
}

fn orbits(h: &ManyBodyOperator) -> Orbits {
    let system = h.system();
    let dim = system.total_dim();
    let mut position = vec![(usize::MAX, 0); dim];
    let mut reps = Vec::new();
    let mut lengths = Vec::new();
    for i in 0..dim {
        if position[i].0 != usize::MAX {
            continue;
        }
        let o = reps.len();
        let mut t = i;
        let mut j = 0;
        loop {
            position[t] = (o, j);
            t = translate_index(system, t);
            j += 1;
            if t == i {
                break;
            }
        }
        reps.push(i);
        lengths.push(j);
    }
    Orbits {
        reps,
        lengths,
        position,
    }
}

/// Block-diagonalizes a translation-invariant chain Hamiltonian by momentum.
pub fn translation_sectors(h: &ManyBodyOperator) -> Result<Vec<SectorSpectrum>> {
    let system = *h.system();
    let n = system.sites();
    let t = translation_operator(system);
    let dev = h.mul(&t)?.max_abs_diff(&t.mul(h)?)?;
    if dev > 1e-12 {
        return Err(Error::NotTranslationInvariant(dev));
    }
    let orb = orbits(h);
    let phase = |k: usize, j: usize| C64::from_polar(1.0, -2.0 * PI * (k * j) as f64 / n as f64);
    let sectors: Vec<SectorSpectrum> = (0..n)
        .into_par_iter()
        .map(|k| {
            // Orbits admitting momentum k: e^{−2πi k R / N} = 1.
            let allowed: Vec<usize> = (0..orb.reps.len()).filter(|&o| (k * orb.lengths[o]) % n == 0).collect();
            let slot: HashMap<usize, usize> = allowed.iter().enumerate().map(|(a, &o)| (o, a)).collect();
            let d = allowed.len();
            let mut block = DMatrix::from_element(d, d, ZERO);
            for (b, &ob) in allowed.iter().enumerate() {
                let len_b = orb.lengths[ob];
                let norm_b = (len_b as f64).sqrt();
                let mut w: HashMap<usize, C64> = HashMap::new();
                let mut s = orb.reps[ob];
                for j in 0..len_b {
                    let c = phase(k, j) / norm_b;
                    // Column s of a Hermitian H is the conjugate of row s.
                    for (r, v) in h.row(s) {
                        *w.entry(r).or_insert(ZERO) += v.conj() * c;
                    }
                    s = translate_index(&system, s);
                }
                for (r, v) in w {
                    let (o, j) = orb.position[r];
                    if let Some(&a) = slot.get(&o) {
                        let c = phase(k, j) / (orb.lengths[o] as f64).sqrt();
                        block[(a, b)] += c.conj() * v;
                    }
                }
            }
            let values = if d == 0 {
                Vec::new()
            } else {
                let herm = (&block + block.adjoint()) * C64::from(0.5);
                hermitian_spectrum(herm, false).values
            };
            SectorSpectrum {
                momentum: k,
                dim: d,
                values,
            }
        })
        .collect();
    Ok(sectors)
}

/// One `(S, N, p)` point of a degeneracy scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    pub s: f64,
    pub n: usize,
    pub p: i64,
    pub kappa: f64,
    pub energy: f64,
    pub count: usize,
    pub expected: usize,
    /// `q` is an integer multiple of `K(κ)`.
    pub special_q: bool,
    pub resolved: bool,
    pub error: Option<String>,
}

impl ScanRow {
    /// `ok`, or `|`-joined tokens among `special_q`, `deviates`,
    /// `unresolved`, `error`.
    pub fn flag(&self) -> String {
        if self.error.is_some() {
            return "error".into();
        }
        let mut tokens = Vec::new();
        if self.special_q {
            tokens.push("special_q");
        }
        if self.count != self.expected {
            tokens.push("deviates");
        }
        if !self.resolved {
            tokens.push("unresolved");
        }
        if tokens.is_empty() {
            "ok".into()
        } else {
            tokens.join("|")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegeneracyScan {
    pub rows: Vec<ScanRow>,
    /// Relative clustering tolerance (times `max(1, range)`).
    pub relative_tolerance: f64,
    pub gap_factor: f64,
}

pub const CSV_HEADER: [&str; 8] = ["S", "N", "p", "kappa", "E", "count", "expected", "flag"];

fn scan_row(s: f64, n: usize, p: i64, kappa: f64) -> ScanRow {
    let expected = (4.0 * n as f64 * s).round() as usize;
    let mut row = ScanRow {
        s,
        n,
        p,
        kappa,
        energy: f64::NAN,
        count: 0,
        expected,
        special_q: false,
        resolved: false,
        error: None,
    };
    let result = (|| -> Result<()> {
        let q = commensurate_q(p, n as i64, kappa)?;
        row.special_q = q.is_multiple_of_quarter_period();
        let jac = q.jacobi_multiple(1);
        let h = xyz_chain_terms(n, s, jac.dn, 1.0, jac.cn, true)?.to_operator();
        row.energy = gz_energy(n, s, &q);
        let spec = full_spectrum(&h, false)?;
        let d = degeneracy_at(&spec.values, row.energy, None);
        row.count = d.count;
        row.resolved = d.resolved;
        Ok(())
    })();
    if let Err(e) = result {
        row.error = Some(e.to_string());
    }
    row
}

/// Degeneracy at `E_GZ` for every `(S, N, p)`; rows run in parallel and a
/// failing row records its error.
pub fn scan_degeneracy(spins: &[f64], sizes: &[usize], kappa: f64, ps: &[i64]) -> DegeneracyScan {
    let points: Vec<(f64, usize, i64)> = spins
        .iter()
        .flat_map(|&s| sizes.iter().flat_map(move |&n| ps.iter().map(move |&p| (s, n, p))))
        .collect();
    let rows = points.par_iter().map(|&(s, n, p)| scan_row(s, n, p, kappa)).collect();
    DegeneracyScan {
        rows,
        relative_tolerance: 1e-8,
        gap_factor: 10.0,
    }
}

impl DegeneracyScan {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let io = |e: csv::Error| Error::InvalidInput(format!("writing CSV: {e}"));
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER).map_err(io)?;
        for r in &self.rows {
            let energy = if r.energy.is_finite() {
                format!("{:.12}", r.energy)
            } else {
                String::new()
            };
            w.write_record([
                r.s.to_string(),
                r.n.to_string(),
                r.p.to_string(),
                r.kappa.to_string(),
                energy,
                r.count.to_string(),
                r.expected.to_string(),
                r.flag(),
            ])
            .map_err(io)?;
        }
        w.flush()
            .map_err(|e| Error::InvalidInput(format!("writing CSV: {e}")))?;
        Ok(())
    }

    /// Least-squares slope of `count` against `N` for each spin, over rows
    /// that are neither special nor failed; `None` with fewer than two sizes.
    pub fn slopes(&self) -> Vec<(f64, Option<f64>)> {
        let mut spins: Vec<f64> = self.rows.iter().map(|r| r.s).collect();
        spins.sort_by(f64::total_cmp);
        spins.dedup();
        spins
            .into_iter()
            .map(|s| {
                let pts: Vec<(f64, f64)> = self
                    .rows
                    .iter()
                    .filter(|r| r.s == s && !r.special_q && r.error.is_none())
                    .map(|r| (r.n as f64, r.count as f64))
                    .collect();
                (s, least_squares_slope(&pts))
            })
            .collect()
    }
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> Option<f64> {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if pts.len() < 2 || sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{build_xyz_chain, rotated_hamiltonian};
    use crate::scar::{gz_state, Helicity, ScarSpec};
    use crate::spinops::{SiteAngles, SpinSystem};

    #[test]
    fn diagonal_operator() {
        let system = SpinSystem::new(0.5, 2).unwrap();
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, -1.0, 2.0, 0.5]).map(C64::from));
        let h = ManyBodyOperator::from_dense(system, &m, true).unwrap();
        assert_eq!(full_spectrum(&h, false).unwrap().values, vec![-1.0, 0.5, 2.0, 3.0]);
    }

    #[test]
    fn reconstruction_and_complex_path() {
        let h = build_xyz_chain(4, 0.5, 0.3, 1.0, -0.7, true).unwrap();
        let angles = SiteAngles::new(vec![0.3, 1.2, 2.0, 0.1], vec![0.4, -1.0, 2.5, 0.0]).unwrap();
        let r = rotated_hamiltonian(&h, &angles).unwrap();
        assert!(r.to_dense_real().is_none());
        for op in [&h, &r] {
            let sp = full_spectrum(op, true).unwrap();
            let v = sp.vectors.as_ref().unwrap();
            let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(sp.values.clone()).map(C64::from));
            let rec = v * lam * v.adjoint();
            let diff = (rec - op.to_dense()).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(diff <= 1e-9);
            assert!(sp.values.windows(2).all(|w| w[0] <= w[1]));
        }
        let a = full_spectrum(&h, false).unwrap().values;
        let b = full_spectrum(&r, false).unwrap().values;
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-10);
        }
    }

    #[test]
    fn degeneracy_is_shift_invariant() {
        let vals = vec![-1.0, 0.0, 0.0, 1e-12, 2.0];
        let d = degeneracy_at(&vals, 0.0, None);
        assert_eq!(d.count, 3);
        assert!(d.resolved);
        let shifted: Vec<f64> = vals.iter().map(|v| v + 5.0).collect();
        assert_eq!(degeneracy_at(&shifted, 5.0, None).count, 3);
        let crowded = vec![0.0, 5e-8];
        assert!(!degeneracy_at(&crowded, 0.0, Some(1e-8)).resolved);
    }

    #[test]
    fn sectors_reproduce_full_spectrum() {
        let q = commensurate_q(1, 5, 0.8).unwrap();
        let jac = q.jacobi_multiple(1);
        let h = build_xyz_chain(5, 1.0, jac.dn, 1.0, jac.cn, true).unwrap();
        let sectors = translation_sectors(&h).unwrap();
        assert_eq!(sectors.iter().map(|s| s.dim).sum::<usize>(), 243);
        let mut union: Vec<f64> = sectors.iter().flat_map(|s| s.values.clone()).collect();
        union.sort_by(f64::total_cmp);
        let full = full_spectrum(&h, false).unwrap().values;
        for (a, b) in union.iter().zip(&full) {
            assert!((a - b).abs() <= 1e-9);
        }
        let e = gz_energy(5, 1.0, &q);
        let per: Vec<usize> = sectors
            .iter()
            .map(|s| degeneracy_at(&s.values, e, Some(1e-8)).count)
            .collect();
        assert_eq!(per.iter().sum::<usize>(), 20);
        assert!(per.iter().all(|&c| c < 20));

        let open = build_xyz_chain(5, 1.0, 0.5, 1.0, 0.2, false).unwrap();
        assert!(matches!(
            translation_sectors(&open),
            Err(Error::NotTranslationInvariant(_))
        ));
    }

    #[test]
    fn gz_weight_inside_cluster() {
        let n = 5;
        let spec = ScarSpec::chain(n, 1, 0.8, 0.5, Helicity::Positive).unwrap();
        let jac = spec.q.jacobi_multiple(1);
        let h = build_xyz_chain(n, 1.0, jac.dn, 1.0, jac.cn, true).unwrap();
        let sp = full_spectrum(&h, true).unwrap();
        let e = gz_energy(n, 1.0, &spec.q);
        let basis = eigenspace(&sp, e, default_tolerance(&sp.values)).unwrap();
        assert_eq!(basis.ncols(), 20);
        let psi = gz_state(*h.system(), &spec).unwrap();
        let proj = basis.adjoint() * psi.amplitudes();
        assert!(proj.norm_squared() >= 1.0 - 1e-10);
    }

    #[test]
    fn small_scan_and_csv() {
        let scan = scan_degeneracy(&[1.0], &[5, 6], 0.8, &[1]);
        assert_eq!(scan.rows.iter().map(|r| r.count).collect::<Vec<_>>(), vec![20, 24]);
        assert!(scan.rows.iter().all(|r| r.flag() == "ok"));
        let slope = scan.slopes()[0].1.unwrap();
        assert!((slope - 4.0).abs() < 1e-12);
        let special = scan_degeneracy(&[0.5], &[4], 0.8, &[1]);
        assert!(special.rows[0].special_q);
        let mut buf = Vec::new();
        scan.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("S,N,p,kappa,E,count,expected,flag\n"));
        assert_eq!(text.lines().count(), 3);
        let bad = scan_degeneracy(&[0.7], &[5], 0.8, &[1]);
        assert_eq!(bad.rows[0].flag(), "error");
    }
}
