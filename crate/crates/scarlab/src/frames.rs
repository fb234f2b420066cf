//! Reduction of a nearest-neighbour centrosymmetric spin-exchange (CSSE)
//! coupling to XYZ form by three successive frame rotations.
//!
//! The coupling matrix is `M = [[J1, J12, J13], [J12, J2, J23], [J13, J23, J3]]`
//! with bond energy `Σ_ab M_ab Ŝᵃ_n Ŝᵇ_{n+1}`. Substituting `Ŝ = R Ŝ'` gives
//! `M' = Rᵀ M R`. The first two rotations are `R = Rx(−ψ) Ry(−φ)`, chosen so
//! that `M'` has no `x'z'` or `y'z'` entries; a final `Rz(θ)` removes `x'y'`.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix2, Matrix3, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROOT_TOL: f64 = 1e-12;
const START_GRID: usize = 8;
const NEWTON_STEPS: usize = 200;
/// Two roots closer than this (after canonicalization) are the same root.
const ROOT_MERGE_TOL: f64 = 1e-7;

/// Symmetric exchange couplings of one CSSE bond.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsseCouplings {
    #[serde(rename = "J1")]
    pub j1: f64,
    #[serde(rename = "J2")]
    pub j2: f64,
    #[serde(rename = "J3")]
    pub j3: f64,
    #[serde(rename = "J12")]
    pub j12: f64,
    #[serde(rename = "J13")]
    pub j13: f64,
    #[serde(rename = "J23")]
    pub j23: f64,
}

impl CsseCouplings {
    pub fn new(j1: f64, j2: f64, j3: f64, j12: f64, j13: f64, j23: f64) -> Result<Self> {
        let c = Self {
            j1,
            j2,
            j3,
            j12,
            j13,
            j23,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn diagonal(j1: f64, j2: f64, j3: f64) -> Result<Self> {
        Self::new(j1, j2, j3, 0.0, 0.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.as_array();
        if all.iter().any(|j| !j.is_finite()) {
            return Err(Error::InvalidInput("coupling is not finite".into()));
        }
        if all.iter().all(|j| *j == 0.0) {
            return Err(Error::InvalidInput("all couplings are zero".into()));
        }
        Ok(())
    }

    fn as_array(&self) -> [f64; 6] {
        [self.j1, self.j2, self.j3, self.j12, self.j13, self.j23]
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.j1, self.j12, self.j13, //
            self.j12, self.j2, self.j23, //
            self.j13, self.j23, self.j3,
        )
    }
}

/// Couplings after the `(ψ, φ)` rotations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrimedCouplings {
    pub jx: f64,
    pub jy: f64,
    pub jz: f64,
    pub jxy: f64,
}

/// Output of [`xyz_reduction`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameSolution {
    pub psi: f64,
    pub phi: f64,
    pub theta: f64,
    pub primed: PrimedCouplings,
    /// `(Jx, Jy, Jz)` ordered `Jy ≥ Jx ≥ Jz`.
    pub xyz: (f64, f64, f64),
    /// Residual of the frame equations at `(ψ, φ)`.
    pub residual: f64,
    /// `axes[k]` is the column of the rotated frame that became axis `k`
    /// (`0 = x, 1 = y, 2 = z`) after relabeling.
    pub axes: [usize; 3],
    /// Every root of the frame equations that was found, canonical one first.
    pub roots: Vec<(f64, f64)>,
}

impl FrameSolution {
    /// Orthogonal matrix `R` with `Rᵀ M R = diag(Jx, Jy, Jz)`.
    pub fn rotation(&self) -> Matrix3<f64> {
        let r = rx(-self.psi) * ry(-self.phi) * rz(self.theta);
        Matrix3::from_columns(&[
            r.column(self.axes[0]).into_owned(),
            r.column(self.axes[1]).into_owned(),
            r.column(self.axes[2]).into_owned(),
        ])
    }
}

pub fn rx(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn ry(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rz(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Closed-form primed couplings at `(ψ, φ)`.
pub fn primed_couplings(c: &CsseCouplings, psi: f64, phi: f64) -> PrimedCouplings {
    let (sp, cp) = psi.sin_cos();
    let (sf, cf) = phi.sin_cos();
    let (s2p, c2p) = (2.0 * psi).sin_cos();
    let s2f = (2.0 * phi).sin();
    PrimedCouplings {
        jx: c.j1 * cf * cf
            + c.j2 * sf * sf * sp * sp
            + c.j3 * sf * sf * cp * cp
            + c.j12 * s2f * sp
            + c.j13 * s2f * cp
            + c.j23 * sf * sf * s2p,
        jy: c.j2 * cp * cp + c.j3 * sp * sp - c.j23 * s2p,
        jz: c.j1 * sf * sf + c.j2 * cf * cf * sp * sp + c.j3 * cf * cf * cp * cp - c.j12 * s2f * sp - c.j13 * s2f * cp
            + c.j23 * cf * cf * s2p,
        jxy: c.j12 * cf * cp - c.j13 * cf * sp + c.j23 * sf * c2p + 0.5 * (c.j2 - c.j3) * sf * s2p,
    }
}

/// The two frame equations at `(ψ, φ)`: the `y'z'` and `x'z'` entries of the
/// rotated coupling matrix.
pub fn frame_equations(c: &CsseCouplings, psi: f64, phi: f64) -> [f64; 2] {
    let (sp, cp) = psi.sin_cos();
    let (s2p, c2p) = (2.0 * psi).sin_cos();
    let (sf, cf) = phi.sin_cos();
    let (s2f, c2f) = (2.0 * phi).sin_cos();
    [
        (c.j13 * sp - c.j12 * cp) * sf + (0.5 * (c.j2 - c.j3) * s2p + c.j23 * c2p) * cf,
        0.5 * s2f * (-c.j1 + c.j2 * sp * sp + c.j3 * cp * cp)
            + (c.j12 * sp + c.j13 * cp) * c2f
            + 0.5 * c.j23 * s2p * s2f,
    ]
}

/// `max |frame_equations|`.
pub fn frame_residual(c: &CsseCouplings, psi: f64, phi: f64) -> f64 {
    let [a, b] = frame_equations(c, psi, phi);
    a.abs().max(b.abs())
}

/// Representative of a root in `[0, π)²`, using the symmetries
/// `(ψ, φ) ~ (ψ, φ + π) ~ (ψ + π, −φ)` of the frame equations.
fn canonical_root(psi: f64, phi: f64) -> (f64, f64) {
    let mut psi = psi.rem_euclid(2.0 * PI);
    let mut phi = phi;
    if psi >= PI {
        psi -= PI;
        phi = -phi;
    }
    let mut phi = phi.rem_euclid(PI);
    // Values that round up to π belong at 0.
    if PI - phi < 1e-13 {
        phi = 0.0;
    }
    if PI - psi < 1e-13 {
        psi = 0.0;
        phi = (-phi).rem_euclid(PI);
    }
    (psi, phi)
}

fn wrapped_distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    let d = |x: f64, y: f64| {
        let r = (x - y).rem_euclid(PI);
        r.min(PI - r)
    };
    d(a.0, b.0).max(d(a.1, b.1))
}

/// Damped Newton iteration with a central-difference Jacobian.
fn newton(c: &CsseCouplings, start: (f64, f64)) -> Option<(f64, f64)> {
    let f = |x: Vector2<f64>| Vector2::from(frame_equations(c, x[0], x[1]));
    let mut x = Vector2::new(start.0, start.1);
    let mut fx = f(x);
    let h = 1e-7;
    for _ in 0..NEWTON_STEPS {
        if fx.amax() <= ROOT_TOL * 1e-2 {
            break;
        }
        let col = |k: usize| {
            let mut e = Vector2::zeros();
            e[k] = h;
            (f(x + e) - f(x - e)) / (2.0 * h)
        };
        let jac = Matrix2::from_columns(&[col(0), col(1)]);
        let step = jac.lu().solve(&(-fx))?;
        if !step.iter().all(|s| s.is_finite()) {
            return None;
        }
        let mut lambda = 1.0;
        let mut accepted = false;
        while lambda > 1e-6 {
            let trial = x + step * lambda;
            let ft = f(trial);
            if ft.norm() < fx.norm() || ft.amax() <= ROOT_TOL * 1e-2 {
                x = trial;
                fx = ft;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (fx.amax() <= ROOT_TOL).then_some((x[0], x[1]))
}

/// All distinct roots of the frame equations in `[0, π)²`, smallest
/// `ψ² + φ²` first.
pub fn solve_frame_angles(c: &CsseCouplings) -> Result<Vec<(f64, f64)>> {
    c.validate()?;
    let starts: Vec<(f64, f64)> = (0..START_GRID * START_GRID)
        .map(|k| {
            let step = PI / START_GRID as f64;
            ((k / START_GRID) as f64 * step, (k % START_GRID) as f64 * step)
        })
        .collect();
    let mut found: Vec<(f64, f64)> = starts
        .par_iter()
        .filter_map(|&s| newton(c, s))
        .map(|(a, b)| canonical_root(a, b))
        .collect();
    found.sort_by(|a, b| {
        let ra = a.0 * a.0 + a.1 * a.1;
        let rb = b.0 * b.0 + b.1 * b.1;
        ra.total_cmp(&rb).then(a.0.total_cmp(&b.0))
    });
    let mut roots: Vec<(f64, f64)> = Vec::new();
    for r in found {
        if roots.iter().all(|q| wrapped_distance(*q, r) > ROOT_MERGE_TOL) {
            roots.push(r);
        }
    }
    if roots.is_empty() {
        return Err(Error::NoRootFound);
    }
    Ok(roots)
}

/// Full reduction: frame angles, the in-plane angle `θ`, and `(Jx, Jy, Jz)`
/// relabeled so that `Jy ≥ Jx ≥ Jz`.
pub fn xyz_reduction(c: &CsseCouplings) -> Result<FrameSolution> {
    let roots = solve_frame_angles(c)?;
    let (psi, phi) = roots[0];
    let primed = primed_couplings(c, psi, phi);
    let mut theta = 0.5 * (2.0 * primed.jxy).atan2(primed.jx - primed.jy);
    // Eigenvalues of the in-plane 2×2 block; θ is shifted by π/2 when the
    // rotation put the larger one on x.
    let mean = 0.5 * (primed.jx + primed.jy);
    let half_gap = 0.5 * ((primed.jx - primed.jy).powi(2) + 4.0 * primed.jxy.powi(2)).sqrt();
    let rot = |t: f64| {
        let r = rx(-psi) * ry(-phi) * rz(t);
        r.transpose() * c.matrix() * r
    };
    let mut d = rot(theta);
    if d[(0, 0)] > d[(1, 1)] {
        theta += FRAC_PI_2;
        d = rot(theta);
    }
    let (jx_in, jy_in) = (mean - half_gap, mean + half_gap);
    let closed_form_dev = (d[(0, 0)] - jx_in).abs().max((d[(1, 1)] - jy_in).abs());
    let off = d[(0, 1)].abs().max(d[(0, 2)].abs()).max(d[(1, 2)].abs());
    let scale = c.as_array().iter().fold(1.0f64, |m, j| m.max(j.abs()));
    if closed_form_dev > 1e-10 * scale || off > 1e-10 * scale {
        return Err(Error::Numerical(format!(
            "frame reduction left off-diagonal {off:e}, eigenvalue mismatch {closed_form_dev:e}"
        )));
    }
    // Relabel: largest → y, middle → x, smallest → z.
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| d[(b, b)].total_cmp(&d[(a, a)]));
    let axes = [order[1], order[0], order[2]];
    Ok(FrameSolution {
        psi,
        phi,
        theta,
        primed,
        xyz: (d[(axes[0], axes[0])], d[(axes[1], axes[1])], d[(axes[2], axes[2])]),
        residual: frame_residual(c, psi, phi),
        axes,
        roots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_couplings(rng: &mut impl Rng) -> CsseCouplings {
        let mut j = || rng.gen_range(-1.0..1.0);
        CsseCouplings::new(j(), j(), j(), j(), j(), j()).unwrap()
    }

    fn rotated(c: &CsseCouplings, psi: f64, phi: f64) -> Matrix3<f64> {
        let r = rx(-psi) * ry(-phi);
        r.transpose() * c.matrix() * r
    }

    #[test]
    fn closed_forms_match_matrix_conjugation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let c = random_couplings(&mut rng);
            let (psi, phi) = (rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
            let b = rotated(&c, psi, phi);
            let p = primed_couplings(&c, psi, phi);
            assert!((p.jx - b[(0, 0)]).abs() < 1e-14);
            assert!((p.jy - b[(1, 1)]).abs() < 1e-14);
            assert!((p.jz - b[(2, 2)]).abs() < 1e-14);
            assert!((p.jxy - b[(0, 1)]).abs() < 1e-14);
            let [e1, e2] = frame_equations(&c, psi, phi);
            assert!((e1 - b[(1, 2)]).abs() < 1e-14);
            assert!((e2 - b[(0, 2)]).abs() < 1e-14);
        }
    }

    #[test]
    fn identity_rotation_reads_off_couplings() {
        let c = CsseCouplings::new(0.3, -0.2, 0.9, 0.4, 0.1, -0.5).unwrap();
        let p = primed_couplings(&c, 0.0, 0.0);
        assert_eq!((p.jx, p.jy, p.jz, p.jxy), (0.3, -0.2, 0.9, 0.4));
    }

    #[test]
    fn diagonal_input_has_origin_root() {
        let c = CsseCouplings::diagonal(0.4, 1.0, -0.3).unwrap();
        let roots = solve_frame_angles(&c).unwrap();
        assert_eq!(roots[0], (0.0, 0.0));
        let sol = xyz_reduction(&c).unwrap();
        let (jx, jy, jz) = sol.xyz;
        assert!((jx - 0.4).abs() < 1e-15 && (jy - 1.0).abs() < 1e-15 && (jz + 0.3).abs() < 1e-15);
    }

    #[test]
    fn only_j23_root_is_analytic() {
        let (j2, j3, j23) = (0.7, -0.4, 0.35);
        let c = CsseCouplings::new(0.0, j2, j3, 0.0, 0.0, j23).unwrap();
        // With the rotation R = Rx(−ψ) the y'z' entry vanishes at
        // ψ = −½ arctan(2 J23 / (J2 − J3)).
        let psi = canonical_root(-0.5 * (2.0 * j23 / (j2 - j3)).atan(), 0.0);
        assert!(frame_residual(&c, psi.0, psi.1) < 1e-15);
        let roots = solve_frame_angles(&c).unwrap();
        assert!(roots.iter().any(|r| wrapped_distance(*r, psi) < 1e-9), "{roots:?}");
    }

    #[test]
    fn isotropic_input_is_trivially_reduced() {
        let c = CsseCouplings::diagonal(1.0, 1.0, 1.0).unwrap();
        let sol = xyz_reduction(&c).unwrap();
        assert_eq!(sol.xyz, (1.0, 1.0, 1.0));
    }

    #[test]
    fn invalid_couplings() {
        assert!(CsseCouplings::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(CsseCouplings::new(f64::NAN, 1.0, 0.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn json_field_names() {
        let c: CsseCouplings = serde_json::from_str(r#"{"J1":1,"J2":2,"J3":3,"J12":0.1,"J13":0.2,"J23":0.3}"#).unwrap();
        assert_eq!(c.j23, 0.3);
        assert!(serde_json::to_string(&c).unwrap().contains("\"J13\":0.2"));
    }

    #[test]
    fn random_reductions_match_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..20 {
            let c = random_couplings(&mut rng);
            let sol = xyz_reduction(&c).unwrap();
            for &(psi, phi) in &sol.roots {
                assert!(frame_residual(&c, psi, phi) <= 1e-12);
                assert!((0.0..PI).contains(&psi) && (0.0..PI).contains(&phi));
            }
            let mut eig: Vec<f64> = c.matrix().symmetric_eigenvalues().iter().copied().collect();
            eig.sort_by(f64::total_cmp);
            let (jx, jy, jz) = sol.xyz;
            assert!(jy >= jx && jx >= jz);
            assert!((jz - eig[0]).abs() <= 1e-10);
            assert!((jx - eig[1]).abs() <= 1e-10);
            assert!((jy - eig[2]).abs() <= 1e-10);
            let r = sol.rotation();
            let d = r.transpose() * c.matrix() * r;
            let expect = Matrix3::from_diagonal(&nalgebra::Vector3::new(jx, jy, jz));
            assert!((d - expect).amax() <= 1e-10);
        }
    }

    proptest! {
        #[test]
        fn trace_is_invariant(c in prop::array::uniform6(-1.0f64..1.0), psi in -4.0f64..4.0, phi in -4.0f64..4.0) {
            let c = CsseCouplings::new(c[0], c[1], c[2], c[3], c[4], c[5]).unwrap();
            let p = primed_couplings(&c, psi, phi);
            prop_assert!((p.jx + p.jy + p.jz - c.j1 - c.j2 - c.j3).abs() <= 1e-12);
        }

        #[test]
        fn composed_rotation_is_proper(psi in -7.0f64..7.0, phi in -7.0f64..7.0, theta in -7.0f64..7.0) {
            let r = rx(psi) * ry(phi) * rz(theta);
            prop_assert!((r.transpose() * r - Matrix3::identity()).amax() <= 1e-12);
            prop_assert!((r.determinant() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn theta_removes_in_plane_coupling(c in prop::array::uniform6(-1.0f64..1.0)) {
            let c = CsseCouplings::new(c[0], c[1], c[2], c[3], c[4], c[5]).unwrap();
            let sol = xyz_reduction(&c).unwrap();
            let r = rx(-sol.psi) * ry(-sol.phi) * rz(sol.theta);
            let d = r.transpose() * c.matrix() * r;
            prop_assert!(d[(0, 1)].abs() <= 1e-10);
        }
    }
}
