//! Jacobi elliptic functions, complete and incomplete integrals of the first
//! kind, and the inverse map from XYZ couplings to `(q, κ)`.
//!
//! Every public entry point takes the modulus `κ`, never the parameter `m = κ²`.

use std::f64::consts::{FRAC_PI_2, PI};

use num_integer::Integer;
use num_rational::Rational64;
use serde::Serialize;

use crate::error::{Error, Result};

/// Convergence threshold on the Landen/AGM sequences.
const AGM_TOL: f64 = 1e-16;
const AGM_MAX_STEPS: usize = 40;
/// Target absolute error of the adaptive quadrature for `F(φ, κ)`.
const QUAD_TOL: f64 = 1e-13;
const QUAD_MAX_DEPTH: u32 = 40;
/// `|cn|` below which `sc = sn/cn` is reported as a pole.
pub const SC_POLE_TOL: f64 = 1e-12;

/// Modulus `κ ∈ [0, 1)` with its complement and quarter period `K(κ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EllipticModulus {
    kappa: f64,
    kappa_prime: f64,
    quarter_period: f64,
}

impl EllipticModulus {
    pub fn new(kappa: f64) -> Result<Self> {
        if !kappa.is_finite() || !(0.0..1.0).contains(&kappa) {
            return Err(Error::ModulusOutOfRange(kappa));
        }
        let kappa_prime = ((1.0 - kappa) * (1.0 + kappa)).sqrt();
        let quarter_period = FRAC_PI_2 / agm(1.0, kappa_prime);
        Ok(Self {
            kappa,
            kappa_prime,
            quarter_period,
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn kappa_prime(&self) -> f64 {
        self.kappa_prime
    }

    /// `K(κ)`.
    pub fn quarter_period(&self) -> f64 {
        self.quarter_period
    }

    /// `4K(κ)`, the common period of sn and cn.
    pub fn period(&self) -> f64 {
        4.0 * self.quarter_period
    }

    /// `(sn, cn, dn)` at a real argument, reduced modulo `4K` first.
    pub fn jacobi(&self, u: f64) -> Jacobi {
        let period = self.period();
        let reduced = u - period * (u / period).round();
        landen(reduced, self.kappa, self.kappa_prime)
    }

    /// `(sn, cn, dn)` at `u = 4K·frac`, with the integer part of `frac`
    /// discarded exactly before any floating-point work.
    pub fn jacobi_at_fraction(&self, frac: Rational64) -> Jacobi {
        let mut r = frac - frac.floor();
        if r > Rational64::new(1, 2) {
            r -= 1;
        }
        let u = self.period() * (*r.numer() as f64 / *r.denom() as f64);
        landen(u, self.kappa, self.kappa_prime)
    }

    /// Continuous branch of `atan2(b·sn(u), a·cn(u))` at `u = 4K·frac`, with
    /// `a, b > 0`. The branch advances by exactly `2π` per period and equals
    /// the Jacobi amplitude `am(u)` for `a = b`.
    pub fn phase_angle(&self, frac: Rational64, a: f64, b: f64) -> f64 {
        let whole = frac.floor();
        let r = frac - whole;
        let r_f = *r.numer() as f64 / *r.denom() as f64;
        let j = self.jacobi_at_fraction(r);
        let principal = (b * j.sn).atan2(a * j.cn);
        // Within one period the branch stays within π/2 of the linear ramp 2πr.
        let target = 2.0 * PI * r_f;
        let in_period = principal + 2.0 * PI * ((target - principal) / (2.0 * PI)).round();
        in_period + 2.0 * PI * (*whole.numer() / *whole.denom()) as f64
    }

    /// Jacobi amplitude `am(4K·frac)` on its continuous branch.
    pub fn amplitude(&self, frac: Rational64) -> f64 {
        self.phase_angle(frac, 1.0, 1.0)
    }
}

/// Simultaneous Jacobi function values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Jacobi {
    pub sn: f64,
    pub cn: f64,
    pub dn: f64,
}

/// Argument together with its modulus and cached function values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EllipticPoint {
    pub u: f64,
    pub modulus: EllipticModulus,
    pub sn: f64,
    pub cn: f64,
    pub dn: f64,
}

impl EllipticPoint {
    pub fn new(u: f64, modulus: EllipticModulus) -> Self {
        let Jacobi { sn, cn, dn } = modulus.jacobi(u);
        Self { u, modulus, sn, cn, dn }
    }
}

/// `q = 4pK(κ)/denominator` with its exact rational tag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CommensurateQ {
    pub p: i64,
    pub denominator: i64,
    pub modulus: EllipticModulus,
    pub value: f64,
}

impl CommensurateQ {
    /// `q / 4K` as an exact fraction.
    pub fn fraction(&self) -> Rational64 {
        Rational64::new(self.p, self.denominator)
    }

    /// `(sn, cn, dn)` at `r·q`.
    pub fn jacobi_multiple(&self, r: i64) -> Jacobi {
        self.modulus.jacobi_at_fraction(self.fraction() * r)
    }

    /// True when `q` is an integer multiple of `K(κ)`, i.e. `denominator | 4p`.
    pub fn is_multiple_of_quarter_period(&self) -> bool {
        (4 * self.p).mod_floor(&self.denominator) == 0
    }

    pub fn kappa(&self) -> f64 {
        self.modulus.kappa()
    }
}

/// Arithmetic-geometric mean.
fn agm(mut a: f64, mut b: f64) -> f64 {
    for _ in 0..AGM_MAX_STEPS {
        if (a - b).abs() <= AGM_TOL * a {
            break;
        }
        let next = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = next;
    }
    0.5 * (a + b)
}

/// Descending Landen/AGM scheme with amplitude back-substitution.
fn landen(u: f64, kappa: f64, kappa_prime: f64) -> Jacobi {
    if kappa == 0.0 {
        return Jacobi {
            sn: u.sin(),
            cn: u.cos(),
            dn: 1.0,
        };
    }
    let mut a = [0.0f64; AGM_MAX_STEPS + 1];
    let mut c = [0.0f64; AGM_MAX_STEPS + 1];
    a[0] = 1.0;
    c[0] = kappa;
    let mut b = kappa_prime;
    let mut n = 0;
    while c[n].abs() > AGM_TOL && n < AGM_MAX_STEPS {
        a[n + 1] = 0.5 * (a[n] + b);
        c[n + 1] = 0.5 * (a[n] - b);
        b = (a[n] * b).sqrt();
        n += 1;
    }
    let mut phi = (1u64 << n) as f64 * a[n] * u;
    for i in (1..=n).rev() {
        phi = 0.5 * (phi + (c[i] / a[i] * phi.sin()).asin());
    }
    let sn = phi.sin();
    let cn = phi.cos();
    let dn = (1.0 - kappa * kappa * sn * sn).sqrt();
    Jacobi { sn, cn, dn }
}

/// `K(κ)` by the arithmetic-geometric mean.
pub fn complete_k(kappa: f64) -> Result<f64> {
    Ok(EllipticModulus::new(kappa)?.quarter_period())
}

/// `(sn, cn, dn)(u, κ)`.
pub fn jacobi(u: f64, kappa: f64) -> Result<Jacobi> {
    Ok(EllipticModulus::new(kappa)?.jacobi(u))
}

/// `sc(u, κ) = sn/cn`.
pub fn jacobi_sc(u: f64, kappa: f64) -> Result<f64> {
    let j = jacobi(u, kappa)?;
    if j.cn.abs() < SC_POLE_TOL {
        return Err(Error::PoleAtQuarterPeriod(u));
    }
    Ok(j.sn / j.cn)
}

/// Incomplete integral of the first kind `F(φ, κ) = ∫₀^φ dθ / √(1 − κ² sin²θ)`.
pub fn incomplete_f(phi: f64, kappa: f64) -> Result<f64> {
    let modulus = EllipticModulus::new(kappa)?;
    if !phi.is_finite() {
        return Err(Error::InvalidInput(format!("amplitude {phi} is not finite")));
    }
    // F(φ + mπ) = F(φ) + 2mK.
    let m = (phi / PI).round();
    let r = phi - m * PI;
    let k2 = kappa * kappa;
    let f = |t: f64| 1.0 / (1.0 - k2 * t.sin().powi(2)).sqrt();
    Ok(2.0 * m * modulus.quarter_period() + adaptive_gauss_legendre(&f, 0.0, r))
}

// 10-point Gauss-Legendre nodes and weights on [-1, 1].
const GL_NODES: [f64; 5] = [
    0.148_874_338_981_631_2,
    0.433_395_394_129_247_2,
    0.679_409_568_299_024_4,
    0.865_063_366_688_984_5,
    0.973_906_528_517_171_7,
];
const GL_WEIGHTS: [f64; 5] = [
    0.295_524_224_714_752_9,
    0.269_266_719_309_996_4,
    0.219_086_362_515_982,
    0.149_451_349_150_580_6,
    0.066_671_344_308_688_1,
];

fn gauss_legendre(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
        acc += w * (f(mid + half * x) + f(mid - half * x));
    }
    acc * half
}

fn adaptive_gauss_legendre(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    fn recurse(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let mid = 0.5 * (a + b);
        let left = gauss_legendre(f, a, mid);
        let right = gauss_legendre(f, mid, b);
        if depth >= QUAD_MAX_DEPTH || (left + right - whole).abs() <= tol {
            return left + right;
        }
        recurse(f, a, mid, left, 0.5 * tol, depth + 1) + recurse(f, mid, b, right, 0.5 * tol, depth + 1)
    }
    if a == b {
        return 0.0;
    }
    recurse(f, a, b, gauss_legendre(f, a, b), QUAD_TOL, 0)
}

/// Inverts `Jx/Jy = dn(q, κ)`, `Jz/Jy = cn(q, κ)` for `Jy ≥ Jx > Jz`, `Jy > 0`.
pub fn solve_q_kappa(jx: f64, jy: f64, jz: f64) -> Result<(f64, EllipticModulus)> {
    if !(jy > 0.0 && jy >= jx && jx > jz) {
        return Err(Error::OrderingViolated { jx, jy, jz });
    }
    let kappa2 = (jy * jy - jx * jx) / (jy * jy - jz * jz);
    if !(0.0..1.0).contains(&kappa2) {
        return Err(Error::ModulusOutOfRange(kappa2.max(0.0).sqrt()));
    }
    let modulus = EllipticModulus::new(kappa2.sqrt())?;
    let amplitude = (jz / jy).clamp(-1.0, 1.0).acos();
    let q = incomplete_f(amplitude, modulus.kappa())?;
    let j = modulus.jacobi(q);
    let dev = (j.dn - jx / jy).abs().max((j.cn - jz / jy).abs());
    if dev > 1e-12 {
        return Err(Error::Numerical(format!(
            "solve_q_kappa round trip deviates by {dev:e}"
        )));
    }
    Ok((q, modulus))
}

/// `q = 4pK(κ)/denominator` with its rational tag.
pub fn commensurate_q(p: i64, denominator: i64, kappa: f64) -> Result<CommensurateQ> {
    if denominator < 1 {
        return Err(Error::InvalidInput(format!(
            "denominator must be >= 1, got {denominator}"
        )));
    }
    let modulus = EllipticModulus::new(kappa)?;
    Ok(CommensurateQ {
        p,
        denominator,
        modulus,
        value: modulus.period() * p as f64 / denominator as f64,
    })
}
