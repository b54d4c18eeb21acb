//! Angular-momentum arithmetic: ladder coefficients, stretched Clebsch-Gordan
//! coefficients, the ladder-inverse sum and binomial moments.

mod factorial;
mod halfint;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::ToPrimitive;

pub(crate) use factorial::log_binomial_ratio;
pub use factorial::{binomial_big, ln_factorial, log_binomial};
pub use halfint::HalfInt;

use crate::error::{Error, Result};

/// Arbitrary-precision nonnegative integer.
pub type BigUInt = BigUint;

/// Largest `2J` for which [`stretched_cg`] takes the exact-rational path.
pub const EXACT_CG_MAX_TWICE_J: i64 = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ladder {
    Plus,
    Minus,
}

fn check_projection(j: HalfInt, m: HalfInt) -> Result<()> {
    if j.is_negative() {
        return Err(Error::domain(format!("negative angular momentum {j}")));
    }
    if m.abs() > j {
        return Err(Error::domain(format!("|M| > J for J={j}, M={m}")));
    }
    if !(j - m).is_integer() {
        return Err(Error::domain(format!(
            "J - M is not an integer for J={j}, M={m}"
        )));
    }
    Ok(())
}

/// `c±_M = sqrt((J ∓ M)(J ± M + 1))`.
pub fn ladder_coeff(j: HalfInt, m: HalfInt, sign: Ladder) -> Result<f64> {
    check_projection(j, m)?;
    // (2J ∓ 2M)(2J ± 2M + 2) / 4, all in twice-units
    let (tj, tm) = (j.twice(), m.twice());
    let prod = match sign {
        Ladder::Plus => (tj - tm) * (tj + tm + 2),
        Ladder::Minus => (tj + tm) * (tj - tm + 2),
    };
    Ok((prod as f64).sqrt() / 2.0)
}

/// Integer arguments of the three binomials in the stretched CG formula, or
/// `None` when the coefficient vanishes.
struct StretchedArgs {
    n1: u64,
    k1: u64,
    n2: u64,
    k2: u64,
    n: u64,
    k: u64,
}

fn stretched_args(
    j: HalfInt,
    m: HalfInt,
    j1: HalfInt,
    m1: HalfInt,
) -> Result<Option<StretchedArgs>> {
    check_projection(j, m)?;
    if j1.is_negative() || j1 > j {
        return Err(Error::domain(format!(
            "need 0 <= j1 <= J, got j1={j1}, J={j}"
        )));
    }
    check_projection(j1, m1)?;
    let j2 = j - j1;
    let m2 = m - m1;
    if m2.abs() > j2 {
        return Ok(None);
    }
    let int = |h: HalfInt| h.to_integer().expect("parity checked above") as u64;
    Ok(Some(StretchedArgs {
        n1: j1.twice() as u64,
        k1: int(j1 + m1),
        n2: j2.twice() as u64,
        k2: int(j2 + m2),
        n: j.twice() as u64,
        k: int(j + m),
    }))
}

/// Coupling coefficient `<j1 m1; j2 M-m1 | J M>` for the stretched case
/// `J = j1 + j2`:
///
/// ```text
/// sqrt( C(2j1, j1+m1) C(2J-2j1, J-j1+M-m1) / C(2J, J+M) )
/// ```
///
/// Uses exact rational arithmetic for `2J <= 400` and log-factorials above.
/// Returns 0 when `|M - m1| > J - j1`.
pub fn stretched_cg(j: HalfInt, m: HalfInt, j1: HalfInt, m1: HalfInt) -> Result<f64> {
    if j.twice() <= EXACT_CG_MAX_TWICE_J {
        stretched_cg_exact(j, m, j1, m1)
    } else {
        stretched_cg_log(j, m, j1, m1)
    }
}

/// Exact-rational evaluation of [`stretched_cg`].
pub fn stretched_cg_exact(j: HalfInt, m: HalfInt, j1: HalfInt, m1: HalfInt) -> Result<f64> {
    let Some(a) = stretched_args(j, m, j1, m1)? else {
        return Ok(0.0);
    };
    let num = binomial_big(a.n1, a.k1) * binomial_big(a.n2, a.k2);
    let den = binomial_big(a.n, a.k);
    let ratio = BigRational::new(BigInt::from(num), BigInt::from(den));
    let x = ratio
        .to_f64()
        .ok_or_else(|| Error::Numerical("CG ratio not representable".into()))?;
    Ok(x.sqrt())
}

/// Log-factorial evaluation of [`stretched_cg`]; valid for any `J`.
pub fn stretched_cg_log(j: HalfInt, m: HalfInt, j1: HalfInt, m1: HalfInt) -> Result<f64> {
    let Some(a) = stretched_args(j, m, j1, m1)? else {
        return Ok(0.0);
    };
    let small = log_binomial(a.n1 as i64, a.k1 as i64)?;
    let ratio = log_binomial_ratio(a.n2, a.k2, a.n, a.k);
    Ok((0.5 * (small + ratio)).exp())
}

/// `C(n, m) = Σ_{M=n}^{m-1} 1 / c+_M` on the spin-`J` ladder.
pub fn ladder_inverse_sum(j: HalfInt, n: HalfInt, m: HalfInt) -> Result<f64> {
    check_projection(j, n)?;
    if m < n {
        return Err(Error::domain(format!("need n <= m, got n={n}, m={m}")));
    }
    if m > j {
        return Err(Error::domain(format!(
            "summand c+_{} vanishes for J={j}",
            m - HalfInt::ONE
        )));
    }
    check_projection(j, m)?;
    let mut sum = 0.0;
    let mut k = n;
    while k < m {
        sum += 1.0 / ladder_coeff(j, k, Ladder::Plus)?;
        k += HalfInt::ONE;
    }
    Ok(sum)
}

fn moment_order(j1: HalfInt, p: u32) -> Result<u64> {
    if j1.is_negative() {
        return Err(Error::domain(format!("negative j1 = {j1}")));
    }
    if p > 4 {
        return Err(Error::domain(format!("moment order {p} > 4")));
    }
    Ok(j1.twice() as u64)
}

/// `Σ_{r=0}^{2j1} C(2j1, r) r^p`, summed exactly.
pub fn binomial_moment(j1: HalfInt, p: u32) -> Result<BigUInt> {
    let n = moment_order(j1, p)?;
    let mut acc = BigUint::ZERO;
    let mut c = BigUint::from(1u32);
    for r in 0..=n {
        if r > 0 {
            c *= n - r + 1;
            c /= r;
        }
        acc += &c * BigUint::from(r).pow(p);
    }
    Ok(acc)
}

/// Closed forms of [`binomial_moment`], with `n = 2j1`:
///
/// | p | value |
/// |---|-------|
/// | 0 | `2^n` |
/// | 1 | `n 2^(n-1)` |
/// | 2 | `n(n+1) 2^(n-2)` |
/// | 3 | `n²(n+3) 2^(n-3)` |
/// | 4 | `n(n+1)(n²+5n-2) 2^(n-4)` |
pub fn binomial_moment_closed_form(j1: HalfInt, p: u32) -> Result<BigUInt> {
    let n = moment_order(j1, p)?;
    let nb = BigInt::from(n);
    let one = BigInt::from(1);
    let poly: BigInt = match p {
        0 => one,
        1 => nb.clone(),
        2 => &nb * (&nb + 1),
        3 => &nb * &nb * (&nb + 3),
        _ => &nb * (&nb + 1) * (&nb * &nb + 5 * &nb - 2),
    };
    let scaled = (poly << n) >> p;
    Ok(scaled
        .to_biguint()
        .expect("moment polynomials are nonnegative for n >= 0"))
}
