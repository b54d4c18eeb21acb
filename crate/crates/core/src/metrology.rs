//! Quantum Fisher information of erased probe states, fidelity closed forms,
//! the QFI-loss bound, and phase estimators.
//!
//! Convention: `a_m = C^{J,M}_{j1,m; j2,M−m}` and `b_m = C^{J,−M}_{j1,m; j2,−M−m}`,
//! both evaluated with [`stretched_cg`].

use num_complex::Complex64;
use rand_distr::{Binomial, Distribution};
use serde::Serialize;

use crate::angmom::{stretched_cg, HalfInt};
use crate::channels::seeded_rng;
use crate::codes::{erased_pair_fidelity, inaccuracy_erasure, CodeSpec, ErasurePath};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::statevec::{dicke_state, evolve_phase, probe_state, QuditRegister};

/// Eigenvalues at or below this count as the kernel of `ρ`.
pub const EIGEN_CUTOFF: f64 = 1e-12;

/// `|sin 2Mθ|` below this makes an estimator singular.
pub const SINGULARITY_TOL: f64 = 1e-8;

/// Monte Carlo repetitions used for the empirical `Δθ`.
pub const MC_REPS: usize = 256;

/// `Σ_{λ_m+λ_m'>0} 2|⟨m|∂ρ|m'⟩|² / (λ_m + λ_m')`, kernel cross terms included.
pub fn qfi_sld(rho: &CMat, drho: &CMat) -> Result<f64> {
    if rho.shape() != drho.shape() || rho.nrows() != rho.ncols() {
        return Err(Error::DimensionMismatch {
            expected: rho.nrows(),
            got: drho.nrows(),
        });
    }
    for m in [rho, drho] {
        let h = linalg::hermiticity_deviation(m);
        if h > 1e-10 {
            return Err(Error::NotHermitian(h));
        }
    }
    let tr = linalg::trace(drho).norm();
    if tr > 1e-10 {
        return Err(Error::domain(format!("∂ρ has trace {tr:e}, expected 0")));
    }
    let (vals, vecs) = linalg::eigh(rho);
    let d = vecs.adjoint() * drho * &vecs;
    let lam: Vec<f64> = vals
        .iter()
        .map(|&v| if v > EIGEN_CUTOFF { v } else { 0.0 })
        .collect();
    let mut q = 0.0;
    for i in 0..lam.len() {
        for j in 0..lam.len() {
            let den = lam[i] + lam[j];
            if den > 0.0 {
                q += 2.0 * d[(i, j)].norm_sqr() / den;
            }
        }
    }
    Ok(q)
}

/// `qfi_sld` for `ρ = VV†`, `∂ρ = WV† + VW†`, evaluated on the span of the
/// columns of `V` and `W`. Both operators vanish off that span, so the
/// restriction is exact while the matrices stay small.
pub fn qfi_sld_factored(v: &CMat, w: &CMat) -> Result<f64> {
    if v.shape() != w.shape() {
        return Err(Error::DimensionMismatch {
            expected: v.ncols(),
            got: w.ncols(),
        });
    }
    let (vv, ww) = if v.nrows() <= 2 * v.ncols() {
        (v.clone(), w.clone())
    } else {
        let mut stacked = CMat::zeros(v.nrows(), 2 * v.ncols());
        stacked.columns_mut(0, v.ncols()).copy_from(v);
        stacked.columns_mut(v.ncols(), v.ncols()).copy_from(w);
        let q = linalg::column_span(&stacked, 1e-14);
        (q.adjoint() * v, q.adjoint() * w)
    };
    let rho = &vv * vv.adjoint();
    let drho = &ww * vv.adjoint() + &vv * ww.adjoint();
    qfi_sld(&rho, &drho)
}

fn check_probe(s: HalfInt, n: usize, m: HalfInt, d: usize) -> Result<(HalfInt, HalfInt)> {
    if s.twice() < 1 || n == 0 {
        return Err(Error::domain(format!(
            "need s > 0 and N ≥ 1, got s = {s}, N = {n}"
        )));
    }
    if d > n {
        return Err(Error::domain(format!("cannot erase {d} of {n} sites")));
    }
    let j = s * n as i64;
    let j1 = s * d as i64;
    check_jm(j, m, j1)?;
    Ok((j, j1))
}

fn check_jm(j: HalfInt, m: HalfInt, j1: HalfInt) -> Result<()> {
    if m <= HalfInt::ZERO || m > j || !(j - m).is_integer() {
        return Err(Error::domain(format!(
            "need 0 < M ≤ J with J − M integral, got J = {j}, M = {m}"
        )));
    }
    if j1.is_negative() || j1 > j {
        return Err(Error::domain(format!("j1 = {j1} outside [0, J = {j}]")));
    }
    if m <= j1 {
        return Err(Error::domain(format!(
            "closed form needs M > j1 (got M = {m}, j1 = {j1}); the erased blocks overlap"
        )));
    }
    Ok(())
}

/// QFI of the probe state after erasing `d` of `N` sites, from explicit
/// vectors. Serves as the oracle for the closed form.
pub fn qfi_erased_explicit(s: HalfInt, n: usize, m: HalfInt, d: usize) -> Result<f64> {
    check_probe(s, n, m, d)?;
    let psi = probe_state(s, n, m)?;
    let traced: Vec<usize> = (0..d).collect();
    let (kept, v) = psi.purification_factor(&traced)?;
    // −i Q^z on the kept sites; traced-site phases cancel in the partial trace
    let w = if kept.is_empty() {
        CMat::zeros(v.nrows(), v.ncols())
    } else {
        let kreg = QuditRegister::new(s, kept.len())?;
        let mut w = v.clone();
        for r in 0..w.nrows() {
            let mz = kreg.twice_m_total(r) as f64 / 2.0;
            w.row_mut(r).scale_mut(mz);
        }
        w * Complex64::new(0.0, -1.0)
    };
    qfi_sld_factored(&v, &w)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QFIReport {
    pub j: HalfInt,
    pub m: HalfInt,
    pub j1: HalfInt,
    pub qfi: f64,
    /// `(4M² − qfi)/(4M²)`, summed without cancellation.
    pub loss_ratio: f64,
    pub m_values: Vec<HalfInt>,
    pub lambda: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Entries of `m_values` with `λ_m` above the cutoff.
    pub support: Vec<HalfInt>,
    /// `A = Σ_m a_m b_m`.
    pub overlap_a: f64,
}

/// Closed-form QFI for general `(J, M, j1)` with `M > j1`.
pub fn qfi_erased_closed_form(j: HalfInt, m: HalfInt, j1: HalfInt) -> Result<QFIReport> {
    check_jm(j, m, j1)?;
    let four_m2 = 4.0 * m.value() * m.value();
    let mut rep = QFIReport {
        j,
        m,
        j1,
        qfi: 0.0,
        loss_ratio: 0.0,
        m_values: Vec::new(),
        lambda: Vec::new(),
        a: Vec::new(),
        b: Vec::new(),
        support: Vec::new(),
        overlap_a: 0.0,
    };
    let (mut keep, mut loss) = (0.0, 0.0);
    let mut m1 = -j1;
    while m1 <= j1 {
        let a = stretched_cg(j, m, j1, m1)?;
        let b = stretched_cg(j, -m, j1, m1)?;
        let (a2, b2) = (a * a, b * b);
        let lam = 0.5 * (a2 + b2);
        if lam > EIGEN_CUTOFF {
            keep += 2.0 * a2 * b2 / (a2 + b2);
            loss += (a2 - b2).powi(2) / (2.0 * (a2 + b2));
            rep.support.push(m1);
        } else {
            loss += lam;
        }
        rep.overlap_a += a * b;
        rep.m_values.push(m1);
        rep.lambda.push(lam);
        rep.a.push(a);
        rep.b.push(b);
        m1 += HalfInt::ONE;
    }
    rep.qfi = keep * four_m2;
    rep.loss_ratio = loss.clamp(0.0, 1.0);
    Ok(rep)
}

/// Closed-form QFI of the probe `(|J,M⟩ + |J,−M⟩)/√2`, `J = sN`, after
/// erasing `d` sites (`j1 = sd`).
pub fn qfi_erased_probe(s: HalfInt, n: usize, m: HalfInt, d: usize) -> Result<QFIReport> {
    let (j, j1) = check_probe(s, n, m, d)?;
    qfi_erased_closed_form(j, m, j1)
}

/// Fidelity between the reduced states of `|J, M⟩` and `|J, 0⟩` on `d`
/// sites, `J = sN` integral.
pub fn fidelity_erased_codewords(s: HalfInt, n: usize, m: HalfInt, d: usize) -> Result<f64> {
    if s.twice() < 1 || n == 0 || d > n {
        return Err(Error::domain(format!(
            "invalid (s, N, d) = ({s}, {n}, {d})"
        )));
    }
    let j = s * n as i64;
    if !j.is_integer() {
        return Err(Error::domain(format!(
            "J = sN = {j} is half-integral; |J, 0⟩ does not exist"
        )));
    }
    if m.abs() > j || !m.is_integer() {
        return Err(Error::domain(format!(
            "M = {m} is not on the J = {j} ladder"
        )));
    }
    erased_pair_fidelity(j, m, HalfInt::ZERO, s * d as i64)
}

/// The same fidelity from explicit partial traces.
pub fn fidelity_erased_explicit(s: HalfInt, n: usize, m: HalfInt, d: usize) -> Result<f64> {
    let complement: Vec<usize> = (d..n).collect();
    let (_, v) = dicke_state(s, n, m)?.purification_factor(&complement)?;
    let (_, w) = dicke_state(s, n, HalfInt::ZERO)?.purification_factor(&complement)?;
    Ok(linalg::fidelity_from_factors(&v, &w))
}

/// `D_{d,M} = d²/8 + [d(1 + M² + 2M) + 2d³ + d²(2M − 1)]/4` (spin 1/2), the
/// coefficient of the stated `1 − D/N²` fidelity expansion.
pub fn fidelity_deviation_coefficient(d: f64, m: f64) -> f64 {
    d * d / 8.0 + (d * (1.0 + m * m + 2.0 * m) + 2.0 * d.powi(3) + d * d * (2.0 * m - 1.0)) / 4.0
}

/// The expansion `1 − J⁻²(¼j1M² + ⅞j1² − 2j1²M² − 4j1³M − ½j1³ − 3j1/8)`,
/// kept verbatim. Diagnostic only: its j1² and j1³ terms disagree with
/// the exact closed form for j1 ≥ 1.
pub fn fidelity_asymptotic(j: f64, m: f64, j1: f64) -> f64 {
    let poly = 0.25 * j1 * m * m + 0.875 * j1 * j1
        - 2.0 * j1 * j1 * m * m
        - 4.0 * j1.powi(3) * m
        - 0.5 * j1.powi(3)
        - 0.375 * j1;
    1.0 - poly / (j * j)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LossBoundReport {
    pub delta_f_ratio: f64,
    pub epsilon_hat: f64,
    pub four_epsilon: f64,
    pub reference_substituted: bool,
    pub holds: bool,
}

/// `ΔF/(4M²) ≤ 4ε̂` with `ε̂` the erasure inaccuracy of `{|J,−M⟩, |J,M⟩}`.
pub fn verify_qfi_loss_bound(
    s: HalfInt,
    n: usize,
    m: HalfInt,
    d: usize,
) -> Result<LossBoundReport> {
    let qfi = qfi_erased_probe(s, n, m, d)?;
    let code = CodeSpec::probe_pair(s, n, m)?;
    if !code.spacing_admits(d) {
        return Err(Error::Premise(format!(
            "code {{|J,−M⟩, |J,M⟩}} has Δ = 2M = {} < 2sd + 1 = {}",
            code.delta,
            s.twice() * d as i64 + 1
        )));
    }
    let sites: Vec<usize> = (0..d).collect();
    let er = inaccuracy_erasure(&code, &sites, ErasurePath::Auto)?;
    let four_epsilon = 4.0 * er.epsilon_hat;
    Ok(LossBoundReport {
        delta_f_ratio: qfi.loss_ratio,
        epsilon_hat: er.epsilon_hat,
        four_epsilon,
        reference_substituted: er.reference_substituted,
        holds: qfi.loss_ratio <= four_epsilon + 1e-8,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Parity in `{|J,M⟩ ± |J,−M⟩}` on the unerased probe.
    LocalD,
    /// `D′ = Σ_m |j2,M−m⟩⟨j2,−M−m| + h.c.` on the remaining sites.
    GlobalDprime,
    /// `D̄ = |j2,M⟩⟨j2,−M| + h.c.`, the `m = 0` block of `D′`.
    LocalDbar,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local_D" | "local-d" | "local_d" => Ok(Scheme::LocalD),
            "global_Dprime" | "global-dprime" | "global_dprime" => Ok(Scheme::GlobalDprime),
            "local_Dbar" | "local-dbar" | "local_dbar" => Ok(Scheme::LocalDbar),
            _ => Err(Error::domain(format!("unknown scheme `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimatorReport {
    pub scheme: Scheme,
    pub theta: f64,
    pub nu: u64,
    pub m: HalfInt,
    /// Erased sites actually used (one more than requested when `sd` is
    /// half-integral for `local_Dbar`).
    pub d_used: usize,
    pub discarded_extra: bool,
    pub j1: HalfInt,
    /// Contrast `c` in `⟨X⟩ = c·cos(2Mθ)`: 1, `A` or `a0·b0`.
    pub contrast: f64,
    pub expectation: f64,
    pub variance: f64,
    pub delta_theta: f64,
    pub mc_delta_theta: Option<f64>,
    pub mc_reps: Option<usize>,
    pub seed: Option<u64>,
}

/// Default phase `π/(8M)`.
pub fn default_theta(m: HalfInt) -> f64 {
    std::f64::consts::PI / (8.0 * m.value())
}

/// Analytic expectation/variance/`Δθ` for a scheme, plus an optional
/// Monte Carlo `Δθ` from [`MC_REPS`] repeated runs of `nu` shots.
#[allow(clippy::too_many_arguments)]
pub fn measurement_estimate(
    scheme: Scheme,
    s: HalfInt,
    n: usize,
    m: HalfInt,
    d: usize,
    theta: f64,
    nu: u64,
    seed: Option<u64>,
) -> Result<EstimatorReport> {
    if nu == 0 {
        return Err(Error::domain("need at least one sample (ν ≥ 1)"));
    }
    if !theta.is_finite() {
        return Err(Error::domain("θ must be finite"));
    }
    let (d_used, discarded_extra) = match scheme {
        Scheme::LocalD if d != 0 => {
            return Err(Error::domain(
                "local_D measures the unerased probe; it needs d = 0",
            ));
        }
        Scheme::LocalDbar if !(s * d as i64).is_integer() => (d + 1, true),
        _ => (d, false),
    };
    let (_, j1) = check_probe(s, n, m, d_used)?;
    let phase = 2.0 * m.value() * theta;
    let (cos, sin) = (phase.cos(), phase.sin());
    // contrast c and second moment ⟨X²⟩
    let (contrast, second) = match scheme {
        Scheme::LocalD => (1.0, 1.0),
        Scheme::GlobalDprime => (qfi_erased_closed_form(s * n as i64, m, j1)?.overlap_a, 1.0),
        Scheme::LocalDbar => {
            let j = s * n as i64;
            let a0 = stretched_cg(j, m, j1, HalfInt::ZERO)?;
            let b0 = stretched_cg(j, -m, j1, HalfInt::ZERO)?;
            (a0 * b0, 0.5 * (a0 * a0 + b0 * b0))
        }
    };
    let expectation = contrast * cos;
    let variance = (second - expectation * expectation).max(0.0);
    let singular = sin.abs() < SINGULARITY_TOL;
    let slope = 2.0 * m.value() * contrast * sin.abs();
    let delta_theta = match scheme {
        // ⟨D²⟩ = 1 makes √Var/|∂⟨D⟩| = 1/(2M) identically
        Scheme::LocalD => 1.0 / (2.0 * m.value() * (nu as f64).sqrt()),
        _ if singular => return Err(Error::EstimatorSingularity(sin)),
        _ => variance.sqrt() / ((nu as f64).sqrt() * slope),
    };
    let mc_delta_theta = match seed {
        Some(seed) if !singular => Some(monte_carlo(
            expectation,
            second,
            contrast,
            m.value(),
            theta,
            nu,
            seed,
        )?),
        _ => None,
    };
    Ok(EstimatorReport {
        scheme,
        theta,
        nu,
        m,
        d_used,
        discarded_extra,
        j1,
        contrast,
        expectation,
        variance,
        delta_theta,
        mc_reps: mc_delta_theta.map(|_| MC_REPS),
        mc_delta_theta,
        seed,
    })
}

/// Outcomes `±1` with `P(±1) = (⟨X²⟩ ± ⟨X⟩)/2` and `0` otherwise; each run
/// inverts the sample mean on the branch containing the true phase.
fn monte_carlo(
    mean: f64,
    second: f64,
    contrast: f64,
    m: f64,
    theta: f64,
    nu: u64,
    seed: u64,
) -> Result<f64> {
    let p_plus = ((second + mean) / 2.0).clamp(0.0, 1.0);
    let p_minus = ((second - mean) / 2.0).clamp(0.0, 1.0);
    let two_pi = 2.0 * std::f64::consts::PI;
    let phase = 2.0 * m * theta;
    let turns = (phase / two_pi).floor();
    let upper = phase - turns * two_pi > std::f64::consts::PI;
    let plus = Binomial::new(nu, p_plus).map_err(|e| Error::Numerical(e.to_string()))?;
    let mut rng = seeded_rng(seed);
    let mut estimates = Vec::with_capacity(MC_REPS);
    for _ in 0..MC_REPS {
        let k_plus = plus.sample(&mut rng);
        let rest = nu - k_plus;
        let q = if p_plus < 1.0 {
            (p_minus / (1.0 - p_plus)).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let k_minus = Binomial::new(rest, q)
            .map_err(|e| Error::Numerical(e.to_string()))?
            .sample(&mut rng);
        let avg = (k_plus as f64 - k_minus as f64) / nu as f64;
        let principal = (avg / contrast).clamp(-1.0, 1.0).acos();
        let branch = if upper { two_pi - principal } else { principal };
        estimates.push((branch + turns * two_pi) / (2.0 * m));
    }
    let k = estimates.len() as f64;
    let mu = estimates.iter().sum::<f64>() / k;
    let var = estimates.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (k - 1.0);
    Ok(var.sqrt())
}

/// `⟨D′⟩` on the explicit erased probe at phase `θ`.
pub fn dprime_explicit_expectation(
    s: HalfInt,
    n: usize,
    m: HalfInt,
    d: usize,
    theta: f64,
) -> Result<f64> {
    let (_, j1) = check_probe(s, n, m, d)?;
    if d == n {
        return Err(Error::domain("nothing left to measure"));
    }
    let psi = evolve_phase(&probe_state(s, n, m)?, theta);
    let traced: Vec<usize> = (0..d).collect();
    let (_, v) = psi.purification_factor(&traced)?;
    let rest = n - d;
    let mut total = 0.0;
    let mut m1 = -j1;
    let j2 = s * rest as i64;
    while m1 <= j1 {
        // a block with one side off the j2 ladder has no coherence
        if (m - m1).abs() > j2 || (-m - m1).abs() > j2 {
            m1 += HalfInt::ONE;
            continue;
        }
        let up = dicke_state(s, rest, m - m1)?;
        let down = dicke_state(s, rest, -m - m1)?;
        let x = CMat::from_column_slice(up.amplitudes().len(), 1, up.amplitudes());
        let y = CMat::from_column_slice(down.amplitudes().len(), 1, down.amplitudes());
        // ⟨x|ρ|y⟩ with ρ = VV†
        let elem = (x.adjoint() * &v * (y.adjoint() * &v).adjoint())[(0, 0)];
        total += 2.0 * elem.re;
        m1 += HalfInt::ONE;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statevec::{DensityMatrix, StateVector};
    use proptest::prelude::*;

    fn h(t: i64) -> HalfInt {
        HalfInt::from_twice(t)
    }

    fn pure_qfi(psi: &StateVector) -> f64 {
        let rho = DensityMatrix::from_pure(psi).unwrap().into_matrix();
        let qz = CMat::from_column_slice(psi.amplitudes().len(), 1, &psi.apply_qz());
        let col = CMat::from_column_slice(psi.amplitudes().len(), 1, psi.amplitudes());
        let i = Complex64::new(0.0, 1.0);
        // −i[Q^z, ρ]
        let drho = (&qz * col.adjoint() - &col * qz.adjoint()) * (-i);
        qfi_sld(&rho, &drho).unwrap()
    }

    #[test]
    fn pure_probe_reaches_four_m_squared() {
        for (n, m) in [(2usize, 2i64), (4, 2), (6, 4), (5, 3)] {
            let psi = probe_state(HalfInt::HALF, n, h(m)).unwrap();
            assert!((pure_qfi(&psi) - (m * m) as f64).abs() < 1e-10);
        }
        let rho = DensityMatrix::from_pure(&probe_state(HalfInt::HALF, 3, h(3)).unwrap())
            .unwrap()
            .into_matrix();
        assert_eq!(qfi_sld(&rho, &CMat::zeros(8, 8)).unwrap(), 0.0);
    }

    #[test]
    fn sld_rejects_bad_input() {
        let rho = CMat::identity(2, 2) * Complex64::new(0.5, 0.0);
        let mut bad = CMat::zeros(2, 2);
        bad[(0, 1)] = Complex64::new(1.0, 0.0);
        assert!(matches!(qfi_sld(&rho, &bad), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn erased_probe_example() {
        let r = qfi_erased_probe(HalfInt::HALF, 6, h(4), 1).unwrap();
        assert!((r.qfi - 80.0 / 9.0).abs() < 1e-12);
        assert!((r.overlap_a - 5f64.sqrt() / 3.0).abs() < 1e-12);
        let ex = qfi_erased_explicit(HalfInt::HALF, 6, h(4), 1).unwrap();
        assert!((ex - 80.0 / 9.0).abs() < 1e-10);
        for (l, (a, b)) in r.lambda.iter().zip(r.a.iter().zip(&r.b)) {
            assert!((l - 0.5 * (a * a + b * b)).abs() < 1e-12);
        }
    }

    #[test]
    fn no_erasure_and_ghz_limits() {
        let r = qfi_erased_probe(HalfInt::ONE, 5, h(6), 0).unwrap();
        assert_eq!(r.qfi, 36.0);
        assert_eq!(r.overlap_a, 1.0);
        let ghz = qfi_erased_probe(HalfInt::HALF, 10, h(10), 1).unwrap();
        assert!(ghz.qfi.abs() < 1e-12 && (ghz.loss_ratio - 1.0).abs() < 1e-12);
        assert!(matches!(
            qfi_erased_probe(HalfInt::HALF, 6, h(2), 2),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            qfi_erased_probe(HalfInt::HALF, 5, h(1), 1),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn explicit_oracle_small_grid() {
        for (s, n) in [(HalfInt::HALF, 5usize), (HalfInt::ONE, 4)] {
            let j = s * n as i64;
            for d in 0..n {
                let mut m = if j.is_integer() {
                    HalfInt::ONE
                } else {
                    HalfInt::HALF
                };
                while m <= j {
                    if m > s * d as i64 {
                        let cf = qfi_erased_probe(s, n, m, d).unwrap().qfi;
                        let ex = qfi_erased_explicit(s, n, m, d).unwrap();
                        let scale = ex.max(1e-2);
                        assert!(
                            (cf - ex).abs() / scale < 1e-10,
                            "s={s} n={n} m={m} d={d}: {cf} vs {ex}"
                        );
                    }
                    m += HalfInt::ONE;
                }
            }
        }
    }

    #[test]
    fn large_j_runs_on_the_log_path() {
        let r = qfi_erased_closed_form(
            HalfInt::from_int(100_000),
            HalfInt::from_int(300),
            HalfInt::from_int(20),
        )
        .unwrap();
        assert!(r.qfi > 0.0 && r.qfi <= 4.0 * 300.0 * 300.0);
        let total: f64 = r.lambda.iter().sum();
        assert!((total - 1.0).abs() < 1e-10);
        assert!(r.loss_ratio > 0.0 && r.loss_ratio < 1.0);
    }

    #[test]
    fn fidelity_examples() {
        assert!(
            (fidelity_erased_codewords(HalfInt::HALF, 6, HalfInt::ZERO, 2).unwrap() - 1.0).abs()
                < 1e-14
        );
        let f = fidelity_erased_codewords(HalfInt::HALF, 2, HalfInt::ONE, 1).unwrap();
        assert!((f - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(fidelity_erased_codewords(HalfInt::HALF, 3, HalfInt::ONE, 1).is_err());
        for (s, n) in [(HalfInt::HALF, 8usize), (HalfInt::ONE, 6)] {
            let j = s * n as i64;
            for d in 1..n {
                let mut m = -j;
                while m <= j {
                    let cf = fidelity_erased_codewords(s, n, m, d).unwrap();
                    let ex = fidelity_erased_explicit(s, n, m, d).unwrap();
                    assert!((cf - ex).abs() < 1e-8 && (0.0..=1.0 + 1e-12).contains(&cf));
                    m += HalfInt::ONE;
                }
            }
        }
    }

    #[test]
    fn expansion_polynomial_values() {
        assert_eq!(fidelity_asymptotic(10.0, 3.0, 0.0), 1.0);
        let j1: f64 = 1.5;
        let want = 1.0 - (0.875 * j1 * j1 - 0.5 * j1.powi(3) - 0.375 * j1) / 400.0;
        assert!((fidelity_asymptotic(20.0, 0.0, j1) - want).abs() < 1e-15);
        // the expansion polynomial overshoots 1 here while the exact value cannot
        let exact = erased_pair_fidelity(
            HalfInt::from_int(500),
            HalfInt::from_int(10),
            HalfInt::ZERO,
            HalfInt::HALF,
        )
        .unwrap();
        let approx = fidelity_asymptotic(500.0, 10.0, 0.5);
        assert!((approx - (1.0 + 42.53125 / 250_000.0)).abs() < 1e-15);
        assert!(exact < 1.0 && exact > 0.99);
    }

    #[test]
    fn loss_bound_examples() {
        let r = verify_qfi_loss_bound(HalfInt::HALF, 8, h(4), 0).unwrap();
        assert_eq!(r.delta_f_ratio, 0.0);
        assert!(r.holds);
        for n in [8usize, 10, 12, 14] {
            assert!(
                verify_qfi_loss_bound(HalfInt::HALF, n, h(4), 1)
                    .unwrap()
                    .holds
            );
        }
        let ghz = verify_qfi_loss_bound(HalfInt::HALF, 6, h(6), 1).unwrap();
        assert!((ghz.delta_f_ratio - 1.0).abs() < 1e-12 && ghz.holds);
    }

    #[test]
    fn local_d_estimator() {
        let r = measurement_estimate(Scheme::LocalD, HalfInt::HALF, 6, h(4), 0, 0.0, 100, None)
            .unwrap();
        assert_eq!(r.expectation, 1.0);
        assert_eq!(r.mc_delta_theta, None);
        for theta in [0.05, 0.2, 0.31] {
            let r =
                measurement_estimate(Scheme::LocalD, HalfInt::HALF, 6, h(4), 0, theta, 400, None)
                    .unwrap();
            assert!((r.delta_theta - 1.0 / (2.0 * 2.0 * 20.0)).abs() < 1e-12);
        }
        assert!(
            measurement_estimate(Scheme::LocalD, HalfInt::HALF, 6, h(4), 1, 0.1, 10, None).is_err()
        );
    }

    #[test]
    fn monte_carlo_matches_the_analytic_spread() {
        let m = h(4);
        let nu = 10_000;
        let r = measurement_estimate(
            Scheme::LocalD,
            HalfInt::HALF,
            6,
            m,
            0,
            default_theta(m),
            nu,
            Some(17),
        )
        .unwrap();
        let target = 1.0 / (2.0 * 2.0 * 100.0);
        let mc = r.mc_delta_theta.unwrap();
        assert!((mc - target).abs() / target < 0.15, "{mc} vs {target}");
        let again = measurement_estimate(
            Scheme::LocalD,
            HalfInt::HALF,
            6,
            m,
            0,
            default_theta(m),
            nu,
            Some(17),
        )
        .unwrap();
        assert_eq!(again.mc_delta_theta, r.mc_delta_theta);
        let g = measurement_estimate(
            Scheme::GlobalDprime,
            HalfInt::HALF,
            10,
            h(6),
            2,
            default_theta(h(6)),
            nu,
            Some(3),
        )
        .unwrap();
        assert!((g.mc_delta_theta.unwrap() - g.delta_theta).abs() / g.delta_theta < 0.15);
    }

    #[test]
    fn global_contrast_is_a() {
        let r = measurement_estimate(
            Scheme::GlobalDprime,
            HalfInt::HALF,
            6,
            h(4),
            1,
            0.3,
            1,
            None,
        )
        .unwrap();
        assert!((r.contrast - 5f64.sqrt() / 3.0).abs() < 1e-12);
        for theta in [0.0, 0.1, 0.7, 2.0] {
            let ex = dprime_explicit_expectation(HalfInt::HALF, 6, h(4), 1, theta).unwrap();
            assert!((ex - r.contrast * (4.0 * theta).cos()).abs() < 1e-10);
        }
        assert!(matches!(
            measurement_estimate(
                Scheme::GlobalDprime,
                HalfInt::HALF,
                6,
                h(4),
                1,
                0.0,
                10,
                None
            ),
            Err(Error::EstimatorSingularity(_))
        ));
    }

    #[test]
    fn dbar_discards_an_extra_site_when_needed() {
        let r = measurement_estimate(
            Scheme::LocalDbar,
            HalfInt::HALF,
            12,
            h(8),
            1,
            0.1,
            100,
            None,
        )
        .unwrap();
        assert!(r.discarded_extra && r.d_used == 2 && r.j1 == HalfInt::ONE);
        let r = measurement_estimate(Scheme::LocalDbar, HalfInt::ONE, 6, h(8), 1, 0.1, 100, None)
            .unwrap();
        assert!(!r.discarded_extra && r.d_used == 1);
        assert!(r.variance >= 0.0 && r.delta_theta > 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn erasing_more_never_helps(n in 4usize..40, mfrac in 0.3f64..1.0, s2 in 1i64..=2) {
            let s = HalfInt::from_twice(s2);
            let j = s * n as i64;
            let m = HalfInt::from_int(((j.value() * mfrac).ceil() as i64).max(1));
            let m = if (j - m).is_integer() { m } else { m - HalfInt::HALF };
            prop_assume!(m > HalfInt::ZERO && m <= j);
            let mut prev = f64::INFINITY;
            for d in 0..n {
                if s * d as i64 >= m { break; }
                let r = qfi_erased_probe(s, n, m, d).unwrap();
                prop_assert!(r.qfi <= prev + 1e-8);
                prop_assert!(r.qfi <= 4.0 * m.value() * m.value() + 1e-8 && r.qfi >= 0.0);
                prop_assert!((r.lambda.iter().sum::<f64>() - 1.0).abs() < 1e-10);
                prop_assert!(r.overlap_a <= 1.0 + 1e-12);
                prev = r.qfi;
            }
        }
    }
}
