//! Codes spanned by `|J, M⟩` ladders: Knill-Laflamme residuals and
//! constructive inaccuracy estimates for d-local noise and erasures.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::angmom::{ladder_inverse_sum, stretched_cg, HalfInt};
use crate::channels::{complementary_moment_matrix, gram, ChannelMeta, KrausChannel, MomentMatrix};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::statevec::{dicke_state, local_spin_ops, StateVector};

/// Off-diagonal residual above which the generic construction is refused.
pub const PREMISE_TOL: f64 = 1e-8;

/// Tolerance of the explicit/closed-form erasure cross-check.
pub const CROSS_CHECK_TOL: f64 = 1e-8;

/// Explicit erasure fidelities are only attempted up to this register size.
pub const EXPLICIT_ERASURE_DIM: usize = 1 << 16;

/// `span{|J, M_min⟩, |J, M_min + Δ⟩, …}` with `count` codewords.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CodeSpec {
    pub s: HalfInt,
    pub n: usize,
    pub j: HalfInt,
    pub m_min: HalfInt,
    pub delta: i64,
    pub count: usize,
}

impl CodeSpec {
    pub fn new(
        s: HalfInt,
        n: usize,
        j: HalfInt,
        m_min: HalfInt,
        delta: i64,
        count: usize,
    ) -> Result<Self> {
        if s.twice() < 1 || n == 0 {
            return Err(Error::domain(format!(
                "need s > 0 and N ≥ 1, got s = {s}, N = {n}"
            )));
        }
        let jmax = s * n as i64;
        if j.is_negative() || j > jmax || !(jmax - j).is_integer() {
            return Err(Error::domain(format!(
                "J = {j} is not a total spin of {n} spin-{s} sites"
            )));
        }
        if delta < 1 {
            return Err(Error::domain(format!("spacing Δ = {delta} must be ≥ 1")));
        }
        if count == 0 {
            return Err(Error::domain("a code needs at least one codeword"));
        }
        if m_min < -j || !(j - m_min).is_integer() {
            return Err(Error::domain(format!(
                "M_min = {m_min} is not on the J = {j} ladder"
            )));
        }
        let code = CodeSpec {
            s,
            n,
            j,
            m_min,
            delta,
            count,
        };
        if code.m_max() > j {
            return Err(Error::domain(format!(
                "M_max = {} exceeds J = {j}",
                code.m_max()
            )));
        }
        Ok(code)
    }

    /// Code in the symmetric irrep `J = sN`.
    pub fn symmetric(
        s: HalfInt,
        n: usize,
        m_min: HalfInt,
        delta: i64,
        count: usize,
    ) -> Result<Self> {
        Self::new(s, n, s * n as i64, m_min, delta, count)
    }

    /// `{|J, −M⟩, |J, M⟩}` in the symmetric irrep.
    pub fn probe_pair(s: HalfInt, n: usize, m: HalfInt) -> Result<Self> {
        if m <= HalfInt::ZERO {
            return Err(Error::domain(format!("probe pair needs M > 0, got {m}")));
        }
        Self::symmetric(s, n, -m, m.twice(), 2)
    }

    pub fn m_max(&self) -> HalfInt {
        self.m_min + HalfInt::from_int(self.delta * (self.count as i64 - 1))
    }

    pub fn codeword_labels(&self) -> Vec<HalfInt> {
        (0..self.count)
            .map(|x| self.m_min + HalfInt::from_int(self.delta * x as i64))
            .collect()
    }

    /// `Δ ≥ 2sd + 1`.
    #[allow(clippy::int_plus_one)]
    pub fn spacing_admits(&self, d: usize) -> bool {
        self.delta >= self.s.twice() * d as i64 + 1
    }

    /// `Δ ≥ 4sd + 1`, for channels whose Kraus operators act on different sets.
    #[allow(clippy::int_plus_one)]
    pub fn multiset_spacing_admits(&self, d: usize) -> bool {
        self.delta >= 2 * self.s.twice() * d as i64 + 1
    }

    pub fn is_symmetric_irrep(&self) -> bool {
        self.j == self.s * self.n as i64
    }

    /// Explicit codeword vectors (symmetric irrep only).
    pub fn codewords(&self) -> Result<Vec<StateVector>> {
        if !self.is_symmetric_irrep() {
            return Err(Error::domain(format!(
                "explicit codewords need J = sN = {}, got J = {}",
                self.s * self.n as i64,
                self.j
            )));
        }
        self.codeword_labels()
            .into_iter()
            .map(|m| dicke_state(self.s, self.n, m))
            .collect()
    }
}

/// An operator on a few sites.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalOperator {
    pub sites: Vec<usize>,
    pub op: CMat,
}

/// `q0 = 2‖q^+‖_op` for one spin-`s` site.
pub fn q0(s: HalfInt) -> f64 {
    2.0 * linalg::op_norm(&local_spin_ops(s).1)
}

/// `max |⟨J,n|K_i†K_j|J,m⟩|` over codeword pairs `n ≠ m` and all Kraus pairs.
pub fn kl_offdiagonal_check(code: &CodeSpec, ch: &KrausChannel) -> Result<f64> {
    let words = code.codewords()?;
    let images: Vec<Vec<CMat>> = words
        .par_iter()
        .map(|w| ch.kraus_images(w))
        .collect::<Result<_>>()?;
    let mut worst = 0.0f64;
    for x in 0..images.len() {
        for y in 0..images.len() {
            if x != y {
                let g = gram(&images[x], &images[y]);
                worst = g.iter().map(|z| z.norm()).fold(worst, f64::max);
            }
        }
    }
    Ok(worst)
}

/// One codeword pair of the diagonal check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagCheck {
    pub n: HalfInt,
    pub m: HalfInt,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagReport {
    pub q0: f64,
    pub op_norm: f64,
    pub d: usize,
    pub pairs: Vec<DiagCheck>,
    pub holds: bool,
}

/// `|⟨n|F|n⟩ − ⟨m|F|m⟩| ≤ d·q0·‖F‖_op·C(n, m)` for every codeword pair.
pub fn kl_diagonal_bound_check(code: &CodeSpec, f: &LocalOperator) -> Result<DiagReport> {
    let words = code.codewords()?;
    let labels = code.codeword_labels();
    let exps: Vec<Complex64> = words
        .iter()
        .map(|w| w.local_expectation(&f.sites, &f.op))
        .collect::<Result<_>>()?;
    let d = f.sites.len();
    let q0 = q0(code.s);
    let norm = linalg::op_norm(&f.op);
    let mut pairs = Vec::new();
    for x in 0..words.len() {
        for y in x + 1..words.len() {
            let lhs = (exps[x] - exps[y]).norm();
            let rhs = d as f64 * q0 * norm * ladder_inverse_sum(code.j, labels[x], labels[y])?;
            pairs.push(DiagCheck {
                n: labels[x],
                m: labels[y],
                lhs,
                rhs,
            });
        }
    }
    let holds = pairs.iter().all(|p| p.lhs <= p.rhs + 1e-10);
    Ok(DiagReport {
        q0,
        op_norm: norm,
        d,
        pairs,
        holds,
    })
}

fn check_state(m: &CMat, what: &str) -> Result<()> {
    let h = linalg::hermiticity_deviation(m);
    if h > 1e-10 {
        return Err(Error::NotHermitian(h));
    }
    let tr = linalg::trace(m);
    if (tr - Complex64::new(1.0, 0.0)).norm() > 1e-8 {
        return Err(Error::Numerical(format!("{what} has trace {tr}")));
    }
    let min = linalg::eigvalsh(m).first().copied().unwrap_or(0.0);
    if min < -1e-10 {
        return Err(Error::NotPsd(min));
    }
    Ok(())
}

/// `f(ρ, σ) = ‖√σ √ρ‖_1`.
pub fn matrix_fidelity(a: &CMat, b: &CMat) -> Result<f64> {
    if a.shape() != b.shape() || a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: b.nrows(),
        });
    }
    check_state(a, "first argument")?;
    check_state(b, "second argument")?;
    if a == b {
        return Ok(linalg::trace(a).re);
    }
    Ok(linalg::trace_norm(
        &(linalg::psd_sqrt(b) * linalg::psd_sqrt(a)),
    ))
}

/// `√(1 − F²)`, clamped at zero.
pub fn purified_distance(fid: f64) -> f64 {
    (1.0 - fid * fid).max(0.0).sqrt()
}

fn ser_cmat<S: Serializer>(m: &CMat, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<[f64; 2]>> = (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| [m[(i, j)].re, m[(i, j)].im])
                .collect()
        })
        .collect();
    rows.serialize(s)
}

fn ser_cmats<S: Serializer>(ms: &[CMat], s: S) -> std::result::Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct W<'a>(#[serde(serialize_with = "ser_cmat")] &'a CMat);
    let v: Vec<W> = ms.iter().map(W).collect();
    v.serialize(s)
}

/// Generic-noise report. Complex matrices serialize as rows of `[re, im]`.
#[derive(Clone, Debug, Serialize)]
pub struct KLReport {
    pub code: CodeSpec,
    pub channel_meta: ChannelMeta,
    #[serde(serialize_with = "ser_cmat")]
    pub lambda0: CMat,
    #[serde(serialize_with = "ser_cmats")]
    pub sigmas: Vec<CMat>,
    pub offdiag_residual: f64,
    pub diag_checks: Vec<DiagCheck>,
    pub q0: f64,
    pub fidelities: Vec<f64>,
    pub epsilon_hat: f64,
}

/// Diagonal-bound checks on `|Σ^x_ij − Σ^y_ij|` with `F = K_i†K_j`; each pair
/// reports its tightest `(lhs, rhs)` over `(i, j)`.
fn moment_diag_checks(
    code: &CodeSpec,
    ch: &KrausChannel,
    sigmas: &[MomentMatrix],
) -> Result<Vec<DiagCheck>> {
    let ops = ch.embedded_ops()?;
    let block_sites: Vec<&[usize]> = ch
        .blocks()
        .iter()
        .flat_map(|b| std::iter::repeat_n(b.sites.as_slice(), b.ops.len()))
        .collect();
    let q0 = q0(code.s);
    let labels = code.codeword_labels();
    let n = ops.len();
    let mut scale = CMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut support: Vec<usize> = block_sites[i]
                .iter()
                .chain(block_sites[j])
                .copied()
                .collect();
            support.sort_unstable();
            support.dedup();
            let norm = linalg::op_norm(&(ops[i].adjoint() * &ops[j]));
            scale[(i, j)] = Complex64::new(support.len() as f64 * q0 * norm, 0.0);
        }
    }
    let mut out = Vec::new();
    for x in 0..sigmas.len() {
        for y in x + 1..sigmas.len() {
            let c = ladder_inverse_sum(code.j, labels[x], labels[y])?;
            let (mut best, mut pair) = (f64::NEG_INFINITY, (0.0, 0.0));
            for i in 0..n {
                for j in 0..n {
                    let lhs = (sigmas[x].entries()[(i, j)] - sigmas[y].entries()[(i, j)]).norm();
                    let rhs = scale[(i, j)].re * c;
                    if lhs - rhs > best {
                        best = lhs - rhs;
                        pair = (lhs, rhs);
                    }
                }
            }
            out.push(DiagCheck {
                n: labels[x],
                m: labels[y],
                lhs: pair.0,
                rhs: pair.1,
            });
        }
    }
    Ok(out)
}

/// Achievable inaccuracy against a d-local channel, following the
/// `λ = Σ_{M_min}` construction.
pub fn inaccuracy_generic(code: &CodeSpec, ch: &KrausChannel) -> Result<KLReport> {
    let offdiag = kl_offdiagonal_check(code, ch)?;
    if offdiag > PREMISE_TOL {
        return Err(Error::Premise(format!(
            "off-diagonal Knill-Laflamme residual {offdiag:e} exceeds {PREMISE_TOL:e}; spacing Δ = {} is too small",
            code.delta
        )));
    }
    let words = code.codewords()?;
    // Σ_x = F_x F_x† with row i of F_x the flattened K_i V_x
    let (sigmas, factors): (Vec<MomentMatrix>, Vec<CMat>) = words
        .par_iter()
        .map(|w| {
            let imgs = ch.kraus_images(w)?;
            let len = imgs[0].len();
            let factor = CMat::from_fn(imgs.len(), len, |i, k| imgs[i][k].conj());
            let sigma = complementary_moment_matrix(w, ch)?;
            sigma.validate()?;
            Ok((sigma, factor))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let lambda0 = sigmas[0].entries().clone();
    let fidelities: Vec<f64> = factors
        .par_iter()
        .map(|f| {
            if f == &factors[0] {
                1.0
            } else {
                linalg::fidelity_from_factors(f, &factors[0])
            }
        })
        .collect();
    let f_hat = fidelities.iter().copied().fold(f64::INFINITY, f64::min);
    let diag_checks = moment_diag_checks(code, ch, &sigmas)?;
    Ok(KLReport {
        code: code.clone(),
        channel_meta: ch.meta(None),
        lambda0,
        sigmas: sigmas.into_iter().map(|s| s.entries().clone()).collect(),
        offdiag_residual: offdiag,
        diag_checks,
        q0: q0(code.s),
        fidelities,
        epsilon_hat: purified_distance(f_hat),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErasureReport {
    pub code: CodeSpec,
    pub sites: Vec<usize>,
    pub d: usize,
    /// Magnetic number of the reference state `τ⁰`.
    pub reference_m: HalfInt,
    /// Set when `sN` is half-integral and `|J, 1/2⟩` replaces `|J, 0⟩`.
    pub reference_substituted: bool,
    /// Per-codeword fidelities from the CG weights.
    pub fidelities: Vec<f64>,
    pub epsilon_hat: f64,
    /// Same quantities from explicit partial traces, when they were run.
    pub explicit_fidelities: Option<Vec<f64>>,
    pub explicit_epsilon_hat: Option<f64>,
}

/// Reference magnetic number: `0`, or `1/2` when `J` is half-integral.
pub fn erasure_reference(j: HalfInt) -> (HalfInt, bool) {
    if j.is_integer() {
        (HalfInt::ZERO, false)
    } else {
        (HalfInt::HALF, true)
    }
}

/// `f(ρ_M, ρ_{M'})` for `d` erased sites of `|J=sN, M⟩` states, from the
/// diagonal CG weights of the reduced states.
pub fn erased_pair_fidelity(j: HalfInt, m: HalfInt, m_ref: HalfInt, j1: HalfInt) -> Result<f64> {
    let mut f = 0.0;
    let mut m1 = -j1;
    while m1 <= j1 {
        let a = stretched_cg(j, m, j1, m1)?;
        let b = stretched_cg(j, m_ref, j1, m1)?;
        f += a * b;
        m1 += HalfInt::ONE;
    }
    Ok(f)
}

/// Whether the explicit cross-check runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErasurePath {
    /// Explicit partial traces too when the register is small.
    Auto,
    ClosedForm,
    Explicit,
}

/// Achievable inaccuracy against the erasure of `sites`.
pub fn inaccuracy_erasure(
    code: &CodeSpec,
    sites: &[usize],
    path: ErasurePath,
) -> Result<ErasureReport> {
    let d = sites.len();
    if !code.spacing_admits(d) {
        return Err(Error::Premise(format!(
            "spacing Δ = {} is below 2sd + 1 = {} for d = {d}",
            code.delta,
            code.s.twice() * d as i64 + 1
        )));
    }
    if !code.is_symmetric_irrep() {
        return Err(Error::domain(
            "erasure inaccuracy needs codewords in the J = sN irrep",
        ));
    }
    let mut sorted = sites.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) || sorted.last().is_some_and(|&x| x >= code.n) {
        return Err(Error::domain(format!(
            "invalid erased site set {sites:?} for N = {}",
            code.n
        )));
    }
    let (m_ref, substituted) = erasure_reference(code.j);
    let j1 = code.s * d as i64;
    let labels = code.codeword_labels();
    let fidelities: Vec<f64> = labels
        .iter()
        .map(|&m| erased_pair_fidelity(code.j, m, m_ref, j1))
        .collect::<Result<_>>()?;
    let f_hat = fidelities.iter().copied().fold(f64::INFINITY, f64::min);

    let dim = (code.s.twice() as u128 + 1)
        .checked_pow(code.n as u32)
        .unwrap_or(u128::MAX);
    let run_explicit = match path {
        ErasurePath::ClosedForm => false,
        ErasurePath::Explicit => true,
        ErasurePath::Auto => dim <= EXPLICIT_ERASURE_DIM as u128,
    };
    let (explicit_fidelities, explicit_epsilon_hat) = if run_explicit {
        let complement: Vec<usize> = (0..code.n).filter(|x| !sorted.contains(x)).collect();
        let (_, reference) =
            dicke_state(code.s, code.n, m_ref)?.purification_factor(&complement)?;
        let fids: Vec<f64> = labels
            .par_iter()
            .map(|&m| {
                let (_, v) = dicke_state(code.s, code.n, m)?.purification_factor(&complement)?;
                Ok(linalg::fidelity_from_factors(&v, &reference))
            })
            .collect::<Result<_>>()?;
        for (a, b) in fids.iter().zip(&fidelities) {
            if (a - b).abs() > CROSS_CHECK_TOL {
                return Err(Error::Numerical(format!(
                    "explicit erasure fidelity {a} disagrees with the CG-weight value {b}"
                )));
            }
        }
        let f = fids.iter().copied().fold(f64::INFINITY, f64::min);
        (Some(fids), Some(purified_distance(f)))
    } else {
        (None, None)
    };

    Ok(ErasureReport {
        code: code.clone(),
        sites: sorted,
        d,
        reference_m: m_ref,
        reference_substituted: substituted,
        fidelities,
        epsilon_hat: purified_distance(f_hat),
        explicit_fidelities,
        explicit_epsilon_hat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{random_dlocal_channel, random_local_operator, random_multiset_channel};
    use crate::statevec::real_matrix;
    use proptest::prelude::*;

    fn h(t: i64) -> HalfInt {
        HalfInt::from_twice(t)
    }

    #[test]
    fn code_spec_invariants() {
        let c = CodeSpec::symmetric(HalfInt::HALF, 8, h(-4), 2, 3).unwrap();
        assert_eq!(c.m_max(), h(4));
        assert_eq!(c.codeword_labels(), vec![h(-4), HalfInt::ZERO, h(4)]);
        assert!(c.spacing_admits(1));
        assert!(!c.spacing_admits(2));
        assert!(!c.multiset_spacing_admits(1));
        assert!(CodeSpec::symmetric(HalfInt::HALF, 8, h(-4), 2, 5).is_err());
        assert!(CodeSpec::symmetric(HalfInt::HALF, 8, h(-3), 2, 2).is_err());
        assert!(CodeSpec::symmetric(HalfInt::HALF, 8, h(-4), 0, 2).is_err());
        let abstract_code = CodeSpec::new(HalfInt::ONE, 4, h(4), h(-4), 2, 3).unwrap();
        assert!(abstract_code.codewords().is_err());
        assert_eq!(q0(HalfInt::HALF), 2.0);
        assert!((q0(HalfInt::ONE) - 2.0 * 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn offdiagonal_zero_on_random_channels() {
        let code = CodeSpec::symmetric(HalfInt::HALF, 8, h(-4), 2, 3).unwrap();
        for seed in 0..50 {
            let ch = random_dlocal_channel(HalfInt::HALF, &[(seed % 8) as usize], 4, seed).unwrap();
            assert!(kl_offdiagonal_check(&code, &ch).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn raising_operator_breaks_tight_spacing() {
        // K1 = √γ |↑⟩⟨↓| connects neighbouring M
        let g: f64 = 0.5;
        let ops = vec![
            real_matrix(2, 2, &[(1.0 - g).sqrt(), 0.0, 0.0, 1.0]),
            real_matrix(2, 2, &[0.0, 0.0, g.sqrt(), 0.0]),
        ];
        let ch = KrausChannel::new(HalfInt::HALF, vec![0], ops).unwrap();
        let tight = CodeSpec::symmetric(HalfInt::HALF, 4, HalfInt::ZERO, 1, 2).unwrap();
        let r = kl_offdiagonal_check(&tight, &ch).unwrap();
        assert!(r > 0.1, "{r}");
        // ⟨2,1|K1†K0|2,0⟩... the largest term is ⟨J,1|K0†K1|J,0⟩ = √γ ⟨J,1|σ+_0|J,0⟩ = √γ c⁺_0 / N
        let want = g.sqrt() * 6f64.sqrt() / 4.0;
        assert!((r - want).abs() < 1e-12, "{r} vs {want}");
        assert!(matches!(
            inaccuracy_generic(&tight, &ch),
            Err(Error::Premise(_))
        ));
        let wide = CodeSpec::symmetric(HalfInt::HALF, 4, h(-2), 2, 2).unwrap();
        assert!(kl_offdiagonal_check(&wide, &ch).unwrap() < 1e-15);
        let id = KrausChannel::identity(HalfInt::HALF, vec![2]).unwrap();
        assert_eq!(kl_offdiagonal_check(&tight, &id).unwrap(), 0.0);
    }

    #[test]
    fn diagonal_bound_examples() {
        let code = CodeSpec::symmetric(HalfInt::HALF, 10, h(-6), 2, 4).unwrap();
        let id = LocalOperator {
            sites: vec![3],
            op: CMat::identity(2, 2),
        };
        let r = kl_diagonal_bound_check(&code, &id).unwrap();
        assert!(r.holds && r.pairs.iter().all(|p| p.lhs < 1e-14));
        let (z, _, _) = local_spin_ops(HalfInt::HALF);
        let r = kl_diagonal_bound_check(
            &code,
            &LocalOperator {
                sites: vec![0],
                op: z,
            },
        )
        .unwrap();
        assert!(r.holds);
        for p in &r.pairs {
            assert!((p.lhs - (p.n - p.m).abs().value() / 10.0).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_bound_on_random_operators() {
        let code = CodeSpec::symmetric(HalfInt::HALF, 10, h(-10), 2, 6).unwrap();
        for seed in 0..40u64 {
            let d = 1 + (seed % 2) as usize;
            let sites: Vec<usize> = (0..d).map(|k| (seed as usize + 3 * k) % 10).collect();
            let f = LocalOperator {
                sites,
                op: random_local_operator(HalfInt::HALF, d, seed),
            };
            let r = kl_diagonal_bound_check(&code, &f).unwrap();
            assert!(r.holds, "seed {seed}");
        }
    }

    #[test]
    fn fidelity_examples() {
        let a = real_matrix(2, 2, &[0.5, 0.0, 0.0, 0.5]);
        let b = real_matrix(2, 2, &[0.9, 0.0, 0.0, 0.1]);
        let f = matrix_fidelity(&a, &b).unwrap();
        assert!((f - (0.45f64.sqrt() + 0.05f64.sqrt())).abs() < 1e-12);
        assert!((f - 0.894427191).abs() < 1e-9);
        assert!((matrix_fidelity(&b, &b).unwrap() - 1.0).abs() < 1e-12);
        // pure states
        let u = real_matrix(2, 1, &[0.6, 0.8]);
        let v = real_matrix(2, 1, &[1.0, 0.0]);
        let f = matrix_fidelity(&(&u * u.adjoint()), &(&v * v.adjoint())).unwrap();
        assert!((f - 0.6).abs() < 1e-12);
        let bad = real_matrix(2, 2, &[1.2, 0.0, 0.0, -0.2]);
        assert!(matches!(matrix_fidelity(&bad, &a), Err(Error::NotPsd(_))));
    }

    #[test]
    fn generic_inaccuracy_trivial_cases() {
        let single = CodeSpec::symmetric(HalfInt::HALF, 6, HalfInt::ONE, 3, 1).unwrap();
        let ch = random_dlocal_channel(HalfInt::HALF, &[2], 3, 9).unwrap();
        assert_eq!(inaccuracy_generic(&single, &ch).unwrap().epsilon_hat, 0.0);
        let code = CodeSpec::symmetric(HalfInt::HALF, 6, h(-6), 3, 3).unwrap();
        let id = KrausChannel::identity(HalfInt::HALF, vec![0]).unwrap();
        assert_eq!(inaccuracy_generic(&code, &id).unwrap().epsilon_hat, 0.0);
    }

    #[test]
    fn generic_inaccuracy_pinned_and_decreasing() {
        let mut eps = Vec::new();
        for n in [10usize, 14, 18, 22] {
            let code = CodeSpec::symmetric(HalfInt::HALF, n, h(-4), 4, 2).unwrap();
            let ch = random_dlocal_channel(HalfInt::HALF, &[0], 4, 2024).unwrap();
            let r = inaccuracy_generic(&code, &ch).unwrap();
            assert!(r.diag_checks.iter().all(|p| p.lhs <= p.rhs + 1e-10));
            assert!((0.0..=1.0).contains(&r.epsilon_hat));
            eps.push(r.epsilon_hat);
        }
        assert!((eps[0] - PINNED_N10).abs() < 1e-10, "{eps:?}");
        let ups = eps.windows(2).filter(|w| w[1] > w[0]).count();
        assert!(ups <= 1, "{eps:?}");
        assert!(eps[3] < eps[0]);
    }

    const PINNED_N10: f64 = 0.35989200607406224;

    #[test]
    fn erasure_examples() {
        let code = CodeSpec::symmetric(HalfInt::HALF, 4, h(-4), 4, 2).unwrap();
        let r = inaccuracy_erasure(&code, &[1], ErasurePath::Auto).unwrap();
        let r2 = std::f64::consts::FRAC_1_SQRT_2;
        assert!((r.epsilon_hat - r2).abs() < 1e-12);
        assert!((r.explicit_epsilon_hat.unwrap() - r2).abs() < 1e-12);
        assert!(r.fidelities.iter().all(|f| (f - r2).abs() < 1e-12));
        assert!(!r.reference_substituted);

        let trivial = CodeSpec::symmetric(HalfInt::HALF, 6, HalfInt::ZERO, 3, 1).unwrap();
        let r = inaccuracy_erasure(&trivial, &[0, 5], ErasurePath::Explicit).unwrap();
        assert!(r.epsilon_hat < 1e-7 && r.explicit_epsilon_hat.unwrap() < 1e-7);

        let tight = CodeSpec::symmetric(HalfInt::HALF, 6, h(-2), 2, 2).unwrap();
        assert!(matches!(
            inaccuracy_erasure(&tight, &[0, 1], ErasurePath::Auto),
            Err(Error::Premise(_))
        ));

        let odd = CodeSpec::symmetric(HalfInt::HALF, 7, h(-3), 3, 2).unwrap();
        let r = inaccuracy_erasure(&odd, &[3], ErasurePath::Auto).unwrap();
        assert!(r.reference_substituted && r.reference_m == HalfInt::HALF);
    }

    #[test]
    fn erasure_paths_agree() {
        for (s, n_max) in [(HalfInt::HALF, 8usize), (HalfInt::ONE, 8)] {
            for n in 2..=n_max {
                let j = s * n as i64;
                for d in 1..n {
                    let delta = s.twice() * d as i64 + 1;
                    let mut m_min = -j;
                    while m_min + HalfInt::from_int(delta) <= j {
                        let code = CodeSpec::symmetric(s, n, m_min, delta, 2).unwrap();
                        let sites: Vec<usize> = (0..d).map(|k| (2 * k + 1) % n).collect();
                        let mut uniq = sites.clone();
                        uniq.sort_unstable();
                        uniq.dedup();
                        let sites = if uniq.len() == d {
                            sites
                        } else {
                            (0..d).collect()
                        };
                        let r = inaccuracy_erasure(&code, &sites, ErasurePath::Explicit).unwrap();
                        assert!((r.epsilon_hat - r.explicit_epsilon_hat.unwrap()).abs() < 1e-8);
                        m_min += HalfInt::ONE;
                    }
                }
            }
        }
    }

    #[test]
    fn erasure_rate_at_fixed_code() {
        let mut eps = Vec::new();
        for n in [8usize, 16, 32, 64] {
            let code = CodeSpec::symmetric(HalfInt::HALF, n, h(-4), 2, 3).unwrap();
            eps.push(
                inaccuracy_erasure(&code, &[0], ErasurePath::ClosedForm)
                    .unwrap()
                    .epsilon_hat,
            );
        }
        assert!(eps.windows(2).all(|w| w[1] < w[0]), "{eps:?}");
    }

    #[test]
    fn wide_spacing_on_multiset_channels() {
        let code = CodeSpec::symmetric(HalfInt::HALF, 8, h(-4), 3, 2).unwrap();
        assert!(code.multiset_spacing_admits(1));
        for seed in 0..10 {
            let ch = random_multiset_channel(HalfInt::HALF, &[vec![0], vec![5]], 3, seed).unwrap();
            assert!(kl_offdiagonal_check(&code, &ch).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn report_serializes_to_the_documented_schema() {
        let code = CodeSpec::symmetric(HalfInt::HALF, 6, h(-4), 4, 2).unwrap();
        let ch = random_dlocal_channel(HalfInt::HALF, &[1], 2, 3).unwrap();
        let v = serde_json::to_value(inaccuracy_generic(&code, &ch).unwrap()).unwrap();
        for key in [
            "code",
            "channel_meta",
            "offdiag_residual",
            "diag_checks",
            "epsilon_hat",
            "fidelities",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["lambda0"].as_array().unwrap().len(), 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn fidelity_is_symmetric_and_bounded(seed in 0u64..100_000) {
            let a = random_local_operator(HalfInt::ONE, 1, seed);
            let b = random_local_operator(HalfInt::ONE, 1, seed + 1);
            let to_state = |m: CMat| {
                let p = &m * m.adjoint();
                let t = linalg::trace(&p);
                p / t
            };
            let (ra, rb) = (to_state(a), to_state(b));
            let f1 = matrix_fidelity(&ra, &rb).unwrap();
            let f2 = matrix_fidelity(&rb, &ra).unwrap();
            prop_assert!((f1 - f2).abs() <= 1e-10);
            prop_assert!((0.0..=1.0 + 1e-10).contains(&f1));
        }
    }
}
