//! d-local Kraus channels and their complementary moment matrices.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::angmom::HalfInt;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::statevec::{apply_local_columns, DensityMatrix, QuditRegister, StateVector};

/// Identifier of the pseudo-random generator behind every seeded routine.
pub const PRNG_ID: &str = "chacha8-rand0.9";

const COMPLETENESS_TOL: f64 = 1e-10;

/// A seeded generator, as used throughout the crate.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent per-point seed (SplitMix64 finalizer).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Kraus operators that all act on one site set.
#[derive(Clone, Debug, PartialEq)]
pub struct KrausBlock {
    pub sites: Vec<usize>,
    pub ops: Vec<CMat>,
}

/// A channel whose Kraus operators act on one site set, or on several
/// (each block carrying its own site set). Completeness holds on the union
/// of all sites.
#[derive(Clone, Debug, PartialEq)]
pub struct KrausChannel {
    s: HalfInt,
    blocks: Vec<KrausBlock>,
    union: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ChannelMeta {
    pub s: HalfInt,
    pub site_sets: Vec<Vec<usize>>,
    pub n_d: usize,
    pub seed: Option<u64>,
    pub prng: &'static str,
}

impl KrausChannel {
    /// Single-site-set channel.
    pub fn new(s: HalfInt, sites: Vec<usize>, ops: Vec<CMat>) -> Result<Self> {
        Self::multi(s, vec![KrausBlock { sites, ops }])
    }

    /// Channel with Kraus operators on several site sets.
    pub fn multi(s: HalfInt, blocks: Vec<KrausBlock>) -> Result<Self> {
        if s.twice() < 1 {
            return Err(Error::domain(format!(
                "local spin must be positive, got {s}"
            )));
        }
        if blocks.is_empty() || blocks.iter().all(|b| b.ops.is_empty()) {
            return Err(Error::domain("channel needs at least one Kraus operator"));
        }
        let q = s.twice() as usize + 1;
        let mut union: Vec<usize> = Vec::new();
        for b in &blocks {
            if b.sites.is_empty() {
                return Err(Error::domain("Kraus block with an empty site set"));
            }
            let mut sorted = b.sites.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::domain("Kraus block lists a site twice"));
            }
            let dim = q.pow(b.sites.len() as u32);
            if b.ops.len() > dim * dim {
                return Err(Error::domain(format!(
                    "{} Kraus operators exceed the bound (2s+1)^(2d) = {}",
                    b.ops.len(),
                    dim * dim
                )));
            }
            for op in &b.ops {
                if op.nrows() != dim || op.ncols() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: op.nrows(),
                    });
                }
            }
            union.extend(&b.sites);
        }
        union.sort_unstable();
        union.dedup();
        let ch = KrausChannel { s, blocks, union };
        let res = ch.completeness_residual()?;
        if res > COMPLETENESS_TOL {
            return Err(Error::Numerical(format!(
                "Kraus completeness residual {res:e}"
            )));
        }
        Ok(ch)
    }

    /// The channel with the single Kraus operator `1`.
    pub fn identity(s: HalfInt, sites: Vec<usize>) -> Result<Self> {
        let dim = (s.twice() as usize + 1).pow(sites.len() as u32);
        Self::new(s, sites, vec![CMat::identity(dim, dim)])
    }

    /// Qubit depolarizing channel `ρ → (1 − p)ρ + p·1/2`.
    pub fn depolarizing_qubit(site: usize, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(format!(
                "depolarizing strength {p} outside [0, 1]"
            )));
        }
        let i = Complex64::new(0.0, 1.0);
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::ZERO;
        let paulis = [
            CMat::identity(2, 2),
            CMat::from_row_slice(2, 2, &[zero, one, one, zero]),
            CMat::from_row_slice(2, 2, &[zero, -i, i, zero]),
            CMat::from_row_slice(2, 2, &[one, zero, zero, -one]),
        ];
        let w = [1.0 - 0.75 * p, p / 4.0, p / 4.0, p / 4.0];
        let ops = paulis
            .iter()
            .zip(w)
            .map(|(m, w)| m * Complex64::new(w.sqrt(), 0.0))
            .collect();
        Self::new(HalfInt::HALF, vec![site], ops)
    }

    pub fn s(&self) -> HalfInt {
        self.s
    }

    pub fn blocks(&self) -> &[KrausBlock] {
        &self.blocks
    }

    /// Union of all site sets, ascending.
    pub fn sites(&self) -> &[usize] {
        &self.union
    }

    /// Total number of Kraus operators.
    pub fn n_d(&self) -> usize {
        self.blocks.iter().map(|b| b.ops.len()).sum()
    }

    /// Size of the largest site set.
    pub fn locality(&self) -> usize {
        self.blocks.iter().map(|b| b.sites.len()).max().unwrap_or(0)
    }

    pub fn meta(&self, seed: Option<u64>) -> ChannelMeta {
        ChannelMeta {
            s: self.s,
            site_sets: self.blocks.iter().map(|b| b.sites.clone()).collect(),
            n_d: self.n_d(),
            seed,
            prng: PRNG_ID,
        }
    }

    /// Every Kraus operator as a matrix on the union of sites.
    pub fn embedded_ops(&self) -> Result<Vec<CMat>> {
        let reg = QuditRegister::new(self.s, self.union.len())?;
        let eye = CMat::identity(reg.dim(), reg.dim());
        let mut out = Vec::with_capacity(self.n_d());
        for b in &self.blocks {
            let pos = positions(&self.union, &b.sites)?;
            for op in &b.ops {
                out.push(apply_local_columns(&reg, &pos, op, &eye)?);
            }
        }
        Ok(out)
    }

    /// `max |Σ K†K − 1|` on the union of sites.
    pub fn completeness_residual(&self) -> Result<f64> {
        let ops = self.embedded_ops()?;
        let dim = ops[0].nrows();
        let mut acc = CMat::zeros(dim, dim);
        for k in &ops {
            acc += k.adjoint() * k;
        }
        acc -= CMat::identity(dim, dim);
        Ok(acc.iter().map(|z| z.norm()).fold(0.0, f64::max))
    }

    /// `K_i V` for every Kraus operator, where `V` is the purification factor
    /// of `psi` with the union of sites kept. Inner products of these blocks
    /// give `⟨φ|K_i†K_j|ψ⟩`.
    pub fn kraus_images(&self, psi: &StateVector) -> Result<Vec<CMat>> {
        let n = psi.register().n_sites();
        psi.register().check_sites(&self.union)?;
        if psi.register().s() != self.s {
            return Err(Error::domain("channel and state have different local spin"));
        }
        let traced: Vec<usize> = (0..n).filter(|x| !self.union.contains(x)).collect();
        let (_, v) = psi.purification_factor(&traced)?;
        let reg = QuditRegister::new(self.s, self.union.len())?;
        let mut out = Vec::with_capacity(self.n_d());
        for b in &self.blocks {
            let pos = positions(&self.union, &b.sites)?;
            for op in &b.ops {
                out.push(apply_local_columns(&reg, &pos, op, &v)?);
            }
        }
        Ok(out)
    }
}

fn positions(union: &[usize], sites: &[usize]) -> Result<Vec<usize>> {
    sites
        .iter()
        .map(|s| {
            union.iter().position(|u| u == s).ok_or(Error::InvalidSite {
                site: *s,
                n_sites: union.len(),
            })
        })
        .collect()
}

/// Frobenius inner product `Tr(a† b)`.
pub(crate) fn frob(a: &CMat, b: &CMat) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// `ρ → Σ_i K_i ρ K_i†`, with the Kraus operators embedded by identity on
/// the remaining sites of `rho`.
pub fn apply_kraus(rho: &DensityMatrix, ch: &KrausChannel) -> Result<DensityMatrix> {
    if rho.s() != ch.s {
        return Err(Error::domain("channel and state have different local spin"));
    }
    let reg = QuditRegister::new(rho.s(), rho.sites().len())?;
    let m = rho.matrix();
    let mut out = CMat::zeros(m.nrows(), m.ncols());
    for b in &ch.blocks {
        let pos = positions(rho.sites(), &b.sites)?;
        for k in &b.ops {
            let left = apply_local_columns(&reg, &pos, k, m)?;
            let both = apply_local_columns(&reg, &pos, k, &left.adjoint())?;
            out += both.adjoint();
        }
    }
    DensityMatrix::unchecked(rho.s(), rho.sites().to_vec(), out)
}

/// `Σ_ij = ⟨ψ|K_i†K_j|ψ⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentMatrix {
    entries: CMat,
}

impl MomentMatrix {
    pub fn from_entries(entries: CMat) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                got: entries.ncols(),
            });
        }
        Ok(MomentMatrix { entries })
    }

    pub fn entries(&self) -> &CMat {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Hermitian (1e-12), PSD (−1e-10), trace one (1e-10).
    pub fn validate(&self) -> Result<()> {
        let h = linalg::hermiticity_deviation(&self.entries);
        if h > 1e-12 {
            return Err(Error::NotHermitian(h));
        }
        let min = linalg::eigvalsh(&self.entries)
            .first()
            .copied()
            .unwrap_or(0.0);
        if min < -1e-10 {
            return Err(Error::NotPsd(min));
        }
        let tr = linalg::trace(&self.entries);
        if (tr - Complex64::new(1.0, 0.0)).norm() > 1e-10 {
            return Err(Error::Numerical(format!(
                "moment-matrix trace {tr} is not 1"
            )));
        }
        Ok(())
    }
}

/// Gram matrix `G_ij = Tr(a_i† b_j)`.
pub(crate) fn gram(a: &[CMat], b: &[CMat]) -> CMat {
    DMatrix::from_fn(a.len(), b.len(), |i, j| frob(&a[i], &b[j]))
}

/// The complementary-channel moment matrix of a codeword.
pub fn complementary_moment_matrix(
    codeword: &StateVector,
    ch: &KrausChannel,
) -> Result<MomentMatrix> {
    let imgs = ch.kraus_images(codeword)?;
    let n = imgs.len();
    let mut m = CMat::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = frob(&imgs[i], &imgs[j]);
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
        m[(i, i)].im = 0.0;
    }
    MomentMatrix::from_entries(m)
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMat {
    // column-major fill order is part of the determinism contract
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im)
    })
}

/// `n` Kraus operators from the orthonormalized columns of a stacked
/// Gaussian matrix; `Σ K†K = 1` holds by construction.
fn random_kraus_ops(rng: &mut ChaCha8Rng, dim: usize, n: usize) -> Vec<CMat> {
    let stacked = gaussian_matrix(rng, n * dim, dim);
    let q = stacked.qr().q();
    (0..n).map(|i| q.rows(i * dim, dim).into_owned()).collect()
}

/// Random channel with `n_kraus` operators on `sites`.
pub fn random_dlocal_channel(
    s: HalfInt,
    sites: &[usize],
    n_kraus: usize,
    seed: u64,
) -> Result<KrausChannel> {
    if sites.is_empty() {
        return Err(Error::domain("a d-local channel needs d ≥ 1 sites"));
    }
    if s.twice() < 1 {
        return Err(Error::domain(format!(
            "local spin must be positive, got {s}"
        )));
    }
    let dim = (s.twice() as usize + 1).pow(sites.len() as u32);
    if n_kraus == 0 || n_kraus > dim * dim {
        return Err(Error::domain(format!(
            "n_kraus = {n_kraus} outside 1..={}",
            dim * dim
        )));
    }
    let mut rng = seeded_rng(seed);
    let ops = random_kraus_ops(&mut rng, dim, n_kraus);
    KrausChannel::new(s, sites.to_vec(), ops)
}

/// Random channel whose Kraus operators act on several site sets: a convex
/// mixture of independent random channels, one per set, with random weights.
pub fn random_multiset_channel(
    s: HalfInt,
    site_sets: &[Vec<usize>],
    n_kraus: usize,
    seed: u64,
) -> Result<KrausChannel> {
    if site_sets.is_empty() {
        return Err(Error::domain("need at least one site set"));
    }
    let mut rng = seeded_rng(seed);
    let raw: Vec<f64> = site_sets
        .iter()
        .map(|_| rng.random_range(0.1..1.0))
        .collect();
    let total: f64 = raw.iter().sum();
    let mut blocks = Vec::with_capacity(site_sets.len());
    for (sites, w) in site_sets.iter().zip(raw) {
        if sites.is_empty() {
            return Err(Error::domain("empty site set"));
        }
        let dim = (s.twice() as usize + 1).pow(sites.len() as u32);
        if n_kraus == 0 || n_kraus > dim * dim {
            return Err(Error::domain(format!(
                "n_kraus = {n_kraus} outside 1..={}",
                dim * dim
            )));
        }
        let scale = Complex64::new((w / total).sqrt(), 0.0);
        let ops = random_kraus_ops(&mut rng, dim, n_kraus)
            .into_iter()
            .map(|k| k * scale)
            .collect();
        blocks.push(KrausBlock {
            sites: sites.clone(),
            ops,
        });
    }
    KrausChannel::multi(s, blocks)
}

/// A random (generally non-Hermitian) operator on `d` sites with complex
/// Gaussian entries.
pub fn random_local_operator(s: HalfInt, d: usize, seed: u64) -> CMat {
    let dim = (s.twice() as usize + 1).pow(d as u32);
    gaussian_matrix(&mut seeded_rng(seed), dim, dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statevec::{dicke_state, partial_trace};
    use proptest::prelude::*;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn identity_channel_leaves_state_alone() {
        let psi = dicke_state(HalfInt::HALF, 3, HalfInt::HALF).unwrap();
        let rho = DensityMatrix::from_pure(&psi).unwrap();
        let ch = KrausChannel::identity(HalfInt::HALF, vec![1]).unwrap();
        let out = apply_kraus(&rho, &ch).unwrap();
        assert!((out.matrix() - rho.matrix())
            .iter()
            .all(|z| z.norm() < 1e-15));
        let mm = complementary_moment_matrix(&psi, &ch).unwrap();
        assert_eq!(mm.dim(), 1);
        assert!((mm.entries()[(0, 0)] - c(1.0)).norm() < 1e-15);
    }

    #[test]
    fn full_depolarizing_gives_maximally_mixed_site() {
        let reg = QuditRegister::new(HalfInt::HALF, 2).unwrap();
        let up = StateVector::basis(reg, 3).unwrap();
        let rho = DensityMatrix::from_pure(&up).unwrap();
        let out = apply_kraus(&rho, &KrausChannel::depolarizing_qubit(0, 1.0).unwrap()).unwrap();
        out.validate().unwrap();
        let site0 = partial_trace(&out, &[1]).unwrap();
        let m = site0.matrix();
        assert!((m[(0, 0)] - c(0.5)).norm() < 1e-15 && (m[(1, 1)] - c(0.5)).norm() < 1e-15);
        assert!(m[(0, 1)].norm() < 1e-15);
        // the untouched site stays up
        let site1 = partial_trace(&out, &[0]).unwrap();
        assert!((site1.matrix()[(1, 1)] - c(1.0)).norm() < 1e-15);
    }

    #[test]
    fn random_channel_on_dicke_pinned_spectrum() {
        let psi = dicke_state(HalfInt::HALF, 4, HalfInt::ZERO).unwrap();
        let rho = DensityMatrix::from_pure(&psi).unwrap();
        let ch = random_dlocal_channel(HalfInt::HALF, &[1, 2], 5, 7).unwrap();
        let out = apply_kraus(&rho, &ch).unwrap();
        out.validate().unwrap();
        let ev = out.eigenvalues();
        let total: f64 = ev.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        // a rank-5 channel on a pure state has rank at most 5
        assert!(ev[..11].iter().all(|v| v.abs() < 1e-12));
        let top: Vec<f64> = ev[11..].to_vec();
        let pinned = [
            0.036762412619748684,
            0.11459780554712025,
            0.16423784156640808,
            0.2517179537566092,
            0.4326839865101144,
        ];
        for (a, b) in top.iter().zip(pinned) {
            assert!((a - b).abs() < 1e-10, "{top:?}");
        }
    }

    #[test]
    fn orthogonal_images_give_diagonal_moments() {
        // amplitude damping: K0 keeps m, K1 lowers it, so cross terms vanish
        // on a Q^z eigenstate (digit 0 is |↓⟩, digit 1 is |↑⟩)
        let g: f64 = 0.4;
        let z = Complex64::ZERO;
        let ops = vec![
            CMat::from_row_slice(2, 2, &[c(1.0), z, z, c((1.0 - g).sqrt())]),
            CMat::from_row_slice(2, 2, &[z, c(g.sqrt()), z, z]),
        ];
        let ch = KrausChannel::new(HalfInt::HALF, vec![0], ops).unwrap();
        let psi = dicke_state(HalfInt::HALF, 4, HalfInt::ONE).unwrap();
        let mm = complementary_moment_matrix(&psi, &ch).unwrap();
        mm.validate().unwrap();
        let e = mm.entries();
        assert!(e[(0, 1)].norm() < 1e-15 && e[(1, 0)].norm() < 1e-15);
        // ⟨|↑⟩⟨↑|⟩ on one site is 1/2 + M/N = 3/4
        assert!((e[(0, 0)] - c(0.25 + 0.6 * 0.75)).norm() < 1e-12);
        assert!((e[(1, 1)] - c(0.4 * 0.75)).norm() < 1e-12);
    }

    #[test]
    fn seeded_generation_is_deterministic() {
        let a = random_dlocal_channel(HalfInt::ONE, &[0, 2], 9, 42).unwrap();
        let b = random_dlocal_channel(HalfInt::ONE, &[0, 2], 9, 42).unwrap();
        assert_eq!(a, b);
        let c = random_dlocal_channel(HalfInt::ONE, &[0, 2], 9, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn completeness_over_many_seeds() {
        for seed in 0..100 {
            let ch = random_dlocal_channel(HalfInt::HALF, &[0, 1], 1 + (seed as usize % 16), seed)
                .unwrap();
            assert!(ch.completeness_residual().unwrap() <= 1e-12);
            for b in ch.blocks() {
                for k in &b.ops {
                    assert!(linalg::op_norm(k) <= 1.0 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn single_kraus_is_an_isometry() {
        let ch = random_dlocal_channel(HalfInt::ONE, &[1], 1, 5).unwrap();
        let k = &ch.blocks()[0].ops[0];
        assert!((k.adjoint() * k - CMat::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn bounds_on_kraus_count() {
        assert!(random_dlocal_channel(HalfInt::HALF, &[0], 5, 1).is_err());
        assert!(random_dlocal_channel(HalfInt::HALF, &[0], 0, 1).is_err());
        assert!(random_dlocal_channel(HalfInt::HALF, &[], 1, 1).is_err());
        assert!(random_dlocal_channel(HalfInt::HALF, &[0], 4, 1).is_ok());
    }

    #[test]
    fn incomplete_sets_are_rejected() {
        let half = CMat::identity(2, 2) * c(0.5);
        assert!(matches!(
            KrausChannel::new(HalfInt::HALF, vec![0], vec![half]),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn multiset_channels_are_complete_on_the_union() {
        let ch =
            random_multiset_channel(HalfInt::ONE, &[vec![0], vec![2, 3], vec![3]], 4, 11).unwrap();
        assert_eq!(ch.sites(), &[0, 2, 3]);
        assert_eq!(ch.n_d(), 12);
        assert!(ch.completeness_residual().unwrap() < 1e-12);
        let psi = dicke_state(HalfInt::ONE, 5, HalfInt::ONE).unwrap();
        complementary_moment_matrix(&psi, &ch)
            .unwrap()
            .validate()
            .unwrap();
    }

    #[test]
    fn moment_matrix_matches_dense_sandwich() {
        let psi = dicke_state(HalfInt::HALF, 4, HalfInt::ZERO).unwrap();
        let ch = random_dlocal_channel(HalfInt::HALF, &[3, 1], 3, 2).unwrap();
        let mm = complementary_moment_matrix(&psi, &ch).unwrap();
        let reg = psi.register().clone();
        let v = nalgebra::DVector::from_column_slice(psi.amplitudes());
        let col = CMat::from_column_slice(reg.dim(), 1, psi.amplitudes());
        let kpsi: Vec<CMat> = ch.blocks()[0]
            .ops
            .iter()
            .map(|k| apply_local_columns(&reg, &[3, 1], k, &col).unwrap())
            .collect();
        for i in 0..3 {
            for j in 0..3 {
                let want = (kpsi[i].adjoint() * &kpsi[j])[(0, 0)];
                assert!((mm.entries()[(i, j)] - want).norm() < 1e-13);
            }
        }
        assert!((v.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn derived_seeds_differ() {
        let seeds: Vec<u64> = (0..100).map(|i| derive_seed(42, i)).collect();
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 100);
        assert_eq!(derive_seed(42, 3), seeds[3]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn moment_matrices_are_valid(seed in 0u64..10_000, n_kraus in 1usize..=16, m2 in 0i64..=6) {
            let psi = dicke_state(HalfInt::HALF, 6, HalfInt::from_int(m2 - 3)).unwrap();
            let sites = [(seed % 6) as usize, ((seed / 6 + 1 + seed % 6) % 6) as usize];
            prop_assume!(sites[0] != sites[1]);
            let ch = random_dlocal_channel(HalfInt::HALF, &sites, n_kraus, seed).unwrap();
            prop_assert!(complementary_moment_matrix(&psi, &ch).unwrap().validate().is_ok());
        }

        #[test]
        fn kraus_application_is_linear(seed in 0u64..10_000, w in 0.0f64..1.0) {
            let a = DensityMatrix::from_pure(&dicke_state(HalfInt::ONE, 3, HalfInt::ONE).unwrap()).unwrap();
            let b = DensityMatrix::from_pure(&dicke_state(HalfInt::ONE, 3, HalfInt::from_int(-2)).unwrap()).unwrap();
            let mix = a.matrix() * c(w) + b.matrix() * c(1.0 - w);
            let mixed = DensityMatrix::new(HalfInt::ONE, vec![0, 1, 2], mix).unwrap();
            let ch = random_dlocal_channel(HalfInt::ONE, &[2, 0], 4, seed).unwrap();
            let lhs = apply_kraus(&mixed, &ch).unwrap();
            let rhs = apply_kraus(&a, &ch).unwrap().into_matrix() * c(w)
                + apply_kraus(&b, &ch).unwrap().into_matrix() * c(1.0 - w);
            prop_assert!((lhs.matrix() - rhs).iter().all(|z| z.norm() <= 1e-10));
            prop_assert!((linalg::trace(lhs.matrix()) - c(1.0)).norm() < 1e-10);
        }
    }
}
