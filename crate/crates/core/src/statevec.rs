//! Dense states of `N` spin-`s` qudits.
//!
//! Basis convention: site 0 is the least significant digit of the basis
//! index, and local digit `k` on a site carries magnetic number `m = k - s`
//! (digit 0 is `m = -s`, digit `2s` is `m = +s`).
//!
//! Explicit vectors are only built for the symmetric irrep `J = sN`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::angmom::{ladder_coeff, HalfInt, Ladder};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};

/// Largest register dimension for which explicit vectors are built.
pub const DIM_LIMIT: usize = 1 << 24;

/// Largest dimension of an explicit density matrix.
pub const DENSITY_DIM_LIMIT: usize = 1 << 12;

const NORM_TOL: f64 = 1e-12;
const EIGEN_RESIDUAL_TOL: f64 = 1e-8;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuditRegister {
    s: HalfInt,
    n: usize,
    local_dim: usize,
    dim: usize,
}

impl QuditRegister {
    pub fn new(s: HalfInt, n: usize) -> Result<Self> {
        if s.twice() < 1 {
            return Err(Error::domain(format!(
                "local spin must be positive, got {s}"
            )));
        }
        if n == 0 {
            return Err(Error::domain("register needs at least one site"));
        }
        let local = s.twice() as u128 + 1;
        let limit = DIM_LIMIT as u128;
        let mut dim: u128 = 1;
        for _ in 0..n {
            dim = dim.saturating_mul(local);
            if dim > limit {
                // report the true size when it fits, a saturated one otherwise
                let full = local.checked_pow(n as u32).unwrap_or(u128::MAX);
                return Err(Error::DimensionGuard {
                    what: "qudit register",
                    dim: full,
                    limit,
                });
            }
        }
        Ok(QuditRegister {
            s,
            n,
            local_dim: local as usize,
            dim: dim as usize,
        })
    }

    pub fn s(&self) -> HalfInt {
        self.s
    }

    pub fn n_sites(&self) -> usize {
        self.n
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Total spin of the symmetric irrep, `J = sN`.
    pub fn j_max(&self) -> HalfInt {
        self.s * self.n as i64
    }

    pub fn stride(&self, site: usize) -> usize {
        self.local_dim.pow(site as u32)
    }

    pub fn digit(&self, index: usize, site: usize) -> usize {
        (index / self.stride(site)) % self.local_dim
    }

    /// Twice the total magnetic number of a basis state.
    pub fn twice_m_total(&self, index: usize) -> i64 {
        let mut rest = index;
        let mut t = 0i64;
        for _ in 0..self.n {
            t += 2 * (rest % self.local_dim) as i64 - self.s.twice();
            rest /= self.local_dim;
        }
        t
    }

    /// Rejects out-of-range or repeated site labels.
    pub fn check_sites(&self, sites: &[usize]) -> Result<()> {
        let mut seen = vec![false; self.n];
        for &site in sites {
            if site >= self.n {
                return Err(Error::InvalidSite {
                    site,
                    n_sites: self.n,
                });
            }
            if seen[site] {
                return Err(Error::domain(format!("site {site} listed twice")));
            }
            seen[site] = true;
        }
        Ok(())
    }
}

/// Matrices of `q^z`, `q^+`, `q^-` for one spin-`s` site in the digit basis.
pub fn local_spin_ops(s: HalfInt) -> (CMat, CMat, CMat) {
    let d = s.twice() as usize + 1;
    let mut z = CMat::zeros(d, d);
    let mut plus = CMat::zeros(d, d);
    for k in 0..d {
        let m = HalfInt::from_twice(2 * k as i64 - s.twice());
        z[(k, k)] = c(m.value());
        if k + 1 < d {
            plus[(k + 1, k)] = c(ladder_coeff(s, m, Ladder::Plus).expect("m within range"));
        }
    }
    let minus = plus.adjoint();
    (z, plus, minus)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    register: QuditRegister,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// Wraps amplitudes that are already unit-norm.
    pub fn from_amplitudes(register: QuditRegister, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != register.dim {
            return Err(Error::DimensionMismatch {
                expected: register.dim,
                got: amps.len(),
            });
        }
        let norm = l2(&amps);
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::Numerical(format!("state norm {norm} is not 1")));
        }
        Ok(StateVector { register, amps })
    }

    /// Rescales arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(register: QuditRegister, mut amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != register.dim {
            return Err(Error::DimensionMismatch {
                expected: register.dim,
                got: amps.len(),
            });
        }
        let norm = l2(&amps);
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Numerical("cannot normalize a zero vector".into()));
        }
        amps.iter_mut().for_each(|a| *a /= norm);
        Ok(StateVector { register, amps })
    }

    /// A computational basis state.
    pub fn basis(register: QuditRegister, index: usize) -> Result<Self> {
        if index >= register.dim {
            return Err(Error::DimensionMismatch {
                expected: register.dim,
                got: index,
            });
        }
        let mut amps = vec![Complex64::ZERO; register.dim];
        amps[index] = c(1.0);
        Ok(StateVector { register, amps })
    }

    pub fn register(&self) -> &QuditRegister {
        &self.register
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        l2(&self.amps)
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        if self.register != other.register {
            return Err(Error::DimensionMismatch {
                expected: self.register.dim,
                got: other.register.dim,
            });
        }
        Ok(dot(&self.amps, &other.amps))
    }

    /// `Q^z ψ` (unnormalized).
    pub fn apply_qz(&self) -> Vec<Complex64> {
        self.amps
            .iter()
            .enumerate()
            .map(|(i, a)| a * (self.register.twice_m_total(i) as f64 / 2.0))
            .collect()
    }

    /// `Q^- ψ` (unnormalized).
    pub fn apply_qminus(&self) -> Vec<Complex64> {
        ladder_apply(&self.register, &self.amps, Ladder::Minus)
    }

    /// `Q^+ ψ` (unnormalized).
    pub fn apply_qplus(&self) -> Vec<Complex64> {
        ladder_apply(&self.register, &self.amps, Ladder::Plus)
    }

    /// `‖Q^z ψ − M ψ‖`.
    pub fn qz_residual(&self, m: HalfInt) -> f64 {
        let mv = m.value();
        self.amps
            .iter()
            .enumerate()
            .map(|(i, a)| (a * (self.register.twice_m_total(i) as f64 / 2.0 - mv)).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// `‖(Q^+Q^- + Q^z(Q^z − 1) − J(J+1)) ψ‖`.
    pub fn total_spin_residual(&self, j: HalfInt) -> f64 {
        let lowered = StateVector {
            register: self.register.clone(),
            amps: self.apply_qminus(),
        };
        let pm = lowered.apply_qplus();
        let jj = j.value() * (j.value() + 1.0);
        pm.iter()
            .zip(&self.amps)
            .enumerate()
            .map(|(i, (p, a))| {
                let m = self.register.twice_m_total(i) as f64 / 2.0;
                (p + a * (m * (m - 1.0) - jj)).norm_sqr()
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Mean and variance of `Q^z`.
    pub fn qz_moments(&self) -> (f64, f64) {
        let (mut m1, mut m2) = (0.0, 0.0);
        for (i, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            let m = self.register.twice_m_total(i) as f64 / 2.0;
            m1 += p * m;
            m2 += p * m * m;
        }
        (m1, m2 - m1 * m1)
    }

    /// `⟨q^z⟩` on one site.
    pub fn site_qz_expectation(&self, site: usize) -> Result<f64> {
        self.register.check_sites(&[site])?;
        let s = self.register.s.value();
        Ok(self
            .amps
            .iter()
            .enumerate()
            .map(|(i, a)| a.norm_sqr() * (self.register.digit(i, site) as f64 - s))
            .sum())
    }

    /// Applies an operator acting on `sites` (first listed site is the least
    /// significant local digit). The result is not normalized.
    pub fn apply_local(&self, sites: &[usize], op: &CMat) -> Result<Vec<Complex64>> {
        let layout = LocalLayout::new(&self.register, sites)?;
        if op.nrows() != layout.local_dim || op.ncols() != layout.local_dim {
            return Err(Error::DimensionMismatch {
                expected: layout.local_dim,
                got: op.nrows(),
            });
        }
        let mut out = vec![Complex64::ZERO; self.register.dim];
        let mut local = vec![Complex64::ZERO; layout.local_dim];
        for &base in &layout.bases {
            for (l, off) in layout.offsets.iter().enumerate() {
                local[l] = self.amps[base + off];
            }
            for (r, off) in layout.offsets.iter().enumerate() {
                let mut acc = Complex64::ZERO;
                for (l, v) in local.iter().enumerate() {
                    acc += op[(r, l)] * v;
                }
                out[base + off] = acc;
            }
        }
        Ok(out)
    }

    /// `⟨ψ|O|ψ⟩` for a local operator.
    pub fn local_expectation(&self, sites: &[usize], op: &CMat) -> Result<Complex64> {
        let applied = self.apply_local(sites, op)?;
        Ok(dot(&self.amps, &applied))
    }

    /// Reshapes the state into `V` with `ρ_kept = V V†`; rows index the kept
    /// sites (ascending), columns the traced ones (ascending).
    pub fn purification_factor(&self, traced: &[usize]) -> Result<(Vec<usize>, CMat)> {
        let split = Split::new(&self.register, traced)?;
        let mut v = CMat::zeros(split.kept_dim, split.traced_dim);
        for t in 0..split.traced_dim {
            for k in 0..split.kept_dim {
                v[(k, t)] = self.amps[split.full_index(k, t)];
            }
        }
        Ok((split.kept, v))
    }
}

/// Index bookkeeping for a set of sites inside a register.
struct LocalLayout {
    local_dim: usize,
    /// Full-index offset of each local configuration.
    offsets: Vec<usize>,
    /// Full indices whose digits on the chosen sites are all zero.
    bases: Vec<usize>,
}

impl LocalLayout {
    fn new(reg: &QuditRegister, sites: &[usize]) -> Result<Self> {
        reg.check_sites(sites)?;
        let q = reg.local_dim;
        let local_dim = q.pow(sites.len() as u32);
        let strides: Vec<usize> = sites.iter().map(|&s| reg.stride(s)).collect();
        let offsets = (0..local_dim)
            .map(|l| {
                let mut rest = l;
                let mut off = 0;
                for st in &strides {
                    off += (rest % q) * st;
                    rest /= q;
                }
                off
            })
            .collect();
        let bases = (0..reg.dim)
            .filter(|&i| sites.iter().all(|&s| reg.digit(i, s) == 0))
            .collect();
        Ok(LocalLayout {
            local_dim,
            offsets,
            bases,
        })
    }
}

/// `op` acting on `sites` of `reg`, applied to every column of `m`.
pub fn apply_local_columns(
    reg: &QuditRegister,
    sites: &[usize],
    op: &CMat,
    m: &CMat,
) -> Result<CMat> {
    if m.nrows() != reg.dim {
        return Err(Error::DimensionMismatch {
            expected: reg.dim,
            got: m.nrows(),
        });
    }
    let layout = LocalLayout::new(reg, sites)?;
    if op.nrows() != layout.local_dim || op.ncols() != layout.local_dim {
        return Err(Error::DimensionMismatch {
            expected: layout.local_dim,
            got: op.nrows(),
        });
    }
    let mut out = CMat::zeros(m.nrows(), m.ncols());
    let mut local = vec![Complex64::ZERO; layout.local_dim];
    for col in 0..m.ncols() {
        for &base in &layout.bases {
            for (l, off) in layout.offsets.iter().enumerate() {
                local[l] = m[(base + off, col)];
            }
            for (r, off) in layout.offsets.iter().enumerate() {
                let mut acc = Complex64::ZERO;
                for (l, v) in local.iter().enumerate() {
                    acc += op[(r, l)] * v;
                }
                out[(base + off, col)] = acc;
            }
        }
    }
    Ok(out)
}

/// Kept/traced factorization of a register's basis.
struct Split {
    kept: Vec<usize>,
    kept_dim: usize,
    traced_dim: usize,
    kept_offsets: Vec<usize>,
    traced_offsets: Vec<usize>,
}

impl Split {
    fn new(reg: &QuditRegister, traced: &[usize]) -> Result<Self> {
        reg.check_sites(traced)?;
        let mut traced: Vec<usize> = traced.to_vec();
        traced.sort_unstable();
        let kept: Vec<usize> = (0..reg.n).filter(|s| !traced.contains(s)).collect();
        let kept_layout = LocalLayout::offsets_only(reg, &kept);
        let traced_layout = LocalLayout::offsets_only(reg, &traced);
        Ok(Split {
            kept_dim: kept_layout.len(),
            traced_dim: traced_layout.len(),
            kept,
            kept_offsets: kept_layout,
            traced_offsets: traced_layout,
        })
    }

    fn full_index(&self, k: usize, t: usize) -> usize {
        self.kept_offsets[k] + self.traced_offsets[t]
    }
}

impl LocalLayout {
    fn offsets_only(reg: &QuditRegister, sites: &[usize]) -> Vec<usize> {
        let q = reg.local_dim;
        let local_dim = q.pow(sites.len() as u32);
        (0..local_dim)
            .map(|l| {
                let mut rest = l;
                sites
                    .iter()
                    .map(|&s| {
                        let dgt = rest % q;
                        rest /= q;
                        dgt * reg.stride(s)
                    })
                    .sum()
            })
            .collect()
    }
}

fn l2(v: &[Complex64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn ladder_apply(reg: &QuditRegister, amps: &[Complex64], sign: Ladder) -> Vec<Complex64> {
    let s = reg.s;
    let q = reg.local_dim;
    let coeffs: Vec<f64> = (0..q)
        .map(|k| {
            let m = HalfInt::from_twice(2 * k as i64 - s.twice());
            ladder_coeff(s, m, sign).expect("m within range")
        })
        .collect();
    let mut out = vec![Complex64::ZERO; reg.dim];
    for (i, a) in amps.iter().enumerate() {
        if *a == Complex64::ZERO {
            continue;
        }
        let mut rest = i;
        let mut stride = 1;
        for _ in 0..reg.n {
            let k = rest % q;
            rest /= q;
            match sign {
                Ladder::Minus if k > 0 => out[i - stride] += a * coeffs[k],
                Ladder::Plus if k + 1 < q => out[i + stride] += a * coeffs[k],
                _ => {}
            }
            stride *= q;
        }
    }
    out
}

fn check_dicke_args(s: HalfInt, n: usize, m: HalfInt) -> Result<QuditRegister> {
    if s.twice() < 1 || n == 0 {
        return Err(Error::domain(format!(
            "need s > 0 and N ≥ 1, got s = {s}, N = {n}"
        )));
    }
    let j = s * n as i64;
    if m.abs() > j {
        return Err(Error::domain(format!(
            "|M| = {} exceeds J = sN = {j}",
            m.abs()
        )));
    }
    if !(j - m).is_integer() {
        return Err(Error::domain(format!(
            "J − M = {} is not an integer",
            j - m
        )));
    }
    QuditRegister::new(s, n)
}

/// `|J = sN, M⟩`, built by normalized lowering from `|s⟩^⊗N`.
pub fn dicke_state(s: HalfInt, n: usize, m: HalfInt) -> Result<StateVector> {
    let reg = check_dicke_args(s, n, m)?;
    let j = reg.j_max();
    let mut psi = StateVector::basis(reg.clone(), reg.dim - 1)?;
    let mut cur = j;
    while cur > m {
        let cm = ladder_coeff(j, cur, Ladder::Minus)?;
        let mut amps = psi.apply_qminus();
        amps.iter_mut().for_each(|a| *a /= cm);
        psi = StateVector::normalized(reg.clone(), amps)?;
        cur -= HalfInt::ONE;
    }
    Ok(psi)
}

/// `Q^- ψ / c^-_M` for a `|J, M⟩` eigenstate.
pub fn lower_state(psi: &StateVector, j: HalfInt, m: HalfInt) -> Result<StateVector> {
    if m.abs() > j || !(j - m).is_integer() {
        return Err(Error::domain(format!("invalid (J, M) = ({j}, {m})")));
    }
    if m == -j {
        return Err(Error::domain(format!(
            "M = −J = {m}: lowering annihilates the state"
        )));
    }
    let rz = psi.qz_residual(m);
    let rj = psi.total_spin_residual(j);
    if rz > EIGEN_RESIDUAL_TOL || rj > EIGEN_RESIDUAL_TOL {
        return Err(Error::Numerical(format!(
            "input is not a |{j}, {m}⟩ eigenstate (Q^z residual {rz:e}, total-spin residual {rj:e})"
        )));
    }
    let cm = ladder_coeff(j, m, Ladder::Minus)?;
    let mut amps = psi.apply_qminus();
    amps.iter_mut().for_each(|a| *a /= cm);
    StateVector::normalized(psi.register.clone(), amps)
}

/// `(|J, M⟩ + |J, −M⟩)/√2` with `J = sN`.
pub fn probe_state(s: HalfInt, n: usize, m: HalfInt) -> Result<StateVector> {
    if m <= HalfInt::ZERO {
        return Err(Error::domain(format!("probe needs M > 0, got {m}")));
    }
    let up = dicke_state(s, n, m)?;
    let down = dicke_state(s, n, -m)?;
    let amps = up
        .amps
        .iter()
        .zip(&down.amps)
        .map(|(a, b)| (a + b) * std::f64::consts::FRAC_1_SQRT_2)
        .collect();
    StateVector::normalized(up.register, amps)
}

/// `|S_M⟩ ∝ (J^+)^M |−s⟩^⊗N` with `J^+ = Σ_j e^{iφ_j} |s⟩⟨−s|_j`.
pub fn scar_state(s: HalfInt, n: usize, m: usize, phases: &[f64]) -> Result<StateVector> {
    if phases.len() != n {
        return Err(Error::domain(format!(
            "{} phases given for {n} sites",
            phases.len()
        )));
    }
    if m > n {
        return Err(Error::domain(format!("scar index M = {m} exceeds N = {n}")));
    }
    let reg = QuditRegister::new(s, n)?;
    let top = reg.local_dim - 1;
    let kicks: Vec<Complex64> = phases
        .iter()
        .map(|&p| Complex64::from_polar(1.0, p))
        .collect();
    let mut psi = StateVector::basis(reg.clone(), 0)?;
    for _ in 0..m {
        let mut out = vec![Complex64::ZERO; reg.dim];
        for (i, a) in psi.amps.iter().enumerate() {
            if *a == Complex64::ZERO {
                continue;
            }
            for (site, kick) in kicks.iter().enumerate() {
                if reg.digit(i, site) == 0 {
                    out[i + top * reg.stride(site)] += a * kick;
                }
            }
        }
        psi = StateVector::normalized(reg.clone(), out)?;
    }
    Ok(psi)
}

/// `⟨J^z⟩` for `J^z = ½ Σ_j (|s⟩⟨s| − |−s⟩⟨−s|)_j`, and the eigen-residual
/// `‖J^z ψ − value ψ‖`.
pub fn doublet_jz(psi: &StateVector, value: f64) -> (f64, f64) {
    let reg = &psi.register;
    let top = reg.local_dim - 1;
    let (mut mean, mut res) = (0.0, 0.0);
    for (i, a) in psi.amps.iter().enumerate() {
        let jz: f64 = (0..reg.n)
            .map(|site| match reg.digit(i, site) {
                0 => -0.5,
                k if k == top => 0.5,
                _ => 0.0,
            })
            .sum();
        mean += a.norm_sqr() * jz;
        res += (a * (jz - value)).norm_sqr();
    }
    (mean, res.sqrt())
}

/// Embeds a spin-½ state into spin `s`, sending `|↓⟩ → |−s⟩` and `|↑⟩ → |s⟩`.
pub fn embed_doublet(psi: &StateVector, s: HalfInt) -> Result<StateVector> {
    if psi.register.s != HalfInt::HALF {
        return Err(Error::domain("embedding expects a spin-1/2 register"));
    }
    let n = psi.register.n;
    let reg = QuditRegister::new(s, n)?;
    let top = reg.local_dim - 1;
    let mut amps = vec![Complex64::ZERO; reg.dim];
    for (i, a) in psi.amps.iter().enumerate() {
        let mut idx = 0;
        for site in 0..n {
            if (i >> site) & 1 == 1 {
                idx += top * reg.stride(site);
            }
        }
        amps[idx] = *a;
    }
    StateVector::from_amplitudes(reg, amps)
}

/// Single-site factors `u_j = e^{iφ_j/2}|s⟩⟨s| + e^{−iφ_j/2}|−s⟩⟨−s| + 1_rest`
/// of the unitary taking the embedded Dicke state to `|S_M⟩` (up to a
/// global phase).
pub fn scar_unitary(s: HalfInt, phases: &[f64]) -> Vec<CMat> {
    let q = s.twice() as usize + 1;
    phases
        .iter()
        .map(|&p| {
            let mut u = CMat::identity(q, q);
            u[(q - 1, q - 1)] = Complex64::from_polar(1.0, p / 2.0);
            u[(0, 0)] = Complex64::from_polar(1.0, -p / 2.0);
            u
        })
        .collect()
}

/// Applies `⊗_j factors[j]`.
pub fn apply_product(psi: &StateVector, factors: &[CMat]) -> Result<StateVector> {
    if factors.len() != psi.register.n {
        return Err(Error::DimensionMismatch {
            expected: psi.register.n,
            got: factors.len(),
        });
    }
    let mut cur = psi.clone();
    for (site, f) in factors.iter().enumerate() {
        let amps = cur.apply_local(&[site], f)?;
        cur = StateVector::normalized(cur.register.clone(), amps)?;
    }
    Ok(cur)
}

/// `e^{−iθ Q^z} ψ`.
pub fn evolve_phase(psi: &StateVector, theta: f64) -> StateVector {
    let amps = psi
        .amps
        .iter()
        .enumerate()
        .map(|(i, a)| {
            a * Complex64::from_polar(1.0, -theta * psi.register.twice_m_total(i) as f64 / 2.0)
        })
        .collect();
    StateVector {
        register: psi.register.clone(),
        amps,
    }
}

/// A density matrix on a subset of a register's sites (ascending labels;
/// the first label is the least significant digit).
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    s: HalfInt,
    sites: Vec<usize>,
    matrix: CMat,
}

impl DensityMatrix {
    /// Validates Hermiticity (1e-12), unit trace (1e-12) and PSD (−1e-10).
    pub fn new(s: HalfInt, sites: Vec<usize>, matrix: CMat) -> Result<Self> {
        let rho = Self::unchecked(s, sites, matrix)?;
        rho.validate()?;
        Ok(rho)
    }

    /// Shape checks only.
    pub fn unchecked(s: HalfInt, sites: Vec<usize>, matrix: CMat) -> Result<Self> {
        let q = s.twice() as usize + 1;
        let dim = q.checked_pow(sites.len() as u32).unwrap_or(usize::MAX);
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: matrix.nrows(),
            });
        }
        if sites.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain(
                "density-matrix site labels must be strictly increasing",
            ));
        }
        Ok(DensityMatrix { s, sites, matrix })
    }

    pub fn from_pure(psi: &StateVector) -> Result<Self> {
        let dim = psi.register.dim;
        if dim > DENSITY_DIM_LIMIT {
            return Err(Error::DimensionGuard {
                what: "density matrix",
                dim: dim as u128,
                limit: DENSITY_DIM_LIMIT as u128,
            });
        }
        let v = nalgebra::DVector::from_column_slice(&psi.amps);
        let m = &v * v.adjoint();
        Ok(DensityMatrix {
            s: psi.register.s,
            sites: (0..psi.register.n).collect(),
            matrix: m,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let h = linalg::hermiticity_deviation(&self.matrix);
        if h > 1e-12 {
            return Err(Error::NotHermitian(h));
        }
        let tr = linalg::trace(&self.matrix);
        if (tr - c(1.0)).norm() > 1e-12 {
            return Err(Error::Numerical(format!("trace {tr} is not 1")));
        }
        let min = self.eigenvalues().first().copied().unwrap_or(0.0);
        if min < -1e-10 {
            return Err(Error::NotPsd(min));
        }
        Ok(())
    }

    pub fn s(&self) -> HalfInt {
        self.s
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::eigvalsh(&self.matrix)
    }

    /// Traces out the listed site labels.
    pub fn partial_trace(&self, traced: &[usize]) -> Result<DensityMatrix> {
        let mut pos = Vec::with_capacity(traced.len());
        for &t in traced {
            match self.sites.iter().position(|&x| x == t) {
                Some(p) if !pos.contains(&p) => pos.push(p),
                Some(_) => return Err(Error::domain(format!("site {t} listed twice"))),
                None => {
                    return Err(Error::InvalidSite {
                        site: t,
                        n_sites: self.sites.len(),
                    })
                }
            }
        }
        let reg = QuditRegister::new(self.s, self.sites.len().max(1))?;
        if self.sites.is_empty() {
            return Ok(self.clone());
        }
        let split = Split::new(&reg, &pos)?;
        let mut out = CMat::zeros(split.kept_dim, split.kept_dim);
        for a in 0..split.kept_dim {
            for b in 0..split.kept_dim {
                let mut acc = Complex64::ZERO;
                for t in 0..split.traced_dim {
                    acc += self.matrix[(split.full_index(a, t), split.full_index(b, t))];
                }
                out[(a, b)] = acc;
            }
        }
        let sites = split.kept.iter().map(|&p| self.sites[p]).collect();
        Ok(DensityMatrix {
            s: self.s,
            sites,
            matrix: out,
        })
    }
}

/// States that can be reduced by a partial trace.
pub trait PartialTrace {
    fn trace_out(&self, sites: &[usize]) -> Result<DensityMatrix>;
}

impl PartialTrace for StateVector {
    fn trace_out(&self, sites: &[usize]) -> Result<DensityMatrix> {
        let (kept, v) = self.purification_factor(sites)?;
        if v.nrows() > DENSITY_DIM_LIMIT {
            return Err(Error::DimensionGuard {
                what: "density matrix",
                dim: v.nrows() as u128,
                limit: DENSITY_DIM_LIMIT as u128,
            });
        }
        let m = &v * v.adjoint();
        Ok(DensityMatrix {
            s: self.register.s,
            sites: kept,
            matrix: m,
        })
    }
}

impl PartialTrace for DensityMatrix {
    fn trace_out(&self, sites: &[usize]) -> Result<DensityMatrix> {
        self.partial_trace(sites)
    }
}

/// Reduced state on the complement of `sites`.
pub fn partial_trace<T: PartialTrace>(state: &T, sites: &[usize]) -> Result<DensityMatrix> {
    state.trace_out(sites)
}

/// Tensor product of per-site operators, first factor least significant
/// (the layout `apply_local` expects).
pub fn kron_sites(factors: &[CMat]) -> CMat {
    let mut out = CMat::identity(1, 1);
    for f in factors {
        out = f.kronecker(&out);
    }
    out
}

/// Dense matrix from real entries, row-major.
pub fn real_matrix(rows: usize, cols: usize, data: &[f64]) -> CMat {
    DMatrix::from_row_iterator(rows, cols, data.iter().map(|&x| c(x)))
}
