//! Target matrices: determinant mixtures, noisy copies and canonical-ensemble
//! RDMs of molecular Hamiltonians.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{apply_string_bits, build_determinant, enumerate_sector, ModeLayout, SectorBasis, StateVector};
use crate::linalg::eigh;
use crate::rdm::{compute_rdm, pair_index, RdmLayout, RdmMatrix};
use crate::scalar::{czero, creal, Real};

/// Convex mixture `w·ρ₁ + (1-w)·ρ₂` of two determinants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    /// Occupied system modes of ρ₁ and ρ₂.
    pub determinants: Vec<Vec<usize>>,
    pub w: f64,
}

impl MixtureSpec {
    pub fn validate(&self, layout: &ModeLayout) -> Result<()> {
        if self.determinants.len() != 2 {
            return Err(Error::InvalidMixture(format!("expected two determinants, got {}", self.determinants.len())));
        }
        if !(0.0..=1.0).contains(&self.w) {
            return Err(Error::InvalidMixture(format!("weight {} outside [0, 1]", self.w)));
        }
        for d in &self.determinants {
            if d.len() != layout.n_system_particles {
                return Err(Error::InvalidMixture(format!(
                    "determinant {d:?} has {} electrons, system holds {}",
                    d.len(),
                    layout.n_system_particles
                )));
            }
        }
        Ok(())
    }
}

/// Target RDM of a two-determinant mixture over the system register of `layout`.
pub fn build_mixture_target<T: Real>(spec: &MixtureSpec, layout: &ModeLayout, p: usize) -> Result<RdmMatrix<T>> {
    spec.validate(layout)?;
    let basis = Arc::new(enumerate_sector(layout.system_only())?);
    let r1 = compute_rdm(&build_determinant::<T>(&basis, &spec.determinants[0])?, p)?;
    let r2 = compute_rdm(&build_determinant::<T>(&basis, &spec.determinants[1])?, p)?;
    r1.mix(&r2, T::lit(spec.w))
}

/// Additive uniform noise `ε R`, `R_uv ~ U[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub epsilon: f64,
    pub seed: u64,
    /// Replace `R` by `(R + Rᵀ)/2` before scaling.
    pub hermitize: bool,
    /// Layout in which two-body noise is drawn.
    pub layout: RdmLayout,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { epsilon: 0.0, seed: 0, hermitize: false, layout: RdmLayout::FullTensor }
    }
}

/// `m + ε R`, with `R` drawn row-major from ChaCha20 seeded by `spec.seed`.
///
/// Two-body matrices are first converted to `spec.layout`, so the result of
/// a full-tensor draw is a full-tensor matrix.
pub fn add_noise<T: Real>(m: &RdmMatrix<T>, spec: &NoiseSpec) -> Result<RdmMatrix<T>> {
    if !(spec.epsilon >= 0.0) || !spec.epsilon.is_finite() {
        return Err(Error::Config(format!("noise strength {} must be non-negative", spec.epsilon)));
    }
    let mut out = match (m.p(), spec.layout) {
        (2, RdmLayout::FullTensor) => m.to_full_tensor(),
        (2, RdmLayout::PairAntisym) if m.layout() == RdmLayout::FullTensor => m.to_pair_projection().0,
        _ => m.clone(),
    };
    if spec.epsilon == 0.0 {
        return Ok(out);
    }
    let n = out.dim();
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let mut r = Array2::from_shape_simple_fn((n, n), || rng.random_range(-1.0..=1.0));
    if spec.hermitize {
        r = Array2::from_shape_fn((n, n), |(i, j)| 0.5 * (r[[i, j]] + r[[j, i]]));
    }
    for ((i, j), x) in out.data_mut().indexed_iter_mut() {
        *x += creal(T::lit(spec.epsilon * r[[i, j]]));
    }
    Ok(out)
}

/// One- and two-electron integrals over `norb` real spatial orbitals.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralSet {
    pub norb: usize,
    pub nelec: usize,
    pub ms2: i64,
    /// `h[i][j]`.
    pub h: Array2<f64>,
    /// Chemist-notation `(ij|kl)`, flattened `((i*n + j)*n + k)*n + l`.
    pub eri: Vec<f64>,
    pub e_core: f64,
    /// Largest deviation from 8-fold / Hermitian symmetry found while loading.
    pub symmetry_error: f64,
}

impl IntegralSet {
    #[inline]
    pub fn chem(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let n = self.norb;
        self.eri[((i * n + j) * n + k) * n + l]
    }

    /// Spin-orbital one-body matrix (mode `2p + σ`).
    pub fn h_spin(&self, m: usize, n: usize) -> f64 {
        if m % 2 == n % 2 {
            self.h[[m / 2, n / 2]]
        } else {
            0.0
        }
    }

    /// Antisymmetrized `⟨mn||kl⟩ = ⟨mn|kl⟩ - ⟨mn|lk⟩` over spin orbitals.
    pub fn v_anti(&self, m: usize, n: usize, k: usize, l: usize) -> f64 {
        let direct = if m % 2 == k % 2 && n % 2 == l % 2 { self.chem(m / 2, k / 2, n / 2, l / 2) } else { 0.0 };
        let exchange = if m % 2 == l % 2 && n % 2 == k % 2 { self.chem(m / 2, l / 2, n / 2, k / 2) } else { 0.0 };
        direct - exchange
    }
}

/// Reads an FCIDUMP file.
pub fn load_fcidump(path: impl AsRef<Path>) -> Result<IntegralSet> {
    let text = std::fs::read_to_string(path)?;
    parse_fcidump(&text)
}

/// Parses FCIDUMP text.
///
/// Grammar: a Fortran namelist opened by `&FCI` and closed by `&END` or `/`
/// with integer keys `NORB`, `NELEC`, `MS2` (others such as `ORBSYM`,
/// `ISYM` are accepted and ignored), then one record per line,
/// `value i j k l`, 1-based:
///
/// * `i j k l` all non-zero: `(ij|kl)` in chemist notation, completed to the
///   8-fold real-orbital symmetry;
/// * `k = l = 0`: `h[i][j]` (and `h[j][i]`);
/// * all zero: the core energy.
///
/// Values may use `D` as exponent marker. Blank lines are skipped.
pub fn parse_fcidump(text: &str) -> Result<IntegralSet> {
    let mut lines = text.lines().enumerate();
    let mut header = String::new();
    let mut header_done = false;
    let mut started = false;
    for (no, line) in lines.by_ref() {
        let trimmed = line.trim();
        if !started {
            if trimmed.is_empty() {
                continue;
            }
            if !trimmed.to_ascii_uppercase().starts_with("&FCI") {
                return Err(Error::Parse { line: no + 1, msg: "expected &FCI namelist header".into() });
            }
            started = true;
            header.push_str(&trimmed[4..]);
        } else {
            header.push(' ');
            header.push_str(trimmed);
        }
        let upper = header.to_ascii_uppercase();
        if let Some(end) = upper.find("&END").or_else(|| upper.rfind('/')) {
            header.truncate(end);
            header_done = true;
            break;
        }
    }
    if !header_done {
        return Err(Error::Parse { line: text.lines().count(), msg: "unterminated namelist header".into() });
    }
    let key = |name: &str| -> Option<i64> {
        let upper = header.to_ascii_uppercase();
        let mut from = 0;
        while let Some(pos) = upper[from..].find(name) {
            let at = from + pos;
            let before_ok = at == 0 || !upper.as_bytes()[at - 1].is_ascii_alphanumeric();
            let rest = upper[at + name.len()..].trim_start();
            if before_ok && rest.starts_with('=') {
                let digits: String = rest[1..].trim_start().chars().take_while(|c| c.is_ascii_digit() || *c == '-').collect();
                return digits.parse().ok();
            }
            from = at + name.len();
        }
        None
    };
    let header_line = |msg: &str| Error::Parse { line: 1, msg: msg.to_string() };
    let norb = key("NORB").ok_or_else(|| header_line("missing NORB"))?;
    let nelec = key("NELEC").ok_or_else(|| header_line("missing NELEC"))?;
    let ms2 = key("MS2").unwrap_or(0);
    if norb <= 0 || nelec < 0 || nelec > 2 * norb {
        return Err(header_line("inconsistent NORB/NELEC"));
    }
    let n = norb as usize;
    let mut h = Array2::<f64>::zeros((n, n));
    let mut eri = vec![0.0; n * n * n * n];
    let mut seen_h = Array2::<bool>::from_elem((n, n), false);
    let mut seen_v = vec![false; n * n * n * n];
    let mut e_core = 0.0;
    let mut symmetry_error: f64 = 0.0;
    let idx = |i: usize, j: usize, k: usize, l: usize| ((i * n + j) * n + k) * n + l;
    let mut records = 0usize;
    for (no, line) in lines {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line: no + 1, msg };
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(err(format!("expected 5 fields, found {}", fields.len())));
        }
        let value: f64 = fields[0]
            .replace(['D', 'd'], "e")
            .parse()
            .map_err(|_| err(format!("bad value {:?}", fields[0])))?;
        let mut ix = [0usize; 4];
        for (slot, f) in ix.iter_mut().zip(&fields[1..]) {
            let v: usize = f.parse().map_err(|_| err(format!("bad index {f:?}")))?;
            if v > n {
                return Err(err(format!("index {v} exceeds NORB={n}")));
            }
            *slot = v;
        }
        records += 1;
        match ix {
            [0, 0, 0, 0] => e_core = value,
            [i, j, 0, 0] if i > 0 && j > 0 => {
                let (i, j) = (i - 1, j - 1);
                for (a, b) in [(i, j), (j, i)] {
                    if seen_h[[a, b]] {
                        symmetry_error = symmetry_error.max((h[[a, b]] - value).abs());
                    }
                    h[[a, b]] = value;
                    seen_h[[a, b]] = true;
                }
            }
            [i, j, k, l] if i > 0 && j > 0 && k > 0 && l > 0 => {
                let (i, j, k, l) = (i - 1, j - 1, k - 1, l - 1);
                for (a, b, c, d) in [(i, j, k, l), (j, i, k, l), (i, j, l, k), (j, i, l, k), (k, l, i, j), (l, k, i, j), (k, l, j, i), (l, k, j, i)] {
                    let at = idx(a, b, c, d);
                    if seen_v[at] {
                        symmetry_error = symmetry_error.max((eri[at] - value).abs());
                    }
                    eri[at] = value;
                    seen_v[at] = true;
                }
            }
            _ => return Err(err(format!("invalid index pattern {ix:?}"))),
        }
    }
    if records == 0 {
        return Err(Error::Parse { line: text.lines().count(), msg: "no integral records".into() });
    }
    Ok(IntegralSet { norb: n, nelec: nelec as usize, ms2, h, eri, e_core, symmetry_error })
}

/// Which determinants enter the thermal sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SzSector {
    /// Every `S_z` block of the N-electron space.
    #[default]
    All,
    /// Only `2 S_z = ms2`.
    Fixed(i64),
}

impl fmt::Display for SzSector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SzSector::All => write!(f, "all-sz"),
            SzSector::Fixed(m) => write!(f, "ms2={m}"),
        }
    }
}

/// `2 S_z` of an occupation (even modes alpha, odd modes beta).
pub fn ms2_of(bits: u64) -> i64 {
    let alpha = (bits & 0x5555_5555_5555_5555).count_ones() as i64;
    let beta = (bits & 0xAAAA_AAAA_AAAA_AAAA).count_ones() as i64;
    alpha - beta
}

/// Eigenpairs of the molecular Hamiltonian.
#[derive(Debug, Clone)]
pub struct Spectrum<T: Real = f64> {
    /// Ascending; within equal energies lower `2 S_z` comes first.
    pub energies: Vec<T>,
    pub ms2: Vec<i64>,
    pub states: Vec<StateVector<T>>,
}

/// `Ĥ = Σ h a†a + ¼ Σ ⟨mn||kl⟩ a†_m a†_n a_l a_k + E_core` in the N-electron
/// sector of `2·norb` modes, as a dense matrix over `basis`.
pub fn hamiltonian_matrix(ints: &IntegralSet, basis: &SectorBasis) -> Result<Array2<f64>> {
    let n_modes = 2 * ints.norb;
    if basis.layout().total_modes() != n_modes || basis.layout().is_ensemble() {
        return Err(Error::ShapeMismatch("Hamiltonian basis must be the bare molecular sector".into()));
    }
    let dim = basis.len();
    let mut h = Array2::<f64>::zeros((dim, dim));
    for (col, &bits) in basis.states().iter().enumerate() {
        h[[col, col]] += ints.e_core;
        let occ: Vec<usize> = (0..n_modes).filter(|&m| bits >> m & 1 == 1).collect();
        for &q in &occ {
            for p in 0..n_modes {
                let v = ints.h_spin(p, q);
                if v == 0.0 {
                    continue;
                }
                if let Some((to, neg)) = apply_string_bits(bits, &[p], &[q]) {
                    let row = basis.index_of(to).ok_or(Error::NotInSector(to))?;
                    h[[row, col]] += if neg { -v } else { v };
                }
            }
        }
        // ¼ Σ over ordered pairs = Σ over m<n, k<l
        for (a, &k) in occ.iter().enumerate() {
            for &l in &occ[a + 1..] {
                for m in 0..n_modes {
                    for n in (m + 1)..n_modes {
                        let v = ints.v_anti(m, n, k, l);
                        if v == 0.0 {
                            continue;
                        }
                        if let Some((to, neg)) = apply_string_bits(bits, &[m, n], &[l, k]) {
                            let row = basis.index_of(to).ok_or(Error::NotInSector(to))?;
                            h[[row, col]] += if neg { -v } else { v };
                        }
                    }
                }
            }
        }
    }
    Ok(h)
}

/// Full spectrum of `Ĥ` with `nelec` electrons, block-diagonalized by `S_z`.
pub fn exact_diagonalize<T: Real>(ints: &IntegralSet, nelec: usize, sector: SzSector) -> Result<Spectrum<T>> {
    let layout = ModeLayout::pure(2 * ints.norb, nelec)?;
    let basis = Arc::new(enumerate_sector(layout)?);
    let h = hamiltonian_matrix(ints, &basis)?;
    let mut blocks: Vec<i64> = basis.states().iter().map(|&b| ms2_of(b)).collect();
    blocks.sort_unstable();
    blocks.dedup();
    if let SzSector::Fixed(m) = sector {
        if !blocks.contains(&m) {
            return Err(Error::Thermal(format!("no determinants with 2Sz = {m}")));
        }
        blocks = vec![m];
    }
    let mut pairs: Vec<(T, i64, StateVector<T>)> = Vec::new();
    for m in blocks {
        let members: Vec<usize> = (0..basis.len()).filter(|&i| ms2_of(basis.state(i)) == m).collect();
        let sub = Array2::from_shape_fn((members.len(), members.len()), |(r, c)| creal(T::lit(h[[members[r], members[c]]])));
        let eig = eigh(&sub);
        for (col, &e) in eig.values.iter().enumerate() {
            let mut amps = vec![czero(); basis.len()];
            for (r, &i) in members.iter().enumerate() {
                amps[i] = eig.vectors[[r, col]];
            }
            pairs.push((e, m, StateVector::from_amplitudes(basis.clone(), amps)?));
        }
    }
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
    let mut out = Spectrum { energies: Vec::new(), ms2: Vec::new(), states: Vec::new() };
    for (e, m, s) in pairs {
        out.energies.push(e);
        out.ms2.push(m);
        out.states.push(s);
    }
    Ok(out)
}

/// Temperature choice for the canonical ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum KbtRule {
    /// `k_B T = E₁ - E₀`, `E₁` the first level more than `1e-9` above `E₀`.
    #[default]
    Gap,
    /// Explicit `k_B T` in Hartree.
    Explicit(f64),
}

impl Serialize for KbtRule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            KbtRule::Gap => s.serialize_str("gap"),
            KbtRule::Explicit(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for KbtRule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Value(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Text(t) if t.eq_ignore_ascii_case("gap") => Ok(KbtRule::Gap),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("unknown kbt rule {t:?}"))),
            Raw::Value(v) if v > 0.0 => Ok(KbtRule::Explicit(v)),
            Raw::Value(v) => Err(serde::de::Error::custom(format!("kbt must be positive, got {v}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalSpec {
    pub n_electrons: usize,
    #[serde(default)]
    pub kbt: KbtRule,
    #[serde(default)]
    pub sector: SzSector,
}

/// Metadata of a thermal target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalInfo {
    pub e0: f64,
    pub e1: Option<f64>,
    pub kbt: f64,
    pub sector: String,
    /// Boltzmann weight of every eigenstate, in spectrum order.
    pub weights: Vec<f64>,
    pub energies: Vec<f64>,
}

/// `Σ_i Z⁻¹ e^{-(E_i - E₀)/k_BT} RDM(ρ_i)` over the spectrum.
pub fn thermal_rdm<T: Real>(spec: &Spectrum<T>, thermal: &ThermalSpec, p: usize) -> Result<(RdmMatrix<T>, ThermalInfo)> {
    let e: Vec<f64> = spec.energies.iter().map(|x| x.as_f64()).collect();
    let e0 = *e.first().ok_or_else(|| Error::Thermal("empty spectrum".into()))?;
    let e1 = e.iter().copied().find(|&x| x > e0 + 1e-9);
    let kbt = match thermal.kbt {
        KbtRule::Explicit(v) => v,
        KbtRule::Gap => e1.ok_or_else(|| Error::Thermal("gap undefined: every state is degenerate with the ground state".into()))? - e0,
    };
    let raw: Vec<f64> = e.iter().map(|x| (-(x - e0) / kbt).exp()).collect();
    let z: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / z).collect();
    let mut acc: Option<RdmMatrix<T>> = None;
    for (w, s) in weights.iter().zip(&spec.states) {
        if *w == 0.0 {
            continue;
        }
        let mut r = compute_rdm(s, p)?;
        r.data_mut().mapv_inplace(|x| x.scale(T::lit(*w)));
        acc = Some(match acc {
            None => r,
            Some(mut a) => {
                *a.data_mut() += r.data();
                a
            }
        });
    }
    let rdm = acc.ok_or_else(|| Error::Thermal("all weights vanished".into()))?;
    let info = ThermalInfo {
        e0,
        e1,
        kbt,
        sector: match thermal.sector {
            SzSector::All => "all-sz".into(),
            SzSector::Fixed(m) => format!("ms2={m}"),
        },
        weights,
        energies: e,
    };
    Ok((rdm, info))
}

/// `Σ h ¹ρ + ½ Σ_{m<n,k<l} ⟨mn||kl⟩ Γ_pair + E_core` for a pair-layout 2-RDM.
pub fn energy_from_rdms<T: Real>(ints: &IntegralSet, rdm1: &RdmMatrix<T>, rdm2: &RdmMatrix<T>) -> Result<f64> {
    let n = 2 * ints.norb;
    if rdm1.p() != 1 || rdm2.p() != 2 || rdm1.n_modes() != n || rdm2.n_modes() != n {
        return Err(Error::ShapeMismatch("RDMs do not match the integral set".into()));
    }
    let pair = if rdm2.layout() == RdmLayout::PairAntisym { rdm2.clone() } else { rdm2.to_pair_projection().0 };
    let mut e = ints.e_core;
    for i in 0..n {
        for j in 0..n {
            e += ints.h_spin(i, j) * rdm1.data()[[i, j]].re.as_f64();
        }
    }
    for m in 0..n {
        for nn in (m + 1)..n {
            for k in 0..n {
                for l in (k + 1)..n {
                    let v = ints.v_anti(m, nn, k, l);
                    if v != 0.0 {
                        e += 0.5 * v * pair.data()[[pair_index(n, m, nn), pair_index(n, k, l)]].re.as_f64();
                    }
                }
            }
        }
    }
    Ok(e)
}

/// Aufbau determinant: the lowest `nelec` spin orbitals.
pub fn hartree_fock_modes(nelec: usize) -> Vec<usize> {
    (0..nelec).collect()
}
