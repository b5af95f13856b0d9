//! Occupation-number states on a two-register (system + bath) mode layout.
//!
//! Mode convention: the global index of spin orbital `(spatial, spin)` is
//! `register_offset + 2 * (spatial - 1) + spin`, with `spin = 0` for alpha and
//! `1` for beta. System modes come first; bath modes follow. Bit `m` of an
//! occupation bitstring is mode `m`, and an elementary operator acting on mode
//! `m` picks up `(-1)^(number of occupied modes below m)`.
//!
//! The basis vector for a bitstring is `a†_{m1} a†_{m2} ... a†_{mk} |vac>` with
//! `m1 < m2 < ... < mk`, so every basis determinant has amplitude `+1`.

use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rdm::RdmTable;
use crate::scalar::{binomial, czero, creal, Real, C};

/// Which register a mode belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Register {
    System,
    Bath,
}

/// Spin label of a spin orbital.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Spin {
    Alpha,
    Beta,
}

/// Mode layout of the (possibly extended) single-particle space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModeLayout {
    pub n_system_modes: usize,
    pub n_bath_modes: usize,
    pub n_system_particles: usize,
    pub n_bath_particles: usize,
}

impl ModeLayout {
    pub fn new(
        n_system_modes: usize,
        n_bath_modes: usize,
        n_system_particles: usize,
        n_bath_particles: usize,
    ) -> Result<Self> {
        let layout = ModeLayout { n_system_modes, n_bath_modes, n_system_particles, n_bath_particles };
        layout.validate()?;
        Ok(layout)
    }

    /// Single register holding `n_particles` in `n_modes` spin orbitals.
    pub fn pure(n_modes: usize, n_particles: usize) -> Result<Self> {
        Self::new(n_modes, 0, n_particles, 0)
    }

    /// System register plus an identical bath register, both holding `n_particles`.
    pub fn ensemble(n_modes: usize, n_particles: usize) -> Result<Self> {
        Self::new(n_modes, n_modes, n_particles, n_particles)
    }

    fn validate(&self) -> Result<()> {
        if self.n_bath_modes != 0 && self.n_bath_modes != self.n_system_modes {
            return Err(Error::InvalidLayout(format!(
                "bath has {} modes; expected 0 or {}",
                self.n_bath_modes, self.n_system_modes
            )));
        }
        if self.total_modes() > 64 {
            return Err(Error::InvalidLayout(format!("{} modes exceed the 64-bit occupation word", self.total_modes())));
        }
        if self.n_system_particles > self.n_system_modes {
            return Err(Error::EmptySector { particles: self.n_system_particles, modes: self.n_system_modes });
        }
        if self.n_bath_particles > self.n_bath_modes {
            return Err(Error::EmptySector { particles: self.n_bath_particles, modes: self.n_bath_modes });
        }
        Ok(())
    }

    pub fn total_modes(&self) -> usize {
        self.n_system_modes + self.n_bath_modes
    }

    pub fn is_ensemble(&self) -> bool {
        self.n_bath_modes > 0
    }

    pub fn system_mask(&self) -> u64 {
        low_mask(self.n_system_modes)
    }

    pub fn bath_mask(&self) -> u64 {
        low_mask(self.n_bath_modes) << self.n_system_modes
    }

    pub fn register_of(&self, mode: usize) -> Register {
        if mode < self.n_system_modes {
            Register::System
        } else {
            Register::Bath
        }
    }

    /// The layout of the system register alone.
    pub fn system_only(&self) -> ModeLayout {
        ModeLayout {
            n_system_modes: self.n_system_modes,
            n_bath_modes: 0,
            n_system_particles: self.n_system_particles,
            n_bath_particles: 0,
        }
    }

    /// Global index of a spin orbital; `spatial` is 1-based.
    pub fn mode(&self, register: Register, spatial: usize, spin: Spin) -> Result<usize> {
        let (offset, size) = match register {
            Register::System => (0, self.n_system_modes),
            Register::Bath => (self.n_system_modes, self.n_bath_modes),
        };
        let local = spin_orbital(spatial, spin)?;
        if local >= size {
            return Err(Error::ModeOutOfRange { index: local, n_modes: size });
        }
        Ok(offset + local)
    }
}

impl fmt::Display for ModeLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}e/{} system modes, {}e/{} bath modes",
            self.n_system_particles, self.n_system_modes, self.n_bath_particles, self.n_bath_modes
        )
    }
}

/// Register-local index of spin orbital `(spatial, spin)`, `spatial` 1-based.
pub fn spin_orbital(spatial: usize, spin: Spin) -> Result<usize> {
    if spatial == 0 {
        return Err(Error::InvalidLayout("spatial orbitals are numbered from 1".into()));
    }
    Ok(2 * (spatial - 1) + if spin == Spin::Alpha { 0 } else { 1 })
}

/// Parses labels such as `"1a"`, `"3b"`, `"2α"`, `"2β"` into a register-local index.
pub fn parse_spin_orbital(label: &str) -> Result<usize> {
    let label = label.trim();
    let split = label.find(|c: char| !c.is_ascii_digit()).unwrap_or(label.len());
    let (num, spin) = label.split_at(split);
    let spatial: usize = num
        .parse()
        .map_err(|_| Error::Config(format!("bad spin-orbital label {label:?}")))?;
    let spin = match spin {
        "a" | "α" | "A" | "alpha" => Spin::Alpha,
        "b" | "β" | "B" | "beta" => Spin::Beta,
        _ => return Err(Error::Config(format!("bad spin in spin-orbital label {label:?}"))),
    };
    spin_orbital(spatial, spin)
}

#[inline]
pub(crate) fn low_mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// Jordan-Wigner parity of the occupied modes strictly below `mode`.
#[inline]
pub(crate) fn parity_below(bits: u64, mode: usize) -> bool {
    (bits & low_mask(mode)).count_ones() % 2 == 1
}

/// `a_mode |bits>`: `None` when Pauli-blocked, else the new bits and whether the sign is negative.
#[inline]
pub fn annihilate(bits: u64, mode: usize) -> Option<(u64, bool)> {
    if bits >> mode & 1 == 0 {
        return None;
    }
    Some((bits & !(1u64 << mode), parity_below(bits, mode)))
}

/// `a†_mode |bits>`: `None` when Pauli-blocked.
#[inline]
pub fn create(bits: u64, mode: usize) -> Option<(u64, bool)> {
    if bits >> mode & 1 == 1 {
        return None;
    }
    Some((bits | (1u64 << mode), parity_below(bits, mode)))
}

/// Applies `a†_{c0} a†_{c1} ... a_{a0} a_{a1} ...` (operators in written order)
/// to a basis bitstring. Annihilators act right to left, then creators right to left.
/// Returns the resulting bits and the sign (`true` = negative), or `None` if zero.
#[inline]
pub fn apply_string_bits(bits: u64, creations: &[usize], annihilations: &[usize]) -> Option<(u64, bool)> {
    let mut cur = bits;
    let mut neg = false;
    for &m in annihilations.iter().rev() {
        let (b, s) = annihilate(cur, m)?;
        cur = b;
        neg ^= s;
    }
    for &m in creations.iter().rev() {
        let (b, s) = create(cur, m)?;
        cur = b;
        neg ^= s;
    }
    Some((cur, neg))
}

/// Enumerated occupation basis with fixed particle count per register.
#[derive(Debug, Clone)]
pub struct SectorBasis {
    layout: ModeLayout,
    states: Vec<u64>,
    n_system_states: usize,
    /// `binom[n][k]` for `n <= 64`, `k <= max particles`.
    binom: Vec<Vec<u64>>,
    tables: [OnceLock<Arc<RdmTable>>; 2],
}

impl PartialEq for SectorBasis {
    fn eq(&self, other: &Self) -> bool {
        self.layout == other.layout
    }
}

/// Enumerates the sector for `layout`; states are sorted ascending as integers.
pub fn enumerate_sector(layout: ModeLayout) -> Result<SectorBasis> {
    layout.validate()?;
    let sys = combinations(layout.n_system_modes, layout.n_system_particles);
    let bath = combinations(layout.n_bath_modes, layout.n_bath_particles);
    if sys.is_empty() || bath.is_empty() {
        return Err(Error::EmptySector {
            particles: layout.n_system_particles + layout.n_bath_particles,
            modes: layout.total_modes(),
        });
    }
    let mut states = Vec::with_capacity(sys.len() * bath.len());
    for &b in &bath {
        for &s in &sys {
            states.push(s | (b << layout.n_system_modes));
        }
    }
    let kmax = layout.n_system_particles.max(layout.n_bath_particles) + 1;
    let binom = (0..=64).map(|n| (0..=kmax).map(|k| binomial(n, k)).collect()).collect();
    Ok(SectorBasis { layout, states, n_system_states: sys.len(), binom, tables: Default::default() })
}

/// All `k`-subsets of `n` bits as ascending integers.
fn combinations(n: usize, k: usize) -> Vec<u64> {
    if k > n {
        return Vec::new();
    }
    if k == 0 {
        return vec![0];
    }
    let mut out = Vec::with_capacity(binomial(n, k) as usize);
    let mut x: u64 = low_mask(k);
    let limit = 1u128 << n;
    while (x as u128) < limit {
        out.push(x);
        // Gosper's hack
        let c = x & x.wrapping_neg();
        let r = x.wrapping_add(c);
        if r == 0 {
            break;
        }
        x = (((r ^ x) >> 2) / c) | r;
    }
    out
}

impl SectorBasis {
    pub fn layout(&self) -> &ModeLayout {
        &self.layout
    }

    /// Lazily built `E_uv` table for body rank `p` (1 or 2).
    pub fn rdm_table(&self, p: usize) -> Result<Arc<RdmTable>> {
        let slot = match p {
            1 | 2 => &self.tables[p - 1],
            _ => return Err(Error::Config(format!("unsupported body rank p={p}"))),
        };
        if let Some(t) = slot.get() {
            return Ok(t.clone());
        }
        let t = Arc::new(RdmTable::new(self, p)?);
        Ok(slot.get_or_init(|| t).clone())
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[u64] {
        &self.states
    }

    pub fn state(&self, index: usize) -> u64 {
        self.states[index]
    }

    /// Colex rank of a combination (equals its position among same-weight words in integer order).
    #[inline]
    fn rank(&self, mut bits: u64) -> usize {
        let mut r = 0u64;
        let mut t = 1;
        while bits != 0 {
            let p = bits.trailing_zeros() as usize;
            r += self.binom[p][t];
            t += 1;
            bits &= bits - 1;
        }
        r as usize
    }

    /// Position of `bits` in the basis, if it belongs to the sector.
    #[inline]
    pub fn index_of(&self, bits: u64) -> Option<usize> {
        let l = &self.layout;
        if bits & !(l.system_mask() | l.bath_mask()) != 0 {
            return None;
        }
        let sys = bits & l.system_mask();
        let bath = bits >> l.n_system_modes;
        if sys.count_ones() as usize != l.n_system_particles || bath.count_ones() as usize != l.n_bath_particles {
            return None;
        }
        Some(self.rank(bath) * self.n_system_states + self.rank(sys))
    }

    /// Number of distinct system-register configurations.
    pub fn n_system_states(&self) -> usize {
        self.n_system_states
    }
}

/// Complex amplitudes over a shared [`SectorBasis`].
#[derive(Debug, Clone)]
pub struct StateVector<T: Real = f64> {
    basis: Arc<SectorBasis>,
    amplitudes: Vec<C<T>>,
}

impl<T: Real> StateVector<T> {
    /// Wraps raw amplitudes; the length must match the basis.
    pub fn from_amplitudes(basis: Arc<SectorBasis>, amplitudes: Vec<C<T>>) -> Result<Self> {
        if amplitudes.len() != basis.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} amplitudes for a basis of {}",
                amplitudes.len(),
                basis.len()
            )));
        }
        Ok(StateVector { basis, amplitudes })
    }

    pub fn zeros(basis: Arc<SectorBasis>) -> Self {
        let n = basis.len();
        StateVector { basis, amplitudes: vec![czero(); n] }
    }

    pub fn basis(&self) -> &Arc<SectorBasis> {
        &self.basis
    }

    pub fn layout(&self) -> &ModeLayout {
        self.basis.layout()
    }

    pub fn amplitudes(&self) -> &[C<T>] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C<T>] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C<T>> {
        self.amplitudes
    }

    /// Amplitude on a bitstring, zero when it lies outside the sector.
    pub fn amplitude(&self, bits: u64) -> C<T> {
        self.basis.index_of(bits).map_or(czero(), |i| self.amplitudes[i])
    }

    pub fn norm(&self) -> T {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<T>().sqrt()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector<T>) -> C<T> {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .fold(czero(), |acc, (a, b)| acc + a.conj() * b)
    }

    pub fn normalized(mut self) -> Self {
        let n = self.norm();
        if n > T::zero() {
            for a in &mut self.amplitudes {
                *a = a.unscale(n);
            }
        }
        self
    }

    /// Particle count of each register over the support (amplitude above `tol`).
    pub fn register_counts(&self, tol: T) -> Vec<(usize, usize)> {
        let l = self.layout();
        let mut out: Vec<(usize, usize)> = self
            .basis
            .states()
            .iter()
            .zip(&self.amplitudes)
            .filter(|(_, a)| a.norm() > tol)
            .map(|(&b, _)| {
                (
                    (b & l.system_mask()).count_ones() as usize,
                    (b & l.bath_mask()).count_ones() as usize,
                )
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Unit vector on the determinant with the given occupied modes (any order).
pub fn build_determinant<T: Real>(basis: &Arc<SectorBasis>, occupied_modes: &[usize]) -> Result<StateVector<T>> {
    let total = basis.layout().total_modes();
    let mut bits = 0u64;
    for &m in occupied_modes {
        if m >= total {
            return Err(Error::ModeOutOfRange { index: m, n_modes: total });
        }
        if bits >> m & 1 == 1 {
            return Err(Error::InvalidMixture(format!("mode {m} listed twice")));
        }
        bits |= 1 << m;
    }
    let idx = basis.index_of(bits).ok_or(Error::NotInSector(bits))?;
    let mut state = StateVector::zeros(basis.clone());
    state.amplitudes[idx] = creal(T::one());
    Ok(state)
}

fn check_string(total: usize, list: &[usize]) -> Result<()> {
    for (i, &m) in list.iter().enumerate() {
        if m >= total {
            return Err(Error::ModeOutOfRange { index: m, n_modes: total });
        }
        if list[..i].contains(&m) {
            return Err(Error::InvalidMixture(format!("mode {m} repeated in operator string")));
        }
    }
    Ok(())
}

/// Exact action of `a†_{c0} a†_{c1} ... a_{a0} a_{a1} ...` on `state` (unnormalized).
///
/// Fails with [`Error::SectorViolation`] if any basis state is mapped outside the sector.
pub fn apply_excitation_string<T: Real>(
    state: &StateVector<T>,
    creations: &[usize],
    annihilations: &[usize],
) -> Result<StateVector<T>> {
    let basis = state.basis();
    let total = basis.layout().total_modes();
    check_string(total, creations)?;
    check_string(total, annihilations)?;
    let mut out = StateVector::zeros(basis.clone());
    for (i, &bits) in basis.states().iter().enumerate() {
        if let Some((to, neg)) = apply_string_bits(bits, creations, annihilations) {
            let j = basis.index_of(to).ok_or(Error::SectorViolation { from: bits, to })?;
            let a = state.amplitudes[i];
            out.amplitudes[j] += if neg { -a } else { a };
        }
    }
    Ok(out)
}

/// `|φ> ⊗ |χ>` on an ensemble basis; both factors live on the system-only layout.
pub fn product_state<T: Real>(
    basis: &Arc<SectorBasis>,
    system: &StateVector<T>,
    bath: &StateVector<T>,
) -> Result<StateVector<T>> {
    let l = *basis.layout();
    if !l.is_ensemble() {
        return Err(Error::InvalidLayout("product state needs a bath register".into()));
    }
    let sys_layout = ModeLayout::pure(l.n_system_modes, l.n_system_particles)?;
    let bath_layout = ModeLayout::pure(l.n_bath_modes, l.n_bath_particles)?;
    if *system.layout() != sys_layout || *bath.layout() != bath_layout {
        return Err(Error::ShapeMismatch("factor layouts do not match the registers".into()));
    }
    let n_sys = basis.n_system_states();
    let mut out = StateVector::zeros(basis.clone());
    for (rb, &cb) in bath.amplitudes().iter().enumerate() {
        for (rs, &cs) in system.amplitudes().iter().enumerate() {
            out.amplitudes[rb * n_sys + rs] = cs * cb;
        }
    }
    Ok(out)
}

/// `Σ_i sqrt(p_i) |φ_i> ⊗ |φ_i>`: a purification of `Σ_i p_i |φ_i><φ_i|`.
///
/// `basis` must be an ensemble basis whose bath mirrors the system register;
/// each `φ_i` lives on the system-only layout. The bath copies inherit the
/// orthonormality of the `φ_i`.
pub fn build_purified_mixture<T: Real>(
    basis: &Arc<SectorBasis>,
    components: &[(T, StateVector<T>)],
) -> Result<StateVector<T>> {
    let l = *basis.layout();
    if !l.is_ensemble() || l.n_bath_particles != l.n_system_particles {
        return Err(Error::InvalidLayout("purification needs a bath mirroring the system".into()));
    }
    if components.is_empty() {
        return Err(Error::InvalidMixture("no components".into()));
    }
    let total: T = components.iter().map(|(p, _)| *p).sum();
    if components.iter().any(|(p, _)| *p < T::zero()) || (total - T::one()).abs() > T::lit(1e-12) {
        return Err(Error::InvalidMixture(format!("weights must be non-negative and sum to 1 (sum = {total})")));
    }
    let sys_layout = l.system_only();
    for (_, phi) in components {
        if *phi.layout() != sys_layout {
            return Err(Error::ShapeMismatch(format!("component layout {} != {}", phi.layout(), sys_layout)));
        }
    }
    for (i, (_, a)) in components.iter().enumerate() {
        for (j, (_, b)) in components.iter().enumerate().skip(i) {
            let overlap = a.inner(b);
            let expected = if i == j { T::one() } else { T::zero() };
            if (overlap - creal(expected)).norm() > T::lit(1e-10) {
                return Err(Error::InvalidMixture(format!(
                    "components {i} and {j} are not orthonormal (overlap {overlap})"
                )));
            }
        }
    }
    let n_sys = basis.n_system_states();
    let mut out = StateVector::zeros(basis.clone());
    for (p, phi) in components {
        let w = p.sqrt();
        if w == T::zero() {
            continue;
        }
        let amps = phi.amplitudes();
        for (rb, &cb) in amps.iter().enumerate() {
            if cb == czero() {
                continue;
            }
            for (rs, &cs) in amps.iter().enumerate() {
                out.amplitudes[rb * n_sys + rs] += (cs * cb).scale(w);
            }
        }
    }
    Ok(out)
}
