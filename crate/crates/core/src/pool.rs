//! Antihermitian excitation-deexcitation generators and the pool builder.
//!
//! A generator is `Ô = X - X†` with `X = a†_i a_k` (one-body) or
//! `X = a†_i a†_j a_k a_l` (two-body). The pool keeps only generators that
//! conserve the particle number of the system and bath registers separately.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{apply_excitation_string, apply_string_bits, ModeLayout, SectorBasis, StateVector};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    OneBody,
    TwoBody,
}

/// Index form of a generator; creations first, then annihilations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Excitation {
    /// `a†_i a_k - a†_k a_i`, `i < k`.
    One { i: usize, k: usize },
    /// `a†_i a†_j a_k a_l - a†_k a†_l a_i a_j`, `i < j`, `k < l`, `(i, j) > (k, l)`.
    Two { i: usize, j: usize, k: usize, l: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Generator {
    pub id: usize,
    pub excitation: Excitation,
}

impl Generator {
    pub fn kind(&self) -> GeneratorKind {
        match self.excitation {
            Excitation::One { .. } => GeneratorKind::OneBody,
            Excitation::Two { .. } => GeneratorKind::TwoBody,
        }
    }

    /// Creation and annihilation lists of `X` in written order.
    pub fn x_strings(&self) -> (Vec<usize>, Vec<usize>) {
        match self.excitation {
            Excitation::One { i, k } => (vec![i], vec![k]),
            Excitation::Two { i, j, k, l } => (vec![i, j], vec![k, l]),
        }
    }

    pub fn indices(&self) -> Vec<usize> {
        match self.excitation {
            Excitation::One { i, k } => vec![i, k],
            Excitation::Two { i, j, k, l } => vec![i, j, k, l],
        }
    }

    /// Bit mask of every mode the generator touches.
    pub fn mode_mask(&self) -> u64 {
        self.indices().iter().fold(0, |m, &x| m | 1 << x)
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.excitation {
            Excitation::One { i, k } => write!(f, "O[{i},{k}]"),
            Excitation::Two { i, j, k, l } => write!(f, "O[{i},{j};{k},{l}]"),
        }
    }
}

/// Spin-projection filter applied on top of register number conservation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SzConservation {
    #[default]
    None,
    Total,
    PerRegister,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoolConfig {
    pub include_one_body: bool,
    pub include_two_body: bool,
    pub conserve_sz: SzConservation,
    /// Drop generators acting only on bath modes. They cannot change the
    /// system's reduced state, so distances are unaffected.
    pub exclude_bath_only: bool,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            include_one_body: true,
            include_two_body: true,
            conserve_sz: SzConservation::None,
            exclude_bath_only: false,
        }
    }
}

fn spin_up(m: usize) -> usize {
    usize::from(m % 2 == 0)
}

fn keep(layout: &ModeLayout, config: &PoolConfig, created: &[usize], annihilated: &[usize]) -> bool {
    let sys = |m: &usize| *m < layout.n_system_modes;
    if created.iter().filter(|m| sys(m)).count() != annihilated.iter().filter(|m| sys(m)).count() {
        return false;
    }
    if config.exclude_bath_only && created.iter().chain(annihilated).all(|m| !sys(m)) {
        return false;
    }
    let alpha = |list: &[usize], pick: &dyn Fn(&usize) -> bool| -> usize {
        list.iter().filter(|m| pick(m)).map(|&m| spin_up(m)).sum()
    };
    match config.conserve_sz {
        SzConservation::None => true,
        SzConservation::Total => alpha(created, &|_| true) == alpha(annihilated, &|_| true),
        SzConservation::PerRegister => {
            alpha(created, &sys) == alpha(annihilated, &sys)
                && alpha(created, &|m| !sys(m)) == alpha(annihilated, &|m| !sys(m))
        }
    }
}

/// Builds the ordered, duplicate-free generator pool for `layout`.
pub fn build_pool(layout: &ModeLayout, config: &PoolConfig) -> Result<Vec<Generator>> {
    if !config.include_one_body && !config.include_two_body {
        return Err(Error::Config("pool needs one-body or two-body generators".into()));
    }
    let n = layout.total_modes();
    let mut out = Vec::new();
    if config.include_one_body {
        for i in 0..n {
            for k in (i + 1)..n {
                if keep(layout, config, &[i], &[k]) {
                    out.push(Excitation::One { i, k });
                }
            }
        }
    }
    if config.include_two_body {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
        for &(i, j) in &pairs {
            for &(k, l) in &pairs {
                if (i, j) > (k, l) && keep(layout, config, &[i, j], &[k, l]) {
                    out.push(Excitation::Two { i, j, k, l });
                }
            }
        }
    }
    Ok(out
        .into_iter()
        .enumerate()
        .map(|(id, excitation)| Generator { id, excitation })
        .collect())
}

/// `Ô |state>` (unnormalized).
pub fn apply_generator<T: Real>(g: &Generator, state: &StateVector<T>) -> Result<StateVector<T>> {
    let (c, a) = g.x_strings();
    let forward = apply_excitation_string(state, &c, &a)?;
    // X† = a†_k a_i  /  a†_k a†_l a_i a_j
    let backward = apply_excitation_string(state, &a, &c)?;
    let amps = forward
        .amplitudes()
        .iter()
        .zip(backward.amplitudes())
        .map(|(f, b)| f - b)
        .collect();
    StateVector::from_amplitudes(state.basis().clone(), amps)
}

/// Sparse action of `X` on a basis: `X |from> = ± |to>`.
///
/// Since `X² = 0`, `Ô` acts on each pair `(from, to)` as a real 2x2 rotation
/// generator and annihilates every other basis state.
#[derive(Debug, Clone)]
pub struct GeneratorAction {
    pub pairs: Vec<ActionPair>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionPair {
    pub from: u32,
    pub to: u32,
    pub negative: bool,
}

impl GeneratorAction {
    pub fn new(g: &Generator, basis: &SectorBasis) -> Result<Self> {
        let (c, a) = g.x_strings();
        let total = basis.layout().total_modes();
        if let Some(&bad) = c.iter().chain(&a).find(|&&m| m >= total) {
            return Err(Error::ModeOutOfRange { index: bad, n_modes: total });
        }
        let mut pairs = Vec::new();
        for (from, &bits) in basis.states().iter().enumerate() {
            if let Some((to_bits, negative)) = apply_string_bits(bits, &c, &a) {
                let to = basis
                    .index_of(to_bits)
                    .ok_or(Error::SectorViolation { from: bits, to: to_bits })?;
                pairs.push(ActionPair { from: from as u32, to: to as u32, negative });
            }
        }
        Ok(GeneratorAction { pairs })
    }

    /// Number of basis states the generator acts on.
    pub fn active_len(&self) -> usize {
        2 * self.pairs.len()
    }
}
