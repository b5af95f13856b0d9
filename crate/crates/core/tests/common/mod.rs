//! Dense brute-force oracle: explicit Jordan-Wigner Kronecker products on
//! the full `2^n` Fock space, used to check the sparse kernels.

#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nrep_core::adapt::apply_exponential;
use nrep_core::fock::{apply_excitation_string, enumerate_sector, ModeLayout, SectorBasis, StateVector};
use nrep_core::pool::{apply_generator, build_pool, Generator, PoolConfig};
use nrep_core::rdm::{compute_1rdm, compute_2rdm, pair_index};

pub const TOL: f64 = 1e-12;

pub type Mat = DMatrix<Complex64>;
pub type Vector = DVector<Complex64>;

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn kron_all(factors: &[Mat]) -> Mat {
    factors.iter().skip(1).fold(factors[0].clone(), |acc, f| acc.kronecker(f))
}

/// `a_j = I ⊗ ... ⊗ σ⁻ ⊗ Z ⊗ ... ⊗ Z`, mode 0 least significant.
pub fn annihilator(n: usize, j: usize) -> Mat {
    let id = Mat::identity(2, 2);
    let z = Mat::from_diagonal(&Vector::from_vec(vec![c(1.0), c(-1.0)]));
    let mut lower = Mat::zeros(2, 2);
    lower[(0, 1)] = c(1.0);
    let factors: Vec<Mat> = (0..n)
        .rev()
        .map(|m| match m.cmp(&j) {
            std::cmp::Ordering::Greater => id.clone(),
            std::cmp::Ordering::Equal => lower.clone(),
            std::cmp::Ordering::Less => z.clone(),
        })
        .collect();
    kron_all(&factors)
}

pub struct Dense {
    pub a: Vec<Mat>,
}

impl Dense {
    pub fn new(n: usize) -> Self {
        Dense { a: (0..n).map(|j| annihilator(n, j)).collect() }
    }

    pub fn dag(&self, j: usize) -> Mat {
        self.a[j].adjoint()
    }

    /// `a†_{c0} a†_{c1} ... a_{a0} a_{a1} ...`
    pub fn string(&self, cre: &[usize], ann: &[usize]) -> Mat {
        let dim = self.a[0].nrows();
        let mut op = Mat::identity(dim, dim);
        for &m in cre {
            op *= self.dag(m);
        }
        for &m in ann {
            op *= &self.a[m];
        }
        op
    }
}

pub fn embed(state: &StateVector<f64>) -> Vector {
    let n = state.layout().total_modes();
    let mut v = Vector::zeros(1 << n);
    for (amp, &bits) in state.amplitudes().iter().zip(state.basis().states()) {
        v[bits as usize] = *amp;
    }
    v
}

pub fn random_state(basis: &Arc<SectorBasis>, rng: &mut impl Rng) -> StateVector<f64> {
    let amps = (0..basis.len()).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    StateVector::from_amplitudes(basis.clone(), amps).unwrap().normalized()
}

pub fn max_diff(a: &Vector, b: &Vector) -> f64 {
    (a - b).iter().map(|x| x.norm()).fold(0.0, f64::max)
}

pub fn layouts() -> Vec<ModeLayout> {
    let mut out = Vec::new();
    for n in 2..=6 {
        for np in 1..n {
            out.push(ModeLayout::pure(n, np).unwrap());
        }
    }
    for n in 2..=3 {
        for np in 1..n {
            out.push(ModeLayout::ensemble(n, np).unwrap());
        }
    }
    out
}

pub fn pick(rng: &mut ChaCha8Rng, lo: usize, hi: usize, k: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (lo..hi).collect();
    for i in 0..k {
        let j = rng.random_range(i..v.len());
        v.swap(i, j);
    }
    v.truncate(k);
    v
}

/// Creation/annihilation strings of equal length per register, so the
/// result stays inside the sector of `layout`.
pub fn random_string(layout: &ModeLayout, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let ns = layout.n_system_modes;
    let ks = rng.random_range(1..=2.min(ns));
    let mut cre = pick(rng, 0, ns, ks);
    let mut ann = pick(rng, 0, ns, ks);
    if layout.is_ensemble() && rng.random_bool(0.5) {
        cre.extend(pick(rng, ns, 2 * ns, 1));
        ann.extend(pick(rng, ns, 2 * ns, 1));
    }
    (cre, ann)
}

pub fn dense_generator(dense: &Dense, g: &Generator) -> Mat {
    let (c, a) = g.x_strings();
    let x = dense.string(&c, &a);
    &x - x.adjoint()
}

/// Bath-register slices of `psi`: `ρ_sys = Σ_b |ψ_b⟩⟨ψ_b|` is the explicit
/// partial trace. System modes are the low bits, so a Fock index splits as
/// `bath << n_sys | sys`.
fn bath_slices(psi: &Vector, n_sys: usize, n_total: usize) -> Vec<Vector> {
    let ds = 1 << n_sys;
    (0..1usize << (n_total - n_sys)).map(|b| psi.rows(b * ds, ds).into_owned()).collect()
}

/// `tr(ρ_sys A† B)` from the slices.
fn expect(slices: &[Vector], a: &Mat, b: &Mat) -> Complex64 {
    slices.iter().map(|v| (a * v).dotc(&(b * v))).sum()
}

/// Outcome of one randomized sweep.
#[derive(Debug, Default)]
pub struct Sweep {
    pub cases: usize,
    pub max_error: f64,
    pub worst: String,
}

impl Sweep {
    fn record(&mut self, err: f64, what: impl FnOnce() -> String) {
        self.cases += 1;
        if err > self.max_error || self.worst.is_empty() {
            self.max_error = self.max_error.max(err);
            self.worst = what();
        }
    }

    pub fn ok(&self, min_cases: usize) -> bool {
        self.cases >= min_cases && self.max_error < TOL
    }
}

/// Excitation strings against dense operator products.
pub fn string_sweep(seed: u64, per_layout: usize) -> Sweep {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Sweep::default();
    for layout in layouts() {
        let basis = Arc::new(enumerate_sector(layout).unwrap());
        let dense = Dense::new(layout.total_modes());
        for _ in 0..per_layout {
            let psi = random_state(&basis, &mut rng);
            let (cre, ann) = random_string(&layout, &mut rng);
            let sparse = apply_excitation_string(&psi, &cre, &ann).unwrap();
            let expected = dense.string(&cre, &ann) * embed(&psi);
            out.record(max_diff(&embed(&sparse), &expected), || format!("{layout} {cre:?} {ann:?}"));
        }
    }
    out
}

/// Generator action, antihermiticity and `exp(θ Ô)` against dense matrices
/// and a dense matrix exponential.
pub fn generator_sweep(seed: u64, per_layout: usize) -> Sweep {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Sweep::default();
    for layout in layouts() {
        let basis = Arc::new(enumerate_sector(layout).unwrap());
        let dense = Dense::new(layout.total_modes());
        let pool = build_pool(&layout, &PoolConfig::default()).unwrap();
        for _ in 0..per_layout {
            let g = &pool[rng.random_range(0..pool.len())];
            let psi = random_state(&basis, &mut rng);
            let op = dense_generator(&dense, g);
            let anti = (&op + op.adjoint()).iter().map(|x| x.norm()).fold(0.0, f64::max);
            let applied = apply_generator(g, &psi).unwrap();
            let e_apply = max_diff(&embed(&applied), &(&op * embed(&psi)));
            let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let rotated = apply_exponential(g, theta, &psi).unwrap();
            let e_exp = max_diff(&embed(&rotated), &(op.scale(theta).exp() * embed(&psi)));
            let e_norm = (rotated.norm() - 1.0).abs();
            let err = anti.max(e_apply).max(e_exp).max(e_norm);
            out.record(err, || format!("{layout} {g:?} theta={theta}"));
        }
    }
    out
}

/// 1- and 2-RDMs against expectation values with the bath traced out.
pub fn rdm_sweep(seed: u64, per_layout: usize) -> Sweep {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Sweep::default();
    for layout in layouts() {
        let basis = Arc::new(enumerate_sector(layout).unwrap());
        let n = layout.n_system_modes;
        let sys = Dense::new(n);
        let pairs: Vec<Vec<Mat>> = (0..n).map(|k| (0..n).map(|l| &sys.a[l] * &sys.a[k]).collect()).collect();
        for _ in 0..per_layout {
            let psi = random_state(&basis, &mut rng);
            let slices = bath_slices(&embed(&psi), n, layout.total_modes());
            let trace: f64 = slices.iter().map(|v| v.norm_squared()).sum();
            let mut err = (trace - 1.0).abs();

            // ⟨a†_u a_v⟩ = Σ_b ⟨a_u ψ_b | a_v ψ_b⟩
            let g1 = compute_1rdm(&psi);
            for u in 0..n {
                for v in 0..n {
                    let e = expect(&slices, &sys.a[u], &sys.a[v]);
                    err = err.max((g1.data()[[u, v]] - e).norm());
                }
            }
            if layout.n_system_particles >= 2 {
                // ⟨a†_i a†_j a_l a_k⟩ = Σ_b ⟨a_j a_i ψ_b | a_l a_k ψ_b⟩; the pair layout stores twice that.
                let g2 = compute_2rdm(&psi).unwrap();
                let full = g2.to_full_tensor();
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            for l in 0..n {
                                let e = expect(&slices, &pairs[i][j], &pairs[k][l]);
                                err = err.max((full.data()[[i * n + j, k * n + l]] - e).norm());
                                if i < j && k < l {
                                    let p = g2.data()[[pair_index(n, i, j), pair_index(n, k, l)]];
                                    err = err.max((p - e.scale(2.0)).norm());
                                }
                            }
                        }
                    }
                }
            }
            out.record(err, || format!("{layout}"));
        }
    }
    out
}
