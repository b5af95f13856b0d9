//! System-register 1- and 2-RDMs, Hilbert-Schmidt distances and contraction.
//!
//! Element conventions (system modes only):
//!
//! * 1-RDM: `ρ[i][j] = <a†_i a_j>`, trace `N`.
//! * 2-RDM, pair layout: rows `(i<j)`, columns `(k<l)` in lexicographic order,
//!   element `2 <a†_i a†_j a_l a_k>`, trace `N(N-1)`.
//! * 2-RDM, full-tensor layout: rows `i*n+j`, columns `k*n+l`, element
//!   `<a†_i a†_j a_l a_k>`, trace `N(N-1)`.
//!
//! The factor 2 in the pair layout makes the squared Frobenius norm of an
//! antisymmetric tensor equal in both layouts, so distances agree.

use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{apply_string_bits, SectorBasis, StateVector};
use crate::linalg::{eigvalsh, hermitian_part};
use crate::scalar::{binomial, czero, creal, Real, C};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RdmLayout {
    PairAntisym,
    FullTensor,
}

/// `p! · C(N, p)`.
pub fn normalization(p: usize, n_particles: usize) -> u64 {
    let fact: u64 = (1..=p as u64).product();
    fact * binomial(n_particles, p)
}

/// Lexicographic index of the pair `(i, j)`, `i < j`, among `n` modes.
#[inline]
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// All pairs `(i, j)`, `i < j`, in lexicographic order.
pub fn pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect()
}

/// A p-body matrix over system spin orbitals.
#[derive(Debug, Clone, PartialEq)]
pub struct RdmMatrix<T: Real = f64> {
    p: usize,
    n_modes: usize,
    n_particles: usize,
    layout: RdmLayout,
    data: Array2<C<T>>,
}

impl<T: Real> RdmMatrix<T> {
    /// Validates the data shape against `(p, n_modes, layout)`.
    ///
    /// One-body matrices always use [`RdmLayout::FullTensor`].
    pub fn new(p: usize, n_modes: usize, n_particles: usize, layout: RdmLayout, data: Array2<C<T>>) -> Result<Self> {
        let layout = if p == 1 { RdmLayout::FullTensor } else { layout };
        let dim = Self::dim_for(p, n_modes, layout)?;
        if data.nrows() != dim || data.ncols() != dim {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} data for p={p}, {n_modes} modes, {layout:?} (expected {dim}x{dim})",
                data.nrows(),
                data.ncols()
            )));
        }
        Ok(RdmMatrix { p, n_modes, n_particles, layout, data })
    }

    pub fn dim_for(p: usize, n_modes: usize, layout: RdmLayout) -> Result<usize> {
        match (p, layout) {
            (1, _) => Ok(n_modes),
            (2, RdmLayout::PairAntisym) => Ok(n_modes * n_modes.saturating_sub(1) / 2),
            (2, RdmLayout::FullTensor) => Ok(n_modes * n_modes),
            _ => Err(Error::Config(format!("unsupported body rank p={p}"))),
        }
    }

    pub fn zeros(p: usize, n_modes: usize, n_particles: usize, layout: RdmLayout) -> Result<Self> {
        let dim = Self::dim_for(p, n_modes, layout)?;
        Self::new(p, n_modes, n_particles, layout, Array2::from_elem((dim, dim), czero()))
    }

    pub fn p(&self) -> usize {
        self.p
    }
    pub fn n_modes(&self) -> usize {
        self.n_modes
    }
    pub fn n_particles(&self) -> usize {
        self.n_particles
    }
    pub fn layout(&self) -> RdmLayout {
        self.layout
    }
    pub fn data(&self) -> &Array2<C<T>> {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut Array2<C<T>> {
        &mut self.data
    }
    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn trace(&self) -> C<T> {
        (0..self.dim()).fold(czero(), |acc, i| acc + self.data[[i, i]])
    }

    /// Largest `|A - A†|` element.
    pub fn hermiticity_error(&self) -> T {
        let n = self.dim();
        let mut worst = T::zero();
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((self.data[[i, j]] - self.data[[j, i]].conj()).norm());
            }
        }
        worst
    }

    pub fn hermitized(&self) -> Self {
        RdmMatrix { data: hermitian_part(&self.data), ..self.clone() }
    }

    /// Convex combination `w·self + (1-w)·other` (same shape required).
    pub fn mix(&self, other: &Self, w: T) -> Result<Self> {
        self.check_same_shape(other)?;
        let data = &self.data.mapv(|x| x.scale(w)) + &other.data.mapv(|x| x.scale(T::one() - w));
        Ok(RdmMatrix { data, ..self.clone() })
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.p != other.p || self.n_modes != other.n_modes || self.layout != other.layout {
            return Err(Error::ShapeMismatch(format!(
                "p={} n={} {:?} vs p={} n={} {:?}",
                self.p, self.n_modes, self.layout, other.p, other.n_modes, other.layout
            )));
        }
        Ok(())
    }

    /// Re-expresses a 2-RDM in the full-tensor layout (exact).
    pub fn to_full_tensor(&self) -> Self {
        if self.layout == RdmLayout::FullTensor {
            return self.clone();
        }
        let n = self.n_modes;
        let half = T::lit(0.5);
        let mut full = Array2::from_elem((n * n, n * n), czero());
        let sorted = |a: usize, b: usize| if a < b { (a, b, false) } else { (b, a, true) };
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let (a, b, s1) = sorted(i, j);
                let r = pair_index(n, a, b);
                for k in 0..n {
                    for l in 0..n {
                        if k == l {
                            continue;
                        }
                        let (c, d, s2) = sorted(k, l);
                        let v = self.data[[r, pair_index(n, c, d)]].scale(half);
                        full[[i * n + j, k * n + l]] = if s1 ^ s2 { -v } else { v };
                    }
                }
            }
        }
        RdmMatrix { layout: RdmLayout::FullTensor, data: full, ..self.clone() }
    }

    /// Orthogonal projection of a full-tensor 2-RDM onto antisymmetric
    /// tensors, expressed in the pair layout, plus the squared norm of the
    /// discarded part. For antisymmetric `Γ`:
    /// `‖Γ - T‖²_full = ‖Γ_pair - T_pair‖² + residual`.
    pub fn to_pair_projection(&self) -> (Self, T) {
        if self.p != 2 || self.layout == RdmLayout::PairAntisym {
            return (self.clone(), T::zero());
        }
        let n = self.n_modes;
        let ps = pairs(n);
        let half = T::lit(0.5);
        let t = &self.data;
        let pair = Array2::from_shape_fn((ps.len(), ps.len()), |(r, c)| {
            let (i, j) = ps[r];
            let (k, l) = ps[c];
            (t[[i * n + j, k * n + l]] - t[[j * n + i, k * n + l]] - t[[i * n + j, l * n + k]] + t[[j * n + i, l * n + k]])
                .scale(half)
        });
        let total: T = t.iter().map(|x| x.norm_sqr()).sum();
        let kept: T = pair.iter().map(|x| x.norm_sqr()).sum();
        let residual = (total - kept).max(T::zero());
        (RdmMatrix { layout: RdmLayout::PairAntisym, data: pair, ..self.clone() }, residual)
    }
}

/// Squared Hilbert-Schmidt (Frobenius) distance.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Distance<T: Real = f64>(pub T);

impl<T: Real> Distance<T> {
    pub fn value(self) -> T {
        self.0
    }
}

/// `Σ_uv |a_uv - b_uv|²`. Mixed 2-RDM layouts are compared in the full tensor.
pub fn hs_distance<T: Real>(a: &RdmMatrix<T>, b: &RdmMatrix<T>) -> Result<Distance<T>> {
    if a.p != b.p || a.n_modes != b.n_modes {
        return Err(Error::ShapeMismatch(format!(
            "p={} n={} vs p={} n={}",
            a.p, a.n_modes, b.p, b.n_modes
        )));
    }
    if a.layout != b.layout {
        return hs_distance(&a.to_full_tensor(), &b.to_full_tensor());
    }
    Ok(Distance(frobenius_sq_diff(&a.data, &b.data)))
}

pub(crate) fn frobenius_sq_diff<T: Real>(a: &Array2<C<T>>, b: &Array2<C<T>>) -> T {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm_sqr()).sum()
}

/// Precomputed action of every system-register `E_uv` on a sector basis.
///
/// For basis state `b`, the entries `offsets[b]..offsets[b+1]` list
/// `E_uv |b> = ± |to>` with `uv` flattened to `elem`. `modes` is the mask of
/// system modes appearing in `E_uv`.
#[derive(Debug, Clone)]
pub struct RdmTable {
    pub p: usize,
    pub n_modes: usize,
    pub n_particles: usize,
    pub dim: usize,
    pub offsets: Vec<u32>,
    pub entries: Vec<RdmEntry>,
}

#[derive(Debug, Clone, Copy)]
pub struct RdmEntry {
    pub elem: u32,
    /// Flat index of the transposed element.
    pub mirror: u32,
    pub to: u32,
    pub modes: u32,
    pub negative: bool,
}

impl RdmTable {
    pub fn new(basis: &SectorBasis, p: usize) -> Result<Self> {
        let layout = basis.layout();
        let n = layout.n_system_modes;
        let np = layout.n_system_particles;
        if n > 32 {
            return Err(Error::InvalidLayout("RDM tables support at most 32 system modes".into()));
        }
        if p == 2 && np < 2 {
            return Err(Error::TooFewParticles { needed: 2, got: np });
        }
        let layout_kind = if p == 1 { RdmLayout::FullTensor } else { RdmLayout::PairAntisym };
        let dim = RdmMatrix::<f64>::dim_for(p, n, layout_kind)?;
        let sys_mask = layout.system_mask();
        let ps = pairs(n);
        let mut offsets = Vec::with_capacity(basis.len() + 1);
        let mut entries = Vec::new();
        offsets.push(0u32);
        for &bits in basis.states() {
            let sys = bits & sys_mask;
            let occ: Vec<usize> = (0..n).filter(|&m| sys >> m & 1 == 1).collect();
            let mut push = |elem: usize, cre: &[usize], ann: &[usize]| -> Result<()> {
                if let Some((to_bits, negative)) = apply_string_bits(bits, cre, ann) {
                    let to = basis.index_of(to_bits).ok_or(Error::SectorViolation { from: bits, to: to_bits })?;
                    let modes = cre.iter().chain(ann).fold(0u32, |m, &x| m | 1 << x);
                    let mirror = (elem % dim) * dim + elem / dim;
                    entries.push(RdmEntry { elem: elem as u32, mirror: mirror as u32, to: to as u32, modes, negative });
                }
                Ok(())
            };
            match p {
                1 => {
                    for &v in &occ {
                        for u in 0..n {
                            push(u * n + v, &[u], &[v])?;
                        }
                    }
                }
                2 => {
                    for (ka, &k) in occ.iter().enumerate() {
                        for &l in &occ[ka + 1..] {
                            let col = pair_index(n, k, l);
                            for (row, &(i, j)) in ps.iter().enumerate() {
                                // a†_i a†_j a_l a_k
                                push(row * dim + col, &[i, j], &[l, k])?;
                            }
                        }
                    }
                }
                _ => return Err(Error::Config(format!("unsupported body rank p={p}"))),
            }
            offsets.push(entries.len() as u32);
        }
        Ok(RdmTable { p, n_modes: n, n_particles: np, dim, offsets, entries })
    }

    /// Cached table for `(basis, p)`.
    pub fn for_basis(basis: &Arc<SectorBasis>, p: usize) -> Result<Arc<RdmTable>> {
        basis.rdm_table(p)
    }

    #[inline]
    pub fn row(&self, b: usize) -> &[RdmEntry] {
        &self.entries[self.offsets[b] as usize..self.offsets[b + 1] as usize]
    }

    /// Matrix scale factor: 2 for the pair layout, 1 otherwise.
    pub fn scale<T: Real>(&self) -> T {
        if self.p == 2 {
            T::lit(2.0)
        } else {
            T::one()
        }
    }

    pub fn layout(&self) -> RdmLayout {
        if self.p == 1 {
            RdmLayout::FullTensor
        } else {
            RdmLayout::PairAntisym
        }
    }

    /// Flat `<x|E_uv|y>·scale`, row-major `dim x dim`.
    pub fn transition_flat<T: Real>(&self, x: &[C<T>], y: &[C<T>]) -> Vec<C<T>> {
        let mut out = vec![czero(); self.dim * self.dim];
        for (b, yb) in y.iter().enumerate() {
            if *yb == czero() {
                continue;
            }
            for e in self.row(b) {
                let v = x[e.to as usize].conj() * yb;
                out[e.elem as usize] += if e.negative { -v } else { v };
            }
        }
        let s = self.scale::<T>();
        if s != T::one() {
            for v in &mut out {
                *v = v.scale(s);
            }
        }
        out
    }

    pub fn to_matrix<T: Real>(&self, flat: Vec<C<T>>) -> RdmMatrix<T> {
        let data = Array2::from_shape_vec((self.dim, self.dim), flat).expect("table dimension");
        RdmMatrix { p: self.p, n_modes: self.n_modes, n_particles: self.n_particles, layout: self.layout(), data }
    }

    /// RDM of `state` (which must live on the table's basis).
    pub fn rdm<T: Real>(&self, state: &StateVector<T>) -> RdmMatrix<T> {
        let a = state.amplitudes();
        self.to_matrix(self.transition_flat(a, a))
    }

    /// Transition matrix `<x|E_uv|y>` in the table's layout.
    pub fn transition<T: Real>(&self, x: &StateVector<T>, y: &StateVector<T>) -> RdmMatrix<T> {
        self.to_matrix(self.transition_flat(x.amplitudes(), y.amplitudes()))
    }
}

/// `ρ[i][j] = <a†_i a_j>` over system modes (bath traced out).
pub fn compute_1rdm<T: Real>(state: &StateVector<T>) -> RdmMatrix<T> {
    let table = RdmTable::for_basis(state.basis(), 1).expect("1-RDM table");
    table.rdm(state)
}

/// Pair-layout 2-RDM with trace `N(N-1)`.
pub fn compute_2rdm<T: Real>(state: &StateVector<T>) -> Result<RdmMatrix<T>> {
    let table = RdmTable::for_basis(state.basis(), 2)?;
    Ok(table.rdm(state))
}

/// RDM of rank `p`.
pub fn compute_rdm<T: Real>(state: &StateVector<T>, p: usize) -> Result<RdmMatrix<T>> {
    match p {
        1 => Ok(compute_1rdm(state)),
        2 => compute_2rdm(state),
        _ => Err(Error::Config(format!("unsupported body rank p={p}"))),
    }
}

/// `(N-1)⁻¹ Σ_j Γ[(i,j),(k,j)]`: the 1-RDM implied by a 2-RDM.
pub fn contract_2rdm<T: Real>(m: &RdmMatrix<T>) -> Result<RdmMatrix<T>> {
    if m.p != 2 {
        return Err(Error::ShapeMismatch(format!("contraction needs p=2, got p={}", m.p)));
    }
    if m.n_particles <= 1 {
        return Err(Error::TooFewParticles { needed: 2, got: m.n_particles });
    }
    let full = m.to_full_tensor();
    let n = m.n_modes;
    let inv = T::one() / T::count(m.n_particles - 1);
    let data = Array2::from_shape_fn((n, n), |(i, k)| {
        (0..n).fold(czero(), |acc, j| acc + full.data[[i * n + j, k * n + j]]).scale(inv)
    });
    RdmMatrix::new(1, n, m.n_particles, RdmLayout::FullTensor, data)
}

/// Eigenvalues of the Hermitian part, descending.
pub fn spectrum<T: Real>(m: &RdmMatrix<T>) -> Vec<T> {
    let mut v = eigvalsh(&m.data);
    v.reverse();
    v
}

/// A target reduced to the working layout of the optimizer.
///
/// One-body targets are used as-is. Two-body targets are held in the pair
/// layout; full-tensor targets are projected onto antisymmetric tensors and
/// the discarded squared norm is carried as a constant `offset`.
#[derive(Debug, Clone)]
pub struct ProjectedTarget<T: Real = f64> {
    pub matrix: RdmMatrix<T>,
    pub offset: T,
}

impl<T: Real> ProjectedTarget<T> {
    pub fn new(target: &RdmMatrix<T>) -> Self {
        let (matrix, offset) = target.to_pair_projection();
        ProjectedTarget { matrix, offset }
    }

    pub fn p(&self) -> usize {
        self.matrix.p
    }

    /// Distance of a working-layout RDM to the original target.
    pub fn distance(&self, rdm: &RdmMatrix<T>) -> Result<T> {
        if rdm.layout != self.matrix.layout || rdm.p != self.matrix.p || rdm.n_modes != self.matrix.n_modes {
            return Err(Error::ShapeMismatch("RDM does not match the target layout".into()));
        }
        Ok(frobenius_sq_diff(&rdm.data, &self.matrix.data) + self.offset)
    }
}

/// Identity-like helper used by tests and examples: `scale · I`.
pub fn scaled_identity<T: Real>(n_modes: usize, n_particles: usize, value: T) -> RdmMatrix<T> {
    let data = Array2::from_shape_fn((n_modes, n_modes), |(i, j)| if i == j { creal(value) } else { czero() });
    RdmMatrix { p: 1, n_modes, n_particles, layout: RdmLayout::FullTensor, data }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{build_determinant, build_purified_mixture, enumerate_sector, ModeLayout};

    fn basis(l: ModeLayout) -> Arc<SectorBasis> {
        Arc::new(enumerate_sector(l).unwrap())
    }

    #[test]
    fn pair_indexing() {
        let ps = pairs(5);
        for (n, &(i, j)) in ps.iter().enumerate() {
            assert_eq!(pair_index(5, i, j), n);
        }
        assert_eq!(ps.len(), 10);
        assert_eq!(normalization(1, 4), 4);
        assert_eq!(normalization(2, 4), 12);
    }

    #[test]
    fn determinant_rdms() {
        let b = basis(ModeLayout::pure(8, 4).unwrap());
        let d: StateVector<f64> = build_determinant(&b, &[0, 1, 2, 3]).unwrap();
        let r1 = compute_1rdm(&d);
        for i in 0..8 {
            let want = if i < 4 { 1.0 } else { 0.0 };
            assert_eq!(r1.data()[[i, i]], creal(want));
        }
        assert!((r1.trace().re - 4.0).abs() < 1e-14);
        let r2 = compute_2rdm(&d).unwrap();
        assert!((r2.trace().re - 12.0).abs() < 1e-14);
        let c = contract_2rdm(&r2).unwrap();
        assert!(frobenius_sq_diff(c.data(), r1.data()) < 1e-28);
    }

    #[test]
    fn vacuum_has_zero_rdm() {
        let b = basis(ModeLayout::pure(4, 0).unwrap());
        let v: StateVector<f64> = build_determinant(&b, &[]).unwrap();
        assert!(compute_1rdm(&v).data().iter().all(|x| x.norm() == 0.0));
        assert!(matches!(compute_2rdm(&v), Err(Error::TooFewParticles { .. })));
    }

    #[test]
    fn purified_mixture_spectrum() {
        // (4e,4o), w = 0.5 mixture of |1a1b2a2b> and |1a1b3a2b>
        let l = ModeLayout::ensemble(8, 4).unwrap();
        let eb = basis(l);
        let sb = basis(l.system_only());
        let r1: StateVector<f64> = build_determinant(&sb, &[0, 1, 2, 3]).unwrap();
        let r2: StateVector<f64> = build_determinant(&sb, &[0, 1, 4, 3]).unwrap();
        let psi = build_purified_mixture(&eb, &[(0.5, r1), (0.5, r2)]).unwrap();
        let ev = spectrum(&compute_1rdm(&psi));
        let want = [1.0, 1.0, 1.0, 0.5, 0.5, 0.0, 0.0, 0.0];
        for (a, b) in ev.iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{ev:?}");
        }
    }

    #[test]
    fn distance_between_pure_and_mixed_targets() {
        let b = basis(ModeLayout::pure(8, 4).unwrap());
        let r1: StateVector<f64> = build_determinant(&b, &[0, 1, 2, 3]).unwrap();
        let r2: StateVector<f64> = build_determinant(&b, &[0, 1, 4, 3]).unwrap();
        let a = compute_1rdm(&r1);
        let t = a.mix(&compute_1rdm(&r2), 0.5).unwrap();
        // element-wise: diagonal difference (0,0,0.5,0,-0.5,0,0,0)
        let oracle: f64 = (0..8).map(|i| (a.data()[[i, i]] - t.data()[[i, i]]).norm_sqr()).sum();
        let d = hs_distance(&a, &t).unwrap().value();
        assert!((d - 0.5).abs() < 1e-15 && (d - oracle).abs() < 1e-15);
        assert_eq!(hs_distance(&a, &a).unwrap().value(), 0.0);
        assert_eq!(hs_distance(&t, &a).unwrap().value(), d);
    }

    #[test]
    fn shape_mismatch() {
        let a = RdmMatrix::<f64>::zeros(1, 4, 2, RdmLayout::FullTensor).unwrap();
        let b = RdmMatrix::<f64>::zeros(1, 6, 2, RdmLayout::FullTensor).unwrap();
        assert!(hs_distance(&a, &b).is_err());
        assert!(RdmMatrix::<f64>::new(2, 4, 2, RdmLayout::PairAntisym, Array2::from_elem((4, 4), czero())).is_err());
    }

    #[test]
    fn full_tensor_round_trip_and_projection() {
        let b = basis(ModeLayout::pure(6, 3).unwrap());
        let mut s = StateVector::<f64>::zeros(b.clone());
        for (n, a) in s.amplitudes_mut().iter_mut().enumerate() {
            *a = C::new((n as f64).sin(), (0.3 * n as f64).cos());
        }
        let s = s.normalized();
        let pair = compute_2rdm(&s).unwrap();
        let full = pair.to_full_tensor();
        assert!((full.trace().re - 6.0).abs() < 1e-12);
        let (back, residual) = full.to_pair_projection();
        assert!(frobenius_sq_diff(back.data(), pair.data()) < 1e-26);
        assert!(residual.abs() < 1e-12);
        let zero = RdmMatrix::zeros(2, 6, 3, RdmLayout::PairAntisym).unwrap();
        let d_pair = hs_distance(&pair, &zero).unwrap().value();
        let d_full = hs_distance(&full, &zero.to_full_tensor()).unwrap().value();
        assert!((d_pair - d_full).abs() < 1e-12);
    }

    #[test]
    fn identity_spectrum() {
        let id = scaled_identity::<f64>(5, 5, 1.0);
        assert!(spectrum(&id).iter().all(|&x| (x - 1.0).abs() < 1e-15));
    }
}
