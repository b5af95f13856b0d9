//! Fast evaluation of the distance along `exp(θ Ô)` for every pool generator.
//!
//! With `Ψ` viewed as a `system x bath` matrix `M`, every generator factors as
//! `X = ζ S ⊗ B` with `S` a system and `B` a bath string. Since the system RDM
//! only sees `Tr_b`, all bath dependence enters through matrices `M F M†` for
//! a handful of bath operators `F` built from `B`; these are shared by every
//! generator with the same bath string and computed once per iteration.
//!
//! Along the line, `Ψ(θ) = Q + cos θ P + sin θ A` with `A = ÔΨ` and
//! `P = -Ô²Ψ`, giving `ρ(θ) - ρ(0) = (c-1) N₁ + s N₂ + s² N₃ + cs N₄` where
//!
//! * `N₁ = L(P Q†) + h.c.`, `N₂ = L(A Q†) + h.c.`,
//! * `N₃ = L(A A† - P P†)`, `N₄ = L(A P†) + h.c.`,
//!
//! and `L(σ)_uv = Tr(E_uv σ)` over the system register.

use std::collections::HashMap;
use std::sync::Arc;

use crate::adapt::TrigModel;
use crate::error::{Error, Result};
use crate::fock::{apply_string_bits, enumerate_sector, SectorBasis};
use crate::pool::Generator;
use crate::rdm::RdmTable;
use crate::scalar::{czero, Real, C};

/// Signed partial permutation: `op|from⟩ = ±|to⟩`, sorted by `from`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub(crate) struct Links(Vec<(u32, u32, bool)>);

impl Links {
    fn from_string(states: &[u64], index: impl Fn(u64) -> Option<usize>, cre: &[usize], ann: &[usize]) -> Result<Self> {
        let mut out = Vec::new();
        for (from, &bits) in states.iter().enumerate() {
            if let Some((to_bits, neg)) = apply_string_bits(bits, cre, ann) {
                let to = index(to_bits).ok_or(Error::SectorViolation { from: bits, to: to_bits })?;
                out.push((from as u32, to as u32, neg));
            }
        }
        Ok(Links(out))
    }

    fn transpose(&self) -> Links {
        let mut v: Vec<_> = self.0.iter().map(|&(f, t, n)| (t, f, n)).collect();
        v.sort_unstable();
        Links(v)
    }

    /// Matrix product `self · other` (apply `other` first).
    fn product(&self, other: &Links, dim: usize) -> Links {
        let mut next = vec![None; dim];
        for &(f, t, n) in &self.0 {
            next[f as usize] = Some((t, n));
        }
        let mut v: Vec<_> = other
            .0
            .iter()
            .filter_map(|&(f, m, n1)| next[m as usize].map(|(t, n2)| (f, t, n1 ^ n2)))
            .collect();
        v.sort_unstable();
        Links(v)
    }

    fn targets(&self) -> Vec<u32> {
        let mut v: Vec<u32> = self.0.iter().map(|l| l.1).collect();
        v.sort_unstable();
        v
    }

    fn sources(&self) -> Vec<u32> {
        self.0.iter().map(|l| l.0).collect()
    }
}

/// Bath operators referenced by one generator (indices into the shared
/// operator list, `None` when the product vanishes).
#[derive(Debug, Clone, Copy, Default)]
struct BathRefs {
    p1: Option<usize>,
    p2: Option<usize>,
    p12: Option<usize>,
    bt: Option<usize>,
    b: Option<usize>,
    bt_p1: Option<usize>,
    bt_p2: Option<usize>,
    b_p1: Option<usize>,
    b_p2: Option<usize>,
    bt_bt: Option<usize>,
    b_b: Option<usize>,
}

#[derive(Debug, Clone)]
struct Plan {
    zeta_neg: bool,
    sys_modes: u32,
    s: Links,
    /// Supports of `S Sᵀ` and `Sᵀ S`.
    pi1: Vec<u32>,
    pi2: Vec<u32>,
    rows: Vec<u32>,
    bath: BathRefs,
}

/// Per-run precomputation for a fixed basis, pool and RDM rank.
pub(crate) struct ScanPlan {
    n_sys: usize,
    n_bath: usize,
    table: Arc<RdmTable>,
    plans: Vec<Option<Plan>>,
    bath_ops: Vec<Links>,
}

impl ScanPlan {
    pub(crate) fn new(basis: &SectorBasis, pool: &[Generator], p: usize) -> Result<Self> {
        let layout = *basis.layout();
        let n_sys = basis.n_system_states();
        let n_bath = basis.len() / n_sys;
        let sys_basis = enumerate_sector(layout.system_only())?;
        let table = sys_basis.rdm_table(p)?;
        let sys_states: Vec<u64> = sys_basis.states().to_vec();
        let bath_states: Vec<u64> = (0..n_bath).map(|b| basis.state(b * n_sys) >> layout.n_system_modes).collect();
        let sys_first = sys_states[0];
        let bath_index = |bits: u64| basis.index_of(sys_first | bits << layout.n_system_modes).map(|i| i / n_sys);
        let sys_index = |bits: u64| sys_basis.index_of(bits);
        let sys_mask = layout.system_mask();
        let ns = layout.n_system_modes;

        let mut interned: HashMap<Links, usize> = HashMap::new();
        let mut bath_ops: Vec<Links> = Vec::new();
        let mut intern = |l: Links| -> Option<usize> {
            if l.0.is_empty() {
                return None;
            }
            let next = bath_ops.len();
            Some(*interned.entry(l.clone()).or_insert_with(|| {
                bath_ops.push(l);
                next
            }))
        };

        let mut plans = Vec::with_capacity(pool.len());
        for g in pool {
            let sys_modes = (g.mode_mask() & sys_mask) as u32;
            if sys_modes == 0 {
                plans.push(None);
                continue;
            }
            let (cre, ann) = g.x_strings();
            let split = |v: &[usize], sys: bool| -> Vec<usize> {
                v.iter().filter(|&&m| (m < ns) == sys).map(|&m| if sys { m } else { m - ns }).collect()
            };
            let s = Links::from_string(&sys_states, sys_index, &split(&cre, true), &split(&ann, true))?;
            let b = Links::from_string(&bath_states, bath_index, &split(&cre, false), &split(&ann, false))?;
            if s.0.is_empty() || b.0.is_empty() {
                plans.push(None);
                continue;
            }
            // fix ζ from one explicit action of X
            let (sf, st, sn) = s.0[0];
            let (bf, bt_, bn) = b.0[0];
            let from_bits = sys_states[sf as usize] | bath_states[bf as usize] << ns;
            let (to_bits, xn) = apply_string_bits(from_bits, &cre, &ann)
                .ok_or_else(|| Error::Config(format!("generator {g} does not factor over registers")))?;
            debug_assert_eq!(to_bits, sys_states[st as usize] | bath_states[bt_ as usize] << ns);
            let zeta_neg = xn ^ sn ^ bn;

            let bt = b.transpose();
            let p1 = b.product(&bt, n_bath);
            let p2 = bt.product(&b, n_bath);
            let bath = BathRefs {
                p12: intern(p1.product(&p2, n_bath)),
                bt_p1: intern(bt.product(&p1, n_bath)),
                bt_p2: intern(bt.product(&p2, n_bath)),
                b_p1: intern(b.product(&p1, n_bath)),
                b_p2: intern(b.product(&p2, n_bath)),
                bt_bt: intern(bt.product(&bt, n_bath)),
                b_b: intern(b.product(&b, n_bath)),
                p1: intern(p1),
                p2: intern(p2),
                bt: intern(bt),
                b: intern(b),
            };
            let pi1 = s.targets();
            let pi2 = s.sources();
            let mut rows: Vec<u32> = pi1.iter().chain(&pi2).copied().collect();
            rows.sort_unstable();
            rows.dedup();
            plans.push(Some(Plan { zeta_neg, sys_modes, s, pi1, pi2, rows, bath }));
        }
        Ok(ScanPlan { n_sys, n_bath, table, plans, bath_ops })
    }

    /// `M F M†` for every referenced bath operator `F`, row-major `n_sys²`.
    pub(crate) fn bath_products<T: Real>(&self, amps: &[C<T>]) -> Vec<Vec<C<T>>> {
        let n = self.n_sys;
        debug_assert_eq!(amps.len(), n * self.n_bath);
        self.bath_ops
            .iter()
            .map(|op| {
                let mut g = vec![czero(); n * n];
                for &(from, to, neg) in &op.0 {
                    let col_to = &amps[to as usize * n..(to as usize + 1) * n];
                    let col_from = &amps[from as usize * n..(from as usize + 1) * n];
                    for (s, &a) in col_to.iter().enumerate() {
                        if a == czero() {
                            continue;
                        }
                        let a = if neg { -a } else { a };
                        let row = &mut g[s * n..(s + 1) * n];
                        for (x, b) in row.iter_mut().zip(col_from) {
                            *x += a * b.conj();
                        }
                    }
                }
                g
            })
            .collect()
    }

    pub(crate) fn scratch<T: Real>(&self) -> Scratch<T> {
        let n = self.n_sys;
        let elems = self.table.dim * self.table.dim;
        Scratch {
            x: vec![vec![czero(); n * n]; 4],
            elem_epoch: vec![0; elems],
            acc: vec![[czero(); 4]; elems],
            touched: Vec::new(),
            epoch: 0,
        }
    }

    /// Distance model for generator `i`, or `None` if it cannot move the RDM.
    pub(crate) fn model<T: Real>(
        &self,
        i: usize,
        gm: &[Vec<C<T>>],
        residual: &[C<T>],
        d0: T,
        sc: &mut Scratch<T>,
    ) -> Option<TrigModel<T>> {
        let plan = self.plans[i].as_ref()?;
        let n = self.n_sys;
        let g = |id: Option<usize>| id.map(|k| &gm[k][..]);
        let zeta = if plan.zeta_neg { -T::one() } else { T::one() };
        let sgn = |neg: bool| if neg { -T::one() } else { T::one() };
        let [x1, x2, x3, x4] = &mut sc.x[..] else { unreachable!() };
        let br = &plan.bath;
        let pis = [&plan.pi1, &plan.pi2];

        // X₁ = PM† - PP†
        for (pi, f) in pis.iter().zip([br.p1, br.p2]) {
            if let Some(gf) = g(f) {
                for &s in pi.iter() {
                    let s = s as usize;
                    for (x, v) in x1[s * n..(s + 1) * n].iter_mut().zip(&gf[s * n..(s + 1) * n]) {
                        *x += v;
                    }
                }
            }
        }
        // PP† into X₁ (minus) and X₃ (minus)
        for (xi, pi_x) in pis.iter().enumerate() {
            for (yi, pi_y) in pis.iter().enumerate() {
                let f = if xi != yi {
                    br.p12
                } else if xi == 0 {
                    br.p1
                } else {
                    br.p2
                };
                if let Some(gf) = g(f) {
                    for &s in pi_x.iter() {
                        for &t in pi_y.iter() {
                            let at = s as usize * n + t as usize;
                            let v = gf[at];
                            x1[at] -= v;
                            x3[at] -= v;
                        }
                    }
                }
            }
        }
        // A M† = ζ (S G[Bᵀ] - Sᵀ G[B]) into X₂
        for &(r, q, neg) in &plan.s.0 {
            let (r, q) = (r as usize, q as usize);
            let w = zeta * sgn(neg);
            if let Some(gf) = g(br.bt) {
                for (x, v) in x2[q * n..(q + 1) * n].iter_mut().zip(&gf[r * n..(r + 1) * n]) {
                    *x += v.scale(w);
                }
            }
            if let Some(gf) = g(br.b) {
                for (x, v) in x2[r * n..(r + 1) * n].iter_mut().zip(&gf[q * n..(q + 1) * n]) {
                    *x -= v.scale(w);
                }
            }
        }
        // A P† = ζ Σ_y (S G[Bᵀ Πʸ] - Sᵀ G[B Πʸ]) Πʸ_S into X₄ and X₂ (minus)
        for (pi_y, (fs, fst)) in pis.iter().zip([(br.bt_p1, br.b_p1), (br.bt_p2, br.b_p2)]) {
            for &(r, q, neg) in &plan.s.0 {
                let (r, q) = (r as usize, q as usize);
                let w = zeta * sgn(neg);
                if let Some(gf) = g(fs) {
                    for &c in pi_y.iter() {
                        let v = gf[r * n + c as usize].scale(w);
                        x4[q * n + c as usize] += v;
                        x2[q * n + c as usize] -= v;
                    }
                }
                if let Some(gf) = g(fst) {
                    for &c in pi_y.iter() {
                        let v = gf[q * n + c as usize].scale(w);
                        x4[r * n + c as usize] -= v;
                        x2[r * n + c as usize] += v;
                    }
                }
            }
        }
        // A A† = S G[BᵀB] Sᵀ - S G[BᵀBᵀ] S - Sᵀ G[BB] Sᵀ + Sᵀ G[BBᵀ] S into X₃
        for &(r, q, n1) in &plan.s.0 {
            for &(r2, q2, n2) in &plan.s.0 {
                let w = sgn(n1 ^ n2);
                let (r, q, r2, q2) = (r as usize, q as usize, r2 as usize, q2 as usize);
                if let Some(gf) = g(br.p2) {
                    x3[q * n + q2] += gf[r * n + r2].scale(w);
                }
                if let Some(gf) = g(br.bt_bt) {
                    x3[q * n + r2] -= gf[r * n + q2].scale(w);
                }
                if let Some(gf) = g(br.b_b) {
                    x3[r * n + q2] -= gf[q * n + r2].scale(w);
                }
                if let Some(gf) = g(br.p1) {
                    x3[r * n + r2] += gf[q * n + q2].scale(w);
                }
            }
        }

        // L over the touched rows, then clear them
        sc.epoch = sc.epoch.wrapping_add(1);
        if sc.epoch == 0 {
            sc.elem_epoch.iter_mut().for_each(|e| *e = 0);
            sc.epoch = 1;
        }
        sc.touched.clear();
        let epoch = sc.epoch;
        let [x1, x2, x3, x4] = &mut sc.x[..] else { unreachable!() };
        for &s in &plan.rows {
            let s = s as usize;
            for e in self.table.row(s) {
                if e.modes & plan.sys_modes == 0 {
                    continue;
                }
                let at = s * n + e.to as usize;
                let mut v = [x1[at], x2[at], x3[at], x4[at]];
                if e.negative {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
                for (elem, vals) in [(e.elem as usize, v), (e.mirror as usize, [v[0].conj(), v[1].conj(), czero(), v[3].conj()])] {
                    if sc.elem_epoch[elem] != epoch {
                        sc.elem_epoch[elem] = epoch;
                        sc.acc[elem] = [czero(); 4];
                        sc.touched.push(elem as u32);
                    }
                    let a = &mut sc.acc[elem];
                    for k in 0..4 {
                        a[k] += vals[k];
                    }
                }
            }
        }
        for &s in &plan.rows {
            let s = s as usize;
            for x in [&mut *x1, &mut *x2, &mut *x3, &mut *x4] {
                x[s * n..(s + 1) * n].iter_mut().for_each(|v| *v = czero());
            }
        }

        let mut g = [T::zero(); 4];
        let mut gram = [[T::zero(); 4]; 4];
        for &e in &sc.touched {
            let e = e as usize;
            let nk = sc.acc[e];
            let r = residual[e].conj();
            for k in 0..4 {
                g[k] += (r * nk[k]).re;
                for l in k..4 {
                    gram[k][l] += (nk[k].conj() * nk[l]).re;
                }
            }
        }
        let scale: T = self.table.scale();
        let s2 = scale * scale;
        for k in 0..4 {
            g[k] = g[k] * T::lit(2.0) * scale;
            for l in k..4 {
                gram[k][l] = gram[k][l] * s2;
                gram[l][k] = gram[k][l];
            }
        }
        Some(TrigModel { d0, g, gram })
    }
}

pub(crate) struct Scratch<T: Real> {
    x: Vec<Vec<C<T>>>,
    elem_epoch: Vec<u32>,
    acc: Vec<[C<T>; 4]>,
    touched: Vec<u32>,
    epoch: u32,
}
