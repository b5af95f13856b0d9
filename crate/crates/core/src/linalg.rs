//! Dense Hermitian eigen-decomposition (cyclic complex Jacobi).
//!
//! Matrices here are small (RDMs up to 28x28, CI matrices up to a few
//! hundred), so a plain Jacobi sweep is accurate to machine precision and
//! keeps the routine generic over [`Real`].

use ndarray::Array2;

use crate::scalar::{czero, Real, C};

/// Eigenvalues (ascending) and unit eigenvectors (as columns).
#[derive(Debug, Clone)]
pub struct EigenDecomposition<T: Real> {
    pub values: Vec<T>,
    pub vectors: Array2<C<T>>,
}

/// `(A + A†) / 2`.
pub fn hermitian_part<T: Real>(a: &Array2<C<T>>) -> Array2<C<T>> {
    let n = a.nrows();
    let half = T::lit(0.5);
    Array2::from_shape_fn((n, n), |(i, j)| (a[[i, j]] + a[[j, i]].conj()).scale(half))
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn eigvalsh<T: Real>(a: &Array2<C<T>>) -> Vec<T> {
    jacobi(a, false).values
}

/// Full eigen-decomposition of a Hermitian matrix.
///
/// Eigenvectors are returned with a fixed phase: the first component whose
/// magnitude is within `1e-8` of the largest is made real and positive.
pub fn eigh<T: Real>(a: &Array2<C<T>>) -> EigenDecomposition<T> {
    jacobi(a, true)
}

fn jacobi<T: Real>(input: &Array2<C<T>>, want_vectors: bool) -> EigenDecomposition<T> {
    assert_eq!(input.nrows(), input.ncols(), "eigh needs a square matrix");
    let n = input.nrows();
    let mut a = hermitian_part(input);
    let mut v = Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            C::new(T::one(), T::zero())
        } else {
            czero()
        }
    });

    let scale: T = a.iter().map(|x| x.norm_sqr()).sum::<T>().sqrt().max(T::min_positive_value());
    let eps = T::epsilon() * T::lit(0.5);

    for _sweep in 0..100 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[[i, j]].norm_sqr())
            .sum::<T>()
            .sqrt();
        if off <= eps * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                let r = apq.norm();
                if r <= eps * scale * T::lit(1e-3) {
                    continue;
                }
                let phase = apq.unscale(r); // e^{iφ}
                let app = a[[p, p]].re;
                let aqq = a[[q, q]].re;
                let theta = (aqq - app) / (T::lit(2.0) * r);
                let t = {
                    let s = if theta >= T::zero() { T::one() } else { -T::one() };
                    s / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                // G = diag(1, e^{-iφ}) · [[c, s], [-s, c]]
                let pc = phase.conj();
                let g_pp = C::new(c, T::zero());
                let g_pq = C::new(s, T::zero());
                let g_qp = pc.scale(-s);
                let g_qq = pc.scale(c);
                // A <- A G (columns p, q)
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = akp * g_pp + akq * g_qp;
                    a[[k, q]] = akp * g_pq + akq * g_qq;
                }
                // A <- G† A (rows p, q)
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = g_pp.conj() * apk + g_qp.conj() * aqk;
                    a[[q, k]] = g_pq.conj() * apk + g_qq.conj() * aqk;
                }
                a[[p, q]] = czero();
                a[[q, p]] = czero();
                a[[p, p]].im = T::zero();
                a[[q, q]].im = T::zero();
                if want_vectors {
                    for k in 0..n {
                        let vkp = v[[k, p]];
                        let vkq = v[[k, q]];
                        v[[k, p]] = vkp * g_pp + vkq * g_qp;
                        v[[k, q]] = vkp * g_pq + vkq * g_qq;
                    }
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[[i, i]]
            .re
            .partial_cmp(&a[[j, j]].re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let values = order.iter().map(|&i| a[[i, i]].re).collect();
    let vectors = if want_vectors {
        let mut out = Array2::from_elem((n, n), czero());
        for (col, &src) in order.iter().enumerate() {
            let big = (0..n).map(|k| v[[k, src]].norm()).fold(T::zero(), T::max);
            let pivot = (0..n)
                .find(|&k| v[[k, src]].norm() >= big - T::lit(1e-8))
                .unwrap_or(0);
            let ph = v[[pivot, src]];
            let fix = if ph.norm() > T::zero() {
                ph.conj().unscale(ph.norm())
            } else {
                C::new(T::one(), T::zero())
            };
            for k in 0..n {
                out[[k, col]] = v[[k, src]] * fix;
            }
        }
        out
    } else {
        Array2::from_elem((0, 0), czero())
    };
    EigenDecomposition { values, vectors }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C<f64> {
        C::new(re, im)
    }

    #[test]
    fn two_by_two_complex() {
        // [[2, i], [-i, 2]] has eigenvalues 1 and 3.
        let a = ndarray::arr2(&[[c(2.0, 0.0), c(0.0, 1.0)], [c(0.0, -1.0), c(2.0, 0.0)]]);
        let e = eigh(&a);
        assert!((e.values[0] - 1.0).abs() < 1e-14);
        assert!((e.values[1] - 3.0).abs() < 1e-14);
        for col in 0..2 {
            let x = e.vectors.column(col).to_owned();
            let ax = a.dot(&x);
            for k in 0..2 {
                assert!((ax[k] - x[k] * e.values[col]).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn diagonal_is_sorted() {
        let a = Array2::from_shape_fn((4, 4), |(i, j)| if i == j { c(3.0 - i as f64, 0.0) } else { c(0.0, 0.0) });
        assert_eq!(eigvalsh(&a), vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn reconstructs_random_hermitian() {
        let n = 7;
        let mut seed = 12345u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut a = Array2::from_elem((n, n), c(0.0, 0.0));
        for i in 0..n {
            for j in i..n {
                let z = if i == j { c(next(), 0.0) } else { c(next(), next()) };
                a[[i, j]] = z;
                a[[j, i]] = z.conj();
            }
        }
        let e = eigh(&a);
        let mut rebuilt = Array2::from_elem((n, n), c(0.0, 0.0));
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    rebuilt[[i, j]] += e.vectors[[i, k]] * e.vectors[[j, k]].conj() * e.values[k];
                }
            }
        }
        let err: f64 = (&rebuilt - &a).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-13, "{err}");
    }

    #[test]
    fn runs_in_single_precision() {
        let a = ndarray::arr2(&[[C::new(1.0f32, 0.0), C::new(0.5, 0.0)], [C::new(0.5, 0.0), C::new(1.0, 0.0)]]);
        let v = eigvalsh(&a);
        assert!((v[0] - 0.5).abs() < 1e-6 && (v[1] - 1.5).abs() < 1e-6);
    }
}
