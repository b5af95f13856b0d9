mod common;

use common::{annihilator, generator_sweep, rdm_sweep, string_sweep, Mat, TOL};

#[test]
fn operator_strings_match_dense_products() {
    let s = string_sweep(11, 30);
    assert!(s.ok(500), "{s:?}");
}

#[test]
fn generators_and_exponentials_match_dense_matrices() {
    let s = generator_sweep(12, 30);
    assert!(s.ok(500), "{s:?}");
}

#[test]
fn rdms_match_traced_out_density_matrices() {
    let s = rdm_sweep(13, 12);
    assert!(s.ok(200), "{s:?}");
}

#[test]
fn dense_annihilators_anticommute() {
    for n in 1..=4 {
        let a: Vec<Mat> = (0..n).map(|j| annihilator(n, j)).collect();
        let dim = 1 << n;
        for i in 0..n {
            for j in 0..n {
                let anti = &a[i] * a[j].adjoint() + a[j].adjoint() * &a[i];
                let expected = if i == j { Mat::identity(dim, dim) } else { Mat::zeros(dim, dim) };
                assert!((anti - expected).iter().all(|x| x.norm() < TOL));
                let aa = &a[i] * &a[j] + &a[j] * &a[i];
                assert!(aa.iter().all(|x| x.norm() < TOL));
            }
        }
    }
}
