//! Dense LU factorization with partial pivoting.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Solves `a x = b` for a row-major `n x n` matrix. Consumes `a` and `b`.
pub fn lu_solve<T: Scalar>(mut a: Vec<T>, n: usize, mut b: Vec<T>) -> Result<Vec<T>> {
    assert_eq!(a.len(), n * n);
    assert_eq!(b.len(), n);
    let tiny = T::epsilon() * T::from_usize_lossy(n.max(1));
    for k in 0..n {
        let (p, pmax) = (k..n)
            .map(|i| (i, a[i * n + k].abs()))
            .fold((k, T::zero()), |acc, x| if x.1 > acc.1 { x } else { acc });
        if pmax <= tiny {
            return Err(Error::Singular {
                column: k,
                pivot: pmax.as_f64(),
            });
        }
        if p != k {
            for j in 0..n {
                a.swap(k * n + j, p * n + j);
            }
            b.swap(k, p);
        }
        let pivot = a[k * n + k];
        for i in (k + 1)..n {
            let f = a[i * n + k] / pivot;
            if f == T::zero() {
                continue;
            }
            a[i * n + k] = f;
            for j in (k + 1)..n {
                let akj = a[k * n + j];
                a[i * n + j] -= f * akj;
            }
            let bk = b[k];
            b[i] -= f * bk;
        }
    }
    for k in (0..n).rev() {
        let mut s = b[k];
        for j in (k + 1)..n {
            s -= a[k * n + j] * b[j];
        }
        b[k] = s / a[k * n + k];
    }
    Ok(b)
}
