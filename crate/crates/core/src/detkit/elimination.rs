//! Determinant kernels: Bareiss over the integers, full-pivot LU over MPFR.

use rug::{Float, Integer, Rational};

use crate::error::{Error, Result};

fn check_square<T>(rows: &[Vec<T>]) -> Result<usize> {
    let n = rows.len();
    for r in rows {
        if r.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: r.len(),
            });
        }
    }
    Ok(n)
}

/// Exact determinant of a rational matrix.
///
/// Each row is scaled by the lcm of its denominators, the resulting integer
/// matrix goes through fraction-free elimination, and the scale is divided
/// back out at the end.
pub fn bareiss_det(rows: &[Vec<Rational>]) -> Result<Rational> {
    let n = check_square(rows)?;
    if n == 0 {
        return Ok(Rational::from(1));
    }
    let mut scale = Integer::from(1);
    let mut a: Vec<Vec<Integer>> = Vec::with_capacity(n);
    for row in rows {
        let mut l = Integer::from(1);
        for q in row {
            l.lcm_mut(q.denom());
        }
        a.push(
            row.iter()
                .map(|q| q.numer() * Integer::from(&l / q.denom()))
                .collect(),
        );
        scale *= l;
    }
    let det = bareiss_int(a);
    Ok(Rational::from((det, scale)))
}

/// Fraction-free elimination on an integer matrix (consumed).
pub fn bareiss_int(mut a: Vec<Vec<Integer>>) -> Integer {
    let n = a.len();
    let mut sign = 1i32;
    let mut prev = Integer::from(1);
    for k in 0..n {
        if a[k][k].cmp0().is_eq() {
            match (k + 1..n).find(|&i| !a[i][k].cmp0().is_eq()) {
                Some(p) => {
                    a.swap(k, p);
                    sign = -sign;
                }
                None => return Integer::new(),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = Integer::from(&a[i][j] * &a[k][k]) - Integer::from(&a[i][k] * &a[k][j]);
                a[i][j] = v.div_exact(&prev);
            }
        }
        prev = a[k][k].clone();
    }
    let det = a[n - 1][n - 1].clone();
    if sign < 0 {
        -det
    } else {
        det
    }
}

/// LU with full pivoting. A pivot at or below `n * eps * max|A|` is a
/// singular-pivot error rather than a silent zero.
pub fn lu_det_full_pivot(mut a: Vec<Vec<Float>>) -> Result<Float> {
    let n = check_square(&a)?;
    let prec = a.first().and_then(|r| r.first()).map(|x| x.prec()).unwrap_or(64);
    if n == 0 {
        return Ok(Float::with_val(prec, 1));
    }
    let mut max_abs = Float::with_val(prec, 0);
    for row in &a {
        for x in row {
            if x.cmp_abs(&max_abs) == Some(std::cmp::Ordering::Greater) {
                max_abs = Float::with_val(prec, x.abs_ref());
            }
        }
    }
    // n * 2^-prec * max|A|
    let threshold = Float::with_val(prec, &max_abs * n as u32) >> prec as i32;
    let mut det = Float::with_val(prec, 1);
    for k in 0..n {
        let (mut pi, mut pj) = (k, k);
        let mut best = Float::with_val(prec, a[k][k].abs_ref());
        for (i, row) in a.iter().enumerate().skip(k) {
            for (j, x) in row.iter().enumerate().skip(k) {
                if x.cmp_abs(&best) == Some(std::cmp::Ordering::Greater) {
                    best = Float::with_val(prec, x.abs_ref());
                    pi = i;
                    pj = j;
                }
            }
        }
        if best <= threshold {
            return Err(Error::SingularPivot { step: k, size: n });
        }
        if pi != k {
            a.swap(pi, k);
            det = -det;
        }
        if pj != k {
            for row in a.iter_mut() {
                row.swap(pj, k);
            }
            det = -det;
        }
        let pivot = a[k][k].clone();
        det *= &pivot;
        let (upper, lower) = a.split_at_mut(k + 1);
        let prow = &upper[k];
        for row in lower.iter_mut() {
            let f = Float::with_val(prec, &row[k] / &pivot);
            for j in k + 1..n {
                row[j] -= Float::with_val(prec, &f * &prow[j]);
            }
        }
    }
    Ok(det)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(p: i64, d: i64) -> Rational {
        Rational::from((p, d))
    }

    fn cofactor_det(m: &[Vec<Rational>]) -> Rational {
        let n = m.len();
        if n == 0 {
            return Rational::from(1);
        }
        let mut acc = Rational::new();
        for c in 0..n {
            let minor: Vec<Vec<Rational>> = m[1..]
                .iter()
                .map(|r| r.iter().enumerate().filter(|(j, _)| *j != c).map(|(_, x)| x.clone()).collect())
                .collect();
            let term = Rational::from(&m[0][c] * &cofactor_det(&minor));
            if c % 2 == 0 {
                acc += term;
            } else {
                acc -= term;
            }
        }
        acc
    }

    #[test]
    fn small_known_determinants() {
        assert_eq!(bareiss_det(&[]).unwrap(), 1);
        assert_eq!(bareiss_det(&[vec![q(3, 7)]]).unwrap(), q(3, 7));
        let m = vec![vec![q(1, 2), q(1, 3)], vec![q(1, 3), q(1, 4)]];
        assert_eq!(bareiss_det(&m).unwrap(), q(1, 72));
        let z = vec![vec![q(0, 1), q(1, 1)], vec![q(1, 1), q(0, 1)]];
        assert_eq!(bareiss_det(&z).unwrap(), -1);
        let sing = vec![vec![q(1, 1), q(2, 1)], vec![q(2, 1), q(4, 1)]];
        assert_eq!(bareiss_det(&sing).unwrap(), 0);
    }

    #[test]
    fn lu_flags_singular_pivot() {
        let f = |v: i32| Float::with_val(200, v);
        let sing = vec![vec![f(1), f(2)], vec![f(2), f(4)]];
        assert!(matches!(lu_det_full_pivot(sing), Err(Error::SingularPivot { .. })));
        let m = vec![vec![f(0), f(1)], vec![f(1), f(0)]];
        assert_eq!(lu_det_full_pivot(m).unwrap(), -1);
    }

    #[test]
    fn ragged_rows_rejected() {
        let m = vec![vec![q(1, 1), q(2, 1)], vec![q(1, 1)]];
        assert!(matches!(bareiss_det(&m), Err(Error::LengthMismatch { .. })));
    }

    fn rat_matrix(n: usize) -> impl Strategy<Value = Vec<Vec<Rational>>> {
        proptest::collection::vec(proptest::collection::vec((-30i64..30, 1i64..20), n), n)
            .prop_map(|rows| rows.into_iter().map(|r| r.into_iter().map(|(p, d)| q(p, d)).collect()).collect())
    }

    fn minor(m: &[Vec<Rational>], drop_r: &[usize], drop_c: &[usize]) -> Vec<Vec<Rational>> {
        m.iter()
            .enumerate()
            .filter(|(i, _)| !drop_r.contains(i))
            .map(|(_, r)| {
                r.iter().enumerate().filter(|(j, _)| !drop_c.contains(j)).map(|(_, x)| x.clone()).collect()
            })
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn bareiss_matches_cofactor_expansion(m in rat_matrix(4)) {
            prop_assert_eq!(bareiss_det(&m).unwrap(), cofactor_det(&m));
        }

        #[test]
        fn desnanot_jacobi_exact(m in rat_matrix(4)) {
            let d = |r: &[usize], c: &[usize]| bareiss_det(&minor(&m, r, c)).unwrap();
            let lhs = d(&[], &[]) * d(&[0, 3], &[0, 3]);
            let rhs = d(&[0], &[0]) * d(&[3], &[3]) - d(&[0], &[3]) * d(&[3], &[0]);
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn float_lu_agrees_with_exact(m in rat_matrix(5)) {
            let exact = bareiss_det(&m).unwrap();
            prop_assume!(exact != 0);
            let fm: Vec<Vec<Float>> = m.iter().map(|r| r.iter().map(|x| Float::with_val(300, x)).collect()).collect();
            let approx = lu_det_full_pivot(fm).unwrap();
            let diff = (approx - Float::with_val(300, &exact)).abs();
            let bound = Float::with_val(300, exact.abs()) * Float::with_val(300, 1e-80);
            prop_assert!(diff < bound);
        }
    }
}
