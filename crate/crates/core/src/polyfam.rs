//! Monic polynomial families P, Q, R from cofactors of their defining
//! determinants, and the three linear functionals over the moment tables.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use serde_json::{json, Value};

use crate::detkit::{Family, LatticeContext};
use crate::error::{Error, Result};
use crate::numerics::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum PolyFamily {
    P,
    Q,
    R,
}

impl fmt::Display for PolyFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for PolyFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "P" | "p" => Ok(PolyFamily::P),
            "Q" | "q" => Ok(PolyFamily::Q),
            "R" | "r" => Ok(PolyFamily::R),
            _ => Err(Error::Parse(format!("unknown polynomial family {s:?}"))),
        }
    }
}

/// Coefficients in ascending degree; `coeffs[n]` is the leading one.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyCoeffs<S> {
    pub family: PolyFamily,
    pub n: usize,
    pub s: u32,
    pub t: u32,
    pub coeffs: Vec<S>,
}

impl<S: Scalar> PolyCoeffs<S> {
    pub fn to_json(&self) -> Value {
        json!({
            "family": self.family.to_string(),
            "n": self.n,
            "s": self.s,
            "t": self.t,
            "coeffs": self.coeffs.iter().map(|c| c.to_repr()).collect::<Vec<_>>(),
        })
    }
}

fn drop_row<S: Clone>(rows: &[Vec<S>], k: usize) -> Vec<Vec<S>> {
    rows.iter()
        .enumerate()
        .filter(|(i, _)| *i != k)
        .map(|(_, r)| r.clone())
        .collect()
}

/// sign * (-1)^(k+n) * det(rows without k) / norm for k = 0..=n.
fn cofactor_column<S: Scalar>(rows: &[Vec<S>], n: usize, norm: &S, flip: bool) -> Result<Vec<S>> {
    (0..=n)
        .map(|k| {
            let minor = S::determinant(drop_row(rows, k), &norm.ctx())?;
            let negate = ((k + n) % 2 == 1) != flip;
            let v = minor / norm;
            Ok(if negate { -v } else { v })
        })
        .collect()
}

pub fn poly<S: Scalar>(ctx: &LatticeContext<S>, family: PolyFamily, n: usize, s: u32, t: u32) -> Result<PolyCoeffs<S>> {
    let m = |i: usize, j: usize| ctx.m(i, j, s, t);
    let (rows, norm, fam, flip) = match family {
        PolyFamily::P | PolyFamily::Q => {
            let shift = usize::from(family == PolyFamily::Q);
            let rows = (0..=n)
                .map(|i| (0..n).map(|j| m(i, j + shift)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            let fam = if shift == 0 { Family::Tau } else { Family::Xi };
            (rows, ctx.eval_det(fam, n as i64, s, t)?, fam, false)
        }
        PolyFamily::R => {
            if n == 0 {
                return Err(Error::Precondition("R_n needs n >= 1".into()));
            }
            let rows = (0..=n)
                .map(|i| {
                    let mut r = vec![ctx.phi(i, s, t)?];
                    for j in 0..n - 1 {
                        r.push(m(i, j)?);
                    }
                    Ok(r)
                })
                .collect::<Result<Vec<_>>>()?;
            (rows, ctx.eval_det(Family::Sigma, n as i64 - 1, s, t)?, Family::Sigma, n.is_multiple_of(2))
        }
    };
    if norm.is_zero() {
        let idx = if family == PolyFamily::R { n as i64 - 1 } else { n as i64 };
        return Err(Error::NormalizerZero { family: fam, n: idx, s, t });
    }
    let coeffs = if n == 0 { vec![ctx.one()] } else { cofactor_column(&rows, n, &norm, flip)? };
    Ok(PolyCoeffs {
        family,
        n,
        s,
        t,
        coeffs,
    })
}

/// sum_{i,j} f_i g_j m_{i,j}^{s,t}
pub fn inner<S: Scalar>(ctx: &LatticeContext<S>, f: &[S], g: &[S], s: u32, t: u32) -> Result<S> {
    let mut acc = ctx.zero();
    for (i, fi) in f.iter().enumerate() {
        if fi.is_zero() {
            continue;
        }
        for (j, gj) in g.iter().enumerate() {
            acc = acc + fi.clone() * gj * &ctx.m(i, j, s, t)?;
        }
    }
    Ok(acc)
}

/// sum_i f_i phi_i^{s,t}
pub fn l_functional<S: Scalar>(ctx: &LatticeContext<S>, f: &[S], s: u32, t: u32) -> Result<S> {
    let mut acc = ctx.zero();
    for (i, fi) in f.iter().enumerate() {
        acc = acc + fi.clone() * &ctx.phi(i, s, t)?;
    }
    Ok(acc)
}

/// sum_i f_i m_i^{s,t}
pub fn weighted_integral<S: Scalar>(ctx: &LatticeContext<S>, f: &[S], s: u32, t: u32) -> Result<S> {
    let mut acc = ctx.zero();
    for (i, fi) in f.iter().enumerate() {
        acc = acc + fi.clone() * &ctx.u(i, s, t)?;
    }
    Ok(acc)
}

/// Unit monomial y^m as a coefficient vector.
pub fn monomial<S: Scalar>(m: usize, ctx: &S::Ctx) -> Vec<S> {
    let mut v = vec![S::zero(ctx); m + 1];
    v[m] = S::one(ctx);
    v
}

/// Horner evaluation.
pub fn eval<S: Scalar>(coeffs: &[S], x: &S) -> S {
    let mut acc = S::zero(&x.ctx());
    for c in coeffs.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

/// Linear combination of coefficient vectors, each with its own scalar.
pub fn combine<S: Scalar>(terms: &[(S, &[S])], ctx: &S::Ctx) -> Vec<S> {
    let len = terms.iter().map(|(_, p)| p.len()).max().unwrap_or(0);
    let mut out = vec![S::zero(ctx); len];
    for (c, p) in terms {
        for (o, v) in out.iter_mut().zip(p.iter()) {
            *o = o.clone() + c.clone() * v;
        }
    }
    out
}

/// x * p
pub fn times_x<S: Scalar>(p: &[S], ctx: &S::Ctx) -> Vec<S> {
    let mut out = Vec::with_capacity(p.len() + 1);
    out.push(S::zero(ctx));
    out.extend(p.iter().cloned());
    out
}

pub fn max_abs<S: Scalar>(p: &[S], ctx: &S::Ctx) -> S {
    let mut m = S::zero(ctx);
    for v in p {
        let a = v.abs();
        if a > m {
            m = a;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::{build_jacobi_source, synthetic_generic, MomentSource, QuadratureConfig};
    use crate::numerics::{digits_of_agreement, TolerancePolicy};
    use proptest::prelude::*;
    use rug::float::Constant;
    use rug::{Float, Rational};

    fn jacobi() -> LatticeContext<Float> {
        let policy = TolerancePolicy::new(50, 15).unwrap();
        LatticeContext::new(build_jacobi_source(7, 1, &policy, &QuadratureConfig::for_precision(50)).unwrap())
    }

    fn generic(seed: u64) -> LatticeContext<Rational> {
        LatticeContext::new(MomentSource::from_evolution(synthetic_generic(seed, 8, 1).unwrap(), 1).unwrap())
    }

    fn small(x: &Float) -> bool {
        x.clone().abs() < Float::with_val(x.prec(), 1e-40)
    }

    #[test]
    fn p0_and_r0() {
        let ctx = generic(1);
        assert_eq!(poly(&ctx, PolyFamily::P, 0, 0, 0).unwrap().coeffs, vec![Rational::from(1)]);
        assert!(matches!(poly(&ctx, PolyFamily::R, 0, 0, 0), Err(Error::Precondition(_))));
    }

    #[test]
    fn jacobi_low_degree_values() {
        let ctx = jacobi();
        let bits = *ctx.ctx();
        let l = Float::with_val(bits, Constant::Log2);
        let p1 = poly(&ctx, PolyFamily::P, 1, 0, 0).unwrap();
        let c0 = -(Float::with_val(bits, 1) / Float::with_val(bits, &l * 4u32));
        assert!(digits_of_agreement(&p1.coeffs[0], &c0, 100.0) > 40.0);
        assert_eq!(p1.coeffs[1], 1);
        let q1 = poly(&ctx, PolyFamily::Q, 1, 0, 0).unwrap();
        let q0 = -(Float::with_val(bits, 4) - Float::with_val(bits, &l * 4u32)) / 3u32;
        assert!(digits_of_agreement(&q1.coeffs[0], &q0, 100.0) > 40.0);
        assert!((q1.coeffs[0].to_f64() + 0.4091372).abs() < 1e-6);

        let one = monomial::<Float>(0, &bits);
        let h0 = inner(&ctx, &one, &one, 0, 0).unwrap();
        assert!(digits_of_agreement(&h0, &Float::with_val(bits, &l * 2u32), 100.0) > 40.0);
        assert!(small(&inner(&ctx, &p1.coeffs, &one, 0, 0).unwrap()));
        let h1 = inner(&ctx, &p1.coeffs, &p1.coeffs, 0, 0).unwrap();
        let ratio = ctx.eval_det(Family::Tau, 2, 0, 0).unwrap() / ctx.eval_det(Family::Tau, 1, 0, 0).unwrap();
        assert!(digits_of_agreement(&h1, &ratio, 100.0) > 38.0);
        assert!((h1.to_f64() - 0.0242316662).abs() < 1e-9);

        let l1 = l_functional(&ctx, &one, 0, 0).unwrap();
        assert!(digits_of_agreement(&l1, &(Float::with_val(bits, 2).sqrt() * &l), 100.0) > 40.0);
        let sig = ctx.eval_det(Family::Sigma, 1, 0, 0).unwrap() / ctx.eval_det(Family::Tau, 1, 0, 0).unwrap();
        assert!(digits_of_agreement(&l_functional(&ctx, &p1.coeffs, 0, 0).unwrap(), &sig, 100.0) > 38.0);
        for n in 1..=2 {
            let r = poly(&ctx, PolyFamily::R, n, 0, 0).unwrap();
            assert!(small(&l_functional(&ctx, &r.coeffs, 0, 0).unwrap()));
        }
        assert_eq!(weighted_integral(&ctx, &one, 0, 0).unwrap().to_f64(), 1.0);
        let x = monomial::<Float>(1, &bits);
        assert!((weighted_integral(&ctx, &x, 0, 0).unwrap().to_f64() - 0.5).abs() < 1e-30);
        for n in 1..=2i64 {
            let a = ctx.recurrence_coefficients(n, 0, 0).unwrap().a;
            let pn = poly(&ctx, PolyFamily::P, n as usize, 0, 0).unwrap().coeffs;
            let pm = poly(&ctx, PolyFamily::P, n as usize - 1, 0, 0).unwrap().coeffs;
            let comb = combine(&[(Float::with_val(bits, 1), &pn[..]), (a, &pm[..])], &bits);
            assert!(small(&weighted_integral(&ctx, &comb, 0, 0).unwrap()));
        }
    }

    #[test]
    fn jacobi_orthogonality() {
        let ctx = jacobi();
        let bits = *ctx.ctx();
        for n in 1..=4usize {
            let p = poly(&ctx, PolyFamily::P, n, 0, 1).unwrap();
            for m in 0..n {
                assert!(small(&inner(&ctx, &p.coeffs, &monomial(m, &bits), 0, 1).unwrap()));
            }
        }
    }

    #[test]
    fn unavailable_in_generic_mode() {
        let ctx = generic(2);
        let one = monomial::<Rational>(0, &());
        assert!(matches!(weighted_integral(&ctx, &one, 0, 0), Err(Error::Unavailable { .. })));
    }

    #[test]
    fn normalizer_zero_reported() {
        let mut base = synthetic_generic(3, 5, 0).unwrap();
        base.b[0][0] = Rational::new();
        let ctx = LatticeContext::new(MomentSource::from_evolution(base, 0).unwrap());
        assert!(matches!(
            poly(&ctx, PolyFamily::P, 1, 0, 0),
            Err(Error::NormalizerZero { family: Family::Tau, n: 1, .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn exact_structure(seed in 0u64..5000, n in 1usize..5, s in 0u32..2) {
            let ctx = generic(seed);
            let p = poly(&ctx, PolyFamily::P, n, s, 0).unwrap();
            let q = poly(&ctx, PolyFamily::Q, n, s, 0).unwrap();
            let r = poly(&ctx, PolyFamily::R, n, s, 0).unwrap();
            for c in [&p, &q, &r] {
                prop_assert_eq!(&c.coeffs[n], &Rational::from(1));
            }
            for m in 0..n {
                prop_assert_eq!(inner(&ctx, &p.coeffs, &monomial(m, &()), s, 0).unwrap(), 0);
            }
            for i in 1..=n {
                prop_assert_eq!(inner(&ctx, &q.coeffs, &monomial(i, &()), s, 0).unwrap(), 0);
            }
            for i in 0..n.saturating_sub(1) {
                prop_assert_eq!(inner(&ctx, &r.coeffs, &monomial(i, &()), s, 0).unwrap(), 0);
            }
            prop_assert_eq!(l_functional(&ctx, &r.coeffs, s, 0).unwrap(), 0);
            // P_n(0) tau_n = (-1)^n xi_n
            let lhs = p.coeffs[0].clone() * ctx.eval_det(Family::Tau, n as i64, s, 0).unwrap();
            let xi = ctx.eval_det(Family::Xi, n as i64, s, 0).unwrap();
            prop_assert_eq!(lhs, if n % 2 == 0 { xi } else { -xi });
            // p_n is the subleading coefficient
            prop_assert_eq!(&p.coeffs[n - 1], &ctx.p_sub(n as i64, s, 0).unwrap());
            // R_n = P_n + e_n P_{n-1}
            let e = ctx.d_e_with_edges(n as i64, s, 0).unwrap().1;
            let pm = poly(&ctx, PolyFamily::P, n - 1, s, 0).unwrap();
            let comb = combine(&[(Rational::from(1), &p.coeffs[..]), (e, &pm.coeffs[..])], &());
            prop_assert_eq!(comb, r.coeffs);
        }
    }
}
