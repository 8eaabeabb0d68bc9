//! Determinant families over a moment source, memoized per (family, n, s, t).

pub mod elimination;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::{Mode, MomentSource};
use crate::numerics::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// det m_{i,j}, i,j < n
    Tau,
    /// det m_{i,j+1}
    Xi,
    /// det m_{i,j+2}
    TauHat,
    /// rows 0..=n of [m_{i,0..n-1} | phi_i]
    Sigma,
    /// rows 0..=n of [m_{i,1..n} | phi_i]
    Psi,
    /// rows 0..=n of [m_{i+1,0..n-1} | phi_{i+1}]; the row-bordered partner of psi
    PsiTilde,
    /// rows 0..=n of [m_{i,0..n-1} | u_i]
    SigmaTilde,
    /// tau with row n-1 replaced by row n
    TauTilde,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::Tau,
        Family::Xi,
        Family::TauHat,
        Family::Sigma,
        Family::Psi,
        Family::PsiTilde,
        Family::SigmaTilde,
        Family::TauTilde,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Tau => "tau",
            Family::Xi => "xi",
            Family::TauHat => "tau_hat",
            Family::Sigma => "sigma",
            Family::Psi => "psi",
            Family::PsiTilde => "psi_tilde",
            Family::SigmaTilde => "sigma_tilde",
            Family::TauTilde => "tau_tilde",
        }
    }

    pub fn needs_single_moments(&self) -> bool {
        matches!(self, Family::SigmaTilde)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .iter()
            .copied()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown family {s:?}")))
    }
}

type Key = (Family, i64, u32, u32);

/// A moment source plus the determinant memo shared by every consumer.
pub struct LatticeContext<S: Scalar> {
    pub source: MomentSource<S>,
    memo: RwLock<HashMap<Key, S>>,
}

impl<S: Scalar> fmt::Debug for LatticeContext<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LatticeContext")
            .field("mode", &self.source.mode)
            .field("K", &self.source.k())
            .field("tmax", &self.source.tmax())
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceCoefficients<S> {
    pub a: S,
    pub b: S,
    pub c: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformCoefficients<S> {
    /// Two-term form beta - xi_{n+1} xi_n / (tau_{n+1} tau_n^{s+1}).
    pub alpha: S,
    /// Simplified form xi_{n+1} tau_{n-1}^{s+1} / (xi_n tau_n^{s+1}).
    pub alpha_simplified: S,
    pub beta: S,
    pub d: S,
    pub e: S,
}

impl<S: Scalar> LatticeContext<S> {
    pub fn new(source: MomentSource<S>) -> Self {
        LatticeContext {
            source,
            memo: RwLock::new(HashMap::new()),
        }
    }

    pub fn mode(&self) -> Mode {
        self.source.mode
    }

    pub fn ctx(&self) -> &S::Ctx {
        &self.source.ctx
    }

    pub fn zero(&self) -> S {
        S::zero(&self.source.ctx)
    }

    pub fn one(&self) -> S {
        S::one(&self.source.ctx)
    }

    pub fn m(&self, i: usize, j: usize, s: u32, t: u32) -> Result<S> {
        self.source.m(i, j, s, t).cloned()
    }

    pub fn u(&self, i: usize, s: u32, t: u32) -> Result<S> {
        self.source.u(i, s, t).cloned()
    }

    pub fn phi(&self, i: usize, s: u32, t: u32) -> Result<S> {
        self.source.phi(i, s, t).cloned()
    }

    pub fn memo_len(&self) -> usize {
        self.memo.read().unwrap().len()
    }

    pub fn eval_det(&self, family: Family, n: i64, s: u32, t: u32) -> Result<S> {
        if n < 0 {
            return Ok(self.zero());
        }
        let key = (family, n, s, t);
        if let Some(v) = self.memo.read().unwrap().get(&key) {
            return Ok(v.clone());
        }
        let v = self.compute(family, n as usize, s, t)?;
        self.memo.write().unwrap().entry(key).or_insert_with(|| v.clone());
        Ok(v)
    }

    /// Matrix of the family at a site; `None` for the fixed conventions.
    pub fn family_matrix(&self, family: Family, n: usize, s: u32, t: u32) -> Result<Option<Vec<Vec<S>>>> {
        let m = |i: usize, j: usize| self.m(i, j, s, t);
        let bordered = |row: &dyn Fn(usize) -> Result<Vec<S>>| -> Result<Vec<Vec<S>>> { (0..=n).map(row).collect() };
        let rows = match family {
            Family::Tau | Family::Xi | Family::TauHat => {
                let shift = match family {
                    Family::Tau => 0,
                    Family::Xi => 1,
                    _ => 2,
                };
                (0..n).map(|i| (0..n).map(|j| m(i, j + shift)).collect()).collect::<Result<Vec<_>>>()?
            }
            Family::Sigma => bordered(&|i| {
                let mut r = (0..n).map(|j| m(i, j)).collect::<Result<Vec<_>>>()?;
                r.push(self.phi(i, s, t)?);
                Ok(r)
            })?,
            Family::Psi => bordered(&|i| {
                let mut r = (0..n).map(|j| m(i, j + 1)).collect::<Result<Vec<_>>>()?;
                r.push(self.phi(i, s, t)?);
                Ok(r)
            })?,
            Family::PsiTilde => bordered(&|i| {
                let mut r = (0..n).map(|j| m(i + 1, j)).collect::<Result<Vec<_>>>()?;
                r.push(self.phi(i + 1, s, t)?);
                Ok(r)
            })?,
            Family::SigmaTilde => bordered(&|i| {
                let mut r = (0..n).map(|j| m(i, j)).collect::<Result<Vec<_>>>()?;
                r.push(self.u(i, s, t)?);
                Ok(r)
            })?,
            Family::TauTilde => {
                if n == 0 {
                    return Ok(None);
                }
                (0..n - 1)
                    .chain(std::iter::once(n))
                    .map(|i| (0..n).map(|j| m(i, j)).collect())
                    .collect::<Result<Vec<_>>>()?
            }
        };
        Ok(Some(rows))
    }

    fn compute(&self, family: Family, n: usize, s: u32, t: u32) -> Result<S> {
        match self.family_matrix(family, n, s, t)? {
            None => Ok(self.zero()),
            Some(rows) => S::determinant(rows, self.ctx()),
        }
    }

    fn nonzero(&self, v: S, what: &str) -> Result<S> {
        if v.is_zero() {
            Err(Error::DivisionByZero(what.to_string()))
        } else {
            Ok(v)
        }
    }

    pub(crate) fn div(&self, num: S, den: S, what: &str) -> Result<S> {
        Ok(num / &self.nonzero(den, what)?)
    }

    /// p_n = -tilde tau_n / tau_n, the subleading coefficient of P_n.
    pub fn p_sub(&self, n: i64, s: u32, t: u32) -> Result<S> {
        if n <= 0 {
            return Ok(self.zero());
        }
        let tt = self.eval_det(Family::TauTilde, n, s, t)?;
        let tau = self.eval_det(Family::Tau, n, s, t)?;
        Ok(-self.div(tt, tau, &format!("tau_{n} at ({s},{t})"))?)
    }

    pub fn recurrence_coefficients(&self, n: i64, s: u32, t: u32) -> Result<RecurrenceCoefficients<S>> {
        if n < 1 {
            return Err(Error::Precondition(format!("recurrence coefficients need n >= 1, got {n}")));
        }
        if !self.mode().has_single_moments() {
            return Err(Error::Unavailable {
                what: "recurrence coefficients".into(),
                mode: self.mode().to_string(),
            });
        }
        self.recurrence_with_edges(n, s, t)
    }

    /// As `recurrence_coefficients`, with a_0 = c_0 = 0 and b_0 = p_1 at n = 0.
    pub fn recurrence_with_edges(&self, n: i64, s: u32, t: u32) -> Result<RecurrenceCoefficients<S>> {
        let tau = |k: i64| self.eval_det(Family::Tau, k, s, t);
        let b = self.p_sub(n + 1, s, t)? - &self.p_sub(n, s, t)?;
        if n == 0 {
            return Ok(RecurrenceCoefficients {
                a: self.zero(),
                b,
                c: self.zero(),
            });
        }
        let st = |k: i64| self.eval_det(Family::SigmaTilde, k, s, t);
        let a = -self.div(
            st(n)? * &tau(n - 1)?,
            st(n - 1)? * &tau(n)?,
            &format!("sigma_tilde_{} tau_{n} at ({s},{t})", n - 1),
        )?;
        let tn = tau(n)?;
        let c = self.div(tau(n - 1)? * &tau(n + 1)?, tn.clone() * &tn, &format!("tau_{n}^2 at ({s},{t})"))?;
        Ok(RecurrenceCoefficients { a, b, c })
    }

    /// alpha (both forms) and beta; defined for n >= 0.
    pub fn alpha_beta(&self, n: i64, s: u32, t: u32) -> Result<(S, S, S)> {
        let tau = |k: i64, s: u32| self.eval_det(Family::Tau, k, s, t);
        let xi = |k: i64| self.eval_det(Family::Xi, k, s, t);
        let where_ = format!("n={n} at ({s},{t})");
        let beta = self.div(xi(n + 1)? * &tau(n, s)?, tau(n + 1, s)? * &xi(n)?, &format!("tau_(n+1) xi_n, {where_}"))?;
        let alpha = beta.clone()
            - &self.div(xi(n + 1)? * &xi(n)?, tau(n + 1, s)? * &tau(n, s + 1)?, &format!("tau_(n+1) tau_n^(s+1), {where_}"))?;
        let alpha_s = self.div(
            xi(n + 1)? * &tau(n - 1, s + 1)?,
            xi(n)? * &tau(n, s + 1)?,
            &format!("xi_n tau_n^(s+1), {where_}"),
        )?;
        Ok((alpha, alpha_s, beta))
    }

    /// d_n and e_n for n >= 1; zero at n = 0.
    pub fn d_e_with_edges(&self, n: i64, s: u32, t: u32) -> Result<(S, S)> {
        if n < 1 {
            return Ok((self.zero(), self.zero()));
        }
        let sg = |k: i64| self.eval_det(Family::Sigma, k, s, t);
        let tau = |k: i64, t: u32| self.eval_det(Family::Tau, k, s, t);
        let where_ = format!("n={n} at ({s},{t})");
        let d = -self.div(
            sg(n)? * &tau(n - 1, t + 1)?,
            sg(n - 1)? * &tau(n, t + 1)?,
            &format!("sigma_(n-1) tau_n^(t+1), {where_}"),
        )?;
        let e = -self.div(sg(n)? * &tau(n - 1, t)?, sg(n - 1)? * &tau(n, t)?, &format!("sigma_(n-1) tau_n, {where_}"))?;
        Ok((d, e))
    }

    pub fn transform_coefficients(&self, n: i64, s: u32, t: u32) -> Result<TransformCoefficients<S>> {
        if n < 1 {
            return Err(Error::Precondition(format!(
                "transform coefficients need n >= 1 (sigma_(n-1) undefined), got {n}"
            )));
        }
        let (alpha, alpha_simplified, beta) = self.alpha_beta(n, s, t)?;
        let (d, e) = self.d_e_with_edges(n, s, t)?;
        Ok(TransformCoefficients {
            alpha,
            alpha_simplified,
            beta,
            d,
            e,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::{build_jacobi_source, synthetic_generic, synthetic_structured, QuadratureConfig};
    use crate::numerics::{digits_of_agreement, TolerancePolicy};
    use proptest::prelude::*;
    use rug::float::Constant;
    use rug::{Float, Rational};

    fn generic(seed: u64) -> LatticeContext<Rational> {
        LatticeContext::new(MomentSource::from_evolution(synthetic_generic(seed, 8, 2).unwrap(), 2).unwrap())
    }

    fn jacobi() -> LatticeContext<Float> {
        let policy = TolerancePolicy::new(50, 15).unwrap();
        let src = build_jacobi_source(6, 1, &policy, &QuadratureConfig::for_precision(50)).unwrap();
        LatticeContext::new(src)
    }

    #[test]
    fn conventions() {
        let ctx = generic(1);
        for fam in [Family::Tau, Family::Xi, Family::TauHat] {
            assert_eq!(ctx.eval_det(fam, 0, 1, 1).unwrap(), 1);
        }
        assert_eq!(ctx.eval_det(Family::Tau, -1, 0, 0).unwrap(), 0);
        assert_eq!(ctx.eval_det(Family::Sigma, -1, 0, 0).unwrap(), 0);
        assert_eq!(ctx.eval_det(Family::Sigma, 0, 0, 0).unwrap(), ctx.phi(0, 0, 0).unwrap());
        assert_eq!(ctx.eval_det(Family::Psi, 0, 0, 1).unwrap(), ctx.phi(0, 0, 1).unwrap());
        assert_eq!(ctx.eval_det(Family::PsiTilde, 0, 0, 0).unwrap(), ctx.phi(1, 0, 0).unwrap());
        assert_eq!(ctx.eval_det(Family::TauTilde, 0, 0, 0).unwrap(), 0);
        assert_eq!(ctx.eval_det(Family::TauTilde, 1, 0, 0).unwrap(), ctx.m(1, 0, 0, 0).unwrap());
        assert!(matches!(ctx.eval_det(Family::SigmaTilde, 1, 0, 0), Err(Error::Unavailable { .. })));
        let st = LatticeContext::new(MomentSource::from_evolution(synthetic_structured(2, 5, 0).unwrap(), 0).unwrap());
        assert_eq!(st.eval_det(Family::SigmaTilde, 0, 0, 0).unwrap(), st.u(0, 0, 0).unwrap());
    }

    #[test]
    fn memo_reuses_values() {
        let ctx = generic(3);
        let a = ctx.eval_det(Family::Tau, 3, 1, 1).unwrap();
        let before = ctx.memo_len();
        let b = ctx.eval_det(Family::Tau, 3, 1, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(ctx.memo_len(), before);
    }

    #[test]
    fn extent_is_reported() {
        let ctx = generic(3);
        assert!(matches!(ctx.eval_det(Family::TauHat, 7, 0, 0), Err(Error::ExtentExceeded(_))));
        assert!(matches!(ctx.eval_det(Family::Tau, 1, 0, 3), Err(Error::ExtentExceeded(_))));
    }

    #[test]
    fn preconditions_on_coefficients() {
        let ctx = generic(4);
        assert!(matches!(ctx.transform_coefficients(0, 0, 0), Err(Error::Precondition(_))));
        assert!(matches!(ctx.recurrence_coefficients(1, 0, 0), Err(Error::Unavailable { .. })));
    }

    #[test]
    fn zero_phi_gives_equal_d_and_e() {
        let mut base = synthetic_generic(8, 6, 1).unwrap();
        base.phi.insert(0, vec![Rational::new(); 6]);
        let ctx = LatticeContext::new(MomentSource::from_evolution(base, 1).unwrap());
        // sigma vanishes identically here, so d and e are 0/0; compare the defining ratios instead
        for n in 1..3 {
            assert_eq!(ctx.eval_det(Family::Tau, n, 0, 1).unwrap(), ctx.eval_det(Family::Tau, n, 0, 0).unwrap());
        }
        assert!(matches!(ctx.d_e_with_edges(1, 0, 0), Err(Error::DivisionByZero(_))));
    }

    #[test]
    fn jacobi_closed_forms() {
        let ctx = jacobi();
        let bits = *ctx.ctx();
        let l = Float::with_val(bits, Constant::Log2);
        let tau1 = ctx.eval_det(Family::Tau, 1, 0, 0).unwrap();
        assert!(digits_of_agreement(&tau1, &Float::with_val(bits, &l * 2u32), 100.0) > 40.0);
        // (4/3) ln2 (1 - ln2) - 1/4
        let tau2 = Float::with_val(bits, &l * 4u32) / 3u32 * (1u32 - l.clone()) - Float::with_val(bits, 0.25);
        assert!(digits_of_agreement(&ctx.eval_det(Family::Tau, 2, 0, 0).unwrap(), &tau2, 100.0) > 40.0);
        let sigma0 = Float::with_val(bits, 2).sqrt() * &l;
        assert!(digits_of_agreement(&ctx.eval_det(Family::Sigma, 0, 0, 0).unwrap(), &sigma0, 100.0) > 40.0);
        let rc = ctx.recurrence_coefficients(1, 0, 0).unwrap();
        let c1 = Float::with_val(bits, &tau2 / Float::with_val(bits, &l * 2u32).square());
        assert!(digits_of_agreement(&rc.c, &c1, 100.0) > 40.0);
        assert!((rc.c.to_f64() - 0.01747945).abs() < 1e-8);
        let p1 = ctx.p_sub(1, 0, 0).unwrap();
        let expect = -(Float::with_val(bits, 1) / Float::with_val(bits, &l * 4u32));
        assert!(digits_of_agreement(&p1, &expect, 100.0) > 40.0);
        assert!(rc.a.to_f64().is_finite() && rc.a.to_f64() != 0.0);
        let tc = ctx.transform_coefficients(1, 0, 0).unwrap();
        assert!(digits_of_agreement(&tc.alpha, &tc.alpha_simplified, 100.0) > 35.0);
    }

    #[test]
    fn jacobi_positivity() {
        let ctx = jacobi();
        for n in 0..=3 {
            for s in 0..=1 {
                for t in 0..=1 {
                    assert!(ctx.eval_det(Family::Tau, n, s, t).unwrap() > 0);
                    assert!(ctx.eval_det(Family::Xi, n, s, t).unwrap() > 0);
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]
        #[test]
        fn exact_and_float_determinants_agree(seed in 0u64..10_000, n in 1i64..6, s in 0u32..2, t in 0u32..2) {
            let ctx = generic(seed);
            let exact = ctx.eval_det(Family::Tau, n, s, t).unwrap();
            prop_assume!(exact != 0);
            let rows = ctx.family_matrix(Family::Tau, n as usize, s, t).unwrap().unwrap();
            let frows: Vec<Vec<Float>> = rows.iter().map(|r| r.iter().map(|x| Float::with_val(400, x)).collect()).collect();
            let approx = Float::determinant(frows, &400).unwrap();
            let rel = (approx - Float::with_val(400, &exact)).abs() / Float::with_val(400, exact.abs()).max(&Float::with_val(400, 1));
            prop_assert!(rel.abs_lt_pow10(-80));
        }
    }
}
