//! The fixed identity catalog and one residual formula per (id, variant).

use crate::detkit::{Family, LatticeContext};
use crate::error::{Error, Result};
use crate::numerics::Scalar;
use crate::polyfam::{self, combine, max_abs, times_x, PolyFamily};

pub const CATALOG: [&str; 25] = [
    "4trr",
    "prop2.5",
    "prop2.6",
    "spec1",
    "dt1",
    "trans2",
    "propr",
    "eq1",
    "3.2a",
    "3.2b",
    "3.3a",
    "3.3b",
    "3.4a",
    "3.4b",
    "tri1",
    "tri2",
    "fn-a",
    "fn-b",
    "xi-psi-sq",
    "tau-hat-rel",
    "e1",
    "e2",
    "e3",
    "e4",
    "dckp",
];

/// Pure determinant identities; these gate in every mode.
pub const DETERMINANTAL: [&str; 5] = ["e1", "e2", "e3", "e4", "dckp"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdentitySpec {
    pub id: &'static str,
    /// Printed form first, then the candidate repairs in order of preference.
    pub variants: &'static [&'static str],
    pub min_n: i64,
}

const PRINTED: &[&str] = &["printed"];
const FLIP: &[&str] = &["printed", "sign-flip"];
const TILDE: &[&str] = &["printed", "psi-tilde"];

pub fn spec(id: &str) -> Option<IdentitySpec> {
    let (variants, min_n) = match id {
        "4trr" | "prop2.6" | "dt1" | "trans2" | "propr" => (PRINTED, 1),
        "3.2a" | "3.4a" | "3.4b" | "tau-hat-rel" => (FLIP, 0),
        "3.3a" | "3.3b" => (TILDE, 0),
        "xi-psi-sq" => (&["printed", "psi-psi-tilde"][..], 0),
        _ if CATALOG.contains(&id) => (PRINTED, 0),
        _ => return None,
    };
    let id = CATALOG.iter().find(|c| **c == id).copied()?;
    Some(IdentitySpec { id, variants, min_n })
}

/// Signed residual plus the terms that set its scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation<S> {
    pub residual: S,
    pub scale_terms: Vec<S>,
}

/// LHS terms summed minus RHS terms summed; each term enters the scale.
fn balance<S: Scalar>(lhs: Vec<S>, rhs: Vec<S>) -> Evaluation<S> {
    let mut it = lhs.iter().chain(rhs.iter());
    let first = it.next().expect("at least one term").clone();
    let zero = first.clone() - &first;
    let l = lhs.iter().fold(zero.clone(), |a, x| a + x);
    let r = rhs.iter().fold(zero, |a, x| a + x);
    let mut scale_terms = lhs;
    scale_terms.extend(rhs);
    Evaluation {
        residual: l - r,
        scale_terms,
    }
}

/// Residual of sum c_i p_i = 0, measured as the max-abs coefficient.
fn poly_zero<S: Scalar>(terms: &[(S, &[S])], ctx: &S::Ctx) -> Evaluation<S> {
    let diff = combine(terms, ctx);
    let scale_terms = terms
        .iter()
        .map(|(c, p)| max_abs(&p.iter().map(|v| c.clone() * v).collect::<Vec<_>>(), ctx))
        .collect();
    Evaluation {
        residual: max_abs(&diff, ctx),
        scale_terms,
    }
}

struct Site<'a, S: Scalar> {
    ctx: &'a LatticeContext<S>,
    s: u32,
    t: u32,
}

impl<S: Scalar> Site<'_, S> {
    fn det(&self, f: Family, n: i64, ds: u32, dt: u32) -> Result<S> {
        self.ctx.eval_det(f, n, self.s + ds, self.t + dt)
    }
    fn tau(&self, n: i64, ds: u32, dt: u32) -> Result<S> {
        self.det(Family::Tau, n, ds, dt)
    }
    fn xi(&self, n: i64, ds: u32, dt: u32) -> Result<S> {
        self.det(Family::Xi, n, ds, dt)
    }
    fn sg(&self, n: i64, ds: u32, dt: u32) -> Result<S> {
        self.det(Family::Sigma, n, ds, dt)
    }
    fn ps(&self, n: i64) -> Result<S> {
        self.det(Family::Psi, n, 0, 0)
    }
    fn pt(&self, n: i64) -> Result<S> {
        self.det(Family::PsiTilde, n, 0, 0)
    }

    /// P_n with P_{-1} = 0.
    fn p(&self, n: i64, ds: u32, dt: u32) -> Result<Vec<S>> {
        if n < 0 {
            return Ok(Vec::new());
        }
        Ok(polyfam::poly(self.ctx, PolyFamily::P, n as usize, self.s + ds, self.t + dt)?.coeffs)
    }
    fn q(&self, n: i64) -> Result<Vec<S>> {
        Ok(polyfam::poly(self.ctx, PolyFamily::Q, n as usize, self.s, self.t)?.coeffs)
    }
    fn div(&self, num: S, den: S, what: &str) -> Result<S> {
        self.ctx.div(num, den, &format!("{what} at ({},{})", self.s, self.t))
    }
}

fn m2<S: Scalar>(a: S, b: S) -> S {
    a * &b
}

fn m3<S: Scalar>(a: S, b: S, c: S) -> S {
    a * &b * &c
}

/// Evaluates every variant of `id` at (n, s, t), in catalog variant order.
pub fn evaluate<S: Scalar>(ctx: &LatticeContext<S>, id: &str, n: i64, s: u32, t: u32) -> Result<Vec<Evaluation<S>>> {
    let sp = spec(id).ok_or_else(|| Error::Config(format!("unknown identity {id:?}")))?;
    if n < sp.min_n {
        return Err(Error::Precondition(format!("{id} needs n >= {}", sp.min_n)));
    }
    let z = Site { ctx, s, t };
    let c = ctx.ctx();
    let one = ctx.one();
    let sq = |v: S| v.clone() * &v;
    Ok(match id {
        "e1" | "eq1" => vec![balance(
            vec![m2(z.tau(n + 1, 0, 0)?, z.tau(n - 1, 1, 0)?)],
            vec![m2(z.tau(n, 0, 0)?, z.tau(n, 1, 0)?), -sq(z.xi(n, 0, 0)?)],
        )],
        "e2" => vec![balance(
            vec![m2(z.tau(n, 0, 1)?, z.tau(n - 1, 0, 0)?)],
            vec![m2(z.tau(n, 0, 0)?, z.tau(n - 1, 0, 1)?), -sq(z.sg(n - 1, 0, 0)?)],
        )],
        "e3" => vec![balance(
            vec![m2(z.tau(n, 0, 1)?, z.tau(n - 1, 1, 0)?)],
            vec![m2(z.tau(n, 0, 0)?, z.tau(n - 1, 1, 1)?), -sq(z.ps(n - 1)?)],
        )],
        "e4" => vec![balance(
            vec![m2(z.tau(n, 0, 1)?, z.xi(n - 1, 0, 0)?)],
            vec![m2(z.tau(n, 0, 0)?, z.xi(n - 1, 0, 1)?), -m2(z.ps(n - 1)?, z.sg(n - 1, 0, 0)?)],
        )],
        "3.2a" => {
            let lhs = vec![m2(z.tau(n + 1, 0, 1)?, z.tau(n, 0, 0)?), -m2(z.tau(n, 0, 1)?, z.tau(n + 1, 0, 0)?)];
            let s2 = sq(z.sg(n, 0, 0)?);
            vec![balance(lhs.clone(), vec![s2.clone()]), balance(lhs, vec![-s2])]
        }
        "3.2b" => vec![balance(
            vec![m2(z.tau(n, 0, 0)?, z.tau(n, 1, 1)?), -m2(z.tau(n + 1, 0, 0)?, z.tau(n - 1, 1, 1)?)],
            vec![m2(z.xi(n, 0, 1)?, z.xi(n, 0, 0)?), -m2(z.sg(n - 1, 1, 0)?, z.sg(n, 0, 0)?)],
        )],
        "3.3a" => {
            let lhs = vec![m2(z.sg(n + 1, 0, 0)?, z.xi(n, 0, 0)?), m2(z.xi(n + 1, 0, 0)?, z.sg(n, 0, 0)?)];
            let tn = z.tau(n + 1, 0, 0)?;
            vec![
                balance(lhs.clone(), vec![m2(tn.clone(), z.ps(n)?)]),
                balance(lhs, vec![m2(tn, z.pt(n)?)]),
            ]
        }
        "3.3b" => {
            let lhs = vec![m2(z.sg(n, 1, 0)?, z.xi(n, 0, 0)?), m2(z.sg(n - 1, 1, 0)?, z.xi(n + 1, 0, 0)?)];
            let ts = z.tau(n, 1, 0)?;
            vec![
                balance(lhs.clone(), vec![m2(ts.clone(), z.ps(n)?)]),
                balance(lhs, vec![m2(ts, z.pt(n)?)]),
            ]
        }
        "3.4a" => {
            let lhs = vec![m2(z.tau(n, 0, 1)?, z.xi(n, 0, 0)?), -m2(z.tau(n, 0, 0)?, z.xi(n, 0, 1)?)];
            let r = m2(z.sg(n, 0, 0)?, z.ps(n - 1)?);
            vec![balance(lhs.clone(), vec![-r.clone()]), balance(lhs, vec![r])]
        }
        "3.4b" => {
            let lhs = vec![m2(z.tau(n, 0, 0)?, z.xi(n - 1, 0, 1)?), -m2(z.tau(n, 0, 1)?, z.xi(n - 1, 0, 0)?)];
            let r = m2(z.sg(n - 1, 0, 0)?, z.ps(n - 1)?);
            vec![balance(lhs.clone(), vec![-r.clone()]), balance(lhs, vec![r])]
        }
        "tri1" => vec![balance(
            vec![
                m3(z.sg(n, 1, 0)?, z.xi(n, 0, 0)?, z.tau(n + 1, 0, 0)?),
                m3(z.xi(n + 1, 0, 0)?, z.sg(n - 1, 1, 0)?, z.tau(n + 1, 0, 0)?),
            ],
            vec![
                m3(z.sg(n + 1, 0, 0)?, z.tau(n, 1, 0)?, z.xi(n, 0, 0)?),
                m3(z.xi(n + 1, 0, 0)?, z.sg(n, 0, 0)?, z.tau(n, 1, 0)?),
            ],
        )],
        "tri2" => vec![balance(
            vec![
                m3(z.tau(n, 0, 0)?, z.sg(n - 1, 0, 0)?, z.xi(n, 0, 1)?),
                m3(z.sg(n, 0, 0)?, z.xi(n - 1, 0, 1)?, z.tau(n, 0, 0)?),
            ],
            vec![
                m3(z.xi(n, 0, 0)?, z.tau(n, 0, 1)?, z.sg(n - 1, 0, 0)?),
                m3(z.sg(n, 0, 0)?, z.xi(n - 1, 0, 0)?, z.tau(n, 0, 1)?),
            ],
        )],
        "fn-a" => vec![balance(
            vec![m2(z.sg(n, 1, 0)?, z.tau(n + 1, 0, 0)?), -m2(z.sg(n + 1, 0, 0)?, z.tau(n, 1, 0)?)],
            vec![m2(z.xi(n + 1, 0, 0)?, z.ps(n)?)],
        )],
        "fn-b" => vec![balance(
            vec![m2(z.sg(n, 0, 0)?, z.tau(n, 1, 0)?), -m2(z.sg(n - 1, 1, 0)?, z.tau(n + 1, 0, 0)?)],
            vec![m2(z.xi(n, 0, 0)?, z.ps(n)?)],
        )],
        "xi-psi-sq" => {
            let lhs = vec![m2(z.xi(n + 1, 0, 1)?, z.xi(n, 0, 0)?), -m2(z.xi(n, 0, 1)?, z.xi(n + 1, 0, 0)?)];
            let ps = z.ps(n)?;
            vec![
                balance(lhs.clone(), vec![sq(ps.clone())]),
                balance(lhs, vec![-m2(ps, z.pt(n)?)]),
            ]
        }
        "tau-hat-rel" => {
            let lhs = vec![m2(z.xi(n + 1, 0, 0)?, z.xi(n - 1, 1, 0)?), -m2(z.xi(n, 0, 0)?, z.xi(n, 1, 0)?)];
            let r = m2(z.tau(n, 1, 0)?, z.det(Family::TauHat, n, 0, 0)?);
            vec![balance(lhs.clone(), vec![r.clone()]), balance(lhs, vec![-r])]
        }
        "dckp" => {
            let a = m2(z.tau(n, 1, 0)?, z.tau(n, 0, 0)?) - m2(z.tau(n + 1, 0, 0)?, z.tau(n - 1, 1, 0)?);
            let a1 = m2(z.tau(n, 1, 1)?, z.tau(n, 0, 1)?) - m2(z.tau(n + 1, 0, 1)?, z.tau(n - 1, 1, 1)?);
            let b = m2(z.tau(n, 1, 0)?, z.tau(n, 0, 1)?) + m2(z.tau(n, 1, 1)?, z.tau(n, 0, 0)?)
                - m2(z.tau(n + 1, 0, 1)?, z.tau(n - 1, 1, 0)?)
                - m2(z.tau(n + 1, 0, 0)?, z.tau(n - 1, 1, 1)?);
            let four = S::from_i64(4, c);
            vec![balance(vec![four * &a * &a1], vec![sq(b)])]
        }
        "4trr" => {
            let rc = ctx.recurrence_coefficients(n, s, t)?;
            let prev = ctx.recurrence_with_edges(n - 1, s, t)?;
            let (pn, pm, pm2, pp) = (z.p(n, 0, 0)?, z.p(n - 1, 0, 0)?, z.p(n - 2, 0, 0)?, z.p(n + 1, 0, 0)?);
            let lhs = times_x(&combine(&[(one.clone(), &pn[..]), (rc.a.clone(), &pm[..])], c), c);
            let k1 = rc.a.clone() - &rc.b;
            let k2 = -rc.c.clone() + &(rc.a.clone() * &prev.b);
            let k3 = -(rc.a.clone() * &prev.c);
            vec![poly_zero(
                &[(one.clone(), &lhs[..]), (-one.clone(), &pp[..]), (-k1, &pn[..]), (-k2, &pm[..]), (-k3, &pm2[..])],
                c,
            )]
        }
        "prop2.5" => {
            let k = z.div(
                m2(z.xi(n, 0, 0)?, z.xi(n + 1, 0, 0)?),
                m2(z.tau(n, 1, 0)?, z.tau(n + 1, 0, 0)?),
                "tau_n^(s+1) tau_(n+1)",
            )?;
            let xp = times_x(&z.p(n, 1, 0)?, c);
            let (pp, q) = (z.p(n + 1, 0, 0)?, z.q(n)?);
            vec![poly_zero(&[(one.clone(), &xp[..]), (-one.clone(), &pp[..]), (-k, &q[..])], c)]
        }
        "prop2.6" => {
            let k = z.div(
                m2(z.xi(n - 1, 0, 0)?, z.tau(n, 1, 0)?),
                m2(z.xi(n, 0, 0)?, z.tau(n - 1, 1, 0)?),
                "xi_n tau_(n-1)^(s+1)",
            )?;
            let (q, qm) = (z.q(n)?, z.q(n - 1)?);
            let xp = times_x(&z.p(n - 1, 1, 0)?, c);
            vec![poly_zero(&[(one.clone(), &q[..]), (-one.clone(), &xp[..]), (k, &qm[..])], c)]
        }
        "spec1" => {
            let (alpha, _, beta) = ctx.alpha_beta(n, s, t)?;
            let (ps, pms) = (z.p(n, 1, 0)?, z.p(n - 1, 1, 0)?);
            let lhs = times_x(&combine(&[(one.clone(), &ps[..]), (alpha, &pms[..])], c), c);
            let (pp, pn) = (z.p(n + 1, 0, 0)?, z.p(n, 0, 0)?);
            vec![poly_zero(&[(one.clone(), &lhs[..]), (-one.clone(), &pp[..]), (-beta, &pn[..])], c)]
        }
        "dt1" => {
            let tc = ctx.transform_coefficients(n, s, t)?;
            let r = polyfam::poly(ctx, PolyFamily::R, n as usize, s, t)?.coeffs;
            let (pt, pmt) = (z.p(n, 0, 1)?, z.p(n - 1, 0, 1)?);
            vec![poly_zero(&[(one.clone(), &pt[..]), (-one.clone(), &r[..]), (tc.d, &pmt[..])], c)]
        }
        "trans2" => {
            let tc = ctx.transform_coefficients(n, s, t)?;
            let (pt, pmt, pn, pm) = (z.p(n, 0, 1)?, z.p(n - 1, 0, 1)?, z.p(n, 0, 0)?, z.p(n - 1, 0, 0)?);
            vec![poly_zero(
                &[(one.clone(), &pt[..]), (tc.d, &pmt[..]), (-one.clone(), &pn[..]), (-tc.e, &pm[..])],
                c,
            )]
        }
        "propr" => {
            let r = polyfam::poly(ctx, PolyFamily::R, n as usize, s, t)?.coeffs;
            let mut worst = S::zero(c);
            let mut scale_terms = Vec::new();
            let mut consider = |terms: Vec<S>| {
                let total = terms.iter().fold(S::zero(c), |a, x| a + x).abs();
                if total > worst {
                    worst = total;
                }
                scale_terms.extend(terms);
            };
            for j in 0..(n as usize).saturating_sub(1) {
                let terms = r
                    .iter()
                    .enumerate()
                    .map(|(i, ri)| Ok(ri.clone() * &ctx.m(i, j, s, t)?))
                    .collect::<Result<Vec<_>>>()?;
                consider(terms);
            }
            let terms = r
                .iter()
                .enumerate()
                .map(|(i, ri)| Ok(ri.clone() * &ctx.phi(i, s, t)?))
                .collect::<Result<Vec<_>>>()?;
            consider(terms);
            vec![Evaluation {
                residual: worst,
                scale_terms,
            }]
        }
        _ => unreachable!("catalog id without a formula"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_is_complete() {
        for id in CATALOG {
            let sp = spec(id).unwrap();
            assert_eq!(sp.id, id);
            assert_eq!(sp.variants[0], "printed");
        }
        assert!(spec("nope").is_none());
        let mut ids = CATALOG.to_vec();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 25);
    }
}
