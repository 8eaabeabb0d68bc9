use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::numerics::{residual_scale, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "jacobi-float")]
    JacobiFloat,
    #[serde(rename = "synthetic-generic")]
    SyntheticGeneric,
    #[serde(rename = "synthetic-structured")]
    SyntheticStructured,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::JacobiFloat => "jacobi-float",
            Mode::SyntheticGeneric => "synthetic-generic",
            Mode::SyntheticStructured => "synthetic-structured",
        }
    }

    pub fn has_single_moments(&self) -> bool {
        !matches!(self, Mode::SyntheticGeneric)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jacobi" | "jacobi-float" => Ok(Mode::JacobiFloat),
            "synthetic-generic" | "generic" => Ok(Mode::SyntheticGeneric),
            "synthetic-structured" | "structured" => Ok(Mode::SyntheticStructured),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

/// Bimoments, single moments and phi-moments at one base site (s0, t0).
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTable<S: Scalar> {
    pub mode: Mode,
    pub s0: u32,
    pub t0: u32,
    pub b: Vec<Vec<S>>,
    /// Absent when no single moments exist at this t (generic data, or
    /// structured data after a t-step).
    pub u: Option<Vec<S>>,
    /// phi-sequences keyed by t; the entry at `t0` is the current one.
    pub phi: BTreeMap<u32, Vec<S>>,
}

impl<S: Scalar> MomentTable<S> {
    pub fn k(&self) -> usize {
        self.b.len()
    }

    pub fn f(&self) -> Result<&[S]> {
        self.phi.get(&self.t0).map(|v| v.as_slice()).ok_or_else(|| Error::Unavailable {
            what: format!("phi-moments at t={}", self.t0),
            mode: self.mode.to_string(),
        })
    }

    pub fn u(&self) -> Result<&[S]> {
        self.u.as_deref().ok_or_else(|| Error::Unavailable {
            what: format!("single moments at t={}", self.t0),
            mode: self.mode.to_string(),
        })
    }

    pub fn is_symmetric(&self) -> bool {
        let k = self.k();
        (0..k).all(|i| (0..i).all(|j| self.b[i][j] == self.b[j][i]))
    }

    /// Reindex to (s0 + 1, t0): B'[i][j] = B[i+1][j+1], u'[i] = u[i+1], f'[i] = f[i+1].
    pub fn shift_s(&self) -> Result<Self> {
        let k = self.k();
        if k < 2 {
            return Err(Error::ExtentExceeded(format!("shift_s needs K >= 2, table has K={k}")));
        }
        Ok(MomentTable {
            mode: self.mode,
            s0: self.s0 + 1,
            t0: self.t0,
            b: self.b[1..].iter().map(|r| r[1..].to_vec()).collect(),
            u: self.u.as_ref().map(|u| u[1..].to_vec()),
            phi: self.phi.iter().map(|(t, f)| (*t, f[1..].to_vec())).collect(),
        })
    }

    /// Rank-one step to (s0, t0 + 1): B' = B - phi phi^T.
    ///
    /// Single moments have no such law; they survive only a zero update and
    /// otherwise have to be supplied again by the caller.
    pub fn evolve_t(&self, phi: &[S]) -> Result<Self> {
        let k = self.k();
        if phi.len() < k {
            return Err(Error::LengthMismatch {
                expected: k,
                got: phi.len(),
            });
        }
        let b = (0..k)
            .map(|i| (0..k).map(|j| self.b[i][j].clone() - phi[i].clone() * &phi[j]).collect())
            .collect();
        let trivial = phi[..k].iter().all(|p| p.is_zero());
        let mut phis = self.phi.clone();
        phis.remove(&self.t0);
        Ok(MomentTable {
            mode: self.mode,
            s0: self.s0,
            t0: self.t0 + 1,
            b,
            u: if trivial { self.u.clone() } else { None },
            phi: phis,
        })
    }

    /// Largest |B[i+1][j] + B[i][j+1] - u_i u_j| / max(1, |u_i u_j|, ...) over i + j <= max_sum.
    pub fn antidiagonal_residual(&self, max_sum: usize) -> Result<S> {
        let u = self.u()?;
        let k = self.k();
        let ctx = u.first().map(|x| x.ctx()).ok_or(Error::ExtentExceeded("empty table".into()))?;
        let mut worst = S::zero(&ctx);
        for i in 0..k.saturating_sub(1) {
            for j in 0..k - 1 - i {
                if i + j > max_sum {
                    continue;
                }
                let prod = u[i].clone() * &u[j];
                let lhs = self.b[i + 1][j].clone() + &self.b[i][j + 1];
                let r = (lhs.clone() - &prod).abs() / &residual_scale(&[prod, lhs], &ctx);
                if r > worst {
                    worst = r;
                }
            }
        }
        Ok(worst)
    }

    pub fn to_json(&self, precision_digits: Option<u32>) -> Value {
        let rows: Vec<Vec<String>> = self.b.iter().map(|r| r.iter().map(|x| x.to_repr()).collect()).collect();
        let single: Vec<String> = self.u.iter().flatten().map(|x| x.to_repr()).collect();
        let phi: serde_json::Map<String, Value> = self
            .phi
            .iter()
            .map(|(t, f)| (t.to_string(), json!(f.iter().map(|x| x.to_repr()).collect::<Vec<_>>())))
            .collect();
        json!({
            "mode": self.mode.as_str(),
            "s0": self.s0,
            "t0": self.t0,
            "K": self.k(),
            "precision_digits": precision_digits,
            "bimoments": rows,
            "single": single,
            "phi": phi,
        })
    }

    pub fn from_json(v: &Value, ctx: &S::Ctx) -> Result<Self> {
        let field = |name: &str| v.get(name).ok_or_else(|| Error::Parse(format!("missing field {name:?}")));
        let mode: Mode = field("mode")?
            .as_str()
            .ok_or_else(|| Error::Parse("mode must be a string".into()))?
            .parse()?;
        let num = |name: &str| -> Result<u32> {
            field(name)?
                .as_u64()
                .map(|x| x as u32)
                .ok_or_else(|| Error::Parse(format!("{name} must be a natural")))
        };
        let strings = |v: &Value| -> Result<Vec<S>> {
            v.as_array()
                .ok_or_else(|| Error::Parse("expected an array of strings".into()))?
                .iter()
                .map(|x| {
                    x.as_str()
                        .ok_or_else(|| Error::Parse("expected a string".into()))
                        .and_then(|s| S::parse_repr(s, ctx))
                })
                .collect()
        };
        let b = field("bimoments")?
            .as_array()
            .ok_or_else(|| Error::Parse("bimoments must be an array".into()))?
            .iter()
            .map(&strings)
            .collect::<Result<Vec<_>>>()?;
        let k = num("K")? as usize;
        if b.len() != k || b.iter().any(|r| r.len() != k) {
            return Err(Error::Parse(format!("bimoments are not {k}x{k}")));
        }
        let single = strings(field("single")?)?;
        let mut phi = BTreeMap::new();
        for (t, f) in field("phi")?
            .as_object()
            .ok_or_else(|| Error::Parse("phi must be an object".into()))?
        {
            let t: u32 = t.parse().map_err(|_| Error::Parse(format!("bad phi key {t:?}")))?;
            phi.insert(t, strings(f)?);
        }
        Ok(MomentTable {
            mode,
            s0: num("s0")?,
            t0: num("t0")?,
            b,
            u: if single.is_empty() { None } else { Some(single) },
            phi,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rug::Rational;

    fn sample() -> MomentTable<Rational> {
        let q = |p: i64, d: i64| Rational::from((p, d));
        MomentTable {
            mode: Mode::SyntheticGeneric,
            s0: 0,
            t0: 0,
            b: vec![
                vec![q(2, 1), q(1, 2), q(1, 3)],
                vec![q(1, 2), q(5, 7), q(-1, 4)],
                vec![q(1, 3), q(-1, 4), q(3, 1)],
            ],
            u: None,
            phi: [(0, vec![q(1, 2), q(-2, 3), q(1, 5)]), (1, vec![q(1, 1), q(0, 1), q(2, 1)])]
                .into_iter()
                .collect(),
        }
    }

    #[test]
    fn shift_reindexes() {
        let t = sample();
        let s = t.shift_s().unwrap();
        assert_eq!(s.k(), 2);
        assert_eq!(s.b[0][0], t.b[1][1]);
        assert_eq!(s.f().unwrap()[0], t.f().unwrap()[1]);
        let ss = s.shift_s().unwrap();
        assert_eq!(ss.b[0][0], t.b[2][2]);
        assert!(matches!(ss.shift_s(), Err(Error::ExtentExceeded(_))));
    }

    #[test]
    fn evolve_rank_one_and_zero_update() {
        let t = sample();
        let e = t.evolve_t(t.f().unwrap()).unwrap();
        assert_eq!(e.t0, 1);
        assert_eq!(e.b[0][1], Rational::from((1, 2)) - Rational::from((1, 2)) * Rational::from((-2, 3)));
        assert!(e.is_symmetric());
        let zero = vec![Rational::new(); 3];
        let same = t.evolve_t(&zero).unwrap();
        assert_eq!(same.b, t.b);
        assert!(matches!(t.evolve_t(&zero[..2]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn shift_and_evolve_commute() {
        let t = sample();
        let a = t.evolve_t(t.f().unwrap()).unwrap().shift_s().unwrap();
        let b = t.shift_s().unwrap();
        let b = b.evolve_t(b.f().unwrap()).unwrap();
        assert_eq!(a.b, b.b);
    }

    #[test]
    fn json_round_trip() {
        let t = sample();
        let v = t.to_json(None);
        assert_eq!(v["K"], 3);
        assert_eq!(v["bimoments"][0][1], "1/2");
        let back = MomentTable::<Rational>::from_json(&v, &()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn mode_names() {
        assert_eq!("jacobi".parse::<Mode>().unwrap(), Mode::JacobiFloat);
        assert_eq!("jacobi-float".parse::<Mode>().unwrap(), Mode::JacobiFloat);
        assert!("laguerre".parse::<Mode>().is_err());
    }
}
