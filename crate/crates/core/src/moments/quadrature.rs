//! Tanh-sinh (double-exponential) rule on (0,1) at MPFR precision.
//!
//! Node k of level l sits at tau = k * 2^-l, z = (1 + tanh(pi/2 sinh tau)) / 2.
//! Both z and 1 - z are stored so integrands that vanish at x = 1 keep full
//! relative accuracy near that endpoint.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use rug::float::Constant;
use rug::ops::Pow;
use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{bits_to_digits, digits_of_agreement};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    /// Finest node-doubling level tried before giving up.
    pub level: u32,
    /// Digits two successive levels must agree to.
    pub target_digits: u32,
}

impl QuadratureConfig {
    pub fn for_precision(precision_digits: u32) -> Self {
        QuadratureConfig {
            level: 8,
            target_digits: precision_digits.saturating_sub(10).max(1),
        }
    }

    pub fn validate(&self, precision_digits: u32) -> Result<()> {
        if self.level < 3 {
            return Err(Error::Config(format!("quadrature level {} < 3", self.level)));
        }
        if self.target_digits + 10 > precision_digits {
            return Err(Error::Config(format!(
                "target digits {} exceed precision {} - 10",
                self.target_digits, precision_digits
            )));
        }
        Ok(())
    }
}

pub struct Nodes {
    pub z: Vec<Float>,
    /// 1 - z, computed without cancellation.
    pub zc: Vec<Float>,
    pub w: Vec<Float>,
}

type NodeCache = Mutex<HashMap<(u32, u32), Arc<Nodes>>>;

fn cache() -> &'static NodeCache {
    static CACHE: OnceLock<NodeCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

pub fn nodes(bits: u32, level: u32) -> Arc<Nodes> {
    if let Some(n) = cache().lock().unwrap().get(&(bits, level)) {
        return n.clone();
    }
    let built = Arc::new(build_nodes(bits, level));
    cache().lock().unwrap().entry((bits, level)).or_insert(built).clone()
}

fn build_nodes(bits: u32, level: u32) -> Nodes {
    let digits = bits_to_digits(bits) as i32;
    let cutoff = Float::with_val(bits, 10).pow(-(digits + 10));
    let pi = Float::with_val(bits, Constant::Pi);
    let h = Float::with_val(bits, 1) >> level as i32;
    let mut out = Nodes {
        z: Vec::new(),
        zc: Vec::new(),
        w: Vec::new(),
    };
    let mut k: u64 = 0;
    loop {
        let tau = Float::with_val(bits, &h * k);
        let (sh, ch) = tau.sinh_cosh(Float::new(bits));
        let u = Float::with_val(bits, &pi * &sh) >> 1;
        let e = Float::with_val(bits, -2 * u).exp();
        let denom = Float::with_val(bits, 1 + &e);
        let hi = Float::with_val(bits, 1 / &denom);
        let lo = Float::with_val(bits, &e / &denom);
        let w = Float::with_val(bits, &h * &pi) * ch * &hi * &lo;
        if w < cutoff {
            break;
        }
        if k == 0 {
            out.z.push(hi);
            out.zc.push(lo);
            out.w.push(w);
        } else {
            out.z.push(hi.clone());
            out.zc.push(lo.clone());
            out.w.push(w.clone());
            out.z.push(lo);
            out.zc.push(hi);
            out.w.push(w);
        }
        k += 1;
    }
    out
}

/// Convergence bookkeeping returned with every quadrature result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadStats {
    pub level: u32,
    pub digits: f64,
    pub nodes: usize,
}

/// Runs `eval` at levels 3, 4, ... until two successive levels agree to the
/// target on every output.
fn converge<F>(bits: u32, cfg: &QuadratureConfig, mut eval: F) -> Result<(Vec<Float>, QuadStats)>
where
    F: FnMut(&Nodes) -> Vec<Float>,
{
    let cap = bits_to_digits(bits) as f64;
    let mut prev: Option<Vec<Float>> = None;
    let mut achieved = 0.0;
    for level in 3..=cfg.level {
        let nd = nodes(bits, level);
        let cur = eval(&nd);
        if let Some(p) = &prev {
            achieved = p
                .iter()
                .zip(&cur)
                .map(|(a, b)| digits_of_agreement(a, b, cap))
                .fold(f64::INFINITY, f64::min);
            if achieved >= cfg.target_digits as f64 {
                return Ok((
                    cur,
                    QuadStats {
                        level,
                        digits: achieved,
                        nodes: nd.z.len(),
                    },
                ));
            }
        }
        prev = Some(cur);
    }
    Err(Error::ConvergenceFailure {
        level: cfg.level,
        target_digits: cfg.target_digits,
        achieved_digits: achieved,
    })
}

/// ((1 - x)/(1 + x))^t from x and 1 - x.
pub(crate) fn ratio_pow(x: &Float, xc: &Float, t: u32) -> Float {
    let bits = x.prec();
    if t == 0 {
        return Float::with_val(bits, 1);
    }
    let r = Float::with_val(bits, xc / Float::with_val(bits, 1 + x));
    r.pow(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    /// x^e w^t
    Plain,
    /// sqrt(2) x^e w^t / (1 + x)
    Phi,
}

/// One-dimensional moments for each exponent in `exps`.
pub fn moments_1d(
    exps: &[u32],
    t: u32,
    kernel: Kernel,
    bits: u32,
    cfg: &QuadratureConfig,
) -> Result<(Vec<Float>, QuadStats)> {
    let max_e = exps.iter().copied().max().unwrap_or(0) as usize;
    let (mut vals, stats) = converge(bits, cfg, |nd| {
        let partial: Vec<Vec<Float>> = (0..nd.z.len())
            .into_par_iter()
            .map(|k| {
                let x = &nd.z[k];
                let mut base = Float::with_val(bits, &nd.w[k]) * ratio_pow(x, &nd.zc[k], t);
                if kernel == Kernel::Phi {
                    base /= Float::with_val(bits, 1 + x);
                }
                let mut pows = Vec::with_capacity(max_e + 1);
                pows.push(base);
                for e in 1..=max_e {
                    let next = Float::with_val(bits, &pows[e - 1] * x);
                    pows.push(next);
                }
                exps.iter().map(|&e| pows[e as usize].clone()).collect()
            })
            .collect();
        sum_columns(bits, exps.len(), &partial)
    })?;
    if kernel == Kernel::Phi {
        let r2 = Float::with_val(bits, 2).sqrt();
        for v in vals.iter_mut() {
            *v *= &r2;
        }
    }
    Ok((vals, stats))
}

fn sum_columns(bits: u32, width: usize, rows: &[Vec<Float>]) -> Vec<Float> {
    let mut acc = vec![Float::with_val(bits, 0); width];
    for row in rows {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    acc
}

/// Bimoments int int x^a y^b w(x)^t w(y)^t / (x + y) for each (a, b).
///
/// Splitting the square along the diagonal and substituting x = yv (resp.
/// y = xv) removes the corner singularity:
/// m_ab = int_0^1 y^(a+b) w(y)^t int_0^1 (v^a + v^b) w(yv)^t / (1 + v) dv dy.
pub fn bimoments_2d(
    pairs: &[(u32, u32)],
    t: u32,
    bits: u32,
    cfg: &QuadratureConfig,
) -> Result<(Vec<Float>, QuadStats)> {
    let mut exps: Vec<u32> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
    exps.sort_unstable();
    exps.dedup();
    let slot = |e: u32| exps.binary_search(&e).unwrap();
    let pair_slots: Vec<(usize, usize)> = pairs.iter().map(|&(a, b)| (slot(a), slot(b))).collect();
    let max_sum = pairs.iter().map(|&(a, b)| a + b).max().unwrap_or(0) as usize;

    converge(bits, cfg, |nd| {
        let nv = nd.z.len();
        // v^a w_v / (1 + v) for each needed a
        let vpow: Vec<Vec<Float>> = {
            let base: Vec<Float> =
                (0..nv).map(|k| Float::with_val(bits, &nd.w[k] / Float::with_val(bits, 1 + &nd.z[k]))).collect();
            exps.iter()
                .map(|&a| {
                    base.iter()
                        .zip(&nd.z)
                        .map(|(b, v)| Float::with_val(bits, b * Float::with_val(bits, v.pow(a))))
                        .collect()
                })
                .collect()
        };
        // t = 0: the inner integral does not depend on y
        let g_const: Option<Vec<Float>> =
            (t == 0).then(|| vpow.iter().map(|row| row.iter().fold(Float::with_val(bits, 0), |acc, x| acc + x)).collect());

        let partial: Vec<Vec<Float>> = (0..nd.z.len())
            .into_par_iter()
            .map(|ky| {
                let y = &nd.z[ky];
                let yc = &nd.zc[ky];
                let g: Vec<Float> = match &g_const {
                    Some(g) => g.clone(),
                    None => {
                        let mut g = vec![Float::with_val(bits, 0); exps.len()];
                        for kv in 0..nv {
                            // 1 - yv = (1 - y) + y (1 - v)
                            let one_minus = Float::with_val(bits, y * &nd.zc[kv]) + yc;
                            let one_plus = Float::with_val(bits, 2 - &one_minus);
                            let q = Float::with_val(bits, &one_minus / &one_plus).pow(t);
                            for (acc, row) in g.iter_mut().zip(&vpow) {
                                *acc += Float::with_val(bits, &q * &row[kv]);
                            }
                        }
                        g
                    }
                };
                let outer = Float::with_val(bits, &nd.w[ky]) * ratio_pow(y, yc, t);
                let mut ypow = Vec::with_capacity(max_sum + 1);
                ypow.push(outer);
                for e in 1..=max_sum {
                    let next = Float::with_val(bits, &ypow[e - 1] * y);
                    ypow.push(next);
                }
                pairs
                    .iter()
                    .zip(&pair_slots)
                    .map(|(&(a, b), &(sa, sb))| {
                        Float::with_val(bits, &g[sa] + &g[sb]) * &ypow[(a + b) as usize]
                    })
                    .collect()
            })
            .collect();
        sum_columns(bits, pairs.len(), &partial)
    })
}
