//! Moments of the deformed Jacobi weight x^s ((1-x)/(1+x))^t on (0,1).

use std::collections::BTreeMap;

use rug::ops::Pow;
use rug::Float;

use super::quadrature::{bimoments_2d, moments_1d, Kernel, QuadStats, QuadratureConfig};
use super::table::{Mode, MomentTable};
use crate::error::{Error, Result};

pub fn weight(x: &Float, s: u32, t: u32) -> Result<Float> {
    if !(*x > 0 && *x < 1) {
        return Err(Error::Domain(format!("weight needs 0 < x < 1, got {}", x.to_f64())));
    }
    let bits = x.prec();
    let xs = Float::with_val(bits, x.pow(s));
    let ratio = Float::with_val(bits, 1 - x) / Float::with_val(bits, 1 + x);
    Ok(xs * ratio.pow(t))
}

pub fn single_moment(i: u32, s: u32, t: u32, cfg: &QuadratureConfig, bits: u32) -> Result<Float> {
    Ok(moments_1d(&[s + i], t, Kernel::Plain, bits, cfg)?.0.remove(0))
}

pub fn phi_moment(i: u32, s: u32, t: u32, cfg: &QuadratureConfig, bits: u32) -> Result<Float> {
    Ok(moments_1d(&[s + i], t, Kernel::Phi, bits, cfg)?.0.remove(0))
}

pub fn bimoment(i: u32, j: u32, s: u32, t: u32, cfg: &QuadratureConfig, bits: u32) -> Result<Float> {
    Ok(bimoments_2d(&[(s + i, s + j)], t, bits, cfg)?.0.remove(0))
}

/// Worst convergence seen while filling a table.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TableStats {
    pub max_level: u32,
    pub min_digits: f64,
}

impl TableStats {
    fn absorb(&mut self, q: QuadStats) {
        self.max_level = self.max_level.max(q.level);
        self.min_digits = self.min_digits.min(q.digits);
    }
}

impl Default for TableStats {
    fn default() -> Self {
        TableStats {
            max_level: 0,
            min_digits: f64::INFINITY,
        }
    }
}

pub(crate) fn single_and_phi(
    k: usize,
    s0: u32,
    t: u32,
    cfg: &QuadratureConfig,
    bits: u32,
    stats: &mut TableStats,
) -> Result<(Vec<Float>, Vec<Float>)> {
    let exps: Vec<u32> = (0..k as u32).map(|i| s0 + i).collect();
    let (u, qa) = moments_1d(&exps, t, Kernel::Plain, bits, cfg)?;
    let (f, qb) = moments_1d(&exps, t, Kernel::Phi, bits, cfg)?;
    stats.absorb(qa);
    stats.absorb(qb);
    Ok((u, f))
}

/// Every entry by quadrature at (s0, t0), no evolution rules involved.
pub fn jacobi_base_table(
    s0: u32,
    t0: u32,
    k: usize,
    cfg: &QuadratureConfig,
    bits: u32,
) -> Result<(MomentTable<Float>, TableStats)> {
    if k == 0 {
        return Err(Error::Precondition("moment table needs K >= 1".into()));
    }
    let mut stats = TableStats::default();
    let mut pairs = Vec::new();
    for i in 0..k as u32 {
        for j in i..k as u32 {
            pairs.push((s0 + i, s0 + j));
        }
    }
    let (vals, q) = bimoments_2d(&pairs, t0, bits, cfg)?;
    stats.absorb(q);
    let mut b = vec![vec![Float::new(bits); k]; k];
    for (&(a, c), v) in pairs.iter().zip(vals) {
        let (i, j) = ((a - s0) as usize, (c - s0) as usize);
        b[j][i] = v.clone();
        b[i][j] = v;
    }
    let (u, f) = single_and_phi(k, s0, t0, cfg, bits, &mut stats)?;
    Ok((
        MomentTable {
            mode: Mode::JacobiFloat,
            s0,
            t0,
            b,
            u: Some(u),
            phi: BTreeMap::from([(t0, f)]),
        },
        stats,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{digits_of_agreement, digits_to_bits};
    use rug::float::Constant;

    const P: u32 = 60;

    fn setup() -> (QuadratureConfig, u32) {
        (QuadratureConfig::for_precision(P), digits_to_bits(P))
    }

    fn ln2(bits: u32) -> Float {
        Float::with_val(bits, Constant::Log2)
    }

    fn close(a: &Float, b: &Float) -> bool {
        digits_of_agreement(a, b, 1000.0) > (P - 12) as f64
    }

    #[test]
    fn weight_values() {
        let bits = 128;
        let half = Float::with_val(bits, 0.5);
        assert_eq!(weight(&half, 0, 0).unwrap(), 1);
        let w = weight(&half, 1, 1).unwrap();
        assert!(digits_of_agreement(&w, &(Float::with_val(bits, 1) / 6u32), 100.0) > 35.0);
        let w = weight(&half, 0, 2).unwrap();
        assert!(digits_of_agreement(&w, &(Float::with_val(bits, 1) / 9u32), 100.0) > 35.0);
        assert!(matches!(weight(&Float::with_val(bits, 1), 0, 0), Err(Error::Domain(_))));
        assert!(matches!(weight(&Float::with_val(bits, 0), 0, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn single_moments_closed_forms() {
        let (cfg, bits) = setup();
        assert!(close(&single_moment(0, 0, 0, &cfg, bits).unwrap(), &Float::with_val(bits, 1)));
        assert!(close(&single_moment(3, 2, 0, &cfg, bits).unwrap(), &(Float::with_val(bits, 1) / 6u32)));
        let expect = ln2(bits) * 2u32 - 1u32;
        assert!(close(&single_moment(0, 0, 1, &cfg, bits).unwrap(), &expect));
    }

    #[test]
    fn phi_moments_closed_forms() {
        let (cfg, bits) = setup();
        let r2 = Float::with_val(bits, 2).sqrt();
        let expect = Float::with_val(bits, &r2 * ln2(bits));
        assert!(close(&phi_moment(0, 0, 0, &cfg, bits).unwrap(), &expect));
        let expect = r2 * (1u32 - ln2(bits));
        assert!(close(&phi_moment(0, 0, 1, &cfg, bits).unwrap(), &expect));
        let a = phi_moment(2, 1, 1, &cfg, bits).unwrap();
        let b = phi_moment(3, 0, 1, &cfg, bits).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bimoment_closed_forms() {
        let (cfg, bits) = setup();
        let l = ln2(bits);
        assert!(close(&bimoment(0, 0, 0, 0, &cfg, bits).unwrap(), &Float::with_val(bits, &l * 2u32)));
        assert!(close(&bimoment(1, 0, 0, 0, &cfg, bits).unwrap(), &Float::with_val(bits, 0.5)));
        let m11 = (Float::with_val(bits, 2) - Float::with_val(bits, &l * 2u32)) / 3u32;
        assert!(close(&bimoment(1, 1, 0, 0, &cfg, bits).unwrap(), &m11));
        // rank-one step of the corner entry
        let m = bimoment(0, 0, 0, 1, &cfg, bits).unwrap();
        let l2 = Float::with_val(bits, &l * &l);
        let expect = Float::with_val(bits, &l * 2u32) - l2 * 2u32;
        assert!(close(&m, &expect));
    }

    #[test]
    fn base_table_small_cases() {
        let (cfg, bits) = setup();
        let (t, _) = jacobi_base_table(0, 0, 2, &cfg, bits).unwrap();
        assert!(t.is_symmetric());
        assert!(close(&t.b[0][1], &Float::with_val(bits, 0.5)));
        let (t1, _) = jacobi_base_table(1, 0, 1, &cfg, bits).unwrap();
        let m11 = bimoment(1, 1, 0, 0, &cfg, bits).unwrap();
        assert!(close(&t1.b[0][0], &m11));
    }

    #[test]
    fn bimoment_symmetry_random_sites() {
        let (cfg, bits) = setup();
        for (i, j, s, t) in [(0, 3, 1, 1), (2, 5, 0, 2), (4, 1, 2, 1)] {
            let a = bimoment(i, j, s, t, &cfg, bits).unwrap();
            let b = bimoment(j, i, s, t, &cfg, bits).unwrap();
            assert!(close(&a, &b));
        }
    }
}
