//! Exact rational moment data for the determinant-level checks.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::Rational;

use super::table::{Mode, MomentTable};
use crate::error::{Error, Result};

const BOUND: i64 = 50;

/// Nonzero p/q with |p|, q <= BOUND; an exact zero would make the data non-generic.
fn draw(rng: &mut ChaCha8Rng) -> Rational {
    let p = loop {
        let p = rng.gen_range(-BOUND..=BOUND);
        if p != 0 {
            break p;
        }
    };
    let q = rng.gen_range(1..=BOUND);
    Rational::from((p, q))
}

fn draw_phis(rng: &mut ChaCha8Rng, k: usize, tmax: u32) -> BTreeMap<u32, Vec<Rational>> {
    (0..=tmax).map(|t| (t, (0..k).map(|_| draw(rng)).collect())).collect()
}

/// Random symmetric B and free phi-sequences for t = 0..=tmax. No single moments.
pub fn synthetic_generic(seed: u64, k: usize, tmax: u32) -> Result<MomentTable<Rational>> {
    if k == 0 {
        return Err(Error::Precondition("synthetic table needs K >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = vec![vec![Rational::new(); k]; k];
    for i in 0..k {
        for j in i..k {
            let v = draw(&mut rng);
            b[j][i] = v.clone();
            b[i][j] = v;
        }
    }
    let phi = draw_phis(&mut rng, k, tmax);
    Ok(MomentTable {
        mode: Mode::SyntheticGeneric,
        s0: 0,
        t0: 0,
        b,
        u: None,
        phi,
    })
}

/// Random single moments with B completed along antidiagonals by
/// m_{i+1,j} = u_i u_j - m_{i,j+1}.
///
/// On antidiagonal d the first entry m_{0,d} is free for even d and forced to
/// (1/2) sum_{k<d} (-1)^k u_k u_{d-1-k} for odd d; with that choice the
/// completion is symmetric. Single moments exist only at t = 0.
pub fn synthetic_structured(seed: u64, k: usize, tmax: u32) -> Result<MomentTable<Rational>> {
    if k == 0 {
        return Err(Error::Precondition("synthetic table needs K >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: Vec<Rational> = (0..2 * k).map(|_| draw(&mut rng)).collect();
    let mut b = vec![vec![Rational::new(); k]; k];
    for d in 0..=2 * (k - 1) {
        let mut x = if d % 2 == 0 {
            draw(&mut rng)
        } else {
            let mut acc = Rational::new();
            for i in 0..d {
                let term = Rational::from(&u[i] * &u[d - 1 - i]);
                if i % 2 == 0 {
                    acc += term;
                } else {
                    acc -= term;
                }
            }
            acc / 2
        };
        for i in 0..=d {
            let j = d - i;
            if i < k && j < k {
                b[i][j] = x.clone();
            }
            if i < d {
                x = Rational::from(&u[i] * &u[j - 1]) - x;
            }
        }
    }
    let table = MomentTable {
        mode: Mode::SyntheticStructured,
        s0: 0,
        t0: 0,
        b,
        u: Some(u[..k].to_vec()),
        phi: draw_phis(&mut rng, k, tmax),
    };
    if !table.is_symmetric() {
        return Err(Error::SelfCheck("structured completion lost symmetry".into()));
    }
    Ok(table)
}
