//! Moment tables and the evolution rules that move them across the (s, t) lattice.

pub mod jacobi;
pub mod quadrature;
pub mod synthetic;
pub mod table;

use rug::Float;
use serde::Serialize;

pub use jacobi::{bimoment, jacobi_base_table, phi_moment, single_moment, weight, TableStats};
pub use quadrature::QuadratureConfig;
pub use synthetic::{synthetic_generic, synthetic_structured};
pub use table::{Mode, MomentTable};

use crate::error::{Error, Result};
use crate::numerics::{digits_of_agreement, Scalar, TolerancePolicy};

/// Rank-one-evolved entry compared with its direct quadrature.
#[derive(Debug, Clone, Serialize)]
pub struct SpotCheck {
    pub i: usize,
    pub j: usize,
    pub t: u32,
    pub evolved: String,
    pub direct: String,
    pub digits: f64,
}

/// Tables at s = 0 for t = 0..=tmax; other s are reached by reindexing.
#[derive(Debug, Clone)]
pub struct MomentSource<S: Scalar> {
    pub mode: Mode,
    pub ctx: S::Ctx,
    pub precision_digits: Option<u32>,
    tables: Vec<MomentTable<S>>,
    pub spot_checks: Vec<SpotCheck>,
    pub stats: Option<TableStats>,
}

impl<S: Scalar> MomentSource<S> {
    /// Steps `base` forward with its own phi-sequences up to `tmax`.
    pub fn from_evolution(base: MomentTable<S>, tmax: u32) -> Result<Self> {
        if base.s0 != 0 || base.t0 != 0 {
            return Err(Error::Precondition("a moment source starts at (s, t) = (0, 0)".into()));
        }
        let ctx = base
            .b
            .first()
            .and_then(|r| r.first())
            .map(|x| x.ctx())
            .ok_or_else(|| Error::Precondition("empty base table".into()))?;
        let mut tables = vec![base];
        for _ in 0..tmax {
            let last = tables.last().unwrap();
            let next = last.evolve_t(last.f()?)?;
            tables.push(next);
        }
        Ok(MomentSource {
            mode: tables[0].mode,
            ctx,
            precision_digits: None,
            tables,
            spot_checks: Vec::new(),
            stats: None,
        })
    }

    pub fn k(&self) -> usize {
        self.tables[0].k()
    }

    pub fn tmax(&self) -> u32 {
        self.tables.len() as u32 - 1
    }

    pub fn table(&self, t: u32) -> Result<&MomentTable<S>> {
        self.tables
            .get(t as usize)
            .ok_or_else(|| Error::ExtentExceeded(format!("t={t} beyond source tmax={}", self.tmax())))
    }

    fn index(&self, idx: usize) -> Result<()> {
        if idx >= self.k() {
            return Err(Error::ExtentExceeded(format!("moment index {idx} beyond table extent K={}", self.k())));
        }
        Ok(())
    }

    pub fn m(&self, i: usize, j: usize, s: u32, t: u32) -> Result<&S> {
        let (a, b) = (i + s as usize, j + s as usize);
        self.index(a.max(b))?;
        Ok(&self.table(t)?.b[a][b])
    }

    pub fn u(&self, i: usize, s: u32, t: u32) -> Result<&S> {
        let a = i + s as usize;
        self.index(a)?;
        Ok(&self.table(t)?.u()?[a])
    }

    pub fn phi(&self, i: usize, s: u32, t: u32) -> Result<&S> {
        let a = i + s as usize;
        self.index(a)?;
        Ok(&self.table(t)?.f()?[a])
    }

    /// Copy of the table at (s, t), extent K - s.
    pub fn table_at(&self, s: u32, t: u32) -> Result<MomentTable<S>> {
        let mut tab = self.table(t)?.clone();
        for _ in 0..s {
            tab = tab.shift_s()?;
        }
        Ok(tab)
    }
}

/// Jacobi-weight source: B at t = 0 by quadrature, later t by rank-one
/// updates with quadratured phi, single and phi moments by quadrature at
/// every t. Every t is checked against the antidiagonal identity and a few
/// entries against direct two-dimensional quadrature.
pub fn build_jacobi_source(
    k: usize,
    tmax: u32,
    policy: &TolerancePolicy,
    cfg: &QuadratureConfig,
) -> Result<MomentSource<Float>> {
    cfg.validate(policy.precision_digits())?;
    let bits = policy.bits();
    let (base, mut stats) = jacobi_base_table(0, 0, k, cfg, bits)?;
    let mut tables = vec![base];
    for t in 1..=tmax {
        let last = tables.last().unwrap();
        let mut next = last.evolve_t(last.f()?)?;
        let (u, f) = jacobi::single_and_phi(k, 0, t, cfg, bits, &mut stats)?;
        next.u = Some(u);
        next.phi.insert(t, f);
        tables.push(next);
    }
    let exp = policy.rel_tol_exponent();
    for tab in &tables {
        let r = tab.antidiagonal_residual(usize::MAX)?;
        if !r.abs_lt_pow10(exp) {
            return Err(Error::SelfCheck(format!(
                "antidiagonal identity off by {} at t={}",
                r.to_string_radix(10, Some(6)),
                tab.t0
            )));
        }
    }
    let mut spot_checks = Vec::new();
    let mut spots = vec![(0usize, 0usize), (0, 1)];
    if k > 2 {
        spots.push((k - 1, k - 1));
    }
    let pairs: Vec<(u32, u32)> = spots.iter().map(|&(i, j)| (i as u32, j as u32)).collect();
    for t in 1..=tmax {
        let (direct, _) = quadrature::bimoments_2d(&pairs, t, bits, cfg)?;
        for (&(i, j), d) in spots.iter().zip(direct) {
            let evolved = &tables[t as usize].b[i][j];
            let digits = digits_of_agreement(evolved, &d, policy.precision_digits() as f64);
            let diff = Float::with_val(bits, evolved - &d).abs() / d.clone().abs().max(&Float::with_val(bits, 1));
            if !diff.abs_lt_pow10(exp) {
                return Err(Error::SelfCheck(format!(
                    "rank-one m[{i}][{j}] at t={t} disagrees with direct quadrature ({digits:.1} digits)"
                )));
            }
            spot_checks.push(SpotCheck {
                i,
                j,
                t,
                evolved: evolved.to_repr(),
                direct: d.to_repr(),
                digits,
            });
        }
    }
    Ok(MomentSource {
        mode: Mode::JacobiFloat,
        ctx: bits,
        precision_digits: Some(policy.precision_digits()),
        tables,
        spot_checks,
        stats: Some(stats),
    })
}
