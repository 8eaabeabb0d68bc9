//! The (n, s, t) grid of determinant values, the dCKP quadratic solved for
//! any one corner, and propagation of tau along t from boundary data.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde_json::{json, Value};

use crate::detkit::{Family, LatticeContext};
use crate::error::{Error, Result};
use crate::moments::Mode;
use crate::numerics::{residual_scale, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Provenance {
    Determinant,
    Propagated,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Determinant => "determinant",
            Provenance::Propagated => "propagated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ranges {
    pub nmax: usize,
    pub smax: u32,
    pub tmax: u32,
}

pub type SiteKey = (Family, usize, u32, u32);

pub struct TauLattice<S: Scalar> {
    pub ranges: Ranges,
    pub ctx: Arc<LatticeContext<S>>,
    pub values: BTreeMap<SiteKey, S>,
    /// tau values produced by [`propagate`], kept beside the determinant ones.
    pub propagated: BTreeMap<(usize, u32, u32), S>,
}

fn available(mode: Mode, family: Family, t: u32) -> bool {
    !family.needs_single_moments()
        || match mode {
            Mode::JacobiFloat => true,
            Mode::SyntheticStructured => t == 0,
            Mode::SyntheticGeneric => false,
        }
}

/// Materializes every family on the grid; families that need single moments
/// are left out where the mode has none.
pub fn build_lattice<S: Scalar>(ctx: Arc<LatticeContext<S>>, ranges: Ranges) -> Result<TauLattice<S>> {
    let k = ctx.source.k();
    let need = ranges.nmax + ranges.smax as usize + 3;
    if k < need {
        return Err(Error::Precondition(format!(
            "table extent {k} is below Nmax + Smax + 3 = {need}"
        )));
    }
    if ranges.tmax > ctx.source.tmax() {
        return Err(Error::Precondition(format!(
            "Tmax {} exceeds the source's {}",
            ranges.tmax,
            ctx.source.tmax()
        )));
    }
    let mode = ctx.mode();
    let mut keys = Vec::new();
    for t in 0..=ranges.tmax {
        for s in 0..=ranges.smax {
            for n in 0..=ranges.nmax {
                for f in Family::ALL {
                    if available(mode, f, t) {
                        keys.push((f, n, s, t));
                    }
                }
            }
        }
    }
    let vals: Vec<Result<(SiteKey, S)>> = keys
        .into_par_iter()
        .map(|key @ (f, n, s, t)| Ok((key, ctx.eval_det(f, n as i64, s, t)?)))
        .collect();
    let values = vals.into_iter().collect::<Result<BTreeMap<_, _>>>()?;
    Ok(TauLattice {
        ranges,
        ctx,
        values,
        propagated: BTreeMap::new(),
    })
}

impl<S: Scalar> TauLattice<S> {
    pub fn get(&self, f: Family, n: usize, s: u32, t: u32) -> Option<&S> {
        self.values.get(&(f, n, s, t))
    }

    pub fn precision_digits(&self) -> Option<u32> {
        self.ctx.source.precision_digits
    }

    fn rows(&self) -> Vec<(&'static str, usize, u32, u32, String, &'static str)> {
        let det = self
            .values
            .iter()
            .map(|(&(f, n, s, t), v)| (f.as_str(), n, s, t, v.to_repr(), Provenance::Determinant.as_str()));
        let prop = self
            .propagated
            .iter()
            .map(|(&(n, s, t), v)| ("tau", n, s, t, v.to_repr(), Provenance::Propagated.as_str()));
        det.chain(prop).collect()
    }

    pub fn to_json(&self) -> Value {
        let sites: Vec<Value> = self
            .rows()
            .into_iter()
            .map(|(f, n, s, t, v, p)| json!({"family": f, "n": n, "s": s, "t": t, "value": v, "provenance": p}))
            .collect();
        json!({
            "meta": {
                "mode": self.ctx.mode().as_str(),
                "ranges": {"n": self.ranges.nmax, "s": self.ranges.smax, "t": self.ranges.tmax},
                "precision": self.precision_digits(),
            },
            "sites": sites,
        })
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["family", "n", "s", "t", "value", "provenance"]).map_err(io)?;
        for (f, n, s, t, v, p) in self.rows() {
            w.write_record([f, &n.to_string(), &s.to_string(), &t.to_string(), &v, p]).map_err(io)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.to_string()))?).map_err(|e| Error::Io(e.to_string()))
    }

    /// Stored tau and xi values that are not strictly positive.
    pub fn nonpositive(&self) -> Vec<SiteKey> {
        self.values
            .iter()
            .filter(|((f, ..), v)| matches!(f, Family::Tau | Family::Xi) && v.partial_cmp(&&S::zero(&v.ctx())) != Some(std::cmp::Ordering::Greater))
            .map(|(k, _)| *k)
            .collect()
    }

    /// 0 < tau_{n+1}/tau_n < tau_n/tau_{n-1} at every n >= 1 of the grid.
    pub fn ratio_sanity(&self) -> Vec<RatioRecord> {
        let mut out = Vec::new();
        for t in 0..=self.ranges.tmax {
            for s in 0..=self.ranges.smax {
                for n in 1..self.ranges.nmax {
                    let g = |m| self.get(Family::Tau, m, s, t).cloned();
                    if let (Some(a), Some(b), Some(c)) = (g(n - 1), g(n), g(n + 1)) {
                        let zero = S::zero(&b.ctx());
                        let holds = !a.is_zero()
                            && !b.is_zero()
                            && c.clone() / &b > zero
                            && c.clone() / &b < b.clone() / &a;
                        out.push(RatioRecord { n, s, t, holds });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RatioRecord {
    pub n: usize,
    pub s: u32,
    pub t: u32,
    pub holds: bool,
}

/// One of the eight tau values in the dCKP equation at site (n, s, t).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Corner {
    /// tau_n^{s+1,t}
    NS1,
    /// tau_n^{s,t}
    N,
    /// tau_{n+1}^{s,t}
    Up,
    /// tau_{n-1}^{s+1,t}
    DownS1,
    NS1T1,
    NT1,
    UpT1,
    DownS1T1,
}

impl Corner {
    pub const ALL: [Corner; 8] = [
        Corner::NS1,
        Corner::N,
        Corner::Up,
        Corner::DownS1,
        Corner::NS1T1,
        Corner::NT1,
        Corner::UpT1,
        Corner::DownS1T1,
    ];

    /// Offsets (dn, ds, dt) from the equation site.
    pub fn offset(self) -> (i64, u32, u32) {
        match self {
            Corner::NS1 => (0, 1, 0),
            Corner::N => (0, 0, 0),
            Corner::Up => (1, 0, 0),
            Corner::DownS1 => (-1, 1, 0),
            Corner::NS1T1 => (0, 1, 1),
            Corner::NT1 => (0, 0, 1),
            Corner::UpT1 => (1, 0, 1),
            Corner::DownS1T1 => (-1, 1, 1),
        }
    }

    fn index(self) -> usize {
        Corner::ALL.iter().position(|c| *c == self).unwrap()
    }
}

impl fmt::Display for Corner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (dn, ds, dt) = self.offset();
        let n = match dn {
            0 => "n".to_string(),
            1 => "n+1".to_string(),
            _ => "n-1".to_string(),
        };
        let s = if ds == 1 { "s+1" } else { "s" };
        let t = if dt == 1 { "t+1" } else { "t" };
        write!(f, "tau_{n}^{{{s},{t}}}")
    }
}

/// The eight values in [`Corner::ALL`] order.
pub type Stencil<S> = [S; 8];

pub fn stencil_at<S: Scalar>(ctx: &LatticeContext<S>, n: i64, s: u32, t: u32) -> Result<Stencil<S>> {
    let v: Vec<S> = Corner::ALL
        .iter()
        .map(|c| {
            let (dn, ds, dt) = c.offset();
            ctx.eval_det(Family::Tau, n + dn, s + ds, t + dt)
        })
        .collect::<Result<_>>()?;
    Ok(v.try_into().expect("eight corners"))
}

/// The brackets A (at t), A' (at t+1) and B.
fn brackets<S: Scalar>(v: &Stencil<S>) -> (S, S, S) {
    let [ns1, n, up, dn, ns1t, nt, upt, dnt] = v.clone();
    let a = ns1.clone() * &n - up.clone() * &dn;
    let a1 = ns1t.clone() * &nt - upt.clone() * &dnt;
    let b = ns1 * &nt + ns1t * &n - upt * &dn - up * &dnt;
    (a, a1, b)
}

/// 4 A A' - B^2.
pub fn dckp_residual<S: Scalar>(v: &Stencil<S>, c: &S::Ctx) -> S {
    let (a, a1, b) = brackets(v);
    S::from_i64(4, c) * &a * &a1 - b.clone() * &b
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootKind {
    Linear,
    Double,
    Distinct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Roots<S> {
    pub kind: RootKind,
    pub root1: S,
    pub root2: S,
}

/// Coefficients (c2, c1, c0) of the quadratic in the chosen corner; each
/// bracket is affine in any single corner, so two evaluations fix it.
pub fn corner_quadratic<S: Scalar>(stencil: &Stencil<S>, unknown: Corner, c: &S::Ctx) -> (S, S, S) {
    let at = |x: S| {
        let mut v = stencil.clone();
        v[unknown.index()] = x;
        brackets(&v)
    };
    let (a0, a10, b0) = at(S::zero(c));
    let (a1, a11, b1) = at(S::one(c));
    let (da, da1, db) = (a1 - &a0, a11 - &a10, b1 - &b0);
    let four = S::from_i64(4, c);
    let two = S::from_i64(2, c);
    let c2 = four.clone() * &da * &da1 - db.clone() * &db;
    let c1 = four.clone() * &(a0.clone() * &da1 + da * &a10) - two * &b0 * &db;
    let c0 = four * &a0 * &a10 - b0.clone() * &b0;
    (c2, c1, c0)
}

/// Both roots of the dCKP quadratic in `unknown`, the other seven values taken
/// from `stencil` (the unknown's slot is ignored).
pub fn solve_dckp_corner<S: Scalar>(stencil: &Stencil<S>, unknown: Corner, c: &S::Ctx) -> Result<Roots<S>> {
    let (c2, c1, c0) = corner_quadratic(stencil, unknown, c);
    if c2.is_zero() {
        if c1.is_zero() {
            return Err(Error::Degenerate(format!("no dependence on {unknown}")));
        }
        let r = -(c0 / &c1);
        return Ok(Roots {
            kind: RootKind::Linear,
            root1: r.clone(),
            root2: r,
        });
    }
    let disc = c1.clone() * &c1 - S::from_i64(4, c) * &c2 * &c0;
    let sq = disc.sqrt_checked()?;
    let den = S::from_i64(2, c) * &c2;
    let kind = if sq.is_zero() { RootKind::Double } else { RootKind::Distinct };
    Ok(Roots {
        kind,
        root1: (-c1.clone() + &sq) / &den,
        root2: (-c1 - &sq) / &den,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchPolicy {
    /// Root nearer the determinant value at the site.
    Oracle,
    /// Root nearer tau at the same (n, s) one step back in t.
    Continuity,
}

impl BranchPolicy {
    pub fn as_str(&self) -> &'static str {
        match self {
            BranchPolicy::Oracle => "oracle",
            BranchPolicy::Continuity => "continuity",
        }
    }
}

/// Picks the root nearer `reference`.
pub fn choose_branch<S: Scalar>(roots: &Roots<S>, reference: &S, site: &str) -> Result<(S, S)> {
    if roots.kind != RootKind::Distinct {
        return Ok((roots.root1.clone(), roots.root2.clone()));
    }
    let d1 = (roots.root1.clone() - reference).abs();
    let d2 = (roots.root2.clone() - reference).abs();
    match d1.partial_cmp(&d2) {
        Some(std::cmp::Ordering::Less) => Ok((roots.root1.clone(), roots.root2.clone())),
        Some(std::cmp::Ordering::Greater) => Ok((roots.root2.clone(), roots.root1.clone())),
        _ => Err(Error::BranchAmbiguity(site.to_string())),
    }
}

#[derive(Debug, Clone)]
pub struct PropagatedSite<S> {
    pub n: usize,
    pub s: u32,
    pub t: u32,
    pub value: S,
    pub other_root: S,
    pub root_kind: RootKind,
    /// Determinant value of the same site.
    pub oracle: S,
    pub error_abs: S,
    pub error_rel: S,
}

#[derive(Debug, Clone)]
pub struct PropagationReport<S> {
    pub policy: BranchPolicy,
    pub from_t: u32,
    pub to_t: u32,
    pub sites: Vec<PropagatedSite<S>>,
    /// Set when a site could not be solved; later sites were not attempted.
    pub halted: Option<String>,
}

impl<S: Scalar> PropagationReport<S> {
    pub fn max_error_rel(&self, c: &S::Ctx) -> S {
        self.sites.iter().fold(S::zero(c), |m, x| if x.error_rel > m { x.error_rel.clone() } else { m })
    }

    pub fn exact_match(&self) -> bool {
        self.halted.is_none() && self.sites.iter().all(|x| x.error_abs.is_zero())
    }

    pub fn to_json(&self) -> Value {
        json!({
            "policy": self.policy.as_str(),
            "from_t": self.from_t,
            "to_t": self.to_t,
            "halted": self.halted,
            "sites": self.sites.iter().map(|x| json!({
                "n": x.n, "s": x.s, "t": x.t,
                "value": x.value.to_repr(),
                "other_root": x.other_root.to_short(),
                "root_kind": format!("{:?}", x.root_kind).to_lowercase(),
                "error_abs": x.error_abs.to_short(),
                "error_rel": x.error_rel.to_short(),
            })).collect::<Vec<_>>(),
        })
    }
}

/// Steps tau from `from_t` to `to_t`. The slice at `from_t` and rows n = 0, 1
/// at every later t come from determinants; each row n >= 2 is solved from
/// the dCKP equation at site n-1 for its (n, s, t+1) corner. Row m is carried
/// for s up to Smax + (Nmax - m) because row m+1 reaches one s further.
pub fn propagate<S: Scalar>(
    lat: &mut TauLattice<S>,
    from_t: u32,
    to_t: u32,
    policy: BranchPolicy,
) -> Result<PropagationReport<S>> {
    let Ranges { nmax, smax, tmax } = lat.ranges;
    if from_t > to_t || to_t > tmax {
        return Err(Error::Precondition(format!("cannot propagate {from_t} -> {to_t} within Tmax {tmax}")));
    }
    let ctx = lat.ctx.clone();
    let c = ctx.ctx().clone();
    let span = |m: usize| smax + (nmax - m) as u32;
    let det = |n: usize, s: u32, t: u32| ctx.eval_det(Family::Tau, n as i64, s, t);

    let mut slice: BTreeMap<(usize, u32), S> = BTreeMap::new();
    for m in 0..=nmax {
        for s in 0..=span(m) {
            slice.insert((m, s), det(m, s, from_t)?);
        }
    }
    let mut report = PropagationReport {
        policy,
        from_t,
        to_t,
        sites: Vec::new(),
        halted: None,
    };
    'steps: for t in from_t..to_t {
        let mut next: BTreeMap<(usize, u32), S> = BTreeMap::new();
        for m in 0..=nmax.min(1) {
            for s in 0..=span(m) {
                next.insert((m, s), det(m, s, t + 1)?);
            }
        }
        for m in 2..=nmax {
            let solved: Vec<Result<PropagatedSite<S>>> = (0..=span(m))
                .into_par_iter()
                .map(|s| {
                    let n = m - 1;
                    let stencil: Stencil<S> = [
                        slice[&(n, s + 1)].clone(),
                        slice[&(n, s)].clone(),
                        slice[&(m, s)].clone(),
                        slice[&(n - 1, s + 1)].clone(),
                        next[&(n, s + 1)].clone(),
                        next[&(n, s)].clone(),
                        S::zero(&c),
                        next[&(n - 1, s + 1)].clone(),
                    ];
                    let site = format!("tau_{m}^{{{s},{}}}", t + 1);
                    let roots = solve_dckp_corner(&stencil, Corner::UpT1, &c)
                        .map_err(|e| Error::Precondition(format!("{site}: {e}")))?;
                    let oracle = det(m, s, t + 1)?;
                    let reference = match policy {
                        BranchPolicy::Oracle => oracle.clone(),
                        BranchPolicy::Continuity => slice[&(m, s)].clone(),
                    };
                    let (value, other_root) = choose_branch(&roots, &reference, &site)?;
                    let error_abs = (value.clone() - &oracle).abs();
                    let error_rel = error_abs.clone() / &residual_scale(std::slice::from_ref(&oracle), &c);
                    Ok(PropagatedSite {
                        n: m,
                        s,
                        t: t + 1,
                        value,
                        other_root,
                        root_kind: roots.kind,
                        oracle,
                        error_abs,
                        error_rel,
                    })
                })
                .collect();
            for r in solved {
                match r {
                    Ok(site) => {
                        next.insert((site.n, site.s), site.value.clone());
                        report.sites.push(site);
                    }
                    Err(e) => {
                        report.halted = Some(e.to_string());
                        break 'steps;
                    }
                }
            }
        }
        for (&(m, s), v) in &next {
            if s <= smax {
                lat.propagated.insert((m, s, t + 1), v.clone());
            }
        }
        slice = next;
    }
    report.sites.retain(|x| x.s <= smax);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::{build_jacobi_source, synthetic_generic, MomentSource, MomentTable, QuadratureConfig};
    use crate::numerics::TolerancePolicy;
    use proptest::prelude::*;
    use rug::float::Constant;
    use rug::{Float, Rational};

    fn generic(seed: u64, k: usize, tmax: u32) -> Arc<LatticeContext<Rational>> {
        Arc::new(LatticeContext::new(
            MomentSource::from_evolution(synthetic_generic(seed, k, tmax).unwrap(), tmax).unwrap(),
        ))
    }

    const GRID: Ranges = Ranges { nmax: 4, smax: 2, tmax: 2 };

    #[test]
    fn n_zero_grid_is_all_ones() {
        let lat = build_lattice(generic(1, 6, 1), Ranges { nmax: 0, smax: 2, tmax: 1 }).unwrap();
        for s in 0..=2 {
            for t in 0..=1 {
                assert_eq!(lat.get(Family::Tau, 0, s, t), Some(&Rational::from(1)));
            }
        }
        assert!(lat.get(Family::SigmaTilde, 0, 0, 0).is_none());
    }

    #[test]
    fn extent_is_checked() {
        assert!(matches!(
            build_lattice(generic(1, 8, 2), Ranges { nmax: 4, smax: 2, tmax: 2 }),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            build_lattice(generic(1, 9, 1), Ranges { nmax: 4, smax: 2, tmax: 2 }),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn deterministic_rebuild() {
        let a = build_lattice(generic(42, 9, 2), GRID).unwrap().to_json();
        let b = build_lattice(generic(42, 9, 2), GRID).unwrap().to_json();
        assert_eq!(a, b);
    }

    #[test]
    fn export_shapes() {
        let lat = build_lattice(generic(3, 6, 1), Ranges { nmax: 1, smax: 0, tmax: 0 }).unwrap();
        let v = lat.to_json();
        assert_eq!(v["meta"]["mode"], "synthetic-generic");
        assert_eq!(v["meta"]["precision"], Value::Null);
        assert_eq!(v["meta"]["ranges"], json!({"n": 1, "s": 0, "t": 0}));
        assert_eq!(v["sites"].as_array().unwrap().len(), 2 * 7);
        let csv = lat.to_csv().unwrap();
        assert!(csv.starts_with("family,n,s,t,value,provenance\n"));
        assert_eq!(csv.lines().count(), 1 + 14);
    }

    #[test]
    fn n_zero_stencil_has_zero_root() {
        let ctx = generic(5, 6, 1);
        let st = stencil_at(&ctx, 0, 0, 0).unwrap();
        let roots = solve_dckp_corner(&st, Corner::DownS1T1, &()).unwrap();
        assert!(roots.root1.is_zero() || roots.root2.is_zero());
        assert!(matches!(solve_dckp_corner(&st, Corner::DownS1, &()), Err(Error::Degenerate(_)) | Ok(_)));
    }

    #[test]
    fn every_corner_recovers_its_value() {
        let ctx = generic(9, 8, 2);
        for (n, s, t) in [(1, 0, 0), (2, 1, 1), (3, 0, 1)] {
            let st = stencil_at(&ctx, n, s, t).unwrap();
            assert!(dckp_residual(&st, &()).is_zero());
            for corner in Corner::ALL {
                let truth = &st[corner.index()];
                match solve_dckp_corner(&st, corner, &()) {
                    Ok(r) => assert!(&r.root1 == truth || &r.root2 == truth, "{corner} at {n},{s},{t}"),
                    Err(e) => panic!("{corner} at {n},{s},{t}: {e}"),
                }
            }
        }
    }

    #[test]
    fn propagation_is_exact_in_synthetic_mode() {
        for seed in [1u64, 2, 3] {
            let mut lat = build_lattice(generic(seed, 9, 2), GRID).unwrap();
            let rep = propagate(&mut lat, 0, 2, BranchPolicy::Oracle).unwrap();
            assert!(rep.exact_match(), "{:?}", rep.halted);
            assert_eq!(rep.sites.len(), 3 * 3 * 2);
            for (&(n, s, t), v) in &lat.propagated {
                assert_eq!(Some(v), lat.get(Family::Tau, n, s, t));
            }
        }
    }

    #[test]
    fn continuity_policy_runs_without_oracle_reference() {
        let mut lat = build_lattice(generic(4, 9, 2), GRID).unwrap();
        let rep = propagate(&mut lat, 0, 1, BranchPolicy::Continuity).unwrap();
        assert!(rep.halted.is_none());
        assert_eq!(rep.sites.len(), 9);
    }

    #[test]
    fn constant_slice_reproduces_itself() {
        let k = 9;
        let mut b = vec![vec![Rational::new(); k]; k];
        for (i, row) in b.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = Rational::from((1, (i + j + 1) as u32));
            }
        }
        let base = MomentTable {
            mode: Mode::SyntheticGeneric,
            s0: 0,
            t0: 0,
            b,
            u: None,
            phi: (0..=2).map(|t| (t, vec![Rational::new(); k])).collect(),
        };
        let ctx = Arc::new(LatticeContext::new(MomentSource::from_evolution(base, 2).unwrap()));
        let mut lat = build_lattice(ctx, GRID).unwrap();
        let rep = propagate(&mut lat, 0, 2, BranchPolicy::Continuity).unwrap();
        assert!(rep.halted.is_none());
        for (&(n, s, t), v) in &lat.propagated {
            assert_eq!(v, lat.get(Family::Tau, n, s, 0).unwrap(), "{n},{s},{t}");
        }
    }

    #[test]
    fn branch_ambiguity_detected() {
        let roots = Roots {
            kind: RootKind::Distinct,
            root1: Rational::from(1),
            root2: Rational::from(3),
        };
        assert!(matches!(choose_branch(&roots, &Rational::from(2), "x"), Err(Error::BranchAmbiguity(_))));
        assert_eq!(choose_branch(&roots, &Rational::from(3), "x").unwrap().0, 3);
    }

    #[test]
    fn jacobi_lattice_values_and_propagation() {
        let policy = TolerancePolicy::new(50, 15).unwrap();
        let cfg = QuadratureConfig::for_precision(50);
        let ctx = Arc::new(LatticeContext::new(build_jacobi_source(6, 1, &policy, &cfg).unwrap()));
        let bits = *ctx.ctx();
        let mut lat = build_lattice(ctx.clone(), Ranges { nmax: 2, smax: 1, tmax: 1 }).unwrap();
        let l2 = Float::with_val(bits, Constant::Log2);
        let t10 = lat.get(Family::Tau, 1, 0, 0).unwrap().clone();
        assert!((t10 - Float::with_val(bits, &l2 * 2u32)).abs() < 1e-45);
        let t11 = lat.get(Family::Tau, 1, 1, 0).unwrap().clone();
        let want = Float::with_val(bits, 2) / 3u32 - Float::with_val(bits, &l2 * 2u32) / 3u32;
        assert!((t11 - want).abs() < 1e-45);
        assert!(lat.nonpositive().is_empty());
        assert!(lat.ratio_sanity().iter().all(|r| r.holds));

        let st = stencil_at(&ctx, 1, 0, 0).unwrap();
        let roots = solve_dckp_corner(&st, Corner::UpT1, &bits).unwrap();
        let (chosen, _) = choose_branch(&roots, &st[6], "site").unwrap();
        assert!(Float::with_val(bits, &chosen - &st[6]).abs() < 1e-40);

        let rep = propagate(&mut lat, 0, 1, BranchPolicy::Oracle).unwrap();
        assert!(rep.halted.is_none());
        assert!(rep.max_error_rel(&bits) < 1e-35);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn oracle_equivalence(seed in 0u64..1_000_000) {
            let mut lat = build_lattice(generic(seed, 8, 1), Ranges { nmax: 3, smax: 1, tmax: 1 }).unwrap();
            let rep = propagate(&mut lat, 0, 1, BranchPolicy::Oracle).unwrap();
            prop_assert!(rep.exact_match());
        }
    }
}
