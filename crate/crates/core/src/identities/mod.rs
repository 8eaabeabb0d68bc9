//! Identity suite: residual records per (identity, variant, site), variant
//! adjudication, gating, implication checks and the substitution cross-check.

pub mod catalog;

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

pub use catalog::{evaluate, spec, Evaluation, IdentitySpec, CATALOG, DETERMINANTAL};

use crate::detkit::{Family, LatticeContext};
use crate::error::{Error, Result};
use crate::moments::Mode;
use crate::numerics::{residual_scale, Scalar, TolerancePolicy};

/// Site ranges, all starting at 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SiteRange {
    pub nmax: i64,
    pub smax: u32,
    pub tmax: u32,
}

impl SiteRange {
    pub fn sites(&self) -> Vec<(i64, u32, u32)> {
        let mut out = Vec::new();
        for n in 0..=self.nmax {
            for s in 0..=self.smax {
                for t in 0..=self.tmax {
                    out.push((n, s, t));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Ok,
    SkippedMode,
    SkippedExtent,
    Failed(String),
}

impl Status {
    fn from_error(e: &Error) -> Self {
        match e {
            Error::Unavailable { .. } => Status::SkippedMode,
            Error::ExtentExceeded(_) => Status::SkippedExtent,
            other => Status::Failed(other.to_string()),
        }
    }

    pub fn is_skipped(&self) -> bool {
        matches!(self, Status::SkippedMode | Status::SkippedExtent)
    }

    pub fn label(&self) -> String {
        match self {
            Status::Ok => "ok".into(),
            Status::SkippedMode => "skipped: mode".into(),
            Status::SkippedExtent => "skipped: extent".into(),
            Status::Failed(msg) => format!("error: {msg}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityRecord<S> {
    pub id: &'static str,
    pub variant: &'static str,
    pub variant_index: usize,
    pub n: i64,
    pub s: u32,
    pub t: u32,
    pub residual_abs: Option<S>,
    pub residual_rel: Option<S>,
    pub pass: bool,
    pub mode: Mode,
    pub gating: bool,
    pub status: Status,
}

#[derive(Serialize)]
struct RecordLine<'a> {
    id: &'a str,
    n: i64,
    s: u32,
    t: u32,
    residual_abs: Option<String>,
    residual_rel: Option<String>,
    pass: bool,
    mode: Mode,
    variant: &'a str,
    gating: bool,
    status: String,
}

impl<S: Scalar> IdentityRecord<S> {
    pub fn to_json_line(&self) -> String {
        let line = RecordLine {
            id: self.id,
            n: self.n,
            s: self.s,
            t: self.t,
            residual_abs: self.residual_abs.as_ref().map(Scalar::to_short),
            residual_rel: self.residual_rel.as_ref().map(Scalar::to_short),
            pass: self.pass,
            mode: self.mode,
            variant: self.variant,
            gating: self.gating,
            status: self.status.label(),
        };
        serde_json::to_string(&line).expect("record serializes")
    }
}

/// Whether `id` can gate in `mode`. Orthogonality-derived identities only
/// gate where the tables carry the moment structure.
pub fn gates(mode: Mode, id: &str) -> bool {
    match mode {
        Mode::SyntheticGeneric => DETERMINANTAL.contains(&id),
        Mode::JacobiFloat | Mode::SyntheticStructured => true,
    }
}

/// Parses a comma list against the catalog; empty or absent means all.
pub fn parse_filter(list: Option<&str>) -> Result<Vec<&'static str>> {
    let Some(list) = list.map(str::trim).filter(|l| !l.is_empty()) else {
        return Ok(CATALOG.to_vec());
    };
    let mut ids = Vec::new();
    for part in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let sp = spec(part).ok_or_else(|| Error::Config(format!("unknown identity {part:?}")))?;
        if !ids.contains(&sp.id) {
            ids.push(sp.id);
        }
    }
    ids.sort_by_key(|id| CATALOG.iter().position(|c| c == id));
    Ok(ids)
}

#[derive(Debug, Clone, Serialize)]
pub struct VariantSummary {
    pub name: &'static str,
    pub evaluated: usize,
    pub passed: usize,
    pub max_residual_abs: Option<String>,
    pub max_residual_rel: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentitySummary {
    pub id: &'static str,
    pub gating: bool,
    pub chosen_variant: &'static str,
    pub printed_holds: bool,
    pub skipped: usize,
    pub errors: usize,
    pub variants: Vec<VariantSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Implication {
    pub name: &'static str,
    pub sites_checked: usize,
    pub violations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ShiftClosure {
    pub sites: usize,
    pub skipped: usize,
    /// Largest relative mismatch between a determinant of the substituted
    /// table and the family value it should reproduce.
    pub max_term_mismatch: Option<String>,
    pub max_residual_rel: Option<String>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteSummary {
    pub mode: Mode,
    pub exact: bool,
    pub precision_digits: Option<u32>,
    pub guard_digits: Option<u32>,
    pub range: SiteRange,
    pub records: usize,
    pub gating_records: usize,
    pub gating_failures: usize,
    pub all_gating_pass: bool,
    pub identities: Vec<IdentitySummary>,
    pub implications: Vec<Implication>,
    pub shift_closure: ShiftClosure,
}

#[derive(Debug, Clone)]
pub struct SuiteReport<S> {
    pub records: Vec<IdentityRecord<S>>,
    pub summary: SuiteSummary,
}

impl<S: Scalar> SuiteReport<S> {
    pub fn all_gating_pass(&self) -> bool {
        self.summary.all_gating_pass
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            writeln!(w, "{}", r.to_json_line())?;
        }
        Ok(())
    }

    pub fn chosen(&self, id: &str) -> Option<&'static str> {
        self.summary.identities.iter().find(|i| i.id == id).map(|i| i.chosen_variant)
    }

    /// Records of the adjudicated variant of `id` that were evaluated.
    pub fn evaluated<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a IdentityRecord<S>> + 'a {
        let chosen = self.chosen(id);
        self.records
            .iter()
            .filter(move |r| r.id == id && Some(r.variant) == chosen && r.status == Status::Ok)
    }
}

fn residuals<S: Scalar>(ev: &Evaluation<S>, ctx: &S::Ctx) -> (S, S) {
    let abs = ev.residual.abs();
    let rel = abs.clone() / &residual_scale(&ev.scale_terms, ctx);
    (abs, rel)
}

fn keep_max<S: Scalar>(slot: &mut Option<S>, v: &Option<S>) {
    if let Some(v) = v {
        if slot.as_ref().is_none_or(|m| v > m) {
            *slot = Some(v.clone());
        }
    }
}

/// Evaluates every selected identity at every admissible site in `range`.
pub fn run_suite<S: Scalar>(
    ctx: &LatticeContext<S>,
    range: SiteRange,
    policy: &TolerancePolicy,
    ids: &[&'static str],
) -> SuiteReport<S> {
    let mode = ctx.mode();
    let c = ctx.ctx();
    let mut jobs = Vec::new();
    for &id in ids {
        let sp = spec(id).expect("filtered ids are in the catalog");
        for (n, s, t) in range.sites() {
            if n >= sp.min_n {
                jobs.push((sp, n, s, t));
            }
        }
    }
    let evaluated: Vec<_> = jobs
        .par_iter()
        .map(|&(sp, n, s, t)| (sp, n, s, t, evaluate(ctx, sp.id, n, s, t)))
        .collect();

    let mut records = Vec::new();
    for (sp, n, s, t, res) in evaluated {
        for (vi, &variant) in sp.variants.iter().enumerate() {
            let base = IdentityRecord {
                id: sp.id,
                variant,
                variant_index: vi,
                n,
                s,
                t,
                residual_abs: None,
                residual_rel: None,
                pass: false,
                mode,
                gating: false,
                status: Status::Ok,
            };
            records.push(match &res {
                Ok(evs) => {
                    let (abs, rel) = residuals(&evs[vi], c);
                    IdentityRecord {
                        pass: policy.passes(&abs, &rel),
                        residual_abs: Some(abs),
                        residual_rel: Some(rel),
                        ..base
                    }
                }
                Err(e) => IdentityRecord {
                    status: Status::from_error(e),
                    ..base
                },
            });
        }
    }

    let mut summaries = Vec::new();
    for &id in ids {
        let sp = spec(id).unwrap();
        let mine: Vec<&IdentityRecord<S>> = records.iter().filter(|r| r.id == id).collect();
        let mut variants = Vec::new();
        let mut chosen = None;
        for (vi, &name) in sp.variants.iter().enumerate() {
            let ok: Vec<_> = mine.iter().filter(|r| r.variant_index == vi && r.status == Status::Ok).collect();
            let passed = ok.iter().filter(|r| r.pass).count();
            let (mut ma, mut mr) = (None, None);
            for r in &ok {
                keep_max(&mut ma, &r.residual_abs);
                keep_max(&mut mr, &r.residual_rel);
            }
            if chosen.is_none() && !ok.is_empty() && passed == ok.len() {
                chosen = Some(vi);
            }
            variants.push(VariantSummary {
                name,
                evaluated: ok.len(),
                passed,
                max_residual_abs: ma.as_ref().map(Scalar::to_short),
                max_residual_rel: mr.as_ref().map(Scalar::to_short),
            });
        }
        let printed_holds = chosen == Some(0);
        let printed_only = mine.iter().filter(|r| r.variant_index == 0);
        summaries.push(IdentitySummary {
            id,
            gating: gates(mode, id),
            chosen_variant: sp.variants[chosen.unwrap_or(0)],
            printed_holds,
            skipped: printed_only.clone().filter(|r| r.status.is_skipped()).count(),
            errors: printed_only.filter(|r| matches!(r.status, Status::Failed(_))).count(),
            variants,
        });
    }

    for r in records.iter_mut() {
        let sm = summaries.iter().find(|x| x.id == r.id).unwrap();
        r.gating = sm.gating && r.variant == sm.chosen_variant && !r.status.is_skipped();
    }
    records.sort_by(|a, b| (a.id, a.n, a.s, a.t, a.variant_index).cmp(&(b.id, b.n, b.s, b.t, b.variant_index)));

    let implications = implication_checks(ctx, policy, &records, &summaries);
    let shift_closure = shift_closure(ctx, range, policy);
    let gating_records = records.iter().filter(|r| r.gating).count();
    let gating_failures = records.iter().filter(|r| r.gating && !r.pass).count();
    let summary = SuiteSummary {
        mode,
        exact: S::EXACT,
        precision_digits: (!S::EXACT).then(|| policy.precision_digits()),
        guard_digits: (!S::EXACT).then(|| policy.guard_digits()),
        range,
        records: records.len(),
        gating_records,
        gating_failures,
        all_gating_pass: gating_failures == 0,
        identities: summaries,
        implications,
        shift_closure,
    };
    SuiteReport { records, summary }
}

fn implication_checks<S: Scalar>(
    ctx: &LatticeContext<S>,
    policy: &TolerancePolicy,
    records: &[IdentityRecord<S>],
    summaries: &[IdentitySummary],
) -> Vec<Implication> {
    let mut verdict: BTreeMap<(&str, i64, u32, u32), bool> = BTreeMap::new();
    for r in records {
        let chosen = summaries.iter().find(|x| x.id == r.id).map(|x| x.chosen_variant);
        if r.status == Status::Ok && Some(r.variant) == chosen {
            verdict.insert((r.id, r.n, r.s, r.t), r.pass);
        }
    }
    let mut sites: Vec<(i64, u32, u32)> = verdict.keys().map(|k| (k.1, k.2, k.3)).collect();
    sites.sort();
    sites.dedup();
    let get = |id: &'static str, site: (i64, u32, u32)| verdict.get(&(id, site.0, site.1, site.2)).copied();
    let mut out = Vec::new();
    for (name, a, b, c) in [
        ("3.3a and 3.3b imply tri1", "3.3a", "3.3b", "tri1"),
        ("3.4a and 3.4b imply tri2", "3.4a", "3.4b", "tri2"),
    ] {
        let (mut checked, mut bad) = (0, 0);
        for &site in &sites {
            if let (Some(pa), Some(pb), Some(pc)) = (get(a, site), get(b, site), get(c, site)) {
                checked += 1;
                if pa && pb && !pc {
                    bad += 1;
                }
            }
        }
        out.push(Implication {
            name,
            sites_checked: checked,
            violations: bad,
        });
    }
    let (mut checked, mut bad) = (0, 0);
    for &site in &sites {
        let Some(p) = get("eq1", site) else { continue };
        let Ok((alpha, alpha_s, _)) = ctx.alpha_beta(site.0, site.1, site.2) else { continue };
        let diff = (alpha.clone() - &alpha_s).abs();
        let rel = diff.clone() / &residual_scale(&[alpha, alpha_s], ctx.ctx());
        checked += 1;
        if policy.passes(&diff, &rel) != p {
            bad += 1;
        }
    }
    out.push(Implication {
        name: "eq1 iff the two alpha forms agree",
        sites_checked: checked,
        violations: bad,
    });
    out
}

/// Applies the two-sided bordered form of e2 to the substituted table
/// m_{i,j} -> m_{i,j+1} (column border phi_i, row border phi_{j+1}) and
/// checks that it reproduces the xi/psi/psi-tilde relation term by term.
pub fn shift_closure<S: Scalar>(ctx: &LatticeContext<S>, range: SiteRange, policy: &TolerancePolicy) -> ShiftClosure {
    let mut sites = 0;
    let mut skipped = 0;
    let mut worst_term: Option<S> = None;
    let mut worst_res: Option<S> = None;
    let mut pass = true;
    for (n, s, t) in range.sites() {
        if n < 1 {
            continue;
        }
        match closure_site(ctx, n as usize, s, t) {
            Ok((mismatch, res)) => {
                sites += 1;
                let m_abs = mismatch.clone();
                pass &= policy.passes(&m_abs, &mismatch) && policy.passes(&res.0, &res.1);
                keep_max(&mut worst_term, &Some(mismatch));
                keep_max(&mut worst_res, &Some(res.1));
            }
            Err(_) => skipped += 1,
        }
    }
    ShiftClosure {
        sites,
        skipped,
        max_term_mismatch: worst_term.as_ref().map(Scalar::to_short),
        max_residual_rel: worst_res.as_ref().map(Scalar::to_short),
        pass: pass && sites > 0,
    }
}

fn closure_site<S: Scalar>(ctx: &LatticeContext<S>, n: usize, s: u32, t: u32) -> Result<(S, (S, S))> {
    let c = ctx.ctx();
    let bp = |i: usize, j: usize| ctx.m(i, j + 1, s, t);
    let f = |i: usize| ctx.phi(i, s, t);
    let g = |j: usize| ctx.phi(j + 1, s, t);
    let lead = |k: usize, plus: bool| -> Result<S> {
        let rows = (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| {
                        let v = bp(i, j)?;
                        Ok(if plus { v - &(f(i)? * &g(j)?) } else { v })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        S::determinant(rows, c)
    };
    let k = n - 1;
    let col = S::determinant(
        (0..=k)
            .map(|i| {
                let mut r = (0..k).map(|j| bp(i, j)).collect::<Result<Vec<_>>>()?;
                r.push(f(i)?);
                Ok(r)
            })
            .collect::<Result<Vec<_>>>()?,
        c,
    )?;
    let mut row_rows = (0..k)
        .map(|i| (0..=k).map(|j| bp(i, j)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    row_rows.push((0..=k).map(g).collect::<Result<Vec<_>>>()?);
    let row = S::determinant(row_rows, c)?;
    let (tp_n, t_n, tp_k, t_k) = (lead(n, true)?, lead(n, false)?, lead(k, true)?, lead(k, false)?);

    let xi = |m: usize, dt: u32| ctx.eval_det(Family::Xi, m as i64, s, t + dt);
    let pairs = [
        (tp_n.clone(), xi(n, 1)?),
        (t_n.clone(), xi(n, 0)?),
        (tp_k.clone(), xi(k, 1)?),
        (t_k.clone(), xi(k, 0)?),
        (col.clone(), ctx.eval_det(Family::Psi, k as i64, s, t)?),
        (row.clone(), ctx.eval_det(Family::PsiTilde, k as i64, s, t)?),
    ];
    let mut mismatch = S::zero(c);
    for (a, b) in &pairs {
        let d = (a.clone() - b).abs() / &residual_scale(&[a.clone(), b.clone()], c);
        if d > mismatch {
            mismatch = d;
        }
    }
    let terms = [tp_n * &t_k, tp_k * &t_n, -(col * &row)];
    let res = (terms[0].clone() - &terms[1] - &terms[2]).abs();
    let rel = res.clone() / &residual_scale(&terms, c);
    Ok((mismatch, (res, rel)))
}
