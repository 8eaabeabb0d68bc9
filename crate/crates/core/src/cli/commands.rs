use std::fs;
use std::sync::Arc;

use rug::float::Constant;
use rug::{Float, Rational};

use super::{emit, Command, Format, RunConfig};
use crate::detkit::LatticeContext;
use crate::error::{Error, Result};
use crate::identities::{self, SiteRange};
use crate::lattice::{self, BranchPolicy, Ranges};
use crate::lax;
use crate::moments::{build_jacobi_source, synthetic_generic, synthetic_structured, Mode, MomentSource, QuadratureConfig};
use crate::numerics::{digits_of_agreement, Scalar};
use crate::polyfam::{self, PolyFamily};

pub(super) fn dispatch(cfg: &RunConfig) -> Result<bool> {
    match cfg.command {
        Command::Selfcheck => selfcheck(cfg),
        Command::Lattice => {
            let k = cfg.k.unwrap_or(cfg.nmax + cfg.smax as usize + 3);
            on_source(cfg, k, cfg.tmax, |c| run_lattice(cfg, c), |c| run_lattice(cfg, c))
        }
        Command::Verify => {
            let k = cfg.k.unwrap_or(cfg.nmax + cfg.smax as usize + 4);
            on_source(cfg, k, cfg.tmax + 1, |c| verify(cfg, c), |c| verify(cfg, c))
        }
        Command::Polys => {
            let k = cfg.k.unwrap_or(cfg.nmax + cfg.smax as usize + 3);
            on_source(cfg, k, cfg.tmax, |c| polys(cfg, c), |c| polys(cfg, c))
        }
        Command::Lax => {
            let k = cfg.k.unwrap_or(8) + cfg.smax as usize + 3;
            on_source(cfg, k, cfg.tmax + 2, |c| run_lax(cfg, c), |c| run_lax(cfg, c))
        }
    }
}

fn quadrature(cfg: &RunConfig) -> QuadratureConfig {
    QuadratureConfig {
        level: cfg.quad_level,
        target_digits: cfg.policy.precision_digits().saturating_sub(10).max(1),
    }
}

fn jacobi_source(cfg: &RunConfig, k: usize, tmax: u32) -> Result<MomentSource<Float>> {
    build_jacobi_source(k, tmax, &cfg.policy, &quadrature(cfg))
}

fn on_source<R>(
    cfg: &RunConfig,
    k: usize,
    tmax: u32,
    exact: impl FnOnce(LatticeContext<Rational>) -> Result<R>,
    float: impl FnOnce(LatticeContext<Float>) -> Result<R>,
) -> Result<R> {
    match cfg.mode {
        Mode::JacobiFloat => float(LatticeContext::new(jacobi_source(cfg, k, tmax)?)),
        Mode::SyntheticGeneric => exact(LatticeContext::new(MomentSource::from_evolution(
            synthetic_generic(cfg.seed, k, tmax)?,
            tmax,
        )?)),
        Mode::SyntheticStructured => exact(LatticeContext::new(MomentSource::from_evolution(
            synthetic_structured(cfg.seed, k, tmax)?,
            tmax,
        )?)),
    }
}

fn run_lattice<S: Scalar>(cfg: &RunConfig, ctx: LatticeContext<S>) -> Result<bool> {
    let ranges = Ranges {
        nmax: cfg.nmax,
        smax: cfg.smax,
        tmax: cfg.tmax,
    };
    let mut lat = lattice::build_lattice(Arc::new(ctx), ranges)?;
    let mut ok = true;
    if cfg.tmax > 0 && cfg.nmax >= 2 {
        let rep = lattice::propagate(&mut lat, 0, cfg.tmax, BranchPolicy::Oracle)?;
        if let Some(why) = &rep.halted {
            eprintln!("propagation halted: {why}");
            ok = false;
        }
        let bad = rep
            .sites
            .iter()
            .filter(|x| !cfg.policy.passes(&x.error_abs, &x.error_rel))
            .count();
        ok &= bad == 0;
        eprintln!(
            "propagated {} sites, max relative error {}, {} outside tolerance",
            rep.sites.len(),
            rep.max_error_rel(lat.ctx.ctx()).to_short(),
            bad
        );
    }
    if cfg.mode == Mode::JacobiFloat {
        for (f, n, s, t) in lat.nonpositive() {
            eprintln!("warning: {f}_{n}^{{{s},{t}}} is not positive");
        }
        let ratios = lat.ratio_sanity();
        let held = ratios.iter().filter(|r| r.holds).count();
        eprintln!("ratio sanity: {held}/{} sites", ratios.len());
    }
    let text = match cfg.format {
        Format::Json => format!("{}\n", lat.to_json()),
        Format::Csv => lat.to_csv()?,
    };
    emit(cfg, &text)?;
    Ok(ok)
}

fn verify<S: Scalar>(cfg: &RunConfig, ctx: LatticeContext<S>) -> Result<bool> {
    let ids = identities::parse_filter(cfg.identities.as_deref())?;
    let range = SiteRange {
        nmax: cfg.nmax as i64,
        smax: cfg.smax,
        tmax: cfg.tmax,
    };
    let rep = identities::run_suite(&ctx, range, &cfg.policy, &ids);
    let mut buf = Vec::new();
    rep.write_jsonl(&mut buf)?;
    emit(cfg, &String::from_utf8(buf).expect("json is utf-8"))?;
    let s = &rep.summary;
    if let Some(path) = &cfg.summary {
        fs::write(path, format!("{}\n", serde_json::to_string_pretty(s)?))?;
    }
    eprintln!(
        "{} records, {} gating, {} gating failures",
        s.records, s.gating_records, s.gating_failures
    );
    Ok(rep.all_gating_pass())
}

fn polys<S: Scalar>(cfg: &RunConfig, ctx: LatticeContext<S>) -> Result<bool> {
    let mut out = Vec::new();
    for t in 0..=cfg.tmax {
        for s in 0..=cfg.smax {
            for &f in &cfg.families {
                for n in 0..=cfg.nmax {
                    if f == PolyFamily::R && n == 0 {
                        continue;
                    }
                    out.push(polyfam::poly(&ctx, f, n, s, t)?.to_json());
                }
            }
        }
    }
    emit(cfg, &format!("{}\n", serde_json::Value::Array(out)))?;
    Ok(true)
}

fn run_lax<S: Scalar>(cfg: &RunConfig, ctx: LatticeContext<S>) -> Result<bool> {
    let k = cfg.k.unwrap_or(8);
    let sites: Vec<(u32, u32)> = (0..=cfg.smax).flat_map(|s| (0..=cfg.tmax).map(move |t| (s, t))).collect();
    let rep = lax::run_lax(&ctx, k, &sites, &cfg.policy)?;
    emit(cfg, &rep.to_jsonl())?;
    let chosen: Vec<String> = rep.chosen.iter().map(|(k, v)| format!("{k}={v}")).collect();
    eprintln!("chosen variants: {}", chosen.join(" "));
    Ok(rep.all_gating_pass())
}

struct Check {
    name: String,
    digits: f64,
    pass: bool,
}

fn residual_digits(r: &Float, cap: f64) -> f64 {
    if r.is_zero() {
        cap
    } else {
        (-r.clone().abs().log10().to_f64()).min(cap)
    }
}

fn selfcheck(cfg: &RunConfig) -> Result<bool> {
    let p = cfg.policy.precision_digits();
    let cap = p as f64;
    let k = cfg.k.unwrap_or(7);
    let mut checks = Vec::new();
    match jacobi_source(cfg, k, 2) {
        Ok(src) => {
            let bits = src.ctx;
            let two_ln2 = Float::with_val(bits, Constant::Log2) * 2u32;
            let d = digits_of_agreement(src.m(0, 0, 0, 0)?, &two_ln2, cap);
            checks.push(Check {
                name: "m00 vs 2ln2".into(),
                digits: d,
                pass: d >= cap - 20.0,
            });
            for t in 0..=2 {
                let r = src.table(t)?.antidiagonal_residual(2 * k - 2)?;
                checks.push(Check {
                    name: format!("antidiagonal identity t={t}"),
                    digits: residual_digits(&r, cap),
                    pass: r.abs_lt_pow10(cfg.policy.rel_tol_exponent()),
                });
            }
            for sc in &src.spot_checks {
                checks.push(Check {
                    name: format!("rank-one vs direct m[{}][{}] t={}", sc.i, sc.j, sc.t),
                    digits: sc.digits,
                    pass: sc.digits >= (p - cfg.policy.guard_digits()) as f64,
                });
            }
            let x = Float::with_val(bits, Constant::Pi) / 7u32;
            let back = Float::parse_repr(&x.to_repr(), &bits)?;
            let d = digits_of_agreement(&x, &back, cap);
            checks.push(Check {
                name: "float repr round trip".into(),
                digits: d,
                pass: d >= cap - 2.0,
            });
        }
        Err(e @ (Error::SelfCheck(_) | Error::ConvergenceFailure { .. })) => {
            println!("jacobi table FAILED: {e}");
            checks.push(Check {
                name: "jacobi table".into(),
                digits: 0.0,
                pass: false,
            });
        }
        Err(e) => return Err(e),
    }
    let samples = ["0", "-3/7", "123456789012345678901234567890/7", "1/1000000007"];
    let round_trip = samples.iter().all(|s| {
        Rational::parse_repr(s, &())
            .and_then(|q| Ok(Rational::parse_repr(&q.to_repr(), &())? == q))
            .unwrap_or(false)
    });
    checks.push(Check {
        name: "rational repr round trip".into(),
        digits: f64::INFINITY,
        pass: round_trip,
    });
    let hilbert: Vec<Vec<Rational>> = (0..4)
        .map(|i| (0..4).map(|j| Rational::from((1, i + j + 1))).collect())
        .collect();
    let det = Rational::determinant(hilbert, &())?;
    checks.push(Check {
        name: "exact 4x4 Hilbert determinant".into(),
        digits: f64::INFINITY,
        pass: det == (1, 6048000),
    });

    let mut text = String::new();
    for c in &checks {
        let digits = if c.digits.is_finite() { format!("{:.1}", c.digits) } else { "exact".into() };
        text.push_str(&format!(
            "{:<36} digits={:<8} {}\n",
            c.name,
            digits,
            if c.pass { "ok" } else { "FAIL" }
        ));
    }
    emit(cfg, &text)?;
    Ok(checks.iter().all(|c| c.pass))
}
