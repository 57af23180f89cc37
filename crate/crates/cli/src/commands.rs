//! The six subcommands. Each returns a plain-text summary for stdout.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use lockwalk_core::construction::{build_levels, verify_construction, Check, Construction};
use lockwalk_core::diagnostics::{
    left_walk_tv_curves, nondegeneracy_test, perturbation_experiment, ConvolveOptions, NondegeneracyReport,
    PerturbationResult, TauHistogram, TvCurves,
};
use lockwalk_core::heavy_tail::{LevelLaw, LevelSampler};
use lockwalk_core::sampler::{sample_trajectory, StepTable, Trajectory, TrajectorySeed};
use lockwalk_core::tail::{detect_records, stabilization_index, tau, Confidence, TauOutcome, WSets};
use lockwalk_core::{measure_atoms, GroupElement};

use crate::cache::{CacheFile, CACHE_FILE};
use crate::config::RunConfig;
use crate::dump::write_dump;
use crate::error::{CliError, Result};
use crate::output::{csv_text, stale_outputs, write_file};
use crate::svg;

/// Tolerance on the non-increase of value plus error along a TV curve.
pub const MONOTONE_TOLERANCE: f64 = 0.05;

fn cache_path(cfg: &RunConfig) -> PathBuf {
    cfg.out.join(CACHE_FILE)
}

fn require_icc(cfg: &RunConfig) -> Result<()> {
    let spec = cfg.group_spec()?;
    if spec.has_icc_factor() {
        Ok(())
    } else {
        Err(CliError::Inapplicable(format!(
            "{:?} has no ICC factor: the construction stops at the lock search and there is no tail to measure",
            spec.family()
        )))
    }
}

pub fn load_construction(cfg: &RunConfig) -> Result<Construction> {
    let path = cache_path(cfg);
    if !path.exists() {
        return Err(CliError::Config(format!("no cache at {}; run `build` first", path.display())));
    }
    CacheFile::read(&path)?.construction(cfg)
}

fn failed_checks(checks: &[Check]) -> Vec<&Check> {
    checks.iter().filter(|c| !c.pass).collect()
}

pub fn build(cfg: &RunConfig) -> Result<String> {
    let spec = cfg.group_spec()?;
    let cons = build_levels(&spec, &cfg.schedule()?, cfg.levels, cfg.limits())
        .map_err(|e| CliError::construction(e, &spec))?;
    let checks = verify_construction(&cons);
    if let Some(c) = failed_checks(&checks).first() {
        return Err(CliError::Verification(format!("level {} {}: {}", c.level, c.name, c.detail)));
    }
    let cache = CacheFile::new(&cons, cfg)?;
    write_file(&cache_path(cfg), &cache.to_text())?;
    let mut s = format!("built {} levels\n", cons.built());
    for l in &cons.levels {
        writeln!(
            s,
            "level {}: |A| = {}, |F| = {}, |D| = {}, b = {}, c = {}",
            l.index,
            l.a.len(),
            l.f.len(),
            l.d.len(),
            l.b,
            l.c
        )
        .unwrap();
    }
    Ok(s)
}

/// Maps `f` over trajectory indices `0..n` on `jobs` threads, each with its
/// own level sampler; results come back in index order.
fn par_map<R: Send>(n: u64, jobs: usize, f: impl Fn(&mut LevelSampler, u64) -> R + Sync) -> Vec<R> {
    let jobs = (jobs as u64).clamp(1, n.max(1));
    let chunk = n.div_ceil(jobs);
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs)
            .map(|j| {
                let f = &f;
                scope.spawn(move || {
                    let mut sampler = LevelSampler::new();
                    (j * chunk..((j + 1) * chunk).min(n)).map(|i| f(&mut sampler, i)).collect::<Vec<R>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

fn seed(cfg: &RunConfig, index: u64) -> TrajectorySeed {
    TrajectorySeed { master: cfg.seed, index }
}

pub fn sample(cfg: &RunConfig) -> Result<String> {
    require_icc(cfg)?;
    let cons = load_construction(cfg)?;
    let table = StepTable::new(&cons);
    let digest = cfg.digest();
    let n = cfg.sampling.horizon;
    let rows = par_map(cfg.sampling.trajectories, cfg.jobs, |sampler, i| {
        let t = sample_trajectory(seed(cfg, i), n, &table, sampler);
        let dump = (i < cfg.sampling.dump).then(|| write_dump(&t, &digest));
        let i0 = stabilization_index(&t.steps).map_or_else(|| "none".to_string(), |v| v.to_string());
        let max = t.steps.iter().map(|s| s.k).max().unwrap_or(0);
        let row = vec![
            t.seed.to_string(),
            i0,
            detect_records(&t.steps).len().to_string(),
            max.to_string(),
            t.resolved_prefix().to_string(),
        ];
        (row, dump)
    });
    let mut stabilized = 0;
    let mut table_rows = Vec::with_capacity(rows.len());
    for (i, (row, dump)) in rows.into_iter().enumerate() {
        if let Some(text) = dump {
            write_file(&cfg.out.join("trajectories").join(format!("trajectory_{i}.txt")), &text)?;
        }
        stabilized += usize::from(row[1] != "none");
        table_rows.push(row);
    }
    let csv = csv_text(
        &digest,
        &[("horizon", n.to_string())],
        &["trajectory-seed", "i0", "records", "max_level", "resolved_prefix"],
        &table_rows,
    );
    write_file(&cfg.out.join("sample_summary.csv"), &csv)?;
    Ok(format!(
        "sampled {} trajectories of length {n}; {stabilized} stabilized within the horizon; {} dumped\n",
        table_rows.len(),
        cfg.sampling.dump.min(cfg.sampling.trajectories)
    ))
}

pub struct TvRun {
    pub elements: Vec<GroupElement>,
    pub curves: TvCurves,
    /// `(g index, n)` where value exceeded paper bound plus error bound.
    pub bound_violations: Vec<(usize, u32)>,
    /// Largest increase of value plus error between consecutive powers.
    pub worst_increase: f64,
}

impl TvRun {
    pub fn pass(&self) -> bool {
        self.bound_violations.is_empty() && self.worst_increase <= MONOTONE_TOLERANCE
    }
}

/// Curves for every `g` in `A_{L+1}`; since the sets increase, each `g`
/// lies in `A_n` for all `n > L`.
pub fn compute_tv(cfg: &RunConfig, cons: &Construction) -> Result<TvRun> {
    let law = LevelLaw::new();
    let elements = cons.next_a().to_vec();
    let opts = ConvolveOptions { cap: cfg.limits.set_cap, epsilon: cfg.tv.epsilon };
    let curves = left_walk_tv_curves(cons, &law, cfg.tv.k_max, cfg.tv.max_power, &elements, opts);
    if curves.last_completed() == 0 {
        return Err(CliError::Resource(format!("first convolution power exceeds the cap: {:?}", curves.capped)));
    }
    let mut bound_violations = Vec::new();
    let mut worst_increase = f64::NEG_INFINITY;
    for (gi, curve) in curves.curves.iter().enumerate() {
        for p in curve {
            if p.estimate.value > p.paper_bound + p.estimate.error_bound + 1e-12 {
                bound_violations.push((gi, p.estimate.n));
            }
        }
        for w in curve.windows(2) {
            let a = w[0].estimate.value + w[0].estimate.error_bound;
            let b = w[1].estimate.value + w[1].estimate.error_bound;
            worst_increase = worst_increase.max(b - a);
        }
    }
    Ok(TvRun { elements, curves, bound_violations, worst_increase })
}

fn tv_summary(run: &TvRun) -> String {
    let mut s = format!(
        "tv: {} elements of A_{{L+1}}, k_max = {}, deficit {:.6}, powers 1..={}",
        run.elements.len(),
        run.curves.k_max,
        run.curves.deficit,
        run.curves.last_completed()
    );
    if let Some(c) = &run.curves.capped {
        write!(s, " (stopped: {c})").unwrap();
    }
    writeln!(s).unwrap();
    writeln!(s, "tv: paper-bound violations: {}", run.bound_violations.len()).unwrap();
    writeln!(s, "tv: largest increase of value + error: {:.3e} (tolerance {MONOTONE_TOLERANCE})", run.worst_increase)
        .unwrap();
    s
}

fn fmt_f(x: f64) -> String {
    format!("{x:.12e}")
}

pub fn tv(cfg: &RunConfig) -> Result<String> {
    require_icc(cfg)?;
    let cons = load_construction(cfg)?;
    let run = compute_tv(cfg, &cons)?;
    let digest = cfg.digest();
    let notes = |g: &GroupElement| {
        let mut n = vec![
            ("g", g.to_string()),
            ("k_max", cfg.tv.k_max.to_string()),
            ("distance", "l1 over atoms (maximum 2)".to_string()),
        ];
        if let Some(e) = cfg.tv.epsilon {
            n.push(("epsilon", e.to_string()));
        }
        n
    };
    for (gi, (g, curve)) in run.elements.iter().zip(&run.curves.curves).enumerate() {
        let rows: Vec<Vec<String>> = curve
            .iter()
            .map(|p| {
                vec![
                    p.estimate.n.to_string(),
                    fmt_f(p.estimate.value),
                    fmt_f(p.estimate.error_bound),
                    fmt_f(p.paper_bound),
                ]
            })
            .collect();
        let text = csv_text(&digest, &notes(g), &["n", "tv_value", "error_bound", "paper_bound"], &rows);
        write_file(&cfg.out.join(format!("tv_curve_g{gi}.csv")), &text)?;
    }
    let rows: Vec<Vec<String>> =
        run.elements.iter().enumerate().map(|(i, g)| vec![i.to_string(), g.to_string()]).collect();
    write_file(&cfg.out.join("tv_elements.csv"), &csv_text(&digest, &[], &["index", "element"], &rows))?;
    let summary = tv_summary(&run);
    if !run.pass() {
        return Err(CliError::Verification(summary));
    }
    Ok(summary)
}

pub struct TauRun {
    pub histogram: TauHistogram,
    pub report_rows: Vec<Vec<String>>,
    pub stabilized: u64,
    pub cross_checked: u64,
    pub bookkeeping_only: u64,
    pub plain: std::result::Result<NondegeneracyReport, lockwalk_core::diagnostics::InsufficientSamples>,
    pub perturbation: PerturbationResult,
    pub pooled: std::result::Result<NondegeneracyReport, lockwalk_core::diagnostics::InsufficientSamples>,
}

pub fn compute_tau(cfg: &RunConfig, cons: &Construction) -> Result<TauRun> {
    let table = StepTable::new(cons);
    let wsets = WSets::new(cons);
    let law = LevelLaw::new();
    let level = u128::from(cfg.tau.level);
    let horizon = cfg.sampling.horizon;
    let results = par_map(cfg.sampling.trajectories, cfg.jobs, |sampler, i| {
        let t = sample_trajectory(seed(cfg, i), horizon, &table, sampler);
        let out = tau(&t, &wsets, horizon);
        let keep = matches!(&out, Ok(o) if o.value().and_then(|v| v.at(level)).is_some());
        (out, keep.then_some(t))
    });
    let mut histogram = TauHistogram::new(level);
    let mut report_rows = Vec::new();
    let (mut stabilized, mut cross_checked, mut bookkeeping_only) = (0, 0, 0);
    let mut kept: Vec<Trajectory> = Vec::new();
    let mut kept_index = Vec::new();
    for (i, (out, t)) in results.into_iter().enumerate() {
        let out = out.map_err(|e| CliError::Verification(format!("trajectory {}: {e}", seed(cfg, i as u64))))?;
        histogram.record(&out);
        if let TauOutcome::Value(v) = &out {
            stabilized += 1;
            match v.confidence {
                Confidence::CrossChecked => cross_checked += 1,
                Confidence::BookkeepingOnly => bookkeeping_only += 1,
            }
            for (lvl, e) in &v.entries {
                if let Some(e) = e {
                    report_rows.push(vec![
                        seed(cfg, i as u64).to_string(),
                        lvl.to_string(),
                        e.to_string(),
                        v.confidence.to_string(),
                    ]);
                }
            }
        }
        if let Some(t) = t {
            kept.push(t);
            kept_index.push(i);
        }
    }
    let mut perturbation = perturbation_experiment(&kept, &table, &law, &wsets, horizon, level, cfg.tau.record_time)
        .map_err(|e| CliError::Verification(e.to_string()))?;
    perturbation.reference = kept_index[perturbation.reference];
    for m in &mut perturbation.members {
        *m = kept_index[*m];
    }
    let plain = nondegeneracy_test(&histogram, cfg.tau.min_freq);
    let pooled = nondegeneracy_test(&perturbation.pooled(), cfg.tau.min_freq);
    Ok(TauRun { histogram, report_rows, stabilized, cross_checked, bookkeeping_only, plain, perturbation, pooled })
}

fn nondeg_line(
    name: &str,
    r: &std::result::Result<NondegeneracyReport, lockwalk_core::diagnostics::InsufficientSamples>,
) -> String {
    match r {
        Ok(r) => {
            let top: Vec<String> = r.top2.iter().map(|(g, f)| format!("{g}: {f:.4}")).collect();
            format!("{name}: {} (top values {})\n", if r.pass { "PASS" } else { "FAIL" }, top.join(", "))
        }
        Err(e) => format!("{name}: insufficient samples ({e})\n"),
    }
}

fn tau_summary(cfg: &RunConfig, run: &TauRun) -> String {
    let p = &run.perturbation;
    let mut s = String::new();
    writeln!(s, "tau: {} trajectories, horizon {}", cfg.sampling.trajectories, cfg.sampling.horizon).unwrap();
    writeln!(
        s,
        "tau: {} stabilized ({} cross-checked, {} bookkeeping-only)",
        run.stabilized, run.cross_checked, run.bookkeeping_only
    )
    .unwrap();
    writeln!(
        s,
        "tau: level {} histogram: {} resolved, {} unresolved, {} values",
        run.histogram.level,
        run.histogram.resolved(),
        run.histogram.unresolved,
        run.histogram.counts.len()
    )
    .unwrap();
    s.push_str(&nondeg_line("tau: nondegeneracy (all trajectories)", &run.plain));
    writeln!(
        s,
        "perturbation: i1 = {}, closing record at {}, reference trajectory {}, |S| = {}",
        p.record_time,
        p.closing,
        seed(cfg, p.reference as u64),
        p.members.len()
    )
    .unwrap();
    let x = p.replacement.x.as_ref().map_or_else(|| "unresolved".into(), ToString::to_string);
    writeln!(
        s,
        "perturbation: first step replaced by (k = {}, {}, {x}), measure constant {:.6}",
        p.replacement.k, p.replacement.y, p.constant
    )
    .unwrap();
    writeln!(
        s,
        "perturbation: tau(S) and tau(T(S)) disjoint: {}; coherent with prefix products: {}",
        p.disjoint(),
        p.coherent
    )
    .unwrap();
    s.push_str(&nondeg_line("perturbation: nondegeneracy (pooled)", &run.pooled));
    s
}

fn tau_check(run: &TauRun, summary: &str) -> Result<()> {
    let pooled = run.pooled.clone()?;
    let p = &run.perturbation;
    if !(pooled.pass && p.disjoint() && p.coherent) {
        return Err(CliError::Verification(summary.to_string()));
    }
    Ok(())
}

pub fn tau_cmd(cfg: &RunConfig) -> Result<String> {
    require_icc(cfg)?;
    let cons = load_construction(cfg)?;
    let run = compute_tau(cfg, &cons)?;
    let digest = cfg.digest();
    let level = run.histogram.level.to_string();
    let rows: Vec<Vec<String>> =
        run.histogram.counts.iter().map(|(g, c)| vec![level.clone(), g.to_string(), c.to_string()]).collect();
    let notes = [("unresolved", run.histogram.unresolved.to_string()), ("horizon", cfg.sampling.horizon.to_string())];
    write_file(&cfg.out.join("tau_histogram.csv"), &csv_text(&digest, &notes, &["level", "element", "count"], &rows))?;
    write_file(
        &cfg.out.join("tau_report.csv"),
        &csv_text(&digest, &[], &["trajectory-seed", "level", "element", "confidence"], &run.report_rows),
    )?;
    let p = &run.perturbation;
    let mut prow = Vec::new();
    for (set, h) in [("S", &p.original), ("T(S)", &p.perturbed)] {
        for (g, c) in &h.counts {
            prow.push(vec![set.to_string(), level.clone(), g.to_string(), c.to_string()]);
        }
    }
    write_file(
        &cfg.out.join("perturbation_histogram.csv"),
        &csv_text(&digest, &[], &["set", "level", "element", "count"], &prow),
    )?;
    let summary = tau_summary(cfg, &run);
    write_file(&cfg.out.join("tau_summary.txt"), &format!("# config-digest: {digest}\n{summary}"))?;
    tau_check(&run, &summary)?;
    Ok(summary)
}

pub struct VerifyRun {
    pub checks: Vec<Check>,
    /// `(k_max, error, error of the opposite measure)`.
    pub normalization: Vec<(u32, f64, f64)>,
}

impl VerifyRun {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass) && self.normalization.iter().all(|&(_, a, b)| a < 1e-12 && b < 1e-12)
    }
}

pub fn compute_verify(cons: &Construction) -> VerifyRun {
    let law = LevelLaw::new();
    let normalization = (0..=cons.built())
        .map(|k| {
            let m = measure_atoms(cons, &law, k);
            (k, m.normalization_error(), m.inverse().normalization_error())
        })
        .collect();
    VerifyRun { checks: verify_construction(cons), normalization }
}

fn verify_text(run: &VerifyRun) -> String {
    let mut s = String::new();
    for c in &run.checks {
        writeln!(s, "level {} {}: {} {}", c.level, c.name, if c.pass { "PASS" } else { "FAIL" }, c.detail).unwrap();
    }
    for (k, a, b) in &run.normalization {
        writeln!(s, "measure k_max = {k}: |mass + deficit - 1| = {a:.3e}, opposite {b:.3e}").unwrap();
    }
    writeln!(s, "verify: {}", if run.pass() { "PASS" } else { "FAIL" }).unwrap();
    s
}

pub fn verify(cfg: &RunConfig) -> Result<String> {
    let cons = load_construction(cfg)?;
    let run = compute_verify(&cons);
    let text = verify_text(&run);
    write_file(&cfg.out.join("verify.txt"), &format!("# config-digest: {}\n{text}", cfg.digest()))?;
    if !run.pass() {
        return Err(CliError::Verification(text));
    }
    Ok(text)
}

fn reject_stale(out: &Path, digest: &str) -> Result<()> {
    let stale = stale_outputs(out, digest)?;
    if stale.is_empty() {
        return Ok(());
    }
    let names: Vec<String> = stale.iter().take(3).map(|p| p.display().to_string()).collect();
    let more = if stale.len() > 3 { format!(" and {} more", stale.len() - 3) } else { String::new() };
    Err(CliError::Config(format!(
        "outputs written under another configuration: {}{more}; clear the output directory or rerun with the original settings",
        names.join(", ")
    )))
}

pub fn report(cfg: &RunConfig) -> Result<String> {
    require_icc(cfg)?;
    let digest = cfg.digest();
    reject_stale(&cfg.out, &digest)?;
    let cons = load_construction(cfg)?;
    let verify = compute_verify(&cons);
    let tv = compute_tv(cfg, &cons)?;
    let tau = compute_tau(cfg, &cons)?;

    let mut s = String::new();
    writeln!(s, "# lockwalk report\n").unwrap();
    writeln!(s, "config digest: `{digest}`\n").unwrap();
    writeln!(
        s,
        "group: {:?}, preset: {:?}, levels: {}, seed: {}\n",
        cfg.group_spec()?.family(),
        cfg.preset,
        cfg.levels,
        cfg.seed
    )
    .unwrap();
    writeln!(s, "## Construction\n").unwrap();
    writeln!(s, "| level | A | F | D | b | c |\n|---|---|---|---|---|---|").unwrap();
    for l in &cons.levels {
        writeln!(s, "| {} | {} | {} | {} | `{}` | `{}` |", l.index, l.a.len(), l.f.len(), l.d.len(), l.b, l.c).unwrap();
    }
    writeln!(s, "\n```\n{}```\n", verify_text(&verify)).unwrap();
    writeln!(s, "## Left walk total variation\n\n```\n{}```\n", tv_summary(&tv)).unwrap();
    writeln!(s, "| g | n | value | error bound | 4/n + 4 eta |\n|---|---|---|---|---|").unwrap();
    for (g, curve) in tv.elements.iter().zip(&tv.curves.curves) {
        for p in curve {
            writeln!(
                s,
                "| `{g}` | {} | {:.6} | {:.6} | {:.6} |",
                p.estimate.n, p.estimate.value, p.estimate.error_bound, p.paper_bound
            )
            .unwrap();
        }
    }
    writeln!(s, "\n## Tail functional\n\n```\n{}```\n", tau_summary(cfg, &tau)).unwrap();
    writeln!(s, "| element | count |\n|---|---|").unwrap();
    for (g, c) in &tau.histogram.counts {
        writeln!(s, "| `{g}` | {c} |").unwrap();
    }
    writeln!(s, "\nCharts: `tv.svg`, `tau.svg`.").unwrap();

    let series: Vec<(String, Vec<(f64, f64)>)> = tv
        .elements
        .iter()
        .zip(&tv.curves.curves)
        .filter(|(g, _)| !g.is_identity())
        .take(6)
        .map(|(g, c)| (g.to_string(), c.iter().map(|p| (f64::from(p.estimate.n), p.estimate.value)).collect()))
        .collect();
    write_file(&cfg.out.join("tv.svg"), &svg::line_chart("left walk: ||g * mu^n - mu^n|| over atoms", &series))?;
    let bars: Vec<(String, f64)> = tau.histogram.counts.iter().map(|(g, c)| (g.to_string(), *c as f64)).collect();
    write_file(&cfg.out.join("tau.svg"), &svg::bar_chart(&format!("tau at level {}", tau.histogram.level), &bars))?;
    write_file(&cfg.out.join("report.md"), &s)?;

    if !verify.pass() {
        return Err(CliError::Verification(verify_text(&verify)));
    }
    if !tv.pass() {
        return Err(CliError::Verification(tv_summary(&tv)));
    }
    tau_check(&tau, &tau_summary(cfg, &tau))?;
    Ok(format!("report written to {}\n", cfg.out.join("report.md").display()))
}
