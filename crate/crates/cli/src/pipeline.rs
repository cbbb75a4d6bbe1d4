//! Per-scenario pipeline: solves, checks and the files they leave behind.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use finsler_core::geometry::mesh_region;
use finsler_core::identities::{
    capacity_constant, passes_as_wulff, pohozaev_check, rigidity_from_solves, wulff_floor, RigidityConfig,
    RigidityReport, TraceMode, WulffFloor,
};
use finsler_core::solver::{
    comparison_check, extract_asymptotics, ring_points, solve_truncated, Asymptotics, DirichletData, SolveOptions,
    SolveReport, TruncatedProblem,
};
use finsler_core::wulff::{write_isoperimetry_csv, IsoperimetricEvaluator, IsoperimetryRow, MeasurableSetSpec};
use finsler_core::GeometryError;
use serde::Serialize;

use crate::config::{Built, Check, Expectation, Scenario};
use crate::RunError;

/// Slack constant of the comparison check (violations beyond `c·h`).
const COMPARISON_SLACK: f64 = 1e-6;
/// Upward shift of both Dirichlet constants for the comparison solve.
const COMPARISON_SHIFT: f64 = 0.25;

fn e(v: f64) -> String {
    format!("{v:.12e}")
}

/// One row of `summary.csv`; numbers are pre-formatted so the file is
/// byte-stable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub h: String,
    pub radii: String,
    pub vertices: usize,
    pub newton_iterations: usize,
    pub gamma: String,
    pub beta: String,
    pub asymptotics_flagged: String,
    pub pohozaev_residual: String,
    pub capacity_mean: String,
    pub relative_sigma: String,
    pub c_formula_gap: String,
    pub volume_identity_gap: String,
    pub deficit: String,
    pub verdict: String,
    pub comparison_violations: String,
    pub status: String,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub name: String,
    pub dir: PathBuf,
    pub summary: SummaryRow,
    pub failures: Vec<String>,
    pub warnings: Vec<String>,
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> RunError + '_ {
    move |err| RunError::Io(format!("{}: {err}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<(), RunError> {
    fs::write(path, text).map_err(io(path))
}

fn geometry(name: &str, r: f64, err: GeometryError) -> RunError {
    RunError::Geometry(format!("scenario `{name}`, truncation radius {r}: {err}"))
}

fn solve_failure(name: &str, what: &str, err: impl std::fmt::Display) -> RunError {
    RunError::Check(format!("scenario `{name}`: {what}: {err}"))
}

fn radius_tag(r: f64) -> String {
    format!("R{r}")
}

fn solve_at(s: &Scenario, b: &Built, r: f64, h: f64, data: DirichletData) -> Result<SolveReport, RunError> {
    let region = b.region(r).map_err(|err| geometry(&s.name, r, err))?;
    let mesh = Arc::new(mesh_region(&region, h).map_err(|err| geometry(&s.name, r, err))?);
    let problem = TruncatedProblem::new(&region, mesh, s.exponent)
        .map_err(|err| solve_failure(&s.name, "problem setup", err))?
        .with_data(data);
    solve_truncated(&problem, &SolveOptions::default()).map_err(|err| solve_failure(&s.name, "solve", err))
}

/// Solves at every truncation radius with the scenario's first `h`.
pub fn nested_solves(s: &Scenario, b: &Built) -> Result<Vec<SolveReport>, RunError> {
    let h = s.mesh.h[0];
    b.radii.iter().map(|r| solve_at(s, b, *r, h, s.data_for(*r))).collect()
}

fn csv_text<F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>>(f: F) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    f(&mut w).expect("in-memory csv");
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
}

fn ring_trace(b: &Built, reports: &[SolveReport]) -> Result<String, RunError> {
    let opts = SolveOptions::default();
    let mut rows = Vec::new();
    for rep in reports {
        let gamma = rep.ring_fit.gamma;
        for c in &opts.ring_fractions {
            let level = c * rep.radius;
            let pts = ring_points(&b.dual, &b.cone, level, opts.ring_samples)
                .map_err(|err| RunError::Check(err.to_string()))?;
            for x in pts {
                let u = rep.field.sample(x);
                rows.push([
                    e(rep.radius),
                    e(*c),
                    e(x[1].atan2(x[0])),
                    e(x[0]),
                    e(x[1]),
                    e(u),
                    e(u - gamma * level.ln()),
                ]);
            }
        }
    }
    Ok(csv_text(|w| {
        w.write_record(["radius", "fraction", "theta", "x", "y", "u", "u_minus_gamma_log"])?;
        rows.iter().try_for_each(|r| w.write_record(r))
    }))
}

fn gamma0_trace(rep: &SolveReport) -> String {
    let one = capacity_constant(&rep.field, TraceMode::OneSided);
    let cons = capacity_constant(&rep.field, TraceMode::ConsistentFlux);
    csv_text(|w| {
        w.write_record(["facet", "x", "y", "theta", "length", "one_sided", "consistent_flux"])?;
        one.samples.iter().zip(&cons.samples).try_for_each(|(a, b)| {
            let m = a.midpoint;
            w.write_record([a.facet.to_string(), e(m[0]), e(m[1]), e(m[1].atan2(m[0])), e(a.length), e(a.value), e(b.value)])
        })
    })
}

fn asymptotics_text(a: &Asymptotics) -> String {
    let mut s = format!(
        "gamma = {}\nbeta = {}\nfit_residual = {}\nflagged = {}\n",
        e(a.gamma),
        e(a.beta),
        e(a.fit_residual),
        a.flagged
    );
    for f in &a.per_radius {
        s.push_str(&format!(
            "ring.{}.gamma = {}\nring.{}.beta = {}\nring.{}.residual = {}\n",
            radius_tag(f.radius),
            e(f.gamma),
            radius_tag(f.radius),
            e(f.beta),
            radius_tag(f.radius),
            e(f.residual)
        ));
    }
    s
}

pub fn rigidity_config(s: &Scenario, b: &Built) -> RigidityConfig {
    let mut cfg = RigidityConfig::new(b.gauge.clone(), b.cone.clone(), b.obstacle.clone(), b.radii[0], s.mesh.h[0]);
    cfg.radii = b.radii.clone();
    cfg.trace_mode = b.trace_mode;
    cfg.seed = s.seed;
    cfg
}

fn verdict_text(report: &RigidityReport, floor: &WulffFloor) -> (bool, String) {
    let wulff = passes_as_wulff(&report.headline(), floor);
    let h = report.headline();
    let text = format!(
        "{}headline.relative_sigma = {}\nheadline.identity_gap = {}\nheadline.deficit = {}\nfloor.relative_sigma = {}\nfloor.identity_gap = {}\nfloor.deficit = {}\nverdict = {}\n",
        report.to_key_value(),
        e(h.relative_sigma),
        e(h.identity_gap),
        e(h.deficit),
        e(floor.0.relative_sigma),
        e(floor.0.identity_gap),
        e(floor.0.deficit),
        if wulff { "wulff" } else { "non-wulff" }
    );
    (wulff, text)
}

/// Runs every requested check of one scenario and writes its files under
/// `out/<name>/`.
pub fn run_scenario(s: &Scenario, out: &Path) -> Result<Outcome, RunError> {
    let b = s.build()?;
    let dir = out.join(&s.name);
    fs::create_dir_all(&dir).map_err(io(&dir))?;
    write(&dir.join("scenario.toml"), &s.normal_form())?;
    let reports = nested_solves(s, &b)?;
    for rep in &reports {
        let tag = radius_tag(rep.radius);
        write(&dir.join(format!("mesh_{tag}.txt")), &rep.field.mesh().to_text())?;
        write(&dir.join(format!("field_{tag}.txt")), &rep.field.to_text())?;
        write(&dir.join(format!("solve_{tag}.txt")), &rep.to_key_value())?;
    }
    let last = reports.last().expect("at least one radius");
    let mut failures = Vec::new();
    let mut warnings = Vec::new();
    let mut row = SummaryRow {
        scenario: s.name.clone(),
        h: e(s.mesh.h[0]),
        radii: b.radii.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(" "),
        vertices: last.field.mesh().vertices().len(),
        newton_iterations: reports.iter().map(|r| r.newton_iterations()).sum(),
        gamma: String::new(),
        beta: String::new(),
        asymptotics_flagged: String::new(),
        pohozaev_residual: String::new(),
        capacity_mean: String::new(),
        relative_sigma: String::new(),
        c_formula_gap: String::new(),
        volume_identity_gap: String::new(),
        deficit: String::new(),
        verdict: String::new(),
        comparison_violations: String::new(),
        status: String::new(),
    };
    write(&dir.join("gamma0_trace.csv"), &gamma0_trace(last))?;

    if s.runs(Check::Asymptotics) {
        let refs: Vec<&SolveReport> = reports.iter().collect();
        let a = extract_asymptotics(&refs).map_err(|err| solve_failure(&s.name, "asymptotics", err))?;
        if a.flagged {
            warnings.push(format!("asymptotic regime not reached (fit residual {:.3e})", a.fit_residual));
        }
        write(&dir.join("asymptotics.txt"), &asymptotics_text(&a))?;
        write(&dir.join("ring_trace.csv"), &ring_trace(&b, &reports)?)?;
        row.gamma = e(a.gamma);
        row.beta = e(a.beta);
        row.asymptotics_flagged = a.flagged.to_string();
    }

    if s.runs(Check::Pohozaev) {
        let p = pohozaev_check(&last.field, b.trace_mode);
        write(&dir.join("pohozaev.txt"), &p.to_key_value())?;
        row.pohozaev_residual = e(p.residual);
    }

    if s.runs(Check::Rigidity) {
        let cfg = rigidity_config(s, &b);
        let report = rigidity_from_solves(&cfg, &reports).map_err(|err| solve_failure(&s.name, "rigidity", err))?;
        let floor = wulff_floor(&cfg).map_err(|err| solve_failure(&s.name, "rigidity floor", err))?;
        let (wulff, text) = verdict_text(&report, &floor);
        write(&dir.join("rigidity.txt"), &text)?;
        row.capacity_mean = e(report.c_mean);
        row.relative_sigma = e(report.relative_sigma);
        row.c_formula_gap = e(report.c_formula.gap);
        row.volume_identity_gap = e(report.volume_identity.gap);
        row.deficit = e(report.deficit);
        row.verdict = if wulff { "wulff" } else { "non-wulff" }.to_string();
        match s.rigidity.expect {
            Some(Expectation::Wulff) if !wulff => failures.push("rigidity verdict is non-wulff, expected wulff".into()),
            Some(Expectation::NonWulff) if wulff => failures.push("rigidity verdict is wulff, expected non-wulff".into()),
            _ => {}
        }
    }

    if s.runs(Check::Isoperimetry) {
        let evaluator = IsoperimetricEvaluator::new(b.gauge.clone(), b.cone.clone());
        let set = MeasurableSetSpec::new(b.obstacle.clone()).with_seed(s.seed);
        let report = evaluator.evaluate(&set).map_err(|err| solve_failure(&s.name, "isoperimetry", err))?;
        if report.deficit < -report.tolerance.max(1e-6) {
            failures.push(format!("isoperimetric deficit {:.3e} is negative", report.deficit));
        }
        let mut buf = Vec::new();
        write_isoperimetry_csv(&[IsoperimetryRow::new(s.name.clone(), &report)], &mut buf)
            .map_err(|err| RunError::Io(err.to_string()))?;
        write(&dir.join("isoperimetry.csv"), &String::from_utf8_lossy(&buf))?;
        if row.deficit.is_empty() {
            row.deficit = e(report.deficit);
        }
    }

    if s.runs(Check::Comparison) {
        let first = &reports[0];
        let data = first.data;
        let raised = DirichletData { gamma0: data.gamma0 + COMPARISON_SHIFT, gamma_r: data.gamma_r + COMPARISON_SHIFT };
        let upper = solve_at(s, &b, first.radius, s.mesh.h[0], raised)?;
        let c = comparison_check(&first.field, &upper.field, COMPARISON_SLACK)
            .map_err(|err| solve_failure(&s.name, "comparison", err))?;
        write(
            &dir.join("comparison.txt"),
            &format!(
                "radius = {}\nshift = {}\nchecked = {}\nviolations = {}\nmax_violation = {}\nslack = {}\n",
                e(first.radius),
                e(COMPARISON_SHIFT),
                c.checked,
                c.violations,
                e(c.max_violation),
                e(c.slack)
            ),
        )?;
        if c.violations > 0 {
            failures.push(format!("comparison principle violated at {} nodes", c.violations));
        }
        row.comparison_violations = c.violations.to_string();
    }

    row.status = if failures.is_empty() { "ok" } else { "failed" }.to_string();
    write(&dir.join("summary.csv"), &summary_csv(std::slice::from_ref(&row)))?;
    Ok(Outcome { name: s.name.clone(), dir, summary: row, failures, warnings })
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    csv_text(|w| rows.iter().try_for_each(|r| w.serialize(r)))
}
