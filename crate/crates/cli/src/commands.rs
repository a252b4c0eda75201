use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use kglab::analysis::{
    audit_energy_estimate, audit_hormander, audit_iteration, fit_decay, verdict_block, IterationAudit,
};
use kglab::data::Jet;
use kglab::fields::write_snapshot;
use kglab::gamma::{verify_box_invariance, verify_commutator_order_reduction, verify_jacobi, verify_lie_closure};
use kglab::hyperboloid::{
    decay_certificate_interior, duhamel_discrepancy, residual_sample_points, transformed_residual, write_ray_csv,
    RayDirection, RaySampler, APEX_SHIFT, MAX_RAY_STEP,
};
use kglab::solver::{
    iterate_nonlinear, manufactured_source, solve_linear_with, solve_perturbed, ClosedForm, IterationReport,
    NonlinearSpec, PerturbationSpec, RunConfig, RunSeries, SourceSpec,
};
use kglab::{Field, FieldWindow, Grid3};

use crate::config::{ExperimentConfig, NonlinearityKind, PerturbationKind, SourceKind};

pub enum Failure {
    Config(String),
    Runtime(String),
    Violation(String),
}

impl From<kglab::Error> for Failure {
    fn from(e: kglab::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(format!("write failed: {e}"))
    }
}

type Outcome = Result<String, Failure>;

pub struct Context {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
}

impl Context {
    fn create(&self, name: &str) -> Result<BufWriter<File>, Failure> {
        Ok(BufWriter::new(File::create(self.out.join(name))?))
    }

    fn write_text(&self, name: &str, text: &str) -> Result<(), Failure> {
        fs::write(self.out.join(name), text)?;
        Ok(())
    }

    fn grid(&self) -> Result<Grid3, Failure> {
        self.cfg.grid().map_err(Failure::Config)
    }

    fn run_config(&self) -> RunConfig {
        let mut rc = RunConfig::new(self.cfg.t_final);
        rc.stride = self.cfg.stride;
        rc.norm_order = self.cfg.norm_order;
        rc.support_tol = self.cfg.support_tol;
        rc.boundary_tol = self.cfg.boundary_tol;
        if self.cfg.snapshot_stride > 0 {
            rc.snapshot_stride = Some(self.cfg.snapshot_stride);
        }
        rc
    }

    fn exact(&self) -> ClosedForm {
        let eps = self.cfg.eps;
        ClosedForm::separable("eps cos t data", move |t: Jet| eps * t.cos(), self.cfg.data)
    }

    /// Cauchy data and source for the configured linear problem.
    fn linear_problem(&self, grid: Grid3) -> Result<(Field, Field, SourceSpec), Failure> {
        match self.cfg.source {
            SourceKind::Zero => {
                let u0 = self.cfg.data.field(grid)?.scaled(self.cfg.eps)?;
                Ok((u0, Field::zeros(grid), SourceSpec::zero()))
            }
            SourceKind::Manufactured => {
                let exact = self.exact();
                Ok((exact.field(grid, 0.0)?, exact.velocity_field(grid, 0.0)?, manufactured_source(&exact)))
            }
        }
    }

    fn perturbation(&self) -> Result<PerturbationSpec, Failure> {
        match self.cfg.perturbation {
            PerturbationKind::None => Err(Failure::Config("this subcommand needs perturbation = bump".into())),
            PerturbationKind::Bump => {
                let (amp, radius) = (self.cfg.perturbation_amp, self.cfg.perturbation_radius);
                Ok(PerturbationSpec::new(format!("gamma11 = {amp} bump"))
                    .with_gamma(1, 1, move |t, x| amp * bump((t - 2.0) / 2.0) * bump(norm(x) / radius))
                    .hormander_admissible())
            }
        }
    }

    fn nonlinearity(&self) -> Result<NonlinearSpec, Failure> {
        match self.cfg.nonlinearity {
            NonlinearityKind::None => Err(Failure::Config("this subcommand needs nonlinearity = quadratic".into())),
            NonlinearityKind::Quadratic => {
                let mut spec = NonlinearSpec::quadratic(self.cfg.depth);
                spec.sample_seed = self.cfg.seed;
                Ok(spec)
            }
        }
    }
}

fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

fn norm(x: [f64; 3]) -> f64 {
    (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

fn sci(v: f64) -> String {
    format!("{v:.6e}")
}

/// Writes every recorded snapshot center as `snapshot_<step>.bin`.
fn write_snapshots(ctx: &Context, series: &RunSeries) -> Result<(), Failure> {
    for w in &series.snapshots {
        let step = (w.center_time() / w.dt()).round() as usize;
        write_snapshot(ctx.create(&format!("snapshot_{step:06}.bin"))?, w.center(), w.center_time())?;
    }
    Ok(())
}

fn write_series(ctx: &Context, name: &str, series: &RunSeries) -> Result<(), Failure> {
    let mut w = ctx.create(name)?;
    series.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn series_entries(series: &RunSeries) -> Vec<(&'static str, String)> {
    let last = series.samples.last();
    vec![
        ("label", series.label.clone()),
        ("samples", series.samples.len().to_string()),
        ("t_final", last.map_or("0".into(), |s| format!("{:.6}", s.t))),
        ("energy_drift", sci(series.energy_drift())),
        ("support_excess_cells", format!("{:.3}", series.support_excess())),
        ("final_sup", sci(last.map_or(0.0, |s| s.u_sup))),
    ]
}

pub fn verify_algebra(ctx: &Context) -> Outcome {
    let table = verify_lie_closure()?;
    let mut w = ctx.create("structure_constants.csv")?;
    table.write_csv(&mut w)?;
    w.flush()?;
    let boxes = verify_box_invariance()?;
    let jacobi = verify_jacobi()?;
    let words = 50;
    let reduction = verify_commutator_order_reduction(3, words, ctx.cfg.seed)?;
    Ok(verdict_block(
        "verify-algebra",
        &[
            ("closure_pairs", table.entries.len().to_string()),
            ("unit_structure_constants", table.constants_are_unit().to_string()),
            ("box_invariant_generators", boxes.generators.len().to_string()),
            ("jacobi_triples", jacobi.triples.to_string()),
            ("order_reduction_words", words.to_string()),
            ("order_reduction_certificates", reduction.cases.len().to_string()),
            ("seed", ctx.cfg.seed.to_string()),
        ],
    ))
}

pub fn solve_linear(ctx: &Context) -> Outcome {
    let grid = ctx.grid()?;
    let (u0, u1, g) = ctx.linear_problem(grid)?;
    let series = solve_linear_with(&u0, &u1, &g, &ctx.run_config(), &mut [])?;
    write_series(ctx, "series.csv", &series)?;
    write_snapshots(ctx, &series)?;
    Ok(verdict_block("solve-linear", &series_entries(&series)))
}

pub fn solve_perturbed_cmd(ctx: &Context) -> Outcome {
    let grid = ctx.grid()?;
    let spec = ctx.perturbation()?;
    let u0 = ctx.cfg.data.field(grid)?.scaled(ctx.cfg.eps)?;
    let series = solve_perturbed(&u0, &Field::zeros(grid), &spec, &ctx.run_config())?;
    write_series(ctx, "series.csv", &series)?;
    write_snapshots(ctx, &series)?;
    Ok(verdict_block("solve-perturbed", &series_entries(&series)))
}

fn run_iteration(ctx: &Context) -> Result<(IterationReport, IterationAudit), Failure> {
    let grid = ctx.grid()?;
    let spec = ctx.nonlinearity()?;
    let u0 = ctx.cfg.data.field(grid)?.scaled(ctx.cfg.eps)?;
    let eps = ctx.cfg.eps.abs();
    if eps == 0.0 {
        return Err(Failure::Config("iteration audit needs eps ≠ 0".into()));
    }
    let report = iterate_nonlinear(&u0, &Field::zeros(grid), &spec, &ctx.run_config())?;
    let audit = audit_iteration(&report, eps, 2.0)?;
    Ok((report, audit))
}

fn write_iteration_csv(ctx: &Context, audit: &IterationAudit) -> Result<(), Failure> {
    let mut w = ctx.create("iteration.csv")?;
    writeln!(w, "iterate,sobolev,weighted_sup,support_excess,difference,ratio,energy_constant,decay_constant,a,b,c")?;
    let opt = |v: Option<f64>| v.map_or(String::new(), sci);
    for r in &audit.rows {
        writeln!(
            w,
            "{},{},{},{:.3},{},{},{},{},{},{},{}",
            r.index,
            sci(r.sobolev),
            sci(r.weighted_sup),
            r.support_excess,
            opt(r.difference),
            opt(r.ratio),
            opt(r.energy_constant),
            opt(r.decay_constant),
            r.finite_speed,
            r.decay_bound,
            r.energy_bound
        )?;
    }
    w.flush()?;
    Ok(())
}

fn iteration_entries(report: &IterationReport, audit: &IterationAudit) -> Vec<(&'static str, String)> {
    vec![
        ("iterates", report.iterates.len().to_string()),
        ("difference_norm", format!("Gamma-Sobolev order {}", kglab::solver::DIFFERENCE_ORDER)),
        ("max_ratio", sci(audit.max_ratio())),
        ("coefficient_bound", format!("{:.4}", report.coefficient_bound)),
        ("K_measured", format!("{:.4}", audit.k)),
        ("delta", sci(audit.delta)),
        ("conditions_hold", audit.conditions_hold().to_string()),
        ("small", report.small().to_string()),
    ]
}

pub fn iterate(ctx: &Context) -> Outcome {
    let (report, audit) = run_iteration(ctx)?;
    for (k, s) in report.iterates.iter().enumerate() {
        write_series(ctx, &format!("iterate_{k}.csv"), s)?;
    }
    write_iteration_csv(ctx, &audit)?;
    Ok(verdict_block("iterate", &iteration_entries(&report, &audit)))
}

pub fn measure_decay(ctx: &Context) -> Outcome {
    let grid = ctx.grid()?;
    let cfg = &ctx.cfg;
    if cfg.t_final < 2.0 * cfg.fit_start {
        return Err(Failure::Config(format!("T = {} must be at least 2·fit_start = {}", cfg.t_final, 2.0 * cfg.fit_start)));
    }
    let per_sample = cfg.stride as f64 * grid.dt();
    if ((cfg.t_final - cfg.fit_start) / per_sample).floor() + 1.0 < 10.0 {
        return Err(Failure::Config(format!(
            "stride = {} leaves fewer than 10 samples in [{}, {}]",
            cfg.stride, cfg.fit_start, cfg.t_final
        )));
    }
    let reach = (cfg.t_final + APEX_SHIFT) * cfg.ray_thetas.iter().fold(0.0f64, |m, t| m.max(t.tanh()));
    if reach > grid.half_width() - 4.0 * grid.h() {
        return Err(Failure::Config(format!("rays reach |x| = {reach:.3}, beyond the grid interior")));
    }
    let (u0, u1, g) = ctx.linear_problem(grid)?;
    let mut rc = ctx.run_config();
    let steps = (cfg.t_final / grid.dt()).ceil() as usize;
    rc.snapshot_stride = Some((steps / 4).max(1));
    rc.snapshot_radius = 2;
    let d_rho = (0.2 * grid.h()).min(MAX_RAY_STEP);
    let dirs: Vec<RayDirection> = cfg.ray_thetas.iter().map(|&theta| RayDirection { theta, phi: 0.7, psi: 0.3 }).collect();
    let mut sampler = RaySampler::new(&dirs, d_rho, cfg.t_final, g.clone())?;
    let series = solve_linear_with(&u0, &u1, &g, &rc, &mut [&mut sampler])?;
    write_series(ctx, "series.csv", &series)?;

    let fit = fit_decay(&series, cfg.fit_start)?;
    let cert = decay_certificate_interior(&series, &g, 1.25)?;
    let times: Vec<f64> = series.snapshots.iter().map(FieldWindow::center_time).filter(|&t| t >= APEX_SHIFT).collect();
    let radius = grid.half_width() - 4.0 * grid.h();
    let points = residual_sample_points(&grid, &times, cfg.residual_points, radius, cfg.seed);
    let residual = transformed_residual(&series, &points, &g)?;
    let mut worst_duhamel: f64 = 0.0;
    for (i, ray) in sampler.into_rays().iter().enumerate() {
        let mut w = ctx.create(&format!("ray_{i}.csv"))?;
        write_ray_csv(&mut w, ray)?;
        w.flush()?;
        let (diff, vmax) = duhamel_discrepancy(ray);
        if vmax > 0.0 {
            worst_duhamel = worst_duhamel.max(diff / vmax);
        }
    }
    Ok(verdict_block(
        "measure-decay",
        &[
            ("exponent", format!("{:.4}", fit.exponent)),
            ("exponent_stderr", format!("{:.4}", fit.stderr)),
            ("fit_window", format!("[{}, {:.3}]", fit.t_min, fit.t_max)),
            ("weighted_sup_5_4", sci(fit.weighted_sup)),
            ("t_argmax", format!("{:.3}", fit.t_argmax)),
            ("tail_rise", format!("{:.4}", fit.tail_rise)),
            ("hit_zero", fit.hit_zero.to_string()),
            ("certificate_weighted_sup", sci(cert.weighted_sup)),
            ("certificate_bracket", sci(cert.bracket)),
            ("certificate_constant_measured", sci(cert.constant)),
            ("certificate_order", cert.order.to_string()),
            ("residual_points", residual.points.to_string()),
            ("residual_max", sci(residual.max)),
            ("residual_rms", sci(residual.rms)),
            ("duhamel_relative_discrepancy", sci(worst_duhamel)),
            ("seed", cfg.seed.to_string()),
        ],
    ))
}

pub fn audit(ctx: &Context) -> Outcome {
    let grid = ctx.grid()?;
    let cfg = &ctx.cfg;
    let mut entries: Vec<(&str, String)> = Vec::new();
    let mut violations = Vec::new();

    let (u0, u1, g) = ctx.linear_problem(grid)?;
    let mut rc = ctx.run_config();
    rc.word_ledger = true;
    let series = solve_linear_with(&u0, &u1, &g, &rc, &mut [])?;
    for order in 0..=cfg.norm_order {
        let ledger = audit_energy_estimate(&series, &g, order)?;
        let mut w = ctx.create(&format!("energy_ledger_N{order}.csv"))?;
        ledger.write_csv(&mut w)?;
        w.flush()?;
        entries.push(("energy_order", order.to_string()));
        entries.push(("energy_worst_summed_slack", sci(ledger.worst_summed_slack)));
        entries.push(("energy_worst_word_slack", sci(ledger.worst_word_slack)));
        if !ledger.passes() {
            violations.push(format!("energy estimate at N = {order}"));
        }
    }

    if cfg.perturbation != PerturbationKind::None {
        let spec = ctx.perturbation()?;
        let u0 = cfg.data.field(grid)?.scaled(cfg.eps)?;
        let run = solve_perturbed(&u0, &Field::zeros(grid), &spec, &ctx.run_config())?;
        let ledger = audit_hormander(&run, &spec)?;
        let mut w = ctx.create("hormander.csv")?;
        ledger.write_csv(&mut w)?;
        w.flush()?;
        entries.push(("hormander_sandwich_ratio", format!("{:.6}", ledger.sandwich_ratio)));
        entries.push(("hormander_constant_measured", format!("{:.6}", ledger.constant)));
        if !ledger.passes() {
            violations.push("Hörmander estimate".to_string());
        }
    }

    if cfg.nonlinearity != NonlinearityKind::None {
        let (report, audit) = run_iteration(ctx)?;
        write_iteration_csv(ctx, &audit)?;
        entries.extend(iteration_entries(&report, &audit));
        if audit.max_ratio() > 0.5 {
            violations.push("iteration contraction".to_string());
        }
        if !audit.conditions_hold() {
            violations.push("iterate conditions (a)-(c)".to_string());
        }
    }

    entries.push(("violations", if violations.is_empty() { "none".into() } else { violations.join("; ") }));
    let text = verdict_block("audit", &entries);
    if violations.is_empty() {
        Ok(text)
    } else {
        ctx.write_text("audit.txt", &text)?;
        Err(Failure::Violation(text))
    }
}

fn csv_rows(path: &Path) -> std::io::Result<usize> {
    Ok(fs::read_to_string(path)?.lines().count().saturating_sub(1))
}

pub fn report(ctx: &Context) -> Outcome {
    let dir = ctx.cfg.run_dir.clone().unwrap_or_else(|| ctx.out.clone());
    let mut names: Vec<String> = fs::read_dir(&dir)
        .map_err(|e| Failure::Config(format!("run_dir {}: {e}", dir.display())))?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .collect();
    names.sort();
    let mut out = String::new();
    let mut tables = Vec::new();
    for name in &names {
        let path = dir.join(name);
        if name.ends_with(".txt") && !name.ends_with("config.txt") && name != "report.txt" {
            out.push_str(&fs::read_to_string(&path)?);
            out.push('\n');
        } else if name.ends_with(".csv") {
            tables.push((name.as_str(), format!("{} rows", csv_rows(&path)?)));
        }
    }
    let snapshots = names.iter().filter(|n| n.ends_with(".bin")).count();
    let mut entries: Vec<(&str, String)> = vec![("run_dir", dir.display().to_string())];
    entries.extend(tables);
    entries.push(("snapshots", snapshots.to_string()));
    out.push_str(&verdict_block("report", &entries));
    Ok(out)
}
