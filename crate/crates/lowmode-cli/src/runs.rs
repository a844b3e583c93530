//! The experiment drivers.  Each takes a validated [`RunConfig`], runs the
//! study, and returns the result tables plus any figures derived from them.
//!
//! Timing policy: wall-clock columns hold the median over
//! `config.repetitions` repeats; everything that is not a timing is
//! deterministic for a fixed configuration.

use std::collections::BTreeMap;
use std::time::Instant;

use chrono::SecondsFormat;

use lowmode::assembly::{
    assemble_operator, assemble_rhs, manufactured_problem, KappaAveraging, Problem,
    SparseOperator,
};
use lowmode::grid::{discrete_l2_norm, sample_field, Grid2D, GridFunction};
use lowmode::reduced::{condition_number, lift, project_system, reduce_and_solve, solve_reduced};
use lowmode::schur::{fit_loglog_slope, schur_decay_report};
use lowmode::solvers::{
    build_mg_hierarchy, solve_cg, solve_deflated_cg, solve_direct, solve_mg_pcg, Smoother,
};
use lowmode::spectral::{build_via_mass_projection, Normalization, SpectralBasis};
use lowmode::Error;

use crate::config::{ExperimentKind, RunConfig};
use crate::plot::{figure_convergence, figure_reduction_error, figure_total_error, LogLogPlot};
use crate::table::{Cell, Column, ResultTable};
use crate::CliError;

/// Iteration budgets for the baseline solvers.
const CG_MAX_ITER: usize = 20_000;
const MG_MAX_ITER: usize = 200;

/// Cross-solver agreement threshold; exceeding it aborts the comparison run.
const AGREEMENT_TOL: f64 = 1e-6;

/// Largest grid used for the full-basis exactness row of the mode sweep
/// (keeps `K = m^2` inside the dense reduced-path cap).
const FULL_BASIS_GRID: usize = 31;

/// Everything a finished run wants written to disk.
pub struct RunArtifacts {
    pub tables: Vec<ResultTable>,
    /// `(file stem, figure)` pairs.
    pub figures: Vec<(String, LogLogPlot)>,
}

/// Dispatches to the driver for the configured experiment.
pub fn execute(config: &RunConfig) -> Result<RunArtifacts, CliError> {
    config.validate()?;
    match config.experiment {
        ExperimentKind::Convergence => run_convergence(config),
        ExperimentKind::ModeSweep => run_mode_sweep(config),
        ExperimentKind::Conditioning => run_conditioning(config),
        ExperimentKind::CompareSolvers => run_solver_comparison(config),
        ExperimentKind::SchurDecay => run_schur_decay(config),
    }
}

/// Output file stem for the experiment's table.
fn table_name(config: &RunConfig) -> String {
    match config.experiment {
        ExperimentKind::Convergence => match config.problem.as_str() {
            "example1" => "table1".to_string(),
            "example2" => "table2".to_string(),
            other => format!("convergence-{other}"),
        },
        ExperimentKind::ModeSweep => "mode-sweep".to_string(),
        ExperimentKind::Conditioning => "table4".to_string(),
        ExperimentKind::CompareSolvers => "table3".to_string(),
        ExperimentKind::SchurDecay => "schur-decay".to_string(),
    }
}

fn base_metadata(config: &RunConfig) -> BTreeMap<String, String> {
    let mut meta = BTreeMap::new();
    meta.insert("experiment".to_string(), config.experiment.id().to_string());
    meta.insert("problem".to_string(), config.problem.clone());
    meta.insert("config-hash".to_string(), config.config_hash());
    meta.insert(
        "code-version".to_string(),
        env!("CARGO_PKG_VERSION").to_string(),
    );
    meta.insert(
        "timestamp".to_string(),
        chrono::Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true),
    );
    meta.insert("seed".to_string(), config.seed.to_string());
    meta
}

fn median(mut samples: Vec<f64>) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).expect("timing values are finite"));
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        0.5 * (samples[n / 2 - 1] + samples[n / 2])
    }
}

/// Discrete L2 distance between two grid functions on the same grid.
fn l2_distance(u: &GridFunction, v: &GridFunction) -> f64 {
    let diff: Vec<f64> = u
        .values()
        .iter()
        .zip(v.values())
        .map(|(a, b)| a - b)
        .collect();
    discrete_l2_norm(u.grid(), &diff)
}

/// The assembled pieces every experiment starts from.
struct Assembled {
    grid: Grid2D,
    a: SparseOperator,
    f: GridFunction,
    exact: GridFunction,
}

fn assemble(problem: &Problem, m: usize) -> Result<Assembled, CliError> {
    let grid = Grid2D::new(m)?;
    let a = assemble_operator(grid, problem.kappa(), KappaAveraging::Midpoint)?;
    let f = assemble_rhs(grid, problem.forcing())?;
    let exact = sample_field(grid, problem.exact_solution())?;
    Ok(Assembled { grid, a, f, exact })
}

/// Observed order between a row and its predecessor; `h = 1/(m+1)`.
fn order_cell(prev: Option<(usize, f64)>, m: usize, err: f64) -> Cell {
    match prev {
        None => Cell::Text("-".to_string()),
        Some((prev_m, prev_err)) => {
            let h_ratio = (m as f64 + 1.0) / (prev_m as f64 + 1.0);
            Cell::Float((prev_err / err).ln() / h_ratio.ln())
        }
    }
}

fn sorted_cutoffs(config: &RunConfig) -> Vec<usize> {
    let mut cutoffs = config.cutoffs.clone();
    cutoffs.sort_unstable();
    cutoffs.dedup();
    cutoffs
}

fn run_convergence(config: &RunConfig) -> Result<RunArtifacts, CliError> {
    let problem = manufactured_problem(&config.problem)?;
    let columns = vec![
        Column::data("m"),
        Column::data("err_fd"),
        Column::data("err_rd"),
        Column::data("order_fd"),
        Column::data("order_rd"),
        Column::timing("t_direct"),
        Column::timing("t_reduced"),
        Column::timing("speedup"),
    ];
    let mut meta = base_metadata(config);
    meta.insert("cutoff".to_string(), config.fixed_cutoff.to_string());
    meta.insert(
        "speedup-definition".to_string(),
        "median direct solve time (factorization included, assembly excluded) \
         over median reduced pipeline time (basis + project + solve + lift)"
            .to_string(),
    );
    meta.insert(
        "repetitions".to_string(),
        config.repetitions.to_string(),
    );
    let mut table = ResultTable::new(&table_name(config), columns, meta);

    let mut ms = Vec::new();
    let mut errs_fd = Vec::new();
    let mut errs_rd = Vec::new();
    let mut times_direct = Vec::new();
    let mut times_reduced = Vec::new();
    let mut prev_fd: Option<(usize, f64)> = None;
    let mut prev_rd: Option<(usize, f64)> = None;

    for &m in &config.grids {
        let asm = assemble(&problem, m)?;

        let mut samples = Vec::with_capacity(config.repetitions);
        let mut u_fd = None;
        for _ in 0..config.repetitions {
            let report = solve_direct(&asm.a, &asm.f)?;
            samples.push(report.wall_time);
            u_fd = Some(report.solution);
        }
        let t_direct = median(samples);
        let u_fd = u_fd.expect("repetitions >= 1");

        let mut samples = Vec::with_capacity(config.repetitions);
        let mut u_rd = None;
        for _ in 0..config.repetitions {
            let sol = reduce_and_solve(
                &asm.a,
                &asm.f,
                asm.grid,
                config.fixed_cutoff,
                Normalization::MassOrthonormal,
            )?;
            samples.push(sol.times.total());
            u_rd = Some(sol.u);
        }
        let t_reduced = median(samples);
        let u_rd = u_rd.expect("repetitions >= 1");

        let err_fd = l2_distance(&u_fd, &asm.exact);
        let err_rd = l2_distance(&u_rd, &asm.exact);
        table.push_row(vec![
            Cell::Int(m as i64),
            Cell::Float(err_fd),
            Cell::Float(err_rd),
            order_cell(prev_fd, m, err_fd),
            order_cell(prev_rd, m, err_rd),
            Cell::Float(t_direct),
            Cell::Float(t_reduced),
            Cell::Float(t_direct / t_reduced),
        ]);
        prev_fd = Some((m, err_fd));
        prev_rd = Some((m, err_rd));
        ms.push(m);
        errs_fd.push(err_fd);
        errs_rd.push(err_rd);
        times_direct.push(t_direct);
        times_reduced.push(t_reduced);
    }

    if ms.len() >= 2 {
        let ns: Vec<f64> = ms.iter().map(|&m| (m * m) as f64).collect();
        table.metadata.insert(
            "time-exponent-direct".to_string(),
            format!("{:.4}", fit_loglog_slope(&ns, &times_direct)),
        );
        table.metadata.insert(
            "time-exponent-reduced".to_string(),
            format!("{:.4}", fit_loglog_slope(&ns, &times_reduced)),
        );
    }

    let figure = figure_convergence(&ms, &errs_fd, &errs_rd);
    Ok(RunArtifacts {
        tables: vec![table],
        figures: vec![("figure1".to_string(), figure)],
    })
}

fn run_mode_sweep(config: &RunConfig) -> Result<RunArtifacts, CliError> {
    let problem = manufactured_problem(&config.problem)?;
    let m = config.grids[0];
    let asm = assemble(&problem, m)?;
    let u_fd = solve_direct(&asm.a, &asm.f)?.solution;
    let err_fd = l2_distance(&u_fd, &asm.exact);

    let columns = vec![
        Column::data("m"),
        Column::data("M"),
        Column::data("K"),
        Column::data("err_total"),
        Column::data("err_red"),
        Column::data("reference"),
    ];
    let mut meta = base_metadata(config);
    meta.insert("fd-error".to_string(), format!("{err_fd:.6e}"));
    meta.insert(
        "reference-definition".to_string(),
        "C sqrt(log M)/M with C = err_total/(sqrt(log M)/M) at the smallest cutoff >= 2"
            .to_string(),
    );
    let mut table = ResultTable::new(&table_name(config), columns, meta);

    let mut sweep_cutoffs = Vec::new();
    let mut sweep_ks = Vec::new();
    let mut sweep_total = Vec::new();
    let mut sweep_red = Vec::new();
    let mut sweep_ref = Vec::new();
    let mut anchor: Option<f64> = None;

    for &cutoff in &sorted_cutoffs(config) {
        let sol = reduce_and_solve(
            &asm.a,
            &asm.f,
            asm.grid,
            cutoff,
            Normalization::MassOrthonormal,
        )?;
        let err_total = l2_distance(&sol.u, &asm.exact);
        let err_red = l2_distance(&sol.u, &u_fd);
        // The reference needs log M > 0, so it starts at M = 2.  Its
        // constant is pinned so the curve passes through the total error
        // at the smallest admissible cutoff.
        let reference = if cutoff >= 2 {
            let shape = (cutoff as f64).ln().sqrt() / cutoff as f64;
            let c = *anchor.get_or_insert(err_total / shape);
            Some(c * shape)
        } else {
            None
        };
        table.push_row(vec![
            Cell::Int(m as i64),
            Cell::Int(cutoff as i64),
            Cell::Int((cutoff * cutoff) as i64),
            Cell::Float(err_total),
            Cell::Float(err_red),
            reference.map_or(Cell::Text("-".to_string()), Cell::Float),
        ]);
        sweep_cutoffs.push(cutoff);
        sweep_ks.push(cutoff * cutoff);
        sweep_total.push(err_total);
        sweep_red.push(err_red);
        if let Some(r) = reference {
            sweep_ref.push(((cutoff * cutoff) as f64, r));
        }
    }

    // Full-basis exactness row: M = m reproduces the fine-grid solution.
    // Run on a grid small enough for the dense reduced path.
    let m_full = m.min(FULL_BASIS_GRID);
    let asm_full = assemble(&problem, m_full)?;
    let u_fd_full = solve_direct(&asm_full.a, &asm_full.f)?.solution;
    let sol = reduce_and_solve(
        &asm_full.a,
        &asm_full.f,
        asm_full.grid,
        m_full,
        Normalization::MassOrthonormal,
    )?;
    table.metadata
        .insert("full-basis-grid".to_string(), m_full.to_string());
    table.push_row(vec![
        Cell::Int(m_full as i64),
        Cell::Int(m_full as i64),
        Cell::Int((m_full * m_full) as i64),
        Cell::Float(l2_distance(&sol.u, &asm_full.exact)),
        Cell::Float(l2_distance(&sol.u, &u_fd_full)),
        Cell::Text("-".to_string()),
    ]);

    let figure2 = figure_total_error(&sweep_ks, &sweep_total, err_fd, &sweep_ref);
    let figure3 = figure_reduction_error(&sweep_cutoffs, &sweep_red);
    Ok(RunArtifacts {
        tables: vec![table],
        figures: vec![
            ("figure2".to_string(), figure2),
            ("figure3".to_string(), figure3),
        ],
    })
}

fn conditioning_row(asm: &Assembled, cutoff: usize) -> Result<Vec<Cell>, CliError> {
    let interp = SpectralBasis::build(asm.grid, cutoff, Normalization::MassOrthonormal)?;
    let mut system = project_system(&asm.a, &asm.f, &interp)?;
    let cond_interp = condition_number(system.a_ll())?;

    let projected = build_via_mass_projection(asm.grid, cutoff, Normalization::MassOrthonormal)?;
    let system_proj = project_system(&asm.a, &asm.f, &projected)?;
    let cond_proj = condition_number(system_proj.a_ll())?;

    let z = solve_reduced(&mut system)?;
    let u = lift(&interp, &z)?;
    let err = l2_distance(&u, &asm.exact);
    Ok(vec![
        Cell::Int(asm.grid.m() as i64),
        Cell::Int(cutoff as i64),
        Cell::Int((cutoff * cutoff) as i64),
        Cell::Float(cond_interp),
        Cell::Float(cond_proj),
        Cell::Float(err),
    ])
}

fn run_conditioning(config: &RunConfig) -> Result<RunArtifacts, CliError> {
    let problem = manufactured_problem(&config.problem)?;
    let columns = vec![
        Column::data("m"),
        Column::data("M"),
        Column::data("K"),
        Column::data("cond_interp"),
        Column::data("cond_proj"),
        Column::data("l2_error"),
    ];
    let mut meta = base_metadata(config);
    meta.insert(
        "normalization".to_string(),
        "mass-orthonormal".to_string(),
    );
    meta.insert(
        "layout".to_string(),
        "cutoff sweep on the first grid, then the fixed cutoff across the remaining grids"
            .to_string(),
    );
    let mut table = ResultTable::new(&table_name(config), columns, meta);

    let asm = assemble(&problem, config.grids[0])?;
    for &cutoff in &sorted_cutoffs(config) {
        table.push_row(conditioning_row(&asm, cutoff)?);
    }
    drop(asm);
    for &m in &config.grids[1..] {
        let asm_m = assemble(&problem, m)?;
        table.push_row(conditioning_row(&asm_m, config.fixed_cutoff)?);
    }

    Ok(RunArtifacts {
        tables: vec![table],
        figures: Vec::new(),
    })
}

/// Largest pairwise relative max-norm distance between converged solutions.
fn max_pairwise_rel_diff(solutions: &[(&str, &GridFunction)]) -> (f64, String) {
    let mut worst = 0.0;
    let mut pair = String::new();
    for i in 0..solutions.len() {
        for j in (i + 1)..solutions.len() {
            let a = solutions[i].1.values();
            let b = solutions[j].1.values();
            let scale = solutions[i]
                .1
                .max_norm()
                .max(solutions[j].1.max_norm())
                .max(f64::MIN_POSITIVE);
            let diff = a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0f64, f64::max);
            let rel = diff / scale;
            if rel > worst {
                worst = rel;
                pair = format!("{} vs {}", solutions[i].0, solutions[j].0);
            }
        }
    }
    (worst, pair)
}

fn run_solver_comparison(config: &RunConfig) -> Result<RunArtifacts, CliError> {
    let problem = manufactured_problem(&config.problem)?;
    let columns = vec![
        Column::data("m"),
        Column::timing("t_direct"),
        Column::timing("t_reduced"),
        Column::timing("t_mg"),
        Column::data("mg_iterations"),
        Column::data("cg_iterations"),
        Column::data("deflated_iterations"),
        Column::data("agreement"),
    ];
    let mut meta = base_metadata(config);
    meta.insert("cutoff".to_string(), config.fixed_cutoff.to_string());
    meta.insert(
        "tolerance".to_string(),
        format!("{:e}", config.solver_tol),
    );
    meta.insert(
        "iteration-sentinel".to_string(),
        "-1 marks a solver that exhausted its iteration budget".to_string(),
    );
    let mut table = ResultTable::new(&table_name(config), columns, meta);
    let tol = config.solver_tol;

    for &m in &config.grids {
        let asm = assemble(&problem, m)?;

        let mut samples = Vec::with_capacity(config.repetitions);
        let mut u_direct = None;
        for _ in 0..config.repetitions {
            let report = solve_direct(&asm.a, &asm.f)?;
            samples.push(report.wall_time);
            u_direct = Some(report.solution);
        }
        let t_direct = median(samples);
        let u_direct = u_direct.expect("repetitions >= 1");

        let mut samples = Vec::with_capacity(config.repetitions);
        for _ in 0..config.repetitions {
            let sol = reduce_and_solve(
                &asm.a,
                &asm.f,
                asm.grid,
                config.fixed_cutoff,
                Normalization::MassOrthonormal,
            )?;
            samples.push(sol.times.total());
        }
        let t_reduced = median(samples);

        // Multigrid-preconditioned CG; the hierarchy rebuild is part of the
        // timed cost, mirroring the factorization inside the direct solve.
        let mut samples = Vec::with_capacity(config.repetitions);
        let mut u_mg = None;
        let mut mg_iterations = -1i64;
        let mut mg_diverged = false;
        for _ in 0..config.repetitions {
            let start = Instant::now();
            let hierarchy = build_mg_hierarchy(
                asm.grid,
                problem.kappa(),
                KappaAveraging::Midpoint,
                Smoother::RedBlackGaussSeidel,
                1,
                1,
            )?;
            match solve_mg_pcg(&asm.a, &asm.f, &hierarchy, tol, MG_MAX_ITER) {
                Ok(report) => {
                    samples.push(start.elapsed().as_secs_f64());
                    mg_iterations = report.iterations as i64;
                    u_mg = Some(report.solution);
                }
                Err(Error::Convergence(_)) => {
                    mg_diverged = true;
                    break;
                }
                Err(e) => return Err(e.into()),
            }
        }
        let t_mg_cell = if mg_diverged || samples.is_empty() {
            Cell::Text("-".to_string())
        } else {
            Cell::Float(median(samples))
        };

        let (cg_iterations, u_cg) = match solve_cg(&asm.a, &asm.f, tol, CG_MAX_ITER, None) {
            Ok(report) => (report.iterations as i64, Some(report.solution)),
            Err(Error::Convergence(_)) => (-1, None),
            Err(e) => return Err(e.into()),
        };

        let basis = SpectralBasis::build(
            asm.grid,
            config.fixed_cutoff,
            Normalization::MassOrthonormal,
        )?;
        let (deflated_iterations, u_deflated) =
            match solve_deflated_cg(&asm.a, &asm.f, &basis, tol, CG_MAX_ITER) {
                Ok(report) => (report.iterations as i64, Some(report.solution)),
                Err(Error::Convergence(_)) => (-1, None),
                Err(e) => return Err(e.into()),
            };

        let mut solutions: Vec<(&str, &GridFunction)> = vec![("direct", &u_direct)];
        if let Some(u) = &u_mg {
            solutions.push(("mg-pcg", u));
        }
        if let Some(u) = &u_cg {
            solutions.push(("cg", u));
        }
        if let Some(u) = &u_deflated {
            solutions.push(("deflated-cg", u));
        }
        let (agreement, worst_pair) = max_pairwise_rel_diff(&solutions);
        if agreement > AGREEMENT_TOL {
            return Err(CliError::Format(format!(
                "solver cross-check failed at m = {m}: {worst_pair} differ by {agreement:.3e} \
                 (limit {AGREEMENT_TOL:.0e})"
            )));
        }

        table.push_row(vec![
            Cell::Int(m as i64),
            Cell::Float(t_direct),
            Cell::Float(t_reduced),
            t_mg_cell,
            Cell::Int(mg_iterations),
            Cell::Int(cg_iterations),
            Cell::Int(deflated_iterations),
            Cell::Float(agreement),
        ]);
    }

    Ok(RunArtifacts {
        tables: vec![table],
        figures: Vec::new(),
    })
}

fn run_schur_decay(config: &RunConfig) -> Result<RunArtifacts, CliError> {
    let m = config.grids[0];
    let grid = Grid2D::new(m)?;
    let cutoffs = sorted_cutoffs(config);
    let columns = vec![
        Column::data("problem"),
        Column::data("M"),
        Column::data("lambda_next"),
        Column::data("coupling_norm"),
        Column::data("alpha_H"),
        Column::data("gap"),
        Column::data("bound_rhs"),
    ];
    let mut meta = base_metadata(config);

    let problem = manufactured_problem(&config.problem)?;
    let a = assemble_operator(grid, problem.kappa(), KappaAveraging::Midpoint)?;
    let report = schur_decay_report(&a, grid, &cutoffs)?;
    meta.insert(
        "fitted-slope".to_string(),
        format!("{:.6}", report.fitted_slope),
    );
    let mut table = ResultTable::new(&table_name(config), columns, meta);
    let push_rows = |table: &mut ResultTable, name: &str, report: &lowmode::schur::SchurDecayReport| {
        for row in &report.rows {
            table.push_row(vec![
                Cell::Text(name.to_string()),
                Cell::Int(row.cutoff as i64),
                Cell::Float(row.lambda_next),
                Cell::Float(row.coupling),
                Cell::Float(row.alpha_h),
                Cell::Float(row.gap),
                Cell::Float(row.bound_rhs),
            ]);
        }
    };
    push_rows(&mut table, problem.name(), &report);

    // Calibration block: for constant kappa the low and high blocks do not
    // couple, so these rows pin the numerical zero of the pipeline.
    if config.problem != "constant" {
        let constant = manufactured_problem("constant")?;
        let a_const = assemble_operator(grid, constant.kappa(), KappaAveraging::Midpoint)?;
        let report_const = schur_decay_report(&a_const, grid, &cutoffs)?;
        push_rows(&mut table, "constant", &report_const);
    }

    Ok(RunArtifacts {
        tables: vec![table],
        figures: Vec::new(),
    })
}
