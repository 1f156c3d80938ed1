//! Command-line front end: experiment configuration, the six commands, and
//! report emission (CSV, SVG log-log plot, slope fit).

use std::fmt::Write as _;
use std::path::{Path as FsPath, PathBuf};

use clap::{Parser, ValueEnum};

use crate::error::{LabError, Result};
use crate::family::{associated_sectors, dividing_rays, ConfluentFamily, RayKind};
use crate::integrator::{transfer_matrix, Path, ScaledMatrix};
use crate::linalg::{self, c};
use crate::mobius::{
    all_words, divergence_experiment, essential_typicality_check, hyperbolic_push,
    limit_complete_map, limit_points, random_samples, typicality_check, ExclusionData, MobiusMap,
    ProjectiveMonodromy, SpherePoint, WordClass, WordSpec, CHORDAL_TOL, TYPICALITY_K,
};
use crate::monodromy::{
    asymptotics_report, commutator, fractional_power, projective_multiplier, reverse_commutator,
    sweep, EigenData, OracleTarget,
};
use crate::stokes::{least_term, StokesOracle};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Monodromy,
    Commutator,
    Stokes,
    Asymptotics,
    Divergence,
    Selftest,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Monodromy => "monodromy",
            Command::Commutator => "commutator",
            Command::Stokes => "stokes",
            Command::Asymptotics => "asymptotics",
            Command::Divergence => "divergence",
            Command::Selftest => "selftest",
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "stokes-lab",
    version,
    about = "Monodromy, Stokes matrices and confluence experiments"
)]
pub struct Cli {
    pub command: Command,
    /// Family file, or one of the builtins `euler`, `t2`, `t3`.
    #[arg(long, default_value = "t3")]
    pub family: String,
    #[arg(long, default_value_t = 0.4)]
    pub eps0: f64,
    #[arg(long, default_value_t = 0.5)]
    pub ratio: f64,
    #[arg(long, default_value_t = 7)]
    pub count: usize,
    /// Base point as `re,im`.
    #[arg(long, default_value = "-0.5,0", allow_hyphen_values = true)]
    pub t0: String,
    #[arg(long, default_value_t = 0.4, allow_hyphen_values = true)]
    pub d0: f64,
    #[arg(long, default_value_t = 0.4, allow_hyphen_values = true)]
    pub d1: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Comma-separated words over `a A b B`; default: all reduced words up to length 4.
    #[arg(long)]
    pub words: Option<String>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub family_source: String,
    pub family: ConfluentFamily,
    pub eps0: f64,
    pub ratio: f64,
    pub count: usize,
    pub t0: C64,
    pub d0: f64,
    pub d1: f64,
    pub tol: f64,
    pub out: PathBuf,
    pub name: String,
    pub words: Option<String>,
    pub seed: u64,
}

/// `re,im` or a bare real.
pub fn parse_complex_arg(s: &str) -> Result<C64> {
    let bad = || LabError::InvalidArgument(format!("cannot parse complex number '{s}'"));
    let (re, im) = match s.split_once(',') {
        Some((a, b)) => (a.trim(), b.trim()),
        None => (s.trim(), "0"),
    };
    let z = C64::new(
        re.parse().map_err(|_| bad())?,
        im.parse().map_err(|_| bad())?,
    );
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(bad());
    }
    Ok(z)
}

pub fn load_family(source: &str) -> Result<ConfluentFamily> {
    match source {
        "euler" => Ok(ConfluentFamily::euler()),
        "t2" => Ok(ConfluentFamily::t2(0.3)),
        "t3" => Ok(ConfluentFamily::t3()),
        path => ConfluentFamily::load(FsPath::new(path)),
    }
}

impl ExperimentConfig {
    pub fn from_cli(cli: &Cli) -> Result<Self> {
        let cfg = ExperimentConfig {
            family_source: cli.family.clone(),
            family: load_family(&cli.family)?,
            eps0: cli.eps0,
            ratio: cli.ratio,
            count: cli.count,
            t0: parse_complex_arg(&cli.t0)?,
            d0: cli.d0,
            d1: cli.d1,
            tol: cli.tol,
            out: cli.out.clone(),
            name: cli.command.name().to_string(),
            words: cli.words.clone(),
            seed: cli.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let inv = |m: &str| Err(LabError::InvalidArgument(m.to_string()));
        if !(self.eps0 > 0.0 && self.eps0.is_finite()) {
            return inv("eps0 must be positive");
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return inv("ratio must lie in (0, 1)");
        }
        if self.count < 2 {
            return inv("count must be at least 2");
        }
        if self.t0 == C64::new(0.0, 0.0) {
            return inv("t0 must be nonzero");
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return inv("tol must lie in (0, 1)");
        }
        if !self.d0.is_finite() || !self.d1.is_finite() {
            return inv("d0 and d1 must be finite");
        }
        Ok(())
    }

    /// `eps0 · ratio^k`, `k = 0..count`.
    pub fn eps_grid(&self) -> Vec<f64> {
        (0..self.count)
            .map(|k| self.eps0 * self.ratio.powi(k as i32))
            .collect()
    }
}

/// Least-squares line through `(log x, log y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in `log y`.
    pub residual: f64,
    pub points: usize,
}

/// Fits over the smallest half of the `x` values (at least two points).
/// Non-positive or non-finite values are skipped.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Option<SlopeFit> {
    let mut pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let take = pts.len().div_ceil(2).max(2);
    let pts = &pts[..take];
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    Some(SlopeFit {
        slope,
        intercept,
        residual: (ss / n).sqrt(),
        points: pts.len(),
    })
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: &str, xs: &[f64], ys: &[f64]) -> Self {
        Series {
            name: name.to_string(),
            points: xs.iter().copied().zip(ys.iter().copied()).collect(),
        }
    }
}

const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// Self-contained SVG log-log plot. Points with non-positive coordinates are dropped.
pub fn loglog_svg(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let (w, h, ml, mr, mt, mb) = (640.0, 420.0, 70.0, 160.0, 40.0, 50.0);
    let usable = |p: &&(f64, f64)| p.0 > 0.0 && p.1 > 0.0 && p.0.is_finite() && p.1.is_finite();
    let all: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().filter(usable))
        .map(|p| (p.0.log10(), p.1.log10()))
        .collect();
    let bounds = |f: fn(&(f64, f64)) -> f64| {
        let lo = all.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = all.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (0.0, 1.0)
        } else {
            (lo.floor(), hi.ceil().max(lo.floor() + 1.0))
        }
    };
    let (x0, x1) = bounds(|p| p.0);
    let (y0, y1) = bounds(|p| p.1);
    let sx = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
    let sy = |y: f64| h - mb - (y - y0) / (y1 - y0) * (h - mt - mb);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        (ml + w - mr) / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r##"<rect x="{ml}" y="{mt}" width="{}" height="{}" fill="none" stroke="#333"/>"##,
        w - ml - mr,
        h - mt - mb
    );
    // decade grid; thinned when the range is wide
    let step = |lo: f64, hi: f64| ((hi - lo) / 8.0).ceil().max(1.0) as i64;
    let (xs, ys) = (step(x0, x1), step(y0, y1));
    let mut k = x0 as i64;
    while k as f64 <= x1 {
        let x = sx(k as f64);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.1}" y1="{mt}" x2="{x:.1}" y2="{}" stroke="#ddd"/><text x="{x:.1}" y="{}" text-anchor="middle">1e{k}</text>"##,
            h - mb,
            h - mb + 16.0
        );
        k += xs;
    }
    let mut k = y0 as i64;
    while k as f64 <= y1 {
        let y = sy(k as f64);
        let _ = writeln!(
            s,
            r##"<line x1="{ml}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">1e{k}</text>"##,
            w - mr,
            ml - 6.0,
            y + 4.0
        );
        k += ys;
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (ml + w - mr) / 2.0,
        h - 12.0,
        escape(xlabel)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (mt + h - mb) / 2.0,
        (mt + h - mb) / 2.0,
        escape(ylabel)
    );
    for (i, ser) in series.iter().enumerate() {
        let col = COLORS[i % COLORS.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .filter(usable)
            .map(|p| format!("{:.1},{:.1}", sx(p.0.log10()), sy(p.1.log10())))
            .collect();
        if pts.len() > 1 {
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{col}" stroke-width="1.5"/>"#,
                pts.join(" ")
            );
        }
        for p in &pts {
            let (x, y) = p.split_once(',').unwrap_or(("0", "0"));
            let _ = writeln!(s, r#"<circle cx="{x}" cy="{y}" r="3" fill="{col}"/>"#);
        }
        let ly = mt + 14.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="12" height="4" fill="{col}"/><text x="{}" y="{}">{}</text>"#,
            w - mr + 10.0,
            ly - 6.0,
            w - mr + 28.0,
            ly,
            escape(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Everything a command emits.
#[derive(Debug, Clone)]
pub struct Report {
    pub name: String,
    pub csv: String,
    pub svg: String,
    /// Series the slope is fitted to.
    pub fit_target: String,
    pub fit: Option<SlopeFit>,
    pub summary: Vec<String>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Report,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn success(&self) -> bool {
        self.report.failures.is_empty()
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => format!("{v:e}"),
        Some(v) if v.is_infinite() => "inf".into(),
        _ => "nan".into(),
    }
}

fn push_c(f: &mut Vec<String>, z: C64) {
    f.push(format!("{:e}", z.re));
    f.push(format!("{:e}", z.im));
}

fn slope_text(r: &Report) -> String {
    let mut s = format!("target: {}\n", r.fit_target);
    match r.fit {
        Some(f) => {
            let _ = writeln!(s, "slope: {:.6}", f.slope);
            let _ = writeln!(s, "intercept: {:.6}", f.intercept);
            let _ = writeln!(s, "residual: {:.3e}", f.residual);
            let _ = writeln!(s, "points: {}", f.points);
        }
        None => s.push_str("slope: nan\n"),
    }
    for line in &r.summary {
        let _ = writeln!(s, "{line}");
    }
    s
}

/// Runs one command and writes `<name>.csv`, `<name>.svg`, `<name>_slope.txt`.
pub fn run(command: Command, cfg: &ExperimentConfig) -> Result<Outcome> {
    log::info!(
        "{} on {} with {} grid points",
        cfg.name,
        cfg.family_source,
        cfg.count
    );
    let report = match command {
        Command::Monodromy => monodromy_command(cfg)?,
        Command::Commutator => commutator_command(cfg)?,
        Command::Stokes => stokes_command(cfg)?,
        Command::Asymptotics => asymptotics_command(cfg)?,
        Command::Divergence => divergence_command(cfg)?,
        Command::Selftest => selftest_command(cfg)?,
    };
    std::fs::create_dir_all(&cfg.out)?;
    let files = vec![
        cfg.out.join(format!("{}.csv", report.name)),
        cfg.out.join(format!("{}.svg", report.name)),
        cfg.out.join(format!("{}_slope.txt", report.name)),
    ];
    std::fs::write(&files[0], &report.csv)?;
    std::fs::write(&files[1], &report.svg)?;
    std::fs::write(&files[2], slope_text(&report))?;
    Ok(Outcome { report, files })
}

fn report(
    cfg: &ExperimentConfig,
    csv: String,
    title: &str,
    ylabel: &str,
    series: Vec<Series>,
    summary: Vec<String>,
) -> Report {
    let fit = series.first().and_then(|s| {
        let (x, y): (Vec<f64>, Vec<f64>) = s.points.iter().copied().unzip();
        fit_loglog(&x, &y)
    });
    Report {
        name: cfg.name.clone(),
        csv,
        svg: loglog_svg(title, "eps", ylabel, &series),
        fit_target: series.first().map_or(String::new(), |s| s.name.clone()),
        fit,
        summary,
        failures: Vec::new(),
    }
}

fn monodromy_command(cfg: &ExperimentConfig) -> Result<Report> {
    let grid = cfg.eps_grid();
    let points = sweep(&cfg.family, &grid, cfg.t0, cfg.tol)?;
    let n = cfg.family.dim();
    let mut head = vec!["eps".to_string()];
    for i in 0..2 {
        for j in 1..=n {
            head.push(format!("re_log_l{i}{j}"));
            head.push(format!("im_log_l{i}{j}"));
        }
    }
    for m in ["m0", "m1"] {
        head.push(format!("re_ln_scale_{m}"));
        head.push(format!("im_ln_scale_{m}"));
        for j in 1..=n {
            for k in 1..=n {
                head.push(format!("re_{m}_{j}{k}"));
                head.push(format!("im_{m}_{j}{k}"));
            }
        }
    }
    for name in [
        "ln_norm_m0",
        "ln_norm_m1",
        "ln_norm_complete",
        "ratio_error",
        "self_check",
        "numeric_discrepancy",
        "steps",
    ] {
        head.push(name.into());
    }
    let mut csv = head.join(",") + "\n";
    let (mut ratio_err, mut checks) = (Vec::new(), Vec::new());
    for p in &points {
        let mut f = vec![format!("{:e}", p.eps)];
        for l in p.ed0.log_eigenvalues.iter().chain(&p.ed1.log_eigenvalues) {
            push_c(&mut f, *l);
        }
        for i in 0..2 {
            let m: &ScaledMatrix = p.pair.operator(i);
            push_c(&mut f, m.log_scale());
            for j in 0..n {
                for k in 0..n {
                    push_c(&mut f, m.core()[(j, k)]);
                }
            }
        }
        let l0 = &p.ed0.log_eigenvalues;
        let re = if n >= 2 {
            (l0[0] / l0[1] + 1.0).norm()
        } else {
            f64::NAN
        };
        let disc = p.ed0.numeric_discrepancy().max(p.ed1.numeric_discrepancy());
        for v in [
            p.pair.operator(0).ln_norm(),
            p.pair.operator(1).ln_norm(),
            p.pair.complete.ln_norm(),
            re,
            p.pair.self_check,
            disc,
        ] {
            f.push(format!("{v:e}"));
        }
        f.push(p.pair.steps.to_string());
        csv.push_str(&(f.join(",") + "\n"));
        ratio_err.push(re);
        checks.push(p.pair.self_check);
    }
    let max_check = checks.iter().copied().fold(0.0, f64::max);
    Ok(report(
        cfg,
        csv,
        "monodromy eigenvalue symmetry",
        "error",
        vec![
            Series::new("|ln l01/ln l02 + 1|", &grid, &ratio_err),
            Series::new("self-check", &grid, &checks),
        ],
        vec![format!("max_self_check: {max_check:.3e}")],
    ))
}

fn is_monotone_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0])
}

fn commutator_command(cfg: &ExperimentConfig) -> Result<Report> {
    let grid = cfg.eps_grid();
    let fam = &cfg.family;
    let oracle = OracleTarget::from_family(fam, cfg.t0)?;
    let rep = asymptotics_report(fam, &grid, cfg.t0, cfg.tol, cfg.d0, cfg.d1, Some(&oracle))?;
    let right_inv = linalg::inverse(&oracle.right_operator)?;
    // the C₁ word lives at the opposite base point
    let opposite = sweep(fam, &grid, -cfg.t0, cfg.tol)?;
    let c1_distance = |d0: f64, d1: f64, p: &crate::monodromy::SweepPoint| -> (f64, f64) {
        match reverse_commutator(&p.ed0, &p.ed1, &p.transition, d0, d1) {
            Ok(k) => (
                k.distance_to(&oracle.right_operator),
                k.distance_to(&right_inv),
            ),
            Err(_) => (f64::INFINITY, f64::INFINITY),
        }
    };
    let mut csv = String::from(
        "eps,distance_to_C0,det_error,self_check,distance_to_C1,distance_to_C1_inverse,distance_to_C1_reversed,distance_to_C1_reversed_inverse\n",
    );
    let mut dist = Vec::new();
    let mut c1_best = Vec::new();
    for (r, p) in rep.rows.iter().zip(&opposite) {
        let d = r.distance.unwrap_or(f64::NAN);
        let (a, ai) = c1_distance(cfg.d0, cfg.d1, p);
        let (b, bi) = c1_distance(-cfg.d0, -cfg.d1, p);
        let _ = writeln!(
            csv,
            "{:e},{:e},{:e},{:e},{},{},{},{}",
            r.eps,
            d,
            (r.det - 1.0).norm(),
            r.self_check.max(p.pair.self_check),
            fmt_opt(Some(a)),
            fmt_opt(Some(ai)),
            fmt_opt(Some(b)),
            fmt_opt(Some(bi)),
        );
        dist.push(d);
        c1_best.push(a.min(ai).min(b).min(bi));
    }
    let tail = &dist[dist.len().min(2)..];
    let summary = vec![
        format!("distance_to_C0_last: {:.3e}", dist[dist.len() - 1]),
        format!(
            "distance_to_C0_monotone_from_k2: {}",
            is_monotone_decreasing(tail)
        ),
        format!(
            "best_distance_to_C1_last: {}",
            fmt_opt(c1_best.last().copied())
        ),
        format!("max_det_error: {:.3e}", rep.max_det_error()),
        format!("max_self_check: {:.3e}", rep.max_self_check()),
    ];
    Ok(report(
        cfg,
        csv,
        "commutator vs Stokes operator",
        "max-norm distance",
        vec![
            Series::new("distance to C0", &grid, &dist),
            Series::new("best distance to C1", &grid, &c1_best),
        ],
        summary,
    ))
}

fn stokes_command(cfg: &ExperimentConfig) -> Result<Report> {
    let fam = &cfg.family;
    let oracle = StokesOracle::from_family(fam)?;
    let (s0, s1) = associated_sectors(fam)?;
    let pair = oracle.stokes_matrices(&s0, &s1, cfg.t0)?;
    let (p0, p1) = pair.pivot_normalized();
    let mut csv = String::from("matrix,row,col,re,im\n");
    for (name, m) in [
        ("C0", &pair.c0),
        ("C1", &pair.c1),
        ("C0_raw", &pair.c0_raw),
        ("C1_raw", &pair.c1_raw),
        ("C0_pivot", &p0),
        ("C1_pivot", &p1),
    ] {
        for j in 0..m.nrows() {
            for k in 0..m.ncols() {
                let z = m[(j, k)];
                let _ = writeln!(csv, "{name},{},{},{:e},{:e}", j + 1, k + 1, z.re, z.im);
            }
        }
    }
    // least term of the normalizing series as the radius shrinks
    let radii: Vec<f64> = (0..12).map(|k| 0.5 * 0.8f64.powi(k)).collect();
    let terms: Vec<f64> = radii
        .iter()
        .map(|&r| least_term(oracle.normalization(), r).min_term)
        .collect();
    let lt = oracle.least_term();
    let summary = vec![
        format!("matching_radius: {:e}", lt.radius),
        format!("least_term_index: {}", lt.n_star),
        format!("least_term: {:.3e}", lt.min_term),
        format!("deviation_C0: {:.3e}", pair.deviation0),
        format!("deviation_C1: {:.3e}", pair.deviation1),
        format!("series_residual: {:.3e}", oracle.normalization().residual),
    ];
    let mut rep = report(
        cfg,
        csv,
        "least term of the normalizing series",
        "least term",
        vec![Series::new("least term", &radii, &terms)],
        summary,
    );
    rep.svg = loglog_svg(
        "least term of the normalizing series",
        "radius",
        "least term",
        &[Series::new("least term", &radii, &terms)],
    );
    Ok(rep)
}

fn asymptotics_command(cfg: &ExperimentConfig) -> Result<Report> {
    let grid = cfg.eps_grid();
    let fam = &cfg.family;
    let oracle = OracleTarget::from_family(fam, cfg.t0)?;
    let rep = asymptotics_report(fam, &grid, cfg.t0, cfg.tol, cfg.d0, cfg.d1, Some(&oracle))?;
    let n = rep.n;
    let c1 = if n >= 2 {
        oracle.c1[(0, 1)]
    } else {
        c(0.0, 0.0)
    };
    let lemma: Vec<f64> = rep
        .rows
        .iter()
        .map(|r| (r.u_over_mu1 + c1).norm())
        .collect();
    let ratio_l: Vec<f64> = rep.rows.iter().map(|r| (r.ratio_l0 + 1.0).norm()).collect();
    let ratio_mu: Vec<f64> = rep.rows.iter().map(|r| (r.ratio_mu - 1.0).norm()).collect();
    let ln_u: Vec<f64> = rep.rows.iter().map(|r| r.u.ln_abs()).collect();
    let summary = vec![
        format!("c1: {:e},{:e}", c1.re, c1.im),
        format!("u_over_mu1_plus_c1_last: {:.3e}", lemma[lemma.len() - 1]),
        format!("ratio_l0_error_last: {:.3e}", ratio_l[ratio_l.len() - 1]),
        format!("ratio_mu_error_last: {:.3e}", ratio_mu[ratio_mu.len() - 1]),
        format!("ln_abs_u_last: {:.6e}", ln_u[ln_u.len() - 1]),
    ];
    Ok(report(
        cfg,
        rep.to_csv(),
        "transition matrix asymptotics",
        "error",
        vec![
            Series::new("|u/mu1 + c1|", &grid, &lemma),
            Series::new("|ln l01/ln l02 + 1|", &grid, &ratio_l),
            Series::new("|ln mu0/ln mu1 - 1|", &grid, &ratio_mu),
        ],
        summary,
    ))
}

fn parse_words(spec: &str) -> Result<Vec<WordSpec>> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(WordSpec::parse)
        .collect()
}

const DIVERGENCE_SAMPLES: usize = 200;

fn divergence_command(cfg: &ExperimentConfig) -> Result<Report> {
    let fam = &cfg.family;
    if fam.dim() != 2 {
        return Err(LabError::DimensionMismatch(
            "word dynamics needs n = 2".into(),
        ));
    }
    let grid = cfg.eps_grid();
    let words = match &cfg.words {
        Some(s) => parse_words(s)?,
        None => all_words(4),
    };
    let points = sweep(fam, &grid, cfg.t0, cfg.tol)?;
    let maps = points
        .iter()
        .map(ProjectiveMonodromy::from_sweep_point)
        .collect::<Result<Vec<_>>>()?;
    let oracle = OracleTarget::from_family(fam, cfg.t0)?;
    let limit = limit_complete_map(fam, cfg.t0, cfg.tol)?;
    let lp = limit_points(&oracle.stokes)?;
    let all: Vec<SpherePoint> = lp.iter().flatten().copied().collect();
    let literal = typicality_check(&limit, &all, TYPICALITY_K, CHORDAL_TOL);
    let essential = essential_typicality_check(&limit, &lp, TYPICALITY_K, CHORDAL_TOL);
    let excl = ExclusionData {
        m: limit,
        points: lp,
    };
    let samples = random_samples(DIVERGENCE_SAMPLES, cfg.seed);
    let rep = divergence_experiment(&maps, &words, &samples, Some(&excl), cfg.tol)?;
    let reduced_max: Vec<f64> = grid
        .iter()
        .map(|&e| {
            rep.rows
                .iter()
                .filter(|r| {
                    r.eps == e && matches!(r.class, WordClass::Reduced | WordClass::Reducible)
                })
                .map(|r| r.ln_norm)
                .fold(f64::NAN, f64::max)
        })
        .collect();
    let reduced_min: Vec<f64> = grid
        .iter()
        .map(|&e| {
            rep.rows
                .iter()
                .filter(|r| {
                    r.eps == e && matches!(r.class, WordClass::Reduced | WordClass::Reducible)
                })
                .map(|r| r.ln_norm)
                .fold(f64::NAN, f64::min)
        })
        .collect();
    let last = grid[grid.len() - 1];
    let worst_match = rep
        .rows
        .iter()
        .filter(|r| r.eps == last && r.tracked > 0)
        .map(|r| r.matched_fraction())
        .fold(f64::NAN, f64::min);
    let summary = vec![
        format!("typical_up_to_K: {essential} (K = {TYPICALITY_K}, forced relation exempt)"),
        format!("literal_typicality: {literal}"),
        format!("words: {}", words.len()),
        format!("samples: {} excluded: {}", samples.len(), rep.excluded),
        format!(
            "worst_matched_fraction_last: {}",
            fmt_opt(Some(worst_match))
        ),
    ];
    Ok(report(
        cfg,
        rep.to_csv(),
        "word norms (reduced words)",
        "ln norm",
        vec![
            Series::new("max ln norm", &grid, &reduced_max),
            Series::new("min ln norm", &grid, &reduced_min),
        ],
        summary,
    ))
}

struct Check {
    name: &'static str,
    passed: bool,
    value: f64,
}

fn check(name: &'static str, value: f64, bound: f64) -> Check {
    Check {
        name,
        passed: value.is_finite() && value <= bound,
        value,
    }
}

fn flag(name: &'static str, passed: bool) -> Check {
    Check {
        name,
        passed,
        value: if passed { 0.0 } else { 1.0 },
    }
}

fn or_fail(name: &'static str, r: Result<Check>) -> Check {
    r.unwrap_or(Check {
        name,
        passed: false,
        value: f64::NAN,
    })
}

fn euler_eigen_error(points: &[crate::monodromy::SweepPoint]) -> Vec<f64> {
    points
        .iter()
        .map(|p| {
            let exact = std::f64::consts::PI / p.eps;
            let mut err: f64 = 0.0;
            for ed in [&p.ed0, &p.ed1] {
                let mut v: Vec<C64> = ed.numeric_log_eigenvalues.clone();
                v.sort_by(|a, b| b.re.total_cmp(&a.re));
                err = err
                    .max(((v[0].re - exact).exp() - 1.0).abs())
                    .max(((v[1].re + exact).exp() - 1.0).abs());
            }
            err
        })
        .collect()
}

fn selftest_command(cfg: &ExperimentConfig) -> Result<Report> {
    let euler = ConfluentFamily::euler();
    let t0 = C64::new(-0.5, 0.0);
    let grid = [0.5, 0.25, 0.125];
    let points = sweep(&euler, &grid, t0, cfg.tol)?;
    let eig_err = euler_eigen_error(&points);
    let mut checks = Vec::new();

    checks.push(check(
        "euler_eigenvalues",
        eig_err.iter().copied().fold(0.0, f64::max),
        1e-8,
    ));
    checks.push(or_fail(
        "euler_transition_identity",
        (|| {
            let worst = points
                .iter()
                .map(|p| linalg::max_diff(&p.transition.matrix(), &linalg::identity(2)))
                .fold(0.0, f64::max);
            Ok(check("euler_transition_identity", worst, 1e-8))
        })(),
    ));
    checks.push(or_fail(
        "euler_commutator_identity",
        (|| {
            let mut worst: f64 = 0.0;
            for p in &points {
                for (d0, d1) in [(0.4, 0.4), (0.0, 0.0)] {
                    let k = commutator(&p.ed0, &p.ed1, &p.transition, d0, d1)?;
                    worst = worst.max(k.distance_to(&linalg::identity(2)));
                }
            }
            Ok(check("euler_commutator_identity", worst, 1e-8))
        })(),
    ));
    checks.push(or_fail(
        "euler_stokes_identity",
        (|| {
            let o = OracleTarget::from_family(&euler, t0)?;
            let i2 = linalg::identity(2);
            Ok(flag(
                "euler_stokes_identity",
                o.stokes.c0 == i2 && o.stokes.c1 == i2,
            ))
        })(),
    ));
    checks.push(check(
        "euler_self_check",
        points.iter().map(|p| p.pair.self_check).fold(0.0, f64::max),
        10.0 * cfg.tol,
    ));
    checks.push(or_fail(
        "constant_diagonal_transfer",
        (|| {
            let field =
                crate::CoefficientField::constant(linalg::diag(&[c(1.0, 0.0), c(-1.0, 0.0)]));
            let m = transfer_matrix(&field, &Path::segment(c(0.0, 0.0), c(1.0, 0.0))?, cfg.tol)?
                .to_matrix();
            let e = std::f64::consts::E;
            let err = linalg::max_diff(&m, &linalg::diag(&[c(e, 0.0), c(1.0 / e, 0.0)]));
            Ok(check("constant_diagonal_transfer", err, 1e-8))
        })(),
    ));
    checks.push(or_fail(
        "euler_roots",
        (|| {
            let (a0, a1) = euler.singularities(0.5)?;
            Ok(check(
                "euler_roots",
                (a0 - c(0.0, 0.5)).norm() + (a1 - c(0.0, -0.5)).norm(),
                1e-14,
            ))
        })(),
    ));
    checks.push(or_fail(
        "real_dividing_rays",
        (|| {
            let rays = dividing_rays(1, &[c(1.0, 0.0), c(-1.0, 0.0)], RayKind::RealDividing)?;
            let angles: Vec<f64> = rays.iter().map(|r| r.angle).collect();
            Ok(flag(
                "real_dividing_rays",
                angles.len() == 2
                    && angles[0].abs() < 1e-12
                    && (angles[1] - std::f64::consts::PI).abs() < 1e-12,
            ))
        })(),
    ));
    checks.push(or_fail(
        "fractional_power",
        (|| {
            let ed = EigenData::from_operator(&linalg::diag(&[c(4.0, 0.0), c(1.0, 0.0)]))?;
            let half = fractional_power(&ed, 0.5, None)?.to_matrix();
            let zero = fractional_power(&ed, 0.0, None)?.to_matrix();
            let err = linalg::max_diff(&half, &linalg::diag(&[c(2.0, 0.0), c(1.0, 0.0)]))
                .max(linalg::max_diff(&zero, &linalg::identity(2)));
            Ok(check("fractional_power", err, 1e-12))
        })(),
    ));
    checks.push(or_fail(
        "projective_multiplier",
        (|| {
            let ed = EigenData::from_operator(&linalg::diag(&[c(4.0, 0.0), c(1.0, 0.0)]))?;
            Ok(check(
                "projective_multiplier",
                (projective_multiplier(&ed)? - 0.25).norm(),
                1e-12,
            ))
        })(),
    ));
    checks.push(or_fail(
        "mobius_scaling_map",
        (|| {
            let m = MobiusMap::projectivize(&linalg::diag(&[c(2.0, 0.0), c(1.0, 0.0)]))?;
            let fp = m.fixed_points(1e-12)?;
            Ok(flag(
                "mobius_scaling_map",
                fp.attractor.is_infinity()
                    && fp.repeller.chart().norm() < 1e-12
                    && (fp.multiplier - 0.5).norm() < 1e-12,
            ))
        })(),
    ));
    checks.push(or_fail(
        "mobius_parabolic",
        (|| {
            let mut m = linalg::identity(2);
            m[(0, 1)] = c(1.0, 0.0);
            let p = MobiusMap::projectivize(&m)?;
            Ok(flag(
                "mobius_parabolic",
                !p.classify(1e-9).is_hyperbolic() && p.fixed_points(1e-9).is_err(),
            ))
        })(),
    ));
    checks.push(or_fail(
        "word_reduction",
        (|| {
            let w = WordSpec::parse("aAb")?;
            let ba = WordSpec::parse("ba")?;
            let ab = WordSpec::parse("ab")?;
            Ok(flag(
                "word_reduction",
                w.to_string() == "b"
                    && w.is_reduced()
                    && ba.class == WordClass::Reduced
                    && ab.class == WordClass::CompletePower(1),
            ))
        })(),
    ));
    checks.push(or_fail(
        "push_to_attractor",
        (|| {
            let maps: Vec<MobiusMap> = [10.0, 100.0, 1e6]
                .iter()
                .map(|&l| MobiusMap::projectivize(&linalg::diag(&[c(l, 0.0), c(1.0, 0.0)])))
                .collect::<Result<_>>()?;
            let push = hyperbolic_push(&maps, &SpherePoint::finite(c(1.0, 0.0)), 1e-9)?;
            let repeller = hyperbolic_push(&maps, &SpherePoint::finite(c(0.0, 0.0)), 1e-9);
            Ok(flag(
                "push_to_attractor",
                push.limit.chordal(&SpherePoint::infinity()) < 1e-5
                    && matches!(repeller, Err(LabError::SampleNearRepeller)),
            ))
        })(),
    ));
    checks.push(or_fail(
        "euler_not_typical",
        (|| {
            let o = OracleTarget::from_family(&euler, t0)?;
            let lp = limit_points(&o.stokes)?;
            let m = limit_complete_map(&euler, t0, cfg.tol)?;
            Ok(flag(
                "euler_not_typical",
                !essential_typicality_check(&m, &lp, TYPICALITY_K, CHORDAL_TOL),
            ))
        })(),
    ));
    checks.push(or_fail(
        "euler_words_bounded",
        (|| {
            let maps = points
                .iter()
                .map(ProjectiveMonodromy::from_sweep_point)
                .collect::<Result<Vec<_>>>()?;
            // M₁ = M₀⁻¹ here, so only balanced words stay bounded
            let balanced = |w: &WordSpec| {
                w.letters
                    .iter()
                    .map(|l| {
                        let s = if l.inverse { -1 } else { 1 };
                        if l.generator == 0 {
                            s
                        } else {
                            -s
                        }
                    })
                    .sum::<i32>()
                    == 0
            };
            let worst = all_words(4)
                .iter()
                .filter(|w| balanced(w))
                .flat_map(|w| maps.iter().map(move |m| m.evaluate(w).ln_norm()))
                .fold(0.0, f64::max);
            Ok(check("euler_words_bounded", worst, 1e-8))
        })(),
    ));
    checks.push(flag(
        "family_round_trip",
        ConfluentFamily::parse(&cfg.family.to_text()).as_ref() == Ok(&cfg.family),
    ));

    let mut csv = String::from("check,passed,value\n");
    for ch in &checks {
        let _ = writeln!(csv, "{},{},{:e}", ch.name, ch.passed, ch.value);
    }
    let failures: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.to_string())
        .collect();
    let summary = vec![format!(
        "passed: {}/{}",
        checks.len() - failures.len(),
        checks.len()
    )];
    let mut rep = report(
        cfg,
        csv,
        "Euler eigenvalue relative error",
        "relative error",
        vec![Series::new("eigenvalue error", &grid, &eig_err)],
        summary,
    );
    rep.failures = failures;
    Ok(rep)
}

/// Machine-readable error line: `<Kind>:<detail>`; parse errors already
/// carry their `ParseError:<line>` prefix.
pub fn error_line(e: &LabError) -> String {
    match e {
        LabError::Parse { .. } => e.to_string(),
        _ => format!("{}:{}", e.kind(), e),
    }
}

/// Log level from `STOKES_LOG`.
pub fn log_level(value: Option<&str>) -> Result<log::LevelFilter> {
    match value.map(str::trim) {
        None | Some("") | Some("quiet") => Ok(log::LevelFilter::Off),
        Some("info") => Ok(log::LevelFilter::Info),
        Some("debug") => Ok(log::LevelFilter::Debug),
        Some(other) => Err(LabError::InvalidArgument(format!(
            "STOKES_LOG must be quiet, info or debug, not '{other}'"
        ))),
    }
}
