//! Acceptance run: one PASS/FAIL line per criterion. Exits nonzero if any fails.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stokes_lab::family::{conditioned_monodromy_loop, monodromy_loop};
use stokes_lab::integrator::transfer_matrix;
use stokes_lab::linalg;
use stokes_lab::mobius::{
    all_words, essential_typicality_check, limit_complete_map, limit_points, typicality_check,
    ProjectiveMonodromy, SpherePoint, WordClass, WordSpec, CHORDAL_TOL, TYPICALITY_K,
};
use stokes_lab::monodromy::{
    asymptotics_report, complete_loop, sweep, transition_distance, AsymptoticsReport, OracleTarget,
    SyntheticFamily, DEFAULT_T0,
};
use stokes_lab::{ConfluentFamily, C64};

const TOL: f64 = 1e-10;

struct Outcome {
    id: u32,
    passed: bool,
    detail: String,
}

fn emit(id: u32, passed: bool, detail: String) -> Outcome {
    println!(
        "{} criterion {id}: {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
    Outcome { id, passed, detail }
}

fn t3_grid() -> Vec<f64> {
    (0..7).map(|k| 0.4 / 2f64.powi(k)).collect()
}

fn criterion1() -> Outcome {
    let start = Instant::now();
    let fam = ConfluentFamily::euler();
    let grid = [0.5, 0.25, 0.125];
    let points = match sweep(&fam, &grid, DEFAULT_T0, TOL) {
        Ok(p) => p,
        Err(e) => return emit(1, false, format!("sweep failed: {e}")),
    };
    let mut worst: f64 = 0.0;
    for p in &points {
        let exact = std::f64::consts::PI / p.eps;
        for ed in [&p.ed0, &p.ed1] {
            let mut logs = ed.numeric_log_eigenvalues.clone();
            logs.sort_by(|a, b| b.re.total_cmp(&a.re));
            // relative error of λ = exp(log λ)
            worst = worst
                .max((C64::new(logs[0].re - exact, logs[0].im).exp() - 1.0).norm())
                .max((C64::new(logs[1].re + exact, logs[1].im).exp() - 1.0).norm());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    emit(
        1,
        worst <= 1e-8 && secs < 10.0,
        format!("Euler eigenvalue relative error {worst:.2e} (<= 1e-8), {secs:.1} s (< 10 s)"),
    )
}

fn criterion2(rep: &AsymptoticsReport, secs: f64) -> Outcome {
    let d: Vec<f64> = rep
        .rows
        .iter()
        .map(|r| r.distance.unwrap_or(f64::NAN))
        .collect();
    let monotone = d[2..].windows(2).all(|w| w[1] < w[0]);
    let last = d[d.len() - 1];
    emit(
        2,
        monotone && last <= 1e-2 && secs < 300.0,
        format!(
            "commutator distance to C0 {}; monotone for k >= 2: {monotone}; last {last:.2e} (<= 1e-2); {secs:.1} s (< 300 s)",
            d.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(" ")
        ),
    )
}

fn criterion3(rep: &AsymptoticsReport, oracle: &OracleTarget) -> Outcome {
    let last = &rep.rows[rep.rows.len() - 1];
    let dist = transition_distance(last, oracle);
    let ln_u: Vec<f64> = rep.rows.iter().map(|r| r.u.ln_abs()).collect();
    let shrinking = ln_u.windows(2).all(|w| w[1] < w[0]);
    let tiny = ln_u[ln_u.len() - 1] < (1e-10f64).ln();
    emit(
        3,
        dist <= 1e-3 && shrinking && tiny,
        format!(
            "C(eps) vs C0 entrywise {dist:.2e} (<= 1e-3); ln|u| {} (decreasing: {shrinking})",
            ln_u.iter()
                .map(|x| format!("{x:.1}"))
                .collect::<Vec<_>>()
                .join(" ")
        ),
    )
}

fn criterion4(rep: &AsymptoticsReport, oracle: &OracleTarget) -> Outcome {
    let c1 = oracle.c1[(0, 1)];
    let e: Vec<f64> = rep
        .rows
        .iter()
        .map(|r| (r.u_over_mu1 + c1).norm())
        .collect();
    let decreasing = e.windows(2).all(|w| w[1] < w[0]);
    let last = e[e.len() - 1];
    emit(
        4,
        decreasing && last <= 0.05 * c1.norm(),
        format!(
            "|u/mu1 + c1| {} (decreasing: {decreasing}); last {last:.2e} <= 0.05|c1| = {:.2e}",
            e.iter()
                .map(|x| format!("{x:.2e}"))
                .collect::<Vec<_>>()
                .join(" "),
            0.05 * c1.norm()
        ),
    )
}

fn criterion5(rep: &AsymptoticsReport) -> Outcome {
    match rep.rows.iter().find(|r| (r.eps - 0.05).abs() < 1e-12) {
        Some(r) => {
            let a = (r.ratio_l0 + 1.0).norm();
            let b = (r.ratio_mu - 1.0).norm();
            emit(
                5,
                a <= 0.1 && b <= 0.1,
                format!("at eps = 0.05: |ln l01/ln l02 + 1| = {a:.2e}, |ln mu0/ln mu1 - 1| = {b:.2e} (<= 0.1)"),
            )
        }
        None => emit(5, false, "eps = 0.05 missing from the grid".into()),
    }
}

fn criterion6(fam: &ConfluentFamily, oracle: &OracleTarget) -> Outcome {
    let start = Instant::now();
    let grid = [0.4, 0.2, 0.1, 0.05];
    let run = || -> stokes_lab::Result<(bool, bool, f64, String, f64, usize)> {
        let points = sweep(fam, &grid, DEFAULT_T0, TOL)?;
        let maps = points
            .iter()
            .map(ProjectiveMonodromy::from_sweep_point)
            .collect::<stokes_lab::Result<Vec<_>>>()?;
        let limit = limit_complete_map(fam, DEFAULT_T0, TOL)?;
        let lp = limit_points(&oracle.stokes)?;
        let flat: Vec<SpherePoint> = lp.iter().flatten().copied().collect();
        let literal = typicality_check(&limit, &flat, TYPICALITY_K, CHORDAL_TOL);
        let typical = essential_typicality_check(&limit, &lp, TYPICALITY_K, CHORDAL_TOL);
        let mut worst = f64::INFINITY;
        let mut worst_word = String::new();
        let mut count = 0;
        for w in all_words(6) {
            if !matches!(w.class, WordClass::Reduced | WordClass::Reducible) {
                continue;
            }
            count += 1;
            let big = maps[0].evaluate(&w).ln_norm();
            let small = maps[3].evaluate(&w).ln_norm();
            let ratio = (small - big).exp();
            if ratio < worst {
                worst = ratio;
                worst_word = w.to_string();
            }
        }
        let mut power_dev: f64 = 0.0;
        for k in [-3i64, -2, -1, 1, 2, 3] {
            let w = WordSpec::parse(&if k > 0 {
                "ab".repeat(k as usize)
            } else {
                "BA".repeat((-k) as usize)
            })?;
            let lim = limit.pow(k).ln_norm();
            for m in &maps {
                // factor-2 band, measured in ln
                power_dev = power_dev.max((m.evaluate(&w).ln_norm() - lim).abs());
            }
        }
        Ok((typical, literal, worst, worst_word, power_dev, count))
    };
    match run() {
        Ok((typical, literal, worst, word, dev, count)) => {
            let secs = start.elapsed().as_secs_f64();
            emit(
                6,
                typical && worst >= 10.0 && dev <= 2f64.ln() && secs < 600.0,
                format!(
                    "typical up to K = {TYPICALITY_K}: {typical} (literal check: {literal}); {count} reduced words, smallest norm growth 0.4 -> 0.05 is {worst:.2e} ({word}) (>= 10); (ab)^k, |k| <= 3, worst norm factor {:.3} vs limit (<= 2); {secs:.1} s",
                    dev.exp()
                ),
            )
        }
        Err(e) => emit(6, false, format!("run failed: {e}")),
    }
}

fn criterion7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let nu = 1e-4;
    let mut worst: f64 = 0.0;
    let mut failed = 0;
    let mut fams: Vec<SyntheticFamily> = (0..100)
        .map(|_| SyntheticFamily::random(2, &mut rng))
        .collect();
    fams.push(SyntheticFamily::random(3, &mut rng));
    for f in &fams {
        match f.distance(nu) {
            Ok(d) => {
                worst = worst.max(d);
                if d > 1e-6 {
                    failed += 1;
                }
            }
            Err(_) => failed += 1,
        }
    }
    emit(
        7,
        failed == 0,
        format!(
            "{} synthetic families (100 with n = 2, one with n = 3): worst distance {worst:.2e} at nu = 1e-4 (<= 1e-6), {failed} above bound",
            fams.len()
        ),
    )
}

fn criterion8(rep: &AsymptoticsReport, oracle: &OracleTarget) -> Outcome {
    let det = rep.max_det_error();
    let dev = oracle.stokes.deviation0.max(oracle.stokes.deviation1);
    let euler = OracleTarget::from_family(&ConfluentFamily::euler(), DEFAULT_T0);
    let identity = match &euler {
        Ok(o) => o.stokes.c0 == linalg::identity(2) && o.stokes.c1 == linalg::identity(2),
        Err(_) => false,
    };
    emit(
        8,
        det <= 1e-8 && dev <= 1e-6 && identity,
        format!("max |det - 1| {det:.2e} (<= 1e-8); oracle pre-projection deviation {dev:.2e} (<= 1e-6); diagonal input gives identity Stokes: {identity}"),
    )
}

fn criterion9(fam: &ConfluentFamily, rep: &AsymptoticsReport) -> Outcome {
    let check = rep.max_self_check();
    let tol = 1e-11;
    let run = || -> stokes_lab::Result<Vec<f64>> {
        // straight and conditioned loops differ at 0.2 (they coincide for larger eps)
        let eps = 0.2;
        let field = fam.field(eps)?;
        let mut out = Vec::new();
        for i in 0..2 {
            let a = transfer_matrix(&field, &monodromy_loop(fam, eps, i, DEFAULT_T0)?, tol)?;
            let b = transfer_matrix(
                &field,
                &conditioned_monodromy_loop(fam, eps, i, DEFAULT_T0)?,
                tol,
            )?;
            out.push(a.relative_distance(&b));
        }
        // ψ₁ then ψ₀ is homotopic to the loop around both points. The product
        // cancels factors of size e^{π/ε}, so it is compared at a larger eps;
        // at 0.4 the circle |t| = 0.5 grazes the default minimum distance.
        let eps = 0.3;
        let field = fam.field(eps)?;
        let lasso = monodromy_loop(fam, eps, 1, DEFAULT_T0)?
            .then(&monodromy_loop(fam, eps, 0, DEFAULT_T0)?)?;
        let a = transfer_matrix(&field, &lasso, tol)?;
        let b = transfer_matrix(&field, &complete_loop(fam, eps, DEFAULT_T0)?, tol)?;
        out.push(a.relative_distance(&b));
        Ok(out)
    };
    match run() {
        Ok(h) => {
            let worst = h.iter().copied().fold(0.0, f64::max);
            emit(
                9,
                check <= 10.0 * TOL && worst <= 1e-8,
                format!(
                    "max self-check {check:.2e} (<= 10 tol = {:.0e}); homotopy pairs (straight vs conditioned loop at alpha0, alpha1 for eps = 0.2; lasso product vs complete loop for eps = 0.3) relative {} (<= 1e-8)",
                    10.0 * TOL,
                    h.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(" ")
                ),
            )
        }
        Err(e) => emit(9, false, format!("homotopy run failed: {e}")),
    }
}

fn main() {
    let mut outcomes = vec![criterion1()];

    let fam = ConfluentFamily::t3();
    let start = Instant::now();
    let prepared = OracleTarget::from_family(&fam, DEFAULT_T0).and_then(|oracle| {
        asymptotics_report(&fam, &t3_grid(), DEFAULT_T0, TOL, 0.4, 0.4, Some(&oracle))
            .map(|rep| (oracle, rep))
    });
    let secs = start.elapsed().as_secs_f64();
    match prepared {
        Ok((oracle, rep)) => {
            outcomes.push(criterion2(&rep, secs));
            outcomes.push(criterion3(&rep, &oracle));
            outcomes.push(criterion4(&rep, &oracle));
            outcomes.push(criterion5(&rep));
            outcomes.push(criterion6(&fam, &oracle));
            outcomes.push(criterion7());
            outcomes.push(criterion8(&rep, &oracle));
            outcomes.push(criterion9(&fam, &rep));
        }
        Err(e) => {
            for id in [2, 3, 4, 5, 6, 8, 9] {
                outcomes.push(emit(id, false, format!("T3 sweep failed: {e}")));
            }
            outcomes.push(criterion7());
        }
    }
    outcomes.sort_by_key(|o| o.id);
    let failed: Vec<&Outcome> = outcomes.iter().filter(|o| !o.passed).collect();
    println!(
        "acceptance: {}/{} criteria passed",
        outcomes.len() - failed.len(),
        outcomes.len()
    );
    for o in &failed {
        eprintln!("failed criterion {}: {}", o.id, o.detail);
    }
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
