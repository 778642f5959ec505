//! Acceptance criteria, one line per criterion.
//!
//! Runs without the libtest harness so the summary is printed on every run.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use operator_root::cli::{ResultRecord, RunConfig};
use operator_root::contour::{build_dip_contour, scale_to_variation, Contour, DipParams, HalfPlane};
use operator_root::linalg::{eigenvalues, identity, op_norm, rank, spectral_matching_distance, CMat};
use operator_root::model::{Coupling, ProblemInstance, RadialTerm, SpaceDim, SpectralInterval};
use operator_root::rootsolve::{contour_independence_check, SolverOptions};
use operator_root::spectral::{basis_family_report, build_projection_family, eigendecompose};
use operator_root::transfer::{m1_physical, Continuation};
use operator_root::verify::{run_verification, swept_probes, Verification, VerifyOptions};
use operator_root::C64;

struct Outcome {
    passed: bool,
    summary: String,
}

impl Outcome {
    fn new(passed: bool, summary: impl Into<String>) -> Self {
        Self {
            passed,
            summary: summary.into(),
        }
    }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> RunConfig {
    let text = std::fs::read_to_string(configs_dir().join(name)).expect("config readable");
    RunConfig::from_json(&text).expect("config parses")
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn reference() -> (ProblemInstance, Contour) {
    load("reference.json").instance_and_contour().expect("reference instance")
}

fn check_line(ver: &Verification, name: &str) -> (bool, String) {
    match ver.get(name) {
        Some(ch) => (
            ch.passed,
            format!("{name} {:.3e} (tol {:.1e})", ch.defect, ch.tolerance),
        ),
        None => (false, format!("{name} missing")),
    }
}

fn from_checks(ver: &Verification, names: &[&str]) -> Outcome {
    let mut passed = true;
    let mut parts = Vec::new();
    for n in names {
        let (p, s) = check_line(ver, n);
        passed &= p;
        parts.push(s);
    }
    Outcome::new(passed, parts.join("; "))
}

fn continuation_relation(ver: &Verification) -> Outcome {
    let (inst, contour) = reference();
    let cont = Continuation::new(&inst, &contour).unwrap();
    let probes = swept_probes(&cont, 20);
    let inside = probes.iter().all(|&z| z.im < 0.0 && contour.encloses(z));
    // recompute the residue relation from scratch on the same probes
    let r_max = contour.r_max().unwrap();
    let mut worst: f64 = 0.0;
    for &z in &probes {
        let cont_m1 = cont.m1(z).unwrap().m1;
        let phys = m1_physical(&inst, z, r_max).unwrap().m1;
        let residue = inst.kprime_matrix(z).unwrap() * c(0.0, -2.0 * std::f64::consts::PI);
        worst = worst.max(op_norm(&(cont_m1 - phys - residue)));
    }
    let tol = 1e-8 * cont.scale;
    let (p, s) = check_line(ver, "continuation_residue");
    Outcome::new(
        p && inside && probes.len() == 20 && worst <= tol,
        format!("{} probes in D(lower), residue defect {worst:.3e} (tol {tol:.1e}); {s}", probes.len()),
    )
}

fn contour_independence() -> Outcome {
    let cfg = load("reference.json");
    let base = cfg.base_instance().unwrap();
    let dip = |depth: f64| DipParams {
        depth,
        x_lo: 0.0,
        x_hi: 7.0,
        r_join: 9.0,
        r_max: 80.0,
    };
    let a = build_dip_contour(&base, HalfPlane::Lower, &dip(0.8), 20).unwrap();
    let (inst, _) = scale_to_variation(&base, &a, 0.1).unwrap();
    let a = build_dip_contour(&inst, HalfPlane::Lower, &dip(0.8), 20).unwrap();
    let b = build_dip_contour(&inst, HalfPlane::Lower, &dip(1.2), 20).unwrap();
    let rep = match contour_independence_check(&inst, HalfPlane::Lower, &a, &b, 1e-8) {
        Ok(r) => r,
        Err(e) => return Outcome::new(false, format!("solver error: {e}")),
    };
    let ea = eigenvalues(&rep.solution_a.h1).unwrap();
    let eb = eigenvalues(&rep.solution_b.h1).unwrap();
    let spectra = spectral_matching_distance(&ea, &eb);
    Outcome::new(
        rep.passed && spectra <= 1e-8,
        format!(
            "V0 {:.3}/{:.3}, ||X_A - X_B|| {:.3e} (tol {:.1e}), spectra {spectra:.3e} (tol 1e-8)",
            rep.certificate_a.v0,
            rep.certificate_b.v0,
            rep.difference,
            rep.tol * rep.scale
        ),
    )
}

fn solvability_radii(ver: &Verification) -> Outcome {
    let root = ver.root.as_ref().expect("reference root");
    let cert = root.certificate;
    let setup = (cert.d0 - 1.0).abs() <= 1e-12 && (cert.v0 - 3.0 / 16.0).abs() <= 1e-12;
    let x = op_norm(&root.x);
    let ratio = root.max_contraction_ratio().unwrap_or(0.0);
    let bound = 1.0 / 3.0 + 0.05;
    Outcome::new(
        setup && x <= 0.25 + 1e-9 && ratio <= bound,
        format!(
            "d0 {:.12}, V0 {:.12}, ||X|| {x:.6} (<= 0.25 + 1e-9), ratio {ratio:.4} (<= {bound:.4})",
            cert.d0, cert.v0
        ),
    )
}

fn scalar_oracle() -> Outcome {
    let base = ProblemInstance::new(
        vec![1.0],
        SpectralInterval::half_line(0.0),
        Coupling::SchrodingerRadial {
            dim: SpaceDim::Three,
            terms: vec![RadialTerm {
                v: vec![c(0.5, 0.0)],
                alpha: 0.25,
            }],
        },
    )
    .unwrap();
    let dip = DipParams {
        depth: 1.0,
        x_lo: 0.0,
        x_hi: 3.0,
        r_join: 5.0,
        r_max: 80.0,
    };
    let contour = build_dip_contour(&base, HalfPlane::Lower, &dip, 20).unwrap();
    let (inst, _) = scale_to_variation(&base, &contour, 3.0 / 16.0).unwrap();
    let contour = build_dip_contour(&inst, HalfPlane::Lower, &dip, 20).unwrap();
    let cont = Continuation::new(&inst, &contour).unwrap();
    let root = match cont.solve(&SolverOptions::default()) {
        Ok(r) => r,
        Err(e) => return Outcome::new(false, format!("solver error: {e}")),
    };
    let z_fixed = root.h1[(0, 0)];
    // Newton on the continued scalar transfer function, built from the physical sheet
    // plus the residue term, independent of the contour rule
    let r_max = contour.r_max().unwrap();
    let f = |z: C64| -> C64 {
        let phys = m1_physical(&inst, z, r_max).unwrap().m1[(0, 0)];
        phys - inst.kprime_matrix(z).unwrap()[(0, 0)] * c(0.0, 2.0 * std::f64::consts::PI)
    };
    let mut z = c(1.0, -0.05);
    let h = 1e-5;
    for _ in 0..50 {
        let fz = f(z);
        let df = (f(z + h) - f(z - h)) / (2.0 * h);
        let step = fz / df;
        z -= step;
        if step.norm() < 1e-14 {
            break;
        }
    }
    let diff = (z - z_fixed).norm();
    Outcome::new(
        diff <= 1e-9 && contour.encloses(z),
        format!("fixed point {z_fixed:.12}, Newton {z:.12}, |diff| {diff:.3e} (tol 1e-9)"),
    )
}

fn perturbative_law() -> Outcome {
    let cfg = load("reference.json");
    let raw = cfg.base_instance().unwrap();
    let contour = cfg.build_contour(&raw).unwrap();
    // unit variation at eps = 1, so V0 = eps^2
    let (base, _) = scale_to_variation(&raw, &contour, 1.0).unwrap();
    let contour = cfg.build_contour(&base).unwrap();
    let base_cont = Continuation::new(&base, &contour).unwrap();
    let lam = base.a1.clone();
    let v_diag: Vec<C64> = lam
        .iter()
        .enumerate()
        .map(|(j, &l)| base_cont.v1(c(l, 0.0)).unwrap()[(j, j)])
        .collect();
    let epsilons = [0.2, 0.1, 0.05];
    let mut defects = Vec::new();
    let mut last_z = Vec::new();
    for &eps in &epsilons {
        let inst = base.scaled(eps);
        let root = match Continuation::new(&inst, &contour).and_then(|ct| ct.solve(&SolverOptions::default())) {
            Ok(r) => r,
            Err(e) => return Outcome::new(false, format!("solver error at eps {eps}: {e}")),
        };
        let ev = eigenvalues(&root.h1).unwrap();
        let mut per_j = Vec::new();
        let mut zs = Vec::new();
        for (j, &l) in lam.iter().enumerate() {
            let z = *ev
                .iter()
                .min_by(|a, b| (**a - l).norm().partial_cmp(&(**b - l).norm()).unwrap())
                .unwrap();
            per_j.push((z - l - v_diag[j] * (eps * eps)).norm());
            zs.push(z);
        }
        defects.push(per_j);
        last_z = zs;
    }
    let mut min_ratio = f64::INFINITY;
    for j in 0..lam.len() {
        for k in 0..2 {
            min_ratio = min_ratio.min(defects[k][j] / defects[k + 1][j]);
        }
    }
    let eps = 0.05;
    let mut worst_rel: f64 = 0.0;
    for (j, &l) in lam.iter().enumerate() {
        let golden = -std::f64::consts::PI * base.kprime_matrix(c(l, 0.0)).unwrap()[(j, j)].re;
        worst_rel = worst_rel.max(((last_z[j].im / (eps * eps)) - golden).abs() / golden.abs());
    }
    Outcome::new(
        min_ratio >= 12.0 && worst_rel <= 0.05,
        format!("smallest defect ratio per halving {min_ratio:.2} (>= 12), Im z/eps^2 rel. error {worst_rel:.3e} (<= 5%)"),
    )
}

fn projection_family() -> Outcome {
    let cfg = load("squares.json");
    let (inst, contour) = cfg.instance_and_contour().unwrap();
    let root = match Continuation::new(&inst, &contour).and_then(|ct| ct.solve(&cfg.solver_options())) {
        Ok(r) => r,
        Err(e) => return Outcome::new(false, format!("solver error: {e}")),
    };
    let fam = match build_projection_family(&inst, &root, 1.0, 2) {
        Ok(f) => f,
        Err(e) => return Outcome::new(false, format!("projection family: {e}")),
    };
    let rep = basis_family_report(&fam);
    let m = inst.dim();
    // 1024 seeded random subsets, on top of the report's own enumeration
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let k = fam.projections.len();
    let mut sampled_max: f64 = 0.0;
    for _ in 0..1024 {
        let mut s = CMat::zeros(m, m);
        for q in &fam.projections {
            if rng.gen_bool(0.5) {
                s += q;
            }
        }
        sampled_max = sampled_max.max(op_norm(&s));
    }
    let eig = eigendecompose(&root.h1).unwrap();
    let roots = eig.root_matrix();
    let full_rank = rank(&roots, 1e-10) == m && roots.ncols() == m;
    let algebra = rep.idempotency_defect.max(rep.orthogonality_defect);
    let sum_check = op_norm(&(fam.projections.iter().fold(CMat::zeros(m, m), |a, q| a + q) - identity(m)));
    let bounded = sampled_max.is_finite() && sampled_max <= rep.c_max * (1.0 + 1e-12);
    Outcome::new(
        algebra <= 1e-9 && sum_check <= 1e-9 && rep.full_sum_defect <= 1e-9 && bounded && full_rank,
        format!(
            "{k} projections, algebra {algebra:.3e}, ||sum - I|| {sum_check:.3e} (tol 1e-9), C_max {:.4} over {} subsets, sampled max {sampled_max:.4}, root-vector rank {}/{m}",
            rep.c_max,
            rep.subsets_evaluated,
            rank(&roots, 1e-10)
        ),
    )
}

fn verify_run(dir: &Path) -> Result<ResultRecord, String> {
    std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    let out = Command::new(env!("CARGO_BIN_EXE_operator-root"))
        .arg("verify")
        .arg("--config")
        .arg(configs_dir().join("reference.json"))
        .arg("--out")
        .arg(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("exit status {:?}", out.status.code()));
    }
    let text = std::fs::read_to_string(dir.join("verify.json")).map_err(|e| e.to_string())?;
    ResultRecord::from_json(&text).map_err(|e| e.to_string())
}

fn determinism() -> Outcome {
    let root = std::env::temp_dir().join(format!("operator-root-determinism-{}", std::process::id()));
    let runs = (verify_run(&root.join("a")), verify_run(&root.join("b")));
    let _ = std::fs::remove_dir_all(&root);
    let (a, b) = match runs {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return Outcome::new(false, format!("verify run failed: {e}")),
    };
    let defects = |r: &ResultRecord| -> Vec<(String, u64)> { r.checks.iter().map(|c| (c.name.clone(), c.defect.to_bits())).collect() };
    let same_checks = defects(&a) == defects(&b);
    let strip = |r: &ResultRecord| {
        let mut r = r.clone();
        r.started.clear();
        r.finished.clear();
        r.to_json().unwrap()
    };
    let same_record = strip(&a) == strip(&b);
    Outcome::new(
        same_checks && same_record && !a.checks.is_empty(),
        format!("{} defects bitwise identical: {same_checks}, records identical without timestamps: {same_record}", a.checks.len()),
    )
}

fn main() {
    let started = Instant::now();
    let (inst, contour) = reference();
    let ver = run_verification(&inst, &contour, &SolverOptions::default(), &VerifyOptions::default());
    let reference_time = started.elapsed().as_secs_f64();

    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let timed = |f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let o = f();
        (o, t.elapsed().as_secs_f64())
    };
    let (o, t) = timed(&|| continuation_relation(&ver));
    results.push(("continuation relation", Outcome::new(o.passed, format!("{} [{:.1}s]", o.summary, t + reference_time))));
    let (o, t) = timed(&contour_independence);
    results.push(("contour independence", Outcome::new(o.passed, format!("{} [{t:.1}s]", o.summary))));
    results.push(("solvability radii", solvability_radii(&ver)));
    results.push(("factorization", from_checks(&ver, &["factorization", "factor_invertible"])));
    results.push(("spectral localization", from_checks(&ver, &["localization", "sigma_min_landscape"])));
    results.push((
        "omega and moments",
        from_checks(&ver, &["omega_norm", "omega_adjoint", "moment0", "moment1", "spectrum_conjugation"]),
    ));
    let (o, t) = timed(&scalar_oracle);
    results.push(("scalar oracle", Outcome::new(o.passed, format!("{} [{t:.1}s]", o.summary))));
    let (o, t) = timed(&perturbative_law);
    results.push(("perturbative law", Outcome::new(o.passed, format!("{} [{t:.1}s]", o.summary))));
    let (o, t) = timed(&projection_family);
    results.push(("projection family", Outcome::new(o.passed, format!("{} [{t:.1}s]", o.summary))));
    let (o, t) = timed(&determinism);
    results.push(("determinism", Outcome::new(o.passed, format!("{} [{t:.1}s]", o.summary))));

    let mut failed = 0;
    for (name, o) in &results {
        println!("{:<28} {}  {}", name, if o.passed { "PASS" } else { "FAIL" }, o.summary);
        if !o.passed {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
