//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Runs every preset once single-worker into a scratch directory, reuses
//! those runs for the numeric criteria, then reruns each preset from its
//! manifest with 1 and 4 workers for the determinism check.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use orbitlab::autoencoder::{gradient_check, Activation};
use orbitlab::experiment::{named_figure, run, ExperimentConfig, Overrides, RunManifest, RunOutcome, PRESETS};
use orbitlab::figures::Figure;
use orbitlab::group::{
    finite_orbit_stabilizer, frobenius_distance, nearest_invertible, nearest_invertible_dense, sample_ball, BallSpec, FiniteAction, Gl2,
    Mat2, Point, SINGULAR_DET,
};
use orbitlab::shadow::{fit_shadow, invertible_or_perturb, JacobianReport};
use orbitlab::Error;

/// Criteria that fail with the documented configuration. They are still
/// reported as FAIL; they do not abort the run.
const KNOWN_FAILING: &[u32] = &[4];

struct Line {
    id: u32,
    pass: bool,
    detail: String,
}

struct Runs {
    root: PathBuf,
    outcomes: BTreeMap<&'static str, RunOutcome>,
}

impl Runs {
    fn get(&self, preset: &str) -> &RunOutcome {
        &self.outcomes[preset]
    }

    fn value(&self, preset: &str, key: &str) -> f64 {
        self.get(preset).value(key).unwrap_or(f64::NAN)
    }

    fn seconds(&self, preset: &str) -> f64 {
        self.get(preset).manifest.duration_seconds
    }
}

fn run_all(root: &Path) -> Runs {
    let mut outcomes = BTreeMap::new();
    for p in PRESETS {
        let cfg = ExperimentConfig::preset(p.name, 0, 1, &root.join("w1").join(p.name)).expect("preset resolves");
        let out = run(&cfg).unwrap_or_else(|e| panic!("preset {} failed: {e}", p.name));
        outcomes.insert(p.name, out);
    }
    Runs { root: root.to_path_buf(), outcomes }
}

fn criterion_1() -> Line {
    let start = Instant::now();
    let mut worst = String::new();
    let mut all = true;
    let mut checked = 0;
    for name in ["D4", "S3", "C6"] {
        let action = FiniteAction::by_name(name).expect("built-in group");
        for x in 0..action.ground().len() {
            let os = finite_orbit_stabilizer(&action, x).expect("valid element");
            checked += 1;
            if os.orbit.len() * os.stabilizer.len() != action.order() {
                all = false;
                worst = format!("{name} element {x}");
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Line {
        id: 1,
        pass: all && secs < 1.0,
        detail: format!("{checked} elements, identity holds: {all} {worst}, {secs:.4}s"),
    }
}

fn criterion_2(r: &Runs) -> Line {
    let edge = r.value("edge-volume", "codim_fit");
    let circle = r.value("circle-volume", "codim_fit");
    let ellipse = r.value("ellipse-volume", "codim_fit");
    let hyper = r.value("hyperplane-volume", "codim_fit");
    let secs: f64 = ["edge-volume", "circle-volume", "ellipse-volume", "hyperplane-volume"]
        .iter()
        .map(|p| r.seconds(p))
        .sum();
    let pass = (1.6..=2.4).contains(&edge)
        && (2.5..=3.5).contains(&circle)
        && (2.5..=3.5).contains(&ellipse)
        && (0.8..=1.2).contains(&hyper)
        && secs <= 900.0;
    Line {
        id: 2,
        pass,
        detail: format!(
            "codim edge {edge:.3}, circle {circle:.3}, ellipse {ellipse:.3}, hyperplane {hyper:.3}; {secs:.1}s single-worker"
        ),
    }
}

fn criterion_3(r: &Runs) -> Line {
    let sc = r.value("feature-order", "separation_edge_circle");
    let sb = r.value("feature-order", "separation_edge_butterfly");
    Line {
        id: 3,
        pass: sc >= 3.0 && sb >= 3.0,
        detail: format!(
            "edge {:.6} circle {:.6} butterfly {:.6}; separation {sc:.1} / {sb:.1} standard errors",
            r.value("feature-order", "fraction_edge"),
            r.value("feature-order", "fraction_circle"),
            r.value("feature-order", "fraction_butterfly"),
        ),
    }
}

fn criterion_4(r: &Runs) -> Line {
    let wins = r.value("edge-circle-walk", "wins_edge_over_circle");
    let me = r.value("edge-circle-walk", "median_edge");
    let mc = r.value("edge-circle-walk", "median_circle");
    let secs = r.seconds("edge-circle-walk");
    Line {
        id: 4,
        pass: wins >= 80.0 && me < mc && secs <= 600.0,
        detail: format!(
            "edge first in {wins}/100 trials; median edge {me}, circle {mc} (cap+1 = never); never-hit edge {} circle {}; {secs:.1}s",
            r.value("edge-circle-walk", "never_edge"),
            r.value("edge-circle-walk", "never_circle"),
        ),
    }
}

fn criterion_5(r: &Runs) -> Line {
    let ratio = r.value("rectangles", "loss_ratio");
    let score = r.value("rectangles", "mean_edge_score");
    let p95 = r.value("rectangles", "null_mean_p95");
    let secs = r.seconds("rectangles");
    Line {
        id: 5,
        pass: ratio <= 0.5 && score > p95 && secs <= 300.0,
        detail: format!(
            "loss {:.2} -> {:.2} (ratio {ratio:.3}); mean edge score {score:.3} vs null p95 {p95:.3}; {secs:.1}s",
            r.value("rectangles", "initial_loss"),
            r.value("rectangles", "final_loss"),
        ),
    }
}

fn criterion_6() -> Line {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        for act in [Activation::Sigmoid, Activation::Rectifier] {
            worst = worst.max(gradient_check(act, seed));
        }
    }
    Line {
        id: 6,
        pass: worst <= 1e-4,
        detail: format!("20 instances each for sigmoid and rectifier, worst relative error {worst:.2e}"),
    }
}

fn criterion_7(r: &Runs) -> Line {
    let figures: Vec<(&str, Figure)> = ["circle", "ellipse", "butterfly"]
        .iter()
        .map(|n| (*n, named_figure(n, (1.5, 1.0)).expect("named figure")))
        .collect();
    let deformations = sample_ball(&BallSpec::about_identity(0.5, 7).expect("ball"), 10);
    let mut worst: f64 = 0.0;
    for (_, f) in &figures {
        let pts = f.sample_points(64);
        for g in &deformations {
            let moved: Vec<Point> = pts.iter().map(|p| g.apply(*p)).collect();
            match fit_shadow(&pts, &moved) {
                Ok(fit) => worst = worst.max(fit.g.frobenius_distance(g)),
                Err(_) => worst = f64::INFINITY,
            }
        }
    }
    let transfer = r.get("shadow-transfer");
    let antecedent = transfer.get("antecedent_all") == Some("true");
    let ok = transfer.get("transfer_all") == Some("true");
    Line {
        id: 7,
        pass: worst <= 1e-6 && antecedent && ok,
        detail: format!(
            "synthetic recovery worst {worst:.1e} over 30 fits; trained AE on edge/circle/ellipse/butterfly: antecedent {antecedent}, transfer at 4 eps {ok}"
        ),
    }
}

fn criterion_8() -> Line {
    let mut singular: Vec<Mat2> = Vec::new();
    let vals = [-1.0f64, 0.0, 1.0];
    for a in vals {
        for b in vals {
            for c in vals {
                for d in vals {
                    let m = [[a, b], [c, d]];
                    if (a * d - b * c).abs() <= SINGULAR_DET {
                        singular.push(m);
                    }
                }
            }
        }
    }
    for (u, v) in [([1.0, 2.0], [3.0, -1.0]), ([1e-3, 0.0], [0.0, 5.0]), ([0.3, -0.7], [0.7, 0.3])] {
        singular.push([[u[0] * v[0], u[0] * v[1]], [u[1] * v[0], u[1] * v[1]]]);
    }
    let targets = [Gl2::identity(), Gl2::rotation(0.7), Gl2::new([[0.0, 1.0], [1.0, 0.0]]).unwrap()];
    let mut cases = 0;
    let mut bad = 0;
    for m in &singular {
        for b in &targets {
            let reach = frobenius_distance(m, &b.entries());
            for delta in [1e-3, 1e-1] {
                cases += 1;
                match nearest_invertible(m, b, delta) {
                    Ok((g, t))
                        if g.det().abs() > SINGULAR_DET
                            && t.abs() <= delta
                            && frobenius_distance(&g.entries(), m) <= delta * reach + 1e-15 => {}
                    _ => bad += 1,
                }
            }
        }
    }
    for n in [2, 3] {
        let zero = DMatrix::<f64>::zeros(n, n);
        let rank1 = DMatrix::from_fn(n, n, |i, j| (i + 1) as f64 * (j as f64 - 1.5));
        for a in [zero, rank1] {
            for delta in [1e-3, 1e-1] {
                cases += 2;
                let budget = delta * (DMatrix::<f64>::identity(n, n) - &a).norm() + 1e-15;
                match nearest_invertible_dense(&a, &DMatrix::identity(n, n), delta) {
                    Ok((m, t)) if m.clone().determinant().abs() > SINGULAR_DET && t.abs() <= delta => {}
                    _ => bad += 1,
                }
                let report = JacobianReport::from_matrix(a.clone(), 1e-4);
                match invertible_or_perturb(&report, delta) {
                    Ok(m) if m.clone().determinant().abs() > SINGULAR_DET && (&m - &a).norm() <= budget => {}
                    _ => bad += 1,
                }
            }
        }
    }
    // No t with |t| <= 1e-6 lifts det(t I) = t^2 above the threshold.
    cases += 1;
    if !matches!(
        nearest_invertible(&[[0.0; 2]; 2], &Gl2::identity(), 1e-6),
        Err(Error::NoInvertiblePerturbation { .. })
    ) {
        bad += 1;
    }
    Line {
        id: 8,
        pass: bad == 0,
        detail: format!(
            "{cases} cases ({} singular 2x2 patterns incl. zero, delta 1e-3 and 0.1, plus an infeasible request), {bad} failures",
            singular.len()
        ),
    }
}

fn criterion_9(r: &Runs) -> Line {
    let names = ["trapezoid", "triangle", "butterfly", "hexagon"];
    let ious: Vec<f64> = names.iter().map(|n| r.value(n, "iou")).collect();
    let detail = names.iter().zip(&ious).map(|(n, v)| format!("{n} {v:.4}")).collect::<Vec<_>>().join(", ");
    Line { id: 9, pass: ious.iter().all(|&v| v >= 0.99), detail: format!("IoU at side 128: {detail}") }
}

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .expect("run directory")
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

fn criterion_10(r: &Runs) -> Line {
    let mut mismatches = Vec::new();
    let mut compared = 0;
    for p in PRESETS {
        let base = r.root.join("w1").join(p.name);
        let manifest = RunManifest::read(&base.join("manifest.json")).expect("manifest");
        let reference = csv_files(&base);
        for workers in [1, 4] {
            let out = r.root.join(format!("rerun{workers}")).join(p.name);
            let ov = Overrides { out_dir: Some(out.clone()), workers: Some(workers), ..Default::default() };
            let cfg = manifest.config(&ov).expect("manifest config");
            if let Err(e) = run(&cfg) {
                mismatches.push(format!("{} w{workers}: {e}", p.name));
                continue;
            }
            let again = csv_files(&out);
            compared += again.len();
            if again != reference {
                mismatches.push(format!("{} w{workers}", p.name));
            }
        }
    }
    Line {
        id: 10,
        pass: mismatches.is_empty() && compared > 0,
        detail: format!(
            "{} presets, {compared} CSVs compared after manifest reruns with 1 and 4 workers; mismatches: {}",
            PRESETS.len(),
            if mismatches.is_empty() { "none".to_string() } else { mismatches.join(", ") }
        ),
    }
}

fn main() -> ExitCode {
    let scratch = tempfile::tempdir().expect("scratch dir");
    let mut lines = vec![criterion_1()];
    let runs = run_all(scratch.path());
    lines.push(criterion_2(&runs));
    lines.push(criterion_3(&runs));
    lines.push(criterion_4(&runs));
    lines.push(criterion_5(&runs));
    lines.push(criterion_6());
    lines.push(criterion_7(&runs));
    lines.push(criterion_8());
    lines.push(criterion_9(&runs));
    lines.push(criterion_10(&runs));

    let mut unexpected = 0;
    for l in &lines {
        let known = KNOWN_FAILING.contains(&l.id);
        let status = match (l.pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("criterion {:>2}: {status} - {}", l.id, l.detail);
        if !l.pass && !known {
            unexpected += 1;
        }
    }
    let passed = lines.iter().filter(|l| l.pass).count();
    println!("acceptance: {passed}/{} criteria pass", lines.len());
    if unexpected > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
