//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reflow_core::calibration::{
    adjusted_error, fit_fitts_model, interpolate_error, synthetic_session, CalibrationSample, InitialRadiusPolicy,
};
use reflow_core::constraints::{constraint_residuals, extract_constraints, transitive_reduction, RelativeConstraint};
use reflow_core::difficulty_map::Preset;
use reflow_core::geometry::{Axis, Point2};
use reflow_core::io::{self, Document};
use reflow_core::optimizer::{refine, remove_overlaps, RegionMapping as Mapping, StopReason};
use reflow_core::pipeline::{self, Estimator, RefineArtifacts};
use reflow_core::raster::{InpaintMask, PixelRect, Raster};
use reflow_core::renderer::{content_aware_resize, extract_text_colors, inpaint, render};
use reflow_core::scoring::{
    gaussian_for, hit_probability, score_closed_form, score_gradient_with, score_monte_carlo, ElementGaussian,
    ScoringConfig, SigmaMode,
};
use reflow_core::{
    BBox, CalibrationSession, ConstraintSet, DeviceMetrics, DifficultyMap, FittsModel, Layout, OptimizerConfig,
    RegionMapping, UiElement,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn device() -> DeviceMetrics {
    DeviceMetrics::new(375.0, 812.0, 163.0)
}

fn demo_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../demos")
}

fn demo_layout(name: &str) -> Layout {
    io::read_document(&demo_dir().join(format!("{name}.layout.json"))).expect("demo layout")
}

fn random_layout(rng: &mut ChaCha8Rng, n: usize) -> Layout {
    let s = device();
    let els = (0..n)
        .map(|k| {
            let w = rng.random_range(8.0..160.0);
            let h = rng.random_range(8.0..120.0);
            let x = rng.random_range(0.0..s.screen_width - w);
            let y = rng.random_range(0.0..s.screen_height - h);
            UiElement::new(format!("e{k:02}"), BBox::new(x, y, w, h))
        })
        .collect();
    Layout::new(s, els)
}

/// Overlap-free layout on a jittered grid.
fn random_grid_layout(rng: &mut ChaCha8Rng, n: usize) -> Layout {
    let s = device();
    let cols = 3;
    let (cw, rh) = (s.screen_width / cols as f64, 90.0);
    let els = (0..n)
        .map(|k| {
            let (r, c) = ((k / cols) as f64, (k % cols) as f64);
            let w = rng.random_range(30.0..cw - 10.0);
            let h = rng.random_range(24.0..rh - 10.0);
            let x = c * cw + rng.random_range(0.0..cw - w);
            let y = 60.0 + r * rh + rng.random_range(0.0..rh - h);
            UiElement::new(format!("e{k:02}"), BBox::new(x, y, w, h))
        })
        .collect();
    Layout::new(s, els)
}

fn estimator_agreement() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(3..=15);
        let layout = random_layout(&mut rng, n);
        for preset in Preset::ALL {
            let map = preset.build(layout.screen);
            let cf = score_closed_form(&layout, &map).unwrap().value;
            let mc = score_monte_carlo(&layout, &map, 10_000, 7).unwrap().value;
            worst = worst.max((cf - mc).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = format!("max |closed form - monte carlo| = {worst:.4} over 250 cases in {secs:.1} s");
    if worst <= 0.02 && secs < 30.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Closed-form score with every sigma held at its value for `frozen`.
fn frozen_score(boxes: &[BBox], sigmas: &[(f64, f64)]) -> f64 {
    boxes
        .iter()
        .zip(sigmas)
        .map(|(b, &(sx, sy))| hit_probability(b, &ElementGaussian { center: b.center(), sigma_x: sx, sigma_y: sy }))
        .sum::<f64>()
        / boxes.len() as f64
}

fn through_map_score(boxes: &[BBox], map: &DifficultyMap) -> f64 {
    boxes.iter().map(|b| hit_probability(b, &gaussian_for(b, map, 1.0))).sum::<f64>() / boxes.len() as f64
}

/// Largest componentwise error relative to the largest finite-difference
/// component. Scores sit near 1, so tiny components are dominated by
/// cancellation in the difference quotient.
fn rel_err(analytic: &[[f64; 4]], fd: &[[f64; 4]]) -> f64 {
    let scale = fd.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
    let diff = analytic.iter().flatten().zip(fd.iter().flatten()).map(|(a, f)| (a - f).abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        // flat score: only require the analytic gradient to vanish to roundoff
        return if diff < 1e-12 { 0.0 } else { f64::INFINITY };
    }
    diff / scale
}

fn central_fd(boxes: &[BBox], h: f64, f: impl Fn(&[BBox]) -> f64) -> Vec<[f64; 4]> {
    let mut out = vec![[0.0; 4]; boxes.len()];
    for e in 0..boxes.len() {
        for p in 0..4 {
            let eval = |d: f64| {
                let mut b = boxes.to_vec();
                match p {
                    0 => b[e].x += d,
                    1 => b[e].y += d,
                    2 => b[e].w += d,
                    _ => b[e].h += d,
                }
                f(&b)
            };
            out[e][p] = (eval(h) - eval(-h)) / (2.0 * h);
        }
    }
    out
}

fn gradient_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 1e-3;
    let (mut worst_frozen, mut worst_map): (f64, f64) = (0.0, 0.0);
    for k in 0..100 {
        let n = rng.random_range(1..=8);
        let layout = random_layout(&mut rng, n);
        let map = Preset::ALL[k % Preset::ALL.len()].build(layout.screen);
        let boxes = layout.bboxes();

        let frozen = score_gradient_with(&layout, &map, &ScoringConfig::default()).unwrap();
        let sigmas: Vec<(f64, f64)> = boxes
            .iter()
            .map(|b| {
                let g = gaussian_for(b, &map, 1.0);
                (g.sigma_x, g.sigma_y)
            })
            .collect();
        let fd = central_fd(&boxes, h, |b| frozen_score(b, &sigmas));
        worst_frozen = worst_frozen.max(rel_err(&frozen, &fd));

        let cfg = ScoringConfig { sigma_multiplier: 1.0, sigma_mode: SigmaMode::ThroughMap };
        let full = score_gradient_with(&layout, &map, &cfg).unwrap();
        let fd = central_fd(&boxes, h, |b| through_map_score(b, &map));
        worst_map = worst_map.max(rel_err(&full, &fd));
    }
    let detail = format!("max relative error: frozen sigma {worst_frozen:.2e}, through map {worst_map:.2e} (100 configurations)");
    if worst_frozen <= 1e-4 && worst_map <= 1e-4 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fitts_recovery() -> Outcome {
    let start = Instant::now();
    let dev = device();
    let mut ok = 0;
    let mut worst = (0.0_f64, 0.0_f64);
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let truth = FittsModel {
            a: rng.random_range(0.1..0.4),
            b: rng.random_range(0.05..0.3),
            rest_x: rng.random_range(0.0..dev.screen_width),
            rest_y: rng.random_range(0.0..dev.screen_height),
            rest_z: rng.random_range(0.1..5.0) * dev.points_per_inch,
        };
        let offsets: Vec<(f64, f64)> = (0..64).map(|_| (rng.random_range(-12.0..12.0), rng.random_range(-12.0..12.0))).collect();
        let session = synthetic_session(dev, &truth, 2, |k| offsets[k], |_| 0.0);
        let Ok(fit) = fit_fitts_model(&session) else { continue };
        let m = fit.model;
        let ab = (m.a - truth.a).abs().max((m.b - truth.b).abs());
        let p = (m.rest_x - truth.rest_x).abs().max((m.rest_y - truth.rest_y).abs()).max((m.rest_z - truth.rest_z).abs());
        worst = (worst.0.max(ab), worst.1.max(p));
        if ab <= 1e-3 && p <= 1.0 {
            ok += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = format!(
        "{ok}/20 recovered; worst |Δa|,|Δb| = {:.1e}, worst |Δp_i| = {:.2e} pt; {secs:.2} s",
        worst.0, worst.1
    );
    if ok == 20 && secs < 10.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn endpoint_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let r_f: f64 = rng.random_range(0.0..50.0);
        let r_i: f64 = rng.random_range(0.0..500.0);
        let a: f64 = rng.random_range(0.1..800.0);
        if interpolate_error(r_f, r_i, 0.0, a) != r_i || interpolate_error(r_f, r_i, a, a) != r_f {
            return Err(format!("endpoint mismatch at r_f={r_f}, r_i={r_i}, A={a}"));
        }
    }
    let model = FittsModel { a: 0.0, b: 1.0, rest_x: 0.0, rest_y: 0.0, rest_z: 0.0 };
    let sample = CalibrationSample { target: Point2::new(12.0, 0.0), tap: Point2::new(16.0, 0.0), time: 1.0 };
    let eps = adjusted_error(&sample, &model, 3.0, InitialRadiusPolicy::TravelDistance).unwrap();
    if eps.epsilon_x != 10.0 {
        return Err(format!("hand case gave {}", eps.epsilon_x));
    }
    Ok("exact at d=0 and d=A over 1000 draws; hand case = 10 exactly".into())
}

fn max_displacement(a: &Layout, b: &Layout) -> f64 {
    a.elements.iter().zip(&b.elements).map(|(p, q)| p.bbox.max_abs_diff(&q.bbox)).fold(0.0, f64::max)
}

fn refinement_improves() -> Outcome {
    let mut improved = 0;
    let mut held = 0;
    let mut slowest: f64 = 0.0;
    let mut worst_disp: f64 = 0.0;
    for demo in ["email", "settings", "keypad"] {
        let layout = demo_layout(demo);
        let set = extract_constraints(&layout, 4.0).reduced().unwrap();
        for preset in [Preset::HardTop, Preset::HardLeft, Preset::HardCorners] {
            let map = preset.build(layout.screen);
            let before = score_closed_form(&layout, &map).unwrap().value;
            let t = Instant::now();
            let r = refine(&layout, &map, &set, &OptimizerConfig::default()).unwrap();
            slowest = slowest.max(t.elapsed().as_secs_f64());
            if score_closed_form(&r.refined, &map).unwrap().value >= before {
                improved += 1;
            }
            let cfg = OptimizerConfig { lambda_reg: 10.0, ..Default::default() };
            let t = Instant::now();
            let r = refine(&layout, &map, &set, &cfg).unwrap();
            slowest = slowest.max(t.elapsed().as_secs_f64());
            let d = max_displacement(&layout, &r.refined);
            worst_disp = worst_disp.max(d);
            if d <= 1.0 {
                held += 1;
            }
        }
    }
    let detail = format!(
        "score >= initial in {improved}/9; lambda_reg=10 displacement <= 1 pt in {held}/9 (max {worst_disp:.1} pt); slowest run {slowest:.2} s"
    );
    if improved == 9 && held == 9 && slowest < 5.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn reachability(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<bool>> {
    let mut r = vec![vec![false; n]; n];
    for &(u, v) in edges {
        r[u][v] = true;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if r[i][k] && r[k][j] {
                    r[i][j] = true;
                }
            }
        }
    }
    r
}

fn constraint_machinery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let names = ["A", "B", "C", "D", "E", "F"];
    let mut graphs = 0;
    for n in 1..=6usize {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
        for bits in 0u32..(1 << pairs.len()) {
            let mut edges: Vec<(usize, usize)> =
                pairs.iter().enumerate().filter(|(k, _)| bits & (1 << k) != 0).map(|(_, e)| *e).collect();
            // relabel and shuffle so the topological order is not the id order
            let mut label: Vec<usize> = (0..n).collect();
            label.shuffle(&mut rng);
            edges.shuffle(&mut rng);
            let axis = if bits % 2 == 0 { Axis::X } else { Axis::Y };
            let input: Vec<RelativeConstraint> = edges
                .iter()
                .map(|&(u, v)| RelativeConstraint { a: names[label[u]].into(), b: names[label[v]].into(), axis })
                .collect();
            let reduced = transitive_reduction(&input).map_err(|e| format!("{e}"))?;
            let got: BTreeSet<(String, String)> = reduced.iter().map(|c| (c.a.clone(), c.b.clone())).collect();
            // an edge is redundant iff removing it keeps its endpoints connected
            let want: BTreeSet<(String, String)> = edges
                .iter()
                .filter(|&&e| {
                    let rest: Vec<_> = edges.iter().copied().filter(|&o| o != e).collect();
                    !reachability(n, &rest)[e.0][e.1]
                })
                .map(|&(u, v)| (names[label[u]].to_string(), names[label[v]].to_string()))
                .collect();
            if got != want {
                return Err(format!("reduction mismatch on {edges:?}: {got:?} vs {want:?}"));
            }
            let kept: Vec<(usize, usize)> = edges
                .iter()
                .copied()
                .filter(|&(u, v)| got.contains(&(names[label[u]].to_string(), names[label[v]].to_string())))
                .collect();
            if reachability(n, &kept) != reachability(n, &edges) {
                return Err(format!("reachability changed on {edges:?}"));
            }
            graphs += 1;
        }
    }

    let mut held = 0;
    let mut unflagged = 0;
    for run in 0..100 {
        let n = rng.random_range(3..=12);
        let layout = random_grid_layout(&mut rng, n);
        let map = Preset::ALL[run % Preset::ALL.len()].build(layout.screen);
        let set = extract_constraints(&layout, 4.0).reduced().unwrap();
        let r = refine(&layout, &map, &set, &OptimizerConfig::default()).unwrap();
        let res = constraint_residuals(&r.refined, &set).unwrap();
        if res.relative.iter().all(|v| *v == 0.0) {
            held += 1;
        } else if r.stop_reason != StopReason::UnresolvableOverlap || !r.trace.iter().any(|t| t.unresolvable_overlap) {
            unflagged += 1;
        }
    }
    let detail = format!(
        "reduction matches brute force on {graphs} DAGs; relative constraints hold in {held}/100 refinements, {unflagged} unflagged violations"
    );
    if held >= 95 && unflagged == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn overlap_removal() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut resolved = 0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=12);
        let mut layout = random_layout(&mut rng, n);
        // force at least one overlap
        let b = layout.elements[0].bbox;
        layout.elements[1].bbox.x = (b.x + b.w * 0.5).min(layout.screen.screen_width - layout.elements[1].bbox.w);
        layout.elements[1].bbox.y = b.y;
        let (out, ok) = remove_overlaps(&layout, 50);
        if ok {
            resolved += 1;
            if !out.is_overlap_free() {
                return Err("resolved = true but overlaps remain".into());
            }
        }
    }
    let full = Layout::new(
        device(),
        (0..20).map(|k| UiElement::new(format!("f{k}"), BBox::new(0.0, 0.0, 375.0, 812.0))).collect(),
    );
    let (_, ok) = remove_overlaps(&full, 50);
    if ok {
        return Err("20 full-screen boxes reported resolved".into());
    }
    Ok(format!("1000 layouts terminated, {resolved} resolved and overlap-free; full-screen stack unresolved"))
}

fn renderer_checks() -> Outcome {
    let png = std::fs::read(demo_dir().join("email.png")).unwrap();
    let layout = demo_layout("email");
    let shot = Raster::decode_png(&png, 1.0).unwrap();
    if render(&shot, &RegionMapping::identity(&layout)).unwrap() != shot {
        return Err("identity render changed pixels".into());
    }

    let mut solid = Raster::filled(64, 48, 1.0, [90, 140, 30, 255]);
    let expect = solid.clone();
    let hole = PixelRect::new(10, 10, 40, 30);
    solid.fill_rect(hole, [0, 0, 0, 255]);
    let mut mask = InpaintMask::for_raster(&solid);
    mask.set_rect(hole, true);
    if inpaint(&solid, &mask).unwrap() != expect {
        return Err("solid hole not reproduced".into());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let p = Raster::filled(rng.random_range(1..40), rng.random_range(1..40), 1.0, [rng.random(), 5, 9, 255]);
        let (tw, th) = (rng.random_range(1..90), rng.random_range(1..90));
        let out = content_aware_resize(&p, tw, th);
        if (out.width, out.height) != (tw, th) {
            return Err(format!("resize to {tw}x{th} gave {}x{}", out.width, out.height));
        }
    }

    let map = Preset::HardTop.build(layout.screen);
    let set = extract_constraints(&layout, 4.0).reduced().unwrap();
    let refined = refine(&layout, &map, &set, &OptimizerConfig::default()).unwrap();
    let a = render(&shot, &refined.mapping).unwrap();
    let b = render(&shot, &refined.mapping).unwrap();
    let with_text = |m: &Mapping<f64>| reflow_core::renderer::render_with_text(&shot, m, &layout.elements).unwrap();
    let colors = |r: &Raster| extract_text_colors(r, 4);
    if a != b || with_text(&refined.mapping) != with_text(&refined.mapping) || colors(&a) != colors(&b) {
        return Err("raster operations differ between runs".into());
    }
    Ok("identity exact; solid hole exact; 200 resize targets exact; repeated runs bit-identical".into())
}

fn refine_cli(out: &Path) {
    let demos = demo_dir();
    let status = Command::new(env!("CARGO_BIN_EXE_reflow"))
        .arg("refine")
        .arg(demos.join("email.layout.json"))
        .args(["--preset", "hard-top", "--screenshot"])
        .arg(demos.join("email.png"))
        .arg("--out-dir")
        .arg(out)
        .output()
        .expect("run reflow");
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
}

fn round_trips<T: Document>(text: &str) -> bool {
    io::from_json::<T>(text).map(|d| io::to_json(&d) == text).unwrap_or(false)
}

fn determinism_round_trip() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    refine_cli(&a);
    refine_cli(&b);
    let names = [
        RefineArtifacts::REFINED_LAYOUT,
        RefineArtifacts::MAPPING,
        RefineArtifacts::TRACE,
        RefineArtifacts::CONSTRAINTS,
        RefineArtifacts::RENDER,
    ];
    for name in names {
        if std::fs::read(a.join(name)).unwrap() != std::fs::read(b.join(name)).unwrap() {
            return Err(format!("{name} differs between runs"));
        }
    }
    let read = |name: &str| std::fs::read_to_string(a.join(name)).unwrap();
    let calib = std::fs::read_to_string(demo_dir().join("calibration.json")).unwrap();
    let session: CalibrationSession = io::from_json(&calib).unwrap();
    let map = pipeline::fit_session(&session, &Default::default()).unwrap().map;
    let score = pipeline::score_layout(&demo_layout("email"), &map, Estimator::MonteCarlo, 30, 3, &Default::default()).unwrap();
    let (cfg, trace) = io::trace_from_jsonl::<f64>(&read(RefineArtifacts::TRACE)).unwrap();
    let checks = [
        ("calibration log", round_trips::<CalibrationSession>(&calib)),
        ("layout", round_trips::<Layout>(&read(RefineArtifacts::REFINED_LAYOUT))),
        ("mapping", round_trips::<RegionMapping>(&read(RefineArtifacts::MAPPING))),
        ("constraints", round_trips::<ConstraintSet>(&read(RefineArtifacts::CONSTRAINTS))),
        ("difficulty map", round_trips::<DifficultyMap>(&io::to_json(&map))),
        ("preset map", round_trips::<DifficultyMap>(&io::to_json(&Preset::HardCorners.build(device())))),
        ("score report", round_trips::<pipeline::ScoreReport>(&io::to_json(&score))),
        ("trace", io::trace_to_jsonl(&cfg, &trace) == read(RefineArtifacts::TRACE)),
    ];
    if let Some((name, _)) = checks.iter().find(|(_, ok)| !ok) {
        return Err(format!("{name} does not round-trip byte-identically"));
    }
    Ok(format!("refine artifacts identical across runs; {} formats round-trip", checks.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("estimator agreement", estimator_agreement),
        ("gradient correctness", gradient_correctness),
        ("fitts recovery", fitts_recovery),
        ("adjusted error endpoints", endpoint_identities),
        ("refinement improves score", refinement_improves),
        ("constraint machinery", constraint_machinery),
        ("overlap removal", overlap_removal),
        ("renderer", renderer_checks),
        ("determinism and round-trip", determinism_round_trip),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match std::panic::catch_unwind(check) {
            Ok(Ok(detail)) => println!("PASS  {name}: {detail}"),
            Ok(Err(detail)) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL  {name}: panicked");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
