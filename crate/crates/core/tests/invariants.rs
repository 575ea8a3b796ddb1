use proptest::prelude::*;
use reflow_core::constraints::{constraint_residuals, extract_constraints};
use reflow_core::difficulty_map::Preset;
use reflow_core::geometry;
use reflow_core::io;
use reflow_core::optimizer::{refine, remove_overlaps, StopReason};
use reflow_core::raster::{InpaintMask, PixelRect, Raster};
use reflow_core::renderer::inpaint;
use reflow_core::scoring::score_closed_form;
use reflow_core::{layout, BBox, DeviceMetrics, DifficultyMap, Layout, OptimizerConfig, UiElement};

fn screen() -> DeviceMetrics {
    DeviceMetrics::new(375.0, 812.0, 163.0)
}

fn arb_bbox() -> impl Strategy<Value = BBox> {
    (8.0..150.0f64, 8.0..120.0f64, 0.0..1.0f64, 0.0..1.0f64)
        .prop_map(|(w, h, fx, fy)| BBox::new(fx * (375.0 - w), fy * (812.0 - h), w, h))
}

fn arb_layout(max: usize) -> impl Strategy<Value = Layout> {
    prop::collection::vec(arb_bbox(), 1..max).prop_map(|boxes| {
        let els = boxes.into_iter().enumerate().map(|(k, b)| UiElement::new(format!("e{k}"), b)).collect();
        Layout::new(screen(), els)
    })
}

fn arb_preset() -> impl Strategy<Value = Preset> {
    prop::sample::select(Preset::ALL.to_vec())
}

/// Non-overlapping layout: one element per cell of a 3-column grid.
fn arb_grid_layout() -> impl Strategy<Value = Layout> {
    prop::collection::vec((0.2..0.9f64, 0.3..0.9f64, 0.0..1.0f64, 0.0..1.0f64), 2..10).prop_map(|cells| {
        let (cw, rh) = (125.0, 90.0);
        let els = cells
            .into_iter()
            .enumerate()
            .map(|(k, (fw, fh, ox, oy))| {
                let (w, h) = (fw * cw, fh * rh);
                let x = (k % 3) as f64 * cw + ox * (cw - w);
                let y = 40.0 + (k / 3) as f64 * rh + oy * (rh - h);
                UiElement::new(format!("n{k}"), BBox::new(x, y, w, h))
            })
            .collect();
        Layout::new(screen(), els)
    })
}

fn quick() -> OptimizerConfig {
    OptimizerConfig { max_steps: 30, ..Default::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn score_is_a_probability(layout in arb_layout(10), preset in arb_preset()) {
        let s = score_closed_form(&layout, &preset.build(layout.screen)).unwrap();
        prop_assert!((0.0..=1.0).contains(&s.value));
        for e in &s.per_element {
            prop_assert!((0.0..=1.0).contains(&e.p));
        }
    }

    #[test]
    fn growing_an_element_never_lowers_its_score(b in arb_bbox(), c in 2.0..30.0f64, grow in 0.0..20.0f64) {
        let map = DifficultyMap::uniform(screen(), c);
        let small = Layout::new(screen(), vec![UiElement::new("a", b)]);
        let big = Layout::new(screen(), vec![UiElement::new("a", BBox::new(b.x - grow, b.y - grow, b.w + 2.0 * grow, b.h + 2.0 * grow))]);
        let p0 = score_closed_form(&small, &map).unwrap().value;
        let p1 = score_closed_form(&big, &map).unwrap().value;
        prop_assert!(p1 >= p0 - 1e-12);
    }

    #[test]
    fn uniform_map_score_is_translation_invariant(b in arb_bbox(), c in 2.0..30.0f64, dx in -50.0..50.0f64, dy in -50.0..50.0f64) {
        let map = DifficultyMap::uniform(screen(), c);
        let moved = BBox::new(b.x + dx, b.y + dy, b.w, b.h);
        let p0 = score_closed_form(&Layout::new(screen(), vec![UiElement::new("a", b)]), &map).unwrap().value;
        let p1 = score_closed_form(&Layout::new(screen(), vec![UiElement::new("a", moved)]), &map).unwrap().value;
        prop_assert!((p0 - p1).abs() < 1e-12);
    }

    #[test]
    fn overlap_removal_reports_truthfully(layout in arb_layout(12)) {
        let (out, ok) = remove_overlaps(&layout, 50);
        if ok {
            prop_assert!(out.is_overlap_free());
        }
        prop_assert_eq!(out.len(), layout.len());
    }

    #[test]
    fn refinement_stays_in_bounds_and_ordered(layout in arb_grid_layout(), preset in arb_preset()) {
        let map = preset.build(layout.screen);
        let set = extract_constraints(&layout, 4.0).reduced().unwrap();
        let cfg = quick();
        let r = refine(&layout, &map, &set, &cfg).unwrap();
        for e in &r.refined.elements {
            let b = e.bbox;
            prop_assert!(b.x >= -1e-9 && b.y >= -1e-9);
            prop_assert!(b.right() <= 375.0 + 1e-9 && b.bottom() <= 812.0 + 1e-9);
            prop_assert!(b.w >= cfg.w_min - 1e-9 && b.h >= cfg.h_min - 1e-9);
        }
        prop_assert!(r.refined.is_overlap_free());
        let res = constraint_residuals(&r.refined, &set).unwrap();
        if r.stop_reason != StopReason::UnresolvableOverlap {
            prop_assert!(res.relative.iter().all(|v| *v == 0.0));
        }
        let before = score_closed_form(&layout, &map).unwrap().value;
        let after = score_closed_form(&r.refined, &map).unwrap().value;
        prop_assert!(after >= before);
    }

    #[test]
    fn refinement_is_deterministic(layout in arb_grid_layout()) {
        let map = Preset::HardTop.build(layout.screen);
        let set = extract_constraints(&layout, 4.0).reduced().unwrap();
        let a = refine(&layout, &map, &set, &quick()).unwrap();
        let b = refine(&layout, &map, &set, &quick()).unwrap();
        prop_assert_eq!(io::to_json(&a.refined), io::to_json(&b.refined));
        prop_assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn extracted_constraints_hold_on_their_source(layout in arb_layout(10), tol in 0.0..8.0f64) {
        let set = extract_constraints(&layout, tol);
        let res = constraint_residuals(&layout, &set).unwrap();
        prop_assert!(res.relative.iter().all(|v| *v == 0.0));
        prop_assert!(res.alignment.iter().all(|v| v.abs() <= tol + 1e-9));
        let again = extract_constraints(&layout, tol);
        prop_assert_eq!(io::to_json(&set), io::to_json(&again));
    }

    #[test]
    fn inpaint_keeps_known_pixels_and_range(seed in any::<u64>(), x0 in 1u32..20, y0 in 1u32..20, w in 1u32..20, h in 1u32..20) {
        let mut r = Raster::filled(48, 48, 1.0, [0, 0, 0, 255]);
        let mut s = seed;
        for y in 0..48 {
            for x in 0..48 {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let v = (s >> 56) as u8;
                r.set_pixel(x, y, [v, v / 2, 255 - v, 255]);
            }
        }
        let mut mask = InpaintMask::for_raster(&r);
        mask.set_rect(PixelRect::new(x0, y0, x0 + w, y0 + h), true);
        let out = inpaint(&r, &mask).unwrap();
        let (mut lo, mut hi) = ([255u8; 4], [0u8; 4]);
        for y in 0..48 {
            for x in 0..48 {
                if !mask.get(x, y) {
                    prop_assert_eq!(out.pixel(x, y), r.pixel(x, y));
                    let p = r.pixel(x, y);
                    for c in 0..4 {
                        lo[c] = lo[c].min(p[c]);
                        hi[c] = hi[c].max(p[c]);
                    }
                }
            }
        }
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                let p = out.pixel(x, y);
                for c in 0..4 {
                    prop_assert!(p[c] >= lo[c] && p[c] <= hi[c]);
                }
            }
        }
    }

    #[test]
    fn layout_and_map_documents_round_trip(layout in arb_layout(8), preset in arb_preset()) {
        let text = io::to_json(&layout);
        let back: Layout = io::from_json(&text).unwrap();
        prop_assert_eq!(&back, &layout);
        prop_assert_eq!(io::to_json(&back), text);
        let map = preset.build(layout.screen);
        let text = io::to_json(&map);
        let back: DifficultyMap = io::from_json(&text).unwrap();
        prop_assert_eq!(io::to_json(&back), text);
    }
}

#[test]
fn single_precision_scoring_tracks_double() {
    let s32 = reflow_core::calibration::DeviceMetrics::<f32>::new(375.0, 812.0, 163.0);
    let l32 = layout::Layout::new(s32, vec![layout::UiElement::new("a", geometry::BBox::new(10.0f32, 20.0, 44.0, 44.0))]);
    let m32 = Preset::HardTop.build(s32);
    let l64 = Layout::new(screen(), vec![UiElement::new("a", BBox::new(10.0, 20.0, 44.0, 44.0))]);
    let m64 = Preset::HardTop.build(screen());
    let a = score_closed_form(&l32, &m32).unwrap().value as f64;
    let b = score_closed_form(&l64, &m64).unwrap().value;
    assert!((a - b).abs() < 1e-5, "{a} vs {b}");
}

#[test]
fn missing_version_is_rejected() {
    let text = io::to_json(&Layout::new(screen(), vec![UiElement::new("a", BBox::new(0.0, 0.0, 10.0, 10.0))]));
    let stripped = text.replacen("\"version\": 1,", "", 1);
    assert!(io::from_json::<Layout>(&stripped).is_err());
    let future = text.replacen("\"version\": 1", "\"version\": 9", 1);
    assert!(matches!(io::from_json::<Layout>(&future), Err(io::IoError::Version(Some(9)))));
}
