//! Regenerates the files under `demos/`: three layouts with synthetic
//! screenshots, and a calibration log from a simulated user whose taps get
//! sloppier toward the top of the screen.
//!
//! cargo run -p reflow-cli --example make_demos -- demos

use std::path::{Path, PathBuf};

use reflow_core::calibration::{grid_centers, synthetic_session, DEFAULT_GRID_COLS, DEFAULT_GRID_ROWS};
use reflow_core::geometry::BBox;
use reflow_core::io;
use reflow_core::layout::ElementKind;
use reflow_core::raster::Raster;
use reflow_core::renderer::render_text_patch;
use reflow_core::{DeviceMetrics, FittsModel, Layout, UiElement};

fn device() -> DeviceMetrics {
    DeviceMetrics::new(375.0, 812.0, 163.0)
}

fn button(id: &str, x: f64, y: f64, w: f64, h: f64) -> UiElement {
    UiElement::new(id, BBox::new(x, y, w, h)).with_kind(ElementKind::NonText)
}

fn label(id: &str, text: &str, x: f64, y: f64, w: f64, h: f64) -> UiElement {
    let mut e = UiElement::new(id, BBox::new(x, y, w, h)).with_kind(ElementKind::Text);
    e.text = Some(text.to_string());
    e
}

fn email() -> Layout {
    let mut els = vec![
        button("back", 16.0, 54.0, 44.0, 32.0),
        label("title", "Inbox", 120.0, 54.0, 135.0, 32.0),
        button("compose", 315.0, 54.0, 44.0, 32.0),
        label("search", "Search", 16.0, 100.0, 343.0, 36.0),
    ];
    for k in 0..6 {
        els.push(label(&format!("message-{k}"), &format!("Message {}", k + 1), 16.0, 150.0 + k as f64 * 84.0, 343.0, 72.0));
    }
    for (k, name) in ["mailboxes", "archive", "flag", "reply"].iter().enumerate() {
        els.push(button(name, 24.0 + k as f64 * 92.0, 740.0, 60.0, 44.0));
    }
    Layout::new(device(), els)
}

fn settings() -> Layout {
    let mut els = vec![label("title", "Settings", 16.0, 54.0, 343.0, 40.0)];
    let rows = ["Wi-Fi", "Bluetooth", "Airplane", "Sounds", "Display", "Privacy", "Battery"];
    for (k, name) in rows.iter().enumerate() {
        let y = 110.0 + k as f64 * 64.0;
        els.push(label(&format!("row-{k}"), name, 16.0, y, 260.0, 48.0));
        els.push(button(&format!("toggle-{k}"), 300.0, y + 8.0, 59.0, 32.0));
    }
    els.push(button("done", 137.0, 720.0, 100.0, 44.0));
    Layout::new(device(), els)
}

fn keypad() -> Layout {
    let mut els = vec![label("display", "555 0123", 16.0, 80.0, 343.0, 120.0)];
    let keys = ["1", "2", "3", "4", "5", "6", "7", "8", "9", "*", "0", "#"];
    for (k, key) in keys.iter().enumerate() {
        let (r, c) = (k / 3, k % 3);
        els.push(label(&format!("key-{key}"), key, 24.0 + c as f64 * 113.0, 240.0 + r as f64 * 110.0, 100.0, 96.0));
    }
    els.push(button("call", 137.0, 700.0, 100.0, 70.0));
    Layout::new(device(), els)
}

/// Flat-colored mock screenshot at 1 px per point.
fn screenshot(layout: &Layout) -> Raster {
    let (w, h) = (layout.screen.screen_width as u32, layout.screen.screen_height as u32);
    let mut r = Raster::filled(w, h, 1.0, [242, 242, 247, 255]);
    for (k, e) in layout.elements.iter().enumerate() {
        let rect = r.rect_of(&e.bbox);
        let patch = match &e.text {
            Some(t) => render_text_patch(t, rect.width(), rect.height(), [255, 255, 255], [28, 28, 30], 1.0)
                .unwrap_or_else(|_| Raster::filled(rect.width(), rect.height(), 1.0, [255, 255, 255, 255])),
            None => {
                let hue = [[0, 122, 255, 255], [52, 199, 89, 255], [255, 149, 0, 255], [175, 82, 222, 255]];
                Raster::filled(rect.width(), rect.height(), 1.0, hue[k % hue.len()])
            }
        };
        r.blit(&patch, rect.x0, rect.y0);
    }
    r
}

fn calibration_log() -> reflow_core::CalibrationSession {
    let dev = device();
    let truth = FittsModel { a: 0.18, b: 0.12, rest_x: 230.0, rest_y: 640.0, rest_z: 140.0 };
    let centers = grid_centers(&dev, DEFAULT_GRID_COLS, DEFAULT_GRID_ROWS);
    let offset = |k: usize| {
        let c = centers[k % centers.len()];
        // error grows toward the top of the screen
        let spread = 3.0 + 9.0 * (1.0 - c.y / dev.screen_height);
        let a = k as f64 * 2.399_963;
        (spread * a.cos(), spread * (1.7 * a).sin())
    };
    let noise = |k: usize| 0.015 * ((k as f64) * 0.731).sin();
    synthetic_session(dev, &truth, 2, offset, noise)
}

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "demos".into()));
    std::fs::create_dir_all(&dir).expect("create output directory");
    let put = |name: &str, bytes: &[u8]| io::write_bytes(&Path::new(&dir).join(name), bytes).expect("write demo file");
    for (name, layout) in [("email", email()), ("settings", settings()), ("keypad", keypad())] {
        layout.validate().expect("demo layout is valid");
        assert!(layout.is_overlap_free(), "{name} overlaps");
        put(&format!("{name}.layout.json"), io::to_json(&layout).as_bytes());
        put(&format!("{name}.png"), &screenshot(&layout).encode_png().expect("encode png"));
    }
    put("calibration.json", io::to_json(&calibration_log()).as_bytes());
}
