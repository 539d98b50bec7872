#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sqpalette::{RawImage, RawPixel, RngStream};

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sqpalette"));
    cmd.env("RUST_LOG", "warn");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn save_png(img: &RawImage, path: &Path) {
    let data: Vec<u8> = img.pixels().iter().flat_map(|p| [p.r, p.g, p.b]).collect();
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, data).unwrap();
    buf.save(path).unwrap();
}

pub fn write_fixture(dir: &Path, name: &str, img: &RawImage) -> PathBuf {
    let path = dir.join(name);
    save_png(img, &path);
    path
}

/// Quadrants of four saturated colors.
pub fn four_colors(w: usize, h: usize) -> RawImage {
    let colors = [
        RawPixel::new(220, 20, 60),
        RawPixel::new(30, 144, 255),
        RawPixel::new(255, 215, 0),
        RawPixel::new(46, 139, 87),
    ];
    RawImage::from_fn(w, h, |x, y| {
        colors[usize::from(x >= w / 2) + 2 * usize::from(y >= h / 2)]
    })
    .unwrap()
}

/// A smooth photo-like scene: sky gradient, a sun disc, textured ground, and
/// mild deterministic noise.
pub fn scene(w: usize, h: usize, seed: u64) -> RawImage {
    let mut rng = RngStream::new(seed);
    let noise: Vec<f64> = (0..w * h).map(|_| rng.unit() * 2.0 - 1.0).collect();
    RawImage::from_fn(w, h, |x, y| {
        let (fx, fy) = (x as f64 / w as f64, y as f64 / h as f64);
        let n = noise[y * w + x] * 6.0;
        let (r, g, b) = if fy < 0.55 {
            let (sx, sy) = (fx - 0.7, fy - 0.2);
            if sx * sx + sy * sy < 0.01 {
                (250.0, 220.0 - 80.0 * fy, 90.0)
            } else {
                (70.0 + 90.0 * fy, 120.0 + 80.0 * fy, 230.0 - 40.0 * fy)
            }
        } else {
            let stripe = ((fx * 12.0 + fy * 5.0).sin() + 1.0) * 0.5;
            (
                60.0 + 80.0 * stripe,
                110.0 + 60.0 * (1.0 - fy),
                40.0 + 30.0 * stripe,
            )
        };
        let c = |v: f64| (v + n).round().clamp(0.0, 255.0) as u8;
        RawPixel::new(c(r), c(g), c(b))
    })
    .unwrap()
}

/// 500 + 500 points jittered by at most 0.02 (per channel, in normalized
/// units) around two gray centers, as an image.
pub fn two_clusters_image(seed: u64) -> RawImage {
    let mut rng = RngStream::new(seed);
    let jitter = |rng: &mut RngStream, c: f64| {
        let v = c * 255.0 + (rng.unit() * 2.0 - 1.0) * 0.02 * 255.0;
        v.round().clamp(0.0, 255.0) as u8
    };
    let pixels = (0..1000)
        .map(|i| {
            let c = if i % 2 == 0 { 0.1 } else { 0.9 };
            RawPixel::new(
                jitter(&mut rng, c),
                jitter(&mut rng, c),
                jitter(&mut rng, c),
            )
        })
        .collect();
    RawImage::new(40, 25, pixels).unwrap()
}
