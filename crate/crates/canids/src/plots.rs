//! Static plot rendering for reports: confusion heatmaps, ROC curves and
//! rho-vs-window traces, drawn directly into PNGs.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::eval::ConfusionMatrix;
use crate::fusion::Verdict;
use crate::segment::Label;

const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const BLACK: Rgb<u8> = Rgb([20, 20, 20]);
const BLUE: Rgb<u8> = Rgb([38, 90, 200]);
const RED: Rgb<u8> = Rgb([200, 40, 40]);
const GRAY: Rgb<u8> = Rgb([190, 190, 190]);
const SHADE: Rgb<u8> = Rgb([250, 226, 226]);

fn save(img: RgbImage, path: &Path) -> Result<()> {
    img.save(path)
        .map_err(|e| Error::Format(format!("failed to write plot {}: {e}", path.display())))
}

fn draw_line(img: &mut RgbImage, x0: f64, y0: f64, x1: f64, y1: f64, color: Rgb<u8>) {
    let steps = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let x = x0 + t * (x1 - x0);
        let y = y0 + t * (y1 - y0);
        if x >= 0.0 && y >= 0.0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

/// 2x2 heatmap; cell intensity scales with its share of all windows.
/// Layout: rows = actual (attack-free, attack), cols = predicted.
pub fn render_confusion_heatmap(m: &ConfusionMatrix, path: &Path) -> Result<()> {
    let size = 240u32;
    let cell = size / 2;
    let mut img = RgbImage::from_pixel(size, size, WHITE);
    let total = m.total().max(1) as f64;
    let cells = [
        [m.true_negatives, m.false_positives],
        [m.false_negatives, m.true_positives],
    ];
    for (row, counts) in cells.iter().enumerate() {
        for (col, &count) in counts.iter().enumerate() {
            let frac = count as f64 / total;
            let intensity = (255.0 - 205.0 * frac) as u8;
            let color = Rgb([intensity, intensity, 255]);
            for y in 0..cell {
                for x in 0..cell {
                    img.put_pixel(col as u32 * cell + x, row as u32 * cell + y, color);
                }
            }
        }
    }
    for k in 0..size {
        img.put_pixel(k, cell, BLACK);
        img.put_pixel(cell, k, BLACK);
    }
    save(img, path)
}

/// ROC curve with the chance diagonal for reference.
pub fn render_roc(scores: &[f64], labels: &[bool], path: &Path) -> Result<()> {
    let size = 256u32;
    let mut img = RgbImage::from_pixel(size, size, WHITE);
    let last = (size - 1) as f64;
    draw_line(&mut img, 0.0, last, last, 0.0, GRAY);

    let positives = labels.iter().filter(|&&l| l).count().max(1) as f64;
    let negatives = (labels.len() - labels.iter().filter(|&&l| l).count()).max(1) as f64;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let (mut tp, mut fp) = (0f64, 0f64);
    let (mut px, mut py) = (0.0, last);
    let mut prev_score = f64::INFINITY;
    for &i in &order {
        if scores[i] != prev_score {
            let x = fp / negatives * last;
            let y = last - tp / positives * last;
            draw_line(&mut img, px, py, x, y, BLUE);
            px = x;
            py = y;
            prev_score = scores[i];
        }
        if labels[i] {
            tp += 1.0;
        } else {
            fp += 1.0;
        }
    }
    draw_line(&mut img, px, py, last, 0.0, BLUE);
    for k in 0..size {
        img.put_pixel(k, size - 1, BLACK);
        img.put_pixel(0, k, BLACK);
    }
    save(img, path)
}

/// Correlation coefficient per window with the decision threshold; windows
/// with attack ground truth get a shaded background.
pub fn render_rho_trace(verdicts: &[Verdict], threshold: f64, path: &Path) -> Result<()> {
    let n = verdicts.len().max(2);
    let width = (n as u32).clamp(200, 2000);
    let height = 240u32;
    let mut img = RgbImage::from_pixel(width, height, WHITE);
    let x_of = |i: usize| i as f64 / (n - 1) as f64 * (width - 1) as f64;
    // rho in [-1, 1] maps top-to-bottom
    let y_of = |rho: f64| (1.0 - rho) / 2.0 * (height - 1) as f64;

    for (i, v) in verdicts.iter().enumerate() {
        if v.label == Some(Label::Attack) {
            let x = x_of(i) as u32;
            for y in 0..height {
                img.put_pixel(x.min(width - 1), y, SHADE);
            }
        }
    }
    let ty = y_of(threshold);
    draw_line(&mut img, 0.0, ty, (width - 1) as f64, ty, RED);

    let mut prev: Option<(f64, f64)> = None;
    for (i, v) in verdicts.iter().enumerate() {
        match v.pearson_rho {
            Some(rho) => {
                let pt = (x_of(i), y_of(rho.clamp(-1.0, 1.0)));
                if let Some((px, py)) = prev {
                    draw_line(&mut img, px, py, pt.0, pt.1, BLUE);
                }
                prev = Some(pt);
            }
            None => prev = None,
        }
    }
    for k in 0..width {
        img.put_pixel(k, height - 1, BLACK);
    }
    for k in 0..height {
        img.put_pixel(0, k, BLACK);
    }
    save(img, path)
}
