//! PNG rendering of certified maps and multi-K overlays.

use crate::error::{Error, Result};
use crate::types::{CertifiedMap, ImageTensor, Label};

pub type Rgb = [u8; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct Palette {
    pub abstain: Rgb,
    pub zero: Rgb,
    /// Gap between side-by-side panels.
    pub separator: Rgb,
}

impl Default for Palette {
    fn default() -> Self {
        Self {
            abstain: [128, 128, 128],
            zero: [255, 255, 255],
            separator: [0, 0, 0],
        }
    }
}

impl Palette {
    /// Colour of a certified-ONE pixel at `k_percent`; lower K is darker.
    pub fn one(&self, k_percent: f64) -> Rgb {
        let t = (k_percent / 100.0).clamp(0.0, 1.0);
        [
            (10.0 + 150.0 * t).round() as u8,
            (20.0 + 170.0 * t).round() as u8,
            (90.0 + 150.0 * t).round() as u8,
        ]
    }

    pub fn label(&self, label: Label, k_percent: f64) -> Rgb {
        match label {
            Label::One => self.one(k_percent),
            Label::Zero => self.zero,
            Label::Abstain => self.abstain,
        }
    }
}

/// Row-major 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, fill: Rgb) -> Self {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            pixels.extend_from_slice(&fill);
        }
        Self { width, height, pixels }
    }

    pub fn get(&self, row: usize, col: usize) -> Rgb {
        let i = (row * self.width + col) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn put(&mut self, row: usize, col: usize, rgb: Rgb) {
        let i = (row * self.width + col) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Nearest-neighbour enlargement by an integer factor.
    pub fn upscale(&self, factor: usize) -> Self {
        let factor = factor.max(1);
        let mut out = Self::new(self.width * factor, self.height * factor, [0, 0, 0]);
        for r in 0..out.height {
            for c in 0..out.width {
                out.put(r, c, self.get(r / factor, c / factor));
            }
        }
        out
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        encode_png(self)
    }
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut buf, img.width as u32, img.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header()?;
        writer.write_image_data(&img.pixels)?;
        writer.finish()?;
    }
    Ok(buf)
}

pub fn render_map(cert: &CertifiedMap, palette: &Palette) -> RgbImage {
    let mut out = RgbImage::new(cert.width, cert.height, palette.abstain);
    for (p, &label) in cert.labels.iter().enumerate() {
        out.put(p / cert.width, p % cert.width, palette.label(label, cert.k_percent));
    }
    out
}

/// Combines maps at several K: each pixel takes the ONE colour of the
/// smallest K at which it is certified ONE, otherwise its label in the
/// largest-K map.
pub fn render_overlay(certs: &[CertifiedMap], palette: &Palette) -> Result<RgbImage> {
    let first = certs
        .first()
        .ok_or_else(|| Error::Config("overlay needs at least one map".into()))?;
    for c in certs {
        if (c.height, c.width) != (first.height, first.width) {
            return Err(Error::Shape {
                expected: format!("{}x{}", first.height, first.width),
                actual: format!("{}x{}", c.height, c.width),
            });
        }
    }
    let mut order: Vec<&CertifiedMap> = certs.iter().collect();
    order.sort_by(|a, b| a.k_percent.total_cmp(&b.k_percent));
    let largest = order[order.len() - 1];
    let mut out = RgbImage::new(first.width, first.height, palette.abstain);
    for p in 0..first.height * first.width {
        let rgb = order
            .iter()
            .find(|c| c.labels[p] == Label::One)
            .map(|c| palette.one(c.k_percent))
            .unwrap_or_else(|| palette.label(largest.labels[p], largest.k_percent));
        out.put(p / first.width, p % first.width, rgb);
    }
    Ok(out)
}

/// Renders an image with values clamped to [0, 1]. Single-channel images
/// are shown in grey.
pub fn render_input(x: &ImageTensor) -> RgbImage {
    let mut out = RgbImage::new(x.width(), x.height(), [0, 0, 0]);
    let to_u8 = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    for r in 0..x.height() {
        for c in 0..x.width() {
            let rgb = if x.channels() >= 3 {
                [to_u8(x.get(0, r, c)), to_u8(x.get(1, r, c)), to_u8(x.get(2, r, c))]
            } else {
                let g = to_u8(x.get(0, r, c));
                [g, g, g]
            };
            out.put(r, c, rgb);
        }
    }
    out
}

/// Places panels left to right with a one-pixel separator, top-aligned.
pub fn side_by_side(panels: &[RgbImage], palette: &Palette) -> RgbImage {
    let height = panels.iter().map(|p| p.height).max().unwrap_or(0);
    let width = panels.iter().map(|p| p.width).sum::<usize>() + panels.len().saturating_sub(1);
    let mut out = RgbImage::new(width, height, palette.separator);
    let mut x0 = 0;
    for panel in panels {
        for r in 0..panel.height {
            for c in 0..panel.width {
                out.put(r, x0 + c, panel.get(r, c));
            }
        }
        x0 += panel.width + 1;
    }
    out
}

/// Input, one panel per K in ascending order, then the overlay.
pub fn render_panels(x: Option<&ImageTensor>, certs: &[CertifiedMap], palette: &Palette, scale: usize) -> Result<RgbImage> {
    let mut order: Vec<&CertifiedMap> = certs.iter().collect();
    order.sort_by(|a, b| a.k_percent.total_cmp(&b.k_percent));
    let mut panels = Vec::with_capacity(certs.len() + 2);
    if let Some(x) = x {
        panels.push(render_input(x).upscale(scale));
    }
    for c in &order {
        panels.push(render_map(c, palette).upscale(scale));
    }
    panels.push(render_overlay(certs, palette)?.upscale(scale));
    Ok(side_by_side(&panels, palette))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Correction;

    fn cert(k: f64, labels: &str) -> CertifiedMap {
        let labels: Vec<Label> = labels.chars().map(|c| Label::from_char(c).unwrap()).collect();
        let n = labels.len();
        CertifiedMap {
            height: 1,
            width: n,
            labels,
            radius: 0.1,
            sigma: 0.15,
            tau: 0.75,
            alpha: 0.001,
            k_percent: k,
            n_samples: 100,
            counts_one: vec![0; n],
            threshold: 90,
            correction: Correction::Bonferroni,
        }
    }

    fn brightness(rgb: Rgb) -> u32 {
        rgb.iter().map(|&v| v as u32).sum()
    }

    #[test]
    fn lower_k_is_strictly_darker() {
        let p = Palette::default();
        let ks = [5.0, 10.0, 25.0, 50.0];
        for w in ks.windows(2) {
            let (a, b) = (p.one(w[0]), p.one(w[1]));
            for ch in 0..3 {
                assert!(a[ch] < b[ch], "{a:?} vs {b:?}");
            }
        }
        assert!(brightness(p.one(100.0)) < brightness(p.zero));
        assert_ne!(p.one(50.0), p.abstain);
    }

    #[test]
    fn map_colours_follow_labels() {
        let p = Palette::default();
        let img = render_map(&cert(25.0, "10."), &p);
        assert_eq!(img.get(0, 0), p.one(25.0));
        assert_eq!(img.get(0, 1), p.zero);
        assert_eq!(img.get(0, 2), p.abstain);
    }

    #[test]
    fn overlay_prefers_smallest_k() {
        let p = Palette::default();
        let certs = [cert(50.0, "1110."), cert(10.0, ".1..."), cert(25.0, "11...")];
        let img = render_overlay(&certs, &p).unwrap();
        assert_eq!(img.get(0, 0), p.one(25.0));
        assert_eq!(img.get(0, 1), p.one(10.0));
        assert_eq!(img.get(0, 2), p.one(50.0));
        assert_eq!(img.get(0, 3), p.zero);
        assert_eq!(img.get(0, 4), p.abstain);
        assert!(render_overlay(&[], &p).is_err());
        assert!(render_overlay(&[cert(5.0, "1"), cert(10.0, "11")], &p).is_err());
    }

    #[test]
    fn png_round_trips() {
        let p = Palette::default();
        let img = render_panels(None, &[cert(5.0, "10."), cert(50.0, "110")], &p, 3).unwrap();
        assert_eq!(img.width, 3 * 3 * 3 + 2);
        let bytes = img.to_png().unwrap();
        let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
        let mut reader = decoder.read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size().unwrap()];
        let info = reader.next_frame(&mut buf).unwrap();
        assert_eq!((info.width as usize, info.height as usize), (img.width, img.height));
        assert_eq!(&buf[..info.buffer_size()], &img.pixels[..]);
    }

    #[test]
    fn input_is_clamped() {
        let x = ImageTensor::new(3, 1, 2, vec![-1.0, 0.5, 2.0, 0.0, 1.0, 0.25]).unwrap();
        let img = render_input(&x);
        assert_eq!(img.get(0, 0), [0, 255, 255]);
        assert_eq!(img.get(0, 1), [128, 0, 64]);
    }
}
