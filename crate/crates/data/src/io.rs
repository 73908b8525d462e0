//! PNG images and the CSV dataset manifest.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use benet_core::Label;

use crate::domain::{Domain, Split};
use crate::error::{DataError, Result};
use crate::Image;

/// Write a `[3, H, W]` image in `[0,1]` as 8-bit RGB PNG.
pub fn save_png(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (h, w) = match image.shape() {
        &[3, h, w] => (h, w),
        s => {
            return Err(DataError::Image {
                path: path.display().to_string(),
                msg: format!("expected a [3, H, W] image, got {s:?}"),
            })
        }
    };
    let d = image.data();
    let mut buf = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = [0, 1, 2].map(|c| (d[(c * h + y) * w + x].clamp(0.0, 1.0) * 255.0).round() as u8);
            buf.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    buf.save_with_format(path, image::ImageFormat::Png).map_err(|e| DataError::Image {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

/// Read any PNG as RGB, scaled to `[0,1]`.
pub fn load_png(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let img = image::open(path)
        .map_err(|e| DataError::Image {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0f32; 3 * h * w];
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            data[(c * h + y as usize) * w + x as usize] = px.0[c] as f32 / 255.0;
        }
    }
    Ok(Image::new(&[3, h, w], data)?)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    /// Relative to the manifest's directory.
    pub path: PathBuf,
    pub label: Label,
    pub domain: Domain,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
}

pub const MANIFEST_HEADER: [&str; 4] = ["path", "label", "domain", "split"];

impl Manifest {
    /// Paths unique, labels consistent with domains.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (i, r) in self.rows.iter().enumerate() {
            if !seen.insert(&r.path) {
                return Err(DataError::Invalid(format!(
                    "duplicate manifest path {} (row {})",
                    r.path.display(),
                    i + 1
                )));
            }
            if r.label != r.domain.label() {
                return Err(DataError::Invalid(format!(
                    "row {}: label {} inconsistent with domain {}",
                    i + 1,
                    r.label,
                    r.domain
                )));
            }
        }
        Ok(())
    }

    pub fn rows_in(&self, split: Split) -> impl Iterator<Item = &ManifestRow> {
        self.rows.iter().filter(move |r| r.split == split)
    }
}

pub fn write_manifest(path: impl AsRef<Path>, manifest: &Manifest) -> Result<()> {
    manifest.validate()?;
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(MANIFEST_HEADER).map_err(|e| csv_err(path, e))?;
    for r in &manifest.rows {
        let p = r.path.to_string_lossy().replace('\\', "/");
        w.write_record([p.as_str(), &r.label.as_u8().to_string(), r.domain.name(), r.split.name()])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(path: &Path, e: csv::Error) -> DataError {
    let line = e.position().map_or(0, |p| p.line());
    DataError::Parse {
        path: path.display().to_string(),
        line,
        msg: e.to_string(),
    }
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_manifest(&text, &path.display().to_string())
}

/// Parse manifest text; `origin` names the source in error messages.
pub fn parse_manifest(text: &str, origin: &str) -> Result<Manifest> {
    let perr = |line: u64, msg: String| DataError::Parse {
        path: origin.to_string(),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| perr(1, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(perr(1, format!("expected header {}", MANIFEST_HEADER.join(","))));
    }
    let mut manifest = Manifest::default();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| perr(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 4 {
            return Err(perr(line, format!("expected 4 fields, got {}", rec.len())));
        }
        let label = match rec[1].trim() {
            "0" => Label::Real,
            "1" => Label::Fake,
            other => return Err(perr(line, format!("label must be 0 or 1, got '{other}'"))),
        };
        let domain: Domain = rec[2].trim().parse().map_err(|e: DataError| perr(line, e.to_string()))?;
        let split: Split = rec[3].trim().parse().map_err(|e: DataError| perr(line, e.to_string()))?;
        let path = PathBuf::from(rec[0].trim());
        if path.as_os_str().is_empty() {
            return Err(perr(line, "empty path".into()));
        }
        if !seen.insert(path.clone()) {
            return Err(perr(line, format!("duplicate path {}", path.display())));
        }
        if label != domain.label() {
            return Err(perr(line, format!("label {label} inconsistent with domain {domain}")));
        }
        manifest.rows.push(ManifestRow {
            path,
            label,
            domain,
            split,
        });
    }
    Ok(manifest)
}
