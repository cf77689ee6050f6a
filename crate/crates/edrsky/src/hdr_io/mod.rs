//! Image and report file I/O: Radiance RGBE, PFM, display-ready PNG
//! exports and CSV metric reports.

pub mod pfm;
pub mod rgbe;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::RadianceImage;
use crate::tonemap::DEFAULT_GAMMA;

/// Supported on-disk image containers. RGBE and PFM round-trip at their
/// native precision; PNG8 is export-only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFileFormat {
    Rgbe,
    Pfm,
    Png8,
}

impl ImageFileFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()) {
            Some(ext) if ext == "hdr" || ext == "pic" => Ok(ImageFileFormat::Rgbe),
            Some(ext) if ext == "pfm" => Ok(ImageFileFormat::Pfm),
            Some(ext) if ext == "png" => Ok(ImageFileFormat::Png8),
            other => Err(Error::InvalidParameter(format!(
                "cannot infer image format from extension {other:?} of {}",
                path.display()
            ))),
        }
    }
}

/// Reads an RGBE or PFM file into linear radiance.
pub fn read_hdr(path: impl AsRef<Path>) -> Result<RadianceImage> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    match ImageFileFormat::from_path(path)? {
        ImageFileFormat::Rgbe => rgbe::read(&mut reader),
        ImageFileFormat::Pfm => pfm::read(&mut reader),
        ImageFileFormat::Png8 => Err(Error::InvalidParameter(
            "PNG8 is export-only, cannot read radiance from it".into(),
        )),
    }
}

/// Writes an image in the requested container. The write is atomic:
/// data goes to a temporary sibling first, then a rename.
pub fn write_hdr(img: &RadianceImage, path: impl AsRef<Path>, format: ImageFileFormat) -> Result<()> {
    let path = path.as_ref();
    atomic_write(path, |file| {
        let mut writer = BufWriter::new(file);
        match format {
            ImageFileFormat::Rgbe => rgbe::write(img, &mut writer)?,
            ImageFileFormat::Pfm => pfm::write(img, &mut writer)?,
            ImageFileFormat::Png8 => write_png8(img, &mut writer, DEFAULT_GAMMA)?,
        }
        writer.flush().map_err(|e| Error::io(path, e))
    })
}

/// Writes an image to the format implied by the file extension.
pub fn write_auto(img: &RadianceImage, path: impl AsRef<Path>) -> Result<()> {
    let format = ImageFileFormat::from_path(path.as_ref())?;
    write_hdr(img, path, format)
}

/// Gamma-encodes (2.2 by default), clamps to [0, 1] and quantizes to
/// 8-bit RGB.
pub fn write_png8(img: &RadianceImage, writer: &mut impl Write, gamma: f64) -> Result<()> {
    let inv = 1.0 / gamma;
    let bytes: Vec<u8> = img
        .pixels()
        .iter()
        .flat_map(|px| {
            px.iter().map(move |c| {
                let v = (*c as f64).powf(inv).clamp(0.0, 1.0);
                (v * 255.0).round() as u8
            })
        })
        .collect();
    let encoder = image::codecs::png::PngEncoder::new(writer);
    image::ImageEncoder::write_image(
        encoder,
        &bytes,
        img.width() as u32,
        img.height() as u32,
        image::ExtendedColorType::Rgb8,
    )
    .map_err(|e| Error::format("png", e.to_string()))
}

/// Writes an 8-bit single-channel PNG (used for label maps).
pub fn write_png8_gray(data: &[u8], width: usize, height: usize, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if data.len() != width * height {
        return Err(Error::ShapeMismatch(format!(
            "label data {} vs {}x{}",
            data.len(),
            width,
            height
        )));
    }
    atomic_write(path, |file| {
        let encoder = image::codecs::png::PngEncoder::new(file);
        image::ImageEncoder::write_image(
            encoder,
            data,
            width as u32,
            height as u32,
            image::ExtendedColorType::L8,
        )
        .map_err(|e| Error::format("png", e.to_string()))
    })
}

/// One row of a metric report: label plus named values in column order.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub values: Vec<(String, f64)>,
}

/// Writes rows as RFC-4180 CSV with a header, full float precision.
/// Column order follows the first row; all rows must share it.
pub fn write_report(rows: &[ReportRow], path: impl AsRef<Path>) -> Result<()> {
    write_report_with_columns(rows, rows.first().map(row_columns).unwrap_or_default(), path)
}

fn row_columns(row: &ReportRow) -> Vec<String> {
    row.values.iter().map(|(k, _)| k.clone()).collect()
}

pub fn write_report_with_columns(
    rows: &[ReportRow],
    columns: Vec<String>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    atomic_write(path, |file| {
        let mut writer = csv::Writer::from_writer(file);
        let mut header = vec!["label".to_string()];
        header.extend(columns.iter().cloned());
        writer.write_record(&header).map_err(|e| Error::format("csv", e.to_string()))?;
        for row in rows {
            if row_columns(row) != columns {
                return Err(Error::ShapeMismatch(format!(
                    "report row '{}' does not match header columns",
                    row.label
                )));
            }
            let mut record = vec![row.label.clone()];
            // `{}` on f64 prints the shortest representation that parses
            // back to the same value.
            record.extend(row.values.iter().map(|(_, v)| format!("{v}")));
            writer.write_record(&record).map_err(|e| Error::format("csv", e.to_string()))?;
        }
        writer.flush().map_err(|e| Error::io(path, e))
    })
}

/// Parses a report written by [`write_report`]; used by tests and the
/// CLI to re-ingest sweep output.
pub fn read_report(path: impl AsRef<Path>) -> Result<Vec<ReportRow>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(BufReader::new(file));
    let headers: Vec<String> =
        reader.headers().map_err(|e| Error::format("csv", e.to_string()))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::format("csv", e.to_string()))?;
        let label = record.get(0).unwrap_or_default().to_string();
        let mut values = Vec::new();
        for (i, name) in headers.iter().enumerate().skip(1) {
            let raw = record.get(i).unwrap_or_default();
            let v: f64 = raw
                .parse()
                .map_err(|_| Error::format("csv", format!("bad float '{raw}' in column {name}")))?;
            values.push((name.clone(), v));
        }
        rows.push(ReportRow { label, values });
    }
    Ok(rows)
}

/// Write-to-temp-then-rename so readers never observe partial output.
pub fn atomic_write(path: &Path, write_fn: impl FnOnce(&mut File) -> Result<()>) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let tmp: PathBuf = dir.join(format!(
        ".{}.tmp{}",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out"),
        std::process::id()
    ));
    let mut file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let result = write_fn(&mut file);
    drop(file);
    match result {
        Ok(()) => std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e)),
        Err(e) => {
            let _ = std::fs::remove_file(&tmp);
            Err(e)
        }
    }
}
