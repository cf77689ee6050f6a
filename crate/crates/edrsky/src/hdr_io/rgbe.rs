//! Radiance RGBE (.hdr) reader and writer.
//!
//! Decode follows the shared-exponent rule `value = mantissa/256 *
//! 2^(exponent-128)`; an exponent byte of 0 means a black pixel. Both
//! new-style RLE scanlines and flat scanlines are handled.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::image::RadianceImage;

const FORMAT: &str = "rgbe";

#[inline]
pub fn decode_pixel(rgbe: [u8; 4]) -> [f32; 3] {
    let e = rgbe[3];
    if e == 0 {
        return [0.0; 3];
    }
    // mantissa/256 * 2^(e-128)
    let scale = f64::powi(2.0, e as i32 - 128) / 256.0;
    [
        (rgbe[0] as f64 * scale) as f32,
        (rgbe[1] as f64 * scale) as f32,
        (rgbe[2] as f64 * scale) as f32,
    ]
}

#[inline]
pub fn encode_pixel(px: [f32; 3]) -> [u8; 4] {
    let max = px[0].max(px[1]).max(px[2]) as f64;
    if max < 1e-38 {
        return [0, 0, 0, 0];
    }
    // frexp: max = m * 2^e with m in [0.5, 1)
    let mut e = max.log2().floor() as i32 + 1;
    let mut scale = 256.0 / f64::powi(2.0, e);
    if max * scale >= 256.0 {
        // log2 rounding put us one exponent low
        e += 1;
        scale = 256.0 / f64::powi(2.0, e);
    }
    let mut m = [
        (px[0] as f64 * scale).round() as u32,
        (px[1] as f64 * scale).round() as u32,
        (px[2] as f64 * scale).round() as u32,
    ];
    if m.iter().any(|&v| v > 255) {
        // rounding carried the max channel to 256
        e += 1;
        scale = 256.0 / f64::powi(2.0, e);
        m = [
            (px[0] as f64 * scale).round() as u32,
            (px[1] as f64 * scale).round() as u32,
            (px[2] as f64 * scale).round() as u32,
        ];
    }
    [m[0] as u8, m[1] as u8, m[2] as u8, (e + 128) as u8]
}

pub fn read(reader: &mut impl BufRead) -> Result<RadianceImage> {
    let mut line = String::new();
    read_line(reader, &mut line)?;
    if !line.starts_with("#?") {
        return Err(Error::format(FORMAT, "missing #?RADIANCE magic"));
    }
    // Header lines until the blank separator.
    let mut format_seen = false;
    loop {
        read_line(reader, &mut line)?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            break;
        }
        if let Some(fmt) = trimmed.strip_prefix("FORMAT=") {
            if fmt != "32-bit_rle_rgbe" {
                return Err(Error::format(FORMAT, format!("unsupported format {fmt}")));
            }
            format_seen = true;
        }
    }
    if !format_seen {
        return Err(Error::format(FORMAT, "missing FORMAT line"));
    }
    read_line(reader, &mut line)?;
    let (width, height) = parse_resolution(line.trim())?;

    let mut pixels = Vec::with_capacity(width * height);
    let mut scanline = vec![[0u8; 4]; width];
    for _ in 0..height {
        read_scanline(reader, &mut scanline)?;
        pixels.extend(scanline.iter().map(|rgbe| decode_pixel(*rgbe)));
    }
    RadianceImage::from_pixels(width, height, pixels)
}

fn read_line(reader: &mut impl BufRead, line: &mut String) -> Result<()> {
    line.clear();
    let n = reader
        .read_line(line)
        .map_err(|e| Error::format(FORMAT, format!("header read failed: {e}")))?;
    if n == 0 {
        return Err(Error::format(FORMAT, "unexpected end of header"));
    }
    Ok(())
}

fn parse_resolution(line: &str) -> Result<(usize, usize)> {
    // Only the standard "-Y h +X w" orientation is supported.
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != "-Y" || parts[2] != "+X" {
        return Err(Error::format(FORMAT, format!("unsupported resolution line '{line}'")));
    }
    let height: usize = parts[1]
        .parse()
        .map_err(|_| Error::format(FORMAT, format!("bad height '{}'", parts[1])))?;
    let width: usize = parts[3]
        .parse()
        .map_err(|_| Error::format(FORMAT, format!("bad width '{}'", parts[3])))?;
    if width == 0 || height == 0 {
        return Err(Error::format(FORMAT, "zero-sized image"));
    }
    Ok((width, height))
}

fn read_exact(reader: &mut impl BufRead, buf: &mut [u8]) -> Result<()> {
    reader
        .read_exact(buf)
        .map_err(|e| Error::format(FORMAT, format!("truncated scanline: {e}")))
}

fn read_scanline(reader: &mut impl BufRead, scanline: &mut [[u8; 4]]) -> Result<()> {
    let width = scanline.len();
    let mut head = [0u8; 4];
    read_exact(reader, &mut head)?;
    let new_rle = head[0] == 2
        && head[1] == 2
        && ((head[2] as usize) << 8 | head[3] as usize) == width
        && (8..=32767).contains(&width);
    if !new_rle {
        // Flat scanline: `head` is the first pixel.
        scanline[0] = head;
        for px in scanline.iter_mut().skip(1) {
            read_exact(reader, px)?;
        }
        return Ok(());
    }
    // New-style RLE: four component planes.
    for c in 0..4 {
        let mut x = 0;
        while x < width {
            let mut code = [0u8; 1];
            read_exact(reader, &mut code)?;
            if code[0] > 128 {
                let run = code[0] as usize - 128;
                let mut value = [0u8; 1];
                read_exact(reader, &mut value)?;
                if x + run > width {
                    return Err(Error::format(FORMAT, "RLE run overflows scanline"));
                }
                for px in scanline.iter_mut().skip(x).take(run) {
                    px[c] = value[0];
                }
                x += run;
            } else {
                let count = code[0] as usize;
                if count == 0 || x + count > width {
                    return Err(Error::format(FORMAT, "bad RLE literal count"));
                }
                let mut literals = vec![0u8; count];
                read_exact(reader, &mut literals)?;
                for (px, v) in scanline.iter_mut().skip(x).zip(&literals) {
                    px[c] = *v;
                }
                x += count;
            }
        }
    }
    Ok(())
}

pub fn write(img: &RadianceImage, writer: &mut impl Write) -> Result<()> {
    let wrap = |e: std::io::Error| Error::format(FORMAT, format!("write failed: {e}"));
    writer.write_all(b"#?RADIANCE\n").map_err(wrap)?;
    writer.write_all(b"FORMAT=32-bit_rle_rgbe\n\n").map_err(wrap)?;
    writer
        .write_all(format!("-Y {} +X {}\n", img.height(), img.width()).as_bytes())
        .map_err(wrap)?;
    let width = img.width();
    let rle_capable = (8..=32767).contains(&width);
    for row in img.pixels().chunks(width) {
        let encoded: Vec<[u8; 4]> = row.iter().map(|px| encode_pixel(*px)).collect();
        if rle_capable {
            write_rle_scanline(&encoded, writer).map_err(wrap)?;
        } else {
            for rgbe in &encoded {
                writer.write_all(rgbe).map_err(wrap)?;
            }
        }
    }
    Ok(())
}

fn write_rle_scanline(scanline: &[[u8; 4]], writer: &mut impl Write) -> std::io::Result<()> {
    let width = scanline.len();
    writer.write_all(&[2, 2, (width >> 8) as u8, (width & 0xff) as u8])?;
    for c in 0..4 {
        let plane: Vec<u8> = scanline.iter().map(|px| px[c]).collect();
        write_rle_plane(&plane, writer)?;
    }
    Ok(())
}

fn write_rle_plane(plane: &[u8], writer: &mut impl Write) -> std::io::Result<()> {
    let mut x = 0;
    while x < plane.len() {
        // Measure the run starting at x.
        let mut run = 1;
        while x + run < plane.len() && plane[x + run] == plane[x] && run < 127 {
            run += 1;
        }
        if run >= 4 {
            writer.write_all(&[128 + run as u8, plane[x]])?;
            x += run;
        } else {
            // Collect literals until the next long run.
            let start = x;
            let mut end = x + run;
            while end < plane.len() && end - start < 128 {
                let mut next_run = 1;
                while end + next_run < plane.len()
                    && plane[end + next_run] == plane[end]
                    && next_run < 127
                {
                    next_run += 1;
                }
                if next_run >= 4 {
                    break;
                }
                end += next_run;
            }
            let end = end.min(start + 128);
            writer.write_all(&[(end - start) as u8])?;
            writer.write_all(&plane[start..end])?;
            x = end;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn shared_exponent_decode() {
        assert_eq!(decode_pixel([128, 128, 128, 129]), [1.0, 1.0, 1.0]);
        assert_eq!(decode_pixel([0, 0, 0, 0]), [0.0, 0.0, 0.0]);
        assert_eq!(decode_pixel([255, 0, 0, 0]), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn unit_white_encodes_canonically() {
        assert_eq!(encode_pixel([1.0, 1.0, 1.0]), [128, 128, 128, 129]);
    }

    #[test]
    fn encode_decode_quantization_bound() {
        // Error relative to the pixel's max channel stays within 1/256.
        let mut state = 0x1234_5678u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) as f32
        };
        for _ in 0..10_000 {
            let scale = f64::powi(2.0, (next() * 30.0) as i32 - 10) as f32;
            let px = [next() * scale, next() * scale, next() * scale];
            let back = decode_pixel(encode_pixel(px));
            let max = px[0].max(px[1]).max(px[2]);
            for c in 0..3 {
                assert!(
                    (back[c] - px[c]).abs() <= max / 256.0 + 1e-30,
                    "{px:?} -> {back:?}"
                );
            }
        }
    }

    #[test]
    fn stream_roundtrip_flat_and_rle_widths() {
        for width in [4usize, 33] {
            let height = 5;
            let pixels: Vec<[f32; 3]> = (0..width * height)
                .map(|i| {
                    let v = (i as f32 * 0.37 + 0.1) % 7.3;
                    [v, v * 0.5, v * 2.0]
                })
                .collect();
            let img = RadianceImage::from_pixels(width, height, pixels).unwrap();
            let mut bytes = Vec::new();
            write(&img, &mut bytes).unwrap();
            let back = read(&mut Cursor::new(bytes)).unwrap();
            assert_eq!(back.width(), width);
            for (a, b) in img.pixels().iter().zip(back.pixels()) {
                let max = a[0].max(a[1]).max(a[2]);
                for c in 0..3 {
                    assert!((a[c] - b[c]).abs() <= max / 256.0 + 1e-30);
                }
            }
        }
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        assert!(read(&mut Cursor::new(b"not a radiance file".to_vec())).is_err());
        assert!(read(&mut Cursor::new(b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y 2 +X 2\n\x01".to_vec()))
            .is_err());
        assert!(read(&mut Cursor::new(b"#?RADIANCE\n\n-Y 2 +X 2\n".to_vec())).is_err());
    }
}
