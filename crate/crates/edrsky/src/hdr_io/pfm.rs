//! Portable FloatMap (PFM) reader/writer. Lossless 32-bit float
//! container used for bit-exact debugging round trips.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::image::RadianceImage;

const FORMAT: &str = "pfm";

pub fn read(reader: &mut impl BufRead) -> Result<RadianceImage> {
    let magic = read_token(reader)?;
    if magic != "PF" {
        return Err(Error::format(FORMAT, format!("expected 'PF' magic, got '{magic}'")));
    }
    let width: usize = parse_token(reader, "width")?;
    let height: usize = parse_token(reader, "height")?;
    let scale: f64 = parse_token(reader, "scale")?;
    if width == 0 || height == 0 {
        return Err(Error::format(FORMAT, "zero-sized image"));
    }
    let little_endian = scale < 0.0;
    let magnitude = scale.abs();
    let mut raw = vec![0u8; width * height * 3 * 4];
    reader
        .read_exact(&mut raw)
        .map_err(|e| Error::format(FORMAT, format!("truncated pixel data: {e}")))?;
    // PFM rows are stored bottom-to-top.
    let mut pixels = vec![[0.0f32; 3]; width * height];
    for row in 0..height {
        let src_row = height - 1 - row;
        for x in 0..width {
            let base = (src_row * width + x) * 12;
            let mut px = [0.0f32; 3];
            for (c, v) in px.iter_mut().enumerate() {
                let b: [u8; 4] = raw[base + c * 4..base + c * 4 + 4].try_into().unwrap();
                let bits = if little_endian {
                    u32::from_le_bytes(b)
                } else {
                    u32::from_be_bytes(b)
                };
                *v = f32::from_bits(bits);
            }
            if magnitude != 1.0 && magnitude != 0.0 {
                for v in &mut px {
                    *v = (*v as f64 * magnitude) as f32;
                }
            }
            pixels[row * width + x] = px;
        }
    }
    RadianceImage::from_pixels(width, height, pixels)
}

fn read_token(reader: &mut impl BufRead) -> Result<String> {
    let mut token = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        let n = reader
            .read(&mut byte)
            .map_err(|e| Error::format(FORMAT, format!("header read failed: {e}")))?;
        if n == 0 {
            if token.is_empty() {
                return Err(Error::format(FORMAT, "unexpected end of header"));
            }
            break;
        }
        if byte[0].is_ascii_whitespace() {
            if token.is_empty() {
                continue;
            }
            break;
        }
        token.push(byte[0]);
    }
    String::from_utf8(token).map_err(|_| Error::format(FORMAT, "non-UTF8 header token"))
}

fn parse_token<T: std::str::FromStr>(reader: &mut impl BufRead, what: &str) -> Result<T> {
    let token = read_token(reader)?;
    token
        .parse()
        .map_err(|_| Error::format(FORMAT, format!("bad {what} token '{token}'")))
}

pub fn write(img: &RadianceImage, writer: &mut impl Write) -> Result<()> {
    let wrap = |e: std::io::Error| Error::format(FORMAT, format!("write failed: {e}"));
    writer
        .write_all(format!("PF\n{} {}\n-1.0\n", img.width(), img.height()).as_bytes())
        .map_err(wrap)?;
    let (width, height) = (img.width(), img.height());
    for row in (0..height).rev() {
        for x in 0..width {
            let px = img.get(x, row);
            for c in px {
                writer.write_all(&c.to_le_bytes()).map_err(wrap)?;
            }
        }
    }
    Ok(())
}
