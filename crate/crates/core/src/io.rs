//! File formats: 8-bit PGM images and height-field CSV.
//!
//! CSV layout: a header line `# width height x_min x_max y_min y_max`, then
//! one comma-separated line per grid row, row 0 first.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Result, SfsError};
use crate::forward_model::{HeightField, IrradianceImage};
use crate::grid::{Field, GridSpec};

/// Formats a real with `sig` significant digits in the style of C's `%g`.
pub fn fmt_g(value: f64, sig: usize) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    if !value.is_finite() {
        return if value.is_nan() {
            "nan".into()
        } else if value > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sig = sig.max(1);
    let sci = format!("{:.*e}", sig - 1, value);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= sig as i32 {
        let mantissa = trim_zeros(mantissa);
        format!("{mantissa}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{value:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<IrradianceImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| SfsError::io(path, e))?;
    decode_pgm(&bytes)
}

/// Raw 8-bit raster as stored in a PGM file.
#[derive(Debug, Clone, PartialEq)]
pub struct PgmRaster {
    pub width: usize,
    pub height: usize,
    pub levels: Vec<u8>,
    /// World extent `[x_min, x_max, y_min, y_max]` from an `# extent` comment.
    pub extent: Option<[f64; 4]>,
}

impl PgmRaster {
    /// Brightness values `level / 255`, row-major.
    pub fn brightness(&self) -> Vec<f64> {
        self.levels.iter().map(|&v| v as f64 / 255.0).collect()
    }
}

/// Decodes P2 or P5 data into an image on a unit-spaced grid whose `e_max`
/// is the brightest observed pixel.
pub fn decode_pgm(bytes: &[u8]) -> Result<IrradianceImage> {
    let raster = decode_pgm_raster(bytes)?;
    let grid = match raster.extent {
        Some([x0, x1, y0, y1]) => GridSpec::new(raster.width, raster.height, x0, x1, y0, y1)?,
        None => GridSpec::unit(raster.width, raster.height)?,
    };
    let e = Field::from_vec(raster.height, raster.width, raster.brightness())?;
    let e_max = e.max_value();
    if e_max <= 0.0 {
        return Err(SfsError::InvalidInput("image is entirely black".into()));
    }
    IrradianceImage::new(grid, e, e_max)
}

/// Parses P2 or P5 with maxval 255.
pub fn decode_pgm_raster(bytes: &[u8]) -> Result<PgmRaster> {
    let mut cursor = 0usize;
    let mut comments = Vec::new();
    let magic = next_token(bytes, &mut cursor, &mut comments)
        .ok_or_else(|| pgm_err("missing magic number"))?;
    let binary = match magic {
        b"P2" => false,
        b"P5" => true,
        other => {
            return Err(pgm_err(format!(
                "unsupported magic `{}`",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let width = header_number(bytes, &mut cursor, &mut comments, "width")?;
    let height = header_number(bytes, &mut cursor, &mut comments, "height")?;
    let maxval = header_number(bytes, &mut cursor, &mut comments, "maxval")?;
    let extent = comments.iter().find_map(|c| parse_extent(c));
    if maxval != 255 {
        return Err(pgm_err(format!("unsupported maxval {maxval}, only 255")));
    }
    if width == 0 || height == 0 {
        return Err(pgm_err("zero-sized image"));
    }
    let count = width * height;
    let mut levels = Vec::with_capacity(count);
    if binary {
        // Exactly one whitespace byte separates the header from the raster.
        cursor += 1;
        let raster = bytes
            .get(cursor..cursor + count)
            .ok_or_else(|| pgm_err(format!("truncated raster, expected {count} bytes")))?;
        levels.extend_from_slice(raster);
    } else {
        for i in 0..count {
            let tok = next_token(bytes, &mut cursor, &mut comments)
                .ok_or_else(|| pgm_err(format!("truncated raster at sample {i} of {count}")))?;
            let v: u32 = std::str::from_utf8(tok)
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| pgm_err(format!("bad sample `{}`", String::from_utf8_lossy(tok))))?;
            if v > 255 {
                return Err(pgm_err(format!("sample {v} exceeds maxval")));
            }
            levels.push(v as u8);
        }
    }
    Ok(PgmRaster {
        width,
        height,
        levels,
        extent,
    })
}

fn parse_extent(comment: &str) -> Option<[f64; 4]> {
    let rest = comment.trim().strip_prefix("extent")?;
    let vals: Vec<f64> = rest
        .split_whitespace()
        .map(|t| t.parse().ok())
        .collect::<Option<_>>()?;
    vals.try_into().ok()
}

fn pgm_err(msg: impl Into<String>) -> SfsError {
    SfsError::format("PGM", msg)
}

fn header_number(
    bytes: &[u8],
    cursor: &mut usize,
    comments: &mut Vec<String>,
    what: &str,
) -> Result<usize> {
    let tok = next_token(bytes, cursor, comments).ok_or_else(|| pgm_err(format!("missing {what}")))?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| pgm_err(format!("bad {what} `{}`", String::from_utf8_lossy(tok))))
}

/// Next whitespace-delimited token. `#` comments are skipped and collected.
fn next_token<'a>(
    bytes: &'a [u8],
    cursor: &mut usize,
    comments: &mut Vec<String>,
) -> Option<&'a [u8]> {
    loop {
        while *cursor < bytes.len() && bytes[*cursor].is_ascii_whitespace() {
            *cursor += 1;
        }
        if *cursor < bytes.len() && bytes[*cursor] == b'#' {
            let start = *cursor + 1;
            while *cursor < bytes.len() && bytes[*cursor] != b'\n' {
                *cursor += 1;
            }
            comments.push(String::from_utf8_lossy(&bytes[start..*cursor]).into_owned());
            continue;
        }
        break;
    }
    let start = *cursor;
    while *cursor < bytes.len() && !bytes[*cursor].is_ascii_whitespace() {
        *cursor += 1;
    }
    (*cursor > start).then(|| &bytes[start..*cursor])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PgmEncoding {
    Ascii,
    #[default]
    Binary,
}

/// Encodes with maxval 255. The grid extent is kept in an `# extent` comment.
pub fn encode_pgm(img: &IrradianceImage, encoding: PgmEncoding) -> Vec<u8> {
    let (w, h) = (img.grid.width, img.grid.height);
    let g = img.grid;
    let header = format!(
        "{w} {h}\n# extent {} {} {} {}\n255\n",
        fmt_g(g.x_min, 15),
        fmt_g(g.x_max, 15),
        fmt_g(g.y_min, 15),
        fmt_g(g.y_max, 15)
    );
    let levels: Vec<u8> = img
        .e
        .iter()
        .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    match encoding {
        PgmEncoding::Binary => {
            let mut out = format!("P5\n{header}").into_bytes();
            out.extend_from_slice(&levels);
            out
        }
        PgmEncoding::Ascii => {
            let mut out = format!("P2\n{header}");
            for row in levels.chunks(w) {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
            out.into_bytes()
        }
    }
}

pub fn write_pgm(img: &IrradianceImage, path: impl AsRef<Path>) -> Result<()> {
    write_pgm_with(img, path, PgmEncoding::Binary)
}

pub fn write_pgm_with(
    img: &IrradianceImage,
    path: impl AsRef<Path>,
    encoding: PgmEncoding,
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pgm(img, encoding)).map_err(|e| SfsError::io(path, e))
}

pub fn encode_csv(grid: &GridSpec, values: &Field<f64>) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# {} {} {} {} {} {}",
        grid.width,
        grid.height,
        fmt_g(grid.x_min, 6),
        fmt_g(grid.x_max, 6),
        fmt_g(grid.y_min, 6),
        fmt_g(grid.y_max, 6)
    );
    for r in 0..values.rows() {
        let line: Vec<String> = (0..values.cols())
            .map(|c| fmt_g(values[(r, c)], 6))
            .collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Parses the CSV layout into a grid and a matrix. Infinite entries are
/// accepted so that distance dumps round-trip.
pub fn decode_csv(text: &str) -> Result<(GridSpec, Field<f64>)> {
    let err = |msg: String| SfsError::format("CSV", msg);
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| err("empty file".into()))?;
    let header = header
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| err("header must start with `#`".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 6 {
        return Err(err(format!("header needs 6 fields, found {}", fields.len())));
    }
    let width: usize = fields[0].parse().map_err(|_| err("bad width".into()))?;
    let height: usize = fields[1].parse().map_err(|_| err("bad height".into()))?;
    let mut extent = [0.0f64; 4];
    for (slot, tok) in extent.iter_mut().zip(&fields[2..]) {
        *slot = tok.parse().map_err(|_| err(format!("bad extent `{tok}`")))?;
    }
    let grid = GridSpec::new(width, height, extent[0], extent[1], extent[2], extent[3])?;
    let mut data = Vec::with_capacity(grid.len());
    let mut rows = 0usize;
    for (r, line) in lines.enumerate() {
        let before = data.len();
        for tok in line.split(',') {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|_| err(format!("bad value `{}` in row {r}", tok.trim())))?;
            if v.is_nan() {
                return Err(err(format!("NaN in row {r}")));
            }
            data.push(v);
        }
        let got = data.len() - before;
        if got != width {
            return Err(SfsError::DimensionMismatch {
                expected_rows: height,
                expected_cols: width,
                rows: r + 1,
                cols: got,
            });
        }
        rows += 1;
    }
    if rows != height {
        return Err(SfsError::DimensionMismatch {
            expected_rows: height,
            expected_cols: width,
            rows,
            cols: width,
        });
    }
    Ok((grid, Field::from_vec(height, width, data)?))
}

pub fn read_height_csv(path: impl AsRef<Path>) -> Result<HeightField> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SfsError::io(path, e))?;
    let (grid, z) = decode_csv(&text)?;
    HeightField::new(grid, z)
}

pub fn write_height_csv(h: &HeightField, path: impl AsRef<Path>) -> Result<()> {
    write_text(path, &encode_csv(&h.grid, &h.z))
}

pub(crate) fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, text).map_err(|e| SfsError::io(path, e))
}

/// Rounds to `sig` significant digits so that serialized reals are stable.
pub fn round_sig(value: f64, sig: usize) -> f64 {
    if !value.is_finite() {
        return value;
    }
    fmt_g(value, sig).parse().unwrap_or(value)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: serde::Serialize + ?Sized>(value: &T) -> String {
    let mut out = serde_json::to_string_pretty(value).expect("serializable value");
    out.push('\n');
    out
}

pub fn write_json<T: serde::Serialize + ?Sized>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    write_text(path, &to_json(value))
}

pub fn read_text(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    std::fs::read_to_string(path).map_err(|e| SfsError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward_model::{make_surface, render_lambertian, SurfaceKind};
    use proptest::prelude::*;

    #[test]
    fn g_format() {
        assert_eq!(fmt_g(0.428881, 6), "0.428881");
        assert_eq!(fmt_g(0.4288819, 6), "0.428882");
        assert_eq!(fmt_g(-2.5, 6), "-2.5");
        assert_eq!(fmt_g(1234567.0, 6), "1.23457e+06");
        assert_eq!(fmt_g(1.5e-7, 6), "1.5e-07");
        assert_eq!(fmt_g(100.0, 6), "100");
        assert_eq!(fmt_g(f64::INFINITY, 6), "inf");
        assert_eq!(round_sig(0.4288819, 6), 0.428882);
    }

    #[test]
    fn ascii_pgm_maps_levels_linearly() {
        let raster = decode_pgm_raster(b"P2\n# comment\n2 2\n255\n0 255\n128 64\n").unwrap();
        assert_eq!((raster.width, raster.height), (2, 2));
        assert_eq!(raster.brightness(), vec![0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
        // Too small for a processing grid.
        assert!(decode_pgm(b"P2\n2 2\n255\n0 255\n128 64\n").is_err());
        let img = decode_pgm(b"P2 3 3 255  0 255 128  64 0 0  0 0 0").unwrap();
        assert_eq!(img.at((0, 1)), 1.0);
        assert_eq!(img.at((1, 0)), 64.0 / 255.0);
        assert_eq!(img.e_max, 1.0);
    }

    #[test]
    fn ascii_and_binary_agree() {
        let h = make_surface(SurfaceKind::Bump, &[1.0], GridSpec::square(17, 1.0).unwrap()).unwrap();
        let img = render_lambertian(&h, 0.8).unwrap();
        let a = decode_pgm(&encode_pgm(&img, PgmEncoding::Ascii)).unwrap();
        let b = decode_pgm(&encode_pgm(&img, PgmEncoding::Binary)).unwrap();
        assert_eq!(a.e, b.e);
        assert_eq!(a.e_max, b.e_max);
        assert_eq!(a.grid, img.grid);
    }

    #[test]
    fn malformed_pgm_is_rejected() {
        assert!(decode_pgm(b"P6\n2 2\n255\n").is_err());
        assert!(decode_pgm(b"P2\n2 2\n65535\n0 0 0 0\n").is_err());
        assert!(decode_pgm(b"P2\n2 2\n255\n0 1 2\n").is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\x01\x02").is_err());
        assert!(decode_pgm(b"P2\n2\n").is_err());
        assert!(decode_pgm(b"P2\n2 2\n255\n0 1 2 300\n").is_err());
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let g = GridSpec::new(4, 3, -1.0, 1.0, 0.0, 2.0).unwrap();
        let h = HeightField::from_fn(g, |x, y| x * y + 0.25).unwrap();
        let text = encode_csv(&h.grid, &h.z);
        assert!(text.starts_with("# 4 3 -1 1 0 2\n"));
        let (g2, z2) = decode_csv(&text).unwrap();
        assert_eq!(g2, g);
        for (a, b) in h.z.iter().zip(z2.iter()) {
            assert!((a - b).abs() < 1e-5);
        }
        let short = "# 4 3 -1 1 0 2\n1,2,3,4\n1,2,3,4\n";
        assert!(matches!(decode_csv(short), Err(SfsError::DimensionMismatch { .. })));
        let narrow = "# 4 3 -1 1 0 2\n1,2,3,4\n1,2,3\n1,2,3,4\n";
        assert!(matches!(decode_csv(narrow), Err(SfsError::DimensionMismatch { .. })));
        assert!(decode_csv("4 3 -1 1 0 2\n").is_err());
    }

    proptest! {
        #[test]
        fn pgm_round_trip_within_half_step(levels in prop::collection::vec(0.0f64..=1.0, 12)) {
            let g = GridSpec::unit(4, 3).unwrap();
            let mut e = Field::from_vec(3, 4, levels).unwrap();
            e.as_mut_slice()[0] = 1.0;
            let img = IrradianceImage::new(g, e, 1.0).unwrap();
            let back = decode_pgm(&encode_pgm(&img, PgmEncoding::Binary)).unwrap();
            for (a, b) in img.e.iter().zip(back.e.iter()) {
                prop_assert!((a - b).abs() <= 1.0 / 510.0 + 1e-12);
            }
        }
    }
}
