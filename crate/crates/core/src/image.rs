//! 8-bit grayscale images, binary PGM (P5) I/O and area-averaging resampling.

use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("not a binary PGM: {0}")]
    Format(String),
    #[error("image dimensions {width}x{height} do not match {len} pixels")]
    Dimensions {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(ImageError::Dimensions {
                width,
                height,
                len: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Copies `src` with its top-left corner at (x, y), clipping at the border.
    pub fn paste(&mut self, src: &GrayImage, x: usize, y: usize) {
        if x >= self.width {
            return;
        }
        for sy in 0..src.height {
            let ty = y + sy;
            if ty >= self.height {
                break;
            }
            let w = src.width.min(self.width.saturating_sub(x));
            let dst = ty * self.width + x;
            self.pixels[dst..dst + w].copy_from_slice(&src.pixels[sy * src.width..sy * src.width + w]);
        }
    }

    /// Pixels scaled to [0, 1].
    pub fn to_unit(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64 / 255.0).collect()
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write_pgm(&self, path: &Path) -> Result<(), ImageError> {
        fs::write(path, self.to_pgm())?;
        Ok(())
    }

    pub fn read_pgm(path: &Path) -> Result<Self, ImageError> {
        parse_pgm(&fs::read(path)?)
    }
}

/// Parses binary PGM with maxval up to 255; other maxvals are rescaled to 255.
pub fn parse_pgm(data: &[u8]) -> Result<GrayImage, ImageError> {
    let mut pos = 0;
    let mut fields = [0usize; 3];
    let magic = next_token(data, &mut pos).ok_or_else(|| ImageError::Format("empty file".into()))?;
    if magic != b"P5" {
        return Err(ImageError::Format(format!(
            "magic {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    for (i, name) in ["width", "height", "maxval"].iter().enumerate() {
        let tok = next_token(data, &mut pos).ok_or_else(|| ImageError::Format(format!("missing {name}")))?;
        fields[i] = std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImageError::Format(format!("bad {name}")))?;
    }
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(ImageError::Format(format!("unsupported maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let n = width * height;
    let raster = data
        .get(pos..pos + n)
        .ok_or_else(|| ImageError::Format(format!("raster truncated, want {n} bytes")))?;
    let pixels = if maxval == 255 {
        raster.to_vec()
    } else {
        raster
            .iter()
            .map(|&p| ((p.min(maxval as u8) as f64) * 255.0 / maxval as f64).round() as u8)
            .collect()
    };
    GrayImage::new(width, height, pixels)
}

fn next_token<'a>(data: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < data.len() && data[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < data.len() && data[*pos] == b'#' {
            while *pos < data.len() && data[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < data.len() && !data[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| &data[start..*pos])
}

/// Overlap weights of source cells `[i*scale, (i+1)*scale)` for each output
/// cell `i`, normalized to sum to one.
pub(crate) fn area_weights(src_len: usize, dst_len: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src_len as f64 / dst_len as f64;
    (0..dst_len)
        .map(|i| {
            let lo = i as f64 * scale;
            let hi = (i + 1) as f64 * scale;
            let mut taps = Vec::new();
            let mut j = lo.floor() as usize;
            while (j as f64) < hi && j < src_len {
                let overlap = (hi.min(j as f64 + 1.0) - lo.max(j as f64)).max(0.0);
                if overlap > 0.0 {
                    taps.push((j, overlap / scale));
                }
                j += 1;
            }
            taps
        })
        .collect()
}

/// Area-averaging resampler for a fixed window size to a fixed output size.
pub struct AreaResampler {
    out_w: usize,
    out_h: usize,
    cols: Vec<Vec<(usize, f64)>>,
    rows: Vec<Vec<(usize, f64)>>,
}

impl AreaResampler {
    pub fn new(win_w: usize, win_h: usize, out_w: usize, out_h: usize) -> Self {
        Self {
            out_w,
            out_h,
            cols: area_weights(win_w, out_w),
            rows: area_weights(win_h, out_h),
        }
    }

    /// Resamples the window at (x0, y0) of `img` into `out` (values in [0,1]).
    pub fn sample(&self, img: &GrayImage, x0: usize, y0: usize, out: &mut Vec<f64>) {
        out.clear();
        out.resize(self.out_w * self.out_h, 0.0);
        let mut row_buf = vec![0.0; self.out_w];
        for (oy, row_taps) in self.rows.iter().enumerate() {
            let dst = &mut out[oy * self.out_w..(oy + 1) * self.out_w];
            for &(sy, wy) in row_taps {
                let src_row = &img.pixels[(y0 + sy) * img.width + x0..];
                for (ox, col_taps) in self.cols.iter().enumerate() {
                    let mut acc = 0.0;
                    for &(sx, wx) in col_taps {
                        acc += src_row[sx] as f64 * wx;
                    }
                    row_buf[ox] = acc;
                }
                for (d, r) in dst.iter_mut().zip(&row_buf) {
                    *d += r * wy;
                }
            }
        }
        for v in out.iter_mut() {
            *v /= 255.0;
        }
    }
}
