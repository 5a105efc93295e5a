//! 8-bit grayscale rasters, binary PGM I/O, Gaussian smoothing and scale pyramids.

use thiserror::Error;

/// Smallest edge length any pyramid level may have.
pub const MIN_LEVEL_DIM: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImageError {
    #[error("invalid dimensions {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },
    #[error("buffer length {got} does not match {width}x{height}")]
    BufferSize {
        width: usize,
        height: usize,
        got: usize,
    },
    #[error("unsupported magic {0:?}, expected P5")]
    UnsupportedMagic(String),
    #[error("malformed PGM header: {0}")]
    MalformedHeader(&'static str),
    #[error("unsupported maxval {0}, expected 255")]
    UnsupportedMaxval(u32),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("sigma must be positive, got {0}")]
    InvalidSigma(f64),
    #[error("invalid pyramid parameters: {0}")]
    InvalidPyramid(String),
}

/// Row-major single-channel 8-bit image.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "GrayImage({}x{})", self.width, self.height)
    }
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::InvalidDimensions { width, height });
        }
        if data.len() != width * height {
            return Err(ImageError::BufferSize {
                width,
                height,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Image filled with a single gray level.
    ///
    /// Panics on zero dimensions.
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self::new(width, height, vec![value; width * height]).expect("non-zero dimensions")
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    ///
    /// Panics on zero dimensions.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data).expect("non-zero dimensions")
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    /// Pixel access with signed coordinates; `None` outside the raster.
    #[inline]
    pub fn get_checked(&self, x: isize, y: isize) -> Option<u8> {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            None
        } else {
            Some(self.data[y as usize * self.width + x as usize])
        }
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.data[y * self.width + x] = value;
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[u8] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    /// Applies `f` to every pixel, keeping dimensions.
    pub fn map(&self, f: impl Fn(u8) -> u8) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Horizontal mirror.
    pub fn mirror_x(&self) -> Self {
        Self::from_fn(self.width, self.height, |x, y| {
            self.get(self.width - 1 - x, y)
        })
    }
}

/// Parses a binary (P5) PGM with maxval 255.
pub fn load_pgm(bytes: &[u8]) -> Result<GrayImage, ImageError> {
    let mut pos = 0usize;
    let magic = next_token(bytes, &mut pos).ok_or(ImageError::MalformedHeader("missing magic"))?;
    if magic != b"P5" {
        return Err(ImageError::UnsupportedMagic(
            String::from_utf8_lossy(magic).into_owned(),
        ));
    }
    let width = parse_header_int(bytes, &mut pos, "width")?;
    let height = parse_header_int(bytes, &mut pos, "height")?;
    let maxval = parse_header_int(bytes, &mut pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(ImageError::MalformedHeader("zero dimension"));
    }
    if maxval != 255 {
        return Err(ImageError::UnsupportedMaxval(maxval as u32));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        Some(_) => return Err(ImageError::MalformedHeader("missing separator after maxval")),
        None => {
            return Err(ImageError::Truncated {
                expected: width * height,
                found: 0,
            })
        }
    }
    let expected = width
        .checked_mul(height)
        .ok_or(ImageError::MalformedHeader("dimensions overflow"))?;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(ImageError::Truncated {
            expected,
            found: payload.len(),
        });
    }
    GrayImage::new(width, height, payload[..expected].to_vec())
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    (*pos > start).then(|| &bytes[start..*pos])
}

fn parse_header_int(bytes: &[u8], pos: &mut usize, what: &'static str) -> Result<usize, ImageError> {
    let tok = next_token(bytes, pos).ok_or(ImageError::MalformedHeader(what))?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .ok_or(ImageError::MalformedHeader(what))
}

/// Encodes as binary PGM (P5, maxval 255).
pub fn save_pgm(img: &GrayImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", img.width, img.height);
    let mut out = Vec::with_capacity(header.len() + img.data.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&img.data);
    out
}

/// Normalized 1-D Gaussian kernel of radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur with edge replication.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> Result<GrayImage, ImageError> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(ImageError::InvalidSigma(sigma));
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let (w, h) = img.dims();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;

    let mut tmp = vec![0.0f64; w * h];
    for y in 0..h {
        let row = img.row(y);
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in kernel.iter().enumerate() {
                let sx = clamp(x as isize + i as isize - radius, w);
                acc += kv * row[sx] as f64;
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in kernel.iter().enumerate() {
                let sy = clamp(y as isize + i as isize - radius, h);
                acc += kv * tmp[sy * w + x];
            }
            out[y * w + x] = acc.round().clamp(0.0, 255.0) as u8;
        }
    }
    GrayImage::new(w, h, out)
}

/// Multi-scale stack of progressively downsampled images.
#[derive(Debug, Clone)]
pub struct ImagePyramid {
    levels: Vec<GrayImage>,
    scale_factor: f64,
}

impl ImagePyramid {
    pub fn levels(&self) -> &[GrayImage] {
        &self.levels
    }

    pub fn level(&self, i: usize) -> &GrayImage {
        &self.levels[i]
    }

    pub fn base(&self) -> &GrayImage {
        &self.levels[0]
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn scale_factor(&self) -> f64 {
        self.scale_factor
    }

    /// Factor mapping level-`i` coordinates back to level 0.
    pub fn level_scale(&self, i: usize) -> f64 {
        self.scale_factor.powi(i as i32)
    }
}

/// Builds a pyramid whose level `i` has dimensions `floor(base / scale^i)`.
pub fn build_pyramid(
    img: &GrayImage,
    n_levels: usize,
    scale_factor: f64,
) -> Result<ImagePyramid, ImageError> {
    if n_levels == 0 {
        return Err(ImageError::InvalidPyramid("n_levels must be >= 1".into()));
    }
    if !(scale_factor > 1.0) || !scale_factor.is_finite() {
        return Err(ImageError::InvalidPyramid(format!(
            "scale factor must exceed 1, got {scale_factor}"
        )));
    }
    let mut levels = vec![img.clone()];
    for i in 1..n_levels {
        let s = scale_factor.powi(i as i32);
        let w = (img.width() as f64 / s).floor() as usize;
        let h = (img.height() as f64 / s).floor() as usize;
        if w < MIN_LEVEL_DIM || h < MIN_LEVEL_DIM {
            return Err(ImageError::InvalidPyramid(format!(
                "level {i} would be {w}x{h}, below {MIN_LEVEL_DIM}x{MIN_LEVEL_DIM}"
            )));
        }
        let prev = levels.last().expect("at least one level");
        levels.push(resize_area(prev, w, h));
    }
    Ok(ImagePyramid {
        levels,
        scale_factor,
    })
}

/// Area-averaging resample to `new_w x new_h` (each output pixel is the
/// coverage-weighted mean of the source pixels under its footprint).
pub fn resize_area(img: &GrayImage, new_w: usize, new_h: usize) -> GrayImage {
    let xw = area_weights(img.width(), new_w);
    let yw = area_weights(img.height(), new_h);
    let mut out = Vec::with_capacity(new_w * new_h);
    for ys in &yw {
        for xs in &xw {
            let mut acc = 0.0;
            let mut norm = 0.0;
            for &(sy, wy) in ys {
                let row = img.row(sy);
                for &(sx, wx) in xs {
                    acc += wx * wy * row[sx] as f64;
                    norm += wx * wy;
                }
            }
            out.push((acc / norm).round().clamp(0.0, 255.0) as u8);
        }
    }
    GrayImage::new(new_w, new_h, out).expect("positive dimensions")
}

fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let ratio = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let lo = d as f64 * ratio;
            let hi = ((d + 1) as f64 * ratio).min(src as f64);
            let mut taps = Vec::new();
            let mut s = lo.floor() as usize;
            while (s as f64) < hi && s < src {
                let overlap = (hi.min(s as f64 + 1.0) - lo.max(s as f64)).max(0.0);
                if overlap > 1e-12 {
                    taps.push((s, overlap));
                }
                s += 1;
            }
            taps
        })
        .collect()
}
