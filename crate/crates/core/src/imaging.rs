//! Image ingestion, patch grid arithmetic and mask application.
//!
//! Pixels are stored planar (`C×H×W`, channel-major) as 8-bit intensities.
//! Patches are indexed in raster row-major order over the grid.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bitmap::MaskPattern;
use crate::{Error, Result};

/// Fill value written into every channel of a masked patch.
pub const SENTINEL: u8 = 127;

/// Planar 8-bit image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl Image {
    /// Wraps planar `C×H×W` data.
    pub fn from_planar(channels: usize, height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::EmptyImage {
                channels,
                height,
                width,
            });
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Format(format!("{channels} channels (expected 1 or 3)")));
        }
        let expected = channels * height * width;
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    /// Image with every sample set to `value`.
    pub fn filled(channels: usize, height: usize, width: usize, value: u8) -> Result<Self> {
        Self::from_planar(channels, height, width, vec![value; channels * height * width])
    }

    /// Builds an RGB image from interleaved `RGBRGB...` samples.
    pub fn from_interleaved_rgb(height: usize, width: usize, rgb: &[u8]) -> Result<Self> {
        if rgb.len() != height * width * 3 {
            return Err(Error::LengthMismatch {
                expected: height * width * 3,
                actual: rgb.len(),
            });
        }
        let plane = height * width;
        let mut data = vec![0u8; plane * 3];
        for (i, px) in rgb.chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[c * plane + i] = px[c];
            }
        }
        Self::from_planar(3, height, width, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Planar samples.
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> u8 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: u8) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    /// Sample scaled to `[0, 1]`.
    pub fn value(&self, c: usize, y: usize, x: usize) -> f64 {
        f64::from(self.get(c, y, x)) / 255.0
    }

    /// One channel plane as reals in `[0, 1]`.
    pub fn plane_f64(&self, c: usize) -> Vec<f64> {
        let plane = self.height * self.width;
        self.data[c * plane..(c + 1) * plane]
            .iter()
            .map(|&v| f64::from(v) / 255.0)
            .collect()
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    /// Grayscale images are replicated into three channels; RGB is returned as is.
    pub fn to_rgb(&self) -> Image {
        if self.channels == 3 {
            return self.clone();
        }
        let mut data = Vec::with_capacity(self.data.len() * 3);
        for _ in 0..3 {
            data.extend_from_slice(&self.data);
        }
        Image {
            channels: 3,
            height: self.height,
            width: self.width,
            data,
        }
    }

    fn interleaved(&self) -> Vec<u8> {
        let plane = self.height * self.width;
        let mut out = Vec::with_capacity(self.data.len());
        for i in 0..plane {
            for c in 0..self.channels {
                out.push(self.data[c * plane + i]);
            }
        }
        out
    }

    /// Writes an 8-bit PNG (grayscale or RGB).
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let color = if self.channels == 3 {
            image::ExtendedColorType::Rgb8
        } else {
            image::ExtendedColorType::L8
        };
        image::save_buffer_with_format(
            path,
            &self.interleaved(),
            self.width as u32,
            self.height as u32,
            color,
            image::ImageFormat::Png,
        )
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    /// Writes a binary PPM (P6); grayscale is promoted first.
    pub fn save_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let rgb = self.to_rgb();
        let mut bytes = format!("P6\n{} {}\n255\n", rgb.width, rgb.height).into_bytes();
        bytes.extend(rgb.interleaved());
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

/// Loads a PNG or binary PPM (P6) file as canonical 8-bit RGB.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}

/// Decodes PNG or PPM P6 bytes, sniffed by magic.
pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    if bytes.starts_with(b"\x89PNG") {
        decode_png(bytes)
    } else if bytes.starts_with(b"P6") {
        decode_ppm(bytes)
    } else {
        Err(Error::Format("neither PNG nor PPM P6".into()))
    }
}

fn decode_png(bytes: &[u8]) -> Result<Image> {
    let img = image::ImageReader::with_format(Cursor::new(bytes), image::ImageFormat::Png)
        .decode()
        .map_err(|e| Error::Format(e.to_string()))?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    Image::from_interleaved_rgb(h as usize, w as usize, rgb.as_raw())
}

fn decode_ppm(bytes: &[u8]) -> Result<Image> {
    // Header: magic, width, height, maxval, separated by whitespace and
    // optional comments, then exactly one whitespace byte before the raster.
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::Format("truncated PPM header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("malformed PPM header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("malformed PPM header".into()))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Format("truncated PPM header".into()));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(Error::EmptyImage {
            channels: 3,
            height,
            width,
        });
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("PPM maxval {maxval} not supported")));
    }
    let need = width * height * 3;
    let raster = bytes
        .get(pos..pos + need)
        .ok_or_else(|| Error::Format("truncated PPM raster".into()))?;
    let rgb: Vec<u8> = if maxval == 255 {
        raster.to_vec()
    } else {
        raster
            .iter()
            .map(|&v| ((u32::from(v.min(maxval as u8)) * 255 + maxval as u32 / 2) / maxval as u32) as u8)
            .collect()
    };
    Image::from_interleaved_rgb(height, width, &rgb)
}

/// Square-patch tiling of an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGrid {
    patch_size: usize,
    rows: usize,
    cols: usize,
}

impl PatchGrid {
    /// Grid for an `height×width` image; both sides must be multiples of `patch_size`.
    pub fn new(height: usize, width: usize, patch_size: usize) -> Result<Self> {
        if patch_size == 0
            || height == 0
            || width == 0
            || !height.is_multiple_of(patch_size)
            || !width.is_multiple_of(patch_size)
        {
            return Err(Error::NotDivisible {
                height,
                width,
                patch: patch_size,
            });
        }
        Ok(Self {
            patch_size,
            rows: height / patch_size,
            cols: width / patch_size,
        })
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of patches.
    pub fn n(&self) -> usize {
        self.rows * self.cols
    }

    pub fn height(&self) -> usize {
        self.rows * self.patch_size
    }

    pub fn width(&self) -> usize {
        self.cols * self.patch_size
    }

    /// Top-left pixel `(y, x)` of patch `n`.
    pub fn origin(&self, n: usize) -> (usize, usize) {
        ((n / self.cols) * self.patch_size, (n % self.cols) * self.patch_size)
    }

    /// Raster indices of the 4-connected neighbours of patch `n`.
    pub fn neighbors(&self, n: usize) -> impl Iterator<Item = usize> + '_ {
        let (r, c) = (n / self.cols, n % self.cols);
        let up = (r > 0).then(|| n - self.cols);
        let down = (r + 1 < self.rows).then(|| n + self.cols);
        let left = (c > 0).then(|| n - 1);
        let right = (c + 1 < self.cols).then(|| n + 1);
        [up, down, left, right].into_iter().flatten()
    }
}

/// Grid for `img` with `patch_size`; rejects dimensions that would need padding.
pub fn patchify(img: &Image, patch_size: usize) -> Result<PatchGrid> {
    PatchGrid::new(img.height(), img.width(), patch_size)
}

/// Samples of patch `n`, channel-major then row-major (`C×P×P`).
pub fn extract_patch(img: &Image, grid: &PatchGrid, n: usize) -> Vec<u8> {
    let p = grid.patch_size();
    let (y0, x0) = grid.origin(n);
    let mut out = Vec::with_capacity(img.channels() * p * p);
    for c in 0..img.channels() {
        for y in y0..y0 + p {
            let row = (c * img.height() + y) * img.width();
            out.extend_from_slice(&img.data()[row + x0..row + x0 + p]);
        }
    }
    out
}

/// Writes patch samples (layout of [`extract_patch`]) back into `img`.
pub fn write_patch(img: &mut Image, grid: &PatchGrid, n: usize, samples: &[u8]) {
    let p = grid.patch_size();
    let (y0, x0) = grid.origin(n);
    let (h, w) = (img.height(), img.width());
    for (c, plane) in samples.chunks_exact(p * p).enumerate() {
        for (dy, row) in plane.chunks_exact(p).enumerate() {
            let start = (c * h + y0 + dy) * w + x0;
            img.data[start..start + p].copy_from_slice(row);
        }
    }
}

/// Reassembles an image from all `N` patches in raster order.
pub fn unpatchify(patches: &[Vec<u8>], grid: &PatchGrid, channels: usize) -> Result<Image> {
    if patches.len() != grid.n() {
        return Err(Error::LengthMismatch {
            expected: grid.n(),
            actual: patches.len(),
        });
    }
    let mut img = Image::filled(channels, grid.height(), grid.width(), 0)?;
    let per_patch = channels * grid.patch_size() * grid.patch_size();
    for (n, patch) in patches.iter().enumerate() {
        if patch.len() != per_patch {
            return Err(Error::LengthMismatch {
                expected: per_patch,
                actual: patch.len(),
            });
        }
        write_patch(&mut img, grid, n, patch);
    }
    Ok(img)
}

/// An image with its masked patches overwritten by [`SENTINEL`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedImage {
    pixels: Image,
    grid: PatchGrid,
    mask: MaskPattern,
}

impl MaskedImage {
    /// Pixels with sentinel-filled masked patches.
    pub fn pixels(&self) -> &Image {
        &self.pixels
    }

    pub fn grid(&self) -> &PatchGrid {
        &self.grid
    }

    /// The mask that produced this image.
    pub fn mask(&self) -> &MaskPattern {
        &self.mask
    }

    /// Raster indices of visible patches, ascending.
    pub fn visible(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, m)| !m).map(|(i, _)| i)
    }
}

/// Masks every patch whose bit is set; visible patches are left untouched.
pub fn apply_mask(img: &Image, grid: &PatchGrid, mask: &MaskPattern) -> Result<MaskedImage> {
    if mask.len() != grid.n() {
        return Err(Error::LengthMismatch {
            expected: grid.n(),
            actual: mask.len(),
        });
    }
    if img.height() != grid.height() || img.width() != grid.width() {
        return Err(Error::NotDivisible {
            height: img.height(),
            width: img.width(),
            patch: grid.patch_size(),
        });
    }
    let mut pixels = img.clone();
    let fill = vec![SENTINEL; img.channels() * grid.patch_size() * grid.patch_size()];
    for (n, masked) in mask.iter().enumerate() {
        if masked {
            write_patch(&mut pixels, grid, n, &fill);
        }
    }
    Ok(MaskedImage {
        pixels,
        grid: *grid,
        mask: mask.clone(),
    })
}

/// Recovers the mask from sentinel patches.
///
/// Only meant for inspection: a natural patch that happens to be uniformly
/// [`SENTINEL`] is reported as masked. The link itself uses the mask carried
/// in the side information.
pub fn detect_mask(mimg: &MaskedImage) -> MaskPattern {
    detect_mask_in(&mimg.pixels, &mimg.grid)
}

/// [`detect_mask`] over a bare image and grid.
pub fn detect_mask_in(img: &Image, grid: &PatchGrid) -> MaskPattern {
    (0..grid.n())
        .map(|n| extract_patch(img, grid, n).iter().all(|&v| v == SENTINEL))
        .collect()
}

/// Seeded synthetic RGB photo stand-in: smooth gradients, a few soft blobs
/// and fine noise texture.
pub fn synthetic_image(height: usize, width: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![0u8; 3 * height * width];
    let blobs: Vec<(f64, f64, f64, [f64; 3])> = (0..4)
        .map(|_| {
            (
                rng.random_range(0.0..height as f64),
                rng.random_range(0.0..width as f64),
                rng.random_range(0.05..0.3) * height.max(width) as f64,
                [
                    rng.random_range(-0.4..0.4),
                    rng.random_range(-0.4..0.4),
                    rng.random_range(-0.4..0.4),
                ],
            )
        })
        .collect();
    let base: [f64; 3] = [
        rng.random_range(0.2..0.8),
        rng.random_range(0.2..0.8),
        rng.random_range(0.2..0.8),
    ];
    let grad: [(f64, f64); 3] = [
        (rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)),
        (rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)),
        (rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)),
    ];
    let noise_amp = rng.random_range(0.02..0.08);
    let plane = height * width;
    for y in 0..height {
        let fy = y as f64 / height as f64 - 0.5;
        for x in 0..width {
            let fx = x as f64 / width as f64 - 0.5;
            let mut v = [0.0; 3];
            for c in 0..3 {
                v[c] = base[c] + grad[c].0 * fy + grad[c].1 * fx;
            }
            for &(by, bx, r, amp) in &blobs {
                let d2 = ((y as f64 - by).powi(2) + (x as f64 - bx).powi(2)) / (r * r);
                let w = (-d2).exp();
                for c in 0..3 {
                    v[c] += amp[c] * w;
                }
            }
            for c in 0..3 {
                let n = rng.random_range(-noise_amp..noise_amp);
                let s = ((v[c] + n).clamp(0.0, 1.0) * 255.0).round() as u8;
                data[c * plane + y * width + x] = s;
            }
        }
    }
    Image {
        channels: 3,
        height,
        width,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_pixel_white_ppm() {
        let img = decode_image(b"P6\n1 1\n255\n\xff\xff\xff").unwrap();
        assert_eq!((img.channels(), img.height(), img.width()), (3, 1, 1));
        assert_eq!((img.get(0, 0, 0), img.get(1, 0, 0), img.get(2, 0, 0)), (255, 255, 255));
    }

    #[test]
    fn ppm_with_comment() {
        let img = decode_image(b"P6 # made by hand\n2 1 255\n\x01\x02\x03\x04\x05\x06").unwrap();
        assert_eq!(img.get(0, 0, 1), 4);
        assert_eq!(img.get(2, 0, 0), 3);
    }

    #[test]
    fn truncated_ppm_header() {
        let err = decode_image(b"P6\n224 ").unwrap_err();
        assert!(err.to_string().contains("unsupported/corrupt format"), "{err}");
        assert!(decode_image(b"P6\n2 2\n255\n\x00").is_err());
    }

    #[test]
    fn zero_sized_ppm() {
        assert!(matches!(decode_image(b"P6\n0 4\n255\n"), Err(Error::EmptyImage { .. })));
    }

    #[test]
    fn unknown_format() {
        assert!(matches!(decode_image(b"GIF89a"), Err(Error::Format(_))));
    }

    #[test]
    fn png_round_trip_and_gray_promotion() {
        let dir = tempfile::tempdir().unwrap();
        let img = synthetic_image(224, 224, 1);
        let path = dir.path().join("a.png");
        img.save_png(&path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!((back.channels(), back.height(), back.width()), (3, 224, 224));
        assert_eq!(back, img);

        let gray = Image::from_planar(1, 2, 3, vec![0, 10, 20, 30, 40, 50]).unwrap();
        let gpath = dir.path().join("g.png");
        gray.save_png(&gpath).unwrap();
        let back = load_image(&gpath).unwrap();
        assert_eq!(back, gray.to_rgb());
    }

    #[test]
    fn ppm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = synthetic_image(32, 48, 9);
        let path = dir.path().join("a.ppm");
        img.save_ppm(&path).unwrap();
        assert_eq!(load_image(&path).unwrap(), img);
    }

    #[test]
    fn missing_file() {
        assert!(matches!(load_image("/nonexistent/x.png"), Err(Error::Io { .. })));
    }

    #[test]
    fn patch_counts() {
        let img = Image::filled(3, 224, 224, 0).unwrap();
        assert_eq!(patchify(&img, 16).unwrap().n(), 196);
        let img = Image::filled(3, 16, 16, 0).unwrap();
        assert_eq!(patchify(&img, 16).unwrap().n(), 1);
        let img = Image::filled(3, 224, 220, 0).unwrap();
        assert!(matches!(patchify(&img, 16), Err(Error::NotDivisible { .. })));
    }

    #[test]
    fn raster_order() {
        let grid = PatchGrid::new(32, 48, 16).unwrap();
        assert_eq!(grid.origin(0), (0, 0));
        assert_eq!(grid.origin(2), (0, 32));
        assert_eq!(grid.origin(3), (16, 0));
        let mut nb: Vec<_> = grid.neighbors(4).collect();
        nb.sort();
        assert_eq!(nb, vec![1, 3, 5]);
    }

    #[test]
    fn unpatchify_is_inverse() {
        let img = synthetic_image(64, 80, 3);
        let grid = patchify(&img, 16).unwrap();
        let patches: Vec<_> = (0..grid.n()).map(|n| extract_patch(&img, &grid, n)).collect();
        assert_eq!(unpatchify(&patches, &grid, 3).unwrap(), img);
    }

    #[test]
    fn masking() {
        let img = synthetic_image(224, 224, 5);
        let grid = patchify(&img, 16).unwrap();

        let none = MaskPattern::zeros(196);
        assert_eq!(apply_mask(&img, &grid, &none).unwrap().pixels(), &img);

        let mut first = MaskPattern::zeros(196);
        first.set(0, true);
        let m = apply_mask(&img, &grid, &first).unwrap();
        assert!(extract_patch(m.pixels(), &grid, 0).iter().all(|&v| v == SENTINEL));

        // 98 even positions plus 1 and 3
        let hundred: MaskPattern = (0..196).map(|i| i % 2 == 0 || i < 4).collect();
        assert_eq!(hundred.popcount(), 100);
        let m = apply_mask(&img, &grid, &hundred).unwrap();
        let sentinel = (0..196)
            .filter(|&n| extract_patch(m.pixels(), &grid, n).iter().all(|&v| v == SENTINEL))
            .count();
        assert_eq!(sentinel, 100);
        for n in m.visible() {
            assert_eq!(extract_patch(m.pixels(), &grid, n), extract_patch(&img, &grid, n));
        }
        assert_eq!(m.visible().count(), 96);

        assert!(matches!(
            apply_mask(&img, &grid, &MaskPattern::zeros(10)),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn detection_edge_cases() {
        let img = synthetic_image(48, 48, 2);
        let grid = patchify(&img, 16).unwrap();
        let all = MaskPattern::ones(9);
        assert_eq!(detect_mask(&apply_mask(&img, &grid, &all).unwrap()), all);
        let none = MaskPattern::zeros(9);
        assert_eq!(detect_mask(&apply_mask(&img, &grid, &none).unwrap()), none);
    }

    #[test]
    fn synthetic_is_seeded() {
        assert_eq!(synthetic_image(32, 32, 7), synthetic_image(32, 32, 7));
        assert_ne!(synthetic_image(32, 32, 7), synthetic_image(32, 32, 8));
    }
}
