//! Raster frames, capture bursts and their on-disk forms.
//!
//! An [`ImageBuffer`] is an immutable row-major RGB raster. A
//! [`FrameSequence`] is a burst of equally sized frames sampled at a fixed
//! rate; frame `k` is taken at `k / frame_rate` seconds.
//!
//! Files are PNG (8-bit RGB) or binary PPM (P6). A sequence on disk is a
//! directory of `frame_000000.png`, `frame_000001.png`, ... next to a
//! `metadata.json` sidecar.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ColorType, DynamicImage, ImageEncoder, ImageFormat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One 8-bit RGB pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rgb(pub [u8; 3]);

impl Rgb {
    pub const BLACK: Rgb = Rgb([0, 0, 0]);
    pub const WHITE: Rgb = Rgb([255, 255, 255]);

    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Rgb([r, g, b])
    }
}

/// Immutable row-major RGB raster.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, pixels: Vec<Rgb>) -> Result<Self> {
        check_dims(width, height)?;
        if pixels.len() != width * height {
            return Err(Error::InvalidDimensions {
                width,
                height,
                reason: format!("expected {} pixels, got {}", width * height, pixels.len()),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, color: Rgb) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            pixels: vec![color; width * height],
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Rgb) -> Result<Self> {
        check_dims(width, height)?;
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image from whole rows. Every row must have the same length.
    pub fn from_rows<I, R>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = R>,
        R: AsRef<[Rgb]>,
    {
        let mut pixels = Vec::new();
        let mut width = None;
        let mut height = 0;
        for row in rows {
            let row = row.as_ref();
            match width {
                None => width = Some(row.len()),
                Some(w) if w != row.len() => {
                    return Err(Error::DimensionMismatch {
                        expected: format!("row width {w}"),
                        found: format!("row width {}", row.len()),
                    })
                }
                Some(_) => {}
            }
            pixels.extend_from_slice(row);
            height += 1;
        }
        Self::new(width.unwrap_or(0), height, pixels)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> Option<Rgb> {
        if x < self.width && y < self.height {
            Some(self.pixels[y * self.width + x])
        } else {
            None
        }
    }

    /// The `r`-th raster row.
    pub fn row(&self, r: usize) -> Result<&[Rgb]> {
        if r >= self.height {
            return Err(Error::RowOutOfRange {
                row: r,
                height: self.height,
            });
        }
        Ok(&self.pixels[r * self.width..(r + 1) * self.width])
    }

    pub fn rows(&self) -> impl DoubleEndedIterator<Item = &[Rgb]> + ExactSizeIterator + '_ {
        self.pixels.chunks_exact(self.width)
    }

    pub fn flip_vertical(&self) -> ImageBuffer {
        let mut pixels = Vec::with_capacity(self.pixels.len());
        for row in self.rows().rev() {
            pixels.extend_from_slice(row);
        }
        ImageBuffer {
            width: self.width,
            height: self.height,
            pixels,
        }
    }

    /// Interleaved `RGBRGB...` bytes.
    pub fn to_rgb_bytes(&self) -> Vec<u8> {
        self.pixels.iter().flat_map(|p| p.0).collect()
    }

    pub(crate) fn pixels_mut(&mut self) -> &mut [Rgb] {
        &mut self.pixels
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidDimensions {
            width,
            height,
            reason: "width and height must be at least 1".into(),
        });
    }
    Ok(())
}

/// Bit-exact comparison of dimensions and pixel values.
pub fn images_equal(a: &ImageBuffer, b: &ImageBuffer) -> bool {
    a == b
}

/// An ordered burst of equally sized frames sampled at `frame_rate` Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<ImageBuffer>,
    frame_rate: f64,
}

impl FrameSequence {
    pub fn new(frames: Vec<ImageBuffer>, frame_rate: f64) -> Result<Self> {
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(Error::InvalidFrameRate(frame_rate));
        }
        let first = frames.first().ok_or(Error::EmptySequence)?;
        let dims = first.dims();
        if let Some((k, f)) = frames.iter().enumerate().find(|(_, f)| f.dims() != dims) {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{}", dims.0, dims.1),
                found: format!("{}x{} at frame {k}", f.width(), f.height()),
            });
        }
        Ok(Self { frames, frame_rate })
    }

    pub fn frames(&self) -> &[ImageBuffer] {
        &self.frames
    }

    pub fn frame(&self, k: usize) -> Option<&ImageBuffer> {
        self.frames.get(k)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }

    /// Timestamp of frame `k` in seconds.
    pub fn timestamp(&self, k: usize) -> f64 {
        k as f64 / self.frame_rate
    }

    pub fn into_frames(self) -> Vec<ImageBuffer> {
        self.frames
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FileKind {
    Png,
    Ppm,
}

fn file_kind(path: &Path) -> Result<FileKind> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("png") => Ok(FileKind::Png),
        Some("ppm") => Ok(FileKind::Ppm),
        Some(other) => Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: format!("extension `.{other}` is not a lossless RGB format (png, ppm)"),
        }),
        None => Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: "missing file extension".into(),
        }),
    }
}

/// Loads an 8-bit RGB PNG or binary PPM. Grayscale 8-bit input is expanded
/// to RGB; alpha and 16-bit images are rejected.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let kind = file_kind(path)?;
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let format = match kind {
        FileKind::Png => ImageFormat::Png,
        FileKind::Ppm => ImageFormat::Pnm,
    };
    let decoded = image::load(BufReader::new(file), format).map_err(|e| match e {
        image::ImageError::IoError(source) => Error::io(path, source),
        other => Error::CorruptImage {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })?;
    let rgb = match decoded {
        DynamicImage::ImageRgb8(buf) => buf,
        DynamicImage::ImageLuma8(_) => decoded.to_rgb8(),
        other => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: format!("pixel layout {:?} is not 8-bit RGB", other.color()),
            })
        }
    };
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let pixels = rgb
        .into_raw()
        .chunks_exact(3)
        .map(|c| Rgb([c[0], c[1], c[2]]))
        .collect();
    ImageBuffer::new(w, h, pixels).map_err(|e| Error::CorruptImage {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Writes `img` as PNG or binary PPM, chosen by extension.
pub fn save_image(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let kind = file_kind(path)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let bytes = img.to_rgb_bytes();
    let (w, h) = (img.width() as u32, img.height() as u32);
    let encoded = match kind {
        FileKind::Png => PngEncoder::new_with_quality(&mut out, CompressionType::Default, FilterType::Adaptive)
            .write_image(&bytes, w, h, ColorType::Rgb8.into()),
        FileKind::Ppm => PnmEncoder::new(&mut out)
            .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
            .write_image(&bytes, w, h, ColorType::Rgb8.into()),
    };
    encoded.map_err(|e| match e {
        image::ImageError::IoError(source) => Error::io(path, source),
        other => Error::CorruptImage {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub const SEQUENCE_METADATA: &str = "metadata.json";

/// Sidecar describing a sequence directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceMetadata {
    pub frame_rate: f64,
    pub width: usize,
    pub height: usize,
    pub frame_count: usize,
}

pub fn frame_file_name(k: usize) -> String {
    format!("frame_{k:06}.png")
}

/// Writes every frame plus the metadata sidecar into `dir` (created if needed).
pub fn save_sequence(seq: &FrameSequence, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (k, frame) in seq.frames().iter().enumerate() {
        save_image(frame, dir.join(frame_file_name(k)))?;
    }
    let meta = SequenceMetadata {
        frame_rate: seq.frame_rate(),
        width: seq.width(),
        height: seq.height(),
        frame_count: seq.len(),
    };
    write_json(dir.join(SEQUENCE_METADATA), &meta)
}

/// Streaming form of [`save_sequence`]: frame `k` comes from `frame(k)`, so
/// only the frames being encoded are held in memory. Frames are produced and
/// written in parallel; each goes to its own file.
pub fn save_sequence_with<F>(dir: impl AsRef<Path>, meta: &SequenceMetadata, frame: F) -> Result<()>
where
    F: Fn(usize) -> Result<ImageBuffer> + Sync,
{
    use rayon::prelude::*;

    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    (0..meta.frame_count).into_par_iter().try_for_each(|k| {
        let img = frame(k)?;
        if img.dims() != (meta.width, meta.height) {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{}", meta.width, meta.height),
                found: format!("{}x{} (frame {k})", img.width(), img.height()),
            });
        }
        save_image(&img, dir.join(frame_file_name(k)))
    })?;
    write_json(dir.join(SEQUENCE_METADATA), meta)
}

/// A sequence directory opened lazily; frames are decoded on demand.
#[derive(Debug, Clone)]
pub struct SequenceDir {
    dir: PathBuf,
    meta: SequenceMetadata,
}

impl SequenceDir {
    /// Reads the sidecar and checks that every listed frame file exists.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let meta: SequenceMetadata = read_json(dir.join(SEQUENCE_METADATA))?;
        let invalid = |reason: String| Error::InvalidSequence {
            path: dir.clone(),
            reason,
        };
        if meta.frame_count == 0 {
            return Err(invalid("frame_count is 0".into()));
        }
        if meta.width == 0 || meta.height == 0 {
            return Err(invalid(format!("bad dimensions {}x{}", meta.width, meta.height)));
        }
        if !(meta.frame_rate.is_finite() && meta.frame_rate > 0.0) {
            return Err(invalid(format!("bad frame_rate {}", meta.frame_rate)));
        }
        let missing: Vec<String> = (0..meta.frame_count)
            .map(frame_file_name)
            .filter(|name| !dir.join(name).is_file())
            .collect();
        if !missing.is_empty() {
            return Err(invalid(format!(
                "{} of {} frames missing (first: {})",
                missing.len(),
                meta.frame_count,
                missing[0]
            )));
        }
        Ok(Self { dir, meta })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn metadata(&self) -> &SequenceMetadata {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.meta.frame_count
    }

    pub fn is_empty(&self) -> bool {
        self.meta.frame_count == 0
    }

    /// Decodes frame `k`, checking it against the sidecar dimensions.
    pub fn load_frame(&self, k: usize) -> Result<ImageBuffer> {
        let path = self.dir.join(frame_file_name(k));
        let img = load_image(&path)?;
        if img.dims() != (self.meta.width, self.meta.height) {
            return Err(Error::InvalidSequence {
                path: self.dir.clone(),
                reason: format!(
                    "{} is {}x{}, metadata says {}x{}",
                    frame_file_name(k),
                    img.width(),
                    img.height(),
                    self.meta.width,
                    self.meta.height
                ),
            });
        }
        Ok(img)
    }

    pub fn load(&self) -> Result<FrameSequence> {
        let frames = (0..self.meta.frame_count)
            .map(|k| self.load_frame(k))
            .collect::<Result<Vec<_>>>()?;
        FrameSequence::new(frames, self.meta.frame_rate)
    }
}

pub fn load_sequence(dir: impl AsRef<Path>) -> Result<FrameSequence> {
    SequenceDir::open(dir)?.load()
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}
