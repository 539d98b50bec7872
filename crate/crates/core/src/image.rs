//! Image ingestion, palette mapping, indexed PNG output, and distortion metrics.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{nearest, normalize, par_sum, Palette, PixelCloud, RawPixel};
use crate::optimizer::unweighted_objective;

/// Decoded 8-bit RGB raster, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawImage {
    width: usize,
    height: usize,
    pixels: Vec<RawPixel>,
}

impl RawImage {
    pub fn new(width: usize, height: usize, pixels: Vec<RawPixel>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "image dimensions {width}x{height} are empty"
            )));
        }
        if width.checked_mul(height) != Some(pixels.len()) {
            return Err(Error::invalid(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(RawImage {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        f: impl Fn(usize, usize) -> RawPixel,
    ) -> Result<Self> {
        let pixels = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[RawPixel] {
        &self.pixels
    }
}

/// A raster stored as palette indices plus an 8-bit palette table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexedImage {
    width: usize,
    height: usize,
    palette: Vec<RawPixel>,
    indices: Vec<u8>,
}

impl IndexedImage {
    pub fn new(
        width: usize,
        height: usize,
        palette: Vec<RawPixel>,
        indices: Vec<u8>,
    ) -> Result<Self> {
        if palette.is_empty() || palette.len() > 256 {
            return Err(Error::invalid(format!(
                "indexed images need 1..=256 palette entries, got {}",
                palette.len()
            )));
        }
        if width == 0 || height == 0 || width.checked_mul(height) != Some(indices.len()) {
            return Err(Error::invalid(format!(
                "{width}x{height} indexed image with {} indices",
                indices.len()
            )));
        }
        if let Some(i) = indices.iter().find(|i| usize::from(**i) >= palette.len()) {
            return Err(Error::invalid(format!(
                "index {i} out of range for a {}-color palette",
                palette.len()
            )));
        }
        Ok(IndexedImage {
            width,
            height,
            palette,
            indices,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn palette(&self) -> &[RawPixel] {
        &self.palette
    }

    pub fn indices(&self) -> &[u8] {
        &self.indices
    }

    /// Expand back to an RGB raster.
    pub fn reconstruct(&self) -> RawImage {
        RawImage {
            width: self.width,
            height: self.height,
            pixels: self
                .indices
                .iter()
                .map(|&i| self.palette[usize::from(i)])
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressionMetrics {
    pub mse: f64,
    pub transport_value: f64,
    pub original_bytes: u64,
    pub compressed_bytes: u64,
    pub distinct_colors_before: usize,
    pub palette_size_after: usize,
}

/// Decode a JPEG or PNG into 8-bit RGB. Alpha is composited over white and
/// grayscale is replicated across channels.
pub fn load_image(path: impl AsRef<Path>) -> Result<RawImage> {
    let path = path.as_ref();
    let decoded = ::image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::io(path, e))?;
    let (width, height) = (decoded.width() as usize, decoded.height() as usize);
    let pixels = if decoded.color().has_alpha() {
        decoded
            .to_rgba8()
            .pixels()
            .map(|p| {
                let [r, g, b, a] = p.0;
                let over_white = |c: u8| {
                    let (c, a) = (u32::from(c), u32::from(a));
                    ((c * a + 255 * (255 - a) + 127) / 255) as u8
                };
                RawPixel::new(over_white(r), over_white(g), over_white(b))
            })
            .collect()
    } else {
        decoded
            .to_rgb8()
            .pixels()
            .map(|p| RawPixel::new(p.0[0], p.0[1], p.0[2]))
            .collect()
    };
    RawImage::new(width, height, pixels)
}

/// One normalized point per pixel in raster order, each with weight `1/I`.
pub fn build_cloud(img: &RawImage) -> PixelCloud {
    PixelCloud::uniform(img.pixels.iter().copied().map(normalize).collect())
        .expect("images are never empty")
}

/// Assign every pixel to its nearest palette entry, lowest index on ties.
///
/// The stored palette is the 8-bit rounding of `palette`; pass a
/// [`Palette::snapped`] palette to make the assignment nearest with respect to
/// the stored colors. Palettes already on the 8-bit grid are compared in
/// integer arithmetic so that equidistant entries tie exactly.
pub fn map_to_palette(img: &RawImage, palette: &Palette) -> Result<IndexedImage> {
    if palette.len() > 256 {
        return Err(Error::invalid(format!(
            "palette of {} colors does not fit an indexed image",
            palette.len()
        )));
    }
    let colors = palette.colors();
    if colors.is_empty() {
        return Err(Error::invalid("palette is empty"));
    }
    let raw = palette.to_raw();
    let on_grid = raw.iter().zip(colors).all(|(r, c)| normalize(*r) == *c);
    let indices = if on_grid {
        img.pixels
            .par_iter()
            .map(|p| nearest_raw(p, &raw) as u8)
            .collect()
    } else {
        img.pixels
            .par_iter()
            .map(|p| nearest(&normalize(*p), colors).0 as u8)
            .collect()
    };
    IndexedImage::new(img.width, img.height, raw, indices)
}

fn nearest_raw(p: &RawPixel, palette: &[RawPixel]) -> usize {
    let d2 = |q: &RawPixel| {
        let d = |a: u8, b: u8| (i32::from(a) - i32::from(b)).pow(2);
        d(p.r, q.r) + d(p.g, q.g) + d(p.b, q.b)
    };
    let mut best = 0;
    let mut best_d = d2(&palette[0]);
    for (k, q) in palette.iter().enumerate().skip(1) {
        let d = d2(q);
        if d < best_d {
            best = k;
            best_d = d;
        }
    }
    best
}

fn bit_depth_for(colors: usize) -> png::BitDepth {
    match colors {
        0..=2 => png::BitDepth::One,
        3..=4 => png::BitDepth::Two,
        5..=16 => png::BitDepth::Four,
        _ => png::BitDepth::Eight,
    }
}

fn pack_rows(img: &IndexedImage, bits: usize) -> Vec<u8> {
    if bits == 8 {
        return img.indices.clone();
    }
    let per_byte = 8 / bits;
    let row_bytes = img.width.div_ceil(per_byte);
    let mut out = vec![0u8; row_bytes * img.height];
    for (row, out_row) in img.indices.chunks(img.width).zip(out.chunks_mut(row_bytes)) {
        for (x, &i) in row.iter().enumerate() {
            let shift = 8 - bits * (x % per_byte + 1);
            out_row[x / per_byte] |= i << shift;
        }
    }
    out
}

fn unpack_rows(data: &[u8], width: usize, height: usize, bits: usize) -> Vec<u8> {
    if bits == 8 {
        return data[..width * height].to_vec();
    }
    let per_byte = 8 / bits;
    let row_bytes = width.div_ceil(per_byte);
    let mask = (1u8 << bits) - 1;
    let mut out = Vec::with_capacity(width * height);
    for row in data.chunks(row_bytes).take(height) {
        for x in 0..width {
            let shift = 8 - bits * (x % per_byte + 1);
            out.push((row[x / per_byte] >> shift) & mask);
        }
    }
    out
}

/// Write an indexed-color PNG to `sink` with fixed encoder settings, using the
/// smallest bit depth that holds the palette.
pub fn write_indexed_png<W: Write>(img: &IndexedImage, sink: W) -> Result<()> {
    let depth = bit_depth_for(img.palette.len());
    let mut encoder = png::Encoder::new(sink, img.width as u32, img.height as u32);
    encoder.set_color(png::ColorType::Indexed);
    encoder.set_depth(depth);
    encoder.set_compression(png::Compression::High);
    encoder.set_filter(png::Filter::NoFilter);
    let table: Vec<u8> = img.palette.iter().flat_map(|p| [p.r, p.g, p.b]).collect();
    encoder.set_palette(table);
    let png_err = |e: png::EncodingError| Error::io("<png stream>", e);
    let mut writer = encoder.write_header().map_err(png_err)?;
    writer
        .write_image_data(&pack_rows(img, depth as usize))
        .map_err(png_err)?;
    writer.finish().map_err(png_err)
}

/// Write `img` as an indexed PNG at `path` and return the file size in bytes.
pub fn encode_indexed_png(img: &IndexedImage, path: impl AsRef<Path>) -> Result<u64> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut sink = BufWriter::new(file);
    write_indexed_png(img, &mut sink).map_err(|e| match e {
        Error::Io { reason, .. } => Error::io(path, reason),
        other => other,
    })?;
    sink.flush().map_err(|e| Error::io(path, e))?;
    drop(sink);
    Ok(std::fs::metadata(path)
        .map_err(|e| Error::io(path, e))?
        .len())
}

/// Encoded size of `img` as an indexed PNG, without touching the filesystem.
pub fn indexed_png_size(img: &IndexedImage) -> Result<u64> {
    let mut buf = Vec::new();
    write_indexed_png(img, &mut buf)?;
    Ok(buf.len() as u64)
}

/// Encoded size of `img` as a 24-bit truecolor PNG with the same encoder settings.
pub fn rgb_png_size(img: &RawImage) -> Result<u64> {
    let mut buf = Vec::new();
    let mut encoder = png::Encoder::new(&mut buf, img.width as u32, img.height as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    encoder.set_compression(png::Compression::High);
    let png_err = |e: png::EncodingError| Error::io("<png stream>", e);
    let mut writer = encoder.write_header().map_err(png_err)?;
    let data: Vec<u8> = img.pixels.iter().flat_map(|p| [p.r, p.g, p.b]).collect();
    writer.write_image_data(&data).map_err(png_err)?;
    writer.finish().map_err(png_err)?;
    Ok(buf.len() as u64)
}

/// Read back an indexed PNG written by [`encode_indexed_png`].
pub fn decode_indexed_png(path: impl AsRef<Path>) -> Result<IndexedImage> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| Error::io(path, e))?;
    let (width, height, depth, color, table) = {
        let info = reader.info();
        (
            info.width as usize,
            info.height as usize,
            info.bit_depth as usize,
            info.color_type,
            info.palette.as_ref().map(|p| p.to_vec()),
        )
    };
    if color != png::ColorType::Indexed {
        return Err(Error::io(
            path,
            format!("expected an indexed PNG, found {color:?}"),
        ));
    }
    let table = table.ok_or_else(|| Error::io(path, "indexed PNG has no palette"))?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    reader
        .next_frame(&mut buf)
        .map_err(|e| Error::io(path, e))?;
    let palette = table
        .chunks_exact(3)
        .map(|c| RawPixel::new(c[0], c[1], c[2]))
        .collect();
    IndexedImage::new(
        width,
        height,
        palette,
        unpack_rows(&buf, width, height, depth),
    )
}

/// Mean over pixels and channels of the squared difference of normalized values.
pub fn mse(a: &RawImage, b: &RawImage) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::invalid(format!(
            "cannot compare {}x{} with {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let n = a.pixels.len();
    let sum = par_sum(n, |i| {
        let (p, q) = (
            normalize(a.pixels[i]).coords(),
            normalize(b.pixels[i]).coords(),
        );
        (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)
    });
    Ok(sum / (3 * n) as f64)
}

/// Unweighted sum over pixels of `min_k d(ξ_i, y_k)^r`.
pub fn transport_value(cloud: &PixelCloud, palette: &Palette, r: f64) -> f64 {
    unweighted_objective(cloud, palette, r)
}

pub fn count_distinct_colors(img: &RawImage) -> usize {
    let mut seen = vec![0u64; (1 << 24) / 64];
    let mut count = 0;
    for p in &img.pixels {
        let key = (usize::from(p.r) << 16) | (usize::from(p.g) << 8) | usize::from(p.b);
        let (word, bit) = (key / 64, key % 64);
        if seen[word] & (1 << bit) == 0 {
            seen[word] |= 1 << bit;
            count += 1;
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::objective;

    const BLACK: RawPixel = RawPixel::new(0, 0, 0);
    const WHITE: RawPixel = RawPixel::new(255, 255, 255);

    fn gray(v: u8) -> RawPixel {
        RawPixel::new(v, v, v)
    }

    #[test]
    fn cloud_examples() {
        let img = RawImage::new(1, 1, vec![RawPixel::new(255, 0, 0)]).unwrap();
        let cloud = build_cloud(&img);
        assert_eq!(cloud.points()[0].coords(), [1.0, 0.0, 0.0]);
        assert_eq!(cloud.weights(), &[1.0]);

        let img = RawImage::new(2, 2, vec![gray(90); 4]).unwrap();
        let cloud = build_cloud(&img);
        assert_eq!(cloud.len(), 4);
        assert!(cloud.weights().iter().all(|w| *w == 0.25));
    }

    #[test]
    fn raw_image_validation() {
        assert!(RawImage::new(0, 1, vec![]).is_err());
        assert!(RawImage::new(2, 2, vec![BLACK; 3]).is_err());
    }

    #[test]
    fn mse_examples() {
        let black = RawImage::new(2, 2, vec![BLACK; 4]).unwrap();
        let white = RawImage::new(2, 2, vec![WHITE; 4]).unwrap();
        assert_eq!(mse(&black, &black).unwrap(), 0.0);
        assert_eq!(mse(&black, &white).unwrap(), 1.0);
        let wide = RawImage::new(4, 1, vec![BLACK; 4]).unwrap();
        assert!(matches!(mse(&black, &wide), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn transport_value_examples() {
        let img = RawImage::new(2, 1, vec![BLACK, WHITE]).unwrap();
        let cloud = build_cloud(&img);
        let full = Palette::from_raw(&[BLACK, WHITE]).unwrap();
        assert_eq!(transport_value(&cloud, &full, 3.0), 0.0);
        let black_only = Palette::from_raw(&[BLACK]).unwrap();
        let t = transport_value(&cloud, &black_only, 3.0);
        assert!((t - 3f64.sqrt().powi(3)).abs() < 1e-12);
        assert!((t - 5.1961524).abs() < 1e-7);
    }

    #[test]
    fn distinct_color_examples() {
        assert_eq!(
            count_distinct_colors(&RawImage::new(3, 3, vec![gray(7); 9]).unwrap()),
            1
        );
        let ramp = RawImage::from_fn(256, 1, |x, _| gray(x as u8)).unwrap();
        assert_eq!(count_distinct_colors(&ramp), 256);
        let checker =
            RawImage::from_fn(8, 8, |x, y| if (x + y) % 2 == 0 { BLACK } else { WHITE }).unwrap();
        assert_eq!(count_distinct_colors(&checker), 2);
    }

    #[test]
    fn mapping_black_and_white() {
        let img =
            RawImage::from_fn(5, 3, |x, y| if x * y % 2 == 1 { WHITE } else { BLACK }).unwrap();
        let palette = Palette::from_raw(&[BLACK, WHITE]).unwrap();
        let indexed = map_to_palette(&img, &palette).unwrap();
        for (p, i) in img.pixels().iter().zip(indexed.indices()) {
            assert_eq!(*i, u8::from(*p == WHITE));
        }
        assert_eq!(indexed.reconstruct(), img);
    }

    #[test]
    fn gray_ramp_boundaries_sit_at_midpoints() {
        let hexes = ["#3e3e3e", "#707070", "#a1a1a1", "#d7d7d7"];
        let raw: Vec<RawPixel> = hexes
            .iter()
            .map(|h| RawPixel::from_hex(h).unwrap())
            .collect();
        let palette = Palette::from_raw(&raw).unwrap();
        let ramp = RawImage::from_fn(256, 1, |x, _| gray(x as u8)).unwrap();
        let indexed = map_to_palette(&ramp, &palette).unwrap();
        // independent 1-D oracle: pick the gray level with smallest |v - level|,
        // lower index on ties
        let levels = [0x3e_i32, 0x70, 0xa1, 0xd7];
        for v in 0..256i32 {
            let mut best = 0;
            for k in 1..4 {
                if (v - levels[k]).abs() < (v - levels[best]).abs() {
                    best = k;
                }
            }
            assert_eq!(usize::from(indexed.indices()[v as usize]), best, "gray {v}");
        }
        // boundaries: 0x3e/0x70 midpoint is 87, 0x70/0xa1 is 136.5, 0xa1/0xd7 is 188
        assert_eq!(indexed.indices()[87], 0);
        assert_eq!(indexed.indices()[88], 1);
        assert_eq!(indexed.indices()[136], 1);
        assert_eq!(indexed.indices()[137], 2);
        assert_eq!(indexed.indices()[188], 2);
        assert_eq!(indexed.indices()[189], 3);
    }

    #[test]
    fn mse_matches_objective_over_three() {
        let img = RawImage::from_fn(32, 24, |x, y| {
            RawPixel::new((x * 8) as u8, (y * 10) as u8, ((x * y) % 256) as u8)
        })
        .unwrap();
        let palette = Palette::from_raw(&[
            RawPixel::new(10, 20, 30),
            RawPixel::new(200, 100, 50),
            RawPixel::new(120, 220, 90),
        ])
        .unwrap();
        let mapped = map_to_palette(&img, &palette).unwrap().reconstruct();
        let m = mse(&img, &mapped).unwrap();
        let f = objective(&build_cloud(&img), &palette, 2.0);
        assert!((m - f / 3.0).abs() <= 1e-12);
        assert!((0.0..=1.0).contains(&m));
    }

    #[test]
    fn png_round_trip_all_depths() {
        let dir = tempfile::tempdir().unwrap();
        for colors in [1usize, 2, 3, 4, 5, 16, 17, 256] {
            let palette: Vec<RawPixel> = (0..colors)
                .map(|i| RawPixel::new(i as u8, 255 - i as u8, 7))
                .collect();
            let (w, h) = (13, 7);
            let indices = (0..w * h).map(|i| ((i * 31) % colors) as u8).collect();
            let img = IndexedImage::new(w, h, palette, indices).unwrap();
            let path = dir.path().join(format!("p{colors}.png"));
            let bytes = encode_indexed_png(&img, &path).unwrap();
            assert_eq!(bytes, std::fs::metadata(&path).unwrap().len());
            assert_eq!(bytes, indexed_png_size(&img).unwrap());
            assert_eq!(decode_indexed_png(&path).unwrap(), img);
        }
    }

    #[test]
    fn png_decodes_to_palette_colors() {
        let dir = tempfile::tempdir().unwrap();
        let img = RawImage::new(2, 2, vec![BLACK, WHITE, WHITE, BLACK]).unwrap();
        let indexed = map_to_palette(&img, &Palette::from_raw(&[BLACK, WHITE]).unwrap()).unwrap();
        let path = dir.path().join("bw.png");
        encode_indexed_png(&indexed, &path).unwrap();
        assert_eq!(load_image(&path).unwrap(), img);
    }

    #[test]
    fn png_output_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let img =
            IndexedImage::new(4, 4, vec![BLACK, WHITE, gray(9)], [0, 1, 2, 1].repeat(4)).unwrap();
        let (a, b) = (dir.path().join("a.png"), dir.path().join("b.png"));
        encode_indexed_png(&img, &a).unwrap();
        encode_indexed_png(&img, &b).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }

    #[test]
    fn oversized_palettes_are_rejected() {
        assert!(IndexedImage::new(1, 1, vec![BLACK; 257], vec![0]).is_err());
        assert!(IndexedImage::new(1, 1, vec![BLACK], vec![1]).is_err());
        let img = RawImage::new(1, 1, vec![BLACK]).unwrap();
        let big = Palette::from_raw(&vec![BLACK; 257]).unwrap();
        assert!(matches!(
            map_to_palette(&img, &big),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn unwritable_path_is_an_io_error() {
        let img = IndexedImage::new(1, 1, vec![BLACK], vec![0]).unwrap();
        let err = encode_indexed_png(&img, "/nonexistent-dir/x.png").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("/nonexistent-dir/x.png"));
    }

    #[test]
    fn missing_input_is_an_io_error() {
        let err = load_image("/definitely/not/here.png").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
