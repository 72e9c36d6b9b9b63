//! Deterministic synthetic faces, probes and test frames.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use rand_pcg::Pcg64;

use super::{FaceModel, GalleryImage};
use crate::image::GrayImage;
use crate::wire::FramePayload;

const NAMES: [&str; 10] = [
    "alice", "bob", "carol", "dave", "erin", "frank", "grace", "heidi", "ivan", "judy",
];

/// Gray-level standard deviation of the per-image sensor noise.
pub const GALLERY_NOISE_SIGMA: f64 = 5.0;

pub fn identity_name(index: usize) -> String {
    NAMES
        .get(index)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("id{index:02}"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceGenSpec {
    pub identities: usize,
    pub per_identity: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub noise_sigma: f64,
}

impl FaceGenSpec {
    pub fn new(identities: usize, per_identity: usize, width: usize, height: usize, seed: u64) -> Self {
        Self {
            identities,
            per_identity,
            width,
            height,
            seed,
            noise_sigma: GALLERY_NOISE_SIGMA,
        }
    }

    /// 10 identities x 5 images, 32x32, seed 42.
    pub fn standard() -> Self {
        Self::new(10, 5, 32, 32, 42)
    }
}

struct Blob {
    cx: f64,
    cy: f64,
    sigma: f64,
    amplitude: f64,
}

/// Procedural face parameters, in coordinates normalized to [0, 1].
struct Identity {
    background: f64,
    skin: f64,
    face_rx: f64,
    face_ry: f64,
    hairline: f64,
    hair: f64,
    eye_y: f64,
    eye_dx: f64,
    eye_r: f64,
    eye: f64,
    mouth_y: f64,
    mouth_hw: f64,
    mouth_hh: f64,
    mouth: f64,
    blobs: Vec<Blob>,
}

impl Identity {
    fn random(rng: &mut Pcg64) -> Self {
        let blobs = (0..3)
            .map(|_| Blob {
                cx: rng.random_range(0.25..0.75),
                cy: rng.random_range(0.25..0.8),
                sigma: rng.random_range(0.05..0.1),
                amplitude: rng.random_range(-60.0..60.0),
            })
            .collect();
        Self {
            background: rng.random_range(40.0..90.0),
            skin: rng.random_range(150.0..220.0),
            face_rx: rng.random_range(0.30..0.40),
            face_ry: rng.random_range(0.38..0.46),
            hairline: rng.random_range(0.12..0.30),
            hair: rng.random_range(10.0..80.0),
            eye_y: rng.random_range(0.38..0.45),
            eye_dx: rng.random_range(0.14..0.22),
            eye_r: rng.random_range(0.05..0.08),
            eye: rng.random_range(20.0..70.0),
            mouth_y: rng.random_range(0.68..0.76),
            mouth_hw: rng.random_range(0.10..0.20),
            mouth_hh: rng.random_range(0.03..0.05),
            mouth: rng.random_range(40.0..100.0),
            blobs,
        }
    }

    fn intensity(&self, u: f64, v: f64) -> f64 {
        let (fx, fy) = ((u - 0.5) / self.face_rx, (v - 0.52) / self.face_ry);
        if fx * fx + fy * fy > 1.0 {
            return self.background;
        }
        if v < self.hairline {
            return self.hair;
        }
        let mut value = self.skin;
        for b in &self.blobs {
            let d2 = (u - b.cx).powi(2) + (v - b.cy).powi(2);
            value += b.amplitude * (-d2 / (2.0 * b.sigma * b.sigma)).exp();
        }
        for side in [-1.0, 1.0] {
            let (ex, ey) = (u - (0.5 + side * self.eye_dx), v - self.eye_y);
            if ex * ex + ey * ey <= self.eye_r * self.eye_r {
                value = self.eye;
            }
        }
        let (mx, my) = ((u - 0.5) / self.mouth_hw, (v - self.mouth_y) / self.mouth_hh);
        if mx * mx + my * my <= 1.0 {
            value = self.mouth;
        }
        value
    }

    fn render(&self, width: usize, height: usize) -> Vec<f64> {
        (0..height)
            .flat_map(|y| {
                (0..width).map(move |x| {
                    self.intensity((x as f64 + 0.5) / width as f64, (y as f64 + 0.5) / height as f64)
                })
            })
            .collect()
    }
}

fn quantize(values: impl Iterator<Item = f64>) -> Vec<u8> {
    values.map(|v| v.round().clamp(0.0, 255.0) as u8).collect()
}

/// Gallery of procedural identities with seeded per-image noise; identical
/// specs give identical images.
pub fn generate_gallery(spec: &FaceGenSpec) -> Vec<GalleryImage> {
    let mut rng = Pcg64::seed_from_u64(spec.seed);
    let identities: Vec<Identity> = (0..spec.identities).map(|_| Identity::random(&mut rng)).collect();
    let noise = Normal::new(0.0, spec.noise_sigma.max(0.0)).expect("finite sigma");
    let mut out = Vec::with_capacity(spec.identities * spec.per_identity);
    for (i, id) in identities.iter().enumerate() {
        let base = id.render(spec.width, spec.height);
        for _ in 0..spec.per_identity {
            let pixels = quantize(base.iter().map(|&v| v + noise.sample(&mut rng)));
            let image = GrayImage::new(spec.width, spec.height, pixels).expect("spec dimensions");
            out.push(GalleryImage::new(identity_name(i), image));
        }
    }
    out
}

/// Eigenfaces kept by [`standard_model`].
pub const STANDARD_K: usize = 10;

/// The model trained on the standard gallery, as used by the demo platform,
/// the scenarios and the benchmarks.
pub fn standard_model() -> FaceModel {
    FaceModel::train(&generate_gallery(&FaceGenSpec::standard()), STANDARD_K).expect("standard gallery trains")
}

/// Copy of `image` with additive gaussian noise of `sigma` gray levels.
pub fn noisy_probe(image: &GrayImage, sigma: f64, rng: &mut impl Rng) -> GrayImage {
    let noise = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
    let pixels = quantize(image.pixels.iter().map(|&p| p as f64 + noise.sample(rng)));
    GrayImage::new(image.width, image.height, pixels).expect("same dimensions")
}

/// Independent uniform pixels.
pub fn uniform_noise_frame(width: usize, height: usize, seed: u64) -> GrayImage {
    let mut rng = Pcg64::seed_from_u64(seed);
    let pixels = (0..width * height).map(|_| rng.random::<u8>()).collect();
    GrayImage::new(width, height, pixels).expect("positive dimensions")
}

/// A frame with faces pasted at known offsets.
#[derive(Debug, Clone)]
pub struct FaceFixture {
    pub frame: GrayImage,
    /// `(label, x, y)` of each pasted face.
    pub faces: Vec<(String, usize, usize)>,
}

/// Two faces of different identities on a flat background, side by side with
/// a gap, at offsets that are multiples of `stride`.
pub fn two_face_fixture(first: &GalleryImage, second: &GalleryImage, stride: usize) -> FaceFixture {
    let (w, h) = (first.image.width, first.image.height);
    let stride = stride.max(1);
    let align = |v: usize| v.div_ceil(stride) * stride;
    let (x1, y1) = (align(w / 2), align(h / 2));
    let (x2, y2) = (align(x1 + 2 * w), align(h));
    let mut frame = GrayImage::filled(align(x2 + w + w / 2), align(y2 + h + h / 2), 128);
    frame.paste(&first.image, x1, y1);
    frame.paste(&second.image, x2, y2);
    FaceFixture {
        frame,
        faces: vec![
            (first.label.clone(), x1, y1),
            (second.label.clone(), x2, y2),
        ],
    }
}

/// Smoothly shaded scene with two gallery faces, cycling through the gallery
/// and across a few stride-aligned placements.
pub fn bench_frame(gallery: &[GalleryImage], index: usize, width: usize, height: usize, stride: usize) -> FaceFixture {
    let mut pixels = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let v = 110.0 + 30.0 * (x as f64 / width as f64 * 3.0).sin() + 20.0 * (y as f64 / height as f64 * 2.0).cos();
            pixels.push(v.round() as u8);
        }
    }
    let mut frame = GrayImage::new(width, height, pixels).expect("positive dimensions");
    let stride = stride.max(1);
    let first = &gallery[index % gallery.len()];
    let start = index * 7 + gallery.len() / 2;
    let second = (0..gallery.len())
        .map(|k| &gallery[(start + k) % gallery.len()])
        .find(|g| g.label != first.label)
        .unwrap_or(first);
    let (fw, fh) = (first.image.width, first.image.height);
    let slots_x = (width / 2).saturating_sub(fw) / stride + 1;
    let slots_y = height.saturating_sub(fh) / stride + 1;
    let x1 = (index * 3 % slots_x) * stride;
    let y1 = (index * 5 % slots_y) * stride;
    let x2 = width / 2 / stride * stride + (index * 2 % slots_x) * stride;
    let y2 = (index * 11 % slots_y) * stride;
    frame.paste(&first.image, x1, y1);
    frame.paste(&second.image, x2.min(width - fw), y2);
    FaceFixture {
        frame,
        faces: vec![
            (first.label.clone(), x1, y1),
            (second.label.clone(), x2.min(width - fw), y2),
        ],
    }
}

/// `n` bench frames as wire payloads, captured every `interval_ms`.
pub fn bench_frames(
    gallery: &[GalleryImage],
    n: usize,
    width: usize,
    height: usize,
    stride: usize,
    interval_ms: u64,
) -> Vec<FramePayload> {
    (0..n)
        .map(|i| {
            let f = bench_frame(gallery, i, width, height, stride);
            FramePayload::new(i as u32, i as u64 * interval_ms, width as u16, height as u16, f.frame.pixels)
                .expect("valid frame")
        })
        .collect()
}
