use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use bytes::{Buf, BufMut};

use super::jacobi::symmetric_eigen;
use super::FaceError;
use crate::image::GrayImage;

/// Eigenpairs below this fraction of the largest eigenvalue are discarded.
const EIGEN_FLOOR: f64 = 1e-10;
/// Classification threshold as a fraction of the widest class separation.
const THETA_FACE_FRACTION: f64 = 0.6;
/// Detection threshold: mean gallery DFFS plus this many standard deviations.
const THETA_DFFS_SIGMAS: f64 = 3.0;
/// Lower bound for the detection threshold; DFFS of an in-span patch is
/// rounding noise, not zero.
const THETA_DFFS_FLOOR: f64 = 1e-6;

const MODEL_MAGIC: &[u8; 4] = b"EFM1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GalleryImage {
    pub label: String,
    pub image: GrayImage,
}

impl GalleryImage {
    pub fn new(label: impl Into<String>, image: GrayImage) -> Self {
        Self {
            label: label.into(),
            image,
        }
    }
}

/// A trained eigenface model. Immutable; share behind an `Arc`.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceModel {
    pub width: usize,
    pub height: usize,
    /// Gallery size the model was trained on.
    pub n_train: usize,
    /// Mean face, pixels in [0, 1].
    pub mean_face: Vec<f64>,
    /// Descending, all positive.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal basis, one `width * height` vector per component.
    pub eigenfaces: Vec<Vec<f64>>,
    pub class_centers: BTreeMap<String, Vec<f64>>,
    pub theta_face: f64,
    pub theta_dffs: f64,
}

/// Nearest identity for a weight vector; `label` is `None` for an unknown face.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub label: Option<String>,
    pub distance: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Makes the largest-magnitude component positive (first one on ties).
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

impl FaceModel {
    /// Trains an eigenface model with the covariance trick: the eigenpairs of
    /// the small N x N Gram matrix `AᵀA` of the difference faces are lifted to
    /// image space as `u = A v / |A v|`.
    pub fn train(gallery: &[GalleryImage], k: usize) -> Result<Self, FaceError> {
        if gallery.len() < 2 {
            return Err(FaceError::GalleryTooSmall(format!("{} images", gallery.len())));
        }
        let labels: BTreeSet<&str> = gallery.iter().map(|g| g.label.as_str()).collect();
        if labels.len() < 2 {
            return Err(FaceError::GalleryTooSmall(format!("{} distinct labels", labels.len())));
        }
        if k == 0 {
            return Err(FaceError::InvalidArgument("k must be at least 1".into()));
        }
        let (width, height) = (gallery[0].image.width, gallery[0].image.height);
        for g in gallery {
            if (g.image.width, g.image.height) != (width, height) {
                return Err(FaceError::DimensionMismatch {
                    expected: (width, height),
                    found: (g.image.width, g.image.height),
                });
            }
        }
        let n = gallery.len();
        let d = width * height;

        let faces: Vec<Vec<f64>> = gallery.iter().map(|g| g.image.to_unit()).collect();
        let mut mean_face = vec![0.0; d];
        for f in &faces {
            for (m, x) in mean_face.iter_mut().zip(f) {
                *m += x;
            }
        }
        mean_face.iter_mut().for_each(|m| *m /= n as f64);
        let diffs: Vec<Vec<f64>> = faces
            .iter()
            .map(|f| f.iter().zip(&mean_face).map(|(x, m)| x - m).collect())
            .collect();

        let mut gram = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = dot(&diffs[i], &diffs[j]);
                gram[i * n + j] = v;
                gram[j * n + i] = v;
            }
        }
        let eig = symmetric_eigen(&gram, n)?;
        let lambda_max = eig.values.first().copied().unwrap_or(0.0);
        if !(lambda_max > 0.0) {
            return Err(FaceError::InsufficientVariance);
        }
        let surviving = eig
            .values
            .iter()
            .take_while(|&&l| l >= EIGEN_FLOOR * lambda_max && l > 0.0)
            .count();
        let k = k.min(surviving);

        let mut eigenfaces = Vec::with_capacity(k);
        for v in eig.vectors.iter().take(k) {
            let mut u = vec![0.0; d];
            for (coef, phi) in v.iter().zip(&diffs) {
                for (ui, p) in u.iter_mut().zip(phi) {
                    *ui += coef * p;
                }
            }
            let norm = dot(&u, &u).sqrt();
            u.iter_mut().for_each(|x| *x /= norm);
            fix_sign(&mut u);
            eigenfaces.push(u);
        }

        let mut model = Self {
            width,
            height,
            n_train: n,
            mean_face,
            eigenvalues: eig.values[..k].to_vec(),
            eigenfaces,
            class_centers: BTreeMap::new(),
            theta_face: 0.0,
            theta_dffs: 0.0,
        };

        let mut sums: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
        let mut dffs = Vec::with_capacity(n);
        for (g, phi) in gallery.iter().zip(&diffs) {
            let w = model.weights_of_difference(phi);
            dffs.push(model.residual_norm(phi, &w));
            let entry = sums.entry(g.label.clone()).or_insert_with(|| (vec![0.0; k], 0));
            entry.0.iter_mut().zip(&w).for_each(|(s, x)| *s += x);
            entry.1 += 1;
        }
        model.class_centers = sums
            .into_iter()
            .map(|(label, (sum, count))| (label, sum.into_iter().map(|s| s / count as f64).collect()))
            .collect();

        let centers: Vec<&Vec<f64>> = model.class_centers.values().collect();
        let mut widest = 0.0f64;
        for i in 0..centers.len() {
            for j in i + 1..centers.len() {
                widest = widest.max(euclidean(centers[i], centers[j]));
            }
        }
        model.theta_face = THETA_FACE_FRACTION * widest;

        let mean = dffs.iter().sum::<f64>() / n as f64;
        let var = dffs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        model.theta_dffs = (mean + THETA_DFFS_SIGMAS * var.sqrt()).max(THETA_DFFS_FLOOR);
        Ok(model)
    }

    pub fn k(&self) -> usize {
        self.eigenfaces.len()
    }

    pub fn dims(&self) -> usize {
        self.width * self.height
    }

    fn check_dims(&self, width: usize, height: usize) -> Result<(), FaceError> {
        if (width, height) != (self.width, self.height) {
            return Err(FaceError::DimensionMismatch {
                expected: (self.width, self.height),
                found: (width, height),
            });
        }
        Ok(())
    }

    fn weights_of_difference(&self, phi: &[f64]) -> Vec<f64> {
        self.eigenfaces.iter().map(|u| dot(u, phi)).collect()
    }

    /// `|phi - U w|`, the distance from face space.
    fn residual_norm(&self, phi: &[f64], weights: &[f64]) -> f64 {
        let mut r = phi.to_vec();
        for (u, w) in self.eigenfaces.iter().zip(weights) {
            for (ri, ui) in r.iter_mut().zip(u) {
                *ri -= w * ui;
            }
        }
        dot(&r, &r).sqrt()
    }

    /// Weights `Uᵀ(Γ - Ψ)` for a patch already scaled to [0, 1].
    pub fn project_unit(&self, patch: &[f64]) -> Result<Vec<f64>, FaceError> {
        if patch.len() != self.dims() {
            return Err(FaceError::DimensionMismatch {
                expected: (self.width, self.height),
                found: (patch.len(), 1),
            });
        }
        let phi: Vec<f64> = patch.iter().zip(&self.mean_face).map(|(x, m)| x - m).collect();
        Ok(self.weights_of_difference(&phi))
    }

    pub fn project(&self, image: &GrayImage) -> Result<Vec<f64>, FaceError> {
        self.check_dims(image.width, image.height)?;
        self.project_unit(&image.to_unit())
    }

    /// Weights and distance-from-face-space of a [0, 1] patch.
    pub fn analyze_unit(&self, patch: &[f64]) -> Result<(Vec<f64>, f64), FaceError> {
        let weights = self.project_unit(patch)?;
        let phi: Vec<f64> = patch.iter().zip(&self.mean_face).map(|(x, m)| x - m).collect();
        let dffs = self.residual_norm(&phi, &weights);
        Ok((weights, dffs))
    }

    pub fn dffs(&self, image: &GrayImage) -> Result<f64, FaceError> {
        self.check_dims(image.width, image.height)?;
        Ok(self.analyze_unit(&image.to_unit())?.1)
    }

    /// Nearest class center; ties go to the smaller label, and anything
    /// farther than `theta_face` is unknown.
    pub fn classify(&self, weights: &[f64]) -> Classification {
        let mut best: Option<(&str, f64)> = None;
        for (label, center) in &self.class_centers {
            let d = euclidean(weights, center);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((label, d));
            }
        }
        match best {
            Some((label, distance)) if distance <= self.theta_face => Classification {
                label: Some(label.to_string()),
                distance,
            },
            Some((_, distance)) => Classification { label: None, distance },
            None => Classification {
                label: None,
                distance: f64::INFINITY,
            },
        }
    }

    /// Serializes to the `EFM1` big-endian model format.
    pub fn to_bytes(&self) -> Vec<u8> {
        let d = self.dims();
        let k = self.k();
        let mut out = Vec::with_capacity(16 + 8 * (d + k + k * d));
        out.put_slice(MODEL_MAGIC);
        out.put_u16(self.width as u16);
        out.put_u16(self.height as u16);
        out.put_u32(self.n_train as u32);
        out.put_u32(k as u32);
        self.mean_face.iter().for_each(|&x| out.put_f64(x));
        self.eigenvalues.iter().for_each(|&x| out.put_f64(x));
        for u in &self.eigenfaces {
            u.iter().for_each(|&x| out.put_f64(x));
        }
        out.put_u32(self.class_centers.len() as u32);
        for (label, center) in &self.class_centers {
            out.put_u16(label.len() as u16);
            out.put_slice(label.as_bytes());
            center.iter().for_each(|&x| out.put_f64(x));
        }
        out.put_f64(self.theta_face);
        out.put_f64(self.theta_dffs);
        out
    }

    pub fn from_bytes(mut buf: &[u8]) -> Result<Self, FaceError> {
        let bad = |what: &str| FaceError::ModelFormat(what.to_string());
        fn need(buf: &[u8], n: usize, what: &str) -> Result<(), FaceError> {
            if buf.remaining() < n {
                Err(FaceError::ModelFormat(format!("truncated at {what}")))
            } else {
                Ok(())
            }
        }
        fn floats(buf: &mut &[u8], n: usize, what: &str) -> Result<Vec<f64>, FaceError> {
            need(buf, n * 8, what)?;
            Ok((0..n).map(|_| buf.get_f64()).collect())
        }
        need(buf, 16, "header")?;
        if &buf[..4] != MODEL_MAGIC {
            return Err(bad("magic is not EFM1"));
        }
        buf.advance(4);
        let width = buf.get_u16() as usize;
        let height = buf.get_u16() as usize;
        let n_train = buf.get_u32() as usize;
        let k = buf.get_u32() as usize;
        let d = width * height;
        if d == 0 {
            return Err(bad("zero image dimensions"));
        }
        let mean_face = floats(&mut buf, d, "mean")?;
        let eigenvalues = floats(&mut buf, k, "eigenvalues")?;
        let eigenfaces = (0..k)
            .map(|_| floats(&mut buf, d, "eigenfaces"))
            .collect::<Result<Vec<_>, _>>()?;
        need(buf, 4, "class count")?;
        let classes = buf.get_u32() as usize;
        let mut class_centers = BTreeMap::new();
        for _ in 0..classes {
            need(buf, 2, "label length")?;
            let len = buf.get_u16() as usize;
            need(buf, len, "label")?;
            let label = String::from_utf8(buf[..len].to_vec()).map_err(|_| bad("label is not UTF-8"))?;
            buf.advance(len);
            class_centers.insert(label, floats(&mut buf, k, "class center")?);
        }
        let thresholds = floats(&mut buf, 2, "thresholds")?;
        if !buf.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self {
            width,
            height,
            n_train,
            mean_face,
            eigenvalues,
            eigenfaces,
            class_centers,
            theta_face: thresholds[0],
            theta_dffs: thresholds[1],
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), FaceError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, FaceError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
