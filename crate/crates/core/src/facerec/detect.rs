use std::cmp::Ordering;
use std::time::Instant;

use bytes::BufMut;

use super::{FaceError, FaceModel, UNKNOWN_LABEL};
use crate::image::{AreaResampler, GrayImage};
use crate::wire::payload::{get_f64, get_str, get_u16, get_u32, get_u8, put_str, PayloadError, PayloadResult};
use crate::wire::{FramePayload, WirePayload};

const NMS_IOU: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectParams {
    pub stride: usize,
    pub scales: Vec<f64>,
}

impl DetectParams {
    /// Stride of a quarter patch width and scales 1, 1.5 and 2.
    pub fn for_model(model: &FaceModel) -> Self {
        Self {
            stride: (model.width / 4).max(1),
            scales: vec![1.0, 1.5, 2.0],
        }
    }
}

/// A face-like window found by the sliding-window search.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub dffs: f64,
    pub weights: Vec<f64>,
}

impl Detection {
    fn iou(&self, other: &Detection) -> f64 {
        let ix = (self.x + self.w).min(other.x + other.w).saturating_sub(self.x.max(other.x));
        let iy = (self.y + self.h).min(other.y + other.h).saturating_sub(self.y.max(other.y));
        let inter = (ix * iy) as f64;
        let union = (self.w * self.h + other.w * other.h) as f64 - inter;
        inter / union
    }
}

/// Slides the model-sized window over the frame at every scale that fits and
/// keeps the windows close enough to face space, after non-maximum
/// suppression. Results are ordered by ascending DFFS.
pub fn detect(frame: &GrayImage, model: &FaceModel, params: &DetectParams) -> Result<Vec<Detection>, FaceError> {
    if params.stride == 0 {
        return Err(FaceError::InvalidArgument("stride must be at least 1".into()));
    }
    if params.scales.is_empty() || params.scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(FaceError::InvalidArgument(format!("bad scales {:?}", params.scales)));
    }
    let windows: Vec<(usize, usize)> = params
        .scales
        .iter()
        .map(|s| {
            (
                ((model.width as f64 * s).round() as usize).max(1),
                ((model.height as f64 * s).round() as usize).max(1),
            )
        })
        .collect();
    let smallest = *windows.iter().min_by_key(|(w, h)| w * h).expect("scales non-empty");
    if smallest.0 > frame.width || smallest.1 > frame.height {
        return Err(FaceError::FrameTooSmall {
            frame_w: frame.width,
            frame_h: frame.height,
            win_w: smallest.0,
            win_h: smallest.1,
        });
    }

    let mut candidates = Vec::new();
    let mut patch = Vec::with_capacity(model.dims());
    for &(ww, wh) in &windows {
        if ww > frame.width || wh > frame.height {
            continue;
        }
        let resampler = AreaResampler::new(ww, wh, model.width, model.height);
        for y in (0..=frame.height - wh).step_by(params.stride) {
            for x in (0..=frame.width - ww).step_by(params.stride) {
                resampler.sample(frame, x, y, &mut patch);
                let (weights, dffs) = model.analyze_unit(&patch)?;
                if dffs <= model.theta_dffs {
                    candidates.push(Detection {
                        x,
                        y,
                        w: ww,
                        h: wh,
                        dffs,
                        weights,
                    });
                }
            }
        }
    }

    candidates.sort_by(|a, b| {
        a.dffs
            .total_cmp(&b.dffs)
            .then((a.y, a.x, a.w).cmp(&(b.y, b.x, b.w)))
    });
    let mut kept: Vec<Detection> = Vec::new();
    for c in candidates {
        if kept.iter().all(|k| k.iou(&c) <= NMS_IOU) {
            kept.push(c);
        }
    }
    Ok(kept)
}

/// A labeled face in a recognition result. `label` is `None` for an unknown face.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceBox {
    pub x: u16,
    pub y: u16,
    pub w: u16,
    pub h: u16,
    pub label: Option<String>,
    /// Distance to the nearest class center in weight space.
    pub distance: f64,
}

impl FaceBox {
    pub fn display_label(&self) -> &str {
        self.label.as_deref().unwrap_or(UNKNOWN_LABEL)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecognitionResult {
    pub frame_seq: u32,
    pub processing_time_ms: f64,
    pub boxes: Vec<FaceBox>,
}

impl RecognitionResult {
    /// Labels in box order, unknown faces as `UNKNOWN`.
    pub fn labels(&self) -> Vec<&str> {
        self.boxes.iter().map(FaceBox::display_label).collect()
    }

    /// Wire encoding with the timing field zeroed, for comparing what was
    /// computed independently of how long it took.
    pub fn content_bytes(&self) -> Vec<u8> {
        Self {
            processing_time_ms: 0.0,
            ..self.clone()
        }
        .to_bytes()
    }
}

/// Detects, projects and classifies every face in the frame.
pub fn recognize_frame(frame: &FramePayload, model: &FaceModel) -> Result<RecognitionResult, FaceError> {
    let started = Instant::now();
    let image = GrayImage::new(frame.width as usize, frame.height as usize, frame.pixels.clone())?;
    let detections = detect(&image, model, &DetectParams::for_model(model))?;
    let boxes = detections
        .into_iter()
        .map(|d| {
            let c = model.classify(&d.weights);
            FaceBox {
                x: d.x as u16,
                y: d.y as u16,
                w: d.w as u16,
                h: d.h as u16,
                label: c.label,
                distance: c.distance,
            }
        })
        .collect();
    Ok(RecognitionResult {
        frame_seq: frame.frame_seq,
        processing_time_ms: started.elapsed().as_secs_f64() * 1000.0,
        boxes,
    })
}

impl WirePayload for RecognitionResult {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.put_u32(self.frame_seq);
        out.put_f64(self.processing_time_ms);
        out.put_u16(self.boxes.len() as u16);
        for b in &self.boxes {
            out.put_u16(b.x);
            out.put_u16(b.y);
            out.put_u16(b.w);
            out.put_u16(b.h);
            match &b.label {
                Some(label) => {
                    out.put_u8(1);
                    put_str(out, label);
                }
                None => out.put_u8(0),
            }
            out.put_f64(b.distance);
        }
    }

    fn decode_from(buf: &mut &[u8]) -> PayloadResult<Self> {
        let frame_seq = get_u32(buf, "frame_seq")?;
        let processing_time_ms = get_f64(buf, "processing_time_ms")?;
        let count = get_u16(buf, "box count")?;
        let mut boxes = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let x = get_u16(buf, "box x")?;
            let y = get_u16(buf, "box y")?;
            let w = get_u16(buf, "box w")?;
            let h = get_u16(buf, "box h")?;
            let label = match get_u8(buf, "label flag")? {
                0 => None,
                1 => Some(get_str(buf, "label")?),
                other => {
                    return Err(PayloadError::Invalid {
                        field: "label flag",
                        reason: other.to_string(),
                    })
                }
            };
            let distance = get_f64(buf, "distance")?;
            if distance.partial_cmp(&0.0) == Some(Ordering::Less) {
                return Err(PayloadError::Invalid {
                    field: "distance",
                    reason: format!("{distance} is negative"),
                });
            }
            boxes.push(FaceBox {
                x,
                y,
                w,
                h,
                label,
                distance,
            });
        }
        Ok(Self {
            frame_seq,
            processing_time_ms,
            boxes,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::facerec::GalleryImage;

    fn bars_model() -> FaceModel {
        // 8x8 patterns: vertical bar, horizontal bar, cross
        let mut imgs = Vec::new();
        for (label, f) in [
            ("h", (|_x: usize, y: usize| y == 3 || y == 4) as fn(usize, usize) -> bool),
            ("v", |x, _y| x == 3 || x == 4),
            ("x", |x, y| x == y || x + y == 7),
        ] {
            let pixels = (0..64).map(|i| if f(i % 8, i / 8) { 250 } else { 20 }).collect();
            imgs.push(GalleryImage::new(label, GrayImage::new(8, 8, pixels).unwrap()));
        }
        FaceModel::train(&imgs, 2).unwrap()
    }

    #[test]
    fn gallery_image_as_full_frame() {
        let m = bars_model();
        let img = GrayImage::new(8, 8, (0..64).map(|i| if i % 8 == 3 || i % 8 == 4 { 250 } else { 20 }).collect())
            .unwrap();
        let frame = FramePayload::new(4, 0, 8, 8, img.pixels.clone()).unwrap();
        let r = recognize_frame(&frame, &m).unwrap();
        assert_eq!(r.frame_seq, 4);
        assert_eq!(r.boxes.len(), 1);
        assert_eq!((r.boxes[0].x, r.boxes[0].y, r.boxes[0].w, r.boxes[0].h), (0, 0, 8, 8));
        assert_eq!(r.labels(), vec!["v"]);
        let d = detect(&img, &m, &DetectParams::for_model(&m)).unwrap();
        assert!(d[0].dffs <= 1e-6);
    }

    #[test]
    fn uniform_frame_has_no_faces() {
        let m = bars_model();
        let frame = FramePayload::new(0, 0, 40, 30, vec![77; 1200]).unwrap();
        assert!(recognize_frame(&frame, &m).unwrap().boxes.is_empty());
    }

    #[test]
    fn frame_too_small() {
        let m = bars_model();
        let frame = GrayImage::filled(7, 20, 0);
        assert!(matches!(
            detect(&frame, &m, &DetectParams::for_model(&m)),
            Err(FaceError::FrameTooSmall { .. })
        ));
    }

    #[test]
    fn nms_keeps_lowest_dffs() {
        let a = Detection {
            x: 0,
            y: 0,
            w: 10,
            h: 10,
            dffs: 0.0,
            weights: vec![],
        };
        let mut b = a.clone();
        b.x = 5;
        assert!((a.iou(&b) - 50.0 / 150.0).abs() < 1e-12);
        b.x = 10;
        assert_eq!(a.iou(&b), 0.0);
    }

    #[test]
    fn result_wire_round_trip() {
        let r = RecognitionResult {
            frame_seq: 9,
            processing_time_ms: 12.5,
            boxes: vec![
                FaceBox {
                    x: 1,
                    y: 2,
                    w: 32,
                    h: 32,
                    label: Some("alice".into()),
                    distance: 0.25,
                },
                FaceBox {
                    x: 100,
                    y: 2,
                    w: 48,
                    h: 48,
                    label: None,
                    distance: 3.0,
                },
            ],
        };
        assert_eq!(RecognitionResult::from_bytes(&r.to_bytes()).unwrap(), r);
        assert_eq!(r.labels(), vec!["alice", "UNKNOWN"]);
        let mut later = r.clone();
        later.processing_time_ms = 99.0;
        assert_eq!(later.content_bytes(), r.content_bytes());
    }
}
