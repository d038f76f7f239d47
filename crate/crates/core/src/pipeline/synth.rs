//! Seeded synthetic scenes: a noisy gradient background with one to three
//! elliptical faces, each either wearing a mask over its lower half or not.

use super::Image;
use crate::model::Label;
use crate::postproc::{iou, BBox};
use crate::rng::XorShift64Star;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub bbox: BBox,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image: Image,
    pub objects: Vec<SceneObject>,
}

const SKIN: [[u8; 3]; 4] = [[241, 194, 125], [224, 172, 105], [141, 85, 36], [198, 134, 66]];
const MASKS: [[u8; 3]; 4] = [[170, 210, 240], [245, 245, 245], [30, 30, 35], [90, 140, 200]];

fn random_color(rng: &mut XorShift64Star) -> [f32; 3] {
    [0, 1, 2].map(|_| rng.uniform(20.0, 235.0))
}

pub fn synthetic_scene(seed: u64, height: usize, width: usize) -> Scene {
    let mut rng = XorShift64Star::new(seed);
    let (top, bottom) = (random_color(&mut rng), random_color(&mut rng));
    let mut data = Vec::with_capacity(height * width * 3);
    for y in 0..height {
        let t = if height > 1 { y as f32 / (height - 1) as f32 } else { 0.0 };
        for _ in 0..width {
            for c in 0..3 {
                let noise = rng.uniform(-12.0, 12.0);
                data.push((top[c] + (bottom[c] - top[c]) * t + noise).clamp(0.0, 255.0) as u8);
            }
        }
    }

    let min_side = height.min(width) as f32;
    let wanted = 1 + rng.below(3) as usize;
    let mut objects: Vec<SceneObject> = Vec::new();
    for _ in 0..wanted * 8 {
        if objects.len() == wanted {
            break;
        }
        let fh = (rng.uniform(0.25, 0.55) * min_side).max(4.0);
        let fw = (fh * rng.uniform(0.7, 0.9)).max(3.0);
        let y0 = rng.uniform(0.0, (height as f32 - fh).max(0.0)).floor();
        let x0 = rng.uniform(0.0, (width as f32 - fw).max(0.0)).floor();
        let (y1, x1) = ((y0 + fh).min(height as f32), (x0 + fw).min(width as f32));
        let bbox = BBox::new(
            y0 / height as f32,
            x0 / width as f32,
            y1 / height as f32,
            x1 / width as f32,
        );
        if objects.iter().any(|o| iou(&o.bbox, &bbox) > 0.0) {
            continue;
        }
        let label = if rng.below(2) == 0 { Label::Mask } else { Label::NoMask };
        let skin = SKIN[rng.below(SKIN.len() as u64) as usize];
        let mask = MASKS[rng.below(MASKS.len() as u64) as usize];
        paint_face(&mut data, width, (y0, x0, y1, x1), skin, (label == Label::Mask).then_some(mask));
        objects.push(SceneObject { bbox, label });
    }
    Scene {
        image: Image::new(height, width, data).expect("length matches"),
        objects,
    }
}

fn paint_face(data: &mut [u8], width: usize, (y0, x0, y1, x1): (f32, f32, f32, f32), skin: [u8; 3], mask: Option<[u8; 3]>) {
    let (cy, cx) = ((y0 + y1) / 2.0, (x0 + x1) / 2.0);
    let (ry, rx) = ((y1 - y0) / 2.0, (x1 - x0) / 2.0);
    let mut put = |y: usize, x: usize, c: [u8; 3]| data[(y * width + x) * 3..][..3].copy_from_slice(&c);
    for y in y0 as usize..y1 as usize {
        for x in x0 as usize..x1 as usize {
            let (v, u) = ((y as f32 + 0.5 - cy) / ry, (x as f32 + 0.5 - cx) / rx);
            if u * u + v * v > 1.0 {
                continue;
            }
            let eye = (v + 0.25).abs() < 0.15 && ((u - 0.4).abs() < 0.15 || (u + 0.4).abs() < 0.15);
            let color = match mask {
                Some(m) if v > 0.1 => m,
                None if (v - 0.5).abs() < 0.08 && u.abs() < 0.35 => [170, 40, 50],
                _ if eye => [25, 20, 20],
                _ => skin,
            };
            put(y, x, color);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_seed_sensitive() {
        assert_eq!(synthetic_scene(5, 64, 48), synthetic_scene(5, 64, 48));
        assert_ne!(synthetic_scene(5, 64, 48).image, synthetic_scene(6, 64, 48).image);
    }

    #[test]
    fn objects_are_valid_and_disjoint() {
        for seed in 0..50 {
            let s = synthetic_scene(seed, 96, 128);
            assert!(!s.objects.is_empty() && s.objects.len() <= 3);
            for (i, a) in s.objects.iter().enumerate() {
                assert!(a.bbox.is_normalized() && a.bbox.is_proper(), "{:?}", a.bbox);
                for b in &s.objects[i + 1..] {
                    assert_eq!(iou(&a.bbox, &b.bbox), 0.0);
                }
            }
        }
    }
}
