//! Burns detection boxes and labels into an image.

use super::Image;
use crate::model::Label;
use crate::postproc::Detection;

const MASK_COLOR: [u8; 3] = [40, 200, 60];
const NOMASK_COLOR: [u8; 3] = [230, 40, 40];
const OTHER_COLOR: [u8; 3] = [240, 200, 30];

/// 3x5 glyphs, one row per byte, low three bits used (bit 2 = left).
fn glyph(c: char) -> [u8; 5] {
    match c {
        '0' => [7, 5, 5, 5, 7],
        '1' => [2, 6, 2, 2, 7],
        '2' => [7, 1, 7, 4, 7],
        '3' => [7, 1, 7, 1, 7],
        '4' => [5, 5, 7, 1, 1],
        '5' => [7, 4, 7, 1, 7],
        '6' => [7, 4, 7, 5, 7],
        '7' => [7, 1, 1, 1, 1],
        '8' => [7, 5, 7, 5, 7],
        '9' => [7, 5, 7, 1, 7],
        '.' => [0, 0, 0, 0, 2],
        'a' => [0, 6, 1, 7, 7],
        'c' => [0, 7, 4, 4, 7],
        'e' => [7, 5, 7, 4, 7],
        'f' => [3, 4, 7, 4, 4],
        'k' => [4, 5, 6, 5, 5],
        'm' => [0, 7, 7, 5, 5],
        'n' => [0, 6, 5, 5, 5],
        'o' => [0, 7, 5, 5, 7],
        's' => [0, 7, 6, 3, 7],
        _ => [0; 5],
    }
}

fn set(img: &mut Image, y: i64, x: i64, color: [u8; 3]) {
    if y < 0 || x < 0 || y >= img.height() as i64 || x >= img.width() as i64 {
        return;
    }
    let w = img.width();
    img.data_mut()[(y as usize * w + x as usize) * 3..][..3].copy_from_slice(&color);
}

fn draw_text(img: &mut Image, y: i64, x: i64, text: &str, color: [u8; 3]) {
    for (i, ch) in text.chars().enumerate() {
        for (row, bits) in glyph(ch).iter().enumerate() {
            for col in 0..3 {
                if bits & (4 >> col) != 0 {
                    set(img, y + row as i64, x + (i * 4 + col) as i64, color);
                }
            }
        }
    }
}

/// Draws each detection's box outline and a `<label> <score>` caption.
pub fn annotate(img: &Image, detections: &[Detection], class_names: &[String]) -> Image {
    let mut out = img.clone();
    let (h, w) = (img.height() as f32, img.width() as f32);
    for d in detections {
        let color = match Label::from_class_id(d.class_id) {
            Some(Label::Mask) => MASK_COLOR,
            Some(Label::NoMask) => NOMASK_COLOR,
            None => OTHER_COLOR,
        };
        let y0 = (d.bbox.ymin * h).round() as i64;
        let x0 = (d.bbox.xmin * w).round() as i64;
        let y1 = ((d.bbox.ymax * h).round() as i64 - 1).max(y0);
        let x1 = ((d.bbox.xmax * w).round() as i64 - 1).max(x0);
        for x in x0..=x1 {
            set(&mut out, y0, x, color);
            set(&mut out, y1, x, color);
        }
        for y in y0..=y1 {
            set(&mut out, y, x0, color);
            set(&mut out, y, x1, color);
        }
        let name = class_names
            .get(d.class_id as usize - 1)
            .map_or("?", String::as_str);
        let caption = format!("{name} {:.2}", d.score);
        let ty = if y0 >= 7 { y0 - 6 } else { y1 + 2 };
        draw_text(&mut out, ty, x0, &caption, color);
    }
    out
}
