use superlime::{Image, Mask, Rgb};

pub const OVERLAY_COLOR: Rgb = [255, 255, 0];
/// Brightness kept outside the explanation mask.
pub const DIM_FACTOR: f64 = 0.3;

/// Copy of `img` with every pixel outside `mask` scaled by `factor`.
pub fn dim_outside(img: &Image, mask: &Mask, factor: f64) -> Image {
    assert_eq!(img.dims(), mask.dims());
    let mut out = img.clone();
    for (p, &keep) in out.pixels_mut().iter_mut().zip(mask.bits()) {
        if !keep {
            *p = p.map(|c| (c as f64 * factor).round() as u8);
        }
    }
    out
}
