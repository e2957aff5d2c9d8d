use rand::Rng;

/// One draw of the augmentation: independent flips and per-axis
/// magnification factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub flip_vertical: bool,
    pub flip_horizontal: bool,
    pub scale_h: f64,
    pub scale_w: f64,
}

impl AugmentParams {
    pub const IDENTITY: AugmentParams =
        AugmentParams { flip_vertical: false, flip_horizontal: false, scale_h: 1.0, scale_w: 1.0 };

    /// Flips with probability 1/2 each, scale factors uniform on `[1, 2]`.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        AugmentParams {
            flip_vertical: rng.random_bool(0.5),
            flip_horizontal: rng.random_bool(0.5),
            scale_h: rng.random_range(1.0..=2.0),
            scale_w: rng.random_range(1.0..=2.0),
        }
    }
}

/// Random flips and anisotropic magnification of a `(C, H, W)` image,
/// centre-cropped back to `(H, W)`.
pub fn augment<R: Rng + ?Sized>(image: &[f64], shape: [usize; 3], rng: &mut R) -> Vec<f64> {
    augment_with(image, shape, AugmentParams::sample(rng))
}

/// Deterministic form of [`augment`].
///
/// Output pixel `(i, j)` samples the magnified image at the matching point of
/// a centred `H x W` window, i.e. source row `(i + 0.5 - H/2) / s_h + H/2 - 0.5`
/// (likewise for columns), read with bilinear interpolation and edge clamping.
/// Every output is a convex combination of input pixels.
pub fn augment_with(image: &[f64], shape: [usize; 3], p: AugmentParams) -> Vec<f64> {
    let [c, h, w] = shape;
    assert_eq!(image.len(), c * h * w, "image does not match shape");
    let rows: Vec<(usize, usize, f64)> = (0..h).map(|i| source_coord(i, h, p.scale_h)).collect();
    let cols: Vec<(usize, usize, f64)> = (0..w).map(|j| source_coord(j, w, p.scale_w)).collect();
    let mut out = vec![0.0; image.len()];
    for ch in 0..c {
        let src = &image[ch * h * w..(ch + 1) * h * w];
        let dst = &mut out[ch * h * w..(ch + 1) * h * w];
        for (i, &(r0, r1, fy)) in rows.iter().enumerate() {
            let oi = if p.flip_vertical { h - 1 - i } else { i };
            for (j, &(c0, c1, fx)) in cols.iter().enumerate() {
                let oj = if p.flip_horizontal { w - 1 - j } else { j };
                let top = lerp(src[r0 * w + c0], src[r0 * w + c1], fx);
                let bottom = lerp(src[r1 * w + c0], src[r1 * w + c1], fx);
                dst[oi * w + oj] = lerp(top, bottom, fy);
            }
        }
    }
    out
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        a
    } else {
        a * (1.0 - t) + b * t
    }
}

/// Neighbouring source indices and interpolation weight for one output index.
fn source_coord(i: usize, len: usize, scale: f64) -> (usize, usize, f64) {
    let half = len as f64 / 2.0;
    let pos = ((i as f64 + 0.5 - half) / scale + half - 0.5).clamp(0.0, (len - 1) as f64);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(len - 1);
    (lo, hi, pos - lo as f64)
}
