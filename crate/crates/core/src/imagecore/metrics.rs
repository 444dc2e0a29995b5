use super::image::Image;
use super::mask::RegionMask;
use crate::error::{Error, Result};

/// PSNR reported when two images are identical.
pub const PSNR_CAP_DB: f64 = 100.0;

/// Mean squared difference over masked pixels and all channels.
pub fn mse<const C: usize>(a: &Image<C>, b: &Image<C>, mask: Option<&RegionMask>) -> Result<f64> {
    if !a.same_dims(b) {
        return Err(Error::Dimension(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let n = a.pixel_count();
    let mut sum = 0.0f64;
    let mut count = 0usize;
    match mask {
        Some(m) => {
            if m.width() != a.width() || m.height() != a.height() {
                return Err(Error::Dimension("mask size differs from image".into()));
            }
            let bits = m.bits();
            for c in 0..C {
                let (pa, pb) = (a.plane(c), b.plane(c));
                for i in (0..n).filter(|&i| bits[i]) {
                    let d = (pa[i] - pb[i]) as f64;
                    sum += d * d;
                    count += 1;
                }
            }
            if count == 0 {
                return Err(Error::UndefinedRegion(format!("{} mask is empty", m.kind().name())));
            }
        }
        None => {
            for (x, y) in a.data().iter().zip(b.data()) {
                let d = (x - y) as f64;
                sum += d * d;
            }
            count = C * n;
        }
    }
    Ok(sum / count as f64)
}

/// `10 log10(1 / mse)` with peak 1.0; identical inputs give [`PSNR_CAP_DB`].
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP_DB
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

pub fn psnr<const C: usize>(a: &Image<C>, b: &Image<C>, mask: Option<&RegionMask>) -> Result<f64> {
    mse(a, b, mask).map(psnr_from_mse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::{ImageRgb, RegionKind};
    use approx::assert_abs_diff_eq;

    #[test]
    fn closed_forms() {
        let a = ImageRgb::zeros(8, 8).unwrap();
        let b = ImageRgb::filled(8, 8, 0.5).unwrap();
        assert_eq!(mse(&a, &a, None).unwrap(), 0.0);
        assert_eq!(mse(&a, &b, None).unwrap(), 0.25);
        assert_abs_diff_eq!(psnr(&a, &b, None).unwrap(), 6.0206, epsilon = 1e-3);
        assert_eq!(psnr(&a, &a, None).unwrap(), 100.0);
        assert_abs_diff_eq!(psnr_from_mse(0.01), 20.0, epsilon = 1e-12);
    }

    #[test]
    fn half_mask_brute_force() {
        let a = ImageRgb::zeros(8, 8).unwrap();
        let mut b = ImageRgb::zeros(8, 8).unwrap();
        let mut mask = RegionMask::empty(RegionKind::Target, 8, 8);
        for y in 0..8 {
            for x in 0..4 {
                b.set_pixel(x, y, [0.1; 3]);
                mask.set(x, y, true);
            }
        }
        // independent oracle: explicit loops over masked/unmasked pixels
        let (mut s_m, mut n_m, mut s_all) = (0.0f64, 0, 0.0f64);
        for c in 0..3 {
            for y in 0..8 {
                for x in 0..8 {
                    let d = (a.get(c, x, y) - b.get(c, x, y)) as f64;
                    s_all += d * d;
                    if mask.get(x, y) {
                        s_m += d * d;
                        n_m += 1;
                    }
                }
            }
        }
        assert_abs_diff_eq!(mse(&a, &b, Some(&mask)).unwrap(), s_m / n_m as f64, epsilon = 1e-12);
        assert_abs_diff_eq!(mse(&a, &b, None).unwrap(), s_all / 192.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mse(&a, &b, Some(&mask)).unwrap(), 0.01, epsilon = 1e-8);
        assert_abs_diff_eq!(mse(&a, &b, None).unwrap(), 0.005, epsilon = 1e-8);
    }

    #[test]
    fn empty_mask_is_undefined() {
        let a = ImageRgb::zeros(8, 8).unwrap();
        let mask = RegionMask::empty(RegionKind::Nontarget, 8, 8);
        assert!(matches!(mse(&a, &a, Some(&mask)), Err(Error::UndefinedRegion(_))));
    }

    #[test]
    fn psnr_strictly_decreasing() {
        let mut prev = f64::INFINITY;
        for i in 1..1000 {
            let p = psnr_from_mse(i as f64 * 1e-3);
            assert!(p < prev);
            prev = p;
        }
    }
}
