// SPDX-License-Identifier: Apache-2.0

/// Summed-area table over a `width × height` single-channel image.
#[derive(Clone, Debug, PartialEq)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    /// (width + 1) × (height + 1), row-major; first row and column are zero.
    sums: Vec<f64>,
}

impl IntegralImage {
    pub fn new(width: usize, height: usize, values: &[f64]) -> Self {
        assert_eq!(values.len(), width * height, "image size");
        let stride = width + 1;
        let mut sums = vec![0.0; stride * (height + 1)];
        for v in 0..height {
            let mut row = 0.0;
            for u in 0..width {
                row += values[v * width + u];
                sums[(v + 1) * stride + u + 1] = sums[v * stride + u + 1] + row;
            }
        }
        Self { width, height, sums }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Sum over columns `u0..u1` and rows `v0..v1` (half-open); bounds are clamped.
    #[inline]
    pub fn rect_sum(&self, u0: usize, v0: usize, u1: usize, v1: usize) -> f64 {
        let (u1, v1) = (u1.min(self.width), v1.min(self.height));
        if u0 >= u1 || v0 >= v1 {
            return 0.0;
        }
        let s = self.width + 1;
        self.sums[v1 * s + u1] - self.sums[v0 * s + u1] - self.sums[v1 * s + u0] + self.sums[v0 * s + u0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive(w: usize, vals: &[f64], u0: usize, v0: usize, u1: usize, v1: usize) -> f64 {
        let mut s = 0.0;
        for v in v0..v1 {
            for u in u0..u1 {
                s += vals[v * w + u];
            }
        }
        s
    }

    #[test]
    fn empty_rectangles_sum_to_zero() {
        let img = IntegralImage::new(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(img.rect_sum(1, 1, 1, 2), 0.0);
        assert_eq!(img.rect_sum(2, 0, 1, 2), 0.0);
        assert_eq!(img.rect_sum(0, 0, 3, 2), 21.0);
    }

    proptest! {
        #[test]
        fn rectangle_sums_match_naive(
            (w, h, vals) in (1usize..20, 1usize..20).prop_flat_map(|(w, h)| {
                (Just(w), Just(h), prop::collection::vec(-100.0f64..100.0, w * h))
            }),
            a in any::<(usize, usize, usize, usize)>(),
        ) {
            let img = IntegralImage::new(w, h, &vals);
            let (u0, u1) = { let x = a.0 % (w + 1); let y = a.1 % (w + 1); (x.min(y), x.max(y)) };
            let (v0, v1) = { let x = a.2 % (h + 1); let y = a.3 % (h + 1); (x.min(y), x.max(y)) };
            let expect = naive(w, &vals, u0, v0, u1, v1);
            let got = img.rect_sum(u0, v0, u1, v1);
            let scale: f64 = vals.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
            prop_assert!((got - expect).abs() <= 1e-9 * scale);
        }

        #[test]
        fn sums_monotone_for_non_negative(vals in prop::collection::vec(0.0f64..10.0, 30)) {
            let img = IntegralImage::new(6, 5, &vals);
            for u in 0..6 {
                prop_assert!(img.rect_sum(0, 0, u + 1, 5) >= img.rect_sum(0, 0, u, 5));
            }
        }
    }
}
