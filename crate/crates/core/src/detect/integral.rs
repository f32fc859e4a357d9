use crate::model::BBox;

/// Summed-area table with a zero row and column: `at(x, y)` is the sum of
/// all values with coordinates `< (x, y)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegralImage {
    width: u32,
    height: u32,
    table: Vec<i64>,
}

impl IntegralImage {
    pub fn new(gray: &[u8], width: u32, height: u32) -> Self {
        Self::build(gray, width, height, |p| i64::from(p))
    }

    /// Table of squared pixel values, used for window variance.
    pub fn squared(gray: &[u8], width: u32, height: u32) -> Self {
        Self::build(gray, width, height, |p| i64::from(p) * i64::from(p))
    }

    fn build(gray: &[u8], width: u32, height: u32, value: impl Fn(u8) -> i64) -> Self {
        assert_eq!(gray.len(), width as usize * height as usize, "pixel buffer does not match dims");
        let (w, h) = (width as usize, height as usize);
        let stride = w + 1;
        let mut table = vec![0i64; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0i64;
            for x in 0..w {
                row += value(gray[y * w + x]);
                table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + row;
            }
        }
        IntegralImage { width, height, table }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn at(&self, x: u32, y: u32) -> i64 {
        self.table[y as usize * (self.width as usize + 1) + x as usize]
    }

    /// Sum over `[x, x+w) × [y, y+h)`; the rectangle must lie inside the image.
    #[inline]
    pub fn rect_sum(&self, x: u32, y: u32, w: u32, h: u32) -> i64 {
        self.at(x + w, y + h) - self.at(x, y + h) - self.at(x + w, y) + self.at(x, y)
    }

    pub fn bbox_sum(&self, b: &BBox) -> i64 {
        self.rect_sum(b.x, b.y, b.w, b.h)
    }

    pub fn total(&self) -> i64 {
        self.at(self.width, self.height)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        let ii = IntegralImage::new(&[1, 2, 3, 4], 2, 2);
        assert_eq!(ii.at(2, 2), 10);
        assert_eq!(ii.rect_sum(1, 0, 1, 2), 6);
        assert_eq!(ii.at(0, 2), 0);
        assert_eq!(IntegralImage::squared(&[1, 2, 3, 4], 2, 2).total(), 30);
    }

    #[test]
    fn zero_image() {
        let ii = IntegralImage::new(&[0; 12], 4, 3);
        assert!((0..=3).all(|y| (0..=4).all(|x| ii.at(x, y) == 0)));
    }
}
