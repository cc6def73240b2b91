use nalgebra::Vector2;

use crate::error::{Error, Result};

/// Axis-aligned pixel window `[x0, x0 + width) x [y0, y0 + height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Roi {
    pub x0: u32,
    pub y0: u32,
    pub width: u32,
    pub height: u32,
}

impl Roi {
    pub fn new(x0: u32, y0: u32, width: u32, height: u32) -> Self {
        Self { x0, y0, width, height }
    }

    pub fn len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && y >= self.y0 && x - self.x0 < self.width && y - self.y0 < self.height
    }

    #[inline]
    fn index(&self, x: u32, y: u32) -> usize {
        (y - self.y0) as usize * self.width as usize + (x - self.x0) as usize
    }

    pub fn union(&self, other: &Roi) -> Roi {
        if self.is_empty() {
            return *other;
        }
        if other.is_empty() {
            return *self;
        }
        let x0 = self.x0.min(other.x0);
        let y0 = self.y0.min(other.y0);
        let x1 = (self.x0 + self.width).max(other.x0 + other.width);
        let y1 = (self.y0 + self.height).max(other.y0 + other.height);
        Roi::new(x0, y0, x1 - x0, y1 - y0)
    }

    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (self.y0..self.y0 + self.height).flat_map(move |y| (self.x0..self.x0 + self.width).map(move |x| (x, y)))
    }
}

/// Binary object mask. Only pixels inside `roi` can be set; everything
/// outside reads as background, which keeps renders of small objects cheap.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskImage {
    width: u32,
    height: u32,
    roi: Roi,
    bits: Vec<bool>,
}

impl MaskImage {
    pub fn empty(width: u32, height: u32) -> Self {
        Self { width, height, roi: Roi::default(), bits: Vec::new() }
    }

    /// Full-frame mask from row-major bits.
    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), width as usize * height as usize, "bit count does not match dimensions");
        Self { width, height, roi: Roi::new(0, 0, width, height), bits }
    }

    pub fn from_roi(width: u32, height: u32, roi: Roi, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), roi.len(), "bit count does not match roi");
        assert!(roi.x0 + roi.width <= width && roi.y0 + roi.height <= height, "roi outside image");
        Self { width, height, roi, bits }
    }

    /// Mask over `roi` whose pixel `(x, y)` is `f(x, y)`.
    pub fn from_fn(width: u32, height: u32, roi: Roi, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let bits = roi.pixels().map(|(x, y)| f(x, y)).collect();
        Self::from_roi(width, height, roi, bits)
    }

    /// Copy of this mask with each set pixel kept iff `keep(x, y)`.
    pub fn filter(&self, mut keep: impl FnMut(u32, u32) -> bool) -> Self {
        let bits = self
            .roi
            .pixels()
            .zip(&self.bits)
            .map(|((x, y), &b)| b && keep(x, y))
            .collect();
        Self { bits, ..*self }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn roi(&self) -> Roi {
        self.roi
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.roi.contains(x, y) && self.bits[self.roi.index(x, y)]
    }

    /// Coordinates of all set pixels in row-major order.
    pub fn set_pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.roi.pixels().zip(&self.bits).filter(|(_, &b)| b).map(|(p, _)| p)
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn centroid(&self) -> Result<Vector2<f64>> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for (x, y) in self.set_pixels() {
            sx += x as f64;
            sy += y as f64;
            n += 1;
        }
        if n == 0 {
            return Err(Error::EmptyMask);
        }
        Ok(Vector2::new(sx / n as f64, sy / n as f64))
    }

    /// Number of pixels set in both masks.
    pub fn intersection_area(&self, other: &MaskImage) -> usize {
        let (a, b) = (self.roi, other.roi);
        let x0 = a.x0.max(b.x0);
        let y0 = a.y0.max(b.y0);
        let x1 = (a.x0 + a.width).min(b.x0 + b.width);
        let y1 = (a.y0 + a.height).min(b.y0 + b.height);
        if x0 >= x1 || y0 >= y1 {
            return 0;
        }
        let len = (x1 - x0) as usize;
        (y0..y1)
            .map(|y| {
                let ra = &self.bits[a.index(x0, y)..][..len];
                let rb = &other.bits[b.index(x0, y)..][..len];
                ra.iter().zip(rb).filter(|&(&p, &q)| p & q).count()
            })
            .sum()
    }

    /// Intersection over union; two empty masks give 0.
    pub fn iou(&self, other: &MaskImage) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Set pixels with at least one 4-neighbour that is background or off-image.
    pub fn boundary_pixels(&self) -> Vec<(u32, u32)> {
        self.set_pixels()
            .filter(|&(x, y)| {
                x == 0
                    || y == 0
                    || x + 1 >= self.width
                    || y + 1 >= self.height
                    || !self.get(x - 1, y)
                    || !self.get(x + 1, y)
                    || !self.get(x, y - 1)
                    || !self.get(x, y + 1)
            })
            .collect()
    }

    /// True iff both masks have the same size and the same set pixels.
    pub fn same_pixels(&self, other: &MaskImage) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.area() == other.area()
            && self.set_pixels().all(|(x, y)| other.get(x, y))
    }

    /// Tight bounding box of the set pixels, if any.
    pub fn bounding_box(&self) -> Option<Roi> {
        let mut it = self.set_pixels();
        let (fx, fy) = it.next()?;
        let (mut x0, mut y0, mut x1, mut y1) = (fx, fy, fx, fy);
        for (x, y) in it {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        Some(Roi::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1))
    }
}

/// Per-pixel depth in meters; 0 means no measurement. Pixels outside `roi`
/// read as 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: u32,
    height: u32,
    roi: Roi,
    values: Vec<f64>,
}

impl DepthImage {
    /// The all-zero depth channel.
    pub fn zeros(width: u32, height: u32) -> Self {
        Self { width, height, roi: Roi::default(), values: Vec::new() }
    }

    pub fn from_values(width: u32, height: u32, values: Vec<f64>) -> Self {
        Self::from_roi(width, height, Roi::new(0, 0, width, height), values)
    }

    pub fn from_roi(width: u32, height: u32, roi: Roi, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), roi.len(), "value count does not match roi");
        assert!(roi.x0 + roi.width <= width && roi.y0 + roi.height <= height, "roi outside image");
        assert!(values.iter().all(|v| v.is_finite() && *v >= 0.0), "depth values must be finite and >= 0");
        Self { width, height, roi, values }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn roi(&self) -> Roi {
        self.roi
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        if self.roi.contains(x, y) {
            self.values[self.roi.index(x, y)]
        } else {
            0.0
        }
    }

    pub fn is_all_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Dense row-major copy of the full image.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.width as usize * self.height as usize];
        for ((x, y), &v) in self.roi.pixels().zip(&self.values) {
            out[y as usize * self.width as usize + x as usize] = v;
        }
        out
    }
}

pub fn mask_area(mask: &MaskImage) -> usize {
    mask.area()
}

pub fn mask_centroid(mask: &MaskImage) -> Result<Vector2<f64>> {
    mask.centroid()
}

/// Median of the positive depths under the mask; an even count averages
/// the two middle values.
pub fn median_masked_depth(depth: &DepthImage, mask: &MaskImage) -> Result<f64> {
    if mask.area() == 0 {
        return Err(Error::EmptyMask);
    }
    let mut values: Vec<f64> = mask.set_pixels().map(|(x, y)| depth.get(x, y)).filter(|&d| d > 0.0).collect();
    if values.is_empty() {
        return Err(Error::NoValidDepth);
    }
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    Ok(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_with(width: u32, height: u32, pixels: &[(u32, u32)]) -> MaskImage {
        MaskImage::from_fn(width, height, Roi::new(0, 0, width, height), |x, y| pixels.contains(&(x, y)))
    }

    #[test]
    fn intersection_matches_pixel_count() {
        let a = MaskImage::from_fn(20, 10, Roi::new(2, 1, 9, 7), |x, y| (x * 7 + y * 3) % 4 != 0);
        let b = MaskImage::from_fn(20, 10, Roi::new(5, 3, 12, 7), |x, y| (x + 2 * y) % 3 != 1);
        let naive = a.set_pixels().filter(|&(x, y)| b.get(x, y)).count();
        assert!(naive > 0);
        assert_eq!(a.intersection_area(&b), naive);
        assert_eq!(b.intersection_area(&a), naive);
        let apart = MaskImage::from_fn(20, 10, Roi::new(15, 0, 5, 2), |_, _| true);
        assert_eq!(a.intersection_area(&apart), 0);
        assert_eq!(a.intersection_area(&MaskImage::empty(20, 10)), 0);
    }

    #[test]
    fn area_cases() {
        assert_eq!(mask_area(&MaskImage::empty(4, 4)), 0);
        assert_eq!(mask_area(&mask_with(4, 4, &[])), 0);
        assert_eq!(mask_area(&mask_with(4, 4, &[(1, 2)])), 1);
    }

    #[test]
    fn centroid_cases() {
        let m = mask_with(32, 32, &[(10, 20)]);
        assert_eq!(mask_centroid(&m).unwrap(), Vector2::new(10.0, 20.0));
        let m = mask_with(4, 4, &[(0, 0), (2, 0)]);
        assert_eq!(mask_centroid(&m).unwrap(), Vector2::new(1.0, 0.0));
        assert!(matches!(mask_centroid(&MaskImage::empty(4, 4)), Err(Error::EmptyMask)));
    }

    fn depth_row(values: &[f64]) -> (DepthImage, MaskImage) {
        let w = values.len() as u32 + 1;
        let mut v = values.to_vec();
        v.push(9.0); // unmasked
        let depth = DepthImage::from_values(w, 1, v);
        let mask = MaskImage::from_fn(w, 1, Roi::new(0, 0, w, 1), |x, _| x + 1 < w);
        (depth, mask)
    }

    #[test]
    fn median_cases() {
        let (d, m) = depth_row(&[3.0, 1.0, 2.0]);
        assert_eq!(median_masked_depth(&d, &m).unwrap(), 2.0);
        let (d, m) = depth_row(&[4.0, 1.0, 3.0, 2.0]);
        assert_eq!(median_masked_depth(&d, &m).unwrap(), 2.5);
        let (d, m) = depth_row(&[0.0, 0.0, 5.0]);
        assert_eq!(median_masked_depth(&d, &m).unwrap(), 5.0);
        let (d, m) = depth_row(&[0.0, 0.0]);
        assert!(matches!(median_masked_depth(&d, &m), Err(Error::NoValidDepth)));
        assert!(matches!(median_masked_depth(&d, &MaskImage::empty(3, 1)), Err(Error::EmptyMask)));
    }

    #[test]
    fn iou_and_boundary() {
        let a = MaskImage::from_fn(10, 10, Roi::new(0, 0, 10, 10), |x, y| x < 4 && y < 4);
        let b = MaskImage::from_fn(10, 10, Roi::new(2, 0, 6, 10), |x, y| x < 6 && y < 4);
        assert_eq!(a.intersection_area(&b), 8);
        assert!((a.iou(&b) - 8.0 / 24.0).abs() < 1e-15);
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.boundary_pixels().len(), 16 - 4);
        assert_eq!(a.bounding_box(), Some(Roi::new(0, 0, 4, 4)));
        assert!(a.same_pixels(&a.filter(|_, _| true)));
        assert_eq!(a.filter(|x, _| x == 0).area(), 4);
    }
}
