//! Box overlap and distance.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{BBox, ImageDims};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("normalized L1 distance requires image dimensions")]
    MissingImageDims,
}

/// Intersection over union. Boxes that only share an edge have IoU 0.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = a.x2().min(b.x2()) - a.x1().max(b.x1());
    let ih = a.y2().min(b.y2()) - a.y1().max(b.y1());
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// L1 distance between coordinate 4-tuples, x normalized by image width and
/// y by image height. Result lies in `[0, 4]` for in-image boxes.
pub fn l1_distance(a: &BBox, b: &BBox, dims: Option<ImageDims>) -> Result<f64, GeometryError> {
    let dims = dims.ok_or(GeometryError::MissingImageDims)?;
    let (w, h) = (dims.width(), dims.height());
    Ok((a.x1() - b.x1()).abs() / w
        + (a.y1() - b.y1()).abs() / h
        + (a.x2() - b.x2()).abs() / w
        + (a.y2() - b.y2()).abs() / h)
}

/// Raw pixel L1 distance.
pub fn l1_pixel_distance(a: &BBox, b: &BBox) -> f64 {
    a.coords().iter().zip(b.coords()).map(|(p, q)| (p - q).abs()).sum()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum L1Scale {
    /// Coordinates divided by image width/height.
    #[default]
    Normalized,
    /// Plain pixel differences.
    Pixels,
}

/// Box distance bound to one image, so callers resolve the missing-dims case
/// once per graph pair instead of once per node pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoxDistance {
    Normalized(ImageDims),
    Pixels,
}

impl BoxDistance {
    pub fn for_image(scale: L1Scale, dims: Option<ImageDims>) -> Result<Self, GeometryError> {
        match scale {
            L1Scale::Normalized => dims.map(Self::Normalized).ok_or(GeometryError::MissingImageDims),
            L1Scale::Pixels => Ok(Self::Pixels),
        }
    }

    pub fn between(&self, a: &BBox, b: &BBox) -> f64 {
        match *self {
            Self::Normalized(dims) => l1_distance(a, b, Some(dims)).expect("dims present"),
            Self::Pixels => l1_pixel_distance(a, b),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    /// Count unit cells covered by integer boxes.
    fn grid_iou(a: [i32; 4], b: [i32; 4]) -> f64 {
        let (lo_x, hi_x) = (a[0].min(b[0]), a[2].max(b[2]));
        let (lo_y, hi_y) = (a[1].min(b[1]), a[3].max(b[3]));
        let inside = |r: [i32; 4], x: i32, y: i32| x >= r[0] && x < r[2] && y >= r[1] && y < r[3];
        let (mut inter, mut union) = (0u32, 0u32);
        for x in lo_x..hi_x {
            for y in lo_y..hi_y {
                let (ia, ib) = (inside(a, x, y), inside(b, x, y));
                inter += u32::from(ia && ib);
                union += u32::from(ia || ib);
            }
        }
        f64::from(inter) / f64::from(union)
    }

    #[test]
    fn iou_examples() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bx(20.0, 20.0, 30.0, 30.0)), 0.0);
        let expected = grid_iou([0, 0, 10, 10], [5, 5, 15, 15]);
        assert!((expected - 25.0 / 175.0).abs() < 1e-12);
        assert!((iou(&a, &bx(5.0, 5.0, 15.0, 15.0)) - expected).abs() < 1e-12);
    }

    #[test]
    fn touching_boxes_have_zero_iou() {
        assert_eq!(iou(&bx(0.0, 0.0, 10.0, 10.0), &bx(10.0, 0.0, 20.0, 10.0)), 0.0);
    }

    #[test]
    fn l1_examples() {
        let dims = Some(ImageDims::new(100.0, 100.0).unwrap());
        let a = bx(10.0, 20.0, 30.0, 40.0);
        assert_eq!(l1_distance(&a, &a, dims).unwrap(), 0.0);
        let d = l1_distance(&a, &bx(12.0, 20.0, 30.0, 44.0), dims).unwrap();
        assert!((d - 0.06).abs() < 1e-12);
        assert_eq!(l1_distance(&a, &a, None), Err(GeometryError::MissingImageDims));

        let (w, h) = (640.0, 480.0);
        let full = bx(0.0, 0.0, w, h);
        let tiny = bx(0.0, 0.0, 1e-9, 1e-9);
        let d = l1_distance(&full, &tiny, Some(ImageDims::new(w, h).unwrap())).unwrap();
        assert!((d - 2.0).abs() < 1e-9);
    }

    #[test]
    fn pixel_scale_ignores_dims() {
        let a = bx(10.0, 20.0, 30.0, 40.0);
        let b = bx(12.0, 20.0, 30.0, 44.0);
        let dist = BoxDistance::for_image(L1Scale::Pixels, None).unwrap();
        assert_eq!(dist.between(&a, &b), 6.0);
        assert!(BoxDistance::for_image(L1Scale::Normalized, None).is_err());
    }

    fn int_box() -> impl Strategy<Value = [i32; 4]> {
        (0i32..40, 0i32..40, 1i32..20, 1i32..20).prop_map(|(x, y, w, h)| [x, y, x + w, y + h])
    }

    fn float_box() -> impl Strategy<Value = BBox> {
        (0.0f64..90.0, 0.0f64..90.0, 0.1f64..10.0, 0.1f64..10.0).prop_map(|(x, y, w, h)| bx(x, y, x + w, y + h))
    }

    proptest! {
        #[test]
        fn iou_matches_grid_count(a in int_box(), b in int_box()) {
            let fa = a.map(f64::from);
            let fb = b.map(f64::from);
            let got = iou(&BBox::from_array(fa).unwrap(), &BBox::from_array(fb).unwrap());
            prop_assert!((got - grid_iou(a, b)).abs() < 1e-9);
        }

        #[test]
        fn iou_symmetric_and_bounded(a in float_box(), b in float_box()) {
            let ab = iou(&a, &b);
            prop_assert_eq!(ab, iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(iou(&a, &a), 1.0);
        }

        #[test]
        fn l1_is_a_metric(a in float_box(), b in float_box(), c in float_box()) {
            let dims = Some(ImageDims::new(100.0, 100.0).unwrap());
            let d = |p: &BBox, q: &BBox| l1_distance(p, q, dims).unwrap();
            prop_assert_eq!(d(&a, &b), d(&b, &a));
            prop_assert_eq!(d(&a, &a), 0.0);
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
            let decay = (-d(&a, &b)).exp();
            prop_assert!(decay > 0.0 && decay <= 1.0);
            prop_assert_eq!(d(&a, &b) == 0.0, a == b);
        }
    }
}
