//! Axis-aligned boxes shared by proposals, trackers, and ground truth.
//!
//! A box `(x, y, w, h)` covers the half-open region `[x, x + w) x [y, y + h)`
//! in continuous sensor coordinates, where pixel `(i, j)` covers
//! `[i, i + 1) x [j, j + 1)`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BoxF {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoxF {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    /// Box centered on `(cx, cy)` with the given half extents.
    pub fn from_center(cx: f64, cy: f64, half_w: f64, half_h: f64) -> Self {
        Self::new(cx - half_w, cy - half_h, 2.0 * half_w, 2.0 * half_h)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self::new(self.x + dx, self.y + dy, self.w, self.h)
    }

    /// Smallest box containing both `self` and `other`.
    pub fn union(&self, other: &BoxF) -> BoxF {
        let x0 = self.x.min(other.x);
        let y0 = self.y.min(other.y);
        let x1 = self.right().max(other.right());
        let y1 = self.bottom().max(other.bottom());
        BoxF::new(x0, y0, x1 - x0, y1 - y0)
    }

    /// Intersection with `[0, width) x [0, height)`, or `None` when empty.
    pub fn clipped(&self, width: f64, height: f64) -> Option<BoxF> {
        if self.x >= 0.0 && self.y >= 0.0 && self.right() <= width && self.bottom() <= height {
            return (self.w > 0.0 && self.h > 0.0).then_some(*self);
        }
        let x0 = self.x.max(0.0);
        let y0 = self.y.max(0.0);
        let x1 = self.right().min(width);
        let y1 = self.bottom().min(height);
        (x1 > x0 && y1 > y0).then(|| BoxF::new(x0, y0, x1 - x0, y1 - y0))
    }
}

/// Area of the intersection of two boxes.
pub fn overlap_area(a: &BoxF, b: &BoxF) -> f64 {
    let ow = (a.right().min(b.right()) - a.x.max(b.x)).max(0.0);
    let oh = (a.bottom().min(b.bottom()) - a.y.max(b.y)).max(0.0);
    ow * oh
}

/// Intersection over union; zero when the union is empty.
pub fn iou(a: &BoxF, b: &BoxF) -> f64 {
    let inter = overlap_area(a, b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pixel_count(a: &BoxF, b: &BoxF) -> f64 {
        let mut n = 0u64;
        let lo_x = a.x.min(b.x) as i64;
        let hi_x = a.right().max(b.right()) as i64;
        let lo_y = a.y.min(b.y) as i64;
        let hi_y = a.bottom().max(b.bottom()) as i64;
        for px in lo_x..hi_x {
            for py in lo_y..hi_y {
                let (cx, cy) = (px as f64 + 0.5, py as f64 + 0.5);
                let inside = |r: &BoxF| cx >= r.x && cx < r.right() && cy >= r.y && cy < r.bottom();
                if inside(a) && inside(b) {
                    n += 1;
                }
            }
        }
        n as f64
    }

    #[test]
    fn overlap_examples() {
        let a = BoxF::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(overlap_area(&a, &a), 100.0);
        assert_eq!(overlap_area(&a, &BoxF::new(20.0, 20.0, 5.0, 5.0)), 0.0);
        let b = BoxF::new(5.0, 5.0, 10.0, 10.0);
        assert_eq!(pixel_count(&a, &b), 25.0);
        assert_eq!(overlap_area(&a, &b), 25.0);
    }

    #[test]
    fn iou_examples() {
        let a = BoxF::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &BoxF::new(30.0, 0.0, 10.0, 10.0)), 0.0);
        let b = BoxF::new(5.0, 0.0, 10.0, 10.0);
        let inter = pixel_count(&a, &b);
        assert_eq!(inter, 50.0);
        assert!((iou(&a, &b) - inter / (200.0 - inter)).abs() < 1e-15);
        assert_eq!(iou(&BoxF::default(), &BoxF::default()), 0.0);
    }

    #[test]
    fn union_and_clip() {
        let a = BoxF::new(0.0, 0.0, 10.0, 10.0);
        let b = BoxF::new(5.0, 5.0, 10.0, 10.0);
        assert_eq!(a.union(&b), BoxF::new(0.0, 0.0, 15.0, 15.0));
        assert_eq!(
            BoxF::new(-5.0, 2.0, 10.0, 4.0).clipped(100.0, 100.0),
            Some(BoxF::new(0.0, 2.0, 5.0, 4.0))
        );
        assert_eq!(BoxF::new(-20.0, 0.0, 10.0, 4.0).clipped(100.0, 100.0), None);
    }

    fn int_box() -> impl Strategy<Value = BoxF> {
        (-20i32..40, -20i32..40, 0i32..25, 0i32..25)
            .prop_map(|(x, y, w, h)| BoxF::new(x as f64, y as f64, w as f64, h as f64))
    }

    proptest! {
        #[test]
        fn overlap_properties(a in int_box(), b in int_box()) {
            let ab = overlap_area(&a, &b);
            prop_assert_eq!(ab, overlap_area(&b, &a));
            prop_assert_eq!(overlap_area(&a, &a), a.area());
            prop_assert!(ab <= a.area().min(b.area()));
            prop_assert_eq!(ab, pixel_count(&a, &b));
        }

        #[test]
        fn iou_properties(a in int_box(), b in int_box()) {
            let v = iou(&a, &b);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(v, iou(&b, &a));
            if a.area() > 0.0 {
                prop_assert_eq!(iou(&a, &a), 1.0);
            }
        }
    }
}
