//! Normalised bounding boxes and the overlap measures built on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sides shorter than this are widened at ingestion.
pub const MIN_BOX_SIDE: f64 = 1e-4;

/// Axis-aligned box in normalised image coordinates, `(x_lt, y_lt)` top-left
/// and `(x_rb, y_rb)` bottom-right.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    x_lt: f64,
    y_lt: f64,
    x_rb: f64,
    y_rb: f64,
}

impl BoundingBox {
    pub fn new(x_lt: f64, y_lt: f64, x_rb: f64, y_rb: f64) -> Result<Self> {
        let coords = [x_lt, y_lt, x_rb, y_rb];
        if coords.iter().any(|c| !c.is_finite() || !(0.0..=1.0).contains(c)) {
            return Err(Error::Validation(format!(
                "box coordinates must lie in [0, 1], got {coords:?}"
            )));
        }
        if x_lt >= x_rb || y_lt >= y_rb {
            return Err(Error::Validation(format!(
                "box corners out of order or degenerate: {coords:?}"
            )));
        }
        Ok(BoundingBox { x_lt, y_lt, x_rb, y_rb })
    }

    /// Ingestion path for detector output: clips into the unit square and
    /// widens any side shorter than [`MIN_BOX_SIDE`] around its centre.
    pub fn clamped(x_lt: f64, y_lt: f64, x_rb: f64, y_rb: f64) -> Self {
        let fix = |lo: f64, hi: f64| {
            let (lo, hi) = (lo.min(hi).clamp(0.0, 1.0), hi.max(lo).clamp(0.0, 1.0));
            if hi - lo >= MIN_BOX_SIDE {
                return (lo, hi);
            }
            let c = (0.5 * (lo + hi)).clamp(MIN_BOX_SIDE / 2.0, 1.0 - MIN_BOX_SIDE / 2.0);
            (c - MIN_BOX_SIDE / 2.0, c + MIN_BOX_SIDE / 2.0)
        };
        let (x_lt, x_rb) = fix(x_lt, x_rb);
        let (y_lt, y_rb) = fix(y_lt, y_rb);
        BoundingBox { x_lt, y_lt, x_rb, y_rb }
    }

    /// Box of the given size centred at `(cx, cy)`, shifted to stay inside
    /// the unit square.
    pub fn centered(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        let w = w.clamp(MIN_BOX_SIDE, 1.0);
        let h = h.clamp(MIN_BOX_SIDE, 1.0);
        let x = (cx - w / 2.0).clamp(0.0, 1.0 - w);
        let y = (cy - h / 2.0).clamp(0.0, 1.0 - h);
        BoundingBox::clamped(x, y, x + w, y + h)
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x_lt, self.y_lt, self.x_rb, self.y_rb]
    }

    pub fn x_lt(&self) -> f64 {
        self.x_lt
    }
    pub fn y_lt(&self) -> f64 {
        self.y_lt
    }
    pub fn x_rb(&self) -> f64 {
        self.x_rb
    }
    pub fn y_rb(&self) -> f64 {
        self.y_rb
    }

    pub fn width(&self) -> f64 {
        self.x_rb - self.x_lt
    }

    pub fn height(&self) -> f64 {
        self.y_rb - self.y_lt
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x_lt + self.x_rb), 0.5 * (self.y_lt + self.y_rb))
    }

    fn intersection(&self, other: &BoundingBox) -> f64 {
        let w = (self.x_rb.min(other.x_rb) - self.x_lt.max(other.x_lt)).max(0.0);
        let h = (self.y_rb.min(other.y_rb) - self.y_lt.max(other.y_lt)).max(0.0);
        w * h
    }
}

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection(b);
    inter / (a.area() + b.area() - inter)
}

/// Generalised IoU: `IoU - (C - U) / C` with `C` the area of the smallest
/// enclosing box.
pub fn giou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection(b);
    let union = a.area() + b.area() - inter;
    let enclosing = (a.x_rb.max(b.x_rb) - a.x_lt.min(b.x_lt)) * (a.y_rb.max(b.y_rb) - a.y_lt.min(b.y_lt));
    inter / union - (enclosing - union) / enclosing
}

/// Sum of absolute corner-coordinate differences.
pub fn box_l1(a: &BoundingBox, b: &BoundingBox) -> f64 {
    a.coords().iter().zip(b.coords()).map(|(x, y)| (x - y).abs()).sum()
}

/// `[x_lt, y_lt, x_rb, y_rb, w, h]` describing a proposal's placement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryVector(pub [f64; 6]);

impl GeometryVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn geometry_vector(b: &BoundingBox) -> GeometryVector {
    GeometryVector([b.x_lt, b.y_lt, b.x_rb, b.y_rb, b.width(), b.height()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn bx(c: [f64; 4]) -> BoundingBox {
        BoundingBox::new(c[0], c[1], c[2], c[3]).unwrap()
    }

    #[test]
    fn iou_cases() {
        let unit = bx([0.0, 0.0, 1.0, 1.0]);
        assert_eq!(iou(&unit, &unit), 1.0);
        assert_eq!(iou(&bx([0.0, 0.0, 0.1, 0.1]), &bx([0.5, 0.5, 0.6, 0.6])), 0.0);
        assert_eq!(iou(&unit, &bx([0.0, 0.0, 0.5, 1.0])), 0.5);
    }

    #[test]
    fn giou_cases() {
        let unit = bx([0.0, 0.0, 1.0, 1.0]);
        assert_eq!(giou(&unit, &unit), 1.0);
        let g = giou(&bx([0.0, 0.0, 0.1, 0.1]), &bx([0.9, 0.9, 1.0, 1.0]));
        assert!((g + 0.98).abs() < 1e-12, "{g}");
        assert_eq!(giou(&unit, &bx([0.0, 0.0, 0.5, 1.0])), 0.5);
    }

    #[test]
    fn l1_cases() {
        let unit = bx([0.0, 0.0, 1.0, 1.0]);
        assert_eq!(box_l1(&unit, &unit), 0.0);
        assert!((box_l1(&unit, &bx([0.1, 0.0, 1.0, 1.0])) - 0.1).abs() < 1e-15);
        let a = bx([0.12, 0.3, 0.44, 0.9]);
        let b = bx([0.2, 0.05, 0.31, 0.61]);
        let oracle = (0.12f64 - 0.2).abs() + (0.3f64 - 0.05).abs() + (0.44f64 - 0.31).abs() + (0.9f64 - 0.61).abs();
        assert!((box_l1(&a, &b) - oracle).abs() < 1e-15);
    }

    #[test]
    fn geometry_vector_cases() {
        assert_eq!(geometry_vector(&bx([0.0, 0.0, 1.0, 1.0])).0, [0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        let g = geometry_vector(&bx([0.2, 0.3, 0.5, 0.9])).0;
        let want = [0.2, 0.3, 0.5, 0.9, 0.3, 0.6];
        for (x, y) in g.iter().zip(want) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!(BoundingBox::new(0.3, 0.1, 0.3, 0.5).is_err());
        assert!(BoundingBox::new(0.5, 0.1, 0.3, 0.5).is_err());
        assert!(BoundingBox::new(0.0, 0.0, 1.2, 0.5).is_err());
    }

    #[test]
    fn clamped_boxes_stay_well_defined() {
        let a = BoundingBox::clamped(0.4, 0.4, 0.4, 0.4);
        assert!((a.width() - MIN_BOX_SIDE).abs() < 1e-15 && a.height() > 0.0);
        let b = BoundingBox::clamped(1.0, 1.0, 1.0, 1.0);
        assert!(b.x_rb() <= 1.0 && b.width() > 0.0);
        let g = giou(&a, &b);
        assert!(g.is_finite() && g > -1.0 && g <= 1.0);
        assert_eq!(giou(&a, &a), 1.0);
    }

    #[test]
    fn monte_carlo_giou_range() {
        let mut g = crate::numerics::RngStream::new(17, 3).generator();
        let mut draw = || {
            let (x0, x1): (f64, f64) = (g.random(), g.random());
            let (y0, y1): (f64, f64) = (g.random(), g.random());
            BoundingBox::clamped(x0.min(x1), y0.min(y1), x0.max(x1), y0.max(y1))
        };
        for _ in 0..10_000 {
            let (a, b) = (draw(), draw());
            let v = giou(&a, &b);
            assert!(v > -1.0 && v <= 1.0, "{v}");
        }
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (0.0f64..0.9, 0.0f64..0.9, 0.01f64..0.5, 0.01f64..0.5).prop_map(|(x, y, w, h)| {
            BoundingBox::new(x, y, (x + w).min(1.0), (y + h).min(1.0)).unwrap()
        })
    }

    proptest! {
        #[test]
        fn overlap_measures_are_symmetric(a in arb_box(), b in arb_box()) {
            prop_assert_eq!(iou(&a, &b), iou(&b, &a));
            prop_assert!((giou(&a, &b) - giou(&b, &a)).abs() < 1e-15);
            prop_assert!(giou(&a, &b) <= iou(&a, &b) + 1e-15);
            prop_assert_eq!(giou(&a, &a), 1.0);
            prop_assert_eq!(box_l1(&a, &a), 0.0);
        }

        #[test]
        fn giou_equals_iou_when_enclosure_is_union(a in arb_box()) {
            // a box nested inside `a` shares its enclosing box with the union
            let [x0, y0, x1, y1] = a.coords();
            let inner = BoundingBox::new(x0, y0, x0 + 0.5 * (x1 - x0), y1).unwrap();
            prop_assert!((giou(&a, &inner) - iou(&a, &inner)).abs() < 1e-12);
        }
    }
}
