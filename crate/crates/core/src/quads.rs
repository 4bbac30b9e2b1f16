//! Correspondence sets and the choice of four-point subsets used to estimate
//! the plane normal.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{UnitVector3, Vector2};

/// Target-plane coordinates of a reference point, in meters.
pub type PlanarPoint = Vector2;

pub const DEFAULT_COLLINEARITY_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_QUADS: usize = 20;

/// Matched target points and camera bearings.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrespondenceSet {
    points: Vec<PlanarPoint>,
    bearings: Vec<UnitVector3>,
}

impl CorrespondenceSet {
    pub fn new(points: Vec<PlanarPoint>, bearings: Vec<UnitVector3>) -> Result<Self> {
        if points.len() != bearings.len() {
            return Err(Error::InvalidInput(format!(
                "{} target points but {} bearings",
                points.len(),
                bearings.len()
            )));
        }
        if points.len() < 4 {
            return Err(Error::InvalidInput(format!(
                "need at least 4 correspondences, got {}",
                points.len()
            )));
        }
        if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::InvalidInput("target points must be finite".into()));
        }
        Ok(CorrespondenceSet { points, bearings })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[PlanarPoint] {
        &self.points
    }

    pub fn bearings(&self) -> &[UnitVector3] {
        &self.bearings
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadStrategy {
    /// Every valid quad in lexicographic index order.
    All,
    /// Valid quads ordered by decreasing convex-hull area.
    #[default]
    SpreadFirst,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuadSelection {
    pub quads: Vec<[usize; 4]>,
}

impl QuadSelection {
    pub fn m(&self) -> usize {
        self.quads.len()
    }
}

fn cross2(u: &Vector2, v: &Vector2) -> f64 {
    u.x * v.y - u.y * v.x
}

/// Relative triangle-area collinearity test:
/// `|(b - a) x (c - a)| <= tol * max(1, |b - a| |c - a|)`.
pub fn collinear(a: &PlanarPoint, b: &PlanarPoint, c: &PlanarPoint, tol: f64) -> bool {
    let u = b - a;
    let v = c - a;
    cross2(&u, &v).abs() <= tol * (u.norm() * v.norm()).max(1.0)
}

/// True when no three of the four points are collinear.
pub fn quad_is_valid(pts: [&PlanarPoint; 4], tol: f64) -> bool {
    const TRIPLES: [[usize; 3]; 4] = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
    TRIPLES.iter().all(|t| !collinear(pts[t[0]], pts[t[1]], pts[t[2]], tol))
}

/// Area of the convex hull of four points.
pub fn hull_area(pts: [&PlanarPoint; 4]) -> f64 {
    let mut p: Vec<PlanarPoint> = pts.iter().map(|p| **p).collect();
    p.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    // Andrew's monotone chain.
    let mut hull: Vec<PlanarPoint> = Vec::with_capacity(8);
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &PlanarPoint>> =
            if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
        for q in iter {
            while hull.len() >= start + 2 {
                let n = hull.len();
                if cross2(&(hull[n - 1] - hull[n - 2]), &(q - hull[n - 2])) <= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(*q);
        }
        hull.pop();
    }
    let n = hull.len();
    let twice: f64 = (0..n).map(|i| cross2(&hull[i], &hull[(i + 1) % n])).sum();
    0.5 * twice.abs()
}

#[derive(PartialEq)]
struct Ranked {
    area: f64,
    quad: [usize; 4],
}

impl Eq for Ranked {}

impl Ord for Ranked {
    // "Better" sorts first: larger area, then lexicographically smaller quad.
    fn cmp(&self, other: &Self) -> Ordering {
        other.area.total_cmp(&self.area).then_with(|| self.quad.cmp(&other.quad))
    }
}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn for_each_quad(n: usize, mut f: impl FnMut([usize; 4]) -> bool) {
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                for l in k + 1..n {
                    if !f([i, j, k, l]) {
                        return;
                    }
                }
            }
        }
    }
}

/// Picks up to `max_m` four-point subsets with no collinear triple.
pub fn select_quads(
    c: &CorrespondenceSet,
    max_m: usize,
    strategy: QuadStrategy,
    tol: f64,
) -> Result<QuadSelection> {
    if max_m == 0 {
        return Err(Error::InvalidInput("max quads must be at least 1".into()));
    }
    let pts = c.points();
    let quad_pts = |q: [usize; 4]| [&pts[q[0]], &pts[q[1]], &pts[q[2]], &pts[q[3]]];

    let quads = match strategy {
        QuadStrategy::All => {
            let mut quads = Vec::new();
            for_each_quad(pts.len(), |q| {
                if quad_is_valid(quad_pts(q), tol) {
                    quads.push(q);
                }
                quads.len() < max_m
            });
            quads
        }
        QuadStrategy::SpreadFirst => {
            // Bounded max-heap on "worseness": the top is the weakest kept quad.
            let mut heap: BinaryHeap<Ranked> = BinaryHeap::with_capacity(max_m.min(1 << 16) + 1);
            for_each_quad(pts.len(), |q| {
                let qp = quad_pts(q);
                if quad_is_valid(qp, tol) {
                    let cand = Ranked { area: hull_area(qp), quad: q };
                    if heap.len() < max_m {
                        heap.push(cand);
                    } else if let Some(worst) = heap.peek() {
                        if cand < *worst {
                            heap.pop();
                            heap.push(cand);
                        }
                    }
                }
                true
            });
            heap.into_sorted_vec().into_iter().map(|r| r.quad).collect()
        }
    };

    if quads.is_empty() {
        return Err(Error::NoValidQuad);
    }
    Ok(QuadSelection { quads })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vector3;
    use proptest::prelude::*;

    fn set(points: &[(f64, f64)]) -> CorrespondenceSet {
        let pts = points.iter().map(|&(x, y)| PlanarPoint::new(x, y)).collect::<Vec<_>>();
        let bearings = vec![UnitVector3::E3; pts.len()];
        CorrespondenceSet::new(pts, bearings).unwrap()
    }

    fn p(x: f64, y: f64) -> PlanarPoint {
        PlanarPoint::new(x, y)
    }

    #[test]
    fn collinear_examples() {
        assert!(collinear(&p(0., 0.), &p(1., 0.), &p(2., 0.), 1e-9));
        assert!(!collinear(&p(0., 0.), &p(1., 0.), &p(0., 1.), 1e-9));
        assert!(collinear(&p(0., 0.), &p(1., 0.), &p(2., 1e-12), 1e-9));
    }

    #[test]
    fn correspondence_set_validation() {
        let b = vec![UnitVector3::E3; 3];
        assert!(CorrespondenceSet::new(vec![p(0., 0.); 3], b.clone()).is_err());
        assert!(CorrespondenceSet::new(vec![p(0., 0.); 4], b).is_err());
        let b = vec![UnitVector3::new(Vector3::z()).unwrap(); 4];
        assert!(CorrespondenceSet::new(vec![p(f64::NAN, 0.); 4], b).is_err());
    }

    #[test]
    fn unit_square_has_one_quad() {
        let c = set(&[(0., 0.), (1., 0.), (0., 1.), (1., 1.)]);
        let sel = select_quads(&c, 10, QuadStrategy::SpreadFirst, 1e-9).unwrap();
        assert_eq!(sel.quads, vec![[0, 1, 2, 3]]);
    }

    #[test]
    fn square_plus_center_keeps_only_the_corners() {
        // The centre lies on both diagonals, so every subset holding it and
        // three corners contains a collinear triple.
        let c = set(&[(0., 0.), (1., 0.), (0., 1.), (1., 1.), (0.5, 0.5)]);
        let sel = select_quads(&c, usize::MAX, QuadStrategy::All, 1e-9).unwrap();
        assert_eq!(sel.quads, vec![[0, 1, 2, 3]]);
    }

    #[test]
    fn collinear_points_have_no_quad() {
        let c = set(&[(0., 0.), (1., 0.), (2., 0.), (3., 0.)]);
        assert_eq!(
            select_quads(&c, 10, QuadStrategy::All, 1e-9),
            Err(Error::NoValidQuad)
        );
    }

    #[test]
    fn spread_first_prefers_large_hulls() {
        let c = set(&[(0., 0.), (4., 0.), (0., 4.), (4., 4.), (1., 2.), (2., 1.), (3., 2.5)]);
        let sel = select_quads(&c, 3, QuadStrategy::SpreadFirst, 1e-9).unwrap();
        assert_eq!(sel.quads[0], [0, 1, 2, 3]);
        let pts = c.points();
        let areas: Vec<f64> = sel
            .quads
            .iter()
            .map(|q| hull_area([&pts[q[0]], &pts[q[1]], &pts[q[2]], &pts[q[3]]]))
            .collect();
        assert!(areas.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn hull_area_triangle_and_quad() {
        assert_eq!(hull_area([&p(0., 0.), &p(1., 0.), &p(0., 1.), &p(1., 1.)]), 1.0);
        // One point strictly inside the triangle.
        assert_eq!(hull_area([&p(0., 0.), &p(4., 0.), &p(0., 4.), &p(1., 1.)]), 8.0);
    }

    #[test]
    fn zero_max_quads_is_rejected() {
        let c = set(&[(0., 0.), (1., 0.), (0., 1.), (1., 1.)]);
        assert!(select_quads(&c, 0, QuadStrategy::All, 1e-9).is_err());
    }

    fn brute_force_count(pts: &[PlanarPoint], tol: f64) -> usize {
        let n = pts.len();
        let mut count = 0;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() != 4 {
                continue;
            }
            let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let mut ok = true;
            for skip in 0..4 {
                let t: Vec<&PlanarPoint> =
                    (0..4).filter(|&s| s != skip).map(|s| &pts[idx[s]]).collect();
                if collinear(t[0], t[1], t[2], tol) {
                    ok = false;
                }
            }
            if ok {
                count += 1;
            }
        }
        count
    }

    proptest! {
        #[test]
        fn all_strategy_matches_brute_force(
            raw in proptest::collection::vec((0i32..4, 0i32..4), 4..=8)
        ) {
            // Integer lattice points make exact collinearities common.
            let pts: Vec<PlanarPoint> = raw.iter().map(|&(x, y)| p(x as f64, y as f64)).collect();
            let c = CorrespondenceSet::new(pts.clone(), vec![UnitVector3::E3; pts.len()]).unwrap();
            let expected = brute_force_count(&pts, 1e-9);
            match select_quads(&c, usize::MAX, QuadStrategy::All, 1e-9) {
                Ok(sel) => {
                    prop_assert_eq!(sel.m(), expected);
                    for q in &sel.quads {
                        prop_assert!(quad_is_valid([&pts[q[0]], &pts[q[1]], &pts[q[2]], &pts[q[3]]], 1e-9));
                    }
                }
                Err(e) => {
                    prop_assert_eq!(e, Error::NoValidQuad);
                    prop_assert_eq!(expected, 0);
                }
            }
        }
    }
}
