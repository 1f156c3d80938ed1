use std::f64::consts::PI;

use crate::error::{LabError, Result};
use crate::C64;

/// Tolerance for "shared endpoint" checks, relative to the point magnitude.
const JOIN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathSegment {
    Line {
        from: C64,
        to: C64,
    },
    /// Arc of the circle `center + radius·e^{iθ}` from `start_angle` to
    /// `end_angle`; counterclockwise when `end_angle > start_angle`.
    Arc {
        center: C64,
        radius: f64,
        start_angle: f64,
        end_angle: f64,
    },
}

impl PathSegment {
    pub fn line(from: C64, to: C64) -> Result<Self> {
        if (to - from).norm() == 0.0 || !(to - from).norm().is_finite() {
            return Err(LabError::InvalidArgument("zero-length line segment".into()));
        }
        Ok(PathSegment::Line { from, to })
    }

    pub fn arc(center: C64, radius: f64, start_angle: f64, end_angle: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(LabError::InvalidArgument(
                "arc radius must be positive".into(),
            ));
        }
        if start_angle == end_angle || !(end_angle - start_angle).is_finite() {
            return Err(LabError::InvalidArgument("zero-length arc".into()));
        }
        Ok(PathSegment::Arc {
            center,
            radius,
            start_angle,
            end_angle,
        })
    }

    /// +1 for counterclockwise arcs and for lines, -1 for clockwise arcs.
    pub fn orientation(&self) -> i32 {
        match self {
            PathSegment::Line { .. } => 1,
            PathSegment::Arc {
                start_angle,
                end_angle,
                ..
            } => {
                if end_angle > start_angle {
                    1
                } else {
                    -1
                }
            }
        }
    }

    pub fn length(&self) -> f64 {
        match *self {
            PathSegment::Line { from, to } => (to - from).norm(),
            PathSegment::Arc {
                radius,
                start_angle,
                end_angle,
                ..
            } => radius * (end_angle - start_angle).abs(),
        }
    }

    /// Point at fraction `s ∈ [0,1]`.
    pub fn point(&self, s: f64) -> C64 {
        match *self {
            PathSegment::Line { from, to } => {
                if s >= 1.0 {
                    to
                } else {
                    from + (to - from) * s
                }
            }
            PathSegment::Arc {
                center,
                radius,
                start_angle,
                end_angle,
            } => {
                let th = start_angle + (end_angle - start_angle) * s;
                center + C64::from_polar(radius, th)
            }
        }
    }

    /// dγ/ds for the parametrization on `[0,1]`.
    pub fn derivative(&self, s: f64) -> C64 {
        match *self {
            PathSegment::Line { from, to } => to - from,
            PathSegment::Arc {
                radius,
                start_angle,
                end_angle,
                ..
            } => {
                let sweep = end_angle - start_angle;
                let th = start_angle + sweep * s;
                C64::new(0.0, 1.0) * C64::from_polar(radius, th) * sweep
            }
        }
    }

    pub fn start(&self) -> C64 {
        self.point(0.0)
    }

    pub fn end(&self) -> C64 {
        self.point(1.0)
    }

    pub fn reversed(&self) -> Self {
        match *self {
            PathSegment::Line { from, to } => PathSegment::Line { from: to, to: from },
            PathSegment::Arc {
                center,
                radius,
                start_angle,
                end_angle,
            } => PathSegment::Arc {
                center,
                radius,
                start_angle: end_angle,
                end_angle: start_angle,
            },
        }
    }

    /// Splits at fraction `s` into two segments.
    pub fn split(&self, s: f64) -> (Self, Self) {
        match *self {
            PathSegment::Line { from, to } => {
                let mid = self.point(s);
                (
                    PathSegment::Line { from, to: mid },
                    PathSegment::Line { from: mid, to },
                )
            }
            PathSegment::Arc {
                center,
                radius,
                start_angle,
                end_angle,
            } => {
                let mid = start_angle + (end_angle - start_angle) * s;
                (
                    PathSegment::Arc {
                        center,
                        radius,
                        start_angle,
                        end_angle: mid,
                    },
                    PathSegment::Arc {
                        center,
                        radius,
                        start_angle: mid,
                        end_angle,
                    },
                )
            }
        }
    }

    /// Euclidean distance from the segment to a point.
    pub fn distance_to(&self, p: C64) -> f64 {
        match *self {
            PathSegment::Line { from, to } => {
                let d = to - from;
                let s = ((p - from) * d.conj()).re / d.norm_sqr();
                let s = s.clamp(0.0, 1.0);
                (from + d * s - p).norm()
            }
            PathSegment::Arc {
                center,
                radius,
                start_angle,
                end_angle,
            } => {
                let v = p - center;
                let ends = (self.start() - p).norm().min((self.end() - p).norm());
                if v.norm() == 0.0 {
                    return radius;
                }
                // is the radial projection of p inside the swept angles?
                let (lo, hi) = if start_angle < end_angle {
                    (start_angle, end_angle)
                } else {
                    (end_angle, start_angle)
                };
                let mut th = v.arg();
                while th < lo {
                    th += 2.0 * PI;
                }
                while th > lo + 2.0 * PI {
                    th -= 2.0 * PI;
                }
                if th <= hi {
                    (v.norm() - radius).abs()
                } else {
                    ends
                }
            }
        }
    }
}

/// A piecewise path made of lines and arcs.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    segments: Vec<PathSegment>,
    basepoint: C64,
}

impl Path {
    pub fn new(segments: Vec<PathSegment>) -> Result<Self> {
        let first = segments
            .first()
            .ok_or_else(|| LabError::InvalidArgument("empty path".into()))?;
        for w in segments.windows(2) {
            let (a, b) = (w[0].end(), w[1].start());
            if (a - b).norm() > JOIN_TOL * (1.0 + a.norm()) {
                return Err(LabError::InvalidArgument(format!(
                    "segments do not join: {a} vs {b}"
                )));
            }
        }
        Ok(Path {
            basepoint: first.start(),
            segments,
        })
    }

    pub fn segments(&self) -> &[PathSegment] {
        &self.segments
    }

    pub fn basepoint(&self) -> C64 {
        self.basepoint
    }

    pub fn end(&self) -> C64 {
        self.segments
            .last()
            .map(|s| s.end())
            .unwrap_or(self.basepoint)
    }

    pub fn is_loop(&self) -> bool {
        let (a, b) = (self.basepoint, self.end());
        (a - b).norm() <= JOIN_TOL * (1.0 + a.norm())
    }

    pub fn length(&self) -> f64 {
        self.segments.iter().map(|s| s.length()).sum()
    }

    /// `self` followed by `other`.
    pub fn then(&self, other: &Path) -> Result<Path> {
        let mut segs = self.segments.clone();
        segs.extend_from_slice(&other.segments);
        Path::new(segs)
    }

    pub fn reversed(&self) -> Path {
        let segs: Vec<_> = self.segments.iter().rev().map(|s| s.reversed()).collect();
        Path {
            basepoint: segs[0].start(),
            segments: segs,
        }
    }

    /// Smallest distance from the path to any of the points.
    pub fn min_distance(&self, points: &[C64]) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for (k, p) in points.iter().enumerate() {
            for s in &self.segments {
                let d = s.distance_to(*p);
                if best.map_or(true, |(b, _)| d < b) {
                    best = Some((d, k));
                }
            }
        }
        best
    }

    /// Straight segment.
    pub fn segment(from: C64, to: C64) -> Result<Path> {
        Path::new(vec![PathSegment::line(from, to)?])
    }

    /// Full circle around `center` starting and ending at `center + radius·e^{iθ₀}`.
    pub fn circle(center: C64, radius: f64, theta0: f64, counterclockwise: bool) -> Result<Path> {
        let sweep = if counterclockwise {
            2.0 * PI
        } else {
            -2.0 * PI
        };
        Path::new(vec![PathSegment::arc(
            center,
            radius,
            theta0,
            theta0 + sweep,
        )?])
    }

    /// Circle around `center` through `start` (which fixes radius and start angle).
    pub fn circle_through(center: C64, start: C64, counterclockwise: bool) -> Result<Path> {
        let v = start - center;
        Path::circle(center, v.norm(), v.arg(), counterclockwise)
    }

    /// Winding number of a closed path around `p` (not rounded).
    pub fn winding_number(&self, p: C64) -> f64 {
        let mut total = 0.0;
        for seg in &self.segments {
            let mut prev = seg.point(0.0) - p;
            let mut s = 0.0;
            while s < 1.0 {
                // keep each angular increment well below π
                let dist = prev.norm().max(1e-300);
                let ds = (0.1 * dist / seg.length().max(1e-300)).clamp(1e-9, 0.01);
                s = (s + ds).min(1.0);
                let cur = seg.point(s) - p;
                total += (cur / prev).arg();
                prev = cur;
            }
        }
        total / std::f64::consts::TAU
    }

    /// Closed loop: segment from `base` to `p`, the given loop at `p`, segment back.
    pub fn lasso(base: C64, inner: &Path) -> Result<Path> {
        let p = inner.basepoint();
        let mut segs = Vec::new();
        if (p - base).norm() > 0.0 {
            segs.push(PathSegment::line(base, p)?);
        }
        segs.extend_from_slice(inner.segments());
        if (p - base).norm() > 0.0 {
            segs.push(PathSegment::line(p, base)?);
        }
        Path::new(segs)
    }
}
