//! Planar points and the two node metrics used for neighbor queries.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Point { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point { x, y }
    }
}

pub fn euclid_distance(a: Point, b: Point) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// Angular separation of `a` and `b` seen from `depot`, folded onto the
/// shorter arc so the result lies in `[0, π]`.
pub fn polar_angle_distance(a: Point, b: Point, depot: Point) -> Result<f64> {
    if a == depot || b == depot {
        return Err(Error::CoincidesWithDepot);
    }
    let ta = (a.y - depot.y).atan2(a.x - depot.x);
    let tb = (b.y - depot.y).atan2(b.x - depot.x);
    let diff = (ta - tb).abs();
    Ok(if diff > PI { 2.0 * PI - diff } else { diff })
}
