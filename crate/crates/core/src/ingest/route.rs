use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::geometry::{Port, RoundaboutGeometry};
use super::track::Track;
use crate::error::{Error, Result};

/// Number of distinct entry–exit routes (4 ports, same-port excluded).
pub const ROUTE_COUNT: usize = 12;

/// Swept polar angle above which a track counts as having looped the
/// roundabout more than once.
pub const FULL_CIRCLE_LIMIT: f64 = TAU + 0.35;

/// Entry–exit combination of one vehicle. `entry != exit` always holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Route {
    entry: Port,
    exit: Port,
}

impl Route {
    pub fn new(entry: Port, exit: Port) -> Option<Route> {
        (entry != exit).then_some(Route { entry, exit })
    }

    pub fn entry(&self) -> Port {
        self.entry
    }

    pub fn exit(&self) -> Port {
        self.exit
    }

    /// Index in `0..12`, enumerating entries in port order and, for each
    /// entry, the three remaining exits in port order.
    pub fn id(&self) -> usize {
        let (e, x) = (self.entry.index(), self.exit.index());
        e * 3 + if x > e { x - 1 } else { x }
    }

    pub fn from_id(id: usize) -> Result<Route> {
        if id >= ROUTE_COUNT {
            return Err(Error::RouteIdOutOfRange(id));
        }
        let e = id / 3;
        let mut x = id % 3;
        if x >= e {
            x += 1;
        }
        Ok(Route {
            entry: Port::ALL[e],
            exit: Port::ALL[x],
        })
    }

    pub fn all() -> impl Iterator<Item = Route> {
        (0..ROUTE_COUNT).map(|id| Route::from_id(id).unwrap())
    }
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.entry, self.exit)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RouteRejection {
    TooShort,
    /// Every sample lies outside the gate circle.
    NeverEntered,
    /// The track starts inside the gate circle, so no entry is observed.
    NoEntryCrossing,
    /// The track ends inside the gate circle, so no exit is observed.
    NoExitCrossing,
    /// A gate crossing falls outside every port sector.
    OutsidePorts { angle: f64 },
    SamePort(Port),
    MultipleCircles { swept: f64 },
}

impl fmt::Display for RouteRejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RouteRejection::TooShort => write!(f, "fewer than 2 frames"),
            RouteRejection::NeverEntered => write!(f, "never entered"),
            RouteRejection::NoEntryCrossing => write!(f, "no entry crossing"),
            RouteRejection::NoExitCrossing => write!(f, "no exit crossing"),
            RouteRejection::OutsidePorts { angle } => {
                write!(f, "gate crossing at {angle:.3} rad outside all ports")
            }
            RouteRejection::SamePort(p) => write!(f, "same port ({p})"),
            RouteRejection::MultipleCircles { swept } => {
                write!(f, "multiple circles (swept {swept:.2} rad)")
            }
        }
    }
}

/// Point where segment `a -> b` meets the gate circle, by linear
/// interpolation of the radial distance.
fn crossing_point(a: [f64; 2], b: [f64; 2], da: f64, db: f64, gate: f64) -> [f64; 2] {
    let t = if (da - db).abs() > 0.0 {
        ((da - gate) / (da - db)).clamp(0.0, 1.0)
    } else {
        0.5
    };
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

/// Net polar angle swept around the center, unwrapping each step into
/// `(-pi, pi]`.
pub fn swept_angle(positions: &[[f64; 2]], geom: &RoundaboutGeometry) -> f64 {
    let mut total = 0.0;
    let mut prev: Option<f64> = None;
    for &p in positions {
        let a = geom.angle_of(p);
        if let Some(q) = prev {
            let mut d = a - q;
            if d > std::f64::consts::PI {
                d -= TAU;
            } else if d <= -std::f64::consts::PI {
                d += TAU;
            }
            total += d;
        }
        prev = Some(a);
    }
    total
}

/// Determines which port a vehicle entered and left through.
///
/// Entry is the first inward crossing of the gate circle, exit the last
/// outward crossing. Tracks looping more than once (`FULL_CIRCLE_LIMIT`) and
/// same-port U-turns are rejected.
pub fn classify_route(
    track: &Track,
    geom: &RoundaboutGeometry,
) -> std::result::Result<Route, RouteRejection> {
    classify_positions(&track.positions, geom)
}

pub fn classify_positions(
    positions: &[[f64; 2]],
    geom: &RoundaboutGeometry,
) -> std::result::Result<Route, RouteRejection> {
    if positions.len() < 2 {
        return Err(RouteRejection::TooShort);
    }
    let gate = geom.gate_radius;
    let dist: Vec<f64> = positions.iter().map(|&p| geom.distance_to_center(p)).collect();
    if dist.iter().all(|&d| d > gate) {
        return Err(RouteRejection::NeverEntered);
    }

    let mut entry = None;
    let mut exit = None;
    for i in 0..positions.len() - 1 {
        let (d0, d1) = (dist[i], dist[i + 1]);
        if d0 > gate && d1 <= gate && entry.is_none() {
            entry = Some(crossing_point(positions[i], positions[i + 1], d0, d1, gate));
        }
        if d0 <= gate && d1 > gate {
            exit = Some(crossing_point(positions[i], positions[i + 1], d0, d1, gate));
        }
    }
    let entry = entry.ok_or(RouteRejection::NoEntryCrossing)?;
    let exit = exit.ok_or(RouteRejection::NoExitCrossing)?;

    let swept = swept_angle(positions, geom).abs();
    if swept > FULL_CIRCLE_LIMIT {
        return Err(RouteRejection::MultipleCircles { swept });
    }

    let port = |p: [f64; 2]| {
        let angle = geom.angle_of(p);
        geom.port_at(angle)
            .ok_or(RouteRejection::OutsidePorts { angle })
    };
    let (entry, exit) = (port(entry)?, port(exit)?);
    Route::new(entry, exit).ok_or(RouteRejection::SamePort(entry))
}
