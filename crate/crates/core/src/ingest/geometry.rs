use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the four arms of the roundabout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Port {
    A,
    B,
    C,
    D,
}

impl Port {
    pub const ALL: [Port; 4] = [Port::A, Port::B, Port::C, Port::D];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Port> {
        Port::ALL.get(index).copied()
    }
}

impl fmt::Display for Port {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = ['A', 'B', 'C', 'D'][self.index()];
        write!(f, "{c}")
    }
}

/// Angular interval swept counter-clockwise from `start` to `end`, in radians.
///
/// Membership is half-open, `[start, end)`, so that adjacent sectors sharing
/// a boundary never both claim an angle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sector {
    pub start: f64,
    pub end: f64,
}

impl Sector {
    pub fn new(start: f64, end: f64) -> Self {
        Sector { start, end }
    }

    pub fn width(&self) -> f64 {
        let w = self.end - self.start;
        if w > 0.0 && w <= TAU {
            w
        } else {
            w.rem_euclid(TAU)
        }
    }

    pub fn contains(&self, angle: f64) -> bool {
        (angle - self.start).rem_euclid(TAU) < self.width()
    }

    pub fn mid(&self) -> f64 {
        self.start + 0.5 * self.width()
    }
}

/// Planar roundabout layout used to classify routes and mask KPI frames.
///
/// `outer_radius` bounds the circulatory roadway (KPI analysis only looks at
/// samples inside it). Entry and exit ports are detected where a trajectory
/// crosses the gate circle of radius `gate_radius`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundaboutGeometry {
    pub center: [f64; 2],
    pub outer_radius: f64,
    pub inner_radius: f64,
    pub gate_radius: f64,
    pub ports: [Sector; 4],
}

impl Default for RoundaboutGeometry {
    /// A four-armed roundabout centered at the origin with arms A–D pointing
    /// east, north, west and south.
    fn default() -> Self {
        let sector = |mid: f64| Sector::new(mid - FRAC_PI_4, mid + FRAC_PI_4);
        RoundaboutGeometry {
            center: [0.0, 0.0],
            outer_radius: 25.0,
            inner_radius: 12.0,
            gate_radius: 32.0,
            ports: [
                sector(0.0),
                sector(FRAC_PI_2),
                sector(PI),
                sector(PI + FRAC_PI_2),
            ],
        }
    }
}

#[derive(Serialize, Deserialize)]
struct GeometryFile {
    center_x: f64,
    center_y: f64,
    outer_radius: f64,
    inner_radius: f64,
    gate_radius: f64,
    #[serde(rename = "port_A")]
    port_a: [f64; 2],
    #[serde(rename = "port_B")]
    port_b: [f64; 2],
    #[serde(rename = "port_C")]
    port_c: [f64; 2],
    #[serde(rename = "port_D")]
    port_d: [f64; 2],
}

impl RoundaboutGeometry {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidGeometry(msg));
        let finite = self.center.iter().all(|v| v.is_finite())
            && [self.outer_radius, self.inner_radius, self.gate_radius]
                .iter()
                .all(|v| v.is_finite() && *v > 0.0);
        if !finite {
            return bad("center and radii must be finite, radii positive".into());
        }
        if self.inner_radius >= self.gate_radius {
            return bad(format!(
                "inner_radius {} must be smaller than gate_radius {}",
                self.inner_radius, self.gate_radius
            ));
        }
        if self.inner_radius >= self.outer_radius {
            return bad(format!(
                "inner_radius {} must be smaller than outer_radius {}",
                self.inner_radius, self.outer_radius
            ));
        }
        let mut total = 0.0;
        for (i, s) in self.ports.iter().enumerate() {
            if !(s.start.is_finite() && s.end.is_finite()) || s.width() <= 0.0 {
                return bad(format!("port {} has an empty sector", Port::ALL[i]));
            }
            total += s.width();
        }
        if total > TAU + 1e-9 {
            return bad(format!("port sectors cover {total} rad, more than a full circle"));
        }
        for i in 0..4 {
            for j in (i + 1)..4 {
                let (a, b) = (self.ports[i], self.ports[j]);
                if a.contains(b.start) || b.contains(a.start) {
                    return bad(format!(
                        "port sectors {} and {} overlap",
                        Port::ALL[i],
                        Port::ALL[j]
                    ));
                }
            }
        }
        Ok(())
    }

    /// Polar angle of `p` around the center.
    pub fn angle_of(&self, p: [f64; 2]) -> f64 {
        (p[1] - self.center[1]).atan2(p[0] - self.center[0])
    }

    pub fn distance_to_center(&self, p: [f64; 2]) -> f64 {
        (p[0] - self.center[0]).hypot(p[1] - self.center[1])
    }

    pub fn port_at(&self, angle: f64) -> Option<Port> {
        self.ports
            .iter()
            .position(|s| s.contains(angle))
            .and_then(Port::from_index)
    }

    pub fn sector(&self, port: Port) -> Sector {
        self.ports[port.index()]
    }

    pub fn translated(&self, offset: [f64; 2]) -> Self {
        RoundaboutGeometry {
            center: [self.center[0] + offset[0], self.center[1] + offset[1]],
            ..self.clone()
        }
    }

    pub fn from_toml_str(text: &str) -> std::result::Result<Self, toml::de::Error> {
        let f: GeometryFile = toml::from_str(text)?;
        Ok(RoundaboutGeometry {
            center: [f.center_x, f.center_y],
            outer_radius: f.outer_radius,
            inner_radius: f.inner_radius,
            gate_radius: f.gate_radius,
            ports: [f.port_a, f.port_b, f.port_c, f.port_d].map(|[s, e]| Sector::new(s, e)),
        })
    }

    pub fn to_toml_string(&self) -> String {
        let p = self.ports.map(|s| [s.start, s.end]);
        let f = GeometryFile {
            center_x: self.center[0],
            center_y: self.center[1],
            outer_radius: self.outer_radius,
            inner_radius: self.inner_radius,
            gate_radius: self.gate_radius,
            port_a: p[0],
            port_b: p[1],
            port_c: p[2],
            port_d: p[3],
        };
        toml::to_string(&f).expect("geometry serializes")
    }

    /// Reads and validates a geometry config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let geom = Self::from_toml_str(&text).map_err(|source| Error::Toml {
            path: path.to_path_buf(),
            source,
        })?;
        geom.validate()?;
        Ok(geom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_geometry_is_valid() {
        RoundaboutGeometry::default().validate().unwrap();
    }

    #[test]
    fn sectors_partition_the_default_circle() {
        let g = RoundaboutGeometry::default();
        for k in 0..360 {
            let a = (k as f64 + 0.5).to_radians() - PI;
            let owners = g.ports.iter().filter(|s| s.contains(a)).count();
            assert_eq!(owners, 1, "angle {a}");
        }
        assert_eq!(g.port_at(0.0), Some(Port::A));
        assert_eq!(g.port_at(FRAC_PI_2), Some(Port::B));
        assert_eq!(g.port_at(-PI), Some(Port::C));
        assert_eq!(g.port_at(-FRAC_PI_2), Some(Port::D));
    }

    #[test]
    fn overlapping_sectors_rejected() {
        let mut g = RoundaboutGeometry::default();
        g.ports[1] = Sector::new(0.5, 2.0);
        assert!(matches!(g.validate(), Err(Error::InvalidGeometry(_))));
    }

    #[test]
    fn inner_must_be_inside_gate() {
        let g = RoundaboutGeometry {
            inner_radius: 40.0,
            ..Default::default()
        };
        assert!(g.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let g = RoundaboutGeometry::default().translated([81.5, -47.25]);
        let back = RoundaboutGeometry::from_toml_str(&g.to_toml_string()).unwrap();
        assert_eq!(g, back);
        assert!(g.to_toml_string().contains("port_A"));
    }
}
