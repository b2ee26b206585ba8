//! Room geometry and its uniform triangulation.
//!
//! The rectangle `[0, L1] × [0, L2]` is split into square cells of side `1/n`,
//! each cut along the diagonal from its lower-left to its upper-right corner.
//! Boundary intervals (inlet, outlet, heater) and observation rectangles must
//! have endpoints on the grid so that every boundary edge and every triangle
//! belongs to a region exactly or not at all.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ALIGN_TOL: f64 = 1e-9;

/// Side of the rectangle a boundary interval lives on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// ξ₁ = 0
    Left,
    /// ξ₁ = L1
    Right,
    /// ξ₂ = 0
    Bottom,
    /// ξ₂ = L2
    Top,
}

/// Interval `[start, end]` along one side; the coordinate is ξ₂ on the
/// left/right sides and ξ₁ on the bottom/top sides.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryInterval {
    pub side: Side,
    pub start: f64,
    pub end: f64,
}

impl BoundaryInterval {
    pub fn new(side: Side, start: f64, end: f64) -> Self {
        Self { side, start, end }
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    /// True when the point lies on this interval (closed).
    pub fn contains_point(&self, p: [f64; 2], width: f64, height: f64) -> bool {
        let (on_side, t) = match self.side {
            Side::Left => (p[0].abs() < ALIGN_TOL, p[1]),
            Side::Right => ((p[0] - width).abs() < ALIGN_TOL, p[1]),
            Side::Bottom => (p[1].abs() < ALIGN_TOL, p[0]),
            Side::Top => ((p[1] - height).abs() < ALIGN_TOL, p[0]),
        };
        on_side && t >= self.start - ALIGN_TOL && t <= self.end + ALIGN_TOL
    }

    fn overlaps(&self, other: &BoundaryInterval) -> bool {
        self.side == other.side
            && self.start < other.end - ALIGN_TOL
            && other.start < self.end - ALIGN_TOL
    }
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x0 - ALIGN_TOL
            && p[0] <= self.x1 + ALIGN_TOL
            && p[1] >= self.y0 - ALIGN_TOL
            && p[1] <= self.y1 + ALIGN_TOL
    }
}

/// Boundary condition class of a boundary edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryTag {
    Inlet,
    Outlet,
    Heater,
    Wall,
}

/// Named subset of the room used by observations and inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Region {
    Domain { rect: Rect },
    Boundary { interval: BoundaryInterval },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomGeometry {
    pub width: f64,
    pub height: f64,
    pub inlet: Option<BoundaryInterval>,
    pub outlet: Option<BoundaryInterval>,
    pub heater: Option<BoundaryInterval>,
    /// Observation regions by name; the names `inlet`, `outlet` and `heater`
    /// are reserved for the vents and the heating strip.
    #[serde(default)]
    pub regions: Vec<(String, Region)>,
}

impl RoomGeometry {
    /// Unit-square room with the vents and heater of the reference experiment.
    pub fn reference_room() -> Self {
        RoomGeometry {
            width: 1.0,
            height: 1.0,
            inlet: Some(BoundaryInterval::new(Side::Left, 5.0 / 8.0, 7.0 / 8.0)),
            outlet: Some(BoundaryInterval::new(Side::Right, 1.0 / 8.0, 0.5)),
            heater: Some(BoundaryInterval::new(Side::Bottom, 3.0 / 8.0, 5.0 / 8.0)),
            regions: vec![
                (
                    "omega_theta".into(),
                    Region::Domain {
                        rect: Rect::new(1.0 / 8.0, 2.0 / 8.0, 5.0 / 8.0, 6.0 / 8.0),
                    },
                ),
                (
                    "omega_v".into(),
                    Region::Domain {
                        rect: Rect::new(3.0 / 8.0, 4.0 / 8.0, 2.0 / 8.0, 3.0 / 8.0),
                    },
                ),
            ],
        }
    }

    pub fn side_length(&self, side: Side) -> f64 {
        match side {
            Side::Left | Side::Right => self.height,
            Side::Bottom | Side::Top => self.width,
        }
    }

    fn named_intervals(&self) -> impl Iterator<Item = (&'static str, &BoundaryInterval)> {
        [("inlet", &self.inlet), ("outlet", &self.outlet), ("heater", &self.heater)]
            .into_iter()
            .filter_map(|(name, iv)| iv.as_ref().map(|iv| (name, iv)))
    }

    /// Looks up a region by name, including the reserved boundary names.
    pub fn region(&self, name: &str) -> Result<Region> {
        if let Some((_, iv)) = self.named_intervals().find(|(n, _)| *n == name) {
            return Ok(Region::Boundary { interval: *iv });
        }
        self.regions
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, r)| r.clone())
            .ok_or_else(|| Error::UnknownRegion(name.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(Error::Geometry("room dimensions must be positive".into()));
        }
        let named: Vec<_> = self.named_intervals().collect();
        for (name, iv) in &named {
            let len = self.side_length(iv.side);
            if !(iv.start >= -ALIGN_TOL && iv.end <= len + ALIGN_TOL && iv.start < iv.end) {
                return Err(Error::Geometry(format!(
                    "{name} interval [{}, {}] does not fit on its side",
                    iv.start, iv.end
                )));
            }
        }
        for (i, (a, ia)) in named.iter().enumerate() {
            for (b, ib) in &named[i + 1..] {
                if ia.overlaps(ib) {
                    return Err(Error::Geometry(format!("{a} and {b} overlap")));
                }
            }
        }
        for (name, region) in &self.regions {
            if matches!(name.as_str(), "inlet" | "outlet" | "heater") {
                return Err(Error::Geometry(format!("region name `{name}` is reserved")));
            }
            match region {
                Region::Domain { rect } => {
                    let inside = rect.x0 >= -ALIGN_TOL
                        && rect.x1 <= self.width + ALIGN_TOL
                        && rect.y0 >= -ALIGN_TOL
                        && rect.y1 <= self.height + ALIGN_TOL
                        && rect.x0 <= rect.x1
                        && rect.y0 <= rect.y1;
                    if !inside {
                        return Err(Error::Geometry(format!("region `{name}` leaves the room")));
                    }
                }
                Region::Boundary { interval } => {
                    let len = self.side_length(interval.side);
                    if interval.start < -ALIGN_TOL
                        || interval.end > len + ALIGN_TOL
                        || interval.start > interval.end
                    {
                        return Err(Error::Geometry(format!("region `{name}` leaves its side")));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryEdge {
    /// Vertex indices ordered along increasing side coordinate.
    pub vertices: [usize; 2],
    pub side: Side,
    pub tag: BoundaryTag,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub geometry: RoomGeometry,
    /// Subdivisions per unit length.
    pub n: usize,
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
}

/// Result of [`Mesh::locate_region`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RegionSet {
    Triangles(Vec<usize>),
    Edges(Vec<usize>),
}

impl RegionSet {
    pub fn len(&self) -> usize {
        match self {
            RegionSet::Triangles(v) | RegionSet::Edges(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn aligned(region: &str, value: f64, n: usize) -> Result<()> {
    let scaled = value * n as f64;
    if (scaled - scaled.round()).abs() > 1e-8 {
        return Err(Error::Alignment {
            region: region.to_string(),
            value,
            n,
        });
    }
    Ok(())
}

/// Builds the uniform criss triangulation with `n` cells per unit length.
pub fn build_mesh(geometry: &RoomGeometry, n: usize) -> Result<Mesh> {
    if n < 2 {
        return Err(Error::Geometry(format!("subdivision count {n} < 2")));
    }
    geometry.validate()?;
    aligned("room width", geometry.width, n)?;
    aligned("room height", geometry.height, n)?;
    for (name, iv) in geometry.named_intervals() {
        aligned(name, iv.start, n)?;
        aligned(name, iv.end, n)?;
    }
    for (name, region) in &geometry.regions {
        match region {
            Region::Domain { rect } => {
                for v in [rect.x0, rect.x1, rect.y0, rect.y1] {
                    aligned(name, v, n)?;
                }
            }
            Region::Boundary { interval } => {
                aligned(name, interval.start, n)?;
                aligned(name, interval.end, n)?;
            }
        }
    }

    let h = 1.0 / n as f64;
    let nx = (geometry.width * n as f64).round() as usize;
    let ny = (geometry.height * n as f64).round() as usize;
    let vid = |i: usize, j: usize| j * (nx + 1) + i;

    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([i as f64 * h, j as f64 * h]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            triangles.push([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)]);
            triangles.push([vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)]);
        }
    }

    let mut boundary_edges = Vec::with_capacity(2 * (nx + ny));
    let mut push_side = |side: Side, count: usize, vertex_at: &dyn Fn(usize) -> usize| {
        for k in 0..count {
            let (a, b) = (vertex_at(k), vertex_at(k + 1));
            let mid_t = (k as f64 + 0.5) * h;
            let inside = |iv: &Option<BoundaryInterval>| {
                iv.map(|iv| iv.side == side && mid_t > iv.start && mid_t < iv.end)
                    .unwrap_or(false)
            };
            let tag = if inside(&geometry.inlet) {
                BoundaryTag::Inlet
            } else if inside(&geometry.outlet) {
                BoundaryTag::Outlet
            } else if inside(&geometry.heater) {
                BoundaryTag::Heater
            } else {
                BoundaryTag::Wall
            };
            boundary_edges.push(BoundaryEdge {
                vertices: [a, b],
                side,
                tag,
            });
        }
    };
    push_side(Side::Bottom, nx, &|k| vid(k, 0));
    push_side(Side::Right, ny, &|k| vid(nx, k));
    push_side(Side::Top, nx, &|k| vid(k, ny));
    push_side(Side::Left, ny, &|k| vid(0, k));

    Ok(Mesh {
        geometry: geometry.clone(),
        n,
        nx,
        ny,
        h,
        vertices,
        triangles,
        boundary_edges,
    })
}

impl Mesh {
    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|v| self.vertices[v]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.boundary_edges[e].vertices.map(|v| self.vertices[v]);
        ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
    }

    pub fn edges_with_tag(&self, tag: BoundaryTag) -> Vec<usize> {
        (0..self.boundary_edges.len())
            .filter(|&e| self.boundary_edges[e].tag == tag)
            .collect()
    }

    pub fn edges_in_interval(&self, interval: &BoundaryInterval) -> Vec<usize> {
        let (w, h) = (self.geometry.width, self.geometry.height);
        (0..self.boundary_edges.len())
            .filter(|&e| {
                let edge = &self.boundary_edges[e];
                edge.side == interval.side
                    && edge
                        .vertices
                        .iter()
                        .all(|&v| interval.contains_point(self.vertices[v], w, h))
            })
            .collect()
    }

    pub fn triangles_in_rect(&self, rect: &Rect) -> Vec<usize> {
        if rect.area() <= 0.0 {
            return Vec::new();
        }
        (0..self.triangles.len())
            .filter(|&t| self.triangles[t].iter().all(|&v| rect.contains(self.vertices[v])))
            .collect()
    }

    /// Triangles inside a domain region, or boundary edges on a boundary
    /// region, in ascending index order.
    pub fn locate_region(&self, name: &str) -> Result<RegionSet> {
        Ok(match self.geometry.region(name)? {
            Region::Domain { rect } => RegionSet::Triangles(self.triangles_in_rect(&rect)),
            Region::Boundary { interval } => RegionSet::Edges(self.edges_in_interval(&interval)),
        })
    }

    /// SHA-256 of the plain-text listing; keys cached artifacts to the mesh.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        format!("{:x}", Sha256::digest(self.to_text().as_bytes()))
    }

    /// Plain-text listing: vertex count, vertices, triangle count, triangles,
    /// boundary edge count, edges with tags.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "vertices {}", self.vertices.len());
        for v in &self.vertices {
            let _ = writeln!(out, "{:.17e} {:.17e}", v[0], v[1]);
        }
        let _ = writeln!(out, "triangles {}", self.triangles.len());
        for t in &self.triangles {
            let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
        }
        let _ = writeln!(out, "boundary_edges {}", self.boundary_edges.len());
        for e in &self.boundary_edges {
            let _ = writeln!(out, "{} {} {:?}", e.vertices[0], e.vertices[1], e.tag);
        }
        out
    }
}
