//! Network layout: hexagonal macro sites with three sectors each, the
//! cell-free access points, and the user drop.
//!
//! Sites sit on a triangular lattice with spacing equal to the inter-site
//! distance, so every site owns a flat-topped hexagonal cell of inradius
//! `isd / 2`. The evaluated cluster is grown greedily around site 0 at the
//! origin and the guard ring is made of the lattice sites closest to the
//! cluster centroid.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

pub const SECTORS_PER_SITE: usize = 3;
/// Users never come closer than this to their cell center (m).
pub const UE_MIN_RADIUS: f64 = 15.0;
/// Outer user radius as a fraction of `isd / 2`.
pub const UE_MAX_RADIUS_FRAC: f64 = 0.97;
/// Cell-edge AP circle radius as a fraction of `isd / 2`.
pub const CELL_EDGE_AP_RADIUS_FRAC: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Azimuth of `other` seen from `self`, in (-pi, pi].
    pub fn azimuth_to(&self, other: &Point) -> f64 {
        (other.y - self.y).atan2(other.x - self.x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApMode {
    Uniform,
    CellEdge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserClass {
    CellInside,
    CellEdge,
}

impl UserClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            UserClass::CellInside => "cell_inside",
            UserClass::CellEdge => "cell_edge",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkLayout {
    pub isd: f64,
    pub h_bs: f64,
    pub h_ap: f64,
    pub h_ue: f64,
    pub sites: Vec<Point>,
    /// Boresight azimuth of BS `l`, which lives at site `l / 3`.
    pub sector_orientations: Vec<f64>,
    pub evaluation_cells: Vec<usize>,
    pub aps: Vec<Point>,
    pub ap_cells: Vec<usize>,
    pub ues: Vec<Point>,
    pub ue_cells: Vec<usize>,
    pub ue_sectors: Vec<usize>,
}

impl NetworkLayout {
    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn n_bs(&self) -> usize {
        self.sector_orientations.len()
    }

    pub fn n_aps(&self) -> usize {
        self.aps.len()
    }

    pub fn n_ues(&self) -> usize {
        self.ues.len()
    }

    pub fn bs_site(&self, bs: usize) -> usize {
        bs / SECTORS_PER_SITE
    }

    pub fn bs_position(&self, bs: usize) -> Point {
        self.sites[self.bs_site(bs)]
    }

    pub fn is_evaluated(&self, cell: usize) -> bool {
        self.evaluation_cells.contains(&cell)
    }

    pub fn ue_min_radius(&self) -> f64 {
        UE_MIN_RADIUS
    }

    pub fn ue_max_radius(&self) -> f64 {
        UE_MAX_RADIUS_FRAC * self.isd / 2.0
    }

    /// True when `p` lies in the hexagonal footprint of `cell`.
    pub fn in_cell(&self, cell: usize, p: &Point) -> bool {
        in_hexagon(&self.sites[cell], self.isd, p)
    }

    pub fn classify(&self, ue: usize) -> UserClass {
        classify_user(&self.ues[ue], self)
    }

    /// Replaces the AP set.
    pub fn place_aps<R: Rng + ?Sized>(&self, mode: ApMode, per_cell: usize, rng: &mut R) -> NetworkLayout {
        let mut out = self.clone();
        out.aps.clear();
        out.ap_cells.clear();
        let radius = CELL_EDGE_AP_RADIUS_FRAC * self.isd / 2.0;
        for (cell, center) in self.sites.iter().enumerate() {
            match mode {
                ApMode::CellEdge => {
                    if per_cell == 0 {
                        continue;
                    }
                    let step = 2.0 * PI / per_cell as f64;
                    let offset = rng.random::<f64>() * step;
                    for i in 0..per_cell {
                        let a = offset + step * i as f64;
                        out.aps.push(Point::new(center.x + radius * a.cos(), center.y + radius * a.sin()));
                        out.ap_cells.push(cell);
                    }
                }
                ApMode::Uniform => {
                    // rejection sampling from the bounding box of the hexagon
                    let half_w = self.isd / 3f64.sqrt();
                    let half_h = self.isd / 2.0;
                    let mut placed = 0;
                    while placed < per_cell {
                        let p = Point::new(
                            center.x + (2.0 * rng.random::<f64>() - 1.0) * half_w,
                            center.y + (2.0 * rng.random::<f64>() - 1.0) * half_h,
                        );
                        if in_hexagon(center, self.isd, &p) {
                            out.aps.push(p);
                            out.ap_cells.push(cell);
                            placed += 1;
                        }
                    }
                }
            }
        }
        out
    }

    /// Replaces the user set with `users_per_sector` users dropped uniformly
    /// in every sector wedge of the annulus `[15 m, 0.97 isd / 2]`.
    pub fn drop_users<R: Rng + ?Sized>(&self, users_per_sector: usize, rng: &mut R) -> Result<NetworkLayout> {
        if users_per_sector == 0 {
            return Err(SimError::invalid("users_per_sector must be at least 1"));
        }
        let mut out = self.clone();
        out.ues.clear();
        out.ue_cells.clear();
        out.ue_sectors.clear();
        let r_min2 = UE_MIN_RADIUS * UE_MIN_RADIUS;
        let r_max = self.ue_max_radius();
        let r_max2 = r_max * r_max;
        let half_arc = PI / SECTORS_PER_SITE as f64;
        for bs in 0..self.n_bs() {
            let site = self.bs_site(bs);
            let c = self.sites[site];
            let bore = self.sector_orientations[bs];
            for _ in 0..users_per_sector {
                let r = (r_min2 + rng.random::<f64>() * (r_max2 - r_min2)).sqrt().clamp(UE_MIN_RADIUS, r_max);
                let a = bore + (2.0 * rng.random::<f64>() - 1.0) * half_arc;
                out.ues.push(Point::new(c.x + r * a.cos(), c.y + r * a.sin()));
                out.ue_cells.push(site);
                out.ue_sectors.push(bs);
            }
        }
        Ok(out)
    }

    /// Writes the layout as `entity_type,id,x,y,z,cell_id` rows preceded by
    /// a `# isd=<m>` comment line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# isd={}", self.isd).map_err(|e| SimError::io("<layout>", e))?;
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["entity_type", "id", "x", "y", "z", "cell_id"])?;
        for (i, s) in self.sites.iter().enumerate() {
            let kind = if self.is_evaluated(i) { "eval_site" } else { "site" };
            wr.serialize((kind, i, s.x, s.y, self.h_bs, i))?;
        }
        for bs in 0..self.n_bs() {
            let p = self.bs_position(bs);
            wr.serialize(("bs", bs, p.x, p.y, self.h_bs, self.bs_site(bs)))?;
        }
        for (i, p) in self.aps.iter().enumerate() {
            wr.serialize(("ap", i, p.x, p.y, self.h_ap, self.ap_cells[i]))?;
        }
        for (i, p) in self.ues.iter().enumerate() {
            wr.serialize(("ue", i, p.x, p.y, self.h_ue, self.ue_cells[i]))?;
        }
        wr.flush().map_err(|e| SimError::io("<layout>", e))?;
        Ok(())
    }

    /// Inverse of [`NetworkLayout::write_csv`]. User sectors are recovered
    /// from the azimuth relative to the cell center.
    pub fn read_csv<R: BufRead>(mut r: R) -> Result<NetworkLayout> {
        let parse_err = |msg: String| SimError::Parse {
            path: "<layout>".into(),
            msg,
        };
        let mut first = String::new();
        r.read_line(&mut first).map_err(|e| SimError::io("<layout>", e))?;
        let isd: f64 = first
            .trim()
            .strip_prefix("# isd=")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| parse_err(format!("expected `# isd=<m>` header, got `{}`", first.trim())))?;

        let mut layout = NetworkLayout {
            isd,
            h_bs: 25.0,
            h_ap: 10.0,
            h_ue: 1.5,
            sites: vec![],
            sector_orientations: vec![],
            evaluation_cells: vec![],
            aps: vec![],
            ap_cells: vec![],
            ues: vec![],
            ue_cells: vec![],
            ue_sectors: vec![],
        };
        let mut rd = csv::Reader::from_reader(r);
        for rec in rd.deserialize::<(String, usize, f64, f64, f64, usize)>() {
            let (kind, id, x, y, z, cell) = rec?;
            let p = Point::new(x, y);
            match kind.as_str() {
                "site" | "eval_site" => {
                    if id != layout.sites.len() {
                        return Err(parse_err(format!("site ids must be consecutive, got {id}")));
                    }
                    layout.sites.push(p);
                    layout.h_bs = z;
                    if kind == "eval_site" {
                        layout.evaluation_cells.push(id);
                    }
                    for t in 0..SECTORS_PER_SITE {
                        layout.sector_orientations.push(sector_boresight(t));
                    }
                }
                "bs" => {}
                "ap" => {
                    layout.aps.push(p);
                    layout.ap_cells.push(cell);
                    layout.h_ap = z;
                }
                "ue" => {
                    layout.ues.push(p);
                    layout.ue_cells.push(cell);
                    layout.h_ue = z;
                }
                other => return Err(parse_err(format!("unknown entity type `{other}`"))),
            }
        }
        for i in 0..layout.ues.len() {
            let cell = layout.ue_cells[i];
            let c = layout.sites.get(cell).ok_or_else(|| parse_err(format!("user {i} refers to missing cell {cell}")))?;
            let az = c.azimuth_to(&layout.ues[i]);
            let sector = (0..SECTORS_PER_SITE)
                .min_by(|&a, &b| {
                    angle_diff(az, sector_boresight(a))
                        .abs()
                        .total_cmp(&angle_diff(az, sector_boresight(b)).abs())
                })
                .unwrap_or(0);
            layout.ue_sectors.push(cell * SECTORS_PER_SITE + sector);
        }
        Ok(layout)
    }
}

/// Boresight azimuth of sector `t` of a site.
pub fn sector_boresight(t: usize) -> f64 {
    t as f64 * 2.0 * PI / SECTORS_PER_SITE as f64
}

/// Wraps `a - b` to [-pi, pi).
pub fn angle_diff(a: f64, b: f64) -> f64 {
    (a - b + PI).rem_euclid(2.0 * PI) - PI
}

fn lattice_point(i: i64, j: i64, isd: f64) -> Point {
    // basis: isd * (cos 30, sin 30) and isd * (0, 1)
    let c = 3f64.sqrt() / 2.0;
    Point::new(isd * c * i as f64, isd * (0.5 * i as f64 + j as f64))
}

fn in_hexagon(center: &Point, isd: f64, p: &Point) -> bool {
    let dx = p.x - center.x;
    let dy = p.y - center.y;
    let lim = isd / 2.0 * (1.0 + 1e-12);
    [PI / 6.0, PI / 2.0, 5.0 * PI / 6.0]
        .iter()
        .all(|a| (dx * a.cos() + dy * a.sin()).abs() <= lim)
}

/// Ordering key: distance (quantized, in ISD units) then azimuth in [0, 2pi).
fn ring_key(from: &Point, p: &Point, isd: f64) -> (i64, i64) {
    let d = (from.dist(p) / isd * 1e6).round() as i64;
    let az = from.azimuth_to(p).rem_euclid(2.0 * PI);
    let az = if from.dist(p) < 1e-9 * isd { 0 } else { (az * 1e6).round() as i64 };
    (d, az)
}

/// Builds `n_center + n_ring` sites with three sectors each. Only the
/// center sites are evaluated.
pub fn build_hex_layout(isd: f64, n_center_cells: usize, n_ring_cells: usize) -> Result<NetworkLayout> {
    if !(isd > 0.0) || !isd.is_finite() {
        return Err(SimError::invalid(format!("inter-site distance must be positive, got {isd}")));
    }
    if n_center_cells == 0 {
        return Err(SimError::invalid("at least one center cell is required"));
    }
    let total = n_center_cells + n_ring_cells;
    let radius = (total as f64).sqrt().ceil() as i64 + 3;
    let mut lattice: Vec<Point> = Vec::new();
    for i in -radius..=radius {
        for j in -radius..=radius {
            lattice.push(lattice_point(i, j, isd));
        }
    }

    let origin = Point::new(0.0, 0.0);
    let mut chosen: Vec<Point> = vec![origin];
    let centroid = |pts: &[Point]| {
        let n = pts.len() as f64;
        Point::new(pts.iter().map(|p| p.x).sum::<f64>() / n, pts.iter().map(|p| p.y).sum::<f64>() / n)
    };
    let taken = |pts: &[Point], p: &Point| pts.iter().any(|q| q.dist(p) < 1e-6 * isd);

    while chosen.len() < n_center_cells {
        let c = centroid(&chosen);
        let next = lattice
            .iter()
            .filter(|p| !taken(&chosen, p))
            .min_by_key(|p| ring_key(&c, p, isd))
            .copied()
            .ok_or_else(|| SimError::invalid("lattice exhausted"))?;
        chosen.push(next);
    }
    let c = centroid(&chosen);
    let mut ring: Vec<Point> = lattice.iter().filter(|p| !taken(&chosen, p)).copied().collect();
    ring.sort_by_key(|p| ring_key(&c, p, isd));
    chosen.extend(ring.into_iter().take(n_ring_cells));

    let sector_orientations = (0..total)
        .flat_map(|_| (0..SECTORS_PER_SITE).map(sector_boresight))
        .collect();
    Ok(NetworkLayout {
        isd,
        h_bs: 25.0,
        h_ap: 10.0,
        h_ue: 1.5,
        sites: chosen,
        sector_orientations,
        evaluation_cells: (0..n_center_cells).collect(),
        aps: vec![],
        ap_cells: vec![],
        ues: vec![],
        ue_cells: vec![],
        ue_sectors: vec![],
    })
}

/// A user is cell-inside when its nearest macro site is strictly closer
/// than `isd / 3`.
pub fn classify_user(ue: &Point, layout: &NetworkLayout) -> UserClass {
    let nearest = layout.sites.iter().map(|s| s.dist(ue)).fold(f64::INFINITY, f64::min);
    if nearest < layout.isd / 3.0 {
        UserClass::CellInside
    } else {
        UserClass::CellEdge
    }
}
