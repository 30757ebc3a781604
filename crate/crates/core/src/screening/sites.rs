//! Top, bridge and hollow sites from a Delaunay triangulation of the
//! topmost layer, and adsorbate placement on them.

use delaunator::{triangulate, Point, EMPTY};
use nalgebra::{Matrix3, Rotation3};
use serde::{Deserialize, Serialize};

use super::slab::top_layer;
use crate::elements;
use crate::error::{Error, Result};
use crate::geometry::{wrap_position, Structure, Vec3};

/// Atoms within this height of the highest slab atom form the top layer.
pub const TOP_LAYER_TOL: f64 = 0.1;
/// Sites closer than this after wrapping are merged.
pub const SITE_MERGE_RADIUS: f64 = 0.25;
/// Delaunay edges longer than this multiple of the nearest-neighbour
/// distance span a fourfold hollow rather than a bridge.
pub const BRIDGE_LENGTH_FACTOR: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SiteKind {
    Top,
    Bridge,
    Hollow,
}

impl SiteKind {
    pub fn label(&self) -> &'static str {
        match self {
            SiteKind::Top => "top",
            SiteKind::Bridge => "bridge",
            SiteKind::Hollow => "hollow",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdsorptionSite {
    pub kind: SiteKind,
    pub position: Vec3,
    pub anchors: Vec<usize>,
    pub normal: Vec3,
}

pub fn enumerate_sites(slab: &Structure) -> Result<Vec<AdsorptionSite>> {
    let top = top_layer(slab, TOP_LAYER_TOL);
    let lat = &slab.lattice;
    let z_plane = top.iter().map(|&i| slab.positions[i].z).sum::<f64>() / top.len().max(1) as f64;
    let mut pts = Vec::with_capacity(9 * top.len());
    let mut owner = Vec::with_capacity(9 * top.len());
    for k1 in -1..=1 {
        for k2 in -1..=1 {
            let shift = lat.shift_vector([k1, k2, 0]);
            for &i in &top {
                let p = slab.positions[i] + shift;
                pts.push(Point { x: p.x, y: p.y });
                owner.push(i);
            }
        }
    }
    if pts.len() < 3 {
        return Err(Error::Sites(format!("{} surface points, need at least 3", pts.len())));
    }
    let tri = triangulate(&pts);
    if tri.triangles.is_empty() {
        return Err(Error::Sites("surface points are collinear".into()));
    }
    let at = |k: usize| Vec3::new(pts[k].x, pts[k].y, z_plane);
    let edge_len = |a: usize, b: usize| ((pts[a].x - pts[b].x).powi(2) + (pts[a].y - pts[b].y).powi(2)).sqrt();
    let nn = (0..tri.triangles.len())
        .map(|e| edge_len(tri.triangles[e], tri.triangles[next_halfedge(e)]))
        .fold(f64::INFINITY, f64::min);
    let long = |a: usize, b: usize| edge_len(a, b) > BRIDGE_LENGTH_FACTOR * nn;

    let mut raw: Vec<(SiteKind, Vec3, Vec<usize>)> = top
        .iter()
        .map(|&i| {
            (
                SiteKind::Top,
                Vec3::new(slab.positions[i].x, slab.positions[i].y, z_plane),
                vec![i],
            )
        })
        .collect();
    for e in 0..tri.triangles.len() {
        let opp = tri.halfedges[e];
        if opp != EMPTY && opp < e {
            continue;
        }
        let (a, b) = (tri.triangles[e], tri.triangles[next_halfedge(e)]);
        if long(a, b) {
            continue;
        }
        raw.push((SiteKind::Bridge, (at(a) + at(b)) * 0.5, vec![owner[a], owner[b]]));
    }
    for t in 0..tri.triangles.len() / 3 {
        let v = [tri.triangles[3 * t], tri.triangles[3 * t + 1], tri.triangles[3 * t + 2]];
        let longs: Vec<(usize, usize)> = [(v[0], v[1]), (v[1], v[2]), (v[2], v[0])]
            .into_iter()
            .filter(|&(a, b)| long(a, b))
            .collect();
        match longs.len() {
            0 => raw.push((
                SiteKind::Hollow,
                (at(v[0]) + at(v[1]) + at(v[2])) / 3.0,
                v.iter().map(|&k| owner[k]).collect(),
            )),
            1 => {
                // half of a square: the diagonal midpoint is the fourfold hollow
                let (a, b) = longs[0];
                raw.push((
                    SiteKind::Hollow,
                    (at(a) + at(b)) * 0.5,
                    v.iter().map(|&k| owner[k]).collect(),
                ));
            }
            _ => {}
        }
    }

    let mut sites: Vec<AdsorptionSite> = Vec::new();
    for (kind, pos, mut anchors) in raw {
        let pos = wrap_position(&pos, lat);
        if sites
            .iter()
            .any(|s| lat.mic_distance(&s.position, &pos) < SITE_MERGE_RADIUS)
        {
            continue;
        }
        anchors.sort_unstable();
        anchors.dedup();
        sites.push(AdsorptionSite {
            kind,
            position: pos,
            anchors,
            normal: Vec3::z(),
        });
    }
    Ok(sites)
}

fn next_halfedge(e: usize) -> usize {
    if e % 3 == 2 {
        e - 2
    } else {
        e + 1
    }
}

/// Rigid adsorbate geometry in its own frame; the anchor binds to the site
/// and the template's +z axis is aligned with the surface normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdsorbateTemplate {
    pub name: String,
    pub atomic_numbers: Vec<u32>,
    pub positions: Vec<Vec3>,
    pub anchor: usize,
}

impl AdsorbateTemplate {
    pub fn atomic_oxygen() -> Self {
        AdsorbateTemplate {
            name: "O".into(),
            atomic_numbers: vec![8],
            positions: vec![Vec3::zeros()],
            anchor: 0,
        }
    }

    pub fn hydroxyl() -> Self {
        AdsorbateTemplate {
            name: "OH".into(),
            atomic_numbers: vec![8, 1],
            positions: vec![Vec3::zeros(), Vec3::new(0.0, 0.0, 0.97)],
            anchor: 0,
        }
    }

    /// "O", "OH", or None.
    pub fn named(name: &str) -> Option<Self> {
        match name.to_ascii_uppercase().as_str() {
            "O" => Some(Self::atomic_oxygen()),
            "OH" => Some(Self::hydroxyl()),
            _ => None,
        }
    }

    /// Template from a structure file: atom 0 is the anchor, positions are
    /// taken relative to it.
    pub fn from_structure(s: &Structure) -> Self {
        let origin = s.positions[0];
        AdsorbateTemplate {
            name: s
                .atomic_numbers
                .iter()
                .map(|&z| elements::symbol(z).unwrap_or("X"))
                .collect::<String>(),
            atomic_numbers: s.atomic_numbers.clone(),
            positions: s.positions.iter().map(|p| p - origin).collect(),
            anchor: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.atomic_numbers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atomic_numbers.is_empty()
    }
}

/// Rotation taking +z onto `normal`.
fn align_z(normal: &Vec3) -> Matrix3<f64> {
    let z = Vec3::z();
    let n = normal.normalize();
    match Rotation3::rotation_between(&z, &n) {
        Some(r) => *r.matrix(),
        // antiparallel: half turn about x
        None => Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0),
    }
}

/// Slab plus the adsorbate, anchor at `site.position + height·normal`.
pub fn place_adsorbate(
    slab: &Structure,
    site: &AdsorptionSite,
    template: &AdsorbateTemplate,
    height: f64,
) -> Result<Structure> {
    if template.is_empty() || template.anchor >= template.len() || template.positions.len() != template.len() {
        return Err(Error::InvalidArgument("malformed adsorbate template".into()));
    }
    let rot = align_z(&site.normal);
    let anchor_pos = site.position + site.normal.normalize() * height;
    let origin = template.positions[template.anchor];
    let mut out = slab.clone();
    for (z, p) in template.atomic_numbers.iter().zip(&template.positions) {
        out.atomic_numbers.push(*z);
        out.positions
            .push(wrap_position(&(anchor_pos + rot * (p - origin)), &slab.lattice));
        out.fixed.push(false);
        out.adsorbate.push(true);
    }
    out.validate()?;
    Ok(out)
}
