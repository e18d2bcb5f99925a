//! Modular planar-array layout and user placement.
//!
//! The transmit array is a row of `S` uniform planar subarrays in the z = 0
//! plane, each an `Nx` x `Ny` element grid, with users sampled inside
//! near-field visibility regions in front of the array (z > 0).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in meters. The array lies in the z = 0 plane; users have z > 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position3D {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Position3D) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

/// Whether a user decodes information or harvests energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Id,
    Eh,
}

/// Layout of the full modular array.
///
/// Subarrays are tiled side by side along the x-axis, each an `Nx` x `Ny`
/// grid at `element_pitch` spacing, with consecutive subarrays separated by
/// `subarray_gap` (edge pitch plus the gap between center grids). The whole
/// array is centered on the origin.
#[derive(Debug, Clone)]
pub struct ArrayGeometry {
    pub subarray_count: usize,
    pub nx: usize,
    pub ny: usize,
    pub wavelength: f64,
    pub element_dimension: f64,
    pub element_pitch: f64,
    pub subarray_gap: f64,
    /// `subarray_count` outer entries, each with `nx * ny` element positions.
    pub element_positions: Vec<Vec<Position3D>>,
    /// Arithmetic mean of each subarray's element positions.
    pub subarray_centers: Vec<Position3D>,
}

impl ArrayGeometry {
    /// Elements per subarray.
    pub fn elements_per_subarray(&self) -> usize {
        self.nx * self.ny
    }

    /// Total element count across all subarrays.
    pub fn total_elements(&self) -> usize {
        self.subarray_count * self.elements_per_subarray()
    }
}

/// Build the array layout.
pub fn build_array(
    subarrays: usize,
    nx: usize,
    ny: usize,
    wavelength: f64,
    element_dimension: f64,
    pitch: f64,
    gap: f64,
) -> Result<ArrayGeometry> {
    if subarrays == 0 || nx == 0 || ny == 0 {
        return Err(Error::InvalidGeometry(format!(
            "counts must be >= 1 (S={subarrays}, Nx={nx}, Ny={ny})"
        )));
    }
    if !(wavelength > 0.0) || !(pitch > 0.0) {
        return Err(Error::InvalidGeometry(format!(
            "wavelength and pitch must be positive (lambda={wavelength}, pitch={pitch})"
        )));
    }
    if element_dimension < 0.0 || element_dimension > pitch {
        return Err(Error::InvalidGeometry(format!(
            "element dimension must satisfy 0 <= D <= pitch (D={element_dimension}, pitch={pitch})"
        )));
    }
    if gap < 0.0 {
        return Err(Error::InvalidGeometry(format!("gap must be >= 0 (gap={gap})")));
    }

    // Center-to-center distance between consecutive subarrays.
    let stride = nx as f64 * pitch + gap;
    let s_mid = (subarrays as f64 - 1.0) / 2.0;
    let x_mid = (nx as f64 - 1.0) / 2.0;
    let y_mid = (ny as f64 - 1.0) / 2.0;

    let mut element_positions = Vec::with_capacity(subarrays);
    let mut subarray_centers = Vec::with_capacity(subarrays);
    for s in 0..subarrays {
        let cx = (s as f64 - s_mid) * stride;
        let mut elems = Vec::with_capacity(nx * ny);
        for ix in 0..nx {
            for iy in 0..ny {
                elems.push(Position3D::new(
                    cx + (ix as f64 - x_mid) * pitch,
                    (iy as f64 - y_mid) * pitch,
                    0.0,
                ));
            }
        }
        let n = elems.len() as f64;
        let mean = elems.iter().fold([0.0f64; 3], |acc, p| {
            [acc[0] + p.x / n, acc[1] + p.y / n, acc[2] + p.z / n]
        });
        subarray_centers.push(Position3D::new(mean[0], mean[1], mean[2]));
        element_positions.push(elems);
    }

    Ok(ArrayGeometry {
        subarray_count: subarrays,
        nx,
        ny,
        wavelength,
        element_dimension,
        element_pitch: pitch,
        subarray_gap: gap,
        element_positions,
        subarray_centers,
    })
}

/// Near/far-field boundary scale of the aggregate array: `2 D^2 (S Ns) / lambda`.
pub fn fraunhofer_array_distance(geom: &ArrayGeometry) -> f64 {
    2.0 * geom.element_dimension * geom.element_dimension * geom.total_elements() as f64
        / geom.wavelength
}

/// Fraction of the Fraunhofer array distance a role's users must stay within.
pub fn role_range_cap(geom: &ArrayGeometry, role: Role) -> f64 {
    let dfa = fraunhofer_array_distance(geom);
    match role {
        Role::Id => dfa / 10.0,
        Role::Eh => dfa / 100.0,
    }
}

/// A spherical-shell sector in front of the array from which users of one
/// role are drawn uniformly by volume.
///
/// `polar` is measured from the array normal (+z); both angle intervals are
/// in radians. An optional per-subarray mask marks subarrays that cannot see
/// users of this region regardless of the radiation pattern.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VisibilityRegion {
    pub kind: Role,
    pub center: Position3D,
    /// [r_min, r_max] in meters, 0 < r_min < r_max.
    pub radial_bounds: [f64; 2],
    /// Azimuth interval [min, max] around +z, measured from +x, radians.
    pub azimuth_bounds: [f64; 2],
    /// Polar interval [min, max] from the +z boresight, within [0, pi/2).
    pub polar_bounds: [f64; 2],
    pub subarray_mask: Option<Vec<bool>>,
}

impl VisibilityRegion {
    fn validate(&self, geom: &ArrayGeometry, index: usize) -> Result<()> {
        let [r_min, r_max] = self.radial_bounds;
        if !(r_min > 0.0 && r_min < r_max) {
            return Err(Error::InvalidScenario(format!(
                "region {index}: radial bounds must satisfy 0 < r_min < r_max (got [{r_min}, {r_max}])"
            )));
        }
        let [p0, p1] = self.polar_bounds;
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&p0) || p1 < p0 || p1 >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::InvalidScenario(format!(
                "region {index}: polar bounds must lie in [0, pi/2) with min <= max (got [{p0}, {p1}])"
            )));
        }
        if self.azimuth_bounds[1] < self.azimuth_bounds[0] {
            return Err(Error::InvalidScenario(format!(
                "region {index}: azimuth bounds out of order"
            )));
        }
        let cap = role_range_cap(geom, self.kind);
        let reach = self.center.norm() + r_max;
        if reach > cap * (1.0 + 1e-12) {
            return Err(Error::InvalidScenario(format!(
                "region {index}: {:?} region reaches {reach:.4} m from the array center, beyond the {cap:.4} m cap",
                self.kind
            )));
        }
        if let Some(mask) = &self.subarray_mask {
            if mask.len() != geom.subarray_count {
                return Err(Error::InvalidScenario(format!(
                    "region {index}: subarray mask length {} != subarray count {}",
                    mask.len(),
                    geom.subarray_count
                )));
            }
            if !mask.iter().any(|&b| b) {
                return Err(Error::InvalidScenario(format!(
                    "region {index}: subarray mask excludes every subarray"
                )));
            }
        }
        Ok(())
    }
}

/// One sampled user: position, role, and the region it was drawn from.
#[derive(Debug, Clone)]
pub struct SampledUser {
    pub position: Position3D,
    pub role: Role,
    pub region_index: usize,
}

/// Draw `counts.0` information users and `counts.1` harvesting users from
/// their regions, uniformly by volume, deterministically in the seed.
///
/// Users of each role are assigned to that role's regions round-robin.
/// Information users come first in the returned list.
pub fn sample_users(
    geom: &ArrayGeometry,
    regions: &[VisibilityRegion],
    counts: (usize, usize),
    rng_seed: u64,
) -> Result<Vec<SampledUser>> {
    for (i, region) in regions.iter().enumerate() {
        region.validate(geom, i)?;
    }
    let id_regions: Vec<usize> = regions
        .iter()
        .enumerate()
        .filter(|(_, r)| r.kind == Role::Id)
        .map(|(i, _)| i)
        .collect();
    let eh_regions: Vec<usize> = regions
        .iter()
        .enumerate()
        .filter(|(_, r)| r.kind == Role::Eh)
        .map(|(i, _)| i)
        .collect();
    let (n_id, n_eh) = counts;
    if n_id > 0 && id_regions.is_empty() {
        return Err(Error::InvalidScenario(
            "information users requested but no information region given".into(),
        ));
    }
    if n_eh > 0 && eh_regions.is_empty() {
        return Err(Error::InvalidScenario(
            "harvesting users requested but no harvesting region given".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut users = Vec::with_capacity(n_id + n_eh);
    for i in 0..n_id {
        let region_index = id_regions[i % id_regions.len()];
        users.push(draw_in_region(&regions[region_index], region_index, &mut rng));
    }
    for i in 0..n_eh {
        let region_index = eh_regions[i % eh_regions.len()];
        users.push(draw_in_region(&regions[region_index], region_index, &mut rng));
    }
    Ok(users)
}

fn draw_in_region(region: &VisibilityRegion, region_index: usize, rng: &mut ChaCha8Rng) -> SampledUser {
    let [r_min, r_max] = region.radial_bounds;
    let [az0, az1] = region.azimuth_bounds;
    let [p0, p1] = region.polar_bounds;

    // Uniform by volume in a spherical-shell sector: r^3 uniform, cos(polar)
    // uniform, azimuth uniform.
    let u_r: f64 = rng.random();
    let u_c: f64 = rng.random();
    let u_a: f64 = rng.random();
    let r = (r_min.powi(3) + u_r * (r_max.powi(3) - r_min.powi(3))).cbrt();
    let (c0, c1) = (p0.cos(), p1.cos());
    let cos_polar = c0 + u_c * (c1 - c0);
    let sin_polar = (1.0 - cos_polar * cos_polar).max(0.0).sqrt();
    let azimuth = az0 + u_a * (az1 - az0);

    let position = Position3D::new(
        region.center.x + r * sin_polar * azimuth.cos(),
        region.center.y + r * sin_polar * azimuth.sin(),
        region.center.z + r * cos_polar,
    );
    SampledUser {
        position,
        role: region.kind,
        region_index,
    }
}
