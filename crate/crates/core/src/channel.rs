//! Free-space near-field channels, matched-filter precoders, and the scalar
//! coupling tables consumed by the metric and solver layers.
//!
//! The channel from subarray `s` to user `k` has one amplitude per subarray
//! (evaluated at the subarray center, including the element radiation
//! pattern) and one phase per element (exact element-to-user path length).

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, Position3D};

/// Complex gains from one subarray's elements to one user.
///
/// All coefficients share a single magnitude; phases differ per element. A
/// user outside the pattern support (or masked out) gets an all-zero vector.
#[derive(Debug, Clone)]
pub struct ChannelVector {
    pub coefficients: Vec<Complex64>,
    pub subarray_index: usize,
    pub user_index: usize,
}

impl ChannelVector {
    pub fn norm(&self) -> f64 {
        self.coefficients
            .iter()
            .map(|c| c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }
}

/// Element radiation pattern: `2 (b+1) cos^b(theta)` inside [0, pi/2], zero
/// behind the array plane.
pub fn radiation_pattern(theta: f64, boresight_exponent: f64) -> f64 {
    if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&theta) {
        return 0.0;
    }
    2.0 * (boresight_exponent + 1.0) * theta.cos().powf(boresight_exponent)
}

/// Spherical-wavefront channel from subarray `s` to a user position.
///
/// Amplitude uses the subarray-center distance and pattern angle; each
/// element contributes `exp(-j 2 pi d_e / lambda)` with its exact distance.
pub fn near_field_channel(
    geom: &ArrayGeometry,
    subarray: usize,
    user_index: usize,
    user: &Position3D,
    boresight_exponent: f64,
) -> Result<ChannelVector> {
    let center = &geom.subarray_centers[subarray];
    let r = user.distance(center);
    let elements = &geom.element_positions[subarray];

    // Angle between the array normal (+z) and the center-to-user direction.
    let theta = if r > 0.0 {
        ((user.z - center.z) / r).clamp(-1.0, 1.0).acos()
    } else {
        std::f64::consts::FRAC_PI_2
    };
    let pattern = radiation_pattern(theta, boresight_exponent);
    if pattern <= 0.0 || r == 0.0 {
        return Ok(ChannelVector {
            coefficients: vec![Complex64::new(0.0, 0.0); elements.len()],
            subarray_index: subarray,
            user_index,
        });
    }

    let amplitude = geom.wavelength / (4.0 * std::f64::consts::PI * r) * pattern.sqrt();
    let wavenumber = std::f64::consts::TAU / geom.wavelength;
    let mut coefficients = Vec::with_capacity(elements.len());
    for elem in elements {
        let d = user.distance(elem);
        if d < 1e-12 {
            return Err(Error::DegenerateDistance {
                subarray,
                user: user_index,
            });
        }
        coefficients.push(Complex64::from_polar(amplitude, -wavenumber * d));
    }
    Ok(ChannelVector {
        coefficients,
        subarray_index: subarray,
        user_index,
    })
}

/// Matched-filter precoder: the channel normalized to unit 2-norm.
pub fn mrt_precoder(channel: &ChannelVector) -> Result<Vec<Complex64>> {
    let norm = channel.norm();
    if norm <= 0.0 {
        return Err(Error::ZeroChannel {
            subarray: channel.subarray_index,
            user: channel.user_index,
        });
    }
    Ok(channel.coefficients.iter().map(|c| c / norm).collect())
}

/// Precomputed scalar couplings between every (subarray, receiver, beam)
/// triple.
///
/// `direct[s][k][j] = |g_{s,k}^T w*_{s,j}|^2` is the power gain at receiver
/// `k` of the beam toward user `j` from subarray `s` alone. `cross` holds the
/// pairwise subarray products `t_s conj(t_s')` of the beam amplitudes
/// `t_s = g_{s,m}^T w*_{s,j}` at harvesting receiver `m`; summing it against
/// real weights reproduces the coherent magnitude-square across subarrays,
/// with imaginary parts cancelling pairwise.
#[derive(Debug, Clone)]
pub struct GainTables {
    pub subarrays: usize,
    pub id_users: usize,
    pub eh_users: usize,
    /// Row-major `[s][receiver][beam]`, dimensions S x K x K.
    pub direct: Vec<f64>,
    /// Row-major `[s][s'][eh receiver][beam]`, dimensions S x S x M x K.
    pub cross: Vec<Complex64>,
    /// Noise power per information user, watts.
    pub noise_power: Vec<f64>,
}

impl GainTables {
    pub fn users(&self) -> usize {
        self.id_users + self.eh_users
    }

    #[inline]
    pub fn direct_gain(&self, s: usize, receiver: usize, beam: usize) -> f64 {
        let k = self.users();
        self.direct[(s * k + receiver) * k + beam]
    }

    #[inline]
    pub fn cross_gain(&self, s: usize, s2: usize, eh_receiver: usize, beam: usize) -> Complex64 {
        let k = self.users();
        let m = self.eh_users;
        self.cross[((s * self.subarrays + s2) * m + eh_receiver) * k + beam]
    }

    /// Plain-text dump of the direct table (and the real part of the cross
    /// table), row-major with a dimension header. Debug aid only.
    pub fn write_text<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        let k = self.users();
        writeln!(
            out,
            "gains S={} K={} (ID={} EH={})",
            self.subarrays, k, self.id_users, self.eh_users
        )?;
        writeln!(out, "direct [s receiver beam value]")?;
        for s in 0..self.subarrays {
            for rx in 0..k {
                for beam in 0..k {
                    writeln!(out, "{s} {rx} {beam} {}", self.direct_gain(s, rx, beam))?;
                }
            }
        }
        writeln!(out, "cross [s s' eh_receiver beam re im]")?;
        for s in 0..self.subarrays {
            for s2 in 0..self.subarrays {
                for m in 0..self.eh_users {
                    for beam in 0..k {
                        let v = self.cross_gain(s, s2, m, beam);
                        writeln!(out, "{s} {s2} {m} {beam} {} {}", v.re, v.im)?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Assemble the coupling tables for a fixed set of user positions.
///
/// The first `id_users` positions are information users, the rest harvest.
/// `visibility[k][s] = false` forces a zero channel for the pair, on top of
/// the pattern support. Complexity is O(S^2 K^2 Ns).
pub fn compute_gain_tables(
    geom: &ArrayGeometry,
    users: &[Position3D],
    id_users: usize,
    visibility: Option<&[Vec<bool>]>,
    boresight_exponent: f64,
    noise_power: &[f64],
) -> Result<GainTables> {
    let s_count = geom.subarray_count;
    let k = users.len();
    let m = k - id_users;
    assert_eq!(noise_power.len(), id_users, "one noise power per information user");

    // Per-pair channels, zeroed where invisible.
    let mut channels: Vec<Vec<ChannelVector>> = Vec::with_capacity(s_count);
    for s in 0..s_count {
        let mut row = Vec::with_capacity(k);
        for (u, pos) in users.iter().enumerate() {
            let visible = visibility.map(|v| v[u][s]).unwrap_or(true);
            let ch = if visible {
                near_field_channel(geom, s, u, pos, boresight_exponent)?
            } else {
                ChannelVector {
                    coefficients: vec![Complex64::new(0.0, 0.0); geom.elements_per_subarray()],
                    subarray_index: s,
                    user_index: u,
                }
            };
            row.push(ch);
        }
        channels.push(row);
    }

    // Beam amplitudes t[s][receiver][beam] = g_{s,rx}^T w*_{s,beam}; zero
    // when either side of the pair is invisible.
    let mut amps = vec![Complex64::new(0.0, 0.0); s_count * k * k];
    for s in 0..s_count {
        for beam in 0..k {
            if channels[s][beam].is_zero() {
                continue;
            }
            let w = mrt_precoder(&channels[s][beam])?;
            for rx in 0..k {
                let g = &channels[s][rx];
                if g.is_zero() {
                    continue;
                }
                let mut acc = Complex64::new(0.0, 0.0);
                for (ge, we) in g.coefficients.iter().zip(&w) {
                    acc += ge * we.conj();
                }
                amps[(s * k + rx) * k + beam] = acc;
            }
        }
    }

    let mut direct = vec![0.0; s_count * k * k];
    for (d, a) in direct.iter_mut().zip(&amps) {
        *d = a.norm_sqr();
    }

    let mut cross = vec![Complex64::new(0.0, 0.0); s_count * s_count * m * k];
    for s in 0..s_count {
        for s2 in 0..s_count {
            for eh in 0..m {
                let rx = id_users + eh;
                for beam in 0..k {
                    let a = amps[(s * k + rx) * k + beam];
                    let b = amps[(s2 * k + rx) * k + beam];
                    cross[((s * s_count + s2) * m + eh) * k + beam] = a * b.conj();
                }
            }
        }
    }

    Ok(GainTables {
        subarrays: s_count,
        id_users,
        eh_users: m,
        direct,
        cross,
        noise_power: noise_power.to_vec(),
    })
}
