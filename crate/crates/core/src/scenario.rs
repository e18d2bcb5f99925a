//! Scenario configuration: JSON parsing with field-path diagnostics, and
//! assembly of per-trial contexts (geometry, users, tables, floors).
//!
//! Keys carry unit suffixes; powers arrive in milliwatts or dBm and are
//! converted to SI watts once, here.

use serde::Serialize;
use serde_json::Value;

use crate::channel::{compute_gain_tables, GainTables};
use crate::error::{Error, Result};
use crate::geometry::{
    build_array, fraunhofer_array_distance, sample_users, ArrayGeometry, Position3D, Role,
    SampledUser, VisibilityRegion,
};
use crate::metrics::{compute_thresholds, EhModelParams, PowerModelParams, QosThresholds};
use crate::pa_solver::AdmmConfig;

/// A schema problem: which key, and what is wrong with it.
#[derive(Debug, Clone)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config field `{}`: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct GeometryConfig {
    pub subarrays: usize,
    pub nx: usize,
    pub ny: usize,
    pub lambda_m: f64,
    pub element_dim_m: f64,
    pub pitch_m: f64,
    pub gap_m: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct PatternConfig {
    pub boresight_exponent: f64,
}

/// Radial bounds either in absolute meters or as fractions of the
/// Fraunhofer array distance, so one config can sweep the subarray count.
#[derive(Debug, Clone, Serialize, PartialEq)]
#[serde(untagged)]
pub enum RadialSpec {
    Fraction { r_min_dfa_frac: f64, r_max_dfa_frac: f64 },
    Meters { r_min_m: f64, r_max_m: f64 },
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RegionConfig {
    pub kind: Role,
    pub center_m: [f64; 3],
    #[serde(flatten)]
    pub radial: RadialSpec,
    pub azimuth_rad: [f64; 2],
    pub polar_rad: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subarray_mask: Option<Vec<bool>>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct UsersConfig {
    pub id_count: usize,
    pub eh_count: usize,
    pub seed: u64,
    pub regions: Vec<RegionConfig>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct PowerConfig {
    pub amplifier_efficiency: f64,
    pub p_syn_mw: f64,
    pub p_ct_mw: f64,
    pub p_et_mw: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct EhConfig {
    pub zeta_max_mw: f64,
    pub a_per_w: f64,
    pub b_w: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct NoiseConfig {
    pub sigma_dbm: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SolverConfig {
    pub tau: f64,
    pub epsilon_w: f64,
    pub delta_w: f64,
    pub max_iterations: usize,
    pub inner_steps: usize,
}

/// Optional explicit floors replacing the equal-allocation-derived ones.
#[derive(Debug, Clone, Serialize, PartialEq, Default)]
pub struct ThresholdOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_bps_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eh_harvest_mw: Option<f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ScenarioConfig {
    pub geometry: GeometryConfig,
    pub pattern: PatternConfig,
    pub users: UsersConfig,
    pub power: PowerConfig,
    pub eh: EhConfig,
    pub noise: NoiseConfig,
    pub solver: SolverConfig,
    pub thresholds: ThresholdOverrides,
    pub trials: usize,
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

fn get<'v>(v: &'v Value, path: &str, key: &str) -> std::result::Result<&'v Value, ConfigError> {
    v.get(key).ok_or_else(|| ConfigError {
        path: join(path, key),
        message: "missing required field".into(),
    })
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn req_f64(v: &Value, path: &str, key: &str) -> std::result::Result<f64, ConfigError> {
    get(v, path, key)?.as_f64().ok_or_else(|| ConfigError {
        path: join(path, key),
        message: "expected a number".into(),
    })
}

fn req_usize(v: &Value, path: &str, key: &str) -> std::result::Result<usize, ConfigError> {
    let n = get(v, path, key)?;
    n.as_u64().map(|x| x as usize).ok_or_else(|| ConfigError {
        path: join(path, key),
        message: "expected a nonnegative integer".into(),
    })
}

fn opt_f64(v: &Value, path: &str, key: &str) -> std::result::Result<Option<f64>, ConfigError> {
    match v.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(x) => x
            .as_f64()
            .map(Some)
            .ok_or_else(|| ConfigError {
                path: join(path, key),
                message: "expected a number".into(),
            }),
    }
}

impl ScenarioConfig {
    pub fn parse_json(text: &str) -> std::result::Result<Self, ConfigError> {
        let root: Value = serde_json::from_str(text).map_err(|e| ConfigError {
            path: String::new(),
            message: format!("not valid JSON: {e}"),
        })?;
        Self::from_value(&root)
    }

    pub fn from_value(root: &Value) -> std::result::Result<Self, ConfigError> {
        let g = get(root, "", "geometry")?;
        let lambda_m = req_f64(g, "geometry", "lambda_m")?;
        let geometry = GeometryConfig {
            subarrays: req_usize(g, "geometry", "subarrays")?,
            nx: req_usize(g, "geometry", "nx")?,
            ny: req_usize(g, "geometry", "ny")?,
            lambda_m,
            element_dim_m: req_f64(g, "geometry", "element_dim_m")?,
            pitch_m: opt_f64(g, "geometry", "pitch_m")?.unwrap_or(lambda_m / 2.0),
            gap_m: opt_f64(g, "geometry", "gap_m")?.unwrap_or(0.0),
        };

        let pattern = PatternConfig {
            boresight_exponent: match root.get("pattern") {
                Some(p) => opt_f64(p, "pattern", "boresight_exponent")?.unwrap_or(2.0),
                None => 2.0,
            },
        };

        let u = get(root, "", "users")?;
        let regions_value = get(u, "users", "regions")?
            .as_array()
            .ok_or_else(|| ConfigError {
                path: "users.regions".into(),
                message: "expected an array".into(),
            })?;
        let mut regions = Vec::with_capacity(regions_value.len());
        for (i, rv) in regions_value.iter().enumerate() {
            let path = format!("users.regions[{i}]");
            let kind = match get(rv, &path, "kind")?.as_str() {
                Some("id") => Role::Id,
                Some("eh") => Role::Eh,
                _ => {
                    return Err(ConfigError {
                        path: join(&path, "kind"),
                        message: "expected \"id\" or \"eh\"".into(),
                    })
                }
            };
            let center = get(rv, &path, "center_m")?
                .as_array()
                .filter(|a| a.len() == 3)
                .and_then(|a| {
                    let xs: Option<Vec<f64>> = a.iter().map(|x| x.as_f64()).collect();
                    xs
                })
                .ok_or_else(|| ConfigError {
                    path: join(&path, "center_m"),
                    message: "expected [x, y, z] in meters".into(),
                })?;
            let radial = match (
                opt_f64(rv, &path, "r_min_dfa_frac")?,
                opt_f64(rv, &path, "r_max_dfa_frac")?,
                opt_f64(rv, &path, "r_min_m")?,
                opt_f64(rv, &path, "r_max_m")?,
            ) {
                (Some(lo), Some(hi), None, None) => RadialSpec::Fraction {
                    r_min_dfa_frac: lo,
                    r_max_dfa_frac: hi,
                },
                (None, None, Some(lo), Some(hi)) => RadialSpec::Meters {
                    r_min_m: lo,
                    r_max_m: hi,
                },
                _ => {
                    return Err(ConfigError {
                        path: path.clone(),
                        message: "expected either r_min_m/r_max_m or r_min_dfa_frac/r_max_dfa_frac"
                            .into(),
                    })
                }
            };
            let angles = |key: &str| -> std::result::Result<[f64; 2], ConfigError> {
                get(rv, &path, key)?
                    .as_array()
                    .filter(|a| a.len() == 2)
                    .and_then(|a| {
                        let lo = a[0].as_f64()?;
                        let hi = a[1].as_f64()?;
                        Some([lo, hi])
                    })
                    .ok_or_else(|| ConfigError {
                        path: join(&path, key),
                        message: "expected [min, max] in radians".into(),
                    })
            };
            let subarray_mask = match rv.get("subarray_mask") {
                None | Some(Value::Null) => None,
                Some(Value::Array(a)) => {
                    let mask: Option<Vec<bool>> = a.iter().map(|b| b.as_bool()).collect();
                    Some(mask.ok_or_else(|| ConfigError {
                        path: join(&path, "subarray_mask"),
                        message: "expected an array of booleans".into(),
                    })?)
                }
                Some(_) => {
                    return Err(ConfigError {
                        path: join(&path, "subarray_mask"),
                        message: "expected an array of booleans".into(),
                    })
                }
            };
            regions.push(RegionConfig {
                kind,
                center_m: [center[0], center[1], center[2]],
                radial,
                azimuth_rad: angles("azimuth_rad")?,
                polar_rad: angles("polar_rad")?,
                subarray_mask,
            });
        }
        let users = UsersConfig {
            id_count: req_usize(u, "users", "id_count")?,
            eh_count: req_usize(u, "users", "eh_count")?,
            seed: req_usize(u, "users", "seed")? as u64,
            regions,
        };
        if users.id_count + users.eh_count == 0 {
            return Err(ConfigError {
                path: "users".into(),
                message: "at least one user is required".into(),
            });
        }

        let p = get(root, "", "power")?;
        let power = PowerConfig {
            amplifier_efficiency: req_f64(p, "power", "amplifier_efficiency")?,
            p_syn_mw: req_f64(p, "power", "p_syn_mw")?,
            p_ct_mw: req_f64(p, "power", "p_ct_mw")?,
            p_et_mw: req_f64(p, "power", "p_et_mw")?,
        };

        let e = get(root, "", "eh")?;
        let eh = EhConfig {
            zeta_max_mw: req_f64(e, "eh", "zeta_max_mw")?,
            a_per_w: req_f64(e, "eh", "a_per_w")?,
            b_w: req_f64(e, "eh", "b_w")?,
        };

        let n = get(root, "", "noise")?;
        let noise = NoiseConfig {
            sigma_dbm: req_f64(n, "noise", "sigma_dbm")?,
        };

        let solver = match root.get("solver") {
            Some(s) => SolverConfig {
                tau: opt_f64(s, "solver", "tau")?.unwrap_or(1.0),
                epsilon_w: opt_f64(s, "solver", "epsilon_w")?.unwrap_or(1e-7),
                delta_w: opt_f64(s, "solver", "delta_w")?.unwrap_or(1e-7),
                max_iterations: s
                    .get("max_iterations")
                    .map(|v| {
                        v.as_u64().map(|x| x as usize).ok_or_else(|| ConfigError {
                            path: "solver.max_iterations".into(),
                            message: "expected a nonnegative integer".into(),
                        })
                    })
                    .transpose()?
                    .unwrap_or(5000),
                inner_steps: s
                    .get("inner_steps")
                    .map(|v| {
                        v.as_u64().map(|x| x as usize).ok_or_else(|| ConfigError {
                            path: "solver.inner_steps".into(),
                            message: "expected a nonnegative integer".into(),
                        })
                    })
                    .transpose()?
                    .unwrap_or(25),
            },
            None => SolverConfig {
                tau: 1.0,
                epsilon_w: 1e-7,
                delta_w: 1e-7,
                max_iterations: 5000,
                inner_steps: 25,
            },
        };

        let thresholds = match root.get("thresholds") {
            Some(t) => ThresholdOverrides {
                rate_bps_hz: opt_f64(t, "thresholds", "rate_bps_hz")?,
                eh_harvest_mw: opt_f64(t, "thresholds", "eh_harvest_mw")?,
            },
            None => ThresholdOverrides::default(),
        };

        let trials = match root.get("trials") {
            None => 1,
            Some(v) => v.as_u64().map(|x| x as usize).ok_or_else(|| ConfigError {
                path: "trials".into(),
                message: "expected a nonnegative integer".into(),
            })?,
        };
        if trials == 0 {
            return Err(ConfigError {
                path: "trials".into(),
                message: "must be >= 1".into(),
            });
        }

        Ok(Self {
            geometry,
            pattern,
            users,
            power,
            eh,
            noise,
            solver,
            thresholds,
            trials,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Desk-scale default: 16x4-element subarrays, two information regions
    /// flanking boresight, one harvesting region near the array center.
    pub fn example_desk(subarrays: usize) -> Self {
        Self::example(subarrays, 16, 4)
    }

    /// Full-scale default with 32x8-element subarrays.
    pub fn example_full(subarrays: usize) -> Self {
        Self::example(subarrays, 32, 8)
    }

    fn example(subarrays: usize, nx: usize, ny: usize) -> Self {
        let id_radial = RadialSpec::Fraction {
            r_min_dfa_frac: 0.035,
            r_max_dfa_frac: 0.095,
        };
        let eh_radial = RadialSpec::Fraction {
            r_min_dfa_frac: 0.006,
            r_max_dfa_frac: 0.0098,
        };
        ScenarioConfig {
            geometry: GeometryConfig {
                subarrays,
                nx,
                ny,
                lambda_m: 0.1,
                element_dim_m: 0.025,
                pitch_m: 0.05,
                gap_m: 0.0,
            },
            pattern: PatternConfig {
                boresight_exponent: 2.0,
            },
            users: UsersConfig {
                id_count: 3,
                eh_count: 2,
                seed: 1,
                regions: vec![
                    RegionConfig {
                        kind: Role::Id,
                        center_m: [0.0, 0.0, 0.0],
                        radial: id_radial.clone(),
                        azimuth_rad: [2.79, 3.49],
                        polar_rad: [0.45, 1.05],
                        subarray_mask: None,
                    },
                    RegionConfig {
                        kind: Role::Id,
                        center_m: [0.0, 0.0, 0.0],
                        radial: id_radial,
                        azimuth_rad: [-0.35, 0.35],
                        polar_rad: [0.45, 1.05],
                        subarray_mask: None,
                    },
                    RegionConfig {
                        kind: Role::Eh,
                        center_m: [0.0, 0.0, 0.0],
                        radial: eh_radial,
                        azimuth_rad: [0.0, std::f64::consts::TAU],
                        polar_rad: [0.0, 0.96],
                        subarray_mask: None,
                    },
                ],
            },
            power: PowerConfig {
                amplifier_efficiency: 0.35,
                p_syn_mw: 50.0,
                p_ct_mw: 48.2,
                p_et_mw: 30.0,
            },
            eh: EhConfig {
                zeta_max_mw: 24.0,
                a_per_w: 1500.0,
                b_w: 0.0022,
            },
            noise: NoiseConfig { sigma_dbm: -80.0 },
            solver: SolverConfig {
                tau: 1.0,
                epsilon_w: 1e-7,
                delta_w: 1e-7,
                max_iterations: 5000,
                inner_steps: 25,
            },
            thresholds: ThresholdOverrides::default(),
            trials: 1,
        }
    }

    /// Resolve one region spec into meters for a concrete geometry.
    fn resolve_region(&self, region: &RegionConfig, geom: &ArrayGeometry) -> VisibilityRegion {
        let dfa = fraunhofer_array_distance(geom);
        let radial_bounds = match &region.radial {
            RadialSpec::Meters { r_min_m, r_max_m } => [*r_min_m, *r_max_m],
            RadialSpec::Fraction {
                r_min_dfa_frac,
                r_max_dfa_frac,
            } => [r_min_dfa_frac * dfa, r_max_dfa_frac * dfa],
        };
        VisibilityRegion {
            kind: region.kind,
            center: Position3D::new(region.center_m[0], region.center_m[1], region.center_m[2]),
            radial_bounds,
            azimuth_bounds: region.azimuth_rad,
            polar_bounds: region.polar_rad,
            subarray_mask: region.subarray_mask.clone(),
        }
    }

    /// Assemble everything one trial needs. The trial seed is the base seed
    /// plus the trial index, so trials differ only in user placement.
    pub fn build_trial(&self, trial_index: usize) -> Result<TrialContext> {
        let g = &self.geometry;
        let geometry = build_array(
            g.subarrays,
            g.nx,
            g.ny,
            g.lambda_m,
            g.element_dim_m,
            g.pitch_m,
            g.gap_m,
        )?;
        let regions: Vec<VisibilityRegion> = self
            .users
            .regions
            .iter()
            .map(|r| self.resolve_region(r, &geometry))
            .collect();
        let seed = self.users.seed.wrapping_add(trial_index as u64);
        let users = sample_users(
            &geometry,
            &regions,
            (self.users.id_count, self.users.eh_count),
            seed,
        )?;

        let visibility: Vec<Vec<bool>> = users
            .iter()
            .map(|u| {
                regions[u.region_index]
                    .subarray_mask
                    .clone()
                    .unwrap_or_else(|| vec![true; geometry.subarray_count])
            })
            .collect();
        let positions: Vec<Position3D> = users.iter().map(|u| u.position).collect();
        let noise = vec![dbm_to_watts(self.noise.sigma_dbm); self.users.id_count];
        let tables = compute_gain_tables(
            &geometry,
            &positions,
            self.users.id_count,
            Some(&visibility),
            self.pattern.boresight_exponent,
            &noise,
        )?;

        let power = PowerModelParams::new(
            self.power.amplifier_efficiency,
            self.power.p_syn_mw * 1e-3,
            self.power.p_ct_mw * 1e-3,
            self.power.p_et_mw * 1e-3,
            geometry.elements_per_subarray(),
            geometry.subarray_count,
        )
        .map_err(|e| Error::InvalidScenario(e.to_string()))?;
        let eh = EhModelParams::new(
            self.eh.zeta_max_mw * 1e-3,
            self.eh.a_per_w,
            self.eh.b_w,
        )
        .map_err(|e| Error::InvalidScenario(e.to_string()))?;

        let derived = compute_thresholds(&tables, &power, &eh)?;
        let thresholds = QosThresholds {
            rate_floor: match self.thresholds.rate_bps_hz {
                Some(r) => vec![r; self.users.id_count],
                None => derived.rate_floor,
            },
            energy_floor: match self.thresholds.eh_harvest_mw {
                Some(mw) => {
                    let w = mw * 1e-3;
                    if w >= eh.zeta_max {
                        return Err(Error::InfeasibleThreshold(format!(
                            "explicit harvest floor {mw} mW is at or above the saturation level {} mW",
                            eh.zeta_max * 1e3
                        )));
                    }
                    vec![w; self.users.eh_count]
                }
                None => derived.energy_floor,
            },
        };

        let admm = AdmmConfig {
            tau: self.solver.tau,
            epsilon: self.solver.epsilon_w,
            max_iterations: self.solver.max_iterations,
            inner_steps: self.solver.inner_steps,
            ..AdmmConfig::default()
        };

        Ok(TrialContext {
            config: self.clone(),
            trial_index,
            seed,
            geometry,
            users,
            tables,
            power,
            eh,
            thresholds,
            admm,
            outer_tolerance: self.solver.delta_w,
            collect_traces: false,
        })
    }
}

/// Everything the comparison methods need for one seeded trial.
pub struct TrialContext {
    pub config: ScenarioConfig,
    pub trial_index: usize,
    pub seed: u64,
    pub geometry: ArrayGeometry,
    pub users: Vec<SampledUser>,
    pub tables: GainTables,
    pub power: PowerModelParams,
    pub eh: EhModelParams,
    pub thresholds: QosThresholds,
    pub admm: AdmmConfig,
    /// Outer-loop convergence tolerance on the consumed power, watts.
    pub outer_tolerance: f64,
    /// Keep per-solve iteration traces in the reports.
    pub collect_traces: bool,
}
