//! Static bracing analysis: the foot load while pressing a vertical wall, the
//! maximum joint torque it requires over a grid of foot positions, the
//! minimum-torque curve through that grid and a motor feasibility report.

use std::fmt::Write as _;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{ik_foot_branch, joint_torques, FootForce, KneeBranch, LegChain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BracingParams {
    pub robot_mass: f64,
    pub legs_sharing_load: u32,
    pub friction_mu: f64,
    pub gravity: f64,
}

impl Default for BracingParams {
    fn default() -> Self {
        Self {
            robot_mass: 20.0,
            legs_sharing_load: 4,
            friction_mu: 0.8,
            gravity: 9.81,
        }
    }
}

impl BracingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.robot_mass >= 0.0 && self.robot_mass.is_finite()) {
            return Err(Error::InvalidConfig("robot_mass must be non-negative".into()));
        }
        if !(1..=4).contains(&self.legs_sharing_load) {
            return Err(Error::InvalidConfig("legs_sharing_load must be in 1..=4".into()));
        }
        if !(self.friction_mu > 0.0) {
            return Err(Error::InvalidConfig("friction_mu must be positive".into()));
        }
        Ok(())
    }

    /// Gravity-opposing load carried by one foot.
    pub fn tangential_load(&self) -> f64 {
        self.robot_mass * self.gravity / f64::from(self.legs_sharing_load)
    }

    /// Smallest wall-normal load that keeps the tangential load inside the friction cone.
    pub fn normal_load(&self) -> f64 {
        self.tangential_load() / self.friction_mu
    }
}

/// Outward normal of a wall standing at `+x` in the leg-base frame.
pub fn default_wall_normal() -> Vector3<f64> {
    Vector3::new(-1.0, 0.0, 0.0)
}

/// Reaction force the wall exerts on a bracing foot.
///
/// `wall_normal` is the wall's outward normal (pointing from the wall toward
/// the robot). The reaction is the normal load along that normal plus the
/// upward friction load, so `-J^T f` gives the torques the joints must hold.
pub fn bracing_force(params: &BracingParams, wall_normal: Vector3<f64>) -> Result<FootForce> {
    let norm = wall_normal.norm();
    if (norm - 1.0).abs() > 1e-9 || wall_normal.z.abs() > 1e-9 {
        return Err(Error::DegenerateNormal { norm });
    }
    Ok(FootForce(
        wall_normal * params.normal_load() + Vector3::z() * params.tangential_load(),
    ))
}

/// Largest absolute joint torque needed to brace with the foot at `foot_pos`
/// (leg-base frame). The knee bends away from the wall.
pub fn max_required_torque(
    foot_pos: Vector3<f64>,
    chain: &LegChain,
    params: &BracingParams,
    wall_normal: Vector3<f64>,
) -> Result<f64> {
    let force = bracing_force(params, wall_normal)?;
    let branch = if wall_normal.x <= 0.0 {
        KneeBranch::Inward
    } else {
        KneeBranch::Outward
    };
    let angles = ik_foot_branch(chain, foot_pos, branch)?;
    Ok(joint_torques(chain, angles, force).max_abs())
}

/// Foot-position sweep relative to the hip. `x` is the horizontal hip-to-foot
/// distance (the wall distance when the foot touches the wall), `z` is
/// vertical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub z_min: f64,
    pub z_max: f64,
    pub nz: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            x_min: 0.2,
            x_max: 0.6,
            nx: 41,
            z_min: -0.45,
            z_max: 0.2,
            nz: 66,
        }
    }
}

impl GridSpec {
    fn axis(min: f64, max: f64, n: usize) -> Vec<f64> {
        let step = (max - min) / (n - 1) as f64;
        (0..n).map(|i| min + step * i as f64).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.x_max, self.z_min, self.z_max].iter().all(|v| v.is_finite());
        if !finite || self.nx < 2 || self.nz < 2 || !(self.x_max > self.x_min) || !(self.z_max > self.z_min) {
            return Err(Error::EmptyGrid);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TorqueMap {
    pub grid_x: Vec<f64>,
    pub grid_z: Vec<f64>,
    /// Indexed `[ix * nz + iz]`; unreachable nodes hold `+inf`.
    pub tau_max: Vec<f64>,
}

impl TorqueMap {
    pub fn new(grid_x: Vec<f64>, grid_z: Vec<f64>, tau_max: Vec<f64>) -> Self {
        assert_eq!(grid_x.len() * grid_z.len(), tau_max.len(), "torque map shape mismatch");
        Self { grid_x, grid_z, tau_max }
    }

    pub fn nx(&self) -> usize {
        self.grid_x.len()
    }

    pub fn nz(&self) -> usize {
        self.grid_z.len()
    }

    pub fn get(&self, ix: usize, iz: usize) -> f64 {
        self.tau_max[ix * self.nz() + iz]
    }

    /// Constant-wall-distance slice at column `ix`.
    pub fn slice(&self, ix: usize) -> &[f64] {
        let nz = self.nz();
        &self.tau_max[ix * nz..(ix + 1) * nz]
    }

    pub fn to_csv(&self, metadata: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# x [m], z [m] foot position relative to hip; tau_max [N m]; {metadata}");
        out.push_str("x,z,tau_max\n");
        for (ix, x) in self.grid_x.iter().enumerate() {
            for (iz, z) in self.grid_z.iter().enumerate() {
                let _ = writeln!(out, "{x:.6},{z:.6},{:.6}", self.get(ix, iz));
            }
        }
        out
    }
}

fn hip_position(chain: &LegChain) -> Vector3<f64> {
    let (s, c) = chain.collar_angle_fixed.sin_cos();
    Vector3::new(0.0, chain.collar_offset * c, chain.collar_offset * s)
}

/// Converts a hip-relative grid node into the leg-base frame.
pub fn grid_node_to_leg_frame(chain: &LegChain, x: f64, z: f64) -> Vector3<f64> {
    let (s, c) = chain.collar_angle_fixed.sin_cos();
    hip_position(chain) + Vector3::new(x, -z * s, z * c)
}

pub fn build_atlas(chain: &LegChain, params: &BracingParams, grid: &GridSpec) -> Result<TorqueMap> {
    build_atlas_facing(chain, params, grid, default_wall_normal())
}

/// Atlas against a wall with the given outward normal. Grid nodes are taken
/// as given, so a wall at `-x` pairs with a grid over negative `x`.
pub fn build_atlas_facing(
    chain: &LegChain,
    params: &BracingParams,
    grid: &GridSpec,
    wall_normal: Vector3<f64>,
) -> Result<TorqueMap> {
    grid.validate()?;
    chain.validate()?;
    params.validate()?;
    bracing_force(params, wall_normal)?;
    let grid_x = GridSpec::axis(grid.x_min, grid.x_max, grid.nx);
    let grid_z = GridSpec::axis(grid.z_min, grid.z_max, grid.nz);
    let tau_max: Vec<f64> = grid_x
        .par_iter()
        .flat_map_iter(|&x| {
            grid_z.iter().map(move |&z| {
                let p = grid_node_to_leg_frame(chain, x, z);
                max_required_torque(p, chain, params, wall_normal).unwrap_or(f64::INFINITY)
            })
        })
        .collect();
    Ok(TorqueMap::new(grid_x, grid_z, tau_max))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub x: f64,
    pub z: f64,
    pub tau: f64,
}

/// Minimum-torque foot position for every reachable wall-distance slice,
/// ordered by wall distance.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CurveC {
    pub points: Vec<CurvePoint>,
}

impl CurveC {
    pub fn min_tau(&self) -> f64 {
        self.points.iter().map(|p| p.tau).fold(f64::INFINITY, f64::min)
    }

    pub fn max_tau(&self) -> f64 {
        self.points.iter().map(|p| p.tau).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Points whose wall distance lies in `[lo, hi]` (with a small tolerance
    /// for grid rounding).
    pub fn within(&self, lo: f64, hi: f64) -> impl Iterator<Item = &CurvePoint> {
        self.points.iter().filter(move |p| p.x >= lo - 1e-9 && p.x <= hi + 1e-9)
    }

    pub fn to_csv(&self, metadata: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# x [m] wall distance, z [m], tau_max [N m]; {metadata}");
        out.push_str("x,z,tau_max\n");
        for p in &self.points {
            let _ = writeln!(out, "{:.6},{:.6},{:.6}", p.x, p.z, p.tau);
        }
        out
    }
}

pub fn extract_curve_c(map: &TorqueMap) -> Result<CurveC> {
    if map.nx() < 3 {
        return Err(Error::EmptyGrid);
    }
    let mut points = Vec::new();
    for (ix, &x) in map.grid_x.iter().enumerate() {
        let best = map
            .slice(ix)
            .iter()
            .zip(&map.grid_z)
            .filter(|(t, _)| t.is_finite())
            .min_by(|(ta, za), (tb, zb)| ta.total_cmp(tb).then(za.abs().total_cmp(&zb.abs())));
        if let Some((&tau, &z)) = best {
            points.push(CurvePoint { x, z, tau });
        }
    }
    if points.is_empty() {
        return Err(Error::NoMinimum { distance: map.grid_x[0] });
    }
    Ok(CurveC { points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotorLimits {
    pub leg_limit: f64,
    pub waist_limit: f64,
    /// Wall-distance band over which the curve is assessed.
    pub band: [f64; 2],
}

impl Default for MotorLimits {
    fn default() -> Self {
        Self {
            leg_limit: 25.0,
            waist_limit: 48.0,
            band: [0.3, 0.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotorReport {
    pub safety_factor: f64,
    /// Minimum of the curve-C torque inside the band.
    pub curve_torque: f64,
    /// Largest curve-C torque inside the band, reported alongside.
    pub worst_curve_torque: f64,
    pub required_leg: f64,
    pub required_waist: f64,
    pub leg_limit: f64,
    pub waist_limit: f64,
    pub leg_feasible: bool,
    pub waist_feasible: bool,
}

impl MotorReport {
    /// The waist carries both legs of a side, hence twice the leg requirement.
    pub fn from_curve_torque(curve_torque: f64, safety_factor: f64, limits: &MotorLimits) -> Self {
        let required_leg = curve_torque * safety_factor;
        let required_waist = 2.0 * required_leg;
        Self {
            safety_factor,
            curve_torque,
            worst_curve_torque: curve_torque,
            required_leg,
            required_waist,
            leg_limit: limits.leg_limit,
            waist_limit: limits.waist_limit,
            leg_feasible: required_leg <= limits.leg_limit,
            waist_feasible: required_waist <= limits.waist_limit,
        }
    }

    pub fn feasible(&self) -> bool {
        self.leg_feasible && self.waist_feasible
    }

    pub fn render(&self) -> String {
        let verdict = |ok: bool| if ok { "FEASIBLE" } else { "INFEASIBLE" };
        format!(
            "curve C torque (min in band): {:.3} N m\n\
             curve C torque (max in band): {:.3} N m\n\
             safety factor: {:.2}\n\
             leg: required {:.3} N m, available {:.3} N m -> {}\n\
             waist: required {:.3} N m, available {:.3} N m -> {}\n",
            self.curve_torque,
            self.worst_curve_torque,
            self.safety_factor,
            self.required_leg,
            self.leg_limit,
            verdict(self.leg_feasible),
            self.required_waist,
            self.waist_limit,
            verdict(self.waist_feasible),
        )
    }
}

pub fn assess_motor(map: &TorqueMap, safety_factor: f64, limits: &MotorLimits) -> Result<MotorReport> {
    if !(safety_factor >= 1.0) {
        return Err(Error::InvalidConfig("safety factor must be >= 1".into()));
    }
    let curve = extract_curve_c(map)?;
    let [lo, hi] = limits.band;
    let in_band: Vec<f64> = curve.within(lo, hi).map(|p| p.tau).collect();
    if in_band.is_empty() {
        return Err(Error::NoMinimum { distance: lo });
    }
    let min = in_band.iter().copied().fold(f64::INFINITY, f64::min);
    let max = in_band.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut report = MotorReport::from_curve_torque(min, safety_factor, limits);
    report.worst_curve_torque = max;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;

    #[test]
    fn default_bracing_force_components() {
        let f = bracing_force(&BracingParams::default(), default_wall_normal()).unwrap();
        assert_relative_eq!(f.0.z, 49.05, epsilon = 1e-12);
        assert_relative_eq!(-f.0.x, 61.3125, epsilon = 1e-12);
        assert_eq!(f.0.y, 0.0);
    }

    #[test]
    fn minimal_normal_sits_on_friction_cone_boundary() {
        // Independent check: the smallest N with T <= mu N, found by bisection.
        let p = BracingParams::default();
        let t = p.robot_mass * p.gravity / 4.0;
        let (mut lo, mut hi) = (0.0_f64, 1e4_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if t <= p.friction_mu * mid {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert_relative_eq!(p.normal_load(), hi, epsilon = 1e-9);
    }

    #[test]
    fn near_frictionless_limit_needs_no_normal_force() {
        let p = BracingParams {
            friction_mu: 1e6,
            ..BracingParams::default()
        };
        let f = bracing_force(&p, default_wall_normal()).unwrap();
        assert!(f.0.x.abs() < 1e-4);
    }

    #[test]
    fn single_leg_carries_four_times_the_load() {
        let four = bracing_force(&BracingParams::default(), default_wall_normal()).unwrap();
        let one = bracing_force(
            &BracingParams {
                legs_sharing_load: 1,
                ..BracingParams::default()
            },
            default_wall_normal(),
        )
        .unwrap();
        assert_eq!(one.0, four.0 * 4.0);
    }

    #[test]
    fn rejects_non_unit_or_tilted_normals() {
        let p = BracingParams::default();
        assert!(matches!(
            bracing_force(&p, Vector3::new(-2.0, 0.0, 0.0)),
            Err(Error::DegenerateNormal { .. })
        ));
        let tilted = Vector3::new(-1.0, 0.0, 1.0).normalize();
        assert!(bracing_force(&p, tilted).is_err());
    }

    #[test]
    fn massless_robot_needs_no_torque() {
        let p = BracingParams {
            robot_mass: 0.0,
            ..BracingParams::default()
        };
        let tau = max_required_torque(Vector3::new(0.3, 0.0, -0.3), &LegChain::default(), &p, default_wall_normal());
        assert_eq!(tau.unwrap(), 0.0);
    }

    #[test]
    fn moment_arm_bound() {
        let chain = LegChain::default();
        let p = BracingParams::default();
        let f = bracing_force(&p, default_wall_normal()).unwrap().0.norm();
        let map = build_atlas(&chain, &p, &GridSpec::default()).unwrap();
        for t in map.tau_max.iter().filter(|t| t.is_finite()) {
            assert!(*t <= chain.reach() * f + 1e-9);
        }
    }

    #[test]
    fn unreachable_nodes_are_infinite() {
        let map = build_atlas(&LegChain::default(), &BracingParams::default(), &GridSpec::default()).unwrap();
        let ix = map.grid_x.iter().position(|x| *x > 0.55).unwrap();
        assert!(map.slice(ix).iter().all(|t| t.is_infinite()));
    }

    #[test]
    fn small_reachable_grid_is_all_finite() {
        let grid = GridSpec {
            x_min: 0.2,
            x_max: 0.25,
            nx: 2,
            z_min: -0.3,
            z_max: -0.25,
            nz: 2,
        };
        let map = build_atlas(&LegChain::default(), &BracingParams::default(), &grid).unwrap();
        assert_eq!(map.tau_max.len(), 4);
        assert!(map.tau_max.iter().all(|t| t.is_finite()));
    }

    #[test]
    fn empty_grid_is_rejected() {
        let grid = GridSpec {
            nx: 1,
            ..GridSpec::default()
        };
        assert!(matches!(
            build_atlas(&LegChain::default(), &BracingParams::default(), &grid),
            Err(Error::EmptyGrid)
        ));
        let grid = GridSpec {
            x_max: 0.2,
            ..GridSpec::default()
        };
        assert!(matches!(
            build_atlas(&LegChain::default(), &BracingParams::default(), &grid),
            Err(Error::EmptyGrid)
        ));
    }

    #[test]
    fn curve_follows_single_finite_column() {
        let grid_x = vec![0.1, 0.2, 0.3];
        let grid_z = vec![-0.2, -0.1, 0.0];
        let inf = f64::INFINITY;
        let tau = vec![inf, inf, inf, 7.0, 3.0, 5.0, inf, inf, inf];
        let curve = extract_curve_c(&TorqueMap::new(grid_x, grid_z, tau)).unwrap();
        assert_eq!(curve.points, vec![CurvePoint { x: 0.2, z: -0.1, tau: 3.0 }]);
    }

    #[test]
    fn curve_of_bowl_collapses_to_its_center() {
        let grid_x: Vec<f64> = (0..11).map(|i| i as f64 * 0.02).collect();
        let grid_z: Vec<f64> = (0..11).map(|i| -0.1 + i as f64 * 0.02).collect();
        let tau: Vec<f64> = grid_x
            .iter()
            .flat_map(|x| grid_z.iter().map(move |z| (x - 0.1).powi(2) + z * z))
            .collect();
        let curve = extract_curve_c(&TorqueMap::new(grid_x, grid_z, tau)).unwrap();
        assert!(curve.points.iter().all(|p| p.z.abs() < 1e-12));
        let best = curve.points.iter().min_by(|a, b| a.tau.total_cmp(&b.tau)).unwrap();
        assert_relative_eq!(best.x, 0.1, epsilon = 1e-12);
        assert!(best.tau < 1e-20);
    }

    #[test]
    fn ties_prefer_smaller_height_magnitude() {
        let tau = vec![1.0, 1.0, 2.0, 1.0, 1.0, 2.0, 1.0, 1.0, 2.0];
        let map = TorqueMap::new(vec![0.0, 0.1, 0.2], vec![-0.3, 0.1, 0.2], tau);
        let curve = extract_curve_c(&map).unwrap();
        assert!(curve.points.iter().all(|p| p.z == 0.1));
    }

    #[test]
    fn fully_unreachable_map_has_no_minimum() {
        let map = TorqueMap::new(vec![0.0, 0.1, 0.2], vec![0.0], vec![f64::INFINITY; 3]);
        assert!(matches!(extract_curve_c(&map), Err(Error::NoMinimum { .. })));
    }

    #[test]
    fn motor_thresholds() {
        let limits = MotorLimits::default();
        let ok = MotorReport::from_curve_torque(10.0, 2.0, &limits);
        assert_eq!(ok.required_leg, 20.0);
        assert!(ok.leg_feasible);
        assert_eq!(ok.required_waist, 2.0 * ok.required_leg);
        assert!(ok.waist_feasible);
        let bad = MotorReport::from_curve_torque(10.0, 3.0, &limits);
        assert!(!bad.leg_feasible);
    }
}
