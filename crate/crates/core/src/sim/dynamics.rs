//! Reduced-coordinate dynamics of the planar robot.
//!
//! The translational coordinates are the centre of mass, so the translational
//! block of the mass matrix is `M I` and decoupled from the shape block. The
//! remaining coordinates are body pitch and the five joints. Every link is a
//! sum of rotating segment vectors, which keeps the mass matrix and velocity
//! product terms closed-form.
//!
//! A substep is semi-implicit Euler. Contact and joint-limit penalties are
//! linearised into the velocity solve. Penetration beyond a cap is then
//! removed by a mass-weighted position correction, and an energy budget
//! check removes any kinetic energy the discretisation would otherwise
//! create.

use nalgebra::{SMatrix, SVector, Vector2};
use serde::{Deserialize, Serialize};

use super::model::{RobotModel, N_BODIES, N_CONTACTS, N_JOINTS, N_SHAPE};
use crate::terrain::TerrainProfile;

pub type ShapeVec = SVector<f64, N_SHAPE>;
type ShapeMat = SMatrix<f64, N_SHAPE, N_SHAPE>;
type FullVec = SVector<f64, 8>;
type FullMat = SMatrix<f64, 8, 8>;
type PointJac = SMatrix<f64, 2, N_SHAPE>;

const N_SEG: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactParams {
    pub stiffness: f64,
    pub damping: f64,
    /// Viscous coefficient of the sticking tangential force.
    pub tangential_damping: f64,
    pub limit_stiffness: f64,
    pub limit_damping: f64,
    pub foot_radius: f64,
    pub knee_radius: f64,
    pub body_radius: f64,
    /// Friction of non-foot probes.
    pub body_friction: f64,
    /// Deeper penetrations are pushed back out after each substep.
    pub max_penetration: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self {
            stiffness: 3.0e5,
            damping: 2.0e3,
            tangential_damping: 1.0e5,
            limit_stiffness: 500.0,
            limit_damping: 5.0,
            foot_radius: 0.02,
            knee_radius: 0.03,
            body_radius: 0.05,
            body_friction: 0.5,
            max_penetration: 0.004,
        }
    }
}

impl ContactParams {
    pub fn radii(&self) -> [f64; N_CONTACTS] {
        let b = self.body_radius;
        [b, b, b, b, b, self.knee_radius, self.knee_radius, self.foot_radius, self.foot_radius]
    }
}

/// Mass properties after per-episode randomisation.
#[derive(Debug, Clone, PartialEq)]
pub struct Body {
    pub masses: [f64; N_BODIES],
    pub inertias: [f64; N_BODIES],
    pub total_mass: f64,
    lengths: [f64; N_SEG],
    offsets: [f64; N_SEG],
    incidence: SMatrix<f64, N_SEG, N_SHAPE>,
    /// Segment coefficients of the COM relative to the waist.
    com_coef: [f64; N_SEG],
    /// Segment coefficients of each contact probe relative to the COM.
    probe_coef: [[f64; N_SEG]; N_CONTACTS],
    /// Segment coefficients of each link COM relative to the robot COM.
    link_coef: [[f64; N_SEG]; N_BODIES],
    /// Mass-weighted coefficient Gram matrix.
    weight: SMatrix<f64, N_SEG, N_SEG>,
    armature: ShapeVec,
}

// Segment coefficient of each link COM and probe, relative to the waist.
const LINK_COEF: [[f64; N_SEG]; N_BODIES] = [
    [0.5, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, -0.5, 0.0, 0.0, 0.0, 0.0],
    [1.0, 0.0, 0.5, 0.0, 0.0, 0.0],
    [1.0, 0.0, 1.0, 0.5, 0.0, 0.0],
    [0.0, -1.0, 0.0, 0.0, 0.5, 0.0],
    [0.0, -1.0, 0.0, 0.0, 1.0, 0.5],
];

const PROBE_COEF: [[f64; N_SEG]; N_CONTACTS] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.5, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, -0.5, 0.0, 0.0, 0.0, 0.0],
    [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, -1.0, 0.0, 0.0, 0.0, 0.0],
    [1.0, 0.0, 1.0, 0.0, 0.0, 0.0],
    [0.0, -1.0, 0.0, 0.0, 1.0, 0.0],
    [1.0, 0.0, 1.0, 1.0, 0.0, 0.0],
    [0.0, -1.0, 0.0, 0.0, 1.0, 1.0],
];

// Which shape coordinates each segment angle accumulates.
const INCIDENCE: [[f64; N_SHAPE]; N_SEG] = [
    [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0, 1.0, 0.0, 0.0, 0.0, 0.0],
    [1.0, 0.0, 1.0, 0.0, 0.0, 0.0],
    [1.0, 0.0, 1.0, 1.0, 0.0, 0.0],
    [1.0, 1.0, 0.0, 0.0, 1.0, 0.0],
    [1.0, 1.0, 0.0, 0.0, 1.0, 1.0],
];

impl Body {
    pub fn new(model: &RobotModel, mass_scales: &[f64; N_BODIES]) -> Self {
        let nominal = model.link_masses();
        let masses: [f64; N_BODIES] = std::array::from_fn(|i| nominal[i] * mass_scales[i]);
        let lengths = model.link_lengths();
        // Rod inertia about the link COM; body links get extra depth.
        let inertias: [f64; N_BODIES] = std::array::from_fn(|i| {
            let l = if i < 2 { 2.0 * lengths[i] } else { lengths[i] };
            let depth = if i < 2 { 0.12 } else { 0.04 };
            masses[i] * (l * l + depth * depth) / 12.0
        });
        let total_mass: f64 = masses.iter().sum();
        let com_coef: [f64; N_SEG] =
            std::array::from_fn(|k| (0..N_BODIES).map(|i| masses[i] * LINK_COEF[i][k]).sum::<f64>() / total_mass);
        let rel = |c: &[f64; N_SEG]| -> [f64; N_SEG] { std::array::from_fn(|k| c[k] - com_coef[k]) };
        let link_coef = LINK_COEF.map(|c| rel(&c));
        let probe_coef = PROBE_COEF.map(|c| rel(&c));
        let mut weight = SMatrix::<f64, N_SEG, N_SEG>::zeros();
        for i in 0..N_BODIES {
            for k in 0..N_SEG {
                for l in 0..N_SEG {
                    weight[(k, l)] += masses[i] * link_coef[i][k] * link_coef[i][l];
                }
            }
        }
        let arm = model.armatures();
        let mut armature = ShapeVec::zeros();
        for j in 0..N_JOINTS {
            armature[j + 1] = arm[j];
        }
        let half_pi = std::f64::consts::FRAC_PI_2;
        Self {
            masses,
            inertias,
            total_mass,
            lengths,
            offsets: [0.0, 0.0, -half_pi, -half_pi, -half_pi, -half_pi],
            incidence: SMatrix::from_fn(|k, j| INCIDENCE[k][j]),
            com_coef,
            probe_coef,
            link_coef,
            weight,
            armature,
        }
    }
}

/// Segment vectors and angular rates for one configuration.
#[derive(Debug, Clone)]
pub struct Frame {
    seg: [Vector2<f64>; N_SEG],
    rate: [f64; N_SEG],
}

fn perp(v: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-v.y, v.x)
}

impl Frame {
    pub fn new(body: &Body, shape: &ShapeVec, shape_vel: &ShapeVec) -> Self {
        let angles = body.incidence * shape;
        let rates = body.incidence * shape_vel;
        Self {
            seg: std::array::from_fn(|k| {
                let a = angles[k] + body.offsets[k];
                Vector2::new(a.cos(), a.sin()) * body.lengths[k]
            }),
            rate: std::array::from_fn(|k| rates[k]),
        }
    }

    fn combine(&self, coef: &[f64; N_SEG]) -> Vector2<f64> {
        (0..N_SEG).fold(Vector2::zeros(), |acc, k| acc + self.seg[k] * coef[k])
    }

    fn jacobian(&self, body: &Body, coef: &[f64; N_SEG]) -> PointJac {
        let mut j = PointJac::zeros();
        for k in 0..N_SEG {
            if coef[k] == 0.0 {
                continue;
            }
            let p = perp(self.seg[k]) * coef[k];
            for s in 0..N_SHAPE {
                let a = body.incidence[(k, s)];
                if a != 0.0 {
                    j[(0, s)] += a * p.x;
                    j[(1, s)] += a * p.y;
                }
            }
        }
        j
    }

    /// COM position relative to the waist.
    pub fn com_offset(&self, body: &Body) -> Vector2<f64> {
        self.combine(&body.com_coef)
    }

    pub fn com_jacobian(&self, body: &Body) -> PointJac {
        self.jacobian(body, &body.com_coef)
    }

    pub fn probe_offset(&self, body: &Body, probe: usize) -> Vector2<f64> {
        self.combine(&body.probe_coef[probe])
    }

    pub fn probe_jacobian(&self, body: &Body, probe: usize) -> PointJac {
        self.jacobian(body, &body.probe_coef[probe])
    }

    pub fn link_offset(&self, body: &Body, link: usize) -> Vector2<f64> {
        self.combine(&body.link_coef[link])
    }

    pub fn mass_matrix(&self, body: &Body) -> ShapeMat {
        let gram = SMatrix::<f64, N_SEG, N_SEG>::from_fn(|k, l| body.weight[(k, l)] * self.seg[k].dot(&self.seg[l]));
        let mut m = body.incidence.transpose() * gram * body.incidence;
        for (i, inertia) in body.inertias.iter().enumerate() {
            let a = body.incidence.row(i);
            m += a.transpose() * a * *inertia;
        }
        for j in 0..N_SHAPE {
            m[(j, j)] += body.armature[j];
        }
        m
    }

    /// Velocity-product generalised force `sum m J'^T (dJ'/dt qdot)`.
    pub fn velocity_product(&self, body: &Body) -> ShapeVec {
        let mut per_seg = [0.0; N_SEG];
        for (k, out) in per_seg.iter_mut().enumerate() {
            let pk = perp(self.seg[k]);
            *out = (0..N_SEG)
                .map(|l| -body.weight[(k, l)] * self.rate[l] * self.rate[l] * pk.dot(&self.seg[l]))
                .sum();
        }
        let mut h = ShapeVec::zeros();
        for k in 0..N_SEG {
            for s in 0..N_SHAPE {
                h[s] += body.incidence[(k, s)] * per_seg[k];
            }
        }
        h
    }
}

/// Generalised state: COM position and the shape coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Coords {
    pub com: Vector2<f64>,
    pub com_vel: Vector2<f64>,
    pub shape: ShapeVec,
    pub shape_vel: ShapeVec,
}

impl Coords {
    pub fn velocity(&self) -> FullVec {
        let mut v = FullVec::zeros();
        v[0] = self.com_vel.x;
        v[1] = self.com_vel.y;
        for j in 0..N_SHAPE {
            v[2 + j] = self.shape_vel[j];
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProbeContact {
    pub active: bool,
    pub sliding: bool,
    pub penetration: f64,
    /// World-frame force on the robot.
    pub force: Vector2<f64>,
    pub normal: Vector2<f64>,
}

/// Forces applied during a substep, besides gravity and contacts.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Applied {
    pub joint_torques: [f64; N_JOINTS],
    /// External force at the waist (world frame).
    pub force: Vector2<f64>,
    /// External torque on the front body.
    pub torque: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SubstepReport {
    pub contacts: [ProbeContact; N_CONTACTS],
    pub energy_before: f64,
    pub energy_after: f64,
    pub work_in: f64,
    pub projected: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhysicsFlags {
    pub contacts: bool,
    pub joint_limits: bool,
    pub energy_projection: bool,
}

impl PhysicsFlags {
    pub fn all() -> Self {
        Self {
            contacts: true,
            joint_limits: true,
            energy_projection: true,
        }
    }
}

pub struct Physics<'a> {
    pub body: &'a Body,
    pub params: &'a ContactParams,
    pub terrain: &'a TerrainProfile,
    pub friction: [f64; N_CONTACTS],
    pub joint_limits: [[f64; 2]; N_JOINTS],
    pub gravity: f64,
    pub flags: PhysicsFlags,
}

#[derive(Debug, Clone, Copy)]
struct ActiveContact {
    probe: usize,
    normal: Vector2<f64>,
    tangent: Vector2<f64>,
    penetration: f64,
    jac: SMatrix<f64, 2, 8>,
    mode: Mode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Mode {
    Stick,
    Slide(f64),
    Off,
}

#[derive(Debug, Clone, Copy)]
struct ActiveLimit {
    joint: usize,
    /// Signed violation: positive above the upper limit.
    excess: f64,
    on: bool,
}

impl Physics<'_> {
    fn full_jacobian(&self, frame: &Frame, probe: usize) -> SMatrix<f64, 2, 8> {
        let jp = frame.probe_jacobian(self.body, probe);
        let mut j = SMatrix::<f64, 2, 8>::zeros();
        j[(0, 0)] = 1.0;
        j[(1, 1)] = 1.0;
        j.fixed_view_mut::<2, N_SHAPE>(0, 2).copy_from(&jp);
        j
    }

    pub fn probe_position(&self, frame: &Frame, c: &Coords, probe: usize) -> Vector2<f64> {
        c.com + frame.probe_offset(self.body, probe)
    }

    fn any_penetration(&self, c: &Coords) -> bool {
        let frame = Frame::new(self.body, &c.shape, &c.shape_vel);
        !self.collect_contacts(&frame, c).is_empty()
    }

    fn collect_contacts(&self, frame: &Frame, c: &Coords) -> Vec<ActiveContact> {
        let radii = self.params.radii();
        let mut out = Vec::new();
        for probe in 0..N_CONTACTS {
            let p = self.probe_position(frame, c, probe);
            let hits = self.terrain.surface_contacts(p.x, p.y, radii[probe]);
            if hits.is_empty() {
                continue;
            }
            let jac = self.full_jacobian(frame, probe);
            for hit in hits {
                out.push(ActiveContact {
                    probe,
                    normal: hit.normal,
                    tangent: perp(hit.normal),
                    penetration: radii[probe] - hit.distance,
                    jac,
                    mode: Mode::Stick,
                });
            }
        }
        out
    }

    /// Moves the coordinates by the smallest mass-weighted step that brings
    /// every probe back within `max_penetration`. Velocities are untouched.
    fn correct_penetration(&self, c: &mut Coords) {
        let cap = self.params.max_penetration;
        for _ in 0..8 {
            let frame = Frame::new(self.body, &c.shape, &c.shape_vel);
            let deep: Vec<ActiveContact> = self
                .collect_contacts(&frame, c)
                .into_iter()
                .filter(|ct| ct.penetration > cap)
                .collect();
            if deep.is_empty() {
                return;
            }
            let Some(ms_inv) = frame.mass_matrix(self.body).try_inverse() else {
                return;
            };
            let mut m_inv = FullMat::zeros();
            m_inv[(0, 0)] = 1.0 / self.body.total_mass;
            m_inv[(1, 1)] = 1.0 / self.body.total_mass;
            m_inv.fixed_view_mut::<N_SHAPE, N_SHAPE>(2, 2).copy_from(&ms_inv);

            let n = deep.len();
            let rows: Vec<FullVec> = deep.iter().map(|ct| ct.jac.transpose() * ct.normal).collect();
            let mut a = nalgebra::DMatrix::<f64>::zeros(n, n);
            let mut d = nalgebra::DVector::<f64>::zeros(n);
            for i in 0..n {
                // aim slightly inside the cap so the linearisation settles
                d[i] = deep[i].penetration - 0.9 * cap;
                for j in 0..n {
                    a[(i, j)] = rows[i].dot(&(m_inv * rows[j]));
                }
                a[(i, i)] += 1e-9;
            }
            let Some(lambda) = a.lu().solve(&d) else {
                return;
            };
            let mut dq = FullVec::zeros();
            for i in 0..n {
                dq += m_inv * rows[i] * lambda[i];
            }
            c.com += Vector2::new(dq[0], dq[1]);
            for j in 0..N_SHAPE {
                c.shape[j] += dq[2 + j];
            }
        }
    }

    fn joint_limit_violations(&self, c: &Coords) -> Vec<ActiveLimit> {
        (0..N_JOINTS)
            .filter_map(|j| {
                let q = c.shape[j + 1];
                let [lo, hi] = self.joint_limits[j];
                if q > hi {
                    Some(ActiveLimit { joint: j, excess: q - hi, on: true })
                } else if q < lo {
                    Some(ActiveLimit { joint: j, excess: q - lo, on: true })
                } else {
                    None
                }
            })
            .collect()
    }

    /// Total mechanical energy, including penalty potentials.
    pub fn energy(&self, c: &Coords) -> f64 {
        let frame = Frame::new(self.body, &c.shape, &c.shape_vel);
        self.energy_with(&frame, c)
    }

    fn energy_with(&self, frame: &Frame, c: &Coords) -> f64 {
        let kinetic = self.kinetic(frame, c);
        let mut potential = self.body.total_mass * self.gravity * c.com.y;
        if self.flags.contacts {
            let radii = self.params.radii();
            for probe in 0..N_CONTACTS {
                let p = self.probe_position(frame, c, probe);
                for hit in self.terrain.surface_contacts(p.x, p.y, radii[probe]) {
                    let pen = radii[probe] - hit.distance;
                    potential += 0.5 * self.params.stiffness * pen * pen;
                }
            }
        }
        if self.flags.joint_limits {
            for lim in self.joint_limit_violations(c) {
                potential += 0.5 * self.params.limit_stiffness * lim.excess * lim.excess;
            }
        }
        kinetic.0 + kinetic.1 + potential
    }

    // (translational, shape) kinetic energy
    fn kinetic(&self, frame: &Frame, c: &Coords) -> (f64, f64) {
        let ms = frame.mass_matrix(self.body);
        (
            0.5 * self.body.total_mass * c.com_vel.norm_squared(),
            0.5 * c.shape_vel.dot(&(ms * c.shape_vel)),
        )
    }

    /// Advances `c` by `dt`.
    pub fn substep(&self, c: &mut Coords, applied: &Applied, dt: f64) -> SubstepReport {
        let frame = Frame::new(self.body, &c.shape, &c.shape_vel);
        let energy_before = if self.flags.energy_projection {
            self.energy_with(&frame, c)
        } else {
            0.0
        };
        let ms = frame.mass_matrix(self.body);
        let mut mass = FullMat::zeros();
        mass[(0, 0)] = self.body.total_mass;
        mass[(1, 1)] = self.body.total_mass;
        mass.fixed_view_mut::<N_SHAPE, N_SHAPE>(2, 2).copy_from(&ms);

        let mut force = FullVec::zeros();
        force[1] = -self.body.total_mass * self.gravity;
        let h = frame.velocity_product(self.body);
        for j in 0..N_SHAPE {
            force[2 + j] -= h[j];
        }
        for j in 0..N_JOINTS {
            force[3 + j] += applied.joint_torques[j];
        }
        // External wrench at the waist (probe 0) and on the front body.
        let jw = self.full_jacobian(&frame, 0);
        force += jw.transpose() * applied.force;
        force[2] += applied.torque;

        let v0 = c.velocity();
        let base_rhs = mass * v0 + force * dt;

        let mut contacts = if self.flags.contacts {
            self.collect_contacts(&frame, c)
        } else {
            Vec::new()
        };
        let mut limits = if self.flags.joint_limits {
            self.joint_limit_violations(c)
        } else {
            Vec::new()
        };

        let (k, cn, ct) = (self.params.stiffness, self.params.damping, self.params.tangential_damping);
        let (kl, cl) = (self.params.limit_stiffness, self.params.limit_damping);
        let mut v = v0;
        for _ in 0..8 {
            let mut a = mass;
            let mut rhs = base_rhs;
            for ct_ in contacts.iter().filter(|c| c.mode != Mode::Off) {
                let jn = ct_.jac.transpose() * ct_.normal;
                let jt = ct_.jac.transpose() * ct_.tangent;
                // normal load = k pen - (c + dt k) n.u
                let gn = cn + dt * k;
                rhs += jn * (dt * k * ct_.penetration);
                a += jn * jn.transpose() * (dt * gn);
                match ct_.mode {
                    Mode::Stick => a += jt * jt.transpose() * (dt * ct),
                    Mode::Slide(sign) => {
                        let mu = self.friction[ct_.probe];
                        rhs += jt * (dt * sign * mu * k * ct_.penetration);
                        a += jt * jn.transpose() * (dt * sign * mu * gn);
                    }
                    Mode::Off => {}
                }
            }
            for lim in limits.iter().filter(|l| l.on) {
                let idx = 3 + lim.joint;
                rhs[idx] -= dt * kl * lim.excess;
                a[(idx, idx)] += dt * (cl + dt * kl);
            }
            v = match a.lu().solve(&rhs) {
                Some(v) => v,
                None => break,
            };

            let mut changed = false;
            for ct_ in contacts.iter_mut() {
                if ct_.mode == Mode::Off {
                    continue;
                }
                let u = ct_.jac * v;
                let normal_load = k * ct_.penetration - (cn + dt * k) * ct_.normal.dot(&u);
                if normal_load < 0.0 {
                    ct_.mode = Mode::Off;
                    changed = true;
                    continue;
                }
                if ct_.mode == Mode::Stick {
                    let t_load = -ct * ct_.tangent.dot(&u);
                    let cap = self.friction[ct_.probe] * normal_load;
                    if t_load.abs() > cap {
                        ct_.mode = Mode::Slide(t_load.signum());
                        changed = true;
                    }
                }
            }
            for lim in limits.iter_mut().filter(|l| l.on) {
                let qd = v[3 + lim.joint];
                let torque = -kl * (lim.excess + dt * qd) - cl * qd;
                if torque * lim.excess > 0.0 {
                    lim.on = false;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        // Contact forces at the solved velocity.
        let mut report = SubstepReport::default();
        for ct_ in &contacts {
            // a probe wedged in a corner reports its deepest hit and the summed force
            let slot = &mut report.contacts[ct_.probe];
            if ct_.penetration > slot.penetration {
                slot.penetration = ct_.penetration;
                slot.normal = ct_.normal;
            }
            if ct_.mode == Mode::Off {
                continue;
            }
            let u = ct_.jac * v;
            let normal_load = (k * ct_.penetration - (cn + dt * k) * ct_.normal.dot(&u)).max(0.0);
            let t_load = match ct_.mode {
                Mode::Stick => -ct * ct_.tangent.dot(&u),
                Mode::Slide(sign) => sign * self.friction[ct_.probe] * normal_load,
                Mode::Off => 0.0,
            };
            slot.active = true;
            slot.sliding |= matches!(ct_.mode, Mode::Slide(_));
            slot.force += ct_.normal * normal_load + ct_.tangent * t_load;
        }

        // Work done by actuators and external loads over the step.
        let work_in = if self.flags.energy_projection {
            let mut w = 0.0;
            for j in 0..N_JOINTS {
                w += applied.joint_torques[j] * v[3 + j] * dt;
            }
            w += applied.force.dot(&(jw * v)) * dt + applied.torque * v[2] * dt;
            w
        } else {
            0.0
        };

        c.com_vel = Vector2::new(v[0], v[1]);
        for j in 0..N_SHAPE {
            c.shape_vel[j] = v[2 + j];
        }
        c.com += c.com_vel * dt;
        c.shape += c.shape_vel * dt;
        let touching = self.flags.contacts && contacts.iter().any(|c| c.mode != Mode::Off);
        if self.flags.contacts {
            self.correct_penetration(c);
        }

        report.energy_before = energy_before;
        report.work_in = work_in;
        if self.flags.energy_projection {
            let frame = Frame::new(self.body, &c.shape, &c.shape_vel);
            let after = self.energy_with(&frame, c);
            let budget = energy_before + work_in;
            let mut excess = after - budget;
            if excess > 0.0 {
                report.projected = true;
                let (kt, ks) = self.kinetic(&frame, c);
                let take = excess.min(ks);
                if ks > 0.0 {
                    c.shape_vel *= ((ks - take) / ks).max(0.0).sqrt();
                }
                excess -= take;
                // COM momentum only changes through contact
                if excess > 0.0 && kt > 0.0 && (touching || self.any_penetration(c)) {
                    let take = excess.min(kt);
                    c.com_vel *= ((kt - take) / kt).max(0.0).sqrt();
                }
                report.energy_after = self.energy(c);
            } else {
                report.energy_after = after;
            }
        }
        let _ = &mut limits;
        report
    }
}
