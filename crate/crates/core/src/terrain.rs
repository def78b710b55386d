//! Two-wall chimney terrain with an elliptical floor-wall junction.
//!
//! The cross-section lives in the `x`-`z` plane. A flat floor at `z = 0`
//! joins each vertical wall (at `|x| = w/2`) through a quarter ellipse with
//! horizontal radius `r` and vertical radius `a`. Shrinking `r` to zero turns
//! the U-shaped floor into a plain rectangular chimney. Walls carry a
//! correlated roughness displacement along their normal.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spacing of the roughness lattice along wall height.
pub const ROUGHNESS_CORRELATION: f64 = 0.05;
/// Height over which roughness fades in above the floor.
const ROUGHNESS_FADE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum JunctionShape {
    /// Floor narrows to `|x| <= w/2 - r` and fillets up into the walls.
    #[default]
    HalfPipe,
    /// Floor widens to `|x| <= w/2 + r`; the junction overhangs.
    Funnel,
}

impl JunctionShape {
    fn sign(self) -> f64 {
        match self {
            JunctionShape::HalfPipe => 1.0,
            JunctionShape::Funnel => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerrainSpec {
    pub wall_width: f64,
    pub junction_r: f64,
    pub junction_a: f64,
    pub roughness_amp: f64,
    pub wall_height: f64,
    pub seed: u64,
    pub shape: JunctionShape,
    pub resolution: f64,
}

impl Default for TerrainSpec {
    fn default() -> Self {
        Self {
            wall_width: 1.0,
            junction_r: 0.3,
            junction_a: 1.0,
            roughness_amp: 0.0,
            wall_height: 4.0,
            seed: 0,
            shape: JunctionShape::HalfPipe,
            resolution: 0.005,
        }
    }
}

impl TerrainSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_string()));
        if !(self.wall_width > 0.0 && self.wall_width.is_finite()) {
            return bad("wall_width must be positive");
        }
        if !(self.junction_r >= 0.0 && self.junction_r <= 0.5 * self.wall_width + 1e-12) {
            return bad("junction_r must lie in [0, wall_width / 2]");
        }
        if !(self.junction_a > 0.0 && self.junction_a < self.wall_height) {
            return bad("junction_a must be positive and below the wall height");
        }
        if !(self.roughness_amp >= 0.0 && self.roughness_amp.is_finite()) {
            return bad("roughness_amp must be non-negative");
        }
        if !(self.resolution > 0.0 && self.resolution <= 0.05) {
            return bad("resolution must lie in (0, 0.05]");
        }
        Ok(())
    }

    /// Half-width of the flat floor.
    pub fn floor_half_width(&self) -> f64 {
        0.5 * self.wall_width - self.shape.sign() * self.junction_r
    }
}

/// Smooth-surface abscissa of one wall at height `z` (no roughness).
pub fn junction_x(z: f64, spec: &TerrainSpec, side: Side) -> f64 {
    let half = 0.5 * spec.wall_width;
    let a = spec.junction_a;
    let mag = if z >= a {
        half
    } else {
        let zc = z.max(0.0) / a;
        let s = spec.shape.sign();
        half - s * spec.junction_r + s * spec.junction_r * (zc * (2.0 - zc)).max(0.0).sqrt()
    };
    side.sign() * mag
}

/// Smoothly interpolated value noise on a regular lattice, bounded by 1.
#[derive(Debug, Clone, PartialEq)]
struct ValueNoise {
    origin: f64,
    spacing: f64,
    values: Vec<f64>,
}

impl ValueNoise {
    fn new(rng: &mut ChaCha8Rng, origin: f64, extent: f64, spacing: f64) -> Self {
        let n = (extent / spacing).ceil() as usize + 2;
        let values = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
        Self { origin, spacing, values }
    }

    /// Value and derivative at `z`.
    fn eval(&self, z: f64) -> (f64, f64) {
        let g = ((z - self.origin) / self.spacing).max(0.0);
        let i = (g.floor() as usize).min(self.values.len() - 2);
        let t = (g - i as f64).clamp(0.0, 1.0);
        let (v0, v1) = (self.values[i], self.values[i + 1]);
        let w = t * t * (3.0 - 2.0 * t);
        let dw = 6.0 * t * (1.0 - t) / self.spacing;
        (v0 + (v1 - v0) * w, (v1 - v0) * dw)
    }
}

/// One wall (junction plus vertical section) as a parametric curve.
///
/// Parameter `u` runs over `[0, PI/2]` along the ellipse angle and then over
/// `[PI/2, PI/2 + H - a]` up the vertical section.
#[derive(Debug, Clone, PartialEq)]
struct WallCurve {
    side: f64,
    half: f64,
    r: f64,
    a: f64,
    shape: f64,
    amp: f64,
    noise: ValueNoise,
}

impl WallCurve {
    fn u_max(&self, height: f64) -> f64 {
        FRAC_PI_2 + (height - self.a)
    }

    // Smooth point, tangent and second derivative with respect to u.
    fn smooth(&self, u: f64) -> (Vector2<f64>, Vector2<f64>) {
        if u <= FRAC_PI_2 {
            let (s, c) = u.sin_cos();
            let x = self.half - self.shape * self.r + self.shape * self.r * s;
            let p = Vector2::new(self.side * x, self.a * (1.0 - c));
            let d = Vector2::new(self.side * self.shape * self.r * c, self.a * s);
            (p, d)
        } else {
            let z = self.a + (u - FRAC_PI_2);
            (Vector2::new(self.side * self.half, z), Vector2::new(0.0, 1.0))
        }
    }

    // Unit normal of the smooth curve pointing into free space.
    fn smooth_normal(&self, u: f64) -> Vector2<f64> {
        let (_, d) = self.smooth(u);
        // Left wall is traversed upward with free space on its right.
        let n = Vector2::new(-self.side * d.y, self.side * d.x);
        let len = n.norm();
        if len > 1e-12 {
            n / len
        } else {
            Vector2::new(-self.side, 0.0)
        }
    }

    fn displacement(&self, z: f64) -> (f64, f64) {
        if self.amp == 0.0 {
            return (0.0, 0.0);
        }
        let (v, dv) = self.noise.eval(z);
        let t = (z / ROUGHNESS_FADE).clamp(0.0, 1.0);
        let fade = t * t * (3.0 - 2.0 * t);
        let dfade = if z > 0.0 && z < ROUGHNESS_FADE {
            6.0 * t * (1.0 - t) / ROUGHNESS_FADE
        } else {
            0.0
        };
        (self.amp * v * fade, self.amp * (dv * fade + v * dfade))
    }

    fn point(&self, u: f64) -> Vector2<f64> {
        let (p, _) = self.smooth(u);
        let (d, _) = self.displacement(p.y);
        p + self.smooth_normal(u) * d
    }

    // Tangent by central difference; used only for normals of the rough curve.
    fn tangent(&self, u: f64, u_max: f64) -> Vector2<f64> {
        let h = 1e-6;
        let (lo, hi) = ((u - h).max(0.0), (u + h).min(u_max));
        let t = self.point(hi) - self.point(lo);
        if t.norm() > 1e-14 {
            t.normalize()
        } else {
            let (_, d) = self.smooth(u);
            if d.norm() > 1e-14 {
                d.normalize()
            } else {
                Vector2::new(0.0, 1.0)
            }
        }
    }

    fn normal(&self, u: f64, u_max: f64) -> Vector2<f64> {
        if self.amp == 0.0 {
            return self.smooth_normal(u);
        }
        let t = self.tangent(u, u_max);
        Vector2::new(-self.side * t.y, self.side * t.x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceHit {
    /// Negative inside solid.
    pub distance: f64,
    /// Unit normal pointing into free space.
    pub normal: Vector2<f64>,
    pub closest: Vector2<f64>,
}

// Piece of the sampled cross-section: which curve and its parameter span.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Piece {
    Floor,
    Wall { wall: usize, u0: f64, u1: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Segment {
    a: Vector2<f64>,
    b: Vector2<f64>,
    piece: Piece,
}

/// Immutable terrain geometry built from a [`TerrainSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct TerrainProfile {
    pub spec: TerrainSpec,
    walls: [WallCurve; 2],
    segments: Vec<Segment>,
    bin_z0: f64,
    bin_size: f64,
    bins: Vec<Vec<u32>>,
}

const BIN_SIZE: f64 = 0.05;

pub fn make_terrain(spec: &TerrainSpec) -> Result<TerrainProfile> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let extent = spec.wall_height + 2.0;
    let mut wall = |side: f64| WallCurve {
        side,
        half: 0.5 * spec.wall_width,
        r: spec.junction_r,
        a: spec.junction_a,
        shape: spec.shape.sign(),
        amp: spec.roughness_amp,
        noise: ValueNoise::new(&mut rng, -1.0, extent, ROUGHNESS_CORRELATION),
    };
    let walls = [wall(-1.0), wall(1.0)];

    let mut segments = Vec::new();
    let u_max = walls[0].u_max(spec.wall_height);
    for (w, curve) in walls.iter().enumerate() {
        let n = ((u_max * spec.junction_a.max(1.0)) / spec.resolution).ceil().max(8.0) as usize;
        let us: Vec<f64> = (0..=n).map(|i| u_max * i as f64 / n as f64).collect();
        for pair in us.windows(2) {
            segments.push(Segment {
                a: curve.point(pair[0]),
                b: curve.point(pair[1]),
                piece: Piece::Wall {
                    wall: w,
                    u0: pair[0],
                    u1: pair[1],
                },
            });
        }
    }
    let fh = spec.floor_half_width();
    if fh > 0.0 {
        segments.push(Segment {
            a: Vector2::new(-fh, 0.0),
            b: Vector2::new(fh, 0.0),
            piece: Piece::Floor,
        });
    }

    let bin_z0 = -1.0;
    let nbins = ((spec.wall_height + 2.0) / BIN_SIZE).ceil() as usize + 1;
    let mut bins = vec![Vec::new(); nbins];
    for (i, s) in segments.iter().enumerate() {
        let (lo, hi) = (s.a.y.min(s.b.y), s.a.y.max(s.b.y));
        let b0 = (((lo - bin_z0) / BIN_SIZE).floor().max(0.0) as usize).min(nbins - 1);
        let b1 = (((hi - bin_z0) / BIN_SIZE).floor().max(0.0) as usize).min(nbins - 1);
        for bin in &mut bins[b0..=b1] {
            bin.push(i as u32);
        }
    }
    Ok(TerrainProfile {
        spec: spec.clone(),
        walls,
        segments,
        bin_z0,
        bin_size: BIN_SIZE,
        bins,
    })
}

fn closest_on_segment(p: Vector2<f64>, a: Vector2<f64>, b: Vector2<f64>) -> (f64, Vector2<f64>) {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (t, a + ab * t)
}

impl TerrainProfile {
    pub fn x_bounds(&self) -> (f64, f64) {
        let half = 0.5 * self.spec.wall_width + self.spec.junction_r + 1.0;
        (-half, half)
    }

    pub fn z_bounds(&self) -> (f64, f64) {
        (-1.0, self.spec.wall_height)
    }

    pub fn in_bounds(&self, x: f64, z: f64) -> bool {
        let (x0, x1) = self.x_bounds();
        let (z0, z1) = self.z_bounds();
        x.is_finite() && z.is_finite() && x >= x0 && x <= x1 && z >= z0 && z <= z1
    }

    fn bin_of(&self, z: f64) -> usize {
        (((z - self.bin_z0) / self.bin_size).floor().max(0.0) as usize).min(self.bins.len() - 1)
    }

    /// Whether `p` lies in free space: a ray toward `+x` crosses the
    /// cross-section an odd number of times.
    fn is_free(&self, p: Vector2<f64>) -> bool {
        let mut crossings = 0;
        for &i in &self.bins[self.bin_of(p.y)] {
            let s = &self.segments[i as usize];
            let (a, b) = (s.a, s.b);
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if x > p.x {
                    crossings += 1;
                }
            }
        }
        crossings % 2 == 1
    }

    fn nearest_segment(&self, p: Vector2<f64>) -> (usize, f64, Vector2<f64>) {
        let mut best = (usize::MAX, f64::INFINITY, p);
        let consider = |idx: &[u32], best: &mut (usize, f64, Vector2<f64>)| {
            for &i in idx {
                let s = &self.segments[i as usize];
                let (_, q) = closest_on_segment(p, s.a, s.b);
                let d = (p - q).norm();
                if d < best.1 {
                    *best = (i as usize, d, q);
                }
            }
        };
        let center = self.bin_of(p.y);
        consider(&self.bins[center], &mut best);
        // Segments outside the visited bins lie entirely outside [lo, hi].
        let mut k = 0usize;
        loop {
            let lo = self.bin_z0 + (center as f64 - k as f64) * self.bin_size;
            let hi = self.bin_z0 + (center + k + 1) as f64 * self.bin_size;
            let exhausted = center < k + 1 && center + k + 1 >= self.bins.len();
            if best.1 <= (p.y - lo).min(hi - p.y) || exhausted {
                break;
            }
            k += 1;
            if center >= k {
                consider(&self.bins[center - k], &mut best);
            }
            if center + k < self.bins.len() {
                consider(&self.bins[center + k], &mut best);
            }
        }
        best
    }

    /// Signed distance to the surface and the unit normal into free space.
    pub fn surface_query(&self, x: f64, z: f64) -> Result<SurfaceHit> {
        if !self.in_bounds(x, z) {
            return Err(Error::OutOfBounds { x, z });
        }
        let p = Vector2::new(x, z);
        let (idx, seg_dist, seg_q) = self.nearest_segment(p);
        let seg = self.segments[idx];
        let (q, curve_normal) = match seg.piece {
            Piece::Floor => (seg_q, Vector2::new(0.0, 1.0)),
            Piece::Wall { wall, u0, u1 } => self.refine(wall, u0, u1, p, seg_q, seg_dist),
        };
        let free = self.is_free(p);
        let dist = (p - q).norm();
        let sign = if free { 1.0 } else { -1.0 };
        let normal = if dist > 1e-9 {
            let n = (p - q) / dist * sign;
            // The normal must face free space even at a convex corner.
            if n.dot(&curve_normal) < -0.5 {
                curve_normal
            } else {
                n
            }
        } else {
            curve_normal
        };
        Ok(SurfaceHit {
            distance: sign * dist,
            normal,
            closest: q,
        })
    }

    /// Like [`Self::surface_query`] but returns `None` for points in free
    /// space farther than `radius` from the surface, or outside the domain.
    pub fn surface_query_near(&self, x: f64, z: f64, radius: f64) -> Option<SurfaceHit> {
        if !self.in_bounds(x, z) {
            return None;
        }
        let p = Vector2::new(x, z);
        let reach = radius + self.spec.resolution;
        let lo = self.bin_of(z - reach);
        let hi = self.bin_of(z + reach);
        let near = self.bins[lo..=hi].iter().flatten().any(|&i| {
            let s = &self.segments[i as usize];
            let (_, q) = closest_on_segment(p, s.a, s.b);
            (p - q).norm() <= reach
        });
        if !near && self.is_free(p) {
            return None;
        }
        self.surface_query(x, z).ok()
    }

    /// Contact candidates for a disc of `radius` at `(x, z)`: the nearest
    /// point on the floor and on each wall, kept when closer than `radius`.
    /// A disc wedged in a concave corner touches two pieces at once, which
    /// [`Self::surface_query`] cannot express. Hits with nearly parallel
    /// normals (a smooth floor-to-wall join) are merged into the deeper one.
    pub fn surface_contacts(&self, x: f64, z: f64, radius: f64) -> Vec<SurfaceHit> {
        if !self.in_bounds(x, z) {
            return Vec::new();
        }
        let p = Vector2::new(x, z);
        let reach = radius + 0.1;
        let lo = self.bin_of(z - reach);
        let hi = self.bin_of(z + reach);
        // nearest segment per piece: floor, left wall, right wall
        let mut best: [(usize, f64, Vector2<f64>); 3] = [(usize::MAX, f64::INFINITY, p); 3];
        for &i in self.bins[lo..=hi].iter().flatten() {
            let s = &self.segments[i as usize];
            let slot = match s.piece {
                Piece::Floor => 0,
                Piece::Wall { wall, .. } => 1 + wall,
            };
            let (_, q) = closest_on_segment(p, s.a, s.b);
            let d = (p - q).norm();
            if d < best[slot].1 {
                best[slot] = (i as usize, d, q);
            }
        }
        let mut hits: Vec<SurfaceHit> = Vec::with_capacity(2);
        for (idx, seg_d, seg_q) in best {
            if idx == usize::MAX || seg_d > reach {
                continue;
            }
            let (q, n) = match self.segments[idx].piece {
                Piece::Floor => (seg_q, Vector2::new(0.0, 1.0)),
                Piece::Wall { wall, u0, u1 } => self.refine(wall, u0, u1, p, seg_q, seg_d),
            };
            let distance = (p - q).norm().copysign((p - q).dot(&n));
            if distance >= radius {
                continue;
            }
            let hit = SurfaceHit { distance, normal: n, closest: q };
            match hits.iter_mut().find(|h| h.normal.dot(&n) > 0.9) {
                Some(h) if h.distance > distance => *h = hit,
                Some(_) => {}
                None => hits.push(hit),
            }
        }
        if hits.is_empty() && !self.is_free(p) {
            // deeper than the search reach
            if let Ok(hit) = self.surface_query(x, z) {
                hits.push(hit);
            }
        }
        hits
    }

    /// Golden-section refinement of the nearest point on the continuous wall
    /// curve around one sampled segment.
    fn refine(&self, wall: usize, u0: f64, u1: f64, p: Vector2<f64>, seg_q: Vector2<f64>, seg_d: f64) -> (Vector2<f64>, Vector2<f64>) {
        let curve = &self.walls[wall];
        let u_max = curve.u_max(self.spec.wall_height);
        let du = u1 - u0;
        let (mut lo, mut hi) = ((u0 - du).max(0.0), (u1 + du).min(u_max));
        let f = |u: f64| (curve.point(u) - p).norm_squared();
        const G: f64 = 0.618_033_988_749_894_8;
        let mut c = hi - G * (hi - lo);
        let mut d = lo + G * (hi - lo);
        let (mut fc, mut fd) = (f(c), f(d));
        for _ in 0..48 {
            if fc < fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - G * (hi - lo);
                fc = f(c);
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + G * (hi - lo);
                fd = f(d);
            }
        }
        let u = 0.5 * (lo + hi);
        let q = curve.point(u);
        let q = if (q - p).norm() <= seg_d + 1e-12 { q } else { seg_q };
        (q, curve.normal(u, u_max))
    }

    /// Rough-surface abscissa of one wall at the parameter whose smooth
    /// height is `z` (above the floor).
    pub fn wall_x(&self, z: f64, side: Side) -> f64 {
        let curve = &self.walls[match side {
            Side::Left => 0,
            Side::Right => 1,
        }];
        let a = self.spec.junction_a;
        let u = if z >= a {
            FRAC_PI_2 + (z - a)
        } else {
            (1.0 - z.max(0.0) / a).clamp(-1.0, 1.0).acos()
        };
        curve.point(u).x
    }

    /// Height of the lower envelope of free space at abscissa `x` for the
    /// smooth half-pipe, `None` where the column is fully solid.
    pub fn ground_height(&self, x: f64) -> Option<f64> {
        let spec = &self.spec;
        let half = 0.5 * spec.wall_width;
        let fh = spec.floor_half_width();
        let ax = x.abs();
        if ax <= fh {
            return Some(0.0);
        }
        if ax >= half || spec.shape == JunctionShape::Funnel {
            return None;
        }
        let u = ((ax - fh) / spec.junction_r).clamp(0.0, 1.0);
        Some(spec.junction_a * (1.0 - (1.0 - u * u).max(0.0).sqrt()))
    }

    /// Dense sample of the rough wall curve, for checks and plotting.
    pub fn sample_wall(&self, side: Side, n: usize) -> Vec<(Vector2<f64>, Vector2<f64>)> {
        let curve = &self.walls[match side {
            Side::Left => 0,
            Side::Right => 1,
        }];
        let u_max = curve.u_max(self.spec.wall_height);
        (0..n)
            .map(|i| {
                let u = u_max * i as f64 / (n - 1).max(1) as f64;
                let (smooth, _) = curve.smooth(u);
                (smooth, curve.point(u))
            })
            .collect()
    }

    /// Heightfield export: `z,x_left,x_right` with a metadata comment line.
    pub fn to_csv(&self, step: f64, metadata: &str) -> String {
        let mut out = String::new();
        let spec_json = serde_json::to_string(&self.spec).unwrap_or_default();
        let _ = writeln!(out, "# terrain {spec_json}; {metadata}");
        out.push_str("z,x_left,x_right\n");
        let n = (self.spec.wall_height / step).round() as usize;
        for i in 0..=n {
            let z = (i as f64 * step).min(self.spec.wall_height);
            let _ = writeln!(
                out,
                "{z:.6},{:.6},{:.6}",
                self.wall_x(z, Side::Left),
                self.wall_x(z, Side::Right)
            );
        }
        out
    }
}

/// Curriculum schedule: junction radius anneals linearly to zero while wall
/// roughness grows linearly to its maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CgclConfig {
    pub levels: u32,
    pub r_start: f64,
    pub roughness_max: f64,
}

impl Default for CgclConfig {
    fn default() -> Self {
        Self {
            levels: 10,
            r_start: 0.3,
            roughness_max: 0.03,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurriculumLevel {
    pub level: u32,
    pub r_of_level: f64,
    pub roughness_of_level: f64,
}

pub fn curriculum_params(level: u32, config: &CgclConfig) -> CurriculumLevel {
    let levels = config.levels.max(1);
    let level = level.min(levels);
    let frac = f64::from(level) / f64::from(levels);
    CurriculumLevel {
        level,
        r_of_level: config.r_start * (1.0 - frac),
        roughness_of_level: config.roughness_max * frac,
    }
}
