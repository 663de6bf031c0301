//! Scene primitives: textured rectangles and axis-aligned boxes in a room.

use nalgebra::Vector3;
use rand::Rng;

/// Procedural albedo patterns evaluated at world-space points, so texture
/// frequency is tied to scene scale rather than image resolution.
#[derive(Debug, Clone, PartialEq)]
pub enum Texture {
    /// 3-D checkerboard with the given cell edge length.
    Checker { scale: f64, color_a: [f64; 3], color_b: [f64; 3] },
    /// Smooth sinusoidal blend along a world direction.
    Gradient { direction: [f64; 3], color_a: [f64; 3], color_b: [f64; 3] },
}

impl Texture {
    pub fn sample(&self, p: Vector3<f64>) -> [f64; 3] {
        match self {
            Texture::Checker { scale, color_a, color_b } => {
                let parity = (p.x / scale).floor() + (p.y / scale).floor() + (p.z / scale).floor();
                if (parity as i64).rem_euclid(2) == 0 {
                    *color_a
                } else {
                    *color_b
                }
            }
            Texture::Gradient { direction, color_a, color_b } => {
                let d = Vector3::new(direction[0], direction[1], direction[2]);
                let t = 0.5 + 0.5 * p.dot(&d).sin();
                [
                    color_a[0] + t * (color_b[0] - color_a[0]),
                    color_a[1] + t * (color_b[1] - color_a[1]),
                    color_a[2] + t * (color_b[2] - color_a[2]),
                ]
            }
        }
    }
}

/// A finite textured rectangle spanned by two orthogonal edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Rect {
    pub origin: Vector3<f64>,
    pub edge_u: Vector3<f64>,
    pub edge_v: Vector3<f64>,
    pub texture: Texture,
}

/// A textured axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxPrim {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
    pub texture: Texture,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    Rect(Rect),
    Box(BoxPrim),
}

const RAY_EPS: f64 = 1e-9;

impl Rect {
    /// Distance along the unit ray to the hit, if any.
    fn hit(&self, origin: Vector3<f64>, dir: Vector3<f64>) -> Option<f64> {
        let n = self.edge_u.cross(&self.edge_v);
        let denom = dir.dot(&n);
        if denom.abs() < 1e-12 {
            return None;
        }
        let s = (self.origin - origin).dot(&n) / denom;
        if s <= RAY_EPS {
            return None;
        }
        let q = origin + dir * s - self.origin;
        let u = q.dot(&self.edge_u) / self.edge_u.norm_squared();
        let v = q.dot(&self.edge_v) / self.edge_v.norm_squared();
        ((0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&v)).then_some(s)
    }

    /// Distance from a point to the rectangle (edges orthogonal by
    /// construction, so clamped local coordinates give the closest point).
    fn distance(&self, p: Vector3<f64>) -> f64 {
        let q = p - self.origin;
        let u = (q.dot(&self.edge_u) / self.edge_u.norm_squared()).clamp(0.0, 1.0);
        let v = (q.dot(&self.edge_v) / self.edge_v.norm_squared()).clamp(0.0, 1.0);
        (self.origin + self.edge_u * u + self.edge_v * v - p).norm()
    }
}

impl BoxPrim {
    /// Slab intersection; from inside the box, the exit face counts.
    fn hit(&self, origin: Vector3<f64>, dir: Vector3<f64>) -> Option<f64> {
        let mut t_lo = f64::NEG_INFINITY;
        let mut t_hi = f64::INFINITY;
        for axis in 0..3 {
            let (o, d) = (origin[axis], dir[axis]);
            if d.abs() < 1e-12 {
                if o < self.min[axis] || o > self.max[axis] {
                    return None;
                }
                continue;
            }
            let t1 = (self.min[axis] - o) / d;
            let t2 = (self.max[axis] - o) / d;
            t_lo = t_lo.max(t1.min(t2));
            t_hi = t_hi.min(t1.max(t2));
        }
        if t_lo > t_hi || t_hi <= RAY_EPS {
            return None;
        }
        Some(if t_lo > RAY_EPS { t_lo } else { t_hi })
    }

    /// Distance to the box surface (positive inside as well).
    fn distance(&self, p: Vector3<f64>) -> f64 {
        let mut outside = 0.0f64;
        let mut inside = f64::INFINITY;
        for axis in 0..3 {
            let below = self.min[axis] - p[axis];
            let above = p[axis] - self.max[axis];
            outside += below.max(0.0).powi(2) + above.max(0.0).powi(2);
            inside = inside.min((-below).min(-above));
        }
        if outside > 0.0 {
            outside.sqrt()
        } else {
            inside.max(0.0)
        }
    }

    pub fn contains(&self, p: Vector3<f64>, margin: f64) -> bool {
        (0..3).all(|a| p[a] > self.min[a] - margin && p[a] < self.max[a] + margin)
    }
}

impl Primitive {
    pub fn hit(&self, origin: Vector3<f64>, dir: Vector3<f64>) -> Option<f64> {
        match self {
            Primitive::Rect(r) => r.hit(origin, dir),
            Primitive::Box(b) => b.hit(origin, dir),
        }
    }

    pub fn texture(&self) -> &Texture {
        match self {
            Primitive::Rect(r) => &r.texture,
            Primitive::Box(b) => &b.texture,
        }
    }

    pub fn distance(&self, p: Vector3<f64>) -> f64 {
        match self {
            Primitive::Rect(r) => r.distance(p),
            Primitive::Box(b) => b.distance(p),
        }
    }
}

/// A procedural room: floor, back and side walls, optionally more walls and
/// boxes, everything textured.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub primitives: Vec<Primitive>,
    /// Room bounding box (min, max).
    pub extent: (Vector3<f64>, Vector3<f64>),
}

/// Room dimensions (y points down, z away from the default camera region).
const ROOM_MIN: [f64; 3] = [-3.5, -2.0, -2.0];
const ROOM_MAX: [f64; 3] = [3.5, 1.5, 5.5];

impl Scene {
    /// Nearest hit over all primitives: `(primitive index, ray depth)`.
    pub fn cast(&self, origin: Vector3<f64>, dir: Vector3<f64>) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, prim) in self.primitives.iter().enumerate() {
            if let Some(s) = prim.hit(origin, dir) {
                if best.map_or(true, |(_, bs)| s < bs) {
                    best = Some((i, s));
                }
            }
        }
        best
    }

    /// Distance from a point to the nearest primitive surface.
    pub fn surface_distance(&self, p: Vector3<f64>) -> f64 {
        self.primitives.iter().map(|pr| pr.distance(p)).fold(f64::INFINITY, f64::min)
    }

    /// True when the point is inside (or within `margin` of) a solid box.
    pub fn inside_solid(&self, p: Vector3<f64>, margin: f64) -> bool {
        self.primitives.iter().any(|pr| match pr {
            Primitive::Box(b) => b.contains(p, margin),
            Primitive::Rect(_) => false,
        })
    }
}

fn random_color(rng: &mut impl Rng) -> [f64; 3] {
    [rng.gen_range(0.15..0.95), rng.gen_range(0.15..0.95), rng.gen_range(0.15..0.95)]
}

fn random_texture(rng: &mut impl Rng) -> Texture {
    if rng.gen_bool(0.5) {
        Texture::Checker {
            scale: rng.gen_range(0.5..1.5),
            color_a: random_color(rng),
            color_b: random_color(rng),
        }
    } else {
        Texture::Gradient {
            direction: [
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-1.5..1.5),
            ],
            color_a: random_color(rng),
            color_b: random_color(rng),
        }
    }
}

/// Generates a room scene with between 3 and `3 * complexity` primitives:
/// always floor + back wall + side wall, then (with growing complexity) the
/// remaining walls, the ceiling, and boxes standing on the floor.
pub fn generate_scene(rng: &mut impl Rng, complexity: usize) -> Scene {
    assert!(complexity >= 1, "complexity must be at least 1");
    let lo = Vector3::new(ROOM_MIN[0], ROOM_MIN[1], ROOM_MIN[2]);
    let hi = Vector3::new(ROOM_MAX[0], ROOM_MAX[1], ROOM_MAX[2]);
    let size = hi - lo;

    let mut primitives = vec![
        // Floor (y = max, since y points down).
        Primitive::Rect(Rect {
            origin: Vector3::new(lo.x, hi.y, lo.z),
            edge_u: Vector3::new(size.x, 0.0, 0.0),
            edge_v: Vector3::new(0.0, 0.0, size.z),
            texture: random_texture(rng),
        }),
        // Back wall (z = max).
        Primitive::Rect(Rect {
            origin: Vector3::new(lo.x, lo.y, hi.z),
            edge_u: Vector3::new(size.x, 0.0, 0.0),
            edge_v: Vector3::new(0.0, size.y, 0.0),
            texture: random_texture(rng),
        }),
        // Side wall (x = max).
        Primitive::Rect(Rect {
            origin: Vector3::new(hi.x, lo.y, lo.z),
            edge_u: Vector3::new(0.0, size.y, 0.0),
            edge_v: Vector3::new(0.0, 0.0, size.z),
            texture: random_texture(rng),
        }),
    ];

    let budget = rng.gen_range(3..=3 * complexity);
    while primitives.len() < budget {
        match primitives.len() {
            3 => primitives.push(Primitive::Rect(Rect {
                // Other side wall (x = min).
                origin: Vector3::new(lo.x, lo.y, lo.z),
                edge_u: Vector3::new(0.0, size.y, 0.0),
                edge_v: Vector3::new(0.0, 0.0, size.z),
                texture: random_texture(rng),
            })),
            4 => primitives.push(Primitive::Rect(Rect {
                // Ceiling (y = min).
                origin: Vector3::new(lo.x, lo.y, lo.z),
                edge_u: Vector3::new(size.x, 0.0, 0.0),
                edge_v: Vector3::new(0.0, 0.0, size.z),
                texture: random_texture(rng),
            })),
            _ => {
                // A box standing on the floor, in front of the camera region.
                let half = Vector3::new(
                    rng.gen_range(0.25..0.7),
                    rng.gen_range(0.25..0.9),
                    rng.gen_range(0.25..0.7),
                );
                let center = Vector3::new(
                    rng.gen_range(-2.2..2.2),
                    hi.y - half.y,
                    rng.gen_range(1.0..4.5),
                );
                primitives.push(Primitive::Box(BoxPrim {
                    min: center - half,
                    max: center + half,
                    texture: random_texture(rng),
                }));
            }
        }
    }

    Scene { primitives, extent: (lo, hi) }
}
