//! Static world geometry: box obstacles above a flat ground plane.
//!
//! Obstacles are closed axis-aligned boxes. Touching counts as contact for
//! every query in this module.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vec3};

/// Current version of the world description file.
pub const WORLD_FILE_VERSION: u32 = 1;

/// Default proximity-sensor range on the hook, in meters.
pub const DEFAULT_LIDAR_RANGE: f64 = 5.0;

/// Closed axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self> {
        if !(min.iter().all(|v| v.is_finite()) && max.iter().all(|v| v.is_finite())) {
            return Err(Error::Geometry("box corners must be finite".into()));
        }
        if (0..3).any(|i| min[i] > max[i]) {
            return Err(Error::Geometry(format!(
                "box min corner {:?} exceeds max corner {:?}",
                min.as_slice(),
                max.as_slice()
            )));
        }
        Ok(Self { min, max })
    }

    pub fn from_center(center: Vec3, half_extents: Vec3) -> Result<Self> {
        Self::new(center - half_extents, center + half_extents)
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| self.min[i] <= p[i] && p[i] <= self.max[i])
    }

    /// Closest point of the box to `p`.
    pub fn clamp(&self, p: &Vec3) -> Vec3 {
        Vec3::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
            p.z.clamp(self.min.z, self.max.z),
        )
    }

    /// Euclidean distance from `p` to the solid box (zero inside).
    pub fn distance(&self, p: &Vec3) -> f64 {
        (p - self.clamp(p)).norm()
    }

    pub fn intersects(&self, other: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] <= other.max[i] && other.min[i] <= self.max[i])
    }

    /// Smallest box enclosing both `a` and `b`, grown by `half_extents`.
    pub fn swept(a: &Vec3, b: &Vec3, half_extents: &Vec3) -> Aabb {
        Aabb {
            min: a.inf(b) - half_extents,
            max: a.sup(b) + half_extents,
        }
    }

    /// Slab test for the closed segment `a`–`b`.
    pub fn intersects_segment(&self, a: &Vec3, b: &Vec3) -> bool {
        let d = b - a;
        let mut t_enter = 0.0_f64;
        let mut t_exit = 1.0_f64;
        for i in 0..3 {
            if d[i] == 0.0 {
                if a[i] < self.min[i] || a[i] > self.max[i] {
                    return false;
                }
                continue;
            }
            let inv = 1.0 / d[i];
            let mut t0 = (self.min[i] - a[i]) * inv;
            let mut t1 = (self.max[i] - a[i]) * inv;
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            t_enter = t_enter.max(t0);
            t_exit = t_exit.min(t1);
            if t_enter > t_exit {
                return false;
            }
        }
        true
    }
}

/// Obstacle set plus ground plane. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    obstacles: Vec<Aabb>,
    ground_height: f64,
}

impl Default for World {
    fn default() -> Self {
        Self::empty()
    }
}

impl World {
    pub fn new(obstacles: Vec<Aabb>, ground_height: f64) -> Result<Self> {
        if !ground_height.is_finite() {
            return Err(Error::Geometry("ground height must be finite".into()));
        }
        if let Some((i, b)) = obstacles
            .iter()
            .enumerate()
            .find(|(_, b)| b.min.z < ground_height)
        {
            return Err(Error::Geometry(format!(
                "obstacle {i} extends below ground ({} < {ground_height})",
                b.min.z
            )));
        }
        Ok(Self {
            obstacles,
            ground_height,
        })
    }

    pub fn empty() -> Self {
        Self {
            obstacles: Vec::new(),
            ground_height: 0.0,
        }
    }

    pub fn obstacles(&self) -> &[Aabb] {
        &self.obstacles
    }

    pub fn ground_height(&self) -> f64 {
        self.ground_height
    }

    /// Distance from `p` to the nearest obstacle; `f64::INFINITY` when there are none.
    /// The ground plane is not an obstacle for this query.
    pub fn min_distance(&self, p: &Vec3) -> f64 {
        self.obstacles
            .iter()
            .map(|b| b.distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Binary proximity reading of a sensor mounted at `hook_pos`.
    pub fn lidar_flag(&self, hook_pos: &Vec3, range: f64) -> u8 {
        debug_assert!(range > 0.0, "lidar range must be positive");
        u8::from(self.min_distance(hook_pos) <= range)
    }

    /// Conservative contact test for a payload box moving from `a` to `b`.
    pub fn collides(&self, a: &Vec3, b: &Vec3, payload_half_extents: &Vec3) -> bool {
        if a.z < self.ground_height || b.z < self.ground_height {
            return true;
        }
        let swept = Aabb::swept(a, b, payload_half_extents);
        self.obstacles.iter().any(|o| o.intersects(&swept))
    }

    /// True if the straight segment `a`–`b` touches any obstacle.
    pub fn segment_blocked(&self, a: &Vec3, b: &Vec3) -> bool {
        self.obstacles.iter().any(|o| o.intersects_segment(a, b))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: WorldFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("world file: {e}")))?;
        file.into_world()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::file(path, e))
    }

    pub fn to_toml_string(&self) -> String {
        let file = WorldFile {
            version: WORLD_FILE_VERSION,
            ground_height: self.ground_height,
            obstacles: self
                .obstacles
                .iter()
                .map(|b| [b.min.x, b.min.y, b.min.z, b.max.x, b.max.y, b.max.z])
                .collect(),
        };
        toml::to_string(&file).expect("world file serializes")
    }
}

/// On-disk layout: `version`, `ground_height`, and `obstacles` as rows of
/// six numbers (min x y z, max x y z).
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorldFile {
    version: u32,
    #[serde(default)]
    ground_height: f64,
    #[serde(default)]
    obstacles: Vec<[f64; 6]>,
}

impl WorldFile {
    fn into_world(self) -> Result<World> {
        if self.version != WORLD_FILE_VERSION {
            return Err(Error::Config(format!(
                "unsupported world file version {} (expected {WORLD_FILE_VERSION})",
                self.version
            )));
        }
        let obstacles = self
            .obstacles
            .iter()
            .map(|r| Aabb::new(Vec3::new(r[0], r[1], r[2]), Vec3::new(r[3], r[4], r[5])))
            .collect::<Result<Vec<_>>>()?;
        World::new(obstacles, self.ground_height)
    }
}
