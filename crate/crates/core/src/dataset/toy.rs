use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::geom::{Point3, RigidTransform, TriangleMesh, Vector3};
use crate::rng::stream_rng;
use crate::{Error, Result};

/// A box-shaped process: `length` along its main direction, cross-section
/// half sizes `half_width` and `half_height`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessSpec {
    pub length: f64,
    pub half_width: f64,
    pub half_height: f64,
}

/// Parameters of one procedural vertebra, in mm around a local origin that
/// sits between the anterior body and the posterior arch.
///
/// The surface is the star hull (about the origin) of an ellipsoidal body,
/// a posterior arch block, a spinous process pointing along `+y` and two
/// transverse processes along `±x`. Every primitive contains the origin, so
/// the union is star-shaped and the radial icosphere mesh is an embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyVertebraSpec {
    pub body_radii: [f64; 3],
    /// Half width (x), posterior depth (y), half height (z).
    pub arch: [f64; 3],
    pub spinous: ProcessSpec,
    pub transverse: ProcessSpec,
    /// Relative noise amplitude applied to every size parameter.
    pub jitter: f64,
    pub seed: u64,
    pub subdivisions: u32,
}

impl Default for ToyVertebraSpec {
    fn default() -> Self {
        Self {
            body_radii: [20.0, 15.0, 12.0],
            arch: [12.0, 16.0, 10.0],
            spinous: ProcessSpec {
                length: 32.0,
                half_width: 3.0,
                half_height: 6.0,
            },
            transverse: ProcessSpec {
                length: 28.0,
                half_width: 4.0,
                half_height: 5.0,
            },
            jitter: 0.15,
            seed: 0,
            subdivisions: 4,
        }
    }
}

const MAX_SUBDIVISIONS: u32 = 6;

impl ToyVertebraSpec {
    fn sizes(&self) -> [f64; 12] {
        let [bx, by, bz] = self.body_radii;
        let [ax, ay, az] = self.arch;
        let s = self.spinous;
        let t = self.transverse;
        [bx, by, bz, ax, ay, az, s.length, s.half_width, s.half_height, t.length, t.half_width, t.half_height]
    }

    fn from_sizes(&self, v: [f64; 12]) -> Self {
        Self {
            body_radii: [v[0], v[1], v[2]],
            arch: [v[3], v[4], v[5]],
            spinous: ProcessSpec {
                length: v[6],
                half_width: v[7],
                half_height: v[8],
            },
            transverse: ProcessSpec {
                length: v[9],
                half_width: v[10],
                half_height: v[11],
            },
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes().iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidSpec("all radii and sizes must be finite and > 0".into()));
        }
        if !(0.0..=0.5).contains(&self.jitter) {
            return Err(Error::InvalidSpec(format!("jitter {} outside [0, 0.5]", self.jitter)));
        }
        if self.subdivisions > MAX_SUBDIVISIONS {
            return Err(Error::InvalidSpec(format!(
                "subdivisions {} exceeds {MAX_SUBDIVISIONS}",
                self.subdivisions
            )));
        }
        Ok(())
    }

    /// These parameters with jitter applied (deterministic in `seed`).
    pub fn realize(&self) -> Result<Self> {
        self.validate()?;
        let mut rng = stream_rng(self.seed, "toy-vertebra");
        let mut v = self.sizes();
        for x in v.iter_mut() {
            let u: f64 = rng.gen_range(-1.0..=1.0);
            *x *= 1.0 + self.jitter * u;
        }
        let out = Self {
            jitter: 0.0,
            ..self.from_sizes(v)
        };
        out.validate()?;
        Ok(out)
    }
}

enum Primitive {
    Ellipsoid { center: Vector3, radii: Vector3 },
    Box { lo: Vector3, hi: Vector3 },
}

impl Primitive {
    /// Distance from the origin to the boundary along unit `u`. The origin
    /// lies inside every primitive, so there is exactly one exit.
    fn exit(&self, u: &Vector3) -> f64 {
        match self {
            Primitive::Ellipsoid { center, radii } => {
                // |(t u - c) / r|^2 = 1
                let d = u.component_div(radii);
                let c = center.component_div(radii);
                let a = d.norm_squared();
                let b = -2.0 * d.dot(&c);
                let cc = c.norm_squared() - 1.0;
                (-b + (b * b - 4.0 * a * cc).sqrt()) / (2.0 * a)
            }
            Primitive::Box { lo, hi } => {
                let mut t = f64::INFINITY;
                for a in 0..3 {
                    if u[a] > 0.0 {
                        t = t.min(hi[a] / u[a]);
                    } else if u[a] < 0.0 {
                        t = t.min(lo[a] / u[a]);
                    }
                }
                t
            }
        }
    }
}

fn primitives(s: &ToyVertebraSpec) -> Vec<Primitive> {
    let [bx, by, bz] = s.body_radii;
    let [ax, ay, az] = s.arch;
    let sp = s.spinous;
    let tp = s.transverse;
    vec![
        Primitive::Ellipsoid {
            center: Vector3::new(0.0, -0.9 * by, 0.0),
            radii: Vector3::new(bx, by, bz),
        },
        Primitive::Box {
            lo: Vector3::new(-ax, -0.25 * ay, -az),
            hi: Vector3::new(ax, ay, az),
        },
        Primitive::Box {
            lo: Vector3::new(-sp.half_width, -sp.half_width, -sp.half_height),
            hi: Vector3::new(sp.half_width, sp.length, sp.half_height),
        },
        Primitive::Box {
            lo: Vector3::new(-tp.half_width, -tp.half_width, -tp.half_height),
            hi: Vector3::new(tp.length, tp.half_width, tp.half_height),
        },
        Primitive::Box {
            lo: Vector3::new(-tp.length, -tp.half_width, -tp.half_height),
            hi: Vector3::new(tp.half_width, tp.half_width, tp.half_height),
        },
    ]
}

/// Unit icosphere: icosahedron with `subdivisions` rounds of 1-to-4 splits.
pub fn icosphere(subdivisions: u32) -> (Vec<Vector3>, Vec<[usize; 3]>) {
    let p = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vector3> = [
        [-1.0, p, 0.0],
        [1.0, p, 0.0],
        [-1.0, -p, 0.0],
        [1.0, -p, 0.0],
        [0.0, -1.0, p],
        [0.0, 1.0, p],
        [0.0, -1.0, -p],
        [0.0, 1.0, -p],
        [p, 0.0, -1.0],
        [p, 0.0, 1.0],
        [-p, 0.0, -1.0],
        [-p, 0.0, 1.0],
    ]
    .iter()
    .map(|v| Vector3::from(*v).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache = std::collections::HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vector3>| -> usize {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                verts.push((verts[a] + verts[b]).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    (verts, faces)
}

/// Watertight toy vertebra centred on its local origin.
pub fn generate_toy_vertebra(spec: &ToyVertebraSpec) -> Result<TriangleMesh> {
    let s = spec.realize()?;
    let prims = primitives(&s);
    let (dirs, faces) = icosphere(s.subdivisions);
    let verts = dirs
        .iter()
        .map(|u| {
            let r = prims.iter().map(|p| p.exit(u)).fold(0.0, f64::max);
            Point3::from(u * r)
        })
        .collect();
    let mesh = TriangleMesh::new(verts, faces)?;
    if mesh.faces().len() != 20 * 4usize.pow(s.subdivisions) {
        return Err(Error::InvalidSpec("degenerate faces in toy mesh".into()));
    }
    Ok(mesh)
}

/// A stack of toy vertebrae along `+z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToySpineConfig {
    pub levels: usize,
    /// Nominal centroid spacing along z (mm).
    pub spacing: f64,
    /// Random anteroposterior offset per level (mm, uniform in ±value).
    pub sagittal_wobble: f64,
    pub vertebra: ToyVertebraSpec,
}

impl Default for ToySpineConfig {
    fn default() -> Self {
        Self {
            levels: 5,
            spacing: 30.0,
            sagittal_wobble: 2.0,
            vertebra: ToyVertebraSpec::default(),
        }
    }
}

/// Level meshes (already placed in the spine frame) for toy spine `index`.
pub fn generate_toy_spine(cfg: &ToySpineConfig, seed: u64, index: usize) -> Result<Vec<TriangleMesh>> {
    if cfg.levels == 0 || !(cfg.spacing > 0.0) || !(cfg.sagittal_wobble >= 0.0) {
        return Err(Error::InvalidSpec("toy spine needs levels >= 1, spacing > 0, wobble >= 0".into()));
    }
    let mut rng = stream_rng(seed, &format!("toy-spine-{index}"));
    (0..cfg.levels)
        .map(|k| {
            let spec = ToyVertebraSpec {
                seed: rng.gen(),
                ..cfg.vertebra.clone()
            };
            let dy = if cfg.sagittal_wobble > 0.0 {
                rng.gen_range(-cfg.sagittal_wobble..=cfg.sagittal_wobble)
            } else {
                0.0
            };
            let t = RigidTransform::translation(Vector3::new(0.0, dy, k as f64 * cfg.spacing));
            Ok(generate_toy_vertebra(&spec)?.transformed(&t))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    /// Independent topology audit: every undirected edge shared by exactly
    /// two faces with opposite orientation, V - E + F computed from scratch.
    fn audit(mesh: &TriangleMesh) -> (bool, i64) {
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for f in mesh.faces() {
            for k in 0..3 {
                *directed.entry((f[k], f[(k + 1) % 3])).or_default() += 1;
            }
        }
        let manifold = directed
            .iter()
            .all(|(&(a, b), &n)| n == 1 && directed.get(&(b, a)) == Some(&1));
        let e = directed.len() as i64 / 2;
        let mut used = vec![false; mesh.vertices().len()];
        mesh.faces().iter().flatten().for_each(|&v| used[v] = true);
        let v = used.iter().filter(|u| **u).count() as i64;
        (manifold, v - e + mesh.faces().len() as i64)
    }

    #[test]
    fn zero_jitter_is_bit_exact() {
        let spec = ToyVertebraSpec {
            jitter: 0.0,
            seed: 9,
            ..Default::default()
        };
        let a = generate_toy_vertebra(&spec).unwrap();
        let b = generate_toy_vertebra(&spec).unwrap();
        assert_eq!(a.vertices(), b.vertices());
        assert_eq!(a.faces(), b.faces());
    }

    #[test]
    fn tiny_body_moves_centroid_posterior() {
        let base = ToyVertebraSpec {
            jitter: 0.0,
            subdivisions: 3,
            ..Default::default()
        };
        let tiny = ToyVertebraSpec {
            body_radii: [0.001; 3],
            ..base.clone()
        };
        let c0 = generate_toy_vertebra(&base).unwrap().surface_centroid();
        let c1 = generate_toy_vertebra(&tiny).unwrap().surface_centroid();
        assert!(c1.y > c0.y + 5.0, "{} vs {}", c1.y, c0.y);
        assert!(c1.y > 0.0);
    }

    #[test]
    fn fifty_random_specs_are_watertight() {
        for seed in 0..50 {
            let spec = ToyVertebraSpec {
                seed,
                jitter: 0.5,
                subdivisions: 3,
                ..Default::default()
            };
            let m = generate_toy_vertebra(&spec).unwrap();
            let (manifold, chi) = audit(&m);
            assert!(manifold, "seed {seed}");
            assert_eq!(chi, 2, "seed {seed}");
            assert!(m.is_watertight());
            assert!(m.signed_volume() > 0.0);
        }
    }

    #[test]
    fn body_is_anterior_and_arch_posterior() {
        let m = generate_toy_vertebra(&ToyVertebraSpec::default()).unwrap();
        let (lo, hi) = m.bounds();
        assert!(lo.y < -20.0 && hi.y > 30.0);
    }

    #[test]
    fn invalid_specs_rejected() {
        let bad = [
            ToyVertebraSpec {
                jitter: 0.6,
                ..Default::default()
            },
            ToyVertebraSpec {
                body_radii: [0.0, 1.0, 1.0],
                ..Default::default()
            },
            ToyVertebraSpec {
                arch: [1.0, f64::NAN, 1.0],
                ..Default::default()
            },
        ];
        for s in bad {
            assert!(matches!(generate_toy_vertebra(&s), Err(Error::InvalidSpec(_))));
        }
    }

    #[test]
    fn spine_levels_are_separated() {
        let cfg = ToySpineConfig::default();
        let levels = generate_toy_spine(&cfg, 1, 0).unwrap();
        assert_eq!(levels.len(), 5);
        for w in levels.windows(2) {
            assert!(w[0].bounds().1.z < w[1].bounds().0.z);
        }
    }
}
