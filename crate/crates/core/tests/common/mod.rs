#![allow(dead_code)]

use rand::Rng;
use rand_distr::StandardNormal;

pub type Mat3 = [[f64; 3]; 3];

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn unit_from(v: [f64; 3]) -> [f64; 3] {
    let n = norm(&v);
    [v[0] / n, v[1] / n, v[2] / n]
}

pub fn random_unit<R: Rng>(rng: &mut R) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        if norm(&v) > 1e-3 {
            return unit_from(v);
        }
    }
}

/// Rotation matrix of a unit quaternion.
pub fn rotation_from_quaternion(q: [f64; 4]) -> Mat3 {
    let n = norm(&q);
    let [w, x, y, z] = [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

pub fn random_rotation<R: Rng>(rng: &mut R) -> Mat3 {
    rotation_from_quaternion([
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    ])
}

pub fn rotate(r: &Mat3, v: &[f64]) -> [f64; 3] {
    [dot(&r[0], v), dot(&r[1], v), dot(&r[2], v)]
}

/// Great-circle angle by a formula independent of the library's.
pub fn angle(a: &[f64], b: &[f64]) -> f64 {
    let c = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    norm(&c).atan2(dot(a, b))
}

/// Point at angle `theta` from `center` in a uniformly random direction.
pub fn point_at_angle<R: Rng>(rng: &mut R, center: &[f64; 3], theta: f64) -> [f64; 3] {
    let mut d = random_unit(rng);
    let c = dot(&d, center);
    for i in 0..3 {
        d[i] -= c * center[i];
    }
    let d = unit_from(d);
    let mut p = [0.0; 3];
    for i in 0..3 {
        p[i] = theta.cos() * center[i] + theta.sin() * d[i];
    }
    p
}

/// Points drawn uniformly (by area) from the cap of angular radius `radius`.
pub fn cap_points<R: Rng>(rng: &mut R, center: &[f64; 3], radius: f64, n: usize) -> Vec<f64> {
    let zmin = radius.cos();
    let mut out = Vec::with_capacity(3 * n);
    for _ in 0..n {
        let z: f64 = rng.random_range(zmin..1.0);
        out.extend_from_slice(&point_at_angle(rng, center, z.acos()));
    }
    out
}
