//! Small 3-vector helpers shared by the chain force field and the
//! structural metrics.

pub(crate) type V3 = [f64; 3];

#[inline]
pub(crate) fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn scale(a: V3, s: f64) -> V3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub(crate) fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn cross(a: V3, b: V3) -> V3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub(crate) fn norm(a: V3) -> f64 {
    dot(a, a).sqrt()
}

/// Angle at `j` between `i - j` and `k - j`, in `[0, pi]`.
pub(crate) fn angle(i: V3, j: V3, k: V3) -> f64 {
    let u = sub(i, j);
    let v = sub(k, j);
    // atan2 form stays accurate near 0 and pi where acos loses digits.
    norm(cross(u, v)).atan2(dot(u, v))
}

/// Signed torsion of the quadruplet, in `(-pi, pi]`; cis is 0, trans is pi.
pub(crate) fn dihedral(p0: V3, p1: V3, p2: V3, p3: V3) -> f64 {
    let b1 = sub(p1, p0);
    let b2 = sub(p2, p1);
    let b3 = sub(p3, p2);
    let n1 = cross(b1, b2);
    let n2 = cross(b2, b3);
    let y = norm(b2) * dot(b1, n2);
    let x = dot(n1, n2);
    let phi = y.atan2(x);
    if phi <= -std::f64::consts::PI {
        phi + 2.0 * std::f64::consts::PI
    } else {
        phi
    }
}
