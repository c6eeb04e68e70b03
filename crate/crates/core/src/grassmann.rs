//! Tangent 2-planes, the generic-plane operator `G`, and Grassmannian scans.
//!
//! For a plane `P` with `g`-orthonormal basis `(e1, e2)` and unit normal `n`,
//! write `v(α) = cos α e1 + sin α e2`. Then
//!
//! * `g(R(w,v)v, n) = Σ_a w_a q_R(α)_a` with `q_R(α)_a = R(e_a, v, v, n)`,
//! * `(∇_v R)(w,v,v,n) = Σ_a w_a q_∇(α)_a` with `q_∇(α)_a = (∇_v R)(e_a, v, v, n)`.
//!
//! The maximum over unit `w ∈ P` of either expression is `|q(α)|`, so `G(P)`
//! reduces to a one-dimensional maximization over `α ∈ [0, π)`.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::charts::{ChartMetric, Point3};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat3, Vec3};
use crate::tensor::{curvature_at, CurvaturePoint};

/// A `g`-orthonormal pair spanning a plane, plus its `g`-unit normal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TangentPlane {
    pub base: Point3,
    pub e1: Vec3,
    pub e2: Vec3,
    pub n: Vec3,
}

impl TangentPlane {
    /// Euclidean unit normal of the coordinate subspace spanned by the plane.
    pub fn subspace_normal(&self) -> Vec3 {
        let c = linalg::cross(&self.e1, &self.e2);
        linalg::scale(&c, 1.0 / linalg::norm(&c))
    }

    /// Largest deviation from the orthonormality conditions under `g`.
    pub fn frame_residual(&self, g: &Mat3) -> f64 {
        let v = [self.e1, self.e2, self.n];
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((linalg::inner(g, &v[i], &v[j]) - target).abs());
            }
        }
        worst
    }
}

/// Gram–Schmidt of `(u, w)` under `g(p)`; the normal is `g⁻¹(e1 × e2)`
/// normalized, which makes `det(e1, e2, n) > 0`.
pub fn orthonormal_plane(metric: &ChartMetric, p: &Point3, u: &Vec3, w: &Vec3) -> Result<TangentPlane> {
    let jet = crate::charts::metric_jet(metric, p)?;
    plane_from_g(&jet.g, *p, u, w)
}

pub(crate) fn plane_from_g(g: &Mat3, base: Point3, u: &Vec3, w: &Vec3) -> Result<TangentPlane> {
    let uu = linalg::inner(g, u, u);
    let ww = linalg::inner(g, w, w);
    let uw = linalg::inner(g, u, w);
    if !(uu > 0.0) || !(ww > 0.0) || !(uu * ww - uw * uw > 1e-24 * uu * ww) {
        return Err(Error::Degenerate(format!(
            "vectors {u:?} and {w:?} do not span a plane"
        )));
    }
    let e1 = linalg::scale(u, 1.0 / uu.sqrt());
    let mut r = linalg::sub(w, &linalg::scale(&e1, linalg::inner(g, w, &e1)));
    // A second pass keeps the residual at round-off for nearly parallel inputs.
    r = linalg::sub(&r, &linalg::scale(&e1, linalg::inner(g, &r, &e1)));
    let e2 = linalg::scale(&r, 1.0 / linalg::inner(g, &r, &r).sqrt());
    let ginv = linalg::inverse(g).ok_or_else(|| Error::Singular { point: base.0, det: linalg::det(g) })?;
    let m = linalg::mat_vec(&ginv, &linalg::cross(&e1, &e2));
    let n = linalg::scale(&m, 1.0 / linalg::inner(g, &m, &m).sqrt());
    Ok(TangentPlane { base, e1, e2, n })
}

/// Plane whose coordinate subspace is the Euclidean complement of `nu`.
pub fn plane_with_normal(g: &Mat3, base: Point3, nu: &Vec3) -> Result<TangentPlane> {
    let (u, w) = complement_basis(nu)?;
    plane_from_g(g, base, &u, &w)
}

fn complement_basis(nu: &Vec3) -> Result<(Vec3, Vec3)> {
    let len = linalg::norm(nu);
    if !(len > 0.0) || !len.is_finite() {
        return Err(Error::Degenerate(format!("normal {nu:?} has no direction")));
    }
    let nu = linalg::scale(nu, 1.0 / len);
    // Cross with the coordinate axis least aligned with nu.
    let axis = (0..3)
        .min_by(|&a, &b| nu[a].abs().total_cmp(&nu[b].abs()))
        .unwrap_or(0);
    let mut e = [0.0; 3];
    e[axis] = 1.0;
    let u = linalg::cross(&nu, &e);
    let u = linalg::scale(&u, 1.0 / linalg::norm(&u));
    let w = linalg::cross(&nu, &u);
    Ok((u, w))
}

/// `R(w, v)v` as a coordinate vector.
pub fn jacobi_apply(c: &CurvaturePoint, v: &Vec3, w: &Vec3) -> Vec3 {
    // Summing over i < j with the wedge w∧v makes R(v, v)v vanish exactly.
    let mut lowered = [0.0; 3];
    for i in 0..3 {
        for j in (i + 1)..3 {
            let wedge = w[i] * v[j] - w[j] * v[i];
            if wedge == 0.0 {
                continue;
            }
            for (t, l) in lowered.iter_mut().enumerate() {
                let rk: f64 = (0..3).map(|k| c.r[i][j][k][t] * v[k]).sum();
                *l += wedge * rk;
            }
        }
    }
    linalg::mat_vec(&c.ginv, &lowered)
}

/// Which term of the maximum realizes `G`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Curvature,
    Derivative,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GenericScore {
    pub value: f64,
    pub alpha_star: f64,
    pub beta_star: f64,
    pub branch: Branch,
}

/// Coefficients of `q_R` and `q_∇` in the plane basis.
///
/// `r[a][b][c] = R(e_a, e_b, e_c, n)` and `d[m][a][b][c] = (∇_{e_m}R)(e_a, e_b, e_c, n)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneCoefficients {
    pub r: [[[f64; 2]; 2]; 2],
    pub d: [[[[f64; 2]; 2]; 2]; 2],
}

impl PlaneCoefficients {
    pub fn new(c: &CurvaturePoint, plane: &TangentPlane) -> Self {
        let e = [plane.e1, plane.e2];
        let n = &plane.n;
        let mut r = [[[0.0; 2]; 2]; 2];
        let mut d = [[[[0.0; 2]; 2]; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                for cc in 0..2 {
                    r[a][b][cc] = c.r_apply(&e[a], &e[b], &e[cc], n);
                    for m in 0..2 {
                        d[m][a][b][cc] = c.cov_r_apply(&e[m], &e[a], &e[b], &e[cc], n);
                    }
                }
            }
        }
        Self { r, d }
    }

    /// `r` symmetrized over its two `v` slots: `[a][b][c]`, symmetric in `(b, c)`.
    pub fn r_sym(&self) -> [[[f64; 2]; 2]; 2] {
        let mut out = [[[0.0; 2]; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    out[a][b][c] = 0.5 * (self.r[a][b][c] + self.r[a][c][b]);
                }
            }
        }
        out
    }

    /// `d` symmetrized over its three `v` slots: `[a][m][b][c]`, symmetric in `(m, b, c)`.
    pub fn d_sym(&self) -> [[[[f64; 2]; 2]; 2]; 2] {
        let mut out = [[[[0.0; 2]; 2]; 2]; 2];
        let d = &self.d;
        for a in 0..2 {
            for m in 0..2 {
                for b in 0..2 {
                    for c in 0..2 {
                        out[a][m][b][c] = (d[m][a][b][c]
                            + d[m][a][c][b]
                            + d[b][a][m][c]
                            + d[b][a][c][m]
                            + d[c][a][m][b]
                            + d[c][a][b][m])
                            / 6.0;
                    }
                }
            }
        }
        out
    }

    /// `q_R(α)`, `q_∇(α)` and their first two `α`-derivatives.
    fn forms(&self, alpha: f64) -> ([Vec2; 3], [Vec2; 3]) {
        let (s, c) = alpha.sin_cos();
        let v = [c, s];
        let dv = [-s, c];
        let mut qr = [[0.0; 2]; 3];
        let mut qd = [[0.0; 2]; 3];
        for a in 0..2 {
            let mut q2 = [0.0; 3];
            let mut q3 = [0.0; 3];
            for b in 0..2 {
                for cc in 0..2 {
                    let rr = 0.5 * (self.r[a][b][cc] + self.r[a][cc][b]);
                    q2[0] += rr * v[b] * v[cc];
                    q2[1] += 2.0 * rr * v[b] * dv[cc];
                    q2[2] += 2.0 * rr * (dv[b] * dv[cc] - v[b] * v[cc]);
                    for m in 0..2 {
                        let t = self.d[m][a][b][cc];
                        let vvv = v[m] * v[b] * v[cc];
                        // Derivatives of the cubic use the unsymmetrized tensor.
                        let vvd = dv[m] * v[b] * v[cc] + v[m] * dv[b] * v[cc] + v[m] * v[b] * dv[cc];
                        let vdd = 2.0
                            * (dv[m] * dv[b] * v[cc] + dv[m] * v[b] * dv[cc] + v[m] * dv[b] * dv[cc])
                            - 3.0 * vvv;
                        q3[0] += t * vvv;
                        q3[1] += t * vvd;
                        q3[2] += t * vdd;
                    }
                }
            }
            for k in 0..3 {
                qr[k][a] = q2[k];
                qd[k][a] = q3[k];
            }
        }
        (qr, qd)
    }

    pub fn q_r(&self, alpha: f64) -> Vec2 {
        self.forms(alpha).0[0]
    }

    pub fn q_d(&self, alpha: f64) -> Vec2 {
        self.forms(alpha).1[0]
    }

    /// `F_R(α, β) = |g(R(w,v)v, n)|` with `w = cos β e1 + sin β e2`.
    pub fn f_r(&self, alpha: f64, beta: f64) -> f64 {
        let q = self.q_r(alpha);
        (beta.cos() * q[0] + beta.sin() * q[1]).abs()
    }

    /// `F_∇(α, β) = |(∇_v R)(w,v,v,n)|`.
    pub fn f_d(&self, alpha: f64, beta: f64) -> f64 {
        let q = self.q_d(alpha);
        (beta.cos() * q[0] + beta.sin() * q[1]).abs()
    }

    pub fn max_abs(&self) -> f64 {
        let r = self.r_sym();
        let d = self.d_sym();
        r.iter()
            .flatten()
            .flatten()
            .chain(d.iter().flatten().flatten().flatten())
            .fold(0.0, |m: f64, x| m.max(x.abs()))
    }
}

pub type Vec2 = [f64; 2];

/// Samples of `α` used before Newton refinement.
pub const ALPHA_GRID: usize = 256;

fn dot2(a: &Vec2, b: &Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Maximize `|q(α)|²` over `[0, π)`; returns `(α*, |q(α*)|)`.
fn maximize<F>(forms: F) -> (f64, f64)
where
    F: Fn(f64) -> [Vec2; 3],
{
    let h = PI / ALPHA_GRID as f64;
    let phi: Vec<f64> = (0..ALPHA_GRID)
        .map(|i| {
            let q = forms(i as f64 * h)[0];
            dot2(&q, &q)
        })
        .collect();
    let mut best = (0.0, phi[0]);
    for i in 0..ALPHA_GRID {
        let prev = phi[(i + ALPHA_GRID - 1) % ALPHA_GRID];
        let next = phi[(i + 1) % ALPHA_GRID];
        if phi[i] < prev || phi[i] < next {
            continue;
        }
        let a0 = i as f64 * h;
        let mut a = a0;
        let mut val = phi[i];
        for _ in 0..8 {
            let [q, dq, ddq] = forms(a);
            let d1 = 2.0 * dot2(&q, &dq);
            let d2 = 2.0 * (dot2(&dq, &dq) + dot2(&q, &ddq));
            if !(d2 < 0.0) {
                break;
            }
            let step = -d1 / d2;
            let cand = a + step;
            if (cand - a0).abs() > h {
                break;
            }
            let qc = forms(cand)[0];
            let vc = dot2(&qc, &qc);
            if vc < val {
                break;
            }
            a = cand;
            val = vc;
            if step.abs() < 1e-15 {
                break;
            }
        }
        if val > best.1 {
            best = (a, val);
        }
    }
    (best.0.rem_euclid(PI), best.1.sqrt())
}

fn beta_for(q: &Vec2) -> f64 {
    q[1].atan2(q[0]).rem_euclid(PI)
}

/// `G(P)` from precomputed plane coefficients.
pub fn score_from_coefficients(pc: &PlaneCoefficients) -> GenericScore {
    let (ar, vr) = maximize(|a| pc.forms(a).0);
    let (ad, vd) = maximize(|a| pc.forms(a).1);
    if vd > vr {
        GenericScore {
            value: vd,
            alpha_star: ad,
            beta_star: beta_for(&pc.q_d(ad)),
            branch: Branch::Derivative,
        }
    } else {
        GenericScore {
            value: vr,
            alpha_star: ar,
            beta_star: beta_for(&pc.q_r(ar)),
            branch: Branch::Curvature,
        }
    }
}

/// The generic-plane operator `G(P)` with its maximizing angles.
pub fn generic_score(c: &CurvaturePoint, plane: &TangentPlane) -> GenericScore {
    score_from_coefficients(&PlaneCoefficients::new(c, plane))
}

/// Reference maximization on a dense `(α, β)` grid, without refinement.
pub fn generic_score_dense(c: &CurvaturePoint, plane: &TangentPlane, n: usize) -> f64 {
    let pc = PlaneCoefficients::new(c, plane);
    let mut best: f64 = 0.0;
    for i in 0..n {
        let a = PI * i as f64 / n as f64;
        for j in 0..n {
            let b = PI * j as f64 / n as f64;
            best = best.max(pc.f_r(a, b)).max(pc.f_d(a, b));
        }
    }
    best
}

/// `true` iff every symmetrized coefficient of `q_R` and `q_∇` is at most `tol`.
pub fn rigid_test(c: &CurvaturePoint, plane: &TangentPlane, tol: f64) -> bool {
    PlaneCoefficients::new(c, plane).max_abs() <= tol
}

/// `sqrt(|x1 − x2|² + θ²)` with `θ ∈ [0, π/2]` the angle between the normal
/// lines of the two coordinate subspaces.
pub fn plane_distance(p1: &TangentPlane, p2: &TangentPlane) -> f64 {
    let d = linalg::sub(&p1.base.0, &p2.base.0);
    combine_distance(linalg::dot(&d, &d), p1, p2)
}

/// As [`plane_distance`] with the base displacement taken to the nearest
/// periodic image.
pub fn plane_distance_in(metric: &ChartMetric, p1: &TangentPlane, p2: &TangentPlane) -> f64 {
    let d = metric.displacement(&p1.base.0, &p2.base.0);
    combine_distance(linalg::dot(&d, &d), p1, p2)
}

fn combine_distance(base2: f64, p1: &TangentPlane, p2: &TangentPlane) -> f64 {
    let theta = normal_angle(&p1.subspace_normal(), &p2.subspace_normal());
    (base2 + theta * theta).sqrt()
}

/// Angle in `[0, π/2]` between the lines spanned by two unit vectors.
pub fn normal_angle(a: &Vec3, b: &Vec3) -> f64 {
    let c = linalg::dot(a, b).abs();
    let s = linalg::norm(&linalg::cross(a, b));
    s.atan2(c)
}

/// Base and fiber resolution of a scan.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ScanGrid {
    pub base: [usize; 3],
    pub fiber: usize,
}

impl ScanGrid {
    pub fn validate(&self) -> Result<()> {
        if self.base.iter().any(|&n| n < 2) || self.fiber < 2 {
            return Err(Error::Config(format!(
                "scan grid {:?} x {} needs at least 2 samples per axis",
                self.base, self.fiber
            )));
        }
        Ok(())
    }

    pub fn base_count(&self) -> usize {
        self.base.iter().product()
    }

    pub fn base_index(&self, flat: usize) -> [usize; 3] {
        let [_, n1, n2] = self.base;
        [flat / (n1 * n2), (flat / n2) % n1, flat % n2]
    }

    pub fn flat_index(&self, idx: [usize; 3]) -> usize {
        (idx[0] * self.base[1] + idx[1]) * self.base[2] + idx[2]
    }
}

/// Lattice coordinate along one axis: periodic axes exclude the right end.
pub fn lattice_coord(metric: &ChartMetric, axis: usize, i: usize, n: usize) -> f64 {
    let d = metric.domain();
    let (lo, hi) = (d.lo[axis], d.hi[axis]);
    if metric.periodic()[axis] {
        lo + (hi - lo) * i as f64 / n as f64
    } else {
        lo + (hi - lo) * i as f64 / (n - 1) as f64
    }
}

pub fn lattice_point(metric: &ChartMetric, grid: &ScanGrid, idx: [usize; 3]) -> Point3 {
    Point3::new(
        lattice_coord(metric, 0, idx[0], grid.base[0]),
        lattice_coord(metric, 1, idx[1], grid.base[1]),
        lattice_coord(metric, 2, idx[2], grid.base[2]),
    )
}

/// `n` unit normals on the upper Fibonacci hemisphere. Each normal line is
/// represented once, so antipodal duplicates never arise.
pub fn fiber_normals(n: usize) -> Vec<Vec3> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

/// Score of one plane in a scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScoredPlane {
    pub plane: TangentPlane,
    pub score: GenericScore,
    /// Lattice index of the base point.
    pub base_index: [usize; 3],
    /// Fiber sample index.
    pub fiber_index: usize,
    /// Whether the plane came from local refinement rather than the lattice.
    pub refined: bool,
}

impl ScoredPlane {
    fn order_key(&self) -> (f64, [usize; 3], usize, bool) {
        (self.score.value, self.base_index, self.fiber_index, self.refined)
    }
}

pub(crate) fn cmp_scored(a: &ScoredPlane, b: &ScoredPlane) -> std::cmp::Ordering {
    let (ka, kb) = (a.order_key(), b.order_key());
    ka.0.total_cmp(&kb.0)
        .then(ka.1.cmp(&kb.1))
        .then(ka.2.cmp(&kb.2))
        .then(ka.3.cmp(&kb.3))
}

/// Every lattice plane with its score, in lattice order (base-major).
pub fn scan_lattice(metric: &ChartMetric, grid: &ScanGrid) -> Result<Vec<ScoredPlane>> {
    grid.validate()?;
    let normals = fiber_normals(grid.fiber);
    let per_base: Vec<Result<Vec<ScoredPlane>>> = (0..grid.base_count())
        .into_par_iter()
        .map(|flat| {
            let idx = grid.base_index(flat);
            let p = lattice_point(metric, grid, idx);
            let c = curvature_at(metric, &p)?;
            normals
                .iter()
                .enumerate()
                .map(|(f, nu)| {
                    let plane = plane_with_normal(&c.g, p, nu)?;
                    Ok(ScoredPlane {
                        plane,
                        score: generic_score(&c, &plane),
                        base_index: idx,
                        fiber_index: f,
                        refined: false,
                    })
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(grid.base_count() * grid.fiber);
    for r in per_base {
        out.extend(r?);
    }
    Ok(out)
}

/// Score of the plane at `x` whose subspace has Euclidean normal `nu`.
pub fn score_at(metric: &ChartMetric, x: &Point3, nu: &Vec3) -> Result<(TangentPlane, GenericScore)> {
    let c = curvature_at(metric, x)?;
    let plane = plane_with_normal(&c.g, *x, nu)?;
    Ok((plane, generic_score(&c, &plane)))
}

const REFINE_STEPS: usize = 20;

fn spherical(nu: &Vec3) -> (f64, f64) {
    let nu = linalg::scale(nu, 1.0 / linalg::norm(nu));
    (nu[2].clamp(-1.0, 1.0).acos(), nu[1].atan2(nu[0]))
}

fn from_spherical(theta: f64, phi: f64) -> Vec3 {
    let (st, ct) = theta.sin_cos();
    [st * phi.cos(), st * phi.sin(), ct]
}

/// Coordinate descent on `(x1, x2, x3, θ, φ)` starting from a lattice plane.
pub fn refine(metric: &ChartMetric, grid: &ScanGrid, start: &ScoredPlane) -> Result<ScoredPlane> {
    let dom = metric.domain();
    let mut x = start.plane.base.0;
    let (mut theta, mut phi) = spherical(&start.plane.subspace_normal());
    let mut best = *start;
    let mut steps = [
        0.5 * dom.extent(0) / grid.base[0] as f64,
        0.5 * dom.extent(1) / grid.base[1] as f64,
        0.5 * dom.extent(2) / grid.base[2] as f64,
        0.5 / (grid.fiber as f64).sqrt(),
        0.5 / (grid.fiber as f64).sqrt(),
    ];
    for _ in 0..REFINE_STEPS {
        let mut improved = false;
        for k in 0..5 {
            for sign in [-1.0, 1.0] {
                let mut cx = x;
                let (mut ct, mut cp) = (theta, phi);
                match k {
                    0..=2 => cx[k] += sign * steps[k],
                    3 => ct += sign * steps[k],
                    _ => cp += sign * steps[k],
                }
                let cand = Point3(cx);
                let Ok(cand) = metric.normalize(&cand) else {
                    continue;
                };
                let Ok((plane, score)) = score_at(metric, &cand, &from_spherical(ct, cp)) else {
                    continue;
                };
                if score.value < best.score.value {
                    best = ScoredPlane { plane, score, refined: true, ..*start };
                    x = cand.0;
                    theta = ct;
                    phi = cp;
                    improved = true;
                }
            }
        }
        if !improved {
            steps.iter_mut().for_each(|s| *s *= 0.5);
        }
    }
    Ok(best)
}

/// Fiber-wise minima that are no larger than those at the 6 lattice neighbours.
pub fn local_minima(grid: &ScanGrid, lattice: &[ScoredPlane], periodic: [bool; 3]) -> Vec<ScoredPlane> {
    let f = grid.fiber;
    let fiber_min: Vec<&ScoredPlane> = lattice
        .chunks(f)
        .map(|chunk| chunk.iter().min_by(|a, b| cmp_scored(a, b)).expect("non-empty fiber"))
        .collect();
    let mut out = Vec::new();
    for (flat, cand) in fiber_min.iter().enumerate() {
        let idx = grid.base_index(flat);
        let mut is_min = true;
        for axis in 0..3 {
            for delta in [-1i64, 1] {
                let n = grid.base[axis] as i64;
                let mut j = idx[axis] as i64 + delta;
                if periodic[axis] {
                    j = j.rem_euclid(n);
                } else if j < 0 || j >= n {
                    continue;
                }
                let mut nidx = idx;
                nidx[axis] = j as usize;
                if fiber_min[grid.flat_index(nidx)].score.value < cand.score.value {
                    is_min = false;
                }
            }
        }
        if is_min {
            out.push(**cand);
        }
    }
    out
}

/// Low-scoring planes of a scan.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RigidReport {
    pub grid: ScanGrid,
    pub threshold: f64,
    pub min_overall: f64,
    pub planes: Vec<RigidPlane>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RigidPlane {
    pub point: Point3,
    pub e1: Vec3,
    pub e2: Vec3,
    pub n: Vec3,
    pub score: f64,
    pub branch: Branch,
    pub base_index: [usize; 3],
    pub fiber_index: usize,
    pub refined: bool,
}

impl From<&ScoredPlane> for RigidPlane {
    fn from(s: &ScoredPlane) -> Self {
        Self {
            point: s.plane.base,
            e1: s.plane.e1,
            e2: s.plane.e2,
            n: s.plane.n,
            score: s.score.value,
            branch: s.score.branch,
            base_index: s.base_index,
            fiber_index: s.fiber_index,
            refined: s.refined,
        }
    }
}

/// Lattice scan plus refinement of local minima.
#[derive(Clone, Debug)]
pub struct FullScan {
    pub grid: ScanGrid,
    pub lattice: Vec<ScoredPlane>,
    pub refined: Vec<ScoredPlane>,
}

impl FullScan {
    pub fn min_overall(&self) -> f64 {
        self.lattice
            .iter()
            .chain(&self.refined)
            .map(|s| s.score.value)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn lattice_min(&self) -> f64 {
        self.lattice.iter().map(|s| s.score.value).fold(f64::INFINITY, f64::min)
    }

    /// All planes at or below `threshold`, sorted by score then index.
    pub fn below(&self, threshold: f64) -> Vec<ScoredPlane> {
        let mut v: Vec<ScoredPlane> = self
            .lattice
            .iter()
            .chain(&self.refined)
            .filter(|s| s.score.value <= threshold)
            .copied()
            .collect();
        v.sort_by(cmp_scored);
        v
    }

    pub fn report(&self, threshold: f64) -> RigidReport {
        RigidReport {
            grid: self.grid,
            threshold,
            min_overall: self.min_overall(),
            planes: self.below(threshold).iter().map(RigidPlane::from).collect(),
        }
    }
}

pub fn full_scan(metric: &ChartMetric, grid: &ScanGrid) -> Result<FullScan> {
    let lattice = scan_lattice(metric, grid)?;
    let starts: Vec<ScoredPlane> = local_minima(grid, &lattice, metric.periodic())
        .into_iter()
        .filter(|s| s.score.value > 0.0)
        .collect();
    let refined: Vec<Result<ScoredPlane>> =
        starts.par_iter().map(|s| refine(metric, grid, s)).collect();
    let refined = refined
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|s| s.refined)
        .collect();
    Ok(FullScan { grid: *grid, lattice, refined })
}

/// Scan the Grassmannian bundle and list every plane scoring at most `threshold`.
pub fn scan_rigid(metric: &ChartMetric, base_grid: [usize; 3], fiber_grid: usize, threshold: f64) -> Result<RigidReport> {
    let grid = ScanGrid { base: base_grid, fiber: fiber_grid };
    Ok(full_scan(metric, &grid)?.report(threshold))
}

impl RigidReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x1,x2,x3,n1,n2,n3,score,branch,i,j,k,fiber,refined")?;
        for p in &self.planes {
            let b = match p.branch {
                Branch::Curvature => "curvature",
                Branch::Derivative => "derivative",
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                p.point.0[0],
                p.point.0[1],
                p.point.0[2],
                p.n[0],
                p.n[1],
                p.n[2],
                p.score,
                b,
                p.base_index[0],
                p.base_index[1],
                p.base_index[2],
                p.fiber_index,
                p.refined
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charts::zoo_metric;
    use std::collections::BTreeMap;

    fn zoo(name: &str) -> ChartMetric {
        zoo_metric(name, &BTreeMap::new()).unwrap()
    }

    #[test]
    fn product_tilted_plane_closed_form() {
        // Unit S² factor: G = ½|sin 2θ| for a plane tilted by θ out of the sphere directions.
        let m = zoo("product_s2xr");
        let c = crate::tensor::curvature_at(&m, &Point3::new(0.0, 0.0, 0.0)).unwrap();
        for theta in [0.0, 0.3, std::f64::consts::FRAC_PI_6, std::f64::consts::FRAC_PI_4, 1.2, std::f64::consts::FRAC_PI_2] {
            let (cs, sn) = (f64::cos(theta), f64::sin(theta));
            let plane = TangentPlane {
                base: Point3::new(0.0, 0.0, 0.0),
                e1: [0.5 * cs, 0.0, sn],
                e2: [0.0, 0.5, 0.0],
                n: [-0.5 * sn, 0.0, cs],
            };
            let want = 0.5 * (2.0 * theta).sin().abs();
            let got = generic_score(&c, &plane).value;
            assert!((got - want).abs() < 1e-10, "theta {theta}: {got} vs {want}");
        }
    }

    #[test]
    fn flat_plane_is_coordinate_plane() {
        let m = zoo("flat_torus");
        let p = orthonormal_plane(&m, &Point3::new(0.1, 0.2, 0.3), &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(p.e1, [1.0, 0.0, 0.0]);
        assert_eq!(p.e2, [0.0, 1.0, 0.0]);
        assert_eq!(p.n, [0.0, 0.0, 1.0]);
    }

    #[test]
    fn round_origin_plane_is_halved() {
        let m = zoo("round_sphere");
        let p = orthonormal_plane(&m, &Point3::new(0.0, 0.0, 0.0), &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(p.e1, [0.5, 0.0, 0.0]);
        assert_eq!(p.e2, [0.0, 0.5, 0.0]);
        assert_eq!(p.n, [0.0, 0.0, 0.5]);
    }

    #[test]
    fn nil_plane_by_hand() {
        // Block [[5,-2],[-2,1]] at (2,0,0): e1 = e_y/√5, e2 ∝ e_z + (2/5) e_y.
        let m = zoo("nil");
        let g = crate::charts::metric_jet(&m, &Point3::new(2.0, 0.0, 0.0)).unwrap().g;
        let p = orthonormal_plane(&m, &Point3::new(2.0, 0.0, 0.0), &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]).unwrap();
        let r5 = 5f64.sqrt();
        assert!((p.e1[1] - 1.0 / r5).abs() < 1e-15);
        // e_z − g(e_z,e1)e1 = e_z + (2/5)e_y has squared length 1/5.
        assert!((p.e2[1] - 0.4 * r5).abs() < 1e-14);
        assert!((p.e2[2] - r5).abs() < 1e-14);
        assert!(p.frame_residual(&g) < 1e-12);
        assert!(linalg::det(&linalg::from_columns(&p.e1, &p.e2, &p.n)) > 0.0);
    }

    #[test]
    fn dependent_inputs_are_degenerate() {
        let m = zoo("flat_torus");
        let err = orthonormal_plane(&m, &Point3::new(0.0, 0.0, 0.0), &[1.0, 1.0, 0.0], &[2.0, 2.0, 0.0]);
        assert!(matches!(err, Err(Error::Degenerate(_))));
    }

    #[test]
    fn jacobi_on_round_sphere_is_constant_curvature() {
        let m = zoo("round_sphere");
        let c = curvature_at(&m, &Point3::new(0.3, -0.2, 0.1)).unwrap();
        let v = [0.3, 0.1, -0.4];
        let w = [0.2, 0.5, 0.1];
        let got = jacobi_apply(&c, &v, &w);
        let gvv = linalg::inner(&c.g, &v, &v);
        let gwv = linalg::inner(&c.g, &w, &v);
        for l in 0..3 {
            let expect = gvv * w[l] - gwv * v[l];
            assert!((got[l] - expect).abs() < 1e-12);
        }
        assert_eq!(jacobi_apply(&c, &v, &v), [0.0; 3]);
    }

    #[test]
    fn score_matches_dense_grid_on_random_fourier() {
        let m = zoo("random_fourier");
        let c = curvature_at(&m, &Point3::new(0.3, 0.6, 0.2)).unwrap();
        let plane = plane_with_normal(&c.g, c.point, &[0.2, -0.5, 0.8]).unwrap();
        let s = generic_score(&c, &plane);
        let dense = generic_score_dense(&c, &plane, 512);
        assert!(s.value >= dense - 1e-12);
        assert!(s.value - dense < 1e-4 * s.value);
        let pc = PlaneCoefficients::new(&c, &plane);
        let f = match s.branch {
            Branch::Curvature => pc.f_r(s.alpha_star, s.beta_star),
            Branch::Derivative => pc.f_d(s.alpha_star, s.beta_star),
        };
        assert!((f - s.value).abs() < 1e-10);
    }

    #[test]
    fn fibonacci_normals_are_unit_and_upper() {
        for nu in fiber_normals(32) {
            assert!((linalg::norm(&nu) - 1.0).abs() < 1e-15);
            assert!(nu[2] > 0.0);
        }
    }

    #[test]
    fn distance_examples() {
        let m = zoo("flat_torus");
        let o = Point3::new(0.0, 0.0, 0.0);
        let xy = orthonormal_plane(&m, &o, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        let xz = orthonormal_plane(&m, &o, &[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(plane_distance(&xy, &xy), 0.0);
        assert!((plane_distance(&xy, &xz) - PI / 2.0).abs() < 1e-15);
        let shifted = TangentPlane { base: Point3::new(0.3, 0.0, 0.0), ..xy };
        assert!((plane_distance(&xy, &shifted) - 0.3).abs() < 1e-15);
        let wrapped = TangentPlane { base: Point3::new(0.9, 0.0, 0.0), ..xy };
        assert!((plane_distance_in(&m, &xy, &wrapped) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn flat_scan_is_all_rigid() {
        let r = scan_rigid(&zoo("flat_torus"), [3, 3, 3], 8, 1e-6).unwrap();
        assert_eq!(r.planes.len(), 27 * 8);
        assert_eq!(r.min_overall, 0.0);
    }

    #[test]
    fn tiny_grid_is_rejected() {
        assert!(matches!(scan_rigid(&zoo("flat_torus"), [1, 3, 3], 8, 1e-6), Err(Error::Config(_))));
    }
}
