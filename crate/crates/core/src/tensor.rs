//! Christoffel symbols, the curvature tensor and its covariant derivative.
//!
//! Index conventions: `gamma1[i][j][k] = Γ_{ij,k} = g(∇_{E_i}E_j, E_k)`,
//! `gamma2[k][i][j] = Γ^k_{ij}`, `r[i][j][k][l] = g(R(E_i,E_j)E_k, E_l)` with
//! `R(X,Y) = [∇_X, ∇_Y] − ∇_{[X,Y]}`. Derivative indices always come first.

use serde::Serialize;

use crate::charts::{inverse_jet, metric_jet, ChartMetric, InverseJet1, MetricJet3, Point3};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat3, Vec3};

pub type T3 = [[[f64; 3]; 3]; 3];
pub type T4 = [[[[f64; 3]; 3]; 3]; 3];
pub type T5 = [[[[[f64; 3]; 3]; 3]; 3]; 3];

/// Global sign applied to the literal curvature formula. With the formula as
/// implemented the round sphere already has sectional curvature `+1`.
pub const CURVATURE_SIGN: f64 = 1.0;

const Z3: T3 = [[[0.0; 3]; 3]; 3];
const Z4: T4 = [[[[0.0; 3]; 3]; 3]; 3];
const Z5: T5 = [[[[[0.0; 3]; 3]; 3]; 3]; 3];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChristoffelJet {
    pub gamma1: T3,
    pub dgamma1: T4,
    pub ddgamma1: T5,
    pub gamma2: T3,
}

pub fn christoffel(j: &MetricJet3, inv: &InverseJet1) -> ChristoffelJet {
    let mut out = ChristoffelJet {
        gamma1: Z3,
        dgamma1: Z4,
        ddgamma1: Z5,
        gamma2: Z3,
    };
    for i in 0..3 {
        for jj in 0..3 {
            for k in 0..3 {
                out.gamma1[i][jj][k] = 0.5 * (j.dg[i][jj][k] + j.dg[jj][i][k] - j.dg[k][i][jj]);
                for m in 0..3 {
                    out.dgamma1[m][i][jj][k] =
                        0.5 * (j.ddg[m][i][jj][k] + j.ddg[m][jj][i][k] - j.ddg[m][k][i][jj]);
                    for n in 0..3 {
                        out.ddgamma1[n][m][i][jj][k] = 0.5
                            * (j.dddg[n][m][i][jj][k] + j.dddg[n][m][jj][i][k]
                                - j.dddg[n][m][k][i][jj]);
                    }
                }
            }
        }
    }
    for k in 0..3 {
        for i in 0..3 {
            for jj in 0..3 {
                out.gamma2[k][i][jj] = (0..3).map(|l| inv.ginv[k][l] * out.gamma1[i][jj][l]).sum();
            }
        }
    }
    out
}

/// `R_ijkl` and `∂_m R_ijkl`.
pub fn riemann(cj: &ChristoffelJet, inv: &InverseJet1) -> (T4, T5) {
    let g1 = &cj.gamma1;
    let d1 = &cj.dgamma1;
    let dd1 = &cj.ddgamma1;
    let gi = &inv.ginv;
    let mut r = Z4;
    let mut dr = Z5;
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    let mut quad = 0.0;
                    for s in 0..3 {
                        for t in 0..3 {
                            quad += gi[s][t] * (g1[i][k][s] * g1[j][l][t] - g1[j][k][s] * g1[i][l][t]);
                        }
                    }
                    r[i][j][k][l] = CURVATURE_SIGN * (d1[i][j][k][l] - d1[j][i][k][l] + quad);
                    for m in 0..3 {
                        let mut dquad = 0.0;
                        for s in 0..3 {
                            for t in 0..3 {
                                dquad += inv.dginv[m][s][t]
                                    * (g1[i][k][s] * g1[j][l][t] - g1[j][k][s] * g1[i][l][t])
                                    + gi[s][t]
                                        * (d1[m][i][k][s] * g1[j][l][t] + g1[i][k][s] * d1[m][j][l][t]
                                            - d1[m][j][k][s] * g1[i][l][t]
                                            - g1[j][k][s] * d1[m][i][l][t]);
                            }
                        }
                        dr[m][i][j][k][l] =
                            CURVATURE_SIGN * (dd1[m][i][j][k][l] - dd1[m][j][i][k][l] + dquad);
                    }
                }
            }
        }
    }
    (r, dr)
}

/// `(∇_m R)_ijkl` from `∂_m R` and the second-kind symbols.
pub fn covariant_r(cj: &ChristoffelJet, r: &T4, dr: &T5) -> T5 {
    let g2 = &cj.gamma2;
    let mut out = Z5;
    for m in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        let mut v = dr[m][i][j][k][l];
                        for t in 0..3 {
                            v -= g2[t][m][i] * r[t][j][k][l]
                                + g2[t][m][j] * r[i][t][k][l]
                                + g2[t][m][k] * r[i][j][t][l]
                                + g2[t][m][l] * r[i][j][k][t];
                        }
                        out[m][i][j][k][l] = v;
                    }
                }
            }
        }
    }
    out
}

/// Everything curvature-related at one chart point.
#[derive(Clone, Debug, Serialize)]
pub struct CurvaturePoint {
    pub point: Point3,
    pub g: Mat3,
    pub ginv: Mat3,
    pub christoffel: ChristoffelJet,
    pub r: T4,
    pub dr: T5,
    pub cov_r: T5,
}

impl CurvaturePoint {
    pub fn from_jet(point: Point3, j: &MetricJet3) -> Result<Self> {
        let inv = inverse_jet(j).map_err(|e| match e {
            Error::Singular { det, .. } => Error::Singular { point: point.0, det },
            other => other,
        })?;
        let cj = christoffel(j, &inv);
        let (r, dr) = riemann(&cj, &inv);
        let cov_r = covariant_r(&cj, &r, &dr);
        Ok(Self {
            point,
            g: j.g,
            ginv: inv.ginv,
            christoffel: cj,
            r,
            dr,
            cov_r,
        })
    }

    /// `R(a, b, c, d)` for coordinate vectors.
    pub fn r_apply(&self, a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> f64 {
        contract4(&self.r, a, b, c, d)
    }

    /// `(∇_m R)(a, b, c, d)` for coordinate vectors.
    pub fn cov_r_apply(&self, m: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> f64 {
        let mut s = 0.0;
        for (p, mp) in m.iter().enumerate() {
            if *mp != 0.0 {
                s += mp * contract4(&self.cov_r[p], a, b, c, d);
            }
        }
        s
    }
}

pub fn curvature_at(metric: &ChartMetric, p: &Point3) -> Result<CurvaturePoint> {
    let j = metric_jet(metric, p)?;
    CurvaturePoint::from_jet(*p, &j)
}

pub(crate) fn contract4(t: &T4, a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        if a[i] == 0.0 {
            continue;
        }
        for j in 0..3 {
            if b[j] == 0.0 {
                continue;
            }
            let ab = a[i] * b[j];
            for k in 0..3 {
                let abc = ab * c[k];
                for l in 0..3 {
                    s += abc * d[l] * t[i][j][k][l];
                }
            }
        }
    }
    s
}

/// Sectional curvature `R(u,w,w,u) / (|u|²|w|² − g(u,w)²)`.
pub fn sectional(r: &T4, g: &Mat3, u: &Vec3, w: &Vec3) -> Result<f64> {
    let uu = linalg::inner(g, u, u);
    let ww = linalg::inner(g, w, w);
    let uw = linalg::inner(g, u, w);
    let area = uu * ww - uw * uw;
    if !(area > 1e-14 * uu * ww) {
        return Err(Error::Degenerate(format!(
            "vectors {u:?} and {w:?} are linearly dependent"
        )));
    }
    Ok(contract4(r, u, w, w, u) / area)
}

/// Largest violation of the pair symmetries and the first Bianchi identity.
pub fn symmetry_residual(r: &T4) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    let v = r[i][j][k][l];
                    worst = worst
                        .max((v + r[j][i][k][l]).abs())
                        .max((v + r[i][j][l][k]).abs())
                        .max((v - r[k][l][i][j]).abs())
                        .max((v + r[j][k][i][l] + r[k][i][j][l]).abs());
                }
            }
        }
    }
    worst
}

/// Largest violation of `(∇_m R)_ijkl + (∇_i R)_jmkl + (∇_j R)_mikl = 0`.
pub fn second_bianchi_residual(cov: &T5) -> f64 {
    let mut worst: f64 = 0.0;
    for m in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        let v = cov[m][i][j][k][l] + cov[i][j][m][k][l] + cov[j][m][i][k][l];
                        worst = worst.max(v.abs());
                    }
                }
            }
        }
    }
    worst
}

/// Tensor of type (0,4) in the frame whose vectors are the columns of `a`.
pub fn to_frame4(t: &T4, a: &Mat3) -> T4 {
    let cols = [linalg::column(a, 0), linalg::column(a, 1), linalg::column(a, 2)];
    let mut out = Z4;
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    out[i][j][k][l] = contract4(t, &cols[i], &cols[j], &cols[k], &cols[l]);
                }
            }
        }
    }
    out
}

/// A (0,5) tensor whose first slot is a derivative index, expressed in a frame.
pub fn to_frame5(t: &T5, a: &Mat3) -> T5 {
    let mut slices = [Z4; 3];
    for (p, s) in slices.iter_mut().enumerate() {
        *s = to_frame4(&t[p], a);
    }
    let mut out = Z5;
    for m in 0..3 {
        for p in 0..3 {
            let c = a[p][m];
            if c == 0.0 {
                continue;
            }
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        for l in 0..3 {
                            out[m][i][j][k][l] += c * slices[p][i][j][k][l];
                        }
                    }
                }
            }
        }
    }
    out
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
    fn flat_has_no_curvature() {
        let c = curvature_at(&zoo("flat_torus"), &Point3::new(0.2, 0.4, 0.9)).unwrap();
        assert!(c.christoffel.gamma1.iter().flatten().flatten().all(|&x| x == 0.0));
        assert!(c.r.iter().flatten().flatten().flatten().all(|&x| x == 0.0));
        assert!(c.cov_r.iter().flatten().flatten().flatten().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn nil_christoffel_at_origin() {
        let m = zoo("nil");
        let j = metric_jet(&m, &Point3::new(0.0, 0.0, 0.0)).unwrap();
        let cj = christoffel(&j, &inverse_jet(&j).unwrap());
        assert!((cj.gamma1[1][2][0] - 0.5).abs() < 1e-15);
        assert!((cj.gamma1[2][1][0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn metric_compatibility_and_index_raising() {
        let m = zoo("berger");
        let j = metric_jet(&m, &Point3::new(0.7, 1.0, 2.0)).unwrap();
        let inv = inverse_jet(&j).unwrap();
        let cj = christoffel(&j, &inv);
        for i in 0..3 {
            for a in 0..3 {
                for b in 0..3 {
                    let lhs = j.dg[i][a][b];
                    let rhs = cj.gamma1[i][a][b] + cj.gamma1[i][b][a];
                    assert!((lhs - rhs).abs() < 1e-12);
                    let lowered: f64 = (0..3).map(|k| j.g[b][k] * cj.gamma2[k][i][a]).sum();
                    assert!((lowered - cj.gamma1[i][a][b]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn round_sphere_raw_component_and_sectional() {
        let c = curvature_at(&zoo("round_sphere"), &Point3::new(0.0, 0.0, 0.0)).unwrap();
        assert!((c.r[0][1][0][1].abs() - 16.0).abs() < 1e-12);
        let k = sectional(&c.r, &c.g, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        assert!((k - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nil_horizontal_sectional() {
        // Left-invariant orthonormal horizontal pair at the origin: ∂_x and ∂_y + x∂_z.
        let c = curvature_at(&zoo("nil"), &Point3::new(0.0, 0.0, 0.0)).unwrap();
        let k = sectional(&c.r, &c.g, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        assert!((k + 0.75).abs() < 1e-12, "{k}");
    }

    #[test]
    fn dependent_vectors_are_rejected() {
        let c = curvature_at(&zoo("flat_torus"), &Point3::new(0.0, 0.0, 0.0)).unwrap();
        let err = sectional(&c.r, &c.g, &[1.0, 2.0, 0.0], &[2.0, 4.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn frame_change_preserves_sectional() {
        let c = curvature_at(&zoo("sol"), &Point3::new(0.1, -0.3, 0.4)).unwrap();
        let a = [[0.9, 0.1, 0.0], [0.2, 1.1, 0.3], [-0.1, 0.0, 0.8]];
        let rf = to_frame4(&c.r, &a);
        let gf = {
            let at = linalg::transpose(&a);
            linalg::mat_mul(&at, &linalg::mat_mul(&c.g, &a))
        };
        let u = [1.0, 0.5, -0.2];
        let w = [0.0, 1.0, 0.7];
        let k_frame = sectional(&rf, &gf, &u, &w).unwrap();
        let k_chart = sectional(&c.r, &c.g, &linalg::mat_vec(&a, &u), &linalg::mat_vec(&a, &w)).unwrap();
        assert!((k_frame - k_chart).abs() < 1e-12);
    }
}
