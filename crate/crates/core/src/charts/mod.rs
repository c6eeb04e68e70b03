//! Coordinate charts and metrics with exact partial derivatives to order 3.
//!
//! A [`ChartMetric`] is an analytic coefficient field on an axis-aligned box,
//! optionally periodic per axis, plus an ordered list of perturbation layers.
//! Evaluation goes through [`Jet3`] arithmetic so every coefficient comes with
//! its first three partials at round-off accuracy.

mod index;
mod zoo;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{Jet3, PAIRS, TRIPLES};
use crate::linalg::{self, Mat3, Vec3};
use crate::perturb::{LayerField, PerturbationSpec};

use index::LayerIndex;

pub use zoo::{zoo_metric, Field, ZOO_NAMES};

/// A point in chart coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point3(pub [f64; 3]);

impl Point3 {
    pub fn new(x1: f64, x2: f64, x3: f64) -> Self {
        Self([x1, x2, x3])
    }

    pub fn coords(&self) -> &[f64; 3] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(x: [f64; 3]) -> Self {
        Self(x)
    }
}

/// Axis-aligned coordinate box `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl Domain {
    pub fn cube(lo: f64, hi: f64) -> Self {
        Self { lo: [lo; 3], hi: [hi; 3] }
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|a| !(self.hi[a] > self.lo[a]))
    }
}

/// Metric coefficients and their partials up to order 3.
///
/// Derivative indices come first: `dg[k][i][j] = ∂_k g_ij`,
/// `ddg[k][l][i][j] = ∂_k∂_l g_ij`, `dddg[k][l][m][i][j] = ∂_k∂_l∂_m g_ij`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricJet3 {
    pub g: Mat3,
    pub dg: [[[f64; 3]; 3]; 3],
    pub ddg: [[[[f64; 3]; 3]; 3]; 3],
    pub dddg: [[[[[f64; 3]; 3]; 3]; 3]; 3],
}

impl MetricJet3 {
    /// Assemble from the six independent coefficient jets (upper triangle).
    pub fn from_jets(c: &[[Jet3; 3]; 3]) -> Self {
        let mut out = MetricJet3 {
            g: [[0.0; 3]; 3],
            dg: [[[0.0; 3]; 3]; 3],
            ddg: [[[[0.0; 3]; 3]; 3]; 3],
            dddg: [[[[[0.0; 3]; 3]; 3]; 3]; 3],
        };
        for &(i, j) in &PAIRS {
            let jet = &c[i][j];
            for (a, b) in [(i, j), (j, i)] {
                out.g[a][b] = jet.value;
                for k in 0..3 {
                    out.dg[k][a][b] = jet.grad[k];
                    for l in 0..3 {
                        out.ddg[k][l][a][b] = jet.hess[k][l];
                        for m in 0..3 {
                            out.dddg[k][l][m][a][b] = jet.third[k][l][m];
                        }
                    }
                }
            }
        }
        out
    }

    /// Partial `∂^α g_ij` for a multi-index given as a list of axes (length ≤ 3).
    pub fn partial(&self, i: usize, j: usize, alpha: &[usize]) -> f64 {
        match *alpha {
            [] => self.g[i][j],
            [k] => self.dg[k][i][j],
            [k, l] => self.ddg[k][l][i][j],
            [k, l, m] => self.dddg[k][l][m][i][j],
            _ => panic!("metric jets carry partials up to order 3"),
        }
    }

    /// The same jet in coordinates `y` with `x = c + A y`.
    pub fn transform(&self, a: &Mat3) -> MetricJet3 {
        let at = linalg::transpose(a);
        let pair = |m: &Mat3| linalg::mat_mul(&at, &linalg::mat_mul(m, a));
        let mix = |v: &[Mat3; 3]| -> [Mat3; 3] {
            let mut out = [[[0.0; 3]; 3]; 3];
            for (k, o) in out.iter_mut().enumerate() {
                for (r, m) in v.iter().enumerate() {
                    let c = a[r][k];
                    if c == 0.0 {
                        continue;
                    }
                    for i in 0..3 {
                        for j in 0..3 {
                            o[i][j] += c * m[i][j];
                        }
                    }
                }
            }
            out
        };
        let g = pair(&self.g);
        let dg = mix(&self.dg.map(|m| pair(&m)));
        // Transform the innermost derivative slot first, then the outer ones.
        let mut ddg = self.ddg.map(|row| mix(&row.map(|m| pair(&m))));
        {
            let mut t = [[[[0.0; 3]; 3]; 3]; 3];
            for l in 0..3 {
                let col = [ddg[0][l], ddg[1][l], ddg[2][l]];
                let mixed = mix(&col);
                for k in 0..3 {
                    t[k][l] = mixed[k];
                }
            }
            ddg = t;
        }
        let mut dddg = self
            .dddg
            .map(|plane| plane.map(|row| mix(&row.map(|m| pair(&m)))));
        {
            let mut t = dddg;
            for k in 0..3 {
                for m in 0..3 {
                    let col = [dddg[k][0][m], dddg[k][1][m], dddg[k][2][m]];
                    let mixed = mix(&col);
                    for l in 0..3 {
                        t[k][l][m] = mixed[l];
                    }
                }
            }
            let mut u = t;
            for l in 0..3 {
                for m in 0..3 {
                    let col = [t[0][l][m], t[1][l][m], t[2][l][m]];
                    let mixed = mix(&col);
                    for k in 0..3 {
                        u[k][l][m] = mixed[k];
                    }
                }
            }
            dddg = u;
        }
        MetricJet3 { g, dg, ddg, dddg }
    }

    pub fn leading_minors(&self) -> [f64; 3] {
        linalg::leading_minors(&self.g)
    }

    pub fn is_positive_definite(&self) -> bool {
        self.leading_minors().iter().all(|&m| m > 0.0)
    }
}

/// Inverse metric `g^{ij}` and its first partials `dginv[k][i][j] = ∂_k g^{ij}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InverseJet1 {
    pub ginv: Mat3,
    pub dginv: [[[f64; 3]; 3]; 3],
}

/// Invert a metric jet; `∂_k g^{-1} = -g^{-1} (∂_k g) g^{-1}`.
pub fn inverse_jet(j: &MetricJet3) -> Result<InverseJet1> {
    let det = linalg::det(&j.g);
    let ginv = linalg::inverse(&j.g)
        .filter(|_| det.abs() > 1e-300)
        .ok_or_else(|| Error::Singular { point: [f64::NAN; 3], det })?;
    let mut dginv = [[[0.0; 3]; 3]; 3];
    for k in 0..3 {
        let t = linalg::mat_mul(&ginv, &linalg::mat_mul(&j.dg[k], &ginv));
        for i in 0..3 {
            for l in 0..3 {
                dginv[k][i][l] = -0.5 * (t[i][l] + t[l][i]);
            }
        }
    }
    Ok(InverseJet1 { ginv, dginv })
}

#[derive(Clone, Debug)]
struct Layer {
    spec: PerturbationSpec,
    field: LayerField,
}

/// A Riemannian metric on a coordinate box.
#[derive(Clone, Debug)]
pub struct ChartMetric {
    name: String,
    params: BTreeMap<String, f64>,
    domain: Domain,
    periodic: [bool; 3],
    field: Field,
    layers: Vec<Arc<Layer>>,
    index: LayerIndex,
}

impl ChartMetric {
    pub(crate) fn from_parts(
        name: &str,
        params: BTreeMap<String, f64>,
        domain: Domain,
        periodic: [bool; 3],
        field: Field,
    ) -> Result<Self> {
        if domain.is_empty() {
            return Err(Error::Config(format!("empty domain {domain:?}")));
        }
        Ok(Self {
            name: name.to_string(),
            params,
            domain,
            periodic,
            field,
            layers: Vec::new(),
            index: LayerIndex::default(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn periodic(&self) -> [bool; 3] {
        self.periodic
    }

    pub fn layers(&self) -> impl Iterator<Item = &PerturbationSpec> {
        self.layers.iter().map(|l| &l.spec)
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    /// Same analytic field and chart without any perturbation layers.
    pub fn without_layers(&self) -> ChartMetric {
        let mut m = self.clone();
        m.layers.clear();
        m.index.clear();
        m
    }

    /// Append a layer; the caller is responsible for validating the spec.
    pub(crate) fn push_layer(&mut self, spec: PerturbationSpec) -> Result<()> {
        let field = LayerField::new(&spec)?;
        self.index.insert(self.layers.len(), &spec, &self.domain, self.periodic);
        self.layers.push(Arc::new(Layer { spec, field }));
        Ok(())
    }

    /// Change the scale of the most recent layer; its field does not depend on `s`.
    pub(crate) fn set_last_scale(&mut self, s: f64) {
        if let Some(l) = self.layers.last_mut() {
            Arc::make_mut(l).spec.s = s;
        }
    }

    /// Wrap periodic coordinates into `[lo, hi)` and reject points outside the
    /// box along non-periodic axes.
    pub fn normalize(&self, p: &Point3) -> Result<Point3> {
        let mut x = p.0;
        for a in 0..3 {
            if !x[a].is_finite() {
                return Err(self.domain_error(p));
            }
            let (lo, hi) = (self.domain.lo[a], self.domain.hi[a]);
            if self.periodic[a] {
                let period = hi - lo;
                let mut t = (x[a] - lo).rem_euclid(period);
                if t >= period {
                    t = 0.0;
                }
                x[a] = lo + t;
            } else if x[a] < lo || x[a] > hi {
                return Err(self.domain_error(p));
            }
        }
        Ok(Point3(x))
    }

    fn domain_error(&self, p: &Point3) -> Error {
        Error::Domain {
            point: p.0,
            lo: self.domain.lo,
            hi: self.domain.hi,
        }
    }

    pub fn contains(&self, p: &Point3) -> bool {
        self.normalize(p).is_ok()
    }

    /// Displacement `x - c` using the nearest periodic image.
    pub fn displacement(&self, x: &Vec3, c: &Vec3) -> Vec3 {
        let mut d = linalg::sub(x, c);
        for (a, da) in d.iter_mut().enumerate() {
            if self.periodic[a] {
                let period = self.domain.extent(a);
                *da -= period * (*da / period).round();
            }
        }
        d
    }

    /// Coefficient jets at an already-normalized point (upper triangle filled).
    pub fn coefficient_jets(&self, x: &Vec3) -> [[Jet3; 3]; 3] {
        let mut c = self.field.jets(x);
        for &id in self.index.candidates(x, &self.domain) {
            let layer = &self.layers[id as usize];
            if layer.spec.s == 0.0 {
                continue;
            }
            let d = self.displacement(x, &layer.spec.center.0);
            if let Some(f) = layer.field.chart_jet(&d) {
                let sf = f.scale(layer.spec.s);
                let b = layer.field.coupling();
                for &(i, j) in &PAIRS {
                    if b[i][j] != 0.0 {
                        c[i][j] += sf.scale(b[i][j]);
                    }
                }
            }
        }
        c
    }

    /// Coefficients of the analytic field alone, ignoring layers.
    pub fn field_values(&self, x: &Vec3) -> Mat3 {
        let c = self.field.jets(x);
        let mut g = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                g[i][j] = c[i][j].value;
            }
        }
        g
    }

    /// Sum over layers of an upper bound on `|s f B|`.
    pub fn perturbation_bound(&self) -> f64 {
        self.layers.iter().map(|l| l.spec.s * l.field.value_bound()).sum()
    }

    /// Coefficient values only (no derivatives) at an already-normalized point.
    pub fn coefficient_values(&self, x: &Vec3) -> Mat3 {
        let mut g = self.field_values(x);
        for &id in self.index.candidates(x, &self.domain) {
            let layer = &self.layers[id as usize];
            if layer.spec.s == 0.0 {
                continue;
            }
            let d = self.displacement(x, &layer.spec.center.0);
            if let Some(f) = layer.field.chart_value(&d) {
                let b = layer.field.coupling();
                for &(i, j) in &PAIRS {
                    if b[i][j] != 0.0 {
                        g[i][j] += layer.spec.s * f * b[i][j];
                        g[j][i] = g[i][j];
                    }
                }
            }
        }
        g
    }

    /// Evaluate without the positive-definiteness check.
    pub fn raw_jet(&self, p: &Point3) -> Result<MetricJet3> {
        let x = self.normalize(p)?;
        Ok(MetricJet3::from_jets(&self.coefficient_jets(&x.0)))
    }
}

/// Coefficients and partials to order 3 at `p`; periodic axes wrap.
pub fn metric_jet(metric: &ChartMetric, p: &Point3) -> Result<MetricJet3> {
    let j = metric.raw_jet(p)?;
    let minors = j.leading_minors();
    if !minors.iter().all(|&m| m > 0.0) {
        return Err(Error::NotPositiveDefinite { point: p.0, minors });
    }
    Ok(j)
}

/// Serialized form of a [`ChartMetric`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricDocument {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub domain: Domain,
    pub periodic: [bool; 3],
    #[serde(default)]
    pub layers: Vec<PerturbationSpec>,
}

impl ChartMetric {
    pub fn to_document(&self) -> MetricDocument {
        MetricDocument {
            name: self.name.clone(),
            params: self.params.clone(),
            domain: self.domain,
            periodic: self.periodic,
            layers: self.layers().cloned().collect(),
        }
    }

    pub fn from_document(doc: &MetricDocument) -> Result<Self> {
        let mut m = zoo_metric(&doc.name, &doc.params)?;
        if doc.domain.is_empty() {
            return Err(Error::Config(format!("empty domain {:?}", doc.domain)));
        }
        m.domain = doc.domain;
        m.periodic = doc.periodic;
        for spec in &doc.layers {
            spec.validate()?;
            m.push_layer(spec.clone())?;
        }
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MetricDocument = serde_json::from_str(text)?;
        Self::from_document(&doc)
    }
}

/// Every distinct multi-index of order `0..=q` as a list of axes.
pub fn multi_indices(q: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    if q >= 1 {
        out.extend((0..3).map(|i| vec![i]));
    }
    if q >= 2 {
        out.extend(PAIRS.iter().map(|&(i, j)| vec![i, j]));
    }
    if q >= 3 {
        out.extend(TRIPLES.iter().map(|&(i, j, k)| vec![i, j, k]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
        kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn flat_metric_is_identity_with_zero_partials() {
        let m = zoo_metric("flat_torus", &BTreeMap::new()).unwrap();
        let j = metric_jet(&m, &Point3::new(0.3, 0.7, 0.1)).unwrap();
        assert_eq!(j.g, linalg::IDENTITY);
        assert!(j.dg.iter().flatten().flatten().all(|&x| x == 0.0));
        assert!(j.dddg.iter().flatten().flatten().flatten().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn round_sphere_at_origin() {
        let m = zoo_metric("round_sphere", &params(&[("radius", 1.0)])).unwrap();
        let j = metric_jet(&m, &Point3::new(0.0, 0.0, 0.0)).unwrap();
        for i in 0..3 {
            for k in 0..3 {
                let expect = if i == k { 4.0 } else { 0.0 };
                assert_eq!(j.g[i][k], expect);
                for l in 0..3 {
                    assert_eq!(j.dg[l][i][k], 0.0);
                    for n in 0..3 {
                        let e = if l == n && i == k { -16.0 } else { 0.0 };
                        assert!((j.ddg[l][n][i][k] - e).abs() < 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn nil_coefficients_at_two_zero_zero() {
        let m = zoo_metric("nil", &BTreeMap::new()).unwrap();
        let j = metric_jet(&m, &Point3::new(2.0, 0.0, 0.0)).unwrap();
        assert_eq!(j.g[1][1], 5.0);
        assert_eq!(j.g[1][2], -2.0);
        assert_eq!(j.g[2][1], -2.0);
        assert_eq!(j.dg[0][1][1], 4.0);
        let inv = inverse_jet(&j).unwrap();
        assert!((inv.ginv[1][1] - 1.0).abs() < 1e-14);
        assert!((inv.ginv[1][2] - 2.0).abs() < 1e-14);
        assert!((inv.ginv[2][2] - 5.0).abs() < 1e-14);
    }

    #[test]
    fn round_inverse_is_quarter_identity() {
        let m = zoo_metric("round_sphere", &BTreeMap::new()).unwrap();
        let inv = inverse_jet(&metric_jet(&m, &Point3::new(0.0, 0.0, 0.0)).unwrap()).unwrap();
        for i in 0..3 {
            assert!((inv.ginv[i][i] - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn outside_non_periodic_axis_is_domain_error() {
        let m = zoo_metric("hyperbolic_ball", &BTreeMap::new()).unwrap();
        let err = metric_jet(&m, &Point3::new(0.9, 0.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::Domain { .. }));
    }

    #[test]
    fn flat_torus_wraps_exactly() {
        let m = zoo_metric("flat_torus", &params(&[("period", 1.0)])).unwrap();
        let a = metric_jet(&m, &Point3::new(0.25, 0.5, 0.75)).unwrap();
        let b = metric_jet(&m, &Point3::new(1.25, -0.5, 2.75)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn singular_metric_reports_determinant() {
        let mut j = metric_jet(
            &zoo_metric("flat_torus", &BTreeMap::new()).unwrap(),
            &Point3::new(0.0, 0.0, 0.0),
        )
        .unwrap();
        j.g[2][2] = 0.0;
        assert!(matches!(inverse_jet(&j), Err(Error::Singular { det, .. }) if det == 0.0));
    }

    #[test]
    fn multi_index_counts() {
        assert_eq!(multi_indices(0).len(), 1);
        assert_eq!(multi_indices(3).len(), 1 + 3 + 6 + 10);
    }
}
