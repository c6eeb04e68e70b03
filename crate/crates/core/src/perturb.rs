//! Local sine-bump metric perturbations.
//!
//! A layer adds `s·f` to the `(2,3)` and `(3,2)` coefficients of the metric in
//! affine coordinates `y = A⁻¹(x − c)`, where the columns of `A` are a frame
//! `(v, T, n)` at the center `c`. The scalar `f(y) = χ(|y|)·h(y₁)` combines a
//! radial cutoff and a fast sine profile.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::charts::{ChartMetric, Point3};
use crate::error::{Error, Result};
use crate::grassmann::TangentPlane;
use crate::jet::Jet3;
use crate::linalg::{self, Mat3, Vec3};

/// Lower bound on the frequency parameter `K`.
pub const K0: f64 = 64.0;

/// Sine profile `h(t) = ½Kη² sin(t/η)` with `η = ε/K`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SineProfile {
    pub k: f64,
    pub eps: f64,
    pub eta: f64,
}

/// Build the sine profile after checking `K > K0`, `ε ∈ (0,1)` and the
/// inequality `¼(K⁴/ε²)(1 − 4/K) > K²` that drives the `h″`/`h‴` dichotomy.
pub fn build_h(k: f64, eps: f64) -> Result<SineProfile> {
    if !(k > K0) || !k.is_finite() {
        return Err(Error::Config(format!("K = {k} must exceed K0 = {K0}")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Config(format!("eps = {eps} must lie in (0, 1)")));
    }
    let lhs = 0.25 * k.powi(4) / (eps * eps) * (1.0 - 4.0 / k);
    if !(lhs > k * k) {
        return Err(Error::Config(format!(
            "K = {k}, eps = {eps} violate 1/4 (K^4/eps^2)(1 - 4/K) > K^2"
        )));
    }
    Ok(SineProfile { k, eps, eta: eps / k })
}

impl SineProfile {
    /// `[h, h′, h″, h‴]` at `t`.
    pub fn derivs(&self, t: f64) -> [f64; 4] {
        let (s, c) = (t / self.eta).sin_cos();
        let half_k = 0.5 * self.k;
        [
            half_k * self.eta * self.eta * s,
            half_k * self.eta * c,
            -half_k * s,
            -half_k / self.eta * c,
        ]
    }
}

/// `[σ, σ′, σ″, σ‴]` for the smooth step `σ(t) = e(t) / (e(t) + e(1−t))`,
/// `e(t) = exp(−1/t)` for `t > 0` and `0` otherwise.
pub fn smooth_step(t: f64) -> [f64; 4] {
    if t <= 0.0 {
        return [0.0; 4];
    }
    if t >= 1.0 {
        return [1.0, 0.0, 0.0, 0.0];
    }
    // Taylor coefficients of e at t and of e(1 − ·) at t, then a series quotient.
    let a = exp_taylor(t);
    let mut b = exp_taylor(1.0 - t);
    b[1] = -b[1];
    b[3] = -b[3];
    let sum = [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]];
    let mut q = [0.0; 4];
    for k in 0..4 {
        let lower: f64 = (0..k).map(|j| q[j] * sum[k - j]).sum();
        q[k] = (a[k] - lower) / sum[0];
    }
    [q[0], q[1], 2.0 * q[2], 6.0 * q[3]]
}

/// `[e, e′, e″/2, e‴/6]` for `e(t) = exp(−1/t)`, `t > 0`.
fn exp_taylor(t: f64) -> [f64; 4] {
    let e = (-1.0 / t).exp();
    if e == 0.0 {
        return [0.0; 4];
    }
    let t2 = t * t;
    [e, e / t2, e * (1.0 - 2.0 * t) / (2.0 * t2 * t2), e * (1.0 - 6.0 * t + 6.0 * t2) / (6.0 * t2 * t2 * t2)]
}

/// `σ(t)` alone.
pub fn smooth_step_value(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / t).exp();
    let b = (-1.0 / (1.0 - t)).exp();
    a / (a + b)
}

/// Radial cutoff `χ(y) = σ((ρ + η − |y|)/η)`: `1` on `|y| ≤ ρ`, `0` on `|y| ≥ ρ + η`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialBump {
    pub rho: f64,
    pub eta_pad: f64,
    /// Measured bound on all partials of `χ` up to order 3 (at least 1).
    pub m3: f64,
}

const RADIAL_SAMPLES: usize = 200;

pub fn build_bump(rho: f64, eta_pad: f64) -> Result<RadialBump> {
    if !(rho > 0.0 && rho.is_finite()) || !(eta_pad > 0.0 && eta_pad.is_finite()) {
        return Err(Error::Config(format!(
            "rho = {rho} and eta_pad = {eta_pad} must be positive"
        )));
    }
    static MEASURED: OnceLock<Mutex<HashMap<(u64, u64), f64>>> = OnceLock::new();
    let cache = MEASURED.get_or_init(Default::default);
    if let Some(&m3) = cache.lock().unwrap().get(&(rho.to_bits(), eta_pad.to_bits())) {
        return Ok(RadialBump { rho, eta_pad, m3 });
    }
    let mut bump = RadialBump { rho, eta_pad, m3: 1.0 };
    let s3 = 1.0 / 3f64.sqrt();
    let s2 = 1.0 / 2f64.sqrt();
    let dirs: [Vec3; 7] = [
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [s2, s2, 0.0],
        [s2, 0.0, s2],
        [0.0, s2, s2],
        [s3, s3, s3],
    ];
    let mut m3: f64 = 1.0;
    for i in 0..RADIAL_SAMPLES {
        let r = rho + eta_pad * (i as f64 + 0.5) / RADIAL_SAMPLES as f64;
        for d in &dirs {
            let y = linalg::scale(d, r);
            let j = bump.jet(&[
                Jet3::variable(0, y[0]),
                Jet3::variable(1, y[1]),
                Jet3::variable(2, y[2]),
            ]);
            m3 = m3.max(jet_sup(&j));
        }
    }
    bump.m3 = m3;
    cache.lock().unwrap().insert((rho.to_bits(), eta_pad.to_bits()), m3);
    Ok(bump)
}

/// Largest absolute value among a jet's components.
pub fn jet_sup(j: &Jet3) -> f64 {
    let mut m = j.value.abs();
    for i in 0..3 {
        m = m.max(j.grad[i].abs());
        for k in 0..3 {
            m = m.max(j.hess[i][k].abs());
            for l in 0..3 {
                m = m.max(j.third[i][k][l].abs());
            }
        }
    }
    m
}

impl RadialBump {
    pub fn outer_radius(&self) -> f64 {
        self.rho + self.eta_pad
    }

    /// `χ` composed with coordinate jets `y`. Exactly constant off the shell.
    pub fn jet(&self, y: &[Jet3; 3]) -> Jet3 {
        let r2 = y[0].value * y[0].value + y[1].value * y[1].value + y[2].value * y[2].value;
        let outer = self.outer_radius();
        if r2 <= self.rho * self.rho {
            return Jet3::constant(1.0);
        }
        if r2 >= outer * outer {
            return Jet3::constant(0.0);
        }
        let r = (y[0].square() + y[1].square() + y[2].square()).sqrt();
        let t = (-r + outer).scale(1.0 / self.eta_pad);
        t.compose(smooth_step(t.value))
    }
}

/// Parameters of one perturbation layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub center: Point3,
    /// Columns `(v, T, n)` in chart coordinates; serialized column-major.
    #[serde(serialize_with = "ser_frame", deserialize_with = "de_frame")]
    pub frame: Mat3,
    #[serde(rename = "K")]
    pub k: f64,
    pub eps: f64,
    pub rho: f64,
    pub eta_pad: f64,
    pub s: f64,
}

fn ser_frame<S: Serializer>(m: &Mat3, ser: S) -> std::result::Result<S::Ok, S::Error> {
    let mut flat = [0.0; 9];
    for c in 0..3 {
        for r in 0..3 {
            flat[3 * c + r] = m[r][c];
        }
    }
    flat.serialize(ser)
}

fn de_frame<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<Mat3, D::Error> {
    let flat = <[f64; 9]>::deserialize(de)?;
    let mut m = [[0.0; 3]; 3];
    for c in 0..3 {
        for r in 0..3 {
            m[r][c] = flat[3 * c + r];
        }
    }
    Ok(m)
}

impl PerturbationSpec {
    /// Parameter checks that do not need a metric.
    pub fn validate(&self) -> Result<()> {
        if !self.center.is_finite() {
            return Err(Error::Config("layer center must be finite".into()));
        }
        build_h(self.k, self.eps)?;
        build_bump(self.rho, self.eta_pad)?;
        if !(self.s >= 0.0 && self.s.is_finite()) {
            return Err(Error::Config(format!("s = {} must be finite and non-negative", self.s)));
        }
        let d = linalg::det(&self.frame);
        if !(d.abs() > 1e-14) || !d.is_finite() {
            return Err(Error::Config(format!("layer frame is singular (det {d:e})")));
        }
        Ok(())
    }

    /// Full check against the metric being deformed: parameters, the outer
    /// ball inside the domain along non-periodic axes, and a `g`-orthonormal frame.
    pub fn validate_for(&self, metric: &ChartMetric) -> Result<()> {
        self.validate()?;
        let c = metric.normalize(&self.center)?;
        let dom = metric.domain();
        let outer = self.rho + self.eta_pad;
        for a in 0..3 {
            if metric.periodic()[a] {
                continue;
            }
            // Extent of the ellipsoid {c + A y : |y| ≤ outer} along axis a.
            let half = outer * linalg::norm(&self.frame[a]);
            if c.0[a] - half < dom.lo[a] || c.0[a] + half > dom.hi[a] {
                return Err(Error::Config(format!(
                    "outer ball around {:?} leaves the domain along axis {a}",
                    c.0
                )));
            }
        }
        let g = crate::charts::metric_jet(metric, &c)?.g;
        let gram = linalg::mat_mul(&linalg::transpose(&self.frame), &linalg::mat_mul(&g, &self.frame));
        let scale = g.iter().flatten().fold(1.0f64, |m, x| m.max(x.abs()));
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                if (gram[i][j] - target).abs() > 1e-12 * scale {
                    return Err(Error::Config(format!(
                        "layer frame is not g-orthonormal at the center (entry {i},{j} = {})",
                        gram[i][j]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Radius-related wavelength `η_sin = ε_h / K` of the sine profile
    /// actually used by the layer.
    pub fn eta_sin(&self) -> Result<f64> {
        Ok(LayerField::new(self)?.profile().eta)
    }
}

/// Precomputed evaluator for one layer's scalar `f`.
#[derive(Clone, Debug)]
pub struct LayerField {
    frame_inv: Mat3,
    bump: RadialBump,
    profile: SineProfile,
    coupling: Mat3,
}

impl LayerField {
    pub fn new(spec: &PerturbationSpec) -> Result<Self> {
        let bump = build_bump(spec.rho, spec.eta_pad)?;
        let profile = build_h(spec.k, spec.eps / (3.0 * bump.m3))?;
        let frame_inv = linalg::inverse(&spec.frame)
            .ok_or_else(|| Error::Internal("singular layer frame".into()))?;
        let (u2, u3) = (frame_inv[1], frame_inv[2]);
        let mut coupling = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                coupling[i][j] = u2[i] * u3[j] + u3[i] * u2[j];
            }
        }
        Ok(Self { frame_inv, bump, profile, coupling })
    }

    pub fn bump(&self) -> &RadialBump {
        &self.bump
    }

    pub fn profile(&self) -> &SineProfile {
        &self.profile
    }

    pub fn frame_inv(&self) -> &Mat3 {
        &self.frame_inv
    }

    /// Chart-coordinate pattern `B` with `Δg = s·f·B`.
    pub fn coupling(&self) -> &Mat3 {
        &self.coupling
    }

    /// Upper bound on `|∂^α (f B)_ij|` in chart coordinates over `|α| ≤ 3`,
    /// i.e. the `C³` size of the layer at `s = 1`.
    /// Upper bound on the spectral norm of `f·B`.
    pub fn value_bound(&self) -> f64 {
        let b = self.coupling.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        0.5 * self.profile.k * self.profile.eta * self.profile.eta * b
    }

    pub fn c3_bound(&self) -> f64 {
        let p = &self.profile;
        let h = [
            0.5 * p.k * p.eta * p.eta,
            0.5 * p.k * p.eta,
            0.5 * p.k,
            0.5 * p.k / p.eta,
        ];
        let chi = |j: usize| if j == 0 { 1.0 } else { self.bump.m3 };
        const BINOM: [[f64; 4]; 4] = [
            [1.0, 0.0, 0.0, 0.0],
            [1.0, 1.0, 0.0, 0.0],
            [1.0, 2.0, 1.0, 0.0],
            [1.0, 3.0, 3.0, 1.0],
        ];
        // ∂/∂x_i = Σ_a u_a[i] ∂/∂y_a: a derivative on χ costs a factor L, one
        // on h(y₁) only the first row of A⁻¹.
        let l = (0..3)
            .map(|i| (0..3).map(|a| self.frame_inv[a][i].abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let u = self.frame_inv[0].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let b = self.coupling.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut worst: f64 = 0.0;
        for k in 0..4 {
            let d: f64 = (0..=k)
                .map(|j| BINOM[k][j] * chi(j) * l.powi(j as i32) * h[k - j] * u.powi((k - j) as i32))
                .sum();
            worst = worst.max(d);
        }
        b * worst
    }

    /// `f` as a function of coordinate jets `y`.
    pub fn adapted_jet(&self, y: &[Jet3; 3]) -> Jet3 {
        let chi = self.bump.jet(y);
        if chi.is_zero() {
            return chi;
        }
        let h = y[0].compose(self.profile.derivs(y[0].value));
        if chi.value == 1.0 && chi.grad == [0.0; 3] {
            h
        } else {
            chi * h
        }
    }

    /// `f` in adapted coordinates at `y` (partials with respect to `y`).
    pub fn at_adapted(&self, y: &Vec3) -> Jet3 {
        self.adapted_jet(&[
            Jet3::variable(0, y[0]),
            Jet3::variable(1, y[1]),
            Jet3::variable(2, y[2]),
        ])
    }

    /// `f` in chart coordinates given the displacement `x − c`; `None` outside
    /// the outer ball.
    pub fn chart_jet(&self, d: &Vec3) -> Option<Jet3> {
        let y = linalg::mat_vec(&self.frame_inv, d);
        let outer = self.bump.outer_radius();
        if linalg::dot(&y, &y) >= outer * outer {
            return None;
        }
        let yj = [
            Jet3::affine(y[0], self.frame_inv[0]),
            Jet3::affine(y[1], self.frame_inv[1]),
            Jet3::affine(y[2], self.frame_inv[2]),
        ];
        Some(self.adapted_jet(&yj))
    }

    /// Value of `f` given the displacement `x − c`; `None` outside the outer ball.
    pub fn chart_value(&self, d: &Vec3) -> Option<f64> {
        let y = linalg::mat_vec(&self.frame_inv, d);
        let r2 = linalg::dot(&y, &y);
        let outer = self.bump.outer_radius();
        if r2 >= outer * outer {
            return None;
        }
        let chi = if r2 <= self.bump.rho * self.bump.rho {
            1.0
        } else {
            smooth_step_value((outer - r2.sqrt()) / self.bump.eta_pad)
        };
        Some(chi * self.profile.derivs(y[0])[0])
    }
}

/// Affine coordinates `y = A⁻¹(x − c)` adapted to a plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineChart {
    pub center: Point3,
    pub a: Mat3,
    pub a_inv: Mat3,
}

impl AffineChart {
    pub fn to_chart(&self, y: &Vec3) -> Point3 {
        Point3(linalg::add(&self.center.0, &linalg::mat_vec(&self.a, y)))
    }

    pub fn to_adapted(&self, metric: &ChartMetric, x: &Point3) -> Vec3 {
        linalg::mat_vec(&self.a_inv, &metric.displacement(&x.0, &self.center.0))
    }
}

/// Adapted chart of a plane with columns `(e1, e2, n)`, and a layer skeleton
/// with the given parameters and `s = 0`.
pub fn adapted_chart(
    plane: &TangentPlane,
    k: f64,
    eps: f64,
    rho: f64,
    eta_pad: f64,
) -> Result<(AffineChart, PerturbationSpec)> {
    let a = linalg::from_columns(&plane.e1, &plane.e2, &plane.n);
    let a_inv = linalg::inverse(&a)
        .ok_or_else(|| Error::Internal("plane frame is singular".into()))?;
    let chart = AffineChart { center: plane.base, a, a_inv };
    let spec = PerturbationSpec {
        center: plane.base,
        frame: a,
        k,
        eps,
        rho,
        eta_pad,
        s: 0.0,
    };
    Ok((chart, spec))
}

/// A base metric together with the layers added to it.
#[derive(Clone, Debug)]
pub struct DeformedMetric {
    pub base: ChartMetric,
    pub layers: Vec<PerturbationSpec>,
    metric: ChartMetric,
}

impl DeformedMetric {
    pub fn identity(base: &ChartMetric) -> Self {
        Self { base: base.clone(), layers: Vec::new(), metric: base.clone() }
    }

    /// The combined metric `base + Σ layers`.
    pub fn metric(&self) -> &ChartMetric {
        &self.metric
    }

    pub fn into_metric(self) -> ChartMetric {
        self.metric
    }

    pub(crate) fn push_unchecked(&mut self, spec: PerturbationSpec) -> Result<()> {
        self.metric.push_layer(spec.clone())?;
        self.layers.push(spec);
        Ok(())
    }

    /// Add another layer on top of the current combined metric.
    pub fn push(&mut self, spec: PerturbationSpec) -> Result<()> {
        let next = deform(&self.metric, spec.clone())?;
        self.metric = next.metric;
        self.layers.push(spec);
        Ok(())
    }
}

const VALIDATION_GRID: usize = 16;

/// Sample points of the box bounding the layer's outer ball, clipped to the domain.
fn validation_points(metric: &ChartMetric, spec: &PerturbationSpec) -> Vec<Point3> {
    let outer = spec.rho + spec.eta_pad;
    let dom = metric.domain();
    let mut lo = [0.0; 3];
    let mut hi = [0.0; 3];
    for a in 0..3 {
        let half = outer * linalg::norm(&spec.frame[a]);
        lo[a] = spec.center.0[a] - half;
        hi[a] = spec.center.0[a] + half;
        if !metric.periodic()[a] {
            lo[a] = lo[a].max(dom.lo[a]);
            hi[a] = hi[a].min(dom.hi[a]);
        }
    }
    let n = VALIDATION_GRID;
    let mut pts = Vec::with_capacity(n * n * n);
    let at = |a: usize, i: usize| lo[a] + (hi[a] - lo[a]) * i as f64 / (n - 1) as f64;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                pts.push(Point3::new(at(0, i), at(1, j), at(2, k)));
            }
        }
    }
    pts
}

/// Positive-definiteness of `g + s f B` at the validation points of one layer.
///
/// A Weyl bound settles most scales without sampling: the base is at least
/// its Gershgorin bound minus every existing layer's size, and the new layer
/// moves eigenvalues by at most `s |f B|`. The sampled check runs only when
/// that is inconclusive.
pub struct PositivityProbe<'a> {
    base: &'a ChartMetric,
    spec: PerturbationSpec,
    field: LayerField,
    margin: f64,
    samples: OnceLock<Result<Vec<(Mat3, f64)>>>,
}

impl<'a> PositivityProbe<'a> {
    pub fn new(base: &'a ChartMetric, spec: &PerturbationSpec) -> Result<Self> {
        let field = LayerField::new(spec)?;
        let mut floor = f64::INFINITY;
        for p in validation_points(base, spec) {
            let x = base.normalize(&p)?;
            if field.chart_value(&base.displacement(&x.0, &spec.center.0)).is_some() {
                floor = floor.min(linalg::gershgorin_floor(&base.field_values(&x.0)));
            }
        }
        let margin = floor - base.perturbation_bound();
        Ok(Self { base, spec: spec.clone(), field, margin, samples: OnceLock::new() })
    }

    fn samples(&self) -> Result<&[(Mat3, f64)]> {
        let cached = self.samples.get_or_init(|| {
            let mut out = Vec::new();
            for p in validation_points(self.base, &self.spec) {
                let x = self.base.normalize(&p)?;
                // Off the support the coefficients are the base's, assumed positive.
                if let Some(f) = self.field.chart_value(&self.base.displacement(&x.0, &self.spec.center.0)) {
                    out.push((self.base.coefficient_values(&x.0), f));
                }
            }
            Ok(out)
        });
        match cached {
            Ok(v) => Ok(v),
            Err(e) => Err(Error::Internal(format!("positivity samples: {e}"))),
        }
    }

    pub fn admits(&self, s: f64) -> bool {
        if s * self.field.value_bound() < self.margin {
            return true;
        }
        let Ok(samples) = self.samples() else { return false };
        let b = self.field.coupling();
        samples.iter().all(|(g, f)| {
            let mut g = *g;
            for i in 0..3 {
                for j in 0..3 {
                    g[i][j] += s * f * b[i][j];
                }
            }
            linalg::leading_minors(&g).iter().all(|&m| m > 0.0)
        })
    }

    /// Largest admissible scale below `s`, by bisection.
    pub fn max_admissible(&self, s: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, s);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.admits(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

/// Add one layer to `base` without the positivity check.
pub(crate) fn with_layer_unchecked(base: &ChartMetric, spec: PerturbationSpec) -> Result<ChartMetric> {
    let mut metric = base.clone();
    metric.push_layer(spec)?;
    Ok(metric)
}

/// Add one layer to `base`. Fails if the result loses positive definiteness on
/// the validation grid, reporting the largest admissible `s`.
pub fn deform(base: &ChartMetric, spec: PerturbationSpec) -> Result<DeformedMetric> {
    spec.validate_for(base)?;
    let probe = PositivityProbe::new(base, &spec)?;
    if !probe.admits(spec.s) {
        return Err(Error::DeformationTooLarge { s: spec.s, max_admissible_s: probe.max_admissible(spec.s) });
    }
    let metric = with_layer_unchecked(base, spec.clone())?;
    Ok(DeformedMetric { base: base.clone(), layers: vec![spec], metric })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charts::{metric_jet, zoo_metric};
    use std::collections::BTreeMap;

    fn flat() -> ChartMetric {
        zoo_metric("flat_torus", &BTreeMap::new()).unwrap()
    }

    fn spec(s: f64) -> PerturbationSpec {
        PerturbationSpec {
            center: Point3::new(0.5, 0.5, 0.5),
            frame: linalg::IDENTITY,
            k: 100.0,
            eps: 0.01,
            rho: 0.2,
            eta_pad: 0.1,
            s,
        }
    }

    #[test]
    fn h_closed_forms() {
        let h = build_h(100.0, 0.01).unwrap();
        let d0 = h.derivs(0.0);
        assert_eq!(d0[0], 0.0);
        assert!((d0[1] - 0.005).abs() < 1e-15);
        let d = h.derivs(std::f64::consts::FRAC_PI_2 * h.eta);
        assert!((d[2] + 50.0).abs() < 1e-12);
    }

    #[test]
    fn h_rejects_bad_parameters() {
        assert!(build_h(64.0, 0.01).is_err());
        assert!(build_h(100.0, 1.0).is_err());
        assert!(build_h(100.0, 0.0).is_err());
    }

    #[test]
    fn smooth_step_symmetry_and_ends() {
        assert_eq!(smooth_step(0.5)[0], 0.5);
        assert_eq!(smooth_step(-1.0), [0.0; 4]);
        assert_eq!(smooth_step(1.0), [1.0, 0.0, 0.0, 0.0]);
        for t in [0.1, 0.3, 0.45] {
            let a = smooth_step(t);
            let b = smooth_step(1.0 - t);
            assert!((a[0] + b[0] - 1.0).abs() < 1e-15);
            assert!((a[1] - b[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn bump_plateau_support_and_midpoint() {
        let b = build_bump(0.2, 0.1).unwrap();
        let at = |r: f64| {
            b.jet(&[Jet3::variable(0, r), Jet3::variable(1, 0.0), Jet3::variable(2, 0.0)])
        };
        assert_eq!(at(0.1), Jet3::constant(1.0));
        assert_eq!(at(0.4), Jet3::constant(0.0));
        assert!((at(0.25).value - 0.5).abs() < 1e-15);
        assert!(b.m3 > 1.0);
    }

    #[test]
    fn f_inside_u_is_the_profile() {
        let field = LayerField::new(&spec(1.0)).unwrap();
        let y = [0.05, -0.07, 0.1];
        let f = field.at_adapted(&y);
        let h = field.profile().derivs(y[0]);
        assert_eq!(f.value, h[0]);
        assert_eq!(f.grad, [h[1], 0.0, 0.0]);
        for i in 0..3 {
            for j in 0..3 {
                for k in 1..3 {
                    assert_eq!(f.third[i][j][k], 0.0);
                }
            }
        }
    }

    #[test]
    fn zero_scale_leaves_metric_unchanged() {
        let base = flat();
        let d = deform(&base, spec(0.0)).unwrap();
        let p = Point3::new(0.55, 0.45, 0.5);
        assert_eq!(metric_jet(&base, &p).unwrap(), metric_jet(d.metric(), &p).unwrap());
    }

    #[test]
    fn outside_outer_ball_is_bitwise_base() {
        let base = zoo_metric("random_fourier", &BTreeMap::new()).unwrap();
        let plane = crate::grassmann::orthonormal_plane(
            &base,
            &Point3::new(0.5, 0.5, 0.5),
            &[1.0, 0.0, 0.0],
            &[0.0, 1.0, 0.0],
        )
        .unwrap();
        let (_, mut sp) = adapted_chart(&plane, 100.0, 0.01, 0.2, 0.1).unwrap();
        sp.s = 0.3;
        let d = deform(&base, sp).unwrap();
        let p = Point3::new(0.05, 0.9, 0.1);
        assert_eq!(metric_jet(&base, &p).unwrap(), metric_jet(d.metric(), &p).unwrap());
    }

    #[test]
    fn first_partial_at_center() {
        let s = 0.01;
        let d = deform(&flat(), spec(s)).unwrap();
        let j = metric_jet(d.metric(), &Point3::new(0.5, 0.5, 0.5)).unwrap();
        let field = LayerField::new(&spec(s)).unwrap();
        assert_eq!(j.g[1][2], 0.0);
        let expect = s * field.profile().eps / 2.0;
        assert!((j.dg[0][1][2] - expect).abs() < 1e-18);
    }

    #[test]
    fn excessive_scale_reports_admissible_bound() {
        let err = deform(&flat(), spec(1e20)).unwrap_err();
        match err {
            Error::DeformationTooLarge { s, max_admissible_s } => {
                assert_eq!(s, 1e20);
                assert!(max_admissible_s > 0.0 && max_admissible_s < 1e20);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn smooth_step_matches_jet_composition() {
        for i in 1..200 {
            let t = i as f64 / 200.0;
            let x = Jet3::variable(0, t);
            let a = (-x.recip()).exp();
            let b = (-(-x + 1.0).recip()).exp();
            let sig = a / (a + b);
            let want = [sig.value, sig.grad[0], sig.hess[0][0], sig.third[0][0][0]];
            let got = smooth_step(t);
            for k in 0..4 {
                assert!((got[k] - want[k]).abs() <= 1e-12 * (1.0 + want[k].abs()), "t = {t}, order {k}");
            }
        }
    }

    #[test]
    fn smooth_step_value_matches_jet() {
        for i in -2..=102 {
            let t = i as f64 / 100.0;
            assert!((smooth_step_value(t) - smooth_step(t)[0]).abs() < 1e-15, "t = {t}");
        }
    }

    #[test]
    fn values_match_jets_and_a_plain_sum_across_the_wrap() {
        let base = flat();
        let mut near_edge = spec(1e-6);
        near_edge.center = Point3::new(0.02, 0.97, 0.5);
        let mut d = deform(&base, spec(1e-6)).unwrap();
        d.push(near_edge.clone()).unwrap();
        let fields = [LayerField::new(&spec(1e-6)).unwrap(), LayerField::new(&near_edge).unwrap()];
        let mut hit = 0;
        for i in 0..2000 {
            let x = [(i as f64 * 0.618_034) % 1.0, (i as f64 * 0.414_214) % 1.0, (i as f64 * 0.732_051) % 1.0];
            let mut expect = base.coefficient_values(&x);
            for (field, c) in fields.iter().zip([spec(1e-6).center, near_edge.center]) {
                if let Some(f) = field.chart_value(&base.displacement(&x, &c.0)) {
                    hit += 1;
                    for a in 0..3 {
                        for b in 0..3 {
                            expect[a][b] += 1e-6 * f * field.coupling()[a][b];
                        }
                    }
                }
            }
            let got = d.metric().coefficient_values(&x);
            let jet = d.metric().raw_jet(&Point3(x)).unwrap().g;
            for a in 0..3 {
                for b in 0..3 {
                    assert!((got[a][b] - expect[a][b]).abs() < 1e-18, "{x:?}");
                    assert!((got[a][b] - jet[a][b]).abs() < 1e-18, "{x:?}");
                }
            }
        }
        assert!(hit > 100);
    }

    #[test]
    fn probe_bound_matches_deform_error() {
        let base = flat();
        let probe = PositivityProbe::new(&base, &spec(1.0)).unwrap();
        assert!(probe.admits(0.0));
        assert!(!probe.admits(1e20));
        let m = probe.max_admissible(1e20);
        match deform(&flat(), spec(1e20)).unwrap_err() {
            Error::DeformationTooLarge { max_admissible_s, .. } => assert_eq!(max_admissible_s, m),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn spec_json_field_order() {
        let text = serde_json::to_string(&spec(0.5)).unwrap();
        let keys: Vec<_> = ["center", "frame", "\"K\"", "eps", "rho", "eta_pad", "\"s\""]
            .iter()
            .map(|k| text.find(k).unwrap())
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]), "{text}");
        let back: PerturbationSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec(0.5));
    }
}
