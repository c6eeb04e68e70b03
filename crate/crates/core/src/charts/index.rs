//! Uniform cell lookup of layer supports.

use std::sync::Arc;

use crate::linalg::{self, Vec3};
use crate::perturb::PerturbationSpec;

use super::Domain;

const CELLS: usize = 16;

/// Per-cell lists of layers whose support box meets the cell, in push order.
/// Cells are shared between clones and copied on write.
#[derive(Clone, Debug, Default)]
pub(super) struct LayerIndex {
    buckets: Vec<Arc<Vec<u32>>>,
}

impl LayerIndex {
    pub fn clear(&mut self) {
        self.buckets.clear();
    }

    pub fn insert(&mut self, id: usize, spec: &PerturbationSpec, domain: &Domain, periodic: [bool; 3]) {
        if self.buckets.is_empty() {
            self.buckets = (0..CELLS * CELLS * CELLS).map(|_| Arc::default()).collect();
        }
        let outer = spec.rho + spec.eta_pad;
        let mut ranges: [Vec<usize>; 3] = Default::default();
        for a in 0..3 {
            // |d_a| <= |row_a(A)| |y| on the support, padded against rounding.
            let half = outer * linalg::norm(&spec.frame[a]) * (1.0 + 1e-9) + 1e-12;
            let size = domain.extent(a) / CELLS as f64;
            let lo = ((spec.center.0[a] - half - domain.lo[a]) / size).floor() as i64;
            let hi = ((spec.center.0[a] + half - domain.lo[a]) / size).floor() as i64;
            let n = CELLS as i64;
            ranges[a] = if periodic[a] {
                if hi - lo + 1 >= n {
                    (0..CELLS).collect()
                } else {
                    (lo..=hi).map(|c| c.rem_euclid(n) as usize).collect()
                }
            } else {
                (lo.max(0)..=hi.min(n - 1)).map(|c| c as usize).collect()
            };
        }
        for &i in &ranges[0] {
            for &j in &ranges[1] {
                for &k in &ranges[2] {
                    Arc::make_mut(&mut self.buckets[(i * CELLS + j) * CELLS + k]).push(id as u32);
                }
            }
        }
    }

    /// Layers that may be nonzero at a normalized point.
    pub fn candidates(&self, x: &Vec3, domain: &Domain) -> &[u32] {
        if self.buckets.is_empty() {
            return &[];
        }
        let mut c = [0usize; 3];
        for a in 0..3 {
            let size = domain.extent(a) / CELLS as f64;
            let t = ((x[a] - domain.lo[a]) / size).floor();
            c[a] = if t.is_nan() || t < 0.0 { 0 } else { (t as usize).min(CELLS - 1) };
        }
        &self.buckets[(c[0] * CELLS + c[1]) * CELLS + c[2]]
    }
}
