//! Regular lattices over a box in chart coordinates and tensor-product
//! interpolation of node data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    /// Linear (j = 1) or bilinear (j = 2).
    Linear,
    /// Tensor-product cubic Lagrange on a 4-point stencil per axis.
    #[default]
    Cubic,
}

/// Axis-aligned lattice with `nodes` points per axis over `center ± radius`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub center: Vec<f64>,
    pub radius: f64,
    pub nodes: usize,
}

impl Lattice {
    pub fn new(center: Vec<f64>, radius: f64, nodes: usize) -> Result<Self> {
        let j = center.len();
        if !(1..=2).contains(&j) {
            return Err(Error::pre(format!(
                "lattices are built for j in {{1, 2}}, got j = {j}"
            )));
        }
        if nodes == 0 || !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::pre(format!(
                "bad lattice: {nodes} nodes over radius {radius}"
            )));
        }
        Ok(Lattice {
            center,
            radius,
            nodes,
        })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn len(&self) -> usize {
        self.nodes.pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> f64 {
        if self.nodes > 1 {
            2.0 * self.radius / (self.nodes - 1) as f64
        } else {
            0.0
        }
    }

    /// Multi-index of a flat node index (first axis fastest).
    pub fn multi(&self, flat: usize) -> Vec<usize> {
        let mut rest = flat;
        (0..self.dim())
            .map(|_| {
                let k = rest % self.nodes;
                rest /= self.nodes;
                k
            })
            .collect()
    }

    pub fn flat(&self, multi: &[usize]) -> usize {
        multi.iter().rev().fold(0, |acc, &k| acc * self.nodes + k)
    }

    fn axis_coord(&self, axis: usize, k: usize) -> f64 {
        self.center[axis] - self.radius + k as f64 * self.spacing()
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi(flat)
            .iter()
            .enumerate()
            .map(|(a, &k)| self.axis_coord(a, k))
            .collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    fn mid(&self) -> usize {
        (self.nodes - 1) / 2
    }

    /// Chebyshev distance in index space from the central node.
    pub fn ring(&self, flat: usize) -> usize {
        let c = self.mid();
        self.multi(flat)
            .iter()
            .map(|&k| k.abs_diff(c))
            .max()
            .unwrap_or(0)
    }

    /// Node indices grouped by ring, rings in increasing order.
    pub fn rings(&self) -> Vec<Vec<usize>> {
        let mut rings: Vec<Vec<usize>> = Vec::new();
        for i in 0..self.len() {
            let r = self.ring(i);
            if rings.len() <= r {
                rings.resize(r + 1, Vec::new());
            }
            rings[r].push(i);
        }
        rings.retain(|r| !r.is_empty());
        rings
    }

    /// The neighbor one step closer to the center along every off-center axis.
    pub fn inward(&self, flat: usize) -> usize {
        let c = self.mid();
        let m: Vec<usize> = self
            .multi(flat)
            .iter()
            .map(|&k| match k.cmp(&c) {
                std::cmp::Ordering::Less => k + 1,
                std::cmp::Ordering::Greater => k - 1,
                std::cmp::Ordering::Equal => k,
            })
            .collect();
        self.flat(&m)
    }

    /// True when `zeta` lies in the box enlarged by `slack` spacings.
    pub fn contains(&self, zeta: &[f64], slack: f64) -> bool {
        let pad = slack * self.spacing();
        zeta.iter()
            .zip(&self.center)
            .all(|(z, c)| (z - c).abs() <= self.radius + pad + 1e-12 * (1.0 + self.radius))
    }

    /// Fractional index of `zeta` along `axis`.
    fn fractional(&self, axis: usize, z: f64) -> f64 {
        if self.nodes == 1 {
            return 0.0;
        }
        (z - (self.center[axis] - self.radius)) / self.spacing()
    }

    /// Per-axis stencil node indices and weights.
    fn stencil(&self, axis: usize, z: f64, mode: Interpolation) -> Vec<(usize, f64)> {
        let n = self.nodes;
        if n == 1 {
            return vec![(0, 1.0)];
        }
        let x = self.fractional(axis, z);
        match mode {
            Interpolation::Linear => {
                let base = (x.floor().max(0.0) as usize).min(n - 2);
                let t = x - base as f64;
                vec![(base, 1.0 - t), (base + 1, t)]
            }
            Interpolation::Cubic if n >= 4 => {
                let base = (x.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
                let t = x - base as f64;
                (0..4)
                    .map(|a| {
                        let w: f64 = (0..4)
                            .filter(|&b| b != a)
                            .map(|b| (t - b as f64) / (a as f64 - b as f64))
                            .product();
                        (base + a, w)
                    })
                    .collect()
            }
            Interpolation::Cubic => self.stencil(axis, z, Interpolation::Linear),
        }
    }

    /// Interpolates vector-valued node data at `zeta` (extrapolating near the box).
    pub fn interpolate(&self, data: &[Vec<f64>], zeta: &[f64], mode: Interpolation) -> Vec<f64> {
        let width = data.first().map_or(0, Vec::len);
        let mut out = vec![0.0; width];
        let s0 = self.stencil(0, zeta[0], mode);
        if self.dim() == 1 {
            for (k, w) in s0 {
                for (o, d) in out.iter_mut().zip(&data[k]) {
                    *o += w * d;
                }
            }
            return out;
        }
        let s1 = self.stencil(1, zeta[1], mode);
        for &(k1, w1) in &s1 {
            for &(k0, w0) in &s0 {
                let w = w0 * w1;
                let node = self.flat(&[k0, k1]);
                for (o, d) in out.iter_mut().zip(&data[node]) {
                    *o += w * d;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indices_round_trip_and_rings() {
        let l = Lattice::new(vec![0.0, 1.0], 2.0, 5).unwrap();
        for i in 0..l.len() {
            assert_eq!(l.flat(&l.multi(i)), i);
        }
        assert_eq!(l.point(0), vec![-2.0, -1.0]);
        let rings = l.rings();
        assert_eq!(rings.len(), 3);
        assert_eq!(rings[0], vec![12]);
        assert_eq!(rings[2].len(), 16);
        assert_eq!(l.ring(l.inward(0)), 1);
    }

    #[test]
    fn cubic_reproduces_cubics_and_linear_reproduces_affine() {
        let l = Lattice::new(vec![0.5], 1.0, 9).unwrap();
        let f = |x: f64| vec![x * x * x - 2.0 * x + 1.0, 3.0 * x];
        let data: Vec<Vec<f64>> = l.points().iter().map(|p| f(p[0])).collect();
        for x in [-0.5, -0.37, 0.1, 0.93, 1.5, 1.6] {
            let v = l.interpolate(&data, &[x], Interpolation::Cubic);
            assert!((v[0] - f(x)[0]).abs() < 1e-12 && (v[1] - f(x)[1]).abs() < 1e-12);
            let v = l.interpolate(&data, &[x], Interpolation::Linear);
            assert!((v[1] - f(x)[1]).abs() < 1e-12);
        }
        let l2 = Lattice::new(vec![0.0, 0.0], 1.0, 7).unwrap();
        let g = |p: &[f64]| vec![p[0] * p[0] * p[1] + p[1].powi(3)];
        let data: Vec<Vec<f64>> = l2.points().iter().map(|p| g(p)).collect();
        let z = [0.31, -0.77];
        assert!((l2.interpolate(&data, &z, Interpolation::Cubic)[0] - g(&z)[0]).abs() < 1e-12);
    }

    #[test]
    fn single_node_lattice() {
        let l = Lattice::new(vec![0.0], 0.0, 1).unwrap();
        assert_eq!(l.len(), 1);
        assert_eq!(
            l.interpolate(&[vec![2.0]], &[0.0], Interpolation::Cubic),
            vec![2.0]
        );
        assert!(Lattice::new(vec![], 1.0, 3).is_err());
    }

    proptest::proptest! {
        #[test]
        fn affine_data_is_reproduced(
            a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0,
            x in -1.2f64..1.2, y in -1.2f64..1.2, cubic: bool,
        ) {
            let l = Lattice::new(vec![0.0, 0.0], 1.0, 7).unwrap();
            let g = |z: &[f64]| a * z[0] + b * z[1] + c;
            let data: Vec<Vec<f64>> = l.points().iter().map(|z| vec![g(z)]).collect();
            let mode = if cubic { Interpolation::Cubic } else { Interpolation::Linear };
            let got = l.interpolate(&data, &[x, y], mode)[0];
            proptest::prop_assert!((got - g(&[x, y])).abs() < 1e-11);
        }
    }
}
