//! Quantization lattices.
//!
//! Two lattices are provided: the scaled integer lattice `ΔZ^k` and the
//! hexagonal lattice A2. Both expose nearest-point quantization, the basic
//! (Voronoi) cell's volume and covering box, and uniform dither over the
//! basic cell.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatticeKind {
    /// `ΔZ^k`, cube cell of side `step`.
    ScaledInteger { step: f64, dim: usize },
    /// A2 with minimum distance `scale`, hexagonal cell.
    Hexagonal { scale: f64 },
}

/// Integer coordinates of a lattice point in the generator basis.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticeIndex(pub Vec<i64>);

impl LatticeIndex {
    pub fn origin(dim: usize) -> Self {
        Self(vec![0; dim])
    }

    pub fn is_origin(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    kind: LatticeKind,
    /// Row-major `k × k`; column `j` is basis vector `j`.
    generator: Vec<f64>,
    inverse: Vec<f64>,
    cell_volume: f64,
}

impl Lattice {
    pub fn new(kind: LatticeKind) -> Result<Self> {
        match kind {
            LatticeKind::ScaledInteger { step, dim } => Self::scaled_integer(step, dim),
            LatticeKind::Hexagonal { scale } => Self::hexagonal(scale),
        }
    }

    pub fn scaled_integer(step: f64, dim: usize) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(invalid(format!(
                "lattice step must be positive, got {step}"
            )));
        }
        if dim == 0 {
            return Err(invalid("lattice dimension must be positive"));
        }
        let mut generator = vec![0.0; dim * dim];
        let mut inverse = vec![0.0; dim * dim];
        for i in 0..dim {
            generator[i * dim + i] = step;
            inverse[i * dim + i] = 1.0 / step;
        }
        Ok(Self {
            kind: LatticeKind::ScaledInteger { step, dim },
            generator,
            inverse,
            cell_volume: step.powi(dim as i32),
        })
    }

    pub fn hexagonal(scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(invalid(format!(
                "lattice scale must be positive, got {scale}"
            )));
        }
        let h = scale * 3f64.sqrt() / 2.0;
        let generator = vec![scale, 0.5 * scale, 0.0, h];
        let det = scale * h;
        let inverse = vec![h / det, -0.5 * scale / det, 0.0, scale / det];
        Ok(Self {
            kind: LatticeKind::Hexagonal { scale },
            generator,
            inverse,
            cell_volume: det,
        })
    }

    pub fn kind(&self) -> LatticeKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            LatticeKind::ScaledInteger { dim, .. } => dim,
            LatticeKind::Hexagonal { .. } => 2,
        }
    }

    /// Volume `V` of the basic cell, `|det G|`.
    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    pub fn generator(&self) -> &[f64] {
        &self.generator
    }

    /// Cube cell side for the scaled integer lattice.
    pub fn step(&self) -> Option<f64> {
        match self.kind {
            LatticeKind::ScaledInteger { step, .. } => Some(step),
            LatticeKind::Hexagonal { .. } => None,
        }
    }

    /// Whether the basic cell is mirror-symmetric in every coordinate.
    pub fn is_coordinate_symmetric(&self) -> bool {
        // the A2 cell here has vertices on both axes, so it is symmetric too
        true
    }

    pub fn label(&self) -> String {
        match self.kind {
            LatticeKind::ScaledInteger { step, dim } => format!("cube(step={step},dim={dim})"),
            LatticeKind::Hexagonal { scale } => format!("hex(scale={scale})"),
        }
    }

    pub fn point(&self, index: &LatticeIndex) -> Vec<f64> {
        let k = self.dim();
        debug_assert_eq!(index.dim(), k);
        (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| self.generator[i * k + j] * index.0[j] as f64)
                    .sum()
            })
            .collect()
    }

    fn to_basis(&self, x: &[f64]) -> Vec<f64> {
        let k = self.dim();
        (0..k)
            .map(|i| (0..k).map(|j| self.inverse[i * k + j] * x[j]).sum())
            .collect()
    }

    /// Closest lattice point to `x`.
    ///
    /// Ties (a measure-zero set) go to round-half-to-even per axis on the
    /// scaled integer lattice and to the lexicographically smallest index on
    /// the hexagonal lattice.
    pub fn nearest_point(&self, x: &[f64]) -> (LatticeIndex, Vec<f64>) {
        assert_eq!(
            x.len(),
            self.dim(),
            "input dimension does not match the lattice"
        );
        match self.kind {
            LatticeKind::ScaledInteger { step, .. } => {
                let idx = LatticeIndex(
                    x.iter()
                        .map(|v| (v / step).round_ties_even() as i64)
                        .collect(),
                );
                let p = self.point(&idx);
                (idx, p)
            }
            LatticeKind::Hexagonal { .. } => {
                // nearest point is a corner of the enclosing basis
                // parallelogram (two equilateral Delaunay triangles)
                let c = self.to_basis(x);
                let base = [c[0].floor() as i64, c[1].floor() as i64];
                let mut best: Option<(f64, LatticeIndex, Vec<f64>)> = None;
                for d0 in 0..2 {
                    for d1 in 0..2 {
                        let idx = LatticeIndex(vec![base[0] + d0, base[1] + d1]);
                        let p = self.point(&idx);
                        let dist = (p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2);
                        let better = match &best {
                            None => true,
                            Some((bd, bi, _)) => dist < *bd || (dist == *bd && idx < *bi),
                        };
                        if better {
                            best = Some((dist, idx, p));
                        }
                    }
                }
                let (_, idx, p) = best.expect("four candidates");
                (idx, p)
            }
        }
    }

    /// Uniform draw over the basic cell.
    pub fn sample_dither<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self.kind {
            LatticeKind::ScaledInteger { step, dim } => (0..dim)
                .map(|_| (rng.random::<f64>() - 0.5) * step)
                .collect(),
            LatticeKind::Hexagonal { .. } => {
                // uniform on the fundamental parallelepiped, folded into the
                // Voronoi cell by subtracting the nearest lattice point
                let k = self.dim();
                let r: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
                let u: Vec<f64> = (0..k)
                    .map(|i| (0..k).map(|j| self.generator[i * k + j] * r[j]).sum())
                    .collect();
                let (_, p) = self.nearest_point(&u);
                u.iter().zip(&p).map(|(a, b)| a - b).collect()
            }
        }
    }

    /// Whether `z` lies in the closed basic cell (up to rounding).
    pub fn cell_contains(&self, z: &[f64]) -> bool {
        if z.len() != self.dim() || z.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self.kind {
            LatticeKind::ScaledInteger { step, .. } => {
                z.iter().all(|v| v.abs() <= 0.5 * step * (1.0 + 1e-12))
            }
            LatticeKind::Hexagonal { scale } => {
                let (_, p) = self.nearest_point(z);
                let to_nearest = ((z[0] - p[0]).powi(2) + (z[1] - p[1]).powi(2)).sqrt();
                let to_origin = (z[0] * z[0] + z[1] * z[1]).sqrt();
                to_origin <= to_nearest + 1e-12 * scale
            }
        }
    }

    pub fn check_dither(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: z.len(),
            });
        }
        if self.cell_contains(z) {
            Ok(())
        } else {
            Err(Error::DitherOutsideCell(z.to_vec()))
        }
    }

    /// Vertices of the 2-D basic cell in counter-clockwise order, found as
    /// circumcentres of the origin and consecutive shortest lattice vectors.
    /// `None` for the scaled integer lattice in dimension other than 2.
    pub fn cell_vertices(&self) -> Option<Vec<[f64; 2]>> {
        match self.kind {
            LatticeKind::ScaledInteger { step, dim: 2 } => {
                let h = 0.5 * step;
                Some(vec![[h, h], [-h, h], [-h, -h], [h, -h]])
            }
            LatticeKind::ScaledInteger { .. } => None,
            LatticeKind::Hexagonal { .. } => {
                let mut neighbours: Vec<[f64; 2]> =
                    [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)]
                        .iter()
                        .map(|&(a, b)| {
                            let p = self.point(&LatticeIndex(vec![a, b]));
                            [p[0], p[1]]
                        })
                        .collect();
                neighbours.sort_by(|a, b| {
                    a[1].atan2(a[0])
                        .rem_euclid(2.0 * PI)
                        .total_cmp(&b[1].atan2(b[0]).rem_euclid(2.0 * PI))
                });
                let n = neighbours.len();
                Some(
                    (0..n)
                        .map(|j| circumcentre_with_origin(neighbours[j], neighbours[(j + 1) % n]))
                        .collect(),
                )
            }
        }
    }

    /// Per-axis `[inf τ_i, sup τ_i]` over the basic cell.
    pub fn covering_box(&self) -> Vec<(f64, f64)> {
        match self.kind {
            LatticeKind::ScaledInteger { step, dim } => vec![(-0.5 * step, 0.5 * step); dim],
            LatticeKind::Hexagonal { .. } => {
                let v = self.cell_vertices().expect("2-D cell");
                (0..2)
                    .map(|i| {
                        v.iter()
                            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                                (lo.min(p[i]), hi.max(p[i]))
                            })
                    })
                    .collect()
            }
        }
    }

    /// Extent `[lo, hi]` of the 2-D basic cell along axis 1 at `τ_0 = t`.
    /// Empty cells return `None`.
    pub fn cell_section(&self, t: f64) -> Option<(f64, f64)> {
        let v = self.cell_vertices()?;
        let n = v.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for j in 0..n {
            let (a, b) = (v[j], v[(j + 1) % n]);
            let (x0, x1) = (a[0].min(b[0]), a[0].max(b[0]));
            if t < x0 || t > x1 {
                continue;
            }
            if (b[0] - a[0]).abs() < 1e-300 {
                lo = lo.min(a[1].min(b[1]));
                hi = hi.max(a[1].max(b[1]));
            } else {
                let y = a[1] + (t - a[0]) * (b[1] - a[1]) / (b[0] - a[0]);
                lo = lo.min(y);
                hi = hi.max(y);
            }
        }
        (lo <= hi).then_some((lo, hi))
    }
}

fn circumcentre_with_origin(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let d = 2.0 * (a[0] * b[1] - a[1] * b[0]);
    let na = a[0] * a[0] + a[1] * a[1];
    let nb = b[0] * b[0] + b[1] * b[1];
    [(na * b[1] - nb * a[1]) / d, (nb * a[0] - na * b[0]) / d]
}
