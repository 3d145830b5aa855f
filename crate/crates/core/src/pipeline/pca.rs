//! Two-component principal-component projection of CST vectors.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::sampling::{DesignId, DesignSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaPoint {
    pub id: DesignId,
    pub stage: usize,
    pub xy: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca2 {
    pub mean: Vec<f64>,
    /// Unit principal axes, largest variance first.
    pub components: [Vec<f64>; 2],
    pub explained_variance: [f64; 2],
    pub points: Vec<PcaPoint>,
}

impl Pca2 {
    pub fn point(&self, id: &DesignId) -> Option<[f64; 2]> {
        self.points.iter().rev().find(|p| &p.id == id).map(|p| p.xy)
    }
}

/// Fits PCA on the union of all members' CST vectors and projects each
/// member of each set. Returns `None` when there are no members.
pub fn project_pca2(sets: &[&DesignSet]) -> Option<Pca2> {
    let rows: Vec<(&DesignId, usize, &[f64])> = sets
        .iter()
        .flat_map(|s| s.members.iter().map(move |m| (&m.id, s.stage, &m.params[..])))
        .collect();
    let n = rows.len();
    let d = rows.first()?.2.len();
    let mut mean = vec![0.0; d];
    for (_, _, r) in &rows {
        for (m, v) in mean.iter_mut().zip(*r) {
            *m += v / n as f64;
        }
    }
    let centred = DMatrix::from_fn(n, d, |i, j| rows[i].2[j] - mean[j]);
    let cov = centred.transpose() * &centred / (n.max(2) - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let axis = |k: usize| -> Vec<f64> {
        let col = eig.eigenvectors.column(order[k]);
        // Fix the sign so the largest-magnitude entry is positive.
        let pivot = col
            .iter()
            .copied()
            .fold(0.0f64, |p, v| if v.abs() > p.abs() { v } else { p });
        let s = if pivot < 0.0 { -1.0 } else { 1.0 };
        col.iter().map(|v| s * v).collect()
    };
    let components = [axis(0), axis(1.min(d - 1))];
    let points = rows
        .iter()
        .map(|(id, stage, r)| {
            let proj = |c: &[f64]| r.iter().zip(&mean).zip(c).map(|((v, m), w)| (v - m) * w).sum::<f64>();
            PcaPoint {
                id: (*id).clone(),
                stage: *stage,
                xy: [proj(&components[0]), proj(&components[1])],
            }
        })
        .collect();
    Some(Pca2 {
        mean,
        explained_variance: [
            eig.eigenvalues[order[0]].max(0.0),
            eig.eigenvalues[order[1.min(d - 1)]].max(0.0),
        ],
        components,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FlowConditions;
    use crate::sampling::{sample, DesignSpace, SamplingStrategy};

    fn variance(xs: impl Iterator<Item = f64> + Clone) -> f64 {
        let n = xs.clone().count() as f64;
        let m = xs.clone().sum::<f64>() / n;
        xs.map(|x| (x - m).powi(2)).sum::<f64>() / n
    }

    #[test]
    fn identical_vectors_collapse() {
        let space = DesignSpace::default();
        let mut set = sample(&space, 5, SamplingStrategy::Lhs, FlowConditions::default(), 1).unwrap();
        let p0 = set.members[0].params;
        for m in &mut set.members {
            m.params = p0;
        }
        let pca = project_pca2(&[&set]).unwrap();
        assert!(pca.points.iter().all(|p| p.xy == pca.points[0].xy));
    }

    #[test]
    fn leading_component_dominates_and_reconstruction_improves() {
        let space = DesignSpace::default();
        let set = sample(&space, 200, SamplingStrategy::Lhs, FlowConditions::default(), 2).unwrap();
        let pca = project_pca2(&[&set]).unwrap();
        let v1 = variance(pca.points.iter().map(|p| p.xy[0]));
        let v2 = variance(pca.points.iter().map(|p| p.xy[1]));
        assert!(v1 >= v2);
        let err = |k: usize| -> f64 {
            set.members
                .iter()
                .zip(&pca.points)
                .map(|(m, p)| {
                    (0..9)
                        .map(|j| {
                            let rec = pca.mean[j] + (0..k).map(|c| p.xy[c] * pca.components[c][j]).sum::<f64>();
                            (m.params[j] - rec).powi(2)
                        })
                        .sum::<f64>()
                })
                .sum()
        };
        assert!(err(2) < err(1));
        assert!(project_pca2(&[]).is_none());
    }
}
