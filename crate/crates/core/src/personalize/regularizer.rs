use crate::error::{Error, Result};
use crate::mesh::norm;
use crate::rig::BlendshapeRig;

/// Per-shape global weights `g` and per-vertex local weights `m` of the
/// offset regularizer.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizerWeights {
    pub g: Vec<f64>,
    /// `m[i][x]` for shape `i`, vertex `x`.
    pub m: Vec<Vec<f64>>,
    pub lambda_g: f64,
    pub lambda_l: Vec<f64>,
    pub fixed_vertex_weight: f64,
}

impl RegularizerWeights {
    /// Combined weight `g_i * m_i(x)`.
    #[inline]
    pub fn weight(&self, shape: usize, vertex: usize) -> f64 {
        self.g[shape] * self.m[shape][vertex]
    }
}

/// `g_i = lambda_g / sum_x |S_i(x)|` scaled so that `max g = 1`, and
/// `m_i(x) = lambda_l^i / |S_i(x)|` scaled so that its maximum over moving
/// vertices is 1. Vertices a shape leaves in place get `fixed_vertex_weight`.
pub fn compute_regularizer_weights(
    template: &BlendshapeRig,
    fixed_vertex_weight: f64,
) -> Result<RegularizerWeights> {
    if !(fixed_vertex_weight > 0.0) {
        return Err(Error::Precondition(format!(
            "fixed vertex weight must be positive, got {fixed_vertex_weight}"
        )));
    }
    let norms: Vec<Vec<f64>> = template
        .shapes()
        .iter()
        .map(|s| s.iter().map(|d| norm(*d)).collect())
        .collect();
    let totals: Vec<f64> = norms.iter().map(|n| n.iter().sum()).collect();
    if let Some(i) = totals.iter().position(|&t| t <= 0.0) {
        return Err(Error::DegenerateShape {
            index: i,
            name: template.names()[i].clone(),
        });
    }
    // max of 1/t is reached at the smallest total
    let lambda_g = totals.iter().copied().fold(f64::INFINITY, f64::min);
    let g = totals.iter().map(|t| lambda_g / t).collect();

    let mut lambda_l = Vec::with_capacity(norms.len());
    let m = norms
        .iter()
        .map(|n| {
            let smallest = n
                .iter()
                .copied()
                .filter(|&v| v > 0.0)
                .fold(f64::INFINITY, f64::min);
            lambda_l.push(smallest);
            n.iter()
                .map(|&v| if v > 0.0 { smallest / v } else { fixed_vertex_weight })
                .collect()
        })
        .collect();
    Ok(RegularizerWeights {
        g,
        m,
        lambda_g,
        lambda_l,
        fixed_vertex_weight,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::grid_mesh;
    use std::collections::BTreeSet;

    fn two_shape_rig(a: Vec<[f64; 3]>, b: Vec<[f64; 3]>) -> BlendshapeRig {
        let n = grid_mesh("n", 2, 2, [0.1, 0.1], [0.9, 0.9], |u, v| [u, v, 0.0]).unwrap();
        BlendshapeRig::new(n, vec![a, b], vec!["a".into(), "b".into()], BTreeSet::new()).unwrap()
    }

    #[test]
    fn global_weights_follow_total_norm_ratio() {
        let rig = two_shape_rig(
            vec![[3.0, 4.0, 0.0], [5.0, 0.0, 0.0], [0.0; 3], [0.0; 3]],
            vec![[0.0, 0.0, 5.0], [0.0; 3], [0.0; 3], [0.0; 3]],
        );
        let w = compute_regularizer_weights(&rig, 4.0).unwrap();
        assert_eq!(w.g, vec![0.5, 1.0]);
        assert_eq!(w.m[0], vec![1.0, 1.0, 4.0, 4.0]);
    }

    #[test]
    fn zero_shape_is_rejected() {
        let rig = two_shape_rig(vec![[1.0, 0.0, 0.0]; 4], vec![[0.0; 3]; 4]);
        match compute_regularizer_weights(&rig, 4.0) {
            Err(Error::DegenerateShape { index: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
