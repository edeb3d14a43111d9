//! Nodal fields over a lifted mesh: one value per element node, stored
//! flat with all elements sharing the per-element node count. Interface
//! nodes are duplicated per element; a correctly solved field carries
//! bit-identical values on the copies.

/// Flat per-element nodal storage.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField {
    values: Vec<f64>,
    nodes_per_element: usize,
}

impl NodalField {
    pub fn zeros(elements: usize, nodes_per_element: usize) -> Self {
        Self { values: vec![0.0; elements * nodes_per_element], nodes_per_element }
    }

    pub fn from_values(values: Vec<f64>, nodes_per_element: usize) -> Self {
        assert_eq!(values.len() % nodes_per_element, 0);
        Self { values, nodes_per_element }
    }

    pub fn nodes_per_element(&self) -> usize {
        self.nodes_per_element
    }

    pub fn elements(&self) -> usize {
        self.values.len() / self.nodes_per_element
    }

    pub fn element(&self, k: usize) -> &[f64] {
        &self.values[k * self.nodes_per_element..(k + 1) * self.nodes_per_element]
    }

    pub fn element_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k * self.nodes_per_element..(k + 1) * self.nodes_per_element]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn has_non_finite(&self) -> bool {
        self.values.iter().any(|v| !v.is_finite())
    }
}
