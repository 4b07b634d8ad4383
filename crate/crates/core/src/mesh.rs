//! Structured triangular meshes on axis-aligned rectangles.
//!
//! Nodes are numbered row-major (x fastest), cells are split along the
//! lower-left to upper-right diagonal, and every boundary facet carries a
//! tag. Construction is bitwise deterministic: the same inputs produce the
//! same floats in the same order.

use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// Boundary condition kind attached to a facet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryTag {
    /// Essential condition; the node values are prescribed.
    Dirichlet,
    /// Natural (zero-flux) condition; contributes nothing to assembly.
    Neumann,
    /// Robin condition with coefficient alpha0 on the boundary mass term.
    Robin { alpha0: f64 },
}

/// One boundary edge (two node indices) and its tag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Facet {
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
}

/// Conforming P1 triangle mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nodes: Vec<[f64; 2]>,
    /// Counter-clockwise vertex triples.
    elements: Vec<[usize; 3]>,
    facets: Vec<Facet>,
    /// Longest edge in the mesh.
    h: f64,
}

impl Mesh {
    /// Builds a mesh from raw parts, validating conformity. Intended for
    /// small hand-made fixtures; rectangles should use [`build_rect_mesh`].
    pub fn from_parts(
        nodes: Vec<[f64; 2]>,
        elements: Vec<[usize; 3]>,
        facets: Vec<Facet>,
    ) -> Result<Self> {
        let mut mesh = Self {
            nodes,
            elements,
            facets,
            h: 0.0,
        };
        mesh.h = mesh.longest_edge()?;
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    /// Longest edge length.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn element_coords(&self, e: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.elements[e];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    /// Signed area of element e; positive for counter-clockwise vertices.
    pub fn element_area(&self, e: usize) -> f64 {
        let [p0, p1, p2] = self.element_coords(e);
        0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_elements()).map(|e| self.element_area(e)).sum()
    }

    fn longest_edge(&self) -> Result<f64> {
        let mut h: f64 = 0.0;
        for e in &self.elements {
            for k in 0..3 {
                let a = *e.get(k).ok_or_else(|| Error::Mesh("empty element".into()))?;
                let b = e[(k + 1) % 3];
                let (pa, pb) = (
                    self.nodes
                        .get(a)
                        .ok_or_else(|| Error::Mesh(format!("node index {a} out of range")))?,
                    self.nodes
                        .get(b)
                        .ok_or_else(|| Error::Mesh(format!("node index {b} out of range")))?,
                );
                let len = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt();
                h = h.max(len);
            }
        }
        if h <= 0.0 || !h.is_finite() {
            return Err(Error::Mesh("mesh has no positive-length edge".into()));
        }
        Ok(h)
    }

    /// Checks conformity: positive element areas, indices in range, and the
    /// facet list matching exactly the edges that belong to one element.
    pub fn validate(&self) -> Result<()> {
        if self.elements.is_empty() {
            return Err(Error::Mesh("mesh has no elements".into()));
        }
        for (ei, e) in self.elements.iter().enumerate() {
            for &n in e {
                if n >= self.nodes.len() {
                    return Err(Error::Mesh(format!(
                        "element {ei} references node {n} out of {}",
                        self.nodes.len()
                    )));
                }
            }
            let area = self.element_area(ei);
            if !(area > 0.0) {
                return Err(Error::Mesh(format!(
                    "element {ei} has non-positive area {area:.3e} (vertices must be CCW)"
                )));
            }
        }
        // Count how many elements share each undirected edge.
        let mut edge_count: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for e in &self.elements {
            for k in 0..3 {
                let (a, b) = (e[k], e[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                *edge_count.entry(key).or_insert(0) += 1;
            }
        }
        for (&(a, b), &count) in &edge_count {
            if count > 2 {
                return Err(Error::Mesh(format!(
                    "edge ({a}, {b}) is shared by {count} elements"
                )));
            }
        }
        let boundary_edges: Vec<(usize, usize)> = edge_count
            .iter()
            .filter(|&(_, &c)| c == 1)
            .map(|(&k, _)| k)
            .collect();
        let mut facet_edges: Vec<(usize, usize)> = self
            .facets
            .iter()
            .map(|f| {
                let [a, b] = f.nodes;
                (a.min(b), a.max(b))
            })
            .collect();
        facet_edges.sort_unstable();
        let duplicates = facet_edges.windows(2).any(|w| w[0] == w[1]);
        if duplicates {
            return Err(Error::Mesh("duplicate boundary facet".into()));
        }
        if facet_edges != boundary_edges {
            return Err(Error::Mesh(format!(
                "facet list does not match the mesh boundary ({} facets vs {} boundary edges)",
                facet_edges.len(),
                boundary_edges.len()
            )));
        }
        Ok(())
    }

    /// Re-tags every boundary facet from its midpoint coordinates.
    pub fn tag_boundary<F>(&mut self, rule: F)
    where
        F: Fn(f64, f64) -> BoundaryTag,
    {
        for f in &mut self.facets {
            let [a, b] = f.nodes;
            let mx = 0.5 * (self.nodes[a][0] + self.nodes[b][0]);
            let my = 0.5 * (self.nodes[a][1] + self.nodes[b][1]);
            f.tag = rule(mx, my);
        }
    }

    /// Marks nodes that sit on at least one Dirichlet facet. At junctions
    /// between differently tagged facets the Dirichlet condition wins.
    pub fn dirichlet_nodes(&self) -> Vec<bool> {
        let mut mark = vec![false; self.nodes.len()];
        for f in &self.facets {
            if f.tag == BoundaryTag::Dirichlet {
                mark[f.nodes[0]] = true;
                mark[f.nodes[1]] = true;
            }
        }
        mark
    }

    /// Writes the mesh and one scalar nodal field as legacy ASCII VTK.
    ///
    /// `title` is free text for the header comment line (run provenance,
    /// config hash, ...); `field_name` must be a bare identifier.
    pub fn write_vtk(
        &self,
        path: &Path,
        title: &str,
        field_name: &str,
        values: &[f64],
    ) -> Result<()> {
        if values.len() != self.nodes.len() {
            return Err(Error::Dimension(format!(
                "field has {} values for {} nodes",
                values.len(),
                self.nodes.len()
            )));
        }
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "# vtk DataFile Version 3.0")?;
        writeln!(out, "{title}")?;
        writeln!(out, "ASCII")?;
        writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
        writeln!(out, "POINTS {} double", self.nodes.len())?;
        for p in &self.nodes {
            writeln!(out, "{:.17e} {:.17e} 0.0", p[0], p[1])?;
        }
        writeln!(out, "CELLS {} {}", self.elements.len(), 4 * self.elements.len())?;
        for e in &self.elements {
            writeln!(out, "3 {} {} {}", e[0], e[1], e[2])?;
        }
        writeln!(out, "CELL_TYPES {}", self.elements.len())?;
        for _ in &self.elements {
            writeln!(out, "5")?;
        }
        writeln!(out, "POINT_DATA {}", self.nodes.len())?;
        writeln!(out, "SCALARS {field_name} double 1")?;
        writeln!(out, "LOOKUP_TABLE default")?;
        for v in values {
            writeln!(out, "{v:.17e}")?;
        }
        Ok(())
    }
}

/// Triangulates [0, l1] x [0, l2] with nx x ny cells, two triangles each.
///
/// Node (i, j) has index j * (nx + 1) + i and coordinates (i * l1/nx,
/// j * l2/ny). Cells are visited row-major; each contributes the triangles
/// (sw, se, ne) and (sw, ne, nw). Boundary facets are emitted bottom, right,
/// top, left, all initially tagged Dirichlet.
pub fn build_rect_mesh(nx: usize, ny: usize, l1: f64, l2: f64) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::Mesh(format!(
            "subdivision counts must be positive, got {nx} x {ny}"
        )));
    }
    if !(l1 > 0.0 && l2 > 0.0) || !l1.is_finite() || !l2.is_finite() {
        return Err(Error::Mesh(format!(
            "side lengths must be positive and finite, got {l1} x {l2}"
        )));
    }
    let hx = l1 / nx as f64;
    let hy = l2 / ny as f64;
    let node = |i: usize, j: usize| j * (nx + 1) + i;

    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push([i as f64 * hx, j as f64 * hy]);
        }
    }

    let mut elements = Vec::with_capacity(2 * nx * ny);
    for cy in 0..ny {
        for cx in 0..nx {
            let sw = node(cx, cy);
            let se = node(cx + 1, cy);
            let nw = node(cx, cy + 1);
            let ne = node(cx + 1, cy + 1);
            elements.push([sw, se, ne]);
            elements.push([sw, ne, nw]);
        }
    }

    let mut facets = Vec::with_capacity(2 * (nx + ny));
    let tag = BoundaryTag::Dirichlet;
    for i in 0..nx {
        facets.push(Facet {
            nodes: [node(i, 0), node(i + 1, 0)],
            tag,
        });
    }
    for j in 0..ny {
        facets.push(Facet {
            nodes: [node(nx, j), node(nx, j + 1)],
            tag,
        });
    }
    for i in 0..nx {
        facets.push(Facet {
            nodes: [node(i, ny), node(i + 1, ny)],
            tag,
        });
    }
    for j in 0..ny {
        facets.push(Facet {
            nodes: [node(0, j), node(0, j + 1)],
            tag,
        });
    }

    let h = (hx * hx + hy * hy).sqrt();
    Ok(Mesh {
        nodes,
        elements,
        facets,
        h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rect_mesh_counts() {
        let m = build_rect_mesh(3, 2, 1.0, 1.0).unwrap();
        assert_eq!(m.n_nodes(), 4 * 3);
        assert_eq!(m.n_elements(), 2 * 3 * 2);
        assert_eq!(m.facets().len(), 2 * (3 + 2));
        m.validate().unwrap();
    }

    #[test]
    fn rect_mesh_node_numbering_is_row_major() {
        let m = build_rect_mesh(2, 2, 2.0, 4.0).unwrap();
        // Node (i, j) = j * 3 + i at (i, 2 j).
        assert_eq!(m.nodes()[0], [0.0, 0.0]);
        assert_eq!(m.nodes()[2], [2.0, 0.0]);
        assert_eq!(m.nodes()[3], [0.0, 2.0]);
        assert_eq!(m.nodes()[8], [2.0, 4.0]);
    }

    #[test]
    fn rect_mesh_elements_are_ccw_and_cover_the_domain() {
        let m = build_rect_mesh(5, 4, 2.5, 1.25).unwrap();
        for e in 0..m.n_elements() {
            assert!(m.element_area(e) > 0.0, "element {e} not CCW");
        }
        let total = m.total_area();
        assert!(((total - 2.5 * 1.25) / (2.5 * 1.25)).abs() < 1e-12);
    }

    #[test]
    fn refinement_halves_h_exactly() {
        let coarse = build_rect_mesh(4, 3, 1.0, 0.7).unwrap();
        let fine = build_rect_mesh(8, 6, 1.0, 0.7).unwrap();
        assert_eq!(fine.h(), coarse.h() / 2.0);
        // Square cells as well.
        let coarse = build_rect_mesh(8, 8, 1.0, 1.0).unwrap();
        let fine = build_rect_mesh(16, 16, 1.0, 1.0).unwrap();
        assert_eq!(fine.h(), coarse.h() / 2.0);
    }

    #[test]
    fn construction_is_bitwise_deterministic() {
        let a = build_rect_mesh(7, 5, 1.0, 3.0).unwrap();
        let b = build_rect_mesh(7, 5, 1.0, 3.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(build_rect_mesh(0, 3, 1.0, 1.0).is_err());
        assert!(build_rect_mesh(3, 0, 1.0, 1.0).is_err());
        assert!(build_rect_mesh(3, 3, 0.0, 1.0).is_err());
        assert!(build_rect_mesh(3, 3, 1.0, -2.0).is_err());
        assert!(build_rect_mesh(3, 3, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn midpoint_tagging_and_dirichlet_priority() {
        let mut m = build_rect_mesh(2, 2, 1.0, 1.0).unwrap();
        // Dirichlet on x = 0, Neumann elsewhere.
        m.tag_boundary(|x, _y| {
            if x == 0.0 {
                BoundaryTag::Dirichlet
            } else {
                BoundaryTag::Neumann
            }
        });
        let d: usize = m
            .facets()
            .iter()
            .filter(|f| f.tag == BoundaryTag::Dirichlet)
            .count();
        assert_eq!(d, 2);
        let marked = m.dirichlet_nodes();
        let count = marked.iter().filter(|&&b| b).count();
        // The corner (0, 0) touches a Neumann bottom facet and a Dirichlet
        // left facet; Dirichlet wins, so the whole left column is marked.
        assert_eq!(count, 3);
        for j in 0..3 {
            assert!(marked[j * 3]);
        }
    }

    #[test]
    fn from_parts_accepts_unit_triangle_and_rejects_bad_facets() {
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let elements = vec![[0, 1, 2]];
        let facets = vec![
            Facet {
                nodes: [0, 1],
                tag: BoundaryTag::Neumann,
            },
            Facet {
                nodes: [1, 2],
                tag: BoundaryTag::Neumann,
            },
            Facet {
                nodes: [2, 0],
                tag: BoundaryTag::Neumann,
            },
        ];
        let m = Mesh::from_parts(nodes.clone(), elements.clone(), facets.clone()).unwrap();
        assert!((m.h() - 2.0f64.sqrt()).abs() < 1e-15);
        assert!((m.total_area() - 0.5).abs() < 1e-15);

        // Clockwise element is rejected.
        assert!(Mesh::from_parts(nodes.clone(), vec![[0, 2, 1]], facets.clone()).is_err());
        // Missing facet is rejected.
        assert!(Mesh::from_parts(nodes, elements, facets[..2].to_vec()).is_err());
    }

    #[test]
    fn vtk_dump_has_expected_structure() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mesh.vtk");
        let m = build_rect_mesh(2, 1, 1.0, 1.0).unwrap();
        let values: Vec<f64> = (0..m.n_nodes()).map(|i| i as f64).collect();
        m.write_vtk(&path, "demo run t=0", "solution", &values).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# vtk DataFile Version 3.0");
        assert_eq!(lines[1], "demo run t=0");
        assert_eq!(lines[3], "DATASET UNSTRUCTURED_GRID");
        assert!(lines.contains(&"POINTS 6 double"));
        assert!(lines.contains(&"CELLS 4 16"));
        assert!(lines.contains(&"CELL_TYPES 4"));
        assert!(lines.contains(&"POINT_DATA 6"));
        assert!(lines.contains(&"SCALARS solution double 1"));
        // Wrong field length errors out.
        assert!(m.write_vtk(&path, "demo", "solution", &values[..3]).is_err());
    }
}
