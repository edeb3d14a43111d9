//! Hierarchical merging of leaf operators.
//!
//! Leaves are paired up a binary tree. At each merge the nodes shared by
//! the two children whose element stars are now complete become interior:
//! enforcing flux balance there eliminates them, leaving a solution
//! operator for the interface and a DtN map for the cluster's remaining
//! boundary. Corners are handled by aggregation: a physical node seen from
//! both children keeps a single row and column whose entries are summed,
//! so a vertex is eliminated exactly when the last element touching it has
//! joined the cluster, and its balance equation is the sum of every
//! incident element's corner flux.
//!
//! The factorization is forcing-independent. New right-hand sides reuse it:
//! an upward sweep accumulates particular fluxes and interface corrections,
//! a downward sweep fills in values, so repeat solves cost two tree
//! traversals of dense matrix-vector products.

use crate::error::{Error, Result};
use crate::field::NodalField;
use crate::leaf_ops::{build_leaf, LeafOperator, PdeCoefficients};
use crate::surface_geom::{FlatMesh, LiftedMesh};
use nalgebra::{DMatrix, DVector, Dyn, Vector3, LU};
use rayon::prelude::*;

/// How to close the rank-one deficiency of an all-Neumann root system on a
/// closed surface (pure second-order operators are defined up to a
/// constant there).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClosedRootPolicy {
    /// Factor the root system as-is; correct when the operator has a zero
    /// -order term and therefore no nullspace.
    Regular,
    /// Augment with a Lagrange multiplier forcing a zero mean on the root
    /// interface, then shift the returned field to zero surface mean.
    MeanZero,
    /// Pin the first root-interface node to zero.
    PinNode,
    /// Try Regular; fall back to MeanZero when the factorization looks
    /// rank-deficient.
    Auto,
}

/// Plan node: which elements merge, in what order.
#[derive(Debug, Clone)]
pub enum PlanNode {
    Leaf(usize),
    Branch(Box<PlanNode>, Box<PlanNode>),
}

#[derive(Debug, Clone)]
pub struct MergePlan {
    pub root: PlanNode,
}

impl MergePlan {
    pub fn leaf_count(&self) -> usize {
        fn count(n: &PlanNode) -> usize {
            match n {
                PlanNode::Leaf(_) => 1,
                PlanNode::Branch(l, r) => count(l) + count(r),
            }
        }
        count(&self.root)
    }

    pub fn depth(&self) -> usize {
        fn depth(n: &PlanNode) -> usize {
            match n {
                PlanNode::Leaf(_) => 1,
                PlanNode::Branch(l, r) => 1 + depth(l).max(depth(r)),
            }
        }
        depth(&self.root)
    }
}

/// Recursive coordinate bisection of element centroids, with a best-effort
/// pass that reunites stray connected components so merge partners are
/// edge-adjacent. Correctness does not depend on adjacency (a merge with an
/// empty interface is a concatenation); interface sizes do.
pub fn build_merge_plan(mesh: &FlatMesh) -> MergePlan {
    let centroids: Vec<Vector3<f64>> = mesh
        .triangles
        .iter()
        .map(|t| (mesh.vertices[t[0]] + mesh.vertices[t[1]] + mesh.vertices[t[2]]) / 3.0)
        .collect();
    // Element adjacency over shared edges.
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); mesh.triangles.len()];
    for e in &mesh.edges {
        if let [(k1, _), (k2, _)] = e.elems[..] {
            adj[k1].push(k2);
            adj[k2].push(k1);
        }
    }
    let root = bisect((0..mesh.triangles.len()).collect(), &centroids, &adj);
    MergePlan { root }
}

fn bisect(elems: Vec<usize>, centroids: &[Vector3<f64>], adj: &[Vec<usize>]) -> PlanNode {
    if elems.len() == 1 {
        return PlanNode::Leaf(elems[0]);
    }
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for &k in &elems {
        lo = lo.inf(&centroids[k]);
        hi = hi.sup(&centroids[k]);
    }
    let span = hi - lo;
    let axis = if span.x >= span.y && span.x >= span.z {
        0
    } else if span.y >= span.z {
        1
    } else {
        2
    };
    let mut sorted = elems;
    sorted.sort_by(|&a, &b| {
        centroids[a][axis]
            .partial_cmp(&centroids[b][axis])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let half = sorted.len().div_ceil(2);
    let mut left: Vec<usize> = sorted[..half].to_vec();
    let mut right: Vec<usize> = sorted[half..].to_vec();

    for _ in 0..2 {
        reunite(&mut left, &mut right, adj);
        reunite(&mut right, &mut left, adj);
    }
    if left.is_empty() || right.is_empty() {
        left = sorted[..half].to_vec();
        right = sorted[half..].to_vec();
    }
    left.sort_unstable();
    right.sort_unstable();
    PlanNode::Branch(
        Box::new(bisect(left, centroids, adj)),
        Box::new(bisect(right, centroids, adj)),
    )
}

/// Move every component of `keep` except the largest into `other`.
fn reunite(keep: &mut Vec<usize>, other: &mut Vec<usize>, adj: &[Vec<usize>]) {
    use std::collections::HashSet;
    let in_keep: HashSet<usize> = keep.iter().copied().collect();
    let mut seen: HashSet<usize> = HashSet::new();
    let mut components: Vec<Vec<usize>> = Vec::new();
    for &start in keep.iter() {
        if seen.contains(&start) {
            continue;
        }
        let mut comp = vec![start];
        let mut stack = vec![start];
        seen.insert(start);
        while let Some(k) = stack.pop() {
            for &nb in &adj[k] {
                if in_keep.contains(&nb) && seen.insert(nb) {
                    comp.push(nb);
                    stack.push(nb);
                }
            }
        }
        components.push(comp);
    }
    if components.len() <= 1 {
        return;
    }
    components.sort_by_key(|c| std::cmp::Reverse(c.len()));
    let mut kept = components.remove(0);
    if kept.len() == keep.len() {
        return;
    }
    for comp in components {
        other.extend(comp);
    }
    kept.sort_unstable();
    *keep = kept;
}

/// Where a child-boundary position lands in its parent.
#[derive(Debug, Clone, Copy)]
enum SlotRef {
    Exterior(usize),
    Internal(usize),
}

#[derive(Debug)]
enum Node {
    Leaf {
        elem: usize,
    },
    Merge {
        children: [Box<Node>; 2],
        /// Destination of each child-boundary position.
        maps: [Vec<SlotRef>; 2],
        /// Physical ids eliminated at this merge, interface order.
        internal_phys: Vec<usize>,
        /// LU of the interface system (augmented for MeanZero roots).
        lu: LU<f64, Dyn, Dyn>,
        augmented: bool,
        /// Interface response to exterior data, |I| x |X|.
        s_glue: DMatrix<f64>,
        /// Exterior-flux correction by interface values, |X| x |I|.
        c_block: DMatrix<f64>,
        /// Interface particular values for the current forcing.
        w_part: DVector<f64>,
    },
}

/// Intermediate state carried up the factorization.
struct ClusterTop {
    node: Node,
    /// Boundary physical ids, DtN order; no duplicates.
    boundary: Vec<usize>,
    /// Incident elements inside the cluster, per boundary node.
    incident: Vec<u32>,
    dtn: DMatrix<f64>,
}

/// Factorized hierarchical solver for one operator on one mesh.
pub struct ThpsSolver {
    root: Node,
    leaves: Vec<Option<LeafOperator>>,
    particulars: Vec<DVector<f64>>,
    root_boundary: Vec<usize>,
    resolved_policy: ClosedRootPolicy,
    closed: bool,
}

/// Compatibility data reported when a forcing is installed.
#[derive(Debug, Clone, Copy)]
pub struct ForcingReport {
    /// Integral of the forcing over the surface.
    pub forcing_integral: f64,
    /// True when the surface is closed, where a pure second-order operator
    /// requires a zero-mean forcing for solvability.
    pub closed_surface: bool,
}

impl ThpsSolver {
    /// Build leaf operators and merge them per `plan`. The mesh's
    /// per-element differentiation matrices are only read; call
    /// `release_derivative_matrices` afterwards (once no further
    /// factorization is coming) to reclaim that memory.
    pub fn factorize(
        mesh: &LiftedMesh,
        coeffs: &PdeCoefficients,
        plan: &MergePlan,
        policy: ClosedRootPolicy,
    ) -> Result<Self> {
        let n_elems = mesh.num_elements();
        if plan.leaf_count() != n_elems {
            return Err(Error::MeshInvalid(format!(
                "merge plan covers {} elements, mesh has {n_elems}",
                plan.leaf_count()
            )));
        }
        let comps = mesh.flat.component_count();
        if comps != 1 {
            return Err(Error::MeshInvalid(format!(
                "mesh has {comps} connected components; solve them separately"
            )));
        }

        let mut leaves: Vec<Option<LeafOperator>> = (0..n_elems)
            .into_par_iter()
            .map(|k| build_leaf(mesh, k, coeffs).map(Some))
            .collect::<Result<_>>()?;

        // Total incident elements per physical node, for internalization.
        let numbering = &mesh.numbering;
        let mut total_incident = vec![1u32; numbering.total()];
        for (v, elems) in mesh.flat.vertex_elems.iter().enumerate() {
            total_incident[numbering.vertex_id(v)] = elems.len() as u32;
        }
        for (e, edge) in mesh.flat.edges.iter().enumerate() {
            for slot in 1..numbering.n {
                total_incident[numbering.edge_slot_id(e, slot)] = edge.elems.len() as u32;
            }
        }

        let closed = mesh.flat.is_closed();
        let ctx = BuildCtx {
            mesh,
            total_incident: &total_incident,
            policy: if closed { policy } else { ClosedRootPolicy::Regular },
        };
        let mut resolved = ClosedRootPolicy::Regular;
        let top = build_cluster(&plan.root, &ctx, &mut leaves, true, &mut resolved)?;

        let particulars = (0..n_elems)
            .map(|_| DVector::zeros(mesh.ref_elem.interior.len()))
            .collect();
        Ok(ThpsSolver {
            root: top.node,
            leaves,
            particulars,
            root_boundary: top.boundary,
            resolved_policy: resolved,
            closed,
        })
    }

    /// Physical ids of the global boundary, in the order `solve_with_
    /// boundary_values` expects; empty for a closed surface.
    pub fn boundary_phys(&self) -> &[usize] {
        &self.root_boundary
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// The closed-root handling actually in effect after factorization.
    pub fn resolved_policy(&self) -> ClosedRootPolicy {
        self.resolved_policy
    }

    /// Install a forcing given as nodal values and sweep its particular
    /// fluxes up the tree. Cheap relative to factorization; this is the
    /// path that makes time stepping O(N log N) per step.
    pub fn set_forcing_field(&mut self, mesh: &LiftedMesh, f: &NodalField) -> Result<ForcingReport> {
        let interior = &mesh.ref_elem.interior;
        let n_elems = mesh.num_elements();
        let pairs: Vec<DVector<f64>> = (0..n_elems)
            .into_par_iter()
            .map(|k| {
                let f_int =
                    DVector::from_iterator(interior.len(), interior.iter().map(|&r| f.element(k)[r]));
                self.leaves[k]
                    .as_ref()
                    .expect("leaf present")
                    .particular(&f_int)
            })
            .collect::<Result<_>>()?;
        self.particulars = pairs;
        refresh_node(&mut self.root, &self.leaves, &self.particulars)?;
        Ok(ForcingReport { forcing_integral: mesh.integrate(f), closed_surface: self.closed })
    }

    /// Install a forcing sampled from a function of position.
    pub fn set_forcing(
        &mut self,
        mesh: &LiftedMesh,
        f: impl Fn(Vector3<f64>) -> f64,
    ) -> Result<ForcingReport> {
        let field = mesh.sample(f);
        self.set_forcing_field(mesh, &field)
    }

    /// Solve with Dirichlet values listed in `boundary_phys` order.
    pub fn solve_with_boundary_values(
        &self,
        mesh: &LiftedMesh,
        h: &[f64],
    ) -> Result<NodalField> {
        if h.len() != self.root_boundary.len() {
            return Err(Error::Numerical(format!(
                "boundary data has {} values, surface boundary has {} nodes",
                h.len(),
                self.root_boundary.len()
            )));
        }
        let mut u_phys = vec![0.0; mesh.numbering.total()];
        let x = DVector::from_column_slice(h);
        descend(&self.root, &x, &mut u_phys, &self.leaves, &self.particulars, mesh);

        let mut field = NodalField::zeros(mesh.num_elements(), mesh.nodes_per_element());
        for (k, el) in mesh.elements.iter().enumerate() {
            let vals = field.element_mut(k);
            for (r, &p) in el.local_to_phys.iter().enumerate() {
                vals[r] = u_phys[p];
            }
        }
        if self.closed && self.resolved_policy == ClosedRootPolicy::MeanZero {
            let mean = mesh.mean(&field);
            for v in field.as_mut_slice() {
                *v -= mean;
            }
        }
        Ok(field)
    }

    /// Solve a Dirichlet problem with boundary data g sampled on the
    /// boundary curve.
    pub fn solve_dirichlet(
        &self,
        mesh: &LiftedMesh,
        g: impl Fn(Vector3<f64>) -> f64,
    ) -> Result<NodalField> {
        if self.closed {
            return Err(Error::Numerical(
                "surface is closed; no boundary to apply Dirichlet data on (use solve_closed)"
                    .into(),
            ));
        }
        let h: Vec<f64> =
            self.root_boundary.iter().map(|&p| g(mesh.phys_coords[p])).collect();
        self.solve_with_boundary_values(mesh, &h)
    }

    /// Solve on a closed surface (no boundary data).
    pub fn solve_closed(&self, mesh: &LiftedMesh) -> Result<NodalField> {
        if !self.closed {
            return Err(Error::Numerical(
                "surface has a boundary; Dirichlet data is required (use solve_dirichlet)".into(),
            ));
        }
        self.solve_with_boundary_values(mesh, &[])
    }
}

struct BuildCtx<'a> {
    mesh: &'a LiftedMesh,
    total_incident: &'a [u32],
    policy: ClosedRootPolicy,
}

fn build_cluster(
    plan: &PlanNode,
    ctx: &BuildCtx,
    leaves: &mut [Option<LeafOperator>],
    is_root: bool,
    resolved: &mut ClosedRootPolicy,
) -> Result<ClusterTop> {
    match plan {
        PlanNode::Leaf(k) => {
            let el = &ctx.mesh.elements[*k];
            let boundary: Vec<usize> =
                ctx.mesh.ref_elem.boundary.iter().map(|&r| el.local_to_phys[r]).collect();
            let incident = vec![1u32; boundary.len()];
            let dtn = std::mem::replace(
                &mut leaves[*k].as_mut().expect("leaf present").dtn,
                DMatrix::zeros(0, 0),
            );
            Ok(ClusterTop { node: Node::Leaf { elem: *k }, boundary, incident, dtn })
        }
        PlanNode::Branch(l, r) => {
            let left = build_cluster(l, ctx, leaves, false, resolved)?;
            let right = build_cluster(r, ctx, leaves, false, resolved)?;
            merge_clusters(left, right, ctx, is_root, resolved)
        }
    }
}

fn merge_clusters(
    left: ClusterTop,
    right: ClusterTop,
    ctx: &BuildCtx,
    is_root: bool,
    resolved: &mut ClosedRootPolicy,
) -> Result<ClusterTop> {
    use std::collections::HashMap;
    let children = [&left, &right];

    // Classify the union of both boundaries, preserving first-appearance
    // order for determinism.
    let mut by_phys: HashMap<usize, [Option<usize>; 2]> = HashMap::new();
    let mut order: Vec<usize> = Vec::new();
    for (s, child) in children.iter().enumerate() {
        for (pos, &p) in child.boundary.iter().enumerate() {
            let entry = by_phys.entry(p).or_insert_with(|| {
                order.push(p);
                [None, None]
            });
            entry[s] = Some(pos);
        }
    }

    let mut exterior: Vec<usize> = Vec::new();
    let mut exterior_incident: Vec<u32> = Vec::new();
    let mut internal: Vec<usize> = Vec::new();
    let mut dest: HashMap<usize, SlotRef> = HashMap::new();
    for &p in &order {
        let slots = by_phys[&p];
        let inc: u32 = (0..2)
            .map(|s| slots[s].map_or(0, |pos| children[s].incident[pos]))
            .sum();
        let internalize = !ctx.mesh.boundary_phys[p] && inc == ctx.total_incident[p];
        if internalize {
            dest.insert(p, SlotRef::Internal(internal.len()));
            internal.push(p);
        } else {
            dest.insert(p, SlotRef::Exterior(exterior.len()));
            exterior.push(p);
            exterior_incident.push(inc);
        }
    }
    let (ni, nx) = (internal.len(), exterior.len());

    let maps: [Vec<SlotRef>; 2] = [
        left.boundary.iter().map(|p| dest[p]).collect(),
        right.boundary.iter().map(|p| dest[p]).collect(),
    ];

    // Aggregate the children's DtN blocks into the interface system.
    let mut a_xx = DMatrix::zeros(nx, nx);
    let mut b_ix = DMatrix::zeros(ni, nx);
    let mut c_xi = DMatrix::zeros(nx, ni);
    let mut t_ii = DMatrix::zeros(ni, ni);
    for (s, child) in children.iter().enumerate() {
        let map = &maps[s];
        let t = &child.dtn;
        for (p, &rp) in map.iter().enumerate() {
            for (q, &rq) in map.iter().enumerate() {
                let v = t[(p, q)];
                match (rp, rq) {
                    (SlotRef::Exterior(i), SlotRef::Exterior(j)) => a_xx[(i, j)] += v,
                    (SlotRef::Internal(i), SlotRef::Exterior(j)) => b_ix[(i, j)] += v,
                    (SlotRef::Exterior(i), SlotRef::Internal(j)) => c_xi[(i, j)] += v,
                    (SlotRef::Internal(i), SlotRef::Internal(j)) => t_ii[(i, j)] += v,
                }
            }
        }
    }
    drop(left.dtn);
    drop(right.dtn);

    // Closed-surface root: no exterior left; apply the nullspace policy.
    let closed_root = is_root && nx == 0;
    let mut augmented = false;
    let lu = if closed_root {
        let mut policy = ctx.policy;
        if policy == ClosedRootPolicy::Auto {
            let trial = t_ii.clone().lu();
            policy = if lu_looks_singular(&trial) {
                ClosedRootPolicy::MeanZero
            } else {
                ClosedRootPolicy::Regular
            };
        }
        *resolved = policy;
        match policy {
            ClosedRootPolicy::Regular => t_ii.clone().lu(),
            ClosedRootPolicy::PinNode => {
                let mut t = t_ii.clone();
                for j in 0..ni {
                    t[(0, j)] = if j == 0 { 1.0 } else { 0.0 };
                }
                t.lu()
            }
            ClosedRootPolicy::MeanZero => {
                augmented = true;
                let mut t = DMatrix::zeros(ni + 1, ni + 1);
                t.view_mut((0, 0), (ni, ni)).copy_from(&t_ii);
                for i in 0..ni {
                    t[(i, ni)] = 1.0;
                    t[(ni, i)] = 1.0;
                }
                t.lu()
            }
            ClosedRootPolicy::Auto => unreachable!(),
        }
    } else {
        t_ii.clone().lu()
    };
    if !augmented && !lu.is_invertible() {
        return Err(Error::Singular {
            context: format!(
                "interface system ({ni} nodes) at a merge with {nx} exterior nodes{}",
                if closed_root { "; a closed-root policy other than Regular may be needed" } else { "" }
            ),
        });
    }

    // S_glue = -T^{-1} B, from the flux balance at the interface.
    let s_glue = if ni == 0 || nx == 0 {
        DMatrix::zeros(ni, nx)
    } else {
        -(lu.solve(&b_ix).ok_or_else(|| Error::Singular {
            context: "interface solve for the glue operator".into(),
        })?)
    };
    let dtn = &a_xx + &c_xi * &s_glue;

    let node = Node::Merge {
        children: [Box::new(left.node), Box::new(right.node)],
        maps,
        internal_phys: internal,
        lu,
        augmented,
        s_glue,
        c_block: c_xi,
        w_part: DVector::zeros(ni),
    };
    Ok(ClusterTop { node, boundary: exterior, incident: exterior_incident, dtn })
}

fn lu_looks_singular(lu: &LU<f64, Dyn, Dyn>) -> bool {
    let u = lu.u();
    let m = u.nrows().min(u.ncols());
    if m == 0 {
        return false;
    }
    let mut min = f64::INFINITY;
    let mut max: f64 = 0.0;
    for i in 0..m {
        let d = u[(i, i)].abs();
        min = min.min(d);
        max = max.max(d);
    }
    min == 0.0 || max / min > 1e13
}

/// Upward sweep for a new forcing: returns the cluster's particular flux.
fn refresh_node(
    node: &mut Node,
    leaves: &[Option<LeafOperator>],
    particulars: &[DVector<f64>],
) -> Result<DVector<f64>> {
    match node {
        Node::Leaf { elem } => {
            let leaf = leaves[*elem].as_ref().expect("leaf present");
            Ok(leaf.particular_flux(&particulars[*elem]))
        }
        Node::Merge { children, maps, lu, augmented, s_glue, c_block, w_part, .. } => {
            let (ni, nx) = (s_glue.nrows(), s_glue.ncols());
            let mut rhs_i = DVector::zeros(ni);
            let mut v_x = DVector::zeros(nx);
            for s in 0..2 {
                let v_child = refresh_node(&mut children[s], leaves, particulars)?;
                for (pos, &slot) in maps[s].iter().enumerate() {
                    match slot {
                        SlotRef::Internal(i) => rhs_i[i] += v_child[pos],
                        SlotRef::Exterior(i) => v_x[i] += v_child[pos],
                    }
                }
            }
            *w_part = if ni == 0 {
                DVector::zeros(0)
            } else if *augmented {
                let mut rhs = DVector::zeros(ni + 1);
                rhs.rows_mut(0, ni).copy_from(&(-&rhs_i));
                let sol = lu.solve(&rhs).ok_or_else(|| Error::Singular {
                    context: "augmented interface solve".into(),
                })?;
                sol.rows(0, ni).into_owned()
            } else {
                -(lu.solve(&rhs_i).ok_or_else(|| Error::Singular {
                    context: "interface solve for particular data".into(),
                })?)
            };
            Ok(v_x + &*c_block * &*w_part)
        }
    }
}

/// Downward sweep: fill physical values from boundary data `x` given in
/// the node's boundary order.
fn descend(
    node: &Node,
    x: &DVector<f64>,
    u_phys: &mut [f64],
    leaves: &[Option<LeafOperator>],
    particulars: &[DVector<f64>],
    mesh: &LiftedMesh,
) {
    match node {
        Node::Leaf { elem } => {
            let leaf = leaves[*elem].as_ref().expect("leaf present");
            let el = &mesh.elements[*elem];
            for (pos, &r) in mesh.ref_elem.boundary.iter().enumerate() {
                u_phys[el.local_to_phys[r]] = x[pos];
            }
            let u_int = leaf.interior_solution(&particulars[*elem], x);
            for (t, &r) in mesh.ref_elem.interior.iter().enumerate() {
                u_phys[el.local_to_phys[r]] = u_int[t];
            }
        }
        Node::Merge { children, maps, internal_phys, s_glue, w_part, .. } => {
            let w = w_part + s_glue * x;
            for (i, &p) in internal_phys.iter().enumerate() {
                u_phys[p] = w[i];
            }
            for s in 0..2 {
                let xs = DVector::from_iterator(
                    maps[s].len(),
                    maps[s].iter().map(|&slot| match slot {
                        SlotRef::Exterior(i) => x[i],
                        SlotRef::Internal(i) => w[i],
                    }),
                );
                descend(&children[s], &xs, u_phys, leaves, particulars, mesh);
            }
        }
    }
}
