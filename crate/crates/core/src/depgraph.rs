//! Dependency graphs: ground truth from support geometry, thresholding of
//! predicted probabilities, cycle detection and hierarchy levels.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::support::{contacts_of, is_stable, Contact, Support};
use crate::geometry::Catalog;
use crate::graphnet::DependencyProbabilities;
use crate::scenegen::Scene;

/// Default decision threshold on predicted probabilities.
pub const DEFAULT_TSTAR: f64 = 0.5;

/// Directed graph over object indices; edge `(i, j)` means `i` rests on `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct DependencyGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    n: usize,
    edges: Vec<[usize; 2]>,
}

impl From<DependencyGraph> for GraphRepr {
    fn from(g: DependencyGraph) -> Self {
        GraphRepr {
            n: g.n,
            edges: g.edges.iter().map(|&(i, j)| [i, j]).collect(),
        }
    }
}

impl TryFrom<GraphRepr> for DependencyGraph {
    type Error = String;

    fn try_from(r: GraphRepr) -> std::result::Result<Self, String> {
        DependencyGraph::from_edges(r.n, r.edges.into_iter().map(|[i, j]| (i, j))).map_err(|e| e.to_string())
    }
}

impl DependencyGraph {
    pub fn new(n: usize) -> Self {
        DependencyGraph {
            n,
            edges: BTreeSet::new(),
        }
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut g = DependencyGraph::new(n);
        for (i, j) in edges {
            g.add_edge(i, j)?;
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<()> {
        if i >= self.n || j >= self.n {
            return Err(Error::InvalidArgument(format!(
                "edge ({i}, {j}) out of range for {} nodes",
                self.n
            )));
        }
        if i == j {
            return Err(Error::InvalidArgument(format!("self-loop on node {i}")));
        }
        self.edges.insert((i, j));
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i, j))
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Nodes that `i` depends on.
    pub fn supporters(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.range((i, 0)..(i + 1, 0)).map(|&(_, j)| j)
    }

    /// Dense 0/1 adjacency matrix.
    pub fn adjacency(&self) -> ndarray::Array2<f64> {
        let mut a = ndarray::Array2::zeros((self.n, self.n));
        for &(i, j) in &self.edges {
            a[(i, j)] = 1.0;
        }
        a
    }

    /// Relabels nodes: node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        DependencyGraph::from_edges(self.n, self.edges.iter().map(|&(i, j)| (perm[i], perm[j])))
    }
}

/// Sequence of `(object, k)` sorted by ascending `k`, ties by object index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyOrder {
    pub entries: Vec<(usize, usize)>,
}

impl HierarchyOrder {
    /// `k` indexed by object.
    pub fn levels(&self) -> Vec<usize> {
        let mut k = vec![0; self.entries.len()];
        for &(o, lvl) in &self.entries {
            k[o] = lvl;
        }
        k
    }
}

/// Ground-truth graph from geometric support analysis.
///
/// `j` is a dependency of `i` when `i` rests on `j` and `j` is critical: dropping
/// its contact region leaves `i` unstable, or it is `i`'s only contact. When the
/// critical contacts alone (plus any ground contact) do not hold `i` up, every
/// object contact is a dependency.
pub fn oracle_graph(scene: &Scene, catalog: &Catalog) -> Result<DependencyGraph> {
    let bodies = scene.bodies(catalog)?;
    let mut g = DependencyGraph::new(bodies.len());
    for (i, body) in bodies.iter().enumerate() {
        let contacts = contacts_of(body, bodies.iter().enumerate().filter(|(j, _)| *j != i));
        if !is_stable(body, &contacts) {
            return Err(Error::OracleFailure { object: i });
        }
        let objects: Vec<usize> = contacts
            .iter()
            .filter_map(|c| match c.support {
                Support::Object(j) => Some(j),
                Support::Ground => None,
            })
            .collect();
        if objects.is_empty() {
            continue;
        }
        let without = |skip: Support| -> Vec<&Contact> { contacts.iter().filter(|c| c.support != skip).collect() };
        let critical: Vec<usize> = if contacts.len() == 1 {
            objects.clone()
        } else {
            objects
                .iter()
                .copied()
                .filter(|&j| !is_stable(body, without(Support::Object(j))))
                .collect()
        };
        let kept: Vec<&Contact> = contacts
            .iter()
            .filter(|c| match c.support {
                Support::Ground => true,
                Support::Object(j) => critical.contains(&j),
            })
            .collect();
        let deps = if !critical.is_empty() && is_stable(body, kept) {
            critical
        } else {
            objects
        };
        for j in deps {
            g.add_edge(i, j)?;
        }
    }
    Ok(g)
}

/// Edges `{(i, j) : ρ_ij > t*}`.
pub fn threshold_graph(rho: &DependencyProbabilities, tstar: f64) -> DependencyGraph {
    let n = rho.n();
    let mut g = DependencyGraph::new(n);
    for i in 0..n {
        for j in 0..n {
            if i != j && rho.get(i, j) > tstar {
                g.edges.insert((i, j));
            }
        }
    }
    g
}

/// Kahn's algorithm; `None` if the graph has a cycle. Returns nodes in
/// dependency-first order.
fn kahn(g: &DependencyGraph) -> Option<Vec<usize>> {
    let n = g.n;
    // out-degree counts unresolved dependencies; dependents[j] lists i with i -> j.
    let mut pending = vec![0usize; n];
    let mut dependents = vec![Vec::new(); n];
    for &(i, j) in &g.edges {
        pending[i] += 1;
        dependents[j].push(i);
    }
    let mut ready: Vec<usize> = (0..n).filter(|&i| pending[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(j) = ready.pop() {
        order.push(j);
        for &i in &dependents[j] {
            pending[i] -= 1;
            if pending[i] == 0 {
                ready.push(i);
            }
        }
    }
    (order.len() == n).then_some(order)
}

pub fn is_dag(g: &DependencyGraph) -> bool {
    kahn(g).is_some()
}

/// `k(i)` is the longest dependency chain below `i`.
pub fn topo_levels(g: &DependencyGraph) -> Result<HierarchyOrder> {
    let order = kahn(g).ok_or(Error::CircularDependency)?;
    let mut k = vec![0usize; g.n];
    for &i in &order {
        k[i] = g.supporters(i).map(|j| k[j] + 1).max().unwrap_or(0);
    }
    let mut entries: Vec<(usize, usize)> = (0..g.n).map(|i| (i, k[i])).collect();
    entries.sort_by_key(|&(i, lvl)| (lvl, i));
    Ok(HierarchyOrder { entries })
}
