//! Semantic component labels and the component interface graph.

use std::collections::{BTreeMap, BTreeSet};

use super::SurrogateError;

/// Maps FE part ids to semantic components. Parts missing from `parts`
/// fall into a stable hash bucket over the `components` list.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ComponentTable {
    pub components: Vec<String>,
    pub parts: BTreeMap<u32, String>,
}

impl ComponentTable {
    /// Table built from a part id to component name listing; components are
    /// ordered by name.
    pub fn from_parts(parts: BTreeMap<u32, String>) -> Self {
        let components: BTreeSet<String> = parts.values().cloned().collect();
        ComponentTable { components: components.into_iter().collect(), parts }
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

fn bucket(part: u32, c: usize) -> usize {
    let mut z = (part as u64).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    (z % c as u64) as usize
}

/// Per-node component index for per-node part ids.
pub fn component_map(parts: &[u32], table: &ComponentTable) -> Result<Vec<usize>, SurrogateError> {
    let c = table.components.len();
    if c < 1 {
        return Err(SurrogateError::Config("component table needs at least one component".into()));
    }
    let index: BTreeMap<&str, usize> = table.components.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    parts
        .iter()
        .map(|p| match table.parts.get(p) {
            Some(name) => index
                .get(name.as_str())
                .copied()
                .ok_or_else(|| SurrogateError::Config(format!("part {p} maps to unknown component {name:?}"))),
            None => Ok(bucket(*p, c)),
        })
        .collect()
}

/// Component adjacency plus, per unordered pair, the nodes on either side of
/// a crossing mesh edge.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InterfaceGraph {
    /// Symmetric: `(k, k')` present iff `(k', k)` is.
    pub edges: BTreeSet<(usize, usize)>,
    /// Keyed by `(min, max)` component pair; sorted node indices.
    pub interface_nodes: BTreeMap<(usize, usize), Vec<usize>>,
    /// Directed node pairs `(src, dst)` along crossing edges, both directions.
    pub crossings: Vec<(usize, usize)>,
}

impl InterfaceGraph {
    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

pub fn interface_graph(edges: &[[usize; 2]], c: &[usize]) -> InterfaceGraph {
    let mut g = InterfaceGraph::default();
    let mut sets: BTreeMap<(usize, usize), BTreeSet<usize>> = BTreeMap::new();
    for &[a, b] in edges {
        let (ka, kb) = (c[a], c[b]);
        if ka == kb {
            continue;
        }
        g.edges.insert((ka, kb));
        g.edges.insert((kb, ka));
        let set = sets.entry((ka.min(kb), ka.max(kb))).or_default();
        set.insert(a);
        set.insert(b);
        g.crossings.push((a, b));
        g.crossings.push((b, a));
    }
    g.interface_nodes = sets.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect();
    g
}
