//! Greedy constrained coloring.
//!
//! Each color class is sent as one XOR of its packets. On demand graphs the
//! vertices are first grouped by label (requesting receivers plus the
//! receivers caching the packet), and each label is cut into independent
//! sets. The constrained rule sends these sets as they are. The greedy rule
//! then places them largest first into the first color they fit, and on
//! small graphs also tries plain largest-first and DSatur and keeps the
//! fewest colors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::conflict::ConflictGraph;

/// Graphs up to this order are also colored vertex by vertex.
const GENERIC_LIMIT: usize = 1500;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coloring {
    /// Color of each vertex, `0..count`.
    pub colors: Vec<usize>,
    pub count: usize,
}

impl Coloring {
    fn from_colors(colors: Vec<usize>) -> Self {
        let count = colors.iter().max().map_or(0, |c| c + 1);
        Self { colors, count }
    }

    pub fn classes(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.count];
        for (v, &c) in self.colors.iter().enumerate() {
            out[c].push(v);
        }
        out
    }
}

pub fn is_proper(graph: &ConflictGraph, coloring: &Coloring) -> bool {
    coloring.colors.len() == graph.len()
        && graph
            .edges()
            .iter()
            .all(|&(u, v)| coloring.colors[u] != coloring.colors[v])
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColoringRule {
    /// Classes never mix labels; the load tracks the closed-form per-demand
    /// rate.
    #[default]
    Constrained,
    /// Label classes merged greedily; never more colors than `Constrained`.
    Greedy,
}

impl std::str::FromStr for ColoringRule {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "constrained" => Ok(ColoringRule::Constrained),
            "greedy" => Ok(ColoringRule::Greedy),
            other => Err(crate::Error::config(format!(
                "unknown coloring rule {other:?}"
            ))),
        }
    }
}

pub fn color_with(graph: &ConflictGraph, rule: ColoringRule) -> Coloring {
    match rule {
        ColoringRule::Constrained => constrained_color(graph),
        ColoringRule::Greedy => gcc_color(graph),
    }
}

/// Greedy rule. On demand graphs the label pass comes first; every result is
/// a proper coloring.
pub fn gcc_color(graph: &ConflictGraph) -> Coloring {
    let mut best = if graph.is_demand_graph() {
        label_coloring(graph)
    } else {
        largest_first(graph)
    };
    if graph.len() <= GENERIC_LIMIT {
        for other in [largest_first(graph), dsatur(graph)] {
            if other.count < best.count {
                best = other;
            }
        }
    }
    best
}

/// Smallest free color for each vertex, by decreasing degree (ties by
/// vertex order).
pub fn largest_first(graph: &ConflictGraph) -> Coloring {
    let n = graph.len();
    let degree: Vec<usize> = (0..n).map(|v| graph.degree(v)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| degree[b].cmp(&degree[a]).then(a.cmp(&b)));
    let mut colors = vec![usize::MAX; n];
    for &v in &order {
        colors[v] = smallest_free(graph, &colors, v);
    }
    Coloring::from_colors(colors)
}

/// Always colors the vertex seeing the most distinct colors next (ties by
/// degree, then vertex order).
pub fn dsatur(graph: &ConflictGraph) -> Coloring {
    let n = graph.len();
    let degree: Vec<usize> = (0..n).map(|v| graph.degree(v)).collect();
    let mut colors = vec![usize::MAX; n];
    let mut seen: Vec<Vec<bool>> = vec![Vec::new(); n];
    let mut saturation = vec![0usize; n];
    for _ in 0..n {
        let v = (0..n)
            .filter(|&v| colors[v] == usize::MAX)
            .max_by(|&a, &b| {
                saturation[a]
                    .cmp(&saturation[b])
                    .then(degree[a].cmp(&degree[b]))
                    .then(b.cmp(&a))
            })
            .expect("an uncolored vertex remains");
        let c = smallest_free(graph, &colors, v);
        colors[v] = c;
        for u in 0..n {
            if colors[u] == usize::MAX && graph.adjacent(u, v) {
                if seen[u].len() <= c {
                    seen[u].resize(c + 1, false);
                }
                if !seen[u][c] {
                    seen[u][c] = true;
                    saturation[u] += 1;
                }
            }
        }
    }
    Coloring::from_colors(colors)
}

fn smallest_free(graph: &ConflictGraph, colors: &[usize], v: usize) -> usize {
    let mut used: Vec<bool> = Vec::new();
    for (u, &c) in colors.iter().enumerate() {
        if c != usize::MAX && graph.adjacent(u, v) {
            if used.len() <= c {
                used.resize(c + 1, false);
            }
            used[c] = true;
        }
    }
    used.iter().position(|&x| !x).unwrap_or(used.len())
}

/// Packets of one color class sharing file and index.
struct Group {
    file: usize,
    packet: u32,
    cached_by: u64,
    requesters: u64,
}

fn fits(groups: &[Group], receiver: usize, file: usize, packet: u32, cached_by: u64) -> bool {
    groups.iter().all(|g| {
        (g.file == file && g.packet == packet)
            || (g.cached_by >> receiver & 1 == 1 && g.requesters & !cached_by == 0)
    })
}

fn join(groups: &mut Vec<Group>, receiver: usize, file: usize, packet: u32, cached_by: u64) {
    match groups
        .iter_mut()
        .find(|g| g.file == file && g.packet == packet)
    {
        Some(g) => g.requesters |= 1 << receiver,
        None => groups.push(Group {
            file,
            packet,
            cached_by,
            requesters: 1 << receiver,
        }),
    }
}

/// Colors with one class per label block and no merging across labels.
/// Explicit graphs have no labels and fall back to [`gcc_color`].
pub fn constrained_color(graph: &ConflictGraph) -> Coloring {
    if !graph.is_demand_graph() {
        return gcc_color(graph);
    }
    let mut colors = vec![usize::MAX; graph.len()];
    for (c, block) in label_blocks(graph).iter().enumerate() {
        for &v in block {
            colors[v] = c;
        }
    }
    Coloring::from_colors(colors)
}

/// Independent sets inside each label. A packet wanted by several receivers
/// counts once, with the label `requesters ∪ cachers`; inside a label two
/// packets fit together iff their requester sets are disjoint, and packets
/// are placed first-fit in vertex order. Blocks are returned largest first
/// (ties by smallest vertex).
fn label_blocks(graph: &ConflictGraph) -> Vec<Vec<usize>> {
    let vs = graph.vertices();
    let mask = |v: usize| graph.cached_by(v).expect("demand graph");

    let mut units: BTreeMap<(usize, u32), (u64, Vec<usize>)> = BTreeMap::new();
    for (v, vx) in vs.iter().enumerate() {
        let unit = units.entry((vx.file, vx.packet)).or_insert((0, Vec::new()));
        unit.0 |= 1 << vx.receiver;
        unit.1.push(v);
    }
    let mut units: Vec<(u64, Vec<usize>)> = units.into_values().collect();
    units.sort_by_key(|u| u.1[0]);

    let mut by_label: BTreeMap<u64, Vec<(u64, Vec<usize>)>> = BTreeMap::new();
    for (requesters, members) in units {
        let label = requesters | mask(members[0]);
        let blocks = by_label.entry(label).or_default();
        match blocks.iter_mut().find(|b| b.0 & requesters == 0) {
            Some(b) => {
                b.0 |= requesters;
                b.1.extend(members);
            }
            None => blocks.push((requesters, members)),
        }
    }
    let mut blocks: Vec<Vec<usize>> = by_label.into_values().flatten().map(|b| b.1).collect();
    for b in &mut blocks {
        b.sort_unstable();
    }
    blocks.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    blocks
}

fn label_coloring(graph: &ConflictGraph) -> Coloring {
    let vs = graph.vertices();
    let mask = |v: usize| graph.cached_by(v).expect("demand graph");
    let mut classes: Vec<Vec<Group>> = Vec::new();
    let mut colors = vec![usize::MAX; vs.len()];
    for block in &label_blocks(graph) {
        let slot = classes.iter().position(|groups| {
            block
                .iter()
                .all(|&v| fits(groups, vs[v].receiver, vs[v].file, vs[v].packet, mask(v)))
        });
        let c = slot.unwrap_or_else(|| {
            classes.push(Vec::new());
            classes.len() - 1
        });
        for &v in block {
            join(
                &mut classes[c],
                vs[v].receiver,
                vs[v].file,
                vs[v].packet,
                mask(v),
            );
            colors[v] = c;
        }
    }
    Coloring::from_colors(colors)
}
