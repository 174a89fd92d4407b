//! Index-coding conflict graph of one demand.
//!
//! A vertex is a packet some receiver wants and does not hold. Two vertices
//! may share a coded transmission only if each receiver already caches the
//! other's packet, or if they are the same packet. Two vertices of the same
//! receiver always conflict, since one XOR reveals at most one unknown
//! packet.

use serde::{Deserialize, Serialize};

use super::packetize::PacketizedPlacement;
use crate::source_model::DemandRealization;
use crate::{Error, Result};

/// Receiver sets are `u64` masks.
pub const MASK_RECEIVERS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Vertex {
    pub receiver: usize,
    pub file: usize,
    pub packet: u32,
}

#[derive(Debug, Clone)]
enum Edges {
    /// Edges follow from the cache contents.
    Demand { cached_by: Vec<u64> },
    /// Explicit neighbor bitsets.
    Explicit { rows: Vec<Vec<u64>> },
}

#[derive(Debug, Clone)]
pub struct ConflictGraph {
    vertices: Vec<Vertex>,
    edges: Edges,
}

impl ConflictGraph {
    /// Graph with arbitrary edges over `order` anonymous vertices.
    pub fn from_edges(order: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let words = order.div_ceil(64);
        let mut rows = vec![vec![0u64; words]; order];
        for &(u, v) in edges {
            if u >= order || v >= order {
                return Err(Error::IndexOutOfRange {
                    index: u.max(v),
                    limit: order,
                });
            }
            if u == v {
                return Err(Error::domain(format!("self-loop at vertex {u}")));
            }
            rows[u][v / 64] |= 1 << (v % 64);
            rows[v][u / 64] |= 1 << (u % 64);
        }
        let vertices = (0..order)
            .map(|v| Vertex {
                receiver: v,
                file: 0,
                packet: v as u32,
            })
            .collect();
        Ok(Self {
            vertices,
            edges: Edges::Explicit { rows },
        })
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Vertices ordered by (receiver, file, packet).
    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    /// Whether edges come from cache contents rather than an explicit list.
    pub fn is_demand_graph(&self) -> bool {
        matches!(self.edges, Edges::Demand { .. })
    }

    /// Receivers caching the packet of vertex `v`; `None` for explicit
    /// graphs.
    pub fn cached_by(&self, v: usize) -> Option<u64> {
        match &self.edges {
            Edges::Demand { cached_by } => Some(cached_by[v]),
            Edges::Explicit { .. } => None,
        }
    }

    pub fn adjacent(&self, u: usize, v: usize) -> bool {
        if u == v {
            return false;
        }
        match &self.edges {
            Edges::Explicit { rows } => rows[u][v / 64] >> (v % 64) & 1 == 1,
            Edges::Demand { cached_by } => {
                let (a, b) = (&self.vertices[u], &self.vertices[v]);
                if a.receiver == b.receiver {
                    return true;
                }
                if a.file == b.file && a.packet == b.packet {
                    return false;
                }
                cached_by[u] >> b.receiver & 1 == 0 || cached_by[v] >> a.receiver & 1 == 0
            }
        }
    }

    pub fn degree(&self, v: usize) -> usize {
        match &self.edges {
            Edges::Explicit { rows } => rows[v].iter().map(|w| w.count_ones() as usize).sum(),
            Edges::Demand { .. } => (0..self.len()).filter(|&u| self.adjacent(u, v)).count(),
        }
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.len())
            .flat_map(|u| (u + 1..self.len()).map(move |v| (u, v)))
            .filter(|&(u, v)| self.adjacent(u, v))
            .collect()
    }

    /// Subgraph on the vertices with `keep[v]`, in the original order.
    pub fn induced(&self, keep: &[bool]) -> ConflictGraph {
        let idx: Vec<usize> = (0..self.len()).filter(|&v| keep[v]).collect();
        let vertices = idx.iter().map(|&v| self.vertices[v]).collect();
        let edges = match &self.edges {
            Edges::Demand { cached_by } => Edges::Demand {
                cached_by: idx.iter().map(|&v| cached_by[v]).collect(),
            },
            Edges::Explicit { .. } => {
                let words = idx.len().div_ceil(64);
                let mut rows = vec![vec![0u64; words]; idx.len()];
                for (a, &u) in idx.iter().enumerate() {
                    for (b, &v) in idx.iter().enumerate() {
                        if self.adjacent(u, v) {
                            rows[a][b / 64] |= 1 << (b % 64);
                        }
                    }
                }
                Edges::Explicit { rows }
            }
        };
        ConflictGraph { vertices, edges }
    }
}

/// One vertex per receiver `i` and packet of file `d_i` inside `i`'s storing
/// range that `i` does not cache.
pub fn build_conflict_graph(
    placement: &PacketizedPlacement,
    d: &DemandRealization,
) -> Result<ConflictGraph> {
    let n = placement.n();
    if d.n() != n {
        return Err(Error::dimension(format!(
            "demand has {} receivers, placement {n}",
            d.n()
        )));
    }
    if n > MASK_RECEIVERS {
        return Err(Error::ReceiverCap {
            receivers: n,
            cap: MASK_RECEIVERS,
        });
    }
    if let Some(&bad) = d.files().iter().find(|&&f| f >= placement.m()) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            limit: placement.m(),
        });
    }
    let files = d.distinct_files();
    let holders: Vec<Vec<u64>> = files
        .iter()
        .map(|&f| {
            let len = (0..n)
                .map(|u| placement.range_packets(u, f))
                .max()
                .unwrap_or(0) as usize;
            let mut mask = vec![0u64; len];
            for u in 0..n {
                for &p in &placement.cached_packet_sets[u][f] {
                    mask[p as usize] |= 1 << u;
                }
            }
            mask
        })
        .collect();
    let mut vertices = Vec::new();
    let mut cached_by = Vec::new();
    for i in 0..n {
        let f = d.file(i);
        let slot = files
            .binary_search(&f)
            .expect("distinct files contain every request");
        for p in 0..placement.range_packets(i, f) {
            let mask = holders[slot][p as usize];
            if mask >> i & 1 == 0 {
                vertices.push(Vertex {
                    receiver: i,
                    file: f,
                    packet: p,
                });
                cached_by.push(mask);
            }
        }
    }
    Ok(ConflictGraph {
        vertices,
        edges: Edges::Demand { cached_by },
    })
}
