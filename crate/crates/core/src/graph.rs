//! Finite graphs carrying the field: discrete tori, edge-list graphs and
//! fixed-point-free automorphism groups.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default memory guard on the vertex count.
pub const DEFAULT_SIZE_CAP: usize = 1 << 24;

/// Side length and dimension of a discrete torus `{0, 1/L, ..., (L-1)/L}^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TorusShape {
    pub side: usize,
    pub dim: usize,
}

impl TorusShape {
    /// Row-major stride of `axis` (the last axis varies fastest).
    pub fn stride(&self, axis: usize) -> usize {
        self.side.pow((self.dim - 1 - axis) as u32)
    }

    pub fn coordinates(&self, mut vertex: usize) -> Vec<usize> {
        let mut coords = vec![0; self.dim];
        for axis in (0..self.dim).rev() {
            coords[axis] = vertex % self.side;
            vertex /= self.side;
        }
        coords
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords.iter().fold(0, |acc, &c| acc * self.side + c % self.side)
    }
}

/// Undirected simple graph with lattice spacing `h`. Adjacency is stored in
/// compressed rows; edges are kept canonical (`u < v`, sorted).
#[derive(Debug, Clone, PartialEq)]
pub struct GraphTopology {
    n: usize,
    spacing: f64,
    edges: Vec<(u32, u32)>,
    offsets: Vec<usize>,
    adjacency: Vec<u32>,
    max_degree: usize,
    torus: Option<TorusShape>,
}

impl GraphTopology {
    /// Builds and validates a graph; rejects self-loops, duplicate edges and
    /// out-of-range endpoints.
    pub fn from_edges<I>(n: usize, spacing: f64, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        Self::build(n, spacing, edges, DEFAULT_SIZE_CAP)
    }

    fn build<I>(n: usize, spacing: f64, edges: I, cap: usize) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if n == 0 {
            return Err(Error::Validation("graph needs at least one vertex".into()));
        }
        if n > cap {
            return Err(Error::SizeCap { requested: n as u128, cap });
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::Validation(format!("lattice spacing must be positive, got {spacing}")));
        }
        let mut canonical = Vec::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Validation(format!("edge ({u}, {v}) out of range for n = {n}")));
            }
            if u == v {
                return Err(Error::Validation(format!("self-loop at vertex {u}")));
            }
            canonical.push((u.min(v) as u32, u.max(v) as u32));
        }
        canonical.sort_unstable();
        if let Some(w) = canonical.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Validation(format!("duplicate edge ({}, {})", w[0].0, w[0].1)));
        }

        let mut degree = vec![0usize; n];
        for &(u, v) in &canonical {
            degree[u as usize] += 1;
            degree[v as usize] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..n].to_vec();
        let mut adjacency = vec![0u32; offsets[n]];
        for &(u, v) in &canonical {
            adjacency[fill[u as usize]] = v;
            fill[u as usize] += 1;
            adjacency[fill[v as usize]] = u;
            fill[v as usize] += 1;
        }
        for x in 0..n {
            adjacency[offsets[x]..offsets[x + 1]].sort_unstable();
        }
        let max_degree = degree.iter().copied().max().unwrap_or(0);
        Ok(Self { n, spacing, edges: canonical, offsets, adjacency, max_degree, torus: None })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Lattice spacing `h`.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// The same graph with lattice spacing `h`, e.g. `h = n^{-p}` for a size family.
    pub fn with_spacing(mut self, spacing: f64) -> Result<Self> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::param("h", format!("must be finite and > 0, got {spacing}")));
        }
        self.spacing = spacing;
        Ok(self)
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    #[inline]
    pub fn neighbors(&self, x: usize) -> &[u32] {
        &self.adjacency[self.offsets[x]..self.offsets[x + 1]]
    }

    pub fn degree(&self, x: usize) -> usize {
        self.offsets[x + 1] - self.offsets[x]
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    /// `2 |E| / n`.
    pub fn average_degree(&self) -> f64 {
        2.0 * self.edges.len() as f64 / self.n as f64
    }

    pub fn is_regular(&self) -> bool {
        (0..self.n).all(|x| self.degree(x) == self.max_degree)
    }

    pub fn torus(&self) -> Option<TorusShape> {
        self.torus
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n && self.neighbors(u).binary_search(&(v as u32)).is_ok()
    }

    /// A vertex at maximal graph distance from `source` (lowest index on ties).
    pub fn farthest_from(&self, source: usize) -> usize {
        let mut dist = vec![usize::MAX; self.n];
        let mut queue = std::collections::VecDeque::from([source]);
        dist[source] = 0;
        while let Some(x) = queue.pop_front() {
            for &y in self.neighbors(x) {
                let y = y as usize;
                if dist[y] == usize::MAX {
                    dist[y] = dist[x] + 1;
                    queue.push_back(y);
                }
            }
        }
        let reachable = dist.iter().filter(|d| **d != usize::MAX);
        let best = reachable.copied().max().unwrap_or(0);
        dist.iter().position(|d| *d == best).unwrap_or(source)
    }

    /// Text edge list: `n <int> h <float>` then one `u v` pair per line.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::with_capacity(16 * (self.edges.len() + 1));
        writeln!(out, "n {} h {}", self.n, self.spacing).unwrap();
        for &(u, v) in &self.edges {
            writeln!(out, "{u} {v}").unwrap();
        }
        out
    }

    /// Parses [`to_edge_list`](Self::to_edge_list) output. Blank lines and
    /// lines starting with `#` are ignored.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (header_line, header) =
            lines.next().ok_or(Error::Parse { line: 1, message: "missing header".into() })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let bad_header = || Error::Parse {
            line: header_line,
            message: format!("expected `n <int> h <float>`, got `{header}`"),
        };
        if fields.len() != 4 || fields[0] != "n" || fields[2] != "h" {
            return Err(bad_header());
        }
        let n: usize = fields[1].parse().map_err(|_| bad_header())?;
        let spacing: f64 = fields[3].parse().map_err(|_| bad_header())?;
        let mut edges = Vec::new();
        for (line, content) in lines {
            let mut parts = content.split_whitespace();
            let parse = |s: Option<&str>| -> Result<usize> {
                s.and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Parse { line, message: format!("expected `u v`, got `{content}`") })
            };
            let u = parse(parts.next())?;
            let v = parse(parts.next())?;
            if parts.next().is_some() {
                return Err(Error::Parse { line, message: format!("trailing data in `{content}`") });
            }
            edges.push((u, v));
        }
        Self::from_edges(n, spacing, edges)
    }
}

/// The discrete torus with side `L` in `d` dimensions: `n = L^d`, `h = 1/L`,
/// periodic nearest-neighbour edges. For `L = 2` both axis neighbours coincide
/// and the single undirected edge is stored once (degree `d`).
pub fn make_torus(side: usize, dim: usize) -> Result<GraphTopology> {
    make_torus_capped(side, dim, DEFAULT_SIZE_CAP)
}

pub fn make_torus_capped(side: usize, dim: usize, cap: usize) -> Result<GraphTopology> {
    if side < 2 {
        return Err(Error::param("L", format!("torus side must be >= 2, got {side}")));
    }
    if dim < 1 {
        return Err(Error::param("d", "torus dimension must be >= 1"));
    }
    let n = u32::try_from(dim)
        .ok()
        .and_then(|d| side.checked_pow(d))
        .filter(|n| *n <= cap)
        .ok_or_else(|| Error::SizeCap { requested: (side as u128).saturating_pow(dim.min(64) as u32), cap })?;
    let shape = TorusShape { side, dim };
    let mut edges = Vec::with_capacity(n * dim);
    for x in 0..n {
        let coords = shape.coordinates(x);
        for axis in 0..dim {
            // only the +1 neighbour; for side 2 keep each pair once
            if side == 2 && coords[axis] == 1 {
                continue;
            }
            let stride = shape.stride(axis);
            let y = if coords[axis] + 1 == side { x + stride - side * stride } else { x + stride };
            edges.push((x, y));
        }
    }
    let mut topology = GraphTopology::build(n, 1.0 / side as f64, edges, cap)?;
    topology.torus = Some(shape);
    Ok(topology)
}

/// A group of graph automorphisms of order `n` whose non-identity elements
/// have no fixed points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AutomorphismGroup {
    maps: Vec<Vec<u32>>,
}

impl AutomorphismGroup {
    /// The `n` coordinate translations of a torus; map `k` sends vertex 0 to `k`.
    pub fn torus_translations(topology: &GraphTopology) -> Result<Self> {
        let shape = topology
            .torus()
            .ok_or_else(|| Error::Unsupported("translations need a torus topology".into()))?;
        let n = topology.n();
        let coords: Vec<Vec<usize>> = (0..n).map(|x| shape.coordinates(x)).collect();
        let maps = (0..n)
            .map(|t| {
                let shift = &coords[t];
                coords
                    .iter()
                    .map(|c| {
                        let moved: Vec<usize> = c.iter().zip(shift).map(|(a, b)| (a + b) % shape.side).collect();
                        shape.index(&moved) as u32
                    })
                    .collect()
            })
            .collect();
        Ok(Self { maps })
    }

    /// Wraps user-supplied permutations after checking every group axiom.
    pub fn from_maps(topology: &GraphTopology, maps: Vec<Vec<u32>>) -> Result<Self> {
        let group = Self { maps };
        group.validate(topology)?;
        Ok(group)
    }

    pub fn maps(&self) -> &[Vec<u32>] {
        &self.maps
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    /// Checks order `n`, bijectivity, edge preservation, identity, closure
    /// under composition and inverse, and fixed-point freeness.
    pub fn validate(&self, topology: &GraphTopology) -> Result<()> {
        let n = topology.n();
        let fail = |msg: String| Err(Error::Validation(msg));
        if self.maps.len() != n {
            return fail(format!("group has {} elements, graph has {n} vertices", self.maps.len()));
        }
        let identity: Vec<u32> = (0..n as u32).collect();
        let mut index = HashMap::with_capacity(n);
        for (k, map) in self.maps.iter().enumerate() {
            if map.len() != n {
                return fail(format!("map {k} has length {}", map.len()));
            }
            let mut seen = vec![false; n];
            for &y in map {
                if y as usize >= n || std::mem::replace(&mut seen[y as usize], true) {
                    return fail(format!("map {k} is not a permutation"));
                }
            }
            if index.insert(map.as_slice(), k).is_some() {
                return fail(format!("map {k} is repeated"));
            }
        }
        if !index.contains_key(identity.as_slice()) {
            return fail("identity missing".into());
        }
        let edges: HashSet<(u32, u32)> = topology.edges().iter().copied().collect();
        for (k, map) in self.maps.iter().enumerate() {
            for &(u, v) in topology.edges() {
                let (a, b) = (map[u as usize], map[v as usize]);
                if !edges.contains(&(a.min(b), a.max(b))) {
                    return fail(format!("map {k} does not preserve edge ({u}, {v})"));
                }
            }
            if *map != identity && map.iter().enumerate().any(|(x, &y)| x as u32 == y) {
                return fail(format!("non-identity map {k} has a fixed point"));
            }
        }
        let mut composed = vec![0u32; n];
        for (i, outer) in self.maps.iter().enumerate() {
            for inner in &self.maps {
                for x in 0..n {
                    composed[x] = outer[inner[x] as usize];
                }
                if !index.contains_key(composed.as_slice()) {
                    return fail(format!("group not closed under composition (element {i})"));
                }
            }
            for (x, &y) in outer.iter().enumerate() {
                composed[y as usize] = x as u32;
            }
            if !index.contains_key(composed.as_slice()) {
                return fail(format!("inverse of element {i} missing"));
            }
        }
        Ok(())
    }
}
