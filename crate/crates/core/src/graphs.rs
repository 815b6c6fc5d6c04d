//! Stable graphs with ordered legs and the weighted graph sums built on them.
//!
//! A [`StableGraph`] is an undecorated skeleton: vertex genera, an edge
//! multiset (loops allowed) and the vertex carrying each ordinary leaf.
//! Decorations (markings, heights, dilaton leaves) are summed per skeleton,
//! using `sum_{decorated} w / |Aut| = (1/|Aut(skeleton)|) sum_{decorations} w`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Mutex;

use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, SqrtDelta};
use crate::rmatrix::{bmodel_r_laplace, RMatrixSeries};
use crate::intersect::tau;
use crate::series::C64;
use crate::spectral::{EoSolver, FormExpansion, SpectralData};

/// Hard caps on the graph sums the crate will attempt.
pub const MAX_GENUS: u32 = 3;
pub const MAX_LEGS: usize = 4;

/// Undecorated stable graph with ordered ordinary leaves.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StableGraph {
    pub genus: Vec<u32>,
    /// Symmetric; `adj[i][i]` counts loops at `i`.
    pub adj: Vec<Vec<u32>>,
    /// Vertex carrying ordinary leaf `j`.
    pub leaves: Vec<usize>,
    pub aut: u64,
}

impl StableGraph {
    pub fn vertex_count(&self) -> usize {
        self.genus.len()
    }

    /// Edges expanded by multiplicity, each as `(i, j)` with `i <= j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let v = self.vertex_count();
        let mut out = Vec::new();
        for i in 0..v {
            for j in i..v {
                for _ in 0..self.adj[i][j] {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Number of half-edges and ordinary leaves at `v` (dilaton leaves excluded).
    pub fn valence(&self, v: usize) -> usize {
        let mut d = 0;
        for j in 0..self.vertex_count() {
            d += self.adj[v][j] as usize * if j == v { 2 } else { 1 };
        }
        d + self.leaves.iter().filter(|&&l| l == v).count()
    }

    pub fn total_genus(&self) -> u32 {
        let e = self.edges().len() as i64;
        let v = self.vertex_count() as i64;
        (self.genus.iter().map(|&g| g as i64).sum::<i64>() + e - v + 1) as u32
    }
}

fn factorial(n: u32) -> u64 {
    (1..=n as u64).product()
}

/// Vertex blocks that automorphisms may permute: leafless vertices of equal genus.
fn blocks(genus: &[u32], leaves: &[usize]) -> Vec<Vec<usize>> {
    let mut out: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (v, &g) in genus.iter().enumerate() {
        if !leaves.contains(&v) {
            out.entry(g).or_default().push(v);
        }
    }
    out.into_values().filter(|b| b.len() > 1).collect()
}

/// Every vertex permutation that only shuffles vertices within `blocks`.
fn block_permutations(n: usize, blocks: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut perms = vec![(0..n).collect::<Vec<_>>()];
    for b in blocks {
        let mut next = Vec::new();
        for p in &perms {
            for arr in permutations(b.len()) {
                let mut q = p.clone();
                for (i, &t) in arr.iter().enumerate() {
                    q[b[i]] = b[t];
                }
                next.push(q);
            }
        }
        perms = next;
    }
    perms
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn permuted_adj(adj: &[Vec<u32>], p: &[usize]) -> Vec<Vec<u32>> {
    let n = adj.len();
    let mut out = vec![vec![0; n]; n];
    for i in 0..n {
        for j in 0..n {
            out[p[i]][p[j]] = adj[i][j];
        }
    }
    out
}

fn connected(adj: &[Vec<u32>]) -> bool {
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for w in 0..n {
            if adj[v][w] > 0 && !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Vertex permutations preserving the skeleton.
fn vertex_automorphisms(genus: &[u32], adj: &[Vec<u32>], leaves: &[usize]) -> Vec<Vec<usize>> {
    block_permutations(genus.len(), &blocks(genus, leaves))
        .into_iter()
        .filter(|p| permuted_adj(adj, p) == adj)
        .collect()
}

fn automorphism_count(genus: &[u32], adj: &[Vec<u32>], leaves: &[usize]) -> u64 {
    let mut edge_part = 1u64;
    for i in 0..adj.len() {
        edge_part *= factorial(adj[i][i]) << adj[i][i];
        for j in (i + 1)..adj.len() {
            edge_part *= factorial(adj[i][j]);
        }
    }
    vertex_automorphisms(genus, adj, leaves).len() as u64 * edge_part
}

fn canonical_adj(genus: &[u32], adj: &[Vec<u32>], leaves: &[usize]) -> Vec<Vec<u32>> {
    block_permutations(genus.len(), &blocks(genus, leaves))
        .into_iter()
        .map(|p| permuted_adj(adj, &p))
        .min()
        .expect("identity permutation")
}

/// All stable skeletons of type `(g, n)`, duplicate free, in canonical order.
pub fn stable_graphs(g: u32, n: usize) -> Result<Vec<StableGraph>> {
    if 2 * g as i64 - 2 + n as i64 <= 0 {
        return Err(Error::Unstable { g, n });
    }
    static MEMO: Mutex<Option<HashMap<(u32, usize), Vec<StableGraph>>>> = Mutex::new(None);
    if let Some(v) = MEMO.lock().expect("graph memo").get_or_insert_with(HashMap::new).get(&(g, n)) {
        return Ok(v.clone());
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let max_v = (2 * g as usize + n).saturating_sub(2).max(1);
    for v in 1..=max_v {
        for genus in genus_vectors(v, g) {
            let e = (g as i64 - genus.iter().map(|&x| x as i64).sum::<i64>() + v as i64 - 1) as u32;
            for leaves in leaf_maps(&genus, n) {
                let mut adj = vec![vec![0u32; v]; v];
                fill_edges(&genus, &leaves, &mut adj, 0, 0, e, &mut |adj| {
                    if !connected(adj) {
                        return;
                    }
                    let canon = canonical_adj(&genus, adj, &leaves);
                    if seen.insert((genus.clone(), leaves.clone(), canon.clone())) {
                        let aut = automorphism_count(&genus, &canon, &leaves);
                        out.push(StableGraph { genus: genus.clone(), adj: canon, leaves: leaves.clone(), aut });
                    }
                });
            }
        }
    }
    out.sort_by(|a, b| (a.vertex_count(), &a.genus, &a.leaves, &a.adj).cmp(&(b.vertex_count(), &b.genus, &b.leaves, &b.adj)));
    MEMO.lock().expect("graph memo").get_or_insert_with(HashMap::new).insert((g, n), out.clone());
    Ok(out)
}

/// Non-increasing genus vectors of length `v` with sum at most `g`.
fn genus_vectors(v: usize, g: u32) -> Vec<Vec<u32>> {
    fn rec(v: usize, left: u32, cap: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == v {
            out.push(cur.clone());
            return;
        }
        for x in (0..=left.min(cap)).rev() {
            cur.push(x);
            rec(v, left - x, x, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(v, g, g, &mut Vec::new(), &mut out);
    out
}

/// Leaf attachments where, within each genus block, leaf-carrying vertices
/// come first ordered by their smallest leaf.
fn leaf_maps(genus: &[u32], n: usize) -> Vec<Vec<usize>> {
    let v = genus.len();
    let mut out = Vec::new();
    let total = v.pow(n as u32);
    'outer: for code in 0..total {
        let mut c = code;
        let leaves: Vec<usize> = (0..n)
            .map(|_| {
                let x = c % v;
                c /= v;
                x
            })
            .collect();
        let first = |u: usize| leaves.iter().position(|&l| l == u);
        for u in 1..v {
            if genus[u] != genus[u - 1] {
                continue;
            }
            match (first(u - 1), first(u)) {
                (None, Some(_)) => continue 'outer,
                (Some(a), Some(b)) if a > b => continue 'outer,
                _ => {}
            }
        }
        out.push(leaves);
    }
    out
}

fn fill_edges(
    genus: &[u32],
    leaves: &[usize],
    adj: &mut Vec<Vec<u32>>,
    i: usize,
    j: usize,
    left: u32,
    emit: &mut dyn FnMut(&Vec<Vec<u32>>),
) {
    let v = genus.len();
    if i == v {
        if left == 0 {
            emit(adj);
        }
        return;
    }
    if j == v {
        // Row i is complete, so its valence is final.
        let deg = (0..v).map(|k| adj[i][k] * if k == i { 2 } else { 1 }).sum::<u32>() as i64
            + leaves.iter().filter(|&&l| l == i).count() as i64;
        if 2 * genus[i] as i64 - 2 + deg <= 0 {
            return;
        }
        // Leafless vertices of equal genus: valence non-increasing.
        if i > 0 && genus[i] == genus[i - 1] && !leaves.contains(&i) && !leaves.contains(&(i - 1)) {
            let prev = (0..v).map(|k| adj[i - 1][k] * if k == i - 1 { 2 } else { 1 }).sum::<u32>();
            if deg as u32 > prev {
                return;
            }
        }
        fill_edges(genus, leaves, adj, i + 1, i + 1, left, emit);
        return;
    }
    for x in 0..=left {
        adj[i][j] = x;
        adj[j][i] = x;
        fill_edges(genus, leaves, adj, i, j + 1, left - x, emit);
    }
    adj[i][j] = 0;
    adj[j][i] = 0;
}

/// Fully decorated graph: one representative per isomorphism class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledGraph {
    pub genus: Vec<u32>,
    pub marking: Vec<usize>,
    /// `(v1, v2, k1, k2)`: heights at the `v1` and `v2` ends.
    pub edges: Vec<(usize, usize, u32, u32)>,
    /// `(vertex, height)` of ordinary leaf `j`.
    pub leaves: Vec<(usize, u32)>,
    /// `(vertex, height)` of every dilaton leaf, heights `>= 2`.
    pub dilatons: Vec<(usize, u32)>,
    pub aut: u64,
}

impl LabeledGraph {
    /// Heights at each vertex, dilaton leaves included.
    pub fn vertex_heights(&self) -> Vec<Vec<u32>> {
        let mut hs = vec![Vec::new(); self.genus.len()];
        for &(a, b, k, l) in &self.edges {
            hs[a].push(k);
            hs[b].push(l);
        }
        for &(v, k) in self.leaves.iter().chain(&self.dilatons) {
            hs[v].push(k);
        }
        hs
    }

    pub fn total_genus(&self) -> u32 {
        let e = self.edges.len() as i64;
        let v = self.genus.len() as i64;
        (self.genus.iter().map(|&g| g as i64).sum::<i64>() + e - v + 1) as u32
    }
}

/// Decoration of a skeleton in a form where isomorphism is equality.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct DecorationKey {
    marking: Vec<usize>,
    bundles: Vec<Vec<(u32, u32)>>,
    leaves: Vec<u32>,
    dilatons: Vec<Vec<u32>>,
}

#[derive(Debug, Clone)]
struct Decoration {
    marking: Vec<usize>,
    /// Heights per expanded edge, in `StableGraph::edges` order.
    edge_heights: Vec<(u32, u32)>,
    leaves: Vec<u32>,
    /// Sorted dilaton heights per vertex.
    dilatons: Vec<Vec<u32>>,
}

fn key_under(sk: &StableGraph, dec: &Decoration, p: &[usize]) -> DecorationKey {
    let v = sk.vertex_count();
    let mut marking = vec![0; v];
    let mut dilatons = vec![Vec::new(); v];
    for i in 0..v {
        marking[p[i]] = dec.marking[i];
        dilatons[p[i]] = dec.dilatons[i].clone();
    }
    let mut bundle_map: BTreeMap<(usize, usize), Vec<(u32, u32)>> = BTreeMap::new();
    for (&(a, b), &(k, l)) in sk.edges().iter().zip(&dec.edge_heights) {
        let (pa, pb) = (p[a], p[b]);
        let entry = if pa < pb {
            ((pa, pb), (k, l))
        } else if pa > pb {
            ((pb, pa), (l, k))
        } else {
            ((pa, pa), (k.min(l), k.max(l)))
        };
        bundle_map.entry(entry.0).or_default().push(entry.1);
    }
    let bundles = bundle_map
        .into_values()
        .map(|mut b| {
            b.sort();
            b
        })
        .collect();
    DecorationKey { marking, bundles, leaves: dec.leaves.clone(), dilatons }
}

fn stabilizer_within_bundles(sk: &StableGraph, dec: &Decoration) -> u64 {
    let mut groups: HashMap<(usize, usize, u32, u32), u32> = HashMap::new();
    let mut flips = 1u64;
    for (&(a, b), &(k, l)) in sk.edges().iter().zip(&dec.edge_heights) {
        let hk = if a == b { (k.min(l), k.max(l)) } else { (k, l) };
        *groups.entry((a, b, hk.0, hk.1)).or_default() += 1;
        if a == b && k == l {
            flips *= 2;
        }
    }
    let mut dil = 1u64;
    for ds in &dec.dilatons {
        let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
        for &k in ds {
            *counts.entry(k).or_default() += 1;
        }
        dil *= counts.values().map(|&c| factorial(c)).product::<u64>();
    }
    groups.values().map(|&c| factorial(c)).product::<u64>() * flips * dil
}

/// Dimension slack of a vertex: `3g - 3 + val`.
fn vertex_dim(g: u32, val: usize) -> i64 {
    3 * g as i64 - 3 + val as i64
}

/// Sorted multisets of heights `>= 2` with `sum k - count = budget`.
fn dilaton_multisets(budget: i64) -> Vec<Vec<u32>> {
    fn rec(left: i64, min: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if left == 0 {
            out.push(cur.clone());
        }
        let mut k = min;
        while (k as i64 - 1) <= left {
            cur.push(k);
            rec(left - (k as i64 - 1), k, cur, out);
            cur.pop();
            k += 1;
        }
    }
    let mut out = Vec::new();
    if budget >= 0 {
        rec(budget, 2, &mut Vec::new(), &mut out);
    }
    out
}

/// Height vectors of length `len` with sum at most `cap`.
fn bounded_vectors(len: usize, cap: i64) -> Vec<Vec<u32>> {
    fn rec(len: usize, left: i64, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        for x in 0..=left.max(-1) {
            cur.push(x as u32);
            rec(len, left - x, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if cap >= 0 {
        rec(len, cap, &mut Vec::new(), &mut out);
    }
    out
}

/// Half-edge slots of a skeleton, grouped per vertex.
#[derive(Debug, Clone)]
struct HalfEdges {
    /// `(edge index, end)` or `(usize::MAX, leaf index)` per vertex.
    at: Vec<Vec<(usize, usize)>>,
}

const LEAF: usize = usize::MAX;

fn half_edges(sk: &StableGraph) -> HalfEdges {
    let mut at = vec![Vec::new(); sk.vertex_count()];
    for (e, &(a, b)) in sk.edges().iter().enumerate() {
        at[a].push((e, 0));
        at[b].push((e, 1));
    }
    for (j, &v) in sk.leaves.iter().enumerate() {
        at[v].push((LEAF, j));
    }
    HalfEdges { at }
}

/// Visit every decoration of `sk` with `size` markings.
fn for_each_decoration(sk: &StableGraph, size: usize, mut f: impl FnMut(&Decoration)) {
    let v = sk.vertex_count();
    let he = half_edges(sk);
    let ne = sk.edges().len();
    let per_vertex: Vec<Vec<(Vec<u32>, Vec<u32>)>> = (0..v)
        .map(|i| {
            let val = he.at[i].len();
            let dim = vertex_dim(sk.genus[i], val);
            let mut opts = Vec::new();
            for hs in bounded_vectors(val, dim) {
                let used: i64 = hs.iter().map(|&x| x as i64).sum();
                for ds in dilaton_multisets(dim - used) {
                    opts.push((hs.clone(), ds));
                }
            }
            opts
        })
        .collect();
    let mut choice = vec![0usize; v];
    loop {
        let mut edge_heights = vec![(0u32, 0u32); ne];
        let mut leaves = vec![0u32; sk.leaves.len()];
        let mut dilatons = vec![Vec::new(); v];
        for i in 0..v {
            let (hs, ds) = &per_vertex[i][choice[i]];
            for (slot, &h) in he.at[i].iter().zip(hs) {
                if slot.0 == LEAF {
                    leaves[slot.1] = h;
                } else if slot.1 == 0 {
                    edge_heights[slot.0].0 = h;
                } else {
                    edge_heights[slot.0].1 = h;
                }
            }
            dilatons[i] = ds.clone();
        }
        for code in 0..size.pow(v as u32) {
            let mut c = code;
            let marking = (0..v)
                .map(|_| {
                    let x = c % size;
                    c /= size;
                    x
                })
                .collect();
            f(&Decoration { marking, edge_heights: edge_heights.clone(), leaves: leaves.clone(), dilatons: dilatons.clone() });
        }
        let mut i = 0;
        loop {
            if i == v {
                return;
            }
            choice[i] += 1;
            if choice[i] < per_vertex[i].len() {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

/// Every decorated stable graph of type `(g, n)` with `size` markings whose
/// vertices satisfy the dimension constraint, one per isomorphism class.
pub fn enumerate(g: u32, n: usize, size: usize) -> Result<Vec<LabeledGraph>> {
    let mut out = Vec::new();
    for sk in stable_graphs(g, n)? {
        let autos = vertex_automorphisms(&sk.genus, &sk.adj, &sk.leaves);
        let mut seen = HashSet::new();
        let edges = sk.edges();
        for_each_decoration(&sk, size, |dec| {
            let own = key_under(&sk, dec, &(0..sk.vertex_count()).collect::<Vec<_>>());
            let images: Vec<DecorationKey> = autos.iter().map(|p| key_under(&sk, dec, p)).collect();
            let canon = images.iter().min().expect("identity").clone();
            if !seen.insert(canon) {
                return;
            }
            let fixing = images.iter().filter(|k| **k == own).count() as u64;
            let aut = fixing * stabilizer_within_bundles(&sk, dec);
            out.push(LabeledGraph {
                genus: sk.genus.clone(),
                marking: dec.marking.clone(),
                edges: edges.iter().zip(&dec.edge_heights).map(|(&(a, b), &(k, l))| (a, b, k, l)).collect(),
                leaves: sk.leaves.iter().zip(&dec.leaves).map(|(&v, &k)| (v, k)).collect(),
                dilatons: dec.dilatons.iter().enumerate().flat_map(|(v, ds)| ds.iter().map(move |&k| (v, k))).collect(),
                aut,
            });
        });
    }
    Ok(out)
}

/// Basis label `(marking, dxi index)` of one leaf slot.
pub type LeafKey = (usize, usize);

/// Local factors of a graph sum.
pub trait GraphWeights {
    /// Multiplies every vertex: the prefactor depending on `(g, val)`.
    fn vertex_prefactor(&self, alpha: usize, g: u32, val: usize) -> C64;
    fn edge(&self, a: usize, b: usize, k: u32, l: u32) -> C64;
    fn dilaton(&self, alpha: usize, k: u32) -> C64;
    /// Ordinary leaf `slot` of height `k` at marking `alpha`, expanded on the `dxi` basis.
    fn leaf(&self, slot: usize, alpha: usize, k: u32) -> Vec<(LeafKey, C64)>;
    /// Overall factor for `(g, N)`.
    fn global(&self, _g: u32, _n: usize) -> C64 {
        C64::new(1.0, 0.0)
    }
}

fn psi(g: u32, ks: &[u32]) -> f64 {
    static MEMO: Mutex<Option<HashMap<(u32, Vec<u32>), f64>>> = Mutex::new(None);
    let mut sorted = ks.to_vec();
    sorted.sort_unstable();
    let key = (g, sorted);
    if let Some(v) = MEMO.lock().expect("psi memo").get_or_insert_with(HashMap::new).get(&key) {
        return *v;
    }
    let v = tau(g, &key.1).ok().and_then(|r| r.to_f64()).unwrap_or(0.0);
    MEMO.lock().expect("psi memo").get_or_insert_with(HashMap::new).insert(key, v);
    v
}

/// Weight of one decoration as a tensor on the leaf basis.
fn decoration_weight(
    sk: &StableGraph,
    he: &HalfEdges,
    dec: &Decoration,
    w: &dyn GraphWeights,
    out: &mut BTreeMap<Vec<LeafKey>, C64>,
    scale: C64,
) {
    let mut scalar = scale;
    for (i, slots) in he.at.iter().enumerate() {
        let mut hs: Vec<u32> = slots
            .iter()
            .map(|s| {
                if s.0 == LEAF {
                    dec.leaves[s.1]
                } else if s.1 == 0 {
                    dec.edge_heights[s.0].0
                } else {
                    dec.edge_heights[s.0].1
                }
            })
            .collect();
        hs.extend(&dec.dilatons[i]);
        let val = hs.len();
        let alpha = dec.marking[i];
        let mut f = w.vertex_prefactor(alpha, sk.genus[i], val) * psi(sk.genus[i], &hs);
        for &k in &dec.dilatons[i] {
            f *= w.dilaton(alpha, k);
        }
        scalar *= f;
        if scalar.is_zero() {
            return;
        }
    }
    for (&(a, b), &(k, l)) in sk.edges().iter().zip(&dec.edge_heights) {
        scalar *= w.edge(dec.marking[a], dec.marking[b], k, l);
    }
    if scalar.is_zero() {
        return;
    }
    let mut partial: Vec<(Vec<LeafKey>, C64)> = vec![(Vec::new(), scalar)];
    for (j, (&v, &k)) in sk.leaves.iter().zip(&dec.leaves).enumerate() {
        let terms = w.leaf(j, dec.marking[v], k);
        let mut next = Vec::with_capacity(partial.len() * terms.len());
        for (key, c) in &partial {
            for (t, x) in &terms {
                let mut kk = key.clone();
                kk.push(*t);
                next.push((kk, c * x));
            }
        }
        partial = next;
    }
    for (key, c) in partial {
        *out.entry(key).or_default() += c;
    }
}

/// Weight of one labeled graph (its leaf tensor), without the `1/|Aut|` factor.
pub fn graph_weight(lg: &LabeledGraph, w: &dyn GraphWeights) -> BTreeMap<Vec<LeafKey>, C64> {
    let v = lg.genus.len();
    let mut adj = vec![vec![0u32; v]; v];
    for &(a, b, _, _) in &lg.edges {
        adj[a][b] += 1;
        if a != b {
            adj[b][a] += 1;
        }
    }
    let sk = StableGraph { genus: lg.genus.clone(), adj, leaves: lg.leaves.iter().map(|l| l.0).collect(), aut: 1 };
    // Reorder the edge heights to match the skeleton's expanded edge order.
    let mut pool: Vec<(usize, usize, u32, u32)> = lg.edges.iter().map(|&(a, b, k, l)| if a <= b { (a, b, k, l) } else { (b, a, l, k) }).collect();
    let mut edge_heights = Vec::new();
    for (a, b) in sk.edges() {
        let pos = pool.iter().position(|e| e.0 == a && e.1 == b).expect("edge present");
        let e = pool.remove(pos);
        edge_heights.push((e.2, e.3));
    }
    let mut dilatons = vec![Vec::new(); v];
    for &(u, k) in &lg.dilatons {
        dilatons[u].push(k);
    }
    let dec = Decoration { marking: lg.marking.clone(), edge_heights, leaves: lg.leaves.iter().map(|l| l.1).collect(), dilatons };
    let mut out = BTreeMap::new();
    let n = lg.leaves.len();
    decoration_weight(&sk, &half_edges(&sk), &dec, w, &mut out, w.global(lg.total_genus(), n));
    out
}

/// `sum_Gamma w(Gamma) / |Aut(Gamma)|` over all decorated graphs of type `(g, n)`.
pub fn graph_sum(g: u32, n: usize, size: usize, w: &dyn GraphWeights) -> Result<FormExpansion> {
    if g > MAX_GENUS || n > MAX_LEGS {
        return Err(Error::NumericFailure(format!("(g, N) = ({g}, {n}) exceeds the supported range")));
    }
    let mut entries = BTreeMap::new();
    let global = w.global(g, n);
    for sk in stable_graphs(g, n)? {
        let he = half_edges(&sk);
        let scale = global / sk.aut as f64;
        for_each_decoration(&sk, size, |dec| {
            // Dilaton multisets stand for d!/prod(mult!) ordered tuples; the
            // 1/d! of the ordered sum leaves 1/prod(mult!).
            let mut s = scale;
            for ds in &dec.dilatons {
                let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
                for &k in ds {
                    *counts.entry(k).or_default() += 1;
                }
                s /= counts.values().map(|&c| factorial(c) as f64).product::<f64>();
            }
            decoration_weight(&sk, &he, dec, w, &mut entries, s);
        });
    }
    entries.retain(|_, c: &mut C64| c.norm() > 0.0);
    Ok(FormExpansion { g, n, entries })
}

/// Same sum, computed over isomorphism-class representatives.
pub fn graph_sum_by_classes(g: u32, n: usize, size: usize, w: &dyn GraphWeights) -> Result<FormExpansion> {
    let mut entries: BTreeMap<Vec<LeafKey>, C64> = BTreeMap::new();
    for lg in enumerate(g, n, size)? {
        for (k, c) in graph_weight(&lg, w) {
            *entries.entry(k).or_default() += c / lg.aut as f64;
        }
    }
    entries.retain(|_, c| c.norm() > 0.0);
    Ok(FormExpansion { g, n, entries })
}

fn parity(k: u32) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `sqrt(-2)` on the principal branch.
pub fn sqrt_minus_two() -> C64 {
    C64::new(0.0, 2f64.sqrt())
}

/// B-model factors read off the spectral curve.
///
/// With the chart convention `x = u - zeta^2` the edge and dilaton factors
/// pick up height-dependent signs: edges carry `(-1)^{k+l+1} Bcheck_{k,l}`
/// (built from `B_{2k,2l}`) and dilaton leaves `(-1)^k hcheck_k / sqrt(2)`.
pub struct BModelWeights<'a> {
    pub data: &'a SpectralData,
    /// Include the overall `(-1)^{g-1+N}`.
    pub global_sign: bool,
}

impl<'a> BModelWeights<'a> {
    pub fn new(data: &'a SpectralData) -> Self {
        BModelWeights { data, global_sign: true }
    }
}

impl GraphWeights for BModelWeights<'_> {
    fn vertex_prefactor(&self, alpha: usize, g: u32, val: usize) -> C64 {
        let h1 = self.data.charts[alpha].h(1);
        (h1 / 2f64.sqrt()).powi(2 - 2 * g as i32 - val as i32)
    }
    fn edge(&self, a: usize, b: usize, k: u32, l: u32) -> C64 {
        -self.data.b_check(a, b, k as usize, l as usize) * parity(k + l)
    }
    fn dilaton(&self, alpha: usize, k: u32) -> C64 {
        self.data.charts[alpha].h_check(k as usize) * (parity(k) / 2f64.sqrt())
    }
    fn leaf(&self, _slot: usize, alpha: usize, k: u32) -> Vec<(LeafKey, C64)> {
        vec![((alpha, k as usize), sqrt_minus_two().inv())]
    }
    fn global(&self, g: u32, n: usize) -> C64 {
        // (-1)^{g-1+N}
        C64::new(if self.global_sign && (g as usize + n) % 2 == 0 { -1.0 } else { 1.0 }, 0.0)
    }
}

/// Givental's A-model weights built from an R-matrix, the Hessian roots and
/// leaf inputs `W_i^b / sqrt(-2)` written on the `dxi` basis.
pub struct AModelWeights {
    r: RMatrixSeries,
    sqrt_delta: Vec<C64>,
    /// `leaf_basis[(b, i)]`: `W_i^b` on the `dxi` basis.
    leaf_basis: BTreeMap<(usize, usize), Vec<(LeafKey, C64)>>,
    /// Index convention: `R_a^b` is `r[(a, b)]` when false, `r[(b, a)]` when true.
    pub transpose: bool,
}

impl AModelWeights {
    pub fn new(r: RMatrixSeries, sqrt_delta: Vec<C64>, leaf_basis: BTreeMap<(usize, usize), Vec<(LeafKey, C64)>>) -> Self {
        AModelWeights { r, sqrt_delta, leaf_basis, transpose: false }
    }

    /// Weights for a model: Laplace R-matrix, ledger `sqrt(Delta)`, and the
    /// principal-part decomposition of `W_i^b` for heights up to `max_height`
    /// (edges need R through `z^{2 max_height + 1}`).
    pub fn from_spectral(model: &Model, data: &SpectralData, max_height: usize) -> Result<Self> {
        let r = bmodel_r_laplace(model, 2 * max_height + 2)?.r;
        let sqrt_delta = (0..model.size()).map(|a| model.crit.sqrt_delta(a, SqrtDelta::Ledger)).collect();
        let mut leaf_basis = BTreeMap::new();
        for b in 0..model.size() {
            for i in 0..=max_height {
                leaf_basis.insert((b, i), data.w_in_dxi(b, i)?.into_iter().collect());
            }
        }
        Ok(Self::new(r, sqrt_delta, leaf_basis))
    }

    /// `[z^k] R_a^b(-z)`.
    pub fn r_minus(&self, a: usize, b: usize, k: usize) -> C64 {
        let Some(m) = self.r.coeffs.get(k) else { return C64::new(0.0, 0.0) };
        let v = if self.transpose { m[(b, a)] } else { m[(a, b)] };
        v * parity(k as u32)
    }

    /// `E_{k,l}^{a,b} = [z^k w^l] (delta_{ab} - sum_c R_c^a(-z) R_c^b(-w)) / (z + w)`.
    pub fn edge_factor(&self, a: usize, b: usize, k: usize, l: usize) -> C64 {
        let num = |i: usize, j: usize| -> C64 {
            let mut v: C64 = (0..self.sqrt_delta.len()).map(|c| self.r_minus(c, a, i) * self.r_minus(c, b, j)).sum();
            v = -v;
            if i == 0 && j == 0 && a == b {
                v += 1.0;
            }
            v
        };
        // q_{k,l} = sum_j (-1)^j n_{k+1+j, l-j}
        (0..=l).map(|j| num(k + 1 + j, l - j) * parity(j as u32)).sum()
    }
}

impl GraphWeights for AModelWeights {
    fn vertex_prefactor(&self, alpha: usize, g: u32, val: usize) -> C64 {
        self.sqrt_delta[alpha].powi(2 * g as i32 - 2 + val as i32)
    }
    fn edge(&self, a: usize, b: usize, k: u32, l: u32) -> C64 {
        self.edge_factor(a, b, k as usize, l as usize)
    }
    fn dilaton(&self, alpha: usize, k: u32) -> C64 {
        -(0..self.sqrt_delta.len()).map(|c| self.r_minus(c, alpha, k as usize - 1) / self.sqrt_delta[c]).sum::<C64>()
    }
    fn leaf(&self, _slot: usize, alpha: usize, k: u32) -> Vec<(LeafKey, C64)> {
        let mut acc: BTreeMap<LeafKey, C64> = BTreeMap::new();
        let s = sqrt_minus_two().inv();
        for i in 0..=k as usize {
            for b in 0..self.sqrt_delta.len() {
                let c = self.r_minus(b, alpha, k as usize - i) * s;
                for (key, v) in &self.leaf_basis[&(b, i)] {
                    *acc.entry(*key).or_default() += c * v;
                }
            }
        }
        acc.into_iter().collect()
    }
}

/// `(-1)^{k+l+1} Bcheck_{k,l}`, the edge factor of the B-model sum.
pub fn signed_b_check(data: &SpectralData, a: usize, b: usize, k: usize, l: usize) -> C64 {
    -data.b_check(a, b, k, l) * parity((k + l) as u32)
}

/// Outcome of comparing the two graph sums with `omega_{g,N}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelComparison {
    pub g: u32,
    pub n: usize,
    /// `max |F_A - (-1)^{g-1+N} omega|` on the `dxi` basis.
    pub residual: f64,
    pub scale: f64,
}

/// A-model graph sum against `(-1)^{g-1+N}` times the EO output.
pub fn compare_models(model: &Model, eo: &mut EoSolver, g: u32, n: usize) -> Result<ModelComparison> {
    let omega = eo.eo_recursion(g, n)?;
    let a = AModelWeights::from_spectral(model, &eo.data, 3 * g as usize + n)?;
    let f = graph_sum(g, n, model.size(), &a)?;
    let sign = if (g as usize + n) % 2 == 0 { -1.0 } else { 1.0 };
    let mut signed = omega.clone();
    for v in signed.entries.values_mut() {
        *v *= sign;
    }
    Ok(ModelComparison { g, n, residual: f.max_diff(&signed), scale: omega.max_abs() })
}

/// Largest deviation in each of the four weight identities, heights `<= kmax`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightIdentities {
    /// `sqrt(Delta/2) h_1 = 1`.
    pub vertex: f64,
    /// `E_{k,l} = Bcheck'_{k,l}`.
    pub edge: f64,
    /// `dxi_k = W_k - sum Bcheck'_{k-1-i,0} W_i`.
    pub leaf: f64,
    /// `L^1_k = (-1)^k hcheck_k / sqrt 2`.
    pub dilaton: f64,
    /// `[z^{j+1}] R_b^a(-z) = -Bcheck'^{ab}_{j,0}`.
    pub r_first_column: f64,
}

impl WeightIdentities {
    pub fn max(&self) -> f64 {
        [self.vertex, self.edge, self.leaf, self.dilaton, self.r_first_column].into_iter().fold(0.0, f64::max)
    }
}

/// `data` needs Bergman coefficients through total degree `4 kmax`.
pub fn weight_identities(model: &Model, data: &SpectralData, kmax: usize) -> Result<WeightIdentities> {
    let a = AModelWeights::from_spectral(model, data, kmax)?;
    let n = model.size();
    let mut out = WeightIdentities { vertex: 0.0, edge: 0.0, leaf: 0.0, dilaton: 0.0, r_first_column: 0.0 };
    let w: Vec<Vec<BTreeMap<LeafKey, C64>>> = (0..n).map(|b| (0..=kmax).map(|i| data.w_in_dxi(b, i)).collect::<Result<_>>()).collect::<Result<_>>()?;
    for x in 0..n {
        let v = (model.crit.sqrt_delta(x, SqrtDelta::Ledger) / 2f64.sqrt() * data.charts[x].h(1) - 1.0).norm();
        out.vertex = out.vertex.max(v);
        for y in 0..n {
            for k in 0..=kmax {
                for l in 0..=kmax {
                    let d = (a.edge_factor(x, y, k, l) - signed_b_check(data, x, y, k, l)).norm();
                    out.edge = out.edge.max(d);
                }
                let d = (a.r_minus(y, x, k + 1) + signed_b_check(data, x, y, k, 0)).norm();
                out.r_first_column = out.r_first_column.max(d);
            }
        }
        for k in 2..=kmax.max(2) {
            let h = data.charts[x].h_check(k);
            let d = (a.dilaton(x, k as u32) - h * (parity(k as u32) / 2f64.sqrt())).norm();
            out.dilaton = out.dilaton.max(d);
        }
        for k in 0..=kmax {
            let mut acc = w[x][k].clone();
            for i in 0..k {
                for (b, wb) in w.iter().enumerate() {
                    let cb = signed_b_check(data, x, b, k - 1 - i, 0);
                    for (key, v) in &wb[i] {
                        *acc.entry(*key).or_default() -= cb * v;
                    }
                }
            }
            *acc.entry((x, k)).or_default() -= 1.0;
            out.leaf = out.leaf.max(acc.values().map(|v| v.norm()).fold(0.0, f64::max));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Model, ModelParams};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn model21() -> Model {
        let mut a = ModelParams::simple(2, 1);
        a.w_pos = vec![c(0.3, 0.1), c(-0.2, 0.05)];
        a.w_neg = vec![c(0.1, -0.3)];
        a.q_pos = vec![c(0.4, 0.2)];
        a.q_neg = vec![c(1.1, 0.3)];
        Model::new(a).unwrap()
    }

    /// Labelled stable graphs on `v` numbered vertices, by plain exhaustion.
    fn labelled_count(g: u32, n: usize, v: usize) -> (u64, Vec<(Vec<u32>, Vec<usize>, Vec<Vec<u32>>)>) {
        let pairs: Vec<(usize, usize)> = (0..v).flat_map(|i| (i..v).map(move |j| (i, j))).collect();
        let mut found = Vec::new();
        let genera: Vec<Vec<u32>> = (0..(g as usize + 1).pow(v as u32))
            .map(|mut code| {
                (0..v)
                    .map(|_| {
                        let x = (code % (g as usize + 1)) as u32;
                        code /= g as usize + 1;
                        x
                    })
                    .collect::<Vec<u32>>()
            })
            .filter(|gv| gv.iter().sum::<u32>() <= g)
            .collect();
        for gv in genera {
            let e = g as i64 - gv.iter().map(|&x| x as i64).sum::<i64>() + v as i64 - 1;
            // multisets of e pairs
            let mut stack = vec![(0usize, e, vec![vec![0u32; v]; v])];
            while let Some((from, left, adj)) = stack.pop() {
                if left == 0 {
                    if !connected(&adj) {
                        continue;
                    }
                    for code in 0..v.pow(n as u32) {
                        let mut cc = code;
                        let leaves: Vec<usize> = (0..n)
                            .map(|_| {
                                let x = cc % v;
                                cc /= v;
                                x
                            })
                            .collect();
                        let sk = StableGraph { genus: gv.clone(), adj: adj.clone(), leaves: leaves.clone(), aut: 0 };
                        if (0..v).all(|i| 2 * gv[i] as i64 - 2 + sk.valence(i) as i64 > 0) {
                            found.push((gv.clone(), leaves, adj.clone()));
                        }
                    }
                    continue;
                }
                for (pi, &(i, j)) in pairs.iter().enumerate().skip(from) {
                    let mut a2 = adj.clone();
                    a2[i][j] += 1;
                    if i != j {
                        a2[j][i] += 1;
                    }
                    stack.push((pi, left - 1, a2));
                }
            }
        }
        (found.len() as u64, found)
    }

    fn edge_part(adj: &[Vec<u32>]) -> u64 {
        let mut p = 1u64;
        for i in 0..adj.len() {
            p *= factorial(adj[i][i]) << adj[i][i];
            for j in (i + 1)..adj.len() {
                p *= factorial(adj[i][j]);
            }
        }
        p
    }

    #[test]
    fn small_cases() {
        let g03 = stable_graphs(0, 3).unwrap();
        assert_eq!(g03.len(), 1);
        assert_eq!(enumerate(0, 3, 3).unwrap().len(), 3);
        let g11 = stable_graphs(1, 1).unwrap();
        assert_eq!(g11.len(), 2);
        let lp = g11.iter().find(|s| s.vertex_count() == 1 && s.adj[0][0] == 1).unwrap();
        assert_eq!(lp.aut, 2);
        assert_eq!(lp.genus, vec![0]);
        assert_eq!(lp.total_genus(), 1);
        assert!(matches!(stable_graphs(0, 2), Err(Error::Unstable { .. })));
        assert!(matches!(stable_graphs(1, 0), Err(Error::Unstable { .. })));
        // (0,4): the single vertex and three ways to split the legs over an edge.
        assert_eq!(stable_graphs(0, 4).unwrap().len(), 4);
    }

    #[test]
    fn mass_formula_against_exhaustive_labelling() {
        for g in 0..=2u32 {
            for n in 0..=3usize {
                if 2 * g as i64 - 2 + n as i64 <= 0 {
                    continue;
                }
                let graphs = stable_graphs(g, n).unwrap();
                for v in 1..=(2 * g as usize + n - 2).max(1) {
                    let (count, _) = labelled_count(g, n, v);
                    // Every class on v vertices has v!/|Aut_V| labellings.
                    let predicted: u64 = graphs
                        .iter()
                        .filter(|s| s.vertex_count() == v)
                        .map(|s| factorial(v as u32) / (s.aut / edge_part(&s.adj)))
                        .sum();
                    assert_eq!(count, predicted, "(g,n,v) = ({g},{n},{v})");
                }
                for s in &graphs {
                    assert_eq!(s.total_genus(), g);
                }
            }
        }
    }

    #[test]
    fn class_sum_matches_skeleton_sum() {
        let m = model21();
        let sd = SpectralData::new(&m, 20).unwrap();
        let w = BModelWeights::new(&sd);
        for (g, n) in [(0u32, 3usize), (1, 1), (0, 4), (1, 2), (2, 1)] {
            let a = graph_sum(g, n, m.size(), &w).unwrap();
            let b = graph_sum_by_classes(g, n, m.size(), &w).unwrap();
            assert!(a.max_diff(&b) < 1e-12 * a.max_abs().max(1.0), "({g},{n})");
        }
    }

    #[test]
    fn labeled_graphs_respect_dimension_and_heights() {
        for lg in enumerate(1, 2, 2).unwrap() {
            for (v, hs) in lg.vertex_heights().iter().enumerate() {
                assert_eq!(hs.iter().sum::<u32>() as i64, vertex_dim(lg.genus[v], hs.len()));
            }
            assert!(lg.dilatons.iter().all(|d| d.1 >= 2));
            assert_eq!(lg.total_genus(), 1);
        }
    }

    #[test]
    fn amodel_sum_matches_recursion() {
        let m = model21();
        let mut eo = EoSolver::new(&m, 2, 1).unwrap();
        for (g, n) in [(0u32, 3usize), (1, 1), (0, 4), (1, 2), (2, 1)] {
            let c = compare_models(&m, &mut eo, g, n).unwrap();
            assert!(c.residual < 1e-10 * c.scale.max(1.0), "({g},{n}) {}", c.residual);
        }
    }

    #[test]
    fn transposed_r_breaks_amodel_sum() {
        let m = model21();
        let mut eo = EoSolver::new(&m, 1, 2).unwrap();
        let omega = eo.eo_recursion(1, 2).unwrap();
        let mut a = AModelWeights::from_spectral(&m, &eo.data, 4).unwrap();
        a.transpose = true;
        let f = graph_sum(1, 2, m.size(), &a).unwrap();
        assert!(f.max_diff(&omega) > 1e-3 * omega.max_abs());
    }

    #[test]
    fn weight_identities_hold() {
        let m = model21();
        let data = SpectralData::new(&m, 12).unwrap();
        let w = weight_identities(&m, &data, 3).unwrap();
        assert!(w.max() < 1e-10, "{w:?}");
    }

    #[test]
    fn edge_factor_vanishes_for_trivial_r() {
        let r = RMatrixSeries::identity(3, 6);
        let a = AModelWeights::new(r, vec![C64::new(1.0, 0.0); 3], BTreeMap::new());
        for k in 0..3 {
            for l in 0..3 {
                assert_eq!(a.edge_factor(0, 1, k, l), C64::new(0.0, 0.0));
                assert_eq!(a.edge_factor(1, 1, k, l), C64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn edge_factor_is_symmetric() {
        let m = model21();
        let data = SpectralData::new(&m, 8).unwrap();
        let a = AModelWeights::from_spectral(&m, &data, 3).unwrap();
        for x in 0..3 {
            for y in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        assert!((a.edge_factor(x, y, k, l) - a.edge_factor(y, x, l, k)).norm() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn bmodel_sum_equals_recursion() {
        let m = model21();
        let mut eo = EoSolver::new(&m, 2, 1).unwrap();
        for (g, n) in [(0u32, 3usize), (1, 1), (0, 4), (1, 2), (2, 1)] {
            let e = eo.eo_recursion(g, n).unwrap();
            let b = graph_sum(g, n, m.size(), &BModelWeights::new(&eo.data)).unwrap();
            assert!(e.max_diff(&b) < 1e-10 * e.max_abs(), "({g},{n}) {}", e.max_diff(&b));
        }
        // Dropping the overall sign breaks the comparison when g - 1 + N is odd.
        let e = eo.eo_recursion(1, 1).unwrap();
        let w = BModelWeights { data: &eo.data, global_sign: false };
        let b = graph_sum(1, 1, m.size(), &w).unwrap();
        assert!(e.max_diff(&b) > 0.5 * e.max_abs());
    }
}
