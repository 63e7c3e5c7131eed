//! Network substrate: topology, catalog, object placement, churn and load.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ObjectId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct KeywordId(pub u32);

/// Static resources of a node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeProfile {
    pub upload_bandwidth: f64,
    pub download_bandwidth: f64,
    pub storage_capacity: u32,
}

impl NodeProfile {
    pub fn draw<R: Rng>(bandwidths: &[f64], storages: &[u32], rng: &mut R) -> Self {
        Self {
            upload_bandwidth: *bandwidths.choose(rng).expect("non-empty bandwidth list"),
            download_bandwidth: *bandwidths.choose(rng).expect("non-empty bandwidth list"),
            storage_capacity: *storages.choose(rng).expect("non-empty storage list"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub id: ObjectId,
    pub name: String,
    /// Sorted, deduplicated, never empty.
    pub keywords: Vec<KeywordId>,
    pub size: u32,
}

impl ObjectRecord {
    pub fn matches(&self, query: &[KeywordId]) -> bool {
        query.iter().any(|k| self.keywords.binary_search(k).is_ok())
    }
}

/// Undirected simple graph as sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    adjacency: Vec<Vec<NodeId>>,
    pub target_avg_degree: f64,
}

impl Topology {
    pub fn from_edges(node_count: usize, edges: &[(u32, u32)]) -> Self {
        let mut adjacency = vec![Vec::new(); node_count];
        for &(a, b) in edges {
            assert_ne!(a, b, "self-loop {a}");
            adjacency[a as usize].push(NodeId(b));
            adjacency[b as usize].push(NodeId(a));
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        let mut topo = Self { adjacency, target_avg_degree: 0.0 };
        topo.target_avg_degree = topo.average_degree();
        topo
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.adjacency[node.index()]
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.adjacency[node.index()].len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn average_degree(&self) -> f64 {
        if self.adjacency.is_empty() {
            return 0.0;
        }
        2.0 * self.edge_count() as f64 / self.node_count() as f64
    }

    pub fn are_adjacent(&self, a: NodeId, b: NodeId) -> bool {
        self.adjacency[a.index()].binary_search(&b).is_ok()
    }

    fn add_edge(&mut self, a: NodeId, b: NodeId) {
        for (x, y) in [(a, b), (b, a)] {
            let list = &mut self.adjacency[x.index()];
            if let Err(pos) = list.binary_search(&y) {
                list.insert(pos, y);
            }
        }
    }
}

/// Erdős–Rényi G(n, p) with p = avg_degree / (n - 1); isolated nodes are then
/// attached to one random partner so every node has at least one link.
pub fn generate_network<R: Rng>(node_count: usize, avg_degree: f64, rng: &mut R) -> Result<Topology> {
    if node_count < 2 {
        return Err(config_err("network needs at least 2 nodes"));
    }
    let max_degree = (node_count - 1) as f64;
    if avg_degree < 1.0 || avg_degree > max_degree || (avg_degree == max_degree && node_count > 2) {
        return Err(config_err(format!(
            "average degree {avg_degree} is not achievable with {node_count} nodes"
        )));
    }
    let p = avg_degree / max_degree;
    let mut topo = Topology { adjacency: vec![Vec::new(); node_count], target_avg_degree: avg_degree };

    if p >= 1.0 {
        for a in 0..node_count as u32 {
            for b in a + 1..node_count as u32 {
                topo.add_edge(NodeId(a), NodeId(b));
            }
        }
        return Ok(topo);
    }

    // Geometric skipping over the lower-triangular pair sequence.
    let log_q = (1.0 - p).ln();
    let n = node_count as i64;
    let (mut v, mut w) = (1_i64, -1_i64);
    while v < n {
        let r: f64 = rng.gen();
        w += 1 + ((1.0 - r).ln() / log_q).floor() as i64;
        while w >= v && v < n {
            w -= v;
            v += 1;
        }
        if v < n {
            topo.adjacency[v as usize].push(NodeId(w as u32));
            topo.adjacency[w as usize].push(NodeId(v as u32));
        }
    }
    for list in &mut topo.adjacency {
        list.sort_unstable();
    }

    for node in 0..node_count {
        if topo.adjacency[node].is_empty() {
            let mut partner = rng.gen_range(0..node_count - 1);
            if partner >= node {
                partner += 1;
            }
            topo.add_edge(NodeId(node as u32), NodeId(partner as u32));
        }
    }
    Ok(topo)
}

/// Draws the object catalog. Keyword frequency across objects follows a Zipf
/// law over the pool with the given exponent (0 gives uniform draws).
pub fn build_catalog<R: Rng>(
    object_count: usize,
    keyword_pool: usize,
    max_keywords: usize,
    keyword_zipf_exponent: f64,
    object_size: u32,
    rng: &mut R,
) -> Result<Vec<ObjectRecord>> {
    if object_count == 0 {
        return Err(config_err("catalog needs at least one object"));
    }
    if keyword_pool < object_count {
        return Err(config_err("keyword pool must be at least as large as the catalog"));
    }
    let max_keywords = max_keywords.clamp(1, keyword_pool);
    let zipf = (keyword_zipf_exponent > 0.0)
        .then(|| Zipf::new(keyword_pool as u64, keyword_zipf_exponent).expect("valid zipf parameters"));

    let mut catalog = Vec::with_capacity(object_count);
    for idx in 0..object_count {
        let wanted = rng.gen_range(1..=max_keywords);
        let mut keywords = Vec::with_capacity(wanted);
        while keywords.len() < wanted {
            let k = match &zipf {
                Some(z) => z.sample(rng) as u32 - 1,
                None => rng.gen_range(0..keyword_pool as u32),
            };
            let k = KeywordId(k);
            if !keywords.contains(&k) {
                keywords.push(k);
            }
        }
        keywords.sort_unstable();
        catalog.push(ObjectRecord {
            id: ObjectId(idx as u32),
            name: format!("object-{idx:05}"),
            keywords,
            size: object_size,
        });
    }
    Ok(catalog)
}

/// How a stored copy came to be on its node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Initial,
    Replicated,
    PathReplicated,
    Downloaded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredObject {
    pub id: ObjectId,
    pub size: u32,
    /// Age origin: tick at which this copy entered the shared folder.
    pub inserted_at: u64,
    pub provenance: Provenance,
    pub keywords: Vec<KeywordId>,
}

/// A node's shared folder with a keyword index for local matching.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SharedStore {
    capacity: u32,
    used: u32,
    items: BTreeMap<ObjectId, StoredObject>,
    #[serde(skip)]
    index: HashMap<KeywordId, Vec<ObjectId>>,
}

impl SharedStore {
    pub fn new(capacity: u32) -> Self {
        Self { capacity, ..Self::default() }
    }

    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    pub fn used(&self) -> u32 {
        self.used
    }

    pub fn available(&self) -> u32 {
        self.capacity - self.used
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn contains(&self, id: ObjectId) -> bool {
        self.items.contains_key(&id)
    }

    pub fn get(&self, id: ObjectId) -> Option<&StoredObject> {
        self.items.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &StoredObject> {
        self.items.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = ObjectId> + '_ {
        self.items.keys().copied()
    }

    pub fn fits(&self, size: u32) -> bool {
        size <= self.available()
    }

    /// Inserts a new copy. Fails without touching the store if the object is
    /// already present (never overwrites) or does not fit.
    pub fn insert(&mut self, object: &ObjectRecord, inserted_at: u64, provenance: Provenance) -> Result<(), InsertError> {
        if self.items.contains_key(&object.id) {
            return Err(InsertError::AlreadyPresent);
        }
        if !self.fits(object.size) {
            return Err(InsertError::NoSpace);
        }
        self.used += object.size;
        self.items.insert(
            object.id,
            StoredObject { id: object.id, size: object.size, inserted_at, provenance, keywords: object.keywords.clone() },
        );
        for k in &object.keywords {
            self.index.entry(*k).or_default().push(object.id);
        }
        Ok(())
    }

    pub fn remove(&mut self, id: ObjectId) -> Option<StoredObject> {
        let stored = self.items.remove(&id)?;
        self.used -= stored.size;
        for k in &stored.keywords {
            if let Some(list) = self.index.get_mut(k) {
                list.retain(|x| *x != id);
                if list.is_empty() {
                    self.index.remove(k);
                }
            }
        }
        Some(stored)
    }

    /// Objects whose keyword set intersects the query, in id order.
    pub fn matching(&self, query: &[KeywordId]) -> Vec<ObjectId> {
        let mut out: Vec<ObjectId> = Vec::new();
        for k in query {
            if let Some(ids) = self.index.get(k) {
                out.extend_from_slice(ids);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn has_match(&self, query: &[KeywordId]) -> bool {
        query.iter().any(|k| self.index.contains_key(k))
    }

    /// Rebuilds the keyword index, e.g. after deserialization.
    pub fn reindex(&mut self) {
        self.index.clear();
        for obj in self.items.values() {
            for k in &obj.keywords {
                self.index.entry(*k).or_default().push(obj.id);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertError {
    AlreadyPresent,
    NoSpace,
}

/// Places `copies_per_object` (inclusive range) copies of every object on
/// distinct random nodes with free capacity.
pub fn place_objects<R: Rng>(
    catalog: &[ObjectRecord],
    capacities: &[u32],
    copies_per_object: [usize; 2],
    rng: &mut R,
) -> Result<Vec<SharedStore>> {
    let [lo, hi] = copies_per_object;
    if lo == 0 || lo > hi {
        return Err(config_err("copies_per_object must satisfy 1 <= lo <= hi"));
    }
    let mut stores: Vec<SharedStore> = capacities.iter().map(|c| SharedStore::new(*c)).collect();
    let total_capacity: u64 = capacities.iter().map(|c| *c as u64).sum();
    let min_needed: u64 = catalog.iter().map(|o| o.size as u64 * lo as u64).sum();
    if min_needed > total_capacity {
        return Err(config_err(format!(
            "aggregate storage {total_capacity} cannot hold {min_needed} units of initial copies"
        )));
    }

    for object in catalog {
        let copies = rng.gen_range(lo..=hi);
        let mut open: Vec<usize> = (0..stores.len()).filter(|i| stores[*i].fits(object.size)).collect();
        if open.is_empty() {
            return Err(config_err(format!("no node has room for {}", object.name)));
        }
        let chosen: Vec<usize> = {
            open.shuffle(rng);
            open.truncate(copies.min(open.len()));
            open
        };
        for i in chosen {
            stores[i]
                .insert(object, 0, Provenance::Initial)
                .expect("node was checked for room and is distinct");
        }
    }
    Ok(stores)
}

/// Flips `floor(fraction * |down|)` random down nodes up and the same number
/// of random up nodes down. Returns (came_up, went_down).
pub fn apply_churn<R: Rng>(up: &mut [bool], fraction: f64, rng: &mut R) -> (Vec<NodeId>, Vec<NodeId>) {
    let down: Vec<usize> = (0..up.len()).filter(|i| !up[*i]).collect();
    let live: Vec<usize> = (0..up.len()).filter(|i| up[*i]).collect();
    let flips = ((fraction * down.len() as f64).floor() as usize).min(live.len());
    if flips == 0 {
        return (Vec::new(), Vec::new());
    }
    let mut came_up: Vec<NodeId> = down.choose_multiple(rng, flips).map(|i| NodeId(*i as u32)).collect();
    let mut went_down: Vec<NodeId> = live.choose_multiple(rng, flips).map(|i| NodeId(*i as u32)).collect();
    came_up.sort_unstable();
    went_down.sort_unstable();
    for n in &came_up {
        up[n.index()] = true;
    }
    for n in &went_down {
        up[n.index()] = false;
    }
    (came_up, went_down)
}

/// Abstract CPU proxy: queries processed in the current tick.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadCounter {
    tick: u64,
    processed: u32,
}

impl LoadCounter {
    pub fn record(&mut self, now: u64) {
        self.roll(now);
        self.processed += 1;
    }

    pub fn processed(&mut self, now: u64) -> u32 {
        self.roll(now);
        self.processed
    }

    pub fn fraction(&mut self, now: u64, capacity_per_tick: u32) -> f64 {
        tick_load(self.processed(now), capacity_per_tick)
    }

    fn roll(&mut self, now: u64) {
        if now != self.tick {
            self.tick = now;
            self.processed = 0;
        }
    }
}

pub fn tick_load(processed: u32, capacity_per_tick: u32) -> f64 {
    debug_assert!(capacity_per_tick > 0);
    processed as f64 / capacity_per_tick as f64
}

pub(crate) fn oversized(size: u32, capacity: u32) -> SimError {
    SimError::Oversized { size, capacity }
}
