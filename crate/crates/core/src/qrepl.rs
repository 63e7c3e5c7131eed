//! Autonomous replication driven by object popularity and a per-node
//! Q-table of candidate hosts, plus the path-replication baseline.
//!
//! A node tracks how often incoming requests target each object it holds.
//! Objects whose popularity crosses `p_th` are pushed to the hosts in its
//! replication Q-table that score at or above the table mean. Each recipient
//! answers with its degree, bandwidth and free storage; that signal becomes a
//! reward that moves the recipient's Q-value. Hosts that are down are
//! punished, hosts that already hold the object are left alone.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::QReplConfig;
use crate::error::Result;
use crate::model::{oversized, InsertError, NodeId, ObjectId, ObjectRecord, Provenance, SharedStore, Topology};
use crate::network::Network;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopularityEntry {
    pub object: ObjectId,
    pub popularity: f64,
    /// Set once this node has pushed the object out at least once.
    pub replicated: bool,
    /// 1 = most popular on this node.
    pub rank: u32,
}

/// Node-local popularity table with the request counters of the current
/// update window.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PopularityTable {
    entries: BTreeMap<ObjectId, PopularityEntry>,
    window_total: u32,
    window_hits: BTreeMap<ObjectId, u32>,
}

impl PopularityTable {
    /// Starts tracking a newly stored object at popularity zero.
    pub fn track(&mut self, object: ObjectId) {
        let rank = self.entries.len() as u32 + 1;
        self.entries
            .entry(object)
            .or_insert(PopularityEntry { object, popularity: 0.0, replicated: false, rank });
    }

    pub fn forget(&mut self, object: ObjectId) {
        self.entries.remove(&object);
        self.window_hits.remove(&object);
    }

    pub fn get(&self, object: ObjectId) -> Option<&PopularityEntry> {
        self.entries.get(&object)
    }

    pub fn popularity(&self, object: ObjectId) -> f64 {
        self.entries.get(&object).map_or(0.0, |e| e.popularity)
    }

    pub fn mark_replicated(&mut self, object: ObjectId) {
        if let Some(e) = self.entries.get_mut(&object) {
            e.replicated = true;
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = &PopularityEntry> {
        self.entries.values()
    }

    /// Counts one incoming request and the held objects it matched. Every
    /// `every` requests the whole table is refreshed; returns true then.
    pub fn record_request(&mut self, matched: &[ObjectId], every: u32, eta: f64) -> bool {
        self.window_total += 1;
        for id in matched {
            if self.entries.contains_key(id) {
                *self.window_hits.entry(*id).or_default() += 1;
            }
        }
        if self.window_total < every {
            return false;
        }
        let total = self.window_total;
        for entry in self.entries.values_mut() {
            let hits = self.window_hits.get(&entry.object).copied().unwrap_or(0);
            entry.popularity = update_popularity(entry.popularity, hits, total, eta);
        }
        self.rerank();
        self.window_total = 0;
        self.window_hits.clear();
        true
    }

    fn rerank(&mut self) {
        let mut order: Vec<(f64, ObjectId)> = self.entries.values().map(|e| (e.popularity, e.object)).collect();
        order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for (rank, (_, id)) in order.into_iter().enumerate() {
            self.entries.get_mut(&id).expect("present").rank = rank as u32 + 1;
        }
    }
}

/// `P_f + eta * (r_q / n_q) * 100`, unchanged when nothing was requested.
pub fn update_popularity(p_f: f64, r_q: u32, n_q: u32, eta: f64) -> f64 {
    if r_q == 0 || n_q == 0 {
        return p_f;
    }
    p_f + eta * (r_q as f64 / n_q as f64) * 100.0
}

/// Objects at or above the popularity threshold, most popular first.
pub fn select_replication_candidates(table: &PopularityTable, p_th: f64) -> Vec<ObjectId> {
    let mut hot: Vec<&PopularityEntry> = table.entries().filter(|e| e.popularity >= p_th).collect();
    hot.sort_by(|a, b| b.popularity.total_cmp(&a.popularity).then(a.object.cmp(&b.object)));
    hot.into_iter().map(|e| e.object).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplQEntry {
    pub node: NodeId,
    pub q_value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplQTable {
    pub entries: Vec<ReplQEntry>,
}

impl ReplQTable {
    pub fn get(&self, node: NodeId) -> Option<f64> {
        self.entries.iter().find(|e| e.node == node).map(|e| e.q_value)
    }

    pub fn mean(&self) -> Option<f64> {
        if self.entries.is_empty() {
            None
        } else {
            Some(self.entries.iter().map(|e| e.q_value).sum::<f64>() / self.entries.len() as f64)
        }
    }

    fn set(&mut self, node: NodeId, q: f64) {
        if let Some(e) = self.entries.iter_mut().find(|e| e.node == node) {
            e.q_value = q;
        }
    }
}

/// Object names reserved on a node by in-flight replications.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplicationList {
    /// Object -> tick at which the reservation lapses.
    reserved: BTreeMap<ObjectId, u64>,
}

impl ReplicationList {
    pub fn contains(&self, object: ObjectId, now: u64) -> bool {
        self.reserved.get(&object).is_some_and(|exp| *exp > now)
    }

    /// Check-and-insert in one step; false if already reserved.
    pub fn try_reserve(&mut self, object: ObjectId, now: u64, timeout: u64) -> bool {
        if self.contains(object, now) {
            return false;
        }
        self.reserved.insert(object, now + timeout.max(1));
        true
    }

    pub fn release(&mut self, object: ObjectId) {
        self.reserved.remove(&object);
    }

    pub fn purge_expired(&mut self, now: u64) {
        self.reserved.retain(|_, exp| *exp > now);
    }

    pub fn is_empty(&self) -> bool {
        self.reserved.is_empty()
    }

    pub fn len(&self) -> usize {
        self.reserved.len()
    }
}

pub fn init_repl_q(bandwidth: f64, available_storage: f64, cfg: &QReplConfig) -> f64 {
    (bandwidth / cfg.b_min + available_storage / cfg.s_min) * 100.0
}

/// Hello walk: one walker per `first_hops` entry, each then forwarded to a
/// single not-yet-visited neighbor until `ttl` hops are used. Down nodes
/// neither answer nor forward. Returns responders in discovery order.
pub fn hello_walk<R: Rng>(
    topology: &Topology,
    source: NodeId,
    first_hops: &[NodeId],
    ttl: u32,
    is_up: impl Fn(NodeId) -> bool,
    rng: &mut R,
) -> Vec<NodeId> {
    let mut visited = vec![source];
    let mut responders = Vec::new();
    for &first in first_hops {
        if ttl == 0 || visited.contains(&first) || !is_up(first) {
            continue;
        }
        visited.push(first);
        responders.push(first);
        let mut at = first;
        for _ in 1..ttl {
            let onward: Vec<NodeId> =
                topology.neighbors(at).iter().copied().filter(|n| !visited.contains(n) && is_up(*n)).collect();
            let Some(&next) = onward.choose(rng) else { break };
            visited.push(next);
            responders.push(next);
            at = next;
        }
    }
    responders
}

/// Builds a node's replication Q-table: its directly linked live neighbors
/// plus everything a `hello_walkers`-walker hello walk reaches.
pub fn build_repl_qtable<R: Rng>(net: &Network, source: NodeId, cfg: &QReplConfig, rng: &mut R) -> Option<ReplQTable> {
    if !net.is_up(source) {
        return None;
    }
    let live: Vec<NodeId> = net.topology.neighbors(source).iter().copied().filter(|n| net.is_up(*n)).collect();
    let first: Vec<NodeId> = live.choose_multiple(rng, cfg.hello_walkers).copied().collect();
    let walked = hello_walk(&net.topology, source, &first, cfg.hello_ttl, |n| net.is_up(n), rng);
    Some(qtable_for(net, live.into_iter().chain(walked), cfg))
}

/// Q-table initialised from each responder's advertised bandwidth and storage.
pub fn qtable_for(net: &Network, responders: impl IntoIterator<Item = NodeId>, cfg: &QReplConfig) -> ReplQTable {
    let mut entries: Vec<ReplQEntry> = Vec::new();
    for node in responders {
        if entries.iter().any(|e| e.node == node) {
            continue;
        }
        let peer = net.node(node);
        let q = init_repl_q(peer.profile.upload_bandwidth, peer.store.available() as f64, cfg);
        entries.push(ReplQEntry { node, q_value: q });
    }
    ReplQTable { entries }
}

/// `(d/(d_min*w1) + b/(b_min*w2) + s/(s_min*w3)) * 100`.
pub fn compute_repl_reward(degree: f64, bandwidth: f64, available_storage: f64, cfg: &QReplConfig) -> f64 {
    (degree / (cfg.d_min * cfg.wr1) + bandwidth / (cfg.b_min * cfg.wr2) + available_storage / (cfg.s_min * cfg.wr3))
        * 100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ReplOutcome {
    Replicated(f64),
    HasCopy,
    Down,
}

pub fn update_repl_q(q: f64, outcome: ReplOutcome, alpha: f64) -> f64 {
    match outcome {
        ReplOutcome::Replicated(reward) => q + alpha * (reward - q),
        ReplOutcome::HasCopy => q,
        ReplOutcome::Down => q * (1.0 - alpha),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TargetSelection {
    pub avg_q: f64,
    /// Every table entry with Q >= AvgQ, in table order.
    pub selected: Vec<NodeId>,
    /// Selected, up, lacking the object, and now reserved.
    pub chosen: Vec<NodeId>,
    pub down: Vec<NodeId>,
    pub has_copy: Vec<NodeId>,
    pub already_reserved: Vec<NodeId>,
}

/// Picks replica hosts for `object` and reserves it on each of them.
pub fn select_target_nodes(
    net: &mut Network,
    table: &ReplQTable,
    object: ObjectId,
    reservation_timeout: u64,
) -> Option<TargetSelection> {
    let avg_q = table.mean()?;
    let now = net.now;
    let mut sel = TargetSelection { avg_q, ..Default::default() };
    for e in table.entries.iter().filter(|e| e.q_value >= avg_q) {
        sel.selected.push(e.node);
        let peer = net.node_mut(e.node);
        if !peer.up {
            sel.down.push(e.node);
        } else if peer.store.contains(object) {
            sel.has_copy.push(e.node);
        } else if !peer.reservations.try_reserve(object, now, reservation_timeout) {
            sel.already_reserved.push(e.node);
        } else {
            sel.chosen.push(e.node);
        }
    }
    Some(sel)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub object: Option<ObjectId>,
    pub source: Option<NodeId>,
    pub avg_q: f64,
    pub targets: Vec<NodeId>,
    pub recipients: Vec<NodeId>,
    pub rewards: Vec<(NodeId, f64)>,
    pub down: Vec<NodeId>,
    /// Reserved targets that could not make room for the copy.
    pub no_space: Vec<NodeId>,
    pub evicted: Vec<(NodeId, ObjectId)>,
    /// Inserts refused because the target already held the object. Always
    /// zero unless the reservation logic is broken.
    pub overwrite_attempts: u32,
}

/// Runs one replication round for `object` held by `source`, updating the
/// source's replication Q-table in place.
pub fn replicate_object(net: &mut Network, source: NodeId, object: ObjectId, cfg: &QReplConfig, reservation_timeout: u64) -> ReplicationReport {
    let mut report = ReplicationReport { object: Some(object), source: Some(source), ..Default::default() };
    let Some(mut table) = net.node_mut(source).repl_table.take() else { return report };
    let Some(sel) = select_target_nodes(net, &table, object, reservation_timeout) else {
        net.node_mut(source).repl_table = Some(table);
        return report;
    };
    report.avg_q = sel.avg_q;
    report.targets = sel.selected.clone();
    report.down = sel.down.clone();

    let record = net.object(object).clone();
    let now = net.now;
    for &target in &sel.chosen {
        let degree = net.topology.degree(target) as f64;
        let peer = net.node_mut(target);
        let evicted = match evict_for_space(&mut peer.store, &mut peer.popularity, &record, now) {
            Ok(ev) => ev,
            Err(_) => {
                peer.reservations.release(object);
                report.no_space.push(target);
                continue;
            }
        };
        report.evicted.extend(evicted.into_iter().map(|o| (target, o)));
        match peer.store.insert(&record, now, Provenance::Replicated) {
            Ok(()) => {}
            Err(InsertError::AlreadyPresent) => {
                report.overwrite_attempts += 1;
                peer.reservations.release(object);
                continue;
            }
            Err(InsertError::NoSpace) => {
                peer.reservations.release(object);
                report.no_space.push(target);
                continue;
            }
        }
        peer.popularity.track(object);
        peer.reservations.release(object);
        let reward = compute_repl_reward(degree, peer.profile.upload_bandwidth, peer.store.available() as f64, cfg);
        let q = table.get(target).expect("target came from the table");
        table.set(target, update_repl_q(q, ReplOutcome::Replicated(reward), cfg.alpha));
        report.recipients.push(target);
        report.rewards.push((target, reward));
    }
    for &down in &sel.down {
        let q = table.get(down).expect("target came from the table");
        table.set(down, update_repl_q(q, ReplOutcome::Down, cfg.alpha));
    }

    let src = net.node_mut(source);
    if !report.recipients.is_empty() {
        src.popularity.mark_replicated(object);
    }
    for &r in &report.recipients {
        if let Some(rec) = src.qfeed.get_mut(r) {
            rec.stats.nr += 1;
            rec.replicated.push(object);
        }
    }
    src.repl_table = Some(table);
    report
}

/// Frees room for `incoming` by evicting the least popular objects, oldest
/// first among equals. Popularity comes from the node's own table.
pub fn evict_for_space(
    store: &mut SharedStore,
    popularity: &mut PopularityTable,
    incoming: &ObjectRecord,
    _now: u64,
) -> Result<Vec<ObjectId>> {
    if incoming.size > store.capacity() {
        return Err(oversized(incoming.size, store.capacity()));
    }
    let mut evicted = Vec::new();
    while !store.fits(incoming.size) {
        let victim = store
            .iter()
            .filter(|o| o.id != incoming.id)
            .min_by(|a, b| {
                popularity
                    .popularity(a.id)
                    .total_cmp(&popularity.popularity(b.id))
                    .then(a.inserted_at.cmp(&b.inserted_at))
                    .then(a.id.cmp(&b.id))
            })
            .map(|o| o.id)
            .ok_or_else(|| oversized(incoming.size, store.capacity()))?;
        store.remove(victim);
        popularity.forget(victim);
        evicted.push(victim);
    }
    Ok(evicted)
}

/// Path replication: copies `object` onto every interior node of a
/// successful walk `[requester, .., provider]` that lacks it.
pub fn path_replicate(net: &mut Network, path: &[NodeId], object: ObjectId) -> Vec<NodeId> {
    if path.len() < 3 {
        return Vec::new();
    }
    let record = net.object(object).clone();
    let now = net.now;
    let mut recipients = Vec::new();
    for &hop in &path[1..path.len() - 1] {
        let peer = net.node_mut(hop);
        if !peer.up || peer.store.contains(object) {
            continue;
        }
        if evict_for_space(&mut peer.store, &mut peer.popularity, &record, now).is_err() {
            continue;
        }
        if peer.store.insert(&record, now, Provenance::PathReplicated).is_ok() {
            peer.popularity.track(object);
            recipients.push(hop);
        }
    }
    recipients
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{KeywordId, NodeProfile};
    use crate::network::PeerNode;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> QReplConfig {
        QReplConfig::default()
    }

    fn obj(id: u32) -> ObjectRecord {
        ObjectRecord { id: ObjectId(id), name: format!("o{id}"), keywords: vec![KeywordId(id)], size: 1 }
    }

    #[test]
    fn popularity_update_examples() {
        assert!((update_popularity(0.0, 10, 50, 0.5) - 10.0).abs() < 1e-9);
        assert_eq!(update_popularity(7.0, 0, 50, 0.5), 7.0);
        assert_eq!(update_popularity(7.0, 0, 0, 0.5), 7.0);
        assert!((update_popularity(10.0, 50, 50, 0.5) - 60.0).abs() < 1e-9);
    }

    #[test]
    fn popularity_table_updates_every_window() {
        let mut t = PopularityTable::default();
        t.track(ObjectId(1));
        t.track(ObjectId(2));
        assert_eq!(t.popularity(ObjectId(1)), 0.0);
        for i in 0..50 {
            let matched: &[ObjectId] = if i < 10 { &[ObjectId(1)] } else { &[] };
            let refreshed = t.record_request(matched, 50, 0.5);
            assert_eq!(refreshed, i == 49);
        }
        assert!((t.popularity(ObjectId(1)) - 10.0).abs() < 1e-9);
        assert_eq!(t.popularity(ObjectId(2)), 0.0);
        assert_eq!(t.get(ObjectId(1)).unwrap().rank, 1);
        assert_eq!(t.get(ObjectId(2)).unwrap().rank, 2);
    }

    #[test]
    fn candidate_selection() {
        let mut t = PopularityTable::default();
        t.track(ObjectId(0));
        t.track(ObjectId(1));
        t.entries.get_mut(&ObjectId(0)).unwrap().popularity = 60.0;
        t.entries.get_mut(&ObjectId(1)).unwrap().popularity = 10.0;
        assert_eq!(select_replication_candidates(&t, 30.0), vec![ObjectId(0)]);
        assert!(select_replication_candidates(&PopularityTable::default(), 30.0).is_empty());
        t.entries.get_mut(&ObjectId(1)).unwrap().popularity = 30.0;
        assert_eq!(select_replication_candidates(&t, 30.0), vec![ObjectId(0), ObjectId(1)]);
    }

    #[test]
    fn repl_q_init_and_reward() {
        assert!((init_repl_q(64.0, 40.0, &cfg()) - 200.0).abs() < 1e-9);
        assert!((compute_repl_reward(2.0, 92.0, 65.0, &cfg()) - 1291.666_666_666_666_7).abs() < 1e-9);
        assert!((compute_repl_reward(3.0, 98.0, 75.0, &cfg()) - 1484.375).abs() < 1e-9);
        assert_eq!(compute_repl_reward(0.0, 0.0, 0.0, &cfg()), 0.0);
    }

    #[test]
    fn repl_q_update_outcomes() {
        assert!((update_repl_q(466.0, ReplOutcome::Replicated(1291.666_666_666_666_7), 0.2) - 631.133_333).abs() < 1e-3);
        assert!((update_repl_q(441.0, ReplOutcome::Down, 0.2) - 352.8).abs() < 1e-9);
        assert_eq!(update_repl_q(122.0, ReplOutcome::HasCopy, 0.2), 122.0);
    }

    proptest! {
        #[test]
        fn down_decay_is_geometric(q in 0.0..5000.0f64, k in 0u32..30, alpha in 0.01..0.99f64) {
            let mut cur = q;
            for _ in 0..k {
                cur = update_repl_q(cur, ReplOutcome::Down, alpha);
            }
            let expect = q * (1.0 - alpha).powi(k as i32);
            prop_assert!((cur - expect).abs() <= 1e-9 * q.max(1.0));
        }

        #[test]
        fn reward_strictly_increasing_in_each_signal(d in 0.0..20.0f64, b in 0.0..200.0f64, s in 0.0..200.0f64, eps in 0.01..10.0f64) {
            let base = compute_repl_reward(d, b, s, &cfg());
            prop_assert!(compute_repl_reward(d + eps, b, s, &cfg()) > base);
            prop_assert!(compute_repl_reward(d, b + eps, s, &cfg()) > base);
            prop_assert!(compute_repl_reward(d, b, s + eps, &cfg()) > base);
        }

        #[test]
        fn popularity_never_decreases(start in 0.0..500.0f64, r in 0u32..100, extra in 0u32..100, eta in 0.01..0.99f64) {
            let next = update_popularity(start, r, r + extra, eta);
            prop_assert!(next >= start);
        }
    }

    #[test]
    fn eviction_prefers_unpopular_then_oldest() {
        let catalog: Vec<ObjectRecord> = (0..4).map(obj).collect();
        let mut store = SharedStore::new(2);
        let mut pop = PopularityTable::default();
        store.insert(&catalog[0], 100, Provenance::Initial).unwrap();
        store.insert(&catalog[1], 10, Provenance::Initial).unwrap();
        pop.track(ObjectId(0));
        pop.track(ObjectId(1));
        pop.entries.get_mut(&ObjectId(0)).unwrap().popularity = 5.0;
        pop.entries.get_mut(&ObjectId(1)).unwrap().popularity = 50.0;
        let ev = evict_for_space(&mut store, &mut pop, &catalog[2], 200).unwrap();
        assert_eq!(ev, vec![ObjectId(0)]);

        // Equal popularity: the copy inserted earliest goes.
        let mut store = SharedStore::new(2);
        let mut pop = PopularityTable::default();
        store.insert(&catalog[0], 20, Provenance::Initial).unwrap();
        store.insert(&catalog[1], 100, Provenance::Initial).unwrap();
        let ev = evict_for_space(&mut store, &mut pop, &catalog[2], 200).unwrap();
        assert_eq!(ev, vec![ObjectId(0)]);

        let mut roomy = SharedStore::new(5);
        assert!(evict_for_space(&mut roomy, &mut pop, &catalog[2], 0).unwrap().is_empty());

        let mut tiny = SharedStore::new(0);
        assert!(evict_for_space(&mut tiny, &mut pop, &catalog[2], 0).is_err());
    }

    fn node(id: u32, bw: f64, cap: u32) -> PeerNode {
        PeerNode::new(NodeId(id), NodeProfile { upload_bandwidth: bw, download_bandwidth: bw, storage_capacity: cap })
    }

    fn line_network(n: u32) -> Network {
        let edges: Vec<(u32, u32)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        let topo = Topology::from_edges(n as usize, &edges);
        let nodes = (0..n).map(|i| node(i, 64.0, 10)).collect();
        Network::from_parts(topo, (0..3).map(obj).collect(), nodes)
    }

    #[test]
    fn single_candidate_gets_exactly_one_copy() {
        let mut net = line_network(2);
        net.node_mut(NodeId(0)).store.insert(&obj(0), 0, Provenance::Initial).unwrap();
        net.node_mut(NodeId(0)).repl_table = Some(ReplQTable { entries: vec![ReplQEntry { node: NodeId(1), q_value: 200.0 }] });
        let rep = replicate_object(&mut net, NodeId(0), ObjectId(0), &cfg(), 10);
        assert_eq!(rep.recipients, vec![NodeId(1)]);
        assert!(net.node(NodeId(1)).store.contains(ObjectId(0)));
        assert!(net.node(NodeId(1)).reservations.is_empty());
        assert_eq!(net.node(NodeId(0)).qfeed.entries.len(), 0);

        // Second round: recipient already holds it.
        let again = replicate_object(&mut net, NodeId(0), ObjectId(0), &cfg(), 10);
        assert!(again.recipients.is_empty());
    }

    #[test]
    fn reserved_target_is_skipped_and_q_unchanged() {
        let mut net = line_network(2);
        net.node_mut(NodeId(0)).repl_table = Some(ReplQTable { entries: vec![ReplQEntry { node: NodeId(1), q_value: 200.0 }] });
        assert!(net.node_mut(NodeId(1)).reservations.try_reserve(ObjectId(0), 0, 50));
        let rep = replicate_object(&mut net, NodeId(0), ObjectId(0), &cfg(), 10);
        assert!(rep.recipients.is_empty());
        assert_eq!(net.node(NodeId(0)).repl_table.as_ref().unwrap().get(NodeId(1)), Some(200.0));
        net.now = 60;
        net.node_mut(NodeId(1)).reservations.purge_expired(60);
        assert!(net.node(NodeId(1)).reservations.is_empty());
    }

    #[test]
    fn full_target_without_evictable_space_is_a_no_op() {
        let mut net = line_network(2);
        net.node_mut(NodeId(1)).store = SharedStore::new(0);
        net.node_mut(NodeId(0)).repl_table = Some(ReplQTable { entries: vec![ReplQEntry { node: NodeId(1), q_value: 200.0 }] });
        let rep = replicate_object(&mut net, NodeId(0), ObjectId(0), &cfg(), 10);
        assert_eq!(rep.no_space, vec![NodeId(1)]);
        assert!(net.node(NodeId(1)).reservations.is_empty());
        assert_eq!(net.node(NodeId(0)).repl_table.as_ref().unwrap().get(NodeId(1)), Some(200.0));
    }

    #[test]
    fn path_replication_fills_interior_only() {
        let mut net = line_network(4);
        net.node_mut(NodeId(3)).store.insert(&obj(1), 0, Provenance::Initial).unwrap();
        let path = [NodeId(0), NodeId(1), NodeId(2), NodeId(3)];
        assert_eq!(path_replicate(&mut net, &path, ObjectId(1)), vec![NodeId(1), NodeId(2)]);
        assert!(!net.node(NodeId(0)).store.contains(ObjectId(1)));
        assert!(path_replicate(&mut net, &path, ObjectId(1)).is_empty(), "no overwrite");
        assert!(path_replicate(&mut net, &[NodeId(0), NodeId(1)], ObjectId(1)).is_empty());
    }

    #[test]
    fn hello_walk_follows_single_successor() {
        // 0 - 1 - 2 - 3 - 4 and 0 - 5 - 6
        let topo = Topology::from_edges(7, &[(0, 1), (1, 2), (2, 3), (3, 4), (0, 5), (5, 6)]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let got = hello_walk(&topo, NodeId(0), &[NodeId(1), NodeId(5)], 3, |_| true, &mut rng);
        assert_eq!(got, vec![NodeId(1), NodeId(2), NodeId(3), NodeId(5), NodeId(6)]);
        let got = hello_walk(&topo, NodeId(0), &[NodeId(1)], 3, |n| n != NodeId(2), &mut rng);
        assert_eq!(got, vec![NodeId(1)]);
    }

    #[test]
    fn down_source_builds_no_table() {
        let mut net = line_network(3);
        net.node_mut(NodeId(0)).up = false;
        assert!(build_repl_qtable(&net, NodeId(0), &cfg(), &mut ChaCha8Rng::seed_from_u64(1)).is_none());
        net.node_mut(NodeId(0)).up = true;
        let t = build_repl_qtable(&net, NodeId(0), &cfg(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let ids: Vec<NodeId> = t.entries.iter().map(|e| e.node).collect();
        assert_eq!(ids, vec![NodeId(1), NodeId(2)]);
        // Bandwidth 64 and 10 free slots.
        assert!((t.entries[0].q_value - (1.0 + 10.0 / 40.0) * 100.0).abs() < 1e-9);
    }
}
