//! k-random-walk keyword search with Q-Feed service gating.
//!
//! A query is first matched against the requester's own folder. On a miss,
//! up to `walkers` messages leave through distinct Normal neighbors and each
//! then moves one hop per round to a single neighbor, preferring nodes the
//! query has not visited yet. All walkers advance in lockstep; the query
//! ends after the first round that produced a hit, or when every walker's
//! TTL is spent.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::metrics::{Collector, Event};
use crate::model::{KeywordId, NodeId, ObjectId, Provenance};
use crate::network::Network;
use crate::qfeed::{service_policy, NeighborStatus, ServiceAction, StatusCategory};
use crate::qrepl::evict_for_space;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMessage {
    pub message_id: u64,
    pub origin: NodeId,
    pub keywords: Vec<KeywordId>,
    /// Hops this message may still travel.
    pub ttl: u32,
    /// Nodes this walker has traversed, origin first.
    pub path: Vec<NodeId>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub success: bool,
    pub hit_node: Option<NodeId>,
    /// Object the requester downloads from the hit node.
    pub object: Option<ObjectId>,
    pub hops: u32,
    pub messages_generated: u32,
    /// Path of the successful walker, requester to provider.
    pub path: Vec<NodeId>,
    /// Matching objects at the hit node.
    pub results: u32,
}

struct Walker {
    msg: QueryMessage,
    next: NodeId,
    alive: bool,
}

struct Hit {
    walker: usize,
    node: NodeId,
    matched: Vec<ObjectId>,
}

/// Objects in `node`'s folder whose keywords intersect the query.
pub fn local_match(net: &Network, node: NodeId, keywords: &[KeywordId]) -> Vec<ObjectId> {
    net.node(node).store.matching(keywords)
}

/// Runs one query from `source` to completion. Returns `None` when the
/// source is down and so never generates the query.
pub fn start_query<R: Rng>(
    net: &mut Network,
    source: NodeId,
    keywords: &[KeywordId],
    wanted: Option<ObjectId>,
    message_id: u64,
    cfg: &SimConfig,
    rng: &mut R,
    col: &mut Collector,
) -> Option<QueryResult> {
    if !net.is_up(source) {
        return None;
    }
    col.record(Event::QueryOriginated);

    let own = local_match(net, source, keywords);
    if !own.is_empty() {
        let result = QueryResult {
            success: true,
            hit_node: Some(source),
            object: pick(&own, wanted),
            hops: 0,
            messages_generated: 0,
            path: vec![source],
            results: own.len() as u32,
        };
        col.record(Event::Hit { hops: 0, messages: 0 });
        return Some(result);
    }

    let gating = cfg.qfeed.enabled;
    let targets = origin_targets(net, source, cfg, rng);
    let mut walkers: Vec<Walker> = targets
        .into_iter()
        .map(|t| Walker {
            msg: QueryMessage {
                message_id,
                origin: source,
                keywords: keywords.to_vec(),
                ttl: cfg.search.ttl,
                path: vec![source],
            },
            next: t,
            alive: cfg.search.ttl > 0,
        })
        .collect();
    if gating {
        let table = &mut net.node_mut(source).qfeed;
        for w in walkers.iter().filter(|w| w.alive) {
            if let Some(rec) = table.get_mut(w.next) {
                rec.stats.pn += 1;
            }
        }
    }

    let mut visited: Vec<NodeId> = vec![source];
    let mut messages = 0u32;
    let mut hits: Vec<Hit> = Vec::new();
    while hits.is_empty() && walkers.iter().any(|w| w.alive) {
        for idx in 0..walkers.len() {
            if !walkers[idx].alive {
                continue;
            }
            messages += 1;
            if let Some(matched) = step_walker(net, &mut walkers[idx], &mut visited, cfg, rng, col) {
                let node = *walkers[idx].msg.path.last().expect("non-empty path");
                hits.push(Hit { walker: idx, node, matched });
            }
        }
    }

    for h in &hits {
        if gating {
            credit_hit(net, &walkers[h.walker].msg.path, h.matched.len() as u32);
        }
    }
    let result = match hits.first() {
        Some(h) => {
            let path = walkers[h.walker].msg.path.clone();
            QueryResult {
                success: true,
                hit_node: Some(h.node),
                object: pick(&h.matched, wanted),
                hops: (path.len() - 1) as u32,
                messages_generated: messages,
                results: h.matched.len() as u32,
                path,
            }
        }
        None => QueryResult { messages_generated: messages, ..Default::default() },
    };
    col.record(if result.success { Event::Hit { hops: result.hops, messages } } else { Event::Miss { messages } });
    Some(result)
}

fn pick(matched: &[ObjectId], wanted: Option<ObjectId>) -> Option<ObjectId> {
    match wanted {
        Some(w) if matched.contains(&w) => Some(w),
        _ => matched.first().copied(),
    }
}

/// First-hop recipients: up to `walkers` distinct Normal neighbors, plus one
/// marked-dormant probe on every `sample_stride`-th dispatch.
fn origin_targets<R: Rng>(net: &mut Network, source: NodeId, cfg: &SimConfig, rng: &mut R) -> Vec<NodeId> {
    let gating = cfg.qfeed.enabled;
    let eligible: Vec<NodeId> = net
        .topology
        .neighbors(source)
        .iter()
        .copied()
        .filter(|n| net.is_up(*n))
        .filter(|n| !gating || net.node(source).qfeed.get(*n).is_some_and(|r| r.accepts_traffic()))
        .collect();
    let mut targets: Vec<NodeId> = eligible.choose_multiple(rng, cfg.search.walkers).copied().collect();
    if gating {
        if let Some(probe) = probe_target(net, source, &[], rng, cfg.qfeed.sample_stride) {
            targets.push(probe);
        }
    }
    targets
}

fn probe_target<R: Rng>(net: &mut Network, at: NodeId, exclude: &[NodeId], rng: &mut R, stride: u32) -> Option<NodeId> {
    if !net.node_mut(at).qfeed.next_dispatch_is_probe(stride) {
        return None;
    }
    let marked: Vec<NodeId> = net
        .node(at)
        .qfeed
        .entries
        .iter()
        .filter(|r| r.is_probe_eligible())
        .map(|r| r.neighbor)
        .filter(|n| net.is_up(*n) && !exclude.contains(n))
        .collect();
    marked.choose(rng).copied()
}

/// Delivers the walker's pending message and processes it at the receiver.
/// Returns the matched objects on a hit.
fn step_walker<R: Rng>(
    net: &mut Network,
    w: &mut Walker,
    visited: &mut Vec<NodeId>,
    cfg: &SimConfig,
    rng: &mut R,
    col: &mut Collector,
) -> Option<Vec<ObjectId>> {
    let gating = cfg.qfeed.enabled;
    let sender = *w.msg.path.last().expect("non-empty path");
    let receiver = w.next;
    let ttl_in = w.msg.ttl;
    debug_assert!(ttl_in > 0);
    let now = net.now;

    let sender_status = if gating { net.node(receiver).qfeed.status_of(sender) } else { None };
    col.record(Event::MessageForwarded(sender_status.map_or(StatusCategory::Normal, NeighborStatus::category)));
    let probe = gating && net.node(sender).qfeed.status_of(receiver) == Some(NeighborStatus::MarkedDormant);
    w.msg.path.push(receiver);

    let action = if visited.contains(&receiver) {
        // Already processed this message id: pass it on without a lookup.
        net.node_mut(receiver).load.record(now);
        ServiceAction::Forward { ttl: ttl_in - 1 }
    } else {
        visited.push(receiver);
        let node = net.node_mut(receiver);
        node.load.record(now);
        if gating && sender == w.msg.origin {
            if let Some(rec) = node.qfeed.get_mut(sender) {
                rec.note_origin_query();
            }
        }
        let load = node.load.fraction(now, cfg.scenario.load_capacity_per_tick);
        let action = service_policy(sender_status, ttl_in, load, cfg.scenario.load_threshold);
        if action == ServiceAction::Drop {
            w.alive = false;
            return None;
        }
        let matched = if node.serves_queries() { node.store.matching(&w.msg.keywords) } else { Vec::new() };
        node.popularity.record_request(&matched, cfg.qrepl.popularity_update_every, cfg.qrepl.eta);
        if probe {
            if let Some(rec) = net.node_mut(sender).qfeed.get_mut(receiver) {
                rec.record_probe(!matched.is_empty());
            }
        }
        if !matched.is_empty() {
            w.alive = false;
            return Some(matched);
        }
        action
    };

    match action {
        ServiceAction::Forward { ttl } if ttl > 0 => match next_hop(net, receiver, &w.msg.path, visited, cfg, rng) {
            Some(next) => {
                if gating {
                    if let Some(rec) = net.node_mut(receiver).qfeed.get_mut(next) {
                        rec.stats.on += 1;
                    }
                }
                w.msg.ttl = ttl;
                w.next = next;
            }
            None => w.alive = false,
        },
        _ => w.alive = false,
    }
    None
}

/// One onward neighbor for a walker at `at`: a probe if one is due,
/// otherwise a random unvisited Normal neighbor, falling back to any Normal
/// neighbor not already on this walker's path.
fn next_hop<R: Rng>(
    net: &mut Network,
    at: NodeId,
    path: &[NodeId],
    visited: &[NodeId],
    cfg: &SimConfig,
    rng: &mut R,
) -> Option<NodeId> {
    let gating = cfg.qfeed.enabled;
    if gating {
        if let Some(probe) = probe_target(net, at, path, rng, cfg.qfeed.sample_stride) {
            return Some(probe);
        }
    }
    let node = net.node(at);
    let candidates: Vec<NodeId> = net
        .topology
        .neighbors(at)
        .iter()
        .copied()
        .filter(|n| net.is_up(*n) && !path.contains(n))
        .filter(|n| !gating || node.qfeed.get(*n).is_some_and(|r| r.accepts_traffic()))
        .collect();
    let fresh: Vec<NodeId> = candidates.iter().copied().filter(|n| !visited.contains(n)).collect();
    if fresh.is_empty() {
        candidates.choose(rng).copied()
    } else {
        fresh.choose(rng).copied()
    }
}

/// Credits a successful walker's path in every forwarding peer's Q-Feed
/// statistics.
fn credit_hit(net: &mut Network, path: &[NodeId], results: u32) {
    let origin = path[0];
    let first = path[1];
    if let Some(rec) = net.node_mut(origin).qfeed.get_mut(first) {
        rec.stats.pnhit += 1;
        rec.stats.results += results;
    }
    if let Some(rec) = net.node_mut(first).qfeed.get_mut(origin) {
        rec.stats.nghit += 1;
    }
    for pair in path[1..].windows(2) {
        if let Some(rec) = net.node_mut(pair[0]).qfeed.get_mut(pair[1]) {
            rec.stats.onhit += 1;
        }
    }
}

/// Copies the found object to the requester with the given probability.
/// Returns true if a new copy was created.
pub fn on_hit<R: Rng>(
    net: &mut Network,
    origin: NodeId,
    provider: NodeId,
    object: ObjectId,
    download_probability: f64,
    rng: &mut R,
    col: &mut Collector,
) -> bool {
    if origin == provider || !net.is_up(origin) || net.node(origin).store.contains(object) {
        return false;
    }
    if download_probability <= 0.0 || (download_probability < 1.0 && !rng.gen_bool(download_probability)) {
        return false;
    }
    let record = net.object(object).clone();
    let now = net.now;
    let node = net.node_mut(origin);
    if evict_for_space(&mut node.store, &mut node.popularity, &record, now).is_err() {
        return false;
    }
    if node.store.insert(&record, now, Provenance::Downloaded).is_err() {
        col.record(Event::OverwriteAttempt);
        return false;
    }
    node.popularity.track(object);
    col.record(Event::Download);
    true
}
