//! Run orchestration: workload schedule, period hooks, churn and
//! multi-run sequencing with full state carry-over.
//!
//! Three independent random streams are derived from the seed. Stream 0
//! builds the network, stream 1 drives the workload (emission times,
//! requested objects, churn) and stream 2 everything the protocols decide.
//! Configurations that differ only in control or replication scheme thus
//! see the same topology, placement, query sequence and churn.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Zipf};

use crate::config::{QueryModel, ReplicationScheme, SimConfig};
use crate::error::Result;
use crate::metrics::{finalize_run, Collector, Event, RunReport, StatusCounts};
use crate::model::{apply_churn, KeywordId, NodeId, ObjectId};
use crate::network::{Network, PeerBehavior};
use crate::qfeed::{NeighborObservation, NeighborStatus, NeighborTable, StatusCategory};
use crate::qrepl::{build_repl_qtable, path_replicate, replicate_object, select_replication_candidates};
use crate::search::{on_hit, start_query};

/// Period hooks per run.
pub const PERIODS_PER_RUN: u64 = 10;

const STREAM_BUILD: u64 = 0;
const STREAM_WORKLOAD: u64 = 1;
const STREAM_PROTOCOL: u64 = 2;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Hook {
    Poll,
    ReplicationCheck,
    /// Period end; the payload is the 1-based period number.
    Period(u64),
}

struct Request {
    tick: u64,
    source: NodeId,
    wanted: Option<ObjectId>,
    keywords: Vec<KeywordId>,
}

pub struct Simulation {
    pub config: SimConfig,
    pub net: Network,
    workload: ChaCha8Rng,
    protocol: ChaCha8Rng,
    zipf: Zipf<f64>,
    next_message_id: u64,
    queries_since_churn: u64,
    last: Option<RunReport>,
    period_hooks_fired: u64,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.scenario.seed;
        let net = Network::build(&config.scenario, &config.qfeed, &mut stream(seed, STREAM_BUILD))?;
        let ranks = match config.scenario.query_model {
            QueryModel::Object => config.scenario.object_count,
            QueryModel::Keyword => config.scenario.keyword_pool,
        };
        let zipf = Zipf::new(ranks as u64, config.scenario.query_zipf_exponent)
            .map_err(|e| crate::error::config_err(format!("scenario.query_zipf_exponent: {e}")))?;
        Ok(Self {
            net,
            workload: stream(seed, STREAM_WORKLOAD),
            protocol: stream(seed, STREAM_PROTOCOL),
            zipf,
            next_message_id: 0,
            queries_since_churn: 0,
            last: None,
            period_hooks_fired: 0,
            config,
        })
    }

    /// Period hooks fired in the most recent run.
    pub fn period_hooks_fired(&self) -> u64 {
        self.period_hooks_fired
    }

    /// Executes the next run of the series on the carried-over state.
    pub fn run_once(&mut self) -> RunReport {
        let mut col = match &self.last {
            Some(prev) => Collector::after(prev),
            None => Collector::new(1),
        };
        let sc = self.config.scenario.clone();
        let base = self.net.now;
        let interval = sc.query_interval_ticks.max(1);
        let run_len = sc.run_length_ticks();
        let period_len = (run_len / PERIODS_PER_RUN).max(1);

        let schedule = self.schedule(interval);
        let run_end = schedule.last().map_or(run_len, |r| (r.tick + 1).max(run_len));
        let hooks = self.hooks(run_len, run_end);
        let timeout = match self.config.qrepl.reservation_timeout_ticks {
            0 => period_len,
            t => t,
        };

        self.period_hooks_fired = 0;
        let mut next_hook = 0;
        for req in schedule {
            while next_hook < hooks.len() && hooks[next_hook].0 <= req.tick {
                self.net.now = base + hooks[next_hook].0;
                self.fire(hooks[next_hook].1, timeout, &mut col);
                next_hook += 1;
            }
            self.net.now = base + req.tick;
            self.emit(req, &mut col);
        }
        for &(tick, hook) in &hooks[next_hook..] {
            self.net.now = base + tick;
            self.fire(hook, timeout, &mut col);
        }
        self.net.now = base + run_end;

        let report = finalize_run(col, self.census(), self.net.up_count() as u64);
        self.last = Some(report.clone());
        report
    }

    /// Emission slots for this run, in tick order. Every node gets its
    /// slots whether up or not, so the workload stream is consumed
    /// identically across configurations.
    fn schedule(&mut self, interval: u64) -> Vec<Request> {
        let sc = &self.config.scenario;
        let per_query = self.config.search.keywords_per_query;
        let gap = Geometric::new(1.0 / interval as f64).expect("interval >= 1");
        let mut slots = Vec::with_capacity(sc.node_count * sc.queries_per_node);
        for node in 0..sc.node_count as u32 {
            let mut tick = self.workload.gen_range(0..interval);
            for _ in 0..sc.queries_per_node {
                let rank = self.zipf.sample(&mut self.workload) as u32 - 1;
                let (wanted, keywords) = match sc.query_model {
                    QueryModel::Object => {
                        let object = ObjectId(rank);
                        let kw = self.net.object(object).keywords.choose_multiple(&mut self.workload, per_query);
                        (Some(object), kw.copied().collect())
                    }
                    QueryModel::Keyword => {
                        let mut kw = vec![KeywordId(rank)];
                        while kw.len() < per_query.min(sc.keyword_pool) {
                            let k = KeywordId(self.zipf.sample(&mut self.workload) as u32 - 1);
                            if !kw.contains(&k) {
                                kw.push(k);
                            }
                        }
                        (None, kw)
                    }
                };
                slots.push(Request { tick, source: NodeId(node), wanted, keywords });
                tick += 1 + gap.sample(&mut self.workload);
            }
        }
        slots.sort_by_key(|r| (r.tick, r.source));
        slots
    }

    fn hooks(&self, run_len: u64, run_end: u64) -> Vec<(u64, Hook)> {
        let mut hooks: Vec<(u64, Hook)> = (1..PERIODS_PER_RUN)
            .map(|k| (k * run_len / PERIODS_PER_RUN, Hook::Period(k)))
            .chain(std::iter::once((run_end, Hook::Period(PERIODS_PER_RUN))))
            .collect();
        let mut every = |step: u64, hook: Hook| {
            if step > 0 {
                hooks.extend((1..).map(|k| k * step).take_while(|t| *t < run_end).map(|t| (t, hook)));
            }
        };
        every(self.config.qfeed.poll_interval_ticks, Hook::Poll);
        every(self.config.qrepl.replication_check_period_ticks, Hook::ReplicationCheck);
        hooks.sort();
        hooks
    }

    fn fire(&mut self, hook: Hook, timeout: u64, col: &mut Collector) {
        match hook {
            Hook::Poll => self.poll_dormant_neighbors(),
            Hook::ReplicationCheck => self.replication_check(timeout, col),
            Hook::Period(_) => {
                self.period_hooks_fired += 1;
                if self.config.qfeed.enabled {
                    self.end_of_period(col);
                    if self.config.qfeed.poll_interval_ticks == 0 {
                        self.poll_dormant_neighbors();
                    }
                } else {
                    for node in &mut self.net.nodes {
                        for rec in &mut node.qfeed.entries {
                            rec.stats = Default::default();
                            rec.replicated.clear();
                        }
                    }
                }
                if self.config.qrepl.replication_check_period_ticks == 0 {
                    self.replication_check(timeout, col);
                }
                let now = self.net.now;
                for node in &mut self.net.nodes {
                    node.reservations.purge_expired(now);
                }
                if self.config.reporting.audit {
                    self.audit(col);
                }
            }
        }
    }

    fn emit(&mut self, req: Request, col: &mut Collector) {
        let source = req.source;
        if !self.net.is_up(source) {
            return;
        }
        self.next_message_id += 1;
        let result = start_query(
            &mut self.net,
            source,
            &req.keywords,
            req.wanted,
            self.next_message_id,
            &self.config,
            &mut self.protocol,
            col,
        );
        if let Some(r) = result {
            if let (true, Some(provider), Some(found)) = (r.success, r.hit_node, r.object) {
                if self.config.qrepl.scheme == ReplicationScheme::Path {
                    let recipients = path_replicate(&mut self.net, &r.path, found);
                    self.check_recipients(&recipients, col);
                    col.record(Event::Replicated { recipients: recipients.len() as u32 });
                }
                on_hit(
                    &mut self.net,
                    source,
                    provider,
                    found,
                    self.config.search.download_probability,
                    &mut self.protocol,
                    col,
                );
            }
        }
        self.queries_since_churn += 1;
        if self.queries_since_churn >= self.config.scenario.churn_interval_queries {
            self.queries_since_churn = 0;
            let mut up = self.net.up_flags();
            apply_churn(&mut up, self.config.scenario.churn_fraction, &mut self.workload);
            self.net.set_up_flags(&up);
        }
    }

    /// Q-Feed period close at every up peer.
    fn end_of_period(&mut self, col: &mut Collector) {
        let cfg = self.config.qfeed.clone();
        for i in 0..self.net.nodes.len() {
            let id = NodeId(i as u32);
            if !self.net.is_up(id) {
                continue;
            }
            let observations: Vec<NeighborObservation> = self.net.nodes[i]
                .qfeed
                .entries
                .iter()
                .map(|rec| {
                    let peer = self.net.node(rec.neighbor);
                    NeighborObservation {
                        file_count: visible_files(peer),
                        replicas_present: rec.replicated.iter().filter(|o| peer.store.contains(**o)).count() as u32,
                    }
                })
                .collect();
            for (rec, obs) in self.net.nodes[i].qfeed.entries.iter_mut().zip(observations) {
                if let Some(t) = rec.end_period(id, obs, &cfg) {
                    col.record(Event::StatusTransition(t));
                }
            }
        }
    }

    fn poll_dormant_neighbors(&mut self) {
        if !self.config.qfeed.enabled {
            return;
        }
        let cfg = self.config.qfeed.clone();
        for i in 0..self.net.nodes.len() {
            if !self.net.nodes[i].up {
                continue;
            }
            let dormant: Vec<NodeId> = self.net.nodes[i]
                .qfeed
                .entries
                .iter()
                .filter(|r| r.status == NeighborStatus::Dormant)
                .map(|r| r.neighbor)
                .collect();
            if dormant.is_empty() {
                continue;
            }
            let mut table = std::mem::take(&mut self.net.nodes[i].qfeed);
            for d in dormant {
                let net = &self.net;
                table.poll_dormant(d, &cfg, |p| {
                    if net.is_up(p) {
                        net.node(p).qfeed.get(d).map(|r| r.q_value)
                    } else {
                        None
                    }
                });
            }
            self.net.nodes[i].qfeed = table;
        }
    }

    fn replication_check(&mut self, timeout: u64, col: &mut Collector) {
        if self.config.qrepl.scheme != ReplicationScheme::Qrepl {
            return;
        }
        let cfg = self.config.qrepl.clone();
        for i in 0..self.net.nodes.len() {
            let id = NodeId(i as u32);
            if !self.net.is_up(id) {
                continue;
            }
            let candidates: Vec<ObjectId> = select_replication_candidates(&self.net.nodes[i].popularity, cfg.p_th)
                .into_iter()
                .filter(|o| self.net.nodes[i].store.contains(*o))
                .collect();
            if candidates.is_empty() {
                continue;
            }
            if self.net.nodes[i].repl_table.is_none() {
                self.net.nodes[i].repl_table = build_repl_qtable(&self.net, id, &cfg, &mut self.protocol);
            }
            for object in candidates {
                let report = replicate_object(&mut self.net, id, object, &cfg, timeout);
                self.check_recipients(&report.recipients, col);
                for _ in 0..report.overwrite_attempts {
                    col.record(Event::OverwriteAttempt);
                }
                col.record(Event::Replicated { recipients: report.recipients.len() as u32 });
                for r in report.recipients {
                    let peer = self.net.node_mut(r);
                    if peer.behavior == PeerBehavior::FreeRider {
                        peer.store.remove(object);
                        peer.popularity.forget(object);
                    }
                }
            }
        }
    }

    fn check_recipients(&self, recipients: &[NodeId], col: &mut Collector) {
        for r in recipients {
            if !self.net.is_up(*r) {
                col.record(Event::TransferToDown);
            }
        }
    }

    /// Storage invariants: accounted space matches contents and every
    /// keyword index entry is unique.
    fn audit(&self, col: &mut Collector) {
        for node in &self.net.nodes {
            let used: u32 = node.store.iter().map(|o| o.size).sum();
            if used != node.store.used() {
                col.record(Event::DuplicateCopy);
            }
            let mut ids: Vec<ObjectId> = node.store.ids().collect();
            let n = ids.len();
            ids.dedup();
            for _ in ids.len()..n {
                col.record(Event::DuplicateCopy);
            }
        }
    }

    /// Majority status of every up node as seen by its up neighbors.
    pub fn census(&self) -> StatusCounts {
        let mut counts = StatusCounts::default();
        for node in self.net.nodes.iter().filter(|n| n.up) {
            let tables = self
                .net
                .topology
                .neighbors(node.id)
                .iter()
                .map(|p| self.net.node(*p))
                .filter(|p| p.up)
                .map(|p| &p.qfeed);
            if let Some(status) = majority_status(node.id, tables) {
                counts.add(status.category());
            }
        }
        counts
    }
}

fn visible_files(peer: &crate::network::PeerNode) -> u32 {
    if peer.serves_queries() {
        peer.file_count()
    } else {
        0
    }
}

/// Most frequent status of `node` across the given tables, MarkedDormant
/// counted as Dormant. Ties go to the better status. `None` when no table
/// lists the node.
pub fn majority_status<'a>(node: NodeId, tables: impl IntoIterator<Item = &'a NeighborTable>) -> Option<NeighborStatus> {
    let mut tally = [0u32; 3];
    for t in tables {
        if let Some(s) = t.status_of(node) {
            tally[s.category().index()] += 1;
        }
    }
    let best = StatusCategory::ALL.into_iter().max_by_key(|c| (tally[c.index()], std::cmp::Reverse(c.index())))?;
    if tally[best.index()] == 0 {
        return None;
    }
    Some(match best {
        StatusCategory::Normal => NeighborStatus::Normal,
        StatusCategory::Suspended => NeighborStatus::Suspended,
        StatusCategory::Dormant => NeighborStatus::Dormant,
    })
}

/// One run of `config` under `seed`.
pub fn run_simulation(config: &SimConfig, seed: u64) -> Result<RunReport> {
    let mut cfg = config.clone();
    cfg.scenario.seed = seed;
    Ok(Simulation::new(cfg)?.run_once())
}

/// `config.scenario.runs` consecutive runs on carried-over state.
pub fn run_series(config: &SimConfig) -> Result<Vec<RunReport>> {
    let mut sim = Simulation::new(config.clone())?;
    Ok((0..config.scenario.runs).map(|_| sim.run_once()).collect())
}

/// Plain k-random walk without free-rider control.
pub fn without_qfeed(config: &SimConfig, scheme: ReplicationScheme) -> SimConfig {
    let mut cfg = config.clone();
    cfg.qfeed.enabled = false;
    cfg.qrepl.scheme = scheme;
    cfg
}
