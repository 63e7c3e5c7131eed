//! Per-peer neighbor Q-table and the free-rider control state machine.
//!
//! Every peer scores each neighbor with a Q-value. The Q-value decides the
//! neighbor's status, and the status decides how much service the peer
//! extends to it:
//!
//! | status          | Q range          | service                                          |
//! |-----------------|------------------|--------------------------------------------------|
//! | Normal          | `q >= l_th`      | full forwarding, receives our queries            |
//! | Suspended       | `u_th <= q < l_th` | TTL cut to `round(ln ttl)`, receives nothing   |
//! | Dormant         | `q < u_th`       | local lookup only, dropped under overload        |
//! | MarkedDormant   | (poll adopted)   | as Dormant, plus every n-th query as a probe     |

use serde::{Deserialize, Serialize};

use crate::config::QFeedConfig;
use crate::model::{NodeId, NodeProfile, ObjectId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NeighborStatus {
    Normal,
    Suspended,
    Dormant,
    MarkedDormant,
}

impl NeighborStatus {
    /// The three-way category used by the census and message accounting.
    pub fn category(self) -> StatusCategory {
        match self {
            NeighborStatus::Normal => StatusCategory::Normal,
            NeighborStatus::Suspended => StatusCategory::Suspended,
            NeighborStatus::Dormant | NeighborStatus::MarkedDormant => StatusCategory::Dormant,
        }
    }

    pub fn is_free_rider(self) -> bool {
        self != NeighborStatus::Normal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StatusCategory {
    Normal,
    Suspended,
    Dormant,
}

impl StatusCategory {
    pub const ALL: [StatusCategory; 3] = [StatusCategory::Normal, StatusCategory::Suspended, StatusCategory::Dormant];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Counters a peer keeps about one neighbor over the current period.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PeriodStats {
    /// Our own queries sent to the neighbor.
    pub pn: u32,
    /// Queries from other neighbors we forwarded to it.
    pub on: u32,
    pub pnhit: u32,
    pub onhit: u32,
    /// Replicas we pushed to it this period.
    pub nr: u32,
    /// Of those, how many it still holds at period end.
    pub na: u32,
    /// Queries it originated towards us.
    pub ngq: u32,
    pub nghit: u32,
    /// Total results returned for our `pn` queries.
    pub results: u32,
    /// Files it hosts (observed at period end; not used by the reward).
    pub nf: u32,
}

impl PeriodStats {
    /// Average results per answered query we sent to the neighbor.
    pub fn avg_results(&self) -> f64 {
        ratio(self.results, self.pnhit)
    }

    pub fn has_activity(&self) -> bool {
        self.pn + self.on + self.ngq + self.nr > 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuspendedContext {
    pub f_free: u32,
    pub queries_since_suspension: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DormantContext {
    pub f_d: u32,
    pub sampled_queries: u32,
    pub sampled_hits: u32,
    /// Set once the availability gate has been passed while marked.
    pub gate_open: bool,
}

impl DormantContext {
    fn new(f_d: u32) -> Self {
        Self { f_d, sampled_queries: 0, sampled_hits: 0, gate_open: false }
    }

    pub fn hit_ratio(&self) -> Option<f64> {
        (self.sampled_queries > 0).then(|| self.sampled_hits as f64 / self.sampled_queries as f64)
    }
}

/// What the peer learns about a neighbor when a period closes.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NeighborObservation {
    pub file_count: u32,
    /// How many of this period's replicas the neighbor still holds.
    pub replicas_present: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub peer: NodeId,
    pub neighbor: NodeId,
    pub from: NeighborStatus,
    pub to: NeighborStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborRecord {
    pub neighbor: NodeId,
    pub q_value: f64,
    pub status: NeighborStatus,
    pub stats: PeriodStats,
    pub suspended: Option<SuspendedContext>,
    pub dormant: Option<DormantContext>,
    /// Objects replicated to this neighbor during the current period.
    pub replicated: Vec<ObjectId>,
}

impl NeighborRecord {
    pub fn new(neighbor: NodeId, q_value: f64, file_count: u32, cfg: &QFeedConfig) -> Self {
        let mut rec = Self {
            neighbor,
            q_value,
            status: NeighborStatus::Normal,
            stats: PeriodStats::default(),
            suspended: None,
            dormant: None,
            replicated: Vec::new(),
        };
        rec.enter(classify_status(q_value, cfg), file_count);
        rec
    }

    fn enter(&mut self, status: NeighborStatus, file_count: u32) {
        match status {
            NeighborStatus::Normal => {
                self.suspended = None;
                self.dormant = None;
            }
            NeighborStatus::Suspended => {
                self.dormant = None;
                self.suspended = Some(SuspendedContext { f_free: file_count, queries_since_suspension: 0 });
            }
            NeighborStatus::Dormant => {
                self.suspended = None;
                self.dormant = Some(DormantContext::new(file_count));
            }
            NeighborStatus::MarkedDormant => {
                let f_d = self.dormant.map_or(file_count, |d| d.f_d);
                self.dormant = Some(DormantContext::new(f_d));
            }
        }
        self.status = status;
    }

    /// Whether the peer may send it ordinary traffic.
    pub fn accepts_traffic(&self) -> bool {
        self.status == NeighborStatus::Normal
    }

    /// Marked and past the availability gate, so eligible for probe queries.
    pub fn is_probe_eligible(&self) -> bool {
        self.status == NeighborStatus::MarkedDormant && self.dormant.is_some_and(|d| d.gate_open)
    }

    /// Counts a query the neighbor originated towards us.
    pub fn note_origin_query(&mut self) {
        self.stats.ngq += 1;
        if let Some(ctx) = self.suspended.as_mut() {
            ctx.queries_since_suspension += 1;
        }
    }

    pub fn record_probe(&mut self, hit: bool) {
        if let Some(ctx) = self.dormant.as_mut() {
            ctx.sampled_queries += 1;
            if hit {
                ctx.sampled_hits += 1;
            }
        }
    }

    /// Closes the period for this neighbor: reward, update, reclassify, reset.
    pub fn end_period(&mut self, peer: NodeId, obs: NeighborObservation, cfg: &QFeedConfig) -> Option<Transition> {
        let from = self.status;
        self.stats.nf = obs.file_count;
        self.stats.na = obs.replicas_present.min(self.stats.nr);
        match self.status {
            NeighborStatus::Normal => {
                // A neighbor we had no dealings with earns no reward either way.
                if self.stats.has_activity() {
                    let reward = compute_reward_normal(&self.stats, cfg);
                    self.q_value = update_q(self.q_value, reward, cfg.alpha);
                    let next = classify_status(self.q_value, cfg);
                    if next != self.status {
                        self.enter(next, obs.file_count);
                    }
                }
            }
            NeighborStatus::Suspended => {
                let ctx = self.suspended.expect("suspended neighbor has context");
                if ctx.queries_since_suspension > cfg.n1_limit {
                    let delta = compute_reward_suspended(obs.file_count, ctx.f_free, cfg);
                    self.q_value = update_q(self.q_value, delta, cfg.alpha);
                    self.suspended = Some(SuspendedContext { queries_since_suspension: 0, ..ctx });
                    let next = classify_status(self.q_value, cfg);
                    if next != self.status {
                        self.enter(next, obs.file_count);
                    }
                }
            }
            NeighborStatus::Dormant => {}
            NeighborStatus::MarkedDormant => {
                let ctx = self.dormant.as_mut().expect("marked neighbor has context");
                if !ctx.gate_open {
                    ctx.gate_open = availability_gate(ctx.f_d, obs.file_count);
                }
                if ctx.gate_open && ctx.hit_ratio().is_some_and(|h| h >= cfg.h_th) {
                    self.enter(NeighborStatus::Suspended, obs.file_count);
                }
            }
        }
        self.stats = PeriodStats::default();
        self.replicated.clear();
        (from != self.status).then_some(Transition { peer, neighbor: self.neighbor, from, to: self.status })
    }
}

/// A peer's Q-Feed table, one record per neighbor in adjacency order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NeighborTable {
    pub entries: Vec<NeighborRecord>,
    /// Dispatch counter driving periodic probes to marked neighbors.
    pub dispatches: u64,
}

impl NeighborTable {
    pub fn get(&self, id: NodeId) -> Option<&NeighborRecord> {
        self.entries.iter().find(|r| r.neighbor == id)
    }

    pub fn get_mut(&mut self, id: NodeId) -> Option<&mut NeighborRecord> {
        self.entries.iter_mut().find(|r| r.neighbor == id)
    }

    pub fn status_of(&self, id: NodeId) -> Option<NeighborStatus> {
        self.get(id).map(|r| r.status)
    }

    /// Average Q over Normal neighbors, i.e. excluding free-riders.
    pub fn avg_normal_q(&self) -> Option<f64> {
        mean(self.entries.iter().filter(|r| r.status == NeighborStatus::Normal).map(|r| r.q_value))
    }

    /// Normal neighbors at or above the Normal average: the poll electorate.
    pub fn pollers(&self) -> Vec<NodeId> {
        let Some(avg) = self.avg_normal_q() else { return Vec::new() };
        self.entries
            .iter()
            .filter(|r| r.status == NeighborStatus::Normal && r.q_value >= avg)
            .map(|r| r.neighbor)
            .collect()
    }

    /// Counts one query dispatch; true on every `stride`-th one.
    pub fn next_dispatch_is_probe(&mut self, stride: u32) -> bool {
        self.dispatches += 1;
        self.dispatches % stride as u64 == 0
    }

    /// Polls the table's best Normal neighbors for their view of a dormant
    /// neighbor. `ask(poller)` returns the poller's Q-value for the dormant
    /// node, or `None` if the poller does not know it.
    ///
    /// Returns AvgD when at least one poller answered. A node whose AvgD
    /// reaches `l_th` becomes MarkedDormant and adopts AvgD as its Q-value;
    /// otherwise nothing changes.
    pub fn poll_dormant<F>(&mut self, dormant: NodeId, cfg: &QFeedConfig, mut ask: F) -> Option<f64>
    where
        F: FnMut(NodeId) -> Option<f64>,
    {
        if self.status_of(dormant) != Some(NeighborStatus::Dormant) {
            return None;
        }
        let answers: Vec<f64> = self.pollers().into_iter().filter(|p| *p != dormant).filter_map(&mut ask).collect();
        let avg_d = mean(answers.into_iter())?;
        if avg_d >= cfg.l_th {
            let rec = self.get_mut(dormant).expect("checked above");
            rec.enter(NeighborStatus::MarkedDormant, 0);
            rec.q_value = avg_d;
        }
        Some(avg_d)
    }
}

/// Initial Q-value of a newly joined neighbor, floored at 100.
pub fn init_q_value(profile: &NodeProfile, f_current: u32, cfg: &QFeedConfig) -> f64 {
    assert!(profile.download_bandwidth > 0.0, "download bandwidth must be positive");
    let raw = (cfg.u1 * (profile.upload_bandwidth / profile.download_bandwidth) + cfg.u2 * f_current as f64) * 100.0;
    raw.max(100.0)
}

fn ratio(num: u32, den: u32) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Period reward for a Normal neighbor.
pub fn compute_reward_normal(s: &PeriodStats, cfg: &QFeedConfig) -> f64 {
    let hits_own = ratio(s.pnhit, s.pn) * s.avg_results();
    let hits_other = ratio(s.onhit, s.on);
    // Full retention (NR == NA) pays NA instead of dividing by zero.
    let retention = if s.nr == 0 {
        0.0
    } else if s.na >= s.nr {
        s.na as f64
    } else {
        s.na as f64 / (s.nr - s.na) as f64
    };
    let served = ratio(s.nghit, s.ngq);
    let rho = (cfg.w1 * hits_own + cfg.w2 * hits_other + cfg.w3 * retention + cfg.w4 * served) * 100.0;
    rho.max(0.0)
}

/// Q-learning blend toward the reward.
#[inline]
pub fn update_q(q: f64, reward: f64, alpha: f64) -> f64 {
    q + alpha * (reward - q)
}

pub fn classify_status(q: f64, cfg: &QFeedConfig) -> NeighborStatus {
    if q >= cfg.l_th {
        NeighborStatus::Normal
    } else if q >= cfg.u_th {
        NeighborStatus::Suspended
    } else {
        NeighborStatus::Dormant
    }
}

/// TTL cut applied to queries arriving from a suspended neighbor.
pub fn reduce_ttl(ttl: u32) -> u32 {
    if ttl == 0 {
        0
    } else {
        (ttl as f64).ln().round() as u32
    }
}

/// Reward for a suspended neighbor: growth in hosted files since suspension.
pub fn compute_reward_suspended(f_after: u32, f_free: u32, cfg: &QFeedConfig) -> f64 {
    (cfg.w_susp * (f_after as f64 - f_free as f64) * 100.0).max(0.0)
}

/// Stage-two entry test for a marked dormant neighbor: it must host at least
/// `ln(f_a)` more files than when it was demoted.
pub fn availability_gate(f_d: u32, f_a: u32) -> bool {
    if f_a == 0 {
        return false;
    }
    let grown = f_a as f64 - f_d as f64;
    grown >= (f_a as f64).ln()
}

/// How a peer treats a query arriving from a neighbor of the given status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServiceAction {
    /// Check locally, on a miss forward with this TTL (if non-zero).
    Forward { ttl: u32 },
    /// Check locally, never forward.
    LocalOnly,
    /// Discard without looking.
    Drop,
}

/// `ttl` is the arriving message's remaining hop budget (>= 1). `None` means
/// the sender is unscored (Q-Feed disabled), which is treated as Normal.
pub fn service_policy(sender: Option<NeighborStatus>, ttl: u32, load: f64, load_threshold: f64) -> ServiceAction {
    match sender {
        None | Some(NeighborStatus::Normal) => ServiceAction::Forward { ttl: ttl.saturating_sub(1) },
        Some(NeighborStatus::Suspended) => ServiceAction::Forward { ttl: reduce_ttl(ttl) },
        Some(NeighborStatus::Dormant | NeighborStatus::MarkedDormant) => {
            if load >= load_threshold {
                ServiceAction::Drop
            } else {
                ServiceAction::LocalOnly
            }
        }
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}
