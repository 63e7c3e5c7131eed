//! Per-run event counters and the reports derived from them.

use serde::{Deserialize, Serialize};

use crate::qfeed::{StatusCategory, Transition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Event {
    QueryOriginated,
    /// One hop of a query message, tagged with the sender's status as seen
    /// by the receiver.
    MessageForwarded(StatusCategory),
    Hit { hops: u32, messages: u32 },
    Miss { messages: u32 },
    Download,
    Replicated { recipients: u32 },
    StatusTransition(Transition),
    /// An insert refused because the target already held the object.
    OverwriteAttempt,
    TransferToDown,
    DuplicateCopy,
}

/// Counts per census / message category.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusCounts {
    pub normal: u64,
    pub suspended: u64,
    pub dormant: u64,
}

impl StatusCounts {
    pub fn from_array(a: [u64; 3]) -> Self {
        Self { normal: a[0], suspended: a[1], dormant: a[2] }
    }

    pub fn total(&self) -> u64 {
        self.normal + self.suspended + self.dormant
    }

    /// Percentages in (normal, suspended, dormant) order; all zero when empty.
    pub fn percentages(&self) -> [f64; 3] {
        let total = self.total();
        if total == 0 {
            return [0.0; 3];
        }
        [self.normal, self.suspended, self.dormant].map(|c| c as f64 * 100.0 / total as f64)
    }

    pub fn add(&mut self, category: StatusCategory) {
        match category {
            StatusCategory::Normal => self.normal += 1,
            StatusCategory::Suspended => self.suspended += 1,
            StatusCategory::Dormant => self.dormant += 1,
        }
    }
}

/// Replication safety counters; all must stay zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafetyAudit {
    pub duplicate_copies: u64,
    pub transfers_to_down: u64,
    pub overwrites: u64,
}

impl SafetyAudit {
    pub fn is_clean(&self) -> bool {
        *self == Self::default()
    }
}

/// Event sink for one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Collector {
    pub run_index: u32,
    queries: u64,
    successes: u64,
    messages: StatusCounts,
    success_hops: u64,
    success_messages: u64,
    replicated: u64,
    downloaded: u64,
    transitions: u64,
    safety: SafetyAudit,
    prior_replicated: u64,
    prior_downloaded: u64,
}

impl Collector {
    pub fn new(run_index: u32) -> Self {
        Self { run_index, ..Default::default() }
    }

    /// Collector for the run following `prev`, inheriting its cumulative
    /// creation counters.
    pub fn after(prev: &RunReport) -> Self {
        Self {
            run_index: prev.run_index + 1,
            prior_replicated: prev.cumulative_replication,
            prior_downloaded: prev.cumulative_download,
            ..Default::default()
        }
    }

    pub fn record(&mut self, event: Event) {
        match event {
            Event::QueryOriginated => self.queries += 1,
            Event::MessageForwarded(c) => self.messages.add(c),
            Event::Hit { hops, messages } => {
                self.successes += 1;
                self.success_hops += hops as u64;
                self.success_messages += messages as u64;
            }
            Event::Miss { .. } => {}
            Event::Download => self.downloaded += 1,
            Event::Replicated { recipients } => self.replicated += recipients as u64,
            Event::StatusTransition(_) => self.transitions += 1,
            Event::OverwriteAttempt => self.safety.overwrites += 1,
            Event::TransferToDown => self.safety.transfers_to_down += 1,
            Event::DuplicateCopy => self.safety.duplicate_copies += 1,
        }
    }

    pub fn queries(&self) -> u64 {
        self.queries
    }

    pub fn successes(&self) -> u64 {
        self.successes
    }

    /// Message counts indexed by [`StatusCategory::index`].
    pub fn messages_by_category(&self) -> [u64; 3] {
        [self.messages.normal, self.messages.suspended, self.messages.dormant]
    }

    pub fn safety(&self) -> SafetyAudit {
        self.safety
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_index: u32,
    /// Majority status of every up node that some up peer knows.
    pub status_census: StatusCounts,
    pub messages_by_origin_status: StatusCounts,
    pub messages_total: u64,
    /// New copies created this run.
    pub files_from_replication: u64,
    pub files_from_download: u64,
    pub cumulative_replication: u64,
    pub cumulative_download: u64,
    /// Cumulative creations divided by the up-node count.
    pub files_per_node: f64,
    pub up_nodes: u64,
    pub queries_total: u64,
    pub queries_successful: u64,
    pub queries_finished_pct: f64,
    /// Absent when no query succeeded.
    pub avg_messages_per_successful_query: Option<f64>,
    pub avg_hops_per_successful_query: Option<f64>,
    pub status_transitions: u64,
    pub safety: SafetyAudit,
    /// True when the run produced no messages at all.
    pub degenerate: bool,
}

/// Derives a run's report from its collector and the end-of-run census.
pub fn finalize_run(collector: Collector, census: StatusCounts, up_nodes: u64) -> RunReport {
    let c = collector;
    let messages_total = c.messages.total();
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    let cumulative_replication = c.prior_replicated + c.replicated;
    let cumulative_download = c.prior_downloaded + c.downloaded;
    RunReport {
        run_index: c.run_index,
        status_census: census,
        messages_by_origin_status: c.messages,
        messages_total,
        files_from_replication: c.replicated,
        files_from_download: c.downloaded,
        cumulative_replication,
        cumulative_download,
        files_per_node: ratio(cumulative_replication + cumulative_download, up_nodes).unwrap_or(0.0),
        up_nodes,
        queries_total: c.queries,
        queries_successful: c.successes,
        queries_finished_pct: ratio(c.successes * 100, c.queries).unwrap_or(0.0),
        avg_messages_per_successful_query: ratio(messages_total, c.successes),
        avg_hops_per_successful_query: ratio(c.success_hops, c.successes),
        status_transitions: c.transitions,
        safety: c.safety,
        degenerate: messages_total == 0,
    }
}

impl RunReport {
    pub fn cumulative_files(&self) -> u64 {
        self.cumulative_replication + self.cumulative_download
    }

    /// Share of messages sent by suspended or dormant senders, in percent.
    pub fn free_rider_message_pct(&self) -> f64 {
        let p = self.messages_by_origin_status.percentages();
        p[1] + p[2]
    }
}
