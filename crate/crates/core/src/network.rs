//! The simulated network: peers, their state, and construction from config.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{QFeedConfig, ScenarioConfig};
use crate::error::Result;
use crate::model::{
    build_catalog, generate_network, place_objects, LoadCounter, NodeId, NodeProfile, ObjectRecord, SharedStore,
    Topology,
};
use crate::qfeed::{init_q_value, NeighborRecord, NeighborTable};
use crate::qrepl::{PopularityTable, ReplQTable, ReplicationList};

/// How a peer behaves towards others.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PeerBehavior {
    Honest,
    /// Hides its files from remote lookups and discards received replicas.
    FreeRider,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerNode {
    pub id: NodeId,
    pub profile: NodeProfile,
    pub up: bool,
    pub behavior: PeerBehavior,
    pub store: SharedStore,
    pub qfeed: NeighborTable,
    pub repl_table: Option<ReplQTable>,
    pub popularity: PopularityTable,
    pub reservations: ReplicationList,
    #[serde(skip)]
    pub load: LoadCounter,
}

impl PeerNode {
    pub fn new(id: NodeId, profile: NodeProfile) -> Self {
        let store = SharedStore::new(profile.storage_capacity);
        Self {
            id,
            profile,
            up: true,
            behavior: PeerBehavior::Honest,
            store,
            qfeed: NeighborTable::default(),
            repl_table: None,
            popularity: PopularityTable::default(),
            reservations: ReplicationList::default(),
            load: LoadCounter::default(),
        }
    }

    pub fn file_count(&self) -> u32 {
        self.store.len() as u32
    }

    /// Whether remote queries can see this node's files.
    pub fn serves_queries(&self) -> bool {
        self.behavior == PeerBehavior::Honest
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub topology: Topology,
    pub catalog: Vec<ObjectRecord>,
    pub nodes: Vec<PeerNode>,
    /// Current simulation tick.
    pub now: u64,
}

impl Network {
    /// Builds topology, catalog, profiles, initial placement, up/down split
    /// and Q-Feed tables. Consumes `rng` identically regardless of which
    /// control or replication scheme later runs on the network.
    pub fn build<R: Rng>(scenario: &ScenarioConfig, qfeed: &QFeedConfig, rng: &mut R) -> Result<Self> {
        let topology = generate_network(scenario.node_count, scenario.avg_degree, rng)?;
        let catalog = build_catalog(
            scenario.object_count,
            scenario.keyword_pool,
            scenario.max_keywords_per_object,
            scenario.keyword_zipf_exponent,
            scenario.object_size,
            rng,
        )?;
        let profiles: Vec<NodeProfile> = (0..scenario.node_count)
            .map(|_| NodeProfile::draw(&scenario.bandwidth_values, &scenario.storage_values, rng))
            .collect();
        let capacities: Vec<u32> = profiles.iter().map(|p| p.storage_capacity).collect();
        let stores = place_objects(&catalog, &capacities, scenario.copies_per_object, rng)?;

        let mut nodes: Vec<PeerNode> = profiles
            .into_iter()
            .zip(stores)
            .enumerate()
            .map(|(i, (profile, store))| {
                let mut node = PeerNode::new(NodeId(i as u32), profile);
                node.store = store;
                for obj in node.store.ids().collect::<Vec<_>>() {
                    node.popularity.track(obj);
                }
                node
            })
            .collect();

        let mut order: Vec<usize> = (0..nodes.len()).collect();
        order.shuffle(rng);
        let up_count = ((scenario.up_fraction * nodes.len() as f64).round() as usize).clamp(1, nodes.len());
        for (rank, idx) in order.iter().enumerate() {
            nodes[*idx].up = rank < up_count;
        }
        let riders = (scenario.free_rider_fraction * nodes.len() as f64).round() as usize;
        order.shuffle(rng);
        for idx in order.iter().take(riders) {
            nodes[*idx].behavior = PeerBehavior::FreeRider;
        }

        let mut net = Self { topology, catalog, nodes, now: 0 };
        net.init_qfeed_tables(qfeed);
        Ok(net)
    }

    /// Assembles a network from explicit parts (tests, worked examples).
    pub fn from_parts(topology: Topology, catalog: Vec<ObjectRecord>, nodes: Vec<PeerNode>) -> Self {
        assert_eq!(topology.node_count(), nodes.len());
        Self { topology, catalog, nodes, now: 0 }
    }

    /// Seeds every peer's neighbor table from the neighbors' advertised
    /// bandwidth and file count.
    pub fn init_qfeed_tables(&mut self, cfg: &QFeedConfig) {
        for i in 0..self.nodes.len() {
            let entries = self
                .topology
                .neighbors(NodeId(i as u32))
                .iter()
                .map(|n| {
                    let peer = &self.nodes[n.index()];
                    let q = init_q_value(&peer.profile, peer.file_count(), cfg);
                    NeighborRecord::new(*n, q, peer.file_count(), cfg)
                })
                .collect();
            self.nodes[i].qfeed = NeighborTable { entries, dispatches: 0 };
        }
    }

    pub fn node(&self, id: NodeId) -> &PeerNode {
        &self.nodes[id.index()]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut PeerNode {
        &mut self.nodes[id.index()]
    }

    pub fn is_up(&self, id: NodeId) -> bool {
        self.nodes[id.index()].up
    }

    pub fn object(&self, id: crate::model::ObjectId) -> &ObjectRecord {
        &self.catalog[id.0 as usize]
    }

    pub fn up_flags(&self) -> Vec<bool> {
        self.nodes.iter().map(|n| n.up).collect()
    }

    pub fn set_up_flags(&mut self, flags: &[bool]) {
        for (node, up) in self.nodes.iter_mut().zip(flags) {
            node.up = *up;
        }
    }

    pub fn up_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.up).count()
    }

    pub fn total_files(&self) -> usize {
        self.nodes.iter().map(|n| n.store.len()).sum()
    }
}
