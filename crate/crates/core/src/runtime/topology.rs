use std::collections::{HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::grouping::Grouping;

pub const DEFAULT_MESSAGE_TIMEOUT_MS: u64 = 5000;
pub const DEFAULT_QUEUE_CAPACITY: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum NodeKind {
    Spout,
    Bolt,
}

/// A named output stream and the grouping-visible fields of its payloads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamDecl {
    pub name: String,
    pub fields: Vec<String>,
}

impl StreamDecl {
    pub fn new(name: &str, fields: &[&str]) -> Self {
        StreamDecl { name: name.to_string(), fields: fields.iter().map(|f| f.to_string()).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NodeSpec {
    pub id: String,
    pub kind: NodeKind,
    pub parallelism: usize,
    pub outputs: Vec<StreamDecl>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub from: String,
    pub stream: String,
    pub to: String,
    pub grouping: Grouping,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TopologySpec {
    pub nodes: Vec<NodeSpec>,
    pub edges: Vec<EdgeSpec>,
    pub message_timeout_ms: u64,
    pub queue_capacity: usize,
}

impl TopologySpec {
    pub fn new() -> Self {
        TopologySpec {
            nodes: Vec::new(),
            edges: Vec::new(),
            message_timeout_ms: DEFAULT_MESSAGE_TIMEOUT_MS,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
        }
    }

    pub fn spout(mut self, id: &str, parallelism: usize, outputs: Vec<StreamDecl>) -> Self {
        self.nodes.push(NodeSpec { id: id.into(), kind: NodeKind::Spout, parallelism, outputs });
        self
    }

    pub fn bolt(mut self, id: &str, parallelism: usize, outputs: Vec<StreamDecl>) -> Self {
        self.nodes.push(NodeSpec { id: id.into(), kind: NodeKind::Bolt, parallelism, outputs });
        self
    }

    pub fn edge(mut self, from: &str, stream: &str, to: &str, grouping: Grouping) -> Self {
        self.edges.push(EdgeSpec { from: from.into(), stream: stream.into(), to: to.into(), grouping });
        self
    }
}

impl Default for TopologySpec {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("cycle detected among nodes {0:?}")]
    CycleDetected(Vec<String>),
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("node {node:?} does not declare output stream {stream:?}")]
    UnknownStream { node: String, stream: String },
    #[error("fields grouping on {from}/{stream} names key {key:?} missing from the stream schema")]
    BadGroupingKey { from: String, stream: String, key: String },
    #[error("node {0:?} has parallelism 0")]
    InvalidParallelism(String),
    #[error("duplicate node id {0:?}")]
    DuplicateNode(String),
    #[error("edge targets spout {0:?}")]
    EdgeIntoSpout(String),
    #[error("duplicate subscription {from}/{stream} -> {to}")]
    DuplicateEdge { from: String, stream: String, to: String },
    #[error("{0} must be positive")]
    InvalidSetting(&'static str),
}

/// A validated topology: node indices, per-node outgoing edges and a
/// topological order.
#[derive(Debug, Clone)]
pub struct Topology {
    spec: TopologySpec,
    index: HashMap<String, usize>,
    order: Vec<usize>,
    out_edges: Vec<Vec<usize>>,
}

impl Topology {
    pub fn build(spec: TopologySpec) -> Result<Topology, TopologyError> {
        if spec.message_timeout_ms == 0 {
            return Err(TopologyError::InvalidSetting("messageTimeoutMs"));
        }
        if spec.queue_capacity == 0 {
            return Err(TopologyError::InvalidSetting("queueCapacity"));
        }
        let mut index = HashMap::new();
        for (i, node) in spec.nodes.iter().enumerate() {
            if node.parallelism == 0 {
                return Err(TopologyError::InvalidParallelism(node.id.clone()));
            }
            if index.insert(node.id.clone(), i).is_some() {
                return Err(TopologyError::DuplicateNode(node.id.clone()));
            }
        }
        let n = spec.nodes.len();
        let mut out_edges = vec![Vec::new(); n];
        let mut indegree = vec![0usize; n];
        let mut seen = std::collections::HashSet::new();
        for (ei, edge) in spec.edges.iter().enumerate() {
            let from = *index.get(&edge.from).ok_or_else(|| TopologyError::UnknownNode(edge.from.clone()))?;
            let to = *index.get(&edge.to).ok_or_else(|| TopologyError::UnknownNode(edge.to.clone()))?;
            if spec.nodes[to].kind == NodeKind::Spout {
                return Err(TopologyError::EdgeIntoSpout(edge.to.clone()));
            }
            let decl = spec.nodes[from]
                .outputs
                .iter()
                .find(|s| s.name == edge.stream)
                .ok_or_else(|| TopologyError::UnknownStream { node: edge.from.clone(), stream: edge.stream.clone() })?;
            if let Grouping::Fields(key) = &edge.grouping {
                if !decl.fields.contains(key) {
                    return Err(TopologyError::BadGroupingKey {
                        from: edge.from.clone(),
                        stream: edge.stream.clone(),
                        key: key.clone(),
                    });
                }
            }
            if !seen.insert((from, edge.stream.clone(), to)) {
                return Err(TopologyError::DuplicateEdge {
                    from: edge.from.clone(),
                    stream: edge.stream.clone(),
                    to: edge.to.clone(),
                });
            }
            out_edges[from].push(ei);
            indegree[to] += 1;
        }

        // Kahn's algorithm; leftover nodes sit on (or behind) a cycle.
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = queue.pop_front() {
            order.push(i);
            for &ei in &out_edges[i] {
                let to = index[&spec.edges[ei].to];
                indegree[to] -= 1;
                if indegree[to] == 0 {
                    queue.push_back(to);
                }
            }
        }
        if order.len() != n {
            let cyclic = (0..n).filter(|&i| indegree[i] > 0).map(|i| spec.nodes[i].id.clone()).collect();
            return Err(TopologyError::CycleDetected(cyclic));
        }
        Ok(Topology { spec, index, order, out_edges })
    }

    pub fn spec(&self) -> &TopologySpec {
        &self.spec
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.spec.nodes
    }

    pub fn edges(&self) -> &[EdgeSpec] {
        &self.spec.edges
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Node indices in topological order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Indices into [`Topology::edges`] leaving `node`.
    pub fn out_edges(&self, node: usize) -> &[usize] {
        &self.out_edges[node]
    }

    /// Total executor instances, i.e. bounded input queues allocated at run time.
    pub fn executor_count(&self) -> usize {
        self.spec.nodes.iter().map(|n| n.parallelism).sum()
    }

    pub fn edge_list(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &i in &self.order {
            let node = &self.spec.nodes[i];
            let kind = match node.kind {
                NodeKind::Spout => "spout",
                NodeKind::Bolt => "bolt",
            };
            writeln!(f, "node {} {} x{}", node.id, kind, node.parallelism)?;
        }
        for &i in &self.order {
            for &ei in &self.out_edges[i] {
                let e = &self.spec.edges[ei];
                writeln!(f, "edge {} -[{}]-> {} {}", e.from, e.stream, e.to, e.grouping)?;
            }
        }
        Ok(())
    }
}
