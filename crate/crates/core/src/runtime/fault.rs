/// Kill one bolt instance after it has processed `after_tuples` inputs. The
/// instance loses its in-memory state and queued tuples and is recreated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KillSpec {
    pub node: String,
    pub instance: usize,
    pub after_tuples: u64,
}

/// Faults injected into a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FaultPlan {
    /// Probability that a single tuple delivery is silently lost.
    pub drop_rate: f64,
    pub kills: Vec<KillSpec>,
}

impl FaultPlan {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn with_drop_rate(mut self, rate: f64) -> Self {
        self.drop_rate = rate.clamp(0.0, 1.0);
        self
    }

    pub fn with_kill(mut self, node: &str, instance: usize, after_tuples: u64) -> Self {
        self.kills.push(KillSpec { node: node.to_string(), instance, after_tuples });
        self
    }

    pub(crate) fn kill_after(&self, node: &str, instance: usize) -> Option<u64> {
        self.kills
            .iter()
            .find(|k| k.node == node && k.instance == instance)
            .map(|k| k.after_tuples)
    }
}
