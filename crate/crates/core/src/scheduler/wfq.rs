// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use num_rational::Ratio;

use super::{InsertOutcome, SchedAlgorithm, SchedError, SchedParams};
use crate::phv::Phv;

pub type Tag = Ratio<u128>;

/// Self-clocked fair queueing. A packet of `L` bits in flow `f` with weight
/// `w` gets finish tag `max(F_f, V) + L / w`, where `F_f` is the flow's
/// previous tag and `V` is the tag of the packet most recently removed.
/// Service is in tag order; equal tags go in insertion order. Tags are
/// exact rationals. A full queue refuses the arrival.
#[derive(Debug, Clone, Default)]
pub struct Wfq {
    flow_field: String,
    weights: BTreeMap<u128, u64>,
    default_weight: u64,
    virtual_time: Tag,
    last_finish: BTreeMap<u128, Tag>,
    queue: BTreeMap<(Tag, u64), Phv>,
    inserted: u64,
}

impl Wfq {
    pub fn weight(&self, flow: u128) -> u64 {
        self.weights.get(&flow).copied().unwrap_or(self.default_weight)
    }

    pub fn virtual_time(&self) -> Tag {
        self.virtual_time
    }

    /// Flow a PHV belongs to; an invalid flow field maps to flow 0.
    pub fn flow_of(&self, phv: &Phv) -> u128 {
        phv.get_u128(&self.flow_field).unwrap_or(0)
    }

    /// Finish tags of the residents in service order.
    pub fn tags(&self) -> Vec<Tag> {
        self.queue.keys().map(|(t, _)| *t).collect()
    }
}

impl SchedAlgorithm for Wfq {
    fn configure(&mut self, params: &SchedParams) -> Result<(), SchedError> {
        self.weights = params.parsed_weights()?;
        self.default_weight = params.default_weight;
        self.flow_field = params.flow_field().to_string();
        Ok(())
    }

    fn insert(&mut self, phv: Phv, capacity: usize) -> InsertOutcome {
        if self.queue.len() >= capacity {
            return InsertOutcome::DroppedSelf(Box::new(phv));
        }
        let flow = self.flow_of(&phv);
        let start = self
            .last_finish
            .get(&flow)
            .copied()
            .unwrap_or_default()
            .max(self.virtual_time);
        let finish = start + Tag::new(phv.data_buffer.len() as u128, u128::from(self.weight(flow)));
        self.last_finish.insert(flow, finish);
        self.queue.insert((finish, self.inserted), phv);
        self.inserted += 1;
        InsertOutcome::Accepted
    }

    fn remove(&mut self) -> Option<Phv> {
        let ((tag, _), phv) = self.queue.pop_first()?;
        self.virtual_time = tag;
        Some(phv)
    }

    fn len(&self) -> usize {
        self.queue.len()
    }

    fn ordered(&self) -> Vec<&Phv> {
        self.queue.values().collect()
    }

    fn box_clone(&self) -> Box<dyn SchedAlgorithm> {
        Box::new(self.clone())
    }
}
