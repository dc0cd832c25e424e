// SPDX-License-Identifier: Apache-2.0

use std::collections::VecDeque;

use super::{InsertOutcome, SchedAlgorithm, SchedError, SchedParams};
use crate::phv::Phv;

/// First in, first out by scheduler insertion order. Full queues refuse
/// the arrival.
#[derive(Debug, Clone, Default)]
pub struct Fifo {
    queue: VecDeque<Phv>,
}

impl SchedAlgorithm for Fifo {
    fn configure(&mut self, _params: &SchedParams) -> Result<(), SchedError> {
        Ok(())
    }

    fn insert(&mut self, phv: Phv, capacity: usize) -> InsertOutcome {
        if self.queue.len() >= capacity {
            return InsertOutcome::DroppedSelf(Box::new(phv));
        }
        self.queue.push_back(phv);
        InsertOutcome::Accepted
    }

    fn remove(&mut self) -> Option<Phv> {
        self.queue.pop_front()
    }

    fn len(&self) -> usize {
        self.queue.len()
    }

    fn ordered(&self) -> Vec<&Phv> {
        self.queue.iter().collect()
    }

    fn box_clone(&self) -> Box<dyn SchedAlgorithm> {
        Box::new(self.clone())
    }
}
