// SPDX-License-Identifier: Apache-2.0

use std::cmp::Ordering;

use super::{InsertOutcome, SchedAlgorithm, SchedError, SchedParams};
use crate::phv::{compare, meta, Phv, PhvOrderKey};

/// Highest `scheduling_order` first; ties by arrival time, ingress port,
/// then sequence number.
#[derive(Debug, Clone)]
pub struct StrictPriority {
    priority_field: Option<String>,
    key: PhvOrderKey,
    /// Sorted, head first.
    residents: Vec<Phv>,
}

impl Default for StrictPriority {
    fn default() -> Self {
        Self {
            priority_field: None,
            key: PhvOrderKey::desc(meta::SCHEDULING_ORDER),
            residents: Vec::new(),
        }
    }
}

impl StrictPriority {
    pub fn order_key() -> PhvOrderKey {
        PhvOrderKey::desc(meta::SCHEDULING_ORDER)
    }

    fn cmp(&self, a: &Phv, b: &Phv) -> Ordering {
        // every stored PHV carries scheduling_order, so compare cannot fail
        compare(a, b, &self.key).unwrap_or(Ordering::Equal)
    }

    /// Sets `scheduling_order`: the configured priority field when valid,
    /// else the value already present, else 0.
    fn stamp(&self, phv: &mut Phv) {
        let from_field = self
            .priority_field
            .as_deref()
            .and_then(|f| phv.get_u128(f).ok());
        match from_field {
            Some(v) => phv.set_uint(meta::SCHEDULING_ORDER, v, 64),
            None if phv.is_valid(meta::SCHEDULING_ORDER) => {}
            None => phv.set_uint(meta::SCHEDULING_ORDER, 0, 64),
        }
    }
}

impl SchedAlgorithm for StrictPriority {
    fn configure(&mut self, params: &SchedParams) -> Result<(), SchedError> {
        self.priority_field = params.priority_field.clone();
        Ok(())
    }

    fn insert(&mut self, mut phv: Phv, capacity: usize) -> InsertOutcome {
        self.stamp(&mut phv);
        let mut evicted = None;
        if self.residents.len() >= capacity {
            match self.residents.last() {
                Some(last) if self.cmp(&phv, last) == Ordering::Less => {
                    evicted = self.residents.pop();
                }
                _ => return InsertOutcome::DroppedSelf(Box::new(phv)),
            }
        }
        let pos = self
            .residents
            .partition_point(|r| self.cmp(r, &phv) == Ordering::Less);
        self.residents.insert(pos, phv);
        match evicted {
            Some(e) => InsertOutcome::Evicted(Box::new(e)),
            None => InsertOutcome::Accepted,
        }
    }

    fn remove(&mut self) -> Option<Phv> {
        if self.residents.is_empty() {
            None
        } else {
            Some(self.residents.remove(0))
        }
    }

    fn len(&self) -> usize {
        self.residents.len()
    }

    fn ordered(&self) -> Vec<&Phv> {
        self.residents.iter().collect()
    }

    fn box_clone(&self) -> Box<dyn SchedAlgorithm> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::tests::pkt;

    fn with_prio(seq: u64, prio: u128) -> Phv {
        let mut p = pkt(seq, 0, 10);
        p.set_uint(meta::SCHEDULING_ORDER, prio, 64);
        p
    }

    #[test]
    fn evicts_lowest_when_outranked() {
        let mut s = StrictPriority::default();
        assert_eq!(s.insert(with_prio(0, 1), 2), InsertOutcome::Accepted);
        assert_eq!(s.insert(with_prio(1, 5), 2), InsertOutcome::Accepted);
        match s.insert(with_prio(2, 9), 2) {
            InsertOutcome::Evicted(e) => assert_eq!(e.seq(), 0),
            other => panic!("{other:?}"),
        }
        assert!(matches!(s.insert(with_prio(3, 2), 2), InsertOutcome::DroppedSelf(_)));
        let order: Vec<u64> = std::iter::from_fn(|| s.remove()).map(|p| p.seq()).collect();
        assert_eq!(order, vec![2, 1]);
    }

    #[test]
    fn pops_in_priority_order() {
        let mut s = StrictPriority::default();
        for (i, p) in [1, 5, 9].into_iter().enumerate() {
            s.insert(with_prio(i as u64, p), 8);
        }
        let prios: Vec<u128> = std::iter::from_fn(|| s.remove())
            .map(|p| p.get_u128(meta::SCHEDULING_ORDER).unwrap())
            .collect();
        assert_eq!(prios, vec![9, 5, 1]);
    }

    #[test]
    fn priority_field_overrides() {
        let mut s = StrictPriority::default();
        s.configure(&SchedParams {
            priority_field: Some("dscp".into()),
            ..Default::default()
        })
        .unwrap();
        let mut p = with_prio(0, 3);
        p.set_uint("dscp", 7, 6);
        s.insert(p, 4);
        s.insert(pkt(1, 0, 10), 4);
        let heads: Vec<u128> = s
            .ordered()
            .iter()
            .map(|p| p.get_u128(meta::SCHEDULING_ORDER).unwrap())
            .collect();
        assert_eq!(heads, vec![7, 0]);
    }
}
