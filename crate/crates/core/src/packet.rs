//! Real packets and sequence-checked FIFO queues.

use std::collections::VecDeque;

use crate::net::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Packet {
    pub source: u32,
    pub dest: u32,
    /// Slot in which the packet arrived from outside the network.
    pub birth: u64,
}

impl Packet {
    pub fn new(source: NodeId, dest: NodeId, birth: u64) -> Self {
        Self {
            source: source as u32,
            dest: dest as u32,
            birth,
        }
    }

    #[inline]
    pub fn dest(&self) -> NodeId {
        self.dest as usize
    }
}

/// FIFO queue that stamps every packet with an enqueue sequence number and
/// checks on dequeue that numbers come out in order.
#[derive(Clone, Debug, Default)]
pub struct FifoQueue {
    items: VecDeque<(u64, Packet)>,
    next_in: u64,
    next_out: u64,
    order_violations: u64,
}

impl FifoQueue {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, packet: Packet) {
        self.items.push_back((self.next_in, packet));
        self.next_in += 1;
    }

    #[inline]
    pub fn pop(&mut self) -> Option<Packet> {
        let (seq, packet) = self.items.pop_front()?;
        if seq != self.next_out {
            self.order_violations += 1;
        }
        self.next_out = seq + 1;
        Some(packet)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.items.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Packet> {
        self.items.iter().map(|(_, p)| p)
    }

    pub fn order_violations(&self) -> u64 {
        self.order_violations
    }
}

/// A packet that reached its destination.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Delivery {
    pub packet: Packet,
    pub slot: u64,
}

impl Delivery {
    /// Whole slots from birth to the slot of the final hop. A packet born in
    /// slot t is first eligible in t + 1, so the minimum is 1.
    pub fn delay(&self) -> u64 {
        self.slot - self.packet.birth
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifo_order() {
        let mut q = FifoQueue::new();
        for b in 0..5 {
            q.push(Packet::new(0, 1, b));
        }
        let births: Vec<u64> = std::iter::from_fn(|| q.pop()).map(|p| p.birth).collect();
        assert_eq!(births, vec![0, 1, 2, 3, 4]);
        assert_eq!(q.order_violations(), 0);
        assert!(q.pop().is_none());
    }
}
