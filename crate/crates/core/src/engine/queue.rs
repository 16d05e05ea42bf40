use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    MobilityTick,
    TrackingTick,
    ReauthTick(usize),
    ScanComplete(usize),
    ResumeSwitch { track: usize, generation: u64 },
    SwitchComplete { track: usize, generation: u64 },
}

impl Event {
    /// Stable small code used by the trace digest.
    pub fn code(&self) -> u64 {
        match *self {
            Event::MobilityTick => 1,
            Event::TrackingTick => 2,
            Event::ReauthTick(n) => 3 | (n as u64) << 8,
            Event::ScanComplete(n) => 4 | (n as u64) << 8,
            Event::ResumeSwitch { track, generation } => 5 | (track as u64) << 8 | generation << 24,
            Event::SwitchComplete { track, generation } => 6 | (track as u64) << 8 | generation << 24,
        }
    }
}

#[derive(Debug)]
struct Entry {
    time: f64,
    seq: u64,
    event: Event,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // reversed: BinaryHeap is a max-heap and we want the earliest first
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Time-ordered events; equal times pop in insertion order.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Entry>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: f64, event: Event) {
        debug_assert!(time.is_finite());
        self.heap.push(Entry { time, seq: self.next_seq, event });
        self.next_seq += 1;
    }

    pub fn pop(&mut self) -> Option<(f64, Event)> {
        self.heap.pop().map(|e| (e.time, e.event))
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|e| e.time)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
