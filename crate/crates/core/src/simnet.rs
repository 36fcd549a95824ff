//! Virtual message-passing fabric.
//!
//! `P` rank programs are written as `async` blocks and driven by a
//! single-threaded cooperative scheduler: each round polls every unfinished
//! rank in ascending order, and a rank only yields when it waits on a
//! receive with nothing queued. A round in which no message moves and no
//! rank finishes means every live rank is blocked, which is reported as a
//! deadlock.
//!
//! The ledger counts 4 bytes per payload value on each `(source, dest)`
//! link and on each logical channel, the high-water mark of accounted
//! floats per rank, and the sample points each rank touched.

use std::cell::RefCell;
use std::collections::{BTreeMap, VecDeque};
use std::future::Future;
use std::pin::Pin;
use std::rc::Rc;
use std::task::{Context, Poll, Waker};

use serde::{Deserialize, Serialize};

use crate::config::FLOAT_BYTES;
use crate::error::{Error, Result};

/// Logical traffic class used to split the byte ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    /// Data or resamples flowing out of the root.
    DataOut,
    /// Results flowing back to the root.
    ResultsBack,
    /// Verification side channel (sharded strategy's per-sample counts).
    Verification,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::DataOut, Channel::ResultsBack, Channel::Verification];

    pub fn name(self) -> &'static str {
        match self {
            Channel::DataOut => "data_out",
            Channel::ResultsBack => "results_back",
            Channel::Verification => "verification",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessStats {
    pub peak_floats: u64,
    pub resident_floats: u64,
    pub points_processed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FabricLedger {
    pub bytes_by_link: BTreeMap<(usize, usize), u64>,
    pub bytes_by_channel: BTreeMap<Channel, u64>,
    pub total_bytes: u64,
    pub messages: u64,
    pub per_process: Vec<ProcessStats>,
}

impl FabricLedger {
    fn new(size: usize) -> Self {
        FabricLedger {
            bytes_by_link: BTreeMap::new(),
            bytes_by_channel: Channel::ALL.iter().map(|&c| (c, 0)).collect(),
            total_bytes: 0,
            messages: 0,
            per_process: vec![
                ProcessStats { peak_floats: 0, resident_floats: 0, points_processed: 0 };
                size
            ],
        }
    }

    pub fn channel_bytes(&self, channel: Channel) -> u64 {
        self.bytes_by_channel.get(&channel).copied().unwrap_or(0)
    }

    pub fn link_bytes(&self, source: usize, dest: usize) -> u64 {
        self.bytes_by_link.get(&(source, dest)).copied().unwrap_or(0)
    }

    pub fn peak_floats(&self) -> Vec<u64> {
        self.per_process.iter().map(|p| p.peak_floats).collect()
    }

    pub fn points(&self) -> Vec<u64> {
        self.per_process.iter().map(|p| p.points_processed).collect()
    }
}

#[derive(Debug)]
struct Message {
    payload: Vec<f64>,
}

#[derive(Debug)]
struct FabricState {
    size: usize,
    /// Indexed `source * size + dest`.
    queues: Vec<VecDeque<Message>>,
    blocked: Vec<Option<usize>>,
    ledger: FabricLedger,
    memory_cap: Option<u64>,
    events: u64,
}

impl FabricState {
    fn check_rank(&self, rank: usize, role: &str) -> Result<()> {
        if rank >= self.size {
            return Err(Error::Protocol(format!(
                "{role} rank {rank} out of range for {} processes",
                self.size
            )));
        }
        Ok(())
    }

    fn alloc(&mut self, rank: usize, floats: u64) -> Result<()> {
        let proc_stats = &mut self.ledger.per_process[rank];
        let requested = proc_stats.resident_floats + floats;
        if let Some(cap) = self.memory_cap {
            if requested > cap {
                return Err(Error::Infeasible { rank, requested, cap });
            }
        }
        proc_stats.resident_floats = requested;
        proc_stats.peak_floats = proc_stats.peak_floats.max(requested);
        Ok(())
    }

    fn free(&mut self, rank: usize, floats: u64) -> Result<()> {
        let proc_stats = &mut self.ledger.per_process[rank];
        if floats > proc_stats.resident_floats {
            return Err(Error::Accounting {
                rank,
                message: format!("freeing {floats} floats with only {} resident", proc_stats.resident_floats),
            });
        }
        proc_stats.resident_floats -= floats;
        Ok(())
    }
}

/// Handle a rank program uses to talk to the fabric.
#[derive(Debug, Clone)]
pub struct Comm {
    rank: usize,
    state: Rc<RefCell<FabricState>>,
}

impl Comm {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn size(&self) -> usize {
        self.state.borrow().size
    }

    pub fn is_root(&self) -> bool {
        self.rank == 0
    }

    /// Non-blocking send; credits `4 * payload.len()` bytes to the link and
    /// to `channel`.
    pub fn send(&self, to: usize, channel: Channel, payload: Vec<f64>) -> Result<()> {
        let mut st = self.state.borrow_mut();
        st.check_rank(to, "destination")?;
        if to == self.rank {
            return Err(Error::Protocol(format!("rank {to} cannot send to itself")));
        }
        let bytes = FLOAT_BYTES * payload.len() as u64;
        let size = st.size;
        *st.ledger.bytes_by_link.entry((self.rank, to)).or_insert(0) += bytes;
        *st.ledger.bytes_by_channel.entry(channel).or_insert(0) += bytes;
        st.ledger.total_bytes += bytes;
        st.ledger.messages += 1;
        st.queues[self.rank * size + to].push_back(Message { payload });
        st.events += 1;
        Ok(())
    }

    /// Receives the oldest pending message from `from`, yielding while none
    /// is queued. The payload is charged to this rank's resident floats;
    /// release it with [`Comm::free`] once consumed.
    pub fn recv(&self, from: usize) -> Recv {
        Recv { comm: self.clone(), from }
    }

    pub fn alloc(&self, floats: u64) -> Result<()> {
        self.state.borrow_mut().alloc(self.rank, floats)
    }

    pub fn free(&self, floats: u64) -> Result<()> {
        self.state.borrow_mut().free(self.rank, floats)
    }

    pub fn add_points(&self, points: u64) {
        self.state.borrow_mut().ledger.per_process[self.rank].points_processed += points;
    }
}

/// Future returned by [`Comm::recv`].
#[derive(Debug)]
pub struct Recv {
    comm: Comm,
    from: usize,
}

impl Future for Recv {
    type Output = Result<Vec<f64>>;

    fn poll(self: Pin<&mut Self>, _cx: &mut Context<'_>) -> Poll<Self::Output> {
        let at = self.comm.rank;
        let from = self.from;
        let mut st = self.comm.state.borrow_mut();
        if let Err(e) = st.check_rank(from, "source") {
            return Poll::Ready(Err(e));
        }
        if from == at {
            return Poll::Ready(Err(Error::Protocol(format!("rank {at} cannot receive from itself"))));
        }
        let size = st.size;
        match st.queues[from * size + at].pop_front() {
            Some(msg) => {
                st.blocked[at] = None;
                st.events += 1;
                Poll::Ready(st.alloc(at, msg.payload.len() as u64).map(|()| msg.payload))
            }
            None => {
                st.blocked[at] = Some(from);
                Poll::Pending
            }
        }
    }
}

/// A fabric of `size` virtual processes, optionally with a per-process cap
/// on resident floats.
#[derive(Debug, Clone, Copy)]
pub struct Fabric {
    size: usize,
    memory_cap: Option<u64>,
}

impl Fabric {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::Config("fabric needs at least one process".into()));
        }
        Ok(Fabric { size, memory_cap: None })
    }

    pub fn with_memory_cap(mut self, cap: Option<u64>) -> Self {
        self.memory_cap = cap;
        self
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Runs `program` once per rank to completion. Returns each rank's
    /// output (by rank) and the final ledger.
    ///
    /// The first rank error aborts the run. Messages still queued when all
    /// ranks finish are a protocol error.
    pub fn run<F, Fut, T>(&self, program: F) -> Result<(Vec<T>, FabricLedger)>
    where
        F: Fn(Comm) -> Fut,
        Fut: Future<Output = Result<T>>,
    {
        let size = self.size;
        let state = Rc::new(RefCell::new(FabricState {
            size,
            queues: (0..size * size).map(|_| VecDeque::new()).collect(),
            blocked: vec![None; size],
            ledger: FabricLedger::new(size),
            memory_cap: self.memory_cap,
            events: 0,
        }));

        let mut tasks: Vec<Option<Pin<Box<Fut>>>> = (0..size)
            .map(|rank| Some(Box::pin(program(Comm { rank, state: Rc::clone(&state) }))))
            .collect();
        let mut outputs: Vec<Option<T>> = (0..size).map(|_| None).collect();
        let mut cx = Context::from_waker(Waker::noop());
        let mut live = size;

        while live > 0 {
            let events_before = state.borrow().events;
            let mut finished = false;
            for rank in 0..size {
                let Some(task) = tasks[rank].as_mut() else { continue };
                if let Poll::Ready(result) = task.as_mut().poll(&mut cx) {
                    outputs[rank] = Some(result?);
                    tasks[rank] = None;
                    live -= 1;
                    finished = true;
                }
            }
            if live > 0 && !finished && state.borrow().events == events_before {
                let st = state.borrow();
                let blocked = (0..size)
                    .filter(|&r| tasks[r].is_some())
                    .filter_map(|r| st.blocked[r].map(|src| (r, src)))
                    .collect();
                return Err(Error::Deadlock { blocked });
            }
        }
        drop(tasks);

        let st = Rc::try_unwrap(state)
            .map_err(|_| Error::Protocol("rank program leaked a fabric handle".into()))?
            .into_inner();
        let pending: Vec<String> = st
            .queues
            .iter()
            .enumerate()
            .filter(|(_, q)| !q.is_empty())
            .map(|(i, q)| format!("{} from {} to {}", q.len(), i / size, i % size))
            .collect();
        if !pending.is_empty() {
            return Err(Error::Protocol(format!("unconsumed messages at termination: {}", pending.join(", "))));
        }
        Ok((outputs.into_iter().map(|o| o.expect("finished rank has output")).collect(), st.ledger))
    }
}

/// Convenience wrapper: run `program` on a fresh fabric of `size` ranks.
pub fn fabric_run<F, Fut, T>(size: usize, program: F) -> Result<(Vec<T>, FabricLedger)>
where
    F: Fn(Comm) -> Fut,
    Fut: Future<Output = Result<T>>,
{
    Fabric::new(size)?.run(program)
}
