use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::Serialize;

use super::timeline::{Cursor, EventTimeline, StreamId};
use crate::error::{Error, Result};
use crate::graph::{HalfEdgeGraph, RootedGraph};

/// A directed infection channel: its stream object id and the vertex it infects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Channel {
    pub stream: u64,
    pub target: usize,
}

/// What the engine needs from a graph. Lazily grown networks may add vertices inside `channels`.
pub trait Network {
    fn len(&self) -> usize;
    /// Object id of the vertex's recovery stream (also used for its permanent source).
    fn vertex_stream(&self, v: usize) -> u64;
    fn channels(&mut self, v: usize) -> &[Channel];
    /// Depth from the root, or `usize::MAX` if the network has no notion of depth.
    fn depth(&self, v: usize) -> usize;
}

/// Compressed adjacency with stream ids fixed at construction.
#[derive(Debug, Clone)]
pub struct SimGraph {
    ids: Vec<u64>,
    depth: Vec<usize>,
    offsets: Vec<usize>,
    chans: Vec<Channel>,
    root: usize,
}

impl SimGraph {
    fn from_lists(ids: Vec<u64>, depth: Vec<usize>, lists: Vec<Vec<Channel>>, root: usize) -> Self {
        let mut offsets = vec![0];
        let mut chans = Vec::new();
        for l in lists {
            chans.extend(l);
            offsets.push(chans.len());
        }
        Self { ids, depth, offsets, chans, root }
    }

    /// Edge `e = (u, v)` gives channels `2e` (u to v) and `2e + 1` (v to u). Self-loops are inert.
    pub fn from_rooted(g: &RootedGraph) -> Self {
        let n = g.n();
        let mut lists = vec![Vec::new(); n];
        for (e, &(u, v)) in g.edges().iter().enumerate() {
            if u == v {
                continue;
            }
            lists[u].push(Channel { stream: 2 * e as u64, target: v });
            lists[v].push(Channel { stream: 2 * e as u64 + 1, target: u });
        }
        Self::from_lists((0..n as u64).collect(), g.depths().to_vec(), lists, g.root())
    }

    /// Channel stream = sending half-edge index; vertex stream = vertex id.
    pub fn from_half_edge(g: &HalfEdgeGraph) -> Self {
        let all: Vec<usize> = (0..g.n()).collect();
        Self::restrict(g, &all, 0)
    }

    /// The induced subgraph on `vertices` (local index = position), keeping the global stream ids.
    pub fn restrict(g: &HalfEdgeGraph, vertices: &[usize], root_local: usize) -> Self {
        let mut local = std::collections::HashMap::with_capacity(vertices.len());
        for (i, &v) in vertices.iter().enumerate() {
            local.insert(v, i);
        }
        let lists = vertices
            .iter()
            .map(|&v| {
                g.half_edges(v)
                    .filter_map(|h| {
                        let u = g.owner(g.partner(h));
                        if u == v {
                            return None;
                        }
                        local.get(&u).map(|&t| Channel { stream: h as u64, target: t })
                    })
                    .collect()
            })
            .collect();
        Self::from_lists(vertices.iter().map(|&v| v as u64).collect(), vec![usize::MAX; vertices.len()], lists, root_local)
    }

    pub fn root(&self) -> usize {
        self.root
    }
    pub fn global_id(&self, v: usize) -> u64 {
        self.ids[v]
    }
    pub fn out_channels(&self, v: usize) -> &[Channel] {
        &self.chans[self.offsets[v]..self.offsets[v + 1]]
    }
}

impl Network for SimGraph {
    fn len(&self) -> usize {
        self.ids.len()
    }
    fn vertex_stream(&self, v: usize) -> u64 {
        self.ids[v]
    }
    fn channels(&mut self, v: usize) -> &[Channel] {
        &self.chans[self.offsets[v]..self.offsets[v + 1]]
    }
    fn depth(&self, v: usize) -> usize {
        self.depth[v]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    pub lambda: f64,
    /// Recovery rate in (0, 1], realized by thinning the rate-1 recovery streams.
    pub recovery: f64,
    pub horizon: f64,
    pub event_cap: u64,
}

pub const DEFAULT_HORIZON: f64 = 1e4;
pub const DEFAULT_EVENT_CAP: u64 = 100_000_000;

impl SimParams {
    pub fn new(lambda: f64) -> Self {
        Self { lambda, recovery: 1.0, horizon: DEFAULT_HORIZON, event_cap: DEFAULT_EVENT_CAP }
    }
    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }
    pub fn with_event_cap(mut self, cap: u64) -> Self {
        self.event_cap = cap;
        self
    }
    pub fn with_recovery(mut self, r: f64) -> Self {
        self.recovery = r;
        self
    }

    fn check(&self, tl: &EventTimeline) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be finite and nonnegative, got {}", self.lambda)));
        }
        if self.lambda > tl.infection_base() * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!("lambda {} exceeds the timeline base rate {}", self.lambda, tl.infection_base())));
        }
        if !(self.recovery > 0.0 && self.recovery <= 1.0) {
            return Err(Error::InvalidArgument(format!("recovery rate must lie in (0,1], got {}", self.recovery)));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Mode {
    Plain,
    /// A permanently infected parent feeds the root at rate lambda.
    RootAdded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Status {
    Extinct,
    HorizonCensored,
    EventCapCensored,
    /// The observer asked to stop.
    Stopped,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flip {
    pub time: f64,
    pub vertex: usize,
    pub up: bool,
    /// Part of the initial configuration rather than a transition.
    pub initial: bool,
    pub depth: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub status: Status,
    /// Extinction time, horizon, or the time of the last processed event.
    pub end_time: f64,
    pub events: u64,
}

impl Outcome {
    pub fn censored(&self) -> bool {
        matches!(self.status, Status::HorizonCensored | Status::EventCapCensored)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Key {
    time: u64,
    stream: (u8, u64),
}

fn time_key(t: f64) -> u64 {
    // nonnegative floats order like their bit patterns
    debug_assert!(t >= 0.0);
    t.to_bits()
}

const SOURCE: usize = usize::MAX;

struct Engine<'a, N: Network> {
    net: &'a mut N,
    tl: &'a EventTimeline,
    keep_inf: f64,
    keep_rec: f64,
    infected: Vec<bool>,
    epoch: Vec<u32>,
    clocks: Vec<Vec<Cursor>>,
    targets: Vec<Vec<usize>>,
    heap: BinaryHeap<Reverse<(Key, usize, u32, u32)>>,
    count: usize,
    source: Option<Cursor>,
}

impl<'a, N: Network> Engine<'a, N> {
    fn grow(&mut self) {
        let n = self.net.len();
        if self.infected.len() < n {
            self.infected.resize(n, false);
            self.epoch.resize(n, 0);
            self.clocks.resize_with(n, Vec::new);
            self.targets.resize_with(n, Vec::new);
        }
    }

    fn push(&mut self, v: usize, slot: u32, t: f64, sid: StreamId) {
        let e = if v == SOURCE { 0 } else { self.epoch[v] };
        let stream = match sid {
            StreamId::Recovery(k) => (0, k),
            StreamId::Infection(k) => (1, k),
            StreamId::Source(k) => (2, k),
        };
        self.heap.push(Reverse((Key { time: time_key(t), stream }, v, slot, e)));
    }

    fn infect(&mut self, v: usize, t: f64) {
        self.infected[v] = true;
        self.count += 1;
        self.epoch[v] = self.epoch[v].wrapping_add(1);
        let vs = self.net.vertex_stream(v);
        let chans: Vec<Channel> = self.net.channels(v).to_vec();
        self.grow();
        let mut clocks = Vec::with_capacity(chans.len() + 1);
        let rec = self.tl.cursor(StreamId::Recovery(vs), t, self.keep_rec);
        let rt = rec.peek();
        clocks.push(rec);
        self.push(v, 0, rt, StreamId::Recovery(vs));
        let mut targets = Vec::with_capacity(chans.len());
        if self.keep_inf > 0.0 {
            for (i, c) in chans.iter().enumerate() {
                let cur = self.tl.cursor(StreamId::Infection(c.stream), t, self.keep_inf);
                let ct = cur.peek();
                clocks.push(cur);
                targets.push(c.target);
                self.push(v, i as u32 + 1, ct, StreamId::Infection(c.stream));
            }
        }
        self.clocks[v] = clocks;
        self.targets[v] = targets;
    }
}

/// Runs the contact process from `init` at time `t0` until extinction, horizon, event cap or an observer stop.
///
/// The observer sees every flip, the initial infections first (flagged `initial`); returning `true` stops the run.
/// Equal timestamps are ordered by stream kind and id.
pub fn run<N: Network, O: FnMut(&Flip) -> bool>(
    net: &mut N,
    tl: &EventTimeline,
    params: &SimParams,
    init: &[usize],
    mode: Mode,
    root: usize,
    t0: f64,
    mut observer: O,
) -> Result<Outcome> {
    params.check(tl)?;
    let keep_inf = params.lambda / tl.infection_base();
    let mut eng = Engine {
        net,
        tl,
        keep_inf: keep_inf.min(1.0),
        keep_rec: params.recovery,
        infected: Vec::new(),
        epoch: Vec::new(),
        clocks: Vec::new(),
        targets: Vec::new(),
        heap: BinaryHeap::new(),
        count: 0,
        source: None,
    };
    eng.grow();
    let horizon = t0 + params.horizon;
    for &v in init {
        if v >= eng.infected.len() {
            return Err(Error::InvalidArgument(format!("initial vertex {v} outside the network")));
        }
        if eng.infected[v] {
            continue;
        }
        eng.infect(v, t0);
        let flip = Flip { time: t0, vertex: v, up: true, initial: true, depth: eng.net.depth(v) };
        if observer(&flip) {
            return Ok(Outcome { status: Status::Stopped, end_time: t0, events: 0 });
        }
    }
    if eng.count == 0 {
        return Ok(Outcome { status: Status::Extinct, end_time: t0, events: 0 });
    }
    let source_id = StreamId::Source(eng.net.vertex_stream(root));
    if mode == Mode::RootAdded && eng.keep_inf > 0.0 {
        let cur = tl.cursor(source_id, t0, eng.keep_inf);
        let st = cur.peek();
        eng.source = Some(cur);
        eng.push(SOURCE, 0, st, source_id);
    }
    let mut events = 0u64;
    let mut last = t0;
    while let Some(Reverse((key, v, slot, ep))) = eng.heap.pop() {
        let t = f64::from_bits(key.time);
        if v != SOURCE && (ep != eng.epoch[v] || !eng.infected[v]) {
            continue;
        }
        if t > horizon {
            return Ok(Outcome { status: Status::HorizonCensored, end_time: horizon, events });
        }
        events += 1;
        if events > params.event_cap {
            return Ok(Outcome { status: Status::EventCapCensored, end_time: last, events: events - 1 });
        }
        last = t;
        if v == SOURCE {
            let cur = eng.source.as_mut().expect("source clock");
            cur.advance();
            let nt = cur.peek();
            eng.push(SOURCE, 0, nt, source_id);
            if !eng.infected[root] {
                eng.infect(root, t);
                let flip = Flip { time: t, vertex: root, up: true, initial: false, depth: eng.net.depth(root) };
                if observer(&flip) {
                    return Ok(Outcome { status: Status::Stopped, end_time: t, events });
                }
            }
            continue;
        }
        if slot == 0 {
            eng.infected[v] = false;
            eng.count -= 1;
            eng.epoch[v] = eng.epoch[v].wrapping_add(1);
            eng.clocks[v].clear();
            eng.targets[v].clear();
            let flip = Flip { time: t, vertex: v, up: false, initial: false, depth: eng.net.depth(v) };
            let stop = observer(&flip);
            if eng.count == 0 {
                return Ok(Outcome { status: Status::Extinct, end_time: t, events });
            }
            if stop {
                return Ok(Outcome { status: Status::Stopped, end_time: t, events });
            }
            continue;
        }
        let i = slot as usize;
        let target = eng.targets[v][i - 1];
        let cur = &mut eng.clocks[v][i];
        cur.advance();
        let nt = cur.peek();
        let sid = StreamId::Infection(key.stream.1);
        eng.push(v, slot, nt, sid);
        if !eng.infected[target] {
            eng.infect(target, t);
            let flip = Flip { time: t, vertex: target, up: true, initial: false, depth: eng.net.depth(target) };
            if observer(&flip) {
                return Ok(Outcome { status: Status::Stopped, end_time: t, events });
            }
        }
    }
    // only reachable when every clock has run dry, which rate-positive streams never do
    Ok(Outcome { status: Status::Extinct, end_time: last, events })
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub initial: Vec<usize>,
    /// (time, vertex, up) transitions after the initial configuration.
    pub flips: Vec<(f64, usize, bool)>,
    pub status: Status,
    pub end_time: f64,
    pub events: u64,
}

/// Full trajectory of one run.
pub fn simulate<N: Network>(net: &mut N, tl: &EventTimeline, params: &SimParams, init: &[usize], mode: Mode, root: usize) -> Result<Trajectory> {
    let mut flips = Vec::new();
    let out = run(net, tl, params, init, mode, root, 0.0, |f| {
        if !f.initial {
            flips.push((f.time, f.vertex, f.up));
        }
        false
    })?;
    let mut initial = init.to_vec();
    initial.sort_unstable();
    initial.dedup();
    Ok(Trajectory { initial, flips, status: out.status, end_time: out.end_time, events: out.events })
}

/// Re-checks the trajectory invariants: flips alternate per vertex, infections have an infected neighbor
/// (or the source, for the root in root-added mode) and recoveries land on kept recovery events.
pub fn validate_trajectory(traj: &Trajectory, g: &SimGraph, tl: &EventTimeline, params: &SimParams, mode: Mode) -> Result<()> {
    let n = g.ids.len();
    let mut state = vec![false; n];
    for &v in &traj.initial {
        state[v] = true;
    }
    let bad = |m: String| Err(Error::Coupling(format!("trajectory invariant: {m}")));
    let mut last_t = 0.0;
    for &(t, v, up) in &traj.flips {
        if t < last_t {
            return bad(format!("time went backwards at {t}"));
        }
        last_t = t;
        if state[v] == up {
            return bad(format!("vertex {v} flipped to its current state at {t}"));
        }
        if up {
            let from_neighbor = (0..n).any(|u| state[u] && g.out_channels(u).iter().any(|c| c.target == v));
            let from_source = mode == Mode::RootAdded && v == g.root;
            if !from_neighbor && !from_source {
                return bad(format!("vertex {v} infected at {t} with no infected neighbor"));
            }
        } else {
            let c = tl.cursor(StreamId::Recovery(g.ids[v]), t * (1.0 - 1e-14) - 1e-300, params.recovery);
            if c.peek() != t {
                return bad(format!("vertex {v} recovered at {t} off its recovery stream"));
            }
        }
        state[v] = up;
    }
    if traj.status == Status::Extinct && state.iter().any(|&s| s) {
        return bad("extinct status with infected vertices".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphKind;
    use crate::seed::derive_seed;

    fn edge() -> SimGraph {
        SimGraph::from_rooted(&RootedGraph::new(2, vec![(0, 1)], 0, GraphKind::GwTree).unwrap())
    }

    fn tl(i: u64) -> EventTimeline {
        EventTimeline::new(&derive_seed(5, &["engine".into(), i.into()]), 2.0).unwrap()
    }

    #[test]
    fn empty_init_is_immediately_extinct() {
        let mut g = edge();
        let t = simulate(&mut g, &tl(0), &SimParams::new(1.0), &[], Mode::Plain, 0).unwrap();
        assert_eq!(t.status, Status::Extinct);
        assert_eq!(t.end_time, 0.0);
    }

    #[test]
    fn trajectories_satisfy_invariants() {
        let mut g = edge();
        let p = SimParams::new(1.5);
        for i in 0..200 {
            let tline = tl(i);
            for mode in [Mode::Plain, Mode::RootAdded] {
                let t = simulate(&mut g, &tline, &p, &[0], mode, 0).unwrap();
                assert_eq!(t.status, Status::Extinct);
                validate_trajectory(&t, &g, &tline, &p, mode).unwrap();
            }
        }
    }

    #[test]
    fn lambda_above_base_rejected() {
        let mut g = edge();
        assert!(simulate(&mut g, &tl(0), &SimParams::new(3.0), &[0], Mode::Plain, 0).is_err());
    }

    #[test]
    fn horizon_censoring_is_flagged() {
        let mut g = edge();
        let p = SimParams::new(2.0).with_horizon(0.01);
        let mut censored = 0;
        for i in 0..50 {
            let t = simulate(&mut g, &tl(i), &p, &[0, 1], Mode::Plain, 0).unwrap();
            if t.status == Status::HorizonCensored {
                censored += 1;
                assert_eq!(t.end_time, 0.01);
            }
        }
        assert!(censored > 40);
    }

    #[test]
    fn event_cap_censoring_is_flagged() {
        let mut g = edge();
        let p = SimParams::new(2.0).with_event_cap(1);
        let t = simulate(&mut g, &tl(1), &p, &[0, 1], Mode::Plain, 0).unwrap();
        assert_eq!(t.status, Status::EventCapCensored);
    }
}
