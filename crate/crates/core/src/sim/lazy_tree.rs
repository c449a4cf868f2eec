//! A Galton-Watson tree truncated at a depth, grown only where the process reaches.
//!
//! Vertices are named by a 60-bit hash of their path from the root, so the tree (children counts) and the
//! stream ids are fixed by the tree key alone, whatever order the simulation explores them in. Two runs
//! with the same key and timeline see the same tree and the same events.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::engine::{Channel, Network};
use crate::distributions::OffspringDistribution;
use crate::seed::{mix64, StreamKey};

const MASK: u64 = (1 << 60) - 1;
const CHILD_MUL: u64 = 0x9e37_79b9_7f4a_7c15;

pub struct LazyGwTree<'a> {
    law: &'a OffspringDistribution,
    key: [u8; 32],
    max_depth: usize,
    hash: Vec<u64>,
    depth: Vec<usize>,
    parent_channel: Vec<Option<Channel>>,
    chans: Vec<Option<Vec<Channel>>>,
    cap: usize,
}

impl<'a> LazyGwTree<'a> {
    /// Every vertex, the root included, draws its children from `law`; vertices at `max_depth` have none.
    pub fn new(law: &'a OffspringDistribution, key: &StreamKey, max_depth: usize) -> Self {
        let root = mix64(key.low_u64()) & MASK;
        Self { law, key: *key.key(), max_depth, hash: vec![root], depth: vec![0], parent_channel: vec![None], chans: vec![None], cap: usize::MAX }
    }

    /// Refuse to grow past `cap` vertices; further children are simply not created.
    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn hit_cap(&self) -> bool {
        self.hash.len() >= self.cap
    }

    fn children_count(&self, h: u64) -> usize {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(h);
        self.law.sample(&mut rng)
    }

    fn materialize(&mut self, v: usize) {
        let h = self.hash[v];
        let mut list: Vec<Channel> = self.parent_channel[v].into_iter().collect();
        if self.depth[v] < self.max_depth {
            let k = self.children_count(h);
            for i in 0..k {
                if self.hash.len() >= self.cap {
                    break;
                }
                let hc = mix64(h.wrapping_mul(CHILD_MUL).wrapping_add(i as u64 + 1)) & MASK;
                let c = self.hash.len();
                self.hash.push(hc);
                self.depth.push(self.depth[v] + 1);
                // the edge is named by its child end; direction bit 0 = downward
                self.parent_channel.push(Some(Channel { stream: hc << 1 | 1, target: v }));
                self.chans.push(None);
                list.push(Channel { stream: hc << 1, target: c });
            }
        }
        self.chans[v] = Some(list);
    }
}

impl Network for LazyGwTree<'_> {
    fn len(&self) -> usize {
        self.hash.len()
    }
    fn vertex_stream(&self, v: usize) -> u64 {
        self.hash[v]
    }
    fn channels(&mut self, v: usize) -> &[Channel] {
        if self.chans[v].is_none() {
            self.materialize(v);
        }
        self.chans[v].as_deref().expect("materialized")
    }
    fn depth(&self, v: usize) -> usize {
        self.depth[v]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::derive_seed;
    use crate::sim::{run, EventTimeline, Mode, SimParams};

    #[test]
    fn point_mass_shape() {
        let law = OffspringDistribution::point_mass(2);
        let mut t = LazyGwTree::new(&law, &derive_seed(1, &["lazy".into()]), 3);
        // expand everything breadth first
        let mut v = 0;
        while v < t.len() {
            t.channels(v);
            v += 1;
        }
        assert_eq!(t.len(), 15);
        assert_eq!((0..15).filter(|&v| t.depth(v) == 3).count(), 8);
    }

    #[test]
    fn exploration_order_does_not_change_the_run() {
        let law = OffspringDistribution::poisson(2.0).unwrap();
        let key = derive_seed(2, &["lazy".into()]);
        let tl = EventTimeline::new(&derive_seed(2, &["lazy-tl".into()]), 1.0).unwrap();
        let p = SimParams::new(0.7).with_horizon(50.0);
        let trace = |pre: bool| {
            let mut t = LazyGwTree::new(&law, &key, 6);
            if pre {
                let mut v = 0;
                while v < t.len().min(200) {
                    t.channels(v);
                    v += 1;
                }
            }
            let mut flips = Vec::new();
            run(&mut t, &tl, &p, &[0], Mode::Plain, 0, 0.0, |f| {
                flips.push((f.time, f.up));
                false
            })
            .unwrap();
            flips
        };
        // vertex indices depend on the order of growth, so compare times and directions
        let a = trace(false);
        assert!(a.len() > 2);
        assert_eq!(a, trace(true));
    }
}
