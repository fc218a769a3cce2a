//! Ball tree over points on the sphere.
//!
//! Balls live in 3-D chord space (unit vectors), which gives a valid lower
//! bound on great-circle distance for pruning. Candidate distances are always
//! recomputed with [`haversine_m`], so results are exact under haversine and
//! identical to a linear scan.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{haversine_m, GeoPoint, EARTH_RADIUS_M};

const LEAF_SIZE: usize = 16;
// Pruning slack in meters, covering rounding differences between the chord
// bound and the haversine distance.
const PRUNE_SLACK_M: f64 = 1e-5;

/// A query hit: caller payload plus haversine distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub item: usize,
    pub distance_m: f64,
}

impl Neighbor {
    /// Ascending distance, then ascending payload.
    pub fn order(&self, other: &Self) -> Ordering {
        self.distance_m
            .total_cmp(&other.distance_m)
            .then(self.item.cmp(&other.item))
    }
}

#[derive(PartialEq)]
struct HeapEntry(Neighbor);

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.order(&other.0)
    }
}

#[derive(Debug, Clone)]
struct Entry {
    item: usize,
    point: GeoPoint,
    xyz: [f64; 3],
}

#[derive(Debug, Clone)]
struct Node {
    center: [f64; 3],
    radius: f64,
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

#[derive(Debug, Clone, Default)]
pub struct BallTree {
    entries: Vec<Entry>,
    nodes: Vec<Node>,
}

fn dist3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn chord_to_m(chord: f64) -> f64 {
    2.0 * EARTH_RADIUS_M * (chord / 2.0).min(1.0).asin()
}

impl BallTree {
    /// Builds from `(payload, point)` pairs. The structure depends only on the
    /// multiset of pairs, not on their order.
    pub fn build(points: impl IntoIterator<Item = (usize, GeoPoint)>) -> Self {
        let mut entries: Vec<Entry> = points
            .into_iter()
            .map(|(item, point)| Entry {
                item,
                point,
                xyz: point.unit_vector(),
            })
            .collect();
        entries.sort_by(|a, b| {
            a.item
                .cmp(&b.item)
                .then(a.point.lon.total_cmp(&b.point.lon))
                .then(a.point.lat.total_cmp(&b.point.lat))
        });
        let mut tree = BallTree {
            entries,
            nodes: Vec::new(),
        };
        if !tree.entries.is_empty() {
            tree.build_node(0, tree.entries.len());
        }
        tree
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let slice = &mut self.entries[start..end];
        let n = slice.len() as f64;
        let mut center = [0.0; 3];
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for e in slice.iter() {
            for d in 0..3 {
                center[d] += e.xyz[d] / n;
                lo[d] = lo[d].min(e.xyz[d]);
                hi[d] = hi[d].max(e.xyz[d]);
            }
        }
        let radius = slice
            .iter()
            .map(|e| dist3(&e.xyz, &center))
            .fold(0.0, f64::max);

        let id = self.nodes.len();
        self.nodes.push(Node {
            center,
            radius,
            start,
            end,
            children: None,
        });
        if end - start > LEAF_SIZE {
            let axis = (0..3)
                .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
                .unwrap();
            let mid = slice.len() / 2;
            slice.select_nth_unstable_by(mid, |a, b| {
                a.xyz[axis].total_cmp(&b.xyz[axis]).then(a.item.cmp(&b.item))
            });
            let left = self.build_node(start, start + mid);
            let right = self.build_node(start + mid, end);
            self.nodes[id].children = Some((left, right));
        }
        id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn lower_bound_m(&self, node: &Node, q: &[f64; 3]) -> f64 {
        chord_to_m((dist3(q, &node.center) - node.radius).max(0.0))
    }

    /// The `k` nearest points by (distance, payload).
    pub fn knn(&self, query: GeoPoint, k: usize) -> Vec<Neighbor> {
        if self.is_empty() || k == 0 {
            return Vec::new();
        }
        let q = query.unit_vector();
        let mut heap: BinaryHeap<HeapEntry> = BinaryHeap::with_capacity(k + 1);
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if heap.len() == k {
                let worst = heap.peek().unwrap().0.distance_m;
                if self.lower_bound_m(node, &q) > worst + PRUNE_SLACK_M {
                    continue;
                }
            }
            match node.children {
                None => {
                    for e in &self.entries[node.start..node.end] {
                        let cand = Neighbor {
                            item: e.item,
                            distance_m: haversine_m(query, e.point),
                        };
                        if heap.len() < k {
                            heap.push(HeapEntry(cand));
                        } else if cand.order(&heap.peek().unwrap().0) == Ordering::Less {
                            heap.pop();
                            heap.push(HeapEntry(cand));
                        }
                    }
                }
                Some((l, r)) => {
                    let dl = self.lower_bound_m(&self.nodes[l], &q);
                    let dr = self.lower_bound_m(&self.nodes[r], &q);
                    // nearer child popped first
                    if dl <= dr {
                        stack.push(r);
                        stack.push(l);
                    } else {
                        stack.push(l);
                        stack.push(r);
                    }
                }
            }
        }
        let mut out: Vec<Neighbor> = heap.into_iter().map(|h| h.0).collect();
        out.sort_by(Neighbor::order);
        out
    }

    /// All points with haversine distance <= `radius_m`, sorted.
    pub fn within(&self, query: GeoPoint, radius_m: f64) -> Vec<Neighbor> {
        let mut out = Vec::new();
        if self.is_empty() {
            return out;
        }
        let q = query.unit_vector();
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if self.lower_bound_m(node, &q) > radius_m + PRUNE_SLACK_M {
                continue;
            }
            match node.children {
                None => {
                    for e in &self.entries[node.start..node.end] {
                        let d = haversine_m(query, e.point);
                        if d <= radius_m {
                            out.push(Neighbor {
                                item: e.item,
                                distance_m: d,
                            });
                        }
                    }
                }
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
            }
        }
        out.sort_by(Neighbor::order);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(points: &[(usize, GeoPoint)], q: GeoPoint) -> Vec<Neighbor> {
        let mut all: Vec<Neighbor> = points
            .iter()
            .map(|&(item, p)| Neighbor {
                item,
                distance_m: haversine_m(q, p),
            })
            .collect();
        all.sort_by(Neighbor::order);
        all
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<(usize, GeoPoint)> {
        (0..n)
            .map(|i| {
                (
                    i,
                    GeoPoint {
                        lon: rng.random_range(139.0..139.2),
                        lat: rng.random_range(35.15..35.3),
                    },
                )
            })
            .collect()
    }

    #[test]
    fn knn_and_radius_match_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1usize, 5, 17, 100, 2000] {
            let pts = random_points(&mut rng, n);
            let tree = BallTree::build(pts.clone());
            for _ in 0..20 {
                let q = GeoPoint {
                    lon: rng.random_range(139.0..139.2),
                    lat: rng.random_range(35.15..35.3),
                };
                let all = brute(&pts, q);
                for k in [1, 3, 40] {
                    assert_eq!(tree.knn(q, k), all[..k.min(n)].to_vec());
                }
                let r = rng.random_range(50.0..4000.0);
                let expect: Vec<_> = all.iter().copied().filter(|x| x.distance_m <= r).collect();
                assert_eq!(tree.within(q, r), expect);
            }
        }
    }

    #[test]
    fn duplicates_tie_break_by_payload() {
        let p = GeoPoint { lon: 139.1, lat: 35.2 };
        let pts: Vec<_> = (0..40).rev().map(|i| (i, p)).collect();
        let tree = BallTree::build(pts);
        let got = tree.knn(GeoPoint { lon: 139.11, lat: 35.2 }, 5);
        assert_eq!(got.iter().map(|n| n.item).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn empty_tree() {
        let tree = BallTree::build(Vec::new());
        assert!(tree.knn(GeoPoint { lon: 0.0, lat: 0.0 }, 3).is_empty());
        assert!(tree.within(GeoPoint { lon: 0.0, lat: 0.0 }, 3.0).is_empty());
    }
}
