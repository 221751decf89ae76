use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::map::BinaryMap;

/// Matched-pixel counts of a one-to-one boundary correspondence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MatchCounts {
    pub tp_pred: usize,
    pub tp_gt: usize,
}

/// Which predicted and ground-truth pixels (in [`BinaryMap::points`]
/// order) take part in a maximum matching.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Correspondence {
    pub pred_points: Vec<(usize, usize)>,
    pub pred_matched: Vec<bool>,
    pub gt_matched: Vec<bool>,
}

impl Correspondence {
    pub fn counts(&self) -> MatchCounts {
        MatchCounts {
            tp_pred: self.pred_matched.iter().filter(|m| **m).count(),
            tp_gt: self.gt_matched.iter().filter(|m| **m).count(),
        }
    }
}

const UNMATCHED: usize = usize::MAX;

/// Maximum-cardinality bipartite matching (Hopcroft–Karp).
struct HopcroftKarp<'a> {
    adj: &'a [Vec<usize>],
    pair_left: Vec<usize>,
    pair_right: Vec<usize>,
    dist: Vec<usize>,
}

impl<'a> HopcroftKarp<'a> {
    fn new(adj: &'a [Vec<usize>], n_right: usize) -> Self {
        HopcroftKarp {
            adj,
            pair_left: vec![UNMATCHED; adj.len()],
            pair_right: vec![UNMATCHED; n_right],
            dist: vec![0; adj.len()],
        }
    }

    /// Layers free left vertices; true if an augmenting path exists.
    fn bfs(&mut self) -> bool {
        let mut queue = VecDeque::new();
        for (u, d) in self.dist.iter_mut().enumerate() {
            if self.pair_left[u] == UNMATCHED {
                *d = 0;
                queue.push_back(u);
            } else {
                *d = usize::MAX;
            }
        }
        let mut found = false;
        while let Some(u) = queue.pop_front() {
            for &v in &self.adj[u] {
                let w = self.pair_right[v];
                if w == UNMATCHED {
                    found = true;
                } else if self.dist[w] == usize::MAX {
                    self.dist[w] = self.dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        found
    }

    /// Iterative layered DFS from a free left vertex.
    fn augment(&mut self, root: usize, next_edge: &mut [usize]) -> bool {
        let mut stack = vec![root];
        while let Some(&u) = stack.last() {
            if next_edge[u] == self.adj[u].len() {
                self.dist[u] = usize::MAX;
                stack.pop();
                continue;
            }
            let v = self.adj[u][next_edge[u]];
            next_edge[u] += 1;
            let w = self.pair_right[v];
            if w == UNMATCHED {
                // flip the path: every stacked vertex takes the edge it
                // last advanced along
                for &x in stack.iter().rev() {
                    let y = self.adj[x][next_edge[x] - 1];
                    self.pair_left[x] = y;
                    self.pair_right[y] = x;
                }
                return true;
            }
            if self.dist[w] == self.dist[u] + 1 {
                stack.push(w);
            }
        }
        false
    }

    fn run(mut self) -> (Vec<usize>, Vec<usize>) {
        while self.bfs() {
            let mut next_edge = vec![0; self.adj.len()];
            for u in 0..self.adj.len() {
                if self.pair_left[u] == UNMATCHED {
                    self.augment(u, &mut next_edge);
                }
            }
        }
        (self.pair_left, self.pair_right)
    }
}

/// Optimal one-to-one correspondence between predicted and ground-truth
/// boundary pixels no further than `max_dist` apart (Euclidean, in pixels).
pub fn correspond(pred: &BinaryMap, gt: &BinaryMap, max_dist: f64) -> Result<Correspondence> {
    if pred.height() != gt.height() || pred.width() != gt.width() {
        return Err(Error::ShapeMismatch {
            op: "match_boundaries",
            lhs: vec![pred.height(), pred.width()],
            rhs: vec![gt.height(), gt.width()],
        });
    }
    if max_dist.is_nan() || max_dist < 0.0 {
        return Err(Error::InvalidArgument(format!("max_dist {max_dist} must be >= 0")));
    }
    let (h, w) = (gt.height(), gt.width());
    let gt_points = gt.points();
    let mut gt_index = vec![UNMATCHED; h * w];
    for (i, (y, x)) in gt_points.iter().enumerate() {
        gt_index[y * w + x] = i;
    }
    let pred_points = pred.points();
    let r = max_dist.floor() as isize;
    let r2 = max_dist * max_dist;
    let adj: Vec<Vec<usize>> = pred_points
        .iter()
        .map(|&(py, px)| {
            let mut nbrs = Vec::new();
            for dy in -r..=r {
                for dx in -r..=r {
                    let (y, x) = (py as isize + dy, px as isize + dx);
                    if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                        continue;
                    }
                    if ((dy * dy + dx * dx) as f64) > r2 {
                        continue;
                    }
                    let g = gt_index[y as usize * w + x as usize];
                    if g != UNMATCHED {
                        nbrs.push(g);
                    }
                }
            }
            nbrs
        })
        .collect();
    let (pair_left, pair_right) = HopcroftKarp::new(&adj, gt_points.len()).run();
    Ok(Correspondence {
        pred_points,
        pred_matched: pair_left.iter().map(|p| *p != UNMATCHED).collect(),
        gt_matched: pair_right.iter().map(|p| *p != UNMATCHED).collect(),
    })
}

/// Matched counts of [`correspond`].
pub fn match_boundaries(pred: &BinaryMap, gt: &BinaryMap, max_dist: f64) -> Result<MatchCounts> {
    Ok(correspond(pred, gt, max_dist)?.counts())
}
