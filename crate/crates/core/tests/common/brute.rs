use std::collections::HashMap;

use ctfn::BinaryMap;

/// Maximum matching size by exhaustive search over (pred index, used-gt
/// set); fine for at most a few dozen points per side.
pub fn brute_force_matching(pred: &BinaryMap, gt: &BinaryMap, max_dist: f64) -> usize {
    let p = pred.points();
    let g = gt.points();
    assert!(g.len() <= 64);
    let ok = |a: (usize, usize), b: (usize, usize)| {
        let dy = a.0 as f64 - b.0 as f64;
        let dx = a.1 as f64 - b.1 as f64;
        (dy * dy + dx * dx).sqrt() <= max_dist
    };
    fn go(
        i: usize,
        used: u64,
        p: &[(usize, usize)],
        g: &[(usize, usize)],
        ok: &dyn Fn((usize, usize), (usize, usize)) -> bool,
        memo: &mut HashMap<(usize, u64), usize>,
    ) -> usize {
        if i == p.len() {
            return 0;
        }
        if let Some(&v) = memo.get(&(i, used)) {
            return v;
        }
        let mut best = go(i + 1, used, p, g, ok, memo);
        for (j, &q) in g.iter().enumerate() {
            if used & (1 << j) == 0 && ok(p[i], q) {
                best = best.max(1 + go(i + 1, used | (1 << j), p, g, ok, memo));
            }
        }
        memo.insert((i, used), best);
        best
    }
    go(0, 0, &p, &g, &ok, &mut HashMap::new())
}
