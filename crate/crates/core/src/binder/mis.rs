use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Undirected simple graph with sorted adjacency lists.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Graph {
    adj: Vec<Vec<u32>>,
}

impl Graph {
    pub fn new(n: usize) -> Self {
        Graph { adj: vec![Vec::new(); n] }
    }

    /// Builds from an edge list; self-loops are dropped and duplicates merged.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut adj = vec![Vec::new(); n];
        for (a, b) in edges {
            if a != b {
                adj[a as usize].push(b);
                adj[b as usize].push(a);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        Graph { adj }
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn neighbors(&self, v: u32) -> &[u32] {
        &self.adj[v as usize]
    }

    pub fn has_edge(&self, a: u32, b: u32) -> bool {
        self.adj[a as usize].binary_search(&b).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn is_independent(&self, set: &[u32]) -> bool {
        set.iter().enumerate().all(|(i, &a)| set[i + 1..].iter().all(|&b| a != b && !self.has_edge(a, b)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MisOptions {
    /// Graphs up to this many vertices are solved exactly.
    pub exact_threshold: usize,
    pub max_iters: u64,
    /// Iterations without a new best before the search restarts.
    pub stagnation: u64,
    pub tenure: u32,
}

impl Default for MisOptions {
    fn default() -> Self {
        MisOptions { exact_threshold: 30, max_iters: 60_000, stagnation: 4_000, tenure: 7 }
    }
}

/// Exact search for small graphs, tabu search otherwise. Stops early once a
/// set of size `target` is found.
pub fn solve_mis(g: &Graph, opts: &MisOptions, target: Option<usize>, seed: u64) -> Vec<u32> {
    if g.len() <= opts.exact_threshold.min(64) {
        exact_mis(g)
    } else {
        tabu_mis(g, opts, target, seed)
    }
}

/// Branch and bound over 64-bit vertex masks; at most 64 vertices.
pub fn exact_mis(g: &Graph) -> Vec<u32> {
    assert!(g.len() <= 64, "exact MIS supports at most 64 vertices");
    let nbr: Vec<u64> = (0..g.len()).map(|v| g.neighbors(v as u32).iter().fold(0u64, |m, &u| m | 1 << u)).collect();
    let all = if g.len() == 64 { u64::MAX } else { (1u64 << g.len()) - 1 };
    let mut best = (0u32, 0u64);
    branch(&nbr, all, 0, &mut best);
    (0..g.len() as u32).filter(|&v| best.1 >> v & 1 == 1).collect()
}

fn branch(nbr: &[u64], mut cand: u64, mut cur: u64, best: &mut (u32, u64)) {
    // vertices without neighbours among the candidates always join
    let mut rest = cand;
    while rest != 0 {
        let v = rest.trailing_zeros();
        rest &= rest - 1;
        if nbr[v as usize] & cand == 0 {
            cur |= 1 << v;
            cand &= !(1 << v);
        }
    }
    let size = cur.count_ones();
    if cand == 0 {
        if size > best.0 {
            *best = (size, cur);
        }
        return;
    }
    if size + cand.count_ones() <= best.0 {
        return;
    }
    let mut pick = 0;
    let mut pick_deg = 0;
    let mut rest = cand;
    while rest != 0 {
        let v = rest.trailing_zeros();
        rest &= rest - 1;
        let d = (nbr[v as usize] & cand).count_ones();
        if d > pick_deg {
            pick = v;
            pick_deg = d;
        }
    }
    let bit = 1u64 << pick;
    branch(nbr, cand & !bit & !nbr[pick as usize], cur | bit, best);
    branch(nbr, cand & !bit, cur, best);
}

/// Vector-backed set with O(1) insert and remove.
struct IndexSet {
    items: Vec<u32>,
    pos: Vec<u32>,
}

impl IndexSet {
    const NONE: u32 = u32::MAX;

    fn new(n: usize) -> Self {
        IndexSet { items: Vec::new(), pos: vec![Self::NONE; n] }
    }

    fn contains(&self, v: u32) -> bool {
        self.pos[v as usize] != Self::NONE
    }

    fn insert(&mut self, v: u32) {
        if !self.contains(v) {
            self.pos[v as usize] = self.items.len() as u32;
            self.items.push(v);
        }
    }

    fn remove(&mut self, v: u32) {
        let p = self.pos[v as usize];
        if p == Self::NONE {
            return;
        }
        let last = self.items.pop().expect("non-empty");
        if last != v {
            self.items[p as usize] = last;
            self.pos[last as usize] = p;
        }
        self.pos[v as usize] = Self::NONE;
    }

    fn clear(&mut self) {
        for &v in &self.items {
            self.pos[v as usize] = Self::NONE;
        }
        self.items.clear();
    }
}

struct Tabu<'a> {
    g: &'a Graph,
    in_set: IndexSet,
    /// Number of neighbours currently in the set.
    conflicts: Vec<u32>,
    free: IndexSet,
    one_tight: IndexSet,
    tabu_until: Vec<u64>,
}

impl<'a> Tabu<'a> {
    fn new(g: &'a Graph) -> Self {
        let n = g.len();
        let mut free = IndexSet::new(n);
        for v in 0..n as u32 {
            free.insert(v);
        }
        Tabu {
            g,
            in_set: IndexSet::new(n),
            conflicts: vec![0; n],
            free,
            one_tight: IndexSet::new(n),
            tabu_until: vec![0; n],
        }
    }

    fn reclassify(&mut self, v: u32) {
        self.free.remove(v);
        self.one_tight.remove(v);
        if self.in_set.contains(v) {
            return;
        }
        match self.conflicts[v as usize] {
            0 => self.free.insert(v),
            1 => self.one_tight.insert(v),
            _ => {}
        }
    }

    fn add(&mut self, v: u32) {
        self.in_set.insert(v);
        self.reclassify(v);
        for &u in self.g.neighbors(v) {
            self.conflicts[u as usize] += 1;
            self.reclassify(u);
        }
    }

    fn remove(&mut self, v: u32) {
        self.in_set.remove(v);
        for &u in self.g.neighbors(v) {
            self.conflicts[u as usize] -= 1;
            self.reclassify(u);
        }
        self.reclassify(v);
    }

    fn reset(&mut self) {
        self.in_set.clear();
        self.free.clear();
        self.one_tight.clear();
        self.conflicts.iter_mut().for_each(|c| *c = 0);
        for v in 0..self.g.len() as u32 {
            self.free.insert(v);
        }
    }

    /// The unique set member adjacent to a one-tight vertex.
    fn blocker(&self, v: u32) -> u32 {
        *self.g.neighbors(v).iter().find(|&&u| self.in_set.contains(u)).expect("one-tight vertex has a blocker")
    }
}

/// Tabu search with add, swap and drop moves and restarts on stagnation.
pub fn tabu_mis(g: &Graph, opts: &MisOptions, target: Option<usize>, seed: u64) -> Vec<u32> {
    let n = g.len();
    if n == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut st = Tabu::new(g);
    let mut best: Vec<u32> = Vec::new();
    let mut last_gain = 0u64;
    let target = target.unwrap_or(usize::MAX);
    for iter in 1..=opts.max_iters {
        if !st.free.items.is_empty() {
            // among a few sampled free vertices take the one blocking the fewest others
            let mut pick = st.free.items[rng.gen_range(0..st.free.items.len())];
            let mut pick_cost = usize::MAX;
            for _ in 0..4 {
                let v = st.free.items[rng.gen_range(0..st.free.items.len())];
                let cost = g.neighbors(v).iter().filter(|&&u| st.free.contains(u)).count();
                if cost < pick_cost {
                    pick = v;
                    pick_cost = cost;
                }
            }
            st.add(pick);
        } else {
            let allowed: Vec<u32> =
                st.one_tight.items.iter().copied().filter(|&v| st.tabu_until[v as usize] <= iter).collect();
            if let Some(&v) = allowed.choose(&mut rng) {
                let u = st.blocker(v);
                st.remove(u);
                st.add(v);
                st.tabu_until[u as usize] = iter + opts.tenure as u64 + rng.gen_range(0..=st.in_set.items.len() as u64 / 4);
            } else if let Some(&u) = st.in_set.items.choose(&mut rng) {
                st.remove(u);
                st.tabu_until[u as usize] = iter + opts.tenure as u64;
            }
        }
        if st.in_set.items.len() > best.len() {
            best = st.in_set.items.clone();
            last_gain = iter;
            if best.len() >= target {
                break;
            }
        }
        if iter - last_gain > opts.stagnation {
            st.reset();
            st.tabu_until.iter_mut().for_each(|t| *t = 0);
            last_gain = iter;
        }
    }
    best.sort_unstable();
    best
}

/// Outcome of [`cover_search`]: an independent set and whether it holds one
/// vertex from every group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cover {
    pub set: Vec<u32>,
    pub complete: bool,
}

/// Tabu search for an independent set taking exactly one vertex per group.
///
/// Each group always has one chosen vertex; a move re-picks the vertex of a
/// group in conflict, minimising the number of adjacent chosen pairs. Only a
/// few conflicting groups are sampled per step. A move back to a recently left
/// vertex is tabu unless it beats the best count. On failure the best
/// assignment minus its conflicting vertices is returned.
pub fn cover_search(g: &Graph, groups: &[Vec<u32>], opts: &MisOptions, seed: u64) -> Cover {
    if groups.iter().any(Vec::is_empty) {
        return Cover { set: Vec::new(), complete: false };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut st = CoverState::new(g, groups);
    st.restart(&mut rng);
    let mut best = (st.conflicts, st.pick.clone());
    let mut last_gain = 0u64;
    let mut moves: Vec<(usize, u32)> = Vec::new();
    for iter in 1..=opts.max_iters {
        if st.conflicts == 0 {
            break;
        }
        let mut best_delta = i64::MAX;
        moves.clear();
        for _ in 0..SAMPLED_GROUPS {
            let k = st.conflicted.items[rng.gen_range(0..st.conflicted.items.len())] as usize;
            let cur = st.pick[k];
            let here = st.gamma[cur as usize];
            for &v in &groups[k] {
                if v == cur {
                    continue;
                }
                let delta = st.gamma[v as usize] - g.has_edge(v, cur) as i64 - here;
                if st.tabu_until[v as usize] > iter && st.conflicts + delta >= best.0 {
                    continue;
                }
                if delta < best_delta {
                    best_delta = delta;
                    moves.clear();
                }
                if delta == best_delta && !moves.contains(&(k, v)) {
                    moves.push((k, v));
                }
            }
        }
        if let Some(&(k, v)) = moves.choose(&mut rng) {
            let old = st.repick(k, v);
            st.tabu_until[old as usize] =
                iter + opts.tenure as u64 + rng.gen_range(0..=opts.tenure as u64) + st.conflicts as u64;
        }
        if st.conflicts < best.0 {
            best = (st.conflicts, st.pick.clone());
            last_gain = iter;
        } else if iter - last_gain > opts.stagnation {
            st.restart(&mut rng);
            last_gain = iter;
        }
    }
    let (count, mut set) = best;
    if count > 0 {
        // drop the most conflicted vertex until independent
        loop {
            let deg = |v: u32| set.iter().filter(|&&u| g.has_edge(u, v)).count();
            let worst = (0..set.len()).map(|i| (deg(set[i]), i)).max_by_key(|&(d, i)| (d, std::cmp::Reverse(i)));
            match worst {
                Some((d, i)) if d > 0 => {
                    set.swap_remove(i);
                }
                _ => break,
            }
        }
    }
    set.sort_unstable();
    Cover { set, complete: count == 0 }
}

const SAMPLED_GROUPS: usize = 3;

struct CoverState<'a> {
    g: &'a Graph,
    groups: &'a [Vec<u32>],
    group_of: Vec<u32>,
    pick: Vec<u32>,
    /// Chosen vertices adjacent to each vertex.
    gamma: Vec<i64>,
    conflicts: i64,
    /// Groups whose chosen vertex has a chosen neighbour.
    conflicted: IndexSet,
    tabu_until: Vec<u64>,
}

impl<'a> CoverState<'a> {
    fn new(g: &'a Graph, groups: &'a [Vec<u32>]) -> Self {
        let mut group_of = vec![u32::MAX; g.len()];
        for (k, grp) in groups.iter().enumerate() {
            for &v in grp {
                group_of[v as usize] = k as u32;
            }
        }
        CoverState {
            g,
            groups,
            group_of,
            pick: Vec::new(),
            gamma: vec![0; g.len()],
            conflicts: 0,
            conflicted: IndexSet::new(groups.len()),
            tabu_until: vec![0; g.len()],
        }
    }

    fn restart(&mut self, rng: &mut ChaCha8Rng) {
        self.gamma.iter_mut().for_each(|x| *x = 0);
        self.tabu_until.iter_mut().for_each(|t| *t = 0);
        self.pick = self.groups.iter().map(|grp| grp[rng.gen_range(0..grp.len())]).collect();
        for &v in &self.pick {
            for &u in self.g.neighbors(v) {
                self.gamma[u as usize] += 1;
            }
        }
        self.conflicts = self.pick.iter().map(|&v| self.gamma[v as usize]).sum::<i64>() / 2;
        self.conflicted.clear();
        for k in 0..self.pick.len() {
            self.touch(self.pick[k]);
        }
    }

    /// Refreshes the conflicted flag of the group owning `v` if `v` is chosen.
    fn touch(&mut self, v: u32) {
        let k = self.group_of[v as usize];
        if k == u32::MAX || self.pick[k as usize] != v {
            return;
        }
        if self.gamma[v as usize] > 0 {
            self.conflicted.insert(k);
        } else {
            self.conflicted.remove(k);
        }
    }

    fn repick(&mut self, k: usize, v: u32) -> u32 {
        let old = self.pick[k];
        self.conflicts += self.gamma[v as usize] - self.g.has_edge(v, old) as i64 - self.gamma[old as usize];
        self.pick[k] = v;
        for &u in self.g.neighbors(old) {
            self.gamma[u as usize] -= 1;
            self.touch(u);
        }
        for &u in self.g.neighbors(v) {
            self.gamma[u as usize] += 1;
            self.touch(u);
        }
        self.touch(v);
        old
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle(n: u32) -> Graph {
        Graph::from_edges(n as usize, (0..n).map(|i| (i, (i + 1) % n)))
    }

    fn complete(n: u32) -> Graph {
        Graph::from_edges(n as usize, (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))))
    }

    #[test]
    fn edgeless_takes_everything() {
        let g = Graph::new(7);
        assert_eq!(exact_mis(&g).len(), 7);
        assert_eq!(tabu_mis(&g, &MisOptions::default(), None, 1).len(), 7);
    }

    #[test]
    fn five_cycle_has_two() {
        let g = cycle(5);
        assert_eq!(exact_mis(&g).len(), 2);
        assert_eq!(tabu_mis(&g, &MisOptions { max_iters: 500, ..Default::default() }, None, 3).len(), 2);
    }

    #[test]
    fn clique_has_one() {
        let g = complete(4);
        assert_eq!(exact_mis(&g).len(), 1);
        assert_eq!(solve_mis(&g, &MisOptions::default(), None, 0).len(), 1);
    }

    #[test]
    fn results_are_independent() {
        let g = cycle(40);
        let s = tabu_mis(&g, &MisOptions::default(), Some(20), 9);
        assert!(g.is_independent(&s));
        assert_eq!(s.len(), 20);
    }

    #[test]
    fn deterministic_per_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let edges: Vec<(u32, u32)> =
            (0..300).map(|_| (rng.gen_range(0..80), rng.gen_range(0..80))).collect();
        let g = Graph::from_edges(80, edges);
        let opts = MisOptions { max_iters: 3_000, ..Default::default() };
        assert_eq!(tabu_mis(&g, &opts, None, 4), tabu_mis(&g, &opts, None, 4));
    }

    #[test]
    fn from_edges_drops_loops_and_duplicates() {
        let g = Graph::from_edges(3, [(0, 1), (1, 0), (2, 2)]);
        assert_eq!(g.edge_count(), 1);
        assert!(g.has_edge(1, 0));
        assert!(!g.has_edge(2, 2));
    }

    #[test]
    fn cover_picks_one_per_group() {
        // two groups {0,1} and {2,3}; 0-2 and 1-3 conflict
        let g = Graph::from_edges(4, [(0, 1), (2, 3), (0, 2), (1, 3)]);
        let c = cover_search(&g, &[vec![0, 1], vec![2, 3]], &MisOptions::default(), 0);
        assert!(c.complete);
        assert!(c.set == vec![0, 3] || c.set == vec![1, 2]);
    }

    #[test]
    fn impossible_cover_returns_best_partial() {
        let g = Graph::from_edges(4, [(0, 1), (2, 3), (0, 2), (0, 3), (1, 2), (1, 3)]);
        let opts = MisOptions { max_iters: 200, ..Default::default() };
        let c = cover_search(&g, &[vec![0, 1], vec![2, 3]], &opts, 0);
        assert!(!c.complete);
        assert_eq!(c.set.len(), 1);
        assert!(g.is_independent(&c.set));
    }
}
