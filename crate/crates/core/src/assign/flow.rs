//! Successive shortest paths on the user/RB bipartite network.
//!
//! source -> user (cap 1) -> RB (cap 1, cost p*) -> sink (cap 1). Every
//! augmentation adds one unit of flow along a cheapest residual path, so the
//! flow after `j` augmentations is a minimum-cost `j`-matching. Johnson
//! potentials keep reduced costs nonnegative for Dijkstra.

use super::{Assignment, CostMatrix, SolverError};

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    rev: usize,
    cap: u32,
    cost: f64,
}

struct Network {
    adj: Vec<Vec<Edge>>,
    potential: Vec<f64>,
}

impl Network {
    fn new(n: usize) -> Self {
        Self {
            adj: vec![Vec::new(); n],
            potential: vec![0.0; n],
        }
    }

    fn add_edge(&mut self, from: usize, to: usize, cost: f64) {
        let rev_from = self.adj[to].len();
        let rev_to = self.adj[from].len();
        self.adj[from].push(Edge {
            to,
            rev: rev_from,
            cap: 1,
            cost,
        });
        self.adj[to].push(Edge {
            to: from,
            rev: rev_to,
            cap: 0,
            cost: -cost,
        });
    }

    /// Pushes one unit from `s` to `t` along a cheapest residual path.
    /// Returns false when `t` is unreachable.
    fn augment(&mut self, s: usize, t: usize) -> bool {
        let n = self.adj.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
        dist[s] = 0.0;

        // dense Dijkstra; the network is small and nearly complete
        loop {
            let mut u = None;
            for v in 0..n {
                if !done[v] && dist[v].is_finite() && u.is_none_or(|w: usize| dist[v] < dist[w]) {
                    u = Some(v);
                }
            }
            let Some(u) = u else { break };
            done[u] = true;
            if u == t {
                break;
            }
            for (i, e) in self.adj[u].iter().enumerate() {
                if e.cap == 0 || done[e.to] {
                    continue;
                }
                // clamp float noise; reduced costs are nonnegative in exact arithmetic
                let reduced = (e.cost + self.potential[u] - self.potential[e.to]).max(0.0);
                let cand = dist[u] + reduced;
                if cand < dist[e.to] {
                    dist[e.to] = cand;
                    parent[e.to] = Some((u, i));
                }
            }
        }
        if !done[t] {
            return false;
        }
        let dt = dist[t];
        for v in 0..n {
            if done[v] {
                self.potential[v] += dist[v] - dt;
            }
        }
        let mut v = t;
        while let Some((u, i)) = parent[v] {
            let rev = self.adj[u][i].rev;
            self.adj[u][i].cap -= 1;
            self.adj[v][rev].cap += 1;
            v = u;
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSolution {
    pub assignment: Assignment,
    /// Total cost, summed from the matrix in row order.
    pub cost: f64,
}

/// Minimum-cost assignment of exactly `j` allowed pairs.
pub fn solve_k_assignment_flow(costs: &CostMatrix, j: usize) -> Result<FlowSolution, SolverError> {
    let (k, m) = (costs.rows(), costs.cols());
    let max = k.min(m);
    if j > max {
        return Err(SolverError::Cardinality { j, max });
    }
    costs.validate()?;
    if j == 0 {
        return Ok(FlowSolution {
            assignment: Assignment::default(),
            cost: 0.0,
        });
    }

    let source = 0;
    let sink = k + m + 1;
    let mut net = Network::new(k + m + 2);
    for row in 0..k {
        net.add_edge(source, 1 + row, 0.0);
    }
    for (row, col, c) in costs.allowed() {
        net.add_edge(1 + row, 1 + k + col, c);
    }
    for col in 0..m {
        net.add_edge(1 + k + col, sink, 0.0);
    }

    for _ in 0..j {
        if !net.augment(source, sink) {
            return Err(SolverError::Infeasible { j });
        }
    }

    let mut pairs = Vec::with_capacity(j);
    for row in 0..k {
        for e in &net.adj[1 + row] {
            if e.to > k && e.to <= k + m && e.cap == 0 {
                pairs.push((row, e.to - 1 - k));
            }
        }
    }
    let assignment = Assignment::new(pairs);
    let cost = assignment.cost(costs).expect("flow uses allowed arcs only");
    Ok(FlowSolution { assignment, cost })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_cardinality() {
        let c = CostMatrix::dense(&[vec![1.0, 2.0], vec![3.0, 0.0]]);
        let s = solve_k_assignment_flow(&c, 0).unwrap();
        assert!(s.assignment.is_empty());
        assert_eq!(s.cost, 0.0);
    }

    #[test]
    fn two_by_two_full() {
        // 1 + 0 beats 2 + 3
        let c = CostMatrix::dense(&[vec![1.0, 2.0], vec![3.0, 0.0]]);
        let s = solve_k_assignment_flow(&c, 2).unwrap();
        assert_eq!(s.assignment.pairs(), &[(0, 0), (1, 1)]);
        assert_eq!(s.cost, 1.0);
    }

    #[test]
    fn single_pair() {
        let c = CostMatrix::dense(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let s = solve_k_assignment_flow(&c, 1).unwrap();
        assert_eq!(s.assignment.pairs(), &[(0, 0)]);
        assert_eq!(s.cost, 1.0);
    }

    #[test]
    fn rerouting_beats_greedy() {
        // greedy picks (0,0)=1 first, but J=2 optimum is (0,1)+(1,0)=4 vs 1+100
        let c = CostMatrix::dense(&[vec![1.0, 2.0], vec![2.0, 100.0]]);
        let s = solve_k_assignment_flow(&c, 2).unwrap();
        assert_eq!(s.cost, 4.0);
    }

    #[test]
    fn out_of_range_and_infeasible() {
        let c = CostMatrix::from_fn(2, 3, |_, m| (m == 0).then_some(1.0));
        assert_eq!(
            solve_k_assignment_flow(&c, 3),
            Err(SolverError::Cardinality { j: 3, max: 2 })
        );
        assert_eq!(
            solve_k_assignment_flow(&c, 2),
            Err(SolverError::Infeasible { j: 2 })
        );
        assert_eq!(solve_k_assignment_flow(&c, 1).unwrap().cost, 1.0);
    }

    #[test]
    fn rectangular_inputs() {
        let wide = CostMatrix::dense(&[vec![5.0, 1.0, 3.0]]);
        assert_eq!(
            solve_k_assignment_flow(&wide, 1)
                .unwrap()
                .assignment
                .pairs(),
            &[(0, 1)]
        );
        let tall = wide.transpose();
        assert_eq!(
            solve_k_assignment_flow(&tall, 1)
                .unwrap()
                .assignment
                .pairs(),
            &[(1, 0)]
        );
    }
}
