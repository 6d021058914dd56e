//! The transfer digraph of a deal and its well-formedness test.

use std::collections::{BTreeMap, BTreeSet};

use crate::deal::DealSpec;
use crate::ids::PartyId;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Digraph {
    pub vertices: Vec<PartyId>,
    pub arcs: BTreeSet<(PartyId, PartyId)>,
}

impl Digraph {
    pub fn new(vertices: Vec<PartyId>, arcs: impl IntoIterator<Item = (PartyId, PartyId)>) -> Self {
        Self {
            vertices,
            arcs: arcs.into_iter().collect(),
        }
    }

    fn reach(&self, start: &PartyId, forward: bool) -> BTreeSet<PartyId> {
        let mut adj: BTreeMap<&PartyId, Vec<&PartyId>> = BTreeMap::new();
        for (a, b) in &self.arcs {
            let (from, to) = if forward { (a, b) } else { (b, a) };
            adj.entry(from).or_default().push(to);
        }
        let mut seen = BTreeSet::from([start.clone()]);
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &w in adj.get(v).into_iter().flatten() {
                if seen.insert(w.clone()) {
                    stack.push(w);
                }
            }
        }
        seen
    }

    /// Every vertex reaches, and is reached from, the first vertex.
    pub fn is_strongly_connected(&self) -> bool {
        let Some(root) = self.vertices.first() else {
            return true;
        };
        let all: BTreeSet<PartyId> = self.vertices.iter().cloned().collect();
        self.reach(root, true) == all && self.reach(root, false) == all
    }
}

pub fn build_digraph(deal: &DealSpec) -> Digraph {
    Digraph::new(
        deal.parties.clone(),
        deal.transfers
            .iter()
            .map(|t| (t.from.clone(), t.to.clone())),
    )
}

/// No free riders: the transfer digraph is strongly connected.
pub fn is_well_formed(deal: &DealSpec) -> bool {
    build_digraph(deal).is_strongly_connected()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deal::tests::ticket_deal;
    use proptest::prelude::*;

    fn p(s: &str) -> PartyId {
        PartyId::new(s)
    }

    #[test]
    fn ticket_deal_arcs() {
        let g = build_digraph(&ticket_deal());
        let want: BTreeSet<_> = [
            ("alice", "bob"),
            ("alice", "carol"),
            ("bob", "alice"),
            ("carol", "alice"),
        ]
        .into_iter()
        .map(|(a, b)| (p(a), p(b)))
        .collect();
        assert_eq!(g.arcs, want);
        assert!(is_well_formed(&ticket_deal()));
    }

    #[test]
    fn one_arc_is_not_strongly_connected() {
        let g = Digraph::new(vec![p("a"), p("b")], [(p("a"), p("b"))]);
        assert!(!g.is_strongly_connected());
    }

    #[test]
    fn cycle_and_singleton() {
        let g = Digraph::new(
            vec![p("a"), p("b"), p("c")],
            [(p("a"), p("b")), (p("b"), p("c")), (p("c"), p("a"))],
        );
        assert!(g.is_strongly_connected());
        assert!(Digraph::new(vec![p("a")], []).is_strongly_connected());
    }

    /// All-pairs closure by repeated squaring of the adjacency relation.
    fn closure_oracle(n: usize, arcs: &[(usize, usize)]) -> bool {
        let mut r = vec![vec![false; n]; n];
        for (i, row) in r.iter_mut().enumerate() {
            row[i] = true;
        }
        for &(a, b) in arcs {
            r[a][b] = true;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if r[i][k] && r[k][j] {
                        r[i][j] = true;
                    }
                }
            }
        }
        r.iter().all(|row| row.iter().all(|&x| x))
    }

    proptest! {
        #[test]
        fn agrees_with_closure_oracle(n in 1usize..=6, raw in prop::collection::vec((0usize..6, 0usize..6), 0..20)) {
            let arcs: Vec<(usize, usize)> = raw.into_iter().map(|(a, b)| (a % n, b % n)).filter(|(a, b)| a != b).collect();
            let names: Vec<PartyId> = (0..n).map(|i| p(&format!("p{i}"))).collect();
            let g = Digraph::new(names.clone(), arcs.iter().map(|&(a, b)| (names[a].clone(), names[b].clone())));
            prop_assert_eq!(g.is_strongly_connected(), closure_oracle(n, &arcs));
        }
    }
}
