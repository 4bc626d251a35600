mod common;

use common::*;
use neutomo::pairs::all_pairs;
use neutomo::routing::route_all_pairs;
use neutomo::{MetricSemantics, RoutingStrategy, Topology};

const CELLS: [(RoutingStrategy, MetricSemantics); 4] = [
    (RoutingStrategy::Mhr, MetricSemantics::Additive),
    (RoutingStrategy::Mhr, MetricSemantics::Congestion),
    (RoutingStrategy::Bpr, MetricSemantics::Additive),
    (RoutingStrategy::Bpr, MetricSemantics::Congestion),
];

#[test]
fn matches_exhaustive_enumeration() {
    for (g, t) in small_graph_corpus(60, 7, 11).iter().enumerate() {
        for (strategy, semantics) in CELLS {
            let gt = route_all_pairs(t, strategy, semantics).unwrap();
            for p in all_pairs(t.node_count()) {
                let (path, hops, metric) = oracle_route(t, p, strategy, semantics);
                assert_eq!(
                    (gt.hop_count(p), gt.metric(p)),
                    (hops, metric),
                    "graph {g} {strategy:?}/{semantics:?} pair {p}: oracle path {path:?}"
                );
            }
        }
    }
}

#[test]
fn lexicographic_tie_on_a_square() {
    // 0-1-3 and 0-2-3 both cost 2: the lexicographically smaller 0,1,3 wins
    let t = Topology::new(4, vec![(0, 1), (1, 3), (0, 2), (2, 3)], vec![1.0, 1.0, 1.0, 1.0]).unwrap();
    let (path, _, _) = oracle_route(&t, pair(0, 3), RoutingStrategy::Bpr, MetricSemantics::Additive);
    assert_eq!(path, vec![0, 1, 3]);

    // congestion: the direct 0-3 link and the two-hop detour share bottleneck 2, fewer hops wins
    let t = Topology::new(3, vec![(0, 1), (1, 2), (0, 2)], vec![1.0, 2.0, 2.0]).unwrap();
    let gt = route_all_pairs(&t, RoutingStrategy::Bpr, MetricSemantics::Congestion).unwrap();
    assert_eq!((gt.hop_count(pair(0, 2)), gt.metric(pair(0, 2))), (1, 2.0));
}

#[test]
fn bpr_never_worse_than_mhr() {
    for t in small_graph_corpus(40, 8, 5) {
        for semantics in [MetricSemantics::Additive, MetricSemantics::Congestion] {
            let bpr = route_all_pairs(&t, RoutingStrategy::Bpr, semantics).unwrap();
            let mhr = route_all_pairs(&t, RoutingStrategy::Mhr, semantics).unwrap();
            for p in all_pairs(t.node_count()) {
                assert!(bpr.metric(p) <= mhr.metric(p));
                assert!(mhr.hop_count(p) <= bpr.hop_count(p));
            }
        }
    }
}
