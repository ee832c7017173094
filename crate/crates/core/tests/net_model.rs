mod common;

use cascade_rl::net_model::{
    connected_components, deenergize, extract_slack_island, parse_case, retain_slack_island, write_case, BusKind,
    CaseError, Network,
};
use common::*;
use proptest::prelude::*;

fn two_bus() -> Network {
    Network {
        base_mva: 100.0,
        buses: vec![bus(1, BusKind::Slack), bus(2, BusKind::Pq)],
        branches: vec![line(1, 2, 0.1, 1.0)],
        generators: vec![gen(1, 2.0, 10.0)],
        loads: vec![load(2, 1.0, 1000.0)],
    }
}

fn chain3() -> Network {
    Network {
        base_mva: 100.0,
        buses: vec![bus(1, BusKind::Slack), bus(2, BusKind::Pq), bus(3, BusKind::Pv)],
        branches: vec![line(1, 2, 0.1, 1.0), line(2, 3, 0.1, 1.0)],
        generators: vec![gen(1, 2.0, 10.0), gen(3, 1.0, 20.0)],
        loads: vec![load(2, 0.5, 2000.0), load(3, 0.7, 2000.0)],
    }
}

#[test]
fn bundled_case_counts() {
    let net = ieee118();
    assert_eq!((net.n_bus(), net.n_branch(), net.n_gen(), net.n_load()), (118, 186, 54, 99));
    assert_eq!(net.buses.iter().filter(|b| b.kind == BusKind::Slack).count(), 1);
}

#[test]
fn empty_text_has_no_bus_section() {
    let err = parse_case("").unwrap_err();
    assert_eq!(err, CaseError::NoBusSection);
    assert_eq!(err.to_string(), "no bus section");
}

#[test]
fn two_bus_round_trip_and_cardinality() {
    let net = two_bus();
    let text = write_case(&net);
    let back = parse_case(&text).unwrap();
    assert_eq!(back, net);
    assert_eq!(back.n_bus(), 2);
    let records = |section: &str| {
        text.split('[')
            .find(|s| s.starts_with(section))
            .unwrap()
            .lines()
            .skip(1)
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .count()
    };
    assert_eq!((records("bus]"), records("branch]"), records("gen]"), records("load]")), (2, 1, 1, 1));
}

#[test]
fn bundled_case_write_is_a_fixpoint() {
    let first = write_case(&ieee118());
    let second = write_case(&parse_case(&first).unwrap());
    assert_eq!(first, second);
}

#[test]
fn out_of_service_flag_survives() {
    let mut net = chain3();
    net.branches[1].in_service = false;
    let text = write_case(&net);
    assert!(text.lines().any(|l| l == "2,3,0,0.1,0,1,0"));
    assert!(!parse_case(&text).unwrap().branches[1].in_service);
}

#[test]
fn blank_shed_cost_takes_default() {
    let text = "[meta]\n100\n[bus]\n1,slack,1,1,0\n2,pq,1,1,0\n[branch]\n1,2,0,0.1,0,1,1\n\
                [gen]\n1,0,2,-1,1,7.5,1\n[load]\n2,1,0,,1\n";
    assert_eq!(parse_case(text).unwrap().loads[0].shed_cost, 750.0);
}

#[test]
fn parse_errors() {
    let base = "[meta]\n100\n[bus]\n1,slack,1,1,0\n2,pq,1,1,0\n";
    let unknown = format!("{base}[branch]\n1,9,0,0.1,0,1,1\n");
    assert!(matches!(parse_case(&unknown), Err(CaseError::UnknownBus { bus: 9, .. })));
    let dup = "[meta]\n100\n[bus]\n1,slack,1,1,0\n1,pq,1,1,0\n";
    assert!(matches!(parse_case(dup), Err(CaseError::DuplicateBus { bus: 1, line: 5 })));
    let zero_x = format!("{base}[branch]\n1,2,0,0,0,1,1\n");
    assert!(matches!(parse_case(&zero_x), Err(CaseError::ZeroReactance { .. })));
    let bad = format!("{base}[branch]\n1,2,0,abc,0,1,1\n");
    assert!(matches!(parse_case(&bad), Err(CaseError::Syntax { line: 7, .. })));
}

#[test]
fn intact_case_is_one_component() {
    let net = ieee118();
    let comps = connected_components(&net);
    assert_eq!(comps.len(), 1);
    assert_eq!(comps[0].len(), 118);
    assert_eq!(bfs_components(&net).len(), 1);
}

#[test]
fn open_line_splits_two_bus_case() {
    let mut net = two_bus();
    net.branches[0].in_service = false;
    let mut comps = connected_components(&net);
    comps.sort();
    assert_eq!(comps, vec![vec![1], vec![2]]);
}

#[test]
fn triangle_minus_one_line_stays_connected() {
    let mut net = chain3();
    net.branches.push(line(1, 3, 0.1, 1.0));
    net.branches[0].in_service = false;
    assert_eq!(connected_components(&net).len(), 1);
}

#[test]
fn slack_island_of_connected_net_is_unchanged() {
    let net = chain3();
    let (kept, shed) = retain_slack_island(&net).unwrap();
    assert_eq!(kept, net);
    assert_eq!(shed, 0.0);
}

#[test]
fn tripped_chain_sheds_the_far_side() {
    let mut net = chain3();
    net.branches[1].in_service = false;
    let (kept, shed) = retain_slack_island(&net).unwrap();
    assert_eq!(shed, 0.7);
    assert_eq!(kept.n_bus(), 2);
    // the generator at bus 3 went with its island
    assert_eq!(kept.generators.len(), 1);
    assert_eq!(kept.generators[0].bus, 1);
    assert_eq!(kept.loads.len(), 1);
}

#[test]
fn missing_slack_is_an_error() {
    let mut net = chain3();
    net.buses[0].kind = BusKind::Pq;
    assert!(retain_slack_island(&net).is_err());
}

#[test]
fn deenergize_keeps_positions() {
    let mut net = chain3();
    net.branches[0].in_service = false;
    let shed = deenergize(&mut net).unwrap();
    assert!((shed - 1.2).abs() < 1e-15);
    assert_eq!((net.buses.len(), net.branches.len(), net.generators.len(), net.loads.len()), (3, 2, 2, 2));
    assert!(!net.branches[1].in_service);
    assert!(net.generators[0].in_service && !net.generators[1].in_service);
    assert!(net.loads.iter().all(|l| !l.in_service));
}

fn arb_net() -> impl Strategy<Value = Network> {
    (any::<u64>(), 1usize..8, 0usize..12, any::<bool>()).prop_map(|(seed, max_bus, extra, lossy)| {
        random_small_net(seed, SmallNetSpec { max_bus, max_branch: max_bus + extra, positive_p_min: true, lossy })
    })
}

/// Random net with a random subset of branches switched out.
fn arb_cut_net() -> impl Strategy<Value = Network> {
    (arb_net(), any::<u64>()).prop_map(|(mut net, mask)| {
        for (i, b) in net.branches.iter_mut().enumerate() {
            if mask >> (i % 64) & 1 == 1 {
                b.in_service = false;
            }
        }
        net
    })
}

proptest! {
    #[test]
    fn write_then_parse_is_identity(net in arb_cut_net()) {
        prop_assert_eq!(parse_case(&write_case(&net)).unwrap(), net);
    }

    #[test]
    fn components_match_bfs(net in arb_cut_net()) {
        let mut comps: Vec<Vec<u32>> = connected_components(&net)
            .into_iter()
            .map(|mut c| { c.sort_unstable(); c })
            .collect();
        comps.sort();
        let mut all: Vec<u32> = comps.iter().flatten().copied().collect();
        all.sort_unstable();
        all.dedup();
        prop_assert_eq!(all.len(), net.n_bus());
        prop_assert_eq!(comps, bfs_components(&net));
    }

    #[test]
    fn slack_island_never_grows(net in arb_cut_net()) {
        let (kept, shed) = retain_slack_island(&net).unwrap();
        prop_assert!(kept.n_bus() <= net.n_bus());
        prop_assert!(kept.n_branch() <= net.n_branch());
        prop_assert!(kept.n_gen() <= net.n_gen());
        prop_assert!(kept.n_load() <= net.n_load());
        prop_assert!(shed >= 0.0);
        let lost: f64 = net.loads.iter().map(|l| l.p_demand).sum::<f64>()
            - kept.loads.iter().map(|l| l.p_demand).sum::<f64>();
        prop_assert!((lost - shed).abs() < 1e-12);
        let island = extract_slack_island(&net).unwrap();
        prop_assert_eq!(connected_components(&island.net).len(), 1);
    }
}
