use super::{CaseError, Network};

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet { parent: (0..n).collect(), rank: vec![0; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Component label (root position) per bus position.
fn component_labels(net: &Network) -> Vec<usize> {
    let lookup = net.bus_lookup();
    let mut ds = DisjointSet::new(net.n_bus());
    for br in net.branches.iter().filter(|b| b.in_service) {
        if let (Some(&f), Some(&t)) = (lookup.get(&br.from_bus), lookup.get(&br.to_bus)) {
            ds.union(f, t);
        }
    }
    (0..net.n_bus()).map(|i| ds.find(i)).collect()
}

/// Partition of bus ids by in-service branch connectivity, ordered by the
/// first bus of each component.
pub fn connected_components(net: &Network) -> Vec<Vec<u32>> {
    let labels = component_labels(net);
    let mut order: Vec<usize> = Vec::new();
    let mut groups: std::collections::HashMap<usize, Vec<u32>> = Default::default();
    for (i, &root) in labels.iter().enumerate() {
        groups
            .entry(root)
            .or_insert_with(|| {
                order.push(root);
                Vec::new()
            })
            .push(net.buses[i].id);
    }
    order.into_iter().map(|r| groups.remove(&r).unwrap_or_default()).collect()
}

/// The energized part of a network together with the positions its elements
/// had in the source network.
#[derive(Debug, Clone)]
pub struct Island {
    pub net: Network,
    pub bus_index: Vec<usize>,
    pub branch_index: Vec<usize>,
    pub gen_index: Vec<usize>,
    pub load_index: Vec<usize>,
    /// In-service demand (p.u.) located outside the slack island.
    pub shed_demand: f64,
}

impl Island {
    /// True when nothing was removed.
    pub fn is_whole(&self, source: &Network) -> bool {
        self.bus_index.len() == source.buses.len()
            && self.branch_index.len() == source.branches.len()
            && self.gen_index.len() == source.generators.len()
            && self.load_index.len() == source.loads.len()
    }
}

/// Keep only the component containing the slack bus, recording index maps.
pub fn extract_slack_island(net: &Network) -> Result<Island, CaseError> {
    let slack = net.slack_index().ok_or_else(|| CaseError::Invalid("slack bus missing".into()))?;
    let labels = component_labels(net);
    let root = labels[slack];
    let keep: std::collections::HashSet<u32> =
        net.buses.iter().zip(&labels).filter(|(_, &l)| l == root).map(|(b, _)| b.id).collect();

    let bus_index: Vec<usize> = (0..net.n_bus()).filter(|&i| labels[i] == root).collect();
    let branch_index: Vec<usize> = net
        .branches
        .iter()
        .enumerate()
        .filter(|(_, b)| keep.contains(&b.from_bus) && keep.contains(&b.to_bus))
        .map(|(i, _)| i)
        .collect();
    let gen_index: Vec<usize> =
        net.generators.iter().enumerate().filter(|(_, g)| keep.contains(&g.bus)).map(|(i, _)| i).collect();
    let load_index: Vec<usize> =
        net.loads.iter().enumerate().filter(|(_, l)| keep.contains(&l.bus)).map(|(i, _)| i).collect();
    let shed_demand = net.loads.iter().filter(|l| l.in_service && !keep.contains(&l.bus)).map(|l| l.p_demand).sum();

    let reduced = Network {
        base_mva: net.base_mva,
        buses: bus_index.iter().map(|&i| net.buses[i].clone()).collect(),
        branches: branch_index.iter().map(|&i| net.branches[i].clone()).collect(),
        generators: gen_index.iter().map(|&i| net.generators[i].clone()).collect(),
        loads: load_index.iter().map(|&i| net.loads[i].clone()).collect(),
    };
    Ok(Island { net: reduced, bus_index, branch_index, gen_index, load_index, shed_demand })
}

/// Drop everything outside the slack bus's component and report the demand
/// that was de-energized.
pub fn retain_slack_island(net: &Network) -> Result<(Network, f64), CaseError> {
    let island = extract_slack_island(net)?;
    Ok((island.net, island.shed_demand))
}

/// Take every element outside the slack bus's component out of service in
/// place, keeping all positions. Returns the in-service demand that was
/// de-energized.
pub fn deenergize(net: &mut Network) -> Result<f64, CaseError> {
    let island = extract_slack_island(net)?;
    let mut keep = vec![false; net.branches.len()];
    for &i in &island.branch_index {
        keep[i] = true;
    }
    for (br, k) in net.branches.iter_mut().zip(keep) {
        br.in_service &= k;
    }
    let mut keep = vec![false; net.generators.len()];
    for &i in &island.gen_index {
        keep[i] = true;
    }
    for (g, k) in net.generators.iter_mut().zip(keep) {
        g.in_service &= k;
    }
    let mut keep = vec![false; net.loads.len()];
    for &i in &island.load_index {
        keep[i] = true;
    }
    for (l, k) in net.loads.iter_mut().zip(keep) {
        l.in_service &= k;
    }
    Ok(island.shed_demand)
}
