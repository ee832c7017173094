//! Sectioned-CSV case files.
//!
//! ```text
//! [meta]   base_mva
//! [bus]    id,kind,v_set,v_init,theta_init
//! [branch] from,to,r,x,b,rate,in_service
//! [gen]    bus,p_min,p_max,q_min,q_max,cost,in_service
//! [load]   bus,p_demand,q_demand,shed_cost,in_service
//! ```
//!
//! Power quantities are per-unit on `base_mva`. Lines starting with `#` and
//! blank lines are ignored. A blank `shed_cost` takes the default of
//! [`DEFAULT_SHED_COST_FACTOR`] times the largest generator cost.

use std::collections::HashSet;
use std::fmt::Write as _;

use super::{Branch, Bus, BusKind, CaseError, Generator, Load, Network, DEFAULT_SHED_COST_FACTOR};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Meta,
    Bus,
    Branch,
    Gen,
    Load,
}

struct Fields<'a> {
    line: usize,
    cols: Vec<&'a str>,
}

impl<'a> Fields<'a> {
    fn new(line: usize, text: &'a str, expected: usize) -> Result<Self, CaseError> {
        let cols: Vec<&str> = text.split(',').map(str::trim).collect();
        if cols.len() != expected {
            return Err(CaseError::Syntax { line, msg: format!("expected {expected} fields, found {}", cols.len()) });
        }
        Ok(Fields { line, cols })
    }

    fn f64(&self, i: usize, name: &str) -> Result<f64, CaseError> {
        let v: f64 = self.cols[i]
            .parse()
            .map_err(|_| CaseError::Syntax { line: self.line, msg: format!("invalid {name} `{}`", self.cols[i]) })?;
        if !v.is_finite() {
            return Err(CaseError::Syntax { line: self.line, msg: format!("non-finite {name}") });
        }
        Ok(v)
    }

    fn id(&self, i: usize, name: &str) -> Result<u32, CaseError> {
        self.cols[i]
            .parse()
            .map_err(|_| CaseError::Syntax { line: self.line, msg: format!("invalid {name} `{}`", self.cols[i]) })
    }

    fn flag(&self, i: usize) -> Result<bool, CaseError> {
        match self.cols[i] {
            "1" => Ok(true),
            "0" => Ok(false),
            other => {
                Err(CaseError::Syntax { line: self.line, msg: format!("in_service must be 0 or 1, got `{other}`") })
            }
        }
    }
}

/// Parse and validate a case file.
pub fn parse_case(text: &str) -> Result<Network, CaseError> {
    let mut section = None;
    let mut saw_bus_section = false;
    let mut base_mva = None;
    let mut buses = Vec::new();
    let mut bus_ids = HashSet::new();
    // bus references are resolved after all sections are read
    let mut refs: Vec<(usize, u32)> = Vec::new();
    let mut branches = Vec::new();
    let mut generators = Vec::new();
    let mut loads = Vec::new();
    let mut blank_shed = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if t.starts_with('[') {
            section = Some(match t {
                "[meta]" => Section::Meta,
                "[bus]" => {
                    saw_bus_section = true;
                    Section::Bus
                }
                "[branch]" => Section::Branch,
                "[gen]" => Section::Gen,
                "[load]" => Section::Load,
                other => return Err(CaseError::Syntax { line, msg: format!("unknown section {other}") }),
            });
            continue;
        }
        let Some(sec) = section else {
            return Err(CaseError::Syntax { line, msg: "record outside of any section".into() });
        };
        match sec {
            Section::Meta => {
                if base_mva.is_some() {
                    return Err(CaseError::Syntax { line, msg: "duplicate base_mva".into() });
                }
                base_mva = Some(Fields::new(line, t, 1)?.f64(0, "base_mva")?);
            }
            Section::Bus => {
                let f = Fields::new(line, t, 5)?;
                let id = f.id(0, "bus id")?;
                let kind = f.cols[1].parse::<BusKind>().map_err(|msg| CaseError::Syntax { line, msg })?;
                if !bus_ids.insert(id) {
                    return Err(CaseError::DuplicateBus { line, bus: id });
                }
                buses.push(Bus {
                    id,
                    kind,
                    v_set: f.f64(2, "v_set")?,
                    v_init: f.f64(3, "v_init")?,
                    theta_init: f.f64(4, "theta_init")?,
                });
            }
            Section::Branch => {
                let f = Fields::new(line, t, 7)?;
                let br = Branch {
                    from_bus: f.id(0, "from bus")?,
                    to_bus: f.id(1, "to bus")?,
                    r: f.f64(2, "r")?,
                    x: f.f64(3, "x")?,
                    b_charge: f.f64(4, "b")?,
                    rate: f.f64(5, "rate")?,
                    in_service: f.flag(6)?,
                };
                if br.x == 0.0 {
                    return Err(CaseError::ZeroReactance { line, from: br.from_bus, to: br.to_bus });
                }
                refs.push((line, br.from_bus));
                refs.push((line, br.to_bus));
                branches.push(br);
            }
            Section::Gen => {
                let f = Fields::new(line, t, 7)?;
                let g = Generator {
                    bus: f.id(0, "bus")?,
                    p_min: f.f64(1, "p_min")?,
                    p_max: f.f64(2, "p_max")?,
                    q_min: f.f64(3, "q_min")?,
                    q_max: f.f64(4, "q_max")?,
                    cost: f.f64(5, "cost")?,
                    in_service: f.flag(6)?,
                };
                refs.push((line, g.bus));
                generators.push(g);
            }
            Section::Load => {
                let f = Fields::new(line, t, 5)?;
                let shed_cost = if f.cols[3].is_empty() {
                    blank_shed.push(loads.len());
                    f64::NAN
                } else {
                    f.f64(3, "shed_cost")?
                };
                let l = Load {
                    bus: f.id(0, "bus")?,
                    p_demand: f.f64(1, "p_demand")?,
                    q_demand: f.f64(2, "q_demand")?,
                    shed_cost,
                    in_service: f.flag(4)?,
                };
                refs.push((line, l.bus));
                loads.push(l);
            }
        }
    }

    if !saw_bus_section {
        return Err(CaseError::NoBusSection);
    }
    for (line, bus) in refs {
        if !bus_ids.contains(&bus) {
            return Err(CaseError::UnknownBus { line, bus });
        }
    }
    let base_mva = base_mva.ok_or_else(|| CaseError::Invalid("missing [meta] base_mva".into()))?;
    let mut net = Network { base_mva, buses, branches, generators, loads };
    let default_shed = DEFAULT_SHED_COST_FACTOR * net.max_gen_cost();
    for i in blank_shed {
        net.loads[i].shed_cost = default_shed;
    }
    net.validate()?;
    Ok(net)
}

/// Serialize a network; `parse_case(&write_case(net))` reproduces `net` exactly.
pub fn write_case(net: &Network) -> String {
    let flag = |b: bool| if b { 1 } else { 0 };
    let mut s = String::new();
    // writeln! into a String cannot fail
    let _ = writeln!(s, "[meta]\n{}", net.base_mva);
    let _ = writeln!(s, "[bus]\n# id,kind,v_set,v_init,theta_init");
    for b in &net.buses {
        let _ = writeln!(s, "{},{},{},{},{}", b.id, b.kind.as_str(), b.v_set, b.v_init, b.theta_init);
    }
    let _ = writeln!(s, "[branch]\n# from,to,r,x,b,rate,in_service");
    for b in &net.branches {
        let _ =
            writeln!(s, "{},{},{},{},{},{},{}", b.from_bus, b.to_bus, b.r, b.x, b.b_charge, b.rate, flag(b.in_service));
    }
    let _ = writeln!(s, "[gen]\n# bus,p_min,p_max,q_min,q_max,cost,in_service");
    for g in &net.generators {
        let _ =
            writeln!(s, "{},{},{},{},{},{},{}", g.bus, g.p_min, g.p_max, g.q_min, g.q_max, g.cost, flag(g.in_service));
    }
    let _ = writeln!(s, "[load]\n# bus,p_demand,q_demand,shed_cost,in_service");
    for l in &net.loads {
        let _ = writeln!(s, "{},{},{},{},{}", l.bus, l.p_demand, l.q_demand, l.shed_cost, flag(l.in_service));
    }
    s
}
