//! Shared builders, random model generators, and independent oracles for the
//! integration and acceptance suites. Everything is seeded and
//! deterministic.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use causal_core::graph::Diagram;
use causal_core::lang::BaseFormula;
use causal_core::model::{Mechanism, OutcomeKey, Rcm, Scm, Valuation, Value, VarSet, Variable};
use causal_core::Rational;

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn val<'a>(pairs: impl IntoIterator<Item = (&'a str, i64)>) -> Valuation {
    Valuation::from_pairs(pairs.into_iter().map(|(k, v)| (k, Value::Int(v))))
}

pub fn key<'a>(outcome: &str, pairs: impl IntoIterator<Item = (&'a str, i64)>) -> OutcomeKey {
    OutcomeKey::new(outcome, val(pairs))
}

/// Reads a packaged scenario file from the CLI crate's data directory.
pub fn read_data(name: &str) -> String {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../cli/data").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// The instrumental-variable family over binary Z, X, Y: four units with
/// masses (3/4 - eps, 1/4 - eps, eps, eps) and the eight standard keys.
pub fn iv_family(eps: Rational) -> Rcm {
    let vars = VarSet::new([Variable::binary("Z"), Variable::binary("X"), Variable::binary("Y")]);
    let keys = iv_keys();
    let masses = vec![
        ("u0".to_string(), &Rational::new(3, 4) - &eps),
        ("u1".to_string(), &Rational::new(1, 4) - &eps),
        ("u2".to_string(), eps.clone()),
        ("u3".to_string(), eps),
    ];
    let mut r = Rcm::new(vars, masses, keys.clone());
    // Rows: X[Z=1], X[Z=0], Y[X=1,Z=1], Y[X=1,Z=0], Y[X=0,Z=1], Y[X=0,Z=0],
    //       Y[X=1], Y[X=0]
    let rows: [[i64; 8]; 4] = [
        [1, 0, 1, 1, 0, 0, 1, 0],
        [1, 0, 0, 0, 1, 1, 0, 1],
        [1, 0, 0, 0, 0, 0, 1, 0],
        [1, 0, 1, 1, 1, 1, 1, 1],
    ];
    for (unit, row) in ["u0", "u1", "u2", "u3"].iter().zip(rows) {
        for (key, value) in keys.iter().zip(row) {
            r.set_response(key, unit, Value::Int(value));
        }
    }
    r
}

pub fn iv_keys() -> Vec<OutcomeKey> {
    vec![
        key("X", [("Z", 1)]),
        key("X", [("Z", 0)]),
        key("Y", [("X", 1), ("Z", 1)]),
        key("Y", [("X", 1), ("Z", 0)]),
        key("Y", [("X", 0), ("Z", 1)]),
        key("Y", [("X", 0), ("Z", 0)]),
        key("Y", [("X", 1)]),
        key("Y", [("X", 0)]),
    ]
}

/// Random masses over `n` units: positive unless `allow_zero`, exact sum 1.
pub fn random_masses(rng: &mut StdRng, n: usize, allow_zero: bool) -> Vec<Rational> {
    loop {
        let weights: Vec<i64> = (0..n)
            .map(|_| if allow_zero { rng.gen_range(0..=4) } else { rng.gen_range(1..=4) })
            .collect();
        let total: i64 = weights.iter().sum();
        if total > 0 {
            return weights.into_iter().map(|w| Rational::new(w, total)).collect();
        }
    }
}

/// A random effective population model: up to `max_vars` variables with
/// domains of size 2..=3, up to `max_units` units, up to `max_groups`
/// distinct interventions (possibly including the empty one), and random
/// responses with effectiveness enforced.
pub fn random_effective_rcm(
    rng: &mut StdRng,
    max_vars: usize,
    max_units: usize,
    max_groups: usize,
    allow_zero_mass: bool,
) -> Rcm {
    let n_vars = rng.gen_range(1..=max_vars);
    let vars: Vec<Variable> = (0..n_vars)
        .map(|i| {
            let size = rng.gen_range(2..=3);
            Variable::new(format!("V{i}"), (0..size).map(Value::Int))
        })
        .collect();
    let varset = VarSet::new(vars.clone());

    let n_units = rng.gen_range(1..=max_units);
    let masses = random_masses(rng, n_units, allow_zero_mass);
    let units: Vec<(String, Rational)> =
        masses.into_iter().enumerate().map(|(i, m)| (format!("u{i}"), m)).collect();

    // Distinct interventions.
    let n_groups = rng.gen_range(1..=max_groups);
    let mut interventions: BTreeSet<Valuation> = BTreeSet::new();
    let mut attempts = 0;
    while interventions.len() < n_groups && attempts < 50 {
        attempts += 1;
        let mut x = Valuation::empty();
        for var in &vars {
            if rng.gen_bool(0.4) {
                let value = var.domain[rng.gen_range(0..var.domain.len())].clone();
                x.insert(&var.name, value);
            }
        }
        interventions.insert(x);
    }

    let mut outcomes: BTreeSet<OutcomeKey> = BTreeSet::new();
    for x in &interventions {
        let mut any = false;
        for var in &vars {
            if rng.gen_bool(0.6) {
                outcomes.insert(OutcomeKey::new(var.name.clone(), x.clone()));
                any = true;
            }
        }
        if !any {
            let var = &vars[rng.gen_range(0..vars.len())];
            outcomes.insert(OutcomeKey::new(var.name.clone(), x.clone()));
        }
    }

    let mut r = Rcm::new(varset.clone(), units, outcomes.clone());
    for key in &outcomes {
        let domain = varset.domain(&key.outcome).unwrap();
        for unit in r.units.clone() {
            let value = match key.intervention.get(&key.outcome) {
                Some(forced) => forced.clone(),
                None => domain[rng.gen_range(0..domain.len())].clone(),
            };
            r.set_response(key, &unit, value);
        }
    }
    debug_assert!(r.validate().is_clean());
    r
}

/// A random base formula over a model's declared keys.
pub fn random_base_formula(rng: &mut StdRng, r: &Rcm, depth: usize) -> BaseFormula {
    let keys: Vec<&OutcomeKey> = r.outcomes.iter().collect();
    assert!(!keys.is_empty());
    if depth == 0 || rng.gen_bool(0.35) {
        let key = keys[rng.gen_range(0..keys.len())].clone();
        let domain = r.variables.domain(&key.outcome).unwrap();
        let value = domain[rng.gen_range(0..domain.len())].clone();
        return BaseFormula::Atom { key, value };
    }
    let a = random_base_formula(rng, r, depth - 1);
    match rng.gen_range(0..5) {
        0 => a.not(),
        1 => a.and(random_base_formula(rng, r, depth - 1)),
        2 => a.or(random_base_formula(rng, r, depth - 1)),
        3 => a.implies(random_base_formula(rng, r, depth - 1)),
        _ => a.iff(random_base_formula(rng, r, depth - 1)),
    }
}

// ---------------------------------------------------------------------------
// Random structural models
// ---------------------------------------------------------------------------

/// Builds an SCM from a node list, declared parent relation, an assignment
/// of exogenous noise variables, and random tables.
pub struct ScmSpec {
    pub nodes: Vec<String>,
    pub parents: BTreeMap<String, Vec<String>>,
    /// Noise variables per node (may be shared between nodes or empty).
    pub noises: BTreeMap<String, Vec<String>>,
    /// Domain size per noise variable.
    pub noise_sizes: BTreeMap<String, usize>,
}

pub fn random_scm_from_spec(rng: &mut StdRng, spec: &ScmSpec) -> Scm {
    let endogenous = VarSet::new(spec.nodes.iter().map(|n| Variable::binary(n.clone())));
    let exogenous = VarSet::new(
        spec.noise_sizes
            .iter()
            .map(|(name, size)| Variable::new(name.clone(), (0..*size as i64).map(Value::Int))),
    );

    let mut mechanisms = BTreeMap::new();
    for node in &spec.nodes {
        let u_parents = spec.noises.get(node).cloned().unwrap_or_default();
        let v_parents = spec.parents.get(node).cloned().unwrap_or_default();
        let input_names: Vec<&str> = u_parents
            .iter()
            .map(|s| s.as_str())
            .chain(v_parents.iter().map(|s| s.as_str()))
            .collect();
        let mut table = BTreeMap::new();
        for input in joint_valuations(&exogenous, &endogenous, &input_names) {
            table.insert(input, Value::Int(rng.gen_range(0..2)));
        }
        mechanisms.insert(
            node.clone(),
            Mechanism { variable: node.clone(), u_parents, v_parents, table },
        );
    }

    // Product distribution with positive factors.
    let mut exo_mass: BTreeMap<Valuation, Rational> = BTreeMap::new();
    exo_mass.insert(Valuation::empty(), Rational::one());
    for noise in exogenous.iter() {
        let masses = random_masses(rng, noise.domain.len(), false);
        let mut next = BTreeMap::new();
        for (base, base_mass) in &exo_mass {
            for (value, mass) in noise.domain.iter().zip(&masses) {
                let mut v = base.clone();
                v.insert(&noise.name, value.clone());
                next.insert(v, base_mass * mass);
            }
        }
        exo_mass = next;
    }

    let scm = Scm { exogenous, endogenous, mechanisms, exo_mass };
    debug_assert!(scm.validate().is_clean(), "{:?}", scm.validate());
    scm
}

fn joint_valuations(exo: &VarSet, endo: &VarSet, names: &[&str]) -> Vec<Valuation> {
    let mut out = vec![Valuation::empty()];
    for name in names {
        let dom = exo.domain(name).or_else(|| endo.domain(name)).expect("known input");
        let mut next = Vec::with_capacity(out.len() * dom.len());
        for base in &out {
            for value in dom {
                let mut b = base.clone();
                b.insert(name, value.clone());
                next.push(b);
            }
        }
        out = next;
    }
    out
}

/// A random acyclic mixed-diagram model: up to `max_vars` binary variables,
/// a random sparse dag, and up to `max_bidirected` bidirected arcs realized
/// by shared noise. Returns the model with its intended diagram.
pub fn random_mixed_scm(
    rng: &mut StdRng,
    max_vars: usize,
    max_bidirected: usize,
) -> (Scm, Diagram) {
    let n = rng.gen_range(2..=max_vars);
    let nodes: Vec<String> = (0..n).map(|i| format!("V{i}")).collect();

    let mut parents: BTreeMap<String, Vec<String>> =
        nodes.iter().map(|n| (n.clone(), Vec::new())).collect();
    let mut directed = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen_bool(0.35) {
                parents.get_mut(&nodes[j]).unwrap().push(nodes[i].clone());
                directed.push((nodes[i].clone(), nodes[j].clone()));
            }
        }
    }

    // Bidirected arcs via shared noise.
    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    let want = rng.gen_range(0..=max_bidirected.min(n * (n - 1) / 2));
    let mut guard = 0;
    while pairs.len() < want && guard < 50 {
        guard += 1;
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a != b {
            pairs.insert((a.min(b), a.max(b)));
        }
    }

    let mut noises: BTreeMap<String, Vec<String>> =
        nodes.iter().map(|n| (n.clone(), Vec::new())).collect();
    let mut noise_sizes = BTreeMap::new();
    let mut bidirected = Vec::new();
    for (k, (a, b)) in pairs.iter().enumerate() {
        let name = format!("S{k}");
        noise_sizes.insert(name.clone(), 2);
        noises.get_mut(&nodes[*a]).unwrap().push(name.clone());
        noises.get_mut(&nodes[*b]).unwrap().push(name.clone());
        bidirected.push((nodes[*a].clone(), nodes[*b].clone()));
    }
    // Own noise only for variables without shared noise, keeping the
    // exogenous space small; a noiseless variable is fine too.
    for node in &nodes {
        if noises[node].is_empty() && rng.gen_bool(0.8) {
            let name = format!("E{node}");
            noise_sizes.insert(name.clone(), 2);
            noises.get_mut(node).unwrap().push(name);
        }
    }

    let spec = ScmSpec { nodes: nodes.clone(), parents, noises, noise_sizes };
    let scm = random_scm_from_spec(rng, &spec);
    let diagram = Diagram::new(nodes, directed, bidirected).unwrap();
    (scm, diagram)
}

/// The mixed four-node diagram: X -> W -> Z -> Y with W <-> Y.
pub fn four_node_diagram() -> Diagram {
    Diagram::new(
        ["X", "W", "Z", "Y"].map(String::from),
        [("X".into(), "W".into()), ("W".into(), "Z".into()), ("Z".into(), "Y".into())],
        [("W".into(), "Y".into())],
    )
    .unwrap()
}

/// Its directed five-node expansion with the confounder explicit.
pub fn five_node_diagram() -> Diagram {
    Diagram::new(
        ["X", "W", "Z", "Y", "U"].map(String::from),
        [
            ("X".into(), "W".into()),
            ("W".into(), "Z".into()),
            ("Z".into(), "Y".into()),
            ("U".into(), "W".into()),
            ("U".into(), "Y".into()),
        ],
        [],
    )
    .unwrap()
}

/// A random binary model with exactly the mixed four-node diagram.
pub fn random_four_node_scm(rng: &mut StdRng) -> Scm {
    let nodes: Vec<String> = ["X", "W", "Z", "Y"].map(String::from).into();
    let parents: BTreeMap<String, Vec<String>> = [
        ("X".to_string(), vec![]),
        ("W".to_string(), vec!["X".to_string()]),
        ("Z".to_string(), vec!["W".to_string()]),
        ("Y".to_string(), vec!["Z".to_string()]),
    ]
    .into();
    let noises: BTreeMap<String, Vec<String>> = [
        ("X".to_string(), vec!["UX".to_string()]),
        ("W".to_string(), vec!["UWY".to_string()]),
        ("Z".to_string(), vec!["UZ".to_string()]),
        ("Y".to_string(), vec!["UWY".to_string()]),
    ]
    .into();
    let noise_sizes: BTreeMap<String, usize> =
        [("UX".to_string(), 2), ("UWY".to_string(), rng.gen_range(3..=4)), ("UZ".to_string(), 2)]
            .into();
    let spec = ScmSpec { nodes, parents, noises, noise_sizes };
    random_scm_from_spec(rng, &spec)
}

/// A random binary model with exactly the directed five-node diagram:
/// independent noises on a random subset of variables.
pub fn random_five_node_scm(rng: &mut StdRng) -> Scm {
    let nodes: Vec<String> = ["X", "W", "Z", "Y", "U"].map(String::from).into();
    let parents: BTreeMap<String, Vec<String>> = [
        ("X".to_string(), vec![]),
        ("W".to_string(), vec!["X".to_string(), "U".to_string()]),
        ("Z".to_string(), vec!["W".to_string()]),
        ("Y".to_string(), vec!["Z".to_string(), "U".to_string()]),
        ("U".to_string(), vec![]),
    ]
    .into();
    let mut with_noise: Vec<&str> = vec!["X", "W", "Z", "Y", "U"];
    with_noise.shuffle(rng);
    with_noise.truncate(3);
    let mut noises: BTreeMap<String, Vec<String>> =
        nodes.iter().map(|n| (n.clone(), Vec::new())).collect();
    let mut noise_sizes = BTreeMap::new();
    for node in with_noise {
        let name = format!("E{node}");
        noise_sizes.insert(name.clone(), 2);
        noises.get_mut(node).unwrap().push(name);
    }
    let spec = ScmSpec { nodes, parents, noises, noise_sizes };
    random_scm_from_spec(rng, &spec)
}

// ---------------------------------------------------------------------------
// Independent d-separation oracle (moralization)
// ---------------------------------------------------------------------------

/// Classic ancestral-moralization test: restrict to ancestors of the query
/// sets, marry co-parents, drop the conditioning set, and test undirected
/// reachability.
pub fn moral_d_separated(
    node_count: usize,
    edges: &BTreeSet<(usize, usize)>,
    x: &[usize],
    y: &[usize],
    z: &BTreeSet<usize>,
) -> bool {
    let mut relevant: BTreeSet<usize> = x.iter().chain(y.iter()).chain(z.iter()).copied().collect();
    // Ancestor closure.
    loop {
        let mut grew = false;
        for &(from, to) in edges {
            if relevant.contains(&to) && relevant.insert(from) {
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }

    let mut adjacency: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); node_count];
    let connect = |a: usize, b: usize, adjacency: &mut Vec<BTreeSet<usize>>| {
        adjacency[a].insert(b);
        adjacency[b].insert(a);
    };
    for &(from, to) in edges {
        if relevant.contains(&from) && relevant.contains(&to) {
            connect(from, to, &mut adjacency);
        }
    }
    // Marry parents of a common child within the ancestral set.
    for v in relevant.iter().copied() {
        let parents: Vec<usize> = edges
            .iter()
            .filter(|(_, to)| *to == v)
            .map(|(from, _)| *from)
            .filter(|p| relevant.contains(p))
            .collect();
        for i in 0..parents.len() {
            for j in (i + 1)..parents.len() {
                connect(parents[i], parents[j], &mut adjacency);
            }
        }
    }

    // Reachability avoiding the conditioning set.
    let targets: BTreeSet<usize> = y.iter().copied().collect();
    let mut seen: BTreeSet<usize> = BTreeSet::new();
    let mut stack: Vec<usize> = x.iter().copied().filter(|n| !z.contains(n)).collect();
    seen.extend(stack.iter().copied());
    while let Some(v) = stack.pop() {
        if targets.contains(&v) {
            return false;
        }
        for &next in &adjacency[v] {
            if !z.contains(&next) && seen.insert(next) {
                stack.push(next);
            }
        }
    }
    true
}

/// A random directed graph over `n` nodes (acyclic by index order when
/// `acyclic`; arbitrary directions otherwise — d-separation is defined on
/// any directed graph).
pub fn random_digraph(rng: &mut StdRng, n: usize, acyclic: bool) -> BTreeSet<(usize, usize)> {
    let mut edges = BTreeSet::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if acyclic && i > j {
                continue;
            }
            if rng.gen_bool(0.25) {
                edges.insert((i, j));
            }
        }
    }
    edges
}
