//! Property suites for the module invariants not already exercised by the
//! acceptance criteria: pushforward conservation, marginal consistency,
//! solver agreement, query monotonicity, representability round trips,
//! effectiveness preservation under abstraction, partial-translation
//! fidelity, and the structural inclusion of the independence schema in
//! graphical separation.

mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::*;
use rand::Rng;

use causal_core::abstraction::{is_abstraction, translate_counterfactual, CellTarget, Translation};
use causal_core::graph::{self, SchemaCaps};
use causal_core::lang::{self, parse_formula, query_probability};
use causal_core::model::{OutcomeKey, Rcm, Valuation, Value, VarSet, Variable};
use causal_core::representability::{
    check_principle, find_full_extension, is_representable, represents, Principle, SearchConfig,
};
use causal_core::Rational;

#[test]
fn pushforward_conserves_mass() {
    let mut rng = rng(0x21);
    for _ in 0..100 {
        let r = random_effective_rcm(&mut rng, 3, 4, 3, true);
        assert!(r.cf_distribution().total_mass().is_one());
    }
    for _ in 0..50 {
        let (m, _) = random_mixed_scm(&mut rng, 4, 1);
        let keys: BTreeSet<OutcomeKey> = m.endogenous.names().map(OutcomeKey::plain).collect();
        assert!(m.cf_distribution(&keys).unwrap().total_mass().is_one());
    }
}

#[test]
fn marginalization_commutes_with_restriction() {
    let mut rng = rng(0x22);
    for _ in 0..50 {
        let (m, _) = random_mixed_scm(&mut rng, 4, 1);
        let names: Vec<String> = m.endogenous.names().map(str::to_string).collect();
        let mut keys: BTreeSet<OutcomeKey> =
            names.iter().map(|n| OutcomeKey::plain(n.clone())).collect();
        // A couple of interventional keys too.
        let first = names[0].clone();
        for other in names.iter().skip(1).take(2) {
            keys.insert(OutcomeKey::new(
                other.clone(),
                Valuation::from_pairs([(first.as_str(), Value::Int(1))]),
            ));
        }
        let sub: BTreeSet<OutcomeKey> = keys.iter().take(keys.len() / 2 + 1).cloned().collect();

        let full = m.cf_distribution(&keys).unwrap();
        let direct = m.cf_distribution(&sub).unwrap();
        assert_eq!(full.marginalize(&sub).unwrap(), direct);
    }
}

#[test]
fn structural_outcomes_satisfy_effectiveness() {
    let mut rng = rng(0x23);
    for _ in 0..50 {
        let (m, _) = random_mixed_scm(&mut rng, 4, 1);
        let names: Vec<String> = m.endogenous.names().map(str::to_string).collect();
        for (u, _) in m.support() {
            for name in &names {
                for v in 0..2i64 {
                    let key = OutcomeKey::new(
                        name.clone(),
                        Valuation::from_pairs([(name.as_str(), Value::Int(v))]),
                    );
                    assert_eq!(m.potential_outcome(u, &key).unwrap(), Value::Int(v));
                }
            }
        }
    }
}

/// The solver's fast path must agree with brute-force enumeration of the
/// joint valuation space.
#[test]
fn solver_agrees_with_enumeration() {
    let mut rng = rng(0x24);
    for _ in 0..60 {
        let (m, _) = random_mixed_scm(&mut rng, 4, 1);
        let names: Vec<&str> = m.endogenous.names().collect();
        for (u, _) in m.support().take(2) {
            for _ in 0..4 {
                let mut x = Valuation::empty();
                for name in &names {
                    if rng.gen_bool(0.3) {
                        x.insert(name, Value::Int(rng.gen_range(0..2)));
                    }
                }
                let solved: BTreeSet<Valuation> = m.solve(u, &x).into_iter().collect();
                let brute: BTreeSet<Valuation> = m
                    .endogenous
                    .all_valuations()
                    .into_iter()
                    .filter(|v| {
                        m.endogenous.names().all(|name| {
                            if let Some(forced) = x.get(name) {
                                v.get(name) == Some(forced)
                            } else {
                                let mech = &m.mechanisms[name];
                                mech.apply(u, v) == v.get(name)
                            }
                        })
                    })
                    .collect();
                assert_eq!(solved, brute);
            }
        }
    }
}

/// Entailment (decided by truth tables over the involved keys) implies
/// probability dominance.
#[test]
fn query_probability_is_monotone() {
    let mut rng = rng(0x25);
    let mut checked = 0;
    for _ in 0..400 {
        let r = random_effective_rcm(&mut rng, 2, 3, 2, false);
        let a = random_base_formula(&mut rng, &r, 2);
        let b = random_base_formula(&mut rng, &r, 2);

        let mut keys: BTreeSet<OutcomeKey> = a.keys();
        keys.extend(b.keys());
        let key_list: Vec<OutcomeKey> = keys.into_iter().collect();

        // Truth-table entailment over all joint assignments.
        let mut assignments: Vec<BTreeMap<OutcomeKey, Value>> = vec![BTreeMap::new()];
        for key in &key_list {
            let domain = r.variables.domain(&key.outcome).unwrap();
            let mut next = Vec::new();
            for base in &assignments {
                for value in domain {
                    let mut m = base.clone();
                    m.insert(key.clone(), value.clone());
                    next.push(m);
                }
            }
            assignments = next;
        }
        let entails = assignments.iter().all(|m| {
            !a.eval_with(&|k: &OutcomeKey| m[k].clone())
                || b.eval_with(&|k: &OutcomeKey| m[k].clone())
        });
        if !entails {
            continue;
        }
        checked += 1;
        let d = r.cf_distribution();
        assert!(query_probability(&d, &a).unwrap() <= query_probability(&d, &b).unwrap());
    }
    assert!(checked > 20, "entailment cases too rare: {checked}");
}

/// Round trip: models induced by structural models are representable, and
/// the found witness reproduces their distribution. Models violating a
/// principle on a positive-mass unit never are.
#[test]
fn representability_round_trip_and_necessity() {
    let mut rng = rng(0x26);
    let mut representable_count = 0;
    let mut violating_count = 0;
    for _ in 0..40 {
        // Induced models over two small variables: representable.
        let nodes: Vec<String> = ["A", "B"].map(String::from).into();
        let parents: BTreeMap<String, Vec<String>> =
            [("A".to_string(), vec![]), ("B".to_string(), vec!["A".to_string()])].into();
        let noises: BTreeMap<String, Vec<String>> =
            [("A".to_string(), vec!["EA".to_string()]), ("B".to_string(), vec!["EB".to_string()])]
                .into();
        let noise_sizes: BTreeMap<String, usize> =
            [("EA".to_string(), 2), ("EB".to_string(), 2)].into();
        let m = random_scm_from_spec(&mut rng, &ScmSpec { nodes, parents, noises, noise_sizes });

        let mut keys: BTreeSet<OutcomeKey> = BTreeSet::new();
        keys.insert(OutcomeKey::plain("A"));
        keys.insert(OutcomeKey::plain("B"));
        keys.insert(key("B", [("A", 1)]));
        if rng.gen_bool(0.5) {
            keys.insert(key("B", [("A", 0)]));
        }
        let r = m.represented_rcm(&keys).unwrap();
        let (ok, witness) = is_representable(&r, &SearchConfig::default()).unwrap();
        assert!(ok, "induced model must be representable");
        assert!(represents(&witness.unwrap(), &r).unwrap());
        representable_count += 1;
    }
    for _ in 0..200 {
        let r = random_effective_rcm(&mut rng, 2, 3, 3, false);
        let has_violation = !check_principle(&r, Principle::Composition, false).is_empty()
            || !check_principle(&r, Principle::Reversibility, false).is_empty();
        if !has_violation {
            continue;
        }
        violating_count += 1;
        let result = find_full_extension(&r, &SearchConfig::default()).unwrap();
        assert!(!result.found, "a witnessed violation on a positive-mass unit is decisive");
    }
    assert!(representable_count >= 40 && violating_count >= 5);
}

/// A random constructive translation over a low variable set: random cells
/// (with an occasional discard), random partial surjective value maps.
fn random_translation(rng: &mut rand::rngs::StdRng, low_vars: &VarSet) -> Option<Translation> {
    let low_names: Vec<&str> = low_vars.names().collect();
    let n_high = rng.gen_range(1..=low_names.len());
    let mut cells: BTreeMap<String, CellTarget> = BTreeMap::new();
    let mut members: Vec<Vec<&str>> = vec![Vec::new(); n_high];
    for name in &low_names {
        if rng.gen_bool(0.15) {
            cells.insert(name.to_string(), CellTarget::discard());
        } else {
            let cell = rng.gen_range(0..n_high);
            members[cell].push(name);
            cells.insert(name.to_string(), CellTarget::High(format!("H{cell}")));
        }
    }
    if members.iter().any(|m| m.is_empty()) {
        return None;
    }

    let mut high_vars = Vec::new();
    let mut value_maps = BTreeMap::new();
    for (i, cell_members) in members.iter().enumerate() {
        let cell_space = low_vars.valuations_of(cell_members);
        let high_size = rng.gen_range(2..=2.max(cell_space.len().min(3)));
        let domain: Vec<Value> = (0..high_size as i64).map(Value::Int).collect();
        if cell_space.len() < domain.len() {
            return None;
        }
        // Surjective base: one preimage per value, then random extras.
        let mut space = cell_space.clone();
        use rand::seq::SliceRandom;
        space.shuffle(rng);
        let mut map: BTreeMap<Valuation, Value> = BTreeMap::new();
        for (j, value) in domain.iter().enumerate() {
            map.insert(space[j].clone(), value.clone());
        }
        for input in space.into_iter().skip(domain.len()) {
            if rng.gen_bool(0.6) {
                map.insert(input, domain[rng.gen_range(0..domain.len())].clone());
            }
        }
        high_vars.push(Variable::new(format!("H{i}"), domain));
        value_maps.insert(format!("H{i}"), map);
    }
    let t = Translation {
        low_vars: low_vars.clone(),
        high_vars: VarSet::new(high_vars),
        cells,
        value_maps,
    };
    t.validate().is_clean().then_some(t)
}

/// The fast partial-translation path agrees with the direct preimage
/// enumeration on every partial valuation of random small translations.
#[test]
fn partial_translation_matches_preimage_enumeration() {
    let mut rng = rng(0x27);
    let mut trials = 0;
    while trials < 60 {
        let n_low = rng.gen_range(1..=3);
        let low_vars = VarSet::new((0..n_low).map(|i| {
            let size = rng.gen_range(2..=3);
            Variable::new(format!("L{i}"), (0..size).map(Value::Int))
        }));
        let Some(t) = random_translation(&mut rng, &low_vars) else { continue };
        trials += 1;

        let names: Vec<&str> = low_vars.names().collect();
        for mask in 0..(1u32 << names.len()) {
            let subset: Vec<&str> = names
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, n)| *n)
                .collect();
            for x in low_vars.valuations_of(&subset) {
                assert_eq!(
                    t.translate_partial(&x),
                    t.translate_partial_bruteforce(&x),
                    "translation {t:?} at {x:?}"
                );
            }
        }
    }
}

/// Pushing a low model through a constructive translation produces an
/// effective high model whenever the pushforward is defined, and the
/// pushed mass always sums to one.
#[test]
fn abstraction_preserves_effectiveness() {
    let mut rng = rng(0x28);
    let mut built = 0;
    let mut attempts = 0;
    while built < 60 && attempts < 4000 {
        attempts += 1;
        let low = random_effective_rcm(&mut rng, 3, 3, 2, false);
        let Some(t) = random_translation(&mut rng, &low.variables) else { continue };

        // Translate every unit row; all must be defined and share one high
        // outcome set for a high model to exist.
        let mut high_outcomes: Option<BTreeSet<OutcomeKey>> = None;
        let mut rows: Vec<(String, BTreeMap<OutcomeKey, Value>)> = Vec::new();
        let mut viable = true;
        for unit in &low.units {
            let point = low.unit_point(unit);
            // Probe: translate with an unconstrained target derived from
            // this row's own groups.
            let mut groups: BTreeMap<Valuation, Valuation> = BTreeMap::new();
            for (k, v) in &point {
                groups
                    .entry(k.intervention.clone())
                    .or_insert_with(Valuation::empty)
                    .insert(&k.outcome, v.clone());
            }
            let mut image_keys: BTreeSet<OutcomeKey> = BTreeSet::new();
            let mut ok = true;
            for (x_low, block) in &groups {
                let (Some(x_high), Some(block_high)) =
                    (t.translate_partial(x_low), t.translate_partial(block))
                else {
                    ok = false;
                    break;
                };
                for (name, _) in block_high.iter() {
                    image_keys.insert(OutcomeKey::new(name, x_high.clone()));
                }
            }
            if !ok {
                viable = false;
                break;
            }
            match &high_outcomes {
                None => high_outcomes = Some(image_keys.clone()),
                Some(existing) if *existing != image_keys => {
                    viable = false;
                    break;
                }
                _ => {}
            }
            let result = translate_counterfactual(&t, &point, &image_keys).unwrap();
            let Some(image) = result.image else {
                viable = false;
                break;
            };
            rows.push((unit.clone(), image));
        }
        if !viable {
            continue;
        }
        let outcomes = high_outcomes.unwrap();
        let mut high = Rcm::new(
            t.high_vars.clone(),
            low.units.iter().map(|u| (u.clone(), low.mass(u))).collect(),
            outcomes.iter().cloned(),
        );
        for (unit, image) in &rows {
            for (k, v) in image {
                high.set_response(k, unit, v.clone());
            }
        }
        if !is_abstraction(&high, &low, &t).unwrap() {
            continue;
        }
        built += 1;
        // The pushed distribution is a distribution, and the high model is
        // effective because the low one is.
        assert!(high.cf_distribution().total_mass().is_one());
        assert!(high.validate().effectiveness_violations.is_empty(), "high model not effective");
    }
    assert!(built >= 30, "too few viable abstractions: {built} of {attempts}");
}

/// Every emitted independence pair is separated in the parallel-network
/// reading: copies of the augmented directed graph sharing confounder
/// nodes, with directed in-edges to each outcome node severed.
#[test]
fn independence_schema_pairs_are_graphically_separated() {
    let mut rng = rng(0x29);
    for _ in 0..40 {
        let (_, diagram) = random_mixed_scm(&mut rng, 5, 2);
        let nodes = &diagram.nodes;
        let n = nodes.len();
        let index = |name: &str| nodes.iter().position(|x| x == name).unwrap();

        let cliques: Vec<BTreeSet<String>> =
            diagram.bidirected_cliques().into_iter().filter(|c| c.len() >= 2).collect();

        // Variable-set pairs the schema emits (value enumeration does not
        // affect the graph structure).
        let caps = SchemaCaps::default();
        let domains = VarSet::new(nodes.iter().map(|v| Variable::binary(v.clone())));
        let instances = graph::generate_cfsep_instances(&diagram, &domains, &caps).unwrap();
        let mut pairs: BTreeSet<(BTreeSet<String>, BTreeSet<String>)> = BTreeSet::new();
        for inst in &instances {
            let causal_core::lang::LFormula::Cmp { rhs, .. } = inst else { panic!() };
            let causal_core::lang::ProbTerm::Mul(a, b) = rhs else { panic!() };
            let left: BTreeSet<String> = a.keys().into_iter().map(|k| k.outcome).collect();
            let right: BTreeSet<String> = b.keys().into_iter().map(|k| k.outcome).collect();
            pairs.insert((left, right));
        }

        for (left, right) in pairs {
            // One copy of the diagram per outcome variable; clique nodes
            // are shared across copies. In each copy the in-edges of its
            // own outcome node are severed (its parents are intervened).
            let atoms: Vec<&String> = left.iter().chain(right.iter()).collect();
            let copies = atoms.len();
            let clique_base = copies * n;
            let total = clique_base + cliques.len();
            let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
            for (c, atom) in atoms.iter().enumerate() {
                let offset = c * n;
                for (from, to) in &diagram.directed {
                    if to == *atom {
                        continue; // severed
                    }
                    edges.insert((offset + index(from), offset + index(to)));
                }
                for (k, clique) in cliques.iter().enumerate() {
                    for member in clique {
                        edges.insert((clique_base + k, offset + index(member)));
                    }
                }
            }
            let xs: Vec<usize> = left
                .iter()
                .map(|v| atoms.iter().position(|a| *a == v).unwrap() * n + index(v))
                .collect();
            let ys: Vec<usize> = right
                .iter()
                .map(|v| atoms.iter().position(|a| *a == v).unwrap() * n + index(v))
                .collect();
            assert!(
                graph::directed_d_separated(total, &edges, &xs, &ys, &BTreeSet::new()),
                "emitted pair {left:?} | {right:?} is not separated in the parallel network"
            );
        }
    }
}

#[test]
fn term_evaluation_is_a_ring_homomorphism_on_literals() {
    let mut rng = rng(0x2a);
    let empty = causal_core::CfDistribution::new(
        BTreeSet::new(),
        [(BTreeMap::new(), Rational::one())].into(),
    );
    for _ in 0..100 {
        let a = Rational::new(rng.gen_range(-9..=9), rng.gen_range(1..=9));
        let b = Rational::new(rng.gen_range(-9..=9), rng.gen_range(1..=9));
        let c = Rational::new(rng.gen_range(-9..=9), rng.gen_range(1..=9));
        let term = lang::ProbTerm::Lit(a.clone())
            .mul(lang::ProbTerm::Lit(b.clone()))
            .add(lang::ProbTerm::Lit(c.clone()));
        assert_eq!(lang::eval_term(&empty, &term).unwrap(), &(&a * &b) + &c);
    }
}

#[test]
fn parser_round_trips_printed_formulas() {
    let mut rng = rng(0x2b);
    for _ in 0..300 {
        let r = random_effective_rcm(&mut rng, 3, 2, 3, false);
        let base = random_base_formula(&mut rng, &r, 3);
        let printed = base.to_string();
        assert_eq!(lang::parse_base(&printed).unwrap(), base, "through `{printed}`");

        let formula = lang::encode(
            if rng.gen_bool(0.5) { lang::Quantifier::ForAll } else { lang::Quantifier::Exists },
            &base,
        );
        let printed = formula.to_string();
        assert_eq!(parse_formula(&printed).unwrap(), formula, "through `{printed}`");
    }
}

/// The extension search agrees with brute-force enumeration of every
/// completion: per positive-mass unit, all assignments of the undefined
/// keys are tried and the principles checked directly on the resulting
/// full single-unit model.
#[test]
fn extension_search_matches_bruteforce_enumeration() {
    use causal_core::representability::full_key_universe;

    let mut rng = rng(0x2c);

    let brute_force_completable = |r: &Rcm| -> bool {
        let universe = full_key_universe(&r.variables);
        r.positive_units().into_iter().all(|unit| {
            // Seed with effectiveness-forced values and recorded responses.
            let mut fixed: BTreeMap<OutcomeKey, Value> = BTreeMap::new();
            let mut free: Vec<OutcomeKey> = Vec::new();
            let mut consistent = true;
            for key in &universe {
                let forced = key.intervention.get(&key.outcome).cloned();
                let recorded =
                    r.outcomes.contains(key).then(|| r.response(key, unit).unwrap().clone());
                match (forced, recorded) {
                    (Some(f), Some(rec)) if f != rec => consistent = false,
                    (Some(f), _) => {
                        fixed.insert(key.clone(), f);
                    }
                    (None, Some(rec)) => {
                        fixed.insert(key.clone(), rec);
                    }
                    (None, None) => free.push(key.clone()),
                }
            }
            if !consistent {
                return false;
            }

            // Odometer over the free keys.
            let domains: Vec<&[Value]> =
                free.iter().map(|k| r.variables.domain(&k.outcome).unwrap()).collect();
            let mut counters = vec![0usize; free.len()];
            loop {
                let mut full = Rcm::new(
                    r.variables.clone(),
                    vec![(unit.to_string(), Rational::one())],
                    universe.iter().cloned(),
                );
                for (key, value) in &fixed {
                    full.set_response(key, unit, value.clone());
                }
                for ((key, domain), idx) in free.iter().zip(&domains).zip(&counters) {
                    full.set_response(key, unit, domain[*idx].clone());
                }
                if check_principle(&full, Principle::Composition, true).is_empty()
                    && check_principle(&full, Principle::Reversibility, true).is_empty()
                {
                    return true;
                }
                // Advance the odometer.
                let mut i = 0;
                loop {
                    if i == free.len() {
                        return false;
                    }
                    counters[i] += 1;
                    if counters[i] < domains[i].len() {
                        break;
                    }
                    counters[i] = 0;
                    i += 1;
                }
            }
        })
    };

    // Two pinned cases exercise both outcomes: a single unit satisfying
    // X=1, Y=1, Y_{X=1}=0 witnesses a composition failure (no completion),
    // while dropping the plain X outcome admits one.
    let vars = VarSet::new([Variable::binary("X"), Variable::binary("Y")]);
    let keys = [OutcomeKey::plain("X"), OutcomeKey::plain("Y"), key("Y", [("X", 1)])];
    let mut blocked = Rcm::new(vars.clone(), vec![("u".into(), Rational::one())], keys.clone());
    blocked.set_response(&keys[0], "u", Value::Int(1));
    blocked.set_response(&keys[1], "u", Value::Int(1));
    blocked.set_response(&keys[2], "u", Value::Int(0));
    let mut open = blocked.clone();
    open.outcomes.remove(&keys[0]);
    open.responses.retain(|(k, _), _| *k != keys[0]);
    for (r, expected) in [(&blocked, false), (&open, true)] {
        let result = find_full_extension(r, &SearchConfig::default()).unwrap();
        assert_eq!(result.found, expected);
        assert_eq!(brute_force_completable(r), expected);
    }

    for trial in 0..25 {
        let r = random_effective_rcm(&mut rng, 2, 2, 3, false);
        let result = find_full_extension(&r, &SearchConfig::default()).unwrap();
        let brute = brute_force_completable(&r);
        assert_eq!(result.found, brute, "trial {trial}: search disagrees with enumeration {r:?}");
    }
}

/// Violations of consistency (composition with an empty context) are found
/// by the composition check.
#[test]
fn consistency_is_the_empty_context_instance() {
    let vars = VarSet::new([Variable::binary("A"), Variable::binary("B")]);
    let keys = [OutcomeKey::plain("A"), OutcomeKey::plain("B"), key("B", [("A", 1)])];
    let mut r = Rcm::new(vars, vec![("u".into(), Rational::one())], keys.clone());
    r.set_response(&keys[0], "u", Value::Int(1));
    r.set_response(&keys[1], "u", Value::Int(0));
    r.set_response(&keys[2], "u", Value::Int(1)); // B_{A=1} != B although A=1

    let violations = check_principle(&r, Principle::Composition, true);
    assert_eq!(violations.len(), 1);
    assert!(violations[0].premises.iter().all(|(k, _)| k.intervention.is_empty()));
    assert_eq!(violations[0].conclusion_key, key("B", [("A", 1)]));
}
