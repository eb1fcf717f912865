//! Causal diagrams, d-separation, single-world intervention graphs, and the
//! compilation of graphical assumptions into checkable formula instances.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::{encode, BaseFormula, EvalError, LFormula, ProbTerm, Quantifier};
use crate::model::{CfDistribution, ModelError, OutcomeKey, Rcm, Scm, Valuation, Value, VarSet};
use crate::rational::Rational;

/// A mixed graph: directed edges plus bidirected arcs, no self-loops.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagram {
    pub nodes: Vec<String>,
    pub directed: BTreeSet<(String, String)>,
    /// Stored with endpoints in sorted order.
    pub bidirected: BTreeSet<(String, String)>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("diagram has a directed cycle")]
    CyclicDiagram,
    #[error("operation requires a purely directed diagram, but bidirected arcs are present")]
    BidirectedPresent,
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl Diagram {
    pub fn new(
        nodes: impl IntoIterator<Item = String>,
        directed: impl IntoIterator<Item = (String, String)>,
        bidirected: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Diagram, GraphError> {
        let nodes: Vec<String> = nodes.into_iter().collect();
        let directed: BTreeSet<(String, String)> = directed.into_iter().collect();
        let bidirected: BTreeSet<(String, String)> =
            bidirected.into_iter().map(|(a, b)| if a <= b { (a, b) } else { (b, a) }).collect();
        for (a, b) in directed.iter().chain(bidirected.iter()) {
            if !nodes.contains(a) {
                return Err(GraphError::UnknownNode(a.clone()));
            }
            if !nodes.contains(b) {
                return Err(GraphError::UnknownNode(b.clone()));
            }
            if a == b {
                return Err(GraphError::InvalidInput(format!("self-loop at {a}")));
            }
        }
        Ok(Diagram { nodes, directed, bidirected })
    }

    pub fn parents_of(&self, node: &str) -> Vec<&str> {
        self.directed.iter().filter(|(_, to)| to == node).map(|(from, _)| from.as_str()).collect()
    }

    pub fn children_of(&self, node: &str) -> Vec<&str> {
        self.directed.iter().filter(|(from, _)| from == node).map(|(_, to)| to.as_str()).collect()
    }

    pub fn has_bidirected(&self, a: &str, b: &str) -> bool {
        let key =
            if a <= b { (a.to_string(), b.to_string()) } else { (b.to_string(), a.to_string()) };
        self.bidirected.contains(&key)
    }

    /// Topological order of the directed part, or `None` on a cycle.
    pub fn topological_order(&self) -> Option<Vec<String>> {
        let mut order = Vec::new();
        let mut placed: BTreeSet<&str> = BTreeSet::new();
        let mut remaining: Vec<&str> = self.nodes.iter().map(|s| s.as_str()).collect();
        while !remaining.is_empty() {
            let before = order.len();
            remaining.retain(|node| {
                let ready = self.parents_of(node).iter().all(|p| placed.contains(p));
                if ready {
                    order.push(node.to_string());
                    placed.insert(node);
                }
                !ready
            });
            if order.len() == before {
                return None;
            }
        }
        Some(order)
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }

    /// Directed ancestors including the node itself.
    pub fn ancestors_of(&self, node: &str) -> BTreeSet<String> {
        let mut seen: BTreeSet<String> = [node.to_string()].into();
        let mut stack = vec![node.to_string()];
        while let Some(v) = stack.pop() {
            for p in self.parents_of(&v) {
                if seen.insert(p.to_string()) {
                    stack.push(p.to_string());
                }
            }
        }
        seen
    }

    /// Maximal cliques of the bidirected relation, singletons included.
    pub fn bidirected_cliques(&self) -> Vec<BTreeSet<String>> {
        let neighbors = |v: &str| -> BTreeSet<String> {
            self.nodes
                .iter()
                .filter(|u| u.as_str() != v && self.has_bidirected(v, u))
                .cloned()
                .collect()
        };
        let mut cliques = Vec::new();
        let mut r = BTreeSet::new();
        let mut p: BTreeSet<String> = self.nodes.iter().cloned().collect();
        let mut x = BTreeSet::new();
        bron_kerbosch(&mut r, &mut p, &mut x, &neighbors, &mut cliques);
        cliques.sort();
        cliques
    }

    /// Mixed d-separation: each maximal bidirected clique becomes a fresh
    /// common parent of its members, then directed d-separation decides.
    pub fn mixed_d_separated(
        &self,
        x: &[&str],
        y: &[&str],
        z: &[&str],
    ) -> Result<bool, GraphError> {
        for n in x.iter().chain(y.iter()).chain(z.iter()) {
            if !self.nodes.contains(&n.to_string()) {
                return Err(GraphError::UnknownNode(n.to_string()));
            }
        }
        let mut index: BTreeMap<String, usize> =
            self.nodes.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let mut edges: BTreeSet<(usize, usize)> =
            self.directed.iter().map(|(a, b)| (index[a], index[b])).collect();
        let mut count = self.nodes.len();
        for clique in self.bidirected_cliques() {
            if clique.len() < 2 {
                continue;
            }
            let c = count;
            count += 1;
            for member in &clique {
                edges.insert((c, index[member]));
            }
        }
        index.retain(|_, _| true);
        let xs: Vec<usize> = x.iter().map(|n| index[*n]).collect();
        let ys: Vec<usize> = y.iter().map(|n| index[*n]).collect();
        let zs: BTreeSet<usize> = z.iter().map(|n| index[*n]).collect();
        Ok(directed_d_separated(count, &edges, &xs, &ys, &zs))
    }
}

fn bron_kerbosch(
    r: &mut BTreeSet<String>,
    p: &mut BTreeSet<String>,
    x: &mut BTreeSet<String>,
    neighbors: &impl Fn(&str) -> BTreeSet<String>,
    out: &mut Vec<BTreeSet<String>>,
) {
    if p.is_empty() && x.is_empty() {
        out.push(r.clone());
        return;
    }
    let candidates: Vec<String> = p.iter().cloned().collect();
    for v in candidates {
        let nv = neighbors(&v);
        r.insert(v.clone());
        let mut p2: BTreeSet<String> = p.intersection(&nv).cloned().collect();
        let mut x2: BTreeSet<String> = x.intersection(&nv).cloned().collect();
        bron_kerbosch(r, &mut p2, &mut x2, neighbors, out);
        r.remove(&v);
        p.remove(&v);
        x.insert(v);
    }
}

/// Path-enumeration d-separation on a directed graph over dense indices:
/// every simple path between the sets must carry a non-collider in `z` or a
/// collider with no descendant in `z`.
pub fn directed_d_separated(
    node_count: usize,
    edges: &BTreeSet<(usize, usize)>,
    x: &[usize],
    y: &[usize],
    z: &BTreeSet<usize>,
) -> bool {
    let mut descendants: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); node_count];
    for (v, reached) in descendants.iter_mut().enumerate() {
        let mut stack = vec![v];
        reached.insert(v);
        while let Some(w) = stack.pop() {
            for &(from, to) in edges.iter() {
                if from == w && reached.insert(to) {
                    stack.push(to);
                }
            }
        }
    }
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); node_count];
    for &(a, b) in edges {
        adjacency[a].push(b);
        adjacency[b].push(a);
    }

    for &s in x {
        for &t in y {
            if s == t {
                return false;
            }
            // DFS over simple paths from s to t.
            let mut stack: Vec<Vec<usize>> = vec![vec![s]];
            while let Some(path) = stack.pop() {
                let last = *path.last().unwrap();
                if last == t {
                    if path_open(&path, edges, z, &descendants) {
                        return false;
                    }
                    continue;
                }
                for &next in &adjacency[last] {
                    if !path.contains(&next) {
                        let mut p = path.clone();
                        p.push(next);
                        stack.push(p);
                    }
                }
            }
        }
    }
    true
}

fn path_open(
    path: &[usize],
    edges: &BTreeSet<(usize, usize)>,
    z: &BTreeSet<usize>,
    descendants: &[BTreeSet<usize>],
) -> bool {
    for window in path.windows(3) {
        let (a, m, b) = (window[0], window[1], window[2]);
        let collider = edges.contains(&(a, m)) && edges.contains(&(b, m));
        if collider {
            if descendants[m].iter().all(|d| !z.contains(d)) {
                return false;
            }
        } else if z.contains(&m) {
            return false;
        }
    }
    true
}

/// Extracts the causal diagram of a structural model: declared endogenous
/// parents give the directed edges, and two variables are joined by a
/// bidirected arc when their exogenous parent sets share a variable or are
/// exactly dependent under the exogenous distribution.
pub fn diagram_of(m: &Scm) -> Diagram {
    let nodes: Vec<String> = m.endogenous.names().map(str::to_string).collect();
    let mut directed = BTreeSet::new();
    for (name, mech) in &m.mechanisms {
        for p in &mech.v_parents {
            directed.insert((p.clone(), name.clone()));
        }
    }
    let mut bidirected = BTreeSet::new();
    for (i, a) in nodes.iter().enumerate() {
        for b in nodes.iter().skip(i + 1) {
            let ua: BTreeSet<&str> = m
                .mechanisms
                .get(a)
                .map(|mech| mech.u_parents.iter().map(|s| s.as_str()).collect())
                .unwrap_or_default();
            let ub: BTreeSet<&str> = m
                .mechanisms
                .get(b)
                .map(|mech| mech.u_parents.iter().map(|s| s.as_str()).collect())
                .unwrap_or_default();
            let shared = ua.intersection(&ub).next().is_some();
            if shared || !exactly_independent(m, &ua, &ub) {
                bidirected.insert(if a <= b {
                    (a.clone(), b.clone())
                } else {
                    (b.clone(), a.clone())
                });
            }
        }
    }
    Diagram { nodes, directed, bidirected }
}

/// Exact factorization of the joint exogenous marginal over two disjoint
/// variable sets.
fn exactly_independent(m: &Scm, ua: &BTreeSet<&str>, ub: &BTreeSet<&str>) -> bool {
    if ua.is_empty() || ub.is_empty() {
        return true;
    }
    let a_names: Vec<&str> = ua.iter().copied().collect();
    let b_names: Vec<&str> = ub.iter().copied().collect();
    let ab_names: Vec<&str> = ua.union(ub).copied().collect();

    let marginal = |names: &[&str]| -> BTreeMap<Valuation, Rational> {
        let mut out: BTreeMap<Valuation, Rational> = BTreeMap::new();
        for (u, mass) in m.support() {
            *out.entry(u.project(names)).or_insert_with(Rational::zero) += mass;
        }
        out
    };
    let pa = marginal(&a_names);
    let pb = marginal(&b_names);
    let pab = marginal(&ab_names);

    for a_val in m.exogenous.valuations_of(&a_names) {
        for b_val in m.exogenous.valuations_of(&b_names) {
            let joint = a_val.merged(&b_val).expect("disjoint");
            let left = pab.get(&joint).cloned().unwrap_or_else(Rational::zero);
            let right = pa.get(&a_val).cloned().unwrap_or_else(Rational::zero)
                * pb.get(&b_val).cloned().unwrap_or_else(Rational::zero);
            if left != right {
                return false;
            }
        }
    }
    true
}

// ---------------------------------------------------------------------------
// Single-world intervention graphs
// ---------------------------------------------------------------------------

/// A node of a single-world intervention graph.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum SwigNode {
    /// `V` with the subscript recording the intervened ancestors' values.
    Random { var: String, subscript: Valuation },
    /// The fixed half of an intervened variable, carrying its forced value.
    Fixed { var: String, value: Value },
}

impl fmt::Display for SwigNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SwigNode::Random { var, subscript } => write!(f, "{var}[{subscript}]"),
            SwigNode::Fixed { var, value } => write!(f, "do({var}={value})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Swig {
    pub random_nodes: Vec<SwigNode>,
    pub fixed_nodes: Vec<SwigNode>,
    pub edges: BTreeSet<(SwigNode, SwigNode)>,
}

impl Swig {
    /// The outcome key a random node stands for.
    pub fn key_of(node: &SwigNode) -> Option<OutcomeKey> {
        match node {
            SwigNode::Random { var, subscript } => {
                Some(OutcomeKey::new(var.clone(), subscript.clone()))
            }
            SwigNode::Fixed { .. } => None,
        }
    }

    pub fn random_node_for(&self, var: &str) -> Option<&SwigNode> {
        self.random_nodes.iter().find(|n| matches!(n, SwigNode::Random { var: v, .. } if v == var))
    }

    /// Directed d-separation over the SWIG's node set; the conditioning set
    /// must consist of random nodes.
    pub fn d_separated(&self, x: &[&SwigNode], y: &[&SwigNode], z: &[&SwigNode]) -> bool {
        let mut all: Vec<&SwigNode> = self.random_nodes.iter().collect();
        all.extend(self.fixed_nodes.iter());
        let index: BTreeMap<&SwigNode, usize> =
            all.iter().enumerate().map(|(i, n)| (*n, i)).collect();
        let edges: BTreeSet<(usize, usize)> =
            self.edges.iter().map(|(a, b)| (index[a], index[b])).collect();
        let xs: Vec<usize> = x.iter().map(|n| index[*n]).collect();
        let ys: Vec<usize> = y.iter().map(|n| index[*n]).collect();
        let zs: BTreeSet<usize> = z.iter().map(|n| index[*n]).collect();
        directed_d_separated(all.len(), &edges, &xs, &ys, &zs)
    }

    /// Renderable edge-list text: one `a -> b` line per edge.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for node in self.random_nodes.iter().chain(self.fixed_nodes.iter()) {
            out.push_str(&format!("node {node}\n"));
        }
        for (a, b) in &self.edges {
            out.push_str(&format!("{a} -> {b}\n"));
        }
        out
    }
}

/// Builds the single-world intervention graph of a directed, acyclic
/// diagram under an intervention: each variable's random node is labeled
/// with the restriction of the intervention to its proper intervened
/// ancestors, each intervened variable contributes a fixed node, and edges
/// out of intervened variables are re-rooted at the fixed nodes.
pub fn build_swig(d: &Diagram, x: &Valuation) -> Result<Swig, GraphError> {
    if !d.bidirected.is_empty() {
        return Err(GraphError::BidirectedPresent);
    }
    if !d.is_acyclic() {
        return Err(GraphError::CyclicDiagram);
    }
    for (name, _) in x.iter() {
        if !d.nodes.contains(&name.to_string()) {
            return Err(GraphError::UnknownNode(name.to_string()));
        }
    }

    let mut subscripts: BTreeMap<String, Valuation> = BTreeMap::new();
    for v in &d.nodes {
        let ancestors = d.ancestors_of(v);
        let mut sub = Valuation::empty();
        for (name, value) in x.iter() {
            if name != v && ancestors.contains(name) {
                sub.insert(name, value.clone());
            }
        }
        subscripts.insert(v.clone(), sub);
    }

    let random_nodes: Vec<SwigNode> = d
        .nodes
        .iter()
        .map(|v| SwigNode::Random { var: v.clone(), subscript: subscripts[v].clone() })
        .collect();
    let fixed_nodes: Vec<SwigNode> = x
        .iter()
        .map(|(name, value)| SwigNode::Fixed { var: name.to_string(), value: value.clone() })
        .collect();

    let mut edges = BTreeSet::new();
    for (from, to) in &d.directed {
        let head = SwigNode::Random { var: to.clone(), subscript: subscripts[to].clone() };
        if x.contains(from) {
            let tail =
                SwigNode::Fixed { var: from.clone(), value: x.get(from).expect("checked").clone() };
            edges.insert((tail, head));
        } else {
            let tail = SwigNode::Random { var: from.clone(), subscript: subscripts[from].clone() };
            edges.insert((tail, head));
        }
    }

    Ok(Swig { random_nodes, fixed_nodes, edges })
}

// ---------------------------------------------------------------------------
// Schema instantiation
// ---------------------------------------------------------------------------

/// Size limits for schema enumeration. The schemas are infinite families;
/// these caps keep instantiation finite and are surfaced in reports.
#[derive(Debug, Clone)]
pub struct SchemaCaps {
    /// Extra intervened variables beyond the parent set in exclusion
    /// restriction instances.
    pub er_extra: usize,
    /// Maximum variables per side in independence instances.
    pub side_max: usize,
    /// Maximum total variables across the two main sides.
    pub pair_total: usize,
    /// Maximum conditioning variables in single-world instances.
    pub cond_max: usize,
    /// Maximum intervened variables when enumerating single-world graphs.
    pub swig_intervention_max: usize,
    /// Hard ceiling on emitted instances; hitting it marks truncation.
    pub max_instances: usize,
}

impl Default for SchemaCaps {
    fn default() -> Self {
        SchemaCaps {
            er_extra: 2,
            side_max: 2,
            pair_total: 3,
            cond_max: 2,
            swig_intervention_max: 1,
            max_instances: 200_000,
        }
    }
}

fn subsets_up_to<'a>(items: &[&'a str], max: usize) -> Vec<Vec<&'a str>> {
    let mut out: Vec<Vec<&'a str>> = vec![Vec::new()];
    for &item in items {
        let mut next = out.clone();
        for subset in &out {
            if subset.len() < max {
                let mut s = subset.clone();
                s.push(item);
                next.push(s);
            }
        }
        out = next;
    }
    out.sort_by(|a, b| (a.len(), a.clone()).cmp(&(b.len(), b.clone())));
    out
}

/// Exclusion restriction instances: `y_a <-> y_p` for every variable `Y`,
/// every intervened superset `A` of `Y`'s parents not containing `Y`
/// (within the cap), and every valuation.
pub fn generate_er_instances(
    d: &Diagram,
    domains: &VarSet,
    caps: &SchemaCaps,
) -> Result<Vec<BaseFormula>, GraphError> {
    if !d.is_acyclic() {
        return Err(GraphError::CyclicDiagram);
    }
    let mut out = Vec::new();
    for y in &d.nodes {
        let y_dom = domains
            .domain(y)
            .ok_or_else(|| GraphError::InvalidInput(format!("no domain for {y}")))?;
        let parents = d.parents_of(y);
        let others: Vec<&str> = d
            .nodes
            .iter()
            .map(|s| s.as_str())
            .filter(|n| *n != y.as_str() && !parents.contains(n))
            .collect();
        for extras in subsets_up_to(&others, caps.er_extra) {
            let mut a_vars: Vec<&str> = parents.clone();
            a_vars.extend(extras.iter().copied());
            a_vars.sort();
            for a_val in domains.valuations_of(&a_vars) {
                let parent_names: Vec<&str> = parents.clone();
                let p_val = a_val.project(&parent_names);
                for y_val in y_dom {
                    let lhs = BaseFormula::Atom {
                        key: OutcomeKey::new(y.clone(), a_val.clone()),
                        value: y_val.clone(),
                    };
                    let rhs = BaseFormula::Atom {
                        key: OutcomeKey::new(y.clone(), p_val.clone()),
                        value: y_val.clone(),
                    };
                    out.push(lhs.iff(rhs));
                    if out.len() >= caps.max_instances {
                        return Ok(out);
                    }
                }
            }
        }
    }
    Ok(out)
}

fn conjunction_of(atoms: &[(OutcomeKey, Value)]) -> BaseFormula {
    BaseFormula::conjunction(
        atoms
            .iter()
            .map(|(key, value)| BaseFormula::Atom { key: key.clone(), value: value.clone() })
            .collect(),
    )
}

/// All joint (outcome value, parent valuation) assignments for a set of
/// variables: per variable `Y`, a value in `Val(Y)` and an intervention on
/// the diagram parents of `Y`.
fn side_assignments(
    d: &Diagram,
    domains: &VarSet,
    vars: &[&str],
) -> Result<Vec<Vec<(OutcomeKey, Value)>>, GraphError> {
    let mut out: Vec<Vec<(OutcomeKey, Value)>> = vec![Vec::new()];
    for &var in vars {
        let dom = domains
            .domain(var)
            .ok_or_else(|| GraphError::InvalidInput(format!("no domain for {var}")))?;
        let parents = d.parents_of(var);
        let parent_vals = domains.valuations_of(&parents);
        let mut next = Vec::new();
        for base in &out {
            for p in &parent_vals {
                for v in dom {
                    let mut b = base.clone();
                    b.push((OutcomeKey::new(var.to_string(), p.clone()), v.clone()));
                    next.push(b);
                }
            }
        }
        out = next;
    }
    Ok(out)
}

/// Counterfactual independence instances: for disjoint variable sets with no
/// bidirected arc across, the joint probability of parent-intervened
/// outcomes factorizes.
pub fn generate_cfsep_instances(
    d: &Diagram,
    domains: &VarSet,
    caps: &SchemaCaps,
) -> Result<Vec<LFormula>, GraphError> {
    if !d.is_acyclic() {
        return Err(GraphError::CyclicDiagram);
    }
    let names: Vec<&str> = d.nodes.iter().map(|s| s.as_str()).collect();
    let mut out = Vec::new();
    for left in subsets_up_to(&names, caps.side_max) {
        if left.is_empty() {
            continue;
        }
        for right in subsets_up_to(&names, caps.side_max) {
            if right.is_empty() || left.len() + right.len() > caps.pair_total {
                continue;
            }
            // Canonical order once per unordered pair, disjointness, and the
            // no-cross-arc side condition.
            if left > right || left.iter().any(|v| right.contains(v)) {
                continue;
            }
            if left.iter().any(|a| right.iter().any(|b| d.has_bidirected(a, b))) {
                continue;
            }
            for l_assign in side_assignments(d, domains, &left)? {
                for r_assign in side_assignments(d, domains, &right)? {
                    let mut all = l_assign.clone();
                    all.extend(r_assign.iter().cloned());
                    let formula = LFormula::cmp(
                        crate::lang::CmpOp::Eq,
                        ProbTerm::Prob(conjunction_of(&all)),
                        ProbTerm::Prob(conjunction_of(&l_assign))
                            .mul(ProbTerm::Prob(conjunction_of(&r_assign))),
                    );
                    out.push(formula);
                    if out.len() >= caps.max_instances {
                        return Ok(out);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Single-world independence instances for the intervention `x`: for random
/// node sets separated in the graph, the cross-multiplied conditional
/// independence equation over every valuation.
pub fn generate_swsep_instances(
    d: &Diagram,
    x: &Valuation,
    domains: &VarSet,
    caps: &SchemaCaps,
) -> Result<Vec<LFormula>, GraphError> {
    let swig = build_swig(d, x)?;
    let random: Vec<&SwigNode> = swig.random_nodes.iter().collect();
    let labels: Vec<&str> = random
        .iter()
        .map(|n| match n {
            SwigNode::Random { var, .. } => var.as_str(),
            SwigNode::Fixed { .. } => unreachable!(),
        })
        .collect();

    let pick = |vars: &[&str]| -> Vec<&SwigNode> {
        vars.iter()
            .map(|v| {
                *random
                    .iter()
                    .find(|n| matches!(n, SwigNode::Random{var,..} if var == v))
                    .expect("known")
            })
            .collect()
    };

    let mut out = Vec::new();
    for left in subsets_up_to(&labels, caps.side_max) {
        if left.is_empty() {
            continue;
        }
        for right in subsets_up_to(&labels, caps.side_max) {
            if right.is_empty()
                || left.len() + right.len() > caps.pair_total
                || left > right
                || left.iter().any(|v| right.contains(v))
            {
                continue;
            }
            let used: BTreeSet<&str> = left.iter().chain(right.iter()).copied().collect();
            let rest: Vec<&str> = labels.iter().copied().filter(|v| !used.contains(*v)).collect();
            for cond in subsets_up_to(&rest, caps.cond_max) {
                let l_nodes = pick(&left);
                let r_nodes = pick(&right);
                let c_nodes = pick(&cond);
                if !swig.d_separated(&l_nodes, &r_nodes, &c_nodes) {
                    continue;
                }
                let keyed = |nodes: &[&SwigNode]| -> Vec<OutcomeKey> {
                    nodes.iter().map(|n| Swig::key_of(n).expect("random")).collect()
                };
                let l_keys = keyed(&l_nodes);
                let r_keys = keyed(&r_nodes);
                let c_keys = keyed(&c_nodes);
                for l_vals in value_assignments(domains, &l_keys)? {
                    for r_vals in value_assignments(domains, &r_keys)? {
                        for c_vals in value_assignments(domains, &c_keys)? {
                            // Cross-multiplied conditional independence:
                            // P(x,y,z) P(z) = P(x,z) P(y,z), the plain
                            // product when the conditioning set is empty.
                            let mut lrc = l_vals.clone();
                            lrc.extend(r_vals.iter().cloned());
                            lrc.extend(c_vals.iter().cloned());
                            let mut lc = l_vals.clone();
                            lc.extend(c_vals.iter().cloned());
                            let mut rc = r_vals.clone();
                            rc.extend(c_vals.iter().cloned());
                            let lhs = if c_vals.is_empty() {
                                ProbTerm::Prob(conjunction_of(&lrc))
                            } else {
                                ProbTerm::Prob(conjunction_of(&lrc))
                                    .mul(ProbTerm::Prob(conjunction_of(&c_vals)))
                            };
                            let rhs = ProbTerm::Prob(conjunction_of(&lc))
                                .mul(ProbTerm::Prob(conjunction_of(&rc)));
                            out.push(LFormula::cmp(crate::lang::CmpOp::Eq, lhs, rhs));
                            if out.len() >= caps.max_instances {
                                return Ok(out);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

fn value_assignments(
    domains: &VarSet,
    keys: &[OutcomeKey],
) -> Result<Vec<Vec<(OutcomeKey, Value)>>, GraphError> {
    let mut out: Vec<Vec<(OutcomeKey, Value)>> = vec![Vec::new()];
    for key in keys {
        let dom = domains
            .domain(&key.outcome)
            .ok_or_else(|| GraphError::InvalidInput(format!("no domain for {}", key.outcome)))?;
        let mut next = Vec::new();
        for base in &out {
            for v in dom {
                let mut b = base.clone();
                b.push((key.clone(), v.clone()));
                next.push(b);
            }
        }
        out = next;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Class membership
// ---------------------------------------------------------------------------

/// Which class to check a model against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassRole {
    /// Structural models with exactly this diagram.
    StructuralDiagram,
    /// Full models whose counterfactual distribution satisfies every
    /// encoded exclusion restriction and single-world independence
    /// instance of the (directed) diagram.
    Ffrcistg,
}

#[derive(Debug, Clone)]
pub enum ClassModel<'a> {
    Rcm(&'a Rcm),
    Scm(&'a Scm),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassReport {
    pub member: bool,
    pub detail: String,
    /// The first failing instance, pretty-printed.
    pub failed_instance: Option<String>,
    pub instances_checked: usize,
    /// Instance enumeration hit the hard cap; membership is only verified
    /// within the enumerated prefix.
    pub truncated: bool,
}

/// Every formula a full model must satisfy to belong to the directed
/// diagram's class: the encoded exclusion restriction instances plus the
/// single-world independence instances for every intervention within caps.
pub fn ffrcistg_instances(
    d: &Diagram,
    domains: &VarSet,
    caps: &SchemaCaps,
) -> Result<Vec<LFormula>, GraphError> {
    if !d.bidirected.is_empty() {
        return Err(GraphError::BidirectedPresent);
    }
    let er = generate_er_instances(d, domains, caps)?;
    let mut instances: Vec<LFormula> =
        er.iter().map(|inst| encode(Quantifier::ForAll, inst)).collect();
    let names: Vec<&str> = d.nodes.iter().map(|s| s.as_str()).collect();
    for vars in subsets_up_to(&names, caps.swig_intervention_max) {
        for x in domains.valuations_of(&vars) {
            instances.extend(generate_swsep_instances(d, &x, domains, caps)?);
        }
    }
    Ok(instances)
}

/// Checks class membership. Diagram membership compares extracted and
/// declared diagrams exactly; the full-model role evaluates every generated
/// instance within caps against the model's counterfactual distribution.
pub fn check_class_membership(
    model: &ClassModel,
    d: &Diagram,
    role: ClassRole,
    caps: &SchemaCaps,
) -> Result<ClassReport, GraphError> {
    match role {
        ClassRole::StructuralDiagram => {
            let ClassModel::Scm(m) = model else {
                return Err(GraphError::InvalidInput(
                    "diagram membership is defined for structural models".to_string(),
                ));
            };
            let actual = diagram_of(m);
            let mut expected = d.clone();
            expected.nodes.sort();
            let mut actual_sorted = actual.clone();
            actual_sorted.nodes.sort();
            let member = actual_sorted.nodes == expected.nodes
                && actual.directed == d.directed
                && actual.bidirected == d.bidirected;
            Ok(ClassReport {
                member,
                detail: if member {
                    "extracted diagram matches".to_string()
                } else {
                    format!(
                        "extracted diagram differs: directed {:?} vs {:?}, bidirected {:?} vs {:?}",
                        actual.directed, d.directed, actual.bidirected, d.bidirected
                    )
                },
                failed_instance: None,
                instances_checked: 0,
                truncated: false,
            })
        }
        ClassRole::Ffrcistg => {
            let domains = match model {
                ClassModel::Rcm(r) => r.variables.clone(),
                ClassModel::Scm(m) => m.endogenous.clone(),
            };
            let instances = ffrcistg_instances(d, &domains, caps)?;
            let truncated = instances.len() >= caps.max_instances;

            // All keys the instances mention. Unit rows indexed by key give
            // the same probabilities as the counterfactual distribution (the
            // pushforward only merges identical rows) without materializing
            // point maps per instance.
            let mut keys: BTreeSet<OutcomeKey> = BTreeSet::new();
            for inst in &instances {
                keys.extend(inst.keys());
            }
            let key_list: Vec<OutcomeKey> = keys.iter().cloned().collect();
            let key_index: BTreeMap<&OutcomeKey, usize> =
                key_list.iter().enumerate().map(|(i, k)| (k, i)).collect();

            let rows: Vec<(Rational, Vec<Value>)> = match model {
                ClassModel::Rcm(r) => {
                    for key in &keys {
                        if !r.outcomes.contains(key) {
                            return Err(GraphError::InvalidInput(format!(
                                "model is not full over the checked keys: {key} missing"
                            )));
                        }
                    }
                    r.positive_units()
                        .into_iter()
                        .map(|u| {
                            let row = key_list
                                .iter()
                                .map(|k| r.response(k, u).expect("total").clone())
                                .collect();
                            (r.mass(u), row)
                        })
                        .collect()
                }
                ClassModel::Scm(m) => {
                    let groups = crate::model::group_keys_by_intervention(key_list.iter());
                    let mut rows = Vec::new();
                    for (u, mass) in m.support() {
                        let mut row = vec![Value::Int(0); key_list.len()];
                        for (x, names) in &groups {
                            let v = m.solve_unique(u, x).map_err(GraphError::Model)?;
                            for name in names {
                                let key = OutcomeKey::new(name.clone(), x.clone());
                                row[key_index[&key]] = v.get(name).expect("total").clone();
                            }
                        }
                        rows.push((mass.clone(), row));
                    }
                    rows
                }
            };

            let prob = |f: &BaseFormula| -> Result<Rational, GraphError> {
                let mut total = Rational::zero();
                for (mass, row) in &rows {
                    if f.eval_with(&|key: &OutcomeKey| row[key_index[key]].clone()) {
                        total += mass;
                    }
                }
                Ok(total)
            };

            for inst in &instances {
                if !crate::lang::eval_formula_with(&prob, inst)? {
                    return Ok(ClassReport {
                        member: false,
                        detail: "a generated instance fails on the counterfactual distribution"
                            .to_string(),
                        failed_instance: Some(inst.to_string()),
                        instances_checked: instances.len(),
                        truncated,
                    });
                }
            }
            Ok(ClassReport {
                member: true,
                detail: format!("all {} instances hold within caps", instances.len()),
                failed_instance: None,
                instances_checked: instances.len(),
                truncated,
            })
        }
    }
}

// ---------------------------------------------------------------------------
// The observational functional equality implied by the four-node diagram
// ---------------------------------------------------------------------------

/// Sum over `w` of `P(y | z, w, x) P(w | x)`, computed exactly from an
/// observational distribution (plain keys over the four variables).
/// Zero-mass conditioning contexts skip their summand; `None` when the
/// distribution of `x` itself has no mass.
pub fn observational_functional(
    obs: &CfDistribution,
    domains: &VarSet,
    w_var: &str,
    x_atom: (&str, &Value),
    y_atom: (&str, &Value),
    z_atom: (&str, &Value),
) -> Result<Option<Rational>, GraphError> {
    let key = |name: &str| OutcomeKey::plain(name);
    let p = |event: &[(&str, &Value)]| -> Result<Rational, GraphError> {
        let event: Vec<(OutcomeKey, Value)> =
            event.iter().map(|(n, v)| (key(n), (*v).clone())).collect();
        obs.probability_of(&event).map_err(GraphError::Model)
    };

    let (x_name, x_val) = x_atom;
    let (y_name, y_val) = y_atom;
    let (z_name, z_val) = z_atom;

    let p_x = p(&[(x_name, x_val)])?;
    if p_x.is_zero() {
        return Ok(None);
    }
    let w_dom = domains
        .domain(w_var)
        .ok_or_else(|| GraphError::InvalidInput(format!("no domain for {w_var}")))?;

    let mut total = Rational::zero();
    for w_val in w_dom {
        let p_zwx = p(&[(z_name, z_val), (w_var, w_val), (x_name, x_val)])?;
        if p_zwx.is_zero() {
            continue;
        }
        let p_yzwx = p(&[(y_name, y_val), (z_name, z_val), (w_var, w_val), (x_name, x_val)])?;
        let p_wx = p(&[(w_var, w_val), (x_name, x_val)])?;
        total += &(p_yzwx.div_exact(&p_zwx) * p_wx.div_exact(&p_x));
    }
    Ok(Some(total))
}
