//! Is-a hierarchy, Wu & Palmer similarity and target-type classification.
//!
//! Depth counts nodes on the shortest root path (a root has depth 1). Under
//! multiple inheritance the least common subsumer is the shared ancestor of
//! greatest depth, ties going to the lexicographically smallest id.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::infersim::SimilarityMatrix;
use crate::matrixio::{LabelSet, Matrix};

/// Rooted, acyclic is-a graph over synset ids.
#[derive(Debug, Clone)]
pub struct Taxonomy {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
    edges: Vec<(usize, usize)>,
}

impl Taxonomy {
    /// Builds a taxonomy from `(child, parent)` edges. Nodes that never
    /// appear as a child are roots.
    pub fn from_edges<I, S>(edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, S)>,
        S: AsRef<str>,
    {
        let mut t = Taxonomy {
            ids: Vec::new(),
            index: HashMap::new(),
            parents: Vec::new(),
            children: Vec::new(),
            depth: Vec::new(),
            edges: Vec::new(),
        };
        for (child, parent) in edges {
            let c = t.intern(child.as_ref());
            let p = t.intern(parent.as_ref());
            if c == p {
                return Err(Error::Cycle(t.ids[c].clone()));
            }
            if !t.parents[c].contains(&p) {
                t.parents[c].push(p);
                t.children[p].push(c);
                t.edges.push((c, p));
            }
        }
        if t.ids.is_empty() {
            return Err(Error::EmptyTaxonomy);
        }
        t.compute_depths()?;
        Ok(t)
    }

    fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.ids.len();
        self.ids.push(id.to_string());
        self.index.insert(id.to_string(), i);
        self.parents.push(Vec::new());
        self.children.push(Vec::new());
        i
    }

    /// Breadth-first from all roots; also detects cycles, since a node on
    /// a cycle is never reached from a root.
    fn compute_depths(&mut self) -> Result<()> {
        let n = self.ids.len();
        let mut depth = vec![0usize; n];
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| self.parents[i].is_empty()).collect();
        for &r in &queue {
            depth[r] = 1;
        }
        while let Some(u) = queue.pop_front() {
            for &c in &self.children[u] {
                if depth[c] == 0 {
                    depth[c] = depth[u] + 1;
                    queue.push_back(c);
                }
            }
        }

        // Kahn's algorithm for acyclicity.
        let mut indegree: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut stack: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut seen = 0;
        while let Some(u) = stack.pop() {
            seen += 1;
            for &c in &self.children[u] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    stack.push(c);
                }
            }
        }
        if seen != n {
            let culprit = (0..n).find(|&i| indegree[i] > 0).unwrap();
            return Err(Error::Cycle(self.ids[culprit].clone()));
        }
        self.depth = depth;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn roots(&self) -> Vec<&str> {
        (0..self.len())
            .filter(|&i| self.parents[i].is_empty())
            .map(|i| self.ids[i].as_str())
            .collect()
    }

    pub fn parents(&self, id: &str) -> Result<Vec<&str>> {
        let i = self.node(id)?;
        Ok(self.parents[i].iter().map(|&p| self.ids[p].as_str()).collect())
    }

    /// `(child, parent)` pairs in insertion order.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.edges
            .iter()
            .map(|&(c, p)| (self.ids[c].as_str(), self.ids[p].as_str()))
    }

    fn node(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownNode(id.to_string()))
    }

    pub fn depth(&self, id: &str) -> Result<usize> {
        Ok(self.depth[self.node(id)?])
    }

    /// Ancestors of `node` including itself, in discovery order.
    fn ancestors_of(&self, node: usize) -> Vec<usize> {
        let mut seen = vec![false; self.len()];
        let mut out = vec![node];
        seen[node] = true;
        let mut i = 0;
        while i < out.len() {
            for &p in &self.parents[out[i]] {
                if !seen[p] {
                    seen[p] = true;
                    out.push(p);
                }
            }
            i += 1;
        }
        out
    }

    /// Reflexive ancestor set of `id`.
    pub fn ancestors(&self, id: &str) -> Result<Vec<&str>> {
        let i = self.node(id)?;
        Ok(self
            .ancestors_of(i)
            .into_iter()
            .map(|a| self.ids[a].as_str())
            .collect())
    }

    /// True if `ancestor` is reachable from `node` through one or more
    /// parent edges.
    pub fn is_strict_ancestor(&self, ancestor: &str, node: &str) -> Result<bool> {
        let a = self.node(ancestor)?;
        let n = self.node(node)?;
        Ok(a != n && self.ancestors_of(n).contains(&a))
    }

    fn best_common(&self, anc_a: &[usize], b: usize) -> Option<usize> {
        let mut in_a = vec![false; self.len()];
        for &x in anc_a {
            in_a[x] = true;
        }
        self.best_common_marked(&in_a, &self.ancestors_of(b))
    }

    fn best_common_marked(&self, in_a: &[bool], anc_b: &[usize]) -> Option<usize> {
        anc_b
            .iter()
            .copied()
            .filter(|&c| in_a[c])
            .min_by(|&x, &y| {
                self.depth[y]
                    .cmp(&self.depth[x])
                    .then_with(|| self.ids[x].cmp(&self.ids[y]))
            })
    }

    /// Deepest shared ancestor of `a` and `b`, or `None` in a forest when
    /// they live under different roots.
    pub fn lowest_common_subsumer(&self, a: &str, b: &str) -> Result<Option<&str>> {
        let (ia, ib) = (self.node(a)?, self.node(b)?);
        Ok(self
            .best_common(&self.ancestors_of(ia), ib)
            .map(|c| self.ids[c].as_str()))
    }

    pub fn wu_palmer(&self, a: &str, b: &str) -> Result<f64> {
        let (ia, ib) = (self.node(a)?, self.node(b)?);
        Ok(match self.best_common(&self.ancestors_of(ia), ib) {
            Some(c) => self.wu_palmer_value(c, ia, ib),
            None => 0.0,
        })
    }

    /// Capped at 1: under multiple inheritance a shared ancestor can have a
    /// shorter-path depth greater than one of the two nodes.
    fn wu_palmer_value(&self, lcs: usize, a: usize, b: usize) -> f64 {
        (2.0 * self.depth[lcs] as f64 / (self.depth[a] + self.depth[b]) as f64).min(1.0)
    }

    pub fn classify_target_type<S: AsRef<str>>(&self, target: &str, sources: &[S]) -> Result<TargetType> {
        let t = self.node(target)?;
        let source_ids = sources
            .iter()
            .map(|s| self.node(s.as_ref()))
            .collect::<Result<Vec<_>>>()?;

        let target_ancestors = self.ancestors_of(t);
        if source_ids
            .iter()
            .any(|&s| s != t && target_ancestors.contains(&s))
        {
            return Ok(TargetType::Included);
        }
        if source_ids
            .iter()
            .any(|&s| s != t && self.ancestors_of(s).contains(&t))
        {
            return Ok(TargetType::Inclusive);
        }
        Ok(TargetType::Disjoint)
    }

    /// Types of every target label relative to the full source label set.
    pub fn classify_labels(&self, source_labels: &LabelSet, target_labels: &LabelSet) -> Result<Vec<TargetType>> {
        let sources = synsets(source_labels)?;
        synsets(target_labels)?
            .into_iter()
            .map(|t| self.classify_target_type(t, &sources))
            .collect()
    }
}

fn synsets(labels: &LabelSet) -> Result<Vec<&str>> {
    labels
        .entries()
        .iter()
        .map(|e| {
            e.synset.as_deref().ok_or_else(|| Error::MissingSynset {
                index: e.index,
                label: e.label.clone(),
            })
        })
        .collect()
}

/// `sim(i, j) = wu_palmer(target_i, source_j)` over the labels' synsets.
pub fn wordnet_similarity_matrix(
    t: &Taxonomy,
    source_labels: &LabelSet,
    target_labels: &LabelSet,
) -> Result<SimilarityMatrix> {
    let sources = synsets(source_labels)?
        .into_iter()
        .map(|s| t.node(s))
        .collect::<Result<Vec<_>>>()?;
    let targets = synsets(target_labels)?
        .into_iter()
        .map(|s| t.node(s))
        .collect::<Result<Vec<_>>>()?;
    if sources.is_empty() || targets.is_empty() {
        return Err(Error::Shape("label sets must be non-empty".into()));
    }
    let source_ancestors: Vec<Vec<usize>> = sources.iter().map(|&s| t.ancestors_of(s)).collect();

    let mut values = Matrix::zeros(targets.len(), sources.len());
    let mut marked = vec![false; t.len()];
    for (i, &target) in targets.iter().enumerate() {
        let target_ancestors = t.ancestors_of(target);
        for &a in &target_ancestors {
            marked[a] = true;
        }
        for (j, &source) in sources.iter().enumerate() {
            if let Some(c) = t.best_common_marked(&marked, &source_ancestors[j]) {
                values.set(i, j, t.wu_palmer_value(c, target, source));
            }
        }
        for &a in &target_ancestors {
            marked[a] = false;
        }
    }
    SimilarityMatrix::new(values)
}

pub fn parse_taxonomy(text: &str) -> Result<Taxonomy> {
    let mut edges = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() != 2 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::MalformedRecord {
                line: n + 1,
                reason: "expected `<child_id>\\t<parent_id>`".into(),
            });
        }
        edges.push((fields[0], fields[1]));
    }
    Taxonomy::from_edges(edges)
}

pub fn format_taxonomy(t: &Taxonomy) -> String {
    let mut out = String::new();
    for (c, p) in t.edges() {
        writeln!(out, "{c}\t{p}").unwrap();
    }
    out
}

pub fn read_taxonomy(path: impl AsRef<Path>) -> Result<Taxonomy> {
    let path = path.as_ref();
    parse_taxonomy(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_taxonomy(t: &Taxonomy, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_taxonomy(t)).map_err(|e| Error::io(path, e))
}

/// How a target class relates to the source classes in the taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TargetType {
    /// Strict descendant of some source synset.
    Included,
    /// Strict ancestor of some source synset.
    Inclusive,
    Disjoint,
}

impl TargetType {
    pub const ALL: [TargetType; 3] = [TargetType::Included, TargetType::Inclusive, TargetType::Disjoint];

    pub fn as_str(self) -> &'static str {
        match self {
            TargetType::Included => "included",
            TargetType::Inclusive => "inclusive",
            TargetType::Disjoint => "disjoint",
        }
    }
}

impl fmt::Display for TargetType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TargetType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "included" => Ok(TargetType::Included),
            "inclusive" => Ok(TargetType::Inclusive),
            "disjoint" => Ok(TargetType::Disjoint),
            other => Err(Error::InvalidConfig(format!("unknown target type `{other}`"))),
        }
    }
}

/// Types file: one `<index>\t<type>` line per target, indices `0..n`.
pub fn parse_types(text: &str) -> Result<Vec<TargetType>> {
    let mut rows = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(idx), Some(kind), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::MalformedRecord {
                line: n + 1,
                reason: "expected `<index>\\t<type>`".into(),
            });
        };
        let idx: usize = idx.trim().parse().map_err(|_| Error::MalformedRecord {
            line: n + 1,
            reason: format!("`{idx}` is not a class index"),
        })?;
        rows.push((idx, kind.parse()?));
    }
    rows.sort_by_key(|r| r.0);
    for (expected, pair) in rows.iter().enumerate() {
        if pair.0 < expected {
            return Err(Error::DuplicateIndex { index: pair.0 });
        }
        if pair.0 != expected {
            return Err(Error::IndexGap { missing: expected });
        }
    }
    Ok(rows.into_iter().map(|r| r.1).collect())
}

pub fn format_types(types: &[TargetType]) -> String {
    let mut out = String::new();
    for (i, t) in types.iter().enumerate() {
        writeln!(out, "{i}\t{t}").unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Taxonomy {
        // R -> A -> {a1, a2}, R -> B
        Taxonomy::from_edges([("A", "R"), ("a1", "A"), ("a2", "A"), ("B", "R")]).unwrap()
    }

    #[test]
    fn depth_counts_nodes() {
        let t = toy();
        assert_eq!(t.depth("R").unwrap(), 1);
        assert_eq!(t.depth("a1").unwrap(), 3);
        assert!(matches!(t.depth("zzz"), Err(Error::UnknownNode(_))));
    }

    #[test]
    fn diamond_depth_uses_shortest_path() {
        let t = Taxonomy::from_edges([("X", "R"), ("n", "X"), ("n", "R")]).unwrap();
        assert_eq!(t.depth("n").unwrap(), 2);
    }

    #[test]
    fn wu_palmer_toy_values() {
        let t = toy();
        assert_eq!(t.wu_palmer("a1", "a1").unwrap(), 1.0);
        assert!((t.wu_palmer("a1", "a2").unwrap() - 4.0 / 6.0).abs() < 1e-15);
        assert!((t.wu_palmer("a1", "B").unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(t.lowest_common_subsumer("a1", "a2").unwrap(), Some("A"));
    }

    #[test]
    fn shortcut_edge_caps_similarity_at_one() {
        // `a` hangs off both the root and the deep `c`; `b` sits under `c`.
        let t = Taxonomy::from_edges([("x", "r"), ("y", "x"), ("c", "y"), ("a", "c"), ("a", "r"), ("b", "c")]).unwrap();
        assert_eq!(t.depth("a").unwrap(), 2);
        assert_eq!(t.lowest_common_subsumer("a", "b").unwrap(), Some("c"));
        assert_eq!(t.wu_palmer("a", "b").unwrap(), 1.0);
    }

    #[test]
    fn forest_has_zero_similarity() {
        let t = Taxonomy::from_edges([("a", "R1"), ("b", "R2")]).unwrap();
        assert_eq!(t.wu_palmer("a", "b").unwrap(), 0.0);
        assert_eq!(t.lowest_common_subsumer("a", "b").unwrap(), None);
        assert_eq!(t.roots(), vec!["R1", "R2"]);
    }

    #[test]
    fn lcs_ties_break_lexicographically() {
        // Two parents at equal depth shared by a and b.
        let t = Taxonomy::from_edges([
            ("P", "R"),
            ("Q", "R"),
            ("a", "P"),
            ("a", "Q"),
            ("b", "P"),
            ("b", "Q"),
        ])
        .unwrap();
        assert_eq!(t.lowest_common_subsumer("a", "b").unwrap(), Some("P"));
    }

    #[test]
    fn cycles_are_rejected() {
        let err = Taxonomy::from_edges([("a", "b"), ("b", "c"), ("c", "a"), ("c", "R")]).unwrap_err();
        assert!(matches!(err, Error::Cycle(_)));
        assert!(matches!(
            Taxonomy::from_edges([("a", "a")]).unwrap_err(),
            Error::Cycle(_)
        ));
    }

    #[test]
    fn target_types() {
        let t = toy();
        assert_eq!(t.classify_target_type("a1", &["A"]).unwrap(), TargetType::Included);
        assert_eq!(t.classify_target_type("A", &["a1", "B"]).unwrap(), TargetType::Inclusive);
        assert_eq!(t.classify_target_type("B", &["a1", "a2"]).unwrap(), TargetType::Disjoint);
        // Descendant of one source and ancestor of another: Included wins.
        assert_eq!(t.classify_target_type("A", &["R", "a1"]).unwrap(), TargetType::Included);
        assert!(t.classify_target_type("A", &["nope"]).is_err());
    }

    #[test]
    fn identical_synset_is_not_own_ancestor() {
        let t = toy();
        assert_eq!(t.classify_target_type("A", &["A"]).unwrap(), TargetType::Disjoint);
        assert!(!t.is_strict_ancestor("A", "A").unwrap());
        assert!(t.is_strict_ancestor("R", "a2").unwrap());
    }

    fn labels(pairs: &[(&str, &str)]) -> LabelSet {
        LabelSet::new(
            pairs
                .iter()
                .enumerate()
                .map(|(index, (l, s))| crate::matrixio::Label {
                    index,
                    label: l.to_string(),
                    synset: Some(s.to_string()),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn similarity_matrix_on_toy_tree() {
        let t = toy();
        let sources = labels(&[("a1", "a1"), ("a2", "a2"), ("b", "B")]);
        let targets = labels(&[("A", "A"), ("a1", "a1")]);
        let m = wordnet_similarity_matrix(&t, &sources, &targets).unwrap();
        // Hand values: wp(A,a1)=2*2/(2+3), wp(A,B)=2/(2+2), wp(a1,a2)=4/6, wp(a1,B)=2/5.
        let expected = [[0.8, 0.8, 0.5], [1.0, 4.0 / 6.0, 0.4]];
        for (i, row) in expected.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert!((m.get(i, j) - v).abs() < 1e-15, "({i},{j})");
            }
        }
    }

    #[test]
    fn disconnected_target_row_is_zero() {
        let t = Taxonomy::from_edges([("a", "R"), ("b", "R"), ("z", "Z")]).unwrap();
        let m = wordnet_similarity_matrix(&t, &labels(&[("a", "a"), ("b", "b")]), &labels(&[("z", "z")])).unwrap();
        assert_eq!(m.values().row(0), &[0.0, 0.0]);
    }

    #[test]
    fn missing_synset_is_an_error() {
        let t = toy();
        let sources = LabelSet::from_names(&["a1"]).unwrap();
        let targets = labels(&[("A", "A")]);
        assert!(matches!(
            wordnet_similarity_matrix(&t, &sources, &targets).unwrap_err(),
            Error::MissingSynset { .. }
        ));
    }

    #[test]
    fn taxonomy_file_round_trip() {
        let text = "# comment\nA\tR\n\na1\tA\na2\tA\nB\tR\n";
        let t = parse_taxonomy(text).unwrap();
        assert_eq!(t.len(), 5);
        let again = parse_taxonomy(&format_taxonomy(&t)).unwrap();
        assert_eq!(again.edges().collect::<Vec<_>>(), t.edges().collect::<Vec<_>>());
        assert!(parse_taxonomy("a b\n").is_err());
    }

    #[test]
    fn types_file_round_trip() {
        let types = vec![TargetType::Disjoint, TargetType::Included, TargetType::Inclusive];
        assert_eq!(parse_types(&format_types(&types)).unwrap(), types);
        assert!(matches!(parse_types("0\tincluded\n2\tdisjoint\n"), Err(Error::IndexGap { missing: 1 })));
        assert!(parse_types("0\tsideways\n").is_err());
    }
}
