//! Synthetic tree-ring corpus.
//!
//! Each document carries a single year tag; a year-windowed query sees exactly
//! the documents of that year. Counting is exact, so the corpus serves both as a
//! simulator of a growing index and as a brute-force oracle for distances.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::query::Query;
use crate::study::{StudyConfig, TermSpec};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    pub id: u64,
    pub year: i32,
    pub text: String,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("duplicate document id {0}")]
    DuplicateId(u64),
    #[error("document {id} has year {year} outside corpus range {first}..={last}")]
    YearOutOfRange {
        id: u64,
        year: i32,
        first: i32,
        last: i32,
    },
    #[error("infeasible growth spec: {0}")]
    Infeasible(String),
    #[error("corpus I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Time-tagged documents with a per-year index. Immutable once built.
#[derive(Debug, Clone)]
pub struct Corpus {
    documents: Vec<Document>,
    lowered: Vec<String>,
    by_year: BTreeMap<i32, Vec<usize>>,
    year_range: (i32, i32),
}

impl Corpus {
    pub fn new(documents: Vec<Document>, year_range: (i32, i32)) -> Result<Self, CorpusError> {
        let (first, last) = year_range;
        let mut ids = HashSet::with_capacity(documents.len());
        let mut by_year: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
        for (i, d) in documents.iter().enumerate() {
            if !ids.insert(d.id) {
                return Err(CorpusError::DuplicateId(d.id));
            }
            if d.year < first || d.year > last {
                return Err(CorpusError::YearOutOfRange {
                    id: d.id,
                    year: d.year,
                    first,
                    last,
                });
            }
            by_year.entry(d.year).or_default().push(i);
        }
        let lowered = documents.iter().map(|d| d.text.to_lowercase()).collect();
        Ok(Corpus {
            documents,
            lowered,
            by_year,
            year_range,
        })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn year_range(&self) -> (i32, i32) {
        self.year_range
    }

    pub fn contains_year(&self, year: i32) -> bool {
        year >= self.year_range.0 && year <= self.year_range.1
    }

    /// Indices of documents tagged `year` that match `q`, in ascending order.
    pub fn matching(&self, q: &Query, year: i32) -> BTreeSet<usize> {
        let docs = match self.by_year.get(&year) {
            Some(d) => d,
            None => return BTreeSet::new(),
        };
        self.eval(q, docs)
    }

    fn eval(&self, q: &Query, docs: &[usize]) -> BTreeSet<usize> {
        match q {
            Query::Phrase(p) => {
                let needle = p.to_lowercase();
                docs.iter()
                    .copied()
                    .filter(|&i| phrase_matches(&self.lowered[i], &needle))
                    .collect()
            }
            Query::And(l, r) => {
                let left = self.eval(l, docs);
                let rest: Vec<usize> = left.into_iter().collect();
                self.eval(r, &rest)
            }
            Query::Or(l, r) => {
                let mut s = self.eval(l, docs);
                s.extend(self.eval(r, docs));
                s
            }
        }
    }

    /// Writes one JSON object per line: `{"id":..,"year":..,"text":..}`.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), CorpusError> {
        for d in &self.documents {
            serde_json::to_writer(&mut w, d).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a JSON-lines corpus. The year range is taken from the documents.
    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, CorpusError> {
        let mut docs = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let d: Document = serde_json::from_str(&line).map_err(|source| CorpusError::Json {
                line: i + 1,
                source,
            })?;
            docs.push(d);
        }
        let first = docs.iter().map(|d| d.year).min().unwrap_or(0);
        let last = docs.iter().map(|d| d.year).max().unwrap_or(0);
        Corpus::new(docs, (first, last))
    }
}

/// Case-insensitive phrase match on word boundaries. Both arguments must
/// already be lowercased.
fn phrase_matches(text: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let starts_word = needle.chars().next().is_some_and(char::is_alphanumeric);
    let ends_word = needle.chars().next_back().is_some_and(char::is_alphanumeric);
    let mut from = 0;
    while let Some(off) = text[from..].find(needle) {
        let start = from + off;
        let end = start + needle.len();
        let before_ok = !starts_word
            || text[..start]
                .chars()
                .next_back()
                .is_none_or(|c| !c.is_alphanumeric());
        let after_ok = !ends_word
            || text[end..]
                .chars()
                .next()
                .is_none_or(|c| !c.is_alphanumeric());
        if before_ok && after_ok {
            return true;
        }
        from = start + text[start..].chars().next().map_or(1, char::len_utf8);
    }
    false
}

/// Number of documents of `year` matching `q`.
pub fn count_hits(corpus: &Corpus, q: &Query, year: i32) -> u64 {
    corpus.matching(q, year).len() as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointTarget {
    pub u: String,
    pub v: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YearPlan {
    pub year: i32,
    /// Number of documents containing each term.
    pub singles: BTreeMap<String, u64>,
    /// Number of documents containing both terms of a designated pair.
    #[serde(default)]
    pub joints: Vec<JointTarget>,
}

/// Occurrence plan for a synthetic corpus. Pairs not listed under `joints`
/// never share a document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthSpec {
    pub seed: u64,
    pub year_range: (i32, i32),
    pub years: Vec<YearPlan>,
}

impl GrowthSpec {
    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Spec invariants that can be checked without attempting construction.
    pub fn check(&self) -> Result<(), CorpusError> {
        let (first, last) = self.year_range;
        if first > last {
            return Err(CorpusError::Infeasible(format!(
                "year_range ({first}, {last}) is inverted"
            )));
        }
        let mut seen_years = BTreeSet::new();
        for plan in &self.years {
            let y = plan.year;
            if y < first || y > last {
                return Err(CorpusError::Infeasible(format!(
                    "year {y} lies outside year_range ({first}, {last})"
                )));
            }
            if !seen_years.insert(y) {
                return Err(CorpusError::Infeasible(format!("year {y} is planned twice")));
            }
            for term in plan.singles.keys() {
                if Query::phrase(term.as_str()).is_err() {
                    return Err(CorpusError::Infeasible(format!(
                        "term {term:?} is not a valid phrase"
                    )));
                }
            }
            let mut pairs = BTreeSet::new();
            for j in &plan.joints {
                if j.u == j.v {
                    return Err(CorpusError::Infeasible(format!(
                        "{y}: joint target pairs {:?} with itself",
                        j.u
                    )));
                }
                let key = if j.u < j.v { (&j.u, &j.v) } else { (&j.v, &j.u) };
                if !pairs.insert(key) {
                    return Err(CorpusError::Infeasible(format!(
                        "{y}: joint target ({:?}, {:?}) given twice",
                        j.u, j.v
                    )));
                }
                for t in [&j.u, &j.v] {
                    let single = plan.singles.get(t).copied().ok_or_else(|| {
                        CorpusError::Infeasible(format!(
                            "{y}: joint target ({:?}, {:?}) names {t:?} which has no single target",
                            j.u, j.v
                        ))
                    })?;
                    if j.count > single {
                        return Err(CorpusError::Infeasible(format!(
                            "{y}: joint target n({:?} AND {:?}) = {} exceeds single target n({t:?}) = {single}",
                            j.u, j.v, j.count
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

const FILLER: &[&str] = &[
    "lorem", "ipsum", "dolor", "sit", "amet", "consectetur", "adipiscing", "elit", "sed", "do",
    "eiusmod", "tempor", "incididunt", "ut", "labore", "et", "dolore", "magna", "aliqua",
];

/// Builds a corpus meeting every single and joint target exactly.
///
/// Documents are packed greedily: each starts from the designated pair with the
/// largest outstanding joint target and absorbs further terms only while every
/// pair inside the document still has outstanding joint budget, so undesignated
/// pairs never co-occur. Leftover single targets become one-term documents.
pub fn generate_corpus(spec: &GrowthSpec) -> Result<Corpus, CorpusError> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut docs = Vec::new();

    let mut plans: Vec<&YearPlan> = spec.years.iter().collect();
    plans.sort_by_key(|p| p.year);
    for plan in &plans {
        let mut year_docs = pack_year(plan)?;
        year_docs.shuffle(&mut rng);
        for terms in year_docs {
            let text = render_document(&terms, &mut rng);
            docs.push(Document {
                id: 0,
                year: plan.year,
                text,
            });
        }
    }
    for (i, d) in docs.iter_mut().enumerate() {
        d.id = i as u64 + 1;
    }
    let corpus = Corpus::new(docs, spec.year_range)?;
    verify(&corpus, &plans)?;
    Ok(corpus)
}

fn pack_year(plan: &YearPlan) -> Result<Vec<Vec<String>>, CorpusError> {
    let y = plan.year;
    let mut single: BTreeMap<&str, u64> =
        plan.singles.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    let mut joint: BTreeMap<(&str, &str), u64> = BTreeMap::new();
    for j in &plan.joints {
        let key = ordered(&j.u, &j.v);
        joint.insert(key, j.count);
    }
    let remaining = |joint: &BTreeMap<(&str, &str), u64>, a: &str, b: &str| {
        joint.get(&ordered(a, b)).copied().unwrap_or(0)
    };

    let mut out = Vec::new();
    loop {
        // largest outstanding pair, ties by name
        let seed = joint
            .iter()
            .filter(|(_, &c)| c > 0)
            .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
            .map(|(k, _)| *k);
        let Some((a, b)) = seed else { break };

        for t in [a, b] {
            if single[t] == 0 {
                let involved: Vec<String> = joint
                    .iter()
                    .filter(|((p, q), _)| *p == t || *q == t)
                    .map(|((p, q), _)| format!("n({p:?} AND {q:?})"))
                    .collect();
                return Err(CorpusError::Infeasible(format!(
                    "{y}: joint targets {} cannot be realised together within n({t:?}) = {}",
                    involved.join(", "),
                    plan.singles[t]
                )));
            }
        }

        let mut members = vec![a, b];
        let candidates: Vec<&str> = single.keys().copied().collect();
        for c in candidates {
            if members.contains(&c) || single[c] == 0 {
                continue;
            }
            if members.iter().all(|m| remaining(&joint, m, c) > 0) {
                members.push(c);
            }
        }

        for (i, m) in members.iter().enumerate() {
            *single.get_mut(m).unwrap() -= 1;
            for n in &members[i + 1..] {
                *joint.get_mut(&ordered(m, n)).unwrap() -= 1;
            }
        }
        out.push(members.iter().map(|s| s.to_string()).collect());
    }

    for (t, left) in single {
        for _ in 0..left {
            out.push(vec![t.to_string()]);
        }
    }
    Ok(out)
}

fn ordered<'a>(a: &'a str, b: &'a str) -> (&'a str, &'a str) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

fn render_document(terms: &[String], rng: &mut ChaCha8Rng) -> String {
    let mut parts: Vec<String> = terms.to_vec();
    parts.shuffle(rng);
    let mut words = Vec::new();
    for p in parts {
        for _ in 0..rng.gen_range(1..=3) {
            words.push(FILLER[rng.gen_range(0..FILLER.len())].to_string());
        }
        words.push(p);
    }
    words.push(FILLER[rng.gen_range(0..FILLER.len())].to_string());
    words.join(" ")
}

fn verify(corpus: &Corpus, plans: &[&YearPlan]) -> Result<(), CorpusError> {
    for plan in plans {
        for (term, &want) in &plan.singles {
            let got = count_hits(corpus, &Query::Phrase(term.clone()), plan.year);
            if got != want {
                return Err(CorpusError::Infeasible(format!(
                    "{}: term {term:?} is matched {got} times instead of {want}; \
                     it overlaps another term or a filler word",
                    plan.year
                )));
            }
        }
        for j in &plan.joints {
            let q = Query::and(Query::Phrase(j.u.clone()), Query::Phrase(j.v.clone()));
            let got = count_hits(corpus, &q, plan.year);
            if got != j.count {
                return Err(CorpusError::Infeasible(format!(
                    "{}: n({:?} AND {:?}) is {got} instead of {}; terms overlap",
                    plan.year, j.u, j.v, j.count
                )));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum UndefinedNwd {
    #[error("joint count is zero")]
    JointZero,
    #[error("normalization does not exceed the smaller count")]
    Domain,
}

/// Distance evaluated straight from exact corpus counts, without going through
/// the aggregation or `nwd` code paths.
pub fn brute_force_nwd(
    corpus: &Corpus,
    u: &TermSpec,
    v: &TermSpec,
    year: i32,
    config: &StudyConfig,
) -> Result<f64, UndefinedNwd> {
    let pu = Query::Phrase(u.text.clone());
    let pv = Query::Phrase(v.text.clone());
    let nu = count_hits(corpus, &pu, year) as f64;
    let nv = count_hits(corpus, &pv, year) as f64;
    let joint = count_hits(corpus, &Query::and(pu, pv), year) as f64;
    let reference = count_hits(corpus, &Query::Phrase(config.normalization_ref.clone()), year);
    let big_n = config.normalization_factor * reference as f64;
    let (hi, lo) = if nu >= nv { (nu, nv) } else { (nv, nu) };
    if joint == 0.0 {
        return Err(UndefinedNwd::JointZero);
    }
    if lo == 0.0 || big_n <= lo {
        return Err(UndefinedNwd::Domain);
    }
    Ok((hi.ln() - joint.ln()) / (big_n.ln() - lo.ln()))
}
