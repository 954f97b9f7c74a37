//! Token search over record labels and attributes, tolerant to a single
//! typo (insertion, deletion, substitution or adjacent transposition) per
//! query token.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AttributeTable, RecordId};

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn deletes(token: &str) -> Vec<String> {
    let chars: Vec<char> = token.chars().collect();
    let mut out = Vec::with_capacity(chars.len() + 1);
    out.push(token.to_string());
    for i in 0..chars.len() {
        let mut s = String::with_capacity(token.len());
        s.extend(chars[..i].iter().chain(&chars[i + 1..]));
        out.push(s);
    }
    out
}

/// Optimal string alignment distance, capped: returns `cap + 1` once the
/// distance is known to exceed `cap`.
pub fn osa_distance(a: &str, b: &str, cap: usize) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.len().abs_diff(b.len()) > cap {
        return cap + 1;
    }
    let w = b.len() + 1;
    let mut d = vec![0usize; (a.len() + 1) * w];
    for j in 0..w {
        d[j] = j;
    }
    for i in 1..=a.len() {
        d[i * w] = i;
        let mut row_min = i;
        for j in 1..=b.len() {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            let mut v = (d[(i - 1) * w + j] + 1)
                .min(d[i * w + j - 1] + 1)
                .min(d[(i - 1) * w + j - 1] + cost);
            if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                v = v.min(d[(i - 2) * w + j - 2] + 1);
            }
            d[i * w + j] = v;
            row_min = row_min.min(v);
        }
        if row_min > cap {
            return cap + 1;
        }
    }
    d[a.len() * w + b.len()].min(cap + 1)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub record_id: RecordId,
    pub label: String,
    /// Query tokens matched exactly or within one edit.
    pub matched: usize,
    /// Query tokens matched exactly.
    pub exact: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchPage {
    pub total: usize,
    pub hits: Vec<SearchHit>,
}

/// Inverted index from tokens to records, with a deletion index for
/// single-edit lookups.
#[derive(Clone, Debug, Default)]
pub struct TokenIndex {
    records: Vec<(RecordId, String)>,
    tokens: Vec<String>,
    token_ids: HashMap<String, u32>,
    postings: Vec<Vec<u32>>,
    deletes: HashMap<String, Vec<u32>>,
}

impl TokenIndex {
    pub fn build(attrs: &AttributeTable) -> Self {
        let mut idx = Self::default();
        for (record, label, values) in attrs.iter() {
            let r = idx.records.len() as u32;
            idx.records.push((record.clone(), label.to_string()));
            let mut seen = HashSet::new();
            let text = std::iter::once(label).chain(values.iter().map(String::as_str));
            for tok in text.flat_map(tokenize) {
                if !seen.insert(tok.clone()) {
                    continue;
                }
                let t = match idx.token_ids.get(&tok) {
                    Some(&t) => t,
                    None => {
                        let t = idx.tokens.len() as u32;
                        for d in deletes(&tok) {
                            idx.deletes.entry(d).or_default().push(t);
                        }
                        idx.token_ids.insert(tok.clone(), t);
                        idx.tokens.push(tok);
                        idx.postings.push(Vec::new());
                        t
                    }
                };
                idx.postings[t as usize].push(r);
            }
        }
        idx
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Indexed tokens within one edit of `token`, flagged exact or not.
    fn expand(&self, token: &str) -> Vec<(u32, bool)> {
        let mut found: HashMap<u32, bool> = HashMap::new();
        for d in deletes(token) {
            for &t in self.deletes.get(&d).into_iter().flatten() {
                if found.contains_key(&t) {
                    continue;
                }
                let cand = &self.tokens[t as usize];
                if cand == token {
                    found.insert(t, true);
                } else if osa_distance(cand, token, 1) <= 1 {
                    found.insert(t, false);
                }
            }
        }
        found.into_iter().collect()
    }

    /// Records ranked by matched query tokens, then exact matches, then id.
    pub fn search(&self, query: &str, offset: usize, limit: usize) -> Result<SearchPage> {
        let mut q = tokenize(query);
        q.sort();
        q.dedup();
        if q.is_empty() {
            return Err(Error::InvalidParameter("empty search query".into()));
        }
        // record -> (matched, exact)
        let mut score: HashMap<u32, (usize, usize)> = HashMap::new();
        for tok in &q {
            let mut best: HashMap<u32, bool> = HashMap::new();
            for (t, exact) in self.expand(tok) {
                for &r in &self.postings[t as usize] {
                    let e = best.entry(r).or_insert(false);
                    *e |= exact;
                }
            }
            for (r, exact) in best {
                let s = score.entry(r).or_default();
                s.0 += 1;
                s.1 += usize::from(exact);
            }
        }
        let mut hits: Vec<_> = score.into_iter().collect();
        hits.sort_by(|(ra, a), (rb, b)| {
            b.0.cmp(&a.0)
                .then(b.1.cmp(&a.1))
                .then_with(|| self.records[*ra as usize].0.cmp(&self.records[*rb as usize].0))
        });
        let total = hits.len();
        let hits = hits
            .into_iter()
            .skip(offset)
            .take(limit)
            .map(|(r, (matched, exact))| {
                let (id, label) = &self.records[r as usize];
                SearchHit {
                    record_id: id.clone(),
                    label: label.clone(),
                    matched,
                    exact,
                }
            })
            .collect();
        Ok(SearchPage { total, hits })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn index() -> TokenIndex {
        let mut a = AttributeTable::new(vec!["org".into()]);
        a.insert("r1".into(), "Lutgard De Jonghe", vec!["KU Leuven".into()]).unwrap();
        a.insert("r2".into(), "L. C. De Jonghe", vec!["Imec".into()]).unwrap();
        a.insert("r3".into(), "Jan De Vries", vec!["Philips".into()]).unwrap();
        a.insert("r4".into(), "Maria Jonghe", vec!["".into()]).unwrap();
        TokenIndex::build(&a)
    }

    fn ids(p: &SearchPage) -> Vec<&str> {
        p.hits.iter().map(|h| h.record_id.as_str()).collect()
    }

    #[test]
    fn full_matches_rank_first() {
        let p = index().search("De Jonghe", 0, 10).unwrap();
        assert_eq!(ids(&p), ["r1", "r2", "r3", "r4"]);
        assert_eq!(p.hits[0].matched, 2);
        assert_eq!(p.hits[2].matched, 1);
    }

    #[test]
    fn tolerates_one_typo() {
        let p = index().search("Jonhge", 0, 10).unwrap();
        assert_eq!(ids(&p), ["r1", "r2", "r4"]);
        assert_eq!(p.hits[0].exact, 0);
        let p = index().search("leuvne", 0, 10).unwrap();
        assert_eq!(ids(&p), ["r1"]);
        assert!(index().search("jnhoge", 0, 10).unwrap().hits.is_empty());
    }

    #[test]
    fn exact_beats_fuzzy() {
        let mut a = AttributeTable::new(vec![]);
        a.insert("a".into(), "Jonghe", vec![]).unwrap();
        a.insert("b".into(), "Jonge", vec![]).unwrap();
        let p = TokenIndex::build(&a).search("jonge", 0, 10).unwrap();
        assert_eq!(ids(&p), ["b", "a"]);
    }

    #[test]
    fn unknown_and_empty_queries() {
        assert!(index().search("zzzzqq", 0, 10).unwrap().hits.is_empty());
        assert!(index().search("  ,. ", 0, 10).is_err());
    }

    #[test]
    fn pagination() {
        let p = index().search("de jonghe", 1, 2).unwrap();
        assert_eq!(p.total, 4);
        assert_eq!(ids(&p), ["r2", "r3"]);
    }

    fn naive_osa(a: &[char], b: &[char]) -> usize {
        let mut d = vec![vec![0; b.len() + 1]; a.len() + 1];
        for (i, row) in d.iter_mut().enumerate() {
            row[0] = i;
        }
        for j in 0..=b.len() {
            d[0][j] = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let c = usize::from(a[i - 1] != b[j - 1]);
                d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + c);
                if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                    d[i][j] = d[i][j].min(d[i - 2][j - 2] + 1);
                }
            }
        }
        d[a.len()][b.len()]
    }

    proptest! {
        #[test]
        fn capped_distance_agrees(a in "[abc]{0,7}", b in "[abc]{0,7}") {
            let full = naive_osa(&a.chars().collect::<Vec<_>>(), &b.chars().collect::<Vec<_>>());
            prop_assert_eq!(osa_distance(&a, &b, 1), full.min(2));
            prop_assert_eq!(osa_distance(&a, &b, 10), full);
        }

        #[test]
        fn single_edit_lookup_is_complete(words in proptest::collection::vec("[abcd]{1,6}", 1..20), q in "[abcd]{1,6}") {
            let mut a = AttributeTable::new(vec![]);
            for (i, w) in words.iter().enumerate() {
                a.insert(format!("r{i:02}").into(), w.clone(), vec![]).unwrap();
            }
            let p = TokenIndex::build(&a).search(&q, 0, usize::MAX).unwrap();
            let got: HashSet<String> = p.hits.iter().map(|h| h.record_id.to_string()).collect();
            let want: HashSet<String> = words
                .iter()
                .enumerate()
                .filter(|(_, w)| osa_distance(w, &q, 1) <= 1)
                .map(|(i, _)| format!("r{i:02}"))
                .collect();
            prop_assert_eq!(got, want);
        }
    }
}
