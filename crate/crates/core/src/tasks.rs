//! Episode generators for the algorithmic tasks.
//!
//! * Dictionary inference: a fresh random bijection between the source
//!   letters `a..=m` and the target letters `n..=z` each episode; `k` support
//!   pairs are shown, then a query built from letters seen in the support
//!   set must be translated.
//! * Double copy: reproduce a random sequence twice.
//! * Priority sort: output the `m` highest-priority 8-bit vectors of `n`, in
//!   descending priority.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::{Error, Result};

pub const LETTERS: usize = 26;
pub const HALF: usize = 13;

/// Special tokens of the dictionary task, after the 26 letters.
pub mod dict {
    /// End of a sequence (closes each support target and the query).
    pub const EOS: usize = 26;
    /// Separates a support source sequence from its target.
    pub const SEP: usize = 27;
    /// End of the support set.
    pub const END_SET: usize = 28;
    /// Answer placeholder.
    pub const PLACEHOLDER: usize = 29;
    pub const VOCAB: usize = 30;
}

pub const SORT_BITS: usize = 8;
/// Sort input channels: 8 bits, priority, placeholder flag.
pub const SORT_CHANNELS: usize = SORT_BITS + 2;

pub fn letter(c: char) -> usize {
    (c as u8 - b'a') as usize
}

pub fn letters(s: &str) -> Vec<usize> {
    s.chars().map(letter).collect()
}

pub fn to_string(ids: &[usize]) -> String {
    ids.iter()
        .map(|&i| if i < LETTERS { (b'a' + i as u8) as char } else { '?' })
        .collect()
}

/// A partial bijection on the 26 letters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bijection {
    forward: [Option<usize>; LETTERS],
    backward: [Option<usize>; LETTERS],
}

impl Bijection {
    /// A uniformly random bijection from `a..=m` onto `n..=z`.
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        let mut targets: Vec<usize> = (HALF..LETTERS).collect();
        targets.shuffle(rng);
        let pairs: Vec<(usize, usize)> = (0..HALF).zip(targets).collect();
        Self::from_pairs(&pairs).expect("permutation is a bijection")
    }

    /// Builds a bijection from `(source, target)` letter pairs; repeated
    /// pairs are allowed, conflicting ones are not.
    pub fn from_pairs(pairs: &[(usize, usize)]) -> Result<Self> {
        let mut b = Self {
            forward: [None; LETTERS],
            backward: [None; LETTERS],
        };
        for &(s, t) in pairs {
            if s >= LETTERS || t >= LETTERS {
                return Err(Error::Task(format!("letter out of range in ({s}, {t})")));
            }
            match (b.forward[s], b.backward[t]) {
                (None, None) => {
                    b.forward[s] = Some(t);
                    b.backward[t] = Some(s);
                }
                (Some(x), Some(y)) if x == t && y == s => {}
                _ => return Err(Error::Task(format!("pair ({s}, {t}) breaks the bijection"))),
            }
        }
        Ok(b)
    }

    pub fn map(&self, s: usize) -> Option<usize> {
        self.forward.get(s).copied().flatten()
    }

    pub fn inverse(&self, t: usize) -> Option<usize> {
        self.backward.get(t).copied().flatten()
    }

    pub fn translate(&self, seq: &[usize]) -> Option<Vec<usize>> {
        seq.iter().map(|&s| self.map(s)).collect()
    }

    pub fn domain(&self) -> Vec<usize> {
        (0..LETTERS).filter(|&s| self.forward[s].is_some()).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Inputs {
    Tokens(Vec<usize>),
    Vectors(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    Tokens(Vec<usize>),
    Bits(Vec<Vec<u8>>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Tokens(t) => t.len(),
            Targets::Bits(b) => b.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One episode. `targets` lists the supervised outputs in order, one per
/// position where `target_mask` is true.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskEpisode {
    pub inputs: Inputs,
    pub targets: Targets,
    pub target_mask: Vec<bool>,
}

impl TaskEpisode {
    pub fn len(&self) -> usize {
        self.target_mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Checks the structural invariants against a vocabulary size (ignored
    /// for vector inputs).
    pub fn validate(&self, vocab: usize) -> Result<()> {
        let n_in = match &self.inputs {
            Inputs::Tokens(t) => {
                if let Some(&bad) = t.iter().find(|&&x| x >= vocab) {
                    return Err(Error::Task(format!("token {bad} outside vocabulary {vocab}")));
                }
                t.len()
            }
            Inputs::Vectors(v) => v.len(),
        };
        if n_in != self.target_mask.len() {
            return Err(Error::Task(format!(
                "{n_in} inputs but mask of {}",
                self.target_mask.len()
            )));
        }
        let supervised = self.target_mask.iter().filter(|&&m| m).count();
        if supervised != self.targets.len() {
            return Err(Error::Task(format!(
                "{supervised} supervised positions but {} targets",
                self.targets.len()
            )));
        }
        if let Targets::Tokens(t) = &self.targets {
            if let Some(&bad) = t.iter().find(|&&x| x >= vocab) {
                return Err(Error::Task(format!("target {bad} outside vocabulary {vocab}")));
            }
        }
        Ok(())
    }

    /// Line format: `inputs | mask | targets`, whitespace-separated fields.
    /// Token fields are ids; vector fields are comma-joined components.
    pub fn to_line(&self) -> String {
        let mut s = String::new();
        match &self.inputs {
            Inputs::Tokens(t) => join_ids(&mut s, t),
            Inputs::Vectors(v) => join_vecs(&mut s, v.iter().map(|x| x.iter().map(|c| c.to_string()))),
        }
        s.push_str(" |");
        for &m in &self.target_mask {
            s.push_str(if m { " 1" } else { " 0" });
        }
        s.push_str(" |");
        match &self.targets {
            Targets::Tokens(t) => join_ids(&mut s, t),
            Targets::Bits(b) => join_vecs(&mut s, b.iter().map(|x| x.iter().map(|c| c.to_string()))),
        }
        s
    }

    pub fn from_line(line: &str) -> Result<Self> {
        let sections: Vec<&str> = line.trim().split('|').collect();
        let [inp, mask, tgt] = sections[..] else {
            return Err(Error::Parse(format!("expected 3 sections, got {}", sections.len())));
        };
        let vector_inputs = inp.contains(',');
        let inputs = if vector_inputs {
            Inputs::Vectors(
                inp.split_whitespace()
                    .map(|f| f.split(',').map(parse::<f64>).collect())
                    .collect::<Result<_>>()?,
            )
        } else {
            Inputs::Tokens(inp.split_whitespace().map(parse::<usize>).collect::<Result<_>>()?)
        };
        let target_mask = mask
            .split_whitespace()
            .map(|f| match f {
                "1" => Ok(true),
                "0" => Ok(false),
                other => Err(Error::Parse(format!("bad mask field `{other}`"))),
            })
            .collect::<Result<_>>()?;
        let targets = if tgt.contains(',') {
            Targets::Bits(
                tgt.split_whitespace()
                    .map(|f| f.split(',').map(parse::<u8>).collect())
                    .collect::<Result<_>>()?,
            )
        } else {
            Targets::Tokens(tgt.split_whitespace().map(parse::<usize>).collect::<Result<_>>()?)
        };
        Ok(Self {
            inputs,
            targets,
            target_mask,
        })
    }
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Parse(format!("bad field `{s}`")))
}

fn join_ids(s: &mut String, ids: &[usize]) {
    for i in ids {
        let _ = write!(s, " {i}");
    }
}

fn join_vecs<I, J>(s: &mut String, rows: I)
where
    I: Iterator<Item = J>,
    J: Iterator<Item = String>,
{
    for r in rows {
        s.push(' ');
        s.push_str(&r.collect::<Vec<_>>().join(","));
    }
}

/// Lays out a dictionary episode:
/// `[src SEP tgt EOS]*k END_SET query EOS PLACEHOLDER*l`, with the
/// translated query as targets on the placeholders.
pub fn encode_dictionary(support: &[Vec<usize>], query: &[usize], mapping: &Bijection) -> Result<TaskEpisode> {
    let mut tokens = Vec::new();
    for src in support {
        let tgt = mapping
            .translate(src)
            .ok_or_else(|| Error::Task("support letter outside the mapping".into()))?;
        tokens.extend_from_slice(src);
        tokens.push(dict::SEP);
        tokens.extend(tgt);
        tokens.push(dict::EOS);
    }
    tokens.push(dict::END_SET);
    tokens.extend_from_slice(query);
    tokens.push(dict::EOS);
    let answer = mapping
        .translate(query)
        .ok_or_else(|| Error::Task("query letter outside the mapping".into()))?;
    let mut mask = vec![false; tokens.len()];
    for _ in 0..query.len() {
        tokens.push(dict::PLACEHOLDER);
        mask.push(true);
    }
    Ok(TaskEpisode {
        inputs: Inputs::Tokens(tokens),
        targets: Targets::Tokens(answer),
        target_mask: mask,
    })
}

pub fn dictionary_len(k: usize, l: usize) -> usize {
    k * (2 * l + 2) + l + 2 + l
}

/// A dictionary-inference episode with a fresh bijection.
pub fn gen_dictionary_inference<R: Rng>(k: usize, l: usize, rng: &mut R) -> Result<TaskEpisode> {
    if k == 0 || l == 0 {
        return Err(Error::Task(format!(
            "dictionary inference needs k, l >= 1 (got {k}, {l})"
        )));
    }
    let mapping = Bijection::random(rng);
    let support: Vec<Vec<usize>> = (0..k)
        .map(|_| (0..l).map(|_| rng.gen_range(0..HALF)).collect())
        .collect();
    let mut seen: Vec<usize> = support.iter().flatten().copied().collect();
    seen.sort_unstable();
    seen.dedup();
    let query: Vec<usize> = (0..l).map(|_| seen[rng.gen_range(0..seen.len())]).collect();
    encode_dictionary(&support, &query, &mapping)
}

pub fn double_copy_vocab(alphabet: usize) -> usize {
    alphabet + 2
}

/// `[s EOS PLACEHOLDER*2len]` with target `s s`. `EOS = alphabet`,
/// `PLACEHOLDER = alphabet + 1`.
pub fn encode_double_copy(seq: &[usize], alphabet: usize) -> TaskEpisode {
    let mut tokens = seq.to_vec();
    tokens.push(alphabet);
    let mut mask = vec![false; tokens.len()];
    tokens.extend(std::iter::repeat_n(alphabet + 1, 2 * seq.len()));
    mask.extend(std::iter::repeat_n(true, 2 * seq.len()));
    let mut targets = seq.to_vec();
    targets.extend_from_slice(seq);
    TaskEpisode {
        inputs: Inputs::Tokens(tokens),
        targets: Targets::Tokens(targets),
        target_mask: mask,
    }
}

pub fn gen_double_copy<R: Rng>(len: usize, alphabet: usize, rng: &mut R) -> Result<TaskEpisode> {
    if len == 0 || alphabet == 0 {
        return Err(Error::Task(format!(
            "double copy needs len, alphabet >= 1 (got {len}, {alphabet})"
        )));
    }
    let seq: Vec<usize> = (0..len).map(|_| rng.gen_range(0..alphabet)).collect();
    Ok(encode_double_copy(&seq, alphabet))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SortItem {
    pub bits: [u8; SORT_BITS],
    pub priority: f64,
}

/// Items followed by `m` placeholders; targets are the bits of the `m`
/// highest-priority items, highest first.
pub fn encode_priority_sort(items: &[SortItem], m: usize) -> Result<TaskEpisode> {
    if m > items.len() {
        return Err(Error::Task(format!("cannot select {m} of {} items", items.len())));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| items[b].priority.total_cmp(&items[a].priority));
    let mut inputs: Vec<Vec<f64>> = items
        .iter()
        .map(|it| {
            let mut v: Vec<f64> = it.bits.iter().map(|&b| b as f64).collect();
            v.push(it.priority);
            v.push(0.0);
            v
        })
        .collect();
    let mut mask = vec![false; items.len()];
    for _ in 0..m {
        let mut v = vec![0.0; SORT_CHANNELS];
        v[SORT_CHANNELS - 1] = 1.0;
        inputs.push(v);
        mask.push(true);
    }
    let targets = order[..m].iter().map(|&i| items[i].bits.to_vec()).collect();
    Ok(TaskEpisode {
        inputs: Inputs::Vectors(inputs),
        targets: Targets::Bits(targets),
        target_mask: mask,
    })
}

pub fn gen_sort_items<R: Rng>(n: usize, rng: &mut R) -> Vec<SortItem> {
    let mut items: Vec<SortItem> = Vec::with_capacity(n);
    while items.len() < n {
        let priority = rng.gen_range(-1.0..=1.0);
        let mut bits = [0u8; SORT_BITS];
        for b in &mut bits {
            *b = rng.gen_range(0..=1);
        }
        if items.iter().any(|it| it.priority == priority) {
            continue;
        }
        items.push(SortItem { bits, priority });
    }
    items
}

pub fn gen_priority_sort<R: Rng>(n: usize, m: usize, rng: &mut R) -> Result<TaskEpisode> {
    if n == 0 || m == 0 || m > n {
        return Err(Error::Task(format!(
            "priority sort needs 1 <= m <= n (got n={n}, m={m})"
        )));
    }
    encode_priority_sort(&gen_sort_items(n, rng), m)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputKind {
    /// One class per supervised position (softmax, cross-entropy).
    Classes,
    /// Independent binary outputs (sigmoid, binary cross-entropy).
    Bits,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskSpec {
    DictionaryInference { k: usize, l: usize },
    DoubleCopy { len: usize, alphabet: usize },
    PrioritySort { n: usize, m: usize },
}

impl TaskSpec {
    pub fn name(&self) -> &'static str {
        match self {
            TaskSpec::DictionaryInference { .. } => "dictionary",
            TaskSpec::DoubleCopy { .. } => "double_copy",
            TaskSpec::PrioritySort { .. } => "priority_sort",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            TaskSpec::DictionaryInference { k, l } => k >= 1 && l >= 1,
            TaskSpec::DoubleCopy { len, alphabet } => len >= 1 && alphabet >= 1,
            TaskSpec::PrioritySort { n, m } => m >= 1 && m <= n,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Task(format!("invalid task parameters {self:?}")))
        }
    }

    /// Width of the per-step input features.
    pub fn input_dim(&self) -> usize {
        match *self {
            TaskSpec::DictionaryInference { .. } => dict::VOCAB,
            TaskSpec::DoubleCopy { alphabet, .. } => double_copy_vocab(alphabet),
            TaskSpec::PrioritySort { .. } => SORT_CHANNELS,
        }
    }

    pub fn n_outputs(&self) -> usize {
        match *self {
            TaskSpec::PrioritySort { .. } => SORT_BITS,
            _ => self.input_dim(),
        }
    }

    pub fn output_kind(&self) -> OutputKind {
        match self {
            TaskSpec::PrioritySort { .. } => OutputKind::Bits,
            _ => OutputKind::Classes,
        }
    }

    pub fn episode_len(&self) -> usize {
        match *self {
            TaskSpec::DictionaryInference { k, l } => dictionary_len(k, l),
            TaskSpec::DoubleCopy { len, .. } => 3 * len + 1,
            TaskSpec::PrioritySort { n, m } => n + m,
        }
    }

    pub fn generate<R: Rng>(&self, rng: &mut R) -> Result<TaskEpisode> {
        match *self {
            TaskSpec::DictionaryInference { k, l } => gen_dictionary_inference(k, l, rng),
            TaskSpec::DoubleCopy { len, alphabet } => gen_double_copy(len, alphabet, rng),
            TaskSpec::PrioritySort { n, m } => gen_priority_sort(n, m, rng),
        }
    }

    pub fn batch<R: Rng>(&self, size: usize, rng: &mut R) -> Result<Vec<TaskEpisode>> {
        (0..size).map(|_| self.generate(rng)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::{stream_rng, Stream};

    #[test]
    fn worked_translation_example() {
        // abc -> def, tla -> qzd; query tca -> qfd.
        let pairs: Vec<(usize, usize)> = "abctla"
            .chars()
            .zip("defqzd".chars())
            .map(|(s, t)| (letter(s), letter(t)))
            .collect();
        let f = Bijection::from_pairs(&pairs).unwrap();
        let ep = encode_dictionary(&[letters("abc"), letters("tla")], &letters("tca"), &f).unwrap();
        let Targets::Tokens(t) = &ep.targets else { panic!() };
        assert_eq!(to_string(t), "qfd");
        assert_eq!(ep.len(), dictionary_len(2, 3));
        ep.validate(dict::VOCAB).unwrap();
    }

    #[test]
    fn conflicting_pairs_rejected() {
        assert!(Bijection::from_pairs(&[(0, 13), (0, 14)]).is_err());
        assert!(Bijection::from_pairs(&[(0, 13), (1, 13)]).is_err());
    }

    #[test]
    fn single_letter_episode() {
        let mut rng = stream_rng(3, Stream::TrainData);
        let ep = gen_dictionary_inference(1, 1, &mut rng).unwrap();
        let Inputs::Tokens(tok) = &ep.inputs else { panic!() };
        // [src SEP tgt EOS END_SET query EOS PH]
        assert_eq!(tok.len(), 8);
        assert_eq!(tok[5], tok[0]);
        let Targets::Tokens(t) = &ep.targets else { panic!() };
        assert_eq!(t, &vec![tok[2]]);
    }

    #[test]
    fn double_copy_example() {
        let ep = encode_double_copy(&[0, 0], 10);
        assert_eq!(ep.targets, Targets::Tokens(vec![0, 0, 0, 0]));
        assert_eq!(ep.inputs, Inputs::Tokens(vec![0, 0, 10, 11, 11, 11, 11]));
        ep.validate(double_copy_vocab(10)).unwrap();
    }

    #[test]
    fn presorted_priorities() {
        let items: Vec<SortItem> = (0..20)
            .map(|i| SortItem {
                bits: [(i % 2) as u8; 8],
                priority: 1.0 - i as f64 * 0.1,
            })
            .collect();
        let ep = encode_priority_sort(&items, 16).unwrap();
        let Targets::Bits(b) = &ep.targets else { panic!() };
        for (i, bits) in b.iter().enumerate() {
            assert_eq!(bits, &items[i].bits.to_vec());
        }
        let full = encode_priority_sort(&items, 20).unwrap();
        assert_eq!(full.targets.len(), 20);
    }

    #[test]
    fn invalid_parameters() {
        let mut rng = stream_rng(0, Stream::TrainData);
        assert!(gen_dictionary_inference(0, 1, &mut rng).is_err());
        assert!(gen_dictionary_inference(1, 0, &mut rng).is_err());
        assert!(gen_double_copy(0, 10, &mut rng).is_err());
        assert!(gen_priority_sort(4, 5, &mut rng).is_err());
    }

    #[test]
    fn line_format_round_trip() {
        let mut rng = stream_rng(8, Stream::TrainData);
        for spec in [
            TaskSpec::DictionaryInference { k: 3, l: 2 },
            TaskSpec::DoubleCopy { len: 4, alphabet: 10 },
            TaskSpec::PrioritySort { n: 5, m: 3 },
        ] {
            let ep = spec.generate(&mut rng).unwrap();
            let line = ep.to_line();
            assert_eq!(TaskEpisode::from_line(&line).unwrap(), ep, "{line}");
        }
        assert!(TaskEpisode::from_line("1 2 3 | 0 1").is_err());
        assert!(TaskEpisode::from_line("1 2 | 0 x | 3").is_err());
    }

    #[test]
    fn line_format_is_literal() {
        let ep = encode_double_copy(&[3], 10);
        assert_eq!(ep.to_line(), " 3 10 11 11 | 0 0 1 1 | 3 3");
    }
}
