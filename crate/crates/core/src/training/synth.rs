//! Seeded generator of small MiniLang functions with one-line summaries.
//! Identifiers are built from the words of the summary in snake or camel
//! case, so subtokens tie the two sides together.

use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::corpus::CorpusRecord;

const NOUNS: &[&str] = &[
    "price", "tax", "count", "total", "user", "item", "score", "limit", "index", "value", "balance", "rate",
    "size", "width", "height", "age", "speed", "distance", "weight", "amount", "offset", "level", "budget",
    "cost", "salary", "bonus", "length", "depth", "timeout", "step",
];

const QUALIFIERS: &[&str] = &["current", "max", "min", "new", "old", "base", "next", "last"];

const FUNCTIONS: &[(&str, &str)] = &[
    ("log_value", "log"),
    ("print", "print"),
    ("send_update", "send"),
    ("store_record", "store"),
    ("validate", "validate"),
];

struct Name {
    words: Vec<&'static str>,
    ident: String,
}

impl Name {
    fn phrase(&self) -> String {
        self.words.join(" ")
    }
}

fn make_name(rng: &mut impl Rng, noun: &'static str) -> Name {
    let mut words = Vec::new();
    if rng.random_bool(0.4) {
        words.push(*QUALIFIERS.choose(rng).expect("non-empty"));
    }
    words.push(noun);
    let ident = if words.len() > 1 && rng.random_bool(0.5) {
        let mut s = words[0].to_string();
        for w in &words[1..] {
            let mut cs = w.chars();
            let first = cs.next().expect("non-empty word");
            s.push(first.to_ascii_uppercase());
            s.extend(cs);
        }
        s
    } else {
        words.join("_")
    };
    Name { words, ident }
}

fn render(template: usize, a: &Name, b: &Name, call: (&str, &str), k: u32) -> (String, String) {
    let (x, y) = (&a.ident, &b.ident);
    let (pa, pb) = (a.phrase(), b.phrase());
    match template {
        0 => (format!("result = {x} + {y}\n"), format!("compute the sum of {pa} and {pb}")),
        1 => (format!("diff = {x} - {y}\n"), format!("return the difference between {pa} and {pb}")),
        2 => (format!("{x} = {x} * {y}\n"), format!("scale {pa} by {pb}")),
        3 => (format!("ratio = {x} / {y}\n"), format!("divide {pa} by {pb}")),
        4 => (
            format!("if {x} > {y}:\n  flag = 1\nelse:\n  flag = 0\n"),
            format!("check whether {pa} exceeds {pb}"),
        ),
        5 => (
            format!("while {x} > {y}:\n  {x} = {x} - {k}\n"),
            format!("decrease {pa} until it reaches {pb}"),
        ),
        6 => (
            format!("if {x} == 0:\n  {}({x})\n", call.0),
            format!("{} {pa} when it is null", call.1),
        ),
        7 => (format!("{}({x}, {y})\n", call.0), format!("{} {pa} and {pb}", call.1)),
        8 => (
            format!("best = {x}\nif {y} > best:\n  best = {y}\n"),
            format!("find the maximum of {pa} and {pb}"),
        ),
        9 => (format!("if {x} > {y}: {x} = {y}\n"), format!("clamp {pa} to {pb}")),
        10 => (
            format!("tmp = {x}\n{x} = {y}\n{y} = tmp\n"),
            format!("swap {pa} and {pb}"),
        ),
        _ => (
            format!("while {x} < {y}:\n  {x} = {x} + {k}\n  {}({x})\n", call.0),
            format!("increase {pa} up to {pb} and {} each step", call.1),
        ),
    }
}

const TEMPLATES: usize = 12;

/// `n` distinct (program, summary) records, identical for equal seeds.
pub fn synthetic_corpus(n: usize, seed: u64) -> Vec<super::corpus::CorpusRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let template = rng.random_range(0..TEMPLATES);
        let nouns: Vec<&&str> = NOUNS.choose_multiple(&mut rng, 2).collect();
        let a = make_name(&mut rng, nouns[0]);
        let b = make_name(&mut rng, nouns[1]);
        let call = *FUNCTIONS.choose(&mut rng).expect("non-empty");
        let k = rng.random_range(1..4);
        let (code, summary) = render(template, &a, &b, call, k);
        if seen.insert(code.clone()) {
            out.push(CorpusRecord::new(format!("synth-{:04}", out.len()), code, summary));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code_graph::parse_minilang;

    #[test]
    fn every_template_parses() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for t in 0..TEMPLATES {
            let a = make_name(&mut rng, "price");
            let b = make_name(&mut rng, "tax");
            let (code, summary) = render(t, &a, &b, FUNCTIONS[0], 2);
            parse_minilang(&code).unwrap_or_else(|e| panic!("template {t}: {e}\n{code}"));
            assert!(summary.contains("price"));
        }
    }

    #[test]
    fn deterministic_and_unique() {
        let a = synthetic_corpus(120, 9);
        assert_eq!(a, synthetic_corpus(120, 9));
        assert_ne!(a, synthetic_corpus(120, 10));
        let codes: HashSet<_> = a.iter().map(|r| &r.code).collect();
        assert_eq!(codes.len(), 120);
    }
}
