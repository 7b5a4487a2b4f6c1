use std::path::{Path, PathBuf};

use gsn_cli::{run, EXIT_DATA, EXIT_OK, EXIT_USAGE};
use gsn_core::code_graph::build_program_graph_from_source;
use gsn_core::retrieval::{evaluate_testset, Metrics};
use gsn_core::training::{load_checkpoint, load_corpus, GraphBuilder};
use gsn_core::vocab::Vocabulary;
use serde_json::Value;

const SNIPPET: &str = "if x > 0:\n  x = x + y\nfn_a(x)\n";

struct Output {
    code: i32,
    out: String,
    err: String,
}

fn gsn(args: &[&str]) -> Output {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("gsn").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    Output {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn lines(text: &str) -> Vec<Value> {
    text.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        Workspace { _dir: dir, root }
    }

    fn path(&self, name: &str) -> String {
        self.root.join(name).display().to_string()
    }

    /// Small-model flags plus absolute artifact paths.
    fn args<'a>(&'a self, paths: &'a [String; 4], rest: &[&'a str]) -> Vec<&'a str> {
        let mut v = vec![
            "--set", "dim=8", "--set", "max_epochs=2", "--set", "batch_size=8", "--set", "seed=3",
            "--corpus", &paths[0], "--vocab", &paths[1], "--checkpoint", &paths[2], "--index", &paths[3],
        ];
        v.extend_from_slice(rest);
        v
    }

    fn paths(&self) -> [String; 4] {
        ["corpus.jsonl", "vocab.txt", "model.ckpt", "index.gsnv"].map(|n| self.path(n))
    }
}

fn trained(n: &str) -> (Workspace, [String; 4]) {
    let ws = Workspace::new();
    let p = ws.paths();
    let r = gsn(&["synth", "--n", n, "--seed", "5", "--out", &p[0]]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    for cmd in ["train", "index"] {
        let r = gsn(&ws.args(&p, &[cmd]));
        assert_eq!(r.code, EXIT_OK, "{cmd}: {}", r.err);
    }
    (ws, p)
}

#[test]
fn graph_dump_matches_library_dump() {
    let ws = Workspace::new();
    let file = ws.path("f.ml");
    std::fs::write(&file, SNIPPET).unwrap();
    let r = gsn(&["graph", "--lang", "minilang", "--in", &file, "--dump"]);
    assert_eq!(r.code, EXIT_OK);
    assert_eq!(r.out, build_program_graph_from_source(SNIPPET, 200).unwrap().dump());
    assert!(r.out.lines().all(|l| l.starts_with("NODE\t") || l.starts_with("E\t")));

    let r = gsn(&["graph", "--lang", "minilang", "--in", &file, "--stats"]);
    let stats = &lines(&r.out)[0];
    assert_eq!(stats["edges"]["LastWrite"], 1);
    assert_eq!(stats["edges"]["ComputedFrom"], 2);
}

#[test]
fn summary_graph_from_conllu_and_text() {
    let ws = Workspace::new();
    let conllu = ws.path("s.conllu");
    std::fs::write(
        &conllu,
        "1\tcheck\tcheck\tVERB\t_\t_\t0\troot\t_\t_\n2\tfor\tfor\tADP\t_\t_\t1\tprep\t_\t_\n3\tnull\tnull\tNOUN\t_\t_\t2\tpobj\t_\t_\n\n",
    )
    .unwrap();
    let r = gsn(&["graph", "--lang", "conllu", "--in", &conllu]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(r.out.contains("E\t1\t0\tprep\n"));
    assert!(r.out.contains("E\t2\t1\tpobj\n"));
    std::fs::write(&conllu, "1\tcheck\tcheck\tVERB\t_\t_\t0\troot\t_\t_\n2\tnull\tnull\tNOUN\t_\t_\t1\tobl\t_\t_\n\n").unwrap();
    let r = gsn(&["graph", "--lang", "conllu", "--in", &conllu, "--stats"]);
    assert_eq!(lines(&r.out)[0]["unknown_relations"], 1);

    let text = ws.path("q.txt");
    std::fs::write(&text, "check for null").unwrap();
    let r = gsn(&["graph", "--lang", "text", "--in", &text, "--stats"]);
    assert_eq!(lines(&r.out)[0]["tokens"], 3);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(gsn(&["frobnicate"]).code, EXIT_USAGE);
    assert_eq!(gsn(&["--set", "colour=blue", "vocab"]).code, EXIT_USAGE);
    assert_eq!(gsn(&["--set", "heads=3", "vocab"]).code, EXIT_USAGE);
    assert_eq!(gsn(&["sweep", "--param", "width", "--values", "1..2"]).code, EXIT_USAGE);
    let r = gsn(&["--help"]);
    assert_eq!(r.code, EXIT_OK);
    assert!(r.out.contains("sweep"));
}

#[test]
fn data_errors_exit_two() {
    let ws = Workspace::new();
    let p = ws.paths();
    let r = gsn(&ws.args(&p, &["vocab"]));
    assert_eq!(r.code, EXIT_DATA);
    assert!(r.err.starts_with("error: "));
    std::fs::write(&p[0], "{\"id\": 1}\n").unwrap();
    assert_eq!(gsn(&ws.args(&p, &["vocab"])).code, EXIT_DATA);
    let bad = ws.path("bad.ml");
    std::fs::write(&bad, "x = = 1\n").unwrap();
    assert_eq!(gsn(&["graph", "--lang", "minilang", "--in", &bad]).code, EXIT_DATA);
}

#[test]
fn config_file_and_overrides() {
    let ws = Workspace::new();
    let cfg = ws.path("gsn.conf");
    let corpus = ws.path("c.jsonl");
    std::fs::write(&cfg, format!("# desk run\ncorpus = {corpus}\n")).unwrap();
    assert_eq!(gsn(&["--config", &cfg, "synth", "--n", "12"]).code, EXIT_OK);
    assert_eq!(load_corpus(&corpus).unwrap().len(), 12);
    std::fs::write(&cfg, "dim = 129\n").unwrap();
    assert_eq!(gsn(&["--config", &cfg, "vocab"]).code, EXIT_USAGE);
    assert_eq!(gsn(&["--config", &ws.path("missing.conf"), "vocab"]).code, EXIT_USAGE);
}

#[test]
fn pipeline_query_and_eval() {
    let (ws, p) = trained("40");
    assert!(Path::new(&p[1]).exists());

    let r = gsn(&ws.args(&p, &["query", "--q", "return the largest item"]));
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let hits = lines(&r.out);
    assert_eq!(hits.len(), 10);
    let scores: Vec<f64> = hits.iter().map(|h| h["score"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));

    let shifted = lines(&gsn(&ws.args(&p, &["query", "--q", "return the largest item", "--score-mode", "plus-one"])).out);
    for (a, b) in hits.iter().zip(&shifted) {
        assert_eq!(a["id"], b["id"]);
        assert_eq!(b["score"].as_f64().unwrap(), a["score"].as_f64().unwrap() + 1.0);
    }

    let r = gsn(&ws.args(&p, &["query", "--q", "anything", "--k", "100"]));
    assert_eq!(lines(&r.out).len(), 40);
    assert_eq!(gsn(&ws.args(&p, &["query", "--q", "anything", "--k", "0"])).code, EXIT_USAGE);

    let r = gsn(&ws.args(&p, &["eval"]));
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let cli: Metrics = serde_json::from_str(r.out.trim()).unwrap();
    let model = load_checkpoint(&p[2]).unwrap();
    let vocab = Vocabulary::load(&p[1]).unwrap();
    let (pairs, _) = GraphBuilder::default().prepare(&load_corpus(&p[0]).unwrap(), &vocab);
    assert_eq!(cli, evaluate_testset(&model, &pairs).unwrap());
}

#[test]
fn stale_index_is_rejected() {
    let (ws, p) = trained("24");
    let old_index = std::fs::read(&p[3]).unwrap();
    assert_eq!(gsn(&ws.args(&p, &["--set", "seed=4", "train"])).code, EXIT_OK);
    std::fs::write(&p[3], old_index).unwrap();
    let r = gsn(&ws.args(&p, &["query", "--q", "sum"]));
    assert_eq!(r.code, EXIT_DATA);
    assert!(r.err.contains("fingerprint"), "{}", r.err);
}

#[test]
fn sweep_and_ablation_emit_one_record_per_run() {
    let ws = Workspace::new();
    let p = ws.paths();
    gsn(&["synth", "--n", "30", "--out", &p[0]]);
    let r = gsn(&ws.args(&p, &["sweep", "--param", "hops", "--values", "1..2", "--test", "8", "--epochs", "1"]));
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let recs = lines(&r.out);
    assert_eq!(recs.len(), 2);
    assert_eq!(recs[1]["value"], 2);
    assert!(recs.iter().all(|r| r["metrics"]["mrr"].as_f64().unwrap().is_finite()));

    let r = gsn(&ws.args(&p, &["ablation", "--seeds", "0", "--test", "8", "--epochs", "1"]));
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let labels: Vec<_> = lines(&r.out).iter().map(|r| r["label"].as_str().unwrap().to_string()).collect();
    assert_eq!(labels, ["full", "biggnn-only", "attention-only"]);
}
