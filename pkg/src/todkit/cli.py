"""Command-line entry point.

Subcommands: label, export-train, relabel, eval, serve, chat, contam-scan,
contam-index. Configuration precedence is flags > environment (TODKIT_<KEY>)
> config file (--config, JSON) > defaults; the resolved configuration is
logged as a JSON line at startup for reproducibility.

Model endpoints are addressed as "mock:<scripted.json>" for the deterministic
scripted model or "http:<base-url>" for a completions-style endpoint.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import contamination, labeling, metrics
from .agent import AgentConfig, DbBackend, DialogueAgent
from .corpus import load_corpus
from .labeling import LabelerConfig, export_training_pairs, load_records, write_training_pairs
from .lm import HTTPLMClient, SamplingConfig, ScriptedLM
from .schema import load_schema

ENV_PREFIX = "TODKIT_"


def make_lm(spec: str, model: str = "", auth_token: str = ""):
    if spec.startswith("mock:"):
        return ScriptedLM.from_file(spec[len("mock:") :])
    if spec.startswith("http:") or spec.startswith("https:"):
        url = spec[len("http:") :] if spec.startswith("http:") and not spec.startswith("http://") else spec
        return HTTPLMClient(base_url=url, model=model, auth_token=auth_token)
    raise ValueError(f"unknown lm spec {spec!r}; use mock:<file> or http:<url>")


def _make_lm_from(args, file_cfg, key: str = "lm"):
    spec = _resolve(args, key, file_cfg) or _resolve(args, "lm", file_cfg)
    return make_lm(
        spec,
        model=str(_resolve(args, "lm-model", file_cfg, "")),
        auth_token=str(_resolve(args, "lm-token", file_cfg, "")),
    )


def _resolve(args: argparse.Namespace, key: str, file_cfg: dict, default=None):
    value = getattr(args, key.replace("-", "_"), None)
    if value is not None:
        return value
    env = os.environ.get(ENV_PREFIX + key.replace("-", "_").upper())
    if env is not None:
        return env
    if key in file_cfg:
        return file_cfg[key]
    return default


def _load_file_cfg(args) -> dict:
    path = getattr(args, "config", None)
    if path:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    return {}


def _log(obj: dict):
    sys.stderr.write(json.dumps(obj, ensure_ascii=False) + "\n")


def _labeler_config(args, file_cfg) -> LabelerConfig:
    sampling = SamplingConfig(
        num_samples=int(_resolve(args, "k", file_cfg, 10)),
        top_p=float(_resolve(args, "top-p", file_cfg, 0.9)),
        temperature=float(_resolve(args, "temperature", file_cfg, 1.0)),
        seed=int(_resolve(args, "seed", file_cfg, 0)),
    )
    return LabelerConfig(
        sampling=sampling,
        greedy=bool(getattr(args, "greedy", False)),
        compact=bool(getattr(args, "compact", False)),
        concurrency=int(_resolve(args, "concurrency", file_cfg, 1)),
    )


def cmd_label(args) -> int:
    file_cfg = _load_file_cfg(args)
    schema = load_schema(_resolve(args, "schema", file_cfg))
    corpus = load_corpus(_resolve(args, "corpus", file_cfg), schema)
    if args.dry_run:
        step = 0
        max_turns = max((len(d.turns) for d in corpus), default=0)
        for t in range(max_turns):
            for d in sorted(corpus, key=lambda d: d.dialogue_id):
                if t < len(d.turns):
                    print(json.dumps({"step": step, "dialogue_id": d.dialogue_id, "turn": t}))
                    step += 1
        return 0
    lm = _make_lm_from(args, file_cfg)
    cfg = _labeler_config(args, file_cfg)
    _log({"command": "label", "seed": cfg.sampling.seed, "k": cfg.sampling.num_samples,
          "greedy": cfg.greedy, "out": args.out})
    trace_fh = open(args.trace, "w", encoding="utf-8") if args.trace else None
    try:
        sink = (lambda entry: (trace_fh.write(json.dumps(entry) + "\n"), trace_fh.flush())) if trace_fh else None
        records = labeling.label_corpus(
            corpus, schema, lm, cfg,
            generation=0, checkpoint_path=args.out, trace_sink=sink,
        )
    finally:
        if trace_fh:
            trace_fh.close()
    _log({"labeled_turns": len(records), "failed": sum(r.failed for r in records)})
    return 0


def cmd_relabel(args) -> int:
    file_cfg = _load_file_cfg(args)
    schema = load_schema(_resolve(args, "schema", file_cfg))
    corpus = load_corpus(_resolve(args, "corpus", file_cfg), schema)
    lm = _make_lm_from(args, file_cfg, key="model")
    cfg = _labeler_config(args, file_cfg)
    _log({"command": "relabel", "generation": args.generation, "out": args.out})
    records = labeling.relabel(
        corpus, schema, lm, cfg, generation=args.generation, checkpoint_path=args.out
    )
    _log({"relabeled_turns": len(records)})
    return 0


def cmd_export_train(args) -> int:
    file_cfg = _load_file_cfg(args)
    schema = load_schema(_resolve(args, "schema", file_cfg))
    corpus = load_corpus(_resolve(args, "corpus", file_cfg), schema)
    records = load_records(args.records, schema)
    seed = int(_resolve(args, "seed", file_cfg, 0))
    pairs, skipped = export_training_pairs(records, corpus, schema, stage=args.stage, seed=seed)
    write_training_pairs(args.out, pairs)
    _log({"command": "export-train", "stage": args.stage, "pairs": len(pairs),
          "skipped": len(skipped), "seed": seed})
    for reason in skipped:
        _log({"skipped_pair": reason})
    return 0


def cmd_eval(args) -> int:
    file_cfg = _load_file_cfg(args)
    wanted = [m.strip() for m in args.metrics.split(",") if m.strip()]
    schema = load_schema(_resolve(args, "schema", file_cfg)) if _resolve(args, "schema", file_cfg) else None
    values: dict[str, float] = {}
    if "jga" in wanted:
        if schema is None:
            raise ValueError("jga needs --schema")
        pred = load_records(args.pred, schema)
        gold = load_records(args.gold, schema)
        pred_map = {(r.dialogue_id, r.turn): r.state for r in pred}
        gold_map = {(r.dialogue_id, r.turn): r.state for r in gold}
        if set(pred_map) != set(gold_map):
            raise ValueError("prediction and gold files cover different turns")
        keys = sorted(gold_map)
        values["jga"] = metrics.jga(
            [pred_map[k] for k in keys], [gold_map[k] for k in keys], schema=schema
        )
    if "e2e" in wanted:
        if schema is None:
            raise ValueError("e2e needs --schema")
        goals = metrics.load_goals(_resolve(args, "goals", file_cfg))
        db = DbBackend.from_file(_resolve(args, "db", file_cfg))
        hyps, refs, outcomes = [], [], []
        with open(args.pred, encoding="utf-8") as fh:
            transcripts = [json.loads(line) for line in fh if line.strip()]
        references = {}
        if args.gold:
            gold_corpus = load_corpus(args.gold, schema)
            references = {
                d.dialogue_id: [t.system_response for t in d.turns] for d in gold_corpus
            }
        for doc in transcripts:
            did = doc["dialogue_id"]
            if did not in goals:
                raise ValueError(f"no goal entry for dialogue {did!r}")
            outcomes.append(metrics.outcome_from_transcript(doc, goals[did], db, schema))
            refs_for = references.get(did, [])
            for i, turn in enumerate(doc.get("turns", [])):
                if i < len(refs_for):
                    hyps.append(turn.get("final_response", ""))
                    refs.append(refs_for[i])
        inform, success = metrics.inform_success(outcomes, schema)
        values["inform"] = inform
        values["success"] = success
        if hyps:
            values["bleu"] = metrics.bleu(hyps, refs)
            values["combined"] = metrics.combined(inform, success, values["bleu"])
    report = metrics.metrics_report(values)
    print(json.dumps(report, indent=2, sort_keys=True))
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True), encoding="utf-8")
    if args.table:
        sys.stderr.write(metrics.render_report_table(report) + "\n")
    return 0


def _build_agent(args, file_cfg) -> DialogueAgent:
    schema = load_schema(_resolve(args, "schema", file_cfg))
    lm = _make_lm_from(args, file_cfg)
    db_path = _resolve(args, "db", file_cfg)
    db = DbBackend.from_file(db_path) if db_path else DbBackend()
    sampling = SamplingConfig(
        num_samples=int(_resolve(args, "k", file_cfg, 10)),
        top_p=float(_resolve(args, "top-p", file_cfg, 0.9)),
        temperature=float(_resolve(args, "temperature", file_cfg, 1.0)),
        seed=int(_resolve(args, "seed", file_cfg, 0)),
    )
    return DialogueAgent(
        schema, lm, db,
        AgentConfig(
            sampling=sampling,
            greedy=bool(getattr(args, "greedy", False)),
            concurrency=int(_resolve(args, "concurrency", file_cfg, 1)),
        ),
    )


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    file_cfg = _load_file_cfg(args)
    agent = _build_agent(args, file_cfg)
    app = create_app(agent, static_dir=args.static)
    _log({"command": "serve", "host": args.host, "port": args.port})
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_chat(args) -> int:
    file_cfg = _load_file_cfg(args)
    agent = _build_agent(args, file_cfg)
    session = agent.new_session()
    _log({"command": "chat", "session_id": session.session_id})
    print("type a message (ctrl-d to quit)")
    for line in sys.stdin:
        utterance = line.strip()
        if not utterance:
            continue
        turn = agent.respond(session, utterance)
        print(f"agent> {turn.final_response}")
        if args.verbose:
            print(json.dumps(turn.to_json(), indent=2, ensure_ascii=False))
    return 0


def cmd_contam_index(args) -> int:
    index = contamination.CorpusIndex.build(args.corpus)
    index.save(args.out)
    _log({"command": "contam-index", "documents": len(index.doc_ids),
          "skipped": index.skipped_docs, "out": args.out})
    return 0


def cmd_contam_scan(args) -> int:
    if args.index and Path(args.index).exists():
        index = contamination.CorpusIndex.load(args.index)
    else:
        index = contamination.CorpusIndex.build(args.corpus)
        if args.index:
            index.save(args.index)
    queries = []
    with open(args.queries, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            queries.append(
                contamination.ContamQuery(
                    task=doc["task"],
                    utterance=doc["utterance"],
                    keywords=tuple(doc["keywords"]),
                    source=doc.get("source", ""),
                )
            )
    report = contamination.scan(index, queries, progress_path=args.progress)
    payload = json.dumps(report.to_json(), indent=2, sort_keys=True)
    print(payload)
    if args.out:
        Path(args.out).write_text(payload, encoding="utf-8")
    if args.csv:
        report.write_csv(args.csv)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="todkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--concurrency", type=int, default=None)
        p.add_argument("--lm-model", default=None, help="model name for http endpoints")
        p.add_argument("--lm-token", default=None, help="bearer token for http endpoints")

    p = sub.add_parser("label", help="pseudo-label a corpus (generation 0)")
    common(p)
    p.add_argument("--corpus")
    p.add_argument("--schema")
    p.add_argument("--lm")
    p.add_argument("--out", required=True)
    p.add_argument("--trace", help="execution trace JSONL")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--top-p", type=float, default=None)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--greedy", action="store_true")
    p.add_argument("--compact", action="store_true")
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(fn=cmd_label)

    p = sub.add_parser("relabel", help="relabel with a fine-tuned model")
    common(p)
    p.add_argument("--corpus")
    p.add_argument("--schema")
    p.add_argument("--model", help="lm spec of the fine-tuned model")
    p.add_argument("--lm")
    p.add_argument("--generation", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--top-p", type=float, default=None)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--greedy", action="store_true")
    p.set_defaults(fn=cmd_relabel)

    p = sub.add_parser("export-train", help="derive training pairs from records")
    common(p)
    p.add_argument("--stage", choices=[labeling.STAGE_EM, labeling.STAGE_E2E], required=True)
    p.add_argument("--records", required=True)
    p.add_argument("--corpus")
    p.add_argument("--schema")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_export_train)

    p = sub.add_parser("eval", help="compute metrics")
    common(p)
    p.add_argument("--metrics", default="jga")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold")
    p.add_argument("--schema")
    p.add_argument("--goals")
    p.add_argument("--db")
    p.add_argument("--out")
    p.add_argument("--table", action="store_true")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("serve", help="run the agent service")
    common(p)
    p.add_argument("--schema")
    p.add_argument("--lm")
    p.add_argument("--db")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--static", help="directory with the chat UI build")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--top-p", type=float, default=None)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--greedy", action="store_true")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("chat", help="terminal REPL against an in-process agent")
    common(p)
    p.add_argument("--schema")
    p.add_argument("--lm")
    p.add_argument("--db")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--top-p", type=float, default=None)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--greedy", action="store_true")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(fn=cmd_chat)

    p = sub.add_parser("contam-index", help="build the corpus inverted index")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_contam_index)

    p = sub.add_parser("contam-scan", help="scan a corpus for supervised pairs")
    common(p)
    p.add_argument("--corpus")
    p.add_argument("--index")
    p.add_argument("--queries", required=True)
    p.add_argument("--out")
    p.add_argument("--csv")
    p.add_argument("--progress")
    p.set_defaults(fn=cmd_contam_scan)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError, KeyError) as exc:
        _log({"error": f"{type(exc).__name__}: {exc}"})
        return 1


if __name__ == "__main__":
    sys.exit(main())
