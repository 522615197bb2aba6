from pathlib import Path

import pytest

from todkit.corpus import EMPTY_STATE, apply_state_change
from todkit.labeling import (
    CHANNEL_WEIGHT,
    LabelerConfig,
    STAGE_E2E,
    STAGE_EM,
    export_training_pairs,
    label_corpus,
    load_records,
    record_to_json,
    relabel,
    save_records,
    write_training_pairs,
)
from todkit.lm import LMTransportError, SamplingConfig, ScriptedLM

FIXTURES = Path(__file__).parent / "fixtures"


def tiny_cfg(seed=0, **kwargs):
    return LabelerConfig(
        sampling=SamplingConfig(num_samples=6, top_p=1.0, seed=seed), **kwargs
    )


def run_tiny(tiny_corpus, schema, tiny_lm, tmp_path=None, trace=None, cfg=None):
    checkpoint = None if tmp_path is None else tmp_path / "records.jsonl"
    sink = trace.append if trace is not None else None
    records = label_corpus(
        tiny_corpus, schema, tiny_lm, cfg or tiny_cfg(),
        generation=0, checkpoint_path=checkpoint, trace_sink=sink,
    )
    return records, checkpoint


def test_processing_order_turn_major(tiny_corpus, schema, tiny_lm):
    trace = []
    run_tiny(tiny_corpus, schema, tiny_lm, trace=trace)
    order = [(t["dialogue_id"], t["turn"]) for t in trace]
    assert order == [("t1", 0), ("t2", 0), ("t1", 1), ("t2", 1)]
    assert [t["step"] for t in trace] == [0, 1, 2, 3]


def test_expected_labels_from_scripted_model(tiny_corpus, schema, tiny_lm):
    records, _ = run_tiny(tiny_corpus, schema, tiny_lm)
    by_key = {(r.dialogue_id, r.turn): r for r in records}
    first = by_key[("t1", 0)]
    assert first.state.as_flat_dict() == {"hotel-area": "south", "hotel-pricerange": "cheap"}
    assert not first.failed
    west = by_key[("t2", 0)]
    assert west.state.as_flat_dict() == {"restaurant-area": "west", "restaurant-food": "italian"}
    goodbye = by_key[("t2", 1)]
    assert [a.act_type for a in goodbye.acts.acts] == ["Goodbye"]


def test_state_chain_invariant(tiny_corpus, schema, tiny_lm):
    records, _ = run_tiny(tiny_corpus, schema, tiny_lm)
    by_key = {(r.dialogue_id, r.turn): r for r in records}
    for record in records:
        prev = by_key.get((record.dialogue_id, record.turn - 1))
        b_prev = prev.state if prev else EMPTY_STATE
        assert record.state == apply_state_change(b_prev, record.change)


def test_candidate_ledgers_present(tiny_corpus, schema, tiny_lm):
    records, _ = run_tiny(tiny_corpus, schema, tiny_lm)
    for record in records:
        assert record.dst_candidates
        assert record.dat_candidates
        for c in record.dst_candidates:
            assert c.final_score == pytest.approx(c.prior_logprob + c.channel_logprob)


def test_pool_grows_one_entry_per_task_per_turn(tiny_corpus, schema, tiny_lm):
    trace = []
    run_tiny(tiny_corpus, schema, tiny_lm, trace=trace)
    assert [t["dst_pool_size"] for t in trace] == [0, 1, 2, 3]
    assert [t["dat_pool_size"] for t in trace] == [0, 1, 2, 3]
    # tiny pools never reach the retrieval threshold
    assert all(t["dst_examples"] == 0 and t["dat_examples"] == 0 for t in trace)


def test_record_files_byte_identical_across_runs(tiny_corpus, schema, tmp_path):
    lm1 = ScriptedLM.from_file(FIXTURES / "scripted_tiny.json")
    lm2 = ScriptedLM.from_file(FIXTURES / "scripted_tiny.json")
    a_dir = tmp_path / "a"
    b_dir = tmp_path / "b"
    a_dir.mkdir(), b_dir.mkdir()
    label_corpus(tiny_corpus, schema, lm1, tiny_cfg(), checkpoint_path=a_dir / "r.jsonl")
    label_corpus(tiny_corpus, schema, lm2, tiny_cfg(), checkpoint_path=b_dir / "r.jsonl")
    assert (a_dir / "r.jsonl").read_bytes() == (b_dir / "r.jsonl").read_bytes()


def test_resume_matches_uninterrupted_run(tiny_corpus, schema, tmp_path):
    lm = ScriptedLM.from_file(FIXTURES / "scripted_tiny.json")
    full_path = tmp_path / "full.jsonl"
    label_corpus(tiny_corpus, schema, lm, tiny_cfg(), checkpoint_path=full_path)
    full_lines = full_path.read_text().splitlines()

    resumed_path = tmp_path / "resumed.jsonl"
    resumed_path.write_text("\n".join(full_lines[:2]) + "\n")
    lm2 = ScriptedLM.from_file(FIXTURES / "scripted_tiny.json")
    records = label_corpus(
        tiny_corpus, schema, lm2, tiny_cfg(), checkpoint_path=resumed_path
    )
    assert resumed_path.read_bytes() == full_path.read_bytes()
    assert len(records) == 4


def test_lm_failures_degrade_to_flagged_records(schema, tmp_path, tiny_corpus):
    class PoisonLM(ScriptedLM):
        def sample(self, prompt, cfg):
            if "give me the number" in prompt:
                raise LMTransportError("unreachable")
            return super().sample(prompt, cfg)

    base = ScriptedLM.from_file(FIXTURES / "scripted_tiny.json")
    poisoned = PoisonLM(
        rules=base.rules, seed=base.seed, vocab_size=base.vocab_size,
        embed_dim=base.embed_dim, default_completions=base.default_completions,
    )
    records = label_corpus(tiny_corpus, schema, poisoned, tiny_cfg())
    assert len(records) == 4
    failed = [r for r in records if r.failed]
    assert [(r.dialogue_id, r.turn) for r in failed] == [("t1", 1)]
    assert failed[0].change.is_empty()
    assert failed[0].delex_response is None
    # the chain still holds: failed turn carries the previous state forward
    by_key = {(r.dialogue_id, r.turn): r for r in records}
    assert failed[0].state == by_key[("t1", 0)].state


def test_record_serde_round_trip(tiny_corpus, schema, tiny_lm, tmp_path):
    records, _ = run_tiny(tiny_corpus, schema, tiny_lm)
    path = tmp_path / "records.jsonl"
    save_records(path, records)
    loaded = load_records(path, schema)
    for orig, back in zip(records, loaded):
        assert record_to_json(back) == record_to_json(orig)
        assert back.state == orig.state
        assert back.acts == orig.acts


# export ------------------------------------------------------------------------


def test_em_export_counts_and_ratio(tiny_corpus, schema, tiny_lm, tmp_path):
    records, _ = run_tiny(tiny_corpus, schema, tiny_lm)
    pairs, skipped = export_training_pairs(records, tiny_corpus, schema, STAGE_EM, seed=0)
    n = len(records)
    views = [p.view for p in pairs]
    assert len(pairs) == 6 * n
    assert views.count("DST_DIRECT") == n
    assert views.count("DST_CHANNEL") == 2 * n
    assert views.count("DAT_DIRECT") == n
    assert views.count("DAT_CHANNEL") == 2 * n
    assert not skipped
    out = tmp_path / "train.jsonl"
    write_training_pairs(out, pairs)
    assert len(out.read_text().splitlines()) == 6 * n


def test_e2e_export_adds_policy_and_response(tiny_corpus, schema, tiny_lm):
    records, _ = run_tiny(tiny_corpus, schema, tiny_lm)
    pairs, skipped = export_training_pairs(records, tiny_corpus, schema, STAGE_E2E, seed=0)
    n = len(records)
    views = [p.view for p in pairs]
    assert views.count("POLICY") == n
    assert views.count("RESPONSE") == n
    assert views.count("DST_DIRECT") == n
    assert views.count("DST_CHANNEL") == 2 * n
    assert "DAT_DIRECT" not in views
    assert not skipped


def test_export_prompts_are_compact(tiny_corpus, schema, tiny_lm):
    records, _ = run_tiny(tiny_corpus, schema, tiny_lm)
    pairs, _ = export_training_pairs(records, tiny_corpus, schema, STAGE_EM, seed=0)
    for pair in pairs:
        assert "def " not in pair.prompt


def test_export_completions_match_contract(tiny_corpus, schema, tiny_lm):
    records, _ = run_tiny(tiny_corpus, schema, tiny_lm)
    by_key = {(r.dialogue_id, r.turn): r for r in records}
    pairs, _ = export_training_pairs(records, tiny_corpus, schema, STAGE_E2E, seed=0)
    for pair in pairs:
        if pair.view == "DST_DIRECT":
            assert pair.prompt.endswith("state_change=")
        if pair.view == "DST_CHANNEL":
            assert pair.prompt.endswith('user_utterance="')
            assert pair.weight == CHANNEL_WEIGHT
        if pair.view == "RESPONSE":
            assert pair.completion in {
                r.delex_response for r in by_key.values() if r.delex_response
            }


def test_export_shuffle_is_seeded(tiny_corpus, schema, tiny_lm):
    records, _ = run_tiny(tiny_corpus, schema, tiny_lm)
    a, _ = export_training_pairs(records, tiny_corpus, schema, STAGE_EM, seed=5)
    b, _ = export_training_pairs(records, tiny_corpus, schema, STAGE_EM, seed=5)
    c, _ = export_training_pairs(records, tiny_corpus, schema, STAGE_EM, seed=6)
    key = lambda pairs: [(p.view, p.prompt, p.completion) for p in pairs]
    assert key(a) == key(b)
    assert key(a) != key(c)
    assert sorted(key(a)) == sorted(key(c))


def test_export_skips_missing_delex(tiny_corpus, schema, tiny_lm):
    records, _ = run_tiny(tiny_corpus, schema, tiny_lm)
    records[0].delex_response = None
    pairs, skipped = export_training_pairs(records, tiny_corpus, schema, STAGE_E2E, seed=0)
    assert len(skipped) == 1
    assert "delexicalized" in skipped[0]
    assert [p.view for p in pairs].count("RESPONSE") == len(records) - 1


# relabel -----------------------------------------------------------------------


def test_relabel_generation_numbering(tiny_corpus, schema, tiny_lm):
    records = relabel(tiny_corpus, schema, tiny_lm, tiny_cfg(), generation=1)
    assert all(r.generation == 1 for r in records)
    assert all(r.dst_candidates for r in records)


def test_relabel_matches_prepool_labels(tiny_corpus, schema):
    lm_a = ScriptedLM.from_file(FIXTURES / "scripted_tiny.json")
    lm_b = ScriptedLM.from_file(FIXTURES / "scripted_tiny.json")
    gen0 = label_corpus(tiny_corpus, schema, lm_a, tiny_cfg())
    gen1 = relabel(tiny_corpus, schema, lm_b, tiny_cfg(), generation=1)
    key = lambda rs: {(r.dialogue_id, r.turn): (r.change, r.acts) for r in rs}
    # every tiny turn is pre-pool (pool < 32), so labels must agree exactly
    assert key(gen0) == key(gen1)
