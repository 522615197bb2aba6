"""todkit: build, run, and evaluate a task-oriented dialogue agent from an API
schema and unlabelled transcripts.

The pipeline infers per-turn dialogue states and system acts as latent
variables with noisy-channel prompting over a code LLM, grows an in-context
example pool from its own predictions, exports training pairs for hard-EM
fine-tuning, and serves the resulting end-to-end agent.
"""

from .corpus import (
    ActSet,
    BeliefState,
    Dialogue,
    DialogueAct,
    StateChange,
    Turn,
    apply_state_change,
    load_corpus,
    normalize_acts,
)
from .decoding import DecodeConfig, ScoringMode, decode_dat, decode_dst
from .labeling import LabelerConfig, export_training_pairs, label_corpus, relabel
from .lm import HTTPLMClient, SamplingConfig, ScriptedLM
from .schema import Schema, load_schema, lookup_slot, validate_value

__all__ = [
    "ActSet",
    "BeliefState",
    "DecodeConfig",
    "Dialogue",
    "DialogueAct",
    "HTTPLMClient",
    "LabelerConfig",
    "SamplingConfig",
    "Schema",
    "ScoringMode",
    "ScriptedLM",
    "StateChange",
    "Turn",
    "apply_state_change",
    "decode_dat",
    "decode_dst",
    "export_training_pairs",
    "label_corpus",
    "load_corpus",
    "load_schema",
    "lookup_slot",
    "normalize_acts",
    "relabel",
    "validate_value",
]

__version__ = "0.1.0"
