"""Deterministic rendering of direct (text-to-code) and channel (code-to-text)
prompts for state tracking, act tagging, policy, and response generation.

The concrete grammar is documented in docs/prompt_grammar.md. Every builder is
a pure function: equal inputs produce byte-identical prompts. A channel prompt
is a permutation of the direct prompt's content in which the label is rendered
before the observed utterance, so the utterance can be scored as the
continuation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .corpus import (
    ACT_DESCRIPTIONS,
    ARG_FREE_ACTS,
    ActSet,
    BeliefState,
    StateChange,
)
from .parsing import escape, render_act_set, render_state_change
from .schema import Schema, canon_name

DST_CALL = "update_state"
DAT_CALL = "tag_acts"
POLICY_CALL = "plan_acts"
RESPONSE_CALL = "write_response"

POLICY_HISTORY_SIZE = 5

# content kinds used in permutation checks
_DST = "dst"
_DAT = "dat"


@dataclass(frozen=True)
class DstExample:
    """One in-context exemplar for state tracking."""

    prev_state: BeliefState
    prev_response: str
    utterance: str
    change: StateChange


@dataclass(frozen=True)
class DatExample:
    """One in-context exemplar for act tagging."""

    response: str
    acts: ActSet


@dataclass(frozen=True)
class PromptBundle:
    """A rendered direct prompt: header, examples, context z, input x, and the
    opening of the completion slot."""

    header: str
    examples: tuple[str, ...]
    context: str
    input: str
    completion_prefix: str
    stop: tuple[str, ...] = ("\n",)
    example_contents: tuple[tuple, ...] = ()
    context_fields: tuple = ()

    def text(self) -> str:
        blocks = [b for b in (self.header, *self.examples) if b]
        blocks.append(self.context + self.input + self.completion_prefix)
        return "\n".join(blocks)

    def content_with_label(self, label: str) -> tuple:
        """Content multiset of this prompt with a label appended; comparable
        against ChannelPrompt.content for the permutation invariant."""
        return (
            self.header,
            tuple(sorted(self.example_contents)),
            self.context_fields,
            self.input_value(),
            label,
        )

    def input_value(self) -> str:
        return self.context_fields[-1] if self.context_fields else self.input


@dataclass(frozen=True)
class ChannelPrompt:
    """A rendered channel prompt: everything up to and including the label,
    then the observed utterance as the scored continuation."""

    prefix: str
    continuation: str
    stop: tuple[str, ...] = ('"',)
    content: tuple = ()


def render_belief_state(state: BeliefState) -> str:
    body = ", ".join(
        f'"{svc}-{slot}": "{escape(value)}"' for (svc, slot), value in state.entries
    )
    return "{" + body + "}"


def dst_header(schema: Schema) -> str:
    """Task instructions plus one callable function definition per intent."""
    lines = ["# Update the dialogue state with the api call implied by the user's latest message."]
    for svc, intent in schema.intents():
        params = ", ".join(f"{canon_name(s)}=None" for s in intent.all_slots)
        lines.append(f"def {canon_name(intent.name)}({params}):")
        head = intent.description.rstrip(".") + "." if intent.description else f"Call the {svc.name} api."
        slot_docs = []
        for slot_name in intent.all_slots:
            slot = svc.slot(slot_name)
            if slot is None:
                continue
            desc = slot.description
            if slot.is_categorical:
                desc = f"{desc} (one of: {', '.join(slot.possible_values)})"
            slot_docs.append(f"{canon_name(slot_name)}: {desc}")
        lines.append('    """' + " ".join([head, "; ".join(slot_docs)]).rstrip() + '"""')
    return "\n".join(lines)


def dat_header() -> str:
    """Task instructions plus the supported act inventory with descriptions."""
    lines = ["# Label the dialogue acts expressed in the system response."]
    for act, desc in ACT_DESCRIPTIONS.items():
        if act in ARG_FREE_ACTS:
            sig = act
        elif act == "Request":
            sig = f"{act}(x=?)"
        else:
            sig = f"{act}(x=y)"
        lines.append(f"# {sig}: {desc}")
    return "\n".join(lines)


def _dst_example_fields(ex: DstExample, schema: Schema) -> tuple:
    return (
        _DST,
        render_belief_state(ex.prev_state),
        ex.prev_response,
        ex.utterance,
        render_state_change(ex.change, schema),
    )


def render_dst_example(ex: DstExample, schema: Schema, channel: bool = False) -> str:
    state = render_belief_state(ex.prev_state)
    change = render_state_change(ex.change, schema)
    if channel:
        return (
            f'{DST_CALL}(belief_state={state}, system_response="{escape(ex.prev_response)}", '
            f'state_change={change}, user_utterance="{escape(ex.utterance)}")'
        )
    return (
        f'{DST_CALL}(belief_state={state}, system_response="{escape(ex.prev_response)}", '
        f'user_utterance="{escape(ex.utterance)}", state_change={change})'
    )


def _dat_example_fields(ex: DatExample) -> tuple:
    return (_DAT, ex.response, render_act_set(ex.acts))


def render_dat_example(ex: DatExample, channel: bool = False) -> str:
    acts = render_act_set(ex.acts)
    if channel:
        return f'{DAT_CALL}(acts={acts}, system_response="{escape(ex.response)}")'
    return f'{DAT_CALL}(system_response="{escape(ex.response)}", acts={acts})'


def _truncate(header: str, rendered: list[str], contents: list[tuple], query_len: int,
              max_chars: Optional[int]):
    """Drop examples farthest-first until the prompt fits the budget. The
    query block is never truncated."""
    if max_chars is None:
        return rendered, contents

    def total():
        blocks = [b for b in (header, *rendered) if b]
        return sum(len(b) + 1 for b in blocks) + query_len

    while rendered and total() > max_chars:
        rendered.pop(0)
        contents.pop(0)
    return rendered, contents


def build_dst_direct(
    schema: Schema,
    examples: Sequence[DstExample],
    b_prev: BeliefState,
    r_prev: str,
    u_t: str,
    compact: bool = False,
    max_chars: Optional[int] = None,
) -> PromptBundle:
    """Direct DST prompt. `examples` are nearest-first; the closest one is
    rendered last, adjacent to the query. Compact prompts have no header and
    no examples."""
    header = "" if compact else dst_header(schema)
    pool = [] if compact else list(examples)
    rendered = [render_dst_example(ex, schema) for ex in reversed(pool)]
    contents = [_dst_example_fields(ex, schema) for ex in reversed(pool)]
    state = render_belief_state(b_prev)
    context = f'{DST_CALL}(belief_state={state}, system_response="{escape(r_prev)}", '
    inp = f'user_utterance="{escape(u_t)}"'
    prefix = ", state_change="
    rendered, contents = _truncate(
        header, rendered, contents, len(context) + len(inp) + len(prefix), max_chars
    )
    return PromptBundle(
        header=header,
        examples=tuple(rendered),
        context=context,
        input=inp,
        completion_prefix=prefix,
        stop=("\n",),
        example_contents=tuple(contents),
        context_fields=(_DST, state, r_prev, u_t),
    )


def build_dst_channel(
    schema: Schema,
    examples: Sequence[DstExample],
    b_prev: BeliefState,
    r_prev: str,
    delta: StateChange,
    u_t: str,
    compact: bool = False,
    max_chars: Optional[int] = None,
) -> ChannelPrompt:
    """Channel DST prompt: prefix ends with the rendered candidate change, and
    the user utterance is the continuation to score."""
    header = "" if compact else dst_header(schema)
    pool = [] if compact else list(examples)
    rendered = [render_dst_example(ex, schema, channel=True) for ex in reversed(pool)]
    contents = [_dst_example_fields(ex, schema) for ex in reversed(pool)]
    state = render_belief_state(b_prev)
    change = render_state_change(delta, schema)
    query = (
        f'{DST_CALL}(belief_state={state}, system_response="{escape(r_prev)}", '
        f'state_change={change}, user_utterance="'
    )
    rendered, contents = _truncate(header, rendered, contents, len(query), max_chars)
    blocks = [b for b in (header, *rendered) if b]
    blocks.append(query)
    return ChannelPrompt(
        prefix="\n".join(blocks),
        continuation=escape(u_t),
        stop=('"',),
        content=(
            header,
            tuple(sorted(contents)),
            (_DST, state, r_prev, u_t),
            u_t,
            change,
        ),
    )


def build_dat_direct(
    schema: Schema,
    examples: Sequence[DatExample],
    r_t: str,
    compact: bool = False,
    max_chars: Optional[int] = None,
) -> PromptBundle:
    """Direct act-tagging prompt, conditioned only on the response to tag."""
    header = "" if compact else dat_header()
    pool = [] if compact else list(examples)
    rendered = [render_dat_example(ex) for ex in reversed(pool)]
    contents = [_dat_example_fields(ex) for ex in reversed(pool)]
    context = f"{DAT_CALL}("
    inp = f'system_response="{escape(r_t)}"'
    prefix = ", acts="
    rendered, contents = _truncate(
        header, rendered, contents, len(context) + len(inp) + len(prefix), max_chars
    )
    return PromptBundle(
        header=header,
        examples=tuple(rendered),
        context=context,
        input=inp,
        completion_prefix=prefix,
        stop=("\n",),
        example_contents=tuple(contents),
        context_fields=(_DAT, r_t),
    )


def build_dat_channel(
    schema: Schema,
    examples: Sequence[DatExample],
    acts: ActSet,
    r_t: str,
    compact: bool = False,
    max_chars: Optional[int] = None,
) -> ChannelPrompt:
    header = "" if compact else dat_header()
    pool = [] if compact else list(examples)
    rendered = [render_dat_example(ex, channel=True) for ex in reversed(pool)]
    contents = [_dat_example_fields(ex) for ex in reversed(pool)]
    label = render_act_set(acts)
    query = f'{DAT_CALL}(acts={label}, system_response="'
    rendered, contents = _truncate(header, rendered, contents, len(query), max_chars)
    blocks = [b for b in (header, *rendered) if b]
    blocks.append(query)
    return ChannelPrompt(
        prefix="\n".join(blocks),
        continuation=escape(r_t),
        stop=('"',),
        content=(header, tuple(sorted(contents)), (_DAT, r_t), r_t, label),
    )


def build_policy_prompt(history: Sequence[str]) -> PromptBundle:
    """Policy prompt over the most recent utterances, oldest first. Only the
    last POLICY_HISTORY_SIZE utterances are kept."""
    window = list(history)[-POLICY_HISTORY_SIZE:]
    body = ", ".join(f'"{escape(u)}"' for u in window)
    context = f"{POLICY_CALL}(history=[{body}]"
    return PromptBundle(
        header="",
        examples=(),
        context=context,
        input="",
        completion_prefix=", acts=",
        stop=("\n",),
        example_contents=(),
        context_fields=("policy", tuple(window)),
    )


def build_response_prompt(r_prev: str, u_t: str, acts: ActSet) -> PromptBundle:
    """Response-generation prompt; the completion is a delexicalized response."""
    label = render_act_set(acts)
    context = (
        f'{RESPONSE_CALL}(system_response="{escape(r_prev)}", '
        f'user_utterance="{escape(u_t)}", acts={label}'
    )
    return PromptBundle(
        header="",
        examples=(),
        context=context,
        input="",
        completion_prefix=', delex_response="',
        stop=('"', "\n"),
        example_contents=(),
        context_fields=("response", r_prev, u_t, label),
    )
