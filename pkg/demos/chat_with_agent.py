"""Drive the end-to-end agent through a short scripted conversation and print
the latent structure behind every reply: inferred state change, accumulated
belief, planned acts, the delexicalized template, and database hits.

Run from the repository root:  python demos/chat_with_agent.py
"""

from pathlib import Path

from todkit.agent import AgentConfig, DbBackend, DialogueAgent
from todkit.lm import SamplingConfig, ScriptRule, ScriptedLM
from todkit.parsing import render_act_set, render_state_change
from todkit.schema import load_schema

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

U1 = "i need a cheap hotel in the south"
U2 = "does it have 4 stars?"


def scripted_lm():
    acts1 = '[Inform(hotel_phone="01223 210353"), Offer(hotel_name="the allenbell")]'
    acts2 = '[Affirm(hotel_stars="4")]'
    return ScriptedLM(
        rules=[
            ScriptRule(
                contains=f'user_utterance="{U1}", state_change=',
                completions={'find_hotel(area="south", pricerange="cheap")': 1.0},
            ),
            ScriptRule(
                contains=f'user_utterance="{U2}", state_change=',
                completions={'find_hotel(stars="4")': 1.0},
            ),
            ScriptRule(contains=f'{U1}"], acts=', completions={acts1: 1.0}),
            ScriptRule(contains=f'{U2}"], acts=', completions={acts2: 1.0}),
            ScriptRule(
                contains=f'user_utterance="{U1}", acts={acts1}, delex_response="',
                completions={
                    "[hotel_name] is a [hotel_pricerange] hotel in the [hotel_area], "
                    "phone [hotel_phone]": 1.0
                },
            ),
            ScriptRule(
                contains=f'user_utterance="{U2}", acts={acts2}, delex_response="',
                completions={"yes, it has [hotel_stars] stars": 1.0},
            ),
        ]
    )


def main():
    schema = load_schema(FIXTURES / "schema.json")
    db = DbBackend.from_file(FIXTURES / "db.json")
    agent = DialogueAgent(
        schema, scripted_lm(), db,
        AgentConfig(sampling=SamplingConfig(num_samples=4, top_p=1.0, seed=0)),
    )
    session = agent.new_session()
    for utterance in (U1, U2):
        print(f"user > {utterance}")
        turn = agent.respond(session, utterance)
        print(f"  change : {render_state_change(turn.delta, schema)}")
        print(f"  belief : {turn.belief.as_flat_dict()}")
        print(f"  acts   : {render_act_set(turn.acts)}")
        print(f"  delex  : {turn.delex_response}")
        print(f"  db     : {turn.db_hits}")
        print(f"agent> {turn.final_response}\n")


if __name__ == "__main__":
    main()
