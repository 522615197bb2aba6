"""Tour of the evaluation suite on tiny synthetic inputs: joint goal accuracy
with the 0.95 fuzzy boundary, Inform/Success over hand-built outcomes, raw
corpus BLEU, and the combined score.

Run from the repository root:  python demos/compute_metrics.py
"""

from todkit.corpus import BeliefState
from todkit.fuzzy import similarity
from todkit.metrics import (
    DialogueOutcome,
    DomainGoal,
    TurnObservation,
    bleu,
    combined,
    inform_success,
    jga,
    metrics_report,
    render_report_table,
)


def main():
    pred = [
        BeliefState.from_dict({("hotel", "name"): "acorn guest house"}),
        BeliefState.from_dict({("hotel", "area"): "south"}),
    ]
    gold = [
        BeliefState.from_dict({("hotel", "name"): "the acorn guest house"}),
        BeliefState.from_dict({("hotel", "area"): "south"}),
    ]
    ratio = similarity("acorn guest house", "the acorn guest house")
    print(f"fuzzy ratio of the name pair: {ratio:.4f} (threshold 0.95)")
    print(f"jga over the two turns: {jga(pred, gold):.2f}\n")

    goal = {"hotel": DomainGoal(constraints={"area": "south"}, requested=("phone",))}
    offer = {"hotel": {"name": "the allenbell", "area": "south", "phone": "01223 210353"}}
    outcomes = [
        DialogueOutcome("informed+successful", goal,
                        [TurnObservation(offer, {"hotel": {"name", "phone"}})]),
        DialogueOutcome("informed only", goal,
                        [TurnObservation(offer, {"hotel": {"name"}})]),
        DialogueOutcome("not informed", goal, [TurnObservation({}, {})]),
    ]
    inform, success = inform_success(outcomes)
    print(f"inform {inform:.1f}  success {success:.1f}")

    hyps = ["the cat sat on the mat", "there is a dog"]
    refs = ["the cat sat on the mat", "there is a cat"]
    bleu_score = bleu(hyps, refs)
    print(f"bleu {bleu_score:.4f}")
    print(f"combined {combined(inform, success, bleu_score):.2f}\n")

    report = metrics_report(
        {"inform": inform, "success": success, "bleu": bleu_score,
         "combined": combined(inform, success, bleu_score)}
    )
    print(render_report_table(report))


if __name__ == "__main__":
    main()
