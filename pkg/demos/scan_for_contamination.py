"""Plant supervised (utterance, label) pairs in a synthetic pretraining corpus
and find them again: build the inverted index, search for tolerant utterance
matches, and flag documents where enough label keywords sit near the match.

Run from the repository root:  python demos/scan_for_contamination.py
"""

import json
import tempfile
from pathlib import Path

from todkit.contamination import ContamQuery, CorpusIndex, dst_keywords, scan
from todkit.corpus import StateChange


def main():
    utterance = "i would like to book a 5 star hotel in the east part of town"
    change = StateChange.make(
        "find_hotel", {("hotel", "area"): "east", ("hotel", "stars"): "5"}
    )
    keywords = tuple(dst_keywords(change))
    print(f"utterance: {utterance}")
    print(f"keywords from the label: {keywords}\n")

    docs = [
        ("readme", "a corpus of code and documentation, nothing dialogue-shaped"),
        ("notebook", f"# training data\n{utterance}\nstate: area east stars 5"),
        ("issue", "I Would LIKE to book a 5-star hotel, in the east part of town?? "
                  "the tracker printed stars=5"),
        ("faraway", utterance + " " + "filler " * 200 + "east stars"),
    ]
    with tempfile.TemporaryDirectory() as tmp:
        corpus = Path(tmp) / "corpus.jsonl"
        with open(corpus, "w", encoding="utf-8") as fh:
            for doc_id, text in docs:
                fh.write(json.dumps({"id": doc_id, "text": text}) + "\n")

        index = CorpusIndex.build(corpus)
        report = scan(index, [ContamQuery("dst", utterance, keywords, source="demo/0")])

        for hit in report.hits:
            marker = "REVIEW" if hit.needs_review else "ok    "
            print(
                f"[{marker}] {hit.document_id:9s} "
                f"keywords {hit.keyword_fraction:.0%} {list(hit.keywords_found)}"
            )
        print("\nper task (correct/authentic stay manual):")
        print(json.dumps(report.per_task(), indent=2))


if __name__ == "__main__":
    main()
