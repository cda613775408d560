"""Regenerate the golden prompt files under tests/golden/.

The goldens pin the rendered prompt format byte-for-byte: few-shot block
layout, field order per bank kind, the bare cue line at the end, and the
exact bundled bank contents.  Run this only when the prompt format changes
on purpose, then review the diff like any other behavior change.

Usage: python tools/make_golden_prompts.py
"""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from webqa import corpus, prompting

OUT = pathlib.Path(__file__).resolve().parents[1] / "tests" / "golden"

QUESTION = "who wrote the iliad"
EVIDENCE = "The Iliad is an ancient Greek epic poem attributed to Homer."
ANSWER = "Homer"
CLAIM = "The Iliad was written by Homer."


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    goldens: dict[str, str] = {}

    for dataset_id in ("nq", "hotpotqa", "strategyqa"):
        bank = corpus.load_bundled_bank(dataset_id, "qa")
        goldens[f"qa_{dataset_id}.txt"] = prompting.render_qa_prompt(
            bank, QUESTION, EVIDENCE).text
    fever = corpus.load_bundled_bank("fever", "qa")
    goldens["qa_fever.txt"] = prompting.render_qa_prompt(fever, CLAIM, EVIDENCE).text

    nq = corpus.load_bundled_bank("nq", "qa")
    goldens["closed_nq.txt"] = prompting.render_closed_book_prompt(nq, QUESTION).text

    q_ap = corpus.load_bundled_bank("nq", "q_given_ap")
    goldens["scorer_nq_q_given_ap.txt"] = prompting.render_prompt(
        q_ap, evidence=EVIDENCE, answer=ANSWER).text
    q_p = corpus.load_bundled_bank("nq", "q_given_p")
    goldens["scorer_nq_q_given_p.txt"] = prompting.render_prompt(
        q_p, evidence=EVIDENCE).text
    p_q = corpus.load_bundled_bank("nq", "p_given_q")
    goldens["scorer_nq_p_given_q.txt"] = prompting.render_prompt(
        p_q, question=QUESTION).text

    for name, text in sorted(goldens.items()):
        path = OUT / name
        path.write_text(text, encoding="utf-8")
        print(f"wrote {path} ({len(text)} bytes)")


if __name__ == "__main__":
    main()
