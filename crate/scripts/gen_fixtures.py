#!/usr/bin/env python3
"""Regenerates the hermetic fixture files under crates/core/fixtures/.

Output is deterministic; rerunning it must leave the tree unchanged.
"""

import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "crates" / "core" / "fixtures"

REJECT_MARKERS = [
    "SUPERSEDED",
    "No relevant information found",
    "No search results were found",
]

# id, gold, topic sentence pieces, question stem
QUESTIONS = [
    ("q01", "A", "limitation", "What is the ordinary limitation period for civil claims under the General Provisions?"),
    ("q02", "B", "deposit", "How much may a contractual deposit amount to, relative to the contract price?"),
    ("q03", "C", "guardianship", "Who acts as statutory guardian for a minor whose parents have died?"),
    ("q04", "D", "easement", "How is a servitude easement over neighbouring land created?"),
    ("q05", "A", "rescission", "Within what period must a party exercise a rescission right after learning of the cause?"),
    ("q06", "B", "probation", "What is the maximum probation period for a labour contract of three years?"),
    ("q07", "C", "trademark", "How long is a registered trademark protected before renewal is required?"),
    ("q08", "D", "penalty", "How may a court adjust an excessive liquidated penalty clause in a contract?"),
    ("q09", "A", "inheritance", "Which heirs inherit first under statutory inheritance succession?"),
    ("q10", "B", "mortgage", "When does a mortgage over real property take effect against third parties?"),
    ("q11", "C", "arbitration", "When is an arbitration agreement void under the Arbitration Law?"),
    ("q12", "D", "bail", "Which authority may decide on bail pending trial in a criminal case?"),
    ("q13", "A", "negligence", "Who bears tort liability when an employee causes harm through negligence at work?"),
    ("q14", "B", "copyright", "How long does copyright protection last for a natural person's work?"),
    ("q15", "C", "bankruptcy", "Which claims are paid first from the bankruptcy estate?"),
    ("q16", "D", "adoption", "What conditions must an adopter satisfy under the adoption rules?"),
    ("q17", "A", "marriage", "What is the statutory minimum marriage age for men?"),
    ("q18", "B", "partnership", "How are partnership debts borne by general partners?"),
    ("q19", "C", "evidence", "Which party bears the burden of evidence in a civil dispute?"),
    ("q20", "D", "lease", "When may a lessee sublease the leased property?"),
]

OPTIONS = "A. first option B. second option C. third option D. fourth option"

# Per question: 8 rollout kinds. Letters are the answered option; prefixes:
#   D  direct answer, S  one search, S2 two searches, X  search on every step,
#   E  scripted endpoint failure, N  search that finds nothing relevant,
#   U  search whose page is superseded, U2 two searches, the second superseded.
PLANS = {
    "q01": ["D:A"] * 8,
    "q02": ["S:B"] * 8,
    "q03": ["D:C"] * 8,
    "q04": ["S:D"] * 8,
    "q05": ["S:A"] * 7 + ["D:B"],
    "q06": ["D:B"] * 6 + ["D:A", "D:C"],
    "q07": ["D:A", "D:C", "D:C", "D:C", "D:C", "D:C", "D:B", "D:B"],
    "q08": ["U:D", "D:D", "D:D", "D:D", "D:A", "D:A", "D:B", "D:C"],
    "q09": ["S:A", "D:A", "D:A", "D:B", "D:B", "D:C", "D:C", "D:D"],
    "q10": ["E", "D:B", "D:B", "D:A", "D:A", "D:C", "D:C", "D:D"],
    "q11": ["D:D", "S:C", "D:A", "D:A", "D:B", "D:B", "D:D", "D:D"],
    "q12": ["S:A", "D:A", "D:B", "D:B", "D:C", "D:C", "D:A", "D:B"],
    "q13": ["S:A", "S:A", "D:A", "D:A", "D:B", "D:B", "D:C", "D:C"],
    "q14": ["X", "D:A", "D:A", "D:C", "D:C", "D:D", "D:D", "X"],
    "q15": ["S2:C"] * 6 + ["D:A", "D:B"],
    "q16": ["D:D", "D:D", "D:D", "D:A", "D:A", "D:B", "D:B", "D:C"],
    "q17": ["D:A"] * 8,
    "q18": ["N:B"] + ["D:B"] * 4 + ["D:A", "D:C", "D:D"],
    "q19": ["S:C", "D:A", "D:A", "D:B", "D:B", "D:D", "D:D", "D:D"],
    "q20": ["U2:D", "D:D", "D:A", "D:A", "D:B", "D:B", "D:C", "D:C"],
}


def question_text(stem):
    return f"{stem} {OPTIONS}"


def page_html(title, sentences, extra_nav=True):
    nav = "<nav><a href='/'>Home</a> | <a href='/laws'>Laws</a></nav>" if extra_nav else ""
    paras = "".join(f"<p>{s}</p>" for s in sentences)
    return (
        f"<html><head><title>{title}</title><style>p{{margin:0}}</style></head>"
        f"<body>{nav}<article><h1>{title}</h1>{paras}</article>"
        f"<footer>Copyright notice</footer></body></html>"
    )


def rule_sentences(topic, stem, superseded=False):
    words = [w.strip("?,.'").lower() for w in stem.split()]
    key = " ".join(w for w in words if len(w) >= 4)[:80]
    out = [
        f"The {topic} rule addresses {key}.",
        f"Courts apply the {topic} provision strictly when the facts fit its terms.",
        f"Commentary on the {topic} provision explains the leading interpretation.",
        f"The {topic} article has been cited in many published judgments.",
    ]
    if superseded:
        out.append(f"This {topic} provision was SUPERSEDED and no longer governs {key}.")
    return out


def script_steps(kind, q):
    qid, gold, topic, stem = q
    think = f"I need to work out the {topic} question."
    if kind == "E":
        return {"steps": ["!error"]}
    tag, _, letter = kind.partition(":")
    answer = f"<think>The {topic} rule settles it.</think><answer>{letter}</answer>"
    if tag == "D":
        return {"steps": [f"<think>I recall the {topic} rule directly.</think><answer>{letter}</answer>"]}
    if tag in ("S", "U", "N"):
        query = {"S": f"{topic} rule", "U": f"{topic} rule old text", "N": f"{topic} unrelated"}[tag]
        return {"steps": [f"<think>{think}</think><search>{query}</search>", answer]}
    if tag in ("S2", "U2"):
        second = f"{topic} commentary" if tag == "S2" else f"{topic} rule old text"
        return {
            "steps": [
                f"<think>{think}</think><search>{topic} rule</search>",
                f"<think>I should confirm with commentary.</think><search>{second}</search>",
                answer,
            ]
        }
    if tag == "X":
        return {"steps": [f"<think>{think}</think><search>{topic} rule</search>"]}
    raise ValueError(kind)


def corpus_for(q):
    qid, gold, topic, stem = q
    base = f"https://law.example.org/{topic}"
    queries = []
    pages = {}
    queries.append(
        {
            "query": f"{topic} rule",
            "results": [
                {"url": f"{base}/rule", "title": f"{topic.title()} rule", "snippet": f"The {topic} rule", "rank": 1},
                {"url": f"{base}/notes", "title": "Unrelated notes", "snippet": "notes", "rank": 2},
            ],
        }
    )
    pages[f"{base}/rule"] = {"body": page_html(f"{topic.title()} rule", rule_sentences(topic, stem))}
    pages[f"{base}/notes"] = {
        "body": page_html("Unrelated notes", ["Weather today is sunny.", "Lunch menus vary by season."])
    }
    queries.append(
        {
            "query": f"{topic} commentary",
            "results": [
                {"url": f"{base}/commentary", "title": f"{topic.title()} commentary", "snippet": "", "rank": 1}
            ],
        }
    )
    pages[f"{base}/commentary"] = {
        "body": page_html(f"{topic.title()} commentary", rule_sentences(topic, stem)[::-1])
    }
    queries.append(
        {
            "query": f"{topic} rule old text",
            "results": [{"url": f"{base}/old", "title": f"{topic.title()} old text", "snippet": "", "rank": 1}],
        }
    )
    pages[f"{base}/old"] = {
        "body": page_html(f"{topic.title()} old text", rule_sentences(topic, stem, superseded=True))
    }
    queries.append(
        {
            "query": f"{topic} unrelated",
            "results": [
                {"url": f"{base}/notes", "title": "Unrelated notes", "snippet": "", "rank": 1},
                {"url": f"{base}/binary", "title": "Scan", "snippet": "", "rank": 2},
            ],
        }
    )
    pages[f"{base}/binary"] = {"content_type": "application/pdf", "body": "%PDF-1.4"}
    return queries, pages


def bundle():
    entries = []
    queries = []
    pages = {}
    for q in QUESTIONS:
        entries.append(
            {"question": question_text(q[3]), "rollouts": [script_steps(k, q) for k in PLANS[q[0]]]}
        )
        qs, ps = corpus_for(q)
        queries.extend(qs)
        pages.update(ps)
    return {
        "policy": {"model": "fixture-policy", "entries": entries},
        "corpus": {"queries": queries, "pages": pages},
        "judge": {"reject_markers": REJECT_MARKERS},
        "summarizer_min_overlap": 2,
    }


def questions():
    return [
        {"id": qid, "question": question_text(stem), "gold": gold, "origin": "custom", "kind": "single_choice"}
        for qid, gold, _, stem in QUESTIONS
    ]


def benchmark():
    return [
        {
            "id": qid,
            "question": question_text(stem),
            "gold": gold,
            "kind": "single_choice",
            "benchmark_tag": "fixture-a" if i % 2 == 0 else "fixture-b",
        }
        for i, (qid, gold, _, stem) in enumerate(QUESTIONS)
    ]


def obs(text):
    return {"information_text": text, "sources": [], "produced_by": "fixture"}


def stats_dataset():
    """212 trajectories: 112 answer directly, 100 search with the count
    distribution 81x1, 14x2, 3x3, 1x4, 1x5."""
    rng = random.Random(7)
    counts = [0] * 112 + [1] * 81 + [2] * 14 + [3] * 3 + [4] + [5]
    rows = []
    for i, n in enumerate(counts):
        turns = []
        for k in range(n):
            query = "statute " + "x" * rng.randint(6, 24)
            turns.append(
                {
                    "actions": [
                        {"kind": "think", "text": "t" * rng.randint(100, 300)},
                        {"kind": "search", "text": query},
                    ],
                    "observation": obs("Retrieved provision text."),
                }
            )
        turns.append(
            {
                "actions": [
                    {"kind": "think", "text": "r" * rng.randint(300, 700)},
                    {"kind": "answer", "text": "A"},
                ]
            }
        )
        rows.append(
            {
                "question_id": f"s{i:03}",
                "question": "Which provision applies? A. one B. two C. three D. four",
                "turns": turns,
                "final_answer": "A",
                "metadata": {},
            }
        )
    return rows


def reward_cases():
    q = "Which provision applies? A. one B. two C. three D. four"
    return [
        {"id": "correct_valid", "question": q, "gold": "A", "trace": "<think>The rule applies.</think><answer>A</answer>", "expected": 1.0},
        {"id": "correct_invalid", "question": q, "gold": "A", "trace": "<answer>A</answer>", "expected": 0.8},
        {"id": "wrong_valid", "question": q, "gold": "A", "trace": "<think>The rule applies.</think><answer>B</answer>", "expected": 0.2},
        {"id": "wrong_invalid", "question": q, "gold": "A", "trace": "<answer>B</answer>", "expected": 0.0},
    ]


def write_jsonl(name, rows):
    (OUT / name).write_text("".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows))


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / "bundle.json").write_text(json.dumps(bundle(), ensure_ascii=False, indent=1) + "\n")
    write_jsonl("questions.jsonl", questions())
    write_jsonl("benchmark.jsonl", benchmark())
    write_jsonl("stats_dataset.jsonl", stats_dataset())
    write_jsonl("reward_cases.jsonl", reward_cases())


if __name__ == "__main__":
    main()
