#!/usr/bin/env python3
"""Regenerates the fixture files under fixtures/.

Every file is derived deterministically from fixed seeds, so running this
script twice produces identical bytes.

    python3 fixtures/generate.py
"""

import json
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent


def write(rel, text):
    path = ROOT / rel
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def jsonl(rows):
    return "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows)


# ---------------------------------------------------------------- expansion

def expansion():
    # One fallback group of size 1, then the successful decompositions.
    sizes = [1, 22, 25] + [24] * 14 + [23] * 2
    assert len(sizes) == 19 and sum(sizes) == 430
    groups = []
    for q, size in enumerate(sizes, start=1):
        subs = [{"id": f"{q}_{i}", "text": f"query {q} facet {i}"} for i in range(1, size + 1)]
        groups.append({"query_id": str(q), "sub_queries": subs})
    write("expansion/subqueries_all.jsonl", jsonl(groups))
    write("expansion/subqueries_successful.jsonl", jsonl(groups[1:]))


# ------------------------------------------------------------------- tables

METRICS = ["nDCG@10", "nDCG@20", "nDCG@100", "R@10", "R@20", "R@100"]

FIRST_STAGE = [
    ("OmniEmbed", [0.195, 0.229, 0.311, 0.190, 0.276, 0.494]),
    ("Max Sim", [0.722, 0.743, 0.784, 0.639, 0.731, 0.826]),
    ("Mean Sim", [0.637, 0.650, 0.696, 0.544, 0.618, 0.736]),
    ("Sum Sim", [0.703, 0.725, 0.776, 0.604, 0.698, 0.818]),
    ("RRF K=10", [0.700, 0.739, 0.777, 0.612, 0.735, 0.832]),
    ("RRF K=60", [0.695, 0.728, 0.773, 0.599, 0.714, 0.823]),
    ("RRF K=100", [0.688, 0.719, 0.767, 0.590, 0.704, 0.818]),
    ("Weighted RRF", [0.699, 0.730, 0.778, 0.604, 0.714, 0.832]),
]

RERANKED = [
    ("OmniEmbed + RV", [0.542, 0.534, 0.546, 0.423, 0.462, 0.494]),
    ("Max Sim + RV", [0.399, 0.405, 0.425, 0.344, 0.383, 0.437]),
    ("Mean Sim + RV", [0.740, 0.723, 0.750, 0.637, 0.665, 0.736]),
    ("Sum Sim + RV", [0.747, 0.758, 0.800, 0.636, 0.711, 0.818]),
    ("RRF K=10 + RV", [0.759, 0.771, 0.811, 0.652, 0.735, 0.832]),
    ("RRF K=60 + RV", [0.754, 0.765, 0.807, 0.641, 0.716, 0.823]),
    ("RRF K=100 + RV", [0.746, 0.757, 0.799, 0.636, 0.711, 0.818]),
    ("Weighted RRF + RV", [0.757, 0.768, 0.810, 0.650, 0.725, 0.832]),
]

# Printed percentage annotations of the reranked table; None is "N/A".
PRINTED_DELTAS = [
    [177.95, 133.19, 75.56, 122.63, 67.39, None],
    [-44.74, -45.49, -45.79, -46.17, -47.61, -47.09],
    [16.17, 11.23, 7.76, 17.10, 7.61, None],
    [6.26, 4.55, 3.09, 5.30, 1.86, None],
    [8.43, 4.33, 4.38, 6.54, None, None],
    [8.49, 5.08, 4.40, 7.01, 0.28, None],
    [8.43, 5.29, 4.17, 7.80, 0.99, None],
    [8.30, 5.21, 4.11, 7.62, 1.54, None],
]


def tables():
    def records(rows):
        return jsonl({"run": run, "metric": m, "value": v} for run, vals in rows for m, v in zip(METRICS, vals))

    write("tables/first_stage.jsonl", records(FIRST_STAGE))
    write("tables/reranked.jsonl", records(RERANKED))
    expected = [
        {"baseline": b[0], "candidate": c[0], "deltas": dict(zip(METRICS, d))}
        for b, c, d in zip(FIRST_STAGE, RERANKED, PRINTED_DELTAS)
    ]
    write("tables/printed_deltas.json", json.dumps(expected, indent=2) + "\n")


# ----------------------------------------------------------------- evidence

NOTE = {
    "note_id": "gn1a-hol6y3QwX2Y-000",
    "video_id": "hol6y3QwX2Y",
    "topic": "2025_Canadian_Federal_Election",
    "text": "A woman with short blonde hair and a beige jacket is speaking.",
    "modality": "visual",
    "timestamp": [0.0, 6.0],
}

CLAIM = {
    "claim_id": "qc-10-1978302738418032640-000",
    "query_id": "10",
    "video_id": "1978302738418032640",
    "topic": "2025_Alaska_Typhoon",
    "claim": "More than 50 people have been rescued in Western Alaska.",
    "confidence": 0.95,
    "evidence": "Text overlay in the video states 'More than 50 people have been rescued in Western Alaska.'",
    "source": "video_text",
    "timestamp": [0.0, 3.0],
}

CALIBRATION = {"unli": {"prob": 0.95, "raw": {"raw_output": "<answer> 0.95 </answer>"}}}


def evidence():
    write("evidence/note_and_claim.jsonl", jsonl([NOTE, CLAIM]))
    write("evidence/calibrated_claim.jsonl", jsonl([dict(CLAIM, calibration=CALIBRATION)]))
    write("evidence/calibration_block.json", json.dumps({
        "claim_id": CLAIM["claim_id"],
        "claim": CLAIM["claim"],
        "calibration": CALIBRATION,
    }, indent=2) + "\n")

    rng = random.Random(7)
    claims, preds = [], []
    for i in range(12):
        video = f"vid{i % 4}"
        claim = {
            "claim_id": f"qc-1-{video}-{i:03d}",
            "query_id": "1",
            "video_id": video,
            "topic": "2025_Alaska_Typhoon",
            "claim": f"Observation number {i} about the storm surge.",
            "confidence": round(rng.uniform(0.5, 1.0), 2),
            "source": rng.choice(["video_visual", "video_text", "transcript"]),
            "timestamp": [float(i), float(i + 4)],
        }
        claims.append(claim)
        prob = round(rng.uniform(0.0, 1.0), 2)
        if i == 3:
            prob = 0.5  # exactly at the default threshold
        if i == 11:
            continue  # never calibrated
        if i % 5 == 4:
            # id withheld: attaches through (video_id, text)
            preds.append({"video_id": video, "text": claim["claim"], "raw_output": f"<answer>{prob}</answer>"})
        else:
            preds.append({"claim_id": claim["claim_id"], "prob": prob, "raw_output": f"<answer>{prob}</answer>"})
    preds.append({"claim_id": "qc-9-missing-000", "prob": 0.4})
    write("evidence/claims.jsonl", jsonl(claims))
    write("evidence/predictions.jsonl", jsonl(preds))


# ------------------------------------------------------------------ metrics

def metrics():
    """Five graded queries, at most eight retrieved documents each, no score ties."""
    run = {
        "m1": ["d1", "d2", "d3", "d4", "d5"],
        "m2": ["d9", "d3", "d7", "d1", "d2", "d8", "d4", "d6"],
        "m3": ["x1", "x2", "x3"],
        "m4": ["r5", "r4", "r3", "r2", "r1", "r0"],
        "m5": ["z1", "z2", "z3", "z4", "z5", "z6", "z7"],
    }
    qrels = {
        "m1": {"d1": 3, "d2": 2, "d3": 0, "d4": 1, "d5": 0},
        "m2": {"d1": 3, "d2": 1, "d3": 2, "d5": 3, "d6": 1, "d7": 0, "d11": 2},
        "m3": {"x9": 2, "x8": 1},
        "m4": {"r0": 3, "r1": 2, "r2": 1, "r3": 1, "r4": 0, "r5": 0},
        "m5": {f"z{i}": (i % 4) for i in range(1, 15)},
    }
    lines = []
    for q, docs in run.items():
        for rank, d in enumerate(docs, start=1):
            lines.append(f"{q} Q0 {d} {rank} {round(1.0 - 0.1 * rank, 2)} oracle\n")
    write("metrics/run.txt", "".join(lines))
    write("metrics/qrels.txt", "".join(f"{q} 0 {d} {g}\n" for q, m in qrels.items() for d, g in m.items()))

    perfect_run, perfect_qrels = [], []
    for q in ["p1", "p2"]:
        for rank in range(1, 13):
            grade = max(0, 3 - (rank - 1) // 3)
            perfect_run.append(f"{q} Q0 {q}-doc{rank:02d} {rank} {100 - rank} perfect\n")
            perfect_qrels.append(f"{q} 0 {q}-doc{rank:02d} {grade}\n")
    write("metrics/perfect_run.txt", "".join(perfect_run))
    write("metrics/perfect_qrels.txt", "".join(perfect_qrels))


# ----------------------------------------------------------------- pipeline

QUERIES = [
    ("1", "2025 Alaska Typhoon", "Emergency manager", "Coastal villages were flooded.",
     "What rescue operations followed the typhoon in Western Alaska and how many people were displaced?"),
    ("2", "2025 Canadian Federal Election", "Political reporter", "A snap election was called.",
     "What were the main campaign issues and how did turnout compare with previous elections?"),
    ("3", "2025 Myanmar Earthquake", "Aid coordinator", "A strong earthquake struck central Myanmar.",
     "Which regions were hardest hit and what international aid arrived in the first week?"),
    ("4", "2025 Los Angeles Wildfires", "Insurance analyst", "Several fires burned near Los Angeles.",
     "How many structures were destroyed and what caused the fires to spread so quickly?"),
]

CORPUS = 400
DEPTH = 100


def pipeline():
    rng = random.Random(2025)
    queries, replays, sub_ids = [], [], {}
    for qid, title, persona, background, query in QUERIES:
        queries.append({"query_id": qid, "title": title, "language": "English", "persona": persona,
                        "background": background, "query": query})
        if qid == "3":
            replays.append({"query_id": qid, "response": "Here are some sub-queries you could use:\n- damage"})
            sub_ids[qid] = [f"{qid}_1"]
            continue
        n = 12 + int(qid) * 2
        subs = [f"{title.split(' ', 1)[1].lower()} aspect {i}" for i in range(1, n + 1)]
        replays.append({"query_id": qid, "response": json.dumps(subs)})
        sub_ids[qid] = [f"{qid}_{i}" for i in range(1, n + 1)]
    write("pipeline/queries.jsonl", jsonl(queries))
    write("pipeline/decompositions.jsonl", jsonl(replays))

    run_lines, rerank_lines, qrel_lines = [], [], []
    for qid, _, _, _, _ in QUERIES:
        relevant = rng.sample(range(CORPUS), 15)
        grades = {d: rng.choice([1, 1, 2, 2, 3]) for d in relevant}
        for d in sorted(grades):
            qrel_lines.append(f"{qid} 0 v{d:04d} {grades[d]}\n")
        for d in rng.sample([x for x in range(CORPUS) if x not in grades], 10):
            qrel_lines.append(f"{qid} 0 v{d:04d} 0\n")
        pool = {}
        for sid in sub_ids[qid]:
            focus = set(rng.sample(relevant, 4))
            scores = {}
            for d in range(CORPUS):
                base = rng.uniform(0.05, 0.55)
                if d in focus:
                    base += rng.uniform(0.25, 0.45)
                elif d in grades:
                    base += rng.uniform(0.0, 0.15)
                scores[d] = round(base, 4)
            ranked = sorted(scores, key=lambda d: (-scores[d], d))[:DEPTH]
            for rank, d in enumerate(ranked, start=1):
                run_lines.append(f"{sid} Q0 v{d:04d} {rank} {scores[d]} omniembed\n")
                pool[d] = max(pool.get(d, 0.0), scores[d])
        head = sorted(pool, key=lambda d: (-pool[d], d))[:60]
        for d in head:
            s = round(rng.uniform(0.0, 0.4) + 0.15 * grades.get(d, 0), 4)
            rerank_lines.append((qid, d, s))
    write("pipeline/sub_runs.txt", "".join(run_lines))
    ordered = sorted(rerank_lines, key=lambda t: (t[0], -t[2], t[1]))
    lines, rank, last = [], 0, None
    for q, d, s in ordered:
        rank = rank + 1 if q == last else 1
        last = q
        lines.append(f"{q} Q0 v{d:04d} {rank} {s} rankvideo\n")
    write("pipeline/rerank.txt", "".join(lines))
    write("pipeline/qrels.txt", "".join(qrel_lines))
    write("pipeline/evidence.jsonl", (ROOT / "evidence/calibrated_claim.jsonl").read_text() + jsonl([
        dict(CLAIM, claim_id="qc-10-1978302738418032640-001", claim="Waves destroyed the harbor.",
             calibration={"unli": {"prob": 0.2, "raw": {"raw_output": "<answer>0.2</answer>"}}}),
        dict(NOTE),
    ]))
    write("pipeline/pipeline.toml", """\
# Offline pipeline over replayed service responses.
strategy = "rrf"
k = 10
first_stage_depth = 100
rerank_depth = 50
cutoffs = [10, 20, 100]
filter_threshold = 0.5
calibration_backend = "unli"
seeds = [0, 1, 2, 3, 4]
ablation_keep = ["1", "5", "10", "all"]

[inputs]
queries = "queries.jsonl"
decompositions = "decompositions.jsonl"
sub_runs = "sub_runs.txt"
rerank = "rerank.txt"
qrels = "qrels.txt"
evidence = "evidence.jsonl"
""")


def main():
    expansion()
    tables()
    evidence()
    metrics()
    pipeline()


if __name__ == "__main__":
    main()
