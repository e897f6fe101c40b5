#!/usr/bin/env python3
"""Builds the golden ground-truth fixture and its expected outputs.

Writes, under tests/fixtures/golden/:
  docs.jsonl, queries.jsonl       inputs (one short sentence per document)
  rerank_logits.json              stub fixture, raw logits
  rerank_probs.json               stub fixture, probabilities (normalized backend)
  judgments.jsonl                 expected judgments on the golden-512 corpus
  retrieval.jsonl                 expected aggregate retrieval rows for bm25

BM25, calibration, metrics and aggregation are computed here from scratch.
"""

import json
import math
import random
import re
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "fixtures" / "golden"
CORPUS_ID = "golden-512"
K1, B = 1.2, 0.75
CANDIDATE_K = 100
METRIC_K = [1, 3, 5, 10, 20, 50]
DEPTH = 50
THRESHOLD = 0.5

VOCAB = ("amber basin cedar delta ember fjord granite harbor island juniper kelp lagoon meadow "
         "nectar orchard pebble quarry ridge summit tundra upland valley willow yarrow").split()

QUERIES = [
    ("g1", "amber harbor"),
    ("g2", "cedar ridge summit"),
    ("g3", "kelp lagoon island willow"),
    ("g4", "granite quarry"),
    ("g5", "meadow nectar orchard yarrow"),
]


def words(text):
    return re.findall(r"[a-z0-9]+", text.lower())


def make_docs(rng):
    docs = []
    for i in range(130):
        n = rng.randint(6, 14)
        body = " ".join(rng.choice(VOCAB) for _ in range(n))
        docs.append({"doc_id": f"g{i:03d}", "text": body.capitalize() + "."})
    return docs


def bm25_rank(passages, query, k):
    n = len(passages)
    tokens = {pid: words(text) for pid, text in passages}
    avg = sum(len(t) for t in tokens.values()) / n
    df = {}
    for t in tokens.values():
        for term in set(t):
            df[term] = df.get(term, 0) + 1
    scored = []
    for pid, _ in passages:
        t = tokens[pid]
        score, matched = 0.0, False
        for term in sorted(set(words(query))):
            tf = t.count(term)
            if tf == 0:
                continue
            matched = True
            idf = math.log(1.0 + (n - df[term] + 0.5) / (df[term] + 0.5))
            score += idf * tf * (K1 + 1) / (tf + K1 * (1 - B + B * len(t) / avg))
        if matched:
            scored.append((pid, score))
    scored.sort(key=lambda x: (-x[1], x[0]))
    return [pid for pid, _ in scored[:k]]


def logistic(x):
    return 1.0 / (1.0 + math.exp(-x))


def judgment(query_id, backend, pool, probs):
    gains = {pid: probs[pid] for pid in pool}
    ranked = sorted(pool, key=lambda p: (-gains[p], p))
    return {
        "query_id": query_id,
        "backend_id": backend,
        "threshold": THRESHOLD,
        "candidate_pool": pool,
        "ranked": ranked,
        "relevant_set": sorted(p for p in pool if gains[p] >= THRESHOLD),
        "gains": gains,
    }


def tau_b(x, y):
    n = len(x)
    if n < 2:
        return None
    p = q = tx = ty = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx, dy = x[i] - x[j], y[i] - y[j]
            if dx == 0:
                tx += 1
            if dy == 0:
                ty += 1
            if dx == 0 or dy == 0:
                continue
            if (dx > 0) == (dy > 0):
                p += 1
            else:
                q += 1
    n0 = n * (n - 1) // 2
    den = math.sqrt((n0 - tx) * (n0 - ty))
    if den == 0:
        return None
    return (p - q) / den


def metrics(retrieved, j, k):
    top = retrieved[:k]
    rel = set(j["relevant_set"])
    out = {}
    if rel:
        hits = len([p for p in top if p in rel])
        out["recall"] = hits / len(rel)
        out["precision"] = hits / k
    else:
        out["recall"] = out["precision"] = None
    gains = j["gains"]
    dcg = sum(gains.get(p, 0.0) / math.log2(i + 2) for i, p in enumerate(top))
    ideal = sorted(gains.values(), reverse=True)[:k]
    idcg = sum(g / math.log2(i + 2) for i, g in enumerate(ideal))
    out["ndcg"] = dcg / idcg if idcg > 0 else None
    judged = set(j["ranked"][:k])
    x, y = [], []
    for pos, p in enumerate(top, start=1):
        if p in judged:
            x.append(-pos)
            y.append(gains[p])
    out["kendall_tau"] = tau_b(x, y)
    return out


def main():
    rng = random.Random(20240613)
    docs = make_docs(rng)
    passages = [(d["doc_id"] + "#00000", d["text"]) for d in docs]
    text_of = dict(passages)

    logits, probs = {}, {}
    logit_fixture, prob_fixture = [], []
    for qid, qtext in QUERIES:
        for pid, text in passages:
            logit = rng.randint(-16, 16) / 4.0
            prob = rng.randint(1, 19) / 20.0
            logits[(qid, pid)] = logit
            probs[(qid, pid)] = prob
            logit_fixture.append({"query": qtext, "passage": text, "score": logit})
            prob_fixture.append({"query": qtext, "passage": text, "score": prob})

    judgments = []
    for qid, qtext in QUERIES:
        pool = bm25_rank(passages, qtext, CANDIDATE_K)
        judgments.append(judgment(qid, "rerank-logits", pool, {p: logistic(logits[(qid, p)]) for p in pool}))
        judgments.append(judgment(qid, "rerank-probs", pool, {p: probs[(qid, p)] for p in pool}))

    groups = {}
    for qid, qtext in QUERIES:
        retrieved = bm25_rank(passages, qtext, DEPTH)
        for j in (j for j in judgments if j["query_id"] == qid):
            for k in METRIC_K:
                for name, value in metrics(retrieved, j, k).items():
                    g = groups.setdefault((name, k), {"per_backend": {}, "unevaluable": 0})
                    b = g["per_backend"].setdefault(j["backend_id"], [])
                    if value is None:
                        g["unevaluable"] += 1
                    else:
                        b.append(value)
    rows = []
    for (name, k), g in sorted(groups.items(), key=lambda item: (item[0][0], item[0][1])):
        means = [sum(v) / len(v) for v in g["per_backend"].values() if v]
        rows.append({
            "corpus_id": CORPUS_ID,
            "retriever_id": "bm25",
            "k": k,
            "metric": name,
            "mean": sum(means) / len(means) if means else None,
            "backends": len(means),
            "evaluated": sum(len(v) for v in g["per_backend"].values()),
            "unevaluable": g["unevaluable"],
        })

    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / "docs.jsonl").write_text("".join(json.dumps(d) + "\n" for d in docs))
    (OUT / "queries.jsonl").write_text(
        "".join(json.dumps({"query_id": q, "question": t}) + "\n" for q, t in QUERIES))
    (OUT / "rerank_logits.json").write_text(json.dumps({"rerank": logit_fixture}, indent=0) + "\n")
    (OUT / "rerank_probs.json").write_text(json.dumps({"rerank": prob_fixture}, indent=0) + "\n")
    (OUT / "judgments.jsonl").write_text("".join(json.dumps(j) + "\n" for j in judgments))
    (OUT / "retrieval.jsonl").write_text("".join(json.dumps(r) + "\n" for r in rows))
    assert all(text_of[p] for j in judgments for p in j["candidate_pool"])
    print(f"{len(docs)} docs, pool sizes {[len(j['candidate_pool']) for j in judgments[::2]]}")


if __name__ == "__main__":
    main()
