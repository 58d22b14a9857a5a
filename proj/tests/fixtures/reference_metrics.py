#!/usr/bin/env python3
"""Independent reference scorer for the fixture corpus.

Transcribes the published CIDEr-D and corpus BLEU definitions directly; it
shares no code with the C++ implementation it cross-checks. Run from this
directory:

    python3 reference_metrics.py

Rewrites expected_metrics.json next to this script.

Conventions (kept identical on both sides by agreement, not by shared code):
  - tokens: lowercase; characters outside [a-z0-9'] become spaces
  - idf(g) = ln(N / df(g)), df counting images whose references contain g
  - CIDEr-D: per-order tf-idf vectors with raw counts, clipped similarity
    sum(min(c_g, r_g) * r_g) / (|c||r|), Gaussian length penalty
    exp(-(len_c - len_r)^2 / (2 * sigma^2)) on token lengths, sigma = 6,
    averaged over orders 1..4 and references, times 10
  - BLEU-n: corpus-level clipped modified precisions, geometric mean,
    brevity penalty with closest reference length (ties toward shorter)
"""

import json
import math
import os
import re
from collections import Counter

HERE = os.path.dirname(os.path.abspath(__file__))
SIGMA = 6.0
MAX_ORDER = 4


def tokenize(text):
    return re.sub(r"[^a-z0-9']", " ", text.lower()).split()


def ngram_counts(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def build_idf(images):
    n_images = len(images)
    df = [Counter() for _ in range(MAX_ORDER)]
    for refs in images.values():
        for n in range(1, MAX_ORDER + 1):
            seen = set()
            for ref in refs:
                seen.update(ngram_counts(ref, n))
            for gram in seen:
                df[n - 1][gram] += 1
    def idf(order, gram):
        return math.log(n_images / max(1.0, float(df[order - 1][gram])))
    return idf


def tfidf_vector(tokens, order, idf):
    vec = {g: c * idf(order, g) for g, c in ngram_counts(tokens, order).items()}
    norm = math.sqrt(sum(w * w for w in vec.values()))
    return vec, norm


def cider_d(candidate, refs, idf):
    cand = [tfidf_vector(candidate, n, idf) for n in range(1, MAX_ORDER + 1)]
    total = 0.0
    for ref in refs:
        delta = float(len(candidate) - len(ref))
        penalty = math.exp(-delta * delta / (2.0 * SIGMA * SIGMA))
        for n in range(1, MAX_ORDER + 1):
            cvec, cnorm = cand[n - 1]
            rvec, rnorm = tfidf_vector(ref, n, idf)
            if cnorm == 0.0 or rnorm == 0.0:
                continue
            overlap = sum(min(w, rvec[g]) * rvec[g] for g, w in cvec.items() if g in rvec)
            total += overlap / (cnorm * rnorm) * penalty
    return total / MAX_ORDER / len(refs) * 10.0


def corpus_bleu(candidates, ref_lists, order):
    matched = [0] * order
    guess = [0] * order
    cand_len = 0
    ref_len = 0
    for cand, refs in zip(candidates, ref_lists):
        cand_len += len(cand)
        ref_len += min((abs(len(r) - len(cand)), len(r)) for r in refs)[1]
        for n in range(1, order + 1):
            counts = ngram_counts(cand, n)
            max_ref = Counter()
            for r in refs:
                for g, c in ngram_counts(r, n).items():
                    max_ref[g] = max(max_ref[g], c)
            for g, c in counts.items():
                guess[n - 1] += c
                matched[n - 1] += min(c, max_ref[g])
    log_sum = 0.0
    for n in range(order):
        if guess[n] == 0 or matched[n] == 0:
            return 0.0
        log_sum += math.log(matched[n] / guess[n])
    score = math.exp(log_sum / order)
    if cand_len <= ref_len:
        if cand_len == 0:
            return 0.0
        score *= math.exp(1.0 - ref_len / cand_len)
    return score


def main():
    with open(os.path.join(HERE, "captions.json")) as f:
        dataset = {img["id"]: [tokenize(c) for c in img["captions"]]
                   for img in json.load(f)["images"]}
    with open(os.path.join(HERE, "candidates.json")) as f:
        candidates = {img["id"]: tokenize(img["captions"][0])
                      for img in json.load(f)["images"]}

    idf = build_idf(dataset)
    cider_scores = {img: cider_d(candidates[img], dataset[img], idf)
                    for img in sorted(dataset)}
    ordered = sorted(dataset)
    bleu = [corpus_bleu([candidates[i] for i in ordered],
                        [dataset[i] for i in ordered], n)
            for n in range(1, MAX_ORDER + 1)]

    expected = {
        "sigma": SIGMA,
        "cider": cider_scores,
        "mean_cider": sum(cider_scores.values()) / len(cider_scores),
        "corpus_bleu": bleu,
    }
    out = os.path.join(HERE, "expected_metrics.json")
    with open(out, "w") as f:
        json.dump(expected, f, indent=2, sort_keys=True)
        f.write("\n")
    print("wrote", out)
    for img, score in cider_scores.items():
        print(f"  cider[{img}] = {score:.10f}")
    print("  bleu =", ", ".join(f"{b:.10f}" for b in bleu))


if __name__ == "__main__":
    main()
