"""Structure-recovery scoring and differential edge extraction.

Supports are compared as sets of unordered off-diagonal pairs; magnitudes
only enter the supplementary RMSE. Zero-denominator conventions: a
population where both graphs are empty scores 1 across the board (the empty
structure was recovered exactly); no predictions means precision 0; true
edges absent but predictions present means recall 0; F1 is 0 whenever
P + R = 0.
"""

from __future__ import annotations

from typing import Dict, List

import numpy as np

from .errors import ShapeMismatch
from .model import PrecisionSet


def _check_pair(a: PrecisionSet, b: PrecisionSet) -> None:
    if a.p != b.p:
        raise ShapeMismatch(f"gene counts differ: {a.p} vs {b.p}")
    if a.n_populations != b.n_populations:
        raise ShapeMismatch(
            f"population counts differ: {a.n_populations} vs {b.n_populations}"
        )


def _offdiag_rmse(true: PrecisionSet, est: PrecisionSet, k: int) -> float:
    p = true.p
    npairs = p * (p - 1) // 2
    if npairs == 0:
        return 0.0
    sq = 0.0
    keys = set(true.edges[k]) | set(est.edges[k])
    for key in keys:
        d = true.edges[k].get(key, 0.0) - est.edges[k].get(key, 0.0)
        sq += d * d
    return float(np.sqrt(sq / npairs))


def score(true: PrecisionSet, est: PrecisionSet) -> Dict:
    """Per-population precision/recall/F1 (+ RMSE) and the macro average."""
    _check_pair(true, est)
    per = []
    for k in range(true.n_populations):
        ts = true.support(k)
        es = est.support(k)
        tp = len(ts & es)
        fp = len(es - ts)
        fn = len(ts - es)
        if not ts and not es:
            prec = rec = f1 = 1.0
        else:
            prec = tp / (tp + fp) if es else 0.0
            rec = tp / (tp + fn) if ts else 0.0
            f1 = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
        per.append(
            {
                "precision": prec,
                "recall": rec,
                "f1": f1,
                "rmse": _offdiag_rmse(true, est, k),
                "tp": tp,
                "fp": fp,
                "fn": fn,
            }
        )
    macro = {
        key: float(np.mean([row[key] for row in per]))
        for key in ("precision", "recall", "f1", "rmse")
    }
    return {"per_population": per, "macro": macro}


def differential_edges(a: PrecisionSet, b: PrecisionSet, tau: float = 0.0) -> List[Dict]:
    """Per-population edge diffs: gained (in b only), lost (in a only), and
    changed (in both, |delta| > tau); each list sorted by magnitude, largest
    first, with (i, j) as a final deterministic tie-break."""
    _check_pair(a, b)
    out = []
    for k in range(a.n_populations):
        ea = a.edges[k]
        eb = b.edges[k]
        gained = [
            {"i": i, "j": j, "value": eb[(i, j)]}
            for (i, j) in set(eb) - set(ea)
        ]
        gained.sort(key=lambda r: (-abs(r["value"]), r["i"], r["j"]))
        lost = [
            {"i": i, "j": j, "value": ea[(i, j)]}
            for (i, j) in set(ea) - set(eb)
        ]
        lost.sort(key=lambda r: (-abs(r["value"]), r["i"], r["j"]))
        changed = []
        for key in set(ea) & set(eb):
            delta = eb[key] - ea[key]
            if abs(delta) > tau:
                changed.append(
                    {"i": key[0], "j": key[1], "value_a": ea[key],
                     "value_b": eb[key], "delta": delta}
                )
        changed.sort(key=lambda r: (-abs(r["delta"]), r["i"], r["j"]))
        out.append({"gained": gained, "lost": lost, "changed": changed})
    return out
