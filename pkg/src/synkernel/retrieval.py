"""Value-aware experience retrieval.

Selection happens in three stages. A semantic shortlist keeps the top-M
records by intent similarity. Each shortlisted candidate is then scored as

    score = w_s * sigma_z + w_q * q_z + c * sqrt(ln(T) / max(n_i, 1))

where sigma_z and q_z are z-scores of similarity and scalarized value within
the shortlist, n_i is the candidate's visit count, and T = max(sum of
shortlist visits, 1). The bonus favors rarely injected candidates, so a
record with a mediocre similarity but unknown value still gets its audition.
Finally an epsilon-greedy pass fills K slots without replacement: each slot
takes the best remaining candidate with probability 1 - epsilon, otherwise a
uniformly random remaining one.

Z-score conventions: population standard deviation; a singleton shortlist or
a zero-variance column yields z = 0 rather than a division by zero. With no
visits anywhere, T = 1 and the bonus vanishes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import KernelConfig
from .experience import ExperienceStore


@dataclass(frozen=True)
class ScoredCandidate:
    id: int
    sigma: float
    q_scalar: float
    sigma_z: float
    q_z: float
    visits: int
    bonus: float
    score: float


def shortlist(store: ExperienceStore, query: str, m: int) -> list[tuple[int, float]]:
    """Top-m records by intent similarity, descending, ties to the older id."""
    if m < 1:
        raise ValueError(f"shortlist size must be >= 1, got {m}")
    ids, sims = store.intent_similarities(query)
    order = sorted(range(len(ids)), key=lambda idx: (-sims[idx], ids[idx]))
    return [(ids[idx], float(sims[idx])) for idx in order[:m]]


def _zscores(values: np.ndarray) -> np.ndarray:
    if values.size <= 1:
        return np.zeros_like(values)
    std = values.std()  # population std
    if std == 0.0:
        return np.zeros_like(values)
    return (values - values.mean()) / std


def score_candidates(
    store: ExperienceStore, shortlisted: list[tuple[int, float]], config: KernelConfig
) -> list[ScoredCandidate]:
    """Score a shortlist; output preserves shortlist order."""
    if not shortlisted:
        return []
    sigmas = np.array([s for _, s in shortlisted], dtype=np.float64)
    qs = np.array(
        [
            sum(w * qv for w, qv in zip(config.lambda_weights, store.peek(i).q_values))
            for i, _ in shortlisted
        ],
        dtype=np.float64,
    )
    visits = np.array([store.peek(i).visit_count for i, _ in shortlisted], dtype=np.int64)
    sigma_z = _zscores(sigmas)
    q_z = _zscores(qs)
    total = max(int(visits.sum()), 1)
    bonus = config.ucb_c * np.sqrt(np.log(total) / np.maximum(visits, 1))
    out = []
    for idx, (i, sigma) in enumerate(shortlisted):
        b = float(bonus[idx])
        sz = float(sigma_z[idx])
        qz = float(q_z[idx])
        out.append(
            ScoredCandidate(
                id=i,
                sigma=float(sigma),
                q_scalar=float(qs[idx]),
                sigma_z=sz,
                q_z=qz,
                visits=int(visits[idx]),
                bonus=b,
                score=config.w_s * sz + config.w_q * qz + b,
            )
        )
    return out


def select_top_k(
    scored: list[ScoredCandidate], k: int, epsilon: float, rng: np.random.Generator
) -> list[ScoredCandidate]:
    """Fill k slots without replacement, greedy with epsilon exploration.

    With epsilon = 0 no randomness is consumed at all, so selection is a pure
    function of the scores (ties to the older id).
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    remaining = sorted(scored, key=lambda c: (-c.score, c.id))
    picked: list[ScoredCandidate] = []
    while remaining and len(picked) < k:
        if epsilon > 0.0 and rng.random() < epsilon:
            idx = int(rng.integers(len(remaining)))
        else:
            idx = 0
        picked.append(remaining.pop(idx))
    return picked


def recall(
    store: ExperienceStore,
    query: str,
    config: KernelConfig,
    rng: np.random.Generator,
    now: int,
    k: int | None = None,
) -> list[dict]:
    """Full pipeline: shortlist, score, select, count visits.

    Returns the injection payload, records in selection order. The same id
    never appears twice (selection is without replacement) and at most K
    records are returned.
    """
    if len(store) == 0:
        return []
    cands = shortlist(store, query, config.shortlist_m)
    scored = score_candidates(store, cands, config)
    picked = select_top_k(scored, k if k is not None else config.top_k, config.epsilon, rng)
    store.record_visits([c.id for c in picked], now)
    payload = []
    for c in picked:
        rec = store.peek(c.id)
        payload.append({"id": c.id, "intent": rec.intent, "script": rec.script, "score": c.score})
    return payload
