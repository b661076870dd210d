# tests/test_metrics.py

from __future__ import annotations

import math

import numpy as np
import pandas as pd
import pytest

from src.errors import MetricsError
from src.metrics.rank_metrics import QueryJudgment, ap_at, dcg, ndcg_at, precision_at, recall_at
from src.metrics.report import evaluate, report_table, write_table
from tests.reference_impl import oracle_metrics

# ranked = a1..a5, real = {a1, a4}
J = QueryJudgment.of([1, 2, 3, 4, 5], [1, 4])


def _random_judgments(count: int, seed: int):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        pool = int(rng.integers(5, 40))
        ranked = rng.permutation(pool)[: int(rng.integers(1, 12))]
        real = rng.choice(pool, size=int(rng.integers(1, 6)), replace=False)
        out.append(QueryJudgment.of(ranked.tolist(), real.tolist()))
    return out


def test_precision_examples():
    assert precision_at(J, 5) == pytest.approx(0.4)
    assert precision_at(QueryJudgment.of([7], [7]), 1) == 1.0
    assert precision_at(QueryJudgment.of([1, 2], [3]), 2) == 0.0


def test_precision_short_list_uses_n():
    assert precision_at(QueryJudgment.of([1], [1]), 5) == pytest.approx(0.2)


def test_recall_examples():
    assert recall_at(J, 5) == 1.0
    assert recall_at(J, 1) == 0.5
    assert recall_at(QueryJudgment.of([1, 2], [3]), 2) == 0.0


def test_ndcg_examples():
    j = QueryJudgment.of([1, 2, 3], [1, 3])
    assert dcg([1, 0, 1]) == pytest.approx(1.5)
    assert dcg([1, 1]) == pytest.approx(1.63093, abs=1e-5)
    assert ndcg_at(j, 3) == pytest.approx(0.91973, abs=1e-5)
    assert ndcg_at(QueryJudgment.of([1, 2, 3], [1, 2, 3, 4]), 3) == 1.0
    assert ndcg_at(QueryJudgment.of([1, 2], [3]), 2) == 0.0


def test_ndcg_strict_idcg():
    j = QueryJudgment.of([1, 2], [1, 2, 3])
    assert ndcg_at(j, 1) == 1.0
    assert ndcg_at(j, 1, strict_idcg=True) == pytest.approx(1.0 / (1 + 1 / math.log2(3) + 0.5))


def test_ap_examples():
    assert ap_at(QueryJudgment.of([1, 2, 3], [1, 3]), 3) == pytest.approx(5 / 6)
    assert ap_at(QueryJudgment.of([1], [1]), 1) == 1.0
    assert ap_at(QueryJudgment.of([1, 2], [3]), 2) == 0.0


def test_judgment_validation():
    with pytest.raises(MetricsError):
        QueryJudgment.of([1, 1], [1])
    with pytest.raises(MetricsError):
        QueryJudgment.of([1], [])
    with pytest.raises(MetricsError):
        precision_at(J, 0)


def test_n1_identity():
    for j in _random_judgments(2000, seed=3):
        p = precision_at(j, 1)
        assert p == ndcg_at(j, 1) == ap_at(j, 1)


def test_oracle_agreement():
    judgments = _random_judgments(10_000, seed=11)
    for j in judgments:
        for n in (1, 5, 10):
            expected = oracle_metrics(j.ranked, j.real, n)
            assert precision_at(j, n) == pytest.approx(expected["precision"], abs=1e-9)
            assert recall_at(j, n) == pytest.approx(expected["recall"], abs=1e-9)
            assert ndcg_at(j, n) == pytest.approx(expected["ndcg"], abs=1e-9)
            assert ap_at(j, n) == pytest.approx(expected["map"], abs=1e-9)


def test_evaluate_averages_queries():
    single = evaluate([J], ns=(5,))
    assert single.get("precision", 5) == precision_at(J, 5)
    assert single.get("ndcg", 5) == ndcg_at(J, 5)

    report = evaluate([QueryJudgment.of([1], [1]), QueryJudgment.of([2], [1])], ns=(1,))
    assert report.get("precision", 1) == 0.5
    assert report.query_count == 2


def test_evaluate_matches_oracle_means():
    judgments = _random_judgments(200, seed=5)
    report = evaluate(judgments, ns=(1, 5, 10))
    for n in (1, 5, 10):
        rows = [oracle_metrics(j.ranked, j.real, n) for j in judgments]
        for metric in ("precision", "recall", "ndcg", "map"):
            mean = sum(r[metric] for r in rows) / len(rows)
            assert report.get(metric, n) == pytest.approx(mean, abs=1e-9)


def test_evaluate_rejects_empty():
    with pytest.raises(MetricsError):
        evaluate([])


def test_report_table_and_file(tmp_path):
    reports = {"filter-only": evaluate([J]), "hierarchical": evaluate([J, J])}
    df = report_table(reports)
    assert list(df["model"]) == ["filter-only", "hierarchical"]
    assert list(df.columns[:6]) == ["model", "queries", "Prec@1", "Rec@1", "NDCG@1", "MAP@1"]

    path = write_table(df, tmp_path / "out" / "evaluate_test.tsv")
    back = pd.read_csv(path, sep="\t")
    assert back["Prec@5"].tolist() == [0.4, 0.4]
    text = path.read_text()
    assert "0.400000" in text
    assert write_table(df, tmp_path / "again.tsv").read_bytes() == path.read_bytes()


# ----------------------------------------
# 지표 성질
# ----------------------------------------


def test_recall_is_non_decreasing_in_n():
    for j in _random_judgments(500, seed=21):
        values = [recall_at(j, n) for n in range(1, 15)]
        assert all(a <= b for a, b in zip(values, values[1:]))


def _swap_hit_up(j: QueryJudgment, n: int, rng):
    """상위 N 안에서 바로 앞이 오답인 정답 하나를 한 칸 올린다. 그런 자리가 없으면 None."""
    ranked = list(j.ranked)
    spots = [
        i for i in range(1, min(n, len(ranked)))
        if ranked[i] in j.real and ranked[i - 1] not in j.real
    ]
    if not spots:
        return None
    i = int(rng.choice(spots))
    ranked[i - 1], ranked[i] = ranked[i], ranked[i - 1]
    return QueryJudgment.of(ranked, sorted(j.real))


def test_moving_a_hit_up_never_lowers_ndcg_or_ap():
    rng = np.random.default_rng(5)
    checked = 0
    for j in _random_judgments(3000, seed=9):
        for n in (3, 5, 10):
            swapped = _swap_hit_up(j, n, rng)
            if swapped is None:
                continue
            checked += 1
            assert ndcg_at(swapped, n) >= ndcg_at(j, n) - 1e-12
            assert ap_at(swapped, n) >= ap_at(j, n) - 1e-12
            assert precision_at(swapped, n) == precision_at(j, n)
    assert checked > 100


def test_metrics_ignore_id_relabeling():
    rng = np.random.default_rng(13)
    for j in _random_judgments(500, seed=17):
        pool = max(max(j.ranked), max(j.real)) + 1
        perm = rng.permutation(pool)
        relabeled = QueryJudgment.of([int(perm[a]) for a in j.ranked], [int(perm[a]) for a in j.real])
        for n in (1, 5, 10):
            assert precision_at(relabeled, n) == precision_at(j, n)
            assert recall_at(relabeled, n) == recall_at(j, n)
            assert ndcg_at(relabeled, n) == ndcg_at(j, n)
            assert ap_at(relabeled, n) == ap_at(j, n)
