"""Election strategies: threshold filter, uniform sampling, loss-biased pick."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fedfits.core import Rng
from fedfits.fitness import ClientScore
from fedfits.selection import (
    SelectionStrategy,
    select_fedfits,
    select_fedpow,
    select_fedrand,
)


def _scores(values):
    return [ClientScore(i, 0.0, 0.0, v) for i, v in enumerate(values)]


class TestSelectFedfits:
    def test_worked_example(self):
        selected, threshold = select_fedfits(_scores([0.6, 0.4, 0.5]), beta=0.1)
        assert selected == {0, 2}
        assert threshold == pytest.approx(0.45, abs=1e-15)

    def test_beta_one_selects_everyone(self):
        selected, threshold = select_fedfits(_scores([0.6, 0.4, 0.5]), beta=1.0)
        assert selected == {0, 1, 2}
        assert threshold == 0.0

    def test_singleton(self):
        selected, threshold = select_fedfits(_scores([0.7]), beta=0.0)
        assert selected == {0}
        assert threshold == pytest.approx(0.7)

    def test_equal_scores_keep_everyone(self):
        selected, _ = select_fedfits(_scores([0.5] * 6), beta=0.0)
        assert selected == set(range(6))

    def test_brute_force(self):
        """Random score vectors against a direct mean-filter re-computation."""
        gen = Rng(77, "test").generator()
        for trial in range(2000):
            k = int(gen.integers(1, 21))
            vals = [float(v) for v in gen.uniform(0.0, 1.0, k)]
            beta = float(gen.choice([0.0, 0.1, 0.5, 1.0]))
            selected, threshold = select_fedfits(_scores(vals), beta)
            bar = (sum(vals) / k) * (1.0 - beta)
            want = {i for i, v in enumerate(vals) if v >= bar}
            assert threshold == pytest.approx(bar, abs=1e-12), trial
            assert selected == want, trial
            assert selected, trial  # never empty

    @given(
        st.lists(st.floats(0.0, 1.0, allow_nan=False), min_size=1, max_size=30),
        st.floats(0.0, 1.0, allow_nan=False),
    )
    def test_never_empty_and_max_always_in(self, vals, beta):
        selected, threshold = select_fedfits(_scores(vals), beta)
        assert selected
        best = max(range(len(vals)), key=lambda i: vals[i])
        assert best in selected
        for cid in selected:
            assert vals[cid] >= threshold


class TestSelectFedrand:
    def test_team_sizes_round_half_up(self):
        ids = list(range(10))
        rng = Rng(3, "select", round=1)
        assert len(select_fedrand(ids, 0.5, rng)) == 5
        assert select_fedrand(ids, 1.0, rng) == set(ids)
        assert len(select_fedrand(ids, 0.05, rng)) == 1  # floor(0.5+0.5) = 1
        assert len(select_fedrand(ids, 0.25, rng)) == 3  # 2.5 rounds up, not banker's

    def test_subset_no_duplicates(self):
        ids = list(range(7, 20))
        team = select_fedrand(ids, 0.4, Rng(5, "select", round=2))
        assert team <= set(ids)
        assert len(team) == max(1, int(0.4 * len(ids) + 0.5))

    def test_deterministic_per_key(self):
        ids = list(range(12))
        a = select_fedrand(ids, 0.5, Rng(9, "select", round=4))
        b = select_fedrand(ids, 0.5, Rng(9, "select", round=4))
        c = select_fedrand(ids, 0.5, Rng(9, "select", round=5))
        assert a == b
        assert any(select_fedrand(ids, 0.5, Rng(9, "select", round=r)) != a for r in range(5, 15))
        assert isinstance(c, set)

    def test_order_of_input_ids_irrelevant(self):
        ids = list(range(10))
        a = select_fedrand(ids, 0.3, Rng(2, "select", round=7))
        b = select_fedrand(list(reversed(ids)), 0.3, Rng(2, "select", round=7))
        assert a == b

    def test_validation(self):
        with pytest.raises(ValueError, match="no clients"):
            select_fedrand([], 0.5, Rng(1, "select"))
        with pytest.raises(ValueError, match="fraction"):
            select_fedrand([0, 1], 0.0, Rng(1, "select"))
        with pytest.raises(ValueError, match="fraction"):
            select_fedrand([0, 1], 1.2, Rng(1, "select"))


class TestSelectFedpow:
    def test_pool_and_team_sizes(self):
        ids = list(range(10))
        losses = {i: float(i) for i in ids}
        team = select_fedpow(ids, losses, candidates=9, team_size=7, rng=Rng(4, "select", round=1))
        assert len(team) == 7
        assert team <= set(ids)

    def test_full_census_degenerates_to_everyone(self):
        ids = list(range(10))
        losses = {i: float(i % 3) for i in ids}
        team = select_fedpow(ids, losses, candidates=10, team_size=10, rng=Rng(4, "select", round=2))
        assert team == set(ids)

    def test_keeps_highest_loss(self):
        losses = {0: 0.1, 1: 0.9, 2: 0.5}
        team = select_fedpow([0, 1, 2], losses, candidates=3, team_size=2, rng=Rng(1, "select", round=1))
        assert team == {1, 2}

    def test_ties_break_to_lower_id(self):
        ids = list(range(6))
        losses = {i: 1.0 for i in ids}
        team = select_fedpow(ids, losses, candidates=6, team_size=3, rng=Rng(1, "select", round=3))
        assert team == {0, 1, 2}

    def test_brute_force_against_sort_oracle(self):
        gen = Rng(55, "test").generator()
        for trial in range(300):
            k = int(gen.integers(2, 15))
            ids = list(range(k))
            losses = {i: float(gen.uniform(0, 2)) for i in ids}
            d = int(gen.integers(1, k + 1))
            m = int(gen.integers(1, d + 1))
            rng = Rng(1000 + trial, "select", round=trial + 1)
            team = select_fedpow(ids, losses, candidates=d, team_size=m, rng=rng)
            pool = [
                int(i)
                for i in rng.generator().choice(
                    np.sort(np.asarray(ids, dtype=np.int64)), size=d, replace=False
                )
            ]
            want = set(sorted(pool, key=lambda i: (-losses[i], i))[:m])
            assert team == want, trial

    def test_deterministic_per_key(self):
        ids = list(range(9))
        losses = {i: float(i * i % 5) for i in ids}
        a = select_fedpow(ids, losses, 5, 3, Rng(8, "select", round=6))
        b = select_fedpow(ids, losses, 5, 3, Rng(8, "select", round=6))
        assert a == b

    def test_missing_loss_rejected(self):
        with pytest.raises(ValueError, match="missing losses"):
            select_fedpow([0, 1, 2], {0: 0.5, 1: 0.5}, 3, 2, Rng(1, "select"))

    def test_validation(self):
        losses = {i: 0.0 for i in range(4)}
        with pytest.raises(ValueError, match="no clients"):
            select_fedpow([], {}, 1, 1, Rng(1, "select"))
        with pytest.raises(ValueError, match="team_size"):
            select_fedpow([0, 1, 2, 3], losses, candidates=5, team_size=2, rng=Rng(1, "select"))
        with pytest.raises(ValueError, match="team_size"):
            select_fedpow([0, 1, 2, 3], losses, candidates=3, team_size=4, rng=Rng(1, "select"))
        with pytest.raises(ValueError, match="team_size"):
            select_fedpow([0, 1, 2, 3], losses, candidates=3, team_size=0, rng=Rng(1, "select"))


class TestSelectionStrategy:
    def test_kind_validation(self):
        with pytest.raises(ValueError, match="unknown selection strategy"):
            SelectionStrategy(kind="fedprox")

    def test_fedrand_fraction_validation(self):
        with pytest.raises(ValueError, match="fraction"):
            SelectionStrategy(kind="fedrand", fraction=0.0)
        assert SelectionStrategy(kind="fedrand", fraction=1.0).fraction == 1.0

    def test_fedpow_bounds(self):
        with pytest.raises(ValueError, match="fedpow"):
            SelectionStrategy(kind="fedpow", candidates=3, team_size=4)
        with pytest.raises(ValueError, match="fedpow"):
            SelectionStrategy(kind="fedpow", candidates=3, team_size=0)
        s = SelectionStrategy(kind="fedpow", candidates=16, team_size=12)
        assert (s.candidates, s.team_size) == (16, 12)

    def test_plain_kinds_have_no_constraints(self):
        assert SelectionStrategy(kind="fedfits").kind == "fedfits"
        assert SelectionStrategy(kind="fedavg_full").kind == "fedavg_full"
