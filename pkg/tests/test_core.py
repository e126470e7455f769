"""Core value types: flat model layout, RNG streams, record invariants."""

from __future__ import annotations

import os
import re

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import fedfits
from fedfits.core import (
    RNG_DOMAINS,
    EvalResult,
    FlatModel,
    LayerSpec,
    Rng,
    RoundRecord,
    arch_size,
    flatten,
    rng_draw,
    unflatten,
)


class TestRng:
    def test_domains_have_unique_codes(self):
        assert len(set(RNG_DOMAINS.values())) == len(RNG_DOMAINS) == 11

    def test_unknown_domain_rejected(self):
        with pytest.raises(ValueError, match="unknown rng domain"):
            Rng(0, "nope")

    def test_same_key_same_sequence(self):
        a = rng_draw(Rng(9, "shuffle", client_id=2, round=4), 32)
        b = rng_draw(Rng(9, "shuffle", client_id=2, round=4), 32)
        assert np.array_equal(a, b)

    def test_empty_draw(self):
        assert rng_draw(Rng(1, "data"), 0).shape == (0,)

    def test_negative_draw_rejected(self):
        with pytest.raises(ValueError, match=">= 0"):
            rng_draw(Rng(1, "data"), -1)

    def test_regression_fixture_seed1_data(self):
        # Frozen output of the chosen generator; any change to the stream
        # construction (seed handling, spawn key layout, bit generator)
        # breaks reproducibility of published runs and must fail here.
        got = rng_draw(Rng(1, "data"), 5)
        expected = [
            0.005955125846738629,
            0.7004754854288527,
            0.9739467091408014,
            0.3105905897556307,
            0.8559370346028717,
        ]
        assert np.array_equal(got, np.array(expected))

    def test_regression_fixture_client_round_key(self):
        got = rng_draw(Rng(1, "data", client_id=3, round=7), 3)
        expected = [0.8922850204874793, 0.476744254024118, 0.8723998362536896]
        assert np.array_equal(got, np.array(expected))

    def test_different_seeds_decorrelate(self):
        a = rng_draw(Rng(1, "data"), 100)
        b = rng_draw(Rng(2, "data"), 100)
        assert int((a != b).sum()) >= 90

    def test_streams_are_disjoint(self):
        base = rng_draw(Rng(5, "data"), 16)
        for variant in (
            Rng(5, "init"),
            Rng(5, "data", client_id=1),
            Rng(5, "data", round=1),
        ):
            assert not np.array_equal(base, rng_draw(variant, 16))

    def test_no_global_rng_in_package(self):
        """Code audit: every random draw goes through Rng; nothing reaches
        numpy's module-level RNG or the stdlib random module."""
        pkg_dir = os.path.dirname(fedfits.__file__)
        offenders = []
        for dirpath, _, names in os.walk(pkg_dir):
            for name in names:
                if not name.endswith(".py") and not name.endswith(".pyx"):
                    continue
                path = os.path.join(dirpath, name)
                with open(path, encoding="utf-8") as fh:
                    text = fh.read()
                for lineno, line in enumerate(text.splitlines(), start=1):
                    if re.search(r"\bimport random\b|\bfrom random\b", line):
                        offenders.append(f"{name}:{lineno}: {line.strip()}")
                    for hit in re.findall(r"np\.random\.\w+", line):
                        if hit not in (
                            "np.random.SeedSequence",
                            "np.random.Philox",
                            "np.random.Generator",
                        ):
                            offenders.append(f"{name}:{lineno}: {line.strip()}")
        assert not offenders, offenders

    def test_stream_construction_only_in_core(self):
        """The three allowed np.random names appear only inside core.py."""
        pkg_dir = os.path.dirname(fedfits.__file__)
        for dirpath, _, names in os.walk(pkg_dir):
            for name in names:
                if not name.endswith(".py") or name == "core.py":
                    continue
                with open(os.path.join(dirpath, name), encoding="utf-8") as fh:
                    assert "np.random." not in fh.read(), name


class TestFlatLayout:
    def test_layout_example(self):
        arch = (LayerSpec(2, 2, "softmax"),)
        model = flatten(arch, [(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([5.0, 6.0]))])
        assert np.array_equal(model.weights, [1, 2, 3, 4, 5, 6])

    def test_round_trip_mlp(self):
        arch = (LayerSpec(3, 4, "relu"), LayerSpec(4, 2, "softmax"))
        gen = Rng(3, "test").generator()
        layers = [
            (gen.standard_normal((3, 4)), gen.standard_normal(4)),
            (gen.standard_normal((4, 2)), gen.standard_normal(2)),
        ]
        back = unflatten(flatten(arch, layers))
        for (w, b), (w2, b2) in zip(layers, back):
            assert np.array_equal(w, w2)
            assert np.array_equal(b, b2)

    @given(st.integers(1, 5), st.integers(1, 5), st.integers(2, 5))
    def test_round_trip_any_shape(self, in_dim, hidden, out_dim):
        arch = (LayerSpec(in_dim, hidden, "relu"), LayerSpec(hidden, out_dim, "softmax"))
        gen = Rng(in_dim * 31 + hidden * 7 + out_dim, "test").generator()
        layers = [
            (gen.standard_normal((in_dim, hidden)), gen.standard_normal(hidden)),
            (gen.standard_normal((hidden, out_dim)), gen.standard_normal(out_dim)),
        ]
        model = flatten(arch, layers)
        assert model.size == arch_size(arch)
        back = unflatten(model)
        assert all(
            np.array_equal(w, w2) and np.array_equal(b, b2)
            for (w, b), (w2, b2) in zip(layers, back)
        )

    def test_shape_mismatch_names_layer(self):
        arch = (LayerSpec(2, 3, "relu"), LayerSpec(3, 2, "softmax"))
        good0 = (np.zeros((2, 3)), np.zeros(3))
        with pytest.raises(ValueError, match="layer 1: weight shape"):
            flatten(arch, [good0, (np.zeros((2, 2)), np.zeros(2))])
        with pytest.raises(ValueError, match="layer 0: bias shape"):
            flatten(arch, [(np.zeros((2, 3)), np.zeros(2)), (np.zeros((3, 2)), np.zeros(2))])

    def test_layer_count_mismatch(self):
        with pytest.raises(ValueError, match="1 layers"):
            flatten((LayerSpec(2, 2, "softmax"),), [])


class TestFlatModel:
    def test_wrong_length_rejected(self):
        with pytest.raises(ValueError, match="length 5, arch implies 6"):
            FlatModel((LayerSpec(2, 2, "softmax"),), np.zeros(5))

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="non-finite"):
            FlatModel((LayerSpec(2, 2, "softmax"),), np.array([1.0, np.nan, 0, 0, 0, 0]))

    def test_weights_read_only(self):
        model = FlatModel((LayerSpec(2, 2, "softmax"),), np.zeros(6))
        with pytest.raises(ValueError):
            model.weights[0] = 1.0

    def test_with_weights_keeps_arch(self):
        model = FlatModel((LayerSpec(2, 2, "softmax"),), np.zeros(6))
        other = model.with_weights(np.ones(6))
        assert other.arch == model.arch
        assert np.array_equal(other.weights, np.ones(6))
        assert np.array_equal(model.weights, np.zeros(6))

    def test_arch_size_examples(self):
        assert arch_size((LayerSpec(4, 3, "softmax"),)) == 15
        assert arch_size((LayerSpec(2, 3, "relu"), LayerSpec(3, 2, "softmax"))) == 17

    def test_layer_spec_validation(self):
        with pytest.raises(ValueError, match="dims must be >= 1"):
            LayerSpec(0, 2, "softmax")
        with pytest.raises(ValueError, match="unknown activation"):
            LayerSpec(1, 1, "tanh")


class TestRecords:
    def test_eval_result_bounds(self):
        with pytest.raises(ValueError, match="loss"):
            EvalResult(-0.1, 0.5)
        with pytest.raises(ValueError, match="loss"):
            EvalResult(float("nan"), 0.5)
        with pytest.raises(ValueError, match="accuracy"):
            EvalResult(0.1, 1.5)

    def test_round_record_requires_team(self):
        with pytest.raises(ValueError, match="non-empty"):
            RoundRecord(
                round=1,
                team=(),
                global_eval=EvalResult(0.5, 0.5),
                theta_sum=0.0,
                selection_event=True,
                wall_ms=0,
                participation_cumulative=0.0,
            )

    def test_round_record_rejects_negative_wall(self):
        with pytest.raises(ValueError, match="wall_ms"):
            RoundRecord(
                round=1,
                team=(0,),
                global_eval=EvalResult(0.5, 0.5),
                theta_sum=0.0,
                selection_event=True,
                wall_ms=-1,
                participation_cumulative=0.0,
            )
