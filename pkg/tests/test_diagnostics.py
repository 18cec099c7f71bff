import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dforge import projector as pj
from dforge.diagnostics import (
    CSV_FIELDS,
    MetricsRecord,
    m_bc,
    m_da,
    projector_diversity,
    read_csv,
    strip_secs,
    to_csv,
    to_jsonl,
)
from dforge.errors import DimensionError, MetricError
from dforge.projector import Projector, ProjectorEnsemble, ProjectorSpec
from dforge.tensor import Tensor


def brute_mbc(s, labels):
    """Straight double loop over every cross-class pair."""
    per_sample = []
    b = s.shape[1]
    for i in range(b):
        sims = []
        for j in range(b):
            if labels[j] != labels[i]:
                a, c = s[:, i], s[:, j]
                sims.append(float(a @ c) / (math.sqrt(a @ a) * math.sqrt(c @ c)))
        if sims:
            per_sample.append(sum(sims) / len(sims))
    return sum(per_sample) / len(per_sample)


class TestMDA:
    def test_examples(self, rng):
        t = rng.normal(size=(4, 6))
        assert abs(m_da(t, t)) < 1e-15
        assert m_da(-t, t) == pytest.approx(2.0, abs=1e-14)
        s = np.array([[1.0, 0.0], [0.0, 2.0]])
        assert m_da(s, np.array([[0.0, 3.0], [1.0, 0.0]])) == pytest.approx(1.0, abs=1e-15)

    def test_unequal_dims_explained(self, rng):
        with pytest.raises(DimensionError, match="equal feature dims"):
            m_da(rng.normal(size=(3, 4)), rng.normal(size=(5, 4)))

    def test_accepts_tensors(self, rng):
        s = rng.normal(size=(3, 4))
        assert m_da(Tensor(s), s) == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 12), b=st.integers(1, 20))
def test_mda_symmetric_and_bounded(seed, d, b):
    rng = np.random.default_rng(seed)
    s, t = rng.normal(size=(d, b)), rng.normal(size=(d, b))
    v = m_da(s, t)
    assert abs(v - m_da(t, s)) < 1e-12
    assert -1e-15 <= v <= 2 + 1e-15


class TestMBC:
    def test_identical_pair(self):
        assert m_bc(np.array([[1.0, 1.0], [2.0, 2.0]]), [0, 1]) == pytest.approx(1.0, abs=1e-15)

    def test_orthogonal_pair(self):
        assert m_bc(np.eye(2), [0, 1]) == pytest.approx(0.0, abs=1e-15)

    def test_three_sample_example(self):
        s = np.column_stack([[1, 0], [0, 1], [1 / math.sqrt(2), 1 / math.sqrt(2)]])
        assert m_bc(s, [0, 0, 1]) == pytest.approx(brute_mbc(s, [0, 0, 1]), abs=1e-15)
        assert m_bc(s, [0, 0, 1]) == pytest.approx(0.70711, abs=5e-6)

    def test_samples_without_partner_skipped(self):
        # no sample lacks a partner once two classes exist, so check the oracle agrees on skewed labels
        s = np.random.default_rng(3).normal(size=(4, 7))
        labels = [0, 0, 0, 0, 0, 0, 1]
        assert m_bc(s, labels) == pytest.approx(brute_mbc(s, labels), abs=1e-12)

    def test_single_class_undefined(self, rng):
        with pytest.raises(MetricError):
            m_bc(rng.normal(size=(3, 5)), [2] * 5)

    def test_single_sample_undefined(self, rng):
        with pytest.raises(MetricError):
            m_bc(rng.normal(size=(3, 1)), [0])

    def test_label_count_mismatch(self, rng):
        with pytest.raises(DimensionError):
            m_bc(rng.normal(size=(3, 4)), [0, 1])


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), b=st.integers(2, 64), c=st.integers(2, 10))
def test_mbc_matches_brute_force(seed, b, c):
    rng = np.random.default_rng(seed)
    s = rng.normal(size=(5, b))
    labels = rng.integers(0, c, size=b)
    if np.unique(labels).size < 2:
        labels[0] = (labels[1] + 1) % c
    assert abs(m_bc(s, labels) - brute_mbc(s, labels)) < 1e-9


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(1e-3, 1e3))
def test_mbc_column_scale_invariance(seed, scale):
    rng = np.random.default_rng(seed)
    s = rng.normal(size=(4, 12))
    labels = rng.integers(0, 3, size=12)
    labels[:2] = [0, 1]
    scaled = s.copy()
    scaled[:, rng.integers(12)] *= scale
    assert abs(m_bc(scaled, labels) - m_bc(s, labels)) < 1e-9
    assert -1 - 1e-12 <= m_bc(s, labels) <= 1 + 1e-12


def ens(*mats):
    spec = ProjectorSpec(mats[0].shape[1], mats[0].shape[0])
    return ProjectorEnsemble(spec, [Projector(spec, [Tensor(np.asarray(m, float))]) for m in mats])


class TestDiversity:
    def test_identical_members(self):
        w = np.random.default_rng(0).normal(size=(3, 4))
        assert projector_diversity(ens(w, w.copy())) == [0.0]

    def test_zeros_vs_ones(self):
        assert projector_diversity(ens(np.zeros((3, 5)), np.ones((3, 5)))) == [pytest.approx(math.sqrt(15))]

    def test_pair_order(self):
        a, b, c = np.zeros((2, 2)), np.ones((2, 2)), 3 * np.ones((2, 2))
        assert projector_diversity(ens(a, b, c)) == pytest.approx([2.0, 6.0, 4.0])

    def test_deep_projectors_concatenate_layers(self):
        e = pj.init_ensemble(ProjectorSpec(3, 4, 2, 2), 2, 0)
        flat = [np.concatenate([w.data.ravel() for w in m.weights]) for m in e.members]
        assert projector_diversity(e) == [pytest.approx(np.linalg.norm(flat[0] - flat[1]), abs=1e-14)]

    def test_q1_undefined(self):
        with pytest.raises(MetricError):
            projector_diversity(pj.init_ensemble(ProjectorSpec(3, 4), 1, 0))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), q=st.integers(2, 5))
def test_diversity_permutation_equivariant(seed, q):
    e = pj.init_ensemble(ProjectorSpec(3, 4), q, seed)
    perm = np.random.default_rng(seed).permutation(q)
    shuffled = ProjectorEnsemble(e.spec, [e.members[i] for i in perm])
    assert sorted(projector_diversity(shuffled)) == pytest.approx(sorted(projector_diversity(e)), abs=1e-14)
    assert all(v > 0 for v in projector_diversity(e))


def records():
    return [
        MetricsRecord(1, 2.25, 0.5, 0.125, 0.3, [1.5, 2.5], 0.4, 0.35, 0.01),
        MetricsRecord(2, 1.0, 0.25, float("nan"), 0.2, [], 0.6, 0.55, 0.02),
    ]


class TestSerialization:
    def test_header(self):
        assert to_csv(records()).splitlines()[0] == ",".join(CSV_FIELDS)
        assert CSV_FIELDS == ("epoch", "lce", "lmda", "mda", "mbc", "diversity_min", "diversity_max",
                              "train_acc", "test_acc", "secs")

    def test_csv_round_trip(self):
        rows = read_csv(to_csv(records()))
        assert rows[0]["diversity_min"] == 1.5 and rows[0]["diversity_max"] == 2.5
        assert rows[0]["epoch"] == 1 and rows[1]["lce"] == 1.0
        assert math.isnan(rows[1]["mda"]) and math.isnan(rows[1]["diversity_min"])

    def test_floats_exact(self):
        rec = MetricsRecord(1, 0.1 + 0.2, 1 / 3, 0.0, 0.0)
        assert read_csv(to_csv([rec]))[0]["lce"] == 0.1 + 0.2

    def test_strip_secs(self):
        a, b = records(), records()
        b[0].secs, b[1].secs = 9.0, 8.0
        assert to_csv(a) != to_csv(b)
        assert strip_secs(to_csv(a)) == strip_secs(to_csv(b)) == to_csv(a, include_secs=False)

    def test_jsonl_same_fields(self):
        lines = to_jsonl(records()).splitlines()
        first, second = json.loads(lines[0]), json.loads(lines[1])
        assert tuple(first) == CSV_FIELDS
        assert second["mda"] is None and second["diversity_max"] is None
