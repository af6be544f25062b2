import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diffsub.datagen import gen_random_instance, qualitative_instance
from diffsub.setfn import (
    CostVector,
    CoverageFunction,
    GroundSetInstance,
    TabularSubmodular,
    eval_c,
    eval_f,
    eval_g,
    eval_g_scaled,
    instance_from_json,
    instance_to_json,
    marginal_gain,
    mask_to_subset,
    subset_to_mask,
)

W = CostVector([2.0, 2.0, 1.0])


@pytest.fixture
def table_instance():
    return qualitative_instance()


def all_subsets(n):
    for mask in range(1 << n):
        yield mask_to_subset(mask)


class TestEvalF:
    def test_table_singleton(self, table_instance):
        assert eval_f(table_instance, {0}) == 16.0

    def test_empty_set_is_zero(self, table_instance):
        assert eval_f(table_instance, set()) == 0.0

    def test_coverage_by_hand(self):
        fn = CoverageFunction([3.0, 4.0], covers=[[0, 1]])
        assert eval_f(fn, {0}) == 7.0

    def test_index_out_of_range(self, table_instance):
        with pytest.raises(IndexError):
            eval_f(table_instance, {3})


class TestEvalC:
    def test_pair(self):
        assert eval_c(W, {1, 2}) == 3.0

    def test_empty(self):
        assert eval_c(W, set()) == 0.0

    def test_all_ones(self):
        assert eval_c(CostVector([1, 1, 1]), {0, 1, 2}) == 3.0

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            eval_c(W, {5})


class TestEvalG:
    def test_table_pair(self, table_instance):
        assert eval_g(table_instance, W, {1, 2}) == 35.0

    def test_empty(self, table_instance):
        assert eval_g(table_instance, W, set()) == 0.0

    def test_other_pair(self, table_instance):
        assert eval_g(table_instance, W, {0, 2}) == 34.0

    def test_matches_f_minus_lambda_c_everywhere(self, table_instance):
        for subset in all_subsets(3):
            expected = eval_f(table_instance, subset) - table_instance.lam * eval_c(
                W, subset
            )
            assert eval_g(table_instance, W, subset) == pytest.approx(expected)


class TestEvalGScaled:
    def test_singleton_s3(self, table_instance):
        assert eval_g_scaled(table_instance, W, {2}) == 23.0

    def test_empty(self, table_instance):
        assert eval_g_scaled(table_instance, W, set()) == 0.0

    def test_singleton_s1(self, table_instance):
        assert eval_g_scaled(table_instance, W, {0}) == 12.0


class TestMarginalGain:
    def test_add_s2_to_s3(self, table_instance):
        assert marginal_gain(table_instance, W, {2}, 1) == 9.0

    def test_from_empty_equals_value(self, table_instance):
        assert marginal_gain(table_instance, W, set(), 2) == 23.0

    def test_add_s1_to_s3(self, table_instance):
        assert marginal_gain(table_instance, W, {2}, 0) == 8.0

    def test_element_already_in_base(self, table_instance):
        with pytest.raises(ValueError):
            marginal_gain(table_instance, W, {2}, 2)

    def test_diminishing_in_base(self):
        # marginals of the scaled objective shrink as the base grows
        inst = gen_random_instance(8, 4, 1.0, seed=5)
        w = np.random.default_rng(5).uniform(0, 2, 8)
        for e in range(8):
            base = {i for i in (1, 2, 3) if i != e}
            assert marginal_gain(inst, w, base, e) <= marginal_gain(
                inst, w, set(), e
            ) + 1e-12


class TestCoverageInvariants:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000), st.integers(2, 8))
    def test_monotone_and_submodular(self, seed, n):
        inst = gen_random_instance(n, 2, 1.0, seed=seed)
        f = [eval_f(inst, mask_to_subset(m)) for m in range(1 << n)]
        assert f[0] == 0.0
        for a in range(1 << n):
            for i in range(n):
                if not a & (1 << i):
                    assert f[a | (1 << i)] >= f[a] - 1e-12
        # union/intersection form on random subset pairs
        rng = np.random.default_rng(seed)
        for _ in range(50):
            a, b = rng.integers(0, 1 << n, 2)
            assert f[a] + f[b] >= f[a | b] + f[a & b] - 1e-9


class TestTabularValidation:
    def test_qualitative_table_passes(self):
        qualitative_instance()

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            TabularSubmodular(2, {0b00: 1.0, 0b01: 2.0, 0b10: 2.0, 0b11: 3.0})

    def test_rejects_nonmonotone(self):
        with pytest.raises(ValueError, match="monotone"):
            TabularSubmodular(2, {0b01: 5.0, 0b10: 4.0, 0b11: 3.0})

    def test_rejects_supermodular(self):
        with pytest.raises(ValueError, match="submodular"):
            TabularSubmodular(2, {0b01: 1.0, 0b10: 1.0, 0b11: 5.0})


class TestTypeValidation:
    def test_cost_vector_rejects_negative(self):
        with pytest.raises(ValueError):
            CostVector([1.0, -0.5])

    def test_instance_rejects_bad_k(self):
        fn = CoverageFunction([1.0], covers=[[0], [0]])
        with pytest.raises(ValueError):
            GroundSetInstance(n=2, k=3, lam=1.0, coverage=fn)

    def test_instance_rejects_negative_lambda(self):
        fn = CoverageFunction([1.0], covers=[[0], [0]])
        with pytest.raises(ValueError):
            GroundSetInstance(n=2, k=1, lam=-0.1, coverage=fn)

    def test_subset_mask_roundtrip(self):
        assert mask_to_subset(subset_to_mask({0, 3, 5}, 8)) == {0, 3, 5}


class TestSerialization:
    def test_coverage_roundtrip(self):
        inst = gen_random_instance(6, 3, 0.7, seed=9)
        doc = instance_to_json(inst)
        back = instance_from_json(doc)
        assert back.n == inst.n and back.k == inst.k and back.lam == inst.lam
        for m in range(1 << 6):
            s = mask_to_subset(m)
            assert eval_f(back, s) == pytest.approx(eval_f(inst, s))

    def test_tabular_roundtrip(self):
        inst = qualitative_instance()
        back = instance_from_json(instance_to_json(inst))
        for m in range(8):
            s = mask_to_subset(m)
            assert eval_f(back, s) == eval_f(inst, s)

    def test_json_shape(self):
        doc = json.loads(instance_to_json(qualitative_instance()))
        assert set(doc) == {"n", "k", "lambda", "table"}
        assert doc["table"]["7"] == 41.0
