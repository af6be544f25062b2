import numpy as np
import pytest

from diffsub.datagen import (
    QUALITATIVE_BOUNDARY,
    Dataset,
    WorldModel,
    gen_dataset,
    gen_random_instance,
    gen_world,
    load_dataset,
    qualitative_decision_gap,
    qualitative_instance,
    save_dataset,
)
from diffsub.setfn import eval_f, eval_g, mask_to_subset


class TestRandomInstance:
    def test_seed_determinism(self):
        a = gen_random_instance(10, 4, 1.0, seed=42)
        b = gen_random_instance(10, 4, 1.0, seed=42)
        assert np.array_equal(a.coverage.weights, b.coverage.weights)
        assert a.coverage.covers == b.coverage.covers

    def test_normalized_and_monotone(self):
        inst = gen_random_instance(8, 3, 1.0, seed=1)
        masks = np.arange(1 << 8)
        vals = inst.coverage.values_on_masks(masks)
        assert vals[0] == 0.0
        for i in range(8):
            base = masks[(masks & (1 << i)) == 0]
            assert np.all(vals[base | (1 << i)] >= vals[base] - 1e-12)

    def test_uncovering_element_has_zero_marginal(self):
        # seed chosen so that one element covers no points
        inst = gen_random_instance(4, 2, 1.0, seed=15)
        empty = [e for e, c in enumerate(inst.coverage.covers) if not c]
        assert empty, "seed no longer produces an uncovering element"
        e = empty[0]
        for mask in range(1 << 4):
            if mask & (1 << e):
                continue
            s = mask_to_subset(mask)
            assert eval_f(inst, s | {e}) == eval_f(inst, s)

    def test_shape_of_coverage(self):
        inst = gen_random_instance(7, 2, 1.0, seed=3)
        assert inst.coverage.num_points == 21
        assert np.all(inst.coverage.weights >= 0) and np.all(inst.coverage.weights <= 1)


class TestQualitativeInstance:
    def test_full_set_value(self):
        assert eval_f(qualitative_instance(), {0, 1, 2}) == 41.0

    def test_normalized(self):
        assert eval_f(qualitative_instance(), set()) == 0.0

    def test_decision_gap_identity(self):
        # g({s2,s3}) - g({s1,s3}) == 1 - (w2 - w1) for any costs
        inst = qualitative_instance()
        rng = np.random.default_rng(0)
        for _ in range(50):
            w = rng.uniform(0, 5, 3)
            gap = eval_g(inst, w, {1, 2}) - eval_g(inst, w, {0, 2})
            assert gap == pytest.approx(qualitative_decision_gap(w), abs=1e-12)


class TestWorlds:
    def test_qualitative_crossing_at_boundary(self):
        world = gen_world("qualitative-linear")
        w = world.costs(np.array([QUALITATIVE_BOUNDARY]))
        assert w[1] - w[0] == pytest.approx(1.0, abs=1e-12)
        assert w[2] == 1.0

    def test_qualitative_positive_at_origin(self):
        w = gen_world("qualitative-linear").costs(np.array([0.0]))
        assert np.all(w > 0)

    def test_qualitative_side_convention(self):
        # below the boundary the cheap-s2 set is the better choice
        world = gen_world("qualitative-linear")
        lo = world.costs(np.array([1.0]))
        hi = world.costs(np.array([9.0]))
        assert qualitative_decision_gap(lo) > 0
        assert qualitative_decision_gap(hi) < 0

    def test_nonlinear_world_positive_outputs(self):
        world = gen_world("random-nonlinear", context_dim=6, n=15, seed=5)
        rng = np.random.default_rng(5)
        for _ in range(10_000):
            w = world.costs(rng.uniform(-1, 1, 6))
            assert np.all(w > 0)

    def test_world_descriptor_roundtrip(self):
        world = gen_world("random-nonlinear", context_dim=4, n=6, seed=9)
        back = WorldModel.from_descriptor(world.descriptor())
        z = np.random.default_rng(9).uniform(-1, 1, 4)
        assert back.costs(z) == pytest.approx(world.costs(z), abs=1e-15)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            gen_world("linear-chaos")


class TestDatasets:
    def test_noise_free_on_curve(self):
        world = gen_world("qualitative-linear", noise_std=0.0)
        ds = gen_dataset(world, 10, seed=0)
        for z, w in ds.entries:
            assert w == pytest.approx(world.costs(z), abs=1e-15)

    def test_split_sizes_and_disjoint(self):
        world = gen_world("random-nonlinear", context_dim=3, n=5, seed=1)
        ds = gen_dataset(world, 25, seed=1)
        assert len(ds.train_idx) == 20 and len(ds.test_idx) == 5
        assert not set(ds.train_idx) & set(ds.test_idx)

    def test_costs_strictly_positive(self):
        world = gen_world("random-nonlinear", context_dim=3, n=5, seed=2, noise_std=1.0)
        ds = gen_dataset(world, 100, seed=2)
        for _, w in ds.entries:
            assert np.all(w > 0)

    def test_contexts_in_box(self):
        world = gen_world("qualitative-linear")
        ds = gen_dataset(world, 50, seed=3)
        for z, _ in ds.entries:
            assert 0.0 <= z[0] <= 10.0

    def test_serialization_bit_exact(self, tmp_path):
        world = gen_world("random-nonlinear", context_dim=4, n=6, seed=4)
        ds = gen_dataset(world, 30, seed=4)
        path = tmp_path / "data.jsonl"
        save_dataset(ds, path)
        back = load_dataset(path)
        assert back.seed == ds.seed
        assert back.train_idx == ds.train_idx and back.test_idx == ds.test_idx
        for (z1, w1), (z2, w2) in zip(ds.entries, back.entries):
            assert np.array_equal(z1, z2) and np.array_equal(w1, w2)

    def test_same_seed_same_bytes(self, tmp_path):
        world = gen_world("qualitative-linear")
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        save_dataset(gen_dataset(world, 20, seed=7), p1)
        save_dataset(gen_dataset(world, 20, seed=7), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            gen_dataset(gen_world("qualitative-linear"), 0, seed=0)
