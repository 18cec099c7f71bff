import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dforge import nets
from dforge.errors import DimensionError, FormatError, SpecError
from dforge.nets import ConvStem, NetworkSpec
from dforge.tensor import Tensor


def small_spec(**kw):
    base = dict(input_dim=6, hidden=(16, 8), feature_dim=8, classes=3)
    base.update(kw)
    return NetworkSpec(**base)


class TestSpec:
    def test_last_hidden_must_equal_feature_dim(self):
        small_spec()
        with pytest.raises(SpecError, match="feature_dim"):
            small_spec(feature_dim=7)

    @pytest.mark.parametrize("hidden", [(), (16, 0), (0,)])
    def test_zero_width_layers_rejected(self, hidden):
        with pytest.raises(SpecError):
            NetworkSpec(6, hidden, hidden[-1] if hidden else 8, 3)

    def test_bad_activation(self):
        with pytest.raises(SpecError):
            small_spec(activation="tanh")

    def test_dict_round_trip(self):
        spec = NetworkSpec(16, (8,), 8, 3, conv=ConvStem((1, 4, 4), (2,), (3,), 1))
        assert NetworkSpec.from_dict(spec.to_dict()) == spec

    def test_conv_image_must_flatten_to_input(self):
        with pytest.raises(SpecError):
            NetworkSpec(15, (8,), 8, 3, conv=ConvStem((1, 4, 4)))


class TestBuild:
    def test_same_seed_bit_identical(self):
        a, b = nets.build(small_spec(), 7), nets.build(small_spec(), 7)
        for pa, pb in zip(a.params, b.params):
            assert pa.data.tobytes() == pb.data.tobytes()

    def test_different_seed_differs(self):
        a, b = nets.build(small_spec(), 7), nets.build(small_spec(), 8)
        assert not np.array_equal(a.params[0].data, b.params[0].data)

    def test_fan_in_bound(self):
        net = nets.build(NetworkSpec(100, (50,), 50, 2), 0)
        w = net.params[0].data
        assert w.shape == (50, 100)
        assert np.abs(w).max() <= 0.1
        # uniform on [-0.1, 0.1] should come close to the edges with 5000 draws
        assert np.abs(w).max() > 0.099

    def test_pooled_teacher_shapes(self):
        net = nets.build(NetworkSpec(6, (16, 8), 8, 3, pool=4), 0)
        assert [p.shape for p in net.params] == [(16, 6), (16, 1), (32, 16), (32, 1), (3, 8), (3, 1)]

    def test_wrong_param_shapes(self):
        net = nets.build(small_spec(), 0)
        with pytest.raises(DimensionError):
            nets.Network(small_spec(), net.params[:-1])


class TestForward:
    def test_shapes(self, rng):
        net = nets.build(small_spec(), 0)
        f, z = nets.forward(net, rng.normal(size=(6, 5)))
        assert f.shape == (8, 5) and z.shape == (3, 5)

    def test_input_mismatch(self, rng):
        with pytest.raises(DimensionError):
            nets.forward(nets.build(small_spec(), 0), rng.normal(size=(5, 4)))

    def test_zero_classifier_gives_bias(self, rng):
        net = nets.build(small_spec(), 0)
        net.params[-2].data[:] = 0.0
        _, z = nets.forward(net, rng.normal(size=(6, 4)))
        np.testing.assert_array_equal(z.data, np.repeat(net.params[-1].data, 4, axis=1))

    def test_batch_independence(self, rng):
        net = nets.build(small_spec(), 0)
        x = rng.normal(size=(6, 32))
        f1, z1 = nets.forward(net, x[:, :1])
        f32, z32 = nets.forward(net, x)
        np.testing.assert_allclose(f1.data[:, 0], f32.data[:, 0], rtol=0, atol=1e-14)
        np.testing.assert_allclose(z1.data[:, 0], z32.data[:, 0], rtol=0, atol=1e-14)

    def test_relu_features_nonnegative(self, rng):
        net = nets.build(small_spec(pool=2), 3)
        f, _ = nets.forward(net, rng.normal(size=(6, 50)) * 5)
        assert (f.data >= 0).all()

    def test_teacher_features_are_group_means(self, rng):
        spec = NetworkSpec(6, (8,), 8, 3, pool=4)
        net = nets.build(spec, 1)
        x = rng.normal(size=(6, 3))
        w, b = net.params[0].data, net.params[1].data
        hidden = np.maximum(w @ x + b, 0)
        expected = hidden.reshape(8, 4, 3).mean(axis=1)
        f, _ = nets.forward(net, x)
        np.testing.assert_allclose(f.data, expected, rtol=0, atol=1e-14)

    def test_conv_stem_forward(self, rng):
        spec = NetworkSpec(2 * 6 * 6, (10,), 10, 4, conv=ConvStem((2, 6, 6), (3, 2), (3, 2), 1))
        net = nets.build(spec, 0)
        f, z = nets.forward(net, rng.normal(size=(72, 5)))
        assert f.shape == (10, 5) and z.shape == (4, 5)
        assert spec.conv.out_dim == 2 * 3 * 3

    def test_gradients_reach_every_parameter(self, rng):
        net = nets.build(NetworkSpec(16, (6,), 6, 3, conv=ConvStem((1, 4, 4), (2,), (3,), 2)), 0)
        _, z = nets.forward(net, rng.normal(size=(16, 4)))
        z.sum().backward()
        assert all(p.grad is not None and p.grad.shape == p.shape for p in net.params)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), b=st.integers(1, 12), pool=st.sampled_from([1, 2, 4]))
def test_column_permutation_equivariance(seed, b, pool):
    rng = np.random.default_rng(seed)
    net = nets.build(NetworkSpec(5, (7, 6), 6, 4, pool=pool), seed)
    x = rng.normal(size=(5, b))
    perm = rng.permutation(b)
    f, z = nets.forward(net, x)
    fp, zp = nets.forward(net, x[:, perm])
    np.testing.assert_allclose(fp.data, f.data[:, perm], rtol=0, atol=1e-13)
    np.testing.assert_allclose(zp.data, z.data[:, perm], rtol=0, atol=1e-13)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), act=st.sampled_from(["relu", "gelu"]))
def test_logits_are_classifier_of_features(seed, act):
    rng = np.random.default_rng(seed)
    net = nets.build(NetworkSpec(5, (9,), 9, 4, activation=act), seed)
    f, z = nets.forward(net, rng.normal(size=(5, 7)))
    wc, bc = net.params[-2].data, net.params[-1].data
    assert np.array_equal(z.data, wc @ f.data + bc)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        net = nets.build(NetworkSpec(16, (6,), 6, 3, pool=2, conv=ConvStem((1, 4, 4), (2,), (3,), 1)), 5)
        path = tmp_path / "net.dfnt"
        nets.save(net, path)
        back = nets.load(path)
        assert back.spec == net.spec
        for a, b in zip(net.params, back.params):
            assert a.data.tobytes() == b.data.tobytes()
        assert nets.to_bytes(back) == path.read_bytes()

    def test_magic(self):
        buf = nets.to_bytes(nets.build(small_spec(), 0))
        assert buf.startswith(b"DFNT1")

    def test_truncated(self):
        buf = nets.to_bytes(nets.build(small_spec(), 0))
        with pytest.raises(FormatError):
            nets.from_bytes(buf[:-3])

    def test_projector_magic_rejected(self):
        buf = b"DFPJ1" + nets.to_bytes(nets.build(small_spec(), 0))[5:]
        with pytest.raises(FormatError, match="magic"):
            nets.from_bytes(buf)

    def test_spec_param_mismatch(self):
        from dforge import serialization
        net = nets.build(small_spec(), 0)
        buf = serialization.encode(b"DFNT1", {"kind": "network", "spec": net.spec.to_dict()}, net.arrays()[:-1])
        with pytest.raises(FormatError):
            nets.from_bytes(buf)
