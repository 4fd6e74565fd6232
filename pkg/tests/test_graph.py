import json

import numpy as np
import pytest

from conftest import keys_for
from heinfer.ckks import Packing, encode_scalar
from heinfer.graph import (
    CipherTensor,
    Decision,
    ExecutionError,
    Executor,
    InfeasibleDepthError,
    JitWeightEncoder,
    LocalNonlinearity,
    ModelError,
    Node,
    NonlinearityError,
    PrecompiledWeightEncoder,
    apply_cleartext,
    build_model,
    constant_chain,
    cryptonets,
    cryptonets_mini,
    cryptonets_relu,
    decrypt_tensor,
    encrypt_tensor,
    execute,
    forward,
    identity_model,
    load_model,
    plan_rescaling,
    refresh,
    relu_mlp,
    synthetic_digits,
)
from heinfer.ckks.keys import Sampler


def dot_chain(k: int):
    """Dot with inner dimension k, then a constant multiply so the Dot must rescale."""
    weights = {"w": np.linspace(-1, 1, k, dtype=np.float32).reshape(k, 1), "c": np.float32([0.5])}
    nodes = [
        Node("x", "Input", attrs={"shape": [k]}),
        Node("dot", "Dot", ("x",), weight_ref="w"),
        Node("c", "Constant", weight_ref="c"),
        Node("m", "Multiply", ("dot", "c")),
        Node("y", "Output", ("m",)),
    ]
    return build_model(nodes, weights, f"dot{k}")


class TestModel:
    def test_cryptonets_shapes(self):
        m = cryptonets()
        assert m.shapes["conv"] == (5, 13, 13)
        assert m.shapes["fc1"] == (100,)
        assert m.output_shape == (10,)

    def test_manifest_round_trip(self):
        m = cryptonets_relu(seed=3)
        manifest, blob = m.to_manifest()
        back = load_model(json.dumps(manifest), blob)
        assert [n.to_json() for n in back.nodes] == [n.to_json() for n in m.nodes]
        for k in m.weights:
            assert np.array_equal(back.weights[k], m.weights[k])

    def test_blob_size_must_match(self):
        manifest, blob = relu_mlp().to_manifest()
        with pytest.raises(ModelError):
            load_model(manifest, blob + b"\0\0\0\0")
        with pytest.raises(ModelError):
            load_model(manifest, blob[:-4])

    def test_empty_and_unknown(self):
        with pytest.raises(ModelError):
            load_model({"nodes": []}, b"")
        with pytest.raises(ModelError):
            load_model({"nodes": [{"id": "a", "op": "Softmax"}]}, b"")
        with pytest.raises(ModelError):
            load_model("{not json", b"")

    def test_cycle_rejected(self):
        nodes = [Node("a", "Relu", ("b",)), Node("b", "Relu", ("a",))]
        with pytest.raises(ModelError):
            build_model(nodes, {})

    def test_topological_order_independent_of_listing(self):
        m = relu_mlp()
        shuffled = list(reversed(m.nodes))
        m2 = build_model(shuffled, m.weights, "r")
        assert [n.id for n in m2.nodes] == [n.id for n in m.nodes]

    def test_shape_errors(self):
        w = {"w": np.zeros((3, 2), np.float32)}
        nodes = [Node("x", "Input", attrs={"shape": [4]}), Node("d", "Dot", ("x",), weight_ref="w")]
        with pytest.raises(ModelError):
            build_model(nodes, w)
        with pytest.raises(ModelError):
            build_model([Node("x", "Input", attrs={"shape": [4]}), Node("r", "Reshape", ("x",), {"shape": [3]})], {})

    def test_complex_with_square_rejected(self):
        m = cryptonets()
        with pytest.raises(ModelError):
            m.check_packing("complex")
        cryptonets_relu().check_packing("complex")


class TestPlanner:
    @pytest.mark.parametrize("name,depth", [("P13", 5), ("P14", 7)])
    def test_constant_chain_counts(self, name, depth):
        params, _, _ = keys_for(name)
        L = params.max_level
        model = constant_chain(depth)
        lazy = plan_rescaling(model, params, "lazy")
        naive = plan_rescaling(model, params, "naive", strict=False)
        ids = ("constant", "multiply", "add")
        assert tuple(naive.nodes[i].cumulative for i in ids) == (L - 1, L, L)
        assert tuple(lazy.nodes[i].cumulative for i in ids) == (L - 1, L - 1, L - 1)
        assert lazy.feasible and not naive.feasible

    def test_naive_strict_raises(self):
        params, _, _ = keys_for("P13")
        with pytest.raises(InfeasibleDepthError):
            plan_rescaling(constant_chain(5), params, "naive")

    @pytest.mark.parametrize("k", [1, 4, 9])
    def test_dot_counts(self, k):
        params, _, _ = keys_for("P13")
        m = dot_chain(k)
        assert plan_rescaling(m, params, "naive").nodes["dot"].rescale_ops == k
        assert plan_rescaling(m, params, "lazy").nodes["dot"].rescale_ops == 1

    def test_lazy_skips_terminal_rescale(self):
        params, _, _ = keys_for("P13")
        plan = plan_rescaling(cryptonets(), params, "lazy")
        assert plan.decision("fc2") is Decision.SKIP
        assert plan.decision("conv") is Decision.RESCALE_AFTER

    def test_p11_relu_network_never_rescales(self):
        params, _, _ = keys_for("P11")
        plan = plan_rescaling(cryptonets_relu(), params, "lazy")
        assert plan.total_rescales == 0

    def test_too_deep(self):
        params, _, _ = keys_for("P12")
        with pytest.raises(InfeasibleDepthError):
            plan_rescaling(constant_chain(6), params, "lazy")

    def test_bad_mode(self):
        params, _, _ = keys_for("P12")
        with pytest.raises(ValueError):
            plan_rescaling(relu_mlp(), params, "eager")


class TestNonlinear:
    def test_cleartext_relu_and_pool(self):
        v = np.array([[-1.0, 2.0], [3.0, -4.0]])
        out, shape = apply_cleartext("Relu", v, (2,), {})
        assert np.array_equal(out, [[0, 2], [3, 0]]) and shape == (2,)
        x = np.arange(16.0).reshape(16, 1)
        out, shape = apply_cleartext("MaxPool", x, (1, 4, 4), {"window": [2, 2], "stride": [2, 2]})
        assert shape == (1, 2, 2)
        assert out.ravel().tolist() == [5, 7, 13, 15]

    def test_unknown_kind(self):
        with pytest.raises(NonlinearityError):
            apply_cleartext("Tanh", np.zeros((1, 1)), (1,), {})

    def test_refresh_resets_level(self):
        params, sk, rk = keys_for("P13")
        x = encrypt_tensor(params, np.array([[-1.0], [2.0]]), sk, 1)
        low = x.replace(data=x.data[:, :, :1].copy(), moduli=x.moduli[:1])
        out = refresh(params, sk, Sampler(2, "nonlinear"), "Relu", low, {})
        assert out.level == params.max_level and out.scale == params.default_scale
        assert np.abs(decrypt_tensor(out, sk, 2).ravel() - [0.0, 2.0]).max() < 1e-6


class TestExecutor:
    def test_identity(self):
        params, sk, rk = keys_for("P13")
        batch = np.random.default_rng(0).uniform(-5, 5, (32, 4))
        x = encrypt_tensor(params, batch, sk, 1)
        m = identity_model((4,))
        out = execute(m, x, plan_rescaling(m, params), params)
        assert np.abs(decrypt_tensor(out.output, sk, 32) - batch).max() < 1e-6

    @pytest.mark.parametrize("mode", ["lazy", "naive"])
    def test_mini_cryptonets_matches_reference(self, mode):
        params, sk, rk = keys_for("P13")
        m = cryptonets_mini(seed=1)
        batch, _ = synthetic_digits(8, seed=2, size=8)
        x = encrypt_tensor(params, batch, sk, 3)
        res = execute(m, x, plan_rescaling(m, params, mode), params, relin_key=rk)
        assert np.abs(decrypt_tensor(res.output, sk, 8) - forward(m, batch)).max() < 1e-3

    def test_lazy_and_naive_agree_on_rescale_totals(self):
        params, sk, rk = keys_for("P13")
        m = dot_chain(4)
        x = encrypt_tensor(params, np.ones((2, 4)), sk, 3)
        for mode, expected in (("lazy", 1), ("naive", 5)):
            plan = plan_rescaling(m, params, mode)
            res = execute(m, x, plan, params)
            assert res.rescales["dot"] == plan.nodes["dot"].rescale_ops
            assert res.total_rescales == expected

    def test_relu_needs_provider(self):
        params, sk, _ = keys_for("P11")
        m = relu_mlp()
        x = encrypt_tensor(params, np.zeros((1, 6)), sk, 1)
        with pytest.raises(ExecutionError):
            execute(m, x, plan_rescaling(m, params), params)

    def test_square_needs_relin_key(self):
        params, sk, _ = keys_for("P13")
        m = cryptonets_mini()
        x = encrypt_tensor(params, np.zeros((1, 1, 8, 8)), sk, 1)
        with pytest.raises(Exception):
            execute(m, x, plan_rescaling(m, params), params)

    def test_shape_mismatch(self):
        params, sk, _ = keys_for("P13")
        m = identity_model((4,))
        x = encrypt_tensor(params, np.zeros((1, 3)), sk, 1)
        with pytest.raises(ModelError):
            execute(m, x, plan_rescaling(m, params), params)

    def test_threads_do_not_change_result(self):
        params, sk, rk = keys_for("P13")
        m = cryptonets_mini(seed=4)
        batch, _ = synthetic_digits(4, seed=5, size=8)
        x = encrypt_tensor(params, batch, sk, 3)
        plan = plan_rescaling(m, params)
        a = execute(m, x, plan, params, relin_key=rk, threads=1).output
        b = execute(m, x, plan, params, relin_key=rk, threads=3).output
        assert np.array_equal(a.data, b.data)

    def test_precompiled_encoder_matches_jit(self):
        params, sk, rk = keys_for("P13")
        m = cryptonets_mini(seed=4)
        batch, _ = synthetic_digits(4, seed=5, size=8)
        x = encrypt_tensor(params, batch, sk, 3)
        plan = plan_rescaling(m, params)
        pre = PrecompiledWeightEncoder(m, plan, params)
        a = execute(m, x, plan, params, relin_key=rk).output
        b = execute(m, x, plan, params, relin_key=rk, encoder=pre).output
        assert np.array_equal(a.data, b.data)
        assert pre.memory_words > 0

    def test_jit_encoder_caches(self):
        params = keys_for("P13")[0]
        enc = JitWeightEncoder()
        moduli = params.moduli(3)
        a = enc.encode(0.5, moduli, params.default_scale)
        assert enc.encode(0.5, moduli, params.default_scale) is a
        assert np.array_equal(a.residues, encode_scalar(params, 0.5, level=3).residues)

    def test_complex_relu_network(self):
        params, sk, _ = keys_for("P11")
        m = relu_mlp(seed=2)
        batch = np.random.default_rng(1).normal(size=(params.poly_degree, 6))
        x = encrypt_tensor(params, batch, sk, 1, "complex")
        assert x.packing is Packing.COMPLEX
        res = execute(m, x, plan_rescaling(m, params), params, LocalNonlinearity(params, sk, 4))
        out = decrypt_tensor(res.output, sk, batch.shape[0])
        assert np.abs(out - forward(m, batch)).max() < 1e-2

    def test_tensor_reshape_is_view(self):
        params, sk, _ = keys_for("P12")
        x = encrypt_tensor(params, np.zeros((1, 2, 3)), sk, 1)
        y = x.reshape((6,))
        assert y.data is x.data and y.shape == (6,)
        with pytest.raises(ValueError):
            CipherTensor(x.data, (5,), x.moduli, x.scale)
