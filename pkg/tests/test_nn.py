"""Neural stack: elementary ops, gradients, targets, persistence."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eocsearch import cases, nn
from eocsearch.env import EnvConfig, encode
from eocsearch.grid import TopologyState
from eocsearch.nn import (
    GuideBatch,
    ValueBatch,
    WeightFileError,
    adam_init,
    build_guide_params,
    build_value_params,
    d3qn_target,
    dueling_combine,
    gcn_forward,
    guide_forward,
    load_params,
    normalize_adjacency,
    save_params,
    select_eoc,
    train_step,
    value_forward,
)

from helpers import finite_difference_grads

# frozen from the first correct run: toy6, seed 2024, conv (8,8), dense (16,)
GUIDE_GOLDEN = [
    0.4093043910826679,
    0.47893003313395627,
    0.4919005422676292,
    0.43176561858496193,
    0.4194365147386061,
    0.5600522057627684,
    0.47752809368452775,
    0.7254062718210988,
]


def toy_observation():
    case = cases.toy6()
    obs = encode(case, TopologyState.all_in_service(case.m), case.relay(2, "from"), EnvConfig(k_max=2))
    return case, obs


class TestNormalizeAdjacency:
    def test_single_node(self):
        assert np.allclose(normalize_adjacency(np.zeros((1, 1))), [[1.0]])

    def test_two_connected_nodes(self):
        A = np.array([[0.0, 1.0], [1.0, 0.0]])
        assert np.allclose(normalize_adjacency(A), [[0.5, 0.5], [0.5, 0.5]])

    def test_matches_elementwise_formula(self):
        rng = np.random.default_rng(41)
        A = (rng.random((5, 5)) < 0.5).astype(float)
        A = np.triu(A, 1)
        A = A + A.T
        got = normalize_adjacency(A)
        atil = A + np.eye(5)
        deg = atil.sum(axis=1)
        expected = np.array([[atil[i, j] / np.sqrt(deg[i] * deg[j]) for j in range(5)] for i in range(5)])
        assert np.allclose(got, expected, atol=1e-14)
        assert np.allclose(got, got.T)


class TestGcnForward:
    def test_hand_example(self):
        H = np.array([[1.0], [2.0]])
        A_hat = np.array([[0.5, 0.5], [0.5, 0.5]])
        W = np.array([[2.0]])
        out = gcn_forward(H, A_hat, W, activation="relu")
        assert np.allclose(out, [[3.0], [3.0]])

    def test_identity_passthrough(self):
        H = np.arange(6.0).reshape(3, 2)
        out = gcn_forward(H, np.eye(3), np.eye(2), activation="linear")
        assert np.allclose(out, H)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            gcn_forward(np.ones((3, 2)), np.eye(3), np.ones((3, 4)))


class TestDuelingCombine:
    def test_hand_example(self):
        assert np.allclose(dueling_combine(1.0, np.array([1.0, 2.0, 3.0])), [0.0, 1.0, 2.0])

    @settings(max_examples=50, deadline=None, derandomize=True)
    @given(
        st.floats(-5, 5),
        st.lists(st.floats(-5, 5), min_size=1, max_size=8),
    )
    def test_constant_advantage_collapses_to_v(self, v, base):
        a = np.full(len(base), base[0])
        assert np.allclose(dueling_combine(v, a), v)

    @settings(max_examples=50, deadline=None, derandomize=True)
    @given(
        st.floats(-3, 3),
        st.lists(st.floats(-3, 3), min_size=2, max_size=8),
        st.floats(-10, 10),
    )
    def test_shift_invariance(self, v, a_list, c):
        a = np.asarray(a_list)
        assert np.allclose(dueling_combine(v, a), dueling_combine(v, a + c), atol=1e-9)


class TestGuideForward:
    def test_outputs_strictly_in_unit_interval(self):
        case, obs = toy_observation()
        rng = np.random.default_rng(1)
        params = build_guide_params(case.n, case.m, obs.features.shape[1], rng, conv_widths=(8,), dense_widths=(8,))
        out = guide_forward(obs, params)
        assert out.shape == (case.m,)
        assert np.all(out > 0.0)
        assert np.all(out < 1.0)

    def test_zero_weights_give_half(self):
        case, obs = toy_observation()
        rng = np.random.default_rng(1)
        params = build_guide_params(case.n, case.m, obs.features.shape[1], rng, conv_widths=(8,), dense_widths=(8,))
        for layer in params.all_layers():
            layer.W[:] = 0.0
            layer.b[:] = 0.0
        assert np.allclose(guide_forward(obs, params), 0.5)

    def test_golden_vector(self):
        case, obs = toy_observation()
        rng = np.random.default_rng(2024)
        params = build_guide_params(case.n, case.m, obs.features.shape[1], rng, conv_widths=(8, 8), dense_widths=(16,))
        out = guide_forward(obs, params)
        assert np.array_equal(out, np.array(GUIDE_GOLDEN))


class TestSelectEoc:
    def test_plain_topk(self):
        status = TopologyState.all_in_service(4)
        assert select_eoc(np.array([0.9, 0.6, 0.4, 0.2]), 2, protected_line=3, status=status) == [0, 1]

    def test_fewer_than_k_over_threshold(self):
        status = TopologyState.all_in_service(3)
        assert select_eoc(np.array([0.6, 0.3, 0.3]), 2, protected_line=2, status=status) == [0]

    def test_all_below_threshold(self):
        status = TopologyState.all_in_service(3)
        assert select_eoc(np.array([0.5, 0.2, 0.1]), 2, protected_line=2, status=status) == []

    def test_protected_and_out_lines_excluded(self):
        status = TopologyState(status=(1, 0, 1, 1))
        out = select_eoc(np.array([0.9, 0.95, 0.8, 0.7]), 3, protected_line=0, status=status)
        assert out == [2, 3]

    def test_tie_breaks_to_lower_id(self):
        status = TopologyState.all_in_service(4)
        out = select_eoc(np.array([0.7, 0.7, 0.7, 0.7]), 2, protected_line=3, status=status)
        assert out == [0, 1]


class TestValueForward:
    def test_zero_weights_give_zero_q(self):
        case, obs = toy_observation()
        rng = np.random.default_rng(1)
        params = build_value_params(case.n, case.m, obs.features.shape[1], rng, conv_widths=(8,), dense_widths=(8,))
        for layer in params.all_layers():
            layer.W[:] = 0.0
            layer.b[:] = 0.0
        assert np.allclose(value_forward(obs, params), 0.0)

    def test_advantage_bias_shift_leaves_q_unchanged(self):
        case, obs = toy_observation()
        rng = np.random.default_rng(2)
        params = build_value_params(case.n, case.m, obs.features.shape[1], rng, conv_widths=(8,), dense_widths=(8,))
        before = value_forward(obs, params)
        params.a_branch[-1].b += 3.7
        after = value_forward(obs, params)
        assert np.allclose(before, after, atol=1e-12)


class TestD3qnTarget:
    def test_nonterminal_blend(self):
        target = d3qn_target(
            q_pred_sa=1.0, r=0.5, done=False,
            q_pred_next=np.array([0.2, 0.7]), q_tgt_next=np.array([0.3, 0.4]),
            alpha=0.9, gamma=1.0,
        )
        assert target == pytest.approx(0.91, abs=1e-15)

    def test_terminal_blend(self):
        target = d3qn_target(
            q_pred_sa=1.0, r=0.5, done=True,
            q_pred_next=np.array([0.2, 0.7]), q_tgt_next=np.array([0.3, 0.4]),
            alpha=0.9, gamma=1.0,
        )
        assert target == pytest.approx(0.55, abs=1e-15)

    @settings(max_examples=60, deadline=None, derandomize=True)
    @given(
        st.floats(-2, 2),
        st.floats(-2, 2),
        st.lists(st.floats(-2, 2), min_size=1, max_size=6),
    )
    def test_alpha_one_is_plain_double_dqn(self, q_sa, r, q_next):
        q_next = np.asarray(q_next)
        q_tgt = q_next[::-1].copy()
        target = d3qn_target(q_sa, r, False, q_next, q_tgt, alpha=1.0, gamma=1.0)
        assert target == pytest.approx(r + q_tgt[int(np.argmax(q_next))], abs=1e-12)

    def test_valid_mask_restricts_argmax(self):
        target = d3qn_target(
            q_pred_sa=0.0, r=0.0, done=False,
            q_pred_next=np.array([5.0, 1.0]), q_tgt_next=np.array([7.0, 2.0]),
            alpha=1.0, gamma=1.0, valid_mask=np.array([False, True]),
        )
        assert target == pytest.approx(2.0)


class TestTrainStep:
    def _guide_setup(self, seed=5, batch_size=3):
        case, obs = toy_observation()
        rng = np.random.default_rng(seed)
        params = build_guide_params(case.n, case.m, obs.features.shape[1], rng, conv_widths=(6, 6), dense_widths=(10,))
        feats = np.stack([obs.features + 0.01 * rng.standard_normal(obs.features.shape) for _ in range(batch_size)])
        adjs = np.stack([obs.adjacency] * batch_size)
        labels = (rng.random((batch_size, case.m)) < 0.4).astype(float)
        return params, GuideBatch(features=feats, adjacency=adjs, labels=labels)

    def _value_setup(self, seed=6, batch_size=3, dueling=True):
        case, obs = toy_observation()
        rng = np.random.default_rng(seed)
        params = build_value_params(
            case.n, case.m, obs.features.shape[1], rng,
            conv_widths=(6, 6), dense_widths=(10, 8), dueling=dueling,
        )
        feats = np.stack([obs.features + 0.01 * rng.standard_normal(obs.features.shape) for _ in range(batch_size)])
        adjs = np.stack([obs.adjacency] * batch_size)
        actions = rng.integers(0, case.m, size=batch_size)
        targets = rng.standard_normal(batch_size)
        return params, ValueBatch(features=feats, adjacency=adjs, actions=actions, targets=targets)

    def test_zero_error_batch_keeps_params(self):
        params, batch = self._value_setup()
        fwd = nn._forward_batch(params, batch.features, batch.adjacency)
        batch.targets = fwd.output[np.arange(len(batch.actions)), batch.actions].copy()
        before = [a.copy() for a in params.arrays()]
        opt = adam_init(params, 1e-3)
        _, loss = train_step(params, opt, batch, "mse")
        assert loss == pytest.approx(0.0, abs=1e-24)
        for prev, now in zip(before, params.arrays()):
            assert np.allclose(prev, now, atol=1e-12)

    @pytest.mark.parametrize("loss_kind,dueling", [("bce", None), ("mse", True), ("mse", False)])
    def test_finite_difference_gradients(self, loss_kind, dueling):
        # rel. error < 1e-4 on 20 random parameters, central differences h=1e-5
        if loss_kind == "bce":
            params, batch = self._guide_setup()
        else:
            params, batch = self._value_setup(dueling=dueling)
        arrays = params.arrays()

        def loss_fn():
            fwd = nn._forward_batch(params, batch.features, batch.adjacency)
            if loss_kind == "bce":
                logits = fwd.dense_caches[-1][3]
                return float(np.mean(np.logaddexp(0.0, logits) - batch.labels * logits))
            rows = np.arange(len(batch.actions))
            err = fwd.output[rows, batch.actions] - batch.targets
            return float(np.mean(err * err))

        fwd = nn._forward_batch(params, batch.features, batch.adjacency)
        if loss_kind == "bce":
            logits = fwd.dense_caches[-1][3]
            _, dlogits = nn._bce_from_logits(logits, batch.labels)
            grads = nn._backward(params, fwd, dlogits, skip_last_act=True)
        else:
            rows = np.arange(len(batch.actions))
            err = fwd.output[rows, batch.actions] - batch.targets
            dq = np.zeros_like(fwd.output)
            dq[rows, batch.actions] = 2.0 * err / len(rows)
            grads = nn._backward(params, fwd, dq)

        analytic = []
        for layer in params.all_layers():
            gW, gb = grads[id(layer)]
            analytic.extend((gW, gb))

        rng = np.random.default_rng(99)
        picks = []
        while len(picks) < 20:
            ai = int(rng.integers(0, len(arrays)))
            fi = int(rng.integers(0, arrays[ai].size))
            picks.append((ai, fi))
        fd = finite_difference_grads(loss_fn, arrays, picks, h=1e-5)
        for (ai, fi), fd_grad in zip(picks, fd):
            an_grad = analytic[ai].flat[fi]
            denom = max(abs(fd_grad), abs(an_grad), 1e-8)
            assert abs(fd_grad - an_grad) / denom < 1e-4

    def test_overfit_tiny_batch(self):
        params, batch = self._value_setup(seed=12, batch_size=2)
        opt = adam_init(params, 3e-3)
        loss = None
        for _ in range(2000):
            _, loss = train_step(params, opt, batch, "mse")
            if loss < 1e-6:
                break
        assert loss < 1e-6

    def test_empty_batch_rejected(self):
        params, batch = self._value_setup()
        batch.actions = np.zeros((0,), dtype=int)
        batch.targets = np.zeros((0,))
        batch.features = batch.features[:0]
        batch.adjacency = batch.adjacency[:0]
        opt = adam_init(params, 1e-3)
        with pytest.raises(ValueError, match="non-empty"):
            train_step(params, opt, batch, "mse")

    def test_nonfinite_loss_raises(self):
        params, batch = self._value_setup()
        batch.targets = np.array([np.nan] * len(batch.targets))
        opt = adam_init(params, 1e-3)
        with pytest.raises(FloatingPointError, match="non-finite"):
            train_step(params, opt, batch, "mse")


class TestPersistence:
    def test_round_trip_bit_exact(self, tmp_path):
        case, obs = toy_observation()
        rng = np.random.default_rng(77)
        params = build_value_params(case.n, case.m, obs.features.shape[1], rng, conv_widths=(8,), dense_widths=(8, 4))
        path = tmp_path / "w.json"
        save_params(params, path)
        loaded = load_params(path)
        assert loaded.head == params.head
        for a, b in zip(params.arrays(), loaded.arrays()):
            assert np.array_equal(a, b)

    def test_truncated_file(self, tmp_path):
        case, obs = toy_observation()
        rng = np.random.default_rng(78)
        params = build_guide_params(case.n, case.m, obs.features.shape[1], rng, conv_widths=(4,), dense_widths=(4,))
        path = tmp_path / "w.json"
        save_params(params, path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(WeightFileError, match="corrupt|truncated"):
            load_params(path)

    def test_dimension_mismatch(self, tmp_path):
        case, obs = toy_observation()
        rng = np.random.default_rng(79)
        params = build_guide_params(case.n, case.m, obs.features.shape[1], rng, conv_widths=(4,), dense_widths=(4,))
        path = tmp_path / "w.json"
        save_params(params, path)
        with pytest.raises(WeightFileError, match="m=8 lines, case has m=169"):
            load_params(path, expect_m=169)
        with pytest.raises(WeightFileError, match="n=6 buses, case has n=118"):
            load_params(path, expect_n=118)

    def test_version_mismatch(self, tmp_path):
        import json

        case, obs = toy_observation()
        rng = np.random.default_rng(80)
        params = build_guide_params(case.n, case.m, obs.features.shape[1], rng, conv_widths=(4,), dense_widths=(4,))
        path = tmp_path / "w.json"
        save_params(params, path)
        doc = json.loads(path.read_text())
        doc["format_version"] = 99
        path.write_text(json.dumps(doc))
        with pytest.raises(WeightFileError, match="format 99"):
            load_params(path)
