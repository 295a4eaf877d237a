import numpy as np
import pytest

from maskfed.config import OptimizerConfig, TrainConfig
from maskfed.datastore import SplitSpec, gen_synthetic, split_bank
from maskfed.errors import EmptyBatchError, InvalidInputError, TrainingDivergedError
from maskfed.fl_client import AdamW, ClientData, ClientState
from maskfed.numerics import stream


def make_client(
    client_id=0, seed=3, dim=8, classes=2, n=60, shift="none", **train_kwargs
) -> ClientState:
    banks, _ = gen_synthetic(1, dim, classes, n, shift, seed=seed)
    train, val, test = split_bank(banks[0], SplitSpec(seed=seed))
    cfg = TrainConfig(hidden_dim=16, **train_kwargs)
    return ClientState(client_id, ClientData(train, val, test), cfg, seed=seed)


class TestAdamW:
    def test_matches_scalar_reference_over_100_steps(self):
        cfg = OptimizerConfig()
        opt = AdamW(lr0=0.01, gamma=1.0, cfg=cfg)
        params = {"p.weight": np.array([1.0, -2.0])}
        ref = params["p.weight"].copy()
        m = np.zeros(2)
        v = np.zeros(2)
        rng = stream(0, "adamw-oracle")
        for t in range(1, 101):
            g = rng.standard_normal(2)
            opt.step(params, {"p.weight": g.copy()})
            # independent scalar-by-scalar reference of the decoupled update
            for i in range(2):
                m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * g[i]
                v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * g[i] ** 2
                mh = m[i] / (1 - cfg.beta1**t)
                vh = v[i] / (1 - cfg.beta2**t)
                ref[i] -= 0.01 * (mh / (np.sqrt(vh) + cfg.eps) + cfg.weight_decay * ref[i])
        np.testing.assert_allclose(params["p.weight"], ref, atol=1e-10)

    def test_no_decay_on_bias_or_threshold(self):
        cfg = OptimizerConfig(weight_decay=0.5)
        opt = AdamW(lr0=0.1, gamma=1.0, cfg=cfg)
        params = {"p.bias": np.array([4.0]), "p.threshold": np.array([4.0])}
        opt.step(params, {"p.bias": np.zeros(1), "p.threshold": np.zeros(1)})
        # zero gradient and no decay leave the value exactly in place
        assert params["p.bias"][0] == 4.0
        assert params["p.threshold"][0] == 4.0

    def test_lr_schedule_is_exact_power(self):
        opt = AdamW(lr0=5e-4, gamma=0.97, cfg=OptimizerConfig())
        for k in range(30):
            assert opt.lr == 5e-4 * 0.97**k
            opt.advance_epoch()


class TestLocalEpoch:
    def test_frozen_adapter_reduces_to_supervised_ce(self):
        client = make_client(lam=0.0, lr_adapter=0.0)
        before = {k: v.copy() for k, v in client.adapter.params().items()}
        losses = [client.local_epoch().classifier for _ in range(5)]
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))
        after = client.adapter.params()
        assert all(np.array_equal(before[k], after[k]) for k in before)

    def test_oversized_batch_is_a_single_batch(self):
        client = make_client()
        report = client.local_epoch(batch_size=10_000)
        assert report.batches == 1

    def test_same_seed_gives_bitwise_identical_reports(self):
        a = make_client(seed=11).local_epoch()
        b = make_client(seed=11).local_epoch()
        assert a == b

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_error_names_batch_and_client(self):
        client = make_client(client_id=7)
        client.classifier.output.bias += np.inf
        with pytest.raises(TrainingDivergedError, match=r"batch 0 on client 7"):
            client.local_epoch()

    def test_empty_bank_rejected(self):
        client = make_client()
        client.data.train = client.data.train.subset(np.array([], dtype=np.int64))
        with pytest.raises(EmptyBatchError):
            client.local_epoch()


class TestEvaluate:
    def test_both_heads_one_hot_give_perfect_accuracy_and_zero_ece(self):
        # hand-built geometry: one-hot features scaled so both heads saturate
        from maskfed.datastore import EmbeddingBank

        labels = np.array([0, 1, 2, 0, 1, 2])
        bank = EmbeddingBank(
            class_names=["a", "b", "c"],
            text_features=np.eye(3),
            features=100.0 * np.eye(3)[labels],
            labels=labels,
        )
        cfg = TrainConfig(hidden_dim=3, tau=0.01)
        client = ClientState(0, ClientData(bank, bank, bank), cfg, seed=0)
        client.adapter.layer2.weight = np.zeros((3, 3))
        client.adapter.layer2.bias = np.full(3, 40.0)  # gate saturates at 1.0
        client.classifier.hidden.weight = np.eye(3)
        client.classifier.hidden.bias = np.zeros(3)
        client.classifier.output.weight = np.eye(3)
        client.classifier.output.bias = np.zeros(3)
        result = client.evaluate("test")
        assert result.accuracy == 1.0
        assert result.adapter_accuracy == 1.0
        assert result.classifier_accuracy == 1.0
        assert result.ece == 0.0

    def test_adversarial_labels_give_zero_accuracy(self):
        client = make_client(seed=9, n=40)
        bank = client.data.test
        # move every label off the argmax prediction
        preds = client.evaluate("test").predictions
        bank.labels = (preds + 1) % bank.n_classes
        assert client.evaluate("test").accuracy == 0.0

    def test_accuracy_matches_per_sample_hand_count(self):
        client = make_client(seed=13, n=50)
        result = client.evaluate("val")
        bank = client.data.val
        hand = sum(
            1 for i in range(bank.n_samples) if result.predictions[i] == bank.labels[i]
        )
        assert result.accuracy == pytest.approx(hand / bank.n_samples)

    def test_unknown_split_rejected(self):
        with pytest.raises(InvalidInputError):
            make_client().evaluate("holdout")


class TestExchange:
    def test_round_trip_preserves_forward_bitwise(self):
        client = make_client(seed=21)
        x = stream(0, "exchange-x").standard_normal((5, client.data.train.dim))
        before, _ = client.adapter.apply(x)
        exported = client.export_adapter()
        client.import_adapter(exported)
        after, _ = client.adapter.apply(x)
        assert np.array_equal(before, after)

    def test_export_has_exactly_six_tensors_in_wire_order(self):
        exported = make_client().export_adapter()
        assert list(exported) == [
            "layer1.weight",
            "layer1.bias",
            "layer1.threshold",
            "layer2.weight",
            "layer2.bias",
            "layer2.threshold",
        ]

    def test_export_element_count_formula(self):
        client = make_client(dim=8)
        total = sum(v.size for v in client.export_adapter().values())
        assert total == 2 * 8 * 8 + 4 * 8

    def test_classifier_untouched_by_import(self):
        client = make_client(seed=21)
        cls_before = {k: v.copy() for k, v in client.classifier.params().items()}
        exported = client.export_adapter()
        for value in exported.values():
            value += 0.25
        client.import_adapter(exported)
        cls_after = client.classifier.params()
        assert all(np.array_equal(cls_before[k], cls_after[k]) for k in cls_before)

    def test_import_rejects_wrong_shapes(self):
        client = make_client()
        bad = client.export_adapter()
        bad["layer1.weight"] = np.zeros((2, 2))
        with pytest.raises(InvalidInputError, match="shape"):
            client.import_adapter(bad)

    def test_import_rejects_wrong_names(self):
        client = make_client()
        bad = client.export_adapter()
        bad["surprise"] = np.zeros(3)
        with pytest.raises(InvalidInputError):
            client.import_adapter(bad)

    def test_import_can_reset_optimizer_moments(self):
        client = make_client(reset_adapter_optimizer=True)
        client.local_epoch()
        assert client.opt_adapter.t > 0
        client.import_adapter(client.export_adapter())
        assert client.opt_adapter.t == 0

    def test_moments_persist_by_default(self):
        client = make_client()
        client.local_epoch()
        steps = client.opt_adapter.t
        client.import_adapter(client.export_adapter())
        assert client.opt_adapter.t == steps
