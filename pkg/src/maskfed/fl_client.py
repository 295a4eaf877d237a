"""Per-client state: one local training epoch over gated features, ensemble
evaluation, a decoupled-weight-decay Adam optimizer, and the parameter
exchange hooks used by the server.

Only the feature adapter is ever exported; the classifier stays private.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import metrics
from .config import OptimizerConfig, TrainConfig
from .datastore import EmbeddingBank
from .errors import (
    DegenerateInputError,
    EmptyBatchError,
    InvalidInputError,
    TrainingDivergedError,
)
from .losses import (
    classwise_kl_loss,
    contrastive_loss,
    cross_entropy_loss,
    ensemble_predict_rows,
    entropy_weight,
    total_loss,
)
from .masked_layers import FeatureAdapter, LocalClassifier
from .numerics import Array, softmax_rows, stream


class AdamW:
    """Adam with decoupled weight decay; one instance per model.

    The learning rate decays exponentially per epoch and is recomputed from
    the epoch count so it equals lr0 * gamma**k exactly. Weight decay applies
    only to weight matrices, never to biases or mask thresholds.
    """

    def __init__(self, lr0: float, gamma: float, cfg: OptimizerConfig):
        self.lr0 = lr0
        self.gamma = gamma
        self.cfg = cfg
        self.exp_avg: dict[str, Array] = {}
        self.exp_avg_sq: dict[str, Array] = {}
        self.t = 0
        self.epoch = 0

    @property
    def lr(self) -> float:
        return self.lr0 * self.gamma**self.epoch

    def step(self, params: dict[str, Array], grads: dict[str, Array]) -> None:
        self.t += 1
        c = self.cfg
        bc1 = 1.0 - c.beta1**self.t
        bc2 = 1.0 - c.beta2**self.t
        lr = self.lr
        for name, p in params.items():
            g = grads[name]
            m = self.exp_avg.setdefault(name, np.zeros_like(p))
            v = self.exp_avg_sq.setdefault(name, np.zeros_like(p))
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + c.eps)
            if name.endswith(".weight"):
                update = update + c.weight_decay * p
            p -= lr * update

    def advance_epoch(self) -> None:
        self.epoch += 1

    def reset_moments(self) -> None:
        self.exp_avg.clear()
        self.exp_avg_sq.clear()
        self.t = 0


@dataclass
class ClientData:
    train: EmbeddingBank
    val: EmbeddingBank
    test: EmbeddingBank


@dataclass
class BatchResult:
    contrastive: float
    classifier: float
    consistency: float
    total: float
    weight: float
    adapter_grads: dict[str, Array]
    classifier_grads: dict[str, Array]
    p_adapter: Array
    p_classifier: Array


@dataclass
class EpochReport:
    contrastive: float
    classifier: float
    consistency: float
    total: float
    batches: int


@dataclass
class EvalResult:
    accuracy: float
    macro_f1: float
    ece: float
    adapter_accuracy: float
    classifier_accuracy: float
    probabilities: Array   # per-sample ensemble distributions (N, C)
    predictions: Array


def _normalize_rows(x: Array, what: str) -> tuple[Array, Array]:
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms == 0):
        raise DegenerateInputError(f"zero-norm {what} row")
    return x / norms[:, None], norms


def _cosine_grad(d_sims: Array, unit_rows: Array, unit_refs: Array,
                 norms: Array, sims: Array) -> Array:
    """Gradient of rows given d(loss)/d(sims) for sims = unit_rows @ unit_refs.T."""
    return (d_sims @ unit_refs - (d_sims * sims).sum(axis=1, keepdims=True) * unit_rows) / norms[:, None]


def batch_objective(
    adapter: FeatureAdapter,
    classifier: LocalClassifier,
    feats: Array,
    labels: Array,
    text_features: Array,
    cfg: TrainConfig,
    relaxed: bool = False,
    weight_override: float | None = None,
    objective: str = "total",
) -> BatchResult:
    """Full forward and backward pass on one batch.

    The returned gradients belong to ``objective``: the composite loss by
    default, or a single term ("contrastive", "classifier", "consistency")
    for the verification suites. ``weight_override`` pins the consistency
    balance (used by gradient checks, where the entropy-derived weight must
    stay frozen); otherwise it is computed from this batch and treated as a
    constant in the backward pass.
    """
    gated, a_cache = adapter.apply(feats, relaxed)
    unit_gated, gated_norms = _normalize_rows(gated, "gated feature")
    unit_text, _ = _normalize_rows(text_features, "text feature")

    class_sims = unit_gated @ unit_text.T
    adapter_logits = class_sims / cfg.tau
    p_adapter = softmax_rows(adapter_logits)

    batch_text = unit_text[labels]
    batch_sims = unit_gated @ batch_text.T
    l_contr, d_batch_sims = contrastive_loss(batch_sims, cfg.tau)

    logits, c_cache = classifier.forward(gated, relaxed)
    l_ce, d_logits_ce = cross_entropy_loss(logits, labels)
    p_classifier = softmax_rows(logits)

    weight = (
        weight_override
        if weight_override is not None
        else entropy_weight(p_adapter, p_classifier)
    )
    l_sim, d_adapter_logits, d_logits_kl = classwise_kl_loss(
        adapter_logits, logits, cfg.kl_temperature, weight
    )
    l_total = total_loss(l_contr, l_ce, l_sim, cfg.lam)

    try:
        w_contr, w_ce, w_sim = {
            "total": (1.0, 1.0, cfg.lam),
            "contrastive": (1.0, 0.0, 0.0),
            "classifier": (0.0, 1.0, 0.0),
            "consistency": (0.0, 0.0, 1.0),
        }[objective]
    except KeyError:
        raise InvalidInputError(f"unknown objective: {objective}") from None

    d_logits = w_ce * d_logits_ce + w_sim * d_logits_kl
    classifier_grads, d_gated_cls = classifier.backward(c_cache, d_logits)

    d_class_sims = w_sim * d_adapter_logits / cfg.tau
    d_gated = (
        d_gated_cls
        + _cosine_grad(d_class_sims, unit_gated, unit_text, gated_norms, class_sims)
        + w_contr * _cosine_grad(d_batch_sims, unit_gated, batch_text, gated_norms, batch_sims)
    )
    adapter_grads = adapter.backward(a_cache, d_gated)

    return BatchResult(
        contrastive=l_contr,
        classifier=l_ce,
        consistency=l_sim,
        total=l_total,
        weight=weight,
        adapter_grads=adapter_grads,
        classifier_grads=classifier_grads,
        p_adapter=p_adapter,
        p_classifier=p_classifier,
    )


class ClientState:
    """One simulated site: private data splits, adapter, classifier and their
    optimizers, plus a private shuffle stream."""

    def __init__(
        self,
        client_id: int,
        data: ClientData,
        cfg: TrainConfig,
        seed: int,
    ):
        self.id = client_id
        self.data = data
        self.cfg = cfg
        dim = data.train.dim
        n_classes = data.train.n_classes
        self.adapter = FeatureAdapter.create(
            dim,
            stream(seed, f"client{client_id}/adapter-init"),
            cfg.mask_window,
            cfg.mask_adapter,
        )
        self.classifier = LocalClassifier.create(
            dim,
            cfg.hidden_dim,
            n_classes,
            stream(seed, f"client{client_id}/classifier-init"),
            cfg.mask_window,
        )
        self.opt_adapter = AdamW(cfg.lr_adapter, cfg.scheduler_gamma, cfg.optimizer)
        self.opt_classifier = AdamW(
            cfg.lr_classifier, cfg.scheduler_gamma, cfg.optimizer
        )
        self.shuffle_rng = stream(seed, f"client{client_id}/shuffle")

    def local_epoch(self, batch_size: int | None = None) -> EpochReport:
        """One pass over the shuffled training bank with an optimizer step per
        minibatch; the trailing short batch is kept."""
        bank = self.data.train
        if bank.n_samples == 0:
            raise EmptyBatchError(f"client {self.id} has no training data")
        b = batch_size if batch_size is not None else self.cfg.batch_size
        if b < 1:
            raise InvalidInputError("batch_size must be at least 1")
        order = self.shuffle_rng.permutation(bank.n_samples)
        sums = np.zeros(4)
        n_batches = 0
        for start in range(0, bank.n_samples, b):
            idx = order[start : start + b]
            result = batch_objective(
                self.adapter,
                self.classifier,
                bank.features[idx],
                bank.labels[idx],
                bank.text_features,
                self.cfg,
            )
            if not np.isfinite(result.total):
                raise TrainingDivergedError(
                    f"non-finite loss in batch {n_batches} on client {self.id}"
                )
            self.opt_adapter.step(self.adapter.params(), result.adapter_grads)
            self.opt_classifier.step(
                self.classifier.params(), result.classifier_grads
            )
            batch_losses = np.array(
                [result.contrastive, result.classifier, result.consistency, result.total]
            )
            sums += idx.size * batch_losses
            n_batches += 1
        self.opt_adapter.advance_epoch()
        self.opt_classifier.advance_epoch()
        means = sums / bank.n_samples
        return EpochReport(*means.tolist(), batches=n_batches)

    def evaluate(self, split: str) -> EvalResult:
        """Ensemble inference over one split, with both single-head accuracies
        for comparison."""
        if split not in ("train", "val", "test"):
            raise InvalidInputError(f"unknown split: {split}")
        bank: EmbeddingBank = getattr(self.data, split)
        if bank.n_samples == 0:
            raise EmptyBatchError(f"split {split} of client {self.id} is empty")
        p_adapter, p_classifier = self._head_probabilities(bank)
        p_ens = ensemble_predict_rows(p_classifier, p_adapter)
        preds = np.argmax(p_ens, axis=1)
        confidence = p_ens.max(axis=1)
        correct = preds == bank.labels
        return EvalResult(
            accuracy=metrics.accuracy(preds, bank.labels),
            macro_f1=metrics.macro_f1(preds, bank.labels, bank.n_classes),
            ece=metrics.ece(confidence, correct),
            adapter_accuracy=metrics.accuracy(
                np.argmax(p_adapter, axis=1), bank.labels
            ),
            classifier_accuracy=metrics.accuracy(
                np.argmax(p_classifier, axis=1), bank.labels
            ),
            probabilities=p_ens,
            predictions=preds,
        )

    def _head_probabilities(self, bank: EmbeddingBank) -> tuple[Array, Array]:
        gated, _ = self.adapter.apply(bank.features)
        unit_gated, _ = _normalize_rows(gated, "gated feature")
        unit_text, _ = _normalize_rows(bank.text_features, "text feature")
        p_adapter = softmax_rows(unit_gated @ unit_text.T, self.cfg.tau)
        logits, _ = self.classifier.forward(gated)
        return p_adapter, softmax_rows(logits)

    def export_adapter(self) -> dict[str, Array]:
        """Copies of the adapter parameters in canonical wire order."""
        return {name: value.copy() for name, value in self.adapter.params().items()}

    def import_adapter(self, params: dict[str, Array]) -> None:
        """Replace adapter parameters; classifier and, unless configured
        otherwise, optimizer moments are untouched."""
        self.adapter.set_params(params)
        if self.cfg.reset_adapter_optimizer:
            self.opt_adapter.reset_moments()
