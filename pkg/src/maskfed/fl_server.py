"""Round orchestration: broadcast, parallel local training, mean aggregation,
and experiment-level bookkeeping.

Every parameter exchange goes through the wire codec (unless compression is
disabled), so the byte accounting measures exactly what a deployment would
transmit. Aggregation sums in ascending client id in float64, keeping results
bitwise independent of scheduling and thread count.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import metrics
from .config import ExperimentConfig, TrainConfig
from .datastore import EmbeddingBank, SplitSpec, gen_synthetic, load_bank, split_bank
from .errors import EmptyBatchError, InvalidInputError, ProtocolError
from .fl_client import ClientData, ClientState, _normalize_rows
from .masked_layers import FeatureAdapter, MaskedLinear
from .numerics import Array, softmax_rows, stream
from .wire_codec import float32_baseline, pack, unpack


@dataclass
class ClientRoundRecord:
    client_id: int
    contrastive: float
    classifier: float
    consistency: float
    total: float
    val_accuracy: float
    val_macro_f1: float
    val_ece: float
    bytes_up: int
    bytes_down: int
    wall_time_s: float  # excluded from deterministic outputs


@dataclass
class RoundReport:
    round: int
    clients: list[ClientRoundRecord]

    @property
    def mean_val_accuracy(self) -> float:
        return float(np.mean([c.val_accuracy for c in self.clients]))

    def to_dict(self, include_timing: bool = False) -> dict:
        out = {
            "round": self.round,
            "mean_val_accuracy": self.mean_val_accuracy,
            "clients": [],
        }
        for c in self.clients:
            entry = {
                "client_id": c.client_id,
                "loss_contrastive": c.contrastive,
                "loss_classifier": c.classifier,
                "loss_consistency": c.consistency,
                "loss_total": c.total,
                "val_accuracy": c.val_accuracy,
                "val_macro_f1": c.val_macro_f1,
                "val_ece": c.val_ece,
                "bytes_up": c.bytes_up,
                "bytes_down": c.bytes_down,
            }
            if include_timing:
                entry["wall_time_s"] = c.wall_time_s
            out["clients"].append(entry)
        return out


@dataclass
class ServerState:
    global_adapter: dict[str, Array]
    round: int = 0
    comm_log: list[dict] = field(default_factory=list)
    timing_log: list[dict] = field(default_factory=list)


def init_server(dim: int, cfg: TrainConfig, seed: int) -> ServerState:
    adapter = FeatureAdapter.create(
        dim, stream(seed, "server/adapter-init"), cfg.mask_window, cfg.mask_adapter
    )
    return ServerState(global_adapter=adapter.params())


def aggregate(uploads: Sequence[tuple[int, dict[str, Array]]]) -> dict[str, Array]:
    """Uniform elementwise mean of parameter sets, accumulated in float64 in
    ascending client id order."""
    if len(uploads) == 0:
        raise InvalidInputError("nothing to aggregate")
    ordered = sorted(uploads, key=lambda item: item[0])
    ref_id, ref = ordered[0]
    names = list(ref.keys())
    acc = {name: np.zeros(ref[name].shape, dtype=np.float64) for name in names}
    for client_id, params in ordered:
        if list(params.keys()) != names:
            raise ProtocolError(
                f"client {client_id} uploaded parameter names that do not match "
                f"client {ref_id}"
            )
        for name in names:
            value = np.asarray(params[name], dtype=np.float64)
            if value.shape != acc[name].shape:
                raise ProtocolError(
                    f"client {client_id} uploaded {name} with shape {value.shape}, "
                    f"expected {acc[name].shape}"
                )
            acc[name] += value
    n = len(ordered)
    return {name: value / n for name, value in acc.items()}


def _widen(params: dict[str, Array]) -> dict[str, Array]:
    return {name: np.asarray(v, dtype=np.float64) for name, v in params.items()}


def run_round(
    server: ServerState,
    clients: list[ClientState],
    compression: bool = True,
    threads: int = 1,
) -> RoundReport:
    """One communication round: broadcast, local epochs, mean aggregation.

    Any client failure propagates and aborts the round; nothing partial is
    aggregated.
    """
    if not clients:
        raise InvalidInputError("need at least one client")
    t0 = time.perf_counter()
    if compression:
        packet = pack(server.global_adapter)
        bytes_down = len(packet.data)
        broadcast = _widen(unpack(packet))
    else:
        bytes_down = float32_baseline(server.global_adapter)
        broadcast = {k: v.copy() for k, v in server.global_adapter.items()}
    t_broadcast = time.perf_counter() - t0

    def client_work(client: ClientState) -> tuple[ClientRoundRecord, dict[str, Array]]:
        start = time.perf_counter()
        client.import_adapter({k: v.copy() for k, v in broadcast.items()})
        epoch = client.local_epoch()
        evaluation = client.evaluate("val")
        exported = client.export_adapter()
        if compression:
            up_packet = pack(exported)
            bytes_up = len(up_packet.data)
            upload = _widen(unpack(up_packet))
        else:
            bytes_up = float32_baseline(exported)
            upload = exported
        record = ClientRoundRecord(
            client_id=client.id,
            contrastive=epoch.contrastive,
            classifier=epoch.classifier,
            consistency=epoch.consistency,
            total=epoch.total,
            val_accuracy=evaluation.accuracy,
            val_macro_f1=evaluation.macro_f1,
            val_ece=evaluation.ece,
            bytes_up=bytes_up,
            bytes_down=bytes_down,
            wall_time_s=time.perf_counter() - start,
        )
        return record, upload

    t1 = time.perf_counter()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(client_work, clients))
    else:
        results = [client_work(c) for c in clients]
    t_local = time.perf_counter() - t1

    t2 = time.perf_counter()
    uploads = [(c.id, upload) for c, (_, upload) in zip(clients, results)]
    server.global_adapter = aggregate(uploads)
    t_aggregate = time.perf_counter() - t2

    server.round += 1
    report = RoundReport(round=server.round, clients=[r for r, _ in results])
    server.comm_log.append(
        {
            "round": server.round,
            "bytes_down_per_client": bytes_down,
            "bytes_up": {c.client_id: c.bytes_up for c in report.clients},
        }
    )
    server.timing_log.append(
        {
            "round": server.round,
            "broadcast_s": t_broadcast,
            "local_s": t_local,
            "aggregate_s": t_aggregate,
        }
    )
    return report


def best_checkpoint(history: Sequence[RoundReport]) -> int:
    """Round (1-based) with the highest mean client validation accuracy;
    ties go to the earliest round."""
    if not history:
        raise InvalidInputError("no completed rounds")
    best = max(range(len(history)), key=lambda i: (history[i].mean_val_accuracy, -i))
    return history[best].round


def adapter_only_metrics(
    adapter_params: dict[str, Array],
    bank: EmbeddingBank,
    cfg: TrainConfig,
) -> dict[str, float]:
    """Gate-then-similarity inference with no classifier, as run at the
    global site on unseen data."""
    if bank.n_samples == 0:
        raise EmptyBatchError("cannot evaluate an empty bank")
    dim = bank.dim
    adapter = FeatureAdapter(
        MaskedLinear(
            np.zeros((dim, dim)), np.zeros(dim), np.zeros(dim),
            cfg.mask_window, cfg.mask_adapter,
        ),
        MaskedLinear(
            np.zeros((dim, dim)), np.zeros(dim), np.zeros(dim),
            cfg.mask_window, cfg.mask_adapter,
        ),
    )
    adapter.set_params(_widen(adapter_params))
    gated, _ = adapter.apply(bank.features)
    unit_gated, _ = _normalize_rows(gated, "gated feature")
    unit_text, _ = _normalize_rows(bank.text_features, "text feature")
    probs = softmax_rows(unit_gated @ unit_text.T, cfg.tau)
    preds = np.argmax(probs, axis=1)
    correct = preds == bank.labels
    return {
        "accuracy": metrics.accuracy(preds, bank.labels),
        "macro_f1": metrics.macro_f1(preds, bank.labels, bank.n_classes),
        "ece": metrics.ece(probs.max(axis=1), correct),
    }


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    history: list[RoundReport]
    server: ServerState
    clients: list[ClientState]
    client_test: list[dict[str, float]]
    global_test: dict[str, float] | None
    best_round: int | None

    @property
    def avg_accuracy(self) -> float:
        """Mean of per-client test accuracies and, when present, the global
        accuracy."""
        values = [m["accuracy"] for m in self.client_test]
        if self.global_test is not None:
            values.append(self.global_test["accuracy"])
        return float(np.mean(values))


def build_clients(
    cfg: ExperimentConfig,
) -> tuple[list[ClientState], EmbeddingBank | None]:
    """Materialize client states (with stratified splits) and the optional
    global bank from either bank files or the synthetic generator."""
    if cfg.synthetic is not None:
        spec = cfg.synthetic
        banks, global_bank = gen_synthetic(
            spec.clients,
            spec.dim,
            spec.classes,
            spec.n_per_client,
            spec.shift,
            cfg.seed,
            spec.sigma,
            spec.n_global,
        )
    else:
        banks = [load_bank(p) for p in cfg.bank_paths]
        global_bank = (
            load_bank(cfg.global_bank_path) if cfg.global_bank_path else None
        )
    clients = []
    for k, bank in enumerate(banks):
        split = SplitSpec(
            cfg.train_fraction, cfg.val_fraction, cfg.test_fraction, cfg.seed
        )
        train, val, test = split_bank(bank, split)
        clients.append(
            ClientState(k, ClientData(train, val, test), cfg.train, cfg.seed)
        )
    dims = {c.data.train.dim for c in clients}
    if len(dims) != 1:
        raise InvalidInputError(f"client banks disagree on feature dim: {dims}")
    if global_bank is not None and global_bank.dim != dims.pop():
        raise InvalidInputError("global bank feature dim does not match clients")
    return clients, global_bank


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run the full simulation and final evaluations.

    With zero rounds the clients still receive the initial broadcast (through
    the wire when compression is on) so the reported metrics reflect the
    initialization.
    """
    clients, global_bank = build_clients(cfg)
    server = init_server(clients[0].data.train.dim, cfg.train, cfg.seed)
    history: list[RoundReport] = []
    if cfg.rounds == 0:
        if cfg.compression:
            broadcast = _widen(unpack(pack(server.global_adapter)))
        else:
            broadcast = server.global_adapter
        for client in clients:
            client.import_adapter({k: v.copy() for k, v in broadcast.items()})
    for _ in range(cfg.rounds):
        history.append(
            run_round(server, clients, cfg.compression, cfg.threads)
        )
    client_test = []
    for client in clients:
        result = client.evaluate("test")
        client_test.append(
            {
                "accuracy": result.accuracy,
                "macro_f1": result.macro_f1,
                "ece": result.ece,
                "adapter_accuracy": result.adapter_accuracy,
                "classifier_accuracy": result.classifier_accuracy,
            }
        )
    global_test = (
        adapter_only_metrics(server.global_adapter, global_bank, cfg.train)
        if global_bank is not None
        else None
    )
    return ExperimentResult(
        config=cfg,
        history=history,
        server=server,
        clients=clients,
        client_test=client_test,
        global_test=global_test,
        best_round=best_checkpoint(history) if history else None,
    )
