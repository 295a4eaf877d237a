"""Command-line driver: run experiments, generate synthetic banks, verify
invariants, and poke at the wire format.

Exit codes: 0 success; 1 verification or protocol failure; 2 configuration
error; 3 training divergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import verify as verify_mod
from .config import TrainConfig, config_to_dict, load_config
from .datastore import gen_synthetic, load_bank, write_bank
from .errors import MaskfedError, TrainingDivergedError
from .fl_server import ExperimentResult, adapter_only_metrics, run_experiment
from .wire_codec import float32_baseline, pack, read_packet, unpack, write_packet

ENV_OUT_DIR = "MASKFED_OUTPUT_DIR"


def _fmt(x: float) -> str:
    """Full-precision decimal form that round-trips, for machine tables."""
    return repr(float(x))


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def _final_rows(result: ExperimentResult) -> list[dict[str, object]]:
    rows: list[dict[str, object]] = []
    for i, m in enumerate(result.client_test):
        rows.append(
            {
                "entity": f"client_{i}",
                "accuracy": m["accuracy"],
                "macro_f1": m["macro_f1"],
                "ece": m["ece"],
                "adapter_accuracy": m["adapter_accuracy"],
                "classifier_accuracy": m["classifier_accuracy"],
            }
        )
    if result.global_test is not None:
        g = result.global_test
        rows.append(
            {
                "entity": "global",
                "accuracy": g["accuracy"],
                "macro_f1": g["macro_f1"],
                "ece": g["ece"],
                "adapter_accuracy": g["accuracy"],
                "classifier_accuracy": None,
            }
        )
    acc = [r["accuracy"] for r in rows]
    f1 = [r["macro_f1"] for r in rows]
    cal = [r["ece"] for r in rows]
    rows.append(
        {
            "entity": "avg",
            "accuracy": float(np.mean(acc)),
            "macro_f1": float(np.mean(f1)),
            "ece": float(np.mean(cal)),
            "adapter_accuracy": None,
            "classifier_accuracy": None,
        }
    )
    return rows


_COLUMNS = ["entity", "accuracy", "macro_f1", "ece", "adapter_accuracy",
            "classifier_accuracy"]


def _metrics_csv(rows: list[dict[str, object]]) -> str:
    lines = [",".join(_COLUMNS)]
    for row in rows:
        cells = []
        for col in _COLUMNS:
            value = row[col]
            if value is None:
                cells.append("")
            elif isinstance(value, str):
                cells.append(value)
            else:
                cells.append(_fmt(value))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _metrics_table(rows: list[dict[str, object]]) -> str:
    header = f"{'entity':<10}{'acc':>8}{'f1':>8}{'ece':>8}{'adapter':>9}{'cls':>8}"
    lines = [header, "-" * len(header)]
    for row in rows:
        def cell(value, width=8):
            return f"{'-':>{width}}" if value is None else f"{value:>{width}.4f}"

        lines.append(
            f"{row['entity']:<10}"
            + cell(row["accuracy"])
            + cell(row["macro_f1"])
            + cell(row["ece"])
            + cell(row["adapter_accuracy"], 9)
            + cell(row["classifier_accuracy"])
        )
    return "\n".join(lines) + "\n"


def _comm_lines(result: ExperimentResult) -> tuple[str, str]:
    best = result.best_round or 0
    per_client: dict[int, dict[str, int]] = {}
    for report in result.history:
        for record in report.clients:
            c = per_client.setdefault(
                record.client_id,
                {"up": 0, "down": 0, "up_best": 0, "down_best": 0},
            )
            c["up"] += record.bytes_up
            c["down"] += record.bytes_down
            if report.round <= best:
                c["up_best"] += record.bytes_up
                c["down_best"] += record.bytes_down
    csv_lines = ["client,bytes_up_total,bytes_down_total,bytes_up_to_best,bytes_down_to_best"]
    txt_lines = [
        f"rounds={len(result.history)} best_round={best}",
        f"{'client':<8}{'up':>12}{'down':>12}{'up@best':>12}{'down@best':>12}",
    ]
    total_up = total_down = 0
    for cid in sorted(per_client):
        c = per_client[cid]
        total_up += c["up"]
        total_down += c["down"]
        csv_lines.append(f"{cid},{c['up']},{c['down']},{c['up_best']},{c['down_best']}")
        txt_lines.append(
            f"{cid:<8}{c['up']:>12}{c['down']:>12}{c['up_best']:>12}{c['down_best']:>12}"
        )
    csv_lines.append(f"total,{total_up},{total_down},,")
    txt_lines.append(f"{'total':<8}{total_up:>12}{total_down:>12}")
    return "\n".join(csv_lines) + "\n", "\n".join(txt_lines) + "\n"


def write_outputs(result: ExperimentResult, out_dir: Path) -> None:
    """Emit all run artifacts. Everything except timing.jsonl is a pure
    function of (config, seed) and therefore byte-identical across reruns."""
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(
        json.dumps(config_to_dict(result.config), indent=2, sort_keys=True) + "\n"
    )
    with open(out_dir / "rounds.jsonl", "w") as fh:
        for report in result.history:
            fh.write(json.dumps(report.to_dict(), sort_keys=True) + "\n")
    with open(out_dir / "timing.jsonl", "w") as fh:
        for entry in result.server.timing_log:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    rows = _final_rows(result)
    (out_dir / "final_metrics.csv").write_text(_metrics_csv(rows))
    (out_dir / "final_metrics.txt").write_text(_metrics_table(rows))
    comm_csv, comm_txt = _comm_lines(result)
    (out_dir / "comm.csv").write_text(comm_csv)
    (out_dir / "comm.txt").write_text(comm_txt)
    write_packet(pack(result.server.global_adapter), out_dir / "global_adapter.fmc")


def cmd_run(args: argparse.Namespace) -> int:
    try:
        cfg = load_config(args.config)
        overrides: dict[str, object] = {}
        if args.rounds is not None:
            overrides["rounds"] = args.rounds
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.threads is not None:
            overrides["threads"] = args.threads
        if args.no_compression:
            overrides["compression"] = False
        out_dir = args.out_dir or os.environ.get(ENV_OUT_DIR) or cfg.out_dir
        overrides["out_dir"] = out_dir
        train = cfg.train
        if args.lam is not None or args.batch_size is not None:
            train_kwargs = dataclasses.asdict(train)
            train_kwargs["optimizer"] = train.optimizer
            if args.lam is not None:
                train_kwargs["lam"] = args.lam
            if args.batch_size is not None:
                train_kwargs["batch_size"] = args.batch_size
            train = TrainConfig(**train_kwargs)
        cfg = dataclasses.replace(cfg, train=train, **overrides)
    except MaskfedError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        result = run_experiment(cfg)
    except TrainingDivergedError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 3
    out_path = Path(cfg.out_dir)
    write_outputs(result, out_path)
    print(_metrics_table(_final_rows(result)), end="")
    print(f"artifacts written to {out_path}")
    return 0


# ---------------------------------------------------------------------------
# gen-synth
# ---------------------------------------------------------------------------


def cmd_gen_synth(args: argparse.Namespace) -> int:
    out_dir = Path(args.out_dir or os.environ.get(ENV_OUT_DIR) or "banks")
    out_dir.mkdir(parents=True, exist_ok=True)
    clients, global_bank = gen_synthetic(
        args.clients,
        args.dim,
        args.classes,
        args.n,
        args.shift,
        args.seed,
        args.sigma,
        args.n_global,
    )
    for k, bank in enumerate(clients):
        path = out_dir / f"client_{k:02d}.femb"
        write_bank(bank, path)
        print(f"{path}  N={bank.n_samples} D={bank.dim} C={bank.n_classes}")
    path = out_dir / "global.femb"
    write_bank(global_bank, path)
    print(f"{path}  N={global_bank.n_samples} D={global_bank.dim} C={global_bank.n_classes}")
    return 0


# ---------------------------------------------------------------------------
# verify / pack / unpack / eval
# ---------------------------------------------------------------------------


def cmd_verify(args: argparse.Namespace) -> int:
    ok = verify_mod.run_all(mutation=args.mutate)
    return 0 if ok else 1


def _tensor_table(tensors: dict[str, np.ndarray]) -> str:
    lines = [f"{'name':<24}{'shape':<16}dtype"]
    for name, tensor in tensors.items():
        shape = "x".join(str(d) for d in tensor.shape) or "scalar"
        lines.append(f"{name:<24}{shape:<16}{tensor.dtype}")
    return "\n".join(lines)


def cmd_pack(args: argparse.Namespace) -> int:
    try:
        with np.load(args.input) as archive:
            tensors = {name: archive[name] for name in archive.files}
        packet = pack(tensors)
        write_packet(packet, args.output)
    except (MaskfedError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    baseline = float32_baseline(tensors)
    ratio = len(packet.data) / baseline if baseline else float("nan")
    print(_tensor_table(tensors))
    print(
        f"packed {len(tensors)} tensors: payload {packet.raw_len} B, "
        f"packet {len(packet.data)} B, float32 baseline {baseline} B, "
        f"ratio {ratio:.3f}"
    )
    return 0


def cmd_unpack(args: argparse.Namespace) -> int:
    try:
        tensors = unpack(read_packet(args.input))
    except (MaskfedError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(_tensor_table(tensors))
    if args.out:
        np.savez(args.out, **tensors)
        print(f"tensors written to {args.out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    try:
        bank = load_bank(args.bank)
        params = unpack(read_packet(args.packet))
        cfg = TrainConfig(tau=args.tau)
        scores = adapter_only_metrics(params, bank, cfg)
    except MaskfedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for key in ("accuracy", "macro_f1", "ece"):
        print(f"{key}: {scores[key]:.6f}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maskfed",
        description="Deterministic federated simulator for masked feature adapters",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a JSON config")
    p_run.add_argument("config", help="path to the experiment config")
    p_run.add_argument("--rounds", type=int)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--threads", type=int)
    p_run.add_argument("--out-dir")
    p_run.add_argument("--lambda", dest="lam", type=float)
    p_run.add_argument("--batch-size", type=int)
    p_run.add_argument("--no-compression", action="store_true")
    p_run.set_defaults(fn=cmd_run)

    p_gen = sub.add_parser("gen-synth", help="write synthetic embedding banks")
    p_gen.add_argument("--out-dir")
    p_gen.add_argument("--clients", type=int, default=3)
    p_gen.add_argument("--dim", type=int, default=32)
    p_gen.add_argument("--classes", type=int, default=4)
    p_gen.add_argument("--n", type=int, default=200)
    p_gen.add_argument("--shift", choices=["rotation", "scaling", "none"],
                       default="rotation")
    p_gen.add_argument("--sigma", type=float, default=0.15)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--n-global", type=int, default=None)
    p_gen.set_defaults(fn=cmd_gen_synth)

    p_verify = sub.add_parser("verify", help="run the invariant suite")
    p_verify.add_argument("--mutate", choices=["grad"], default=None,
                          help="debug hook: deliberately corrupt one check")
    p_verify.set_defaults(fn=cmd_verify)

    p_pack = sub.add_parser("pack", help="pack an .npz of tensors into a packet")
    p_pack.add_argument("input")
    p_pack.add_argument("output")
    p_pack.set_defaults(fn=cmd_pack)

    p_unpack = sub.add_parser("unpack", help="inspect or extract a packet")
    p_unpack.add_argument("input")
    p_unpack.add_argument("--out", help="optional .npz destination")
    p_unpack.set_defaults(fn=cmd_unpack)

    p_eval = sub.add_parser("eval", help="adapter-only metrics of a packet on a bank")
    p_eval.add_argument("--packet", required=True)
    p_eval.add_argument("--bank", required=True)
    p_eval.add_argument("--tau", type=float, default=TrainConfig().tau)
    p_eval.set_defaults(fn=cmd_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
