"""Self-verification suite: every module-level invariant, runnable from the
command line. Each property prints one pass/fail line; the suite is
deterministic so two runs produce identical output.

Also hosts the independent oracles shared with the test suite: a bit-level
IEEE binary16 round-to-nearest-even quantizer and the finite-difference
gradient harness.
"""

from __future__ import annotations

import struct
from typing import Callable

import numpy as np

from . import losses, metrics
from .config import ExperimentConfig, OptimizerConfig, SyntheticSpec, TrainConfig
from .datastore import EmbeddingBank, SplitSpec, dirichlet_partition, gen_synthetic, split_bank
from .fl_client import AdamW, batch_objective
from .fl_server import aggregate, run_experiment
from .masked_layers import FeatureAdapter, LocalClassifier, compute_mask, mean_magnitude
from .numerics import Array, entropy, grad_check, softmax, stream
from .wire_codec import encode_payload, pack, unpack

# ---------------------------------------------------------------------------
# Independent oracles
# ---------------------------------------------------------------------------


def quantize_half_bits(x: float) -> int:
    """IEEE binary16 bit pattern of ``x`` under round-to-nearest-even with
    saturation at +/-65504, computed with integer arithmetic only (no float16
    cast anywhere), so it can serve as an oracle for the wire codec.
    """
    bits = struct.unpack(">Q", struct.pack(">d", float(x)))[0]
    sign16 = (bits >> 48) & 0x8000
    exp = (bits >> 52) & 0x7FF
    frac = bits & 0xFFFFFFFFFFFFF
    if exp == 0x7FF:
        raise ValueError("cannot quantize a non-finite value")
    if exp == 0:
        # binary64 subnormals are far below the binary16 subnormal grid
        return sign16
    e = exp - 1023
    sig = frac | (1 << 52)

    def round_shift(value: int, shift: int) -> int:
        if shift <= 0:
            return value << (-shift)
        q, r = divmod(value, 1 << shift)
        half = 1 << (shift - 1)
        if r > half or (r == half and q & 1):
            q += 1
        return q

    if e >= 16:
        return sign16 | 0x7BFF
    if e >= -14:
        m = round_shift(sig, 42)
        if m == 1 << 11:
            m = 1 << 10
            e += 1
            if e > 15:
                return sign16 | 0x7BFF
        return sign16 | ((e + 15) << 10) | (m - (1 << 10))
    m = round_shift(sig, 1051 - exp)
    return sign16 | m  # m == 1<<10 rolls over into the smallest normal


def half_bits_to_float(bits: int) -> float:
    """Exact float value of a binary16 bit pattern (finite patterns only)."""
    sign = -1.0 if bits & 0x8000 else 1.0
    expfield = (bits >> 10) & 0x1F
    mant = bits & 0x3FF
    if expfield == 0x1F:
        raise ValueError("non-finite half value")
    if expfield == 0:
        return sign * mant * 2.0**-24
    return sign * (1024 + mant) * 2.0 ** (expfield - 25)


def quantize_half(x: float) -> float:
    return half_bits_to_float(quantize_half_bits(x))


# ---------------------------------------------------------------------------
# Gradient harness
# ---------------------------------------------------------------------------


def flatten_params(params: dict[str, Array]) -> Array:
    return np.concatenate([np.asarray(v).ravel() for v in params.values()])


def unflatten_params(vec: Array, template: dict[str, Array]) -> dict[str, Array]:
    out: dict[str, Array] = {}
    pos = 0
    for name, value in template.items():
        out[name] = vec[pos : pos + value.size].reshape(value.shape).copy()
        pos += value.size
    return out


def make_instance(
    seed: int, b: int, dim: int, n_classes: int, hidden: int, tau: float, temp: float
) -> tuple[FeatureAdapter, LocalClassifier, Array, Array, Array, TrainConfig]:
    cfg = TrainConfig(tau=tau, kl_temperature=temp, lam=0.04, hidden_dim=hidden)
    adapter = FeatureAdapter.create(
        dim, stream(seed, "check/adapter"), cfg.mask_window, True
    )
    classifier = LocalClassifier.create(
        dim, hidden, n_classes, stream(seed, "check/classifier"), cfg.mask_window
    )
    rng = stream(seed, "check/data")
    feats = rng.standard_normal((b, dim))
    labels = rng.integers(0, n_classes, size=b)
    text = rng.standard_normal((n_classes, dim))
    return adapter, classifier, feats, labels, text, cfg


def loss_grad_error(
    objective: str,
    seed: int,
    b: int = 4,
    dim: int = 8,
    n_classes: int = 3,
    hidden: int = 6,
    tau: float = 0.25,
    temp: float = 2.0,
    h: float = 1e-5,
    mutation: str | None = None,
) -> float:
    """Max relative discrepancy between the analytic gradient of one loss term
    and central differences of the relaxed forward, over all parameters.

    The consistency balance is frozen at its base-point value so the check
    differentiates exactly the function the backward pass models.
    """
    adapter, classifier, feats, labels, text, cfg = make_instance(
        seed, b, dim, n_classes, hidden, tau, temp
    )
    template = {
        **{f"A::{k}": v for k, v in adapter.params().items()},
        **{f"M::{k}": v for k, v in classifier.params().items()},
    }
    theta0 = flatten_params(template)
    base = batch_objective(
        adapter, classifier, feats, labels, text, cfg, relaxed=True
    )
    weight0 = base.weight

    def f(theta: Array) -> tuple[float, Array]:
        ps = unflatten_params(theta, template)
        adapter.set_params({k[3:]: v for k, v in ps.items() if k.startswith("A::")})
        classifier.set_params({k[3:]: v for k, v in ps.items() if k.startswith("M::")})
        r = batch_objective(
            adapter,
            classifier,
            feats,
            labels,
            text,
            cfg,
            relaxed=True,
            weight_override=weight0,
            objective=objective,
        )
        value = {
            "total": r.total,
            "contrastive": r.contrastive,
            "classifier": r.classifier,
            "consistency": r.consistency,
        }[objective]
        grads = {
            **{f"A::{k}": v for k, v in r.adapter_grads.items()},
            **{f"M::{k}": v for k, v in r.classifier_grads.items()},
        }
        flat = flatten_params(grads)
        if mutation == "grad":
            flat = flat.copy()
            flat[0] += 1e-3
        return value, flat

    return grad_check(f, theta0, h)


def gradient_suite(
    n_instances: int = 20, mutation: str | None = None
) -> dict[str, float]:
    """Worst finite-difference error per loss term over randomized instances
    spanning small batch sizes, dims, and class counts."""
    sizes = [(2, 4, 2, 4), (4, 8, 3, 6), (2, 8, 3, 6), (4, 4, 2, 4)]
    taus = [0.25, 1.0]
    worst = {"contrastive": 0.0, "classifier": 0.0, "consistency": 0.0, "total": 0.0}
    for i in range(n_instances):
        b, dim, n_classes, hidden = sizes[i % len(sizes)]
        tau = taus[i % len(taus)]
        for objective in worst:
            err = loss_grad_error(
                objective, seed=1000 + i, b=b, dim=dim, n_classes=n_classes,
                hidden=hidden, tau=tau, mutation=mutation,
            )
            worst[objective] = max(worst[objective], err)
    return worst


# ---------------------------------------------------------------------------
# Properties
# ---------------------------------------------------------------------------

_PROPERTIES: list[tuple[str, Callable[..., str]]] = []


def _prop(name: str):
    def register(fn):
        _PROPERTIES.append((name, fn))
        return fn

    return register


@_prop("numerics: softmax output is a distribution and shift-invariant")
def _p_softmax(mutation=None) -> str:
    rng = stream(7, "verify/softmax")
    for _ in range(50):
        n = int(rng.integers(1, 9))
        logits = rng.uniform(-50, 50, size=n)
        temp = float(10.0 ** rng.uniform(-2, 6))
        p = softmax(logits, temp)
        assert np.all(p >= 0) and np.all(p <= 1)
        assert abs(p.sum() - 1.0) < 1e-9
        shifted = softmax(logits + 123.456, temp)
        assert np.max(np.abs(p - shifted)) < 1e-12
    return "50 random cases"


@_prop("numerics: entropy bounded by ln(n), maximal exactly at uniform")
def _p_entropy(mutation=None) -> str:
    rng = stream(7, "verify/entropy")
    for _ in range(50):
        n = int(rng.integers(2, 9))
        p = rng.dirichlet(np.ones(n))
        h = entropy(p)
        assert -1e-12 <= h <= np.log(n) + 1e-12
    assert abs(entropy(np.ones(5) / 5) - np.log(5)) < 1e-12
    assert entropy(np.array([1.0, 0.0, 0.0])) == 0.0
    return "bounds and extremes"


@_prop("numerics: cosine of positively/negatively scaled copies is +/-1")
def _p_cosine(mutation=None) -> str:
    from .numerics import cosine_similarity

    rng = stream(7, "verify/cosine")
    for _ in range(20):
        a = rng.standard_normal(6)
        s = float(rng.uniform(0.1, 10))
        assert abs(cosine_similarity(a, s * a) - 1.0) < 1e-12
        assert abs(cosine_similarity(a, -s * a) + 1.0) < 1e-12
    return "20 random vectors"


@_prop("numerics: gradient checker is exact on a quadratic")
def _p_gradcheck(mutation=None) -> str:
    def f(theta):
        return float(theta @ theta), 2 * theta

    err = grad_check(f, np.array([1.0, 2.0]), 1e-5)
    assert err < 1e-8, f"quadratic check error {err}"
    return f"error {err:.2e}"


@_prop("masked layers: raising a threshold can only switch rows off")
def _p_monotone(mutation=None) -> str:
    rng = stream(7, "verify/monotone")
    for _ in range(30):
        w = rng.standard_normal((6, 5))
        u = mean_magnitude(w)
        kappa = rng.uniform(-0.5, 1.0, size=6)
        before = compute_mask(u, kappa)
        after = compute_mask(u, kappa + rng.uniform(0, 0.5, size=6))
        assert np.all(after <= before)
    return "30 random layers"


@_prop("masked layers: gated features are elementwise bounded by the input")
def _p_gate_bound(mutation=None) -> str:
    rng = stream(7, "verify/gate")
    adapter = FeatureAdapter.create(16, rng)
    x = stream(7, "verify/gate-x").standard_normal((8, 16))
    gated, _ = adapter.apply(x)
    gate, _ = adapter.gate(x)
    assert np.all(gate >= 0) and np.all(gate <= 1)
    assert np.all(np.abs(gated) <= np.abs(x) + 1e-15)
    return "8x16 batch"


@_prop("masked layers: adapter at D=512 has between 5.0e5 and 5.5e5 parameters")
def _p_param_count(mutation=None) -> str:
    adapter = FeatureAdapter.create(512, stream(7, "verify/count"))
    n = adapter.param_count()
    assert 5.0e5 <= n <= 5.5e5, f"got {n}"
    return f"{n} parameters"


@_prop("masked layers: forward passes on identical state are bitwise equal")
def _p_forward_determinism(mutation=None) -> str:
    adapter = FeatureAdapter.create(16, stream(7, "verify/det"))
    x = stream(7, "verify/det-x").standard_normal((8, 16))
    a, _ = adapter.apply(x)
    b, _ = adapter.apply(x)
    assert np.array_equal(a, b)
    return "two passes"


@_prop("gradients: every loss term matches finite differences to 1e-4")
def _p_gradients(mutation=None) -> str:
    worst = gradient_suite(n_instances=8, mutation=mutation)
    peak = max(worst.values())
    assert peak <= 1e-4, f"worst relative error {peak}"
    return " ".join(f"{k}={v:.1e}" for k, v in worst.items())


@_prop("losses: all terms are nonnegative on random inputs")
def _p_nonneg(mutation=None) -> str:
    rng = stream(7, "verify/nonneg")
    for _ in range(30):
        b, c = int(rng.integers(1, 6)), int(rng.integers(2, 5))
        sims = rng.uniform(-1, 1, size=(b, b))
        v, _ = losses.contrastive_loss(sims, 0.5)
        assert v >= -1e-12
        logits = rng.standard_normal((b, c))
        labels = rng.integers(0, c, size=b)
        v, _ = losses.cross_entropy_loss(logits, labels)
        assert v >= -1e-12
        v, _, _ = losses.classwise_kl_loss(
            rng.standard_normal((b, c)), rng.standard_normal((b, c)), 2.0,
            float(rng.uniform(0, 1)),
        )
        assert v >= -1e-12
    return "30 random cases"


@_prop("losses: consistency vanishes exactly when batch profiles coincide")
def _p_kl_zero(mutation=None) -> str:
    rng = stream(7, "verify/klzero")
    s = rng.standard_normal((4, 3))
    v, _, _ = losses.classwise_kl_loss(s, s.copy(), 2.0, 0.3)
    assert v == 0.0
    o = s + rng.standard_normal((4, 3)) * 0.5
    v, _, _ = losses.classwise_kl_loss(s, o, 2.0, 0.3)
    assert v > 1e-6
    return "zero iff equal"


@_prop("losses: entropy balance lies in [0,1] and complements itself")
def _p_weight(mutation=None) -> str:
    rng = stream(7, "verify/weight")
    for _ in range(30):
        b, c = int(rng.integers(1, 6)), int(rng.integers(2, 5))
        pa = rng.dirichlet(np.ones(c), size=b)
        pc = rng.dirichlet(np.ones(c), size=b)
        w = losses.entropy_weight(pa, pc)
        assert 0.0 <= w <= 1.0
        assert abs(w + losses.entropy_weight(pc, pa) - 1.0) < 1e-12
    return "30 random batches"


@_prop("losses: ensemble outputs are valid distributions")
def _p_ensemble(mutation=None) -> str:
    rng = stream(7, "verify/ens")
    for _ in range(30):
        c = int(rng.integers(2, 6))
        p = losses.ensemble_predict(rng.dirichlet(np.ones(c)), rng.dirichlet(np.ones(c)))
        assert np.all(p >= -1e-15) and abs(p.sum() - 1.0) < 1e-9
    return "30 random pairs"


@_prop("losses: joint rescaling of logits and temperature leaves profiles fixed")
def _p_argmax_invariance(mutation=None) -> str:
    rng = stream(7, "verify/scale")
    s = rng.standard_normal((4, 3))
    for scale in (2.0, 10.0, 0.5):
        a = losses.classwise_temp_softmax(s, 2.0)
        b = losses.classwise_temp_softmax(scale * s, 2.0 * scale)
        assert np.max(np.abs(a - b)) < 1e-12
    return "three scales"


@_prop("client: adam with decoupled decay matches a scalar-loop reference")
def _p_adamw(mutation=None) -> str:
    cfg = OptimizerConfig()
    opt = AdamW(lr0=0.01, gamma=1.0, cfg=cfg)
    params = {"toy.weight": np.array([1.0, -2.0])}
    ref = params["toy.weight"].copy()
    m = np.zeros(2)
    v = np.zeros(2)
    rng = stream(7, "verify/adamw")
    for t in range(1, 101):
        g = rng.standard_normal(2)
        opt.step(params, {"toy.weight": g.copy()})
        for i in range(2):
            m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * g[i]
            v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * g[i] * g[i]
            mh = m[i] / (1 - cfg.beta1**t)
            vh = v[i] / (1 - cfg.beta2**t)
            ref[i] -= 0.01 * (mh / (np.sqrt(vh) + cfg.eps) + cfg.weight_decay * ref[i])
    gap = np.max(np.abs(params["toy.weight"] - ref))
    assert gap <= 1e-10, f"divergence {gap}"
    return f"100 steps, max gap {gap:.1e}"


@_prop("client: learning rate after k epochs equals lr0 * gamma**k exactly")
def _p_lr_schedule(mutation=None) -> str:
    opt = AdamW(lr0=5e-4, gamma=0.97, cfg=OptimizerConfig())
    for k in range(25):
        assert opt.lr == 5e-4 * 0.97**k
        opt.advance_epoch()
    return "25 epochs"


@_prop("wire: round trip preserves names, order, and shapes")
def _p_wire_roundtrip(mutation=None) -> str:
    rng = stream(7, "verify/wire")
    tensors = {
        "layer1.weight": rng.standard_normal((5, 4)),
        "layer1.bias": rng.standard_normal(5),
        "layer1.threshold": np.zeros(5),
    }
    out = unpack(pack(tensors))
    assert list(out.keys()) == list(tensors.keys())
    assert all(out[k].shape == tensors[k].shape for k in tensors)
    return "3 tensors"


@_prop("wire: quantization matches the bit-level nearest-even oracle")
def _p_wire_quant(mutation=None) -> str:
    rng = stream(7, "verify/quant")
    values = np.concatenate(
        [
            rng.uniform(-70000, 70000, size=3000),
            rng.uniform(-1, 1, size=3000),
            rng.uniform(-6e-5, 6e-5, size=3000),
        ]
    )
    decoded = unpack(pack({"v": values}))["v"].astype(np.float64)
    for x, got in zip(values, decoded):
        want = quantize_half(min(max(x, -65504.0), 65504.0))
        assert got == want, f"{x}: codec {got} oracle {want}"
    return "9000 values"


@_prop("wire: re-packing an unpacked packet is byte-identical")
def _p_wire_idempotent(mutation=None) -> str:
    rng = stream(7, "verify/idem")
    tensors = {"w": rng.standard_normal((20, 10)), "b": rng.standard_normal(20)}
    first = pack(tensors)
    second = pack(unpack(first))
    assert first.data == second.data
    return "two generations"


@_prop("wire: golden header bytes of the reference fixture")
def _p_wire_golden(mutation=None) -> str:
    payload = encode_payload({"t": np.array([[0.5, -1.25], [2.0, 1.0]])})
    golden = bytes.fromhex(
        "464d433100010000000100017401020000000200000002" "3800bd0040003c00"
    )
    assert payload == golden, payload.hex()
    return f"{len(payload)} bytes"


@_prop("server: mean aggregation matches a scalar loop and ignores order")
def _p_aggregate(mutation=None) -> str:
    rng = stream(7, "verify/agg")
    sets = []
    for cid in range(3):
        sets.append(
            (cid, {"w": rng.standard_normal((3, 2)), "b": rng.standard_normal(3)})
        )
    merged = aggregate(sets)
    for name in ("w", "b"):
        ref = np.zeros_like(sets[0][1][name])
        flat_ref = ref.ravel()
        for i in range(flat_ref.size):
            total = 0.0
            for _, params in sets:
                total += float(params[name].ravel()[i])
            flat_ref[i] = total / len(sets)
        assert np.max(np.abs(merged[name] - ref)) < 1e-12
    shuffled = aggregate([sets[2], sets[0], sets[1]])
    for name in ("w", "b"):
        assert np.array_equal(merged[name], shuffled[name])
    return "3 clients"


@_prop("server: a broadcast equals the global model through one quantization")
def _p_broadcast_bound(mutation=None) -> str:
    rng = stream(7, "verify/bcast")
    params = {"w": rng.uniform(-2, 2, size=(30, 10))}
    received = unpack(pack(params))["w"].astype(np.float64)
    rel = np.abs(received - params["w"]) / np.maximum(np.abs(params["w"]), 2.0**-14)
    assert np.max(rel) <= 2.0**-11 + 1e-15
    return "relative bound 2^-11"


@_prop("datastore: bank write/load round trip is exact")
def _p_bank_roundtrip(mutation=None, tmp_dir=None) -> str:
    import tempfile
    from pathlib import Path

    from .datastore import load_bank, write_bank

    banks, _ = gen_synthetic(2, 6, 3, 12, "rotation", seed=7)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "bank.femb"
        write_bank(banks[0], path)
        loaded = load_bank(path)
    assert loaded.class_names == banks[0].class_names
    assert np.array_equal(loaded.text_features, banks[0].text_features)
    assert np.array_equal(loaded.features, banks[0].features)
    assert np.array_equal(loaded.labels, banks[0].labels)
    return "12 samples"


@_prop("datastore: splits and heterogeneous partitions are exact partitions")
def _p_partition(mutation=None) -> str:
    import warnings

    rng = stream(7, "verify/part")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for trial in range(10):
            n = int(rng.integers(20, 80))
            c = int(rng.integers(2, 5))
            bank = EmbeddingBank(
                class_names=[f"c{i}" for i in range(c)],
                text_features=rng.standard_normal((c, 4)),
                features=rng.standard_normal((n, 4)),
                labels=rng.integers(0, c, size=n),
            )
            train, val, test = split_bank(bank, SplitSpec(seed=trial))
            split_rows = sorted(
                row.tobytes() for b in (train, val, test) for row in b.features
            )
            parts = dirichlet_partition(bank, 3, 0.5, seed=trial)
            part_rows = sorted(row.tobytes() for p in parts for row in p.features)
            original = sorted(row.tobytes() for row in bank.features)
            assert split_rows == original
            assert part_rows == original
    return "10 random banks"


@_prop("datastore: per-class train share stays within one sample of 60%")
def _p_stratified(mutation=None) -> str:
    rng = stream(7, "verify/strat")
    for trial in range(10):
        c = int(rng.integers(2, 5))
        counts = rng.integers(5, 40, size=c)
        labels = np.concatenate([np.full(k, i) for i, k in enumerate(counts)])
        n = labels.size
        bank = EmbeddingBank(
            class_names=[f"c{i}" for i in range(c)],
            text_features=rng.standard_normal((c, 4)),
            features=rng.standard_normal((n, 4)),
            labels=labels,
        )
        train, _, _ = split_bank(bank, SplitSpec(seed=trial))
        for i, k in enumerate(counts):
            got = int(np.sum(train.labels == i))
            assert abs(got - 0.6 * k) <= 1.0, f"class {i}: {got} of {k}"
    return "10 random banks"


@_prop("metrics: calibration error vanishes when bins are self-consistent")
def _p_ece(mutation=None) -> str:
    conf = np.full(10, 0.8)
    correct = np.array([1, 1, 1, 1, 1, 1, 1, 1, 0, 0], dtype=float)
    assert abs(metrics.ece(conf, correct)) < 1e-12
    assert metrics.ece(np.ones(4), np.ones(4)) == 0.0
    return "hand cases"


@_prop("metrics: macro F1 is invariant under consistent class relabeling")
def _p_f1_relabel(mutation=None) -> str:
    rng = stream(7, "verify/f1")
    for _ in range(20):
        c = int(rng.integers(2, 5))
        n = int(rng.integers(5, 30))
        labels = rng.integers(0, c, size=n)
        preds = rng.integers(0, c, size=n)
        perm = rng.permutation(c)
        a = metrics.macro_f1(preds, labels, c)
        b = metrics.macro_f1(perm[preds], perm[labels], c)
        assert abs(a - b) < 1e-12
    return "20 random cases"


@_prop("metrics: exact signed-rank null distribution sums to one")
def _p_wilcoxon_pmf(mutation=None) -> str:
    rng = stream(7, "verify/wilcoxon")
    for _ in range(10):
        n = int(rng.integers(5, 12))
        diffs = np.round(rng.standard_normal(n), 1)
        diffs[diffs == 0] = 0.1
        ranks, _ = metrics._signed_ranks(diffs)
        pmf = metrics.exact_null_pmf(ranks)
        assert abs(sum(pmf.values()) - 1.0) < 1e-12
    return "10 random rank sets"


@_prop("experiment: a tiny run is bitwise reproducible")
def _p_experiment_determinism(mutation=None) -> str:
    cfg = ExperimentConfig(
        synthetic=SyntheticSpec(clients=2, dim=8, classes=2, n_per_client=30),
        rounds=2,
        seed=7,
        train=TrainConfig(hidden_dim=16),
    )
    a = run_experiment(cfg)
    b = run_experiment(cfg)
    assert [r.to_dict() for r in a.history] == [r.to_dict() for r in b.history]
    assert a.client_test == b.client_test and a.global_test == b.global_test
    return "2 clients, 2 rounds"


@_prop("experiment: logged bytes equal the packets actually exchanged")
def _p_comm_accounting(mutation=None) -> str:
    cfg = ExperimentConfig(
        synthetic=SyntheticSpec(clients=2, dim=8, classes=2, n_per_client=30),
        rounds=2,
        seed=7,
        train=TrainConfig(hidden_dim=16),
    )
    result = run_experiment(cfg)
    for report, entry in zip(result.history, result.server.comm_log):
        assert entry["round"] == report.round
        for record in report.clients:
            assert record.bytes_down == entry["bytes_down_per_client"]
            assert record.bytes_up == entry["bytes_up"][record.client_id]
    return "2 rounds cross-checked"


def run_all(mutation: str | None = None, out: Callable[[str], None] = print) -> bool:
    """Execute every property; returns True iff all passed."""
    failures = 0
    for name, fn in _PROPERTIES:
        try:
            detail = fn(mutation=mutation)
            out(f"PASS  {name} ({detail})")
        except AssertionError as exc:
            failures += 1
            out(f"FAIL  {name}: {exc}")
        except Exception as exc:  # property harness bug or genuine defect
            failures += 1
            out(f"FAIL  {name}: {type(exc).__name__}: {exc}")
    out(f"{len(_PROPERTIES) - failures}/{len(_PROPERTIES)} properties passed")
    return failures == 0
