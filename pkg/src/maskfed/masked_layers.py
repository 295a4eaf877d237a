"""Linear layers gated by learnable per-row thresholds, composed into the
communicated feature adapter and the private local classifier.

Each layer derives a binary row mask from the mean magnitude of its weight
rows: rows whose magnitude falls below the row's threshold are zeroed in both
the weight matrix and the bias. The hard mask is used in every real forward
pass; a piecewise-linear relaxation (slope one inside a window around the
threshold) defines the gradients that let thresholds learn, and doubles as the
differentiable target for finite-difference checks. Masks are recomputed from
the current weights on every call and are never serialized.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import InvalidInputError
from .numerics import Array


def mean_magnitude(weight: Array) -> Array:
    """Per-row mean absolute weight, the quantity compared against thresholds."""
    weight = np.asarray(weight, dtype=np.float64)
    if weight.size == 0:
        raise InvalidInputError("mean_magnitude of an empty matrix")
    return np.mean(np.abs(weight), axis=1)


def compute_mask(magnitude: Array, threshold: Array) -> Array:
    """Binary row mask: 1 where magnitude >= threshold (boundary stays on)."""
    magnitude = np.asarray(magnitude, dtype=np.float64)
    threshold = np.asarray(threshold, dtype=np.float64)
    if magnitude.shape != threshold.shape:
        raise InvalidInputError("magnitude and threshold lengths differ")
    return (magnitude >= threshold).astype(np.float64)


def relaxed_mask(magnitude: Array, threshold: Array, window: float) -> Array:
    """Surrogate mask: identical to the hard mask outside the window, and an
    affine ramp of slope one inside it. Only used where gradients are needed.
    """
    d = magnitude - threshold
    return np.where(d > window, 1.0, np.where(d < -window, 0.0, 0.5 + d))


@dataclass
class LayerCache:
    """Intermediate state captured by a forward pass for the backward pass."""

    x: Array
    affine: Array      # pre-mask W x + b, per sample
    mask: Array        # the row gate actually applied (hard or relaxed)
    in_window: Array   # rows whose threshold surrogate is active
    relaxed: bool


@dataclass
class LayerGrads:
    weight: Array
    bias: Array
    threshold: Array
    x: Array


@dataclass
class MaskedLinear:
    """Affine layer whose output rows are switched off by learnable thresholds.

    With ``use_mask=False`` the layer degrades to a plain affine map and its
    thresholds receive zero gradient.
    """

    weight: Array
    bias: Array
    threshold: Array
    mask_window: float = 1.0
    use_mask: bool = True

    @classmethod
    def create(
        cls,
        n_out: int,
        n_in: int,
        rng: np.random.Generator,
        mask_window: float = 1.0,
        use_mask: bool = True,
    ) -> "MaskedLinear":
        bound = 1.0 / np.sqrt(n_in)
        weight = rng.uniform(-bound, bound, size=(n_out, n_in))
        return cls(
            weight=weight,
            bias=np.zeros(n_out),
            threshold=np.zeros(n_out),
            mask_window=mask_window,
            use_mask=use_mask,
        )

    @property
    def n_out(self) -> int:
        return self.weight.shape[0]

    @property
    def n_in(self) -> int:
        return self.weight.shape[1]

    def mask(self) -> Array:
        if not self.use_mask:
            return np.ones(self.n_out)
        return compute_mask(mean_magnitude(self.weight), self.threshold)

    def forward(self, x: Array, relaxed: bool = False) -> tuple[Array, LayerCache]:
        """Apply the row-masked affine map to a batch ``x`` of shape (B, n_in)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise InvalidInputError(
                f"expected input of shape (B, {self.n_in}), got {x.shape}"
            )
        affine = x @ self.weight.T + self.bias
        if self.use_mask:
            u = mean_magnitude(self.weight)
            mask = (
                relaxed_mask(u, self.threshold, self.mask_window)
                if relaxed
                else compute_mask(u, self.threshold)
            )
            in_window = (np.abs(u - self.threshold) <= self.mask_window).astype(
                np.float64
            )
        else:
            mask = np.ones(self.n_out)
            in_window = np.zeros(self.n_out)
        return affine * mask, LayerCache(x, affine, mask, in_window, relaxed)

    def backward(self, cache: LayerCache, dy: Array) -> LayerGrads:
        """Gradients of the (possibly relaxed) forward pass.

        Weight and bias gradients flow through surviving rows; threshold
        gradients use the windowed surrogate, which also feeds back into the
        weights through the row-magnitude dependency.
        """
        dy = np.asarray(dy, dtype=np.float64)
        d_affine = dy * cache.mask
        d_weight = d_affine.T @ cache.x
        d_bias = d_affine.sum(axis=0)
        dx = d_affine @ self.weight
        d_threshold = np.zeros(self.n_out)
        if self.use_mask:
            # d mask / d threshold = -1 and d mask / d magnitude = +1 in-window
            row_sens = (dy * cache.affine).sum(axis=0) * cache.in_window
            d_threshold = -row_sens
            d_weight = d_weight + row_sens[:, None] * np.sign(self.weight) / self.n_in
        return LayerGrads(d_weight, d_bias, d_threshold, dx)


def _sigmoid(z: Array) -> Array:
    # branch on sign so neither exp overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class AdapterCache:
    layer1: LayerCache
    pre_act: Array
    layer2: LayerCache
    gate: Array
    x: Array


class FeatureAdapter:
    """Two masked layers producing an elementwise gate in [0, 1]^D over the
    frozen image features; the gated features feed every downstream path.
    This is the only model exchanged with the server.
    """

    def __init__(self, layer1: MaskedLinear, layer2: MaskedLinear):
        self.layer1 = layer1
        self.layer2 = layer2

    @classmethod
    def create(
        cls,
        dim: int,
        rng: np.random.Generator,
        mask_window: float = 1.0,
        use_mask: bool = True,
    ) -> "FeatureAdapter":
        return cls(
            MaskedLinear.create(dim, dim, rng, mask_window, use_mask),
            MaskedLinear.create(dim, dim, rng, mask_window, use_mask),
        )

    @property
    def dim(self) -> int:
        return self.layer1.n_in

    def gate(self, x: Array, relaxed: bool = False) -> tuple[Array, AdapterCache]:
        """The [0,1]-valued gate for a feature batch of shape (B, D)."""
        z1, c1 = self.layer1.forward(x, relaxed)
        h = np.maximum(z1, 0.0)
        z2, c2 = self.layer2.forward(h, relaxed)
        g = _sigmoid(z2)
        return g, AdapterCache(c1, z1, c2, g, x)

    def apply(self, x: Array, relaxed: bool = False) -> tuple[Array, AdapterCache]:
        """Gate the features elementwise: returns gate(x) * x."""
        g, cache = self.gate(x, relaxed)
        return g * x, cache

    def backward(self, cache: AdapterCache, d_gated: Array) -> dict[str, Array]:
        """Parameter gradients given the gradient at the gated features."""
        dg = d_gated * cache.x
        dz2 = dg * cache.gate * (1.0 - cache.gate)
        g2 = self.layer2.backward(cache.layer2, dz2)
        dz1 = g2.x * (cache.pre_act > 0)
        g1 = self.layer1.backward(cache.layer1, dz1)
        return {
            "layer1.weight": g1.weight,
            "layer1.bias": g1.bias,
            "layer1.threshold": g1.threshold,
            "layer2.weight": g2.weight,
            "layer2.bias": g2.bias,
            "layer2.threshold": g2.threshold,
        }

    def _layers(self) -> Iterator[tuple[str, MaskedLinear]]:
        yield "layer1", self.layer1
        yield "layer2", self.layer2

    def params(self) -> dict[str, Array]:
        """Named parameters in canonical order; this order is the wire order."""
        out: dict[str, Array] = {}
        for name, layer in self._layers():
            out[f"{name}.weight"] = layer.weight
            out[f"{name}.bias"] = layer.bias
            out[f"{name}.threshold"] = layer.threshold
        return out

    def set_params(self, params: dict[str, Array]) -> None:
        current = self.params()
        if list(params.keys()) != list(current.keys()):
            raise InvalidInputError(
                f"parameter names {sorted(params)} do not match {sorted(current)}"
            )
        for name, value in params.items():
            value = np.asarray(value, dtype=np.float64)
            if value.shape != current[name].shape:
                raise InvalidInputError(
                    f"shape mismatch for {name}: {value.shape} vs {current[name].shape}"
                )
        for name, layer in self._layers():
            layer.weight = np.array(params[f"{name}.weight"], dtype=np.float64)
            layer.bias = np.array(params[f"{name}.bias"], dtype=np.float64)
            layer.threshold = np.array(params[f"{name}.threshold"], dtype=np.float64)

    def param_count(self) -> int:
        return sum(v.size for v in self.params().values())


@dataclass
class ClassifierCache:
    hidden: LayerCache
    pre_act: Array
    output: LayerCache


class LocalClassifier:
    """Private two-layer classifier over gated features; never aggregated."""

    def __init__(self, hidden: MaskedLinear, output: MaskedLinear):
        self.hidden = hidden
        self.output = output

    @classmethod
    def create(
        cls,
        dim: int,
        hidden_dim: int,
        n_classes: int,
        rng: np.random.Generator,
        mask_window: float = 1.0,
    ) -> "LocalClassifier":
        return cls(
            MaskedLinear.create(hidden_dim, dim, rng, mask_window),
            MaskedLinear.create(n_classes, hidden_dim, rng, mask_window),
        )

    @property
    def n_classes(self) -> int:
        return self.output.n_out

    def forward(self, x: Array, relaxed: bool = False) -> tuple[Array, ClassifierCache]:
        z, ch = self.hidden.forward(x, relaxed)
        h = np.maximum(z, 0.0)
        logits, co = self.output.forward(h, relaxed)
        return logits, ClassifierCache(ch, z, co)

    def backward(
        self, cache: ClassifierCache, d_logits: Array
    ) -> tuple[dict[str, Array], Array]:
        go = self.output.backward(cache.output, d_logits)
        dz = go.x * (cache.pre_act > 0)
        gh = self.hidden.backward(cache.hidden, dz)
        grads = {
            "hidden.weight": gh.weight,
            "hidden.bias": gh.bias,
            "hidden.threshold": gh.threshold,
            "output.weight": go.weight,
            "output.bias": go.bias,
            "output.threshold": go.threshold,
        }
        return grads, gh.x

    def _layers(self) -> Iterator[tuple[str, MaskedLinear]]:
        yield "hidden", self.hidden
        yield "output", self.output

    def params(self) -> dict[str, Array]:
        out: dict[str, Array] = {}
        for name, layer in self._layers():
            out[f"{name}.weight"] = layer.weight
            out[f"{name}.bias"] = layer.bias
            out[f"{name}.threshold"] = layer.threshold
        return out

    def set_params(self, params: dict[str, Array]) -> None:
        current = self.params()
        if list(params.keys()) != list(current.keys()):
            raise InvalidInputError("classifier parameter names do not match")
        for name, layer in self._layers():
            layer.weight = np.array(params[f"{name}.weight"], dtype=np.float64)
            layer.bias = np.array(params[f"{name}.bias"], dtype=np.float64)
            layer.threshold = np.array(params[f"{name}.threshold"], dtype=np.float64)

    def param_count(self) -> int:
        return sum(v.size for v in self.params().values())
