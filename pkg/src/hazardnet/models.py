"""Risk functions psi: linear, MLP, and LSTM over covariate sequences.

All arithmetic is float64 numpy with hand-written backward passes, so
gradients can be checked against central finite differences directly.
Evaluation mode (training=False) is fully deterministic; training mode draws
dropout masks from a caller-supplied Generator, one mask per forward call.

Checkpoint files use the "HZRD" layout documented in docs/formats.md: magic,
version u16, variant tag u8, a per-variant dimension header, then parameter
blocks as little-endian float64. Round trips are bit-identical.
"""

from __future__ import annotations

import struct

import numpy as np

from .core import CovariateSequence
from .errors import DataError, NumericError

CHECKPOINT_MAGIC = b"HZRD"
CHECKPOINT_VERSION = 1
_VARIANT_TAGS = {"linear": 1, "mlp": 2, "lstm": 3}
_TAG_VARIANTS = {v: k for k, v in _VARIANT_TAGS.items()}


def glorot_uniform(fan_in: int, fan_out: int, shape, rng: np.random.Generator) -> np.ndarray:
    """uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out))."""
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


def apply_dropout(vector: np.ndarray, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted dropout: zero each component w.p. rate, scale survivors by 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    vector = np.asarray(vector, dtype=np.float64)
    if rate == 0.0:
        return vector.copy()
    keep = rng.random(vector.shape) >= rate
    return vector * keep / (1.0 - rate)


def _dropout_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Pre-scaled multiplicative mask; identity when rate is 0."""
    if rate == 0.0:
        return np.ones(shape)
    return (rng.random(shape) >= rate) / (1.0 - rate)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class LinearRiskModel:
    """psi = beta . flatten(seq), the classical proportional-hazards score."""

    variant = "linear"

    def __init__(self, dimension: int, sequence_length: int, beta: np.ndarray | None = None):
        self.dimension = int(dimension)
        self.sequence_length = int(sequence_length)
        p = self.dimension * self.sequence_length
        if beta is None:
            beta = np.zeros(p)
        beta = np.asarray(beta, dtype=np.float64).reshape(-1)
        if beta.size != p:
            raise DataError("dimension_mismatch", f"beta has size {beta.size}, expected {p}")
        self.beta = beta
        self.dropout_rate = 0.0
        self.training = False

    def parameters(self) -> dict[str, np.ndarray]:
        return {"beta": self.beta}

    def num_parameters(self) -> int:
        return self.beta.size

    def forward_batch(self, X: np.ndarray, present: np.ndarray, rng=None):
        n = X.shape[0]
        flat = X.reshape(n, -1)
        if flat.shape[1] != self.beta.size:
            raise DataError("dimension_mismatch", f"input width {flat.shape[1]} != {self.beta.size}")
        psi = flat @ self.beta
        if not np.all(np.isfinite(psi)):
            raise NumericError("non-finite risk score in linear model")
        return psi, {"flat": flat}

    def backward_batch(self, cache, dpsi: np.ndarray) -> dict[str, np.ndarray]:
        grad = cache["flat"].T @ dpsi
        if not np.all(np.isfinite(grad)):
            raise NumericError("non-finite gradient in linear model (block beta)")
        return {"beta": grad}


class MLPRiskModel:
    """Flattened sequence through affine+ReLU hidden layers to a scalar head.

    Dropout (training mode) is applied to the flattened input and after each
    hidden activation, never after the final affine map.
    """

    variant = "mlp"

    def __init__(
        self,
        dimension: int,
        sequence_length: int,
        hidden=(128,),
        dropout_rate: float = 0.6,
        rng: np.random.Generator | None = None,
    ):
        if not 0.0 <= dropout_rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {dropout_rate}")
        self.dimension = int(dimension)
        self.sequence_length = int(sequence_length)
        self.hidden = tuple(int(h) for h in hidden)
        self.dropout_rate = float(dropout_rate)
        self.training = False
        rng = rng or np.random.default_rng(0)
        widths = [self.dimension * self.sequence_length, *self.hidden, 1]
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            self.weights.append(glorot_uniform(fan_in, fan_out, (fan_out, fan_in), rng))
            self.biases.append(np.zeros(fan_out))

    @property
    def widths(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def parameters(self) -> dict[str, np.ndarray]:
        out = {}
        for k in range(len(self.weights)):
            out[f"W{k}"] = self.weights[k]
            out[f"b{k}"] = self.biases[k]
        return out

    def num_parameters(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def forward_batch(self, X: np.ndarray, present: np.ndarray, rng=None):
        n = X.shape[0]
        act = X.reshape(n, -1)
        if act.shape[1] != self.weights[0].shape[1]:
            raise DataError(
                "dimension_mismatch", f"input width {act.shape[1]} != {self.weights[0].shape[1]}"
            )
        use_dropout = self.training and self.dropout_rate > 0.0
        if use_dropout and rng is None:
            raise ValueError("training-mode forward needs an rng for dropout")
        masks = []
        inputs = []
        relu_gates = []
        if use_dropout:
            m = _dropout_mask(act.shape, self.dropout_rate, rng)
            act = act * m
            masks.append(m)
        else:
            masks.append(None)
        last = len(self.weights) - 1
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(act)
            z = act @ W.T + b
            if not np.all(np.isfinite(z)):
                raise NumericError(f"non-finite activation in mlp layer {k}")
            if k < last:
                gate = z > 0
                relu_gates.append(gate)
                act = z * gate
                if use_dropout:
                    m = _dropout_mask(act.shape, self.dropout_rate, rng)
                    act = act * m
                    masks.append(m)
                else:
                    masks.append(None)
            else:
                act = z
        psi = act[:, 0]
        return psi, {"inputs": inputs, "relu_gates": relu_gates, "masks": masks}

    def backward_batch(self, cache, dpsi: np.ndarray) -> dict[str, np.ndarray]:
        inputs = cache["inputs"]
        relu_gates = cache["relu_gates"]
        masks = cache["masks"]
        grads: dict[str, np.ndarray] = {}
        delta = dpsi[:, None]
        for k in range(len(self.weights) - 1, -1, -1):
            grads[f"W{k}"] = delta.T @ inputs[k]
            grads[f"b{k}"] = delta.sum(axis=0)
            if k == 0:
                break
            delta = delta @ self.weights[k]
            if masks[k] is not None:
                delta = delta * masks[k]
            delta = delta * relu_gates[k - 1]
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient in mlp (block {name})")
        return grads


class LSTMRiskModel:
    """Single-layer LSTM over the sequence (oldest slot first) with a scalar head.

    Gate blocks in W, U, b are stacked in the order input, forget, output,
    candidate. The forget-gate bias starts at 1.0. Dropout (training mode)
    acts only on the final hidden state before the head. With mask_aware=True
    padded slots leave the hidden and cell state untouched; by default padded
    slots are fed through as ordinary zero vectors.
    """

    variant = "lstm"

    def __init__(
        self,
        dimension: int,
        sequence_length: int,
        hidden_size: int = 64,
        dropout_rate: float = 0.6,
        mask_aware: bool = False,
        rng: np.random.Generator | None = None,
    ):
        if not 0.0 <= dropout_rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {dropout_rate}")
        self.dimension = int(dimension)
        self.sequence_length = int(sequence_length)
        self.hidden_size = int(hidden_size)
        self.dropout_rate = float(dropout_rate)
        self.mask_aware = bool(mask_aware)
        self.training = False
        rng = rng or np.random.default_rng(0)
        d, h = self.dimension, self.hidden_size
        self.W = np.vstack([glorot_uniform(d, h, (h, d), rng) for _ in range(4)])
        self.U = np.vstack([glorot_uniform(h, h, (h, h), rng) for _ in range(4)])
        self.b = np.zeros(4 * h)
        self.b[h : 2 * h] = 1.0
        self.head_w = glorot_uniform(h, 1, (h,), rng)
        self.head_b = np.zeros(1)

    def parameters(self) -> dict[str, np.ndarray]:
        return {"W": self.W, "U": self.U, "b": self.b, "head_w": self.head_w, "head_b": self.head_b}

    def num_parameters(self) -> int:
        return self.W.size + self.U.size + self.b.size + self.head_w.size + self.head_b.size

    def forward_batch(self, X: np.ndarray, present: np.ndarray, rng=None):
        n, L, d = X.shape
        if d != self.dimension or L != self.sequence_length:
            raise DataError(
                "dimension_mismatch",
                f"input is {L}x{d}, model expects {self.sequence_length}x{self.dimension}",
            )
        h_size = self.hidden_size
        use_dropout = self.training and self.dropout_rate > 0.0
        if use_dropout and rng is None:
            raise ValueError("training-mode forward needs an rng for dropout")
        h = np.zeros((n, h_size))
        c = np.zeros((n, h_size))
        steps = []
        for l in range(L):
            x = X[:, l, :]
            z = x @ self.W.T + h @ self.U.T + self.b
            if not np.all(np.isfinite(z)):
                raise NumericError(f"non-finite activation in lstm step {l}")
            gi = _sigmoid(z[:, :h_size])
            gf = _sigmoid(z[:, h_size : 2 * h_size])
            go = _sigmoid(z[:, 2 * h_size : 3 * h_size])
            gg = np.tanh(z[:, 3 * h_size :])
            c_new = gf * c + gi * gg
            tc = np.tanh(c_new)
            h_new = go * tc
            if self.mask_aware:
                m = present[:, l].astype(np.float64)[:, None]
                h_next = m * h_new + (1.0 - m) * h
                c_next = m * c_new + (1.0 - m) * c
            else:
                m = None
                h_next, c_next = h_new, c_new
            steps.append(
                {"x": x, "h_prev": h, "c_prev": c, "i": gi, "f": gf, "o": go, "g": gg, "tc": tc, "m": m}
            )
            h, c = h_next, c_next
        if use_dropout:
            mask = _dropout_mask(h.shape, self.dropout_rate, rng)
            hd = h * mask
        else:
            mask = None
            hd = h
        psi = hd @ self.head_w + self.head_b[0]
        if not np.all(np.isfinite(psi)):
            raise NumericError("non-finite risk score in lstm head")
        return psi, {"steps": steps, "hd": hd, "mask": mask}

    def backward_batch(self, cache, dpsi: np.ndarray) -> dict[str, np.ndarray]:
        steps = cache["steps"]
        hd = cache["hd"]
        mask = cache["mask"]
        grads = {
            "W": np.zeros_like(self.W),
            "U": np.zeros_like(self.U),
            "b": np.zeros_like(self.b),
            "head_w": hd.T @ dpsi,
            "head_b": np.array([dpsi.sum()]),
        }
        dh = dpsi[:, None] * self.head_w[None, :]
        if mask is not None:
            dh = dh * mask
        dc = np.zeros_like(dh)
        for step in reversed(steps):
            if step["m"] is not None:
                m = step["m"]
                dh_new = dh * m
                dc_new = dc * m
                dh_skip = dh * (1.0 - m)
                dc_skip = dc * (1.0 - m)
            else:
                dh_new, dc_new = dh, dc
                dh_skip = dc_skip = 0.0
            gi, gf, go, gg, tc = step["i"], step["f"], step["o"], step["g"], step["tc"]
            do = dh_new * tc
            dct = dh_new * go * (1.0 - tc * tc) + dc_new
            di = dct * gg
            dg = dct * gi
            df = dct * step["c_prev"]
            dz = np.hstack(
                [
                    di * gi * (1.0 - gi),
                    df * gf * (1.0 - gf),
                    do * go * (1.0 - go),
                    dg * (1.0 - gg * gg),
                ]
            )
            grads["W"] += dz.T @ step["x"]
            grads["U"] += dz.T @ step["h_prev"]
            grads["b"] += dz.sum(axis=0)
            dh = dz @ self.U + dh_skip
            dc = dct * gf + dc_skip
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient in lstm (block {name})")
        return grads


def build_model(
    kind: str,
    dimension: int,
    sequence_length: int,
    rng: np.random.Generator | None = None,
    hidden=(128,),
    hidden_size: int = 64,
    dropout_rate: float = 0.6,
    mask_aware: bool = False,
):
    """Construct a risk model by variant name."""
    if kind == "linear":
        return LinearRiskModel(dimension, sequence_length)
    if kind == "mlp":
        return MLPRiskModel(dimension, sequence_length, hidden, dropout_rate, rng)
    if kind == "lstm":
        return LSTMRiskModel(dimension, sequence_length, hidden_size, dropout_rate, mask_aware, rng)
    raise ValueError(f"unknown model kind {kind!r}")


def _check_seq(model, seq: CovariateSequence) -> None:
    if seq.dimension != model.dimension or seq.length != model.sequence_length:
        raise DataError(
            "dimension_mismatch",
            f"sequence is {seq.length}x{seq.dimension}, model expects "
            f"{model.sequence_length}x{model.dimension}",
        )


def risk_forward(model, seq: CovariateSequence, rng=None) -> float:
    """Scalar log-risk psi for one sequence (deterministic unless model.training)."""
    _check_seq(model, seq)
    psi, _ = model.forward_batch(seq.vectors[None, :, :], seq.present_mask[None, :], rng)
    return float(psi[0])


def risk_gradients(model, seq: CovariateSequence, upstream: float, rng=None) -> dict[str, np.ndarray]:
    """d psi / d theta for every parameter block, scaled by upstream."""
    _check_seq(model, seq)
    _, cache = model.forward_batch(seq.vectors[None, :, :], seq.present_mask[None, :], rng)
    return model.backward_batch(cache, np.array([float(upstream)]))


def risk_scores(model, cohort) -> np.ndarray:
    """Evaluation-mode psi for every subject in a cohort."""
    was_training = model.training
    model.training = False
    try:
        psi, _ = model.forward_batch(cohort.covariate_tensor(), cohort.present_matrix())
    finally:
        model.training = was_training
    return psi


def get_state(model) -> dict[str, np.ndarray]:
    return {name: arr.copy() for name, arr in model.parameters().items()}


def set_state(model, state: dict[str, np.ndarray]) -> None:
    for name, arr in model.parameters().items():
        arr[...] = state[name]


def save_model(model, path) -> None:
    """Write an HZRD checkpoint; load_model(path) restores it bit-identically."""
    blocks = []
    if model.variant == "linear":
        header = struct.pack("<II", model.dimension, model.sequence_length)
        blocks = [model.beta]
    elif model.variant == "mlp":
        widths = model.widths
        header = struct.pack(
            "<III", model.dimension, model.sequence_length, len(widths)
        ) + struct.pack(f"<{len(widths)}I", *widths) + struct.pack("<d", model.dropout_rate)
        for W, b in zip(model.weights, model.biases):
            blocks.extend([W, b])
    elif model.variant == "lstm":
        header = struct.pack(
            "<IIIBd",
            model.dimension,
            model.sequence_length,
            model.hidden_size,
            1 if model.mask_aware else 0,
            model.dropout_rate,
        )
        blocks = [model.W, model.U, model.b, model.head_w, model.head_b]
    else:
        raise ValueError(f"unknown variant {model.variant!r}")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<HB", CHECKPOINT_VERSION, _VARIANT_TAGS[model.variant]))
        fh.write(header)
        for arr in blocks:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_exact(fh, n: int, path) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise DataError("corrupt_header", f"{path}: truncated checkpoint")
    return buf


def load_model(path):
    """Read an HZRD checkpoint written by save_model."""
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, path) != CHECKPOINT_MAGIC:
            raise DataError("corrupt_header", f"{path}: not a model checkpoint")
        version, tag = struct.unpack("<HB", _read_exact(fh, 3, path))
        if version != CHECKPOINT_VERSION:
            raise DataError("unsupported_version", f"{path}: checkpoint version {version}")
        if tag not in _TAG_VARIANTS:
            raise DataError("corrupt_header", f"{path}: unknown model variant tag {tag}")
        variant = _TAG_VARIANTS[tag]

        def block(shape):
            size = int(np.prod(shape))
            return np.frombuffer(_read_exact(fh, 8 * size, path), dtype="<f8").reshape(shape).copy()

        if variant == "linear":
            d, L = struct.unpack("<II", _read_exact(fh, 8, path))
            model = LinearRiskModel(d, L, block((d * L,)))
        elif variant == "mlp":
            d, L, n_widths = struct.unpack("<III", _read_exact(fh, 12, path))
            widths = struct.unpack(f"<{n_widths}I", _read_exact(fh, 4 * n_widths, path))
            (rate,) = struct.unpack("<d", _read_exact(fh, 8, path))
            if widths[0] != d * L or widths[-1] != 1:
                raise DataError("corrupt_header", f"{path}: inconsistent mlp widths {widths}")
            model = MLPRiskModel(d, L, widths[1:-1], rate)
            for k, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
                model.weights[k] = block((fan_out, fan_in))
                model.biases[k] = block((fan_out,))
        else:
            d, L, h, masked, rate = struct.unpack("<IIIBd", _read_exact(fh, 21, path))
            model = LSTMRiskModel(d, L, h, rate, bool(masked))
            model.W = block((4 * h, d))
            model.U = block((4 * h, h))
            model.b = block((4 * h,))
            model.head_w = block((h,))
            model.head_b = block((1,))
        if fh.read(1):
            raise DataError("corrupt_header", f"{path}: trailing bytes after parameter blocks")
    return model
