"""Sinusoidal MLP spatial fields.

A ``SirenField`` maps points of an m-dimensional domain to d-dimensional
values through ``hidden_layers`` sine-activated affine layers followed by a
final affine layer.  The first layer's activation frequency (omega0) may
differ from the hidden layers' (omega_hidden).  Fields are evaluated either
plainly (``eval_jet``) or bound to a differentiation tape
(``RecordedField``) when the evaluation participates in a training loss.

Checkpoints are a self-describing ASCII header followed by a flat
little-endian float64 payload (per layer: weights row-major, then biases),
and round-trip bit-exactly.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Jet, Node, Tape, jet_linear, jet_sine

__all__ = [
    "SirenField",
    "RecordedField",
    "init_siren",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_MAGIC = "INSR-CKPT"
CHECKPOINT_VERSION = "v1"


class SirenField:
    """MLP with sine activations on all layers except the last.

    ``layers`` is a list of (W, b) pairs forming the chain
    m -> width -> ... -> width -> d with ``hidden_layers`` sine layers.
    """

    def __init__(self, layers, omega0: float = 30.0, omega_hidden: float | None = None):
        self.layers = [
            (np.asarray(W, dtype=np.float64), np.asarray(b, dtype=np.float64))
            for W, b in layers
        ]
        for W, b in self.layers:
            if W.ndim != 2 or b.shape != (W.shape[0],):
                raise ValueError("inconsistent layer shapes")
        for (W0, _), (W1, _) in zip(self.layers, self.layers[1:]):
            if W1.shape[1] != W0.shape[0]:
                raise ValueError("layer chain widths do not match")
        self.omega0 = float(omega0)
        self.omega_hidden = float(omega0 if omega_hidden is None else omega_hidden)

    # ------------------------------------------------------------- structure

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1][0].shape[0]

    @property
    def hidden_layers(self) -> int:
        return len(self.layers) - 1

    @property
    def width(self) -> int:
        return self.layers[0][0].shape[0] if len(self.layers) > 1 else 0

    @property
    def parameter_count(self) -> int:
        return sum(W.size + b.size for W, b in self.layers)

    @property
    def memory_bytes(self) -> int:
        """Bytes to store the field at float64: parameter_count * 8."""
        return self.parameter_count * 8

    def clone(self) -> "SirenField":
        return SirenField(
            [(W.copy(), b.copy()) for W, b in self.layers],
            omega0=self.omega0,
            omega_hidden=self.omega_hidden,
        )

    # ------------------------------------------------------- flat weight view

    def get_flat(self) -> np.ndarray:
        """All weights as one vector: per layer, W row-major then b."""
        return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in self.layers])

    def set_flat(self, theta: np.ndarray) -> None:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.parameter_count,):
            raise ValueError(
                f"flat vector length {theta.shape} != parameter count "
                f"{self.parameter_count}"
            )
        k = 0
        for W, b in self.layers:
            W[...] = theta[k : k + W.size].reshape(W.shape)
            k += W.size
            b[...] = theta[k : k + b.size]
            k += b.size

    def _omega(self, layer_index: int) -> float:
        return self.omega0 if layer_index == 0 else self.omega_hidden

    # ------------------------------------------------------------- evaluation

    def eval_jet(self, x, order: int = 0) -> Jet:
        """Evaluate at points x (N, m) or a single point (m,).

        order 0 gives values only; 1 adds the spatial Jacobian; 2 adds the
        spatial Hessian diagonal.
        """
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.input_dim:
            raise ValueError(
                f"points have dimension {x.shape[1]}, field expects {self.input_dim}"
            )
        h = Jet.seed(x, order)
        last = len(self.layers) - 1
        for i, (W, b) in enumerate(self.layers):
            h = jet_linear(W, b, h)
            if i < last:
                h = jet_sine(self._omega(i), h)
        return h

    def __call__(self, x) -> np.ndarray:
        return self.eval_jet(x, order=0).value


class RecordedField:
    """A field bound to a tape: jet evaluations carry weight gradients."""

    def __init__(self, tape: Tape, field: SirenField):
        self.tape = tape
        self.field = field
        self.layer_nodes = [(tape.param(W), tape.param(b)) for W, b in field.layers]

    def jet(self, x, order: int = 1) -> Node:
        tape = self.tape
        h = tape.jet_input(x, order)
        last = len(self.layer_nodes) - 1
        for i, (Wn, bn) in enumerate(self.layer_nodes):
            h = tape.jet_linear(Wn, bn, h)
            if i < last:
                h = tape.jet_sine(self.field._omega(i), h)
        return h

    def grad_flat(self) -> np.ndarray:
        """Collect d loss / d theta after a backward pass, in get_flat order."""
        parts = []
        for Wn, bn in self.layer_nodes:
            gW = Wn.adj if Wn.adj is not None else np.zeros_like(Wn.out)
            gb = bn.adj if bn.adj is not None else np.zeros_like(bn.out)
            parts.append(gW.ravel())
            parts.append(gb)
        return np.concatenate(parts)


def init_siren(
    input_dim: int,
    output_dim: int,
    hidden_layers: int,
    width: int,
    omega0: float = 30.0,
    seed: int = 0,
    omega_hidden: float | None = None,
) -> SirenField:
    """SIREN initialization: first layer U(-1/m, 1/m); deeper layers
    U(-sqrt(6/fan_in)/omega_hidden, +sqrt(6/fan_in)/omega_hidden); zero biases.
    Deterministic for a fixed seed."""
    if hidden_layers < 1 or width < 1:
        raise ValueError("need at least one hidden layer of width >= 1")
    w_h = float(omega0 if omega_hidden is None else omega_hidden)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    sizes = [input_dim] + [width] * hidden_layers + [output_dim]
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
        if i == 0:
            bound = 1.0 / fan_in
        else:
            bound = np.sqrt(6.0 / fan_in) / w_h
        W = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        b = np.zeros(fan_out)
        layers.append((W, b))
    return SirenField(layers, omega0=omega0, omega_hidden=w_h)


def save_checkpoint(
    field: SirenField, path, *, step: int = 0, dt: float = 0.0, seed: int = 0
) -> None:
    """Write header + flat float64 payload; see module docstring."""
    flat = field.get_flat()
    header = [
        f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}",
        f"input_dim={field.input_dim}",
        f"output_dim={field.output_dim}",
        f"hidden_layers={field.hidden_layers}",
        f"width={field.width}",
        f"omega0={field.omega0!r}",
        f"omega_hidden={field.omega_hidden!r}",
        f"step={int(step)}",
        f"dt={float(dt)!r}",
        f"seed={int(seed)}",
        f"param_count={flat.size}",
        "END",
    ]
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(flat.astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[SirenField, dict]:
    """Re-create a field from a checkpoint; validates the header before the
    payload is touched.  Returns (field, header_metadata)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    nl = raw.find(b"\n")
    if nl < 0:
        raise ValueError("checkpoint has no header")
    magic = raw[:nl].decode("ascii", errors="replace").split()
    if len(magic) != 2 or magic[0] != CHECKPOINT_MAGIC:
        raise ValueError(f"not a checkpoint file: {magic}")
    if magic[1] != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {magic[1]!r}")
    meta: dict = {}
    pos = nl + 1
    while True:
        nl = raw.find(b"\n", pos)
        if nl < 0:
            raise ValueError("checkpoint header not terminated")
        line = raw[pos:nl].decode("ascii")
        pos = nl + 1
        if line == "END":
            break
        key, _, val = line.partition("=")
        if not _:
            raise ValueError(f"malformed header line {line!r}")
        meta[key] = val
    try:
        m = int(meta["input_dim"])
        d = int(meta["output_dim"])
        alpha = int(meta["hidden_layers"])
        beta = int(meta["width"])
        omega0 = float(meta["omega0"])
        omega_hidden = float(meta["omega_hidden"])
        count = int(meta["param_count"])
        meta_out = {
            "step": int(meta.get("step", 0)),
            "dt": float(meta.get("dt", 0.0)),
            "seed": int(meta.get("seed", 0)),
        }
    except (KeyError, ValueError) as exc:
        raise ValueError(f"invalid checkpoint header: {exc}") from exc
    sizes = [m] + [beta] * alpha + [d]
    expected = sum(a * b + b for a, b in zip(sizes, sizes[1:]))
    if count != expected:
        raise ValueError(
            f"header param_count {count} inconsistent with architecture ({expected})"
        )
    payload = raw[pos:]
    if len(payload) != count * 8:
        raise ValueError(
            f"payload holds {len(payload)} bytes, expected {count * 8}"
        )
    flat = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    layers = [
        (np.zeros((b, a)), np.zeros(b)) for a, b in zip(sizes, sizes[1:])
    ]
    field = SirenField(layers, omega0=omega0, omega_hidden=omega_hidden)
    field.set_flat(flat)
    return field, meta_out
