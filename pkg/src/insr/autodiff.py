"""Reverse-mode differentiation over spatial-derivative jets.

The fields in this package are queried not just for values but for spatial
gradients and Hessian diagonals, and the training losses mix all three.
Two pieces live here:

* ``Jet`` -- value / spatial gradient / spatial Hessian diagonal of a batch
  of field evaluations, propagated forward analytically.  Jets are closed
  under linear maps and elementwise activations, so the Hessian diagonal is
  exact without ever materializing a full Hessian (the Laplacian is its
  trace).
* ``Tape`` -- an ordered record of the primitive operations (linear maps,
  sine activations, arithmetic, reductions) applied while assembling a
  scalar loss, with a reverse pass that yields exact gradients with respect
  to every registered parameter array, including paths through the grad and
  hess_diag components.

Derivative components are stored direction-major, shape (m, N, d), so every
layer update and every weight contraction is one contiguous GEMM per input
direction instead of a batch of N tiny ones; ``Jet.jacobian()`` exposes the
conventional per-point (N, d, m) view.

All arithmetic is float64.  A tape is single-owner: record, call
``backward`` once, discard.  Gradient accumulation follows the fixed
reverse order of the recorded nodes, so results are bit-reproducible for a
fixed sample order.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Jet", "Node", "Tape", "jet_linear", "jet_sine", "backward"]


class Jet:
    """Batched (value, grad, hess_diag) bundle for a d-valued field of m inputs.

    value has shape (N, d); grad and hess_diag, when present, are stored
    direction-major with shape (m, N, d): grad[i, n, k] = d value_k / d x_i
    at point n.  Per point this carries the d x m Jacobian and the d x m
    second-derivative diagonal; use :meth:`jacobian` /
    :meth:`hessian_diagonal` for (N, d, m) views.
    """

    __slots__ = ("value", "grad", "hess_diag")

    def __init__(self, value, grad=None, hess_diag=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None if grad is None else np.asarray(grad, dtype=np.float64)
        self.hess_diag = (
            None if hess_diag is None else np.asarray(hess_diag, dtype=np.float64)
        )
        if self.hess_diag is not None and self.grad is None:
            raise ValueError("hess_diag requires grad to be present")
        for arr in (self.grad, self.hess_diag):
            if arr is not None and (arr.ndim != 3 or arr.shape[1:] != self.value.shape):
                raise ValueError(
                    f"jet component shape {arr.shape} inconsistent with "
                    f"value shape {self.value.shape}"
                )
        if self.grad is not None and self.hess_diag is not None:
            if self.grad.shape != self.hess_diag.shape:
                raise ValueError("grad and hess_diag shapes differ")

    @property
    def order(self) -> int:
        if self.hess_diag is not None:
            return 2
        if self.grad is not None:
            return 1
        return 0

    def jacobian(self) -> np.ndarray:
        """Per-point Jacobian view, shape (N, d, m)."""
        if self.grad is None:
            raise ValueError("jet carries no gradient (order 0)")
        return np.moveaxis(self.grad, 0, -1)

    def hessian_diagonal(self) -> np.ndarray:
        """Per-point Hessian-diagonal view, shape (N, d, m)."""
        if self.hess_diag is None:
            raise ValueError("jet carries no Hessian diagonal (order < 2)")
        return np.moveaxis(self.hess_diag, 0, -1)

    @staticmethod
    def seed(x: np.ndarray, order: int) -> "Jet":
        """Identity jet for a batch of evaluation points x of shape (N, m)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError(f"input points must have shape (N, m), got {x.shape}")
        n, m = x.shape
        grad = hess = None
        if order >= 1:
            grad = np.zeros((m, n, m))
            for i in range(m):
                grad[i, :, i] = 1.0
        if order >= 2:
            hess = np.zeros((m, n, m))
        return Jet(x, grad, hess)


def jet_linear(W, b, y: Jet) -> Jet:
    """Affine map W @ y + b applied to a jet; grad and hess_diag map linearly."""
    W = np.asarray(W, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if W.ndim != 2:
        raise ValueError(f"weight matrix must be 2-d, got shape {W.shape}")
    p, q = W.shape
    if b.shape != (p,):
        raise ValueError(f"bias shape {b.shape} does not match output size {p}")
    if y.value.shape[1] != q:
        raise ValueError(
            f"input jet width {y.value.shape[1]} does not match weight fan-in {q}"
        )
    value = y.value @ W.T + b
    grad = None if y.grad is None else _map_linear(W, y.grad)
    hess = None if y.hess_diag is None else _map_linear(W, y.hess_diag)
    return Jet(value, grad, hess)


def _map_linear(W: np.ndarray, comp: np.ndarray) -> np.ndarray:
    """Apply W to each (N, q) direction slice of a (m, N, q) component."""
    m, n, _ = comp.shape
    out = np.empty((m, n, W.shape[0]))
    for i in range(m):
        np.dot(comp[i], W.T, out=out[i])
    return out


def jet_sine(omega: float, z: Jet) -> Jet:
    """Elementwise sin(omega * z) with exact first/second spatial derivatives.

    Per component k and direction i:
      value_k    = sin(w z_k)
      grad_ik    = w cos(w z_k) zg_ik
      hessdiag_ik= w cos(w z_k) zh_ik - w^2 sin(w z_k) zg_ik^2
    """
    w = float(omega)
    s = np.sin(w * z.value)
    if z.grad is None:
        return Jet(s)
    c = np.cos(w * z.value)
    grad = (w * c)[None] * z.grad
    if z.hess_diag is None:
        return Jet(s, grad)
    hess = (w * c)[None] * z.hess_diag - (w * w * s)[None] * z.grad ** 2
    return Jet(s, grad, hess)


class Node:
    """One recorded operation.  ``out`` caches the forward result (ndarray or
    Jet); ``adj`` accumulates the cotangent during the reverse pass (ndarray,
    or a 3-slot list for jet nodes)."""

    __slots__ = ("out", "adj", "needs_grad", "_back", "_fwd")

    def __init__(self, out, needs_grad, back=None, fwd=None):
        self.out = out
        self.adj = None
        self.needs_grad = needs_grad
        self._back = back
        self._fwd = fwd


def _acc(node: Node, delta):
    if node.needs_grad:
        node.adj = delta if node.adj is None else node.adj + delta


_VAL, _GRD, _HES = 0, 1, 2


def _acc_jet(node: Node, slot: int, delta):
    if not node.needs_grad:
        return
    if node.adj is None:
        node.adj = [None, None, None]
    cur = node.adj[slot]
    node.adj[slot] = delta if cur is None else cur + delta


def _jet_adj(node: Node):
    if node.adj is None:
        return None, None, None
    return node.adj[0], node.adj[1], node.adj[2]


class Tape:
    """Recorder for jet and array operations; see module docstring."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.params: list[Node] = []

    def _push(self, node: Node) -> Node:
        self.nodes.append(node)
        return node

    # ------------------------------------------------------------------ leaves

    def param(self, array) -> Node:
        """Register a differentiable parameter array (weights or biases)."""
        arr = np.asarray(array, dtype=np.float64)
        node = self._push(Node(arr, needs_grad=True))
        self.params.append(node)
        return node

    def const(self, array) -> Node:
        return self._push(Node(np.asarray(array, dtype=np.float64), needs_grad=False))

    def jet_input(self, x, order: int = 2) -> Node:
        """Leaf jet for a batch of evaluation points x of shape (N, m)."""
        return self._push(Node(Jet.seed(x, order), needs_grad=False))

    # ---------------------------------------------------------------- jet ops

    def jet_linear(self, W: Node, b: Node, y: Node) -> Node:
        out = jet_linear(W.out, b.out, y.out)
        needs = W.needs_grad or b.needs_grad or y.needs_grad
        node = Node(out, needs)

        def back():
            Av, Ag, Ah = _jet_adj(node)
            jin: Jet = y.out
            Wm = W.out
            if W.needs_grad:
                dW = None
                if Av is not None:
                    dW = Av.T @ jin.value
                for adj_comp, in_comp in ((Ag, jin.grad), (Ah, jin.hess_diag)):
                    if adj_comp is None:
                        continue
                    for i in range(adj_comp.shape[0]):
                        c = adj_comp[i].T @ in_comp[i]
                        dW = c if dW is None else dW + c
                if dW is not None:
                    _acc(W, dW)
            if b.needs_grad and Av is not None:
                _acc(b, Av.sum(axis=0))
            if y.needs_grad:
                if Av is not None:
                    _acc_jet(y, _VAL, Av @ Wm)
                if Ag is not None:
                    _acc_jet(y, _GRD, _map_linear(Wm.T, Ag))
                if Ah is not None:
                    _acc_jet(y, _HES, _map_linear(Wm.T, Ah))

        def fwd():
            node.out = jet_linear(W.out, b.out, y.out)

        node._back = back
        node._fwd = fwd
        return self._push(node)

    def jet_sine(self, omega: float, z: Node) -> Node:
        w = float(omega)
        out = jet_sine(w, z.out)
        node = Node(out, z.needs_grad)

        def back():
            Av, Ag, Ah = _jet_adj(node)
            jin: Jet = z.out
            s = node.out.value
            c = np.cos(w * jin.value)
            zg = jin.grad
            zh = jin.hess_diag
            if Av is not None:
                _acc_jet(z, _VAL, Av * (w * c))
            if Ag is not None:
                _acc_jet(z, _VAL, -(w * w) * s * (Ag * zg).sum(axis=0))
                _acc_jet(z, _GRD, Ag * (w * c)[None])
            if Ah is not None:
                dv = (
                    -(w * w) * s[None] * zh - (w ** 3) * c[None] * zg ** 2
                ) * Ah
                _acc_jet(z, _VAL, dv.sum(axis=0))
                _acc_jet(z, _GRD, Ah * (-2.0 * w * w * s)[None] * zg)
                _acc_jet(z, _HES, Ah * (w * c)[None])

        def fwd():
            node.out = jet_sine(w, z.out)

        node._back = back
        node._fwd = fwd
        return self._push(node)

    # --------------------------------------------------------- jet extractors

    def jet_value(self, j: Node) -> Node:
        node = Node(j.out.value, j.needs_grad)
        node._back = lambda: _acc_jet(j, _VAL, node.adj)
        node._fwd = lambda: setattr(node, "out", j.out.value)
        return self._push(node)

    def jet_grad(self, j: Node) -> Node:
        """Raw direction-major gradient component, shape (m, N, d)."""
        if j.out.grad is None:
            raise ValueError("jet was evaluated without gradients (order 0)")
        node = Node(j.out.grad, j.needs_grad)
        node._back = lambda: _acc_jet(j, _GRD, node.adj)
        node._fwd = lambda: setattr(node, "out", j.out.grad)
        return self._push(node)

    def jet_hess(self, j: Node) -> Node:
        """Raw direction-major Hessian diagonal, shape (m, N, d)."""
        if j.out.hess_diag is None:
            raise ValueError("jet was evaluated without Hessian (order < 2)")
        node = Node(j.out.hess_diag, j.needs_grad)
        node._back = lambda: _acc_jet(j, _HES, node.adj)
        node._fwd = lambda: setattr(node, "out", j.out.hess_diag)
        return self._push(node)

    def jet_grad_scalar(self, j: Node) -> Node:
        """Gradient of a scalar field as (N, m)."""
        g = j.out.grad
        if g is None:
            raise ValueError("jet was evaluated without gradients (order 0)")
        if g.shape[2] != 1:
            raise ValueError(f"field has {g.shape[2]} outputs, expected a scalar")
        node = Node(np.ascontiguousarray(g[:, :, 0].T), j.needs_grad)

        def back():
            _acc_jet(j, _GRD, np.ascontiguousarray(node.adj.T)[:, :, None])

        node._back = back
        node._fwd = lambda: setattr(
            node, "out", np.ascontiguousarray(j.out.grad[:, :, 0].T)
        )
        return self._push(node)

    def jet_jacobian(self, j: Node) -> Node:
        """Per-point Jacobian as (N, d, m) (materialized)."""
        g = j.out.grad
        if g is None:
            raise ValueError("jet was evaluated without gradients (order 0)")
        node = Node(np.ascontiguousarray(np.moveaxis(g, 0, -1)), j.needs_grad)

        def back():
            _acc_jet(j, _GRD, np.ascontiguousarray(np.moveaxis(node.adj, -1, 0)))

        node._back = back
        node._fwd = lambda: setattr(
            node, "out", np.ascontiguousarray(np.moveaxis(j.out.grad, 0, -1))
        )
        return self._push(node)

    def jet_divergence(self, j: Node) -> Node:
        """Sum_i d value_i / d x_i; requires a square (d == m) jet."""
        g = j.out.grad
        if g is None:
            raise ValueError("divergence needs an order >= 1 jet")
        m, n, d = g.shape
        if d != m:
            raise ValueError(f"divergence needs d == m, got d={d}, m={m}")

        def div_of(g):
            out = g[0][:, 0].copy()
            for i in range(1, m):
                out += g[i][:, i]
            return out

        node = Node(div_of(g), j.needs_grad)

        def back():
            delta = np.zeros_like(g)
            for i in range(m):
                delta[i, :, i] = node.adj
            _acc_jet(j, _GRD, delta)

        node._back = back
        node._fwd = lambda: setattr(node, "out", div_of(j.out.grad))
        return self._push(node)

    def jet_laplacian(self, j: Node) -> Node:
        """Sum_i d^2 value_k / d x_i^2, shape (N, d)."""
        h = j.out.hess_diag
        if h is None:
            raise ValueError("laplacian needs an order 2 jet")
        node = Node(h.sum(axis=0), j.needs_grad)

        def back():
            delta = np.ascontiguousarray(np.broadcast_to(node.adj[None], h.shape))
            _acc_jet(j, _HES, delta)

        node._back = back
        node._fwd = lambda: setattr(node, "out", j.out.hess_diag.sum(axis=0))
        return self._push(node)

    # ---------------------------------------------------------- array algebra

    def add(self, a: Node, b: Node) -> Node:
        if np.shape(a.out) != np.shape(b.out):
            raise ValueError("add requires matching shapes")
        node = Node(a.out + b.out, a.needs_grad or b.needs_grad)

        def back():
            _acc(a, node.adj)
            _acc(b, node.adj)

        node._back = back
        node._fwd = lambda: setattr(node, "out", a.out + b.out)
        return self._push(node)

    def sub(self, a: Node, b: Node) -> Node:
        if np.shape(a.out) != np.shape(b.out):
            raise ValueError("sub requires matching shapes")
        node = Node(a.out - b.out, a.needs_grad or b.needs_grad)

        def back():
            _acc(a, node.adj)
            _acc(b, -node.adj)

        node._back = back
        node._fwd = lambda: setattr(node, "out", a.out - b.out)
        return self._push(node)

    def mul(self, a: Node, b: Node) -> Node:
        if np.shape(a.out) != np.shape(b.out):
            raise ValueError("mul requires matching shapes")
        node = Node(a.out * b.out, a.needs_grad or b.needs_grad)

        def back():
            _acc(a, node.adj * b.out)
            _acc(b, node.adj * a.out)

        node._back = back
        node._fwd = lambda: setattr(node, "out", a.out * b.out)
        return self._push(node)

    def scale(self, a: Node, c: float) -> Node:
        c = float(c)
        node = Node(a.out * c, a.needs_grad)
        node._back = lambda: _acc(a, node.adj * c)
        node._fwd = lambda: setattr(node, "out", a.out * c)
        return self._push(node)

    def square(self, a: Node) -> Node:
        node = Node(a.out * a.out, a.needs_grad)
        node._back = lambda: _acc(a, 2.0 * a.out * node.adj)
        node._fwd = lambda: setattr(node, "out", a.out * a.out)
        return self._push(node)

    def reshape(self, a: Node, shape) -> Node:
        orig = np.shape(a.out)
        node = Node(np.reshape(a.out, shape), a.needs_grad)
        node._back = lambda: _acc(a, np.reshape(node.adj, orig))
        node._fwd = lambda: setattr(node, "out", np.reshape(a.out, shape))
        return self._push(node)

    def sum(self, a: Node) -> Node:
        """Full reduction to a scalar."""
        shape = np.shape(a.out)
        node = Node(np.float64(np.sum(a.out)), a.needs_grad)
        node._back = lambda: _acc(a, np.full(shape, float(node.adj)))
        node._fwd = lambda: setattr(node, "out", np.float64(np.sum(a.out)))
        return self._push(node)

    def sum_last(self, a: Node) -> Node:
        shape = np.shape(a.out)
        node = Node(np.sum(a.out, axis=-1), a.needs_grad)

        def back():
            delta = np.ascontiguousarray(np.broadcast_to(node.adj[..., None], shape))
            _acc(a, delta)

        node._back = back
        node._fwd = lambda: setattr(node, "out", np.sum(a.out, axis=-1))
        return self._push(node)

    def mean(self, a: Node) -> Node:
        size = int(np.size(a.out))
        return self.scale(self.sum(a), 1.0 / size)

    def mean_sq(self, a: Node) -> Node:
        """Mean over the batch axis of the per-row squared Euclidean norm.

        For a of shape (N, d): (1/N) sum_n sum_k a[n, k]^2.  For (N,) the
        plain mean of squares.
        """
        n = int(np.shape(a.out)[0])
        return self.scale(self.sum(self.square(a)), 1.0 / n)

    def neo_hookean(self, F: Node, lam: float, mu: float) -> Node:
        """Stable Neo-Hookean density per point from (N, 2, 2) deformation
        gradients: (lam/2) tr^2(Sigma - I) + mu (det F - 1)^2, with Sigma the
        singular values (closed form in 2-d)."""
        lam = float(lam)
        mu = float(mu)
        if F.out.ndim != 3 or F.out.shape[1:] != (2, 2):
            raise ValueError(
                f"expected (N, 2, 2) deformation gradients, got {F.out.shape}"
            )

        def forward(Fm):
            det = Fm[:, 0, 0] * Fm[:, 1, 1] - Fm[:, 0, 1] * Fm[:, 1, 0]
            fro2 = (Fm * Fm).sum(axis=(1, 2))
            s = np.sqrt(fro2 + 2.0 * np.abs(det))
            return 0.5 * lam * (s - 2.0) ** 2 + mu * (det - 1.0) ** 2, det, s

        psi, _, _ = forward(F.out)
        node = Node(psi, F.needs_grad)

        def back():
            Fm = F.out
            _, det, s = forward(Fm)
            # d det / dF laid out like F
            ddet = np.empty_like(Fm)
            ddet[:, 0, 0] = Fm[:, 1, 1]
            ddet[:, 0, 1] = -Fm[:, 1, 0]
            ddet[:, 1, 0] = -Fm[:, 0, 1]
            ddet[:, 1, 1] = Fm[:, 0, 0]
            s_safe = np.where(s > 0.0, s, 1.0)
            sgn = np.sign(det)
            ds = (Fm + sgn[:, None, None] * ddet) / s_safe[:, None, None]
            dpsi = (
                lam * (s - 2.0)[:, None, None] * ds
                + 2.0 * mu * (det - 1.0)[:, None, None] * ddet
            )
            _acc(F, node.adj[:, None, None] * dpsi)

        node._back = back
        node._fwd = lambda: setattr(node, "out", forward(F.out)[0])
        return self._push(node)

    # ------------------------------------------------------------------ misc

    def replay(self):
        """Recompute every node's output in recording order."""
        for node in self.nodes:
            if node._fwd is not None:
                node._fwd()


def backward(tape: Tape, loss: Node) -> list[np.ndarray]:
    """Reverse pass from a scalar loss node.

    Returns one gradient array per registered parameter, in registration
    order (zeros for parameters the loss does not reach).  Nodes are visited
    in exact reverse recording order; accumulation order is therefore fixed.
    """
    if np.shape(loss.out) != ():
        raise ValueError(f"loss must be scalar, got shape {np.shape(loss.out)}")
    for node in tape.nodes:
        node.adj = None
    loss.adj = np.float64(1.0)
    for node in reversed(tape.nodes):
        if node.adj is None or node._back is None:
            continue
        node._back()
    return [
        p.adj if p.adj is not None else np.zeros_like(p.out) for p in tape.params
    ]
