"""Dense labeled-tensor core: contraction and truncated factorization.

Everything here is a pure function of its inputs; values can be shared
freely across threads.  Scalars are real or complex double precision --
numpy keeps real inputs real, which is the fast path the spin models use.

The module also keeps a global multiply-add counter.  Every contraction
and factorization routed through this module adds its (naive) operation
count, which is what the cost-scaling checks measure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# ---------------------------------------------------------------------------
# operation accounting

_WORK = {"madds": 0.0}


def reset_work() -> None:
    """Zero the global multiply-add counter."""
    _WORK["madds"] = 0.0


def work_count() -> float:
    """Accumulated multiply-add count since the last reset."""
    return _WORK["madds"]


def add_work(n: float) -> None:
    _WORK["madds"] += float(n)


def einsum2(subscripts: str, *operands: np.ndarray) -> np.ndarray:
    """einsum wrapper that accounts the naive multiply-add count.

    Meant for pairwise contractions (all evolution kernels use pairwise
    steps); the count is the product of the dimensions of all distinct
    index letters in the expression.
    """
    spec = subscripts.partition("->")[0]
    dims: dict[str, int] = {}
    for part, op in zip(spec.split(","), operands):
        for ch, n in zip(part.strip(), op.shape):
            dims[ch] = n
    total = 1.0
    for n in dims.values():
        total *= n
    add_work(total)
    return np.einsum(subscripts, *operands, optimize=True)


# ---------------------------------------------------------------------------
# deterministic factorization helpers (plain ndarray level)


def svd_fixed(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """SVD with a deterministic sign convention.

    The largest-magnitude entry of each left singular vector is made
    real-positive (ties resolved by first occurrence), so reruns produce
    bit-identical factors and golden traces are reproducible.
    """
    u, s, vh = np.linalg.svd(mat, full_matrices=False)
    m, n = mat.shape
    add_work(14.0 * m * n * min(m, n))
    if u.shape[1]:
        piv = np.argmax(np.abs(u), axis=0)
        lead = u[piv, np.arange(u.shape[1])]
        mag = np.abs(lead)
        phase = np.where(mag > 0, lead / np.where(mag > 0, mag, 1.0), 1.0)
        u = u * np.conj(phase)[None, :]
        vh = vh * phase[:, None]
    return u, s, vh


def eigh_counted(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """np.linalg.eigh with operation accounting."""
    n = mat.shape[0]
    add_work(9.0 * n**3)
    return np.linalg.eigh(mat)


def qr_counted(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reduced QR with operation accounting."""
    m, n = mat.shape
    add_work(2.0 * m * n * min(m, n))
    return np.linalg.qr(mat)


def psd_factor(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """X with X^dag X = N for Hermitian PSD N, and a pseudo-inverse of X.

    Built from the eigendecomposition with eigenvalues clipped at a
    relative floor, so nearly-null directions are projected out rather
    than amplified.
    """
    n = 0.5 * (n + n.conj().T)
    w, v = eigh_counted(n)
    w = np.clip(w, 0.0, None)
    floor = (w[-1] if w.size else 0.0) * 1e-28
    sq = np.sqrt(w)
    inv = np.where(w > floor, 1.0 / np.where(w > floor, sq, 1.0), 0.0)
    x = sq[:, None] * v.conj().T
    x_inv = v * inv[None, :]
    return x, x_inv


def choose_rank(s: np.ndarray, max_rank: int, rel_tol: float) -> tuple[int, float]:
    """Kept rank and discarded weight for a descending singular spectrum.

    rank = min(max_rank, numerical rank, count of values > rel_tol * s_max).
    Exactly ``max_rank`` values are kept in index order when the cut falls
    inside a degenerate group (reproducibility over optimality).
    discarded = sum of squared dropped values / sum of all squared values.
    """
    if s.size == 0 or s[0] <= 0.0:
        return 0, 1.0
    thresh = rel_tol * s[0] if rel_tol > 0 else 0.0
    rank = int(min(max_rank, np.count_nonzero(s > thresh), np.count_nonzero(s > 0)))
    total = float(np.dot(s, s))
    dropped = float(np.dot(s[rank:], s[rank:]))
    return rank, dropped / total


# ---------------------------------------------------------------------------
# labeled tensors


@dataclass(frozen=True)
class Tensor:
    """Dense tensor with one unique string label per index.

    Data is row-major over the label order.  All entries must be finite;
    the constructor enforces this so every public operation hands back a
    validated value.
    """

    labels: tuple[str, ...]
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        labels = tuple(self.labels)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "labels", labels)
        if data.ndim != len(labels):
            raise ValueError(
                f"tensor has {data.ndim} axes but {len(labels)} labels"
            )
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate index labels: {labels}")
        if any(n < 1 for n in data.shape):
            raise ValueError(f"zero-dimensional index in shape {data.shape}")
        if data.size and not np.all(np.isfinite(data)):
            raise ValueError("tensor contains non-finite entries")

    @property
    def dims(self) -> tuple[int, ...]:
        return self.data.shape

    def dim(self, label: str) -> int:
        return self.data.shape[self.labels.index(label)]

    def relabel(self, mapping: dict[str, str]) -> "Tensor":
        return Tensor(tuple(mapping.get(l, l) for l in self.labels), self.data)

    def transpose_to(self, labels) -> "Tensor":
        labels = tuple(labels)
        if set(labels) != set(self.labels):
            raise ValueError(f"cannot permute {self.labels} to {labels}")
        perm = [self.labels.index(l) for l in labels]
        return Tensor(labels, np.transpose(self.data, perm))

    def scaled(self, alpha) -> "Tensor":
        return Tensor(self.labels, self.data * alpha)


@dataclass(frozen=True)
class BondWeights:
    """Positive bond weights, sorted descending.

    State-level weights (the lambdas living on tensor-network bonds) are
    kept at unit Euclidean norm by the evolution routines after every
    truncation; raw singular spectra returned by ``svd_truncate`` carry
    their natural scale so that U * diag(s) * V reconstructs the input.
    """

    values: np.ndarray
    label: str = "bond"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("bond weights must be a nonempty vector")
        if np.any(values <= 0.0):
            raise ValueError("bond weights must be strictly positive")
        if np.any(np.diff(values) > 0.0):
            raise ValueError("bond weights must be sorted descending")

    @property
    def dim(self) -> int:
        return self.values.size

    def normalized(self) -> "BondWeights":
        return BondWeights(self.values / np.linalg.norm(self.values), self.label)


def contract(a: Tensor, b: Tensor, pairs) -> Tensor:
    """Contract two tensors over label pairs.

    Surviving indices keep their labels; result order is a's survivors
    followed by b's survivors.
    """
    pairs = list(pairs)
    axes_a, axes_b = [], []
    for la, lb in pairs:
        if la not in a.labels:
            raise ValueError(f"label {la!r} not in first tensor {a.labels}")
        if lb not in b.labels:
            raise ValueError(f"label {lb!r} not in second tensor {b.labels}")
        ia, ib = a.labels.index(la), b.labels.index(lb)
        if a.data.shape[ia] != b.data.shape[ib]:
            raise ValueError(
                f"dimension mismatch on ({la!r},{lb!r}): "
                f"{a.data.shape[ia]} vs {b.data.shape[ib]}"
            )
        axes_a.append(ia)
        axes_b.append(ib)
    if len(set(axes_a)) != len(axes_a) or len(set(axes_b)) != len(axes_b):
        raise ValueError("an index may appear in at most one contraction pair")
    keep_a = [l for i, l in enumerate(a.labels) if i not in axes_a]
    keep_b = [l for i, l in enumerate(b.labels) if i not in axes_b]
    out_labels = tuple(keep_a + keep_b)
    if len(set(out_labels)) != len(out_labels):
        raise ValueError(f"duplicate labels in contraction result: {out_labels}")
    free_b = 1.0
    for i, n in enumerate(b.data.shape):
        if i not in axes_b:
            free_b *= n
    add_work(float(np.prod(a.data.shape, dtype=float)) * free_b)
    out = np.tensordot(a.data, b.data, axes=(axes_a, axes_b))
    return Tensor(out_labels, out)


def svd_truncate(
    t: Tensor,
    left_labels,
    max_rank: int,
    rel_tol: float = 0.0,
    bond_label: str = "bond",
) -> tuple[Tensor, BondWeights, Tensor, float]:
    """Truncated SVD of a tensor split by ``left_labels``.

    Returns (U, s, V, discarded_weight) with t ~= U * diag(s) * V, the
    singular values descending, and a deterministic sign convention
    (see ``svd_fixed``).  discarded_weight is the squared-weight fraction
    dropped by the rank cut.
    """
    left_labels = tuple(left_labels)
    if not left_labels or set(left_labels) == set(t.labels):
        raise ValueError("left_labels must be a nonempty proper subset of labels")
    for l in left_labels:
        if l not in t.labels:
            raise ValueError(f"unknown label {l!r}")
    if max_rank < 1:
        raise ValueError("max_rank must be >= 1")
    if bond_label in t.labels:
        raise ValueError(f"bond label {bond_label!r} collides with a tensor label")
    right_labels = tuple(l for l in t.labels if l not in left_labels)
    perm = t.transpose_to(left_labels + right_labels)
    ldims = perm.data.shape[: len(left_labels)]
    rdims = perm.data.shape[len(left_labels):]
    mat = perm.data.reshape(int(np.prod(ldims)), int(np.prod(rdims)))
    u, s, vh = svd_fixed(mat)
    rank, discarded = choose_rank(s, max_rank, rel_tol)
    if rank == 0:
        raise ValueError("all-zero tensor: rank 0, nothing to keep")
    u, s, vh = u[:, :rank], s[:rank], vh[:rank]
    u_t = Tensor(left_labels + (bond_label,), u.reshape(*ldims, rank))
    v_t = Tensor((bond_label,) + right_labels, vh.reshape(rank, *rdims))
    return u_t, BondWeights(s, bond_label), v_t, discarded
