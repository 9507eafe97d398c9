"""Lattice models, gap-creating observables and exact commutator terms.

Conventions: spin-1/2 operators are the Pauli matrices, spin-1 operators
the standard S=1 matrices with hbar = 1.  A Hamiltonian or observable is
stored as a translation-invariant list of local terms; each term carries
the site offsets of its support (relative to an arbitrary base site) and
a dense matrix on the joint local space, factor order = sorted offsets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]])
PAULI_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]])
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]])
ID2 = np.eye(2)

_S = 1.0 / np.sqrt(2.0)
SPIN1_X = _S * np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
SPIN1_Y = _S * np.array([[0.0, -1.0j, 0.0], [1.0j, 0.0, -1.0j], [0.0, 1.0j, 0.0]])
SPIN1_Z = np.diag([1.0, 0.0, -1.0])
ID3 = np.eye(3)


@dataclass(frozen=True)
class LatticeSpec:
    """Hypercubic lattice: dimension d, connectivity z = 2d, unit cell kind."""

    dimension: int
    connectivity: int
    unit_cell: str  # "single-site" | "two-site-checkerboard"
    axes: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if self.connectivity != 2 * self.dimension:
            raise ValueError("connectivity must equal 2 * dimension")
        if self.unit_cell not in ("single-site", "two-site-checkerboard"):
            raise ValueError(f"unknown unit cell {self.unit_cell!r}")


def hypercubic(dimension: int, unit_cell: str = "single-site") -> LatticeSpec:
    axes = tuple(
        tuple(1 if j == a else 0 for j in range(dimension)) for a in range(dimension)
    )
    return LatticeSpec(dimension, 2 * dimension, unit_cell, axes)


@dataclass(frozen=True)
class LocalTerm:
    """One local term: site offsets (sorted) and the matrix on their joint space."""

    sites: tuple[tuple[int, ...], ...]
    matrix: np.ndarray

    def __post_init__(self):
        sites = tuple(tuple(int(x) for x in s) for s in self.sites)
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "matrix", np.asarray(self.matrix))


@dataclass
class OperatorTerms:
    """Translation-invariant operator as a list of local terms."""

    terms: list[LocalTerm]
    local_dim: int

    def check_hermitian(self, tol: float = 1e-12) -> None:
        for t in self.terms:
            defect = np.max(np.abs(t.matrix - t.matrix.conj().T))
            if defect > tol * max(1.0, np.max(np.abs(t.matrix))):
                raise ValueError(f"term on {t.sites} is not Hermitian ({defect:.2e})")

    def max_support(self) -> int:
        return max(len(t.sites) for t in self.terms)


@dataclass(frozen=True)
class ModelConstants:
    """Critical couplings for reporting only; never used in any computation."""

    tfim2d_gc_over_j: float = 3.04438
    tfim2d_jc_at_g1: float = 0.329
    tfim3d_jc_estimates: tuple[float, float] = (0.188, 0.194)


CONSTANTS = ModelConstants()


@dataclass
class Model:
    """A lattice model bundled with its gap-creating observable."""

    name: str
    lattice: LatticeSpec
    hamiltonian: OperatorTerms
    gap_operator: OperatorTerms
    params: dict = field(default_factory=dict)

    def commutator(self) -> OperatorTerms:
        """i[H, O] as local terms (Hermitian, real for the built-in models)."""
        return commutator_terms(self.hamiltonian, self.gap_operator)


# ---------------------------------------------------------------------------
# model constructors


def _origin(dimension: int) -> tuple[int, ...]:
    return (0,) * dimension


def tfim(dimension: int, J: float, g: float) -> tuple[LatticeSpec, OperatorTerms]:
    """Transverse-field Ising model -J sum_<ij> z z - g sum_i x on d = 2, 3."""
    if dimension not in (2, 3):
        raise ValueError("tfim is defined for dimension 2 or 3")
    if J == 0.0 and g == 0.0:
        raise ValueError("J and g cannot both vanish")
    lattice = hypercubic(dimension)
    bond = -J * np.kron(PAULI_Z, PAULI_Z)
    terms = [LocalTerm((_origin(dimension),), -g * PAULI_X)]
    for ax in lattice.axes:
        terms.append(LocalTerm((_origin(dimension), ax), bond))
    return lattice, OperatorTerms(terms, local_dim=2)


def tfim_chain(J: float, g: float) -> tuple[LatticeSpec, OperatorTerms]:
    """1D transverse-field Ising chain, used for cross-validation only."""
    if J == 0.0 and g == 0.0:
        raise ValueError("J and g cannot both vanish")
    lattice = hypercubic(1)
    terms = [
        LocalTerm(((0,),), -g * PAULI_X),
        LocalTerm(((0,), (1,)), -J * np.kron(PAULI_Z, PAULI_Z)),
    ]
    return lattice, OperatorTerms(terms, local_dim=2)


def tfim_gap_operator(dimension: int) -> OperatorTerms:
    """sum_i sigma^y_i: purely imaginary entries, Hermitian."""
    return OperatorTerms([LocalTerm((_origin(dimension),), PAULI_Y)], local_dim=2)


def haldane() -> tuple[LatticeSpec, OperatorTerms]:
    """Spin-1 antiferromagnetic Heisenberg chain H = sum_i S_i . S_{i+1}."""
    lattice = hypercubic(1)
    bond = (
        np.kron(SPIN1_X, SPIN1_X)
        + np.kron(SPIN1_Y, SPIN1_Y)
        + np.kron(SPIN1_Z, SPIN1_Z)
    )
    assert np.max(np.abs(bond.imag)) < 1e-15
    return lattice, OperatorTerms([LocalTerm(((0,), (1,)), bond.real)], local_dim=3)


def haldane_gap_operator() -> OperatorTerms:
    """sum_i S^y_i S^z_{i+1}: Hermitian with purely imaginary entries."""
    return OperatorTerms(
        [LocalTerm(((0,), (1,)), np.kron(SPIN1_Y, SPIN1_Z))], local_dim=3
    )


def tfim_model(dimension: int, J: float, g: float) -> Model:
    lattice, ham = tfim(dimension, J, g)
    return Model(
        f"tfim{dimension}d", lattice, ham, tfim_gap_operator(dimension),
        {"J": J, "g": g},
    )


def tfim_chain_model(J: float, g: float) -> Model:
    lattice, ham = tfim_chain(J, g)
    return Model("tfim1d", lattice, ham, tfim_gap_operator(1), {"J": J, "g": g})


def haldane_model() -> Model:
    lattice, ham = haldane()
    return Model("haldane", lattice, ham, haldane_gap_operator(), {})


def phase_convention(phase: str, coupling: float) -> tuple[float, float]:
    """(J, g) for the reporting conventions: ferro fixes J=1, para fixes g=1."""
    if phase == "ferromagnetic":
        return 1.0, coupling
    if phase == "paramagnetic":
        return coupling, 1.0
    raise ValueError(f"unknown phase {phase!r}")


# ---------------------------------------------------------------------------
# dense embeddings and commutators


def embed_on_sites(
    matrix: np.ndarray,
    op_sites,
    all_sites,
    local_dim: int,
) -> np.ndarray:
    """Embed ``matrix`` (acting on op_sites, in that factor order) on all_sites.

    all_sites fixes the factor order of the result (first site slowest).
    """
    op_sites = [tuple(s) for s in op_sites]
    all_sites = [tuple(s) for s in all_sites]
    n, k = len(all_sites), len(op_sites)
    pos = []
    for s in op_sites:
        if s not in all_sites:
            raise ValueError(f"site {s} not in embedding support")
        pos.append(all_sites.index(s))
    if len(set(pos)) != k:
        raise ValueError("operator sites must be distinct")
    d = local_dim
    full = np.kron(matrix, np.eye(d ** (n - k)))
    # axis order is (op rows, identity rows, op cols, identity cols);
    # permute so site order matches all_sites on both row and column sides
    full = full.reshape((d,) * (2 * n))
    rest = [i for i in range(n) if i not in pos]
    cur_to_site = pos + rest  # axis j of `full` acts on site cur_to_site[j]
    perm = [cur_to_site.index(i) for i in range(n)]
    full = np.transpose(full, perm + [n + p for p in perm])
    return full.reshape(d**n, d**n)


def commutator_terms(H: OperatorTerms, O: OperatorTerms) -> OperatorTerms:
    """Local terms of i[H, O] for translation-invariant H and O.

    Every (h-term, o-translate) pair with overlapping support contributes
    i(h o - o h) on the joint support; disjoint supports drop out.  Terms
    with identical (translated-to-origin) support are merged.  The result
    is Hermitian, and real for the built-in models; a real array is
    returned whenever the imaginary part is negligible.
    """
    if H.local_dim != O.local_dim:
        raise ValueError("H and O act on different local dimensions")
    d = H.local_dim
    merged: dict[tuple, np.ndarray] = {}
    for ht in H.terms:
        for ot in O.terms:
            shifts = {
                tuple(np.subtract(hs, os)) for hs in ht.sites for os in ot.sites
            }
            for delta in sorted(shifts):
                o_sites = [tuple(np.add(s, delta)) for s in ot.sites]
                union = sorted(set(ht.sites) | set(o_sites))
                hm = embed_on_sites(ht.matrix, ht.sites, union, d)
                om = embed_on_sites(ot.matrix, o_sites, union, d)
                comm = 1j * (hm @ om - om @ hm)
                scale = max(np.max(np.abs(hm)) * np.max(np.abs(om)), 1e-300)
                if np.max(np.abs(comm)) <= 1e-14 * scale:
                    continue
                base = union[0]
                key = tuple(tuple(np.subtract(s, base)) for s in union)
                if key in merged:
                    merged[key] = merged[key] + comm
                else:
                    merged[key] = comm
    terms = []
    for sites, mat in merged.items():
        if np.max(np.abs(mat)) <= 1e-14:
            continue
        if np.max(np.abs(mat.imag)) <= 1e-12 * max(1.0, np.max(np.abs(mat.real))):
            mat = np.ascontiguousarray(mat.real)
        terms.append(LocalTerm(sites, mat))
    out = OperatorTerms(terms, local_dim=d)
    out.check_hermitian(1e-12)
    return out


def terms_to_dense(terms: OperatorTerms, shape) -> np.ndarray:
    """Sum of all translates of the terms on a periodic cluster of ``shape``.

    Site order of the result is the lexicographic order of the cluster
    coordinates, first site slowest.  Raises if a term wraps onto itself
    (cluster too small along some axis).
    """
    shape = tuple(shape)
    coords = [tuple(c) for c in np.ndindex(shape)]
    d = terms.local_dim
    n = len(coords)
    dense = np.zeros((d**n, d**n), dtype=complex)
    for t in terms.terms:
        for base in coords:
            placed = [
                tuple((b + o) % s for b, o, s in zip(base, off, shape))
                for off in t.sites
            ]
            if len(set(placed)) != len(placed):
                raise ValueError(
                    f"term support {t.sites} wraps onto itself on cluster {shape}"
                )
            dense += embed_on_sites(t.matrix, placed, coords, d)
    if np.max(np.abs(dense.imag)) <= 1e-12 * max(1.0, np.max(np.abs(dense.real))):
        return np.ascontiguousarray(dense.real)
    return dense
