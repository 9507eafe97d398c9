"""Infinite PEPS simple update on square and cubic lattices.

Site tensors carry one physical and z = 2d virtual legs in the fixed order
(p, +x, -x, +y, -y[, +z, -z]); diagonal bond weights live on every
inequivalent bond.  Two evolution schemes are provided:

* gates -- Trotterized two-site gates on a two-site checkerboard cell,
  truncated bond-locally (cost O(D^(z+1)) via a QR reduction);
* mpo   -- one uniform propagator tensor per axis on a single-site cell,
  with the enlarged bonds brought to the superorthogonal gauge and cut
  back to D there.

Expectation values close every dangling bond with its weights (mean-field
environment); in the superorthogonal gauge that closure is the bond-local
reduced operator diag(lambda^2).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .estimator import GapTrace
from .imps import UNDERFLOW_DROP, EvolutionSchedule, bond_gate
from .models import LatticeSpec, Model, OperatorTerms
from .tensor import add_work, choose_rank, einsum2, psd_factor, qr_counted, svd_fixed
from .wii import Mpo, build_wii, hamiltonian_line_mpo

_LEG_LETTERS = "abcdefgh"  # virtual-leg subscript pool (z <= 6)


@dataclass(frozen=True)
class BondRef:
    """One inequivalent bond: key into the weight table plus its endpoints.

    ``i`` is always the +axis side, ``j`` the -axis side.
    """

    key: object
    axis: int
    i_site: int
    i_leg: int
    j_site: int
    j_leg: int


@dataclass
class IPepsState:
    """Weighted-bond (Vidal-like) infinite PEPS."""

    lattice: LatticeSpec
    tensors: list[np.ndarray]
    lams: dict

    @property
    def local_dim(self) -> int:
        return self.tensors[0].shape[0]

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    def copy(self) -> "IPepsState":
        return IPepsState(
            self.lattice,
            [t.copy() for t in self.tensors],
            {k: v.copy() for k, v in self.lams.items()},
        )

    def max_bond(self) -> int:
        return max(v.size for v in self.lams.values())


def leg_index(axis: int, sign: int) -> int:
    """Position of the (axis, sign) virtual leg; sign 0 = +, 1 = -."""
    return 1 + 2 * axis + sign


def bond_list(state: IPepsState) -> list[BondRef]:
    d = state.lattice.dimension
    if state.lattice.unit_cell == "single-site":
        return [
            BondRef(a, a, 0, leg_index(a, 0), 0, leg_index(a, 1)) for a in range(d)
        ]
    bonds = []
    for a in range(d):
        bonds.append(BondRef((a, 0), a, 0, leg_index(a, 0), 1, leg_index(a, 1)))
        bonds.append(BondRef((a, 1), a, 1, leg_index(a, 0), 0, leg_index(a, 1)))
    return bonds


def lam_key(state: IPepsState, site: int, leg: int):
    """Weight-table key for the bond attached to (site, leg)."""
    axis, sign = divmod(leg - 1, 2)
    if state.lattice.unit_cell == "single-site":
        return axis
    return (axis, (sign + site) % 2)


def random_product_ipeps(lattice: LatticeSpec, seed: int) -> IPepsState:
    """Bond-dimension-1 product state of random real unit vectors."""
    rng = np.random.default_rng(seed)
    n_sites = 1 if lattice.unit_cell == "single-site" else 2
    local_dim = 2  # spin-1/2 lattice models; generalize when needed
    z = lattice.connectivity
    tensors = []
    for _ in range(n_sites):
        v = rng.normal(size=local_dim)
        v /= np.linalg.norm(v)
        tensors.append(v.reshape((local_dim,) + (1,) * z))
    state = IPepsState(lattice, tensors, {})
    for b in bond_list(state):
        state.lams[b.key] = np.ones(1)
    return state


def _scaled_tensor(
    state: IPepsState, site: int, skip_leg: int | None = None
) -> np.ndarray:
    """Site tensor with the full bond weight absorbed on every leg
    except ``skip_leg``."""
    t = state.tensors[site]
    for leg in range(1, t.ndim):
        if leg == skip_leg:
            continue
        lam = state.lams[lam_key(state, site, leg)]
        shape = [1] * t.ndim
        shape[leg] = lam.size
        t = t * lam.reshape(shape)
    return t


def _gram(state: IPepsState, site: int, leg: int) -> np.ndarray:
    """Mean-field bond environment N[b,b'] of (site, leg): all other legs
    closed with their squared weights, physical index summed."""
    t = _scaled_tensor(state, site, skip_leg=leg)
    m = np.moveaxis(t, leg, -1).reshape(-1, t.shape[leg])
    add_work(float(m.shape[0]) * m.shape[1] ** 2)
    return m.conj().T @ m


def _apply_on_leg(t: np.ndarray, leg: int, g: np.ndarray) -> np.ndarray:
    """Contract the old leg index with the first index of g."""
    moved = np.moveaxis(t, leg, -1)
    add_work(float(moved.size) * g.shape[1])
    out = moved @ g
    return np.moveaxis(out, -1, leg)


def _all_grams(state: IPepsState) -> dict[tuple[int, int], np.ndarray]:
    grams = {}
    for b in bond_list(state):
        for site, leg in ((b.i_site, b.i_leg), (b.j_site, b.j_leg)):
            grams[(site, leg)] = _gram(state, site, leg)
    return grams


def _residual_from_grams(state: IPepsState, grams) -> float:
    """max over bonds of |rho_left - diag(lam^2)|_F + |rho_right - ...|_F
    with rho the weight-dressed bond environments."""
    worst = 0.0
    for b in bond_list(state):
        lam = state.lams[b.key]
        target = np.diag(lam**2)
        res = 0.0
        for site, leg in ((b.i_site, b.i_leg), (b.j_site, b.j_leg)):
            rho = lam[:, None] * grams[(site, leg)] * lam[None, :]
            res += float(np.linalg.norm(rho - target))
        worst = max(worst, res)
    return worst


def superorthogonality_residual(state: IPepsState) -> float:
    return _residual_from_grams(state, _all_grams(state))


def _rescale_sites(state: IPepsState, grams) -> None:
    """Fix the per-site scale so the bond environments approach identity
    (gauge rotations leave exactly this one scalar per site undetermined).
    Updates the tensors and the gram table in place."""
    for site in range(state.n_sites):
        ratios = [
            float(np.real(np.trace(g))) / g.shape[0]
            for (s, _), g in grams.items()
            if s == site
        ]
        c = float(np.mean(ratios))
        if c <= 0.0:
            raise RuntimeError("site tensor collapsed to zero norm")
        state.tensors[site] = state.tensors[site] / np.sqrt(c)
        for key in grams:
            if key[0] == site:
                grams[key] = grams[key] / c


@dataclass
class SuperorthResult:
    residual: float
    iterations: int
    converged: bool
    messages: dict | None = None


_GRAM_PLANS: dict = {}


def _gram_plan(ndim: int, leg: int, closure_legs: tuple[int, ...]):
    """Cached tensordot plan for a dressed bond environment.

    Closures are applied in descending leg order (tensordot appends the
    fresh axis at the end, so lower axes keep their positions); the plan
    records where every original axis lands for the final pair contraction.
    """
    key = (ndim, leg, closure_legs)
    plan = _GRAM_PLANS.get(key)
    if plan is None:
        legs_desc = tuple(sorted(closure_legs, reverse=True))
        untouched = [a for a in range(ndim) if a not in closure_legs]
        bra_axes, ket_axes = [], []
        for a in range(ndim):
            if a == leg:
                continue
            bra_axes.append(a)
            if a in closure_legs:
                ket_axes.append(len(untouched) + legs_desc.index(a))
            else:
                ket_axes.append(untouched.index(a))
        plan = (legs_desc, bra_axes, ket_axes)
        _GRAM_PLANS[key] = plan
    return plan


def _dressed_gram(
    st: IPepsState, site: int, leg: int, closures: dict[int, np.ndarray]
) -> np.ndarray:
    """Bond environment of (site, leg) with each other leg closed by the
    given ket-bra matrix (weight-dressed incoming message)."""
    t0 = st.tensors[site]
    legs_desc, bra_axes, ket_axes = _gram_plan(
        t0.ndim, leg, tuple(sorted(closures))
    )
    t = t0
    for l in legs_desc:
        t = np.tensordot(t, closures[l], axes=([l], [0]))
    n = np.tensordot(np.conj(t0), t, axes=(bra_axes, ket_axes))
    add_work(float(t0.size) * (sum(w.shape[0] for w in closures.values())
                               + t0.shape[leg]))
    return 0.5 * (n + n.conj().T)


def _bond_closure(st: IPepsState, site: int, leg: int, msg: np.ndarray) -> np.ndarray:
    lam = st.lams[lam_key(st, site, leg)]
    return lam[:, None] * msg * lam[None, :]


def _message_fixed_point(
    st: IPepsState,
    tol: float,
    max_sweeps: int,
    init: dict | None = None,
) -> dict[tuple[int, int], np.ndarray]:
    """Outgoing bond environments out[(site, leg)] solved self-consistently.

    out[(i, l)] is the environment of leg l seen from site i when every
    other leg of i is closed with the weight-dressed message coming in
    from its own neighbor.  Identity messages (the plain weight-squared
    closure) are the starting point; at the gauge fixed point the solution
    is the identity again.  Messages are trace-normalized.
    """
    bonds = bond_list(st)
    opposite: dict[tuple[int, int], tuple[int, int]] = {}
    for b in bonds:
        opposite[(b.i_site, b.i_leg)] = (b.j_site, b.j_leg)
        opposite[(b.j_site, b.j_leg)] = (b.i_site, b.i_leg)
    out = {}
    for end in opposite:
        dim = st.lams[lam_key(st, *end)].size
        if init is not None and end in init and init[end].shape == (dim, dim):
            out[end] = init[end]
        else:
            out[end] = np.eye(dim)
    for _ in range(max_sweeps):
        delta = 0.0
        for end in out:
            site, leg = end
            closures = {}
            for l in range(1, st.tensors[site].ndim):
                if l == leg:
                    continue
                src = opposite[(site, l)]
                closures[l] = _bond_closure(st, site, l, out[src])
            fresh = _dressed_gram(st, site, leg, closures)
            tr = float(np.real(np.trace(fresh)))
            if tr <= 0.0:
                raise RuntimeError("bond environment collapsed to zero")
            fresh = fresh * (fresh.shape[0] / tr)
            delta = max(delta, float(np.max(np.abs(fresh - out[end]))))
            out[end] = fresh
        if delta <= tol:
            break
    return out


def superorthogonalize(
    state: IPepsState,
    so_tol: float = 1e-10,
    max_iter: int = 200,
    msg_init: dict | None = None,
) -> tuple[IPepsState, SuperorthResult]:
    """Iterative gauge fixing toward the superorthogonal form.

    Each pass solves the bond environments self-consistently (message
    iteration) and then rotates every bond so both of its environments
    become the identity; the inserted maps and the new weights multiply
    back to the old weights, so the state itself never changes.  Stops at
    ``so_tol``, at ``max_iter`` passes, or when the residual stalls at its
    numerical floor; non-convergence is flagged on the result and the best
    iterate is returned.
    """
    st = state.copy()
    prev = np.inf
    grams = _all_grams(st)
    _rescale_sites(st, grams)
    residual = _residual_from_grams(st, grams)
    iterations = 0
    for it in range(max_iter):
        if residual <= so_tol:
            break
        msgs = _message_fixed_point(
            st, tol=min(so_tol, 1e-10), max_sweeps=500, init=msg_init
        )
        msg_init = None  # the cache only seeds the first pass
        for b in bond_list(st):
            lam = st.lams[b.key]
            n_i = msgs[(b.i_site, b.i_leg)]
            n_j = msgs[(b.j_site, b.j_leg)]
            x, x_inv = psd_factor(n_i)
            y, y_inv = psd_factor(n_j)
            m = (x * lam[None, :]) @ y.T
            u, s, vh = svd_fixed(m)
            keep = s > (1e-14 * s[0] if s.size and s[0] > 0 else 0.0)
            r = int(np.count_nonzero(keep))
            if r == 0:
                raise RuntimeError("bond weights collapsed to zero in gauge fix")
            st.lams[b.key] = s[:r] / np.linalg.norm(s[:r])
            g_i = x_inv @ u[:, :r]
            g_j = y_inv @ vh[:r].T
            st.tensors[b.i_site] = _apply_on_leg(st.tensors[b.i_site], b.i_leg, g_i)
            st.tensors[b.j_site] = _apply_on_leg(st.tensors[b.j_site], b.j_leg, g_j)
        grams = _all_grams(st)
        _rescale_sites(st, grams)
        residual = _residual_from_grams(st, grams)
        iterations = it + 1
        if residual > 0.5 * prev and residual > so_tol:
            break
        prev = residual
    converged = residual <= so_tol
    # stalls at the numerical floor (weight-spread conditioned) are benign;
    # only a residual far above it signals a genuinely failed gauge fix
    if not converged and residual > max(100.0 * so_tol, 1e-6):
        warnings.warn(
            f"superorthogonalization stalled at residual {residual:.2e}",
            RuntimeWarning,
            stacklevel=2,
        )
    # converged messages of a canonical state are the identity; exporting
    # them lets the next application warm-start its fixed point
    final_msgs = {
        end: np.eye(st.lams[lam_key(st, *end)].size)
        for b in bond_list(st)
        for end in ((b.i_site, b.i_leg), (b.j_site, b.j_leg))
    }
    return st, SuperorthResult(residual, iterations, converged, final_msgs)


def truncate_bonds(state: IPepsState, D_max: int) -> tuple[IPepsState, float]:
    """Cut every bond to its leading D_max weights (superorthogonal gauge
    makes this the bond-locally optimal cut); weights renormalized."""
    st = state.copy()
    worst = 0.0
    for b in bond_list(st):
        lam = st.lams[b.key]
        if lam.size <= D_max:
            continue
        total = float(np.dot(lam, lam))
        worst = max(worst, float(np.dot(lam[D_max:], lam[D_max:])) / total)
        st.lams[b.key] = lam[:D_max] / np.linalg.norm(lam[:D_max])
        sel = np.arange(D_max)
        st.tensors[b.i_site] = np.take(st.tensors[b.i_site], sel, axis=b.i_leg)
        st.tensors[b.j_site] = np.take(st.tensors[b.j_site], sel, axis=b.j_leg)
    return st, worst


def apply_axis_mpo(
    state: IPepsState,
    mpo: Mpo,
    axis: int,
    D_max: int,
    so_tol: float = 1e-10,
    so_max_iter: int = 200,
    msg_init: dict | None = None,
) -> tuple[IPepsState, SuperorthResult]:
    """Contract one axis propagator into the site tensor and re-truncate.

    The propagator's virtual channels merge into the two bonds along the
    axis (D -> D * Dw, old bond index slower), the state is brought to the
    superorthogonal gauge, and the enlarged bonds are cut back to D_max.
    """
    if state.lattice.unit_cell != "single-site":
        raise ValueError("axis propagators act on the single-site unit cell")
    dlat = state.lattice.dimension
    t = state.tensors[0]
    w = mpo.tensor
    dw = mpo.virtual_dim
    legs = _LEG_LETTERS[: 2 * dlat]
    # out axes: (l, r, p, legs...);  l rides the -axis bond, r the +axis bond
    sub = f"lrpq,q{legs}->lrp{legs}"
    out = einsum2(sub, w, t)
    perm = [2]
    new_shape = [t.shape[0]]
    for b in range(dlat):
        plus, minus = 3 + 2 * b, 4 + 2 * b
        if b == axis:
            perm += [plus, 1, minus, 0]
            new_shape += [t.shape[1 + 2 * b] * dw, t.shape[2 + 2 * b] * dw]
        else:
            perm += [plus, minus]
            new_shape += [t.shape[1 + 2 * b], t.shape[2 + 2 * b]]
    merged = np.transpose(out, perm).reshape(new_shape)
    st = state.copy()
    st.tensors[0] = merged
    lam = st.lams[axis]
    st.lams[axis] = np.kron(lam, np.ones(dw)) / np.sqrt(dw)
    st, info = superorthogonalize(st, so_tol, so_max_iter, msg_init=msg_init)
    st, _ = truncate_bonds(st, D_max)
    return st, info


def simple_update_bond(
    state: IPepsState,
    gate: np.ndarray,
    bond: BondRef | object,
    D_max: int,
    rel_tol: float = 1e-14,
    pinv_floor: float = 1e-12,
) -> tuple[IPepsState, float]:
    """Two-site gate on one checkerboard bond with bond-local truncation.

    Environment weights are absorbed into both tensors, the pair is QR
    reduced (cost O(D^(z+1))), the gate applied, the bond split by SVD and
    cut to D_max, and the environment weights divided back out with a
    floored pseudo-inverse.  gate axes: (out_i, out_j, in_i, in_j).
    """
    if state.lattice.unit_cell != "two-site-checkerboard":
        raise ValueError("gate updates act on the checkerboard unit cell")
    if not isinstance(bond, BondRef):
        table = {b.key: b for b in bond_list(state)}
        bond = table[bond]
    st = state.copy()
    d = st.local_dim
    lam_b = st.lams[bond.key]

    t_i = _scaled_tensor(st, bond.i_site, skip_leg=bond.i_leg)
    shape_i = [1] * t_i.ndim
    shape_i[bond.i_leg] = lam_b.size
    t_i = t_i * lam_b.reshape(shape_i)  # bond weight rides the + side once
    t_j = _scaled_tensor(st, bond.j_site, skip_leg=bond.j_leg)

    m_i = np.moveaxis(t_i, [bond.i_leg, 0], [-2, -1])
    rest_i = m_i.shape[:-2]
    m_i = m_i.reshape(-1, lam_b.size * d)
    q_i, r_i = qr_counted(m_i)
    k_i = r_i.shape[0]
    m_j = np.moveaxis(t_j, [bond.j_leg, 0], [-2, -1])
    rest_j = m_j.shape[:-2]
    m_j = m_j.reshape(-1, t_j.shape[bond.j_leg] * d)
    q_j, r_j = qr_counted(m_j)
    k_j = r_j.shape[0]

    theta = einsum2(
        "ibp,jbq->ipjq",
        r_i.reshape(k_i, lam_b.size, d),
        r_j.reshape(k_j, t_j.shape[bond.j_leg], d),
    )
    theta = einsum2("xypq,ipjq->ixjy", np.asarray(gate), theta)
    u, s, vh = svd_fixed(theta.reshape(k_i * d, k_j * d))
    rank, discarded = choose_rank(s, D_max, rel_tol)
    if rank == 0:
        raise RuntimeError(
            f"gate update on bond {bond.key} truncated to rank 0 "
            "(degenerate state)"
        )
    lam_new = s[:rank] / np.linalg.norm(s[:rank])

    add_work(float(q_i.size) * d * rank + float(q_j.size) * d * rank)
    red_i = (q_i @ u[:, :rank].reshape(k_i, d * rank)).reshape(rest_i + (d, rank))
    new_i = np.moveaxis(red_i, [-2, -1], [0, bond.i_leg])
    red_j = (q_j @ np.transpose(
        vh[:rank].reshape(rank, k_j, d), (1, 0, 2)
    ).reshape(k_j, -1)).reshape(rest_j + (rank, d))
    new_j = np.moveaxis(red_j, [-1, -2], [0, bond.j_leg])

    # divide the environment weights back out
    for site, new_t, leg_skip in (
        (bond.i_site, new_i, bond.i_leg),
        (bond.j_site, new_j, bond.j_leg),
    ):
        for leg in range(1, new_t.ndim):
            if leg == leg_skip:
                continue
            lam = st.lams[lam_key(st, site, leg)]
            inv = np.where(lam > pinv_floor, 1.0 / np.where(lam > pinv_floor, lam, 1.0), 0.0)
            shape = [1] * new_t.ndim
            shape[leg] = lam.size
            new_t = new_t * inv.reshape(shape)
        st.tensors[site] = new_t
    if np.any(lam_new < pinv_floor):
        warnings.warn(
            f"bond weight below pinv floor after truncation on bond {bond.key}",
            RuntimeWarning,
            stacklevel=2,
        )
    st.lams[bond.key] = lam_new
    return st, discarded


# ---------------------------------------------------------------------------
# expectation values (mean-field environment closure)


def _pair_transfer(state: IPepsState, site: int, leg: int, keep_bond_lam: bool):
    """P[ket_p, bra_p, ket_b, bra_b] with every other leg closed ket-bra."""
    t = _scaled_tensor(state, site, skip_leg=(None if keep_bond_lam else leg))
    z = t.ndim - 1
    letters = _LEG_LETTERS[:z]
    li = leg - 1
    ket = "p" + letters
    bra = "q" + letters[:li] + "B" + letters[li + 1:]
    sub = f"{ket},{bra}->pq{letters[li]}B"
    return einsum2(sub, t, np.conj(t))


def expectation_terms_peps(state: IPepsState, terms: OperatorTerms) -> float:
    """Per-unit-cell expectation with the mean-field environment.

    Supported supports: a single site, or a nearest-neighbor pair along a
    positive axis.  Dangling bonds carry their full weight in each layer;
    the interior bond weight of a pair rides the + side once per layer.
    """
    d = state.local_dim
    dlat = state.lattice.dimension
    total = 0.0
    imag_max = 0.0
    for term in terms.terms:
        if len(term.sites) == 1:
            for site in range(state.n_sites):
                t = _scaled_tensor(state, site)
                applied = np.tensordot(term.matrix, t, axes=([1], [0]))
                add_work(float(t.size) * d)
                num = complex(np.vdot(t, applied))
                den = float(np.real(np.vdot(t, t)))
                total += num.real / den
                imag_max = max(imag_max, abs(num.imag) / den)
            continue
        if len(term.sites) != 2:
            raise ValueError(
                f"unsupported support {term.sites}: need single site or "
                "nearest-neighbor pair"
            )
        offset = tuple(np.subtract(term.sites[1], term.sites[0]))
        axes_hit = [a for a, o in enumerate(offset) if o != 0]
        if len(axes_hit) != 1 or offset[axes_hit[0]] != 1:
            raise ValueError(f"unsupported pair offset {offset}")
        axis = axes_hit[0]
        op = term.matrix.reshape(d, d, d, d)  # (bra_i, bra_j, ket_i, ket_j)
        for b in bond_list(state):
            if b.axis != axis:
                continue
            p_i = _pair_transfer(state, b.i_site, b.i_leg, keep_bond_lam=True)
            p_j = _pair_transfer(state, b.j_site, b.j_leg, keep_bond_lam=False)
            combined = einsum2("kKaA,lLaA->kKlL", p_i, p_j)
            num = complex(einsum2("KLkl,kKlL->", op, combined))
            den = float(np.real(np.einsum("kkll->", combined)))
            total += num.real / den
            imag_max = max(imag_max, abs(num.imag) / den)
    if imag_max > 1e-10 * max(1.0, abs(total)):
        warnings.warn(
            f"imaginary part {imag_max:.2e} in expectation value",
            RuntimeWarning,
            stacklevel=2,
        )
    return total


def scramble_gauge(state: IPepsState, seed: int) -> IPepsState:
    """Insert random invertible maps (and compensating weights) on every
    bond without changing the state; breaks the canonical gauge."""
    rng = np.random.default_rng(seed)
    st = state.copy()
    for b in bond_list(st):
        lam = st.lams[b.key]
        n = lam.size
        q = np.linalg.qr(rng.normal(size=(n, n)))[0]
        lam_new = np.sort(rng.uniform(0.5, 1.5, size=n))[::-1]
        lam_new /= np.linalg.norm(lam_new)
        a = (np.sqrt(lam)[:, None] * q) / np.sqrt(lam_new)[None, :]
        st.tensors[b.i_site] = _apply_on_leg(st.tensors[b.i_site], b.i_leg, a)
        st.tensors[b.j_site] = _apply_on_leg(st.tensors[b.j_site], b.j_leg, a)
        st.lams[b.key] = lam_new
    return st


# ---------------------------------------------------------------------------
# evolution driver


def _axis_bond_matrices(ham: OperatorTerms, dlat: int) -> tuple[np.ndarray, dict]:
    """Split the Hamiltonian terms into the on-site part and one bond
    matrix per positive axis."""
    d = ham.local_dim
    site = np.zeros((d, d), dtype=float)
    bonds: dict[int, np.ndarray] = {}
    for t in ham.terms:
        if len(t.sites) == 1:
            site = site + np.real(t.matrix)
        elif len(t.sites) == 2:
            offset = tuple(np.subtract(t.sites[1], t.sites[0]))
            axes_hit = [a for a, o in enumerate(offset) if o != 0]
            if len(axes_hit) != 1 or offset[axes_hit[0]] != 1:
                raise ValueError(f"non-nearest-neighbor bond {t.sites}")
            a = axes_hit[0]
            bonds[a] = bonds.get(a, np.zeros((d * d, d * d))) + np.real(t.matrix)
        else:
            raise ValueError("evolution supports 1- and 2-site terms only")
    for a in range(dlat):
        bonds.setdefault(a, np.zeros((d * d, d * d)))
    return site, bonds


def run_evolution_peps(
    model: Model,
    schedule: EvolutionSchedule,
    D_max: int,
) -> GapTrace:
    """Imaginary-time simple update recording C(tau) = ln|<i[H,O]>| per cell.

    gates scheme: second-order Trotter over the checkerboard bond classes
    (forward then reverse half steps), gauge-fixed every ``so_every``
    steps.  mpo scheme: one axis propagator after another on the
    single-site cell, superorthogonalizing at every application.
    """
    dlat = model.lattice.dimension
    if dlat < 2:
        raise ValueError("run_evolution_peps needs a 2D or 3D model")
    comm = model.commutator()
    site_h, bond_h = _axis_bond_matrices(model.hamiltonian, dlat)
    dtau = schedule.dtau

    if schedule.scheme == "mpo":
        lattice = LatticeSpec(dlat, 2 * dlat, "single-site", model.lattice.axes)
        state = random_product_ipeps(lattice, schedule.seed)
        mpos = [
            build_wii(hamiltonian_line_mpo(bond_h[a], site_h, 1.0 / dlat), dtau, a)
            for a in range(dlat)
        ]

        msg_cache: dict = {}

        def sweep(st):
            for a in range(dlat):
                st, info = apply_axis_mpo(
                    st, mpos[a], a, D_max, schedule.so_tol, 200,
                    msg_init=msg_cache.get("msgs"),
                )
                msg_cache["msgs"] = info.messages
            return st

    else:
        lattice = LatticeSpec(dlat, 2 * dlat, "two-site-checkerboard", model.lattice.axes)
        state = random_product_ipeps(lattice, schedule.seed)
        z = model.lattice.connectivity
        half_gates = {}
        for a in range(dlat):
            h = bond_h[a] + (
                np.kron(site_h, np.eye(model.hamiltonian.local_dim))
                + np.kron(np.eye(model.hamiltonian.local_dim), site_h)
            ) / z
            half_gates[a] = bond_gate(h, dtau / 2.0)
        order = [b for b in bond_list(state)]
        step_counter = [0]

        def sweep(st):
            for b in order + order[::-1]:
                st, _ = simple_update_bond(
                    st, half_gates[b.axis], b, D_max, schedule.rel_tol
                )
            step_counter[0] += 1
            if schedule.so_every and step_counter[0] % schedule.so_every == 0:
                st, _ = superorthogonalize(st, schedule.so_tol, 200)
            return st

    taus, cs = [], []
    c_start = None
    n_steps = int(round(schedule.tau_max / dtau))
    for step in range(n_steps + 1):
        if step > 0:
            state = sweep(state)
        if step % schedule.measure_every == 0:
            val = expectation_terms_peps(state, comm)
            if np.isfinite(val) and val != 0.0:
                c = float(np.log(abs(val)))
                taus.append(step * dtau)
                cs.append(c)
                if c_start is None:
                    c_start = c
                elif c - c_start < UNDERFLOW_DROP:
                    break
    metadata = {
        "model": model.name,
        "scheme": schedule.scheme,
        "D": D_max,
        "dtau": dtau,
        "seed": schedule.seed,
        "measure_every": schedule.measure_every,
        "tau_max": schedule.tau_max,
        "so_tol": schedule.so_tol,
        "so_every": schedule.so_every if schedule.scheme == "gates" else 1,
        **model.params,
    }
    return GapTrace(np.array(taus), np.array(cs), metadata)
