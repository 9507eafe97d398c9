import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.linalg import expm

from specgap.models import PAULI_X, PAULI_Z
from specgap.wii import (
    build_wii,
    hamiltonian_line_mpo,
    line_hamiltonian_dense,
    mpo_to_dense,
)

J, G = 0.2, 1.0
BOND = -J * np.kron(PAULI_Z, PAULI_Z)
FIELD = -G * PAULI_X


def dense_line(n, field_fraction):
    dim = 2**n
    h = np.zeros((dim, dim))
    for i in range(n):
        ops = [np.eye(2)] * n
        ops[i] = field_fraction * FIELD
        m = ops[0]
        for o in ops[1:]:
            m = np.kron(m, o)
        h = h + m
    for i in range(n - 1):
        ops = [np.eye(2)] * n
        ops[i] = PAULI_Z
        ops[i + 1] = PAULI_Z
        m = ops[0]
        for o in ops[1:]:
            m = np.kron(m, o)
        h = h - J * m
    return h


class TestLineBlocks:
    def test_blocks_reproduce_line_hamiltonian(self):
        blocks = hamiltonian_line_mpo(BOND, FIELD, 0.5)
        got = line_hamiltonian_dense(blocks, 4)
        assert np.max(np.abs(got - dense_line(4, 0.5))) < 1e-12

    def test_zero_bond_yields_no_channels(self):
        blocks = hamiltonian_line_mpo(0.0 * BOND, FIELD, 0.5)
        assert blocks.channels == 0
        w = build_wii(blocks, 0.05)
        assert w.virtual_dim == 1
        assert_allclose(w.tensor[0, 0], expm(0.05 * 0.5 * G * PAULI_X), atol=1e-12)

    def test_zero_field_gives_zero_d_block(self):
        blocks = hamiltonian_line_mpo(BOND, 0.0 * FIELD, 0.5)
        assert np.max(np.abs(blocks.D)) == 0.0

    def test_field_fraction_validated(self):
        with pytest.raises(ValueError):
            hamiltonian_line_mpo(BOND, FIELD, 0.0)


class TestPropagator:
    def test_small_step_is_identity_channel(self):
        blocks = hamiltonian_line_mpo(BOND, FIELD, 0.5)
        dt = 1e-5
        w = build_wii(blocks, dt)
        assert np.max(np.abs(w.tensor[0, 0] - np.eye(2))) < 10 * dt
        assert np.max(np.abs(w.tensor[0, 1])) < 2 * np.sqrt(dt)
        assert np.max(np.abs(w.tensor[1, 0])) < 2 * np.sqrt(dt)

    def test_second_order_error(self):
        blocks = hamiltonian_line_mpo(BOND, FIELD, 0.5)
        n = 4
        h = dense_line(n, 0.5)
        errs = {}
        for dt in (0.2, 0.1, 0.05):
            approx = mpo_to_dense(build_wii(blocks, dt), n)
            exact = expm(-dt * h)
            errs[dt] = np.linalg.norm(approx - exact) / np.linalg.norm(exact)
        assert errs[0.05] <= 0.1 * 0.05**2 / 0.05  # loose absolute guard
        # halving the step cuts the error by ~4 (observed order >= 1.9)
        assert errs[0.1] / errs[0.05] >= 3.6
        assert errs[0.2] / errs[0.1] >= 3.6
        order = np.log2(errs[0.2] / errs[0.1])
        assert order >= 1.9

    def test_pure_field_line_exact(self):
        blocks = hamiltonian_line_mpo(0.0 * BOND, FIELD, 0.5)
        w = build_wii(blocks, 0.05)
        per_site = expm(0.05 * 0.5 * G * PAULI_X)
        got = mpo_to_dense(w, 3)
        ref = np.kron(np.kron(per_site, per_site), per_site)
        assert np.max(np.abs(got - ref)) < 1e-12

    def test_spin_flip_parity_respected(self):
        blocks = hamiltonian_line_mpo(BOND, FIELD, 0.5)
        u = mpo_to_dense(build_wii(blocks, 0.1), 4)
        p = PAULI_X
        for _ in range(3):
            p = np.kron(p, PAULI_X)
        assert np.max(np.abs(u @ p - p @ u)) < 1e-10

    def test_dtau_validated(self):
        blocks = hamiltonian_line_mpo(BOND, FIELD, 0.5)
        with pytest.raises(ValueError):
            build_wii(blocks, 0.0)
