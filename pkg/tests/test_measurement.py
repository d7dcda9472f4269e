import numpy as np
import pytest
from oracles import bessel_j, map_unitary, random_state

from kickloc.errors import CapacityError, DegenerateBranchError, DomainError
from kickloc.measurement import (
    DensityMatrix,
    EnsembleRng,
    MeasurementBackend,
    MeasurementSpec,
    RngStream,
    apply_random_phase,
    collapse_batch,
    evolve_density_matrix,
    measure_trajectory,
    measured_step,
    project,
    subspace_mask,
)
from kickloc.qstate import MapParams, QuantumState, Representation, initial_state, momenta, qubit_bit
from kickloc.rotator import step


def test_project_msb_splits_at_zero(rng):
    n_q = 10
    s = random_state(n_q, rng)
    b = project(s, 1, 0)
    support = momenta(n_q)[np.abs(b.amplitudes) > 0]
    assert support.min() == -512 and support.max() == -1
    assert b.weight == pytest.approx(np.sum(np.abs(s.amplitudes[:512]) ** 2), abs=1e-14)


def test_project_lsb_keeps_even_indices(rng):
    s = random_state(6, rng)
    b = project(s, 6, 0)
    nz = np.flatnonzero(b.amplitudes)
    assert np.all(nz % 2 == 0) and len(nz) == 32


def test_project_empty_branch():
    s = initial_state(4, -3)  # j = 5 = 0101
    assert project(s, 1, 1).weight == 0
    assert project(s, 1, 0).weight == 1


def test_completeness_and_orthogonality(rng):
    for n_q in (3, 7):
        s = random_state(n_q, rng)
        for m in range(1, n_q + 1):
            b0, b1 = project(s, m, 0), project(s, m, 1)
            assert b0.weight + b1.weight == pytest.approx(1, abs=1e-12)
            b0_state = QuantumState(b0.amplitudes / np.sqrt(b0.weight), Representation.MOMENTUM, n_q)
            assert project(b0_state, m, 1).weight == 0.0


@pytest.mark.parametrize("n_q", range(2, 13))
def test_cell_structure(n_q):
    N = 2 ** n_q
    for m in range(1, n_q + 1):
        mask = subspace_mask(m, n_q, 0)
        assert mask.sum() == N // 2
        assert np.array_equal(mask, np.array([qubit_bit(j, m, n_q) == 0 for j in range(N)]))
        # runs of consecutive states in P0
        edges = np.flatnonzero(np.diff(np.concatenate([[0], mask.astype(int), [0]])))
        starts, stops = edges[::2], edges[1::2]
        L = 2 ** (n_q - m)
        assert len(starts) == 2 ** (m - 1)
        assert np.all(stops - starts == L)
        spec = MeasurementSpec(m, "trajectories")
        assert spec.cell_length(n_q) == L and spec.cell_count() == len(starts)


def test_spec_validation():
    with pytest.raises(DomainError):
        MeasurementSpec(0, "trajectories")
    with pytest.raises(DomainError):
        MeasurementSpec(5, "trajectories").validate(4)
    with pytest.raises(DomainError):
        MeasurementSpec(None, "random-phase")
    assert MeasurementSpec(3, "none").m is None


def test_measure_born_rule_half():
    n_q = 4
    amps = np.zeros(16, complex)
    amps[[2, 3]] = 1 / np.sqrt(2)  # j=2 has a_4 = 0, j=3 has a_4 = 1
    s = QuantumState(amps, Representation.MOMENTUM, n_q)
    gen = np.random.default_rng(5)
    outcomes = [measure_trajectory(s, 4, gen)[0] for _ in range(4000)]
    freq0 = outcomes.count(0) / len(outcomes)
    assert abs(freq0 - 0.5) <= 3 * np.sqrt(0.25 / len(outcomes))
    o, post = measure_trajectory(s, 4, gen)
    assert np.count_nonzero(post.amplitudes) == 1
    assert abs(np.vdot(post.amplitudes, post.amplitudes) - 1) < 1e-12


def test_measure_certain_outcome():
    s = initial_state(4, 0)  # j = 8: a_1 = 1
    for seed in range(20):
        o, post = measure_trajectory(s, 1, RngStream(seed, 0))
        assert o == 1
        np.testing.assert_array_equal(post.amplitudes, s.amplitudes)


def test_measure_after_kick_bessel_weights():
    n_q, k = 10, 2.0
    kicked = step(initial_state(n_q), MapParams(k, 2.0, n_q))
    p0_expected = sum(bessel_j(int(n), k) ** 2 for n in momenta(n_q) if n % 2 == 0)
    assert project(kicked, n_q, 0).weight == pytest.approx(p0_expected, abs=1e-12)
    # unbiased sampling of the first measurement
    M = 20000
    psi = np.tile(kicked.amplitudes, (M, 1))
    u = EnsembleRng(11, range(M)).at(0)[:, 0]
    outcomes = collapse_batch(psi, n_q, n_q, u)
    freq0 = np.mean(outcomes == 0)
    assert abs(freq0 - p0_expected) <= 3 * np.sqrt(p0_expected * (1 - p0_expected) / M)
    np.testing.assert_allclose(np.sum(np.abs(psi) ** 2, axis=1), 1, atol=1e-12)


def test_collapse_batch_degenerate():
    psi = np.zeros((1, 16), complex)
    with pytest.raises(DegenerateBranchError):
        collapse_batch(psi, 2, 4, np.array([0.3]))


def test_random_phase_keeps_probabilities(rng):
    s = random_state(6, rng)
    out = apply_random_phase(s, 3, RngStream(1, 4))
    np.testing.assert_allclose(np.abs(out.amplitudes) ** 2, np.abs(s.amplitudes) ** 2, atol=1e-15)


def test_random_phase_on_one_subspace_is_global_phase():
    s = initial_state(5, 3)
    out = apply_random_phase(s, 2, np.random.default_rng(1))
    assert abs(abs(np.vdot(s.amplitudes, out.amplitudes)) - 1) < 1e-14


def test_random_phase_average_kills_coherences(rng):
    n_q, m, draws = 4, 2, 10_000
    s = random_state(n_q, rng)
    mask0 = subspace_mask(m, n_q, 0)
    acc = np.zeros((16, 16), complex)
    stream = RngStream(99, 0)
    for _ in range(draws):
        a = apply_random_phase(s, m, stream).amplitudes
        acc += np.outer(a, a.conj())
    acc /= draws
    off = acc[np.ix_(mask0, ~mask0)]
    assert np.max(np.abs(off)) < 3 / np.sqrt(draws)
    # diagonal blocks are untouched
    rho = np.outer(s.amplitudes, s.amplitudes.conj())
    np.testing.assert_allclose(acc[np.ix_(mask0, mask0)], rho[np.ix_(mask0, mask0)], atol=1e-12)


def test_rng_stream_is_addressable():
    a = RngStream(5, 3)
    first = [a.draw().copy() for _ in range(200)]
    b = RngStream(5, 3, position=150)
    np.testing.assert_array_equal(b.draw(), first[150])
    ens = EnsembleRng(5, range(2, 6))
    np.testing.assert_array_equal(ens.at(150)[1], first[150])
    assert not np.array_equal(RngStream(5, 4).at(0), first[0])
    assert not np.array_equal(RngStream(6, 3).at(0), first[0])


def test_measured_step_none_is_plain_step(rng):
    s = random_state(6, rng)
    p = MapParams(2.0, 2.0, 6)
    out = measured_step(s, p, MeasurementSpec(None, "none"))
    np.testing.assert_array_equal(out.amplitudes, step(s, p).amplitudes)
    with pytest.raises(DomainError):
        measured_step(s, p, MeasurementSpec(2, "density-matrix"))


# --- density matrix ---------------------------------------------------------


def _exact_measured_step(rho, k, T, n_q, m):
    U = map_unitary(k, T, n_q)
    out = U @ rho @ U.conj().T
    P0 = np.diag(subspace_mask(m, n_q, 0).astype(float))
    P1 = np.eye(2 ** n_q) - P0
    return P0 @ out @ P0 + P1 @ out @ P1


@pytest.mark.parametrize("m", [1, 3, 5])
def test_density_matrix_matches_dense_oracle(m, rng):
    n_q = 5
    s = random_state(n_q, rng)
    dm = DensityMatrix.from_state(s)
    rho = dm.rho.copy()
    for _ in range(4):
        dm = evolve_density_matrix(dm, MapParams(2.5, 1.1, n_q), m)
        rho = _exact_measured_step(rho, 2.5, 1.1, n_q, m)
        dm.check()
    np.testing.assert_allclose(dm.rho, rho, atol=1e-12)
    assert dm.trace() == pytest.approx(1, abs=1e-10)


def test_density_matrix_unmeasured_is_pure(rng):
    s = random_state(4, rng)
    p = MapParams(2.0, 2.0, 4)
    dm = evolve_density_matrix(DensityMatrix.from_state(s), p, None)
    a = step(s, p).amplitudes
    np.testing.assert_allclose(dm.rho, np.outer(a, a.conj()), atol=1e-13)


@pytest.mark.parametrize("m", [1, 4])
def test_density_matrix_zero_kick_keeps_diagonal(m, rng):
    s = random_state(4, rng)
    dm0 = DensityMatrix.from_state(s)
    dm1 = evolve_density_matrix(dm0, MapParams(0.0, 1.7, 4), m)
    np.testing.assert_allclose(dm1.diagonal(), dm0.diagonal(), atol=1e-14)
    # block diagonal input is a fixed point
    dm2 = evolve_density_matrix(evolve_density_matrix(dm1, MapParams(0.0, 0.0, 4), m), MapParams(0.0, 0.0, 4), m)
    dm3 = evolve_density_matrix(dm2, MapParams(0.0, 0.0, 4), m)
    np.testing.assert_allclose(dm3.rho, dm2.rho, atol=1e-14)


def test_density_matrix_one_step_matches_trajectories():
    n_q, m, M = 4, 4, 100_000
    p = MapParams(2.0, 2.0, n_q)
    s = random_state(n_q, np.random.default_rng(3))
    exact = evolve_density_matrix(DensityMatrix.from_state(s), p, m).diagonal()
    psi = np.tile(step(s, p).amplitudes, (M, 1))
    collapse_batch(psi, m, n_q, EnsembleRng(4, range(M)).at(0)[:, 0])
    sampled = np.mean(np.abs(psi) ** 2, axis=0)
    sigma = np.sqrt(exact * (1 - exact) / M)
    assert np.all(np.abs(sampled - exact) <= 3 * sigma + 1e-12)


def test_density_matrix_capacity():
    with pytest.raises(CapacityError):
        evolve_density_matrix(DensityMatrix(np.eye(512) / 512, 9), MapParams(1, 1, 9), 1)


def test_density_matrix_check_rejects_bad():
    with pytest.raises(DomainError):
        DensityMatrix(np.eye(4) / 2, 2).check()
    with pytest.raises(DomainError):
        DensityMatrix(np.diag([1.5, -0.5, 0, 0]), 2).check()


def test_backend_enum_values():
    assert {b.value for b in MeasurementBackend} == {"trajectories", "random-phase", "density-matrix", "none"}
