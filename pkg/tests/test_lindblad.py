import math

import numpy as np
import pytest
from scipy.linalg import expm

from qpiston import baths, lindblad
from qpiston import operators as ops


def flat_config(n=6, omega0=3.0, nu=1.0, g=0.2, th=2.0, tc=0.5, gh=0.4, gc=0.25):
    return lindblad.MachineConfig(
        omega0=omega0, nu=nu, g=g, coupling="dispersive",
        hot=baths.BathSpec("H", th, baths.FlatSpectrum(gh)),
        cold=baths.BathSpec("C", tc, baths.FlatSpectrum(gc)),
        dims=ops.HilbertDims(n),
    )


def random_density(d, seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = m @ m.conj().T
    return rho / np.trace(rho).real


def test_config_validation():
    with pytest.raises(ValueError, match="weak-coupling"):
        flat_config(g=0.5)
    with pytest.raises(ValueError, match="omega_minus"):
        flat_config(omega0=1.0, nu=2.0, g=0.2)
    with pytest.raises(ValueError, match="delta"):
        lindblad.MachineConfig(
            omega0=3.0, nu=1.0, g=0.2, coupling="spin_boson",
            hot=baths.BathSpec("H", 2.0, baths.FlatSpectrum(0.1)),
            cold=baths.BathSpec("C", 1.0, baths.FlatSpectrum(0.1)),
            dims=ops.HilbertDims(4),
        )
    with pytest.raises(ValueError, match="delta"):
        lindblad.MachineConfig(
            omega0=3.0, nu=1.0, g=0.2, coupling="dispersive",
            hot=baths.BathSpec("H", 2.0, baths.FlatSpectrum(0.1)),
            cold=baths.BathSpec("C", 1.0, baths.FlatSpectrum(0.1)),
            dims=ops.HilbertDims(4), delta=2.0,
        )


def test_combination_frequencies():
    cfg = flat_config()
    assert cfg.combination_frequencies() == (4.0, 2.0)
    sb = lindblad.MachineConfig(
        omega0=1.05, nu=1.0, g=0.2, coupling="spin_boson",
        hot=baths.BathSpec("H", 2.0, baths.FlatSpectrum(0.1)),
        cold=baths.BathSpec("C", 1.0, baths.FlatSpectrum(0.1)),
        dims=ops.HilbertDims(4), delta=0.05,
    )
    wp, wm = sb.combination_frequencies()
    assert wp == pytest.approx(1.2)
    assert wm == pytest.approx(0.8)
    with pytest.raises(ValueError, match="dispersive"):
        lindblad.build_liouvillian(sb)


def test_generator_matches_hand_expanded_fock_equations():
    # hand-place every jump operator on the 6-dimensional (e0..e2, g0..g2)
    # basis and apply the master equation to each basis matrix; the library
    # superoperator must reproduce that action entry-by-entry
    cfg = flat_config(n=3)
    liou = lindblad.build_liouvillian(cfg)
    sup = liou.dense_superoperator()

    s2 = math.sqrt(2.0)
    sm = np.zeros((6, 6), complex)   # sigma_- x I
    sm[3, 0] = sm[4, 1] = sm[5, 2] = 1.0
    smb = np.zeros((6, 6), complex)  # sigma_- x b : e_n -> sqrt(n) g_{n-1}
    smb[3, 1] = 1.0
    smb[4, 2] = s2
    smbd = np.zeros((6, 6), complex)  # sigma_- x b† : e_n -> sqrt(n+1) g_{n+1}
    smbd[4, 0] = 1.0
    smbd[5, 1] = s2

    h = np.diag([1.5, 2.5, 3.5, -1.5, -0.5, 0.5]).astype(complex)  # omega0=3, nu=1

    wp, wm = 4.0, 2.0
    wt = (cfg.g / cfg.nu) ** 2
    jumps = []
    for bath in (cfg.hot, cfg.cold):
        for a_op, w, weight in ((sm, 3.0, 1.0), (smb, wp, wt), (smbd, wm, wt)):
            jumps.append((a_op, weight * baths.response(bath, w)))
            jumps.append((a_op.conj().T, weight * baths.response(bath, -w)))

    def rhs(rho):
        out = -1j * (h @ rho - rho @ h)
        for a, rate in jumps:
            ada = a.conj().T @ a
            out += rate * (a @ rho @ a.conj().T - 0.5 * (ada @ rho + rho @ ada))
        return out

    oracle = np.zeros((36, 36), complex)
    for i in range(6):
        for j in range(6):
            e = np.zeros((6, 6), complex)
            e[i, j] = 1.0
            oracle[:, 6 * i + j] = rhs(e).reshape(-1)
    assert np.allclose(oracle, sup, atol=1e-12)


def test_superoperator_preserves_trace():
    liou = lindblad.build_liouvillian(flat_config(n=5))
    sup = liou.dense_superoperator()
    d = 10
    trace_row = sum(sup[i * d + i, :] for i in range(d))
    assert np.abs(trace_row).max() < 1e-12


def test_propagator_channel_is_completely_positive():
    liou = lindblad.build_liouvillian(flat_config(n=4))
    d = 8
    channel = expm(liou.dense_superoperator() * 0.05)
    choi = np.zeros((d * d, d * d), complex)
    for i in range(d):
        for j in range(d):
            e = np.zeros((d, d), complex)
            e[i, j] = 1.0
            phi = (channel @ e.reshape(-1)).reshape(d, d)
            choi += np.kron(e, phi)
    vals = np.linalg.eigvalsh((choi + choi.conj().T) / 2)
    assert vals.min() > -1e-8


def test_stripe_propagator_matches_dense_exponential():
    cfg = flat_config(n=6)
    liou = lindblad.build_liouvillian(cfg)
    rho0 = random_density(12, seed=7)
    t = 0.7
    dense = (expm(liou.dense_superoperator() * t) @ rho0.reshape(-1)).reshape(12, 12)
    stripe = lindblad.StripePropagator(liou, t).apply(rho0)
    assert np.abs(dense - stripe).max() < 1e-10


def test_evolve_multi_step_matches_dense_and_preserves_invariants():
    cfg = flat_config(n=8)
    liou = lindblad.build_liouvillian(cfg)
    rho0 = np.kron(np.diag([0.3, 0.7]).astype(complex), ops.thermal_state(0.12, 8))
    grid = np.array([0.0, 0.25, 0.5, 0.75, 1.0, 1.7])  # nonuniform tail
    res = lindblad.evolve(liou, rho0, grid)
    sup = liou.dense_superoperator()
    for t, rho in zip(res.times, res.states):
        ref = (expm(sup * t) @ rho0.reshape(-1)).reshape(16, 16)
        assert np.abs(rho - ref).max() < 1e-10
        ops.validate_density_operator(rho)
    assert res.positivity_repairs == 0


def test_evolve_trivial_grids():
    cfg = flat_config(n=6)
    liou = lindblad.build_liouvillian(cfg)
    rho0 = np.kron(np.diag([0.5, 0.5]).astype(complex), ops.thermal_state(0.05, 6))
    res = lindblad.evolve(liou, rho0, [0.0])
    assert np.allclose(res.states[0], rho0)
    with pytest.raises(ValueError):
        lindblad.evolve(liou, rho0, [0.5, 0.5])


def test_zero_rates_give_pure_rotation():
    cfg = flat_config(gh=0.0, gc=0.0, n=8)
    liou = lindblad.build_liouvillian(cfg)
    tls = np.array([[0.6, 0.2], [0.2, 0.4]], complex)
    rho0 = np.kron(tls, ops.coherent_state(0.3, 8))
    res = lindblad.evolve(liou, rho0, [0.0, 0.4, 0.8])
    for rho in res.states:
        assert np.allclose(np.diag(rho), np.diag(rho0), atol=1e-12)
    # TLS coherence picks up exactly the omega0 phase on the n=m Fock diagonal
    c0 = rho0[0, 8]
    c1 = res.states[1][0, 8]
    assert c1 == pytest.approx(c0 * np.exp(-1j * 3.0 * 0.4), abs=1e-12)


def test_tls_relaxes_to_gibbs_with_piston_untouched():
    # bath response supported only around omega0: piston populations frozen
    shape = baths.TabulatedSpectrum((2.8, 3.0, 3.2), (0.0, 0.5, 0.0))
    cfg = lindblad.MachineConfig(
        omega0=3.0, nu=1.0, g=0.2, coupling="dispersive",
        hot=baths.BathSpec("H", 2.0, shape),
        cold=baths.BathSpec("C", 1.0, baths.FlatSpectrum(0.0)),
        dims=ops.HilbertDims(10),
    )
    liou = lindblad.build_liouvillian(cfg)
    piston = ops.thermal_state(0.2, 10)
    rho0 = np.kron(np.diag([0.9, 0.1]).astype(complex), piston)

    g_down, g_up = 0.5, 0.5 * math.exp(-3.0 / 2.0)
    rate = g_down + g_up
    res = lindblad.evolve(liou, rho0, [0.0, 0.5, 1.0, 30.0])

    p_final = ops.partial_trace_piston(res.states[-1], cfg.dims)
    assert p_final[0, 0].real / p_final[1, 1].real == pytest.approx(math.exp(-1.5), rel=1e-6)
    for rho in res.states:
        assert np.allclose(
            np.diag(ops.partial_trace_tls(rho, cfg.dims)), np.diag(piston), atol=1e-12
        )
    # <sigma_z> relaxes at exactly G(omega0) + G(-omega0)
    zs = [np.real(np.trace(ops.pauli("z", cfg.dims) @ r)) for r in res.states[:3]]
    z_ss = (g_up - g_down) / rate
    fitted = math.log((zs[1] - z_ss) / (zs[2] - z_ss)) / 0.5
    assert fitted == pytest.approx(rate, rel=1e-6)


def test_truncation_audit_aborts():
    cfg = flat_config(n=4)
    liou = lindblad.build_liouvillian(cfg)
    rho0 = np.kron(np.diag([1.0, 0.0]).astype(complex), ops.fock_state(3, 4))
    with pytest.raises(lindblad.TruncationError, match="fock_cutoff"):
        lindblad.evolve(liou, rho0, [0.0, 0.1])


def test_heat_currents_sum_to_total_energy_change():
    cfg = flat_config(n=6)
    liou = lindblad.build_liouvillian(cfg)
    rho = random_density(12, seed=3)
    drho = (liou.dense_superoperator() @ rho.reshape(-1)).reshape(12, 12)
    de_dt = np.trace(liou.hamiltonian() @ drho).real
    jh = liou.heat_current(rho, "H")
    jc = liou.heat_current(rho, "C")
    assert jh + jc == pytest.approx(de_dt, abs=1e-12 * max(1.0, abs(de_dt)))


def test_equilibrium_currents_vanish():
    # both baths at the same temperature, state = global Gibbs: no heat flow
    t_common = 1.3
    cfg = flat_config(th=t_common, tc=t_common, gh=0.2, gc=0.3, n=24)
    liou = lindblad.build_liouvillian(cfg)
    beta = 1.0 / t_common
    h = liou.hamiltonian()
    gibbs = np.diag(np.exp(-beta * np.diag(h))).astype(complex)
    gibbs /= np.trace(gibbs).real
    assert abs(liou.heat_current(gibbs, "H")) < 1e-12
    assert abs(liou.heat_current(gibbs, "C")) < 1e-12


def test_tls_steady_populations_against_rate_matrix():
    cfg = flat_config(omega0=2.0, th=8.0, tc=1.0, gh=0.1, gc=0.3)
    rho11, rho00 = lindblad.tls_steady_populations(cfg)
    down = 0.1 + 0.3
    up = 0.1 * math.exp(-2.0 / 8.0) + 0.3 * math.exp(-2.0 / 1.0)
    m = np.array([[-down, up], [down, -up]])
    vals, vecs = np.linalg.eig(m)
    null = np.real(vecs[:, np.argmin(np.abs(vals))])
    null /= null.sum()
    assert rho11 == pytest.approx(null[0], abs=1e-10)
    assert rho00 == pytest.approx(null[1], abs=1e-10)
    assert rho11 + rho00 == pytest.approx(1.0, abs=1e-14)


def test_tls_steady_populations_requires_response():
    shape = baths.TabulatedSpectrum((3.9, 4.0, 4.1), (0.0, 0.5, 0.0))  # only at omega_plus
    cfg = lindblad.MachineConfig(
        omega0=3.0, nu=1.0, g=0.2, coupling="dispersive",
        hot=baths.BathSpec("H", 2.0, shape),
        cold=baths.BathSpec("C", 1.0, baths.FlatSpectrum(0.0)),
        dims=ops.HilbertDims(4),
    )
    with pytest.raises(ValueError, match="omega0"):
        lindblad.tls_steady_populations(cfg)


def test_reduced_rates_thermal_equilibrium_identity():
    # single bath: the reduced piston must settle at the Bose occupation of
    # the bath temperature, i.e. D/Gamma = 1/(e^{nu/T} - 1)
    cfg = flat_config(th=2.0, tc=2.0, gh=0.4, gc=0.0)
    pair = lindblad.reduce_to_piston(cfg)
    assert pair.gamma > 0
    assert pair.dee / pair.gamma == pytest.approx(1.0 / (math.exp(1.0 / 2.0) - 1.0), rel=1e-12)


def test_reduced_rates_zero_without_sideband_response():
    shape = baths.TabulatedSpectrum((2.8, 3.0, 3.2), (0.0, 0.5, 0.0))
    cfg = lindblad.MachineConfig(
        omega0=3.0, nu=1.0, g=0.2, coupling="dispersive",
        hot=baths.BathSpec("H", 2.0, shape),
        cold=baths.BathSpec("C", 1.0, baths.FlatSpectrum(0.0)),
        dims=ops.HilbertDims(4),
    )
    pair = lindblad.reduce_to_piston(cfg)
    assert pair.gamma == 0.0 and pair.dee == 0.0


def test_rate_pair_validation():
    with pytest.raises(ValueError):
        lindblad.RatePair(0.1, -1e-3)


def test_lab_frame_round_trip():
    cfg = flat_config(n=12)
    rho = random_density(24, seed=11)
    back = lindblad.to_dressed_frame(lindblad.to_lab_frame(rho, cfg), cfg)
    assert np.abs(back - rho).max() < 1e-10


class TestCheckpoint:
    def test_round_trip_full_space(self, tmp_path):
        dims = ops.HilbertDims(6)
        rho = random_density(dims.dim, seed=3)
        digest = "ab" * 32
        path = tmp_path / "snap.chk"
        lindblad.save_checkpoint(path, rho, 12.5, digest, dims)
        loaded = lindblad.load_checkpoint(path)
        assert loaded.config_sha256 == digest
        assert loaded.dims == dims
        assert loaded.t == 12.5
        assert np.array_equal(loaded.rho, rho)
        assert not (tmp_path / "snap.chk.tmp").exists()

    def test_round_trip_piston_only(self, tmp_path):
        dims = ops.HilbertDims(9, has_tls=False)
        rho = random_density(9, seed=4)
        path = tmp_path / "piston.chk"
        lindblad.save_checkpoint(path, rho, 0.0, "0" * 64, dims)
        loaded = lindblad.load_checkpoint(path)
        assert loaded.dims.has_tls is False
        assert loaded.rho.shape == (9, 9)
        assert np.array_equal(loaded.rho, rho)

    def test_rejects_bad_hash_and_shape(self, tmp_path):
        dims = ops.HilbertDims(4)
        rho = random_density(8, seed=5)
        with pytest.raises(ValueError, match="64 hex"):
            lindblad.save_checkpoint(tmp_path / "x.chk", rho, 0.0, "abc", dims)
        with pytest.raises(ValueError, match="shape"):
            lindblad.save_checkpoint(
                tmp_path / "x.chk", rho[:4, :], 0.0, "0" * 64, dims
            )

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "junk.chk"
        path.write_bytes(b"this is not a checkpoint")
        with pytest.raises(ValueError, match="not a trajectory checkpoint"):
            lindblad.load_checkpoint(path)

    def test_rejects_truncated_payload(self, tmp_path):
        dims = ops.HilbertDims(4)
        rho = random_density(dims.dim, seed=6)
        path = tmp_path / "snap.chk"
        lindblad.save_checkpoint(path, rho, 1.0, "0" * 64, dims)
        data = path.read_bytes()
        path.write_bytes(data[:-16])
        with pytest.raises(ValueError, match="payload"):
            lindblad.load_checkpoint(path)
