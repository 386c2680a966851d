"""
Tests for the n-particle Fleming-Viot simulator
"""

import math

import numpy as np
import pytest
from scipy.stats import kstest

from engine.exceptions import SamplingError
from engine.kernels import RelocationKernel, sample_nu_n
from engine.measures import CylinderFunction
from engine.simulator import (
    ParticleConfig,
    bridge_crossing_probability,
    first_exit,
    killed_exit_batch,
    run,
    step,
)


def test_bridge_crossing_probability():
    """Test exp(-2ab/dt)"""
    assert bridge_crossing_probability(0.1, 0.2, 0.01) == pytest.approx(math.exp(-4.0))
    assert bridge_crossing_probability(0.0, 0.3, 0.01) == 1.0
    probs = bridge_crossing_probability(np.array([0.1, 1.0]), np.array([0.1, 1.0]), 0.01)
    assert probs[0] > probs[1]


def test_step_keeps_particles_inside(mu0_law, small_basis):
    """Test that committed positions are interior and the log is ordered"""
    rng = np.random.default_rng(11)
    cfg = ParticleConfig(mu0_law.domain, sample_nu_n(mu0_law, 20, rng).positions, rng)
    kernel = RelocationKernel.fixed_h1(small_basis)
    for _ in range(200):
        cfg = step(cfg, 1e-2, kernel)
        assert mu0_law.domain.contains_many(cfg.positions).all()
    assert cfg.time == pytest.approx(2.0)
    times = [e.time for e in cfg.jump_log]
    assert len(times) > 0
    assert times == sorted(times)
    for event in cfg.jump_log:
        assert event.jump_off[0] in (0.0, math.pi)
        assert event.jump_distance == pytest.approx(abs(event.target[0] - event.jump_off[0]))


def test_step_does_not_mutate_input(mu0_law, small_basis, rng):
    """Test that step returns a new configuration"""
    cfg = ParticleConfig(mu0_law.domain, [[1.0], [2.0]], rng)
    new = step(cfg, 1e-3, RelocationKernel.fixed_h1(small_basis))
    assert cfg.positions[:, 0].tolist() == [1.0, 2.0]
    assert cfg.time == 0.0
    assert new.time == pytest.approx(1e-3)


def test_step_rejects_nonpositive_dt(mu0_law, small_basis, rng):
    """Test dt validation"""
    cfg = ParticleConfig(mu0_law.domain, [[1.0]], rng)
    with pytest.raises(ValueError):
        step(cfg, 0.0, RelocationKernel.fixed_h1(small_basis))


def test_simultaneous_hits_in_one_step(interval, small_basis):
    """Test two boundary hits within the same step"""
    rng = np.random.default_rng(3)
    cfg = ParticleConfig(interval, [[1e-6], [math.pi - 1e-6], [1.5]], rng)
    new = step(cfg, 0.01, RelocationKernel.fixed_h1(small_basis))
    assert sorted(e.particle_index for e in new.jump_log) == [0, 1]
    assert [e.time for e in new.jump_log] == sorted(e.time for e in new.jump_log)
    assert all(0.0 <= e.time <= 0.01 for e in new.jump_log)
    by_index = {e.particle_index: e for e in new.jump_log}
    assert by_index[0].jump_off == (0.0,)
    assert by_index[1].jump_off == (math.pi,)
    assert interval.contains_many(new.positions).all()


def test_uniform_survivor_needs_two_particles(interval, rng):
    """Test that n = 1 with survivor copying fails at the first hit"""
    cfg = ParticleConfig(interval, [[1e-6]], rng)
    with pytest.raises(SamplingError):
        step(cfg, 0.01, RelocationKernel.uniform_survivor(interval))


def test_run_output_grid(mu0_law, small_basis):
    """Test output rows and observable columns"""
    rng = np.random.default_rng(5)
    cfg = ParticleConfig(mu0_law.domain, sample_nu_n(mu0_law, 10, rng).positions, rng)
    obs = [CylinderFunction.mode_pairing(1), CylinderFunction.mode_pairing(2)]
    traj = run(cfg, 0.1, 0.01, RelocationKernel.fixed_h1(small_basis), obs, small_basis, output_stride=0.02)
    frame = traj.to_frame()
    assert list(frame.columns) == ["time", "h_1", "h_2", "jump_count"]
    assert len(frame) == 6
    assert np.allclose(frame["time"], np.arange(6) * 0.02)
    assert frame["jump_count"].is_monotonic_increasing
    assert frame["h_1"].iloc[0] == pytest.approx(obs[0](cfg.empirical(), small_basis))
    assert list(traj.jump_frame().columns) == ["time", "i", "y1", "z1", "distance"]


def test_run_rejects_bad_grids(mu0_law, small_basis, rng):
    """Test horizon and stride validation"""
    cfg = ParticleConfig(mu0_law.domain, [[1.0], [2.0]], rng)
    kernel = RelocationKernel.fixed_h1(small_basis)
    obs = [CylinderFunction.mode_pairing(1)]
    with pytest.raises(ValueError):
        run(cfg, 0.1, 0.01, kernel, obs, small_basis, output_stride=0.03)
    with pytest.raises(ValueError):
        run(cfg, 0.105, 0.01, kernel, obs, small_basis)
    with pytest.raises(ValueError):
        run(cfg, 0.0, 0.01, kernel, obs, small_basis)


def test_run_is_reproducible(mu0_law, small_basis):
    """Test that the same seed reproduces the trajectory and the jump log"""
    def simulate():
        rng = np.random.default_rng(99)
        cfg = ParticleConfig(mu0_law.domain, sample_nu_n(mu0_law, 8, rng).positions, rng)
        kernel = RelocationKernel.mixture_posterior(mu0_law)
        return run(cfg, 0.2, 0.01, kernel, [CylinderFunction.mode_pairing(1)], small_basis)

    a, b = simulate(), simulate()
    assert a.to_frame().equals(b.to_frame())
    assert a.jump_frame().equals(b.jump_frame())


def test_first_exit(interval):
    """Test the first boundary hit without relocation"""
    rng = np.random.default_rng(8)
    result = first_exit(interval, np.array([[0.05], [1.5], [2.0]]), 1e-3, rng)
    assert result.configuration.boundary.sum() == 1
    assert result.configuration.boundary[result.particle_index]
    assert result.tau > 0
    assert result.hit_point[0] in (0.0, math.pi)
    with pytest.raises(ValueError):
        first_exit(interval, np.array([[0.0]]), 1e-3, rng)
    with pytest.raises(ValueError):
        first_exit(interval, np.array([[1.5]]), 1e-3, rng, max_time=1e-3)


def test_killed_exit_side_probability(interval):
    """Test P_x(exit at 0) = 1 - x/π for killed Brownian motion"""
    rng = np.random.default_rng(21)
    x = math.pi / 4
    tau, face = killed_exit_batch(interval, np.full((4000, 1), x), 1e-3, rng, t_max=60.0)
    assert np.all(face >= 0)
    p = float(np.mean(face == 0))
    se = math.sqrt(0.75 * 0.25 / 4000)
    assert abs(p - 0.75) < 4.0 * se
    assert np.all(np.isfinite(tau))


@pytest.mark.parametrize("domain_name", ["interval", "square"])
def test_step_displacement_variance(request, domain_name):
    """Test that interior increments have mean 0 and covariance dt·I"""
    domain = request.getfixturevalue(domain_name)
    dt, trials = 1e-4, 100_000
    center = np.asarray(domain.lower) + 0.5 * domain.lengths
    cfg = ParticleConfig(domain, np.tile(center, (trials, 1)), np.random.default_rng(31))
    new = step(cfg, dt, RelocationKernel.uniform_survivor(domain))
    assert new.jump_log == []
    disp = new.positions - cfg.positions
    var_se = dt * math.sqrt(2.0 / (trials - 1))
    for axis in range(domain.dimension):
        assert abs(disp[:, axis].mean()) < 4.0 * math.sqrt(dt / trials)
        assert abs(disp[:, axis].var(ddof=1) - dt) < 4.0 * var_se
    if domain.dimension == 2:
        assert abs(np.mean(disp[:, 0] * disp[:, 1])) < 4.0 * dt / math.sqrt(trials)


def _final_statistics(law, basis, kernel, positions, seed, T, dt):
    rng = np.random.default_rng(seed)
    traj = run(ParticleConfig(law.domain, positions, rng), T, dt, kernel,
               [CylinderFunction.mode_pairing(1)], basis, output_stride=T)
    return traj.values[-1, 0], traj.jump_counts[-1]


def _within(a, b, sigmas):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    se = math.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size)
    return abs(a.mean() - b.mean()) <= sigmas * se


@pytest.mark.slow
def test_relabeling_particles_is_exchangeable(mu0_law, small_basis):
    """Test that permuting the initial labels leaves the law of (h_1, μ_T) and the jump count unchanged"""
    kernel = RelocationKernel.uniform_survivor(mu0_law.domain)
    positions = np.array([[0.3], [1.0], [2.5], [2.9]])
    relabeled = positions[[3, 0, 2, 1]]
    a = [_final_statistics(mu0_law, small_basis, kernel, positions, 100 + r, 0.2, 2e-3) for r in range(300)]
    b = [_final_statistics(mu0_law, small_basis, kernel, relabeled, 5000 + r, 0.2, 2e-3) for r in range(300)]
    for column in range(2):
        assert _within([s[column] for s in a], [s[column] for s in b], 4.0)


@pytest.mark.slow
def test_halving_dt_keeps_estimates(mu0_law, small_basis):
    """Test that dt and dt/2 agree within three standard errors"""
    kernel = RelocationKernel.fixed_h1(small_basis)
    starts = [sample_nu_n(mu0_law, 8, np.random.default_rng(700 + r)).positions for r in range(300)]
    coarse = [_final_statistics(mu0_law, small_basis, kernel, x, 1000 + r, 0.2, 0.01) for r, x in enumerate(starts)]
    fine = [_final_statistics(mu0_law, small_basis, kernel, x, 2000 + r, 0.2, 0.005) for r, x in enumerate(starts)]
    for column in range(2):
        assert _within([s[column] for s in coarse], [s[column] for s in fine], 3.0)


@pytest.mark.slow
def test_jump_count_grows_linearly_in_n(mu0_law, small_basis):
    """Test log-log slope 1 of the mean jump count over [0, 1]"""
    kernel = RelocationKernel.fixed_h1(small_basis)
    ns = [4, 16, 64]
    means = []
    for n in ns:
        counts = []
        for r in range(40):
            rng = np.random.default_rng([n, r])
            x0 = sample_nu_n(mu0_law, n, rng).positions
            counts.append(_final_statistics(mu0_law, small_basis, kernel, x0, [n, r, 1], 1.0, 2e-3)[1])
        means.append(np.mean(counts))
    slope = np.polyfit(np.log(ns), np.log(means), 1)[0]
    assert abs(slope - 1.0) < 0.2


@pytest.mark.slow
def test_first_exit_time_matches_survival(interval, basis):
    """Test the first hit time of three particles against Π P_x(τ > t)"""
    starts = np.array([[0.5], [1.5], [2.5]])
    rng = np.random.default_rng(41)
    taus = np.array([first_exit(interval, starts, 2e-3, rng).tau for _ in range(400)])

    def cdf(ts):
        survival = [np.prod(np.clip(basis.survival_probability(t, starts), 0.0, 1.0)) if t > 0 else 1.0
                    for t in np.atleast_1d(ts)]
        return 1.0 - np.asarray(survival)

    assert kstest(taus, cdf).pvalue > 1e-4
    for t in (0.1, 0.3):
        p = 1.0 - float(cdf(t)[0])
        se = math.sqrt(p * (1.0 - p) / taus.size)
        assert abs(np.mean(taus > t) - p) < 4.0 * se
