import itertools
import json
import math

import numpy as np
import pytest
from scipy import stats

from sphereot.exceptions import (ConfigError, NonFinitePotential, NonFiniteUpdate,
                                 SizeMismatch)
from sphereot.flows import (FlowConfig, FlowState, exact_sphere_w2, flow_step, gla_step,
                            icosahedron_target, nll, preset_config, run_flow, run_gla,
                            vmf_potential_grad, _slices)
from sphereot.sliced import SlicedConfig, dssw_hat, frozen_value
from sphereot.sphere import (VmfComponent, VmfMixture, icosahedron_mixture,
                             mixture_log_density, sample_uniform_sphere, sample_vmf)


def small_cfg(**kw):
    base = dict(distance=SlicedConfig(L=30, seed=1), steps=5, eval_every=2, n_particles=40,
                lr=1e-2)
    base.update(kw)
    return FlowConfig(**base)


class TestExactW2:
    def test_identical(self, rng):
        X = sample_uniform_sphere(3, 10, rng)
        assert exact_sphere_w2(X, X[::-1]) == pytest.approx(0.0, abs=1e-7)

    def test_antipodal(self):
        assert exact_sphere_w2([[0, 0, 1.0]], [[0, 0, -1.0]]) == pytest.approx(math.pi)

    def test_permutation_oracle(self, rng):
        X, Y = sample_uniform_sphere(3, 6, rng), sample_uniform_sphere(3, 6, rng)
        C = np.arccos(np.clip(X @ Y.T, -1, 1)) ** 2
        best = min(np.mean(C[np.arange(6), list(p)]) for p in itertools.permutations(range(6)))
        assert exact_sphere_w2(X, Y) == pytest.approx(np.sqrt(best), abs=1e-9)

    def test_metric_properties(self, rng):
        for _ in range(10):
            A, B, C = (sample_uniform_sphere(3, 16, rng) for _ in range(3))
            ab, bc, ac = exact_sphere_w2(A, B), exact_sphere_w2(B, C), exact_sphere_w2(A, C)
            assert ab == pytest.approx(exact_sphere_w2(B, A), abs=1e-9)
            assert ac <= ab + bc + 1e-9

    def test_size_mismatch(self, rng):
        with pytest.raises(SizeMismatch):
            exact_sphere_w2(sample_uniform_sphere(3, 4, rng), sample_uniform_sphere(3, 5, rng))


class TestNLL:
    def test_uniform_single(self):
        mix = VmfMixture((VmfComponent([0, 0, 1], 0.0),), [1.0])
        assert nll(np.array([[0, 0, 1.0]]), mix) == pytest.approx(math.log(4 * math.pi))

    def test_sum_convention(self, rng):
        mix = icosahedron_mixture(50.0)
        X = sample_uniform_sphere(3, 30, rng)
        assert nll(np.vstack([X, X]), mix) == pytest.approx(2 * nll(X, mix), rel=1e-12)

    def test_at_modes_direct_sum(self):
        mix = icosahedron_mixture(50.0)
        modes = np.array([c.mean for c in mix.components])
        X = modes[np.arange(200) % 12]
        direct = 0.0
        for x in X:
            dens = sum(w * 50 / (4 * np.pi * np.sinh(50)) * np.exp(50 * (c.mean @ x))
                       for w, c in zip(mix.weights, mix.components))
            direct -= np.log(dens)
        assert nll(X, mix) == pytest.approx(direct, abs=1e-6)


class TestFlowStep:
    def test_zero_rate_identity(self, rng):
        X, Y = sample_uniform_sphere(3, 20, rng), sample_uniform_sphere(3, 20, rng)
        new = flow_step(FlowState(X.copy()), Y, small_cfg(lr=0.0))
        np.testing.assert_array_equal(new.particles, X)
        assert new.step == 1

    @pytest.mark.parametrize("optimizer", ["adam", "pgd"])
    def test_at_target_no_motion(self, optimizer, rng):
        X = sample_uniform_sphere(3, 20, rng)
        new = flow_step(FlowState(X.copy()), X.copy(), small_cfg(optimizer=optimizer))
        assert np.max(np.linalg.norm(new.particles - X, axis=1)) < 1e-9

    def test_pgd_step_descends(self):
        rng = np.random.default_rng(4)
        X, Y = sample_uniform_sphere(3, 64, rng), sample_uniform_sphere(3, 64, rng)
        cfg = small_cfg(optimizer="pgd", fixed_frames=True)
        frames = _slices(cfg, 3, 0)
        w = dssw_hat(X, Y, cfg.distance, frames=frames).weights
        before = frozen_value(X, Y, frames, w, cfg.distance)
        after = []
        for lr in (1e-1, 1e-2, 1e-3):
            c = small_cfg(optimizer="pgd", fixed_frames=True, lr=lr)
            P = flow_step(FlowState(X.copy()), Y, c, frames=frames).particles
            after.append(frozen_value(P, Y, frames, w, cfg.distance))
        assert min(after) < before

    def test_descent_over_50_steps(self):
        rng = np.random.default_rng(5)
        X, Y = sample_uniform_sphere(3, 30, rng), sample_uniform_sphere(3, 30, rng)
        cfg = FlowConfig(distance=SlicedConfig(L=20, prefactor="normalized"), optimizer="pgd",
                         lr=0.05, fixed_frames=True)
        frames = _slices(cfg, 3, 0)
        state = FlowState(X)
        prev = dssw_hat(X, Y, cfg.distance, frames=frames).value
        for _ in range(50):
            state = flow_step(state, Y, cfg, frames=frames)
            cur = dssw_hat(state.particles, Y, cfg.distance, frames=frames).value
            assert cur <= prev + 1e-12
            prev = cur

    def test_non_finite_update(self, rng, monkeypatch):
        from sphereot import flows
        monkeypatch.setattr(flows, "sliced_gradient",
                            lambda *a, **k: np.full((5, 3), np.nan))
        with pytest.raises(NonFiniteUpdate):
            flow_step(FlowState(sample_uniform_sphere(3, 5, rng)),
                      sample_uniform_sphere(3, 5, rng), small_cfg())


class TestRunFlow:
    def test_trace_length(self, rng):
        tgt = sample_vmf(VmfComponent([0, 0, 1], 10.0), 60, rng)
        for steps, every in [(5, 2), (6, 2), (1, 5), (0, 3)]:
            res = run_flow(None, tgt, small_cfg(steps=steps, eval_every=every))
            assert len(res.trace) == math.ceil(steps / every) + 1
            assert res.trace[-1]["step"] == steps

    def test_single_step_matches_flow_step(self, rng):
        tgt = sample_uniform_sphere(3, 40, rng)
        X0 = sample_uniform_sphere(3, 40, rng)
        cfg = small_cfg(steps=1)
        res = run_flow(X0, tgt, cfg)
        direct = flow_step(FlowState(X0.copy()), tgt, cfg)
        np.testing.assert_allclose(res.state.particles, direct.particles, atol=1e-14)

    def test_deterministic(self, rng):
        tgt = sample_uniform_sphere(3, 50, rng)
        cfg = small_cfg(batch_size=20)
        a = run_flow(None, tgt, cfg).state.particles
        b = run_flow(None, tgt, cfg).state.particles
        assert a.tobytes() == b.tobytes()

    def test_unit_norm_preserved(self, rng):
        tgt = sample_vmf(VmfComponent([1, 0, 0], 20.0), 40, rng)
        res = run_flow(None, tgt, small_cfg(steps=200, eval_every=100, lr=0.05))
        assert np.max(np.abs(np.linalg.norm(res.state.particles, axis=1) - 1)) < 1e-9

    def test_flow_approaches_target(self):
        rng = np.random.default_rng(6)
        tgt = sample_vmf(VmfComponent([0, 0, 1], 20.0), 100, rng)
        cfg = FlowConfig(distance=SlicedConfig(L=100, seed=2), lr=0.02, steps=150,
                         eval_every=50, n_particles=100)
        res = run_flow(None, tgt, cfg)
        assert res.trace[-1]["log_w2"] < res.trace[0]["log_w2"] - 1.0

    def test_outputs(self, rng):
        mix = icosahedron_mixture(50.0)
        tgt = icosahedron_target(5, 50.0, rng)
        res = run_flow(None, tgt, small_cfg(steps=2, eval_every=1), mixture=mix,
                       record_trajectory=True)
        rows = [json.loads(line) for line in res.metrics_ndjson().splitlines()]
        assert [r["step"] for r in rows] == [0, 1, 2]
        assert set(rows[0]) == {"step", "nll", "log_w2", "wallclock"}
        lines = res.trajectory_csv().splitlines()
        assert lines[0] == "step,particle_id,x0,x1,x2"
        assert len(lines) == 1 + 3 * 40

    def test_presets(self):
        mini = preset_config("mini", seed=3)
        assert (mini.batch_size, mini.lr, mini.steps, mini.distance.L) == (200, 1e-3, 500, 1000)
        full = preset_config("full")
        assert full.batch_size is None and full.lr == 1e-2
        with pytest.raises(ConfigError):
            preset_config("huge")

    def test_icosahedron_target_counts(self):
        X = icosahedron_target(200, 50.0, 0)
        assert X.shape == (2400, 3)
        modes = np.array([c.mean for c in icosahedron_mixture(50.0).components])
        counts = np.bincount(np.argmax(X @ modes.T, axis=1), minlength=12)
        assert np.all(np.abs(counts - 200) <= 5)


class TestGLA:
    def test_bounded_step(self, rng):
        X = sample_uniform_sphere(3, 100, rng)
        g = rng.standard_normal((100, 3))
        gamma = 1e-6
        rng2 = np.random.default_rng(1)
        Z = np.random.default_rng(1).standard_normal((100, 3))
        new = gla_step(X, g, gamma, rng2)
        bound = np.sqrt(2 * gamma) * np.linalg.norm(Z, axis=1) + gamma * np.linalg.norm(g, axis=1)
        assert np.all(np.linalg.norm(new - X, axis=1) <= bound + 1e-15)

    def test_errors(self, rng):
        X = sample_uniform_sphere(3, 2, rng)
        with pytest.raises(NonFinitePotential):
            gla_step(X, np.full((2, 3), np.inf), 1e-3, rng)
        with pytest.raises(ConfigError):
            gla_step(X, np.zeros((2, 3)), 0.0, rng)

    def test_unit_norm_long_run(self):
        rng = np.random.default_rng(2)
        grad = vmf_potential_grad(VmfComponent([0, 1, 0], 10.0))
        X = sample_uniform_sphere(3, 50, rng)
        for _ in range(10_000):
            X = gla_step(X, grad, 1e-3, rng)
        assert np.max(np.abs(np.linalg.norm(X, axis=1) - 1.0)) < 1e-9

    @pytest.mark.slow
    def test_zero_potential_keeps_uniform(self):
        # on S^2 the coordinate <x, v> of a uniform point is Uniform[-1, 1]
        rng = np.random.default_rng(3)
        X = run_gla(sample_uniform_sphere(3, 500, rng), lambda A: np.zeros_like(A), 1e-3,
                    100_000, rng)
        assert stats.kstest(X @ np.array([0.6, 0.0, 0.8]), "uniform", args=(-1, 2)).pvalue > 0.01

    def test_vmf_mean_direction(self):
        mu = np.array([1.0, 1.0, 1.0]) / np.sqrt(3)
        rng = np.random.default_rng(4)
        X = run_gla(sample_uniform_sphere(3, 500, rng),
                    vmf_potential_grad(VmfComponent(mu, 10.0)), 1e-3, 10_000, rng)
        m = X.mean(axis=0)
        angle = np.degrees(np.arccos(m @ mu / np.linalg.norm(m)))
        assert angle < 5.0

    def test_mixture_gradient_potential(self, rng):
        from sphereot.sphere import mixture_log_density_grad
        mix = icosahedron_mixture(10.0)
        X = gla_step(sample_uniform_sphere(3, 10, rng),
                     lambda A: -mixture_log_density_grad(mix, A), 1e-3, rng)
        assert np.all(np.isfinite(mixture_log_density(mix, X)))
