import copy
import math

import numpy as np
import pytest

from swarmbeam.cvae import (
    CheckpointMismatchError,
    DimensionMismatchError,
    TrainHyper,
    TrainingSet,
    build_dataset,
    decode_solution,
    encode_solution,
    forward,
    generate_population,
    init_model,
    load_model,
    loss_and_grads,
    save_model,
    solution_dim,
    train,
)
from swarmbeam.objectives import ObjectiveVector, Solution, is_feasible, repair
from swarmbeam.optimizer import ArchiveEntry, ParetoArchive, random_walk_init
from swarmbeam.rng import stream
from swarmbeam.scenario import ScenarioSpec, generate_scenario

SPEC3 = ScenarioSpec(n_uav=3, n_eaves_known=2, n_eaves_unknown=1)


def tiny_scenario(seed=0):
    return generate_scenario(seed, SPEC3)


def feasible_solution(s, seed=0):
    return random_walk_init(s, 4, stream(seed, 90), drift_radius=8.0)[3]


def tiny_model(s, seed=0, latent=2, hidden=(4,)):
    return init_model(s, latent_dim=latent, hidden=hidden, rng=stream(seed, 91))


class TestSolutionCoding:
    def test_roundtrip_up_to_repair(self):
        s = tiny_scenario()
        x = feasible_solution(s)
        decoded, feasible = decode_solution(encode_solution(x, s), s)
        assert feasible
        assert np.allclose(decoded.positions, x.positions, atol=1e-9)
        assert np.allclose(decoded.weights, x.weights, atol=1e-12)
        assert np.array_equal(decoded.receivers, x.receivers)

    def test_min_corner_encodes_to_zero(self):
        s = tiny_scenario()
        x = feasible_solution(s).copy()
        box = s.area_bounds[0]
        x.positions[0, 0] = box.lo
        vec = encode_solution(x, s)
        assert np.allclose(vec[:3], 0.0)

    def test_random_solutions_decode_feasible(self):
        s = tiny_scenario()
        rng = stream(1, 92)
        for _ in range(20):
            vec = rng.random(solution_dim(s))
            decoded, feasible = decode_solution(vec, s)
            assert feasible
            assert is_feasible(decoded, s)

    def test_dimension_checks(self):
        s = tiny_scenario()
        with pytest.raises(DimensionMismatchError):
            decode_solution(np.zeros(5), s)


class TestForwardAndLoss:
    def test_eps_zero_latent_equals_mean(self):
        s = tiny_scenario()
        m = tiny_model(s)
        x = np.zeros((1, m.solution_dim)) + 0.3
        c = np.zeros((1, m.condition_dim)) + 0.6
        out = forward(m, x, c, eps=np.zeros((1, m.latent_dim)))
        assert np.array_equal(out.z, out.mu)

    def test_zero_weight_model_outputs_bias(self):
        s = tiny_scenario()
        m = tiny_model(s)
        for w in m.enc_weights + m.dec_weights:
            w[:] = 0.0
        m.dec_biases[-1][:] = 0.25
        out = forward(m, np.ones((2, m.solution_dim)), np.ones((2, m.condition_dim)),
                      eps=np.zeros((2, m.latent_dim)))
        assert np.allclose(out.x_recon, 0.25)

    def test_kl_zero_at_prior(self):
        s = tiny_scenario()
        m = tiny_model(s)
        for w in m.enc_weights + m.enc_biases:
            w[:] = 0.0  # mu = 0, logvar = 0
        x = np.full((3, m.solution_dim), 0.4)
        c = np.full((3, m.condition_dim), 0.2)
        _, _, kl, _ = loss_and_grads(m, x, c, beta=1.0, eps=np.zeros((3, m.latent_dim)))
        assert kl == pytest.approx(0.0, abs=1e-12)

    def test_perfect_reconstruction_zero_recon_loss(self):
        s = tiny_scenario()
        m = tiny_model(s)
        for w in m.enc_weights + m.enc_biases + m.dec_weights:
            w[:] = 0.0
        m.dec_biases[-1][:] = 0.5  # constant decoder output
        x = np.full((2, m.solution_dim), 0.5)  # equals the reconstruction
        c = np.full((2, m.condition_dim), 0.1)
        total, recon, kl, _ = loss_and_grads(m, x, c, beta=1.0,
                                             eps=np.zeros((2, m.latent_dim)))
        assert recon == 0.0
        assert total == pytest.approx(kl)

    def test_kl_matches_closed_form_oracle(self):
        s = tiny_scenario()
        m = tiny_model(s, seed=3)
        rng = stream(5, 93)
        x = rng.random((4, m.solution_dim))
        c = rng.random((4, m.condition_dim))
        eps = rng.standard_normal((4, m.latent_dim))
        out = forward(m, x, c, eps)
        expected = float(
            np.mean(
                np.sum(-0.5 * (1 + out.logvar - out.mu**2 - np.exp(out.logvar)), axis=1)
            )
        )
        _, _, kl, _ = loss_and_grads(m, x, c, beta=1.0, eps=eps)
        assert kl == pytest.approx(expected, rel=1e-12)
        assert kl >= -1e-12

    def test_gradients_match_finite_differences(self):
        s = tiny_scenario()
        m = tiny_model(s, seed=7, latent=2, hidden=(4,))
        rng = stream(9, 94)
        x = rng.random((3, m.solution_dim))
        c = rng.random((3, m.condition_dim))
        eps = rng.standard_normal((3, m.latent_dim))
        beta = 0.7
        _, _, _, grads = loss_and_grads(m, x, c, beta, eps)
        params = m.parameters()
        h = 1e-5
        worst = 0.0
        for p, g in zip(params, grads):
            flat_p = p.ravel()
            flat_g = g.ravel()
            for idx in range(flat_p.size):
                orig = flat_p[idx]
                flat_p[idx] = orig + h
                up, _, _, _ = loss_and_grads(m, x, c, beta, eps)
                flat_p[idx] = orig - h
                down, _, _, _ = loss_and_grads(m, x, c, beta, eps)
                flat_p[idx] = orig
                fd = (up - down) / (2 * h)
                scale = max(abs(fd), abs(flat_g[idx]), 1e-8)
                worst = max(worst, abs(fd - flat_g[idx]) / scale)
        assert worst < 1e-4

    def test_dimension_mismatch_rejected(self):
        s = tiny_scenario()
        m = tiny_model(s)
        with pytest.raises(DimensionMismatchError):
            forward(m, np.zeros((1, 3)), np.zeros((1, m.condition_dim)),
                    eps=np.zeros((1, m.latent_dim)))


class TestTraining:
    def _dataset(self, s, rows=12, seed=0):
        pop = random_walk_init(s, rows, stream(seed, 95), drift_radius=10.0)
        archive = ParetoArchive(
            capacity=rows,
            entries=[ArchiveEntry(x, ObjectiveVector(0.0, 1.0, float(i))) for i, x in enumerate(pop)],
        )
        return build_dataset([(s, archive)])

    def test_deterministic_training(self):
        s = tiny_scenario()
        dataset = self._dataset(s)
        hyper = TrainHyper(epochs=5, batch=4, seed=3, latent_dim=2, hidden=(8,))
        m1, curve1 = train(dataset, s, hyper)
        m2, curve2 = train(dataset, s, hyper)
        assert curve1 == curve2
        for a, b in zip(m1.parameters(), m2.parameters()):
            assert np.array_equal(a, b)

    def test_loss_decreases_on_small_problem(self):
        s = tiny_scenario()
        dataset = self._dataset(s, rows=30)
        hyper = TrainHyper(lr=5e-4, epochs=120, batch=8, seed=1, latent_dim=2, hidden=(16,))
        _, curve = train(dataset, s, hyper)
        assert np.mean(curve[-10:]) < np.mean(curve[:10])

    def test_single_sample_memorization(self):
        s = tiny_scenario()
        pop = random_walk_init(s, 1, stream(6, 95), drift_radius=5.0)
        archive = ParetoArchive(
            capacity=1, entries=[ArchiveEntry(pop[0], ObjectiveVector(0.0, 1.0, 0.0))]
        )
        dataset = build_dataset([(s, archive)])
        hyper = TrainHyper(lr=5e-3, epochs=1500, batch=1, beta=0.0, seed=2,
                           latent_dim=2, hidden=(16,))
        model, _ = train(dataset, s, hyper)
        x = np.zeros((1, model.solution_dim))
        c = np.zeros((1, model.condition_dim))
        # normalized single-row dataset maps to all-zero inputs
        _, recon, _, _ = loss_and_grads(model, x, c, beta=0.0, eps=np.zeros((1, 2)))
        assert recon < 1e-3

    def test_empty_dataset_rejected(self):
        s = tiny_scenario()
        with pytest.raises(ValueError):
            build_dataset([(s, ParetoArchive(capacity=3))])


class TestDataset:
    def test_concatenates_all_archive_entries(self):
        s1, s2 = tiny_scenario(1), tiny_scenario(2)
        def archive_for(s, n, seed):
            pop = random_walk_init(s, n, stream(seed, 95), drift_radius=5.0)
            return ParetoArchive(
                capacity=n,
                entries=[ArchiveEntry(x, ObjectiveVector(0.0, 1.0, float(i)))
                         for i, x in enumerate(pop)],
            )
        dataset = build_dataset([(s1, archive_for(s1, 10, 1)), (s2, archive_for(s2, 15, 2))])
        assert len(dataset) == 25
        assert dataset.provenance[0] == (1, 0)
        assert dataset.provenance[-1] == (2, 14)

    def test_rows_finite_and_normalized(self):
        s = tiny_scenario(3)
        pop = random_walk_init(s, 8, stream(3, 95), drift_radius=5.0)
        archive = ParetoArchive(
            capacity=8,
            entries=[ArchiveEntry(x, ObjectiveVector(0.0, 1.0, 0.0)) for x in pop],
        )
        dataset = build_dataset([(s, archive)])
        assert np.all(np.isfinite(dataset.x)) and np.all(np.isfinite(dataset.c))
        assert np.all(dataset.x >= 0.0) and np.all(dataset.x <= 1.0)

    def test_provenance_roundtrip(self):
        s = tiny_scenario(4)
        pop = random_walk_init(s, 5, stream(4, 95), drift_radius=5.0)
        archive = ParetoArchive(
            capacity=5,
            entries=[ArchiveEntry(x, ObjectiveVector(0.0, 1.0, 0.0)) for x in pop],
        )
        dataset = build_dataset([(s, archive)])
        for row, (seed, idx) in zip(dataset.x, dataset.provenance):
            assert seed == 4
            assert np.allclose(row, encode_solution(archive.entries[idx].solution, s))

    def test_mixed_dims_rejected(self):
        s1 = tiny_scenario(1)
        s2 = generate_scenario(1, ScenarioSpec(n_uav=4, n_eaves_known=2, n_eaves_unknown=1))
        def one(s):
            pop = random_walk_init(s, 2, stream(1, 95), drift_radius=5.0)
            return ParetoArchive(
                capacity=2,
                entries=[ArchiveEntry(x, ObjectiveVector(0.0, 1.0, 0.0)) for x in pop],
            )
        with pytest.raises(DimensionMismatchError):
            build_dataset([(s1, one(s1)), (s2, one(s2))])


class TestGeneration:
    def _trained(self, s):
        pop = random_walk_init(s, 20, stream(8, 95), drift_radius=10.0)
        archive = ParetoArchive(
            capacity=20,
            entries=[ArchiveEntry(x, ObjectiveVector(0.0, 1.0, 0.0)) for x in pop],
        )
        dataset = build_dataset([(s, archive)])
        model, _ = train(dataset, s, TrainHyper(epochs=10, batch=8, seed=5,
                                                latent_dim=2, hidden=(16,)))
        return model

    def test_empty_population(self):
        s = tiny_scenario(5)
        model = self._trained(s)
        assert generate_population(model, s, 0, stream(0, 96)) == []

    def test_deterministic_generation(self):
        s = tiny_scenario(5)
        model = self._trained(s)
        a = generate_population(model, s, 6, stream(1, 96))
        b = generate_population(model, s, 6, stream(1, 96))
        for x, y in zip(a, b):
            assert x.equals(y)

    def test_generated_population_feasible(self):
        s = tiny_scenario(5)
        model = self._trained(s)
        for x in generate_population(model, s, 10, stream(2, 96)):
            assert is_feasible(x, s)
            assert np.all(x.weights >= 0.0) and np.all(x.weights <= 1.0)

    def test_layout_mismatch_rejected(self):
        s = tiny_scenario(5)
        model = self._trained(s)
        other = generate_scenario(0, ScenarioSpec(n_uav=5, n_eaves_known=2, n_eaves_unknown=1))
        with pytest.raises(CheckpointMismatchError):
            generate_population(model, other, 3, stream(3, 96))


class TestCheckpoint:
    def test_roundtrip_bitwise(self, tmp_path):
        s = tiny_scenario(6)
        model = tiny_model(s, seed=11, latent=3, hidden=(8, 8))
        path = tmp_path / "model.ckpt"
        save_model(model, path)
        loaded = load_model(path)
        for a, b in zip(model.parameters(), loaded.parameters()):
            assert np.array_equal(a, b)
        rng = stream(12, 97)
        x = rng.random((2, model.solution_dim))
        c = rng.random((2, model.condition_dim))
        eps = rng.standard_normal((2, model.latent_dim))
        out_a = forward(model, x, c, eps)
        out_b = forward(loaded, x, c, eps)
        assert np.array_equal(out_a.x_recon, out_b.x_recon)

    def test_rejects_corrupt_shapes(self, tmp_path):
        s = tiny_scenario(6)
        model = tiny_model(s)
        path = tmp_path / "model.ckpt"
        save_model(model, path)
        import json
        data = json.loads(path.read_text())
        data["enc_weights"][0] = [[0.0, 0.0]]
        path.write_text(json.dumps(data))
        with pytest.raises(CheckpointMismatchError):
            load_model(path)

    def test_rejects_wrong_kind(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_text('{"kind": "other"}')
        with pytest.raises(CheckpointMismatchError):
            load_model(path)
