import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_model
from grbfnn.kernel import PrecisionFactor, precision_matrix
from grbfnn.model import GrbfnnModel
from grbfnn.spectrum import (
    ConvergenceError,
    PrecisionSpectrum,
    active_dimension,
    active_projection,
    eig_symmetric,
    eigenvalues_csv,
    feature_importance,
    importance_csv,
    jacobi_eigh,
    model_spectrum,
    projection_csv,
    subspace_surface,
    surface_csv,
)


def psd_strategy(max_dim=6):
    return st.integers(1, max_dim).flatmap(
        lambda d: arrays(float, d * (d + 1) // 2, elements=st.floats(-3, 3)).map(
            lambda u: precision_matrix(PrecisionFactor(d, u))
        )
    )


class TestEigen:
    def test_diagonal(self):
        s = eig_symmetric(np.diag([1.0, 4.0]))
        np.testing.assert_array_equal(s.eigenvalues, [4.0, 1.0])
        np.testing.assert_allclose(np.abs(s.eigenvectors), [[0, 1], [1, 0]], atol=1e-15)

    def test_two_by_two(self):
        s = eig_symmetric(np.array([[2.0, 1.0], [1.0, 2.0]]))
        np.testing.assert_allclose(s.eigenvalues, [3.0, 1.0], rtol=1e-12)
        np.testing.assert_allclose(s.eigenvectors[:, 0], np.array([1, 1]) / np.sqrt(2), rtol=1e-12)

    def test_golden_pair(self):
        s = eig_symmetric(np.array([[1.0, 1.0], [1.0, 2.0]]))
        r5 = np.sqrt(5.0)
        np.testing.assert_allclose(s.eigenvalues, [(3 + r5) / 2, (3 - r5) / 2], rtol=1e-12)

    def test_sign_convention(self, rng):
        for _ in range(20):
            A = rng.normal(size=(5, 5))
            s = eig_symmetric(A @ A.T)
            for k in range(5):
                v = s.eigenvectors[:, k]
                assert v[np.flatnonzero(np.abs(v) > 1e-12)[0]] > 0

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            eig_symmetric(np.zeros((2, 3)))
        with pytest.raises(ValueError):
            eig_symmetric(np.array([[1.0, 2.0], [0.0, 1.0]]))
        with pytest.raises(ValueError):
            eig_symmetric(np.diag([1.0, -1.0]))

    def test_sweep_budget(self, rng):
        A = rng.normal(size=(8, 8))
        with pytest.raises(ConvergenceError):
            jacobi_eigh(A + A.T, max_sweeps=1)

    def test_clamps_rounding_noise(self):
        v = np.array([1.0, 2.0, 3.0])
        s = eig_symmetric(np.outer(v, v))
        assert np.all(s.eigenvalues >= 0)
        assert s.eigenvalues[0] == pytest.approx(14.0, rel=1e-12)

    @given(psd_strategy())
    @settings(max_examples=100, deadline=None)
    def test_against_lapack(self, P):
        s = eig_symmetric(P)
        ref = np.sort(np.maximum(np.linalg.eigvalsh(P), 0.0))[::-1]
        scale = max(1.0, np.abs(P).max())
        np.testing.assert_allclose(s.eigenvalues, ref, atol=1e-9 * scale)
        V = s.eigenvectors
        np.testing.assert_allclose(V.T @ V, np.eye(P.shape[0]), atol=1e-9)
        np.testing.assert_allclose(s.reconstruct(), P, atol=1e-9 * scale)
        assert np.all(np.diff(s.eigenvalues) <= 0)
        assert np.all(s.eigenvalues >= 0)


class TestImportance:
    def test_rank_one(self):
        a = np.array([3.0, -1.0, 0.0, 0.5])
        fi = feature_importance(eig_symmetric(np.outer(a, a)))
        np.testing.assert_allclose(fi.scores, np.abs(a) / 3.0, atol=1e-12)
        assert list(fi.ranking()) == [0, 1, 3, 2]

    def test_identity_uniform(self):
        fi = feature_importance(eig_symmetric(np.eye(4)))
        np.testing.assert_allclose(fi.scores, 1.0)

    def test_diagonal(self):
        fi = feature_importance(eig_symmetric(np.diag([4.0, 1.0, 0.0])))
        np.testing.assert_allclose(fi.scores, [1.0, 0.25, 0.0], atol=1e-15)

    def test_zero_matrix(self):
        fi = feature_importance(eig_symmetric(np.zeros((3, 3))))
        np.testing.assert_array_equal(fi.scores, 0.0)

    @given(psd_strategy(), st.floats(0.01, 100))
    @settings(max_examples=50, deadline=None)
    def test_scale_invariant_and_bounded(self, P, c):
        fi = feature_importance(eig_symmetric(P))
        if np.abs(P).max() < 1e-6:
            return
        assert fi.scores.max() == pytest.approx(1.0)
        assert np.all(fi.scores >= 0)
        fi2 = feature_importance(eig_symmetric(c * P))
        np.testing.assert_allclose(fi2.scores, fi.scores, atol=1e-8)

    def test_permutation_equivariant(self, rng):
        A = rng.normal(size=(5, 5))
        P = A @ A.T
        perm = rng.permutation(5)
        a = feature_importance(eig_symmetric(P)).scores
        b = feature_importance(eig_symmetric(P[np.ix_(perm, perm)])).scores
        np.testing.assert_allclose(b, a[perm], atol=1e-10)


class TestActive:
    def test_dimension(self):
        s = eig_symmetric(np.diag([3.0, 1.0]))
        assert active_dimension(s, 0.75) == 1
        assert active_dimension(s, 0.76) == 2
        assert active_dimension(s, 1.0) == 2

    def test_dimension_errors(self):
        with pytest.raises(ValueError):
            active_dimension(eig_symmetric(np.eye(2)), 0.0)
        with pytest.raises(ValueError):
            active_dimension(eig_symmetric(np.zeros((2, 2))))

    def test_projection(self):
        s = eig_symmetric(np.array([[2.0, 1.0], [1.0, 2.0]]))
        Z = active_projection([[1.0, 1.0], [1.0, -1.0]], s, 1)
        np.testing.assert_allclose(Z[:, 0], [np.sqrt(2), 0.0], atol=1e-12)
        with pytest.raises(ValueError):
            active_projection([[1.0, 1.0]], s, 3)
        with pytest.raises(ValueError):
            active_projection([[1.0, 1.0, 1.0]], s, 1)

    def test_full_projection_is_rotation(self, rng):
        A = rng.normal(size=(4, 4))
        s = eig_symmetric(A @ A.T)
        X = rng.normal(size=(10, 4))
        Z = active_projection(X, s)
        np.testing.assert_allclose(np.linalg.norm(Z, axis=1), np.linalg.norm(X, axis=1), rtol=1e-10)

    def test_decay_and_cumulative(self):
        s = PrecisionSpectrum(np.array([2.0, 1.0, 1.0]), np.eye(3))
        np.testing.assert_allclose(s.decay, [0.5, 0.25, 0.25])
        np.testing.assert_allclose(s.cumulative, [0.5, 0.75, 1.0])


class TestSurface:
    def test_surface_matches_forward(self, rng):
        model, X, _ = random_model(rng, D=3, O=1)
        s = model_spectrum(model)
        surf = subspace_surface(model, s, ((-1, 1), (-2, 2)), resolution=5)
        assert surf.shape == (25, 3)
        z = surf[7, :2]
        x = s.eigenvectors[:, :2] @ z
        from grbfnn.model import forward
        assert surf[7, 2] == pytest.approx(forward(model, x[None, :])[0, 0], rel=1e-12)

    def test_requires_trained(self, rng):
        model, _, _ = random_model(rng, trained=False)
        with pytest.raises(ValueError):
            subspace_surface(model, model_spectrum(model), ((0, 1), (0, 1)))

    def test_requires_two_dims(self):
        m = GrbfnnModel(np.ones((1, 1)), PrecisionFactor.isotropic(1), np.zeros((1, 1)), trained=True)
        with pytest.raises(ValueError):
            subspace_surface(m, model_spectrum(m), ((0, 1), (0, 1)))


class TestExports:
    def test_csv_headers(self, rng):
        s = eig_symmetric(np.diag([2.0, 1.0]))
        lines = eigenvalues_csv(s).splitlines()
        assert lines[0] == "k,gamma,decay,cumulative"
        assert lines[1].startswith("1,2.0,")
        fi = feature_importance(s)
        assert importance_csv(fi, ["a", "b"]).splitlines()[0] == "feature,score,component_1,component_2"
        assert projection_csv(np.zeros((2, 1)), [0, 1]).splitlines()[0] == "z1,target"
        assert surface_csv(np.zeros((1, 3))).splitlines()[0] == "z1,z2,f"
        assert surface_csv(np.zeros((1, 4))).splitlines()[0] == "z1,z2,f0,f1"
