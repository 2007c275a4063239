"""Loss values and gradients.

Hand-derived constants: the 2x2 ranking example activates two hinges
(0.1 and 0.3, divided by batch size 2 -> 0.2); bce([0.9],[1]) = -ln(0.9);
the selfsup example doubles a single-frame BCE because frame and pooled
values coincide for a 1x1 input.
"""

import numpy as np
import pytest

from tagground.errors import DataError
from tagground.losses import CLAMP_EPS, bce_loss, ranking_loss, selfsup_loss
from tagground.pooling import AUDIO_POOL_KINDS

GRID = np.array([[0.9, 0.8], [0.5, 0.7]])


def test_ranking_loss_frozen_example():
    loss, grad = ranking_loss(GRID, margin=0.2)
    assert loss == pytest.approx(0.2, abs=1e-12)
    assert grad.shape == (2, 2)


def test_ranking_loss_zero_when_margin_satisfied():
    grid = np.array([[0.95, 0.1], [0.05, 0.9]])
    loss, grad = ranking_loss(grid, margin=0.2)
    assert loss == 0.0
    np.testing.assert_array_equal(grad, np.zeros((2, 2)))


def test_ranking_loss_rejects_non_square():
    with pytest.raises(DataError):
        ranking_loss(np.zeros((2, 3)))
    with pytest.raises(DataError):
        ranking_loss(np.zeros((1, 1)))


def test_ranking_loss_grad_matches_fd(rng):
    eps = 1e-6
    checked = 0
    while checked < 500:
        b = int(rng.integers(2, 6))
        grid = rng.uniform(0, 1, size=(b, b))
        margin = float(rng.uniform(0.05, 0.5))
        # skip grids with a hinge argument within 10*eps of the kink
        diag = np.diag(grid)
        text_arg = margin + grid - diag[:, None]
        audio_arg = margin + grid.T - diag[:, None]
        args = np.concatenate([text_arg.ravel(), audio_arg.ravel()])
        if np.any(np.abs(args) < 10 * eps):
            continue
        _, grad = ranking_loss(grid, margin)
        for i in range(b):
            for j in range(b):
                plus, minus = grid.copy(), grid.copy()
                plus[i, j] += eps
                minus[i, j] -= eps
                fd = (ranking_loss(plus, margin)[0] - ranking_loss(minus, margin)[0]) / (2 * eps)
                denom = max(abs(fd), abs(grad[i, j]), 1e-8)
                assert abs(fd - grad[i, j]) / denom < 1e-4
        checked += 1


def test_bce_frozen_examples():
    loss, _ = bce_loss([0.9], [1.0])
    assert loss == pytest.approx(0.10536051565782628, abs=1e-12)
    loss, _ = bce_loss([0.5, 0.5], [0.0, 1.0])
    assert loss == pytest.approx(0.6931471805599453, abs=1e-12)


def test_bce_clamps_extremes():
    loss, grad = bce_loss([0.0, 1.0], [1.0, 0.0])
    expected = -np.log(CLAMP_EPS)
    assert loss == pytest.approx(expected, rel=1e-9)
    assert np.all(np.isfinite(grad))


def test_bce_grad_matches_fd(rng):
    eps = 1e-7
    for _ in range(500):
        n = int(rng.integers(1, 10))
        s = rng.uniform(0.01, 0.99, size=n)
        y = rng.uniform(0, 1, size=n)
        _, grad = bce_loss(s, y)
        for i in range(n):
            plus, minus = s.copy(), s.copy()
            plus[i] += eps
            minus[i] -= eps
            fd = (bce_loss(plus, y)[0] - bce_loss(minus, y)[0]) / (2 * eps)
            denom = max(abs(fd), abs(grad[i]), 1e-8)
            assert abs(fd - grad[i]) / denom < 1e-4


def test_bce_length_mismatch():
    with pytest.raises(DataError):
        bce_loss([0.5], [1.0, 0.0])


def test_selfsup_frozen_example():
    # 1 frame, 1 phrase: strong and weak terms are equal for every pooling
    s = np.array([[0.9]])
    y_self = np.array([[1.0]])
    y_ref = np.array([1.0])
    loss, grad = selfsup_loss(s, y_self, y_ref, "linsoft")
    assert loss == pytest.approx(2 * 0.10536051565782628, abs=1e-12)
    assert grad.shape == (1, 1)


def test_selfsup_grad_matches_fd(rng):
    eps = 1e-6
    for pool in AUDIO_POOL_KINDS:
        checked = 0
        while checked < 125:
            t, n = int(rng.integers(2, 8)), int(rng.integers(1, 5))
            s = rng.uniform(0.05, 0.95, size=(t, n))
            if pool == "max":
                top2 = np.sort(s, axis=0)[-2:]
                if np.any(top2[1] - top2[0] < 10 * eps):
                    continue
            y_self = rng.uniform(0.02, 0.98, size=(t, n))
            y_ref = rng.uniform(0.02, 0.98, size=n)
            _, grad = selfsup_loss(s, y_self, y_ref, pool)
            flat = s.ravel()
            for i in rng.choice(flat.size, size=min(6, flat.size), replace=False):
                plus, minus = flat.copy(), flat.copy()
                plus[i] += eps
                minus[i] -= eps
                fd = (
                    selfsup_loss(plus.reshape(t, n), y_self, y_ref, pool)[0]
                    - selfsup_loss(minus.reshape(t, n), y_self, y_ref, pool)[0]
                ) / (2 * eps)
                g = grad.ravel()[i]
                denom = max(abs(fd), abs(g), 1e-8)
                assert abs(fd - g) / denom < 1e-4, (pool, t, n)
            checked += 1


def test_selfsup_shape_checks():
    with pytest.raises(DataError):
        selfsup_loss(np.zeros((2, 2)), np.zeros((2, 3)), np.zeros(2), "mean")
    with pytest.raises(DataError):
        selfsup_loss(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros(3), "mean")
