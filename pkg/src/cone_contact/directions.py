"""Deterministic direction sets on S^{n-1} and vectorized local maximization over them."""
import math
from typing import Callable, Optional, Tuple

import numpy as np

from .utils import DomainError, NumericalError

DEFAULT_COUNTS = {1: 2, 2: 512, 3: 2048}
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def default_count(n: int) -> int:
    try:
        return DEFAULT_COUNTS[n]
    except KeyError:
        raise DomainError(f"Direction sets exist for dimensions 1-3, not {n}.", error_code=400)


def circle_directions(m: int) -> np.ndarray:
    theta = 2.0 * np.pi * np.arange(m) / m
    return np.column_stack([np.cos(theta), np.sin(theta)])


def fibonacci_sphere(m: int) -> np.ndarray:
    k = np.arange(m) + 0.5
    z = 1.0 - 2.0 * k / m
    rho = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = np.pi * (3.0 - math.sqrt(5.0)) * k
    return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])


def direction_set(n: int, m: Optional[int] = None) -> np.ndarray:
    """Unit directions: {+1, -1} for n=1, uniform angles for n=2, a Fibonacci sphere for n=3."""
    if n == 1:
        return np.array([[1.0], [-1.0]])
    m = m or default_count(n)
    if n == 2:
        return circle_directions(m)
    if n == 3:
        return fibonacci_sphere(m)
    raise DomainError(f"Direction sets exist for dimensions 1-3, not {n}.", error_code=400)


def angular_spacing(n: int, m: int) -> float:
    if n == 1:
        return 0.0
    if n == 2:
        return 2.0 * np.pi / m
    return math.sqrt(4.0 * np.pi / m)


def normalize(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def tangent_frames(u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Orthonormal pairs spanning the tangent planes of S^2 at the rows of u."""
    helper = np.where(np.abs(u[:, :1]) < 0.9, np.array([[1.0, 0.0, 0.0]]), np.array([[0.0, 1.0, 0.0]]))
    e1 = normalize(np.cross(u, helper))
    e2 = np.cross(u, e1)
    return e1, e2


def refine_max(
    objective: Callable[[np.ndarray, np.ndarray], np.ndarray],
    u_best: np.ndarray,
    spacing: float,
    tol: float = 1e-9,
    max_iter: int = 400,
) -> Tuple[np.ndarray, np.ndarray]:
    """Locally maximize a function of unit directions around the best samples.

    ``objective(dirs, index)`` maps (r, n) directions to (r,) values, ``index[k]`` being the
    query row that direction k belongs to. Golden-section on the angle for n=2, compass
    pattern search on the tangent plane for n=3.
    Returns the refined values and directions.
    """
    u_best = np.atleast_2d(np.asarray(u_best, dtype=float))
    n = u_best.shape[1]
    q = u_best.shape[0]
    f0 = objective(u_best, np.arange(q))
    if n == 1 or spacing == 0.0:
        return f0, u_best
    if n == 2:
        values, u = _golden_section(objective, u_best, spacing, tol, max_iter)
    elif n == 3:
        values, u = _pattern_search(objective, u_best, spacing, max(tol, 1e-9), max_iter)
    else:
        raise DomainError(f"Refinement is available for dimensions 1-3, not {n}.", error_code=400)
    keep = f0 >= values
    return np.where(keep, f0, values), np.where(keep[:, None], u_best, u)


def _on_circle(theta):
    return np.column_stack([np.cos(theta), np.sin(theta)])


def _golden_section(objective, u_best, spacing, tol, max_iter):
    theta0 = np.arctan2(u_best[:, 1], u_best[:, 0])
    a = theta0 - spacing
    b = theta0 + spacing
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    index = np.arange(len(theta0))
    fc = objective(_on_circle(c), index)
    fd = objective(_on_circle(d), index)
    for _ in range(max_iter):
        if np.max(b - a) <= tol:
            break
        left = fc >= fd
        a = np.where(left, a, c)
        b = np.where(left, d, b)
        new = np.where(left, b - GOLDEN * (b - a), a + GOLDEN * (b - a))
        fnew = objective(_on_circle(new), index)
        c, d, fc, fd = (
            np.where(left, new, d),
            np.where(left, c, new),
            np.where(left, fnew, fd),
            np.where(left, fc, fnew),
        )
    else:
        raise NumericalError("Golden-section refinement did not converge.", residual=float(np.max(b - a)))
    theta = 0.5 * (a + b)
    u = _on_circle(theta)
    return objective(u, index), u


def _pattern_search(objective, u_best, spacing, tol, max_iter):
    e1, e2 = tangent_frames(u_best)
    q = u_best.shape[0]
    x = np.zeros((q, 2))
    step = np.full(q, spacing)
    current = objective(u_best, np.arange(q))
    rows = np.repeat(np.arange(q), 4)
    moves = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    for _ in range(max_iter):
        if np.max(step) <= tol:
            break
        trial = x[:, None, :] + step[:, None, None] * moves[None, :, :]
        values = objective(_lift_rows(u_best, e1, e2, trial), rows).reshape(q, 4)
        best = np.argmax(values, axis=1)
        best_value = values[np.arange(q), best]
        improved = best_value > current
        x = np.where(improved[:, None], trial[np.arange(q), best], x)
        current = np.where(improved, best_value, current)
        step = np.where(improved, step, 0.5 * step)
    else:
        raise NumericalError("Pattern-search refinement did not converge.", residual=float(np.max(step)))
    u = normalize(u_best + x[:, :1] * e1 + x[:, 1:] * e2)
    return current, u


def _lift_rows(u_best, e1, e2, trial):
    k = trial.shape[1]
    offsets = trial.reshape(-1, 2)
    base = np.repeat(u_best, k, axis=0)
    return normalize(base + offsets[:, :1] * np.repeat(e1, k, axis=0) + offsets[:, 1:] * np.repeat(e2, k, axis=0))
