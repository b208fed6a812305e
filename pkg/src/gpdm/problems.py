"""Manufactured test problems with closed-form forcing.

Each problem fixes a true solution u(labels, t) on one of the analytic
manifolds and hard-codes the forcing f = u_t - (a . grad u + Lap_g u)
obtained by differentiating u under the manifold's metric, so solver output
can be compared against u exactly. Label recovery maps ambient coordinates
(including slightly off-manifold ghost companions) back to the intrinsic
parameters that the closed forms consume.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import geometry


@dataclass(frozen=True)
class ManufacturedProblem:
    """An exactly solvable advection-diffusion (or Burgers) test problem."""

    name: str
    intrinsic_dim: int
    bc_kind: str  # none | dirichlet | neumann
    equation: str  # advection_diffusion | burgers
    default_mode: str
    default_size: int  # a sampler-admissible size for self-checks
    sample: Callable  # (n, mode, seed) -> PointCloud
    params_from_ambient: Callable  # (N, m) -> (N, p)
    u_true: Callable  # (labels, t) -> (N,)
    forcing: Callable  # (labels, t) -> (N,)
    drift_ambient: Callable | None = None  # (N, m) -> (N, m)
    boundary_value: Callable | None = None  # labels -> g; None means g = 0
    normal_derivative: Callable | None = None  # (labels, t) -> du/dnu, Neumann only
    metric_diag: Callable | None = None  # labels -> (N, d), test oracles

    def u_on(self, points: np.ndarray, t: float) -> np.ndarray:
        return self.u_true(self.params_from_ambient(points), t)

    def forcing_on(self, points: np.ndarray, t: float) -> np.ndarray:
        return self.forcing(self.params_from_ambient(points), t)

    def g_on(self, points: np.ndarray) -> np.ndarray:
        if self.boundary_value is None:
            return np.zeros(points.shape[0])
        return self.boundary_value(self.params_from_ambient(points))

    def bc_residual(self, n: int | None = None, t: float = 0.37, seed: int = 0) -> float:
        """Largest boundary-condition violation of u_true at sampled points."""
        if self.bc_kind == "none":
            return 0.0
        cloud = self.sample(n or self.default_size, self.default_mode, seed)
        labels = self.params_from_ambient(cloud.points[cloud.boundary_index])
        g = np.zeros(labels.shape[0]) if self.boundary_value is None else self.boundary_value(labels)
        if self.bc_kind == "dirichlet":
            return float(np.abs(self.u_true(labels, t) - g).max())
        if self.normal_derivative is None:
            raise ValueError(f"{self.name}: Neumann problem without a normal-derivative form")
        return float(np.abs(self.normal_derivative(labels, t) - g).max())


# -- annulus in R^5: metric diag(5 sin^2 phi, 2), drift (0.5 + 0.1 sin th, 0)


def _annulus_params(points):
    theta = np.arctan2(points[:, 1], points[:, 0])
    sin_phi = np.hypot(points[:, 0], points[:, 1])
    cos_phi = points[:, 4] / np.sqrt(2.0)
    phi = np.arctan2(sin_phi, cos_phi)
    return np.column_stack([theta, phi])


def _annulus_drift(points):
    p = _annulus_params(points)
    theta, phi = p[:, 0], p[:, 1]
    a1 = 0.5 + 0.1 * np.sin(theta)
    d_theta = np.column_stack(
        [
            -np.sin(phi) * np.sin(theta),
            np.sin(phi) * np.cos(theta),
            -2.0 * np.sin(phi) * np.sin(2 * theta),
            2.0 * np.sin(phi) * np.cos(2 * theta),
            np.zeros_like(theta),
        ]
    )
    return a1[:, None] * d_theta


def _annulus_sample(n, mode, seed):
    grids = {540: (45, 12), 1024: (64, 16), 2070: (90, 23), 4096: (128, 32), 8145: (181, 45)}
    if mode != "grid":
        raise ValueError("annulus problems are defined on the well-sampled grid")
    if isinstance(n, tuple):
        return geometry.sample_annulus(*n)
    if n not in grids:
        raise ValueError(f"no annulus grid for N={n}; known sizes: {sorted(grids)}")
    return geometry.sample_annulus(*grids[n])


def annulus_neumann() -> ManufacturedProblem:
    """u = sin^2(4 phi) cos(theta) e^-t; homogeneous Neumann at both circles."""

    def u_true(lbl, t):
        th, ph = lbl[:, 0], lbl[:, 1]
        return np.sin(4 * ph) ** 2 * np.cos(th) * np.exp(-t)

    def forcing(lbl, t):
        th, ph = lbl[:, 0], lbl[:, 1]
        et = np.exp(-t)
        s2 = np.sin(4 * ph) ** 2
        c, s = np.cos(th), np.sin(th)
        a1 = 0.5 + 0.1 * s
        cot = np.cos(ph) / np.sin(ph)
        return et * (
            -s2 * c
            + a1 * s2 * s
            + s2 * c / (5.0 * np.sin(ph) ** 2)
            - 2.0 * cot * np.sin(8 * ph) * c
            - 16.0 * np.cos(8 * ph) * c
        )

    def normal_derivative(lbl, t):
        th, ph = lbl[:, 0], lbl[:, 1]
        # outward normal is -/+ the unit phi direction; u_phi vanishes at
        # both boundary circles so the sign never matters
        sign = np.where(ph < 3 * np.pi / 8, -1.0, 1.0)
        return sign * 4.0 * np.sin(8 * ph) * np.cos(th) * np.exp(-t) / np.sqrt(2.0)

    return ManufacturedProblem(
        name="annulus_neumann",
        default_size=540,
        intrinsic_dim=2,
        bc_kind="neumann",
        equation="advection_diffusion",
        default_mode="grid",
        sample=_annulus_sample,
        params_from_ambient=_annulus_params,
        u_true=u_true,
        forcing=forcing,
        drift_ambient=_annulus_drift,
        normal_derivative=normal_derivative,
        metric_diag=lambda lbl: np.column_stack(
            [5.0 * np.sin(lbl[:, 1]) ** 2, np.full(lbl.shape[0], 2.0)]
        ),
    )


def annulus_dirichlet() -> ManufacturedProblem:
    """u = sin(4 phi) cos(theta) e^-t; homogeneous Dirichlet at both circles."""

    def u_true(lbl, t):
        th, ph = lbl[:, 0], lbl[:, 1]
        return np.sin(4 * ph) * np.cos(th) * np.exp(-t)

    def forcing(lbl, t):
        th, ph = lbl[:, 0], lbl[:, 1]
        et = np.exp(-t)
        u = np.sin(4 * ph) * np.cos(th) * et
        c, s = np.cos(th), np.sin(th)
        a1 = 0.5 + 0.1 * s
        cot = np.cos(ph) / np.sin(ph)
        return (
            -u
            + a1 * np.sin(4 * ph) * s * et
            + u / (5.0 * np.sin(ph) ** 2)
            - 2.0 * cot * np.cos(4 * ph) * c * et
            + 8.0 * u
        )

    return ManufacturedProblem(
        name="annulus_dirichlet",
        default_size=540,
        intrinsic_dim=2,
        bc_kind="dirichlet",
        equation="advection_diffusion",
        default_mode="grid",
        sample=_annulus_sample,
        params_from_ambient=_annulus_params,
        u_true=u_true,
        forcing=forcing,
        drift_ambient=_annulus_drift,
        metric_diag=lambda lbl: np.column_stack(
            [5.0 * np.sin(lbl[:, 1]) ** 2, np.full(lbl.shape[0], 2.0)]
        ),
    )


# -- semi-torus: metric diag(1, (2 + cos th)^2), heat equation


def _semi_torus_params(points):
    rho = np.hypot(points[:, 0], points[:, 1])
    phi = np.arctan2(points[:, 1], points[:, 0])
    # ghost companions of the phi = pi boundary cross into x2 < 0; keep the
    # angle on the smooth branch around [0, pi]
    phi = np.where(phi < -np.pi / 2, phi + 2.0 * np.pi, phi)
    theta = np.arctan2(points[:, 2], rho - 2.0)
    return np.column_stack([theta, phi])


def semi_torus_dirichlet() -> ManufacturedProblem:
    """u = e^-t sin(theta) sin(phi); zero Dirichlet data at phi in {0, pi}."""

    def u_true(lbl, t):
        return np.exp(-t) * np.sin(lbl[:, 0]) * np.sin(lbl[:, 1])

    def forcing(lbl, t):
        th, ph = lbl[:, 0], lbl[:, 1]
        w = 2.0 + np.cos(th)
        return np.exp(-t) * np.sin(ph) * (np.sin(th) * np.cos(th) / w + np.sin(th) / w ** 2)

    return ManufacturedProblem(
        name="semi_torus_dirichlet",
        default_size=400,
        intrinsic_dim=2,
        bc_kind="dirichlet",
        equation="advection_diffusion",
        default_mode="random",
        sample=lambda n, mode, seed: geometry.sample_semi_torus(n, mode=mode, rng_seed=seed),
        params_from_ambient=_semi_torus_params,
        u_true=u_true,
        forcing=forcing,
        metric_diag=lambda lbl: np.column_stack(
            [np.ones(lbl.shape[0]), (2.0 + np.cos(lbl[:, 0])) ** 2]
        ),
    )


# -- full ellipse: metric 1 + 3 cos^2 theta, heat equation, no boundary


def _ellipse_params(points):
    return np.arctan2(points[:, 1] / 2.0, points[:, 0])[:, None]


def ellipse_heat() -> ManufacturedProblem:
    """u = e^-t sin(theta) on the closed ellipse (cos th, 2 sin th)."""

    def u_true(lbl, t):
        return np.exp(-t) * np.sin(lbl[:, 0])

    def forcing(lbl, t):
        th = lbl[:, 0]
        g = 1.0 + 3.0 * np.cos(th) ** 2
        u = np.exp(-t) * np.sin(th)
        return -u + u / g - 1.5 * np.sin(2 * th) / g ** 2 * np.exp(-t) * np.cos(th)

    return ManufacturedProblem(
        name="ellipse_heat",
        default_size=400,
        intrinsic_dim=1,
        bc_kind="none",
        equation="advection_diffusion",
        default_mode="random",
        sample=lambda n, mode, seed: geometry.sample_ellipse(n, mode=mode, rng_seed=seed),
        params_from_ambient=_ellipse_params,
        u_true=u_true,
        forcing=forcing,
        metric_diag=lambda lbl: (1.0 + 3.0 * np.cos(lbl[:, 0]) ** 2)[:, None],
    )


# -- unit circle: exact heat solution, zero forcing


def _circle_params(points):
    return np.arctan2(points[:, 1], points[:, 0])[:, None]


def circle_heat() -> ManufacturedProblem:
    """u = e^-t sin(theta): an exact solution of the heat equation on S^1."""

    def u_true(lbl, t):
        return np.exp(-t) * np.sin(lbl[:, 0])

    def forcing(lbl, t):
        return np.zeros(lbl.shape[0])

    return ManufacturedProblem(
        name="circle_heat",
        default_size=400,
        intrinsic_dim=1,
        bc_kind="none",
        equation="advection_diffusion",
        default_mode="grid",
        sample=lambda n, mode, seed: geometry.sample_circle(n, mode=mode, rng_seed=seed),
        params_from_ambient=_circle_params,
        u_true=u_true,
        forcing=forcing,
        metric_diag=lambda lbl: np.ones((lbl.shape[0], 1)),
    )


# -- sine curve Burgers: metric 1 + cos^2 theta, zero Dirichlet ends


def _sine_params(points):
    return points[:, 0][:, None]


def _sine_jacobian(points):
    th = points[:, 0]
    return np.column_stack([np.ones_like(th), np.cos(th)])


def sine_burgers() -> ManufacturedProblem:
    """Viscous Burgers on (theta, sin theta), theta in [0, 4 pi], u = e^-t sin th.

    The forcing absorbs the nonlinear term: f = u_t - u u_th
    - cos(th) sin(th) / g^2 u_th - u_thth / g with g = 1 + cos^2 th.
    """

    def u_true(lbl, t):
        return np.exp(-t) * np.sin(lbl[:, 0])

    def forcing(lbl, t):
        th = lbl[:, 0]
        g = 1.0 + np.cos(th) ** 2
        et = np.exp(-t)
        u = et * np.sin(th)
        u_th = et * np.cos(th)
        return -u - u * u_th - np.cos(th) * np.sin(th) / g ** 2 * u_th + u / g

    return ManufacturedProblem(
        name="sine_burgers",
        default_size=400,
        intrinsic_dim=1,
        bc_kind="dirichlet",
        equation="burgers",
        default_mode="grid",
        sample=lambda n, mode, seed: geometry.sample_sine_curve(n),
        params_from_ambient=_sine_params,
        u_true=u_true,
        forcing=forcing,
        drift_ambient=_sine_jacobian,
        metric_diag=lambda lbl: (1.0 + np.cos(lbl[:, 0]) ** 2)[:, None],
    )


_REGISTRY = {
    "annulus_neumann": annulus_neumann,
    "annulus_dirichlet": annulus_dirichlet,
    "semi_torus_dirichlet": semi_torus_dirichlet,
    "ellipse_heat": ellipse_heat,
    "circle_heat": circle_heat,
    "sine_burgers": sine_burgers,
}


def get_problem(name: str) -> ManufacturedProblem:
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choices: {sorted(_REGISTRY)}") from None


def problem_names():
    return sorted(_REGISTRY)
