"""Manufactured-solution harness shared by assembly and acceptance tests.

Given a smooth exact field, the interior residual and the Robin boundary
mismatch are assembled into a consistent right-hand side; the discrete
solution must then converge to the exact nodal values at second order in
the L2 norm, which pins every sign in the weak form.
"""

from __future__ import annotations

import numpy as np

from formscat.assembly import ParameterField, assemble_helmholtz_forms
from formscat.linsolve import SparseFactor
from formscat.mesh import Mesh, build_interval_mesh, build_rectangle_mesh

GAUSS2 = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


def manufactured_rhs(mesh: Mesh, k0: float, m_func, u_ex, grad_u_ex, lap_u_ex,
                     mass) -> np.ndarray:
    """phi(w) = (g, w)_L2 + (q, w)_boundary for the manufactured field.

    g is the interior residual -lap(u) - k0^2 (1 - m) u interpolated at
    the nodes; the boundary term q = du/dnu - i k0 u is integrated per
    edge with its own outward normal (2-point Gauss), so corners where
    the normal jumps are handled exactly.
    """
    pts = mesh.nodes
    if mesh.dim == 1:
        x = pts[:, 0]
        g = np.array([-lap_u_ex(xi) - k0**2 * (1 - m_func(xi)) * u_ex(xi) for xi in x])
        f = mass @ g
        a, b = x[mesh.boundary_facets[0][0]], x[mesh.boundary_facets[1][0]]
        f[mesh.boundary_facets[0][0]] += -grad_u_ex(a)[0] - 1j * k0 * u_ex(a)
        f[mesh.boundary_facets[1][0]] += grad_u_ex(b)[0] - 1j * k0 * u_ex(b)
        return f
    g = np.array([-lap_u_ex(x, y) - k0**2 * (1 - m_func(x, y)) * u_ex(x, y)
                  for x, y in pts])
    f = (mass @ g).astype(np.complex128)
    normals = mesh.facet_normals()
    for (i, j), nrm in zip(mesh.boundary_facets, normals):
        pi, pj = pts[i], pts[j]
        length = np.hypot(*(pj - pi))
        for t in GAUSS2:
            x, y = pi + t * (pj - pi)
            q = np.dot(grad_u_ex(x, y), nrm) - 1j * k0 * u_ex(x, y)
            f[i] += 0.5 * length * q * (1.0 - t)
            f[j] += 0.5 * length * q * t
    return f


def convergence_study(dim: int, k0: float, resolutions) -> tuple[list[float], list[float]]:
    """Nodal L2 errors and mesh sizes of the manufactured problem."""
    if dim == 1:
        u_ex = lambda x: np.sin(np.pi * x) + 0.5j * np.cos(np.pi * x)
        grad = lambda x: np.array([np.pi * np.cos(np.pi * x) - 0.5j * np.pi * np.sin(np.pi * x)])
        lap = lambda x: -np.pi**2 * u_ex(x)
        m_func = lambda x: 0.3 * np.exp(-(x - 0.5) ** 2 / 0.02)
    else:
        u_ex = lambda x, y: (np.sin(np.pi * x) * np.sin(np.pi * y)
                             + 0.5j * np.cos(np.pi * x) * np.cos(np.pi * y))
        grad = lambda x, y: np.array([
            np.pi * np.cos(np.pi * x) * np.sin(np.pi * y)
            - 0.5j * np.pi * np.sin(np.pi * x) * np.cos(np.pi * y),
            np.pi * np.sin(np.pi * x) * np.cos(np.pi * y)
            - 0.5j * np.pi * np.cos(np.pi * x) * np.sin(np.pi * y),
        ])
        lap = lambda x, y: -2.0 * np.pi**2 * u_ex(x, y)
        m_func = lambda x, y: 0.2 * np.exp(-((x - 0.5) ** 2 + (y - 0.5) ** 2) / 0.05)

    errors: list[float] = []
    sizes: list[float] = []
    for res in resolutions:
        mesh = (build_interval_mesh(0.0, 1.0, res) if dim == 1
                else build_rectangle_mesh(1.0, 1.0, res, res))
        if dim == 1:
            m_vals = np.array([m_func(x) for (x,) in mesh.nodes], dtype=np.complex128)
            exact = np.array([u_ex(x) for (x,) in mesh.nodes])
        else:
            m_vals = np.array([m_func(x, y) for (x, y) in mesh.nodes], dtype=np.complex128)
            exact = np.array([u_ex(x, y) for (x, y) in mesh.nodes])
        m = ParameterField(m_vals, sup_bound=1.0)
        d = (1.0,) if dim == 1 else (1.0, 0.0)
        system = assemble_helmholtz_forms(mesh, k0, m, np.asarray(d))
        phi = manufactured_rhs(mesh, k0, m_func, u_ex, grad, lap, system.mass.mat)
        u_h = SparseFactor(system.forms.A1 + system.forms.Cmat).solve(phi)
        err = u_h - exact
        errors.append(float(np.sqrt(np.real(np.vdot(err, system.mass.mat @ err)))))
        sizes.append(1.0 / res)
    return errors, sizes


def fitted_order(errors, sizes) -> float:
    return float(np.polyfit(np.log(sizes), np.log(errors), 1)[0])
