"""Experiment runners shared by the command line and the acceptance suite.

Every runner returns an :class:`ExperimentResult`: a JSON-ready summary, a
list of tolerance checks and named CSV tables.  Runners never touch the
file system.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import connections as cn
from . import dynamics as dy
from . import fields as fl
from . import holonomy as ho
from . import inversion as inv
from . import vertical as vt
from .geometry import SMGrid, SurfaceModel, build_grid


@dataclass
class Check:
    name: str
    anchor: str
    value: float
    tolerance: float
    passed: bool
    detail: str = ""

    def as_dict(self):
        return {"name": self.name, "anchor": self.anchor, "value": float(self.value),
                "tolerance": float(self.tolerance), "passed": bool(self.passed), "detail": self.detail}


@dataclass
class ExperimentResult:
    experiment: str
    summary: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)  # name -> (header, rows)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check_below(self, name, anchor, value, tol, detail=""):
        self.checks.append(Check(name, anchor, float(value), tol, bool(value < tol), detail))

    def check_above(self, name, anchor, value, tol, detail=""):
        self.checks.append(Check(name, anchor, float(value), tol, bool(value > tol), detail))

    def check_true(self, name, anchor, ok, detail=""):
        self.checks.append(Check(name, anchor, float(bool(ok)), 1.0, bool(ok), detail))


CATENOID_KAPPA = float(np.cosh(1.0) ** -4)


def _seed(seed: int, *offsets) -> np.random.Generator:
    key = int(seed)
    for o in offsets:
        key = key * 1_000_003 + int(o)
    return np.random.Generator(np.random.Philox(key % (2**63)))


# ---------------------------------------------------------------------------
# vertical identities

def identity_suite(model: SurfaceModel, pair, grid: SMGrid, seed: int = 0, fields: int = 3,
                   m_values=(1, 2, 3), beurling=(1, 2, 3, 4)):
    """Residuals of the Pestov identities, the commutator and the frame brackets."""
    res = ExperimentResult("identities")
    dirichlet = not model.closed
    rows = []
    worst = {"pestov": 0.0, "omega": 0.0, "commutator": 0.0, "structure": 0.0}
    ops = vt.FrameOperators(grid, pair)
    for k in range(fields):
        u = fl.random_field(grid, _seed(seed, 1, k), n=pair.n, theta_degree=3, dirichlet=dirichlet)
        r = vt.pestov_residual(u, pair, ops)
        rows.append(r.as_dict())
        worst["pestov"] = max(worst["pestov"], r.relative_residual)
        for m in m_values:
            w = fl.random_omega_field(grid, _seed(seed, 2, k, m), m, pair.n, dirichlet=dirichlet)
            r = vt.pestov_residual_omega_m(w, pair, m, ops=ops)
            rows.append(r.as_dict())
            worst["omega"] = max(worst["omega"], r.relative_residual)
        # pointwise identities need no boundary vanishing; smooth fields keep FD error low
        z = fl.random_field(grid, _seed(seed, 3, k), n=pair.n, theta_degree=3)
        r = vt.commutator_residual(z, pair, ops)
        rows.append(r.as_dict())
        worst["commutator"] = max(worst["commutator"], r.relative_residual)
        for r in vt.structure_residuals(z, pair, ops).values():
            rows.append(r.as_dict())
            worst["structure"] = max(worst["structure"], r.relative_residual)
    res.check_below("pestov", "pestov_identity", worst["pestov"], 1e-3)
    res.check_below("pestov_omega_m", "pestov_identity_omega_m", worst["omega"], 1e-3)
    res.check_below("mu_commutator", "mu_commutator_curvature", worst["commutator"], 1e-3)
    res.check_below("structure_equations", "frame_structure_equations", worst["structure"], 1e-4)

    beur = []
    if model.name == "catenoid":
        for m in beurling:
            for k in range(fields):
                u = fl.random_omega_field(grid, _seed(seed, 4, k, m), m, pair.n, dirichlet=True)
                b = vt.beurling_check(u, pair, m, CATENOID_KAPPA, ops=ops)
                beur.append({kk: (float(v) if isinstance(v, (float, np.floating)) else v) for kk, v in b.items()})
        adm = [b for b in beur if b["hypothesis_satisfied"]]
        worst_b = min((b["margin"] / b["rhs"] for b in adm), default=0.0)
        res.check_above("beurling", "beurling_contraction", worst_b, -1e-3,
                        f"{len(adm)} admissible of {len(beur)}")
    if model.closed and pair.n == 1:
        cond = vt.ckt_condition_check(grid, pair, 1)
        res.check_below("integral_lambda_1", "abelian_curvature_integral", abs(cond["integral_lambda_1"]), 1e-8)
    res.summary = {"worst_relative_residual": worst, "reports": rows, "beurling": beur}
    res.tables["identities"] = (
        ["identity", "relative_residual", "residual"],
        [[r["identity"], r["relative_residual"], r["residual"]] for r in rows],
    )
    return res


# ---------------------------------------------------------------------------
# conformal Killing tensors

def ckt_scan(model: SurfaceModel, pair, levels, ntheta: int, m: int = 1, dirichlet: bool = True, k: int = 4):
    """Smallest singular values of the discrete ``X_+`` on ``Omega_m`` across grids."""
    res = ExperimentResult("ckt-scan")
    rows, smin = [], []
    for N in levels:
        g = build_grid(model, N, N, ntheta)
        sv = vt.ckt_kernel_scan(g, pair, m, boundary_dirichlet=dirichlet and not model.closed, k=k)
        rows.append([m, N] + [float(s) for s in sv])
        smin.append(float(sv[0]))
    res.summary = {"m": m, "levels": list(levels), "sigma_min": smin}
    if model.closed:
        res.check_below("flat_ckt_sigma_min", "flat_torus_ckts", smin[-1], 1e-6)
        cond = vt.ckt_condition_check(build_grid(model, levels[-1], levels[-1], ntheta), pair, m)
        res.summary["condition_check"] = cond
    else:
        mono = all(b >= a for a, b in zip(smin, smin[1:]))
        res.check_true("sigma_min_nondecreasing", "ckt_triviality_boundary", mono, str(smin))
    res.tables["ckt_scan"] = (["m", "N"] + [f"sigma{i + 1}" for i in range(k)], rows)
    return res


# ---------------------------------------------------------------------------
# rays and transport

def transform_experiment(model, pair, grid: SMGrid, bgrid: dy.BoundaryGrid, h: float, t_max: float,
                         seed: int = 0, degree: int = 1, samples: int = 10):
    """Discrete forward transform of a random source and the transpose identity."""
    res = ExperimentResult("transform")
    T = inv.RayTransform(model, pair, grid, bgrid, degree, h, t_max)
    worst = 0.0
    for k in range(samples):
        rng = _seed(seed, 5, k)
        f = rng.standard_normal(T.shape_coeffs) + 1j * rng.standard_normal(T.shape_coeffs)
        dvals = rng.standard_normal((T.index.size, pair.n)) + 1j * rng.standard_normal((T.index.size, pair.n))
        d = inv.BoundaryDataSet(bgrid, T.index, dvals)
        lhs = T.forward(f).inner(d)
        rhs = T.inner_sm(f, T.adjoint(d))
        scale = np.sqrt(T.forward(f).inner(T.forward(f)).real * d.inner(d).real)
        worst = max(worst, abs(lhs - rhs) / scale)
    res.check_below("transpose_identity", "discrete_adjoint", worst, 1e-8)
    src = fl.random_modes(grid, _seed(seed, 6), pair.n, range(-degree, degree + 1))
    coeffs = np.stack([src[l] for l in range(-degree, degree + 1)])
    data = T.forward(coeffs)
    ent = data.entries
    rows = [[*ent[i], *(v for c in data.values[i] for v in (c.real, c.imag))] for i in range(ent.shape[0])]
    head = ["entry_u", "entry_v", "entry_angle"] + [f"I{j}_{p}" for j in range(pair.n) for p in ("re", "im")]
    res.tables["boundary_data"] = (head, rows)
    res.summary = {"rows": int(T.index.size), "excluded": int(len(bgrid) - T.index.size),
                   "nnz": int(T.matrix.nnz), "transpose_defect": worst, "degree": degree}
    return res


def scatter_experiment(model, pair, bgrid: dy.BoundaryGrid, h: float, t_max: float):
    res = ExperimentResult("scatter")
    tab = ho.scattering_table(model, pair, bgrid, h, t_max)
    eye = np.eye(pair.n)
    defect = np.linalg.norm(np.swapaxes(tab.holonomy.conj(), -1, -2) @ tab.holonomy - eye, axis=(1, 2))
    per_time = float(np.max(defect / np.maximum(tab.transit_time, 1.0))) if defect.size else 0.0
    res.check_below("unitarity_per_unit_time", "scattering_unitarity", per_time, 1e-8)
    n = pair.n
    rows = []
    for k, i in enumerate(tab.index):
        C = tab.holonomy[k].ravel()
        rows.append([bgrid.x1[i], bgrid.x2[i], bgrid.theta[i], *tab.exit[k], tab.transit_time[k],
                     *(v for c in C for v in (c.real, c.imag))])
    head = ["entry_u", "entry_v", "entry_angle", "exit_u", "exit_v", "exit_angle", "transit_time"]
    head += [f"C{i}{j}_{p}" for i in range(n) for j in range(n) for p in ("re", "im")]
    res.tables["scattering"] = (head, rows)
    res.summary = {"records": int(tab.index.size), "excluded": int(len(bgrid) - tab.index.size),
                   "max_unitarity_defect": float(defect.max()) if defect.size else 0.0}
    return res


def gauge_experiment(model, pair, bgrid: dy.BoundaryGrid, h: float, t_max: float, gamma: float = 1.0,
                     separation=True):
    """Scattering data of a pair and its boundary-trivial gauge; optional separation run."""
    res = ExperimentResult("gauge-test")
    r, dr = cn.boundary_gauge(model, pair.n, gamma)
    gauged = cn.gauge_transform(pair, r, dr)
    t0 = time.time()
    rep = inv.gauge_recovery_experiment(model, pair, gauged, bgrid, h, t_max)
    res.check_below("gauge_invariance", "scattering_gauge_invariance", rep["sup_distance"], 1e-6,
                    rep["verdict"])
    summary = {"gauge": {k: v for k, v in rep.items() if k != "tables"}, "seconds_gauge": time.time() - t0}
    if separation and pair.name != "trivial":
        base = cn.trivial(model, pair.n)
        sep = inv.gauge_recovery_experiment(model, base, pair, bgrid, h, t_max)
        res.check_above("curvature_separation", "gauge_determination", sep["sup_distance"], 1e-3, sep["verdict"])
        summary["separation"] = {k: v for k, v in sep.items() if k != "tables"}
    res.summary = summary
    return res


def reconstruct_experiment(model, pair, grid: SMGrid, levels, h_matrix: float = 0.02, h_data: float = 0.005,
                           t_max: float = 50.0, reg: float = 1e-6, tol: float = 1e-9, max_iter: int = 3000,
                           width: float = 0.35):
    """Recover a degree-0 Gaussian bump from independently integrated data."""
    res = ExperimentResult("reconstruct")
    f = inv.gaussian_bump(model, width, n=pair.n)
    truth = inv.bump_coefficients(grid, f)
    errors, traces, info = [], [], []
    for ns, na in levels:
        t0 = time.time()
        bg = dy.BoundaryGrid(model, ns, na)
        T = inv.RayTransform(model, pair, grid, bg, 0, h_matrix, t_max)
        data = inv.sample_transform(model, pair, f, T, h_data)
        rec = inv.reconstruct(T, data, reg=reg, max_iter=max_iter, tol=tol)
        err = inv.relative_error(T, rec.coefficients, truth)
        errors.append(err)
        traces.append(rec.history)
        info.append({"boundary": [ns, na], "error": err, "iterations": len(rec.history) - 1,
                     "status": rec.status, "seconds": time.time() - t0})
        final = rec
    res.check_below("finest_error", "injectivity_degree_zero", errors[-1], 0.05)
    res.check_true("error_decreases", "injectivity_degree_zero", all(b < a for a, b in zip(errors, errors[1:])),
                   str([round(e, 5) for e in errors]))
    res.summary = {"levels": info, "reg": reg, "tol": tol}
    res.tables["convergence"] = (["iter", "residual"], [[i, r] for i, r in enumerate(traces[-1])])
    X1, X2 = grid.mesh()
    c = final.coefficients[0]
    rows = [[X1[i, j], X2[i, j], *(v for z in c[i, j] for v in (z.real, z.imag)), *truth[0, i, j].real]
            for i in range(grid.counts[0]) for j in range(grid.counts[1])]
    head = ["x1", "x2"] + [f"f{k}_{p}" for k in range(pair.n) for p in ("re", "im")] + [f"true{k}" for k in range(pair.n)]
    res.tables["coefficients"] = (head, rows)
    return res


def finite_degree(model, pair, grid: SMGrid, m_source: int, h: float, seed: int = 0):
    res = ExperimentResult("finite-degree")
    rep = inv.finite_degree_experiment(model, pair, m_source, grid, h, seed)
    res.summary = {"m_source": m_source, "tail_mass": {str(k): v for k, v in rep["tail_mass"].items()},
                   "trapped_nodes": rep["trapped_nodes"]}
    res.tables["degree_profile"] = (["m", "norm"], [[m, v] for m, v in rep["profile"]])
    return res


def volume_decay_experiment(model, grid: SMGrid, times, fit=(5.0, 20.0), h: float = 0.02, t_max: float = 50.0):
    res = ExperimentResult("volume-decay")
    curve = dy.volume_decay(model, grid, times, h=h, t_max=t_max)
    slope, r2 = dy.fit_decay_rate(curve, *fit)
    vals = [v for _, v in curve]
    res.check_below("decay_rate", "volume_decay_exponential", slope, 0.0)
    res.check_above("fit_quality", "volume_decay_exponential", r2, 0.98)
    res.check_true("nonincreasing", "volume_decay_exponential",
                   all(b <= a * (1 + 1e-12) for a, b in zip(vals, vals[1:])) and min(vals) > 0)
    res.summary = {"slope": slope, "r_squared": r2, "fit_window": list(fit)}
    res.tables["volume_decay"] = (["t", "V"], [[t, v] for t, v in curve])
    return res
