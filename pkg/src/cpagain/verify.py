"""Solver-free empirical checks of a certificate: sampled dissipation, simulated invariance and gain."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .bounds import compute_bounds
from .certify import CombinedCertificate, StorageCertificate, check_barrier, check_storage
from .mesh import Triangulation
from .system import SystemSpec

log = logging.getLogger(__name__)

INVARIANCE_ALLOWANCE = 1e-5
LEVEL_TOL = 1e-6
GAIN_TOL = 1e-6
DWELL = 0.5


# -- sampled dissipation ---------------------------------------------------

def hj_value(sys: SystemSpec, gradients: np.ndarray, gamma: float, X: np.ndarray) -> np.ndarray:
    """Dissipation expression at points X (N, n) given the storage gradient at each point (N, n)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    grads = np.atleast_2d(gradients)
    f = sys.f_eval(X)
    G = sys.G_eval(X)
    h = sys.h_eval(X)
    gtv = np.einsum("pnm,pn->pm", G, grads)
    return (np.einsum("pn,pn->p", f, grads) + np.sum(gtv ** 2, axis=1) / (2.0 * gamma)
            + 0.5 * np.sum(h ** 2, axis=1))


def sample_simplices(T: Triangulation, ids, count: int, rng: np.random.Generator):
    """Uniform points in a union of simplexes: volume-weighted choice, flat Dirichlet weights."""
    ids = np.asarray(ids, dtype=np.int64)
    vol = T.volumes[ids]
    pick = ids[rng.choice(len(ids), size=count, p=vol / vol.sum())]
    lam = rng.dirichlet(np.ones(T.n + 1), size=count)
    pts = np.einsum("pj,pjn->pn", lam, T.vertices[T.simplices[pick]])
    return pts, pick


@dataclass
class HjSample:
    max_value: float
    argmax: list
    simplex: int
    count: int

    def to_dict(self) -> dict:
        return {"max": self.max_value, "argmax": self.argmax, "simplex": self.simplex, "samples": self.count}


def sample_hj(cert: StorageCertificate, count: int, seed: int = 0, include_origin: bool = True) -> HjSample:
    """Largest dissipation value over uniform samples of the storage mesh."""
    T = cert.mesh
    rng = np.random.default_rng(seed)
    pts, ids = sample_simplices(T, np.arange(T.num_simplices), count, rng)
    if include_origin and T.origin_id is not None:
        pts = np.vstack([np.zeros(T.n), pts])
        ids = np.concatenate([[T.locate(np.zeros(T.n))], ids])
    grads = cert.function.gradients[ids]
    H = hj_value(cert.system, grads, cert.gamma, pts)
    k = int(np.argmax(H))
    return HjSample(float(H[k]), pts[k].tolist(), int(ids[k]), len(pts))


# -- inputs and simulation -------------------------------------------------

@dataclass
class InputSignal:
    """Piecewise-constant input: ``values[k]`` holds on [breakpoints[k], breakpoints[k+1])."""

    breakpoints: np.ndarray  # (K,), starting at 0
    values: np.ndarray  # (K, m)
    cap: float

    def __post_init__(self):
        self.breakpoints = np.asarray(self.breakpoints, dtype=float)
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if np.abs(self.values).max(initial=0.0) > self.cap * (1 + 1e-12):
            raise ValueError("input exceeds its cap")

    @classmethod
    def random(cls, rng: np.random.Generator, m: int, cap: float, horizon: float, dwell: float = DWELL):
        K = int(np.ceil(horizon / dwell))
        return cls(dwell * np.arange(K), rng.uniform(-cap, cap, size=(K, m)), cap)

    @classmethod
    def zero(cls, m: int):
        return cls(np.zeros(1), np.zeros((1, m)), 0.0)

    def __call__(self, t: float) -> np.ndarray:
        k = max(int(np.searchsorted(self.breakpoints, t, side="right")) - 1, 0)
        return self.values[k]

    def stages(self, t: float, dt: float) -> tuple:
        # Constant over a step whose ends sit on breakpoints: use the interior value.
        u = self(t + 0.5 * dt)
        return u, u, u


@dataclass
class Sinusoid:
    amplitude: float
    omega: float
    m: int

    @property
    def cap(self) -> float:
        return self.amplitude

    def __call__(self, t: float) -> np.ndarray:
        return np.full(self.m, self.amplitude * np.sin(self.omega * t))

    def stages(self, t: float, dt: float) -> tuple:
        return self(t), self(t + 0.5 * dt), self(t + dt)


@dataclass
class TrajectoryResult:
    t: np.ndarray  # (S+1,)
    x: np.ndarray  # (S+1, n)
    y: np.ndarray  # (S+1, q)
    u_norm: np.ndarray  # running L2 norm of the input
    y_norm: np.ndarray  # running L2 norm of the output
    exit_index: int | None  # first grid index outside the queried region
    left_box: bool


def _rk4_batch(sys: SystemSpec, X0: np.ndarray, signals: list, horizon: float, dt: float):
    """Fixed-step RK4 for several trajectories at once. Returns t, X (S+1, K, n), Y, |u_tau|, |y_tau|."""
    steps = int(round(horizon / dt))
    K, n = X0.shape

    def rhs(X, U):
        return sys.f_eval(X) + np.einsum("knm,km->kn", sys.G_eval(X), U)

    X = np.empty((steps + 1, K, n))
    X[0] = X0
    Iu = np.zeros((steps + 1, K))
    Iy = np.zeros((steps + 1, K))
    yprev = sys.h_eval(X0)
    Y = np.empty((steps + 1, K, yprev.shape[1]))
    Y[0] = yprev
    for s in range(steps):
        t = s * dt
        st = [sig.stages(t, dt) for sig in signals]
        U1 = np.array([a for a, _, _ in st])
        U2 = np.array([b for _, b, _ in st])
        U4 = np.array([c for _, _, c in st])
        x = X[s]
        k1 = rhs(x, U1)
        k2 = rhs(x + 0.5 * dt * k1, U2)
        k3 = rhs(x + 0.5 * dt * k2, U2)
        k4 = rhs(x + dt * k3, U4)
        X[s + 1] = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        Y[s + 1] = sys.h_eval(X[s + 1])
        # Same trapezoid rule for input and output energy.
        Iu[s + 1] = Iu[s] + 0.5 * dt * (np.sum(U1 ** 2, axis=1) + np.sum(U4 ** 2, axis=1))
        Iy[s + 1] = Iy[s] + 0.5 * dt * (np.sum(Y[s] ** 2, axis=1) + np.sum(Y[s + 1] ** 2, axis=1))
    t = dt * np.arange(steps + 1)
    return t, X, Y, np.sqrt(Iu), np.sqrt(Iy)


def simulate(sys: SystemSpec, x0, u=None, horizon: float = 10.0, dt: float = 0.01, region=None,
             box=None) -> TrajectoryResult:
    """Integrate one trajectory. ``region(X) -> bool array`` flags the first exit."""
    x0 = np.asarray(x0, dtype=float).reshape(1, -1)
    u = InputSignal.zero(sys.m) if u is None else u
    t, X, Y, nu, ny = _rk4_batch(sys, x0, [u], horizon, dt)
    X, Y = X[:, 0], Y[:, 0]
    exit_index = None
    if region is not None:
        bad = np.flatnonzero(~np.asarray(region(X), dtype=bool))
        exit_index = int(bad[0]) if bad.size else None
    left = False
    if box is not None:
        b = np.asarray(box, dtype=float)
        left = bool(np.any((X < b[:, 0]) | (X > b[:, 1])))
    return TrajectoryResult(t, X, Y, nu[:, 0], ny[:, 0], exit_index, left)


# -- trial-based checks ----------------------------------------------------

def sample_invariant_set(cert: CombinedCertificate, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform points of {W < level} by rejection from the simplexes that reach below the level."""
    b = cert.barrier
    T = b.mesh
    ids = np.flatnonzero(b.W[T.simplices].min(axis=1) < b.level)
    out = np.zeros((0, T.n))
    for _ in range(1000):
        pts, _ = sample_simplices(T, ids, max(4 * count, 16), rng)
        keep = pts[b.function.evaluate_many(pts) < b.level]
        out = np.vstack([out, keep])
        if len(out) >= count:
            return out[:count]
    raise RuntimeError("could not sample the invariant set")


def resonant_frequency(sys: SystemSpec) -> float:
    """Frequency of the largest linearized response, or the fastest oscillatory mode when B = 0."""
    A, B, C = sys.linearization()
    if np.abs(B).max(initial=0.0) > 1e-12:
        w = np.logspace(-2, 2, 400)
        I = np.eye(sys.n)
        gains = [np.linalg.norm(C @ np.linalg.solve(1j * wk * I - A, B), 2) for wk in w]
        return float(w[int(np.argmax(gains))])
    im = np.abs(np.linalg.eigvals(A).imag)
    return float(im.max()) if im.max(initial=0.0) > 0 else 1.0


def _trial_setup(cert: CombinedCertificate, trials: int, horizon: float, seed: int, uhat: float):
    """Per-trial initial states and inputs, each from its own child seed."""
    sys = cert.system
    children = np.random.SeedSequence(seed).spawn(trials)
    X0, signals = [], []
    for child in children:
        rng = np.random.default_rng(child)
        X0.append(sample_invariant_set(cert, 1, rng)[0])
        signals.append(InputSignal.random(rng, sys.m, uhat, horizon))
    X0.append(np.zeros(sys.n))
    signals.append(Sinusoid(uhat, resonant_frequency(sys), sys.m))
    return np.array(X0), signals


def check_invariance(cert: CombinedCertificate, trials: int = 100, horizon: float = 50.0, seed: int = 0,
                     dt: float = 0.01, uhat: float | None = None) -> dict:
    """Simulate from inside the invariant set with bounded inputs and count exits."""
    b = cert.barrier
    uhat = b.uhat if uhat is None else uhat
    X0, signals = _trial_setup(cert, trials, horizon, seed, uhat)
    _, X, _, _, _ = _rk4_batch(cert.system, X0, signals, horizon, dt)
    S, K, n = X.shape
    W = b.function.evaluate_many(X.reshape(-1, n)).reshape(S, K)
    limit = b.level + LEVEL_TOL + INVARIANCE_ALLOWANCE
    bad = np.isnan(W) | (W > limit)
    violations = []
    for k in np.flatnonzero(bad.any(axis=0)):
        s = int(np.argmax(bad[:, k]))
        violations.append({"trial": int(k), "time": s * dt, "x": X[s, k].tolist(),
                           "W": None if np.isnan(W[s, k]) else float(W[s, k])})
    return {"trials": K, "horizon": horizon, "dt": dt, "uhat": uhat, "level": b.level,
            "max_W": float(np.nanmax(W)), "violations": violations, "passed": not violations}


def check_gain_inequality(cert: CombinedCertificate, trials: int = 100, horizon: float = 50.0, seed: int = 0,
                          dt: float = 0.01, gamma: float | None = None) -> dict:
    """Test the truncated-norm gain inequality along simulated trajectories."""
    gamma = cert.gamma if gamma is None else gamma
    X0, signals = _trial_setup(cert, trials, horizon, seed + 1, cert.barrier.uhat)
    t, X, _, nu, ny = _rk4_batch(cert.system, X0, signals, horizon, dt)
    bias = np.sqrt(2.0 * np.maximum(cert.storage.function.evaluate_many(X0), 0.0))
    excess = ny - (np.sqrt(gamma) * nu + bias[None, :] + GAIN_TOL)
    violations = []
    for k in np.flatnonzero((excess > 0).any(axis=0)):
        s = int(np.argmax(excess[:, k]))
        violations.append({"trial": int(k), "tau": float(t[s]), "excess": float(excess[s, k])})
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(nu[-1] > 0, (ny[-1] - bias) / nu[-1], -np.inf)
    return {"trials": len(X0), "horizon": horizon, "dt": dt, "sqrt_gamma": float(np.sqrt(gamma)),
            "empirical_ratio": float(ratio.max()), "violations": violations, "passed": not violations}


# -- bounds and full report ------------------------------------------------

def bounds_consistency(cert: CombinedCertificate, rel: float = 1e-12) -> dict:
    """Stored bounds must dominate bounds recomputed from the system and mesh."""
    out = {"passed": True, "mismatches": []}
    for name, part in (("storage", cert.storage), ("barrier", cert.barrier)):
        stored = part.bounds
        fresh = compute_bounds(cert.system, part.mesh, stored.norm_kind)
        for field in ("c", "beta_f", "beta_hh", "beta_gbar", "ghat"):
            a, b = np.asarray(getattr(stored, field)), np.asarray(getattr(fresh, field))
            short = b - a > rel * np.maximum(np.abs(b), 1.0)
            if a.shape != b.shape or np.any(short):
                out["passed"] = False
                where = np.argwhere(short)[:3].tolist() if a.shape == b.shape else "shape"
                out["mismatches"].append({"certificate": name, "field": field, "at": where})
    return out


def verify_certificate(cert: CombinedCertificate, samples: int = 100_000, trials: int = 100, seed: int = 0,
                       horizon: float = 50.0, dt: float = 0.01, tol: float = 1e-7,
                       hj_tol: float = 1e-9) -> dict:
    """Every check, in a JSON-ready report; ``passed`` is their conjunction."""
    storage_rep = check_storage(cert.storage, tol)
    barrier_rep = check_barrier(cert.barrier, tol)
    bounds_rep = bounds_consistency(cert)
    hj = sample_hj(cert.storage, samples, seed)
    inv = check_invariance(cert, trials, horizon, seed, dt)
    gain = check_gain_inequality(cert, trials, horizon, seed, dt)
    report = {
        "gamma": cert.gamma,
        "sqrt_gamma": cert.gain,
        "uhat": cert.uhat,
        "storage_check": storage_rep.to_dict(),
        "barrier_check": barrier_rep.to_dict(),
        "bounds": bounds_rep,
        "hj_sampling": dict(hj.to_dict(), tol=hj_tol, passed=hj.max_value <= hj_tol),
        "invariance": inv,
        "gain": gain,
    }
    report["passed"] = bool(storage_rep.passed and barrier_rep.passed and bounds_rep["passed"]
                            and report["hj_sampling"]["passed"] and inv["passed"] and gain["passed"])
    return report
