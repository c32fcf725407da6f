"""State space models: planar warps, their derivatives and a stochastic sampler.

All four models are subgroups of the planar projective group and share one
representation: the state vector ``p`` (length S) parameterizes a 3x3 matrix
``M(p) = I + sum_i p_i G_i`` with fixed generators ``G_i``.  Warping a point
``x`` means ``pi(M(p) [x, 1])`` where ``pi`` divides by the third coordinate.

Points live in a canonical frame: the grid and corners sit on the unit
square ``[-0.5, 0.5]^2`` (scaled to the initial region size for the
translation model, which cannot represent scale).  Corner order is
upper-left, upper-right, lower-right, lower-left.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import (DegenerateParameterizationError, NoConsensusError,
                     SingularWarpError)

SINGULAR_EPS = 1e-12

_EYE3 = np.eye(3)

UNIT_CORNERS = np.array([[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]])


def _unit(i, j):
    g = np.zeros((3, 3))
    g[i, j] = 1.0
    return g


def _homog(pts):
    pts = np.asarray(pts, dtype=np.float64)
    return np.column_stack([pts, np.ones(len(pts))])


def canonical_grid(resolution):
    """Row-major ``Rx x Ry`` grid over the unit square."""
    rx, ry = resolution
    if rx < 2 or ry < 2:
        raise ValueError(f"resolution must be at least 2x2, got {resolution}")
    xs = np.linspace(-0.5, 0.5, rx)
    ys = np.linspace(-0.5, 0.5, ry)
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def project(M, pts):
    """Apply a 3x3 projective matrix to (N, 2) points."""
    M = np.asarray(M, dtype=np.float64)
    pts = np.asarray(pts, dtype=np.float64)
    m = pts @ M[:, :2].T + M[:, 2]
    d = m[:, 2:]
    if np.any(np.abs(d) < SINGULAR_EPS):
        raise SingularWarpError("projective denominator vanishes")
    return m[:, :2] / d


def check_corners(corners):
    c = np.asarray(corners, dtype=np.float64)
    if c.shape != (4, 2):
        raise ValueError(f"corners must have shape (4, 2), got {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ValueError("corners contain non-finite values")
    span = max(np.ptp(c[:, 0]), np.ptp(c[:, 1]))
    if span <= 0:
        raise ValueError("degenerate corners")
    for i in range(4):
        a, b, d = c[i], c[(i + 1) % 4], c[(i + 2) % 4]
        area = abs((b[0] - a[0]) * (d[1] - a[1]) - (b[1] - a[1]) * (d[0] - a[0]))
        if area < 1e-9 * span * span:
            raise ValueError("degenerate corners: three corners are collinear")
    return c


@dataclass
class SamplerConfig:
    """Per-component perturbation sigma, AR(1) coefficient and RNG seed."""

    state_sigma: np.ndarray = None
    ar_coeff: float = 0.0
    seed: int = 0
    rng: np.random.Generator = field(default=None, repr=False)

    def __post_init__(self):
        if self.state_sigma is not None:
            self.state_sigma = np.asarray(self.state_sigma, dtype=np.float64)
            if np.any(self.state_sigma < 0):
                raise ValueError("state_sigma must be nonnegative")
        if not 0.0 <= self.ar_coeff < 1.0:
            raise ValueError("ar_coeff must lie in [0, 1)")
        if self.rng is None:
            self.rng = np.random.default_rng(self.seed)


class StateSpaceModel:
    name = ""
    n_params = 0
    min_points = 0
    generators = np.zeros((0, 3, 3))

    def __init__(self, resolution=(50, 50)):
        self.resolution = tuple(resolution)
        self.scale = np.ones(2)
        self.p = np.zeros(self.n_params)
        self.M = np.eye(3)
        self.init_pts = None
        self.init_corners = None
        self.pts = None
        self.corners = None
        self._dwdp0 = None
        self._d2wdp20 = None
        self._gen_flat = self.generators.reshape(self.n_params, 9)
        self._gen_pinv = np.linalg.pinv(self._gen_flat.T)
        self.sampler = None

    # -- parameterization ------------------------------------------------------

    def state_to_matrix(self, p):
        p = np.asarray(p, dtype=np.float64)
        if p.shape != (self.n_params,):
            raise ValueError(f"state must have length {self.n_params}, got {p.shape}")
        return _EYE3 + (p @ self._gen_flat).reshape(3, 3)

    def matrix_to_state(self, M):
        M = np.asarray(M, dtype=np.float64)
        if abs(M[2, 2]) < SINGULAR_EPS:
            raise SingularWarpError("warp matrix has vanishing h22")
        M = M / M[2, 2]
        return self._gen_pinv @ (M - np.eye(3)).ravel()

    def apply_warp(self, pts, p):
        return project(self.state_to_matrix(p), pts)

    def compose(self, p, dp):
        """State of ``w(w(x, dp), p)``."""
        return self.matrix_to_state(self.state_to_matrix(p) @ self.state_to_matrix(dp))

    def invert_state(self, p):
        M = self.state_to_matrix(p)
        if abs(np.linalg.det(M)) < SINGULAR_EPS:
            raise SingularWarpError("cannot invert a singular warp")
        return self.matrix_to_state(np.linalg.inv(M))

    # -- internal state --------------------------------------------------------

    def _canonical_scale(self, corners):
        return np.ones(2)

    def initialize(self, corners, resolution=None):
        """Fit the state to ``corners`` and instantiate the sampling grid."""
        corners = check_corners(corners)
        if resolution is not None:
            self.resolution = tuple(resolution)
        self.scale = np.asarray(self._canonical_scale(corners), dtype=np.float64)
        self.init_pts = canonical_grid(self.resolution) * self.scale
        self.init_corners = UNIT_CORNERS * self.scale
        self._dwdp0 = self.dw_dp(self.init_pts, np.zeros(self.n_params))
        self._d2wdp20 = self.d2w_dp2(self.init_pts, np.zeros(self.n_params))
        self.set_corners(corners)

    @property
    def n_pts(self):
        return len(self.init_pts)

    def get_pts(self):
        return self.pts

    def get_corners(self):
        return self.corners.copy()

    def get_state(self):
        return self.p.copy()

    def _validate(self, p):
        p = np.asarray(p, dtype=np.float64)
        if p.shape != (self.n_params,) or not np.all(np.isfinite(p)):
            raise ValueError(f"invalid state {p}")
        M = self.state_to_matrix(p)
        if abs(np.linalg.det(M)) < SINGULAR_EPS:
            raise SingularWarpError("singular warp")
        return p, M

    def set_state(self, p):
        p, M = self._validate(p)
        pts = project(M, self.init_pts)
        corners = project(M, self.init_corners)
        self.p, self.M, self.pts, self.corners = p.copy(), M, pts, corners

    def set_corners(self, corners):
        corners = check_corners(corners)
        p, _ = estimate_warp_from_pts(self, self.init_corners, corners, method="lstsq")
        self.set_state(p)

    def compositional_update(self, dp):
        self.set_state(self.compose(self.p, dp))

    def additive_update(self, dp):
        self.set_state(self.p + np.asarray(dp, dtype=np.float64))

    # -- warp derivatives ------------------------------------------------------

    def dw_dp(self, pts, p):
        """(N, 2, S) derivative of the warped points with respect to ``p``."""
        xh = _homog(pts)
        M = self.state_to_matrix(p)
        m = xh @ M.T
        d = m[:, 2]
        if np.any(np.abs(d) < SINGULAR_EPS):
            raise SingularWarpError("projective denominator vanishes")
        w = m[:, :2] / d[:, None]
        q = np.einsum("sij,nj->nsi", self.generators, xh)
        out = (q[:, :, :2] - w[:, None, :] * q[:, :, 2:3]) / d[:, None, None]
        return out.transpose(0, 2, 1)

    def d2w_dp2(self, pts, p):
        """(N, 2, S, S) second derivative; zero unless the warp is projective."""
        n, s = len(pts), self.n_params
        if not np.any(self.generators[:, 2, :]):
            return np.zeros((n, 2, s, s))
        xh = _homog(pts)
        d = xh @ self.state_to_matrix(p)[2]
        q2 = np.einsum("sj,nj->ns", self.generators[:, 2, :], xh)
        D = self.dw_dp(pts, p)
        out = D[:, :, None, :] * q2[:, None, :, None] + D[:, :, :, None] * q2[:, None, None, :]
        return -out / d[:, None, None, None]

    def dw_dx(self, pts, p):
        """(N, 2, 2) spatial Jacobian ``dw_c / dx_e``."""
        xh = _homog(pts)
        M = self.state_to_matrix(p)
        m = xh @ M.T
        d = m[:, 2]
        if np.any(np.abs(d) < SINGULAR_EPS):
            raise SingularWarpError("projective denominator vanishes")
        w = m[:, :2] / d[:, None]
        out = M[None, :2, :2] - w[:, :, None] * M[None, 2, None, :2]
        return out / d[:, None, None]

    def d2w_dx2(self, pts, p):
        """(N, 2, 2, 2) spatial second derivative ``d2w_c / dx_e dx_g``."""
        M = self.state_to_matrix(p)
        n = len(pts)
        if not np.any(M[2, :2]):
            return np.zeros((n, 2, 2, 2))
        d = _homog(pts) @ M[2]
        A = self.dw_dx(pts, p)
        r = M[2, :2]
        out = A[:, :, None, :] * r[None, None, :, None] + A[:, :, :, None] * r[None, None, None, :]
        return -out / d[:, None, None, None]

    def _inv_dw_dx(self):
        A = self.dw_dx(self.init_pts, self.p)
        det = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
        if np.any(np.abs(det) < SINGULAR_EPS):
            raise SingularWarpError("spatial warp Jacobian is singular")
        inv = np.empty_like(A)
        inv[:, 0, 0] = A[:, 1, 1]
        inv[:, 1, 1] = A[:, 0, 0]
        inv[:, 0, 1] = -A[:, 0, 1]
        inv[:, 1, 0] = -A[:, 1, 0]
        return inv / det[:, None, None]

    def _check_grad(self, grad):
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != (self.n_pts, 2):
            raise ValueError(f"pixel gradient must be ({self.n_pts}, 2), got {grad.shape}")
        return grad

    def _check_hess(self, hess):
        hess = np.asarray(hess, dtype=np.float64)
        if hess.shape != (self.n_pts, 2, 2):
            raise ValueError(f"pixel Hessian must be ({self.n_pts}, 2, 2), got {hess.shape}")
        return hess

    # -- interfacing functions (pixel Jacobians) -------------------------------

    def cmpt_pix_jacobian(self, grad):
        """dI_t/dp at the current state (forward additive)."""
        grad = self._check_grad(grad)
        return np.einsum("nc,ncs->ns", grad, self.dw_dp(self.init_pts, self.p))

    def cmpt_warped_grad(self, grad):
        """Gradient of ``I(w(x, p))`` with respect to canonical ``x``."""
        grad = self._check_grad(grad)
        return np.einsum("nc,nce->ne", grad, self.dw_dx(self.init_pts, self.p))

    def cmpt_warped_hess(self, grad, hess):
        """Spatial Hessian of ``I(w(x, p))`` with respect to canonical ``x``."""
        grad = self._check_grad(grad)
        hess = self._check_hess(hess)
        A = self.dw_dx(self.init_pts, self.p)
        out = np.einsum("nce,ncd,ndg->neg", A, hess, A)
        out += np.einsum("nc,nceg->neg", grad, self.d2w_dx2(self.init_pts, self.p))
        return out

    def cmpt_warped_pix_jacobian(self, grad):
        """d I_t(w(w(x0, dp), p)) / d dp at dp = 0 (compositional methods)."""
        gw = self.cmpt_warped_grad(grad)
        return np.einsum("ne,nes->ns", gw, self._dwdp0)

    def cmpt_approx_pix_jacobian(self, grad0):
        """dI_t/dp approximated from the template gradient in canonical
        coordinates, assuming the current warp aligns I_t with I_0."""
        grad0 = self._check_grad(grad0)
        g = np.einsum("ne,nec->nc", grad0, self._inv_dw_dx())
        return np.einsum("nc,ncs->ns", g, self.dw_dp(self.init_pts, self.p))

    # -- interfacing functions (pixel Hessians) --------------------------------

    @staticmethod
    def _pix_hess(D, D2, grad, hess):
        tmp = np.einsum("ncd,ndj->ncj", hess, D)
        out = np.einsum("nci,ncj->nij", D, tmp)
        out += np.einsum("nc,ncij->nij", grad, D2)
        return out

    def cmpt_pix_hessian(self, grad, hess):
        grad = self._check_grad(grad)
        hess = self._check_hess(hess)
        return self._pix_hess(self.dw_dp(self.init_pts, self.p),
                              self.d2w_dp2(self.init_pts, self.p), grad, hess)

    def cmpt_warped_pix_hessian(self, grad, hess):
        gw = self.cmpt_warped_grad(grad)
        hw = self.cmpt_warped_hess(grad, hess)
        return self._pix_hess(self._dwdp0, self._d2wdp20, gw, hw)

    def cmpt_approx_pix_hessian(self, grad0, hess0):
        grad0 = self._check_grad(grad0)
        hess0 = self._check_hess(hess0)
        Ainv = self._inv_dw_dx()
        g = np.einsum("ne,nec->nc", grad0, Ainv)
        inner = hess0 - np.einsum("nc,nceg->neg", g, self.d2w_dx2(self.init_pts, self.p))
        h = np.einsum("nec,neg,ngd->ncd", Ainv, inner, Ainv)
        return self._pix_hess(self.dw_dp(self.init_pts, self.p),
                              self.d2w_dp2(self.init_pts, self.p), g, h)

    # -- stochastic sampler ----------------------------------------------------

    def estimate_state_sigma(self, corner_sigma_px):
        """Per-component sigma that moves the corners by ``corner_sigma_px``.

        ``m_i`` is the mean corner displacement per unit compositional change
        of component i (exact for the linear models, first order for the
        homography).
        """
        if corner_sigma_px <= 0:
            raise ValueError("corner_sigma_px must be positive")
        cc = self.init_corners
        A = self.dw_dx(cc, self.p)
        D = np.einsum("nce,nes->ncs", A, self.dw_dp(cc, np.zeros(self.n_params)))
        m = np.linalg.norm(D, axis=1).mean(axis=0)
        if np.any(m < SINGULAR_EPS):
            raise DegenerateParameterizationError("a state component does not move the corners")
        return corner_sigma_px / m

    def initialize_sampler(self, config):
        if not isinstance(config, SamplerConfig):
            config = SamplerConfig(state_sigma=config)
        if config.state_sigma is None or config.state_sigma.shape != (self.n_params,):
            raise ValueError(f"state_sigma must have length {self.n_params}")
        self.sampler = config

    def _cfg(self, config):
        cfg = config if config is not None else self.sampler
        if cfg is None:
            raise ValueError("sampler not initialized")
        return cfg

    def generate_perturbation(self, config=None):
        cfg = self._cfg(config)
        return cfg.rng.normal(0.0, 1.0, self.n_params) * cfg.state_sigma

    def random_walk_step(self, p, config=None, mode="compositional"):
        eps = self.generate_perturbation(config)
        if mode == "additive":
            return np.asarray(p, dtype=np.float64) + eps
        if mode == "compositional":
            return self.compose(p, eps)
        raise ValueError(f"mode must be 'additive' or 'compositional', got {mode!r}")

    def additive_random_walk(self, p, config=None):
        return self.random_walk_step(p, config, "additive")

    def compositional_random_walk(self, p, config=None):
        return self.random_walk_step(p, config, "compositional")

    def auto_regression_step(self, p, p_prev, config=None):
        """AR(1): ``p + a_r (p - p_prev) + eps``."""
        cfg = self._cfg(config)
        p = np.asarray(p, dtype=np.float64)
        return p + cfg.ar_coeff * (p - np.asarray(p_prev)) + self.generate_perturbation(cfg)

    additive_auto_regression1 = auto_regression_step

    def estimate_mean_of_samples(self, samples, weights=None):
        """Weighted arithmetic mean of state vectors."""
        samples = np.asarray(samples, dtype=np.float64)
        if samples.ndim != 2 or len(samples) == 0:
            raise ValueError("need a nonempty (K, S) sample array")
        if weights is None:
            weights = np.ones(len(samples))
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (len(samples),) or np.any(weights < 0):
            raise ValueError("weights must be nonnegative, one per sample")
        total = weights.sum()
        if total <= 0:
            raise ValueError("weights sum to zero")
        return weights @ samples / total

    # -- point-based fitting ---------------------------------------------------

    def fit_state(self, src, dst):
        """Least-squares state mapping ``src`` onto ``dst``; None if degenerate."""
        raise NotImplementedError

    def estimate_warp_from_pts(self, src, dst, method="ransac", inlier_threshold=2.0,
                               max_iters=500, seed=0):
        return estimate_warp_from_pts(self, src, dst, method, inlier_threshold,
                                      max_iters, seed)


class _LinearSSM(StateSpaceModel):
    """Models whose warp is affine in both x and p; fitted by linear LS."""

    def _design(self, src):
        raise NotImplementedError

    def fit_state(self, src, dst):
        A = self._design(src)
        b = (np.asarray(dst) - np.asarray(src)).ravel()
        p, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
        if rank < self.n_params:
            return None
        return p


class Translation(_LinearSSM):
    name = "translation"
    n_params = 2
    min_points = 1
    generators = np.stack([_unit(0, 2), _unit(1, 2)])

    def _canonical_scale(self, corners):
        c = corners
        width = 0.5 * (np.linalg.norm(c[1] - c[0]) + np.linalg.norm(c[2] - c[3]))
        height = 0.5 * (np.linalg.norm(c[3] - c[0]) + np.linalg.norm(c[2] - c[1]))
        return np.array([width, height])

    def _design(self, src):
        n = len(src)
        A = np.zeros((2 * n, 2))
        A[0::2, 0] = 1.0
        A[1::2, 1] = 1.0
        return A


class Similitude(_LinearSSM):
    """``(tx, ty, a, b)`` with linear part ``[[1 + a, -b], [b, 1 + a]]``."""

    name = "similitude"
    n_params = 4
    min_points = 2
    generators = np.stack([_unit(0, 2), _unit(1, 2), _unit(0, 0) + _unit(1, 1),
                           _unit(1, 0) - _unit(0, 1)])

    def _design(self, src):
        src = np.asarray(src, dtype=np.float64)
        n = len(src)
        x, y = src[:, 0], src[:, 1]
        A = np.zeros((2 * n, 4))
        A[0::2] = np.column_stack([np.ones(n), np.zeros(n), x, -y])
        A[1::2] = np.column_stack([np.zeros(n), np.ones(n), y, x])
        return A

    @staticmethod
    def scale_rotation(p):
        """Derived (scale, rotation angle) of a similitude state."""
        return float(np.hypot(1 + p[2], p[3])), float(np.arctan2(p[3], 1 + p[2]))


class Affine(_LinearSSM):
    """``(a00 - 1, a01, a10, a11 - 1, tx, ty)``."""

    name = "affine"
    n_params = 6
    min_points = 3
    generators = np.stack([_unit(0, 0), _unit(0, 1), _unit(1, 0), _unit(1, 1),
                           _unit(0, 2), _unit(1, 2)])

    def _design(self, src):
        src = np.asarray(src, dtype=np.float64)
        n = len(src)
        x, y = src[:, 0], src[:, 1]
        z, o = np.zeros(n), np.ones(n)
        A = np.zeros((2 * n, 6))
        A[0::2] = np.column_stack([x, y, z, z, o, z])
        A[1::2] = np.column_stack([z, z, x, y, z, o])
        return A


def _normalize_pts(pts):
    c = pts.mean(axis=0)
    d = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    if d < SINGULAR_EPS:
        return None, None
    s = np.sqrt(2.0) / d
    T = np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])
    return (pts - c) * s, T


def normalized_dlt(src, dst):
    """Homography matrix mapping ``src`` to ``dst`` (>= 4 points); None if degenerate."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    sn, Ts = _normalize_pts(src)
    dn, Td = _normalize_pts(dst)
    if sn is None or dn is None:
        return None
    n = len(src)
    x, y = sn[:, 0], sn[:, 1]
    u, v = dn[:, 0], dn[:, 1]
    z, o = np.zeros(n), np.ones(n)
    A = np.zeros((2 * n, 9))
    A[0::2] = np.column_stack([x, y, o, z, z, z, -u * x, -u * y, -u])
    A[1::2] = np.column_stack([z, z, z, x, y, o, -v * x, -v * y, -v])
    _, sv, vt = np.linalg.svd(A)
    if sv[min(7, len(sv) - 1)] < 1e-10 * sv[0]:
        return None
    Hn = vt[-1].reshape(3, 3)
    H = np.linalg.inv(Td) @ Hn @ Ts
    if abs(H[2, 2]) < SINGULAR_EPS:
        return None
    return H / H[2, 2]


class Homography(StateSpaceModel):
    """Entries of ``H - I`` in row-major order, ``h22`` fixed to 1."""

    name = "homography"
    n_params = 8
    min_points = 4
    generators = np.stack([_unit(0, 0), _unit(0, 1), _unit(0, 2), _unit(1, 0),
                           _unit(1, 1), _unit(1, 2), _unit(2, 0), _unit(2, 1)])

    def fit_state(self, src, dst):
        H = normalized_dlt(src, dst)
        if H is None:
            return None
        return self.matrix_to_state(H)


SSM_TYPES = {"translation": Translation, "similitude": Similitude,
             "affine": Affine, "homography": Homography}
SSM_ALIASES = {"2": "translation", "4": "similitude", "6": "affine", "8": "homography",
               "trans": "translation", "sim": "similitude", "aff": "affine",
               "hom": "homography"}


def make_ssm(name, resolution=(50, 50)):
    key = SSM_ALIASES.get(str(name).lower(), str(name).lower())
    if key not in SSM_TYPES:
        raise ValueError(f"unknown state space model {name!r}")
    return SSM_TYPES[key](resolution)


def _residuals(ssm, p, src, dst):
    try:
        return np.linalg.norm(ssm.apply_warp(src, p) - dst, axis=1)
    except SingularWarpError:
        return np.full(len(src), np.inf)


def estimate_warp_from_pts(ssm, src, dst, method="ransac", inlier_threshold=2.0,
                           max_iters=500, seed=0):
    """Robustly fit the state of ``ssm`` mapping ``src`` points onto ``dst``.

    ``method`` is ``"ransac"``, ``"lmeds"`` or ``"lstsq"``.  Minimal-sample
    hypotheses are scored by reprojection distance; the winner is refit by
    least squares on its inliers.  Returns ``(state, inlier_mask)``.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
        raise ValueError("src and dst must be matching (N, 2) arrays")
    n, m = len(src), ssm.min_points
    if n < m:
        raise ValueError(f"{ssm.name} needs at least {m} correspondences, got {n}")
    method = method.lower()
    if method in ("lstsq", "least-squares", "ls"):
        p = ssm.fit_state(src, dst)
        if p is None:
            raise ValueError("degenerate point configuration")
        return p, np.ones(n, dtype=bool)
    if method not in ("ransac", "lmeds"):
        raise ValueError(f"unknown method {method!r}")

    rng = np.random.default_rng(seed)
    best_key, best_mask = None, None
    for _ in range(max_iters):
        idx = rng.choice(n, size=m, replace=False)
        p = ssm.fit_state(src[idx], dst[idx])
        if p is None:
            continue
        res = _residuals(ssm, p, src, dst)
        if method == "ransac":
            mask = res < inlier_threshold
            key = (-int(mask.sum()), float(np.sum(res[mask])))
        else:
            med = float(np.median(res ** 2))
            key = (med,)
            mask = None
        if best_key is None or key < best_key:
            best_key, best_p, best_mask = key, p, mask
            if method == "ransac" and mask.all():
                break
    if best_key is None:
        raise NoConsensusError("no non-degenerate minimal sample found")
    if method == "lmeds":
        denom = max(n - m, 1)
        sigma = 1.4826 * (1.0 + 5.0 / denom) * np.sqrt(best_key[0])
        threshold = max(2.5 * sigma, 1e-6)
        best_mask = _residuals(ssm, best_p, src, dst) <= threshold
    else:
        threshold = inlier_threshold
    if best_mask.sum() < m:
        raise NoConsensusError("no hypothesis reached the minimal inlier count")

    p, mask = best_p, best_mask
    for _ in range(3):
        refit = ssm.fit_state(src[mask], dst[mask])
        if refit is None:
            break
        new_mask = _residuals(ssm, refit, src, dst) < threshold
        if new_mask.sum() < m:
            break
        p = refit
        if np.array_equal(new_mask, mask):
            break
        mask = new_mask
    return p, _residuals(ssm, p, src, dst) < threshold
