"""Search methods: optimizers and samplers that use an appearance model and a
state space model through their public interfaces only.

Gradient methods (ICLK, FCLK, FALK, IALK, ESM) iterate a Newton step
``dp = -H^-1 J^T`` built from the appearance/state-space chain rule; NN looks
up the nearest stored perturbation; PF runs a particle filter over states.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .appearance import AppearanceModel, make_am
from .errors import SingularWarpError
from .ssm import SamplerConfig, StateSpaceModel, make_ssm


@dataclass
class TrackerConfig:
    max_iterations: int = 30
    epsilon: float = 0.01
    hessian_order: str = "first"
    n_samples: int = 1000
    index: str = "brute-force"
    n_particles: int = 200
    ess_threshold: float = 0.5
    corner_sigma_px: float = 5.0
    state_sigma: np.ndarray = None
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1 or self.n_samples < 1 or self.n_particles < 1:
            raise ValueError("iteration and sample counts must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.hessian_order not in ("first", "second"):
            raise ValueError("hessian_order must be 'first' or 'second'")
        if self.index not in ("brute-force", "kd-tree"):
            raise ValueError("index must be 'brute-force' or 'kd-tree'")
        if self.corner_sigma_px < 0:
            raise ValueError("corner_sigma_px must be nonnegative")


@dataclass
class UpdateResult:
    corners: np.ndarray
    iterations: int = 0
    converged: bool = False
    rank_deficient: bool = False
    failed: bool = False
    weights_reset: bool = False
    extra: dict = field(default_factory=dict)


def newton_step(jacobian, hessian):
    """``-H^-1 J^T``; falls back to the pseudo-inverse for rank-deficient H."""
    sv = np.linalg.svd(hessian, compute_uv=False)
    if sv[0] == 0.0 or sv[-1] <= sv[0] * 1e-12:
        return -np.linalg.pinv(hessian) @ jacobian, True
    return -np.linalg.solve(hessian, jacobian), False


class SearchMethod:
    name = ""
    supports_ilm = False

    def __init__(self, am, ssm, config=None):
        if not isinstance(am, AppearanceModel):
            raise TypeError("am must be an AppearanceModel")
        if not isinstance(ssm, StateSpaceModel):
            raise TypeError("ssm must be a StateSpaceModel")
        if am.ilm is not None and not self.supports_ilm:
            raise ValueError(f"{self.name} does not support illumination models")
        self.am = am
        self.ssm = ssm
        self.config = config or TrackerConfig()
        self.last_result = None

    def _start(self, frame, corners):
        self.am.set_init_image(frame)
        h, w = self.am.init_img.shape
        c = np.asarray(corners, dtype=np.float64)
        if c.shape == (4, 2):
            tol = 1e-6
            if (np.any(c < -tol) or np.any(c[:, 0] > w - 1 + tol)
                    or np.any(c[:, 1] > h - 1 + tol)):
                raise ValueError("initial corners lie outside the frame")
        self.ssm.initialize(c)
        self.am.initialize_pix_vals(self.ssm.get_pts())

    def initialize(self, frame, corners):
        raise NotImplementedError

    def update(self, frame):
        raise NotImplementedError

    def get_region(self):
        return self.ssm.get_corners()

    def set_region(self, corners):
        self.ssm.set_corners(corners)

    def _sampler_config(self):
        cfg = self.config
        if cfg.state_sigma is not None:
            sigma = np.asarray(cfg.state_sigma, dtype=np.float64)
        elif cfg.corner_sigma_px == 0:
            sigma = np.zeros(self.ssm.n_params)
        else:
            sigma = self.ssm.estimate_state_sigma(cfg.corner_sigma_px)
        return SamplerConfig(state_sigma=sigma, seed=cfg.seed)


class GradientDescentSM(SearchMethod):
    """Shared iteration loop; subclasses supply the Jacobian/Hessian and the
    update rule."""

    @property
    def second_order(self):
        return self.config.hessian_order == "second"

    def initialize(self, frame, corners):
        self._start(frame, corners)
        pts = self.ssm.get_pts()
        self.am.initialize_pix_grad(pts)
        if self.second_order:
            self.am.initialize_pix_hess(pts)
        self.am.initialize()
        self._initialize_sm()
        self.last_result = UpdateResult(self.get_region())

    def _initialize_sm(self):
        pass

    def jacobian_hessian(self):
        raise NotImplementedError

    def _apply(self, dp):
        raise NotImplementedError

    def _split(self, dp):
        s = self.ssm.n_params
        if len(dp) > s:
            self.am.set_ilm_params(self.am.pa + dp[s:])
        return dp[:s]

    def update(self, frame):
        am, ssm = self.am, self.ssm
        am.set_curr_image(frame)
        result = UpdateResult(ssm.get_corners())
        for it in range(self.config.max_iterations):
            prev_corners = ssm.get_corners()
            prev_state = ssm.get_state()
            prev_pa = am.pa.copy()
            try:
                am.update_pix_vals(ssm.get_pts())
                am.update_similarity()
                jac, hess = self.jacobian_hessian()
                dp, deficient = newton_step(jac, hess)
                result.rank_deficient |= deficient
                self._apply(dp)
            except SingularWarpError:
                ssm.set_state(prev_state)
                am.set_ilm_params(prev_pa)
                result.failed = True
                break
            result.iterations = it + 1
            change = np.max(np.linalg.norm(ssm.get_corners() - prev_corners, axis=1))
            if change < self.config.epsilon:
                result.converged = True
                break
        result.corners = ssm.get_corners()
        self.last_result = result
        return result.corners


class ICLK(GradientDescentSM):
    """Inverse compositional: template-side Jacobian and Hessian are fixed."""

    name = "iclk"

    def _initialize_sm(self):
        am, ssm = self.am, self.ssm
        self.init_pix_jacobian = ssm.cmpt_warped_pix_jacobian(am.init_pix_grad)
        pix_hess = None
        if self.second_order:
            pix_hess = ssm.cmpt_warped_pix_hessian(am.init_pix_grad, am.init_pix_hess)
        self.hessian = am.cmpt_self_hessian(self.init_pix_jacobian, pix_hess, which="init")

    def jacobian_hessian(self):
        self.am.update_init_grad()
        jac = self.am.cmpt_init_jacobian(self.init_pix_jacobian)
        return jac, self.hessian

    def _apply(self, dp):
        self.ssm.compositional_update(self.ssm.invert_state(dp))


class FCLK(GradientDescentSM):
    """Forward compositional: current-image gradients warped to the template frame."""

    name = "fclk"
    supports_ilm = True

    def _curr_pix_terms(self):
        am, ssm = self.am, self.ssm
        am.update_curr_grad()
        pts = ssm.get_pts()
        grad = am.update_pix_grad(pts)
        pix_jac = ssm.cmpt_warped_pix_jacobian(grad)
        pix_hess = None
        if self.second_order:
            hess = am.update_pix_hess(pts)
            pix_hess = ssm.cmpt_warped_pix_hessian(grad, hess)
        return pix_jac, pix_hess

    def jacobian_hessian(self):
        pix_jac, pix_hess = self._curr_pix_terms()
        jac = self.am.cmpt_curr_jacobian(pix_jac)
        hess = self.am.cmpt_self_hessian(pix_jac, pix_hess, which="curr")
        return jac, hess

    def _apply(self, dp):
        self.ssm.compositional_update(self._split(dp))


class FALK(FCLK):
    """Forward additive: gradients at the warped points, additive update."""

    name = "falk"

    def _curr_pix_terms(self):
        am, ssm = self.am, self.ssm
        am.update_curr_grad()
        pts = ssm.get_pts()
        grad = am.update_pix_grad(pts)
        pix_jac = ssm.cmpt_pix_jacobian(grad)
        pix_hess = None
        if self.second_order:
            hess = am.update_pix_hess(pts)
            pix_hess = ssm.cmpt_pix_hessian(grad, hess)
        return pix_jac, pix_hess

    def _apply(self, dp):
        self.ssm.additive_update(self._split(dp))


class IALK(GradientDescentSM):
    """Inverse additive: template gradients mapped through the current warp."""

    name = "ialk"

    def _initialize_sm(self):
        am, ssm = self.am, self.ssm
        # template derivatives expressed in canonical coordinates
        self.init_grad_canonical = ssm.cmpt_warped_grad(am.init_pix_grad)
        self.init_hess_canonical = None
        if self.second_order:
            self.init_hess_canonical = ssm.cmpt_warped_hess(am.init_pix_grad, am.init_pix_hess)

    def jacobian_hessian(self):
        am, ssm = self.am, self.ssm
        am.update_curr_grad()
        pix_jac = ssm.cmpt_approx_pix_jacobian(self.init_grad_canonical)
        pix_hess = None
        if self.second_order:
            pix_hess = ssm.cmpt_approx_pix_hessian(self.init_grad_canonical,
                                                   self.init_hess_canonical)
        jac = am.cmpt_curr_jacobian(pix_jac)
        hess = am.cmpt_self_hessian(pix_jac, pix_hess, which="curr")
        return jac, hess

    def _apply(self, dp):
        self.ssm.additive_update(dp)


class ESM(FCLK):
    """Difference of forward and inverse Jacobians, sum of their Hessians."""

    name = "esm"
    supports_ilm = False

    def _initialize_sm(self):
        am, ssm = self.am, self.ssm
        self.init_pix_jacobian = ssm.cmpt_warped_pix_jacobian(am.init_pix_grad)
        pix_hess = None
        if self.second_order:
            pix_hess = ssm.cmpt_warped_pix_hessian(am.init_pix_grad, am.init_pix_hess)
        self.init_hessian = am.cmpt_self_hessian(self.init_pix_jacobian, pix_hess, which="init")

    def jacobian_hessian(self):
        pix_jac, pix_hess = self._curr_pix_terms()
        self.am.update_init_grad()
        jac = self.am.cmpt_difference_of_jacobians(self.init_pix_jacobian, pix_jac)
        self.curr_hessian = self.am.cmpt_self_hessian(pix_jac, pix_hess, which="curr")
        return jac, self.init_hessian + self.curr_hessian


class NN(SearchMethod):
    """Nearest neighbour lookup in a dataset of perturbed template features."""

    name = "nn"

    def initialize(self, frame, corners):
        am, ssm, cfg = self.am, self.ssm, self.config
        self._start(frame, corners)
        am.initialize()
        ssm.initialize_sampler(self._sampler_config())
        am.init_dist_feat()
        p0 = ssm.get_state()
        self.sample_updates = np.zeros((cfg.n_samples, ssm.n_params))
        self.dataset = np.zeros((cfg.n_samples, ssm.n_pts))
        for j in range(cfg.n_samples):
            dp = ssm.generate_perturbation()
            self.sample_updates[j] = dp
            ssm.compositional_update(ssm.invert_state(dp))
            am.update_pix_vals(ssm.get_pts())
            self.dataset[j] = am.update_dist_feat()
            ssm.set_state(p0)
        self.tree = cKDTree(self.dataset) if cfg.index == "kd-tree" else None
        self.last_index = None
        self.last_result = UpdateResult(self.get_region())

    def search_index(self, feature):
        if self.tree is not None:
            return int(self.tree.query(feature)[1])
        d = self.dataset - feature
        return int(np.argmin(np.einsum("ij,ij->i", d, d)))

    def update(self, frame):
        am, ssm = self.am, self.ssm
        am.set_curr_image(frame)
        am.update_pix_vals(ssm.get_pts())
        feat = am.update_dist_feat()
        j = self.search_index(feat)
        self.last_index = j
        result = UpdateResult(ssm.get_corners(), iterations=1, converged=True)
        try:
            ssm.compositional_update(self.sample_updates[j])
        except SingularWarpError:
            result.failed = True
        result.corners = ssm.get_corners()
        result.extra["index"] = j
        self.last_result = result
        return result.corners


class PF(SearchMethod):
    """Particle filter with a compositional random-walk transition model."""

    name = "pf"

    def initialize(self, frame, corners):
        am, ssm, cfg = self.am, self.ssm, self.config
        self._start(frame, corners)
        am.initialize()
        ssm.initialize_sampler(self._sampler_config())
        self._reset_particles()
        self.last_result = UpdateResult(self.get_region())

    def _reset_particles(self):
        n = self.config.n_particles
        self.particles = np.tile(self.ssm.get_state(), (n, 1))
        self.weights = np.full(n, 1.0 / n)

    def set_region(self, corners):
        super().set_region(corners)
        self._reset_particles()

    def _resample(self, weights):
        n = len(weights)
        positions = (self.ssm.sampler.rng.random() + np.arange(n)) / n
        idx = np.searchsorted(np.cumsum(weights), positions)
        return np.minimum(idx, n - 1)

    def update(self, frame):
        am, ssm, cfg = self.am, self.ssm, self.config
        am.set_curr_image(frame)
        n = len(self.particles)
        log_w = np.full(n, -np.inf)
        for i in range(n):
            try:
                state = ssm.compositional_random_walk(self.particles[i])
                ssm.set_state(state)
            except SingularWarpError:
                continue
            self.particles[i] = state
            am.update_pix_vals(ssm.get_pts())
            am.update_similarity()
            log_w[i] = am.get_log_likelihood()
        result = UpdateResult(ssm.get_corners(), iterations=1, converged=True)
        with np.errstate(divide="ignore"):
            log_w = log_w + np.log(self.weights)
        if not np.any(np.isfinite(log_w)):
            weights = np.full(n, 1.0 / n)
            result.weights_reset = True
        else:
            weights = np.exp(log_w - np.max(log_w))
            weights /= weights.sum()
        ess = 1.0 / np.sum(weights ** 2)
        result.extra["ess"] = float(ess)
        if ess < cfg.ess_threshold * n:
            self.particles = self.particles[self._resample(weights)]
            weights = np.full(n, 1.0 / n)
            result.extra["resampled"] = True
        self.weights = weights
        mean_state = ssm.estimate_mean_of_samples(self.particles, self.weights)
        ssm.set_state(mean_state)
        result.corners = ssm.get_corners()
        self.last_result = result
        return result.corners


SM_TYPES = {"iclk": ICLK, "fclk": FCLK, "falk": FALK, "ialk": IALK, "esm": ESM,
            "nn": NN, "pf": PF}


def make_tracker(sm="fclk", am="ssd", ssm="homography", config=None, resolution=(50, 50),
                 ilm="none", **am_kwargs):
    """Build a tracker from names (or ready-made AM/SSM instances)."""
    if sm not in SM_TYPES:
        raise ValueError(f"unknown search method {sm!r}; choose from {sorted(SM_TYPES)}")
    if isinstance(am, str):
        am = make_am(am, ilm=ilm, **am_kwargs)
    if isinstance(ssm, str):
        ssm = make_ssm(ssm, resolution)
    return SM_TYPES[sm](am, ssm, config)
