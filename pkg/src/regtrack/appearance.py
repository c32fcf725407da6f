"""Appearance models: similarity between a template and a candidate patch.

Every model exposes the value ``f(I0, It)`` (maximized at alignment), its
gradients with respect to both patches, and the chain-rule interfacing
functions (prefixed ``cmpt_``) that turn pixel Jacobians/Hessians supplied
by a state space model into derivatives with respect to warp parameters.

Methods depend on each other's cached results.  The dependency order is

    initialize -> update_pix_vals -> update_similarity
        -> update_init_grad / update_curr_grad -> cmpt_*_jacobian
        -> cmpt_*_hessian (second order variants need the gradients too)

and each method fails fast with :class:`CallOrderError` when its upstream
cache is stale.
"""
from collections import namedtuple

import numpy as np

from .errors import CallOrderError, DegeneratePatchError
from .image import ImageBase

SIGMA_EPS = 1e-8

IlmDerivatives = namedtuple(
    "IlmDerivatives", ["dg_dpa", "dg_dI", "d2g_dpa2", "d2g_dIdpa"])


class GainBias:
    """Gain-and-bias illumination model ``g(I, (a, b)) = (1 + a) * I + b``."""

    n_params = 2
    name = "gb"

    def identity(self):
        return np.zeros(self.n_params)

    def apply(self, patch, pa):
        patch = np.asarray(patch, dtype=np.float64)
        return (1.0 + pa[0]) * patch + pa[1]

    def derivatives(self, patch, pa):
        patch = np.asarray(patch, dtype=np.float64)
        n = len(patch)
        dg_dpa = np.column_stack([patch, np.ones(n)])
        d2g_dIdpa = np.zeros((n, 2))
        d2g_dIdpa[:, 0] = 1.0
        return IlmDerivatives(
            dg_dpa=dg_dpa,
            dg_dI=1.0 + pa[0],
            d2g_dpa2=np.zeros((n, 2, 2)),
            d2g_dIdpa=d2g_dIdpa,
        )


def ilm_apply(patch, pa, ilm=None):
    return (ilm or GainBias()).apply(patch, np.asarray(pa, dtype=np.float64))


def ilm_derivatives(patch, pa, ilm=None):
    return (ilm or GainBias()).derivatives(patch, np.asarray(pa, dtype=np.float64))


def dist(f1, f2):
    """Squared Euclidean distance between two distance features."""
    f1 = np.asarray(f1, dtype=np.float64)
    f2 = np.asarray(f2, dtype=np.float64)
    if f1.shape != f2.shape:
        raise ValueError(f"feature length mismatch: {f1.shape} vs {f2.shape}")
    d = f1 - f2
    return float(d @ d)


def _as_patch(patch):
    p = np.asarray(patch, dtype=np.float64).ravel()
    if not np.all(np.isfinite(p)):
        raise ValueError("patch contains non-finite values")
    return p


def _as_d2(d2, n, s):
    d2 = np.asarray(d2, dtype=np.float64)
    if d2.ndim == 2 and d2.shape == (s * s, n):
        d2 = d2.T.reshape(n, s, s)
    if d2.shape != (n, s, s):
        raise ValueError(f"pixel Hessian must have shape {(n, s, s)}, got {d2.shape}")
    return d2


class AppearanceModel(ImageBase):
    """Base class holding the template, the current patch and cached stats.

    Subclasses implement ``_stats``, ``_value``, ``_grad0``, ``_gradc``,
    ``_quad0`` and ``_quadc``; everything else is shared.
    """

    name = ""

    def __init__(self, ilm=None, likelihood_alpha=5.0, grad_step=0.5,
                 hess_step=1.0):
        super().__init__(grad_step=grad_step, hess_step=hess_step)
        self.ilm = ilm
        self.likelihood_alpha = likelihood_alpha
        self.I0 = None
        self.It = None
        self.pa = ilm.identity() if ilm is not None else np.zeros(0)
        self.f = None
        self.init_grad = None
        self.curr_grad = None
        self.dist_feat = None
        self.init_dist_feat_ = None
        self._st = None
        self._ilm_d = None
        self._initialized = False
        self._sim_ok = False
        self._init_grad_ok = False
        self._curr_grad_ok = False

    # -- model specific hooks ------------------------------------------------

    def _stats(self, I0, Ic):
        raise NotImplementedError

    def _value(self, st):
        raise NotImplementedError

    def _grad0(self, st):
        raise NotImplementedError

    def _gradc(self, st):
        raise NotImplementedError

    def _quad0(self, st, J):
        raise NotImplementedError

    def _quadc(self, st, J):
        raise NotImplementedError

    def _self_stats(self, I):
        return self._stats(I, I)

    def _dissimilarity(self, f, n):
        return -2.0 * f / n

    def _dist_feature(self, I):
        return I.copy()

    # -- pure helpers ----------------------------------------------------------

    @property
    def n_ilm_params(self):
        return 0 if self.ilm is None else self.ilm.n_params

    def _candidate(self, It, pa):
        if self.ilm is None:
            return It
        return self.ilm.apply(It, pa)

    def similarity(self, I0, It, pa=None):
        """Similarity of an arbitrary patch pair; does not touch the state."""
        I0 = _as_patch(I0)
        It = _as_patch(It)
        if len(I0) != len(It):
            raise ValueError("patch length mismatch")
        pa = self.pa if pa is None else np.asarray(pa, dtype=np.float64)
        return self._value(self._stats(I0, self._candidate(It, pa)))

    def frozen_similarity(self, I0, It, pa=None):
        """The function whose derivatives the analytic methods return.

        Equal to :meth:`similarity` except for models that remap intensities,
        where the remapping is held fixed at the current state.
        """
        return self.similarity(I0, It, pa)

    # -- state ---------------------------------------------------------------

    def update_pix_vals(self, pts):
        self._sim_ok = self._init_grad_ok = self._curr_grad_ok = False
        return super().update_pix_vals(pts)

    def initialize(self, patch=None):
        """Store the template and compute the self-similarity ``f(I0, I0)``."""
        if patch is None:
            if self.init_pix_vals is None:
                raise CallOrderError("initialize needs a patch or initialize_pix_vals")
            patch = self.init_pix_vals
        self.I0 = _as_patch(patch).copy()
        self.I0.setflags(write=False)
        self.It = self.I0.copy()
        self.curr_pix_vals = self.It.copy()
        if self.ilm is not None:
            self.pa = self.ilm.identity()
        self._initialized = True
        self._refresh()
        self.update_init_grad()
        self.update_curr_grad()
        return self.f

    initialize_similarity = initialize

    def _refresh(self):
        Ic = self._candidate(self.It, self.pa)
        self._st = self._stats(self.I0, Ic)
        self.f = float(self._value(self._st))
        if self.ilm is not None:
            self._ilm_d = self.ilm.derivatives(self.It, self.pa)
        self._sim_ok = True
        self._init_grad_ok = self._curr_grad_ok = False

    def set_ilm_params(self, pa):
        self.pa = np.asarray(pa, dtype=np.float64).copy()
        self._sim_ok = self._init_grad_ok = self._curr_grad_ok = False

    def update_similarity(self, patch=None):
        """Store ``It`` (or take the last sampled patch) and return ``f``."""
        if not self._initialized:
            raise CallOrderError("update_similarity called before initialize")
        if patch is None:
            if self.curr_pix_vals is None:
                raise CallOrderError("no current patch sampled")
            patch = self.curr_pix_vals
        It = _as_patch(patch)
        if len(It) != len(self.I0):
            raise ValueError(f"patch length {len(It)} != template length {len(self.I0)}")
        self.It = It.copy()
        self.curr_pix_vals = self.It
        self._refresh()
        return self.f

    def _need_sim(self, what):
        if not self._sim_ok:
            raise CallOrderError(f"{what} needs update_similarity for the current patch")

    def update_init_grad(self):
        self._need_sim("update_init_grad")
        self.init_grad = self._grad0(self._st)
        self._init_grad_ok = True
        return self.init_grad

    def update_curr_grad(self):
        """Gradient of ``f`` with respect to the raw current patch ``It``."""
        self._need_sim("update_curr_grad")
        self.dfdIc = self._gradc(self._st)
        if self.ilm is None:
            self.curr_grad = self.dfdIc
        else:
            self.curr_grad = self.dfdIc * self._ilm_d.dg_dI
        self._curr_grad_ok = True
        return self.curr_grad

    initialize_grad = update_init_grad

    # -- Jacobians -----------------------------------------------------------

    def _check_jac(self, dI_dp):
        dI_dp = np.asarray(dI_dp, dtype=np.float64)
        if dI_dp.ndim != 2 or dI_dp.shape[0] != len(self.I0):
            raise ValueError(
                f"pixel Jacobian must be (N={len(self.I0)}, S), got {dI_dp.shape}")
        return dI_dp

    def cmpt_init_jacobian(self, dI0_dp):
        """``df(I0(p), It)/dp`` as a length-S row."""
        dI0_dp = self._check_jac(dI0_dp)
        if not self._init_grad_ok:
            raise CallOrderError("cmpt_init_jacobian needs update_init_grad")
        return self.init_grad @ dI0_dp

    def cmpt_curr_jacobian(self, dIt_dp):
        """``df(I0, It(p))/dp``; with an ILM the photometric part is appended."""
        dIt_dp = self._check_jac(dIt_dp)
        if not self._curr_grad_ok:
            raise CallOrderError("cmpt_curr_jacobian needs update_curr_grad")
        jac = self.curr_grad @ dIt_dp
        if self.ilm is not None:
            jac = np.concatenate([jac, self.dfdIc @ self._ilm_d.dg_dpa])
        return jac

    def cmpt_difference_of_jacobians(self, dI0_dp, dIt_dp):
        dI0_dp = self._check_jac(dI0_dp)
        dIt_dp = self._check_jac(dIt_dp)
        if dI0_dp.shape != dIt_dp.shape:
            raise ValueError("pixel Jacobian shapes differ")
        if self.ilm is not None:
            raise ValueError("difference of Jacobians is undefined with an illumination model")
        return self.cmpt_curr_jacobian(dIt_dp) - self.cmpt_init_jacobian(dI0_dp)

    # -- Hessians ------------------------------------------------------------

    def _augmented(self, dI_dp, d):
        return np.hstack([d.dg_dI * dI_dp, d.dg_dpa])

    def _ilm_second_term(self, dfdIc, dI_dp, d2I_dp2, d):
        n, s = dI_dp.shape
        a = self.ilm.n_params
        out = np.zeros((s + a, s + a))
        if d2I_dp2 is not None:
            out[:s, :s] = d.dg_dI * np.einsum("k,kij->ij", dfdIc, d2I_dp2)
        cross = np.einsum("k,ki,kj->ij", dfdIc, dI_dp, d.d2g_dIdpa)
        out[:s, s:] = cross
        out[s:, :s] = cross.T
        out[s:, s:] = np.einsum("k,kij->ij", dfdIc, d.d2g_dpa2)
        return out

    def cmpt_self_hessian(self, dI_dp, d2I_dp2=None, which="curr"):
        """Hessian under the perfect-alignment substitution.

        ``which`` selects the patch the derivatives belong to: ``"init"``
        evaluates at ``f(I0, I0)`` (inverse methods), ``"curr"`` at
        ``f(It, It)`` (forward methods).  Passing ``d2I_dp2`` adds the
        second-order pixel term.
        """
        dI_dp = self._check_jac(dI_dp)
        n, s = dI_dp.shape
        if which == "init":
            if not self._initialized:
                raise CallOrderError("cmpt_self_hessian needs initialize")
            I = self.I0
            use_ilm = False
        elif which == "curr":
            self._need_sim("cmpt_self_hessian")
            I = self._candidate(self.It, self.pa)
            use_ilm = self.ilm is not None
        else:
            raise ValueError(f"which must be 'init' or 'curr', got {which!r}")
        st = self._self_stats(I)
        if d2I_dp2 is not None:
            d2I_dp2 = _as_d2(d2I_dp2, n, s)
        if use_ilm:
            d = self._ilm_d
            J = self._augmented(dI_dp, d)
            hess = self._quadc(st, J)
            if d2I_dp2 is not None:
                hess = hess + self._ilm_second_term(self._gradc(st), dI_dp, d2I_dp2, d)
        else:
            hess = self._quadc(st, dI_dp)
            if d2I_dp2 is not None:
                hess = hess + np.einsum("k,kij->ij", self._gradc(st), d2I_dp2)
        return 0.5 * (hess + hess.T)

    def cmpt_init_hessian(self, dI0_dp, d2I0_dp2=None):
        """``d2f(I0(p), It)/dp2`` at the current pair."""
        dI0_dp = self._check_jac(dI0_dp)
        self._need_sim("cmpt_init_hessian")
        hess = self._quad0(self._st, dI0_dp)
        if d2I0_dp2 is not None:
            if not self._init_grad_ok:
                raise CallOrderError("second order cmpt_init_hessian needs update_init_grad")
            n, s = dI0_dp.shape
            hess = hess + np.einsum("k,kij->ij", self.init_grad, _as_d2(d2I0_dp2, n, s))
        return 0.5 * (hess + hess.T)

    def cmpt_curr_hessian(self, dIt_dp, d2It_dp2=None):
        """``d2f(I0, It(p))/dp2`` at the current pair (ILM block appended)."""
        dIt_dp = self._check_jac(dIt_dp)
        self._need_sim("cmpt_curr_hessian")
        n, s = dIt_dp.shape
        if d2It_dp2 is not None:
            if not self._curr_grad_ok:
                raise CallOrderError("second order cmpt_curr_hessian needs update_curr_grad")
            d2It_dp2 = _as_d2(d2It_dp2, n, s)
        if self.ilm is not None:
            d = self._ilm_d
            hess = self._quadc(self._st, self._augmented(dIt_dp, d))
            if d2It_dp2 is not None:
                hess = hess + self._ilm_second_term(self.dfdIc, dIt_dp, d2It_dp2, d)
        else:
            hess = self._quadc(self._st, dIt_dp)
            if d2It_dp2 is not None:
                hess = hess + np.einsum("k,kij->ij", self.curr_grad, d2It_dp2)
        return 0.5 * (hess + hess.T)

    def cmpt_sum_of_hessians(self, dI0_dp, dIt_dp, d2I0_dp2=None, d2It_dp2=None):
        return (self.cmpt_init_hessian(dI0_dp, d2I0_dp2)
                + self.cmpt_curr_hessian(dIt_dp, d2It_dp2))

    # -- distance features and likelihood -------------------------------------

    def init_dist_feat(self):
        if not self._initialized:
            raise CallOrderError("init_dist_feat needs initialize")
        self.init_dist_feat_ = self._dist_feature(self.I0)
        return self.init_dist_feat_

    initialize_dist_feat = init_dist_feat

    def update_dist_feat(self, patch=None):
        if patch is None:
            if self.curr_pix_vals is None:
                raise CallOrderError("update_dist_feat needs a sampled patch")
            patch = self.curr_pix_vals
        self.dist_feat = self._dist_feature(_as_patch(patch))
        return self.dist_feat

    def get_dist_feat(self):
        return self.dist_feat

    dist = staticmethod(dist)

    def dissimilarity(self):
        self._need_sim("dissimilarity")
        return max(0.0, float(self._dissimilarity(self.f, len(self.I0))))

    def get_likelihood(self):
        """``exp(-alpha * D)`` with ``D`` the model's nonnegative dissimilarity."""
        return float(np.exp(-self.likelihood_alpha * self.dissimilarity()))

    def get_log_likelihood(self):
        return -self.likelihood_alpha * self.dissimilarity()


class SSD(AppearanceModel):
    """Negated half sum of squared differences, ``-0.5 * |It - I0|^2``."""

    name = "ssd"

    def _map(self, I0, Ic):
        return I0, Ic

    def _stats(self, I0, Ic):
        I0m, Icm = self._map(I0, Ic)
        return {"I0m": I0m, "Icm": Icm, "diff": Icm - I0m}

    def _value(self, st):
        d = st["diff"]
        return -0.5 * float(d @ d)

    def _grad0(self, st):
        return st["diff"].copy()

    def _gradc(self, st):
        return -st["diff"]

    def _quad0(self, st, J):
        return -(J.T @ J)

    _quadc = _quad0


def _bin_index(values, n_bins, lo, hi):
    idx = np.floor((values - lo) * (n_bins / (hi - lo))).astype(np.intp)
    return np.clip(idx, 0, n_bins - 1)


def conditional_shift(source, target, n_bins=64, intensity_range=(0.0, 256.0)):
    """Per-pixel ``E[target | bin(source)] - E[source | bin(source)]``.

    Adding this to ``source`` gives its conditional-expectation remapping
    while keeping the within-bin detail of ``source``; with one intensity
    level per bin it is exactly ``E[target | source]``.  Every source pixel
    lies in a non-empty bin, so no fallback is needed.
    """
    lo, hi = intensity_range
    bins = _bin_index(source, n_bins, lo, hi)
    counts = np.bincount(bins, minlength=n_bins)
    diff = np.bincount(bins, weights=target - source, minlength=n_bins)
    filled = counts > 0
    shift = np.zeros(n_bins)
    shift[filled] = diff[filled] / counts[filled]
    return shift[bins]


class SCV(SSD):
    """Sum of conditional variance: SSD against the template remapped by the
    joint intensity histogram, ``I0 -> I0 + E[It - I0 | bin(I0)]``."""

    name = "scv"

    def __init__(self, n_bins=64, intensity_range=(0.0, 256.0), **kwargs):
        super().__init__(**kwargs)
        self.n_bins = n_bins
        self.intensity_range = intensity_range

    def _map(self, I0, Ic):
        return I0 + conditional_shift(I0, Ic, self.n_bins, self.intensity_range), Ic

    def initialize(self, patch=None):
        if patch is None:
            patch = self.init_pix_vals
        if patch is not None and np.std(_as_patch(patch)) < SIGMA_EPS:
            # a flat template puts every pixel in one bin: no information
            raise DegeneratePatchError("template has zero variance")
        return super().initialize(patch)

    initialize_similarity = initialize

    def frozen_similarity(self, I0, It, pa=None):
        self._need_sim("frozen_similarity")
        pa = self.pa if pa is None else pa
        offset = self._st["I0m"] - self.I0
        d = self._candidate(_as_patch(It), pa) - (_as_patch(I0) + offset)
        return -0.5 * float(d @ d)


class RSCV(SCV):
    """Reversed SCV: the candidate is remapped, ``It -> It + E[I0 - It | bin(It)]``."""

    name = "rscv"

    def _map(self, I0, Ic):
        return I0, Ic + conditional_shift(Ic, I0, self.n_bins, self.intensity_range)

    def frozen_similarity(self, I0, It, pa=None):
        self._need_sim("frozen_similarity")
        pa = self.pa if pa is None else pa
        Ic_ref = self._candidate(self.It, self.pa)
        offset = self._st["Icm"] - Ic_ref
        d = (self._candidate(_as_patch(It), pa) + offset) - _as_patch(I0)
        return -0.5 * float(d @ d)


def _centered(I):
    c = I - I.mean()
    norm = float(np.sqrt(c @ c))
    if norm / np.sqrt(len(I)) < SIGMA_EPS:
        raise DegeneratePatchError("patch has zero variance")
    return c, norm


class NCC(AppearanceModel):
    """Normalized cross correlation of zero-mean patches, in ``[-1, 1]``."""

    name = "ncc"

    def _stats(self, I0, Ic):
        a, na = _centered(I0)
        b, nb = _centered(Ic)
        ua = a / na
        ub = b / nb
        return {"ua": ua, "ub": ub, "na": na, "nb": nb, "f": float(ua @ ub),
                "n": len(I0)}

    def _self_stats(self, I):
        a, na = _centered(I)
        ua = a / na
        return {"ua": ua, "ub": ua, "na": na, "nb": na, "f": 1.0, "n": len(I)}

    def _value(self, st):
        return st["f"]

    def _grad0(self, st):
        return (st["ub"] - st["f"] * st["ua"]) / st["na"]

    def _gradc(self, st):
        return (st["ua"] - st["f"] * st["ub"]) / st["nb"]

    @staticmethod
    def _quad(J, u_other, u_self, norm_self, f, n):
        # J^T [-(u v^T + v u^T) + 3 f v v^T - f C] J / |v|^2 with C the centering
        # projection, u the other side's unit vector and v this side's.
        ju = u_other @ J
        jv = u_self @ J
        s = J.sum(axis=0)
        inner = J.T @ J - np.outer(s, s) / n
        out = -(np.outer(ju, jv) + np.outer(jv, ju)) + 3.0 * f * np.outer(jv, jv) - f * inner
        return out / (norm_self * norm_self)

    def _quad0(self, st, J):
        return self._quad(J, st["ub"], st["ua"], st["na"], st["f"], st["n"])

    def _quadc(self, st, J):
        return self._quad(J, st["ua"], st["ub"], st["nb"], st["f"], st["n"])

    def _dissimilarity(self, f, n):
        return 1.0 - f

    def _dist_feature(self, I):
        a, na = _centered(I)
        return a / na


class ZNCC(NCC):
    """SSD between zero-mean, unit-variance patches; equals ``N * (ncc - 1)``."""

    name = "zncc"

    def _stats(self, I0, Ic):
        st = super()._stats(I0, Ic)
        n = st["n"]
        d = np.sqrt(n) * (st["ub"] - st["ua"])
        st["zf"] = -0.5 * float(d @ d)
        return st

    def _self_stats(self, I):
        st = super()._self_stats(I)
        st["zf"] = 0.0
        return st

    def _value(self, st):
        return st["zf"]

    def _grad0(self, st):
        return st["n"] * super()._grad0(st)

    def _gradc(self, st):
        return st["n"] * super()._gradc(st)

    def _quad0(self, st, J):
        return st["n"] * super()._quad0(st, J)

    def _quadc(self, st, J):
        return st["n"] * super()._quadc(st, J)

    def _dissimilarity(self, f, n):
        return -2.0 * f / n


AM_TYPES = {"ssd": SSD, "scv": SCV, "rscv": RSCV, "ncc": NCC, "zncc": ZNCC}
ILM_TYPES = {"none": None, "gb": GainBias}


def make_am(name, ilm="none", **kwargs):
    try:
        cls = AM_TYPES[name.lower()]
    except KeyError:
        raise ValueError(f"unknown appearance model {name!r}; choose from {sorted(AM_TYPES)}")
    if isinstance(ilm, str):
        if ilm not in ILM_TYPES:
            raise ValueError(f"unknown illumination model {ilm!r}")
        ilm = ILM_TYPES[ilm]() if ILM_TYPES[ilm] else None
    return cls(ilm=ilm, **kwargs)
