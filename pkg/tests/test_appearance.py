import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import Chain, fd_gradient, fd_hessian, rel_err, warp_pts
from regtrack import CallOrderError, DegeneratePatchError, make_am
from regtrack.appearance import AM_TYPES, GainBias, conditional_shift, dist, ilm_apply, ilm_derivatives
from regtrack.image import sample_patch

ALL_AMS = sorted(AM_TYPES)


def am_with(name, I0, It, **kw):
    am = make_am(name, **kw)
    am.initialize(np.asarray(I0, float))
    am.update_similarity(np.asarray(It, float))
    am.update_init_grad()
    am.update_curr_grad()
    return am


def random_patch(rng, n):
    return rng.uniform(20, 230, n)


# -- values ---------------------------------------------------------------------

def test_initialize_self_similarity():
    rng = np.random.default_rng(0)
    p = random_patch(rng, 16)
    assert make_am("ssd").initialize(p) == 0.0
    assert make_am("ncc").initialize(p) == pytest.approx(1.0)
    assert make_am("zncc").initialize(p) == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("name", ["ncc", "zncc", "scv", "rscv"])
def test_constant_template_is_degenerate(name):
    with pytest.raises(DegeneratePatchError):
        make_am(name).initialize(np.full(9, 17.0))


def test_similarity_examples():
    assert am_with("ssd", [0, 0], [1, 1]).f == -1.0
    rng = np.random.default_rng(1)
    I0 = random_patch(rng, 10)
    assert am_with("ncc", I0, 3 * I0 + 7).f == pytest.approx(1.0)
    # bins of width 4: [0, 0, 4, 4] -> bins [0, 0, 1, 1]
    assert am_with("scv", [0, 0, 4, 4], [5, 5, 7, 7]).f == 0.0


def test_conditional_shift_is_per_bin_mean_difference():
    src = np.array([0.0, 1.0, 10.0])
    shift = conditional_shift(src, np.array([3.0, 5.0, 9.0]))
    # 0 and 1 share a bin: mean target 4, mean source 0.5
    assert np.allclose(shift, [3.5, 3.5, -1.0])
    assert np.allclose(src + shift, [3.5, 4.5, 9.0])
    assert not np.any(conditional_shift(src, src))


def test_zncc_is_scaled_ncc():
    rng = np.random.default_rng(2)
    for _ in range(10):
        a, b = random_patch(rng, 25), random_patch(rng, 25)
        ncc = make_am("ncc").similarity(a, b)
        assert make_am("zncc").similarity(a, b) == pytest.approx(25 * (ncc - 1))


def test_zncc_ncc_order_equivalence():
    rng = np.random.default_rng(3)
    I0 = random_patch(rng, 30)
    cands = [I0 + rng.normal(0, s, 30) for s in rng.uniform(1, 60, 40)]
    ncc = [make_am("ncc").similarity(I0, c) for c in cands]
    zncc = [make_am("zncc").similarity(I0, c) for c in cands]
    assert np.argmax(ncc) == np.argmax(zncc)
    assert np.array_equal(np.argsort(ncc), np.argsort(zncc))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(4, 40))
def test_scv_invariant_to_monotone_remap(seed, n):
    rng = np.random.default_rng(seed)
    # one template intensity per bin so the remap is injective on bins
    levels = rng.choice(64, size=min(n, 64), replace=False) * 4.0
    I0 = rng.choice(levels, n)
    I0[:2] = levels[:2]
    remap = np.cumsum(rng.uniform(0.5, 8.0, 256))
    It = remap[I0.astype(int)]
    assert make_am("scv").similarity(I0, It) == pytest.approx(0.0, abs=1e-18)


# -- gradients --------------------------------------------------------------------

def test_ssd_gradient_examples():
    am = am_with("ssd", [0, 0], [1, 1])
    assert np.array_equal(am.curr_grad, [-1, -1])
    am = am_with("ssd", [3, 4], [3, 4])
    assert not np.any(am.curr_grad) and not np.any(am.init_grad)


@pytest.mark.parametrize("name", ALL_AMS)
def test_patch_gradients_match_fd(name):
    rng = np.random.default_rng(abs(hash(name)) % 1000)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(8, 65))
        I0, It = random_patch(rng, n), random_patch(rng, n)
        am = am_with(name, I0, It)
        h = np.full(n, 1e-3)
        g0 = fd_gradient(lambda v: am.frozen_similarity(v, It), I0, h)
        gc = fd_gradient(lambda v: am.frozen_similarity(I0, v), It, h)
        # a gradient below 1e-6 intensity units is zero up to roundoff
        worst = max(worst, rel_err(am.init_grad, g0, 1e-6), rel_err(am.curr_grad, gc, 1e-6))
    assert worst < 1e-4


def test_ncc_patch_gradient_fd_tight():
    rng = np.random.default_rng(4)
    I0, It = random_patch(rng, 8), random_patch(rng, 8)
    am = am_with("ncc", I0, It)
    gc = fd_gradient(lambda v: am.similarity(I0, v), It, np.full(8, 1e-3))
    assert rel_err(am.curr_grad, gc) < 1e-5


def test_scv_curr_gradient_matches_unfrozen_function():
    # the mapped template depends on It, but its first-order effect cancels
    rng = np.random.default_rng(5)
    I0, It = random_patch(rng, 40), random_patch(rng, 40)
    am = am_with("scv", I0, It)
    gc = fd_gradient(lambda v: am.similarity(I0, v), It, np.full(40, 1e-4))
    assert rel_err(am.curr_grad, gc) < 1e-6


@pytest.mark.parametrize("name", ["scv", "rscv"])
def test_scv_family_gradients_match_unfrozen_function(name):
    # the bin-mean shifts absorb within-bin constants, so both gradients are
    # exact away from bin edges
    rng = np.random.default_rng(6)
    I0, It = random_patch(rng, 40), random_patch(rng, 40)
    am = am_with(name, I0, It)
    g0 = fd_gradient(lambda v: am.similarity(v, It), I0, np.full(40, 1e-5))
    gc = fd_gradient(lambda v: am.similarity(I0, v), It, np.full(40, 1e-5))
    assert rel_err(am.init_grad, g0) < 1e-6
    assert rel_err(am.curr_grad, gc) < 1e-6


# -- Jacobians and Hessians ---------------------------------------------------------

def test_jacobian_examples():
    am = am_with("ssd", [0, 0], [1, 2])
    assert np.allclose(am.init_grad, [1, 2])
    assert np.array_equal(am.cmpt_init_jacobian(np.eye(2)), [1, 2])
    assert not np.any(am.cmpt_curr_jacobian(np.zeros((2, 3))))
    with pytest.raises(ValueError):
        am.cmpt_curr_jacobian(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        am.cmpt_difference_of_jacobians(np.zeros((2, 2)), np.zeros((2, 3)))


def test_difference_of_jacobians():
    rng = np.random.default_rng(6)
    I = random_patch(rng, 12)
    J = rng.normal(size=(12, 4))
    assert not np.any(am_with("ssd", I, I).cmpt_difference_of_jacobians(J, J))
    am = am_with("ssd", I, random_patch(rng, 12))
    J0, Jt = rng.normal(size=(12, 4)), rng.normal(size=(12, 4))
    assert np.array_equal(am.cmpt_difference_of_jacobians(J0, Jt),
                          am.cmpt_curr_jacobian(Jt) - am.cmpt_init_jacobian(J0))


def test_ssd_self_hessian_example_and_orders():
    rng = np.random.default_rng(7)
    am = am_with("ssd", [1.0, 5.0], [2.0, 3.0])
    J = np.array([[1.0, 0.0], [0.0, 2.0]])
    assert np.array_equal(am.cmpt_self_hessian(J), -np.array([[1, 0], [0, 4]]))
    I = random_patch(rng, 20)
    am = am_with("ssd", I, random_patch(rng, 20))
    J, d2 = rng.normal(size=(20, 5)), rng.normal(size=(20, 5, 5))
    for which in ("init", "curr"):
        assert np.array_equal(am.cmpt_self_hessian(J, which=which),
                              am.cmpt_self_hessian(J, d2, which=which))


def test_hessian_identities():
    rng = np.random.default_rng(8)
    I = random_patch(rng, 15)
    J, d2 = rng.normal(size=(15, 3)), rng.normal(size=(15, 3, 3))
    am = am_with("ssd", I, I)
    assert np.allclose(am.cmpt_curr_hessian(J, d2), am.cmpt_self_hessian(J, d2))
    for name in ALL_AMS:
        am = am_with(name, I, random_patch(rng, 15))
        J0 = rng.normal(size=(15, 3))
        H = am.cmpt_sum_of_hessians(J0, J, None, d2)
        assert np.array_equal(H, am.cmpt_init_hessian(J0) + am.cmpt_curr_hessian(J, d2))
        for M in (H, am.cmpt_self_hessian(J, d2), am.cmpt_init_hessian(J0, d2)):
            assert np.abs(M - M.T).max() <= 1e-10


def test_flattened_pixel_hessian_layout():
    rng = np.random.default_rng(9)
    am = am_with("ncc", random_patch(rng, 6), random_patch(rng, 6))
    J, d2 = rng.normal(size=(6, 2)), rng.normal(size=(6, 2, 2))
    flat = d2.reshape(6, 4).T
    assert np.allclose(am.cmpt_curr_hessian(J, d2), am.cmpt_curr_hessian(J, flat))
    with pytest.raises(ValueError):
        am.cmpt_curr_hessian(J, np.zeros((6, 3, 3)))


@pytest.mark.parametrize("name", ALL_AMS)
def test_chain_derivatives_homography(name):
    for seed in range(3):
        c = Chain(name, "homography", seed)
        for w in ("fa", "fc", "ic"):
            assert rel_err(getattr(c, "jac_" + w)(), c.fd_jac(w)) < 1e-4
            assert rel_err(getattr(c, "hess_" + w)(), c.fd_hess(w)) < 1e-3
        assert rel_err(c.self_hess_curr(), c.fd_hess("self_curr")) < 1e-3
        assert rel_err(c.self_hess_init(), c.fd_hess("self_init")) < 1e-3


def test_second_order_self_term_vanishes():
    # df(I, I)/dI = 0 for every model, so both overloads coincide
    for name in ALL_AMS:
        c = Chain(name, "affine", 11)
        assert np.allclose(c.self_hess_curr(True), c.self_hess_curr(False), rtol=1e-12, atol=1e-12)


# -- illumination model -----------------------------------------------------------------

def test_gain_bias_examples():
    I = np.array([2.0, 4.0])
    assert np.array_equal(ilm_apply(I, [0, 0]), I)
    assert np.array_equal(ilm_apply(I, [1, 3]), [7, 11])
    d = ilm_derivatives(I, [1, 3])
    assert np.array_equal(d.dg_dpa, [[2, 1], [4, 1]])
    assert d.dg_dI == 2.0
    assert not np.any(d.d2g_dpa2)
    assert np.array_equal(GainBias().identity(), [0, 0])


@pytest.mark.parametrize("name", ["ssd", "ncc", "zncc"])
def test_joint_ilm_derivatives_match_fd(name):
    c = Chain(name, "homography", 21, ilm="gb")
    am, ssm = c.am, c.ssm
    pa = np.array([0.08, -6.0])
    am.set_ilm_params(pa)
    am.update_similarity()
    am.update_curr_grad()
    S = ssm.n_params

    def g(q):
        return am.similarity(c.I0, c.patch1(c.M @ c.S(q[:S])), pa=pa + q[S:])

    h = np.concatenate([c.h1, [1.0 / 255.0, 1.0]])
    x = np.zeros(S + 2)
    J = am.cmpt_curr_jacobian(ssm.cmpt_warped_pix_jacobian(c.grad))
    assert rel_err(J, fd_gradient(g, x, 1e-3 * h)) < 1e-4
    H = am.cmpt_curr_hessian(ssm.cmpt_warped_pix_jacobian(c.grad),
                             ssm.cmpt_warped_pix_hessian(c.grad, c.hess))
    assert rel_err(H, fd_hessian(g, x, 1e-2 * h)) < 1e-3


def test_ilm_self_hessian_matches_fd():
    c = Chain("ssd", "affine", 22, ilm="gb")
    am, ssm = c.am, c.ssm
    pa = np.array([-0.05, 3.0])
    am.set_ilm_params(pa)
    am.update_similarity()
    am.update_curr_grad()
    S = ssm.n_params
    Ic = ilm_apply(c.It, pa)

    def g(q):
        return make_am("ssd").similarity(Ic, ilm_apply(c.patch1(c.M @ c.S(q[:S])), pa + q[S:]))

    h = np.concatenate([c.h1, [1.0 / 255.0, 1.0]])
    H = am.cmpt_self_hessian(ssm.cmpt_warped_pix_jacobian(c.grad),
                             ssm.cmpt_warped_pix_hessian(c.grad, c.hess))
    assert rel_err(H, fd_hessian(g, np.zeros(S + 2), 1e-2 * h)) < 1e-3


# -- distance features and likelihood -------------------------------------------------

def test_dist_examples():
    v = np.array([1.0, -2.0, 3.0])
    assert dist(v, v) == 0.0
    assert dist([0, 0], [1, 1]) == 2.0
    with pytest.raises(ValueError):
        dist([0, 0], [1, 1, 1])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=20), st.integers(0, 1000))
def test_dist_symmetric_nonnegative(a, seed):
    a = np.array(a)
    b = np.random.default_rng(seed).normal(size=len(a))
    assert dist(a, b) == dist(b, a) >= 0


@pytest.mark.parametrize("name", ["ncc", "zncc"])
def test_feature_argmin_matches_similarity_argmax(name):
    rng = np.random.default_rng(10)
    I0 = random_patch(rng, 36)
    am = make_am(name)
    am.initialize(I0)
    f0 = am.init_dist_feat()
    cands = [I0 * rng.uniform(0.5, 2) + rng.normal(0, s, 36) for s in rng.uniform(2, 80, 60)]
    dists = [dist(f0, am.update_dist_feat(c)) for c in cands]
    sims = [am.similarity(I0, c) for c in cands]
    assert np.argmin(dists) == np.argmax(sims)


def test_ssd_features_are_raw_patches():
    am = make_am("ssd")
    am.initialize(np.array([1.0, 2.0, 4.0]))
    assert np.array_equal(am.init_dist_feat(), [1, 2, 4])
    assert np.array_equal(am.update_dist_feat(np.array([0.0, 0, 0])), [0, 0, 0])
    assert np.array_equal(am.get_dist_feat(), [0, 0, 0])


def test_likelihood():
    am = am_with("ssd", [0.0, 0.0], [1.0, 1.0])
    assert am.get_likelihood() == pytest.approx(6.7379e-3, rel=1e-4)
    assert am.get_log_likelihood() == pytest.approx(-5.0)
    rng = np.random.default_rng(12)
    for name in ALL_AMS:
        I0 = random_patch(rng, 20)
        am = am_with(name, I0, I0)
        assert am.get_likelihood() == pytest.approx(1.0)
        near = am_with(name, I0, I0 + rng.normal(0, 2, 20))
        far = am_with(name, I0, I0 + rng.normal(0, 40, 20))
        assert near.dissimilarity() < far.dissimilarity()
        # exp(-alpha D) may underflow for the far patch; order on the log scale
        assert 0.0 >= near.get_log_likelihood() > far.get_log_likelihood()
        assert 1.0 >= near.get_likelihood() >= far.get_likelihood() >= 0.0


def test_likelihood_alpha_configurable():
    am = am_with("ncc", [1.0, 2.0, 3.0], [1.0, 3.0, 2.0], likelihood_alpha=2.0)
    assert am.get_likelihood() == pytest.approx(np.exp(-2.0 * (1 - am.f)))


# -- call order ---------------------------------------------------------------------------

def test_call_order_errors():
    am = make_am("ssd")
    with pytest.raises(CallOrderError):
        am.update_similarity(np.ones(3))
    am.initialize(np.array([1.0, 2.0, 3.0]))
    am.set_init_image(np.arange(25.0).reshape(5, 5))
    am.update_pix_vals(np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]))
    for call in (am.update_init_grad, am.update_curr_grad, am.dissimilarity):
        with pytest.raises(CallOrderError):
            call()
    with pytest.raises(CallOrderError):
        am.cmpt_curr_hessian(np.eye(3))
    am.update_similarity()
    with pytest.raises(CallOrderError):
        am.cmpt_curr_jacobian(np.eye(3))
    am.update_curr_grad()
    am.cmpt_curr_jacobian(np.eye(3))


OPS = ["sim", "init_grad", "curr_grad", "jac0", "jact", "hess0", "hesst2", "self", "ilm"]


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(ALL_AMS), st.lists(st.sampled_from(OPS), min_size=1, max_size=25),
       st.integers(0, 2 ** 31))
def test_random_call_sequences_match_recomputation(name, ops, seed):
    rng = np.random.default_rng(seed)
    n, s = 10, 3
    I0 = random_patch(rng, n)
    J, d2 = rng.normal(size=(n, s)), rng.normal(size=(n, s, s))
    am = make_am(name, ilm="gb" if name in ("ssd", "ncc") else "none")
    am.initialize(I0)
    It = I0.copy()
    flags = {"sim": True, "g0": True, "gc": True}
    for op in ops:
        if op == "sim":
            It = random_patch(rng, n)
            am.update_similarity(It)
            flags = {"sim": True, "g0": False, "gc": False}
            continue
        if op == "ilm":
            if am.ilm is not None:
                am.set_ilm_params(rng.normal(0, [0.1, 3.0]))
                flags = {"sim": False, "g0": False, "gc": False}
            continue
        ref = make_am(name, ilm="gb" if am.ilm is not None else "none")
        ref.initialize(I0)
        ref.set_ilm_params(am.pa)
        ref.update_similarity(It)
        ref.update_init_grad()
        ref.update_curr_grad()
        need = {"init_grad": "sim", "curr_grad": "sim", "jac0": "g0", "jact": "gc",
                "hess0": "sim", "hesst2": "gc", "self": "sim"}[op]
        call = {"init_grad": lambda a: a.update_init_grad(),
                "curr_grad": lambda a: a.update_curr_grad(),
                "jac0": lambda a: a.cmpt_init_jacobian(J),
                "jact": lambda a: a.cmpt_curr_jacobian(J),
                "hess0": lambda a: a.cmpt_init_hessian(J),
                "hesst2": lambda a: a.cmpt_curr_hessian(J, d2),
                "self": lambda a: a.cmpt_self_hessian(J, d2)}[op]
        if not flags[need] or (need == "gc" and not flags["sim"]):
            with pytest.raises(CallOrderError):
                call(am)
            continue
        assert np.allclose(call(am), call(ref), rtol=1e-12, atol=1e-9)
        if op == "init_grad":
            flags["g0"] = True
        if op == "curr_grad":
            flags["gc"] = True


def test_template_is_frozen():
    am = make_am("ssd")
    am.initialize(np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        am.I0[0] = 5.0


def test_patch_sampling_through_am():
    am = make_am("ssd")
    img = np.arange(36.0).reshape(6, 6)
    am.set_init_image(img)
    pts = np.array([[1.5, 2.0], [3.0, 4.5]])
    assert np.array_equal(am.initialize_pix_vals(pts), sample_patch(img, pts))
    assert np.allclose(warp_pts(np.eye(3), pts), pts)
