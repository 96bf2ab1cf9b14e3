"""Relief-group algebra, jets, invariant fields, moving frame, alignment fits."""

import math

import numpy as np
import pytest

from nrdk.errors import ConfigError, DegenerateInputError, FitError, SizeError
from nrdk.invariants import (GbrParams, apply_alignment, d_x, d_x_adj, d_xx,
                             d_xx_adj, d_xy, d_xy_adj, d_y, d_y_adj, d_yy,
                             d_yy_adj, eta, fit_linear_alignment, gbr_apply,
                             gbr_fit, hessian_norm, iota, jet, moving_frame,
                             pixel_grid, pixel_pitch)


def rng():
    return np.random.default_rng(20240818)


def smooth_frame(r, n=33, terms=4):
    """A random band-limited surface; generically curved everywhere."""
    x, y = pixel_grid(n, n)
    z = np.zeros((n, n))
    for _ in range(terms):
        ax, ay = r.uniform(0.5, 3.0, 2)
        px, py = r.uniform(0, 2 * np.pi, 2)
        z += r.uniform(0.3, 1.0) * np.cos(ax * np.pi * x + px) * np.cos(ay * np.pi * y + py)
    return z


def random_group(r):
    return GbrParams(alpha=r.uniform(-2, 2), beta=r.uniform(-2, 2),
                     lam=r.uniform(0.2, 5.0), tau=r.uniform(-10, 10))


# ---------------------------------------------------------------------------
# Coordinates.

def test_pixel_grid_centers():
    x, y = pixel_grid(4, 4)
    assert np.allclose(x[0], [-0.75, -0.25, 0.25, 0.75], atol=0)
    assert np.allclose(y[:, 0], [-0.75, -0.25, 0.25, 0.75], atol=0)
    hx, hy = pixel_pitch(4, 4)
    assert hx == hy == 0.5


def test_pixel_grid_rectangular():
    x, y = pixel_grid(8, 2)
    assert x.shape == y.shape == (2, 8)
    assert x[0, 1] - x[0, 0] == pytest.approx(0.25, abs=0)
    assert y[1, 0] - y[0, 0] == pytest.approx(1.0, abs=0)


# ---------------------------------------------------------------------------
# Group algebra.

def test_group_compose_then_apply_matches_sequential():
    r = rng()
    z = smooth_frame(r)
    for _ in range(10):
        g1, g2 = random_group(r), random_group(r)
        seq = gbr_apply(gbr_apply(z, g1), g2)
        joint = gbr_apply(z, g2.compose(g1))
        assert np.abs(seq - joint).max() <= 1e-12 * max(1.0, np.abs(seq).max())


def test_group_inverse_round_trip():
    r = rng()
    z = smooth_frame(r)
    for _ in range(10):
        g = random_group(r)
        back = gbr_apply(gbr_apply(z, g), g.inverse())
        assert np.abs(back - z).max() <= 1e-12
        ident = g.compose(g.inverse())
        assert ident.as_tuple() == pytest.approx((0, 0, 1, 0), abs=1e-12)


def test_group_rejects_nonpositive_stretch_and_nonfinite():
    with pytest.raises(ConfigError):
        GbrParams(0.0, 0.0, 0.0, 0.0)
    with pytest.raises(ConfigError):
        GbrParams(0.0, 0.0, -1.0, 0.0)
    with pytest.raises(ConfigError):
        GbrParams(float("nan"), 0.0, 1.0, 0.0)


def test_gbr_apply_requires_2d():
    with pytest.raises(SizeError):
        gbr_apply(np.zeros(5), GbrParams(0, 0, 1, 0))


# ---------------------------------------------------------------------------
# Difference stencils: truncation oracles and adjointness.

def test_second_differences_exact_on_cubics():
    # the h^2 truncation term of the second difference carries z'''' = 0
    n = 17
    x, y = pixel_grid(n, n)
    j = jet(x**3 + y**3)
    inner = j.valid
    assert np.abs(j.zxx - 6 * x)[inner].max() <= 1e-11
    assert np.abs(j.zyy - 6 * y)[inner].max() <= 1e-11
    j2 = jet(x**2 * y + x * y**2)
    assert np.abs(j2.zxy - (2 * x + 2 * y))[j2.valid].max() <= 1e-11


def test_first_difference_error_is_exactly_h_squared_on_cubic():
    # (f(x+h) - f(x-h)) / 2h on x^3 equals 3x^2 + h^2: the error term exactly
    n = 17
    x, _ = pixel_grid(n, n)
    j = jet(x**3)
    err = (j.zx - 3 * x**2)[j.valid]
    assert np.abs(err - j.hx**2).max() <= 1e-12


def test_first_difference_error_closed_form_on_quintic():
    # the Taylor series terminates: error on x^5 is exactly 10 x^2 h^2 + h^4
    for n in (16, 32):
        x, _ = pixel_grid(n, n)
        j = jet(x**5)
        err = (j.zx - 5 * x**4)[j.valid]
        want = (10 * x**2 * j.hx**2 + j.hx**4)[j.valid]
        assert np.abs(err - want).max() <= 1e-12


def test_stencil_adjointness():
    r = rng()
    hx, hy = 0.17, 0.23
    pairs = [
        (lambda a: d_x(a, hx), lambda a: d_x_adj(a, hx)),
        (lambda a: d_y(a, hy), lambda a: d_y_adj(a, hy)),
        (lambda a: d_xx(a, hx), lambda a: d_xx_adj(a, hx)),
        (lambda a: d_yy(a, hy), lambda a: d_yy_adj(a, hy)),
        (lambda a: d_xy(a, hx, hy), lambda a: d_xy_adj(a, hx, hy)),
    ]
    for fwd, adj in pairs:
        for _ in range(5):
            u = r.normal(size=(12, 9))
            v = r.normal(size=(12, 9))
            lhs = float(np.sum(fwd(u) * v))
            rhs = float(np.sum(u * adj(v)))
            assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def test_jet_input_validation():
    with pytest.raises(SizeError):
        jet(np.zeros(9))
    with pytest.raises(SizeError):
        jet(np.zeros((2, 5)))
    j = jet(np.zeros((3, 3)))
    assert j.valid.sum() == 1  # single interior pixel


# ---------------------------------------------------------------------------
# Invariant fields: closed forms on exact quadrics.

def test_iota_closed_form_bowl():
    # z = (x^2 + y^2)/2: Hessian = I, norm = sqrt(2)
    n = 21
    x, y = pixel_grid(n, n)
    f = iota(jet((x**2 + y**2) / 2))
    s = 1 / math.sqrt(2)
    assert f.mask.sum() == (n - 2) ** 2
    assert np.abs(f.values[f.mask] - np.array([s, 0.0, s])).max() <= 1e-12


def test_iota_closed_form_saddle():
    # z = x y: Hessian = [[0, 1], [1, 0]], norm = sqrt(2)
    n = 21
    x, y = pixel_grid(n, n)
    f = iota(jet(x * y))
    s = 1 / math.sqrt(2)
    assert np.abs(f.values[f.mask] - np.array([0.0, s, 0.0])).max() <= 1e-12


def test_iota_closed_form_cylinder():
    # z = x^2 / 2: Hessian = diag(1, 0), norm = 1
    n = 21
    x, _ = pixel_grid(n, n)
    f = iota(jet(x**2 / 2))
    assert np.abs(f.values[f.mask] - np.array([1.0, 0.0, 0.0])).max() <= 1e-12


def test_eta_closed_form_bowl():
    # gradient (x, y) joins the Hessian channels, all divided by sqrt(2)
    n = 21
    x, y = pixel_grid(n, n)
    f = eta(jet((x**2 + y**2) / 2))
    s = 1 / math.sqrt(2)
    want = np.stack([x * s, y * s, np.full_like(x, s), np.zeros_like(x),
                     np.zeros_like(x), np.full_like(x, s)], axis=2)
    assert np.abs(f.values - want)[f.mask].max() <= 1e-12


def test_eta_duplicates_mixed_entry():
    r = rng()
    f = eta(jet(smooth_frame(r)))
    assert np.array_equal(f.values[..., 3], f.values[..., 4])


def test_planar_frame_fully_masked_no_nan():
    # an exactly flat frame has zero curvature everywhere; the relative
    # threshold must mask it all out rather than divide zero by zero
    n = 17
    fi, fe = iota(jet(np.zeros((n, n)))), eta(jet(np.zeros((n, n))))
    assert not fi.mask.any() and not fe.mask.any()
    assert np.isfinite(fi.values).all() and np.isfinite(fe.values).all()
    # a tilted plane keeps roundoff-level curvature; values must stay finite
    x, y = pixel_grid(n, n)
    ft = iota(jet(0.3 * x - 1.2 * y + 0.5))
    assert np.isfinite(ft.values).all()


def test_iota_invariant_under_full_group():
    r = rng()
    worst = 0.0
    for _ in range(20):
        z = smooth_frame(r)
        f0 = iota(jet(z))
        g = random_group(r)
        f1 = iota(jet(gbr_apply(z, g)))
        both = f0.mask & f1.mask
        assert both.mean() > 0.5
        worst = max(worst, np.abs(f1.values - f0.values)[both].max())
    assert worst <= 1e-10


def test_eta_invariant_under_stretch_offset_not_shear():
    r = rng()
    z = smooth_frame(r)
    f0 = eta(jet(z))
    f1 = eta(jet(gbr_apply(z, GbrParams(0.0, 0.0, 3.7, -2.2))))
    both = f0.mask & f1.mask
    assert np.abs(f1.values - f0.values)[both].max() <= 1e-10
    f2 = eta(jet(gbr_apply(z, GbrParams(1.5, 0.0, 1.0, 0.0))))
    # the shear moves the gradient channels but leaves the Hessian ones
    dev = np.abs(f2.values - f0.values)
    assert dev[..., 0][both].max() > 1e-3
    assert dev[..., 2:][both].max() <= 1e-10


# ---------------------------------------------------------------------------
# Moving frame.

def test_moving_frame_normalizes_jet():
    r = rng()
    worst = 0.0
    for _ in range(20):
        z = smooth_frame(r)
        row, col = r.integers(2, z.shape[0] - 2, 2)
        g = moving_frame(jet(z), (row, col))
        jn = jet(gbr_apply(z, g))
        worst = max(worst, abs(jn.z[row, col]), abs(jn.zx[row, col]),
                    abs(jn.zy[row, col]), abs(hessian_norm(jn)[row, col] - 1.0))
    assert worst <= 1e-9


def test_moving_frame_element_is_explicit_jet_function():
    # alpha = -z_x / F, beta = -z_y / F, lambda = 1 / F at the pixel
    r = rng()
    z = smooth_frame(r)
    j = jet(z)
    g = moving_frame(j, (7, 9))
    f = hessian_norm(j)[7, 9]
    assert g.alpha == pytest.approx(-j.zx[7, 9] / f, abs=1e-15)
    assert g.beta == pytest.approx(-j.zy[7, 9] / f, abs=1e-15)
    assert g.lam == pytest.approx(1 / f, abs=1e-15)


def test_moving_frame_rejects_degenerate_and_outside():
    n = 17
    x, y = pixel_grid(n, n)
    with pytest.raises(DegenerateInputError):
        moving_frame(jet(0.5 * x + 0.25 * y), (8, 8))
    r = rng()
    with pytest.raises(SizeError):
        moving_frame(jet(smooth_frame(r)), (99, 0))
    with pytest.raises(DegenerateInputError):
        moving_frame(jet(smooth_frame(r)), (0, 0))  # border pixel


# ---------------------------------------------------------------------------
# Alignment fits.

def test_gbr_fit_recovers_exact_transform():
    r = rng()
    for _ in range(10):
        z = smooth_frame(r)
        g = random_group(r)
        got = gbr_fit(z, gbr_apply(z, g))
        assert got.as_tuple() == pytest.approx(g.as_tuple(), abs=1e-9)


def test_trsc_fit_recovers_stretch_offset():
    r = rng()
    z = smooth_frame(r)
    got = gbr_fit(z, 2.5 * z + 0.75, mode="trsc")
    assert got.as_tuple() == pytest.approx((0.0, 0.0, 2.5, 0.75), abs=1e-10)


def test_fit_respects_mask():
    r = rng()
    z = smooth_frame(r)
    g = random_group(r)
    dst = gbr_apply(z, g)
    dst[0, :] = 1e6  # corrupt one row, then exclude it
    mask = np.ones_like(z, dtype=bool)
    mask[0, :] = False
    got = gbr_fit(z, dst, mask=mask)
    assert got.as_tuple() == pytest.approx(g.as_tuple(), abs=1e-9)


def test_fit_stack_matches_pooled_frames():
    r = rng()
    stack = np.stack([smooth_frame(r) for _ in range(3)])
    g = random_group(r)
    dst = np.stack([gbr_apply(f, g) for f in stack])
    coef = fit_linear_alignment(stack, dst)
    assert coef == pytest.approx(g.as_tuple(), abs=1e-9)
    # one joint transform, not per-frame: aligned stack matches everywhere
    assert np.abs(apply_alignment(stack, coef) - dst).max() <= 1e-9


def test_apply_alignment_stack_equals_per_frame_loop():
    r = rng()
    stack = np.stack([smooth_frame(r) for _ in range(3)])
    coef = (0.3, -0.7, 1.9, 0.2)
    whole = apply_alignment(stack, coef)
    for t in range(3):
        assert np.array_equal(whole[t], apply_alignment(stack[t], coef))


def test_rank_deficient_fit_names_dependent_column():
    z = np.zeros((8, 8))
    with pytest.raises(FitError, match="'src'"):
        gbr_fit(z, np.ones((8, 8)))


def test_rank_deficient_fit_min_norm_by_default():
    coef = fit_linear_alignment(np.zeros((8, 8)), np.ones((8, 8)))
    assert np.isfinite(coef).all()
    # minimum-norm puts the constant into the offset, not the zero source
    assert coef[3] == pytest.approx(1.0, abs=1e-12)
    assert coef[2] == pytest.approx(0.0, abs=1e-12)


def test_fit_rejects_stretch_leaving_group():
    r = rng()
    z = smooth_frame(r)
    with pytest.raises(FitError, match="lambda"):
        gbr_fit(z, -z)


def test_fit_input_validation():
    z = np.zeros((8, 8))
    with pytest.raises(SizeError):
        fit_linear_alignment(z, np.zeros((4, 4)))
    with pytest.raises(SizeError):
        fit_linear_alignment(z, z, mask=np.ones((3, 3), dtype=bool))
    with pytest.raises(ConfigError):
        fit_linear_alignment(z, z, mode="affine")
    few = np.ones_like(z, dtype=bool)
    few[:] = False
    few[0, 0] = True
    with pytest.raises(FitError):
        fit_linear_alignment(z, z, mask=few)
    with pytest.raises(FitError):
        gbr_fit(z[:2, :2], z[:2, :2])  # under 4 pixels
