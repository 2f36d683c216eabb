import numpy as np
import pytest

from bandfuse.attention import (
    AttentionNetConfig,
    AttentionTensor,
    DualAttention,
    apply_mask,
    fuse_mask_values,
    fuse_masks,
)
from bandfuse.nn.layers import Sequential, finite_diff_check
from bandfuse.rng import Xorshift64Star


def _dual(bands=3, pixels=4, seed=0, **kw):
    cfg = AttentionNetConfig(seed=seed, **kw)
    return DualAttention(bands, pixels, cfg, Xorshift64Star(seed))


def _zero_params(net):
    for p in net.params():
        p.value[...] = 0.0


def test_tensor_validation():
    AttentionTensor(np.full((1, 2, 2, 3), 0.5), "hsi")
    with pytest.raises(ValueError):
        AttentionTensor(np.full((1, 2, 2, 3), 1.5), "hsi")
    with pytest.raises(ValueError):
        AttentionTensor(np.full((2, 2, 3), 0.5), "hsi")
    with pytest.raises(ValueError):
        AttentionTensor(np.full((1, 2, 2, 3), 0.5), "lidar")
    with pytest.raises(ValueError):
        AttentionTensor(np.full((1, 2, 2, 1), 0.5), "elevation")


def test_config_validation():
    with pytest.raises(ValueError):
        AttentionNetConfig(fusion="concat")
    with pytest.raises(ValueError):
        AttentionNetConfig(hsi_hidden=(4, 4))


def test_hsi_zero_params_give_half():
    net = _dual()
    _zero_params(net)
    out = net.forward_hsi(np.random.default_rng(0).random((2, 4, 3)))
    np.testing.assert_array_equal(out, 0.5)


def test_hsi_output_in_open_unit_interval():
    net = _dual(seed=3)
    out = net.forward_hsi(np.random.default_rng(1).random((5, 4, 3)))
    assert np.all((out > 0.0) & (out < 1.0))


def test_hsi_identical_pixels_identical_rows():
    net = _dual(seed=7)
    spectrum = np.random.default_rng(2).random(3)
    spectra = np.tile(spectrum, (1, 4, 1))
    out = net.forward_hsi(spectra)
    for pixel in range(1, 4):
        np.testing.assert_array_equal(out[0, pixel], out[0, 0])


def test_lidar_zero_params_give_half():
    net = _dual()
    _zero_params(net)
    out = net.forward_lidar(np.random.default_rng(0).random((3, 4)))
    np.testing.assert_array_equal(out, 0.5)


def test_lidar_sees_whole_patch():
    net = _dual(seed=11)
    patch = np.array([[0.1, 0.9, 0.3, 0.7]])
    base = net.forward_lidar(patch)
    permuted = net.forward_lidar(patch[:, ::-1].copy())
    assert not np.array_equal(base, permuted)


def test_fuse_examples():
    m = np.full((1, 4, 3), 0.8)
    ones = np.ones((1, 4))
    zeros = np.zeros((1, 4))
    np.testing.assert_array_equal(fuse_mask_values(m, ones), m)
    np.testing.assert_array_equal(fuse_mask_values(m, zeros), 0.0)
    np.testing.assert_allclose(
        fuse_mask_values(np.array([[[0.8]]]), np.array([[0.5]])), [[[0.4]]])


def test_fuse_add_mode_is_mean():
    np.testing.assert_allclose(
        fuse_mask_values(np.array([[[0.8]]]), np.array([[0.4]]), "add"), [[[0.6]]])


def test_fused_bounded_by_factors():
    rng = np.random.default_rng(3)
    m_hsi = rng.random((4, 9, 5))
    m_lid = rng.random((4, 9))
    fused = fuse_mask_values(m_hsi, m_lid)
    assert np.all(fused <= m_hsi + 1e-15)
    assert np.all(fused <= m_lid[:, :, None] + 1e-15)


def test_fusion_monotone_in_lidar():
    rng = np.random.default_rng(4)
    m_hsi = rng.random((2, 4, 3))
    m_lid = rng.random((2, 4))
    bumped = np.minimum(m_lid + 0.1, 1.0)
    assert np.all(fuse_mask_values(m_hsi, bumped) >= fuse_mask_values(m_hsi, m_lid))


def test_fuse_masks_tensor_wrapper():
    m_hsi = AttentionTensor(np.full((1, 2, 2, 3), 0.8), "hsi")
    m_lid = AttentionTensor(np.full((1, 2, 2, 1), 0.5), "lidar")
    fused = fuse_masks(m_hsi, m_lid)
    assert fused.kind == "fused"
    np.testing.assert_allclose(fused.values, 0.4)
    with pytest.raises(ValueError):
        fuse_masks(m_lid, m_hsi)


def test_apply_mask_examples():
    x = np.full((1, 2, 2, 3), 0.5)
    ones = AttentionTensor(np.ones((1, 2, 2, 3)), "fused")
    zeros = AttentionTensor(np.zeros((1, 2, 2, 3)), "fused")
    np.testing.assert_array_equal(apply_mask(x, ones), x)
    np.testing.assert_array_equal(apply_mask(x, zeros), 0.0)
    m = AttentionTensor(np.full((1, 2, 2, 3), 0.4), "fused")
    np.testing.assert_allclose(apply_mask(x, m), 0.2)


def test_hsi_branch_gradient():
    net = _dual(bands=3, pixels=2, seed=5)
    frag = Sequential(net.hsi_net.layers)
    x = np.random.default_rng(6).random((4, 3))
    assert finite_diff_check(frag, x) < 1e-6


def test_lidar_branch_gradient():
    net = _dual(bands=2, pixels=4, seed=8)
    frag = Sequential(net.lidar_net.layers)
    x = np.random.default_rng(7).random((3, 4))
    assert finite_diff_check(frag, x) < 1e-6


def test_masks_deterministic_across_instances():
    spectra = np.random.default_rng(9).random((2, 4, 3))
    a = _dual(seed=21).forward_hsi(spectra)
    b = _dual(seed=21).forward_hsi(spectra)
    np.testing.assert_array_equal(a, b)


def test_shape_mismatch_rejected():
    net = _dual()
    with pytest.raises(ValueError):
        net.forward_hsi(np.zeros((1, 4, 5)))
    with pytest.raises(ValueError):
        net.forward_lidar(np.zeros((1, 9)))
