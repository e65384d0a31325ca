import numpy as np
import pytest

from oracles import all_signed_orientations
from wmhkit.ensemble import (
    EnsembleSpec,
    binarize,
    predict_ensemble,
    tiled_forward,
    wmh_volume_ml,
)
from wmhkit.errors import NonBinaryInput, TileTooSmall
from wmhkit.layers import Conv3D, MaxPool, Softmax
from wmhkit.network import NetworkSpec, forward
from wmhkit.phantom import (
    averaging_meta_net,
    make_phantom,
    mean_threshold_meta_net,
    phantom_ensemble,
    threshold_detector_net,
)
from wmhkit.volume import Volume3D, normalize_intensity


def _receptive_net(rng, cin=1):
    """Size-preserving 2-class net with a 3x3x3 receptive field."""
    return NetworkSpec(
        layers=(
            (
                "conv",
                Conv3D(
                    weights=rng.normal(scale=0.3, size=(2, cin, 3, 3, 3)).astype(np.float32),
                    bias=rng.normal(size=2).astype(np.float32),
                    padding=(1, 1, 1),
                ),
            ),
            ("post", Softmax()),
        ),
        in_channels=cin,
        out_channels=2,
    )


class TestTiledForward:
    def test_volume_smaller_than_tile(self, rng):
        net = _receptive_net(rng)
        v = Volume3D(rng.normal(size=(6, 7, 8)).astype(np.float32))
        out = tiled_forward(net, v, tile=(16, 16, 16), overlap=4)
        direct = forward(net, v.data[None])[1]
        assert np.array_equal(out.data, direct)

    def test_per_voxel_net_is_tiling_invariant(self, rng):
        net = threshold_detector_net(0.3)
        v = Volume3D(rng.normal(size=(20, 17, 13)).astype(np.float32))
        full = tiled_forward(net, v, tile=(32, 32, 32), overlap=0)
        for tile, overlap in [((8, 8, 8), 4), ((5, 7, 6), 2), ((20, 4, 9), 3)]:
            tiled = tiled_forward(net, v, tile=tile, overlap=overlap)
            assert np.array_equal(tiled.data, full.data), (tile, overlap)

    def test_matches_tile_accounting_oracle(self, rng):
        net = _receptive_net(rng)
        v = Volume3D(rng.normal(size=(16, 16, 16)).astype(np.float32))
        got = tiled_forward(net, v, tile=(8, 8, 8), overlap=4)

        # oracle: materialize every tile explicitly, average per voxel
        acc = np.zeros((16, 16, 16), dtype=np.float64)
        cnt = np.zeros((16, 16, 16), dtype=np.float64)
        starts = [0, 4, 8]
        for d in starts:
            for h in starts:
                for w in starts:
                    sl = (slice(d, d + 8), slice(h, h + 8), slice(w, w + 8))
                    pred = forward(net, v.data[None][(slice(None),) + sl])
                    acc[sl] += pred[1].astype(np.float64)
                    cnt[sl] += 1.0
        oracle = (acc / cnt).astype(np.float32)
        np.testing.assert_allclose(got.data, oracle, atol=1e-7)

    def test_edge_tiles_shift_inward(self, rng):
        # 10 voxels, tile 8, overlap 4 -> starts 0, 2 (clamped from 4)
        net = threshold_detector_net(0.0)
        v = Volume3D(rng.normal(size=(10, 8, 8)).astype(np.float32))
        out = tiled_forward(net, v, tile=(8, 8, 8), overlap=4)
        assert out.dims == (10, 8, 8)
        assert float(out.data.min()) >= 0.0 and float(out.data.max()) <= 1.0

    def test_tile_too_small_for_pooling_net(self, rng):
        net = NetworkSpec(
            layers=(
                ("pool", MaxPool(kernel=(8, 8, 8), stride=(8, 8, 8))),
                (
                    "head",
                    Conv3D(
                        weights=rng.normal(size=(2, 1, 1, 1, 1)).astype(np.float32),
                        bias=np.zeros(2, np.float32),
                    ),
                ),
                ("post", Softmax()),
            ),
            in_channels=1,
            out_channels=2,
        )
        v = Volume3D(rng.normal(size=(16, 16, 16)).astype(np.float32))
        with pytest.raises(TileTooSmall):
            tiled_forward(net, v, tile=(4, 4, 4), overlap=1)


def _normalized_phantom(seed=0, shape=(24, 24, 24)):
    p = make_phantom(seed=seed, shape=shape)
    return p, normalize_intensity(p.flair, p.brain_mask)


class TestPredictEnsemble:
    def test_zero_posterior_propagates(self, rng):
        # plane nets emit ~0 posterior everywhere; meta thresholds the mean at 0.5
        plane = threshold_detector_net(t=1e6)
        spec = EnsembleSpec(
            axial_net=plane,
            sagittal_net=plane,
            coronal_net=plane,
            meta_net=mean_threshold_meta_net(),
            tile=(16, 16, 16),
            overlap=4,
        )
        v = Volume3D(rng.normal(size=(12, 12, 12)).astype(np.float32))
        mask = Volume3D(np.ones((12, 12, 12), dtype=np.float32))
        post = predict_ensemble(spec, v, mask)
        assert float(post.data.max()) < 0.5
        assert np.array_equal(binarize(post).data, np.zeros((12, 12, 12), np.float32))

    def test_averaging_meta_reproduces_common_posterior(self, rng):
        # exactly two-valued input with a mild detector: posterior levels
        # land strictly inside (0, 1), where the averaging meta is exact
        z = np.where(rng.random((10, 11, 12)) < 0.3, 1.5, -0.5).astype(np.float32)
        v = Volume3D(z)
        mask = Volume3D(np.ones_like(z))
        plane = threshold_detector_net(t=0.25, w=2.0)
        single = tiled_forward(plane, v)
        levels = np.unique(single.data)
        assert levels.size == 2
        lo, hi = float(levels[0]), float(levels[1])
        spec = EnsembleSpec(
            axial_net=plane,
            sagittal_net=plane,
            coronal_net=plane,
            meta_net=averaging_meta_net(lo, hi),
        )
        fused = predict_ensemble(spec, v, mask)
        np.testing.assert_allclose(fused.data, single.data, atol=1e-5)

    def test_phantom_threshold_detection_exact(self):
        p, norm = _normalized_phantom(seed=0)
        post = predict_ensemble(phantom_ensemble(p), norm, p.brain_mask)
        got = binarize(post, 0.5)
        assert np.array_equal(got.data, p.gt_mask.data)

    def test_out_of_mask_forced_to_zero(self):
        p, norm = _normalized_phantom(seed=1)
        post = predict_ensemble(phantom_ensemble(p), norm, p.brain_mask)
        assert np.all(post.data[p.brain_mask.data == 0] == 0.0)

    def test_posterior_in_unit_range(self):
        p, norm = _normalized_phantom(seed=2)
        post = predict_ensemble(phantom_ensemble(p), norm, p.brain_mask)
        assert float(post.data.min()) >= 0.0
        assert float(post.data.max()) <= 1.0 + 1e-6

    def test_invariant_to_on_disk_orientation(self):
        p, norm = _normalized_phantom(seed=4, shape=(10, 12, 14))
        spec = phantom_ensemble(p)
        reference = predict_ensemble(spec, norm, p.brain_mask)
        for orientation in all_signed_orientations()[::7]:
            # express the same physical volume with a different axis labeling:
            # remap data so that interpreting it under `orientation` recovers norm
            reoriented_data = _inverse_remap(norm.data, orientation)
            reoriented_mask = _inverse_remap(p.brain_mask.data, orientation)
            v = Volume3D(reoriented_data, orientation=orientation)
            m = Volume3D(reoriented_mask, orientation=orientation)
            out = predict_ensemble(spec, v, m)
            assert np.array_equal(out.data, reference.data), orientation


def _inverse_remap(canonical: np.ndarray, orientation) -> np.ndarray:
    """Array that remaps to `canonical` when interpreted under `orientation`.

    to_canonical sends source voxel idx to canonical voxel target(idx), so the
    source array is built by gathering: inv[idx] = canonical[target(idx)].
    """
    inv = np.zeros(_source_dims(canonical.shape, orientation), dtype=np.float32)
    for i in range(inv.shape[0]):
        for j in range(inv.shape[1]):
            for k in range(inv.shape[2]):
                inv[i, j, k] = canonical[_target(orientation, inv.shape, (i, j, k))]
    return inv


def _source_dims(canonical_dims, orientation):
    axis_of = {"R": 0, "L": 0, "A": 1, "P": 1, "S": 2, "I": 2}
    return tuple(canonical_dims[axis_of[c]] for c in orientation)


def _target(orientation, dims, idx):
    axis_of = {"R": 0, "L": 0, "A": 1, "P": 1, "S": 2, "I": 2}
    neg = {"L", "P", "I"}
    tgt = [0, 0, 0]
    for axis in range(3):
        code = orientation[axis]
        w = axis_of[code]
        tgt[w] = dims[axis] - 1 - idx[axis] if code in neg else idx[axis]
    return tuple(tgt)


class TestBinarize:
    def test_above_threshold(self):
        v = Volume3D(np.full((1, 1, 1), 0.7, dtype=np.float32))
        assert binarize(v, 0.5).data[0, 0, 0] == 1.0

    def test_tie_goes_to_background(self):
        v = Volume3D(np.full((1, 1, 1), 0.5, dtype=np.float32))
        assert binarize(v, 0.5).data[0, 0, 0] == 0.0

    def test_counting_oracle(self, rng):
        post = Volume3D(rng.random((8, 8, 8)).astype(np.float32))
        for thr in (0.2, 0.5, 0.9):
            got = int(binarize(post, thr).data.sum())
            want = int((post.data > thr).sum())
            assert got == want

    def test_volume_monotone_in_threshold(self, rng):
        post = Volume3D(rng.random((10, 10, 10)).astype(np.float32))
        volumes = [wmh_volume_ml(binarize(post, t)) for t in np.linspace(0.05, 0.95, 19)]
        assert all(a >= b for a, b in zip(volumes, volumes[1:]))


class TestWmhVolume:
    def test_unit_conversion(self):
        mask = Volume3D(np.ones((10, 10, 10), dtype=np.float32), spacing=(1.0, 1.0, 1.0))
        assert wmh_volume_ml(mask) == pytest.approx(1.0)

    def test_empty_mask(self):
        assert wmh_volume_ml(Volume3D(np.zeros((4, 4, 4), np.float32))) == 0.0

    def test_anisotropic_spacing(self):
        data = np.zeros((10, 10, 10), dtype=np.float32)
        data.reshape(-1)[:37] = 1.0
        mask = Volume3D(data, spacing=(1.2, 1.0, 1.25))
        assert wmh_volume_ml(mask) == pytest.approx(0.0555)

    def test_rejects_non_binary(self):
        with pytest.raises(NonBinaryInput):
            wmh_volume_ml(Volume3D(np.full((2, 2, 2), 0.5, np.float32)))
