import numpy as np
import pytest

from voxdepth.types import (
    AffineTransform2D,
    ColorImage,
    DepthImage,
    GrayImage,
    Point3,
    RigidTransform,
    apply_affine,
    apply_rigid,
    compose_rigid,
    resize_bilinear,
    to_gray,
)


def rot_z(deg):
    a = np.deg2rad(deg)
    return np.array(
        [[np.cos(a), -np.sin(a), 0.0], [np.sin(a), np.cos(a), 0.0], [0.0, 0.0, 1.0]]
    )


class TestRigid:
    def test_identity_compose(self):
        t = compose_rigid(RigidTransform.identity(), RigidTransform.identity())
        assert np.allclose(t.rotation, np.eye(3))
        assert np.allclose(t.translation, 0)

    def test_translations_add(self):
        a = RigidTransform(np.eye(3), [1.0, 0, 0])
        b = RigidTransform(np.eye(3), [2.0, 0, 0])
        assert np.allclose(compose_rigid(a, b).translation, [3.0, 0, 0])

    def test_rotation_then_translation(self):
        # apply translate(+x 1) first, then rotate 90 deg about z
        r = RigidTransform(rot_z(90), [0.0, 0, 0])
        t = RigidTransform(np.eye(3), [1.0, 0, 0])
        out = compose_rigid(r, t)
        assert np.allclose(out.translation, [0.0, 1.0, 0.0], atol=1e-12)
        assert np.allclose(out.rotation, rot_z(90))

    def test_apply_identity(self):
        p = apply_rigid(RigidTransform.identity(), Point3(1, 2, 3))
        assert (p.x, p.y, p.z) == (1, 2, 3)

    def test_apply_translation(self):
        t = RigidTransform(np.eye(3), [0, 0, 0.5])
        p = apply_rigid(t, Point3(0, 0, 1))
        assert np.allclose([p.x, p.y, p.z], [0, 0, 1.5])

    def test_apply_rotation_180(self):
        t = RigidTransform(rot_z(180), [0.0, 0, 0])
        p = apply_rigid(t, Point3(1, 0, 0))
        assert np.allclose([p.x, p.y, p.z], [-1, 0, 0], atol=1e-12)

    def test_compose_associative(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            ts = [
                RigidTransform.from_rotvec(rng.normal(size=3), rng.normal(size=3))
                for _ in range(3)
            ]
            left = compose_rigid(compose_rigid(ts[0], ts[1]), ts[2])
            right = compose_rigid(ts[0], compose_rigid(ts[1], ts[2]))
            assert np.abs(left.matrix() - right.matrix()).max() < 1e-9

    def test_inverse_round_trip(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            t = RigidTransform.from_rotvec(rng.normal(size=3), rng.normal(size=3))
            p = Point3(*rng.normal(size=3))
            back = apply_rigid(t.inverse(), apply_rigid(t, p))
            assert np.allclose([back.x, back.y, back.z], [p.x, p.y, p.z], atol=1e-9)

    def test_rejects_non_orthonormal(self):
        with pytest.raises(ValueError):
            RigidTransform(np.eye(3) * 1.01, np.zeros(3))

    def test_rejects_reflection(self):
        m = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(ValueError):
            RigidTransform(m, np.zeros(3))


class TestAffine:
    def test_identity(self):
        m = AffineTransform2D.identity()
        assert np.allclose(apply_affine(m, (7, 9)), (7, 9))

    def test_pure_translation(self):
        m = AffineTransform2D([[1, 0, 3], [0, 1, 5]])
        assert np.allclose(apply_affine(m, (0, 0)), (3, 5))

    def test_rotation_90(self):
        m = AffineTransform2D([[0, -1, 0], [1, 0, 0]])
        assert np.allclose(apply_affine(m, (1, 0)), (0, 1))

    def test_singular_rejected(self):
        with pytest.raises(ValueError):
            AffineTransform2D([[1, 0, 0], [2, 0, 0]])

    def test_inverse(self):
        m = AffineTransform2D([[1.2, 0.1, 3], [-0.2, 0.9, 5]])
        p = np.array([[4.0, -2.0]])
        assert np.allclose(m.inverse().apply(m.apply(p)), p)


class TestResize:
    def test_constant_stays_constant(self):
        img = DepthImage(np.full((5, 7), 1234, dtype=np.uint16))
        out = resize_bilinear(img, 13, 3)
        assert (out.data == 1234).all()

    def test_identity_size_bit_exact(self):
        rng = np.random.default_rng(3)
        img = DepthImage(rng.integers(0, 65536, size=(6, 8)).astype(np.uint16))
        out = resize_bilinear(img, 8, 6)
        assert np.array_equal(out.data, img.data)

    def test_two_to_three_interpolation(self):
        img = DepthImage(np.array([[0, 100]], dtype=np.uint16))
        out = resize_bilinear(img, 3, 1)
        assert out.data.tolist() == [[0, 50, 100]]

    def test_bounds_preserved(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            arr = rng.integers(0, 65536, size=(9, 11)).astype(np.uint16)
            img = DepthImage(arr)
            out = resize_bilinear(img, 23, 17)
            assert out.data.min() >= arr.min()
            assert out.data.max() <= arr.max()

    def test_color_and_gray_kinds(self):
        color = ColorImage(np.zeros((4, 4, 3), dtype=np.uint8))
        gray = GrayImage(np.zeros((4, 4), dtype=np.uint8))
        assert isinstance(resize_bilinear(color, 2, 2), ColorImage)
        assert isinstance(resize_bilinear(gray, 2, 2), GrayImage)

    def test_bad_target_rejected(self):
        with pytest.raises(ValueError):
            resize_bilinear(GrayImage(np.zeros((4, 4), dtype=np.uint8)), 0, 3)


class TestGray:
    def test_white(self):
        img = ColorImage(np.full((2, 2, 3), 255, dtype=np.uint8))
        assert (to_gray(img).data == 255).all()

    def test_black(self):
        img = ColorImage(np.zeros((2, 2, 3), dtype=np.uint8))
        assert (to_gray(img).data == 0).all()

    def test_gray_fixed_point(self):
        img = ColorImage(np.full((2, 2, 3), 100, dtype=np.uint8))
        assert (to_gray(img).data == 100).all()


class TestInvariants:
    def test_depth_image_shape_checked(self):
        with pytest.raises(ValueError):
            DepthImage(np.zeros((0, 4), dtype=np.uint16))

    def test_color_image_channels_checked(self):
        with pytest.raises(ValueError):
            ColorImage(np.zeros((4, 4, 2), dtype=np.uint8))

    def test_point_finite(self):
        with pytest.raises(ValueError):
            Point3(np.nan, 0, 0)
