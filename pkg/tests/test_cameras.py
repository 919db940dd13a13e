import numpy as np
import pytest

from sketchfield.cameras import (
    CameraPose,
    DepthMap,
    generate_rays,
    lift_pixels,
    local_camera_from_sphere,
    make_camera,
    nearest_view,
    project_points,
    reproject,
    sample_orthogonal_views,
    view_angle,
    warp_sketch,
)

from oracles import oracle_extrinsic, oracle_reproject


def test_eye_position_front_view():
    cam = make_camera(0.0, 0.0, 2.0)
    assert np.allclose(cam.eye, [2.0, 0.0, 0.0])
    assert np.allclose(cam.axis, [-1.0, 0.0, 0.0])


def test_eye_position_elevated():
    cam = make_camera(90.0, 30.0, 2.0, look_at=(1.0, 0.0, 0.0))
    expected = np.array([1.0, 0.0, 0.0]) + 2.0 * np.array(
        [0.0, np.cos(np.deg2rad(30)), np.sin(np.deg2rad(30))]
    )
    assert np.allclose(cam.eye, expected)


def test_azimuth_wraparound():
    a = make_camera(370.0, 10.0, 2.0)
    b = make_camera(10.0, 10.0, 2.0)
    assert a.azimuth_deg == b.azimuth_deg
    assert np.array_equal(a.eye, b.eye)


def test_pole_elevation_rejected():
    for el in (90.0, -90.0, 95.0):
        with pytest.raises(ValueError):
            make_camera(0.0, el, 2.0)


def test_bad_parameters_rejected():
    with pytest.raises(ValueError):
        make_camera(0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        make_camera(0.0, 0.0, -1.0)
    with pytest.raises(ValueError):
        make_camera(0.0, 0.0, 2.0, fov_y_deg=0.0)
    with pytest.raises(ValueError):
        make_camera(0.0, 0.0, 2.0, fov_y_deg=180.0)
    with pytest.raises(ValueError):
        make_camera(np.nan, 0.0, 2.0)


def test_extrinsic_orthonormal_random_poses():
    rng = np.random.default_rng(7)
    for _ in range(200):
        cam = make_camera(rng.uniform(0, 360), rng.uniform(-89, 89),
                          rng.uniform(0.5, 5.0),
                          look_at=rng.normal(size=3))
        rot = cam.rotation
        assert np.abs(rot @ rot.T - np.eye(3)).max() < 1e-9
        assert abs(np.linalg.det(rot) - 1.0) < 1e-9


def test_camera_up_never_rolls():
    # screen-up is world +z with the view-axis component removed
    rng = np.random.default_rng(8)
    for _ in range(50):
        cam = make_camera(rng.uniform(0, 360), rng.uniform(-80, 80), 2.0)
        up_cam = -cam.rotation[1]  # negative of the "down" row
        proj = np.array([0.0, 0.0, 1.0]) - cam.axis * cam.axis[2]
        proj /= np.linalg.norm(proj)
        assert np.allclose(up_cam, proj, atol=1e-9)


def test_orthogonal_views_gaps():
    views = sample_orthogonal_views(17.0, 12.0, 2.0)
    azs = [v.azimuth_deg for v in views]
    gaps = np.diff(azs + [azs[0] + 360.0]) % 360.0
    assert np.array_equal(gaps, [90.0, 90.0, 90.0, 90.0])
    assert len({v.elevation_deg for v in views}) == 1
    assert len({v.radius for v in views}) == 1


def test_nearest_view_simple():
    sketch_cam = make_camera(10.0, 0.0, 2.0)
    views = sample_orthogonal_views(0.0, 0.0, 2.0)
    assert nearest_view(sketch_cam, views) == 0
    sketch_cam = make_camera(100.0, 0.0, 2.0)
    assert nearest_view(sketch_cam, views) == 1


def test_nearest_view_tie_breaks_low_index():
    sketch_cam = make_camera(75.0, 0.0, 2.0)
    views = [make_camera(30.0, 0.0, 2.0), make_camera(120.0, 0.0, 2.0)]
    assert nearest_view(sketch_cam, views) == 0


def test_nearest_view_brute_force_agreement():
    rng = np.random.default_rng(11)
    for _ in range(50):
        sk = make_camera(rng.uniform(0, 360), rng.uniform(-60, 60), 2.0)
        views = [make_camera(rng.uniform(0, 360), rng.uniform(-60, 60), 2.0)
                 for _ in range(6)]
        angles = [view_angle(sk, v) for v in views]
        assert angles[nearest_view(sk, views)] <= min(angles) + 1e-9


def test_ray_count_and_unit_norm():
    cam = make_camera(33.0, 21.0, 2.0, width=17, height=9)
    rays = generate_rays(cam)
    assert rays.origins.shape == (9, 17, 3)
    assert rays.directions.shape == (9, 17, 3)
    assert np.allclose(np.linalg.norm(rays.directions, axis=-1), 1.0, atol=1e-12)
    assert np.allclose(rays.origins, cam.eye)


def test_center_ray_is_optical_axis_odd_resolution():
    cam = make_camera(40.0, 25.0, 3.0, width=65, height=65)
    rays = generate_rays(cam)
    center = rays.directions[32, 32]
    assert np.allclose(center, cam.axis, atol=1e-12)


def test_center_rays_symmetric_even_resolution():
    # even resolutions put the axis on the corner between the 4 central pixels
    cam = make_camera(0.0, 0.0, 2.0, width=64, height=64)
    rays = generate_rays(cam)
    quad = rays.directions[31:33, 31:33].reshape(4, 3)
    mean = quad.mean(axis=0)
    mean /= np.linalg.norm(mean)
    assert np.allclose(mean, cam.axis, atol=1e-9)


def test_corner_rays_within_fov():
    cam = make_camera(0.0, 0.0, 2.0, fov_y_deg=50.0, width=64, height=64)
    rays = generate_rays(cam)
    cosines = rays.directions.reshape(-1, 3) @ cam.axis
    # diagonal half-angle for a square image: atan(sqrt(2) * tan(fov/2))
    max_half = np.arctan(np.sqrt(2.0) * np.tan(np.deg2rad(25.0)))
    assert np.arccos(np.clip(cosines, -1, 1)).max() <= max_half + 1e-9


def test_project_lift_round_trip():
    rng = np.random.default_rng(3)
    cam = make_camera(123.0, -35.0, 2.5, look_at=(0.2, -0.1, 0.3))
    uv = rng.uniform(0, 64, size=(100, 2))
    depth = rng.uniform(0.5, 4.0, size=100)
    world = lift_pixels(cam, uv, depth)
    uv2, z2 = project_points(cam, world)
    assert np.abs(uv2 - uv).max() < 1e-9
    assert np.abs(z2 - depth).max() < 1e-9


def test_reproject_identity_exact():
    cam = make_camera(75.0, 12.0, 2.0)
    uv = np.array([[32.5, 20.5], [1.0, 63.0], [10.25, 40.75]])
    depth = np.array([2.0, 1.5, 3.0])
    res = reproject(uv, depth, cam, cam)
    assert np.abs(res.uv - uv).max() < 1e-9
    assert np.abs(res.depth - depth).max() < 1e-9
    assert res.in_front.all()


def test_reproject_matches_matrix_chain_oracle():
    rng = np.random.default_rng(19)
    for _ in range(20):
        cam_a = make_camera(rng.uniform(0, 360), rng.uniform(-45, 45),
                            rng.uniform(1.5, 3.0))
        cam_b = make_camera(rng.uniform(0, 360), rng.uniform(-45, 45),
                            rng.uniform(1.5, 3.0))
        uv = rng.uniform(0, 64, size=(50, 2))
        depth = rng.uniform(1.0, 3.0, size=50)
        res = reproject(uv, depth, cam_a, cam_b)
        uv_o, z_o = oracle_reproject(uv, depth, cam_a, cam_b)
        front = z_o > 1e-6
        assert np.abs(res.uv[front] - uv_o[front]).max() < 1e-6
        assert np.abs(res.depth - z_o).max() < 1e-9


def test_reproject_flags_behind_camera():
    cam_a = make_camera(0.0, 0.0, 2.0)
    cam_b = make_camera(180.0, 0.0, 2.0)
    # point behind cam_b: between cam_b's eye and the far side, seen from cam_a
    uv = np.array([[32.0, 32.0]])
    depth = np.array([4.5])  # lands 2.5 behind origin, 0.5 beyond cam_b's eye
    res = reproject(uv, depth, cam_a, cam_b)
    assert not res.in_front[0]
    assert not res.in_frame[0]


def test_reproject_rejects_nonpositive_depth():
    cam = make_camera(0.0, 0.0, 2.0)
    with pytest.raises(ValueError):
        reproject(np.array([[1.0, 1.0]]), np.array([0.0]), cam, cam)


def test_extrinsic_matches_oracle_matrix():
    rng = np.random.default_rng(23)
    for _ in range(50):
        cam = make_camera(rng.uniform(0, 360), rng.uniform(-80, 80),
                          rng.uniform(0.5, 4.0), look_at=rng.normal(size=3))
        ext = oracle_extrinsic(cam)
        assert np.abs(ext[:3, :3] - cam.rotation).max() < 1e-12
        assert np.abs(ext[:3, 3] - (-cam.rotation @ cam.eye)).max() < 1e-12


# ---------------------------------------------------------------------------
# warping


def _flat_depth(cam, value):
    vals = np.full((cam.height, cam.width), float(value))
    return DepthMap(values=vals, valid=np.ones_like(vals, dtype=bool))


def test_warp_identity_returns_sketch():
    rng = np.random.default_rng(5)
    cam = make_camera(0.0, 0.0, 2.0, width=32, height=32)
    sketch = rng.uniform(0.0, 1.0, size=(32, 32))
    out = warp_sketch(sketch, _flat_depth(cam, 2.0), cam, cam)
    assert np.abs(out - sketch).max() < 1e-9


def test_warp_identity_respects_validity():
    cam = make_camera(0.0, 0.0, 2.0, width=16, height=16)
    sketch = np.zeros((16, 16))
    depth = _flat_depth(cam, 2.0)
    depth.valid[:, :8] = False
    out = warp_sketch(sketch, depth, cam, cam)
    assert np.all(out[:, :8] == 1.0)   # invalid pixels dropped, stay blank
    assert np.all(out[:, 8:] == 0.0)


def test_warp_blank_stays_blank():
    cam_a = make_camera(0.0, 0.0, 2.0, width=32, height=32)
    cam_b = make_camera(25.0, 5.0, 2.0, width=32, height=32)
    out = warp_sketch(np.ones((32, 32)), _flat_depth(cam_a, 2.0), cam_a, cam_b)
    assert np.all(out == 1.0)


def test_warp_single_stroke_pixel_lands_at_center():
    # a stroke dot at the image center at look-at depth projects to the
    # destination center for any azimuth gap (both cameras stare at it)
    cam_a = make_camera(0.0, 0.0, 2.0, width=33, height=33)
    cam_b = make_camera(20.0, 0.0, 2.0, width=33, height=33)
    sketch = np.ones((33, 33))
    sketch[16, 16] = 0.0
    out = warp_sketch(sketch, _flat_depth(cam_a, 2.0), cam_a, cam_b)
    ink = 1.0 - out
    total = ink.sum()
    assert abs(total - 1.0) < 1e-9
    assert ink[15:18, 15:18].sum() == pytest.approx(total)


def test_warp_mass_conserved_without_collisions():
    # small depth offsets spread pixels apart; a sparse sketch cannot collide
    cam_a = make_camera(0.0, 0.0, 2.0, width=48, height=48)
    cam_b = make_camera(8.0, 0.0, 2.0, width=48, height=48)
    sketch = np.ones((48, 48))
    for i, j in ((20, 20), (24, 26), (30, 18)):
        sketch[i, j] = 0.25
    out = warp_sketch(sketch, _flat_depth(cam_a, 2.0), cam_a, cam_b)
    src_mass = (1.0 - sketch).sum()
    dst_mass = (1.0 - out).sum()
    assert dst_mass <= src_mass + 1e-9
    assert dst_mass == pytest.approx(src_mass, abs=1e-9)


def test_warp_mass_never_exceeds_source():
    rng = np.random.default_rng(31)
    for trial in range(10):
        cam_a = make_camera(0.0, 0.0, 2.0, width=32, height=32)
        cam_b = make_camera(rng.uniform(-40, 40), rng.uniform(0, 25), 2.0,
                            width=32, height=32)
        sketch = rng.uniform(0.0, 1.0, size=(32, 32))
        vals = rng.uniform(1.5, 2.5, size=(32, 32))
        depth = DepthMap(values=vals, valid=np.ones((32, 32), dtype=bool))
        out = warp_sketch(sketch, depth, cam_a, cam_b)
        assert (1.0 - out).sum() <= (1.0 - sketch).sum() + 1e-6


def test_warp_zbuffer_keeps_nearest():
    # two source pixels on the destination's optical axis at depths 2 and 4:
    # the source camera sees them left and right of center; any source pixel
    # on the center row lifted at depth 3 lands in the x=0 plane, i.e. exactly
    # on the destination axis, so both collide at the destination center pixel
    cam_src = make_camera(0.0, 0.0, 3.0, width=65, height=65)
    cam_dst = make_camera(90.0, 0.0, 3.0, width=65, height=65)
    from sketchfield.cameras import project_points
    uv, _ = project_points(cam_src, np.array([[0.0, 1.0, 0.0], [0.0, -1.0, 0.0]]))
    col_near = int(uv[0, 0])
    col_far = int(uv[1, 0])
    assert col_near != col_far
    sketch = np.ones((65, 65))
    sketch[32, col_near] = 0.0  # full ink, destination depth ~2
    sketch[32, col_far] = 0.2   # partial ink, destination depth ~4 -> occluded
    vals = np.full((65, 65), np.nan)
    valid = np.zeros((65, 65), dtype=bool)
    vals[32, col_near] = 3.0
    vals[32, col_far] = 3.0
    valid[32, col_near] = True
    valid[32, col_far] = True
    out = warp_sketch(sketch, DepthMap(values=vals, valid=valid), cam_src, cam_dst)
    ink = 1.0 - out
    assert ink[32, 32] == pytest.approx(1.0, abs=1e-9)
    assert ink.sum() == pytest.approx(1.0, abs=1e-9)  # far pixel fully occluded


def test_local_camera_orbit_radius_formula():
    # fov with tan(fov/2) = 0.5 -> orbit radius 2.5 for unit sphere, fill 0.8
    fov = float(np.rad2deg(2.0 * np.arctan(0.5)))
    cam = local_camera_from_sphere((0.0, 0.0, 0.0), 1.0, 30.0, 10.0,
                                   fov_y_deg=fov, fill_fraction=0.8)
    assert cam.radius == pytest.approx(2.5, abs=1e-12)


def test_local_camera_fill_scales_radius():
    fov = 50.0
    a = local_camera_from_sphere((0, 0, 0), 0.5, 0.0, 0.0, fov_y_deg=fov,
                                 fill_fraction=0.8)
    b = local_camera_from_sphere((0, 0, 0), 0.5, 0.0, 0.0, fov_y_deg=fov,
                                 fill_fraction=0.4)
    assert b.radius == pytest.approx(2.0 * a.radius)


def test_local_camera_sphere_fits_in_frame():
    rng = np.random.default_rng(41)
    for _ in range(25):
        r = rng.uniform(0.1, 1.0)
        center = rng.normal(size=3) * 0.3
        cam = local_camera_from_sphere(center, r, rng.uniform(0, 360),
                                       rng.uniform(-60, 60), fov_y_deg=50.0,
                                       fill_fraction=0.8)
        # angular radius of the sphere must stay inside the vertical half-fov
        d = np.linalg.norm(cam.eye - np.asarray(center))
        ang = np.arcsin(r / d)
        assert ang < np.deg2rad(25.0)
        with pytest.raises(ValueError):
            local_camera_from_sphere(center, -r, 0, 0)
