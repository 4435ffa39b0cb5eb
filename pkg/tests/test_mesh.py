import numpy as np
import pytest

from cwinverse.mesh import (
    Field,
    build_mesh,
    cfl_number,
    d2t,
    d2x,
    d2y,
    dt_fwd,
    dtx,
    dty,
    dxy,
    field_to_csv,
    grad_fwd,
    load_field,
    save_field,
)


def test_paper_mesh_steps():
    m = build_mesh(65, 32, 48, 1.0, 1.0, 1.5)
    assert m.tau == pytest.approx(1.0 / 65)
    assert m.hx == pytest.approx(1.0 / 32)
    assert m.hy == pytest.approx(1.0 / 32)


def test_small_mesh_steps():
    m = build_mesh(10, 4, 4, 1.0, 1.0, 1.0)
    assert m.tau == 0.1
    assert m.hx == 0.25 and m.hy == 0.25


def test_big_domain_mesh_steps():
    m = build_mesh(65, 60, 240, 1.0, 5.0, 7.5)
    assert m.hx == pytest.approx(1.0 / 12)
    assert m.hy == pytest.approx(1.0 / 32)


def test_build_mesh_rejects_bad_dimensions():
    with pytest.raises(ValueError):
        build_mesh(2, 32, 48, 1.0, 1.0, 1.5)
    with pytest.raises(ValueError):
        build_mesh(65, 3, 48, 1.0, 1.0, 1.5)
    with pytest.raises(ValueError):
        build_mesh(65, 32, 48, -1.0, 1.0, 1.5)
    with pytest.raises(ValueError):
        build_mesh(65, 32, 48, 1.0, 0.0, 1.5)


def test_cfl_values():
    assert cfl_number(build_mesh(65, 32, 48, 1.0, 1.0, 1.5)) == pytest.approx(np.sqrt(2048) / 65)
    assert cfl_number(build_mesh(65, 32, 48, 1.0, 1.0, 1.5)) == pytest.approx(0.696, abs=5e-4)
    assert cfl_number(build_mesh(10, 4, 4, 1.0, 1.0, 1.0)) == pytest.approx(0.1 * np.sqrt(32))
    assert cfl_number(build_mesh(65, 60, 240, 1.0, 5.0, 7.5)) == pytest.approx(np.sqrt(144 + 1024) / 65)
    # all stable regardless of the reported value discrepancy
    for m in [(65, 32, 48, 1.0, 1.0, 1.5), (65, 60, 240, 1.0, 5.0, 7.5)]:
        assert cfl_number(build_mesh(*m)) < 1.0


def test_node_coords_roundtrip():
    m = build_mesh(6, 5, 7, 1.0, 1.0, 1.5, ox=2.0, oy=3.0)
    for k, i, j in [(0, 0, 0), (6, 5, 7), (3, 2, 4)]:
        t, x, y = m.node_coords(k, i, j)
        assert m.index_of(t, x, y) == (k, i, j)


def test_stencils_on_constant_field():
    m = build_mesh(5, 4, 4, 1.0, 1.0, 1.0)
    F = Field(m, np.full(m.shape, 3.25))
    assert d2t(F, 2, 2, 2) == 0
    assert d2x(F, 2, 2, 2) == 0
    assert d2y(F, 2, 2, 2) == 0
    assert dt_fwd(F, 2, 2, 2) == 0
    assert grad_fwd(F, 2, 2, 2) == (0, 0)
    assert dxy(F, 2, 2, 2) == 0
    assert dtx(F, 2, 2, 2) == 0
    assert dty(F, 2, 2, 2) == 0


def test_stencils_on_linear_field():
    m = build_mesh(5, 4, 4, 1.0, 1.0, 1.0)
    X, _ = m.xy_grids()
    F = Field(m, np.broadcast_to(X, m.shape).copy())
    gx, gy = grad_fwd(F, 2, 1, 1)
    assert gx == pytest.approx(1.0)
    assert gy == pytest.approx(0.0)
    assert d2x(F, 2, 1, 1) == pytest.approx(0.0)


def test_d2x_exact_on_quadratic():
    m = build_mesh(5, 4, 4, 1.0, 1.0, 1.0)  # hx = 0.25
    X, _ = m.xy_grids()
    F = Field(m, np.broadcast_to(X**2, m.shape).copy())
    assert d2x(F, 2, 2, 2) == pytest.approx(2.0, rel=1e-13)
    assert d2x(F, 2, 1, 3) == pytest.approx(2.0, rel=1e-13)


def test_stencil_linearity():
    rng = np.random.default_rng(3)
    m = build_mesh(5, 5, 6, 1.3, 0.9, 1.1)
    A = rng.standard_normal(m.shape)
    B = rng.standard_normal(m.shape)
    a, b = rng.standard_normal(2)
    combo = Field(m, a * A + b * B)
    FA, FB = Field(m, A), Field(m, B)
    for op in (d2t, d2x, d2y, dt_fwd, dxy, dtx, dty):
        for k, i, j in [(1, 1, 1), (2, 3, 4), (3, 2, 2)]:
            assert op(combo, k, i, j) == pytest.approx(
                a * op(FA, k, i, j) + b * op(FB, k, i, j), rel=1e-11, abs=1e-11
            )
    gx, gy = grad_fwd(combo, 2, 2, 2)
    gxa, gya = grad_fwd(FA, 2, 2, 2)
    gxb, gyb = grad_fwd(FB, 2, 2, 2)
    assert gx == pytest.approx(a * gxa + b * gxb, rel=1e-11)
    assert gy == pytest.approx(a * gya + b * gyb, rel=1e-11)


def test_field_validation():
    m = build_mesh(5, 4, 4, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        Field(m, np.zeros((3, 3, 3)))
    bad = np.zeros(m.shape)
    bad[1, 1, 1] = np.nan
    with pytest.raises(ValueError):
        Field(m, bad)


def test_field_binary_roundtrip(tmp_path):
    rng = np.random.default_rng(11)
    m = build_mesh(6, 5, 7, 1.0, 1.0, 1.5, ox=0.5, oy=-0.25)
    f = Field(m, rng.standard_normal(m.shape))
    path = tmp_path / "u.field"
    save_field(f, path)
    g = load_field(path)
    assert g.mesh == m
    assert np.array_equal(g.values, f.values)


def test_field_csv_export(tmp_path):
    m = build_mesh(3, 4, 4, 1.0, 1.0, 1.0)
    f = Field(m, np.arange(np.prod(m.shape), dtype=float).reshape(m.shape))
    out = tmp_path / "u.csv"
    field_to_csv(f, out)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "t,x,y,value"
    assert len(lines) == 1 + np.prod(m.shape)
    first = [float(v) for v in lines[1].split(",")]
    assert first == [0.0, 0.0, 0.0, 0.0]
