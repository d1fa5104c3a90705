import json
from dataclasses import replace

import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st
from sym_oracle import X, Y, residuals_sym

from ranspinn.net import InputScaling, NetworkEnsemble
from ranspinn.physics import ModelConstants, RefScales, SourceTerms, pde_residuals
from ranspinn.sampler import load_point_cloud
from ranspinn.workbench.checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from ranspinn.workbench.config import ConfigError, load_mms_spec, load_run_config
from ranspinn.workbench.mms import MmsSpec, load_sources, mms_cloud, mms_fields, mms_generate, mms_sources

# ---------------------------------------------------------------------------
# manufactured solutions


def _sym_fields(spec, Re):
    x0, x1, y0, y1 = spec.domain
    xi, eta = (X - x0) / (x1 - x0), (Y - y0) / (y1 - y0)
    a = spec.a0 * (Re / spec.Re_ref) ** spec.alpha
    psi = a * sp.sin(spec.m * sp.pi * xi) * sp.sin(spec.n * sp.pi * eta) + spec.U0 * Y
    u, v = sp.diff(psi, Y), -sp.diff(psi, X)
    p = spec.p_amp * sp.cos(sp.pi * xi / 2) * (1 + spec.p_beta * sp.cos(sp.pi * eta))
    k = spec.k0 * (1 + spec.k_amp * sp.cos(sp.pi * xi) * sp.cos(sp.pi * eta))
    eps = spec.eps0 * (1 + spec.eps_amp * sp.sin(sp.pi * xi) * sp.cos(sp.pi * eta / 2))
    return u, v, p, k, eps


@pytest.mark.parametrize(
    "spec, Re",
    [
        (MmsSpec(points_per_axis=7), 1000.0),
        (MmsSpec(a0=0.2, m=2, n=3, alpha=0.5, domain=(-1.0, 2.0, 0.5, 1.5), points_per_axis=6), 2200.0),
    ],
)
def test_sources_match_symbolic_oracle(spec, Re):
    c = ModelConstants()
    fields = _sym_fields(spec, Re)
    sym = residuals_sym(fields, Re, c, "printed")
    x, y = spec.grid()
    src = mms_sources(spec, x, y, Re, c)
    for key, expr in zip(("s_momx", "s_momy", "continuity", "s_k", "s_eps"), sym):
        want = np.broadcast_to(sp.lambdify((X, Y), expr, "numpy")(x, y), x.shape)
        np.testing.assert_allclose(src[key], want, rtol=1e-9, atol=1e-11)
    st_ = mms_fields(spec, x, y, Re)
    for name, expr in zip(("u", "v", "p", "k", "eps"), fields):
        want = np.broadcast_to(sp.lambdify((X, Y), expr, "numpy")(x, y), x.shape)
        np.testing.assert_allclose(st_.field(name).value, want, rtol=1e-12, atol=1e-14)


spec_strategy = st.builds(
    MmsSpec,
    a0=st.floats(-0.3, 0.3),
    m=st.integers(1, 3),
    n=st.integers(1, 3),
    alpha=st.floats(0, 2),
    U0=st.floats(-2, 2),
    p_amp=st.floats(-1, 1),
    k0=st.floats(1e-3, 1.0),
    k_amp=st.floats(-0.9, 0.9),
    eps0=st.floats(1e-3, 1.0),
    eps_amp=st.floats(-0.9, 0.9),
    points_per_axis=st.integers(3, 12),
)


@given(spec_strategy, st.floats(200.0, 5000.0))
def test_generated_fields_close_every_residual(spec, Re):
    cloud, src = mms_cloud(spec, Re)
    state = mms_fields(spec, cloud.xy[:, 0], cloud.xy[:, 1], Re)
    rs = pde_residuals(state, ModelConstants(), SourceTerms.from_mapping(src))
    assert max(float(np.max(np.abs(r))) for r in rs) < 1e-10
    assert np.all(src["s_mass"] == 0.0)
    assert np.all(cloud.truth["k"] > 0) and np.all(cloud.truth["eps"] > 0)


def test_zero_streamfunction_leaves_pressure_gradient():
    spec = MmsSpec(a0=0.0, U0=0.0, points_per_axis=9)
    x, y = spec.grid()
    src = mms_sources(spec, x, y, 1000.0)
    st_ = mms_fields(spec, x, y, 1000.0)
    assert np.all(st_.u.value == 0) and np.all(st_.v.value == 0)
    np.testing.assert_allclose(src["s_momx"], st_.p.dx, atol=1e-15)
    np.testing.assert_allclose(src["s_momy"], st_.p.dy, atol=1e-15)


@pytest.mark.parametrize("kw", [dict(k0=0.0), dict(k_amp=1.0), dict(eps0=-1.0), dict(eps_amp=-1.2), dict(re_list=()), dict(points_per_axis=1)])
def test_invalid_specs_rejected(kw):
    with pytest.raises(ValueError):
        MmsSpec(**kw).validate()


def test_generate_writes_aligned_files_deterministically(tmp_path):
    spec = MmsSpec(points_per_axis=6, re_list=(1000.0, 1500.0))
    paths = mms_generate(spec, tmp_path / "a")
    mms_generate(spec, tmp_path / "b")
    assert [p.name for p in paths] == ["mms_re1000.csv", "mms_re1500.csv"]
    for name in ("mms_re1000.csv", "mms_re1000.sources.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    cloud = load_point_cloud(paths[0])
    src = load_sources(tmp_path / "a" / "mms_re1000.sources.csv", cloud)
    ref_cloud, ref_src = mms_cloud(spec, 1000.0)
    np.testing.assert_array_equal(cloud.truth["u"], ref_cloud.truth["u"])
    np.testing.assert_array_equal(src["s_eps"], ref_src["s_eps"])
    assert set(cloud.tag) == {"interior", "outlet"}
    assert np.all(cloud.xy[cloud.tag == "outlet", 0] == 1.0)
    np.testing.assert_allclose(cloud.truth["p"][cloud.tag == "outlet"], 0.0, atol=1e-15)
    assert cloud.n_zones == 4


def test_sources_must_align(tmp_path):
    spec = MmsSpec(points_per_axis=4, re_list=(1000.0,))
    mms_generate(spec, tmp_path)
    other, _ = mms_cloud(MmsSpec(points_per_axis=5), 1000.0)
    with pytest.raises(ValueError, match="align"):
        load_sources(tmp_path / "mms_re1000.sources.csv", other)


# ---------------------------------------------------------------------------
# checkpoints


def _checkpoint(hidden=(5, 4)):
    pts = np.random.default_rng(0).uniform(size=(10, 3)) * [1, 1, 1000] + [0, 0, 1000]
    ens = NetworkEnsemble.create(hidden, seed=3, scaling=InputScaling.from_points(pts))
    ens.params = ens.params + np.random.default_rng(1).normal(size=ens.params.size) * 1e-3
    return Checkpoint(ens, ModelConstants(C1=1.5, eps_sink="standard"), RefScales(2.0, 3.0, 0.1),
                      {"seed": 7, "caps": {"0": 10}}, (0.1, 1 / 3, 2.5, 1e12), 42)


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    ck = _checkpoint()
    save_checkpoint(ck, tmp_path / "c.ckpt")
    back = load_checkpoint(tmp_path / "c.ckpt")
    pts = np.random.default_rng(9).uniform(size=(100, 3)) * [1, 1, 1000] + [0, 0, 1000]
    a, b = ck.ensemble.predict(pts), back.ensemble.predict(pts)
    for f in a:
        np.testing.assert_array_equal(a[f], b[f])
    np.testing.assert_array_equal(back.ensemble.params, ck.ensemble.params)
    assert back.ensemble.scaling == ck.ensemble.scaling
    assert (back.consts, back.refs, back.provenance, back.lambdas, back.epoch) == (ck.consts, ck.refs, ck.provenance, ck.lambdas, ck.epoch)
    save_checkpoint(back, tmp_path / "d.ckpt")
    assert (tmp_path / "c.ckpt").read_bytes() == (tmp_path / "d.ckpt").read_bytes()


def test_other_layer_config_loads(tmp_path):
    save_checkpoint(_checkpoint(hidden=(3,)), tmp_path / "c.ckpt")
    back = load_checkpoint(tmp_path / "c.ckpt")
    assert back.ensemble.nets["u"].layer_sizes == (3, 3, 1)
    assert back.ensemble.predict(np.zeros((2, 3)))["u"].shape == (2,)


def test_truncated_and_corrupt_checkpoints(tmp_path):
    save_checkpoint(_checkpoint(), tmp_path / "c.ckpt")
    raw = (tmp_path / "c.ckpt").read_text()
    (tmp_path / "t.ckpt").write_text(raw[: len(raw) // 2])
    with pytest.raises(CheckpointError, match="corrupt or truncated"):
        load_checkpoint(tmp_path / "t.ckpt")
    head, body = raw.split("\n", 1)
    doc = json.loads(body)
    doc["payload"]["epoch"] = 43
    (tmp_path / "m.ckpt").write_text(head + "\n" + json.dumps(doc))
    with pytest.raises(CheckpointError, match="checksum"):
        load_checkpoint(tmp_path / "m.ckpt")
    (tmp_path / "v.ckpt").write_text(raw.replace("v1\n", "v2\n", 1))
    with pytest.raises(CheckpointError, match="v2"):
        load_checkpoint(tmp_path / "v.ckpt")
    (tmp_path / "g.ckpt").write_text("hello\n")
    with pytest.raises(CheckpointError, match="header"):
        load_checkpoint(tmp_path / "g.ckpt")


# ---------------------------------------------------------------------------
# configuration


def test_run_config_defaults_and_overrides(tmp_path):
    (tmp_path / "c.toml").write_text('clouds = ["a.csv"]\nepochs = 10\neps_sink = "standard"\n')
    cfg = load_run_config(tmp_path / "c.toml", {"seed": 5})
    assert cfg.train.epochs == 10 and cfg.train.seed == 5 and cfg.consts.eps_sink == "standard"
    assert cfg.clouds == [tmp_path / "a.csv"] and cfg.hidden == (64, 64, 64)
    res = cfg.resolved()
    assert res["warmstart_end"] == 2 and res["lr0"] == 0.001 and res["budget"] == 3000


@pytest.mark.parametrize(
    "text, match",
    [
        ('clouds = ["a.csv"]\nepoch = 3\n', "unknown"),
        ('clouds = ["a.csv"]\n[train]\nepochs = 3\n', "flat"),
        ("epochs = 3\n", "no training data"),
        ('clouds = ["a.csv"]\nlr0 = -1.0\n', "lr0"),
        ('clouds = ["a.csv"\n', "invalid TOML"),
        ('clouds = ["a.csv"]\ndata_dir = "d"\n', "either"),
    ],
)
def test_run_config_errors(tmp_path, text, match):
    (tmp_path / "c.toml").write_text(text)
    with pytest.raises(ConfigError, match=match):
        load_run_config(tmp_path / "c.toml")


def test_data_dir_skips_source_files(tmp_path):
    d = tmp_path / "d"
    mms_generate(MmsSpec(points_per_axis=3, re_list=(1000.0, 1200.0)), d)
    (tmp_path / "c.toml").write_text('data_dir = "d"\n')
    cfg = load_run_config(tmp_path / "c.toml")
    assert [p.name for p in cfg.clouds] == ["mms_re1000.csv", "mms_re1200.csv"]


def test_mms_spec_file(tmp_path):
    (tmp_path / "s.toml").write_text('a0 = 0.1\nre_list = [1000.0, 2000.0]\nout_dir = "o"\n')
    spec, out = load_mms_spec(tmp_path / "s.toml")
    assert spec == replace(MmsSpec(), a0=0.1, re_list=(1000.0, 2000.0)) and out == tmp_path / "o"
    (tmp_path / "bad.toml").write_text("k0 = -1.0\n")
    with pytest.raises(ConfigError):
        load_mms_spec(tmp_path / "bad.toml")
