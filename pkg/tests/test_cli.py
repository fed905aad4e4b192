import json

import pytest

from carlemanlab import cli


BASE_CONFIG = """
domain:
  dim: 1
  bounds: [[0.0, 1.0]]
  observed: [right]
grid:
  n_x: 32
  n_t: 32
  T: 1.0
coefficients:
  preset: identity
weight:
  preset: shifted_square
  params: {scale: 8.0}
  lambda: 1.0
ensemble:
  count: 4
  seed: 0
"""


@pytest.fixture
def config_path(tmp_path):
    p = tmp_path / "exp.yaml"
    p.write_text(BASE_CONFIG)
    return p


def test_parse_minimal_defaults(tmp_path):
    p = tmp_path / "min.yaml"
    p.write_text("{}\n")
    cfg = cli.ExperimentConfig.load(p, "check-weight")
    assert cfg.data["grid"]["n_x"] == 64
    assert cfg.data["weight"]["lambda"] == 1.0
    assert cfg.data["options"]["n_space_samples"] == 200
    assert cfg.domain().observed == frozenset({"right"})


def test_unknown_key_rejected(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("weight:\n  lamda: 2.0\n")
    with pytest.raises(cli.ConfigError, match="lamda"):
        cli.ExperimentConfig.load(p, "check-weight")


def test_empty_observed_rejected(tmp_path):
    p = tmp_path / "noobs.yaml"
    p.write_text("domain:\n  observed: []\n")
    cfg = cli.ExperimentConfig.load(p, "stability-sweep")
    with pytest.raises(cli.ConfigError, match="observed"):
        cfg.domain()


def test_missing_config_exits_2(tmp_path):
    rc = cli.main(["check-weight", "--config", str(tmp_path / "none.yaml")])
    assert rc == 2


def test_unknown_subcommand_exits_2(config_path):
    rc = cli.main(["frobnicate", "--config", str(config_path)])
    assert rc == 2


def test_check_weight_run_and_artifacts(config_path, tmp_path):
    out = tmp_path / "run"
    rc = cli.main(["check-weight", "--config", str(config_path),
                   "--out", str(out)])
    assert rc == 0
    assert (out / "report.json").exists()
    assert (out / "report.csv").exists()
    assert (out / "manifest.json").exists()
    assert (out / "lambda_search.png").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["subcommand"] == "check-weight"
    assert len(manifest["config_sha256"]) == 64
    assert "carlemanlab" in manifest["versions"]


def test_check_weight_fail_path(tmp_path):
    # observing only the left face leaves a(nu, grad psi) = +psi'(1) > 0
    # on the unobserved right face
    p = tmp_path / "left.yaml"
    p.write_text(BASE_CONFIG.replace("observed: [right]", "observed: [left]"))
    rc = cli.main(["check-weight", "--config", str(p),
                   "--out", str(tmp_path / "runL"), "--no-figures"])
    assert rc == 1
    report = json.loads((tmp_path / "runL" / "report.json").read_text())
    # psi = (x+1)^2/8, so the unobserved right face carries psi'(1) = 1/2 > 0
    assert report["pseudoconvexity"]["boundary_sign_max"] == pytest.approx(0.5)


def test_artifacts_byte_identical(config_path, tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    for out in (out1, out2):
        rc = cli.main(["check-weight", "--config", str(config_path),
                       "--out", str(out), "--no-figures"])
        assert rc == 0
    assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()
    assert (out1 / "report.csv").read_bytes() == (out2 / "report.csv").read_bytes()


def test_no_figures_flag(config_path, tmp_path):
    out = tmp_path / "nf"
    rc = cli.main(["check-weight", "--config", str(config_path),
                   "--out", str(out), "--no-figures"])
    assert rc == 0
    assert not list(out.glob("*.png"))


def test_seed_override_recorded(config_path, tmp_path):
    out = tmp_path / "seeded"
    rc = cli.main(["stability-sweep", "--config", str(config_path),
                   "--out", str(out), "--seed", "77", "--no-figures"])
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 77


def test_invert_source_run(config_path, tmp_path):
    out = tmp_path / "inv"
    rc = cli.main(["invert-source", "--config", str(config_path),
                   "--out", str(out), "--no-figures"])
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    assert report["relative_error"] <= 1e-2
    header = (out / "report.csv").read_text().splitlines()[0]
    assert header == "x,f_true,f_hat"


def test_float_formatting_17_digits(tmp_path):
    from carlemanlab.reports import dump_csv, format_float
    assert format_float(1.0 / 3.0) == "0.33333333333333331"
    path = tmp_path / "t.csv"
    dump_csv([[1.0 / 3.0]], ["v"], path)
    assert "0.33333333333333331" in path.read_text()
    assert float(format_float(0.1)) == 0.1


def test_solution_and_trace_export(tmp_path):
    import numpy as np
    from carlemanlab.analytic import coefficient_preset
    from carlemanlab.geometry import build_grid, interval, sample_coefficients
    from carlemanlab.reports import solution_to_csv, trace_to_csv
    from carlemanlab.solver import neumann_trace, solve_ivp

    grid = build_grid(interval(), 8, 8, 1.0)
    coeffs = sample_coefficients(coefficient_preset("identity", 1), grid)
    u0 = np.sin(np.pi * grid.axes[0]).astype(complex)
    u0[0] = u0[-1] = 0
    u = solve_ivp(coeffs, None, u0=u0)
    solution_to_csv(u, tmp_path / "sol.csv")
    lines = (tmp_path / "sol.csv").read_text().splitlines()
    assert lines[0] == "t,x,re,im"
    assert len(lines) == 1 + 9 * 9
    trace_to_csv(neumann_trace(u, "right", 0), tmp_path / "tr.csv")
    tlines = (tmp_path / "tr.csv").read_text().splitlines()
    assert tlines[0] == "t,x,re,im"
    assert len(tlines) == 1 + 9
