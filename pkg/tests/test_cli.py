import pathlib
import subprocess
import sys

import pytest
import yaml

from slns.cli import EXPERIMENTS, list_experiments, load_config, main, run
from slns.errors import UsageError

SMALL_VORTICITY = {
    "experiment": "vorticity_channel_decay",
    "seed": 99,
    "solver": {"nu": 1.0, "t_final": 0.05, "dt": 2.5e-3, "dt_snap": 5e-3,
               "shape": [8, 17], "n_paths": 1500},
    "options": {"points_y": [0.3, 0.6]},
}


def write_cfg(tmp_path, cfg, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg))
    return str(p)


def test_run_writes_outputs_and_exit_zero(tmp_path):
    cfg = write_cfg(tmp_path, SMALL_VORTICITY)
    out = str(tmp_path / "out")
    status = run(cfg, output_dir=out, workers=1)
    assert status == 0
    results = pathlib.Path(out, "results.csv").read_text().splitlines()
    assert results[0] == "kind,problem,check,error,tolerance,passed"
    assert len(results) == 5
    est = pathlib.Path(out, "estimates.csv").read_text().splitlines()
    assert est[0].startswith("x0,x1,t,mean,std_error,n,seed,dt")
    assert "PASS" in pathlib.Path(out, "summary.txt").read_text()


def test_rerun_is_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path, SMALL_VORTICITY)
    outs = []
    for name in ("a", "b"):
        out = str(tmp_path / name)
        run(cfg, output_dir=out, workers=1)
        outs.append((pathlib.Path(out, "results.csv").read_bytes(),
                     pathlib.Path(out, "estimates.csv").read_bytes()))
    assert outs[0] == outs[1]


def test_worker_count_does_not_change_bytes(tmp_path):
    cfg = write_cfg(tmp_path, SMALL_VORTICITY)
    blobs = []
    for w in (1, 2):
        out = str(tmp_path / f"w{w}")
        run(cfg, output_dir=out, workers=w)
        blobs.append(pathlib.Path(out, "estimates.csv").read_bytes())
    assert blobs[0] == blobs[1]


def test_seed_override_changes_results(tmp_path):
    cfg = write_cfg(tmp_path, SMALL_VORTICITY)
    out1, out2 = str(tmp_path / "s1"), str(tmp_path / "s2")
    run(cfg, output_dir=out1, workers=1)
    run(cfg, output_dir=out2, seed=1234, workers=1)
    a = pathlib.Path(out1, "estimates.csv").read_bytes()
    b = pathlib.Path(out2, "estimates.csv").read_bytes()
    assert a != b


def test_unknown_experiment_lists_registry(tmp_path):
    cfg = write_cfg(tmp_path, {"experiment": "frobnicate"})
    with pytest.raises(UsageError, match="vorticity_channel_decay"):
        run(cfg)


def test_malformed_config_reports_line(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("experiment: x\nsolver: {nu: 1.0\n  t_final: }\n")
    with pytest.raises(UsageError, match="line"):
        load_config(str(p))


def test_config_must_be_mapping(tmp_path):
    p = tmp_path / "notmap.yaml"
    p.write_text("- 1\n- 2\n")
    with pytest.raises(UsageError):
        load_config(str(p))


def test_main_exit_codes(tmp_path):
    assert main(["list-experiments"]) == 0
    cfg = write_cfg(tmp_path, {"experiment": "frobnicate"})
    assert main(["run", cfg]) == 2


def test_cli_entry_point_subprocess(tmp_path):
    cfg = write_cfg(tmp_path, SMALL_VORTICITY)
    out = str(tmp_path / "sub")
    r = subprocess.run([sys.executable, "-m", "slns.cli", "run", cfg,
                        "--output-dir", out], capture_output=True, text=True)
    assert r.returncode == 0
    assert "PASS" in r.stdout


def test_ladder_needs_three_levels(tmp_path):
    cfg = write_cfg(tmp_path, {
        "experiment": "ladder", "seed": 1,
        "solver": {"nu": 1.0, "t_final": 0.1, "dt": 1e-3, "shape": [8, 17],
                   "n_paths": 100},
        "options": {"mode": "n", "case": "scalar_fk_heat_slab",
                    "point": [0.5, 0.5], "levels": [100, 1000]},
    })
    with pytest.raises(UsageError, match="3 levels"):
        run(cfg, output_dir=str(tmp_path / "o"))


def test_ladder_unknown_case(tmp_path):
    cfg = write_cfg(tmp_path, {
        "experiment": "ladder", "seed": 1,
        "solver": {"nu": 1.0, "t_final": 0.1, "dt": 1e-3, "shape": [8, 17],
                   "n_paths": 100},
        "options": {"mode": "n", "case": "bogus", "point": [0.5, 0.5],
                    "levels": [100, 1000, 10000]},
    })
    with pytest.raises(UsageError, match="not registered"):
        run(cfg, output_dir=str(tmp_path / "o"))


def test_small_n_ladder_passes(tmp_path):
    cfg = write_cfg(tmp_path, {
        "experiment": "ladder", "seed": 5,
        "solver": {"nu": 1.0, "t_final": 0.1, "dt": 1e-3, "shape": [8, 17],
                   "n_paths": 100},
        "options": {"mode": "n", "case": "scalar_fk_heat_slab",
                    "point": [0.5, 0.5], "t": 0.1, "dt": 1e-3,
                    "levels": [1000, 10000, 100000],
                    "slope_band": [-0.6, -0.4]},
    })
    out = str(tmp_path / "o")
    assert run(cfg, output_dir=out) == 0
    lines = pathlib.Path(out, "estimates.csv").read_text().splitlines()
    assert lines[0] == "mode,level,error,std_error,n,dt"
    assert len(lines) == 4


def test_registry_and_config_listing():
    names = list_experiments().split()
    assert "scalar_fk_heat_slab" in names
    assert set(names) == set(EXPERIMENTS)
    # every committed config names a registered experiment
    cfg_dir = pathlib.Path(__file__).resolve().parents[1] / "configs"
    for f in cfg_dir.glob("*.yaml"):
        cfg = yaml.safe_load(f.read_text())
        assert cfg["experiment"] in EXPERIMENTS, f.name
