import json
import os

import numpy as np
import pytest
from PIL import Image

import oracles
from tnvault.cli import main
from tnvault.io import read_dt, read_tnc, write_dt
from tnvault.synthetic import spectral_image


@pytest.fixture
def cube(tmp_path, rng):
    p = tmp_path / "in.dt"
    write_dt(p, rng.standard_normal((6, 7, 5)))
    return p


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_decompose_tt_writes_three_cores(tmp_path, cube, capsys):
    out = tmp_path / "out"
    code, text, _ = run(capsys, "decompose", "--format", "tt", "--eps", 0.1, "--delta", 0.05,
                        "--seed", 7, cube, "-o", out)
    assert code == 0 and "format=tt" in text
    cores = sorted((out / "cores").glob("*.tnc"))
    assert [c.name for c in cores] == ["core_1.tnc", "core_2.tnc", "core_3.tnc"]
    arr, meta = read_tnc(cores[1])
    assert meta["format"] == "tt" and meta["core_index"] == 1
    assert meta["mode_sizes"] == [6, 7, 5] and arr.shape == tuple(meta["shape"])
    report = json.loads((out / "report.json").read_text())
    assert report["seed"] == 7 and report["delta"] == 0.05
    assert report["decompose_seconds"] >= 0 and report["reconstruct_seconds"] >= 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["fragments"]) == 3


def test_round_trip_and_verify(tmp_path, cube, capsys):
    out = tmp_path / "out"
    assert run(capsys, "decompose", "--format", "tt", "--eps", 0.1, "--seed", 1, cube, "-o", out)[0] == 0
    code, text, _ = run(capsys, "reconstruct", out / "manifest.json", "-o", tmp_path / "r.dt",
                        "--verify", cube)
    assert code == 0
    err = float(text.split("relative_error=")[1])
    want = oracles.l2_dissimilarity([read_dt(cube)], [read_dt(tmp_path / "r.dt")])
    assert err <= 0.1
    assert abs(err - want) <= 1e-14


@pytest.mark.parametrize("fmt,extra", [("tr", ["--eps", "0.2"]), ("tucker", ["--ranks", "3,3,3"]),
                                       ("ht", ["--ranks", "3"]), ("tucker", ["--eps", "0.2"])])
def test_other_formats_round_trip(tmp_path, cube, capsys, fmt, extra):
    out = tmp_path / "out"
    assert run(capsys, "decompose", "--format", fmt, *extra, "--seed", 2, "--permute-modes", cube, "-o", out)[0] == 0
    assert run(capsys, "reconstruct", out / "manifest.json")[0] == 0
    assert read_dt(out / "reconstruction.dt").shape == (6, 7, 5)


def test_eps_out_of_range_is_usage_error(cube, capsys, tmp_path):
    code, _, err = run(capsys, "decompose", "--format", "tt", "--eps", 1.5, cube, "-o", tmp_path)
    assert code == 2 and "usage error" in err


def test_argparse_errors_exit_2(capsys):
    assert run(capsys, "decompose")[0] == 2
    assert run(capsys, "bench", "nope")[0] == 2


def test_missing_and_corrupt_fragments(tmp_path, cube, capsys):
    out = tmp_path / "out"
    run(capsys, "decompose", "--format", "tt", "--eps", 0.1, "--seed", 1, cube, "-o", out)
    frags = sorted((out / "fragments").glob("*.dt"))
    blob = bytearray(frags[0].read_bytes())
    blob[-1] ^= 0xFF
    frags[0].write_bytes(bytes(blob))
    code, _, err = run(capsys, "reconstruct", out / "manifest.json")
    assert code == 4 and "HashMismatch" in err
    frags[0].unlink()
    code, _, err = run(capsys, "reconstruct", out / "manifest.json")
    assert code == 3 and frags[0].stem in err


def test_unreadable_input(tmp_path, capsys):
    code, _, _ = run(capsys, "decompose", "--format", "tt", "--eps", 0.1, tmp_path / "nope.dt", "-o", tmp_path)
    assert code == 5


def test_seed_from_environment_and_config(tmp_path, cube, capsys, monkeypatch):
    monkeypatch.setenv("TNVAULT_SEED", "123")
    run(capsys, "decompose", "--format", "tt", "--eps", 0.1, cube, "-o", tmp_path / "a")
    assert json.loads((tmp_path / "a" / "report.json").read_text())["seed"] == 123
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# settings\nseed = 9\nformat = tr\neps = 0.2\n")
    run(capsys, "--config", cfg, "decompose", cube, "-o", tmp_path / "b")
    rep = json.loads((tmp_path / "b" / "report.json").read_text())
    assert rep["seed"] == 9 and rep["format"] == "tr"
    run(capsys, "--config", cfg, "decompose", "--seed", 4, cube, "-o", tmp_path / "c")
    assert json.loads((tmp_path / "c" / "report.json").read_text())["seed"] == 4


def test_same_seed_same_cores(tmp_path, cube, capsys):
    for d in ("a", "b"):
        run(capsys, "decompose", "--format", "tt", "--eps", 0.1, "--seed", 5, cube, "-o", tmp_path / d)
    for name in ("core_1.tnc", "core_2.tnc", "core_3.tnc"):
        assert (tmp_path / "a" / "cores" / name).read_bytes() == (tmp_path / "b" / "cores" / name).read_bytes()


def test_tucker_on_image_table_ranks(tmp_path, capsys):
    img = spectral_image(seed=3)
    p = tmp_path / "face.ppm"
    Image.fromarray(np.clip(np.rint(img), 0, 255).astype(np.uint8), "RGB").save(p)
    out = tmp_path / "out"
    code, _, _ = run(capsys, "decompose", "--format", "tucker", "--ranks", "350,3,350", "--seed", 1, p, "-o", out)
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert abs(rep["compression_ratio"] - 0.729) <= 1e-3
    assert rep["axis_perm"] == [0, 2, 1]
    run(capsys, "reconstruct", out / "manifest.json")
    assert read_dt(out / "reconstruction.dt").shape == (600, 600, 3)


def test_metrics_commands(tmp_path, rng, capsys):
    a, b = tmp_path / "a.dt", tmp_path / "b.dt"
    x = rng.standard_normal((10, 10))
    write_dt(a, x)
    write_dt(b, x + rng.standard_normal((10, 10)))
    code, text, _ = run(capsys, "metrics", "nmi", a, b, "--bins", 256)
    val = float(text.strip().splitlines()[1].split(",")[2])
    assert code == 0 and 0.0 <= val <= 1.0

    g1, g2 = tmp_path / "g1.dt", tmp_path / "g2.dt"
    write_dt(g1, rng.standard_normal((2, 5, 3)))
    write_dt(g2, rng.standard_normal((2, 5, 3)))
    code, text, _ = run(capsys, "metrics", "pearson", g1, g2, "--axis", 3)
    lines = text.strip().splitlines()
    assert code == 0 and lines[0] == "metric,index,value" and len(lines) == 4

    (tmp_path / "o").mkdir()
    (tmp_path / "r").mkdir()
    write_dt(tmp_path / "o" / "1.dt", x)
    write_dt(tmp_path / "r" / "1.dt", 2 * x)
    code, text, _ = run(capsys, "metrics", "l2", "--originals", tmp_path / "o", "--recons", tmp_path / "r", "--json")
    assert code == 0 and json.loads(text)["values"] == [1.0]

    code, text, _ = run(capsys, "metrics", "histogram", a, "--bins", 4, "-o", tmp_path / "m")
    assert code == 0 and (tmp_path / "m" / "histogram.csv").exists()
    assert run(capsys, "metrics", "nmi", a)[0] == 2
    assert run(capsys, "metrics", "pearson", g1, g2, "--axis", 4)[0] == 2


def test_metrics_on_decomposition_outputs(tmp_path, cube, capsys):
    run(capsys, "decompose", "--format", "tt", "--eps", 0.1, "--seed", 1, cube, "-o", tmp_path / "a")
    code, text, _ = run(capsys, "metrics", "cr", tmp_path / "a" / "manifest.json", "--json")
    rep = json.loads((tmp_path / "a" / "report.json").read_text())
    assert code == 0 and abs(json.loads(text)["values"][0] - rep["compression_ratio"]) <= 1e-15
    code, text, _ = run(capsys, "metrics", "profile", tmp_path / "a" / "cores" / "core_2.tnc")
    assert code == 0 and len(text.strip().splitlines()) == 1 + 7


def test_bench_superdiagonal(tmp_path, capsys):
    code, text, _ = run(capsys, "bench", "superdiagonal", "--seed", 0, "-o", tmp_path)
    assert code == 0
    assert text.splitlines()[0] == "variant,padded,shape,ranks,rel_error,exact"
    assert all(line.endswith(",true") for line in text.strip().splitlines()[1:])
    assert (tmp_path / "superdiagonal_histograms.csv").exists()


def test_bench_distortion_curve_byte_stable(tmp_path, capsys):
    run(capsys, "bench", "distortion-curve", "--seed", 1, "-o", tmp_path / "a")
    run(capsys, "bench", "distortion-curve", "--seed", 1, "-o", tmp_path / "b")
    a = (tmp_path / "a" / "distortion-curve_curve.csv").read_bytes()
    assert a == (tmp_path / "b" / "distortion-curve_curve.csv").read_bytes()


def test_module_entry_point():
    import subprocess
    import sys
    r = subprocess.run([sys.executable, "-m", "tnvault", "--help"], capture_output=True, text=True,
                       env=dict(os.environ))
    assert r.returncode == 0 and "decompose" in r.stdout
