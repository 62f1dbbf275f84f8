import json

import numpy as np
import pytest

from pnpcine import io as cio
from pnpcine.cli import main
from pnpcine.denoiser import ConvLayer3D, DenoiserNet, save_weights


def run_cli(*argv):
    return main(list(argv))


@pytest.fixture
def workspace(tmp_path):
    return tmp_path


def test_phantom_and_mask_commands(workspace, capsys):
    out = workspace / "x.cplx"
    assert run_cli("phantom", "--nx", "16", "--ny", "16", "--nt", "4", "--out", str(out)) == 0
    img = cio.read_image(out)
    assert img.shape == (4, 16, 16)

    m = workspace / "m.cplx"
    png = workspace / "m.png"
    assert run_cli("mask", "--nkx", "16", "--nky", "16", "--nt", "4", "--R", "2",
                   "--out", str(m), "--png", str(png)) == 0
    assert png.stat().st_size > 0
    assert "R_nominal" in capsys.readouterr().out


def test_simulate_recon_eval_pipeline(workspace, capsys):
    x = workspace / "x.cplx"
    m = workspace / "m.cplx"
    maps = workspace / "maps.cplx"
    k = workspace / "k.cplx"
    r = workspace / "r.cplx"
    run_cli("phantom", "--nx", "16", "--ny", "16", "--nt", "4", "--out", str(x))
    run_cli("mask", "--nkx", "16", "--nky", "16", "--nt", "4", "--R", "1",
            "--calib-lines", "0", "--out", str(m))
    assert run_cli("simulate", "--image", str(x), "--mask", str(m), "--nc", "2",
                   "--save-maps", str(maps), "--out", str(k)) == 0
    assert run_cli("recon", "--kspace", str(k), "--mask", str(m), "--maps", str(maps),
                   "--solver", "admm-pnp", "--denoiser", "identity", "--iters", "3",
                   "--cg-iters", "20", "--cg-tol", "1e-12",
                   "--ref", str(x), "--out", str(r),
                   "--trace", str(workspace / "trace.json")) == 0
    line = capsys.readouterr().out
    rsnr_db = float(line.rsplit("rSNR=", 1)[1].split()[0])
    assert rsnr_db >= 100.0
    trace = json.loads((workspace / "trace.json").read_text())
    assert trace["solver"] == "admm-pnp" and trace["iterations"] == 3

    assert run_cli("eval", str(x), str(x)) == 0
    assert capsys.readouterr().out.strip() == "300.000000"


def test_eval_shape_mismatch_exit_code(workspace):
    a, b = workspace / "a.cplx", workspace / "b.cplx"
    run_cli("phantom", "--nx", "16", "--ny", "16", "--nt", "4", "--out", str(a))
    run_cli("phantom", "--nx", "16", "--ny", "16", "--nt", "5", "--out", str(b))
    assert run_cli("eval", str(a), str(b)) == 8


def test_unknown_command_and_missing_args_exit_2():
    with pytest.raises(SystemExit) as exc:
        run_cli("teleport")
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        run_cli("phantom")  # --out missing
    assert exc.value.code == 2


def test_missing_input_file_exit_10(workspace):
    assert run_cli("eval", str(workspace / "no.cplx"), str(workspace / "no.cplx")) == 10


def test_certify_ok_and_violation_exit_codes(workspace, capsys):
    good = workspace / "good.pnpd"
    k = np.zeros((2, 2, 3, 3, 3), dtype=np.float32)
    k[0, 0, 1, 1, 1] = 0.5
    k[1, 1, 1, 1, 1] = 0.5
    save_weights(DenoiserNet((ConvLayer3D(k, np.zeros(2, np.float32), 1.0),)), good)
    assert run_cli("certify", "--weights", str(good)) == 0
    assert "ok" in capsys.readouterr().out

    bad = workspace / "bad.pnpd"
    save_weights(DenoiserNet((ConvLayer3D(3.0 * k, np.zeros(2, np.float32), 1.0),)), bad)
    assert run_cli("certify", "--weights", str(bad)) == 6


def test_denoise_command_zero_net_identity(workspace):
    w = workspace / "zero.pnpd"
    save_weights(
        DenoiserNet((ConvLayer3D(np.zeros((2, 2, 3, 3, 3), np.float32),
                                 np.zeros(2, np.float32), 1.0),), residual_mode=True),
        w,
    )
    x = workspace / "x.cplx"
    y = workspace / "y.cplx"
    run_cli("phantom", "--nx", "16", "--ny", "16", "--nt", "4", "--out", str(x))
    assert run_cli("denoise", "--weights", str(w), "--in", str(x), "--out", str(y)) == 0
    assert np.array_equal(cio.read_image(y).data, cio.read_image(x).data)


def test_config_file_provides_defaults_flags_override(workspace):
    cfg = workspace / "phantom.json"
    cfg.write_text(json.dumps({"nx": 16, "ny": 16, "nt": 4, "out": str(workspace / "c.cplx")}))
    assert run_cli("phantom", "--config", str(cfg)) == 0
    assert cio.read_image(workspace / "c.cplx").shape == (4, 16, 16)
    # explicit flag wins over the config value
    assert run_cli("phantom", "--config", str(cfg), "--nt", "6",
                   "--out", str(workspace / "d.cplx")) == 0
    assert cio.read_image(workspace / "d.cplx").shape == (6, 16, 16)
    # unknown keys in the config are a parameter error
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run_cli("phantom", "--config", str(cfg), "--out", str(workspace / "e.cplx")) == 4


def test_run_command_full_experiment(workspace, capsys):
    cfg = {
        "phantom": {"nx": 16, "ny": 16, "nt": 4, "n_ellipses": 4, "motion_amplitude": 0.1,
                    "seed": 0},
        "snr_db": 300.0,
        "nc": 2,
        "accelerations": [1.0],
        "calib_lines": 0,
        "maps": "true",
        "solvers": [
            {"name": "admm-pnp", "label": "identity",
             "params": {"denoiser": "identity", "outer_iters": 3, "cg_iters": 20,
                        "cg_tol": 1e-12}}
        ],
        "seed": 0,
    }
    cfile = workspace / "exp.json"
    cfile.write_text(json.dumps(cfg))
    outdir = workspace / "expout"
    assert run_cli("run", "--config", str(cfile), "--outdir", str(outdir)) == 0
    report = json.loads((outdir / "report.json").read_text())
    assert report["table"][0]["rsnr_db"] >= 100.0
    assert "identity" in capsys.readouterr().out
