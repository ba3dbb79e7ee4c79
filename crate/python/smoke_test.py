"""Smoke test for the crpfb_py extension.

Uses an installed crpfb_py if there is one, otherwise builds the cdylib with
cargo and imports it from a temporary directory.
"""

import importlib
import json
import math
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[1]


def load():
    try:
        return importlib.import_module("crpfb_py")
    except ImportError:
        pass
    subprocess.run(["cargo", "build", "-p", "crpfb-py"], cwd=ROOT, check=True)
    lib = ROOT / "target" / "debug" / "libcrpfb_py.so"
    tmp = pathlib.Path(tempfile.mkdtemp())
    shutil.copy(lib, tmp / "crpfb_py.so")
    sys.path.insert(0, str(tmp))
    return importlib.import_module("crpfb_py")


def main():
    m = load()

    sc = json.loads(m.Scenario.s1(0.5).to_json())
    sc["bank"]["m_filters"] = 200
    sc = m.Scenario.from_json(json.dumps(sc))
    assert sc.m_filters == 200 and sc.n_samples == 256

    noise = m.sample_noise(20000, 3, shape=1.0)
    var = sum(abs(w) ** 2 for w in noise) / len(noise)
    assert abs(var - 1.0) < 0.05, var

    z = m.synthesize(sc, seed=1, snr_db=10.0)
    res = m.run_bank(sc, z, seed=2)
    energy = sum(abs(v) ** 2 for v in z)
    assert abs(res.metric + res.cum_cost - energy) < 1e-9 * energy
    assert len(res.estimates) == 8
    err = m.rmse(sc, res.estimates, seed=1)
    assert err < 5.0, err

    cal = m.calibrate(sc, 0.05, 150, 100, 4)
    assert len(cal.metrics) == 150 and cal.v_t_gev > 0
    assert m.detect(sc, z, cal.v_t_gev, 2).declared

    g = m.GevParams(0.1, 10.0, 2.0)
    assert abs(g.threshold(1 - math.exp(-1)) - 10.0) < 1e-12
    assert abs(g.cdf(g.quantile(0.9)) - 0.9) < 1e-12

    try:
        m.GevParams(0.1, 10.0, -1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative scale accepted")

    print("crpfb_py", m.__version__, "ok:", res, cal.v_t_gev)


if __name__ == "__main__":
    main()
