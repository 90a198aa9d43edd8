"""Build the extension module, import it and run a few end-to-end checks.

    python3 python/smoke_test.py
"""

import importlib
import math
import os
import shutil
import subprocess
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def build():
    subprocess.run(
        ["cargo", "build", "--release", "--offline", "-p", "minding-lab-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    target = os.environ.get("CARGO_TARGET_DIR", os.path.join(ROOT, "target"))
    for name in ("libminding_lab_py.so", "libminding_lab_py.dylib"):
        lib = os.path.join(target, "release", name)
        if os.path.exists(lib):
            dest = tempfile.mkdtemp()
            shutil.copy(lib, os.path.join(dest, "minding_lab_py.so"))
            return dest
    sys.exit("extension library not found")


def main():
    sys.path.insert(0, build())
    m = importlib.import_module("minding_lab_py")

    hp = m.catalog_chart("half_plane_pseudosphere", 65)
    h2 = hp["grid"].h ** 2
    assert m.discrete_liouville_residual(hp["u"]).max_abs_interior() <= 10 * h2
    assert m.liouville_weak_residual(hp["u"])["max_abs"] <= 10 * h2
    assert m.liouville_weak_residual(hp["u"], seed=3)["test_count"] == 75
    assert m.bootstrap_equivalence(hp["u"]) <= 20 * h2

    u, iterations, _ = m.solve_liouville(hp["grid"], m.boundary_trace(hp["u"]))
    err = max(abs(a - b) for a, b in zip(u.values(), hp["u"].values()))
    assert err <= 20 * h2 and iterations <= 8, (err, iterations)

    dev = m.develop(hp["u"])
    assert dev["pullback"] <= 50 * h2
    assert all(math.hypot(*w) < 1 for w in dev["phi"])

    theta = m.one_soliton_angle(65)
    s = m.synthesize(theta)
    assert s["corollary"]["max"] <= 50 * theta.grid.h ** 2
    assert len(s["f"]) == 65 * 65

    k = m.gauss_curvature_isothermic(m.ScalarField(hp["grid"], [v for v in hp["h"].values()]))
    assert abs(k.at(30, 30) + 1) < 1e-3

    try:
        m.develop(m.ScalarField(m.Grid(0, 1, 0, 1, 17, 17), [0.0] * 289))
    except m.MindingError as e:
        assert "not developable" in str(e)
    else:
        raise AssertionError("u = 0 was developed")

    with tempfile.TemporaryDirectory() as out:
        code, report = m.run_command("verify-minding", source="half_plane_pseudosphere", n=65, out=out)
        assert code == 0 and report["passed"], report
        code, report = m.run_command("verify-minding", source="sphere_patch", n=33, out=out)
        assert code == 3 and report["failed_stage"] == "curvature"

    print("python smoke test: ok")


if __name__ == "__main__":
    main()
