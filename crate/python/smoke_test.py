"""Smoke test for the qwork_py extension.

Build first with `cargo build -p qwork-py`, then run
`python3 python/smoke_test.py`. The shared library is looked up at
$QWORK_PY_LIB or target/{debug,release}/libqwork_py.so.
"""

import cmath
import importlib.util
import math
import os
import shutil
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def load_module():
    candidates = [os.environ.get("QWORK_PY_LIB")] + [
        os.path.join(ROOT, "target", profile, "libqwork_py.so") for profile in ("debug", "release")
    ]
    lib = next((c for c in candidates if c and os.path.exists(c)), None)
    if lib is None:
        sys.exit("libqwork_py.so not found; run `cargo build -p qwork-py` first")
    tmp = tempfile.mkdtemp()
    target = os.path.join(tmp, "qwork_py.so")
    shutil.copy(lib, target)
    spec = importlib.util.spec_from_file_location("qwork_py", target)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def check(name, ok, detail=""):
    print(f"{'ok  ' if ok else 'FAIL'} {name} {detail}")
    return ok


def main():
    q = load_module()
    s = q.ProtocolSchedule.figure_default()
    a = q.ApparatusSpec.figure_default()
    results = []

    linear = q.SpectralSystem([[0.0, 1.0], [0.0, -1.0]])
    width = a.sigma_width(s.t_m, s.t_p)
    centers = linear.work_centers(s)
    results.append(check("centers", all(abs(c - e) < 1e-9 for c, e in zip(centers, [1.0, -1.0])), str(centers)))
    grid = q.WorkGrid.covering(centers, width)
    d = q.analytic_distribution(linear, [0.5, 0.5], s, a, s.t_m, grid)
    results.append(check("analytic mass", abs(d.mass() - 1.0) < 1e-8, f"{d.mass():.12f}"))
    results.append(check("analytic mean", abs(d.mean()) < 1e-9, f"{d.mean():.2e}"))

    beta = 1.0
    df = q.free_energy_change(linear, beta, s)
    jar = q.modified_jarzynski(linear, beta, s, a)
    th = q.thermal_distribution(linear, beta, s, a, s.t_m, q.WorkGrid.covering(centers, width, 8.0 + beta * width, 8193))
    quad = sum(
        0.5 * (w1 - w0) * (p0 * math.exp(-beta * w0) + p1 * math.exp(-beta * w1))
        for w0, w1, p0, p1 in zip(th.work, th.work[1:], th.density, th.density[1:])
    )
    results.append(check("jarzynski", abs(quad / jar - 1.0) < 1e-6, f"closed {jar:.10f} quadrature {quad:.10f}"))
    lhs, rhs = q.second_law_bound(linear, beta, s, a)
    results.append(check("second law", lhs >= rhs, f"{lhs:.6f} >= {rhs:.6f} (dF = {df:.6f})"))
    ratio = q.crooks_ratio(linear, beta, s.t_m, s, a, 0.5)
    results.append(check("crooks finite", math.isfinite(ratio) and ratio > 0, f"{ratio:.6f}"))

    h = 1 / math.sqrt(2)
    qubit = q.DrivenQubit(0.0)
    small = q.WorkGrid.covering([-1.0, 1.0], width, 8.0, 1025)
    num = q.numeric_distribution(qubit, s, a, small, alpha=h, beta=h, momentum_points=1025)
    closed = q.analytic_distribution(linear, [0.5, 0.5], s, a, s.t_m, small)
    gap = max(abs(x - y) for x, y in zip(num.density, closed.density))
    results.append(check("cross-engine theta = 0", gap < 1e-4, f"L_inf {gap:.2e}"))

    tilted = q.DrivenQubit(math.pi / 2)
    atoms = q.two_point_distribution(tilted, [[0.5, 0.0], [0.0, 0.5]], s)
    total = sum(p for _, p in atoms)
    results.append(check("two-point atoms", abs(total - 1.0) < 1e-12, str([(round(w, 3), round(p, 4)) for w, p in atoms])))

    ledger = q.qubit_ledger(tilted, s, a, alpha=h, beta=h * cmath.exp(0.3j), momentum_points=1025)
    closes = abs(ledger["dW_povm"] - (ledger["w_dist"] - ledger["w_free"])) < 1e-12
    results.append(check("ledger", closes, f"dW_int {ledger['dW_int']:.4f} dW_povm {ledger['dW_povm']:.4f} dQ_int {ledger['dQ_int']:.4f}"))

    try:
        q.ProtocolSchedule(0.0, 3.0, 2.0, 4.0, 0.2)
        results.append(check("bad schedule rejected", False))
    except ValueError as e:
        results.append(check("bad schedule rejected", True, str(e)))

    if not all(results):
        sys.exit(1)
    print("all smoke checks passed")


if __name__ == "__main__":
    main()
