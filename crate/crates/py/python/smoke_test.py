"""Smoke test for the gcf_lab extension.

Run after `pip install -e crates/py --no-build-isolation`, or point
GCF_LAB_PATH at a directory holding a built gcf_lab module.
"""

import json
import math
import os
import sys

if os.environ.get("GCF_LAB_PATH"):
    sys.path.insert(0, os.environ["GCF_LAB_PATH"])
# an in-place build drops the module next to Cargo.toml
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import gcf_lab


def check(cond, what):
    if not cond:
        raise SystemExit(f"FAIL: {what}")
    print(f"ok: {what}")


def main():
    rho = gcf_lab.sphere_radius(1.0, 2, 1.0, 0.1)
    check(abs(rho - 0.887904) < 1e-6, f"sphere radius {rho:.6f}")

    u0 = gcf_lab.build_preset(json.dumps(
        {"preset": "hemisphere", "n": 2, "h": 0.02, "r_max": 0.5, "radius": 1.0}))
    boundary = json.dumps({"kind": "shrinking_sphere", "center_height": 1.0, "radius": 1.0})
    trace = gcf_lab.run_flow(u0, 1.0, 0.1, [0.05], boundary)
    snaps = json.loads(trace)["trace"]["snapshots"]
    implied = 1.0 - snaps[-1]["u"]["values"][0]
    check(len(snaps) == 3 and abs(implied - rho) < 1e-3, f"flow matches sphere (err {abs(implied - rho):.2e})")

    csv = gcf_lab.trace_csv(trace)
    check(csv.splitlines()[0] == "t,x,u,K,H,lambda_min,upsilon", "csv header")

    reports = json.loads(gcf_lab.monitor(trace))
    check(all(r["margin"] >= -1e-3 * abs(r["rhs"]) for r in reports), f"{len(reports)} monitor margins")

    heights, slopes, wall, residual = gcf_lab.soliton(2, 1.0, 1.0)
    check(wall is not None and abs(wall - math.sqrt(2.0)) < 1e-3 and residual < 1e-8, f"soliton wall {wall}")

    k, ups, speed = gcf_lab.barrier_margins(2, 1.0, 0.5, 1e-3, 5.0, 0.05)
    check(min(k, ups, speed) > 0, "barrier supersolution margins")

    try:
        gcf_lab.barrier_value(2, 1.0, 0.5, 0.3, 5.0, 0.05, 4.5, 0.0)
    except ValueError as e:
        check("R0/2" in str(e), "smallness violation raises ValueError")
    else:
        raise SystemExit("FAIL: expected ValueError")

    bad = json.dumps({"dim": 1, "domain": {"kind": "interval", "h": 0.1, "extent": [-1.0, 1.0]},
                      "values": [-(x / 10 - 1) ** 2 for x in range(21)], "height_cap": None})
    try:
        gcf_lab.run_flow(bad, 1.0, 0.01)
    except RuntimeError as e:
        check("positive semidefinite" in str(e), "non-convex data raises RuntimeError")
    else:
        raise SystemExit("FAIL: expected RuntimeError")

    arc = gcf_lab.build_preset(json.dumps({"preset": "circle-arc", "h": 0.02, "radius": 1.0, "cap": 100.0}))
    rep = json.loads(gcf_lab.doubling_suite(arc, json.dumps({"j_list": [2, 4], "k": 256})))
    check(rep["monotonicity_violations"] == 0, "doubling suite ordering")
    print("smoke test passed")


if __name__ == "__main__":
    main()
