"""Full verification battery at frozen seed and full budgets.

Each test runs one battery criterion end to end and asserts every check row
at its stated tolerance, so ``pytest -v`` prints one pass/fail line per
criterion.  Budgets here are the full ones; nothing is scaled down.
"""

import math
import subprocess
import sys
import time

import pytest

from bridgelab import battery

SEED = 7
_WILSON_Z = 1.959963984540054


def _fmt(result):
    lines = [f"criterion-{result.cid:02d} {result.name}: {result.verdict}"]
    for row in result.rows:
        mark = "ok " if row.passed else "FAIL"
        lines.append(f"  [{mark}] {row.label}: measured={row.measured:.6g} "
                     f"bound={row.bound:.6g}")
    if result.note:
        lines.append(f"  note: {result.note}")
    return "\n".join(lines)


def _run(cid):
    func = battery.CRITERIA[cid - 1]
    start = time.perf_counter()
    result = func(seed=SEED, scale=1.0)
    elapsed = time.perf_counter() - start
    print(_fmt(result))
    print(f"  runtime: {elapsed:.1f}s")
    return result, elapsed


def test_criterion_01_characteristic_routes_agree():
    result, _ = _run(1)
    for row in result.rows:
        tol = 1e-6 if row.label.startswith("generator") else 1e-3
        assert row.measured < tol, _fmt(result)
    assert result.passed, _fmt(result)


def test_criterion_02_drift_matches_exact_bridge():
    result, elapsed = _run(2)
    anchor = result.row("anchor-value")
    assert abs(anchor.measured - 0.85092) <= 1e-5, _fmt(result)
    probes = [r for r in result.rows if r.label.startswith("probe-")]
    assert len(probes) == 9
    for row in probes:
        assert row.measured <= row.bound, _fmt(result)  # gap within 2 se
    assert elapsed < 60.0, f"drift criterion took {elapsed:.1f}s"
    assert result.passed, _fmt(result)


def test_criterion_03_coupling_envelope_holds_and_refines():
    result, _ = _run(3)
    for row in result.rows:
        if row.label.startswith("violations"):
            assert row.measured <= 1e-3, _fmt(result)
        else:
            assert row.measured <= row.bound + 1e-12, _fmt(result)
    assert result.passed, _fmt(result)


def test_criterion_04_gradient_estimate_bounded_by_sinh_ratio():
    result, _ = _run(4)
    large = result.row("large-alpha-coefficient")
    assert abs(large.measured - large.bound) < 1e-6, _fmt(result)
    assert result.passed, _fmt(result)


def test_criterion_05_comparison_orders_coupled_paths():
    result, _ = _run(5)
    assert result.row("ordering-violations").measured <= 1e-3, _fmt(result)
    assert result.passed, _fmt(result)


def test_criterion_06_inner_product_solver_and_covariances():
    result, _ = _run(6)
    ratio = result.row("refinement-ratio")
    assert abs(ratio.measured - 4.0) <= 0.5, _fmt(result)
    value = result.row("indicator-value")
    assert abs(value.measured - 0.38080) <= 2e-4, _fmt(result)
    assert result.passed, _fmt(result)


def test_criterion_07_concentration_attainable_cells():
    result, _ = _run(7)
    floor = _WILSON_Z ** 2 / (100_000 + _WILSON_Z ** 2)
    unattainable = {r.label for r in result.rows
                    if r.label.startswith("tail-") and r.bound < floor}
    assert unattainable == {"tail-t0.9-R1.5", "tail-t0.9-R2"}, _fmt(result)
    for row in result.rows:
        if row.label not in unattainable:
            assert row.passed, _fmt(result)
    for label in sorted(unattainable):
        assert label in result.note, _fmt(result)


def test_criterion_07_concentration_all_cells():
    result, _ = _run(7)
    floor = _WILSON_Z ** 2 / (100_000 + _WILSON_Z ** 2)
    assert result.passed, (
        "the tail grid includes cells whose Gaussian bound lies below the "
        f"zero-count Wilson upper limit z^2/(n+z^2) = {floor:.3g} at budget "
        "100000 (t=0.9: bounds 3.9e-06 at R=1.5 and 2.4e-10 at R=2); no "
        "sampler can certify these cells at this budget, so they fail for "
        "every implementation.  The attainable cells all pass, see the "
        "companion test.\n" + _fmt(result))


def test_criterion_08_stein_bound_constants_and_identities():
    result, elapsed = _run(8)
    rel = result.row("constant-rel-error")
    assert rel.measured < 0.01, _fmt(result)
    eigen = result.row("eigen-relation")
    assert eigen.measured <= 1e-12, _fmt(result)
    identities = [r for r in result.rows if r.label.startswith("identity-")]
    assert len(identities) == 10  # five functionals under two laws
    for row in identities:
        assert abs(row.measured) <= row.bound, _fmt(result)  # 3 se
    assert elapsed < 600.0, f"stein criterion took {elapsed:.1f}s"
    assert result.passed, _fmt(result)


def test_criterion_09_invariant_density_and_ladder():
    result, _ = _run(9)
    assert abs(result.row("eigenvalue").measured - 0.5) <= 1e-6, _fmt(result)
    assert abs(result.row("variance").measured - 0.5) <= 1e-4, _fmt(result)
    assert result.row("ladder-final").measured < 0.02, _fmt(result)
    assert result.row("sign-flip-ks").measured >= 1e-3, _fmt(result)
    assert result.passed, _fmt(result)


def test_criterion_10_contraction_of_endpoint_mixtures():
    result, _ = _run(10)
    halving = result.row("halving-ratio")
    target = math.cosh(1.0) / math.cosh(2.0)
    assert abs(halving.measured - target) <= 1e-5, _fmt(result)
    assert halving.measured == pytest.approx(0.4101543, abs=1e-5)
    assert result.passed, _fmt(result)


def test_criterion_11_projection_matches_simplex_optimization():
    result, _ = _run(11)
    assert result.row("entropic-vs-oracle").measured <= 1e-6, _fmt(result)
    assert result.row("square-vs-oracle").measured <= 1e-6, _fmt(result)
    assert result.row("endpoint-residual").measured <= 1e-8, _fmt(result)
    assert result.row("perturbation-detector").measured >= 1e-4, _fmt(result)
    assert result.passed, _fmt(result)


def test_criterion_12_verification_is_worker_count_invariant():
    # the full battery, at reduced budgets, must produce byte-identical
    # machine output and the same exit code for any worker count
    def run(workers):
        return subprocess.run(
            [sys.executable, "-m", "bridgelab.cli", "verify-all",
             "--seed", str(SEED), "--scale", "0.05",
             "--workers", str(workers)],
            capture_output=True, timeout=300)

    one = run(1)
    eight = run(8)
    assert one.stdout == eight.stdout
    assert one.returncode == eight.returncode
    assert len(one.stdout) > 0
    # reduced budgets keep the structurally unattainable tail cells failing,
    # so the battery reports failure; what matters here is reproducibility
    assert one.returncode in (0, 1)
