#!/usr/bin/env python3
"""Smoke test for the portune_py extension module.

Builds are not triggered from here; compile the cdylib first:

    cargo build -p portune-py            # or --release

then run:

    python3 python/smoke_test.py
"""

import os
import shutil
import sys
import tempfile
import textwrap

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def load_module():
    candidates = [
        os.path.join(REPO_ROOT, "target", profile, "libportune_py.so")
        for profile in ("release", "debug")
    ]
    built = next((p for p in candidates if os.path.exists(p)), None)
    if built is None:
        sys.exit("libportune_py.so not found; run `cargo build -p portune-py` first")
    stage = tempfile.mkdtemp(prefix="portune-py-")
    shutil.copy(built, os.path.join(stage, "portune_py.so"))
    sys.path.insert(0, stage)
    import portune_py

    return portune_py


def approx(a, b, rel=1e-9):
    return abs(a - b) <= rel * max(abs(a), abs(b), 1.0)


def main():
    pt = load_module()

    # Planted synthetic dataset: two specialists, everything else 4x slower.
    ds = pt.Dataset.synthetic(
        devices=2,
        variants=8,
        specialists=2,
        gap=4.0,
        seed=7,
        inputs=[(256, 256, 256), (512, 512, 512), (1024, 1024, 1024), (4096, 4096, 4096)],
        gap_spread=0.2,
    )
    assert ds.num_environments == 8, ds
    assert ds.num_variants == 8, ds
    matrix = ds.matrix()
    assert matrix.num_environments == 8 and matrix.num_variants == 8

    result = pt.tune(matrix, "exhaustive", kappa=2, seed=0)
    assert approx(result.cost, 1.0), f"planted optimum not found: {result}"
    assert len(result.chosen) == 2
    assert len(result.chosen_params[0]) == ds.param_arity

    report = pt.evaluate(matrix, result)
    assert approx(report.geomean, result.cost, rel=1e-12)
    assert report.cdf()[-1][1] == 1.0
    assert len(report.per_env()) == 8

    # Dispatch covers every tuned environment and rejects unseen ones.
    for device, (m, n, k) in ds.environments():
        variant = result.dispatch(device, m, n, k)
        assert variant in result.chosen
    try:
        result.dispatch("unknown-device", 1, 1, 1)
    except ValueError:
        pass
    else:
        raise AssertionError("dispatch must reject unseen environments")

    # CSV ingestion plus deterministic stochastic selection.
    csv_text = textwrap.dedent(
        """\
        device,m,n,k,params,runtime_ms
        Vega,512,1024,256,0;1;32;2;8;16;128;16;8;64;0;0;1;0;8;1,2.030
        Vega,512,1024,256,0;1;16;2;8;8;128;8;8;128;1;0;1;1;1;1,1.637
        Quadro,512,1024,256,0;1;32;2;8;16;128;16;8;64;0;0;1;0;8;1,0.8
        Quadro,512,1024,256,0;1;16;2;8;8;128;8;8;128;1;0;1;1;1;1,0.4
        """
    )
    with tempfile.NamedTemporaryFile("w", suffix=".csv", delete=False) as f:
        f.write(csv_text)
        csv_path = f.name
    bench = pt.Dataset.from_csv(csv_path)
    assert bench.num_environments == 2
    bm = bench.matrix()
    first = pt.tune(bm, "stochastic", kappa=1, seed=42)
    second = pt.tune(bm, "stochastic", kappa=1, seed=42)
    assert first.chosen == second.chosen and first.cost == second.cost
    assert first.winners() == second.winners()

    # Sweep shape: more variants never hurt.
    reports = pt.divergence_sweep(matrix, "stochastic", kappas=[1, 2], runs=3, seed=1)
    assert reports[1].geomean <= reports[0].geomean + 1e-9
    assert approx(reports[1].geomean, 1.0)

    # Canonical save/load round trip.
    with tempfile.NamedTemporaryFile(suffix=".json", delete=False) as f:
        canonical_path = f.name
    ds.save(canonical_path)
    again = pt.Dataset.from_canonical(canonical_path)
    assert again.num_records == ds.num_records
    assert again.environments() == ds.environments()

    print("portune_py smoke test passed")


if __name__ == "__main__":
    main()
