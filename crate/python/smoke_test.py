"""Smoke test for the facerig_py extension.

Build and install first, e.g. ``maturin develop -m crates/python/Cargo.toml
--features extension-module`` or ``pip install crates/python``.
"""

import json
import sys
import tempfile
from pathlib import Path

import facerig_py as fr


def main() -> int:
    template = fr.procedural_template(grid=8)
    assert template.validate() == [], template.validate()
    n = template.shape_count

    # weights recovered from a synthesized expression
    w = [0.0] * n
    w[0], w[5] = 0.6, 0.3
    target = template.synthesize(w)
    fit = fr.solve_weights(template, target)
    assert fit["residual"] < 1e-6, fit
    assert abs(fit["weights"][0] - 0.6) < 1e-3

    # personalization reduces error against the subject's own scans
    scans, truth = fr.synth_subject(template, seed=3, warps=3, amplitude=0.04)
    base = template.with_neutral(scans.neutral)
    rig, trace = fr.personalize(template, scans, rounds=2)
    assert all(b <= a + 1e-9 * abs(a) + 1e-12 for a, b in zip(trace, trace[1:])), trace
    before = sum(fr.solve_weights(base, s)["residual"] for s in scans.expressions)
    after = sum(fr.solve_weights(rig, s)["residual"] for s in scans.expressions)
    assert after < before, (before, after)

    # influence maps split by sign
    width, height, compress, stretch = fr.influence_map(scans.neutral, scans.expressions[0], 32)
    assert len(compress) == width * height
    assert all(c == 0.0 or s == 0.0 for c, s in zip(compress, stretch))

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        rig.save(tmp / "rig.json")
        again = fr.Rig.load(tmp / "rig.json")
        assert again.shape(0) == rig.shape(0)

        files = fr.export_bundle(rig, tmp / "bundle", resolution=16)
        assert "bundle.json" not in files and "geometry.bin" in files
        loaded = fr.import_bundle(tmp / "bundle")
        assert loaded.shape(n - 1) == rig.shape(n - 1)

        try:
            fr.Rig.load(tmp / "missing.json")
        except fr.FacerigError:
            pass
        else:
            raise AssertionError("missing file should raise")

        summary = json.loads(fr.run_demo(tmp / "demo", seed=2, grid=8, resolution=32))
        assert len(summary["subjects"]) == 2

    print("facerig_py smoke test: ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
