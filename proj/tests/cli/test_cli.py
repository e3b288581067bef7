"""Drives the command-line tool end to end."""

import filecmp
import json
import subprocess
import sys
import tempfile
from pathlib import Path

BIN = sys.argv[1]


def run(*args, expect=0):
    proc = subprocess.run([BIN, *args], capture_output=True, text=True)
    assert proc.returncode == expect, (
        f"{args} -> {proc.returncode}\nstdout: {proc.stdout}\nstderr: {proc.stderr}"
    )
    return proc


def main():
    tmp = Path(tempfile.mkdtemp(prefix="merloco_cli_"))

    # Terrain generation is deterministic and reload-stable.
    run("gen-terrain", "--seed", "9", "--mean", "6.0", "--std", "2.0",
        "--increment", "1", "--cols", "16", "--rows", "8",
        "--out", str(tmp / "a.txt"))
    run("gen-terrain", "--seed", "9", "--mean", "6.0", "--std", "2.0",
        "--increment", "1", "--cols", "16", "--rows", "8",
        "--out", str(tmp / "b.txt"))
    assert filecmp.cmp(tmp / "a.txt", tmp / "b.txt", shallow=False)

    # A recipe emits CSV plus a manifest; replay verifies bit-exactness.
    run("sweep-legs", "--out", str(tmp / "legs"), "--jobs", "2")
    manifest = json.loads((tmp / "legs" / "manifest.json").read_text())
    assert manifest["recipe"] == "sweep-legs"
    assert any(f["name"] == "leg_saturation.csv" for f in manifest["files"])
    run("replay", str(tmp / "legs" / "manifest.json"), "--out", str(tmp / "legs2"))
    assert filecmp.cmp(tmp / "legs" / "leg_saturation.csv",
                       tmp / "legs2" / "leg_saturation.csv", shallow=False)

    # Unknown configuration keys exit with the config error code.
    bad = tmp / "bad.json"
    bad.write_text('{"morphology": {"n_legz": 6}}')
    run("--config", str(bad), "sweep-legs", expect=2)

    # SVG emission.
    run("heightfield", "--out", str(tmp / "hf"))
    assert (tmp / "hf" / "height_x.txt").exists()

    # Config-driven run with a c-arc foot and a controller selection.
    cfg = tmp / "cfg.json"
    cfg.write_text(json.dumps({
        "morphology": {"foot": {"kind": "c_arc", "arc_length": 12.0, "width": 3.0}},
        "gait": {"body_amplitude": 0.75},
        "controller": {"kind": "siso", "siso": {"gain": 3.2, "desired_duty": 0.5}},
    }))
    run("--config", str(cfg), "--seeds", "4", "cleg", "--out", str(tmp / "cleg"),
        "--jobs", "2")
    rows = (tmp / "cleg" / "cleg.csv").read_text().strip().splitlines()
    assert rows[0].startswith("rugosity,")
    assert len(rows) == 4

    print("cli: all checks passed")


if __name__ == "__main__":
    main()
