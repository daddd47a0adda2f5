#!/usr/bin/env python3
# Copyright 2026 The artrecon Authors
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
"""End-to-end checks of the art command line tool.

usage: cli_smoke.py ART_BINARY REREAD_SCRIPT
"""
import json
import pathlib
import subprocess
import sys
import tempfile


def run(*args, expect=0):
    p = subprocess.run([str(a) for a in args], capture_output=True, text=True)
    if p.returncode != expect:
        sys.exit(f"{' '.join(map(str, args))}: exit {p.returncode}, expected {expect}\n{p.stdout}{p.stderr}")
    return p.stdout + p.stderr


def tree(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def main():
    art, reread = pathlib.Path(sys.argv[1]), sys.argv[2]
    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)

        # gen: deterministic folders, resolved config, readable summary line.
        out = run(art, "gen", "--template", "drawer-chest", "--scenes", "8", "--seed", "7", "--out", tmp / "a")
        assert "8 scenes" in out and "seed 7" in out, out
        run(art, "gen", "--template", "drawer-chest", "--scenes", "8", "--seed", "7", "--out", tmp / "b")
        a, b = tree(tmp / "a"), tree(tmp / "b")
        assert a == b, "regenerated dataset differs"
        assert len([k for k in a if k.endswith("manifest.json")]) == 8
        assert (tmp / "a" / "config.json").exists()

        # usage and configuration errors exit 2, data errors exit 3
        run(art, "gen", "--template", "no-such", "--scenes", "1", "--out", tmp / "x", expect=2)
        run(art, "gen", "--out", tmp / "x", "--bogus", expect=2)
        (tmp / "bad.json").write_text(json.dumps({"train": {"not_a_key": 1}}))
        run(art, "train", "--config", tmp / "bad.json", "--data", tmp / "a", "--out", tmp / "x", expect=2)
        run(art, "train", "--data", tmp / "missing", "--out", tmp / "x", expect=3)

        # config values apply and flags override them
        (tmp / "cfg.json").write_text(json.dumps({"gen": {"template": "laptop", "scenes": 5, "res": 16}}))
        run(art, "gen", "--config", tmp / "cfg.json", "--scenes", "2", "--out", tmp / "c")
        resolved = json.loads((tmp / "c" / "config.json").read_text())
        assert resolved["gen"]["scenes"] == 2 and resolved["gen"]["template"] == "laptop", resolved
        manifests = sorted((tmp / "c").glob("scene_*/manifest.json"))
        assert len(manifests) == 2

        # train a short run on one two-part scene, then render reproduces its PSNR
        run(art, "gen", "--template", "drawer-chest", "--scenes", "1", "--parts", "2", "--seed", "3",
            "--out", tmp / "d")
        scene = tmp / "d" / "scene_0000"
        run(art, "train", "--data", scene, "--steps", "40", "--out", tmp / "t")
        logged = [json.loads(l) for l in (tmp / "t" / "log.jsonl").read_text().splitlines()]
        trained_psnr = [l["psnr"] for l in logged if "psnr" in l][-1]
        run(art, "render", "--data", scene, "--checkpoint", tmp / "t" / "checkpoint", "--out", tmp / "r")
        rendered = json.loads((tmp / "r" / "render.json").read_text())[0]["training_view_psnr"]
        assert abs(rendered - trained_psnr) <= 0.1, (rendered, trained_psnr)
        names = {p.name for p in (tmp / "r" / "scene_0000").iterdir()}
        for want in ("composite_v0_s0.ppm", "part0_v0_s1.ppm", "part1_v3_s0.ppm", "boxes_v2_s1.svg"):
            assert want in names, want

        # eval: ground truth scores the PSNR cap with zero box distance
        run(art, "eval", "--data", tmp / "d", "--truth", "--out", tmp / "e")
        summary = json.loads((tmp / "e" / "summary.json").read_text())
        assert summary["psnr"] == 99.0 and summary["d_giou"] == 0.0, summary
        run(art, "eval", "--data", tmp / "d", "--checkpoint", tmp / "t" / "checkpoint", "--out", tmp / "e2")
        assert (tmp / "e2" / "metrics.jsonl").read_text().count("\n") == 1

        # export: two-part drawer gives two links and one prismatic joint
        run(art, "export", "--data", scene, "--truth", "--out", tmp / "u")
        urdf = (tmp / "u" / "scene_0000.urdf").read_text()
        assert urdf.count("<link ") == 2 and urdf.count('type="prismatic"') == 1, urdf
        run(sys.executable, reread, tmp / "u")
        run(art, "export", "--data", scene, "--checkpoint", tmp / "t" / "checkpoint", "--out", tmp / "v")
        run(sys.executable, reread, tmp / "v")
    print("cli ok")


if __name__ == "__main__":
    main()
