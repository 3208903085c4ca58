"""Command-line entry points, run in-process."""
from __future__ import annotations

import json
import socket
import threading
import time

import pytest

from ipt.cli import main

SMALL_MAP = [
    "--rows", "2", "--cols", "2", "--width", "320", "--height", "320", "--tag-side", "96",
    "--screen-width", "0.3616", "--screen-height", "0.3661",
]


def _json(capsys):
    return json.loads(capsys.readouterr().out.strip().splitlines()[-1])


@pytest.fixture
def small_map(tmp_path, capsys):
    out = tmp_path / "map"
    assert main(["gen-map", "--out", str(out), "--json", *SMALL_MAP]) == 0
    capsys.readouterr()
    return out


def _free_port():
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


class TestGenMap:
    def test_default_layout(self, tmp_path, capsys):
        assert main(["gen-map", "--out", str(tmp_path), "--json"]) == 0
        out = _json(capsys)
        assert out["tags"] == 81 and out["size"] == [1920, 2160]
        assert (tmp_path / "map.png").exists() and (tmp_path / "mask.png").exists()

    def test_single_tag(self, tmp_path, capsys):
        args = ["gen-map", "--out", str(tmp_path), "--rows", "1", "--cols", "1", "--json"]
        assert main(args) == 0
        assert _json(capsys)["tags"] == 1

    def test_from_config_file(self, small_map, tmp_path, capsys):
        out = tmp_path / "again"
        assert main(["gen-map", "--out", str(out), "--config", str(small_map / "map.json"), "--json"]) == 0
        assert (out / "map.json").read_text() == (small_map / "map.json").read_text()

    def test_oversize_tag(self, tmp_path, capsys):
        assert main(["gen-map", "--out", str(tmp_path), "--tag-side", "500"]) == 2
        assert "config error" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        assert main(["gen-map", "--out", str(tmp_path), "--config", str(tmp_path / "nope.json")]) == 2


class TestPipeline:
    def test_modulate_simulate_demodulate(self, small_map, tmp_path, capsys):
        mod = tmp_path / "mod"
        assert main(["modulate", "--map", str(small_map), "--out", str(mod), "--json"]) == 0
        assert _json(capsys)["frames"] == 2

        cam = tmp_path / "cam"
        args = ["simulate", "--map", str(small_map), "--projected", str(mod), "--out", str(cam)]
        args += ["--preset", "static", "--width", "320", "--height", "320", "--frames-count", "3", "--json"]
        assert main(args) == 0
        assert _json(capsys)["frames"] == 3
        assert (cam / "ground_truth.csv").exists() and (cam / "scenario.json").exists()

        det = tmp_path / "det.jsonl"
        assert main(["demodulate", "--frames", str(cam), "--map", str(small_map), "--out", str(det), "--json"]) == 0
        assert _json(capsys) == {"pairs": 2, "detections": 8, "out": str(det)}
        lines = [json.loads(x) for x in det.read_text().splitlines()]
        assert [x["frame"] for x in lines] == [0, 1]
        first = lines[0]
        assert first["shift"] == [0, 0]
        assert sorted(d["id"] for d in first["detections"]) == [0, 1, 2, 3]
        assert set(first["detections"][0]) == {"id", "p_i", "hamming", "p_w"}

        assert main(["bench", "--frames", str(cam), "--map", str(small_map), "--json"]) == 0
        res = _json(capsys)
        assert res["pairs"] == 2 and res["median_fps"] > 0

    def test_modulate_ratio_error(self, small_map, tmp_path):
        args = ["modulate", "--map", str(small_map), "--out", str(tmp_path / "m"), "--output-fps", "45"]
        assert main(args) == 2

    def test_modulate_four_repeats(self, small_map, tmp_path, capsys):
        args = ["modulate", "--map", str(small_map), "--out", str(tmp_path / "m"), "--out-fps", "120", "--json"]
        assert main(args) == 0
        assert _json(capsys)["repeats"] == 4

    def test_demodulate_missing_frames(self, small_map, tmp_path):
        args = ["demodulate", "--frames", str(tmp_path / "none"), "--map", str(small_map), "--out", str(tmp_path / "d")]
        assert main(args) == 2

    def test_bench_needs_scenario(self, small_map, tmp_path, capsys):
        mod = tmp_path / "mod"
        main(["modulate", "--map", str(small_map), "--out", str(mod)])
        assert main(["bench", "--frames", str(mod), "--map", str(small_map)]) == 2


class TestE2EEval:
    def test_static_small(self, small_map, tmp_path, capsys):
        csv_path = tmp_path / "frames.csv"
        args = ["e2e-eval", "--map", str(small_map), "--preset", "static", "--width", "320", "--height", "320"]
        assert main(args + ["--frames-count", "3", "--csv", str(csv_path), "--json"]) == 0
        rep = _json(capsys)
        assert rep["detection_rate"] == 1.0 and rep["n_pairs"] == 2
        assert max(rep["mae"][a] for a in "xyz") < 0.005
        assert csv_path.read_text().count("\n") == 3

    def test_table_output(self, small_map, capsys):
        args = ["e2e-eval", "--map", str(small_map), "--width", "320", "--height", "320", "--frames-count", "2"]
        assert main(args) == 0
        out = capsys.readouterr().out
        assert "detection rate" in out and "yaw" in out

    def test_empty_trajectory(self, small_map):
        assert main(["e2e-eval", "--map", str(small_map), "--frames-count", "0"]) == 2

    def test_scenario_map_mismatch(self, small_map, tmp_path, capsys):
        cam = tmp_path / "cam"
        main(["simulate", "--map", str(small_map), "--out", str(cam), "--width", "64", "--height", "64"])
        # the default 9x9 layout has other screen ratios than the small map's scenario
        assert main(["e2e-eval", "--scenario", str(cam / "scenario.json")]) == 2

    def test_bad_scenario_json(self, tmp_path):
        p = tmp_path / "s.json"
        p.write_text("{not json")
        assert main(["e2e-eval", "--scenario", str(p)]) == 2


class TestTelemetryCommands:
    def test_send_listen(self, small_map, tmp_path, capsys):
        cam = tmp_path / "cam"
        main(["simulate", "--map", str(small_map), "--out", str(cam), "--width", "64", "--height", "64", "--frames-count", "4"])
        capsys.readouterr()
        port = _free_port()
        codes = []
        listener = threading.Thread(
            target=lambda: codes.append(
                main(["listen", "--addr", f"127.0.0.1:{port}", "--count", "4", "--timeout", "10", "--quiet", "--json"])
            )
        )
        listener.start()
        time.sleep(0.3)
        assert main(["send", "--poses", str(cam / "ground_truth.csv"), "--addr", f"127.0.0.1:{port}", "--rate", "200"]) == 0
        listener.join(15)
        assert codes == [0]
        out = capsys.readouterr().out
        summary = next(json.loads(x) for x in out.splitlines() if x.startswith('{"received"'))
        assert summary == {"received": 4, "errors": 0, "stale": 0, "latest_seq": 3}
        assert f"address: 127.0.0.1:{port}" in out

    def test_send_bad_pose(self, tmp_path):
        p = tmp_path / "gt.csv"
        p.write_text("t,x,y,z,qw,qx,qy,qz\n0,nan,0,1,1,0,0,0\n")
        assert main(["send", "--poses", str(p), "--addr", f"127.0.0.1:{_free_port()}"]) == 3

    def test_send_empty(self, tmp_path):
        p = tmp_path / "gt.csv"
        p.write_text("t,x,y,z,qw,qx,qy,qz\n")
        assert main(["send", "--poses", str(p)]) == 2

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert capsys.readouterr().out.startswith("ipt ")
