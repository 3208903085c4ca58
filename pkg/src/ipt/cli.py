"""``ipt`` command line: map generation, modulation, simulation, demodulation, evaluation,
benchmarking and the telemetry link.

Exit codes: 0 success, 2 configuration error, 3 runtime/pipeline error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .channel import (
    CaptureScenario,
    DegenerateViewError,
    ScenarioError,
    ScreenGeometry,
    flight_scenario,
    full_view_intrinsics,
    read_ground_truth,
    shadow_over_tag,
    simulate_capture,
    static_scenario,
    synthetic_background,
    write_ground_truth,
)
from .demodulator import AlignmentConfig, DemodState, PreprocessKnobs, demodulate
from .evaluation import bench, check_compatible, modulated_stream, run_e2e, write_frame_csv
from .geometry import CameraIntrinsics
from .imaging import ParameterError, ShapeError, iter_sequence, read_manifest, read_png, write_sequence
from .modulator import ModulationConfig, modulate_stream
from .tagmap import FamilyFormatError, LayoutError, TagMapConfig, generate_map, save_map
from .telemetry import DatagramError, TelemetrySender, UdpListener

log = logging.getLogger("ipt")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class ConfigError(Exception):
    pass


CONFIG_ERRORS = (
    ConfigError,
    ScenarioError,
    LayoutError,
    FamilyFormatError,
    ParameterError,
    ShapeError,
    FileNotFoundError,
    json.JSONDecodeError,
)


def _emit(args, payload: dict, text: str | None = None) -> None:
    if args.json:
        print(json.dumps(payload))
    elif text is not None:
        print(text)
    else:
        for k, v in payload.items():
            print(f"{k}: {v}")


def _load_map_config(path) -> TagMapConfig:
    if path is None:
        return TagMapConfig()
    path = Path(path)
    if path.is_dir():
        path = path / "map.json"
    return TagMapConfig.load(path)


def _screen_for(config: TagMapConfig) -> ScreenGeometry:
    return ScreenGeometry(config.ratio_x * config.map_width, config.ratio_y * config.map_height)


def _pick(value, default):
    return default if value is None else value


def _preset_scenario(name: str, config: TagMapConfig, args) -> CaptureScenario:
    screen = _screen_for(config)
    if name == "static":
        intr = full_view_intrinsics(screen, args.width or 960, args.height or 1080, 1.5)
        return static_scenario(intr, screen, (0.0, 0.0, 1.5), n_frames=_pick(args.frames_count, 2), seed=args.seed)
    if name == "flight":
        intr = CameraIntrinsics.centered(args.width or 640, args.height or 360, 400.0 * (args.width or 640) / 640)
        shadow = shadow_over_tag(config, args.shadow_tag) if args.shadow_tag is not None else None
        return flight_scenario(
            intr,
            screen,
            n_frames=_pick(args.frames_count, 120),
            period=9.0,
            noise_sigma=_pick(args.noise, 2.0),
            shadow=shadow,
            seed=args.seed,
        )
    raise ConfigError(f"unknown preset {name!r}")


def _scenario_from_args(args, config: TagMapConfig) -> CaptureScenario:
    if args.scenario:
        return CaptureScenario.load(args.scenario)
    return _preset_scenario(args.preset, config, args)


# --- commands ---------------------------------------------------------------


def cmd_gen_map(args) -> int:
    if args.config:
        config = TagMapConfig.load(args.config)
    else:
        config = TagMapConfig(
            rows=args.rows,
            cols=args.cols,
            map_width=args.width,
            map_height=args.height,
            tag_side=args.tag_side,
            ratio_x=args.screen_width / args.width,
            ratio_y=args.screen_height / args.height,
            quiet_cells=args.quiet_cells,
        )
    tag_map = generate_map(config)
    paths = save_map(tag_map, args.out)
    _emit(args, {"tags": config.n_tags, "size": [config.map_width, config.map_height], **paths})
    return EXIT_OK


def cmd_modulate(args) -> int:
    config = _load_map_config(args.map)
    tag_map = generate_map(config)
    if args.input is None:
        frames = [synthetic_background(config.map_width, config.map_height, args.seed)]
    else:
        src = Path(args.input)
        frames = iter_sequence(src) if src.suffix == ".json" or src.is_dir() else [read_png(src, "SRGB8")]
    mcfg = ModulationConfig(
        tag_map.mask, input_fps=args.input_fps, output_fps=args.output_fps, delta_l=args.delta_l
    )
    out = list(modulate_stream(frames, mcfg))
    manifest = write_sequence(out, args.out, args.output_fps)
    _emit(args, {"frames": len(out), "manifest": str(manifest), "repeats": mcfg.repeats})
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = _load_map_config(args.map)
    scenario = _scenario_from_args(args, config)
    check_compatible(scenario, config)
    modulated = list(iter_sequence(args.projected)) if args.projected else None
    if modulated is None:
        modulated = modulated_stream(generate_map(config), seed=args.seed)
    frames, truth = simulate_capture(scenario, modulated, n_jobs=args.jobs)
    out = Path(args.out)
    manifest = write_sequence(frames, out, scenario.camera_fps)
    write_ground_truth(truth, out / "ground_truth.csv")
    scenario.save(out / "scenario.json")
    _emit(args, {"frames": len(frames), "manifest": str(manifest), "ground_truth": str(out / "ground_truth.csv")})
    return EXIT_OK


def _state(args) -> DemodState:
    return DemodState(AlignmentConfig(b=args.b, n_samples=args.n_samples, mode=args.align_mode), PreprocessKnobs())


def cmd_demodulate(args) -> int:
    config = _load_map_config(args.map)
    read_manifest(args.frames)
    state = _state(args)
    n_frames = n_det = 0
    with open(args.out, "w") as fh:
        for k, frame in enumerate(iter_sequence(args.frames)):
            results = demodulate(state, frame, config)
            if results is None:
                continue
            rec = {"frame": k - 1, "shift": list(state.last_shift), "detections": [r.to_dict() for r in results]}
            fh.write(json.dumps(rec) + "\n")
            n_frames += 1
            n_det += len(results)
    _emit(args, {"pairs": n_frames, "detections": n_det, "out": str(args.out)})
    return EXIT_OK


def cmd_e2e_eval(args) -> int:
    config = _load_map_config(args.map)
    scenario = _scenario_from_args(args, config)
    report, records = run_e2e(scenario, generate_map(config), n_jobs=args.jobs)
    if args.csv:
        write_frame_csv(records, args.csv)
    _emit(args, report.to_dict(), report.table())
    return EXIT_OK


def cmd_bench(args) -> int:
    config = _load_map_config(args.map)
    if args.frames:
        frames = list(iter_sequence(args.frames))
        src = Path(args.frames)
        scenario_file = (src if src.is_dir() else src.parent) / "scenario.json"
        if not scenario_file.exists():
            raise ConfigError(f"{scenario_file} not found; bench needs the capture's intrinsics")
        intr = CaptureScenario.load(scenario_file).intrinsics
    else:
        args.frames_count = args.n + 1
        args.shadow_tag = None
        scenario = _preset_scenario("flight", config, args)
        frames, _ = simulate_capture(scenario, modulated_stream(generate_map(config), seed=args.seed), n_jobs=args.jobs)
        intr = scenario.intrinsics
    if len(frames) < 2:
        raise ConfigError("bench needs at least two frames")
    result = bench(frames, intr, config, _state(args))
    text = f"{result.width}x{result.height}  pairs {result.pairs}  median {result.median_fps:.1f} fps  mean {result.mean_fps:.1f} fps"
    _emit(args, result.to_dict(), text)
    return EXIT_OK


def cmd_send(args) -> int:
    samples = read_ground_truth(args.poses)
    if not samples:
        raise ConfigError("pose file is empty")
    period = 1.0 / args.rate if args.rate > 0 else 0.0
    with TelemetrySender(args.addr) as sender:
        for s in samples:
            sender.send((s.position, s.quaternion), int(round(s.t * 1e6)))
            if period:
                time.sleep(period)
        _emit(args, {"sent": len(samples), "address": f"{sender.address[0]}:{sender.address[1]}"})
    return EXIT_OK


def cmd_listen(args) -> int:
    deadline = time.monotonic() + args.timeout if args.timeout > 0 else None
    with UdpListener(args.addr) as rx:
        log.info("listening on %s:%d", *rx.address)
        while args.count <= 0 or rx.received + rx.errors < args.count:
            if deadline is not None and time.monotonic() > deadline:
                break
            dg = rx.poll()
            if dg is not None and not args.quiet:
                print(json.dumps({"seq": dg.seq, "t_us": dg.timestamp_us, "position": dg.position, "quaternion": dg.quaternion}))
        latest = rx.latest
        _emit(
            args,
            {
                "received": rx.received,
                "errors": rx.errors,
                "stale": rx.stale,
                "latest_seq": None if latest is None else latest.seq,
            },
        )
    return EXIT_OK


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable JSON on stdout")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="ipt", description=" ".join(__doc__.split("\n\n")[0].split()), parents=[common])
    p.add_argument("--version", action="version", version=f"ipt {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-map", parents=[common], help="render the tag map, its mask and config")
    g.add_argument("--out", required=True)
    g.add_argument("--config", help="map config JSON (overrides the layout flags)")
    g.add_argument("--rows", type=int, default=9)
    g.add_argument("--cols", type=int, default=9)
    g.add_argument("--width", type=int, default=1920)
    g.add_argument("--height", type=int, default=2160)
    g.add_argument("--tag-side", type=int, default=120)
    g.add_argument("--quiet-cells", type=int, default=1)
    g.add_argument("--screen-width", type=float, default=2.17, help="meters")
    g.add_argument("--screen-height", type=float, default=2.47, help="meters")
    g.set_defaults(func=cmd_gen_map)

    m = sub.add_parser("modulate", parents=[common], help="embed the map into a video")
    m.add_argument("--map", help="map.json or its directory (default layout if omitted)")
    m.add_argument("--input", "--in", dest="input", help="PNG frame or sequence manifest; synthetic content if omitted")
    m.add_argument("--input-fps", "--in-fps", dest="input_fps", type=float, default=30.0)
    m.add_argument("--output-fps", "--out-fps", dest="output_fps", type=float, default=60.0)
    m.add_argument("--delta-l", type=float, default=4.0)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_modulate)

    def scenario_args(q):
        q.add_argument("--map")
        src = q.add_mutually_exclusive_group()
        src.add_argument("--scenario", help="scenario JSON")
        src.add_argument("--preset", choices=("static", "flight"), default="static")
        q.add_argument("--frames-count", type=int)
        q.add_argument("--width", type=int)
        q.add_argument("--height", type=int)
        q.add_argument("--noise", type=float)
        q.add_argument("--shadow-tag", type=int)
        q.add_argument("--jobs", type=int, default=1)

    s = sub.add_parser("simulate", parents=[common], help="render camera frames of the projected video")
    scenario_args(s)
    s.add_argument("--projected", help="modulated sequence manifest (synthetic if omitted)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    def align_args(q):
        q.add_argument("--b", type=int, default=5, help="maximum shift in pixels")
        q.add_argument("--n-samples", type=int, default=3)
        q.add_argument("--align-mode", choices=("coupled", "independent"), default="coupled")

    d = sub.add_parser("demodulate", parents=[common], help="detect tags in a camera sequence")
    d.add_argument("--frames", required=True, help="sequence manifest")
    d.add_argument("--map")
    d.add_argument("--out", required=True, help="detections JSONL")
    align_args(d)
    d.set_defaults(func=cmd_demodulate)

    e = sub.add_parser("e2e-eval", parents=[common], help="simulate, demodulate, solve and score")
    scenario_args(e)
    e.add_argument("--csv", help="per-frame error CSV")
    e.set_defaults(func=cmd_e2e_eval)

    b = sub.add_parser("bench", parents=[common], help="demodulate+pose throughput")
    b.add_argument("--frames", help="sequence manifest (synthetic flight if omitted)")
    b.add_argument("--map")
    b.add_argument("--n", type=int, default=100, help="frame pairs for the synthetic stream")
    b.add_argument("--width", type=int, default=640)
    b.add_argument("--height", type=int, default=360)
    b.add_argument("--noise", type=float)
    b.add_argument("--jobs", type=int, default=4)
    align_args(b)
    b.set_defaults(func=cmd_bench)

    t = sub.add_parser("send", parents=[common], help="send poses from a t,x,y,z,qw,qx,qy,qz CSV")
    t.add_argument("--poses", required=True)
    t.add_argument("--addr", help="host:port (default $IPT_TELEMETRY_ADDR or 127.0.0.1:47001)")
    t.add_argument("--rate", type=float, default=0.0, help="datagrams per second, 0 = as fast as possible")
    t.set_defaults(func=cmd_send)

    li = sub.add_parser("listen", parents=[common], help="receive and validate pose datagrams")
    li.add_argument("--addr", help="bind host:port (default $IPT_TELEMETRY_ADDR or 0.0.0.0:47001)")
    li.add_argument("--count", type=int, default=0, help="stop after this many datagrams")
    li.add_argument("--timeout", type=float, default=0.0, help="stop after this many seconds")
    li.add_argument("--quiet", action="store_true")
    li.set_defaults(func=cmd_listen)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CONFIG_ERRORS as exc:
        print(f"ipt: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DegenerateViewError, DatagramError, OSError, RuntimeError, ValueError) as exc:
        print(f"ipt: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
