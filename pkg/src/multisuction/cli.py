"""Command-line interface: plan, validate, bench, gen-scene.

Exit codes: 0 success (including a recorded ``no_solution``), 1 usage error,
2 input format error, 3 validation failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import synth
from .conv import conv3d_dense, conv3d_sparse
from .core import GripperSpec, PlannerConfig
from .kernels import generate_encoded_kernels
from .oracle import ConditionChecker, equivalence_mismatch, random_instance
from .orientation import OrientationSamples, load_or_build_map
from .planner import MULTI_CUP, PlanRequest, plan
from .report import build_report, dumps, export_ply, write_report
from .scene_io import SceneFormatError, load_scene, save_scene
from .voxelizer import VoxelGrid

EXIT_OK, EXIT_USAGE, EXIT_FORMAT, EXIT_VALIDATION = 0, 1, 2, 3


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_json(path, what: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise InputError(f"{what} file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from exc


def load_gripper(path) -> GripperSpec:
    doc = _read_json(path, "gripper")
    try:
        return GripperSpec.from_dict(doc)
    except (KeyError, ValueError, TypeError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def load_config(path) -> PlannerConfig:
    if path is None:
        return PlannerConfig()
    doc = _read_json(path, "config")
    try:
        return PlannerConfig.from_dict(doc)
    except (KeyError, ValueError, TypeError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def _load_scene(args, config: PlannerConfig):
    for name in ("depth", "affordance", "intrinsics"):
        if not Path(getattr(args, name)).exists():
            raise InputError(f"{name} file not found: {getattr(args, name)}")
    return load_scene(args.depth, args.affordance, args.intrinsics, normal_k=config.normal_k)


def cmd_plan(args) -> int:
    config = load_config(args.config)
    gripper = load_gripper(args.gripper)
    scene = _load_scene(args, config)
    omap = load_or_build_map(
        Path(args.map_cache) if args.map_cache else None, config.angle_interval, config.eps_normal
    )
    current = np.asarray(args.current_tcp, float) if args.current_tcp else None
    outcome = plan(PlanRequest(scene, gripper, config, current), omap, threads=args.threads)
    doc = build_report(outcome, gripper, config, ranking_limit=args.ranking_limit)
    write_report(args.out, doc)
    if args.ply:
        export_ply(args.ply, scene, doc)
    summary = {"outcome": outcome.kind}
    if doc["optimal"]:
        summary.update(A=doc["optimal"]["A"], maxObj=doc["optimal"]["maxObj"])
    print(json.dumps(summary))
    return EXIT_OK


def cmd_validate(args) -> int:
    failures = 0
    if args.depth:
        config = load_config(args.config)
        gripper = load_gripper(args.gripper)
        scene = _load_scene(args, config)
        outcome = plan(PlanRequest(scene, gripper, config))
        if outcome.kind == MULTI_CUP:
            checker = ConditionChecker(scene, config, gripper)
            ranking = outcome.plan.ranking
            n = min(len(ranking), args.top)
            for k in range(n):
                rep = checker.check(ranking[k].candidate)
                if not rep.all_ok:
                    failures += 1
                    print(f"candidate {k}: conditions violated {rep.to_dict()}")
            print(f"checked {n} ranked candidates, {failures} violations")
        else:
            print(f"planner outcome {outcome.kind}; no multi-cup candidates to check")
    rng = np.random.default_rng(args.seed)
    for k in range(args.random):
        cups = 2 if k % 2 == 0 else 4
        V, samples, gripper = random_instance(rng, args.grid, args.orientations, cups)
        diff = equivalence_mismatch(V, samples, gripper)
        ok = not diff["missing"] and not diff["extra"]
        if not ok:
            failures += 1
        print(f"instance {k}: grid {V.dims} cups {cups} candidates {diff['count']} "
              f"{'match' if ok else 'MISMATCH'}")
    print("validation " + ("passed" if failures == 0 else f"failed ({failures})"))
    return EXIT_OK if failures == 0 else EXIT_VALIDATION


def run_bench(size: int, occupancy: float, n_kernels: int, cups: int = 2, seed: int = 0,
              repeat: int = 1) -> dict:
    rng = np.random.default_rng(seed)
    V = VoxelGrid.from_occupancy(rng.random((size,) * 3) < occupancy)
    angles = np.column_stack([
        rng.uniform(-math.pi, math.pi, n_kernels), rng.uniform(0, math.pi / 2, n_kernels),
        rng.uniform(-math.pi, math.pi, n_kernels),
    ])
    gripper = GripperSpec([[-0.04, 0, 0], [0.04, 0, 0]]) if cups == 2 else GripperSpec(
        [[-0.03, -0.02, 0], [0.03, -0.02, 0], [-0.03, 0.02, 0], [0.03, 0.02, 0]])
    K = generate_encoded_kernels(OrientationSamples.from_angles(angles), gripper, V.voxel_size)

    def best_time(fn):
        times, out = [], None
        for _ in range(repeat):
            t0 = time.perf_counter()
            out = fn(V, K)
            times.append(time.perf_counter() - t0)
        return min(times), out

    t_dense, dense = best_time(conv3d_dense)
    t_sparse, sparse = best_time(conv3d_sparse)
    cells = float(len(K)) * size**3
    return {
        "size": size, "occupancy": occupancy, "kernels": len(K), "occupied": V.n_occupied,
        "dense_s": t_dense, "sparse_s": t_sparse, "speedup": t_dense / t_sparse,
        "dense_cells_per_s": cells / t_dense, "sparse_cells_per_s": cells / t_sparse,
        "identical": bool(np.array_equal(dense.values, sparse.values)),
    }


def cmd_bench(args) -> int:
    res = run_bench(args.size, args.occupancy, args.kernels, args.cups, args.seed, args.repeat)
    for key in ("dense_s", "sparse_s", "speedup", "dense_cells_per_s", "sparse_cells_per_s"):
        print(f"{key:>20}: {res[key]:.6g}")
    print(f"{'identical':>20}: {res['identical']}")
    return EXIT_OK if res["identical"] else EXIT_VALIDATION


PRESETS = {
    "plate": synth.plate_scene,
    "two-box": synth.two_box_scene,
    "blob": synth.small_blob_scene,
}


def cmd_gen_scene(args) -> int:
    if args.spec:
        try:
            spec = synth.SceneSpec.from_dict(_read_json(args.spec, "scene spec"))
        except (KeyError, ValueError, TypeError) as exc:
            raise InputError(f"{args.spec}: {exc}") from exc
    else:
        spec = PRESETS[args.preset]()
    scene, gt = synth.render_scene(spec)
    out = Path(args.out_dir)
    files = save_scene(out, scene)
    truth = {
        "spec": spec.to_dict(),
        "regions": [{"primitive": r.primitive, "polygon": r.polygon().tolist()} for r in gt.regions],
    }
    if args.gripper:
        truth["expected_max_obj"] = gt.expected_max_obj(load_gripper(args.gripper))
    (out / "ground_truth.json").write_text(dumps(truth))
    print(json.dumps({k: str(v) for k, v in files.items()}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="multisuction", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def scene_args(sp, required: bool):
        sp.add_argument("--depth", required=required)
        sp.add_argument("--affordance", required=required)
        sp.add_argument("--intrinsics", required=required)
        sp.add_argument("--gripper", required=required)
        sp.add_argument("--config")

    sp = sub.add_parser("plan", help="plan a grasp for one scene")
    scene_args(sp, True)
    sp.add_argument("--out", required=True, help="report JSON path")
    sp.add_argument("--ply", help="optional ASCII PLY visualisation")
    sp.add_argument("--threads", type=int, default=1, help="0 = one per CPU")
    sp.add_argument("--map-cache", help="JSON cache for the orientation map")
    sp.add_argument("--ranking-limit", type=int, default=100)
    sp.add_argument("--current-tcp", type=float, nargs=3, metavar=("X", "Y", "Z"))
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("validate", help="oracle equivalence and condition checks")
    scene_args(sp, False)
    sp.add_argument("--random", type=int, default=0, help="number of random instances")
    sp.add_argument("--grid", type=int, default=24)
    sp.add_argument("--orientations", type=int, default=8)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--top", type=int, default=50, help="ranked candidates to re-check")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("bench", help="dense vs sparse correlation timing")
    sp.add_argument("--size", type=int, default=64)
    sp.add_argument("--occupancy", type=float, default=0.05)
    sp.add_argument("--kernels", type=int, default=32)
    sp.add_argument("--cups", type=int, choices=(2, 4), default=2)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--repeat", type=int, default=1)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("gen-scene", help="render a synthetic scene to NPY/JSON files")
    sp.add_argument("--spec")
    sp.add_argument("--preset", choices=sorted(PRESETS))
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--gripper", help="gripper JSON for the expected maxObj annotation")
    sp.set_defaults(func=cmd_gen_scene)
    return p


def run_cli(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    if args.command == "validate" and not args.depth and args.random == 0:
        print("validate needs a scene (--depth ...) or --random N", file=sys.stderr)
        return EXIT_USAGE
    if args.command == "validate" and args.depth and not (args.affordance and args.intrinsics and args.gripper):
        print("validate on a scene needs --affordance, --intrinsics and --gripper", file=sys.stderr)
        return EXIT_USAGE
    if args.command == "gen-scene" and not (args.spec or args.preset):
        print("gen-scene needs --spec or --preset", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (InputError, SceneFormatError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_FORMAT


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
