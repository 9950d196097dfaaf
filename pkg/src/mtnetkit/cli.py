"""``mtnetkit`` command line: synth, track, eval, curves, gradcheck, statecheck.

Exit codes: 0 ok, 1 verification failed, 2 usage or input error.
"""
import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .backbone import Frame
from .config import PRESETS, ConfigError, RunConfig
from .fileio import FrameFormatError, list_frames, read_boxes, write_boxes
from .metrics import (ATTRIBUTES, NORM_THRESHOLDS, PRECISION_THRESHOLDS, SUCCESS_THRESHOLDS,
                      SequenceEval, attribute_aggregate, read_attributes)
from .synth import SynthConfig, write_sequence
from .tracker import track_sequence
from .verify import gradcheck, statecheck

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("mtnetkit")


class UsageError(Exception):
    pass


def max_workers():
    raw = os.environ.get("MTNETKIT_THREADS", "")
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"MTNETKIT_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise UsageError("MTNETKIT_THREADS must be >= 1")
    return n


def _dump_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _out_dir(args, default):
    out = args.out or default
    os.makedirs(out, exist_ok=True)
    return out


# ---------------------------------------------------------------- synth

def cmd_synth(args):
    d = {}
    if args.config:
        with open(args.config) as f:
            d = json.load(f)
    try:
        cfg = SynthConfig.from_dict(d)
        over = {k: v for k, v in (("frames", args.frames), ("seed", args.seed)) if v is not None}
        if args.zero_noise:
            over.update(noise_rgb=0.0, noise_thermal=0.0)
        if over:
            cfg = SynthConfig.from_dict({**d, **over})
        cfg.validate()
    except (TypeError, ValueError) as e:
        raise UsageError(f"synth config: {e}") from None
    out = write_sequence(cfg, _out_dir(args, "synth_seq"))
    print(f"synth seed={cfg.seed} frames={cfg.frames} -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------- track

def _run_config(args):
    cfg = RunConfig.load(args.config) if args.config else PRESETS[args.preset]
    return cfg.with_seed(args.seed) if args.seed is not None else cfg


def _track_one(seq_dir, cfg, out_dir):
    pairs = list_frames(seq_dir)
    if not pairs:
        raise FrameFormatError(f"{seq_dir}: no frames")
    gt = read_boxes(os.path.join(seq_dir, "groundtruth.txt"))
    if len(gt) == 0:
        raise FrameFormatError(f"{seq_dir}: empty groundtruth.txt")
    frames = (Frame.load(r, t, i) for i, (r, t) in enumerate(pairs))
    t0 = time.perf_counter()
    res = track_sequence(frames, gt[0], cfg.build_model(), cfg.update, cfg.tracker)
    elapsed = time.perf_counter() - t0
    if len(res.records) != len(pairs):
        raise RuntimeError(f"{seq_dir}: {len(res.records)} results for {len(pairs)} frames")
    name = os.path.basename(os.path.normpath(seq_dir))
    write_boxes(os.path.join(out_dir, f"{name}.txt"), res.boxes)
    _dump_json(os.path.join(out_dir, f"{name}.log.json"),
               {"sequence": name, "seed": cfg.seed, "config": cfg.to_dict(), "frames": res.side_log()})
    return name, len(pairs), elapsed


def cmd_track(args):
    cfg = _run_config(args)
    out = _out_dir(args, "results")
    workers = min(max_workers(), len(args.sequences))
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            done = list(ex.map(_track_one, args.sequences, [cfg] * len(args.sequences),
                               [out] * len(args.sequences)))
    else:
        done = [_track_one(s, cfg, out) for s in args.sequences]
    for name, n, sec in done:
        print(f"track seed={cfg.seed} {name}: {n} frames in {sec:.1f}s -> {os.path.join(out, name + '.txt')}")
    return EXIT_OK


# ---------------------------------------------------------------- eval / curves

def _pairs(args):
    if len(args.gt) != len(args.results):
        raise UsageError(f"{len(args.gt)} --gt files vs {len(args.results)} --results files")
    names = args.names or [os.path.basename(os.path.dirname(os.path.abspath(g))) for g in args.gt]
    if len(names) != len(args.gt):
        raise UsageError("--names must match the number of --gt files")
    if len(set(names)) != len(names):
        raise UsageError(f"duplicate sequence names {names}; pass --names")
    return list(zip(names, args.gt, args.results))


def _evaluate(args, attrs=None):
    attrs = attrs or {}
    evals = []
    for name, g, r in _pairs(args):
        try:
            evals.append(SequenceEval.from_boxes(name, read_boxes(g), read_boxes(r), attrs.get(name, ())))
        except ValueError as e:
            raise UsageError(str(e)) from None
    return evals


def _overall(evals):
    return SequenceEval("overall", np.concatenate([e.errors for e in evals]),
                        np.concatenate([e.norm_errors for e in evals]),
                        np.concatenate([e.ious for e in evals]))


def _write_curves(path, ev):
    c = ev.curves()
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["curve", "threshold", "value"])
        for key, th in (("precision", PRECISION_THRESHOLDS), ("success", SUCCESS_THRESHOLDS),
                        ("norm_precision", NORM_THRESHOLDS)):
            for t, v in zip(th, c[key]):
                w.writerow([key, f"{t:g}", repr(float(v))])


def cmd_eval(args):
    attrs = read_attributes(args.attributes) if args.attributes else {}
    evals = _evaluate(args, attrs)
    out = _out_dir(args, "eval")
    overall = _overall(evals)
    report = {
        "seed": args.seed if args.seed is not None else 0,
        "tau": args.tau,
        "sequences": {e.name: e.scores(args.tau) for e in evals},
        "overall": overall.scores(args.tau),
    }
    if attrs:
        table = {}
        for a in ATTRIBUTES:
            agg = attribute_aggregate(evals, a, args.tau)
            if agg is not None:
                table[a] = {"PR": agg[0], "SR": agg[1]}
        report["attributes"] = table
    _dump_json(os.path.join(out, "report.json"), report)
    _write_curves(os.path.join(out, "curves.csv"), overall)
    s = report["overall"]
    print(f"eval seed={report['seed']} sequences={len(evals)} "
          f"PR@{args.tau:g}={s['PR']:.4f} SR={s['SR']:.4f} NPR={s['NPR']:.4f}")
    for a, v in report.get("attributes", {}).items():
        print(f"  {a:<4} PR={v['PR']:.4f} SR={v['SR']:.4f}")
    return EXIT_OK


def cmd_curves(args):
    evals = _evaluate(args)
    out = _out_dir(args, "curves")
    for e in evals:
        _write_curves(os.path.join(out, f"{e.name}.csv"), e)
    _write_curves(os.path.join(out, "overall.csv"), _overall(evals))
    print(f"curves seed={args.seed if args.seed is not None else 0} sequences={len(evals)} -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------- verification

def cmd_gradcheck(args):
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    rep = gradcheck(seed=args.seed if args.seed is not None else 0, trials=args.trials)
    print("\n".join(rep.lines()))
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_statecheck(args):
    rep = statecheck()
    lines = rep.lines()
    lines[0] += f" seed={args.seed if args.seed is not None else 0}"
    print("\n".join(lines))
    return EXIT_OK if rep.passed else EXIT_FAIL


# ---------------------------------------------------------------- entry

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="mtnetkit", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic RGB/thermal sequence")
    s.add_argument("--frames", type=int)
    s.add_argument("--zero-noise", action="store_true")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("track", parents=[common], help="track one or more sequences")
    s.add_argument("sequences", nargs="+", metavar="SEQ_DIR")
    s.add_argument("--preset", choices=sorted(PRESETS), default="default")
    s.set_defaults(func=cmd_track)

    for name, func, text in (("eval", cmd_eval, "score results against ground truth"),
                             ("curves", cmd_curves, "write PR / SR / NPR curves as CSV")):
        s = sub.add_parser(name, parents=[common], help=text)
        s.add_argument("--gt", action="append", required=True, help="ground-truth file (repeatable)")
        s.add_argument("--results", action="append", required=True, help="result file (repeatable)")
        s.add_argument("--names", nargs="+", help="sequence names (default: gt parent dir)")
        s.add_argument("--tau", type=float, default=20.0, help="PR threshold in pixels")
        if name == "eval":
            s.add_argument("--attributes", help="sidecar: 'name ATTR1,ATTR2' per line")
        s.set_defaults(func=func)

    s = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of loss gradients")
    s.add_argument("--trials", type=int, default=100)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("statecheck", parents=[common], help="exhaustive template-update check")
    s.set_defaults(func=cmd_statecheck)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, FrameFormatError, FileNotFoundError, ValueError) as e:
        print(f"mtnetkit {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
