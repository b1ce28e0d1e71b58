#!/usr/bin/env python3
"""Minimal tracker adapter for the reefloop bridge protocol.

Speaks newline-delimited JSON on stdin/stdout. The "tracker" just repeats the
init box (optionally with seeded jitter) so the adapter has no dependencies;
replace `Tracker` with a call into a real model.

    reefloop eval --tracker "bridge:stdio:python3 adapters/reference_adapter.py" ...
"""

import argparse
import base64
import json
import os
import random
import sys
import time

PROTOCOL_VERSION = 1
PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


class Tracker:
    def __init__(self, jitter, seed):
        self.box = None
        self.jitter = jitter
        self.rng = random.Random(seed)

    def init(self, frame_bytes, box):
        self.box = list(box)

    def track(self, frame_bytes):
        x, y, w, h = self.box
        if self.jitter:
            x += self.rng.randint(-self.jitter, self.jitter)
            y += self.rng.randint(-self.jitter, self.jitter)
        return (x, y, w, h), 0.9


def load_frame(ref, mode):
    if mode == "inline":
        data = base64.b64decode(ref)
    else:
        with open(ref, "rb") as f:
            data = f.read()
    if not data.startswith(PNG_MAGIC):
        raise ValueError("frame is not a PNG")
    return data


def send(obj):
    sys.stdout.write(json.dumps(obj, separators=(",", ":")) + "\n")
    sys.stdout.flush()


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--name", default="reference-adapter")
    ap.add_argument("--frames", choices=["path", "inline"], default="path")
    ap.add_argument("--work-ms", type=float, default=0.0, help="simulated inference time per frame")
    ap.add_argument("--jitter", type=int, default=0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--timing-log", help="write self-measured per-frame service time (ms) here")
    args = ap.parse_args()

    seed = args.seed + int(os.environ.get("REEFLOOP_RUN_INDEX", "0"))
    tracker = Tracker(args.jitter, seed)
    timing = open(args.timing_log, "w") if args.timing_log else None

    for line in sys.stdin:
        t0 = time.perf_counter()
        try:
            msg = json.loads(line)
            kind = msg["type"]
        except (ValueError, KeyError, TypeError):
            send({"type": "err", "msg": "bad request"})
            continue

        if kind == "hello":
            send({"type": "hello", "version": PROTOCOL_VERSION, "name": args.name, "frames": args.frames})
            if msg.get("version") != PROTOCOL_VERSION:
                break
        elif kind == "init":
            try:
                tracker.init(load_frame(msg["frame"], args.frames), msg["bbox"])
            except (OSError, ValueError, KeyError) as e:
                send({"type": "err", "msg": str(e)})
                continue
            send({"type": "ok"})
        elif kind == "frame":
            try:
                frame = load_frame(msg["frame"], args.frames)
            except (OSError, ValueError, KeyError) as e:
                send({"type": "err", "msg": str(e)})
                continue
            if args.work_ms > 0:
                end = t0 + args.work_ms / 1000.0
                while time.perf_counter() < end:
                    pass
            (x, y, w, h), score = tracker.track(frame)
            send({"type": "bbox", "x": x, "y": y, "w": w, "h": h, "score": score})
            if timing:
                timing.write("%.6f\n" % ((time.perf_counter() - t0) * 1000.0))
        elif kind == "bye":
            break
        else:
            send({"type": "err", "msg": "unknown message type"})

    if timing:
        timing.close()


if __name__ == "__main__":
    main()
