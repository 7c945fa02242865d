"""Hard-label vs distilled HearNet-mini on the scenario-1 -> scenario-3 cell, over several seeds.

Trains the scenario-1 DualCamNet-mini teacher first (or loads it with --teacher),
then one hard-label (lambda=0) and one distilled student per seed.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from acoustic_kd.experiments import desk_records, select_desk_teacher, train_students
from acoustic_kd.formats import read_checkpoint, write_checkpoint
from acoustic_kd.models import ModelSpec, build_model


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--lam", type=float, default=0.5)
    ap.add_argument("--temperature", type=float, default=1.0)
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--lr", type=float, default=1e-4)
    ap.add_argument("--teacher", help="AIP1 checkpoint of a w=1/4 DualCamNet teacher")
    ap.add_argument("--save-teacher", help="write the trained teacher here")
    args = ap.parse_args()
    t0 = time.time()
    records = desk_records()
    if args.teacher:
        from acoustic_kd.data import teacher_dataset
        from acoustic_kd.experiments import desk_split

        teacher = build_model(ModelSpec("dualcamnet", classes=6, width=0.25, dtype="float32"))
        teacher.load_state_dict(read_checkpoint(args.teacher))
        split = desk_split(teacher_dataset(records))
    else:
        res, _ = select_desk_teacher(records)
        teacher, split = res.model, res.split
        print(f"teacher: best val {res.log.best_val_accuracy:.3f}, test {res.test_accuracy:.3f} "
              f"[{time.time() - t0:.0f}s]", flush=True)
        if args.save_teacher:
            write_checkpoint(args.save_teacher, teacher.state_dict())
    trend = train_students(teacher.eval(), records, split, tuple(args.seeds), lam=args.lam,
                           temperature=args.temperature, epochs=args.epochs, learning_rate=args.lr)
    print(f"{'seed':>4} {'hard':>7} {'distilled':>9} {'diff':>7}")
    for s, h, d in zip(args.seeds, trend.hard, trend.distilled):
        print(f"{s:>4} {100 * h:7.1f} {100 * d:9.1f} {100 * (d - h):+7.1f}")
    diff = trend.differences
    print(f"mean hard {100 * np.mean(trend.hard):.1f}, mean distilled {100 * np.mean(trend.distilled):.1f}, "
          f"mean diff {100 * diff.mean():+.1f}, seeds with diff >= 0: {int(np.sum(diff >= 0))}/{len(diff)} "
          f"[{time.time() - t0:.0f}s]")


if __name__ == "__main__":
    main()
