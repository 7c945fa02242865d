"""Train DualCamNet-mini (w=1/4) on scenario 1 of the desk benchmark and report test accuracy.

With several --seeds, one teacher is trained per seed and the best by validation
accuracy is kept (ties -> first seed); every seed's test accuracy is printed too.
"""
from __future__ import annotations

import argparse
import time

from acoustic_kd.experiments import desk_records, select_desk_teacher
from acoustic_kd.formats import write_checkpoint


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--patience", type=int, default=15)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--scenario", type=int, default=1)
    ap.add_argument("--save", help="write the selected teacher's AIP1 checkpoint here")
    args = ap.parse_args()
    t0 = time.time()
    records = desk_records(progress=lambda i, r: print(f"rendered take {i}", flush=True))
    print(f"{len(records)} records loaded in {time.time() - t0:.0f}s")
    best, runs = select_desk_teacher(
        records, tuple(args.seeds), scenario=args.scenario, epochs=args.epochs, patience=args.patience,
        log_cb=lambda s, e, l, a: print(f"seed {s} epoch {e:3d} loss {l:.4f} val {a:.3f} "
                                        f"[{time.time() - t0:.0f}s]", flush=True))
    for seed, r in zip(args.seeds, runs):
        print(f"seed {seed}: best epoch {r.log.best_epoch}, val {r.log.best_val_accuracy:.3f}, "
              f"test {r.test_accuracy:.3f}")
    print(f"selected seed {best.log.seed}: test {best.test_accuracy:.3f}, total {time.time() - t0:.0f}s")
    if args.save:
        write_checkpoint(args.save, best.model.state_dict())


if __name__ == "__main__":
    main()
