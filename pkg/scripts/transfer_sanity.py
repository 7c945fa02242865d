"""Penultimate features of distilled students vs raw spectrogram pixels on the held-out transfer classes.

For each seed s: a distilled HearNet-mini trained with seed s is scored by k-NN
and linear SVM on transfer split s, next to a k-NN/SVM on the raw spectrogram.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from acoustic_kd.data import teacher_dataset
from acoustic_kd.evaluation import format_transfer_table
from acoustic_kd.experiments import (desk_records, desk_split, select_desk_teacher, train_students, transfer_records,
                                     transfer_sanity)
from acoustic_kd.formats import read_checkpoint
from acoustic_kd.models import ModelSpec, build_model


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--teacher", help="AIP1 checkpoint of a w=1/4 DualCamNet teacher (default: train one)")
    args = ap.parse_args()
    t0 = time.time()
    records = desk_records()
    trecords = transfer_records()
    if args.teacher:
        teacher = build_model(ModelSpec("dualcamnet", classes=6, width=0.25, dtype="float32"))
        teacher.load_state_dict(read_checkpoint(args.teacher))
        split = desk_split(teacher_dataset(records))
    else:
        res, _ = select_desk_teacher(records)
        teacher, split = res.model, res.split
        print(f"teacher: test {res.test_accuracy:.3f} [{time.time() - t0:.0f}s]", flush=True)
    margins = []
    for seed in args.seeds:
        students = {}
        train_students(teacher.eval(), records, split, (seed,), epochs=args.epochs, students_out=students)
        raw, (rep,) = transfer_sanity([students[(seed, 0.5)]], trecords, seed)
        print(format_transfer_table([rep, raw], f"seed {seed}"), flush=True)
        margins.append(rep.knn_accuracy - raw.knn_accuracy)
    print(f"mean k-NN margin over raw pixels: {100 * np.mean(margins):+.1f} points [{time.time() - t0:.0f}s]")


if __name__ == "__main__":
    main()
