"""Command-line pipeline: simulate -> beamform -> featurize -> train-teacher ->
distill -> eval -> transfer-eval -> render -> report.

Exit codes: 0 ok, 1 runtime failure, 2 usage, 3 missing inputs, 4 config or
schema violation, 5 workdir locked by another command.
"""
from __future__ import annotations

import os
import sys

if os.environ.get("ACOUSTIC_KD_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[_var] = os.environ["ACOUSTIC_KD_THREADS"]

import argparse
import hashlib
import json
import logging
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, PipelineConfig, load_config

log = logging.getLogger("acoustic_kd")

EXIT_RUNTIME, EXIT_USAGE, EXIT_MISSING, EXIT_SCHEMA, EXIT_LOCKED = 1, 2, 3, 4, 5


class MissingInput(RuntimeError):
    pass


class WorkdirLocked(RuntimeError):
    pass


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _dump_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=1, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (set, frozenset, tuple)):
        return list(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


class Run:
    """Per-invocation bookkeeping: lock, input/output hashes and the manifest."""

    def __init__(self, command: str, cfg: PipelineConfig, argv):
        self.command, self.cfg, self.argv = command, cfg, list(argv)
        self.work = cfg.workdir
        self.inputs: list[Path] = []
        self.outputs: list[Path] = []
        self._lock: Path | None = None
        self._t0 = time.perf_counter()

    # --- lock
    def __enter__(self):
        self.work.mkdir(parents=True, exist_ok=True)
        lock = self.work / ".lock"
        for _ in range(2):
            try:
                fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            except FileExistsError:
                pid = _read_pid(lock)
                if pid and _alive(pid):
                    raise WorkdirLocked(f"workdir {self.work} is locked by running pid {pid}") from None
                lock.unlink(missing_ok=True)  # stale
                continue
            with os.fdopen(fd, "w") as fh:
                fh.write(str(os.getpid()))
            self._lock = lock
            return self
        raise WorkdirLocked(f"could not acquire {lock}")

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.write_manifest()
        if self._lock is not None:
            self._lock.unlink(missing_ok=True)
        return False

    # --- paths
    def need(self, rel) -> Path:
        p = self.work / rel
        if not p.exists():
            raise MissingInput(f"missing input {p}; run the upstream command first")
        self.inputs.append(p)
        return p

    def out(self, rel) -> Path:
        p = self.work / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        self.outputs.append(p)
        return p

    def provenance(self) -> dict:
        return {"config_hash": self.cfg.config_hash(), "master_seed": self.cfg.master_seed,
                "command": self.command, "version": __version__}

    def write_manifest(self) -> Path:
        rel = lambda p: str(p.relative_to(self.work))  # noqa: E731
        manifest = {
            "command": self.command,
            "argv": self.argv,
            "config_hash": self.cfg.config_hash(),
            "seed": self.cfg.master_seed,
            "inputs": {rel(p): sha256_file(p) for p in sorted(set(self.inputs)) if p.is_file()},
            "outputs": {rel(p): sha256_file(p) for p in sorted(set(self.outputs)) if p.is_file()},
            "wall_time_s": round(time.perf_counter() - self._t0, 3),
        }
        return _dump_json(self.work / "manifests" / f"{self.command}.json", manifest)


def _read_pid(path: Path) -> int | None:
    try:
        return int(path.read_text().strip())
    except (OSError, ValueError):
        return None


def _alive(pid: int) -> bool:
    if pid == os.getpid():
        return True
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


# ------------------------------------------------------------- commands


def cmd_simulate(run: Run, args) -> None:
    from .formats import write_recording
    from .micarray import iter_dataset

    cfg = run.cfg
    for name, spec, mics in (("desk", cfg.dataset_spec(), None), ("transfer", cfg.transfer_spec(), [0])):
        index = []
        for rec in iter_dataset(spec, mics=mics):
            rec.metadata["provenance"] = run.provenance()
            wav = run.out(f"recordings/{name}/take_{rec.take_id:04d}.wav")
            _, side = write_recording(wav, rec)
            run.outputs.append(side)
            index.append({"take_id": rec.take_id, "label": rec.label, "scenario_id": rec.scenario_id,
                          "subject_id": rec.subject_id, "file": wav.name})
        run.outputs.append(_dump_json(run.work / f"recordings/{name}/index.json",
                                      {"takes": index, **run.provenance()}))
        log.info("simulate: %d %s takes", len(index), name)


def _load_index(run: Run, rel: str) -> list[dict]:
    return json.loads(run.need(rel).read_text())["takes"]


def _steering_grid(cfg: PipelineConfig):
    from .beamformer import build_steering_grid
    from .micarray import build_default_geometry

    b = cfg["beamformer"]
    geom = build_default_geometry(cfg["dataset"]["geometry_seed"])
    return build_steering_grid(geom, b["fov_h"], b["fov_v"], b["focus_range"])


def cmd_beamform(run: Run, args) -> None:
    from .beamformer import beamform
    from .formats import read_recording

    grid = _steering_grid(run.cfg)
    takes = _load_index(run, "recordings/desk/index.json")
    freqs = None
    for t in takes:
        rec = read_recording(run.need(f"recordings/desk/{t['file']}"))
        run.inputs.append(run.work / f"recordings/desk/{Path(t['file']).with_suffix('.json')}")
        vol = beamform(rec, grid)
        freqs = vol.bin_frequencies
        np.save(run.out(f"volumes/take_{t['take_id']:04d}.npy"), vol.frames, allow_pickle=False)
    run.outputs.append(_dump_json(run.work / "volumes/index.json", {
        "takes": takes, "frame_rate": 12, "bin_frequencies": freqs,
        "grid": {"height": grid.height, "width": grid.width, "fov_h": grid.fov_h, "fov_v": grid.fov_v,
                 "focus_range": str(grid.focus_range)}, **run.provenance()}))
    log.info("beamform: %d volumes", len(takes))


def cmd_featurize(run: Run, args) -> None:
    from .beamformer import AcousticImageVolume
    from .features import MfccVolume, TakeInfo, chunk_records, make_splits, mfcc_compress
    from .formats import RecordWriter, read_recording

    vindex = json.loads(run.need("volumes/index.json").read_text())
    freqs = np.asarray(vindex["bin_frequencies"])
    takes = _load_index(run, "recordings/desk/index.json")
    with RecordWriter(run.out("features/desk.air1")) as w:
        for t in takes:
            rec = read_recording(run.need(f"recordings/desk/{t['file']}"))
            frames = np.load(run.need(f"volumes/take_{t['take_id']:04d}.npy"))
            mf = mfcc_compress(AcousticImageVolume(frames, vindex["frame_rate"], freqs))
            for r in chunk_records(rec, mf):
                w.append(r)
        n_desk = w.count
    with RecordWriter(run.out("features/transfer.air1")) as w:
        for t in _load_index(run, "recordings/transfer/index.json"):
            rec = read_recording(run.need(f"recordings/transfer/{t['file']}"))
            n_frames = int(round(rec.samples.shape[1] / rec.sample_rate * 12))
            for r in chunk_records(rec, MfccVolume(np.zeros((n_frames, 0, 0, 0), np.float32))):
                w.append(r)
        n_transfer = w.count
    infos = [TakeInfo(t["take_id"], t["label"], t["scenario_id"]) for t in takes]
    split = make_splits(infos, seed=run.cfg["split"]["seed"], min_per_class=run.cfg["split"]["min_per_class"])
    run.outputs.append(_dump_json(run.work / "features/splits.json", {**split.to_dict(), **run.provenance()}))
    for name, n in (("desk", n_desk), ("transfer", n_transfer)):
        run.outputs.append(_dump_json(run.work / f"features/{name}.air1.json", {"records": n, **run.provenance()}))
    log.info("featurize: %d desk records, %d transfer records", n_desk, n_transfer)


# --- shared loaders


def _split(run: Run):
    from .features import SplitAssignment

    return SplitAssignment.from_dict(json.loads(run.need("features/splits.json").read_text()))


def _condition_scenarios(cfg: PipelineConfig, cond: str) -> tuple[int, ...]:
    return tuple(cfg["dataset"]["scenarios"]) if cond == "all" else (int(cond),)


def _desk_records(run: Run):
    from .formats import read_records

    return read_records(run.need("features/desk.air1"))


def _student_data(run: Run, arch: str, records=None, rel="features/desk.air1"):
    from .data import student_dataset
    from .formats import read_records
    from .models import model_input_kind

    records = records if records is not None else read_records(run.need(rel))
    s = run.cfg["student"]
    return student_dataset(records, model_input_kind(arch), s["sample_seconds"], seed=run.cfg.master_seed)


def _save_model(run: Run, name: str, model, meta: dict) -> None:
    from .formats import write_checkpoint

    write_checkpoint(run.out(f"models/{name}.aip1"), model.state_dict())
    run.outputs.append(_dump_json(run.work / f"models/{name}.json",
                                  {"name": name, "spec": model.spec.to_dict(), **meta, **run.provenance()}))


def _model_name(name_or_path: str) -> str:
    """Checkpoint name from a bare name or a path; names can contain dots ("lam0.5")."""
    p = Path(name_or_path)
    return p.stem if p.suffix in (".aip1", ".json") else p.name


def _load_model(run: Run, name_or_path: str):
    from .formats import read_checkpoint
    from .models import ModelSpec, build_model

    name = _model_name(name_or_path)
    meta = json.loads(run.need(f"models/{name}.json").read_text())
    model = build_model(ModelSpec.from_dict(meta["spec"]))
    model.load_state_dict(read_checkpoint(run.need(f"models/{name}.aip1")))
    return model.eval(), meta


def _fmt_num(x: float) -> str:
    return f"{x:g}"


def cmd_train_teacher(run: Run, args) -> None:
    from .data import teacher_dataset
    from .distill import compute_soft_labels, train_supervised
    from .formats import write_soft_labels
    from .models import build_model

    cfg = run.cfg
    split = _split(run)
    data = teacher_dataset(_desk_records(run))
    temp = args.temp if args.temp is not None else cfg["student"]["temperature"]
    for cond in cfg["teacher"]["conditions"]:
        scen = _condition_scenarios(cfg, cond)
        sub = data.select(np.isin(data.scenarios, scen))
        spec = cfg.teacher_spec()
        model = build_model(spec)
        tcfg = cfg.teacher_train_config()
        _, tlog = train_supervised(model, sub, split, tcfg,
                                   log_cb=lambda e, l, a: log.info("teacher s%s epoch %d loss %.4f val %.3f", cond, e, l, a))
        name = f"teacher_{spec.arch}_s{cond}"
        logd = tlog.to_dict()
        logd.pop("wall_time")
        _save_model(run, name, model, {"role": "teacher", "condition": cond, "scenarios": scen, "log": logd})
        soft = compute_soft_labels(model, sub, temp, cfg["student"]["teacher_input_scaling"], teacher_id=name)
        soft_path = run.out(f"soft/{name}_T{_fmt_num(temp)}.asl1")
        write_soft_labels(soft_path, soft.ids, soft.probs)
        run.outputs.append(_dump_json(soft_path.with_suffix(".json"), {
            "teacher": name, "temperature": temp, "condition": cond, "scenarios": scen,
            "input_scaling": cfg["student"]["teacher_input_scaling"], "count": len(soft.ids), **run.provenance()}))
        log.info("teacher %s: best val %.3f at epoch %d", name, tlog.best_val_accuracy, tlog.best_epoch)


def cmd_distill(run: Run, args) -> None:
    from dataclasses import replace

    from .distill import SoftLabelSet, aggregate_soft_labels, distill_student
    from .formats import read_soft_labels
    from .models import build_model

    cfg = run.cfg
    dcfg = cfg.distill_config()
    over = {}
    if args.lam is not None:
        over["lam"] = args.lam
    if args.temp is not None:
        over["temperature"] = args.temp
    if args.lr is not None:
        over["learning_rate"] = args.lr
    if args.seed is not None:
        over["seed"] = args.seed
    try:
        dcfg = replace(dcfg, **over)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if args.teacher_soft:
        soft_path = Path(args.teacher_soft)
        if not soft_path.is_absolute() and not soft_path.exists():
            soft_path = run.work / soft_path
    else:
        cond = cfg["teacher"]["conditions"][0]
        soft_path = run.work / f"soft/teacher_{cfg['teacher']['arch']}_s{cond}_T{_fmt_num(dcfg.temperature)}.asl1"
    run.need(soft_path)
    side = json.loads(run.need(soft_path.with_suffix(".json")).read_text())
    if abs(side["temperature"] - dcfg.temperature) > 1e-12:
        raise ConfigError(f"soft labels were computed at T={side['temperature']}, distill asked for T={dcfg.temperature}")
    ids, probs = read_soft_labels(soft_path)
    soft = SoftLabelSet(ids, probs, side["temperature"], side["teacher"])
    split = _split(run)
    spec = cfg.student_spec()
    if args.seed is not None:
        spec.seed = args.seed
    data = _student_data(run, spec.arch)
    data = data.select(np.isin(data.scenarios, side["scenarios"]))
    sample_soft = aggregate_soft_labels(soft, data)
    model = build_model(spec)
    _, slog = distill_student(model, sample_soft, data, split, dcfg,
                              log_cb=lambda e, l, a: log.info("student epoch %d loss %.4f val %.3f", e, l, a))
    name = args.name or (f"student_{spec.arch}_s{side['condition']}_lam{_fmt_num(dcfg.lam)}"
                         f"_T{_fmt_num(dcfg.temperature)}_seed{dcfg.seed}")
    logd = slog.to_dict()
    logd.pop("wall_time")
    _save_model(run, name, model, {"role": "student", "condition": side["condition"], "scenarios": side["scenarios"],
                                   "teacher": side["teacher"], "log": logd})
    log.info("student %s: best val %.3f at epoch %d", name, slog.best_val_accuracy, slog.best_epoch)


def _model_names(run: Run, only: str | None, role: str | None = None) -> list[str]:
    if only:
        return [_model_name(only)]
    names = []
    for p in sorted((run.work / "models").glob("*.json")):
        meta = json.loads(p.read_text())
        if role is None or meta.get("role") == role:
            names.append(meta["name"])
    if not names:
        raise MissingInput(f"no trained models found in {run.work / 'models'}")
    return names


def cmd_eval(run: Run, args) -> None:
    from .data import teacher_dataset
    from .evaluation import confusion, evaluate_cross_scenario

    cfg = run.cfg
    split = _split(run)
    records = _desk_records(run)
    cache = {}
    for name in _model_names(run, args.model):
        model, meta = _load_model(run, name)
        arch = meta["spec"]["arch"]
        if arch not in cache:
            cache[arch] = teacher_dataset(records) if arch == "dualcamnet" else _student_data(run, arch, records)
        data = cache[arch]
        cond = meta["condition"]
        rows = {}
        if args.scenario_matrix:
            key = cond if cond == "all" else int(cond)
            m = evaluate_cross_scenario({key: model}, data, split, cfg["dataset"]["scenarios"], rows=[key])
            rows = {"rows": list(map(str, m.rows)), "cols": list(map(str, m.cols)),
                    "accuracy": m.accuracy, "counts": m.counts}
            path = run.out(f"eval/{name}_matrix.csv")
            path.write_text(m.to_csv())
        own = data.select(np.isin(data.scenarios, meta["scenarios"])).split(split, "test")
        conf = confusion(model, own)
        run.out(f"eval/{name}_confusion.csv").write_text(conf.to_csv())
        run.outputs.append(_dump_json(run.work / f"eval/{name}.json", {
            "model": name, "role": meta["role"], "arch": arch, "condition": cond,
            "family": name.replace(f"_s{cond}", "", 1), "test_accuracy": conf.accuracy,
            "confusion": conf.counts, "matrix": rows, **run.provenance()}))
        log.info("eval %s: own-scenario test accuracy %.3f", name, conf.accuracy)


def cmd_transfer_eval(run: Run, args) -> None:
    from .evaluation import (evaluate_feature_matrix, format_transfer_table, transfer_csv, transfer_evaluate,
                             transfer_split)
    from .formats import read_records

    cfg = run.cfg
    layers = tuple(args.layers.split(",")) if args.layers else cfg["transfer_eval"]["layers"]
    records = read_records(run.need("features/transfer.air1"))
    for name in _model_names(run, args.model, role="student"):
        model, meta = _load_model(run, name)
        arch = meta["spec"]["arch"]
        bad = [t for t in layers if t not in model.tags]
        if bad:
            raise ConfigError(f"unknown layer tag(s) {bad} for {arch}; available: {', '.join(model.tags)}")
        data = _student_data(run, arch, records)
        split = transfer_split(data, cfg["transfer_eval"]["seed"])
        reports = transfer_evaluate(model, layers, data, split, training_classes=cfg["dataset"]["classes"],
                                    regularization=cfg["eval"]["svm_regularization"])
        raw = data.inputs.reshape(len(data), -1).astype(np.float64)
        reports.append(evaluate_feature_matrix(f"raw/{data.kind}", raw, data, split,
                                               cfg["eval"]["svm_regularization"]))
        for r in reports[:-1]:
            r.layer = f"{arch}/{r.layer}"
        run.out(f"transfer/{name}.csv").write_text(transfer_csv(reports))
        run.out(f"transfer/{name}.txt").write_text(format_transfer_table(reports, f"transfer: {name}") + "\n")
        log.info("transfer-eval %s done", name)


def cmd_render(run: Run, args) -> None:
    from .beamformer import AcousticImageVolume, export_heatmap_png, render_heatmap

    r = run.cfg["render"]
    take = args.take if args.take is not None else r["take"]
    frame = args.frame if args.frame is not None else r["frame"]
    vindex = json.loads(run.need("volumes/index.json").read_text())
    frames = np.load(run.need(f"volumes/take_{take:04d}.npy"), mmap_mode="r")
    vol = AcousticImageVolume(frames, vindex["frame_rate"], np.asarray(vindex["bin_frequencies"]))
    img = render_heatmap(vol, frame, tuple(r["band"]))
    export_heatmap_png(img, run.out(f"renders/take_{take:04d}_frame_{frame:03d}.png"))
    log.info("render: argmax pixel %s", img.argmax_pixel)


_COND_ORDER = {"1": 0, "2": 1, "3": 2, "all": 3}


def build_report(work: Path) -> tuple[str, str]:
    evals = sorted((work / "eval").glob("*.json")) if (work / "eval").is_dir() else []
    if not evals:
        raise MissingInput("no evaluations found")
    families: dict[str, list[dict]] = {}
    for p in evals:
        e = json.loads(p.read_text())
        families.setdefault(e["family"], []).append(e)
    text, rows_csv = [], ["family,train,test,accuracy,count"]
    for fam in sorted(families):
        entries = sorted(families[fam], key=lambda e: _COND_ORDER.get(str(e["condition"]), 9))
        text.append(f"== {fam}")
        with_matrix = [e for e in entries if e["matrix"]]
        if with_matrix:
            cols = with_matrix[0]["matrix"]["cols"]
            text.append("train\\test " + " ".join(f"{c:>8}" for c in cols))
            for cond in ("1", "2", "3", "all"):
                hit = [e for e in with_matrix if str(e["condition"]) == cond]
                if not hit:
                    text.append(f"{cond:>10} " + " ".join(f"{'-':>8}" for _ in cols))
                    continue
                m = hit[0]["matrix"]
                acc = m["accuracy"][0]
                text.append(f"{cond:>10} " + " ".join(f"{100 * a:8.1f}" for a in acc))
                for c, a, n in zip(cols, acc, m["counts"][0]):
                    rows_csv.append(f"{fam},{cond},{c},{a:.6f},{n}")
        for e in entries:
            text.append(f"confusion ({e['model']}, own-scenario test, accuracy {100 * e['test_accuracy']:.1f}%)")
            for row in e["confusion"]:
                text.append("  " + " ".join(f"{v:4d}" for v in row))
        text.append("")
    tdir = work / "transfer"
    for p in sorted(tdir.glob("*.txt")) if tdir.is_dir() else []:
        text.append(p.read_text().rstrip())
        text.append("")
    return "\n".join(text) + "\n", "\n".join(rows_csv) + "\n"


def cmd_report(run: Run, args) -> None:
    for p in sorted((run.work / "eval").glob("*.json")) if (run.work / "eval").is_dir() else []:
        run.inputs.append(p)
    text, table = build_report(run.work)
    run.out("report/report.txt").write_text(text)
    run.out("report/matrices.csv").write_text(table)
    sys.stdout.write(text)


COMMANDS = {
    "simulate": cmd_simulate, "beamform": cmd_beamform, "featurize": cmd_featurize,
    "train-teacher": cmd_train_teacher, "distill": cmd_distill, "eval": cmd_eval,
    "transfer-eval": cmd_transfer_eval, "render": cmd_render, "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", help="INI config file")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a config key (repeatable)")
    common.add_argument("--workdir", help="override paths.workdir")
    common.add_argument("--verbose", "-v", action="store_true")
    p = argparse.ArgumentParser(prog="acoustic-kd", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in ("simulate", "beamform", "featurize", "report"):
        sub.add_parser(name, parents=[common])
    t = sub.add_parser("train-teacher", parents=[common])
    t.add_argument("--temp", type=float, help="temperature for the emitted soft labels")
    d = sub.add_parser("distill", parents=[common])
    d.add_argument("--teacher-soft", help="ASL1 soft-label file")
    d.add_argument("--lambda", dest="lam", type=float)
    d.add_argument("--temp", type=float)
    d.add_argument("--lr", type=float)
    d.add_argument("--seed", type=int)
    d.add_argument("--name", help="checkpoint name")
    e = sub.add_parser("eval", parents=[common])
    e.add_argument("--model", help="checkpoint name or path (default: all)")
    e.add_argument("--scenario-matrix", action="store_true")
    x = sub.add_parser("transfer-eval", parents=[common])
    x.add_argument("--layers", help="comma-separated feature tags")
    x.add_argument("--model", help="student checkpoint (default: all students)")
    r = sub.add_parser("render", parents=[common])
    r.add_argument("--take", type=int)
    r.add_argument("--frame", type=int)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)  # exits 2 on usage errors
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        overrides = list(args.overrides)
        if args.workdir:
            overrides.append(f"paths.workdir={args.workdir}")
        if args.config and not Path(args.config).exists():
            raise MissingInput(f"config file {args.config} not found")
        cfg = load_config(args.config, overrides, env=os.environ if not args.workdir else None)
        with Run(args.command, cfg, argv) as run:
            COMMANDS[args.command](run, args)
    except MissingInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except WorkdirLocked as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LOCKED
    except Exception as exc:  # single-line diagnostic for anything else
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
