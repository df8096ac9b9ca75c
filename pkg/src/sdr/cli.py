"""Command-line entry point: ``sdr <command> [options]``.

Exit codes: 0 ok, 1 gradcheck failure, 2 bad config, 3 output directory not
empty (use --force), 4 data missing, 5 training diverged.
"""
import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import checks, config, io
from .clipgen import gen_dataset, style_shift_specs
from .trainer import ConfigError, TrainingDivergence, ablation_config, train

log = logging.getLogger("sdr")

EXIT_OK, EXIT_GRADCHECK, EXIT_CONFIG, EXIT_EXISTS, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3, 4, 5

SWEEP_HEADER = ["n", "seed", "auc", "acc"]
ABLATE_HEADER = ["tpa", "trfi", "contrastive", "seed", "auc", "acc"]

FILES_HELP = f"""\
files written:
  gen-data  <out>/<split>.sdrc             clip archive (magic SDRC)
            <out>/<split>.manifest.csv     header: {",".join(io.MANIFEST_HEADER)}
  train     <out>/checkpoint.sdr1          parameters (magic SDR1, CRC32 trailer)
            <out>/history.csv              header: {",".join(io.HISTORY_HEADER)}
            <out>/metrics.json             seed, config_digest, steps, per-split auc/acc
  sweep-branches <out>/sweep.csv           header: {",".join(SWEEP_HEADER)}
  ablate    <out>/ablation.csv             header: {",".join(ABLATE_HEADER)}

exit codes: 0 ok, 1 gradcheck failure, 2 invalid config, 3 output directory
not empty (pass --force), 4 data missing, 5 non-finite value during training.

environment: SDR_THREADS caps worker processes for sweep-branches and ablate
(default 1, sequential). SDR_PURE_PYTHON=1 disables the compiled kernels.
"""


class CLIError(Exception):
    def __init__(self, code, msg):
        super().__init__(msg)
        self.code = code


# ---------------------------------------------------------------- helpers

def _prepare_out(path, force):
    if os.path.isdir(path) and os.listdir(path) and not force:
        raise CLIError(EXIT_EXISTS, f"{path} exists and is not empty (use --force)")
    os.makedirs(path, exist_ok=True)


def _load_splits(data_dir):
    if not os.path.isdir(data_dir):
        raise CLIError(EXIT_DATA, f"data directory {data_dir} not found")
    names = sorted(f[:-5] for f in os.listdir(data_dir) if f.endswith(".sdrc"))
    if not names:
        raise CLIError(EXIT_DATA, f"no .sdrc archives in {data_dir}")
    try:
        return {n: io.read_archive(os.path.join(data_dir, n + ".sdrc")) for n in names}
    except io.FormatError as exc:
        raise CLIError(EXIT_DATA, str(exc)) from exc


def _workers():
    try:
        return max(1, int(os.environ.get("SDR_THREADS", "1")))
    except ValueError:
        raise CLIError(EXIT_CONFIG, "SDR_THREADS must be an integer")


def _style_shift_data(opts, seed):
    counts, data_seed, kw = config.style_shift(opts["style_shift"])
    specs = style_shift_specs(seed=data_seed + seed, **counts, **kw)
    return gen_dataset(specs["train"])[0], gen_dataset(specs["test"])[0]


def _run_one(job):
    """Worker body for sweeps and ablations. job = (cfg, opts, seed, data_dir)."""
    cfg, opts, seed, data_dir = job
    if data_dir:
        splits = _load_splits(data_dir)
        tr, te = splits[opts["train_split"]], splits["test"]
    else:
        tr, te = _style_shift_data(opts, seed)
    _, _, final = train(cfg, tr, {"test": te})
    return final["test"]


def _run_table(jobs, rows, header, out_csv):
    """Run jobs (sequentially or in a pool) and append one CSV row per finished job, in order."""
    with open(out_csv, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        fh.flush()
        n = _workers()
        if n == 1:
            results = map(_run_one, jobs)
        else:
            pool = ProcessPoolExecutor(max_workers=n)
            results = pool.map(_run_one, jobs)
        for row, m in zip(rows, results):
            w.writerow(row + [repr(m["auc"]), repr(m["acc"])])
            fh.flush()
            log.info("%s auc=%.4f acc=%.4f", dict(zip(header, row)), m["auc"], m["acc"])
        if n > 1:
            pool.shutdown()


# ---------------------------------------------------------------- commands

def cmd_gen_data(args):
    specs = config.data_splits(config.load(args.config))
    _prepare_out(args.out, args.force)
    for name, spec in specs.items():
        clips, manifest = gen_dataset(spec)
        io.write_archive(os.path.join(args.out, name + ".sdrc"), clips)
        io.write_manifest(os.path.join(args.out, name + ".manifest.csv"), manifest)
        real = sum(c.label == 0 for c in clips)
        print(f"{name}: {len(clips)} clips ({real} real, {len(clips) - real} fake)")
    return EXIT_OK


def cmd_train(args):
    doc = config.load(args.config)
    cfg = config.train_config(doc)
    opts = config.run_options(doc)
    splits = _load_splits(args.data)
    if opts["train_split"] not in splits:
        raise CLIError(EXIT_DATA, f"split {opts['train_split']!r} not in {args.data}")
    eval_names = opts["eval_splits"] or sorted(splits)
    missing = [s for s in eval_names if s not in splits]
    if missing:
        raise CLIError(EXIT_DATA, f"eval split {missing[0]!r} not in {args.data}")
    train_clips = splits[opts["train_split"]]

    if args.dry_run:
        from .substrate import precision
        from .trainer import BalancedSampler, SDRModel

        T, C = train_clips[0].frames.shape[:2]
        with precision(cfg.precision):
            model = SDRModel(cfg, T, C)
        per_epoch = BalancedSampler(train_clips, cfg.batch_size, cfg.seed).steps_per_epoch()
        total = per_epoch * cfg.epochs
        if cfg.max_steps:
            total = min(total, cfg.max_steps)
        print(f"parameters: {model.num_parameters()}")
        print(f"steps: {per_epoch} per epoch x {cfg.epochs} epochs -> {total} steps")
        print(f"eval splits: {', '.join(eval_names)}")
        return EXIT_OK

    _prepare_out(args.out, args.force)
    try:
        model, history, final = train(cfg, train_clips, {s: splits[s] for s in eval_names})
    except TrainingDivergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    io.save_checkpoint(os.path.join(args.out, "checkpoint.sdr1"), model.store.state())
    io.write_history(os.path.join(args.out, "history.csv"), history)
    record = dict(seed=cfg.seed, config_digest=config.digest(doc), steps=len(history.steps()), splits=final)
    with open(os.path.join(args.out, "metrics.json"), "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for split, m in final.items():
        print(f"{split}: auc={m['auc']:.4f} acc={m['acc']:.4f}")
    return EXIT_OK


def cmd_sweep_branches(args):
    doc = config.load(args.config)
    cfg = config.train_config(doc)
    opts = config.run_options(doc)
    n_list = [int(x) for x in args.n_list.split(",")] if args.n_list else opts["n_list"]
    if not all(1 <= n <= 5 for n in n_list):
        raise CLIError(EXIT_CONFIG, "n-list: values must be in [1, 5]")
    if args.data:
        _load_splits(args.data)
    _prepare_out(args.out, args.force)
    jobs, rows = [], []
    for n in n_list:
        for seed in opts["seeds"]:
            jobs.append((cfg.replace(n_branches=n, seed=seed), opts, seed, args.data))
            rows.append([n, seed])
    _run_table(jobs, rows, SWEEP_HEADER, os.path.join(args.out, "sweep.csv"))
    return EXIT_OK


def cmd_ablate(args):
    from .trainer import ABLATION_ROWS

    doc = config.load(args.config)
    cfg = config.train_config(doc)
    opts = config.run_options(doc)
    if args.data:
        _load_splits(args.data)
    _prepare_out(args.out, args.force)
    jobs, rows = [], []
    for toggles in ABLATION_ROWS:
        for seed in opts["seeds"]:
            jobs.append((ablation_config(cfg.replace(seed=seed), *toggles), opts, seed, args.data))
            rows.append([int(t) for t in toggles] + [seed])
    _run_table(jobs, rows, ABLATE_HEADER, os.path.join(args.out, "ablation.csv"))
    return EXIT_OK


def cmd_gradcheck(args):
    gc = {}
    if args.config:
        gc = dict(config.run_options(config.load(args.config))["gradcheck"])
    seed, h, tol = gc.pop("seed", 0), gc.pop("h", 1e-5), gc.pop("tol", 1e-4)
    corrupt = ("all", args.corrupt_grad) if args.corrupt_grad else None
    try:
        reports = checks.run(seed=seed, h=h, tol=tol, corrupt=corrupt, **gc)
    except (ValueError, TypeError) as exc:
        raise CLIError(EXIT_CONFIG, f"gradcheck: {exc}") from exc
    ok = True
    for term, r in reports.items():
        status = "PASS" if r.passed else "FAIL"
        line = f"{term:6s} {status} max_rel_error={r.max_rel_error:.3e} tol={tol:g} coords={r.checked}"
        if not r.passed:
            ok = False
            line += f" worst={r.worst_name}{list(map(int, r.worst_index))}"
        print(line)
    return EXIT_OK if ok else EXIT_GRADCHECK


# ---------------------------------------------------------------- parser

def build_parser():
    p = argparse.ArgumentParser(prog="sdr", description="Spatial-dependency-reduced video detector on synthetic clips.",
                                epilog=FILES_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_, out=True):
        sp = sub.add_parser(name, help=help_, description=help_, epilog=FILES_HELP,
                            formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.set_defaults(fn=fn)
        if out:
            sp.add_argument("--out", required=True, help="output directory")
            sp.add_argument("--force", action="store_true", help="write into a non-empty output directory")
        return sp

    g = add("gen-data", cmd_gen_data, "generate clip archives and manifests")
    g.add_argument("--config", required=True)

    t = add("train", cmd_train, "train one model and evaluate it")
    t.add_argument("--config", required=True)
    t.add_argument("--data", required=True, help="directory produced by gen-data")
    t.add_argument("--dry-run", action="store_true", help="print parameter count and step plan only")

    s = add("sweep-branches", cmd_sweep_branches, "style-shift AUC per branch count and seed")
    s.add_argument("--config", required=True)
    s.add_argument("--n-list", help="comma-separated branch counts (default from config)")
    s.add_argument("--data", help="use archives instead of generating the style-shift protocol per seed")

    a = add("ablate", cmd_ablate, "the four (tpa, trfi, contrastive) rows over the config's seeds")
    a.add_argument("--config", required=True)
    a.add_argument("--data", help="use archives instead of generating the style-shift protocol per seed")

    c = add("gradcheck", cmd_gradcheck, "finite-difference check of every loss term on a tiny float64 model",
            out=False)
    c.add_argument("--config", help="optional run config; reads its 'gradcheck' section")
    c.add_argument("--corrupt-grad", metavar="TENSOR", help="self-test: add 1 to TENSOR's analytic gradient")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
