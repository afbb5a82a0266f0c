"""Command-line entry point: ``deepl0 <command> [flags]``.

Commands: gen-data, learn-dict, solve, train, eval, reproduce. Every command
accepts ``--seed``, ``--threads`` and ``--config file.json`` (keys are the
long flag names with dashes replaced by underscores; CLI flags win).
Progress goes to stderr, data only to files.
"""
import argparse
import contextlib
import json
import logging
import os
import sys

import numpy as np

from . import data_io, encoders, metrics, reproduce, solvers, training

log = logging.getLogger("deepl0")

# flags that do not change results and stay out of the fingerprint
_VOLATILE = {"command", "config", "threads", "out", "report", "trace", "func", "verbose"}


class UsageError(Exception):
    pass


def fingerprint(args):
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in _VOLATILE}
    return metrics.config_fingerprint(cfg)


def _need(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError("missing required flag(s): " + ", ".join(
            "--" + n.replace("_", "-") for n in missing))


def _write_text(path, text):
    with open(path, "w", newline="") as f:
        f.write(text)


# -- commands ---------------------------------------------------------------

def cmd_gen_data(args):
    os.makedirs(args.out, exist_ok=True)
    fp = fingerprint(args)
    if args.idx_images:
        images = data_io.idx_read(args.idx_images)
        if args.limit:
            images = images[:args.limit]
        X, keep = data_io.patch_preprocess(images, (args.size, args.size), args.std_floor,
                                           return_mask=True)
        data_io.save_matrix(os.path.join(args.out, "samples.dl0m"), X, fp)
        if args.idx_labels:
            labels = data_io.idx_read(args.idx_labels)[:len(keep)][keep]
            data_io.save_matrix(os.path.join(args.out, "labels.dl0m"), labels[:, None], fp)
        log.info("kept %d of %d patches", len(X), len(images))
        return 0
    _need(args, "m", "p", "n", "sparsity")
    out = data_io.synth_generate(args.m, args.p, args.n, args.sparsity, args.noise, args.seed,
                                 n_classes=args.classes)
    dct, X, codes = out[:3]
    if args.standardize:
        X, keep = data_io.standardize(X, args.std_floor)
        codes = codes[keep]
        if args.classes:
            out = out[:3] + (out[3][keep],)
    data_io.save_matrix(os.path.join(args.out, "samples.dl0m"), X, fp)
    data_io.save_matrix(os.path.join(args.out, "codes_true.dl0m"), codes, fp)
    data_io.save_dictionary(os.path.join(args.out, "dictionary.dl0m"), dct, fp)
    if args.classes:
        data_io.save_matrix(os.path.join(args.out, "labels.dl0m"), out[3][:, None], fp)
    log.info("wrote %d samples to %s", len(X), args.out)
    return 0


def cmd_learn_dict(args):
    _need(args, "data", "p")
    X = data_io.load_matrix(args.data)
    dct, hist = solvers.learn_dictionary(X, args.p, args.lam, args.epochs,
                                         batch_size=args.batch_size, seed=args.seed,
                                         return_history=True)
    for e, v in enumerate(hist):
        log.info("epoch %d reconstruction error %.6g", e, v)
    data_io.save_dictionary(args.out, dct, fingerprint(args))
    return 0


def cmd_solve(args):
    _need(args, "data", "dict")
    X = data_io.load_matrix(args.data)
    dct = data_io.load_dictionary(args.dict)
    if args.regime == "l0reg":
        tr = solvers.iht_l0reg_solve(X, dct, args.lam, args.iters, warm_start=not args.no_warm_start,
                                     ista_iters=args.ista_iters)
    else:
        _need(args, "M")
        tr = solvers.iht_msparse_solve(X, dct, args.M, args.iters,
                                       warm_start=not args.no_warm_start,
                                       ista_iters=args.ista_iters)
    fp = fingerprint(args)
    data_io.save_codes(args.out, tr.final_code, fp)
    if args.trace:
        obj = np.atleast_2d(tr.objective_per_iter.T).T
        lines = [f"# config {fp}", "iter,mean_objective,max_objective"]
        lines += [f"{k},{float(row.mean())!r},{float(row.max())!r}" for k, row in enumerate(obj)]
        _write_text(args.trace, "\n".join(lines) + "\n")
    log.info("solved %d samples in %d iterations", len(X), tr.iterates)
    return 0


def _train_config(args):
    return training.TrainConfig(
        learning_rate=args.lr, batch_size=args.batch_size, epochs=args.epochs,
        sigma0=args.sigma0, sigma_divisor=args.sigma_divisor, sigma_floor=args.sigma_floor,
        loss=args.loss, n_classes=args.classes, grad_clip=args.grad_clip, seed=args.seed)


def cmd_train(args):
    _need(args, "data")
    X = data_io.load_matrix(args.data)
    cfg = _train_config(args)
    if args.kind == "mlp":
        _need(args, "p")
        params = encoders.init_baseline(X.shape[1], args.p, seed=args.seed)
    else:
        _need(args, "dict")
        dct = data_io.load_dictionary(args.dict)
        params = encoders.init_from_dictionary(dct, args.kind, lam=args.lam, M=args.M, K=args.K)
    targets = labels = None
    if args.loss == "regression":
        _need(args, "targets")
        targets = data_io.load_matrix(args.targets)
    elif args.loss == "classification":
        _need(args, "labels")
        labels = data_io.load_matrix(args.labels)[:, 0].astype(np.int64)
    params, report = training.sgd_train(params, X, cfg, targets=targets, labels=labels)
    fp = fingerprint(args)
    final_sigma = report.rows[-1]["sigma"] if report.rows else cfg.sigma0
    data_io.save_checkpoint(params, args.out, metadata={"config_hash": fp, "sigma": final_sigma})
    if args.report:
        _write_text(args.report, report.to_csv(fp))
    return 0


def cmd_eval(args):
    _need(args, "checkpoint", "data")
    params, meta = data_io.load_checkpoint(args.checkpoint, return_metadata=True)
    X = data_io.load_matrix(args.data)
    codes = encoders.encode(params, X)
    fp = fingerprint(args)
    reports = []
    if args.metric in ("prediction", "support"):
        _need(args, "targets")
        ref = data_io.load_matrix(args.targets)
        reports.append(metrics.EvalReport(
            "prediction_error", metrics.prediction_error(codes, ref, per_sample=args.per_sample),
            len(X), fp))
        if args.metric == "support" or params.kind is encoders.Kind.MSPARSE:
            reports.append(metrics.EvalReport("support_error", metrics.support_error(codes, ref),
                                              len(X), fp))
    else:
        _need(args, "labels")
        if params.head is None:
            raise UsageError("checkpoint has no classification/clustering head")
        labels = data_io.load_matrix(args.labels)[:, 0].astype(np.int64)
        assign = np.argmax(-codes @ params.head.T, axis=1)
        if args.metric == "classification":
            value = metrics.classification_error(assign, labels)
        else:
            value = metrics.clustering_error(assign, labels, params.head.shape[0])
        reports.append(metrics.EvalReport(f"{args.metric}_error", value, len(X), fp))
    metrics.append_reports(args.out, reports)
    for r in reports:
        log.info("%s = %.6g", r.metric, r.value)
    return 0


def cmd_reproduce(args):
    keys = reproduce.ReproduceConfig.__dataclass_fields__
    cfg = reproduce.ReproduceConfig(**{k: getattr(args, k) for k in keys if hasattr(args, k)})
    rows = reproduce.run(cfg)
    _write_text(args.out, reproduce.to_csv(rows, cfg))
    for r in rows:
        log.info("%-15s %-17s %.4f", r.method, r.metric, r.value)
    return 0


# -- parser -----------------------------------------------------------------

def _common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None, help="cap BLAS worker threads")
    p.add_argument("--config", default=None, help="JSON file with flag values")
    p.add_argument("-v", "--verbose", action="store_true")


def _train_flags(p):
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--sigma0", type=float, default=0.2)
    p.add_argument("--sigma-divisor", type=float, default=10.0)
    p.add_argument("--sigma-floor", type=float, default=0.01)
    p.add_argument("--grad-clip", type=float, default=None)


def build_parser():
    parser = argparse.ArgumentParser(prog="deepl0", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate synthetic data or ingest MNIST IDX files")
    g.add_argument("--m", type=int)
    g.add_argument("--p", type=int)
    g.add_argument("--n", type=int)
    g.add_argument("--sparsity", type=int)
    g.add_argument("--noise", type=float, default=0.0)
    g.add_argument("--classes", type=int, default=0)
    g.add_argument("--standardize", action="store_true")
    g.add_argument("--idx-images")
    g.add_argument("--idx-labels")
    g.add_argument("--limit", type=int, default=None)
    g.add_argument("--size", type=int, default=16)
    g.add_argument("--std-floor", type=float, default=0.02)
    g.add_argument("--out", default="data")
    g.set_defaults(func=cmd_gen_data)

    d = sub.add_parser("learn-dict", help="learn a dictionary from samples")
    d.add_argument("--data")
    d.add_argument("--p", type=int)
    d.add_argument("--lam", type=float, default=0.1)
    d.add_argument("--epochs", type=int, default=10)
    d.add_argument("--batch-size", type=int, default=128)
    d.add_argument("--out", default="dictionary.dl0m")
    d.set_defaults(func=cmd_learn_dict)

    s = sub.add_parser("solve", help="compute codes with the iterative solvers")
    s.add_argument("--data")
    s.add_argument("--dict")
    s.add_argument("--regime", choices=("l0reg", "msparse"), default="l0reg")
    s.add_argument("--lam", type=float, default=0.5)
    s.add_argument("--M", type=int)
    s.add_argument("--iters", type=int, default=1000)
    s.add_argument("--ista-iters", type=int, default=100)
    s.add_argument("--no-warm-start", action="store_true")
    s.add_argument("--out", default="codes.dl0m")
    s.add_argument("--trace", default=None)
    s.set_defaults(func=cmd_solve)

    t = sub.add_parser("train", help="train an encoder")
    t.add_argument("--data")
    t.add_argument("--targets")
    t.add_argument("--labels")
    t.add_argument("--dict")
    t.add_argument("--kind", choices=[k.value for k in encoders.Kind], default="l0reg")
    t.add_argument("--lam", type=float, default=0.5)
    t.add_argument("--M", type=int)
    t.add_argument("--K", type=int, default=2)
    t.add_argument("--p", type=int)
    t.add_argument("--loss", choices=training.LOSSES, default="regression")
    t.add_argument("--classes", type=int, default=0)
    _train_flags(t)
    t.add_argument("--out", default="encoder.ckpt")
    t.add_argument("--report", default=None)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint and append to a results CSV")
    e.add_argument("--checkpoint")
    e.add_argument("--data")
    e.add_argument("--targets")
    e.add_argument("--labels")
    e.add_argument("--metric", choices=("prediction", "support", "classification", "clustering"),
                   default="prediction")
    e.add_argument("--per-sample", action="store_true")
    e.add_argument("--out", default="results.csv")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("reproduce", help="desk-scale solver vs encoder comparison")
    defaults = reproduce.ReproduceConfig()
    r.add_argument("--regime", choices=("l0reg", "msparse"), default="l0reg")
    r.add_argument("--m", type=int, default=defaults.m)
    r.add_argument("--p", type=int, default=defaults.p)
    r.add_argument("--n-train", type=int, default=defaults.n_train)
    r.add_argument("--n-test", type=int, default=defaults.n_test)
    r.add_argument("--lam", type=float, default=defaults.lam)
    r.add_argument("--M", type=int, default=defaults.M)
    r.add_argument("--sparsity", type=int, default=None)
    r.add_argument("--noise", type=float, default=defaults.noise)
    r.add_argument("--std-floor", type=float, default=defaults.std_floor)
    r.add_argument("--dictionary", choices=("planted", "learned"), default=defaults.dictionary)
    r.add_argument("--dict-epochs", type=int, default=defaults.dict_epochs)
    r.add_argument("--dict-lam", type=float, default=defaults.dict_lam)
    r.add_argument("--ista-iters", type=int, default=defaults.ista_iters)
    r.add_argument("--opt-iters", type=int, default=defaults.opt_iters)
    r.add_argument("--K", type=int, default=defaults.K)
    r.add_argument("--epochs", type=int, default=defaults.epochs)
    r.add_argument("--lr", dest="learning_rate", type=float, default=defaults.learning_rate)
    r.add_argument("--batch-size", type=int, default=defaults.batch_size)
    r.add_argument("--sigma0", type=float, default=defaults.sigma0)
    r.add_argument("--sigma-divisor", type=float, default=defaults.sigma_divisor)
    r.add_argument("--sigma-floor", type=float, default=defaults.sigma_floor)
    r.add_argument("--grad-clip", type=float, default=defaults.grad_clip)
    r.add_argument("--per-sample", action="store_true")
    r.add_argument("--out", default="comparison.csv")
    r.set_defaults(func=cmd_reproduce)

    for p in sub.choices.values():
        _common(p)
    return parser, sub


def parse_args(argv=None):
    parser, sub = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            with open(args.config) as f:
                cfg = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config {args.config}: {exc}")
        if not isinstance(cfg, dict):
            parser.error("config must be a JSON object")
        sp = sub.choices[args.command]
        valid = {a.dest for a in sp._actions} - {"help", "config", "func"}
        unknown = sorted(set(cfg) - valid)
        if unknown:
            parser.error(f"unknown config key(s): {', '.join(unknown)}")
        sp.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


def main(argv=None):
    args = parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    limits = contextlib.nullcontext()
    if args.threads:
        from threadpoolctl import threadpool_limits
        limits = threadpool_limits(args.threads)
    try:
        with limits:
            return args.func(args)
    except UsageError as exc:
        print(f"deepl0 {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"deepl0 {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
