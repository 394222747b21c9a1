"""Command-line pipeline: generate data, label, train the three models, evaluate, export plot data.

Every subcommand reads the TOML run configuration, writes its artifacts into
``--out`` and leaves a ``<command>.manifest.json`` with the configuration
echo, seed and wall time. Exit codes: 0 success, 2 configuration error,
3 I/O or file-format error, 4 dimension mismatch between artifacts.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .channel import FACTOR_NAMES, sample_scenario
from .config import RunConfig, load_config
from .dataset import Dataset, split_indices
from .errors import ConfigError, DimensionMismatchError, DomainError, ShapeError, ThzBeamError
from .estimator import EstimatorModel, evaluate_estimator, train_estimator
from .predictor import (BeamModel, baseline_inputs, baseline_noise_variance, evaluate_beamforming, make_labels,
                        train_baseline, train_predictor)

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_DIMS = 0, 2, 3, 4

DATASET = "dataset.thzds"
LABELED = "labeled.thzds"
ESTIMATOR = "estimator.thznn"
BEAM = "beam.thznn"
BASELINE = "baseline.thznn"
EVAL_CSV = "eval.csv"
PREDICTIONS_CSV = "estimator_predictions.csv"


# ---------------------------------------------------------------------------
# Helpers


def _write_atomic(path: Path, data):
    """Write via a temporary sibling so a failure never leaves a partial file."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(tmp, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
        fh.write(data)
    os.replace(tmp, path)


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _trace_csv(trace):
    keys = []
    for e in trace:
        keys += [k for k in e if k not in keys]
    return _csv_text(keys, [[e.get(k, "") for k in keys] for e in trace])


def _load_dataset(path) -> Dataset:
    try:
        return Dataset.load(path)
    except FileNotFoundError as exc:
        raise OSError(f"dataset not found: {path}") from exc


def _check_dims(cfg: RunConfig, ds: Dataset, what="dataset"):
    expected = cfg.expected_dims()
    if ds.dims != expected:
        raise DimensionMismatchError(expected, ds.dims, what)


def _split(cfg: RunConfig, ds: Dataset):
    return split_indices(len(ds), cfg.seed, cfg.eval.train_fraction)


def _label_snr(cfg):
    return 10.0 ** (cfg.eval.label_snr_db / 10.0)


def _require_labels(ds: Dataset, path):
    if not ds.has_labels:
        raise DomainError(f"{path} carries no beam labels; run `thzbeam label` first")


def pilot_noise_variance(cfg: RunConfig, ds: Dataset) -> float:
    """THz pilot noise for the baseline.

    Uses ``baseline.pilot_snr_db`` when set. Otherwise it takes the sub-6 GHz
    per-element SNR of the dataset, 10 dB lower, or 10 dB when the sub-6 GHz
    link is noiseless.
    """
    snr_db = cfg.baseline.pilot_snr_db
    if snr_db is None:
        nv = cfg.scenario.sub6.noise_variance
        if nv > 0 and len(ds):
            snr_db = 10.0 * math.log10(float(np.mean(np.abs(ds.h_sub6_true) ** 2)) / nv) - 10.0
        else:
            snr_db = 10.0
    return baseline_noise_variance(ds.h_thz_true, snr_db)


# ---------------------------------------------------------------------------
# Commands; each returns the text summary it prints.


def cmd_gen_data(cfg: RunConfig, out: Path, threads=1):
    t0 = time.perf_counter()
    samples = sample_scenario(cfg.scenario, threads=threads)
    ds = Dataset.from_samples(samples, cfg.expected_dims()) if samples else Dataset.empty(
        *(cfg.expected_dims()[k] for k in ("K_s", "N_s", "K_t", "N_t", "L")))
    _write_atomic(out / DATASET, ds.to_bytes())
    counts = ds.active_counts
    hist = np.bincount(counts, minlength=cfg.num_paths + 1) if len(ds) else np.zeros(cfg.num_paths + 1, int)
    lines = [f"samples {len(ds)}", "dims " + json.dumps(ds.dims, sort_keys=True),
             "active THz paths per sample: " + ", ".join(f"{i}:{int(c)}" for i, c in enumerate(hist)),
             f"{'THz factor':<12}{'min':>14}{'max':>14}"]
    active = ds.thz_factors[ds.thz_factors[..., 0] > 0]
    for col, name in enumerate(FACTOR_NAMES):
        lo, hi = (active[:, col].min(), active[:, col].max()) if len(active) else (math.nan, math.nan)
        lines.append(f"{name:<12}{lo:>14.6g}{hi:>14.6g}")
    text = "\n".join(lines) + "\n"
    _write_atomic(out / "dataset_summary.txt", text)
    return f"wrote {out / DATASET}\n{text}generation time {time.perf_counter() - t0:.2f} s"


def cmd_label(cfg: RunConfig, out: Path, dataset=None):
    src = Path(dataset) if dataset else out / DATASET
    ds = _load_dataset(src)
    _check_dims(cfg, ds)
    cb = cfg.thz_codebook()
    labeled = make_labels(ds, cb, _label_snr(cfg))
    _write_atomic(out / LABELED, labeled.to_bytes())
    hist = np.bincount(labeled.beam_label, minlength=len(cb)) if len(labeled) else np.zeros(len(cb), int)
    return (f"labeled {len(labeled)} samples at {cfg.eval.label_snr_db} dB with a {len(cb)}-beam codebook; "
            f"{int(np.count_nonzero(hist))} distinct beams used, most common beam {int(hist.argmax())} "
            f"({int(hist.max())} samples)")


def cmd_train_estimator(cfg: RunConfig, out: Path, dataset=None):
    src = Path(dataset) if dataset else _default_labeled(out)
    ds = _load_dataset(src)
    _check_dims(cfg, ds)
    tr, te = _split(cfg, ds)
    e = cfg.estimator
    model, trace = train_estimator(ds.subset(tr), ds.subset(te), cfg.estimator_arch(), e.optimizer,
                                   e.epochs, e.batch_size, cfg.seed)
    model.save(out / ESTIMATOR)
    _write_atomic(out / "estimator_trace.csv", _trace_csv(trace))
    last = trace[-1]
    return (f"estimator trained on {len(tr)} samples for {len(trace)} epochs; "
            f"final train loss {last['train_loss']:.4g}"
            + (f", test loss {last['test_loss']:.4g}" if "test_loss" in last else ""))


def _default_labeled(out):
    return out / LABELED if (out / LABELED).exists() else out / DATASET


def _estimated_factors(cfg, out, ds, estimator):
    model = EstimatorModel.load(Path(estimator) if estimator else out / ESTIMATOR)
    _check_estimator(model, ds)
    return model.predict(ds.h_sub6)


def _check_estimator(model: EstimatorModel, ds: Dataset):
    d = ds.dims
    expected = {"K_s": d["K_s"], "N_s": d["N_s"], "L": d["L"]}
    found = {"K_s": model.input_shape[0], "N_s": model.input_shape[1], "L": model.num_paths}
    if expected != found:
        raise DimensionMismatchError(expected, found, "estimator model")


def _check_beam_model(model: BeamModel, ds: Dataset, num_classes):
    d = ds.dims
    if model.kind == "factors":
        expected = {"features": d["L"] * 7, "classes": num_classes}
        found = {"features": model.input_shape[0], "classes": model.num_classes}
    else:
        expected = {"K_t": d["K_t"], "N_t": d["N_t"], "classes": num_classes}
        found = {"K_t": model.input_shape[0], "N_t": model.input_shape[1], "classes": model.num_classes}
    if expected != found:
        raise DimensionMismatchError(expected, found, f"{model.kind} model")


def cmd_train_beam(cfg: RunConfig, out: Path, dataset=None, estimator=None):
    src = Path(dataset) if dataset else out / LABELED
    ds = _load_dataset(src)
    _check_dims(cfg, ds)
    _require_labels(ds, src)
    cb = cfg.thz_codebook()
    factors = ds.thz_factors if cfg.predictor.input == "ground_truth" else _estimated_factors(cfg, out, ds, estimator)
    tr, te = _split(cfg, ds)
    p = cfg.predictor
    model, trace = train_predictor(factors[tr], ds.beam_label[tr], len(cb), cfg.predictor_arch(), p.optimizer,
                                   p.epochs, p.batch_size, cfg.seed, factors[te], ds.beam_label[te])
    model.arch["input"] = p.input
    model.save(out / BEAM)
    _write_atomic(out / "beam_trace.csv", _trace_csv(trace))
    last = trace[-1]
    return (f"beam classifier ({p.input} factors) trained for {len(trace)} epochs; "
            f"train top-1 {last['train_top1']:.3f}" + (f", test top-1 {last['test_top1']:.3f}"
                                                       if "test_top1" in last else ""))


def cmd_train_baseline(cfg: RunConfig, out: Path, dataset=None):
    src = Path(dataset) if dataset else out / LABELED
    ds = _load_dataset(src)
    _check_dims(cfg, ds)
    _require_labels(ds, src)
    cb = cfg.thz_codebook()
    nv = pilot_noise_variance(cfg, ds)
    noisy = baseline_inputs(ds.h_thz_true, nv, cfg.seed)
    tr, te = _split(cfg, ds)
    b = cfg.baseline
    model, trace = train_baseline(noisy[tr], ds.beam_label[tr], len(cb), cfg.baseline_arch(), b.optimizer,
                                  b.epochs, b.batch_size, cfg.seed, noisy[te], ds.beam_label[te])
    model.arch["pilot_noise_variance"] = nv
    model.save(out / BASELINE)
    _write_atomic(out / "baseline_trace.csv", _trace_csv(trace))
    last = trace[-1]
    return (f"baseline trained on noisy THz estimates (noise variance {nv:.3g}) for {len(trace)} epochs; "
            f"train top-1 {last['train_top1']:.3f}" + (f", test top-1 {last['test_top1']:.3f}"
                                                       if "test_top1" in last else ""))


def cmd_eval(cfg: RunConfig, out: Path, dataset=None, estimator=None, beam=None, baseline=None):
    src = Path(dataset) if dataset else out / LABELED
    ds = _load_dataset(src)
    _check_dims(cfg, ds)
    cb = cfg.thz_codebook()
    est = EstimatorModel.load(Path(estimator) if estimator else out / ESTIMATOR)
    beam_model = BeamModel.load(Path(beam) if beam else out / BEAM)
    base_model = BeamModel.load(Path(baseline) if baseline else out / BASELINE)
    _check_estimator(est, ds)
    _check_beam_model(beam_model, ds, len(cb))
    _check_beam_model(base_model, ds, len(cb))
    if beam_model.kind != "factors" or base_model.kind != "baseline":
        raise ConfigError("--beam must hold a factor classifier and --baseline the channel-matrix baseline")

    _, te = _split(cfg, ds)
    test = ds.subset(te)
    report, blind, pred = evaluate_estimator(est, test)
    nv = base_model.arch.get("pilot_noise_variance", pilot_noise_variance(cfg, ds))
    noisy = baseline_inputs(ds.h_thz_true, nv, cfg.seed)[te]

    k = cfg.eval.top_k
    probs = {"proposed": beam_model.predict_proba(pred), "baseline": base_model.predict_proba(noisy),
             "proposed_gt": beam_model.predict_proba(test.thz_factors)}
    rows, _ = evaluate_beamforming(test.h_thz_true, cb, cfg.eval.snr_grid_db, probs, k)

    main_cols = ["snr_db", "ub_rate", "proposed_top1", f"proposed_top{k}_mean", "baseline_top1",
                 f"baseline_top{k}_mean", "proposed_top1_acc", "baseline_top1_acc"]
    variant_cols = ["snr_db", "ub_rate", "proposed_gt_top1", f"proposed_gt_top{k}_mean",
                    f"proposed_gt_top{k}_best", f"proposed_top{k}_best", f"baseline_top{k}_best",
                    "proposed_gt_top1_acc"]
    _write_atomic(out / EVAL_CSV, _csv_text(main_cols, [[r[c] for c in main_cols] for r in rows]))
    _write_atomic(out / "eval_variants.csv", _csv_text(variant_cols, [[r[c] for c in variant_cols] for r in rows]))
    _write_atomic(out / "estimator_errors.csv", report.to_csv())
    blind_rows = {n: m for n, m, _ in blind.rows}
    text = report.to_text() + "\nblind mean predictor\n" + blind.to_text() + "\nratio to blind\n" + "".join(
        f"{n:<24}{m / blind_rows[n] if blind_rows[n] else float('nan'):>14.3f}\n" for n, m, _ in report.rows)
    _write_atomic(out / "estimator_errors.txt", text)

    first = pred[:, 0, :]
    truth = test.thz_factors[:, 0, :]
    from .channel import AOA_AZ, AOA_EL, TOA
    pred_rows = [[int(i), truth[j, AOA_AZ], first[j, AOA_AZ], truth[j, AOA_EL], first[j, AOA_EL],
                  truth[j, TOA], first[j, TOA]] for j, i in enumerate(te)]
    _write_atomic(out / PREDICTIONS_CSV, _csv_text(
        ["sample", "aoa_az_true", "aoa_az_pred", "aoa_el_true", "aoa_el_pred", "toa_true", "toa_pred"], pred_rows))

    at0 = min(rows, key=lambda r: abs(r["snr_db"] - cfg.eval.label_snr_db))
    acc_gt = at0["proposed_gt_top1_acc"]
    acc = at0["proposed_top1_acc"]
    summary = [f"evaluated {len(test)} test samples, {len(cb)}-beam codebook",
               f"at {at0['snr_db']} dB: proposed top-1 accuracy {acc:.3f} (ground-truth factors {acc_gt:.3f}, "
               f"cascade loss {acc_gt - acc:+.3f}); baseline {at0['baseline_top1_acc']:.3f}",
               f"at {at0['snr_db']} dB: upper bound {at0['ub_rate']:.4g} bit/s/Hz, proposed top-{k} mean "
               f"{at0[f'proposed_top{k}_mean']:.4g}, baseline top-{k} mean {at0[f'baseline_top{k}_mean']:.4g}",
               "", report.to_text().rstrip()]
    text = "\n".join(summary) + "\n"
    _write_atomic(out / "eval_summary.txt", text)
    return text.rstrip()


def cmd_export_plots(cfg: RunConfig, out: Path, eval_csv=None, images=False):
    from .plots import export_plots
    src = Path(eval_csv) if eval_csv else out / EVAL_CSV
    written = export_plots(src, out / "plots", src.parent / PREDICTIONS_CSV, images=images)
    return "wrote " + ", ".join(str(p) for p in written)


# ---------------------------------------------------------------------------
# Entry point

_COMMANDS = {
    "gen-data": cmd_gen_data, "label": cmd_label, "train-estimator": cmd_train_estimator,
    "train-beam": cmd_train_beam, "train-baseline": cmd_train_baseline, "eval": cmd_eval,
    "export-plots": cmd_export_plots,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="thzbeam", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"thzbeam {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration (defaults apply when omitted)")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out", default=".", help="artifact directory (default: current directory)")
    common.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
    common.add_argument("--backend", choices=kernels.available_backends(), help="numeric kernel backend")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", parents=[common], help="sample the dual-band scenario")
    p = sub.add_parser("label", parents=[common], help="exhaustive-search beam labels")
    p.add_argument("--dataset")
    p = sub.add_parser("train-estimator", parents=[common], help="train the sub-6 GHz to THz factor CNN")
    p.add_argument("--dataset")
    p = sub.add_parser("train-beam", parents=[common], help="train the beam classifier on THz factors")
    p.add_argument("--dataset")
    p.add_argument("--estimator", help="estimator weights (only for predictor.input = estimated)")
    p = sub.add_parser("train-baseline", parents=[common], help="train the THz channel-matrix baseline")
    p.add_argument("--dataset")
    p = sub.add_parser("eval", parents=[common], help="rate and accuracy tables on the test split")
    for name in ("dataset", "estimator", "beam", "baseline"):
        p.add_argument(f"--{name}")
    p = sub.add_parser("export-plots", parents=[common], help="plottable text (and images) from eval output")
    p.add_argument("--eval-csv")
    p.add_argument("--images", action="store_true", help="also render PNG files (needs matplotlib)")
    return parser


@contextlib.contextmanager
def _thread_limit(n):
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        yield
        return
    with threadpool_limits(limits=n):
        yield


def run(argv=None):
    """Execute one subcommand; returns ``(exit_code, message)``."""
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be nonnegative")
            cfg = cfg.with_seed(args.seed)
        extra = {k: v for k, v in vars(args).items()
                 if k not in ("command", "config", "seed", "out", "threads", "backend")}
        extra = {k.replace("-", "_"): v for k, v in extra.items()}
        if args.command == "gen-data":
            extra["threads"] = args.threads
        previous = kernels.use_backend(args.backend) if args.backend else None
        t0 = time.perf_counter()
        try:
            with _thread_limit(args.threads):
                message = _COMMANDS[args.command](cfg, out, **extra)
        finally:
            if previous:
                kernels.use_backend(previous)
        manifest = {"command": args.command, "version": __version__, "seed": cfg.seed,
                    "wall_time_s": round(time.perf_counter() - t0, 3), "threads": args.threads,
                    "backend": kernels.backend_name(), "config": cfg.to_dict()}
        _write_atomic(out / f"{args.command}.manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return EXIT_OK, message
    except DimensionMismatchError as exc:
        return EXIT_DIMS, "dimension mismatch:\n  " + "\n  ".join(exc.diff)
    except (ConfigError, DomainError, ShapeError) as exc:
        problems = getattr(exc, "problems", [str(exc)])
        return EXIT_CONFIG, "configuration error:\n  " + "\n  ".join(problems)
    except (OSError, ThzBeamError) as exc:
        return EXIT_IO, f"I/O error: {exc}"


def main(argv=None):
    code, message = run(argv)
    print(message, file=sys.stdout if code == EXIT_OK else sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
