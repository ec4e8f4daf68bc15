"""Command-line front end: ``windmix fit|classify|report|sequence|synth``.

Exit codes: 0 ok, 2 input error, 3 estimation failure, 4 model mismatch,
5 insufficient data.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from windmix import __version__, gof, io, parametric, saem, sequence, synth, windows
from windmix.saem import SaemConfig

logger = logging.getLogger("windmix")

EXIT_OK, EXIT_INPUT, EXIT_ESTIMATION, EXIT_MISMATCH, EXIT_INSUFFICIENT = 0, 2, 3, 4, 5
MIN_REPORT_WINDOWS = 5
GRID_POINTS = 201


class InsufficientDataError(ValueError):
    pass


def parse_bins(text: str | None, values=None) -> windows.BinSpec | int:
    """``"12"`` means 12 equal-width bins over the data range; ``"0,2,4"`` gives edges."""
    if text is None:
        text = str(windows.DEFAULT_BINS)
    try:
        parts = [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise io.InputFormatError(f"--bins must be an integer or comma-separated edges, got {text!r}") from None
    if len(parts) == 1:
        if parts[0] != int(parts[0]) or parts[0] < 2:
            raise io.InputFormatError(f"--bins count must be an integer >= 2, got {text!r}")
        n = int(parts[0])
        if values is None:
            return n
        lo, hi = float(np.min(values)), float(np.max(values))
        if not hi > lo:
            raise InsufficientDataError("series is constant; cannot derive bin edges")
        return windows.BinSpec.equal_width(n, lo, hi)
    try:
        return windows.BinSpec(parts)
    except ValueError as exc:
        raise io.InputFormatError(f"--bins: {exc}") from None


def _histograms(series, bins, window_len, stride, epsilon, threads):
    mat = windows.window_matrix(series, window_len, stride)
    return mat, windows.smooth_histogram(windows.histogram_matrix(mat, bins, threads), epsilon)


def _outdir(args) -> Path:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _saem_config(args) -> SaemConfig:
    return SaemConfig(
        n_classes=args.classes,
        max_iter=args.max_iter,
        gamma_burnin=args.gamma_burnin,
        gamma_exponent=args.gamma_exp,
        restart_threshold=args.restart_threshold,
        epsilon=args.epsilon,
        max_restarts=args.max_restarts,
        seed=args.seed,
        init=args.init,
        threads=args.threads,
    )


def cmd_fit(args) -> int:
    series = io.read_series_csv(args.input)
    bins = parse_bins(args.bins, series.values)
    stride = args.stride or args.window
    try:
        cfg = _saem_config(args)
    except ValueError as exc:
        raise io.InputFormatError(str(exc)) from None
    _, hist = _histograms(series, bins, args.window, stride, cfg.epsilon, args.threads)
    if hist.shape[0] < cfg.n_classes:
        raise InsufficientDataError(f"{hist.shape[0]} windows cannot support {cfg.n_classes} classes")

    chash = io.config_hash({
        "command": "fit", "edges": bins.edges.tolist(), "window": args.window, "stride": stride,
        "classes": cfg.n_classes, "seed": cfg.seed, "epsilon": cfg.epsilon, "max_iter": cfg.max_iter,
        "gamma_burnin": cfg.gamma_burnin, "gamma_exp": cfg.gamma_exponent,
        "restart_threshold": cfg.restart_threshold, "max_restarts": cfg.max_restarts, "init": cfg.init,
    })
    result = saem.fit(hist, cfg, bins=bins)
    out = _outdir(args)
    io.save_model(
        out / "model.json", result.model, epsilon=cfg.epsilon, window_len=args.window, stride=stride,
        gamma_burnin=cfg.gamma_burnin, gamma_exponent=cfg.gamma_exponent,
        extra={"config_hash": chash, "restart_threshold": result.diagnostics.threshold,
               "sample_period": series.sample_period},
    )
    meta = {"seed": cfg.seed, "config_hash": chash, "K": cfg.n_classes, "window": args.window,
            "stride": stride, "sample_period": series.sample_period}
    labels = saem.assign_classes(result.responsibilities)
    io.write_responsibilities_csv(out / "responsibilities.csv", result.responsibilities, labels, meta)
    d = result.diagnostics
    trace = {"iteration": np.arange(d.iterations), "gamma": d.gamma, "log_likelihood": d.log_likelihood}
    w = np.asarray(d.weights)
    for k in range(cfg.n_classes):
        trace[f"w_{k + 1}"] = w[:, k]
    io.write_table_csv(out / "trace.csv", trace, {**meta, "restarts": d.restarts, "converged": d.converged})
    print(f"fitted K={cfg.n_classes} on {hist.shape[0]} windows: weights "
          + " ".join(f"{x:.4f}" for x in result.model.weights)
          + f" ({d.iterations} iterations, {d.restarts} restarts, converged={d.converged})")
    return EXIT_OK


def _load_for_scoring(args):
    model, doc = io.load_model(args.model)
    if getattr(args, "bins", None) is not None:
        requested = parse_bins(args.bins)
        n = requested if isinstance(requested, int) else requested.n_bins
        if n != model.n_bins:
            raise io.ModelMismatchError(f"--bins asks for {n} bins but the model has {model.n_bins}")
    series = io.read_series_csv(args.input)
    window_len = args.window or doc["window_len"]
    stride = args.stride or doc["stride"]
    mat, hist = _histograms(series, model.bins, window_len, stride, doc["smoothing_epsilon"], args.threads)
    t = saem.responsibilities(model, hist, threads=args.threads)
    meta = {"seed": doc["seed"], "config_hash": doc.get("config_hash", ""), "K": model.n_classes,
            "window": window_len, "stride": stride, "sample_period": series.sample_period}
    return model, doc, series, mat, t, meta


def cmd_classify(args) -> int:
    model, _, _, _, t, meta = _load_for_scoring(args)
    out = _outdir(args)
    io.write_responsibilities_csv(out / "labels.csv", t, saem.assign_classes(t), meta)
    print(f"classified {t.shape[0]} windows into {model.n_classes} classes")
    return EXIT_OK


def _fit_entry(k, family, params, samples, cdf, **extra):
    ks = gof.ks_test(samples, cdf)
    return {"class": k, "family": family, "params": params, "ks_statistic": ks.statistic,
            "ks_pvalue": ks.p_value, "n": ks.n, "params_from_same_sample": True, "skipped": None, **extra}


def class_report(k: int, model, mat: np.ndarray, labels: np.ndarray) -> tuple[dict, dict]:
    """Report entry for class ``k`` and its plot grid columns."""
    idx = np.flatnonzero(labels == k)
    entry = {
        "class": k,
        "weight": float(model.weights[k - 1]),
        "mass": float(model.components[k - 1].mass),
        "n_windows": int(idx.size),
        "mean_pdf": model.components[k - 1].mean.tolist(),
        "fits": [],
        "skipped": None,
    }
    if idx.size < MIN_REPORT_WINDOWS:
        entry["skipped"] = f"fewer than {MIN_REPORT_WINDOWS} windows"
        return entry, {}

    stats = windows.window_stats_matrix(mat[idx])
    ti = stats["turbulence_intensity"]
    entry["window_mean_mean"] = float(stats["mean"].mean())
    entry["window_std_mean"] = float(stats["std"].mean())
    entry["turbulence_over_20pct"] = float(np.mean(ti[np.isfinite(ti)] > 0.2)) if np.isfinite(ti).any() else None
    pooled = np.ascontiguousarray(mat[idx]).ravel()
    try:
        mean, std, skew, kurt = parametric.sample_moments(pooled)
    except parametric.DegenerateInputError as exc:
        entry["skipped"] = str(exc)
        return entry, {}
    entry["pooled_moments"] = {"mean": mean, "std": std, "skewness": skew, "kurtosis": kurt, "n": int(pooled.size)}

    grid = np.linspace(max(0.0, pooled.min()), pooled.max(), GRID_POINTS)
    cols = {"u": grid}
    gauss = parametric.GramCharlierParams(mean, std)
    entry["fits"].append(_fit_entry(k, "gaussian", {"mean": mean, "std": std}, pooled,
                                    lambda u: parametric.gram_charlier_cdf(gauss, u)))
    cols["gaussian"] = parametric.gram_charlier_pdf(gauss, grid)

    gc = parametric.GramCharlierParams(mean, std, skew, kurt)
    gc_grid, negative = parametric.gram_charlier_grid(gc, grid)
    entry["fits"].append(_fit_entry(
        k, "gram_charlier", {"mean": mean, "std": std, "skewness": skew, "kurtosis": kurt}, pooled,
        lambda u: parametric.gram_charlier_cdf(gc, u), negative_density=negative))
    cols["gram_charlier"] = gc_grid

    try:
        bw = parametric.fit_biweibull(pooled)
    except (parametric.UnimodalInputError, parametric.InconsistentFitError, parametric.NoSolutionError) as exc:
        entry["fits"].append({"class": k, "family": "biweibull", "params": None, "ks_statistic": None,
                              "ks_pvalue": None, "skipped": str(exc)})
        cols["biweibull"] = np.full(grid.size, np.nan)
    else:
        p = bw.params
        entry["fits"].append(_fit_entry(
            k, "biweibull", {"p": p.p, "c1": p.c1, "k1": p.k1, "c2": p.c2, "k2": p.k2}, pooled,
            lambda u: parametric.biweibull_cdf(p, np.maximum(u, 0.0)), antimode=bw.antimode,
            variance_identity_residual=bw.variance_identity_residual))
        cols["biweibull"] = parametric.biweibull_pdf(p, grid)
    return entry, cols


def cmd_report(args) -> int:
    model, doc, _, mat, t, meta = _load_for_scoring(args)
    labels = saem.assign_classes(t)
    out = _outdir(args)
    classes = []
    for k in range(1, model.n_classes + 1):
        entry, cols = class_report(k, model, mat, labels)
        classes.append(entry)
        if cols:
            io.write_table_csv(out / f"grid_class{k}.csv", cols, {**meta, "class": k})
    bins = model.bins
    pdf_cols = {"bin_left": bins.edges[:-1], "bin_right": bins.edges[1:], "center": bins.centers}
    for k, comp in enumerate(model.components, start=1):
        pdf_cols[f"class_{k}"] = comp.mean / bins.widths
    io.write_table_csv(out / "class_mean_pdf.csv", pdf_cols, meta)
    report = {
        "tool_version": __version__,
        "seed": int(doc["seed"]),
        "config_hash": meta["config_hash"],
        "model_file": Path(args.model).name,
        "n_windows": int(t.shape[0]),
        "window_len": meta["window"],
        "stride": meta["stride"],
        "bins": bins.edges.tolist(),
        "classes": classes,
    }
    io.save_report(out / "report.json", report)
    print(f"report for {model.n_classes} classes over {t.shape[0]} windows written to {out}")
    return EXIT_OK


def cmd_sequence(args) -> int:
    _, labels, _ = io.read_labels_csv(args.input)
    meta = io.read_meta(args.input)
    if labels.size < 2:
        raise InsufficientDataError("need at least 2 labelled windows")
    K = args.classes or int(meta.get("K", labels.max()))
    if labels.max() > K:
        raise io.InputFormatError(f"label {labels.max()} exceeds K={K}")
    window_len = int(meta.get("window", windows.DEFAULT_WINDOW))
    stride = int(meta.get("stride", window_len))
    period = float(meta.get("sample_period", 1.0))
    step = args.step_seconds or stride * period
    seq = sequence.ClassSequence(labels, K, step, stride < window_len)
    tm = sequence.transition_matrix(seq)
    summary = sequence.residence_times(seq)
    fits = sequence.fit_residence(summary)
    residence = []
    for k in range(1, K + 1):
        runs = summary.runs[k]
        f = fits[k]
        lengths, counts = np.unique(runs, return_counts=True)
        residence.append({
            "class": k,
            "n_runs": int(runs.size),
            "run_histogram": {str(int(m)): int(c) for m, c in zip(lengths, counts)},
            "mean_run_windows": f.mean_run,
            "mean_run_seconds": None if f.mean_run is None else f.mean_run * step,
            "geometric_p": f.geometric_p,
            "exp_rate_per_second": f.exp_rate,
            "ks_statistic": None if f.ks is None else f.ks.statistic,
            "ks_pvalue": None if f.ks is None else f.ks.p_value,
            "skipped": f.skipped,
        })
    report = {
        "tool_version": __version__,
        "seed": int(meta["seed"]) if "seed" in meta else None,
        "config_hash": meta.get("config_hash", ""),
        "labels_file": Path(args.input).name,
        "n_windows": int(labels.size),
        "K": K,
        "step_seconds": step,
        "overlapping_windows": seq.overlapping,
        "transition_counts": tm.counts.tolist(),
        "transition_probabilities": tm.probabilities.tolist(),
        "empty_rows": list(tm.empty_rows),
        "residence": residence,
    }
    if seq.overlapping:
        logger.warning("labels come from overlapping windows; self-transitions are inflated")
    out = _outdir(args)
    io.save_report(out / "sequence.json", report, io.SEQUENCE_SCHEMA)
    print(f"sequence of {labels.size} windows: transition matrix written to {out / 'sequence.json'}")
    return EXIT_OK


def parse_matrix(text: str) -> np.ndarray:
    try:
        return np.array([[float(x) for x in row.split(",")] for row in text.split(";")])
    except ValueError:
        raise io.InputFormatError(f"--transition must look like 'a,b;c,d', got {text!r}") from None


DEFAULT_TRANSITIONS = {
    2: [[0.9, 0.1], [0.3, 0.7]],
    3: [[0.80, 0.15, 0.05], [0.15, 0.75, 0.10], [0.10, 0.20, 0.70]],
}


def cmd_synth(args) -> int:
    if args.regimes not in DEFAULT_TRANSITIONS:
        raise io.InputFormatError("--regimes must be 2 or 3")
    P = parse_matrix(args.transition) if args.transition else np.asarray(DEFAULT_TRANSITIONS[args.regimes])
    regimes = tuple(synth.RegimeSpec(r.family, r.params, args.window) for r in synth.REFERENCE_REGIMES[:args.regimes])
    try:
        spec = synth.ScenarioSpec(regimes, P, args.windows, args.seed)
    except ValueError as exc:
        raise io.InputFormatError(str(exc)) from None
    scenario = synth.sample_scenario(spec)
    chash = io.config_hash({"command": "synth", "regimes": args.regimes, "transition": P.tolist(),
                            "windows": args.windows, "window": args.window, "seed": args.seed})
    meta = {"seed": args.seed, "config_hash": chash, "K": args.regimes, "window": args.window,
            "stride": args.window, "sample_period": spec.sample_period}
    out = _outdir(args)
    io.write_series_csv(out / "series.csv", scenario.series, meta)
    io.write_table_csv(out / "truth.csv", {"window_index": np.arange(args.windows), "label": scenario.labels}, meta)
    print(f"wrote {args.windows} windows ({len(scenario.series)} samples), clamp rate {scenario.clamp_rate:.3g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="windmix", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"windmix {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, need_input=True):
        if need_input:
            p.add_argument("--input", required=True)
        p.add_argument("--output-dir", required=True)
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (capped by WINDMIX_THREADS)")

    p = sub.add_parser("fit", help="fit a Dirichlet mixture to window histograms")
    common(p)
    p.add_argument("--bins", default=None, help="bin count L or comma-separated edges (default 12)")
    p.add_argument("--window", type=int, default=windows.DEFAULT_WINDOW)
    p.add_argument("--stride", type=int, default=None, help="default: window length")
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=windows.DEFAULT_EPSILON)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--gamma-burnin", type=int, default=20)
    p.add_argument("--gamma-exp", type=float, default=0.6)
    p.add_argument("--restart-threshold", type=float, default=None, help="default min(0.005, 2K/n)")
    p.add_argument("--max-restarts", type=int, default=20)
    p.add_argument("--init", choices=["random", "farthest"], default="random")
    p.set_defaults(func=cmd_fit)

    for name, func, help_ in (("classify", cmd_classify, "posterior class probabilities per window"),
                              ("report", cmd_report, "per-class parametric fits and plot grids")):
        p = sub.add_parser(name, help=help_)
        common(p)
        p.add_argument("--model", required=True)
        p.add_argument("--bins", default=None, help="expected bin count; must match the model")
        p.add_argument("--window", type=int, default=None, help="default: as fitted")
        p.add_argument("--stride", type=int, default=None, help="default: as fitted")
        p.set_defaults(func=func)

    p = sub.add_parser("sequence", help="transitions and residence times of a label file")
    common(p)
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--step-seconds", type=float, default=None)
    p.set_defaults(func=cmd_sequence)

    p = sub.add_parser("synth", help="write a synthetic regime-switching series")
    common(p, need_input=False)
    p.add_argument("--windows", type=int, default=1000)
    p.add_argument("--window", type=int, default=windows.DEFAULT_WINDOW)
    p.add_argument("--regimes", type=int, default=3)
    p.add_argument("--transition", default=None, help="rows separated by ';', e.g. '0.9,0.1;0.3,0.7'")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except io.ModelMismatchError as exc:
        code, msg = EXIT_MISMATCH, exc
    except (InsufficientDataError, windows.EmptyInputError) as exc:
        code, msg = EXIT_INSUFFICIENT, exc
    except saem.SaemError as exc:
        code, msg = EXIT_ESTIMATION, exc
    except io.InputFormatError as exc:
        code, msg = EXIT_INPUT, exc
    print(f"windmix {args.command}: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
