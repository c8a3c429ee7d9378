"""Command-line front end: gen, train, score, eval, report.

Exit codes: 0 success, 2 bad configuration, 3 data error, 4 training
failure. Every failure prints exactly one ``error[<reason>]: ...`` line on
stderr.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DataError, EigenFailure, SentinelError, TrainingError
from .evaluation import DEFAULT_FPR_LIST, ScoredWindows, evaluate
from .ingest import (INTERVAL_CHOICES, format_labels, format_trace, interval_label, parse_duration,
                     parse_labels, parse_trace, windowize)
from .lstm import DEFAULT_FPR_TARGET, PROFILES, hyperparams_for
from .pipeline import DETECTORS, ModelSet, TrainSettings, format_scores, parse_scores, score_models, train_models
from .trace import build_vocabulary
from .workload import ATTACK_KINDS, ATTACK_MODES, generate_scenario, load_profile, make_rng

log = logging.getLogger("sentinel")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_TRAINING = 0, 2, 3, 4
PROFILE_ENV = "SENTINEL_PROFILE"


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _duration(text):
    try:
        return parse_duration(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _duration_list(text):
    return [_duration(t) for t in text.split(",") if t.strip()]


def _rate_list(text):
    try:
        vals = tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad rate list {text!r}") from None
    if not vals or any(not 0 <= v <= 1 for v in vals):
        raise argparse.ArgumentTypeError("rates must lie in [0, 1]")
    return vals


def _gamma(text):
    if text == "scale":
        return text
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("gamma must be 'scale' or a positive number") from None
    if value <= 0:
        raise argparse.ArgumentTypeError("gamma must be positive")
    return value


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def _open_rate(text):
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError("must lie in (0, 1)")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sentinel", allow_abbrev=False,
                     description="Per-application syscall anomaly detection (PCA, OCSVM, LSTM).")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    interval_kw = dict(choices=sorted(INTERVAL_CHOICES), help="window length (default 1s)")

    g = sub.add_parser("gen", allow_abbrev=False, help="generate a synthetic labeled trace")
    g.add_argument("--profile", default="default", help="'default' or a YAML workload profile")
    g.add_argument("--duration", type=_duration, default=parse_duration("300s"))
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--sessions", type=_positive_int, default=1)
    g.add_argument("--attack", choices=("none",) + ATTACK_MODES, default="none")
    g.add_argument("--at", type=_duration_list, help="comma-separated attack start times")
    g.add_argument("--dur", type=_duration, default=parse_duration("10s"), help="attack duration")
    g.add_argument("--bursts", type=_positive_int, help="number of evenly spread attacks")
    g.add_argument("--kind", help="comma-separated attack kinds (default: all post-exploitation scripts)")
    g.add_argument("--rate", type=float, default=150.0, help="frequency-shift calls per second")
    g.add_argument("--out", default=".", help="output directory for trace.csv and labels.csv")

    t = sub.add_parser("train", allow_abbrev=False, help="fit detectors on a legitimate trace")
    t.add_argument("--trace", required=True)
    t.add_argument("--labels")
    t.add_argument("--out", default="models")
    t.add_argument("--interval", default="1s", **interval_kw)
    t.add_argument("--detector", choices=DETECTORS + ("all",), default="all")
    t.add_argument("--profile", choices=sorted(PROFILES), help=f"hyper-parameter profile (env {PROFILE_ENV})")
    t.add_argument("--pca-k", type=_positive_int, default=20)
    t.add_argument("--nu", type=float, default=0.05)
    t.add_argument("--gamma", type=_gamma, default="scale")
    t.add_argument("--hidden", type=_positive_int)
    t.add_argument("--delta", type=_positive_int)
    t.add_argument("--epochs", type=_positive_int)
    t.add_argument("--batch", type=_positive_int)
    t.add_argument("--fpr-target", type=_open_rate, default=DEFAULT_FPR_TARGET)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--allow-attack-windows", action="store_true",
                   help="train even if the labels mark attack windows (they are dropped)")

    s = sub.add_parser("score", allow_abbrev=False, help="score a trace with trained detectors")
    s.add_argument("--models", default="models")
    s.add_argument("--trace", required=True)
    s.add_argument("--labels")
    s.add_argument("--interval", **interval_kw)
    s.add_argument("--out", default="scores.csv")

    for name, helptext in (("eval", "ROC/AUC summary from scores"),
                           ("report", "eval plus matplotlib figures")):
        e = sub.add_parser(name, allow_abbrev=False, help=helptext)
        e.add_argument("--scores", required=True)
        e.add_argument("--labels", help="label CSV; enables per-scenario breakdown")
        e.add_argument("--interval", default="1s", **interval_kw)
        e.add_argument("--out", default="report")
        e.add_argument("--fpr-list", type=_rate_list, default=DEFAULT_FPR_LIST)
        e.add_argument("--scenario", help="comma-separated attack kinds to report (default all)")
        e.add_argument("--strict-intersection", action="store_true",
                       help="compare detectors on the windows all of them scored")
        e.add_argument("--svg", action="store_true", default=(name == "report"),
                       help="write ROC figures as SVG")
        if name == "report":
            e.add_argument("--no-svg", dest="svg", action="store_false")
            e.add_argument("--models", help="model directory; adds the PCA explained-variance figure")
    return parser


# -- commands ----------------------------------------------------------------

def _read_path(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None


def cmd_gen(args) -> int:
    try:
        profile = load_profile(args.profile)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"bad profile {args.profile!r}: {exc}") from None
    kinds = [k.strip() for k in args.kind.split(",")] if args.kind else None
    if kinds and any(not k for k in kinds):
        raise ConfigError("empty attack kind")
    mode = None if args.attack == "none" else args.attack
    if mode is None and (args.at or args.bursts):
        raise ConfigError("--at/--bursts need --attack")
    n_bursts = args.bursts or (0 if args.at else 1)

    seeds = make_rng(args.seed).integers(0, 2 ** 63 - 1, size=args.sessions)
    events, spans = [], []
    for sid, sseed in enumerate(seeds):
        sc = generate_scenario(profile, args.duration, int(sseed), mode=mode, n_bursts=n_bursts,
                               burst_ns=args.dur, kinds=kinds, at_ns=args.at, session_id=sid, rate_hz=args.rate)
        events.extend(sc.events)
        spans.extend(sc.spans)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "trace.csv").write_text(format_trace(events), encoding="utf-8")
    (out / "labels.csv").write_text(format_labels(spans), encoding="utf-8")
    print(f"wrote {len(events)} events, {len(spans)} attack span(s) to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    profile = args.profile or os.environ.get(PROFILE_ENV, "paper")
    if profile not in PROFILES:
        raise ConfigError(f"{PROFILE_ENV}={profile!r} is not one of {sorted(PROFILES)}")
    if not 0 < args.nu <= 1:
        raise ConfigError("--nu must lie in (0, 1]")
    hp = hyperparams_for(profile, hidden_units=args.hidden, delta=args.delta, epochs=args.epochs,
                         batch_size=args.batch, seed=args.seed)
    detectors = DETECTORS if args.detector == "all" else (args.detector,)
    interval = INTERVAL_CHOICES[args.interval]

    events = parse_trace(_read_path(args.trace))
    spans = parse_labels(_read_path(args.labels)) if args.labels else []
    vocab = build_vocabulary(events)
    series = windowize(events, vocab, interval, spans)
    if series.labels.any():
        if not args.allow_attack_windows:
            raise DataError(f"training trace has {int(series.labels.sum())} attack-labeled window(s); "
                            "pass --allow-attack-windows to drop them and train anyway")
        log.warning("dropping %d attack-labeled training window(s)", int(series.labels.sum()))
        series = series.legit_only()

    settings = TrainSettings(detectors=detectors, pca_k=args.pca_k, nu=args.nu, gamma=args.gamma,
                             lstm=hp, fpr_target=args.fpr_target, profile=profile)
    models = train_models(series, settings)
    manifest = models.save(args.out)
    print(f"trained {', '.join(models.models)} on {len(series)} windows "
          f"(d={vocab.dim}, interval {interval_label(interval)}); manifest {manifest}")
    return EXIT_OK


def cmd_score(args) -> int:
    models = ModelSet.load(args.models)
    if args.interval and INTERVAL_CHOICES[args.interval] != models.interval_ns:
        raise DataError(f"interval {args.interval} differs from the models' "
                        f"{interval_label(models.interval_ns)}")
    events = parse_trace(_read_path(args.trace))
    spans = parse_labels(_read_path(args.labels)) if args.labels else []
    unknown = sorted({e.syscall for e in events} - set(models.vocabulary.names))
    if unknown:
        log.warning("%d syscall name(s) unseen in training map to OOV: %s", len(unknown), ",".join(unknown[:10]))
    series = windowize(events, models.vocabulary, models.interval_ns, spans)
    scores = score_models(models, series)
    if "lstm" in scores and not (~np.isnan(scores["lstm"].scores)).any():
        log.warning("lstm scored zero windows: every session is shorter than %d windows",
                    models.models["lstm"].hyperparams.delta + 1)
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(format_scores(series, scores), encoding="utf-8")
    print(f"scored {len(series)} windows with {', '.join(scores)} -> {out}")
    return EXIT_OK


def _window_kinds(keys, spans, interval_ns):
    by_session = {}
    for sp in spans:
        by_session.setdefault(sp.session_id, []).append(sp)
    kinds = []
    for sid, t in keys:
        lo, hi = t * interval_ns, (t + 1) * interval_ns
        kinds.append(tuple(sorted({sp.kind for sp in by_session.get(sid, []) if sp.overlaps(lo, hi)})))
    return kinds


def _safe_name(name: str) -> str:
    return "".join(c if c.isalnum() or c in "_-." else "_" for c in name)


def cmd_eval(args, figures: bool = False) -> int:
    table = parse_scores(_read_path(args.scores).decode("utf-8"))
    if not table.scores:
        raise DataError("scores file has no rows")
    spans = parse_labels(_read_path(args.labels)) if args.labels else []
    kinds = _window_kinds(table.keys, spans, INTERVAL_CHOICES[args.interval])
    # labeled windows the label file cannot attribute still count in "averaged"
    scored = [ScoredWindows(det, table.scores[det], table.labels, kinds)
              for det in DETECTORS if det in table.scores]
    scored += [ScoredWindows(det, arr, table.labels, kinds)
               for det, arr in sorted(table.scores.items()) if det not in DETECTORS]
    scenarios = [s.strip() for s in args.scenario.split(",")] if args.scenario else None
    report = evaluate(scored, args.fpr_list, scenarios, args.strict_intersection)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.csv").write_text(report.summary_csv(), encoding="utf-8")
    for scen in report.scenarios():
        (out / f"roc_{_safe_name(scen)}.csv").write_text(report.roc_csv(scen), encoding="utf-8")
    for det, n in report.unscored.items():
        if n:
            log.warning("%s: %d unscored window(s) excluded", det, n)

    if args.svg or figures:
        from . import plotting
        for scen in report.scenarios():
            plotting.plot_roc(report.for_scenario(scen), out / f"roc_{_safe_name(scen)}.svg", title=scen)
        if figures:
            for sw in scored:
                plotting.plot_score_distributions(sw.scores, table.labels, out / f"scores_{sw.detector}.svg",
                                                  sw.detector)
            if getattr(args, "models", None):
                from .pca import explained_variance
                models = ModelSet.load(args.models)
                if "pca" in models.models:
                    pca = models.models["pca"]
                    plotting.plot_explained_variance(explained_variance(pca), out / "pca_explained_variance.svg",
                                                     pca.k)
    sys.stdout.write(report.summary_csv())
    return EXIT_OK


def cmd_report(args) -> int:
    return cmd_eval(args, figures=True)


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "score": cmd_score, "eval": cmd_eval, "report": cmd_report}


def _fail(code: int, reason: str, message: str) -> int:
    message = " ".join(str(message).split())
    print(f"error[{reason}]: {message}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise ConfigError("missing subcommand (gen, train, score, eval, report)")
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", exc)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s: %(message)s", stream=sys.stderr, force=True)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", exc)
    except (TrainingError, EigenFailure) as exc:
        return _fail(EXIT_TRAINING, exc.code, exc)
    except DataError as exc:
        return _fail(EXIT_DATA, exc.code, exc)
    except SentinelError as exc:
        return _fail(EXIT_DATA, exc.code, exc)
    except ValueError as exc:
        return _fail(EXIT_CONFIG, "config", exc)


if __name__ == "__main__":
    sys.exit(main())
