"""Command-line experiment runner.

CSV goes to ``--output`` (or ``run.output``) when given, otherwise to stdout;
one-line PASS/FAIL summaries go to stdout when the CSV is written to a file and
to stderr otherwise. Exit status: 0 success, 1 failed check, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .codec import optimal_small_code, product_codebook
from .empirics import (
    FigureConfig,
    Table,
    denoise_trials,
    expected_empirical,
    figure_data,
    format_value,
    markov_violation,
    posterior_loss_statistics,
)
from .exceptions import BudgetExceededError, ConfigError, InfeasibleError, ModelMismatchError, ValidationError
from .config import ExperimentConfig, parse_config
from .inference import mixing_decay
from .probcore import LN2, conditional_entropy, matched_distortion, to_bits
from .ratedist import achiever_is_posterior_check, gaussian_example, matched_level_identity_check, matched_rate
from .sources import IidSource

FIGURES = {
    "bsc-hamming": "bsc_hamming",
    "erasure-vs-pe": "erasure_vs_pe",
    "erasure-vs-ps": "erasure_vs_ps",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat section.key = value file")
    common.add_argument("--output", type=Path, help="CSV destination (default: stdout)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for Monte Carlo trials")
    common.add_argument("--seed", type=int, help="override run.seed (DENOISE_SEED takes precedence)")

    parser = _Parser(prog="compdenoise", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    verify = sub.add_parser("verify", help="numerical checks of the theory")
    vsub = verify.add_subparsers(dest="check", parser_class=_Parser)
    vsub.required = True
    for name in ("rd", "achiever"):
        p = vsub.add_parser(name, parents=[common])
        p.add_argument("--k", type=int, help="block length (default: run.k)")
    vsub.add_parser("lemma", parents=[common])
    p = vsub.add_parser("mixing", parents=[common])
    p.add_argument("--k-max", type=int, help="largest window radius (default: mixing.k_max)")

    run = sub.add_parser("run", help="simulations")
    rsub = run.add_subparsers(dest="experiment", parser_class=_Parser)
    rsub.required = True
    p = rsub.add_parser("denoise", parents=[common])
    p.add_argument("--n", type=int)
    p.add_argument("--rate-slack", type=float, help="rate above the matched level, bits/symbol")
    p.add_argument("--trials", type=int)

    p = sub.add_parser("figure", parents=[common], help="figure data tables")
    p.add_argument("name", choices=sorted(FIGURES))

    p = sub.add_parser("gaussian", parents=[common], help="scalar Gaussian closed forms")
    p.add_argument("--gamma", type=float, default=3.0)
    return parser


def _load_config(args) -> ExperimentConfig:
    cfg = parse_config(args.config) if args.config else ExperimentConfig()
    seed = os.environ.get("DENOISE_SEED")
    if seed is not None:
        try:
            cfg = cfg.replace(run__seed=int(seed))
        except ValueError:
            raise ConfigError(f"DENOISE_SEED must be an integer, got {seed!r}") from None
    elif args.seed is not None:
        cfg = cfg.replace(run__seed=args.seed)
    if args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    return cfg


class _Reporter:
    def __init__(self, output):
        self.output = output
        self.failed = False

    def csv(self, table: Table):
        text = table.to_csv()
        if self.output is None:
            sys.stdout.write(text)
        else:
            Path(self.output).parent.mkdir(parents=True, exist_ok=True)
            with open(self.output, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)

    def line(self, ok, text):
        if ok is not None and not ok:
            self.failed = True
        tag = "" if ok is None else ("PASS " if ok else "FAIL ")
        print(tag + text, file=sys.stdout if self.output is not None else sys.stderr)


def _g(v):
    return format_value(v)


def cmd_verify_rd(cfg, args, out):
    src, ch = cfg.build_source(), cfg.build_channel()
    k = cfg["run.k"] if args.k is None else args.k
    if k < 1:
        raise ConfigError("--k must be >= 1")
    rep = matched_level_identity_check(src, ch, k)
    tol = cfg["check.rd_tol_bits"] if k == 1 else cfg["check.rd_block_tol_bits"]
    out.csv(Table(("k", "distortion_nats", "ba_rate_bits", "closed_form_bits", "gap_bits"),
                  np.array([[k, rep.distortion, to_bits(rep.lhs_rate), to_bits(rep.rhs_rate), rep.gap_bits]])))
    out.line(rep.gap_bits < tol, f"verify rd k={k} gap={_g(rep.gap_bits)} bits (tol {_g(tol)})")


def cmd_verify_achiever(cfg, args, out):
    src, ch = cfg.build_source(), cfg.build_channel()
    k = cfg["run.k"] if args.k is None else args.k
    if k < 1:
        raise ConfigError("--k must be >= 1")
    rep = achiever_is_posterior_check(src, ch, k)
    out.csv(Table(("k", "checked", "tv_gap"), np.array([[k, int(rep.checked), rep.tv_gap]])))
    if not rep.checked:
        out.line(None, f"verify achiever k={k} rank={rep.rank_class} not checked: {rep.warning}")
        return
    tol = cfg["check.achiever_tv"]
    out.line(rep.tv_gap < tol, f"verify achiever k={k} rank={rep.rank_class} tv={_g(rep.tv_gap)} (tol {_g(tol)})")


def cmd_verify_lemma(cfg, args, out):
    src, ch = cfg.build_source(), cfg.build_channel()
    n, words, k = cfg["lemma.n"], cfg["lemma.words"], cfg["run.k"]
    if n <= 2 * k:
        raise ConfigError("lemma.n must exceed 2 run.k")
    code = optimal_small_code(src, ch, n, words, matched_distortion(ch), restarts=cfg["lemma.restarts"],
                              seed=cfg["run.seed"])
    q = expected_empirical(src, ch, code, k)
    mv = markov_violation(q, src, ch, w=cfg["lemma.extension"])
    out.csv(Table(("n", "k", "words", "expected_distortion", "max_tv", "mass_weighted_tv", "delta_k", "bound"),
                  np.array([[n, k, words, code.expected_distortion, mv.max_tv, mv.mass_weighted_tv,
                             mv.delta_k, mv.bound]], dtype=object)))
    out.line(mv.max_tv <= mv.bound,
             f"verify lemma n={n} k={k} max_tv={_g(mv.max_tv)} bound={_g(mv.bound)}")


def cmd_verify_mixing(cfg, args, out):
    src, ch = cfg.build_source(), cfg.build_channel()
    k_max = cfg["mixing.k_max"] if args.k_max is None else args.k_max
    ks, deltas, slope, r2 = mixing_decay(src, ch, k_max, cfg["mixing.extension"], cfg["mixing.tails"],
                                         cfg["run.seed"])
    out.csv(Table(("k", "delta_k"), np.column_stack([ks, deltas]).astype(object)))
    if isinstance(src, IidSource) or np.all(deltas == 0):
        out.line(True, "verify mixing delta_k = 0 for every k (memoryless)")
        return
    ok = slope < 0 and r2 >= cfg["check.mixing_r2"]
    out.line(ok, f"verify mixing slope={_g(slope)} r2={_g(r2)} (min r2 {_g(cfg['check.mixing_r2'])})")


def cmd_run_denoise(cfg, args, out):
    src, ch = cfg.build_source(), cfg.build_channel()
    loss = cfg.build_loss(src.n_states)
    n = cfg["run.n"] if args.n is None else args.n
    slack = cfg["run.rate_slack_bits"] if args.rate_slack is None else args.rate_slack
    trials = cfg["run.trials"] if args.trials is None else args.trials
    if n < 1 or trials < 1 or slack < 0:
        raise ConfigError("--n and --trials must be positive and --rate-slack non-negative")
    seed = cfg["run.seed"]
    dist = matched_distortion(ch)
    rate = matched_rate(src, ch) + slack * LN2
    code = product_codebook(src, n, rate, seed)
    res = denoise_trials(src, ch, code, loss, n, trials, seed, dist=dist, threads=args.threads)
    rows = np.column_stack([np.arange(trials), res]).astype(object)
    rows[:, 0] = rows[:, 0].astype(int)
    out.csv(Table(("trial", "realized_distortion", "realized_loss"), rows))
    level = conditional_entropy(ch, src.stationary.probs)
    stats = posterior_loss_statistics(src, ch, loss, trials=8, seed=seed, threads=args.threads)
    d_rel = abs(res[:, 0].mean() - level) / level if level > 0 else abs(res[:, 0].mean())
    l_rel = abs(res[:, 1].mean() - stats.pair) / stats.pair if stats.pair > 0 else abs(res[:, 1].mean())
    out.line(d_rel <= cfg["check.distortion_rel"],
             f"run denoise distortion={_g(res[:, 0].mean())} target={_g(level)} rel={_g(d_rel)} "
             f"rate={_g(to_bits(code.rate))} bits")
    out.line(l_rel <= cfg["check.loss_rel"],
             f"run denoise loss={_g(res[:, 1].mean())} theoretical={_g(stats.pair)} rel={_g(l_rel)}")


def figure_grid(name, points):
    if name == "bsc_hamming":
        return np.linspace(0.0, 1.0, max(points, 3) if points % 2 else points + 1)
    if name == "erasure_vs_pe":
        return np.linspace(0.0, 0.9, points)
    return np.linspace(0.05, 0.45, points)


def cmd_figure(cfg, args, out):
    name = FIGURES[args.name]
    fc = FigureConfig(p_s=cfg["figure.p_s"], p_e=cfg["figure.p_e"], n=cfg["figure.n"],
                      trials=cfg["figure.trials"], seed=cfg["run.seed"], threads=args.threads)
    table = figure_data(name, figure_grid(name, cfg["figure.points"]), fc)
    out.csv(table)
    b, t, u = table.rows[:, 1], table.rows[:, 2], table.rows[:, 4]
    ok = bool(np.all(b <= t + 1e-12) and np.all(t <= u + 1e-12))
    out.line(ok, f"figure {args.name} rows={len(table.rows)} bayes<=theoretical<=upper on every row")


def cmd_gaussian(cfg, args, out):
    rep = gaussian_example(args.gamma)
    out.csv(Table(("gamma", "compress_rate_bits", "compress_loss", "indirect_loss_at_rate",
                   "indirect_rate_at_loss_bits"),
                  np.array([[rep.gamma, rep.compress_rate_bits, rep.compress_loss, rep.indirect_loss_at_R,
                             rep.indirect_rate_at_L_bits]])))
    print(f"compress_loss={_g(rep.compress_loss)} compress_rate={_g(rep.compress_rate_bits)} bit "
          f"indirect_loss={_g(rep.indirect_loss_at_R)}")


COMMANDS = {
    ("verify", "rd"): cmd_verify_rd,
    ("verify", "achiever"): cmd_verify_achiever,
    ("verify", "lemma"): cmd_verify_lemma,
    ("verify", "mixing"): cmd_verify_mixing,
    ("run", "denoise"): cmd_run_denoise,
    ("figure", None): cmd_figure,
    ("gaussian", None): cmd_gaussian,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = _load_config(args)
        key = (args.command, getattr(args, "check", None) or getattr(args, "experiment", None))
        out = _Reporter(args.output or cfg.path("run.output"))
        COMMANDS[key](cfg, args, out)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except BudgetExceededError as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return 2
    except (ValidationError, ModelMismatchError, InfeasibleError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 2
    return 1 if out.failed else 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
