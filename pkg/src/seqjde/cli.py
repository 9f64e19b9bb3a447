"""Command-line front end.

Subcommands: design, evaluate, compare, policy-map, diagnostics.  All
randomness flows from --seed (or [simulation] master_seed in the config);
repeated invocations with the same inputs produce byte-identical outputs.
Exit status: 0 success, 2 validation error, 3 cap-hit or non-convergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, load_config
from .design import design
from .model import prior_summary, summarize
from .montecarlo import STREAM_AUX, derive_seed, evaluate, trace_paths
from .msprt import TwoStepPolicy, thresholds_from_levels
from .policy import AoPolicy, CostCoefficients, cost_g, decide, normalized_cost_limit
from .shift_in_mean import MeanBatch, ShiftInMeanModel

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class RuntimeFailure(RuntimeError):
    """Cap-hit or convergence failure; maps to exit status 3."""


def _provenance_line(cfg, seed, extra=""):
    tail = f" {extra}" if extra else ""
    return f"# seqjde={__version__} config_sha256={cfg.sha256} master_seed={seed}{tail}\n"


def _write_errors_csv(path, cfg, seed, rows):
    with open(path, "w") as fh:
        fh.write(_provenance_line(cfg, seed))
        fh.write("policy,hypothesis,nominal_alpha,alpha_hat,alpha_se,"
                 "nominal_beta,beta_hat,beta_se\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")


def _write_runlengths_csv(path, cfg, seed, rows):
    with open(path, "w") as fh:
        fh.write(_provenance_line(cfg, seed))
        fh.write("policy,hypothesis,runs,rl_mean,rl_se\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")


def _perf_rows(policy_name, cfg, perf):
    err_rows = []
    rl_rows = []
    for m in range(cfg.model.M):
        err_rows.append((policy_name, m + 1, repr(cfg.alpha_bar[m]),
                         repr(perf.alpha_hat[m]), repr(perf.alpha_se[m]),
                         repr(cfg.beta_bar[m]), repr(perf.beta_hat[m]),
                         repr(perf.beta_se[m])))
        rl_rows.append((policy_name, m + 1, int(perf.runs_per_hyp[m]),
                        repr(perf.rl_per_hyp[m]), repr(perf.rl_se[m])))
    rl_rows.append((policy_name, "overall", int(perf.runs_per_hyp.sum()),
                    repr(perf.rl_overall), repr(perf.rl_overall_se)))
    return err_rows, rl_rows


def write_coefficients(path, cfg, coeffs, report, seed):
    payload = {
        "scenario": cfg.scenario,
        "lambda_det": [repr(v) for v in coeffs.lambda_det],
        "lambda_est": [repr(v) for v in coeffs.lambda_est],
        "provenance": {
            "version": __version__,
            "config_sha256": cfg.sha256,
            "master_seed": seed,
            "iterations": report.iterations,
            "converged": report.converged,
            "max_violation": repr(report.max_violation),
            "alpha_hat": [repr(v) for v in report.final_perf.alpha_hat],
            "beta_hat": [repr(v) for v in report.final_perf.beta_hat],
        },
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_coefficients(path):
    with open(path) as fh:
        payload = json.load(fh)
    return CostCoefficients(
        np.array([float(v) for v in payload["lambda_det"]]),
        np.array([float(v) for v in payload["lambda_est"]]),
    )


def _ensure_out(args, cfg):
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args):
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.master_seed
    return cfg, seed


def cmd_design(args):
    cfg, seed = _load(args)
    dcfg = cfg.design_config(master_seed=seed, runs_per_iter=args.runs,
                             workers=args.workers)
    out = _ensure_out(args, cfg)
    coeffs, report = design(cfg.model, dcfg)
    coeffs_path = out / "coefficients.json"
    write_coefficients(coeffs_path, cfg, coeffs, report, seed)
    log_path = out / "design_log.txt"
    with open(log_path, "w") as fh:
        fh.write(_provenance_line(cfg, seed))
        fh.write("iteration,max_normalized_violation\n")
        for k, viol in report.history:
            fh.write(f"{k},{viol!r}\n")
        fh.write(f"# converged={report.converged} iterations={report.iterations}\n")
    print(f"coefficients written to {coeffs_path}")
    print(f"converged={report.converged} after {report.iterations} iteration(s), "
          f"max violation {report.max_violation:.3f} (tolerance units)")
    if not report.converged:
        raise RuntimeFailure("design did not converge within max_iters")


def _policy_for(cfg, name, args):
    if name == "ao":
        if not args.coeffs:
            raise ConfigError("--coeffs is required for the ao policy")
        return AoPolicy(read_coefficients(args.coeffs))
    if name == "two_step":
        return TwoStepPolicy(thresholds_from_levels(cfg.alpha_bar, rule=cfg.msprt_rule))
    raise ConfigError("policy must be 'ao' or 'two_step'")


def cmd_evaluate(args):
    cfg, seed = _load(args)
    policy = _policy_for(cfg, args.policy, args)
    sim = cfg.sim_config(master_seed=seed, runs=args.runs, workers=args.workers)
    out = _ensure_out(args, cfg)
    perf = evaluate(cfg.model, policy, sim)
    err_rows, rl_rows = _perf_rows(args.policy, cfg, perf)
    _write_errors_csv(out / f"errors_{args.policy}.csv", cfg, seed, err_rows)
    _write_runlengths_csv(out / f"run_lengths_{args.policy}.csv", cfg, seed, rl_rows)
    print(f"alpha_hat = {np.array2string(perf.alpha_hat, precision=4)}")
    print(f"beta_hat  = {np.array2string(perf.beta_hat, precision=4)}")
    print(f"run-lengths = {np.array2string(perf.rl_per_hyp, precision=2)} "
          f"overall {perf.rl_overall:.2f}")
    print(f"results written to {out}")
    if perf.cap_failure:
        raise RuntimeFailure(
            f"{perf.capped_count} trajectories hit n_max; cap-hit rate above limit")


def cmd_compare(args):
    cfg, seed = _load(args)
    out = _ensure_out(args, cfg)
    err_rows = []
    rl_rows = []
    failures = []
    for name in ("ao", "two_step"):
        policy = _policy_for(cfg, name, args)
        sim = cfg.sim_config(master_seed=seed, runs=args.runs, workers=args.workers)
        perf = evaluate(cfg.model, policy, sim)
        e, r = _perf_rows(name, cfg, perf)
        err_rows += e
        rl_rows += r
        if perf.cap_failure:
            failures.append(name)
    _write_errors_csv(out / "errors_compare.csv", cfg, seed, err_rows)
    _write_runlengths_csv(out / "run_lengths_compare.csv", cfg, seed, rl_rows)
    print(f"comparison written to {out}")
    if failures:
        raise RuntimeFailure(f"cap-hit rate above limit for: {', '.join(failures)}")


def cmd_policy_map(args):
    cfg, seed = _load(args)
    if not isinstance(cfg.model, ShiftInMeanModel):
        raise ConfigError("policy-map requires a scenario with a 1-D statistic "
                          "(shift_in_mean)")
    if not args.coeffs:
        raise ConfigError("--coeffs is required for policy-map")
    coeffs = read_coefficients(args.coeffs)
    out = _ensure_out(args, cfg)
    xs = np.arange(args.x_min, args.x_max + 0.5 * args.x_step, args.x_step)
    path = out / "policy_map.csv"
    labels = {0: "stop_decide_1", 1: "stop_decide_2", 2: "stop_decide_3"}
    with open(path, "w") as fh:
        fh.write(_provenance_line(cfg, seed, extra="content=policy_map"))
        fh.write("n,x_bar,action\n")
        for n, xbar, action in policy_map_rows(cfg.model, coeffs, range(args.n_max + 1), xs):
            fh.write(f"{n},{xbar!r},{labels.get(action, 'continue')}\n")
    print(f"policy map written to {path}")


def policy_map_rows(model, coeffs, n_values, x_values):
    """Yield (n, x_bar, action) with action -1 for continue, else 0-based
    decided hypothesis."""
    from .model import hypothesis_posteriors
    from .policy import decision_cost_matrix

    for n in n_values:
        if n == 0:
            ps = prior_summary(model)
            d = decision_cost_matrix(ps.hyp_post, ps.post_var_trace, coeffs)
            act = int(d.argmin()) if d.min() <= 1.0 else -1
            for x in x_values:
                yield 0, float(x), act
            continue
        batch = MeanBatch(len(x_values))
        batch.n[:] = n
        batch.xbar[:] = x_values
        logm, mean, var = model.batch_posterior(batch, np.arange(len(x_values)))
        post = hypothesis_posteriors(logm, model.log_priors)
        d = decision_cost_matrix(post, var, coeffs)
        g = d.min(axis=1)
        dec = d.argmin(axis=1)
        stop = g <= n + 1.0
        for x, s, a in zip(x_values, stop, dec):
            yield n, float(x), (int(a) if s else -1)


def cmd_diagnostics(args):
    cfg, seed = _load(args)
    model = cfg.model
    rng = np.random.default_rng(derive_seed(seed, 0, STREAM_AUX))
    lines = [f"scenario: {cfg.scenario} (M={model.M})"]

    lines.append("Fisher information (trace of inverse) at prior-mean parameters:")
    for m in range(1, model.M + 1):
        theta = float(model.prior_mean(m)[0])
        lines.append(f"  H{m}: theta={theta:.6g} tr(I^-1)={model.fisher_info_trace_inv(m, theta):.6g}")

    lines.append("KL divergences at prior-mean parameters (row m, col k; both directions):")
    show = range(1, min(model.M, 4) + 1)
    for m in show:
        tm = float(model.prior_mean(m)[0])
        for k in show:
            if k == m:
                continue
            tk = float(model.prior_mean(k)[0])
            lines.append(f"  KL(H{m}||H{k})={model.kl_divergence(m, tm, k, tk):.6g}  "
                         f"KL(H{k}||H{m})={model.kl_divergence(k, tk, m, tm):.6g}")

    from .design import default_initial_coefficients
    coeffs = default_initial_coefficients(cfg.alpha_bar, cfg.beta_bar)
    lines.append("Cost limit G = normalized est coefficient * tr(I^-1) for sampled parameters:")
    for _ in range(3):
        m = int(rng.integers(1, model.M + 1))
        theta = model.sample_param(m, rng)
        lines.append(f"  H{m}, theta={theta:.6g}: G={normalized_cost_limit(model, m, theta, coeffs):.6g}")

    lines.append("Posterior consistency spot-check (40 runs, 200 samples):")
    seeds = np.asarray([derive_seed(seed, i, STREAM_AUX) for i in range(1, 41)],
                       dtype=np.uint64)
    rec, _, _ = trace_paths(model, coeffs, seeds, 200)
    med = float(np.median(rec["post_true"][:, -1]))
    lines.append(f"  median posterior of the true hypothesis at n=200: {med:.4f}")
    lines.append("Scaled posterior variance spot-check (40 runs, 1000 samples):")
    rec, tm, theta = trace_paths(model, coeffs, seeds, 1000)
    limits = np.array([model.fisher_info_trace_inv(int(t), th) for t, th in zip(tm, theta)])
    ratio = float(np.median(1000 * rec["var_true"][:, -1] / limits))
    lines.append(f"  median n*var / tr(I^-1) at n=1000: {ratio:.4f}")

    report = "\n".join(lines)
    print(report)
    if args.out:
        out = _ensure_out(args, cfg)
        (out / "diagnostics.txt").write_text(
            _provenance_line(cfg, seed) + report + "\n")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="seqjde",
        description="Design and evaluate sequential joint detection-estimation policies.")
    parser.add_argument("--version", action="version", version=f"seqjde {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, runs_help):
        p.add_argument("--config", required=True, help="experiment config file (INI)")
        p.add_argument("--seed", type=int, default=None,
                       help="master seed (overrides [simulation] master_seed)")
        p.add_argument("--runs", type=int, default=None, help=runs_help)
        p.add_argument("--workers", type=int, default=None, help="parallel workers")
        p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("design", help="tune cost coefficients to the nominal levels")
    common(p, "Monte-Carlo runs per design iteration")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("evaluate", help="Monte-Carlo evaluation of one policy")
    common(p, "Monte-Carlo runs")
    p.add_argument("--policy", choices=("ao", "two_step"), required=True)
    p.add_argument("--coeffs", default=None, help="coefficients file (ao policy)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="evaluate both policies into one table")
    common(p, "Monte-Carlo runs")
    p.add_argument("--coeffs", default=None, help="coefficients file for the ao policy")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("policy-map", help="stop/continue/decide map over (n, mean)")
    common(p, "(unused)")
    p.add_argument("--coeffs", default=None, help="coefficients file")
    p.add_argument("--n-max", type=int, default=60)
    p.add_argument("--x-min", type=float, default=-6.0)
    p.add_argument("--x-max", type=float, default=6.0)
    p.add_argument("--x-step", type=float, default=0.02)
    p.set_defaults(func=cmd_policy_map)

    p = sub.add_parser("diagnostics", help="information quantities and convergence spot-checks")
    common(p, "(unused)")
    p.set_defaults(func=cmd_diagnostics)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeFailure as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
