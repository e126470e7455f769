"""Command-line front end.

Subcommands: run, compare, sweep, validate, partition-stats. Every command
that starts an experiment writes the fully resolved config echo into the
output directory before any long work, so interrupted runs still record what
they were doing. Exit code 0 means all requested work completed.
"""

from __future__ import annotations

import argparse
import itertools
import json
import math
import os
import sys
import time
from dataclasses import replace

import numpy as np

from fedfits import aggregation, fitness, scheduling, selection
from fedfits.config import build_experiment, config_digest, parse_config, resolve_config
from fedfits.core import EvalResult, FlatModel, LayerSpec, Rng
from fedfits.data import build_dataset, partition, server_split
from fedfits.orchestrator import (
    compare,
    make_quadratic_clients,
    run,
    validate_convergence,
)
from fedfits.reporting import (
    metrics_rows,
    participation_from_trace,
    summary_dict,
    to_csv_text,
    to_markdown,
    total_simulated_cost,
    write_metrics_csv,
    write_summary_json,
)


def _parse_seeds(raw: str) -> list[int]:
    try:
        seeds = [int(part) for part in raw.split(",") if part.strip() != ""]
    except ValueError:
        raise ValueError(f"--seeds must be a comma list of integers, got {raw!r}") from None
    if not seeds:
        raise ValueError("--seeds must name at least one seed")
    return seeds


def _write_json(path: str, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _echo_config(out_dir: str, resolved: dict, filename: str = "config.echo.json"):
    os.makedirs(out_dir, exist_ok=True)
    _write_json(os.path.join(out_dir, filename), resolved)


def cmd_run(args) -> int:
    config, resolved = parse_config(args.config, args.overrides)
    _echo_config(args.out, resolved)
    started = time.perf_counter_ns()
    result = run(config)
    total_wall_ms = int((time.perf_counter_ns() - started) // 1_000_000)
    write_metrics_csv(
        os.path.join(args.out, "metrics.csv"), config.strategy.kind, result
    )
    summary = summary_dict(result, config_digest(resolved), total_wall_ms)
    write_summary_json(os.path.join(args.out, "summary.json"), summary)
    print(
        f"{config.label}: final_accuracy={summary['final_accuracy']:.4f} "
        f"participation={summary['participation_ratio']:.2f} "
        f"rounds={len(result.rounds)} -> {args.out}"
    )
    return 0


def cmd_compare(args) -> int:
    seeds = _parse_seeds(args.seeds)
    configs = []
    for i, path in enumerate(args.configs):
        config, resolved = parse_config(path, args.overrides)
        configs.append(config)
        _echo_config(args.out, resolved, f"config.echo.{i}.json")
    report = compare(configs, seeds)
    _write_json(os.path.join(args.out, "comparison.json"), report)
    headers = ["label", "median_final_accuracy", "median_participation_ratio",
               "median_time_to_target_round"]
    rows = [
        [e["label"], e["median_final_accuracy"], e["median_participation_ratio"],
         e["median_time_to_target_round"]]
        for e in report["algorithms"]
    ]
    with open(os.path.join(args.out, "comparison.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(to_csv_text(headers, rows))
    print(to_markdown(headers, rows), end="")
    return 0


def _parse_grid(raw: str) -> list[tuple[str, list]]:
    """`key=v1,v2;key2=v3,v4` -> ordered (key, values) pairs, values JSON-decoded."""
    axes = []
    for part in raw.split(";"):
        part = part.strip()
        if not part:
            continue
        key, sep, values_raw = part.partition("=")
        if not sep or not key:
            raise ValueError(f"grid axis must look like key=v1,v2, got {part!r}")
        values = []
        for token in values_raw.split(","):
            token = token.strip()
            if token == "":
                raise ValueError(f"grid axis {key!r} has an empty value")
            try:
                values.append(json.loads(token))
            except json.JSONDecodeError:
                values.append(token)
        axes.append((key.strip(), values))
    if not axes:
        raise ValueError("grid must name at least one axis")
    return axes


def cmd_sweep(args) -> int:
    seeds = _parse_seeds(args.seeds)
    axes = _parse_grid(args.grid)
    with open(args.config, encoding="utf-8") as fh:
        document = json.load(fh)
    base = resolve_config(document, args.overrides)
    _echo_config(args.out, base, "config.echo.base.json")

    keys = [key for key, _ in axes]
    headers = keys + [
        "seed",
        "final_accuracy",
        "best_accuracy",
        "time_to_target_round",
        "participation_ratio",
        "total_simulated_cost",
    ]
    rows = []
    cells = []
    for combo in itertools.product(*(values for _, values in axes)):
        cell_overrides = [
            f"{key}={json.dumps(value)}" for key, value in zip(keys, combo)
        ]
        finals = []
        for seed in seeds:
            resolved = resolve_config(
                document, args.overrides + cell_overrides + [f"seed={seed}"]
            )
            result = run(build_experiment(resolved))
            accs = [rec.global_eval.accuracy for rec in result.rounds]
            rows.append(
                list(combo)
                + [
                    seed,
                    accs[-1],
                    max(accs),
                    result.time_to_target_round,
                    result.participation_ratio,
                    total_simulated_cost(result),
                ]
            )
            finals.append(accs[-1])
        finals.sort()
        mid = len(finals) // 2
        median = finals[mid] if len(finals) % 2 else (finals[mid - 1] + finals[mid]) / 2
        cells.append(
            {
                "cell": dict(zip(keys, combo)),
                "median_final_accuracy": median,
                "seeds": seeds,
            }
        )
    with open(os.path.join(args.out, "sweep.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(to_csv_text(headers, rows))
    _write_json(os.path.join(args.out, "sweep_summary.json"), cells)
    print(f"{len(cells)} cells x {len(seeds)} seeds -> {args.out}")
    return 0


def cmd_partition_stats(args) -> int:
    config, resolved = parse_config(args.config, args.overrides)
    _echo_config(args.out, resolved)
    ds = build_dataset(config.dataset, config.seed)
    _, rest = server_split(ds, config.eval_fraction, Rng(config.seed, "server_split"))
    shards = partition(rest, config.partition, Rng(config.seed, "partition"))
    stats = []
    for k, idx in enumerate(shards):
        labels = rest.labels[idx]
        per_class = [int((labels == c).sum()) for c in range(rest.num_classes)]
        stats.append({"client_id": k, "n": int(idx.size), "per_class": per_class})
    sizes = [s["n"] for s in stats]
    payload = {
        "num_clients": len(stats),
        "total_samples": int(sum(sizes)),
        "min_samples": int(min(sizes)),
        "max_samples": int(max(sizes)),
        "clients": stats,
    }
    _write_json(os.path.join(args.out, "partition_stats.json"), payload)
    headers = ["client_id", "n"] + [f"class_{c}" for c in range(rest.num_classes)]
    rows = [[s["client_id"], s["n"], *s["per_class"]] for s in stats]
    print(to_markdown(headers, rows), end="")
    return 0


# --- validate: the release-gate property checks ------------------------------


def _check_theta_oracle() -> tuple[bool, str]:
    gen = Rng(20240901, "test").generator()
    worst = 0.0
    for _ in range(1000):
        gl, ll = gen.uniform(0.0, 5.0, 2)
        ga, la = gen.uniform(0.0, 1.0, 2)
        if gl + ll + ga + la == 0.0:
            continue
        for legacy in (False, True):
            params = fitness.FitnessParams(
                alpha=0.5, theta_normalized=False, legacy_theta_denominator=legacy
            )
            got = fitness.compute_theta(
                EvalResult(gl, ga), EvalResult(ll, la), params
            )
            if legacy:
                denom = math.sqrt((gl + ga) ** 2 + (ll + la) ** 2)
                expected = math.acos(min(1.0, max(-1.0, (gl + ll) / denom)))
            else:
                expected = math.acos(
                    min(1.0, (gl + ll) / math.sqrt((gl + ll) ** 2 + (ga + la) ** 2))
                )
            worst = max(worst, abs(got - expected))
    return worst <= 1e-12, f"max deviation {worst:.3g}"


def _check_selection_filter() -> tuple[bool, str]:
    gen = Rng(20240902, "test").generator()
    for trial in range(1000):
        k = int(gen.integers(1, 21))
        scores = [
            fitness.ClientScore(i, 0.0, 0.0, float(gen.uniform(0.0, 1.0)))
            for i in range(k)
        ]
        beta = [0.0, 0.1, 0.5, 1.0][trial % 4]
        selected, _ = selection.select_fedfits(scores, beta)
        mean = sum(s.score for s in scores) / k
        expected = {s.client_id for s in scores if s.score >= mean * (1.0 - beta)}
        if selected != expected or not selected:
            return False, f"mismatch on trial {trial}"
    return True, "1000 random score vectors match the direct filter"


def _check_slot_rule() -> tuple[bool, str]:
    for p in range(6):
        for pft in range(1, 5):
            for msl in range(2, 7):
                for rnd in range(1, 21):
                    got = scheduling.should_reselect(
                        p, rnd, scheduling.SlotParams(msl=msl, pft=pft)
                    )
                    expected = p >= pft or rnd % msl == 0 or rnd in (1, 2)
                    if got != expected:
                        return False, f"p={p} pft={pft} msl={msl} round={rnd}"
    return True, "exhaustive truth table matches"


def _check_aggregators() -> tuple[bool, str]:
    gen = Rng(20240903, "test").generator()
    arch = (LayerSpec(3, 2, "softmax"),)
    size = 3 * 2 + 2
    constant = FlatModel(arch, gen.standard_normal(size))
    reps = [(constant, 5)] * 5
    same = aggregation.weighted_mean(reps)
    if not np.allclose(same.weights, constant.weights, atol=1e-15):
        return False, "weighted_mean not idempotent on constants"
    models = [FlatModel(arch, gen.standard_normal(size)) for _ in range(5)]
    med = aggregation.coord_median(models)
    stacked = np.stack([m.weights for m in models])
    if not np.array_equal(med.weights, np.sort(stacked, axis=0)[2]):
        return False, "median differs from sort oracle"
    chosen = aggregation.krum(models, 1)
    best, best_score = None, None
    for i in range(5):
        dists = sorted(
            float(((stacked[i] - stacked[j]) ** 2).sum()) for j in range(5) if j != i
        )
        score = sum(dists[:2])
        if best_score is None or score < best_score:
            best, best_score = i, score
    if chosen is not models[best]:
        return False, "krum differs from brute-force scorer"
    return True, "idempotence, median oracle, krum brute force"


def _check_quadratics() -> dict[str, tuple[bool, str]]:
    homo = validate_convergence(
        make_quadratic_clients(10, 6, heterogeneity=0.0, seed=7), rounds=200
    )
    hetero = validate_convergence(
        make_quadratic_clients(10, 6, heterogeneity=1.0, seed=7),
        rounds=400,
        local_steps=3,
        step_size=0.03,
    )
    checks = {}
    checks["convergence-exact"] = (
        homo["converged_to_zero"],
        f"homogeneous final error {homo['final_error']:.3g}",
    )
    r2 = hetero["prefit"].get("r_squared", 0.0)
    checks["convergence-plateau"] = (
        hetero["plateau_level"] > 1e-12 and r2 > 0.95,
        f"plateau {hetero['plateau_level']:.3g}, pre-plateau R^2 {r2:.4f}",
    )
    stat = hetero["stationarity"]
    checks["stationarity"] = (
        stat["min_so_far_nonincreasing"] and stat["bound_holds"] and stat["c2"] > 0,
        f"C1={stat['c1']:.3g}, C2={stat['c2']:.3g}",
    )
    return checks


def _check_determinism() -> tuple[bool, str]:
    resolved = resolve_config(
        {
            "seed": 5,
            "total_rounds": 6,
            "dataset": {"samples_per_class": 120, "dim": 5},
            "model": {"input_dim": 5},
            "partition": {"num_clients": 5, "min_samples_per_client": 8},
            "train": {"local_epochs": 1, "batch_size": 16},
        }
    )
    first = run(build_experiment(resolved))
    second = run(build_experiment(resolved))
    rows_a = metrics_rows("fedfits", first)
    rows_b = metrics_rows("fedfits", second)
    wall = 10  # wall_ms column index
    stripped_a = [row[:wall] + row[wall + 1 :] for row in rows_a]
    stripped_b = [row[:wall] + row[wall + 1 :] for row in rows_b]
    cross = participation_from_trace(first, 5)
    if cross != first.participation_ratio:
        return False, "trace cross-check disagrees with participation_ratio"
    return stripped_a == stripped_b, "two runs agree on every non-wall column"


def cmd_validate(args) -> int:
    checks: dict[str, tuple[bool, str]] = {}
    checks["theta-oracle"] = _check_theta_oracle()
    checks["selection-filter"] = _check_selection_filter()
    checks["slot-truth-table"] = _check_slot_rule()
    checks["aggregators"] = _check_aggregators()
    checks.update(_check_quadratics())
    checks["determinism"] = _check_determinism()
    os.makedirs(args.out, exist_ok=True)
    payload = {
        name: {"passed": passed, "detail": detail}
        for name, (passed, detail) in checks.items()
    }
    _write_json(os.path.join(args.out, "validation.json"), payload)
    all_passed = True
    for name, (passed, detail) in checks.items():
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
        all_passed = all_passed and passed
    return 0 if all_passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedfits",
        description="Deterministic federated-learning simulator with "
        "fitness-scored client election and slotted team scheduling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config_required=True):
        if config_required:
            p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="dotted-key config override, applied after file parsing",
        )
        p.add_argument("--out", default="out", help="output directory")

    p_run = sub.add_parser("run", help="execute one experiment")
    add_common(p_run)
    p_run.set_defaults(fn=cmd_run)

    p_cmp = sub.add_parser("compare", help="run several configs over shared seeds")
    p_cmp.add_argument("--configs", nargs="+", required=True, help="JSON config paths")
    p_cmp.add_argument("--seeds", required=True, help="comma list, e.g. 1,2,3")
    add_common(p_cmp, config_required=False)
    p_cmp.set_defaults(fn=cmd_compare)

    p_sweep = sub.add_parser("sweep", help="grid of overrides x seeds")
    add_common(p_sweep)
    p_sweep.add_argument(
        "--grid", required=True, help="axes, e.g. fitness.alpha=0,0.5;fitness.beta=0.1,0.5"
    )
    p_sweep.add_argument("--seeds", required=True, help="comma list, e.g. 1,2,3")
    p_sweep.set_defaults(fn=cmd_sweep)

    p_val = sub.add_parser("validate", help="release-gate property checks")
    p_val.add_argument("--out", default="out", help="output directory")
    p_val.set_defaults(fn=cmd_validate)

    p_stats = sub.add_parser("partition-stats", help="per-client partition summary")
    add_common(p_stats)
    p_stats.set_defaults(fn=cmd_partition_stats)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
