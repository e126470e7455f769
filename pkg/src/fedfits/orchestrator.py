"""The federated training loop: slot lifecycle, strategy dispatch, aggregation,
metric capture, and the synthetic-quadratic convergence validator."""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from fedfits.aggregation import Aggregator, aggregate
from fedfits.attacks import AttackSpec, poison_labels, poison_update, resolve_malicious_ids
from fedfits.core import FlatModel, RoundRecord, Rng
from fedfits.data import (
    ClientState,
    DatasetSpec,
    PartitionSpec,
    build_dataset,
    make_clients,
    partition,
    server_split,
)
from fedfits.fitness import ClientScore, FitnessParams, compute_score, dynamic_alpha
from fedfits.models import (
    ModelSpec,
    TrainConfig,
    client_update,
    evaluate,
    init_model,
    local_update,
)
from fedfits.scheduling import SlotParams, SlotState, should_reselect, update_decline_counter
from fedfits.selection import SelectionStrategy, select_fedfits, select_fedpow, select_fedrand

THREADS_ENV = "FEDFITS_THREADS"


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    partition: PartitionSpec = field(default_factory=lambda: PartitionSpec(num_clients=10))
    model: ModelSpec = field(default_factory=lambda: ModelSpec("logreg", 20, 2))
    train: TrainConfig = field(default_factory=TrainConfig)
    strategy: SelectionStrategy = field(default_factory=lambda: SelectionStrategy("fedfits"))
    fitness: FitnessParams = field(default_factory=FitnessParams)
    slots: SlotParams = field(default_factory=SlotParams)
    aggregator: Aggregator = field(default_factory=Aggregator)
    attack: AttackSpec = field(default_factory=AttackSpec)
    total_rounds: int = 20
    target_accuracy: float | None = None
    eval_fraction: float = 0.1
    train_fraction: float = 0.8
    slot_theta_statistic: str = "sum"  # sum | mean over the round's team
    name: str = ""

    def __post_init__(self):
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")
        if self.total_rounds < 2:
            raise ValueError(f"total_rounds must be >= 2, got {self.total_rounds}")
        if not 0.0 < self.eval_fraction < 1.0:
            raise ValueError(f"eval_fraction must be in (0, 1), got {self.eval_fraction}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        if self.slot_theta_statistic not in ("sum", "mean"):
            raise ValueError(
                f"slot_theta_statistic must be sum or mean, got {self.slot_theta_statistic!r}"
            )
        if self.target_accuracy is not None and not 0.0 <= self.target_accuracy <= 1.0:
            raise ValueError(f"target_accuracy must be in [0, 1], got {self.target_accuracy}")

    @property
    def label(self) -> str:
        return self.name or self.strategy.kind


@dataclass(frozen=True)
class SelectionEvent:
    """One election: who was scored, the bar, and who made the team.

    Baseline strategies elect every round without scores; their events carry
    an empty score tuple and no threshold.
    """

    round: int
    scores: tuple[ClientScore, ...]
    threshold: float | None
    selected: tuple[int, ...]
    alpha_used: float | None


@dataclass(frozen=True)
class RunResult:
    rounds: tuple[RoundRecord, ...]
    final_model: FlatModel
    participation_ratio: float
    time_to_target_round: int | None
    selection_trace: tuple[SelectionEvent, ...]

    def __post_init__(self):
        if not 0.0 <= self.participation_ratio <= 1.0:
            raise ValueError(
                f"participation_ratio must be in [0, 1], got {self.participation_ratio}"
            )


def thread_count() -> int:
    """Worker cap from FEDFITS_THREADS; 1 (serial) when unset."""
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if value < 1:
        raise ValueError(f"{THREADS_ENV} must be >= 1, got {value}")
    return value


def _train_round(
    clients: list[ClientState],
    ids: list[int],
    global_model: FlatModel,
    config: ExperimentConfig,
    round_num: int,
    want_theta: bool,
    pool: ThreadPoolExecutor | None,
) -> dict[int, tuple[FlatModel, float]]:
    """Run client updates for `ids`, optionally scoring theta; returns by id.

    Results are bit-identical for any pool size: each client's work depends
    only on (seed, client_id, round), and callers reduce in ascending id.
    """
    fparams = config.fitness if want_theta else None

    def one(k: int) -> tuple[int, tuple[FlatModel, float]]:
        rng = Rng(config.seed, "shuffle", client_id=k, round=round_num)
        try:
            if want_theta:
                model, theta = client_update(
                    clients[k], global_model, config.train, fparams, round_num, rng
                )
            else:
                model = local_update(global_model, clients[k].train, config.train, rng)
                theta = 0.0
        except Exception as exc:
            raise RuntimeError(f"client {k} failed at round {round_num}: {exc}") from exc
        return k, (model, theta)

    if pool is None:
        return dict(one(k) for k in ids)
    return dict(pool.map(one, ids))


def _poison_round(
    updates: dict[int, tuple[FlatModel, float]],
    malicious: frozenset[int],
    config: ExperimentConfig,
    round_num: int,
) -> dict[int, tuple[FlatModel, float]]:
    """Apply model poisoning to malicious clients' submitted updates."""
    attack = config.attack
    if attack.kind not in ("noise_inject", "sign_flip") or round_num < attack.start_round:
        return updates
    param = attack.sigma if attack.kind == "noise_inject" else attack.scale
    out = dict(updates)
    for k in sorted(malicious):
        if k in out:
            model, theta = out[k]
            rng = Rng(config.seed, "attack_model", client_id=k, round=round_num)
            out[k] = (poison_update(model, attack.kind, param, rng), theta)
    return out


def _prepare_clients(config: ExperimentConfig):
    """Dataset build, server split, partition, per-client splits, label attacks."""
    ds = build_dataset(config.dataset, config.seed)
    if config.model.input_dim != ds.dim:
        raise ValueError(
            f"model.input_dim={config.model.input_dim} but dataset has {ds.dim} features"
        )
    if config.model.num_classes != ds.num_classes:
        raise ValueError(
            f"model.num_classes={config.model.num_classes} but dataset has "
            f"{ds.num_classes} classes"
        )
    eval_shard, rest = server_split(ds, config.eval_fraction, Rng(config.seed, "server_split"))
    shards = partition(rest, config.partition, Rng(config.seed, "partition"))
    clients = make_clients(rest, shards, config.train_fraction, config.seed)
    malicious = resolve_malicious_ids(config.attack, config.partition.num_clients)
    if config.attack.kind == "label_flip":
        clients = [
            replace(
                c,
                train=poison_labels(
                    c.train,
                    config.attack.flip_fraction,
                    Rng(config.seed, "attack_labels", client_id=c.client_id),
                ),
            )
            if c.client_id in malicious
            else c
            for c in clients
        ]
    return clients, eval_shard, malicious


def run(config: ExperimentConfig) -> RunResult:
    """Execute one experiment; see ExperimentConfig for every knob.

    The fitness strategy follows the slotted lifecycle: all clients train on
    scoring rounds (rounds 1 and 2 unconditionally), elections happen from
    round 2 on, and the elected team persists until the switching rule fires.
    Baseline strategies reselect every round and skip the angle machinery.
    """
    clients, eval_shard, malicious = _prepare_clients(config)
    all_ids = [c.client_id for c in clients]
    total_n = sum(c.n for c in clients)
    num_clients = len(clients)
    global_model = init_model(config.model, Rng(config.seed, "init"))

    workers = thread_count()
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    records: list[RoundRecord] = []
    trace: list[SelectionEvent] = []
    ever_selected: set[int] = set()
    time_to_target: int | None = None
    slot = SlotState()
    reselect_flag = True  # h(1)
    team: list[int] = list(all_ids)
    fits = config.strategy.kind == "fedfits"

    try:
        for round_num in range(1, config.total_rounds + 1):
            started = time.perf_counter_ns()
            alpha_used: float | None = None
            threshold: float | None = None

            if fits:
                selection_event = reselect_flag
                if reselect_flag:
                    updates = _train_round(
                        clients, all_ids, global_model, config, round_num, True, pool
                    )
                    updates = _poison_round(updates, malicious, config, round_num)
                    if round_num == 1:
                        team = list(all_ids)
                    else:
                        if config.fitness.dynamic_alpha:
                            provisional = [
                                ClientScore(k, clients[k].n / total_n, updates[k][1], 0.0)
                                for k in all_ids
                            ]
                            alpha_used = dynamic_alpha(provisional)
                        else:
                            alpha_used = float(config.fitness.alpha)
                        scores = [
                            ClientScore(
                                k,
                                clients[k].n / total_n,
                                updates[k][1],
                                compute_score(
                                    clients[k].n / total_n, updates[k][1], alpha_used
                                ),
                            )
                            for k in all_ids
                        ]
                        selected, threshold = select_fedfits(scores, config.fitness.beta)
                        team = sorted(selected)
                        trace.append(
                            SelectionEvent(
                                round_num,
                                tuple(scores),
                                threshold,
                                tuple(team),
                                alpha_used,
                            )
                        )
                        ever_selected.update(team)
                else:
                    updates = _train_round(
                        clients, team, global_model, config, round_num, True, pool
                    )
                    updates = _poison_round(updates, malicious, config, round_num)
                trained = sorted(updates)
            else:
                selection_event = True
                if config.strategy.kind == "fedavg_full":
                    team = list(all_ids)
                elif config.strategy.kind == "fedrand":
                    team = sorted(
                        select_fedrand(
                            all_ids,
                            config.strategy.fraction,
                            Rng(config.seed, "select", round=round_num),
                        )
                    )
                else:  # fedpow
                    losses = {
                        k: evaluate(global_model, clients[k].train).loss for k in all_ids
                    }
                    team = sorted(
                        select_fedpow(
                            all_ids,
                            losses,
                            config.strategy.candidates,
                            config.strategy.team_size,
                            Rng(config.seed, "select", round=round_num),
                        )
                    )
                updates = _train_round(
                    clients, team, global_model, config, round_num, False, pool
                )
                updates = _poison_round(updates, malicious, config, round_num)
                trace.append(
                    SelectionEvent(round_num, (), None, tuple(team), None)
                )
                ever_selected.update(team)
                trained = list(team)

            global_model = aggregate(
                config.aggregator, [(updates[k][0], clients[k].n) for k in team]
            )
            global_eval = evaluate(global_model, eval_shard)

            team_thetas = [updates[k][1] for k in team]
            theta_stat = float(sum(team_thetas))
            if config.slot_theta_statistic == "mean":
                theta_stat /= len(team_thetas)

            if fits:
                slot = update_decline_counter(slot, theta_stat, round_num)
                if reselect_flag:
                    slot = replace(
                        slot, team=tuple(team), round_of_last_selection=round_num
                    )
                reselect_flag = should_reselect(slot.p, round_num + 1, config.slots)

            if (
                time_to_target is None
                and config.target_accuracy is not None
                and global_eval.accuracy >= config.target_accuracy
            ):
                time_to_target = round_num

            sim_cost = float(
                max(clients[k].train.n * config.train.local_epochs for k in trained)
            )
            wall_ms = int((time.perf_counter_ns() - started) // 1_000_000)
            records.append(
                RoundRecord(
                    round=round_num,
                    team=tuple(team),
                    global_eval=global_eval,
                    theta_sum=theta_stat,
                    selection_event=selection_event,
                    wall_ms=wall_ms,
                    participation_cumulative=len(ever_selected) / num_clients,
                    sim_cost=sim_cost,
                    alpha_used=alpha_used,
                    threshold=threshold,
                )
            )
    finally:
        if pool is not None:
            pool.shutdown()

    return RunResult(
        rounds=tuple(records),
        final_model=global_model,
        participation_ratio=len(ever_selected) / num_clients,
        time_to_target_round=time_to_target,
        selection_trace=tuple(trace),
    )


def _median(values: list[float]) -> float:
    arr = np.sort(np.asarray(values, dtype=np.float64))
    mid = arr.size // 2
    return float(arr[mid]) if arr.size % 2 else float((arr[mid - 1] + arr[mid]) / 2.0)


def compare(configs: list[ExperimentConfig], seeds: list[int]) -> dict:
    """Run each config over the seeds; per-config medians of the headline metrics.

    Configs must share dataset, partition, and model so the comparison is
    apples to apples.
    """
    if not configs:
        raise ValueError("compare needs at least one config")
    if not seeds:
        raise ValueError("compare needs at least one seed")
    head = configs[0]
    for i, cfg in enumerate(configs[1:], start=1):
        for attr in ("dataset", "partition", "model"):
            if getattr(cfg, attr) != getattr(head, attr):
                raise ValueError(f"config {i} differs from config 0 in {attr}")
    entries = []
    for cfg in configs:
        finals, participations, targets = [], [], []
        reached_all = True
        for seed in seeds:
            result = run(replace(cfg, seed=seed))
            finals.append(result.rounds[-1].global_eval.accuracy)
            participations.append(result.participation_ratio)
            if result.time_to_target_round is None:
                reached_all = False
            else:
                targets.append(float(result.time_to_target_round))
        entries.append(
            {
                "label": cfg.label,
                "strategy": cfg.strategy.kind,
                "median_final_accuracy": _median(finals),
                "median_participation_ratio": _median(participations),
                "median_time_to_target_round": _median(targets)
                if reached_all and targets
                else None,
                "final_accuracy_per_seed": finals,
                "participation_per_seed": participations,
            }
        )
    return {"seeds": list(seeds), "algorithms": entries}


# --- Synthetic-quadratic convergence validation -----------------------------


@dataclass(frozen=True)
class QuadraticClient:
    """f_i(w) = 0.5 (w - c_i)^T A_i (w - c_i), weighted p_i in the global mix."""

    matrix: np.ndarray
    center: np.ndarray
    weight: float


def make_quadratic_clients(
    num_clients: int, dim: int, heterogeneity: float, seed: int
) -> list[QuadraticClient]:
    """Random well-conditioned quadratics.

    heterogeneity = 0 gives identical clients (exact convergence); larger
    values spread both centers and curvatures, which is what creates the
    plateau under multi-step local training.
    """
    if num_clients < 1 or dim < 1:
        raise ValueError("need num_clients >= 1 and dim >= 1")
    if heterogeneity < 0:
        raise ValueError(f"heterogeneity must be >= 0, got {heterogeneity}")
    gen = Rng(seed, "quad_noise").generator()
    base_eigs = gen.uniform(0.5, 2.0, dim)
    base_center = gen.standard_normal(dim)
    clients = []
    for _ in range(num_clients):
        if heterogeneity == 0.0:
            matrix = np.diag(base_eigs)
            center = base_center.copy()
        else:
            q, _ = np.linalg.qr(gen.standard_normal((dim, dim)))
            eigs = base_eigs * np.exp(heterogeneity * gen.uniform(-1.0, 1.0, dim))
            matrix = q @ np.diag(eigs) @ q.T
            matrix = (matrix + matrix.T) / 2.0
            center = base_center + heterogeneity * gen.standard_normal(dim)
        clients.append(QuadraticClient(matrix, center, 1.0 / num_clients))
    return clients


def validate_convergence(
    clients: list[QuadraticClient],
    rounds: int = 200,
    local_steps: int = 5,
    step_size: float = 0.1,
    prefit_factor: float = 20.0,
) -> dict:
    """Federated loop on exact-gradient quadratics plus a decay/plateau report.

    Each round every client takes `local_steps` exact gradient steps and the
    server averages with the p_i weights. The report carries the error series
    F(w_t) - F*, the plateau level (mean over the last quarter), a log-linear
    fit over the pre-plateau segment (errors above prefit_factor x plateau),
    and the tightest stationarity constants c1, c2 with min-so-far squared
    gradient norm <= c1/t + c2 for all t (c2 is the settled tail level, so it
    stays positive exactly when the gradient floor does).
    """
    if not clients:
        raise ValueError("need at least one quadratic client")
    if rounds < 4:
        raise ValueError(f"rounds must be >= 4, got {rounds}")
    dim = clients[0].center.size
    for i, c in enumerate(clients):
        if c.matrix.shape != (dim, dim) or c.center.shape != (dim,):
            raise ValueError(f"client {i} dimensions disagree with client 0")
        if c.weight <= 0:
            raise ValueError(f"client {i} weight must be > 0, got {c.weight}")
        eigs = np.linalg.eigvalsh((c.matrix + c.matrix.T) / 2.0)
        if eigs.min() <= 0:
            raise ValueError(f"client {i} quadratic is not positive definite")

    total_w = sum(c.weight for c in clients)
    weights = [c.weight / total_w for c in clients]
    mix = sum(p * c.matrix for p, c in zip(weights, clients))
    target = np.linalg.solve(mix, sum(p * c.matrix @ c.center for p, c in zip(weights, clients)))

    def objective(w: np.ndarray) -> float:
        return float(
            sum(
                p * 0.5 * (w - c.center) @ c.matrix @ (w - c.center)
                for p, c in zip(weights, clients)
            )
        )

    def grad(w: np.ndarray) -> np.ndarray:
        return sum(p * (c.matrix @ (w - c.center)) for p, c in zip(weights, clients))

    f_star = objective(target)
    w = np.zeros(dim)
    errors = [objective(w) - f_star]
    grad_sq = [float(grad(w) @ grad(w))]
    for _ in range(rounds):
        local = []
        for c in clients:
            v = w.copy()
            for _ in range(local_steps):
                v = v - step_size * (c.matrix @ (v - c.center))
            local.append(v)
        w = sum(p * v for p, v in zip(weights, local))
        errors.append(objective(w) - f_star)
        grad_sq.append(float(grad(w) @ grad(w)))

    err = np.asarray(errors)
    plateau = float(err[-max(1, rounds // 4) :].mean())
    prefit_mask = err > max(plateau, 0.0) * prefit_factor
    if plateau <= 0.0:
        prefit_mask = err > max(err[-1], 1e-300) * prefit_factor
    idx = np.flatnonzero(prefit_mask)
    fit: dict[str, float | int] = {"points": int(idx.size)}
    if idx.size >= 3:
        x = idx.astype(np.float64)
        y = np.log(err[idx])
        slope, intercept = np.polyfit(x, y, 1)
        pred = slope * x + intercept
        ss_res = float(((y - pred) ** 2).sum())
        ss_tot = float(((y - y.mean()) ** 2).sum())
        fit["slope"] = float(slope)
        fit["r_squared"] = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    gsq = np.asarray(grad_sq)
    min_so_far = np.minimum.accumulate(gsq)
    # Tightest constants with min_so_far[t] <= c1/t + c2 for every t >= 1:
    # c2 is the tail level the series settles to, c1 absorbs the transient.
    c2 = float(min_so_far[-max(1, rounds // 4) :].mean())
    t = np.arange(1, gsq.size)
    c1 = float(np.maximum(t * (min_so_far[1:] - c2), 0.0).max())
    bound_holds = bool((min_so_far[1:] <= c1 / t + c2 + 1e-12).all())
    return {
        "final_error": float(err[-1]),
        "plateau_level": plateau,
        "converged_to_zero": bool(err[-1] < 1e-10),
        "prefit": fit,
        "stationarity": {
            "c1": c1,
            "c2": c2,
            "bound_holds": bound_holds,
            "min_so_far_nonincreasing": bool((np.diff(min_so_far) <= 1e-15).all()),
        },
        "errors": [float(e) for e in errors],
        "grad_sq": [float(g) for g in grad_sq],
    }
