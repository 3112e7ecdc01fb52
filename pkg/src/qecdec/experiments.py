"""Experiment drivers: configuration, training, evaluation, reporting.

Configuration lives in a flat key = value text file with a schema
version; every key mirrors a field of ExperimentConfig.  Evaluation
shots are split into fixed-size chunks whose per-sample random streams
are keyed by (seed, noise point, shot index), and chunk results are
integer counts combined in chunk order, so logical-error-rate CSVs are
byte-identical no matter how many worker processes are used (worker
count comes from the QECDEC_WORKERS environment variable only).

Under independent noise the X and Z sectors are decoded as two separate
problems (each with its own model under neural decoders) and a shot
succeeds only when both sectors succeed.  Depolarizing noise is decoded
as a single joint problem on (e_x | e_z).
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace

import numpy as np

from . import autodiff, cpnd, gf2, losses, model, noise, reference
from .codes import (
    DecodingProblem,
    StabilizerCode,
    attention_mask,
    build_code,
    depolarizing_problem,
    index_to_bits,
    logical_class,
    sector_problem,
)

__all__ = [
    "ExperimentConfig",
    "default_config",
    "parse_config",
    "dump_config",
    "load_config",
    "config_hash",
    "sectors_for",
    "build_sector_problem",
    "cosine_lr",
    "TrainedDecoder",
    "TrainLogRow",
    "LerRow",
    "WeightRow",
    "train",
    "save_trained",
    "load_trained",
    "effective_decoders",
    "evaluate",
    "weight_samples",
    "weights_compare",
    "threshold_estimate",
    "wilson_interval",
    "write_ler_csv",
    "read_ler_csv",
    "rows_to_csv_text",
    "decode_flop_count",
    "selftest",
]

Z95 = 1.959963984540054  # normal 97.5% quantile for Wilson intervals
CHUNK_SHOTS = 512
ENV_WORKERS = "QECDEC_WORKERS"
SCHEMA_VERSION = 1
CSV_HEADER = "code,L,noise,p,decoder,shots,failures,ler,wilson_lo,wilson_hi,seed"
MODEL_DECODERS = ("cpnd", "projection", "osd0")
KNOWN_DECODERS = MODEL_DECODERS + ("oracle",)

P_GRID_INDEPENDENT = tuple(round(0.01 * k, 2) for k in range(1, 21))
P_GRID_DEPOLARIZING = tuple(round(0.01 * k, 2) for k in range(5, 21))


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat experiment description; defaults give the desk-scale setup."""

    schema_version: int = SCHEMA_VERSION
    code: str = "rotated_surface"
    L: int = 3
    noise: str = "depolarizing"
    p_grid: tuple[float, ...] = P_GRID_DEPOLARIZING
    p_min: float = 0.05
    p_max: float = 0.20
    decoders: tuple[str, ...] = ("cpnd", "projection", "osd0", "oracle")
    d: int = 32
    n_layers: int = 3
    heads: int = 4
    share_weights: bool = True
    lam_lp: float = 0.2
    lam_lc: float = 1.0
    lam_entropy: float = 1.0
    lr: float = 3e-4
    lr_floor: float = 1e-6
    epochs: int = 20
    batches_per_epoch: int = 1000
    batch_size: int = 64
    shots: int = 10000
    seed: int = 0
    passes: int = 1
    basis: str = "exact_kernel"

    def __post_init__(self):
        if self.noise not in ("independent", "depolarizing"):
            raise ValueError(f"unknown noise model {self.noise!r}")
        unknown = set(self.decoders) - set(KNOWN_DECODERS)
        if unknown:
            raise ValueError(f"unknown decoders {sorted(unknown)}; choose from {KNOWN_DECODERS}")
        if not 0.0 <= self.p_min <= self.p_max <= 1.0:
            raise ValueError("need 0 <= p_min <= p_max <= 1")
        if any(not 0.0 <= p < 1.0 for p in self.p_grid):
            raise ValueError("p_grid entries must lie in [0, 1)")
        if min(self.epochs, self.batches_per_epoch, self.batch_size, self.shots) < 1:
            raise ValueError("epochs, batches_per_epoch, batch_size and shots must be positive")
        if not 0.0 < self.lr_floor <= self.lr:
            raise ValueError("need 0 < lr_floor <= lr")

    @property
    def total_steps(self) -> int:
        return self.epochs * self.batches_per_epoch


def default_config(noise: str = "depolarizing") -> ExperimentConfig:
    """Documented defaults; the p grid depends on the noise model."""
    grid = P_GRID_DEPOLARIZING if noise == "depolarizing" else P_GRID_INDEPENDENT
    return ExperimentConfig(noise=noise, p_grid=grid)


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(text: str, kind):
    if kind is bool:
        if text not in ("true", "false"):
            raise ValueError(f"boolean must be true or false, got {text!r}")
        return text == "true"
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    return text


def dump_config(cfg: ExperimentConfig) -> str:
    lines = ["# experiment configuration (flat key = value)"]
    for f in fields(cfg):
        lines.append(f"{f.name} = {_format_value(getattr(cfg, f.name))}")
    return "\n".join(lines) + "\n"


def parse_config(text: str) -> ExperimentConfig:
    """Parse the flat key = value format produced by dump_config."""
    by_name = {f.name: f for f in fields(ExperimentConfig)}
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value, got {line!r}")
        key, _, val = (part.strip() for part in line.partition("="))
        if key not in by_name:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        f = by_name[key]
        if f.name == "p_grid":
            values[key] = tuple(float(v) for v in val.split(",") if v.strip())
        elif f.name == "decoders":
            values[key] = tuple(v.strip() for v in val.split(",") if v.strip())
        else:
            values[key] = _parse_value(val, type(getattr(ExperimentConfig(), key)))
    cfg = ExperimentConfig(**values)
    if cfg.schema_version != SCHEMA_VERSION:
        raise ValueError(
            f"config schema_version {cfg.schema_version} unsupported (expected {SCHEMA_VERSION})"
        )
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config(f.read())


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode("utf-8")).hexdigest()[:16]


# ---- problems and sectors ----


def sectors_for(cfg: ExperimentConfig) -> list[str]:
    if cfg.noise == "depolarizing":
        return ["sym"]
    if cfg.code == "repetition":
        return ["x"]  # Z errors act trivially on the repetition code
    return ["x", "z"]


def build_sector_problem(code: StabilizerCode, sector: str) -> DecodingProblem:
    if sector == "sym":
        return depolarizing_problem(code)
    return sector_problem(code, sector)


def _sector_seed(seed: int, sector_index: int) -> int:
    return seed * 131 + sector_index + 1


def _noise_spec_train(cfg: ExperimentConfig) -> noise.NoiseSpec:
    model_name = "depolarizing" if cfg.noise == "depolarizing" else "independent"
    return noise.NoiseSpec(model=model_name, p_range=(cfg.p_min, cfg.p_max))


def _noise_spec_eval(cfg: ExperimentConfig, p: float) -> noise.NoiseSpec:
    model_name = "depolarizing" if cfg.noise == "depolarizing" else "independent"
    return noise.NoiseSpec(model=model_name, p=p)


def marginal_flip_prob(problem: DecodingProblem, p: float) -> float:
    """Per-bit flip probability of the channel at physical rate p."""
    return 2.0 * p / 3.0 if problem.kind == "symplectic" else p


# ---- training ----


@dataclass(frozen=True)
class TrainLogRow:
    """Per-epoch means of the loss parts and the batch class accuracy."""

    sector: str
    epoch: int
    step: int
    lr: float
    lp: float
    lc: float
    entropy: float
    total: float
    accuracy: float


@dataclass
class TrainedDecoder:
    """Per-sector parameter sets plus the configs they were built with."""

    cfg: ExperimentConfig
    sectors: dict  # sector name -> (ModelConfig, params dict[str, Tensor])


def cosine_lr(step: int, total_steps: int, lr: float, lr_floor: float) -> float:
    """Cosine annealing from lr down to lr_floor over total_steps."""
    if total_steps <= 1:
        return lr_floor
    frac = step / (total_steps - 1)
    return lr_floor + 0.5 * (lr - lr_floor) * (1.0 + math.cos(math.pi * frac))


def train(cfg: ExperimentConfig, progress=None) -> tuple[TrainedDecoder, list[TrainLogRow]]:
    """Train one decoder per sector; returns the bundle and the loss trace.

    Any NaN reaching a loss aborts with a diagnostic naming the sector
    and step.
    """
    code = build_code(cfg.code, cfg.L)
    weights = losses.LossWeights(lp=cfg.lam_lp, lc=cfg.lam_lc, entropy=cfg.lam_entropy)
    spec = _noise_spec_train(cfg)
    log_rows: list[TrainLogRow] = []
    sectors: dict = {}
    for sector_index, sector in enumerate(sectors_for(cfg)):
        problem = build_sector_problem(code, sector)
        mcfg = model.ModelConfig.for_problem(
            problem,
            d=cfg.d,
            n_layers=cfg.n_layers,
            heads=cfg.heads,
            share_weights=cfg.share_weights,
        )
        seed = _sector_seed(cfg.seed, sector_index)
        params = model.init_params(mcfg, seed=seed)
        allow = attention_mask(problem)
        state = autodiff.AdamState()
        total_steps = cfg.total_steps
        for epoch in range(cfg.epochs):
            sums = {"lp": 0.0, "lc": 0.0, "entropy": 0.0, "total": 0.0, "acc": 0.0}
            lr_t = cfg.lr
            for b in range(cfg.batches_per_epoch):
                step = epoch * cfg.batches_per_epoch + b
                lr_t = cosine_lr(step, total_steps, cfg.lr, cfg.lr_floor)
                batch = noise.make_batch(
                    problem, spec, cfg.batch_size, seed, start_index=step * cfg.batch_size
                )
                try:
                    flip_logits, class_logits, prior_logits = model.forward(
                        params, mcfg, batch.syndromes, allow
                    )
                    total, parts = losses.combined_loss(
                        prior_logits,
                        class_logits,
                        flip_logits,
                        batch.errors,
                        batch.classes,
                        problem.l_eff,
                        weights,
                    )
                    autodiff.zero_grads(params)
                    total.backward()
                except FloatingPointError as exc:
                    raise RuntimeError(
                        f"training aborted: {exc} (sector {sector}, step {step})"
                    ) from exc
                autodiff.adam_step(params, state, lr_t)
                for key in ("lp", "lc", "entropy", "total"):
                    sums[key] += parts[key]
                sums["acc"] += float(
                    (model.predict_class(class_logits.data) == batch.classes).mean()
                )
            n_b = cfg.batches_per_epoch
            row = TrainLogRow(
                sector=sector,
                epoch=epoch + 1,
                step=(epoch + 1) * n_b,
                lr=lr_t,
                lp=sums["lp"] / n_b,
                lc=sums["lc"] / n_b,
                entropy=sums["entropy"] / n_b,
                total=sums["total"] / n_b,
                accuracy=sums["acc"] / n_b,
            )
            log_rows.append(row)
            if progress is not None:
                progress(
                    f"[{sector}] epoch {row.epoch}/{cfg.epochs} "
                    f"lr={row.lr:.2e} total={row.total:.4f} "
                    f"lp={row.lp:.4f} lc={row.lc:.4f} ent={row.entropy:.4f} "
                    f"acc={row.accuracy:.3f}"
                )
        sectors[sector] = (mcfg, params)
    return TrainedDecoder(cfg=cfg, sectors=sectors), log_rows


def save_trained(path, trained: TrainedDecoder) -> None:
    tensors = {}
    for sector, (_, params) in trained.sectors.items():
        for name, tensor in params.items():
            tensors[f"{sector}/{name}"] = tensor
    meta = {
        "kind": "trained-decoder",
        "config": dump_config(trained.cfg),
        "config_hash": config_hash(trained.cfg),
        "sectors": ",".join(trained.sectors),
    }
    model.save_model(path, tensors, meta)


def load_trained(path) -> TrainedDecoder:
    params_by_name, meta = autodiff.load_checkpoint(path)
    if meta.get("kind") != "trained-decoder":
        raise ValueError("checkpoint is not a trained decoder bundle")
    cfg = parse_config(meta["config"])
    code = build_code(cfg.code, cfg.L)
    sectors: dict = {}
    for sector in meta["sectors"].split(","):
        problem = build_sector_problem(code, sector)
        mcfg = model.ModelConfig.for_problem(
            problem,
            d=cfg.d,
            n_layers=cfg.n_layers,
            heads=cfg.heads,
            share_weights=cfg.share_weights,
        )
        prefix = f"{sector}/"
        params = {
            name[len(prefix) :]: autodiff.Tensor(arr, requires_grad=True)
            for name, arr in params_by_name.items()
            if name.startswith(prefix)
        }
        expected = set(model.init_params(mcfg, seed=0))
        if set(params) != expected:
            raise ValueError(f"checkpoint parameter names disagree for sector {sector}")
        sectors[sector] = (mcfg, params)
    return TrainedDecoder(cfg=cfg, sectors=sectors)


# ---- evaluation ----


@dataclass(frozen=True)
class LerRow:
    code: str
    L: int
    noise: str
    p: float
    decoder: str
    shots: int
    failures: int
    ler: float
    wilson_lo: float
    wilson_hi: float
    seed: int


def wilson_interval(failures: int, shots: int) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    if shots <= 0:
        raise ValueError("shots must be positive")
    if not 0 <= failures <= shots:
        raise ValueError(f"failures={failures} outside [0, {shots}]")
    phat = failures / shots
    z2 = Z95 * Z95
    denom = 1.0 + z2 / shots
    center = (phat + z2 / (2.0 * shots)) / denom
    half = (Z95 / denom) * math.sqrt(phat * (1.0 - phat) / shots + z2 / (4.0 * shots * shots))
    lo = 0.0 if failures == 0 else max(0.0, center - half)
    hi = 1.0 if failures == shots else min(1.0, center + half)
    return lo, hi


def _workers_from_env() -> int:
    raw = os.environ.get(ENV_WORKERS, "1")
    try:
        w = int(raw)
    except ValueError as exc:
        raise ValueError(f"{ENV_WORKERS} must be an integer, got {raw!r}") from exc
    return max(1, w)


def _sector_payloads(cfg: ExperimentConfig, trained: TrainedDecoder | None) -> list[dict]:
    payloads = []
    for sector_index, sector in enumerate(sectors_for(cfg)):
        entry = {"sector": sector, "sector_index": sector_index, "params": None}
        if trained is not None:
            mcfg, params = trained.sectors[sector]
            entry["params"] = {name: t.data for name, t in params.items()}
            entry["model_cfg"] = {
                "d": mcfg.d,
                "n_layers": mcfg.n_layers,
                "heads": mcfg.heads,
                "share_weights": mcfg.share_weights,
            }
        payloads.append(entry)
    return payloads


def _eval_chunk(task: dict) -> dict:
    """Decode one chunk of shots; returns integer failure counts per decoder.

    Runs inside worker processes; everything needed is rebuilt from the
    task dict so results only depend on (config, seed, chunk indices).
    """
    cfg = parse_config(task["config_text"])
    code = build_code(cfg.code, cfg.L)
    p = cfg.p_grid[task["p_index"]]
    lo, hi = task["shot_lo"], task["shot_hi"]
    n_shots = hi - lo
    decoders = list(cfg.decoders)
    success = {name: np.ones(n_shots, dtype=bool) for name in decoders}
    spec = _noise_spec_eval(cfg, p)
    for entry in task["sectors"]:
        problem = build_sector_problem(code, entry["sector"])
        seed = _sector_seed(cfg.seed, entry["sector_index"])
        errors = np.empty((n_shots, problem.n_err), dtype=np.uint8)
        for j in range(n_shots):
            rng = noise.error_stream(
                seed, (task["p_index"] << 40) | (lo + j), noise.DOMAIN_EVAL
            )
            errors[j] = noise.sample_error(problem, spec, rng)
        syn_bits = (errors.astype(np.int64) @ problem.h_eff.T.astype(np.int64)) & 1
        true_class = (
            (errors.astype(np.int64) @ problem.l_eff.T.astype(np.int64)) & 1
        ) @ (1 << np.arange(problem.n_log, dtype=np.int64))
        model_wanted = [d for d in decoders if d in MODEL_DECODERS]
        if model_wanted:
            if entry["params"] is None:
                raise ValueError(f"decoders {model_wanted} need a trained checkpoint")
            mcfg = model.ModelConfig.for_problem(problem, **entry["model_cfg"])
            params = {k: autodiff.Tensor(v) for k, v in entry["params"].items()}
            allow = attention_mask(problem)
            ctx = cpnd.build_context(problem, cfg.basis)
            flip, cls, _ = model.forward(
                params, mcfg, (1.0 - 2.0 * syn_bits).astype(np.float64), allow
            )
            flip_np, cls_np = flip.data, cls.data
            for j in range(n_shots):
                s_bits = syn_bits[j].astype(np.uint8)
                for name in model_wanted:
                    if name == "cpnd":
                        rec = cpnd.decode(
                            ctx, flip_np[j], cls_np[j], s_bits, passes=cfg.passes
                        ).recovery
                    elif name == "projection":
                        rec = reference.projection_only_decode(
                            ctx, flip_np[j], cls_np[j], s_bits
                        )
                    else:
                        b = np.concatenate(
                            [
                                s_bits,
                                ((int(cls_np[j].argmax()) >> np.arange(problem.n_log)) & 1).astype(
                                    np.uint8
                                ),
                            ]
                        )
                        rec = reference.osd0_decode(ctx, flip_np[j], b)
                    ok = reference.is_logical_success(problem, errors[j], rec)
                    success[name][j] &= ok
        if "oracle" in decoders:
            prior = (
                reference.ChannelPrior.depolarizing(p, problem.n_err // 2)
                if problem.kind == "symplectic"
                else reference.ChannelPrior.independent(p, problem.n_err)
            )
            oracle = reference.OracleDecoder(problem, prior)
            for j in range(n_shots):
                best, _, _ = oracle.decode(syn_bits[j].astype(np.uint8))
                success["oracle"][j] &= best == int(true_class[j])
    return {name: int(np.count_nonzero(~ok)) for name, ok in success.items()}


def _check_binding(cfg: ExperimentConfig, trained: TrainedDecoder) -> None:
    bound = ("code", "L", "noise", "d", "n_layers", "heads", "share_weights")
    bad = [f for f in bound if getattr(cfg, f) != getattr(trained.cfg, f)]
    if bad:
        raise ValueError(f"checkpoint does not match config on fields {bad}")


def effective_decoders(cfg: ExperimentConfig) -> tuple[str, ...]:
    """Requested decoders minus the oracle when enumeration is too large."""
    if "oracle" not in cfg.decoders:
        return cfg.decoders
    code = build_code(cfg.code, cfg.L)
    for sector in sectors_for(cfg):
        if build_sector_problem(code, sector).n_err > reference.ORACLE_MAX_BITS:
            return tuple(d for d in cfg.decoders if d != "oracle")
    return cfg.decoders


def evaluate(
    cfg: ExperimentConfig,
    trained: TrainedDecoder | None = None,
    workers: int | None = None,
) -> list[LerRow]:
    """Monte-Carlo logical error rates for every (p, decoder) pair.

    Results are independent of the worker count: chunks own their random
    streams and integer counts are combined in chunk order.  Oracle rows
    appear only when the problem is small enough to enumerate.
    """
    decoders = effective_decoders(cfg)
    model_wanted = [d for d in decoders if d in MODEL_DECODERS]
    if model_wanted:
        if trained is None:
            raise ValueError(f"decoders {model_wanted} need a trained checkpoint")
        _check_binding(cfg, trained)
    if workers is None:
        workers = _workers_from_env()
    run_cfg = replace(cfg, decoders=decoders)
    config_text = dump_config(run_cfg)
    sectors = _sector_payloads(cfg, trained)
    tasks = []
    for p_index in range(len(cfg.p_grid)):
        for lo in range(0, cfg.shots, CHUNK_SHOTS):
            tasks.append(
                {
                    "config_text": config_text,
                    "p_index": p_index,
                    "shot_lo": lo,
                    "shot_hi": min(lo + CHUNK_SHOTS, cfg.shots),
                    "sectors": sectors,
                }
            )
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_eval_chunk, tasks))
    else:
        results = [_eval_chunk(t) for t in tasks]
    rows: list[LerRow] = []
    for p_index, p in enumerate(cfg.p_grid):
        failures = {name: 0 for name in decoders}
        for task, res in zip(tasks, results):
            if task["p_index"] != p_index:
                continue
            for name in decoders:
                failures[name] += res[name]
        for name in decoders:
            lo_ci, hi_ci = wilson_interval(failures[name], cfg.shots)
            rows.append(
                LerRow(
                    code=cfg.code,
                    L=cfg.L,
                    noise=cfg.noise,
                    p=p,
                    decoder=name,
                    shots=cfg.shots,
                    failures=failures[name],
                    ler=failures[name] / cfg.shots,
                    wilson_lo=lo_ci,
                    wilson_hi=hi_ci,
                    seed=cfg.seed,
                )
            )
    return rows


# ---- recovery-weight comparison ----


@dataclass(frozen=True)
class WeightRow:
    p: float
    method: str
    shots: int
    mean_weight: float
    stderr: float


def weight_samples(
    cfg: ExperimentConfig,
    p: float,
    p_index: int,
    trained: TrainedDecoder | None = None,
    shots: int | None = None,
) -> dict[str, np.ndarray]:
    """Per-shot recovery Hamming weights for each post-processing method.

    With a trained decoder the neural logits and predicted class build
    the constraint vector; without one, every bit gets the channel-prior
    logit and the true class is used, so the three methods still target
    one common coset per shot.  Under independent noise the two sector
    weights are summed per shot.
    """
    shots = cfg.shots if shots is None else shots
    code = build_code(cfg.code, cfg.L)
    spec = _noise_spec_eval(cfg, p)
    methods = ("projection", "cpnd", "osd0")
    weights = {mth: np.zeros(shots) for mth in methods}
    for sector_index, sector in enumerate(sectors_for(cfg)):
        problem = build_sector_problem(code, sector)
        ctx = cpnd.build_context(problem, cfg.basis)
        seed = _sector_seed(cfg.seed, sector_index)
        errors = np.empty((shots, problem.n_err), dtype=np.uint8)
        for j in range(shots):
            rng = noise.error_stream(seed, (p_index << 40) | j, noise.DOMAIN_EVAL)
            errors[j] = noise.sample_error(problem, spec, rng)
        syn_bits = ((errors.astype(np.int64) @ problem.h_eff.T.astype(np.int64)) & 1).astype(
            np.uint8
        )
        if trained is not None:
            mcfg, params = trained.sectors[sector]
            allow = attention_mask(problem)
            flip, cls, _ = model.forward(
                params, mcfg, (1.0 - 2.0 * syn_bits).astype(np.float64), allow
            )
            flip_np, cls_np = flip.data, cls.data
        else:
            q = marginal_flip_prob(problem, p)
            q = min(max(q, cpnd.PROB_CLAMP), 1.0 - cpnd.PROB_CLAMP)
            flip_np = np.full((shots, problem.n_err), math.log(q / (1.0 - q)))
            cls_bits = ((errors.astype(np.int64) @ problem.l_eff.T.astype(np.int64)) & 1).astype(
                np.uint8
            )
        for j in range(shots):
            if trained is not None:
                cls_row = cls_np[j]
            else:
                # one-hot on the true class keeps all methods in one coset
                idx = int(cls_bits[j] @ (1 << np.arange(problem.n_log)))
                cls_row = np.zeros(problem.n_classes)
                cls_row[idx] = 1.0
            res = cpnd.decode(ctx, flip_np[j], cls_row, syn_bits[j], passes=cfg.passes)
            weights["projection"][j] += int(res.projected.sum())
            weights["cpnd"][j] += int(res.recovery.sum())
            b = np.concatenate(
                [syn_bits[j], ((int(cls_row.argmax()) >> np.arange(problem.n_log)) & 1).astype(np.uint8)]
            )
            osd = reference.osd0_decode(ctx, flip_np[j], b)
            weights["osd0"][j] += int(osd.sum())
    return weights


def weights_compare(
    cfg: ExperimentConfig,
    trained: TrainedDecoder | None = None,
    shots: int | None = None,
) -> list[WeightRow]:
    """Mean recovery weight per (p, method) over the config's p grid."""
    shots = cfg.shots if shots is None else shots
    rows: list[WeightRow] = []
    for p_index, p in enumerate(cfg.p_grid):
        samples = weight_samples(cfg, p, p_index, trained=trained, shots=shots)
        for method, values in samples.items():
            rows.append(
                WeightRow(
                    p=p,
                    method=method,
                    shots=shots,
                    mean_weight=float(values.mean()),
                    stderr=float(values.std(ddof=1) / math.sqrt(shots)),
                )
            )
    return rows


# ---- threshold estimation ----


def threshold_estimate(rows: list[LerRow], decoder: str | None = None) -> dict:
    """Crossing points of log-LER curves across code distances.

    Curves are per (decoder, L); within each decoder every pair of
    distances is scanned for sign changes of the piecewise-linear
    difference of log LER over the shared p grid.  Zero-failure points
    are dropped (their log is undefined).  Returns a dict keyed by
    decoder with crossings, their mean and spread, or the string
    "no crossing in grid".
    """
    by_decoder: dict = {}
    for row in rows:
        if decoder is not None and row.decoder != decoder:
            continue
        by_decoder.setdefault(row.decoder, {}).setdefault(row.L, {})[row.p] = row.ler
    report: dict = {}
    for name, by_l in by_decoder.items():
        if len(by_l) < 2:
            report[name] = "need at least two distances"
            continue
        crossings = []
        dists = sorted(by_l)
        for i in range(len(dists)):
            for j in range(i + 1, len(dists)):
                l1, l2 = dists[i], dists[j]
                shared = sorted(
                    p
                    for p in set(by_l[l1]) & set(by_l[l2])
                    if by_l[l1][p] > 0 and by_l[l2][p] > 0
                )
                if len(shared) < 2:
                    continue
                diff = [math.log(by_l[l2][p]) - math.log(by_l[l1][p]) for p in shared]
                for k in range(len(shared) - 1):
                    d0, d1 = diff[k], diff[k + 1]
                    if d0 == 0.0:
                        crossings.append((l1, l2, shared[k]))
                    elif d0 * d1 < 0.0:
                        frac = d0 / (d0 - d1)
                        crossings.append(
                            (l1, l2, shared[k] + frac * (shared[k + 1] - shared[k]))
                        )
        if not crossings:
            report[name] = "no crossing in grid"
        else:
            ps = [c[2] for c in crossings]
            report[name] = {
                "crossings": crossings,
                "mean": sum(ps) / len(ps),
                "spread": max(ps) - min(ps),
            }
    return report


# ---- CSV ----


def _row_to_csv(row: LerRow) -> list[str]:
    return [
        row.code,
        str(row.L),
        row.noise,
        repr(row.p),
        row.decoder,
        str(row.shots),
        str(row.failures),
        repr(row.ler),
        repr(row.wilson_lo),
        repr(row.wilson_hi),
        str(row.seed),
    ]


def write_ler_csv(target, rows: list[LerRow], cfg: ExperimentConfig) -> None:
    """Write rows with the fixed header and one metadata comment line."""
    own = isinstance(target, (str, os.PathLike))
    f = open(target, "w", encoding="utf-8", newline="") if own else target
    try:
        f.write(f"# config_hash={config_hash(cfg)} version={SCHEMA_VERSION}\n")
        f.write(CSV_HEADER + "\n")
        writer = csv.writer(f, lineterminator="\n")
        for row in rows:
            writer.writerow(_row_to_csv(row))
    finally:
        if own:
            f.close()


def read_ler_csv(source) -> tuple[list[LerRow], str]:
    """Read rows back; returns (rows, metadata comment line)."""
    own = isinstance(source, (str, os.PathLike))
    f = open(source, "r", encoding="utf-8", newline="") if own else source
    try:
        meta = f.readline().rstrip("\n")
        if not meta.startswith("#"):
            raise ValueError("missing metadata comment line")
        header = f.readline().rstrip("\n")
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header!r}")
        rows = []
        for rec in csv.reader(f):
            if not rec:
                continue
            rows.append(
                LerRow(
                    code=rec[0],
                    L=int(rec[1]),
                    noise=rec[2],
                    p=float(rec[3]),
                    decoder=rec[4],
                    shots=int(rec[5]),
                    failures=int(rec[6]),
                    ler=float(rec[7]),
                    wilson_lo=float(rec[8]),
                    wilson_hi=float(rec[9]),
                    seed=int(rec[10]),
                )
            )
        return rows, meta
    finally:
        if own:
            f.close()


def rows_to_csv_text(rows: list[LerRow], cfg: ExperimentConfig) -> str:
    buf = io.StringIO()
    write_ler_csv(buf, rows, cfg)
    return buf.getvalue()


# ---- cost accounting ----


def decode_flop_count(mcfg: model.ModelConfig, allow: np.ndarray, ctx: cpnd.CpndContext) -> int:
    """Operation count of one full decode: forward pass plus post-processing.

    Post-processing is charged by nonzeros: the projection multiplies by
    h_aug and the pseudo-inverse, the descent pass visits each generator
    support twice (score, then possible flip).
    """
    total = model.flops_forward(mcfg, allow)
    total += int(ctx.h_aug.sum()) + int(ctx.b_left.sum()) + ctx.problem.n_err
    total += 2 * sum(len(s) for s in ctx.supports)
    return total


# ---- self test ----


def selftest(fast: bool = True, progress=print) -> list[tuple[str, bool, str]]:
    """Run the core invariant suite; returns (name, passed, detail) rows."""
    results: list[tuple[str, bool, str]] = []
    rng = np.random.default_rng(2024)

    def record(name: str, passed: bool, detail: str = "") -> None:
        results.append((name, passed, detail))
        if progress is not None:
            progress(f"{'PASS' if passed else 'FAIL'}  {name}{f'  ({detail})' if detail else ''}")

    # code algebra
    combos = [("toric", 2), ("rotated_surface", 3), ("repetition", 3)]
    if not fast:
        combos += [("toric", 3), ("toric", 4), ("rotated_surface", 5), ("repetition", 5)]
    ok, detail = True, ""
    try:
        for name, L in combos:
            code = build_code(name, L)
            for sector in sectors_for(ExperimentConfig(code=name, L=L, noise="independent")):
                problem = build_sector_problem(code, sector)
                cpnd.build_context(problem)
            if name != "repetition":
                cpnd.build_context(depolarizing_problem(code))
    except Exception as exc:  # pragma: no cover - failure path
        ok, detail = False, str(exc)
    record("code and constraint algebra", ok, detail or f"{len(combos)} codes")

    # parity closed form against enumeration
    n_cases = 200 if fast else 1000
    worst = 0.0
    for _ in range(n_cases):
        size = int(rng.integers(1, 9))
        q = rng.random(size)
        exact = 0.0
        for outcome in range(2**size):
            bits = (outcome >> np.arange(size)) & 1
            if bits.sum() % 2 == 1:
                exact += float(np.prod(np.where(bits, q, 1.0 - q)))
        closed = 0.5 * (1.0 - float(np.prod(1.0 - 2.0 * q)))
        worst = max(worst, abs(exact - closed))
    record("parity probability closed form", worst <= 1e-12, f"max gap {worst:.2e}")

    gap = losses.sigmoid_tanh_identity_gap(np.linspace(-30, 30, 10001))
    record("sigmoid-tanh identity", gap <= 1e-12, f"max gap {gap:.2e}")

    # gradient check on the losses through a tiny model
    rep = build_code("repetition", 3)
    problem = sector_problem(rep, "x")
    mcfg = model.ModelConfig.for_problem(problem, d=8, n_layers=1, heads=2)
    params = model.init_params(mcfg, seed=5)
    for tensor in params.values():  # break zero-init so gradients flow everywhere
        tensor.data = tensor.data + rng.normal(0.0, 0.05, size=tensor.data.shape)
    allow = attention_mask(problem)
    spec = noise.NoiseSpec(model="independent", p=0.2)
    batch = noise.make_batch(problem, spec, 8, seed=11)

    def loss_fn():
        flip, cls, prior = model.forward(params, mcfg, batch.syndromes, allow)
        total, _ = losses.combined_loss(
            prior, cls, flip, batch.errors, batch.classes, problem.l_eff
        )
        return total

    report = autodiff.gradient_check(
        loss_fn, params, max_entries_per_param=2 if fast else 6, rng=rng
    )
    record("gradient check", report.max_rel_err <= 1e-4, f"max rel err {report.max_rel_err:.2e}")

    # feasibility and cost contracts of the post-processor
    code = build_code("rotated_surface", 3)
    problem = sector_problem(code, "x")
    ctx = cpnd.build_context(problem)
    n_cases = 500 if fast else 2000
    ok, detail = True, ""
    for _ in range(n_cases):
        flip_logits = rng.normal(0.0, 2.0, problem.n_err)
        cls_logits = rng.normal(0.0, 1.0, problem.n_classes)
        s = rng.integers(0, 2, problem.m).astype(np.uint8)
        res = cpnd.decode(ctx, flip_logits, cls_logits, s)
        w = cpnd.weights_from_logits(flip_logits)
        b = np.concatenate([s, index_to_bits(res.class_pred, problem.n_log)])
        if not np.array_equal(gf2.matvec(ctx.h_aug, res.recovery), b):
            ok, detail = False, "infeasible recovery"
            break
        if cpnd.weighted_cost(res.recovery, w) > cpnd.weighted_cost(res.projected, w) + 1e-12:
            ok, detail = False, "descent increased the cost"
            break
    record("post-processing contracts", ok, detail or f"{n_cases} random instances")

    # oracle equals majority voting on the repetition code
    rp = sector_problem(rep, "x")
    oracle = reference.OracleDecoder(rp, reference.ChannelPrior.independent(0.1, 3))
    ok = True
    for e_int in range(8):
        e = ((e_int >> np.arange(3)) & 1).astype(np.uint8)
        syn = ((rp.h_eff.astype(np.int64) @ e.astype(np.int64)) & 1).astype(np.uint8)
        best, _, _ = oracle.decode(syn)
        # below p = 1/2 the most likely class is that of the lighter coset
        if best != (logical_class(rp, e) ^ (1 if e.sum() > 1 else 0)):
            ok = False
    record("oracle equals majority vote", ok)

    return results
