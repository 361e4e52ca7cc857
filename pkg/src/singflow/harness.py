"""Sweep orchestration: cells, seeding, CSV persistence, and fit summaries.

A sweep enumerates (triplet, H, base, flow config, n, seed) cells. Every cell
derives its RNG streams from a stable hash of its key plus the global seed,
so reruns (serial or parallel) produce the identical row set, and completed
cells found in the output CSV are skipped on resume.
"""

import csv
import hashlib
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, fields, replace

import numpy as np

from . import asymptotics, basedist, flow, train_eval, triplets

DEFAULT_N_GRID = [1000, 1196, 1431, 1711, 2047, 2448, 2929, 3503, 4190, 5012]
RESULT_COLUMNS = ["triplet", "H", "base", "coupling_pairs", "hidden", "n",
                  "seed", "status", "elbo_final", "mvfe", "vge", "wall_seconds"]
SUMMARY_COLUMNS = ["triplet", "H", "base", "coupling_pairs", "hidden",
                   "n_points", "lambda_vfe", "intercept_vfe", "r2_vfe",
                   "lambda_vge", "r2_vge", "true_lambda", "note"]


@dataclass(frozen=True)
class SweepConfig:
    triplet: str = "reduced_rank"
    H: tuple = (2,)
    bases: tuple = ("gengamma", "gaussian")
    flows: tuple = ((2, 4),)                      # (coupling_pairs, hidden)
    n_grid: tuple = tuple(DEFAULT_N_GRID)
    seeds: int = 30
    epochs: int = 5000
    learning_rate: float = 0.01
    mc_samples: int = 10
    eval_samples: int = 1000
    test_size: int = 10000
    grad_clip: float = 100.0
    global_seed: int = 0
    truth_seed: int = triplets.DEFAULT_TRUTH_SEED
    workers: int = 1
    out: str = "results"


@dataclass(frozen=True)
class Cell:
    triplet: str
    H: int
    base: str
    coupling_pairs: int
    hidden: int
    n: int
    seed: int

    def key(self) -> tuple:
        return (self.triplet, self.H, self.base, self.coupling_pairs,
                self.hidden, self.n, self.seed)


def stable_hash(*parts) -> int:
    """64-bit seed from a canonical string; independent of PYTHONHASHSEED."""
    text = "|".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little")


def cells_of(config: SweepConfig) -> list[Cell]:
    out = []
    for h in config.H:
        for base in config.bases:
            for pairs, hidden in config.flows:
                for n in config.n_grid:
                    for seed in range(config.seeds):
                        out.append(Cell(config.triplet, h, base, pairs, hidden,
                                        n, seed))
    return out


def run_cell(cell: Cell, config: SweepConfig) -> dict:
    """Train and evaluate one cell; never raises for training divergence."""
    start = time.perf_counter()
    trip = triplets.Triplet(kind=cell.triplet, H=cell.H,
                            truth_seed=config.truth_seed)
    data_rng = np.random.default_rng(
        stable_hash("data", *cell.key(), config.global_seed))
    test_rng = np.random.default_rng(
        stable_hash("test", cell.triplet, cell.H, cell.n, config.global_seed))
    train_rng = np.random.default_rng(
        stable_hash("train", *cell.key(), config.global_seed))
    eval_rng = np.random.default_rng(
        stable_hash("eval", *cell.key(), config.global_seed))

    data = triplets.generate_data(trip, cell.n, data_rng)
    test_data = triplets.generate_data(trip, config.test_size, test_rng)
    spec = flow.FlowSpec(d=trip.dim_w, coupling_pairs=cell.coupling_pairs,
                         hidden=cell.hidden)
    base_params = (basedist.default_gengamma_params(spec.d, cell.n)
                   if cell.base == "gengamma" else None)
    train_cfg = train_eval.TrainConfig(
        epochs=config.epochs, learning_rate=config.learning_rate,
        mc_samples=config.mc_samples, grad_clip=config.grad_clip)
    result = train_eval.train(trip, data, cell.base, base_params, spec,
                              train_cfg, train_rng)
    row = {"triplet": cell.triplet, "H": cell.H, "base": cell.base,
           "coupling_pairs": cell.coupling_pairs, "hidden": cell.hidden,
           "n": cell.n, "seed": cell.seed}
    if result.status != "ok":
        row.update(status="diverged", elbo_final=math.nan, mvfe=math.nan,
                   vge=math.nan)
    else:
        ev = train_eval.evaluate(trip, data, test_data, cell.base, base_params,
                                 spec, result.params, eval_rng, seed=cell.seed,
                                 eval_samples=config.eval_samples)
        row.update(status="ok", elbo_final=ev.elbo_final,
                   mvfe=ev.mvfe_normalized, vge=ev.vge)
    row["wall_seconds"] = time.perf_counter() - start
    return row


def _row_key(row: dict) -> tuple:
    return (row["triplet"], int(row["H"]), row["base"],
            int(row["coupling_pairs"]), int(row["hidden"]), int(row["n"]),
            int(row["seed"]))


def _format_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _append_row(path: str, row: dict) -> None:
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([_format_value(row[c]) for c in RESULT_COLUMNS])
        fh.flush()
        os.fsync(fh.fileno())


def read_results(path: str) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            for col in ("H", "coupling_pairs", "hidden", "n", "seed"):
                row[col] = int(row[col])
            for col in ("elbo_final", "mvfe", "vge", "wall_seconds"):
                row[col] = float(row[col])
            rows.append(row)
    return rows


def run_sweep(config: SweepConfig, log=print) -> tuple[str, int]:
    """Execute all pending cells; returns (csv path, number of new rows)."""
    os.makedirs(config.out, exist_ok=True)
    csv_path = os.path.join(config.out, "results.csv")
    done: set[tuple] = set()
    if os.path.exists(csv_path):
        done = {_row_key(r) for r in read_results(csv_path)}
    else:
        with open(csv_path, "w", newline="") as fh:
            csv.writer(fh).writerow(RESULT_COLUMNS)
    pending = [c for c in cells_of(config) if c.key() not in done]
    if not pending:
        return csv_path, 0
    workers = config.workers if config.workers > 0 else (os.cpu_count() or 1)
    n_new = 0
    if workers == 1 or len(pending) == 1:
        for cell in pending:
            row = run_cell(cell, config)
            _append_row(csv_path, row)
            n_new += 1
            log(f"[{n_new}/{len(pending)}] {cell.key()} "
                f"status={row['status']} mvfe={row['mvfe']:.4g}")
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(run_cell, cell, config): cell
                       for cell in pending}
            for future in as_completed(futures):
                row = future.result()
                _append_row(csv_path, row)
                n_new += 1
                log(f"[{n_new}/{len(pending)}] {futures[future].key()} "
                    f"status={row['status']} mvfe={row['mvfe']:.4g}")
    return csv_path, n_new


# --- fitting -------------------------------------------------------------------

def group_rows(rows: list[dict]) -> dict[tuple, list[dict]]:
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        key = (row["triplet"], row["H"], row["base"], row["coupling_pairs"],
               row["hidden"])
        groups.setdefault(key, []).append(row)
    return groups


def seed_means(rows: list[dict], column: str) -> list[tuple[int, float]]:
    """Per-n mean over seeds of one result column (ok rows only)."""
    by_n: dict[int, list[float]] = {}
    for row in rows:
        if row["status"] == "ok" and math.isfinite(row[column]):
            by_n.setdefault(row["n"], []).append(row[column])
    return sorted((n, float(np.mean(vals))) for n, vals in by_n.items())


def fit_and_report(results_csv: str, summary_csv: str, log=print) -> list[dict]:
    """Group results, fit both asymptotic coefficients, write the summary."""
    rows = read_results(results_csv)
    groups = group_rows(rows)
    summary = []
    for key in sorted(groups):
        group = groups[key]
        triplet_kind, h, base, pairs, hidden = key
        rlct = triplets.true_rlct(triplets.Triplet(kind=triplet_kind, H=h))
        true_lambda = float(rlct[0]) if rlct is not None else math.nan
        mvfe_points = seed_means(group, "mvfe")
        vge_points = seed_means(group, "vge")
        entry = {"triplet": triplet_kind, "H": h, "base": base,
                 "coupling_pairs": pairs, "hidden": hidden,
                 "n_points": len(mvfe_points), "true_lambda": true_lambda}
        if len(mvfe_points) < 3:
            entry.update(lambda_vfe=math.nan, intercept_vfe=math.nan,
                         r2_vfe=math.nan, lambda_vge=math.nan, r2_vge=math.nan,
                         note="skipped_insufficient_n")
            log(f"warning: group {key} has {len(mvfe_points)} n values, skipped")
        else:
            vfe_fit = asymptotics.fit_mvfe_coeff(mvfe_points)
            vge_fit = asymptotics.fit_vge_coeff(vge_points)
            entry.update(lambda_vfe=vfe_fit.slope, intercept_vfe=vfe_fit.intercept,
                         r2_vfe=vfe_fit.r_squared, lambda_vge=vge_fit.slope,
                         r2_vge=vge_fit.r_squared, note="ok")
        summary.append(entry)
    with open(summary_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for entry in summary:
            writer.writerow([_format_value(entry[c]) for c in SUMMARY_COLUMNS])
    return summary


def read_summary(path: str) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            for col in ("H", "coupling_pairs", "hidden", "n_points"):
                row[col] = int(row[col])
            for col in ("lambda_vfe", "intercept_vfe", "r2_vfe", "lambda_vge",
                        "r2_vge", "true_lambda"):
                row[col] = float(row[col])
            rows.append(row)
    return rows


# --- config files ----------------------------------------------------------------

def parse_config_text(text: str) -> dict:
    """Flat key = value lines; lists are comma-separated; # starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        values[key.strip()] = val.strip()
    return values


def _parse_int_list(text: str) -> tuple:
    return tuple(int(x.strip()) for x in text.split(",") if x.strip())


def _parse_str_list(text: str) -> tuple:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _parse_flows(text: str) -> tuple:
    out = []
    for item in _parse_str_list(text):
        pairs, _, hidden = item.partition("_")
        out.append((int(pairs), int(hidden)))
    return tuple(out)


def load_sweep_config(path: str, **overrides) -> SweepConfig:
    with open(path) as fh:
        raw = parse_config_text(fh.read())
    known = {f.name for f in fields(SweepConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for key, val in raw.items():
        if key == "triplet":
            kwargs[key] = val
        elif key == "out":
            kwargs[key] = val
        elif key == "H":
            kwargs[key] = _parse_int_list(val)
        elif key == "bases":
            kwargs[key] = _parse_str_list(val)
        elif key == "flows":
            kwargs[key] = _parse_flows(val)
        elif key == "n_grid":
            kwargs[key] = _parse_int_list(val)
        elif key in ("learning_rate", "grad_clip"):
            kwargs[key] = float(val)
        else:
            kwargs[key] = int(val)
    config = SweepConfig(**kwargs)
    active = {k: v for k, v in overrides.items() if v is not None}
    if active:
        config = replace(config, **active)
    return config
