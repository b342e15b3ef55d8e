import itertools
import logging
import time
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from concurrent.futures import ProcessPoolExecutor, as_completed

from config.scenario import ScenarioConfig, apply_overrides
from config.settings import CRITICAL_HEADWAY_TIME, CRITICAL_LATERAL_GAP, SWEEP_JOBS
from runner.closed_loop import build_setup, run_closed_loop
from runner.metrics import compute_metrics
from utils.logger import setup_logger

logger = setup_logger()


def _flatten(table: dict, prefix: str = "") -> dict:
    flat = {}
    for key, value in table.items():
        dotted = f"{prefix}.{key}" if prefix else key
        if isinstance(value, dict):
            flat.update(_flatten(value, dotted))
        else:
            flat[dotted] = value
    return flat


def load_grid(path) -> list[dict]:
    """Cartesian product of the ``[grid]`` table of a TOML file.

    Keys are dotted scenario paths (``longitudinal.P_x = [0.5, 1.0, 2.0]``);
    a scalar value is a single-valued axis.
    """
    with open(path, "rb") as f:
        doc = tomllib.load(f)
    if "grid" not in doc:
        raise ValueError(f"{path}: no [grid] table")
    axes = _flatten(doc["grid"])
    return expand_grid(axes)


def expand_grid(axes: dict) -> list[dict]:
    if not axes:
        raise ValueError("sweep grid is empty")
    keys = list(axes)
    values = [v if isinstance(v, list) else [v] for v in axes.values()]
    if any(len(v) == 0 for v in values):
        raise ValueError("sweep grid has an axis without values")
    return [dict(zip(keys, combo)) for combo in itertools.product(*values)]


def is_critical(min_headway_time, min_lateral_distance, collision: bool) -> bool:
    if collision:
        return True
    if min_headway_time is not None and min_headway_time < CRITICAL_HEADWAY_TIME:
        return True
    return min_lateral_distance is not None and min_lateral_distance < CRITICAL_LATERAL_GAP


def run_point(base: ScenarioConfig, overrides: dict, log_level=logging.WARNING) -> dict:
    """One grid point: a fresh closed loop with its own controllers."""
    record = {"point": dict(overrides)}
    try:
        config = apply_overrides(base, overrides)
        trace = run_closed_loop(config, log_level=log_level)
        setup = build_setup(config)
        metrics = compute_metrics(trace, setup.occ, wheelbase=setup.sim.l)
    except Exception as e:
        return {**record, "failed": True, "error": str(e)}
    return {
        **record,
        "failed": False,
        "aborted": trace.aborted,
        "min_headway_time": metrics.min_headway_time,
        "min_lateral_distance": metrics.min_lateral_distance,
        "collision": metrics.collision,
        "overtake_completed": metrics.overtake_completed,
        "critical": is_critical(metrics.min_headway_time, metrics.min_lateral_distance, metrics.collision),
        "metrics": metrics.to_dict(),
    }


def pareto_sweep(base: ScenarioConfig, grid: list[dict], jobs: int = SWEEP_JOBS, log_level=logging.INFO) -> list[dict]:
    """Closed-loop run per grid point, tabulating the two safety metrics.

    Results come back in grid order. Failed points carry ``failed=True`` and the
    error text; the sweep continues past them.
    """
    logger = setup_logger(level=log_level)
    if not grid:
        raise ValueError("sweep grid is empty")
    base.validate()
    logger.info(f"Sweep started: {len(grid)} point(s), {jobs} worker(s)")
    start_time = time.time()

    results: list[dict | None] = [None] * len(grid)
    if jobs <= 1:
        for i, overrides in enumerate(grid):
            results[i] = run_point(base, overrides, log_level)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            futures = {executor.submit(run_point, base, overrides): i for i, overrides in enumerate(grid)}
            for future in as_completed(futures):
                i = futures[future]
                try:
                    results[i] = future.result()
                except Exception as e:
                    logger.warning(f"Unhandled error in sweep worker for {grid[i]}: {e}")
                    results[i] = {"point": dict(grid[i]), "failed": True, "error": str(e)}

    logger = setup_logger(level=log_level)
    for record in results:
        if record["failed"]:
            logger.warning(f"Sweep point {record['point']} failed: {record['error']}")
        else:
            logger.debug(
                f"Sweep point {record['point']}: headway={record['min_headway_time']}, "
                f"lateral={record['min_lateral_distance']}, critical={record['critical']}"
            )

    failed = sum(1 for r in results if r["failed"])
    critical = sum(1 for r in results if not r["failed"] and r["critical"])
    logger.info("Sweep Summary")
    logger.info(f"Points run: {len(results)}")
    logger.info(f"Critical: {critical}")
    logger.info(f"Failed: {failed}")
    logger.info(f"Sweep duration: {time.time() - start_time:.2f} seconds")
    return results
