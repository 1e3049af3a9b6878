"""End-to-end linkage: ingest, preprocess, block, sample, estimate, emit."""

from __future__ import annotations

import hashlib
import json
import logging
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .blocking import Block, MarginTable, global_margins, partition
from .comparison import ComparisonData, ConfigurationError, DataFile, FieldSpec, build_comparison_data
from .config import PreprocessConfig, RunConfig
from .estimator import LossParams, MatchProbabilities, estimate_tpr_ppv, point_estimate, posterior_match_probs
from .evaluation import actual_tpr_ppv, frontier_sweep, write_frontier
from .io import MatchRow, RejectReport, ingest, read_pairs, truth_from_pairs, write_matches
from .model import PriorConfig, check_matching
from .preprocess import DEFAULT_ABBREVIATIONS, DEFAULT_PLACES, NameRules, preprocess_name, split_name, standardize_place
from .sampler import SamplerConfig, gelman_rubin, pooled_draws, run_chains

log = logging.getLogger(__name__)

_FULL_NAME = "_full_name"
MARGINS_A = "margins_a.csv"
MARGINS_B = "margins_b.csv"


class BlockError(RuntimeError):
    pass


def block_stream_key(key: str) -> tuple[int, int]:
    """Stable per-block random stream key; independent of scheduling and of other blocks."""
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little"), int.from_bytes(digest[4:8], "little")


# -- inputs --------------------------------------------------------------------


def apply_preprocess(data: DataFile, pp: PreprocessConfig) -> DataFile:
    rules = NameRules(abbreviations={**DEFAULT_ABBREVIATIONS, **pp.abbreviations})
    gazetteer = {**DEFAULT_PLACES, **{k.lower(): v for k, v in pp.gazetteer.items()}}
    cols = dict(data.columns)
    if pp.full_name:
        pairs = [split_name(v, rules) for v in cols.pop(_FULL_NAME)]
        cols[pp.first] = np.array([p[0] for p in pairs], dtype=object)
        cols[pp.last] = np.array([p[1] for p in pairs], dtype=object)
    for name in pp.names:
        cols[name] = np.array([preprocess_name(v, rules) for v in cols[name]], dtype=object)
    for name in pp.places:
        cols[name] = np.array([standardize_place(v, gazetteer) for v in cols[name]], dtype=object)
    return DataFile(data.record_ids, cols)


def read_inputs(cfg: RunConfig) -> tuple[DataFile, DataFile, RejectReport]:
    """Ingest and preprocess both files."""
    pp = cfg.preprocess
    derived = {pp.first, pp.last} if pp.full_name else set()
    mapping = {s.name: cfg.column_for(s.name) for s in cfg.fields if s.name not in derived}
    if pp.full_name:
        mapping[_FULL_NAME] = pp.full_name
    kinds = {s.name: s.kind for s in cfg.fields}
    report = RejectReport()
    out = []
    for path in (cfg.file_a, cfg.file_b):
        data, rej = ingest(path, mapping, kinds, cfg.id_column)
        report.extend(rej)
        out.append(apply_preprocess(data, pp))
    for data in out:
        data.check_schema(cfg.fields)
    return out[0], out[1], report


def compute_margins(a: DataFile, b: DataFile, specs: list[FieldSpec]) -> tuple[MarginTable, MarginTable]:
    """Per-record margins for the records of A (against all of B) and of B (against all of A)."""
    return global_margins(a, b, specs, per_record=True), global_margins(b, a, specs, per_record=True)


def load_margins(directory: Path) -> tuple[MarginTable, MarginTable]:
    return MarginTable.load(directory / MARGINS_A), MarginTable.load(directory / MARGINS_B)


# -- blocks --------------------------------------------------------------------


@dataclass
class BlockTask:
    key: str
    a: DataFile
    b: DataFile
    specs: list[FieldSpec]
    prior: PriorConfig
    sampler: SamplerConfig
    margins: dict[str, np.ndarray] | None = None


@dataclass
class BlockResult:
    """Draws in the block's model orientation (the smaller side plays A)."""

    key: str
    z: np.ndarray
    traces: list[np.ndarray]
    n_a: int
    n_b: int
    n_patterns: int
    sparse: bool
    seconds: float
    rhat: float | None


def run_block(task: BlockTask) -> BlockResult:
    try:
        start = time.perf_counter()
        cd: ComparisonData = build_comparison_data(task.a, task.b, task.specs)
        samples = run_chains(cd, task.prior, task.sampler, margins=task.margins,
                             stream_key=block_stream_key(task.key))
        rhat = gelman_rubin(samples) if len(samples) > 1 and samples[0].n_draws > 1 else None
        return BlockResult(
            task.key, pooled_draws(samples), [s.n_matched_trace for s in samples], cd.n_a, cd.n_b,
            cd.n_patterns, samples[0].sparse, time.perf_counter() - start, rhat,
        )
    except Exception as exc:
        raise BlockError(f"block {task.key!r} failed: {exc}") from exc


def _block_tasks(cfg: RunConfig, a: DataFile, b: DataFile, blocks: list[Block],
                 margins: tuple[MarginTable, MarginTable] | None) -> list[BlockTask]:
    tasks = []
    for blk in blocks:
        side_a, side_b = blk.model_sides
        da, db = (b, a) if blk.swapped else (a, b)
        sub_a, sub_b = da.subset(side_a), db.subset(side_b)
        marg = None
        if margins is not None:
            table = margins[1] if blk.swapped else margins[0]
            marg = table.for_records(sub_a.record_ids)
        tasks.append(BlockTask(blk.key, sub_a, sub_b, cfg.fields, cfg.prior, cfg.sampler, marg))
    return tasks


def execute_blocks(tasks: list[BlockTask], workers: int) -> list[BlockResult]:
    """Run blocks on a bounded pool; results come back in task order."""
    if workers == 1 or len(tasks) <= 1:
        return [run_block(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(run_block, tasks))


# -- merge ---------------------------------------------------------------------


@dataclass
class MergedPosterior:
    """Blocks joined into draws over the original files.

    ``z`` has shape (T, n_A) with 1-based indices into B.
    """

    z: np.ndarray
    n_b: int
    blocks: list[Block]
    results: list[BlockResult]
    _probs: list[MatchProbabilities] = field(default_factory=list, repr=False)

    def __post_init__(self):
        self._probs = [posterior_match_probs(r.z, r.n_b) for r in self.results]

    def estimate(self, lam: LossParams) -> np.ndarray:
        """Per-block point estimates, re-oriented and merged."""
        z_hat = np.zeros(self.z.shape[1], dtype=np.int64)
        for blk, probs in zip(self.blocks, self._probs):
            local = point_estimate(probs, lam)
            _place(z_hat[None, :], local[None, :], blk)
        check_matching(z_hat, self.n_b)
        return z_hat


def _place(target: np.ndarray, local: np.ndarray, blk: Block) -> None:
    """Write model-orientation labels ``local`` (T, n_model_a) into ``target`` (T, n_A)."""
    side_a, side_b = blk.model_sides
    t_idx, k_idx = np.nonzero(local > 0)
    partner = local[t_idx, k_idx] - 1
    if blk.swapped:
        target[t_idx, blk.a_index[partner]] = blk.b_index[k_idx] + 1
    else:
        target[t_idx, blk.a_index[k_idx]] = blk.b_index[partner] + 1


def merge_blocks(blocks: list[Block], results: list[BlockResult], n_a: int, n_b: int) -> MergedPosterior:
    n_draws = {r.z.shape[0] for r in results}
    if len(n_draws) > 1:
        raise BlockError("blocks returned different numbers of draws")
    T = n_draws.pop() if n_draws else 0
    z = np.zeros((T, n_a), dtype=np.int32)
    for blk, res in zip(blocks, results):
        _place(z, res.z, blk)
    for t in range(T):
        check_matching(z[t], n_b)
    return MergedPosterior(z, n_b, blocks, results)


# -- outputs -------------------------------------------------------------------


@dataclass
class MatchOutput:
    rows: list[MatchRow]
    summary: dict
    frontier: list[dict] | None
    manifest: dict
    z_hat: np.ndarray
    posterior: MergedPosterior
    rejects: RejectReport


def _versions() -> dict[str, str]:
    import matplotlib
    import numba
    import scipy
    return {"reclink": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__, "matplotlib": matplotlib.__version__}


def run_matching(cfg: RunConfig, write: bool = True) -> MatchOutput:
    """Full pipeline; with ``write`` the outputs land in ``cfg.output``."""
    t0 = time.perf_counter()
    a, b, rejects = read_inputs(cfg)
    parts = partition(a, b, cfg.blocking)
    active = parts.active()
    for blk in parts.blocks:
        if blk.skip:
            log.info("block %s skipped: %d records in A, %d in B", blk.key, len(blk.a_index), len(blk.b_index))
    margins = None
    if cfg.sampler.u_correction != "off":
        margins = load_margins(cfg.margins) if cfg.margins is not None else compute_margins(a, b, cfg.fields)
    tasks = _block_tasks(cfg, a, b, active, margins)
    results = execute_blocks(tasks, cfg.workers)
    for res in results:
        log.info("block %s: %dx%d, %d patterns, %s path, %.2fs", res.key, res.n_a, res.n_b, res.n_patterns,
                 "sparse" if res.sparse else "dense", res.seconds)
    if results:
        posterior = merge_blocks(active, results, len(a), len(b))
    else:
        n_keep = len(range(cfg.sampler.burn_in, cfg.sampler.iterations, cfg.sampler.thin)) * cfg.sampler.chains
        posterior = MergedPosterior(np.zeros((n_keep, len(a)), dtype=np.int32), len(b), [], [])

    z_hat = posterior.estimate(cfg.loss)
    prob = (posterior.z == z_hat[None, :]).mean(axis=0) if posterior.z.shape[0] else np.ones(len(a))
    key_of = {}
    for blk in parts.blocks:
        for i in blk.a_index:
            key_of[int(i)] = blk.key
    rows = [
        MatchRow(str(a.record_ids[i]), str(b.record_ids[z_hat[i] - 1]) if z_hat[i] > 0 else None,
                 float(prob[i]), key_of.get(i, ""))
        for i in range(len(a))
    ]

    est = estimate_tpr_ppv(z_hat, posterior.z) if posterior.z.shape[0] else None
    summary = {
        "n_a": len(a), "n_b": len(b), "n_matched": int(np.count_nonzero(z_hat)),
        "loss": list(cfg.loss.as_tuple()),
        "n_blocks": len(active), "n_blocks_skipped": len(parts.blocks) - len(active),
        "n_rejected_ingest": len(rejects), "n_rejected_blocking_a": len(parts.rejected_a),
        "n_rejected_blocking_b": len(parts.rejected_b),
        "n_draws": int(posterior.z.shape[0]),
        "est_tpr": None if est is None else _num(est.tpr),
        "est_ppv": None if est is None else _num(est.ppv),
        "n_tpr_skipped": None if est is None else est.n_tpr_skipped,
        "config_digest": cfg.digest(),
    }
    truth = None
    if cfg.truth is not None:
        pairs, uncertain = read_pairs(cfg.truth)
        truth = truth_from_pairs(pairs, uncertain, a.record_ids, b.record_ids)
        sc = actual_tpr_ppv(z_hat, truth)
        summary.update(tpr=_num(sc.tpr), ppv=_num(sc.ppv), true_positives=sc.true_positives,
                       n_true=sc.n_true)
    frontier = None
    if cfg.grid:
        frontier = frontier_sweep(posterior.z, len(b), cfg.grid, truth, estimator=posterior.estimate)

    manifest = {
        "config": cfg.resolved(),
        "config_digest": cfg.digest(),
        "seed": cfg.sampler.seed,
        "versions": _versions(),
        "blocks": [{"key": r.key, "n_a": r.n_a, "n_b": r.n_b, "swapped": blk.swapped,
                    "n_patterns": r.n_patterns, "sparse": r.sparse, "seconds": round(r.seconds, 4),
                    "rhat": r.rhat} for blk, r in zip(active, results)],
        "seconds": round(time.perf_counter() - t0, 4),
    }
    out = MatchOutput(rows, summary, frontier, manifest, z_hat, posterior, rejects)
    if write:
        write_outputs(out, cfg)
    return out


def _num(v: float) -> float | None:
    return None if v is None or np.isnan(v) else round(float(v), 6)


def write_outputs(out: MatchOutput, cfg: RunConfig) -> None:
    try:
        cfg.output.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigurationError(f"cannot create output directory {cfg.output}: {exc.strerror}") from None
    write_matches(out.rows, cfg.output / "matches.csv")
    with open(cfg.output / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(out.summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(cfg.output / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(out.manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    out.rejects.write(cfg.output / "rejects.csv")
    if out.frontier is not None:
        write_frontier(out.frontier, cfg.output / "frontier.csv")
    if cfg.figures:
        from .plotting import plot_frontier, plot_n_matched
        plot_n_matched(out.posterior, cfg.output / "n_matched.png")
        if out.frontier is not None:
            plot_frontier(out.frontier, cfg.output / "frontier.png")
