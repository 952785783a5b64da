"""Declarative experiments: JSON config in, per-trial CSV and summary JSON out.

A config looks like::

    {
      "name": "two-choice-complete",
      "graph": {"family": "complete", "n": 65536},
      "process": "edge-two-choice",
      "m": 65536,
      "trials": 50,
      "base_seed": 7,
      "outputs": {"csv": "out/c.csv", "json": "out/c.json"}
    }

``process`` is either a descriptor string (``"aligned(4,2)"``,
``"moves(2)"``, ``"edge-two-choice(right)"``) or an object with ``kind`` and
parameters. Trial ``i`` runs with seed ``base_seed + i`` (64-bit wrap).
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import graphs
from .allocation import Process, TieBreak, gap, load_histogram, max_load, run_process
from .analysis import aggregate_trials, build_witness_graph, predicted_bounds, to_jsonable
from .errors import BallastError, ConfigError, InvalidParameter
from .grouped import GroupLayout, detect_k_steps
from .rng import MASK64, child_seed

log = logging.getLogger(__name__)

FAMILIES = ("complete", "ring-distance", "random-regular", "bipartite", "clique-union", "file")
CSV_COLUMNS = ["trial", "seed", "max_load", "gap", "n", "m", "runtime_ms"]
GRAPH_STREAM = 0x6772617068  # keeps per-trial graph draws apart from ball draws


@dataclass
class GraphSpec:
    family: str
    params: dict
    n: int
    _fixed: graphs.BinGraph | None = field(default=None, repr=False)

    @property
    def per_trial(self) -> bool:
        """Random-regular graphs without a pinned seed are redrawn for every trial."""
        return self.family == "random-regular" and self.params.get("seed") is None

    def build(self, trial_seed: int) -> graphs.BinGraph:
        if self._fixed is not None:
            return self._fixed
        p = self.params
        if self.family == "complete":
            g = graphs.gen_complete(self.n)
        elif self.family == "ring-distance":
            g = graphs.gen_ring_distance(self.n, p["delta"])
        elif self.family == "bipartite":
            g = graphs.gen_complete_bipartite(self.n, p["delta"])
        elif self.family == "clique-union":
            g = graphs.gen_clique_union(p["num_cliques"], p["clique_size"])
        elif self.family == "file":
            g = graphs.load_graph(p["path"])
        else:
            seed = p.get("seed")
            rng = np.random.Generator(
                np.random.PCG64(np.random.SeedSequence([trial_seed if seed is None else seed, GRAPH_STREAM]))
            )
            g = graphs.gen_random_regular(self.n, p["delta"], rng, method=p.get("method", "reject"))
        if not self.per_trial:
            self._fixed = g
        return g

    def mean_degree(self) -> float:
        p = self.params
        if self.family == "complete":
            return self.n - 1
        if self.family in ("ring-distance", "random-regular"):
            return p["delta"]
        if self.family == "bipartite":
            return 2 * (self.n - p["delta"]) * p["delta"] / self.n
        if self.family == "clique-union":
            return p["clique_size"] - 1
        g = self.build(0)
        return 2 * g.num_edges / g.n


@dataclass
class ExperimentConfig:
    name: str
    graph: GraphSpec
    process: Process
    m: int
    trials: int
    base_seed: int
    record_history: bool = False
    steps: bool = False
    witness: dict | None = None
    outputs: dict = field(default_factory=dict)
    document: dict = field(default_factory=dict)

    def echo(self) -> dict:
        doc = dict(self.document)
        doc.update(
            name=self.name, m=self.m, trials=self.trials, base_seed=self.base_seed,
            record_history=self.record_history, process=self.process.describe(),
        )
        doc["graph"] = {"family": self.graph.family, "n": self.graph.n, **self.graph.params}
        return doc


# --- parsing -----------------------------------------------------------------


def _int(doc: dict, key: str, where: str, default=None, minimum=None) -> int:
    if key not in doc or doc[key] is None:
        if default is None:
            raise ConfigError(f"{where}{key}", "missing required field")
        return default
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where}{key}", f"expected an integer, got {v!r}")
    if minimum is not None and v < minimum:
        raise ConfigError(f"{where}{key}", f"must be >= {minimum}, got {v}")
    return v


def _parse_graph(doc) -> GraphSpec:
    if not isinstance(doc, dict):
        raise ConfigError("graph", "expected an object")
    family = doc.get("family")
    if family not in FAMILIES:
        raise ConfigError("graph.family", f"unknown family {family!r}; expected one of {FAMILIES}")
    w = "graph."
    if family == "file":
        path = doc.get("path")
        if not isinstance(path, str):
            raise ConfigError("graph.path", "missing graph file path")
        try:
            g = graphs.load_graph(path)
        except OSError as exc:
            raise ConfigError("graph.path", f"cannot read {path}: {exc}") from None
        except InvalidParameter as exc:
            raise ConfigError("graph.path", str(exc)) from None
        return GraphSpec(family, {"path": path}, g.n, g)

    if family == "clique-union" and "n" in doc and "epsilon" in doc:
        n = _int(doc, "n", w, minimum=2)
        eps = doc["epsilon"]
        if not isinstance(eps, (int, float)) or not 0 < eps <= 1:
            raise ConfigError("graph.epsilon", f"must be in (0, 1], got {eps!r}")
        k, s = graphs.clique_union_for_epsilon(n, float(eps))
        return GraphSpec(family, {"num_cliques": k, "clique_size": s, "epsilon_requested": eps}, k * s)
    if family == "clique-union":
        k = _int(doc, "num_cliques", w, minimum=1)
        s = _int(doc, "clique_size", w)
        if s < 2:
            raise ConfigError("graph.clique_size", f"must be >= 2 (a clique needs an edge), got {s}")
        return GraphSpec(family, {"num_cliques": k, "clique_size": s}, k * s)

    n = _int(doc, "n", w, minimum=1)
    if family == "complete":
        return GraphSpec(family, {}, n)
    delta = _int(doc, "delta", w)
    if family == "ring-distance":
        if delta % 2:
            raise ConfigError("graph.delta", f"ring-distance delta must be even, got {delta}")
        if not 2 <= delta <= n - 1:
            raise ConfigError("graph.delta", f"need 2 <= delta <= n-1, got delta={delta}, n={n}")
        return GraphSpec(family, {"delta": delta}, n)
    if family == "bipartite":
        if not 1 <= delta <= n - 1:
            raise ConfigError("graph.delta", f"need 1 <= delta <= n-1, got delta={delta}, n={n}")
        return GraphSpec(family, {"delta": delta}, n)
    # random-regular
    if (n * delta) % 2:
        raise ConfigError("graph.delta", f"parity: n*delta must be even, got n={n}, delta={delta}")
    if not 1 <= delta < n:
        raise ConfigError("graph.delta", f"need 1 <= delta < n, got delta={delta}, n={n}")
    params = {"delta": delta}
    if doc.get("seed") is not None:
        params["seed"] = _int(doc, "seed", w) & MASK64
    method = doc.get("method", "reject")
    if method not in ("reject", "repair"):
        raise ConfigError("graph.method", f"expected 'reject' or 'repair', got {method!r}")
    params["method"] = method
    return GraphSpec(family, params, n)


def _parse_process(doc) -> Process:
    try:
        if isinstance(doc, str):
            return Process.parse(doc)
        if not isinstance(doc, dict):
            raise ConfigError("process", "expected a descriptor string or an object")
        kind = doc.get("kind")
        if kind not in ("single", "edge-two-choice", "moves", "aligned", "unaligned", "global-min"):
            raise ConfigError("process.kind", f"unknown process kind {kind!r}")
        kw = {}
        for key in ("h", "g", "c", "t"):
            if key in doc:
                kw[key] = _int(doc, key, "process.")
        if "tiebreak" in doc:
            try:
                kw["tiebreak"] = TieBreak(doc["tiebreak"])
            except ValueError:
                raise ConfigError("process.tiebreak", f"expected random, left or right, got {doc['tiebreak']!r}") from None
        if "within" in doc:
            kw["within"] = doc["within"]
        return Process(kind, **kw)
    except InvalidParameter as exc:
        raise ConfigError("process", str(exc)) from None


def parse_config(document: dict | str) -> ExperimentConfig:
    """Validate a config document (dict or JSON text) before anything runs."""
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ConfigError("<document>", f"invalid JSON: {exc}") from None
    if not isinstance(document, dict):
        raise ConfigError("<document>", "top level must be an object")
    name = document.get("name", "experiment")
    if not isinstance(name, str) or not name:
        raise ConfigError("name", "expected a non-empty string")
    graph = _parse_graph(document.get("graph"))
    if "process" not in document:
        raise ConfigError("process", "missing required field")
    process = _parse_process(document["process"])
    n = graph.n

    if process.kind in ("aligned", "global-min") and n % process.g:
        raise ConfigError("process.g", f"g must divide n, got n={n}, g={process.g}")
    if process.kind == "unaligned" and 2 * process.g > n:
        raise ConfigError("process.g", f"2g must be <= n for disjoint windows, got n={n}, g={process.g}")
    if process.kind in ("edge-two-choice", "moves"):
        if graph.family == "complete" and n < 2:
            raise ConfigError("graph.n", "graph has no edges to sample")
        if graph.family == "file" and graph.build(0).num_edges == 0:
            raise ConfigError("graph.path", "graph has no edges to sample")

    m = _int(document, "m", "", default=n, minimum=0)
    trials = _int(document, "trials", "", default=1, minimum=1)
    base_seed = _int(document, "base_seed", "", default=0) & MASK64
    record = document.get("record_history", False)
    if not isinstance(record, bool):
        raise ConfigError("record_history", "expected true or false")
    if record and process.kind == "moves":
        raise ConfigError("record_history", "per-ball history is not defined for moves")
    witness = document.get("witness")
    if witness is not None:
        if not record:
            raise ConfigError("witness", "witness summaries need record_history: true")
        if not isinstance(witness, dict):
            raise ConfigError("witness", "expected an object")
        _int(witness, "leaf_threshold", "witness.", default=0, minimum=0)
        if "node_cap" in witness:
            _int(witness, "node_cap", "witness.", minimum=1)
    steps = document.get("steps", False)
    if steps and not process.grouped:
        raise ConfigError("steps", "step detection applies to grouped processes only")
    outputs = document.get("outputs", {}) or {}
    if not isinstance(outputs, dict):
        raise ConfigError("outputs", "expected an object")
    return ExperimentConfig(
        name, graph, process, m, trials, base_seed, record, bool(steps), witness, dict(outputs), document
    )


# --- running -----------------------------------------------------------------


@dataclass
class TrialResult:
    trial_index: int
    seed: int
    n: int
    m: int
    max_load: int | None = None
    gap: float | None = None
    load_histogram: dict[int, int] | None = None
    runtime_ms: float = 0.0
    steps: dict[int, int] | None = None
    witness: dict | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def row(self) -> list:
        if not self.ok:
            return [self.trial_index, self.seed, "", "", self.n, self.m, f"{self.runtime_ms:.3f}"]
        return [self.trial_index, self.seed, self.max_load, repr(float(self.gap)), self.n, self.m,
                f"{self.runtime_ms:.3f}"]


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    trials: list[TrialResult]
    summary: dict | None
    bounds: dict | None

    @property
    def failed(self) -> list[TrialResult]:
        return [t for t in self.trials if not t.ok]

    def to_json(self) -> dict:
        return to_jsonable({
            "config": self.config.echo(),
            "summary": self.summary,
            "bounds": self.bounds,
            "trials": [
                {
                    "trial": t.trial_index, "seed": t.seed, "max_load": t.max_load, "gap": t.gap,
                    "load_histogram": t.load_histogram, "runtime_ms": t.runtime_ms,
                    **({"steps": t.steps} if t.steps is not None else {}),
                    **({"witness": t.witness} if t.witness is not None else {}),
                    **({"error": t.error} if t.error is not None else {}),
                }
                for t in self.trials
            ],
        })


def run_trial(config: ExperimentConfig, index: int) -> TrialResult:
    seed = child_seed(config.base_seed, index)
    res = TrialResult(index, seed, config.graph.n, config.m)
    start = time.perf_counter()
    try:
        graph = config.graph.build(seed)
        state = run_process(graph, config.m, config.process, seed, record_history=config.record_history)
        res.max_load = max_load(state)
        res.gap = gap(state, graph.n)
        res.load_histogram = load_histogram(state)
        if config.steps:
            layout = GroupLayout.for_process(graph.n, config.process)
            res.steps = {k: v for k, v in detect_k_steps(state, layout).counts.items() if v}
        if config.witness is not None:
            root = int(np.argmax(state.loads))
            thr = min(config.witness.get("leaf_threshold", 0), int(state.loads[root]))
            wg = build_witness_graph(state.history, state, root, thr, config.witness.get("node_cap"))
            res.witness = wg.summary()
    except (BallastError, MemoryError) as exc:
        log.warning("trial %d (seed %d) failed: %s", index, seed, exc)
        res.error = f"{type(exc).__name__}: {exc}"
    res.runtime_ms = (time.perf_counter() - start) * 1000.0
    return res


def config_bounds(config: ExperimentConfig) -> dict | None:
    n = config.graph.n
    if n < 4:
        return None
    p = config.process
    delta = None
    if p.kind in ("edge-two-choice", "moves"):
        delta = max(1, round(config.graph.mean_degree()))
    d = p.c * p.g if p.grouped else None
    h = p.h if p.kind == "moves" else None
    return predicted_bounds(n, delta=delta, d=d, c_groups=p.c, h=h).to_dict()


def run_experiment(config: ExperimentConfig, workers: int = 1, write: bool = True) -> ExperimentResult:
    """Run every trial, aggregate in trial order, and write the outputs."""
    if workers > 1 and config.trials > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trials = list(pool.map(lambda i: run_trial(config, i), range(config.trials)))
    else:
        trials = [run_trial(config, i) for i in range(config.trials)]
    trials.sort(key=lambda t: t.trial_index)
    ok = [t for t in trials if t.ok]
    summary = aggregate_trials(ok) if ok else None
    if summary is not None:
        summary["failed_trials"] = len(trials) - len(ok)
    result = ExperimentResult(config, trials, summary, config_bounds(config))
    if write:
        write_outputs(result)
    return result


# --- output ------------------------------------------------------------------


def atomic_write(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trials_csv(trials: list[TrialResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for t in trials:
        w.writerow(t.row())
    return buf.getvalue()


def histogram_csv(hist: dict[int, int]) -> str:
    return "load,bin_count\n" + "".join(f"{k},{v}\n" for k, v in sorted(hist.items()))


def write_outputs(result: ExperimentResult) -> None:
    out = result.config.outputs
    if out.get("csv"):
        atomic_write(out["csv"], trials_csv(result.trials))
    if out.get("json"):
        atomic_write(out["json"], json.dumps(result.to_json(), indent=2, sort_keys=False) + "\n")
    if out.get("histogram_dir"):
        for t in result.trials:
            if t.ok:
                atomic_write(Path(out["histogram_dir"]) / f"{result.config.name}.trial{t.trial_index}.csv",
                             histogram_csv(t.load_histogram))


def read_trials_csv(path: str | os.PathLike) -> list[dict]:
    """Rows of a trials CSV with numeric fields parsed (empty for failed trials)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for key in ("trial", "seed", "n", "m"):
            r[key] = int(r[key])
        r["max_load"] = int(r["max_load"]) if r["max_load"] else None
        r["gap"] = float(r["gap"]) if r["gap"] else None
        r["runtime_ms"] = float(r["runtime_ms"])
    return rows


def apply_overrides(config: ExperimentConfig, trials=None, seed=None, out_dir=None) -> ExperimentConfig:
    if trials is not None:
        if trials < 1:
            raise ConfigError("trials", f"must be >= 1, got {trials}")
        config.trials = trials
    if seed is not None:
        config.base_seed = seed & MASK64
    if out_dir is not None:
        out = dict(config.outputs)
        out["csv"] = str(Path(out_dir) / f"{config.name}.csv")
        out["json"] = str(Path(out_dir) / f"{config.name}.json")
        if out.get("histogram_dir"):
            out["histogram_dir"] = str(Path(out_dir) / "histograms")
        config.outputs = out
    return config


def clique_note(spec: GraphSpec) -> str | None:
    if "epsilon_requested" in spec.params:
        eps = math.log(spec.params["clique_size"]) / math.log(spec.n)
        return f"clique-union resolved to {spec.params['num_cliques']} x {spec.params['clique_size']} (epsilon {eps:.4f})"
    return None
