"""Scenario files, built-in scenarios, and deterministic workload generation.

A scenario is a TOML document. Every key is optional except `name`; omitted
sections resolve to the calibrated defaults below, so a minimal file is just
`name = "mine"`. Unknown keys anywhere are errors naming the full key path.

Top-level keys:

  name            string, required
  seed            integer >= 0 (default 42)
  horizon_s       positive float, optional: stop processing events after this
  policy          one of all_batch | batch_with_reservations |
                  interactive_with_limits | all_immediate
  [cluster]       nodes, cores, threads_per_core, oversub_max
  [[apps]]        name, f_central, f_central_nocache, t_local_load_s,
                  cached (bool, default true = staged on every node), or
                  cached_nodes (list of node ids holding a local copy)
  [fs]            mu_requests_per_s
  [limits]        per_user_cores (default: every slot in the cluster)
  [scheduler]     period_s, depth, t_sched_op_s
  [launch]        mode = two_tier | ssh_tree | per_process
  [launch.timing] fanout, t_hop_s, t_launcher_start_s, t_fork_s,
                  ssh_fanout, t_ssh_hop_s, dispatch_rate_per_s
  [sweep]         nnode_list, nproc_list, app: grid of one-gang launch runs
  [[jobs]]        explicit jobs: id, user, app, interactive, submit_s,
                  shape = {kind="sync_parallel", n_nodes, procs_per_node}
                       or {kind="job_array", n_tasks, slots_per_task},
                  duration_s or durations_s, priority, reservation
  [jobs_generate] drawn workload: n_jobs or window_s, arrival_rate_per_s,
                  interactive_fraction, n_users, app, tasks_min, tasks_max,
                  slots_per_task, duration_min_s, duration_max_s
  [[reservations]] id, node_count, start_s, duration_s

`sweep`, `jobs` and `jobs_generate` are mutually exclusive.

Generated workloads draw from the SplitMix64 stream seeded with `seed`, in a
fixed per-job order (arrival gap, user, interactive flag, task count,
duration), so changing the seed changes job attributes and nothing else.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Union

import tomli

from .launchmodel import LaunchMode, TimingModel
from .rng import SplitMix64
from .sched import JobArray, JobShape, Policy, SyncParallel

DEFAULT_SEED = 42


class ScenarioError(Exception):
    """Scenario file problem: missing file, bad key, bad value."""


@dataclass(frozen=True)
class ClusterSection:
    nodes: int = 648
    cores: int = 64
    threads_per_core: int = 4
    oversub_max: int = 2

    @property
    def slots_per_node(self) -> int:
        return self.cores * self.threads_per_core * self.oversub_max

    @property
    def total_slots(self) -> int:
        return self.nodes * self.slots_per_node


@dataclass(frozen=True)
class AppSection:
    name: str
    f_central: int
    f_central_nocache: int
    t_local_load_s: float
    cached: bool = True
    cached_nodes: Optional[tuple[int, ...]] = None


@dataclass(frozen=True)
class FSSection:
    mu_requests_per_s: float = 20000.0


@dataclass(frozen=True)
class SchedulerSection:
    period_s: float = 0.1
    depth: int = 1000
    t_sched_op_s: float = 0.001


@dataclass(frozen=True)
class SweepSection:
    nnode_list: tuple[int, ...]
    nproc_list: tuple[int, ...]
    app: str = "octave"


@dataclass(frozen=True)
class GenerateSection:
    arrival_rate_per_s: float
    n_jobs: Optional[int] = None
    window_s: Optional[float] = None
    interactive_fraction: float = 0.5
    n_users: int = 10
    app: str = "octave"
    tasks_min: int = 1
    tasks_max: int = 64
    slots_per_task: int = 1
    duration_min_s: float = 10.0
    duration_max_s: float = 600.0


@dataclass(frozen=True)
class JobEntry:
    id: int
    user: str
    app: str
    shape: JobShape
    submit_s: float = 0.0
    interactive: bool = False
    duration_s: Optional[float] = None
    durations_s: Optional[tuple[float, ...]] = None
    priority: Optional[int] = None
    reservation: Optional[str] = None


@dataclass(frozen=True)
class ReservationEntry:
    id: str
    node_count: int
    start_s: float
    duration_s: float


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int = DEFAULT_SEED
    horizon_s: Optional[float] = None
    policy: Policy = Policy.INTERACTIVE_WITH_LIMITS
    cluster: ClusterSection = ClusterSection()
    apps: tuple[AppSection, ...] = ()
    fs: FSSection = FSSection()
    per_user_cores: Optional[int] = None
    scheduler: SchedulerSection = SchedulerSection()
    launch_mode: LaunchMode = LaunchMode.TWO_TIER
    timing: TimingModel = TimingModel()
    sweep: Optional[SweepSection] = None
    jobs: tuple[JobEntry, ...] = ()
    generate: Optional[GenerateSection] = None
    reservations: tuple[ReservationEntry, ...] = ()

    def app_named(self, name: str) -> AppSection:
        for app in self.apps:
            if app.name == name:
                return app
        raise ScenarioError(f"unknown app {name!r}")


DEFAULT_APPS = (
    AppSection("octave", f_central=3, f_central_nocache=1000, t_local_load_s=0.1),
    AppSection("tensorflow", f_central=2, f_central_nocache=1000, t_local_load_s=0.1),
)

BUILTIN_SCENARIOS = {
    "fig4-tensorflow": "launch-time scaling, 64 TensorFlow processes per node, 1-512 nodes",
    "fig5-octave": "launch-time scaling, 64 Octave processes per node, 1-512 nodes",
    "fig6-grid": "full launch grid, 1-512 nodes x 1-512 processes per node",
    "nocache-baseline": "per-process dispatch of an uncached app on 648 nodes x 64 procs",
    "policy-compare": "mixed interactive/batch drawn workload for policy comparison",
}


# ---- strict-resolution helpers ---------------------------------------------


def _fail(path: str, msg: str):
    raise ScenarioError(f"{path}: {msg}")


def _check_keys(d: dict, allowed: set[str], path: str) -> None:
    for key in d:
        if key not in allowed:
            _fail(f"{path}.{key}" if path else key, "unknown key")


def _typed(d: dict, key: str, kind, path: str, default=None, required=False):
    if key not in d:
        if required:
            _fail(f"{path}.{key}" if path else key, "missing required key")
        return default
    val = d[key]
    where = f"{path}.{key}" if path else key
    if kind is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            _fail(where, f"expected a number, got {type(val).__name__}")
        return float(val)
    if kind is int:
        if isinstance(val, bool) or not isinstance(val, int):
            _fail(where, f"expected an integer, got {type(val).__name__}")
        return val
    if not isinstance(val, kind):
        _fail(where, f"expected {kind.__name__}, got {type(val).__name__}")
    return val


def _positive(value, where: str, strict: bool = True):
    if value is not None and (value <= 0 if strict else value < 0):
        _fail(where, f"must be {'positive' if strict else 'non-negative'}")
    return value


def _int_list(d: dict, key: str, path: str, default=None):
    if key not in d:
        return default
    val = d[key]
    where = f"{path}.{key}"
    if not isinstance(val, list) or not val:
        _fail(where, "expected a non-empty list of integers")
    for x in val:
        if isinstance(x, bool) or not isinstance(x, int) or x < 1:
            _fail(where, "expected integers >= 1")
    return tuple(val)


# ---- section resolvers ------------------------------------------------------


def _resolve_cluster(d: dict) -> ClusterSection:
    _check_keys(d, {"nodes", "cores", "threads_per_core", "oversub_max"}, "cluster")
    out = ClusterSection(
        nodes=_positive(_typed(d, "nodes", int, "cluster", 648), "cluster.nodes"),
        cores=_positive(_typed(d, "cores", int, "cluster", 64), "cluster.cores"),
        threads_per_core=_positive(
            _typed(d, "threads_per_core", int, "cluster", 4), "cluster.threads_per_core"
        ),
        oversub_max=_positive(
            _typed(d, "oversub_max", int, "cluster", 2), "cluster.oversub_max"
        ),
    )
    return out


def _resolve_app(d: dict, idx: int) -> AppSection:
    path = f"apps[{idx}]"
    _check_keys(
        d,
        {"name", "f_central", "f_central_nocache", "t_local_load_s", "cached", "cached_nodes"},
        path,
    )
    name = _typed(d, "name", str, path, required=True)
    f_central = _typed(d, "f_central", int, path, 3)
    f_nocache = _typed(d, "f_central_nocache", int, path, 1000)
    if f_central < 0:
        _fail(f"{path}.f_central", "must be non-negative")
    if f_nocache < f_central:
        _fail(f"{path}.f_central_nocache", "must be >= f_central")
    load = _typed(d, "t_local_load_s", float, path, 0.1)
    _positive(load, f"{path}.t_local_load_s", strict=False)
    cached = _typed(d, "cached", bool, path, True)
    cached_nodes = _int_list(d, "cached_nodes", path)
    if cached_nodes is not None and cached:
        _fail(f"{path}.cached_nodes", "set cached = false when listing cached_nodes")
    return AppSection(name, f_central, f_nocache, load, cached, cached_nodes)


def _resolve_shape(d: Any, path: str) -> JobShape:
    if not isinstance(d, dict):
        _fail(path, "expected a table like {kind = \"sync_parallel\", ...}")
    kind = _typed(d, "kind", str, path, required=True)
    try:
        if kind == "sync_parallel":
            _check_keys(d, {"kind", "n_nodes", "procs_per_node"}, path)
            return SyncParallel(
                n_nodes=_typed(d, "n_nodes", int, path, required=True),
                procs_per_node=_typed(d, "procs_per_node", int, path, required=True),
            )
        if kind == "job_array":
            _check_keys(d, {"kind", "n_tasks", "slots_per_task"}, path)
            return JobArray(
                n_tasks=_typed(d, "n_tasks", int, path, required=True),
                slots_per_task=_typed(d, "slots_per_task", int, path, 1),
            )
    except ValueError as exc:
        _fail(path, str(exc))
    _fail(f"{path}.kind", "must be \"sync_parallel\" or \"job_array\"")


def _resolve_job(d: dict, idx: int) -> JobEntry:
    path = f"jobs[{idx}]"
    _check_keys(
        d,
        {
            "id", "user", "app", "interactive", "submit_s", "shape",
            "duration_s", "durations_s", "priority", "reservation",
        },
        path,
    )
    shape = _resolve_shape(d.get("shape"), f"{path}.shape")
    duration_s = _typed(d, "duration_s", float, path)
    durations_raw = d.get("durations_s")
    durations_s = None
    if durations_raw is not None:
        if not isinstance(durations_raw, list) or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in durations_raw
        ):
            _fail(f"{path}.durations_s", "expected a list of numbers")
        durations_s = tuple(float(x) for x in durations_raw)
    if (duration_s is None) == (durations_s is None):
        _fail(path, "set exactly one of duration_s / durations_s")
    if duration_s is not None:
        _positive(duration_s, f"{path}.duration_s", strict=False)
    if durations_s is not None:
        if len(durations_s) != shape.n_tasks:
            _fail(f"{path}.durations_s", f"need {shape.n_tasks} entries, got {len(durations_s)}")
        if any(x < 0 for x in durations_s):
            _fail(f"{path}.durations_s", "durations must be >= 0")
    submit_s = _typed(d, "submit_s", float, path, 0.0)
    _positive(submit_s, f"{path}.submit_s", strict=False)
    return JobEntry(
        id=_typed(d, "id", int, path, required=True),
        user=_typed(d, "user", str, path, "user01"),
        app=_typed(d, "app", str, path, "octave"),
        shape=shape,
        submit_s=submit_s,
        interactive=_typed(d, "interactive", bool, path, False),
        duration_s=duration_s,
        durations_s=durations_s,
        priority=_typed(d, "priority", int, path),
        reservation=_typed(d, "reservation", str, path),
    )


def _resolve_generate(d: dict) -> GenerateSection:
    path = "jobs_generate"
    _check_keys(
        d,
        {
            "arrival_rate_per_s", "n_jobs", "window_s", "interactive_fraction",
            "n_users", "app", "tasks_min", "tasks_max", "slots_per_task",
            "duration_min_s", "duration_max_s",
        },
        path,
    )
    gen = GenerateSection(
        arrival_rate_per_s=_positive(
            _typed(d, "arrival_rate_per_s", float, path, required=True),
            f"{path}.arrival_rate_per_s",
        ),
        n_jobs=_typed(d, "n_jobs", int, path),
        window_s=_typed(d, "window_s", float, path),
        interactive_fraction=_typed(d, "interactive_fraction", float, path, 0.5),
        n_users=_positive(_typed(d, "n_users", int, path, 10), f"{path}.n_users"),
        app=_typed(d, "app", str, path, "octave"),
        tasks_min=_positive(_typed(d, "tasks_min", int, path, 1), f"{path}.tasks_min"),
        tasks_max=_positive(_typed(d, "tasks_max", int, path, 64), f"{path}.tasks_max"),
        slots_per_task=_positive(
            _typed(d, "slots_per_task", int, path, 1), f"{path}.slots_per_task"
        ),
        duration_min_s=_positive(
            _typed(d, "duration_min_s", float, path, 10.0), f"{path}.duration_min_s"
        ),
        duration_max_s=_positive(
            _typed(d, "duration_max_s", float, path, 600.0), f"{path}.duration_max_s"
        ),
    )
    if (gen.n_jobs is None) == (gen.window_s is None):
        _fail(path, "set exactly one of n_jobs / window_s")
    if gen.n_jobs is not None and gen.n_jobs < 1:
        _fail(f"{path}.n_jobs", "must be positive")
    if gen.window_s is not None and gen.window_s <= 0:
        _fail(f"{path}.window_s", "must be positive")
    if not 0.0 <= gen.interactive_fraction <= 1.0:
        _fail(f"{path}.interactive_fraction", "must be within [0, 1]")
    if gen.tasks_max < gen.tasks_min:
        _fail(f"{path}.tasks_max", "must be >= tasks_min")
    if gen.duration_max_s < gen.duration_min_s:
        _fail(f"{path}.duration_max_s", "must be >= duration_min_s")
    return gen


_TOP_KEYS = {
    "name", "seed", "horizon_s", "policy", "cluster", "apps", "fs", "limits",
    "scheduler", "launch", "sweep", "jobs", "jobs_generate", "reservations",
}


def resolve_scenario(doc: dict) -> Scenario:
    """Validate a parsed TOML document and fill in every default."""
    if not isinstance(doc, dict):
        raise ScenarioError("scenario root must be a table")
    _check_keys(doc, _TOP_KEYS, "")
    name = _typed(doc, "name", str, "", required=True)
    seed = _typed(doc, "seed", int, "", DEFAULT_SEED)
    if seed < 0:
        _fail("seed", "must be >= 0")
    horizon_s = _typed(doc, "horizon_s", float, "")
    _positive(horizon_s, "horizon_s")

    policy_raw = _typed(doc, "policy", str, "", Policy.INTERACTIVE_WITH_LIMITS.value)
    try:
        policy = Policy(policy_raw)
    except ValueError:
        _fail("policy", f"unknown value {policy_raw!r}; choose from "
              + ", ".join(p.value for p in Policy))

    cluster = _resolve_cluster(_typed(doc, "cluster", dict, "", {}))

    apps_raw = doc.get("apps", None)
    if apps_raw is None:
        apps = DEFAULT_APPS
    else:
        if not isinstance(apps_raw, list) or not apps_raw:
            _fail("apps", "expected a non-empty array of app tables")
        apps = tuple(_resolve_app(a, i) for i, a in enumerate(apps_raw))
        if len({a.name for a in apps}) != len(apps):
            _fail("apps", "app names must be unique")

    fs_d = _typed(doc, "fs", dict, "", {})
    _check_keys(fs_d, {"mu_requests_per_s"}, "fs")
    fs = FSSection(
        mu_requests_per_s=_positive(
            _typed(fs_d, "mu_requests_per_s", float, "fs", 20000.0),
            "fs.mu_requests_per_s",
        )
    )

    limits_d = _typed(doc, "limits", dict, "", {})
    _check_keys(limits_d, {"per_user_cores"}, "limits")
    per_user = _typed(limits_d, "per_user_cores", int, "limits", None)
    if per_user is None:
        per_user = cluster.total_slots
    _positive(per_user, "limits.per_user_cores")

    sched_d = _typed(doc, "scheduler", dict, "", {})
    _check_keys(sched_d, {"period_s", "depth", "t_sched_op_s"}, "scheduler")
    scheduler = SchedulerSection(
        period_s=_positive(
            _typed(sched_d, "period_s", float, "scheduler", 0.1), "scheduler.period_s"
        ),
        depth=_positive(_typed(sched_d, "depth", int, "scheduler", 1000), "scheduler.depth"),
        t_sched_op_s=_positive(
            _typed(sched_d, "t_sched_op_s", float, "scheduler", 0.001),
            "scheduler.t_sched_op_s",
        ),
    )

    launch_d = _typed(doc, "launch", dict, "", {})
    _check_keys(launch_d, {"mode", "timing"}, "launch")
    mode_raw = _typed(launch_d, "mode", str, "launch", LaunchMode.TWO_TIER.value)
    try:
        launch_mode = LaunchMode(mode_raw)
    except ValueError:
        _fail("launch.mode", f"unknown value {mode_raw!r}; choose from "
              + ", ".join(m.value for m in LaunchMode))
    timing_d = _typed(launch_d, "timing", dict, "launch", {})
    _check_keys(
        timing_d,
        {
            "fanout", "t_hop_s", "t_launcher_start_s", "t_fork_s",
            "ssh_fanout", "t_ssh_hop_s", "dispatch_rate_per_s",
        },
        "launch.timing",
    )
    try:
        timing = TimingModel(
            fanout=_typed(timing_d, "fanout", int, "launch.timing", 32),
            t_hop_s=_typed(timing_d, "t_hop_s", float, "launch.timing", 0.010),
            t_launcher_start_s=_typed(
                timing_d, "t_launcher_start_s", float, "launch.timing", 0.050
            ),
            t_fork_s=_typed(timing_d, "t_fork_s", float, "launch.timing", 0.0015),
            ssh_fanout=_typed(timing_d, "ssh_fanout", int, "launch.timing", 16),
            t_ssh_hop_s=_typed(timing_d, "t_ssh_hop_s", float, "launch.timing", 0.200),
            dispatch_rate_per_s=_typed(
                timing_d, "dispatch_rate_per_s", float, "launch.timing", 200.0
            ),
        )
    except ValueError as exc:
        _fail("launch.timing", str(exc))

    sweep = None
    sweep_d = _typed(doc, "sweep", dict, "")
    if sweep_d is not None:
        _check_keys(sweep_d, {"nnode_list", "nproc_list", "app"}, "sweep")
        sweep = SweepSection(
            nnode_list=_int_list(sweep_d, "nnode_list", "sweep", None)
            or _fail("sweep.nnode_list", "missing required key"),
            nproc_list=_int_list(sweep_d, "nproc_list", "sweep", None)
            or _fail("sweep.nproc_list", "missing required key"),
            app=_typed(sweep_d, "app", str, "sweep", "octave"),
        )

    jobs_raw = doc.get("jobs", None)
    jobs: tuple[JobEntry, ...] = ()
    if jobs_raw is not None:
        if not isinstance(jobs_raw, list):
            _fail("jobs", "expected an array of job tables")
        jobs = tuple(_resolve_job(j, i) for i, j in enumerate(jobs_raw))
        ids = [j.id for j in jobs]
        if len(set(ids)) != len(ids):
            _fail("jobs", "job ids must be unique")

    generate = None
    gen_d = _typed(doc, "jobs_generate", dict, "")
    if gen_d is not None:
        generate = _resolve_generate(gen_d)

    modes_set = [m for m, present in
                 (("sweep", sweep is not None), ("jobs", bool(jobs)),
                  ("jobs_generate", generate is not None)) if present]
    if len(modes_set) > 1:
        _fail(modes_set[0], f"{' and '.join(modes_set)} are mutually exclusive")

    res_raw = doc.get("reservations", None)
    reservations: tuple[ReservationEntry, ...] = ()
    if res_raw is not None:
        if not isinstance(res_raw, list):
            _fail("reservations", "expected an array of reservation tables")
        out = []
        for i, r in enumerate(res_raw):
            path = f"reservations[{i}]"
            _check_keys(r, {"id", "node_count", "start_s", "duration_s"}, path)
            out.append(
                ReservationEntry(
                    id=_typed(r, "id", str, path, required=True),
                    node_count=_positive(
                        _typed(r, "node_count", int, path, required=True),
                        f"{path}.node_count",
                    ),
                    start_s=_positive(
                        _typed(r, "start_s", float, path, required=True),
                        f"{path}.start_s", strict=False,
                    ),
                    duration_s=_positive(
                        _typed(r, "duration_s", float, path, required=True),
                        f"{path}.duration_s",
                    ),
                )
            )
        reservations = tuple(out)
        ids = [r.id for r in reservations]
        if len(set(ids)) != len(ids):
            _fail("reservations", "reservation ids must be unique")

    scenario = Scenario(
        name=name,
        seed=seed,
        horizon_s=horizon_s,
        policy=policy,
        cluster=cluster,
        apps=apps,
        fs=fs,
        per_user_cores=per_user,
        scheduler=scheduler,
        launch_mode=launch_mode,
        timing=timing,
        sweep=sweep,
        jobs=jobs,
        generate=generate,
        reservations=reservations,
    )
    _cross_validate(scenario)
    return scenario


def _cross_validate(sc: Scenario) -> None:
    app_names = {a.name for a in sc.apps}
    if sc.sweep and sc.sweep.app not in app_names:
        _fail("sweep.app", f"unknown app {sc.sweep.app!r}")
    if sc.generate and sc.generate.app not in app_names:
        _fail("jobs_generate.app", f"unknown app {sc.generate.app!r}")
    res_ids = {r.id for r in sc.reservations}
    for i, job in enumerate(sc.jobs):
        if job.app not in app_names:
            _fail(f"jobs[{i}].app", f"unknown app {job.app!r}")
        if job.reservation is not None and job.reservation not in res_ids:
            _fail(f"jobs[{i}].reservation", f"unknown reservation {job.reservation!r}")


# ---- load / serialize --------------------------------------------------------


def loads_scenario(text: str) -> Scenario:
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ScenarioError(f"invalid TOML: {exc}") from exc
    return resolve_scenario(doc)


def load_scenario(path: Union[str, Path]) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file {str(p)!r}: {exc}") from exc
    try:
        return loads_scenario(text)
    except ScenarioError as exc:
        raise ScenarioError(f"{p}: {exc}") from None


def builtin(name: str) -> Scenario:
    """Load one of the packaged scenarios by name."""
    if name not in BUILTIN_SCENARIOS:
        known = ", ".join(sorted(BUILTIN_SCENARIOS))
        raise ScenarioError(f"unknown built-in scenario {name!r}; valid names: {known}")
    text = (resources.files("ilaunch") / "scenarios" / f"{name}.toml").read_text("utf-8")
    return loads_scenario(text)


def _toml_scalar(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v, ensure_ascii=False)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_scalar(x) for x in v) + "]"
    if isinstance(v, dict):
        inner = ", ".join(f"{k} = {_toml_scalar(x)}" for k, x in v.items())
        return "{ " + inner + " }"
    raise TypeError(f"cannot serialize {type(v).__name__}")


def _toml_dumps(doc: dict) -> str:
    """Emit the restricted TOML dialect used by scenario files."""
    lines: list[str] = []
    tables: list[tuple[str, Any]] = []
    for key, val in doc.items():
        if isinstance(val, dict):
            tables.append((key, val))
        elif isinstance(val, list) and val and isinstance(val[0], dict):
            tables.append((key, val))
        else:
            lines.append(f"{key} = {_toml_scalar(val)}")

    def emit_table(name: str, d: dict):
        nested = [(k, v) for k, v in d.items() if isinstance(v, dict)]
        flat = {k: v for k, v in d.items() if not isinstance(v, dict)}
        if flat or not nested:
            lines.append("")
            lines.append(f"[{name}]")
            for k, v in flat.items():
                lines.append(f"{k} = {_toml_scalar(v)}")
        for k, v in nested:
            emit_table(f"{name}.{k}", v)

    for key, val in tables:
        if isinstance(val, dict):
            emit_table(key, val)
        else:
            for entry in val:
                lines.append("")
                lines.append(f"[[{key}]]")
                for k, v in entry.items():
                    lines.append(f"{k} = {_toml_scalar(v)}")
    return "\n".join(lines) + "\n"


def _shape_doc(shape: JobShape) -> dict:
    if isinstance(shape, SyncParallel):
        return {"kind": "sync_parallel", "n_nodes": shape.n_nodes,
                "procs_per_node": shape.procs_per_node}
    return {"kind": "job_array", "n_tasks": shape.n_tasks,
            "slots_per_task": shape.slots_per_task}


def scenario_to_doc(sc: Scenario) -> dict:
    """Plain-dict form of a resolved scenario, ready for TOML emission."""
    doc: dict[str, Any] = {"name": sc.name, "seed": sc.seed}
    if sc.horizon_s is not None:
        doc["horizon_s"] = sc.horizon_s
    doc["policy"] = sc.policy.value
    doc["cluster"] = {
        "nodes": sc.cluster.nodes,
        "cores": sc.cluster.cores,
        "threads_per_core": sc.cluster.threads_per_core,
        "oversub_max": sc.cluster.oversub_max,
    }
    doc["fs"] = {"mu_requests_per_s": sc.fs.mu_requests_per_s}
    doc["limits"] = {"per_user_cores": sc.per_user_cores}
    doc["scheduler"] = {
        "period_s": sc.scheduler.period_s,
        "depth": sc.scheduler.depth,
        "t_sched_op_s": sc.scheduler.t_sched_op_s,
    }
    doc["launch"] = {
        "mode": sc.launch_mode.value,
        "timing": {
            "fanout": sc.timing.fanout,
            "t_hop_s": sc.timing.t_hop_s,
            "t_launcher_start_s": sc.timing.t_launcher_start_s,
            "t_fork_s": sc.timing.t_fork_s,
            "ssh_fanout": sc.timing.ssh_fanout,
            "t_ssh_hop_s": sc.timing.t_ssh_hop_s,
            "dispatch_rate_per_s": sc.timing.dispatch_rate_per_s,
        },
    }
    apps = []
    for a in sc.apps:
        entry: dict[str, Any] = {
            "name": a.name,
            "f_central": a.f_central,
            "f_central_nocache": a.f_central_nocache,
            "t_local_load_s": a.t_local_load_s,
            "cached": a.cached,
        }
        if a.cached_nodes is not None:
            entry["cached_nodes"] = list(a.cached_nodes)
        apps.append(entry)
    doc["apps"] = apps
    if sc.sweep is not None:
        doc["sweep"] = {
            "nnode_list": list(sc.sweep.nnode_list),
            "nproc_list": list(sc.sweep.nproc_list),
            "app": sc.sweep.app,
        }
    if sc.generate is not None:
        g = sc.generate
        gen: dict[str, Any] = {"arrival_rate_per_s": g.arrival_rate_per_s}
        if g.n_jobs is not None:
            gen["n_jobs"] = g.n_jobs
        if g.window_s is not None:
            gen["window_s"] = g.window_s
        gen.update(
            interactive_fraction=g.interactive_fraction,
            n_users=g.n_users,
            app=g.app,
            tasks_min=g.tasks_min,
            tasks_max=g.tasks_max,
            slots_per_task=g.slots_per_task,
            duration_min_s=g.duration_min_s,
            duration_max_s=g.duration_max_s,
        )
        doc["jobs_generate"] = gen
    if sc.jobs:
        entries = []
        for j in sc.jobs:
            e: dict[str, Any] = {
                "id": j.id,
                "user": j.user,
                "app": j.app,
                "interactive": j.interactive,
                "submit_s": j.submit_s,
                "shape": _shape_doc(j.shape),
            }
            if j.duration_s is not None:
                e["duration_s"] = j.duration_s
            if j.durations_s is not None:
                e["durations_s"] = list(j.durations_s)
            if j.priority is not None:
                e["priority"] = j.priority
            if j.reservation is not None:
                e["reservation"] = j.reservation
            entries.append(e)
        doc["jobs"] = entries
    if sc.reservations:
        doc["reservations"] = [
            {
                "id": r.id,
                "node_count": r.node_count,
                "start_s": r.start_s,
                "duration_s": r.duration_s,
            }
            for r in sc.reservations
        ]
    return doc


def serialize(sc: Scenario) -> str:
    return _toml_dumps(scenario_to_doc(sc))


def with_seed(sc: Scenario, seed: int) -> Scenario:
    return replace(sc, seed=seed)


# ---- workload generation -----------------------------------------------------


def generate_jobs(gen: GenerateSection, seed: int) -> tuple[JobEntry, ...]:
    """Draw a job list. Per job, in order: arrival gap, user, interactive
    flag, task count, duration. The order is part of the format: it makes
    streams reproducible from the documented generator alone."""
    rng = SplitMix64(seed)
    jobs: list[JobEntry] = []
    t = 0.0
    i = 0
    while True:
        if gen.n_jobs is not None and i >= gen.n_jobs:
            break
        t += rng.exponential(gen.arrival_rate_per_s)
        if gen.window_s is not None and t > gen.window_s:
            break
        user = f"user{rng.randint(1, gen.n_users):02d}"
        interactive = rng.chance(gen.interactive_fraction)
        n_tasks = rng.randint(gen.tasks_min, gen.tasks_max)
        duration = gen.duration_min_s + rng.uniform() * (
            gen.duration_max_s - gen.duration_min_s
        )
        i += 1
        jobs.append(
            JobEntry(
                id=i,
                user=user,
                app=gen.app,
                shape=JobArray(n_tasks=n_tasks, slots_per_task=gen.slots_per_task),
                submit_s=t,
                interactive=interactive,
                duration_s=duration,
            )
        )
    return tuple(jobs)
