"""deskgrid command line: controller, worker, train, collect-bc, eval, apigen.

Exit codes: 0 success, 1 validation error, 2 runtime error, 3 aborted.
All artifacts land under the --out directory; nothing else is mutated
outside the cluster protocol.
"""

from __future__ import annotations

import argparse
import json
import signal
import sys
import time
import urllib.request
from pathlib import Path

from . import apigen as apigen_mod
from . import bc as bc_mod
from . import policy as pol
from .cluster import ClusterClient, Controller, HttpApi, WorkerService
from .config import ConfigError, load_config
from .entropulse import Orchestrator, Schedule
from .envsim import load_tasks, task_suite
from .errors import (AbortedByOperator, BindFailure, ClusterUnavailable,
                     ControllerUnreachable, DeskgridError)
from .rollout import LocalCluster, eval_suite, steps_to_success
from .trajectory import write_log

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_ABORTED = 0, 1, 2, 3

DOMAIN_COLUMNS = (("os", "OS"), ("office", "Office"), ("daily", "Daily"),
                  ("professional", "Professional"), ("workflow", "Workflow"))


def _tasks_from_args(args) -> list:
    if getattr(args, "tasks", None):
        return load_tasks(args.tasks)
    return task_suite(args.suite)


def _addr(spec: str) -> tuple:
    host, _, port = spec.rpartition(":")
    return (host, int(port))


def cmd_controller(args) -> int:
    overrides = _cli_overrides(args)
    if args.bind:
        overrides["cluster.bind"] = args.bind
    if args.http:
        overrides["cluster.http"] = args.http
    config = load_config(args.config, overrides=overrides)
    bind = config.address("cluster.bind")
    http_bind = config.address("cluster.http")
    try:
        controller = Controller(
            host=bind[0], port=bind[1],
            heartbeat_interval=config["cluster.heartbeat_interval"],
            timeout_intervals=config["cluster.timeout_intervals"]).start()
        http = HttpApi(controller, host=http_bind[0], port=http_bind[1],
                       assets_dir=args.assets).start()
    except (OSError, BindFailure) as exc:
        print(f"bind failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"controller listening on {controller.address[0]}:{controller.address[1]} "
          f"(http {http.address[0]}:{http.address[1]})")
    stop = {"flag": False}

    def shutdown(signum, frame):
        stop["flag"] = True

    signal.signal(signal.SIGTERM, shutdown)
    signal.signal(signal.SIGINT, shutdown)
    while not stop["flag"]:
        time.sleep(0.2)
    http.stop()
    controller.stop()  # marks live sessions lost
    print("controller stopped")
    return EXIT_OK


def cmd_worker(args) -> int:
    config = load_config(args.config, overrides=_cli_overrides(args))
    tasks = _tasks_from_args(args)
    extra = None
    if args.registry:
        extra = apigen_mod.ApiRegistry.load(args.registry).tested_apis()
    try:
        worker = WorkerService(
            args.worker_id, _addr(args.controller), args.slots or
            config["cluster.slots"], tasks,
            heartbeat_interval=config["cluster.heartbeat_interval"],
            extra_apis=extra).start()
    except ControllerUnreachable as exc:
        print(f"controller unreachable: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"worker {args.worker_id} serving {worker.capacity} slots "
          f"on {worker.address[0]}:{worker.address[1]}")
    stop = {"flag": False}

    def shutdown(signum, frame):
        stop["flag"] = True

    signal.signal(signal.SIGTERM, shutdown)
    signal.signal(signal.SIGINT, shutdown)
    while not stop["flag"]:
        time.sleep(0.2)
    worker.stop()
    print("worker stopped")
    return EXIT_OK


def _metrics_publisher(http_addr):
    def publish(record):
        body = json.dumps({"records": [record]}).encode()
        req = urllib.request.Request(
            f"http://{http_addr[0]}:{http_addr[1]}/metrics", data=body,
            headers={"Content-Type": "application/json"}, method="POST")
        try:
            urllib.request.urlopen(req, timeout=2.0).read()
        except OSError:
            pass  # metrics publishing is best effort

    return publish


def cmd_train(args) -> int:
    config = load_config(args.config, overrides=_cli_overrides(args))
    schedule_path = Path(args.schedule)
    if not schedule_path.is_file():
        print(f"schedule file not found: {schedule_path}", file=sys.stderr)
        return EXIT_VALIDATION
    schedule = Schedule.load(str(schedule_path))
    if args.auto_pulse:
        schedule.auto_pulse = True
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config.write_manifest(str(out / "manifest.json"))

    tasks = _tasks_from_args(args)
    settings = config.train_settings()
    if args.local:
        cluster = LocalCluster()
        status_poll = None
        publish = None
    else:
        client = ClusterClient(_addr(args.controller), client_id="trainer")
        try:
            client.status()
        except ClusterUnavailable as exc:
            print(f"cluster unavailable: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        cluster = client

        def status_poll():
            try:
                return client.status().get("train", {})
            except ClusterUnavailable:
                return {}

        publish = _metrics_publisher(config.address("cluster.http")) \
            if args.publish_metrics else None

    params = pol.load_checkpoint(args.init) if args.init else None
    orch = Orchestrator(tasks, cluster, settings, params=params,
                        status_poll=status_poll, publish=publish,
                        run_dir=str(out))
    aborted = {"flag": False}

    def abort(signum, frame):
        aborted["flag"] = True
        raise AbortedByOperator("interrupted")

    signal.signal(signal.SIGINT, abort)
    try:
        report = orch.run(schedule)
    except AbortedByOperator:
        print("aborted by operator", file=sys.stderr)
        return EXIT_ABORTED
    if not args.local:
        cluster.close()
    pol.save_checkpoint(orch.trainer.params, str(out / "final.ckpt"))
    for record in report["phases"]:
        print(f"phase {record['phase']:>8}  eval avg {record['eval']['avg']:.3f}  "
              f"entropy {record['entropy_probe']:.3f}")
    print(f"final eval avg {report['final_eval']['avg']:.3f} -> {out}")
    return EXIT_OK


def cmd_collect_bc(args) -> int:
    tasks = _tasks_from_args(args)
    teachers = _load_teachers(args.teachers)
    cluster = LocalCluster() if args.local \
        else ClusterClient(_addr(args.controller), client_id="collector")
    log = bc_mod.collect_initial(tasks, teachers, args.n_per_task, cluster,
                                 base_seed=args.seed)
    if not args.local:
        cluster.close()
    strata = bc_mod.stratify(log, tasks=tasks)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_log(log, str(out / "bc-trajectories.jsonl"), append=False)
    with open(out / "strata.json", "w", encoding="utf-8") as fh:
        json.dump([{"task_id": s.task_id, "class": s.cls,
                    "accuracies": s.accuracies} for s in strata], fh, indent=1)
    counts: dict = {}
    for s in strata:
        counts[s.cls] = counts.get(s.cls, 0) + 1
    print(f"collected {len(log)} trajectories over {len(tasks)} tasks: {counts}")
    return EXIT_OK


def _load_teachers(path: str) -> list:
    teachers = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            teachers.append(bc_mod.Teacher(
                teacher_id=doc["teacher_id"], kind=doc["kind"],
                seed=doc.get("seed", 0), mode=doc.get("mode", "api"),
                error_rate=doc.get("error_rate", 0.0),
                knows=tuple(doc.get("knows", ())),
                checkpoint=doc.get("checkpoint", "")))
    return teachers


def cmd_eval(args) -> int:
    try:
        params = pol.load_checkpoint(args.checkpoint)
    except DeskgridError as exc:
        print(f"checkpoint unusable: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    tasks = _tasks_from_args(args)
    include_api = not args.gui_only
    table, _ = eval_suite(params, tasks, include_api=include_api)
    medians = [s for t in tasks
               if (s := steps_to_success(params, t, include_api=include_api))]
    headers = [label for _, label in DOMAIN_COLUMNS] + ["Avg"]
    row = [f"{100 * table.get(key, 0.0):.1f}" for key, _ in DOMAIN_COLUMNS]
    row.append(f"{100 * table['avg']:.1f}")
    widths = [max(len(h), len(v)) for h, v in zip(headers, row)]
    print("  ".join(h.rjust(w) for h, w in zip(headers, widths)))
    print("  ".join(v.rjust(w) for v, w in zip(row, widths)))
    if medians:
        medians.sort()
        print(f"solved {len(medians)}/{len(tasks)}; median steps-to-success "
              f"{medians[len(medians) // 2]}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(table, fh, indent=1, sort_keys=True)
    return EXIT_OK


def cmd_apigen(args) -> int:
    if args.registry and Path(args.registry).is_file():
        registry = apigen_mod.ApiRegistry.load(args.registry)
    else:
        registry = apigen_mod.ApiRegistry.bootstrap()
    backend = apigen_mod.StubBackend() if args.backend == "stub" \
        else apigen_mod.RemoteBackend(args.endpoint)
    with open(args.examples, encoding="utf-8") as fh:
        examples = [line.strip() for line in fh if line.strip()]
    report = apigen_mod.run_pipeline(examples, registry, backend)
    if args.registry:
        registry.save(args.registry)
    print(json.dumps(report, indent=1, sort_keys=True))
    return EXIT_OK if not report["failed"] else EXIT_RUNTIME


def _cli_overrides(args) -> dict:
    overrides = {}
    for spec in getattr(args, "set", None) or []:
        key, _, value = spec.partition("=")
        overrides[key.strip()] = value.strip()
    return overrides


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deskgrid")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="config file (dotted keys)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key")

    p = sub.add_parser("controller", help="run the controller service")
    common(p)
    p.add_argument("--bind", default=None, help="wire host:port")
    p.add_argument("--http", default=None, help="http host:port")
    p.add_argument("--assets", default=None, help="static dashboard directory")
    p.set_defaults(fn=cmd_controller)

    p = sub.add_parser("worker", help="run an env worker")
    common(p)
    p.add_argument("--controller", required=True, help="controller host:port")
    p.add_argument("--slots", type=int, default=None)
    p.add_argument("--worker-id", default="worker-1")
    p.add_argument("--suite", default="ablation", choices=("smoke", "ablation"))
    p.add_argument("--tasks", default=None, help="task file (overrides --suite)")
    p.add_argument("--registry", default=None, help="generated-api registry file")
    p.set_defaults(fn=cmd_worker)

    p = sub.add_parser("train", help="run a training schedule")
    common(p)
    p.add_argument("--schedule", required=True)
    p.add_argument("--controller", default="127.0.0.1:7700")
    p.add_argument("--local", action="store_true",
                   help="use in-process envs instead of a cluster")
    p.add_argument("--publish-metrics", action="store_true",
                   help="POST per-update metrics to the controller http api")
    p.add_argument("--suite", default="ablation", choices=("smoke", "ablation"))
    p.add_argument("--tasks", default=None)
    p.add_argument("--init", default=None, help="initial checkpoint")
    p.add_argument("--auto-pulse", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("collect-bc", help="collect teacher trajectories")
    common(p)
    p.add_argument("--teachers", required=True, help="teacher records (jsonl)")
    p.add_argument("--controller", default="127.0.0.1:7700")
    p.add_argument("--local", action="store_true")
    p.add_argument("--suite", default="ablation", choices=("smoke", "ablation"))
    p.add_argument("--tasks", default=None)
    p.add_argument("--n-per-task", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_collect_bc)

    p = sub.add_parser("eval", help="greedy evaluation of a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--suite", default="ablation", choices=("smoke", "ablation"))
    p.add_argument("--tasks", default=None)
    p.add_argument("--gui-only", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("apigen", help="api construction pipeline")
    sub2 = p.add_subparsers(dest="apigen_command", required=True)
    p2 = sub2.add_parser("run")
    p2.add_argument("--examples", required=True)
    p2.add_argument("--backend", choices=("stub", "remote"), default="stub")
    p2.add_argument("--endpoint", default="http://127.0.0.1:8800/")
    p2.add_argument("--registry", default=None)
    p2.set_defaults(fn=cmd_apigen)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except AbortedByOperator:
        return EXIT_ABORTED
    except DeskgridError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
