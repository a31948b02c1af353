"""Automated API construction: requirement analysis, implementation, testing.

The pipeline runs three stages over a pluggable completion backend:

  1. analyze_requirements - mine task examples for functionality the
     registry does not cover yet and propose parameterized specs (capped,
     general-purpose only).
  2. implement_api - turn a spec into a declarative operation descriptor;
     artifacts must carry error handling and logging hooks or they are
     rejected before ever touching an environment.
  3. generate_tests / repair_loop - derive unit cases (invocation without
     runtime errors, plus expected values over fixture states) and loop
     implementation <- failure feedback until everything passes.

The stub backend is a pure function of its prompt, so the whole pipeline is
reproducible byte for byte; the remote backend speaks a one-POST plain-text
completion protocol for hooking up a real generator service.
"""

from __future__ import annotations

import json
import re
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field

from .envsim.apis import PRIMITIVES, ApiDescriptor, default_registry
from .envsim.env import create_env
from .envsim.tasks import TaskSpec
from .errors import BackendUnavailable, ExhaustedRepairs, GenerationRejected

GAP_CAP = 8
STATUS_ORDER = ("declared", "implemented", "tested")


@dataclass(frozen=True)
class ApiParam:
    name: str
    type: str          # cell | range | path | paths | text | int | row | mode | chars
    required: bool = True


@dataclass(frozen=True)
class ApiSpec:
    name: str          # app.verb
    params: tuple      # ApiParam
    doc: str = ""

    def to_doc(self) -> dict:
        return {"name": self.name, "doc": self.doc,
                "params": [{"name": p.name, "type": p.type, "required": p.required}
                           for p in self.params]}

    @classmethod
    def from_doc(cls, doc: dict) -> "ApiSpec":
        params = tuple(ApiParam(p["name"], p["type"], p.get("required", True))
                       for p in doc.get("params", []))
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate parameter names in {doc.get('name')}")
        return cls(name=doc["name"], params=params, doc=doc.get("doc", ""))


@dataclass(frozen=True)
class TestCase:
    api: str
    args: dict
    expect: str                  # "no_error" | "value"
    expected: str | None = None
    readback: dict | None = None  # optional {"api": ..., "args": {...}}

    def to_doc(self) -> dict:
        return {"api": self.api, "args": self.args, "expect": self.expect,
                "expected": self.expected, "readback": self.readback}

    @classmethod
    def from_doc(cls, doc: dict) -> "TestCase":
        return cls(api=doc["api"], args=dict(doc["args"]), expect=doc["expect"],
                   expected=doc.get("expected"), readback=doc.get("readback"))


class ApiRegistry:
    """Spec + artifact + status store; mutations are serialized."""

    def __init__(self):
        self.specs: dict[str, ApiSpec] = {}
        self.artifacts: dict[str, ApiDescriptor] = {}
        self.status: dict[str, str] = {}
        self._lock = threading.Lock()

    @classmethod
    def bootstrap(cls, exclude=("sheet.sum_range",)) -> "ApiRegistry":
        """Registry seeded with the built-in v0 surface (minus `exclude`)."""
        reg = cls()
        for name, desc in default_registry().items():
            if name in exclude:
                continue
            params = tuple(ApiParam(p, _guess_type(p)) for p in desc.params
                           if p != "*")
            reg.add_spec(ApiSpec(name=name, params=params, doc=desc.doc))
            reg.set_artifact(name, desc)
            reg.set_status(name, "tested")
        return reg

    def add_spec(self, spec: ApiSpec) -> None:
        with self._lock:
            if spec.name in self.specs:
                raise ValueError(f"duplicate api name {spec.name}")
            self.specs[spec.name] = spec
            self.status[spec.name] = "declared"

    def set_artifact(self, name: str, artifact: ApiDescriptor) -> None:
        with self._lock:
            self.artifacts[name] = artifact
            if STATUS_ORDER.index(self.status.get(name, "declared")) < 1:
                self.status[name] = "implemented"

    def set_status(self, name: str, status: str) -> None:
        with self._lock:
            old = self.status.get(name, "declared")
            if STATUS_ORDER.index(status) < STATUS_ORDER.index(old):
                raise ValueError(f"status regression {old} -> {status} for {name}")
            self.status[name] = status

    def tested_apis(self) -> dict[str, ApiDescriptor]:
        return {n: a for n, a in self.artifacts.items()
                if self.status.get(n) == "tested"}

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for name in sorted(self.specs):
                artifact = self.artifacts.get(name)
                fh.write(json.dumps({
                    "name": name,
                    "spec": self.specs[name].to_doc(),
                    "status": self.status[name],
                    "artifact": _artifact_doc(artifact) if artifact else None,
                }, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str) -> "ApiRegistry":
        reg = cls()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                doc = json.loads(line)
                reg.add_spec(ApiSpec.from_doc(doc["spec"]))
                if doc.get("artifact"):
                    reg.set_artifact(doc["name"], _artifact_from_doc(doc["artifact"]))
                reg.set_status(doc["name"], doc["status"])
        return reg


def _guess_type(param: str) -> str:
    return {"cell": "cell", "dest": "cell", "range": "range", "col": "cell",
            "row": "row", "path": "path", "paths": "paths", "src": "path",
            "dst": "path", "mode": "mode", "chars": "int"}.get(param, "text")


def _artifact_doc(artifact: ApiDescriptor) -> dict:
    return {"name": artifact.name, "params": list(artifact.params),
            "primitive": artifact.primitive, "doc": artifact.doc,
            "error_handling": artifact.error_handling, "logging": artifact.logging,
            "bindings": [list(b) for b in artifact.bindings]}


def _artifact_from_doc(doc: dict) -> ApiDescriptor:
    return ApiDescriptor(name=doc["name"], params=tuple(doc["params"]),
                         primitive=doc["primitive"], doc=doc.get("doc", ""),
                         error_handling=doc.get("error_handling", False),
                         logging=doc.get("logging", False),
                         bindings=tuple(tuple(b) for b in doc.get("bindings", ())))


# --- backends ---

class StubBackend:
    """Deterministic template generator; pure function of the prompt.

    break_first: api names whose first implementation (no feedback in the
    prompt) is functionally wrong, exercising the repair loop.
    break_always: api names that never produce a passing artifact.
    """

    kind = "stub"

    def __init__(self, break_first=(), break_always=()):
        self.break_first = set(break_first)
        self.break_always = set(break_always)

    def complete(self, prompt: str) -> str:
        head, _, body = prompt.partition("\n")
        if head == "analyze-gaps":
            return json.dumps(_stub_analyze(body))
        if head == "implement-api":
            return json.dumps(_stub_implement(body, self.break_first,
                                              self.break_always))
        if head == "generate-tests":
            return json.dumps(_stub_tests(body))
        raise BackendUnavailable(f"stub cannot answer prompt kind {head!r}")


class RemoteBackend:
    """Single-POST plain-text completion service with bounded retries."""

    kind = "remote"

    def __init__(self, endpoint: str, timeout: float = 10.0, retries: int = 2,
                 backoff: float = 0.2):
        self.endpoint = endpoint
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff

    def complete(self, prompt: str) -> str:
        last_error = None
        for attempt in range(self.retries + 1):
            try:
                req = urllib.request.Request(
                    self.endpoint, data=prompt.encode("utf-8"),
                    headers={"Content-Type": "text/plain; charset=utf-8"})
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    return resp.read().decode("utf-8")
            except (urllib.error.URLError, OSError) as exc:
                last_error = exc
                time.sleep(self.backoff * (2 ** attempt))
        raise BackendUnavailable(str(last_error))


# --- stub knowledge tables ---

_GAP_TABLE = [
    (("sum", "total of"), {
        "name": "sheet.sum_range", "doc": "Sum numeric cells of a range into dest.",
        "params": [{"name": "range", "type": "range"},
                   {"name": "dest", "type": "cell"}]}),
    (("count the filled", "non-empty", "nonempty"), {
        "name": "sheet.count_nonempty", "doc": "Count non-empty cells in a range.",
        "params": [{"name": "range", "type": "range"}]}),
    (("how many entries", "count files"), {
        "name": "files.count_entries", "doc": "Count entries under a directory.",
        "params": [{"name": "path", "type": "path"}]}),
    (("line count", "how many lines"), {
        "name": "editor.line_count", "doc": "Number of lines in the buffer.",
        "params": []}),
    (("preview", "first characters"), {
        "name": "editor.head", "doc": "First N characters of the buffer.",
        "params": [{"name": "chars", "type": "int"}]}),
]

_NEED_RE = re.compile(r"need api: ([a-z_]+\.[a-z_][a-z0-9_]*)\(([^)]*)\)")

_IMPL_TABLE = {
    "sheet.sum_range": ("sum_range", ()),
    "sheet.count_nonempty": ("count_nonempty", ()),
    "files.count_entries": ("count_entries", ()),
    "editor.line_count": ("line_count", ()),
    "editor.head": ("head_text", ()),
}

# fixture states the stub's expected values are computed against
FIXTURES = {
    "sheet": {"cells": {"A1": "1", "A2": "2", "A3": "3", "B1": "x"}},
    "files": {"dirs": ["docs"], "files": {"notes.txt": "hi", "docs/a.txt": ""}},
    "editor": {"text": "alpha\nbeta"},
}

_BOUNDARY = {"text": "", "int": "0", "row": "1", "cell": "A1", "range": "A1:A1",
             "path": "probe.txt", "paths": "probe", "mode": "lower"}

_NOMINAL = {"text": "sample", "int": "2", "row": "2", "cell": "C2",
            "range": "A1:A3", "path": "docs/new.txt", "paths": "p1;p2",
            "mode": "lower"}

_CASE_TABLE = {
    "sheet.sum_range": [
        {"args": {"range": "A1:A3", "dest": "A5"}, "expect": "value", "expected": "6"},
        {"args": {"range": "A1:A1", "dest": "A6"}, "expect": "value", "expected": "1"},
        {"args": {"range": "B1:B1", "dest": "A7"}, "expect": "no_error"},
    ],
    "sheet.count_nonempty": [
        {"args": {"range": "A1:A3"}, "expect": "value", "expected": "3"},
        {"args": {"range": "A1:B1"}, "expect": "value", "expected": "2"},
        {"args": {"range": "A4:A5"}, "expect": "no_error"},
    ],
    "files.count_entries": [
        {"args": {"path": ""}, "expect": "value", "expected": "3"},
        {"args": {"path": "docs"}, "expect": "value", "expected": "1"},
    ],
    "editor.line_count": [
        {"args": {}, "expect": "value", "expected": "2"},
    ],
    "editor.head": [
        {"args": {"chars": "5"}, "expect": "value", "expected": "alpha"},
        {"args": {"chars": "0"}, "expect": "value", "expected": ""},
    ],
    "sheet.set_cell": [
        {"args": {"cell": "C2", "value": "x"}, "expect": "no_error"},
        {"args": {"cell": "C2", "value": "x"}, "expect": "value", "expected": "x",
         "readback": {"api": "sheet.get_cell", "args": {"cell": "C2"}}},
    ],
    "files.write": [
        {"args": {"path": "docs/new.txt", "text": "body"}, "expect": "no_error"},
        {"args": {"path": "docs/new.txt", "text": "body"}, "expect": "value",
         "expected": "body",
         "readback": {"api": "files.read", "args": {"path": "docs/new.txt"}}},
    ],
}


def _stub_analyze(body: str) -> list[dict]:
    existing_line, _, examples = body.partition("\nexamples:\n")
    existing = set(existing_line.replace("existing:", "").strip().split(","))
    text = examples.lower()
    gaps: list[dict] = []
    for triggers, spec in _GAP_TABLE:
        if spec["name"] in existing:
            continue
        if any(t in text for t in triggers):
            gaps.append(spec)
    for match in _NEED_RE.finditer(text):
        name, arglist = match.group(1), match.group(2)
        if name in existing or any(g["name"] == name for g in gaps):
            continue
        params = [{"name": a.strip(), "type": "text"}
                  for a in arglist.split(",") if a.strip()]
        gaps.append({"name": name, "doc": f"Requested operation {name}.",
                     "params": params})
    return gaps


def _stub_implement(body: str, break_first, break_always) -> dict:
    spec_line, _, feedback = body.partition("\nfeedback:")
    spec = json.loads(spec_line.replace("spec:", "", 1))
    name = spec["name"]
    fresh = feedback.strip() in ("", "none")
    if name not in _IMPL_TABLE:
        # no template knowledge: emit a structurally valid but unimplementable artifact
        return {"name": name, "params": [p["name"] for p in spec["params"]],
                "primitive": "unknown_op", "error_handling": True, "logging": True,
                "doc": spec.get("doc", ""), "bindings": []}
    primitive, bindings = _IMPL_TABLE[name]
    doc = {"name": name, "params": [p["name"] for p in spec["params"]],
           "primitive": primitive, "error_handling": True, "logging": True,
           "doc": spec.get("doc", ""), "bindings": [list(b) for b in bindings]}
    if name in break_always or (name in break_first and fresh):
        # plausible-but-wrong primitive choice; passes validation, fails tests
        doc["primitive"] = {"sheet": "count_nonempty", "files": "line_count",
                            "editor": "line_count"}[name.split(".")[0]]
        if doc["primitive"] == primitive:
            doc["primitive"] = "get_text"
    return doc


def _stub_tests(body: str) -> list[dict]:
    spec = json.loads(body.replace("spec:", "", 1))
    name = spec["name"]
    cases = [dict(c) for c in _CASE_TABLE.get(name, ())]
    if not cases:
        args = {p["name"]: _NOMINAL.get(p["type"], "sample")
                for p in spec["params"]}
        cases.append({"args": args, "expect": "no_error"})
    have_no_error = any(c["expect"] == "no_error" for c in cases)
    have_value = any(c["expect"] == "value" for c in cases)
    if not have_no_error:
        cases.append({"args": dict(cases[0]["args"]), "expect": "no_error"})
    if not have_value and name in _IMPL_TABLE:
        cases.append({"args": dict(cases[0]["args"]), "expect": "value",
                      "expected": ""})
    # boundary coverage: int and text boundaries are valid for every api;
    # cell/range/path minimal forms are covered by the per-api case tables
    for p in spec["params"]:
        if p["type"] not in ("int", "text"):
            continue
        args = {q["name"]: _NOMINAL.get(q["type"], "sample")
                for q in spec["params"]}
        args[p["name"]] = _BOUNDARY[p["type"]]
        cases.append({"args": args, "expect": "no_error"})
    out = []
    for c in cases:
        out.append({"api": name, "args": c["args"], "expect": c["expect"],
                    "expected": c.get("expected"), "readback": c.get("readback")})
    return out


# --- pipeline operations ---

def analyze_requirements(task_examples, registry: ApiRegistry, backend,
                         cap: int = GAP_CAP) -> list[ApiSpec]:
    prompt = ("analyze-gaps\n"
              f"existing: {','.join(sorted(registry.specs))}\n"
              "examples:\n" + "\n".join(f"- {e}" for e in task_examples))
    reply = backend.complete(prompt)
    specs = []
    for doc in json.loads(reply):
        if doc["name"] in registry.specs:
            continue
        specs.append(ApiSpec.from_doc(doc))
        if len(specs) >= cap:
            break
    return specs


def validate_artifact(spec: ApiSpec, doc: dict) -> ApiDescriptor:
    if doc.get("name") != spec.name:
        raise GenerationRejected(f"artifact name {doc.get('name')!r} != {spec.name}")
    if not doc.get("error_handling"):
        raise GenerationRejected(f"{spec.name}: artifact lacks error handling")
    if not doc.get("logging"):
        raise GenerationRejected(f"{spec.name}: artifact lacks logging hooks")
    if doc.get("primitive") not in PRIMITIVES:
        raise GenerationRejected(
            f"{spec.name}: unknown primitive {doc.get('primitive')!r}")
    want = tuple(p.name for p in spec.params)
    if tuple(doc.get("params", ())) != want:
        raise GenerationRejected(f"{spec.name}: parameter list mismatch")
    return _artifact_from_doc(doc)


def implement_api(spec: ApiSpec, backend, registry: ApiRegistry,
                  feedback: str = "") -> ApiDescriptor:
    prompt = (f"implement-api\nspec:{json.dumps(spec.to_doc(), sort_keys=True)}\n"
              f"feedback:{feedback or 'none'}")
    doc = json.loads(backend.complete(prompt))
    artifact = validate_artifact(spec, doc)
    registry.set_artifact(spec.name, artifact)
    return artifact


def generate_tests(spec: ApiSpec, backend) -> list[TestCase]:
    prompt = f"generate-tests\nspec:{json.dumps(spec.to_doc(), sort_keys=True)}"
    cases = [TestCase.from_doc(d) for d in json.loads(backend.complete(prompt))]
    for case in cases:
        unknown = set(case.args) - {p.name for p in spec.params}
        if unknown:
            raise GenerationRejected(
                f"{spec.name}: test args {sorted(unknown)} not in spec")
    return cases


def _fixture_env(app: str, extra_apis):
    task = TaskSpec(f"apigen-fixture-{app}", app, {}, max_steps=99,
                    verifier_id={"sheet": "sheet.cells", "files": "files.tree",
                                 "editor": "editor.text"}[app],
                    initial_state=FIXTURES[app])
    return create_env(task, 0, extra_apis=extra_apis)


def run_test_case(case: TestCase, artifact: ApiDescriptor):
    """Execute one case on a fresh fixture env; returns (passed, detail)."""
    app = case.api.split(".")[0]
    env = _fixture_env(app, {artifact.name: artifact})
    ok, value = artifact.execute(env.state, dict(case.args), log=env.api_log)
    if not ok:
        return False, f"{case.api}({case.args}) raised/rejected"
    if case.expect == "value":
        if case.readback:
            reader = env.registry.get(case.readback["api"])
            if reader is None:
                return False, f"readback api {case.readback['api']} missing"
            ok2, value = reader.execute(env.state, dict(case.readback["args"]))
            if not ok2:
                return False, "readback call failed"
        if value != case.expected:
            return False, (f"{case.api}({case.args}) = {value!r}, "
                           f"expected {case.expected!r}")
    return True, "ok"


def run_tests(spec: ApiSpec, artifact: ApiDescriptor, cases) -> list[str]:
    failures = []
    for case in cases:
        passed, detail = run_test_case(case, artifact)
        if not passed:
            failures.append(detail)
    return failures


def repair_loop(spec: ApiSpec, backend, registry: ApiRegistry,
                max_iters: int = 3):
    """Iterate implement -> test -> feedback until green or exhausted.

    Returns (artifact, iterations). Raises ExhaustedRepairs carrying every
    failure report when max_iters attempts all fail.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    artifact = registry.artifacts.get(spec.name)
    if artifact is None:
        artifact = implement_api(spec, backend, registry)
    reports: list[str] = []
    cases = generate_tests(spec, backend)
    for iteration in range(1, max_iters + 1):
        failures = run_tests(spec, artifact, cases)
        if not failures:
            registry.set_status(spec.name, "tested")
            return artifact, iteration
        report = f"iteration {iteration}: " + "; ".join(failures)
        reports.append(report)
        if iteration < max_iters:
            artifact = implement_api(spec, backend, registry, feedback=report)
    raise ExhaustedRepairs(f"{spec.name} failed after {max_iters} iterations",
                           reports=reports)


def run_pipeline(task_examples, registry: ApiRegistry, backend,
                 max_iters: int = 3) -> dict:
    """Full gap -> implement -> test flow; returns a per-api outcome report."""
    gaps = analyze_requirements(task_examples, registry, backend)
    report = {"proposed": [g.name for g in gaps], "tested": [], "failed": {}}
    for spec in gaps:
        registry.add_spec(spec)
        try:
            implement_api(spec, backend, registry)
            _, iters = repair_loop(spec, backend, registry, max_iters=max_iters)
            report["tested"].append(spec.name)
            report.setdefault("iterations", {})[spec.name] = iters
        except (GenerationRejected, ExhaustedRepairs) as exc:
            report["failed"][spec.name] = str(exc)
    return report
