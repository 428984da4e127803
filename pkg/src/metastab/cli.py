"""Command-line experiment runner.

Subcommands::

    metastab run --config exp.json --out results/
    metastab bounds phi_browder --args '{"b": 1, "args": [0, "identity"]}'
    metastab oracle --config exp.json
    metastab counterexample --max-n 100
    metastab validate-moduli --ell 2

Exit status is 0 when every non-vacuous check passes, 1 when a check
fails and 2 on configuration or runtime errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from . import rates, verify
from .counterfn import (
    Bound,
    CounterFn,
    LambdaModuli,
    LambdaSeq,
    counterfn_label,
    default_cap,
    default_harmonic_moduli,
    parse_counterfn,
)
from .iterations import (
    IterationTrace,
    SolverError,
    bauschke_sequence,
    browder_sequence,
    halpern_sequence,
)
from .space import ConvexBody, Operator, OperatorFamily, as_point, parse_body, parse_operator

log = logging.getLogger("metastab")

SCHEMA_VERSION = 1
SCHEMES = ("browder", "halpern", "bauschke", "counterexample")
CSV_COLUMNS = ("scheme", "k", "f", "bound", "witnessN", "maxGap", "verdict", "marginsJSON", "ms")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    scheme: str
    body: Optional[ConvexBody] = None
    operator: Optional[Operator] = None
    family: Optional[OperatorFamily] = None
    anchor: Optional[np.ndarray] = None
    moduli: Optional[LambdaModuli] = None
    tau: Optional[CounterFn] = None
    ks: list = field(default_factory=lambda: [0])
    fns: list = field(default_factory=list)
    budget: int = 1000
    store_limit: int = 10**5
    cap: int = 10**18
    tolerance: float = 1e-9
    seed: int = 0
    lemmas: bool = False
    lemma_samples: int = 200
    check_moduli: bool = False
    oracle: bool = True
    timing: bool = False
    export_trace: bool = False
    name: str = ""
    raw: dict = field(default_factory=dict)

    @property
    def b(self) -> int:
        return self.body.b if self.body is not None else 1

    @property
    def params(self) -> rates.ProblemParams:
        ell = self.family.ell if self.family is not None else 1
        tau = self.tau if self.tau is not None else (self.family.tau if self.family else None)
        return rates.ProblemParams(b=self.b, ell=ell, moduli=self.moduli, tau=tau, cap=self.cap)


def _parse_moduli(desc, ell: int) -> LambdaModuli:
    base = default_harmonic_moduli(ell)
    if desc is None:
        return base
    lam = desc.get("lambda", "harmonic")
    if lam == "harmonic":
        seq = LambdaSeq("harmonic")
    elif isinstance(lam, dict) and "table" in lam:
        seq = LambdaSeq("table", tuple(Fraction(v) for v in lam["table"]))
    else:
        raise ConfigError(f"unknown lambda descriptor {lam!r}")
    pick = lambda key, default: parse_counterfn(desc[key]) if key in desc else default
    return LambdaModuli(seq, pick("mu", base.mu), pick("nu", base.nu), pick("xi", base.xi), ell)


def parse_scenario(raw: dict, overrides: dict) -> ExperimentConfig:
    raw = {**raw, **{k: v for k, v in overrides.items() if v is not None}}
    scheme = raw.get("scheme")
    if scheme not in SCHEMES:
        raise ConfigError(f"scheme must be one of {', '.join(SCHEMES)}, got {scheme!r}")
    cfg = ExperimentConfig(scheme=scheme, raw=raw)
    cfg.name = str(raw.get("name", scheme))
    cfg.cap = int(raw["cap"]) if "cap" in raw else default_cap()
    if cfg.cap < 1:
        raise ConfigError("cap must be positive")
    cfg.budget = int(raw.get("budget", 100 if scheme == "counterexample" else 1000))
    if cfg.budget < 1:
        raise ConfigError("budget must be at least 1")
    cfg.store_limit = int(raw.get("store_limit", 10**5))
    cfg.tolerance = float(raw.get("tolerance", 1e-9))
    cfg.seed = int(raw.get("seed", 0))
    cfg.ks = [int(k) for k in raw.get("k", [0])]
    if any(k < 0 for k in cfg.ks):
        raise ConfigError("k values must be natural numbers")
    cfg.fns = [parse_counterfn(f) for f in raw.get("f", ["identity"])]
    cfg.lemmas = bool(raw.get("lemmas", False))
    cfg.lemma_samples = int(raw.get("lemma_samples", 200))
    cfg.check_moduli = bool(raw.get("validate_moduli", False))
    cfg.oracle = bool(raw.get("oracle", True))
    cfg.timing = bool(raw.get("timing", False))
    cfg.export_trace = bool(raw.get("export_trace", False))
    if scheme == "counterexample":
        return cfg

    space = raw.get("space")
    if not isinstance(space, dict) or "body" not in space:
        raise ConfigError("space.body is required")
    body_desc = dict(space["body"])
    if "b" in space:
        body_desc["b"] = space["b"]
    if "b" in body_desc and (int(body_desc["b"]) != body_desc["b"] or body_desc["b"] < 1):
        raise ConfigError(f"b must be a positive integer, got {body_desc['b']!r}")
    cfg.body = parse_body(body_desc)
    dim = int(space.get("dimension", cfg.body.dim))
    if dim != cfg.body.dim:
        raise ConfigError("space.dimension disagrees with the body")
    if "anchor" not in raw:
        raise ConfigError("anchor point is required")
    cfg.anchor = as_point(raw["anchor"])
    if not cfg.body.contains(cfg.anchor):
        raise ConfigError("anchor point lies outside the body")
    tau = raw.get("tau")
    cfg.tau = parse_counterfn(tau) if tau is not None else None
    if scheme == "bauschke":
        ops = raw.get("family")
        if not ops:
            raise ConfigError("bauschke scheme needs a family")
        cfg.family = OperatorFamily(tuple(parse_operator(d, dim, cfg.body) for d in ops), cfg.tau)
        if cfg.tau is None:
            raise ConfigError("bauschke scheme needs tau")
    else:
        if "operator" not in raw:
            raise ConfigError(f"{scheme} scheme needs an operator")
        cfg.operator = parse_operator(raw["operator"], dim, cfg.body)
        cfg.family = OperatorFamily((cfg.operator,))
    cfg.moduli = _parse_moduli(raw.get("moduli"), cfg.family.ell)
    cfg.params  # validates b, ell, tau
    return cfg


def load_config(path: str, overrides: dict) -> list[ExperimentConfig]:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r}")
    if "scenarios" in raw:
        shared = {k: v for k, v in raw.items() if k not in ("scenarios", "schema_version")}
        return [parse_scenario({**shared, **sc}, overrides) for sc in raw["scenarios"]]
    return [parse_scenario({k: v for k, v in raw.items() if k != "schema_version"}, overrides)]


# ---------------------------------------------------------------------------
# running


def _bound_cell(b: Bound) -> str:
    return f">={b.cap}" if b.saturated else str(b.value)


def _num(x):
    if x is None:
        return None
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


@dataclass
class ScenarioResult:
    rows: list
    reports: list
    traces: list
    ok: bool


def _build_trace(cfg: ExperimentConfig, length: int) -> IterationTrace:
    if cfg.scheme == "browder":
        return browder_sequence(cfg.operator, cfg.body, cfg.anchor, length)
    if cfg.scheme == "halpern":
        return halpern_sequence(cfg.operator, cfg.body, cfg.anchor, cfg.moduli, length)
    return bauschke_sequence(cfg.family, cfg.body, cfg.anchor, cfg.moduli, length)


def run_scenario(cfg: ExperimentConfig) -> ScenarioResult:
    if cfg.scheme == "counterexample":
        return _run_counterexample(cfg)
    params = cfg.params
    stored = min(cfg.budget, cfg.store_limit)
    trace = _build_trace(cfg, stored)
    rows, reports, ok = [], [], True

    for k in cfg.ks:
        for f in cfg.fns:
            t0 = time.perf_counter()
            bound = rates.phi_for_scheme(params, cfg.scheme, k, f)
            rep = verify.check_metastability(trace, k, f, bound, cfg.tolerance)
            margins = {"gap": _num(rep.margin)}
            if cfg.oracle and rep.witness_n is not None:
                oracle = verify.minimal_window_oracle(trace, k, f, cfg.tolerance)
                margins["oracle_agrees"] = oracle == rep.witness_n
                if oracle != rep.witness_n:
                    ok = False
            ms = (time.perf_counter() - t0) * 1000
            if rep.verdict == verify.FAIL:
                ok = False
            rows.append({
                "scheme": cfg.scheme, "k": k, "f": counterfn_label(f), "bound": _bound_cell(bound),
                "witnessN": "" if rep.witness_n is None else rep.witness_n,
                "maxGap": "" if rep.max_gap is None else repr(rep.max_gap),
                "verdict": rep.verdict,
                "marginsJSON": json.dumps(margins, sort_keys=True),
                "ms": f"{ms:.1f}" if cfg.timing else "",
            })
            reports.append({"kind": "metastability", **rep.to_json()})

    # residual decay
    if cfg.scheme == "bauschke":
        long_run = trace if cfg.budget <= stored else bauschke_sequence(
            cfg.family, cfg.body, cfg.anchor, cfg.moduli, cfg.budget, store=False)
        regs = verify.check_asymptotic_regularity(long_run, params, cfg.ks, cfg.tolerance)
        for rep in regs:
            for item in rep.items:
                if item.verdict == verify.VACUOUS and not item.diagnostics.get("spot_ok", True):
                    log.warning("spot check failed for %s %s", item.lemma, item.instance)
        extra = [verify.check_step_identity(trace),
                 verify.check_telescoping(trace, params, _telescoping_pairs(trace, cfg.seed))]
    elif cfg.scheme == "halpern":
        regs = [verify.check_asymptotic_regularity(trace, params, k, cfg.tolerance, cfg.fns) for k in cfg.ks]
        extra = [verify.check_step_identity(trace)]
    else:
        regs = [verify.check_asymptotic_regularity(trace, params, 0, cfg.tolerance)]
        extra = []
    for rep in regs + extra:
        ok &= rep.passed
        reports.append({"kind": "regularity", **rep.to_json()})

    if cfg.lemmas:
        target = cfg.family if cfg.scheme == "bauschke" else cfg.operator
        for k in cfg.ks:
            rep = verify.check_projection_lemmas(target, cfg.body, cfg.anchor, k, cfg.lemma_samples,
                                                 params=params, trace=trace, seed=cfg.seed,
                                                 tol=cfg.tolerance)
            ok &= rep.passed
            reports.append({"kind": "lemmas", **rep.to_json()})

    if cfg.check_moduli and cfg.scheme in ("halpern", "bauschke"):
        fam = cfg.family if cfg.scheme == "bauschke" else None
        rep = verify.validate_moduli(cfg.moduli, fam, cfg.body, samples=cfg.lemma_samples,
                                     seed=cfg.seed, tol=cfg.tolerance)
        ok &= rep.passed
        reports.append({"kind": "moduli", **rep.to_json()})
    return ScenarioResult(rows, reports, [trace], ok)


def _telescoping_pairs(trace: IterationTrace, seed: int) -> list:
    rng = np.random.default_rng(seed)
    hi = max(2, trace.last // 2)
    return [(int(rng.integers(1, hi)), int(rng.integers(0, hi))) for _ in range(50)]


def _run_counterexample(cfg: ExperimentConfig) -> ScenarioResult:
    t0 = time.perf_counter()
    rep = verify.run_counterexample(cfg.budget, cfg.ks)
    ms = (time.perf_counter() - t0) * 1000
    fails = set(rep.diagnostics["conclusion_fails_for_k"])
    rows = [{
        "scheme": "counterexample", "k": k, "f": "", "bound": "", "witnessN": "", "maxGap": "",
        "verdict": "conclusion-fails" if k in fails else "conclusion-holds",
        "marginsJSON": json.dumps({"max_n": cfg.budget}, sort_keys=True),
        "ms": f"{ms:.1f}" if cfg.timing else "",
    } for k in cfg.ks]
    ok = rep.passed and bool(fails) and all(k in fails for k in cfg.ks if k >= 1)
    return ScenarioResult(rows, [{"kind": "counterexample", **rep.to_json()}], [], ok)


def residual_series_csv(trace: IterationTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    res = trace.residuals
    per_op = res.ndim == 2
    w.writerow(["n", "residual"] + ([f"residual_T{i}" for i in range(res.shape[1])] if per_op else []))
    scalar = trace.scalar_residuals()
    for n in range(trace.length):
        row = [n, repr(float(scalar[n]))]
        if per_op:
            row += [repr(float(v)) for v in res[n]]
        w.writerow(row)
    return buf.getvalue()


def emit_report(rows: list, scenarios: list, out_dir: str, prefix: str = "report",
                traces: Optional[list] = None, export_traces: bool = False) -> list[str]:
    """Write ``<prefix>.csv``, ``<prefix>.json`` and one residual series CSV per trace."""
    if not rows:
        raise ValueError("no rows to report")
    os.makedirs(out_dir, exist_ok=True)
    written = []
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)
    path = os.path.join(out_dir, f"{prefix}.csv")
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())
    written.append(path)

    path = os.path.join(out_dir, f"{prefix}.json")
    with open(path, "w") as fh:
        json.dump({"schema_version": SCHEMA_VERSION, "scenarios": scenarios}, fh,
                  indent=2, sort_keys=True, default=_num)
        fh.write("\n")
    written.append(path)

    for i, tr in enumerate(traces or []):
        if tr is None or tr.streamed:
            continue
        path = os.path.join(out_dir, f"{prefix}-series-{i}-{tr.scheme}.csv")
        with open(path, "w", newline="") as fh:
            fh.write(residual_series_csv(tr))
        written.append(path)
        if export_traces:
            path = os.path.join(out_dir, f"{prefix}-trace-{i}-{tr.scheme}.csv")
            with open(path, "w", newline="") as fh:
                fh.write(tr.to_csv())
            written.append(path)
    return written


def run_experiment(configs: list[ExperimentConfig], out_dir: Optional[str]) -> int:
    rows, scenarios, traces, ok = [], [], [], True
    for i, cfg in enumerate(configs):
        log.info("scenario %d: %s (%s)", i, cfg.name, cfg.scheme)
        res = run_scenario(cfg)
        rows += res.rows
        scenarios.append({"index": i, "name": cfg.name, "scheme": cfg.scheme,
                          "passed": res.ok, "reports": res.reports})
        traces += res.traces
        ok &= res.ok
    if out_dir:
        export = any(c.export_trace for c in configs)
        for path in emit_report(rows, scenarios, out_dir, traces=traces, export_traces=export):
            log.info("wrote %s", path)
    else:
        sys.stdout.write(_rows_csv(rows))
    return 0 if ok else 1


def _rows_csv(rows: list) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# subcommands


def _parse_bound_args(raw: str, cap_override: Optional[int]):
    data = json.loads(raw) if raw else {}
    if isinstance(data, list):
        data = {"args": data}
    tau = data.get("tau")
    ell = int(data.get("ell", 1))
    cap = cap_override if cap_override is not None else int(data.get("cap", default_cap()))
    params = rates.ProblemParams(
        b=data.get("b", 1), ell=ell,
        moduli=_parse_moduli(data.get("moduli"), ell),
        tau=parse_counterfn(tau) if tau is not None else None,
        cap=cap, tight_log=bool(data.get("tight_log", False)),
    )
    args = [a if isinstance(a, int) else parse_counterfn(a) for a in data.get("args", [])]
    return params, args


def cmd_bounds(ns) -> int:
    params, args = _parse_bound_args(ns.args, ns.cap)
    out = rates.eval_primitive(params, ns.name, args)
    if isinstance(out, CounterFn):
        raise ConfigError(f"{ns.name} with these arguments is a function; pass the point argument too")
    print(json.dumps(out.to_json(), sort_keys=True))
    return 0


def cmd_oracle(ns, overrides) -> int:
    configs = load_config(ns.config, overrides)
    out = []
    for cfg in configs:
        if cfg.scheme == "counterexample":
            continue
        trace = _build_trace(cfg, min(cfg.budget, cfg.store_limit))
        for k in cfg.ks:
            for f in cfg.fns:
                n = verify.minimal_window_oracle(trace, k, f, cfg.tolerance)
                out.append({"scheme": cfg.scheme, "k": k, "f": counterfn_label(f), "witnessN": n})
    print(json.dumps(out, sort_keys=True, indent=2))
    return 0


def cmd_counterexample(ns) -> int:
    rep = verify.run_counterexample(ns.max_n)
    fails = rep.diagnostics["conclusion_fails_for_k"]
    print(json.dumps(rep.to_json(), sort_keys=True, indent=2, default=_num))
    return 0 if rep.passed and 1 in fails else 1


def cmd_validate_moduli(ns, overrides) -> int:
    if ns.config:
        cfg = load_config(ns.config, overrides)[0]
        moduli, family, body = cfg.moduli, (cfg.family if cfg.tau else None), cfg.body
        if family is not None and family.tau is None:
            family = OperatorFamily(family.operators, cfg.tau)
    else:
        moduli, family, body = default_harmonic_moduli(ns.ell), None, None
    rep = verify.validate_moduli(moduli, family, body, samples=ns.samples, k_max=ns.k_max)
    print(json.dumps(rep.to_json(), sort_keys=True, indent=2, default=_num))
    return 0 if rep.passed else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="metastab", description=__doc__.split("\n\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        p.add_argument("--config", required=config_required, help="experiment JSON file")
        p.add_argument("--cap", type=int, help="saturation cap (default $METASTAB_CAP or 10^18)")
        p.add_argument("--budget", type=int, help="iteration budget N")
        p.add_argument("--seed", type=int, help="sampling seed")
        p.add_argument("--out", help="output directory")

    common(sub.add_parser("run", help="run experiments from a config"), config_required=True)
    pb = sub.add_parser("bounds", help="evaluate a rate functional")
    pb.add_argument("name", choices=rates.PRIMITIVE_NAMES)
    pb.add_argument("--args", default="{}", help='JSON: {"b":1,"ell":1,"tau":...,"args":[k, f, ...]}')
    pb.add_argument("--cap", type=int)
    common(sub.add_parser("oracle", help="brute-force minimal windows"), config_required=True)
    pc = sub.add_parser("counterexample", help="exact shift counterexample")
    pc.add_argument("--max-n", type=int, default=100)
    pv = sub.add_parser("validate-moduli", help="check step-size moduli")
    common(pv)
    pv.add_argument("--ell", type=int, default=1)
    pv.add_argument("--samples", type=int, default=1000)
    pv.add_argument("--k-max", type=int, default=10)
    return ap


def main(argv: Optional[list] = None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {key: getattr(ns, key, None) for key in ("cap", "budget", "seed")}
    try:
        if ns.command == "run":
            return run_experiment(load_config(ns.config, overrides), ns.out)
        if ns.command == "bounds":
            return cmd_bounds(ns)
        if ns.command == "oracle":
            return cmd_oracle(ns, overrides)
        if ns.command == "counterexample":
            return cmd_counterexample(ns)
        if ns.command == "validate-moduli":
            return cmd_validate_moduli(ns, overrides)
    except (ConfigError, ValueError, KeyError, TypeError, SolverError, ArithmeticError, OSError) as exc:
        print(f"metastab: error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
