"""Command-line front end.

Seven subcommands: ``coverage`` (one method's coverage study on a
synthetic generator), ``univariate`` (the three-method comparison),
``covariance`` (four covariance routes on one dataset), ``qq`` (rescaled
draws against normal quantiles), ``predict`` (interval for a linear score
on CSV data), ``trend`` (step-size trend of the segment-average
covariance error), and ``fit`` (plain solver fit).

Options merge three layers: defaults, then a JSON config file
(``--config``), then command-line flags, later layers winning. Unknown
config keys are rejected by name. A seed is always required; there is no
wall-clock fallback, so every run is reproducible. Output files embed the
resolved settings (minus plumbing: output dir, worker count) and use 17
significant digits, which makes reruns byte-identical regardless of
``--parallel``.

Exit codes: 0 success, 1 a method failed beyond its tolerated rate,
2 usage or configuration errors.
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from .baselines import BootstrapConfig, BootstrapFailure
from .core import NotPositiveDefiniteError, RngStream
from .experiments import (
    BootstrapMethod,
    CsvParseError,
    ExperimentFailure,
    GeneratorKind,
    GeneratorSpec,
    NormalApproxMethod,
    SgdInferenceMethod,
    coverage_simulation,
    covariance_comparison,
    default_burn_in,
    generate,
    model_for_kind,
    qq_export,
    covariance_error_trend,
    univariate_comparison,
)
from .inference import (
    DivergenceError,
    SgdConfig,
    confidence_intervals,
    prediction_interval,
    rescale_samples,
    run_sgd_segments,
)
from .models import BatchSpec, Family, ModelSpec, scaling_factor
from .solver import MaxIterationsError, fit_erm

__all__ = ["RunConfig", "UsageError", "parse_args", "run", "main"]


class UsageError(Exception):
    """Bad invocation or config file; maps to exit code 2."""


_FAMILY_NAMES = {
    "mean": Family.MEAN_ESTIMATION,
    "linear": Family.LINEAR_REGRESSION,
    "logistic": Family.LOGISTIC_VANILLA,
    "exponential": Family.EXPONENTIAL_MLE,
    "poisson": Family.POISSON_MLE,
}

_GENERATOR_NAMES = {k.value: k for k in GeneratorKind if k is not GeneratorKind.CSV_FILE}
_UNIVARIATE_NAMES = ("normal_mean", "exponential_data", "poisson_data")


def _cast_int(name, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise UsageError(f"config key {name!r} must be an integer, got {v!r}")
    if isinstance(v, float):
        if not v.is_integer():
            raise UsageError(f"config key {name!r} must be an integer, got {v!r}")
        v = int(v)
    return int(v)


def _cast_float(name, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise UsageError(f"config key {name!r} must be a number, got {v!r}")
    return float(v)


def _cast_str(name, v):
    if not isinstance(v, str):
        raise UsageError(f"config key {name!r} must be a string, got {v!r}")
    return v


def _cast_bool(name, v):
    if not isinstance(v, bool):
        raise UsageError(f"config key {name!r} must be a boolean, got {v!r}")
    return v


def _cast_numlist(name, v):
    if isinstance(v, str):
        parts = [s for s in v.split(",") if s.strip()]
        try:
            return tuple(float(s) for s in parts)
        except ValueError:
            raise UsageError(f"config key {name!r} must be comma-separated numbers, got {v!r}")
    if isinstance(v, (list, tuple)) and all(
        isinstance(e, (int, float)) and not isinstance(e, bool) for e in v
    ):
        return tuple(float(e) for e in v)
    raise UsageError(f"config key {name!r} must be a list of numbers, got {v!r}")


def _comma_list(text):
    return text


# (dest, argparse kwargs, caster) per subcommand; dests double as config keys
_COMMON = [
    ("seed", dict(type=int, help="master seed (required; no clock default)"), _cast_int),
    ("out", dict(type=str, help="output directory (default .)"), _cast_str),
    ("level", dict(type=float, help="interval level (default 0.95)"), _cast_float),
    ("parallel", dict(type=int, help="worker count (default $SGDINFER_THREADS or 1)"), _cast_int),
]

_SGD_FLAGS = [
    ("eta", dict(type=float, help="step size (default 0.1)"), _cast_float),
    ("t", dict(type=int, help="averaged iterates per segment (default 500)"), _cast_int),
    ("d", dict(type=int, help="discarded iterates per segment (default 100)"), _cast_int),
    ("b", dict(type=int, help="burn-in iterates (default ceil(10/eta))"), _cast_int),
    ("r", dict(type=int, help="segment count (default 200)"), _cast_int),
    ("batch", dict(type=int, help="mini-batch size (default 4)"), _cast_int),
]

_GEN_FLAGS = [
    ("generator", dict(type=str, choices=sorted(_GENERATOR_NAMES), help="data law"), _cast_str),
    ("n", dict(type=int, help="sample size override"), _cast_int),
    ("p", dict(type=int, help="dimension override"), _cast_int),
]

_SCHEMAS = {
    "coverage": _COMMON + _GEN_FLAGS + _SGD_FLAGS + [
        ("method", dict(type=str, choices=["sgd", "bootstrap", "normal"], help="method (default sgd)"), _cast_str),
        ("sims", dict(type=int, help="simulation count (default 500)"), _cast_int),
        ("replicates", dict(type=int, help="bootstrap replicates (default 200)"), _cast_int),
        ("source", dict(type=str, choices=["sandwich", "fisher"], help="normal-approximation covariance (default fisher for logistic generators, else sandwich)"), _cast_str),
    ],
    "univariate": _COMMON + [
        ("kind", dict(type=str, choices=list(_UNIVARIATE_NAMES), help="univariate family"), _cast_str),
        ("sims", dict(type=int, help="simulation count (default 500)"), _cast_int),
        ("replicates", dict(type=int, help="bootstrap replicates (default 500)"), _cast_int),
    ],
    "covariance": _COMMON + _GEN_FLAGS + _SGD_FLAGS + [
        ("data", dict(type=str, help="CSV file (header row; response column y)"), _cast_str),
        ("family", dict(type=str, choices=sorted(_FAMILY_NAMES), help="model family for --data"), _cast_str),
        ("replicates", dict(type=int, help="bootstrap replicates (default 200)"), _cast_int),
    ],
    "qq": _COMMON + _GEN_FLAGS + _SGD_FLAGS + [
        ("coord", dict(type=int, help="coordinate to export (default 0)"), _cast_int),
    ],
    "predict": _COMMON + _SGD_FLAGS + [
        ("data", dict(type=str, help="CSV file (header row; response column y)"), _cast_str),
        ("family", dict(type=str, choices=sorted(_FAMILY_NAMES), help="model family"), _cast_str),
        ("x", dict(type=_comma_list, help="feature vector, comma separated"), _cast_numlist),
    ],
    "trend": _COMMON + [
        ("etas", dict(type=_comma_list, help="step sizes (default 0.4,0.2,0.1)"), _cast_numlist),
        ("ts", dict(type=_comma_list, help="segment lengths (default 250,500,1000)"), _cast_numlist),
        ("runs", dict(type=int, help="chains per cell (default 2000)"), _cast_int),
        ("n", dict(type=int, help="dataset size (default 100)"), _cast_int),
        ("p", dict(type=int, help="dimension (default 5)"), _cast_int),
        ("batch", dict(type=int, help="mini-batch size (default 1)"), _cast_int),
    ],
    "fit": _COMMON + _GEN_FLAGS + [
        ("data", dict(type=str, help="CSV file (header row; response column y)"), _cast_str),
        ("family", dict(type=str, choices=sorted(_FAMILY_NAMES), help="model family for --data"), _cast_str),
        ("tol", dict(type=float, help="gradient-norm tolerance (default 1e-10)"), _cast_float),
        ("max_iter", dict(type=int, help="solver iteration cap (default 100)"), _cast_int),
    ],
}


class RunConfig:
    """Resolved invocation: subcommand plus a fully merged parameter map."""

    __slots__ = ("subcommand", "params")

    def __init__(self, subcommand, params):
        self.subcommand = subcommand
        self.params = params


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="sgdinfer",
        description="confidence intervals and covariance estimates from fixed-step SGD",
    )
    subs = parser.add_subparsers(dest="subcommand", required=True)
    for name, schema in _SCHEMAS.items():
        sub = subs.add_parser(name)
        sub.add_argument("--config", type=str, default=None, help="JSON config file; flags override it")
        for dest, kwargs, _ in schema:
            sub.add_argument("--" + dest.replace("_", "-"), dest=dest, default=None, **kwargs)
    return parser


def parse_args(argv=None) -> RunConfig:
    """Merge defaults, the optional JSON config, and flags (flags win)."""
    ns = _build_parser().parse_args(argv)
    schema = _SCHEMAS[ns.subcommand]
    casters = {dest: caster for dest, _, caster in schema}

    params = {dest: None for dest in casters}
    if ns.config is not None:
        try:
            with open(ns.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config file: {exc}")
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {ns.config}: invalid JSON ({exc})")
        if not isinstance(loaded, dict):
            raise UsageError(f"config file {ns.config} must hold a JSON object")
        unknown = sorted(set(loaded) - set(casters))
        if unknown:
            raise UsageError(
                f"unknown config key {unknown[0]!r} for subcommand {ns.subcommand!r}"
            )
        for key, value in loaded.items():
            params[key] = casters[key](key, value)
    for dest in casters:
        flag_value = getattr(ns, dest)
        if flag_value is not None:
            params[dest] = casters[dest](dest, flag_value)

    if params.get("seed") is None:
        raise UsageError("missing required field: seed")
    if params.get("out") is None:
        params["out"] = "."
    if params.get("level") is None:
        params["level"] = 0.95
    if params.get("parallel") is None:
        env = os.environ.get("SGDINFER_THREADS", "")
        params["parallel"] = int(env) if env.isdigit() and int(env) > 0 else 1
    return RunConfig(ns.subcommand, params)


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isnan(v):
            return "NaN"
        if math.isinf(v):
            return "Infinity" if v > 0 else "-Infinity"
        return format(v, ".17g")
    return str(v)


def _to_json(obj, indent=0) -> str:
    pad = " " * indent
    inner = " " * (indent + 2)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{inner}{json.dumps(str(k))}: {_to_json(v, indent + 2)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [inner + _to_json(v, indent + 2) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _provenance(cfg: RunConfig) -> dict:
    # plumbing keys excluded so reruns differing only in them stay byte-identical
    skip = {"out", "parallel"}
    block = {"subcommand": cfg.subcommand}
    for key, value in cfg.params.items():
        if key not in skip and value is not None:
            block[key] = value
    return block


def _write_json(cfg: RunConfig, payload: dict) -> str:
    os.makedirs(cfg.params["out"], exist_ok=True)
    path = os.path.join(cfg.params["out"], "report.json")
    doc = {"config": _provenance(cfg)}
    doc.update(payload)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_to_json(doc) + "\n")
    return path


def _write_csv(cfg: RunConfig, filename: str, header: str, rows) -> str:
    os.makedirs(cfg.params["out"], exist_ok=True)
    path = os.path.join(cfg.params["out"], filename)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# config " + _to_json(_provenance(cfg)).replace("\n", " ") + "\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def _report_dict(report) -> dict:
    return {
        "method": report.method,
        "coverage": report.coverage,
        "avg_width": report.avg_width,
        "num_sims": report.num_sims,
        "failed_sims": report.failed_sims,
        "operation_count": report.operation_count,
    }


def _fill(params, defaults):
    for key, value in defaults.items():
        if params.get(key) is None:
            params[key] = value


def _generator_spec(params, default="linear_exp1") -> GeneratorSpec:
    name = params.get("generator") or default
    if name not in _GENERATOR_NAMES:
        raise UsageError(f"unknown generator {name!r}")
    params["generator"] = name
    return GeneratorSpec(kind=_GENERATOR_NAMES[name], n=params.get("n"), p=params.get("p"))


def _sgd_config(params, seed: int) -> SgdConfig:
    _fill(params, {"eta": 0.1, "t": 500, "d": 100, "r": 200, "batch": 4})
    if params.get("b") is None:
        params["b"] = default_burn_in(params["eta"])
    return SgdConfig(
        eta=params["eta"],
        segment_len=params["t"],
        discard=params["d"],
        burn_in=params["b"],
        segments=params["r"],
        batch=BatchSpec(size=params["batch"]),
        seed=seed,
    )


def _sub_seed(master: int, index: int) -> int:
    return int(RngStream(master, (index,)).generator().integers(0, 2**63, dtype=np.int64))


def _load_dataset(params):
    family = params["family"]
    if family not in _FAMILY_NAMES:
        raise UsageError(f"unknown family {family!r}")
    spec = GeneratorSpec(
        kind=GeneratorKind.CSV_FILE,
        path=params["data"],
        binary_labels=_FAMILY_NAMES[family] is Family.LOGISTIC_VANILLA,
    )
    data, _ = generate(spec)
    return data, ModelSpec(_FAMILY_NAMES[family])


def _run_coverage(cfg: RunConfig):
    p = cfg.params
    _fill(p, {"method": "sgd", "sims": 500, "replicates": 200})
    if p["method"] not in ("sgd", "bootstrap", "normal"):
        raise UsageError(f"unknown method {p['method']!r}")
    spec = _generator_spec(p)
    if p.get("source") is None:
        p["source"] = "fisher" if spec.kind.value.startswith("logistic") else "sandwich"
    if p["method"] == "sgd":
        method = SgdInferenceMethod(config=_sgd_config(p, seed=0))
    elif p["method"] == "bootstrap":
        method = BootstrapMethod(config=BootstrapConfig(replicates=p["replicates"]))
    else:
        method = NormalApproxMethod(source=p["source"])
    report = coverage_simulation(
        spec, method, p["sims"], level=p["level"], master_seed=p["seed"], parallel=p["parallel"]
    )
    return _write_json(cfg, {"reports": [_report_dict(report)]})


def _run_univariate(cfg: RunConfig):
    p = cfg.params
    _fill(p, {"kind": "normal_mean", "sims": 500, "replicates": 500})
    if p["kind"] not in _UNIVARIATE_NAMES:
        raise UsageError(f"unknown univariate kind {p['kind']!r}")
    reports = univariate_comparison(
        _GENERATOR_NAMES[p["kind"]],
        num_sims=p["sims"],
        level=p["level"],
        master_seed=p["seed"],
        parallel=p["parallel"],
        replicates=p["replicates"],
    )
    return _write_json(cfg, {"reports": [_report_dict(r) for r in reports]})


def _run_covariance(cfg: RunConfig):
    p = cfg.params
    _fill(p, {"replicates": 200})
    if p.get("data"):
        if not p.get("family"):
            raise UsageError("missing required field: family (needed with --data)")
        data, model = _load_dataset(p)
    else:
        spec = _generator_spec(p)
        data, _ = generate(spec, RngStream(p["seed"], (0,)))
        model = model_for_kind(spec.kind)
    sgd_cfg = _sgd_config(p, seed=_sub_seed(p["seed"], 1))
    boot_cfg = BootstrapConfig(replicates=p["replicates"], seed=_sub_seed(p["seed"], 2))
    comp = covariance_comparison(model, data, sgd_cfg, boot_cfg)
    pdim = data.p
    header = "method,row," + ",".join(f"coord_{j}" for j in range(pdim))
    rows = []
    for name in comp.methods:
        for i in range(pdim):
            rows.append([name, i] + list(comp.matrices[name][i]))
    return _write_csv(cfg, "covariance.csv", header, rows)


def _run_qq(cfg: RunConfig):
    p = cfg.params
    _fill(p, {"coord": 0})
    spec = _generator_spec(p, default="normal_mean")
    data, _ = generate(spec, RngStream(p["seed"], (0,)))
    model = model_for_kind(spec.kind)
    sgd_cfg = _sgd_config(p, seed=_sub_seed(p["seed"], 1))
    run = run_sgd_segments(model, data, sgd_cfg)
    k_s = scaling_factor(model, run.point_estimate, data, sgd_cfg.batch)
    samples = rescale_samples(run, k_s, data.n, sgd_cfg.segment_len)
    coord = p["coord"]
    if not (0 <= coord < data.p):
        raise UsageError(f"coord {coord} out of range for p={data.p}")
    draws = samples.samples[:, coord]
    table = qq_export(draws, mean=float(draws.mean()), sd=float(draws.std(ddof=1)))
    return _write_csv(cfg, "qq.csv", "theoretical,sample", table)


def _run_predict(cfg: RunConfig):
    p = cfg.params
    for field in ("data", "family", "x"):
        if p.get(field) is None:
            raise UsageError(f"missing required field: {field}")
    data, model = _load_dataset(p)
    x = np.asarray(p["x"], dtype=np.float64)
    sgd_cfg = _sgd_config(p, seed=_sub_seed(p["seed"], 1))
    run = run_sgd_segments(model, data, sgd_cfg)
    k_s = scaling_factor(model, run.point_estimate, data, sgd_cfg.batch)
    samples = rescale_samples(run, k_s, data.n, sgd_cfg.segment_len)
    lower, upper = prediction_interval(samples, x, p["level"])
    score = float(run.point_estimate @ x)
    return _write_json(cfg, {"score": score, "lower": lower, "upper": upper})


def _run_trend(cfg: RunConfig):
    p = cfg.params
    _fill(p, {"etas": (0.4, 0.2, 0.1), "ts": (250.0, 500.0, 1000.0),
              "runs": 2000, "n": 100, "p": 5, "batch": 1})
    ts = []
    for t in p["ts"]:
        if float(t) != int(t):
            raise UsageError(f"ts entries must be integers, got {t}")
        ts.append(int(t))
    p["ts"] = tuple(ts)
    spec = GeneratorSpec(kind=GeneratorKind.NORMAL_MEAN, n=p["n"], p=p["p"])
    data, _ = generate(spec, RngStream(p["seed"], (0,)))
    result = covariance_error_trend(
        p["etas"], p["ts"], data,
        runs_per_cell=p["runs"], master_seed=p["seed"], batch_size=p["batch"],
    )
    rows = [
        [eta, t, result.errors[i, j]]
        for i, eta in enumerate(result.etas)
        for j, t in enumerate(result.ts)
    ]
    return _write_csv(cfg, "trend.csv", "eta,t,error", rows)


def _run_fit(cfg: RunConfig):
    p = cfg.params
    _fill(p, {"tol": 1e-10, "max_iter": 100})
    if p.get("data"):
        if not p.get("family"):
            raise UsageError("missing required field: family (needed with --data)")
        data, model = _load_dataset(p)
    else:
        spec = _generator_spec(p)
        data, _ = generate(spec, RngStream(p["seed"], (0,)))
        model = model_for_kind(spec.kind)
    fit = fit_erm(model, data, tol=p["tol"], max_iter=p["max_iter"])
    return _write_json(cfg, {
        "theta_hat": list(fit.theta_hat),
        "iterations": fit.iterations,
        "final_gradient_norm": fit.final_gradient_norm,
    })


_RUNNERS = {
    "coverage": _run_coverage,
    "univariate": _run_univariate,
    "covariance": _run_covariance,
    "qq": _run_qq,
    "predict": _run_predict,
    "trend": _run_trend,
    "fit": _run_fit,
}

_METHOD_FAILURES = (
    ExperimentFailure,
    BootstrapFailure,
    DivergenceError,
    MaxIterationsError,
    NotPositiveDefiniteError,
)


def run(cfg: RunConfig) -> int:
    """Execute a resolved invocation; returns the process exit code."""
    try:
        path = _RUNNERS[cfg.subcommand](cfg)
    except UsageError as exc:
        print(f"error[config]: {exc}", file=sys.stderr)
        return 2
    except (CsvParseError, ValueError, OSError) as exc:
        print(f"error[config]: {exc}", file=sys.stderr)
        return 2
    except _METHOD_FAILURES as exc:
        print(f"error[method]: {exc}", file=sys.stderr)
        return 1
    print(path)
    return 0


def main(argv=None) -> int:
    try:
        cfg = parse_args(argv)
    except UsageError as exc:
        print(f"error[usage]: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
