"""arc-audit command line.

Every subcommand reads a JSON config (``--config``), fills defaults, validates
it against a schema that rejects unknown keys, and writes a single JSON
report that embeds the resolved config.

Exit codes: 0 success, 1 audit FAIL, 2 invalid input, 3 internal error.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
import time

import jsonschema
import numpy as np

from . import __version__
from .attack import AttackSpec
from .bounds import bound_report, thm1_bound, thm2_bound, thm3_lower_bound, thm4_multiclass_bound
from .covering import (chain_for_class, class_diameter, dudley_integral, optimal_delta,
                       robustified_class_cover_log)
from .data import Dataset, equal_entries_dataset, gaussian_blobs, read_csv, tradeoff_blobs, write_csv
from .experiment import ExperimentConfig, plot_data, run_experiment
from .linalg import InvalidInput
from .network import MLP
from .rademacher import FunctionClassSpec, SupBudget, estimate_arc, estimate_arc_multiclass, estimate_rc
from .train import TrainConfig

MAX_ESTIMATE_PARAMS = 60

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_INTERNAL = 0, 1, 2, 3

# -- schemas ----------------------------------------------------------------------

_exponent = {"anyOf": [{"type": "number", "minimum": 1}, {"enum": ["inf"]}]}
_num = {"type": "number"}
_pos_int = {"type": "integer", "minimum": 1}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


GENERATE = _obj({
    "kind": {"enum": ["blobs", "tradeoff", "thm3"]}, "n": _pos_int, "d": _pos_int, "K": {"type": "integer", "minimum": 2},
    "separation": _num, "noise": {"type": "number", "minimum": 0}, "B": {"type": ["number", "null"], "minimum": 0},
    "p": _exponent, "seed": {"type": "integer", "minimum": 0}, "labels": {"enum": ["random", "positive", "signed", "index"]},
    "robust_mean": _num, "weak_mean": {"type": "number"}, "weak_dims": {"type": "integer", "minimum": 0},
    "weak_scale": _num,
    "output": {"type": "string"},
}, ["kind", "n", "d"])

DATA = {"oneOf": [_obj({"path": {"type": "string"}}, ["path"]), _obj({"generate": GENERATE}, ["generate"])]}

CLASS = _obj({
    "dims": {"type": "array", "items": _pos_int, "minItems": 2},
    "norm": {"enum": ["frobenius", "one_inf"]},
    "budgets": {"type": "array", "items": {"type": "number", "minimum": 0}},
    "activation": {"anyOf": [{"enum": ["relu", "identity"]},
                             _obj({"kind": {"enum": ["relu", "identity", "leaky_relu"]}, "slope": _num}, ["kind"])]},
}, ["dims", "budgets"])

ATTACK = _obj({
    "p": _exponent, "epsilon": {"type": "number", "minimum": 0}, "solver": {"enum": ["grid", "pgd"]},
    "resolution": {"type": "integer", "minimum": 2}, "steps": _pos_int,
    "step_size": {"type": ["number", "null"]}, "restarts": _pos_int, "seed": {"type": "integer", "minimum": 0},
})

BUDGET = _obj({"restarts": {"type": "integer", "minimum": 0}, "steps": {"type": "integer", "minimum": 0},
               "random_samples": _pos_int, "step_size": _num})

ESTIMATE_PROPS = {
    "class": CLASS, "data": DATA, "attack": ATTACK, "kind": {"enum": ["rc", "arc", "arc_multiclass"]},
    "gamma": {"type": ["number", "null"]}, "draws": _pos_int, "sup_budget": BUDGET,
    "seed": {"type": "integer", "minimum": 0}, "threads": _pos_int,
}

SCHEMAS = {
    "gen-data": GENERATE,
    "bounds": _obj({
        "class": CLASS, "data": DATA, "B": {"type": "number", "minimum": 0}, "n": _pos_int,
        "epsilon": {"type": "number", "minimum": 0}, "p": _exponent, "gamma": {"type": ["number", "null"]},
        "multiclass": {"type": "boolean"}, "model": {"type": ["string", "null"]}, "mode": {"enum": ["std", "adv"]},
    }, ["class"]),
    "estimate": _obj(ESTIMATE_PROPS, ["class", "data"]),
    "audit": _obj({**ESTIMATE_PROPS, "theorems": {"type": "array", "items": {"enum": ["thm1", "thm2", "thm4"]}},
                   "debug_divide_bound": {"type": "boolean"}, "thm3_construction": {"type": ["boolean", "null"]}},
                  ["class", "data"]),
    "experiment": _obj({
        "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "n_train": _pos_int, "n_test": _pos_int, "d": _pos_int, "separation": _num, "noise": _num,
        "data": {"enum": ["tradeoff", "blobs"]}, "robust_mean": _num, "weak_mean": {"type": "number"}, "weak_dims": {"type": "integer", "minimum": 0},
        "weak_scale": _num,
        "hidden": {"type": "array", "items": _pos_int},
        "train": _obj({
            "epochs": {"type": "integer", "minimum": 0},
            "lr_schedule": {"type": "array", "items": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}},
            "weight_decay": {"type": "number", "minimum": 0}, "batch_size": _pos_int,
            "loss": {"enum": ["logistic", "cross_entropy"]}, "attack": ATTACK,
        }),
        "ablation_weight_decay": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "percentile": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 100},
        "train_path": {"type": ["string", "null"]}, "test_path": {"type": ["string", "null"]},
    }),
    "covering": _obj({
        "class": CLASS, "B": {"type": "number", "minimum": 0}, "epsilon": {"type": "number", "minimum": 0},
        "p": _exponent, "n": _pos_int, "cover_eps": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "delta": {"anyOf": [{"enum": ["zero", "optimal", "root_n"]}, {"type": "number", "minimum": 0}]},
    }, ["class"]),
}

DEFAULTS = {
    "gen-data": {"K": 2, "separation": 2.0, "noise": 1.0, "B": None, "p": 2, "seed": 0, "labels": "random",
                 "robust_mean": 1.5, "weak_mean": 0.08, "weak_dims": 4, "weak_scale": 0.1},
    "bounds": {"B": None, "n": None, "epsilon": 0.1, "p": 2, "gamma": None, "multiclass": False, "model": None,
               "mode": "adv"},
    "estimate": {"kind": "arc", "gamma": None, "draws": 200, "seed": 0, "threads": 1,
                 "attack": {"p": "inf", "epsilon": 0.1, "solver": "grid", "resolution": 101, "steps": 20,
                            "step_size": None, "restarts": 5, "seed": 0},
                 "sup_budget": {"restarts": 10, "steps": 200, "random_samples": 500, "step_size": 0.2}},
    "experiment": {"seeds": list(range(10)), "n_train": 200, "n_test": 5000, "d": 10, "data": "tradeoff",
                   "separation": 4.0, "noise": 1.0, "robust_mean": 1.5, "weak_mean": 0.08, "weak_dims": 4, "weak_scale": 0.1,
                   "hidden": [128, 128],
                   "train": {"epochs": 200, "lr_schedule": [[0, 0.1], [100, 0.01], [150, 0.001]],
                             "weight_decay": 5e-4, "batch_size": 32, "loss": "cross_entropy",
                             "attack": {"p": "inf", "epsilon": 0.1, "steps": 20, "step_size": None,
                                        "restarts": 1}},
                   "ablation_weight_decay": [0.0, 0.01], "percentile": 5.0, "train_path": None, "test_path": None},
    "covering": {"B": 1.0, "epsilon": 0.1, "p": 2, "n": 100, "cover_eps": [], "delta": "zero"},
}
DEFAULTS["audit"] = {**copy.deepcopy(DEFAULTS["estimate"]), "debug_divide_bound": False, "thm3_construction": None}


def _merge(defaults, cfg):
    out = copy.deepcopy(defaults)
    for k, v in cfg.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def resolve_config(command: str, cfg: dict) -> dict:
    """Validate against the command schema (unknown keys rejected) and fill defaults."""
    try:
        jsonschema.validate(cfg, SCHEMAS[command])
    except jsonschema.ValidationError as exc:
        path = "/".join(str(x) for x in exc.absolute_path) or "<root>"
        raise InvalidInput(f"config error at {path}: {exc.message}") from None
    return _merge(DEFAULTS.get(command, {}), cfg)


# -- builders ---------------------------------------------------------------------

def build_class(obj) -> FunctionClassSpec:
    return FunctionClassSpec.from_json(obj)


def build_attack(obj) -> AttackSpec:
    return AttackSpec(p=obj["p"], epsilon=obj["epsilon"], steps=obj["steps"], step_size=obj["step_size"],
                      restarts=obj["restarts"], solver=obj["solver"], resolution=obj["resolution"], seed=obj["seed"])


def generate(obj) -> Dataset:
    g = _merge(DEFAULTS["gen-data"], obj)
    signed = g["labels"] != "index"
    if g["kind"] == "blobs":
        return gaussian_blobs(g["n"], g["d"], g["K"], separation=g["separation"], noise=g["noise"],
                              B=g["B"], p=g["p"], seed=g["seed"], signed=signed)
    if g["kind"] == "tradeoff":
        return tradeoff_blobs(g["n"], g["d"], robust_mean=g["robust_mean"], weak_mean=g["weak_mean"],
                              weak_dims=g["weak_dims"], weak_scale=g["weak_scale"], seed=g["seed"], signed=signed)
    labels = "positive" if g["labels"] == "positive" else "random"
    B = 1.0 if g["B"] is None else g["B"]
    return equal_entries_dataset(g["n"], g["d"], B, g["p"], g["seed"], labels)


def load_data(obj) -> Dataset:
    if "path" in obj:
        return read_csv(obj["path"])
    return generate(obj["generate"])


def _is_thm3_data(cfg) -> bool:
    flag = cfg.get("thm3_construction")
    if flag is not None:
        return bool(flag)
    return "generate" in cfg["data"] and cfg["data"]["generate"]["kind"] == "thm3"


# -- commands -------------------------------------------------------------------------

def cmd_gen_data(cfg: dict, out_dir: str) -> dict:
    data = generate(cfg)
    # relative output paths land under --out
    path = os.path.join(out_dir, cfg.get("output") or "data.csv")
    write_csv(data, path)
    return {"path": path, "n": data.n, "d": data.d, "B": data.B(cfg["p"]), "config": cfg}


def cmd_bounds(cfg: dict) -> dict:
    cls = build_class(cfg["class"])
    B, n = cfg["B"], cfg["n"]
    if "data" in cfg:
        data = load_data(cfg["data"])
        if data.d != cls.dims[0]:
            raise InvalidInput(f"data dimension {data.d} does not match class input {cls.dims[0]}")
        B = data.B(cfg["p"]) if B is None else B
        n = data.n if n is None else n
    if B is None or n is None:
        raise InvalidInput("bounds need B and n, given directly or through a dataset")
    if cfg["multiclass"] and cfg["gamma"] is None:
        raise InvalidInput("the multi-class bound needs gamma")
    net = MLP.load(cfg["model"]) if cfg["model"] else None
    if net is not None and net.dims != list(cls.dims):
        raise InvalidInput("model dims do not match the class")
    rep = bound_report(cls, B, cfg["epsilon"], cfg["p"], n, gamma=cfg["gamma"], multiclass=cfg["multiclass"],
                       net=net, mode=cfg["mode"])
    return {**rep.to_json(), "B": B, "n": n, "config": cfg}


def _run_estimate(cfg: dict, threads: int):
    cls = build_class(cfg["class"])
    if cls.n_params > MAX_ESTIMATE_PARAMS:
        raise InvalidInput(f"class has {cls.n_params} parameters; the sup search is limited to "
                           f"{MAX_ESTIMATE_PARAMS}. Reduce the hidden widths or the depth.")
    data = load_data(cfg["data"])
    budget = SupBudget(**cfg["sup_budget"])
    attack = build_attack(cfg["attack"])
    kw = dict(draws=cfg["draws"], budget=budget, seed=cfg["seed"], threads=threads)
    if cfg["kind"] == "rc":
        est = estimate_rc(cls, data, gamma=cfg["gamma"], **kw)
    elif cfg["kind"] == "arc":
        est = estimate_arc(cls, data, attack, gamma=cfg["gamma"], **kw)
    else:
        if cfg["gamma"] is None:
            raise InvalidInput("multi-class estimation needs gamma")
        est = estimate_arc_multiclass(cls, data, attack, cfg["gamma"], **kw)
    return cls, data, attack, est


def cmd_estimate(cfg: dict, out_dir: str, trace: bool, threads: int) -> dict:
    _, _, _, est = _run_estimate(cfg, max(threads, cfg["threads"]))
    report = {"estimate": est.to_json(), "config": cfg}
    if trace:
        path = os.path.join(out_dir, "estimate_trace.csv")
        est.write_trace(path)
        report["trace"] = path
    return report


def audit_verdicts(mean: float, stderr: float, bounds: dict, lower: float | None) -> dict:
    """PASS iff mean + 3 stderr <= bound; for the lower bound, mean + 3 stderr >= lower."""
    out = {name: ("PASS" if mean + 3 * stderr <= b else "FAIL") for name, b in bounds.items()}
    if lower is not None:
        out["thm3_lower"] = "PASS" if mean + 3 * stderr >= lower else "FAIL"
    return out


def cmd_audit(cfg: dict, out_dir: str, trace: bool, threads: int) -> tuple[dict, bool]:
    cls, data, attack, est = _run_estimate(cfg, max(threads, cfg["threads"]))
    eps = attack.epsilon if cfg["kind"] != "rc" else 0.0
    p = attack.p
    B, n = data.B(p), data.n
    theorems = cfg.get("theorems")
    if not theorems:
        if cfg["kind"] == "arc_multiclass":
            theorems = ["thm4"]
        else:
            theorems = ["thm1"] + (["thm2"] if cls.norm_kind.name == "one_inf" else [])
    scale = 1000.0 if cfg["debug_divide_bound"] else 1.0
    bounds = {}
    for t in theorems:
        if t == "thm1":
            bounds[t] = thm1_bound(cls, B, eps, p, n) / scale
        elif t == "thm2":
            bounds[t] = thm2_bound(cls, B, eps, p, n) / scale
        else:
            if cfg["gamma"] is None:
                raise InvalidInput("thm4 needs gamma")
            bounds[t] = thm4_multiclass_bound(cls, B, eps, p, n, cfg["gamma"]) / scale
    lower = thm3_lower_bound(cls, B, eps, p, n) if _is_thm3_data(cfg) else None
    verdicts = audit_verdicts(est.mean, est.stderr, bounds, lower)
    report = {"config": cfg, "estimate": est.to_json(), "bounds": bounds, "thm3_lower": lower,
              "B": B, "n": n, "verdicts": verdicts, "pass": all(v == "PASS" for v in verdicts.values())}
    if trace:
        path = os.path.join(out_dir, "audit_trace.csv")
        est.write_trace(path)
        report["trace"] = path
    return report, report["pass"]


def cmd_experiment(cfg: dict, out_dir: str, trace: bool) -> dict:
    t = cfg["train"]
    a = t["attack"]
    attack = AttackSpec(p=a["p"], epsilon=a["epsilon"], steps=a["steps"], step_size=a["step_size"],
                        restarts=a["restarts"])
    tcfg = TrainConfig(epochs=t["epochs"], lr_schedule=tuple(tuple(x) for x in t["lr_schedule"]),
                       weight_decay=t["weight_decay"], batch_size=t["batch_size"], attack=attack, loss=t["loss"])
    ecfg = ExperimentConfig(seeds=tuple(cfg["seeds"]), n_train=cfg["n_train"], n_test=cfg["n_test"], d=cfg["d"],
                            data=cfg["data"], separation=cfg["separation"], noise=cfg["noise"],
                            robust_mean=cfg["robust_mean"], weak_mean=cfg["weak_mean"], weak_dims=cfg["weak_dims"],
                            weak_scale=cfg["weak_scale"], hidden=tuple(cfg["hidden"]),
                            train=tcfg, ablation_weight_decay=tuple(cfg["ablation_weight_decay"]),
                            percentile=cfg["percentile"], trace=trace)
    tr = te = None
    if cfg["train_path"] or cfg["test_path"]:
        if not (cfg["train_path"] and cfg["test_path"]):
            raise InvalidInput("give both train_path and test_path")
        tr, te = read_csv(cfg["train_path"]), read_csv(cfg["test_path"])
    summary = run_experiment(ecfg, tr, te)
    report = {**summary.to_json(), "config": cfg}
    if trace:
        path = os.path.join(out_dir, "plot_data.dat")
        plot_data(summary.results, path)
        report["plot_data"] = path
    return report


def cmd_covering(cfg: dict) -> dict:
    cls = build_class(cfg["class"])
    B, eps, p, n = cfg["B"], cfg["epsilon"], cfg["p"], cfg["n"]
    chain = chain_for_class(cls, B, eps, p, n)
    delta = cfg["delta"]
    if delta == "zero":
        delta = 0.0
    elif delta == "root_n":
        delta = chain.diameter_D / math.sqrt(n)
    elif delta == "optimal":
        delta = optimal_delta(chain)
    value = dudley_integral(chain, delta) if chain.diameter_D > 0 and delta < chain.diameter_D / 2 else 8.0 * delta
    return {"diameter_D": class_diameter(cls, B, eps, p),
            "cover_log": {str(c): robustified_class_cover_log(cls, B, eps, p, c) for c in cfg["cover_eps"]},
            "delta": delta, "dudley_value": value, "thm1_frobenius": thm1_bound(cls, B, eps, p, n),
            "config": cfg}


# -- entry point ---------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="arc-audit", description="Adversarial Rademacher complexity audits.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("gen-data", "bounds", "estimate", "audit", "experiment", "covering"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON config file")
        sp.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--trace", action="store_true", help="write per-draw / per-epoch traces")
        sp.add_argument("--threads", type=int, default=1)
    sub.add_parser("version")
    return ap


def _seed_override(command, cfg, seed):
    if seed is None:
        return cfg
    if command == "experiment":
        cfg["seeds"] = [seed]
    elif command in ("gen-data", "estimate", "audit"):
        cfg["seed"] = seed
    return cfg


def run(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "version":
        print(__version__)
        return EXIT_OK
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise InvalidInput("config must be a JSON object")
        cfg = _seed_override(args.command, resolve_config(args.command, raw), args.seed)
        if args.threads < 1:
            raise InvalidInput("--threads must be >= 1")
        os.makedirs(args.out, exist_ok=True)
        started = time.time()
        passed = True
        if args.command == "gen-data":
            report = cmd_gen_data(cfg, args.out)
        elif args.command == "bounds":
            report = cmd_bounds(cfg)
        elif args.command == "estimate":
            report = cmd_estimate(cfg, args.out, args.trace, args.threads)
        elif args.command == "audit":
            report, passed = cmd_audit(cfg, args.out, args.trace, args.threads)
        elif args.command == "experiment":
            report = cmd_experiment(cfg, args.out, args.trace)
        else:
            report = cmd_covering(cfg)
        report["runtime"] = {"seconds": time.time() - started, "version": __version__}
        text = json.dumps(report, indent=2, sort_keys=True, default=_json_default)
        with open(os.path.join(args.out, f"{args.command}_report.json"), "w") as fh:
            fh.write(text + "\n")
        print(text)
        return EXIT_OK if passed else EXIT_FAIL
    except (InvalidInput, FileNotFoundError, IsADirectoryError, PermissionError, json.JSONDecodeError) as exc:
        print(f"arc-audit: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        print(f"arc-audit: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj).__name__}")


def main() -> None:
    sys.exit(run())
