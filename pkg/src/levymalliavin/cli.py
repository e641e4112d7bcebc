"""Config-driven experiment runner.

    levymalliavin {simulate,derivative,chain-check,chaos,transfer} --config cfg.json
        [--seed N] [--threads N] [--out DIR] [--samples N]

Every run writes one CSV table and ``summary.json`` into the output
directory.  The CSV starts with ``# config_hash=...`` and ``# seed=...``
lines; the hash is the SHA-256 of the canonical JSON of the effective
config (after ``--seed``/``--samples`` overrides).  Exit status is 0 iff the
suite's assertions pass, 1 on a suite failure, 2 on an invalid config.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .canonical_path import CanonicalSampler
from .chaos import coefficients_to_csv, estimate_coefficients, tuples_for_orders
from .engine import default_threads, map_chunks
from .errors import ConfigInvalid, LevyMalliavinError
from .functionals import Node, from_dict as functional_from_dict
from .levy_model import LevyTriplet, Rect, build_partition
from .malliavin import CHAIN_RULE_TOL, chain_rule_report, default_grid, derivative_field
from .transfer import IncrementSampler, backends_for, run_field_transfer_test, run_transfer_test

SUITES = ("simulate", "derivative", "chain-check", "chaos", "transfer")

_NUM = {"type": "number"}
_POS_INT = {"type": "integer", "minimum": 1}
_SEED = {"type": "integer", "minimum": 0, "maximum": 2**64 - 1}
_NODE = {"type": "object", "required": ["node"]}
_GRID = {"type": "array", "items": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}}
_RECT = {
    "type": "object",
    "additionalProperties": False,
    "required": ["s", "t", "A"],
    "properties": {"s": _NUM, "t": _NUM, "A": {"type": "array", "items": {"type": "string"}, "minItems": 1}},
}
_ORDERS = {"type": "array", "items": {"type": "integer", "minimum": 0, "maximum": 2}, "minItems": 1}


def _closed(props, required=()):
    return {"type": "object", "additionalProperties": False, "required": list(required), "properties": props}


_NU = {
    "oneOf": [
        _closed(
            {
                "type": {"const": "finite_discrete"},
                "atoms": {"type": "array", "items": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}},
            },
            ["type", "atoms"],
        ),
        _closed(
            {
                "type": {"const": "two_sided_exponential"},
                "rate_plus": _NUM,
                "scale_plus": _NUM,
                "rate_minus": _NUM,
                "scale_minus": _NUM,
            },
            ["type", "rate_plus", "scale_plus", "rate_minus", "scale_minus"],
        ),
        _closed(
            {"type": {"const": "truncated_stable"}, "alpha": _NUM, "scale": _NUM, "cutoff": _NUM, "x_max": _NUM},
            ["type", "alpha", "scale", "cutoff"],
        ),
    ]
}

CONFIG_SCHEMA = _closed(
    {
        "description": {"type": "string"},
        "triplet": _closed({"gamma": _NUM, "sigma": {"type": "number", "minimum": 0}, "nu": _NU}, ["gamma", "sigma", "nu"]),
        "partition": _closed({"K": _POS_INT, "eps_min": {"type": "number", "exclusiveMinimum": 0}}),
        "horizon": {"type": "number", "exclusiveMinimum": 0},
        "seed": _SEED,
        "functional": _NODE,
        "output_dir": {"type": "string"},
        "simulate": _closed({"n_paths": _POS_INT, "grid_points": {"type": "integer", "minimum": 2}}),
        "derivative": _closed({"n_samples": _POS_INT, "grid": _GRID, "n_times": _POS_INT, "per_sector": _POS_INT}),
        "chain_check": _closed(
            {"outer": _NODE, "inner": _NODE, "n_samples": _POS_INT, "tolerance": {"type": "number", "minimum": 0}},
            ["outer"],
        ),
        "chaos": _closed(
            {
                "boxes": {"type": "array", "items": _RECT},
                "orders": _ORDERS,
                "n_samples": _POS_INT,
                "expected": {
                    "type": "array",
                    "items": _closed(
                        {"box_ids": {"type": "array", "items": {"type": "integer", "minimum": 0}}, "value": _NUM},
                        ["box_ids", "value"],
                    ),
                },
            },
            ["boxes"],
        ),
        "transfer": _closed(
            {
                "boxes": {"type": "array", "items": _RECT},
                "orders": _ORDERS,
                "n_samples": _POS_INT,
                "field_grid": _GRID,
                "rate_scale": {"type": "number", "exclusiveMinimum": 0},
            },
            ["boxes"],
        ),
    },
    ["triplet", "horizon"],
)

DEFAULTS = {
    "partition": {"K": 8, "eps_min": 1e-3},
    "seed": 0,
    "output_dir": "out",
    "simulate": {"n_paths": 10, "grid_points": 100},
    "derivative": {"n_samples": 10000, "n_times": 4, "per_sector": 3},
    "chain_check": {"n_samples": 10000, "tolerance": CHAIN_RULE_TOL},
    "chaos": {"orders": [0, 1, 2], "n_samples": 100000, "expected": []},
    "transfer": {"orders": [0, 1, 2], "n_samples": 100000, "rate_scale": 1.0},
}

_SAMPLE_KEY = {
    "simulate": "n_paths",
    "derivative": "n_samples",
    "chain-check": "n_samples",
    "chaos": "n_samples",
    "transfer": "n_samples",
}


def _block(suite: str) -> str:
    return suite.replace("-", "_")


def validate_config(doc) -> None:
    """Raise ConfigInvalid listing every schema violation (required keys are named)."""
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        lines = []
        for e in errors:
            where = "/".join(map(str, e.absolute_path)) or "<root>"
            lines.append(f"{where}: {e.message}")
        raise ConfigInvalid("invalid config:\n  " + "\n  ".join(lines))


@dataclass
class ExperimentConfig:
    triplet: LevyTriplet
    horizon: float
    K: int = 8
    eps_min: float = 1e-3
    seed: int = 0
    functional: Node | None = None
    output_dir: str = "out"
    description: str = ""
    suites: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        validate_config(doc)
        part = {**DEFAULTS["partition"], **doc.get("partition", {})}
        suites = {}
        for name in ("simulate", "derivative", "chain_check", "chaos", "transfer"):
            if name in doc:
                suites[name] = {**DEFAULTS[name], **copy.deepcopy(doc[name])}
        try:
            triplet = LevyTriplet.from_dict(doc["triplet"])
            functional = functional_from_dict(doc["functional"]) if "functional" in doc else None
            for block in ("chain_check",):
                if block in suites:
                    for key in ("outer", "inner"):
                        if key in suites[block]:
                            functional_from_dict(suites[block][key])
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigInvalid(f"invalid config: {exc}") from exc
        return cls(
            triplet=triplet,
            horizon=float(doc["horizon"]),
            K=int(part["K"]),
            eps_min=float(part["eps_min"]),
            seed=int(doc.get("seed", DEFAULTS["seed"])),
            functional=functional,
            output_dir=doc.get("output_dir", DEFAULTS["output_dir"]),
            description=doc.get("description", ""),
            suites=suites,
        )

    def to_dict(self) -> dict:
        """Canonical form: every default filled in."""
        d = {
            "triplet": self.triplet.to_dict(),
            "horizon": self.horizon,
            "partition": {"K": self.K, "eps_min": self.eps_min},
            "seed": self.seed,
            "output_dir": self.output_dir,
        }
        if self.description:
            d["description"] = self.description
        if self.functional is not None:
            d["functional"] = self.functional.to_dict()
        d.update(copy.deepcopy(self.suites))
        return d

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def suite(self, name: str) -> dict:
        block = _block(name)
        if block not in self.suites and block in ("chain_check", "chaos", "transfer"):
            raise ConfigInvalid(f"suite {name!r} needs the {block!r} key")
        if block not in self.suites:
            self.suites[block] = copy.deepcopy(DEFAULTS.get(block, {}))
        return self.suites[block]

    def require_functional(self, suite: str) -> Node:
        if self.functional is None:
            raise ConfigInvalid(f"suite {suite!r} needs the 'functional' key")
        return self.functional

    def partition(self, allow_empty=False):
        return build_partition(self.triplet.nu, self.K, self.eps_min, allow_empty=allow_empty)


def load_config(path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"config {path} is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(doc)


# ---------------------------------------------------------------------------
# suites: each returns (csv_name, csv_text, passed, metrics, failing_row_or_None)
# ---------------------------------------------------------------------------


def _header(cfg: ExperimentConfig):
    return [f"config_hash={cfg.config_hash()}", f"seed={cfg.seed}"]


def run_simulate(cfg, threads):
    block = cfg.suite("simulate")
    partition = cfg.partition(allow_empty=True)
    sampler = CanonicalSampler(cfg.triplet, partition, cfg.horizon)
    grid = np.linspace(0.0, cfg.horizon, block["grid_points"])

    def chunk(batch):
        return np.stack([batch.path_values(cfg.triplet, t) for t in grid], axis=1)

    parts = map_chunks(sampler, block["n_paths"], cfg.seed, chunk, threads)
    paths = np.concatenate(parts, axis=0)
    lines = [f"# {h}" for h in _header(cfg)] + ["path_id,t,value"]
    for i, row in enumerate(paths):
        lines.extend(f"{i},{t!r},{float(x)!r}" for t, x in zip(grid.tolist(), row))
    passed = bool(np.all(np.isfinite(paths)))
    metrics = {"n_paths": int(len(paths)), "grid_points": int(len(grid)), "mean_terminal": float(paths[:, -1].mean())}
    return "paths.csv", "\n".join(lines) + "\n", passed, metrics, None


def run_derivative(cfg, threads):
    block = cfg.suite("derivative")
    F = cfg.require_functional("derivative")
    partition = cfg.partition()
    sampler = CanonicalSampler(cfg.triplet, partition, cfg.horizon)
    if "grid" in block:
        grid = np.asarray(block["grid"], dtype=float).reshape(-1, 2)
    else:
        grid = default_grid(partition, cfg.horizon, block["n_times"], block["per_sector"])
    fld = derivative_field(F, sampler, grid, block["n_samples"], cfg.seed, threads)
    finite = np.isfinite(fld.mean) & np.isfinite(fld.stderr)
    failing = None
    if not finite.all():
        j = int(np.flatnonzero(~finite)[0])
        failing = f"non-finite derivative at r={float(fld.r[j])!r}, v={float(fld.v[j])!r}"
    metrics = {
        "grid_points": int(len(fld.r)),
        "n_samples": fld.n_samples,
        "max_stderr": float(fld.stderr.max()) if len(fld.r) else 0.0,
    }
    return "derivative.csv", fld.to_csv(_header(cfg)), failing is None, metrics, failing


def run_chain_check(cfg, threads):
    block = cfg.suite("chain-check")
    G = functional_from_dict(block["outer"])
    if "inner" in block:
        F = functional_from_dict(block["inner"])
    else:
        F = cfg.require_functional("chain-check")
    sampler = CanonicalSampler(cfg.triplet, cfg.partition(), cfg.horizon)
    rep = chain_rule_report(G, F, sampler, block["n_samples"], cfg.seed, threads)
    tol = block["tolerance"]
    err = rep.abs_err
    passed = bool(np.all(err <= tol))
    failing = None
    if not passed:
        j = rep.worst_row()
        failing = (
            f"sample {int(rep.sample_id[j])}: r={float(rep.r[j])!r} v={float(rep.v[j])!r} "
            f"lhs={float(rep.lhs[j])!r} rhs1={float(rep.rhs1[j])!r} rhs2={float(rep.rhs2[j])!r} "
            f"abs_err={float(err[j])!r}"
        )
    metrics = {**rep.summary(), "tolerance": tol}
    return "chain_rule.csv", rep.to_csv(_header(cfg)), passed, metrics, failing


def _boxes(block):
    return [Rect.from_dict(b) for b in block["boxes"]]


def run_chaos(cfg, threads):
    block = cfg.suite("chaos")
    F = cfg.require_functional("chaos")
    boxes = _boxes(block)
    sampler = CanonicalSampler(cfg.triplet, cfg.partition(), cfg.horizon)
    tuples = tuples_for_orders(len(boxes), block["orders"])
    coeffs = estimate_coefficients(F, boxes, tuples, sampler, block["n_samples"], cfg.seed, threads)
    by_ids = {c.box_ids: c for c in coeffs}
    failing = None
    checked = 0
    for exp in block["expected"]:
        key = tuple(sorted(exp["box_ids"]))
        c = by_ids.get(key)
        if c is None:
            failing = f"expected coefficient for boxes {list(key)} was not estimated"
            break
        checked += 1
        tol = 3.0 * c.stderr + 1e-12 * max(1.0, abs(exp["value"]))
        if not abs(c.estimate - exp["value"]) <= tol:
            failing = f"boxes {list(key)}: estimate {c.estimate!r} vs expected {exp['value']!r} (stderr {c.stderr!r})"
            break
    if failing is None and not all(math.isfinite(c.estimate) for c in coeffs):
        failing = "non-finite coefficient estimate"
    metrics = {"coefficients": len(coeffs), "checked": checked, "n_samples": block["n_samples"]}
    return "chaos.csv", coefficients_to_csv(coeffs, _header(cfg)), failing is None, metrics, failing


def run_transfer(cfg, threads):
    block = cfg.suite("transfer")
    F = cfg.require_functional("transfer")
    boxes = _boxes(block)
    partition = cfg.partition()
    b1, b2 = backends_for(cfg.triplet, partition, cfg.horizon)
    if block["rate_scale"] != 1.0:
        b2 = IncrementSampler(cfg.triplet, partition, cfg.horizon, b2.brownian_steps, block["rate_scale"])
    seeds = (cfg.seed, cfg.seed)  # backends draw from disjoint stream ids
    common = dict(backends=(b1, b2), threads=threads)
    if "field_grid" in block:
        grid = np.asarray(block["field_grid"], dtype=float).reshape(-1, 2)
        rep = run_field_transfer_test(
            F, cfg.triplet, partition, cfg.horizon, grid, boxes, block["orders"], block["n_samples"], seeds, **common
        )
    else:
        rep = run_transfer_test(
            F, cfg.triplet, partition, cfg.horizon, boxes, block["orders"], block["n_samples"], seeds, **common
        )
    failing = None
    if not rep.passed:
        worst = max(rep.rows, key=lambda r: r.z)
        failing = f"order {worst.order} boxes {list(worst.box_ids)}: c1={worst.c1!r} c2={worst.c2!r} z={worst.z:.3f}"
    return "transfer.csv", rep.to_csv(_header(cfg)), rep.passed, rep.summary(), failing


RUNNERS = {
    "simulate": run_simulate,
    "derivative": run_derivative,
    "chain-check": run_chain_check,
    "chaos": run_chaos,
    "transfer": run_transfer,
}


def run(suite: str, config_path, seed=None, threads=None, out=None, samples=None) -> int:
    """Run one suite; returns the process exit status."""
    cfg = load_config(config_path)
    if seed is not None:
        cfg.seed = int(seed)
    if samples is not None:
        cfg.suite(suite)[_SAMPLE_KEY[suite]] = int(samples)
    threads = threads or default_threads()
    out_dir = Path(out or cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    name, text, passed, metrics, failing = RUNNERS[suite](cfg, threads)
    (out_dir / name).write_text(text)
    summary = {"suite": suite, "pass": bool(passed), "metrics": metrics, "config_hash": cfg.config_hash(), "seed": cfg.seed}
    (out_dir / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    if not passed:
        print(f"{suite}: FAIL {failing or ''}".rstrip(), file=sys.stderr)
        return 1
    print(f"{suite}: pass ({out_dir / name})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="levymalliavin", description="Malliavin calculus experiments for Levy processes")
    sub = parser.add_subparsers(dest="suite", required=True)
    for suite in SUITES:
        p = sub.add_parser(suite)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
        p.add_argument("--threads", type=int, default=None, help="worker threads (default: available cores)")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--samples", type=int, default=None, help="sample count override")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return run(args.suite, args.config, args.seed, args.threads, args.out, args.samples)
    except ConfigInvalid as exc:
        print(f"ConfigInvalid: {exc}", file=sys.stderr)
        return 2
    except LevyMalliavinError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
