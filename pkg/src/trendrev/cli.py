"""Command-line front end.

Every command writes exactly one output file plus a `<out>.manifest.json`
sidecar recording the command, the fully resolved configuration, sha256
digests of all inputs and of the output, the seed, the tool version, and a
timestamp. Reruns with the same command line on the same inputs reproduce
the output byte for byte (the timestamp lives only in the manifest).
Failures print a single `error: ...` line on stderr and leave no partial
files behind.

All randomness flows from `--seed`; commands with several stochastic parts
derive one sub-seed per component name, so adding a component never shifts
another's stream.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import os
import sys
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .explore import bin_curve, heatmap
from .inference import (
    ModelSpec,
    bootstrap,
    cross_validate,
    derive_seed,
    sensitivity_sweep,
)
from .market_data import (
    panel_from_prices,
    read_database,
    read_prices,
    write_database,
    write_prices,
    PriceSeries,
)
from .models import critical_strength
from .simulator import SimConfig, default_assignment, simulate_panel
from .trend import build_signal_database, default_specs

_MODEL_FLAGS = {
    "cubic": ModelSpec(kind="cubic", powers=(0, 1, 3)),
    "scale": ModelSpec(kind="scale"),
    "decay": ModelSpec(kind="decay", scenario="linear"),
    "decay-exp": ModelSpec(kind="decay", scenario="exponential"),
}


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _emit(args, text: str, config: Dict, inputs: Sequence[str]) -> None:
    """Write the output and its manifest sidecar atomically."""
    _atomic_write(args.out, text)
    _write_manifest(args, config, inputs)


def _parse_scales(text: Optional[str]):
    if text is None:
        return None
    ks: List[int] = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part[1:]:
            a, b = part.split("-", 1)
            ks.extend(range(int(a), int(b) + 1))
        else:
            ks.append(int(part))
    return tuple(ks)


def _parse_mask(text: Optional[str]):
    if text is None:
        return None
    a, b = text.split(":", 1)
    return (a, b)


def _read_market_scales(path: str) -> Dict[str, int]:
    out: Dict[str, int] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        header = fh.readline().strip().split(",")
        if header != ["market", "scale_k"]:
            raise ValueError(f"{path}: expected header market,scale_k")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            m, k = line.split(",", 1)
            out[m] = int(k)
    return out


def _model_spec(args) -> ModelSpec:
    spec = _MODEL_FLAGS[args.model]
    scales = _parse_scales(getattr(args, "scales", None))
    ms_path = getattr(args, "market_scales", None)
    market_scales = _read_market_scales(ms_path) if ms_path else None
    if scales is not None or market_scales is not None:
        spec = ModelSpec(
            kind=spec.kind,
            powers=spec.powers,
            scales=scales,
            market_scales=market_scales,
            scenario=spec.scenario,
        )
    return spec


def _load_panel(args):
    series = read_prices(args.prices)
    return panel_from_prices(series, _parse_mask(getattr(args, "mask", None)))


def _config_of(args, keys: Sequence[str]) -> Dict:
    return {k: getattr(args, k) for k in keys}


# ---------------------------------------------------------------------------
# command bodies
# ---------------------------------------------------------------------------


def _cmd_ingest(args) -> None:
    panel = _load_panel(args)
    lines = ["date,market,raw,normalized,excess"]
    for j, m in enumerate(panel.markets):
        for i in range(panel.n_days):
            lines.append(
                f"{panel.dates[i]},{m},{_fmt(panel.raw[i, j])},"
                f"{_fmt(panel.normalized[i, j])},{_fmt(panel.excess[i, j])}"
            )
    _emit(args, "\n".join(lines) + "\n", _config_of(args, ["prices", "mask"]), [args.prices])


def _write_manifest(args, config: Dict, inputs: Sequence[str]) -> None:
    manifest = {
        "command": args.command,
        "config": {k: config[k] for k in sorted(config)},
        "inputs": {p: _sha256(p) for p in inputs},
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "output": {args.out: _sha256(args.out)},
    }
    _atomic_write(args.out + ".manifest.json", json.dumps(manifest, indent=2) + "\n")


def _cmd_signals(args) -> None:
    panel = _load_panel(args)
    db = build_signal_database(panel, default_specs(cap=args.cap), burn_in=args.burn_in)
    write_database(db, args.out)
    _write_manifest(args, _config_of(args, ["prices", "mask", "cap", "burn_in"]), [args.prices])


def _fit_document(db, spec: ModelSpec) -> Dict:
    from .inference import _model_rows, _point_fit

    y, phi, k, _, t = _model_rows(db, spec)
    fit = _point_fit(spec, y, phi, k, t)
    doc = fit.to_dict()
    doc["model"] = spec.kind if spec.scenario == "linear" else "decay-exp"
    if spec.kind == "scale" and not fit.degenerate:
        phi_c = critical_strength(fit.b, fit.c)
        doc["critical_strength"] = phi_c if phi_c is not None else float("nan")
    return doc


def _inputs_of(args) -> List[str]:
    paths = [getattr(args, "db", None), getattr(args, "prices", None),
             getattr(args, "market_scales", None)]
    return [p for p in paths if p]


def _cmd_fit(args) -> None:
    db = read_database(args.db)
    doc = _fit_document(db, _model_spec(args))
    _emit(
        args,
        json.dumps(doc, indent=2, sort_keys=True) + "\n",
        _config_of(args, ["db", "model", "scales", "market_scales"]),
        _inputs_of(args),
    )


def _cmd_bootstrap(args) -> None:
    db = read_database(args.db)
    bs = bootstrap(db, _model_spec(args), n_samples=args.samples, seed=args.seed)
    _emit(
        args,
        json.dumps(bs.to_dict(), indent=2, sort_keys=True) + "\n",
        _config_of(args, ["db", "model", "scales", "market_scales", "samples", "seed"]),
        _inputs_of(args),
    )


def _cmd_cv(args) -> None:
    panel = _load_panel(args)
    cv = cross_validate(
        panel,
        _model_spec(args),
        n_folds=args.folds,
        trend_specs=default_specs(cap=args.cap),
        burn_in=args.burn_in,
    )
    _emit(
        args,
        json.dumps(cv.to_dict(), indent=2, sort_keys=True) + "\n",
        _config_of(args, ["prices", "mask", "model", "scales", "folds", "cap", "burn_in"]),
        [args.prices],
    )


def _cmd_bins(args) -> None:
    db = read_database(args.db)
    curve = bin_curve(db, n_bins=args.n_bins, scales=_parse_scales(args.scales))
    lines = ["bin,left_edge,right_edge,count,mean_phi,mean_return"]
    edges = [float("-inf")] + list(curve.edges) + [float("inf")]
    for i in range(curve.n_bins):
        lines.append(
            f"{i},{_fmt(edges[i])},{_fmt(edges[i + 1])},{int(curve.count[i])},"
            f"{_fmt(curve.mean_phi[i])},{_fmt(curve.mean_return[i])}"
        )
    _emit(
        args,
        "\n".join(lines) + "\n",
        _config_of(args, ["db", "n_bins", "scales"]),
        [args.db],
    )


def _cmd_heatmap(args) -> None:
    db = read_database(args.db)
    hm = heatmap(db)
    lines = ["bin,scale_k,count,mean_return,smoothed"]
    for i in range(hm.values.shape[0]):
        for j, k in enumerate(hm.scale_ks):
            lines.append(
                f"{i},{k},{int(hm.counts[i, j])},"
                f"{_fmt(hm.values[i, j])},{_fmt(hm.smoothed[i, j])}"
            )
    _emit(args, "\n".join(lines) + "\n", _config_of(args, ["db"]), [args.db])


def _cmd_simulate(args) -> None:
    feedback_scales = _parse_scales(args.feedback_scales) or (2, 6, 10)
    markets = tuple(f"sim{i:02d}" for i in range(args.markets))
    assignment = None
    if args.feedback == "per_market_scale":
        assignment = tuple(
            default_assignment(markets, feedback_scales)[m] for m in markets
        )
    cfg = SimConfig(
        n_markets=args.markets,
        n_days=args.days,
        b=args.b,
        c=args.c,
        k0=args.k0,
        delta_k=args.delta_k,
        feedback=args.feedback,
        active_scales=feedback_scales if args.feedback == "mean_field" else (2, 6, 10),
        assignment=assignment,
        feedback_cap=args.feedback_cap,
        n_blocks=args.blocks,
        block_rho=args.block_rho,
        seed=args.seed,
    )
    panel = simulate_panel(cfg)
    series = []
    for j, m in enumerate(panel.markets):
        prices = 100.0 * np.exp(np.cumsum(panel.raw[:, j]))
        series.append(PriceSeries(m, panel.dates, prices))
    write_prices(series, args.out)
    if args.assignment_out and assignment is not None:
        _atomic_write(
            args.assignment_out,
            "market,scale_k\n"
            + "\n".join(f"{m},{k}" for m, k in zip(markets, assignment))
            + "\n",
        )
    _write_manifest(
        args,
        _config_of(
            args,
            [
                "markets", "days", "b", "c", "k0", "delta_k", "feedback",
                "feedback_scales", "feedback_cap", "blocks", "block_rho",
            ],
        ),
        [],
    )


def _cmd_sweep(args) -> None:
    panel = _load_panel(args)
    caps = [float(x) for x in args.caps.split(",")]
    fractions = [float(x) for x in args.premium_fractions.split(",")]
    rows = sensitivity_sweep(
        panel,
        caps,
        fractions,
        burn_in=args.burn_in,
        n_samples=args.samples,
        n_folds=args.folds,
        seed=args.seed,
    )
    cols = list(rows[0].keys())
    lines = [",".join(cols)]
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in cols))
    _emit(
        args,
        "\n".join(lines) + "\n",
        _config_of(
            args,
            ["prices", "mask", "caps", "premium_fractions", "samples", "folds", "burn_in", "seed"],
        ),
        [args.prices],
    )


def _cmd_report(args) -> None:
    panel = _load_panel(args)
    db = build_signal_database(panel, default_specs(cap=args.cap), burn_in=args.burn_in)
    spec = _model_spec(args)
    doc = {
        "model": args.model,
        "fit": _fit_document(db, spec),
        "bootstrap": bootstrap(
            db, spec, n_samples=args.samples, seed=derive_seed(args.seed, "bootstrap")
        ).to_dict(),
        "cross_validation": cross_validate(
            panel,
            spec,
            n_folds=args.folds,
            trend_specs=default_specs(cap=args.cap),
            burn_in=args.burn_in,
        ).to_dict(),
    }
    _emit(
        args,
        json.dumps(doc, indent=2, sort_keys=True) + "\n",
        _config_of(
            args,
            ["prices", "mask", "model", "scales", "cap", "burn_in", "samples", "folds", "seed"],
        ),
        [args.prices],
    )


# ---------------------------------------------------------------------------
# argument surface
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="trendrev",
        description="Trend-strength signals, reversion fits, and inference.",
    )
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name: str, fn, **help_kw):
        sp = sub.add_parser(name, **help_kw)
        sp.set_defaults(fn=fn)
        return sp

    sp = add("ingest", _cmd_ingest, help="normalize a price CSV into returns")
    sp.add_argument("--prices", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--mask", help="estimation window as START:END ISO dates")

    sp = add("signals", _cmd_signals, help="build the signal database")
    sp.add_argument("--prices", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--mask")
    sp.add_argument("--cap", type=float, default=2.5)
    sp.add_argument("--burn-in", type=int, default=522, dest="burn_in")

    sp = add("fit", _cmd_fit, help="point fit of one model")
    sp.add_argument("--db", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--model", choices=sorted(_MODEL_FLAGS), default="scale")
    sp.add_argument("--scales", help="scale subset, e.g. 4,5,6,7 or 1-10")
    sp.add_argument(
        "--market-scales",
        dest="market_scales",
        help="market,scale_k CSV restricting each market to one horizon",
    )

    sp = add("bootstrap", _cmd_bootstrap, help="day-block bootstrap errors")
    sp.add_argument("--db", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--model", choices=sorted(_MODEL_FLAGS), default="scale")
    sp.add_argument("--scales")
    sp.add_argument("--market-scales", dest="market_scales")
    sp.add_argument("--samples", type=int, default=5000)
    sp.add_argument("--seed", type=int, default=0)

    sp = add("cv", _cmd_cv, help="contiguous-fold cross-validation")
    sp.add_argument("--prices", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--mask")
    sp.add_argument("--model", choices=sorted(_MODEL_FLAGS), default="scale")
    sp.add_argument("--scales")
    sp.add_argument("--folds", type=int, default=15)
    sp.add_argument("--cap", type=float, default=2.5)
    sp.add_argument("--burn-in", type=int, default=522, dest="burn_in")

    sp = add("bins", _cmd_bins, help="trend-strength bin curve")
    sp.add_argument("--db", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--scales")
    sp.add_argument("--n-bins", type=int, default=15, dest="n_bins")

    sp = add("heatmap", _cmd_heatmap, help="bin-by-horizon smoothed heatmap")
    sp.add_argument("--db", required=True)
    sp.add_argument("--out", required=True)

    sp = add("simulate", _cmd_simulate, help="generate a synthetic price panel")
    sp.add_argument("--out", required=True)
    sp.add_argument("--markets", type=int, default=24)
    sp.add_argument("--days", type=int, default=7827)
    sp.add_argument("--b", type=float, default=0.02)
    sp.add_argument("--c", type=float, default=-0.0063)
    sp.add_argument("--k0", type=float, default=5.78)
    sp.add_argument("--delta-k", type=float, default=4.87, dest="delta_k")
    sp.add_argument(
        "--feedback",
        choices=["mean_field", "per_market_scale", "none"],
        default="per_market_scale",
    )
    sp.add_argument("--feedback-scales", dest="feedback_scales")
    sp.add_argument("--feedback-cap", type=float, default=2.5, dest="feedback_cap")
    sp.add_argument("--blocks", type=int, default=8)
    sp.add_argument("--block-rho", type=float, default=1.0, dest="block_rho")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--assignment-out", dest="assignment_out")

    sp = add("sweep", _cmd_sweep, help="cap x premium-fraction sensitivity grid")
    sp.add_argument("--prices", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--mask")
    sp.add_argument("--caps", default="2.0,2.5,3.0")
    sp.add_argument("--premium-fractions", default="0.0", dest="premium_fractions")
    sp.add_argument("--samples", type=int, default=5000)
    sp.add_argument("--folds", type=int, default=15)
    sp.add_argument("--burn-in", type=int, default=522, dest="burn_in")
    sp.add_argument("--seed", type=int, default=0)

    sp = add("report", _cmd_report, help="fit + bootstrap + cv in one document")
    sp.add_argument("--prices", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--mask")
    sp.add_argument("--model", choices=sorted(_MODEL_FLAGS), default="scale")
    sp.add_argument("--scales")
    sp.add_argument("--cap", type=float, default=2.5)
    sp.add_argument("--burn-in", type=int, default=522, dest="burn_in")
    sp.add_argument("--samples", type=int, default=5000)
    sp.add_argument("--folds", type=int, default=15)
    sp.add_argument("--seed", type=int, default=0)

    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        args.fn(args)
    except (ValueError, OSError, KeyError) as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
