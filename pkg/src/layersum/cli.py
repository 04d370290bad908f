"""Command-line front end: configuration, runs, Table 02 rows, exports.

Exit codes: 0 success, 2 configuration error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import secrets
import sys
import time
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

from . import __version__
from .analysis import summarize
from .exports import (RawWriter, write_boxplot, write_histograms, write_stddev_percent)
from .layers import (PROFILES, ConfigError, Layer, RunConfig, default_workers, generate_run,
                     generate_set, layer1_summands)
from .oracles import mixture_moments, sum_moments

log = logging.getLogger("layersum")

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3

# config-file key / flag dest -> RunConfig field
_KEYS = {
    "layer": "layer",
    "k": "k",
    "max_number": "max_number",
    "numbers": "total_numbers",
    "sets": "total_sets",
    "additions": "total_additions",
    "seed": "seed",
    "workers": "workers",
    "out": "out",
    "format": "format",
    "export": "export",
    "bins": "bins",
    "integer_bins": "integer_bins",
    "hist_sets": "hist_sets",
    "boxplot_sets": "boxplot_sets",
    "dump_raw": "dump_raw",
    "table02": "table02",
}
# fields whose values determine generated numbers; echoed in reports
ECHO_FIELDS = ("layer", "k", "max_number", "total_numbers", "total_sets", "total_additions", "seed")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError("arguments", message)


def _int_list(text):
    try:
        return tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="layersum", description="Layered pseudo-random summation simulator.",
                argument_default=argparse.SUPPRESS)
    p.add_argument("--config", help="JSON file of option values; flags override it")
    p.add_argument("--profile", choices=sorted(PROFILES), help="parameter preset")
    p.add_argument("--layer", choices=[l.value for l in Layer])
    p.add_argument("--k", type=int, help="summand count for --layer fixed")
    p.add_argument("--max-number", dest="max_number", type=int)
    p.add_argument("--numbers", type=int, help="values per set")
    p.add_argument("--sets", type=int, help="number of sets")
    p.add_argument("--additions", type=int, help="maximum summand count")
    p.add_argument("--seed", help="64-bit seed, or 'random' to draw and log one")
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--format", choices=["json", "csv"])
    p.add_argument("--export", nargs="+", choices=["histogram", "boxplot", "stddev_percent"])
    p.add_argument("--bins", type=int)
    p.add_argument("--integer-bins", dest="integer_bins", action="store_true",
                   help="align histogram bins to integers")
    p.add_argument("--hist-sets", dest="hist_sets", type=_int_list,
                   help="comma-separated set indices to histogram (default: first,last)")
    p.add_argument("--boxplot-sets", dest="boxplot_sets", choices=["twelve", "all"])
    p.add_argument("--dump-raw", dest="dump_raw", choices=["bin", "csv"])
    p.add_argument("--table02", action="store_true", help="emit the six Table 02 rows")
    return p


def _parse_seed(value) -> int:
    if isinstance(value, str) and value.strip().lower() == "random":
        seed = secrets.randbits(64)
        log.warning("using random seed %d", seed)
        return seed
    try:
        seed = int(value)
    except (TypeError, ValueError):
        raise ConfigError("seed", f"not an integer: {value!r}") from None
    return seed


def _load_config_file(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"{path}: invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be an object")
    out = {}
    for key, value in data.items():
        norm = key.replace("-", "_")
        if norm not in _KEYS and norm != "profile":
            raise ConfigError(key, "unknown configuration key")
        out[norm] = value
    return out


def parse_config(argv=None, config_file: Optional[str] = None) -> RunConfig:
    """Resolve defaults < profile < config file < flags into a RunConfig."""
    args = vars(build_parser().parse_args(argv))
    config_file = args.pop("config", config_file)
    values = _load_config_file(config_file) if config_file else {}
    values.update(args)

    profile = values.pop("profile", None)
    merged = {}
    if profile is not None:
        if profile not in PROFILES:
            raise ConfigError("profile", f"unknown profile {profile!r}")
        merged.update(PROFILES[profile])
    for key, value in values.items():
        merged[_KEYS[key]] = value

    if "seed" not in merged:
        raise ConfigError("seed", "required (an integer, or 'random')")
    merged["seed"] = _parse_seed(merged["seed"])
    if "layer" not in merged:
        if not merged.get("table02"):
            raise ConfigError("layer", "required (1, 2, 3 or fixed)")
        merged["layer"] = Layer.ONE
    if "workers" not in merged:
        merged["workers"] = default_workers()
    if isinstance(merged.get("hist_sets"), str):
        merged["hist_sets"] = _int_list(merged["hist_sets"])
    if isinstance(merged.get("export"), str):
        merged["export"] = (merged["export"],)
    return RunConfig(**merged)


def render_config(cfg: RunConfig) -> list:
    """Argument vector that parses back to ``cfg``."""
    argv = ["--layer", cfg.layer.value, "--max-number", str(cfg.max_number),
            "--numbers", str(cfg.total_numbers), "--sets", str(cfg.total_sets),
            "--additions", str(cfg.total_additions), "--seed", str(cfg.seed),
            "--workers", str(cfg.workers), "--format", cfg.format, "--bins", str(cfg.bins),
            "--boxplot-sets", cfg.boxplot_sets]
    if cfg.k is not None:
        argv += ["--k", str(cfg.k)]
    if cfg.out is not None:
        argv += ["--out", cfg.out]
    if cfg.export:
        argv += ["--export", *cfg.export]
    if cfg.integer_bins:
        argv.append("--integer-bins")
    if cfg.hist_sets is not None:
        argv += ["--hist-sets", ",".join(map(str, cfg.hist_sets))]
    if cfg.dump_raw is not None:
        argv += ["--dump-raw", cfg.dump_raw]
    if cfg.table02:
        argv.append("--table02")
    return argv


def config_echo(cfg: RunConfig) -> dict:
    echo = {name: getattr(cfg, name) for name in ECHO_FIELDS}
    echo["layer"] = cfg.layer.value
    return echo


def config_from_echo(echo: dict, **options) -> RunConfig:
    return RunConfig(**echo, **options)


# --------------------------------------------------------------------------


@dataclass
class RunReport:
    config: RunConfig
    summaries: list
    pooled: object
    draws: int
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        pooled = self.pooled
        stats = {"count": pooled.count, "mean": pooled.mean, "m2": pooled.m2,
                 "m3": pooled.m3, "m4": pooled.m4}
        for name, attr in (("std_dev", "std"), ("skewness", "skewness"),
                           ("excess_kurtosis", "excess_kurtosis")):
            try:
                stats[name] = getattr(pooled, attr)
            except ValueError:
                stats[name] = None
        return {
            "tool": "layersum",
            "version": __version__,
            "seed": self.config.seed,
            "config": config_echo(self.config),
            "conventions": {
                "std_dev": "sample, n-1 denominator",
                "skewness": "population g1 = m3 / m2^1.5",
                "excess_kurtosis": "population g2 = m4 / m2^2 - 3",
                "quantiles": "type 7 linear interpolation",
                "ks_p": "asymptotic Kolmogorov; anti-conservative when the normal is fitted to the same sample",
                "pct_basis": "realized summand count * max_number; additions * max_number for layer 3",
            },
            "draws": self.draws,
            "pooled": stats,
            "sets": [s.to_dict() for s in self.summaries],
        }

    def to_json(self) -> str:
        return json.dumps(_clean(self.to_dict()), indent=1, allow_nan=False) + "\n"


def _clean(obj):
    """Replace non-finite floats with None so the JSON stays strict."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _out_dir(cfg: RunConfig) -> Path:
    if not cfg.out:
        raise ConfigError("out", "an output directory is required for exports and raw dumps")
    path = Path(cfg.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def run(cfg: RunConfig) -> RunReport:
    """Generate, summarize and write every output requested by ``cfg``."""
    needs_files = bool(cfg.export or cfg.dump_raw)
    out = _out_dir(cfg) if (needs_files or cfg.out) else None

    hist_sets = set()
    if "histogram" in cfg.export:
        hist_sets = set(cfg.hist_sets or (1, cfg.total_sets))
    kept = {}
    writer = None
    if cfg.dump_raw:
        name = "raw.bin" if cfg.dump_raw == "bin" else "raw.csv"
        writer = RawWriter(out / name, cfg.dump_raw)

    def sink(result, summary):
        if result.set_index in hist_sets:
            kept[result.set_index] = result.values
        if writer is not None:
            writer.write(result)

    start = time.perf_counter()
    try:
        result = generate_run(cfg, sink)
    finally:
        if writer is not None:
            writer.close()
    report = RunReport(cfg, result.summaries, result.pooled, result.draws,
                       time.perf_counter() - start)

    if out is not None:
        (out / "report.json").write_text(report.to_json())
        (out / "timing.json").write_text(json.dumps(
            {"wall_time_s": report.wall_time, "workers": cfg.workers}) + "\n")
        if cfg.format == "csv":
            write_summaries_csv(report.summaries, out / "summaries.csv")
        if "stddev_percent" in cfg.export:
            write_stddev_percent(report.summaries, out / "stddev_percent.csv")
        if "boxplot" in cfg.export:
            write_boxplot(report.summaries, out / "boxplot.csv", cfg.boxplot_sets)
        if "histogram" in cfg.export:
            write_histograms(kept, out / "histogram.csv", cfg.bins, cfg.integer_bins)
    return report


SUMMARY_COLUMNS = ("set_index", "realized_k", "count", "mean", "median", "std_dev", "skewness",
                   "excess_kurtosis", "min", "q1", "q3", "max", "outlier_count", "pct_mean",
                   "pct_median", "pct_std", "jb_stat", "jb_p", "sw_W", "sw_p", "ks_D", "ks_p")


def write_summaries_csv(summaries, path) -> Path:
    lines = [",".join(SUMMARY_COLUMNS)]
    for s in summaries:
        d = s.to_dict()
        d.update({k: v for k, v in d.pop("normality").items() if k in SUMMARY_COLUMNS})
        lines.append(",".join("" if d[c] is None else repr(d[c]) for c in SUMMARY_COLUMNS))
    Path(path).write_text("\n".join(lines) + "\n")
    return Path(path)


# --------------------------------------------------------------------------
# Table 02

TABLE02_COLUMNS = ("layer", "round", "set_index", "summands", "avg", "pct_avg", "median",
                   "pct_median", "std", "pct_std", "oracle_mean", "oracle_std", "mean_band",
                   "std_band")


def _band_halfwidths(moments, n):
    # 5 standard errors of the sample mean and of the sample std
    # (delta method: SE(s) ~ sigma * sqrt((kurtosis - 1) / (4 n)))
    sigma = moments.std
    se_std = sigma * math.sqrt(max(moments.excess_kurtosis + 2.0, 0.0) / (4.0 * n))
    return 5.0 * sigma / math.sqrt(n), 5.0 * se_std


def reproduce_table02(cfg: RunConfig) -> list:
    """First- and last-round rows for layers 1-3 with analytic reference columns.

    Only sets 1 and S are generated for each layer; every set has its own
    stream, so they match the corresponding sets of a full run.
    """
    rows = []
    for layer in (Layer.ONE, Layer.TWO, Layer.THREE):
        lcfg = RunConfig(**{**{f.name: getattr(cfg, f.name) for f in fields(cfg)},
                            "layer": layer, "k": None, "table02": False})
        for label, set_index in (("first", 1), ("last", lcfg.total_sets)):
            result = generate_set(lcfg, set_index)
            s = summarize(result, lcfg)
            if layer is Layer.THREE:
                oracle = mixture_moments(lcfg.total_additions, lcfg.max_number)
                summands = None
            else:
                k = layer1_summands(set_index, lcfg) if layer is Layer.ONE else result.realized_k
                oracle = sum_moments(k, lcfg.max_number)
                summands = k
            mean_band, std_band = _band_halfwidths(oracle, lcfg.total_numbers)
            rows.append({
                "layer": int(layer.value), "round": label, "set_index": set_index,
                "summands": summands, "avg": s.mean, "pct_avg": s.pct_mean,
                "median": s.median, "pct_median": s.pct_median, "std": s.std_dev,
                "pct_std": s.pct_std, "oracle_mean": oracle.mean, "oracle_std": oracle.std,
                "mean_band": mean_band, "std_band": std_band,
            })
    return rows


def format_table02(rows) -> str:
    head = ("layer", "round", "summands", "avg", "%avg", "median", "%median", "std", "%std",
            "oracle mean", "oracle std")
    lines = ["  ".join(f"{h:>12}" for h in head)]
    for r in rows:
        cells = (r["layer"], r["round"], "mixed" if r["summands"] is None else r["summands"],
                 f"{r['avg']:.1f}", f"{r['pct_avg']:.1f}%", f"{r['median']:.1f}",
                 f"{r['pct_median']:.1f}%", f"{r['std']:.1f}", f"{r['pct_std']:.2f}%",
                 f"{r['oracle_mean']:.1f}", f"{r['oracle_std']:.1f}")
        lines.append("  ".join(f"{c!s:>12}" for c in cells))
    return "\n".join(lines)


def write_table02(rows, out: Path) -> None:
    (out / "table02.json").write_text(json.dumps(_clean(rows), indent=1) + "\n")
    lines = [",".join(TABLE02_COLUMNS)]
    for r in rows:
        lines.append(",".join("" if r[c] is None else str(r[c]) for c in TABLE02_COLUMNS))
    (out / "table02.csv").write_text("\n".join(lines) + "\n")


# --------------------------------------------------------------------------


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")
    try:
        cfg = parse_config(argv)
        if cfg.table02:
            rows = reproduce_table02(cfg)
            print(format_table02(rows))
            if cfg.out:
                write_table02(rows, _out_dir(cfg))
            return EXIT_OK
        report = run(cfg)
        if not cfg.out:
            sys.stdout.write(report.to_json())
        else:
            log.info("wrote %s (%d sets, %d draws, %.2fs)", cfg.out, len(report.summaries),
                     report.draws, report.wall_time)
    except ConfigError as exc:
        print(f"layersum: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"layersum: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK
