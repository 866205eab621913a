"""Command-line pipeline: build the vent field, run scenarios, fit, demo.

Config files are plain ``key = value`` lines with ``#`` comments::

    seed = 2013
    paths.dem = dem.asc
    paths.vents = vents_history.csv
    paths.output_dir = out
    field.classes = 4
    field.bandwidth = auto
    field.base_spacing = 800
    ca.adherence = 0.8
    scenario.next.poisson_mean = 0
    scenario.next.repeats = 1000
    scenario.next.time_years = 7.615

Relative paths are resolved against the config file's directory.
"""
from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import synthetic
from .event_model import EventTable, RealizationMode, default_event_table, load_event_table
from .hazard import (HazardResult, ScenarioConfig, eval_cubic, exhaustive_hazard,
                     fit_cubic, run_scenario)
from .lava_ca import CaParams
from .raster import GridParseError, load_grid, save_grid
from .render import (ABSOLUTE_PALETTE, DEFAULT_BREAKS, LOG_PALETTE, Palette,
                     render_absolute, render_log_relative, write_ppm)
from .vent_field import (AUTO, DEFAULT_CLASSES, classify_density, estimate_pdf,
                         generate_vent_grid, read_vent_history, read_vent_set)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    dem: Path
    vents: Path
    output_dir: Path
    event_table: Path | None = None
    seed: int = 0
    n_classes: int = DEFAULT_CLASSES
    bandwidth: object = AUTO
    base_spacing: float | None = None
    ca: CaParams = field(default_factory=CaParams)
    scenarios: dict = field(default_factory=dict)
    log_palette: Palette = LOG_PALETTE
    abs_palette: Palette = ABSOLUTE_PALETTE
    breaks: tuple = DEFAULT_BREAKS

    def load_table(self) -> EventTable:
        if self.event_table is None:
            return default_event_table()
        return load_event_table(self.event_table)


def parse_config_text(text: str, source: str = "<config>") -> dict[str, tuple[int, str]]:
    """Map each key to ``(line number, raw value)``."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} "
                              f"(first set on line {out[key][0]})")
        out[key] = (lineno, value)
    return out


def _color(token: str) -> tuple:
    token = token.lstrip("#")
    if len(token) != 6:
        raise ValueError(f"expected a hex color like ff0000, got {token!r}")
    return tuple(int(token[i:i + 2], 16) for i in (0, 2, 4))


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    entries = parse_config_text(path.read_text(encoding="utf-8"), str(path))
    root = path.resolve().parent
    used = set()

    def get(key, conv=str, default=None, required=False):
        if key not in entries:
            if required:
                raise ConfigError(f"{path}: missing required key {key!r}")
            return default
        used.add(key)
        lineno, raw = entries[key]
        try:
            return conv(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from None

    def as_path(raw):
        p = Path(raw)
        return p if p.is_absolute() else root / p

    def bandwidth(raw):
        return AUTO if raw.lower() == AUTO else float(raw)

    def u64(raw):
        v = int(raw, 0)
        if not 0 <= v < 2 ** 64:
            raise ValueError("seed must fit in 64 unsigned bits")
        return v

    cfg = RunConfig(
        dem=get("paths.dem", as_path, required=True),
        vents=get("paths.vents", as_path, required=True),
        output_dir=get("paths.output_dir", as_path, default=root / "out"),
        event_table=get("paths.event_table", as_path),
        seed=get("seed", u64, default=0),
        n_classes=get("field.classes", int, default=DEFAULT_CLASSES),
        bandwidth=get("field.bandwidth", bandwidth, default=AUTO),
        base_spacing=get("field.base_spacing", float),
    )
    for p in (cfg.dem, cfg.vents, cfg.event_table):
        if p is not None and not p.is_file():
            raise ConfigError(f"{path}: file not found: {p}")

    ca_kwargs = {}
    for f in fields(CaParams):
        conv = int if f.name == "max_steps" else float
        v = get(f"ca.{f.name}", conv)
        if v is not None:
            ca_kwargs[f.name] = v
    try:
        cfg.ca = CaParams(**ca_kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None

    colors = get("render.log_colors", lambda s: tuple(_color(t) for t in s.split()))
    background = get("render.background", _color, default=LOG_PALETTE.background)
    abs_colors = get("render.abs_colors", lambda s: tuple(_color(t) for t in s.split()))
    breaks = get("render.breaks", lambda s: tuple(float(t) for t in s.split()))
    try:
        cfg.log_palette = Palette(colors or LOG_PALETTE.colors, background)
        cfg.abs_palette = Palette(abs_colors or ABSOLUTE_PALETTE.colors, background)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if breaks is not None:
        cfg.breaks = breaks

    labels = []
    for key in entries:
        if key.startswith("scenario."):
            parts = key.split(".")
            if len(parts) != 3:
                raise ConfigError(f"{path}:{entries[key][0]}: expected scenario.<label>.<field>")
            if parts[1] not in labels:
                labels.append(parts[1])
    for label in labels:
        pre = f"scenario.{label}."
        try:
            cfg.scenarios[label] = ScenarioConfig(
                label=label,
                poisson_mean=get(pre + "poisson_mean", float, required=True),
                repeats=get(pre + "repeats", int, required=True),
                seed=cfg.seed,
                realization_mode=get(pre + "realization", RealizationMode.parse,
                                     default=RealizationMode.MIDPOINT),
                time_years=get(pre + "time_years", float),
            )
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from None

    unknown = sorted(set(entries) - used)
    if unknown:
        key = unknown[0]
        raise ConfigError(f"{path}:{entries[key][0]}: unknown key {key!r}")
    return cfg


def _write(path: Path, data: bytes) -> None:
    path.write_bytes(data)


def _metadata_text(meta: dict) -> bytes:
    return "".join(f"{k}={v}\n" for k, v in meta.items()).encode("ascii")


def read_metadata(path) -> dict:
    meta = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        k, v = line.split("=", 1)
        meta[k.strip()] = v.strip()
    return meta


def _stage1(cfg: RunConfig):
    out = cfg.output_dir
    vents_csv = out / "vents.csv"
    if not vents_csv.is_file():
        raise ConfigError(f"{vents_csv} not found; run build-field first")
    dem = load_grid(cfg.dem)
    vs = read_vent_set(vents_csv, cfg.n_classes)
    for v in vs:
        if not (0 <= v.row < dem.nrows and 0 <= v.col < dem.ncols) or not dem.valid[v.row, v.col]:
            raise ConfigError(f"{vents_csv}: vent {v.id} is not on a valid DEM cell")
    return dem, vs


def _write_hazard(cfg: RunConfig, name: str, result: HazardResult, elapsed: float) -> None:
    out = cfg.output_dir
    save_grid(out / f"{name}_prob.asc", result.invasion_prob)
    save_grid(out / f"{name}_dz.asc", result.mean_delta_z)
    _write(out / f"{name}_meta.txt", _metadata_text(result.metadata()))
    if result.max_prob > 0:
        img = render_log_relative(result.invasion_prob, cfg.log_palette)
        _write(out / f"{name}_prob.ppm", write_ppm(img))
    img = render_absolute(result.mean_delta_z, cfg.breaks, cfg.abs_palette)
    _write(out / f"{name}_dz.ppm", write_ppm(img))
    # kept apart from the metadata so reruns stay byte-identical
    _write(out / f"{name}_timing.txt", f"runtime_s={elapsed:.3f}\n".encode("ascii"))


def cmd_build_field(cfg: RunConfig) -> None:
    dem = load_grid(cfg.dem)
    records = read_vent_history(cfg.vents)
    density = estimate_pdf(records, dem, cfg.bandwidth)
    cm = classify_density(density, cfg.n_classes)
    spacing = cfg.base_spacing if cfg.base_spacing is not None else 2 * dem.cellsize
    vs = generate_vent_grid(cm, spacing, dem)
    out = cfg.output_dir
    save_grid(out / "density.asc", density, precision=20)
    save_grid(out / "classes.asc", cm.labels, precision=0)
    _write(out / "vents.csv", vs.to_csv())
    counts = vs.class_counts(cfg.n_classes)
    print(f"{len(vs)} vents")
    for k, n in enumerate(counts):
        print(f"  class {k}: {n}")


def cmd_simulate(cfg: RunConfig, label: str, threads: int = 1) -> HazardResult:
    if label not in cfg.scenarios:
        known = ", ".join(cfg.scenarios) or "(none)"
        raise ConfigError(f"unknown scenario {label!r}; known scenarios: {known}")
    scenario = cfg.scenarios[label]
    dem, vs = _stage1(cfg)
    table = cfg.load_table()
    t0 = time.perf_counter()
    result = run_scenario(dem, vs, table, scenario, cfg.ca, cfg.n_classes, threads)
    elapsed = time.perf_counter() - t0
    _write_hazard(cfg, label, result, elapsed)
    print(f"{label}: {result.runs} runs, {result.activations_total} activations, "
          f"max_prob={result.max_prob:.6g} ({elapsed:.1f} s)")
    return result


def cmd_exhaustive(cfg: RunConfig) -> HazardResult:
    dem, vs = _stage1(cfg)
    table = cfg.load_table()
    t0 = time.perf_counter()
    result = exhaustive_hazard(dem, vs, table, cfg.ca, n_classes=cfg.n_classes)
    elapsed = time.perf_counter() - t0
    _write_hazard(cfg, "exhaustive", result, elapsed)
    print(f"exhaustive: {result.runs} flows, max_prob={result.max_prob:.6g} ({elapsed:.1f} s)")
    return result


def cmd_fit(cfg: RunConfig) -> np.ndarray:
    if len(cfg.scenarios) != 4:
        raise ConfigError(f"exactly 4 horizons required, config has {len(cfg.scenarios)}")
    times, probs = [], []
    for label in cfg.scenarios:
        path = cfg.output_dir / f"{label}_meta.txt"
        if not path.is_file():
            raise ConfigError(f"{path} not found; run 'simulate {label}' first")
        meta = read_metadata(path)
        if "time_years" not in meta:
            raise ConfigError(f"{path}: no time_years; set scenario.{label}.time_years")
        times.append(float(meta["time_years"]))
        probs.append(float(meta["max_prob"]))
    coeffs = fit_cubic(times, probs)
    for i, c in enumerate(coeffs):
        print(f"c{i} = {float(c)!r}")
    for label, t, p in zip(cfg.scenarios, times, probs):
        print(f"{label}: t={t:g} max_prob={p:.6g} residual={eval_cubic(coeffs, t) - p:.3e}")
    return coeffs


DEMO_CONFIG = """\
# synthetic volcano demo
seed = 2013
paths.dem = dem.asc
paths.vents = vents_history.csv
paths.output_dir = out

field.classes = 4
field.bandwidth = auto
field.base_spacing = 800

# thicker than the library default so flows stop on the cone's flanks
# instead of ponding at the grid edge
ca.adherence = 5.0
ca.relaxation = 0.5
ca.step_dt = 0.25
ca.halt_flux = 0.0001
ca.invasion_threshold = 0.01

# one activation per run; mean inter-arrival time 396/52 years
scenario.next.poisson_mean = 0
scenario.next.repeats = 1000
scenario.next.time_years = 7.615
scenario.y25.poisson_mean = 3
scenario.y25.repeats = 330
scenario.y25.time_years = 25
scenario.y50.poisson_mean = 7
scenario.y50.repeats = 142
scenario.y50.time_years = 50
scenario.y100.poisson_mean = 13
scenario.y100.repeats = 78
scenario.y100.time_years = 100
"""


def write_demo_inputs(out: Path) -> Path:
    """Write the synthetic DEM, vent history and config; return the config path."""
    out.mkdir(parents=True, exist_ok=True)
    dem = synthetic.cone_dem()
    save_grid(out / "dem.asc", dem, precision=3)
    _write(out / "vents_history.csv", synthetic.history_csv(synthetic.vent_history(dem)))
    cfg_path = out / "demo.cfg"
    cfg_path.write_text(DEMO_CONFIG, encoding="ascii")
    return cfg_path


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="config file")
    common.add_argument("--seed", type=lambda s: int(s, 0), help="override the config seed")
    common.add_argument("--threads", type=int, default=1,
                        help="parallel runs; results do not depend on it")
    common.add_argument("--out", type=Path, help="override paths.output_dir")

    parser = _Parser(prog="lavahazard", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("build-field", parents=[common], help="density, classes and vent grid")
    sim = sub.add_parser("simulate", parents=[common], help="Monte Carlo scenario")
    sim.add_argument("label")
    sub.add_parser("exhaustive", parents=[common], help="every vent x every event class")
    sub.add_parser("fit", parents=[common], help="cubic through the 4 horizons' max_prob")
    demo = sub.add_parser("demo", parents=[common], help="synthetic end-to-end pipeline")
    demo.add_argument("--setup-only", action="store_true",
                      help="write the demo inputs and config, run nothing")
    return parser


def _resolve(args) -> RunConfig:
    if args.config is None:
        raise ConfigError("--config is required")
    cfg = load_config(args.config)
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            raise ConfigError("--seed must fit in 64 unsigned bits")
        cfg.seed = args.seed
        cfg.scenarios = {k: ScenarioConfig(s.label, s.poisson_mean, s.repeats, args.seed,
                                           s.realization_mode, s.time_years)
                         for k, s in cfg.scenarios.items()}
    if args.out is not None:
        cfg.output_dir = args.out
    try:
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {cfg.output_dir}: {exc}") from None
    if not os.access(cfg.output_dir, os.W_OK):
        raise ConfigError(f"output directory {cfg.output_dir} is not writable")
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("lavahazard: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "demo":
            out = args.out or Path("demo")
            args.config = write_demo_inputs(out)
            args.out = None
            print(f"demo inputs written to {out}")
            if args.setup_only:
                return EXIT_OK
            cfg = _resolve(args)
            cmd_build_field(cfg)
            for label in cfg.scenarios:
                cmd_simulate(cfg, label, args.threads)
            cmd_fit(cfg)
            return EXIT_OK
        cfg = _resolve(args)
        if args.command == "build-field":
            cmd_build_field(cfg)
        elif args.command == "simulate":
            cmd_simulate(cfg, args.label, args.threads)
        elif args.command == "exhaustive":
            cmd_exhaustive(cfg)
        elif args.command == "fit":
            cmd_fit(cfg)
    except (ConfigError, GridParseError, FileNotFoundError) as exc:
        print(f"lavahazard: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, IndexError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"lavahazard: simulation error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
