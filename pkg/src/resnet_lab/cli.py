"""Command-line entry point.

Each subcommand reads one JSON config (``--config``), applies top-level
overrides (``--seed``, ``--out``, ``--set key=value``), validates everything
before computing, writes its artifacts under ``--out`` and prints a short
tab-separated report.  Exit codes: 0 pass, 1 verdict fail, 2 usage or config
error, 3 numeric abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import continuum, discrete, experiments, formats, measure
from .activation import ActivationFamily
from .dataset import MeasuringFunction, generate, load_csv, save_csv
from .errors import ContractViolation, NumericOverflow, ParseError
from .flow import FlowConfig, FlowTrace, energy_audit, flow_continuum, flow_discrete
from .plotting import trace_figure

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

DEPTH_WINDOW = (-1.5, -0.7, 0.9)
WIDTH_WINDOW = (-0.7, -0.3, 0.7)

log = logging.getLogger("resnet_lab")


class ConfigError(Exception):
    """Bad or incomplete run configuration; maps to exit code 2."""


COMMON_KEYS = {"out", "seed"}
SECTION_KEYS = {
    "dataset": {"path", "radius"},
    "family": {"kind", "d", "tau"},
    "g": {"w", "c"},
    "flow": {"h_s", "steps", "integrator", "snapshot_every", "audit_slack", "s0"},
}
MODEL_KEYS = {
    "train-discrete": {"L", "M", "init_scale", "truncate", "init_path"},
    "train-continuum": {"N_t", "M", "init_scale", "truncate", "init_path"},
}
EXPERIMENT_CLASSES = {
    "sweep-depth": experiments.DepthSweepConfig,
    "sweep-width": experiments.WidthSweepConfig,
    "zero-loss": experiments.ZeroLossConfig,
    "gradcheck": experiments.GradcheckConfig,
    "stability": experiments.StabilityConfig,
}
GENERATE_KEYS = {"n", "d", "radius", "label_rule", "constant", "data_seed"}


# ---------------------------------------------------------------- config plumbing

def _parse_value(raw):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def load_config(args):
    """Config dict from ``--config`` plus top-level overrides; the file itself is never modified."""
    config = {}
    if args.config:
        try:
            config = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {args.config} is not valid JSON: {exc}") from None
        if not isinstance(config, dict):
            raise ConfigError("config root must be a JSON object")
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        if "." in key:
            raise ConfigError(f"--set only overrides top-level keys, got {key!r}")
        config[key] = _parse_value(value)
    if args.seed is not None:
        config["seed"] = args.seed
    if args.out is not None:
        config["out"] = args.out
    return config


def _check_keys(mapping, allowed, where):
    if not isinstance(mapping, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = sorted(set(mapping) - set(allowed))
    if unknown:
        name = f"{where}.{unknown[0]}" if where else unknown[0]
        raise ConfigError(f"unknown key {name}")


def _out_dir(config):
    out = Path(config.get("out", "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seed(config):
    seed = config.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError(f"seed must be an integer, got {seed!r}")
    return seed


def _report(rows):
    for key, value in rows:
        print(f"{key}\t{value}")


# ---------------------------------------------------------------- training

def _training_setup(config, command):
    _check_keys(config, COMMON_KEYS | set(SECTION_KEYS) | {"model"}, "")
    for section, keys in SECTION_KEYS.items():
        _check_keys(config.get(section, {}), keys, section)
    _check_keys(config.get("model", {}), MODEL_KEYS[command], "model")
    ds = config.get("dataset", {})
    if "path" not in ds:
        raise ConfigError("missing key dataset.path")
    data = load_csv(ds["path"], radius=ds.get("radius"))
    fam_cfg = {"d": data.d, **config.get("family", {})}
    family = ActivationFamily(kind=fam_cfg.get("kind", "difference"), d=int(fam_cfg["d"]),
                              tau=float(fam_cfg.get("tau", 1.0)))
    if family.d != data.d:
        raise ConfigError(f"family.d={family.d} does not match the dataset dimension {data.d}")
    g_cfg = config.get("g", {})
    g = MeasuringFunction(np.asarray(g_cfg.get("w", np.ones(data.d)), dtype=float), g_cfg.get("c", 0.0))
    cfg = FlowConfig(**config.get("flow", {}), seed=_seed(config))
    return data, family, g, cfg


def _initial(config, family, command):
    model = config.get("model", {})
    rng = np.random.default_rng(_seed(config))
    scale, truncate = model.get("init_scale", 1.0), model.get("truncate", 3.0)
    if command == "train-discrete":
        if "init_path" in model:
            grid, meta = formats.load_grid(model["init_path"])
            if grid.k != family.k:
                raise ConfigError(f"model.init_path has k={grid.k}, family needs k={family.k}")
            return grid
        L, M = int(model.get("L", 8)), int(model.get("M", 4))
        particles = experiments.initial_particles(rng, M, family.k, scale, truncate)
        return discrete.ParamGrid(np.repeat(particles[None], L, axis=0))
    if "init_path" in model:
        ens, meta = formats.load_ensemble(model["init_path"])
        if ens.k != family.k:
            raise ConfigError(f"model.init_path has k={ens.k}, family needs k={family.k}")
        return ens
    N_t, M = int(model.get("N_t", 32)), int(model.get("M", 8))
    particles = experiments.initial_particles(rng, M, family.k, scale, truncate)
    return continuum.ParamPathEnsemble.constant(particles, N_t)


def cmd_train(args, command):
    config = load_config(args)
    data, family, g, cfg = _training_setup(config, command)
    init = _initial(config, family, command)
    out = _out_dir(config)
    if command == "train-discrete":
        final, trace = flow_discrete(init, family, g, data, cfg)
        formats.save_grid(final, family, out / "grid.csv")
    else:
        final, trace = flow_continuum(init, family, g, data, None, cfg)
        formats.save_ensemble(final, family, out / "ensemble.csv")
    trace.to_csv(out / "trace.csv")
    trace_figure(trace, out / "trace.png")
    formats.write_json(formats.manifest(config, _seed(config), data, command=command,
                                        trace_checksum=trace.checksum(),
                                        audit_violations=len(trace.violations)),
                       out / "manifest.json")
    _report([("final_E", trace.E[-1]), ("final_E_s", trace.E_s[-1]),
             ("audit_violations", len(trace.violations)), ("trace_checksum", trace.checksum())])
    return EXIT_OK


# ---------------------------------------------------------------- experiments

def _experiment_config(config, command):
    _check_keys(config, COMMON_KEYS | {"experiment"}, "")
    cls = EXPERIMENT_CLASSES[command]
    exp = dict(config.get("experiment", {}))
    if "seed" in config:
        names = {f.name for f in cls.__dataclass_fields__.values()}
        exp["seed" if "seed" in names else "init_seed"] = _seed(config)
    try:
        return cls.from_dict(exp, "experiment")
    except ContractViolation as exc:
        raise ConfigError(str(exc)) from None
    except TypeError as exc:
        raise ConfigError(f"experiment: {exc}") from None


def _manifest_config(config, exp):
    out = dict(config)
    out["experiment"] = {k: (v.to_dict() if hasattr(v, "to_dict") else v)
                         for k, v in exp.__dict__.items()}
    return out


def cmd_sweep(args, command):
    config = load_config(args)
    exp = _experiment_config(config, command)
    n_axis = len(exp.Ls) if command == "sweep-depth" else len(exp.Ms)
    if n_axis < 3:
        raise ConfigError(f"{command} needs at least 3 axis values for a slope fit, got {n_axis}")
    out = _out_dir(config)
    if command == "sweep-depth":
        result = experiments.depth_sweep(exp)
        lo, hi, r2_min = DEPTH_WINDOW
    else:
        result = experiments.width_sweep(exp)
        lo, hi, r2_min = WIDTH_WINDOW
    _, _, data = exp.task.build()
    experiments.write_sweep(result, out, _manifest_config(config, exp), _seed(config), data)
    passed = lo <= result.fitted_slope <= hi and result.r2 >= r2_min
    _report([("axis", result.axis), ("slope", result.fitted_slope),
             ("slope_ci", f"{result.slope_ci[0]:.6g},{result.slope_ci[1]:.6g}"),
             ("r2", result.r2), ("verdict", "pass" if passed else "fail")]
            + [("flag", f) for f in result.flags])
    return EXIT_OK if passed else EXIT_FAIL


def cmd_zero_loss(args):
    config = load_config(args)
    exp = _experiment_config(config, "zero-loss")
    out = _out_dir(config)
    result = experiments.zero_loss_run(exp)
    result.trace.to_csv(out / "trace.csv")
    formats.save_ensemble(result.ensemble, exp.task.family(), out / "ensemble.csv")
    formats.write_gnuplot(out / "support_spread.dat", ["t", "min_dist", "median_dist"],
                          np.column_stack([result.ensemble.grid.nodes, result.support_spread]),
                          comment="heuristic support-spread diagnostic")
    trace_figure(result.trace, out / "trace.png")
    _, _, data = exp.task.build()
    formats.write_json(formats.manifest(_manifest_config(config, exp), _seed(config), data,
                                        final_E=result.final_E, verdict=result.verdict,
                                        trace_checksum=result.trace.checksum(),
                                        audit_violations=len(result.audit_violations)),
                       out / "manifest.json")
    _report([("final_E", result.final_E), ("threshold", result.threshold),
             ("monotone_after_burn_in", result.monotone_after_burn_in),
             ("audit_violations", len(result.audit_violations)),
             ("verdict", "pass" if result.verdict else "fail")])
    return EXIT_OK if result.verdict else EXIT_FAIL


def cmd_gradcheck(args):
    config = load_config(args)
    exp = _experiment_config(config, "gradcheck")
    out = _out_dir(config)
    report = experiments.gradcheck_suite(exp)
    rows = [("discrete", i, e) for i, e in enumerate(report.discrete_errors)]
    rows += [("continuum", i, e) for i, e in enumerate(report.continuum_errors)]
    formats.write_csv(out / "gradcheck.csv", ["kind", "case", "rel_error"], rows)
    formats.write_json(formats.manifest(_manifest_config(config, exp), _seed(config),
                                        max_discrete=report.max_discrete, max_continuum=report.max_continuum,
                                        passed=report.passed),
                       out / "manifest.json")
    _report([("max_discrete", report.max_discrete), ("tol_discrete", report.tol_discrete),
             ("max_continuum", report.max_continuum), ("tol_continuum", report.tol_continuum),
             ("verdict", "pass" if report.passed else "fail")])
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_stability(args):
    config = load_config(args)
    exp = _experiment_config(config, "stability")
    out = _out_dir(config)
    rep = experiments.stability_probe(exp)
    rows = list(zip(rep.deltas, rep.ratio_Z, rep.ratio_p))
    formats.write_csv(out / "stability.csv", ["delta", "ratio_Z", "ratio_p"], rows)
    formats.write_gnuplot(out / "stability.dat", ["delta", "ratio_Z", "ratio_p"], rows)
    formats.write_json(formats.manifest(_manifest_config(config, exp), _seed(config), passed=rep.passed),
                       out / "manifest.json")
    _report([(f"delta={d:g}", f"{rz:.6g}\t{rp:.6g}") for d, rz, rp in rows]
            + [("verdict", "pass" if rep.passed else "fail")])
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_energy_audit(args):
    config = load_config(args)
    _check_keys(config, COMMON_KEYS | {"trace", "slack"}, "")
    path = args.trace or config.get("trace")
    if path is None:
        raise ConfigError("missing key trace")
    slack = float(args.slack if args.slack is not None else config.get("slack", 1e-10))
    report = energy_audit(FlowTrace.from_csv(path), slack)
    for k, s0, s1, jump in report.violations:
        print(f"violation\t{k}\t{s0!r}\t{s1!r}\t{jump!r}")
    _report([("pairs", report.n_pairs), ("violations", len(report.violations)),
             ("verdict", "pass" if report.passed else "fail")])
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_w2(args):
    a, _ = formats.load_ensemble(args.file_a)
    b, _ = formats.load_ensemble(args.file_b)
    try:
        print(repr(measure.d1(a, b)))
    except ContractViolation as exc:
        raise ConfigError(str(exc)) from None
    return EXIT_OK


def cmd_generate(args):
    config = load_config(args)
    _check_keys(config, COMMON_KEYS | {"dataset"}, "")
    ds = dict(config.get("dataset", {}))
    _check_keys(ds, GENERATE_KEYS | {"path"}, "dataset")
    path = ds.pop("path", None) or str(_out_dir(config) / "data.csv")
    d = int(ds.get("d", 2))
    data = generate(int(ds.get("data_seed", _seed(config))), int(ds.get("n", 4)), d,
                    float(ds.get("radius", 2.0)), ds.get("label_rule", "trig"),
                    constant=float(ds.get("constant", 0.0)))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    save_csv(data, path)
    _report([("path", path), ("n", data.n), ("d", data.d), ("checksum", data.checksum())])
    return EXIT_OK


# ---------------------------------------------------------------- entry

def build_parser():
    parser = argparse.ArgumentParser(prog="resnet-lab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", help="JSON run config")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a top-level key")
        return p

    for name in ("train-discrete", "train-continuum", "sweep-depth", "sweep-width",
                 "zero-loss", "gradcheck", "stability", "generate-data"):
        with_config(sub.add_parser(name))
    audit = with_config(sub.add_parser("energy-audit"))
    audit.add_argument("trace", nargs="?", help="FlowTrace CSV")
    audit.add_argument("--slack", type=float)
    w2 = sub.add_parser("w2", help="print d1 between two ensemble CSVs")
    w2.add_argument("file_a")
    w2.add_argument("file_b")
    return parser


def dispatch(args):
    cmd = args.command
    if cmd in ("train-discrete", "train-continuum"):
        return cmd_train(args, cmd)
    if cmd in ("sweep-depth", "sweep-width"):
        return cmd_sweep(args, cmd)
    return {
        "zero-loss": cmd_zero_loss,
        "gradcheck": cmd_gradcheck,
        "stability": cmd_stability,
        "energy-audit": cmd_energy_audit,
        "w2": cmd_w2,
        "generate-data": cmd_generate,
    }[cmd](args)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return dispatch(args)
    except (ConfigError, ContractViolation, ParseError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TypeError as exc:
        print(f"error: bad config value: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericOverflow as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
